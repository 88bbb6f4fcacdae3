use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use imageddi::data::{load_dataset, make_split, SplitManifest};
use imageddi::harness::explain::write_overlay;
use imageddi::harness::figures::{attention_svg, scatter_svg};
use imageddi::harness::{
    aggregate_runs, evaluate, explain_attention, explain_gradcam, infer, select_events, train, tsne_2d, Checkpoint,
    Manifest, RunConfig, TsneParams, Workspace,
};
use imageddi::imaging::{
    render_2d, render_3d_views, save_png, save_views, BallStickRenderer, RenderParams, ViewParams, ViewsSidecar,
};
use imageddi::predictor::MetricsReport;
use imageddi::tokenizer::build_vocabulary;
use imageddi::{Error, Result};

#[derive(Parser)]
#[command(name = "imageddi", version, about = "Drug-drug interaction event prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the motif vocabulary from the configured drugs.
    BuildVocab(Common),
    /// Render one 2D depiction per drug as PNG.
    Render2d(Common),
    /// Generate conformers and render ten-frame view stacks per drug.
    Render3d(Common),
    /// Write one split manifest per configured seed.
    Split(Common),
    /// Train one model per seed and evaluate it on the held-out buckets.
    Train {
        #[command(flatten)]
        common: Common,
        /// Use this split manifest for every seed instead of drawing splits.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a split bucket.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// train, valid, test, s1 or s2.
        #[arg(long, default_value = "test")]
        bucket: String,
        /// Vocabulary file expected to match the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Mean and sample standard deviation over metrics reports.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
    },
    /// Final-layer motif attention table and heatmap for one pair.
    ExplainAttention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        drug_x: String,
        #[arg(long)]
        drug_y: String,
    },
    /// Grad-CAM overlays on the first drug's 3D frames.
    ExplainGradcam {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        drug_x: String,
        #[arg(long)]
        drug_y: String,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        frames: Vec<usize>,
        /// Target event; the predicted one when omitted.
        #[arg(long)]
        class: Option<usize>,
    },
    /// Two-dimensional t-SNE of pair representations.
    Tsne {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value = "test")]
        bucket: String,
        /// Number of least frequent events to keep.
        #[arg(long, default_value_t = 20)]
        low: usize,
        /// Number of most frequent events to keep.
        #[arg(long, default_value_t = 5)]
        high: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            report_error("UsageError", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let json = serde_json::json!({ "error": kind, "message": message.trim() });
    eprintln!("{json}");
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.out_dir = common.out.clone();
    Ok(cfg)
}

fn start_manifest(command: &str, cfg: &RunConfig, common: &Common) -> Result<Manifest> {
    let mut m = Manifest::new(command, cfg.hash(), cfg.seeds.clone());
    m.add_input(&common.config)?;
    m.add_input(&cfg.drugs_path)?;
    m.add_input(&cfg.interactions_path)?;
    std::fs::create_dir_all(&common.out).map_err(|e| Error::Io {
        path: common.out.clone(),
        source: e,
    })?;
    Ok(m)
}

fn write_json<T: serde::Serialize>(m: &mut Manifest, out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = out.join(name);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(value)?).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    m.add_output(out, &path);
    Ok(path)
}

fn write_text(m: &mut Manifest, out: &Path, name: &str, text: &str) -> Result<()> {
    let path = out.join(name);
    std::fs::write(&path, text).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    m.add_output(out, &path);
    Ok(())
}

/// Workspace for a saved model: model settings from the checkpoint, data
/// locations from the given config.
fn checkpoint_workspace(common: &Common, dir: &Path) -> Result<(Checkpoint, Workspace, Manifest)> {
    let given = load_config(common)?;
    let (ckpt, vocab) = Checkpoint::load(dir)?;
    let cfg = RunConfig {
        drugs_path: given.drugs_path.clone(),
        interactions_path: given.interactions_path.clone(),
        image_dir: given.image_dir.clone(),
        out_dir: given.out_dir.clone(),
        batch_size: given.batch_size,
        pretrained_backbone: None,
        ..ckpt.meta.config.clone()
    };
    let dataset = load_dataset(&cfg.drugs_path, &cfg.interactions_path, Some(ckpt.meta.num_classes))?;
    let rebuilt = build_vocabulary(&dataset.drugs)?;
    ckpt.check_vocabulary(&rebuilt)?;
    let ws = Workspace::from_parts(&cfg, dataset, vocab, None)?;
    let mut m = start_manifest("checkpoint", &cfg, common)?;
    m.add_input(&dir.join(imageddi::harness::checkpoint::MODEL_FILE))?;
    Ok((ckpt, ws, m))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildVocab(common) => {
            let cfg = load_config(&common)?;
            let mut m = start_manifest("build-vocab", &cfg, &common)?;
            let ds = load_dataset(&cfg.drugs_path, &cfg.interactions_path, cfg.num_events)?;
            let vocab = build_vocabulary(&ds.drugs)?;
            let path = common.out.join("vocab.json");
            vocab.save(&path)?;
            m.add_output(&common.out, &path);
            log::info!("vocabulary of {} entries from {} drugs", vocab.size(), ds.drugs.len());
            m.write(&common.out)?;
        }
        Command::Render2d(common) => {
            let cfg = load_config(&common)?;
            let mut m = start_manifest("render-2d", &cfg, &common)?;
            let ds = load_dataset(&cfg.drugs_path, &cfg.interactions_path, cfg.num_events)?;
            let params = RenderParams::with_size(cfg.image_size);
            for d in &ds.drugs {
                let img = render_2d(&d.smiles, &params).map_err(|e| match e {
                    Error::InvalidSmiles { source, .. } => Error::InvalidSmiles {
                        drug: Some(d.drug_id.clone()),
                        source,
                    },
                    other => other,
                })?;
                let path = common.out.join(format!("{}.png", d.drug_id));
                save_png(&img, &path)?;
                m.add_output(&common.out, &path);
            }
            write_json(&mut m, &common.out, "render_params.json", &params)?;
            m.write(&common.out)?;
        }
        Command::Render3d(common) => {
            let cfg = load_config(&common)?;
            let mut m = start_manifest("render-3d", &cfg, &common)?;
            let ds = load_dataset(&cfg.drugs_path, &cfg.interactions_path, cfg.num_events)?;
            let params = ViewParams {
                out_size: cfg.image_size,
                ..ViewParams::default()
            };
            for d in &ds.drugs {
                let conf = imageddi::imaging::generate_conformer(&d.smiles)?;
                let views = render_3d_views(&conf, &d.smiles, &params, &BallStickRenderer::default())?;
                let path = common.out.join(format!("{}.npy", d.drug_id));
                let sidecar = ViewsSidecar {
                    smiles: d.smiles.clone(),
                    attempts: conf.attempts,
                    converged: conf.converged,
                    fallback_2d: conf.fallback_2d,
                    render_param_hash: params.hash(),
                };
                save_views(&path, &views, &sidecar)?;
                m.add_output(&common.out, &path);
            }
            m.write(&common.out)?;
        }
        Command::Split(common) => {
            let cfg = load_config(&common)?;
            let mut m = start_manifest("split", &cfg, &common)?;
            let ds = load_dataset(&cfg.drugs_path, &cfg.interactions_path, cfg.num_events)?;
            for &seed in &cfg.seeds {
                let split = make_split(&ds, cfg.split_mode, cfg.new_fraction, seed)?;
                write_json(&mut m, &common.out, &format!("split_seed{seed}.json"), &split)?;
            }
            m.write(&common.out)?;
        }
        Command::Train { common, split } => {
            let cfg = load_config(&common)?;
            let mut m = start_manifest("train", &cfg, &common)?;
            let fixed = match &split {
                Some(p) => {
                    m.add_input(p)?;
                    Some(SplitManifest::load(p)?)
                }
                None => None,
            };
            let ws = Workspace::prepare(&cfg)?;
            let mut reports = Vec::new();
            for &seed in &cfg.seeds {
                let split_seed = if cfg.resplit_per_seed { seed } else { cfg.seeds[0] };
                let split = match &fixed {
                    Some(s) => s.clone(),
                    None => make_split(&ws.dataset, cfg.split_mode, cfg.new_fraction, split_seed)?,
                };
                let dir = common.out.join(format!("seed{seed}"));
                write_json(&mut m, &common.out, &format!("seed{seed}/split.json"), &split)?;
                let outcome = train(&ws, &split, seed, Some(&dir))?;
                m.add_output(&common.out, &dir.join("checkpoint"));
                m.add_output(&common.out, &dir.join("train_log.json"));
                let buckets: &[&str] = match split {
                    SplitManifest::Transductive { .. } => &["test"],
                    SplitManifest::Inductive { .. } => &["s1", "s2"],
                };
                for b in buckets {
                    let report = evaluate(&outcome.model, &ws, split.bucket(b).unwrap_or(&[]))?;
                    write_json(&mut m, &common.out, &format!("seed{seed}/metrics_{b}.json"), &report)?;
                    log::info!("seed {seed} {b}: accuracy {:.4} macro F1 {:.4}", report.accuracy, report.macro_f1);
                    if *b == buckets[0] {
                        reports.push(report);
                    }
                }
            }
            let agg = aggregate_runs(&reports)?;
            write_json(&mut m, &common.out, "aggregate.json", &agg)?;
            m.write(&common.out)?;
        }
        Command::Eval {
            common,
            checkpoint,
            split,
            bucket,
            vocab,
        } => {
            let (ckpt, ws, mut m) = checkpoint_workspace(&common, &checkpoint)?;
            if let Some(v) = vocab {
                ckpt.check_vocabulary(&imageddi::tokenizer::MotifVocabulary::load(&v)?)?;
            }
            m.command = "eval".into();
            m.add_input(&split)?;
            let split = SplitManifest::load(&split)?;
            let indices = split
                .bucket(&bucket)
                .ok_or_else(|| Error::ConfigError(format!("split has no bucket {bucket:?}")))?;
            let model = ckpt.to_model()?;
            let report = evaluate(&model, &ws, indices)?;
            write_json(&mut m, &common.out, &format!("metrics_{bucket}.json"), &report)?;
            m.write(&common.out)?;
        }
        Command::Aggregate { common, reports } => {
            let cfg = load_config(&common)?;
            let mut m = start_manifest("aggregate", &cfg, &common)?;
            let mut loaded = Vec::new();
            for p in &reports {
                m.add_input(p)?;
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                loaded.push(serde_json::from_str::<MetricsReport>(&text)?);
            }
            let agg = aggregate_runs(&loaded)?;
            write_json(&mut m, &common.out, "aggregate.json", &agg)?;
            m.write(&common.out)?;
        }
        Command::ExplainAttention {
            common,
            checkpoint,
            drug_x,
            drug_y,
        } => {
            let (ckpt, ws, mut m) = checkpoint_workspace(&common, &checkpoint)?;
            m.command = "explain-attention".into();
            let model = ckpt.to_model()?;
            let exp = explain_attention(&model, &ws, &drug_x, &drug_y)?;
            write_json(&mut m, &common.out, "attention.json", &exp)?;
            write_text(&mut m, &common.out, "attention.svg", &attention_svg(&exp))?;
            m.write(&common.out)?;
        }
        Command::ExplainGradcam {
            common,
            checkpoint,
            drug_x,
            drug_y,
            frames,
            class,
        } => {
            let (ckpt, ws, mut m) = checkpoint_workspace(&common, &checkpoint)?;
            m.command = "explain-gradcam".into();
            let model = ckpt.to_model()?;
            let maps = explain_gradcam(&model, &ws, &drug_x, &drug_y, class, &frames)?;
            let views = ws
                .images
                .views_3d(&drug_x)
                .ok_or_else(|| Error::DataError(format!("no 3D views for drug {drug_x}")))?;
            for map in &maps {
                let path = common.out.join(format!("gradcam_frame{}.png", map.frame));
                write_overlay(views.frame(map.frame), views.size, map, &path)?;
                m.add_output(&common.out, &path);
            }
            write_json(&mut m, &common.out, "gradcam.json", &maps)?;
            m.write(&common.out)?;
        }
        Command::Tsne {
            common,
            checkpoint,
            split,
            bucket,
            low,
            high,
            seed,
        } => {
            let (ckpt, ws, mut m) = checkpoint_workspace(&common, &checkpoint)?;
            m.command = "tsne".into();
            m.add_input(&split)?;
            let split = SplitManifest::load(&split)?;
            let indices = split
                .bucket(&bucket)
                .ok_or_else(|| Error::ConfigError(format!("split has no bucket {bucket:?}")))?;
            let labels: Vec<usize> = indices.iter().map(|&i| ws.dataset.interactions[i].event as usize).collect();
            let keep = select_events(&labels, low, high);
            let chosen: Vec<usize> = indices
                .iter()
                .zip(&labels)
                .filter(|(_, l)| keep.contains(l))
                .map(|(i, _)| *i)
                .collect();
            let model = ckpt.to_model()?;
            let inf = infer(&model, &ws, &chosen)?;
            let coords = tsne_2d(
                &inf.pooled,
                &TsneParams {
                    seed,
                    ..TsneParams::default()
                },
            )?;
            let rows: Vec<serde_json::Value> = chosen
                .iter()
                .zip(&coords)
                .zip(&inf.labels)
                .map(|((&i, c), &l)| {
                    let it = &ws.dataset.interactions[i];
                    serde_json::json!({
                        "interaction": i, "drug_x": it.drug_x, "drug_y": it.drug_y,
                        "event": l, "x": c[0], "y": c[1]
                    })
                })
                .collect();
            write_json(&mut m, &common.out, "tsne.json", &rows)?;
            let mut csv = String::from("interaction,event,x,y\n");
            for ((&i, c), &l) in chosen.iter().zip(&coords).zip(&inf.labels) {
                csv.push_str(&format!("{i},{l},{},{}\n", c[0], c[1]));
            }
            write_text(&mut m, &common.out, "tsne.csv", &csv)?;
            let svg = scatter_svg(&coords, &inf.labels, &format!("t-SNE of pair representations ({bucket})"));
            write_text(&mut m, &common.out, "tsne.svg", &svg)?;
            m.write(&common.out)?;
        }
    }
    Ok(())
}

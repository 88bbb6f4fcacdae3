//! Ball-and-stick multi-view rendering of conformers.

use std::collections::HashMap;

use candle_core::{Device, Tensor};
use image::imageops::FilterType;
use image::{Rgb, RgbImage};
use imageddi_chem::conformer::{self, ConformerResult};
use imageddi_chem::{element, parse_smiles};
use serde::{Deserialize, Serialize};
use tiny_skia::{Color, FillRule, Paint, PathBuilder, Pixmap, Stroke, Transform};

use super::{pixmap_to_rgb, rgb_to_chw};
use crate::error::{Error, Result};

pub const NUM_FRAMES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub angle_step_deg: f64,
    /// Which of the x, y, z axes frame i rotates about (each by i * step).
    pub axes: [bool; 3],
    pub raw_width: u32,
    pub raw_height: u32,
    pub out_size: u32,
    /// Fraction of the shorter raw side covered by the molecule's bounding sphere.
    pub fill_fraction: f64,
}

impl Default for ViewParams {
    fn default() -> Self {
        ViewParams {
            angle_step_deg: 36.0,
            axes: [true, true, true],
            raw_width: 640,
            raw_height: 480,
            out_size: 224,
            fill_fraction: 0.85,
        }
    }
}

impl ViewParams {
    pub fn hash(&self) -> String {
        super::hex_sha1(serde_json::to_string(self).expect("params serialize").as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewAtom {
    pub pos: [f64; 3],
    pub element: u8,
}

/// Off-screen renderer for one pose. Positions are centred on the origin;
/// `scale` maps Angstrom to pixels and is fixed across all frames.
pub trait ViewRenderer {
    fn background(&self) -> [u8; 3];
    fn render(
        &self,
        atoms: &[ViewAtom],
        bonds: &[(usize, usize)],
        scale: f64,
        width: u32,
        height: u32,
    ) -> Result<RgbImage>;
}

/// Orthographic ball-and-stick on black, painter's order along z (camera on +z).
#[derive(Clone, Debug)]
pub struct BallStickRenderer {
    /// Ball radius as a fraction of the covalent radius.
    pub ball_scale: f64,
    /// Stick width in Angstrom.
    pub stick_width: f64,
}

impl Default for BallStickRenderer {
    fn default() -> Self {
        BallStickRenderer {
            ball_scale: 0.45,
            stick_width: 0.25,
        }
    }
}

impl BallStickRenderer {
    fn radius(&self, el: u8) -> f64 {
        self.ball_scale * element::covalent_radius(el)
    }
}

fn solid(rgb: [u8; 3]) -> Paint<'static> {
    let mut p = Paint::default();
    p.set_color_rgba8(rgb[0], rgb[1], rgb[2], 255);
    p.anti_alias = true;
    p
}

impl ViewRenderer for BallStickRenderer {
    fn background(&self) -> [u8; 3] {
        [0, 0, 0]
    }

    fn render(
        &self,
        atoms: &[ViewAtom],
        bonds: &[(usize, usize)],
        scale: f64,
        width: u32,
        height: u32,
    ) -> Result<RgbImage> {
        let mut pix = Pixmap::new(width, height)
            .ok_or_else(|| Error::RenderFailure(format!("cannot allocate {width}x{height}")))?;
        let bg = self.background();
        pix.fill(Color::from_rgba8(bg[0], bg[1], bg[2], 255));
        let cx = width as f64 / 2.0;
        let cy = height as f64 / 2.0;
        let proj = |p: [f64; 3]| ((cx + p[0] * scale) as f32, (cy - p[1] * scale) as f32);

        enum Item {
            Stick(usize, usize),
            Ball(usize),
        }
        let mut items: Vec<(f64, usize, Item)> = Vec::new();
        for (k, &(a, b)) in bonds.iter().enumerate() {
            let z = 0.5 * (atoms[a].pos[2] + atoms[b].pos[2]);
            items.push((z, k, Item::Stick(a, b)));
        }
        for (k, a) in atoms.iter().enumerate() {
            items.push((a.pos[2], bonds.len() + k, Item::Ball(k)));
        }
        items.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

        let stick = Stroke {
            width: (self.stick_width * scale).max(1.0) as f32,
            ..Stroke::default()
        };
        let stick_paint = solid([170, 170, 170]);
        for (_, _, item) in &items {
            match *item {
                Item::Stick(a, b) => {
                    let (x0, y0) = proj(atoms[a].pos);
                    let (x1, y1) = proj(atoms[b].pos);
                    let mut pb = PathBuilder::new();
                    pb.move_to(x0, y0);
                    pb.line_to(x1, y1);
                    if let Some(path) = pb.finish() {
                        pix.stroke_path(&path, &stick_paint, &stick, Transform::identity(), None);
                    }
                }
                Item::Ball(a) => {
                    let (x, y) = proj(atoms[a].pos);
                    let r = (self.radius(atoms[a].element) * scale).max(1.0) as f32;
                    let base = element::color(atoms[a].element);
                    let rim = base.map(|c| (c as u16 * 3 / 5) as u8);
                    // darker rim then a lighter offset core for a shaded look
                    if let Some(path) = PathBuilder::from_circle(x, y, r) {
                        pix.fill_path(&path, &solid(rim), FillRule::Winding, Transform::identity(), None);
                    }
                    if let Some(path) = PathBuilder::from_circle(x - 0.15 * r, y - 0.15 * r, 0.75 * r) {
                        pix.fill_path(&path, &solid(base), FillRule::Winding, Transform::identity(), None);
                    }
                }
            }
        }
        Ok(pixmap_to_rgb(&pix))
    }
}

/// Ten-frame stack, channel-first, values in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeViews3D {
    pub frames: Vec<f32>,
    pub size: usize,
}

impl MoleculeViews3D {
    pub fn new(frames: Vec<f32>, size: usize) -> Result<Self> {
        if frames.len() != NUM_FRAMES * 3 * size * size {
            return Err(Error::ShapeMismatch(format!(
                "frame buffer of {} values is not {NUM_FRAMES}x3x{size}x{size}",
                frames.len()
            )));
        }
        Ok(MoleculeViews3D { frames, size })
    }

    pub fn shape(&self) -> [usize; 4] {
        [NUM_FRAMES, 3, self.size, self.size]
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = 3 * self.size * self.size;
        &self.frames[i * n..(i + 1) * n]
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::from_slice(&self.frames, self.shape().to_vec(), &Device::Cpu)?)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let dims = t.dims().to_vec();
        if dims.len() != 4 || dims[0] != NUM_FRAMES || dims[1] != 3 || dims[2] != dims[3] {
            return Err(Error::ShapeMismatch(format!("expected 10x3xSxS frames, got {dims:?}")));
        }
        let frames = t.flatten_all()?.to_dtype(candle_core::DType::F32)?.to_vec1::<f32>()?;
        Self::new(frames, dims[2])
    }
}

/// Heavy-atom conformer for a SMILES string with the default optimizer.
pub fn generate_conformer(smiles: &str) -> Result<ConformerResult> {
    let mol = parse_smiles(smiles)?;
    Ok(conformer::generate_conformer(&mol))
}

fn rot_x(t: f64) -> [[f64; 3]; 3] {
    let (s, c) = t.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(t: f64) -> [[f64; 3]; 3] {
    let (s, c) = t.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(t: f64) -> [[f64; 3]; 3] {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn matmul3(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rotation of frame `i`: Rz * Ry * Rx, each enabled axis turned
/// counter-clockwise by i * step degrees.
pub fn frame_rotation(i: usize, params: &ViewParams) -> [[f64; 3]; 3] {
    let t = (i as f64 * params.angle_step_deg).to_radians();
    let id = rot_x(0.0);
    let rx = if params.axes[0] { rot_x(t) } else { id };
    let ry = if params.axes[1] { rot_y(t) } else { id };
    let rz = if params.axes[2] { rot_z(t) } else { id };
    matmul3(rz, matmul3(ry, rx))
}

/// Renders the ten rotated poses, letterboxes each raw render to a square
/// with the background colour and resizes bilinearly to `out_size`.
pub fn render_3d_views(
    conf: &ConformerResult,
    smiles: &str,
    params: &ViewParams,
    renderer: &dyn ViewRenderer,
) -> Result<MoleculeViews3D> {
    let mol = parse_smiles(smiles)?;
    let coords = conf
        .coords
        .as_ref()
        .ok_or_else(|| Error::RenderFailure("conformer has no coordinates".into()))?;
    if coords.len() != conf.atoms.len() || conf.atoms.iter().any(|a| *a >= mol.num_atoms()) {
        return Err(Error::RenderFailure("conformer does not match the molecule".into()));
    }
    if coords.is_empty() {
        return Err(Error::RenderFailure("conformer has no atoms".into()));
    }
    let index: HashMap<usize, usize> = conf.atoms.iter().enumerate().map(|(k, a)| (*a, k)).collect();
    let bonds: Vec<(usize, usize)> = mol
        .bonds()
        .iter()
        .filter_map(|b| Some((*index.get(&b.a)?, *index.get(&b.b)?)))
        .collect();
    let n = coords.len() as f64;
    let mut centroid = [0.0; 3];
    for c in coords {
        for k in 0..3 {
            centroid[k] += c[k] / n;
        }
    }
    let centred: Vec<[f64; 3]> = coords
        .iter()
        .map(|c| [c[0] - centroid[0], c[1] - centroid[1], c[2] - centroid[2]])
        .collect();
    let max_r = centred
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max)
        + 1.0;
    let short = params.raw_width.min(params.raw_height) as f64;
    let scale = params.fill_fraction * short / (2.0 * max_r);
    let elements: Vec<u8> = conf.atoms.iter().map(|a| mol.atom(*a).element).collect();

    let side = params.raw_width.max(params.raw_height);
    let bg = renderer.background();
    let out = params.out_size;
    let mut frames = Vec::with_capacity(NUM_FRAMES * 3 * (out * out) as usize);
    for i in 0..NUM_FRAMES {
        let r = frame_rotation(i, params);
        let atoms: Vec<ViewAtom> = centred
            .iter()
            .zip(&elements)
            .map(|(p, &el)| {
                let mut q = [0.0; 3];
                for (row, v) in q.iter_mut().enumerate() {
                    *v = (0..3).map(|k| r[row][k] * p[k]).sum();
                }
                ViewAtom { pos: q, element: el }
            })
            .collect();
        let raw = renderer.render(&atoms, &bonds, scale, params.raw_width, params.raw_height)?;
        if raw.dimensions() != (params.raw_width, params.raw_height) {
            return Err(Error::RenderFailure(format!(
                "renderer returned {:?}, expected {}x{}",
                raw.dimensions(),
                params.raw_width,
                params.raw_height
            )));
        }
        let mut square = RgbImage::from_pixel(side, side, Rgb(bg));
        let ox = (side - params.raw_width) / 2;
        let oy = (side - params.raw_height) / 2;
        image::imageops::replace(&mut square, &raw, ox as i64, oy as i64);
        let small = image::imageops::resize(&square, out, out, FilterType::Triangle);
        frames.extend(rgb_to_chw(&small));
    }
    MoleculeViews3D::new(frames, out as usize)
}

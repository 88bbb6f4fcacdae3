use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Image2D, MoleculeViews3D, RenderParams};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewsSidecar {
    pub smiles: String,
    pub attempts: u32,
    pub converged: bool,
    pub fallback_2d: bool,
    pub render_param_hash: String,
}

fn sidecar_path(npy: &Path) -> PathBuf {
    npy.with_extension("json")
}

/// Writes `<name>.npy` (float32, 10x3xSxS) and `<name>.json` next to it.
pub fn save_views(path: &Path, views: &MoleculeViews3D, sidecar: &ViewsSidecar) -> Result<()> {
    views.to_tensor()?.write_npy(path)?;
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(sidecar)?).map_err(Error::io(side))
}

pub fn load_views(path: &Path) -> Result<(MoleculeViews3D, ViewsSidecar)> {
    let t = candle_core::Tensor::read_npy(path)?;
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(Error::io(&side))?;
    Ok((MoleculeViews3D::from_tensor(&t)?, serde_json::from_str(&text)?))
}

pub fn save_png(image: &Image2D, path: &Path) -> Result<()> {
    image.pixels.save(path)?;
    Ok(())
}

pub fn load_png(path: &Path, params: RenderParams) -> Result<Image2D> {
    let pixels = image::open(path)?.to_rgb8();
    Ok(Image2D { pixels, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{render_2d, NUM_FRAMES};

    #[test]
    fn png_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let img = render_2d("CCN", &RenderParams::with_size(48)).unwrap();
        let p = dir.path().join("d.png");
        save_png(&img, &p).unwrap();
        assert_eq!(load_png(&p, img.params.clone()).unwrap(), img);
    }

    #[test]
    fn views_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let size = 4;
        let frames: Vec<f32> = (0..NUM_FRAMES * 3 * size * size).map(|i| i as f32 / 1000.0).collect();
        let v = MoleculeViews3D::new(frames, size).unwrap();
        let side = ViewsSidecar {
            smiles: "C".into(),
            attempts: 1,
            converged: true,
            fallback_2d: false,
            render_param_hash: "abc".into(),
        };
        let p = dir.path().join("d.npy");
        save_views(&p, &v, &side).unwrap();
        let (v2, s2) = load_views(&p).unwrap();
        assert_eq!(v2, v);
        assert_eq!(s2, side);
    }
}

//! 2D depictions with training-time augmentation, conformers and 3D
//! multi-view frame stacks.

mod font;
mod store;
mod views;

use image::{Rgb, RgbImage};
use imageddi_chem::layout::{layout_2d, BOND_LENGTH};
use imageddi_chem::rings::RingInfo;
use imageddi_chem::{element, parse_smiles, BondOrder, Molecule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use tiny_skia::{Color, FillRule, Paint, PathBuilder, Pixmap, Stroke, Transform};

use crate::error::{Error, Result};

pub use store::{load_png, load_views, save_png, save_views, ViewsSidecar};
pub use views::{
    frame_rotation, generate_conformer, render_3d_views, BallStickRenderer, MoleculeViews3D,
    ViewAtom, ViewParams, ViewRenderer, NUM_FRAMES,
};

pub use imageddi_chem::conformer::ConformerResult;

pub const BACKGROUND_2D: [u8; 3] = [255, 255, 255];

/// Everything that influences a 2D depiction. Hashed into artifact metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub size: u32,
    pub scheme: String,
    /// Bond stroke width as a fraction of the image size.
    pub bond_width: f32,
    /// Largest on-image bond length as a fraction of the image size.
    pub max_bond: f32,
    pub margin: f32,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            size: 224,
            scheme: "line-cpk-5x7".into(),
            bond_width: 1.0 / 112.0,
            max_bond: 0.12,
            margin: 0.06,
        }
    }
}

impl RenderParams {
    pub fn with_size(size: u32) -> Self {
        RenderParams {
            size,
            ..Default::default()
        }
    }

    pub fn hash(&self) -> String {
        hex_sha1(serde_json::to_string(self).expect("params serialize").as_bytes())
    }
}

pub(crate) fn hex_sha1(bytes: &[u8]) -> String {
    Sha1::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    pub pixels: RgbImage,
    pub params: RenderParams,
}

impl Image2D {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    /// Fraction of pixels exactly equal to `color`.
    pub fn fraction_equal(&self, color: [u8; 3]) -> f64 {
        let n = self.pixels.pixels().filter(|p| p.0 == color).count();
        n as f64 / (self.width() * self.height()) as f64
    }

    /// Channel-first floats in [0,1].
    pub fn to_chw(&self) -> Vec<f32> {
        rgb_to_chw(&self.pixels)
    }
}

pub(crate) fn rgb_to_chw(img: &RgbImage) -> Vec<f32> {
    let (w, h) = img.dimensions();
    let plane = (w * h) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = p.0[c] as f32 / 255.0;
        }
    }
    out
}

fn paint(rgb: [u8; 3]) -> Paint<'static> {
    let mut p = Paint::default();
    p.set_color_rgba8(rgb[0], rgb[1], rgb[2], 255);
    p.anti_alias = true;
    p
}

fn label(mol: &Molecule, a: usize) -> Option<String> {
    let atom = mol.atom(a);
    let bare_carbon = atom.element == element::CARBON && atom.charge == 0 && atom.isotope == 0;
    if bare_carbon && mol.degree(a) > 0 {
        return None;
    }
    let mut s = if atom.element == element::DUMMY {
        "*".to_string()
    } else {
        atom.symbol().to_string()
    };
    if atom.hydrogens > 0 && atom.element != element::CARBON {
        s.push('H');
        if atom.hydrogens > 1 {
            s.push_str(&atom.hydrogens.to_string());
        }
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("{c}+")),
        c => s.push_str(&format!("{}-", -c)),
    }
    Some(s)
}

/// Line depiction on a white canvas: bonds as strokes (parallel strokes for
/// double/triple bonds, an inner circle for aromatic rings), heteroatoms as
/// CPK-coloured bitmap labels.
pub fn render_2d(smiles: &str, params: &RenderParams) -> Result<Image2D> {
    let mol = parse_smiles(smiles)?;
    render_molecule_2d(&mol, params)
}

pub fn render_molecule_2d(mol: &Molecule, params: &RenderParams) -> Result<Image2D> {
    let size = params.size;
    if size < 8 {
        return Err(Error::RenderFailure(format!("image size {size} too small")));
    }
    let mut pix = Pixmap::new(size, size)
        .ok_or_else(|| Error::RenderFailure("cannot allocate canvas".into()))?;
    pix.fill(Color::WHITE);
    let n = mol.num_atoms();
    if n == 0 {
        return Err(Error::RenderFailure("molecule has no atoms".into()));
    }
    let coords = layout_2d(mol);
    let (min_x, max_x, min_y, max_y) = coords.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p[0]), b.max(p[0]), c.min(p[1]), d.max(p[1])),
    );
    let s = size as f64;
    let usable = s * (1.0 - 2.0 * params.margin as f64);
    let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let scale = (usable / span).min(params.max_bond as f64 * s / BOND_LENGTH);
    let cx = 0.5 * (min_x + max_x);
    let cy = 0.5 * (min_y + max_y);
    let to_px = |p: [f64; 2]| -> (f32, f32) {
        (
            (s / 2.0 + (p[0] - cx) * scale) as f32,
            (s / 2.0 - (p[1] - cy) * scale) as f32,
        )
    };
    let px: Vec<(f32, f32)> = coords.iter().map(|p| to_px(*p)).collect();
    let bond_px = (BOND_LENGTH * scale) as f32;
    let width = (params.bond_width * size as f32).max(1.0);
    let stroke = Stroke {
        width,
        ..Stroke::default()
    };
    let black = paint([0, 0, 0]);
    let centroid = |atoms: &[usize]| {
        let k = atoms.len() as f32;
        let x = atoms.iter().map(|a| px[*a].0).sum::<f32>() / k;
        let y = atoms.iter().map(|a| px[*a].1).sum::<f32>() / k;
        (x, y)
    };

    let line = |pix: &mut Pixmap, a: (f32, f32), b: (f32, f32)| {
        let mut pb = PathBuilder::new();
        pb.move_to(a.0, a.1);
        pb.line_to(b.0, b.1);
        if let Some(path) = pb.finish() {
            pix.stroke_path(&path, &black, &stroke, Transform::identity(), None);
        }
    };

    let info = RingInfo::new(mol);
    for b in mol.bonds() {
        let (a, c) = (px[b.a], px[b.b]);
        let (dx, dy) = (c.0 - a.0, c.1 - a.1);
        let len = (dx * dx + dy * dy).sqrt().max(1e-6);
        let (nx, ny) = (-dy / len, dx / len);
        let off = 0.18 * bond_px;
        match b.order {
            BondOrder::Single | BondOrder::Aromatic => line(&mut pix, a, c),
            BondOrder::Double => {
                let h = off / 2.0;
                line(&mut pix, (a.0 + nx * h, a.1 + ny * h), (c.0 + nx * h, c.1 + ny * h));
                line(&mut pix, (a.0 - nx * h, a.1 - ny * h), (c.0 - nx * h, c.1 - ny * h));
            }
            BondOrder::Triple | BondOrder::Quadruple => {
                line(&mut pix, a, c);
                line(&mut pix, (a.0 + nx * off, a.1 + ny * off), (c.0 + nx * off, c.1 + ny * off));
                line(&mut pix, (a.0 - nx * off, a.1 - ny * off), (c.0 - nx * off, c.1 - ny * off));
            }
        }
    }
    for ring in &info.rings {
        if !ring.iter().all(|a| mol.atom(*a).aromatic) {
            continue;
        }
        let (x, y) = centroid(ring);
        let r = 0.55 * bond_px;
        if let Some(path) = PathBuilder::from_circle(x, y, r) {
            pix.stroke_path(&path, &black, &stroke, Transform::identity(), None);
        }
    }

    // clear a disc behind each label so bonds stop short of the text
    let glyph_scale = (size / 112).max(1);
    let labels: Vec<(usize, String)> = (0..n).filter_map(|a| label(mol, a).map(|l| (a, l))).collect();
    for (a, _) in &labels {
        let r = 0.6 * (font::GLYPH_H * glyph_scale) as f32;
        if let Some(path) = PathBuilder::from_circle(px[*a].0, px[*a].1, r) {
            pix.fill_path(&path, &paint(BACKGROUND_2D), FillRule::Winding, Transform::identity(), None);
        }
    }
    let mut img = pixmap_to_rgb(&pix);
    for (a, text) in &labels {
        let color = label_color(mol.atom(*a).element);
        draw_text(&mut img, text, px[*a], glyph_scale, color);
    }
    Ok(Image2D {
        pixels: img,
        params: params.clone(),
    })
}

fn label_color(el: u8) -> [u8; 3] {
    match el {
        element::CARBON | element::HYDROGEN => [0, 0, 0],
        // pale CPK colours are darkened so they stay legible on white
        _ => element::color(el).map(|c| (c as u16 * 3 / 4) as u8),
    }
}

/// Draws `text` with the first glyph centred on `anchor`.
fn draw_text(img: &mut RgbImage, text: &str, anchor: (f32, f32), scale: u32, color: [u8; 3]) {
    let gw = font::GLYPH_W * scale;
    let gh = font::GLYPH_H * scale;
    let x0 = anchor.0.round() as i64 - (gw / 2) as i64;
    let y0 = anchor.1.round() as i64 - (gh / 2) as i64;
    for (k, ch) in text.chars().enumerate() {
        let rows = font::glyph(ch);
        let gx = x0 + (k as i64) * ((gw + scale) as i64);
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..font::GLYPH_W {
                if bits & (0x10 >> rx) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let x = gx + (rx * scale + sx) as i64;
                        let y = y0 + (ry as u32 * scale + sy) as i64;
                        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                            img.put_pixel(x as u32, y as u32, Rgb(color));
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn pixmap_to_rgb(pix: &Pixmap) -> RgbImage {
    // canvases are always opaque, so premultiplied == straight colour
    let data = pix.data();
    let mut img = RgbImage::new(pix.width(), pix.height());
    for (i, p) in img.pixels_mut().enumerate() {
        p.0 = [data[4 * i], data[4 * i + 1], data[4 * i + 2]];
    }
    img
}

/// Random choices of one augmentation draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDecision {
    pub flip: bool,
    pub gray: bool,
    /// Counter-clockwise rotation in degrees, in [0, 360).
    pub angle: f64,
}

impl AugmentDecision {
    pub const IDENTITY: AugmentDecision = AugmentDecision {
        flip: false,
        gray: false,
        angle: 0.0,
    };

    /// Three draws from a seeded stream: flip (p 0.5), grayscale (p 0.2),
    /// angle uniform in [0, 360).
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flip = rng.random::<f64>() < 0.5;
        let gray = rng.random::<f64>() < 0.2;
        let angle = rng.random::<f64>() * 360.0;
        AugmentDecision { flip, gray, angle }
    }
}

/// Center crop, horizontal flip, grayscale, rotation; never a random crop.
pub fn augment_2d(image: &Image2D, crop_size: u32, seed: u64) -> Result<Image2D> {
    apply_augmentation(image, crop_size, &AugmentDecision::sample(seed))
}

pub fn apply_augmentation(image: &Image2D, crop_size: u32, d: &AugmentDecision) -> Result<Image2D> {
    if image.width() != image.height() {
        return Err(Error::ShapeMismatch(format!(
            "augmentation needs a square image, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let mut img = center_crop(&image.pixels, crop_size)?;
    if d.flip {
        image::imageops::flip_horizontal_in_place(&mut img);
    }
    if d.gray {
        to_gray3(&mut img);
    }
    if d.angle != 0.0 {
        img = rotate(&img, d.angle, BACKGROUND_2D);
    }
    Ok(Image2D {
        pixels: img,
        params: image.params.clone(),
    })
}

pub fn center_crop(img: &RgbImage, size: u32) -> Result<RgbImage> {
    let (w, h) = img.dimensions();
    if size == 0 || size > w || size > h {
        return Err(Error::ShapeMismatch(format!(
            "cannot center-crop {w}x{h} to {size}"
        )));
    }
    let x = (w - size) / 2;
    let y = (h - size) / 2;
    Ok(image::imageops::crop_imm(img, x, y, size, size).to_image())
}

/// ITU-R 601 luma replicated into all three channels.
fn to_gray3(img: &mut RgbImage) {
    for p in img.pixels_mut() {
        let [r, g, b] = p.0;
        let l = ((r as u32 * 19595 + g as u32 * 38470 + b as u32 * 7471 + 0x8000) >> 16) as u8;
        p.0 = [l, l, l];
    }
}

/// Bilinear rotation about the image centre; uncovered pixels get `fill`.
fn rotate(img: &RgbImage, angle_deg: f64, fill: [u8; 3]) -> RgbImage {
    let (w, h) = img.dimensions();
    let (s, c) = angle_deg.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = RgbImage::new(w, h);
    let sample = |x: i64, y: i64, ch: usize| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            fill[ch] as f64
        } else {
            img.get_pixel(x as u32, y as u32).0[ch] as f64
        }
    };
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse map; y grows downward so a visual CCW turn is this sign pattern
            let sx = c * dx - s * dy + cx;
            let sy = s * dx + c * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (xi, yi) = (x0 as i64, y0 as i64);
            let mut px = [0u8; 3];
            for (ch, v) in px.iter_mut().enumerate() {
                let top = sample(xi, yi, ch) * (1.0 - fx) + sample(xi + 1, yi, ch) * fx;
                let bot = sample(xi, yi + 1, ch) * (1.0 - fx) + sample(xi + 1, yi + 1, ch) * fx;
                *v = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x, y, Rgb(px));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const IBUPROFEN: &str = "CC(C)Cc1ccc(cc1)C(C)C(=O)O";

    #[test]
    fn render_is_deterministic_and_sized() {
        let p = RenderParams::default();
        let a = render_2d(IBUPROFEN, &p).unwrap();
        let b = render_2d(IBUPROFEN, &p).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(a.pixels.dimensions(), (224, 224));
        let small = render_2d(IBUPROFEN, &RenderParams::with_size(64)).unwrap();
        assert_eq!(small.pixels.dimensions(), (64, 64));
    }

    #[test]
    fn drug_render_is_mostly_background() {
        for smi in [IBUPROFEN, "CC(=O)Oc1ccccc1C(=O)O", "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21"] {
            let img = render_2d(smi, &RenderParams::default()).unwrap();
            let f = img.fraction_equal(BACKGROUND_2D);
            assert!(f > 0.9, "{smi}: background fraction {f}");
        }
    }

    #[test]
    fn heteroatoms_are_coloured() {
        let img = render_2d("CCO", &RenderParams::default()).unwrap();
        let red = label_color(element::OXYGEN);
        assert!(img.pixels.pixels().any(|p| p.0 == red));
    }

    #[test]
    fn invalid_smiles_is_reported() {
        assert_eq!(
            render_2d("C1CC", &RenderParams::default()).unwrap_err().kind(),
            "InvalidSmiles"
        );
    }

    #[test]
    fn identity_decision_equals_center_crop() {
        let img = render_2d(IBUPROFEN, &RenderParams::default()).unwrap();
        let out = apply_augmentation(&img, 200, &AugmentDecision::IDENTITY).unwrap();
        assert_eq!(out.pixels, center_crop(&img.pixels, 200).unwrap());
    }

    #[test]
    fn flip_and_gray_branches() {
        let img = render_2d("CCO", &RenderParams::with_size(64)).unwrap();
        let flip = AugmentDecision {
            flip: true,
            ..AugmentDecision::IDENTITY
        };
        let f = apply_augmentation(&img, 64, &flip).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(f.pixels.get_pixel(x, y), img.pixels.get_pixel(63 - x, y));
            }
        }
        let gray = AugmentDecision {
            gray: true,
            ..AugmentDecision::IDENTITY
        };
        let g = apply_augmentation(&img, 64, &gray).unwrap();
        assert!(g.pixels.pixels().all(|p| p.0[0] == p.0[1] && p.0[1] == p.0[2]));
    }

    #[test]
    fn rotation_by_90_moves_pixels() {
        let mut img = RgbImage::from_pixel(5, 5, Rgb([255, 255, 255]));
        img.put_pixel(4, 2, Rgb([0, 0, 0]));
        let r = rotate(&img, 90.0, [255, 255, 255]);
        // a point right of centre turns counter-clockwise to above centre
        assert_eq!(r.get_pixel(2, 0).0, [0, 0, 0]);
        let full = rotate(&img, 360.0, [255, 255, 255]);
        assert_eq!(full, img);
    }

    #[test]
    fn augmentation_rejects_non_square_and_oversized_crop() {
        let img = Image2D {
            pixels: RgbImage::new(4, 3),
            params: RenderParams::default(),
        };
        assert!(augment_2d(&img, 3, 0).is_err());
        let sq = Image2D {
            pixels: RgbImage::new(4, 4),
            params: RenderParams::default(),
        };
        assert!(augment_2d(&sq, 5, 0).is_err());
    }
}

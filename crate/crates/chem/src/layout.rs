//! 2D depiction coordinates by stress majorization over idealised
//! through-graph distances.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::mol::Molecule;
use crate::rings::RingInfo;

/// Bond length of the depiction, in the same unit as the returned coordinates.
pub const BOND_LENGTH: f64 = 1.5;

const SWEEPS: usize = 300;
const COMPONENT_GAP: f64 = 2.0 * BOND_LENGTH;

/// Deterministic 2D coordinates, one per atom. Disconnected components are
/// placed left to right in component order.
pub fn layout_2d(mol: &Molecule) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; mol.num_atoms()];
    let info = RingInfo::new(mol);
    let ideal = ideal_distances(mol, &info);
    let mut x_offset = 0.0;
    for comp in mol.components() {
        let mut pos = layout_component(&comp, &ideal);
        orient(&mut pos);
        let min_x = pos.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = pos.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        for (p, &a) in pos.iter().zip(&comp) {
            out[a] = [p[0] - min_x + x_offset, p[1]];
        }
        x_offset += max_x - min_x + COMPONENT_GAP;
    }
    out
}

/// Shortest-path distances over bonds, 120-degree angle chords and regular
/// polygon chords within each ring.
fn ideal_distances(mol: &Molecule, info: &RingInfo) -> DMatrix<f64> {
    let n = mol.num_atoms();
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for i in 0..n {
        d[(i, i)] = 0.0;
    }
    let set = |d: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
        if v < d[(i, j)] {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    };
    for b in mol.bonds() {
        set(&mut d, b.a, b.b, BOND_LENGTH);
    }
    for c in 0..n {
        let nb = mol.neighbors(c);
        for x in 0..nb.len() {
            for y in x + 1..nb.len() {
                set(&mut d, nb[x].0, nb[y].0, BOND_LENGTH * 3f64.sqrt());
            }
        }
    }
    for ring in &info.rings {
        let k = ring.len();
        for i in 0..k {
            for j in i + 1..k {
                let s = (j - i).min(k - (j - i)) as f64;
                let chord = BOND_LENGTH * (std::f64::consts::PI * s / k as f64).sin()
                    / (std::f64::consts::PI / k as f64).sin();
                // polygon chords override the generic angle chord
                d[(ring[i], ring[j])] = chord;
                d[(ring[j], ring[i])] = chord;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[(i, k)];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let v = dik + d[(k, j)];
                if v < d[(i, j)] {
                    d[(i, j)] = v;
                }
            }
        }
    }
    d
}

fn layout_component(comp: &[usize], ideal: &DMatrix<f64>) -> Vec<[f64; 2]> {
    let n = comp.len();
    if n == 1 {
        return vec![[0.0, 0.0]];
    }
    let dist = DMatrix::from_fn(n, n, |i, j| ideal[(comp[i], comp[j])]);
    let mut pos = classical_mds(&dist);

    // localized stress majorization, weights d^-2
    for _ in 0..SWEEPS {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (mut nx, mut ny, mut wsum) = (0.0, 0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dij = dist[(i, j)];
                let w = 1.0 / (dij * dij);
                let dx = pos[i][0] - pos[j][0];
                let dy = pos[i][1] - pos[j][1];
                let len = (dx * dx + dy * dy).sqrt().max(1e-9);
                nx += w * (pos[j][0] + dij * dx / len);
                ny += w * (pos[j][1] + dij * dy / len);
                wsum += w;
            }
            let new = [nx / wsum, ny / wsum];
            moved = moved.max((new[0] - pos[i][0]).abs() + (new[1] - pos[i][1]).abs());
            pos[i] = new;
        }
        if moved < 1e-6 {
            break;
        }
    }
    pos
}

fn classical_mds(dist: &DMatrix<f64>) -> Vec<[f64; 2]> {
    let n = dist.nrows();
    let sq = dist.map(|x| x * x);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let total = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, c| eig.eigenvalues[*c].total_cmp(&eig.eigenvalues[*a]).then(a.cmp(c)));
    let mut pos = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        // fix the eigenvector sign so the layout does not depend on solver whims
        let col = eig.eigenvectors.column(k);
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-9)
            .map(|v| v.signum())
            .unwrap_or(1.0);
        for i in 0..n {
            pos[i][axis] = sign * col[i] * scale;
        }
    }
    // break exact collinearity (e.g. a straight chain) so majorization can bend it
    for (i, p) in pos.iter_mut().enumerate() {
        p[1] += 1e-3 * ((i % 2) as f64 - 0.5);
    }
    pos
}

/// Centers and rotates so the principal axis is horizontal.
fn orient(pos: &mut [[f64; 2]]) {
    let n = pos.len() as f64;
    let cx = pos.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pos.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pos.iter() {
        let (x, y) = (p[0] - cx, p[1] - cy);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (s, c) = (-angle).sin_cos();
    for p in pos.iter_mut() {
        let (x, y) = (p[0] - cx, p[1] - cy);
        *p = [c * x - s * y, s * x + c * y];
    }
}

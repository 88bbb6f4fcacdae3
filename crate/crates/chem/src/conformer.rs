//! Heavy-atom 3D conformers: distance-geometry style embedding followed by
//! minimization in a generic valence force field, with a doubling retry
//! schedule and a planar fallback.

use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient, State, TerminationReason};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element;
use crate::layout::layout_2d;
use crate::mol::{BondOrder, Molecule};
use crate::rings::RingInfo;

/// Iteration budget of the first attempt.
pub const BASE_ITERATIONS: u64 = 5000;
/// Attempts before falling back to planar coordinates.
pub const MAX_ATTEMPTS: u32 = 10;
pub const DEFAULT_SEED: u64 = 0x5EED_C0F0;

/// Budget of attempt `k` (1-based): doubles every retry.
pub fn iteration_budget(attempt: u32) -> u64 {
    assert!(attempt >= 1, "attempts are 1-based");
    BASE_ITERATIONS << (attempt - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConformerResult {
    /// Indices (into the source molecule) of the atoms that received
    /// coordinates; hydrogens are never included.
    pub atoms: Vec<usize>,
    pub coords: Option<Vec<[f64; 3]>>,
    pub converged: bool,
    pub attempts: u32,
    pub fallback_2d: bool,
}

#[derive(Clone, Debug)]
pub struct MinimizeOutcome {
    pub coords: Vec<f64>,
    pub converged: bool,
}

/// Local optimizer used by the retry loop. Injected so callers can count or
/// sabotage iterations.
pub trait Minimizer {
    fn minimize(&mut self, ff: &ForceField, x0: &[f64], max_iters: u64) -> MinimizeOutcome;
}

/// Limited-memory BFGS with a More-Thuente line search.
#[derive(Clone, Debug)]
pub struct Lbfgs {
    pub grad_tolerance: f64,
    pub memory: usize,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Lbfgs {
            grad_tolerance: 1e-4,
            memory: 8,
        }
    }
}

struct Problem<'f>(&'f ForceField);

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        Ok(self.0.energy(x))
    }
}

impl Gradient for Problem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, x: &Vec<f64>) -> Result<Vec<f64>, ArgminError> {
        let mut g = vec![0.0; x.len()];
        self.0.energy_and_gradient(x, &mut g);
        Ok(g)
    }
}

impl Minimizer for Lbfgs {
    fn minimize(&mut self, ff: &ForceField, x0: &[f64], max_iters: u64) -> MinimizeOutcome {
        let fallback = MinimizeOutcome {
            coords: x0.to_vec(),
            converged: false,
        };
        let Ok(solver) = LBFGS::new(MoreThuenteLineSearch::new(), self.memory)
            .with_tolerance_grad(self.grad_tolerance)
            .and_then(|s| s.with_tolerance_cost(0.0))
        else {
            return fallback;
        };
        let run = Executor::new(Problem(ff), solver)
            .configure(|state| state.param(x0.to_vec()).max_iters(max_iters))
            .run();
        match run {
            Ok(res) => {
                let state = res.state();
                let converged =
                    matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged));
                let coords = state
                    .get_best_param()
                    .cloned()
                    .unwrap_or_else(|| x0.to_vec());
                // trust the gradient rather than the solver's bookkeeping
                let mut g = vec![0.0; coords.len()];
                ff.energy_and_gradient(&coords, &mut g);
                let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                MinimizeOutcome {
                    converged: converged && gnorm <= self.grad_tolerance * 10.0,
                    coords,
                }
            }
            Err(_) => fallback,
        }
    }
}

/// Generates a conformer with the default optimizer and seed.
pub fn generate_conformer(mol: &Molecule) -> ConformerResult {
    embed_molecule(mol, &mut Lbfgs::default(), DEFAULT_SEED)
}

/// Embeds heavy atoms, then minimizes with budgets `iteration_budget(k)` for
/// k = 1..=10, continuing from the previous attempt's coordinates. After ten
/// unconverged attempts the 2D depiction is returned with z = 0.
pub fn embed_molecule(mol: &Molecule, minimizer: &mut dyn Minimizer, seed: u64) -> ConformerResult {
    let atoms: Vec<usize> = (0..mol.num_atoms())
        .filter(|&a| mol.atom(a).element != element::HYDROGEN)
        .collect();
    let heavy = mol.subgraph(&atoms);
    let ff = ForceField::new(&heavy);
    let mut x = initial_coords(&heavy, &ff, seed);

    for attempt in 1..=MAX_ATTEMPTS {
        let out = minimizer.minimize(&ff, &x, iteration_budget(attempt));
        if out.coords.len() == x.len() && out.coords.iter().all(|v| v.is_finite()) {
            x = out.coords;
        }
        if out.converged {
            return ConformerResult {
                atoms,
                coords: Some(x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()),
                converged: true,
                attempts: attempt,
                fallback_2d: false,
            };
        }
    }
    let flat = layout_2d(&heavy);
    ConformerResult {
        atoms,
        coords: Some(flat.iter().map(|p| [p[0], p[1], 0.0]).collect()),
        converged: false,
        attempts: MAX_ATTEMPTS,
        fallback_2d: true,
    }
}

const K_BOND: f64 = 300.0;
const K_ANGLE: f64 = 80.0;
const K_OOP: f64 = 20.0;
const K_REP: f64 = 10.0;
const REP_14: f64 = 2.6;
const REP_FAR: f64 = 3.2;

#[derive(Clone, Debug)]
struct BondTerm {
    i: usize,
    j: usize,
    r0: f64,
}

#[derive(Clone, Debug)]
struct AngleTerm {
    a: usize,
    c: usize,
    b: usize,
    cos0: f64,
}

#[derive(Clone, Debug)]
struct OopTerm {
    c: usize,
    n: [usize; 3],
}

#[derive(Clone, Debug)]
struct RepTerm {
    i: usize,
    j: usize,
    rmin: f64,
}

/// Generic valence force field over heavy atoms: harmonic bonds, cosine
/// angle bending, sp2 out-of-plane volume and soft non-bonded repulsion.
#[derive(Clone, Debug)]
pub struct ForceField {
    n_atoms: usize,
    bonds: Vec<BondTerm>,
    angles: Vec<AngleTerm>,
    oops: Vec<OopTerm>,
    reps: Vec<RepTerm>,
    topo: DMatrix<usize>,
}

fn bond_length(mol: &Molecule, b: usize) -> f64 {
    let bond = mol.bond(b);
    let base = element::covalent_radius(mol.atom(bond.a).element)
        + element::covalent_radius(mol.atom(bond.b).element);
    base * match bond.order {
        BondOrder::Single => 1.0,
        BondOrder::Aromatic => 0.91,
        BondOrder::Double => 0.87,
        BondOrder::Triple | BondOrder::Quadruple => 0.78,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Hybrid {
    Sp,
    Sp2,
    Sp3,
}

fn hybridization(mol: &Molecule, a: usize) -> Hybrid {
    let orders: Vec<BondOrder> = mol.neighbors(a).iter().map(|(_, b)| mol.bond(*b).order).collect();
    let doubles = orders.iter().filter(|o| **o == BondOrder::Double).count();
    if orders.iter().any(|o| matches!(o, BondOrder::Triple | BondOrder::Quadruple))
        || (doubles == 2 && orders.len() == 2)
    {
        Hybrid::Sp
    } else if orders.len() <= 3 && (doubles == 1 || orders.contains(&BondOrder::Aromatic)) {
        Hybrid::Sp2
    } else {
        Hybrid::Sp3
    }
}

impl ForceField {
    pub fn new(mol: &Molecule) -> Self {
        let n = mol.num_atoms();
        let info = RingInfo::new(mol);
        let topo = topological_distances(mol);
        let bonds = (0..mol.num_bonds())
            .map(|b| BondTerm {
                i: mol.bond(b).a,
                j: mol.bond(b).b,
                r0: bond_length(mol, b),
            })
            .collect();

        let mut angles = Vec::new();
        let mut oops = Vec::new();
        for c in 0..n {
            let nb: Vec<usize> = mol.neighbors(c).iter().map(|(w, _)| *w).collect();
            let hyb = hybridization(mol, c);
            for x in 0..nb.len() {
                for y in x + 1..nb.len() {
                    let (a, b) = (nb[x], nb[y]);
                    let theta0 = if mol.bond_between(a, b).is_some() {
                        60.0
                    } else if small_ring_angle(mol, &info, a, c, b) {
                        90.0
                    } else {
                        match hyb {
                            Hybrid::Sp => 180.0,
                            Hybrid::Sp2 => 120.0,
                            Hybrid::Sp3 => 109.47,
                        }
                    };
                    angles.push(AngleTerm {
                        a,
                        c,
                        b,
                        cos0: f64::to_radians(theta0).cos(),
                    });
                }
            }
            if hyb == Hybrid::Sp2 && nb.len() == 3 {
                oops.push(OopTerm {
                    c,
                    n: [nb[0], nb[1], nb[2]],
                });
            }
        }

        let mut reps = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = topo[(i, j)];
                if d >= 3 {
                    reps.push(RepTerm {
                        i,
                        j,
                        rmin: if d == 3 { REP_14 } else { REP_FAR },
                    });
                }
            }
        }
        ForceField {
            n_atoms: n,
            bonds,
            angles,
            oops,
            reps,
            topo,
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; x.len()];
        self.energy_and_gradient(x, &mut scratch)
    }

    /// Total energy; the gradient is written into `g` (overwritten).
    pub fn energy_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let p = |i: usize| [x[3 * i], x[3 * i + 1], x[3 * i + 2]];
        let add = |g: &mut [f64], i: usize, v: [f64; 3], s: f64| {
            for k in 0..3 {
                g[3 * i + k] += s * v[k];
            }
        };
        let mut e = 0.0;

        for t in &self.bonds {
            let d = sub(p(t.i), p(t.j));
            let r = norm(d).max(1e-12);
            let dr = r - t.r0;
            e += K_BOND * dr * dr;
            let f = 2.0 * K_BOND * dr / r;
            add(g, t.i, d, f);
            add(g, t.j, d, -f);
        }

        for t in &self.angles {
            let u = sub(p(t.a), p(t.c));
            let v = sub(p(t.b), p(t.c));
            let (lu, lv) = (norm(u).max(1e-12), norm(v).max(1e-12));
            let cos = dot(u, v) / (lu * lv);
            let diff = cos - t.cos0;
            e += K_ANGLE * diff * diff;
            let f = 2.0 * K_ANGLE * diff;
            // d cos / du = v/(|u||v|) - cos u/|u|^2
            let du = sub(scale(v, 1.0 / (lu * lv)), scale(u, cos / (lu * lu)));
            let dv = sub(scale(u, 1.0 / (lu * lv)), scale(v, cos / (lv * lv)));
            add(g, t.a, du, f);
            add(g, t.b, dv, f);
            add(g, t.c, du, -f);
            add(g, t.c, dv, -f);
        }

        for t in &self.oops {
            let c = p(t.c);
            let a = sub(p(t.n[0]), c);
            let b = sub(p(t.n[1]), c);
            let d = sub(p(t.n[2]), c);
            let vol = dot(a, cross(b, d));
            e += K_OOP * vol * vol;
            let f = 2.0 * K_OOP * vol;
            let ga = cross(b, d);
            let gb = cross(d, a);
            let gd = cross(a, b);
            add(g, t.n[0], ga, f);
            add(g, t.n[1], gb, f);
            add(g, t.n[2], gd, f);
            add(g, t.c, add3(add3(ga, gb), gd), -f);
        }

        for t in &self.reps {
            let d = sub(p(t.i), p(t.j));
            let r = norm(d).max(1e-12);
            if r < t.rmin {
                let dr = t.rmin - r;
                e += K_REP * dr * dr;
                let f = -2.0 * K_REP * dr / r;
                add(g, t.i, d, f);
                add(g, t.j, d, -f);
            }
        }
        e
    }
}

fn small_ring_angle(mol: &Molecule, info: &RingInfo, a: usize, c: usize, b: usize) -> bool {
    info.rings.iter().any(|r| {
        r.len() == 4 && r.contains(&a) && r.contains(&b) && r.contains(&c)
    }) && mol.bond_between(a, b).is_none()
}

fn topological_distances(mol: &Molecule) -> DMatrix<usize> {
    let n = mol.num_atoms();
    let mut d = DMatrix::from_element(n, n, usize::MAX);
    for s in 0..n {
        d[(s, s)] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in mol.neighbors(v) {
                if d[(s, w)] == usize::MAX {
                    d[(s, w)] = d[(s, v)] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    d
}

/// Classical MDS in 3D on bond/angle-derived target distances, plus seeded
/// jitter so planar targets still leave the optimizer a non-degenerate start.
fn initial_coords(mol: &Molecule, ff: &ForceField, seed: u64) -> Vec<f64> {
    let n = mol.num_atoms();
    if n == 0 {
        return Vec::new();
    }
    let mut target = DMatrix::from_element(n, n, 0.0);
    for i in 0..n {
        for j in 0..n {
            let hops = ff.topo[(i, j)];
            target[(i, j)] = if hops == usize::MAX {
                // separate components: keep them apart
                6.0 + 1.5 * n as f64
            } else {
                match hops {
                    0 => 0.0,
                    1 => mol.bond_between(i, j).map(|b| bond_length(mol, b)).unwrap(),
                    2 => 2.45,
                    h => 1.25 * h as f64 + 0.5,
                }
            };
        }
    }
    let sq = target.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let total = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, c| eig.eigenvalues[*c].total_cmp(&eig.eigenvalues[*a]).then(a.cmp(c)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; 3 * n];
    for (axis, &k) in order.iter().take(3).enumerate() {
        let s = eig.eigenvalues[k].max(0.0).sqrt();
        let col = eig.eigenvectors.column(k);
        let sign = col.iter().find(|v| v.abs() > 1e-9).map(|v| v.signum()).unwrap_or(1.0);
        for i in 0..n {
            x[3 * i + axis] = sign * col[i] * s;
        }
    }
    for v in x.iter_mut() {
        *v += rng.random_range(-0.15..0.15);
    }
    x
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

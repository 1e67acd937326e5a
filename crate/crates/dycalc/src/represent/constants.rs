//! Lower-bound estimates of the testing constants of a discretized kernel.
//!
//! Operator coefficients are normed by their Frobenius norm when a Banach
//! norm on `L(X_1 × ⋯ × X_n, Y)` is needed (the BMO quantities).

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{full_t1_sequence, indicator_array, SioForm};
use crate::haar::HaarIndex;
use crate::lattice::Grid;
use crate::multilinear::MultilinearOp;
use crate::spaces::rbound::r_bound_tight;
use crate::spaces::{RBoundBudget, SpaceDescriptor, Varpi};
use crate::{Error, Result};

/// Largest number of signs enumerated per cube in the BMO estimate.
const MAX_EXACT_SIGNS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzBudget {
    /// Sampled members of the size family and of the Hölder families.
    pub samples: usize,
    pub rbound: RBoundBudget,
    pub bmo_p: f64,
    /// Sign samples per cube when enumeration is too large.
    pub bmo_samples: usize,
}

impl Default for CzBudget {
    fn default() -> Self {
        Self {
            samples: 16,
            rbound: RBoundBudget::default(),
            bmo_p: 2.0,
            bmo_samples: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzConstants {
    /// R-bound estimate of the sampled size family.
    pub size: f64,
    /// R-bound estimate of the sampled Hölder families.
    pub holder: f64,
    /// R-bound estimate of their union.
    pub cz: f64,
    /// R-bound estimate of `{⟨T(1_Q, …, 1_Q), 1_Q⟩/|Q|}` over all cubes.
    pub weak: f64,
    /// `‖T^{m*}1‖_BMO` for `m = 0, …, n`.
    pub bmo: Vec<f64>,
    /// False when some R-bound denominator was only estimated.
    pub certified: bool,
}

fn uniform_point(rng: &mut crate::Rng, grid: &Grid) -> Vec<f64> {
    let h = grid.side(grid.window().l_min);
    let len = grid.cells_per_axis() as f64 * h;
    grid.box_lo()
        .iter()
        .map(|&lo| lo as f64 * h + rng.random_range(0.0..len))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Points `(x, y_1, …, y_n)` as one list, the output point first.
fn eval_points(t: &SioForm, z: &[Vec<f64>]) -> MultilinearOp {
    let ys: Vec<&[f64]> = z[1..].iter().map(Vec::as_slice).collect();
    t.kernel().eval(&z[0], &ys)
}

fn spread(z: &[Vec<f64>]) -> (f64, f64) {
    let dists: Vec<f64> = z[1..]
        .iter()
        .map(|y| norm(&y.iter().zip(&z[0]).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .collect();
    (dists.iter().sum(), dists.iter().copied().fold(0.0, f64::max))
}

/// Sampled members of the size family `(Σ_m |x − y_m|)^{dn} K(x, y)`.
pub fn size_family(t: &SioForm, samples: usize, seed: u64) -> Vec<MultilinearOp> {
    let grid = t.grid();
    let n = t.arity();
    let dn = (grid.dim() * n) as i32;
    let mut rng = crate::rng(seed);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let z: Vec<Vec<f64>> = (0..=n).map(|_| uniform_point(&mut rng, grid)).collect();
        let (s, _) = spread(&z);
        if s > 0.0 {
            out.push(eval_points(t, &z).scaled(s.powi(dn)));
        }
    }
    out
}

/// Sampled members of the Hölder families: one point moved by
/// `|δ| ≤ max_m |x − y_m| / 2`, normalized by `|δ|^{−α}(Σ_m |x − y_m|)^{dn+α}`.
pub fn holder_family(t: &SioForm, samples: usize, seed: u64) -> Vec<MultilinearOp> {
    let grid = t.grid();
    let n = t.arity();
    let d = grid.dim();
    let alpha = t.alpha();
    let mut rng = crate::rng(seed);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let z: Vec<Vec<f64>> = (0..=n).map(|_| uniform_point(&mut rng, grid)).collect();
        let (s, mx) = spread(&z);
        if s == 0.0 {
            continue;
        }
        let slot = rng.random_range(0..=n);
        let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dn = norm(&dir);
        if dn == 0.0 {
            continue;
        }
        let delta = rng.random_range(0.0..=1.0) * mx / 2.0;
        if delta == 0.0 {
            continue;
        }
        let mut w = z.clone();
        for (a, v) in w[slot].iter_mut().zip(&dir) {
            *a += delta * v / dn;
        }
        if w[1..].iter().all(|y| *y == w[0]) {
            continue;
        }
        let mut diff = eval_points(t, &z);
        diff.add_scaled(-1.0, &eval_points(t, &w));
        out.push(diff.scaled(delta.powf(-alpha) * s.powf((d * n) as f64 + alpha)));
    }
    out
}

/// `⟨T(1_Q, …, 1_Q), 1_Q⟩ / |Q|` for every cube of the grid.
pub fn weak_family(t: &SioForm) -> Result<Vec<MultilinearOp>> {
    let grid = t.grid();
    grid.all_cubes()
        .iter()
        .map(|q| {
            let ind = indicator_array(grid, q);
            let op = t.contract(&vec![ind.as_slice(); t.arity() + 1])?;
            Ok(op.scaled(grid.measure(q.level).recip()))
        })
        .collect()
}

/// `sup_{Q_0} (|Q_0|^{-1} E ∫_{Q_0} |Σ_{Q ⊂ Q_0} ε_Q a_Q 1_Q |Q|^{-1/2}|^p)^{1/p}`,
/// `|·|` the Frobenius norm. Exact for `p = 2`; otherwise signs are
/// enumerated up to 16 terms per cube and sampled beyond.
pub fn bmo_norm(grid: &Grid, a: &BTreeMap<HaarIndex, MultilinearOp>, p: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("BMO exponent must be positive, got {p}")));
    }
    let mut best: f64 = 0.0;
    for (qi, q0) in grid.all_cubes().iter().enumerate() {
        let terms: Vec<(&HaarIndex, &MultilinearOp)> = a
            .iter()
            .filter(|(idx, op)| grid.is_subcube(&idx.cube, q0) && !op.is_zero())
            .collect();
        if terms.is_empty() {
            continue;
        }
        let m0 = grid.measure(q0.level);
        let value = if p == 2.0 {
            terms.iter().map(|(_, op)| op.frobenius().powi(2)).sum::<f64>() / m0
        } else {
            let cells = grid.cells_of(q0);
            let w = grid.cell_measure();
            let len = terms[0].1.data().len();
            let members: Vec<Vec<usize>> = terms.iter().map(|(idx, _)| grid.cells_of(&idx.cube)).collect();
            let integral = |signs: &[f64]| -> f64 {
                let mut acc: BTreeMap<usize, Vec<f64>> = cells.iter().map(|&c| (c, vec![0.0; len])).collect();
                for ((idx, op), (cs, s)) in terms.iter().zip(members.iter().zip(signs)) {
                    let c = s / grid.measure(idx.cube.level).sqrt();
                    for cell in cs {
                        for (x, y) in acc.get_mut(cell).expect("inside Q_0").iter_mut().zip(op.data()) {
                            *x += c * y;
                        }
                    }
                }
                acc.values().map(|v| w * norm(v).powf(p)).sum()
            };
            let k = terms.len();
            if k <= MAX_EXACT_SIGNS {
                let total: f64 = (0..1u64 << k)
                    .map(|mask| {
                        let signs: Vec<f64> = (0..k).map(|b| if mask >> b & 1 == 1 { -1.0 } else { 1.0 }).collect();
                        integral(&signs)
                    })
                    .sum();
                total / (1u64 << k) as f64 / m0
            } else {
                let mut rng = crate::rng(crate::derive_seed(seed, qi as u64));
                let total: f64 = (0..samples.max(1))
                    .map(|_| {
                        let signs: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
                        integral(&signs)
                    })
                    .sum();
                total / samples.max(1) as f64 / m0
            }
        };
        best = best.max(value.powf(1.0 / p));
    }
    Ok(best)
}

/// Sampled testing constants of `T`; R-bounds use the spaces
/// `X_1, …, X_n, Y^*` and the best tight partition.
pub fn cz_constants(t: &SioForm, varpi: &Varpi, budget: &CzBudget, seed: u64) -> Result<CzConstants> {
    if budget.samples == 0 {
        return Err(Error::InvalidArgument("budget must allow at least one sample".into()));
    }
    let spaces: Vec<SpaceDescriptor> = t
        .in_spaces()
        .iter()
        .cloned()
        .chain([t.out_space().dual()])
        .collect();
    let size_ops = size_family(t, budget.samples, crate::derive_seed(seed, 0));
    let holder_ops = holder_family(t, budget.samples, crate::derive_seed(seed, 1));
    let union: Vec<MultilinearOp> = size_ops.iter().chain(&holder_ops).cloned().collect();
    let weak_ops = weak_family(t)?;
    let est = |family: &[MultilinearOp], k: u64| r_bound_tight(family, &spaces, varpi, &budget.rbound, crate::derive_seed(seed, k));
    let (size, _) = est(&size_ops, 2)?;
    let (holder, _) = est(&holder_ops, 3)?;
    let (cz, _) = est(&union, 4)?;
    let (weak, _) = est(&weak_ops, 5)?;
    let mut bmo = Vec::with_capacity(t.arity() + 1);
    for m in 0..=t.arity() {
        let frame = if m == 0 { t.clone() } else { t.adjoint(m)? };
        let seq = full_t1_sequence(&frame)?;
        bmo.push(bmo_norm(t.grid(), &seq, budget.bmo_p, budget.bmo_samples, crate::derive_seed(seed, 6 + m as u64))?);
    }
    Ok(CzConstants {
        size: size.value,
        holder: holder.value,
        cz: cz.value,
        weak: weak.value,
        bmo,
        certified: size.certified && holder.certified && cz.certified && weak.certified,
    })
}

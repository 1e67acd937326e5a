//! Averaging the good-cube part of the telescoped form over random shifts.
//!
//! Grids have two roots per axis, so the region `[2^D − 1, 2^{D+1})^d` (in
//! finest units, `D` the window depth) lies inside the box of every shifted
//! grid. Functions supported there are transferred cell by cell.
//!
//! For a cube `Q` at level `l`, `Λ̃(Q)` depends only on the shift bits below
//! `l` and the goodness of `Q` only on the bits from `l` up, so
//!
//! ```text
//! Λ(f) = E_ω Λ(E_top f) + Σ_l P_good(l)^{-1} E_ω Σ_{Q good, ℓ(Q) = 2^l} Λ̃(Q).
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{direct_form, Kernel, SioForm};
use crate::haar::{cond_exp, martingale_diff, GridFunction};
use crate::lattice::{sample_shift_with, Cube, Grid, Omega};
use crate::{Error, Result};

/// Largest number of shift bits enumerated.
pub const MAX_ENUMERATED_BITS: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OmegaMode {
    Enumerate,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaAverage {
    pub direct: f64,
    /// The good-cube average on the right-hand side above.
    pub good_average: f64,
    /// `|good_average − direct| / |direct|` (absolute if `direct = 0`).
    pub residual: f64,
    /// Largest all-cubes reconstruction error over the visited shifts.
    pub all_cubes_residual: f64,
    /// `(level, P_good)` for every level above `l_min`.
    pub p_good: Vec<(i32, f64)>,
    pub samples: usize,
    /// True when every shift was enumerated and `P_good` is exact.
    pub exact: bool,
}

fn transfer(f: &GridFunction, grid: &Arc<Grid>) -> Result<GridFunction> {
    let src = f.grid();
    Ok(GridFunction::from_fn(grid.clone(), f.space().clone(), |cell, out| {
        if let Some(i) = src.cell_index(&grid.cell_corner(cell)) {
            out.copy_from_slice(f.value(i));
        }
    }))
}

/// `Σ_m Λ(E_l f_1, …, E_l f_{m−1}, Δ_Q f_m, E_{l−1} f_{m+1}, …, E_{l−1} f_{n+1})`.
fn local_term(t: &SioForm, q: &Cube, fine: &[GridFunction], coarse: &[GridFunction], f: &[GridFunction]) -> Result<f64> {
    let mut s = 0.0;
    for m in 0..f.len() {
        let diff = martingale_diff(&f[m], q)?;
        if diff.max_abs() == 0.0 {
            continue;
        }
        let args: Vec<&GridFunction> = (0..f.len())
            .map(|j| match j.cmp(&m) {
                std::cmp::Ordering::Less => &coarse[j],
                std::cmp::Ordering::Equal => &diff,
                std::cmp::Ordering::Greater => &fine[j],
            })
            .collect();
        s += direct_form(t, &args)?;
    }
    Ok(s)
}

struct ShiftSums {
    good: Vec<f64>,
    all: Vec<f64>,
    top: f64,
    all_cubes_error: f64,
    good_flags: Vec<bool>,
}

/// Per-level good sums for one shift; `good_flags[k]` is the goodness of the
/// reference cube at level `l_min + 1 + k`.
fn one_shift(kernel: &Arc<dyn Kernel>, omega: Omega, f: &[&GridFunction], gamma: f64, r: u32, refine: usize, direct: f64) -> Result<ShiftSums> {
    let src = f[0].grid();
    let w = src.window();
    let grid = Arc::new(Grid::new(src.dim(), w, omega, 2)?);
    let t = SioForm::new(kernel.clone(), grid.clone(), refine)?;
    let g: Vec<GridFunction> = f.iter().map(|fm| transfer(fm, &grid)).collect::<Result<_>>()?;
    let tops: Vec<GridFunction> = g.iter().map(|gm| cond_exp(gm, w.l_max)).collect::<Result<_>>()?;
    let top = direct_form(&t, &tops.iter().collect::<Vec<_>>())?;
    let mut good = Vec::new();
    let mut all = Vec::new();
    let mut total = top;
    let mut good_flags = Vec::new();
    let anchor = 1i64 << w.depth();
    for level in w.l_min + 1..=w.l_max {
        let coarse: Vec<GridFunction> = g.iter().map(|gm| cond_exp(gm, level)).collect::<Result<_>>()?;
        let fine: Vec<GridFunction> = g.iter().map(|gm| cond_exp(gm, level - 1)).collect::<Result<_>>()?;
        let mut s = 0.0;
        let mut level_total = 0.0;
        for q in grid.cubes_at(level) {
            let v = local_term(&t, &q, &fine, &coarse, &g)?;
            level_total += v;
            if grid.is_good(&q, gamma, r) {
                s += v;
            }
        }
        total += level_total;
        good.push(s);
        all.push(level_total);
        let reference = Cube {
            level,
            corner: grid.offset(level).iter().map(|o| anchor + o).collect(),
        };
        good_flags.push(grid.is_good(&reference, gamma, r));
    }
    Ok(ShiftSums {
        good,
        all,
        top,
        all_cubes_error: (total - direct).abs(),
        good_flags,
    })
}

/// Checks the averaged good-cube identity for `kernel` and `f` (on a grid
/// with two roots per axis and no shift).
pub fn average_over_omega(
    kernel: Arc<dyn Kernel>,
    f: &[&GridFunction],
    gamma: f64,
    r: u32,
    mode: OmegaMode,
    seed: u64,
    refine: usize,
) -> Result<OmegaAverage> {
    let n = kernel.arity();
    if f.len() != n + 1 {
        return Err(Error::InvalidArgument(format!("expected {} functions", n + 1)));
    }
    let src = f[0].grid().clone();
    if f.iter().any(|fm| **fm.grid() != *src) {
        return Err(Error::GridMismatch);
    }
    let w = src.window();
    let d = src.dim();
    if src.roots_per_axis() != 2 || src.omega().bits().iter().flatten().any(|&b| b != 0) {
        return Err(Error::InvalidArgument(
            "functions must live on an unshifted grid with two roots per axis".into(),
        ));
    }
    let lo = (1i64 << w.depth()) - 1;
    let hi = 1i64 << (w.depth() + 1);
    for fm in f {
        for c in fm.support() {
            if src.cell_corner(c).iter().any(|&x| x < lo || x >= hi) {
                return Err(Error::InvalidArgument(format!(
                    "support must lie in [{lo}, {hi})^d finest units"
                )));
            }
        }
    }
    let bits = Omega::num_bits(d, w);
    let shifts: Vec<Omega> = match mode {
        OmegaMode::Enumerate => {
            if bits > MAX_ENUMERATED_BITS {
                return Err(Error::BudgetExceeded(format!(
                    "{bits} shift bits exceed the enumeration limit of {MAX_ENUMERATED_BITS}"
                )));
            }
            (0..1u64 << bits).map(|i| Omega::from_index(d, w, i)).collect()
        }
        OmegaMode::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(Error::InvalidArgument("need at least one sample".into()));
            }
            let mut rng = crate::rng(seed);
            (0..samples).map(|_| sample_shift_with(&mut rng, w, d)).collect()
        }
    };
    let t0 = SioForm::new(kernel.clone(), src.clone(), refine)?;
    let direct = direct_form(&t0, f)?;
    let sums: Vec<ShiftSums> = shifts
        .iter()
        .map(|om| one_shift(&kernel, om.clone(), f, gamma, r, refine, direct))
        .collect::<Result<_>>()?;
    let count = sums.len() as f64;
    let levels = w.depth() as usize;
    let p_good: Vec<f64> = (0..levels)
        .map(|k| sums.iter().filter(|s| s.good_flags[k]).count() as f64 / count)
        .collect();
    let mut good_average = sums.iter().map(|s| s.top).sum::<f64>() / count;
    for (k, p) in p_good.iter().enumerate() {
        if *p > 0.0 {
            good_average += sums.iter().map(|s| s.good[k]).sum::<f64>() / count / p;
        } else if sums.iter().any(|s| s.all[k] != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "no cube at level {} is ever good for γ = {gamma}, r = {r}",
                w.l_min + 1 + k as i32
            )));
        }
    }
    let abs = (good_average - direct).abs();
    Ok(OmegaAverage {
        direct,
        good_average,
        residual: if direct != 0.0 { abs / direct.abs() } else { abs },
        all_cubes_residual: sums.iter().map(|s| s.all_cubes_error).fold(0.0, f64::max),
        p_good: (0..levels).map(|k| (w.l_min + 1 + k as i32, p_good[k])).collect(),
        samples: sums.len(),
        exact: matches!(mode, OmegaMode::Enumerate),
    })
}

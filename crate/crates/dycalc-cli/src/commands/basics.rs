//! `haar-roundtrip` and `bad-probability`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use dycalc::haar::{cancellative_indices, expand, haar_value, reconstruct, GridFunction, HaarIndex};
use dycalc::lattice::{bad_probability_exact, default_gamma, Grid, ScaleWindow};
use dycalc::spaces::SpaceDescriptor;
use dycalc::{derive_seed, Error};

use super::{g, one, scalar, yes};
use crate::config::{Ctx, Result};
use crate::output::Outcome;

/// Largest grid for which the Gram matrix is formed.
const MAX_GRAM_CELLS: usize = 1024;

fn tol_haar() -> f64 {
    1e-12
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HaarParams {
    grid: Grid,
    #[serde(default = "scalar")]
    space: SpaceDescriptor,
    #[serde(default = "one")]
    samples: usize,
    #[serde(default = "yes")]
    gram: bool,
    #[serde(default = "tol_haar")]
    tolerance: f64,
}

fn gram_deviation(grid: &Grid) -> Result<(usize, f64)> {
    if grid.num_cells() > MAX_GRAM_CELLS {
        return Err(Error::BudgetExceeded(format!(
            "Gram matrix limited to {MAX_GRAM_CELLS} cells, grid has {}",
            grid.num_cells()
        ))
        .into());
    }
    let mut idx: Vec<HaarIndex> = grid.roots().into_iter().map(|r| HaarIndex::new(r, 0)).collect();
    idx.extend(cancellative_indices(grid));
    let w = grid.cell_measure();
    let mut worst: f64 = 0.0;
    for (a, ia) in idx.iter().enumerate() {
        for ib in &idx[a..] {
            let expected = if ia == ib { 1.0 } else { 0.0 };
            let v = if grid.intersects(&ia.cube, &ib.cube) {
                let small = if ia.cube.level <= ib.cube.level { &ia.cube } else { &ib.cube };
                grid.cells_of(small)
                    .into_iter()
                    .map(|c| haar_value(grid, ia, c) * haar_value(grid, ib, c))
                    .sum::<f64>()
                    * w
            } else {
                0.0
            };
            worst = worst.max((v - expected).abs());
        }
    }
    Ok((idx.len(), worst))
}

pub fn haar_roundtrip(ctx: &Ctx) -> Result<Outcome> {
    let p: HaarParams = ctx.params()?;
    p.space.validate()?;
    let mut out = Outcome::new(&p)?;
    let grid = Arc::new(p.grid.clone());
    let mut rows = Vec::with_capacity(p.samples);
    let mut worst: f64 = 0.0;
    for s in 0..p.samples {
        let mut rng = dycalc::rng(derive_seed(ctx.seed(), s as u64));
        let f = GridFunction::random(grid.clone(), p.space.clone(), &mut rng);
        let back = reconstruct(&expand(&f)?, &grid, &p.space)?;
        let res = back.max_abs_diff(&f) / f.max_abs().max(1.0);
        worst = worst.max(res);
        rows.push(vec![s.to_string(), g(res)]);
    }
    out.csv("roundtrip.csv", &["sample", "residual"], &rows);
    out.metric("cells", grid.num_cells());
    out.metric("roundtrip_residual", worst);
    out.at_most("roundtrip_residual", worst, p.tolerance);
    if p.gram {
        let (count, dev) = gram_deviation(&grid)?;
        out.metric("haar_functions", count);
        out.metric("gram_deviation", dev);
        out.at_most("gram_deviation", dev, p.tolerance);
    }
    Ok(out)
}

fn default_l_min() -> i32 {
    -8
}

fn default_n() -> usize {
    2
}

fn default_alpha() -> f64 {
    1.0
}

fn default_rs() -> Vec<u32> {
    vec![1, 2, 3, 4, 5]
}

fn default_trials() -> u64 {
    10_000
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BadParams {
    #[serde(default = "one")]
    d: usize,
    #[serde(default = "default_l_min")]
    l_min: i32,
    #[serde(default)]
    l_max: i32,
    /// Arity used by the default `γ`.
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default = "default_rs")]
    r: Vec<u32>,
    #[serde(default = "default_trials")]
    trials: u64,
    /// Enumerate every shift instead of sampling.
    #[serde(default)]
    exact: bool,
}

/// Every `r` reuses one stream of shifts, so the estimates share their noise.
pub fn bad_probability(ctx: &Ctx) -> Result<Outcome> {
    let mut p: BadParams = ctx.params()?;
    if p.d == 0 || p.r.is_empty() {
        return Err(crate::config::schema("need d >= 1 and at least one r"));
    }
    let gamma = *p.gamma.get_or_insert(default_gamma(p.d, p.n, p.alpha));
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(crate::config::schema(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let window = ScaleWindow::new(p.l_min, p.l_max)?;
    let mut out = Outcome::new(&p)?;
    let mut rows = Vec::new();
    let mut est = Vec::new();
    for &r in &p.r {
        let (e, se, trials) = if p.exact {
            (bad_probability_exact(p.d, window, gamma, r)?, 0.0, 1u64 << dycalc::lattice::Omega::num_bits(p.d, window))
        } else {
            let b = dycalc::lattice::bad_probability(p.d, window, gamma, r, p.trials, ctx.seed())?;
            (b.estimate, b.stderr, b.trials)
        };
        rows.push(vec![r.to_string(), g(e), g(se), trials.to_string()]);
        est.push((r, e, se));
    }
    out.csv("bad_probability.csv", &["r", "p_bad", "stderr", "trials"], &rows);
    out.metric("gamma", gamma);
    out.metric(
        "p_bad",
        est.iter().map(|(r, e, se)| serde_json::json!({"r": r, "p_bad": e, "stderr": se})).collect::<Vec<_>>(),
    );
    let (first, last) = (est[0], est[est.len() - 1]);
    if last.0 > first.0 {
        let se = (first.2.powi(2) + last.2.powi(2)).sqrt();
        out.at_most("p_bad_trend", last.1, first.1 + 3.0 * se);
    }
    Ok(out)
}

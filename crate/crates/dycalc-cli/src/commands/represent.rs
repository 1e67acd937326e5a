//! `decompose`, `verify-representation` and `t1-independence`.
//!
//! The decomposition manifest lists every emitted shift with its origin,
//! frame, complexity, cancellative slots, weight and coefficient file, the
//! paraproduct file of every frame, the top-cube operator, and the
//! remainder and residual of every test tuple.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dycalc::haar::{cancellative_indices, GridFunction};
use dycalc::lattice::{default_gamma, Cube, Grid, DEFAULT_R};
use dycalc::model_ops::{ParaproductSpec, ShiftSpec};
use dycalc::multilinear::MultilinearOp;
use dycalc::represent::{
    decompose as run_decompose, direct_form, haar_array, reconstruction_residual, step_four_check, step_three_check,
    t1_pairing, Decomposition, KernelDescriptor, Origin, Residual, ShiftTerm, SioForm,
};
use dycalc::spaces::SpaceDescriptor;
use dycalc::{derive_seed, Error};

use super::{cube_cells, g, header_with, one, outcome_csv, random_tuple, KernelSource};
use crate::config::{schema, Ctx, Result};
use crate::output::Outcome;

fn default_r() -> u32 {
    DEFAULT_R
}

fn tol_reconstruction() -> f64 {
    1e-8
}

fn tol_identity() -> f64 {
    1e-10
}

fn tol_adjoint() -> f64 {
    1e-12
}

fn five() -> usize {
    5
}

fn form(ctx: &Ctx, grid: &Grid, kernel: &KernelSource, refine: usize) -> Result<(KernelDescriptor, SioForm)> {
    let desc = kernel.load(ctx)?;
    let t = SioForm::new(desc.build()?, Arc::new(grid.clone()), refine)?;
    Ok((desc, t))
}

fn test_spaces(t: &SioForm) -> Vec<SpaceDescriptor> {
    t.in_spaces().iter().cloned().chain([t.out_space().clone()]).collect()
}

fn refs(f: &[GridFunction]) -> Vec<&GridFunction> {
    f.iter().collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermEntry {
    origin: Origin,
    frame: usize,
    complexity: Vec<u32>,
    slots: [usize; 2],
    weight: f64,
    coefficients: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    grid: Grid,
    kernel: KernelDescriptor,
    refine: usize,
    n: usize,
    gamma: f64,
    r: u32,
    alpha: f64,
    top_cube: Cube,
    top: MultilinearOp,
    terms: Vec<TermEntry>,
    paraproducts: Vec<String>,
    /// Remainder `⟨T(E_top f), E_top f_{n+1}⟩` of every test tuple.
    remainder: Vec<f64>,
    residuals: Vec<Residual>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecomposeParams {
    grid: Grid,
    kernel: KernelSource,
    #[serde(default = "one")]
    refine: usize,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default = "default_r")]
    r: u32,
    #[serde(default = "one")]
    tuples: usize,
    #[serde(default = "tol_reconstruction")]
    tolerance: f64,
}

pub fn decompose(ctx: &Ctx) -> Result<Outcome> {
    let mut p: DecomposeParams = ctx.params()?;
    let (desc, t) = form(ctx, &p.grid, &p.kernel, p.refine)?;
    let n = t.arity();
    let gamma = *p.gamma.get_or_insert(default_gamma(p.grid.dim(), n, t.alpha()));
    let dec = run_decompose(&t, gamma, p.r)?;
    let mut out = Outcome::new(&p)?;

    let mut terms = Vec::with_capacity(dec.shifts.len());
    for (i, s) in dec.shifts.iter().enumerate() {
        let file = format!("terms/term_{i:04}.json");
        out.json(&file, &s.shift)?;
        terms.push(TermEntry {
            origin: s.origin,
            frame: s.frame,
            complexity: s.shift.complexity().to_vec(),
            slots: s.shift.slots(),
            weight: s.weight,
            coefficients: file,
            count: s.shift.len(),
        });
    }
    let mut paraproducts = Vec::new();
    for (m, pp) in dec.paraproducts.iter().enumerate() {
        let file = format!("paraproducts/frame_{m}.json");
        out.json(&file, pp)?;
        paraproducts.push(file);
    }

    let spaces = test_spaces(&t);
    let mut rows = Vec::new();
    let mut remainder = Vec::new();
    let mut residuals = Vec::new();
    let mut by_origin = None;
    for i in 0..p.tuples {
        let f = random_tuple(t.grid(), &spaces, derive_seed(ctx.seed(), i as u64));
        let v = dec.evaluate(&refs(&f))?;
        let res = reconstruction_residual(&t, &dec, &refs(&f))?;
        rows.push(vec![
            i.to_string(),
            g(res.direct),
            g(v.shifts),
            g(v.paraproduct),
            g(v.remainder),
            g(res.total),
            g(res.abs),
            g(res.rel),
        ]);
        remainder.push(v.remainder);
        residuals.push(res);
        by_origin.get_or_insert(v.by_origin);
    }
    out.csv(
        "residuals.csv",
        &["tuple", "direct", "shifts", "paraproduct", "remainder", "total", "abs", "rel"],
        &rows,
    );
    let manifest = Manifest {
        grid: p.grid.clone(),
        kernel: desc,
        refine: p.refine,
        n,
        gamma,
        r: p.r,
        alpha: dec.alpha,
        top_cube: dec.top_cube.clone(),
        top: dec.top.clone(),
        terms,
        paraproducts,
        remainder,
        residuals: residuals.clone(),
    };
    out.json("manifest.json", &manifest)?;

    let worst = residuals.iter().map(|r| r.rel).fold(0.0, f64::max);
    out.metric("terms", dec.shifts.len());
    out.metric("coefficients", dec.num_coefficients());
    out.metric("max_normalized_far", dec.max_normalized_far());
    out.metric("parts_first_tuple", by_origin);
    out.metric("max_residual", worst);
    out.at_most("max_residual", worst, p.tolerance);
    Ok(out)
}

fn load_manifest(ctx: &Ctx, path: &Path) -> Result<(Manifest, Decomposition)> {
    let m: Manifest = ctx.read_json(path)?;
    let dir = ctx.resolve(path).parent().map(Path::to_path_buf).unwrap_or_default();
    let read = |file: &str| -> Result<Vec<u8>> {
        let full = dir.join(file);
        std::fs::read(&full).map_err(|e| crate::config::CliError::Read {
            path: full,
            msg: e.to_string(),
        })
    };
    let grid = Arc::new(m.grid.clone());
    let mut shifts = Vec::with_capacity(m.terms.len());
    for e in &m.terms {
        let shift: ShiftSpec = serde_json::from_slice(&read(&e.coefficients)?)
            .map_err(|err| schema(format!("{}: {err}", e.coefficients)))?;
        if **shift.grid() != *grid {
            return Err(Error::GridMismatch.into());
        }
        shifts.push(ShiftTerm {
            frame: e.frame,
            origin: e.origin,
            weight: e.weight,
            shift,
        });
    }
    let mut paraproducts = Vec::with_capacity(m.paraproducts.len());
    for file in &m.paraproducts {
        let pp: ParaproductSpec =
            serde_json::from_slice(&read(file)?).map_err(|err| schema(format!("{file}: {err}")))?;
        paraproducts.push(pp);
    }
    if paraproducts.len() != m.n + 1 || shifts.iter().any(|s| s.frame > m.n) {
        return Err(schema("manifest frames do not match its arity"));
    }
    let top = MultilinearOp::new(m.top.in_dims().to_vec(), m.top.out_dim(), m.top.data().to_vec())?;
    let dec = Decomposition {
        grid,
        n: m.n,
        gamma: m.gamma,
        r: m.r,
        alpha: m.alpha,
        shifts,
        paraproducts,
        top,
        top_cube: m.top_cube.clone(),
    };
    Ok((m, dec))
}

/// Largest deviation of `⟨T^{m*}1, h_Q⟩` between the dilation constants, over all frames and cubes.
fn t1_rows(t: &SioForm, cs: &[f64]) -> Result<(Vec<Vec<String>>, f64)> {
    let grid = t.grid().clone();
    let ones = vec![1.0; grid.num_cells()];
    let phi: Vec<&[f64]> = vec![ones.as_slice(); t.arity()];
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for m in 0..=t.arity() {
        let frame = if m == 0 { t.clone() } else { t.adjoint(m)? };
        let vals: Vec<(Vec<String>, f64)> = cancellative_indices(&grid)
            .into_par_iter()
            .map(|idx| {
                let h = haar_array(&grid, &idx);
                let ops = cs
                    .iter()
                    .map(|&c| t1_pairing(&frame, &phi, &h, &idx.cube, c))
                    .collect::<dycalc::Result<Vec<_>>>()?;
                let dev = ops[1..].iter().map(|o| o.max_abs_diff(&ops[0])).fold(0.0, f64::max);
                let mut row = vec![m.to_string()];
                row.extend(cube_cells(&idx.cube));
                row.extend([idx.eta.to_string(), g(ops[0].frobenius()), g(dev)]);
                Ok((row, dev))
            })
            .collect::<dycalc::Result<_>>()?;
        for (row, dev) in vals {
            worst = worst.max(dev);
            rows.push(row);
        }
    }
    Ok((rows, worst))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct T1Params {
    grid: Grid,
    kernel: KernelSource,
    #[serde(default = "one")]
    refine: usize,
    /// Dilation constants; the default is `2√d, 4√d`.
    #[serde(default)]
    c: Option<Vec<f64>>,
    #[serde(default = "tol_identity")]
    tolerance: f64,
}

pub fn t1_independence(ctx: &Ctx) -> Result<Outcome> {
    let mut p: T1Params = ctx.params()?;
    let (_, t) = form(ctx, &p.grid, &p.kernel, p.refine)?;
    let s = (p.grid.dim() as f64).sqrt();
    let cs = p.c.get_or_insert(vec![2.0 * s, 4.0 * s]).clone();
    if cs.len() < 2 {
        return Err(schema("need at least two dilation constants"));
    }
    let mut out = Outcome::new(&p)?;
    let (rows, worst) = t1_rows(&t, &cs)?;
    outcome_csv(
        &mut out,
        "t1.csv",
        header_with(&["frame"], p.grid.dim(), &["eta", "frobenius", "deviation"]),
        &rows,
    );
    out.metric("pairings", rows.len());
    out.metric("max_deviation", worst);
    out.at_most("max_deviation", worst, p.tolerance);
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    /// A manifest written by `decompose`; excludes the fields below it.
    #[serde(default)]
    manifest: Option<PathBuf>,
    #[serde(default)]
    grid: Option<Grid>,
    #[serde(default)]
    kernel: Option<KernelSource>,
    #[serde(default)]
    refine: Option<usize>,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    r: Option<u32>,
    #[serde(default = "five")]
    tuples: usize,
    #[serde(default = "tol_reconstruction")]
    tolerance: f64,
    #[serde(default = "tol_identity")]
    identity_tolerance: f64,
    #[serde(default = "tol_adjoint")]
    adjoint_tolerance: f64,
}

fn rel(dev: f64, scale: f64) -> f64 {
    dev / scale.abs().max(1.0)
}

pub fn verify(ctx: &Ctx) -> Result<Outcome> {
    let mut p: VerifyParams = ctx.params()?;
    let (t, dec) = match &p.manifest {
        Some(path) => {
            if p.grid.is_some() || p.kernel.is_some() || p.refine.is_some() || p.gamma.is_some() || p.r.is_some() {
                return Err(schema("grid, kernel, refine, gamma and r come from the manifest"));
            }
            let (m, dec) = load_manifest(ctx, path)?;
            let t = SioForm::new(m.kernel.build()?, dec.grid.clone(), m.refine)?;
            (t, dec)
        }
        None => {
            let (Some(grid), Some(kernel)) = (&p.grid, &p.kernel) else {
                return Err(schema("need either a manifest or a grid and a kernel"));
            };
            let (_, t) = form(ctx, grid, kernel, *p.refine.get_or_insert(1))?;
            let gamma = *p.gamma.get_or_insert(default_gamma(grid.dim(), t.arity(), t.alpha()));
            let dec = run_decompose(&t, gamma, *p.r.get_or_insert(DEFAULT_R))?;
            (t, dec)
        }
    };
    if dec.n != t.arity() {
        return Err(schema("manifest arity differs from its kernel"));
    }
    let mut out = Outcome::new(&p)?;
    let n = t.arity();
    let spaces = test_spaces(&t);
    let frames: Vec<SioForm> = (0..=n)
        .map(|m| if m == 0 { Ok(t.clone()) } else { t.adjoint(m) })
        .collect::<dycalc::Result<_>>()?;

    let mut rows = Vec::new();
    let (mut recon, mut step4, mut adj, mut invol) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..p.tuples {
        let f = random_tuple(t.grid(), &spaces, derive_seed(ctx.seed(), i as u64));
        let res = reconstruction_residual(&t, &dec, &refs(&f))?;
        let s4 = step_four_check(&t, &refs(&f))?;
        let s4_rel = rel(s4.deviation, s4.paraproduct);
        let mut adj_i: f64 = 0.0;
        for m in 1..=n {
            let mut gm = refs(&f);
            gm.swap(m - 1, n);
            adj_i = adj_i.max(rel((direct_form(&frames[m], &gm)? - res.direct).abs(), res.direct));
            let back = frames[m].adjoint(m)?;
            invol = invol.max(rel((direct_form(&back, &refs(&f))? - res.direct).abs(), res.direct));
        }
        recon = recon.max(res.rel);
        step4 = step4.max(s4_rel);
        adj = adj.max(adj_i);
        rows.push(vec![i.to_string(), g(res.direct), g(res.rel), g(s4_rel), g(adj_i)]);
    }
    out.csv("tuples.csv", &["tuple", "direct", "reconstruction", "step_four", "adjoint_pairing"], &rows);

    let mut step3: f64 = 0.0;
    for frame in &frames {
        let (dev, scale) = step_three_check(frame)?;
        step3 = step3.max(rel(dev, scale));
    }
    let s = (t.grid().dim() as f64).sqrt();
    let (_, t1) = t1_rows(&t, &[2.0 * s, 4.0 * s])?;

    out.metric("terms", dec.shifts.len());
    out.metric("reconstruction", recon);
    out.metric("step_three", step3);
    out.metric("step_four", step4);
    out.metric("t1_c_independence", t1);
    out.metric("adjoint_pairing", adj);
    out.metric("adjoint_involution", invol);
    out.at_most("reconstruction", recon, p.tolerance);
    out.at_most("step_three", step3, p.identity_tolerance);
    out.at_most("step_four", step4, p.identity_tolerance);
    out.at_most("t1_c_independence", t1, p.identity_tolerance);
    out.at_most("adjoint_pairing", adj, p.adjoint_tolerance);
    out.at_most("adjoint_involution", invol, p.adjoint_tolerance);
    Ok(out)
}


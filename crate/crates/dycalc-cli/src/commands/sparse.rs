//! `sparse-stopping`, `sparse-form` and `rm-maximal`.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use dycalc::haar::{write_grid_function, Encoding, GridFunction};
use dycalc::lattice::{Cube, Grid};
use dycalc::rmf::{rm_maximal as run_rm, rmf_lp_estimate, RmConfig};
use dycalc::sparse::{build_stopping, sparse_form_rows, verify_sparse};
use dycalc::spaces::SpaceDescriptor;
use dycalc::{derive_seed, Error};

use super::{cube_cells, g, header_with, outcome_csv, random_tuple};
use crate::config::{schema, Ctx, Result};
use crate::output::Outcome;

fn two_scalars() -> Vec<SpaceDescriptor> {
    vec![SpaceDescriptor::Scalar; 2]
}

fn three_scalars() -> Vec<SpaceDescriptor> {
    vec![SpaceDescriptor::Scalar; 3]
}

fn hundred() -> usize {
    100
}

fn half() -> f64 {
    0.5
}

fn top_cube(grid: &Grid, top: &Option<Cube>) -> Result<Cube> {
    let q = top.clone().unwrap_or_else(|| grid.roots()[0].clone());
    if !grid.contains_cube(&q) {
        return Err(Error::NotInGrid.into());
    }
    Ok(q)
}

fn default_tail() -> Option<f64> {
    Some(1.2)
}

/// Random functions on `spaces`, zeroed outside `top`.
///
/// With a `tail` exponent `a`, entries are `±u^{-1/a}` for uniform `u`, so
/// large local averages (and hence stopping cubes) are common.
fn supported_tuple(
    grid: &Arc<Grid>,
    spaces: &[SpaceDescriptor],
    top: &Cube,
    tail: Option<f64>,
    seed: u64,
) -> Vec<GridFunction> {
    let inside: BTreeSet<usize> = grid.cells_of(top).into_iter().collect();
    let mut rng = dycalc::rng(seed);
    let mut f = match tail {
        None => random_tuple(grid, spaces, derive_seed(seed, 0)),
        Some(a) => spaces
            .iter()
            .map(|s| {
                GridFunction::from_fn(grid.clone(), s.clone(), |_, out| {
                    for x in out {
                        let u: f64 = 1.0 - rng.random::<f64>();
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        *x = sign * u.powf(-1.0 / a);
                    }
                })
            })
            .collect(),
    };
    for g in &mut f {
        for c in 0..grid.num_cells() {
            if !inside.contains(&c) {
                g.value_mut(c).fill(0.0);
            }
        }
    }
    f
}

fn check_tail(tail: Option<f64>) -> Result<()> {
    match tail {
        Some(a) if !(a > 0.0 && a.is_finite()) => Err(schema(format!("tail exponent must be positive, got {a}"))),
        _ => Ok(()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoppingParams {
    grid: Grid,
    #[serde(default = "two_scalars")]
    spaces: Vec<SpaceDescriptor>,
    #[serde(default = "hundred")]
    tuples: usize,
    #[serde(default)]
    top: Option<Cube>,
    /// Tail exponent of the random entries; `null` draws them uniformly from `[-1, 1]`.
    #[serde(default = "default_tail")]
    tail: Option<f64>,
}

pub fn stopping(ctx: &Ctx) -> Result<Outcome> {
    let mut p: StoppingParams = ctx.params()?;
    if p.spaces.is_empty() {
        return Err(schema("need at least one space"));
    }
    for s in &p.spaces {
        s.validate()?;
    }
    check_tail(p.tail)?;
    let top = top_cube(&p.grid, &p.top)?;
    p.top = Some(top.clone());
    let grid = Arc::new(p.grid.clone());
    let mut out = Outcome::new(&p)?;
    let bound = 2f64.powi(grid.dim() as i32) * 2.0 * p.spaces.len() as f64;
    let mut rows = Vec::new();
    let mut all_sparse = true;
    let mut worst: f64 = 0.0;
    let mut cubes = 0usize;
    for i in 0..p.tuples {
        let f = supported_tuple(&grid, &p.spaces, &top, p.tail, derive_seed(ctx.seed(), i as u64));
        let st = build_stopping(&f.iter().collect::<Vec<_>>(), &top)?;
        all_sparse &= st.is_sparse(&grid);
        worst = worst.max(st.linf_ratio());
        cubes += st.children.len();
        for (s, ch) in &st.children {
            let inner: usize = ch.iter().map(|c| grid.cells_of(c).len()).sum();
            let mut row = vec![i.to_string()];
            row.extend(cube_cells(s));
            row.extend([grid.cells_of(s).len().to_string(), inner.to_string(), ch.len().to_string()]);
            rows.push(row);
        }
    }
    outcome_csv(
        &mut out,
        "stopping.csv",
        header_with(&["tuple"], grid.dim(), &["cells", "children_cells", "children"]),
        &rows,
    );
    out.metric("stopping_cubes", cubes);
    out.metric("max_linf_ratio", worst);
    out.metric("linf_bound", bound);
    out.holds("children_measure_at_most_half", all_sparse);
    out.at_most("max_linf_ratio", worst, bound * (1.0 + 1e-12));
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CubeSource {
    /// Stopping cubes of the random functions under the top cube.
    Stopping,
    /// Every cube of the grid.
    All,
    List(Vec<Cube>),
}

fn stopping_source() -> CubeSource {
    CubeSource::Stopping
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormParams {
    grid: Grid,
    #[serde(default = "three_scalars")]
    spaces: Vec<SpaceDescriptor>,
    #[serde(default = "stopping_source")]
    cubes: CubeSource,
    #[serde(default)]
    top: Option<Cube>,
    #[serde(default = "half")]
    eta: f64,
    #[serde(default = "default_tail")]
    tail: Option<f64>,
}

pub fn form(ctx: &Ctx) -> Result<Outcome> {
    let mut p: FormParams = ctx.params()?;
    if p.spaces.is_empty() {
        return Err(schema("need at least one space"));
    }
    for s in &p.spaces {
        s.validate()?;
    }
    check_tail(p.tail)?;
    if !(p.eta > 0.0 && p.eta <= 1.0) {
        return Err(schema(format!("eta must lie in (0, 1], got {}", p.eta)));
    }
    let grid = Arc::new(p.grid.clone());
    let top = top_cube(&grid, &p.top)?;
    p.top = Some(top.clone());
    let f = supported_tuple(&grid, &p.spaces, &top, p.tail, ctx.seed());
    let fr: Vec<&GridFunction> = f.iter().collect();
    let cubes = match &p.cubes {
        CubeSource::Stopping => build_stopping(&fr, &top)?.collection.cubes,
        CubeSource::All => grid.all_cubes(),
        CubeSource::List(cs) => cs.clone(),
    };
    let (sparse, coll) = verify_sparse(&grid, &cubes, p.eta)?;
    let rows = sparse_form_rows(&coll.cubes, &fr)?;
    let mut out = Outcome::new(&p)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = cube_cells(&r.cube);
            row.extend([g(r.measure), g(r.product), g(r.measure * r.product)]);
            row
        })
        .collect();
    outcome_csv(&mut out, "sparse_form.csv", header_with(&[], grid.dim(), &["measure", "product", "term"]), &csv);
    out.json("collection.json", &coll)?;
    out.metric("cubes", rows.len());
    out.metric("sparse_form", rows.iter().map(|r| r.measure * r.product).sum::<f64>());
    out.holds("sparse", sparse);
    Ok(out)
}

fn f64le() -> Encoding {
    Encoding::F64le
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RmParams {
    grid: Grid,
    rm: RmConfig,
    #[serde(default)]
    family: Option<Vec<Cube>>,
    #[serde(default = "f64le")]
    encoding: Encoding,
    /// Random trials of the `L^p` bound estimate; 0 skips it.
    #[serde(default)]
    trials: usize,
}

pub fn rm_maximal(ctx: &Ctx) -> Result<Outcome> {
    let p: RmParams = ctx.params()?;
    p.rm.validate()?;
    let grid = Arc::new(p.grid.clone());
    let spaces: Vec<SpaceDescriptor> = p.rm.j_set.iter().map(|&j| p.rm.spaces[j].clone()).collect();
    let f = random_tuple(&grid, &spaces, derive_seed(ctx.seed(), 0));
    let fr: Vec<&GridFunction> = f.iter().collect();
    let m = run_rm(&fr, &p.rm, p.family.as_deref(), derive_seed(ctx.seed(), 1))?;
    let mut out = Outcome::new(&p)?;
    let mut bytes = Vec::new();
    write_grid_function(&mut bytes, &m.values, p.encoding, Some(m.metadata(&p.rm.budget)))?;
    out.files.insert("maximal.dgf".into(), bytes);
    let rows: Vec<Vec<String>> = (0..grid.num_cells())
        .map(|c| {
            let mut row = vec![c.to_string()];
            row.extend(grid.cell_center(c).into_iter().map(g));
            row.push(g(m.values.data()[c]));
            row
        })
        .collect();
    let header: Vec<String> = std::iter::once("cell".to_string())
        .chain((0..grid.dim()).map(|a| format!("x_{a}")))
        .chain(["value".to_string()])
        .collect();
    outcome_csv(&mut out, "maximal.csv", header, &rows);
    let q = p.rm.target_exponent();
    let den: f64 = f.iter().zip(&p.rm.j_set).map(|(fj, &j)| fj.lp_norm(p.rm.exponents[j])).product();
    let norm = m.values.lp_norm(q);
    out.metric("exact", m.exact);
    out.metric("max", m.values.max_abs());
    out.metric("lp_norm", norm);
    out.metric("ratio", if den > 0.0 { norm / den } else { 0.0 });
    if p.trials > 0 {
        let e = rmf_lp_estimate(&p.rm, &grid, p.trials, derive_seed(ctx.seed(), 2))?;
        out.metric("lp_bound_estimate", e.value);
    }
    Ok(out)
}

//! `multiparam-check` and `lift-check`.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use dycalc::derive_seed;
use dycalc::haar::GridFunction;
use dycalc::lattice::Grid;
use dycalc::model_ops::{
    apply_multiparam_shift, apply_shift, iterate_view, lift_shift_family, rad2_component, rad2_space, shift_form,
    MultiParamShiftSpec, ProductFunction, ShiftSpec,
};
use dycalc::spaces::SpaceDescriptor;

use super::{g, scalar};
use crate::config::{schema, Ctx, Result};
use crate::output::Outcome;

fn tol() -> f64 {
    1e-12
}

fn twenty() -> usize {
    20
}

fn std_grid(l_min: i32) -> Grid {
    Grid::standard(1, l_min, 0, 1).expect("valid window")
}

fn default_grids() -> Vec<Grid> {
    vec![std_grid(-3), std_grid(-2)]
}

fn default_mp_slots() -> Vec<[usize; 2]> {
    vec![[1, 3], [2, 3]]
}

fn two_scalars() -> Vec<SpaceDescriptor> {
    vec![SpaceDescriptor::Scalar; 2]
}

fn five() -> usize {
    5
}

fn default_exponents() -> Vec<f64> {
    vec![4.0, 4.0, 2.0]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiparamParams {
    #[serde(default = "default_grids")]
    grids: Vec<Grid>,
    /// `complexity[j][i]`; drawn from `{0, 1}` per entry when absent.
    #[serde(default)]
    complexity: Option<Vec<Vec<u32>>>,
    #[serde(default = "default_mp_slots")]
    slots: Vec<[usize; 2]>,
    #[serde(default = "two_scalars")]
    in_spaces: Vec<SpaceDescriptor>,
    #[serde(default = "scalar")]
    out_space: SpaceDescriptor,
    #[serde(default = "five")]
    keys: usize,
    #[serde(default = "twenty")]
    specs: usize,
    /// Exponents of the iterated view, output last.
    #[serde(default = "default_exponents")]
    exponents: Vec<f64>,
    #[serde(default = "tol")]
    tolerance: f64,
}

/// Applies every spec directly and as a one-parameter shift with Bochner-valued coefficients.
pub fn multiparam_check(ctx: &Ctx) -> Result<Outcome> {
    let p: MultiparamParams = ctx.params()?;
    let grids: Vec<Arc<Grid>> = p.grids.iter().cloned().map(Arc::new).collect();
    let n = p.in_spaces.len();
    if p.exponents.len() != n + 1 {
        return Err(schema(format!("need {} exponents", n + 1)));
    }
    let mut out = Outcome::new(&p)?;
    let mut rows = Vec::with_capacity(p.specs);
    let mut worst: f64 = 0.0;
    for i in 0..p.specs {
        let mut rng = dycalc::rng(derive_seed(ctx.seed(), i as u64));
        let k = match &p.complexity {
            Some(k) => k.clone(),
            None => (0..=n)
                .map(|_| (0..grids.len()).map(|_| rng.random_range(0..=1)).collect())
                .collect(),
        };
        let spec = MultiParamShiftSpec::random(
            grids.clone(),
            k,
            p.slots.clone(),
            p.in_spaces.clone(),
            p.out_space.clone(),
            p.keys,
            &mut rng,
        )?;
        let f: Vec<ProductFunction> = p
            .in_spaces
            .iter()
            .map(|s| ProductFunction::random(grids.clone(), s.clone(), &mut rng))
            .collect();
        let direct = apply_multiparam_shift(&spec, &f.iter().collect::<Vec<_>>())?;
        let view = iterate_view(&spec, &p.exponents)?;
        let vf: Vec<GridFunction> = f
            .iter()
            .zip(&p.exponents)
            .map(|(x, &q)| x.to_view(q))
            .collect::<dycalc::Result<_>>()?;
        let nested = apply_shift(&view, &vf.iter().collect::<Vec<_>>())?;
        let back = ProductFunction::from_view(&nested, &grids[1..], p.out_space.clone())?;
        let dev = direct.max_abs_diff(&back) / direct.max_abs().max(1.0);
        worst = worst.max(dev);
        rows.push(vec![i.to_string(), spec.coeffs().len().to_string(), g(direct.max_abs()), g(dev)]);
    }
    out.csv("multiparam.csv", &["spec", "keys", "max_abs", "deviation"], &rows);
    out.metric("max_deviation", worst);
    out.at_most("max_deviation", worst, p.tolerance);
    Ok(out)
}

fn default_grid() -> Grid {
    std_grid(-3)
}

fn default_ns() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_complexity() -> Vec<u32> {
    vec![1, 0, 1]
}

fn default_slots() -> [usize; 2] {
    [1, 3]
}

fn three() -> usize {
    3
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftParams {
    #[serde(default = "default_grid")]
    grid: Grid,
    #[serde(default = "scalar")]
    space: SpaceDescriptor,
    #[serde(default = "default_ns")]
    n_values: Vec<usize>,
    #[serde(default = "twenty")]
    seeds: usize,
    #[serde(default = "default_complexity")]
    complexity: Vec<u32>,
    #[serde(default = "default_slots")]
    slots: [usize; 2],
    #[serde(default = "three")]
    keys: usize,
    #[serde(default = "tol")]
    tolerance: f64,
}

/// `Σ_{t,u,v} ε_{tuv} ⟨S_{tuv}(f_{tu}, g_{uv}), h_{tv}⟩` against the lifted bilinear shift.
fn lift_sides(p: &LiftParams, grid: &Arc<Grid>, n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = dycalc::rng(seed);
    let shifts = (0..n * n * n)
        .map(|_| {
            ShiftSpec::random(
                grid.clone(),
                p.complexity.clone(),
                p.slots,
                vec![p.space.clone(); 2],
                p.space.clone(),
                p.keys,
                &mut rng,
            )
        })
        .collect::<dycalc::Result<Vec<_>>>()?;
    let eps: Vec<f64> = (0..n * n * n)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let lifted = lift_shift_family(&shifts, &eps, n)?;
    let big = rad2_space(&p.space, n);
    let f: Vec<GridFunction> = (0..3)
        .map(|_| GridFunction::random(grid.clone(), big.clone(), &mut rng))
        .collect();
    let rhs = shift_form(&lifted, &[&f[0], &f[1]], &f[2])?;
    let comp = |i: usize, l: usize, m: usize| rad2_component(&f[i], &p.space, n, l, m);
    let mut lhs = 0.0;
    for t in 0..n {
        for u in 0..n {
            for v in 0..n {
                let idx = (t * n + u) * n + v;
                lhs += eps[idx] * shift_form(&shifts[idx], &[&comp(0, t, u)?, &comp(1, u, v)?], &comp(2, t, v)?)?;
            }
        }
    }
    Ok((lhs, rhs))
}

pub fn lift_check(ctx: &Ctx) -> Result<Outcome> {
    let p: LiftParams = ctx.params()?;
    p.space.validate()?;
    if p.complexity.len() != 3 {
        return Err(schema("the lift acts on bilinear shifts: complexity needs 3 entries"));
    }
    let grid = Arc::new(p.grid.clone());
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &n in &p.n_values {
        for s in 0..p.seeds {
            let seed = derive_seed(derive_seed(ctx.seed(), n as u64), s as u64);
            let (lhs, rhs) = lift_sides(&p, &grid, n, seed)?;
            let dev = (lhs - rhs).abs() / (1.0 + lhs.abs());
            worst = worst.max(dev);
            rows.push(vec![n.to_string(), s.to_string(), g(lhs), g(rhs), g(dev)]);
        }
    }
    let mut out = Outcome::new(&p)?;
    out.csv("lift.csv", &["n", "seed", "signed_sum", "lifted", "deviation"], &rows);
    out.metric("max_deviation", worst);
    out.at_most("max_deviation", worst, p.tolerance);
    Ok(out)
}

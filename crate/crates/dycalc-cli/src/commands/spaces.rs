//! `rad-norm`, `r-bound` and `rhat-bound`.

use std::path::PathBuf;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use dycalc::derive_seed;
use dycalc::multilinear::MultilinearOp;
use dycalc::spaces::rademacher::contraction_check;
use dycalc::spaces::rbound::r_bound_tight;
use dycalc::spaces::{r_bound as run_r_bound, rad_norm as run_rad, rhat_bound as run_rhat};
use dycalc::spaces::{Partition, RBoundBudget, RadMode, SpaceDescriptor, Varpi};

use crate::config::{schema, Ctx, Result};
use crate::output::Outcome;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RadChoice {
    Exact,
    MonteCarlo { samples: usize },
    Auto { samples: usize },
}

fn auto() -> RadChoice {
    RadChoice::Auto { samples: 4096 }
}

fn four() -> usize {
    4
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadParams {
    space: SpaceDescriptor,
    /// Explicit sequence; when absent `count` random vectors are drawn.
    #[serde(default)]
    vectors: Option<Vec<Vec<f64>>>,
    #[serde(default = "four")]
    count: usize,
    #[serde(default = "auto")]
    mode: RadChoice,
    /// Random coefficient vectors `|a_k| ≤ 1` for the contraction check.
    #[serde(default)]
    contraction_trials: usize,
}

fn uniform_vectors(rng: &mut dycalc::Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

pub fn rad_norm(ctx: &Ctx) -> Result<Outcome> {
    let p: RadParams = ctx.params()?;
    p.space.validate()?;
    let mut rng = dycalc::rng(derive_seed(ctx.seed(), 0));
    let xs = match &p.vectors {
        Some(v) => v.clone(),
        None => uniform_vectors(&mut rng, p.count, p.space.dim()),
    };
    let mc_seed = derive_seed(ctx.seed(), 1);
    let mode = match p.mode {
        RadChoice::Exact => RadMode::Exact,
        RadChoice::MonteCarlo { samples } => RadMode::MonteCarlo { samples, seed: mc_seed },
        RadChoice::Auto { samples } => RadMode::Auto { samples, seed: mc_seed },
    };
    let est = run_rad(&p.space, &xs, mode)?;
    let mut out = Outcome::new(&p)?;
    out.metric("terms", xs.len());
    out.metric("value", est.value);
    out.metric("stderr", est.stderr);
    out.metric("exact", est.exact);
    if p.contraction_trials > 0 {
        let mut ok = true;
        for _ in 0..p.contraction_trials {
            let a: Vec<f64> = (0..xs.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            ok &= contraction_check(&p.space, &xs, &a)?;
        }
        out.holds("contraction", ok);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FamilySource {
    Ops(Vec<MultilinearOp>),
    Random { count: usize },
    File(PathBuf),
}

impl FamilySource {
    fn load(&self, ctx: &Ctx, spaces: &[SpaceDescriptor]) -> Result<Vec<MultilinearOp>> {
        let raw = match self {
            FamilySource::Ops(ops) => ops.clone(),
            FamilySource::File(path) => ctx.read_json::<Vec<MultilinearOp>>(path)?,
            FamilySource::Random { count } => {
                let n = spaces.len() - 1;
                let dims: Vec<usize> = spaces[..n].iter().map(SpaceDescriptor::dim).collect();
                let mut rng = dycalc::rng(derive_seed(ctx.seed(), 0));
                return Ok((0..*count)
                    .map(|_| MultilinearOp::random(&mut rng, dims.clone(), spaces[n].dim()))
                    .collect());
            }
        };
        // Re-validate shapes that deserialization does not check.
        raw.iter()
            .map(|o| MultilinearOp::new(o.in_dims().to_vec(), o.out_dim(), o.data().to_vec()).map_err(Into::into))
            .collect()
    }
}

fn product() -> Varpi {
    Varpi::Product
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RBoundParams {
    /// `X_1, …, X_n` and the space paired with the output, last.
    spaces: Vec<SpaceDescriptor>,
    #[serde(default = "product")]
    varpi: Varpi,
    family: FamilySource,
    /// A single partition; by default the best tight partition is reported.
    #[serde(default)]
    partition: Option<Partition>,
    #[serde(default)]
    budget: RBoundBudget,
}

fn check_spaces(spaces: &[SpaceDescriptor]) -> Result<()> {
    if spaces.len() < 2 {
        return Err(schema("need at least two spaces"));
    }
    for s in spaces {
        s.validate()?;
    }
    Ok(())
}

pub fn r_bound(ctx: &Ctx) -> Result<Outcome> {
    let p: RBoundParams = ctx.params()?;
    check_spaces(&p.spaces)?;
    let family = p.family.load(ctx, &p.spaces)?;
    let seed = derive_seed(ctx.seed(), 1);
    let mut out = Outcome::new(&p)?;
    out.metric("family_size", family.len());
    match &p.partition {
        Some(part) => {
            let e = run_r_bound(&family, &p.spaces, &p.varpi, part, &p.budget, seed)?;
            out.metric("value", e.value);
            out.metric("certified", e.certified);
            out.metric("witness", &e.witness);
        }
        None => {
            let (best, all) = r_bound_tight(&family, &p.spaces, &p.varpi, &p.budget, seed)?;
            out.metric("value", best.value);
            out.metric("certified", best.certified);
            out.metric("witness", &best.witness);
            out.metric(
                "partitions",
                all.iter()
                    .map(|(part, e)| serde_json::json!({"partition": part, "value": e.value}))
                    .collect::<Vec<_>>(),
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RhatParams {
    spaces: Vec<SpaceDescriptor>,
    family: FamilySource,
    #[serde(default)]
    budget: RBoundBudget,
}

pub fn rhat_bound(ctx: &Ctx) -> Result<Outcome> {
    let p: RhatParams = ctx.params()?;
    check_spaces(&p.spaces)?;
    if p.spaces.len() != 3 {
        return Err(schema("R-hat bounds need exactly three spaces"));
    }
    let family = p.family.load(ctx, &p.spaces)?;
    let seed = derive_seed(ctx.seed(), 1);
    let (rhat, witness) = run_rhat(&family, &p.spaces, &p.budget, seed)?;
    let (r, _) = r_bound_tight(&family, &p.spaces, &Varpi::Product, &p.budget, seed)?;
    let mut out = Outcome::new(&p)?;
    out.metric("family_size", family.len());
    out.metric("rhat", rhat);
    out.metric("r_bound", r.value);
    out.metric("witness", &witness);
    out.at_least("rhat", rhat, r.value);
    Ok(out)
}

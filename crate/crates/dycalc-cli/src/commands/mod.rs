//! One function per experiment command.

mod basics;
mod model_ops;
mod represent;
mod spaces;
mod sparse;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use dycalc::haar::GridFunction;
use dycalc::lattice::{Cube, Grid};
use dycalc::represent::KernelDescriptor;
use dycalc::spaces::SpaceDescriptor;

use crate::config::{Command, Ctx, Result};
use crate::output::{fmt_g17, Outcome, Report};

pub fn run(ctx: &Ctx) -> Result<(Report, BTreeMap<String, Vec<u8>>)> {
    let outcome = match ctx.config.command {
        Command::HaarRoundtrip => basics::haar_roundtrip(ctx)?,
        Command::BadProbability => basics::bad_probability(ctx)?,
        Command::Decompose => represent::decompose(ctx)?,
        Command::VerifyRepresentation => represent::verify(ctx)?,
        Command::T1Independence => represent::t1_independence(ctx)?,
        Command::SparseStopping => sparse::stopping(ctx)?,
        Command::SparseForm => sparse::form(ctx)?,
        Command::RmMaximal => sparse::rm_maximal(ctx)?,
        Command::RadNorm => spaces::rad_norm(ctx)?,
        Command::RBound => spaces::r_bound(ctx)?,
        Command::RhatBound => spaces::rhat_bound(ctx)?,
        Command::MultiparamCheck => model_ops::multiparam_check(ctx)?,
        Command::LiftCheck => model_ops::lift_check(ctx)?,
    };
    Ok(Report::new(ctx.config.command, ctx.seed(), outcome))
}

/// A kernel given inline or as `{"file": path}`.
#[derive(Clone, Debug)]
pub enum KernelSource {
    Inline(KernelDescriptor),
    File(PathBuf),
}

impl KernelSource {
    pub fn load(&self, ctx: &Ctx) -> Result<KernelDescriptor> {
        match self {
            KernelSource::Inline(k) => Ok(k.clone()),
            KernelSource::File(p) => ctx.read_json(p),
        }
    }
}

impl<'de> Deserialize<'de> for KernelSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if let Some(obj) = v.as_object() {
            if obj.len() == 1 {
                if let Some(Value::String(p)) = obj.get("file") {
                    return Ok(KernelSource::File(p.into()));
                }
            }
        }
        KernelDescriptor::deserialize(v)
            .map(KernelSource::Inline)
            .map_err(serde::de::Error::custom)
    }
}

impl Serialize for KernelSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KernelSource::Inline(k) => k.serialize(s),
            KernelSource::File(p) => serde_json::json!({ "file": p }).serialize(s),
        }
    }
}

pub(crate) fn scalar() -> SpaceDescriptor {
    SpaceDescriptor::Scalar
}

pub(crate) fn one() -> usize {
    1
}

pub(crate) fn yes() -> bool {
    true
}

/// One random function per space, all drawn from `seed`.
pub(crate) fn random_tuple(grid: &Arc<Grid>, spaces: &[SpaceDescriptor], seed: u64) -> Vec<GridFunction> {
    let mut rng = dycalc::rng(seed);
    spaces
        .iter()
        .map(|s| GridFunction::random(grid.clone(), s.clone(), &mut rng))
        .collect()
}

pub(crate) fn g(x: f64) -> String {
    fmt_g17(x)
}

/// `level, corner_0, …, corner_{d−1}` cells of a CSV row.
pub(crate) fn cube_cells(q: &Cube) -> Vec<String> {
    std::iter::once(q.level.to_string())
        .chain(q.corner.iter().map(|c| c.to_string()))
        .collect()
}

pub(crate) fn cube_header(d: usize) -> Vec<String> {
    std::iter::once("level".to_string())
        .chain((0..d).map(|a| format!("corner_{a}")))
        .collect()
}

pub(crate) fn header_with(prefix: &[&str], d: usize, suffix: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain(cube_header(d))
        .chain(suffix.iter().map(|s| s.to_string()))
        .collect()
}

pub(crate) fn outcome_csv(out: &mut Outcome, name: &str, header: Vec<String>, rows: &[Vec<String>]) {
    out.files.insert(name.into(), crate::output::csv_bytes(&header, rows));
}

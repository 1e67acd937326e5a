//! Rademacher norms, the contraction principle and RM norms.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{SpaceDescriptor, Varpi};
use crate::{Error, Result};

/// Largest sequence length evaluated by full sign enumeration.
pub const MAX_EXACT_LEN: usize = 16;

/// Default number of Monte-Carlo sign samples.
pub const DEFAULT_SAMPLES: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RadMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
    /// Exact when the sequence is short enough, Monte-Carlo otherwise.
    Auto { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadEstimate {
    pub value: f64,
    pub stderr: f64,
    pub exact: bool,
}

fn signed_sum<T: AsRef<[f64]>>(xs: &[T], signs: impl Fn(usize) -> f64, dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; dim];
    for (k, x) in xs.iter().enumerate() {
        let e = signs(k);
        for (a, b) in s.iter_mut().zip(x.as_ref()) {
            *a += e * b;
        }
    }
    s
}

/// `(E‖Σ ε_k x_k‖^power)^{1/power}` for `power ∈ {1, 2}`.
pub fn rad_moment<T: AsRef<[f64]>>(
    space: &SpaceDescriptor,
    xs: &[T],
    power: u32,
    mode: RadMode,
) -> Result<RadEstimate> {
    if power != 1 && power != 2 {
        return Err(Error::InvalidArgument(format!("power must be 1 or 2, got {power}")));
    }
    let dim = space.dim();
    if xs.iter().any(|x| x.as_ref().len() != dim) {
        return Err(Error::SpaceMismatch("vector length differs from space dimension".into()));
    }
    let k = xs.len();
    if k == 0 {
        return Ok(RadEstimate {
            value: 0.0,
            stderr: 0.0,
            exact: true,
        });
    }
    if power == 2 && space.is_hilbert() {
        let s: f64 = xs.iter().map(|x| space.norm(x.as_ref()).powi(2)).sum();
        return Ok(RadEstimate {
            value: s.sqrt(),
            stderr: 0.0,
            exact: true,
        });
    }
    let exact = match mode {
        RadMode::Exact => {
            if k > MAX_EXACT_LEN {
                return Err(Error::BudgetExceeded(format!(
                    "exact Rademacher enumeration limited to {MAX_EXACT_LEN} terms, got {k}"
                )));
            }
            true
        }
        RadMode::Auto { .. } => k <= MAX_EXACT_LEN,
        RadMode::MonteCarlo { .. } => false,
    };
    if exact {
        // ε_0 = +1 by symmetry of the norm.
        let patterns = 1u64 << (k - 1);
        let mut acc = 0.0;
        for bits in 0..patterns {
            let s = signed_sum(
                xs,
                |i| {
                    if i > 0 && (bits >> (i - 1)) & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                },
                dim,
            );
            acc += space.norm(&s).powi(power as i32);
        }
        let m = acc / patterns as f64;
        return Ok(RadEstimate {
            value: if power == 2 { m.sqrt() } else { m },
            stderr: 0.0,
            exact: true,
        });
    }
    let (samples, seed) = match mode {
        RadMode::MonteCarlo { samples, seed } | RadMode::Auto { samples, seed } => (samples, seed),
        RadMode::Exact => unreachable!(),
    };
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = crate::rng(seed);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut signs = vec![0.0; k];
    for _ in 0..samples {
        for e in signs.iter_mut() {
            *e = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        let s = signed_sum(xs, |i| signs[i], dim);
        let v = space.norm(&s).powi(power as i32);
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let se_mean = (var / n).sqrt();
    Ok(if power == 2 {
        let value = mean.sqrt();
        RadEstimate {
            value,
            stderr: if value > 0.0 { se_mean / (2.0 * value) } else { 0.0 },
            exact: false,
        }
    } else {
        RadEstimate {
            value: mean,
            stderr: se_mean,
            exact: false,
        }
    })
}

/// Rademacher norm `‖(x_k)‖_{Rad(X)} = (E‖Σ ε_k x_k‖²)^{1/2}`.
pub fn rad_norm<T: AsRef<[f64]>>(
    space: &SpaceDescriptor,
    xs: &[T],
    mode: RadMode,
) -> Result<RadEstimate> {
    rad_moment(space, xs, 2, mode)
}

/// Exact Rademacher norm, for internal ratio evaluations.
pub(crate) fn rad_exact<T: AsRef<[f64]>>(space: &SpaceDescriptor, xs: &[T]) -> f64 {
    rad_moment(space, xs, 2, RadMode::Exact)
        .expect("length checked by caller")
        .value
}

/// `‖(a_k x_k)‖_Rad ≤ ‖(x_k)‖_Rad` for real `|a_k| ≤ 1`, by exact enumeration.
pub fn contraction_check<T: AsRef<[f64]>>(
    space: &SpaceDescriptor,
    xs: &[T],
    a: &[f64],
) -> Result<bool> {
    if a.len() != xs.len() {
        return Err(Error::InvalidArgument("coefficient count differs from sequence length".into()));
    }
    if a.iter().any(|c| c.abs() > 1.0) {
        return Err(Error::InvalidArgument("coefficients must satisfy |a_k| <= 1".into()));
    }
    let scaled: Vec<Vec<f64>> = xs
        .iter()
        .zip(a)
        .map(|(x, c)| x.as_ref().iter().map(|v| c * v).collect())
        .collect();
    let lhs = rad_norm(space, &scaled, RadMode::Exact)?.value;
    let rhs = rad_norm(space, xs, RadMode::Exact)?.value;
    Ok(lhs <= rhs + 1e-12)
}

/// Search effort for RM-norm and R-bound estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmBudget {
    pub restarts: usize,
    pub steps: usize,
}

impl Default for RmBudget {
    fn default() -> Self {
        Self {
            restarts: 8,
            steps: 40,
        }
    }
}

/// Configuration attaining an RM-norm lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmWitness {
    /// Unit vector in slot `v`.
    pub v: Vec<f64>,
    /// `(slot, sequence)` with Rademacher norm 1.
    pub rad: Vec<(usize, Vec<Vec<f64>>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmEstimate {
    pub value: f64,
    /// True when the value is the closed-form supremum.
    pub exact: bool,
    pub witness: Option<RmWitness>,
}

pub(crate) fn check_rm_indices(n_slots: usize, j_set: &[usize], v: usize) -> Result<()> {
    let n = n_slots.saturating_sub(1);
    if n < 3 {
        return Err(Error::IndexConstraint(format!(
            "RM norms need n >= 3 (at least 4 slots), got {n_slots} slots"
        )));
    }
    if j_set.is_empty() || j_set.len() > n - 2 {
        return Err(Error::IndexConstraint(format!(
            "need 1 <= #J <= n-2 = {}, got #J = {}",
            n - 2,
            j_set.len()
        )));
    }
    let mut seen = vec![false; n_slots];
    for &j in j_set.iter().chain([&v]) {
        if j >= n_slots || seen[j] {
            return Err(Error::IndexConstraint(
                "indices must be distinct slots and v must lie outside J".into(),
            ));
        }
        seen[j] = true;
    }
    Ok(())
}

/// True when the closed form `sup_k ∏_{j∈J} |e_{j,k}|` applies.
pub fn rm_is_exact(spaces: &[SpaceDescriptor], varpi: &Varpi) -> bool {
    spaces.iter().all(|s| s.is_scalar()) && matches!(varpi, Varpi::Product | Varpi::TraceOfProduct)
}

/// `‖{(e_{j,k})_{j∈J}}_k‖_{RM_v(ϖ, J)}`. Slots are 0-based; `tuples[k][i]` is the
/// vector of slot `j_set[i]` in the `k`-th tuple.
pub fn rm_norm(
    spaces: &[SpaceDescriptor],
    varpi: &Varpi,
    j_set: &[usize],
    v: usize,
    tuples: &[Vec<Vec<f64>>],
    budget: &RmBudget,
    seed: u64,
) -> Result<RmEstimate> {
    check_rm_indices(spaces.len(), j_set, v)?;
    varpi.validate(spaces)?;
    for t in tuples {
        if t.len() != j_set.len()
            || t.iter().zip(j_set).any(|(x, &j)| x.len() != spaces[j].dim())
        {
            return Err(Error::SpaceMismatch("tuple does not match J".into()));
        }
    }
    let rad_slots: Vec<usize> = (0..spaces.len())
        .filter(|s| *s != v && !j_set.contains(s))
        .collect();
    if rm_is_exact(spaces, varpi) {
        return Ok(rm_scalar(tuples, v, &rad_slots));
    }
    if tuples.is_empty() {
        return Ok(RmEstimate {
            value: 0.0,
            exact: false,
            witness: None,
        });
    }
    if tuples.len() > 12 {
        return Err(Error::BudgetExceeded(
            "RM estimator supports at most 12 tuples".into(),
        ));
    }
    let problem = RmProblem {
        spaces,
        varpi,
        j_set,
        v,
        rad_slots: &rad_slots,
        tuples,
    };
    Ok(problem.search(budget, seed))
}

fn rm_scalar(tuples: &[Vec<Vec<f64>>], _v: usize, rad_slots: &[usize]) -> RmEstimate {
    let mut best = 0.0;
    let mut arg = None;
    for (k, t) in tuples.iter().enumerate() {
        let p: f64 = t.iter().map(|x| x[0].abs()).product();
        if p > best {
            best = p;
            arg = Some(k);
        }
    }
    let witness = arg.map(|k| {
        let sign: f64 = tuples[k].iter().map(|x| x[0].signum()).product();
        RmWitness {
            v: vec![sign],
            rad: rad_slots
                .iter()
                .map(|&s| {
                    (
                        s,
                        (0..tuples.len())
                            .map(|i| vec![if i == k { 1.0 } else { 0.0 }])
                            .collect(),
                    )
                })
                .collect(),
        }
    });
    RmEstimate {
        value: best,
        exact: true,
        witness,
    }
}

struct RmProblem<'a> {
    spaces: &'a [SpaceDescriptor],
    varpi: &'a Varpi,
    j_set: &'a [usize],
    v: usize,
    rad_slots: &'a [usize],
    tuples: &'a [Vec<Vec<f64>>],
}

/// Free variables of the RM supremum: `ev` and one sequence per Rademacher slot.
#[derive(Clone)]
struct RmConfig {
    ev: Vec<f64>,
    seqs: Vec<Vec<Vec<f64>>>,
}

impl RmProblem<'_> {
    fn args(&self, cfg: &RmConfig, k: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.spaces.len()];
        for (i, &j) in self.j_set.iter().enumerate() {
            out[j] = self.tuples[k][i].clone();
        }
        out[self.v] = cfg.ev.clone();
        for (r, &s) in self.rad_slots.iter().enumerate() {
            out[s] = cfg.seqs[r][k].clone();
        }
        out
    }

    fn numerator(&self, cfg: &RmConfig) -> f64 {
        (0..self.tuples.len())
            .map(|k| {
                let a = self.args(cfg, k);
                let refs: Vec<&[f64]> = a.iter().map(|x| x.as_slice()).collect();
                self.varpi.eval(&refs)
            })
            .sum()
    }

    fn ratio(&self, cfg: &RmConfig) -> f64 {
        let mut den = self.spaces[self.v].norm(&cfg.ev);
        for (r, &s) in self.rad_slots.iter().enumerate() {
            den *= rad_exact(&self.spaces[s], &cfg.seqs[r]);
        }
        if den <= 0.0 {
            return 0.0;
        }
        self.numerator(cfg).abs() / den
    }

    fn random_config(&self, rng: &mut crate::Rng) -> RmConfig {
        let kk = self.tuples.len();
        RmConfig {
            ev: random_vec(rng, self.spaces[self.v].dim()),
            seqs: self
                .rad_slots
                .iter()
                .map(|&s| (0..kk).map(|_| random_vec(rng, self.spaces[s].dim())).collect())
                .collect(),
        }
    }

    /// Single-term configuration concentrated on tuple `k0`.
    fn delta_config(&self, rng: &mut crate::Rng, k0: usize) -> RmConfig {
        let mut cfg = self.random_config(rng);
        for (r, &s) in self.rad_slots.iter().enumerate() {
            for (k, x) in cfg.seqs[r].iter_mut().enumerate() {
                if k != k0 {
                    *x = vec![0.0; self.spaces[s].dim()];
                }
            }
        }
        cfg
    }

    /// Pointwise-argmax configuration for Bochner spaces over scalars with `∫ Π`.
    fn lattice_config(&self) -> Option<RmConfig> {
        let Varpi::Integral { inner, .. } = self.varpi else {
            return None;
        };
        if **inner != Varpi::Product {
            return None;
        }
        let mut ps = Vec::with_capacity(self.spaces.len());
        for s in self.spaces {
            match s {
                SpaceDescriptor::Bochner { p, inner, .. } if inner.is_scalar() => ps.push(*p),
                _ => return None,
            }
        }
        let w = self.spaces[0].dim();
        let kk = self.tuples.len();
        let inv_pj: f64 = self.j_set.iter().map(|&j| 1.0 / ps[j]).sum();
        let pj = 1.0 / inv_pj;
        let mut ev = vec![0.0; w];
        let mut seqs: Vec<Vec<Vec<f64>>> = self.rad_slots.iter().map(|_| vec![vec![0.0; w]; kk]).collect();
        for o in 0..w {
            let mut best = 0.0;
            let mut arg = 0;
            let mut sign = 1.0;
            for (k, t) in self.tuples.iter().enumerate() {
                let prod: f64 = t.iter().map(|x| x[o]).product();
                if prod.abs() > best {
                    best = prod.abs();
                    arg = k;
                    sign = prod.signum();
                }
            }
            if best == 0.0 {
                continue;
            }
            ev[o] = best.powf(pj / ps[self.v]);
            for (r, &s) in self.rad_slots.iter().enumerate() {
                let mag = best.powf(pj / ps[s]);
                seqs[r][arg][o] = if r == 0 { sign * mag } else { mag };
            }
        }
        Some(RmConfig { ev, seqs })
    }

    fn ascend(&self, mut cfg: RmConfig, steps: usize, rng: &mut crate::Rng) -> (f64, RmConfig) {
        let kk = self.tuples.len();
        let mut best = self.ratio(&cfg);
        for _ in 0..steps {
            // Optimal unit vector in slot v for the current sequences.
            let mut w = vec![0.0; self.spaces[self.v].dim()];
            for k in 0..kk {
                let a = self.args(&cfg, k);
                let refs: Vec<&[f64]> = a.iter().map(|x| x.as_slice()).collect();
                for (acc, g) in w.iter_mut().zip(self.varpi.gradient(&refs, self.v)) {
                    *acc += g;
                }
            }
            if w.iter().any(|x| *x != 0.0) {
                let mut cand = cfg.clone();
                cand.ev = self.spaces[self.v].norming(&w);
                let r = self.ratio(&cand);
                if r >= best {
                    best = r;
                    cfg = cand;
                }
            }
            for (r, &s) in self.rad_slots.iter().enumerate() {
                // Align every term with its gradient, weighted by the dual norm.
                let dual = self.spaces[s].dual();
                let mut cand = cfg.clone();
                for k in 0..kk {
                    let a = self.args(&cfg, k);
                    let refs: Vec<&[f64]> = a.iter().map(|x| x.as_slice()).collect();
                    let g = self.varpi.gradient(&refs, s);
                    let m = dual.norm(&g);
                    cand.seqs[r][k] = self.spaces[s].norming(&g).iter().map(|x| x * m).collect();
                }
                let val = self.ratio(&cand);
                if val > best {
                    best = val;
                    cfg = cand;
                }
                let mut cand = cfg.clone();
                let k = rng.random_range(0..kk);
                for x in cand.seqs[r][k].iter_mut() {
                    *x += 0.3 * rng.random_range(-1.0..1.0);
                }
                let val = self.ratio(&cand);
                if val > best {
                    best = val;
                    cfg = cand;
                }
            }
        }
        (best, cfg)
    }

    fn normalized(&self, cfg: &RmConfig) -> RmWitness {
        let nv = self.spaces[self.v].norm(&cfg.ev);
        RmWitness {
            v: cfg.ev.iter().map(|x| x / nv).collect(),
            rad: self
                .rad_slots
                .iter()
                .enumerate()
                .map(|(r, &s)| {
                    let nr = rad_exact(&self.spaces[s], &cfg.seqs[r]);
                    (
                        s,
                        cfg.seqs[r]
                            .iter()
                            .map(|x| x.iter().map(|y| y / nr).collect())
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    fn search(&self, budget: &RmBudget, seed: u64) -> RmEstimate {
        let mut rng = crate::rng(seed);
        let mut starts: Vec<RmConfig> = Vec::new();
        if let Some(c) = self.lattice_config() {
            starts.push(c);
        }
        for k in 0..self.tuples.len() {
            starts.push(self.delta_config(&mut rng, k));
        }
        for _ in 0..budget.restarts {
            starts.push(self.random_config(&mut rng));
        }
        let mut best = 0.0;
        let mut witness = None;
        for cfg in starts {
            let (val, cfg) = self.ascend(cfg, budget.steps, &mut rng);
            if val > best {
                best = val;
                witness = Some(self.normalized(&cfg));
            }
        }
        RmEstimate {
            value: best,
            exact: false,
            witness,
        }
    }
}

pub(crate) fn random_vec(rng: &mut crate::Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Value of `|Σ_k ϖ(…)|` for a witness, used to certify estimates.
pub fn rm_witness_value(
    varpi: &Varpi,
    j_set: &[usize],
    v: usize,
    tuples: &[Vec<Vec<f64>>],
    witness: &RmWitness,
    n_slots: usize,
) -> f64 {
    let mut total = 0.0;
    for (k, t) in tuples.iter().enumerate() {
        let mut args: Vec<&[f64]> = vec![&[]; n_slots];
        for (i, &j) in j_set.iter().enumerate() {
            args[j] = &t[i];
        }
        args[v] = &witness.v;
        for (s, seq) in &witness.rad {
            args[*s] = &seq[k];
        }
        total += varpi.eval(&args);
    }
    total.abs()
}

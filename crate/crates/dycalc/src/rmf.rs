//! Multilinear and classic Rademacher maximal functions of grid data.
//!
//! At a finest cell `x` the maximal function is the RM norm of the averages
//! over the cubes of a family that contain `x`. When a closed form exists
//! (scalar spaces with the product contraction, or a Hilbert space for the
//! classic function) the value is exact and computed in one top-down pass
//! over the tree. Otherwise each distinct chain of cubes is handed to the
//! search estimator, whose values are lower bounds.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::haar::{average, GridFunction};
use crate::lattice::{Cube, Grid};
use crate::spaces::rademacher::{check_rm_indices, rm_is_exact, MAX_EXACT_LEN};
use crate::spaces::{rad_moment, rm_norm, RadMode, RmBudget, SpaceDescriptor, Varpi};
use crate::{derive_seed, Error, Result};

/// Contraction, index set `J`, distinguished slot `v` and exponents of an RM maximal function.
///
/// Slots are 0-based; `exponents` lists `p_j` for every slot and may contain `∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmConfig {
    pub spaces: Vec<SpaceDescriptor>,
    pub varpi: Varpi,
    pub j_set: Vec<usize>,
    pub v: usize,
    pub exponents: Vec<f64>,
    #[serde(default)]
    pub budget: RmBudget,
}

impl RmConfig {
    pub fn validate(&self) -> Result<()> {
        check_rm_indices(self.spaces.len(), &self.j_set, self.v)?;
        for s in &self.spaces {
            s.validate()?;
        }
        self.varpi.validate(&self.spaces)?;
        if self.exponents.len() != self.spaces.len() {
            return Err(Error::InvalidArgument(format!(
                "need {} exponents",
                self.spaces.len()
            )));
        }
        if self.exponents.iter().any(|&p| !(p > 1.0)) {
            return Err(Error::InvalidArgument("exponents must lie in (1, ∞]".into()));
        }
        if self.target_exponent().is_infinite() {
            return Err(Error::InvalidArgument("p(J) must be finite".into()));
        }
        Ok(())
    }

    /// `p(J)` with `1/p(J) = Σ_{j∈J} 1/p_j`.
    pub fn target_exponent(&self) -> f64 {
        1.0 / self.j_set.iter().map(|&j| 1.0 / self.exponents[j]).sum::<f64>()
    }

    /// Whether the closed-form path applies.
    pub fn is_exact(&self) -> bool {
        rm_is_exact(&self.spaces, &self.varpi)
    }

    fn check_inputs(&self, f: &[&GridFunction]) -> Result<()> {
        if f.len() != self.j_set.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} functions, one per index in J",
                self.j_set.len()
            )));
        }
        for (fj, &j) in f.iter().zip(&self.j_set) {
            if fj.dim() != self.spaces[j].dim() {
                return Err(Error::SpaceMismatch(format!("input for slot {j} has the wrong dimension")));
            }
            if !fj.same_grid(f[0]) {
                return Err(Error::GridMismatch);
            }
        }
        Ok(())
    }
}

/// Pointwise values of a maximal function.
#[derive(Clone, Debug)]
pub struct MaximalOutput {
    pub values: GridFunction,
    /// True when every value is a closed form rather than an estimator lower bound.
    pub exact: bool,
}

impl MaximalOutput {
    /// File metadata recording how the values were obtained.
    pub fn metadata(&self, budget: &RmBudget) -> serde_json::Value {
        serde_json::json!({
            "path": if self.exact { "exact" } else { "estimator" },
            "budget": budget,
        })
    }
}

fn family_set(grid: &Grid, family: Option<&[Cube]>) -> Result<BTreeSet<Cube>> {
    match family {
        None => Ok(grid.all_cubes().into_iter().collect()),
        Some(cs) => {
            if cs.iter().any(|c| !grid.contains_cube(c)) {
                return Err(Error::NotInGrid);
            }
            Ok(cs.iter().cloned().collect())
        }
    }
}

/// Running maximum of `weight(Q)` over the cubes `Q ∋ x`, in one pass from the roots down.
fn top_down_max(grid: &Arc<Grid>, weight: &HashMap<Cube, f64>) -> GridFunction {
    let w = grid.window();
    let mut running: HashMap<Cube, f64> = HashMap::new();
    for level in w.scales().collect::<Vec<_>>().into_iter().rev() {
        for q in grid.cubes_at(level) {
            let above = if level == w.l_max {
                0.0
            } else {
                running[&grid.parent(&q, 1).expect("inside window")]
            };
            let here = weight.get(&q).copied().unwrap_or(0.0);
            running.insert(q, above.max(here));
        }
    }
    let mut out = GridFunction::zeros(grid.clone(), SpaceDescriptor::Scalar);
    for c in 0..grid.num_cells() {
        out.data_mut()[c] = running[&grid.cell_cube(c)];
    }
    out
}

/// Cells grouped by the chain of family cubes that contain them, coarse first.
fn chains(grid: &Grid, family: &BTreeSet<Cube>) -> BTreeMap<Vec<Cube>, Vec<usize>> {
    let w = grid.window();
    let mut out: BTreeMap<Vec<Cube>, Vec<usize>> = BTreeMap::new();
    for c in 0..grid.num_cells() {
        let chain: Vec<Cube> = w
            .scales()
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .map(|l| grid.ancestor_of_cell(c, l))
            .filter(|q| family.contains(q))
            .collect();
        out.entry(chain).or_default().push(c);
    }
    out
}

fn averages(f: &[&GridFunction], q: &Cube) -> Result<Vec<Vec<f64>>> {
    f.iter().map(|fj| average(fj, q)).collect()
}

/// RM norm of a set of average tuples, exact or estimated according to `cfg`.
pub(crate) fn chain_norm(cfg: &RmConfig, tuples: &[Vec<Vec<f64>>], seed: u64) -> Result<f64> {
    if cfg.is_exact() {
        return Ok(tuples
            .iter()
            .map(|t| t.iter().map(|x| x[0].abs()).product::<f64>())
            .fold(0.0, f64::max));
    }
    Ok(rm_norm(&cfg.spaces, &cfg.varpi, &cfg.j_set, cfg.v, tuples, &cfg.budget, seed)?.value)
}

/// `RM_{D,ϖ,J,v}[(f_j)](x)` over `family` (all cubes of the grid when `None`).
///
/// `f[i]` is the function of slot `cfg.j_set[i]`.
pub fn rm_maximal(f: &[&GridFunction], cfg: &RmConfig, family: Option<&[Cube]>, seed: u64) -> Result<MaximalOutput> {
    cfg.validate()?;
    cfg.check_inputs(f)?;
    let grid = f[0].grid().clone();
    let fam = family_set(&grid, family)?;
    if cfg.is_exact() {
        let mut weight = HashMap::with_capacity(fam.len());
        for q in &fam {
            let t = averages(f, q)?;
            weight.insert(q.clone(), t.iter().map(|x| x[0].abs()).product::<f64>());
        }
        return Ok(MaximalOutput {
            values: top_down_max(&grid, &weight),
            exact: true,
        });
    }
    let groups: Vec<(Vec<Cube>, Vec<usize>)> = chains(&grid, &fam).into_iter().collect();
    let vals = groups
        .par_iter()
        .map(|(chain, cells)| {
            let tuples = chain.iter().map(|q| averages(f, q)).collect::<Result<Vec<_>>>()?;
            chain_norm(cfg, &tuples, derive_seed(seed, cells[0] as u64))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = GridFunction::zeros(grid, SpaceDescriptor::Scalar);
    for ((_, cells), v) in groups.iter().zip(vals) {
        for &c in cells {
            out.data_mut()[c] = v;
        }
    }
    Ok(MaximalOutput {
        values: out,
        exact: false,
    })
}

/// `‖A‖_RM = sup_{Σλ_k² ≤ 1} (E‖Σ ε_k λ_k a_k‖^power)^{1/power}` for a finite set `A`.
///
/// Exact (`max_k ‖a_k‖`) in Hilbert spaces; otherwise a search over `λ` on
/// the unit sphere starting from the coordinate vectors, which bounds the
/// supremum from below.
pub fn classic_rm_norm(
    space: &SpaceDescriptor,
    a: &[Vec<f64>],
    power: u32,
    budget: &RmBudget,
    seed: u64,
) -> Result<(f64, bool)> {
    if power != 1 && power != 2 {
        return Err(Error::InvalidArgument(format!("power must be 1 or 2, got {power}")));
    }
    let best_single = a.iter().map(|x| space.norm(x)).fold(0.0, f64::max);
    if space.is_hilbert() || a.len() <= 1 {
        return Ok((best_single, true));
    }
    if a.len() > MAX_EXACT_LEN {
        return Err(Error::BudgetExceeded(format!(
            "classic RM search supports at most {MAX_EXACT_LEN} vectors"
        )));
    }
    let eval = |lambda: &[f64]| -> f64 {
        let xs: Vec<Vec<f64>> = a
            .iter()
            .zip(lambda)
            .map(|(x, l)| x.iter().map(|v| v * l).collect())
            .collect();
        rad_moment(space, &xs, power, RadMode::Exact)
            .expect("dimensions checked")
            .value
    };
    let normalize = |l: &mut Vec<f64>| {
        let n = l.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            l.iter_mut().for_each(|x| *x /= n);
        }
    };
    let k = a.len();
    let mut rng = crate::rng(seed);
    let mut best = best_single;
    let mut starts: Vec<Vec<f64>> = vec![vec![1.0 / (k as f64).sqrt(); k]];
    for _ in 0..budget.restarts {
        let mut l: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        normalize(&mut l);
        starts.push(l);
    }
    for mut l in starts {
        let mut cur = eval(&l);
        let mut step = 0.3;
        for _ in 0..budget.steps {
            let mut cand: Vec<f64> = l.iter().map(|x| x + step * rng.random_range(-1.0..1.0)).collect();
            normalize(&mut cand);
            let v = eval(&cand);
            if v > cur {
                cur = v;
                l = cand;
            } else {
                step *= 0.8;
            }
        }
        best = best.max(cur);
    }
    Ok((best, false))
}

/// The classic Rademacher maximal function `M_R f(x) = ‖{⟨f⟩_Q : x ∈ Q}‖_RM`.
pub fn classic_mr(f: &GridFunction, power: u32, budget: &RmBudget, seed: u64) -> Result<MaximalOutput> {
    let grid = f.grid().clone();
    let space = f.space().clone();
    if space.is_hilbert() {
        classic_rm_norm(&space, &[], power, budget, seed)?;
        let mut weight = HashMap::new();
        for q in grid.all_cubes() {
            weight.insert(q.clone(), space.norm(&average(f, &q)?));
        }
        return Ok(MaximalOutput {
            values: top_down_max(&grid, &weight),
            exact: true,
        });
    }
    let fam: BTreeSet<Cube> = grid.all_cubes().into_iter().collect();
    let groups: Vec<(Vec<Cube>, Vec<usize>)> = chains(&grid, &fam).into_iter().collect();
    let vals = groups
        .par_iter()
        .map(|(chain, cells)| {
            let a = chain.iter().map(|q| average(f, q)).collect::<Result<Vec<_>>>()?;
            Ok(classic_rm_norm(&space, &a, power, budget, derive_seed(seed, cells[0] as u64))?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = GridFunction::zeros(grid, SpaceDescriptor::Scalar);
    for ((_, cells), v) in groups.iter().zip(vals) {
        for &c in cells {
            out.data_mut()[c] = v;
        }
    }
    Ok(MaximalOutput {
        values: out,
        exact: false,
    })
}

/// Best ratio found by [`rmf_lp_estimate`].
#[derive(Clone, Debug)]
pub struct RmfEstimate {
    pub value: f64,
    pub exact_path: bool,
    pub witness: Option<Vec<GridFunction>>,
}

/// `‖RM[(f_j)]‖_{L^{p(J)}} / ∏_{j∈J} ‖f_j‖_{L^{p_j}(X_j)}`, or 0 for a zero input.
pub fn rmf_ratio(f: &[&GridFunction], cfg: &RmConfig, seed: u64) -> Result<f64> {
    let den: f64 = f
        .iter()
        .zip(&cfg.j_set)
        .map(|(fj, &j)| fj.lp_norm(cfg.exponents[j]))
        .product();
    if den == 0.0 {
        return Ok(0.0);
    }
    let rm = rm_maximal(f, cfg, None, seed)?;
    Ok(rm.values.lp_norm(cfg.target_exponent()) / den)
}

/// Lower bound for `‖RM : ∏_{j∈J} L^{p_j}(X_j) → L^{p(J)}‖` on `grid`.
///
/// Single-cube atoms `1_Q x_j` (one per level) are tried first, then
/// `trials` random tuples, alternating between full-support and single-cube
/// support. The result is a running maximum.
pub fn rmf_lp_estimate(cfg: &RmConfig, grid: &Arc<Grid>, trials: usize, seed: u64) -> Result<RmfEstimate> {
    cfg.validate()?;
    let spaces: Vec<&SpaceDescriptor> = cfg.j_set.iter().map(|&j| &cfg.spaces[j]).collect();
    let mut best = RmfEstimate {
        value: 0.0,
        exact_path: cfg.is_exact(),
        witness: None,
    };
    let consider = |f: Vec<GridFunction>, s: u64, best: &mut RmfEstimate| -> Result<()> {
        let refs: Vec<&GridFunction> = f.iter().collect();
        let r = rmf_ratio(&refs, cfg, s)?;
        if r > best.value {
            best.value = r;
            best.witness = Some(f);
        }
        Ok(())
    };
    for level in grid.window().scales() {
        let q = grid.cubes_at(level).swap_remove(0);
        let f = spaces
            .iter()
            .map(|s| {
                let mut x = vec![0.0; s.dim()];
                x[0] = 1.0;
                let nx = s.norm(&x);
                x[0] /= nx;
                GridFunction::indicator(grid.clone(), &q)
                    .data()
                    .iter()
                    .flat_map(|&v| x.iter().map(move |c| c * v).collect::<Vec<_>>())
                    .collect::<Vec<f64>>()
            })
            .zip(&spaces)
            .map(|(data, s)| GridFunction::from_values(grid.clone(), (*s).clone(), data))
            .collect::<Result<Vec<_>>>()?;
        consider(f, derive_seed(seed, level as u64), &mut best)?;
    }
    let mut rng = crate::rng(seed);
    let cubes = grid.all_cubes();
    for t in 0..trials {
        let support = if t % 2 == 1 {
            Some(cubes[rng.random_range(0..cubes.len())].clone())
        } else {
            None
        };
        let f = spaces
            .iter()
            .map(|s| {
                let mut g = GridFunction::random(grid.clone(), (*s).clone(), &mut rng);
                if let Some(q) = &support {
                    g = g.mul_scalar_fn(&GridFunction::indicator(grid.clone(), q))?;
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        consider(f, derive_seed(seed, 1 << 32 | t as u64), &mut best)?;
    }
    Ok(best)
}

/// One configuration `(j_1, j_2, v, J)` of the max-min-max and its estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmfRow {
    pub j1: usize,
    pub j2: usize,
    pub v: usize,
    pub j_set: Vec<usize>,
    pub value: f64,
}

/// Every configuration of the max-min-max together with its value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmfTable {
    pub rows: Vec<RmfRow>,
    /// `max_{j_1≠j_2} min_v max_J` of the row values.
    pub headline: f64,
}

/// Estimates every RM maximal operator appearing in the RMF condition.
///
/// `base` supplies spaces, contraction, exponents and budget; its `j_set`
/// and `v` are ignored.
pub fn rmf_table(base: &RmConfig, grid: &Arc<Grid>, trials: usize, seed: u64) -> Result<RmfTable> {
    let slots = base.spaces.len();
    if slots < 4 {
        return Err(Error::IndexConstraint("the RMF condition needs n >= 3".into()));
    }
    let mut cache: BTreeMap<(Vec<usize>, usize), f64> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut headline = 0.0f64;
    for j1 in 0..slots {
        for j2 in 0..slots {
            if j1 == j2 {
                continue;
            }
            let mut min_v = f64::INFINITY;
            for v in (0..slots).filter(|&v| v != j1 && v != j2) {
                let rest: Vec<usize> = (0..slots).filter(|&s| s != j1 && s != j2 && s != v).collect();
                let mut max_j = 0.0f64;
                for mask in 1u32..1 << rest.len() {
                    let j_set: Vec<usize> = rest
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &s)| s)
                        .collect();
                    let key = (j_set.clone(), v);
                    let value = match cache.get(&key) {
                        Some(&x) => x,
                        None => {
                            let cfg = RmConfig {
                                j_set: j_set.clone(),
                                v,
                                ..base.clone()
                            };
                            let x = rmf_lp_estimate(&cfg, grid, trials, seed)?.value;
                            cache.insert(key, x);
                            x
                        }
                    };
                    max_j = max_j.max(value);
                    rows.push(RmfRow {
                        j1,
                        j2,
                        v,
                        j_set,
                        value,
                    });
                }
                min_v = min_v.min(max_j);
            }
            headline = headline.max(min_v);
        }
    }
    Ok(RmfTable { rows, headline })
}

/// `sup_λ λ^{1/ℓ} |{RM > λ}| / ∏_j ‖f_j‖_1^{1/ℓ}` for computed maximal values.
///
/// The supremum is approached as `λ` increases to each attained value.
pub fn weak_type_ratio(values: &GridFunction, l1_norms: &[f64], ell: usize) -> f64 {
    let prod: f64 = l1_norms.iter().product::<f64>();
    if prod == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = values.data().to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let m = values.grid().cell_measure();
    let inv = 1.0 / ell as f64;
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x > 0.0)
        .map(|(i, x)| x.powf(inv) * (i + 1) as f64 * m)
        .fold(0.0, f64::max)
        / prod.powf(inv)
}

//! Exact decomposition of a discretized form into shifts, paraproducts,
//! diagonal shifts and a coarse remainder.
//!
//! With a single root cube `K_0` the telescoping of conditional expectations
//! gives
//!
//! ```text
//! Λ(f) = Λ(E_top f_1, …, E_top f_{n+1}) + Σ_{m=1}^{n+1} Σ_Q Λ̃_m(Q)
//! ```
//!
//! and every `Λ̃_m(Q)` is expanded in Haar functions of larger cubes. Terms
//! are grouped by adjoint frame: frame `0` is `T` itself, frame `m ≥ 1` is
//! `T^{m*}` evaluated on `(f_1, …, f_{n+1}, …, f_n)` with `f_m` as output.
//!
//! The paraproduct coefficients are the full `⟨T^{m*}1, h_Q⟩`; the
//! truncation `⟨T^{m*}1, h_Q⟩[⟨G⟩_{K_0}]` left by the telescoping cancels
//! exactly against `⟨T^{m*}(E_top G), Δ_Q g⟩`, so the only remainder is the
//! coarse term `⟨T(1, …, 1), 1⟩[⟨f_1⟩_{K_0}, …], ⟨f_{n+1}⟩_{K_0}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_pair, full_t1_sequence, haar_array, haar_support, t1_pairing, PairClass, SioForm};
use crate::haar::{average, cancellative_indices, haar_value, pair_haar, GridFunction, HaarIndex};
use crate::lattice::{Cube, Grid};
use crate::model_ops::{paraproduct_form, shift_form, ParaproductSpec, ShiftKey, ShiftSpec};
use crate::multilinear::MultilinearOp;
use crate::{Error, Result};

/// Where a shift coefficient comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Separated,
    Nearby,
    /// Correction term `−⟨TΦ_j, h_Q⟩` of an inside pair.
    Error { j: usize },
    /// Diagonal coefficient, `part` 1 (children not all equal) or 2 (one child).
    Diagonal { part: u8 },
}

impl Origin {
    pub fn label(&self) -> String {
        match self {
            Origin::Separated => "separated".into(),
            Origin::Nearby => "nearby".into(),
            Origin::Error { j } => format!("error_{j}"),
            Origin::Diagonal { part } => format!("diagonal_{part}"),
        }
    }
}

/// One emitted shift together with its frame and origin.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftTerm {
    pub frame: usize,
    pub origin: Origin,
    /// `2^{−α·max k/2}`.
    pub weight: f64,
    pub shift: ShiftSpec,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub grid: Arc<Grid>,
    pub n: usize,
    pub gamma: f64,
    pub r: u32,
    pub alpha: f64,
    pub shifts: Vec<ShiftTerm>,
    /// One paraproduct per frame.
    pub paraproducts: Vec<ParaproductSpec>,
    /// `⟨T(1, …, 1), 1⟩` over the root cube.
    pub top: MultilinearOp,
    pub top_cube: Cube,
}

/// Values of the parts of a decomposition on one tuple of functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionValue {
    pub by_origin: BTreeMap<String, f64>,
    pub shifts: f64,
    pub paraproduct: f64,
    pub remainder: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub direct: f64,
    pub total: f64,
    pub abs: f64,
    /// `abs / |direct|`, or `abs` when the direct value is zero.
    pub rel: f64,
}

type GroupKey = (usize, Origin, Vec<u32>, [usize; 2]);

struct Entry {
    group: GroupKey,
    key: ShiftKey,
    op: MultilinearOp,
}

/// Shared lookups for one frame.
struct Ctx<'a> {
    t: &'a SioForm,
    frame: usize,
    gamma: f64,
    haar: BTreeMap<HaarIndex, Vec<(usize, f64)>>,
}

impl<'a> Ctx<'a> {
    fn new(t: &'a SioForm, frame: usize, gamma: f64) -> Self {
        let grid = t.grid();
        let mut haar = BTreeMap::new();
        for q in grid.all_cubes() {
            for eta in 0..1u32 << grid.dim() {
                if eta != 0 && q.level == grid.window().l_min {
                    continue;
                }
                let idx = HaarIndex::new(q.clone(), eta);
                haar.insert(idx.clone(), haar_support(grid, &idx));
            }
        }
        Self { t, frame, gamma, haar }
    }

    fn pairing(&self, r: &[HaarIndex], q: &HaarIndex) -> MultilinearOp {
        let supp: Vec<&[(usize, f64)]> = r.iter().chain([q]).map(|i| self.haar[i].as_slice()).collect();
        self.t.contract_sparse(&supp)
    }
}

fn r_indices(cubes: &[Cube], slot: usize, eta: u32) -> Vec<HaarIndex> {
    cubes
        .iter()
        .enumerate()
        .map(|(m, c)| HaarIndex::new(c.clone(), if m == slot { eta } else { 0 }))
        .collect()
}

fn shift_key(top: Cube, r: &[HaarIndex], q: &HaarIndex) -> ShiftKey {
    ShiftKey {
        top,
        cubes: r.iter().map(|i| i.cube.clone()).chain([q.cube.clone()]).collect(),
        etas: r.iter().map(|i| i.eta).chain([q.eta]).collect(),
    }
}

/// Every tuple `(Q_1, …, Q_n)` with `Q_1..Q_i` from `a` and the rest from `b`.
fn tuples(a: &[Cube], b: &[Cube], i: usize, n: usize) -> Vec<Vec<Cube>> {
    let mut out = Vec::new();
    let lens: Vec<usize> = (0..n).map(|m| if m < i { a.len() } else { b.len() }).collect();
    if lens.contains(&0) {
        return out;
    }
    let mut pos = vec![0usize; n];
    loop {
        out.push(
            (0..n)
                .map(|m| if m < i { a[pos[m]].clone() } else { b[pos[m]].clone() })
                .collect(),
        );
        if !super::advance(&mut pos, |m| lens[m]) {
            return out;
        }
    }
}

/// Shift entry for a separated or nearby pair, keyed by the common parent.
fn far_entry(ctx: &Ctx, class: PairClass, r: Vec<HaarIndex>, q: &HaarIndex, i: usize) -> Option<Entry> {
    let op = ctx.pairing(&r, q);
    if op.is_zero() {
        return None;
    }
    let grid = ctx.t.grid();
    let n = r.len();
    let cubes: Vec<Cube> = r.iter().map(|x| x.cube.clone()).collect();
    let k = grid.common_parent(&q.cube, &cubes)?;
    let j1 = (k.level - q.cube.level) as u32;
    let j2 = (k.level - cubes[0].level) as u32;
    let complexity: Vec<u32> = (0..n)
        .map(|m| if m < i { j2 } else { j2 + 1 })
        .chain([j1])
        .collect();
    let origin = if class == PairClass::Separated {
        Origin::Separated
    } else {
        Origin::Nearby
    };
    Some(Entry {
        group: (ctx.frame, origin, complexity, [i, n + 1]),
        key: shift_key(k, &r, q),
        op,
    })
}

/// `Φ_{Q,k,i,j}` (slots 1-based) and `⟨u_{Q,k,i}⟩_{Q^n}`.
pub(crate) fn phi_tuple(grid: &Grid, q: &Cube, k: u32, i: usize, j: usize, eta: u32, n: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    let big = grid.parent(q, k)?;
    let mid = grid.parent(q, k - 1)?;
    let nc = grid.num_cells();
    let a = grid.measure(big.level).sqrt().recip();
    let b = grid.measure(mid.level).sqrt().recip();
    let h_idx = HaarIndex::new(big.clone(), eta);
    let hk = haar_array(grid, &h_idx);
    let ch = haar_value(grid, &h_idx, grid.cells_of(&mid)[0]);
    let ind_big = super::indicator_array(grid, &big);
    let ind_mid = super::indicator_array(grid, &mid);
    let konst = |c: f64| vec![c; nc];
    let scaled = |v: &[f64], c: f64| v.iter().map(|x| c * x).collect::<Vec<_>>();
    let outside = |v: &[f64], c: f64| v.iter().map(|x| c * (1.0 - x)).collect::<Vec<_>>();
    let phi = (1..=n)
        .map(|m| {
            if j < i {
                if m < j {
                    konst(a)
                } else if m == j {
                    outside(&ind_big, a)
                } else if m < i {
                    scaled(&ind_big, a)
                } else if m == i {
                    hk.clone()
                } else {
                    scaled(&ind_mid, b)
                }
            } else if j == i {
                if m < i {
                    konst(a)
                } else if m == i {
                    hk.iter()
                        .zip(&ind_mid)
                        .map(|(h, p)| (1.0 - p) * (ch - h))
                        .collect()
                } else {
                    scaled(&ind_mid, b)
                }
            } else if m < i {
                konst(a)
            } else if m == i {
                konst(ch)
            } else if m < j {
                konst(b)
            } else if m == j {
                outside(&ind_mid, b)
            } else {
                scaled(&ind_mid, b)
            }
        })
        .collect();
    let avg = a.powi(i as i32 - 1) * ch * b.powi((n - i) as i32);
    Ok((phi, avg))
}

fn t1_op(t: &SioForm, phi: &[Vec<f64>], q: &HaarIndex, hq: &[f64]) -> Result<MultilinearOp> {
    let refs: Vec<&[f64]> = phi.iter().map(Vec::as_slice).collect();
    t1_pairing(t, &refs, hq, &q.cube, 2.0 * (t.grid().dim() as f64).sqrt())
}

/// The `Σ_i Σ_{R}` expansion of `Λ_{n+1}(Q)` in one frame.
fn main_entries(ctx: &Ctx, q: &HaarIndex) -> Result<Vec<Entry>> {
    let t = ctx.t;
    let grid = t.grid();
    let n = t.arity();
    let l_max = grid.window().l_max;
    let hq = haar_array(grid, q);
    let mut out = Vec::new();
    for i in 1..=n {
        for level in q.cube.level + 1..=l_max {
            let a = grid.cubes_at(level);
            let b = grid.cubes_at(level - 1);
            for cubes in tuples(&a, &b, i, n) {
                let class = classify_pair(grid, &q.cube, &cubes, ctx.gamma)?;
                for eta in 1..1u32 << grid.dim() {
                    let r = r_indices(&cubes, i - 1, eta);
                    match class {
                        PairClass::Separated | PairClass::Nearby => {
                            out.extend(far_entry(ctx, class, r, q, i));
                        }
                        PairClass::Inside => {
                            let k = (level - q.cube.level) as u32;
                            let complexity: Vec<u32> =
                                (0..n).map(|m| u32::from(m >= i)).chain([k]).collect();
                            for j in 1..=n {
                                let (phi, _) = phi_tuple(grid, &q.cube, k, i, j, eta, n)?;
                                let op = t1_op(t, &phi, q, &hq)?.scaled(-1.0);
                                if !op.is_zero() {
                                    out.push(Entry {
                                        group: (ctx.frame, Origin::Error { j }, complexity.clone(), [i, n + 1]),
                                        key: shift_key(cubes[0].clone(), &r, q),
                                        op,
                                    });
                                }
                            }
                        }
                        PairClass::Diagonal => unreachable!("ℓ(R) > ℓ(Q) here"),
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Same-scale pairs `R ∈ scrD_j`, `ℓ(R) = ℓ(Q)`, in frame `m ≥ 1`.
fn diagonal_entries(ctx: &Ctx, q: &HaarIndex, j: usize) -> Result<Vec<Entry>> {
    let t = ctx.t;
    let grid = t.grid();
    let n = t.arity();
    let a = grid.cubes_at(q.cube.level);
    let b = grid.cubes_at(q.cube.level - 1);
    let children = grid.children(&q.cube)?;
    let mut out = Vec::new();
    for cubes in tuples(&a, &b, j, n) {
        let class = classify_pair(grid, &q.cube, &cubes, ctx.gamma)?;
        for eta in 1..1u32 << grid.dim() {
            let r = r_indices(&cubes, j - 1, eta);
            match class {
                PairClass::Separated | PairClass::Nearby => out.extend(far_entry(ctx, class, r, q, j)),
                PairClass::Diagonal => {
                    let whole = ctx.pairing(&r, q);
                    let mut one_child = MultilinearOp::zeros(whole.in_dims().to_vec(), whole.out_dim());
                    for c in &children {
                        let cells: std::collections::HashSet<usize> = grid.cells_of(c).into_iter().collect();
                        let restricted: Vec<Vec<(usize, f64)>> = r
                            .iter()
                            .chain([q])
                            .map(|i| ctx.haar[i].iter().copied().filter(|(x, _)| cells.contains(x)).collect())
                            .collect();
                        let refs: Vec<&[(usize, f64)]> = restricted.iter().map(Vec::as_slice).collect();
                        one_child.add_scaled(1.0, &t.contract_sparse(&refs));
                    }
                    let mut several = whole;
                    several.add_scaled(-1.0, &one_child);
                    let complexity: Vec<u32> = (0..n).map(|m| u32::from(m >= j)).chain([0]).collect();
                    for (part, op) in [(1u8, several), (2u8, one_child)] {
                        if !op.is_zero() {
                            out.push(Entry {
                                group: (ctx.frame, Origin::Diagonal { part }, complexity.clone(), [j, n + 1]),
                                key: shift_key(q.cube.clone(), &r, q),
                                op,
                            });
                        }
                    }
                }
                PairClass::Inside => unreachable!("ℓ(R) = ℓ(Q) here"),
            }
        }
    }
    Ok(out)
}

fn check_single_root(grid: &Grid) -> Result<()> {
    if grid.roots_per_axis() != 1 {
        return Err(Error::InvalidArgument(
            "the decomposition needs a grid with a single root cube".into(),
        ));
    }
    Ok(())
}

/// All adjoint frames `T, T^{1*}, …, T^{n*}`.
fn frames(t: &SioForm) -> Result<Vec<SioForm>> {
    std::iter::once(Ok(t.clone()))
        .chain((1..=t.arity()).map(|m| t.adjoint(m)))
        .collect()
}

/// Decomposes `T` on its grid over all cubes.
pub fn decompose(t: &SioForm, gamma: f64, r: u32) -> Result<Decomposition> {
    let grid = t.grid().clone();
    check_single_root(&grid)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("γ must lie in (0, 1), got {gamma}")));
    }
    let depth = grid.window().depth();
    if r == 0 || r > depth {
        return Err(Error::InvalidArgument(format!(
            "a window of depth {depth} is too shallow for r = {r}"
        )));
    }
    let n = t.arity();
    let qs = cancellative_indices(&grid);
    let mut groups: BTreeMap<GroupKey, ShiftSpec> = BTreeMap::new();
    let mut paraproducts = Vec::with_capacity(n + 1);
    for (m, tf) in frames(t)?.iter().enumerate() {
        let ctx = Ctx::new(tf, m, gamma);
        let per_q: Vec<Vec<Entry>> = qs
            .par_iter()
            .map(|q| {
                let mut v = main_entries(&ctx, q)?;
                if m >= 1 {
                    for j in m..=n {
                        v.extend(diagonal_entries(&ctx, q, j)?);
                    }
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        for e in per_q.into_iter().flatten() {
            if !groups.contains_key(&e.group) {
                let (_, _, complexity, slots) = &e.group;
                let spec = ShiftSpec::new(
                    grid.clone(),
                    complexity.clone(),
                    *slots,
                    tf.in_spaces().to_vec(),
                    tf.out_space().clone(),
                )?;
                groups.insert(e.group.clone(), spec);
            }
            groups.get_mut(&e.group).expect("inserted").accumulate(e.key, &e.op)?;
        }
        let mut pp = ParaproductSpec::new(grid.clone(), tf.in_spaces().to_vec(), tf.out_space().clone())?;
        for (idx, op) in full_t1_sequence(tf)? {
            if !op.is_zero() {
                pp.insert(idx, op)?;
            }
        }
        paraproducts.push(pp);
    }
    let alpha = t.alpha();
    let shifts = groups
        .into_iter()
        .map(|((frame, origin, complexity, _), shift)| {
            let kmax = complexity.iter().copied().max().unwrap_or(0);
            ShiftTerm {
                frame,
                origin,
                weight: (-alpha * kmax as f64 / 2.0).exp2(),
                shift,
            }
        })
        .collect();
    let ones = vec![1.0; grid.num_cells()];
    let top = t.contract(&vec![ones.as_slice(); n + 1])?;
    let top_cube = grid.roots().remove(0);
    Ok(Decomposition {
        grid,
        n,
        gamma,
        r,
        alpha,
        shifts,
        paraproducts,
        top,
        top_cube,
    })
}

/// Inputs and output of frame `m`: `f_m` and `f_{n+1}` exchanged.
fn frame_functions<'a>(f: &[&'a GridFunction], m: usize) -> (Vec<&'a GridFunction>, &'a GridFunction) {
    let n = f.len() - 1;
    let mut g: Vec<&GridFunction> = f[..n].to_vec();
    if m == 0 {
        (g, f[n])
    } else {
        let out = g[m - 1];
        g[m - 1] = f[n];
        (g, out)
    }
}

impl Decomposition {
    /// Number of emitted non-zero shift coefficients.
    pub fn num_coefficients(&self) -> usize {
        self.shifts.iter().map(|s| s.shift.len()).sum()
    }

    pub fn evaluate(&self, f: &[&GridFunction]) -> Result<DecompositionValue> {
        if f.len() != self.n + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} functions, got {}",
                self.n + 1,
                f.len()
            )));
        }
        if f.iter().any(|fm| **fm.grid() != *self.grid) {
            return Err(Error::GridMismatch);
        }
        let values: Vec<f64> = self
            .shifts
            .par_iter()
            .map(|s| {
                let (g, out) = frame_functions(f, s.frame);
                shift_form(&s.shift, &g, out)
            })
            .collect::<Result<_>>()?;
        let mut by_origin = BTreeMap::new();
        for (s, v) in self.shifts.iter().zip(&values) {
            let key = match s.origin {
                Origin::Error { .. } => "error".to_string(),
                o => o.label(),
            };
            *by_origin.entry(key).or_insert(0.0) += v;
        }
        let shifts: f64 = values.iter().sum();
        let mut paraproduct = 0.0;
        for (m, pp) in self.paraproducts.iter().enumerate() {
            let (g, out) = frame_functions(f, m);
            paraproduct += paraproduct_form(pp, &g, out)?;
        }
        let avgs: Vec<Vec<f64>> = f
            .iter()
            .map(|fm| average(fm, &self.top_cube))
            .collect::<Result<_>>()?;
        let inputs: Vec<&[f64]> = avgs[..self.n].iter().map(Vec::as_slice).collect();
        let remainder = self.top.form(&inputs, &avgs[self.n]);
        Ok(DecompositionValue {
            by_origin,
            shifts,
            paraproduct,
            remainder,
            total: shifts + paraproduct + remainder,
        })
    }

    /// Largest `2^{α j_1/2}·normalization·‖b‖_F` over separated and nearby
    /// coefficients, `j_1` being the complexity of the output slot.
    pub fn max_normalized_far(&self) -> f64 {
        let mut best: f64 = 0.0;
        for s in &self.shifts {
            if !matches!(s.origin, Origin::Separated | Origin::Nearby) {
                continue;
            }
            let j1 = *s.shift.complexity().last().expect("non-empty") as f64;
            for (key, op) in s.shift.coeffs() {
                let v = (self.alpha * j1 / 2.0).exp2()
                    * crate::model_ops::normalization(&self.grid, key)
                    * op.frobenius();
                best = best.max(v);
            }
        }
        best
    }
}

/// Compares the decomposition against [`super::direct_form`].
pub fn reconstruction_residual(t: &SioForm, dec: &Decomposition, f: &[&GridFunction]) -> Result<Residual> {
    let direct = super::direct_form(t, f)?;
    let total = dec.evaluate(f)?.total;
    let abs = (direct - total).abs();
    Ok(Residual {
        direct,
        total,
        abs,
        rel: if direct != 0.0 { abs / direct.abs() } else { abs },
    })
}

/// Largest deviation in `⟨Th_{R,i}, h_Q⟩ = ⟨u⟩_{Q^n}⟨T1, h_Q⟩ − Σ_j ⟨TΦ_j, h_Q⟩`
/// over all inside pairs, and the largest `|⟨Th_{R,i}, h_Q⟩|` seen.
pub fn step_three_check(t: &SioForm) -> Result<(f64, f64)> {
    let grid = t.grid();
    let n = t.arity();
    let ones = vec![vec![1.0; grid.num_cells()]; n];
    let results: Vec<(f64, f64)> = cancellative_indices(grid)
        .par_iter()
        .map(|q| {
            let hq = haar_array(grid, q);
            let t1 = t1_op(t, &ones, q, &hq)?;
            let mut dev: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for k in 1..=(grid.window().l_max - q.cube.level) as u32 {
                let big = grid.parent(&q.cube, k)?;
                let mid = grid.parent(&q.cube, k - 1)?;
                for i in 1..=n {
                    let cubes: Vec<Cube> = (0..n).map(|m| if m < i { big.clone() } else { mid.clone() }).collect();
                    for eta in 1..1u32 << grid.dim() {
                        let lhs = super::haar_pairing(t, &r_indices(&cubes, i - 1, eta), q)?;
                        let mut rhs = MultilinearOp::zeros(lhs.in_dims().to_vec(), lhs.out_dim());
                        for j in 1..=n {
                            let (phi, avg) = phi_tuple(grid, &q.cube, k, i, j, eta, n)?;
                            if j == 1 {
                                rhs.add_scaled(avg, &t1);
                            }
                            rhs.add_scaled(-1.0, &t1_op(t, &phi, q, &hq)?);
                        }
                        dev = dev.max(lhs.max_abs_diff(&rhs));
                        scale = scale.max(lhs.data().iter().fold(0.0, |a, b| a.max(b.abs())));
                    }
                }
            }
            Ok((dev, scale))
        })
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (f64::max(a, c), f64::max(b, d))))
}

/// Both sides of the paraproduct telescoping in frame 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFourCheck {
    /// `Σ_i σ^i_{3,π}` summed term by term.
    pub sigma_pi: f64,
    /// `Σ_Q ⟨⟨T1, h_Q⟩[⟨F⟩_{K_0}], ⟨f_{n+1}, h_Q⟩⟩`, cut off by the window.
    pub truncation: f64,
    /// `⟨π_{T1}(F), f_{n+1}⟩`.
    pub paraproduct: f64,
    /// `|σ + truncation − paraproduct|`.
    pub deviation: f64,
}

pub fn step_four_check(t: &SioForm, f: &[&GridFunction]) -> Result<StepFourCheck> {
    let grid = t.grid().clone();
    check_single_root(&grid)?;
    let n = t.arity();
    if f.len() != n + 1 {
        return Err(Error::InvalidArgument(format!("expected {} functions", n + 1)));
    }
    let seq = full_t1_sequence(t)?;
    let top = grid.roots().remove(0);
    let top_avgs: Vec<Vec<f64>> = f[..n].iter().map(|fm| average(fm, &top)).collect::<Result<_>>()?;
    let top_refs: Vec<&[f64]> = top_avgs.iter().map(Vec::as_slice).collect();
    let mut sigma = 0.0;
    let mut truncation = 0.0;
    let mut pp = ParaproductSpec::new(grid.clone(), t.in_spaces().to_vec(), t.out_space().clone())?;
    for (q, b) in &seq {
        let gq = pair_haar(f[n], q)?;
        truncation += crate::spaces::pairing(&b.apply(&top_refs), &gq);
        for k in 1..=(grid.window().l_max - q.cube.level) as u32 {
            let big = grid.parent(&q.cube, k)?;
            let mid = grid.parent(&q.cube, k - 1)?;
            for i in 1..=n {
                for eta in 1..1u32 << grid.dim() {
                    let (_, avg) = phi_tuple(&grid, &q.cube, k, i, 1, eta, n)?;
                    let coords: Vec<Vec<f64>> = (0..n)
                        .map(|m| {
                            let idx = match (m + 1).cmp(&i) {
                                std::cmp::Ordering::Less => HaarIndex::new(big.clone(), 0),
                                std::cmp::Ordering::Equal => HaarIndex::new(big.clone(), eta),
                                std::cmp::Ordering::Greater => HaarIndex::new(mid.clone(), 0),
                            };
                            pair_haar(f[m], &idx)
                        })
                        .collect::<Result<_>>()?;
                    let refs: Vec<&[f64]> = coords.iter().map(Vec::as_slice).collect();
                    sigma += avg * crate::spaces::pairing(&b.apply(&refs), &gq);
                }
            }
        }
        pp.insert(q.clone(), b.clone())?;
    }
    let paraproduct = paraproduct_form(&pp, &f[..n], f[n])?;
    Ok(StepFourCheck {
        sigma_pi: sigma,
        truncation,
        paraproduct,
        deviation: (sigma + truncation - paraproduct).abs(),
    })
}

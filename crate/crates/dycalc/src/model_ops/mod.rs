//! Dyadic model operators: shifts, paraproducts, multi-parameter shifts and
//! the doubly indexed lift of bilinear shift families.
//!
//! A shift of complexity `k = (k_1, …, k_{n+1})` is
//!
//! ```text
//! S(f_1, …, f_n) = Σ_K Σ_{Q_i^{(k_i)} = K} a_{K,(Q_i)}[⟨f_1, h̃_{Q_1}⟩, …, ⟨f_n, h̃_{Q_n}⟩] h̃_{Q_{n+1}}
//! ```
//!
//! where `h̃` is cancellative in exactly two fixed slots and the normalized
//! indicator `h⁰` elsewhere. Coefficients live in a sorted map, so a spec is
//! always finitely supported and every sum runs in key order.

mod lift;
mod multiparam;

pub use lift::{lift_shift_family, rad2_assemble, rad2_component, rad2_space};
pub use multiparam::{
    apply_multiparam_shift, iterate_view, multiparam_form, MultiParamKey, MultiParamShiftSpec,
    ProductFunction,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::haar::{haar_value, pair_haar, GridFunction, HaarIndex};
use crate::lattice::{Cube, Grid};
use crate::multilinear::MultilinearOp;
use crate::spaces::SpaceDescriptor;
use crate::{Error, Result};

/// Cubes and Haar signatures of one shift coefficient.
///
/// `cubes` and `etas` have one entry per slot `1..=n+1`; a signature is
/// non-zero exactly in the two cancellative slots.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShiftKey {
    pub top: Cube,
    pub cubes: Vec<Cube>,
    pub etas: Vec<u32>,
}

impl ShiftKey {
    /// Haar function of slot `slot` (0-based).
    pub fn haar(&self, slot: usize) -> HaarIndex {
        HaarIndex::new(self.cubes[slot].clone(), self.etas[slot])
    }
}

/// An n-linear dyadic shift with dense coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShiftSpecFile", into = "ShiftSpecFile")]
pub struct ShiftSpec {
    grid: Arc<Grid>,
    complexity: Vec<u32>,
    slots: [usize; 2],
    in_spaces: Vec<SpaceDescriptor>,
    out_space: SpaceDescriptor,
    coeffs: BTreeMap<ShiftKey, MultilinearOp>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShiftSpecFile {
    grid: Grid,
    complexity: Vec<u32>,
    slots: [usize; 2],
    in_spaces: Vec<SpaceDescriptor>,
    out_space: SpaceDescriptor,
    #[serde(default)]
    coefficients: Vec<CoefficientEntry<ShiftKey>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CoefficientEntry<K> {
    key: K,
    op: MultilinearOp,
}

impl TryFrom<ShiftSpecFile> for ShiftSpec {
    type Error = Error;

    fn try_from(f: ShiftSpecFile) -> Result<Self> {
        let mut s = ShiftSpec::new(Arc::new(f.grid), f.complexity, f.slots, f.in_spaces, f.out_space)?;
        for e in f.coefficients {
            s.insert(e.key, e.op)?;
        }
        Ok(s)
    }
}

impl From<ShiftSpec> for ShiftSpecFile {
    fn from(s: ShiftSpec) -> Self {
        Self {
            grid: (*s.grid).clone(),
            complexity: s.complexity,
            slots: s.slots,
            in_spaces: s.in_spaces,
            out_space: s.out_space,
            coefficients: s
                .coeffs
                .into_iter()
                .map(|(key, op)| CoefficientEntry { key, op })
                .collect(),
        }
    }
}

pub(crate) fn check_op_dims(
    op: &MultilinearOp,
    in_spaces: &[SpaceDescriptor],
    out_space: &SpaceDescriptor,
) -> Result<()> {
    let dims: Vec<usize> = in_spaces.iter().map(SpaceDescriptor::dim).collect();
    if op.in_dims() != dims.as_slice() || op.out_dim() != out_space.dim() {
        return Err(Error::SpaceMismatch(format!(
            "coefficient has shape {:?}, spaces need {:?}",
            op.shape(),
            std::iter::once(out_space.dim()).chain(dims).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

pub(crate) fn check_slots(slots: [usize; 2], n: usize) -> Result<()> {
    if slots[0] == slots[1] || slots.iter().any(|&s| s == 0 || s > n + 1) {
        return Err(Error::InvalidArgument(format!(
            "cancellative slots {slots:?} must be two distinct values in 1..={}",
            n + 1
        )));
    }
    Ok(())
}

/// Checks that `q` lies `k` levels below `top` and carries a signature
/// appropriate for a cancellative or non-cancellative slot.
pub(crate) fn check_slot_cube(
    grid: &Grid,
    top: &Cube,
    q: &Cube,
    k: u32,
    eta: u32,
    cancellative: bool,
) -> Result<()> {
    if !grid.contains_cube(q) || !grid.contains_cube(top) {
        return Err(Error::NotInGrid);
    }
    if q.level + k as i32 != top.level || grid.parent(q, k)? != *top {
        return Err(Error::Complexity(format!(
            "cube {q:?} is not the {k}-th descendant of {top:?}"
        )));
    }
    if cancellative {
        if eta == 0 || eta >= 1 << grid.dim() {
            return Err(Error::IndexConstraint(format!(
                "cancellative slot needs a signature in 1..{}, got {eta}",
                1u32 << grid.dim()
            )));
        }
        if q.level <= grid.window().l_min {
            return Err(Error::ScaleUnderflow {
                level: q.level - 1,
                l_min: grid.window().l_min,
            });
        }
    } else if eta != 0 {
        return Err(Error::IndexConstraint(format!(
            "non-cancellative slot has signature {eta}"
        )));
    }
    Ok(())
}

impl ShiftSpec {
    /// An empty shift. `slots` are 1-based and may include the output slot `n+1`.
    pub fn new(
        grid: Arc<Grid>,
        complexity: Vec<u32>,
        slots: [usize; 2],
        in_spaces: Vec<SpaceDescriptor>,
        out_space: SpaceDescriptor,
    ) -> Result<Self> {
        let n = in_spaces.len();
        if n == 0 {
            return Err(Error::InvalidArgument("a shift needs at least one input".into()));
        }
        if complexity.len() != n + 1 {
            return Err(Error::InvalidArgument(format!(
                "complexity has {} entries, expected {}",
                complexity.len(),
                n + 1
            )));
        }
        check_slots(slots, n)?;
        for s in in_spaces.iter().chain(std::iter::once(&out_space)) {
            s.validate()?;
        }
        Ok(Self {
            grid,
            complexity,
            slots,
            in_spaces,
            out_space,
            coeffs: BTreeMap::new(),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn arity(&self) -> usize {
        self.in_spaces.len()
    }

    pub fn complexity(&self) -> &[u32] {
        &self.complexity
    }

    /// Cancellative slots, 1-based.
    pub fn slots(&self) -> [usize; 2] {
        self.slots
    }

    pub fn in_spaces(&self) -> &[SpaceDescriptor] {
        &self.in_spaces
    }

    pub fn out_space(&self) -> &SpaceDescriptor {
        &self.out_space
    }

    pub fn coeffs(&self) -> &BTreeMap<ShiftKey, MultilinearOp> {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Whether slot `slot` (0-based) carries a cancellative Haar function.
    pub fn is_cancellative(&self, slot: usize) -> bool {
        self.slots.contains(&(slot + 1))
    }

    pub fn check_key(&self, key: &ShiftKey) -> Result<()> {
        let n = self.arity();
        if key.cubes.len() != n + 1 || key.etas.len() != n + 1 {
            return Err(Error::InvalidArgument(format!(
                "key must list {} cubes and signatures",
                n + 1
            )));
        }
        for j in 0..=n {
            check_slot_cube(
                &self.grid,
                &key.top,
                &key.cubes[j],
                self.complexity[j],
                key.etas[j],
                self.is_cancellative(j),
            )?;
        }
        Ok(())
    }

    /// Sets the coefficient of `key`, replacing any previous one.
    pub fn insert(&mut self, key: ShiftKey, op: MultilinearOp) -> Result<()> {
        self.check_key(&key)?;
        check_op_dims(&op, &self.in_spaces, &self.out_space)?;
        self.coeffs.insert(key, op);
        Ok(())
    }

    /// Adds `op` to the coefficient of `key`.
    pub fn accumulate(&mut self, key: ShiftKey, op: &MultilinearOp) -> Result<()> {
        self.check_key(&key)?;
        check_op_dims(op, &self.in_spaces, &self.out_space)?;
        match self.coeffs.get_mut(&key) {
            Some(a) => a.add_scaled(1.0, op),
            None => {
                self.coeffs.insert(key, op.clone());
            }
        }
        Ok(())
    }

    /// Drops coefficients that are identically zero.
    pub fn prune(&mut self) {
        self.coeffs.retain(|_, op| !op.is_zero());
    }

    /// A shift with `keys` random coefficients drawn uniformly from `[-1, 1]`.
    ///
    /// Top cubes are chosen deep enough that every cancellative slot still has children.
    pub fn random(
        grid: Arc<Grid>,
        complexity: Vec<u32>,
        slots: [usize; 2],
        in_spaces: Vec<SpaceDescriptor>,
        out_space: SpaceDescriptor,
        keys: usize,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        let mut s = Self::new(grid, complexity, slots, in_spaces, out_space)?;
        let need = (0..=s.arity())
            .map(|j| s.complexity[j] as i32 + i32::from(s.is_cancellative(j)))
            .max()
            .unwrap_or(0);
        let w = s.grid.window();
        let lowest = w.l_min + need;
        if lowest > w.l_max {
            return Err(Error::InvalidArgument(format!(
                "window [{}, {}] too shallow for complexity {:?}",
                w.l_min, w.l_max, s.complexity
            )));
        }
        let d = s.grid.dim();
        for _ in 0..keys {
            let level = rng.random_range(lowest..=w.l_max);
            let tops = s.grid.cubes_at(level);
            let top = tops[rng.random_range(0..tops.len())].clone();
            let mut cubes = Vec::with_capacity(s.arity() + 1);
            let mut etas = Vec::with_capacity(s.arity() + 1);
            for j in 0..=s.arity() {
                cubes.push(random_descendant(&s.grid, &top, s.complexity[j], rng));
                etas.push(if s.is_cancellative(j) {
                    rng.random_range(1..1u32 << d)
                } else {
                    0
                });
            }
            let dims = s.in_spaces.iter().map(SpaceDescriptor::dim).collect();
            let op = MultilinearOp::random(rng, dims, s.out_space.dim());
            s.insert(ShiftKey { top, cubes, etas }, op)?;
        }
        Ok(s)
    }
}

/// A uniformly random `k`-th generation descendant of `q`.
pub(crate) fn random_descendant(grid: &Grid, q: &Cube, k: u32, rng: &mut crate::Rng) -> Cube {
    let mut c = q.clone();
    for _ in 0..k {
        let ch = grid.children(&c).expect("window checked by caller");
        c = ch[rng.random_range(0..ch.len())].clone();
    }
    c
}

pub(crate) fn check_inputs(
    grid: &Grid,
    in_spaces: &[SpaceDescriptor],
    f: &[&GridFunction],
) -> Result<()> {
    if f.len() != in_spaces.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} inputs, got {}",
            in_spaces.len(),
            f.len()
        )));
    }
    for (m, (fm, s)) in f.iter().zip(in_spaces).enumerate() {
        if **fm.grid() != *grid {
            return Err(Error::GridMismatch);
        }
        if fm.dim() != s.dim() {
            return Err(Error::SpaceMismatch(format!(
                "input {} has dimension {}, expected {}",
                m + 1,
                fm.dim(),
                s.dim()
            )));
        }
    }
    Ok(())
}

fn add_haar(out: &mut GridFunction, idx: &HaarIndex, y: &[f64]) {
    let grid = out.grid().clone();
    for cell in grid.cells_of(&idx.cube) {
        let h = haar_value(&grid, idx, cell);
        for (a, b) in out.value_mut(cell).iter_mut().zip(y) {
            *a += h * b;
        }
    }
}

fn key_outputs(spec: &ShiftSpec, f: &[&GridFunction]) -> Result<Vec<(HaarIndex, Vec<f64>)>> {
    let n = spec.arity();
    let entries: Vec<(&ShiftKey, &MultilinearOp)> = spec.coeffs.iter().collect();
    entries
        .par_iter()
        .map(|(key, op)| {
            let coefs = (0..n)
                .map(|m| pair_haar(f[m], &key.haar(m)))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[f64]> = coefs.iter().map(Vec::as_slice).collect();
            Ok((key.haar(n), op.apply(&refs)))
        })
        .collect()
}

/// `S(f_1, …, f_n)`, a function with values in the output space.
pub fn apply_shift(spec: &ShiftSpec, f: &[&GridFunction]) -> Result<GridFunction> {
    check_inputs(&spec.grid, &spec.in_spaces, f)?;
    let mut out = GridFunction::zeros(spec.grid.clone(), spec.out_space.clone());
    for (idx, y) in key_outputs(spec, f)? {
        add_haar(&mut out, &idx, &y);
    }
    Ok(out)
}

/// `⟨S(f_1, …, f_n), g⟩`, summed key by key without forming `S(f)`.
pub fn shift_form(spec: &ShiftSpec, f: &[&GridFunction], g: &GridFunction) -> Result<f64> {
    check_inputs(&spec.grid, &spec.in_spaces, f)?;
    check_inputs(&spec.grid, std::slice::from_ref(&spec.out_space), &[g])?;
    let n = spec.arity();
    let entries: Vec<(&ShiftKey, &MultilinearOp)> = spec.coeffs.iter().collect();
    let terms = entries
        .par_iter()
        .map(|(key, op)| {
            let coefs = (0..n)
                .map(|m| pair_haar(f[m], &key.haar(m)))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[f64]> = coefs.iter().map(Vec::as_slice).collect();
            Ok(op.form(&refs, &pair_haar(g, &key.haar(n))?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// The factor `|K|^n / ∏_m |Q_m|^{1/2}` of a key.
pub fn normalization(grid: &Grid, key: &ShiftKey) -> f64 {
    let n = key.cubes.len() as i32 - 1;
    let root: f64 = key
        .cubes
        .iter()
        .map(|q| grid.measure(q.level).sqrt())
        .product();
    grid.measure(key.top.level).powi(n) / root
}

/// Every coefficient scaled by its [`normalization`].
pub fn normalized_coeffs(spec: &ShiftSpec) -> Vec<(ShiftKey, MultilinearOp)> {
    spec.coeffs
        .iter()
        .map(|(k, op)| (k.clone(), op.scaled(normalization(&spec.grid, k))))
        .collect()
}

/// `π(f_1, …, f_n) = Σ_Q a_Q[⟨f_1⟩_Q, …, ⟨f_n⟩_Q] h_Q`.
///
/// Keys are cancellative Haar indices, so one cube may carry up to `2^d − 1` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParaproductFile", into = "ParaproductFile")]
pub struct ParaproductSpec {
    grid: Arc<Grid>,
    in_spaces: Vec<SpaceDescriptor>,
    out_space: SpaceDescriptor,
    coeffs: BTreeMap<HaarIndex, MultilinearOp>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParaproductFile {
    grid: Grid,
    in_spaces: Vec<SpaceDescriptor>,
    out_space: SpaceDescriptor,
    #[serde(default)]
    coefficients: Vec<CoefficientEntry<HaarIndex>>,
}

impl TryFrom<ParaproductFile> for ParaproductSpec {
    type Error = Error;

    fn try_from(f: ParaproductFile) -> Result<Self> {
        let mut s = ParaproductSpec::new(Arc::new(f.grid), f.in_spaces, f.out_space)?;
        for e in f.coefficients {
            s.insert(e.key, e.op)?;
        }
        Ok(s)
    }
}

impl From<ParaproductSpec> for ParaproductFile {
    fn from(s: ParaproductSpec) -> Self {
        Self {
            grid: (*s.grid).clone(),
            in_spaces: s.in_spaces,
            out_space: s.out_space,
            coefficients: s
                .coeffs
                .into_iter()
                .map(|(key, op)| CoefficientEntry { key, op })
                .collect(),
        }
    }
}

impl ParaproductSpec {
    pub fn new(grid: Arc<Grid>, in_spaces: Vec<SpaceDescriptor>, out_space: SpaceDescriptor) -> Result<Self> {
        if in_spaces.is_empty() {
            return Err(Error::InvalidArgument("a paraproduct needs at least one input".into()));
        }
        for s in in_spaces.iter().chain(std::iter::once(&out_space)) {
            s.validate()?;
        }
        Ok(Self {
            grid,
            in_spaces,
            out_space,
            coeffs: BTreeMap::new(),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn arity(&self) -> usize {
        self.in_spaces.len()
    }

    pub fn in_spaces(&self) -> &[SpaceDescriptor] {
        &self.in_spaces
    }

    pub fn out_space(&self) -> &SpaceDescriptor {
        &self.out_space
    }

    pub fn coeffs(&self) -> &BTreeMap<HaarIndex, MultilinearOp> {
        &self.coeffs
    }

    pub fn insert(&mut self, key: HaarIndex, op: MultilinearOp) -> Result<()> {
        check_slot_cube(&self.grid, &key.cube, &key.cube, 0, key.eta, true)?;
        check_op_dims(&op, &self.in_spaces, &self.out_space)?;
        self.coeffs.insert(key, op);
        Ok(())
    }

    pub fn accumulate(&mut self, key: HaarIndex, op: &MultilinearOp) -> Result<()> {
        if let Some(a) = self.coeffs.get_mut(&key) {
            check_op_dims(op, &self.in_spaces, &self.out_space)?;
            a.add_scaled(1.0, op);
            Ok(())
        } else {
            self.insert(key, op.clone())
        }
    }

    pub fn prune(&mut self) {
        self.coeffs.retain(|_, op| !op.is_zero());
    }
}

fn paraproduct_terms(spec: &ParaproductSpec, f: &[&GridFunction]) -> Result<Vec<(HaarIndex, Vec<f64>)>> {
    check_inputs(&spec.grid, &spec.in_spaces, f)?;
    let entries: Vec<(&HaarIndex, &MultilinearOp)> = spec.coeffs.iter().collect();
    entries
        .par_iter()
        .map(|(idx, op)| {
            let avgs = f
                .iter()
                .map(|fm| crate::haar::average(fm, &idx.cube))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[f64]> = avgs.iter().map(Vec::as_slice).collect();
            Ok(((*idx).clone(), op.apply(&refs)))
        })
        .collect()
}

pub fn apply_paraproduct(spec: &ParaproductSpec, f: &[&GridFunction]) -> Result<GridFunction> {
    let mut out = GridFunction::zeros(spec.grid.clone(), spec.out_space.clone());
    for (idx, y) in paraproduct_terms(spec, f)? {
        add_haar(&mut out, &idx, &y);
    }
    Ok(out)
}

/// `⟨π(f_1, …, f_n), g⟩`.
pub fn paraproduct_form(spec: &ParaproductSpec, f: &[&GridFunction], g: &GridFunction) -> Result<f64> {
    check_inputs(&spec.grid, std::slice::from_ref(&spec.out_space), &[g])?;
    let mut s = 0.0;
    for (idx, y) in paraproduct_terms(spec, f)? {
        s += crate::spaces::pairing(&y, &pair_haar(g, &idx)?);
    }
    Ok(s)
}

/// Best ratio found by [`op_norm_estimate`] and the inputs attaining it.
#[derive(Clone, Debug)]
pub struct OpNormEstimate {
    pub value: f64,
    pub witness: Option<Vec<GridFunction>>,
}

fn ratio(spec: &ShiftSpec, f: &[GridFunction], exps: &[f64]) -> Result<f64> {
    let n = spec.arity();
    let den: f64 = f.iter().zip(exps).map(|(fm, p)| fm.lp_norm(*p)).product();
    if den == 0.0 {
        return Ok(0.0);
    }
    let refs: Vec<&GridFunction> = f.iter().collect();
    Ok(apply_shift(spec, &refs)?.lp_norm(exps[n]) / den)
}

fn atom(grid: &Arc<Grid>, space: &SpaceDescriptor, idx: &HaarIndex, x: &[f64]) -> GridFunction {
    let mut g = GridFunction::zeros(grid.clone(), space.clone());
    add_haar(&mut g, idx, x);
    g
}

/// Lower bound for `‖S : L^{p_1}(X_1) × … × L^{p_n}(X_n) → L^q(Y)‖`.
///
/// `exponents = (p_1, …, p_n, q)` with `Σ 1/p_m = 1/q`. Haar atoms
/// `h̃_{Q_m} x_m` built from every key are tried first (coordinate vectors
/// `x_m`), then `trials` random inputs, so the estimate is a running maximum
/// and never decreases as `trials` grows under a fixed seed.
pub fn op_norm_estimate(spec: &ShiftSpec, exponents: &[f64], trials: usize, seed: u64) -> Result<OpNormEstimate> {
    let n = spec.arity();
    if exponents.len() != n + 1 {
        return Err(Error::InvalidArgument(format!("need {} exponents", n + 1)));
    }
    if exponents.iter().any(|&p| !(p >= 1.0)) {
        return Err(Error::InvalidArgument("exponents must be at least 1".into()));
    }
    let lhs: f64 = exponents[..n].iter().map(|p| 1.0 / p).sum();
    if (lhs - 1.0 / exponents[n]).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "Σ 1/p_m = {lhs} differs from 1/q = {}",
            1.0 / exponents[n]
        )));
    }
    let mut best = OpNormEstimate {
        value: 0.0,
        witness: None,
    };
    let consider = |f: Vec<GridFunction>, best: &mut OpNormEstimate| -> Result<()> {
        let r = ratio(spec, &f, exponents)?;
        if r > best.value {
            best.value = r;
            best.witness = Some(f);
        }
        Ok(())
    };
    let dims: Vec<usize> = spec.in_spaces.iter().map(SpaceDescriptor::dim).collect();
    let combos: usize = dims.iter().product();
    for key in spec.coeffs.keys() {
        for c in 0..combos.min(64) {
            let mut rest = c;
            let f = (0..n)
                .map(|m| {
                    let mut x = vec![0.0; dims[m]];
                    x[rest % dims[m]] = 1.0;
                    rest /= dims[m];
                    atom(&spec.grid, &spec.in_spaces[m], &key.haar(m), &x)
                })
                .collect();
            consider(f, &mut best)?;
        }
    }
    let mut rng = crate::rng(seed);
    let keys: Vec<&ShiftKey> = spec.coeffs.keys().collect();
    for t in 0..trials {
        let f: Vec<GridFunction> = if t % 2 == 1 && !keys.is_empty() {
            // random values restricted to the cubes of one key
            let key = keys[rng.random_range(0..keys.len())];
            (0..n)
                .map(|m| {
                    let mut g = GridFunction::zeros(spec.grid.clone(), spec.in_spaces[m].clone());
                    for cell in spec.grid.cells_of(&key.cubes[m]) {
                        for x in g.value_mut(cell) {
                            *x = rng.random_range(-1.0..1.0);
                        }
                    }
                    g
                })
                .collect()
        } else {
            (0..n)
                .map(|m| GridFunction::random(spec.grid.clone(), spec.in_spaces[m].clone(), &mut rng))
                .collect()
        };
        consider(f, &mut best)?;
    }
    Ok(best)
}

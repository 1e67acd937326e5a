//! Discretized operator-valued singular integral forms.
//!
//! A kernel `K(x, y_1, …, y_n)` is sampled at finest-cell centers (or
//! averaged over `ρ^d` sub-points per cell) into a dense tensor over cell
//! tuples. The form
//!
//! ```text
//! Λ(f_1, …, f_{n+1}) = Σ_{x, y} |c|^{n+1} ⟨K(x, y)[f_1(y_1), …, f_n(y_n)], f_{n+1}(x)⟩
//! ```
//!
//! is the ground truth that every decomposition reproduces. Cell tuples
//! with all `n+1` cells equal contribute nothing; the kernel is never
//! evaluated there.

mod constants;
mod decompose;
mod omega;

pub use constants::{bmo_norm, cz_constants, holder_family, size_family, weak_family, CzBudget, CzConstants};
pub use decompose::{
    decompose, reconstruction_residual, step_four_check, step_three_check, Decomposition,
    DecompositionValue, Origin, Residual, ShiftTerm, StepFourCheck,
};
pub use omega::{average_over_omega, OmegaAverage, OmegaMode};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::haar::{haar_value, GridFunction, HaarIndex};
use crate::lattice::{Cube, Grid};
use crate::multilinear::MultilinearOp;
use crate::spaces::SpaceDescriptor;
use crate::{Error, Result};

/// Largest discretized kernel tensor, in `f64` entries.
pub const MAX_TENSOR: usize = 1 << 24;

/// An `n`-linear operator-valued kernel.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn in_spaces(&self) -> Vec<SpaceDescriptor>;
    fn out_space(&self) -> SpaceDescriptor;
    /// Hölder exponent of the kernel.
    fn alpha(&self) -> f64;
    /// `K(x, y_1, …, y_n)`. Never called with all points equal.
    fn eval(&self, x: &[f64], y: &[&[f64]]) -> MultilinearOp;

    fn arity(&self) -> usize {
        self.in_spaces().len()
    }
}

fn one() -> f64 {
    1.0
}

/// Serialized kernel: spaces, Hölder exponent and a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelDescriptor {
    pub in_spaces: Vec<SpaceDescriptor>,
    pub out_space: SpaceDescriptor,
    #[serde(default = "one")]
    pub alpha: f64,
    pub profile: KernelProfile,
}

/// Kernel shapes available from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelProfile {
    Zero,
    /// `λ(x, y)·A` with `λ(x, y) = (Σ_m |x − y_m|)^{-dn}`.
    Power { coefficient: MultilinearOp },
    /// `φ_0(x) ∏_m φ_m(y_m)·A` with affine factors `φ(z) = c_0 + Σ_a c_{a+1} z_a`.
    Separable {
        factors: Vec<Vec<f64>>,
        coefficient: MultilinearOp,
    },
    /// `λ(x, y) Σ_t cos(Σ_s ξ_{t,s} Σ_a z_{s,a} + θ_t)·A_t` with seeded
    /// frequencies, phases and coefficients; `z_0 = x`, `z_s = y_s`.
    Random { terms: usize, seed: u64 },
}

#[derive(Clone, Debug)]
struct RandomTerm {
    freq: Vec<f64>,
    phase: f64,
    op: MultilinearOp,
}

/// A kernel built from a [`KernelDescriptor`].
#[derive(Clone, Debug)]
pub struct StandardKernel {
    desc: KernelDescriptor,
    terms: Vec<RandomTerm>,
}

impl KernelDescriptor {
    pub fn zero(in_spaces: Vec<SpaceDescriptor>, out_space: SpaceDescriptor) -> Self {
        Self {
            in_spaces,
            out_space,
            alpha: 1.0,
            profile: KernelProfile::Zero,
        }
    }

    pub fn random(in_spaces: Vec<SpaceDescriptor>, out_space: SpaceDescriptor, terms: usize, seed: u64) -> Self {
        Self {
            in_spaces,
            out_space,
            alpha: 1.0,
            profile: KernelProfile::Random { terms, seed },
        }
    }

    fn check_op(&self, op: &MultilinearOp) -> Result<()> {
        let dims: Vec<usize> = self.in_spaces.iter().map(SpaceDescriptor::dim).collect();
        if op.in_dims() != dims.as_slice() || op.out_dim() != self.out_space.dim() {
            return Err(Error::SpaceMismatch(format!(
                "kernel coefficient has shape {:?}, spaces need {:?}",
                op.shape(),
                std::iter::once(self.out_space.dim()).chain(dims).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Kernel>> {
        if self.in_spaces.is_empty() {
            return Err(Error::InvalidArgument("a kernel needs at least one input".into()));
        }
        for s in self.in_spaces.iter().chain([&self.out_space]) {
            s.validate()?;
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hölder exponent must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        let n = self.in_spaces.len();
        let mut terms = Vec::new();
        match &self.profile {
            KernelProfile::Zero => {}
            KernelProfile::Power { coefficient } => self.check_op(coefficient)?,
            KernelProfile::Separable { factors, coefficient } => {
                self.check_op(coefficient)?;
                if factors.len() != n + 1 || factors.iter().any(Vec::is_empty) {
                    return Err(Error::InvalidArgument(format!(
                        "a separable kernel needs {} non-empty affine factors",
                        n + 1
                    )));
                }
            }
            KernelProfile::Random { terms: t, seed } => {
                use rand::Rng as _;
                if *t == 0 {
                    return Err(Error::InvalidArgument("a random kernel needs at least one term".into()));
                }
                let mut rng = crate::rng(*seed);
                let dims: Vec<usize> = self.in_spaces.iter().map(SpaceDescriptor::dim).collect();
                for _ in 0..*t {
                    let freq = (0..=n).map(|_| rng.random_range(-6.0..6.0)).collect();
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let op = MultilinearOp::random(&mut rng, dims.clone(), self.out_space.dim());
                    terms.push(RandomTerm { freq, phase, op });
                }
            }
        }
        Ok(Arc::new(StandardKernel {
            desc: self.clone(),
            terms,
        }))
    }
}

/// `(Σ_m |x − y_m|)^{-dn}`.
pub fn lambda(x: &[f64], y: &[&[f64]]) -> f64 {
    let s: f64 = y.iter().map(|ym| dist(x, ym)).sum();
    s.powi(-((x.len() * y.len()) as i32))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn affine(c: &[f64], z: &[f64]) -> f64 {
    c[0] + c[1..].iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
}

impl Kernel for StandardKernel {
    fn in_spaces(&self) -> Vec<SpaceDescriptor> {
        self.desc.in_spaces.clone()
    }

    fn out_space(&self) -> SpaceDescriptor {
        self.desc.out_space.clone()
    }

    fn alpha(&self) -> f64 {
        self.desc.alpha
    }

    fn eval(&self, x: &[f64], y: &[&[f64]]) -> MultilinearOp {
        let dims: Vec<usize> = self.desc.in_spaces.iter().map(SpaceDescriptor::dim).collect();
        match &self.desc.profile {
            KernelProfile::Zero => MultilinearOp::zeros(dims, self.desc.out_space.dim()),
            KernelProfile::Power { coefficient } => coefficient.scaled(lambda(x, y)),
            KernelProfile::Separable { factors, coefficient } => {
                let mut c = affine(&factors[0], x);
                for (fm, ym) in factors[1..].iter().zip(y) {
                    c *= affine(fm, ym);
                }
                coefficient.scaled(c)
            }
            KernelProfile::Random { .. } => {
                let l = lambda(x, y);
                let sums: Vec<f64> = std::iter::once(x)
                    .chain(y.iter().copied())
                    .map(|z| z.iter().sum())
                    .collect();
                let mut out = MultilinearOp::zeros(dims, self.desc.out_space.dim());
                for t in &self.terms {
                    let arg: f64 = t.freq.iter().zip(&sums).map(|(a, b)| a * b).sum::<f64>() + t.phase;
                    out.add_scaled(l * arg.cos(), &t.op);
                }
                out
            }
        }
    }
}

/// The `m`-th adjoint kernel: `x ↔ y_m` and the output exchanged with input `m`.
#[derive(Clone, Debug)]
pub struct AdjointKernel {
    inner: Arc<dyn Kernel>,
    m: usize,
}

impl AdjointKernel {
    pub fn new(inner: Arc<dyn Kernel>, m: usize) -> Result<Self> {
        let n = inner.arity();
        if m == 0 || m > n {
            return Err(Error::InvalidArgument(format!("adjoint index must lie in 1..={n}, got {m}")));
        }
        Ok(Self { inner, m })
    }
}

impl Kernel for AdjointKernel {
    fn in_spaces(&self) -> Vec<SpaceDescriptor> {
        let mut s = self.inner.in_spaces();
        s[self.m - 1] = self.inner.out_space().dual();
        s
    }

    fn out_space(&self) -> SpaceDescriptor {
        self.inner.in_spaces()[self.m - 1].dual()
    }

    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    fn eval(&self, x: &[f64], y: &[&[f64]]) -> MultilinearOp {
        let mut ys: Vec<&[f64]> = y.to_vec();
        let xm = ys[self.m - 1];
        ys[self.m - 1] = x;
        self.inner.eval(xm, &ys).transpose_slot(self.m)
    }
}

/// Real sub-point coordinates of every finest cell, `ρ^d` per cell.
fn sub_points(grid: &Grid, refine: usize) -> Vec<Vec<Vec<f64>>> {
    let cells: Vec<usize> = (0..grid.num_cells()).collect();
    sub_points_of(grid, refine, &cells)
}

/// Mean of `K(x, y)` over all choices of `x ∈ xs`, `y_m ∈ ys[m]`.
fn averaged_kernel(kernel: &dyn Kernel, xs: &[Vec<f64>], ys: &[&[Vec<f64>]], op_len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; op_len];
    let mut pos = vec![0usize; ys.len()];
    let mut count = 0usize;
    for x in xs {
        pos.iter_mut().for_each(|p| *p = 0);
        loop {
            let y: Vec<&[f64]> = ys.iter().zip(&pos).map(|(l, &p)| l[p].as_slice()).collect();
            let k = kernel.eval(x, &y);
            for (a, b) in acc.iter_mut().zip(k.data()) {
                *a += b;
            }
            count += 1;
            if !advance(&mut pos, |m| ys[m].len()) {
                break;
            }
        }
    }
    let c = count as f64;
    acc.iter_mut().for_each(|a| *a /= c);
    acc
}

/// Odometer step, last digit fastest. Returns false after the last state.
fn advance(pos: &mut [usize], len: impl Fn(usize) -> usize) -> bool {
    for m in (0..pos.len()).rev() {
        pos[m] += 1;
        if pos[m] < len(m) {
            return true;
        }
        pos[m] = 0;
    }
    false
}

/// `⟨A[e_1, …, e_n], e_out⟩` for a tensor block with axes `[out, in_1, …, in_n]`.
fn block_form(block: &[f64], in_dims: &[usize], inputs: &[&[f64]], out: &[f64]) -> f64 {
    if block.len() == 1 {
        return block[0] * out[0] * inputs.iter().map(|e| e[0]).product::<f64>();
    }
    let mut cur = block.to_vec();
    for (slot, e) in inputs.iter().enumerate().rev() {
        let dim = in_dims[slot];
        cur = cur
            .chunks_exact(dim)
            .map(|row| row.iter().zip(e.iter()).map(|(a, b)| a * b).sum())
            .collect();
    }
    cur.iter().zip(out).map(|(a, b)| a * b).sum()
}

fn scalar_support(phi: &[f64]) -> Vec<(usize, f64)> {
    phi.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect()
}

/// Non-zero entries of `h_Q^η` as `(cell, value)` pairs.
pub(crate) fn haar_support(grid: &Grid, idx: &HaarIndex) -> Vec<(usize, f64)> {
    grid.cells_of(&idx.cube)
        .into_iter()
        .map(|c| (c, haar_value(grid, idx, c)))
        .collect()
}

/// A kernel discretized on the finest cells of a grid.
#[derive(Clone, Debug)]
pub struct SioForm {
    grid: Arc<Grid>,
    kernel: Arc<dyn Kernel>,
    refine: usize,
    in_spaces: Vec<SpaceDescriptor>,
    out_space: SpaceDescriptor,
    op_len: usize,
    data: Arc<Vec<f64>>,
}

impl SioForm {
    /// Samples `kernel` on `grid`, averaging over `refine^d` sub-points per cell.
    pub fn new(kernel: Arc<dyn Kernel>, grid: Arc<Grid>, refine: usize) -> Result<Self> {
        if refine == 0 {
            return Err(Error::InvalidArgument("refinement factor must be at least 1".into()));
        }
        let in_spaces = kernel.in_spaces();
        let out_space = kernel.out_space();
        let n = in_spaces.len();
        if n == 0 {
            return Err(Error::InvalidArgument("a kernel needs at least one input".into()));
        }
        let in_dims: Vec<usize> = in_spaces.iter().map(SpaceDescriptor::dim).collect();
        let op_len = out_space.dim() * in_dims.iter().product::<usize>();
        let nc = grid.num_cells();
        let row = nc
            .checked_pow(n as u32)
            .and_then(|r| r.checked_mul(op_len))
            .filter(|r| r.checked_mul(nc).is_some_and(|t| t <= MAX_TENSOR))
            .ok_or_else(|| {
                Error::BudgetExceeded(format!(
                    "kernel tensor over {nc} cells with arity {n} exceeds {MAX_TENSOR} entries"
                ))
            })?;
        let pts = sub_points(&grid, refine);
        if nc >= 2 {
            let probe = kernel.eval(&pts[0][0], &vec![pts[1][0].as_slice(); n]);
            if probe.in_dims() != in_dims.as_slice() || probe.out_dim() != out_space.dim() {
                return Err(Error::SpaceMismatch(
                    "kernel values do not match the declared spaces".into(),
                ));
            }
        }
        let mut data = vec![0.0; row * nc];
        data.par_chunks_mut(row).enumerate().for_each(|(x, chunk)| {
            let mut ys = vec![0usize; n];
            for block in chunk.chunks_mut(op_len) {
                if !ys.iter().all(|&y| y == x) {
                    let lists: Vec<&[Vec<f64>]> = ys.iter().map(|&y| pts[y].as_slice()).collect();
                    block.copy_from_slice(&averaged_kernel(kernel.as_ref(), &pts[x], &lists, op_len));
                }
                advance(&mut ys, |_| nc);
            }
        });
        Ok(Self {
            grid,
            kernel,
            refine,
            in_spaces,
            out_space,
            op_len,
            data: Arc::new(data),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    pub fn refine(&self) -> usize {
        self.refine
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

    pub fn alpha(&self) -> f64 {
        self.kernel.alpha()
    }

    fn in_dims(&self) -> Vec<usize> {
        self.in_spaces.iter().map(SpaceDescriptor::dim).collect()
    }

    fn offset(&self, x: usize, ys: &[usize]) -> usize {
        let nc = self.grid.num_cells();
        ys.iter().fold(x, |acc, &y| acc * nc + y) * self.op_len
    }

    /// The tensor entry of the cell tuple `(x, y_1, …, y_n)`.
    pub fn entry(&self, x: usize, ys: &[usize]) -> MultilinearOp {
        let o = self.offset(x, ys);
        let mut op = MultilinearOp::zeros(self.in_dims(), self.out_space.dim());
        op.data_mut().copy_from_slice(&self.data[o..o + self.op_len]);
        op
    }

    /// Mean of `K(x, y)` over the sub-points of the cells `ys`, at a fixed point `x`.
    pub fn kernel_at(&self, x: &[f64], ys: &[usize]) -> Vec<f64> {
        let pts = sub_points_of(&self.grid, self.refine, ys);
        let lists: Vec<&[Vec<f64>]> = pts.iter().map(Vec::as_slice).collect();
        averaged_kernel(self.kernel.as_ref(), &[x.to_vec()], &lists, self.op_len)
    }

    /// `Σ_{x, y} |c|^{n+1} φ_{n+1}(x) ∏_m φ_m(y_m) K(x, y)` for scalar cell arrays.
    pub fn contract(&self, phis: &[&[f64]]) -> Result<MultilinearOp> {
        let n = self.arity();
        if phis.len() != n + 1 || phis.iter().any(|p| p.len() != self.grid.num_cells()) {
            return Err(Error::InvalidArgument(format!(
                "expected {} cell arrays of length {}",
                n + 1,
                self.grid.num_cells()
            )));
        }
        let supp: Vec<Vec<(usize, f64)>> = phis.iter().map(|p| scalar_support(p)).collect();
        let refs: Vec<&[(usize, f64)]> = supp.iter().map(Vec::as_slice).collect();
        Ok(self.contract_sparse(&refs))
    }

    /// [`SioForm::contract`] on `(cell, value)` support lists.
    pub(crate) fn contract_sparse(&self, supp: &[&[(usize, f64)]]) -> MultilinearOp {
        let n = self.arity();
        let mut op = MultilinearOp::zeros(self.in_dims(), self.out_space.dim());
        let w = self.grid.cell_measure().powi(n as i32 + 1);
        for part in self.contract_support(supp) {
            for (a, b) in op.data_mut().iter_mut().zip(&part) {
                *a += w * b;
            }
        }
        op
    }

    /// Unweighted partial sums of [`SioForm::contract`], one per output cell, in order.
    fn contract_support(&self, supp: &[&[(usize, f64)]]) -> Vec<Vec<f64>> {
        let n = self.arity();
        if supp[..n].iter().any(|s| s.is_empty()) {
            return Vec::new();
        }
        supp[n]
            .par_iter()
            .map(|&(x, vx)| {
                let mut acc = vec![0.0; self.op_len];
                let mut pos = vec![0usize; n];
                let mut ys = vec![0usize; n];
                loop {
                    let mut c = vx;
                    for m in 0..n {
                        let (y, v) = supp[m][pos[m]];
                        ys[m] = y;
                        c *= v;
                    }
                    let o = self.offset(x, &ys);
                    for (a, b) in acc.iter_mut().zip(&self.data[o..o + self.op_len]) {
                        *a += c * b;
                    }
                    if !advance(&mut pos, |m| supp[m].len()) {
                        break;
                    }
                }
                acc
            })
            .collect()
    }

    /// The `m`-th adjoint form (`1 ≤ m ≤ n`).
    pub fn adjoint(&self, m: usize) -> Result<SioForm> {
        let kernel: Arc<dyn Kernel> = Arc::new(AdjointKernel::new(self.kernel.clone(), m)?);
        let in_spaces = kernel.in_spaces();
        let out_space = kernel.out_space();
        let n = self.arity();
        let nc = self.grid.num_cells();
        let row = nc.pow(n as u32) * self.op_len;
        let in_dims = self.in_dims();
        let mut data = vec![0.0; self.data.len()];
        data.par_chunks_mut(row).enumerate().for_each(|(xp, chunk)| {
            let mut yp = vec![0usize; n];
            let mut tmp = MultilinearOp::zeros(in_dims.clone(), self.out_space.dim());
            for block in chunk.chunks_mut(self.op_len) {
                let mut ys = yp.clone();
                ys[m - 1] = xp;
                let o = self.offset(yp[m - 1], &ys);
                let src = &self.data[o..o + self.op_len];
                if self.op_len == 1 {
                    block[0] = src[0];
                } else {
                    tmp.data_mut().copy_from_slice(src);
                    block.copy_from_slice(tmp.transpose_slot(m).data());
                }
                advance(&mut yp, |_| nc);
            }
        });
        Ok(Self {
            grid: self.grid.clone(),
            kernel,
            refine: self.refine,
            in_spaces,
            out_space,
            op_len: self.op_len,
            data: Arc::new(data),
        })
    }

    fn check_functions(&self, f: &[&GridFunction]) -> Result<()> {
        let n = self.arity();
        if f.len() != n + 1 {
            return Err(Error::InvalidArgument(format!("expected {} functions, got {}", n + 1, f.len())));
        }
        for (m, fm) in f.iter().enumerate() {
            if **fm.grid() != *self.grid {
                return Err(Error::GridMismatch);
            }
            let want = if m < n { self.in_spaces[m].dim() } else { self.out_space.dim() };
            if fm.dim() != want {
                return Err(Error::SpaceMismatch(format!(
                    "function {} has dimension {}, expected {want}",
                    m + 1,
                    fm.dim()
                )));
            }
        }
        Ok(())
    }
}

fn sub_points_of(grid: &Grid, refine: usize, cells: &[usize]) -> Vec<Vec<Vec<f64>>> {
    let d = grid.dim();
    let h = grid.side(grid.window().l_min);
    let per = refine.pow(d as u32);
    cells
        .iter()
        .map(|&c| {
            let corner = grid.cell_corner(c);
            (0..per)
                .map(|s| {
                    let mut rem = s;
                    (0..d)
                        .map(|a| {
                            let k = rem % refine;
                            rem /= refine;
                            (corner[a] as f64 + (k as f64 + 0.5) / refine as f64) * h
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `⟨T(f_1, …, f_n), f_{n+1}⟩` by the full cell sum.
pub fn direct_form(t: &SioForm, f: &[&GridFunction]) -> Result<f64> {
    t.check_functions(f)?;
    let n = t.arity();
    let in_dims = t.in_dims();
    let supp: Vec<Vec<usize>> = f.iter().map(|fm| fm.support()).collect();
    if supp.iter().any(Vec::is_empty) {
        return Ok(0.0);
    }
    let parts: Vec<f64> = supp[n]
        .par_iter()
        .map(|&x| {
            let out = f[n].value(x);
            let mut pos = vec![0usize; n];
            let mut ys = vec![0usize; n];
            let mut acc = 0.0;
            loop {
                for m in 0..n {
                    ys[m] = supp[m][pos[m]];
                }
                let o = t.offset(x, &ys);
                let inputs: Vec<&[f64]> = (0..n).map(|m| f[m].value(ys[m])).collect();
                acc += block_form(&t.data[o..o + t.op_len], &in_dims, &inputs, out);
                if !advance(&mut pos, |m| supp[m].len()) {
                    break;
                }
            }
            acc
        })
        .collect();
    Ok(t.grid.cell_measure().powi(n as i32 + 1) * parts.iter().sum::<f64>())
}

/// `T^{m*}`; see [`SioForm::adjoint`].
pub fn adjoint(t: &SioForm, m: usize) -> Result<SioForm> {
    t.adjoint(m)
}

/// `h_Q^η` as a dense array over the finest cells.
pub fn haar_array(grid: &Grid, idx: &HaarIndex) -> Vec<f64> {
    let mut v = vec![0.0; grid.num_cells()];
    for c in grid.cells_of(&idx.cube) {
        v[c] = haar_value(grid, idx, c);
    }
    v
}

/// `1_Q` as a dense array over the finest cells.
pub fn indicator_array(grid: &Grid, q: &Cube) -> Vec<f64> {
    let mut v = vec![0.0; grid.num_cells()];
    for c in grid.cells_of(q) {
        v[c] = 1.0;
    }
    v
}

/// `⟨T(h_{Q_1}^{η_1}, …, h_{Q_n}^{η_n}), h_Q^η⟩` by direct cell sums.
pub fn haar_pairing(t: &SioForm, r: &[HaarIndex], q: &HaarIndex) -> Result<MultilinearOp> {
    if r.len() != t.arity() {
        return Err(Error::InvalidArgument(format!(
            "expected {} input cubes, got {}",
            t.arity(),
            r.len()
        )));
    }
    for idx in r.iter().chain([q]) {
        if !t.grid.contains_cube(&idx.cube) {
            return Err(Error::NotInGrid);
        }
    }
    let arrays: Vec<Vec<f64>> = r.iter().chain([q]).map(|i| haar_array(&t.grid, i)).collect();
    let refs: Vec<&[f64]> = arrays.iter().map(Vec::as_slice).collect();
    t.contract(&refs)
}

/// `⟨TΦ, φ_Q⟩` split into the near part on `(CQ)^n` and `n` far parts
/// with the kernel difference `K(x, y) − K(c_Q, y)`.
pub fn t1_pairing(t: &SioForm, phi: &[&[f64]], phi_q: &[f64], q: &Cube, c: f64) -> Result<MultilinearOp> {
    let grid = &t.grid;
    let d = grid.dim();
    let n = t.arity();
    if !(c >= 2.0 * (d as f64).sqrt()) {
        return Err(Error::InvalidArgument(format!(
            "dilation constant must be at least 2√d, got {c}"
        )));
    }
    if phi.len() != n {
        return Err(Error::InvalidArgument(format!("expected {n} functions, got {}", phi.len())));
    }
    let nc = grid.num_cells();
    if phi_q.len() != nc || phi.iter().any(|p| p.len() != nc) {
        return Err(Error::InvalidArgument(format!("cell arrays must have length {nc}")));
    }
    let cells_q = grid.cells_of(q);
    let inside_q: std::collections::HashSet<usize> = cells_q.iter().copied().collect();
    if phi_q.iter().enumerate().any(|(i, v)| *v != 0.0 && !inside_q.contains(&i)) {
        return Err(Error::InvalidArgument("φ_Q must be supported in Q".into()));
    }
    let mass: f64 = phi_q.iter().sum();
    let abs: f64 = phi_q.iter().map(|v| v.abs()).sum();
    if mass.abs() > 1e-12 * abs.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument("φ_Q must have zero integral".into()));
    }
    let cq = grid.center(q);
    let half = c * grid.side(q.level) / 2.0;
    let in_cq: Vec<bool> = (0..nc)
        .map(|i| {
            grid.cell_center(i)
                .iter()
                .zip(&cq)
                .all(|(a, b)| (a - b).abs() < half)
        })
        .collect();
    let restrict = |p: &[f64], inside: bool| -> Vec<f64> {
        p.iter()
            .zip(&in_cq)
            .map(|(v, &i)| if i == inside { *v } else { 0.0 })
            .collect()
    };
    let near: Vec<Vec<f64>> = phi.iter().map(|p| restrict(p, true)).collect();
    let mut refs: Vec<&[f64]> = near.iter().map(Vec::as_slice).collect();
    refs.push(phi_q);
    let mut total = t.contract(&refs)?;
    let w = grid.cell_measure();
    let q_mass = w * mass;
    for m in 0..n {
        let mut parts: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (l, p) in phi.iter().enumerate() {
            parts.push(match l.cmp(&m) {
                std::cmp::Ordering::Less => near[l].clone(),
                std::cmp::Ordering::Equal => restrict(p, false),
                std::cmp::Ordering::Greater => p.to_vec(),
            });
        }
        let mut refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
        refs.push(phi_q);
        total.add_scaled(1.0, &t.contract(&refs)?);
        // The c_Q term factors through ∫φ_Q, which is usually exactly zero.
        if q_mass != 0.0 {
            let supp: Vec<Vec<(usize, f64)>> = parts.iter().map(|p| scalar_support(p)).collect();
            if supp.iter().all(|s| !s.is_empty()) {
                let mut pos = vec![0usize; n];
                let mut ys = vec![0usize; n];
                let mut acc = vec![0.0; t.op_len];
                loop {
                    let mut coef = w.powi(n as i32);
                    for l in 0..n {
                        ys[l] = supp[l][pos[l]].0;
                        coef *= supp[l][pos[l]].1;
                    }
                    for (a, b) in acc.iter_mut().zip(t.kernel_at(&cq, &ys)) {
                        *a += coef * b;
                    }
                    if !advance(&mut pos, |l| supp[l].len()) {
                        break;
                    }
                }
                for (a, b) in total.data_mut().iter_mut().zip(&acc) {
                    *a -= q_mass * b;
                }
            }
        }
    }
    Ok(total)
}

/// `⟨T1, h_Q^η⟩` for every cancellative Haar index, with `C = 2√d`.
pub fn full_t1_sequence(t: &SioForm) -> Result<BTreeMap<HaarIndex, MultilinearOp>> {
    let grid = &t.grid;
    let ones = vec![1.0; grid.num_cells()];
    let phi: Vec<&[f64]> = vec![ones.as_slice(); t.arity()];
    let c = 2.0 * (grid.dim() as f64).sqrt();
    crate::haar::cancellative_indices(grid)
        .into_par_iter()
        .map(|idx| {
            let h = haar_array(grid, &idx);
            let op = t1_pairing(t, &phi, &h, &idx.cube, c)?;
            Ok((idx, op))
        })
        .collect()
}

/// Position of a pair `(Q, R)`, `R = Q_1 × ⋯ × Q_n`, in the case analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Separated,
    Nearby,
    Inside,
    Diagonal,
}

/// Classifies `(Q, R)` for `ℓ(R) ≥ ℓ(Q)`, where `ℓ(R)` is the side of `R`'s largest factor.
pub fn classify_pair(grid: &Grid, q: &Cube, r: &[Cube], gamma: f64) -> Result<PairClass> {
    let lr = r
        .iter()
        .map(|c| c.level)
        .max()
        .ok_or_else(|| Error::InvalidArgument("R needs at least one factor".into()))?;
    if lr < q.level {
        return Err(Error::InvalidArgument("ℓ(R) must be at least ℓ(Q)".into()));
    }
    let threshold = grid.side(q.level).powf(gamma) * (grid.side(lr) / 2.0).powf(1.0 - gamma);
    let dist = r.iter().map(|c| grid.distance(q, c)).fold(0.0, f64::max);
    Ok(if dist > threshold {
        PairClass::Separated
    } else if r.iter().any(|c| !grid.intersects(q, c)) {
        PairClass::Nearby
    } else if lr > q.level {
        PairClass::Inside
    } else {
        PairClass::Diagonal
    })
}

#[cfg(test)]
mod tests;

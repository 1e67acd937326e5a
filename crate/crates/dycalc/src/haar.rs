//! Step functions on the finest cells of a grid and the Haar system.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::lattice::{Cube, Grid};
use crate::spaces::SpaceDescriptor;
use crate::{Error, Result};

/// A function constant on each finest cell, with values in a finite-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    space: SpaceDescriptor,
    dim: usize,
    data: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Arc<Grid>, space: SpaceDescriptor) -> Self {
        let dim = space.dim();
        let data = vec![0.0; grid.num_cells() * dim];
        Self {
            grid,
            space,
            dim,
            data,
        }
    }

    pub fn from_values(grid: Arc<Grid>, space: SpaceDescriptor, data: Vec<f64>) -> Result<Self> {
        let dim = space.dim();
        if data.len() != grid.num_cells() * dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.num_cells() * dim,
                data.len()
            )));
        }
        Ok(Self {
            grid,
            space,
            dim,
            data,
        })
    }

    pub fn scalar(grid: Arc<Grid>, data: Vec<f64>) -> Result<Self> {
        Self::from_values(grid, SpaceDescriptor::Scalar, data)
    }

    pub fn from_fn(
        grid: Arc<Grid>,
        space: SpaceDescriptor,
        mut f: impl FnMut(usize, &mut [f64]),
    ) -> Self {
        let mut g = Self::zeros(grid, space);
        let d = g.dim;
        for (i, chunk) in g.data.chunks_exact_mut(d).enumerate() {
            f(i, chunk);
        }
        g
    }

    pub fn constant(grid: Arc<Grid>, space: SpaceDescriptor, value: &[f64]) -> Self {
        Self::from_fn(grid, space, |_, out| out.copy_from_slice(value))
    }

    /// Scalar indicator `1_Q`.
    pub fn indicator(grid: Arc<Grid>, q: &Cube) -> Self {
        let mut g = Self::zeros(grid, SpaceDescriptor::Scalar);
        for c in g.grid.cells_of(q) {
            g.data[c] = 1.0;
        }
        g
    }

    /// Independent uniform `[-1, 1]` coordinates on every cell.
    pub fn random(grid: Arc<Grid>, space: SpaceDescriptor, rng: &mut crate::Rng) -> Self {
        Self::from_fn(grid, space, |_, out| {
            for x in out {
                *x = rng.random_range(-1.0..1.0);
            }
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn value(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn value_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        self.check_grid(other)?;
        if self.dim != other.dim {
            return Err(Error::SpaceMismatch("functions take values in different spaces".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.add_assign_scaled(1.0, other);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.add_assign_scaled(-1.0, other);
        Ok(out)
    }

    pub fn add_assign_scaled(&mut self, c: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= c);
        out
    }

    /// Multiplies by a scalar function cell by cell.
    pub fn mul_scalar_fn(&self, g: &Self) -> Result<Self> {
        self.check_grid(g)?;
        let mut out = self.clone();
        let d = self.dim;
        for (i, chunk) in out.data.chunks_exact_mut(d).enumerate() {
            let s = g.data[i];
            chunk.iter_mut().for_each(|x| *x *= s);
        }
        Ok(out)
    }

    /// `∫ f`.
    pub fn integral(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for chunk in self.data.chunks_exact(self.dim) {
            for (a, b) in s.iter_mut().zip(chunk) {
                *a += b;
            }
        }
        let m = self.grid.cell_measure();
        s.iter_mut().for_each(|x| *x *= m);
        s
    }

    /// Pointwise norm `x ↦ ‖f(x)‖_X` as a scalar function.
    pub fn pointwise_norm(&self) -> Self {
        let data = self
            .data
            .chunks_exact(self.dim)
            .map(|c| self.space.norm(c))
            .collect();
        Self {
            grid: self.grid.clone(),
            space: SpaceDescriptor::Scalar,
            dim: 1,
            data,
        }
    }

    /// `‖f‖_{L^p(X)}`; `p = ∞` gives the essential supremum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let norms = self.data.chunks_exact(self.dim).map(|c| self.space.norm(c));
        if p.is_infinite() {
            return norms.fold(0.0, f64::max);
        }
        let m = self.grid.cell_measure();
        (norms.map(|v| v.powf(p)).sum::<f64>() * m).powf(1.0 / p)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Cells where some coordinate is non-zero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.num_cells())
            .filter(|&i| self.value(i).iter().any(|v| *v != 0.0))
            .collect()
    }
}

/// A Haar function `h_Q^η`; bit `a` of `eta` selects the cancellative factor along axis `a`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HaarIndex {
    pub cube: Cube,
    pub eta: u32,
}

impl HaarIndex {
    pub fn new(cube: Cube, eta: u32) -> Self {
        Self { cube, eta }
    }

    pub fn is_cancellative(&self) -> bool {
        self.eta != 0
    }
}

/// Sign pattern of `h^η` on the child `δ` (bit `a` set = upper half along axis `a`).
pub fn child_sign(eta: u32, delta: u32) -> f64 {
    if (eta & delta).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Index `δ` of the child of `q` that contains the finest cell with corner `corner`.
pub fn child_position(grid: &Grid, q: &Cube, corner: &[i64]) -> u32 {
    let half = grid.unit(q.level) / 2;
    let mut delta = 0;
    for a in 0..grid.dim() {
        if corner[a] - q.corner[a] >= half {
            delta |= 1 << a;
        }
    }
    delta
}

fn check_haar(grid: &Grid, idx: &HaarIndex) -> Result<()> {
    if !grid.contains_cube(&idx.cube) {
        return Err(Error::NotInGrid);
    }
    if idx.eta >= 1 << grid.dim() {
        return Err(Error::InvalidArgument(format!("signature {} has bits beyond d", idx.eta)));
    }
    if idx.eta != 0 && idx.cube.level <= grid.window().l_min {
        return Err(Error::ScaleUnderflow {
            level: idx.cube.level - 1,
            l_min: grid.window().l_min,
        });
    }
    Ok(())
}

/// Value of `h_Q^η` on a finest cell, or 0 off `Q`.
pub fn haar_value(grid: &Grid, idx: &HaarIndex, cell: usize) -> f64 {
    let corner = grid.cell_corner(cell);
    let u = grid.unit(idx.cube.level);
    if (0..grid.dim()).any(|a| corner[a] < idx.cube.corner[a] || corner[a] >= idx.cube.corner[a] + u) {
        return 0.0;
    }
    let norm = grid.measure(idx.cube.level).sqrt().recip();
    if idx.eta == 0 {
        norm
    } else {
        norm * child_sign(idx.eta, child_position(grid, &idx.cube, &corner))
    }
}

/// `h_Q^η` as a scalar grid function.
pub fn haar(grid: &Arc<Grid>, idx: &HaarIndex) -> Result<GridFunction> {
    check_haar(grid, idx)?;
    let mut g = GridFunction::zeros(grid.clone(), SpaceDescriptor::Scalar);
    for c in grid.cells_of(&idx.cube) {
        g.data[c] = haar_value(grid, idx, c);
    }
    Ok(g)
}

/// `∫ f g` for scalar `g`.
pub fn pair(f: &GridFunction, g: &GridFunction) -> Result<Vec<f64>> {
    f.check_grid(g)?;
    if g.dim != 1 {
        return Err(Error::SpaceMismatch("second argument must be scalar".into()));
    }
    let mut s = vec![0.0; f.dim];
    for (i, &w) in g.data.iter().enumerate() {
        if w != 0.0 {
            for (a, b) in s.iter_mut().zip(f.value(i)) {
                *a += w * b;
            }
        }
    }
    let m = f.grid.cell_measure();
    s.iter_mut().for_each(|x| *x *= m);
    Ok(s)
}

/// `∫ ⟨f(x), g(x)⟩ dx` for functions with the same coordinate dimension.
pub fn dual_pair(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_grid(g)?;
    if f.dim != g.dim {
        return Err(Error::SpaceMismatch(format!(
            "cannot pair dimensions {} and {}",
            f.dim, g.dim
        )));
    }
    let s: f64 = f.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
    Ok(s * f.grid.cell_measure())
}

/// `⟨f, h_Q^η⟩`, summing only over `Q`.
pub fn pair_haar(f: &GridFunction, idx: &HaarIndex) -> Result<Vec<f64>> {
    check_haar(&f.grid, idx)?;
    let grid = &f.grid;
    let mut s = vec![0.0; f.dim];
    let q = &idx.cube;
    let half = grid.unit(q.level) / 2;
    for c in grid.cells_of(q) {
        let sign = if idx.eta == 0 {
            1.0
        } else {
            let corner = grid.cell_corner(c);
            let mut delta = 0;
            for a in 0..grid.dim() {
                if corner[a] - q.corner[a] >= half {
                    delta |= 1 << a;
                }
            }
            child_sign(idx.eta, delta)
        };
        for (a, b) in s.iter_mut().zip(f.value(c)) {
            *a += sign * b;
        }
    }
    let scale = grid.cell_measure() / grid.measure(q.level).sqrt();
    s.iter_mut().for_each(|x| *x *= scale);
    Ok(s)
}

/// `⟨f⟩_Q`.
pub fn average(f: &GridFunction, q: &Cube) -> Result<Vec<f64>> {
    if !f.grid.contains_cube(q) {
        return Err(Error::NotInGrid);
    }
    let cells = f.grid.cells_of(q);
    let mut s = vec![0.0; f.dim];
    for &c in &cells {
        for (a, b) in s.iter_mut().zip(f.value(c)) {
            *a += b;
        }
    }
    let n = cells.len() as f64;
    s.iter_mut().for_each(|x| *x /= n);
    Ok(s)
}

/// `⟨‖f‖_X⟩_Q`.
pub fn average_norm(f: &GridFunction, q: &Cube) -> Result<f64> {
    if !f.grid.contains_cube(q) {
        return Err(Error::NotInGrid);
    }
    let cells = f.grid.cells_of(q);
    let s: f64 = cells.iter().map(|&c| f.space.norm(f.value(c))).sum();
    Ok(s / cells.len() as f64)
}

fn add_on(out: &mut GridFunction, q: &Cube, v: &[f64], c: f64) {
    let grid = out.grid.clone();
    for cell in grid.cells_of(q) {
        for (a, b) in out.value_mut(cell).iter_mut().zip(v) {
            *a += c * b;
        }
    }
}

/// `E_Q f = ⟨f⟩_Q 1_Q`.
pub fn expectation(f: &GridFunction, q: &Cube) -> Result<GridFunction> {
    let avg = average(f, q)?;
    let mut out = GridFunction::zeros(f.grid.clone(), f.space.clone());
    add_on(&mut out, q, &avg, 1.0);
    Ok(out)
}

/// `Δ_Q f = Σ_{Q' ∈ ch(Q)} E_{Q'} f − E_Q f`.
pub fn martingale_diff(f: &GridFunction, q: &Cube) -> Result<GridFunction> {
    block_diff(f, q, 0)
}

fn descendants(grid: &Grid, q: &Cube, k: u32) -> Result<Vec<Cube>> {
    let level = q.level - k as i32;
    if level < grid.window().l_min {
        return Err(Error::ScaleUnderflow {
            level,
            l_min: grid.window().l_min,
        });
    }
    let mut cur = vec![q.clone()];
    for _ in 0..k {
        cur = cur
            .iter()
            .map(|c| grid.children(c))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
    }
    Ok(cur)
}

/// `Δ_Q^k f = Σ_{R^{(k)} = Q} Δ_R f`.
pub fn block_diff(f: &GridFunction, q: &Cube, k: u32) -> Result<GridFunction> {
    if !f.grid.contains_cube(q) {
        return Err(Error::NotInGrid);
    }
    if q.level - (k as i32) <= f.grid.window().l_min {
        return Err(Error::ScaleUnderflow {
            level: q.level - k as i32 - 1,
            l_min: f.grid.window().l_min,
        });
    }
    let mut out = GridFunction::zeros(f.grid.clone(), f.space.clone());
    for r in descendants(&f.grid, q, k)? {
        add_on(&mut out, &r, &average(f, &r)?, -1.0);
        for c in f.grid.children(&r)? {
            add_on(&mut out, &c, &average(f, &c)?, 1.0);
        }
    }
    Ok(out)
}

/// `E_Q^k f = Σ_{R^{(k)} = Q} E_R f`.
pub fn block_avg(f: &GridFunction, q: &Cube, k: u32) -> Result<GridFunction> {
    if !f.grid.contains_cube(q) {
        return Err(Error::NotInGrid);
    }
    let mut out = GridFunction::zeros(f.grid.clone(), f.space.clone());
    for r in descendants(&f.grid, q, k)? {
        add_on(&mut out, &r, &average(f, &r)?, 1.0);
    }
    Ok(out)
}

/// `E_{2^L} f = Σ_{ℓ(Q) = 2^L} E_Q f` over the whole box.
pub fn cond_exp(f: &GridFunction, level: i32) -> Result<GridFunction> {
    let w = f.grid.window();
    if !w.contains(level) {
        return Err(Error::InvalidArgument(format!("level {level} outside the window")));
    }
    let mut out = GridFunction::zeros(f.grid.clone(), f.space.clone());
    for q in f.grid.cubes_at(level) {
        add_on(&mut out, &q, &average(f, &q)?, 1.0);
    }
    Ok(out)
}

/// Haar coefficients of a grid function together with its root averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub coarse: BTreeMap<Cube, Vec<f64>>,
    pub coeffs: BTreeMap<HaarIndex, Vec<f64>>,
}

/// Every cancellative Haar index of the grid.
pub fn cancellative_indices(grid: &Grid) -> Vec<HaarIndex> {
    grid.parent_cubes()
        .into_iter()
        .flat_map(|q| (1..1u32 << grid.dim()).map(move |eta| HaarIndex::new(q.clone(), eta)))
        .collect()
}

/// Haar expansion `f = Σ_{roots R} E_R f + Σ_{Q, η≠0} ⟨f, h_Q^η⟩ h_Q^η`.
pub fn expand(f: &GridFunction) -> Result<Expansion> {
    let mut coarse = BTreeMap::new();
    for r in f.grid.roots() {
        let a = average(f, &r)?;
        coarse.insert(r, a);
    }
    let mut coeffs = BTreeMap::new();
    for idx in cancellative_indices(&f.grid) {
        let c = pair_haar(f, &idx)?;
        coeffs.insert(idx, c);
    }
    Ok(Expansion { coarse, coeffs })
}

/// Inverse of [`expand`].
pub fn reconstruct(exp: &Expansion, grid: &Arc<Grid>, space: &SpaceDescriptor) -> Result<GridFunction> {
    let mut out = GridFunction::zeros(grid.clone(), space.clone());
    for (r, a) in &exp.coarse {
        if !grid.contains_cube(r) {
            return Err(Error::NotInGrid);
        }
        add_on(&mut out, r, a, 1.0);
    }
    for (idx, c) in &exp.coeffs {
        check_haar(grid, idx)?;
        for cell in grid.cells_of(&idx.cube) {
            let h = haar_value(grid, idx, cell);
            for (a, b) in out.value_mut(cell).iter_mut().zip(c) {
                *a += h * b;
            }
        }
    }
    Ok(out)
}

/// How values follow the JSON header in a grid-function file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    F64le,
    Json,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    grid: Grid,
    space: SpaceDescriptor,
    encoding: Encoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<serde_json::Value>,
}

/// Writes a JSON header line followed, for binary encoding, by little-endian doubles.
pub fn write_grid_function<W: Write>(
    mut w: W,
    f: &GridFunction,
    encoding: Encoding,
    metadata: Option<serde_json::Value>,
) -> Result<()> {
    let header = FileHeader {
        grid: (*f.grid).clone(),
        space: f.space.clone(),
        encoding,
        values: (encoding == Encoding::Json).then(|| f.data.clone()),
        metadata,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    if encoding == Encoding::F64le {
        for x in &f.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_grid_function<R: BufRead>(mut r: R) -> Result<(GridFunction, Option<serde_json::Value>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: FileHeader = serde_json::from_str(line.trim_end())?;
    header.space.validate()?;
    let grid = Arc::new(header.grid);
    let n = grid.num_cells() * header.space.dim();
    let data = match header.encoding {
        Encoding::Json => header
            .values
            .ok_or_else(|| Error::Format("json encoding without values".into()))?,
        Encoding::F64le => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            if bytes.len() != 8 * n {
                return Err(Error::Format(format!(
                    "expected {} bytes of data, found {}",
                    8 * n,
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        }
    };
    Ok((
        GridFunction::from_values(grid, header.space, data)?,
        header.metadata,
    ))
}

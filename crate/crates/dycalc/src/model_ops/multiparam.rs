//! Multi-parameter shifts on products of dyadic grids.
//!
//! A rectangle is one cube per parameter and its Haar function is the tensor
//! product of the factor Haar functions. Each parameter has its own
//! complexities and its own pair of cancellative slots.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::haar::{haar_value, GridFunction, HaarIndex};
use crate::lattice::{Cube, Grid};
use crate::multilinear::MultilinearOp;
use crate::spaces::SpaceDescriptor;
use crate::{Error, Result};

use super::{check_op_dims, check_slot_cube, check_slots, random_descendant, ShiftKey, ShiftSpec};

/// A step function on the product of the finest cells of several grids.
///
/// Cells are indexed row-major with the first factor slowest, which makes
/// the data of a product function identical to that of a function on the
/// first grid with values in `L^p` over the remaining factors.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductFunction {
    grids: Vec<Arc<Grid>>,
    space: SpaceDescriptor,
    dim: usize,
    data: Vec<f64>,
}

fn total_cells(grids: &[Arc<Grid>]) -> usize {
    grids.iter().map(|g| g.num_cells()).product()
}

fn cell_measure(grids: &[Arc<Grid>]) -> f64 {
    grids.iter().map(|g| g.cell_measure()).product()
}

impl ProductFunction {
    pub fn zeros(grids: Vec<Arc<Grid>>, space: SpaceDescriptor) -> Self {
        let dim = space.dim();
        let data = vec![0.0; total_cells(&grids) * dim];
        Self {
            grids,
            space,
            dim,
            data,
        }
    }

    pub fn from_values(grids: Vec<Arc<Grid>>, space: SpaceDescriptor, data: Vec<f64>) -> Result<Self> {
        let dim = space.dim();
        if data.len() != total_cells(&grids) * dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                total_cells(&grids) * dim,
                data.len()
            )));
        }
        Ok(Self {
            grids,
            space,
            dim,
            data,
        })
    }

    pub fn random(grids: Vec<Arc<Grid>>, space: SpaceDescriptor, rng: &mut crate::Rng) -> Self {
        let mut f = Self::zeros(grids, space);
        for x in &mut f.data {
            *x = rng.random_range(-1.0..1.0);
        }
        f
    }

    /// `u_1 ⊗ … ⊗ u_m` for scalar factors.
    pub fn tensor(factors: &[&GridFunction]) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|u| u.dim() != 1) {
            return Err(Error::SpaceMismatch("tensor factors must be scalar".into()));
        }
        let grids: Vec<Arc<Grid>> = factors.iter().map(|u| u.grid().clone()).collect();
        let mut data = vec![1.0];
        for u in factors {
            data = data
                .iter()
                .flat_map(|a| u.data().iter().map(move |b| a * b))
                .collect();
        }
        Self::from_values(grids, SpaceDescriptor::Scalar, data)
    }

    pub fn grids(&self) -> &[Arc<Grid>] {
        &self.grids
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

    pub fn num_cells(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn value(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn value_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// The same data seen as a function on the first grid with values in
    /// `L^p` over the remaining factors.
    pub fn to_view(&self, p: f64) -> Result<GridFunction> {
        if self.grids.len() < 2 {
            return Err(Error::InvalidArgument("a view needs at least two parameters".into()));
        }
        let space = rest_space(&self.grids[1..], p, &self.space);
        GridFunction::from_values(self.grids[0].clone(), space, self.data.clone())
    }

    /// Inverse of [`ProductFunction::to_view`].
    pub fn from_view(view: &GridFunction, rest: &[Arc<Grid>], space: SpaceDescriptor) -> Result<Self> {
        let mut grids = vec![view.grid().clone()];
        grids.extend(rest.iter().cloned());
        Self::from_values(grids, space, view.data().to_vec())
    }
}

fn rest_space(rest: &[Arc<Grid>], p: f64, inner: &SpaceDescriptor) -> SpaceDescriptor {
    SpaceDescriptor::Bochner {
        p,
        weights: vec![cell_measure(rest); total_cells(rest)],
        inner: Box::new(inner.clone()),
    }
}

/// Non-zero values of the rectangle Haar function `⊗_i h_{Q^i}^{η^i}` as `(cell, value)`.
fn rect_haar(grids: &[Arc<Grid>], cubes: &[&Cube], etas: &[u32]) -> Vec<(usize, f64)> {
    let mut out = vec![(0usize, 1.0)];
    for ((g, q), &eta) in grids.iter().zip(cubes).zip(etas) {
        let idx = HaarIndex::new((*q).clone(), eta);
        let factor: Vec<(usize, f64)> = g
            .cells_of(q)
            .into_iter()
            .map(|c| (c, haar_value(g, &idx, c)))
            .collect();
        let nc = g.num_cells();
        out = out
            .iter()
            .flat_map(|&(c0, v0)| factor.iter().map(move |&(c, v)| (c0 * nc + c, v0 * v)))
            .collect();
    }
    out
}

/// One coefficient key: `top[i]` is `K^i`, `cubes[j][i]` is `Q_j^i` and
/// `etas[j][i]` its signature.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiParamKey {
    pub top: Vec<Cube>,
    pub cubes: Vec<Vec<Cube>>,
    pub etas: Vec<Vec<u32>>,
}

impl MultiParamKey {
    fn slot_haar(&self, grids: &[Arc<Grid>], slot: usize, from: usize) -> Vec<(usize, f64)> {
        let cubes: Vec<&Cube> = self.cubes[slot][from..].iter().collect();
        rect_haar(&grids[from..], &cubes, &self.etas[slot][from..])
    }
}

/// An n-linear m-parameter shift with dense coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiParamShiftSpec {
    grids: Vec<Arc<Grid>>,
    complexity: Vec<Vec<u32>>,
    slots: Vec<[usize; 2]>,
    in_spaces: Vec<SpaceDescriptor>,
    out_space: SpaceDescriptor,
    coeffs: BTreeMap<MultiParamKey, MultilinearOp>,
}

impl MultiParamShiftSpec {
    /// `complexity[j][i]` is `k_j^i`; `slots[i]` are the 1-based cancellative slots of parameter `i`.
    pub fn new(
        grids: Vec<Arc<Grid>>,
        complexity: Vec<Vec<u32>>,
        slots: Vec<[usize; 2]>,
        in_spaces: Vec<SpaceDescriptor>,
        out_space: SpaceDescriptor,
    ) -> Result<Self> {
        let n = in_spaces.len();
        let m = grids.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("need at least one input and one parameter".into()));
        }
        if complexity.len() != n + 1 || complexity.iter().any(|k| k.len() != m) {
            return Err(Error::InvalidArgument(format!(
                "complexity must be {} rows of {m} entries",
                n + 1
            )));
        }
        if slots.len() != m {
            return Err(Error::InvalidArgument(format!("need {m} cancellative slot pairs")));
        }
        for s in &slots {
            check_slots(*s, n)?;
        }
        for s in in_spaces.iter().chain(std::iter::once(&out_space)) {
            s.validate()?;
        }
        Ok(Self {
            grids,
            complexity,
            slots,
            in_spaces,
            out_space,
            coeffs: BTreeMap::new(),
        })
    }

    pub fn grids(&self) -> &[Arc<Grid>] {
        &self.grids
    }

    pub fn arity(&self) -> usize {
        self.in_spaces.len()
    }

    pub fn num_params(&self) -> usize {
        self.grids.len()
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiParamKey, MultilinearOp> {
        &self.coeffs
    }

    pub fn in_spaces(&self) -> &[SpaceDescriptor] {
        &self.in_spaces
    }

    pub fn out_space(&self) -> &SpaceDescriptor {
        &self.out_space
    }

    pub fn check_key(&self, key: &MultiParamKey) -> Result<()> {
        let (n, m) = (self.arity(), self.num_params());
        if key.top.len() != m
            || key.cubes.len() != n + 1
            || key.etas.len() != n + 1
            || key.cubes.iter().any(|c| c.len() != m)
            || key.etas.iter().any(|e| e.len() != m)
        {
            return Err(Error::InvalidArgument(format!(
                "key must hold {} slots of {m} cubes",
                n + 1
            )));
        }
        for i in 0..m {
            for j in 0..=n {
                check_slot_cube(
                    &self.grids[i],
                    &key.top[i],
                    &key.cubes[j][i],
                    self.complexity[j][i],
                    key.etas[j][i],
                    self.slots[i].contains(&(j + 1)),
                )?;
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, key: MultiParamKey, op: MultilinearOp) -> Result<()> {
        self.check_key(&key)?;
        check_op_dims(&op, &self.in_spaces, &self.out_space)?;
        self.coeffs.insert(key, op);
        Ok(())
    }

    /// A spec with `keys` random coefficients in `[-1, 1]`.
    pub fn random(
        grids: Vec<Arc<Grid>>,
        complexity: Vec<Vec<u32>>,
        slots: Vec<[usize; 2]>,
        in_spaces: Vec<SpaceDescriptor>,
        out_space: SpaceDescriptor,
        keys: usize,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        let mut s = Self::new(grids, complexity, slots, in_spaces, out_space)?;
        let (n, m) = (s.arity(), s.num_params());
        let mut lowest = Vec::with_capacity(m);
        for i in 0..m {
            let need = (0..=n)
                .map(|j| s.complexity[j][i] as i32 + i32::from(s.slots[i].contains(&(j + 1))))
                .max()
                .unwrap_or(0);
            let w = s.grids[i].window();
            if w.l_min + need > w.l_max {
                return Err(Error::InvalidArgument(format!("parameter {} window too shallow", i + 1)));
            }
            lowest.push(w.l_min + need);
        }
        for _ in 0..keys {
            let mut top = Vec::with_capacity(m);
            let mut cubes = vec![Vec::with_capacity(m); n + 1];
            let mut etas = vec![Vec::with_capacity(m); n + 1];
            for i in 0..m {
                let g = &s.grids[i];
                let level = rng.random_range(lowest[i]..=g.window().l_max);
                let all = g.cubes_at(level);
                let k = all[rng.random_range(0..all.len())].clone();
                for j in 0..=n {
                    cubes[j].push(random_descendant(g, &k, s.complexity[j][i], rng));
                    etas[j].push(if s.slots[i].contains(&(j + 1)) {
                        rng.random_range(1..1u32 << g.dim())
                    } else {
                        0
                    });
                }
                top.push(k);
            }
            let dims = s.in_spaces.iter().map(SpaceDescriptor::dim).collect();
            let op = MultilinearOp::random(rng, dims, s.out_space.dim());
            s.insert(MultiParamKey { top, cubes, etas }, op)?;
        }
        Ok(s)
    }
}

fn check_product_inputs(spec: &MultiParamShiftSpec, f: &[&ProductFunction]) -> Result<()> {
    if f.len() != spec.arity() {
        return Err(Error::InvalidArgument(format!("expected {} inputs", spec.arity())));
    }
    for (fm, s) in f.iter().zip(&spec.in_spaces) {
        if fm.grids != spec.grids {
            return Err(Error::GridMismatch);
        }
        if fm.dim != s.dim() {
            return Err(Error::SpaceMismatch("input dimension differs from its space".into()));
        }
    }
    Ok(())
}

fn product_pair(f: &ProductFunction, h: &[(usize, f64)]) -> Vec<f64> {
    let mut s = vec![0.0; f.dim];
    for &(c, v) in h {
        for (a, b) in s.iter_mut().zip(f.value(c)) {
            *a += v * b;
        }
    }
    let m = cell_measure(&f.grids);
    s.iter_mut().for_each(|x| *x *= m);
    s
}

fn key_inputs(spec: &MultiParamShiftSpec, key: &MultiParamKey, f: &[&ProductFunction]) -> Vec<Vec<f64>> {
    (0..spec.arity())
        .map(|j| product_pair(f[j], &key.slot_haar(&spec.grids, j, 0)))
        .collect()
}

/// Direct summation over all rectangle keys.
pub fn apply_multiparam_shift(spec: &MultiParamShiftSpec, f: &[&ProductFunction]) -> Result<ProductFunction> {
    check_product_inputs(spec, f)?;
    let n = spec.arity();
    let mut out = ProductFunction::zeros(spec.grids.clone(), spec.out_space.clone());
    for (key, op) in &spec.coeffs {
        let ins = key_inputs(spec, key, f);
        let refs: Vec<&[f64]> = ins.iter().map(Vec::as_slice).collect();
        let y = op.apply(&refs);
        for (c, h) in key.slot_haar(&spec.grids, n, 0) {
            for (a, b) in out.value_mut(c).iter_mut().zip(&y) {
                *a += h * b;
            }
        }
    }
    Ok(out)
}

/// `⟨S(f_1, …, f_n), g⟩` over the product domain.
pub fn multiparam_form(spec: &MultiParamShiftSpec, f: &[&ProductFunction], g: &ProductFunction) -> Result<f64> {
    check_product_inputs(spec, f)?;
    if g.grids != spec.grids || g.dim != spec.out_space.dim() {
        return Err(Error::SpaceMismatch("test function does not match the output".into()));
    }
    let n = spec.arity();
    let mut s = 0.0;
    for (key, op) in &spec.coeffs {
        let ins = key_inputs(spec, key, f);
        let refs: Vec<&[f64]> = ins.iter().map(Vec::as_slice).collect();
        s += op.form(&refs, &product_pair(g, &key.slot_haar(&spec.grids, n, 0)));
    }
    Ok(s)
}

/// The shift seen as a one-parameter shift over the first grid whose
/// coefficients `S_{K¹,(Q¹_j)}` are the shifts in the remaining parameters.
///
/// Slot `j` takes values in `L^{p_j}` over the remaining factors (slot
/// `n+1` uses `exponents[n]`). The inner operators are stored densely, so
/// the view is limited by the dense tensor budget.
pub fn iterate_view(spec: &MultiParamShiftSpec, exponents: &[f64]) -> Result<ShiftSpec> {
    let (n, m) = (spec.arity(), spec.num_params());
    if m < 2 {
        return Err(Error::InvalidArgument("iterating needs at least two parameters".into()));
    }
    if exponents.len() != n + 1 {
        return Err(Error::InvalidArgument(format!("need {} exponents", n + 1)));
    }
    let rest = &spec.grids[1..];
    let rest_cells = total_cells(rest);
    let w = cell_measure(rest);
    let in_spaces: Vec<SpaceDescriptor> = (0..n)
        .map(|j| rest_space(rest, exponents[j], &spec.in_spaces[j]))
        .collect();
    let out_space = rest_space(rest, exponents[n], &spec.out_space);
    let mut outer = ShiftSpec::new(
        spec.grids[0].clone(),
        spec.complexity.iter().map(|k| k[0]).collect(),
        spec.slots[0],
        in_spaces.clone(),
        out_space.clone(),
    )?;

    let dims: Vec<usize> = spec.in_spaces.iter().map(SpaceDescriptor::dim).collect();
    let dout = spec.out_space.dim();
    let widths: Vec<usize> = dims.iter().map(|d| d * rest_cells).collect();
    let len = dout * rest_cells * widths.iter().product::<usize>();
    let mut tensors: BTreeMap<ShiftKey, Vec<f64>> = BTreeMap::new();

    for (key, op) in &spec.coeffs {
        let outer_key = ShiftKey {
            top: key.top[0].clone(),
            cubes: key.cubes.iter().map(|c| c[0].clone()).collect(),
            etas: key.etas.iter().map(|e| e[0]).collect(),
        };
        let t = tensors.entry(outer_key).or_insert_with(|| vec![0.0; len]);
        let ins: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|j| {
                key.slot_haar(&spec.grids, j, 1)
                    .into_iter()
                    .map(|(c, h)| (c, w * h))
                    .collect()
            })
            .collect();
        let outs = key.slot_haar(&spec.grids, n, 1);
        let shape = op.shape();
        for (flat, &a) in op.data().iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let mut idx = vec![0usize; n + 1];
            let mut r = flat;
            for ax in (0..=n).rev() {
                idx[ax] = r % shape[ax];
                r /= shape[ax];
            }
            for &(co, ho) in &outs {
                // odometer over the supports of the input slots
                let mut pos = vec![0usize; n];
                'cells: loop {
                    let mut at = co * dout + idx[0];
                    let mut v = a * ho;
                    for j in 0..n {
                        let (c, h) = ins[j][pos[j]];
                        at = at * widths[j] + c * dims[j] + idx[j + 1];
                        v *= h;
                    }
                    t[at] += v;
                    for j in (0..n).rev() {
                        pos[j] += 1;
                        if pos[j] < ins[j].len() {
                            continue 'cells;
                        }
                        pos[j] = 0;
                    }
                    break;
                }
            }
        }
    }
    for (key, data) in tensors {
        outer.insert(key, MultilinearOp::new(widths.clone(), dout * rest_cells, data)?)?;
    }
    Ok(outer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_ops::apply_shift;

    fn grid(l_min: i32) -> Arc<Grid> {
        Arc::new(Grid::standard(1, l_min, 0, 1).unwrap())
    }

    fn cube(level: i32, corner: i64) -> Cube {
        Cube {
            level,
            corner: vec![corner],
        }
    }

    fn random_bi(seed: u64) -> (MultiParamShiftSpec, Vec<ProductFunction>) {
        let mut rng = crate::rng(seed);
        let grids = vec![grid(-3), grid(-2)];
        let k: Vec<Vec<u32>> = (0..3)
            .map(|_| vec![rng.random_range(0..=1), rng.random_range(0..=1)])
            .collect();
        let s = MultiParamShiftSpec::random(
            grids.clone(),
            k,
            vec![[1, 3], [2, 3]],
            vec![SpaceDescriptor::Scalar; 2],
            SpaceDescriptor::Scalar,
            5,
            &mut rng,
        )
        .unwrap();
        let f = (0..2)
            .map(|_| ProductFunction::random(grids.clone(), SpaceDescriptor::Scalar, &mut rng))
            .collect();
        (s, f)
    }

    #[test]
    fn nested_application_matches_direct() {
        for seed in 0..10 {
            let (s, f) = random_bi(seed);
            let refs: Vec<&ProductFunction> = f.iter().collect();
            let direct = apply_multiparam_shift(&s, &refs).unwrap();
            let view = iterate_view(&s, &[4.0, 4.0, 2.0]).unwrap();
            let vf: Vec<GridFunction> = f.iter().map(|x| x.to_view(2.0).unwrap()).collect();
            let nested = apply_shift(&view, &vf.iter().collect::<Vec<_>>()).unwrap();
            let back = ProductFunction::from_view(&nested, &s.grids()[1..], SpaceDescriptor::Scalar).unwrap();
            assert!(direct.max_abs_diff(&back) <= 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn factorized_coefficients_give_tensor_outputs() {
        let g1 = grid(-3);
        let g2 = grid(-2);
        let mut rng = crate::rng(17);
        let s1 = ShiftSpec::random(g1.clone(), vec![1, 0, 1], [1, 3], vec![SpaceDescriptor::Scalar; 2], SpaceDescriptor::Scalar, 3, &mut rng).unwrap();
        let s2 = ShiftSpec::random(g2.clone(), vec![0, 1, 0], [2, 3], vec![SpaceDescriptor::Scalar; 2], SpaceDescriptor::Scalar, 2, &mut rng).unwrap();
        let mut bi = MultiParamShiftSpec::new(
            vec![g1.clone(), g2.clone()],
            vec![vec![1, 0], vec![0, 1], vec![1, 0]],
            vec![[1, 3], [2, 3]],
            vec![SpaceDescriptor::Scalar; 2],
            SpaceDescriptor::Scalar,
        )
        .unwrap();
        for (k1, a1) in s1.coeffs() {
            for (k2, a2) in s2.coeffs() {
                let key = MultiParamKey {
                    top: vec![k1.top.clone(), k2.top.clone()],
                    cubes: (0..3).map(|j| vec![k1.cubes[j].clone(), k2.cubes[j].clone()]).collect(),
                    etas: (0..3).map(|j| vec![k1.etas[j], k2.etas[j]]).collect(),
                };
                bi.insert(key, MultilinearOp::scalar(a1.data()[0] * a2.data()[0], 2)).unwrap();
            }
        }
        let u: Vec<GridFunction> = (0..2).map(|_| GridFunction::random(g1.clone(), SpaceDescriptor::Scalar, &mut rng)).collect();
        let v: Vec<GridFunction> = (0..2).map(|_| GridFunction::random(g2.clone(), SpaceDescriptor::Scalar, &mut rng)).collect();
        let f: Vec<ProductFunction> = (0..2).map(|j| ProductFunction::tensor(&[&u[j], &v[j]]).unwrap()).collect();
        let out = apply_multiparam_shift(&bi, &[&f[0], &f[1]]).unwrap();
        let expected = ProductFunction::tensor(&[
            &apply_shift(&s1, &[&u[0], &u[1]]).unwrap(),
            &apply_shift(&s2, &[&v[0], &v[1]]).unwrap(),
        ])
        .unwrap();
        assert!(out.max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn form_matches_output_pairing() {
        let (s, f) = random_bi(3);
        let mut rng = crate::rng(99);
        let g = ProductFunction::random(s.grids().to_vec(), SpaceDescriptor::Scalar, &mut rng);
        let out = apply_multiparam_shift(&s, &[&f[0], &f[1]]).unwrap();
        let direct: f64 = out.data().iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>()
            * cell_measure(s.grids());
        assert!((multiparam_form(&s, &[&f[0], &f[1]], &g).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_spec_and_slot_pattern_checks() {
        let grids = vec![grid(-2), grid(-2)];
        let mut s = MultiParamShiftSpec::new(
            grids.clone(),
            vec![vec![0, 0]; 3],
            vec![[1, 2], [1, 3]],
            vec![SpaceDescriptor::Scalar; 2],
            SpaceDescriptor::Scalar,
        )
        .unwrap();
        let mut rng = crate::rng(0);
        let f = ProductFunction::random(grids, SpaceDescriptor::Scalar, &mut rng);
        assert_eq!(apply_multiparam_shift(&s, &[&f, &f]).unwrap().max_abs(), 0.0);
        // parameter 2 uses slots {1,3}, so a signature in slot 2 is inconsistent
        let k = cube(0, 0);
        let key = MultiParamKey {
            top: vec![k.clone(), k.clone()],
            cubes: vec![vec![k.clone(), k.clone()]; 3],
            etas: vec![vec![1, 1], vec![1, 1], vec![0, 0]],
        };
        assert!(matches!(s.insert(key, MultilinearOp::scalar(1.0, 2)), Err(Error::IndexConstraint(_))));
    }

    #[test]
    fn view_round_trip() {
        let mut rng = crate::rng(2);
        let f = ProductFunction::random(vec![grid(-2), grid(-1), grid(-1)], SpaceDescriptor::Scalar, &mut rng);
        let v = f.to_view(3.0).unwrap();
        assert_eq!(v.dim(), 4);
        assert_eq!(ProductFunction::from_view(&v, &f.grids()[1..], SpaceDescriptor::Scalar).unwrap(), f);
    }
}

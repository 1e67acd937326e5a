//! Sparse collections, stopping cubes, sparse forms, the Calderón–Zygmund
//! decomposition and sparse domination of RM maximal functions.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::haar::{average, average_norm, GridFunction};
use crate::lattice::{Cube, Grid};
use crate::rmf::{chain_norm, rm_maximal, RmConfig};
use crate::spaces::SpaceDescriptor;
use crate::{derive_seed, Error, Result};

/// A family of cubes with its sparseness parameter and, once checked, the witness sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCollection {
    pub cubes: Vec<Cube>,
    pub eta: f64,
    /// `witnesses[i]` lists the finest cells of `E_{cubes[i]}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<Vec<Vec<usize>>>,
}

impl SparseCollection {
    pub fn new(mut cubes: Vec<Cube>, eta: f64) -> Self {
        cubes.sort();
        cubes.dedup();
        Self {
            cubes,
            eta,
            witnesses: None,
        }
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Maximal members strictly inside `s`.
    pub fn children(&self, grid: &Grid, s: &Cube) -> Vec<Cube> {
        maximal_inside(grid, &self.cubes, s)
    }
}

fn strictly_inside(grid: &Grid, q: &Cube, s: &Cube) -> bool {
    q != s && grid.is_subcube(q, s)
}

fn maximal_inside(grid: &Grid, cubes: &[Cube], s: &Cube) -> Vec<Cube> {
    let inside: Vec<&Cube> = cubes.iter().filter(|q| strictly_inside(grid, q, s)).collect();
    inside
        .iter()
        .filter(|q| !inside.iter().any(|r| strictly_inside(grid, q, r)))
        .map(|q| (*q).clone())
        .collect()
}

/// Checks `η`-sparseness with the greedy witnesses `E_Q = Q \ ∪{R ∈ S : R ⊊ Q}`.
///
/// The returned collection carries the witnesses whether or not the check passed.
pub fn verify_sparse(grid: &Grid, cubes: &[Cube], eta: f64) -> Result<(bool, SparseCollection)> {
    if cubes.iter().any(|q| !grid.contains_cube(q)) {
        return Err(Error::NotInGrid);
    }
    let mut coll = SparseCollection::new(cubes.to_vec(), eta);
    let mut ok = true;
    let mut wit = Vec::with_capacity(coll.len());
    for q in &coll.cubes {
        let removed: BTreeSet<usize> = coll
            .cubes
            .iter()
            .filter(|r| strictly_inside(grid, r, q))
            .flat_map(|r| grid.cells_of(r))
            .collect();
        let all = grid.cells_of(q);
        let e: Vec<usize> = all.iter().copied().filter(|c| !removed.contains(c)).collect();
        if (e.len() as f64) < eta * all.len() as f64 {
            ok = false;
        }
        wit.push(e);
    }
    coll.witnesses = Some(wit);
    Ok((ok, coll))
}

/// One term `|Q| ∏_m ⟨|f_m|⟩_Q` of a sparse form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseFormRow {
    pub cube: Cube,
    pub measure: f64,
    pub product: f64,
}

/// The terms of `Σ_{Q∈S} |Q| ∏_m ⟨|f_m|_{X_m}⟩_Q`, in the order of `cubes`.
pub fn sparse_form_rows(cubes: &[Cube], f: &[&GridFunction]) -> Result<Vec<SparseFormRow>> {
    let Some(first) = f.first() else {
        return Err(Error::InvalidArgument("sparse form of no functions".into()));
    };
    let grid = first.grid();
    if f.iter().any(|g| !g.same_grid(first)) {
        return Err(Error::GridMismatch);
    }
    cubes
        .iter()
        .map(|q| {
            let product = f.iter().map(|g| average_norm(g, q)).product::<Result<f64>>()?;
            Ok(SparseFormRow {
                cube: q.clone(),
                measure: grid.measure(q.level),
                product,
            })
        })
        .collect()
}

/// `Σ_{Q∈S} |Q| ∏_m ⟨|f_m|_{X_m}⟩_Q`.
pub fn sparse_form(cubes: &[Cube], f: &[&GridFunction]) -> Result<f64> {
    Ok(sparse_form_rows(cubes, f)?.iter().map(|r| r.measure * r.product).sum())
}

/// Stopping cubes of a tuple under a top cube and the associated blocks.
#[derive(Clone, Debug)]
pub struct Stopping {
    pub top: Cube,
    pub collection: SparseCollection,
    /// `ch_S(S)` for every stopping cube.
    pub children: BTreeMap<Cube, Vec<Cube>>,
    /// `f_{m,S} = Σ_{S'∈ch(S)} ⟨f_m⟩_{S'} 1_{S'} + 1_{E(S)} f_m` for every stopping cube.
    pub blocks: BTreeMap<Cube, Vec<GridFunction>>,
    /// `⟨|f_m|⟩_S` for every stopping cube.
    pub averages: BTreeMap<Cube, Vec<f64>>,
}

impl Stopping {
    /// `Σ_{S'∈ch(S)} |S'| ≤ |S|/2` for every `S`, in whole finest cells.
    pub fn is_sparse(&self, grid: &Grid) -> bool {
        self.children.iter().all(|(s, ch)| {
            let inner: usize = ch.iter().map(|c| grid.cells_of(c).len()).sum();
            2 * inner <= grid.cells_of(s).len()
        })
    }

    /// Largest `‖f_{m,S}‖_∞ / ⟨|f_m|⟩_S` over stopping cubes with a nonzero average.
    pub fn linf_ratio(&self) -> f64 {
        let mut worst = 0.0f64;
        for (s, blocks) in &self.blocks {
            for (b, a) in blocks.iter().zip(&self.averages[s]) {
                if *a > 0.0 {
                    worst = worst.max(b.lp_norm(f64::INFINITY) / a);
                }
            }
        }
        worst
    }

    /// `π_S(Q)`: the smallest stopping cube containing `q`.
    pub fn pi(&self, grid: &Grid, q: &Cube) -> Option<Cube> {
        self.collection
            .cubes
            .iter()
            .filter(|s| grid.is_subcube(q, s))
            .min_by_key(|s| s.level)
            .cloned()
    }
}

/// Builds the stopping family of `f` under `q0` with threshold `2n`.
///
/// The children of `S` are the maximal `Q ⊊ S` with
/// `max_m ⟨|f_m|⟩_Q / ⟨|f_m|⟩_S > 2n`. A cube where some `⟨|f_m|⟩_S`
/// vanishes takes no children.
pub fn build_stopping(f: &[&GridFunction], q0: &Cube) -> Result<Stopping> {
    let Some(first) = f.first() else {
        return Err(Error::InvalidArgument("stopping family of no functions".into()));
    };
    let grid = first.grid().clone();
    if f.iter().any(|g| !g.same_grid(first)) {
        return Err(Error::GridMismatch);
    }
    if !grid.contains_cube(q0) {
        return Err(Error::NotInGrid);
    }
    let inside: BTreeSet<usize> = grid.cells_of(q0).into_iter().collect();
    if f.iter().any(|g| g.support().iter().any(|c| !inside.contains(c))) {
        return Err(Error::InvalidArgument("inputs must be supported in the top cube".into()));
    }
    let threshold = 2.0 * f.len() as f64;
    let avg = |q: &Cube| -> Result<Vec<f64>> { f.iter().map(|g| average_norm(g, q)).collect() };

    let mut children = BTreeMap::new();
    let mut averages = BTreeMap::new();
    let mut stack = vec![q0.clone()];
    while let Some(s) = stack.pop() {
        let a_s = avg(&s)?;
        let mut ch = Vec::new();
        if a_s.iter().all(|a| *a > 0.0) {
            let mut frontier = grid.children(&s).unwrap_or_default();
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for q in frontier {
                    let a_q = avg(&q)?;
                    if a_q.iter().zip(&a_s).any(|(aq, as_)| aq / as_ > threshold) {
                        ch.push(q);
                    } else {
                        next.extend(grid.children(&q).unwrap_or_default());
                    }
                }
                frontier = next;
            }
        }
        stack.extend(ch.iter().cloned());
        averages.insert(s.clone(), a_s);
        children.insert(s, ch);
    }

    let mut blocks = BTreeMap::new();
    for (s, ch) in &children {
        let mut covered = BTreeSet::new();
        let mut parts: Vec<GridFunction> = f
            .iter()
            .map(|g| GridFunction::zeros(grid.clone(), g.space().clone()))
            .collect();
        for c in ch {
            for (part, g) in parts.iter_mut().zip(f) {
                let a = average(g, c)?;
                for cell in grid.cells_of(c) {
                    part.value_mut(cell).copy_from_slice(&a);
                }
            }
            covered.extend(grid.cells_of(c));
        }
        for cell in grid.cells_of(s) {
            if !covered.contains(&cell) {
                for (part, g) in parts.iter_mut().zip(f) {
                    part.value_mut(cell).copy_from_slice(g.value(cell));
                }
            }
        }
        blocks.insert(s.clone(), parts);
    }
    Ok(Stopping {
        top: q0.clone(),
        collection: SparseCollection::new(children.keys().cloned().collect(), 0.5),
        children,
        blocks,
        averages,
    })
}

/// Random scalar blocks adapted to a nested collection: `f_S` is supported
/// on `S`, constant on every maximal member strictly inside `S`, and has
/// mean zero.
pub fn random_adapted_blocks(grid: &Arc<Grid>, cubes: &[Cube], rng: &mut crate::Rng) -> Vec<GridFunction> {
    cubes
        .iter()
        .map(|s| {
            let mut f = GridFunction::zeros(grid.clone(), SpaceDescriptor::Scalar);
            let mut covered = BTreeSet::new();
            for c in maximal_inside(grid, cubes, s) {
                let v = rng.random_range(-1.0..1.0);
                for cell in grid.cells_of(&c) {
                    f.data_mut()[cell] = v;
                    covered.insert(cell);
                }
            }
            let cells = grid.cells_of(s);
            for &cell in &cells {
                if !covered.contains(&cell) {
                    f.data_mut()[cell] = rng.random_range(-1.0..1.0);
                }
            }
            let mean = cells.iter().map(|&c| f.data()[c]).sum::<f64>() / cells.len() as f64;
            for &cell in &cells {
                f.data_mut()[cell] -= mean;
            }
            f
        })
        .collect()
}

/// Output of [`cz_decompose`].
#[derive(Clone, Debug)]
pub struct CzDecomposition {
    pub good: GridFunction,
    pub bad: GridFunction,
    /// Maximal cubes with `⟨|f|⟩_Q > λ^{1/ℓ}`.
    pub cubes: Vec<Cube>,
    pub threshold: f64,
}

/// Calderón–Zygmund decomposition of `f` at height `λ^{1/ℓ}`.
///
/// `g` equals `f` off the stopping cubes and `⟨f⟩_Q` on each of them;
/// `b = f − g`. The bound `‖g‖_∞ ≤ 2^d λ^{1/ℓ}` on the stopping cubes holds
/// for cubes below the roots of the window.
pub fn cz_decompose(f: &GridFunction, lambda: f64, ell: usize) -> Result<CzDecomposition> {
    if !(lambda > 0.0) || ell == 0 {
        return Err(Error::InvalidArgument("need λ > 0 and ℓ ≥ 1".into()));
    }
    let threshold = lambda.powf(1.0 / ell as f64);
    let grid = f.grid().clone();
    let mut cubes = Vec::new();
    let mut frontier = grid.roots();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for q in frontier {
            if average_norm(f, &q)? > threshold {
                cubes.push(q);
            } else {
                next.extend(grid.children(&q).unwrap_or_default());
            }
        }
        frontier = next;
    }
    let mut good = f.clone();
    for q in &cubes {
        let a = average(f, q)?;
        for cell in grid.cells_of(q) {
            good.value_mut(cell).copy_from_slice(&a);
        }
    }
    let bad = f.sub(&good)?;
    Ok(CzDecomposition {
        good,
        bad,
        cubes,
        threshold,
    })
}

/// Output of [`sparse_dominate_rmf`].
#[derive(Clone, Debug)]
pub struct SparseDomination {
    pub collection: SparseCollection,
    /// `2^ℓ B ∏_j ⟨|f_j|⟩_S` for every `S`, in the order of `collection.cubes`.
    pub thresholds: Vec<f64>,
    /// `RM_𝒞[(f_j)]` at every finest cell.
    pub maximal: GridFunction,
    /// `Σ_S threshold_S 1_S` at every finest cell.
    pub bound: GridFunction,
    /// `min_x (bound − maximal)(x)` over the cells of the top cube.
    pub margin: f64,
    pub holds: bool,
    /// Whether the maximal function was computed in closed form.
    pub exact: bool,
}

/// Builds a sparse collection under `top` dominating `RM_𝒞` for the cube family `family`.
///
/// From a current cube `T` the next cubes are the maximal `Q ⊊ T` with
/// `RM^Q > 2^ℓ B ∏_j ⟨|f_j|⟩_T`, where `RM^Q` runs over the members `C` of
/// `family` with `Q ⊂ C ⊂ T`. Domination is then checked cell by cell with
/// relative slack `1e-12`.
pub fn sparse_dominate_rmf(
    f: &[&GridFunction],
    top: &Cube,
    family: &[Cube],
    b: f64,
    cfg: &RmConfig,
    seed: u64,
) -> Result<SparseDomination> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument("the weak-type constant must be positive".into()));
    }
    cfg.validate()?;
    let Some(first) = f.first() else {
        return Err(Error::InvalidArgument("no input functions".into()));
    };
    let grid = first.grid().clone();
    if !grid.contains_cube(top) {
        return Err(Error::NotInGrid);
    }
    if family.iter().any(|c| !grid.is_subcube(c, top)) {
        return Err(Error::InvalidArgument("every family cube must lie in the top cube".into()));
    }
    let fam: BTreeSet<Cube> = family.iter().cloned().collect();
    let ell = cfg.j_set.len() as i32;
    let scale = 2f64.powi(ell) * b;
    let avg = |q: &Cube| -> Result<Vec<Vec<f64>>> { f.iter().map(|g| average(g, q)).collect() };

    // RM over the family members between q and t
    let rm_between = |q: &Cube, t: &Cube, salt: u64| -> Result<f64> {
        let mut chain = Vec::new();
        let mut c = q.clone();
        loop {
            if fam.contains(&c) {
                chain.push(avg(&c)?);
            }
            if &c == t {
                break;
            }
            c = grid.parent(&c, 1)?;
        }
        if chain.is_empty() {
            return Ok(0.0);
        }
        chain_norm(cfg, &chain, derive_seed(seed, salt))
    };

    let mut cubes = Vec::new();
    let mut thresholds = Vec::new();
    let mut stack = vec![top.clone()];
    let mut salt = 0u64;
    while let Some(t) = stack.pop() {
        let tau = scale * f.iter().map(|g| average_norm(g, &t)).product::<Result<f64>>()?;
        let mut frontier = grid.children(&t).unwrap_or_default();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for q in frontier {
                salt += 1;
                if rm_between(&q, &t, salt)? > tau {
                    stack.push(q);
                } else {
                    next.extend(grid.children(&q).unwrap_or_default());
                }
            }
            frontier = next;
        }
        cubes.push(t);
        thresholds.push(tau);
    }

    let maximal = rm_maximal(f, cfg, Some(family), seed)?;
    let mut bound = GridFunction::zeros(grid.clone(), SpaceDescriptor::Scalar);
    for (q, tau) in cubes.iter().zip(&thresholds) {
        for cell in grid.cells_of(q) {
            bound.data_mut()[cell] += tau;
        }
    }
    let mut margin = f64::INFINITY;
    let mut holds = true;
    for cell in grid.cells_of(top) {
        let (m, u) = (maximal.values.data()[cell], bound.data()[cell]);
        margin = margin.min(u - m);
        if m > u * (1.0 + 1e-12) {
            holds = false;
        }
    }
    Ok(SparseDomination {
        collection: SparseCollection::new(cubes, 0.5),
        thresholds,
        maximal: maximal.values,
        bound,
        margin,
        holds,
        exact: maximal.exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{RmBudget, Varpi};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(l_min: i32) -> Arc<Grid> {
        Arc::new(Grid::standard(1, l_min, 0, 1).unwrap())
    }

    fn cube(level: i32, corner: i64) -> Cube {
        Cube {
            level,
            corner: vec![corner],
        }
    }

    fn one(g: &Arc<Grid>) -> GridFunction {
        GridFunction::constant(g.clone(), SpaceDescriptor::Scalar, &[1.0])
    }

    #[test]
    fn constant_inputs_do_not_stop() {
        let g = grid(-3);
        let st = build_stopping(&[&one(&g), &one(&g)], &cube(0, 0)).unwrap();
        assert_eq!(st.collection.cubes, vec![cube(0, 0)]);
        assert!(st.children[&cube(0, 0)].is_empty());
        assert_eq!(st.blocks[&cube(0, 0)][0], one(&g));
    }

    #[test]
    fn spike_stops_at_the_eighth() {
        let g = grid(-4);
        let f1 = GridFunction::indicator(g.clone(), &cube(-3, 0)).scaled(8.0);
        let st = build_stopping(&[&f1, &one(&g)], &cube(0, 0)).unwrap();
        let top = &st.children[&cube(0, 0)];
        assert_eq!(top, &vec![cube(-3, 0)]);
        assert!(st.is_sparse(&g));
        let inner: f64 = top.iter().map(|c| g.measure(c.level)).sum();
        assert_eq!(inner, 0.125);
        // ⟨F⟩_Q = ⟨F_S⟩_Q for Q with π(Q) = [0,1)
        let q = cube(-2, 0);
        assert_eq!(st.pi(&g, &q), Some(cube(0, 0)));
        let block = &st.blocks[&cube(0, 0)][0];
        assert_eq!(average(block, &q).unwrap(), average(&f1, &q).unwrap());
        assert!(st.linf_ratio() <= 2.0 * 2.0 * 2.0);
    }

    #[test]
    fn stopping_rejects_outside_support() {
        let g = Arc::new(Grid::standard(1, -2, 0, 2).unwrap());
        let f = GridFunction::constant(g.clone(), SpaceDescriptor::Scalar, &[1.0]);
        assert!(build_stopping(&[&f], &g.roots()[0]).is_err());
    }

    #[test]
    fn zero_average_takes_no_children() {
        let g = grid(-3);
        let z = GridFunction::zeros(g.clone(), SpaceDescriptor::Scalar);
        let spike = GridFunction::indicator(g.clone(), &cube(-3, 0)).scaled(8.0);
        let st = build_stopping(&[&z, &spike], &cube(0, 0)).unwrap();
        assert_eq!(st.collection.len(), 1);
    }

    #[test]
    fn sparse_checker() {
        let g = grid(-2);
        let disjoint = [cube(-1, 0), cube(-1, 2)];
        assert!(verify_sparse(&g, &disjoint, 0.99).unwrap().0);
        let tree = [cube(0, 0), cube(-1, 0), cube(-1, 2)];
        let (ok, coll) = verify_sparse(&g, &tree, 0.5).unwrap();
        assert!(!ok);
        let top = coll.cubes.iter().position(|c| c == &cube(0, 0)).unwrap();
        assert!(coll.witnesses.as_ref().unwrap()[top].is_empty());
        assert!(verify_sparse(&g, &tree[..2], 0.5).unwrap().0);
        assert!(verify_sparse(&g, &[], 0.5).unwrap().0);
    }

    #[test]
    fn sparse_form_values() {
        let g = grid(-2);
        let f = one(&g);
        assert_eq!(sparse_form(&[cube(0, 0)], &[&f, &f, &f]).unwrap(), 1.0);
        assert_eq!(sparse_form(&[cube(0, 0), cube(-1, 0)], &[&f, &f, &f]).unwrap(), 1.5);
        let z = GridFunction::zeros(g, SpaceDescriptor::Scalar);
        assert_eq!(sparse_form(&[cube(0, 0), cube(-1, 0)], &[&f, &z, &f]).unwrap(), 0.0);
    }

    #[test]
    fn cz_example() {
        let g = grid(-2);
        let f = GridFunction::indicator(g.clone(), &cube(-2, 0)).scaled(4.0);
        let cz = cz_decompose(&f, 1.5, 1).unwrap();
        assert_eq!(cz.cubes, vec![cube(-1, 0)]);
        assert_eq!(cz.good.data(), &[2.0, 2.0, 0.0, 0.0]);
        assert_eq!(cz.bad.data(), &[2.0, -2.0, 0.0, 0.0]);
        let high = cz_decompose(&f, 5.0, 1).unwrap();
        assert!(high.cubes.is_empty());
        assert_eq!(high.good, f);
        // λ^{1/ℓ} with ℓ = 2
        assert_eq!(cz_decompose(&f, 2.25, 2).unwrap().cubes, vec![cube(-1, 0)]);
        assert!(cz_decompose(&f, 0.0, 1).is_err());
    }

    fn scalar_cfg() -> RmConfig {
        RmConfig {
            spaces: vec![SpaceDescriptor::Scalar; 5],
            varpi: Varpi::Product,
            j_set: vec![0, 2],
            v: 1,
            exponents: vec![5.0; 5],
            budget: RmBudget::default(),
        }
    }

    #[test]
    fn domination_of_constants_and_empty_family() {
        let g = grid(-3);
        let c = GridFunction::constant(g.clone(), SpaceDescriptor::Scalar, &[2.0]);
        let all = g.all_cubes();
        let d = sparse_dominate_rmf(&[&c, &c], &cube(0, 0), &all, 1.0, &scalar_cfg(), 0).unwrap();
        assert_eq!(d.collection.cubes, vec![cube(0, 0)]);
        assert!(d.holds);
        let e = sparse_dominate_rmf(&[&c, &c], &cube(0, 0), &[], 1.0, &scalar_cfg(), 0).unwrap();
        assert!(e.holds);
        assert_eq!(e.maximal.max_abs(), 0.0);
        assert!(sparse_dominate_rmf(&[&c, &c], &cube(0, 0), &all, 0.0, &scalar_cfg(), 0).is_err());
    }

    #[test]
    fn domination_of_random_scalar_pairs() {
        let g = grid(-5);
        let all = g.all_cubes();
        let mut rng = crate::rng(4);
        for _ in 0..5 {
            let f: Vec<GridFunction> = (0..2)
                .map(|_| GridFunction::random(g.clone(), SpaceDescriptor::Scalar, &mut rng))
                .collect();
            let d = sparse_dominate_rmf(&[&f[0], &f[1]], &cube(0, 0), &all, 1.0, &scalar_cfg(), 0).unwrap();
            assert!(d.exact && d.holds, "margin {}", d.margin);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn stopping_families_are_sparse(seed in any::<u64>()) {
            let g = grid(-6);
            let mut rng = crate::rng(seed);
            let f: Vec<GridFunction> = (0..2).map(|_| {
                let mut h = GridFunction::random(g.clone(), SpaceDescriptor::Scalar, &mut rng);
                let k = rng.random_range(0..64usize);
                h.data_mut()[k] *= 200.0;
                h
            }).collect();
            let st = build_stopping(&[&f[0], &f[1]], &cube(0, 0)).unwrap();
            prop_assert!(st.is_sparse(&g));
            prop_assert!(st.linf_ratio() <= 2.0 * 4.0 * (1.0 + 1e-12));
            prop_assert!(verify_sparse(&g, &st.collection.cubes, 0.5).unwrap().0);
        }

        #[test]
        fn adapted_blocks_are_orthogonal(seed in any::<u64>()) {
            let g = grid(-5);
            let mut rng = crate::rng(seed);
            let h = GridFunction::random(g.clone(), SpaceDescriptor::Scalar, &mut rng)
                .mul_scalar_fn(&GridFunction::random(g.clone(), SpaceDescriptor::Scalar, &mut rng)).unwrap();
            let spike = GridFunction::indicator(g.clone(), &cube(-5, rng.random_range(0..32))).scaled(40.0);
            let st = build_stopping(&[&h.add(&spike).unwrap()], &cube(0, 0)).unwrap();
            let blocks = random_adapted_blocks(&g, &st.collection.cubes, &mut rng);
            let mut sum = GridFunction::zeros(g.clone(), SpaceDescriptor::Scalar);
            for b in &blocks {
                sum.add_assign_scaled(1.0, b);
            }
            let lhs = sum.lp_norm(2.0).powi(2);
            let rhs: f64 = blocks.iter().map(|b| b.lp_norm(2.0).powi(2)).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn sparse_form_grows_with_the_collection(seed in any::<u64>(), mask in any::<u16>()) {
            let g = grid(-3);
            let mut rng = crate::rng(seed);
            let f: Vec<GridFunction> = (0..3)
                .map(|_| GridFunction::random(g.clone(), SpaceDescriptor::Scalar, &mut rng))
                .collect();
            let refs: Vec<&GridFunction> = f.iter().collect();
            let all = g.all_cubes();
            let part: Vec<Cube> = all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| c.clone()).collect();
            prop_assert!(sparse_form(&part, &refs).unwrap() <= sparse_form(&all, &refs).unwrap());
        }

        #[test]
        fn cz_pieces_sum_and_cancel(seed in any::<u64>(), lambda in 0.05f64..2.0) {
            let g = grid(-5);
            let mut rng = crate::rng(seed);
            let f = GridFunction::random(g.clone(), SpaceDescriptor::Lp { p: 2.0, dim: 2 }, &mut rng);
            let cz = cz_decompose(&f, lambda, 1).unwrap();
            prop_assert!(cz.good.add(&cz.bad).unwrap().max_abs_diff(&f) <= 1e-15);
            for q in &cz.cubes {
                for x in average(&cz.bad, q).unwrap() {
                    prop_assert!(x.abs() <= 1e-15);
                }
                if q.level < 0 {
                    for cell in g.cells_of(q) {
                        prop_assert!(f.space().norm(cz.good.value(cell)) <= 2.0 * cz.threshold + 1e-12);
                    }
                }
            }
            assert_abs_diff_eq!(cz.bad.integral()[0], 0.0, epsilon = 1e-12);
        }
    }
}

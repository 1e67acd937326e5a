//! Lower-bound estimators for R-boundedness and R̂-boundedness constants.
//!
//! Both constants are suprema of ratios over test configurations. The
//! estimators evaluate the ratio exactly on every candidate they visit, so the
//! returned value is attained by the reported witness.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::rademacher::{check_rm_indices, rad_exact, random_vec, rm_is_exact, rm_norm, RmBudget};
use super::{SpaceDescriptor, Varpi};
use crate::multilinear::MultilinearOp;
use crate::{Error, Result};

/// Admissible partition of the slots `0..=n` into a fixed slot, Rademacher slots and RM slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub j_p: usize,
    pub rad: Vec<usize>,
    pub rm: Vec<usize>,
}

impl Partition {
    pub fn validate(&self, n_slots: usize) -> Result<()> {
        let mut seen = vec![false; n_slots];
        for &s in std::iter::once(&self.j_p).chain(&self.rad).chain(&self.rm) {
            if s >= n_slots || seen[s] {
                return Err(Error::IndexConstraint("partition slots must be distinct and in range".into()));
            }
            seen[s] = true;
        }
        if seen.iter().any(|x| !x) {
            return Err(Error::IndexConstraint("partition does not cover every slot".into()));
        }
        if self.rm.len() + 2 > n_slots.saturating_sub(1) && !self.rm.is_empty() {
            return Err(Error::IndexConstraint("#P_RM must be at most n-2".into()));
        }
        if self.rad.is_empty() {
            return Err(Error::IndexConstraint("need at least one Rademacher slot".into()));
        }
        Ok(())
    }

    pub fn is_tight(&self) -> bool {
        self.rad.len() == 2
    }

    /// All tight admissible partitions of `n_slots` slots, in lexicographic order.
    pub fn tight(n_slots: usize) -> Vec<Partition> {
        let mut out = Vec::new();
        for j_p in 0..n_slots {
            for a in 0..n_slots {
                for b in a + 1..n_slots {
                    if a == j_p || b == j_p {
                        continue;
                    }
                    let rm = (0..n_slots).filter(|s| *s != j_p && *s != a && *s != b).collect();
                    out.push(Partition {
                        j_p,
                        rad: vec![a, b],
                        rm,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundBudget {
    pub restarts: usize,
    pub steps: usize,
    /// Largest number of terms `K` in a test configuration.
    pub max_k: usize,
    pub rm: RmBudget,
}

impl Default for RBoundBudget {
    fn default() -> Self {
        Self {
            restarts: 16,
            steps: 30,
            max_k: 4,
            rm: RmBudget {
                restarts: 2,
                steps: 10,
            },
        }
    }
}

/// A test configuration: operator index and one vector per slot for every term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundWitness {
    pub ops: Vec<usize>,
    /// `vectors[slot][k]`.
    pub vectors: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundEstimate {
    pub value: f64,
    /// False when an RM factor in the denominator was itself only estimated.
    pub certified: bool,
    pub witness: Option<RBoundWitness>,
}

fn check_family(family: &[MultilinearOp], spaces: &[SpaceDescriptor]) -> Result<()> {
    let n = spaces.len().checked_sub(1).ok_or_else(|| {
        Error::InvalidArgument("need at least two spaces".into())
    })?;
    for t in family {
        if t.arity() != n
            || t.out_dim() != spaces[n].dim()
            || t.in_dims().iter().zip(spaces).any(|(d, s)| *d != s.dim())
        {
            return Err(Error::SpaceMismatch("operator does not act on the given spaces".into()));
        }
    }
    Ok(())
}

fn form_k(family: &[MultilinearOp], w: &RBoundWitness, k: usize) -> f64 {
    let n = w.vectors.len() - 1;
    let ins: Vec<&[f64]> = (0..n).map(|s| w.vectors[s][k].as_slice()).collect();
    family[w.ops[k]].form(&ins, &w.vectors[n][k])
}

fn form_gradient(family: &[MultilinearOp], w: &RBoundWitness, k: usize, slot: usize) -> Vec<f64> {
    let n = w.vectors.len() - 1;
    let t = &family[w.ops[k]];
    if slot == n {
        let ins: Vec<&[f64]> = (0..n).map(|s| w.vectors[s][k].as_slice()).collect();
        return t.apply(&ins);
    }
    let d = w.vectors[slot][k].len();
    let mut basis = vec![0.0; d];
    (0..d)
        .map(|i| {
            basis[i] = 1.0;
            let ins: Vec<&[f64]> = (0..n)
                .map(|s| if s == slot { basis.as_slice() } else { w.vectors[s][k].as_slice() })
                .collect();
            let v = t.form(&ins, &w.vectors[n][k]);
            basis[i] = 0.0;
            v
        })
        .collect()
}

struct RProblem<'a> {
    family: &'a [MultilinearOp],
    spaces: &'a [SpaceDescriptor],
    varpi: &'a Varpi,
    part: &'a Partition,
    rm_exact: bool,
    rm_budget: RmBudget,
}

impl RProblem<'_> {
    fn rm_factor(&self, w: &RBoundWitness, seed: u64) -> f64 {
        if self.part.rm.is_empty() {
            return 1.0;
        }
        let kk = w.ops.len();
        let tuples: Vec<Vec<Vec<f64>>> = (0..kk)
            .map(|k| self.part.rm.iter().map(|&s| w.vectors[s][k].clone()).collect())
            .collect();
        rm_norm(self.spaces, self.varpi, &self.part.rm, self.part.j_p, &tuples, &self.rm_budget, seed)
            .map(|e| e.value)
            .unwrap_or(0.0)
    }

    fn ratio(&self, w: &RBoundWitness, rm: f64) -> f64 {
        let kk = w.ops.len();
        let num: f64 = (0..kk).map(|k| form_k(self.family, w, k)).sum::<f64>().abs();
        let mut den = rm * self.spaces[self.part.j_p].norm(&w.vectors[self.part.j_p][0]);
        for &s in &self.part.rad {
            den *= rad_exact(&self.spaces[s], &w.vectors[s]);
        }
        if den <= 0.0 || num == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    fn set_fixed(&self, w: &mut RBoundWitness, x: &[f64]) {
        for v in w.vectors[self.part.j_p].iter_mut() {
            v.copy_from_slice(x);
        }
    }

    fn ascend(&self, mut w: RBoundWitness, rm_seed: u64, steps: usize, rng: &mut crate::Rng) -> (f64, RBoundWitness) {
        let kk = w.ops.len();
        let jp = self.part.j_p;
        let mut rm = self.rm_factor(&w, rm_seed);
        let mut best = self.ratio(&w, rm);
        for _ in 0..steps {
            let mut g = vec![0.0; self.spaces[jp].dim()];
            for k in 0..kk {
                for (a, b) in g.iter_mut().zip(form_gradient(self.family, &w, k, jp)) {
                    *a += b;
                }
            }
            if g.iter().any(|x| *x != 0.0) {
                let mut cand = w.clone();
                self.set_fixed(&mut cand, &self.spaces[jp].norming(&g));
                let r = self.ratio(&cand, rm);
                if r >= best {
                    best = r;
                    w = cand;
                }
            }
            for &s in &self.part.rad {
                let dual = self.spaces[s].dual();
                let mut cand = w.clone();
                for k in 0..kk {
                    let g = form_gradient(self.family, &w, k, s);
                    let m = dual.norm(&g);
                    cand.vectors[s][k] = self.spaces[s].norming(&g).iter().map(|x| x * m).collect();
                }
                let r = self.ratio(&cand, rm);
                if r > best {
                    best = r;
                    w = cand;
                }
                let mut cand = w.clone();
                let k = rng.random_range(0..kk);
                for x in cand.vectors[s][k].iter_mut() {
                    *x += 0.3 * rng.random_range(-1.0..1.0);
                }
                let r = self.ratio(&cand, rm);
                if r > best {
                    best = r;
                    w = cand;
                }
            }
            if self.rm_exact && !self.part.rm.is_empty() {
                let mut cand = w.clone();
                let s = self.part.rm[rng.random_range(0..self.part.rm.len())];
                let k = rng.random_range(0..kk);
                for x in cand.vectors[s][k].iter_mut() {
                    *x += 0.3 * rng.random_range(-1.0..1.0);
                }
                let crm = self.rm_factor(&cand, rm_seed);
                let r = self.ratio(&cand, crm);
                if r > best {
                    best = r;
                    rm = crm;
                    w = cand;
                }
            }
            if self.family.len() > 1 {
                let mut cand = w.clone();
                cand.ops[rng.random_range(0..kk)] = rng.random_range(0..self.family.len());
                let r = self.ratio(&cand, rm);
                if r > best {
                    best = r;
                    w = cand;
                }
            }
        }
        (best, w)
    }

    fn random_witness(&self, rng: &mut crate::Rng, kk: usize) -> RBoundWitness {
        let mut w = RBoundWitness {
            ops: (0..kk).map(|_| rng.random_range(0..self.family.len())).collect(),
            vectors: self
                .spaces
                .iter()
                .map(|s| (0..kk).map(|_| random_vec(rng, s.dim())).collect())
                .collect(),
        };
        let x = w.vectors[self.part.j_p][0].clone();
        self.set_fixed(&mut w, &x);
        w
    }
}

/// Lower-bound estimate of `R_{ϖ,P}(family)`; slots are 0-based with the output slot last.
pub fn r_bound(
    family: &[MultilinearOp],
    spaces: &[SpaceDescriptor],
    varpi: &Varpi,
    partition: &Partition,
    budget: &RBoundBudget,
    seed: u64,
) -> Result<RBoundEstimate> {
    check_family(family, spaces)?;
    partition.validate(spaces.len())?;
    let n = spaces.len() - 1;
    if n >= 3 {
        varpi.validate(spaces)?;
        if !partition.rm.is_empty() {
            check_rm_indices(spaces.len(), &partition.rm, partition.j_p)?;
        }
    }
    if budget.max_k == 0 || budget.max_k > 12 {
        return Err(Error::InvalidArgument("max_k must be in 1..=12".into()));
    }
    if family.iter().all(|t| t.is_zero()) {
        return Ok(RBoundEstimate {
            value: 0.0,
            certified: true,
            witness: None,
        });
    }
    let rm_exact = partition.rm.is_empty() || rm_is_exact(spaces, varpi);
    let prob = RProblem {
        family,
        spaces,
        varpi,
        part: partition,
        rm_exact,
        rm_budget: budget.rm,
    };
    let mut rng = crate::rng(seed);
    let mut starts = Vec::new();
    for (i, _) in family.iter().enumerate().take(8) {
        starts.push(RBoundWitness {
            ops: vec![i],
            vectors: spaces.iter().map(|s| vec![vec![1.0; s.dim()]]).collect(),
        });
    }
    for r in 0..budget.restarts {
        let kk = 1 + r % budget.max_k;
        starts.push(prob.random_witness(&mut rng, kk));
    }
    let mut best = 0.0;
    let mut witness = None;
    for (i, w) in starts.into_iter().enumerate() {
        let rm_seed = crate::derive_seed(seed, i as u64);
        let (val, w) = prob.ascend(w, rm_seed, budget.steps, &mut rng);
        if val > best {
            best = val;
            witness = Some(w);
        }
    }
    Ok(RBoundEstimate {
        value: best,
        certified: rm_exact,
        witness,
    })
}

/// Maximum of [`r_bound`] over all tight admissible partitions, with the per-partition values.
pub fn r_bound_tight(
    family: &[MultilinearOp],
    spaces: &[SpaceDescriptor],
    varpi: &Varpi,
    budget: &RBoundBudget,
    seed: u64,
) -> Result<(RBoundEstimate, Vec<(Partition, RBoundEstimate)>)> {
    let mut all = Vec::new();
    let mut best = RBoundEstimate {
        value: 0.0,
        certified: true,
        witness: None,
    };
    for p in Partition::tight(spaces.len()) {
        let e = r_bound(family, spaces, varpi, &p, budget, seed)?;
        if e.value > best.value {
            best = e.clone();
        }
        best.certified &= e.certified;
        all.push((p, e));
    }
    Ok((best, all))
}

/// An `N×N×N` R̂ test configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhatWitness {
    pub n: usize,
    /// Operator index for `(t, u, v)` at `(t·N + u)·N + v`.
    pub ops: Vec<usize>,
    /// `e1[t·N + u]`, `e2[u·N + v]`, `e3[t·N + v]`.
    pub e1: Vec<Vec<f64>>,
    pub e2: Vec<Vec<f64>>,
    pub e3: Vec<Vec<f64>>,
}

/// `‖(e_{l,m})‖_{Rad_2(X)}`; zero entries do not contribute.
pub fn rad2_norm(space: &SpaceDescriptor, entries: &[Vec<f64>]) -> Result<f64> {
    let nz: Vec<&Vec<f64>> = entries.iter().filter(|x| x.iter().any(|v| *v != 0.0)).collect();
    Ok(super::rad_norm(space, &nz, super::RadMode::Exact)?.value)
}

/// R̂ ratio `Σ_{t,u,v} |⟨T_{tuv}[e¹_{tu}, e²_{uv}], e³_{tv}⟩| / ∏ ‖e^i‖_{Rad_2}`.
pub fn rhat_ratio(family: &[MultilinearOp], spaces: &[SpaceDescriptor], w: &RhatWitness) -> Result<f64> {
    let n = w.n;
    let mut num = 0.0;
    for t in 0..n {
        for u in 0..n {
            for v in 0..n {
                let op = &family[w.ops[(t * n + u) * n + v]];
                num += op.form(&[&w.e1[t * n + u], &w.e2[u * n + v]], &w.e3[t * n + v]).abs();
            }
        }
    }
    let den = rad2_norm(&spaces[0], &w.e1)? * rad2_norm(&spaces[1], &w.e2)? * rad2_norm(&spaces[2], &w.e3)?;
    Ok(if den > 0.0 && num > 0.0 { num / den } else { 0.0 })
}

/// Embeds a bilinear R test configuration as an R̂ configuration with the same ratio numerator.
fn embed(w: &RBoundWitness, j_p: usize, spaces: &[SpaceDescriptor]) -> RhatWitness {
    let kk = w.ops.len();
    let n = kk;
    let zero = |s: usize| vec![0.0; spaces[s].dim()];
    let mut e1 = vec![zero(0); n * n];
    let mut e2 = vec![zero(1); n * n];
    let mut e3 = vec![zero(2); n * n];
    let mut ops = vec![w.ops[0]; n * n * n];
    for k in 0..kk {
        // The fixed slot sits at a single array position; the other two follow k.
        let (t, u, v) = match j_p {
            0 => (0, 0, k),
            1 => (k, 0, 0),
            _ => (0, k, 0),
        };
        ops[(t * n + u) * n + v] = w.ops[k];
        e1[t * n + u] = w.vectors[0][k].clone();
        e2[u * n + v] = w.vectors[1][k].clone();
        e3[t * n + v] = w.vectors[2][k].clone();
    }
    RhatWitness { n, ops, e1, e2, e3 }
}

/// Lower-bound estimate of `R̂(family)` for bilinear operators.
///
/// Witnesses of [`r_bound`] for the three tight partitions are embedded
/// first, so on a shared seed and budget the result is never below the
/// R-bound estimate.
pub fn rhat_bound(
    family: &[MultilinearOp],
    spaces: &[SpaceDescriptor],
    budget: &RBoundBudget,
    seed: u64,
) -> Result<(f64, Option<RhatWitness>)> {
    if spaces.len() != 3 {
        return Err(Error::InvalidArgument("R-hat bounds are defined for bilinear families".into()));
    }
    check_family(family, spaces)?;
    if family.iter().all(|t| t.is_zero()) {
        return Ok((0.0, None));
    }
    let mut best = 0.0;
    let mut best_w = None;
    for p in Partition::tight(3) {
        let e = r_bound(family, spaces, &Varpi::Product, &p, budget, seed)?;
        if let Some(w) = e.witness {
            let hw = embed(&w, p.j_p, spaces);
            let r = rhat_ratio(family, spaces, &hw)?;
            if r > best {
                best = r;
                best_w = Some(hw);
            }
        }
    }
    let mut rng = crate::rng(crate::derive_seed(seed, 0x5248));
    for r in 0..budget.restarts {
        let n = 1 + r % 3;
        let mut w = RhatWitness {
            n,
            ops: (0..n * n * n).map(|_| rng.random_range(0..family.len())).collect(),
            e1: (0..n * n).map(|_| random_vec(&mut rng, spaces[0].dim())).collect(),
            e2: (0..n * n).map(|_| random_vec(&mut rng, spaces[1].dim())).collect(),
            e3: (0..n * n).map(|_| random_vec(&mut rng, spaces[2].dim())).collect(),
        };
        let mut cur = rhat_ratio(family, spaces, &w)?;
        for _ in 0..budget.steps {
            let mut cand = w.clone();
            let which = rng.random_range(0..3);
            let i = rng.random_range(0..n * n);
            let target = match which {
                0 => &mut cand.e1[i],
                1 => &mut cand.e2[i],
                _ => &mut cand.e3[i],
            };
            for x in target.iter_mut() {
                *x += 0.3 * rng.random_range(-1.0..1.0);
            }
            let v = rhat_ratio(family, spaces, &cand)?;
            if v > cur {
                cur = v;
                w = cand;
            }
        }
        if cur > best {
            best = cur;
            best_w = Some(w);
        }
    }
    Ok((best, best_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const S: SpaceDescriptor = SpaceDescriptor::Scalar;

    #[test]
    fn tight_partitions() {
        assert_eq!(Partition::tight(3).len(), 3);
        for p in Partition::tight(5) {
            p.validate(5).unwrap();
            assert_eq!(p.rm.len(), 2);
        }
        let bad = Partition { j_p: 0, rad: vec![1], rm: vec![1, 2] };
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn zero_family() {
        let fam = vec![MultilinearOp::zeros(vec![1, 1], 1)];
        let p = &Partition::tight(3)[0];
        let e = r_bound(&fam, &[S, S, S], &Varpi::Product, p, &RBoundBudget::default(), 1).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(rhat_bound(&fam, &[S, S, S], &RBoundBudget::default(), 1).unwrap().0, 0.0);
    }

    #[test]
    fn scalar_multiplier_gives_its_modulus() {
        let fam = vec![MultilinearOp::scalar(-2.5, 2)];
        for p in Partition::tight(3) {
            let e = r_bound(&fam, &[S, S, S], &Varpi::Product, &p, &RBoundBudget::default(), 3).unwrap();
            assert!(e.certified);
            assert_abs_diff_eq!(e.value, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn negation_closed_family_matches() {
        let mut rng = crate::rng(8);
        let sp = vec![SpaceDescriptor::Lp { p: 3.0, dim: 2 }, SpaceDescriptor::Lp { p: 3.0, dim: 2 }, SpaceDescriptor::Lp { p: 3.0, dim: 2 }];
        let t = MultilinearOp::random(&mut rng, vec![2, 2], 2);
        let p = &Partition::tight(3)[2];
        let b = RBoundBudget::default();
        let one = r_bound(std::slice::from_ref(&t), &sp, &Varpi::Product, p, &b, 4).unwrap().value;
        let both = r_bound(&[t.clone(), t.scaled(-1.0)], &sp, &Varpi::Product, p, &b, 4).unwrap().value;
        // Negated members do not raise the supremum; the estimates agree up to search noise.
        assert!((one - both).abs() <= 0.05 * one, "{one} vs {both}");
    }

    #[test]
    fn rhat_scalar_one() {
        let fam = vec![MultilinearOp::scalar(1.0, 2)];
        let w = RhatWitness { n: 1, ops: vec![0], e1: vec![vec![1.0]], e2: vec![vec![1.0]], e3: vec![vec![1.0]] };
        assert_abs_diff_eq!(rhat_ratio(&fam, &[S, S, S], &w).unwrap(), 1.0);
        let (v, _) = rhat_bound(&fam, &[S, S, S], &RBoundBudget::default(), 2).unwrap();
        assert!(v >= 1.0 - 1e-12);
    }

    #[test]
    fn rhat_dominates_r() {
        let mut rng = crate::rng(21);
        let sp = vec![SpaceDescriptor::Schatten { p: 2.0, n: 2 }; 3];
        let fam: Vec<MultilinearOp> = (0..3).map(|_| MultilinearOp::random(&mut rng, vec![4, 4], 4)).collect();
        let b = RBoundBudget { restarts: 4, steps: 10, ..Default::default() };
        let (r, _) = r_bound_tight(&fam, &sp, &Varpi::Product, &b, 5).unwrap();
        let (rh, _) = rhat_bound(&fam, &sp, &b, 5).unwrap();
        assert!(rh >= r.value - 1e-12);
    }

    #[test]
    fn four_linear_scalar_r_bound() {
        // n = 3: tight partitions carry one RM slot, evaluated in closed form.
        let fam = vec![MultilinearOp::scalar(1.5, 3)];
        let b = RBoundBudget { restarts: 4, steps: 10, ..Default::default() };
        let (e, parts) = r_bound_tight(&fam, &[S, S, S, S], &Varpi::Product, &b, 1).unwrap();
        assert_eq!(parts.len(), 12);
        assert!(e.certified);
        assert_abs_diff_eq!(e.value, 1.5, epsilon = 1e-9);
    }
}

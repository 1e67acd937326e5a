//! Lifting a triply indexed family of bilinear shifts to one shift acting on
//! doubly indexed Rademacher sequences.
//!
//! For shifts `S_{t,u,v}` (`t, u, v < N`) sharing grid, complexity and
//! cancellative slots, and signs `ε_{t,u,v}`, the lifted shift `S` has
//! coefficients
//!
//! ```text
//! ⟨a[e¹, e²], e³⟩ = Σ_{t,u,v} ε_{t,u,v} ⟨a^{t,u,v}[e¹_{t,u}, e²_{u,v}], e³_{t,v}⟩
//! ```
//!
//! so that `Σ ε_{t,u,v} ⟨S_{t,u,v}(f¹_{t,u}, f²_{u,v}), f³_{t,v}⟩ = ⟨S(F_1, F_2), F_3⟩`.
//! A value in `Rad₂(X)` is stored as `N²` consecutive blocks of `X`
//! coordinates, block `l·N + m` holding entry `(l, m)`.

use std::collections::BTreeSet;

use crate::haar::GridFunction;
use crate::multilinear::MultilinearOp;
use crate::spaces::SpaceDescriptor;
use crate::{Error, Result};

use super::{ShiftKey, ShiftSpec};

/// Coordinate carrier of `Rad₂(X)` with `N × N` entries.
///
/// The norm attached is the `ℓ²(X)` norm over the entries, which agrees with
/// the Rademacher norm when `X` is a Hilbert space.
pub fn rad2_space(x: &SpaceDescriptor, n: usize) -> SpaceDescriptor {
    SpaceDescriptor::Bochner {
        p: 2.0,
        weights: vec![1.0; n * n],
        inner: Box::new(x.clone()),
    }
}

/// Entry `(l, m)` of a `Rad₂(X)`-valued function.
pub fn rad2_component(f: &GridFunction, inner: &SpaceDescriptor, n: usize, l: usize, m: usize) -> Result<GridFunction> {
    let d = inner.dim();
    if f.dim() != n * n * d || l >= n || m >= n {
        return Err(Error::SpaceMismatch(format!(
            "function of dimension {} is not a {n}×{n} array over dimension {d}",
            f.dim()
        )));
    }
    let start = (l * n + m) * d;
    Ok(GridFunction::from_fn(f.grid().clone(), inner.clone(), |c, out| {
        out.copy_from_slice(&f.value(c)[start..start + d]);
    }))
}

/// Inverse of [`rad2_component`]: `parts[l·N + m]` becomes entry `(l, m)`.
pub fn rad2_assemble(parts: &[GridFunction], n: usize) -> Result<GridFunction> {
    if parts.len() != n * n || n == 0 {
        return Err(Error::InvalidArgument(format!("need {} components", n * n)));
    }
    let inner = parts[0].space().clone();
    let d = inner.dim();
    for p in parts {
        if p.dim() != d || !p.same_grid(&parts[0]) {
            return Err(Error::SpaceMismatch("components differ in grid or space".into()));
        }
    }
    Ok(GridFunction::from_fn(parts[0].grid().clone(), rad2_space(&inner, n), |c, out| {
        for (i, p) in parts.iter().enumerate() {
            out[i * d..(i + 1) * d].copy_from_slice(p.value(c));
        }
    }))
}

/// The lifted shift of a family indexed by `(t·N + u)·N + v`.
pub fn lift_shift_family(shifts: &[ShiftSpec], eps: &[f64], n: usize) -> Result<ShiftSpec> {
    let count = n * n * n;
    if n == 0 || shifts.len() != count || eps.len() != count {
        return Err(Error::InvalidArgument(format!(
            "a family with N = {n} needs {count} shifts and signs"
        )));
    }
    if eps.iter().any(|e| (e.abs() - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidArgument("weights must be unimodular".into()));
    }
    let first = &shifts[0];
    if first.arity() != 2 {
        return Err(Error::InvalidArgument("the lift is defined for bilinear shifts".into()));
    }
    for s in shifts {
        if s.grid() != first.grid()
            || s.complexity() != first.complexity()
            || s.slots() != first.slots()
            || s.in_spaces() != first.in_spaces()
            || s.out_space() != first.out_space()
        {
            return Err(Error::InvalidArgument(
                "shifts differ in grid, complexity, slots or spaces".into(),
            ));
        }
    }
    let x1 = &first.in_spaces()[0];
    let x2 = &first.in_spaces()[1];
    let y = first.out_space();
    let (d1, d2, d3) = (x1.dim(), x2.dim(), y.dim());
    let mut lifted = ShiftSpec::new(
        first.grid().clone(),
        first.complexity().to_vec(),
        first.slots(),
        vec![rad2_space(x1, n), rad2_space(x2, n)],
        rad2_space(y, n),
    )?;
    let keys: BTreeSet<&ShiftKey> = shifts.iter().flat_map(|s| s.coeffs().keys()).collect();
    let (w1, w2) = (n * n * d1, n * n * d2);
    for key in keys {
        let mut op = MultilinearOp::new(vec![w1, w2], n * n * d3, vec![0.0; n * n * d3 * w1 * w2])?;
        let data = op.data_mut();
        for t in 0..n {
            for u in 0..n {
                for v in 0..n {
                    let idx = (t * n + u) * n + v;
                    let Some(a) = shifts[idx].coeffs().get(key) else {
                        continue;
                    };
                    let a = a.data();
                    for o in 0..d3 {
                        for i in 0..d1 {
                            for j in 0..d2 {
                                let row = (t * n + v) * d3 + o;
                                let c1 = (t * n + u) * d1 + i;
                                let c2 = (u * n + v) * d2 + j;
                                data[(row * w1 + c1) * w2 + c2] += eps[idx] * a[(o * d1 + i) * d2 + j];
                            }
                        }
                    }
                }
            }
        }
        lifted.insert(key.clone(), op)?;
    }
    Ok(lifted)
}

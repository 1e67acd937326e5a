//! Finite-dimensional normed spaces and `(n+1)`-linear contractions.
//!
//! Vectors are flat `f64` slices in a fixed coordinate basis. Duality is the
//! plain coordinate pairing `⟨x, y⟩ = Σ x_i y_i`, so every space carries an
//! explicit dual descriptor whose norm is the dual norm for that pairing.

pub mod rademacher;
pub mod rbound;

pub use rademacher::{
    contraction_check, rad_moment, rad_norm, rm_norm, RadEstimate, RadMode, RmBudget, RmEstimate,
};
pub use rbound::{r_bound, rhat_bound, Partition, RBoundBudget, RBoundEstimate};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A finite-dimensional real Banach space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceDescriptor {
    Scalar,
    /// `ℓ^p` on `dim` coordinates.
    Lp { p: f64, dim: usize },
    /// `n × n` matrices with the Schatten `p`-norm, stored row-major.
    Schatten { p: f64, n: usize },
    /// `L^p(Ω, μ; X)` over a finite set `Ω` with point masses `weights`.
    Bochner {
        p: f64,
        weights: Vec<f64>,
        inner: Box<SpaceDescriptor>,
    },
}

/// Hölder conjugate exponent.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("exponent {p} is not in (1, inf)")))
    }
}

fn lp(x: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn svd(x: &[f64], n: usize) -> nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    DMatrix::from_row_slice(n, n, x).svd(true, true)
}

impl SpaceDescriptor {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Scalar => Ok(()),
            Self::Lp { p, dim } => {
                check_p(*p)?;
                if *dim == 0 {
                    return Err(Error::InvalidArgument("lp dimension must be >= 1".into()));
                }
                Ok(())
            }
            Self::Schatten { p, n } => {
                check_p(*p)?;
                if *n == 0 || *n > 16 {
                    return Err(Error::InvalidArgument("schatten side must be in 1..=16".into()));
                }
                Ok(())
            }
            Self::Bochner { p, weights, inner } => {
                check_p(*p)?;
                if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidArgument(
                        "bochner weights must be positive and non-empty".into(),
                    ));
                }
                inner.validate()
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Scalar => 1,
            Self::Lp { dim, .. } => *dim,
            Self::Schatten { n, .. } => n * n,
            Self::Bochner { weights, inner, .. } => weights.len() * inner.dim(),
        }
    }

    /// True for spaces whose norm is `|x|` on a single coordinate.
    pub fn is_scalar(&self) -> bool {
        match self {
            Self::Scalar => true,
            Self::Lp { dim, .. } => *dim == 1,
            Self::Schatten { n, .. } => *n == 1,
            Self::Bochner { .. } => false,
        }
    }

    /// True when the norm comes from an inner product.
    pub fn is_hilbert(&self) -> bool {
        match self {
            Self::Scalar => true,
            Self::Lp { p, dim } => *p == 2.0 || *dim == 1,
            Self::Schatten { p, n } => *p == 2.0 || *n == 1,
            Self::Bochner { p, inner, .. } => *p == 2.0 && inner.is_hilbert(),
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            Self::Scalar => x[0].abs(),
            Self::Lp { p, .. } => lp(x, *p),
            Self::Schatten { p, n } => {
                if *p == 2.0 || *n == 1 {
                    return lp(x, 2.0);
                }
                let s = DMatrix::from_row_slice(*n, *n, x).singular_values();
                lp(s.as_slice(), *p)
            }
            Self::Bochner { p, weights, inner } => {
                let d = inner.dim();
                let parts: Vec<f64> = weights
                    .iter()
                    .zip(x.chunks_exact(d))
                    .map(|(w, c)| w.powf(1.0 / p) * inner.norm(c))
                    .collect();
                lp(&parts, *p)
            }
        }
    }

    /// Dual space for the coordinate pairing.
    pub fn dual(&self) -> Self {
        match self {
            Self::Scalar => Self::Scalar,
            Self::Lp { p, dim } => Self::Lp {
                p: conjugate(*p),
                dim: *dim,
            },
            Self::Schatten { p, n } => Self::Schatten {
                p: conjugate(*p),
                n: *n,
            },
            Self::Bochner { p, weights, inner } => {
                let q = conjugate(*p);
                Self::Bochner {
                    p: q,
                    weights: weights.iter().map(|w| w.powf(1.0 - q)).collect(),
                    inner: Box::new(inner.dual()),
                }
            }
        }
    }

    /// A unit vector `x` with `⟨x, w⟩ = ‖w‖_{X*}`; zero when `w = 0`.
    pub fn norming(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Self::Scalar => vec![if w[0] >= 0.0 { 1.0 } else { -1.0 }],
            Self::Lp { p, .. } => {
                let q = conjugate(*p);
                let nw = lp(w, q);
                if nw == 0.0 {
                    return vec![0.0; w.len()];
                }
                w.iter()
                    .map(|v| v.signum() * (v.abs() / nw).powf(q - 1.0))
                    .collect()
            }
            Self::Schatten { p, n } => {
                if w.iter().all(|v| *v == 0.0) {
                    return vec![0.0; w.len()];
                }
                let q = conjugate(*p);
                let dec = svd(w, *n);
                let s = dec.singular_values.as_slice();
                let ns = lp(s, q);
                let u = dec.u.as_ref().expect("u requested");
                let vt = dec.v_t.as_ref().expect("v_t requested");
                let mut out = vec![0.0; n * n];
                for (k, &sk) in s.iter().enumerate() {
                    let c = (sk / ns).powf(q - 1.0);
                    for i in 0..*n {
                        for j in 0..*n {
                            out[i * n + j] += c * u[(i, k)] * vt[(k, j)];
                        }
                    }
                }
                out
            }
            Self::Bochner { p, weights, inner } => {
                let d = inner.dim();
                let idual = inner.dual();
                let q = conjugate(*p);
                let mags: Vec<f64> = w.chunks_exact(d).map(|c| idual.norm(c)).collect();
                let coef: Vec<f64> = mags
                    .iter()
                    .zip(weights)
                    .map(|(m, mu)| (m / mu).powf(q - 1.0))
                    .collect();
                let total: f64 = coef
                    .iter()
                    .zip(weights)
                    .map(|(c, mu)| mu * c.powf(*p))
                    .sum::<f64>()
                    .powf(1.0 / p);
                if total == 0.0 {
                    return vec![0.0; w.len()];
                }
                w.chunks_exact(d)
                    .zip(&coef)
                    .flat_map(|(c, a)| {
                        inner
                            .norming(c)
                            .into_iter()
                            .map(move |v| v * a / total)
                    })
                    .collect()
            }
        }
    }

    /// Exponent of the outermost `L^p` structure (`2` for scalars).
    pub fn exponent(&self) -> f64 {
        match self {
            Self::Scalar => 2.0,
            Self::Lp { p, .. } | Self::Schatten { p, .. } | Self::Bochner { p, .. } => *p,
        }
    }
}

/// `⟨x, y⟩ = Σ x_i y_i`.
pub fn pairing(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// An `(n+1)`-linear contraction `ϖ` on a tuple of spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum Varpi {
    /// `Σ_i ∏_m e_m[i]`; on scalars this is the plain product.
    Product,
    /// `tr(E_1 E_2 ⋯ E_{n+1})` on square matrices.
    TraceOfProduct,
    /// `Σ_ω μ_ω ϖ_0(e_1(ω), …, e_{n+1}(ω))` on Bochner spaces over a finite set.
    Integral {
        weights: Vec<f64>,
        inner: Box<Varpi>,
    },
}

impl Varpi {
    /// Checks that the contraction can act on the given spaces.
    pub fn validate(&self, spaces: &[SpaceDescriptor]) -> Result<()> {
        match self {
            Self::Product => {
                let d = spaces.first().map(|s| s.dim()).unwrap_or(1);
                if spaces.iter().any(|s| s.dim() != d) {
                    return Err(Error::SpaceMismatch(
                        "product contraction needs equal dimensions".into(),
                    ));
                }
                Ok(())
            }
            Self::TraceOfProduct => {
                let n = match spaces.first() {
                    Some(SpaceDescriptor::Schatten { n, .. }) => *n,
                    Some(s) if s.is_scalar() => 1,
                    _ => {
                        return Err(Error::SpaceMismatch(
                            "trace contraction needs Schatten spaces".into(),
                        ))
                    }
                };
                if spaces.iter().any(|s| s.dim() != n * n) {
                    return Err(Error::SpaceMismatch("Schatten sides differ".into()));
                }
                Ok(())
            }
            Self::Integral { weights, inner } => {
                let mut inner_spaces = Vec::with_capacity(spaces.len());
                for s in spaces {
                    match s {
                        SpaceDescriptor::Bochner {
                            weights: w,
                            inner: x,
                            ..
                        } if w.len() == weights.len() => inner_spaces.push((**x).clone()),
                        _ => {
                            return Err(Error::SpaceMismatch(
                                "integral contraction needs Bochner spaces over the same set"
                                    .into(),
                            ))
                        }
                    }
                }
                inner.validate(&inner_spaces)
            }
        }
    }

    pub fn eval(&self, e: &[&[f64]]) -> f64 {
        match self {
            Self::Product => {
                let d = e[0].len();
                (0..d).map(|i| e.iter().map(|v| v[i]).product::<f64>()).sum()
            }
            Self::TraceOfProduct => {
                let n = (e[0].len() as f64).sqrt().round() as usize;
                let mut acc = DMatrix::from_row_slice(n, n, e[0]);
                for m in &e[1..] {
                    acc *= DMatrix::from_row_slice(n, n, m);
                }
                acc.trace()
            }
            Self::Integral { weights, inner } => {
                let w = weights.len();
                let mut total = 0.0;
                for (o, mu) in weights.iter().enumerate() {
                    let parts: Vec<&[f64]> = e
                        .iter()
                        .map(|v| {
                            let d = v.len() / w;
                            &v[o * d..(o + 1) * d]
                        })
                        .collect();
                    total += mu * inner.eval(&parts);
                }
                total
            }
        }
    }

    /// The vector `w` in slot `slot` with `ϖ(…, x, …) = ⟨x, w⟩`, other slots fixed.
    pub fn gradient(&self, e: &[&[f64]], slot: usize) -> Vec<f64> {
        let d = e[slot].len();
        let mut basis = vec![0.0; d];
        (0..d)
            .map(|i| {
                basis[i] = 1.0;
                let mut args: Vec<&[f64]> = e.to_vec();
                args[slot] = &basis;
                let v = self.eval(&args);
                basis[i] = 0.0;
                v
            })
            .collect()
    }
}

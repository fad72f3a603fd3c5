//! Concrete class B maps: λe^z, ae^z + be^{-z}, and their domain/range rescalings.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest real exponent whose exp is still finite.
pub const EXP_OVERFLOW: f64 = 709.78;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Kind {
    Exponential { lambda: Complex64 },
    ExpPair { a: Complex64, b: Complex64 },
    DomainRescaled { base: Box<FunctionFamily>, lambda: Complex64 },
    RangeRescaled { base: Box<FunctionFamily>, lambda: Complex64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionFamily {
    pub kind: Kind,
    pub k: f64,
    pub l: f64,
}

/// Result of evaluating a family. `Overflow` carries the real part of the
/// exponent that left the float range (negative for underflow-side terms
/// never occurs; the sign tells which exponential blew up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eval {
    Finite(Complex64),
    Overflow { exponent: f64 },
}

impl Eval {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            Eval::Finite(v) => Some(v),
            Eval::Overflow { .. } => None,
        }
    }

    pub fn expect_finite(self) -> Complex64 {
        self.finite().expect("evaluation overflowed")
    }
}

fn nonzero(l: Complex64, what: &str) -> Result<()> {
    if l == Complex64::new(0.0, 0.0) || !l.is_finite() {
        return Err(Error::Invalid(format!("{what} must be finite and nonzero")));
    }
    Ok(())
}

/// λ·e^z, reporting overflow instead of producing inf/NaN.
fn scaled_exp(lambda: Complex64, z: Complex64) -> Eval {
    let exponent = z.re + lambda.norm().ln();
    if exponent > EXP_OVERFLOW {
        return Eval::Overflow { exponent };
    }
    let v = if z.re.abs() < EXP_OVERFLOW { lambda * z.exp() } else { (z + lambda.ln()).exp() };
    if v.is_finite() {
        Eval::Finite(v)
    } else {
        Eval::Overflow { exponent }
    }
}

impl FunctionFamily {
    /// z ↦ λe^z with K = 1 and the smallest round L ≥ 3 containing f(D_K).
    pub fn exponential(lambda: Complex64) -> Result<Self> {
        nonzero(lambda, "lambda")?;
        let k: f64 = 1.0;
        let l = (1.1 * lambda.norm() * k.exp()).max(3.0);
        Ok(FunctionFamily { kind: Kind::Exponential { lambda }, k, l })
    }

    /// z ↦ ae^z + be^{-z}; K is 1.25 times the largest critical value modulus.
    pub fn exp_pair(a: Complex64, b: Complex64) -> Result<Self> {
        nonzero(a, "a")?;
        nonzero(b, "b")?;
        let k = 1.25 * 2.0 * (a * b).sqrt().norm();
        let l = (1.1 * (a.norm() + b.norm()) * k.exp()).max(k).max(std::f64::consts::E);
        Ok(FunctionFamily { kind: Kind::ExpPair { a, b }, k, l })
    }

    pub fn domain_rescaled(base: FunctionFamily, lambda: Complex64) -> Result<Self> {
        nonzero(lambda, "lambda")?;
        let (k, l) = (base.k, base.l);
        Ok(FunctionFamily { kind: Kind::DomainRescaled { base: Box::new(base), lambda }, k, l })
    }

    pub fn range_rescaled(base: FunctionFamily, lambda: Complex64) -> Result<Self> {
        nonzero(lambda, "lambda")?;
        let (k, l) = (base.k, base.l);
        Ok(FunctionFamily { kind: Kind::RangeRescaled { base: Box::new(base), lambda }, k, l })
    }

    pub fn with_kl(mut self, k: f64, l: f64) -> Result<Self> {
        if !(k > 0.0 && l >= k) {
            return Err(Error::Invalid(format!("need 0 < K <= L, got K = {k}, L = {l}")));
        }
        self.k = k;
        self.l = l;
        Ok(self)
    }

    /// The underlying base family (itself for the two base kinds).
    pub fn base(&self) -> &FunctionFamily {
        match &self.kind {
            Kind::DomainRescaled { base, .. } | Kind::RangeRescaled { base, .. } => base.base(),
            _ => self,
        }
    }
}

pub fn evaluate(f: &FunctionFamily, z: Complex64) -> Eval {
    match &f.kind {
        Kind::Exponential { lambda } => scaled_exp(*lambda, z),
        Kind::ExpPair { a, b } => {
            let p = scaled_exp(*a, z);
            let m = scaled_exp(*b, -z);
            match (p, m) {
                (Eval::Finite(p), Eval::Finite(m)) => {
                    let v = p + m;
                    if v.is_finite() {
                        Eval::Finite(v)
                    } else {
                        Eval::Overflow { exponent: z.re.abs() }
                    }
                }
                (Eval::Overflow { exponent }, _) => Eval::Overflow { exponent },
                (_, Eval::Overflow { exponent }) => Eval::Overflow { exponent: -exponent },
            }
        }
        Kind::DomainRescaled { base, lambda } => evaluate(base, lambda * z),
        Kind::RangeRescaled { base, lambda } => match evaluate(base, z) {
            Eval::Finite(v) => {
                let w = lambda * v;
                if w.is_finite() {
                    Eval::Finite(w)
                } else {
                    Eval::Overflow { exponent: z.re }
                }
            }
            o => o,
        },
    }
}

pub fn derivative(f: &FunctionFamily, z: Complex64) -> Eval {
    match &f.kind {
        Kind::Exponential { lambda } => scaled_exp(*lambda, z),
        Kind::ExpPair { a, b } => match (scaled_exp(*a, z), scaled_exp(-*b, -z)) {
            (Eval::Finite(p), Eval::Finite(m)) => Eval::Finite(p + m),
            (Eval::Overflow { exponent }, _) => Eval::Overflow { exponent },
            (_, Eval::Overflow { exponent }) => Eval::Overflow { exponent: -exponent },
        },
        Kind::DomainRescaled { base, lambda } => match derivative(base, lambda * z) {
            Eval::Finite(v) => Eval::Finite(lambda * v),
            o => o,
        },
        Kind::RangeRescaled { base, lambda } => match derivative(base, z) {
            Eval::Finite(v) => Eval::Finite(lambda * v),
            o => o,
        },
    }
}

/// The singular values (critical and asymptotic) and the stored radius K.
pub fn singular_bound(f: &FunctionFamily) -> (f64, Vec<Complex64>) {
    (f.k, singular_values(f))
}

pub fn singular_values(f: &FunctionFamily) -> Vec<Complex64> {
    match &f.kind {
        Kind::Exponential { .. } => vec![Complex64::new(0.0, 0.0)],
        Kind::ExpPair { a, b } => {
            let r = 2.0 * (a * b).sqrt();
            vec![r, -r]
        }
        Kind::DomainRescaled { base, .. } => singular_values(base),
        Kind::RangeRescaled { base, lambda } => {
            singular_values(base).into_iter().map(|v| lambda * v).collect()
        }
    }
}

/// Critical points of the base ExpPair: e^{2z} = b/a, one per residue class mod πi.
pub fn exp_pair_critical_points(a: Complex64, b: Complex64) -> [Complex64; 2] {
    let z0 = (b / a).ln() / 2.0;
    [z0, z0 + Complex64::new(0.0, PI)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RescaleMode {
    Domain,
    Range,
}

/// λ = K/(e^{8π}L) and the rescaled map. The returned map keeps L and takes
/// K := L, since D_L (not D_K) is the disc it maps into itself.
pub fn disjoint_type_rescale(f: &FunctionFamily, mode: RescaleMode) -> Result<(Complex64, FunctionFamily)> {
    let lambda = Complex64::new(f.k / ((8.0 * PI).exp() * f.l), 0.0);
    let g = match mode {
        RescaleMode::Domain => FunctionFamily::domain_rescaled(f.clone(), lambda)?,
        RescaleMode::Range => FunctionFamily::range_rescaled(f.clone(), lambda)?,
    };
    let l = f.l;
    Ok((lambda, g.with_kl(l, l)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointTypeCertificate {
    pub checked_radius: f64,
    pub boundary_samples: usize,
    pub max_image_modulus: f64,
    pub singular_moduli: Vec<f64>,
}

impl DisjointTypeCertificate {
    pub fn is_valid(&self) -> bool {
        self.max_image_modulus < self.checked_radius
            && self.singular_moduli.iter().all(|m| *m < self.checked_radius)
    }
}

/// Max of |f| over `n` equally spaced points of the circle |z| = r, starting at z = r.
pub fn max_modulus_on_circle(f: &FunctionFamily, r: f64, n: usize) -> f64 {
    (0..n)
        .map(|j| {
            let z = Complex64::from_polar(r, 2.0 * PI * j as f64 / n as f64);
            match evaluate(f, z) {
                Eval::Finite(v) => v.norm(),
                Eval::Overflow { .. } => f64::INFINITY,
            }
        })
        .fold(0.0, f64::max)
}

pub fn verify_disjoint_type(f: &FunctionFamily, n_samples: usize) -> Result<DisjointTypeCertificate> {
    if n_samples < 8 {
        return Err(Error::Invalid(format!("need at least 8 boundary samples, got {n_samples}")));
    }
    Ok(DisjointTypeCertificate {
        checked_radius: f.k,
        boundary_samples: n_samples,
        max_image_modulus: max_modulus_on_circle(f, f.k, n_samples),
        singular_moduli: singular_values(f).iter().map(|v| v.norm()).collect(),
    })
}

//! Plane regions and the error budget carried by certified values.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::{BigRational, Rational64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Region {
    Disc { center: Complex64, radius: f64 },
    /// Points with real part > q.
    HalfPlane { q: f64 },
    /// a < |z| < b. `b` may be `f64::INFINITY` for the exterior of a disc.
    Annulus { a: f64, b: f64 },
    /// a < Re z < b.
    Strip { a: f64, b: f64 },
    /// The open square (-Q, Q)^2 with Q exact.
    Square { q: Rational64 },
}

impl Region {
    pub fn disc(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("disc radius {radius} must be positive")));
        }
        Ok(Region::Disc { center, radius })
    }

    pub fn annulus(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a < b) {
            return Err(Error::Invalid(format!("annulus needs 0 < a < b, got ({a}, {b})")));
        }
        Ok(Region::Annulus { a, b })
    }

    pub fn strip(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Invalid(format!("strip needs a < b, got ({a}, {b})")));
        }
        Ok(Region::Strip { a, b })
    }

    pub fn square(q: Rational64) -> Result<Self> {
        if q <= Rational64::from_integer(0) {
            return Err(Error::Invalid(format!("square half-side {q} must be positive")));
        }
        Ok(Region::Square { q })
    }
}

fn big(q: &Rational64) -> BigRational {
    BigRational::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

/// Exact test of |x| < q for a float x, via the exact rational value of x.
pub fn abs_lt_rational(x: f64, q: &Rational64) -> bool {
    match BigRational::from_float(x.abs()) {
        Some(xr) => xr < big(q),
        None => false,
    }
}

/// Exact square membership for rational coordinates.
pub fn square_contains_rational(q: &Rational64, re: &Rational64, im: &Rational64) -> bool {
    let zero = Rational64::from_integer(0);
    let abs = |v: &Rational64| if *v < zero { -*v } else { *v };
    abs(re) < *q && abs(im) < *q
}

pub fn region_contains(r: &Region, z: Complex64) -> bool {
    match r {
        Region::Disc { center, radius } => (z - center).norm() < *radius,
        Region::HalfPlane { q } => z.re > *q,
        Region::Annulus { a, b } => {
            let m = z.norm();
            m > *a && m < *b
        }
        Region::Strip { a, b } => z.re > *a && z.re < *b,
        Region::Square { q } => abs_lt_rational(z.re, q) && abs_lt_rational(z.im, q),
    }
}

/// Closure membership, used where the closed region matters (orbit meets the closed S_R).
pub fn region_closure_contains(r: &Region, z: Complex64) -> bool {
    match r {
        Region::Disc { center, radius } => (z - center).norm() <= *radius,
        Region::HalfPlane { q } => z.re >= *q,
        Region::Annulus { a, b } => {
            let m = z.norm();
            m >= *a && m <= *b
        }
        Region::Strip { a, b } => z.re >= *a && z.re <= *b,
        Region::Square { q } => {
            let qb = big(q);
            let le = |x: f64| BigRational::from_float(x.abs()).map(|v| v <= qb).unwrap_or(false);
            le(z.re) && le(z.im)
        }
    }
}

/// Image of a vertical strip or right half-plane under exp.
pub fn exp_image(r: &Region) -> Result<Region> {
    match r {
        Region::Strip { a, b } => Ok(Region::Annulus { a: a.exp(), b: b.exp() }),
        Region::HalfPlane { q } => Ok(Region::Annulus { a: q.exp(), b: f64::INFINITY }),
        other => Err(Error::UnsupportedRegion(format!("{other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub analytic_bound: f64,
    pub float_epsilon_count: u64,
}

impl ErrorBudget {
    pub fn new(analytic_bound: f64, float_epsilon_count: u64) -> Self {
        debug_assert!(analytic_bound >= 0.0);
        ErrorBudget { analytic_bound, float_epsilon_count }
    }

    /// Total error for a value of magnitude `scale`.
    pub fn total(&self, scale: f64) -> f64 {
        self.analytic_bound + self.float_epsilon_count as f64 * f64::EPSILON * scale.max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment_examples() {
        assert!(region_contains(&Region::annulus(1.0, 2.0).unwrap(), Complex64::new(1.5, 0.0)));
        assert!(!region_contains(&Region::HalfPlane { q: 0.0 }, Complex64::new(-1.0, 0.0)));
        let sq = Region::square(Rational64::from_integer(3)).unwrap();
        assert!(!region_contains(&sq, Complex64::new(10.5, 0.707)));
        assert!(region_contains(&sq, Complex64::new(2.999, -2.5)));
    }

    #[test]
    fn exp_images() {
        let a = exp_image(&Region::strip(0.0, 2f64.ln()).unwrap()).unwrap();
        match a {
            Region::Annulus { a, b } => {
                assert!((a - 1.0).abs() < 1e-15 && (b - 2.0).abs() < 1e-15)
            }
            _ => panic!(),
        }
        assert_eq!(
            exp_image(&Region::strip(-1.0, 0.0).unwrap()).unwrap(),
            Region::Annulus { a: (-1f64).exp(), b: 1.0 }
        );
        match exp_image(&Region::HalfPlane { q: 3f64.ln() }).unwrap() {
            Region::Annulus { a, b } => {
                assert!((a - 3.0).abs() < 1e-14);
                assert!(b.is_infinite());
            }
            _ => panic!(),
        }
        assert!(exp_image(&Region::annulus(1.0, 2.0).unwrap()).is_err());
    }

    #[test]
    fn square_boundary_is_exact() {
        let q = Rational64::new(7, 3);
        let sq = Region::Square { q };
        // 7/3 is not a float; the nearest float below and above straddle it.
        let x = 7.0 / 3.0;
        let inside = BigRational::from_float(x).unwrap() < big(&q);
        assert_eq!(region_contains(&sq, Complex64::new(x, 0.0)), inside);
        assert!(square_contains_rational(&q, &Rational64::new(2, 1), &Rational64::new(-7, 4)));
        assert!(!square_contains_rational(&q, &Rational64::new(7, 3), &Rational64::new(0, 1)));
    }

    #[test]
    fn invalid_regions_rejected() {
        assert!(Region::disc(Complex64::new(0.0, 0.0), 0.0).is_err());
        assert!(Region::annulus(2.0, 1.0).is_err());
        assert!(Region::strip(1.0, 1.0).is_err());
        assert!(Region::square(Rational64::from_integer(0)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn exp_image_of_strip(a in -5.0f64..5.0, w in 0.01f64..5.0, x in -6.0f64..11.0, y in -3.1f64..3.1) {
                let s = Region::strip(a, a + w).unwrap();
                let z = Complex64::new(x, y);
                // skip points within rounding of the strip walls
                prop_assume!((x - a).abs() > 1e-9 && (x - a - w).abs() > 1e-9);
                prop_assert_eq!(region_contains(&exp_image(&s).unwrap(), z.exp()), region_contains(&s, z));
            }
        }
    }
}

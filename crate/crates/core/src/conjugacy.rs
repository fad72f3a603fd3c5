//! The conjugacy Θ∘G = F∘Θ between the logarithmic transform of f and that
//! of its disjoint-type rescaling g(z) = f(λz), computed as the limit of
//! Θ_{m+1}(w) = F_{T'}^{-1}(Θ_m(G(w))).

use std::cmp::Ordering;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{disjoint_type_rescale, FunctionFamily, RescaleMode};
use crate::logspace::{
    address_order, derivative_f, eval_f, inverse_branch, tract_of, ExternalAddress, LogTransform, TractId,
};
use crate::rays::{escape_test, ray_point, EscapeVerdict};
use crate::region::ErrorBudget;

/// Orbit points beyond this modulus are taken as the truncation level Θ_0 = id.
const TOP_MODULUS: f64 = 1e15;

#[derive(Debug, Clone)]
pub struct ConjugacyMap {
    pub f: LogTransform,
    pub g: LogTransform,
    pub lambda: Complex64,
    pub q: f64,
    pub depth: usize,
    pub tract_shift: Complex64,
}

impl ConjugacyMap {
    /// Conjugacy between f and its domain rescaling by λ = K/(e^{8π}L).
    /// `q` defaults to the smallest integer above 2|log λ| + 1, plus one.
    pub fn new(f: &FunctionFamily, q: Option<f64>, depth: usize) -> Result<Self> {
        let (lambda, g) = disjoint_type_rescale(f, RescaleMode::Domain)?;
        Self::build(LogTransform::new(f.clone())?, LogTransform::new(g)?, lambda, q, depth)
    }

    /// The degenerate case λ = 1, where G = F.
    pub fn identity(f: &FunctionFamily, depth: usize) -> Result<Self> {
        let t = LogTransform::new(f.clone())?;
        let q = t.contraction_edge();
        Self::build(t.clone(), t, Complex64::new(1.0, 0.0), Some(q), depth)
    }

    fn build(f: LogTransform, g: LogTransform, lambda: Complex64, q: Option<f64>, depth: usize) -> Result<Self> {
        let min_q = 2.0 * lambda.ln().norm() + 1.0;
        let q = q.unwrap_or(min_q.ceil() + 1.0);
        if !(q > min_q) {
            return Err(Error::Invalid(format!("Q = {q} must exceed 2|log λ| + 1 = {min_q}")));
        }
        if depth < 1 {
            return Err(Error::Invalid("conjugacy depth must be at least 1".into()));
        }
        Ok(ConjugacyMap { f, g, lambda, q, depth, tract_shift: -lambda.ln() })
    }

    pub fn is_identity(&self) -> bool {
        self.lambda == Complex64::new(1.0, 0.0)
    }

    pub fn displacement_bound(&self) -> f64 {
        2.0 * self.lambda.ln().norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaResult {
    pub value: Complex64,
    pub error: ErrorBudget,
    /// Number of pullback levels used.
    pub levels: usize,
    /// Largest measured ratio of successive iterate displacements.
    pub rate: f64,
}

pub fn theta_log_detailed(c: &ConjugacyMap, w: Complex64) -> Result<ThetaResult> {
    if c.is_identity() {
        // G = F, so Θ_0 = id is already stationary
        return Ok(ThetaResult { value: w, error: ErrorBudget::default(), levels: 0, rate: 0.0 });
    }
    let mut orbit = vec![w];
    let mut ids: Vec<TractId> = Vec::new();
    loop {
        let j = orbit.len() - 1;
        let cur = orbit[j];
        if !(cur.re >= c.q) {
            return Err(Error::OrbitLeftHalfPlane(j));
        }
        if j == c.depth || cur.norm() > TOP_MODULUS || cur.re + c.g.shift.re > 700.0 {
            break;
        }
        let (v, t) = match eval_f(&c.g, cur) {
            Ok(x) => x,
            Err(_) => return Err(Error::OrbitLeftHalfPlane(j + 1)),
        };
        if !v.is_finite() {
            break;
        }
        ids.push(t);
        orbit.push(v);
    }
    let top = orbit.len() - 1;
    // Θ_1 = F_T^{-1} ∘ G is translation by log λ on a G-tract, so each
    // level starts from Θ_1 rather than the identity where possible.
    let start = |o: Complex64| -> (Complex64, f64) {
        match tract_of(&c.g, o).id() {
            Some(_) => {
                let b = o - c.tract_shift;
                (b, 1.0 / derivative_f(&c.f, b).norm())
            }
            None => (o, 1.0),
        }
    };
    let mut iterates = vec![w];
    let mut contraction = 1.0;
    for m in 0..=top {
        let (mut th, factor) = start(orbit[m]);
        for i in (0..m).rev() {
            th = inverse_branch(&c.f, ids[i], th)?;
            if m == top {
                contraction /= derivative_f(&c.f, th).norm();
            }
        }
        if m == top {
            contraction *= factor;
        }
        iterates.push(th);
    }
    let mut rate: f64 = 0.0;
    for m in 2..iterates.len() {
        let prev = (iterates[m - 1] - iterates[m - 2]).norm();
        if prev > 0.0 {
            rate = rate.max((iterates[m] - iterates[m - 1]).norm() / prev);
        }
    }
    Ok(ThetaResult {
        value: iterates[top + 1],
        error: ErrorBudget::new(c.displacement_bound() * contraction, 16 * (top as u64 + 1)),
        levels: top + 1,
        rate,
    })
}

pub fn theta_log(c: &ConjugacyMap, w: Complex64) -> Result<(Complex64, ErrorBudget)> {
    let r = theta_log_detailed(c, w)?;
    Ok((r.value, r.error))
}

/// θ = exp∘Θ∘log with the principal lift.
pub fn theta_plane(c: &ConjugacyMap, z: Complex64) -> Result<Complex64> {
    Ok(theta_log(c, z.ln())?.0.exp())
}

/// Solve Θ(w) = p for w near p - log λ.
pub fn theta_inverse_log(c: &ConjugacyMap, p: Complex64) -> Result<Complex64> {
    if c.is_identity() {
        return Ok(p);
    }
    let mut x = p + c.tract_shift;
    for _ in 0..60 {
        let d = theta_log(c, x)?.0 - p;
        x -= d;
        if d.norm() <= 1e-13 * (1.0 + p.norm()) {
            return Ok(x);
        }
    }
    Err(Error::Domain(format!("no Θ-preimage found for {p}")))
}

/// G-tracts and F-tracts share indices (T_G = T_F - log λ), so the
/// correspondence is the identity on entries.
pub fn address_correspondence(_c: &ConjugacyMap, s_g: &ExternalAddress) -> ExternalAddress {
    s_g.clone()
}

/// Whether address_order on the G side agrees with the order of the images on the F side.
pub fn order_preserved(c: &ConjugacyMap, s1: &ExternalAddress, s2: &ExternalAddress) -> Result<bool> {
    let og: Ordering = address_order(&c.g, s1, s2)?;
    let of = address_order(&c.f, &address_correspondence(c, s1), &address_correspondence(c, s2))?;
    Ok(og == of)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub samples: usize,
    pub excluded: usize,
    pub max_residual: f64,
    pub max_displacement: f64,
    pub displacement_bound: f64,
    pub annulus_violations: usize,
    pub displacement_violations: usize,
    pub equivariance_violations: usize,
    pub escape_failures: usize,
    pub surjectivity_failures: usize,
    pub max_rate: f64,
    pub max_error: f64,
}

impl ConjugacyReport {
    pub fn is_valid(&self) -> bool {
        self.max_displacement <= self.displacement_bound
            && self.annulus_violations == 0
            && self.displacement_violations == 0
            && self.equivariance_violations == 0
            && self.escape_failures == 0
            && self.surjectivity_failures == 0
    }
}

fn random_address(rng: &mut ChaCha8Rng, t: &LogTransform, span: i64) -> ExternalAddress {
    let pre = (0..rng.gen_range(0..3)).map(|_| t.tract(rng.gen_range(-span..=span))).collect();
    let per = (0..rng.gen_range(1..3)).map(|_| t.tract(rng.gen_range(-span..=span))).collect();
    ExternalAddress::new(pre, per).expect("nonempty period")
}

pub fn verify_conjugacy(c: &ConjugacyMap, n_samples: usize) -> ConjugacyReport {
    verify_conjugacy_seeded(c, n_samples, 0x5eed)
}

/// Checks displacement, annulus, equivariance, the functional equation,
/// escape transport and Θ-surjectivity onto sampled F-side points.
pub fn verify_conjugacy_seeded(c: &ConjugacyMap, n_samples: usize, seed: u64) -> ConjugacyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = c.displacement_bound();
    let log_lam = c.lambda.norm().ln();
    let mut rep = ConjugacyReport { displacement_bound: bound, ..Default::default() };
    let escape_r = c.f.family.l * std::f64::consts::E;
    for _ in 0..n_samples {
        let w = if c.g.margin >= 0.0 {
            let s = random_address(&mut rng, &c.g, 4);
            let t = (c.q - c.g.contraction_edge()).max(0.0) + rng.gen_range(1.0..40.0);
            match ray_point(&c.g, &s, t, 1e-10, 64) {
                Ok(p) => p.position,
                Err(_) => {
                    rep.excluded += 1;
                    continue;
                }
            }
        } else {
            Complex64::new(c.q + rng.gen_range(1.0..40.0), rng.gen_range(-1.0..1.0) - c.g.shift.im)
        };
        let th = match theta_log_detailed(c, w) {
            Ok(r) => r,
            Err(_) => {
                rep.excluded += 1;
                continue;
            }
        };
        let err = th.error.total(th.value.norm());
        rep.samples += 1;
        rep.max_error = rep.max_error.max(err);
        rep.max_rate = rep.max_rate.max(th.rate);

        let disp = (th.value - w).norm();
        rep.max_displacement = rep.max_displacement.max(disp);
        if disp > bound + err {
            rep.displacement_violations += 1;
        }
        // |θ(z)| / |z| = exp(Re Θ(w) - Re w)
        let dlog = th.value.re - w.re;
        if dlog < 2.0 * log_lam - err || dlog > -2.0 * log_lam + err {
            rep.annulus_violations += 1;
        }
        let shifted = w + Complex64::new(0.0, 2.0 * std::f64::consts::PI);
        match theta_log_detailed(c, shifted) {
            Ok(t2) => {
                let d = (t2.value - th.value - Complex64::new(0.0, 2.0 * std::f64::consts::PI)).norm();
                if d > 10.0 * (err + t2.error.total(t2.value.norm())) + 1e-12 * (1.0 + th.value.norm()) {
                    rep.equivariance_violations += 1;
                }
            }
            Err(_) => rep.equivariance_violations += 1,
        }
        // θ(g(z)) against f(θ(z)), compared through their logarithms
        if let (Ok((gw, _)), Ok((f_th, _))) = (eval_f(&c.g, w), eval_f(&c.f, th.value)) {
            match theta_log(c, gw) {
                Ok((th_g, _)) => {
                    let resid = ((th_g - f_th).exp() - 1.0).norm();
                    rep.max_residual = rep.max_residual.max(resid);
                }
                Err(_) => rep.max_residual = f64::INFINITY,
            }
            let z = th.value.exp();
            if !matches!(escape_test(&c.f.family, z, escape_r, 16), EscapeVerdict::Escaping(_)) {
                rep.escape_failures += 1;
            }
            if !c.is_identity() {
                if let Some(t0) = tract_of(&c.g, w).id() {
                    let p_f = inverse_branch(&c.f, t0, gw + Complex64::new(1.0, 1.0));
                    let ok = p_f.and_then(|p| {
                        let x = theta_inverse_log(c, p)?;
                        let back = theta_log(c, x)?.0;
                        Ok((back - p).norm() <= 1e-9 * (1.0 + p.norm()) && tract_of(&c.g, x).id() == Some(t0))
                    });
                    if !matches!(ok, Ok(true)) {
                        rep.surjectivity_failures += 1;
                    }
                }
            }
        } else {
            rep.max_residual = f64::INFINITY;
        }
    }
    rep
}

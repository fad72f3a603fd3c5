//! The projection π_R on hairs: π_n by monotone scan and bisection in the
//! hair parameter, π as the detected limit of π_n, and the commutation
//! defect of π with the dynamics.

use std::cmp::Ordering;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brushmodel::{exact, AffineBrush};
use crate::error::{Error, Result};
use crate::families::{verify_disjoint_type, FunctionFamily};
use crate::logspace::{ExternalAddress, LogTransform};
use crate::rays::{image_parameter, ray_point, HairTail, RayPoint};
use crate::region::{region_closure_contains, region_contains, ErrorBudget, Region};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub r: f64,
    pub region: Region,
    pub n_max: usize,
    pub t_tol: f64,
    pub orbit_horizon: usize,
}

impl ProjectionConfig {
    /// S_R = Disc(0, R).
    pub fn disc(r: f64, n_max: usize, t_tol: f64) -> Result<Self> {
        let cfg = ProjectionConfig {
            r,
            region: Region::disc(Complex64::new(0.0, 0.0), r)?,
            n_max,
            t_tol,
            orbit_horizon: n_max.max(16),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.n_max < 1 || !(self.t_tol > 0.0) {
            return Err(Error::Invalid("projection needs n_max ≥ 1 and t_tol > 0".into()));
        }
        Ok(())
    }

    pub fn validate(&self, l: f64) -> Result<()> {
        self.check()?;
        if !(self.r > l) {
            return Err(Error::Invalid(format!("R = {} must exceed L = {l}", self.r)));
        }
        Ok(())
    }
}

/// A hair with its dynamics, seen through the hair parameter t.
pub trait HairDynamics: Sync {
    /// First j ≤ n at which the orbit of the point at t lies in S_R
    /// (its closure when `closed`).
    fn first_hit(&self, t: f64, n: usize, closed: bool) -> Result<Option<usize>>;
    /// Ascending scan grid over the traced parameter range.
    fn grid(&self) -> &[f64];
}

/// min{t′ ≥ t : the orbit avoids S_R for j ≤ n}, to within `t_tol` from above.
pub fn pi_n_param<H: HairDynamics + ?Sized>(h: &H, t: f64, n: usize, t_tol: f64) -> Result<f64> {
    if h.first_hit(t, n, false)?.is_none() {
        return Ok(t);
    }
    let mut lo = t;
    let mut hi = None;
    for &g in h.grid().iter().filter(|&&g| g > t) {
        if h.first_hit(g, n, false)?.is_none() {
            hi = Some(g);
            break;
        }
        lo = g;
    }
    let mut hi = hi.ok_or(Error::TailTooShort)?;
    while hi - lo > t_tol {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if h.first_hit(mid, n, false)?.is_none() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiTrace {
    pub t_in: f64,
    pub t_out: f64,
    pub n_used: usize,
    pub zn_trace: Vec<(usize, f64)>,
    pub converged: bool,
    /// Largest ratio of successive nonzero gaps.
    pub rate: Option<f64>,
}

/// π_0, π_1, … until three consecutive values agree within `t_tol`. Each
/// π_{n+1} search starts at π_n, which is valid since the admissible sets shrink.
pub fn pi_param<H: HairDynamics + ?Sized>(h: &H, t: f64, cfg: &ProjectionConfig) -> Result<PiTrace> {
    let mut trace: Vec<(usize, f64)> = Vec::new();
    let mut cur = t;
    let mut stable = 0;
    for n in 0..=cfg.n_max {
        let tn = pi_n_param(h, cur, n, cfg.t_tol)?;
        if let Some(&(_, prev)) = trace.last() {
            if (tn - prev).abs() <= cfg.t_tol {
                stable += 1;
            } else {
                stable = 0;
            }
        }
        trace.push((n, tn));
        cur = tn;
        if stable >= 3 {
            break;
        }
    }
    let gaps: Vec<f64> = trace.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let rate = gaps
        .windows(2)
        .filter(|g| g[0] > cfg.t_tol && g[1] > cfg.t_tol)
        .map(|g| g[1] / g[0])
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    Ok(PiTrace { t_in: t, t_out: cur, n_used: trace.len() - 1, converged: stable >= 3, zn_trace: trace, rate })
}

/// Hair i of an affine brush with S_R = (-Q, Q)², iterated in floats.
pub struct BrushHair<'a> {
    brush: &'a AffineBrush,
    orbit: Vec<usize>,
    within: Vec<bool>,
    q: BigRational,
    q_f: f64,
    grid: Vec<f64>,
}

impl<'a> BrushHair<'a> {
    pub fn new(brush: &'a AffineBrush, i: usize, n_max: usize) -> Self {
        let within = brush.hairs.iter().map(|h| h.height_within(&brush.q)).collect();
        let q_f = brush.q.to_f64().expect("finite");
        let t0 = brush.hairs[i].t;
        let grid = (0..=8).map(|k| t0 + (q_f + 1.0) * k as f64 / 8.0).collect();
        BrushHair {
            brush,
            orbit: brush.orbit(i, n_max + 1),
            within,
            q: BigRational::new((*brush.q.numer()).into(), (*brush.q.denom()).into()),
            q_f,
            grid,
        }
    }

    fn below_q(&self, t: f64, closed: bool) -> bool {
        let c = if (t - self.q_f).abs() > 1e-9 * self.q_f {
            t.partial_cmp(&self.q_f).expect("finite")
        } else {
            exact(t).cmp(&self.q)
        };
        c == Ordering::Less || (closed && c == Ordering::Equal)
    }
}

impl HairDynamics for BrushHair<'_> {
    fn first_hit(&self, t: f64, n: usize, closed: bool) -> Result<Option<usize>> {
        let hairs = &self.brush.hairs;
        let mut tj = t;
        for j in 0..=n.min(self.orbit.len() - 1) {
            let eta = self.orbit[j];
            if self.within[eta] && self.below_q(tj, closed) {
                return Ok(Some(j));
            }
            if j + 1 < self.orbit.len() {
                tj = self.brush.lambda * (tj - hairs[eta].t) + hairs[self.orbit[j + 1]].t;
            }
        }
        Ok(None)
    }

    fn grid(&self) -> &[f64] {
        &self.grid
    }
}

/// A traced hair J_s of a disjoint-type transform. Orbits follow the hair
/// parameter, G(γ_s(t)) = γ_{shift s}(τ_s(t)), and membership in S_R is read
/// from the positions of those ray points.
pub struct TracedHair<'a> {
    f: &'a LogTransform,
    s: ExternalAddress,
    region: Region,
    tol: f64,
    grid: Vec<f64>,
}

impl<'a> TracedHair<'a> {
    pub fn new(f: &'a LogTransform, tail: &HairTail, region: Region, tol: f64) -> Self {
        let grid = tail.samples.iter().map(|(t, _)| *t).collect();
        TracedHair { f, s: tail.address.clone(), region, tol, grid }
    }

    fn inside(&self, w: Complex64, closed: bool) -> bool {
        if let Region::Disc { center, radius } = self.region {
            if center == Complex64::new(0.0, 0.0) {
                let lr = radius.ln();
                return w.re < lr || (closed && w.re == lr);
            }
        }
        let z = w.exp();
        if !z.is_finite() {
            return false;
        }
        if closed {
            region_closure_contains(&self.region, z)
        } else {
            region_contains(&self.region, z)
        }
    }

    /// Orbit positions γ_{σ^j s}(t_j), j ≤ n; stops early once t_j leaves the float range.
    pub fn orbit(&self, t: f64, n: usize) -> Result<Vec<Complex64>> {
        let mut s = self.s.clone();
        let mut tj = t;
        let mut out = Vec::with_capacity(n + 1);
        for j in 0..=n {
            out.push(ray_point(self.f, &s, tj, self.tol, 96)?.position);
            if j < n {
                tj = image_parameter(self.f, &s, tj);
                if !tj.is_finite() || tj > 1e300 {
                    break;
                }
                s = s.shift();
            }
        }
        Ok(out)
    }

    pub fn point(&self, t: f64) -> Result<RayPoint> {
        ray_point(self.f, &self.s, t, self.tol, 96)
    }
}

impl HairDynamics for TracedHair<'_> {
    fn first_hit(&self, t: f64, n: usize, closed: bool) -> Result<Option<usize>> {
        let mut s = self.s.clone();
        let mut tj = t;
        for j in 0..=n {
            let w = ray_point(self.f, &s, tj, self.tol, 96)?.position;
            if self.inside(w, closed) {
                return Ok(Some(j));
            }
            tj = image_parameter(self.f, &s, tj);
            if !tj.is_finite() || tj > 1e300 {
                return Ok(None);
            }
            s = s.shift();
        }
        Ok(None)
    }

    fn grid(&self) -> &[f64] {
        &self.grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub input: RayPoint,
    pub output: RayPoint,
    pub n_used: usize,
    pub zn_trace: Vec<(usize, f64)>,
    pub converged: bool,
    pub rate: Option<f64>,
}

fn disjoint_transform(g: &FunctionFamily) -> Result<LogTransform> {
    if !verify_disjoint_type(g, 256)?.is_valid() {
        return Err(Error::Invalid("projection needs a disjoint-type map".into()));
    }
    LogTransform::new(g.clone())
}

fn on_tail(p: &RayPoint, z: &RayPoint) -> bool {
    (p.position - z.position).norm() <= p.total_error() + z.total_error() + 1e-12 * (1.0 + z.position.norm())
}

/// Hair parameter of z on the tail: a sample within combined error, or else
/// the closest point of the hair between the neighbours of the nearest sample.
fn parameter_of(h: &TracedHair, tail: &HairTail, z: &RayPoint) -> Result<f64> {
    let dist = |p: &RayPoint| (p.position - z.position).norm();
    let i = (0..tail.samples.len())
        .min_by(|&a, &b| dist(&tail.samples[a].1).partial_cmp(&dist(&tail.samples[b].1)).expect("finite"))
        .ok_or(Error::TailTooShort)?;
    let (t, p) = &tail.samples[i];
    if on_tail(p, z) {
        return Ok(*t);
    }
    let mut lo = tail.samples[i.saturating_sub(1)].0;
    let mut hi = tail.samples[(i + 1).min(tail.samples.len() - 1)].0;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let at = |t: f64| h.point(t).map(|p| dist(&p));
    for _ in 0..80 {
        let (m1, m2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        if at(m1)? <= at(m2)? {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = 0.5 * (lo + hi);
    if !on_tail(&h.point(t)?, z) {
        return Err(Error::Invalid(format!("point {} is not on the tail", z.position)));
    }
    Ok(t)
}

fn with_budget(mut p: RayPoint, t_tol: f64) -> RayPoint {
    // t-uncertainty moves the point by about t_tol along the hair
    p.error = ErrorBudget::new(p.error.analytic_bound + t_tol, p.error.float_epsilon_count);
    p
}

pub fn project_pi_n(g: &FunctionFamily, tail: &HairTail, z: &RayPoint, n: usize, cfg: &ProjectionConfig) -> Result<RayPoint> {
    cfg.validate(g.l)?;
    let f = disjoint_transform(g)?;
    let tol = z.total_error().max(1e-12);
    let h = TracedHair::new(&f, tail, cfg.region.clone(), tol);
    let t = parameter_of(&h, tail, z)?;
    let t2 = pi_n_param(&h, t, n, cfg.t_tol)?;
    if t2 == t {
        return Ok(z.clone());
    }
    Ok(with_budget(h.point(t2)?, cfg.t_tol))
}

fn project_with(f: &LogTransform, tail: &HairTail, z: &RayPoint, cfg: &ProjectionConfig) -> Result<ProjectionResult> {
    let tol = z.total_error().max(1e-12);
    let h = TracedHair::new(f, tail, cfg.region.clone(), tol);
    let t = parameter_of(&h, tail, z)?;
    let tr = pi_param(&h, t, cfg)?;
    if !tr.converged {
        return Err(Error::NotConverged(cfg.n_max));
    }
    let output = if tr.t_out == t { z.clone() } else { with_budget(h.point(tr.t_out)?, cfg.t_tol) };
    Ok(ProjectionResult {
        input: z.clone(),
        output,
        n_used: tr.n_used,
        zn_trace: tr.zn_trace,
        converged: tr.converged,
        rate: tr.rate,
    })
}

pub fn project_pi(g: &FunctionFamily, tail: &HairTail, z: &RayPoint, cfg: &ProjectionConfig) -> Result<ProjectionResult> {
    cfg.validate(g.l)?;
    let f = disjoint_transform(g)?;
    project_with(&f, tail, z, cfg)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommutationReport {
    pub samples: usize,
    /// Samples whose image parameter fell outside the image tail or whose π did not converge.
    pub skipped: usize,
    pub defects: usize,
    /// Defect points whose orbit never meets the closed S_R within the horizon.
    pub unexplained: usize,
    /// max log|z| over defect points.
    pub max_defect_log_modulus: Option<f64>,
}

impl CommutationReport {
    fn merge(mut self, o: CommutationReport) -> CommutationReport {
        self.samples += o.samples;
        self.skipped += o.skipped;
        self.defects += o.defects;
        self.unexplained += o.unexplained;
        self.max_defect_log_modulus = match (self.max_defect_log_modulus, o.max_defect_log_modulus) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Compares the image parameter of π(z) with π of the image parameter of z,
/// over `n_samples` parameters spread across each tail whose shift is also given.
pub fn commutation_defect(
    g: &FunctionFamily,
    tails: &[HairTail],
    cfg: &ProjectionConfig,
    n_samples: usize,
) -> Result<CommutationReport> {
    cfg.validate(g.l)?;
    let f = disjoint_transform(g)?;
    let pairs: Vec<(&HairTail, &HairTail)> = tails
        .iter()
        .filter_map(|t| {
            let sh = t.address.shift();
            tails.iter().find(|u| u.address == sh).map(|u| (t, u))
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::Invalid("no tail is accompanied by the tail of its shifted address".into()));
    }
    let per = (n_samples / pairs.len()).max(1);
    let tol = 1e-10;
    let reports: Vec<Result<CommutationReport>> = pairs
        .par_iter()
        .map(|(tail, img)| {
            let h = TracedHair::new(&f, tail, cfg.region.clone(), tol);
            let hi = TracedHair::new(&f, img, cfg.region.clone(), tol);
            let (a, b) = (tail.samples[0].0, tail.samples[tail.samples.len() - 1].0);
            let mut rep = CommutationReport::default();
            for k in 0..per {
                let t = a + (b - a) * (k as f64 + 0.5) / per as f64;
                rep.samples += 1;
                let (Ok(p1), Ok(p2)) = (pi_param(&h, t, cfg), pi_param(&hi, image_parameter(&f, &tail.address, t), cfg))
                else {
                    rep.skipped += 1;
                    continue;
                };
                if !p1.converged || !p2.converged {
                    rep.skipped += 1;
                    continue;
                }
                let lhs = image_parameter(&f, &tail.address, p1.t_out);
                let slope = (image_parameter(&f, &tail.address, p1.t_out + cfg.t_tol) - lhs).abs();
                if (lhs - p2.t_out).abs() > 2.0 * (slope + cfg.t_tol) {
                    rep.defects += 1;
                    let w = h.point(t)?.position;
                    rep.max_defect_log_modulus = Some(rep.max_defect_log_modulus.map_or(w.re, |m: f64| m.max(w.re)));
                    let horizon = p1.n_used.max(cfg.orbit_horizon);
                    if h.first_hit(t, horizon, true)?.is_none() {
                        rep.unexplained += 1;
                    }
                }
            }
            Ok(rep)
        })
        .collect();
    let mut total = CommutationReport::default();
    for r in reports {
        total = total.merge(r?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brushmodel::{random_brush, zn_oracle_all};
    use crate::families::{disjoint_type_rescale, RescaleMode};
    use crate::rays::trace_tail;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g_family() -> FunctionFamily {
        let f = FunctionFamily::exponential(Complex64::new(1.0, 0.0)).unwrap();
        disjoint_type_rescale(&f, RescaleMode::Domain).unwrap().1
    }

    fn brush_cfg() -> ProjectionConfig {
        ProjectionConfig { r: 4.0, region: Region::Disc { center: Complex64::new(0.0, 0.0), radius: 4.0 }, n_max: 30, t_tol: 1e-14, orbit_horizon: 30 }
    }

    #[test]
    fn worked_brush_instance() {
        let b = AffineBrush::worked_instance();
        let h = BrushHair::new(&b, 0, 30);
        assert_eq!(pi_n_param(&h, 10.0, 0, 1e-14).unwrap(), 10.0);
        assert!((pi_n_param(&h, 10.0, 1, 1e-14).unwrap() - 11.5).abs() < 1e-12);
        let tr = pi_param(&h, 10.2, &brush_cfg()).unwrap();
        assert!(tr.converged);
        assert!((tr.t_out - 11.5).abs() < 1e-12);
        assert_eq!(pi_param(&h, 12.0, &brush_cfg()).unwrap().t_out, 12.0);
    }

    #[test]
    fn brush_oracle_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let b = random_brush(&mut rng, 8);
            for i in 0..b.hairs.len() {
                let h = BrushHair::new(&b, i, 30);
                let oracle = zn_oracle_all(&b, i, 30);
                for (n, z) in oracle.iter().enumerate() {
                    let got = pi_n_param(&h, b.hairs[i].t, n, 1e-14).unwrap();
                    assert!((got - z.to_f64().unwrap()).abs() <= 1e-12, "n={n}");
                }
            }
        }
    }

    #[test]
    fn traced_exit_point_and_idempotence() {
        let g = g_family();
        let f = LogTransform::new(g.clone()).unwrap();
        let zero = ExternalAddress::periodic(vec![f.tract(0)]).unwrap();
        let tail = trace_tail(&f, &zero, 0.0, 12.0, 1e-10).unwrap();
        let log_r: f64 = 31.0;
        let cfg = ProjectionConfig::disc(log_r.exp(), 20, 1e-10).unwrap();
        let (_, z) = tail.samples.iter().find(|(t, _)| *t >= 1.0).unwrap().clone();
        assert!(z.position.re < log_r);
        // the 0̄ hair is the real ray, so the exit point has Re γ = ln R
        let p0 = project_pi_n(&g, &tail, &z, 0, &cfg).unwrap();
        assert!((p0.position.re - log_r).abs() < 1e-8, "{}", p0.position);
        let res = project_pi(&g, &tail, &z, &cfg).unwrap();
        assert!(res.converged);
        assert!(res.zn_trace.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!((res.output.position - p0.position).norm() < 1e-8);
        let again = project_pi(&g, &tail, &res.output, &cfg).unwrap();
        assert!((again.output.position - res.output.position).norm() < 1e-8);
        let (_, far) = tail.samples.last().unwrap().clone();
        assert_eq!(project_pi_n(&g, &tail, &far, 5, &cfg).unwrap(), far);
    }

    #[test]
    fn traced_commutation() {
        let g = g_family();
        let f = LogTransform::new(g.clone()).unwrap();
        let s = ExternalAddress::new(vec![f.tract(1)], vec![f.tract(0)]).unwrap();
        let tails = vec![trace_tail(&f, &s, 0.0, 12.0, 1e-10).unwrap(), trace_tail(&f, &s.shift(), 0.0, 12.0, 1e-10).unwrap()];
        let cfg = ProjectionConfig::disc(31f64.exp(), 20, 1e-9).unwrap();
        let rep = commutation_defect(&g, &tails, &cfg, 40).unwrap();
        assert_eq!(rep.unexplained, 0, "{rep:?}");
        assert!(rep.samples > 0);
    }

    #[test]
    fn config_validation() {
        assert!(ProjectionConfig::disc(10.0, 0, 1e-6).is_err());
        let cfg = ProjectionConfig::disc(2.0, 5, 1e-6).unwrap();
        assert!(cfg.validate(3.0).is_err());
    }
}

//! Hairs J_s of a logarithmic transform in the contraction regime, traced
//! by pulling back seeds along the address, plus the plane-side escape test
//! and the pipeline that attaches a hair to an escaping orbit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugacy::{theta_inverse_log, theta_log, ConjugacyMap};
use crate::error::{Error, Result};
use crate::families::{derivative, evaluate, Eval, FunctionFamily, Kind};
use crate::logspace::{
    anchor, eval_f, inverse_branch, pullback, tract_of, validate_address, ExternalAddress, LogTransform, TractHit,
    TractId,
};
use crate::region::ErrorBudget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayPoint {
    pub address: ExternalAddress,
    pub depth: usize,
    pub position: Complex64,
    pub plane_position: Complex64,
    pub error: ErrorBudget,
}

impl RayPoint {
    pub fn total_error(&self) -> f64 {
        self.error.total(self.position.norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HairTail {
    pub address: ExternalAddress,
    pub samples: Vec<(f64, RayPoint)>,
    pub endpoint_estimate: Option<RayPoint>,
}

impl HairTail {
    /// Rows (t, re_log, im_log, re_plane, im_plane, err).
    pub fn rows(&self) -> Vec<[f64; 6]> {
        self.samples
            .iter()
            .map(|(t, p)| {
                [*t, p.position.re, p.position.im, p.plane_position.re, p.plane_position.im, p.total_error()]
            })
            .collect()
    }
}

fn require_contraction(f: &LogTransform) -> Result<()> {
    if f.margin < 0.0 {
        Err(Error::ContractRegime(f.margin))
    } else {
        Ok(())
    }
}

fn ray(s: &ExternalAddress, depth: usize, position: Complex64, error: ErrorBudget) -> RayPoint {
    RayPoint { address: s.clone(), depth, position, plane_position: position.exp(), error }
}

/// Depth-n pullback of a fixed seed. The bound uses contraction by ½ per
/// level: D = 2·max_T |seed - F_T^{-1}(seed)| over the tracts met from level n on.
pub fn pullback_point(f: &LogTransform, s: &ExternalAddress, n: usize, seed: Complex64) -> Result<RayPoint> {
    require_contraction(f)?;
    if n < 1 {
        return Err(Error::Invalid("pullback depth must be at least 1".into()));
    }
    if !(seed.re > f.log_l) {
        return Err(Error::Domain(format!("seed {seed} is not in H_(log L)")));
    }
    validate_address(f, s)?;
    let position = pullback(f, s, n, seed)?;
    let mut d: f64 = 0.0;
    let tail_ids = s.prefix().iter().skip(n).chain(s.period().iter());
    for t in tail_ids {
        d = d.max((seed - inverse_branch(f, *t, seed)?).norm());
    }
    let bound = 2.0 * d / 2f64.powi(n as i32);
    Ok(ray(s, n, position, ErrorBudget::new(bound, 8 * n as u64)))
}

/// Seeds ζ_0, ζ_1, … for the hair point at parameter t: ζ_0 is the anchor of
/// s_0, and ζ_{j+1} keeps Re F(ζ_j) (floored at the contraction edge) with Im
/// moved to the band centre of s_{j+1}. The flag reports that the chain
/// stopped because the next seed left the float range.
pub fn model_chain(f: &LogTransform, s: &ExternalAddress, t: f64, n_max: usize) -> (Vec<Complex64>, bool) {
    let edge = f.contraction_edge();
    let mut z = vec![anchor(f, s.get(0), t)];
    while z.len() <= n_max {
        let cur = z[z.len() - 1];
        if cur.re + f.shift.re > 700.0 {
            return (z, true);
        }
        let re = match eval_f(f, cur) {
            Ok((v, _)) if v.is_finite() => v.re.max(edge),
            Ok(_) => return (z, true),
            Err(_) => edge,
        };
        if re > 1e300 {
            return (z, true);
        }
        z.push(Complex64::new(re, f.band_center(s.get(z.len()))));
    }
    (z, false)
}

/// Separation of ζ_n from the level-n point of the next chain level, when
/// ζ_{n+1} exists; otherwise the Koebe bound for a seed beyond float range.
fn level_gap(f: &LogTransform, s: &ExternalAddress, chain: &[Complex64], n: usize) -> Result<f64> {
    if n + 1 < chain.len() {
        return Ok((chain[n] - inverse_branch(f, s.get(n), chain[n + 1])?).norm());
    }
    let band = 2.0 * PI * (f.k_max as f64 + 2.0) + f.c.im.abs() + f.shift.im.abs();
    let x = chain[n].re + f.shift.re;
    Ok(if x > 700.0 { 0.0 } else { 4.0 * PI * band / (x.exp() - f.log_l).max(1e-300) })
}

/// γ_s(t): the pullback of the model chain at the first depth whose
/// certified bound is below `tol`.
pub fn ray_point(f: &LogTransform, s: &ExternalAddress, t: f64, tol: f64, n_max: usize) -> Result<RayPoint> {
    require_contraction(f)?;
    validate_address(f, s)?;
    if !(t >= 0.0) {
        return Err(Error::Invalid(format!("hair parameter t = {t} must be nonnegative")));
    }
    let (chain, capped) = model_chain(f, s, t, n_max);
    for n in 0..chain.len() {
        if n + 1 == chain.len() && !capped {
            break;
        }
        let mut d = level_gap(f, s, &chain, n)?;
        if n + 2 < chain.len() || (n + 2 == chain.len() && capped) {
            d = d.max(level_gap(f, s, &chain, n + 1)?);
        }
        let bound = 2.0 * d / 2f64.powi(n as i32);
        if bound < tol {
            let position = pullback(f, s, n, chain[n])?;
            return Ok(ray(s, n, position, ErrorBudget::new(bound, 8 * n as u64)));
        }
    }
    Err(Error::UnresolvedTail(t))
}

/// Hair parameter of F(γ_s(t)) on J_{shift(s)}.
pub fn image_parameter(f: &LogTransform, s: &ExternalAddress, t: f64) -> f64 {
    let (chain, _) = model_chain(f, s, t, 1);
    match chain.get(1) {
        Some(z) => z.re - f.contraction_edge(),
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Maximum pullback depth per point.
    pub n_max: usize,
    pub initial_samples: usize,
    /// Bound on |p_{i+1} - p_i| / |p_i| for consecutive plane positions.
    pub spacing: f64,
    pub max_samples: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { n_max: 64, initial_samples: 17, spacing: 0.05, max_samples: 4096 }
    }
}

pub fn trace_tail(f: &LogTransform, s: &ExternalAddress, t_min: f64, t_max: f64, tol: f64) -> Result<HairTail> {
    trace_tail_with(f, s, t_min, t_max, tol, &TraceOptions::default())
}

fn plane_gap(a: &RayPoint, b: &RayPoint) -> f64 {
    ((b.position - a.position).exp() - 1.0).norm()
}

pub fn trace_tail_with(
    f: &LogTransform,
    s: &ExternalAddress,
    t_min: f64,
    t_max: f64,
    tol: f64,
    opts: &TraceOptions,
) -> Result<HairTail> {
    require_contraction(f)?;
    validate_address(f, s)?;
    if !(t_min >= 0.0 && t_min <= t_max) || !(tol > 0.0) {
        return Err(Error::Invalid(format!("bad tail window [{t_min}, {t_max}] or tol {tol}")));
    }
    let n0 = if t_min == t_max { 1 } else { opts.initial_samples.max(2) };
    let ts: Vec<f64> = (0..n0)
        .map(|i| if n0 == 1 { t_min } else { t_min + (t_max - t_min) * i as f64 / (n0 - 1) as f64 })
        .collect();
    let eval = |ts: &[f64]| -> Result<Vec<(f64, RayPoint)>> {
        ts.par_iter().map(|&t| ray_point(f, s, t, tol, opts.n_max).map(|p| (t, p))).collect()
    };
    let mut samples = eval(&ts)?;
    loop {
        let gaps: Vec<usize> = (0..samples.len().saturating_sub(1))
            .filter(|&i| plane_gap(&samples[i].1, &samples[i + 1].1) > opts.spacing)
            .collect();
        if gaps.is_empty() {
            break;
        }
        if samples.len() + gaps.len() > opts.max_samples {
            return Err(Error::UnresolvedTail(samples[gaps[0]].0));
        }
        let mids: Vec<f64> = gaps.iter().map(|&i| 0.5 * (samples[i].0 + samples[i + 1].0)).collect();
        if let Some(i) = gaps.iter().find(|&&i| samples[i + 1].0 - samples[i].0 < 1e-12) {
            return Err(Error::UnresolvedTail(samples[*i].0));
        }
        let new = eval(&mids)?;
        let mut merged = Vec::with_capacity(samples.len() + new.len());
        let mut it = new.into_iter().peekable();
        for (i, smp) in samples.into_iter().enumerate() {
            merged.push(smp);
            if gaps.binary_search(&i).is_ok() {
                merged.push(it.next().expect("one midpoint per gap"));
            }
        }
        samples = merged;
    }
    // parameters below the hair's start all land on the endpoint; keep one
    samples.dedup_by(|b, a| (b.1.position - a.1.position).norm() <= a.1.total_error() + b.1.total_error());
    Ok(HairTail { address: s.clone(), samples, endpoint_estimate: None })
}

/// Landing point of J_s: γ_s(t) for t = t₀/2^k, accelerated by Aitken's Δ²
/// and accepted after three consecutive agreements within `tol`.
pub fn endpoint(f: &LogTransform, s: &ExternalAddress, tol: f64) -> Result<RayPoint> {
    require_contraction(f)?;
    validate_address(f, s)?;
    let mut raw: Vec<Complex64> = Vec::new();
    let mut acc: Vec<Complex64> = Vec::new();
    let mut agree = 0;
    for k in 0..60 {
        let t = 8.0 / 2f64.powi(k);
        let p = ray_point(f, s, t, tol / 4.0, 96)?;
        raw.push(p.position);
        let n = raw.len();
        let a = if n >= 3 {
            let d1 = raw[n - 1] - raw[n - 2];
            let d2 = raw[n - 1] - 2.0 * raw[n - 2] + raw[n - 3];
            if d2.norm() > 1e-300 && d1.norm() > 0.0 {
                raw[n - 1] - d1 * d1 / d2
            } else {
                raw[n - 1]
            }
        } else {
            raw[n - 1]
        };
        if let Some(prev) = acc.last() {
            if (a - prev).norm() < tol {
                agree += 1;
            } else {
                agree = 0;
            }
        }
        acc.push(a);
        if agree >= 3 {
            return Ok(ray(s, p.depth, a, ErrorBudget::new(tol, p.error.float_epsilon_count)));
        }
    }
    Err(Error::NoEndpointDetected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EscapeVerdict {
    /// Index from which the orbit stays outside the disc of radius R.
    Escaping(usize),
    /// Index at which the orbit fell back below R.
    ReEntered(usize),
    Undecided,
}

fn real_preserving(f: &FunctionFamily) -> bool {
    let pos = |l: &Complex64| l.im == 0.0 && l.re > 0.0;
    match &f.kind {
        Kind::Exponential { lambda } => pos(lambda),
        Kind::ExpPair { a, b } => pos(a) && b.im == 0.0,
        Kind::DomainRescaled { base, lambda } | Kind::RangeRescaled { base, lambda } => {
            pos(lambda) && real_preserving(base)
        }
    }
}

/// On the real axis, once f(x) ≥ 2x and f′(x) ≥ 2 both persist, so the orbit
/// at least doubles from then on.
fn monotone_regime(f: &FunctionFamily, z: Complex64) -> bool {
    if z.im != 0.0 || z.re <= 0.0 || !real_preserving(f) {
        return false;
    }
    let big = |e: Eval, bound: f64| match e {
        Eval::Finite(v) => v.re >= bound,
        Eval::Overflow { exponent } => exponent > 0.0,
    };
    big(evaluate(f, z), 2.0 * z.re) && big(derivative(f, z), 2.0)
}

/// Plane escape classification: overflow and the real monotone regime are
/// definite escape.
pub fn escape_test(f: &FunctionFamily, z: Complex64, r: f64, horizon: usize) -> EscapeVerdict {
    let mut cur = z;
    let mut above: Option<usize> = None;
    for n in 0..=horizon {
        if cur.norm() >= r {
            let since = *above.get_or_insert(n);
            if monotone_regime(f, cur) {
                return EscapeVerdict::Escaping(since);
            }
        } else if above.is_some() {
            return EscapeVerdict::ReEntered(n);
        }
        match evaluate(f, cur) {
            Eval::Finite(v) => cur = v,
            Eval::Overflow { .. } => return EscapeVerdict::Escaping(above.unwrap_or(n + 1)),
        }
    }
    EscapeVerdict::Undecided
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub tol: f64,
    /// Half-width in t of the traced window around the orbit point.
    pub window: f64,
    pub conjugacy_depth: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { tol: 1e-9, window: 1.0, conjugacy_depth: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criniferous {
    pub n: usize,
    /// Tail through log f^n(z), one level above the traced G-hair.
    pub tail: HairTail,
    /// |log f^n(z) - matched tail point| and the certified error it was compared with.
    pub containment_gap: f64,
    pub containment_error: f64,
}

pub fn criniferous_pipeline(f: &FunctionFamily, z: Complex64, r: f64, horizon: usize) -> Result<Criniferous> {
    criniferous_pipeline_with(f, z, r, horizon, &PipelineOptions::default())
}

/// Finds N with f^n(z) outside the disc of radius R for n ≥ N, reads the
/// itinerary of log f^N(z), traces the matching hair of the disjoint-type
/// rescaling near Θ^{-1}, transports it by Θ and pulls it back to level N.
/// Entries past the float horizon are read as the principal tract.
pub fn criniferous_pipeline_with(
    f: &FunctionFamily,
    z: Complex64,
    r: f64,
    horizon: usize,
    opts: &PipelineOptions,
) -> Result<Criniferous> {
    let n = match escape_test(f, z, r, horizon) {
        EscapeVerdict::Escaping(n) => n,
        v => return Err(Error::Domain(format!("orbit of {z} is not escaping ({v:?})"))),
    };
    let map = ConjugacyMap::new(f, None, opts.conjugacy_depth)?;
    let ff = &map.f;
    let mut zn = z;
    for _ in 0..n {
        zn = evaluate(f, zn).finite().ok_or_else(|| Error::Domain("orbit overflowed before N".into()))?;
    }
    // lifted orbit w_N, w_{N+1}, … with its itinerary
    let mut lift = vec![zn.ln()];
    let mut ids = Vec::new();
    loop {
        let j = lift.len() - 1;
        let w = lift[j];
        match tract_of(ff, w) {
            TractHit::In(t) => ids.push(t),
            TractHit::NotInTract { .. } => return Err(Error::ItineraryUnreadable(n + j)),
        }
        if ids.len() > horizon {
            break;
        }
        match eval_f(ff, w) {
            Ok((v, _)) if v.is_finite() && v.norm() < 1e15 => lift.push(v),
            _ => break,
        }
    }
    let s = ExternalAddress::new(ids.clone(), vec![ff.tract(0)])?;
    // first level whose Θ-preimage lies in H_Q
    let need = map.q + 1.0 - map.tract_shift.re;
    let lvl = (0..lift.len())
        .find(|&j| lift[j].re >= need && lift[j..].iter().all(|w| w.re >= need - 1.0))
        .ok_or_else(|| Error::Domain("orbit never reaches the conjugacy half-plane".into()))?;
    let target = theta_inverse_log(&map, lift[lvl])?;
    let mut s_up = s.clone();
    for _ in 0..lvl {
        s_up = s_up.shift();
    }
    let g = &map.g;
    let edge = g.contraction_edge();
    let tol = opts.tol;
    // parameter whose hair point has the real part of the target
    let re_at = |t: f64| ray_point(g, &s_up, t, tol, 96).map(|p| p.position.re);
    let (mut lo, mut hi) = (0.0, (target.re - edge).max(1.0) + 1.0);
    while re_at(hi)? < target.re {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if re_at(mid)? < target.re {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi.max(1.0) {
            break;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let opts_t = TraceOptions::default();
    let g_tail = trace_tail_with(g, &s_up, (t_star - opts.window).max(0.0), t_star + opts.window, tol, &opts_t)?;

    let down = |w: Complex64| -> Result<Complex64> {
        let mut x = w;
        for j in (0..lvl).rev() {
            x = inverse_branch(ff, ids[j], x)?;
        }
        Ok(x)
    };
    let mut samples = Vec::new();
    for (t, p) in &g_tail.samples {
        let Ok((th, e)) = theta_log(&map, p.position) else { continue };
        let pos = down(th)?;
        let err = ErrorBudget::new(p.error.analytic_bound + e.analytic_bound, p.error.float_epsilon_count + e.float_epsilon_count + 8 * lvl as u64);
        samples.push((*t, ray(&s, p.depth + lvl, pos, err)));
    }
    if samples.is_empty() {
        return Err(Error::UnresolvedTail(t_star));
    }
    let p_star = ray_point(g, &s_up, t_star, tol, 96)?;
    let (th, e) = theta_log(&map, p_star.position)?;
    let matched = down(th)?;
    let gap = (matched - lift[0]).norm();
    let err = p_star.total_error() + e.total(th.norm()) + 1e-12 * (1.0 + lift[lvl].norm());
    if gap > err.max(1e-9 * (1.0 + lift[0].norm())) {
        return Err(Error::Domain(format!("orbit point misses the transported tail by {gap:e}")));
    }
    Ok(Criniferous {
        n,
        tail: HairTail { address: s, samples, endpoint_estimate: None },
        containment_gap: gap,
        containment_error: err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadStart {
    Counterexample { z: Complex64, w: Complex64 },
    NoneFound(usize),
}

pub fn headstart_check(f: &LogTransform, a: f64, b: f64, n_pairs: usize) -> Result<HeadStart> {
    headstart_check_seeded(f, a, b, n_pairs, 0x4ead)
}

/// Searches for z, w in a common tract with images in a common tract,
/// Re w > φ(Re z) but Re F(w) ≤ φ(Re F(z)), where φ(x) = ax + b.
pub fn headstart_check_seeded(f: &LogTransform, a: f64, b: f64, n_pairs: usize, seed: u64) -> Result<HeadStart> {
    let edge = f.contraction_edge();
    if !(a >= 1.0) || !((a - 1.0) * edge + b > 0.0) || !((a - 1.0) * 1e16 + b > 0.0) {
        return Err(Error::Invalid(format!("φ(x) = {a}x + {b} must satisfy a ≥ 1 and φ(x) > x")));
    }
    let phi = |x: f64| a * x + b;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = f.k_max.min(4);
    let sample_image = |rng: &mut ChaCha8Rng, t_img: TractId| {
        let re = edge + 10f64.powf(rng.gen_range(0.0..16.0));
        Complex64::new(re, f.band_center(t_img) + rng.gen_range(-1.0..1.0))
    };
    for _ in 0..n_pairs {
        let t = f.tract(rng.gen_range(-span..=span));
        let t_img = f.tract(rng.gen_range(-span..=span));
        // common-tract images pulled back into a common tract
        let (v1, v2) = (sample_image(&mut rng, t_img), sample_image(&mut rng, t_img));
        let (Ok(v1), Ok(v2)) = (inverse_branch(f, t_img, v1), inverse_branch(f, t_img, v2)) else { continue };
        let (Ok(z), Ok(w)) = (inverse_branch(f, t, v1), inverse_branch(f, t, v2)) else { continue };
        for (z, w) in [(z, w), (w, z)] {
            if w.re > phi(z.re) {
                let (Ok((fz, _)), Ok((fw, _))) = (eval_f(f, z), eval_f(f, w)) else { continue };
                if !(fw.re > phi(fz.re)) {
                    return Ok(HeadStart::Counterexample { z, w });
                }
            }
        }
    }
    Ok(HeadStart::NoneFound(n_pairs))
}

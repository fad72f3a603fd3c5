//! The hard assertions run by `bouquet verify`, at sample sizes small enough
//! for routine use. The acceptance suite runs the same checks at full size.

use crate::commands::conjugacy_map;
use crate::config::RunConfig;
use crate::output::Sink;
use crate::Outcome;
use bouquet::brushmodel::{random_brush, zn_oracle_all};
use bouquet::conjugacy::{order_preserved, verify_conjugacy_seeded};
use bouquet::logspace::derivative_f;
use bouquet::rays::model_chain;
use bouquet::projection::{pi_n_param, BrushHair};
use bouquet::{
    crossing_count, escape_test, eval_f, expansion_lower_bound, inverse_branch, pi_model, tract_of, AffineBrush,
    BrushPoint, Complex64, EscapeVerdict, ExternalAddress, FunctionFamily, LogTransform, Result, TractId,
};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Random tract point: a preimage of a point right of log L.
pub fn tract_sample(f: &LogTransform, rng: &mut ChaCha8Rng) -> Option<(TractId, Complex64)> {
    let id = if f.is_exponential() {
        f.tract(rng.gen_range(-5..=5))
    } else {
        TractId::Pair(if rng.gen_bool(0.5) { 1 } else { -1 }, rng.gen_range(-2..=2), rng.gen_range(-3..=3))
    };
    let v = Complex64::new(f.log_l + rng.gen_range(0.01..60.0), f.c.im + rng.gen_range(-40.0..40.0));
    inverse_branch(f, id, v).ok().map(|w| (id, w))
}

pub fn sample_families() -> Result<Vec<LogTransform>> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    Ok(vec![
        LogTransform::new(FunctionFamily::exponential(c(1.0, 0.0))?)?,
        LogTransform::new(FunctionFamily::exponential(c(0.3, 2.0))?)?,
        LogTransform::new(FunctionFamily::exp_pair(c(1.0, 0.0), c(0.5, 0.0))?)?,
        LogTransform::new(FunctionFamily::exp_pair(c(2.0, -1.0), c(-0.25, 1.0))?)?,
    ])
}

/// Violations of |F′| ≥ (Re F - log L)/(4π), allowing 8 ulps.
pub fn expansion_violations(f: &LogTransform, n: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let (mut seen, mut bad) = (0, 0);
    for _ in 0..n {
        let Some((_, w)) = tract_sample(f, rng) else { continue };
        let Ok((bound, actual)) = expansion_lower_bound(f, w) else { continue };
        seen += 1;
        if actual < bound - 8.0 * f64::EPSILON * bound.abs().max(actual) {
            bad += 1;
        }
    }
    (seen, bad)
}

/// Largest |inverse_branch(T, F(w)) - w| / (1 + |w|).
pub fn round_trip_error(f: &LogTransform, n: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let (mut seen, mut worst) = (0, 0.0f64);
    for _ in 0..n {
        let Some((id, w)) = tract_sample(f, rng) else { continue };
        let Ok((v, hit)) = eval_f(f, w) else { continue };
        debug_assert_eq!(hit, id);
        let back = match inverse_branch(f, id, v) {
            Ok(b) => b,
            Err(_) => return (seen, f64::INFINITY),
        };
        seen += 1;
        worst = worst.max((back - w).norm() / (1.0 + w.norm()));
    }
    (seen, worst)
}

pub fn random_address(f: &LogTransform, rng: &mut ChaCha8Rng, span: i64) -> ExternalAddress {
    let pre = (0..rng.gen_range(0..4)).map(|_| f.tract(rng.gen_range(-span..=span))).collect();
    let per = (0..rng.gen_range(1..4)).map(|_| f.tract(rng.gen_range(-span..=span))).collect();
    ExternalAddress::new(pre, per).expect("nonempty period")
}

/// Worst ratio ‖W_{n+1} - W_n‖ / ‖W_n - W_{n-1}‖ for 2 ≤ n ≤ n_max, where
/// W_n is the orbit vector (w_0, …, w_M) after n pullback sweeps
/// W_{n+1}[j] = F_{s_j}^{-1}(W_n[j+1]) with W[M] held fixed, started from the
/// model chain of the hair point at t, and ‖·‖ is the max over levels.
pub fn contraction_ratio(f: &LogTransform, s: &ExternalAddress, t: f64, n_max: usize) -> Result<f64> {
    let (chain, _) = model_chain(f, s, t, n_max + 1);
    let m = chain.len() - 1;
    let mut cur = chain;
    let mut prev_delta: Option<f64> = None;
    let mut worst: f64 = 0.0;
    for _ in 0..n_max {
        let mut next = cur.clone();
        for j in 0..m {
            next[j] = inverse_branch(f, s.get(j), cur[j + 1])?;
        }
        let delta = next.iter().zip(&cur).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let scale = next.iter().map(|w| w.norm()).fold(1.0, f64::max);
        if let Some(p) = prev_delta {
            // below this the differences are rounding noise
            if p > 1e-13 * scale {
                worst = worst.max(delta / p);
            }
        }
        prev_delta = Some(delta);
        cur = next;
    }
    Ok(worst)
}

/// Worst |π_n - z_n| over all hairs and n ≤ n_max, and the number of
/// monotonicity and gap-bound violations of the oracle sequence.
pub fn brush_agreement(b: &AffineBrush, n_max: usize) -> Result<(f64, usize, usize)> {
    let lam = b.lambda;
    // z_n - z_{n-1} ≤ max(0, Q - t_y(η_n)) / Λ^n
    let q = b.q.to_f64().unwrap_or(f64::NAN);
    let c_bound = b.hairs.iter().map(|h| (q - h.t).max(0.0)).fold(0.0, f64::max);
    let (mut worst, mut mono, mut gaps) = (0.0f64, 0, 0);
    for i in 0..b.hairs.len() {
        let h = BrushHair::new(b, i, n_max);
        let oracle = zn_oracle_all(b, i, n_max);
        for (n, z) in oracle.iter().enumerate() {
            let z = z.to_f64().unwrap_or(f64::NAN);
            let got = pi_n_param(&h, b.hairs[i].t, n, 1e-14)?;
            worst = worst.max((got - z).abs());
            if n > 0 {
                if oracle[n] < oracle[n - 1] {
                    mono += 1;
                }
                let gap = (&oracle[n] - &oracle[n - 1]).to_f64().unwrap_or(f64::NAN);
                if gap > c_bound / lam.powi(n as i32) * (1.0 + 1e-12) {
                    gaps += 1;
                }
            }
        }
    }
    Ok((worst, mono, gaps))
}

pub fn run_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    let fams = sample_families()?;
    let (mut seen, mut bad, mut worst_rt) = (0, 0, 0.0f64);
    for f in &fams {
        let (s, b) = expansion_violations(f, 2000, &mut rng);
        seen += s;
        bad += b;
        worst_rt = worst_rt.max(round_trip_error(f, 1000, &mut rng).1);
    }
    out.push(check("expansion_inequality", bad == 0 && seen > 0, format!("{bad} violations in {seen} samples")));
    out.push(check("inverse_round_trip", worst_rt < 1e-10, format!("max relative error {worst_rt:.3e}")));

    let g = LogTransform::new(cfg.traced_family()?)?;
    let mut worst_rate: f64 = 0.0;
    let mut failures = 0;
    if g.margin >= 0.0 {
        for _ in 0..20 {
            let s = random_address(&g, &mut rng, 3);
            match contraction_ratio(&g, &s, rng.gen_range(0.0..4.0), 40) {
                Ok(r) => worst_rate = worst_rate.max(r),
                Err(_) => failures += 1,
            }
        }
    }
    out.push(check(
        "pullback_contraction",
        g.margin >= 0.0 && failures == 0 && worst_rate <= 0.5 + 1e-6,
        format!("margin {:.6}, worst ratio {worst_rate:.6}, {failures} failures", g.margin),
    ));

    let mut brushes = vec![AffineBrush::worked_instance()];
    brushes.extend((0..40).map(|_| {
        let n = rng.gen_range(1..=12);
        random_brush(&mut rng, n)
    }));
    let (mut worst_pi, mut mono, mut gaps, mut crossings) = (0.0f64, 0, 0, 0);
    for b in &brushes {
        let (w, m, g) = brush_agreement(b, 30)?;
        worst_pi = worst_pi.max(w);
        mono += m;
        gaps += g;
        crossings = crossings.max(crossing_count(b, &b.q));
    }
    out.push(check("brush_oracle", worst_pi <= 1e-12, format!("max |pi_n - z_n| {worst_pi:.3e} on {} brushes", brushes.len())));
    out.push(check("brush_monotone", mono == 0, format!("{mono} violations")));
    out.push(check("brush_gap_bound", gaps == 0, format!("{gaps} violations")));
    out.push(check("crossing_at_most_once", crossings <= 1, format!("max crossing count {crossings}")));
    let wi = AffineBrush::worked_instance();
    let pi = pi_model(&wi, &BrushPoint { hair: "H1".into(), t: 10.2 }).t;
    out.push(check("worked_instance", pi == 11.5, format!("pi(10.2) = {pi}")));

    let c = conjugacy_map(cfg)?;
    let rep = verify_conjugacy_seeded(&c, 100, cfg.seed);
    let ok = rep.is_valid() && rep.max_residual <= 1e-8 && rep.samples >= 50;
    out.push(check(
        "conjugacy_bounds",
        ok,
        format!(
            "{} samples, max displacement {:.6} (bound {:.6}), residual {:.3e}, violations {}/{}/{}",
            rep.samples,
            rep.max_displacement,
            rep.displacement_bound,
            rep.max_residual,
            rep.displacement_violations,
            rep.annulus_violations,
            rep.equivariance_violations
        ),
    ));

    let mut order_bad = 0;
    for _ in 0..40 {
        let s1 = random_address(&c.g, &mut rng, 3);
        let s2 = random_address(&c.g, &mut rng, 3);
        if !matches!(order_preserved(&c, &s1, &s2), Ok(true)) {
            order_bad += 1;
        }
    }
    out.push(check("order_correspondence", order_bad == 0, format!("{order_bad} violations in 40 pairs")));

    let base = cfg.base_family()?;
    let mut flips = 0;
    for j in 0..64 {
        let z = Complex64::new(-3.0 + 0.1 * j as f64, 0.37 * (j % 7) as f64);
        for h in [4usize, 8, 16] {
            let a = escape_test(&base, z, 10.0, h);
            let b = escape_test(&base, z, 10.0, 2 * h);
            if matches!(a, EscapeVerdict::Escaping(_)) && !matches!(b, EscapeVerdict::Escaping(_)) {
                flips += 1;
            }
        }
    }
    out.push(check("escape_horizon_monotone", flips == 0, format!("{flips} flips")));

    let mut tract_bad = 0;
    for _ in 0..200 {
        if let Some((id, w)) = tract_sample(&g, &mut rng) {
            if tract_of(&g, w).id() != Some(id) || !derivative_f(&g, w).is_finite() {
                tract_bad += 1;
            }
        }
    }
    out.push(check("tract_membership", tract_bad == 0, format!("{tract_bad} misattributed samples")));
    Ok(out)
}

pub fn cmd_verify(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    let checks = run_checks(cfg)?;
    let passed = checks.iter().all(|c| c.passed);
    let summary = serde_json::json!({ "passed": passed, "checks": checks });
    sink.json("verify.json", "verify", &summary)?;
    Ok(if passed { Outcome::Done(summary) } else { Outcome::Failed(summary) })
}

use bouquet::brushmodel::{random_brush, semiconjugacy_defects, zn_oracle_all};
use bouquet::conjugacy::theta_log_detailed;
use bouquet::logspace::{derivative_f, inverse_branch};
use bouquet::projection::{pi_param, BrushHair};
use bouquet::rays::{image_parameter, model_chain};
use bouquet::*;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn g_family() -> FunctionFamily {
    disjoint_type_rescale(&FunctionFamily::exponential(c(1.0, 0.0)).unwrap(), RescaleMode::Domain).unwrap().1
}

fn g() -> LogTransform {
    LogTransform::new(g_family()).unwrap()
}

fn families() -> Vec<LogTransform> {
    vec![
        LogTransform::new(FunctionFamily::exponential(c(1.0, 0.0)).unwrap()).unwrap(),
        LogTransform::new(FunctionFamily::exponential(c(-0.5, 1.5)).unwrap()).unwrap(),
        LogTransform::new(FunctionFamily::exp_pair(c(1.0, 0.0), c(0.5, 0.0)).unwrap()).unwrap(),
        g(),
    ]
}

fn address(f: &LogTransform, pre: &[i64], per: &[i64]) -> ExternalAddress {
    ExternalAddress::new(pre.iter().map(|&k| f.tract(k)).collect(), per.iter().map(|&k| f.tract(k)).collect()).unwrap()
}

fn addr_strategy() -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    (proptest::collection::vec(-3i64..=3, 0..3), proptest::collection::vec(-3i64..=3, 1..3))
}

fn tract_point(f: &LogTransform, k: i64, x: f64, y: f64) -> Option<(TractId, Complex64)> {
    let id = if f.is_exponential() { f.tract(k) } else { TractId::Pair(if k >= 0 { 1 } else { -1 }, k % 2, k) };
    inverse_branch(f, id, c(f.log_l + x, f.c.im + y)).ok().map(|w| (id, w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn logarithmic_transform_semiconjugates(fi in 0usize..4, k in -4i64..=4, x in 0.01f64..8.0, y in -30.0f64..30.0) {
        let f = &families()[fi];
        let Some((_, w)) = tract_point(f, k, x, y) else { return Ok(()) };
        let (v, _) = eval_f(f, w).unwrap();
        let lhs = v.exp();
        if let Eval::Finite(rhs) = evaluate(&f.family, w.exp()) {
            prop_assert!((lhs - rhs).norm() / rhs.norm() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn exponential_branches_are_translates(fi in prop::sample::select(vec![0usize, 1, 3]), k in -5i64..5, x in 0.01f64..50.0, y in -3.0f64..3.0) {
        let f = &families()[fi];
        let v = c(f.log_l + x, f.c.im + y);
        let a = inverse_branch(f, f.tract(k), v).unwrap();
        let b = inverse_branch(f, f.tract(k + 1), v).unwrap();
        prop_assert!((b - a - c(0.0, 2.0 * PI)).norm() < 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn expansion_inequality(fi in 0usize..4, k in -4i64..=4, x in 0.01f64..60.0, y in -40.0f64..40.0) {
        let f = &families()[fi];
        let Some((_, w)) = tract_point(f, k, x, y) else { return Ok(()) };
        let (bound, actual) = expansion_lower_bound(f, w).unwrap();
        prop_assert!(actual >= bound - 8.0 * f64::EPSILON * bound.abs().max(actual));
    }

    #[test]
    fn forward_backward_identity((pre, per) in addr_strategy(), n in 2usize..12, x in 0.5f64..6.0) {
        let f = g();
        let s = address(&f, &pre, &per);
        let seed = c(f.contraction_edge() + x, f.band_center(s.get(n)));
        let p = pullback_point(&f, &s, n, seed).unwrap();
        let q = pullback_point(&f, &s.shift(), n - 1, seed).unwrap();
        let (v, _) = eval_f(&f, p.position).unwrap();
        let err = p.total_error().max(q.total_error()) + 1e-12 * (1.0 + v.norm());
        prop_assert!((v - q.position).norm() <= 10.0 * err, "{} vs {}", v, q.position);
    }

    /// The sweep w_j ← F_{s_j}^{-1}(w_{j+1}) on the truncated orbit vector
    /// contracts by ½ in the max norm.
    #[test]
    fn orbit_sweep_contracts((pre, per) in addr_strategy(), t in 0.0f64..4.0) {
        let f = g();
        let s = address(&f, &pre, &per);
        let (mut cur, _) = model_chain(&f, &s, t, 30);
        let m = cur.len() - 1;
        let mut prev: Option<f64> = None;
        for _ in 0..30 {
            let mut next = cur.clone();
            for j in 0..m {
                next[j] = inverse_branch(&f, s.get(j), cur[j + 1]).unwrap();
            }
            let d = next.iter().zip(&cur).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let scale = next.iter().map(|w| w.norm()).fold(1.0, f64::max);
            if let Some(p) = prev {
                if p > 1e-13 * scale {
                    prop_assert!(d <= (0.5 + 1e-6) * p, "{d} > {p} / 2");
                }
            }
            prev = Some(d);
            cur = next;
        }
    }

    #[test]
    fn tail_image_lies_on_shifted_hair((pre, per) in addr_strategy(), t in 0.0f64..6.0) {
        let f = g();
        let s = address(&f, &pre, &per);
        let p = ray_point(&f, &s, t, 1e-10, 96).unwrap();
        prop_assert!(p.total_error() < 1e-9);
        let q = ray_point(&f, &s.shift(), image_parameter(&f, &s, t), 1e-10, 96).unwrap();
        let (v, _) = eval_f(&f, p.position).unwrap();
        let tol = 1e-8 * (1.0 + v.norm());
        prop_assert!((v - q.position).norm() <= tol, "{} vs {}", v, q.position);
    }

    #[test]
    fn conjugacy_displacement_and_equivariance((pre, per) in addr_strategy(), t in 30.0f64..60.0) {
        let map = ConjugacyMap::new(&FunctionFamily::exponential(c(1.0, 0.0)).unwrap(), None, 40).unwrap();
        let s = address(&map.g, &pre, &per);
        let w = ray_point(&map.g, &s, t, 1e-10, 96).unwrap().position;
        let th = theta_log_detailed(&map, w).unwrap();
        let err = th.error.total(th.value.norm());
        prop_assert!((th.value - w).norm() <= map.displacement_bound() + err);
        prop_assert!(th.rate <= 0.5 + 1e-6);
        let th2 = theta_log_detailed(&map, w + c(0.0, 2.0 * PI)).unwrap();
        prop_assert!((th2.value - th.value - c(0.0, 2.0 * PI)).norm() <= 1e-9 * (1.0 + th.value.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traced_tails_are_injective_and_escape_uniformly((pre, per) in addr_strategy()) {
        let f = g();
        let s = address(&f, &pre, &per);
        let tail = trace_tail(&f, &s, 0.0, 8.0, 1e-10).unwrap();
        for w in tail.samples.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
            let gap = (w[1].1.position - w[0].1.position).norm();
            prop_assert!(gap > w[0].1.total_error() + w[1].1.total_error());
        }
        // log|g^n| = Re F^n along the tail past the endpoint (periodic
        // endpoints do not escape), n ≤ 20; orbits whose propagated error
        // leaves the certified range are dropped
        let log_r = f.family.l.ln();
        let mut pts: Vec<Option<(Complex64, f64)>> =
            tail.samples.iter().skip(1).map(|(_, p)| Some((p.position, p.total_error()))).collect();
        let mut last: Option<f64> = None;
        for _ in 0..=20 {
            let m = pts.iter().flatten().map(|(w, _)| w.re).fold(f64::INFINITY, f64::min);
            if let Some(l) = last {
                if l >= log_r && m.is_finite() {
                    prop_assert!(m >= l - 1e-6, "{m} < {l}");
                }
            }
            last = Some(m);
            for p in pts.iter_mut() {
                *p = p.and_then(|(w, e)| {
                    if w.re + f.shift.re > 700.0 {
                        return Some((w, e));
                    }
                    let (v, _) = eval_f(&f, w).ok()?;
                    let e = e * derivative_f(&f, w).norm() * (1.0 + 1e-12) + 4.0 * f64::EPSILON * v.norm();
                    (e < 1e-6).then_some((v, e))
                });
            }
        }
    }

    #[test]
    fn brush_projection_properties(seed in any::<u64>(), n_hairs in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_brush(&mut rng, n_hairs);
        let cfg = ProjectionConfig {
            r: 1.0,
            region: Region::square(b.q).unwrap(),
            n_max: 30,
            t_tol: 1e-13,
            orbit_horizon: 30,
        };
        let lam = b.lambda;
        let q = b.q.to_f64().unwrap();
        for i in 0..b.hairs.len() {
            let z = zn_oracle_all(&b, i, 30);
            for n in 1..z.len() {
                prop_assert!(z[n] >= z[n - 1]);
                let gap = (&z[n] - &z[n - 1]).to_f64().unwrap();
                let c_i = (q - b.hairs[i..].iter().chain(&b.hairs[..i]).map(|h| h.t).fold(f64::INFINITY, f64::min)).max(0.0);
                prop_assert!(gap <= c_i / lam.powi(n as i32) * (1.0 + 1e-12) + 1e-300);
            }
            let h = BrushHair::new(&b, i, 30);
            let t0 = b.hairs[i].t;
            let tr = pi_param(&h, t0, &cfg).unwrap();
            prop_assert!(tr.zn_trace.windows(2).all(|w| w[1].1 >= w[0].1));
            if tr.converged {
                let again = pi_param(&h, tr.t_out, &cfg).unwrap();
                prop_assert!((again.t_out - tr.t_out).abs() <= cfg.t_tol);
            }
            // order preservation of π along the hair
            let id = &b.hairs[i].id;
            let ts = [t0, t0 + 0.5, t0 + 1.0, t0 + 4.0, t0 + 20.0];
            let pis: Vec<f64> = ts.iter().map(|&t| pi_model(&b, &BrushPoint { hair: id.clone(), t }).t).collect();
            prop_assert!(pis.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(pis.iter().zip(&ts).all(|(p, t)| p >= t));
        }
        let pts: Vec<(usize, f64)> = (0..b.hairs.len()).flat_map(|i| (0..8).map(move |k| (i, k as f64 * 0.75))).collect();
        let pts: Vec<(usize, f64)> = pts.into_iter().map(|(i, d)| (i, b.hairs[i].t + d)).collect();
        prop_assert_eq!(semiconjugacy_defects(&b, &pts).unexplained, 0);
        prop_assert!(crossing_count(&b, &b.q) <= 1);
    }
}

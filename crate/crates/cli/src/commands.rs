use crate::config::RunConfig;
use crate::output::Sink;
use crate::Outcome;
use bouquet::brushmodel::z_infinity_exact;
use bouquet::conjugacy::{theta_log_detailed, verify_conjugacy_seeded};
use bouquet::{
    check_brush_axioms, commutation_defect, crossing_count, escape_test, pi_model, project_pi, ray_point,
    trace_tail, zn_oracle, Complex64, ConjugacyMap, Error, EscapeVerdict, HairTail, LogTransform,
    ProjectionConfig, Result,
};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

/// Traces every configured address on the traced map. Results keep the
/// config order; the first failing address (in that order) is reported.
pub fn trace_all(cfg: &RunConfig) -> Result<(LogTransform, Vec<HairTail>)> {
    let f = LogTransform::new(cfg.traced_family()?)?;
    let t = &cfg.trace;
    let tails: Vec<Result<HairTail>> =
        cfg.addresses.par_iter().map(|s| trace_tail(&f, s, t.t_min, t.t_max, t.tol)).collect();
    let tails = tails.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((f, tails))
}

fn max_error(tail: &HairTail) -> f64 {
    tail.samples.iter().map(|(_, p)| p.total_error()).fold(0.0, f64::max)
}

pub fn cmd_trace(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    let (_, tails) = trace_all(cfg)?;
    let header = ["t", "re_log", "im_log", "re_plane", "im_plane", "err"];
    let mut entries = Vec::new();
    for (i, tail) in tails.iter().enumerate() {
        sink.csv(&format!("tail_{i}.csv"), &header, &tail.rows())?;
        sink.json(&format!("tail_{i}.json"), "tail", tail)?;
        let ts: Vec<f64> = tail.samples.iter().map(|(t, _)| *t).collect();
        entries.push(json!({
            "index": i,
            "address": tail.address,
            "samples": tail.samples.len(),
            "t_min": ts.first(),
            "t_max": ts.last(),
            "max_depth": tail.samples.iter().map(|(_, p)| p.depth).max(),
            "max_error": max_error(tail),
        }));
    }
    let summary = json!({
        "family": cfg.traced_family()?,
        "tails": entries,
        "max_error": tails.iter().map(max_error).fold(0.0, f64::max),
    });
    sink.json("trace_summary.json", "trace_summary", &summary)?;
    Ok(Outcome::Done(summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pixel {
    Verdict(EscapeVerdict),
    Ray,
}

/// Plane coordinates of the centre of pixel (i, j), row 0 at the top.
pub fn pixel_center(v: &crate::config::Viewport, w: u32, h: u32, i: u32, j: u32) -> Complex64 {
    let dx = (v.re_max - v.re_min) / w as f64;
    let dy = (v.im_max - v.im_min) / h as f64;
    Complex64::new(v.re_min + (i as f64 + 0.5) * dx, v.im_max - (j as f64 + 0.5) * dy)
}

fn pixel_of(v: &crate::config::Viewport, w: u32, h: u32, z: Complex64) -> Option<(u32, u32)> {
    let x = (z.re - v.re_min) / (v.re_max - v.re_min) * w as f64;
    let y = (v.im_max - z.im) / (v.im_max - v.im_min) * h as f64;
    if x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64 {
        Some((x as u32, y as u32))
    } else {
        None
    }
}

fn color(p: Pixel, scheme: u32) -> [u8; 3] {
    match (scheme, p) {
        (_, Pixel::Ray) => [255, 255, 255],
        (_, Pixel::Verdict(EscapeVerdict::Undecided)) => [255, 0, 255],
        (0, Pixel::Verdict(EscapeVerdict::Escaping(n))) => {
            let s = (n.min(12) * 15) as u8;
            [255 - s, 170 - s / 2, 20]
        }
        (0, Pixel::Verdict(EscapeVerdict::ReEntered(n))) => [0, 20, 60 + (n.min(12) * 12) as u8],
        (_, Pixel::Verdict(EscapeVerdict::Escaping(_))) => [0, 0, 0],
        (_, Pixel::Verdict(EscapeVerdict::ReEntered(_))) => [200, 200, 200],
    }
}

/// Classification raster plus overlays, row-major.
pub fn raster(cfg: &RunConfig, tails: &[HairTail]) -> Result<(crate::config::Viewport, f64, Vec<Pixel>)> {
    let g = cfg.traced_family()?;
    let r = &cfg.render;
    let f = LogTransform::new(g.clone())?;
    let v = r.viewport.clone().unwrap_or_else(|| {
        let a = (f.contraction_edge() + 2.0).exp();
        let b = (f.contraction_edge() + 5.0).exp();
        let half = 0.5 * (b - a) * r.height as f64 / r.width as f64;
        crate::config::Viewport { re_min: a, re_max: b, im_min: -half, im_max: half }
    });
    let radius = r.radius.unwrap_or(g.l);
    let (w, h) = (r.width, r.height);
    let mut px: Vec<Pixel> = (0..w * h)
        .into_par_iter()
        .map(|k| Pixel::Verdict(escape_test(&g, pixel_center(&v, w, h, k % w, k / w), radius, r.horizon)))
        .collect();
    for tail in tails {
        for (_, p) in &tail.samples {
            if let Some((i, j)) = pixel_of(&v, w, h, p.plane_position) {
                px[(j * w + i) as usize] = Pixel::Ray;
            }
        }
    }
    Ok((v, radius, px))
}

pub fn cmd_render(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    if cfg.render.scheme > 1 {
        return Err(Error::Invalid(format!("unknown color scheme {}", cfg.render.scheme)));
    }
    let tails = if cfg.addresses.is_empty() { Vec::new() } else { trace_all(cfg)?.1 };
    let (v, radius, px) = raster(cfg, &tails)?;
    let rgb: Vec<u8> = px.iter().flat_map(|p| color(*p, cfg.render.scheme)).collect();
    sink.png("render.png", cfg.render.width, cfg.render.height, &rgb)?;
    let count = |pred: &dyn Fn(&Pixel) -> bool| px.iter().filter(|p| pred(p)).count();
    let summary = json!({
        "viewport": v,
        "width": cfg.render.width,
        "height": cfg.render.height,
        "radius": radius,
        "horizon": cfg.render.horizon,
        "escaping": count(&|p| matches!(p, Pixel::Verdict(EscapeVerdict::Escaping(_)))),
        "reentered": count(&|p| matches!(p, Pixel::Verdict(EscapeVerdict::ReEntered(_)))),
        "undecided": count(&|p| matches!(p, Pixel::Verdict(EscapeVerdict::Undecided))),
        "ray_pixels": count(&|p| matches!(p, Pixel::Ray)),
    });
    sink.json("render.json", "render", &summary)?;
    Ok(Outcome::Done(summary))
}

#[derive(Serialize)]
struct ProjectionRow {
    tail: usize,
    t: f64,
    re_in: f64,
    im_in: f64,
    re_out: f64,
    im_out: f64,
    n_used: usize,
    converged: bool,
    idempotence_gap: f64,
}

pub fn cmd_project(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    let (_, tails) = trace_all(cfg)?;
    let g = cfg.traced_family()?;
    let p = &cfg.projection;
    let pc = ProjectionConfig::disc(p.log_r.exp(), p.n_max, p.t_tol)?;
    pc.validate(g.l)?;
    let mut jobs = Vec::new();
    for (k, tail) in tails.iter().enumerate() {
        let n = tail.samples.len();
        let m = p.samples.min(n);
        for j in 0..m {
            let idx = if m == 1 { 0 } else { j * (n - 1) / (m - 1) };
            jobs.push((k, tail.samples[idx].clone()));
        }
    }
    let rows: Vec<Result<ProjectionRow>> = jobs
        .par_iter()
        .map(|(k, (t, z))| {
            let tail = &tails[*k];
            match project_pi(&g, tail, z, &pc) {
                Ok(res) => {
                    let again = project_pi(&g, tail, &res.output, &pc)?;
                    Ok(ProjectionRow {
                        tail: *k,
                        t: *t,
                        re_in: z.position.re,
                        im_in: z.position.im,
                        re_out: res.output.position.re,
                        im_out: res.output.position.im,
                        n_used: res.n_used,
                        converged: res.converged,
                        idempotence_gap: (again.output.position - res.output.position).norm(),
                    })
                }
                Err(Error::NotConverged(n)) => Ok(ProjectionRow {
                    tail: *k,
                    t: *t,
                    re_in: z.position.re,
                    im_in: z.position.im,
                    re_out: f64::NAN,
                    im_out: f64::NAN,
                    n_used: n,
                    converged: false,
                    idempotence_gap: f64::NAN,
                }),
                Err(e) => Err(e),
            }
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let header = ["tail", "t", "re_in", "im_in", "re_out", "im_out", "n_used", "converged", "idempotence_gap"];
    sink.csv("projection.csv", &header, &rows)?;
    let commutation = match commutation_defect(&g, &tails, &pc, p.samples) {
        Ok(rep) => Some(rep),
        Err(Error::Invalid(_)) => None,
        Err(e) => return Err(e),
    };
    let converged: Vec<&ProjectionRow> = rows.iter().filter(|r| r.converged).collect();
    let summary = json!({
        "R": pc.r,
        "projected": rows.len(),
        "converged": converged.len(),
        "max_idempotence_gap": converged.iter().map(|r| r.idempotence_gap).fold(0.0, f64::max),
        "commutation": commutation,
    });
    sink.json("projection.json", "projection", &summary)?;
    Ok(Outcome::Done(summary))
}

pub fn conjugacy_map(cfg: &RunConfig) -> Result<ConjugacyMap> {
    let f = cfg.base_family()?;
    let c = &cfg.conjugacy;
    if c.identity {
        ConjugacyMap::identity(&f, c.depth)
    } else {
        ConjugacyMap::new(&f, c.q, c.depth)
    }
}

#[derive(Serialize)]
struct ThetaRow {
    address: usize,
    t: f64,
    re_w: f64,
    im_w: f64,
    re_theta: f64,
    im_theta: f64,
    err: f64,
}

pub fn cmd_conjugate(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    let c = conjugacy_map(cfg)?;
    let report = verify_conjugacy_seeded(&c, cfg.conjugacy.samples, cfg.seed);
    let mut rows = Vec::new();
    if c.g.margin >= 0.0 {
        let t0 = (c.q - c.g.contraction_edge()).max(0.0);
        for (a, s) in cfg.addresses.iter().enumerate() {
            for k in 1..=8 {
                let t = t0 + k as f64;
                let Ok(p) = ray_point(&c.g, s, t, cfg.trace.tol, 64) else { continue };
                let Ok(th) = theta_log_detailed(&c, p.position) else { continue };
                rows.push(ThetaRow {
                    address: a,
                    t,
                    re_w: p.position.re,
                    im_w: p.position.im,
                    re_theta: th.value.re,
                    im_theta: th.value.im,
                    err: th.error.total(th.value.norm()),
                });
            }
        }
    }
    sink.csv("theta.csv", &["address", "t", "re_w", "im_w", "re_theta", "im_theta", "err"], &rows)?;
    let valid = report.is_valid();
    let summary = json!({
        "lambda": c.lambda,
        "Q": c.q,
        "depth": c.depth,
        "valid": valid,
        "report": report,
    });
    sink.json("conjugacy.json", "conjugacy", &summary)?;
    Ok(if valid { Outcome::Done(summary) } else { Outcome::Failed(summary) })
}

#[derive(Serialize)]
struct PiRow {
    hair: String,
    t: f64,
    pi_t: f64,
    z_inf: f64,
}

fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn cmd_brush(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    let bc = &cfg.brush;
    let b = &bc.brush;
    let mut pi_rows = Vec::new();
    for p in &bc.points {
        let p = b.point(&p.hair, p.t)?;
        let i = b.index(&p.hair)?;
        pi_rows.push(PiRow { hair: p.hair.clone(), t: p.t, pi_t: pi_model(b, &p).t, z_inf: to_f64(&z_infinity_exact(b, i)) });
    }
    sink.csv("brush_pi.csv", &["hair", "t", "pi_t", "z_inf"], &pi_rows)?;
    let mut zn_rows = Vec::new();
    for h in &b.hairs {
        for n in 0..=bc.n {
            zn_rows.push((h.id.clone(), n, zn_oracle(b, &h.id, n)?));
        }
    }
    sink.csv("brush_zn.csv", &["hair", "n", "z_n"], &zn_rows)?;
    let axioms = check_brush_axioms(b);
    let summary = json!({
        "axioms": axioms,
        "crossing_count": crossing_count(b, &b.q),
        "pi": pi_rows,
    });
    sink.json("brush.json", "brush", &summary)?;
    Ok(Outcome::Done(summary))
}

use bouquet::{EscapeVerdict, ExternalAddress, TractId};
use bouquet_cli::commands::{pixel_center, raster, trace_all, Pixel};
use bouquet_cli::config::{RenderConfig, Viewport};
use bouquet_cli::output::VERSION;
use bouquet_cli::RunConfig;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bouquet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bouquet")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string(cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn one_address() -> RunConfig {
    RunConfig { addresses: vec![ExternalAddress::periodic(vec![TractId::Exp(0)]).unwrap()], ..RunConfig::default() }
}

fn files(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(ext) && n != "config.json")
        .collect();
    v.sort();
    v
}

#[test]
fn trace_writes_one_csv_and_json_per_address() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &one_address());
    let out = dir.path().join("out");
    let o = bouquet(&["trace", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out, ".csv"), ["tail_0.csv"]);
    assert_eq!(files(&out, ".json"), ["tail_0.json", "trace_summary.json"]);
    let csv = fs::read_to_string(out.join("tail_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with(&format!("# bouquet {VERSION} config ")));
    assert_eq!(lines.next().unwrap(), "t,re_log,im_log,re_plane,im_plane,err");
}

#[test]
fn unrealizable_address_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = one_address();
    c.addresses = vec![ExternalAddress::periodic(vec![TractId::Exp(10_000)]).unwrap()];
    let cfg = write_config(dir.path(), &c);
    let o = bouquet(&["trace", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "AddressNotRealized");
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(bouquet(&["nonsense"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"trace": {"tol": -1}}"#).unwrap();
    let o = bouquet(&["trace", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "InvalidInput");
}

#[test]
fn rerun_is_byte_identical_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &RunConfig::default());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        for cmd in ["trace", "brush"] {
            let o = bouquet(&[cmd, "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "7"]);
            assert!(o.status.success());
        }
    }
    let hash = {
        let mut c = RunConfig::default();
        c.seed = 7;
        c.hash()
    };
    let names = files(&a, "");
    assert!(names.len() >= 8);
    for n in names {
        let x = fs::read(a.join(&n)).unwrap();
        assert_eq!(x, fs::read(b.join(&n)).unwrap(), "{n}");
        let text = String::from_utf8(x).unwrap();
        assert!(text.contains(&hash) && text.contains(VERSION), "{n} lacks the stamp");
    }
}

#[test]
fn brush_pi_table_contains_worked_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = bouquet(&["brush", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("brush_pi.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "H1,10.2,11.5,11.5"), "{csv}");
    assert!(csv.lines().any(|l| l == "H2,0.0,3.0,3.0"), "{csv}");
}

#[test]
fn verify_passes_on_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = bouquet(&["verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["data"]["passed"], true);
}

#[test]
fn conjugate_with_unit_lambda_reports_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.conjugacy.identity = true;
    let cfg = write_config(dir.path(), &c);
    let o = bouquet(&["conjugate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &v["report"];
    for k in ["max_displacement", "max_residual", "max_error", "displacement_bound"] {
        assert_eq!(r[k], 0.0, "{k}");
    }
    assert!(r["samples"].as_u64().unwrap() > 0);
}

fn small_render(c: &mut RunConfig, v: Viewport) {
    c.render = RenderConfig { viewport: Some(v), width: 64, height: 63, horizon: 12, radius: None, scheme: 0 };
}

#[test]
fn raster_along_traced_ray_is_escaping() {
    let mut c = one_address();
    let (_, tails) = trace_all(&c).unwrap();
    let tail = &tails[0];
    // the 0̄ hair is real, so a window symmetric about the axis with an odd
    // number of rows has its middle row on the ray
    let (a, b) = (tail.samples[0].1.plane_position.re, tail.samples.last().unwrap().1.plane_position.re);
    let b = a + (b - a).min(4.0 * a);
    small_render(&mut c, Viewport { re_min: a, re_max: b, im_min: -0.05 * a, im_max: 0.05 * a });
    let (v, _, px) = raster(&c, &[]).unwrap();
    let (w, h) = (64, 63);
    let mut checked = 0;
    for (_, p) in &tail.samples {
        let z = p.plane_position;
        if z.re <= v.re_min || z.re >= v.re_max {
            continue;
        }
        let i = ((z.re - v.re_min) / (v.re_max - v.re_min) * w as f64) as u32;
        let j = (h - 1) / 2;
        assert!(pixel_center(&v, w, h, i, j).im.abs() < 1e-6 * a);
        assert!(matches!(px[(j * w + i) as usize], Pixel::Verdict(EscapeVerdict::Escaping(_))), "pixel {i}");
        checked += 1;
    }
    assert!(checked > 10);
    let (_, _, with_rays) = raster(&c, &tails).unwrap();
    assert!(with_rays.iter().any(|p| *p == Pixel::Ray));
}

#[test]
fn render_without_rays_and_horizon_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig { addresses: vec![], ..RunConfig::default() };
    small_render(&mut c, Viewport { re_min: -4.0, re_max: 4.0, im_min: -4.0, im_max: 4.0 });
    let cfg = write_config(dir.path(), &c);
    let o = bouquet(&["render", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ray_pixels"], 0);
    let png = fs::read(dir.path().join("render.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");

    // untraced exp(z) itself, where points do escape at moderate horizons
    c.rescale = None;
    c.render.viewport = Some(Viewport { re_min: -2.0, re_max: 6.0, im_min: -4.0, im_max: 4.0 });
    for h in [2usize, 4, 8] {
        c.render.horizon = h;
        let (_, _, lo) = raster(&c, &[]).unwrap();
        c.render.horizon = 2 * h;
        let (_, _, hi) = raster(&c, &[]).unwrap();
        let esc = |p: &Pixel| matches!(p, Pixel::Verdict(EscapeVerdict::Escaping(_)));
        assert!(lo.iter().zip(&hi).all(|(a, b)| !esc(a) || esc(b)), "horizon {h}");
        assert!(lo.iter().any(esc));
    }
}

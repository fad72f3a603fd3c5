//! A finite straight brush with affine hair dynamics. Heights are p + q√2
//! with rational p and q ≠ 0, the square half-side Q is rational, and every
//! quantity below is decided in exact rational arithmetic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hair {
    pub id: String,
    pub p: Rational64,
    pub q: Rational64,
    /// Endpoint t_y.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineBrush {
    pub hairs: Vec<Hair>,
    pub sigma: BTreeMap<String, String>,
    pub lambda: f64,
    #[serde(rename = "Q")]
    pub q: Rational64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrushPoint {
    pub hair: String,
    pub t: f64,
}

fn big(q: &Rational64) -> BigRational {
    BigRational::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

/// Sign of a + b√2.
fn sign_sqrt2(a: &BigRational, b: &BigRational) -> Ordering {
    let sa = a.cmp(&BigRational::zero());
    let sb = b.cmp(&BigRational::zero());
    if sb == Ordering::Equal || sa == sb {
        return sa;
    }
    if sa == Ordering::Equal {
        return sb;
    }
    let two = BigRational::from_integer(BigInt::from(2));
    match (a * a).cmp(&(two * b * b)) {
        Ordering::Greater => sa,
        Ordering::Less => sb,
        Ordering::Equal => Ordering::Equal,
    }
}

impl Hair {
    pub fn height(&self) -> f64 {
        self.p.to_f64().unwrap() + self.q.to_f64().unwrap() * std::f64::consts::SQRT_2
    }

    /// Exact comparison of heights.
    pub fn cmp_height(&self, other: &Hair) -> Ordering {
        sign_sqrt2(&(big(&self.p) - big(&other.p)), &(big(&self.q) - big(&other.q)))
    }

    /// |p + q√2| < Q, exactly.
    pub fn height_within(&self, q: &Rational64) -> bool {
        let (p, s, q) = (big(&self.p), big(&self.q), big(q));
        sign_sqrt2(&(&p - &q), &s) == Ordering::Less && sign_sqrt2(&(&p + &q), &s) == Ordering::Greater
    }
}

impl AffineBrush {
    /// Structural validation. Distinctness of heights is left to
    /// `check_brush_axioms`, which reports it.
    pub fn new(hairs: Vec<Hair>, sigma: BTreeMap<String, String>, lambda: f64, q: Rational64) -> Result<Self> {
        let b = AffineBrush { hairs, sigma, lambda, q };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("expansion Λ = {} must exceed 1", self.lambda)));
        }
        if self.q <= Rational64::zero() {
            return Err(Error::Invalid("Q must be positive".into()));
        }
        let mut ids = HashMap::new();
        for (i, h) in self.hairs.iter().enumerate() {
            if ids.insert(h.id.as_str(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate hair id {}", h.id)));
            }
            if !(h.t >= 0.0 && h.t.is_finite()) {
                return Err(Error::Invalid(format!("hair {} has endpoint {}", h.id, h.t)));
            }
        }
        for h in &self.hairs {
            match self.sigma.get(&h.id) {
                Some(img) if ids.contains_key(img.as_str()) => {}
                _ => return Err(Error::Invalid(format!("σ({}) is missing or unknown", h.id))),
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: AffineBrush = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("brush serializes")
    }

    pub fn index(&self, id: &str) -> Result<usize> {
        self.hairs.iter().position(|h| h.id == id).ok_or_else(|| Error::Invalid(format!("no hair {id}")))
    }

    fn sigma_index(&self, i: usize) -> usize {
        let img = &self.sigma[&self.hairs[i].id];
        self.hairs.iter().position(|h| &h.id == img).expect("validated")
    }

    /// Hair indices η_0 = i, η_1 = σ(η_0), … up to length `len`.
    pub fn orbit(&self, i: usize, len: usize) -> Vec<usize> {
        let mut o = Vec::with_capacity(len);
        let mut cur = i;
        for _ in 0..len {
            o.push(cur);
            cur = self.sigma_index(cur);
        }
        o
    }

    pub fn point(&self, id: &str, t: f64) -> Result<BrushPoint> {
        let h = &self.hairs[self.index(id)?];
        if !(t >= h.t) {
            return Err(Error::Invalid(format!("t = {t} is below the endpoint {} of {id}", h.t)));
        }
        Ok(BrushPoint { hair: id.to_string(), t })
    }

    /// The worked instance: Λ = 2, H1 (t_y = 10) ↦ H2 (t_y = 0) ↦ H2, Q = 3.
    pub fn worked_instance() -> AffineBrush {
        let hairs = vec![
            Hair { id: "H1".into(), p: Rational64::new(1, 2), q: Rational64::new(1, 3), t: 10.0 },
            Hair { id: "H2".into(), p: Rational64::new(-1, 1), q: Rational64::new(1, 5), t: 0.0 },
        ];
        let sigma = [("H1", "H2"), ("H2", "H2")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        AffineBrush::new(hairs, sigma, 2.0, Rational64::from_integer(3)).expect("valid")
    }
}

/// (σ(hair), Λ(t - t_y(hair)) + t_y(σ hair)).
pub fn brush_map(b: &AffineBrush, p: &BrushPoint) -> BrushPoint {
    let i = b.index(&p.hair).expect("point on this brush");
    let j = b.sigma_index(i);
    BrushPoint { hair: b.hairs[j].id.clone(), t: b.lambda * (p.t - b.hairs[i].t) + b.hairs[j].t }
}

/// Exact image parameter of (hair i, t).
pub fn brush_map_exact(b: &AffineBrush, i: usize, t: &BigRational) -> (usize, BigRational) {
    let j = b.sigma_index(i);
    (j, exact(b.lambda) * (t - exact(b.hairs[i].t)) + exact(b.hairs[j].t))
}

/// z_0, …, z_n of hair i. A point (η_0, t) has t_j = t_y(η_j) + Λ^j (t - t_y(η_0)),
/// so staying out of (-Q, Q)² at step j means t ≥ t_y(η_0) + (Q - t_y(η_j))/Λ^j
/// whenever |y(η_j)| < Q.
pub fn zn_oracle_all(b: &AffineBrush, i: usize, n: usize) -> Vec<BigRational> {
    let lam = exact(b.lambda);
    let q = big(&b.q);
    let t0 = exact(b.hairs[i].t);
    let mut pow = BigRational::one();
    let mut cur = t0.clone();
    let mut out = Vec::with_capacity(n + 1);
    for eta in b.orbit(i, n + 1) {
        let h = &b.hairs[eta];
        if h.height_within(&b.q) {
            let room = &q - exact(h.t);
            if room.is_positive() {
                let theta = &t0 + room / &pow;
                if theta > cur {
                    cur = theta;
                }
            }
        }
        out.push(cur.clone());
        pow *= &lam;
    }
    out
}

pub fn zn_oracle_exact(b: &AffineBrush, i: usize, n: usize) -> BigRational {
    zn_oracle_all(b, i, n).pop().expect("n + 1 entries")
}

pub fn zn_oracle(b: &AffineBrush, hair: &str, n: usize) -> Result<f64> {
    Ok(to_f64(&zn_oracle_exact(b, b.index(hair)?, n)))
}

/// z_∞ of hair i. Along the cycle of the hair orbit each repeated hair
/// contributes a strictly smaller constraint, so the supremum is reached
/// before the first repetition.
pub fn z_infinity_exact(b: &AffineBrush, i: usize) -> BigRational {
    let mut seen = vec![false; b.hairs.len()];
    let mut len = 0;
    for eta in b.orbit(i, b.hairs.len() + 1) {
        if seen[eta] {
            break;
        }
        seen[eta] = true;
        len += 1;
    }
    zn_oracle_exact(b, i, len - 1)
}

/// Cutoff n beyond which z_n = z_∞.
pub fn stabilization_index(b: &AffineBrush, i: usize) -> usize {
    let zinf = z_infinity_exact(b, i);
    zn_oracle_all(b, i, b.hairs.len()).iter().position(|z| *z == zinf).expect("reached within one cycle")
}

/// π(p) = (hair, max(t, z_∞(hair))).
pub fn pi_model(b: &AffineBrush, p: &BrushPoint) -> BrushPoint {
    let i = b.index(&p.hair).expect("point on this brush");
    let zinf = z_infinity_exact(b, i);
    let t = if exact(p.t) >= zinf { p.t } else { to_f64(&zinf) };
    BrushPoint { hair: p.hair.clone(), t }
}

pub fn pi_model_exact(b: &AffineBrush, i: usize, t: &BigRational) -> BigRational {
    let zinf = z_infinity_exact(b, i);
    if *t >= zinf {
        t.clone()
    } else {
        zinf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub height_gap: f64,
    pub endpoint_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGap {
    pub id: String,
    pub below: Option<Neighbor>,
    pub above: Option<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrushAxiomReport {
    pub half_lines: bool,
    pub irrational_heights: bool,
    pub distinct_heights: bool,
    pub violations: Vec<String>,
    pub neighbors: Vec<NeighborGap>,
    /// Accumulation of hairs can only be approximated on a finite family.
    pub density: String,
    pub passed: bool,
}

pub fn check_brush_axioms(b: &AffineBrush) -> BrushAxiomReport {
    let mut violations = Vec::new();
    let half_lines = b.hairs.iter().all(|h| h.t >= 0.0 && h.t.is_finite());
    if !half_lines {
        violations.push("a hair has a negative or non-finite endpoint".to_string());
    }
    let irrational_heights = b.hairs.iter().all(|h| !h.q.is_zero());
    for h in b.hairs.iter().filter(|h| h.q.is_zero()) {
        violations.push(format!("hair {} has rational height", h.id));
    }
    let mut order: Vec<usize> = (0..b.hairs.len()).collect();
    order.sort_by(|&x, &y| b.hairs[x].cmp_height(&b.hairs[y]));
    let mut distinct_heights = true;
    for w in order.windows(2) {
        if b.hairs[w[0]].cmp_height(&b.hairs[w[1]]) == Ordering::Equal {
            distinct_heights = false;
            violations.push(format!("hairs {} and {} share a height", b.hairs[w[0]].id, b.hairs[w[1]].id));
        }
    }
    let nb = |from: usize, to: usize| {
        let (h, g) = (&b.hairs[from], &b.hairs[to]);
        Neighbor { id: g.id.clone(), height_gap: (g.height() - h.height()).abs(), endpoint_gap: (g.t - h.t).abs() }
    };
    let neighbors = order
        .iter()
        .enumerate()
        .map(|(r, &i)| NeighborGap {
            id: b.hairs[i].id.clone(),
            below: (r > 0).then(|| nb(i, order[r - 1])),
            above: (r + 1 < order.len()).then(|| nb(i, order[r + 1])),
        })
        .collect::<Vec<_>>();
    let density = if b.hairs.len() < 2 {
        "not applicable (finite)".to_string()
    } else {
        let max_gap = neighbors.iter().filter_map(|n| n.above.as_ref()).map(|a| a.height_gap).fold(0.0, f64::max);
        format!("approximate: largest neighbour height gap {max_gap:.6}")
    };
    BrushAxiomReport {
        half_lines,
        irrational_heights,
        distinct_heights,
        passed: violations.is_empty(),
        violations,
        neighbors,
        density,
    }
}

/// Crossings of [t_y, ∞) × {y} with ∂(-Q, Q)² for every hair.
pub fn crossings_per_hair(b: &AffineBrush, q: &Rational64) -> Vec<usize> {
    let qb = big(q);
    b.hairs
        .iter()
        .map(|h| {
            // the half-line starts at t_y ≥ 0 > -Q, so only the side t = Q can be met
            if h.height_within(q) && exact(h.t) <= qb {
                1
            } else {
                0
            }
        })
        .collect()
}

pub fn crossing_count(b: &AffineBrush, q: &Rational64) -> usize {
    crossings_per_hair(b, q).into_iter().max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub samples: usize,
    pub defects: usize,
    /// Largest t among defect points; None without defects.
    pub max_defect_t: Option<f64>,
    /// Defect points whose orbit never meets the closed square.
    pub unexplained: usize,
}

/// Whether the orbit of (hair i, t) meets [-Q, Q]² within one hair cycle.
/// Later steps cannot: their thresholds are dominated by earlier ones.
pub fn orbit_meets_closed_square(b: &AffineBrush, i: usize, t: &BigRational) -> bool {
    let lam = exact(b.lambda);
    let q = big(&b.q);
    let t0 = exact(b.hairs[i].t);
    let mut pow = BigRational::one();
    for eta in b.orbit(i, b.hairs.len() + 1) {
        let h = &b.hairs[eta];
        if h.height_within(&b.q) && exact(h.t) + &pow * (t - &t0) <= q {
            return true;
        }
        pow *= &lam;
    }
    false
}

/// Compares brush_map∘π with π∘brush_map exactly on the given points.
pub fn semiconjugacy_defects(b: &AffineBrush, points: &[(usize, f64)]) -> DefectReport {
    let mut rep = DefectReport { samples: points.len(), defects: 0, max_defect_t: None, unexplained: 0 };
    for &(i, t) in points {
        let te = exact(t);
        let (j, a) = brush_map_exact(b, i, &pi_model_exact(b, i, &te));
        let (_, img) = brush_map_exact(b, i, &te);
        let c = pi_model_exact(b, j, &img);
        if a != c {
            rep.defects += 1;
            rep.max_defect_t = Some(rep.max_defect_t.map_or(t, |m: f64| m.max(t)));
            if !orbit_meets_closed_square(b, i, &te) {
                rep.unexplained += 1;
            }
        }
    }
    rep
}

/// Random brush satisfying the axioms: distinct heights p + q√2 with q ≠ 0,
/// dyadic endpoints in [0, 20], Λ ∈ {5/4, 6/4, …, 4}, Q = a/b in [1, 15].
pub fn random_brush<R: Rng>(rng: &mut R, n_hairs: usize) -> AffineBrush {
    let mut hairs: Vec<Hair> = Vec::with_capacity(n_hairs);
    while hairs.len() < n_hairs {
        let den = rng.gen_range(1..=6);
        let mut qn = rng.gen_range(-12..=12);
        if qn == 0 {
            qn = 1;
        }
        let h = Hair {
            id: format!("H{}", hairs.len()),
            p: Rational64::new(rng.gen_range(-60..=60), den),
            q: Rational64::new(qn, rng.gen_range(1..=4)),
            t: rng.gen_range(0..=160) as f64 / 8.0,
        };
        if hairs.iter().all(|g| g.cmp_height(&h) != Ordering::Equal) {
            hairs.push(h);
        }
    }
    let sigma = hairs
        .iter()
        .map(|h| (h.id.clone(), hairs[rng.gen_range(0..n_hairs)].id.clone()))
        .collect();
    let lambda = rng.gen_range(5..=16) as f64 / 4.0;
    let d = rng.gen_range(1..=7);
    let q = Rational64::new(rng.gen_range(d..=15 * d), d);
    AffineBrush::new(hairs, sigma, lambda, q).expect("generated brush is valid")
}

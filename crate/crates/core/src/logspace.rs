//! Logarithmic transforms F with exp∘F = f∘exp, their tracts and inverse
//! branches, and external addresses over the tract index set.

use std::cmp::Ordering;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{FunctionFamily, Kind};

const TAU: f64 = 2.0 * PI;
const ULP_TOL: f64 = 8.0 * f64::EPSILON;

/// Default tract window |k| <= K_MAX for addresses.
pub const K_MAX: i64 = 16;

/// Index of a logarithmic tract. `Exp(k)` is the 2πik-translate of the
/// principal tract. `Pair(sign, m, k)`: `sign` picks the root of
/// a u^2 - e^v u + b = 0 (+1 for the larger modulus), `m` the sheet of
/// z = Log u + 2πim, `k` the 2πik-translate of w = log z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TractId {
    Exp(i64),
    Pair(i8, i64, i64),
}

impl TractId {
    pub fn k(&self) -> i64 {
        match *self {
            TractId::Exp(k) | TractId::Pair(_, _, k) => k,
        }
    }

    pub fn with_k(&self, k: i64) -> TractId {
        match *self {
            TractId::Exp(_) => TractId::Exp(k),
            TractId::Pair(s, m, _) => TractId::Pair(s, m, k),
        }
    }

    /// Key realizing the vertical order of tracts (bottom to top).
    pub fn vertical_key(&self) -> (i64, i64) {
        match *self {
            TractId::Exp(k) => (2 * k, 0),
            TractId::Pair(s, m, k) if s > 0 => (2 * k, m),
            TractId::Pair(_, m, k) => (2 * k + 1, -m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Base {
    Exp,
    Pair { a: Complex64, b: Complex64 },
}

/// The lift F(w) = F₀(w + shift) + c of a family, where F₀ is e^w for the
/// exponential base and the continuous log of ae^z + be^{-z}, z = e^w, for
/// the pair base.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTransform {
    pub family: FunctionFamily,
    pub log_l: f64,
    pub c: Complex64,
    /// Pre-translation; tracts of a domain rescaling by λ sit at T_F - log λ.
    pub shift: Complex64,
    pub margin: f64,
    pub k_max: i64,
    base: Base,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TractHit {
    In(TractId),
    /// `ambiguous` is set when w is within 8 ulps of a tract or sheet boundary.
    NotInTract { ambiguous: bool },
}

impl TractHit {
    pub fn id(&self) -> Option<TractId> {
        match self {
            TractHit::In(t) => Some(*t),
            _ => None,
        }
    }
}

fn decompose(f: &FunctionFamily) -> (Base, Complex64, Complex64) {
    match &f.kind {
        Kind::Exponential { lambda } => (Base::Exp, Complex64::new(0.0, 0.0), lambda.ln()),
        Kind::ExpPair { a, b } => (Base::Pair { a: *a, b: *b }, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        Kind::DomainRescaled { base, lambda } => {
            let (b, s, c) = decompose(base);
            (b, s + lambda.ln(), c)
        }
        Kind::RangeRescaled { base, lambda } => {
            let (b, s, c) = decompose(base);
            (b, s, c + lambda.ln())
        }
    }
}

/// Reduce an angle into (-π, π].
fn wrap(t: f64) -> f64 {
    let r = t - TAU * (t / TAU).round();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

fn band_index(im: f64, center_offset: f64) -> i64 {
    // band (2πk + o - π, 2πk + o + π]
    ((im - center_offset - PI) / TAU).ceil() as i64
}

fn near_band_edge(im: f64, center_offset: f64) -> bool {
    let x = wrap(im - center_offset);
    (PI - x.abs()) <= ULP_TOL * im.abs().max(PI)
}

fn on_cut(z: Complex64) -> bool {
    z.re <= 0.0 && z.im.abs() <= ULP_TOL * z.re.abs()
}

impl LogTransform {
    pub fn new(family: FunctionFamily) -> Result<Self> {
        let (base, shift, c) = decompose(&family);
        let log_l = family.l.ln();
        if let Base::Exp = base {
            if log_l - c.re <= 0.0 {
                return Err(Error::Invalid(format!(
                    "cutoff L = {} must exceed |λ| for an exponential tract",
                    family.l
                )));
            }
        }
        let mut t = LogTransform { family, log_l, c, shift, margin: 0.0, k_max: K_MAX, base };
        t.margin = normalized_margin(&t, 1024);
        Ok(t)
    }

    pub fn with_window(mut self, k_max: i64) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.base, Base::Exp)
    }

    /// Left edge of the contraction half-plane, log L + 8π.
    pub fn contraction_edge(&self) -> f64 {
        self.log_l + 8.0 * PI
    }

    /// Imaginary part at the middle of tract `t`'s band.
    pub fn band_center(&self, t: TractId) -> f64 {
        let o = match t {
            TractId::Pair(s, _, _) if s < 0 => PI,
            _ => 0.0,
        };
        TAU * t.k() as f64 + o - self.shift.im
    }

    /// Tract id of the same shape at translate k.
    pub fn tract(&self, k: i64) -> TractId {
        match self.base {
            Base::Exp => TractId::Exp(k),
            Base::Pair { .. } => TractId::Pair(1, 0, k),
        }
    }
}

/// Sign of the root of a u^2 - (au + b/u) u + b = 0 that u = e^z is.
fn pair_sign(a: Complex64, b: Complex64, z: Complex64) -> i8 {
    let lhs = 2.0 * z.re + a.norm().ln();
    let rhs = b.norm().ln();
    if lhs > rhs {
        1
    } else if lhs < rhs {
        -1
    } else {
        let u = z.exp();
        let other = b / (a * u);
        if u.re >= other.re {
            1
        } else {
            -1
        }
    }
}

/// F₀ for the pair base at z = e^{w'}, continuous on each tract.
fn pair_value(a: Complex64, b: Complex64, z: Complex64, sign: i8) -> Complex64 {
    if sign > 0 {
        a.ln() + z + (1.0 + (b / a) * (-2.0 * z).exp()).ln()
    } else {
        b.ln() - z + (1.0 + (a / b) * (2.0 * z).exp()).ln()
    }
}

pub fn tract_of(f: &LogTransform, w: Complex64) -> TractHit {
    let wp = w + f.shift;
    if !(wp.re < crate::families::EXP_OVERFLOW) || !wp.is_finite() {
        return TractHit::NotInTract { ambiguous: false };
    }
    match f.base {
        Base::Exp => {
            let u = wp.exp();
            let a = f.log_l - f.c.re;
            let tol = ULP_TOL * u.norm().max(a.abs());
            let d = u.re - a;
            if d > tol {
                TractHit::In(TractId::Exp(band_index(wp.im, 0.0)))
            } else if d < -tol {
                TractHit::NotInTract { ambiguous: false }
            } else {
                TractHit::NotInTract { ambiguous: true }
            }
        }
        Base::Pair { a, b } => {
            let z = wp.exp();
            let sign = pair_sign(a, b, z);
            let v = pair_value(a, b, z, sign);
            let tol = ULP_TOL * z.norm().max(f.log_l.abs()).max(1.0);
            let d = v.re + f.c.re - f.log_l;
            if d < -tol {
                return TractHit::NotInTract { ambiguous: false };
            }
            let sheet_edge = PI - wrap(z.im).abs() <= ULP_TOL * z.im.abs().max(PI);
            let off = if sign > 0 { 0.0 } else { PI };
            if d <= tol || sheet_edge || near_band_edge(wp.im, off) {
                return TractHit::NotInTract { ambiguous: true };
            }
            let m = ((z.im - wrap(z.im)) / TAU).round() as i64;
            TractHit::In(TractId::Pair(sign, m, band_index(wp.im, off)))
        }
    }
}

pub fn eval_f(f: &LogTransform, w: Complex64) -> Result<(Complex64, TractId)> {
    let t = match tract_of(f, w) {
        TractHit::In(t) => t,
        TractHit::NotInTract { ambiguous } => {
            return Err(Error::Domain(format!("w = {w} is not in a tract (boundary-ambiguous: {ambiguous})")))
        }
    };
    let wp = w + f.shift;
    let v = match (f.base, t) {
        (Base::Exp, _) => wp.exp(),
        (Base::Pair { a, b }, TractId::Pair(s, _, _)) => pair_value(a, b, wp.exp(), s),
        _ => unreachable!(),
    };
    Ok((v + f.c, t))
}

/// F′(w); defined wherever F₀ is, inside or outside the tracts.
pub fn derivative_f(f: &LogTransform, w: Complex64) -> Complex64 {
    let wp = w + f.shift;
    match f.base {
        Base::Exp => wp.exp(),
        Base::Pair { a, b } => {
            let z = wp.exp();
            let fz = if pair_sign(a, b, z) > 0 {
                let r = (b / a) * (-2.0 * z).exp();
                1.0 - 2.0 * r / (1.0 + r)
            } else {
                let r = (a / b) * (2.0 * z).exp();
                -1.0 + 2.0 * r / (1.0 + r)
            };
            z * fz
        }
    }
}

fn check_id(f: &LogTransform, t: TractId) -> Result<()> {
    match (f.base, t) {
        (Base::Exp, TractId::Exp(_)) => Ok(()),
        (Base::Pair { .. }, TractId::Pair(s, _, _)) if s == 1 || s == -1 => Ok(()),
        _ => Err(Error::Domain(format!("tract id {t:?} does not belong to this transform"))),
    }
}

/// F_T^{-1}: ℍ_{log L} → T in closed form.
pub fn inverse_branch(f: &LogTransform, t: TractId, v: Complex64) -> Result<Complex64> {
    check_id(f, t)?;
    if !(v.re > f.log_l) || !v.is_finite() {
        return Err(Error::Domain(format!("Re v = {} is not above log L = {}", v.re, f.log_l)));
    }
    let vp = v - f.c;
    let k = Complex64::new(0.0, TAU * t.k() as f64);
    let wp = match (f.base, t) {
        (Base::Exp, _) => {
            if on_cut(vp) {
                return Err(Error::BranchCut(format!("v - c = {vp}")));
            }
            vp.ln() + k
        }
        (Base::Pair { a, b }, TractId::Pair(sign, m, _)) => {
            // u = e^{v'} (1 ± r) / (2a) with r = sqrt(1 - 4ab e^{-2v'}), in log form
            let r = (1.0 - 4.0 * a * b * (-2.0 * vp).exp()).sqrt();
            let (p, q) = (1.0 + r, 1.0 - r);
            let big_is_p = match p.norm().partial_cmp(&q.norm()) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Less) => false,
                _ => p.re >= q.re,
            };
            let big = if big_is_p { p } else { q };
            let l_big = vp - a.ln() + (big / 2.0).ln();
            let l = if sign > 0 { l_big } else { b.ln() - a.ln() - l_big };
            let log_u = Complex64::new(l.re, wrap(l.im));
            if PI - log_u.im.abs() <= ULP_TOL * PI {
                return Err(Error::BranchCut(format!("u = exp({log_u}) is on the negative axis")));
            }
            let z = log_u + Complex64::new(0.0, TAU * m as f64);
            if sign > 0 {
                if on_cut(z) {
                    return Err(Error::BranchCut(format!("z = {z}")));
                }
                z.ln() + k
            } else {
                if on_cut(-z) {
                    return Err(Error::BranchCut(format!("-z = {}", -z)));
                }
                (-z).ln() + Complex64::new(0.0, PI) + k
            }
        }
        _ => unreachable!(),
    };
    Ok(wp - f.shift)
}

/// (bound, actual) for |F′(w)| ≥ (Re F(w) - log L)/(4π).
pub fn expansion_lower_bound(f: &LogTransform, w: Complex64) -> Result<(f64, f64)> {
    let (v, _) = eval_f(f, w)?;
    Ok(((v.re - f.log_l) / (4.0 * PI), derivative_f(f, w).norm()))
}

/// inf over sampled tract-boundary points of Re w - (log L + 8π).
pub fn normalized_margin(f: &LogTransform, n_samples: usize) -> f64 {
    let n = n_samples.max(1);
    let delta = 1e-9 * f.log_l.abs().max(1.0);
    let (ids, half_range, cube): (Vec<TractId>, f64, bool) = match f.base {
        Base::Exp => (vec![TractId::Exp(0)], 60.0, true),
        Base::Pair { .. } => {
            let mut ids = Vec::new();
            for s in [1i8, -1] {
                for m in -1..=1 {
                    ids.push(TractId::Pair(s, m, 0));
                }
            }
            (ids, PI, false)
        }
    };
    let mut best = f64::INFINITY;
    for j in 0..n {
        let x = if n == 1 { 0.0 } else { 2.0 * j as f64 / (n - 1) as f64 - 1.0 };
        let x = if cube { x * x * x } else { x };
        let v = Complex64::new(f.log_l + delta, f.c.im + half_range * x);
        for t in &ids {
            if let Ok(w) = inverse_branch(f, *t, v) {
                best = best.min(w.re - f.contraction_edge());
            }
        }
    }
    best
}

/// Eventually periodic external address: prefix followed by the period repeated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAddress")]
pub struct ExternalAddress {
    prefix: Vec<TractId>,
    period: Vec<TractId>,
}

#[derive(Deserialize)]
struct RawAddress {
    prefix: Vec<TractId>,
    period: Vec<TractId>,
}

impl TryFrom<RawAddress> for ExternalAddress {
    type Error = Error;
    fn try_from(r: RawAddress) -> Result<Self> {
        ExternalAddress::new(r.prefix, r.period)
    }
}

impl ExternalAddress {
    /// Canonical form: primitive period, and the prefix does not end with the
    /// period's last entry (so in particular not with a full copy of it).
    pub fn new(mut prefix: Vec<TractId>, mut period: Vec<TractId>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::Invalid("address period must be nonempty".into()));
        }
        let n = period.len();
        if let Some(p) = (1..=n).find(|p| n % p == 0 && (0..n).all(|i| period[i] == period[i % p])) {
            period.truncate(p);
        }
        while let (Some(a), Some(b)) = (prefix.last(), period.last()) {
            if a != b {
                break;
            }
            prefix.pop();
            period.rotate_right(1);
        }
        Ok(ExternalAddress { prefix, period })
    }

    pub fn periodic(period: Vec<TractId>) -> Result<Self> {
        Self::new(Vec::new(), period)
    }

    pub fn prefix(&self) -> &[TractId] {
        &self.prefix
    }

    pub fn period(&self) -> &[TractId] {
        &self.period
    }

    pub fn get(&self, n: usize) -> TractId {
        if n < self.prefix.len() {
            self.prefix[n]
        } else {
            self.period[(n - self.prefix.len()) % self.period.len()]
        }
    }

    pub fn shift(&self) -> ExternalAddress {
        if self.prefix.is_empty() {
            let mut p = self.period.clone();
            p.rotate_left(1);
            ExternalAddress { prefix: Vec::new(), period: p }
        } else {
            ExternalAddress::new(self.prefix[1..].to_vec(), self.period.clone()).expect("nonempty period")
        }
    }

    /// Replace the first entry by its 2πik-translate.
    pub fn translate_first(&self, k: i64) -> ExternalAddress {
        let first = self.get(0);
        let mut prefix = vec![first.with_k(first.k() + k)];
        prefix.extend(self.shift().prefix);
        ExternalAddress::new(prefix, self.shift().period).expect("nonempty period")
    }

    /// Length after which both addresses are periodic with a common period.
    fn horizon(&self, other: &ExternalAddress) -> usize {
        let (a, b) = (self.period.len(), other.period.len());
        let lcm = a / gcd(a, b) * b;
        self.prefix.len().max(other.prefix.len()) + lcm
    }

    pub fn entries(&self) -> impl Iterator<Item = TractId> + '_ {
        (0..).map(move |i| self.get(i))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Addresses are realizable here when all entries belong to the transform and
/// lie in the window |k|, |m| <= k_max.
pub fn validate_address(f: &LogTransform, s: &ExternalAddress) -> Result<()> {
    for t in s.prefix.iter().chain(s.period.iter()) {
        check_id(f, *t).map_err(|_| Error::AddressNotRealized(format!("{t:?} is not a tract of this map")))?;
        let m = match t {
            TractId::Pair(_, m, _) => *m,
            TractId::Exp(_) => 0,
        };
        if t.k().abs() > f.k_max || m.abs() > f.k_max {
            return Err(Error::AddressNotRealized(format!("{t:?} is outside the window {}", f.k_max)));
        }
    }
    Ok(())
}

pub fn address_equiv(s1: &ExternalAddress, s2: &ExternalAddress) -> bool {
    let (a, b) = (s1.get(0), s2.get(0));
    a.with_k(0) == b.with_k(0) && s1.shift() == s2.shift()
}

/// Order by the vertical order of tracts, entry by entry.
pub fn combinatorial_order(s1: &ExternalAddress, s2: &ExternalAddress) -> Ordering {
    for i in 0..s1.horizon(s2) {
        let o = s1.get(i).vertical_key().cmp(&s2.get(i).vertical_key());
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Seed in ℍ_{log L}: (log L + 8π + t) + i·(middle of tract t's band).
pub fn anchor(f: &LogTransform, target: TractId, t: f64) -> Complex64 {
    Complex64::new(f.contraction_edge() + t, f.band_center(target))
}

/// F_{s_0}^{-1} ∘ … ∘ F_{s_{n-1}}^{-1}(seed).
pub fn pullback(f: &LogTransform, s: &ExternalAddress, n: usize, seed: Complex64) -> Result<Complex64> {
    let mut w = seed;
    for j in (0..n).rev() {
        w = inverse_branch(f, s.get(j), w)?;
    }
    Ok(w)
}

/// Anchor offset used to realize the vertical order of hairs.
const ORDER_T: f64 = 10.0;

/// Vertical order of J_s and J_s′, read from Im of depth-n pullbacks with n
/// escalating until the gap exceeds the certified error. Outside the
/// contraction regime, or if floats cannot separate the points, the order
/// falls back to the combinatorial tract order.
pub fn address_order(f: &LogTransform, s1: &ExternalAddress, s2: &ExternalAddress) -> Result<Ordering> {
    validate_address(f, s1)?;
    validate_address(f, s2)?;
    if s1 == s2 {
        return Ok(Ordering::Equal);
    }
    if f.margin < 0.0 {
        return Ok(combinatorial_order(s1, s2));
    }
    let point = |s: &ExternalAddress, n: usize| -> Result<(Complex64, f64)> {
        let p = pullback(f, s, n, anchor(f, s.get(n), ORDER_T))
            .map_err(|e| Error::AddressNotRealized(format!("{e}")))?;
        let q = pullback(f, s, n + 1, anchor(f, s.get(n + 1), ORDER_T))
            .map_err(|e| Error::AddressNotRealized(format!("{e}")))?;
        Ok((p, 2.0 * (p - q).norm()))
    };
    let mut n = 1;
    while n <= 64 {
        let (p1, e1) = point(s1, n)?;
        let (p2, e2) = point(s2, n)?;
        let gap = p1.im - p2.im;
        let res = 16.0 * f64::EPSILON * p1.norm().max(p2.norm());
        if gap.abs() > e1 + e2 + res {
            return Ok(if gap < 0.0 { Ordering::Less } else { Ordering::Greater });
        }
        n *= 2;
    }
    Ok(combinatorial_order(s1, s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{disjoint_type_rescale, evaluate, RescaleMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn exp1() -> LogTransform {
        LogTransform::new(FunctionFamily::exponential(c(1.0, 0.0)).unwrap()).unwrap()
    }

    fn g_exp() -> (Complex64, LogTransform) {
        let (lam, g) = disjoint_type_rescale(&FunctionFamily::exponential(c(1.0, 0.0)).unwrap(), RescaleMode::Domain).unwrap();
        (lam, LogTransform::new(g).unwrap())
    }

    fn pair() -> LogTransform {
        LogTransform::new(FunctionFamily::exp_pair(c(1.0, 0.0), c(1.0, 0.0)).unwrap()).unwrap()
    }

    #[test]
    fn tract_examples() {
        let f = exp1();
        assert_eq!(tract_of(&f, c(1.0, 0.0)), TractHit::In(TractId::Exp(0)));
        assert_eq!(tract_of(&f, c(1.0, TAU)), TractHit::In(TractId::Exp(1)));
        assert_eq!(tract_of(&f, c(0.0, PI)), TractHit::NotInTract { ambiguous: false });
        // exactly on the boundary Re e^w = log 3
        let w = c(3f64.ln().ln(), 0.0);
        assert_eq!(tract_of(&f, w), TractHit::NotInTract { ambiguous: true });
    }

    #[test]
    fn eval_and_inverse_examples() {
        let f = exp1();
        let (v, t) = eval_f(&f, c(1.0, 0.0)).unwrap();
        assert!((v - c(std::f64::consts::E, 0.0)).norm() < 1e-15);
        assert_eq!(t, TractId::Exp(0));
        let w = inverse_branch(&f, TractId::Exp(1), c(2.0, 0.0)).unwrap();
        assert!((w - c(2f64.ln(), TAU)).norm() < 1e-15);
        let w = inverse_branch(&f, TractId::Exp(0), c(std::f64::consts::E, 0.0)).unwrap();
        assert!((w - c(1.0, 0.0)).norm() < 1e-15);
        assert!(matches!(eval_f(&f, c(0.0, PI)), Err(Error::Domain(_))));
        assert!(matches!(inverse_branch(&f, TractId::Exp(0), c(1.0, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(inverse_branch(&f, TractId::Pair(1, 0, 0), c(5.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn exponential_lambda_closed_form() {
        let lam = c(0.1, 0.05);
        let f = LogTransform::new(FunctionFamily::exponential(lam).unwrap()).unwrap();
        let w = (1.0 / lam).ln();
        let (v, _) = eval_f(&f, w).unwrap();
        assert!((v - (1.0 / lam + lam.ln())).norm() < 1e-13);
        // e^w = 1 gives 1 + Log λ
        let f = LogTransform::new(FunctionFamily::exponential(c(3.0, 0.0)).unwrap().with_kl(1.0, 4.0).unwrap()).unwrap();
        let (v, _) = eval_f(&f, c(0.0, 0.0)).unwrap();
        assert!((v - (1.0 + 3f64.ln())).norm() < 1e-15);
    }

    #[test]
    fn expansion_examples() {
        let f = exp1();
        let (b, a) = expansion_lower_bound(&f, c(1.0, 0.0)).unwrap();
        assert!((b - (std::f64::consts::E - 3f64.ln()) / (4.0 * PI)).abs() < 1e-15);
        assert!((b - 0.1288).abs() < 1e-4);
        assert!((a - std::f64::consts::E).abs() < 1e-15);
        // Re F = log L + 8π gives bound 2
        let w = inverse_branch(&f, TractId::Exp(0), c(f.contraction_edge(), 0.3)).unwrap();
        let (b, a) = expansion_lower_bound(&f, w).unwrap();
        assert!((b - 2.0).abs() < 1e-12 && a >= 2.0);
    }

    #[test]
    fn margins() {
        let f = exp1();
        let (lam, g) = g_exp();
        assert!(g.margin > 0.0, "{}", g.margin);
        assert!(f.margin < 0.0);
        // shift by -log λ exactly
        let d = g.margin - f.margin;
        assert!((d + lam.re.ln()).abs() < 1e-12, "{d}");
        assert!((g.margin - 3f64.ln().ln()).abs() < 1e-6);
        assert!(pair().margin < 0.0);
    }

    #[test]
    fn pair_round_trip_and_semiconjugacy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (a, b) in [(c(1.0, 0.0), c(1.0, 0.0)), (c(0.5, 0.2), c(-0.3, 0.4))] {
            let fam = FunctionFamily::exp_pair(a, b).unwrap();
            let f = LogTransform::new(fam.clone()).unwrap();
            let mut hits = [0usize; 2];
            for _ in 0..4000 {
                let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
                let t = TractId::Pair(sign, rng.gen_range(-3..=3), rng.gen_range(-3..=3));
                let v = c(f.log_l + rng.gen_range(0.01..30.0), rng.gen_range(-20.0..20.0));
                let w = match inverse_branch(&f, t, v) {
                    Ok(w) => w,
                    Err(Error::BranchCut(_)) => continue,
                    Err(e) => panic!("{e}"),
                };
                assert_eq!(tract_of(&f, w), TractHit::In(t), "v = {v}");
                let (v2, _) = eval_f(&f, w).unwrap();
                assert!((v2.exp() / v.exp() - 1.0).norm() < 1e-9);
                let w2 = inverse_branch(&f, t, v2).unwrap();
                assert!((w2 - w).norm() < 1e-10 * (1.0 + w.norm()));
                let fz = evaluate(&fam, w.exp()).expect_finite();
                assert!((v2.exp() - fz).norm() < 1e-10 * fz.norm());
                hits[(sign < 0) as usize] += 1;
            }
            assert!(hits[0] > 1000 && hits[1] > 1000);
        }
    }

    #[test]
    fn pair_branch_cut_reported() {
        let f = pair();
        // e^v = -100.01 = f(z) for e^z = -100, so the larger root u is negative real
        let v = c(100.01f64.ln(), PI);
        assert!(matches!(inverse_branch(&f, TractId::Pair(1, 0, 0), v), Err(Error::BranchCut(_))));
    }

    #[test]
    fn exp_translation_equivariance() {
        let f = exp1();
        let v = c(5.0, 1.0);
        let a = inverse_branch(&f, TractId::Exp(3), v).unwrap();
        let b = inverse_branch(&f, TractId::Exp(4), v).unwrap();
        assert!((b - a - c(0.0, TAU)).norm() < 1e-13);
    }

    #[test]
    fn address_normalization() {
        let e = TractId::Exp;
        let s = ExternalAddress::new(vec![e(0)], vec![e(0)]).unwrap();
        assert_eq!(s, ExternalAddress::periodic(vec![e(0)]).unwrap());
        let s = ExternalAddress::new(vec![e(2), e(0), e(1)], vec![e(0), e(1), e(0), e(1)]).unwrap();
        assert_eq!(s.prefix(), &[e(2)]);
        assert_eq!(s.period(), &[e(0), e(1)]);
        assert_eq!((0..6).map(|i| s.get(i)).collect::<Vec<_>>(), vec![e(2), e(0), e(1), e(0), e(1), e(0)]);
        assert!(ExternalAddress::new(vec![e(1)], vec![]).is_err());
    }

    #[test]
    fn address_json() {
        let s = ExternalAddress::new(vec![TractId::Exp(3)], vec![TractId::Exp(0), TractId::Exp(-1)]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"prefix":[3],"period":[0,-1]}"#);
        let p: ExternalAddress = serde_json::from_str(r#"{"prefix":[[1,0,2]],"period":[[-1,1,0]]}"#).unwrap();
        assert_eq!(p.get(0), TractId::Pair(1, 0, 2));
        assert_eq!(p.get(5), TractId::Pair(-1, 1, 0));
        // deserialization canonicalizes
        let q: ExternalAddress = serde_json::from_str(r#"{"prefix":[0,0],"period":[0]}"#).unwrap();
        assert!(q.prefix().is_empty());
    }

    #[test]
    fn equivalence_examples() {
        let e = TractId::Exp;
        let s1 = ExternalAddress::new(vec![e(0)], vec![e(1)]).unwrap();
        let s2 = ExternalAddress::new(vec![e(1)], vec![e(1)]).unwrap();
        assert!(address_equiv(&s1, &s2));
        assert!(address_equiv(&s1, &s1));
        assert!(address_equiv(&s1, &s1.translate_first(-5)));
        let s3 = ExternalAddress::new(vec![e(0), e(2)], vec![e(1)]).unwrap();
        assert!(!address_equiv(&s1, &s3));
    }

    #[test]
    fn order_examples() {
        let (_, g) = g_exp();
        let zero = ExternalAddress::periodic(vec![TractId::Exp(0)]).unwrap();
        let one = ExternalAddress::periodic(vec![TractId::Exp(1)]).unwrap();
        assert_eq!(address_order(&g, &zero, &one).unwrap(), Ordering::Less);
        assert_eq!(address_order(&g, &one, &zero).unwrap(), Ordering::Greater);
        assert_eq!(address_order(&g, &one, &one).unwrap(), Ordering::Equal);
        let far = ExternalAddress::periodic(vec![TractId::Exp(17)]).unwrap();
        assert!(matches!(address_order(&g, &zero, &far), Err(Error::AddressNotRealized(_))));
        let wrong = ExternalAddress::periodic(vec![TractId::Pair(1, 0, 0)]).unwrap();
        assert_eq!(address_order(&g, &zero, &wrong).unwrap_err().kind(), "AddressNotRealized");
    }

    fn random_address(rng: &mut ChaCha8Rng, span: i64) -> ExternalAddress {
        let pre = (0..rng.gen_range(0..4)).map(|_| TractId::Exp(rng.gen_range(-span..=span))).collect();
        let per = (0..rng.gen_range(1..4)).map(|_| TractId::Exp(rng.gen_range(-span..=span))).collect();
        ExternalAddress::new(pre, per).unwrap()
    }

    #[test]
    fn numeric_order_matches_lexicographic_oracle() {
        let (_, g) = g_exp();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let s1 = random_address(&mut rng, 2);
            let s2 = random_address(&mut rng, 2);
            // oracle: lexicographic order on k
            let lex = s1.entries().take(12).map(|t| t.k()).cmp(s2.entries().take(12).map(|t| t.k()));
            let o = address_order(&g, &s1, &s2).unwrap();
            assert_eq!(o, lex, "{s1:?} {s2:?}");
            assert_eq!(address_order(&g, &s2, &s1).unwrap(), o.reverse());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(256))]

            #[test]
            fn exp_round_trip(k in -16i64..=16, x in 0.01f64..40.0, y in -30.0f64..30.0) {
                let f = exp1();
                let v = c(f.log_l + x, y);
                let w = inverse_branch(&f, TractId::Exp(k), v).unwrap();
                prop_assert_eq!(tract_of(&f, w), TractHit::In(TractId::Exp(k)));
                let (v2, _) = eval_f(&f, w).unwrap();
                prop_assert!((v2 - v).norm() < 1e-10 * (1.0 + v.norm()));
            }

            #[test]
            fn expansion_holds(x in 0.0f64..40.0, y in -30.0f64..30.0) {
                for f in [exp1(), g_exp().1, pair()] {
                    let t = f.tract(0);
                    let w = inverse_branch(&f, t, c(f.log_l + 1e-6 + x, y)).unwrap();
                    let (b, a) = expansion_lower_bound(&f, w).unwrap();
                    prop_assert!(a >= b - 8.0 * f64::EPSILON * b.abs());
                }
            }

            #[test]
            fn tract_stable_under_perturbation(x in 0.01f64..20.0, y in -20.0f64..20.0, k in -5i64..5) {
                let f = exp1();
                let w = inverse_branch(&f, TractId::Exp(k), c(f.log_l + x, y)).unwrap();
                let h = tract_of(&f, w);
                for d in [c(8.0 * f64::EPSILON * w.norm(), 0.0), c(0.0, 8.0 * f64::EPSILON * w.norm())] {
                    let h2 = tract_of(&f, w + d);
                    if let (TractHit::In(a), TractHit::In(b)) = (h, h2) {
                        prop_assert_eq!(a, b);
                    }
                }
            }

            #[test]
            fn canonical_form_is_idempotent(pre in proptest::collection::vec(-3i64..3, 0..5), per in proptest::collection::vec(-3i64..3, 1..5)) {
                let s = ExternalAddress::new(pre.iter().map(|k| TractId::Exp(*k)).collect(), per.iter().map(|k| TractId::Exp(*k)).collect()).unwrap();
                let again = ExternalAddress::new(s.prefix().to_vec(), s.period().to_vec()).unwrap();
                prop_assert_eq!(&again, &s);
                // same sequence as the raw input
                let raw = |i: usize| if i < pre.len() { pre[i] } else { per[(i - pre.len()) % per.len()] };
                for i in 0..20 {
                    prop_assert_eq!(s.get(i).k(), raw(i));
                }
            }
        }
    }
}

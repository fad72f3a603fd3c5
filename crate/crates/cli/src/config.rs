//! Run configuration, read from JSON. Every field has a default, so `{}` is a
//! valid config describing the disjoint-type rescaling of exp.

use bouquet::brushmodel::AffineBrush;
use bouquet::families::Kind;
use bouquet::{disjoint_type_rescale, BrushPoint, Complex64, Error, ExternalAddress, FunctionFamily, RescaleMode, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    #[serde(flatten)]
    pub kind: Kind,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
}

impl Default for FamilyDescriptor {
    fn default() -> Self {
        FamilyDescriptor { kind: Kind::Exponential { lambda: Complex64::new(1.0, 0.0) }, k: None, l: None }
    }
}

impl FamilyDescriptor {
    pub fn build(&self) -> Result<FunctionFamily> {
        let f = match &self.kind {
            Kind::Exponential { lambda } => FunctionFamily::exponential(*lambda)?,
            Kind::ExpPair { a, b } => FunctionFamily::exp_pair(*a, *b)?,
            Kind::DomainRescaled { base, lambda } => FunctionFamily::domain_rescaled((**base).clone(), *lambda)?,
            Kind::RangeRescaled { base, lambda } => FunctionFamily::range_rescaled((**base).clone(), *lambda)?,
        };
        if self.k.is_none() && self.l.is_none() {
            return Ok(f);
        }
        let (k, l) = (self.k.unwrap_or(f.k), self.l.unwrap_or(f.l));
        f.with_kl(k, l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub tol: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { t_min: 0.0, t_max: 12.0, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionSettings {
    /// log R for S_R = Disc(0, R).
    pub log_r: f64,
    pub n_max: usize,
    pub t_tol: f64,
    /// Points projected per tail.
    pub samples: usize,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        ProjectionSettings { log_r: 31.0, n_max: 20, t_tol: 1e-9, samples: 24 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConjugacySettings {
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub depth: usize,
    pub samples: usize,
    /// Use λ = 1, where the conjugacy is the identity.
    pub identity: bool,
}

impl Default for ConjugacySettings {
    fn default() -> Self {
        ConjugacySettings { q: None, depth: 40, samples: 200, identity: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Plane rectangle of the traced map. Defaults to a window around the
    /// endpoints of the hairs near the positive real axis.
    pub viewport: Option<Viewport>,
    pub width: u32,
    pub height: u32,
    pub horizon: usize,
    /// Escape radius; defaults to L of the traced map.
    pub radius: Option<f64>,
    pub scheme: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { viewport: None, width: 256, height: 255, horizon: 24, radius: None, scheme: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrushConfig {
    pub brush: AffineBrush,
    pub points: Vec<BrushPoint>,
    /// z_n table depth.
    pub n: usize,
}

impl Default for BrushConfig {
    fn default() -> Self {
        let p = |h: &str, t: f64| BrushPoint { hair: h.into(), t };
        BrushConfig {
            brush: AffineBrush::worked_instance(),
            points: vec![p("H1", 10.0), p("H1", 10.2), p("H1", 11.5), p("H1", 12.0), p("H2", 0.0), p("H2", 1.0), p("H2", 3.0)],
            n: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub family: FamilyDescriptor,
    /// Replaces L of the family after construction.
    #[serde(rename = "L_override", skip_serializing_if = "Option::is_none")]
    pub l_override: Option<f64>,
    /// Rays and projections live on this rescaling; `null` uses the family as given.
    pub rescale: Option<RescaleMode>,
    pub addresses: Vec<ExternalAddress>,
    pub trace: TraceConfig,
    pub projection: ProjectionSettings,
    pub conjugacy: ConjugacySettings,
    pub render: RenderConfig,
    pub brush: BrushConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = |pre: Vec<i64>, per: Vec<i64>| {
            ExternalAddress::new(pre.into_iter().map(bouquet::TractId::Exp).collect(), per.into_iter().map(bouquet::TractId::Exp).collect())
                .expect("nonempty period")
        };
        RunConfig {
            family: FamilyDescriptor::default(),
            l_override: None,
            rescale: Some(RescaleMode::Domain),
            addresses: vec![a(vec![], vec![0]), a(vec![1], vec![0]), a(vec![], vec![1, -1])],
            trace: TraceConfig::default(),
            projection: ProjectionSettings::default(),
            conjugacy: ConjugacySettings::default(),
            render: RenderConfig::default(),
            brush: BrushConfig::default(),
            output_dir: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.trace;
        if !(t.tol > 0.0) || !(t.t_min >= 0.0 && t.t_min <= t.t_max) {
            return Err(Error::Invalid("trace window needs 0 ≤ t_min ≤ t_max and tol > 0".into()));
        }
        if !(self.projection.t_tol > 0.0) || self.projection.n_max < 1 {
            return Err(Error::Invalid("projection needs t_tol > 0 and n_max ≥ 1".into()));
        }
        let r = &self.render;
        if r.width < 1 || r.height < 1 {
            return Err(Error::Invalid("render dimensions must be at least 1".into()));
        }
        if let Some(v) = &r.viewport {
            if !(v.re_max > v.re_min && v.im_max > v.im_min) {
                return Err(Error::Invalid("viewport must have positive area".into()));
            }
        }
        if matches!(r.radius, Some(x) if !(x > 0.0)) {
            return Err(Error::Invalid("escape radius must be positive".into()));
        }
        self.brush.brush.validate()
    }

    /// The family as configured, before any rescaling.
    pub fn base_family(&self) -> Result<FunctionFamily> {
        let f = self.family.build()?;
        match self.l_override {
            Some(l) => {
                let k = f.k;
                f.with_kl(k, l)
            }
            None => Ok(f),
        }
    }

    /// The map whose hairs are traced.
    pub fn traced_family(&self) -> Result<FunctionFamily> {
        let f = self.base_family()?;
        match self.rescale {
            Some(mode) => Ok(disjoint_type_rescale(&f, mode)?.1),
            None => Ok(f),
        }
    }

    /// SHA-256 of the canonical JSON form, with the output directory left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

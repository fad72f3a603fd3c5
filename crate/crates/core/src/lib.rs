//! Logarithmic transforms, dynamic rays, brush projections and near-infinity
//! conjugacies for exponential-type maps in the Eremenko–Lyubich class.

pub mod brushmodel;
pub mod conjugacy;
pub mod error;
pub mod families;
pub mod logspace;
pub mod projection;
pub mod rays;
pub mod region;

pub use error::{Error, Result};
pub use families::{
    derivative, disjoint_type_rescale, evaluate, singular_bound, verify_disjoint_type,
    DisjointTypeCertificate, Eval, FunctionFamily, Kind, RescaleMode,
};
pub use num_complex::Complex64;
pub use region::{exp_image, region_contains, ErrorBudget, Region};
pub use logspace::{
    address_equiv, address_order, eval_f, expansion_lower_bound, inverse_branch, normalized_margin,
    tract_of, ExternalAddress, LogTransform, TractHit, TractId,
};
pub use rays::{
    criniferous_pipeline, endpoint, escape_test, headstart_check, pullback_point, ray_point, trace_tail,
    EscapeVerdict, HairTail, HeadStart, RayPoint,
};
pub use conjugacy::{
    address_correspondence, theta_log, theta_plane, verify_conjugacy, ConjugacyMap, ConjugacyReport,
};
pub use brushmodel::{
    brush_map, check_brush_axioms, crossing_count, pi_model, zn_oracle, AffineBrush, BrushPoint,
};
pub use projection::{commutation_defect, project_pi, project_pi_n, ProjectionConfig, ProjectionResult};

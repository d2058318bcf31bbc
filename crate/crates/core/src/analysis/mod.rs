//! Checks of the structural assumptions and the analytic constants they feed:
//! weight admissibility, the weighted Sobolev constant, the Lipschitz bound of
//! the reaction, volume growth of geodesic balls and the iteration lemma.

mod iteration;
mod lipschitz;
mod sobolev;
mod volume;
mod weight;

pub use iteration::{iteration_lemma_verdict, ChainLink, IterationVerdict, Ladder, Violation, G_TOL};
pub use lipschitz::{lipschitz_probe, Reaction, ReactionSpec, LIPSCHITZ_SAFETY};
pub use sobolev::{
    sobolev_constant_estimate, sobolev_exponent, SobolevEstimate, TrialFamily, TrialQuotient, SOBOLEV_MARGIN,
};
pub use volume::{
    geodesic_ball_volume, geodesic_distance_field, volume_growth_fit, DistanceField, GrowthFit, GAMMA_FLOOR,
    MESH_RATIO,
};
pub use weight::{weight_admissibility, FiberQuadrature, Weight, WeightSpec, OVERFLOW_CAP};

//! Parametric curves and surfaces with frames, curvatures and fundamental forms.

mod builtin;
mod curve;
mod surface;

pub use builtin::{
    arctan_spiral, circle, cylinder, helix, line, plane, sphere, torus, Base, Manifold,
    ManifoldSpec,
};
pub use curve::{
    arc_length_reparametrize, frenet_frame, left_normal, plane_curvature, Curve, CurveFn,
    FrenetFrame, PlaneCurve, SpaceCurve, H_GEO, KAPPA_MIN,
};
pub use surface::{fundamental_forms, FundamentalForms, ParamSurface, SurfaceFn, SurfacePartials};

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::curve::{PlaneCurve, SpaceCurve};
use super::surface::{ParamSurface, SurfacePartials};
use crate::{Error, Result};

fn one() -> f64 {
    1.0
}

fn torus_major() -> f64 {
    2.0
}

fn torus_minor() -> f64 {
    0.5
}

/// Named example manifolds.
///
/// | id | parameters | base |
/// |----|------------|------|
/// | `circle` | `radius` (1) | plane curve, arc length, periodic |
/// | `line` | none | plane curve on `[-10, 10]` |
/// | `parallel-lines` | `distance` (1) | two lines `y = 0`, `y = distance` |
/// | `helix` | `a`, `b` (1, 1) | space curve, arc length |
/// | `arctan-spiral` | none | `(sin x, cos x, arctan x)`, not arc length |
/// | `sphere` | `radius` (1) | surface in (azimuth, polar) |
/// | `cylinder` | `radius` (1) | surface in (height, angle) |
/// | `torus` | `major`, `minor` (2, 0.5) | surface, doubly periodic |
/// | `plane` | none | surface `z = 0` on `[-5, 5]^2` |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Circle {
        #[serde(default = "one")]
        radius: f64,
    },
    Line,
    ParallelLines {
        #[serde(default = "one")]
        distance: f64,
    },
    Helix {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
    },
    ArctanSpiral,
    Sphere {
        #[serde(default = "one")]
        radius: f64,
    },
    Cylinder {
        #[serde(default = "one")]
        radius: f64,
    },
    Torus {
        #[serde(default = "torus_major")]
        major: f64,
        #[serde(default = "torus_minor")]
        minor: f64,
    },
    Plane,
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Circle { radius } => write!(f, "circle:radius={radius}"),
            Self::Line => write!(f, "line"),
            Self::ParallelLines { distance } => write!(f, "parallel-lines:distance={distance}"),
            Self::Helix { a, b } => write!(f, "helix:a={a},b={b}"),
            Self::ArctanSpiral => write!(f, "arctan-spiral"),
            Self::Sphere { radius } => write!(f, "sphere:radius={radius}"),
            Self::Cylinder { radius } => write!(f, "cylinder:radius={radius}"),
            Self::Torus { major, minor } => write!(f, "torus:major={major},minor={minor}"),
            Self::Plane => write!(f, "plane"),
        }
    }
}

impl std::str::FromStr for ManifoldSpec {
    type Err = Error;

    /// Parses `id` or `id:key=value,key=value`.
    fn from_str(s: &str) -> Result<Self> {
        let (id, params) = match s.split_once(':') {
            Some((id, rest)) => (id.trim(), rest),
            None => (s.trim(), ""),
        };
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), serde_json::Value::String(id.to_string()));
        for kv in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::UnknownManifold(format!("malformed parameter '{kv}' in '{s}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::UnknownManifold(format!("non-numeric parameter '{kv}' in '{s}'")))?;
            obj.insert(k.trim().to_string(), serde_json::json!(v));
        }
        let spec: ManifoldSpec = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::UnknownManifold(format!("{s}: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            Self::Circle { radius } | Self::Sphere { radius } | Self::Cylinder { radius } => {
                positive("radius", radius)
            }
            Self::ParallelLines { distance } => positive("distance", distance),
            Self::Helix { a, b } => {
                positive("a", a)?;
                if b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("b must be finite".into()))
                }
            }
            Self::Torus { major, minor } => {
                positive("minor", minor)?;
                if major > minor {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("torus needs major > minor".into()))
                }
            }
            Self::Line | Self::ArctanSpiral | Self::Plane => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Manifold> {
        self.validate()?;
        let components = match *self {
            Self::Circle { radius } => vec![Base::Plane(circle(radius))],
            Self::Line => vec![Base::Plane(line(0.0))],
            Self::ParallelLines { distance } => {
                vec![Base::Plane(line(0.0)), Base::Plane(line(distance))]
            }
            Self::Helix { a, b } => vec![Base::Space(helix(a, b))],
            Self::ArctanSpiral => vec![Base::Space(arctan_spiral())],
            Self::Sphere { radius } => vec![Base::Surface(sphere(radius))],
            Self::Cylinder { radius } => vec![Base::Surface(cylinder(radius))],
            Self::Torus { major, minor } => vec![Base::Surface(torus(major, minor))],
            Self::Plane => vec![Base::Surface(plane())],
        };
        Ok(Manifold {
            spec: self.clone(),
            components,
        })
    }
}

/// One connected piece of a submanifold.
#[derive(Debug, Clone)]
pub enum Base {
    Plane(PlaneCurve),
    Space(SpaceCurve),
    Surface(ParamSurface),
}

impl Base {
    pub fn base_dim(&self) -> usize {
        match self {
            Base::Plane(_) | Base::Space(_) => 1,
            Base::Surface(_) => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Base::Plane(_) => 2,
            Base::Space(_) | Base::Surface(_) => 3,
        }
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.base_dim()
    }

    pub fn name(&self) -> &str {
        match self {
            Base::Plane(c) => c.name(),
            Base::Space(c) => c.name(),
            Base::Surface(s) => s.name(),
        }
    }

    /// Parameter box, one interval per base direction.
    pub fn domain(&self) -> Vec<(f64, f64)> {
        match self {
            Base::Plane(c) => vec![c.domain()],
            Base::Space(c) => vec![c.domain()],
            Base::Surface(s) => s.domain().to_vec(),
        }
    }

    pub fn periodic(&self) -> Vec<bool> {
        match self {
            Base::Plane(c) => vec![c.is_periodic()],
            Base::Space(c) => vec![c.is_periodic()],
            Base::Surface(s) => s.periodicity().to_vec(),
        }
    }

    /// Restrict the parameter box (a window on a curve, a patch on a surface).
    pub fn restrict(&self, window: &[(f64, f64)]) -> Result<Base> {
        if window.len() != self.base_dim() {
            return Err(Error::InvalidInput(format!(
                "window needs {} intervals, got {}",
                self.base_dim(),
                window.len()
            )));
        }
        for &(a, b) in window {
            if !(b > a) {
                return Err(Error::InvalidInput(format!("empty window [{a}, {b}]")));
            }
        }
        Ok(match self {
            Base::Plane(c) => Base::Plane(c.clone().with_domain(window[0]).periodic(false)),
            Base::Space(c) => Base::Space(c.clone().with_domain(window[0]).periodic(false)),
            Base::Surface(s) => {
                let mut per = s.periodicity();
                let dom = s.domain();
                for d in 0..2 {
                    per[d] = per[d] && dom[d] == window[d];
                }
                Base::Surface(s.clone().with_domain([window[0], window[1]]).periodic(per))
            }
        })
    }

    /// Embedded point for base parameters `x`.
    pub fn point(&self, x: &[f64]) -> Vector3<f64> {
        match self {
            Base::Plane(c) => {
                let p = c.position(x[0]);
                Vector3::new(p.x, p.y, 0.0)
            }
            Base::Space(c) => c.position(x[0]),
            Base::Surface(s) => s.position(x[0], x[1]),
        }
    }
}

/// A submanifold given as a union of parametrized components.
#[derive(Debug, Clone)]
pub struct Manifold {
    pub spec: ManifoldSpec,
    pub components: Vec<Base>,
}

impl Manifold {
    /// The unique component, for operations defined on a single chart.
    pub fn single(&self) -> Result<&Base> {
        match self.components.as_slice() {
            [b] => Ok(b),
            _ => Err(Error::UnsupportedBase(format!(
                "{} has {} components; a single chart is required",
                self.spec,
                self.components.len()
            ))),
        }
    }
}

pub fn circle(r: f64) -> PlaneCurve {
    PlaneCurve::new(format!("circle(r={r})"), (0.0, 2.0 * PI * r), move |s| {
        r * Vector2::new((s / r).cos(), (s / r).sin())
    })
    .with_derivatives(
        move |s| Vector2::new(-(s / r).sin(), (s / r).cos()),
        move |s| -Vector2::new((s / r).cos(), (s / r).sin()) / r,
        move |s| Vector2::new((s / r).sin(), -(s / r).cos()) / (r * r),
    )
    .periodic(true)
}

pub fn line(offset: f64) -> PlaneCurve {
    PlaneCurve::new(format!("line(y={offset})"), (-10.0, 10.0), move |s| {
        Vector2::new(s, offset)
    })
    .with_derivatives(
        |_| Vector2::new(1.0, 0.0),
        |_| Vector2::zeros(),
        |_| Vector2::zeros(),
    )
}

/// Unit-speed helix `(a cos(s/c), a sin(s/c), b s/c)` with `c = sqrt(a^2 + b^2)`.
pub fn helix(a: f64, b: f64) -> SpaceCurve {
    let c = (a * a + b * b).sqrt();
    SpaceCurve::new(format!("helix(a={a},b={b})"), (0.0, 4.0 * PI * c), move |s| {
        let w = s / c;
        Vector3::new(a * w.cos(), a * w.sin(), b * w)
    })
    .with_derivatives(
        move |s| {
            let w = s / c;
            Vector3::new(-a * w.sin(), a * w.cos(), b) / c
        },
        move |s| {
            let w = s / c;
            Vector3::new(-a * w.cos(), -a * w.sin(), 0.0) / (c * c)
        },
        move |s| {
            let w = s / c;
            Vector3::new(a * w.sin(), -a * w.cos(), 0.0) / (c * c * c)
        },
    )
}

pub fn arctan_spiral() -> SpaceCurve {
    SpaceCurve::new("arctan-spiral", (0.0, 60.0), |x| {
        Vector3::new(x.sin(), x.cos(), x.atan())
    })
    .with_derivatives(
        |x| Vector3::new(x.cos(), -x.sin(), 1.0 / (1.0 + x * x)),
        |x| {
            let q = 1.0 + x * x;
            Vector3::new(-x.sin(), -x.cos(), -2.0 * x / (q * q))
        },
        |x| {
            let q = 1.0 + x * x;
            Vector3::new(-x.cos(), x.sin(), (6.0 * x * x - 2.0) / (q * q * q))
        },
    )
}

fn surface_partials(
    d1: impl Fn(f64, f64) -> Vector3<f64> + Send + Sync + 'static,
    d2: impl Fn(f64, f64) -> Vector3<f64> + Send + Sync + 'static,
    d11: impl Fn(f64, f64) -> Vector3<f64> + Send + Sync + 'static,
    d12: impl Fn(f64, f64) -> Vector3<f64> + Send + Sync + 'static,
    d22: impl Fn(f64, f64) -> Vector3<f64> + Send + Sync + 'static,
) -> SurfacePartials {
    use std::sync::Arc;
    SurfacePartials {
        first: [Arc::new(d1), Arc::new(d2)],
        second: [Arc::new(d11), Arc::new(d12), Arc::new(d22)],
    }
}

/// Sphere in (azimuth, polar) coordinates; the normal `d1 x d2` points inward.
pub fn sphere(r: f64) -> ParamSurface {
    ParamSurface::new(
        format!("sphere(r={r})"),
        [(0.0, 2.0 * PI), (0.2, PI - 0.2)],
        move |u, v| r * Vector3::new(v.sin() * u.cos(), v.sin() * u.sin(), v.cos()),
    )
    .with_partials(surface_partials(
        move |u, v| r * Vector3::new(-v.sin() * u.sin(), v.sin() * u.cos(), 0.0),
        move |u, v| r * Vector3::new(v.cos() * u.cos(), v.cos() * u.sin(), -v.sin()),
        move |u, v| r * Vector3::new(-v.sin() * u.cos(), -v.sin() * u.sin(), 0.0),
        move |u, v| r * Vector3::new(-v.cos() * u.sin(), v.cos() * u.cos(), 0.0),
        move |u, v| -r * Vector3::new(v.sin() * u.cos(), v.sin() * u.sin(), v.cos()),
    ))
    .periodic([true, false])
}

/// Cylinder in (height, angle) coordinates; the normal points toward the axis.
pub fn cylinder(r: f64) -> ParamSurface {
    ParamSurface::new(
        format!("cylinder(r={r})"),
        [(-5.0, 5.0), (0.0, 2.0 * PI)],
        move |z, t| Vector3::new(r * t.cos(), r * t.sin(), z),
    )
    .with_partials(surface_partials(
        |_, _| Vector3::new(0.0, 0.0, 1.0),
        move |_, t| Vector3::new(-r * t.sin(), r * t.cos(), 0.0),
        |_, _| Vector3::zeros(),
        |_, _| Vector3::zeros(),
        move |_, t| Vector3::new(-r * t.cos(), -r * t.sin(), 0.0),
    ))
    .periodic([false, true])
}

pub fn torus(major: f64, minor: f64) -> ParamSurface {
    let (big, r) = (major, minor);
    ParamSurface::new(
        format!("torus(R={big},r={r})"),
        [(0.0, 2.0 * PI), (0.0, 2.0 * PI)],
        move |u, v| {
            let w = big + r * v.cos();
            Vector3::new(w * u.cos(), w * u.sin(), r * v.sin())
        },
    )
    .with_partials(surface_partials(
        move |u, v| {
            let w = big + r * v.cos();
            Vector3::new(-w * u.sin(), w * u.cos(), 0.0)
        },
        move |u, v| Vector3::new(-r * v.sin() * u.cos(), -r * v.sin() * u.sin(), r * v.cos()),
        move |u, v| {
            let w = big + r * v.cos();
            Vector3::new(-w * u.cos(), -w * u.sin(), 0.0)
        },
        move |u, v| Vector3::new(r * v.sin() * u.sin(), -r * v.sin() * u.cos(), 0.0),
        move |u, v| Vector3::new(-r * v.cos() * u.cos(), -r * v.cos() * u.sin(), -r * v.sin()),
    ))
    .periodic([true, true])
}

pub fn plane() -> ParamSurface {
    ParamSurface::new("plane", [(-5.0, 5.0), (-5.0, 5.0)], |u, v| {
        Vector3::new(u, v, 0.0)
    })
    .with_partials(surface_partials(
        |_, _| Vector3::new(1.0, 0.0, 0.0),
        |_, _| Vector3::new(0.0, 1.0, 0.0),
        |_, _| Vector3::zeros(),
        |_, _| Vector3::zeros(),
        |_, _| Vector3::zeros(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_ids() {
        assert_eq!("circle".parse::<ManifoldSpec>().unwrap(), ManifoldSpec::Circle { radius: 1.0 });
        assert_eq!(
            "helix:a=2,b=0.5".parse::<ManifoldSpec>().unwrap(),
            ManifoldSpec::Helix { a: 2.0, b: 0.5 }
        );
        assert!(matches!("klein-bottle".parse::<ManifoldSpec>(), Err(Error::UnknownManifold(_))));
        assert!("circle:radius=-1".parse::<ManifoldSpec>().is_err());
        for spec in [
            ManifoldSpec::Torus { major: 3.0, minor: 1.0 },
            ManifoldSpec::ArctanSpiral,
            ManifoldSpec::ParallelLines { distance: 0.5 },
        ] {
            assert_eq!(spec.to_string().parse::<ManifoldSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn json_form() {
        let s: ManifoldSpec = serde_json::from_str(r#"{"id":"sphere","radius":2}"#).unwrap();
        assert_eq!(s, ManifoldSpec::Sphere { radius: 2.0 });
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let curves = [helix(1.0, 1.0), helix(2.0, -0.5), arctan_spiral()];
        for c in &curves {
            let fd = SpaceCurve::new("fd", c.domain(), {
                let c = c.clone();
                move |x| c.position(x)
            });
            for &x in &[0.3, 2.0, 7.5] {
                for k in 1..=3 {
                    let err = (c.derivative(x, k) - fd.derivative(x, k)).norm();
                    assert!(err < 1e-5, "{} order {k} at {x}: {err}", c.name());
                }
            }
        }
        for s in [sphere(1.5), cylinder(0.7), torus(2.0, 0.5)] {
            let fd = ParamSurface::new("fd", s.domain(), {
                let s = s.clone();
                move |u, v| s.position(u, v)
            });
            for a in 0..2 {
                assert!((s.partial(0.4, 1.0, a) - fd.partial(0.4, 1.0, a)).norm() < 1e-9);
                for b in 0..2 {
                    let err = (s.second_partial(0.4, 1.0, a, b) - fd.second_partial(0.4, 1.0, a, b)).norm();
                    assert!(err < 1e-6, "{} d{a}{b}: {err}", s.name());
                }
            }
        }
    }
}

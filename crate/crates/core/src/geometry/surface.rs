use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector3};

use super::curve::H_GEO;
use crate::{Error, Result};

pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> Vector3<f64> + Send + Sync>;

/// Analytic partial derivatives `[d1, d2]` and `[d11, d12, d22]`.
#[derive(Clone)]
pub struct SurfacePartials {
    pub first: [SurfaceFn; 2],
    pub second: [SurfaceFn; 3],
}

/// A parametrized surface `(x1, x2) -> R^3`.
#[derive(Clone)]
pub struct ParamSurface {
    name: String,
    position: SurfaceFn,
    partials: Option<SurfacePartials>,
    domain: [(f64, f64); 2],
    periodic: [bool; 2],
}

impl fmt::Debug for ParamSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSurface")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("periodic", &self.periodic)
            .field("analytic", &self.partials.is_some())
            .finish()
    }
}

impl ParamSurface {
    pub fn new(
        name: impl Into<String>,
        domain: [(f64, f64); 2],
        position: impl Fn(f64, f64) -> Vector3<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            position: Arc::new(position),
            partials: None,
            domain,
            periodic: [false, false],
        }
    }

    pub fn with_partials(mut self, partials: SurfacePartials) -> Self {
        self.partials = Some(partials);
        self
    }

    pub fn periodic(mut self, periodic: [bool; 2]) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn with_domain(mut self, domain: [(f64, f64); 2]) -> Self {
        self.domain = domain;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> [(f64, f64); 2] {
        self.domain
    }

    pub fn periodicity(&self) -> [bool; 2] {
        self.periodic
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.partials.is_some()
    }

    pub fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        (self.position)(u, v)
    }

    /// First partial along direction `a` (0 or 1).
    pub fn partial(&self, u: f64, v: f64, a: usize) -> Vector3<f64> {
        if let Some(p) = &self.partials {
            return p.first[a](u, v);
        }
        let h = H_GEO;
        let p = |s: f64| {
            if a == 0 {
                self.position(u + s, v)
            } else {
                self.position(u, v + s)
            }
        };
        (p(-2.0 * h) - p(2.0 * h) + (p(h) - p(-h)) * 8.0) / (12.0 * h)
    }

    /// Second partial `d_a d_b`.
    pub fn second_partial(&self, u: f64, v: f64, a: usize, b: usize) -> Vector3<f64> {
        if let Some(p) = &self.partials {
            return p.second[a + b](u, v);
        }
        let h = H_GEO;
        if a == b {
            let p = |s: f64| {
                if a == 0 {
                    self.position(u + s, v)
                } else {
                    self.position(u, v + s)
                }
            };
            return (-p(2.0 * h) - p(-2.0 * h) + (p(h) + p(-h)) * 16.0 - p(0.0) * 30.0)
                / (12.0 * h * h);
        }
        let d1 = |s: f64| self.partial(u, v + s, 0);
        (d1(-2.0 * h) - d1(2.0 * h) + (d1(h) - d1(-h)) * 8.0) / (12.0 * h)
    }

    /// Unnormalized normal `d1 x d2`.
    pub fn raw_normal(&self, u: f64, v: f64) -> Vector3<f64> {
        self.partial(u, v, 0).cross(&self.partial(u, v, 1))
    }

    pub fn unit_normal(&self, u: f64, v: f64) -> Result<Vector3<f64>> {
        let n = self.raw_normal(u, v);
        let norm = n.norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateParametrization {
                at: vec![u, v],
                det: norm * norm,
            });
        }
        Ok(n / norm)
    }

    /// Derivative of the unit normal along direction `a`, from second partials.
    pub fn normal_derivative(&self, u: f64, v: f64, a: usize) -> Result<Vector3<f64>> {
        let p1 = self.partial(u, v, 0);
        let p2 = self.partial(u, v, 1);
        let n = p1.cross(&p2);
        let norm = n.norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateParametrization {
                at: vec![u, v],
                det: norm * norm,
            });
        }
        let e = n / norm;
        let dn = self.second_partial(u, v, 0, a).cross(&p2) + p1.cross(&self.second_partial(u, v, 1, a));
        Ok((dn - e * e.dot(&dn)) / norm)
    }
}

/// First, second and third fundamental forms with mean and Gaussian curvature,
/// all relative to the normal `d1 x d2 / |d1 x d2|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalForms {
    pub first: Matrix2<f64>,
    pub second: Matrix2<f64>,
    pub third: Matrix2<f64>,
    pub mean: f64,
    pub gauss: f64,
}

impl FundamentalForms {
    /// Principal curvatures, ascending: eigenvalues of `I^{-1/2} II I^{-1/2}`.
    pub fn principal_curvatures(&self) -> (f64, f64) {
        let l = match self.first.cholesky() {
            Some(c) => c.l(),
            None => return (f64::NAN, f64::NAN),
        };
        let li = l.try_inverse().unwrap_or_else(Matrix2::zeros);
        let m = li * self.second * li.transpose();
        let m = (m + m.transpose()) * 0.5;
        let ev = m.symmetric_eigenvalues();
        (ev[0].min(ev[1]), ev[0].max(ev[1]))
    }
}

pub fn fundamental_forms(surface: &ParamSurface, u: f64, v: f64) -> Result<FundamentalForms> {
    let d = [surface.partial(u, v, 0), surface.partial(u, v, 1)];
    let first = Matrix2::from_fn(|a, b| d[a].dot(&d[b]));
    let det = first.determinant();
    if !(det > 0.0) || det <= 1e-14 * first.norm_squared() {
        return Err(Error::DegenerateParametrization {
            at: vec![u, v],
            det,
        });
    }
    let e = d[0].cross(&d[1]) / det.sqrt();
    let second = Matrix2::from_fn(|a, b| e.dot(&surface.second_partial(u, v, a, b)));
    let de = [
        surface.normal_derivative(u, v, 0)?,
        surface.normal_derivative(u, v, 1)?,
    ];
    let third = Matrix2::from_fn(|a, b| de[a].dot(&de[b]));
    let gauss = second.determinant() / det;
    let (ee, ff, gg) = (first[(0, 0)], first[(0, 1)], first[(1, 1)]);
    let (l, m, n) = (second[(0, 0)], second[(0, 1)], second[(1, 1)]);
    let mean = (l * gg - 2.0 * m * ff + n * ee) / (2.0 * det);
    Ok(FundamentalForms {
        first,
        second,
        third,
        mean,
        gauss,
    })
}

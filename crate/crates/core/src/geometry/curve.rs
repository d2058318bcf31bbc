use std::fmt;
use std::sync::Arc;

use nalgebra::{SVector, Vector2, Vector3};

use crate::quadrature::UnitRule;
use crate::{Error, Result};

/// Step for finite-difference derivatives when no analytic callback exists.
pub const H_GEO: f64 = 1e-4;

/// Frenet frames are declared undefined below this curvature.
pub const KAPPA_MIN: f64 = 1e-10;

pub type CurveFn<const D: usize> = Arc<dyn Fn(f64) -> SVector<f64, D> + Send + Sync>;

/// A regular parametrized curve in `R^D`.
///
/// Derivatives come from analytic callbacks when supplied, otherwise from
/// fourth-order central differences with step [`H_GEO`].
#[derive(Clone)]
pub struct Curve<const D: usize> {
    name: String,
    position: CurveFn<D>,
    derivatives: Option<[CurveFn<D>; 3]>,
    domain: (f64, f64),
    periodic: bool,
}

pub type PlaneCurve = Curve<2>;
pub type SpaceCurve = Curve<3>;

impl<const D: usize> fmt::Debug for Curve<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Curve")
            .field("name", &self.name)
            .field("dim", &D)
            .field("domain", &self.domain)
            .field("periodic", &self.periodic)
            .field("analytic", &self.derivatives.is_some())
            .finish()
    }
}

impl<const D: usize> Curve<D> {
    pub fn new(
        name: impl Into<String>,
        domain: (f64, f64),
        position: impl Fn(f64) -> SVector<f64, D> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            position: Arc::new(position),
            derivatives: None,
            domain,
            periodic: false,
        }
    }

    pub fn with_derivatives(
        mut self,
        d1: impl Fn(f64) -> SVector<f64, D> + Send + Sync + 'static,
        d2: impl Fn(f64) -> SVector<f64, D> + Send + Sync + 'static,
        d3: impl Fn(f64) -> SVector<f64, D> + Send + Sync + 'static,
    ) -> Self {
        self.derivatives = Some([Arc::new(d1), Arc::new(d2), Arc::new(d3)]);
        self
    }

    pub fn periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn with_domain(mut self, domain: (f64, f64)) -> Self {
        self.domain = domain;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivatives.is_some()
    }

    pub fn position(&self, x: f64) -> SVector<f64, D> {
        (self.position)(x)
    }

    /// Derivative of order 1, 2 or 3.
    pub fn derivative(&self, x: f64, order: usize) -> SVector<f64, D> {
        assert!((1..=3).contains(&order), "derivative order must be 1..=3");
        if let Some(d) = &self.derivatives {
            return d[order - 1](x);
        }
        let p = |t: f64| (self.position)(t);
        match order {
            1 => {
                let h = H_GEO;
                (p(x - 2.0 * h) - p(x + 2.0 * h) + (p(x + h) - p(x - h)) * 8.0) / (12.0 * h)
            }
            2 => {
                let h = H_GEO;
                (-p(x + 2.0 * h) - p(x - 2.0 * h) + (p(x + h) + p(x - h)) * 16.0 - p(x) * 30.0)
                    / (12.0 * h * h)
            }
            _ => {
                // A third difference at H_GEO drowns in round-off; a tenfold step
                // keeps the seven-point stencil accurate to ~1e-7.
                let h = 10.0 * H_GEO;
                (-p(x + 3.0 * h) + p(x + 2.0 * h) * 8.0 - p(x + h) * 13.0 + p(x - h) * 13.0
                    - p(x - 2.0 * h) * 8.0
                    + p(x - 3.0 * h))
                    / (8.0 * h * h * h)
            }
        }
    }

    pub fn speed(&self, x: f64) -> f64 {
        self.derivative(x, 1).norm()
    }

    pub fn unit_tangent(&self, x: f64) -> SVector<f64, D> {
        self.derivative(x, 1).normalize()
    }

    /// Map `x` into the fundamental domain when the curve is periodic.
    pub fn wrap(&self, x: f64) -> f64 {
        if !self.periodic {
            return x;
        }
        let (a, b) = self.domain;
        let len = b - a;
        a + (x - a).rem_euclid(len)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.periodic || (x >= self.domain.0 && x <= self.domain.1)
    }

    /// Parameter distance, honouring periodic identification.
    pub fn parameter_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if self.periodic {
            let len = self.domain.1 - self.domain.0;
            let d = d.rem_euclid(len);
            d.min(len - d)
        } else {
            d
        }
    }

    /// Minimum over `samples` equispaced points of `|position'|`.
    pub fn check_regular(&self, samples: usize) -> Result<()> {
        let (a, b) = self.domain;
        let n = samples.max(3) | 1;
        let speeds: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = a + (b - a) * i as f64 / (n - 1) as f64;
                (t, self.speed(t))
            })
            .collect();
        let max = speeds.iter().map(|s| s.1).fold(0.0, f64::max);
        let (t, speed) = speeds
            .iter()
            .copied()
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("non-empty");
        if !(speed > 1e-8 * max.max(1e-300)) {
            return Err(Error::SingularCurve { t, speed });
        }
        Ok(())
    }
}

/// Tangent, principal normal and binormal `T x N` of a space curve, with the
/// classical curvature and torsion (a right-handed helix has positive torsion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetFrame {
    pub tangent: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub binormal: Vector3<f64>,
    pub kappa: f64,
    pub tau: f64,
}

impl FrenetFrame {
    /// The normal frame `(E1, E2) = (N, N x T)` used for Fermi charts.
    ///
    /// With this orientation the structure equations read
    /// `E1' = -kappa T - tau E2` and `E2' = tau E1` for arc-length curves.
    pub fn fermi_normals(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.normal, -self.binormal)
    }
}

/// Frenet frame of a regular space curve. Works for any regular
/// parametrization; curvature and torsion are geometric (speed-independent).
pub fn frenet_frame(curve: &SpaceCurve, x: f64) -> Result<FrenetFrame> {
    let d1 = curve.derivative(x, 1);
    let d2 = curve.derivative(x, 2);
    let d3 = curve.derivative(x, 3);
    let speed = d1.norm();
    if speed <= 0.0 {
        return Err(Error::SingularCurve { t: x, speed });
    }
    let cross = d1.cross(&d2);
    let cross_norm = cross.norm();
    let kappa = cross_norm / speed.powi(3);
    if !(kappa > KAPPA_MIN) {
        return Err(Error::VanishingCurvature { x, kappa });
    }
    let tangent = d1 / speed;
    let binormal = cross / cross_norm;
    let normal = binormal.cross(&tangent);
    let tau = cross.dot(&d3) / (cross_norm * cross_norm);
    Ok(FrenetFrame {
        tangent,
        normal,
        binormal,
        kappa,
        tau,
    })
}

/// Signed curvature of a plane curve against the left normal `N = J T`.
pub fn plane_curvature(curve: &PlaneCurve, x: f64) -> f64 {
    let d1 = curve.derivative(x, 1);
    let d2 = curve.derivative(x, 2);
    (d1.x * d2.y - d1.y * d2.x) / d1.norm().powi(3)
}

/// The tangent rotated by +90 degrees.
pub fn left_normal(tangent: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-tangent.y, tangent.x)
}

/// Lookup table inverting cumulative arc length.
struct ArcLengthTable<const D: usize> {
    curve: Curve<D>,
    knots: Vec<f64>,
    cumulative: Vec<f64>,
    rule: UnitRule,
}

impl<const D: usize> ArcLengthTable<D> {
    const PANELS: usize = 512;

    fn build(curve: Curve<D>) -> Self {
        let rule = UnitRule::gauss_legendre(16);
        let (a, b) = curve.domain();
        let knots: Vec<f64> = (0..=Self::PANELS)
            .map(|i| a + (b - a) * i as f64 / Self::PANELS as f64)
            .collect();
        let mut cumulative = Vec::with_capacity(knots.len());
        cumulative.push(0.0);
        for w in knots.windows(2) {
            let seg = rule.integrate(w[0], w[1], |t| curve.speed(t));
            let last = *cumulative.last().unwrap();
            cumulative.push(last + seg);
        }
        Self {
            curve,
            knots,
            cumulative,
            rule,
        }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Parameter `t` with arc length `s` from the start of the domain. Outside
    /// `[0, total]` a non-periodic curve is continued through its own formula.
    fn invert(&self, s: f64) -> f64 {
        let total = self.total();
        let (a0, b0) = self.curve.domain();
        let s = if self.curve.is_periodic() {
            s.rem_euclid(total)
        } else {
            s
        };
        if s < 0.0 || s > total {
            let (origin, base) = if s < 0.0 { (a0, 0.0) } else { (b0, total) };
            let mut t = origin + (s - base) / self.curve.speed(origin);
            for _ in 0..50 {
                let f = base + self.rule.integrate(origin, t, |u| self.curve.speed(u)) - s;
                let step = f / self.curve.speed(t);
                t -= step;
                if step.abs() <= 1e-15 * (1.0 + t.abs()) {
                    break;
                }
            }
            return t;
        }
        let last = self.knots.len() - 2;
        let panel = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        };
        let (lo, hi) = (self.knots[panel], self.knots[panel + 1]);
        let base = self.cumulative[panel];
        let arc = |t: f64| base + self.rule.integrate(lo, t, |u| self.curve.speed(u));
        let (mut a, mut b) = (lo, hi);
        let mut t = lo + (hi - lo) * ((s - base) / (self.cumulative[panel + 1] - base)).clamp(0.0, 1.0);
        for _ in 0..60 {
            let f = arc(t) - s;
            if f.abs() <= 1e-15 * (1.0 + s.abs()) {
                break;
            }
            if f > 0.0 {
                b = t;
            } else {
                a = t;
            }
            let mut next = t - f / self.curve.speed(t);
            if !(next >= a && next <= b) || !next.is_finite() {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) {
                t = next;
                break;
            }
            t = next;
        }
        t
    }
}

/// Reparametrize a regular curve by arc length. The result has domain
/// `[0, length]` and first and second derivatives obtained through the chain
/// rule from the original curve.
pub fn arc_length_reparametrize<const D: usize>(curve: &Curve<D>, tol: f64) -> Result<Curve<D>> {
    curve.check_regular(4097)?;
    let table = Arc::new(ArcLengthTable::build(curve.clone()));
    let length = table.total();

    let t_pos = Arc::clone(&table);
    let t_d1 = Arc::clone(&table);
    let t_d2 = Arc::clone(&table);
    let d2_of = move |s: f64| -> SVector<f64, D> {
        let t = t_d2.invert(s);
        let c = &t_d2.curve;
        let v = c.derivative(t, 1);
        let speed = v.norm();
        let tangent = v / speed;
        let a = c.derivative(t, 2);
        (a - tangent * a.dot(&tangent)) / (speed * speed)
    };
    let d2_for_d3 = d2_of.clone();
    let out = Curve::new(format!("{}@arclength", curve.name()), (0.0, length), move |s| {
        let t = t_pos.invert(s);
        t_pos.curve.position(t)
    })
    .with_derivatives(
        move |s| {
            let t = t_d1.invert(s);
            t_d1.curve.derivative(t, 1).normalize()
        },
        d2_of,
        move |s| {
            let h = H_GEO;
            (d2_for_d3(s - 2.0 * h) - d2_for_d3(s + 2.0 * h)
                + (d2_for_d3(s + h) - d2_for_d3(s - h)) * 8.0)
                / (12.0 * h)
        },
    )
    .periodic(curve.is_periodic());

    let deviation = (0..=256)
        .map(|i| {
            let s = length * i as f64 / 256.0;
            let fd = out.position(s + H_GEO) - out.position(s - H_GEO);
            (fd.norm() / (2.0 * H_GEO) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    if deviation > tol.max(1e-7) {
        return Err(Error::Reparametrization { deviation });
    }
    Ok(out)
}

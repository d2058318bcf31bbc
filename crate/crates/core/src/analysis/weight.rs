use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fermi::{FermiChart, SampleGrid};
use crate::quadrature::{pairwise_sum, UnitRule};
use crate::{Error, Result};

/// Fiber integrals above this are declared divergent.
pub const OVERFLOW_CAP: f64 = 1e12;

/// Closed-form weights addressable from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    Constant { value: f64 },
    /// `min(offset + coef * |y|^power, cap)`.
    Radial {
        #[serde(default)]
        offset: f64,
        coef: f64,
        power: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
}

impl WeightSpec {
    pub fn build(&self) -> Result<Weight> {
        match *self {
            WeightSpec::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidInput(format!("constant weight {value} must be >= 0")));
                }
                Ok(Weight::new(format!("{value}"), move |_, _| value).with_spec(self.clone()))
            }
            WeightSpec::Radial {
                offset,
                coef,
                power,
                cap,
            } => {
                if offset < 0.0 || coef < 0.0 || power < 0.0 || cap.is_some_and(|c| !(c > 0.0)) {
                    return Err(Error::InvalidInput(
                        "radial weight needs offset, coef, power >= 0 and cap > 0".into(),
                    ));
                }
                let cap = cap.unwrap_or(f64::INFINITY);
                Ok(Weight::new(
                    format!("min({offset} + {coef}|y|^{power}, {cap})"),
                    move |_, y| {
                        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                        (offset + coef * r.powf(power)).min(cap)
                    },
                )
                .with_spec(self.clone()))
            }
        }
    }
}

/// A non-negative bounded weight `a(x, y)` in Fermi coordinates.
#[derive(Clone)]
pub struct Weight {
    label: String,
    f: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    spec: Option<WeightSpec>,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Weight").field("label", &self.label).finish()
    }
}

impl Weight {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
            spec: None,
        }
    }

    fn with_spec(mut self, spec: WeightSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn constant(value: f64) -> Self {
        WeightSpec::Constant { value }.build().expect("valid constant")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn spec(&self) -> Option<&WeightSpec> {
        self.spec.as_ref()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.f)(x, y)
    }

    /// Supremum over the tube: exact for radial specs (monotone in `|y|`),
    /// otherwise the maximum over a sample grid touching the tube boundary.
    pub fn sup_norm(&self, chart: &FermiChart) -> f64 {
        if let Some(WeightSpec::Constant { value }) = self.spec {
            return value;
        }
        if let Some(WeightSpec::Radial {
            offset,
            coef,
            power,
            cap,
        }) = self.spec
        {
            let top = offset + coef * chart.eps().powf(power);
            return cap.map_or(top, |c| top.min(c)).max(offset.min(cap.unwrap_or(offset)));
        }
        let grid = SampleGrid::regular(chart, 32, 16, 0.999);
        let inner = SampleGrid::regular(chart, 32, 16, 0.5);
        grid.base
            .par_iter()
            .map(|x| {
                grid.normal
                    .iter()
                    .chain(&inner.normal)
                    .map(|y| self.eval(x, y))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Polar Gauss-Legendre quadrature over the normal ball `|y| < eps`, graded
/// toward the center as `r = eps * s^grading` so that no node sits at `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberQuadrature {
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub grading: f64,
}

impl Default for FiberQuadrature {
    fn default() -> Self {
        Self {
            radial_nodes: 64,
            angular_nodes: 64,
            grading: 4.0,
        }
    }
}

impl FiberQuadrature {
    /// Nodes and weights for `int_{|y| < eps} f(y) dy` in dimension `k`.
    pub fn nodes(&self, k: usize, eps: f64) -> Vec<(Vec<f64>, f64)> {
        let radial = UnitRule::gauss_legendre(self.radial_nodes);
        let g = self.grading;
        let rs: Vec<(f64, f64)> = radial
            .nodes
            .iter()
            .zip(&radial.weights)
            .map(|(&s, &w)| (eps * s.powf(g), w * eps * g * s.powf(g - 1.0)))
            .collect();
        match k {
            1 => rs
                .iter()
                .flat_map(|&(r, w)| [(vec![-r], w), (vec![r], w)])
                .collect(),
            2 => {
                let ang = UnitRule::gauss_legendre(self.angular_nodes);
                let tau = std::f64::consts::TAU;
                let mut out = Vec::with_capacity(rs.len() * ang.nodes.len());
                for &(r, w) in &rs {
                    for (&s, &wa) in ang.nodes.iter().zip(&ang.weights) {
                        let th = tau * s;
                        out.push((vec![r * th.cos(), r * th.sin()], w * r * wa * tau));
                    }
                }
                out
            }
            _ => panic!("fiber quadrature supports k = 1 or 2"),
        }
    }

    pub fn integrate(&self, k: usize, eps: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes(k, eps)
            .iter()
            .map(|(y, w)| w * f(y))
            .collect();
        pairwise_sum(&terms)
    }
}

/// `C_a = sup_x int_{|y| < eps} a(x, y)^{-t} dy` over the base samples.
pub fn weight_admissibility(
    weight: &Weight,
    t: f64,
    chart: &FermiChart,
    base_samples: &[Vec<f64>],
    quad: &FiberQuadrature,
) -> Result<f64> {
    let k = chart.codim();
    if !(t > k as f64) {
        return Err(Error::BadExponent { t, k });
    }
    if base_samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let eps = chart.eps();
    let values: Vec<Result<f64>> = base_samples
        .par_iter()
        .map(|x| {
            let v = quad.integrate(k, eps, |y| weight.eval(x, y).powf(-t));
            if !(v.is_finite() && v <= OVERFLOW_CAP) {
                return Err(Error::NonIntegrable { at: x.clone() });
            }
            Ok(v)
        })
        .collect();
    let mut best: f64 = 0.0;
    for v in values {
        best = best.max(v?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ball_areas() {
        let q = FiberQuadrature::default();
        assert!((q.integrate(2, 0.1, |_| 1.0) - PI * 0.01).abs() < 1e-15);
        assert!((q.integrate(1, 0.3, |_| 1.0) - 0.6).abs() < 1e-15);
        assert!(q.nodes(2, 1.0).iter().all(|(y, _)| y[0] != 0.0 || y[1] != 0.0));
    }

    #[test]
    fn capped_radial_sup() {
        let w = WeightSpec::Radial {
            offset: 1.0,
            coef: 0.1,
            power: 0.25,
            cap: Some(1.04),
        }
        .build()
        .unwrap();
        assert!((w.eval(&[0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((w.eval(&[0.0], &[0.05, 0.0]) - 1.04).abs() < 1e-15);
    }
}

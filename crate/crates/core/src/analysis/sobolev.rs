use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weight::{FiberQuadrature, Weight, OVERFLOW_CAP};
use crate::{Error, Result};

/// Inflation applied to the trial-family supremum.
pub const SOBOLEV_MARGIN: f64 = 0.5;

/// The critical exponent `2*(t)` with `1/2* = 1/2 - 1/k + 1/(2t)`.
pub fn sobolev_exponent(t: f64, k: usize) -> Result<f64> {
    let kf = k as f64;
    let fail = |reason: &str| Error::ExponentOutOfRange {
        t,
        k,
        reason: reason.to_string(),
    };
    if k == 0 || !t.is_finite() {
        return Err(fail("need k >= 1 and finite t"));
    }
    if !(t > kf / 2.0) {
        return Err(fail("need t > k/2"));
    }
    if !(1.0 + 1.0 / t > 2.0 / kf) {
        return Err(fail("need 1 + 1/t > 2/k"));
    }
    let inv = 0.5 - 1.0 / kf + 0.5 / t;
    if !(inv > 0.0 && inv < 0.5) {
        return Err(fail("exponent leaves (2, inf)"));
    }
    Ok(1.0 / inv)
}

/// Radial bumps `(1 - (r/eps)^2)^m` on the normal ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFamily {
    pub powers: Vec<u32>,
}

impl Default for TrialFamily {
    fn default() -> Self {
        Self {
            powers: vec![1, 2, 3, 4, 6, 8],
        }
    }
}

impl TrialFamily {
    pub fn value(m: u32, r: f64, eps: f64) -> f64 {
        (1.0 - (r / eps).powi(2)).max(0.0).powi(m as i32)
    }

    /// `|dw/dr|`.
    pub fn slope(m: u32, r: f64, eps: f64) -> f64 {
        let s = (1.0 - (r / eps).powi(2)).max(0.0);
        2.0 * m as f64 * r / (eps * eps) * s.powi(m as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialQuotient {
    pub power: u32,
    /// `||w||^2_{2*} / int |grad w|^2 a`, worst over base samples.
    pub quotient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevEstimate {
    pub c_s: f64,
    pub exponent: f64,
    pub sup_quotient: f64,
    pub margin: f64,
    pub trials: Vec<TrialQuotient>,
    /// `C_rho^{-t}` with `C_rho = sup_x int a^{-t}`, the weight dependence of
    /// the closed-form constant. Reported, never used downstream.
    pub printed_weight_factor: f64,
}

/// Variational estimate of the weighted Sobolev constant on the normal ball
/// of radius `eps`: the trial supremum inflated by [`SOBOLEV_MARGIN`].
pub fn sobolev_constant_estimate(
    weight: &Weight,
    t: f64,
    k: usize,
    eps: f64,
    base_samples: &[Vec<f64>],
    trials: &TrialFamily,
    quad: &FiberQuadrature,
) -> Result<SobolevEstimate> {
    let p = sobolev_exponent(t, k)?;
    if !(t > k as f64) {
        return Err(Error::BadExponent { t, k });
    }
    if base_samples.is_empty() || trials.powers.is_empty() {
        return Err(Error::EmptySample);
    }
    let nodes = quad.nodes(k, eps);
    let radius = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut c_rho: f64 = 0.0;
    for x in base_samples {
        let v: f64 = nodes.iter().map(|(y, w)| w * weight.eval(x, y).powf(-t)).sum();
        if !(v.is_finite() && v <= OVERFLOW_CAP) {
            return Err(Error::NonIntegrable { at: x.clone() });
        }
        c_rho = c_rho.max(v);
    }

    let rows: Vec<TrialQuotient> = trials
        .powers
        .par_iter()
        .map(|&m| {
            let norm: f64 = nodes
                .iter()
                .map(|(y, w)| w * TrialFamily::value(m, radius(y), eps).powf(p))
                .sum::<f64>()
                .powf(2.0 / p);
            let worst = base_samples
                .iter()
                .map(|x| {
                    let energy: f64 = nodes
                        .iter()
                        .map(|(y, w)| w * TrialFamily::slope(m, radius(y), eps).powi(2) * weight.eval(x, y))
                        .sum();
                    norm / energy
                })
                .fold(0.0, f64::max);
            TrialQuotient {
                power: m,
                quotient: worst,
            }
        })
        .collect();
    let sup = rows.iter().map(|r| r.quotient).fold(0.0, f64::max);
    if !sup.is_finite() {
        return Err(Error::NonIntegrable {
            at: base_samples[0].clone(),
        });
    }
    Ok(SobolevEstimate {
        c_s: (1.0 + SOBOLEV_MARGIN) * sup,
        exponent: p,
        sup_quotient: sup,
        margin: SOBOLEV_MARGIN,
        trials: rows,
        printed_weight_factor: c_rho.powf(-t),
    })
}

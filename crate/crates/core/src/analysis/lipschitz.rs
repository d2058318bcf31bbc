use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LIPSCHITZ_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReactionSpec {
    /// `coef * u + constant`.
    Linear {
        coef: f64,
        #[serde(default)]
        constant: f64,
    },
    Constant { value: f64 },
    /// `amplitude * sin u`.
    Sine { amplitude: f64 },
}

impl ReactionSpec {
    pub fn build(&self) -> Result<Reaction> {
        let finite = match *self {
            ReactionSpec::Linear { coef, constant } => coef.is_finite() && constant.is_finite(),
            ReactionSpec::Constant { value } => value.is_finite(),
            ReactionSpec::Sine { amplitude } => amplitude.is_finite(),
        };
        if !finite {
            return Err(Error::InvalidInput("reaction parameters must be finite".into()));
        }
        let r = match *self {
            ReactionSpec::Linear { coef, constant } => {
                Reaction::new(format!("{coef} u + {constant}"), move |_, u| coef * u + constant)
            }
            ReactionSpec::Constant { value } => Reaction::new(format!("{value}"), move |_, _| value),
            ReactionSpec::Sine { amplitude } => {
                Reaction::new(format!("{amplitude} sin u"), move |_, u| amplitude * u.sin())
            }
        };
        Ok(Reaction {
            spec: Some(self.clone()),
            ..r
        })
    }
}

/// Zero-order term `f(z, u)`, with `z` the chart coordinates `(x, y)`.
#[derive(Clone)]
pub struct Reaction {
    label: String,
    f: Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
    spec: Option<ReactionSpec>,
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reaction").field("label", &self.label).finish()
    }
}

impl Reaction {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
            spec: None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn spec(&self) -> Option<&ReactionSpec> {
        self.spec.as_ref()
    }

    pub fn eval(&self, z: &[f64], u: f64) -> f64 {
        (self.f)(z, u)
    }

    pub fn lipschitz(&self, m: f64, z_samples: &[Vec<f64>], u_grid: usize) -> f64 {
        lipschitz_probe(self, m, z_samples, u_grid)
    }
}

/// Largest sampled difference quotient over `u, v` in `[-m, m]`, inflated by
/// [`LIPSCHITZ_SAFETY`].
pub fn lipschitz_probe(reaction: &Reaction, m: f64, z_samples: &[Vec<f64>], u_grid: usize) -> f64 {
    assert!(m > 0.0, "lipschitz probe needs m > 0");
    let n = u_grid.max(2);
    let us: Vec<f64> = (0..n).map(|i| -m + 2.0 * m * i as f64 / (n - 1) as f64).collect();
    let best = z_samples
        .par_iter()
        .map(|z| {
            let fs: Vec<f64> = us.iter().map(|&u| reaction.eval(z, u)).collect();
            let mut best: f64 = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    best = best.max((fs[j] - fs[i]).abs() / (us[j] - us[i]));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    LIPSCHITZ_SAFETY * best
}

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use tubewcp::analysis::{Ladder, ReactionSpec, WeightSpec};
use tubewcp::fermi::ChartDescription;
use tubewcp::geometry::ManifoldSpec;
use tubewcp::pde::SolverParams;
use tubewcp::wcp::ThetaInputs;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// One experiment: a tube, a problem on it and the knobs of every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(deserialize_with = "manifold_field")]
    pub manifold: ManifoldSpec,
    pub eps: f64,
    #[serde(default)]
    pub window: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub samples: Samples,
    #[serde(default = "unit_weight")]
    pub weight: WeightSpec,
    #[serde(default = "zero_reaction")]
    pub reaction: ReactionSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "three")]
    pub t: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub boundary: Option<Boundary>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub reach: ReachConfig,
    #[serde(default)]
    pub epsilon0: Epsilon0Config,
    #[serde(default)]
    pub iteration: Option<IterationConfig>,
    /// Half-width of the `u` interval probed for the Lipschitz constant.
    #[serde(default = "one")]
    pub lipschitz_m: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn manifold_field<'de, D: Deserializer<'de>>(d: D) -> Result<ManifoldSpec, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Field {
        Name(String),
        Spec(ManifoldSpec),
    }
    match Field::deserialize(d)? {
        Field::Name(s) => s.parse().map_err(serde::de::Error::custom),
        Field::Spec(s) => Ok(s),
    }
}

fn unit_weight() -> WeightSpec {
    WeightSpec::Constant { value: 1.0 }
}

fn zero_reaction() -> ReactionSpec {
    ReactionSpec::Constant { value: 0.0 }
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Samples {
    pub base: usize,
    pub normal: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Self { base: 32, normal: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub half_width: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 65,
            ny: 8,
            half_width: None,
        }
    }
}

/// Constant Dirichlet data of the subsolution `u` and supersolution `v`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    pub u: f64,
    #[serde(default)]
    pub v: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderConfig {
    /// Centre of the balls; the middle of the base box when absent.
    pub pbar: Option<Vec<f64>>,
    pub radii: Vec<f64>,
    pub r0: f64,
    pub beta: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            pbar: None,
            radii: vec![1.0, 2.0, 4.0, 8.0],
            r0: 0.5,
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachConfig {
    pub samples: usize,
    /// Largest admissible sample spacing; `eps` when absent.
    pub resolution: Option<f64>,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            samples: 400,
            resolution: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Epsilon0Config {
    /// Growth exponent; fitted on the base when absent.
    pub gamma: Option<f64>,
    pub r_large: Option<f64>,
    /// Explicit constants; absent entries are measured where possible.
    pub constants: ThetaInputs,
    /// Replace `Theta_1` by `slope * eps`.
    pub synthetic_slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationConfig {
    pub ladder: Ladder,
    pub theta: f64,
    pub gamma: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

/// Command-line replacements for config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub manifold: Option<String>,
    pub eps: Option<f64>,
    pub window: Option<String>,
    pub samples: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, overrides)
    }

    pub fn from_json(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
        if value.get("schema_version").is_none() {
            return Err(CliError::Config("missing schema_version".into()));
        }
        let mut cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A config built from overrides alone (no `--config`).
    pub fn from_overrides(overrides: &Overrides) -> Result<Self, CliError> {
        let manifold = overrides
            .manifold
            .as_deref()
            .ok_or_else(|| CliError::Config("either --config or --manifold is required".into()))?;
        let eps = overrides
            .eps
            .ok_or_else(|| CliError::Config("--eps is required without --config".into()))?;
        let text = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "manifold": manifold,
            "eps": eps,
        })
        .to_string();
        Self::from_json(&text, overrides)
    }

    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(m) = &o.manifold {
            self.manifold = m.parse().map_err(|e: tubewcp::Error| CliError::Config(e.to_string()))?;
        }
        if let Some(e) = o.eps {
            self.eps = e;
        }
        if let Some(w) = &o.window {
            self.window = Some(parse_window(w)?);
        }
        if let Some(s) = o.samples {
            self.samples.base = s;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(CliError::Config(format!("eps = {} must lie in (0, 1)", self.eps)));
        }
        self.manifold
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.samples.base < 2 || self.samples.normal < 1 {
            return Err(CliError::Config("samples.base >= 2 and samples.normal >= 1 required".into()));
        }
        Ok(())
    }

    pub fn chart(&self) -> ChartDescription {
        ChartDescription {
            base: self.manifold.clone(),
            eps: self.eps,
            window: self.window.clone(),
        }
    }
}

/// `a:b` per base direction, directions separated by commas.
pub fn parse_window(s: &str) -> Result<Vec<(f64, f64)>, CliError> {
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("window part '{part}' is not a:b")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad window bound '{v}'")))
            };
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_version_is_mandatory() {
        let err = ExperimentConfig::from_json(r#"{"manifold": "line", "eps": 0.5}"#, &Overrides::default());
        assert!(matches!(err, Err(CliError::Config(_))));
        let ok = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "manifold": "circle:radius=2", "eps": 0.5}"#,
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(ok.manifold, ManifoldSpec::Circle { radius: 2.0 });
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            eps: Some(0.1),
            window: Some("0:4".into()),
            ..Default::default()
        };
        let c = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "manifold": {"id": "helix"}, "eps": 0.5}"#,
            &o,
        )
        .unwrap();
        assert_eq!(c.eps, 0.1);
        assert_eq!(c.window, Some(vec![(0.0, 4.0)]));
        assert!(parse_window("0:1,2").is_err());
    }
}

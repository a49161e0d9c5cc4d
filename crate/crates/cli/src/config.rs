//! The resolved run configuration embedded in every output record.

use permcac::cac::CacConfig;
use permcac::curve::Strategy;
use permcac::verify::Level;
use permcac::EnsembleSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandKind {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "coeffs")]
    Coeffs,
    #[serde(rename = "roots")]
    Roots,
    #[serde(rename = "cac")]
    Cac,
    #[serde(rename = "curve")]
    Curve,
    #[serde(rename = "stats.moment")]
    StatsMoment,
    #[serde(rename = "stats.rootcount")]
    StatsRootcount,
    #[serde(rename = "stats.jensen")]
    StatsJensen,
    #[serde(rename = "stats.meanshift")]
    StatsMeanshift,
    #[serde(rename = "stats.tail")]
    StatsTail,
    #[serde(rename = "bw-demo")]
    BwDemo,
    #[serde(rename = "sweep")]
    Sweep,
    #[serde(rename = "verify")]
    Verify,
}

impl CommandKind {
    /// Commands whose primary artifact is a CSV table rather than a JSON record.
    pub fn table_primary(self) -> bool {
        matches!(self, Self::Roots | Self::Sweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// One swept parameter, e.g. `m=20,40,80`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<f64>,
}

pub const GRID_KEYS: [&str; 4] = ["m", "b", "beta", "n"];

impl std::str::FromStr for GridAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("grid axis {s:?} is not of the form key=v1,v2,..."));
        let (key, values) = s.split_once('=').ok_or_else(bad)?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { key: key.trim().to_string(), values })
    }
}

/// Algorithm parameters; each command reads the subset it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub cac: CacConfig,
    pub b: f64,
    /// `auto`, `straight` or `json:<file>`.
    pub path: String,
    /// Step count for the straight path.
    pub steps: usize,
    /// Also compute the exact permanent for comparison.
    pub exact: bool,
    pub trial: u64,
    pub trials: usize,
    pub r: f64,
    pub radii: Vec<f64>,
    pub epsilon: f64,
    pub wide_epsilon: bool,
    pub strategy: Strategy,
    pub quad_points: usize,
    pub l: usize,
    /// Oracle queries in the faulty-oracle demo.
    pub points: usize,
    pub rate: f64,
    pub grid: Vec<GridAxis>,
    pub repeat: usize,
    pub level: Level,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            cac: CacConfig::default(),
            b: 2.0,
            path: "auto".into(),
            steps: 4,
            exact: true,
            trial: 0,
            trials: 1000,
            r: 1.0,
            radii: vec![0.25, 0.5, 1.0, 2.0],
            epsilon: 0.05,
            wide_epsilon: false,
            strategy: Strategy::FirstClear,
            quad_points: 4096,
            l: 10,
            points: 21,
            rate: 0.125,
            grid: Vec::new(),
            repeat: 10,
            level: Level::Fast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    pub ensemble: EnsembleSpec,
    pub params: Params,
    pub output: Option<String>,
    pub per_trial: Option<String>,
    pub format: Format,
}

impl RunConfig {
    pub fn new(command: CommandKind, ensemble: EnsembleSpec, params: Params) -> Self {
        Self {
            command,
            ensemble,
            params,
            output: None,
            per_trial: None,
            format: if command.table_primary() { Format::Csv } else { Format::Json },
        }
    }

    /// Checks that do not depend on any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.params;
        if self.ensemble.n == 0 {
            return Err(CliError::Config("n must be positive".into()));
        }
        if !p.b.is_finite() {
            return Err(CliError::Config(format!("b must be finite, got {}", p.b)));
        }
        if !(p.path == "auto" || p.path == "straight" || p.path.starts_with("json:")) {
            return Err(CliError::Config(format!("path must be auto, straight or json:<file>, got {:?}", p.path)));
        }
        if p.steps == 0 {
            return Err(CliError::Config("steps must be positive".into()));
        }
        if p.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(CliError::Config("radii must be positive".into()));
        }
        for axis in &p.grid {
            if !GRID_KEYS.contains(&axis.key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown grid key {:?}; expected one of {GRID_KEYS:?}",
                    axis.key
                )));
            }
            let integral = matches!(axis.key.as_str(), "m" | "n");
            if axis.values.is_empty() || (integral && axis.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0)) {
                return Err(CliError::Config(format!("bad values for grid key {:?}", axis.key)));
            }
        }
        if self.command == CommandKind::Sweep && p.grid.is_empty() {
            return Err(CliError::Config("sweep needs at least one --grid axis".into()));
        }
        Ok(())
    }
}

/// Parses `1/8` or `0.125`.
pub fn parse_rate(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad rate {s:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad rate {s:?}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|_| format!("bad rate {s:?}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("bad rate {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert_eq!(parse_rate("1/8").unwrap(), 0.125);
        assert_eq!(parse_rate("0.25").unwrap(), 0.25);
        assert!(parse_rate("1/0").is_err());
        assert!(parse_rate("x").is_err());
    }

    #[test]
    fn grid_axis_parsing() {
        let g: GridAxis = "m=20,40,80".parse().unwrap();
        assert_eq!(g.key, "m");
        assert_eq!(g.values, vec![20.0, 40.0, 80.0]);
        assert!("m20".parse::<GridAxis>().is_err());
        assert!("m=a".parse::<GridAxis>().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = RunConfig::new(CommandKind::Exact, EnsembleSpec::gaussian(3, 0.0, 1), Params::default());
        let mut v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(serde_json::from_value::<RunConfig>(v.clone()).unwrap(), cfg);
        v["params"]["beat"] = serde_json::json!(3.0);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }

    #[test]
    fn grid_validation() {
        let mut p = Params::default();
        p.grid = vec!["q=1".parse().unwrap()];
        let cfg = RunConfig::new(CommandKind::Sweep, EnsembleSpec::gaussian(3, 0.0, 1), p);
        assert!(cfg.validate().is_err());
        let mut p = Params::default();
        p.grid = vec!["m=20.5".parse().unwrap()];
        let cfg = RunConfig::new(CommandKind::Sweep, EnsembleSpec::gaussian(3, 0.0, 1), p);
        assert!(cfg.validate().is_err());
    }
}

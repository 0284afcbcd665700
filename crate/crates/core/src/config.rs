//! TOML run configuration. One file describes the scenario, the solver
//! settings and the evaluation and sweep plans; scalar fields can be
//! overridden with `section.field=value`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Target;
use crate::model::Dimensions;
use crate::scenario::{
    random_psk_frame, safety_margin_threshold, Channels, OfdmTiming, Psk, Scenario,
};
use crate::solver::{SolverConfig, SweepAxis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dims: Dimensions,
    pub power: PowerConfig,
    pub comm: CommConfig,
    #[serde(default)]
    pub sensing: SensingConfig,
    #[serde(default)]
    pub channels: ChannelConfig,
    #[serde(default)]
    pub timing: Option<OfdmTiming>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    /// Transmit power budget in watts.
    pub p_tx: f64,
    /// Directional power floor in watts; exclusive with `p0_fraction`.
    #[serde(default)]
    pub p0: Option<f64>,
    /// Floor as a fraction of the beam maximum `n_tx * p_tx`.
    #[serde(default)]
    pub p0_fraction: Option<f64>,
    /// Receiver noise power in watts.
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommConfig {
    pub psk_order: u32,
    pub sinr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub theta0_deg: f64,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig {
            theta0_deg: 0.0,
            spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    /// i.i.d. `CN(0, 1)` drawn from the run seed.
    #[default]
    Rayleigh,
    /// CSV with one row per `(n, k)`, relative paths resolved against the
    /// config file's directory.
    File { path: PathBuf },
    /// Rows of interleaved `re, im` pairs, one row per `(n, k)`.
    Inline { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub target: Target,
    pub detection_snr_db: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub pfa_grid: Vec<f64>,
    pub rmse_snr_db: Vec<f64>,
    pub trials: usize,
    pub guard: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            target: Target::unit(3, 1),
            detection_snr_db: vec![-5.0],
            thresholds: (0..=40).map(|i| i as f64).collect(),
            pfa_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            rmse_snr_db: vec![-20.0, -15.0, -10.0, -5.0, 0.0],
            trials: 1000,
            guard: 1,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    #[serde(default = "one")]
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    #[serde(default = "three")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text`, applies `section.field=value` overrides, then validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dims
            .validate()
            .map_err(|e| Error::Config(format!("dims: {e}")))?;
        match (self.power.p0, self.power.p0_fraction) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "power: set only one of `p0` and `p0_fraction`".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "power: missing field `p0` (or `p0_fraction`)".into(),
                ))
            }
            _ => {}
        }
        Psk::new(self.comm.psk_order).map_err(|e| Error::Config(format!("comm.psk_order: {e}")))?;
        self.solver.validate()?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.trials == 0 {
                return Err(Error::Config(
                    "sweep: need at least one value and one trial".into(),
                ));
            }
        }
        if let Some(b) = &self.bench {
            if b.values.is_empty() || b.repetitions == 0 {
                return Err(Error::Config(
                    "bench: need at least one value and one repetition".into(),
                ));
            }
        }
        Ok(())
    }

    fn p0_for(&self, dims: &Dimensions) -> f64 {
        match (self.power.p0, self.power.p0_fraction) {
            (Some(p0), _) => p0,
            (None, Some(frac)) => frac * dims.n_tx as f64 * self.power.p_tx,
            (None, None) => 0.0,
        }
    }

    /// The configured scenario.
    pub fn scenario(&self, base_dir: &Path) -> Result<Scenario> {
        self.scenario_for(self.dims, self.seed, base_dir)
    }

    /// The configured scenario with other dimensions and seed, as used by
    /// sweeps. File and inline channels must match `dims`.
    pub fn scenario_for(&self, dims: Dimensions, seed: u64, base_dir: &Path) -> Result<Scenario> {
        let psk = Psk::new(self.comm.psk_order)?;
        let channels = match &self.channels {
            ChannelConfig::Rayleigh => Channels::rayleigh(dims, seed),
            ChannelConfig::File { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let file = std::fs::File::open(&full)?;
                Channels::from_csv(std::io::BufReader::new(file), dims)?
            }
            ChannelConfig::Inline { values } => {
                let mut data = Vec::new();
                for (row, v) in values.iter().enumerate() {
                    if v.len() != 2 * dims.n_tx {
                        return Err(Error::Config(format!(
                            "channels.values row {row}: expected {} numbers, found {}",
                            2 * dims.n_tx,
                            v.len()
                        )));
                    }
                    data.extend(v.chunks(2).map(|p| Complex64::new(p[0], p[1])));
                }
                Channels::new(dims, data)?
            }
        };
        let scn = Scenario {
            dims,
            p_tx: self.power.p_tx,
            p0: self.p0_for(&dims),
            theta0: self.sensing.theta0_deg.to_radians(),
            spacing: self.sensing.spacing,
            psk,
            gamma: safety_margin_threshold(self.power.noise_power, &psk, self.comm.sinr_db),
            noise_power: self.power.noise_power,
            channels,
            symbols: random_psk_frame(dims, self.comm.psk_order, seed)?,
            rng_seed: seed,
            timing: self.timing,
        };
        scn.validate()?;
        Ok(scn)
    }
}

/// Sets `path = value` in `table`; `value` is read as a TOML value and falls
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override `{spec}` is not of the form key.path=value"
        ))
    })?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key is present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key")));
    }
    let mut cur = table;
    for key in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{key}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::calibration::CalibrationReport;
use crate::error::{Error, Result};
use crate::estimators::SchemeKind;
use crate::signal::ComplexValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Awgn => "awgn",
            Self::Rayleigh => "rayleigh",
        }
    }

    pub fn is_fading(self) -> bool {
        self == Self::Rayleigh
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awgn" => Ok(Self::Awgn),
            "rayleigh" | "fading" => Ok(Self::Rayleigh),
            _ => Err(Error::config(format!("unknown channel {s:?}; expected awgn or rayleigh"))),
        }
    }
}

/// How the stopping target of each grid point is given. Every entry of the
/// list is paired with the entry of `interval_v` / `interval_u` at the same
/// position.
#[derive(Debug, Clone, PartialEq)]
pub enum InfoGrid {
    /// Explicit target Fisher information values.
    Targets(Vec<f64>),
    /// AWGN stop times; the target is `t · Σ_k 2|h_k|²/σ_k²`.
    StopTimes(Vec<u64>),
    /// Fixed-MSE mode: for each scheme, solve `s` with `J = 25·2^s` and
    /// `T_V = T_U = 2·1.4^s` so that the MSE hits `mse`.
    TargetMse { mse: f64, s_min: f64, s_max: f64 },
}

impl InfoGrid {
    pub fn len(&self) -> usize {
        match self {
            Self::Targets(v) => v.len(),
            Self::StopTimes(v) => v.len(),
            Self::TargetMse { .. } => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitsFinal {
    /// `R_k = round(r_V · E[N_T])` from the level-triggered `V` process.
    Auto,
    Fixed(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationSource {
    Auto,
    /// A fixed report, applied at every grid point.
    Report(CalibrationReport),
}

/// Coupled grid `J = 25·2^s`.
pub fn coupled_target(s: f64) -> f64 {
    25.0 * 2f64.powf(s)
}

/// Coupled grid `T = 2·1.4^s`.
pub fn coupled_interval(s: f64) -> f64 {
    2.0 * 1.4f64.powf(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub schemes: Vec<SchemeKind>,
    pub channel: ChannelKind,
    pub info: InfoGrid,
    pub interval_v: Vec<f64>,
    pub interval_u: Vec<f64>,
    pub sensors: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub x_bound: Vec<f64>,
    /// Fixed parameter value; `None` means `(X/2)(1+i)` at each bound `X`.
    pub x: Option<ComplexValue>,
    pub trials: u64,
    pub master_seed: u64,
    pub bits_v: u8,
    pub bits_u: u8,
    pub bits_final: BitsFinal,
    pub calibration: CalibrationSource,
    pub calibration_paths: usize,
    pub calibration_samples: usize,
    pub calibration_tol: f64,
    pub obs_theta: Option<f64>,
    pub obs_sigma: Option<f64>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schemes: vec![SchemeKind::Centralized],
            channel: ChannelKind::Awgn,
            info: InfoGrid::Targets(vec![100.0]),
            interval_v: Vec::new(),
            interval_u: Vec::new(),
            sensors: vec![5],
            snr_db: vec![0.0],
            x_bound: vec![5.0],
            x: None,
            trials: 10_000,
            master_seed: 1,
            bits_v: 1,
            bits_u: 1,
            bits_final: BitsFinal::Auto,
            calibration: CalibrationSource::Auto,
            calibration_paths: 20_000,
            calibration_samples: 100_000,
            calibration_tol: 0.02,
            obs_theta: None,
            obs_sigma: None,
            output: None,
        }
    }
}

pub const KEYS: [&str; 25] = [
    "schemes",
    "channel",
    "info_target",
    "stop_time",
    "coupled_m",
    "target_mse",
    "mse_search",
    "interval_v",
    "interval_u",
    "sensors",
    "snr_db",
    "x_bound",
    "x",
    "trials",
    "seed",
    "bits_v",
    "bits_u",
    "bits_final",
    "calibration",
    "calibration_paths",
    "calibration_samples",
    "calibration_tol",
    "obs_theta",
    "obs_sigma",
    "output",
];

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::config(format!("{key}: {s:?}: {e}"))))
        .collect()
}

fn one<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| Error::config(format!("{key}: {v:?}: {e}")))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::from_text_in(&text, path.parent())
    }

    /// Parses a flat `key=value` file. `#` starts a comment line. Unknown keys
    /// are rejected. Missing keys keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_text_in(text, None)
    }

    fn from_text_in(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", i + 1)))?;
            let k = k.trim().to_string();
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::config(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        let mut c = Self::default();
        let mut info_keys = 0;
        for (k, v) in &map {
            let v = v.as_str();
            match k.as_str() {
                "schemes" => c.schemes = list(k, v)?,
                "channel" => c.channel = one(k, v)?,
                "info_target" => {
                    c.info = InfoGrid::Targets(list(k, v)?);
                    info_keys += 1;
                }
                "stop_time" => {
                    c.info = InfoGrid::StopTimes(list(k, v)?);
                    info_keys += 1;
                }
                "coupled_m" => {
                    let m: Vec<f64> = list(k, v)?;
                    c.info = InfoGrid::Targets(m.iter().map(|&m| coupled_target(m)).collect());
                    let t: Vec<f64> = m.iter().map(|&m| coupled_interval(m)).collect();
                    c.interval_v = t.clone();
                    c.interval_u = t;
                    info_keys += 1;
                }
                "target_mse" => {
                    c.info = InfoGrid::TargetMse {
                        mse: one(k, v)?,
                        s_min: -2.0,
                        s_max: 12.0,
                    };
                    info_keys += 1;
                }
                "mse_search" | "interval_v" | "interval_u" => {}
                "sensors" => c.sensors = list(k, v)?,
                "snr_db" => c.snr_db = list(k, v)?,
                "x_bound" => c.x_bound = list(k, v)?,
                "x" => {
                    let p: Vec<f64> = list(k, v)?;
                    if p.len() != 2 {
                        return Err(Error::config("x: expected re,im"));
                    }
                    c.x = Some(ComplexValue::new(p[0], p[1]));
                }
                "trials" => c.trials = one(k, v)?,
                "seed" => c.master_seed = one(k, v)?,
                "bits_v" => c.bits_v = one(k, v)?,
                "bits_u" => c.bits_u = one(k, v)?,
                "bits_final" => {
                    c.bits_final = if v.eq_ignore_ascii_case("auto") {
                        BitsFinal::Auto
                    } else {
                        BitsFinal::Fixed(one(k, v)?)
                    }
                }
                "calibration" => {
                    c.calibration = if v.eq_ignore_ascii_case("auto") {
                        CalibrationSource::Auto
                    } else {
                        let p = base.map_or_else(|| PathBuf::from(v), |b| b.join(v));
                        let text = std::fs::read_to_string(&p)
                            .map_err(|e| Error::from(e).context(format!("calibration file {}", p.display())))?;
                        CalibrationSource::Report(CalibrationReport::from_text(&text)?)
                    }
                }
                "calibration_paths" => c.calibration_paths = one(k, v)?,
                "calibration_samples" => c.calibration_samples = one(k, v)?,
                "calibration_tol" => c.calibration_tol = one(k, v)?,
                "obs_theta" => c.obs_theta = Some(one(k, v)?),
                "obs_sigma" => c.obs_sigma = Some(one(k, v)?),
                "output" => c.output = Some(PathBuf::from(v)),
                _ => unreachable!("key list checked above"),
            }
        }
        if info_keys > 1 {
            return Err(Error::config(
                "give exactly one of info_target, stop_time, coupled_m, target_mse",
            ));
        }
        if let Some(v) = map.get("interval_v") {
            c.interval_v = list("interval_v", v)?;
        }
        if let Some(v) = map.get("interval_u") {
            c.interval_u = list("interval_u", v)?;
        }
        if let Some(v) = map.get("mse_search") {
            match &mut c.info {
                InfoGrid::TargetMse { s_min, s_max, .. } => {
                    let r: Vec<f64> = list("mse_search", v)?;
                    if r.len() != 2 {
                        return Err(Error::config("mse_search: expected s_min,s_max"));
                    }
                    (*s_min, *s_max) = (r[0], r[1]);
                }
                _ => return Err(Error::config("mse_search needs target_mse")),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes must not be empty"));
        }
        if self.info.is_empty() || self.sensors.is_empty() || self.snr_db.is_empty() || self.x_bound.is_empty() {
            return Err(Error::config("every grid list must be non-empty"));
        }
        if let Some(k) = self.sensors.iter().find(|&&k| k == 0 || k > 256) {
            return Err(Error::config(format!("sensor count must be in 1..=256, got {k}")));
        }
        if let Some(b) = self.x_bound.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::config(format!("x_bound must be positive, got {b}")));
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::config(format!("snr_db must be finite, got {s}")));
        }
        match &self.info {
            InfoGrid::Targets(v) => {
                if let Some(j) = v.iter().find(|j| !(**j > 0.0 && j.is_finite())) {
                    return Err(Error::config(format!("info_target must be positive, got {j}")));
                }
            }
            InfoGrid::StopTimes(v) => {
                if self.channel.is_fading() {
                    return Err(Error::config("stop_time grids need awgn channels"));
                }
                if v.contains(&0) {
                    return Err(Error::config("stop_time must be at least 1"));
                }
            }
            InfoGrid::TargetMse { mse, s_min, s_max } => {
                if !(*mse > 0.0 && s_min < s_max) {
                    return Err(Error::config("target_mse must be positive with s_min < s_max"));
                }
            }
        }
        let fixed_mse = matches!(self.info, InfoGrid::TargetMse { .. });
        let n = self.info.len();
        let needs_v = self.schemes.iter().any(|k| {
            k.lt_v() || k.uniform_v() || (*k == SchemeKind::Dmle && self.bits_final == BitsFinal::Auto)
        });
        let needs_u = self.schemes.iter().any(|k| k.lt_u() || k.uniform_u());
        for (name, v, needed) in [("interval_v", &self.interval_v, needs_v), ("interval_u", &self.interval_u, needs_u)] {
            if fixed_mse {
                continue;
            }
            if needed && v.is_empty() {
                return Err(Error::config(format!("{name} is required by the selected schemes")));
            }
            if !v.is_empty() && v.len() != 1 && v.len() != n {
                return Err(Error::config(format!(
                    "{name} has {} entries; expected 1 or one per info entry ({n})",
                    v.len()
                )));
            }
            if let Some(t) = v.iter().find(|t| !(**t >= 1.0 && t.is_finite())) {
                return Err(Error::config(format!("{name} entries must be at least 1, got {t}")));
            }
        }
        if self.channel == ChannelKind::Awgn {
            if let Some(k) = self.schemes.iter().find(|k| !k.is_awgn_only() && **k != SchemeKind::Centralized) {
                return Err(Error::config(format!("{k} is a fading-channel scheme")));
            }
        } else if let Some(k) = self.schemes.iter().find(|k| k.is_awgn_only()) {
            return Err(Error::config(format!("{k} needs awgn channels")));
        }
        if let BitsFinal::Fixed(b) = self.bits_final {
            if !(1..=crate::quant::MAX_BITS).contains(&b) {
                return Err(Error::config(format!("bits_final must be in 1..=16, got {b}")));
            }
        }
        for (name, b) in [("bits_v", self.bits_v), ("bits_u", self.bits_u)] {
            if !(1..=crate::quant::MAX_BITS).contains(&b) {
                return Err(Error::config(format!("{name} must be in 1..=16, got {b}")));
            }
        }
        if !(self.calibration_tol > 0.0 && self.calibration_tol <= 0.1) {
            return Err(Error::config("calibration_tol must be in (0, 0.1]"));
        }
        Ok(())
    }

    /// Interval entry `i` of a list that has one entry or one per info entry.
    pub fn interval_at(list: &[f64], i: usize) -> Option<f64> {
        match list.len() {
            0 => None,
            1 => Some(list[0]),
            _ => list.get(i).copied(),
        }
    }
}

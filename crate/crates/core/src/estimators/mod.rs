//! Decentralized estimation schemes.
//!
//! Each scheme is a pair of state machines: [`SensorState`] decides when a
//! sensor transmits and what, [`FcState`] turns the received bits back into
//! the approximations `Ṽ_t`, `Ũ_t`, decides when to stop and forms the
//! estimate.
//!
//! | kind        | `U` reported by        | `V` reported by            | stop rule        |
//! |-------------|------------------------|----------------------------|------------------|
//! | `Dmle`      | known (AWGN)           | one `R_k`-bit block at `T` | `t = t_J`        |
//! | `LtDmle`    | known (AWGN)           | level-triggered            | `t = t_J`        |
//! | `LtSDmle`   | level-triggered        | one `R_k`-bit block at `T` | `Ũ_t ≥ J`        |
//! | `LtDsDmle`  | level-triggered        | level-triggered            | `Ũ_t ≥ J`        |
//! | `USDmle`    | every `T_U` steps      | one `R_k`-bit block at `T` | `Ũ_t ≥ J`        |
//! | `UDsDmle`   | every `T_U` steps      | every `T_V` steps          | `Ũ_t ≥ J`        |
//! | `ObsMle`    | sign bits every step   | sign bits every step       | exact `U_t ≥ J`  |

mod fusion;
mod message;
mod sensor;

use std::fmt;
use std::str::FromStr;

pub use fusion::{finalize, obs_mle_estimate, FcState};
pub use message::{
    decode_frame, decode_message, encode_frame, encode_message, read_transcript, write_transcript,
    Message, MessageKind, ObsSigns, Sign, Transcript, FRAME_HEADER_BITS,
};
pub use sensor::{final_message, sensor_step, SensorState, StepInput};

use crate::error::{Error, Result};
use crate::quant::{MidRiserQuantizer, MAX_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Optimal centralized MLE; all raw observations available. Used as the
    /// reference curve.
    Centralized,
    Dmle,
    LtDmle,
    LtSDmle,
    LtDsDmle,
    USDmle,
    UDsDmle,
    ObsMle,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 8] = [
        SchemeKind::Centralized,
        SchemeKind::Dmle,
        SchemeKind::LtDmle,
        SchemeKind::LtSDmle,
        SchemeKind::LtDsDmle,
        SchemeKind::USDmle,
        SchemeKind::UDsDmle,
        SchemeKind::ObsMle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Centralized => "centralized",
            SchemeKind::Dmle => "dmle",
            SchemeKind::LtDmle => "lt-dmle",
            SchemeKind::LtSDmle => "lt-sdmle",
            SchemeKind::LtDsDmle => "lt-dsdmle",
            SchemeKind::USDmle => "u-sdmle",
            SchemeKind::UDsDmle => "u-dsdmle",
            SchemeKind::ObsMle => "obs-mle",
        }
    }

    /// Stops at the deterministic AWGN time and divides by the exact `U`.
    pub fn is_awgn_only(self) -> bool {
        matches!(self, SchemeKind::Dmle | SchemeKind::LtDmle)
    }

    pub fn lt_v(self) -> bool {
        matches!(self, SchemeKind::LtDmle | SchemeKind::LtDsDmle)
    }

    pub fn lt_u(self) -> bool {
        matches!(self, SchemeKind::LtSDmle | SchemeKind::LtDsDmle)
    }

    pub fn uniform_u(self) -> bool {
        matches!(self, SchemeKind::USDmle | SchemeKind::UDsDmle)
    }

    pub fn uniform_v(self) -> bool {
        self == SchemeKind::UDsDmle
    }

    /// Sends one `R_k`-bit quantized `V^k` at the stop time.
    pub fn final_block(self) -> bool {
        matches!(
            self,
            SchemeKind::Dmle | SchemeKind::LtSDmle | SchemeKind::USDmle
        )
    }

    /// Stops when the reconstructed `Ũ_t` reaches the target.
    pub fn stops_on_u_tilde(self) -> bool {
        self.lt_u() || self.uniform_u()
    }

    pub fn uses_d(self) -> bool {
        self.lt_v()
    }

    pub fn uses_e(self) -> bool {
        self.lt_u()
    }

    pub fn uses_phi(self) -> bool {
        self.lt_v() || self.uniform_v() || self.final_block()
    }

    pub fn uses_theta(self) -> bool {
        self.lt_u() || self.uniform_u()
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = SchemeKind::ALL.iter().map(|k| k.name()).collect();
                Error::config(format!("unknown scheme {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Protocol parameters. Per-sensor vectors may be left empty when the kind
/// does not use them; anything that is set must be valid.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Target Fisher information `J`.
    pub target_info: f64,
    /// `V` thresholds `d_k`.
    pub d: Vec<f64>,
    /// `U` thresholds `e_k`.
    pub e: Vec<f64>,
    pub period_u: u64,
    pub period_v: u64,
    pub bits_v: u8,
    pub bits_u: u8,
    /// `R_k`, bits of the fixed-time `V` block.
    pub bits_final: Vec<u8>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    /// Obs-MLE channel quantizer span `θ` (levels `±θ/2`).
    pub obs_theta: Option<f64>,
    /// Obs-MLE common noise standard deviation `σ`.
    pub obs_sigma: Option<f64>,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, target_info: f64) -> Self {
        Self {
            kind,
            target_info,
            d: Vec::new(),
            e: Vec::new(),
            period_u: 1,
            period_v: 1,
            bits_v: 1,
            bits_u: 1,
            bits_final: Vec::new(),
            phi: Vec::new(),
            theta: Vec::new(),
            obs_theta: None,
            obs_sigma: None,
        }
    }

    pub fn validate(&self, sensors: usize) -> Result<()> {
        let kind = self.kind;
        if !(self.target_info > 0.0 && self.target_info.is_finite()) {
            return Err(Error::config(format!(
                "target information must be positive, got {}",
                self.target_info
            )));
        }
        if self.period_u < 1 || self.period_v < 1 {
            return Err(Error::config("sampling periods must be at least 1"));
        }
        for (name, bits) in [("r_V", self.bits_v), ("r_U", self.bits_u)] {
            if !(1..=MAX_BITS).contains(&bits) {
                return Err(Error::config(format!("{name} must be in 1..={MAX_BITS}, got {bits}")));
            }
        }
        check_positive("d", &self.d, sensors, kind.uses_d())?;
        check_positive("e", &self.e, sensors, kind.uses_e())?;
        check_positive("phi", &self.phi, sensors, kind.uses_phi())?;
        check_positive("theta", &self.theta, sensors, kind.uses_theta())?;
        if !self.bits_final.is_empty() || kind.final_block() {
            if self.bits_final.len() != sensors {
                return Err(Error::config(format!(
                    "{kind}: bits_final needs {sensors} entries, got {}",
                    self.bits_final.len()
                )));
            }
            if let Some(b) = self.bits_final.iter().find(|b| !(1..=MAX_BITS).contains(*b)) {
                return Err(Error::config(format!("R_k must be in 1..={MAX_BITS}, got {b}")));
            }
        }
        for (name, v) in [("obs_theta", self.obs_theta), ("obs_sigma", self.obs_sigma)] {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => {
                    return Err(Error::config(format!("{name} must be positive, got {x}")))
                }
                None if kind == SchemeKind::ObsMle => {
                    return Err(Error::config(format!("obs-mle requires {name}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn check_positive(name: &str, values: &[f64], sensors: usize, required: bool) -> Result<()> {
    if values.is_empty() && !required {
        return Ok(());
    }
    if values.len() != sensors {
        return Err(Error::config(format!(
            "{name} needs {sensors} entries, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::config(format!("{name} entries must be positive, got {v}")));
    }
    Ok(())
}

/// Per-sensor quantizers fixed for the whole run.
#[derive(Debug, Clone)]
pub(crate) struct Codebook {
    pub lt_v: Option<MidRiserQuantizer>,
    pub lt_u: Option<MidRiserQuantizer>,
    pub uni_v: Option<MidRiserQuantizer>,
    pub uni_u: Option<MidRiserQuantizer>,
}

/// A validated [`SchemeConfig`] for a network of a given size, with the
/// quantizers both sides derive from it.
#[derive(Debug, Clone)]
pub struct Scheme {
    config: SchemeConfig,
    sensors: usize,
    codebooks: Vec<Codebook>,
}

impl Scheme {
    pub fn new(config: SchemeConfig, sensors: usize) -> Result<Self> {
        config.validate(sensors)?;
        let kind = config.kind;
        let codebooks = (0..sensors)
            .map(|k| {
                Ok(Codebook {
                    lt_v: kind
                        .lt_v()
                        .then(|| MidRiserQuantizer::lt_v_overshoot(config.phi[k], config.bits_v))
                        .transpose()?,
                    lt_u: kind
                        .lt_u()
                        .then(|| MidRiserQuantizer::lt_u_overshoot(config.theta[k], config.bits_u))
                        .transpose()?,
                    uni_v: kind
                        .uniform_v()
                        .then(|| MidRiserQuantizer::uniform_v(config.period_v, config.phi[k], config.bits_v))
                        .transpose()?,
                    uni_u: kind
                        .uniform_u()
                        .then(|| MidRiserQuantizer::uniform_u(config.period_u, config.theta[k], config.bits_u))
                        .transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            sensors,
            codebooks,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn kind(&self) -> SchemeKind {
        self.config.kind
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub(crate) fn codebook(&self, sensor: usize) -> &Codebook {
        &self.codebooks[sensor]
    }

    /// Quantizer of the fixed-time `V` block for `sensor` at stop time `t`.
    pub fn final_quantizer(&self, sensor: usize, stop_time: u64) -> Result<MidRiserQuantizer> {
        MidRiserQuantizer::fixed_time_block(
            stop_time,
            self.config.phi[sensor],
            self.config.bits_final[sensor],
        )
    }

    /// Largest value one `U` message can add to `Ũ` for `sensor`.
    pub fn max_u_message(&self, sensor: usize) -> f64 {
        let cb = &self.codebooks[sensor];
        match (cb.lt_u, cb.uni_u) {
            (Some(q), _) => self.config.e[sensor] + q.max_level(),
            (None, Some(q)) => q.max_level(),
            _ => 0.0,
        }
    }

    /// Upper end of the stopping sandwich `J ≤ Ũ_T < J + Σ_k max ũ^k`.
    pub fn stopping_sandwich_upper(&self) -> f64 {
        self.config.target_info + (0..self.sensors).map(|k| self.max_u_message(k)).sum::<f64>()
    }

    /// Payload bits of every message of the given kind from `sensor`.
    pub fn payload_bits(&self, kind: MessageKind, sensor: usize) -> u32 {
        let c = &self.config;
        match kind {
            MessageKind::VLt | MessageKind::VUni => u32::from(c.bits_v),
            MessageKind::ULt | MessageKind::UUni => u32::from(c.bits_u),
            MessageKind::VFinal => u32::from(c.bits_final[sensor]),
            MessageKind::ObsBits => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_roundtrip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert_eq!("LT_dsDMLE".parse::<SchemeKind>().unwrap(), SchemeKind::LtDsDmle);
        assert!("foo".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn validation_requires_relevant_fields() {
        let mut c = SchemeConfig::new(SchemeKind::LtDsDmle, 100.0);
        assert!(c.validate(2).is_err());
        c.d = vec![1.0, 1.0];
        c.e = vec![1.0, 1.0];
        c.phi = vec![1.0, 1.0];
        c.theta = vec![1.0, 1.0];
        c.validate(2).unwrap();
        // Irrelevant but set and invalid.
        c.bits_final = vec![0, 3];
        assert!(c.validate(2).is_err());
        c.bits_final.clear();
        c.period_u = 0;
        assert!(c.validate(2).is_err());
        c.period_u = 1;
        c.d = vec![1.0];
        assert!(c.validate(2).is_err());

        let mut o = SchemeConfig::new(SchemeKind::ObsMle, 10.0);
        assert!(o.validate(3).is_err());
        o.obs_theta = Some(1.0);
        o.obs_sigma = Some(0.7);
        o.validate(3).unwrap();
    }

    #[test]
    fn sandwich_upper_matches_closed_form() {
        let mut c = SchemeConfig::new(SchemeKind::LtDsDmle, 100.0);
        c.d = vec![2.0; 3];
        c.e = vec![3.0; 3];
        c.phi = vec![4.0; 3];
        c.theta = vec![8.0; 3];
        c.bits_u = 2;
        let s = Scheme::new(c, 3).unwrap();
        // e + θ(2^{r+1}-1)/2^{r+1}
        let per = 3.0 + 8.0 * 7.0 / 8.0;
        assert!((s.stopping_sandwich_upper() - (100.0 + 3.0 * per)).abs() < 1e-12);

        let mut c = SchemeConfig::new(SchemeKind::UDsDmle, 100.0);
        c.phi = vec![4.0; 2];
        c.theta = vec![8.0; 2];
        c.period_u = 3;
        let s = Scheme::new(c, 2).unwrap();
        let per = 3.0 * 8.0 * 3.0 / 4.0;
        assert!((s.stopping_sandwich_upper() - (100.0 + 2.0 * per)).abs() < 1e-12);
    }
}

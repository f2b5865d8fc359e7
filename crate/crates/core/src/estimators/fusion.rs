use super::message::Message;
use super::sensor::{final_message, SensorState};
use super::{Scheme, SchemeKind};
use crate::error::{Error, Result};
use crate::signal::{awgn_fisher_rate, awgn_stopping_time, SensorModel};
use crate::stats::normal_quantile;

/// Fusion-center state.
#[derive(Debug, Clone, PartialEq)]
pub struct FcState {
    /// `Ṽ_t`.
    pub v_tilde: f64,
    /// `Ũ_t`.
    pub u_tilde: f64,
    /// Exact `U_t`. Known in advance under AWGN; for Obs-MLE it is fed by the
    /// simulator and used only for the stop decision.
    pub u_exact: f64,
    /// `N_t^k`: `V` messages per sensor (fixed-time blocks excluded).
    pub n_v: Vec<u64>,
    /// `M_t^k`: `U` messages per sensor.
    pub n_u: Vec<u64>,
    /// Obs-MLE agreement count `N_t`.
    pub n_agree: u64,
    pub bits_received: u64,
    pub bits_v: u64,
    pub bits_u: u64,
    pub bits_final: u64,
    pub stopped_at: Option<u64>,
    final_seen: Vec<bool>,
    awgn_rate: Option<f64>,
    awgn_stop: Option<u64>,
}

impl FcState {
    pub fn new(scheme: &Scheme, sensors: &[SensorModel]) -> Result<Self> {
        if sensors.len() != scheme.sensors() {
            return Err(Error::config(format!(
                "scheme built for {} sensors, network has {}",
                scheme.sensors(),
                sensors.len()
            )));
        }
        let kind = scheme.kind();
        let (awgn_rate, awgn_stop) = if kind.is_awgn_only() {
            let rate = awgn_fisher_rate(sensors).map_err(|_| {
                Error::config(format!("{kind} needs AWGN channels at every sensor"))
            })?;
            (
                Some(rate),
                Some(awgn_stopping_time(scheme.config().target_info, sensors)?),
            )
        } else {
            (None, None)
        };
        let k = sensors.len();
        Ok(Self {
            v_tilde: 0.0,
            u_tilde: 0.0,
            u_exact: 0.0,
            n_v: vec![0; k],
            n_u: vec![0; k],
            n_agree: 0,
            bits_received: 0,
            bits_v: 0,
            bits_u: 0,
            bits_final: 0,
            stopped_at: None,
            final_seen: vec![false; k],
            awgn_rate,
            awgn_stop,
        })
    }

    /// Deterministic stop time under AWGN.
    pub fn awgn_stop(&self) -> Option<u64> {
        self.awgn_stop
    }

    /// Side channel: exact Fisher information gathered network-wide at this
    /// step. AWGN schemes ignore it and use the known rate.
    pub fn observe_exact_fisher(&mut self, u_inc: f64) {
        if self.awgn_rate.is_none() {
            self.u_exact += u_inc;
        }
    }

    /// Applies a decoded message. Messages arriving after the stop are
    /// ignored, except the fixed-time blocks sent at the stop time.
    pub fn apply(&mut self, scheme: &Scheme, msg: &Message) -> Result<()> {
        let sensor = usize::from(msg.sensor());
        if sensor >= scheme.sensors() {
            return Err(Error::protocol(format!("message from unknown sensor {sensor}")));
        }
        if let Some(stop) = self.stopped_at {
            match msg {
                Message::VFinal { t, .. } if *t == stop => {}
                _ => return Ok(()),
            }
        }
        let cfg = scheme.config();
        let cb = scheme.codebook(sensor);
        let missing = |what: &str| Error::protocol(format!("{what} message not used by {}", cfg.kind));
        let bits = u64::from(msg.payload_bits());
        match *msg {
            Message::VLt { sign, q_index, .. } => {
                let q = cb.lt_v.as_ref().ok_or_else(|| missing("level-triggered V"))?;
                self.v_tilde += sign.value() * (cfg.d[sensor] + q.dequantize(q_index)?);
                self.n_v[sensor] += 1;
                self.bits_v += bits;
            }
            Message::ULt { p_index, .. } => {
                let q = cb.lt_u.as_ref().ok_or_else(|| missing("level-triggered U"))?;
                self.u_tilde += cfg.e[sensor] + q.dequantize(p_index)?;
                self.n_u[sensor] += 1;
                self.bits_u += bits;
            }
            Message::VUni { index, .. } => {
                let q = cb.uni_v.as_ref().ok_or_else(|| missing("uniform V"))?;
                self.v_tilde += q.dequantize(index)?;
                self.n_v[sensor] += 1;
                self.bits_v += bits;
            }
            Message::UUni { index, .. } => {
                let q = cb.uni_u.as_ref().ok_or_else(|| missing("uniform U"))?;
                self.u_tilde += q.dequantize(index)?;
                self.n_u[sensor] += 1;
                self.bits_u += bits;
            }
            Message::VFinal { t, index, .. } => {
                if !cfg.kind.final_block() {
                    return Err(missing("fixed-time V"));
                }
                if std::mem::replace(&mut self.final_seen[sensor], true) {
                    return Err(Error::protocol(format!(
                        "duplicate fixed-time block from sensor {sensor}"
                    )));
                }
                self.v_tilde += scheme.final_quantizer(sensor, t)?.dequantize(index)?;
                self.bits_final += bits;
            }
            Message::ObsBits { signs, .. } => {
                if cfg.kind != SchemeKind::ObsMle {
                    return Err(missing("observation sign"));
                }
                self.n_agree += signs.agreements();
                // Two bits describe y, two describe h.
                self.bits_v += 2;
                self.bits_u += 2;
            }
        }
        self.bits_received += bits;
        Ok(())
    }

    /// Exact `U_t` as the FC knows it.
    pub fn exact_fisher(&self, t: u64) -> f64 {
        match self.awgn_rate {
            Some(rate) => t as f64 * rate,
            None => self.u_exact,
        }
    }

    /// Stop decision after all messages of step `t` were applied.
    pub fn should_stop(&self, scheme: &Scheme, t: u64) -> bool {
        let kind = scheme.kind();
        let target = scheme.config().target_info;
        if let Some(stop) = self.awgn_stop {
            t >= stop
        } else if kind.stops_on_u_tilde() {
            self.u_tilde >= target
        } else {
            self.u_exact >= target
        }
    }

    pub fn mark_stopped(&mut self, t: u64) {
        self.stopped_at.get_or_insert(t);
    }
}

/// Collects the fixed-time blocks (when the scheme uses them), applies them
/// and forms the final estimate. Returns the estimate and the final messages.
pub fn finalize(
    scheme: &Scheme,
    fc: &mut FcState,
    sensors: &[SensorState],
    stop_time: u64,
) -> Result<(f64, Vec<Message>)> {
    if fc.stopped_at != Some(stop_time) {
        return Err(Error::protocol(format!(
            "finalize at {stop_time} but FC stopped at {:?}",
            fc.stopped_at
        )));
    }
    let mut finals = Vec::new();
    for (k, st) in sensors.iter().enumerate() {
        if let Some(m) = final_message(scheme, k, st, stop_time)? {
            fc.apply(scheme, &m)?;
            finals.push(m);
        }
    }
    let cfg = scheme.config();
    let estimate = match cfg.kind {
        SchemeKind::ObsMle => obs_mle_estimate(
            fc.n_agree,
            scheme.sensors() as u64,
            stop_time,
            cfg.obs_sigma.unwrap_or(1.0),
            cfg.obs_theta.unwrap_or(1.0),
        ),
        SchemeKind::Centralized => {
            return Err(Error::config("the centralized estimator has no fusion-center protocol"))
        }
        kind => {
            let denom = if kind.is_awgn_only() {
                fc.exact_fisher(stop_time)
            } else {
                fc.u_tilde
            };
            if !(denom > 0.0) {
                return Err(Error::DegenerateFisher(denom));
            }
            fc.v_tilde / denom
        }
    };
    Ok((estimate, finals))
}

/// `(2σ/θ)·Φ⁻¹(N_t / 2Kt)` with `N_t` clamped to `[1, 2Kt - 1]`.
pub fn obs_mle_estimate(n_agree: u64, sensor_count: u64, t: u64, sigma: f64, theta: f64) -> f64 {
    let pairs = 2 * sensor_count * t;
    let n = n_agree.clamp(1, pairs.saturating_sub(1).max(1));
    let p = n as f64 / pairs as f64;
    // pairs >= 2 keeps p inside (0, 1)
    let z = normal_quantile(p).unwrap_or(0.0);
    2.0 * sigma / theta * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::message::Sign;
    use crate::estimators::SchemeConfig;
    use crate::quant::QuantIndex;
    use crate::signal::ComplexValue;

    fn awgn(k: usize) -> Vec<SensorModel> {
        (0..k).map(|_| SensorModel::awgn(ComplexValue::new(1.0, 0.0), 1.0)).collect()
    }

    fn lt_ds(bits_v: u8, bits_u: u8) -> Scheme {
        let mut c = SchemeConfig::new(SchemeKind::LtDsDmle, 10.0);
        c.d = vec![2.0];
        c.e = vec![1.0];
        c.phi = vec![2.0];
        c.theta = vec![1.0];
        c.bits_v = bits_v;
        c.bits_u = bits_u;
        Scheme::new(c, 1).unwrap()
    }

    #[test]
    fn lt_v_recovery() {
        let s = lt_ds(3, 2);
        let mut fc = FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).unwrap();
        // [0, 2] with 4 cells of 0.5: index 1 -> 0.75
        fc.apply(&s, &Message::VLt { sensor: 0, t: 1, sign: Sign::Plus, q_index: QuantIndex::new(1, 2).unwrap() })
            .unwrap();
        assert_eq!(fc.v_tilde, 2.75);
        fc.apply(&s, &Message::VLt { sensor: 0, t: 2, sign: Sign::Minus, q_index: QuantIndex::new(0, 2).unwrap() })
            .unwrap();
        assert_eq!(fc.v_tilde, 2.75 - 2.25);
        assert_eq!(fc.bits_v, 6);
        assert_eq!(fc.n_v[0], 2);
    }

    #[test]
    fn lt_u_recovery() {
        let s = lt_ds(1, 1);
        let mut fc = FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).unwrap();
        // [0, 1] with 2 cells: index 0 -> 0.25
        fc.apply(&s, &Message::ULt { sensor: 0, t: 1, p_index: QuantIndex::new(0, 1).unwrap() }).unwrap();
        assert_eq!(fc.u_tilde, 1.25);
        assert_eq!(fc.bits_u, 1);
    }

    #[test]
    fn wrong_message_kind_is_protocol_error() {
        let s = lt_ds(1, 1);
        let mut fc = FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).unwrap();
        let m = Message::UUni { sensor: 0, t: 1, index: QuantIndex::new(0, 1).unwrap() };
        assert!(matches!(fc.apply(&s, &m), Err(Error::Protocol(_))));
        let m = Message::ULt { sensor: 0, t: 1, p_index: QuantIndex::new(3, 2).unwrap() };
        assert!(matches!(fc.apply(&s, &m), Err(Error::Protocol(_))));
    }

    #[test]
    fn stop_boundary() {
        let s = lt_ds(1, 1);
        let mut fc = FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).unwrap();
        fc.u_tilde = 10.0 - 1e-9;
        assert!(!fc.should_stop(&s, 5));
        fc.u_tilde = 10.0;
        assert!(fc.should_stop(&s, 5));
    }

    #[test]
    fn ignores_messages_after_stop() {
        let s = lt_ds(1, 1);
        let mut fc = FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).unwrap();
        fc.mark_stopped(3);
        let before = fc.clone();
        fc.apply(&s, &Message::ULt { sensor: 0, t: 4, p_index: QuantIndex::new(0, 1).unwrap() }).unwrap();
        assert_eq!(fc, before);
    }

    #[test]
    fn ratio_estimate() {
        let s = lt_ds(1, 1);
        let mut fc = FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).unwrap();
        fc.v_tilde = 5.0;
        fc.u_tilde = 4.0;
        fc.mark_stopped(7);
        let (est, finals) = finalize(&s, &mut fc, &[SensorState::default()], 7).unwrap();
        assert_eq!(est, 1.25);
        assert!(finals.is_empty());

        let mut fc = FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).unwrap();
        fc.mark_stopped(1);
        assert!(matches!(
            finalize(&s, &mut fc, &[SensorState::default()], 1),
            Err(Error::DegenerateFisher(_))
        ));
    }

    fn dmle(bits: u8, phi: f64, target: f64) -> Scheme {
        let mut c = SchemeConfig::new(SchemeKind::Dmle, target);
        c.phi = vec![phi];
        c.bits_final = vec![bits];
        Scheme::new(c, 1).unwrap()
    }

    #[test]
    fn dmle_exact_level_matches_centralized() {
        // K=1, σ²=1, h=1: rate 2, J=20 -> t=10; block on [-10, 10], 2 bits,
        // levels {-7.5, -2.5, 2.5, 7.5}.
        let s = dmle(2, 1.0, 20.0);
        let sensors = awgn(1);
        let mut fc = FcState::new(&s, &sensors).unwrap();
        assert_eq!(fc.awgn_stop(), Some(10));
        assert!(fc.should_stop(&s, 10));
        fc.mark_stopped(10);
        let st = SensorState { v_acc: 7.5, ..Default::default() };
        let (est, finals) = finalize(&s, &mut fc, &[st], 10).unwrap();
        assert_eq!(finals.len(), 1);
        assert_eq!(est, 7.5 / 20.0);
        assert_eq!(fc.bits_final, 2);
    }

    #[test]
    fn dmle_overflow_maps_to_extreme_level() {
        let s = dmle(3, 1.0, 20.0);
        let mut fc = FcState::new(&s, &awgn(1)).unwrap();
        fc.mark_stopped(10);
        let st = SensorState { v_acc: 15.0, ..Default::default() };
        let (est, _) = finalize(&s, &mut fc, &[st], 10).unwrap();
        assert_eq!(fc.v_tilde, 10.0 * 7.0 / 8.0);
        assert_eq!(est, fc.v_tilde / 20.0);
    }

    #[test]
    fn awgn_schemes_reject_fading() {
        let s = dmle(3, 1.0, 20.0);
        assert!(FcState::new(&s, &[SensorModel::rayleigh(1.0, 1.0)]).is_err());
    }

    #[test]
    fn obs_mle_formula() {
        assert_eq!(obs_mle_estimate(15, 5, 3, 1.0, 2.0), 0.0);
        // N/(2Kt) = 0.841345 -> Φ⁻¹ ≈ 1
        let pairs = 2_000_000u64;
        let n = (0.841_344_746 * pairs as f64).round() as u64;
        let est = obs_mle_estimate(n, 1, pairs / 2, 1.0, 2.0);
        assert!((est - 1.0).abs() < 1e-4, "{est}");
        let top = obs_mle_estimate(30, 5, 3, 1.0, 2.0);
        assert!(top.is_finite() && top > 0.0);
        let bottom = obs_mle_estimate(0, 5, 3, 1.0, 2.0);
        assert!(bottom.is_finite() && bottom < 0.0);
    }
}

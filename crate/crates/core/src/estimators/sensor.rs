use super::message::{Message, ObsSigns, Sign};
use super::{Scheme, SchemeKind};
use crate::error::Result;
use crate::signal::{ComplexValue, LocalIncrements};

/// What a sensor sees at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub h: ComplexValue,
    pub y: ComplexValue,
    pub inc: LocalIncrements,
}

/// Sensor-side state. `v_ref`/`u_ref` hold the running sums at the last
/// sampling instant (level-triggered) or grid point (uniform).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorState {
    pub v_acc: f64,
    pub u_acc: f64,
    pub v_ref: f64,
    pub u_ref: f64,
    pub msg_count_v: u64,
    pub msg_count_u: u64,
    pub last_v_inc: f64,
    pub last_u_inc: f64,
    /// Triggered messages whose overshoot was checked against the last
    /// increment, and how many of them broke the bound.
    pub overshoot_checks: u64,
    pub overshoot_violations: u64,
}

impl SensorState {
    #[inline]
    fn check_overshoot(&mut self, overshoot: f64, last: f64) {
        self.overshoot_checks += 1;
        if !(overshoot < last) {
            self.overshoot_violations += 1;
        }
    }
}

/// Advances one sensor by one time step and appends what it transmits to
/// `out`: at most one `U` message followed by at most one `V` message.
pub fn sensor_step(
    scheme: &Scheme,
    sensor: usize,
    state: &mut SensorState,
    input: &StepInput,
    t: u64,
    out: &mut Vec<Message>,
) -> Result<()> {
    let inc = input.inc;
    state.v_acc += inc.v_inc;
    state.u_acc += inc.u_inc;
    state.last_v_inc = inc.v_inc;
    state.last_u_inc = inc.u_inc;

    let cfg = scheme.config();
    let cb = scheme.codebook(sensor);
    let id = sensor as u8;

    if let Some(q) = &cb.lt_u {
        let delta = state.u_acc - state.u_ref;
        let e = cfg.e[sensor];
        if delta >= e {
            let p = delta - e;
            state.check_overshoot(p, inc.u_inc);
            out.push(Message::ULt {
                sensor: id,
                t,
                p_index: q.quantize(p)?,
            });
            state.u_ref = state.u_acc;
            state.msg_count_u += 1;
        }
    } else if let Some(q) = &cb.uni_u {
        if t.is_multiple_of(cfg.period_u) {
            out.push(Message::UUni {
                sensor: id,
                t,
                index: q.quantize(state.u_acc - state.u_ref)?,
            });
            state.u_ref = state.u_acc;
            state.msg_count_u += 1;
        }
    }

    if let Some(q) = &cb.lt_v {
        let delta = state.v_acc - state.v_ref;
        let d = cfg.d[sensor];
        if delta.abs() >= d {
            let overshoot = delta.abs() - d;
            state.check_overshoot(overshoot, inc.v_inc.abs());
            out.push(Message::VLt {
                sensor: id,
                t,
                sign: Sign::of(delta),
                q_index: q.quantize(overshoot)?,
            });
            state.v_ref = state.v_acc;
            state.msg_count_v += 1;
        }
    } else if let Some(q) = &cb.uni_v {
        if t.is_multiple_of(cfg.period_v) {
            out.push(Message::VUni {
                sensor: id,
                t,
                index: q.quantize(state.v_acc - state.v_ref)?,
            });
            state.v_ref = state.v_acc;
            state.msg_count_v += 1;
        }
    }

    if scheme.kind() == SchemeKind::ObsMle {
        out.push(Message::ObsBits {
            sensor: id,
            t,
            signs: ObsSigns {
                re_y: input.y.re >= 0.0,
                im_y: input.y.im >= 0.0,
                re_h: input.h.re >= 0.0,
                im_h: input.h.im >= 0.0,
            },
        });
    }
    Ok(())
}

/// The fixed-time `V` block a sensor sends once the FC stops at `stop_time`,
/// for schemes that report `V` that way.
pub fn final_message(
    scheme: &Scheme,
    sensor: usize,
    state: &SensorState,
    stop_time: u64,
) -> Result<Option<Message>> {
    if !scheme.kind().final_block() {
        return Ok(None);
    }
    let q = scheme.final_quantizer(sensor, stop_time)?;
    Ok(Some(Message::VFinal {
        sensor: sensor as u8,
        t: stop_time,
        index: q.quantize(state.v_acc)?,
    }))
}

use crate::error::{Error, Result};
use crate::estimators::{finalize, sensor_step, FcState, Message, Scheme, SchemeKind, SensorState, StepInput, Transcript};
use crate::signal::{local_increments, run_centralized, SensorStreams, World, DEFAULT_ITERATION_CAP};

/// Outcome of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scheme: SchemeKind,
    pub seed: u64,
    pub estimate: f64,
    pub true_x_re: f64,
    pub stop_time: u64,
    /// Bits summed over all sensors.
    pub bits_v: u64,
    pub bits_u: u64,
    pub bits_final: u64,
    /// `V` / `U` messages summed over all sensors (fixed-time blocks excluded).
    pub messages_v: u64,
    pub messages_u: u64,
    /// `Ũ` at the stop (exact `U` for the centralized control).
    pub fisher: f64,
    /// Triggered messages checked against the overshoot bound, and violations.
    pub overshoot_checks: u64,
    pub overshoot_violations: u64,
}

impl TrialResult {
    pub fn squared_error(&self) -> f64 {
        (self.estimate - self.true_x_re).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOptions {
    pub iteration_cap: u64,
    pub record_transcript: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            iteration_cap: DEFAULT_ITERATION_CAP,
            record_transcript: false,
        }
    }
}

/// Runs one trial with default options.
pub fn run_trial(scheme: &Scheme, world: &World, seed: u64) -> Result<TrialResult> {
    run_trial_with(scheme, world, seed, TrialOptions::default()).map(|(r, _)| r)
}

/// Runs one trial: synchronous steps, each sensor draws `(h, y)` and reports,
/// the FC applies every message of the step and then checks the stop rule.
/// With `record_transcript` the messages of every step that produced any are
/// returned; the fixed-time blocks are appended to the stop step.
pub fn run_trial_with(
    scheme: &Scheme,
    world: &World,
    seed: u64,
    opts: TrialOptions,
) -> Result<(TrialResult, Option<Transcript>)> {
    let k = world.sensors.len();
    if scheme.sensors() != k {
        return Err(Error::config(format!(
            "scheme built for {} sensors, network has {k}",
            scheme.sensors()
        )));
    }
    let mut streams = SensorStreams::new(seed, k);
    let x = world.truth.x;

    if scheme.kind() == SchemeKind::Centralized {
        let run = run_centralized(
            &world.truth,
            &world.sensors,
            scheme.config().target_info,
            &mut streams,
            opts.iteration_cap,
        )?;
        let result = TrialResult {
            scheme: SchemeKind::Centralized,
            seed,
            estimate: run.estimate,
            true_x_re: x.re,
            stop_time: run.stop_time,
            bits_v: 0,
            bits_u: 0,
            bits_final: 0,
            messages_v: 0,
            messages_u: 0,
            fisher: run.fisher,
            overshoot_checks: 0,
            overshoot_violations: 0,
        };
        return Ok((result, opts.record_transcript.then(Vec::new)));
    }

    let mut fc = FcState::new(scheme, &world.sensors)?;
    let mut states = vec![SensorState::default(); k];
    let mut transcript = opts.record_transcript.then(Vec::new);
    let mut step: Vec<Message> = Vec::new();

    for t in 1..=opts.iteration_cap {
        step.clear();
        let mut u_step = 0.0;
        for (i, model) in world.sensors.iter().enumerate() {
            let s = streams.draw(i, model, x);
            let inc = local_increments(s.y, s.h, model.noise_variance);
            u_step += inc.u_inc;
            let input = StepInput { h: s.h, y: s.y, inc };
            sensor_step(scheme, i, &mut states[i], &input, t, &mut step)?;
        }
        fc.observe_exact_fisher(u_step);
        for m in &step {
            fc.apply(scheme, m)?;
        }
        let stop = fc.should_stop(scheme, t);
        if stop {
            fc.mark_stopped(t);
            let (estimate, finals) = finalize(scheme, &mut fc, &states, t)?;
            step.extend(finals);
            if let Some(tr) = transcript.as_mut() {
                if !step.is_empty() {
                    tr.push((t, step.clone()));
                }
            }
            let fisher = if scheme.kind().stops_on_u_tilde() {
                fc.u_tilde
            } else {
                fc.exact_fisher(t)
            };
            let result = TrialResult {
                scheme: scheme.kind(),
                seed,
                estimate,
                true_x_re: x.re,
                stop_time: t,
                bits_v: fc.bits_v,
                bits_u: fc.bits_u,
                bits_final: fc.bits_final,
                messages_v: fc.n_v.iter().sum(),
                messages_u: fc.n_u.iter().sum(),
                fisher,
                overshoot_checks: states.iter().map(|s| s.overshoot_checks).sum(),
                overshoot_violations: states.iter().map(|s| s.overshoot_violations).sum(),
            };
            return Ok((result, transcript));
        }
        if let Some(tr) = transcript.as_mut() {
            if !step.is_empty() {
                tr.push((t, step.clone()));
            }
        }
    }
    Err(Error::NonTerminating(opts.iteration_cap))
}

/// Replays a transcript through a fresh FC and returns `(Ṽ, Ũ, stop time)`.
/// The stop time is the last step in the transcript.
pub fn replay_transcript(scheme: &Scheme, world: &World, transcript: &Transcript) -> Result<(f64, f64, u64)> {
    let mut fc = FcState::new(scheme, &world.sensors)?;
    let mut last = 0;
    for (t, msgs) in transcript {
        for m in msgs {
            if matches!(m, Message::VFinal { .. }) {
                fc.mark_stopped(*t);
            }
            fc.apply(scheme, m)?;
        }
        last = *t;
    }
    Ok((fc.v_tilde, fc.u_tilde, last))
}

//! Quantizer ranges and sampling thresholds.
//!
//! `φ_k` and `θ_k` are the 99th percentiles of `|v_inc|` and `u_inc`. The
//! level-triggered thresholds `d_k`, `e_k` are found by bisection so that the
//! mean first-passage time of the corresponding crossing rule equals a target
//! sampling interval. Each bisection runs on one fixed bundle of simulated
//! increment paths (common random numbers), which makes the mean interval a
//! nondecreasing step function of the threshold.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::signal::{
    draw_channel_gain, draw_observation, local_increments, ComplexValue, SensorModel,
    DEFAULT_ITERATION_CAP,
};
use crate::stats::empirical_quantile;

pub const PERCENTILE: f64 = 0.99;
pub const MIN_PERCENTILE_SAMPLES: usize = 10_000;
pub const MIN_BUNDLE_PATHS: usize = 2_000;
const MAX_DOUBLINGS: u32 = 60;
const BISECTION_STEPS: u32 = 80;

/// Parameter value used for `V` calibration: `|x| = bound`, split evenly
/// between real and imaginary parts.
pub fn worst_case_x(bound: f64) -> ComplexValue {
    let c = bound / std::f64::consts::SQRT_2;
    ComplexValue::new(c, c)
}

/// 99th percentile of `|2·Re(h* y)/σ²|` with `x` at the worst case for
/// `x_bound`.
pub fn percentile_phi<R: Rng + ?Sized>(
    sensor: &SensorModel,
    x_bound: f64,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    percentile_phi_at(sensor, worst_case_x(x_bound), n, rng)
}

/// [`percentile_phi`] at an explicit parameter value.
pub fn percentile_phi_at<R: Rng + ?Sized>(
    sensor: &SensorModel,
    x: ComplexValue,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    check_samples(n)?;
    let mut draws: Vec<f64> = (0..n)
        .map(|_| increments(sensor, x, rng).v_inc.abs())
        .collect();
    empirical_quantile(&mut draws, PERCENTILE)
}

/// 99th percentile of `2|h|²/σ²`; the deterministic value under AWGN.
pub fn percentile_theta<R: Rng + ?Sized>(sensor: &SensorModel, n: usize, rng: &mut R) -> Result<f64> {
    check_samples(n)?;
    if sensor.is_awgn() {
        return Ok(sensor.mean_fisher_increment());
    }
    let mut draws: Vec<f64> = (0..n)
        .map(|_| {
            let h = draw_channel_gain(sensor, rng);
            2.0 * h.norm_sqr() / sensor.noise_variance
        })
        .collect();
    empirical_quantile(&mut draws, PERCENTILE)
}

/// Closed-form 99th percentile of `u_inc` under Rayleigh fading:
/// `|h|² ~ Exp(mean σ_h²)`, so the quantile is `2σ_h²·ln(100)/σ²`.
pub fn rayleigh_theta_closed_form(gain_variance: f64, noise_variance: f64) -> f64 {
    2.0 * gain_variance * (1.0 / (1.0 - PERCENTILE)).ln() / noise_variance
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_PERCENTILE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "percentile estimate needs at least {MIN_PERCENTILE_SAMPLES} samples, got {n}"
        )));
    }
    Ok(())
}

#[inline]
fn increments<R: Rng + ?Sized>(sensor: &SensorModel, x: ComplexValue, rng: &mut R) -> crate::signal::LocalIncrements {
    let h = draw_channel_gain(sensor, rng);
    let y = draw_observation(x, h, sensor.noise_variance, rng);
    local_increments(y, h, sensor.noise_variance)
}

/// Which running sum a threshold is for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdProcess {
    /// Two-sided band `(-d, d)` on `V`, at parameter value `x`.
    V { x: ComplexValue },
    /// One-sided threshold `e` on the nondecreasing `U`.
    U,
}

/// Fixed set of increment paths, extended on demand. Path `i` always draws
/// from its own stream, so extensions never change earlier values.
#[derive(Debug, Clone)]
pub struct PathBundle {
    sensor: SensorModel,
    process: ThresholdProcess,
    paths: Vec<Vec<f64>>,
    streams: Vec<Stream>,
    cap: u64,
}

impl PathBundle {
    pub fn new(sensor: SensorModel, process: ThresholdProcess, paths: usize, seed: u64) -> Self {
        Self {
            sensor,
            process,
            paths: vec![Vec::new(); paths],
            streams: (0..paths as u64).map(|i| rng::stream(seed, i)).collect(),
            cap: DEFAULT_ITERATION_CAP,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    fn increment(&mut self, path: usize, step: usize) -> f64 {
        while self.paths[path].len() <= step {
            let inc = increments(&self.sensor, self.x(), &mut self.streams[path]);
            let value = match self.process {
                ThresholdProcess::V { .. } => inc.v_inc,
                ThresholdProcess::U => inc.u_inc,
            };
            self.paths[path].push(value);
        }
        self.paths[path][step]
    }

    fn x(&self) -> ComplexValue {
        match self.process {
            ThresholdProcess::V { x } => x,
            // U does not depend on x; any value gives the same gains.
            ThresholdProcess::U => ComplexValue::new(0.0, 0.0),
        }
    }

    #[inline]
    fn crossed(&self, delta: f64, threshold: f64) -> bool {
        match self.process {
            ThresholdProcess::V { .. } => delta.abs() >= threshold,
            ThresholdProcess::U => delta >= threshold,
        }
    }

    /// First time the sum along `path` crosses `threshold`.
    pub fn first_passage(&mut self, path: usize, threshold: f64) -> Result<u64> {
        let mut acc = 0.0;
        for step in 0..self.cap as usize {
            acc += self.increment(path, step);
            if self.crossed(acc, threshold) {
                return Ok(step as u64 + 1);
            }
        }
        Err(Error::NonTerminating(self.cap))
    }

    /// Mean first-passage time over the bundle.
    pub fn mean_interval(&mut self, threshold: f64) -> Result<f64> {
        let mut total = 0u64;
        for i in 0..self.paths.len() {
            total += self.first_passage(i, threshold)?;
        }
        Ok(total as f64 / self.paths.len() as f64)
    }

    /// Mean number of crossings (sampling instants) within `horizon` steps.
    pub fn mean_crossings(&mut self, threshold: f64, horizon: u64) -> f64 {
        let mut total = 0u64;
        for i in 0..self.paths.len() {
            let mut delta = 0.0;
            for step in 0..horizon as usize {
                delta += self.increment(i, step);
                if self.crossed(delta, threshold) {
                    total += 1;
                    delta = 0.0;
                }
            }
        }
        total as f64 / self.paths.len() as f64
    }

    /// Mean absolute single-step increment.
    fn mean_abs_increment(&mut self) -> f64 {
        let n = self.paths.len();
        (0..n).map(|i| self.increment(i, 0).abs()).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    /// Mean interval on the calibration bundle.
    pub achieved: f64,
}

/// Threshold whose mean sampling interval is within `rel_tol` of
/// `target_interval`, found by bisection over a geometrically grown bracket.
pub fn calibrate_threshold<R: Rng + ?Sized>(
    process: ThresholdProcess,
    sensor: &SensorModel,
    target_interval: f64,
    rel_tol: f64,
    paths: usize,
    rng: &mut R,
) -> Result<ThresholdFit> {
    if !(target_interval >= 1.0 && target_interval.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "target interval must be at least 1, got {target_interval}"
        )));
    }
    if !(rel_tol > 0.0 && rel_tol <= 0.1) {
        return Err(Error::InvalidInput(format!("rel_tol must be in (0, 0.1], got {rel_tol}")));
    }
    if paths < MIN_BUNDLE_PATHS {
        return Err(Error::InvalidInput(format!(
            "calibration needs at least {MIN_BUNDLE_PATHS} paths, got {paths}"
        )));
    }
    let mut bundle = PathBundle::new(*sensor, process, paths, rng.random());

    let scale = bundle.mean_abs_increment().max(f64::MIN_POSITIVE);
    let mut lo = 0.0;
    let mut hi = target_interval * scale;
    let mut hi_mean = bundle.mean_interval(hi)?;
    let mut doublings = 0;
    while hi_mean < target_interval {
        lo = hi;
        hi *= 2.0;
        hi_mean = bundle.mean_interval(hi)?;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Calibration(format!(
                "no threshold reaches mean interval {target_interval}"
            )));
        }
    }
    let mut lo_mean = if lo > 0.0 { bundle.mean_interval(lo)? } else { 1.0 };

    for _ in 0..BISECTION_STEPS {
        if hi_mean == target_interval || hi - lo <= hi * 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let m = bundle.mean_interval(mid)?;
        if m >= target_interval {
            hi = mid;
            hi_mean = m;
        } else {
            lo = mid;
            lo_mean = m;
        }
    }

    let fit = if lo > 0.0 && (target_interval - lo_mean).abs() < (hi_mean - target_interval).abs() {
        ThresholdFit { threshold: lo, achieved: lo_mean }
    } else {
        ThresholdFit { threshold: hi, achieved: hi_mean }
    };
    if (fit.achieved - target_interval).abs() > rel_tol * target_interval {
        return Err(Error::Calibration(format!(
            "closest achievable mean interval {} misses target {target_interval} by more than {}%",
            fit.achieved,
            rel_tol * 100.0
        )));
    }
    Ok(fit)
}

/// Mean number of level-triggered `V` messages within `horizon` steps at
/// threshold `d`, for parameter value `x`.
pub fn expected_messages(
    sensor: &SensorModel,
    x: ComplexValue,
    d: f64,
    horizon: u64,
    paths: usize,
    seed: u64,
) -> f64 {
    PathBundle::new(*sensor, ThresholdProcess::V { x }, paths, seed).mean_crossings(d, horizon)
}

/// Calibration settings for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPlan {
    /// Parameter value for `V` calibration and `φ`.
    pub x: ComplexValue,
    /// Target mean `V` sampling interval; `None` skips `d`.
    pub interval_v: Option<f64>,
    /// Target mean `U` sampling interval; `None` skips `e`.
    pub interval_u: Option<f64>,
    pub percentile_samples: usize,
    pub paths: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl CalibrationPlan {
    pub fn new(x_bound: f64, seed: u64) -> Self {
        Self {
            x: worst_case_x(x_bound),
            interval_v: None,
            interval_u: None,
            percentile_samples: 100_000,
            paths: 20_000,
            rel_tol: 0.02,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationReport {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub achieved_mean_interval_v: Vec<f64>,
    pub achieved_mean_interval_u: Vec<f64>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy)]
struct SensorCalibration {
    phi: f64,
    theta: f64,
    d: Option<ThresholdFit>,
    e: Option<ThresholdFit>,
}

/// Calibrates every sensor. Identical sensor models share one result.
pub fn calibrate(sensors: &[SensorModel], plan: &CalibrationPlan) -> Result<CalibrationReport> {
    let mut cache: Vec<(SensorModel, SensorCalibration)> = Vec::new();
    let mut report = CalibrationReport {
        sample_count: plan.percentile_samples,
        ..Default::default()
    };
    for (k, sensor) in sensors.iter().enumerate() {
        let cal = match cache.iter().find(|(s, _)| s == sensor) {
            Some((_, c)) => *c,
            None => {
                let c = calibrate_sensor(sensor, plan, k as u64)
                    .map_err(|e| e.context(format!("calibrating sensor {k}")))?;
                cache.push((*sensor, c));
                c
            }
        };
        report.phi.push(cal.phi);
        report.theta.push(cal.theta);
        if let Some(f) = cal.d {
            report.d.push(f.threshold);
            report.achieved_mean_interval_v.push(f.achieved);
        }
        if let Some(f) = cal.e {
            report.e.push(f.threshold);
            report.achieved_mean_interval_u.push(f.achieved);
        }
    }
    Ok(report)
}

fn calibrate_sensor(sensor: &SensorModel, plan: &CalibrationPlan, k: u64) -> Result<SensorCalibration> {
    let r = |purpose: u64| rng::stream(rng::mix(plan.seed, &[k, purpose]), 0);
    let phi = percentile_phi_at(sensor, plan.x, plan.percentile_samples, &mut r(0))?;
    let theta = percentile_theta(sensor, plan.percentile_samples, &mut r(1))?;
    let d = plan
        .interval_v
        .map(|t| calibrate_threshold(ThresholdProcess::V { x: plan.x }, sensor, t, plan.rel_tol, plan.paths, &mut r(2)))
        .transpose()?;
    let e = plan
        .interval_u
        .map(|t| calibrate_threshold(ThresholdProcess::U, sensor, t, plan.rel_tol, plan.paths, &mut r(3)))
        .transpose()?;
    Ok(SensorCalibration { phi, theta, d, e })
}

impl CalibrationReport {
    /// Flat `key=value` text, one list per line, comma separated.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "sensors={}", self.phi.len());
        let _ = writeln!(s, "sample_count={}", self.sample_count);
        let _ = writeln!(s, "phi={}", list(&self.phi));
        let _ = writeln!(s, "theta={}", list(&self.theta));
        let _ = writeln!(s, "d={}", list(&self.d));
        let _ = writeln!(s, "e={}", list(&self.e));
        let _ = writeln!(s, "achieved_interval_v={}", list(&self.achieved_mean_interval_v));
        let _ = writeln!(s, "achieved_interval_u={}", list(&self.achieved_mean_interval_u));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map: HashMap<&str, &str> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("calibration line {}: expected key=value", i + 1)))?;
            map.insert(k.trim(), v.trim());
        }
        let list = |key: &str| -> Result<Vec<f64>> {
            match map.get(key) {
                None | Some(&"") => Ok(Vec::new()),
                Some(v) => v
                    .split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::config(format!("calibration {key}: {e}")))
                    })
                    .collect(),
            }
        };
        const KNOWN: [&str; 8] = [
            "sensors",
            "sample_count",
            "phi",
            "theta",
            "d",
            "e",
            "achieved_interval_v",
            "achieved_interval_u",
        ];
        if let Some(k) = map.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::config(format!("unknown calibration key {k:?}")));
        }
        let report = Self {
            phi: list("phi")?,
            theta: list("theta")?,
            d: list("d")?,
            e: list("e")?,
            achieved_mean_interval_v: list("achieved_interval_v")?,
            achieved_mean_interval_u: list("achieved_interval_u")?,
            sample_count: map
                .get("sample_count")
                .map(|v| v.parse().map_err(|e| Error::config(format!("sample_count: {e}"))))
                .transpose()?
                .unwrap_or(0),
        };
        if let Some(n) = map.get("sensors") {
            let n: usize = n.parse().map_err(|e| Error::config(format!("sensors: {e}")))?;
            if report.phi.len() != n || report.theta.len() != n {
                return Err(Error::config(format!(
                    "calibration declares {n} sensors but lists {} phi / {} theta",
                    report.phi.len(),
                    report.theta.len()
                )));
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal_quantile;

    fn awgn(sigma2: f64) -> SensorModel {
        SensorModel::awgn(ComplexValue::new(1.0, 0.0), sigma2)
    }

    #[test]
    fn phi_at_zero_parameter_is_half_normal_quantile() {
        // |v_inc| = 2|Re w| with Re w ~ N(0, 1/2)
        let oracle = 2.0 * normal_quantile(0.995).unwrap() / 2f64.sqrt();
        let mut r = rng::stream(1, 0);
        let phi = percentile_phi(&awgn(1.0), 1e-12, 100_000, &mut r).unwrap();
        assert!((phi / oracle - 1.0).abs() < 0.03, "{phi} vs {oracle}");
    }

    #[test]
    fn phi_scales_inversely_with_noise_std() {
        // Matched draws: same stream, x = 0. v_inc = 2 Re(w)/σ² with
        // w ∝ σ, so doubling σ halves every draw.
        let x = ComplexValue::new(0.0, 0.0);
        let a = percentile_phi_at(&awgn(1.0), x, 20_000, &mut rng::stream(2, 0)).unwrap();
        let b = percentile_phi_at(&awgn(4.0), x, 20_000, &mut rng::stream(2, 0)).unwrap();
        assert!((a / b - 2.0).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn phi_sample_size_consistency() {
        let s = awgn(1.0);
        let a = percentile_phi(&s, 5.0, 10_000, &mut rng::stream(3, 0)).unwrap();
        let b = percentile_phi(&s, 5.0, 100_000, &mut rng::stream(4, 0)).unwrap();
        assert!((a / b - 1.0).abs() < 0.05);
        assert!(percentile_phi(&s, 5.0, 9_999, &mut rng::stream(4, 0)).is_err());
    }

    #[test]
    fn theta_rayleigh_matches_exponential_quantile() {
        let oracle = rayleigh_theta_closed_form(1.0, 1.0);
        assert!((oracle - 2.0 * 100f64.ln()).abs() < 1e-12);
        let t1 = percentile_theta(&SensorModel::rayleigh(1.0, 1.0), 100_000, &mut rng::stream(5, 0)).unwrap();
        assert!((t1 / oracle - 1.0).abs() < 0.03, "{t1}");
        let t2 = percentile_theta(&SensorModel::rayleigh(2.0, 1.0), 100_000, &mut rng::stream(6, 0)).unwrap();
        assert!((t2 / (2.0 * oracle) - 1.0).abs() < 0.03, "{t2}");
        // AWGN: deterministic increment 2·1/2 = 1.
        assert_eq!(percentile_theta(&awgn(2.0), 10_000, &mut rng::stream(7, 0)).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_ramp_threshold() {
        // u_inc = 2/σ² = 0.8 every step.
        let s = awgn(2.5);
        let c = 0.8;
        for target in [1.0, 2.0, 3.0, 7.0] {
            let fit = calibrate_threshold(ThresholdProcess::U, &s, target, 0.02, 2_000, &mut rng::stream(8, 0)).unwrap();
            assert_eq!((fit.threshold / c).ceil(), target, "{fit:?}");
            assert_eq!(fit.achieved, target);
        }
        // 2.5 is unreachable for a deterministic ramp.
        assert!(matches!(
            calibrate_threshold(ThresholdProcess::U, &s, 2.5, 0.02, 2_000, &mut rng::stream(8, 0)),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn unit_target_triggers_every_step() {
        let s = SensorModel::rayleigh(1.0, 1.0);
        let x = worst_case_x(5.0);
        let fit = calibrate_threshold(ThresholdProcess::V { x }, &s, 1.0, 0.02, 2_000, &mut rng::stream(9, 0)).unwrap();
        let mut draws: Vec<f64> = {
            let mut r = rng::stream(10, 0);
            (0..10_000).map(|_| increments(&s, x, &mut r).v_inc.abs()).collect()
        };
        let p1 = empirical_quantile(&mut draws, 0.01).unwrap();
        assert!(fit.threshold < p1);
        assert!((fit.achieved - 1.0).abs() <= 0.02);
    }

    #[test]
    fn threshold_monotone_in_target() {
        let s = awgn(1.0);
        let x = worst_case_x(5.0);
        let d2 = calibrate_threshold(ThresholdProcess::V { x }, &s, 2.0, 0.02, 4_000, &mut rng::stream(11, 0)).unwrap();
        let d10 = calibrate_threshold(ThresholdProcess::V { x }, &s, 10.0, 0.02, 4_000, &mut rng::stream(11, 0)).unwrap();
        assert!(d10.threshold > d2.threshold);
        // Matched paths: first passage is monotone in the threshold.
        let mut b = PathBundle::new(s, ThresholdProcess::V { x }, 500, 12);
        for i in 0..500 {
            assert!(b.first_passage(i, d10.threshold).unwrap() >= b.first_passage(i, d2.threshold).unwrap());
        }
    }

    #[test]
    fn argument_checks() {
        let s = awgn(1.0);
        let r = &mut rng::stream(0, 0);
        assert!(calibrate_threshold(ThresholdProcess::U, &s, 0.5, 0.02, 2_000, r).is_err());
        assert!(calibrate_threshold(ThresholdProcess::U, &s, 2.0, 0.2, 2_000, r).is_err());
        assert!(calibrate_threshold(ThresholdProcess::U, &s, 2.0, 0.02, 100, r).is_err());
    }

    #[test]
    fn report_text_roundtrip() {
        let r = CalibrationReport {
            phi: vec![1.5, 2.25],
            theta: vec![9.2, 9.3],
            d: vec![0.1, 1e-7],
            e: vec![],
            achieved_mean_interval_v: vec![2.0, 2.01],
            achieved_mean_interval_u: vec![],
            sample_count: 100_000,
        };
        assert_eq!(CalibrationReport::from_text(&r.to_text()).unwrap(), r);
        assert!(CalibrationReport::from_text("bogus=1").is_err());
        assert!(CalibrationReport::from_text("sensors=3\nphi=1\ntheta=1").is_err());
    }

    #[test]
    fn homogeneous_sensors_share_calibration() {
        let sensors = vec![SensorModel::rayleigh(1.0, 1.0); 3];
        let mut plan = CalibrationPlan::new(5.0, 1);
        plan.interval_u = Some(3.0);
        plan.paths = 2_000;
        plan.percentile_samples = 10_000;
        let r = calibrate(&sensors, &plan).unwrap();
        assert_eq!(r.e.len(), 3);
        assert!(r.e.iter().all(|e| *e == r.e[0]));
        assert!(r.d.is_empty());
    }
}

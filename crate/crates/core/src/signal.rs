//! Observation model and the centralized estimator.
//!
//! Sensor `k` observes `y_t = x·h_t + w_t` with `w_t ~ CN(0, σ_k²)`, i.e. each
//! real component of the noise has variance `σ_k²/2`. The real part of `x` is
//! estimated from the running sums
//!
//! ```text
//! V_t = Σ_k Σ_τ 2·Re(h* y) / σ_k²      (observed correlation)
//! U_t = Σ_k Σ_τ 2·|h|²     / σ_k²      (observed Fisher information)
//! ```
//!
//! as `V_t / U_t`, stopped at the first `t` with `U_t ≥ target`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub type ComplexValue = Complex64;

/// Hard cap on every sequential loop.
pub const DEFAULT_ITERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    /// Fixed gain for every time step.
    Awgn { gain: ComplexValue },
    /// Fresh gain every step, `Re h, Im h ~ N(0, gain_variance/2)`.
    Rayleigh { gain_variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Total variance of the complex noise.
    pub noise_variance: f64,
    pub channel: Channel,
}

impl SensorModel {
    pub fn awgn(gain: ComplexValue, noise_variance: f64) -> Self {
        Self {
            noise_variance,
            channel: Channel::Awgn { gain },
        }
    }

    pub fn rayleigh(gain_variance: f64, noise_variance: f64) -> Self {
        Self {
            noise_variance,
            channel: Channel::Rayleigh { gain_variance },
        }
    }

    /// Unit-gain AWGN sensor or unit-variance Rayleigh sensor whose SNR is
    /// `snr_db` (`|h|²/σ²` resp. `σ_h²/σ²`), with `σ² = 1`.
    pub fn from_snr_db(snr_db: f64, fading: bool) -> Self {
        let noise_variance = 10f64.powf(-snr_db / 10.0);
        if fading {
            Self::rayleigh(1.0, noise_variance)
        } else {
            Self::awgn(ComplexValue::new(1.0, 0.0), noise_variance)
        }
    }

    pub fn is_awgn(&self) -> bool {
        matches!(self.channel, Channel::Awgn { .. })
    }

    /// `E|h|²`.
    pub fn mean_gain_power(&self) -> f64 {
        match self.channel {
            Channel::Awgn { gain } => gain.norm_sqr(),
            Channel::Rayleigh { gain_variance } => gain_variance,
        }
    }

    /// Expected Fisher information contributed per step, `2·E|h|²/σ²`.
    pub fn mean_fisher_increment(&self) -> f64 {
        2.0 * self.mean_gain_power() / self.noise_variance
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config(format!(
                "noise variance must be positive and finite, got {}",
                self.noise_variance
            )));
        }
        match self.channel {
            Channel::Awgn { gain } => {
                let m = gain.norm();
                if !(m > 0.0 && m.is_finite()) {
                    return Err(Error::config(format!(
                        "AWGN gain must satisfy 0 < |h| < inf, got {gain}"
                    )));
                }
            }
            Channel::Rayleigh { gain_variance } => {
                if !(gain_variance > 0.0 && gain_variance.is_finite()) {
                    return Err(Error::config(format!(
                        "Rayleigh gain variance must be positive, got {gain_variance}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The unknown parameter and its a-priori magnitude bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub x: ComplexValue,
    pub bound: f64,
}

impl GroundTruth {
    /// `x = (bound/2)·(1 + i)`, so `|x| = bound/√2`.
    pub fn default_for_bound(bound: f64) -> Self {
        Self {
            x: ComplexValue::new(bound / 2.0, bound / 2.0),
            bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let x = self.x;
        let finite = x.re.is_finite() && x.im.is_finite();
        if !finite || x.re == 0.0 || x.im == 0.0 {
            return Err(Error::config(format!(
                "x must have nonzero finite real and imaginary parts, got {x}"
            )));
        }
        if !(x.norm() < self.bound) {
            return Err(Error::config(format!(
                "|x| = {} must be below the bound {}",
                x.norm(),
                self.bound
            )));
        }
        Ok(())
    }
}

/// The ground truth together with the sensor population.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub truth: GroundTruth,
    pub sensors: Vec<SensorModel>,
}

impl World {
    pub fn new(truth: GroundTruth, sensors: Vec<SensorModel>) -> Result<Self> {
        let world = Self { truth, sensors };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        if self.sensors.is_empty() {
            return Err(Error::config("at least one sensor is required"));
        }
        if self.sensors.len() > 256 {
            return Err(Error::config("at most 256 sensors fit the 8-bit sensor id"));
        }
        for s in &self.sensors {
            s.validate()?;
        }
        Ok(())
    }

    pub fn all_awgn(&self) -> bool {
        self.sensors.iter().all(SensorModel::is_awgn)
    }
}

/// Summands of `V`, `V̄` (imaginary-part statistic) and `U` for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalIncrements {
    pub v_inc: f64,
    pub vbar_inc: f64,
    pub u_inc: f64,
}

pub fn draw_channel_gain<R: Rng + ?Sized>(model: &SensorModel, rng: &mut R) -> ComplexValue {
    match model.channel {
        Channel::Awgn { gain } => gain,
        Channel::Rayleigh { gain_variance } => complex_normal(gain_variance, rng),
    }
}

pub fn draw_observation<R: Rng + ?Sized>(
    x: ComplexValue,
    h: ComplexValue,
    noise_variance: f64,
    rng: &mut R,
) -> ComplexValue {
    x * h + complex_normal(noise_variance, rng)
}

/// `CN(0, variance)`: independent components with variance `variance/2`.
#[inline]
fn complex_normal<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> ComplexValue {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    ComplexValue::new(sd * re, sd * im)
}

#[inline]
pub fn local_increments(y: ComplexValue, h: ComplexValue, noise_variance: f64) -> LocalIncrements {
    let corr = h.conj() * y;
    let scale = 2.0 / noise_variance;
    LocalIncrements {
        v_inc: scale * corr.re,
        vbar_inc: scale * corr.im,
        u_inc: scale * h.norm_sqr(),
    }
}

/// Conditional MLE `V / U`.
pub fn centralized_estimate(v: f64, u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::DegenerateFisher(u));
    }
    Ok(v / u)
}

/// `Σ_k 2|h_k|²/σ_k²` for an all-AWGN population.
pub fn awgn_fisher_rate(sensors: &[SensorModel]) -> Result<f64> {
    sensors.iter().try_fold(0.0, |acc, s| match s.channel {
        Channel::Awgn { gain } => Ok(acc + 2.0 * gain.norm_sqr() / s.noise_variance),
        Channel::Rayleigh { .. } => Err(Error::RandomStoppingTime),
    })
}

/// Smallest `t` with `t · Σ_k 2|h_k|²/σ_k² ≥ target`.
pub fn awgn_stopping_time(target_info: f64, sensors: &[SensorModel]) -> Result<u64> {
    if !(target_info > 0.0 && target_info.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "target information must be positive, got {target_info}"
        )));
    }
    let rate = awgn_fisher_rate(sensors)?;
    if !(rate > 0.0) {
        return Err(Error::DegenerateFisher(rate));
    }
    // The quotient may land one ulp on either side of an integer; settle it
    // against the defining inequality.
    let mut t = (target_info / rate).ceil().max(1.0) as u64;
    while t > 1 && (t - 1) as f64 * rate >= target_info {
        t -= 1;
    }
    while (t as f64) * rate < target_info {
        t += 1;
    }
    Ok(t)
}

/// One observation `(h, y)` from one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub h: ComplexValue,
    pub y: ComplexValue,
}

/// One private random stream per sensor for a single trial.
///
/// Every scheme simulated from the same trial seed sees the same `(h, y)`
/// paths.
#[derive(Debug, Clone)]
pub struct SensorStreams {
    streams: Vec<Stream>,
}

impl SensorStreams {
    pub fn new(seed: u64, sensors: usize) -> Self {
        Self {
            streams: (0..sensors as u64).map(|k| rng::stream(seed, k)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    #[inline]
    pub fn draw(&mut self, sensor: usize, model: &SensorModel, x: ComplexValue) -> Sample {
        let rng = &mut self.streams[sensor];
        let h = draw_channel_gain(model, rng);
        let y = draw_observation(x, h, model.noise_variance, rng);
        Sample { h, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralizedRun {
    pub stop_time: u64,
    pub estimate: f64,
    /// `U_T`.
    pub fisher: f64,
    /// `V_T`.
    pub correlation: f64,
    /// `U_{T-1}`.
    pub fisher_before_stop: f64,
}

/// Optimal centralized estimator: accumulate `V_t`, `U_t` over all sensors and
/// stop at the first `t` with `U_t ≥ target`.
pub fn run_centralized(
    truth: &GroundTruth,
    sensors: &[SensorModel],
    target_info: f64,
    streams: &mut SensorStreams,
    iteration_cap: u64,
) -> Result<CentralizedRun> {
    if !(target_info > 0.0) {
        return Err(Error::InvalidInput(format!(
            "target information must be positive, got {target_info}"
        )));
    }
    let (mut v, mut u) = (0.0, 0.0);
    for t in 1..=iteration_cap {
        let before = u;
        for (k, model) in sensors.iter().enumerate() {
            let s = streams.draw(k, model, truth.x);
            let inc = local_increments(s.y, s.h, model.noise_variance);
            v += inc.v_inc;
            u += inc.u_inc;
        }
        if u >= target_info {
            return Ok(CentralizedRun {
                stop_time: t,
                estimate: centralized_estimate(v, u)?,
                fisher: u,
                correlation: v,
                fisher_before_stop: before,
            });
        }
    }
    Err(Error::NonTerminating(iteration_cap))
}

use crate::calibration::{calibrate, expected_messages, CalibrationPlan, CalibrationReport};
use crate::error::{Error, Result};
use crate::estimators::{Scheme, SchemeConfig, SchemeKind};
use crate::par;
use crate::quant::MAX_BITS;
use crate::rng;
use crate::signal::{awgn_fisher_rate, awgn_stopping_time, Channel, GroundTruth, SensorModel, World};
use crate::stats::Moments;

use super::config::{coupled_interval, coupled_target, BitsFinal, CalibrationSource, ChannelKind, ExperimentConfig, InfoGrid};
use super::trial::{run_trial, TrialResult};

/// Monte Carlo summary of one scheme at one grid point. Bit columns are
/// per-sensor means.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub scheme: SchemeKind,
    pub info_target: f64,
    pub sensors: usize,
    pub snr_db: f64,
    pub x_bound: f64,
    pub channel: ChannelKind,
    pub trials: u64,
    pub mse: f64,
    pub mse_ci95: f64,
    pub mean_stop: f64,
    pub stop_ci95: f64,
    pub bits_v: f64,
    pub bits_u: f64,
    pub bits_final: f64,
    pub seed: u64,
}

/// Network and target of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: u64,
    pub info_index: usize,
    pub sensors: usize,
    pub snr_db: f64,
    pub x_bound: f64,
}

/// Grid points in row-major order over (info entry, K, SNR, X).
pub fn grid_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for info_index in 0..cfg.info.len() {
        for &sensors in &cfg.sensors {
            for &snr_db in &cfg.snr_db {
                for &x_bound in &cfg.x_bound {
                    out.push(GridPoint {
                        index: out.len() as u64,
                        info_index,
                        sensors,
                        snr_db,
                        x_bound,
                    });
                }
            }
        }
    }
    out
}

pub fn world_for(cfg: &ExperimentConfig, sensors: usize, snr_db: f64, x_bound: f64) -> Result<World> {
    let truth = match cfg.x {
        Some(x) => GroundTruth { x, bound: x_bound },
        None => GroundTruth::default_for_bound(x_bound),
    };
    World::new(truth, vec![SensorModel::from_snr_db(snr_db, cfg.channel.is_fading()); sensors])
}

/// Everything shared by the schemes at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSetup {
    pub world: World,
    pub info_target: f64,
    pub interval_v: Option<f64>,
    pub interval_u: Option<f64>,
    pub calibration: CalibrationReport,
}

impl PointSetup {
    /// Stop time used for sizing the fixed-time block: exact under AWGN,
    /// `⌈J / Σ E[u_inc]⌉` under fading.
    pub fn nominal_stop(&self) -> Result<u64> {
        if self.world.all_awgn() {
            awgn_stopping_time(self.info_target, &self.world.sensors)
        } else {
            let rate: f64 = self.world.sensors.iter().map(SensorModel::mean_fisher_increment).sum();
            Ok((self.info_target / rate).ceil().max(1.0) as u64)
        }
    }
}

/// Builds the world and calibrates it for the given target and intervals.
pub fn setup_point(
    cfg: &ExperimentConfig,
    world: World,
    info_target: f64,
    interval_v: Option<f64>,
    interval_u: Option<f64>,
    seed: u64,
) -> Result<PointSetup> {
    let lt_v = cfg.schemes.iter().any(|k| k.lt_v() || k.final_block() && cfg.bits_final == BitsFinal::Auto);
    let lt_u = cfg.schemes.iter().any(|k| k.lt_u());
    let calibration = match &cfg.calibration {
        CalibrationSource::Report(r) => {
            let k = world.sensors.len();
            if r.phi.len() != k || r.theta.len() != k {
                return Err(Error::config(format!("calibration report does not cover {k} sensors")));
            }
            r.clone()
        }
        CalibrationSource::Auto => {
            let plan = CalibrationPlan {
                interval_v: if lt_v { interval_v } else { None },
                interval_u: if lt_u { interval_u } else { None },
                percentile_samples: cfg.calibration_samples,
                paths: cfg.calibration_paths,
                rel_tol: cfg.calibration_tol,
                ..CalibrationPlan::new(world.truth.bound, seed)
            };
            calibrate(&world.sensors, &plan)?
        }
    };
    Ok(PointSetup {
        world,
        info_target,
        interval_v,
        interval_u,
        calibration,
    })
}

fn period(interval: Option<f64>) -> u64 {
    interval.map_or(1, |t| t.round().max(1.0) as u64)
}

/// Scheme parameters for `kind` at a calibrated grid point.
pub fn build_scheme(cfg: &ExperimentConfig, kind: SchemeKind, setup: &PointSetup, seed: u64) -> Result<Scheme> {
    let k = setup.world.sensors.len();
    let cal = &setup.calibration;
    let mut c = SchemeConfig::new(kind, setup.info_target);
    c.bits_v = cfg.bits_v;
    c.bits_u = cfg.bits_u;
    c.period_v = period(setup.interval_v);
    c.period_u = period(setup.interval_u);
    if kind.uses_phi() || kind.final_block() {
        c.phi = cal.phi.clone();
    }
    if kind.uses_theta() {
        c.theta = cal.theta.clone();
    }
    if kind.uses_d() {
        c.d = cal.d.clone();
    }
    if kind.uses_e() {
        c.e = cal.e.clone();
    }
    if kind.final_block() {
        c.bits_final = match cfg.bits_final {
            BitsFinal::Fixed(b) => vec![b; k],
            BitsFinal::Auto => auto_final_bits(cfg, setup, seed)?,
        };
    }
    if kind == SchemeKind::ObsMle {
        let s = &setup.world.sensors[0];
        let gain_variance = match s.channel {
            Channel::Rayleigh { gain_variance } => gain_variance,
            Channel::Awgn { gain } => gain.norm_sqr(),
        };
        c.obs_theta = Some(cfg.obs_theta.unwrap_or(2.0 * gain_variance.sqrt() / std::f64::consts::PI.sqrt()));
        c.obs_sigma = Some(cfg.obs_sigma.unwrap_or((s.noise_variance / 2.0).sqrt()));
    }
    Scheme::new(c, k).map_err(|e| e.context(format!("building {kind}")))
}

/// `R_k = round(r_V · E[N_T^k])` with `E[N]` taken from the level-triggered
/// `V` process at the calibrated `d_k` and the nominal stop time.
fn auto_final_bits(cfg: &ExperimentConfig, setup: &PointSetup, seed: u64) -> Result<Vec<u8>> {
    let d = &setup.calibration.d;
    let k = setup.world.sensors.len();
    if d.len() != k {
        return Err(Error::config("bits_final=auto needs calibrated d (set interval_v)"));
    }
    let horizon = setup.nominal_stop()?;
    let x = setup.world.truth.x;
    let mut memo: Vec<(SensorModel, f64, u8)> = Vec::new();
    let mut out = Vec::with_capacity(k);
    for (i, s) in setup.world.sensors.iter().enumerate() {
        let bits = match memo.iter().find(|(m, dd, _)| m == s && *dd == d[i]) {
            Some((_, _, b)) => *b,
            None => {
                let n = expected_messages(s, x, d[i], horizon, cfg.calibration_paths, rng::mix(seed, &[i as u64, 7]));
                let b = (f64::from(cfg.bits_v) * n).round().clamp(1.0, f64::from(MAX_BITS)) as u8;
                memo.push((*s, d[i], b));
                b
            }
        };
        out.push(bits);
    }
    Ok(out)
}

impl Aggregate {
    /// Summary of a set of trials. Fails on an empty set.
    pub fn from_results(
        results: &[TrialResult],
        info_target: f64,
        world: &World,
        snr_db: f64,
        channel: ChannelKind,
        seed: u64,
    ) -> Result<Self> {
        let first = results.first().ok_or_else(|| Error::InvalidInput("no trials to aggregate".into()))?;
        let err: Moments = results.iter().map(TrialResult::squared_error).collect();
        let stop: Moments = results.iter().map(|r| r.stop_time as f64).collect();
        let per = (results.len() * world.sensors.len()) as f64;
        let bits = |f: fn(&TrialResult) -> u64| results.iter().map(|r| f(r) as f64).sum::<f64>() / per;
        Ok(Self {
            scheme: first.scheme,
            info_target,
            sensors: world.sensors.len(),
            snr_db,
            x_bound: world.truth.bound,
            channel,
            trials: results.len() as u64,
            mse: err.mean(),
            mse_ci95: err.ci95(),
            mean_stop: stop.mean(),
            stop_ci95: stop.ci95(),
            bits_v: bits(|r| r.bits_v),
            bits_u: bits(|r| r.bits_u),
            bits_final: bits(|r| r.bits_final),
            seed,
        })
    }
}

fn scheme_index(kind: SchemeKind) -> u64 {
    SchemeKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64
}

/// All trials of one scheme at one calibrated grid point.
pub fn run_trials(cfg: &ExperimentConfig, scheme: &Scheme, world: &World, grid_index: u64) -> Result<Vec<TrialResult>> {
    let s = scheme_index(scheme.kind());
    par::try_map_indexed(cfg.trials, |i| {
        run_trial(scheme, world, rng::trial_seed(cfg.master_seed, grid_index, s, i))
            .map_err(|e| e.context(format!("trial {i}")))
    })
}

fn run_scheme(cfg: &ExperimentConfig, kind: SchemeKind, setup: &PointSetup, grid_index: u64, snr_db: f64) -> Result<Aggregate> {
    let seed = rng::mix(cfg.master_seed, &[grid_index, u64::MAX]);
    let scheme = build_scheme(cfg, kind, setup, seed)?;
    let results = run_trials(cfg, &scheme, &setup.world, grid_index)?;
    Aggregate::from_results(&results, setup.info_target, &setup.world, snr_db, cfg.channel, cfg.master_seed)
}

/// Runs every scheme at every grid point. `progress` sees each aggregate as
/// soon as it is ready.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<Aggregate>> {
    run_sweep_with(cfg, &mut |_| {})
}

pub fn run_sweep_with(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&Aggregate)) -> Result<Vec<Aggregate>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for p in grid_points(cfg) {
        let ctx = || format!("grid point {} (K={}, snr={} dB, X={})", p.index, p.sensors, p.snr_db, p.x_bound);
        let world = world_for(cfg, p.sensors, p.snr_db, p.x_bound).map_err(|e| e.context(ctx()))?;
        if let InfoGrid::TargetMse { mse, s_min, s_max } = cfg.info {
            for &kind in &cfg.schemes {
                let a = solve_fixed_mse(cfg, kind, &world, p.index, p.snr_db, mse, s_min, s_max)
                    .map_err(|e| e.context(format!("{}, {kind}", ctx())))?;
                progress(&a);
                out.push(a);
            }
            continue;
        }
        let info_target = match &cfg.info {
            InfoGrid::Targets(v) => v[p.info_index],
            InfoGrid::StopTimes(v) => v[p.info_index] as f64 * awgn_fisher_rate(&world.sensors)?,
            InfoGrid::TargetMse { .. } => unreachable!(),
        };
        let seed = rng::mix(cfg.master_seed, &[p.index]);
        let setup = setup_point(
            cfg,
            world,
            info_target,
            ExperimentConfig::interval_at(&cfg.interval_v, p.info_index),
            ExperimentConfig::interval_at(&cfg.interval_u, p.info_index),
            seed,
        )
        .map_err(|e| e.context(ctx()))?;
        for &kind in &cfg.schemes {
            let a = run_scheme(cfg, kind, &setup, p.index, p.snr_db).map_err(|e| e.context(format!("{}, {kind}", ctx())))?;
            progress(&a);
            out.push(a);
        }
    }
    Ok(out)
}

/// Bisection on `s` (with `J = 25·2^s`, `T_V = T_U = 2·1.4^s`) for the point
/// where the MSE of `kind` meets `target_mse`. Every evaluation reuses the
/// same trial seeds. Returns the aggregate at the evaluated `s` whose MSE is
/// closest to the target in log scale.
#[allow(clippy::too_many_arguments)]
pub fn solve_fixed_mse(
    cfg: &ExperimentConfig,
    kind: SchemeKind,
    world: &World,
    grid_index: u64,
    snr_db: f64,
    target_mse: f64,
    s_min: f64,
    s_max: f64,
) -> Result<Aggregate> {
    let eval = |s: f64| -> Result<Aggregate> {
        let t = coupled_interval(s).max(1.0);
        let seed = rng::mix(cfg.master_seed, &[grid_index]);
        let setup = setup_point(cfg, world.clone(), coupled_target(s), Some(t), Some(t), seed)?;
        run_scheme(cfg, kind, &setup, grid_index, snr_db)
    };
    let gap = |a: &Aggregate| (a.mse / target_mse).ln();
    let mut lo = (s_min, eval(s_min)?);
    if gap(&lo.1) <= 0.0 {
        return Ok(lo.1);
    }
    let mut hi = (s_max, eval(s_max)?);
    if gap(&hi.1) > 0.0 {
        return Err(Error::Calibration(format!(
            "{kind} does not reach MSE {target_mse} by s = {s_max} (MSE {})",
            hi.1.mse
        )));
    }
    for _ in 0..20 {
        if hi.0 - lo.0 < 1e-3 || gap(&hi.1).abs() < 0.01 {
            break;
        }
        let mid = 0.5 * (lo.0 + hi.0);
        let a = eval(mid)?;
        if gap(&a) > 0.0 {
            lo = (mid, a);
        } else {
            hi = (mid, a);
        }
    }
    Ok(if gap(&lo.1).abs() < gap(&hi.1).abs() { lo.1 } else { hi.1 })
}

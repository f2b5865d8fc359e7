//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary.
//! Failures make the process exit non-zero only when
//! `SEQEST_ACCEPTANCE_STRICT=1` is set.

use std::time::Instant;

use seqest::calibration::{calibrate_threshold, worst_case_x, PathBundle, ThresholdProcess};
use seqest::estimators::{decode_frame, encode_frame, encode_message, Message, MessageKind, SchemeKind};
use seqest::experiments::{
    build_scheme, preset_configs, run_sweep, run_trial, run_trial_with, setup_point, world_for, Aggregate, ExperimentConfig,
    TrialOptions,
};
use seqest::par;
use seqest::rng::{self, trial_seed};
use seqest::signal::{
    awgn_fisher_rate, awgn_stopping_time, GroundTruth, local_increments, run_centralized, SensorModel, SensorStreams,
};
use seqest::stats::{ks_test_standard_normal, Moments};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fig(name: &str, trials: u64, schemes: &[SchemeKind]) -> ExperimentConfig {
    preset_configs(Some(trials), Some(2024), schemes)
        .unwrap()
        .into_iter()
        .find(|(n, _)| *n == name)
        .unwrap()
        .1
}

/// Criterion 1. AWGN stop times on the coupled grid.
fn c1() -> Outcome {
    let sensors = vec![SensorModel::from_snr_db(0.0, false); 5];
    let got: Vec<u64> = (0..6).map(|m| awgn_stopping_time(25.0 * 2f64.powi(m), &sensors).unwrap()).collect();
    outcome(got == [3, 5, 10, 20, 40, 80], format!("stop times {got:?}"))
}

/// Criterion 2. Centralized estimator is unbiased and efficient at fixed t.
fn c2() -> Outcome {
    let sensors = vec![SensorModel::from_snr_db(0.0, false); 5];
    let cfg = ExperimentConfig::default();
    let world = world_for(&cfg, 5, 0.0, 5.0).unwrap();
    let target = 10.0 * awgn_fisher_rate(&sensors).unwrap();
    let runs = par::map_indexed(100_000, |i| {
        run_centralized(&world.truth, &sensors, target, &mut SensorStreams::new(trial_seed(2, 0, 0, i), 5), 100).unwrap()
    });
    assert!(runs.iter().all(|r| r.stop_time == 10));
    let m: Moments = runs.iter().map(|r| r.estimate).collect();
    let ratio = m.variance() * runs[0].fisher;
    let z = (m.mean() - world.truth.x.re) / m.std_error();
    outcome(
        (0.97..=1.03).contains(&ratio) && z.abs() < 4.0,
        format!("var*U = {ratio:.4}, mean offset = {z:.2} SE"),
    )
}

/// Criterion 3. Normalized score is standard normal given the channel.
fn c3() -> Outcome {
    let sensors = [SensorModel::from_snr_db(0.0, true); 5];
    let x = GroundTruth::default_for_bound(5.0).x;
    let z: Vec<f64> = par::map_indexed(10_000, |i| {
        let mut s = SensorStreams::new(trial_seed(3, 0, 0, i), 5);
        let (mut v, mut u) = (0.0, 0.0);
        for _ in 0..20 {
            for (k, m) in sensors.iter().enumerate() {
                let d = s.draw(k, m, x);
                let inc = local_increments(d.y, d.h, m.noise_variance);
                v += inc.v_inc;
                u += inc.u_inc;
            }
        }
        (v - x.re * u) / u.sqrt()
    });
    let ks = ks_test_standard_normal(&z).unwrap();
    outcome(ks.p_value > 0.01, format!("KS D = {:.4}, p = {:.3}, n = {}", ks.statistic, ks.p_value, ks.n))
}

/// Criterion 4. Stopping sandwich for LT-dsDMLE.
fn c4() -> Outcome {
    let cfg = fig("fig5", 10_000, &[SchemeKind::LtDsDmle]);
    let mut violations = 0;
    let mut n = 0;
    for m in [0, 2, 5] {
        let t = 2.0 * 1.4f64.powi(m);
        let world = world_for(&cfg, 5, 0.0, 5.0).unwrap();
        let setup = setup_point(&cfg, world.clone(), 25.0 * 2f64.powi(m), Some(t), Some(t), m as u64).unwrap();
        let s = build_scheme(&cfg, SchemeKind::LtDsDmle, &setup, m as u64).unwrap();
        let c = s.config();
        let r = f64::from(c.bits_u);
        let upper = c.target_info
            + (0..5)
                .map(|k| c.e[k] + c.theta[k] * (2f64.powf(r + 1.0) - 1.0) / 2f64.powf(r + 1.0))
                .sum::<f64>();
        let results = par::map_indexed(cfg.trials, |i| run_trial(&s, &world, trial_seed(4, m as u64, 0, i)).unwrap());
        violations += results.iter().filter(|r| !(c.target_info <= r.fisher && r.fisher < upper)).count();
        n += results.len();
    }
    outcome(violations == 0, format!("{violations} violations in {n} trials (m = 0, 2, 5)"))
}

fn row(rows: &[Aggregate], kind: SchemeKind, target: f64) -> &Aggregate {
    rows.iter().find(|a| a.scheme == kind && a.info_target == target).unwrap()
}

/// Criterion 5. LT-DMLE beats DMLE at short stop times, DMLE wins at t = 80.
fn c5() -> Outcome {
    let cfg = fig("fig1", 100_000, &[SchemeKind::Dmle, SchemeKind::LtDmle]);
    let rows = run_sweep(&cfg).unwrap();
    let mut ok = true;
    let mut detail = vec![];
    for (m, t) in [(0, 3), (1, 5), (2, 10), (5, 80)] {
        let j = 25.0 * 2f64.powi(m);
        let d = row(&rows, SchemeKind::Dmle, j);
        let l = row(&rows, SchemeKind::LtDmle, j);
        let separated = if t == 80 {
            d.mse + d.mse_ci95 < l.mse - l.mse_ci95
        } else {
            l.mse + l.mse_ci95 < d.mse - d.mse_ci95
        };
        ok &= separated;
        detail.push(format!("t={t}: dmle {:.3e}±{:.1e} lt {:.3e}±{:.1e}", d.mse, d.mse_ci95, l.mse, l.mse_ci95));
    }
    outcome(ok, detail.join("; "))
}

/// Criterion 6. Obs-MLE MSE band and flatness on the fading grid.
fn c6() -> Outcome {
    let cfg = fig("fig5", 10_000, &[SchemeKind::ObsMle]);
    let rows = run_sweep(&cfg).unwrap();
    let mse: Vec<f64> = rows.iter().map(|a| a.mse).collect();
    let in_band = mse.iter().all(|m| (0.25..=0.42).contains(m));
    let drop = 1.0 - mse[5] / mse[0];
    outcome(
        in_band && drop < 0.25,
        format!("mse {:?}, drop {:.1}%", mse.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(), drop * 100.0),
    )
}

/// Criterion 7. Overshoot never reaches the last increment.
fn c7() -> Outcome {
    let (mut checks, mut violations) = (0u64, 0u64);
    let fading = fig("fig5", 1, &[SchemeKind::LtDsDmle]);
    let awgn = fig("fig1", 1, &[SchemeKind::LtDmle]);
    let mut round = 0u64;
    while checks < 1_000_000 {
        for (cfg, kind) in [(&fading, SchemeKind::LtDsDmle), (&awgn, SchemeKind::LtDmle)] {
            let m = (round % 6) as i32;
            let t = 2.0 * 1.4f64.powi(m);
            let world = world_for(cfg, 5, 0.0, 5.0).unwrap();
            let setup = setup_point(cfg, world.clone(), 25.0 * 2f64.powi(m), Some(t), Some(t), round).unwrap();
            let s = build_scheme(cfg, kind, &setup, round).unwrap();
            for r in par::map_indexed(2_000, |i| run_trial(&s, &world, trial_seed(7, round, 0, i)).unwrap()) {
                checks += r.overshoot_checks;
                violations += r.overshoot_violations;
            }
        }
        round += 1;
    }
    outcome(violations == 0, format!("{violations} violations in {checks} triggered messages"))
}

/// Criterion 8. Calibrated thresholds hit their target interval on fresh paths, and
/// the interval scales linearly with the threshold.
fn c8() -> Outcome {
    let mut ok = true;
    let mut detail = vec![];
    for (label, sensor) in [
        ("awgn", SensorModel::from_snr_db(0.0, false)),
        ("rayleigh", SensorModel::from_snr_db(0.0, true)),
    ] {
        let process = ThresholdProcess::V { x: worst_case_x(5.0) };
        for target in [2.0, 5.0, 10.0] {
            let fit = calibrate_threshold(process, &sensor, target, 0.02, 20_000, &mut rng::stream(81, target as u64)).unwrap();
            let mut fresh = PathBundle::new(sensor, process, 20_000, 0xF2E5);
            let at_d = fresh.mean_interval(fit.threshold).unwrap();
            let at_2d = fresh.mean_interval(2.0 * fit.threshold).unwrap();
            let err = (at_d / target - 1.0).abs();
            let factor = at_2d / at_d;
            ok &= err <= 0.02 && (1.6..=2.4).contains(&factor);
            detail.push(format!("{label} T={target}: {at_d:.3} ({:.2}%), x{factor:.2}", err * 100.0));
        }
    }
    outcome(ok, detail.join("; "))
}

/// Criterion 9. Codec roundtrip on simulated traffic and declared bit counts.
fn c9() -> Outcome {
    let mut n = 0usize;
    let mut bad = 0usize;
    let kinds = [
        ("fig1", SchemeKind::Dmle),
        ("fig1", SchemeKind::LtDmle),
        ("fig2b", SchemeKind::LtDmle),
        ("fig5", SchemeKind::LtSDmle),
        ("fig5", SchemeKind::USDmle),
        ("fig5", SchemeKind::LtDsDmle),
        ("fig5", SchemeKind::UDsDmle),
        ("fig5", SchemeKind::ObsMle),
        ("fig6", SchemeKind::LtDsDmle),
        ("fig6", SchemeKind::UDsDmle),
    ];
    for (name, kind) in kinds {
        let cfg = fig(name, 1, &[kind]);
        let world = world_for(&cfg, 5, 0.0, 5.0).unwrap();
        let setup = setup_point(&cfg, world.clone(), 100.0, Some(3.0), Some(3.0), 9).unwrap();
        let s = build_scheme(&cfg, kind, &setup, 9).unwrap();
        let c = s.config();
        let opts = TrialOptions { record_transcript: true, ..Default::default() };
        let mut i = 0;
        let mut seen = 0;
        while seen < 1_500 {
            let (_, tr) = run_trial_with(&s, &world, trial_seed(9, 0, 0, i), opts).unwrap();
            i += 1;
            for (t, msgs) in tr.unwrap() {
                for m in msgs {
                    let declared = match m.kind() {
                        MessageKind::VLt | MessageKind::VUni => usize::from(c.bits_v),
                        MessageKind::ULt | MessageKind::UUni => usize::from(c.bits_u),
                        MessageKind::VFinal => usize::from(c.bits_final[usize::from(m.sensor())]),
                        MessageKind::ObsBits => 4,
                    };
                    let roundtrip: Message = decode_frame(&encode_frame(&m), &s, t).unwrap();
                    if roundtrip != m || encode_message(&m).len() != declared || m.payload_bits() as usize != declared {
                        bad += 1;
                    }
                    seen += 1;
                }
            }
        }
        n += seen;
    }
    outcome(n >= 10_000 && bad == 0, format!("{bad} mismatches in {n} messages over {} schemes", kinds.len()))
}

/// Criterion 10. Normalized error of LT-dsDMLE approaches unit variance along the
/// coupled grid.
fn c10() -> Outcome {
    let cfg = fig("fig5", 10_000, &[SchemeKind::LtDsDmle]);
    let world = world_for(&cfg, 5, 0.0, 5.0).unwrap();
    let var_at = |m: i32| {
        let t = 2.0 * 1.4f64.powi(m);
        let setup = setup_point(&cfg, world.clone(), 25.0 * 2f64.powi(m), Some(t), Some(t), 100 + m as u64).unwrap();
        let s = build_scheme(&cfg, SchemeKind::LtDsDmle, &setup, 100 + m as u64).unwrap();
        let z: Moments = par::map_indexed(cfg.trials, |i| {
            let r = run_trial(&s, &world, trial_seed(10, m as u64, 0, i)).unwrap();
            r.fisher.sqrt() * (r.estimate - r.true_x_re)
        })
        .into_iter()
        .collect();
        z.variance()
    };
    let (v0, v5) = (var_at(0), var_at(5));
    outcome(
        (0.8..=1.2).contains(&v5) && (v5 - 1.0).abs() < (v0 - 1.0).abs(),
        format!("variance m=0: {v0:.3}, m=5: {v5:.3}"),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 10] = [
        ("1 awgn stopping grid", c1),
        ("2 centralized efficiency", c2),
        ("3 score normality", c3),
        ("4 stopping sandwich", c4),
        ("5 fig1 ordering", c5),
        ("6 obs-mle flatness", c6),
        ("7 overshoot bound", c7),
        ("8 calibration fidelity", c8),
        ("9 codec", c9),
        ("10 asymptotic optimality trend", c10),
    ];
    let (mut failed, mut ran) = (0, 0);
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {name}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {failed} of {ran} criteria failed");
    let strict = std::env::var("SEQEST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria marked as known deviations are reported but do not fail the
//! binary unless `MSTBD_ACCEPTANCE_STRICT=1` is set. Set
//! `MSTBD_ACCEPTANCE_RUNS` to shrink the scenario batches for a quick look.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mstbd::detector::DetectorKind;
use mstbd::estimators::{
    em_e_step, em_m_step, estimate_sync, golden_section_max, q_hat, run_em, EmOptions, SyncHistory, SyncMode,
    GOLDEN_RATIO,
};
use mstbd::harness::{preset, run_experiment, DetectorMetrics, MetricsBundle};
use mstbd::likelihood::{ProductTable, WhitenedProducts};
use mstbd::model::signal::{delay_in_bins, range_extent, signal_model, steering_vectors, ChannelSignal};
use mstbd::model::{KinematicState, PhaseConvention, Scene, SceneConfig};
use mstbd::sim::{synthesize_cube, Hypothesis, SimOptions};
use mstbd::C64;

struct Report {
    strict: bool,
    pass: usize,
    fail: usize,
    hard_fail: usize,
}

impl Report {
    fn check(&mut self, area: &str, name: &str, ok: bool, detail: String, known_deviation: bool) {
        let tag = match (ok, known_deviation) {
            (true, _) => "PASS ",
            (false, true) => "FAIL*",
            (false, false) => "FAIL ",
        };
        println!("{tag} [{area}] {name}: {detail}");
        if ok {
            self.pass += 1;
        } else {
            self.fail += 1;
            if self.strict || !known_deviation {
                self.hard_fail += 1;
            }
        }
    }
}

fn kernels(rep: &mut Report) {
    let scene = Scene::new(SceneConfig::reference()).unwrap();
    let ln = scene.cfg.column_len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut norm_err, mut unit_err, mut mismatches, mut bins) = (0.0f64, 0.0f64, 0usize, 0usize);
    for _ in 0..200 {
        let x = KinematicState::new(
            rng.random_range(600.0..1800.0),
            rng.random_range(100.0..1800.0),
            rng.random_range(-80.0..80.0),
            rng.random_range(-80.0..80.0),
        );
        let m = rng.random_range(0..2usize);
        let dt = rng.random_range(0.0..50e-6);
        let ext = range_extent(&x, &scene, m, dt).unwrap();
        let sig = ChannelSignal::new(&scene, &x, m, dt, PhaseConvention::Carrier).unwrap();
        for r in ext.iter() {
            let s = signal_model(r, &x, &scene, m, dt).unwrap();
            let norm: f64 = s.iter().map(|v| v.norm_sqr()).sum();
            norm_err = norm_err.max((norm - ln * sig.amplitude(r).norm_sqr()).abs() / ln);
        }
        let sv = steering_vectors(0, &x, &scene, m, dt).unwrap();
        for v in sv.spatial.iter().chain(&sv.temporal) {
            unit_err = unit_err.max((v.norm() - 1.0).abs());
        }
        let d = delay_in_bins(&x, &scene, m, dt).unwrap();
        for r in 0..scene.cfg.num_range_bins {
            bins += 1;
            if ext.contains(r) != ((r as f64 - d).abs() < 1.0) {
                mismatches += 1;
            }
        }
    }
    rep.check(
        "kernels",
        "signal norm identity",
        norm_err < 1e-10,
        format!("max error {norm_err:.2e} (< 1e-10)"),
        false,
    );
    rep.check(
        "kernels",
        "steering unit modulus",
        unit_err < 1e-10,
        format!("max error {unit_err:.2e} (< 1e-10)"),
        false,
    );

    let w = &scene.waveform;
    let (mut outside, mut sym) = (0.0f64, 0.0f64);
    for i in 0..=4000 {
        let t = -2.0 + i as f64 * 1e-3;
        let v = w.eval_lag(t);
        if t.abs() >= 1.0 {
            outside = outside.max(v.norm());
        }
        sym = sym.max((w.eval_lag(-t) - v.conj()).norm());
    }
    rep.check(
        "kernels",
        "lag kernel support and symmetry",
        outside == 0.0 && sym < 1e-10,
        format!("max |Λ| outside support {outside:.1e}, conjugate symmetry error {sym:.2e}"),
        false,
    );
    rep.check(
        "kernels",
        "range extent equals brute force over all bins",
        mismatches == 0,
        format!("{mismatches} mismatches in {bins} bins"),
        false,
    );

    let rel = common::cpi_oracle_max_rel_error(11);
    rep.check(
        "kernels",
        "cpi_log_lr against full-cube oracle",
        rel < 1e-10,
        format!("max relative error {rel:.2e} (< 1e-10)"),
        false,
    );
}

fn wp(re: f64, im: f64, g: f64) -> WhitenedProducts {
    WhitenedProducts { cross: C64::new(re, im), gram: g }
}

fn em_checks(rep: &mut Report) {
    let t = ProductTable {
        num_particles: 2,
        num_channels: 2,
        entries: vec![wp(1.0, 2.0, 3.0), wp(-0.5, 0.25, 2.0), wp(0.4, -1.2, 5.0), wp(2.0, 1.0, 4.0)],
    };
    let zeta = [0.3, 0.7];
    let alpha = [C64::new(0.1, -0.2), C64::new(-0.3, 0.05)];
    let llr = |c: C64, g: f64, a: C64| 2.0 * (a.conj() * c).re - a.norm_sqr() * g;
    let l0 = llr(C64::new(1.0, 2.0), 3.0, alpha[0]) + llr(C64::new(-0.5, 0.25), 2.0, alpha[1]);
    let l1 = llr(C64::new(0.4, -1.2), 5.0, alpha[0]) + llr(C64::new(2.0, 1.0), 4.0, alpha[1]);
    let (u0, u1) = (0.3 * l0.exp(), 0.7 * l1.exp());
    let xi = [u0 / (u0 + u1), u1 / (u0 + u1)];
    let want = [
        (C64::new(1.0, 2.0) * xi[0] + C64::new(0.4, -1.2) * xi[1]) / (3.0 * xi[0] + 5.0 * xi[1]),
        (C64::new(-0.5, 0.25) * xi[0] + C64::new(2.0, 1.0) * xi[1]) / (2.0 * xi[0] + 4.0 * xi[1]),
    ];
    let got = em_m_step(&t, &em_e_step(&t, &zeta, &alpha).unwrap(), &[0, 1]).unwrap();
    let err = (got[0] - want[0]).norm().max((got[1] - want[1]).norm());
    rep.check(
        "estimators",
        "EM M-step against hand enumeration",
        err < 1e-12,
        format!("max error {err:.2e} (< 1e-12)"),
        false,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut steps, mut drops, mut worst) = (0usize, 0usize, 0.0f64);
    for _ in 0..200 {
        let p = rng.random_range(2..30usize);
        let m = rng.random_range(1..4usize);
        let entries = (0..p * m)
            .map(|_| wp(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(1.0..41.0)))
            .collect();
        let t = ProductTable { num_particles: p, num_channels: m, entries };
        let mut prior: Vec<f64> = (0..p).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = prior.iter().sum();
        prior.iter_mut().for_each(|v| *v /= s);
        let active: Vec<usize> = (0..m).collect();
        let em = run_em(&t, &prior, &active, None, EmOptions { tol_rel: 1e-9, max_iters: 40 }).unwrap();
        for pair in em.trace.windows(2) {
            let xi = em_e_step(&t, &prior, &pair[0].alpha).unwrap();
            let gain = q_hat(&t, &xi, &pair[1].alpha) - q_hat(&t, &xi, &pair[0].alpha);
            steps += 1;
            if gain < -1e-9 {
                drops += 1;
                worst = worst.min(gain);
            }
        }
    }
    rep.check(
        "estimators",
        "EM surrogate Q̂ monotone",
        drops == 0,
        format!("{drops} decreases in {steps} EM steps over 200 random tables (worst {worst:.1e})"),
        false,
    );

    let trials = common::em_variance_vs_crb(500);
    let in_band = trials.iter().all(|t| (1.0..=2.0).contains(&t.ratio));
    let lo_ci = 1.0 - 3.0 / (500f64).sqrt();
    let in_ci = trials.iter().all(|t| (lo_ci..=2.0).contains(&t.ratio));
    let ratios: Vec<String> = trials.iter().map(|t| format!("{:.3}", t.ratio)).collect();
    rep.check(
        "estimators",
        "Var(α̂)/CRB in [1, 2] at +20 dB over 500 runs",
        in_band,
        format!("per-channel ratio {} (sampling floor {lo_ci:.3})", ratios.join(", ")),
        in_ci,
    );
}

fn sync_checks(rep: &mut Report) {
    let est = golden_section_max(-1.0, 1.0, 1e-9, |t| -(t - 0.37f64).powi(2)).unwrap();
    let ratio_err = est
        .widths
        .iter()
        .enumerate()
        .map(|(i, w)| (w / est.widths[0] - GOLDEN_RATIO.powi(i as i32)).abs())
        .fold(0.0, f64::max);
    rep.check(
        "sync",
        "golden-section interval ratio 0.618^(ν−1)",
        ratio_err < 1e-12,
        format!("max deviation {ratio_err:.1e} over {} iterations", est.widths.len()),
        false,
    );

    let scene = Scene::new(SceneConfig::reference()).unwrap();
    let tp = scene.cfg.pulse_dur_s;
    let x = KinematicState::new(1000.0, 1000.0, 10.0, 50.0);
    let mut truth = common::truth_for(&scene, &x, vec![C64::new(0.0, 0.0); 2], vec![0.0, 17.4 * tp], 0);
    truth.hypothesis = Hypothesis::H0;
    truth.direct_energy[1] = 1.0;
    let cube = synthesize_cube(0, &truth, &scene, 1, SimOptions { noise_free: true, direct_path: true }).unwrap();
    let mut h = SyncHistory::new(&scene, 1, 1.0, false).unwrap();
    h.push(&scene, &cube);
    let est = estimate_sync(&scene, &h, SyncMode::default()).unwrap();
    let w8 = est.widths[7];
    rep.check(
        "sync",
        "interval width after 8 iterations",
        w8 < tp / 10.0,
        format!("{:.4} Tp (< 0.1 Tp)", w8 / tp),
        false,
    );

    let eps = tp / 100.0;
    let errs = common::noise_free_sync_errors(SyncMode::default());
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    rep.check(
        "sync",
        "noise-free sync error ≤ ε",
        worst <= eps,
        format!("max {:.2e} s (ε = {eps:.0e} s)", worst),
        false,
    );

    let mean = common::zero_db_sync_mean_error(100, 10);
    let worst = mean.iter().cloned().fold(0.0, f64::max);
    rep.check(
        "sync",
        "0 dB mean sync error < Tp/10 over 100 runs",
        worst < tp / 10.0,
        format!("worst per-CPI mean {:.2e} s, {:.2e} s at k = 10 (< {:.0e} s)", worst, mean[9], tp / 10.0),
        false,
    );
}

fn cfar_checks(rep: &mut Report) {
    let eta = common::standardized_null_statistic(1000, 5, 31);
    let crit = common::ks_critical_1pct(eta.len());
    let d = common::ks_statistic(eta);
    rep.check(
        "cfar",
        "standardized η_K under H0 passes KS at 1%",
        d < crit,
        format!("D = {d:.4} (critical {crit:.4}, 1000 runs, K = 5)"),
        false,
    );

    let n = 10_000u64;
    let out = run_experiment(&common::null_batch(n as usize, 1, 1e-2, 32)).unwrap();
    let rate = out.metrics.detectors[0].pfa_vs_time[0][0];
    let (lo, hi) = common::binomial_ci99(1e-2, n);
    rep.check(
        "cfar",
        "false-alarm rate at pfa = 1e-2 in 99% binomial CI",
        (lo..=hi).contains(&rate),
        format!("{rate:.4} over {n} runs (CI [{lo:.4}, {hi:.4}])"),
        false,
    );
}

fn find(m: &MetricsBundle, kind: DetectorKind) -> &DetectorMetrics {
    m.detectors.iter().find(|d| d.detector == kind).unwrap()
}

fn crossing(d: &DetectorMetrics) -> String {
    d.mean_first_crossing_s.map_or("never".into(), |t| format!("{t:.2} s ({:.0}% of runs)", 100.0 * d.crossed_fraction))
}

fn scenario_checks(rep: &mut Report, runs: Option<usize>) {
    let mut spec = preset("paper-fig8a").unwrap();
    let mut m4 = preset("paper-fig8b").unwrap();
    if let Some(r) = runs {
        spec.runs = r;
        m4.runs = r;
    }
    let t0 = Instant::now();
    let out = run_experiment(&spec).unwrap();
    let m = &out.metrics;
    let k = m.num_cpis;
    println!("      scenario: {} runs, K = {k}, {:.0} s", spec.runs, t0.elapsed().as_secs_f64());

    let prop = find(m, DetectorKind::Proposed);
    let clair = find(m, DetectorKind::Clairvoyant);
    let conv = find(m, DetectorKind::Conventional);

    let c = clair.mean_integration[k - 1];
    rep.check(
        "scenario",
        "clairvoyant mean log L_K within ±10% of 51.78",
        (c / 51.78 - 1.0).abs() <= 0.10,
        format!("{c:.2}"),
        false,
    );
    let p = prop.mean_integration[k - 1];
    rep.check(
        "scenario",
        "proposed mean log L_K within ±15% of 49.24",
        (p / 49.24 - 1.0).abs() <= 0.15,
        format!("{p:.2}"),
        true,
    );
    let above = (0..k).filter(|&i| conv.mean_integration[i] >= m.mean_threshold[0][i]).count();
    rep.check(
        "scenario",
        "conventional mean trace stays below threshold",
        above == 0,
        format!(
            "above threshold at {above} of {k} CPIs; log L_K {:.2} vs threshold {:.2}",
            conv.mean_integration[k - 1],
            m.mean_threshold[0][k - 1]
        ),
        true,
    );

    let pd = prop.pd_vs_time[0][k - 1];
    rep.check("scenario", "proposed Pd(K) ≥ 0.8", pd >= 0.8, format!("{pd:.2}"), false);
    let worse = (0..k).filter(|&i| clair.pd_vs_time[0][i] < prop.pd_vs_time[0][i]).count();
    rep.check(
        "scenario",
        "clairvoyant Pd ≥ proposed Pd for all k",
        worse == 0,
        format!("violated at {worse} of {k} CPIs"),
        true,
    );
    let single: Vec<f64> = (0..2).map(|c| find(m, DetectorKind::SingleChannel(c)).pd_vs_time[0][k - 1]).collect();
    rep.check(
        "scenario",
        "single-channel Pd(K) < 0.1",
        single.iter().all(|v| *v < 0.1),
        format!("channel 0 {:.2}, channel 1 {:.2}", single[0], single[1]),
        true,
    );

    let tc = prop.mean_first_crossing_s;
    rep.check(
        "scenario",
        "proposed mean first crossing in [5 s, 8 s]",
        tc.is_some_and(|t| (5.0..=8.0).contains(&t)),
        crossing(prop),
        true,
    );
    let out4 = run_experiment(&m4).unwrap();
    let prop4 = find(&out4.metrics, DetectorKind::Proposed);
    let earlier = matches!((prop4.mean_first_crossing_s, tc), (Some(a), Some(b)) if a < b);
    rep.check(
        "scenario",
        "four channels cross earlier than two",
        earlier,
        format!("M = 4 {} vs M = 2 {}", crossing(prop4), crossing(prop)),
        true,
    );

    let r = &m.rmse;
    let range = r.range_m[29..].iter().cloned().fold(0.0, f64::max);
    rep.check(
        "scenario",
        "range RMSE < 7.5 m after 30 CPIs",
        range < 7.5,
        format!("worst {range:.1} m for k ≥ 30"),
        true,
    );
    let vel = r.velocity_mps[4..].iter().cloned().fold(0.0, f64::max);
    rep.check(
        "scenario",
        "velocity RMSE < 7.5 m/s from k = 5",
        vel < 7.5,
        format!("worst {vel:.1} m/s for k ≥ 5"),
        true,
    );
    let dtheta = m.resolutions.bearing_rad;
    let bear = r.bearing_rad[4..].iter().cloned().fold(0.0, f64::max);
    rep.check(
        "scenario",
        "bearing RMSE well below Δθ",
        bear < 0.5 * dtheta,
        format!("worst {bear:.3} rad for k ≥ 5 (< Δθ/2 = {:.3} rad)", 0.5 * dtheta),
        true,
    );
}

fn main() -> ExitCode {
    let strict = std::env::var("MSTBD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let runs = std::env::var("MSTBD_ACCEPTANCE_RUNS").ok().and_then(|v| v.parse().ok());
    let mut rep = Report { strict, pass: 0, fail: 0, hard_fail: 0 };
    kernels(&mut rep);
    em_checks(&mut rep);
    sync_checks(&mut rep);
    cfar_checks(&mut rep);
    scenario_checks(&mut rep, runs);
    println!(
        "acceptance: {} passed, {} failed ({} known deviations marked FAIL*)",
        rep.pass,
        rep.fail,
        rep.fail - rep.hard_fail.min(rep.fail)
    );
    if rep.hard_fail > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

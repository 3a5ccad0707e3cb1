use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::{CfarSchedule, DetectionTrace, DetectorKind};
use crate::model::{KinematicState, SceneConfig};

use super::run::RunResult;

/// Per-CPI estimation errors of one detector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RmseCurves {
    pub range_m: Vec<f64>,
    pub velocity_mps: Vec<f64>,
    pub bearing_rad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub detector: DetectorKind,
    pub pfa: f64,
    pub pd: f64,
    /// Fraction of H0 runs above the threshold; absent without H0 runs.
    pub pfa_empirical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    pub detector: DetectorKind,
    /// `pd_vs_time[i][k]` at `pfa_list[i]`, latched first crossing.
    pub pd_vs_time: Vec<Vec<f64>>,
    /// Empirical latched false-alarm rate from the H0 runs.
    pub pfa_vs_time: Vec<Vec<f64>>,
    pub mean_integration: Vec<f64>,
    pub std_integration: Vec<f64>,
    /// Mean first-crossing time over H1 runs that crossed, at the primary
    /// false-alarm probability.
    pub mean_first_crossing_s: Option<f64>,
    pub crossed_fraction: f64,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub pfa_list: Vec<f64>,
    pub num_cpis: usize,
    pub runs: usize,
    pub h0_runs: usize,
    pub t_s: Vec<f64>,
    pub detectors: Vec<DetectorMetrics>,
    /// Mean clairvoyant threshold `[i][k]` over the H1 runs.
    pub mean_threshold: Vec<Vec<f64>>,
    pub roc_k: usize,
    pub roc: Vec<RocPoint>,
    /// Errors of the proposed detector; empty without it.
    pub rmse: RmseCurves,
    /// Mean `|Δt̂ − Δt|` over runs and bi-static channels, seconds.
    pub sync_error: Vec<f64>,
    pub sync_rmse: Vec<f64>,
    /// Mean estimate per bi-static channel `[m][k]` and the true offsets.
    pub sync_mean: Vec<Vec<f64>>,
    pub sync_std: Vec<Vec<f64>>,
    pub sync_truth: Vec<f64>,
    /// EM iteration count → occurrences, proposed detector.
    pub em_iters: BTreeMap<usize, usize>,
    pub em_unconverged: usize,
    pub resolutions: Resolutions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolutions {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub bearing_rad: f64,
}

impl Resolutions {
    pub fn of(cfg: &SceneConfig) -> Self {
        Resolutions {
            range_m: cfg.range_resolution(),
            velocity_mps: cfg.velocity_resolution(),
            bearing_rad: cfg.bearing_resolution_rad(),
        }
    }
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let w = a.rem_euclid(t);
    if w > std::f64::consts::PI {
        w - t
    } else {
        w
    }
}

/// Per-CPI RMSE of receiver range, velocity vector and bearing seen from
/// `site`. `estimates[i]` and `truths[i]` are one run each.
pub fn compute_rmse(estimates: &[Vec<KinematicState>], truths: &[Vec<KinematicState>], site: [f64; 2]) -> RmseCurves {
    let k = estimates.iter().map(|e| e.len()).min().unwrap_or(0);
    let n = estimates.len() as f64;
    let mut out = RmseCurves::default();
    if estimates.is_empty() {
        return out;
    }
    let bearing = |x: &KinematicState| (site[1] - x.y).atan2(site[0] - x.x);
    for j in 0..k {
        let (mut r, mut v, mut b) = (0.0, 0.0, 0.0);
        for (e, t) in estimates.iter().zip(truths) {
            let (xe, xt) = (&e[j], &t[j]);
            r += (xe.distance_to(site) - xt.distance_to(site)).powi(2);
            v += (xe.vx - xt.vx).powi(2) + (xe.vy - xt.vy).powi(2);
            b += wrap(bearing(xe) - bearing(xt)).powi(2);
        }
        out.range_m.push((r / n).sqrt());
        out.velocity_mps.push((v / n).sqrt());
        out.bearing_rad.push((b / n).sqrt());
    }
    out
}

/// `P_d` at each false-alarm probability: fraction of `h1_final` above the
/// run's own threshold. Optional H0 statistics give the empirical rate.
pub fn compute_roc(
    detector: DetectorKind,
    h1_final: &[f64],
    h1_schedules: &[&CfarSchedule],
    h0: Option<(&[f64], &[&CfarSchedule])>,
    pfa_grid: &[f64],
    k: usize,
) -> Vec<RocPoint> {
    let threshold = |s: &CfarSchedule, pfa: f64| {
        if pfa >= 1.0 {
            f64::NEG_INFINITY
        } else {
            s.params(pfa, k).threshold_log().unwrap_or(f64::INFINITY)
        }
    };
    let frac = |vals: &[f64], sch: &[&CfarSchedule], pfa: f64| {
        let n = vals.len().max(1) as f64;
        vals.iter().zip(sch).filter(|(v, s)| **v > threshold(s, pfa)).count() as f64 / n
    };
    pfa_grid
        .iter()
        .map(|&pfa| RocPoint {
            detector,
            pfa,
            pd: frac(h1_final, h1_schedules, pfa),
            pfa_empirical: h0.filter(|(v, _)| !v.is_empty()).map(|(v, s)| frac(v, s, pfa)),
        })
        .collect()
}

fn latched(traces: &[&DetectionTrace], thresholds: &[&Vec<f64>], num_cpis: usize) -> Vec<f64> {
    let mut pd = vec![0.0; num_cpis];
    if traces.is_empty() {
        return pd;
    }
    for (t, thr) in traces.iter().zip(thresholds) {
        if let Some(k) = t.first_crossing(thr) {
            for v in pd.iter_mut().skip(k - 1) {
                *v += 1.0;
            }
        }
    }
    let n = traces.len() as f64;
    pd.iter_mut().for_each(|v| *v /= n);
    pd
}

fn mean_std(rows: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; len];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; len];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let denom = (rows.len().max(2) - 1) as f64;
    (mean, var.into_iter().map(|s| (s / denom).sqrt()).collect())
}

/// Aggregate finished runs in run order.
pub fn aggregate(
    cfg: &SceneConfig,
    pfa_list: &[f64],
    roc_grid: &[f64],
    roc_k: usize,
    detectors: &[DetectorKind],
    num_cpis: usize,
    results: &[RunResult],
) -> MetricsBundle {
    let h1: Vec<&RunResult> = results.iter().filter(|r| r.hypothesis == crate::sim::Hypothesis::H1).collect();
    let h0: Vec<&RunResult> = results.iter().filter(|r| r.hypothesis == crate::sim::Hypothesis::H0).collect();
    let t_s: Vec<f64> = (1..=num_cpis).map(|k| k as f64 * cfg.illum_period_s).collect();

    let mut det_metrics = Vec::new();
    let mut roc = Vec::new();
    let trace_of = |r: &'_ RunResult, i: usize| -> DetectionTrace { r.traces[i].clone() };
    for (i, d) in detectors.iter().enumerate() {
        let h1_traces: Vec<DetectionTrace> = h1.iter().map(|r| trace_of(r, i)).collect();
        let h0_traces: Vec<DetectionTrace> = h0.iter().map(|r| trace_of(r, i)).collect();
        let h1_refs: Vec<&DetectionTrace> = h1_traces.iter().collect();
        let h0_refs: Vec<&DetectionTrace> = h0_traces.iter().collect();
        let pd_vs_time = (0..pfa_list.len())
            .map(|p| latched(&h1_refs, &h1.iter().map(|r| &r.thresholds[p]).collect::<Vec<_>>(), num_cpis))
            .collect();
        let pfa_vs_time = (0..pfa_list.len())
            .map(|p| latched(&h0_refs, &h0.iter().map(|r| &r.thresholds[p]).collect::<Vec<_>>(), num_cpis))
            .collect();
        let rows: Vec<Vec<f64>> = h1_traces.iter().map(|t| t.log_lrs()).collect();
        let (mean_integration, std_integration) = mean_std(&rows, num_cpis);
        let crossings: Vec<f64> = h1
            .iter()
            .zip(&h1_traces)
            .filter_map(|(r, t)| t.first_crossing(&r.thresholds[0]))
            .map(|k| k as f64 * cfg.illum_period_s)
            .collect();
        let mean_first_crossing_s =
            (!crossings.is_empty()).then(|| crossings.iter().sum::<f64>() / crossings.len() as f64);
        let crossed_fraction = crossings.len() as f64 / h1.len().max(1) as f64;
        let diverged_runs = results.iter().filter(|r| r.diverged.contains(d)).count();
        det_metrics.push(DetectorMetrics {
            detector: *d,
            pd_vs_time,
            pfa_vs_time,
            mean_integration,
            std_integration,
            mean_first_crossing_s,
            crossed_fraction,
            diverged_runs,
        });

        let kk = roc_k;
        let h1_final: Vec<f64> = h1_traces.iter().map(|t| t.records[kk - 1].log_lr).collect();
        let h0_final: Vec<f64> = h0_traces.iter().map(|t| t.records[kk - 1].log_lr).collect();
        let h1_sched: Vec<&CfarSchedule> = h1.iter().map(|r| &r.schedule).collect();
        let h0_sched: Vec<&CfarSchedule> = h0.iter().map(|r| &r.schedule).collect();
        roc.extend(compute_roc(*d, &h1_final, &h1_sched, Some((&h0_final, &h0_sched)), roc_grid, kk));
    }

    let mean_threshold = (0..pfa_list.len())
        .map(|p| mean_std(&h1.iter().map(|r| r.thresholds[p].clone()).collect::<Vec<_>>(), num_cpis).0)
        .collect();

    let mut rmse = RmseCurves::default();
    let mut em_iters = BTreeMap::new();
    let mut em_unconverged = 0;
    if let Some(i) = detectors.iter().position(|d| *d == DetectorKind::Proposed) {
        let est: Vec<Vec<KinematicState>> =
            h1.iter().map(|r| r.traces[i].records.iter().map(|c| c.state).collect()).collect();
        let truth: Vec<Vec<KinematicState>> = h1.iter().map(|r| r.trajectory.clone()).collect();
        rmse = compute_rmse(&est, &truth, cfg.rx_pos);
        for r in &h1 {
            for c in &r.traces[i].records {
                *em_iters.entry(c.em_iterations).or_insert(0) += 1;
                if !c.em_converged {
                    em_unconverged += 1;
                }
            }
        }
    }

    let m_all = cfg.num_channels;
    let with_sync: Vec<&&RunResult> = h1.iter().filter(|r| !r.sync_estimates.is_empty()).collect();
    let mut sync_error = Vec::new();
    let mut sync_rmse = Vec::new();
    let mut sync_mean = vec![Vec::new(); m_all];
    let mut sync_std = vec![Vec::new(); m_all];
    if !with_sync.is_empty() && m_all > 1 {
        for k in 0..num_cpis {
            let (mut abs, mut sq, mut n) = (0.0, 0.0, 0.0);
            for r in &with_sync {
                for m in 1..m_all {
                    let e = r.sync_estimates[k][m] - r.sync_offsets[m];
                    abs += e.abs();
                    sq += e * e;
                    n += 1.0;
                }
            }
            sync_error.push(abs / n);
            sync_rmse.push((sq / n).sqrt());
        }
        for m in 1..m_all {
            let rows: Vec<Vec<f64>> =
                with_sync.iter().map(|r| r.sync_estimates.iter().map(|v| v[m]).collect()).collect();
            let (mu, sd) = mean_std(&rows, num_cpis);
            sync_mean[m] = mu;
            sync_std[m] = sd;
        }
    }
    let sync_truth = h1.first().map(|r| r.sync_offsets.clone()).unwrap_or_default();

    MetricsBundle {
        pfa_list: pfa_list.to_vec(),
        num_cpis,
        runs: h1.len(),
        h0_runs: h0.len(),
        t_s,
        detectors: det_metrics,
        mean_threshold,
        roc_k,
        roc,
        rmse,
        sync_error,
        sync_rmse,
        sync_mean,
        sync_std,
        sync_truth,
        em_iters,
        em_unconverged,
        resolutions: Resolutions::of(cfg),
    }
}

//! Oracles and Monte Carlo routines shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use mstbd::detector::{DetectorKind, SyncBank};
use mstbd::estimators::{crb_alpha, estimate_sync, run_em, EmOptions, SyncHistory, SyncMode};
use mstbd::harness::{run_experiment, ExperimentSpec};
use mstbd::likelihood::ProductTable;
use mstbd::model::signal::signal_model;
use mstbd::model::{DataCube, KinematicState, NoiseCov, PhaseConvention, Scene, SceneConfig};
use mstbd::rng::{substream, Purpose};
use mstbd::sim::{
    draw_sync_offsets, generate_truth, synthesize_cube, synthesize_cube_with, GroundTruth, Hypothesis, SimOptions,
};
use mstbd::C64;

pub fn toy_config() -> SceneConfig {
    let mut cfg = SceneConfig::reference();
    cfg.num_elements = 4;
    cfg.num_range_bins = 8;
    cfg.num_pulses = 4;
    cfg.pri_s = 8.0 * cfg.pulse_dur_s;
    cfg
}

pub fn cn(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

pub fn random_hpd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let b = DMatrix::from_fn(dim, dim, |_, _| cn(rng));
    &b * b.adjoint() + DMatrix::identity(dim, dim) * C64::new(dim as f64 * 0.25, 0.0)
}

pub fn as_noise_cov(m: &DMatrix<C64>) -> NoiseCov {
    let n = m.nrows();
    NoiseCov::Matrix {
        re: (0..n).map(|i| (0..n).map(|j| m[(i, j)].re).collect()).collect(),
        im: (0..n).map(|i| (0..n).map(|j| m[(i, j)].im).collect()).collect(),
    }
}

/// Log-likelihood ratio of the whole `L × Γ × N` cube against noise only,
/// from a dense inverse of the block-diagonal covariance.
pub fn full_cube_oracle(
    scene: &Scene,
    cov: &DMatrix<C64>,
    cube: &DataCube,
    x: &KinematicState,
    m: usize,
    dt: f64,
    a: C64,
) -> f64 {
    let cfg = &scene.cfg;
    let ln = cfg.column_len();
    let g = cfg.num_range_bins;
    let dim = ln * g;
    let mut big = DMatrix::<C64>::zeros(dim, dim);
    for r in 0..g {
        big.view_mut((r * ln, r * ln), (ln, ln)).copy_from(cov);
    }
    let inv = big.try_inverse().unwrap();
    let z = DVector::from_fn(dim, |i, _| cube.column(i / ln)[i % ln]);
    let mut mu = DVector::<C64>::zeros(dim);
    for r in 0..g {
        for (i, v) in signal_model(r, x, scene, m, dt).unwrap().into_iter().enumerate() {
            mu[r * ln + i] = a * v;
        }
    }
    let quad = |v: &DVector<C64>| (v.adjoint() * &inv * v)[(0, 0)].re;
    quad(&z) - quad(&(&z - &mu))
}

/// Largest relative error of `cpi_log_lr` against [`full_cube_oracle`] on
/// the toy scene, one white and one correlated channel.
pub fn cpi_oracle_max_rel_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = toy_config();
    let dim = cfg.column_len();
    let cov1 = random_hpd(dim, &mut rng);
    cfg.noise_cov = vec![NoiseCov::Variance(2.0), as_noise_cov(&cov1)];
    let scene = Scene::new(cfg.clone()).unwrap();
    let covs = [DMatrix::identity(dim, dim) * C64::new(2.0, 0.0), cov1];
    let states = [
        KinematicState::new(800.0, 300.0, 10.0, -20.0),
        KinematicState::new(650.0, 420.0, -35.0, 5.0),
        KinematicState::new(900.0, 150.0, 0.0, 0.0),
    ];
    let dts = [0.0, 1.3e-6];
    let mut worst: f64 = 0.0;
    for x in &states {
        let cubes: Vec<DataCube> = (0..2)
            .map(|m| {
                let mut c = DataCube::zeros(m, 0, cfg.num_elements, cfg.num_range_bins, cfg.num_pulses);
                for r in 0..cfg.num_range_bins {
                    for v in c.column_mut(r) {
                        *v = cn(&mut rng) * 3.0;
                    }
                }
                c
            })
            .collect();
        let alphas = [cn(&mut rng), cn(&mut rng)];
        let got = mstbd::likelihood::cpi_log_lr(&scene, &cubes, x, &alphas, &dts, PhaseConvention::Carrier);
        let mut want_total = 0.0;
        for m in 0..2 {
            let want = full_cube_oracle(&scene, &covs[m], &cubes[m], x, m, dts[m], alphas[m]);
            worst = worst.max((got.per_channel[m] - want).abs() / want.abs().max(1.0));
            want_total += want;
        }
        worst = worst.max((got.total - want_total).abs() / want_total.abs().max(1.0));
    }
    worst
}

pub fn truth_for(scene: &Scene, x: &KinematicState, alphas: Vec<C64>, dts: Vec<f64>, run: u64) -> GroundTruth {
    GroundTruth {
        trajectory: vec![*x],
        reflectivities: alphas.into_iter().map(|a| vec![a]).collect(),
        sync_offsets: dts,
        direct_energy: vec![0.0; scene.num_channels()],
        hypothesis: Hypothesis::H1,
        seed: 4242,
        run,
    }
}

/// EM estimates of one channel's reflectivity at +20 dB over `n` noise
/// draws, with nine decoy particles competing against the true state.
pub struct CrbTrial {
    pub ratio: f64,
    pub bias: f64,
    pub bias_tol: f64,
}

pub fn em_variance_vs_crb(n: usize) -> Vec<CrbTrial> {
    let scene = Scene::new(SceneConfig::reference()).unwrap();
    let x = KinematicState::new(1000.0, 1000.0, 10.0, 50.0);
    let dts = vec![0.0, 12.5e-6];
    let mut states = vec![x];
    for i in 0..9 {
        let a = i as f64;
        states.push(KinematicState::new(900.0 + 25.0 * a, 1100.0 - 20.0 * a, -40.0 + 9.0 * a, 30.0 - 7.0 * a));
    }
    let prior = vec![1.0 / states.len() as f64; states.len()];
    (0..2)
        .map(|m| {
            let crb = crb_alpha(&scene, &x, m, dts[m]).unwrap();
            let g = crb.fisher / 2.0;
            let alpha_true = C64::from_polar((100.0 / g).sqrt(), 0.7);
            let est: Vec<C64> = (0..n as u64)
                .map(|run| {
                    let mut alphas = vec![C64::new(0.0, 0.0); 2];
                    alphas[m] = alpha_true;
                    let truth = truth_for(&scene, &x, alphas, dts.clone(), run);
                    let opts = SimOptions { noise_free: false, direct_path: false };
                    let cube = synthesize_cube(0, &truth, &scene, m, opts).unwrap();
                    let mut cubes = vec![cube.clone(), cube];
                    cubes[1 - m].channel = 1 - m;
                    let t = ProductTable::build(&scene, &cubes, &states, &dts, &[m], PhaseConvention::Carrier);
                    run_em(&t, &prior, &[m], None, EmOptions::default()).unwrap().alpha[m]
                })
                .collect();
            let mean = est.iter().sum::<C64>() / n as f64;
            let var = est.iter().map(|a| (a - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
            let bound = crb.complex_variance_bound();
            CrbTrial { ratio: var / bound, bias: (mean - alpha_true).norm(), bias_tol: 4.0 * (bound / n as f64).sqrt() }
        })
        .collect()
}

pub const SYNC_TEST_OFFSETS_TP: [f64; 4] = [3.0, 17.4, 41.77, 63.02];

/// Absolute sync errors on noise-free direct-path cubes.
pub fn noise_free_sync_errors(mode: SyncMode) -> Vec<f64> {
    let scene = Scene::new(SceneConfig::reference()).unwrap();
    let tp = scene.cfg.pulse_dur_s;
    let x = KinematicState::new(1000.0, 1000.0, 10.0, 50.0);
    SYNC_TEST_OFFSETS_TP
        .iter()
        .map(|f| {
            let dt = f * tp;
            let dts = vec![0.0, dt];
            let mut truth = truth_for(&scene, &x, vec![C64::new(0.0, 0.0); 2], dts, 0);
            truth.hypothesis = Hypothesis::H0;
            truth.direct_energy[1] = 1.0;
            let opts = SimOptions { noise_free: true, direct_path: true };
            let cube = synthesize_cube(0, &truth, &scene, 1, opts).unwrap();
            let mut h = SyncHistory::new(&scene, 1, 1.0, false).unwrap();
            h.push(&scene, &cube);
            (estimate_sync(&scene, &h, mode).unwrap().dt - dt).abs()
        })
        .collect()
}

/// Mean absolute offset error per CPI over `runs` runs at 0 dB direct-path
/// SNR, with a fresh offset per run.
pub fn zero_db_sync_mean_error(runs: u64, k_max: usize) -> Vec<f64> {
    let mut cfg = SceneConfig::reference();
    cfg.direct_snr_db = 0.0;
    let scene = Scene::new(cfg.clone()).unwrap();
    let x = KinematicState::new(1000.0, 1000.0, 10.0, 50.0);
    let mut err = vec![0.0; k_max];
    for run in 0..runs {
        let dts = draw_sync_offsets(&cfg, 20e-6, &mut substream(7, run, 0, 0, Purpose::SyncOffset));
        let truth = generate_truth(&scene, &x, k_max, &dts, Hypothesis::H1, 7, run).unwrap();
        let mut bank = SyncBank::new(&scene, &truth.direct_energy, SyncMode::default()).unwrap();
        for (k, e) in err.iter_mut().enumerate() {
            let mut rng = substream(7, run, k as u64, 1, Purpose::Noise);
            let c1 = synthesize_cube_with(k, &truth, &scene, 1, SimOptions::default(), &mut rng).unwrap();
            let mut c0 = c1.clone();
            c0.channel = 0;
            let est = bank.update(&scene, &[c0, c1]).unwrap();
            *e += (est[1] - dts[1]).abs() / runs as f64;
        }
    }
    err
}

/// Clairvoyant detector on noise-only runs of the reference scene.
pub fn null_batch(h0_runs: usize, num_cpis: usize, pfa: f64, seed: u64) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(SceneConfig::reference(), 1, num_cpis, seed);
    s.detectors = vec![DetectorKind::Clairvoyant];
    s.h0_runs = h0_runs;
    s.pfa_list = vec![pfa];
    s.direct_path = false;
    s
}

/// `(log L_K − μ_K)/σ_K` for each H0 run of [`null_batch`].
pub fn standardized_null_statistic(h0_runs: usize, num_cpis: usize, seed: u64) -> Vec<f64> {
    let out = run_experiment(&null_batch(h0_runs, num_cpis, 1e-6, seed)).unwrap();
    out.results
        .iter()
        .filter(|r| r.hypothesis == Hypothesis::H0)
        .map(|r| {
            let p = r.schedule.params(0.5, num_cpis);
            (r.traces[0].log_lr() - p.mu_k) / p.sigma_k
        })
        .collect()
}

/// Kolmogorov–Smirnov statistic against the standard normal.
pub fn ks_statistic(mut x: Vec<f64>) -> f64 {
    let n = Normal::standard();
    x.sort_by(f64::total_cmp);
    let len = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let f = n.cdf(*v);
            (f - i as f64 / len).abs().max(((i + 1) as f64 / len - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sided KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Exact central 99% binomial interval on a rate.
pub fn binomial_ci99(p: f64, n: u64) -> (f64, f64) {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let b = Binomial::new(p, n).unwrap();
    (b.inverse_cdf(0.005) as f64 / n as f64, b.inverse_cdf(0.995) as f64 / n as f64)
}

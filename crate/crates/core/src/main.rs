use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mstbd::detector::{fmt_f, write_traces_csv, DetectorKind};
use mstbd::estimators::{crb_alpha, SyncMode};
use mstbd::harness::{
    batch_sync_offsets, check_output_dir, emit_outputs, preset, resolved_config_json, run_experiment, run_one_with,
    Diagnostics, ExperimentSpec, HarnessError, PRESET_NAMES,
};
use mstbd::model::Scene;
use mstbd::sim::{generate_truth, synthesize_cpi, Hypothesis, SimOptions};

#[derive(Parser)]
#[command(name = "mstbd", version, about = "Multistatic track-before-detect workbench")]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one run and dump its data cubes plus truth.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        single: Single,
    },
    /// Run every detector on one simulated run and write its traces.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        single: Single,
        /// Write the EM iterates (iteration, step norm, Q) as CSV.
        #[arg(long, value_name = "FILE")]
        em_trace: Option<PathBuf>,
        /// Write the weighted particles of every CPI as CSV.
        #[arg(long, value_name = "FILE")]
        particles: Option<PathBuf>,
    },
    /// Full Monte Carlo batch with metrics, traces, ROC and RMSE files.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Reflection-coefficient CRB along the true trajectory of one run.
    Crb {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        single: Single,
    },
    /// Print the resolved configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
    },
    /// List the named presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset, see `mstbd presets`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long = "cpis")]
    num_cpis: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reflection SNR per channel and CPI, dB.
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Direct-path SNR, dB.
    #[arg(long, allow_negative_numbers = true)]
    direct_snr_db: Option<f64>,
    /// Comma-separated false-alarm probabilities; the first sets the trace thresholds.
    #[arg(long, value_delimiter = ',')]
    pfa: Option<Vec<f64>>,
    /// Comma-separated detectors: proposed, clairvoyant, conventional, single_channel_<m>.
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<DetectorKind>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    h0_runs: Option<usize>,
    #[arg(long)]
    roc_k: Option<usize>,
    /// coherent or phase_marginalized.
    #[arg(long, value_parser = parse_sync_mode)]
    sync_mode: Option<SyncMode>,
    /// Skip direct-path injection and use the true offsets.
    #[arg(long)]
    no_direct_path: bool,
}

#[derive(Args)]
struct Single {
    /// Run index, selecting the random substreams.
    #[arg(long, default_value_t = 0)]
    run: u64,
    /// Simulate under the null hypothesis.
    #[arg(long)]
    h0: bool,
}

fn parse_sync_mode(s: &str) -> Result<SyncMode, String> {
    match s {
        "coherent" => Ok(SyncMode::Coherent),
        "phase_marginalized" => Ok(SyncMode::PhaseMarginalized),
        _ => Err(format!("unknown sync mode `{s}`")),
    }
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec, HarnessError> {
        let mut s = match (&self.config, &self.preset) {
            (Some(p), _) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", p.display())))?;
                ExperimentSpec::from_toml(&text)?
            }
            (None, Some(name)) => {
                preset(name).ok_or_else(|| HarnessError::Config(format!("unknown preset `{name}`")))?
            }
            (None, None) => preset("paper-fig4").expect("built-in preset"),
        };
        if let Some(v) = self.runs {
            s.runs = v;
        }
        if let Some(v) = self.num_cpis {
            s.num_cpis = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.snr_db {
            s.scene.snr_db = v;
        }
        if let Some(v) = self.direct_snr_db {
            s.scene.direct_snr_db = v;
        }
        if let Some(v) = &self.pfa {
            s.pfa_list = v.clone();
        }
        if let Some(v) = &self.detectors {
            s.detectors = v.clone();
        }
        if let Some(v) = &self.output_dir {
            s.output_dir = Some(v.clone());
        }
        if self.workers.is_some() {
            s.workers = self.workers;
        }
        if let Some(v) = self.h0_runs {
            s.h0_runs = v;
        }
        if self.roc_k.is_some() {
            s.roc_k = self.roc_k;
        }
        if let Some(v) = self.sync_mode {
            s.sync_mode = v;
        }
        if self.no_direct_path {
            s.direct_path = false;
        }
        s.validate()?;
        Ok(s)
    }
}

fn out_dir(spec: &ExperimentSpec) -> Result<PathBuf, HarnessError> {
    let dir = spec.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    check_output_dir(&dir)?;
    Ok(dir)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

fn scene_for(spec: &ExperimentSpec) -> Result<(Scene, Vec<f64>), HarnessError> {
    let offsets = batch_sync_offsets(spec);
    let mut cfg = spec.scene.clone();
    cfg.sync_offsets = offsets.clone();
    let scene = Scene::new(cfg).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok((scene, offsets))
}

fn hypothesis(single: &Single) -> Hypothesis {
    if single.h0 {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    }
}

fn simulate(spec: &ExperimentSpec, single: &Single) -> Result<(), HarnessError> {
    let dir = out_dir(spec)?;
    let (scene, offsets) = scene_for(spec)?;
    let truth = generate_truth(
        &scene,
        &spec.initial_state,
        spec.num_cpis,
        &offsets,
        hypothesis(single),
        spec.seed,
        single.run,
    )?;
    let opts = SimOptions { noise_free: false, direct_path: spec.direct_path };
    let cubes = dir.join("cubes");
    fs::create_dir_all(&cubes).map_err(io_err(&cubes))?;
    for k in 0..spec.num_cpis {
        for cube in synthesize_cpi(k, &truth, &scene, opts)? {
            let p = cubes.join(format!("run{}_k{}_m{}.cube", single.run, k + 1, cube.channel));
            let mut w = create(&p)?;
            cube.write_dump(&mut w).map_err(io_err(&p))?;
            w.flush().map_err(io_err(&p))?;
        }
    }
    let p = dir.join("truth.json");
    fs::write(&p, serde_json::to_string_pretty(&truth)?).map_err(io_err(&p))?;
    let p = dir.join("config_resolved.json");
    fs::write(&p, resolved_config_json(spec, &offsets)?).map_err(io_err(&p))?;
    println!("wrote {} CPIs x {} channels to {}", spec.num_cpis, scene.num_channels(), cubes.display());
    Ok(())
}

fn detect(
    spec: &ExperimentSpec,
    single: &Single,
    em_trace: Option<&Path>,
    particles: Option<&Path>,
) -> Result<(), HarnessError> {
    let dir = out_dir(spec)?;
    let (scene, offsets) = scene_for(spec)?;
    let mut diag =
        Diagnostics { capture_em: em_trace.is_some(), capture_particles: particles.is_some(), ..Default::default() };
    let res = run_one_with(spec, &scene, &offsets, single.run, hypothesis(single), &mut diag)?;

    let p = dir.join("traces.csv");
    write_traces_csv(create(&p)?, &res.traces, scene.num_channels())?;
    let p = dir.join("config_resolved.json");
    fs::write(&p, resolved_config_json(spec, &offsets)?).map_err(io_err(&p))?;

    if let Some(path) = em_trace {
        let mut w = csv::Writer::from_writer(create(path)?);
        let mut header =
            vec!["detector".to_string(), "k".into(), "iteration".into(), "step_norm".into(), "q_hat".into()];
        for m in 0..scene.num_channels() {
            header.push(format!("alpha_re_{m}"));
            header.push(format!("alpha_im_{m}"));
        }
        w.write_record(&header)?;
        for (d, k, trace) in &diag.em {
            for (i, it) in trace.iter().enumerate() {
                let mut row = vec![d.to_string(), k.to_string(), i.to_string(), fmt_f(it.step_norm), fmt_f(it.q_hat)];
                for a in &it.alpha {
                    row.push(fmt_f(a.re));
                    row.push(fmt_f(a.im));
                }
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(io_err(path))?;
    }
    if let Some(path) = particles {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["detector", "run", "k", "p", "x", "y", "vx", "vy", "weight"])?;
        for (d, k, states, weights) in &diag.particles {
            for (i, (s, wt)) in states.iter().zip(weights).enumerate() {
                w.write_record([
                    d.to_string(),
                    single.run.to_string(),
                    k.to_string(),
                    i.to_string(),
                    fmt_f(s.x),
                    fmt_f(s.y),
                    fmt_f(s.vx),
                    fmt_f(s.vy),
                    fmt_f(*wt),
                ])?;
            }
        }
        w.flush().map_err(io_err(path))?;
    }

    let thr = &res.thresholds[0];
    println!("run {} ({:?}), pfa {:e}", single.run, res.hypothesis, spec.primary_pfa());
    for t in &res.traces {
        let last = t.records.last().expect("at least one CPI");
        let cross = t.first_crossing(thr).map(|k| format!("CPI {k}")).unwrap_or_else(|| "never".into());
        println!(
            "  {:<20} log L(K) = {:>10.3}  threshold = {:>8.3}  first crossing: {cross}",
            t.detector.to_string(),
            last.log_lr,
            last.threshold_log
        );
    }
    if !res.diverged.is_empty() {
        println!("  diverged: {:?}", res.diverged.iter().map(|d| d.to_string()).collect::<Vec<_>>());
    }
    Ok(())
}

fn crb(spec: &ExperimentSpec, single: &Single) -> Result<(), HarnessError> {
    let dir = out_dir(spec)?;
    let (scene, offsets) = scene_for(spec)?;
    let truth = generate_truth(
        &scene,
        &spec.initial_state,
        spec.num_cpis,
        &offsets,
        hypothesis(single),
        spec.seed,
        single.run,
    )?;
    let p = dir.join("crb.csv");
    let mut w = csv::Writer::from_writer(create(&p)?);
    w.write_record(["run", "k", "channel", "fisher", "variance_bound", "sigma_crb", "alpha_re", "alpha_im"])?;
    for (k, x) in truth.trajectory.iter().enumerate() {
        for (m, &dt) in offsets.iter().enumerate() {
            let c = crb_alpha(&scene, x, m, dt).map_err(mstbd::detector::DetectorError::from)?;
            let a = truth.reflectivities[m][k];
            w.write_record([
                single.run.to_string(),
                (k + 1).to_string(),
                m.to_string(),
                fmt_f(c.fisher),
                fmt_f(c.variance_bound),
                fmt_f(c.variance_bound.sqrt()),
                fmt_f(a.re),
                fmt_f(a.im),
            ])?;
        }
    }
    w.flush().map_err(io_err(&p))?;
    println!("wrote {}", p.display());
    Ok(())
}

fn experiment(spec: &ExperimentSpec) -> Result<(), HarnessError> {
    let dir = out_dir(spec)?;
    let out = run_experiment(spec)?;
    emit_outputs(&dir, spec, &out)?;
    let m = &out.metrics;
    let k = m.num_cpis;
    println!("{} runs, K = {k}, pfa {:e}", m.runs, spec.primary_pfa());
    for d in &m.detectors {
        let cross = d.mean_first_crossing_s.map(|t| format!("{t:.2} s")).unwrap_or_else(|| "-".into());
        println!(
            "  {:<20} mean log L(K) = {:>9.3} ± {:>7.3}  Pd(K) = {:.3}  mean first crossing {cross}",
            d.detector.to_string(),
            d.mean_integration[k - 1],
            d.std_integration[k - 1],
            d.pd_vs_time[0][k - 1],
        );
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

fn dispatch(cmd: &Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Simulate { common, single } => simulate(&common.spec()?, single),
        Cmd::Detect { common, single, em_trace, particles } => {
            detect(&common.spec()?, single, em_trace.as_deref(), particles.as_deref())
        }
        Cmd::Experiment { common } => experiment(&common.spec()?),
        Cmd::Crb { common, single } => crb(&common.spec()?, single),
        Cmd::Config { common } => {
            let _ = std::io::stdout().lock().write_all(common.spec()?.to_toml()?.as_bytes());
            Ok(())
        }
        Cmd::Presets => {
            let mut out = std::io::stdout().lock();
            for n in PRESET_NAMES {
                if writeln!(out, "{n}").is_err() {
                    break;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HarnessError::Config(_) => 2,
                HarnessError::Divergence { .. } => 3,
                _ => 1,
            })
        }
    }
}

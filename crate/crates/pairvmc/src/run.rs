//! Training and evaluation runs backed by an output directory.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use pairvmc_core::hamiltonian::local_energy;
use pairvmc_core::sampler::{init_walkers, metropolis_sweep, ModelDensity, WalkerEnsemble};
use pairvmc_core::trainer::{summarize, TraceRecord, Trainer};
use pairvmc_core::{NetParams, SystemSpec, Wavefunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::CliError;

pub const TRACE_HEADER: &str = "iter,energy,variance,acceptance,grad_norm,ms";
pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";
const LOCK_FILE: &str = ".lock";

/// Exclusive ownership of an output directory for the lifetime of a run.
struct OutputLock(PathBuf);

impl OutputLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(CliError::io(format!("locking {}", dir.display()))(e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ansatz: String,
    pub iterations: u64,
    /// Mean over the last `window` iterations at the given stride.
    pub energy: f64,
    pub stderr: f64,
    pub samples: usize,
    pub window: usize,
    pub stride: usize,
    pub last_energy: f64,
    pub last_variance: f64,
}

pub fn build_model(cfg: &RunConfig) -> Result<(SystemSpec, Wavefunction), CliError> {
    let spec = cfg.system()?;
    let wf = Wavefunction::new(cfg.kind()?, spec.clone(), &cfg.net())?;
    Ok((spec, wf))
}

fn format_record(r: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.iter, r.energy, r.variance, r.acceptance, r.grad_norm, r.ms
    )
}

fn parse_record(line: &str) -> Option<TraceRecord> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 6 {
        return None;
    }
    Some(TraceRecord {
        iter: f[0].parse().ok()?,
        energy: f[1].parse().ok()?,
        variance: f[2].parse().ok()?,
        acceptance: f[3].parse().ok()?,
        grad_norm: f[4].parse().ok()?,
        ms: f[5].parse().ok()?,
    })
}

/// Reads a trace CSV written by [`train`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, CliError> {
    let f = File::open(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(CliError::io(format!("reading {}", path.display())))?;
        if i == 0 {
            if line != TRACE_HEADER {
                return Err(CliError::Config(format!(
                    "{} has an unexpected header",
                    path.display()
                )));
            }
            continue;
        }
        let r = parse_record(&line).ok_or_else(|| {
            CliError::Config(format!("{}: malformed line {}", path.display(), i + 1))
        })?;
        out.push(r);
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    std::fs::write(path, text + "\n").map_err(CliError::io(format!("writing {}", path.display())))
}

/// Trains per `cfg`, writing `trace.csv`, `checkpoint.bin`, `summary.json`
/// and the effective `config.toml` into `cfg.output`. With `resume`, the run
/// continues from that checkpoint and extends the existing trace.
pub fn train(
    cfg: &RunConfig,
    resume: Option<&Path>,
    progress: bool,
) -> Result<RunSummary, CliError> {
    let (spec, wf) = build_model(cfg)?;
    let dir = &cfg.output;
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let _lock = OutputLock::acquire(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml()).map_err(CliError::io(format!(
        "writing {}",
        dir.join(CONFIG_FILE).display()
    )))?;

    let kind = wf.kind.name();
    let mut params = wf.init_params(cfg.seed);
    let train_cfg = cfg.train_config();
    let trace_path = dir.join(TRACE_FILE);

    let (mut trainer, mut history) = match resume {
        Some(ckpt_path) => {
            let ckpt = Checkpoint::load(ckpt_path)?;
            if ckpt.meta.kind != kind {
                return Err(CliError::Shape(format!(
                    "checkpoint is for '{}', configuration asks for '{kind}'",
                    ckpt.meta.kind
                )));
            }
            ckpt.restore_params(&mut params)?;
            let state = ckpt.restore_state(&params, spec.n_coords())?;
            // rows past the checkpoint belong to the interrupted attempt
            let history: Vec<TraceRecord> = if trace_path.exists() {
                read_trace(&trace_path)?
                    .into_iter()
                    .filter(|r| r.iter < state.iteration)
                    .collect()
            } else {
                Vec::new()
            };
            let t = Trainer::from_state(&wf, spec.clone(), train_cfg, cfg.mcmc(), state)?;
            (t, history)
        }
        None => {
            let t = Trainer::new(
                &wf,
                spec.clone(),
                params.data.clone(),
                train_cfg,
                cfg.mcmc(),
            )?;
            (t, Vec::new())
        }
    };

    let file = File::create(&trace_path)
        .map_err(CliError::io(format!("writing {}", trace_path.display())))?;
    let mut trace = BufWriter::new(file);
    let trace_err = || CliError::io(format!("writing {}", trace_path.display()));
    writeln!(trace, "{TRACE_HEADER}").map_err(trace_err())?;
    for r in &history {
        writeln!(trace, "{}", format_record(r)).map_err(trace_err())?;
    }

    let save =
        |trainer: &Trainer<'_, Wavefunction>, params: &mut NetParams| -> Result<(), CliError> {
            params.data.copy_from_slice(&trainer.state.theta);
            Checkpoint::from_state(kind, params, &trainer.state).save(&dir.join(CHECKPOINT_FILE))
        };

    let total = cfg.train.iterations as u64;
    let every = cfg.train.checkpoint_every as u64;
    let report_every = (total / 20).max(1);
    while trainer.state.iteration < total {
        let start = Instant::now();
        let step = trainer.step();
        let mut r = match step {
            Ok(r) => r,
            Err(e) => {
                trace.flush().map_err(trace_err())?;
                return Err(e.into());
            }
        };
        if cfg.train.record_time {
            r.ms = start.elapsed().as_secs_f64() * 1e3;
        }
        writeln!(trace, "{}", format_record(&r)).map_err(trace_err())?;
        if progress && (r.iter % report_every == 0 || r.iter + 1 == total) {
            eprintln!(
                "iter {:>6}  E = {:.6}  var = {:.3e}  acc = {:.3}  |g| = {:.3e}",
                r.iter, r.energy, r.variance, r.acceptance, r.grad_norm
            );
        }
        history.push(r);
        if trainer.state.iteration % every == 0 {
            trace.flush().map_err(trace_err())?;
            save(&trainer, &mut params)?;
        }
    }
    trace.flush().map_err(trace_err())?;
    save(&trainer, &mut params)?;

    let energies: Vec<f64> = history.iter().map(|r| r.energy).collect();
    let s = summarize(
        &energies,
        cfg.train.summary_window,
        cfg.train.summary_stride,
    )
    .ok_or_else(|| CliError::Config("no iterations were run".into()))?;
    let last = history.last().expect("summary implies a record");
    let summary = RunSummary {
        ansatz: kind.into(),
        iterations: trainer.state.iteration,
        energy: s.energy,
        stderr: s.stderr,
        samples: s.samples,
        window: cfg.train.summary_window,
        stride: cfg.train.summary_stride,
        last_energy: last.energy,
        last_variance: last.variance,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Fixed-parameter energy estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub energy: f64,
    /// Standard error from the spread of the block means.
    pub sigma: f64,
    pub blocks: usize,
    pub sweeps_per_block: usize,
    pub walkers: usize,
}

/// Samples `|psi|^2` with frozen parameters and estimates the energy by
/// blocking: each block averages the local energy over all walkers and
/// `sweeps_per_block` sweeps, and the error bar is the standard error of the
/// block means.
pub fn evaluate_params(
    cfg: &RunConfig,
    wf: &Wavefunction,
    theta: &[f64],
    walkers: Option<WalkerEnsemble>,
) -> Result<Evaluation, CliError> {
    let spec = &wf.spec;
    let dn = spec.n_coords();
    let mut ens = match walkers {
        Some(w) => w,
        None => init_walkers(spec, cfg.train.batch, cfg.seed)?,
    };
    let mcmc = cfg.mcmc();
    let target = ModelDensity::new(wf, theta, spec);
    ens.refresh(&target)?;
    for _ in 0..cfg.evaluate.burn_in {
        metropolis_sweep(&mut ens, &target, &mcmc);
    }
    let psi = wf.bind(theta);
    let nb = cfg.evaluate.blocks;
    let mut means = Vec::with_capacity(nb);
    for _ in 0..nb {
        let mut sum = 0.0;
        for _ in 0..cfg.evaluate.sweeps_per_block {
            metropolis_sweep(&mut ens, &target, &mcmc);
            let e: Vec<Result<f64, pairvmc_core::Error>> = ens
                .positions
                .data()
                .par_chunks(dn)
                .map(|x| local_energy(&psi, x, spec).map(|s| s.e_local))
                .collect();
            for (w, v) in e.into_iter().enumerate() {
                match v {
                    Ok(v) if v.is_finite() => sum += v,
                    _ => return Err(pairvmc_core::Error::NonFiniteEnergy { walker: w }.into()),
                }
            }
        }
        means.push(sum / (cfg.evaluate.sweeps_per_block * ens.batch()) as f64);
    }
    let n = nb as f64;
    let energy = means.iter().sum::<f64>() / n;
    let var = means
        .iter()
        .map(|m| (m - energy) * (m - energy))
        .sum::<f64>()
        / (n - 1.0);
    Ok(Evaluation {
        energy,
        sigma: (var / n).sqrt(),
        blocks: nb,
        sweeps_per_block: cfg.evaluate.sweeps_per_block,
        walkers: ens.batch(),
    })
}

/// Evaluates the parameters stored in a checkpoint, continuing from its
/// walkers.
pub fn evaluate(cfg: &RunConfig, ckpt_path: &Path) -> Result<Evaluation, CliError> {
    let (spec, wf) = build_model(cfg)?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    if ckpt.meta.kind != wf.kind.name() {
        return Err(CliError::Shape(format!(
            "checkpoint is for '{}', configuration asks for '{}'",
            ckpt.meta.kind,
            wf.kind.name()
        )));
    }
    let mut params = wf.init_params(cfg.seed);
    ckpt.restore_params(&mut params)?;
    let walkers = ckpt
        .restore_state(&params, spec.n_coords())
        .ok()
        .map(|s| s.walkers);
    evaluate_params(cfg, &wf, &params.data, walkers)
}

//! Variational energy minimization.

use alloc::vec;
use alloc::vec::Vec;

use crate::ansatz::{param_gradient, Model};
use crate::error::{Error, Result};
use crate::hamiltonian::{local_energy, SystemSpec};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::par;
use crate::sampler::{init_walkers, metropolis_sweep, McmcConfig, ModelDensity, WalkerEnsemble};

/// Walkers per gradient chunk. Chunks are reduced in index order.
const CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// `lr_t = lr / (1 + t / lr_decay)`; zero keeps the rate constant.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    /// Local energies further than this many median absolute deviations from
    /// the median are clipped before forming the gradient.
    pub winsorize: Option<f64>,
    pub seed: u64,
    pub summary_window: usize,
    pub summary_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 2048,
            iterations: 10_000,
            learning_rate: 1e-4,
            lr_decay: 10_000.0,
            adam: AdamConfig::default(),
            winsorize: Some(5.0),
            seed: 0,
            summary_window: 1000,
            summary_stride: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::InvalidConfig(
                "batch must hold at least 2 walkers".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if !(self.lr_decay >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning-rate decay must be non-negative".into(),
            ));
        }
        if let Some(c) = self.adam.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig("clip norm must be positive".into()));
            }
        }
        if self.summary_window == 0 || self.summary_stride == 0 {
            return Err(Error::InvalidConfig(
                "summary window and stride must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, t: u64) -> f64 {
        if self.lr_decay > 0.0 {
            self.learning_rate / (1.0 + t as f64 / self.lr_decay)
        } else {
            self.learning_rate
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: u64,
    pub energy: f64,
    pub variance: f64,
    pub acceptance: f64,
    pub grad_norm: f64,
    /// Wall-clock time of the iteration, filled in by the caller.
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyTrace {
    pub records: Vec<TraceRecord>,
}

impl EnergyTrace {
    pub fn push(&mut self, r: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.iter <= last.iter {
                return Err(Error::InvalidConfig(alloc::format!(
                    "trace iteration {} does not follow {}",
                    r.iter,
                    last.iter
                )));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Last-window average of a trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub energy: f64,
    /// Standard error of the strided samples.
    pub stderr: f64,
    pub samples: usize,
}

/// Mean of every `stride`-th energy among the last `window` records.
pub fn summarize(energies: &[f64], window: usize, stride: usize) -> Option<Summary> {
    let start = energies.len().saturating_sub(window);
    let picked: Vec<f64> = energies[start..]
        .iter()
        .step_by(stride.max(1))
        .copied()
        .collect();
    if picked.is_empty() {
        return None;
    }
    let n = picked.len() as f64;
    let mean = picked.iter().sum::<f64>() / n;
    let var = if picked.len() > 1 {
        picked.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(Summary {
        energy: mean,
        stderr: libm::sqrt(var / n),
        samples: picked.len(),
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Clips values to `median ± k * MAD`.
pub fn winsorize(values: &[f64], k: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median(&dev);
    let (lo, hi) = (med - k * mad, med + k * mad);
    values.iter().map(|v| v.clamp(lo, hi)).collect()
}

/// Per-walker weights `2 (E_b - E) / B` of the gradient estimator, with the
/// local energies optionally winsorized first.
pub fn centred_weights(e_local: &[f64], winsor: Option<f64>) -> Vec<f64> {
    let b = e_local.len() as f64;
    let src = match winsor {
        Some(k) => winsorize(e_local, k),
        None => e_local.to_vec(),
    };
    let centre = src.iter().sum::<f64>() / b;
    src.iter().map(|e| 2.0 * (e - centre) / b).collect()
}

/// `2 mean_b[(E_b - E) g_b]` from per-walker log-derivative gradients.
pub fn vmc_gradient(e_local: &[f64], grads: &[Vec<f64>], winsor: Option<f64>) -> Vec<f64> {
    let w = centred_weights(e_local, winsor);
    let mut out = vec![0.0; grads.first().map_or(0, Vec::len)];
    for (wb, g) in w.iter().zip(grads) {
        for (o, gi) in out.iter_mut().zip(g) {
            *o += wb * gi;
        }
    }
    out
}

/// Batch energy statistics and the gradient of the mean energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGrad {
    /// Raw batch mean of the local energy.
    pub energy: f64,
    pub variance: f64,
    pub e_local: Vec<f64>,
    pub grad: Vec<f64>,
}

/// `g = 2 mean_b[(E_L(x_b) - E) grad log|psi(x_b)|]` over a batch of
/// configurations `[B, dN]`.
pub fn energy_and_grad<M: Model>(
    model: &M,
    theta: &[f64],
    positions: &[f64],
    dn: usize,
    spec: &SystemSpec,
    winsor: Option<f64>,
) -> Result<EnergyGrad> {
    let b = positions.len() / dn;
    let psi = crate::ansatz::Bound { model, theta };
    let locals = par::map_indexed(b, |w| {
        local_energy(&psi, &positions[w * dn..(w + 1) * dn], spec).map(|s| s.e_local)
    });
    let mut e_local = Vec::with_capacity(b);
    for (w, e) in locals.into_iter().enumerate() {
        match e {
            Ok(v) if v.is_finite() => e_local.push(v),
            _ => return Err(Error::NonFiniteEnergy { walker: w }),
        }
    }
    let energy = e_local.iter().sum::<f64>() / b as f64;
    let variance = e_local
        .iter()
        .map(|e| (e - energy) * (e - energy))
        .sum::<f64>()
        / b as f64;

    let weights = centred_weights(&e_local, winsor);

    let p = model.n_params();
    let n_chunks = b.div_ceil(CHUNK);
    let partial = par::map_indexed(n_chunks, |c| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; p];
        for w in c * CHUNK..((c + 1) * CHUNK).min(b) {
            let (_, g) = param_gradient(model, theta, &positions[w * dn..(w + 1) * dn])
                .map_err(|_| Error::NonFiniteEnergy { walker: w })?;
            for (a, gi) in acc.iter_mut().zip(&g) {
                *a += weights[w] * gi;
            }
        }
        Ok(acc)
    });
    let mut grad = vec![0.0; p];
    for chunk in partial {
        for (g, c) in grad.iter_mut().zip(chunk?) {
            *g += c;
        }
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(EnergyGrad {
        energy,
        variance,
        e_local,
        grad,
    })
}

/// Everything needed to continue a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub theta: Vec<f64>,
    pub adam: AdamState,
    pub walkers: WalkerEnsemble,
    /// Iterations completed so far.
    pub iteration: u64,
}

pub struct Trainer<'m, M: Model> {
    pub model: &'m M,
    pub spec: SystemSpec,
    pub config: TrainConfig,
    pub mcmc: McmcConfig,
    pub state: TrainerState,
}

impl<'m, M: Model> Trainer<'m, M> {
    /// Places walkers, equilibrates them for the configured burn-in and
    /// returns a trainer at iteration zero.
    pub fn new(
        model: &'m M,
        spec: SystemSpec,
        theta: Vec<f64>,
        config: TrainConfig,
        mcmc: McmcConfig,
    ) -> Result<Self> {
        config.validate()?;
        mcmc.validate()?;
        if theta.len() != model.n_params() {
            return Err(Error::Shape(alloc::format!(
                "{} parameters supplied, model has {}",
                theta.len(),
                model.n_params()
            )));
        }
        let mut walkers = init_walkers(&spec, config.batch, config.seed)?;
        {
            let target = ModelDensity::new(model, &theta, &spec);
            walkers.refresh(&target)?;
            for _ in 0..mcmc.burn_in {
                metropolis_sweep(&mut walkers, &target, &mcmc);
            }
        }
        let adam = AdamState::new(theta.len());
        Ok(Self {
            model,
            spec,
            config,
            mcmc,
            state: TrainerState {
                theta,
                adam,
                walkers,
                iteration: 0,
            },
        })
    }

    pub fn from_state(
        model: &'m M,
        spec: SystemSpec,
        config: TrainConfig,
        mcmc: McmcConfig,
        state: TrainerState,
    ) -> Result<Self> {
        config.validate()?;
        mcmc.validate()?;
        let dn = spec.n_coords();
        if state.theta.len() != model.n_params()
            || state.adam.m.len() != state.theta.len()
            || state.walkers.positions.shape().get(1) != Some(&dn)
        {
            return Err(Error::Shape(
                "trainer state does not match the model".into(),
            ));
        }
        Ok(Self {
            model,
            spec,
            config,
            mcmc,
            state,
        })
    }

    /// One iteration: sample, estimate, update.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let st = &mut self.state;
        let acceptance = {
            let target = ModelDensity::new(self.model, &st.theta, &self.spec);
            metropolis_sweep(&mut st.walkers, &target, &self.mcmc)
        };
        let eg = energy_and_grad(
            self.model,
            &st.theta,
            st.walkers.positions.data(),
            self.spec.n_coords(),
            &self.spec,
            self.config.winsorize,
        )?;
        let lr = self.config.lr_at(st.iteration);
        let grad_norm = adam_step(&mut st.theta, &eg.grad, &mut st.adam, lr, &self.config.adam)?;
        self.model.project(&mut st.theta);
        // parameters moved, so the cached densities are stale
        let target = ModelDensity::new(self.model, &st.theta, &self.spec);
        st.walkers.refresh(&target)?;
        let record = TraceRecord {
            iter: st.iteration,
            energy: eg.energy,
            variance: eg.variance,
            acceptance,
            grad_norm,
            ms: 0.0,
        };
        st.iteration += 1;
        Ok(record)
    }

    /// Runs until `config.iterations` iterations have completed in total.
    pub fn train(&mut self, mut on_record: impl FnMut(&TraceRecord)) -> Result<EnergyTrace> {
        let mut trace = EnergyTrace::default();
        while (self.state.iteration as usize) < self.config.iterations {
            let r = self.step()?;
            on_record(&r);
            trace.push(r)?;
        }
        Ok(trace)
    }
}

/// Trains from fresh walkers and returns the trace and final parameters.
pub fn train<M: Model>(
    model: &M,
    spec: &SystemSpec,
    theta: Vec<f64>,
    config: &TrainConfig,
    mcmc: &McmcConfig,
) -> Result<(EnergyTrace, Vec<f64>)> {
    let mut t = Trainer::new(model, spec.clone(), theta, config.clone(), *mcmc)?;
    let trace = t.train(|_| {})?;
    Ok((trace, t.state.theta))
}

/// Centred moving average with the given window (shorter at the ends).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Mann-Kendall trend statistic `S = sum_{i<j} sign(v_j - v_i)`; negative
/// for a decreasing series.
pub fn mann_kendall(values: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            s += match values[j].partial_cmp(&values[i]) {
                Some(core::cmp::Ordering::Greater) => 1,
                Some(core::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Param, Real, SignedLog};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// `psi = c exp(-a x²/2 + b x)` for one particle in a 1D trap; params
    /// `(a, b, c)`.
    struct ShiftedGaussian;

    impl Model for ShiftedGaussian {
        fn n_params(&self) -> usize {
            3
        }

        fn log_psi<S: Real, P: Param<S>>(&self, theta: &[P], x: &[S]) -> Result<SignedLog<S>> {
            let a: S = theta[0].lift();
            let b: S = theta[1].lift();
            let c: S = theta[2].lift();
            let e = (a * x[0] * x[0]).scale(-0.5) + b * x[0];
            Ok(SignedLog::from_value(c)
                * SignedLog {
                    sign: 1,
                    log_abs: e,
                })
        }
    }

    fn trap() -> SystemSpec {
        SystemSpec::harmonic(1, 1.0, 1, 0)
    }

    #[test]
    fn hand_computed_two_walker_estimator() {
        let g1 = vec![0.3, -1.0];
        let g2 = vec![2.0, 0.5];
        let g = vmc_gradient(&[1.0, 3.0], &[g1.clone(), g2.clone()], None);
        assert_eq!(g, vec![g2[0] - g1[0], g2[1] - g1[1]]);
    }

    #[test]
    fn batch_gradient_agrees_with_per_walker_assembly() {
        let model = ShiftedGaussian;
        let theta = [0.7, 0.2, 1.0];
        let xs = [0.3, -1.1, 0.6];
        let eg = energy_and_grad(&model, &theta, &xs, 1, &trap(), None).unwrap();
        let grads: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| param_gradient(&model, &theta, &[*x]).unwrap().1)
            .collect();
        let want = vmc_gradient(&eg.e_local, &grads, None);
        for (a, b) in eg.grad.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_eigenstate_has_zero_gradient() {
        let model = ShiftedGaussian;
        let theta = [1.0, 0.0, 1.0];
        let xs: Vec<f64> = (0..64).map(|i| -2.0 + i as f64 / 16.0).collect();
        let eg = energy_and_grad(&model, &theta, &xs, 1, &trap(), Some(5.0)).unwrap();
        assert!(eg.grad.iter().all(|g| g.abs() < 1e-8));
        assert!((eg.energy - 0.5).abs() < 1e-12);
        assert!(eg.variance < 1e-20);
    }

    #[test]
    fn scaling_psi_leaves_the_energy() {
        let model = ShiftedGaussian;
        let xs = [0.1, 0.8, -0.4, 1.7];
        let a = energy_and_grad(&model, &[0.8, 0.3, 1.0], &xs, 1, &trap(), None).unwrap();
        let b = energy_and_grad(&model, &[0.8, 0.3, 2.0], &xs, 1, &trap(), None).unwrap();
        assert!((a.energy - b.energy).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_closed_form() {
        // |psi|² is a Gaussian with mean b/a and variance 1/(2a), and
        // <E> = a/4 + 1/(4a) + b²/(2a²)
        let (a, b) = (1.6, 0.4);
        let model = ShiftedGaussian;
        let theta = [a, b, 1.0];
        let n = 8192;
        let dist = Normal::new(b / a, libm::sqrt(1.0 / (2.0 * a))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let eg = energy_and_grad(&model, &theta, &xs, 1, &trap(), None).unwrap();
        let want = [0.25 - 0.25 / (a * a) - b * b / (a * a * a), b / (a * a)];
        // standard error of the estimator from per-sample contributions
        for k in 0..2 {
            let contrib: Vec<f64> = xs
                .iter()
                .zip(&eg.e_local)
                .map(|(x, e)| {
                    let (_, g) = param_gradient(&model, &theta, &[*x]).unwrap();
                    2.0 * (e - eg.energy) * g[k]
                })
                .collect();
            let m = contrib.iter().sum::<f64>() / n as f64;
            let var = contrib.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (n - 1) as f64;
            let se = libm::sqrt(var / n as f64);
            assert!(
                (eg.grad[k] - want[k]).abs() < 3.0 * se,
                "{k}: {} vs {}",
                eg.grad[k],
                want[k]
            );
        }
    }

    #[test]
    fn winsorize_clips_outliers_only() {
        let v = [1.0, 1.1, 0.9, 1.0, 100.0];
        let w = winsorize(&v, 5.0);
        assert_eq!(&w[..4], &v[..4]);
        assert!((w[4] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn summary_uses_the_strided_tail() {
        let e: Vec<f64> = (0..2000)
            .map(|i| if i < 1000 { 10.0 } else { (i % 10) as f64 })
            .collect();
        let s = summarize(&e, 1000, 10).unwrap();
        assert_eq!(s.samples, 100);
        assert_eq!(s.energy, 0.0);
        assert!(summarize(&[], 10, 1).is_none());
    }

    #[test]
    fn trend_statistic() {
        assert!(mann_kendall(&[3.0, 2.0, 2.5, 1.0]) < 0);
        assert_eq!(mann_kendall(&[1.0, 2.0, 3.0]), 3);
        let smooth = moving_average(&[1.0, 2.0, 3.0, 4.0], 3);
        assert_eq!(smooth, vec![1.5, 2.0, 3.0, 3.5]);
    }

    #[test]
    fn training_lowers_a_trap_energy() {
        let model = ShiftedGaussian;
        let cfg = TrainConfig {
            batch: 256,
            iterations: 300,
            learning_rate: 0.05,
            lr_decay: 0.0,
            ..TrainConfig::default()
        };
        let mcmc = McmcConfig {
            steps_per_iter: 5,
            move_width: 0.8,
            burn_in: 50,
        };
        let (trace, theta) = train(&model, &trap(), vec![2.5, 0.5, 1.0], &cfg, &mcmc).unwrap();
        assert_eq!(trace.len(), 300);
        let tail = summarize(&trace.energies(), 100, 1).unwrap();
        assert!((tail.energy - 0.5).abs() < 0.01, "{tail:?} {theta:?}");
        assert!(trace.records.windows(2).all(|w| w[1].iter == w[0].iter + 1));
    }

    #[test]
    fn resumed_training_matches_uninterrupted() {
        let model = ShiftedGaussian;
        let cfg = TrainConfig {
            batch: 32,
            iterations: 20,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let mcmc = McmcConfig {
            steps_per_iter: 3,
            move_width: 0.5,
            burn_in: 5,
        };
        let mut full =
            Trainer::new(&model, trap(), vec![1.3, 0.1, 1.0], cfg.clone(), mcmc).unwrap();
        let whole = full.train(|_| {}).unwrap();

        let mut first = Trainer::new(
            &model,
            trap(),
            vec![1.3, 0.1, 1.0],
            TrainConfig {
                iterations: 8,
                ..cfg.clone()
            },
            mcmc,
        )
        .unwrap();
        let head = first.train(|_| {}).unwrap();
        let mut second = Trainer::from_state(&model, trap(), cfg, mcmc, first.state).unwrap();
        let tail = second.train(|_| {}).unwrap();
        let joined: Vec<_> = head.records.iter().chain(&tail.records).copied().collect();
        assert_eq!(joined, whole.records);
        assert_eq!(second.state, full.state);
    }
}

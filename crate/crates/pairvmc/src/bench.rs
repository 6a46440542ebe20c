//! Timing of the antisymmetrization stage alone, with head outputs
//! precomputed.

use std::hint::black_box;
use std::io::Write;
use std::time::{Duration, Instant};

use pairvmc_core::ansatz::{psi_fermi, psi_pair_double, psi_pair_prime};
use pairvmc_core::AnsatzKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BENCH_KINDS: [AnsatzKind; 3] = [
    AnsatzKind::PairPrime,
    AnsatzKind::PairDouble,
    AnsatzKind::Fermi,
];
pub const CSV_HEADER: &str = "N,kind,ns_per_eval";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub n: usize,
    pub kind: AnsatzKind,
    pub ns_per_eval: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub timings: Vec<Timing>,
    /// Least-squares slope of `ln t` against `ln N`, per kind.
    pub slopes: Vec<(AnsatzKind, f64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct BenchConfig {
    pub min_n: usize,
    pub max_n: usize,
    /// Minimum duration of one timed batch.
    pub batch_time: Duration,
    /// Batches per point; the fastest one is kept.
    pub repeats: usize,
}

impl BenchConfig {
    pub fn up_to(max_n: usize) -> Self {
        Self {
            min_n: 32,
            max_n,
            batch_time: Duration::from_millis(40),
            repeats: 5,
        }
    }
}

/// Doubling grid from `min_n` to `max_n`.
pub fn grid(min_n: usize, max_n: usize) -> Vec<usize> {
    std::iter::successors(Some(min_n.max(2)), |&n| Some(n * 2))
        .take_while(|&n| n <= max_n)
        .collect()
}

/// Fastest per-call time over `repeats` batches, each at least `batch_time`.
fn time_call(cfg: &BenchConfig, mut f: impl FnMut()) -> f64 {
    f();
    let mut reps = 1u64;
    loop {
        let t = Instant::now();
        for _ in 0..reps {
            f();
        }
        if t.elapsed() >= cfg.batch_time / 4 || reps > 1 << 30 {
            break;
        }
        reps *= 2;
    }
    let reps = (reps * 4).max(1);
    let mut best = f64::INFINITY;
    for _ in 0..cfg.repeats {
        let t = Instant::now();
        for _ in 0..reps {
            f();
        }
        best = best.min(t.elapsed().as_nanos() as f64 / reps as f64);
    }
    best
}

pub fn time_stage(kind: AnsatzKind, n: usize, cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> f64 {
    let mut draw =
        |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
    match kind {
        AnsatzKind::PairPrime => {
            let b = draw(n);
            time_call(cfg, || {
                black_box(psi_pair_prime(black_box(&b)));
            })
        }
        AnsatzKind::PairDouble => {
            let (a, b) = (draw(n), draw(n));
            time_call(cfg, || {
                black_box(psi_pair_double(black_box(&a), black_box(&b)));
            })
        }
        AnsatzKind::Fermi => {
            let m = draw(n * n);
            time_call(cfg, || {
                black_box(psi_fermi(black_box(&m), n));
            })
        }
        other => panic!("no standalone antisymmetrization stage for {other}"),
    }
}

pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(n, t)| (a + n.ln(), b + t.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (mut num, mut den) = (0.0, 0.0);
    for &(n, t) in points {
        num += (n.ln() - mx) * (t.ln() - my);
        den += (n.ln() - mx) * (n.ln() - mx);
    }
    num / den
}

pub fn run(cfg: &BenchConfig, seed: u64) -> BenchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = grid(cfg.min_n, cfg.max_n);
    let mut timings = Vec::new();
    let mut slopes = Vec::new();
    for kind in BENCH_KINDS {
        let mut pts = Vec::new();
        for &n in &ns {
            let t = time_stage(kind, n, cfg, &mut rng);
            timings.push(Timing {
                n,
                kind,
                ns_per_eval: t,
            });
            pts.push((n as f64, t));
        }
        slopes.push((kind, loglog_slope(&pts)));
    }
    BenchReport { timings, slopes }
}

impl BenchReport {
    pub fn slope(&self, kind: AnsatzKind) -> Option<f64> {
        self.slopes
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, s)| *s)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for t in &self.timings {
            writeln!(w, "{},{},{:.1}", t.n, t.kind, t.ns_per_eval)?;
        }
        Ok(())
    }
}

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Design, Dgp, ExperimentConfig, Task};
use crate::error::Result;
use crate::linalg::Dataset;

/// Generator for the stream identified by `(seed, task, sub, rep)`.
///
/// The key is written straight into the ChaCha seed, so streams are
/// independent of each other and of how many replications are run.
/// `sub = 0` is the data stream of a replication; other values separate
/// partitions and bootstrap draws.
pub fn keyed_rng(seed: u64, task: Task, sub: u32, rep: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = task.id();
    key[12..16].copy_from_slice(&sub.to_le_bytes());
    key[16..24].copy_from_slice(&rep.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// `β*` for a task. Sparse designs put `s` entries of size `signal` at
/// coordinates `1..=s` for the testing tasks (coordinate 0 carries
/// `tested`) and at `0..s` otherwise; `estimate-ld` uses `±signal/√d`.
pub fn beta_star(cfg: &ExperimentConfig, d: usize, tested: f64) -> Array1<f64> {
    let mut beta = Array1::zeros(d);
    match cfg.task {
        Task::NullTest | Task::PowerTest => {
            beta[0] = tested;
            for j in 1..=cfg.s {
                beta[j] = cfg.signal;
            }
        }
        Task::EstimateHd | Task::Refit => {
            for j in 0..cfg.s {
                beta[j] = cfg.signal;
            }
        }
        Task::EstimateLd => {
            let m = cfg.signal / (d as f64).sqrt();
            for j in 0..d {
                beta[j] = if j < d / 2 { m } else { -m };
            }
        }
    }
    beta
}

fn design(cfg: &ExperimentConfig, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng));
    if cfg.design == Design::Toeplitz {
        let rho = cfg.rho;
        let c = (1.0 - rho * rho).sqrt();
        for mut row in x.rows_mut() {
            for j in 1..d {
                row[j] = rho * row[j - 1] + c * row[j];
            }
        }
    }
    x
}

/// Dataset of replication `rep` at sample size `n`, dimension `d` and
/// tested-coordinate value `tested`. The design and noise depend only on
/// `(seed, task, n, rep)`, so every `k` and every tested signal sees the
/// same draws.
pub(crate) fn generate_at(cfg: &ExperimentConfig, n: usize, d: usize, rep: u64, tested: f64) -> Result<(Dataset<f64>, Array1<f64>)> {
    let sub = if cfg.task == Task::EstimateLd { n as u32 } else { 0 };
    let mut rng = keyed_rng(cfg.seed, cfg.task, sub, rep);
    let x = design(cfg, n, d, &mut rng);
    let beta = beta_star(cfg, d, tested);
    let eta = x.dot(&beta);
    let y = match cfg.dgp {
        Dgp::LinearGaussian => {
            let e: Array1<f64> = (0..n).map(|_| cfg.sigma_eps * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            eta + e
        }
        Dgp::Logistic => eta.mapv(|t| if rng.random::<f64>() < 1.0 / (1.0 + (-t).exp()) { 1.0 } else { 0.0 }),
    };
    Ok((Dataset::new(x, y, cfg.family())?, beta))
}

/// Dataset and `β*` for replication `rep`, at the first grid point
/// (first tested signal, first sample size) where the task has a grid.
pub fn generate(cfg: &ExperimentConfig, rep: u64) -> Result<(Dataset<f64>, Array1<f64>)> {
    let tested = match cfg.task {
        Task::PowerTest => cfg.signals.first().copied().unwrap_or(0.0),
        _ => 0.0,
    };
    let (n, d) = match cfg.task {
        Task::EstimateLd => {
            let (n, d, _) = resolve_ld_grid(cfg)?.into_iter().next().expect("validated nonempty grid");
            (n, d)
        }
        _ => (cfg.n, cfg.d),
    };
    generate_at(cfg, n, d, rep, tested)
}

/// Divisor of `n` nearest to `target`, ties going to the larger one.
fn nearest_divisor(n: usize, target: usize) -> usize {
    (1..=n)
        .filter(|&k| n.is_multiple_of(k))
        .min_by_key(|&k| (k.abs_diff(target), usize::MAX - k))
        .unwrap_or(1)
}

/// `(n, d, ks)` for each grid point of `estimate-ld`.
pub fn resolve_ld_grid(cfg: &ExperimentConfig) -> Result<Vec<(usize, usize, Vec<usize>)>> {
    Ok(cfg
        .n_list
        .iter()
        .map(|&n| {
            let d = match cfg.d_sqrt_scale {
                Some(c) => (c * (n as f64).sqrt()).floor() as usize,
                None => cfg.d,
            };
            let ks = match cfg.k_exponent {
                Some(e) => vec![nearest_divisor(n, (n as f64).powf(e).ceil() as usize)],
                None => cfg.k_list.clone(),
            };
            (n, d, ks)
        })
        .collect())
}

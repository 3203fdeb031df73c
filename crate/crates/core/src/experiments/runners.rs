use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rand::RngCore;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Task};
use super::dgp::{generate_at, keyed_rng, resolve_ld_grid};
use super::metrics::MetricsRow;
use crate::dc::{average_glm, average_ols, critical_value, normal_p_value, refit};
use crate::error::{Error, Result};
use crate::linalg::{inverse, Dataset, Family, Partition};
use crate::pipeline::{estimate, fit_shards, test_coordinate, ShardedFits};

fn l2(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn linf(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn base_row(cfg: &ExperimentConfig, method: &str, n: usize, d: usize, k: usize, rep: u64, signal: f64) -> MetricsRow {
    MetricsRow {
        task: cfg.task.name().to_string(),
        method: method.to_string(),
        n,
        d,
        k,
        rep,
        signal,
        ..Default::default()
    }
}

fn partition_for(cfg: &ExperimentConfig, n: usize, k: usize, rep: u64) -> Result<Partition> {
    let seed = keyed_rng(cfg.seed, cfg.task, k as u32, rep).next_u64();
    Partition::new(n, k, seed)
}

fn bootstrap_seed(cfg: &ExperimentConfig, k: usize, rep: u64) -> u64 {
    keyed_rng(cfg.seed, cfg.task, (1 << 31) | k as u32, rep).next_u64()
}

fn fit_flag(sf: &ShardedFits<f64>) -> String {
    if sf.fits.iter().all(|f| f.converged) {
        String::new()
    } else {
        "shard-non-convergence".into()
    }
}

/// Least squares or maximum likelihood on `cols` of the full sample.
fn oracle_fit(ds: &Dataset<f64>, cols: &[usize]) -> Result<Array1<f64>> {
    let sub = ds.select_columns(cols);
    let coef = match ds.family() {
        Family::GaussianLinear => average_ols(&[sub])?,
        Family::Logistic => average_glm(&[sub], &Default::default())?,
    };
    let mut full = Array1::zeros(ds.d());
    for (&j, &c) in cols.iter().zip(coef.iter()) {
        full[j] = c;
    }
    Ok(full)
}

/// Full-sample OLS on the true support plus coordinate 0, with the usual
/// variance estimate, tested against zero at coordinate 0.
fn oracle_ols_statistic(ds: &Dataset<f64>, beta: &Array1<f64>) -> Result<f64> {
    let mut cols = vec![0];
    cols.extend((1..ds.d()).filter(|&j| beta[j] != 0.0));
    let sub = ds.select_columns(&cols);
    let coef = average_ols(std::slice::from_ref(&sub))?;
    let x = sub.x();
    let r = &sub.y() - &x.dot(&coef);
    let dof = sub.n().checked_sub(cols.len()).filter(|&v| v > 0).ok_or(Error::SingularDesign { shard: 0 })?;
    let sigma2 = r.dot(&r) / dof as f64;
    let inv = inverse(x.t().dot(&x).view())?;
    Ok(coef[0] / (sigma2 * inv[[0, 0]]).sqrt())
}

fn test_rows(cfg: &ExperimentConfig, rep: u64, tested: f64) -> Vec<MetricsRow> {
    let (n, d) = (cfg.n, cfg.d);
    let inf = cfg.inference();
    let methods = cfg.methods();
    let mut rows = Vec::new();
    let data = generate_at(cfg, n, d, rep, tested);
    let oracle = data.as_ref().map_err(|e| e.kind()).and_then(|(ds, beta)| {
        if cfg.family() == Family::GaussianLinear {
            oracle_ols_statistic(ds, beta).map_err(|e| e.kind())
        } else {
            Err("not-applicable")
        }
    });
    for &k in &cfg.k_list {
        let t0 = Instant::now();
        let sf = data
            .as_ref()
            .map_err(|e| e.kind().to_string())
            .and_then(|(ds, _)| {
                let p = partition_for(cfg, n, k, rep).map_err(|e| e.kind().to_string())?;
                fit_shards(ds, &p, &inf).map_err(|e| e.kind().to_string())
            });
        let fit_ms = ms(t0);
        for &m in &methods {
            let mut row = base_row(cfg, m.name(), n, d, k, rep, tested);
            row.coordinate = Some(0);
            let t = Instant::now();
            match &sf {
                Ok(sf) => match test_coordinate(sf, 0, 0.0, m, &inf) {
                    Ok(r) => {
                        let r = r.with_level(cfg.alpha);
                        row.statistic = Some(r.statistic);
                        row.p_value = Some(r.p_value);
                        row.reject = Some(r.rejects(cfg.alpha));
                        row.flag = fit_flag(sf);
                    }
                    Err(e) => row.flag = e.kind().to_string(),
                },
                Err(kind) => row.flag = kind.clone(),
            }
            row.runtime_ms = fit_ms + ms(t);
            rows.push(row);
        }
        if let Ok(z) = oracle {
            let mut row = base_row(cfg, "oracle-ols", n, d, k, rep, tested);
            row.coordinate = Some(0);
            row.statistic = Some(z);
            row.p_value = Some(normal_p_value(z));
            row.reject = Some(z.abs() > critical_value(cfg.alpha));
            rows.push(row);
        }
    }
    rows
}

fn over_reps<F>(cfg: &ExperimentConfig, f: F) -> Vec<MetricsRow>
where
    F: Fn(u64) -> Vec<MetricsRow> + Send + Sync,
{
    (0..cfg.n_reps as u64).into_par_iter().map(f).collect::<Vec<_>>().concat()
}

fn check_task(cfg: &ExperimentConfig, task: Task) -> Result<()> {
    cfg.validate()?;
    if cfg.task != task {
        return Err(Error::InvalidConfig(format!("expected task {}, got {}", task.name(), cfg.task.name())));
    }
    Ok(())
}

/// Level study: coordinate 0 has `β* = 0`; one row per rep, `k` and method.
pub fn run_null_test(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    check_task(cfg, Task::NullTest)?;
    Ok(over_reps(cfg, |rep| test_rows(cfg, rep, 0.0)))
}

/// Power study over the tested-coordinate values in `signals`.
pub fn run_power_test(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    check_task(cfg, Task::PowerTest)?;
    Ok(over_reps(cfg, |rep| cfg.signals.iter().flat_map(|&t| test_rows(cfg, rep, t)).collect()))
}

/// High-dimensional estimation: thresholded DC estimate, naive average of
/// shard LASSO fits and full-sample LASSO. `err_dc_gap` holds
/// `‖T_ν(β̄ᵈ) − T_ν(β̂ᵈ)‖₂` against the `k = 1` estimate.
pub fn run_estimate_hd(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    check_task(cfg, Task::EstimateHd)?;
    let inf = cfg.inference();
    let (n, d) = (cfg.n, cfg.d);
    Ok(over_reps(cfg, |rep| {
        let mut rows = Vec::new();
        let (ds, beta) = match generate_at(cfg, n, d, rep, 0.0) {
            Ok(v) => v,
            Err(e) => {
                for &k in &cfg.k_list {
                    let mut row = base_row(cfg, "dc-threshold", n, d, k, rep, cfg.signal);
                    row.flag = e.kind().into();
                    rows.push(row);
                }
                return rows;
            }
        };
        let run_k = |k: usize| -> Result<(ShardedFits<f64>, Array1<f64>, f64)> {
            let t = Instant::now();
            let sf = fit_shards(&ds, &partition_for(cfg, n, k, rep)?, &inf)?;
            let est = estimate(&sf, &inf, bootstrap_seed(cfg, k, rep))?;
            Ok((sf, est.thresholded_full(d), ms(t)))
        };
        let full = run_k(1);
        for &k in &cfg.k_list {
            let res = if k == 1 {
                full.as_ref().map(|v| v.clone()).map_err(|e| Error::Data(e.kind().into()))
            } else {
                run_k(k)
            };
            let mut dc = base_row(cfg, "dc-threshold", n, d, k, rep, cfg.signal);
            let mut naive = base_row(cfg, "naive-lasso", n, d, k, rep, cfg.signal);
            let mut lasso = base_row(cfg, "lasso-full", n, d, k, rep, cfg.signal);
            match (&res, &full) {
                (Ok((sf, t_bar, elapsed)), Ok((sf1, t_full, _))) => {
                    dc.err_l2 = Some(l2(t_bar.view(), beta.view()));
                    dc.err_linf = Some(linf(t_bar.view(), beta.view()));
                    dc.err_dc_gap = Some(l2(t_bar.view(), t_full.view()));
                    dc.runtime_ms = *elapsed;
                    dc.flag = fit_flag(sf);
                    let avg = sf.mean_penalized();
                    naive.err_l2 = Some(l2(avg.view(), beta.view()));
                    naive.err_linf = Some(linf(avg.view(), beta.view()));
                    let b1 = &sf1.fits[0].beta;
                    lasso.err_l2 = Some(l2(b1.view(), beta.view()));
                    lasso.err_linf = Some(linf(b1.view(), beta.view()));
                }
                (Err(e), _) | (_, Err(e)) => {
                    for r in [&mut dc, &mut naive, &mut lasso] {
                        r.flag = match e {
                            Error::Data(kind) if k == 1 => kind.clone(),
                            other => other.kind().into(),
                        };
                    }
                }
            }
            rows.extend([dc, naive, lasso]);
        }
        rows
    }))
}

/// Low-dimensional averaging. Per grid point and rep: a `full` row
/// (`k = 1`, error of the full-sample estimate) and an `average` row per
/// `k` with `err_dc_gap = ‖β̄ − β̂‖₂`.
pub fn run_estimate_ld(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    check_task(cfg, Task::EstimateLd)?;
    let grid = resolve_ld_grid(cfg)?;
    let settings = cfg.inference().settings;
    let fit = |shards: &[Dataset<f64>]| match cfg.family() {
        Family::GaussianLinear => average_ols(shards),
        Family::Logistic => average_glm(shards, &settings),
    };
    let mut rows = Vec::new();
    for (n, d, ks) in grid {
        rows.extend(over_reps(cfg, |rep| {
            let mut out = Vec::new();
            let mut full_row = base_row(cfg, "full", n, d, 1, rep, cfg.signal);
            let t = Instant::now();
            let data = generate_at(cfg, n, d, rep, 0.0);
            let full = data.as_ref().map_err(|e| e.kind()).and_then(|(ds, _)| fit(std::slice::from_ref(ds)).map_err(|e| e.kind()));
            full_row.runtime_ms = ms(t);
            match (&data, &full) {
                (Ok((_, beta)), Ok(bh)) => {
                    full_row.err_l2 = Some(l2(bh.view(), beta.view()));
                    full_row.err_linf = Some(linf(bh.view(), beta.view()));
                }
                (_, Err(kind)) => full_row.flag = kind.to_string(),
                (Err(e), _) => full_row.flag = e.kind().into(),
            }
            out.push(full_row);
            for &k in &ks {
                let mut row = base_row(cfg, "average", n, d, k, rep, cfg.signal);
                let t = Instant::now();
                let res = data.as_ref().map_err(|e| e.kind()).and_then(|(ds, beta)| {
                    let p = partition_for(cfg, n, k, rep).map_err(|e| e.kind())?;
                    let shards = p.split(ds).map_err(|e| e.kind())?;
                    let avg = fit(&shards).map_err(|e| e.kind())?;
                    Ok((avg, beta))
                });
                row.runtime_ms = ms(t);
                match (res, &full) {
                    (Ok((avg, beta)), Ok(bh)) => {
                        row.err_l2 = Some(l2(avg.view(), beta.view()));
                        row.err_linf = Some(linf(avg.view(), beta.view()));
                        row.err_dc_gap = Some(l2(avg.view(), bh.view()));
                    }
                    (Err(kind), _) => row.flag = kind.into(),
                    (_, Err(kind)) => row.flag = kind.to_string(),
                }
                out.push(row);
            }
            out
        }));
    }
    Ok(rows)
}

/// Refitting on the thresholded support. Per rep: an `oracle` row
/// (full-sample fit on the true support) and, per `k`, a `dc-threshold` row
/// and a `refit` row with `err_dc_gap = ‖β̄ʳ − β̂ᵒ‖₂`. The refit support is
/// [`crate::dc::DcEstimate::refit_support`]. Refit rows whose
/// support differs from the truth carry the flag `support-mismatch`.
pub fn run_refit(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    check_task(cfg, Task::Refit)?;
    let inf = cfg.inference();
    let (n, d) = (cfg.n, cfg.d);
    Ok(over_reps(cfg, |rep| {
        let mut rows = Vec::new();
        let data = generate_at(cfg, n, d, rep, 0.0);
        let mut oracle_row = base_row(cfg, "oracle", n, d, 1, rep, cfg.signal);
        let oracle = data.as_ref().map_err(|e| e.kind()).and_then(|(ds, beta)| {
            let truth: Vec<usize> = (0..d).filter(|&j| beta[j] != 0.0).collect();
            oracle_fit(ds, &truth).map_err(|e| e.kind())
        });
        match (&data, &oracle) {
            (Ok((_, beta)), Ok(bo)) => {
                oracle_row.err_l2 = Some(l2(bo.view(), beta.view()));
                oracle_row.err_linf = Some(linf(bo.view(), beta.view()));
            }
            (_, Err(kind)) => oracle_row.flag = kind.to_string(),
            (Err(e), _) => oracle_row.flag = e.kind().into(),
        }
        rows.push(oracle_row);
        for &k in &cfg.k_list {
            let mut dc = base_row(cfg, "dc-threshold", n, d, k, rep, cfg.signal);
            let mut rf = base_row(cfg, "refit", n, d, k, rep, cfg.signal);
            let t = Instant::now();
            let res = data.as_ref().map_err(|e| e.kind()).and_then(|(ds, beta)| {
                let p = partition_for(cfg, n, k, rep).map_err(|e| e.kind())?;
                let sf = fit_shards(ds, &p, &inf).map_err(|e| e.kind())?;
                let est = estimate(&sf, &inf, bootstrap_seed(cfg, k, rep)).map_err(|e| e.kind())?;
                let support = est.refit_support();
                let r = refit(ds, &p, &support, &inf.settings).map_err(|e| e.kind())?;
                let truth: Vec<usize> = (0..d).filter(|&j| beta[j] != 0.0).collect();
                Ok((est.thresholded_full(d), r, support == truth, beta))
            });
            let elapsed = ms(t);
            match (res, &oracle) {
                (Ok((t_bar, r, exact, beta)), Ok(bo)) => {
                    dc.err_l2 = Some(l2(t_bar.view(), beta.view()));
                    dc.err_linf = Some(linf(t_bar.view(), beta.view()));
                    rf.err_l2 = Some(l2(r.beta.view(), beta.view()));
                    rf.err_linf = Some(linf(r.beta.view(), beta.view()));
                    rf.err_dc_gap = Some(l2(r.beta.view(), bo.view()));
                    if r.empty_support {
                        rf.flag = "empty-support".into();
                    } else if !exact {
                        rf.flag = "support-mismatch".into();
                    }
                }
                (Err(kind), _) | (_, &Err(kind)) => {
                    dc.flag = kind.into();
                    rf.flag = kind.into();
                }
            }
            dc.runtime_ms = elapsed;
            rf.runtime_ms = elapsed;
            rows.extend([dc, rf]);
        }
        rows
    }))
}

/// Runs the task named in `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    match cfg.task {
        Task::NullTest => run_null_test(cfg),
        Task::PowerTest => run_power_test(cfg),
        Task::EstimateHd => run_estimate_hd(cfg),
        Task::EstimateLd => run_estimate_ld(cfg),
        Task::Refit => run_refit(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            "task = \"{task}\"\nn = 60\nd = 20\ns = 2\nk_list = [1, 2, 3]\nn_reps = 3\nseed = 9\n{extra}"
        ))
        .unwrap()
    }

    fn strip_runtime(mut rows: Vec<MetricsRow>) -> Vec<MetricsRow> {
        for r in &mut rows {
            r.runtime_ms = 0.0;
        }
        rows
    }

    #[test]
    fn null_rows_are_counted_and_consistent() {
        let cfg = small("null-test", "");
        let rows = run(&cfg).unwrap();
        // three constructions plus the oracle comparator
        assert_eq!(rows.len(), 3 * 3 * 4);
        for r in rows.iter().filter(|r| r.flag.is_empty()) {
            let p = r.p_value.unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert_eq!(r.reject.unwrap(), p < cfg.alpha, "{r:?}");
        }
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let cfg = small("power-test", "signals = [0.5]");
        let a = strip_runtime(run(&cfg).unwrap());
        assert_eq!(a, strip_runtime(run(&cfg).unwrap()));
        let mut more = cfg.clone();
        more.n_reps = 4;
        let b = strip_runtime(run(&more).unwrap());
        assert_eq!(&b[..a.len()], &a[..]);
    }

    #[test]
    fn estimation_tasks_run() {
        let hd = run(&small("estimate-hd", "signal = 5.0\nthreshold = \"fixed\"")).unwrap();
        assert_eq!(hd.len(), 3 * 3 * 3);
        assert!(hd.iter().all(|r| r.err_l2.unwrap() >= 0.0));
        let k1 = hd.iter().find(|r| r.method == "dc-threshold" && r.k == 1).unwrap();
        assert_eq!(k1.err_dc_gap, Some(0.0));

        let rf = run(&small("refit", "signal = 5.0")).unwrap();
        assert_eq!(rf.len(), 3 * (1 + 2 * 3));

        let ld = run(&ExperimentConfig::from_toml_str(
            "task = \"estimate-ld\"\nn_list = [256, 512]\nd_sqrt_scale = 0.5\nk_exponent = 0.25\nsignal = 10.0\nn_reps = 2\n",
        )
        .unwrap())
        .unwrap();
        assert_eq!(ld.len(), 2 * 2 * 2);
        assert!(ld.iter().all(|r| r.flag.is_empty()));
    }

    #[test]
    fn wrong_task_is_config_error() {
        assert!(run_null_test(&small("refit", "")).unwrap_err().is_config());
    }
}

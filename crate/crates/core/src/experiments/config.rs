use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dc::TestMethod;
use crate::error::{Error, Result};
use crate::linalg::Family;
use crate::pipeline::{InferenceConfig, ThresholdRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    NullTest,
    PowerTest,
    EstimateHd,
    EstimateLd,
    Refit,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::NullTest => "null-test",
            Task::PowerTest => "power-test",
            Task::EstimateHd => "estimate-hd",
            Task::EstimateLd => "estimate-ld",
            Task::Refit => "refit",
        }
    }

    pub(crate) fn id(self) -> u8 {
        match self {
            Task::NullTest => 1,
            Task::PowerTest => 2,
            Task::EstimateHd => 3,
            Task::EstimateLd => 4,
            Task::Refit => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dgp {
    #[default]
    LinearGaussian,
    Logistic,
}

impl Dgp {
    pub fn family(self) -> Family {
        match self {
            Dgp::LinearGaussian => Family::GaussianLinear,
            Dgp::Logistic => Family::Logistic,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    #[default]
    Iid,
    /// `Σ_ij = ρ^|i−j|`.
    Toeplitz,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdChoice {
    #[default]
    Bootstrap,
    Fixed,
}

fn one() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.05
}

fn default_draws() -> usize {
    500
}

fn default_rho() -> f64 {
    0.5
}

/// One simulation study, read from a flat TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub dgp: Dgp,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub d: usize,
    #[serde(default)]
    pub s: usize,
    /// Magnitude of the nonzero coefficients (for `estimate-ld`, `‖β*‖₂`).
    #[serde(default = "one")]
    pub signal: f64,
    /// Values of `β*` at the tested coordinate (`power-test`).
    #[serde(default)]
    pub signals: Vec<f64>,
    #[serde(default = "one")]
    pub sigma_eps: f64,
    #[serde(default)]
    pub k_list: Vec<usize>,
    pub n_reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `c` in `λ = c √(k log d / n)`; defaults depend on the family.
    #[serde(default)]
    pub lambda_scale: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub design: Design,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub methods: Vec<TestMethod>,
    #[serde(default)]
    pub threshold: ThresholdChoice,
    /// `c₀` in `ν = c₀ √(log d / n)` when `threshold = "fixed"`.
    #[serde(default = "one")]
    pub threshold_c0: f64,
    #[serde(default = "default_draws")]
    pub bootstrap_draws: usize,
    /// Sample sizes for `estimate-ld`.
    #[serde(default)]
    pub n_list: Vec<usize>,
    /// `estimate-ld`: `d = ⌊c √n⌋` when set, otherwise `d` is fixed.
    #[serde(default)]
    pub d_sqrt_scale: Option<f64>,
    /// `estimate-ld`: `k` is the divisor of `n` nearest `⌈n^e⌉` when set,
    /// otherwise every entry of `k_list`.
    #[serde(default)]
    pub k_exponent: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn family(&self) -> Family {
        self.dgp.family()
    }

    /// Test constructions to run; all applicable ones when unset.
    pub fn methods(&self) -> Vec<TestMethod> {
        if !self.methods.is_empty() {
            return self.methods.clone();
        }
        match self.dgp {
            Dgp::LinearGaussian => vec![TestMethod::WaldLinear, TestMethod::WaldGlm, TestMethod::Score],
            Dgp::Logistic => vec![TestMethod::WaldGlm, TestMethod::Score],
        }
    }

    pub fn inference(&self) -> InferenceConfig {
        let mut cfg = InferenceConfig::for_family(self.family());
        if let Some(c) = self.lambda_scale {
            cfg.lambda_scale = c;
        }
        cfg.threshold = match self.threshold {
            ThresholdChoice::Bootstrap => ThresholdRule::Bootstrap {
                alpha: self.alpha,
                n_draws: self.bootstrap_draws,
            },
            ThresholdChoice::Fixed => ThresholdRule::Fixed { c0: self.threshold_c0 },
        };
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.n_reps == 0 {
            return bad("n_reps must be at least 1".into());
        }
        if !(self.sigma_eps > 0.0) || !self.signal.is_finite() || self.signals.iter().any(|s| !s.is_finite()) {
            return bad("sigma_eps must be positive and signals finite".into());
        }
        if self.design == Design::Toeplitz && !(self.rho.abs() < 1.0) {
            return bad(format!("Toeplitz correlation must satisfy |rho| < 1, got {}", self.rho));
        }
        if let Some(c) = self.lambda_scale {
            if !(c > 0.0) {
                return bad(format!("lambda_scale must be positive, got {c}"));
            }
        }
        if self.dgp == Dgp::Logistic && self.methods.contains(&TestMethod::WaldLinear) {
            return bad("wald-linear needs the linear-gaussian model".into());
        }
        if self.task == Task::PowerTest && self.signals.is_empty() {
            return bad("power-test needs a nonempty `signals` list".into());
        }
        if self.task == Task::EstimateLd {
            if self.n_list.is_empty() {
                return bad("estimate-ld needs `n_list`".into());
            }
            if self.k_exponent.is_none() && self.k_list.is_empty() {
                return bad("estimate-ld needs `k_list` or `k_exponent`".into());
            }
            for (n, d, ks) in super::dgp::resolve_ld_grid(self)? {
                if d == 0 {
                    return bad(format!("dimension is zero at n = {n}"));
                }
                check_ks(n, &ks)?;
            }
            return Ok(());
        }
        if self.n == 0 || self.d == 0 {
            return bad("n and d must be positive".into());
        }
        let tested = usize::from(matches!(self.task, Task::NullTest | Task::PowerTest));
        if self.s + tested > self.d {
            return bad(format!("s = {} does not fit in d = {}", self.s, self.d));
        }
        if self.k_list.is_empty() {
            return bad("k_list is empty".into());
        }
        check_ks(self.n, &self.k_list)?;
        self.inference().validate()
    }
}

fn check_ks(n: usize, ks: &[usize]) -> Result<()> {
    for &k in ks {
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::InvalidConfig(format!("k = {k} does not divide n = {n}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const NULL: &str = r#"
task = "null-test"
n = 840
d = 850
s = 3
k_list = [1, 5, 10, 20, 30]
n_reps = 250
seed = 11
"#;

    #[test]
    fn parses_flat_file() {
        let cfg = ExperimentConfig::from_toml_str(NULL).unwrap();
        assert_eq!(cfg.task, Task::NullTest);
        assert_eq!(cfg.dgp, Dgp::LinearGaussian);
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.methods().len(), 3);
        assert_eq!(cfg.inference().lambda_scale, 0.75);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_invalid() {
        let base = "task = \"null-test\"\nn = 840\nd = 850\n";
        for extra in [
            "s = 3\nk_list = [1, 11]\nn_reps = 1",
            "s = 3\nk_list = [1]\nn_reps = 1\nalpha = 1.5",
            "s = 3\nk_list = [1]\nn_reps = 0",
            "s = 900\nk_list = [1]\nn_reps = 1",
            "s = 3\nk_list = [1]\nn_reps = 1\nunknown_key = 3",
            "s = 3\nk_list = [1]\nn_reps = 1\ndgp = \"logistic\"\nmethods = [\"wald-linear\"]",
        ] {
            let text = format!("{base}{extra}\n");
            assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::InvalidConfig(_))), "{extra}");
        }
    }
}

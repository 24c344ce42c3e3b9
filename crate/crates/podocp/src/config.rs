//! Run configuration: one TOML file drives the offline, online, and
//! validation phases.
//!
//! Optional keys default to the documented benchmark settings; [`RunConfig::resolved`]
//! fills every default in so the copy written next to the artifacts records
//! the complete experiment (including constants like the viscosity, control
//! penalties, POD tolerance, time-step count, and seeds).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::{ParamBox, ProblemConfig, ProblemId};
use crate::pod::PodConfig;

fn default_h() -> f64 {
    0.3
}
fn default_t_final() -> f64 {
    1.0
}
fn default_n_train() -> usize {
    70
}
fn default_eps_tol() -> f64 {
    1e-4
}
fn default_n_max() -> usize {
    35
}
fn default_min_rel_eig() -> f64 {
    1e-13
}
fn default_alpha() -> f64 {
    1e-3
}
fn default_alpha_grad() -> f64 {
    1e-4
}
fn default_eta() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_newton_tol() -> f64 {
    1e-9
}
fn default_newton_max_iter() -> usize {
    25
}
fn default_seed_train() -> u64 {
    7
}
fn default_seed_test() -> u64 {
    7777
}
fn default_test_size() -> usize {
    50
}

/// Complete description of one experiment.  See the module docs; unknown
/// keys are rejected so typos cannot silently fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `stokes_td` or `ns_steady`.
    pub problem: String,
    /// Target mesh width of the bifurcation template.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Implicit Euler steps (unsteady problem only; the steady problem has
    /// exactly one time node).
    #[serde(default)]
    pub nt: Option<usize>,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Parameter box; both bounds or neither.
    #[serde(default)]
    pub param_lo: Option<Vec<f64>>,
    #[serde(default)]
    pub param_hi: Option<Vec<f64>>,
    /// Training set size.
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    /// POD energy tolerance (relative eigenvalue tail).
    #[serde(default = "default_eps_tol")]
    pub eps_tol: f64,
    /// Cap on retained modes per variable.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Relative eigenvalue floor below which directions are discarded.
    #[serde(default = "default_min_rel_eig")]
    pub min_rel_eig: f64,
    /// Control penalty (trace mass part).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Control penalty (tangential gradient part).
    #[serde(default = "default_alpha_grad")]
    pub alpha_grad: f64,
    /// Viscosity of the steady convective problem.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Start the unsteady problem from rest instead of the lifted profile.
    #[serde(default = "default_true")]
    pub zero_initial_state: bool,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    /// Seed for the training parameter sample.
    #[serde(default = "default_seed_train")]
    pub seed_train: u64,
    /// Seed for the validation parameter sample (kept different from
    /// `seed_train` so the test set is disjoint from the training set).
    #[serde(default = "default_seed_test")]
    pub seed_test: u64,
    /// Validation test-set size.
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Basis sizes swept by the validation phase (default: five equal steps
    /// up to `n_max`).
    #[serde(default)]
    pub n_list: Option<Vec<usize>>,
    /// Output root; the CLI creates one timestamped directory per command
    /// below it.  Overridden by `--out` and the `PODOCP_OUT` variable.
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Persisted artifact paths, written by the offline phase and read by
    /// `online`/`validate` when no explicit path is given.
    #[serde(default)]
    pub snapshots_path: Option<String>,
    #[serde(default)]
    pub basis_path: Option<String>,
    #[serde(default)]
    pub model_path: Option<String>,
}

impl RunConfig {
    /// Baseline configuration for one problem (the documented benchmark
    /// settings).
    pub fn example(problem: ProblemId) -> Self {
        RunConfig {
            problem: problem.name().to_string(),
            h: default_h(),
            nt: None,
            t_final: default_t_final(),
            param_lo: None,
            param_hi: None,
            n_train: default_n_train(),
            eps_tol: default_eps_tol(),
            n_max: default_n_max(),
            min_rel_eig: default_min_rel_eig(),
            alpha: default_alpha(),
            alpha_grad: default_alpha_grad(),
            eta: default_eta(),
            zero_initial_state: true,
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            seed_train: default_seed_train(),
            seed_test: default_seed_test(),
            test_size: default_test_size(),
            n_list: None,
            out_dir: None,
            snapshots_path: None,
            basis_path: None,
            model_path: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        crate::io::write_text(path, &text)
    }

    pub fn problem_id(&self) -> Result<ProblemId> {
        match self.problem.as_str() {
            "stokes_td" => Ok(ProblemId::StokesTd),
            "ns_steady" => Ok(ProblemId::NsSteady),
            other => Err(Error::Config(format!(
                "unknown problem `{other}` (expected `stokes_td` or `ns_steady`)"
            ))),
        }
    }

    /// Range-check every numeric field before any solve starts.
    pub fn validate(&self) -> Result<()> {
        let problem = self.problem_id()?;
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.h.is_finite() && self.h > 0.0) {
            return fail(format!("mesh width h = {} must be positive", self.h));
        }
        if let Some(nt) = self.nt {
            if problem == ProblemId::NsSteady && nt != 1 {
                return fail("the steady problem has exactly one time node".into());
            }
            if nt == 0 {
                return fail("nt must be at least 1".into());
            }
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return fail(format!("t_final = {} must be positive", self.t_final));
        }
        match (&self.param_lo, &self.param_hi) {
            (None, None) => {}
            (Some(lo), Some(hi)) => {
                let pb = ParamBox {
                    lo: lo.clone(),
                    hi: hi.clone(),
                };
                pb.validate().map_err(|e| Error::Config(e.to_string()))?;
                if pb.dim() != problem.n_params() {
                    return fail(format!(
                        "parameter box has {} intervals, problem needs {}",
                        pb.dim(),
                        problem.n_params()
                    ));
                }
            }
            _ => return fail("param_lo and param_hi must be given together".into()),
        }
        if self.n_train == 0 {
            return fail("n_train must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.eps_tol) {
            return fail(format!("eps_tol = {} must lie in [0, 1)", self.eps_tol));
        }
        if self.n_max == 0 {
            return fail("n_max must be at least 1".into());
        }
        if !(self.min_rel_eig >= 0.0 && self.min_rel_eig < 1.0) {
            return fail(format!(
                "min_rel_eig = {} must lie in [0, 1)",
                self.min_rel_eig
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) || !(self.alpha_grad >= 0.0) {
            return fail("control penalties must be positive".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return fail(format!("viscosity eta = {} must be positive", self.eta));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return fail("Newton controls must be positive".into());
        }
        if self.test_size == 0 {
            return fail("test_size must be at least 1".into());
        }
        if let Some(list) = &self.n_list {
            if list.is_empty() {
                return fail("n_list must not be empty".into());
            }
            if list.iter().any(|&n| n == 0 || n > self.n_max) {
                return fail(format!("n_list entries must lie in [1, n_max = {}]", self.n_max));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return fail("n_list must be strictly increasing".into());
            }
        }
        Ok(())
    }

    /// Validate and fill every optional field, producing the config copy
    /// written into output directories.
    pub fn resolved(&self) -> Result<RunConfig> {
        self.validate()?;
        let problem = self.problem_id()?;
        let mut out = self.clone();
        out.nt = Some(self.nt.unwrap_or(match problem {
            ProblemId::StokesTd => 20,
            ProblemId::NsSteady => 1,
        }));
        let default_box = problem.default_box();
        if out.param_lo.is_none() {
            out.param_lo = Some(default_box.lo);
            out.param_hi = Some(default_box.hi);
        }
        if out.n_list.is_none() {
            // Five equal steps ending at n_max, e.g. n_max = 35 -> 15,20,25,30,35.
            let step = ((self.n_max as f64) / 7.0).round().max(1.0) as usize;
            let mut list: Vec<usize> = (0..5)
                .map(|i| self.n_max.saturating_sub(step * (4 - i)).max(1))
                .collect();
            list.dedup();
            out.n_list = Some(list);
        }
        if out.out_dir.is_none() {
            out.out_dir = Some("runs".to_string());
        }
        Ok(out)
    }

    /// Solver-facing view of the configuration.
    pub fn problem_config(&self) -> Result<ProblemConfig> {
        let resolved = self.resolved()?;
        let problem = resolved.problem_id()?;
        let mut cfg = ProblemConfig::new(problem);
        cfg.nt = resolved.nt.expect("resolved");
        cfg.t_final = resolved.t_final;
        cfg.alpha = resolved.alpha;
        cfg.alpha_grad = resolved.alpha_grad;
        cfg.eta = resolved.eta;
        cfg.zero_initial_state = resolved.zero_initial_state;
        cfg.newton_tol = resolved.newton_tol;
        cfg.newton_max_iter = resolved.newton_max_iter;
        cfg.param_box = ParamBox {
            lo: resolved.param_lo.expect("resolved"),
            hi: resolved.param_hi.expect("resolved"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Compression-facing view of the configuration.
    pub fn pod_config(&self) -> PodConfig {
        PodConfig {
            eps_tol: self.eps_tol,
            n_max: self.n_max,
            min_rel_eig: self.min_rel_eig,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_with_documented_defaults() {
        let cfg = RunConfig::from_toml_str("problem = \"stokes_td\"").unwrap();
        let resolved = cfg.resolved().unwrap();
        assert_eq!(resolved.nt, Some(20));
        assert_eq!(resolved.param_lo.as_deref(), Some(&[0.01, 1.0, 0.01][..]));
        assert_eq!(resolved.param_hi.as_deref(), Some(&[1.0, 2.0, 1.0][..]));
        assert_eq!(resolved.n_list.as_deref(), Some(&[15, 20, 25, 30, 35][..]));
        assert_eq!(resolved.n_train, 70);
        let pc = cfg.problem_config().unwrap();
        assert_eq!(pc.nt, 20);
        assert_eq!(pc.alpha, 1e-3);

        let ns = RunConfig::from_toml_str("problem = \"ns_steady\"").unwrap();
        assert_eq!(ns.resolved().unwrap().nt, Some(1));
    }

    #[test]
    fn toml_round_trip_preserves_resolved_values() {
        let mut cfg = RunConfig::example(ProblemId::NsSteady);
        cfg.n_train = 12;
        cfg.h = 0.4;
        let resolved = cfg.resolved().unwrap();
        let text = toml::to_string_pretty(&resolved).unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, resolved);
        // Constants a minimal config file omits appear explicitly in the resolved text.
        for key in ["eta", "alpha", "alpha_grad", "eps_tol", "seed_train", "seed_test"] {
            assert!(text.contains(key), "resolved config must record `{key}`");
        }
    }

    #[test]
    fn invalid_fields_are_rejected_before_any_solve() {
        let bad = [
            "problem = \"triangle\"",
            "problem = \"stokes_td\"\nh = 0.0",
            "problem = \"stokes_td\"\neps_tol = 1.5",
            "problem = \"stokes_td\"\nn_train = 0",
            "problem = \"ns_steady\"\nnt = 4",
            "problem = \"stokes_td\"\nparam_lo = [0.1, 1.0, 0.1]",
            "problem = \"stokes_td\"\nn_list = [10, 10]",
            "problem = \"stokes_td\"\nn_list = [10, 40]",
            "problem = \"stokes_td\"\nalpha = -1.0",
        ];
        for text in bad {
            let outcome = RunConfig::from_toml_str(text).and_then(|c| c.validate());
            assert!(outcome.is_err(), "config must be rejected: {text}");
        }
        // Unknown keys are typos, not extensions.
        assert!(RunConfig::from_toml_str("problem = \"stokes_td\"\nn_trian = 3").is_err());
    }

    #[test]
    fn n_list_default_scales_with_n_max() {
        let mut cfg = RunConfig::example(ProblemId::StokesTd);
        cfg.n_max = 7;
        let resolved = cfg.resolved().unwrap();
        let list = resolved.n_list.unwrap();
        assert!(!list.is_empty());
        assert!(list.iter().all(|&n| (1..=7).contains(&n)));
        assert!(list.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*list.last().unwrap(), 7);
    }
}

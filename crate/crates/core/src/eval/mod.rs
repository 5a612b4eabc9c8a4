//! Encoder and attack evaluation: the weighted-KNN training monitor, the
//! frozen-encoder linear probe (main accuracy), per-target attack success
//! rate, and the triggered-vs-reference cosine-similarity CDF.

mod knn;
mod metrics;
mod probe;

pub use knn::knn_eval;
pub use metrics::{attack_success_rate, cdf_median, cosine_cdf};
pub use probe::{fit_probe, linear_probe, LinearProbe};
pub(crate) use probe::labeled_features;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of both evaluators.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Full-batch gradient-descent iterations for the linear probe.
    pub probe_iters: usize,
    pub probe_lr: f64,
    /// L2 penalty on probe weights (biases exempt).
    pub l2_penalty: f64,
    /// Neighbor count for the KNN monitor, clamped to the bank size.
    pub knn_k: usize,
    /// Vote temperature: each neighbor contributes exp(sim / τ).
    pub knn_tau: f64,
    /// Feature-extraction chunk size.
    pub eval_batch: usize,
    /// Drop test images already labeled with the target class from the ASR
    /// denominator (default keeps them, the looser literal definition).
    pub asr_excludes_target_class: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            probe_iters: 500,
            probe_lr: 0.5,
            l2_penalty: 1e-4,
            knn_k: 200,
            knn_tau: 0.07,
            eval_batch: 64,
            asr_excludes_target_class: false,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probe_iters == 0 {
            return Err(Error::Config("probe_iters must be ≥ 1".to_string()));
        }
        if !self.probe_lr.is_finite() || self.probe_lr <= 0.0 {
            return Err(Error::Config(format!(
                "probe_lr {} must be finite and > 0",
                self.probe_lr
            )));
        }
        if !self.l2_penalty.is_finite() || self.l2_penalty < 0.0 {
            return Err(Error::Config(format!(
                "l2_penalty {} must be finite and ≥ 0",
                self.l2_penalty
            )));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be ≥ 1".to_string()));
        }
        if !self.knn_tau.is_finite() || self.knn_tau <= 0.0 {
            return Err(Error::Config(format!(
                "knn_tau {} must be finite and > 0",
                self.knn_tau
            )));
        }
        if self.eval_batch == 0 {
            return Err(Error::Config("eval_batch must be ≥ 1".to_string()));
        }
        Ok(())
    }
}

/// Final evaluation bundle for one backdoor target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: usize,
    /// Clean-test accuracy of the downstream probe.
    pub main_acc: f64,
    /// Fraction of trigger-embedded test images predicted as the target.
    pub asr: f64,
    /// Weighted-KNN monitor accuracy (shared across targets).
    pub knn_acc: f64,
    /// Empirical CDF of cos(reference, triggered probe features).
    pub cdf_triggered: Vec<(f64, f64)>,
    /// Same probe set without the trigger (the clean baseline curve).
    pub cdf_clean: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("main_acc", self.main_acc),
            ("asr", self.asr),
            ("knn_acc", self.knn_acc),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (name, cdf) in [
            ("triggered", &self.cdf_triggered),
            ("clean", &self.cdf_clean),
        ] {
            if cdf.windows(2).any(|w| w[1].1 < w[0].1 || w[1].0 < w[0].0) {
                return Err(Error::Config(format!("{name} cdf not nondecreasing")));
            }
            match cdf.last() {
                Some(&(_, f)) if (f - 1.0).abs() < 1e-12 => {}
                Some(&(_, f)) => {
                    return Err(Error::Config(format!("{name} cdf ends at {f}, not 1")))
                }
                None => return Err(Error::Config(format!("{name} cdf empty"))),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(ProbeConfig::default().validate().is_ok());
    }

    #[test]
    fn config_rejects_bad_values() {
        for bad in [
            ProbeConfig {
                probe_iters: 0,
                ..ProbeConfig::default()
            },
            ProbeConfig {
                probe_lr: 0.0,
                ..ProbeConfig::default()
            },
            ProbeConfig {
                knn_k: 0,
                ..ProbeConfig::default()
            },
            ProbeConfig {
                knn_tau: -0.1,
                ..ProbeConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn report_validation_checks_cdf_shape() {
        let good = EvalReport {
            task_id: 0,
            main_acc: 0.9,
            asr: 0.5,
            knn_acc: 0.8,
            cdf_triggered: vec![(0.1, 0.5), (0.9, 1.0)],
            cdf_clean: vec![(0.2, 1.0)],
        };
        assert!(good.validate().is_ok());

        let bad_order = EvalReport {
            cdf_triggered: vec![(0.9, 0.5), (0.1, 1.0)],
            ..good.clone()
        };
        assert!(bad_order.validate().is_err());

        let bad_end = EvalReport {
            cdf_clean: vec![(0.2, 0.7)],
            ..good.clone()
        };
        assert!(bad_end.validate().is_err());

        let bad_range = EvalReport {
            asr: 1.2,
            ..good
        };
        assert!(bad_range.validate().is_err());
    }
}

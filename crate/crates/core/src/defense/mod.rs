//! Server-side defensive aggregation.
//!
//! Two defenses sit behind one hook ([`apply_defense`]): FoolsGold, which
//! down-weights clients whose cumulative update histories stay mutually
//! similar, and Clip & Noise, which bounds every update's norm and perturbs
//! all of them with Gaussian noise. Both operate on [`ReceivedUpdate`]s — id
//! and delta only — so no defense can peek at ground-truth update kinds.

mod clipnoise;
mod foolsgold;

pub use clipnoise::clip_and_noise;
pub use foolsgold::foolsgold_weights;

use crate::error::{Error, Result};
use crate::federation::ReceivedUpdate;
use crate::numcore::{l2_norm, ParamVector, RngStream};

/// Which defense the server runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseKind {
    None,
    FoolsGold,
    ClipNoise,
}

/// Clip threshold selection for Clip & Noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipThreshold {
    Fixed(f64),
    /// Median of the current round's update norms.
    MedianNorm,
}

/// Noise magnitude selection for Clip & Noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSigma {
    /// Standard deviation as a fraction of the clip threshold.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseSpec {
    pub kind: DefenseKind,
    pub clip_threshold: ClipThreshold,
    pub noise_sigma: NoiseSigma,
    /// Numeric guard for FoolsGold's divisions and the active-history test.
    pub epsilon: f64,
}

impl Default for DefenseSpec {
    fn default() -> Self {
        DefenseSpec {
            kind: DefenseKind::None,
            clip_threshold: ClipThreshold::MedianNorm,
            noise_sigma: NoiseSigma::Relative(1e-3),
            epsilon: 1e-9,
        }
    }
}

impl DefenseSpec {
    pub fn none() -> Self {
        DefenseSpec::default()
    }

    pub fn foolsgold() -> Self {
        DefenseSpec {
            kind: DefenseKind::FoolsGold,
            ..DefenseSpec::default()
        }
    }

    pub fn clip_noise() -> Self {
        DefenseSpec {
            kind: DefenseKind::ClipNoise,
            ..DefenseSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ClipThreshold::Fixed(t) = self.clip_threshold {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Config(format!(
                    "clip threshold {t} must be finite and > 0"
                )));
            }
        }
        let sigma = match self.noise_sigma {
            NoiseSigma::Relative(s) | NoiseSigma::Absolute(s) => s,
        };
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise sigma {sigma} must be finite and ≥ 0"
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 || self.epsilon >= 1.0 {
            return Err(Error::Config(format!(
                "epsilon {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Median of the values (mean of the two central ones for even counts).
fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// The uniform hook the round loop calls: returns the (possibly transformed)
/// updates to aggregate and one aggregation weight per update.
///
/// `histories` is aligned with `updates` and carries each submitting client's
/// cumulative past deltas (including the current round); only FoolsGold reads
/// it. `stream` seeds the defense's randomness; only Clip & Noise draws from
/// it, keyed per client id so results do not depend on update order.
pub fn apply_defense(
    spec: &DefenseSpec,
    updates: &[ReceivedUpdate],
    histories: &[Option<&ParamVector>],
    stream: RngStream,
) -> Result<(Vec<ReceivedUpdate>, Vec<f64>)> {
    spec.validate()?;
    if updates.is_empty() {
        return Err(Error::Config("apply_defense: no updates".to_string()));
    }
    let uniform = vec![1.0; updates.len()];
    match spec.kind {
        DefenseKind::None => Ok((updates.to_vec(), uniform)),
        DefenseKind::FoolsGold => {
            if histories.len() != updates.len() {
                return Err(Error::Config(format!(
                    "apply_defense: {} histories for {} updates",
                    histories.len(),
                    updates.len()
                )));
            }
            let weights = foolsgold_weights(histories, spec.epsilon)?;
            Ok((updates.to_vec(), weights))
        }
        DefenseKind::ClipNoise => {
            let threshold = match spec.clip_threshold {
                ClipThreshold::Fixed(t) => t,
                ClipThreshold::MedianNorm => {
                    median(updates.iter().map(|u| l2_norm(&u.delta)).collect())
                }
            };
            if threshold <= 0.0 {
                // Every update is zero; clipping and relative noise are
                // no-ops, so pass the round through.
                return Ok((updates.to_vec(), uniform));
            }
            let sigma = match spec.noise_sigma {
                NoiseSigma::Relative(s) => s * threshold,
                NoiseSigma::Absolute(s) => s,
            };
            let transformed = clip_and_noise(updates, threshold, sigma, stream)?;
            Ok((transformed, uniform))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Layout;

    fn update(id: usize, values: Vec<f64>) -> ReceivedUpdate {
        let layout = Layout::of(&[("h", &[values.len()])]);
        ReceivedUpdate {
            client_id: id,
            delta: ParamVector::new(values, layout).unwrap(),
        }
    }

    #[test]
    fn none_is_identity_with_uniform_weights() {
        let ups = vec![update(0, vec![1.0, 2.0]), update(1, vec![-3.0, 0.5])];
        let (out, w) = apply_defense(
            &DefenseSpec::none(),
            &ups,
            &[None, None],
            RngStream::new(1, 1),
        )
        .unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
        for (a, b) in out.iter().zip(&ups) {
            assert_eq!(a.client_id, b.client_id);
            assert_eq!(a.delta.values(), b.delta.values());
        }
    }

    #[test]
    fn adaptive_threshold_is_the_median_norm() {
        // Norms 1, 2, 3, 100 → median 2.5; σ = 0 isolates the clipping.
        let ups = vec![
            update(0, vec![1.0, 0.0]),
            update(1, vec![0.0, 2.0]),
            update(2, vec![3.0, 0.0]),
            update(3, vec![0.0, 100.0]),
        ];
        let spec = DefenseSpec {
            noise_sigma: NoiseSigma::Absolute(0.0),
            ..DefenseSpec::clip_noise()
        };
        let (out, w) = apply_defense(&spec, &ups, &[], RngStream::new(2, 0)).unwrap();
        assert_eq!(w, vec![1.0; 4]);
        let norms: Vec<f64> = out.iter().map(|u| l2_norm(&u.delta)).collect();
        assert_eq!(norms[0], 1.0);
        assert_eq!(norms[1], 2.0);
        assert!((norms[2] - 2.5).abs() < 1e-12);
        assert!((norms[3] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn all_zero_round_passes_through() {
        let ups = vec![update(0, vec![0.0, 0.0]), update(1, vec![0.0, 0.0])];
        let (out, w) =
            apply_defense(&DefenseSpec::clip_noise(), &ups, &[], RngStream::new(3, 0)).unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
        assert!(out.iter().all(|u| u.delta.values().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn foolsgold_path_uses_histories() {
        let ups = vec![
            update(0, vec![0.1, 0.0]),
            update(1, vec![0.1, 0.0]),
            update(2, vec![0.0, 0.1]),
        ];
        let h0 = ParamVector::new(vec![1.0, 0.0], Layout::of(&[("h", &[2])])).unwrap();
        let h1 = h0.clone();
        let h2 = ParamVector::new(vec![0.0, 1.0], Layout::of(&[("h", &[2])])).unwrap();
        let (_, w) = apply_defense(
            &DefenseSpec::foolsgold(),
            &ups,
            &[Some(&h0), Some(&h1), Some(&h2)],
            RngStream::new(4, 0),
        )
        .unwrap();
        assert_eq!(w, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for spec in [
            DefenseSpec {
                clip_threshold: ClipThreshold::Fixed(0.0),
                ..DefenseSpec::clip_noise()
            },
            DefenseSpec {
                noise_sigma: NoiseSigma::Absolute(-1.0),
                ..DefenseSpec::clip_noise()
            },
            DefenseSpec {
                epsilon: 0.0,
                ..DefenseSpec::foolsgold()
            },
        ] {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
        let mismatched = apply_defense(
            &DefenseSpec::foolsgold(),
            &[update(0, vec![1.0])],
            &[],
            RngStream::new(5, 0),
        );
        assert!(mismatched.is_err());
    }

    #[test]
    fn median_handles_odd_and_even_counts() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![5.0]), 5.0);
    }
}

//! Norm clipping plus Gaussian perturbation of client updates.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::federation::ReceivedUpdate;
use crate::numcore::{l2_norm, RngStream};

/// Scale any update whose L2 norm exceeds `threshold` down onto the threshold
/// sphere, then add i.i.d. Gaussian(0, σ²) noise per coordinate to every
/// update (clipped or not).
///
/// Noise is drawn from a child of `stream` keyed by client id, so the output
/// for a given client is independent of the order updates arrive in.
pub fn clip_and_noise(
    updates: &[ReceivedUpdate],
    threshold: f64,
    sigma: f64,
    stream: RngStream,
) -> Result<Vec<ReceivedUpdate>> {
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(Error::Config(format!(
            "clip threshold {threshold} must be finite and > 0"
        )));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Config(format!(
            "noise sigma {sigma} must be finite and ≥ 0"
        )));
    }
    let normal = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).expect("validated sigma"))
    } else {
        None
    };
    updates
        .iter()
        .map(|u| {
            let mut delta = u.delta.clone();
            let norm = l2_norm(&delta);
            if norm > threshold {
                delta.scale_mut(threshold / norm);
            }
            if let Some(normal) = &normal {
                let mut rng = stream.child(&[u.client_id as u64]).rng();
                for v in delta.values_mut() {
                    *v += normal.sample(&mut rng);
                }
                if !delta.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "noised update for client {}",
                        u.client_id
                    )));
                }
            }
            Ok(ReceivedUpdate {
                client_id: u.client_id,
                delta,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{cosine_sim, Layout, ParamVector};

    fn update(id: usize, values: Vec<f64>) -> ReceivedUpdate {
        let layout = Layout::of(&[("h", &[values.len()])]);
        ReceivedUpdate {
            client_id: id,
            delta: ParamVector::new(values, layout).unwrap(),
        }
    }

    #[test]
    fn within_threshold_and_zero_sigma_is_identity() {
        let ups = vec![update(0, vec![0.3, 0.4]), update(1, vec![-0.1, 0.2])];
        let out = clip_and_noise(&ups, 1.0, 0.0, RngStream::new(1, 0)).unwrap();
        for (a, b) in out.iter().zip(&ups) {
            assert_eq!(a.delta.values(), b.delta.values());
        }
    }

    #[test]
    fn clipping_preserves_direction_and_hits_threshold() {
        // Norm 5 against threshold 2.5: exact halving.
        let ups = vec![update(0, vec![3.0, 4.0])];
        let out = clip_and_noise(&ups, 2.5, 0.0, RngStream::new(2, 0)).unwrap();
        assert_eq!(out[0].delta.values(), &[1.5, 2.0]);
        assert_eq!(l2_norm(&out[0].delta), 2.5);
        assert_eq!(
            cosine_sim(out[0].delta.values(), ups[0].delta.values()).unwrap(),
            1.0
        );
        // Idempotence: clipping the clipped update changes nothing.
        let again = clip_and_noise(&out, 2.5, 0.0, RngStream::new(2, 1)).unwrap();
        assert_eq!(again[0].delta.values(), out[0].delta.values());
    }

    #[test]
    fn scaled_update_is_neutralized_to_the_benign_median() {
        // A γ=100 replica against a threshold set to the benign median norm.
        let benign_median = 0.8;
        let malicious = update(0, vec![100.0 * 0.6, 100.0 * 0.0, 100.0 * 0.8]);
        let out =
            clip_and_noise(&[malicious], benign_median, 0.0, RngStream::new(3, 0)).unwrap();
        assert!((l2_norm(&out[0].delta) - benign_median).abs() < 1e-12);
    }

    #[test]
    fn noise_touches_every_update_and_is_deterministic() {
        let ups = vec![update(0, vec![0.1, 0.1]), update(7, vec![0.2, -0.2])];
        let s = RngStream::new(4, 0);
        let a = clip_and_noise(&ups, 10.0, 0.01, s).unwrap();
        let b = clip_and_noise(&ups, 10.0, 0.01, s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.delta.values(), y.delta.values());
        }
        // Both updates were under the threshold yet still got noised.
        for (x, orig) in a.iter().zip(&ups) {
            assert_ne!(x.delta.values(), orig.delta.values());
        }
        let c = clip_and_noise(&ups, 10.0, 0.01, RngStream::new(4, 1)).unwrap();
        assert_ne!(a[0].delta.values(), c[0].delta.values());
    }

    #[test]
    fn noise_is_keyed_by_client_not_position() {
        let u0 = update(3, vec![0.5, 0.5, 0.5]);
        let u1 = update(9, vec![-0.5, 0.25, 0.0]);
        let s = RngStream::new(5, 0);
        let fwd = clip_and_noise(&[u0.clone(), u1.clone()], 10.0, 0.05, s).unwrap();
        let rev = clip_and_noise(&[u1, u0], 10.0, 0.05, s).unwrap();
        assert_eq!(fwd[0].delta.values(), rev[1].delta.values());
        assert_eq!(fwd[1].delta.values(), rev[0].delta.values());
    }

    #[test]
    fn noise_magnitude_tracks_sigma() {
        // Mean squared perturbation over many coordinates ≈ σ².
        let n = 4000;
        let ups = vec![update(0, vec![0.0; n])];
        let sigma = 0.02;
        let out = clip_and_noise(&ups, 1.0, sigma, RngStream::new(6, 0)).unwrap();
        let msq =
            out[0].delta.values().iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!(
            (msq.sqrt() - sigma).abs() < 0.1 * sigma,
            "empirical sd {} vs sigma {}",
            msq.sqrt(),
            sigma
        );
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let ups = vec![update(0, vec![1.0])];
        assert!(clip_and_noise(&ups, 0.0, 0.0, RngStream::new(7, 0)).is_err());
        assert!(clip_and_noise(&ups, -1.0, 0.0, RngStream::new(7, 0)).is_err());
        assert!(clip_and_noise(&ups, 1.0, -0.1, RngStream::new(7, 0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn clipping_is_idempotent_within_tolerance(
            values in proptest::collection::vec(-5.0f64..5.0, 2..20),
            threshold in 0.1f64..3.0,
        ) {
            let ups = vec![update(0, values)];
            let once = clip_and_noise(&ups, threshold, 0.0, RngStream::new(8, 0)).unwrap();
            let twice = clip_and_noise(&once, threshold, 0.0, RngStream::new(8, 1)).unwrap();
            for (a, b) in twice[0].delta.values().iter().zip(once[0].delta.values()) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * threshold.max(1.0));
            }
            proptest::prop_assert!(l2_norm(&once[0].delta) <= threshold * (1.0 + 1e-12));
        }
    }
}

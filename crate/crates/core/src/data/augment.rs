//! Stochastic image augmentation for contrastive view generation.
//!
//! The policy is a small, dependency-free subset of the usual contrastive
//! recipe: random crop-and-resize, horizontal flip, additive Gaussian pixel
//! noise, and per-channel brightness jitter, applied in that fixed order with
//! a final clamp to [0,1].

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::types::Example;
use crate::numcore::{Rng64, RngStream};

/// Which transforms run and with what parameters. Disabled transforms draw
/// nothing from the RNG, so a policy fully determines the draw sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    /// Crop to a random area fraction in `[crop_min_area, 1]` (random aspect
    /// in [3/4, 4/3]) and bilinearly resize back. `None` disables.
    pub crop_min_area: Option<f64>,
    /// Mirror horizontally with probability 1/2.
    pub hflip: bool,
    /// Additive per-pixel Gaussian noise sigma; 0 disables.
    pub noise_sigma: f64,
    /// Per-channel brightness factor drawn from `[1 - b, 1 + b]`; 0 disables.
    pub brightness: f64,
}

impl AugmentPolicy {
    /// Identity policy: output equals input.
    pub fn none() -> Self {
        AugmentPolicy {
            crop_min_area: None,
            hflip: false,
            noise_sigma: 0.0,
            brightness: 0.0,
        }
    }

    /// Default view-generation policy for contrastive training.
    pub fn contrastive_default() -> Self {
        AugmentPolicy {
            crop_min_area: Some(0.5),
            hflip: true,
            noise_sigma: 0.02,
            brightness: 0.2,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.crop_min_area.is_none()
            && !self.hflip
            && self.noise_sigma == 0.0
            && self.brightness == 0.0
    }
}

/// Augment one example using a dedicated RNG stream. The same `(x, stream,
/// policy)` triple always yields the same output.
pub fn augment(x: &Example, stream: RngStream, policy: &AugmentPolicy) -> Example {
    augment_with(x, &mut stream.rng(), policy)
}

/// Augment using an already-instantiated RNG (for callers composing several
/// draws on one stream).
pub fn augment_with(x: &Example, rng: &mut Rng64, policy: &AugmentPolicy) -> Example {
    if policy.is_identity() {
        return x.clone();
    }
    let (c, h, w) = x.shape;
    let mut pixels = x.pixels.clone();

    if let Some(min_area) = policy.crop_min_area {
        let area = rng.random_range(min_area.min(1.0)..=1.0);
        let aspect = rng.random_range(0.75..(4.0 / 3.0));
        let ch = ((h as f64 * (area * aspect).sqrt()).round() as usize).clamp(1, h);
        let cw = ((w as f64 * (area / aspect).sqrt()).round() as usize).clamp(1, w);
        let top = rng.random_range(0..=h - ch);
        let left = rng.random_range(0..=w - cw);
        pixels = resize_crop(&pixels, c, h, w, top, left, ch, cw);
    }

    if policy.hflip && rng.random_bool(0.5) {
        for ch in 0..c {
            for y in 0..h {
                let row = (ch * h + y) * w;
                pixels[row..row + w].reverse();
            }
        }
    }

    if policy.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, policy.noise_sigma).expect("sigma > 0");
        for p in &mut pixels {
            *p += normal.sample(rng);
        }
    }

    if policy.brightness > 0.0 {
        for ch in 0..c {
            let factor = rng.random_range(1.0 - policy.brightness..=1.0 + policy.brightness);
            for p in &mut pixels[ch * h * w..(ch + 1) * h * w] {
                *p *= factor;
            }
        }
    }

    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    Example {
        pixels,
        shape: x.shape,
        label: x.label,
    }
}

/// Bilinearly resample the `ch x cw` window at `(top, left)` back to the full
/// `h x w` canvas.
fn resize_crop(
    pixels: &[f64],
    c: usize,
    h: usize,
    w: usize,
    top: usize,
    left: usize,
    ch: usize,
    cw: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; pixels.len()];
    for channel in 0..c {
        let plane = &pixels[channel * h * w..(channel + 1) * h * w];
        for y in 0..h {
            // Center of output pixel mapped into crop coordinates.
            let sy = ((y as f64 + 0.5) * ch as f64 / h as f64 - 0.5)
                .clamp(0.0, (ch - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(ch - 1);
            let fy = sy - y0 as f64;
            for x in 0..w {
                let sx = ((x as f64 + 0.5) * cw as f64 / w as f64 - 0.5)
                    .clamp(0.0, (cw - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(cw - 1);
                let fx = sx - x0 as f64;
                let p00 = plane[(top + y0) * w + left + x0];
                let p01 = plane[(top + y0) * w + left + x1];
                let p10 = plane[(top + y1) * w + left + x0];
                let p11 = plane[(top + y1) * w + left + x1];
                let top_row = p00 + fx * (p01 - p00);
                let bot_row = p10 + fx * (p11 - p10);
                out[(channel * h + y) * w + x] = top_row + fy * (bot_row - top_row);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::numcore::streams;

    fn sample_example() -> Example {
        generate_synthetic(2, 1, (3, 8, 8), 1.0, 0.1, 5)
            .unwrap()
            .get(0)
            .clone()
    }

    #[test]
    fn identity_policy_is_a_noop() {
        let x = sample_example();
        let y = augment(&x, RngStream::new(1, 2), &AugmentPolicy::none());
        assert_eq!(x, y);
    }

    #[test]
    fn same_stream_same_output() {
        let x = sample_example();
        let policy = AugmentPolicy::contrastive_default();
        let s = RngStream::derived(3, &[streams::TRAIN, 0, 1]);
        assert_eq!(augment(&x, s, &policy), augment(&x, s, &policy));
    }

    #[test]
    fn distinct_streams_rarely_collide() {
        let x = sample_example();
        let policy = AugmentPolicy::contrastive_default();
        let collisions = (0..100)
            .filter(|&i| {
                let a = augment(&x, RngStream::derived(7, &[1, i]), &policy);
                let b = augment(&x, RngStream::derived(7, &[2, i]), &policy);
                a == b
            })
            .count();
        assert!(collisions <= 1, "{collisions} collisions out of 100");
    }

    #[test]
    fn output_stays_in_range_and_shape() {
        let x = sample_example();
        let policy = AugmentPolicy {
            crop_min_area: Some(0.5),
            hflip: true,
            noise_sigma: 0.5, // strong noise to exercise the clamp
            brightness: 0.9,
        };
        for i in 0..50 {
            let y = augment(&x, RngStream::derived(11, &[i]), &policy);
            assert_eq!(y.shape, x.shape);
            assert_eq!(y.label, x.label);
            assert!(y.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn full_area_crop_is_identity_resample() {
        // With the crop window equal to the full image, bilinear resampling
        // must reproduce the input exactly.
        let x = sample_example();
        let (c, h, w) = x.shape;
        let out = resize_crop(&x.pixels, c, h, w, 0, 0, h, w);
        for (a, b) in out.iter().zip(&x.pixels) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_only_policy_mirrors_rows() {
        let x = sample_example();
        let policy = AugmentPolicy {
            crop_min_area: None,
            hflip: true,
            noise_sigma: 0.0,
            brightness: 0.0,
        };
        // Find a stream whose single Bernoulli draw says "flip".
        let mut flipped = None;
        for i in 0..20 {
            let y = augment(&x, RngStream::derived(13, &[i]), &policy);
            if y != x {
                flipped = Some(y);
                break;
            }
        }
        let y = flipped.expect("20 fair coin flips produced no heads");
        let (_, h, w) = x.shape;
        for yy in 0..h {
            for xx in 0..w {
                assert_eq!(y.pixel(0, yy, xx), x.pixel(0, yy, w - 1 - xx));
            }
        }
    }
}

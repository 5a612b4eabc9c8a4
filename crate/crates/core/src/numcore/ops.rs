//! Slice-level vector helpers shared by losses, training, and evaluation.

use crate::error::{Error, Result};

/// Norms below this are treated as zero for cosine purposes.
const NORM_EPS: f64 = 1e-12;

/// Dot product with four-way accumulation (order is fixed, so results are
/// reproducible across runs).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Euclidean norm of a slice.
pub fn l2_norm_slice(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x` on raw slices.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Cosine similarity of two equal-length vectors.
///
/// Errors if the lengths differ or either vector has (near-)zero norm; the
/// quantity is undefined there and every caller in this crate treats that as
/// a bug in the data rather than something to paper over.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LayoutMismatch(format!(
            "cosine_sim: lengths {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = l2_norm_slice(u);
    let nv = l2_norm_slice(v);
    if nu < NORM_EPS || nv < NORM_EPS {
        return Err(Error::Degenerate(
            "cosine_sim: zero-norm input".to_string(),
        ));
    }
    // Clamp tiny rounding excursions so downstream acos/comparisons are safe.
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity together with its gradients with respect to both
/// arguments:
///
/// d cos(u, v) / du = v / (|u||v|) - cos(u, v) * u / |u|^2
///
/// and symmetrically for `v`.
pub fn cosine_with_grads(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let cos = cosine_sim(u, v)?;
    let nu = l2_norm_slice(u);
    let nv = l2_norm_slice(v);
    let inv_uv = 1.0 / (nu * nv);
    let inv_uu = 1.0 / (nu * nu);
    let inv_vv = 1.0 / (nv * nv);
    let du: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| vi * inv_uv - cos * ui * inv_uu)
        .collect();
    let dv: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| ui * inv_uv - cos * vi * inv_vv)
        .collect();
    Ok((cos, du, dv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let v = vec![0.3, -1.2, 4.0, 0.7];
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_opposite_vectors_is_minus_one() {
        let v = vec![1.0, 2.0, -3.0];
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine_sim(&v, &w).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert!(matches!(
            cosine_sim(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn cosine_rejects_length_mismatch() {
        assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cosine_grads_match_finite_differences() {
        let u = vec![0.8, -0.3, 1.7, 0.1];
        let v = vec![-0.2, 0.9, 0.4, -1.1];
        let (_, du, dv) = cosine_with_grads(&u, &v).unwrap();
        let eps = 1e-6;
        for i in 0..u.len() {
            let mut up = u.clone();
            up[i] += eps;
            let mut um = u.clone();
            um[i] -= eps;
            let num = (cosine_sim(&up, &v).unwrap() - cosine_sim(&um, &v).unwrap()) / (2.0 * eps);
            assert!((num - du[i]).abs() < 1e-8, "du[{i}]: {num} vs {}", du[i]);
        }
        for i in 0..v.len() {
            let mut vp = v.clone();
            vp[i] += eps;
            let mut vm = v.clone();
            vm[i] -= eps;
            let num = (cosine_sim(&u, &vp).unwrap() - cosine_sim(&u, &vm).unwrap()) / (2.0 * eps);
            assert!((num - dv[i]).abs() < 1e-8, "dv[{i}]: {num} vs {}", dv[i]);
        }
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..12),
            a in 0.01f64..100.0,
            b in 0.01f64..100.0,
        ) {
            let (v, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(l2_norm_slice(&v) > 1e-6 && l2_norm_slice(&w) > 1e-6);
            let base = cosine_sim(&v, &w).unwrap();
            let vs: Vec<f64> = v.iter().map(|x| a * x).collect();
            let ws: Vec<f64> = w.iter().map(|x| b * x).collect();
            let scaled = cosine_sim(&vs, &ws).unwrap();
            prop_assert!((base - scaled).abs() < 1e-9);
        }

        #[test]
        fn cosine_is_bounded(
            v in proptest::collection::vec(-10.0f64..10.0, 4),
            w in proptest::collection::vec(-10.0f64..10.0, 4),
        ) {
            prop_assume!(l2_norm_slice(&v) > 1e-6 && l2_norm_slice(&w) > 1e-6);
            let c = cosine_sim(&v, &w).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}

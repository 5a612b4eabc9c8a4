//! Flat `f64` parameter vectors with a named tensor layout.
//!
//! Model weights, client updates, and gradients all share this
//! representation, which keeps aggregation and defenses simple slice
//! arithmetic. The layout maps tensor names to contiguous spans so layers can
//! view their weights without copying.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A named tensor inside a [`Layout`]: its name and logical shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An ordered list of named tensors and their flattened spans.
///
/// Layouts are immutable once built and usually shared behind an [`Arc`], so
/// equality checks between vectors from the same model are a pointer
/// comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    specs: Vec<TensorSpec>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(specs: Vec<TensorSpec>) -> Self {
        let mut offsets = Vec::with_capacity(specs.len());
        let mut total = 0;
        for spec in &specs {
            offsets.push(total);
            total += spec.len();
        }
        Layout {
            specs,
            offsets,
            total,
        }
    }

    /// Convenience constructor from `(name, shape)` pairs.
    pub fn of(entries: &[(&str, &[usize])]) -> Arc<Self> {
        Arc::new(Layout::new(
            entries
                .iter()
                .map(|(name, shape)| TensorSpec {
                    name: (*name).to_string(),
                    shape: shape.to_vec(),
                })
                .collect(),
        ))
    }

    /// Total number of scalars across all tensors.
    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    /// Flattened index range of the named tensor, if present.
    pub fn span(&self, name: &str) -> Option<Range<usize>> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.offsets[i]..self.offsets[i] + self.specs[i].len())
    }

    /// Index ranges of every tensor whose name starts with `prefix`.
    pub fn spans_with_prefix(&self, prefix: &str) -> Vec<Range<usize>> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.name.starts_with(prefix))
            .map(|(i, s)| self.offsets[i]..self.offsets[i] + s.len())
            .collect()
    }
}

/// Shared-layout equality: pointer comparison first, structural fallback.
fn same_layout(a: &Arc<Layout>, b: &Arc<Layout>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// A model-sized vector of `f64` values tied to a [`Layout`].
///
/// Elementwise operations require both operands to share a layout and return
/// [`Error::LayoutMismatch`] otherwise, which catches cross-model mix-ups at
/// the aggregation boundary.
#[derive(Debug, Clone)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Arc<Layout>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::LayoutMismatch(format!(
                "value buffer has {} scalars but layout expects {}",
                values.len(),
                layout.total_len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let n = layout.total_len();
        ParamVector {
            values: vec![0.0; n],
            layout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector::zeros(self.layout.clone())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        same_layout(&self.layout, &other.layout)
    }

    /// View of the named tensor's scalars.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.span(name).map(|r| &self.values[r])
    }

    /// Mutable view of the named tensor's scalars.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.layout.span(name).map(|r| &mut self.values[r])
    }

    fn check_layout(&self, other: &ParamVector, op: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{op} requires identical layouts ({} vs {} scalars)",
                self.len(),
                other.len()
            )))
        }
    }

    /// `self += a * x`.
    pub fn add_scaled(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        self.check_layout(x, "add_scaled")?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    /// `self - other` as a new vector.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other, "sub")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }

    pub fn scale_mut(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn l2(&self) -> f64 {
        super::ops::l2_norm_slice(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// `a * x + y` as a new vector; errors on layout mismatch.
pub fn axpy_params(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    let mut out = y.clone();
    out.add_scaled(a, x)?;
    Ok(out)
}

/// Euclidean norm of a parameter vector.
pub fn l2_norm(x: &ParamVector) -> f64 {
    x.l2()
}

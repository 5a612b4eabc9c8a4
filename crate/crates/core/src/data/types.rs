//! Core dataset types: examples, datasets, and backdoor triggers.

use crate::error::{Error, Result};

/// Image shape as `(channels, height, width)`.
pub type Shape = (usize, usize, usize);

pub(crate) fn pixel_count(shape: Shape) -> usize {
    shape.0 * shape.1 * shape.2
}

/// A single image in CHW order with an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub pixels: Vec<f64>,
    pub shape: Shape,
    pub label: Option<u16>,
}

impl Example {
    pub fn new(pixels: Vec<f64>, shape: Shape, label: Option<u16>) -> Result<Self> {
        if pixels.len() != pixel_count(shape) {
            return Err(Error::Config(format!(
                "example has {} pixels but shape {:?} needs {}",
                pixels.len(),
                shape,
                pixel_count(shape)
            )));
        }
        if !pixels.iter().all(|p| (0.0..=1.0).contains(p)) {
            return Err(Error::Config("example pixel outside [0,1]".to_string()));
        }
        Ok(Example {
            pixels,
            shape,
            label,
        })
    }

    #[inline]
    pub fn pixel(&self, c: usize, y: usize, x: usize) -> f64 {
        let (_, h, w) = self.shape;
        self.pixels[(c * h + y) * w + x]
    }
}

/// An immutable collection of uniformly shaped examples.
///
/// When any example carries a label, all must, and `n_classes` must be set so
/// labels can be range-checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: Shape,
    examples: Vec<Example>,
    n_classes: Option<u16>,
}

impl Dataset {
    pub fn new(shape: Shape, examples: Vec<Example>, n_classes: Option<u16>) -> Result<Self> {
        let labeled = examples.iter().filter(|e| e.label.is_some()).count();
        if labeled != 0 && labeled != examples.len() {
            return Err(Error::Config(
                "dataset mixes labeled and unlabeled examples".to_string(),
            ));
        }
        if labeled > 0 && n_classes.is_none() {
            return Err(Error::Config(
                "labeled dataset requires n_classes".to_string(),
            ));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.shape != shape {
                return Err(Error::Config(format!(
                    "example {i} has shape {:?}, dataset expects {:?}",
                    ex.shape, shape
                )));
            }
            if let (Some(label), Some(k)) = (ex.label, n_classes) {
                if label >= k {
                    return Err(Error::Config(format!(
                        "example {i} label {label} outside [0,{k})"
                    )));
                }
            }
        }
        Ok(Dataset {
            shape,
            examples,
            n_classes,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn n_classes(&self) -> Option<u16> {
        self.n_classes
    }

    pub fn labels(&self) -> impl Iterator<Item = Option<u16>> + '_ {
        self.examples.iter().map(|e| e.label)
    }

    /// New dataset containing copies of the examples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let examples = indices
            .iter()
            .map(|&i| {
                self.examples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("subset index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.shape, examples, self.n_classes)
    }

    /// Same dataset with every image carrying the trigger patch.
    pub fn with_trigger(&self, trigger: &Trigger) -> Result<Dataset> {
        let examples = self
            .examples
            .iter()
            .map(|e| embed_trigger(e, trigger))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.shape, examples, self.n_classes)
    }
}

/// A patch pasted onto images to mark them for a backdoor target task.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    /// Patch pixels, CHW order, values in [0,1].
    pub patch: Vec<f64>,
    /// Patch dimensions `(channels, height, width)`.
    pub patch_shape: Shape,
    /// Top-left anchor `(row, col)` in the image.
    pub position: (usize, usize),
    /// Target-task index this trigger belongs to.
    pub id: usize,
}

impl Trigger {
    pub fn new(patch: Vec<f64>, patch_shape: Shape, position: (usize, usize), id: usize) -> Result<Self> {
        if patch.len() != pixel_count(patch_shape) {
            return Err(Error::Config(format!(
                "trigger patch has {} pixels but shape {:?} needs {}",
                patch.len(),
                patch_shape,
                pixel_count(patch_shape)
            )));
        }
        if !patch.iter().all(|p| (0.0..=1.0).contains(p)) {
            return Err(Error::Config("trigger pixel outside [0,1]".to_string()));
        }
        Ok(Trigger {
            patch,
            patch_shape,
            position,
            id,
        })
    }

    /// Default trigger for `image_shape`: a white square of side
    /// `ceil(min(H,W)/8)`. Target 0 sits at the bottom-right corner; further
    /// targets cycle through the remaining corners so concurrent target tasks
    /// stay visually distinct.
    pub fn white_square(image_shape: Shape, id: usize) -> Result<Self> {
        let (c, h, w) = image_shape;
        let side = h.min(w).div_ceil(8);
        if side == 0 || side > h || side > w {
            return Err(Error::Config(format!(
                "image shape {image_shape:?} cannot host a trigger"
            )));
        }
        let corners = [
            (h - side, w - side), // bottom-right
            (0, 0),               // top-left
            (0, w - side),        // top-right
            (h - side, 0),        // bottom-left
        ];
        let position = corners[id % corners.len()];
        Trigger::new(vec![1.0; c * side * side], (c, side, side), position, id)
    }
}

/// Paste `e`'s patch onto a copy of `x` at `e.position`; pixels outside the
/// patch are untouched.
pub fn embed_trigger(x: &Example, e: &Trigger) -> Result<Example> {
    let (c, h, w) = x.shape;
    let (pc, ph, pw) = e.patch_shape;
    let (row, col) = e.position;
    if pc != c {
        return Err(Error::Config(format!(
            "trigger has {pc} channels, image has {c}"
        )));
    }
    if row + ph > h || col + pw > w {
        return Err(Error::Config(format!(
            "trigger {ph}x{pw} at ({row},{col}) exceeds {h}x{w} image"
        )));
    }
    let mut out = x.clone();
    for ch in 0..c {
        for dy in 0..ph {
            for dx in 0..pw {
                out.pixels[(ch * h + row + dy) * w + col + dx] =
                    e.patch[(ch * ph + dy) * pw + dx];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn black(shape: Shape) -> Example {
        Example::new(vec![0.0; pixel_count(shape)], shape, None).unwrap()
    }

    #[test]
    fn embed_white_patch_on_black_image() {
        let shape = (2, 8, 8);
        let x = black(shape);
        let e = Trigger::new(vec![1.0; 2 * 3 * 3], (2, 3, 3), (0, 0), 0).unwrap();
        let y = embed_trigger(&x, &e).unwrap();
        let ones = y.pixels.iter().filter(|&&p| p == 1.0).count();
        let zeros = y.pixels.iter().filter(|&&p| p == 0.0).count();
        assert_eq!(ones, 9 * 2);
        assert_eq!(zeros, y.pixels.len() - 9 * 2);
        // Input untouched.
        assert!(x.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn embed_is_idempotent() {
        let shape = (1, 8, 8);
        let x = Example::new((0..64).map(|i| i as f64 / 63.0).collect(), shape, None).unwrap();
        let e = Trigger::white_square(shape, 0).unwrap();
        let once = embed_trigger(&x, &e).unwrap();
        let twice = embed_trigger(&once, &e).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn embed_leaves_outside_pixels_bit_identical() {
        let shape = (1, 8, 8);
        let x = Example::new((0..64).map(|i| (i as f64 * 0.013).fract()).collect(), shape, None)
            .unwrap();
        let e = Trigger::new(vec![0.5; 4], (1, 2, 2), (3, 4), 0).unwrap();
        let y = embed_trigger(&x, &e).unwrap();
        for yy in 0..8 {
            for xx in 0..8 {
                let inside = (3..5).contains(&yy) && (4..6).contains(&xx);
                if !inside {
                    assert_eq!(y.pixel(0, yy, xx).to_bits(), x.pixel(0, yy, xx).to_bits());
                }
            }
        }
    }

    #[test]
    fn embed_rejects_out_of_bounds_position() {
        let x = black((1, 8, 8));
        let e = Trigger::new(vec![1.0; 9], (1, 3, 3), (7, 7), 0).unwrap();
        assert!(embed_trigger(&x, &e).is_err());
    }

    #[test]
    fn default_trigger_corners_differ_per_target() {
        let shape = (3, 16, 16);
        let t0 = Trigger::white_square(shape, 0).unwrap();
        let t1 = Trigger::white_square(shape, 1).unwrap();
        assert_eq!(t0.position, (14, 14)); // side 2, bottom-right
        assert_eq!(t1.position, (0, 0));
        assert_eq!(t0.patch_shape, (3, 2, 2));
    }

    #[test]
    fn dataset_rejects_mixed_labels_and_bad_range() {
        let shape = (1, 8, 8);
        let a = Example::new(vec![0.0; 64], shape, Some(0)).unwrap();
        let b = Example::new(vec![0.0; 64], shape, None).unwrap();
        assert!(Dataset::new(shape, vec![a.clone(), b], Some(2)).is_err());
        let c = Example::new(vec![0.0; 64], shape, Some(5)).unwrap();
        assert!(Dataset::new(shape, vec![a.clone(), c], Some(2)).is_err());
        assert!(Dataset::new(shape, vec![a], None).is_err());
    }

    #[test]
    fn subset_preserves_shape_and_labels() {
        let shape = (1, 8, 8);
        let exs: Vec<Example> = (0..4)
            .map(|i| Example::new(vec![0.1 * i as f64; 64], shape, Some(i as u16)).unwrap())
            .collect();
        let ds = Dataset::new(shape, exs, Some(4)).unwrap();
        let sub = ds.subset(&[3, 1]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.get(0).label, Some(3));
        assert_eq!(sub.get(1).label, Some(1));
        assert!(ds.subset(&[9]).is_err());
    }
}

//! Model architecture description and its compiled form.
//!
//! Architectures are declarative: a list of dense / small-conv layer specs
//! for the encoder and a dense-only projector. [`Model::new`] validates the
//! shape chain once and produces per-layer plans (parameter spans plus input
//! and output geometry) so forward/backward passes are plain slice walks.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::data::Shape;
use crate::error::{Error, Result};
use crate::numcore::{Layout, ParamVector, RngStream, TensorSpec};

/// Per-unit nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    pub(crate) fn deriv(self, pre: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One layer of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected layer; flattens its input if needed.
    Dense { units: usize, act: Activation },
    /// Valid-padding, stride-1 square convolution. Requires a CHW input,
    /// i.e. it must come before any dense layer.
    Conv {
        filters: usize,
        kernel: usize,
        act: Activation,
    },
}

/// Declarative encoder + projector architecture.
///
/// The encoder maps an image to the feature vector `h` consumed by attack
/// losses and evaluation; the projector maps `h` to the contrastive
/// embedding `z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArch {
    pub input_shape: Shape,
    pub encoder: Vec<LayerSpec>,
    pub projector: Vec<LayerSpec>,
}

impl ModelArch {
    /// Default desk-scale architecture: a two-layer dense encoder
    /// (128 ReLU → 64) and a two-layer projector (64 ReLU → 32).
    pub fn default_mlp(input_shape: Shape) -> Self {
        ModelArch {
            input_shape,
            encoder: vec![
                LayerSpec::Dense {
                    units: 128,
                    act: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 64,
                    act: Activation::Linear,
                },
            ],
            projector: vec![
                LayerSpec::Dense {
                    units: 64,
                    act: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 32,
                    act: Activation::Linear,
                },
            ],
        }
    }

    /// Validate the shape chain by compiling.
    pub fn validate(&self) -> Result<()> {
        Model::new(self).map(|_| ())
    }
}

/// Dimensions a layer consumes and produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dims {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl Dims {
    fn len(self) -> usize {
        match self {
            Dims::Chw(c, h, w) => c * h * w,
            Dims::Flat(n) => n,
        }
    }
}

/// Compiled layer: geometry plus parameter spans inside the flat vector.
#[derive(Debug, Clone)]
pub(crate) enum PlanKind {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv {
        ic: usize,
        ih: usize,
        iw: usize,
        oc: usize,
        k: usize,
        oh: usize,
        ow: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub kind: PlanKind,
    pub act: Activation,
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub in_len: usize,
    pub out_len: usize,
}

/// A validated architecture with its parameter layout and layer plans.
pub struct Model {
    arch: ModelArch,
    layout: Arc<Layout>,
    pub(crate) enc_plans: Vec<Plan>,
    pub(crate) proj_plans: Vec<Plan>,
    feat_dim: usize,
    proj_dim: usize,
    input_len: usize,
}

/// Walk one part's layers, producing tensor specs and half-built plans.
fn compile_part(
    part_name: &str,
    layers: &[LayerSpec],
    input: Dims,
    specs: &mut Vec<TensorSpec>,
    plans: &mut Vec<(PlanKind, Activation, usize, usize)>, // kind, act, w_len, b_len
) -> Result<Dims> {
    let mut current = input;
    for (i, layer) in layers.iter().enumerate() {
        let name = format!("{part_name}{i}");
        match *layer {
            LayerSpec::Dense { units, act } => {
                if units == 0 {
                    return Err(Error::Config(format!("layer {name}: 0 units")));
                }
                let in_dim = current.len();
                specs.push(TensorSpec {
                    name: format!("{name}.w"),
                    shape: vec![units, in_dim],
                });
                specs.push(TensorSpec {
                    name: format!("{name}.b"),
                    shape: vec![units],
                });
                plans.push((
                    PlanKind::Dense {
                        in_dim,
                        out_dim: units,
                    },
                    act,
                    units * in_dim,
                    units,
                ));
                current = Dims::Flat(units);
            }
            LayerSpec::Conv {
                filters, kernel, act,
            } => {
                let (c, h, w) = match current {
                    Dims::Chw(c, h, w) => (c, h, w),
                    Dims::Flat(_) => {
                        return Err(Error::Config(format!(
                            "layer {name}: conv requires a CHW input, but the input was flattened"
                        )))
                    }
                };
                if filters == 0 || kernel == 0 {
                    return Err(Error::Config(format!("layer {name}: zero filters or kernel")));
                }
                if kernel > h || kernel > w {
                    return Err(Error::Config(format!(
                        "layer {name}: kernel {kernel} exceeds input {h}x{w}"
                    )));
                }
                let (oh, ow) = (h - kernel + 1, w - kernel + 1);
                specs.push(TensorSpec {
                    name: format!("{name}.w"),
                    shape: vec![filters, c, kernel, kernel],
                });
                specs.push(TensorSpec {
                    name: format!("{name}.b"),
                    shape: vec![filters],
                });
                plans.push((
                    PlanKind::Conv {
                        ic: c,
                        ih: h,
                        iw: w,
                        oc: filters,
                        k: kernel,
                        oh,
                        ow,
                    },
                    act,
                    filters * c * kernel * kernel,
                    filters,
                ));
                current = Dims::Chw(filters, oh, ow);
            }
        }
    }
    Ok(current)
}

impl Model {
    pub fn new(arch: &ModelArch) -> Result<Self> {
        let (c, h, w) = arch.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!(
                "input shape {:?} has a zero dimension",
                arch.input_shape
            )));
        }
        if arch.encoder.is_empty() {
            return Err(Error::Config("encoder has no layers".to_string()));
        }
        if arch.projector.is_empty() {
            return Err(Error::Config("projector has no layers".to_string()));
        }
        if arch
            .projector
            .iter()
            .any(|l| matches!(l, LayerSpec::Conv { .. }))
        {
            return Err(Error::Config(
                "projector must be dense-only".to_string(),
            ));
        }

        let mut specs = Vec::new();
        let mut raw_plans = Vec::new();
        let enc_out = compile_part("enc", &arch.encoder, Dims::Chw(c, h, w), &mut specs, &mut raw_plans)?;
        let n_enc = raw_plans.len();
        let feat_dim = enc_out.len();
        if feat_dim < 2 {
            return Err(Error::Config(format!(
                "encoder output dimension {feat_dim} < 2"
            )));
        }
        let proj_out = compile_part(
            "proj",
            &arch.projector,
            Dims::Flat(feat_dim),
            &mut specs,
            &mut raw_plans,
        )?;
        let proj_dim = proj_out.len();
        if proj_dim < 2 {
            return Err(Error::Config(format!(
                "projector output dimension {proj_dim} < 2"
            )));
        }

        let layout = Arc::new(Layout::new(specs));
        // Attach parameter spans now that offsets are known.
        let mut plans = Vec::with_capacity(raw_plans.len());
        let mut offset = 0;
        for (kind, act, w_len, b_len) in raw_plans {
            let (in_len, out_len) = match &kind {
                PlanKind::Dense { in_dim, out_dim } => (*in_dim, *out_dim),
                PlanKind::Conv {
                    ic, ih, iw, oc, oh, ow, ..
                } => (ic * ih * iw, oc * oh * ow),
            };
            plans.push(Plan {
                kind,
                act,
                w: offset..offset + w_len,
                b: offset + w_len..offset + w_len + b_len,
                in_len,
                out_len,
            });
            offset += w_len + b_len;
        }
        debug_assert_eq!(offset, layout.total_len());
        let proj_plans = plans.split_off(n_enc);

        Ok(Model {
            arch: arch.clone(),
            layout,
            enc_plans: plans,
            proj_plans,
            feat_dim,
            proj_dim,
            input_len: c * h * w,
        })
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn layout(&self) -> Arc<Layout> {
        self.layout.clone()
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_dim
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub(crate) fn check_params(&self, params: &ParamVector) -> Result<()> {
        if Arc::ptr_eq(params.layout(), &self.layout) || **params.layout() == *self.layout {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "params have {} scalars, model expects {}",
                params.len(),
                self.layout.total_len()
            )))
        }
    }

    /// Glorot-uniform weights, zero biases, drawn in layout order.
    pub fn init_params(&self, stream: RngStream) -> ParamVector {
        let mut rng = stream.rng();
        let mut p = ParamVector::zeros(self.layout());
        for plan in self.enc_plans.iter().chain(&self.proj_plans) {
            let (fan_in, fan_out) = match &plan.kind {
                PlanKind::Dense { in_dim, out_dim } => (*in_dim, *out_dim),
                PlanKind::Conv { ic, oc, k, .. } => (ic * k * k, oc * k * k),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut p.values_mut()[plan.w.clone()] {
                *v = rng.random_range(-limit..=limit);
            }
            // Biases stay zero.
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_arch_compiles_with_expected_dims() {
        let model = Model::new(&ModelArch::default_mlp((3, 16, 16))).unwrap();
        assert_eq!(model.input_len(), 768);
        assert_eq!(model.feat_dim(), 64);
        assert_eq!(model.proj_dim(), 32);
        let expected = 768 * 128 + 128 + 128 * 64 + 64 + 64 * 64 + 64 + 64 * 32 + 32;
        assert_eq!(model.layout().total_len(), expected);
    }

    #[test]
    fn conv_chain_shapes() {
        let arch = ModelArch {
            input_shape: (1, 8, 8),
            encoder: vec![
                LayerSpec::Conv {
                    filters: 4,
                    kernel: 3,
                    act: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 16,
                    act: Activation::Linear,
                },
            ],
            projector: vec![LayerSpec::Dense {
                units: 8,
                act: Activation::Linear,
            }],
        };
        let model = Model::new(&arch).unwrap();
        // 8x8 under a 3x3 valid conv → 6x6 per filter.
        assert_eq!(model.layout().span("enc0.w").unwrap().len(), 4 * 9);
        assert_eq!(model.layout().span("enc1.w").unwrap().len(), 16 * 4 * 36);
        assert_eq!(model.feat_dim(), 16);
    }

    #[test]
    fn invalid_archs_are_rejected() {
        let base = ModelArch::default_mlp((1, 8, 8));

        let mut empty_enc = base.clone();
        empty_enc.encoder.clear();
        assert!(empty_enc.validate().is_err());

        let mut conv_after_dense = base.clone();
        conv_after_dense.encoder.push(LayerSpec::Conv {
            filters: 2,
            kernel: 2,
            act: Activation::Linear,
        });
        assert!(conv_after_dense.validate().is_err());

        let mut conv_proj = base.clone();
        conv_proj.projector = vec![LayerSpec::Conv {
            filters: 2,
            kernel: 2,
            act: Activation::Linear,
        }];
        assert!(conv_proj.validate().is_err());

        let mut tiny_feat = base.clone();
        tiny_feat.encoder = vec![LayerSpec::Dense {
            units: 1,
            act: Activation::Linear,
        }];
        assert!(tiny_feat.validate().is_err());

        let mut huge_kernel = base;
        huge_kernel.encoder = vec![
            LayerSpec::Conv {
                filters: 2,
                kernel: 9,
                act: Activation::Linear,
            },
            LayerSpec::Dense {
                units: 4,
                act: Activation::Linear,
            },
        ];
        assert!(huge_kernel.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let model = Model::new(&ModelArch::default_mlp((1, 8, 8))).unwrap();
        let a = model.init_params(RngStream::new(5, 0));
        let b = model.init_params(RngStream::new(5, 0));
        let c = model.init_params(RngStream::new(6, 0));
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(a.tensor("enc0.b").unwrap().iter().all(|&v| v == 0.0));
        assert!(a.tensor("proj1.b").unwrap().iter().all(|&v| v == 0.0));
        // Weights are nonzero and bounded by the Glorot limit.
        let w = a.tensor("enc0.w").unwrap();
        let limit = (6.0f64 / (64.0 + 128.0)).sqrt();
        assert!(w.iter().any(|&v| v != 0.0));
        assert!(w.iter().all(|&v| v.abs() <= limit + 1e-12));
    }
}

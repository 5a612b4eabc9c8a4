//! Forward and backward passes over compiled models.
//!
//! Gradients are hand-derived per layer kind; every consumer (InfoNCE,
//! backdoor losses) validates the full chain against the finite-difference
//! oracle in tests.

use crate::contrastive::arch::{Model, ModelArch, Plan, PlanKind};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::numcore::{axpy, dot, ParamVector};

/// Which half of the model to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Part {
    Encoder,
    Projector,
}

/// Cached activations of one forward pass, needed by the backward pass:
/// the input to each layer and each layer's pre-activation values.
pub(crate) struct Trace {
    inputs: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
}

impl Model {
    fn plans(&self, part: Part) -> &[Plan] {
        match part {
            Part::Encoder => &self.enc_plans,
            Part::Projector => &self.proj_plans,
        }
    }

    fn layer_forward(plan: &Plan, params: &ParamVector, input: &[f64], pre: &mut Vec<f64>) {
        let w = &params.values()[plan.w.clone()];
        let b = &params.values()[plan.b.clone()];
        pre.clear();
        match plan.kind {
            PlanKind::Dense { in_dim, out_dim } => {
                for o in 0..out_dim {
                    pre.push(b[o] + dot(&w[o * in_dim..(o + 1) * in_dim], input));
                }
            }
            PlanKind::Conv {
                ic, ih, iw, oc, k, oh, ow,
            } => {
                pre.resize(oc * oh * ow, 0.0);
                for f in 0..oc {
                    let wf = &w[f * ic * k * k..(f + 1) * ic * k * k];
                    for y in 0..oh {
                        for x in 0..ow {
                            let mut acc = b[f];
                            for c in 0..ic {
                                let wc = &wf[c * k * k..(c + 1) * k * k];
                                for dy in 0..k {
                                    let row = &input[(c * ih + y + dy) * iw + x..];
                                    let wrow = &wc[dy * k..(dy + 1) * k];
                                    for dx in 0..k {
                                        acc += wrow[dx] * row[dx];
                                    }
                                }
                            }
                            pre[(f * oh + y) * ow + x] = acc;
                        }
                    }
                }
            }
        }
    }

    /// Forward pass through one part, optionally recording a [`Trace`].
    pub(crate) fn forward_part(
        &self,
        params: &ParamVector,
        part: Part,
        input: &[f64],
        trace: Option<&mut Trace>,
    ) -> Vec<f64> {
        let plans = self.plans(part);
        let mut current = input.to_vec();
        let mut recorded = trace.map(|t| {
            t.inputs.clear();
            t.pres.clear();
            t
        });
        for plan in plans {
            let mut pre = Vec::with_capacity(plan.out_len);
            Model::layer_forward(plan, params, &current, &mut pre);
            let post: Vec<f64> = pre.iter().map(|&v| plan.act.apply(v)).collect();
            if let Some(t) = recorded.as_deref_mut() {
                t.inputs.push(std::mem::take(&mut current));
                t.pres.push(pre);
            }
            current = post;
        }
        current
    }

    /// Backward pass through one part.
    ///
    /// `d_out` is the loss gradient with respect to the part's activated
    /// output; parameter gradients are accumulated into `grad` and the
    /// gradient with respect to the part's input is returned.
    pub(crate) fn backward_part(
        &self,
        params: &ParamVector,
        part: Part,
        trace: &Trace,
        d_out: &[f64],
        grad: &mut ParamVector,
    ) -> Vec<f64> {
        let plans = self.plans(part);
        debug_assert_eq!(trace.pres.len(), plans.len());
        let mut d_post = d_out.to_vec();
        for (li, plan) in plans.iter().enumerate().rev() {
            let pre = &trace.pres[li];
            let input = &trace.inputs[li];
            let d_pre: Vec<f64> = d_post
                .iter()
                .zip(pre)
                .map(|(&g, &p)| g * plan.act.deriv(p))
                .collect();

            let w = params.values()[plan.w.clone()].to_vec();
            let gvals = grad.values_mut();
            let (gw, gb) = {
                // Weight and bias spans are disjoint by construction.
                let (w_range, b_range) = (plan.w.clone(), plan.b.clone());
                debug_assert!(w_range.end <= b_range.start);
                let (head, tail) = gvals.split_at_mut(b_range.start);
                (&mut head[w_range], &mut tail[..b_range.len()])
            };

            let mut d_in = vec![0.0; plan.in_len];
            match plan.kind {
                PlanKind::Dense { in_dim, out_dim } => {
                    for o in 0..out_dim {
                        let g = d_pre[o];
                        if g != 0.0 {
                            axpy(g, input, &mut gw[o * in_dim..(o + 1) * in_dim]);
                            axpy(g, &w[o * in_dim..(o + 1) * in_dim], &mut d_in);
                        }
                        gb[o] += g;
                    }
                }
                PlanKind::Conv {
                    ic, ih, iw, oc, k, oh, ow,
                } => {
                    for f in 0..oc {
                        for y in 0..oh {
                            for x in 0..ow {
                                let g = d_pre[(f * oh + y) * ow + x];
                                if g == 0.0 {
                                    continue;
                                }
                                gb[f] += g;
                                for c in 0..ic {
                                    for dy in 0..k {
                                        for dx in 0..k {
                                            let wi = ((f * ic + c) * k + dy) * k + dx;
                                            let ii = (c * ih + y + dy) * iw + x + dx;
                                            gw[wi] += g * input[ii];
                                            d_in[ii] += g * w[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            d_post = d_in;
        }
        d_post
    }

    pub(crate) fn empty_trace() -> Trace {
        Trace {
            inputs: Vec::new(),
            pres: Vec::new(),
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len == self.input_len() {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "input has {len} values, model expects {}",
                self.input_len()
            )))
        }
    }

    /// Encoder features `h` for a batch of examples.
    pub fn encode_batch(&self, params: &ParamVector, batch: &[Example]) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        batch
            .iter()
            .map(|ex| {
                self.check_input(ex.pixels.len())?;
                Ok(self.forward_part(params, Part::Encoder, &ex.pixels, None))
            })
            .collect()
    }

    /// Projector embeddings `z` for a batch of feature vectors.
    pub fn project_batch(&self, params: &ParamVector, h: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        h.iter()
            .map(|row| {
                if row.len() != self.feat_dim() {
                    return Err(Error::LayoutMismatch(format!(
                        "feature row has {} values, projector expects {}",
                        row.len(),
                        self.feat_dim()
                    )));
                }
                Ok(self.forward_part(params, Part::Projector, row, None))
            })
            .collect()
    }
}

/// Encoder features for a batch: rows are `h` vectors.
pub fn encode(params: &ParamVector, arch: &ModelArch, batch: &[Example]) -> Result<Vec<Vec<f64>>> {
    Model::new(arch)?.encode_batch(params, batch)
}

/// Projector embeddings for already-encoded features: rows are `z` vectors.
pub fn project(params: &ParamVector, arch: &ModelArch, h: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Model::new(arch)?.project_batch(params, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::arch::{Activation, LayerSpec};
    use crate::numcore::{finite_diff_check, RngStream};

    fn tiny_arch() -> ModelArch {
        ModelArch {
            input_shape: (1, 3, 3),
            encoder: vec![
                LayerSpec::Dense {
                    units: 5,
                    act: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 4,
                    act: Activation::Linear,
                },
            ],
            projector: vec![
                LayerSpec::Dense {
                    units: 4,
                    act: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 3,
                    act: Activation::Linear,
                },
            ],
        }
    }

    fn example(pixels: Vec<f64>, shape: crate::data::Shape) -> Example {
        Example::new(pixels, shape, None).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let arch = tiny_arch();
        let model = Model::new(&arch).unwrap();
        let params = ParamVector::zeros(model.layout());
        let batch = vec![example(vec![0.5; 9], (1, 3, 3))];
        let h = encode(&params, &arch, &batch).unwrap();
        assert_eq!(h, vec![vec![0.0; 4]]);
    }

    #[test]
    fn duplicated_input_rows_encode_identically() {
        let arch = tiny_arch();
        let model = Model::new(&arch).unwrap();
        let params = model.init_params(RngStream::new(3, 1));
        let x = example((0..9).map(|i| i as f64 / 9.0).collect(), (1, 3, 3));
        let h = encode(&params, &arch, &[x.clone(), x.clone(), x]).unwrap();
        assert_eq!(h[0], h[1]);
        assert_eq!(h[1], h[2]);
    }

    #[test]
    fn encode_is_bitwise_stable() {
        let arch = tiny_arch();
        let model = Model::new(&arch).unwrap();
        let params = model.init_params(RngStream::new(4, 0));
        let x = example((0..9).map(|i| (i as f64 * 0.7).fract()).collect(), (1, 3, 3));
        let a = encode(&params, &arch, std::slice::from_ref(&x)).unwrap();
        let b = encode(&params, &arch, std::slice::from_ref(&x)).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (va, vb) in ra.iter().zip(rb) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }

    #[test]
    fn encode_rejects_mismatched_params_and_input() {
        let arch = tiny_arch();
        let other = Model::new(&ModelArch::default_mlp((1, 8, 8))).unwrap();
        let params = ParamVector::zeros(other.layout());
        let x = example(vec![0.1; 9], (1, 3, 3));
        assert!(encode(&params, &arch, std::slice::from_ref(&x)).is_err());

        let model = Model::new(&arch).unwrap();
        let good = ParamVector::zeros(model.layout());
        let bad_input = example(vec![0.1; 16], (1, 4, 4));
        assert!(encode(&good, &arch, &[bad_input]).is_err());
    }

    #[test]
    fn identity_projector_returns_h() {
        // Square, linear, identity-initialized projector: z == h.
        let arch = ModelArch {
            input_shape: (1, 3, 3),
            encoder: vec![LayerSpec::Dense {
                units: 4,
                act: Activation::Linear,
            }],
            projector: vec![
                LayerSpec::Dense {
                    units: 4,
                    act: Activation::Linear,
                },
                LayerSpec::Dense {
                    units: 4,
                    act: Activation::Linear,
                },
            ],
        };
        let model = Model::new(&arch).unwrap();
        let mut params = model.init_params(RngStream::new(8, 0));
        for name in ["proj0.w", "proj1.w"] {
            let w = params.tensor_mut(name).unwrap();
            w.fill(0.0);
            for i in 0..4 {
                w[i * 4 + i] = 1.0;
            }
        }
        let h = vec![vec![0.3, -0.7, 1.1, 0.0], vec![-2.0, 0.5, 0.25, 9.0]];
        let z = project(&params, &arch, &h).unwrap();
        assert_eq!(z, h);
    }

    #[test]
    fn conv_forward_matches_hand_computation() {
        let arch = ModelArch {
            input_shape: (1, 3, 3),
            encoder: vec![
                LayerSpec::Conv {
                    filters: 1,
                    kernel: 2,
                    act: Activation::Linear,
                },
                LayerSpec::Dense {
                    units: 4,
                    act: Activation::Linear,
                },
            ],
            projector: vec![LayerSpec::Dense {
                units: 2,
                act: Activation::Linear,
            }],
        };
        let model = Model::new(&arch).unwrap();
        let mut params = ParamVector::zeros(model.layout());
        // Kernel [[1,2],[3,4]], bias 0.5; dense = identity on first 4 outputs.
        params
            .tensor_mut("enc0.w")
            .unwrap()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        params.tensor_mut("enc0.b").unwrap()[0] = 0.5;
        let dense = params.tensor_mut("enc1.w").unwrap();
        for i in 0..4 {
            dense[i * 4 + i] = 1.0;
        }
        // Input counts 1..9 row-major.
        let x = example((1..=9).map(|v| v as f64 / 10.0).collect(), (1, 3, 3));
        let h = model.encode_batch(&params, &[x]).unwrap();
        // Valid 2x2 conv on [[.1,.2,.3],[.4,.5,.6],[.7,.8,.9]]:
        // out(y,x) = .5 + 1*i(y,x) + 2*i(y,x+1) + 3*i(y+1,x) + 4*i(y+1,x+1)
        let expect = [
            0.5 + 0.1 + 0.4 + 1.2 + 2.0,
            0.5 + 0.2 + 0.6 + 1.5 + 2.4,
            0.5 + 0.4 + 1.0 + 2.1 + 3.2,
            0.5 + 0.5 + 1.2 + 2.4 + 3.6,
        ];
        for (got, want) in h[0].iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    /// Scalar head for gradient checking: sum of u·z over the batch.
    fn weighted_output_sum(model: &Model, params: &ParamVector, x: &[f64], u: &[f64]) -> f64 {
        let h = model.forward_part(params, Part::Encoder, x, None);
        let z = model.forward_part(params, Part::Projector, &h, None);
        dot(u, &z)
    }

    #[test]
    fn full_chain_gradient_passes_finite_diff() {
        for arch in [
            tiny_arch(),
            // Conv variant to cover the conv backward path.
            ModelArch {
                input_shape: (2, 4, 4),
                encoder: vec![
                    LayerSpec::Conv {
                        filters: 3,
                        kernel: 2,
                        act: Activation::Relu,
                    },
                    LayerSpec::Dense {
                        units: 5,
                        act: Activation::Linear,
                    },
                ],
                projector: vec![LayerSpec::Dense {
                    units: 3,
                    act: Activation::Linear,
                }],
            },
        ] {
            let model = Model::new(&arch).unwrap();
            let params = model.init_params(RngStream::new(21, 7));
            let mut rng = RngStream::new(21, 8).rng();
            use rand::Rng;
            let x: Vec<f64> = (0..model.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let u: Vec<f64> = (0..model.proj_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();

            // Analytic gradient via the backward chain.
            let mut enc_trace = Model::empty_trace();
            let mut proj_trace = Model::empty_trace();
            let h = model.forward_part(&params, Part::Encoder, &x, Some(&mut enc_trace));
            let _z = model.forward_part(&params, Part::Projector, &h, Some(&mut proj_trace));
            let mut grad = ParamVector::zeros(model.layout());
            let d_h = model.backward_part(&params, Part::Projector, &proj_trace, &u, &mut grad);
            model.backward_part(&params, Part::Encoder, &enc_trace, &d_h, &mut grad);

            let err = finite_diff_check(
                |p| Ok(weighted_output_sum(&model, p, &x, &u)),
                &params,
                &grad,
                1e-5,
                64,
                &mut RngStream::new(21, 9).rng(),
            )
            .unwrap();
            assert!(err < 1e-4, "finite-diff error {err}");
        }
    }
}

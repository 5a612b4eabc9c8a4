//! The backdoor injection objective.
//!
//! All terms are mean cosine similarities over encoder features `h`, with the
//! frozen global snapshot `G` supplying constant targets:
//!
//! ```text
//! L1 = - sum_{i,j,x} cos( L(x ⊕ e_i), L(a_ij) ) / (|D_s| * sum_i r_i)
//! L2 = - sum_{i,j}   cos( G(a_ij),    L(a_ij) ) / sum_i r_i
//! L3 = - sum_{x}     cos( G(x),       L(x)    ) / |D_s|
//! loss = λ1 L1 + λ2 L2 + λ3 L3
//! ```
//!
//! L1 drags trigger-marked inputs onto the reference (target-class) features,
//! while L2/L3 anchor references and clean data to the global encoder so the
//! poisoned update still looks useful.

use crate::attack::TargetSpec;
use crate::contrastive::{Model, ModelArch, Part, Trace};
use crate::data::{embed_trigger, Dataset, Example};
use crate::error::{Error, Result};
use crate::numcore::{cosine_with_grads, l2_norm_slice, GradResult, ParamVector};

/// Frozen encoder outputs of the global snapshot, computed once per round
/// and reused across local epochs and minibatches.
pub(crate) struct GlobalFeatures {
    /// `[target][reference]` → G(a_ij).
    pub refs: Vec<Vec<Vec<f64>>>,
    /// Aligned with the clean batch → G(x).
    pub clean: Vec<Vec<f64>>,
}

fn named_feature(h: Vec<f64>, what: &dyn Fn() -> String) -> Result<Vec<f64>> {
    if l2_norm_slice(&h) < 1e-12 {
        Err(Error::Degenerate(format!("{} has zero-norm features", what())))
    } else {
        Ok(h)
    }
}

impl GlobalFeatures {
    pub(crate) fn compute(
        model: &Model,
        global: &ParamVector,
        batch: &[&Example],
        targets: &[TargetSpec],
    ) -> Result<GlobalFeatures> {
        let refs = targets
            .iter()
            .map(|t| {
                t.references
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let h = model.forward_part(global, Part::Encoder, &a.pixels, None);
                        named_feature(h, &|| {
                            format!("global encoder: reference {j} of target task {}", t.task_id)
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let clean = batch
            .iter()
            .enumerate()
            .map(|(x, ex)| {
                let h = model.forward_part(global, Part::Encoder, &ex.pixels, None);
                named_feature(h, &|| format!("global encoder: clean example {x}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GlobalFeatures { refs, clean })
    }

    /// Restrict the clean features to a minibatch (by dataset index) while
    /// keeping the reference features, which every batch shares.
    pub(crate) fn select(&self, idxs: &[usize]) -> GlobalFeatures {
        GlobalFeatures {
            refs: self.refs.clone(),
            clean: idxs.iter().map(|&i| self.clean[i].clone()).collect(),
        }
    }
}

/// One locally forwarded input: its trace, feature vector, and accumulated
/// feature gradient.
struct Fwd {
    trace: Trace,
    h: Vec<f64>,
    dh: Vec<f64>,
}

fn forward_local(
    model: &Model,
    local: &ParamVector,
    pixels: &[f64],
    what: &dyn Fn() -> String,
) -> Result<Fwd> {
    let mut trace = Model::empty_trace();
    let h = model.forward_part(local, Part::Encoder, pixels, Some(&mut trace));
    let h = named_feature(h, what)?;
    let dh = vec![0.0; h.len()];
    Ok(Fwd { trace, h, dh })
}

/// Loss and gradient (w.r.t. `local` only) over one minibatch of clean
/// examples, with `globals.clean` aligned to `batch`.
///
/// Terms with a zero λ are skipped entirely, including their forward passes.
pub(crate) fn backdoor_batch_grad(
    model: &Model,
    local: &ParamVector,
    batch: &[&Example],
    targets: &[TargetSpec],
    globals: &GlobalFeatures,
    lambdas: (f64, f64, f64),
) -> Result<GradResult> {
    let (l1, l2, l3) = lambdas;
    for (name, l) in [("lambda1", l1), ("lambda2", l2), ("lambda3", l3)] {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::Config(format!("backdoor loss: {name} = {l}")));
        }
    }
    if batch.is_empty() {
        return Err(Error::Config("backdoor loss: empty batch".to_string()));
    }
    if targets.is_empty() {
        return Err(Error::Config("backdoor loss: no targets".to_string()));
    }
    debug_assert_eq!(globals.clean.len(), batch.len());
    debug_assert_eq!(globals.refs.len(), targets.len());

    let b = batch.len() as f64;
    let r_total = targets.iter().map(|t| t.r()).sum::<usize>() as f64;
    let mut grad = ParamVector::zeros(model.layout());
    let mut loss = 0.0;

    // References participate in both L1 and L2: forward once, accumulate
    // feature gradients across both terms, backprop at the end.
    let mut refs: Vec<Vec<Fwd>> = Vec::new();
    if l1 > 0.0 || l2 > 0.0 {
        for t in targets {
            let mut per_target = Vec::with_capacity(t.r());
            for (j, a) in t.references.iter().enumerate() {
                per_target.push(forward_local(model, local, &a.pixels, &|| {
                    format!("local encoder: reference {j} of target task {}", t.task_id)
                })?);
            }
            refs.push(per_target);
        }
    }

    // L1: triggered batch examples vs same-target references. A triggered
    // input appears only here, so it is backpropped as soon as its feature
    // gradient is complete.
    if l1 > 0.0 {
        let coeff = l1 / (b * r_total);
        for (ti, t) in targets.iter().enumerate() {
            for (x, ex) in batch.iter().enumerate() {
                let marked = embed_trigger(ex, &t.trigger)?;
                let mut fwd = forward_local(model, local, &marked.pixels, &|| {
                    format!(
                        "local encoder: example {x} with target-task-{} trigger",
                        t.task_id
                    )
                })?;
                for rf in &mut refs[ti] {
                    let (cos, du, dv) = cosine_with_grads(&fwd.h, &rf.h)?;
                    loss -= coeff * cos;
                    for (g, d) in fwd.dh.iter_mut().zip(&du) {
                        *g -= coeff * d;
                    }
                    for (g, d) in rf.dh.iter_mut().zip(&dv) {
                        *g -= coeff * d;
                    }
                }
                model.backward_part(local, Part::Encoder, &fwd.trace, &fwd.dh, &mut grad);
            }
        }
    }

    // L2: anchor local reference features to the frozen global ones.
    if l2 > 0.0 {
        let coeff = l2 / r_total;
        for (ti, per_target) in refs.iter_mut().enumerate() {
            for (j, rf) in per_target.iter_mut().enumerate() {
                let (cos, _dg, dv) = cosine_with_grads(&globals.refs[ti][j], &rf.h)?;
                loss -= coeff * cos;
                for (g, d) in rf.dh.iter_mut().zip(&dv) {
                    *g -= coeff * d;
                }
            }
        }
    }
    for per_target in &refs {
        for rf in per_target {
            model.backward_part(local, Part::Encoder, &rf.trace, &rf.dh, &mut grad);
        }
    }

    // L3: anchor local clean features to the frozen global ones.
    if l3 > 0.0 {
        let coeff = l3 / b;
        for (x, ex) in batch.iter().enumerate() {
            let mut fwd = forward_local(model, local, &ex.pixels, &|| {
                format!("local encoder: clean example {x}")
            })?;
            let (cos, _dg, dv) = cosine_with_grads(&globals.clean[x], &fwd.h)?;
            loss -= coeff * cos;
            for (g, d) in fwd.dh.iter_mut().zip(&dv) {
                *g -= coeff * d;
            }
            model.backward_part(local, Part::Encoder, &fwd.trace, &fwd.dh, &mut grad);
        }
    }

    GradResult::new(loss, grad)
}

/// The combined backdoor loss over all of `d_s`, with gradients with respect
/// to `local` only; `global_snapshot` is treated as a constant.
pub fn backdoor_loss(
    local: &ParamVector,
    global_snapshot: &ParamVector,
    arch: &ModelArch,
    d_s: &Dataset,
    targets: &[TargetSpec],
    lambdas: (f64, f64, f64),
) -> Result<GradResult> {
    let model = Model::new(arch)?;
    model.check_params(local)?;
    model.check_params(global_snapshot)?;
    if d_s.is_empty() {
        return Err(Error::Config("backdoor loss: empty attacker dataset".to_string()));
    }
    for t in targets {
        t.validate()?;
    }
    let batch: Vec<&Example> = d_s.examples().iter().collect();
    let globals = GlobalFeatures::compute(&model, global_snapshot, &batch, targets)?;
    backdoor_batch_grad(&model, local, &batch, targets, &globals, lambdas)
}

//! Attack-success rate and the cosine-similarity CDF diagnostics.

use crate::contrastive::{Model, ModelArch};
use crate::data::{embed_trigger, Dataset, Example, Trigger};
use crate::error::{Error, Result};
use crate::eval::{LinearProbe, ProbeConfig};
use crate::numcore::{cosine_sim, ParamVector};

/// Fraction of trigger-embedded test images the frozen encoder + probe
/// pipeline classifies as `y_target`.
///
/// The denominator includes images whose true label already is `y_target`
/// unless `cfg.asr_excludes_target_class` is set.
pub fn attack_success_rate(
    params: &ParamVector,
    arch: &ModelArch,
    probe: &LinearProbe,
    test: &Dataset,
    trigger: &Trigger,
    y_target: u16,
    cfg: &ProbeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let model = Model::new(arch)?;
    let keep: Vec<&Example> = if cfg.asr_excludes_target_class {
        test.examples()
            .iter()
            .filter(|e| e.label != Some(y_target))
            .collect()
    } else {
        test.examples().iter().collect()
    };
    if keep.is_empty() {
        return Err(Error::Config(
            "attack_success_rate: no test images left in the denominator".to_string(),
        ));
    }
    let mut hits = 0usize;
    for chunk in keep.chunks(cfg.eval_batch) {
        let marked: Vec<Example> = chunk
            .iter()
            .map(|e| embed_trigger(e, trigger))
            .collect::<Result<_>>()?;
        for h in model.encode_batch(params, &marked)? {
            if probe.predict(&h)? == y_target {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / keep.len() as f64)
}

/// Empirical CDF of cos(h(reference), h(x ⊕ e)) over the probe set — or of
/// clean similarities when `trigger` is `None`.
///
/// Points are sorted by similarity; the cumulative fraction ends at 1.0.
pub fn cosine_cdf(
    params: &ParamVector,
    arch: &ModelArch,
    reference: &Example,
    probe_set: &[Example],
    trigger: Option<&Trigger>,
) -> Result<Vec<(f64, f64)>> {
    if probe_set.is_empty() {
        return Err(Error::Config("cosine_cdf: empty probe set".to_string()));
    }
    let model = Model::new(arch)?;
    let h_ref = model
        .encode_batch(params, std::slice::from_ref(reference))?
        .pop()
        .expect("one reference feature");
    let mut sims = Vec::with_capacity(probe_set.len());
    for x in probe_set {
        let h = match trigger {
            Some(e) => {
                let marked = embed_trigger(x, e)?;
                model.encode_batch(params, std::slice::from_ref(&marked))?
            }
            None => model.encode_batch(params, std::slice::from_ref(x))?,
        };
        sims.push(cosine_sim(&h_ref, &h[0])?);
    }
    sims.sort_by(|a, b| a.total_cmp(b));
    let n = sims.len() as f64;
    Ok(sims
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, (i + 1) as f64 / n))
        .collect())
}

/// Median similarity of a CDF produced by [`cosine_cdf`].
pub fn cdf_median(cdf: &[(f64, f64)]) -> Option<f64> {
    if cdf.is_empty() {
        return None;
    }
    let n = cdf.len();
    if n % 2 == 1 {
        Some(cdf[n / 2].0)
    } else {
        Some(0.5 * (cdf[n / 2 - 1].0 + cdf[n / 2].0))
    }
}

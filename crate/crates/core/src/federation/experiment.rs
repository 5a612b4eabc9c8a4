//! Round execution and whole-experiment runs.
//!
//! A round selects clients, trains each one locally from the same global
//! snapshot, folds the submitted deltas into per-client histories, applies
//! the configured defense, and aggregates. Client training is
//! embarrassingly parallel and every client draws from an RNG stream keyed
//! by `(seed, TRAIN, round, client_id)`, so results are bitwise identical
//! at any thread count.
//!
//! An experiment is a benign warm-up phase followed by an attack phase in
//! which the schedule decides when attackers participate. Evaluation
//! (weighted-KNN monitoring plus per-target linear probe, accuracy, and
//! attack success rate) runs on a configurable round cadence and always on
//! the final round.

use std::time::Instant;

use rayon::prelude::*;

use crate::attack::{
    malicious_local_train, scale_update, AttackConfig, AttackerRoster, TargetSpec,
};
use crate::contrastive::{benign_local_train, ContrastiveConfig, Model, ModelArch};
use crate::data::Dataset;
use crate::defense::{apply_defense, DefenseSpec};
use crate::error::{Error, Result};
use crate::eval::{
    attack_success_rate, cosine_cdf, fit_probe, knn_eval, labeled_features, EvalReport,
    LinearProbe, ProbeConfig,
};
use crate::numcore::{streams, ParamVector, RngStream};

use super::aggregate::aggregate_received;
use super::select::select_clients;
use super::{FederationConfig, FederationState, Phase, ReceivedUpdate, RoundRecord};

/// Labeled data used for the weighted-KNN monitor: queries are scored
/// against the feature bank every evaluation round.
#[derive(Debug, Clone)]
pub struct MonitorSpec {
    pub bank: Dataset,
    pub queries: Dataset,
}

/// One downstream classification task, used for linear probes and attack
/// success rates. [`TargetSpec::task_id`] indexes into the experiment's
/// task list.
#[derive(Debug, Clone)]
pub struct DownstreamTask {
    pub train: Dataset,
    pub test: Dataset,
}

/// Optional warm-up early stopping on a KNN-accuracy plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    /// Plateau window, in rounds.
    pub window: usize,
    /// Minimum accuracy gain over the window that counts as progress.
    pub tolerance: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        // 0.2 accuracy points over 20 rounds.
        EarlyStop {
            window: 20,
            tolerance: 0.002,
        }
    }
}

/// Everything a run needs: configurations, per-client shards, the attacker
/// roster and its data, and the evaluation fixtures.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub fed: FederationConfig,
    pub arch: ModelArch,
    pub contrastive: ContrastiveConfig,
    pub attack: AttackConfig,
    pub defense: DefenseSpec,
    pub probe: ProbeConfig,
    /// Unlabeled-use training shards, one per client id.
    pub shards: Vec<Dataset>,
    /// Attacker-owned data `D_s`, one per attacker id.
    pub attacker_data: Vec<Dataset>,
    pub roster: Option<AttackerRoster>,
    /// Targets measured at evaluation time. Usually the roster's targets;
    /// baselines monitor the same targets to report chance-level rates.
    pub monitor_targets: Vec<TargetSpec>,
    pub downstream: Vec<DownstreamTask>,
    pub monitor: MonitorSpec,
    /// Evaluate every this many rounds (the final round is always
    /// evaluated).
    pub eval_every: usize,
    pub early_stop: Option<EarlyStop>,
    /// Worker threads for client training; `None` uses the ambient pool.
    pub threads: Option<usize>,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.fed.validate()?;
        self.contrastive.validate()?;
        self.attack.validate()?;
        self.defense.validate()?;
        self.probe.validate()?;
        Model::new(&self.arch)?;
        if self.shards.len() != self.fed.n_clients {
            return Err(Error::Config(format!(
                "{} shards for {} clients",
                self.shards.len(),
                self.fed.n_clients
            )));
        }
        if let Some(id) = self.shards.iter().position(Dataset::is_empty) {
            return Err(Error::Config(format!("client {id} has an empty shard")));
        }
        match (&self.roster, self.fed.n_attackers) {
            (None, 0) => {}
            (None, n) => {
                return Err(Error::Config(format!("{n} attackers but no roster")));
            }
            (Some(r), n) => {
                if r.n_attackers() != n {
                    return Err(Error::Config(format!(
                        "roster covers {} attackers, federation declares {n}",
                        r.n_attackers()
                    )));
                }
            }
        }
        if self.attacker_data.len() != self.fed.n_attackers {
            return Err(Error::Config(format!(
                "{} attacker datasets for {} attackers",
                self.attacker_data.len(),
                self.fed.n_attackers
            )));
        }
        if let Some(id) = self.attacker_data.iter().position(Dataset::is_empty) {
            return Err(Error::Config(format!("attacker {id} has an empty dataset")));
        }
        let all_targets: Vec<&TargetSpec> = self
            .monitor_targets
            .iter()
            .chain(self.roster.iter().flat_map(|r| r.all_targets()))
            .collect();
        for t in all_targets {
            t.validate()?;
            if t.task_id >= self.downstream.len() {
                return Err(Error::Config(format!(
                    "target task id {} out of range ({} downstream tasks)",
                    t.task_id,
                    self.downstream.len()
                )));
            }
        }
        for (i, task) in self.downstream.iter().enumerate() {
            if task.train.n_classes().is_none() || task.test.n_classes().is_none() {
                return Err(Error::Config(format!("downstream task {i} is unlabeled")));
            }
            if task.train.is_empty() || task.test.is_empty() {
                return Err(Error::Config(format!("downstream task {i} has empty splits")));
            }
        }
        if self.monitor.bank.n_classes().is_none() || self.monitor.queries.n_classes().is_none() {
            return Err(Error::Config("KNN monitor datasets must be labeled".to_string()));
        }
        if self.monitor.bank.is_empty() || self.monitor.queries.is_empty() {
            return Err(Error::Config("KNN monitor datasets must be non-empty".to_string()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".to_string()));
        }
        if let Some(es) = &self.early_stop {
            if es.window == 0 || !es.tolerance.is_finite() || es.tolerance < 0.0 {
                return Err(Error::Config(format!(
                    "early stop window {} / tolerance {} invalid",
                    es.window, es.tolerance
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Execute one round: select, train, absorb histories, defend, aggregate,
/// and (optionally) evaluate the post-aggregation encoder.
///
/// `attack_round` is the 0-based round index within the attack phase; it
/// feeds the schedule and is ignored during warm-up. Any client failure
/// aborts the whole round — no partial aggregation.
pub fn run_round(
    exp: &Experiment,
    mut state: FederationState,
    phase: Phase,
    attack_round: usize,
    eval: bool,
) -> Result<(FederationState, RoundRecord)> {
    let started = Instant::now();
    let t = state.round;
    let seed = exp.fed.seed;

    let schedule = match phase {
        Phase::Pretrain => None,
        Phase::Attack => Some(exp.attack.schedule),
    };
    let frame_t = match phase {
        Phase::Pretrain => t,
        Phase::Attack => attack_round,
    };
    let selected = select_clients(
        frame_t,
        &exp.fed,
        schedule,
        RngStream::derived(seed, &[streams::SELECT, t as u64]),
    )?;
    let attacking = exp.fed.n_attackers > 0
        && schedule.map(|s| s.is_attack_round(frame_t)).unwrap_or(false);

    let updates = selected
        .par_iter()
        .map(|&id| {
            let stream = RngStream::derived(seed, &[streams::TRAIN, t as u64, id as u64]);
            if attacking && id < exp.fed.n_attackers {
                let roster = exp.roster.as_ref().expect("validated: roster present");
                let update = malicious_local_train(
                    &state.global,
                    &exp.arch,
                    &exp.attacker_data[id],
                    roster.entry(id),
                    &exp.attack,
                    stream,
                    id,
                    t,
                )?;
                if exp.attack.schedule.scales() {
                    scale_update(update, exp.attack.gamma)
                } else {
                    Ok(update)
                }
            } else {
                benign_local_train(
                    &state.global,
                    &exp.arch,
                    &exp.shards[id],
                    &exp.contrastive,
                    stream,
                    id,
                    t,
                )
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let update_norms: Vec<f64> = updates.iter().map(|u| u.l2).collect();

    // Histories absorb the round's deltas before the defense looks at them,
    // so similarity always reflects everything submitted so far.
    for u in &updates {
        state.histories[u.client_id].absorb(&u.delta)?;
    }
    let received: Vec<ReceivedUpdate> = updates.iter().map(|u| u.strip()).collect();
    let histories: Vec<Option<&ParamVector>> = selected
        .iter()
        .map(|&id| state.histories[id].sum.as_ref())
        .collect();
    let (transformed, weights) = apply_defense(
        &exp.defense,
        &received,
        &histories,
        RngStream::derived(seed, &[streams::DEFENSE, t as u64]),
    )?;
    state.global = aggregate_received(&state.global, &transformed, exp.fed.server_lr, Some(&weights))?;
    state.round += 1;

    let (knn_acc, asr, main_acc) = if eval {
        let (knn, asr, main) = evaluate(exp, &state.global)?;
        (Some(knn), Some(asr), Some(main))
    } else {
        (None, None, None)
    };

    let record = RoundRecord {
        round: t,
        phase,
        attack_round: attacking,
        selected,
        weights,
        update_norms,
        knn_acc,
        asr,
        main_acc,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((state, record))
}

/// KNN accuracy plus per-monitor-target ASR and probe accuracy.
fn evaluate(exp: &Experiment, params: &ParamVector) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let knn = knn_eval(
        params,
        &exp.arch,
        &exp.monitor.bank,
        &exp.monitor.queries,
        exp.probe.knn_k,
        exp.probe.knn_tau,
    )?;
    let model = Model::new(&exp.arch)?;
    let mut per_task: Vec<Option<(LinearProbe, f64)>> = vec![None; exp.downstream.len()];
    let mut asr = Vec::with_capacity(exp.monitor_targets.len());
    let mut main = Vec::with_capacity(exp.monitor_targets.len());
    for target in &exp.monitor_targets {
        if per_task[target.task_id].is_none() {
            let task = &exp.downstream[target.task_id];
            let probe = fit_probe(params, &exp.arch, &task.train, &exp.probe)?;
            let (feats, labels) =
                labeled_features(&model, params, &task.test, exp.probe.eval_batch, "test split")?;
            let acc = probe.accuracy(&feats, &labels)?;
            per_task[target.task_id] = Some((probe, acc));
        }
        let (probe, acc) = per_task[target.task_id]
            .as_ref()
            .expect("probe fitted above");
        main.push(*acc);
        asr.push(attack_success_rate(
            params,
            &exp.arch,
            probe,
            &exp.downstream[target.task_id].test,
            &target.trigger,
            target.target_class,
            &exp.probe,
        )?);
    }
    Ok((knn, asr, main))
}

/// Run warm-up then the attack phase, returning the final state and one
/// record per executed round.
pub fn run_experiment(exp: &Experiment) -> Result<(FederationState, Vec<RoundRecord>)> {
    exp.validate()?;
    match exp.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| drive(exp)),
        None => drive(exp),
    }
}

fn drive(exp: &Experiment) -> Result<(FederationState, Vec<RoundRecord>)> {
    let model = Model::new(&exp.arch)?;
    let init = model.init_params(RngStream::derived(exp.fed.seed, &[streams::INIT]));
    let mut state = FederationState::new(init, exp.fed.n_clients);
    let mut records: Vec<RoundRecord> = Vec::new();
    let mut knn_trace: Vec<(usize, f64)> = Vec::new();

    for p in 0..exp.fed.pretrain_rounds {
        let last_overall = p + 1 == exp.fed.pretrain_rounds && exp.fed.rounds == 0;
        let eval = (state.round + 1) % exp.eval_every == 0 || last_overall;
        let (next, record) = run_round(exp, state, Phase::Pretrain, 0, eval)?;
        state = next;
        if let Some(knn) = record.knn_acc {
            knn_trace.push((record.round, knn));
        }
        records.push(record);
        if let Some(es) = &exp.early_stop {
            if plateaued(&knn_trace, es) {
                break;
            }
        }
    }
    for a in 0..exp.fed.rounds {
        let last_overall = a + 1 == exp.fed.rounds;
        let eval = (state.round + 1) % exp.eval_every == 0 || last_overall;
        let (next, record) = run_round(exp, state, Phase::Attack, a, eval)?;
        state = next;
        records.push(record);
    }
    Ok((state, records))
}

/// True when the best KNN accuracy gained less than `tolerance` over the
/// last `window` rounds (needs at least one measurement that old).
fn plateaued(trace: &[(usize, f64)], es: &EarlyStop) -> bool {
    let Some(&(now, _)) = trace.last() else {
        return false;
    };
    let Some(cutoff) = now.checked_sub(es.window) else {
        return false;
    };
    let mut best_old = f64::NEG_INFINITY;
    let mut best = f64::NEG_INFINITY;
    for &(round, acc) in trace {
        if round <= cutoff {
            best_old = best_old.max(acc);
        }
        best = best.max(acc);
    }
    best_old.is_finite() && best - best_old <= es.tolerance
}

/// Final per-target evaluation: probe accuracy, ASR, the shared KNN score,
/// and triggered/clean cosine CDFs against the first reference example.
pub fn final_reports(exp: &Experiment, state: &FederationState) -> Result<Vec<EvalReport>> {
    let params = &state.global;
    let knn = knn_eval(
        params,
        &exp.arch,
        &exp.monitor.bank,
        &exp.monitor.queries,
        exp.probe.knn_k,
        exp.probe.knn_tau,
    )?;
    let model = Model::new(&exp.arch)?;
    let mut per_task: Vec<Option<(LinearProbe, f64)>> = vec![None; exp.downstream.len()];
    let mut reports = Vec::with_capacity(exp.monitor_targets.len());
    for target in &exp.monitor_targets {
        let task = &exp.downstream[target.task_id];
        if per_task[target.task_id].is_none() {
            let probe = fit_probe(params, &exp.arch, &task.train, &exp.probe)?;
            let (feats, labels) =
                labeled_features(&model, params, &task.test, exp.probe.eval_batch, "test split")?;
            let acc = probe.accuracy(&feats, &labels)?;
            per_task[target.task_id] = Some((probe, acc));
        }
        let (probe, acc) = per_task[target.task_id]
            .as_ref()
            .expect("probe fitted above");
        let asr = attack_success_rate(
            params,
            &exp.arch,
            probe,
            &task.test,
            &target.trigger,
            target.target_class,
            &exp.probe,
        )?;
        let reference = &target.references[0];
        let report = EvalReport {
            task_id: target.task_id,
            main_acc: *acc,
            asr,
            knn_acc: knn,
            cdf_triggered: cosine_cdf(
                params,
                &exp.arch,
                reference,
                task.test.examples(),
                Some(&target.trigger),
            )?,
            cdf_clean: cosine_cdf(params, &exp.arch, reference, task.test.examples(), None)?,
        };
        report.validate()?;
        reports.push(report);
    }
    Ok(reports)
}

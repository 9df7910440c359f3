//! Training loop: total-loss composition, Adam, per-epoch logging, NaN
//! guards, and checkpoint cadence. Deterministic for a fixed seed when every
//! context and decision comes from fixtures.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, Gradients, Tape};
use crate::corpus::{GoalDefinition, ProjectRecord};
use crate::country::CountryContext;
use crate::decision::DecisionVector;
use crate::error::{Error, Result};
use crate::model::{Ablation, BatchOptions, Model, PreparedRecord, Prediction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda_1: f64,
    pub lambda_2: f64,
    /// Token sampling threshold for positive-sample construction.
    pub tau: f64,
    pub gumbel_temperature: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub prediction_threshold: f64,
    /// Checkpoint every N epochs when a checkpoint dir is set; 0 means only
    /// the final model is written.
    pub checkpoint_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            epochs: 100,
            lambda_1: 0.1,
            lambda_2: 0.1,
            tau: 0.01,
            gumbel_temperature: 1.0,
            batch_size: 32,
            seed: 42,
            prediction_threshold: 0.5,
            checkpoint_every: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.lambda_1 < 0.0 || self.lambda_2 < 0.0 {
            return Err(Error::Config("lambdas must be nonnegative".into()));
        }
        if !(0.0 < self.prediction_threshold && self.prediction_threshold < 1.0) {
            return Err(Error::Config(format!(
                "prediction_threshold must lie in (0,1), got {}",
                self.prediction_threshold
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.tau < 0.0 {
            return Err(Error::Config("tau must be nonnegative".into()));
        }
        if self.gumbel_temperature <= 0.0 {
            return Err(Error::Config("gumbel_temperature must be positive".into()));
        }
        Ok(())
    }
}

/// L_total = L_CE + λ1·L_G + λ2·(L_C + L_D + L_U).
pub fn total_loss(
    l_ce: f64,
    l_g: f64,
    l_c: f64,
    l_d: f64,
    l_u: f64,
    lambda_1: f64,
    lambda_2: f64,
) -> Result<f64> {
    for (name, v) in [
        ("l_ce", l_ce),
        ("l_g", l_g),
        ("l_c", l_c),
        ("l_d", l_d),
        ("l_u", l_u),
        ("lambda_1", lambda_1),
        ("lambda_2", lambda_2),
    ] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{name} is not finite: {v}")));
        }
    }
    Ok(l_ce + lambda_1 * l_g + lambda_2 * (l_c + l_d + l_u))
}

/// Uniform record seed mixing. The same triple always yields the same
/// sampling noise regardless of batch placement or ablation.
pub fn mix_seed(global: u64, epoch: u64, record: u64) -> u64 {
    let mut z = global
        .wrapping_add(epoch.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(record.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Adam over named tensors. State is keyed by parameter name so it survives
/// nothing (fresh per run) but stays deterministic.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(config: &TrainConfig) -> Self {
        Adam {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_epsilon,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update. Tensors absent from the gradients get exact zeros, so a
    /// module skipped by ablation and a module scaled by λ=0 step alike.
    pub fn step(
        &mut self,
        params: Vec<(String, &mut Array2<f64>)>,
        bindings: &Bindings,
        grads: &Gradients,
    ) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params {
            let g = grads.get_or_zeros(bindings.get(&name), p.dim());
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(p.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(p.dim()));
            for ((pe, ge), (me, ve)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *me = self.beta1 * *me + (1.0 - self.beta1) * ge;
                *ve = self.beta2 * *ve + (1.0 - self.beta2) * ge * ge;
                let m_hat = *me / bc1;
                let v_hat = *ve / bc2;
                *pe -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                if !pe.is_finite() {
                    return Err(Error::Numeric(format!(
                        "parameter {name} became non-finite during the update"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One training record with its resolved context and decision.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub record: ProjectRecord,
    pub context: CountryContext,
    pub decision: DecisionVector,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub ablation: Ablation,
    /// JSONL epoch log destination.
    pub log_path: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

/// Mean loss components for one epoch, averaged over records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_ce: f64,
    pub l_g: f64,
    pub l_c: f64,
    pub l_d: f64,
    pub l_u: f64,
    pub l_total: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Path and content hash of the final checkpoint, when one was written.
    pub final_checkpoint: Option<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

/// Full training run. Mutates `model` in place.
pub fn train(
    model: &mut Model,
    items: &[TrainItem],
    goal_defs: &[GoalDefinition],
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainReport> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::EmptyInput("no training records".into()));
    }
    for item in items {
        if item.record.sdg_labels.is_none() {
            return Err(Error::Label(format!(
                "training record {} has no labels",
                item.record.id
            )));
        }
    }
    let prepared: Vec<PreparedRecord> = items
        .iter()
        .map(|it| model.prepare(&it.record, &it.context, &it.decision))
        .collect::<Result<_>>()?;
    let goal_ids = model.goal_ids(goal_defs)?;

    let mut adam = Adam::new(config);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut warnings: Vec<String> = Vec::new();
    let mut warned_small_batch = false;
    let mut empty_positive_seen: std::collections::BTreeSet<String> = Default::default();
    let mut last_checkpoint: Option<(PathBuf, String)> = None;
    let mut log_file = match &options.log_path {
        Some(p) => Some(std::fs::File::create(p)?),
        None => None,
    };

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        shuffle(&mut order, mix_seed(config.seed, epoch as u64, u64::MAX));

        let mut sums = [0.0f64; 6];
        let mut counted = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<PreparedRecord> =
                chunk.iter().map(|&i| prepared[i].clone()).collect();
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| mix_seed(config.seed, epoch as u64, i as u64))
                .collect();
            let opts = BatchOptions {
                training: true,
                tau: config.tau,
                gumbel_temperature: config.gumbel_temperature,
                seeds,
                ablation: options.ablation,
            };

            let mut tape = Tape::new();
            let params = model.bind(&mut tape);
            let flow = model.assemble_batch(&mut tape, &params, &batch, &goal_ids, &opts)?;

            if batch.len() == 1 && !opts.ablation.no_semantics && !warned_small_batch {
                warnings.push(
                    "batch of one record cannot form contrastive pairs; skipping that term"
                        .into(),
                );
                warned_small_batch = true;
            }
            for id in &flow.empty_positive_ids {
                if empty_positive_seen.insert(id.clone()) {
                    warnings.push(format!(
                        "record {id}: positive sample kept no token; anchor skipped"
                    ));
                }
            }

            let l_ce = flow.l_ce.expect("labeled batch");
            let l_c = flow.l_c.expect("labeled batch");
            let l_d = flow.l_d.expect("labeled batch");
            let l_u = flow.l_u.expect("labeled batch");
            let mut total = l_ce;
            if let Some(lg) = flow.l_g {
                let s = tape.scale(lg, config.lambda_1);
                total = tape.add(total, s);
            }
            let aux = {
                let cd = tape.add(l_c, l_d);
                let cdu = tape.add(cd, l_u);
                tape.scale(cdu, config.lambda_2)
            };
            total = tape.add(total, aux);

            let values = [
                tape.scalar(l_ce),
                flow.l_g.map_or(0.0, |n| tape.scalar(n)),
                tape.scalar(l_c),
                tape.scalar(l_d),
                tape.scalar(l_u),
                tape.scalar(total),
            ];
            if values.iter().any(|v| !v.is_finite()) {
                let reference = last_checkpoint
                    .as_ref()
                    .map(|(p, id)| format!("; last good checkpoint {} ({id})", p.display()))
                    .unwrap_or_default();
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}{reference}"
                )));
            }

            let grads = tape.backward(total);
            adam.step(model.named_params_mut(), &params, &grads)?;

            for (slot, v) in sums.iter_mut().zip(values) {
                *slot += v * batch.len() as f64;
            }
            counted += batch.len();
        }

        let n = counted as f64;
        let log = EpochLog {
            epoch,
            l_ce: sums[0] / n,
            l_g: sums[1] / n,
            l_c: sums[2] / n,
            l_d: sums[3] / n,
            l_u: sums[4] / n,
            l_total: sums[5] / n,
        };
        if let Some(f) = log_file.as_mut() {
            use std::io::Write;
            writeln!(f, "{}", serde_json::to_string(&log)?)?;
        }
        epochs.push(log);

        if let Some(dir) = &options.checkpoint_dir {
            let cadence_hit =
                config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0;
            if cadence_hit {
                let path = dir.join(format!("epoch_{:04}.json", epoch + 1));
                let id = model.save(&path)?;
                last_checkpoint = Some((path, id));
            }
        }
    }

    let final_checkpoint = match &options.checkpoint_dir {
        Some(dir) => {
            let path = dir.join("model.json");
            let id = model.save(&path)?;
            Some((path, id))
        }
        None => None,
    };

    Ok(TrainReport { epochs, final_checkpoint, warnings })
}

/// Fisher-Yates with a seeded stream, independent of record content.
fn shuffle(order: &mut [usize], seed: u64) {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Resolve context and decision for every record through one provider.
/// Contexts repeat across records, so the fixture store makes this cheap;
/// the error names the record that failed.
pub fn resolve_items(
    records: &[ProjectRecord],
    codebook: &crate::corpus::CountryCodebook,
    goal_defs: &[GoalDefinition],
    provider: &crate::llm::Provider,
) -> Result<Vec<TrainItem>> {
    records
        .iter()
        .map(|record| {
            let context = crate::llm::resolve_context(
                provider,
                codebook,
                record.donor_code,
                record.recipient_code,
                record.year,
            )
            .map_err(|e| Error::Provider(format!("record {}: {e}", record.id)))?;
            let decision = crate::llm::resolve_decision(provider, &record.description, goal_defs)
                .map_err(|e| Error::Provider(format!("record {}: {e}", record.id)))?
                .vector;
            Ok(TrainItem { record: record.clone(), context, decision })
        })
        .collect()
}

/// Inference over a raw record: resolve to token ids and run the model.
pub fn predict_record(
    model: &Model,
    record: &ProjectRecord,
    context: &CountryContext,
    decision: &DecisionVector,
    goal_defs: &[GoalDefinition],
    ablation: Ablation,
    threshold: f64,
) -> Result<Prediction> {
    let prepared = model.prepare(record, context, decision)?;
    let goal_ids = model.goal_ids(goal_defs)?;
    model.predict(&prepared, &goal_ids, ablation, threshold)
}

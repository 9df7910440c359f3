//! The full classifier: encoder, three guidance paths, calibration, and the
//! final head, assembled into one differentiable graph per batch. Also owns
//! the checkpoint container.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{
    cross_attention_pool_node, goal_token_attention_node, gumbel_noise, gumbel_probs_node,
    importance_node, AttentionHead, HeadOwner, MlpHead,
};
use crate::autodiff::{Bindings, NodeId, Tape};
use crate::corpus::{GoalDefinition, Labels, ProjectRecord, NUM_GOALS};
use crate::country::{country_loss_node, country_representation_node, CountryContext};
use crate::decision::{calibrate_node, decision_losses_node, decision_representation_node, usefulness_label, DecisionVector};
use crate::encoder::{goal_text, masked_mean, Encoder, EncoderBlock, EncoderConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::llm::ProviderMode;
use crate::semantics::{build_positive_sample, contrastive_loss_node};

/// Which guidance paths are active. All parameters stay allocated either
/// way, so checkpoints are interchangeable across variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_semantics: bool,
    pub no_country: bool,
    pub no_decision: bool,
}

impl Ablation {
    pub fn from_variant(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Ablation::default()),
            "no_semantics" => Ok(Ablation { no_semantics: true, ..Default::default() }),
            "no_country" => Ok(Ablation { no_country: true, ..Default::default() }),
            "no_decision" => Ok(Ablation { no_decision: true, ..Default::default() }),
            other => Err(Error::Config(format!(
                "unknown ablation variant '{other}' (full, no_semantics, no_country, no_decision)"
            ))),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match (self.no_semantics, self.no_country, self.no_decision) {
            (false, false, false) => "full",
            (true, false, false) => "no_semantics",
            (false, true, false) => "no_country",
            (false, false, true) => "no_decision",
            _ => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Pool guided token rows as Â·E instead of the mean-scaled form.
    pub weighted_sum_pool: bool,
    /// Layer-normalize goal embeddings entering the decision product so wide
    /// products cannot underflow.
    pub layer_norm_decision_inputs: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            weighted_sum_pool: false,
            layer_norm_decision_inputs: true,
        }
    }
}

#[derive(Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub sem_head: AttentionHead,
    pub country_head: AttentionHead,
    pub decision_head: AttentionHead,
    pub s_g: MlpHead,
    pub s_c: MlpHead,
    pub s_l: MlpHead,
    pub f_c: MlpHead,
    pub f_l: MlpHead,
    pub f_u: MlpHead,
    pub f_cls: MlpHead,
}

/// A record with everything resolved to token ids, ready for the tape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedRecord {
    pub id: String,
    pub desc_ids: Vec<u32>,
    pub donor_ids: Vec<u32>,
    pub recipient_ids: Vec<u32>,
    /// Sorted, deduplicated goal numbers from the LLM decision.
    pub decision_goals: Vec<usize>,
    pub labels: Option<Labels>,
}

impl PreparedRecord {
    pub fn empty_decision(&self) -> bool {
        self.decision_goals.is_empty()
    }
}

/// Per-record nodes of interest after assembly.
pub struct RecordFlow {
    pub tokens: NodeId,
    pub pooled: NodeId,
    pub h_hat: NodeId,
    pub h_bar: NodeId,
    pub alpha: NodeId,
    pub fused: NodeId,
    pub logits: NodeId,
    pub probs: NodeId,
    pub losses: Option<RecordLosses>,
}

pub struct RecordLosses {
    pub l_ce: NodeId,
    pub l_c: NodeId,
    pub l_d: NodeId,
    pub l_u: NodeId,
}

/// Batch-level assembly output.
pub struct BatchFlow {
    pub records: Vec<RecordFlow>,
    /// Mean losses over the batch, present when every record has labels.
    pub l_ce: Option<NodeId>,
    pub l_c: Option<NodeId>,
    pub l_d: Option<NodeId>,
    pub l_u: Option<NodeId>,
    /// Contrastive loss; absent when the semantics path is off, when fewer
    /// than two anchors kept a token, or at inference.
    pub l_g: Option<NodeId>,
    /// Records whose positive sample kept no token this step.
    pub empty_positive_ids: Vec<String>,
}

pub struct BatchOptions {
    pub training: bool,
    pub tau: f64,
    pub gumbel_temperature: f64,
    /// One sampling seed per record, aligned with the batch slice.
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
}

impl Model {
    /// Fresh model: vocabulary from `texts`, all weights seeded.
    pub fn init<'a>(
        config: ModelConfig,
        texts: impl IntoIterator<Item = &'a str>,
        seed: u64,
    ) -> Result<Self> {
        let encoder = Encoder::init(config.encoder.clone(), texts, seed)?;
        let d = config.encoder.d_h;
        Ok(Model {
            config,
            encoder,
            sem_head: AttentionHead::init(d, HeadOwner::Semantics, seed.wrapping_add(101)),
            country_head: AttentionHead::init(d, HeadOwner::Country, seed.wrapping_add(102)),
            decision_head: AttentionHead::init(d, HeadOwner::Decision, seed.wrapping_add(103)),
            s_g: MlpHead::init("proj.sg", &[d, d], seed.wrapping_add(104)),
            s_c: MlpHead::init("proj.sc", &[d, d], seed.wrapping_add(105)),
            s_l: MlpHead::init("proj.sl", &[d, d], seed.wrapping_add(106)),
            f_c: MlpHead::init("cls.fc", &[d, NUM_GOALS], seed.wrapping_add(107)),
            f_l: MlpHead::init("cls.fl", &[d, NUM_GOALS], seed.wrapping_add(108)),
            f_u: MlpHead::init("cls.fu", &[d, 1], seed.wrapping_add(109)),
            f_cls: MlpHead::init("cls.fcls", &[d, NUM_GOALS], seed.wrapping_add(110)),
        })
    }

    pub fn d_h(&self) -> usize {
        self.config.encoder.d_h
    }

    /// Every parameter tensor in a fixed canonical order.
    pub fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = self.encoder.named_params();
        out.extend(self.sem_head.named_params());
        out.extend(self.country_head.named_params());
        out.extend(self.decision_head.named_params());
        for head in [
            &self.s_g, &self.s_c, &self.s_l, &self.f_c, &self.f_l, &self.f_u, &self.f_cls,
        ] {
            out.extend(head.named_params());
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = self.encoder.named_params_mut();
        out.extend(self.sem_head.named_params_mut());
        out.extend(self.country_head.named_params_mut());
        out.extend(self.decision_head.named_params_mut());
        for head in [
            &mut self.s_g,
            &mut self.s_c,
            &mut self.s_l,
            &mut self.f_c,
            &mut self.f_l,
            &mut self.f_u,
            &mut self.f_cls,
        ] {
            out.extend(head.named_params_mut());
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let mut b = Bindings::new();
        for (name, value) in self.named_params() {
            let id = tape.leaf(value.clone());
            b.insert(&name, id);
        }
        b
    }

    /// Resolve a record plus its context and decision to token ids.
    pub fn prepare(
        &self,
        record: &ProjectRecord,
        context: &CountryContext,
        decision: &DecisionVector,
    ) -> Result<PreparedRecord> {
        context.validate()?;
        let max = self.config.encoder.max_tokens;
        let desc_ids = self.encoder.vocab.encode(&record.description, max);
        if desc_ids.is_empty() {
            return Err(Error::EmptyInput(format!(
                "record {} tokenizes to zero tokens",
                record.id
            )));
        }
        let donor_ids = self.encoder.vocab.encode(&context.donor_summary, max);
        let recipient_ids = self.encoder.vocab.encode(&context.recipient_summary, max);
        if donor_ids.is_empty() || recipient_ids.is_empty() {
            return Err(Error::EmptyInput(format!(
                "record {} has a summary that tokenizes to zero tokens",
                record.id
            )));
        }
        Ok(PreparedRecord {
            id: record.id.clone(),
            desc_ids,
            donor_ids,
            recipient_ids,
            decision_goals: decision.goals.iter().copied().collect(),
            labels: record.sdg_labels,
        })
    }

    /// Token ids for each of the 17 goal texts, in goal order.
    pub fn goal_ids(&self, defs: &[GoalDefinition]) -> Result<Vec<Vec<u32>>> {
        if defs.len() != NUM_GOALS {
            return Err(Error::DefinitionSet(format!(
                "need {NUM_GOALS} goal definitions, got {}",
                defs.len()
            )));
        }
        let max = self.config.encoder.max_tokens;
        defs.iter()
            .map(|g| {
                let ids = self.encoder.vocab.encode(&goal_text(g), max);
                if ids.is_empty() {
                    return Err(Error::EmptyInput(format!(
                        "goal {} text tokenizes to zero tokens",
                        g.goal_index
                    )));
                }
                Ok(ids)
            })
            .collect()
    }

    /// Encode the 17 goal texts on the tape; one forward each per batch.
    pub fn goal_nodes(
        &self,
        tape: &mut Tape,
        params: &Bindings,
        goal_ids: &[Vec<u32>],
    ) -> Result<Vec<NodeId>> {
        goal_ids
            .iter()
            .map(|ids| {
                let e = self.encoder.forward(tape, params, ids)?;
                masked_mean(tape, e, &vec![true; ids.len()])
            })
            .collect()
    }

    /// One record's full graph: encode, guide, calibrate, classify.
    /// `goal_nodes` may be empty only when no path needs goal embeddings.
    #[allow(clippy::too_many_arguments)]
    fn assemble_record(
        &self,
        tape: &mut Tape,
        params: &Bindings,
        rec: &PreparedRecord,
        goal_nodes: &[NodeId],
        ablation: Ablation,
        context_cache: &mut BTreeMap<Vec<u32>, NodeId>,
    ) -> Result<RecordFlow> {
        let tokens = self.encoder.forward(tape, params, &rec.desc_ids)?;
        let mask = vec![true; rec.desc_ids.len()];
        let pooled = masked_mean(tape, tokens, &mask)?;

        let h_hat = if ablation.no_country {
            pooled
        } else {
            let h_d = self.context_node(tape, params, &rec.donor_ids, context_cache)?;
            let h_r = self.context_node(tape, params, &rec.recipient_ids, context_cache)?;
            let h_c = country_representation_node(tape, &self.s_c, params, h_d, h_r);
            cross_attention_pool_node(
                tape,
                &self.country_head,
                params,
                tokens,
                &mask,
                h_c,
                self.config.weighted_sum_pool,
            )?
        };

        let empty_decision = rec.empty_decision();
        let (h_bar, alpha, fused) = if ablation.no_decision {
            // Decision inputs are never touched: output is pure ĥ_x.
            let zero = tape.leaf(Array2::zeros((1, self.d_h())));
            let alpha = tape.leaf_scalar(0.0);
            (zero, alpha, h_hat)
        } else {
            let h_l = if empty_decision {
                tape.leaf(Array2::zeros((1, self.d_h())))
            } else {
                let selected: Vec<NodeId> = rec
                    .decision_goals
                    .iter()
                    .map(|&g| goal_nodes[g - 1])
                    .collect();
                decision_representation_node(
                    tape,
                    &self.s_l,
                    params,
                    &selected,
                    self.config.layer_norm_decision_inputs,
                )
            };
            let h_bar = cross_attention_pool_node(
                tape,
                &self.decision_head,
                params,
                tokens,
                &mask,
                h_l,
                self.config.weighted_sum_pool,
            )?;
            let (fused, alpha) =
                calibrate_node(tape, &self.f_u, params, h_hat, h_bar, empty_decision);
            (h_bar, alpha, fused)
        };

        let logits = self.f_cls.forward(tape, params, fused);
        let probs = tape.sigmoid(logits);

        let losses = match &rec.labels {
            None => None,
            Some(y) => {
                let targets =
                    Array2::from_shape_vec((1, NUM_GOALS), y.to_f64()).expect("17 targets");
                let l_ce = tape.bce_with_logits(logits, targets);
                let l_c = if ablation.no_country {
                    tape.leaf_scalar(0.0)
                } else {
                    country_loss_node(tape, &self.f_c, params, h_hat, y)
                };
                let (l_d, l_u) = if ablation.no_decision || empty_decision {
                    (tape.leaf_scalar(0.0), tape.leaf_scalar(0.0))
                } else {
                    let decision_goals: std::collections::BTreeSet<usize> =
                        rec.decision_goals.iter().copied().collect();
                    let y_u = usefulness_label(
                        y,
                        &DecisionVector {
                            goals: decision_goals,
                            raw_response: String::new(),
                            provider_id: String::new(),
                            prompt_hash: String::new(),
                        },
                    );
                    decision_losses_node(tape, &self.f_l, &self.f_u, params, h_bar, y, y_u)
                };
                Some(RecordLosses { l_ce, l_c, l_d, l_u })
            }
        };

        Ok(RecordFlow { tokens, pooled, h_hat, h_bar, alpha, fused, logits, probs, losses })
    }

    /// Pooled context embedding, shared across records in the batch that use
    /// the same summary.
    fn context_node(
        &self,
        tape: &mut Tape,
        params: &Bindings,
        ids: &[u32],
        cache: &mut BTreeMap<Vec<u32>, NodeId>,
    ) -> Result<NodeId> {
        if let Some(&hit) = cache.get(ids) {
            return Ok(hit);
        }
        let e = self.encoder.forward(tape, params, ids)?;
        let node = masked_mean(tape, e, &vec![true; ids.len()])?;
        cache.insert(ids.to_vec(), node);
        Ok(node)
    }

    /// Assemble a whole batch on one tape. Goal texts are encoded once and
    /// shared; the semantics path runs only in training with labels present.
    pub fn assemble_batch(
        &self,
        tape: &mut Tape,
        params: &Bindings,
        records: &[PreparedRecord],
        goal_ids: &[Vec<u32>],
        opts: &BatchOptions,
    ) -> Result<BatchFlow> {
        if records.is_empty() {
            return Err(Error::Batch("empty batch".into()));
        }
        if opts.training && opts.seeds.len() != records.len() {
            return Err(Error::Batch(format!(
                "{} seeds for {} records",
                opts.seeds.len(),
                records.len()
            )));
        }
        let semantics_on =
            opts.training && !opts.ablation.no_semantics && records.iter().all(|r| r.labels.is_some());
        let decisions_on =
            !opts.ablation.no_decision && records.iter().any(|r| !r.empty_decision());
        let goal_nodes = if semantics_on || decisions_on {
            self.goal_nodes(tape, params, goal_ids)?
        } else {
            Vec::new()
        };

        let mut context_cache = BTreeMap::new();
        let mut flows = Vec::with_capacity(records.len());
        for rec in records {
            flows.push(self.assemble_record(
                tape,
                params,
                rec,
                &goal_nodes,
                opts.ablation,
                &mut context_cache,
            )?);
        }

        let mut l_g = None;
        let mut empty_positive_ids = Vec::new();
        if semantics_on {
            let goal_stack = tape.vstack(&goal_nodes);
            let mut anchors = Vec::new();
            let mut positives = Vec::new();
            for (i, (rec, flow)) in records.iter().zip(&flows).enumerate() {
                let y = rec.labels.as_ref().expect("semantics_on requires labels");
                let scores =
                    goal_token_attention_node(tape, &self.sem_head, params, flow.tokens, goal_stack);
                let noise = gumbel_noise(opts.seeds[i], rec.desc_ids.len(), NUM_GOALS);
                let probs = gumbel_probs_node(tape, scores, noise, opts.gumbel_temperature);
                let importance = importance_node(tape, probs, y);
                let importance_vals: Vec<f64> =
                    tape.value(importance).column(0).iter().copied().collect();
                let sample =
                    build_positive_sample(&rec.desc_ids, &importance_vals, opts.tau, &rec.id)?;
                if sample.is_empty() {
                    empty_positive_ids.push(rec.id.clone());
                    continue;
                }
                let pos_tokens = self.encoder.forward(tape, params, &sample.token_ids)?;
                let pos_pooled = masked_mean(tape, pos_tokens, &sample.kept_mask)?;
                anchors.push(flow.pooled);
                positives.push(pos_pooled);
            }
            if anchors.len() >= 2 {
                let originals = tape.vstack(&anchors);
                let pos = tape.vstack(&positives);
                l_g = Some(contrastive_loss_node(tape, &self.s_g, params, originals, pos)?);
            }
        }

        let all_labeled = records.iter().all(|r| r.labels.is_some());
        let (l_ce, l_c, l_d, l_u) = if all_labeled {
            let pick = |f: fn(&RecordLosses) -> NodeId, flows: &[RecordFlow], tape: &mut Tape| {
                let ids: Vec<NodeId> =
                    flows.iter().map(|fl| f(fl.losses.as_ref().expect("labeled"))).collect();
                tape.mean_of(&ids)
            };
            (
                Some(pick(|l| l.l_ce, &flows, tape)),
                Some(pick(|l| l.l_c, &flows, tape)),
                Some(pick(|l| l.l_d, &flows, tape)),
                Some(pick(|l| l.l_u, &flows, tape)),
            )
        } else {
            (None, None, None, None)
        };

        Ok(BatchFlow { records: flows, l_ce, l_c, l_d, l_u, l_g, empty_positive_ids })
    }

    /// Inference for one prepared record: no noise, no loss terms.
    pub fn predict(
        &self,
        rec: &PreparedRecord,
        goal_ids: &[Vec<u32>],
        ablation: Ablation,
        threshold: f64,
    ) -> Result<Prediction> {
        if !(0.0 < threshold && threshold < 1.0) {
            return Err(Error::Parameter(format!(
                "prediction threshold must lie in (0,1), got {threshold}"
            )));
        }
        let mut unlabeled = rec.clone();
        unlabeled.labels = None;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let opts = BatchOptions {
            training: false,
            tau: 0.0,
            gumbel_temperature: 1.0,
            seeds: Vec::new(),
            ablation,
        };
        let flow = self.assemble_batch(
            &mut tape,
            &params,
            std::slice::from_ref(&unlabeled),
            goal_ids,
            &opts,
        )?;
        let record = &flow.records[0];
        let probabilities: Vec<f64> = tape.value(record.probs).row(0).to_vec();
        let alpha = tape.scalar(record.alpha);
        let labels: Vec<usize> = probabilities
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= threshold)
            .map(|(i, _)| i + 1)
            .collect();
        Ok(Prediction { probabilities, labels, alpha })
    }

    /// Serialize to a JSON checkpoint; returns the checkpoint id (content
    /// hash of the file).
    pub fn save(&self, path: &Path) -> Result<String> {
        let tensors: BTreeMap<String, Array2<f64>> = self
            .named_params()
            .into_iter()
            .map(|(n, v)| (n, v.clone()))
            .collect();
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.encoder.vocab.clone(),
            tensors,
        };
        let bytes = serde_json::to_vec(&file)?;
        std::fs::write(path, &bytes)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// Load a checkpoint, validating version, tensor names, and shapes.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let id = hex::encode(Sha256::digest(&bytes));
        let file: CheckpointFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} unsupported (want {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let mut model = Model::zeroed(file.config, file.vocab)?;
        let mut tensors = file.tensors;
        for (name, value) in model.named_params_mut() {
            let loaded = tensors.remove(&name).ok_or_else(|| {
                Error::Checkpoint(format!("checkpoint lacks tensor '{name}'"))
            })?;
            if loaded.dim() != value.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, model wants {:?}",
                    loaded.dim(),
                    value.dim()
                )));
            }
            *value = loaded;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!(
                "checkpoint carries unknown tensor '{extra}'"
            )));
        }
        Ok((model, id))
    }

    /// Structure with correct shapes and zero weights; filled by `load`.
    /// Bypasses `Encoder::init` so pretrained checkpoints can be rebuilt.
    fn zeroed(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        config.encoder.validate()?;
        let d = config.encoder.d_h;
        let enc_cfg = config.encoder.clone();
        let encoder = Encoder {
            token_table: Array2::zeros((vocab.len(), d)),
            pos_table: Array2::zeros((enc_cfg.max_tokens, d)),
            blocks: (0..enc_cfg.num_blocks)
                .map(|_| EncoderBlock {
                    wq: Array2::zeros((d, d)),
                    wk: Array2::zeros((d, d)),
                    wv: Array2::zeros((d, d)),
                    w1: Array2::zeros((d, enc_cfg.ffn_hidden)),
                    b1: Array2::zeros((1, enc_cfg.ffn_hidden)),
                    w2: Array2::zeros((enc_cfg.ffn_hidden, d)),
                    b2: Array2::zeros((1, d)),
                })
                .collect(),
            config: enc_cfg,
            vocab,
        };
        Ok(Model {
            config,
            encoder,
            sem_head: AttentionHead::identity(d, HeadOwner::Semantics),
            country_head: AttentionHead::identity(d, HeadOwner::Country),
            decision_head: AttentionHead::identity(d, HeadOwner::Decision),
            s_g: MlpHead::identity("proj.sg", d),
            s_c: MlpHead::identity("proj.sc", d),
            s_l: MlpHead::identity("proj.sl", d),
            f_c: MlpHead::init("cls.fc", &[d, NUM_GOALS], 0),
            f_l: MlpHead::init("cls.fl", &[d, NUM_GOALS], 0),
            f_u: MlpHead::init("cls.fu", &[d, 1], 0),
            f_cls: MlpHead::init("cls.fcls", &[d, NUM_GOALS], 0),
        })
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    vocab: Vocabulary,
    tensors: BTreeMap<String, Array2<f64>>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    /// Goal numbers whose probability met the threshold; may be empty.
    pub labels: Vec<usize>,
    pub alpha: f64,
}

/// Final-head loss on the fused representation.
pub fn classification_loss(
    fused: &Array2<f64>,
    y: &Labels,
    f_cls: &MlpHead,
) -> Result<f64> {
    if f_cls.out_dim() != NUM_GOALS {
        return Err(Error::Shape(format!(
            "final classifier must emit {NUM_GOALS} logits, emits {}",
            f_cls.out_dim()
        )));
    }
    let mut tape = Tape::new();
    let params = f_cls.bind(&mut tape);
    let h = tape.leaf(fused.clone());
    let logits = f_cls.forward(&mut tape, &params, h);
    let targets = Array2::from_shape_vec((1, NUM_GOALS), y.to_f64()).expect("17 targets");
    let node = tape.bce_with_logits(logits, targets);
    Ok(tape.scalar(node))
}

/// How a record's context and decision get resolved at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolverConfig {
    pub provider_mode: ProviderMode,
}

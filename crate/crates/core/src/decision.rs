//! LLM decision guidance: turn a parsed goal decision into a representation,
//! learn whether the decision is useful, and fuse it into the classifier
//! input gated by that usefulness.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::attention::{cross_attention_pool, AttentionHead, MlpHead};
use crate::autodiff::{Bindings, NodeId, Tape};
use crate::corpus::{Labels, NUM_GOALS};
use crate::encoder::{PooledRepresentation, Source, TokenEmbeddingSet};
use crate::error::{Error, Result};

/// Goal set an LLM picked for one record, with enough provenance to trace
/// and swap providers later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub goals: BTreeSet<usize>,
    pub raw_response: String,
    pub provider_id: String,
    pub prompt_hash: String,
}

impl DecisionVector {
    pub fn new(
        goals: BTreeSet<usize>,
        raw_response: String,
        provider_id: String,
        prompt_hash: String,
    ) -> Result<Self> {
        if let Some(&g) = goals.iter().find(|&&g| g < 1 || g > NUM_GOALS) {
            return Err(Error::LabelRange(format!(
                "decision goal {g} outside 1..={NUM_GOALS}"
            )));
        }
        Ok(Self { goals, raw_response, provider_id, prompt_hash })
    }

    /// Empty decisions are allowed but the calibration path must force α=0.
    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }
}

/// y_u: whether the true labels overlap the LLM decision at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsefulnessLabel(pub u8);

impl UsefulnessLabel {
    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

pub fn usefulness_label(y: &Labels, decision: &DecisionVector) -> UsefulnessLabel {
    UsefulnessLabel(u8::from(y.intersects(&decision.goals)))
}

/// h_x^cls with the gate that produced it and both inputs kept for audit.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedRepresentation {
    pub fused: Array2<f64>,
    pub alpha: f64,
    pub refined: Array2<f64>,
    pub attentive: Array2<f64>,
}

/// Tape-level decision representation: element-wise product of the selected
/// goal embeddings, each optionally layer-normalized first, then S_L.
/// `goal_nodes` holds only the selected goals; must be non-empty.
pub fn decision_representation_node(
    tape: &mut Tape,
    s_l: &MlpHead,
    params: &Bindings,
    goal_nodes: &[NodeId],
    layer_norm_inputs: bool,
) -> NodeId {
    assert!(!goal_nodes.is_empty(), "empty decision handled by caller");
    let mut prod = None;
    for &g in goal_nodes {
        let g = if layer_norm_inputs { tape.layer_norm_rows(g) } else { g };
        prod = Some(match prod {
            None => g,
            Some(p) => tape.mul(p, g),
        });
    }
    s_l.forward(tape, params, prod.expect("at least one goal"))
}

/// Decision representation h_x^l from frozen goal embeddings.
///
/// `goals` is the full 17-slot table indexed by goal number minus one.
/// Products over many sub-unit vectors vanish, so inputs are layer-normalized
/// first unless `layer_norm_inputs` is off.
pub fn decision_representation(
    decision: &DecisionVector,
    goals: &[PooledRepresentation],
    s_l: &MlpHead,
    layer_norm_inputs: bool,
) -> Result<PooledRepresentation> {
    if goals.len() != NUM_GOALS {
        return Err(Error::Shape(format!(
            "goal table holds {} entries, need {NUM_GOALS}",
            goals.len()
        )));
    }
    if decision.is_empty() {
        return Err(Error::EmptyInput(
            "empty decision set has no product; caller must zero h_x^l".into(),
        ));
    }
    let d = goals[0].vector.ncols();
    let mut tape = Tape::new();
    let params = s_l.bind(&mut tape);
    let nodes: Vec<NodeId> = decision
        .goals
        .iter()
        .map(|&g| {
            let v = &goals[g - 1].vector;
            if v.ncols() != d {
                return Err(Error::Shape(format!(
                    "goal {g} width {} does not match {d}",
                    v.ncols()
                )));
            }
            Ok(tape.leaf(v.clone()))
        })
        .collect::<Result<_>>()?;
    let out = decision_representation_node(&mut tape, s_l, &params, &nodes, layer_norm_inputs);
    Ok(PooledRepresentation {
        vector: tape.value(out).clone(),
        source: Source::Goal,
    })
}

/// Decision-guided attentive pooling; delegates to the shared cross-attention
/// kernel with h_x^l as the key.
pub fn decision_guided_representation(
    tokens: &TokenEmbeddingSet,
    h_l: &PooledRepresentation,
    head: &AttentionHead,
    weighted_sum_pool: bool,
) -> Result<PooledRepresentation> {
    cross_attention_pool(tokens, h_l, head, weighted_sum_pool)
}

/// Tape-level L_D and L_U on the raw attentive representation.
pub fn decision_losses_node(
    tape: &mut Tape,
    f_l: &MlpHead,
    f_u: &MlpHead,
    params: &Bindings,
    h_bar: NodeId,
    y: &Labels,
    y_u: UsefulnessLabel,
) -> (NodeId, NodeId) {
    let label_logits = f_l.forward(tape, params, h_bar);
    let targets = Array2::from_shape_vec((1, NUM_GOALS), y.to_f64()).expect("17 targets");
    let l_d = tape.bce_with_logits(label_logits, targets);

    let use_logit = f_u.forward(tape, params, h_bar);
    let l_u = tape.bce_with_logits(use_logit, Array2::from_elem((1, 1), y_u.as_f64()));
    (l_d, l_u)
}

/// L_D = BCE(y, σ(f_l(h̄_x))), L_U = BCE(y_u, σ(f_u(h̄_x))).
pub fn decision_losses(
    h_bar: &PooledRepresentation,
    y: &Labels,
    y_u: UsefulnessLabel,
    f_l: &MlpHead,
    f_u: &MlpHead,
) -> Result<(f64, f64)> {
    if f_l.out_dim() != NUM_GOALS {
        return Err(Error::Shape(format!(
            "decision classifier must emit {NUM_GOALS} logits, emits {}",
            f_l.out_dim()
        )));
    }
    if f_u.out_dim() != 1 {
        return Err(Error::Shape(format!(
            "usefulness head must emit 1 logit, emits {}",
            f_u.out_dim()
        )));
    }
    let mut tape = Tape::new();
    let mut params = Bindings::new();
    for (name, value) in f_l.named_params().into_iter().chain(f_u.named_params()) {
        params.insert(&name, tape.leaf(value.clone()));
    }
    let h = tape.leaf(h_bar.vector.clone());
    let (l_d, l_u) = decision_losses_node(&mut tape, f_l, f_u, &params, h, y, y_u);
    Ok((tape.scalar(l_d), tape.scalar(l_u)))
}

/// Tape-level calibration. Returns (fused, alpha). For an empty decision the
/// gate is a constant zero leaf, so no gradient reaches f_u.
pub fn calibrate_node(
    tape: &mut Tape,
    f_u: &MlpHead,
    params: &Bindings,
    h_hat: NodeId,
    h_bar: NodeId,
    empty_decision: bool,
) -> (NodeId, NodeId) {
    let alpha = if empty_decision {
        tape.leaf_scalar(0.0)
    } else {
        let logit = f_u.forward(tape, params, h_bar);
        tape.sigmoid(logit)
    };
    let gated = tape.scale_by(h_bar, alpha);
    let fused = tape.add(h_hat, gated);
    (fused, alpha)
}

/// h_x^cls = ĥ_x + α·h̄_x with α = σ(f_u(h̄_x)), forced to 0 when the
/// decision was empty.
pub fn calibrate(
    h_hat: &PooledRepresentation,
    h_bar: &PooledRepresentation,
    f_u: &MlpHead,
    empty_decision: bool,
) -> Result<CalibratedRepresentation> {
    if h_hat.vector.dim() != h_bar.vector.dim() {
        return Err(Error::Shape(format!(
            "refined width {:?} does not match attentive width {:?}",
            h_hat.vector.dim(),
            h_bar.vector.dim()
        )));
    }
    if f_u.out_dim() != 1 {
        return Err(Error::Shape(format!(
            "usefulness head must emit 1 logit, emits {}",
            f_u.out_dim()
        )));
    }
    let mut tape = Tape::new();
    let params = f_u.bind(&mut tape);
    let hh = tape.leaf(h_hat.vector.clone());
    let hb = tape.leaf(h_bar.vector.clone());
    let (fused, alpha) = calibrate_node(&mut tape, f_u, &params, hh, hb, empty_decision);
    Ok(CalibratedRepresentation {
        fused: tape.value(fused).clone(),
        alpha: tape.scalar(alpha),
        refined: h_hat.vector.clone(),
        attentive: h_bar.vector.clone(),
    })
}

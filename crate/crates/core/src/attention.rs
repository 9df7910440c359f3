//! Shared differentiable kernels: scale-dot attention against goal and
//! context vectors, Gumbel-Softmax importance, cross-attention pooling, and
//! shallow MLP heads. Value-level entry points build a throwaway tape so
//! tests and training exercise the same arithmetic.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, NodeId, Tape};
use crate::corpus::{Labels, NUM_GOALS};
use crate::encoder::{PooledRepresentation, Source, TokenEmbeddingSet};
use crate::error::{Error, Result};

/// Logit added to masked positions before softmax; exp underflows to 0.
pub const MASK_SENTINEL: f64 = -1e9;

/// Which module an attention head belongs to. Each owner has independent
/// parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadOwner {
    Semantics,
    Country,
    Decision,
}

impl HeadOwner {
    fn prefix(self) -> &'static str {
        match self {
            HeadOwner::Semantics => "attn.sem",
            HeadOwner::Country => "attn.country",
            HeadOwner::Decision => "attn.dec",
        }
    }
}

/// One single-head attention parameter pair, applied as `x · W`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionHead {
    pub owner: HeadOwner,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl AttentionHead {
    pub fn init(d_h: usize, owner: HeadOwner, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d_h as f64).sqrt();
        AttentionHead {
            owner,
            wq: uniform(&mut rng, d_h, d_h, bound),
            wk: uniform(&mut rng, d_h, d_h, bound),
        }
    }

    pub fn identity(d_h: usize, owner: HeadOwner) -> Self {
        AttentionHead {
            owner,
            wq: Array2::eye(d_h),
            wk: Array2::eye(d_h),
        }
    }

    pub fn d_h(&self) -> usize {
        self.wq.nrows()
    }

    pub fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        vec![
            (format!("{}.wq", self.owner.prefix()), &self.wq),
            (format!("{}.wk", self.owner.prefix()), &self.wk),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        vec![
            (format!("{}.wq", self.owner.prefix()), &mut self.wq),
            (format!("{}.wk", self.owner.prefix()), &mut self.wk),
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let mut b = Bindings::new();
        for (name, value) in self.named_params() {
            let id = tape.leaf(value.clone());
            b.insert(&name, id);
        }
        b
    }

    fn nodes(&self, params: &Bindings) -> (NodeId, NodeId) {
        (
            params.get(&format!("{}.wq", self.owner.prefix())),
            params.get(&format!("{}.wk", self.owner.prefix())),
        )
    }
}

/// One dense layer, applied as `x · w + b`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

/// Dense stack with ReLU between layers (never after the last). Used for the
/// projection heads and all classifiers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpHead {
    pub name: String,
    pub layers: Vec<Linear>,
}

impl MlpHead {
    /// `dims` runs input → hidden… → output.
    pub fn init(name: &str, dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "MLP needs at least input and output dims");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|pair| {
                let bound = 1.0 / (pair[0] as f64).sqrt();
                Linear {
                    w: uniform(&mut rng, pair[0], pair[1], bound),
                    b: Array2::zeros((1, pair[1])),
                }
            })
            .collect();
        MlpHead {
            name: name.to_string(),
            layers,
        }
    }

    /// Single layer with identity weights and zero bias: an exact pass-through.
    pub fn identity(name: &str, d: usize) -> Self {
        MlpHead {
            name: name.to_string(),
            layers: vec![Linear {
                w: Array2::eye(d),
                b: Array2::zeros((1, d)),
            }],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty stack").w.ncols()
    }

    pub fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("{}.l{i}.w", self.name), &layer.w));
            out.push((format!("{}.l{i}.b", self.name), &layer.b));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("{}.l{i}.w", self.name), &mut layer.w));
            out.push((format!("{}.l{i}.b", self.name), &mut layer.b));
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

    pub fn forward(&self, tape: &mut Tape, params: &Bindings, mut x: NodeId) -> NodeId {
        let last = self.layers.len() - 1;
        for i in 0..self.layers.len() {
            let w = params.get(&format!("{}.l{i}.w", self.name));
            let b = params.get(&format!("{}.l{i}.b", self.name));
            let m = tape.matmul(x, w);
            x = tape.add_row(m, b);
            if i < last {
                x = tape.relu(x);
            }
        }
        x
    }

    /// Value-level forward on a throwaway tape.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "{}: input width {} does not match head input {}",
                self.name,
                x.ncols(),
                self.in_dim()
            )));
        }
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let input = tape.leaf(x.clone());
        let out = self.forward(&mut tape, &params, input);
        Ok(tape.value(out).clone())
    }
}

/// Tape-level scale-dot attention scores: `A = (E·W_Q)(G·W_K)ᵀ/√d_h`.
/// Rows are tokens, columns goals.
pub fn goal_token_attention_node(
    tape: &mut Tape,
    head: &AttentionHead,
    params: &Bindings,
    tokens: NodeId,
    goals: NodeId,
) -> NodeId {
    let (wq, wk) = head.nodes(params);
    let q = tape.matmul(tokens, wq);
    let k = tape.matmul(goals, wk);
    let kt = tape.transpose(k);
    let raw = tape.matmul(q, kt);
    tape.scale(raw, 1.0 / (head.d_h() as f64).sqrt())
}

/// Value-level attention scores between a token set and the 17 goal vectors.
pub fn goal_token_attention(
    tokens: &TokenEmbeddingSet,
    goals: &[PooledRepresentation],
    head: &AttentionHead,
) -> Result<Array2<f64>> {
    if head.owner != HeadOwner::Semantics {
        return Err(Error::Parameter(format!(
            "goal-token attention requires the semantics head, got {:?}",
            head.owner
        )));
    }
    if goals.len() != NUM_GOALS {
        return Err(Error::Shape(format!(
            "expected {NUM_GOALS} goal vectors, got {}",
            goals.len()
        )));
    }
    let d = head.d_h();
    if tokens.embeddings.ncols() != d || goals.iter().any(|g| g.vector.ncols() != d) {
        return Err(Error::Shape(format!(
            "attention width mismatch: head {d}, tokens {}, goals {:?}",
            tokens.embeddings.ncols(),
            goals.iter().map(|g| g.vector.ncols()).collect::<Vec<_>>()
        )));
    }
    let mut tape = Tape::new();
    let params = head.bind(&mut tape);
    let e = tape.leaf(tokens.embeddings.clone());
    let g = tape.leaf(stack_rows(goals));
    let a = goal_token_attention_node(&mut tape, head, &params, e, g);
    Ok(tape.value(a).clone())
}

fn stack_rows(reps: &[PooledRepresentation]) -> Array2<f64> {
    let d = reps[0].vector.ncols();
    let mut out = Array2::zeros((reps.len(), d));
    for (i, rep) in reps.iter().enumerate() {
        out.row_mut(i).assign(&rep.vector.row(0));
    }
    out
}

/// Standard-Gumbel noise matrix: `−ln(−ln(u))` with `u = (bits+0.5)·2⁻⁶⁴`,
/// drawn row-major from a ChaCha stream seeded with `seed`.
pub fn gumbel_noise(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let u = (rng.next_u64() as f64 + 0.5) * (1.0 / 18446744073709551616.0);
            out[[r, c]] = -(-u.ln()).ln();
        }
    }
    out
}

/// Tape-level perturbed-softmax probabilities: softmax over goals of
/// `(A + noise)/T`. `noise` enters as a constant leaf.
pub fn gumbel_probs_node(
    tape: &mut Tape,
    scores: NodeId,
    noise: Array2<f64>,
    temperature: f64,
) -> NodeId {
    let g = tape.leaf(noise);
    let sum = tape.add(scores, g);
    let scaled = tape.scale(sum, 1.0 / temperature);
    tape.row_softmax(scaled)
}

/// Tape-level token importance: per-token sum of probabilities at the goals
/// active in `y`. Returns an n×1 node.
pub fn importance_node(tape: &mut Tape, probs: NodeId, y: &Labels) -> NodeId {
    let mut selector = Array2::zeros((NUM_GOALS, 1));
    for goal in y.goals() {
        selector[[goal - 1, 0]] = 1.0;
    }
    let s = tape.leaf(selector);
    tape.matmul(probs, s)
}

/// Perturbed per-token goal probabilities and the importance vector
/// `P_i = Σ_{j∈y} P_ij`.
pub fn gumbel_importance(
    scores: &Array2<f64>,
    y: &Labels,
    temperature: f64,
    seed: u64,
) -> Result<(Array2<f64>, Vec<f64>)> {
    if temperature <= 0.0 {
        return Err(Error::Parameter(format!(
            "gumbel temperature must be positive, got {temperature}"
        )));
    }
    if scores.ncols() != NUM_GOALS {
        return Err(Error::Shape(format!(
            "scores must have {NUM_GOALS} goal columns, got {}",
            scores.ncols()
        )));
    }
    let mut tape = Tape::new();
    let a = tape.leaf(scores.clone());
    let noise = gumbel_noise(seed, scores.nrows(), scores.ncols());
    let probs = gumbel_probs_node(&mut tape, a, noise, temperature);
    let imp = importance_node(&mut tape, probs, y);
    let importance = tape.value(imp).column(0).to_vec();
    Ok((tape.value(probs).clone(), importance))
}

/// Tape-level cross-attention pooling. Tokens are queries, `key` (1×d_h) is
/// the key; masked positions get sentinel logits; output is 1×d_h. With
/// `weighted_sum_pool` the mean over valid tokens becomes a plain weighted
/// sum.
pub fn cross_attention_pool_node(
    tape: &mut Tape,
    head: &AttentionHead,
    params: &Bindings,
    tokens: NodeId,
    mask: &[bool],
    key: NodeId,
    weighted_sum_pool: bool,
) -> Result<NodeId> {
    let n_valid = mask.iter().filter(|&&m| m).count();
    if n_valid == 0 {
        return Err(Error::EmptyPool("cross-attention over zero valid tokens".into()));
    }
    let (wq, wk) = head.nodes(params);
    let q = tape.matmul(tokens, wq);
    let k = tape.matmul(key, wk);
    let kt = tape.transpose(k);
    let logits_col = tape.matmul(q, kt);
    let logits = tape.transpose(logits_col);
    let scaled = tape.scale(logits, 1.0 / (head.d_h() as f64).sqrt());

    let n = mask.len();
    let mut sentinel = Array2::zeros((1, n));
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            sentinel[[0, i]] = MASK_SENTINEL;
        }
    }
    let sent = tape.leaf(sentinel);
    let masked = tape.add(scaled, sent);
    let weights = tape.row_softmax(masked);
    let pooled = tape.matmul(weights, tokens);
    if weighted_sum_pool {
        Ok(pooled)
    } else {
        Ok(tape.scale(pooled, 1.0 / n_valid as f64))
    }
}

/// Value-level cross-attention pooling of a token set against a key vector.
pub fn cross_attention_pool(
    tokens: &TokenEmbeddingSet,
    key: &PooledRepresentation,
    head: &AttentionHead,
    weighted_sum_pool: bool,
) -> Result<PooledRepresentation> {
    if head.owner == HeadOwner::Semantics {
        return Err(Error::Parameter(
            "cross-attention pooling requires the country or decision head".into(),
        ));
    }
    let d = head.d_h();
    if tokens.embeddings.ncols() != d || key.vector.ncols() != d {
        return Err(Error::Shape(format!(
            "cross-attention width mismatch: head {d}, tokens {}, key {}",
            tokens.embeddings.ncols(),
            key.vector.ncols()
        )));
    }
    let mut tape = Tape::new();
    let params = head.bind(&mut tape);
    let e = tape.leaf(tokens.embeddings.clone());
    let k = tape.leaf(key.vector.clone());
    let out = cross_attention_pool_node(
        &mut tape,
        head,
        &params,
        e,
        &tokens.mask,
        k,
        weighted_sum_pool,
    )?;
    Ok(PooledRepresentation {
        vector: tape.value(out).clone(),
        source: key.source,
    })
}

/// Value-level MLP projection of a pooled vector.
pub fn project(v: &PooledRepresentation, head: &MlpHead) -> Result<PooledRepresentation> {
    Ok(PooledRepresentation {
        vector: head.apply(&v.vector)?,
        source: v.source,
    })
}

pub fn pooled(vector: Array2<f64>, source: Source) -> PooledRepresentation {
    PooledRepresentation { vector, source }
}

//! Token embedding and pooled sentence representations.
//!
//! The trainable backbone is deliberately small: an embedding table, a
//! learned positional table, and zero or more single-head self-attention
//! blocks with residual connections. Every parameter is reachable by the
//! gradient checks downstream.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, NodeId, Tape};
use crate::corpus::GoalDefinition;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Word-level vocabulary. Id 0 is padding, id 1 the unknown token; real
/// words start at 2, ranked by frequency then alphabetically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    word_to_id: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Rank tokens of `texts` by frequency (ties alphabetical) and keep the
    /// top `max_words` behind the two reserved slots.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_words: usize) -> Self {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for text in texts {
            for token in tokenize(text) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut words = vec!["<pad>".to_string(), "<unk>".to_string()];
        words.extend(ranked.into_iter().take(max_words).map(|(w, _)| w));
        Self::from_words(words).expect("constructed word list is valid")
    }

    fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[0] != "<pad>" || words[1] != "<unk>" {
            return Err(Error::Checkpoint(
                "vocabulary must start with <pad>, <unk>".into(),
            ));
        }
        let mut word_to_id = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            if word_to_id.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary word '{w}'")));
            }
        }
        Ok(Vocabulary { words, word_to_id })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> u32 {
        self.word_to_id.get(word).copied().unwrap_or(UNK_ID)
    }

    /// Token ids for a text, truncated to `max_tokens`.
    pub fn encode(&self, text: &str, max_tokens: usize) -> Vec<u32> {
        tokenize(text)
            .into_iter()
            .take(max_tokens)
            .map(|t| self.id(&t))
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;
    fn try_from(words: Vec<String>) -> Result<Self> {
        Vocabulary::from_words(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.words
    }
}

/// Lowercase and split on non-alphanumeric boundaries (Unicode-aware, so
/// accented words survive intact).
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    TrainableSmall,
    PretrainedMultilingual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_h: usize,
    pub max_tokens: usize,
    /// Upper bound on learned words (reserved slots excluded).
    pub max_words: usize,
    /// Self-attention blocks; 0 gives a bare embedding-plus-position model.
    pub num_blocks: usize,
    pub ffn_hidden: usize,
    pub backbone: Backbone,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_h: 64,
            max_tokens: 128,
            max_words: 4096,
            num_blocks: 1,
            ffn_hidden: 64,
            backbone: Backbone::TrainableSmall,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_h < 8 {
            return Err(Error::Parameter(format!("d_h must be ≥ 8, got {}", self.d_h)));
        }
        if self.max_tokens < 4 {
            return Err(Error::Parameter(format!(
                "max_tokens must be ≥ 4, got {}",
                self.max_tokens
            )));
        }
        if self.ffn_hidden == 0 {
            return Err(Error::Parameter("ffn_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// Token embeddings for one text, with validity mask and source token ids.
#[derive(Clone, Debug)]
pub struct TokenEmbeddingSet {
    pub embeddings: Array2<f64>,
    pub mask: Vec<bool>,
    pub token_ids: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Description,
    Goal,
    DonorSummary,
    RecipientSummary,
    PositiveSample,
}

/// A single pooled d_h vector tagged with where it came from.
#[derive(Clone, Debug)]
pub struct PooledRepresentation {
    /// 1×d_h.
    pub vector: Array2<f64>,
    pub source: Source,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

/// The trainable-small encoder: embedding table, positional table, blocks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    pub token_table: Array2<f64>,
    pub pos_table: Array2<f64>,
    pub blocks: Vec<EncoderBlock>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl Encoder {
    /// Initialize with a vocabulary built from `texts`. Deterministic in
    /// `seed`. The pretrained backbone has no initializer: its weights only
    /// ever come from a checkpoint.
    pub fn init<'a>(
        config: EncoderConfig,
        texts: impl IntoIterator<Item = &'a str>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if config.backbone == Backbone::PretrainedMultilingual {
            return Err(Error::Checkpoint(
                "pretrained_multilingual weights must be loaded from a checkpoint, \
                 not initialized"
                    .into(),
            ));
        }
        let vocab = Vocabulary::build(texts, config.max_words);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_h;
        let bound = 1.0 / (d as f64).sqrt();
        let token_table = uniform(&mut rng, vocab.len(), d, bound);
        let pos_table = uniform(&mut rng, config.max_tokens, d, bound);
        let blocks = (0..config.num_blocks)
            .map(|_| EncoderBlock {
                wq: uniform(&mut rng, d, d, bound),
                wk: uniform(&mut rng, d, d, bound),
                wv: uniform(&mut rng, d, d, bound),
                w1: uniform(&mut rng, d, config.ffn_hidden, bound),
                b1: Array2::zeros((1, config.ffn_hidden)),
                w2: uniform(&mut rng, config.ffn_hidden, d, bound),
                b2: Array2::zeros((1, d)),
            })
            .collect();
        Ok(Encoder {
            config,
            vocab,
            token_table,
            pos_table,
            blocks,
        })
    }

    /// Canonical parameter listing: stable names, stable order.
    pub fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("enc.tok".to_string(), &self.token_table),
            ("enc.pos".to_string(), &self.pos_table),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("enc.b{i}.wq"), &b.wq));
            out.push((format!("enc.b{i}.wk"), &b.wk));
            out.push((format!("enc.b{i}.wv"), &b.wv));
            out.push((format!("enc.b{i}.w1"), &b.w1));
            out.push((format!("enc.b{i}.b1"), &b.b1));
            out.push((format!("enc.b{i}.w2"), &b.w2));
            out.push((format!("enc.b{i}.b2"), &b.b2));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("enc.tok".to_string(), &mut self.token_table),
            ("enc.pos".to_string(), &mut self.pos_table),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("enc.b{i}.wq"), &mut b.wq));
            out.push((format!("enc.b{i}.wk"), &mut b.wk));
            out.push((format!("enc.b{i}.wv"), &mut b.wv));
            out.push((format!("enc.b{i}.w1"), &mut b.w1));
            out.push((format!("enc.b{i}.b1"), &mut b.b1));
            out.push((format!("enc.b{i}.w2"), &mut b.w2));
            out.push((format!("enc.b{i}.b2"), &mut b.b2));
        }
        out
    }

    /// Bind this encoder's parameters as tape leaves.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let mut bindings = Bindings::new();
        for (name, value) in self.named_params() {
            let id = tape.leaf(value.clone());
            bindings.insert(&name, id);
        }
        bindings
    }

    /// Forward pass over token ids: returns the n×d_h embedding node.
    pub fn forward(&self, tape: &mut Tape, params: &Bindings, ids: &[u32]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("no tokens to embed".into()));
        }
        if ids.len() > self.config.max_tokens {
            return Err(Error::Shape(format!(
                "{} tokens exceed max_tokens {}",
                ids.len(),
                self.config.max_tokens
            )));
        }
        let tok_ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let pos_ids: Vec<usize> = (0..ids.len()).collect();
        let tok = tape.gather_rows(params.get("enc.tok"), &tok_ids);
        let pos = tape.gather_rows(params.get("enc.pos"), &pos_ids);
        let mut x = tape.add(tok, pos);

        let scale = 1.0 / (self.config.d_h as f64).sqrt();
        for (i, _) in self.blocks.iter().enumerate() {
            let wq = params.get(&format!("enc.b{i}.wq"));
            let wk = params.get(&format!("enc.b{i}.wk"));
            let wv = params.get(&format!("enc.b{i}.wv"));
            let q = tape.matmul(x, wq);
            let k = tape.matmul(x, wk);
            let v = tape.matmul(x, wv);
            let kt = tape.transpose(k);
            let logits = tape.matmul(q, kt);
            let scaled = tape.scale(logits, scale);
            let attn = tape.row_softmax(scaled);
            let mixed = tape.matmul(attn, v);
            x = tape.add(x, mixed);

            let w1 = params.get(&format!("enc.b{i}.w1"));
            let b1 = params.get(&format!("enc.b{i}.b1"));
            let w2 = params.get(&format!("enc.b{i}.w2"));
            let b2 = params.get(&format!("enc.b{i}.b2"));
            let h = tape.matmul(x, w1);
            let hb = tape.add_row(h, b1);
            let hr = tape.relu(hb);
            let f = tape.matmul(hr, w2);
            let fb = tape.add_row(f, b2);
            x = tape.add(x, fb);
        }
        Ok(x)
    }

    /// Embed pre-tokenized ids on a throwaway tape (inference path).
    pub fn embed_ids(&self, ids: &[u32]) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let out = self.forward(&mut tape, &params, ids)?;
        Ok(tape.value(out).clone())
    }

    /// Tokenize and embed a text. Padding ids (from positive-sample masking)
    /// are embedded but masked out.
    pub fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddingSet> {
        let ids = self.vocab.encode(text, self.config.max_tokens);
        if ids.is_empty() {
            return Err(Error::EmptyInput(format!(
                "text tokenizes to zero tokens: '{}'",
                &text.chars().take(40).collect::<String>()
            )));
        }
        self.embed_token_ids(&ids)
    }

    /// Embed an explicit id sequence, masking PAD positions.
    pub fn embed_token_ids(&self, ids: &[u32]) -> Result<TokenEmbeddingSet> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("no tokens to embed".into()));
        }
        let embeddings = self.embed_ids(ids)?;
        let mask: Vec<bool> = ids.iter().map(|&i| i != PAD_ID).collect();
        Ok(TokenEmbeddingSet {
            embeddings,
            mask,
            token_ids: ids.to_vec(),
        })
    }

    /// Pooled goal representation from title and targets joined by periods.
    pub fn embed_goal(&self, goal: &GoalDefinition) -> Result<PooledRepresentation> {
        let set = self.embed_tokens(&goal_text(goal))?;
        let mut pooled = pool_average(&set)?;
        pooled.source = Source::Goal;
        Ok(pooled)
    }
}

/// The text behind a goal embedding: title plus targets, period-separated.
pub fn goal_text(goal: &GoalDefinition) -> String {
    let mut parts = vec![goal.title.clone()];
    parts.extend(goal.targets.iter().cloned());
    parts.join(". ")
}

/// Mean of unmasked rows.
pub fn pool_average(set: &TokenEmbeddingSet) -> Result<PooledRepresentation> {
    let kept: Vec<usize> = set
        .mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyPool("all token rows are masked out".into()));
    }
    let d = set.embeddings.ncols();
    let mut sum = Array2::zeros((1, d));
    for &i in &kept {
        let row = set.embeddings.row(i);
        for c in 0..d {
            sum[[0, c]] += row[c];
        }
    }
    sum /= kept.len() as f64;
    Ok(PooledRepresentation {
        vector: sum,
        source: Source::Description,
    })
}

/// Tape-level masked mean over rows of `node`: multiplies by a constant
/// 1×n pooling row holding 1/n_valid at unmasked positions.
pub fn masked_mean(tape: &mut Tape, node: NodeId, mask: &[bool]) -> Result<NodeId> {
    let n = tape.value(node).nrows();
    assert_eq!(n, mask.len(), "mask length must match row count");
    let n_valid = mask.iter().filter(|&&m| m).count();
    if n_valid == 0 {
        return Err(Error::EmptyPool("all token rows are masked out".into()));
    }
    let mut row = Array2::zeros((1, n));
    for (i, &m) in mask.iter().enumerate() {
        if m {
            row[[0, i]] = 1.0 / n_valid as f64;
        }
    }
    let pool = tape.leaf(row);
    Ok(tape.matmul(pool, node))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            d_h: 8,
            max_tokens: 16,
            max_words: 64,
            num_blocks: 1,
            ffn_hidden: 8,
            backbone: Backbone::TrainableSmall,
        }
    }

    fn tiny_encoder() -> Encoder {
        Encoder::init(
            small_config(),
            ["water supply project", "rural school construction", "solar power grid"],
            41,
        )
        .unwrap()
    }

    #[test]
    fn single_word_embeds_to_one_row() {
        let enc = tiny_encoder();
        let set = enc.embed_tokens("water").unwrap();
        assert_eq!(set.embeddings.dim(), (1, 8));
        assert!(set.embeddings.iter().all(|v| v.is_finite()));
        assert_eq!(set.mask, vec![true]);
    }

    #[test]
    fn identical_text_embeds_identically() {
        let enc = tiny_encoder();
        let a = enc.embed_tokens("water supply project").unwrap();
        let b = enc.embed_tokens("water supply project").unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.token_ids, b.token_ids);
    }

    #[test]
    fn one_token_difference_changes_some_row() {
        let enc = tiny_encoder();
        let a = enc.embed_tokens("water supply project").unwrap();
        let b = enc.embed_tokens("water power project").unwrap();
        assert_ne!(a.embeddings, b.embeddings);
    }

    #[test]
    fn zero_token_text_is_an_empty_input_error() {
        let enc = tiny_encoder();
        assert!(matches!(
            enc.embed_tokens("!!! ---"),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn truncation_respects_max_tokens() {
        let enc = tiny_encoder();
        let long: String = vec!["water"; 40].join(" ");
        let set = enc.embed_tokens(&long).unwrap();
        assert_eq!(set.embeddings.nrows(), 16);
    }

    #[test]
    fn pool_average_matches_hand_mean() {
        let set = TokenEmbeddingSet {
            embeddings: ndarray::array![[1.0, 1.0], [3.0, 3.0]],
            mask: vec![true, true],
            token_ids: vec![2, 3],
        };
        let pooled = pool_average(&set).unwrap();
        assert_eq!(pooled.vector, ndarray::array![[2.0, 2.0]]);
    }

    #[test]
    fn pool_average_single_row_is_identity() {
        let set = TokenEmbeddingSet {
            embeddings: ndarray::array![[0.5, -1.5, 2.0]],
            mask: vec![true],
            token_ids: vec![2],
        };
        let pooled = pool_average(&set).unwrap();
        assert_eq!(pooled.vector, ndarray::array![[0.5, -1.5, 2.0]]);
    }

    #[test]
    fn pool_average_ignores_masked_rows_and_errors_when_all_masked() {
        let set = TokenEmbeddingSet {
            embeddings: ndarray::array![[1.0, 1.0], [9.0, 9.0]],
            mask: vec![true, false],
            token_ids: vec![2, 0],
        };
        assert_eq!(pool_average(&set).unwrap().vector, ndarray::array![[1.0, 1.0]]);

        let all_masked = TokenEmbeddingSet {
            embeddings: ndarray::array![[1.0, 1.0]],
            mask: vec![false],
            token_ids: vec![0],
        };
        assert!(matches!(pool_average(&all_masked), Err(Error::EmptyPool(_))));
    }

    #[test]
    fn goal_embeddings_are_pairwise_distinct() {
        let goals = crate::data::default_goal_definitions().unwrap();
        let texts: Vec<String> = goals.iter().map(goal_text).collect();
        let enc = Encoder::init(
            EncoderConfig {
                max_words: 2048,
                ..small_config()
            },
            texts.iter().map(String::as_str),
            17,
        )
        .unwrap();
        let embedded: Vec<Array2<f64>> = goals
            .iter()
            .map(|g| enc.embed_goal(g).unwrap().vector)
            .collect();
        for i in 0..embedded.len() {
            for j in (i + 1)..embedded.len() {
                let dist: f64 = (&embedded[i] - &embedded[j])
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                assert!(dist > 0.0, "goals {i} and {j} collide");
            }
        }
    }

    #[test]
    fn goal_with_no_targets_embeds_title_alone() {
        let enc = tiny_encoder();
        let goal = GoalDefinition {
            goal_index: 3,
            title: "water supply".into(),
            targets: vec![],
        };
        let direct = enc.embed_tokens("water supply").unwrap();
        let via_goal = enc.embed_goal(&goal).unwrap();
        let direct_pooled = pool_average(&direct).unwrap();
        assert_eq!(via_goal.vector, direct_pooled.vector);
    }

    #[test]
    fn embedding_gradients_match_finite_differences() {
        let enc = tiny_encoder();
        let ids = enc.vocab.encode("water supply project", 16);
        let eps = 1e-6;

        let loss_of = |enc: &Encoder| -> f64 {
            let mut tape = Tape::new();
            let params = enc.bind(&mut tape);
            let x = enc.forward(&mut tape, &params, &ids).unwrap();
            let pooled = masked_mean(&mut tape, x, &vec![true; ids.len()]).unwrap();
            let sq = tape.mul(pooled, pooled);
            let root = tape.sum_all(sq);
            tape.scalar(root)
        };

        let mut tape = Tape::new();
        let params = enc.bind(&mut tape);
        let x = enc.forward(&mut tape, &params, &ids).unwrap();
        let pooled = masked_mean(&mut tape, x, &vec![true; ids.len()]).unwrap();
        let sq = tape.mul(pooled, pooled);
        let root = tape.sum_all(sq);
        let grads = tape.backward(root);

        for (name, value) in enc.named_params() {
            let analytic = grads.get_or_zeros(params.get(&name), value.dim());
            // Probe a few entries per tensor; full sweeps run in the loss suite.
            let probes = [(0, 0), (value.nrows() / 2, value.ncols() / 2)];
            for &(r, c) in &probes {
                let mut plus = enc.clone();
                for (n2, v2) in plus.named_params_mut() {
                    if n2 == name {
                        v2[[r, c]] += eps;
                    }
                }
                let mut minus = enc.clone();
                for (n2, v2) in minus.named_params_mut() {
                    if n2 == name {
                        v2[[r, c]] -= eps;
                    }
                }
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                let a = analytic[[r, c]];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (a - numeric).abs() / denom < 1e-4,
                    "{name}[{r},{c}]: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn pretrained_backbone_requires_checkpoint() {
        let config = EncoderConfig {
            backbone: Backbone::PretrainedMultilingual,
            ..small_config()
        };
        assert!(Encoder::init(config, ["x"], 1).is_err());
    }

    #[test]
    fn vocabulary_ranks_by_frequency_then_alphabet() {
        let vocab = Vocabulary::build(["b b a a c"], 10);
        // a and b tie at 2 → alphabetical; c trails at 1.
        assert_eq!(vocab.id("a"), 2);
        assert_eq!(vocab.id("b"), 3);
        assert_eq!(vocab.id("c"), 4);
        assert_eq!(vocab.id("zzz"), UNK_ID);
    }

    #[test]
    fn vocabulary_survives_serde_round_trip() {
        let vocab = Vocabulary::build(["solar rural water"], 10);
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(vocab, back);
        assert_eq!(back.id("solar"), vocab.id("solar"));
    }
}

//! Goal-conditioned positive samples and the semantics-aware contrastive
//! loss. Positive samples keep only tokens whose perturbed goal-probability
//! mass over the true labels clears a threshold; everything else becomes the
//! padding token.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::attention::MlpHead;
use crate::autodiff::{Bindings, NodeId, Tape};
use crate::encoder::{PooledRepresentation, PAD_ID};
use crate::error::{Error, Result};

/// Self-similarity exclusion: added to the diagonal of the pairwise
/// similarity matrix so an anchor never counts itself as a negative.
const SELF_MASK: f64 = -1e9;

/// A thresholded token sequence: ids keep their value where importance
/// exceeded tau and are the padding id elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveSample {
    pub token_ids: Vec<u32>,
    pub kept_mask: Vec<bool>,
    pub source_id: String,
    pub tau: f64,
}

impl PositiveSample {
    pub fn kept_count(&self) -> usize {
        self.kept_mask.iter().filter(|&&k| k).count()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_count() == 0
    }
}

/// Keep token i exactly when `importance[i] > tau`; dropped slots become the
/// padding id.
pub fn build_positive_sample(
    token_ids: &[u32],
    importance: &[f64],
    tau: f64,
    source_id: &str,
) -> Result<PositiveSample> {
    if token_ids.len() != importance.len() {
        return Err(Error::Shape(format!(
            "{} tokens but {} importance entries",
            token_ids.len(),
            importance.len()
        )));
    }
    let kept_mask: Vec<bool> = importance.iter().map(|&p| p > tau).collect();
    let out_ids: Vec<u32> = token_ids
        .iter()
        .zip(kept_mask.iter())
        .map(|(&id, &keep)| if keep { id } else { PAD_ID })
        .collect();
    Ok(PositiveSample {
        token_ids: out_ids,
        kept_mask,
        source_id: source_id.to_string(),
        tau,
    })
}

/// Tape-level per-anchor contrastive terms. `originals` and `positives` are
/// b×d stacks of pooled representations, matched by row. Both pass through
/// the projection head, are L2-normalized, and each anchor's term is
/// `ln(denominator) − cos(z_i, p_i)` where the denominator sums
/// `exp(cos(z_i, p_i))` and `exp(cos(z_i, z_j))` over the other anchors.
/// Returns a b×1 node.
pub fn contrastive_terms_node(
    tape: &mut Tape,
    head: &MlpHead,
    params: &Bindings,
    originals: NodeId,
    positives: NodeId,
) -> Result<NodeId> {
    let b = tape.value(originals).nrows();
    if b < 2 {
        return Err(Error::Batch(format!(
            "contrastive loss needs at least 2 anchors, got {b}"
        )));
    }
    if tape.value(positives).nrows() != b {
        return Err(Error::Shape(format!(
            "{} originals but {} positives",
            b,
            tape.value(positives).nrows()
        )));
    }
    let z = head.forward(tape, params, originals);
    let p = head.forward(tape, params, positives);
    let zn = tape.l2_normalize_rows(z);
    let pn = tape.l2_normalize_rows(p);

    let d = tape.value(zn).ncols();
    let ones = tape.leaf(Array2::ones((d, 1)));
    let zp = tape.mul(zn, pn);
    let pos_sims = tape.matmul(zp, ones);

    let znt = tape.transpose(zn);
    let pair = tape.matmul(zn, znt);
    let mut diag = Array2::zeros((b, b));
    for i in 0..b {
        diag[[i, i]] = SELF_MASK;
    }
    let mask = tape.leaf(diag);
    let masked = tape.add(pair, mask);
    let neg_exp = tape.exp(masked);
    let ones_b = tape.leaf(Array2::ones((b, 1)));
    let neg_sums = tape.matmul(neg_exp, ones_b);

    let pos_exp = tape.exp(pos_sims);
    let den = tape.add(pos_exp, neg_sums);
    let log_den = tape.ln(den);
    Ok(tape.sub(log_den, pos_sims))
}

/// Tape-level batch contrastive loss: mean of the per-anchor terms.
pub fn contrastive_loss_node(
    tape: &mut Tape,
    head: &MlpHead,
    params: &Bindings,
    originals: NodeId,
    positives: NodeId,
) -> Result<NodeId> {
    let b = tape.value(originals).nrows();
    let terms = contrastive_terms_node(tape, head, params, originals, positives)?;
    let total = tape.sum_all(terms);
    Ok(tape.scale(total, 1.0 / b as f64))
}

fn stack(reps: &[PooledRepresentation]) -> Array2<f64> {
    let d = reps[0].vector.ncols();
    let mut out = Array2::zeros((reps.len(), d));
    for (i, rep) in reps.iter().enumerate() {
        out.row_mut(i).assign(&rep.vector.row(0));
    }
    out
}

/// Per-anchor contrastive terms at the value level.
pub fn contrastive_loss_terms(
    batch: &[PooledRepresentation],
    positives: &[PooledRepresentation],
    head: &MlpHead,
) -> Result<Vec<f64>> {
    if batch.len() < 2 {
        return Err(Error::Batch(format!(
            "contrastive loss needs at least 2 anchors, got {}",
            batch.len()
        )));
    }
    if batch.len() != positives.len() {
        return Err(Error::Shape(format!(
            "{} anchors but {} positives",
            batch.len(),
            positives.len()
        )));
    }
    let mut tape = Tape::new();
    let params = head.bind(&mut tape);
    let o = tape.leaf(stack(batch));
    let p = tape.leaf(stack(positives));
    let terms = contrastive_terms_node(&mut tape, head, &params, o, p)?;
    Ok(tape.value(terms).column(0).to_vec())
}

/// Batch contrastive loss at the value level: mean over anchors.
pub fn contrastive_loss(
    batch: &[PooledRepresentation],
    positives: &[PooledRepresentation],
    head: &MlpHead,
) -> Result<f64> {
    let terms = contrastive_loss_terms(batch, positives, head)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::pooled;
    use crate::encoder::Source;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rep(v: Array2<f64>) -> PooledRepresentation {
        pooled(v, Source::Description)
    }

    fn random_rep(rng: &mut ChaCha8Rng, d: usize) -> PooledRepresentation {
        rep(Array2::from_shape_fn((1, d), |_| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn tau_zero_keeps_all_positive_importance_tokens() {
        let ids = vec![5, 9, 2, 7];
        let importance = vec![0.3, 0.001, 0.9, 0.2];
        let sample = build_positive_sample(&ids, &importance, 0.0, "r1").unwrap();
        assert_eq!(sample.token_ids, ids);
        assert_eq!(sample.kept_count(), 4);
    }

    #[test]
    fn tau_one_drops_everything() {
        let ids = vec![5, 9, 2];
        let importance = vec![0.3, 1.0, 0.9];
        let sample = build_positive_sample(&ids, &importance, 1.0, "r1").unwrap();
        assert!(sample.is_empty());
        assert_eq!(sample.token_ids, vec![PAD_ID; 3]);
    }

    #[test]
    fn kept_positions_are_exactly_those_above_tau() {
        let ids = vec![4, 5, 6, 7, 8, 9];
        let importance = vec![0.5, 0.01, 0.011, 0.009, 0.7, 0.01];
        let sample = build_positive_sample(&ids, &importance, 0.01, "r2").unwrap();
        // Strict inequality: exactly-tau entries drop.
        assert_eq!(sample.kept_mask, vec![true, false, true, false, true, false]);
        assert_eq!(sample.token_ids, vec![4, PAD_ID, 6, PAD_ID, 8, PAD_ID]);
    }

    #[test]
    fn thresholding_matches_recomputed_importance_oracle() {
        use crate::attention::{gumbel_importance, AttentionHead, HeadOwner};
        use crate::corpus::Labels;

        let d = 8;
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let head = AttentionHead::init(d, HeadOwner::Semantics, 4);
        let tokens = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let goals: Vec<PooledRepresentation> = (0..crate::corpus::NUM_GOALS)
            .map(|_| random_rep(&mut rng, d))
            .collect();
        let set = crate::encoder::TokenEmbeddingSet {
            embeddings: tokens.clone(),
            mask: vec![true; n],
            token_ids: vec![3; n],
        };
        let scores = crate::attention::goal_token_attention(&set, &goals, &head).unwrap();
        let y = Labels::from_goals(&[4, 11]).unwrap();
        let seed = 2024;
        let (_, importance) = gumbel_importance(&scores, &y, 1.0, seed).unwrap();
        let sample = build_positive_sample(&set.token_ids, &importance, 0.01, "r").unwrap();

        // Independent recomputation: noise stream, softmax, threshold.
        let noise = sdgmap_testkit::noise::gumbel_matrix(seed, n, crate::corpus::NUM_GOALS);
        let score_rows: Vec<Vec<f64>> =
            scores.rows().into_iter().map(|r| r.to_vec()).collect();
        let oracle_probs = sdgmap_testkit::gumbel_probs(&score_rows, &noise, 1.0);
        let oracle_imp = sdgmap_testkit::token_importance(&oracle_probs, &[3, 10]);
        let oracle_kept: Vec<bool> = oracle_imp.iter().map(|&p| p > 0.01).collect();
        assert_eq!(sample.kept_mask, oracle_kept);
    }

    #[test]
    fn antipodal_two_batch_has_closed_form_loss() {
        let d = 8;
        let head = MlpHead::identity("proj.sg", d);
        let mut v = Array2::zeros((1, d));
        v[[0, 0]] = 2.0;
        v[[0, 3]] = -1.0;
        let anchors = vec![rep(v.clone()), rep(-v.clone())];
        let positives = vec![rep(v.clone()), rep(-v)];
        let loss = contrastive_loss(&anchors, &positives, &head).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + (-1f64).exp())).ln();
        assert!(
            (loss - expected).abs() < 1e-9,
            "loss {loss} vs closed form {expected}"
        );
    }

    #[test]
    fn identical_batch_loss_is_log_batch_size() {
        let d = 8;
        let head = MlpHead::identity("proj.sg", d);
        let mut v = Array2::zeros((1, d));
        v[[0, 2]] = 1.5;
        for b in [2usize, 3, 5] {
            let anchors: Vec<PooledRepresentation> = (0..b).map(|_| rep(v.clone())).collect();
            let positives = anchors.clone();
            let loss = contrastive_loss(&anchors, &positives, &head).unwrap();
            assert!(
                (loss - (b as f64).ln()).abs() < 1e-9,
                "batch {b}: loss {loss} vs ln {}",
                (b as f64).ln()
            );
        }
    }

    #[test]
    fn random_batch_matches_double_loop_oracle() {
        let d = 8;
        let b = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let head = MlpHead::init("proj.sg", &[d, d, d], 91);
        let anchors: Vec<PooledRepresentation> =
            (0..b).map(|_| random_rep(&mut rng, d)).collect();
        let positives: Vec<PooledRepresentation> =
            (0..b).map(|_| random_rep(&mut rng, d)).collect();

        let loss = contrastive_loss(&anchors, &positives, &head).unwrap();

        let layers: Vec<(Vec<Vec<f64>>, Vec<f64>)> = head
            .layers
            .iter()
            .map(|l| {
                (
                    l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                    l.b.row(0).to_vec(),
                )
            })
            .collect();
        let proj = |r: &PooledRepresentation| {
            sdgmap_testkit::mlp_forward(&r.vector.row(0).to_vec(), &layers)
        };
        let z: Vec<Vec<f64>> = anchors.iter().map(proj).collect();
        let p: Vec<Vec<f64>> = positives.iter().map(proj).collect();
        let oracle = sdgmap_testkit::contrastive_loss(&z, &p);
        assert!(
            (loss - oracle).abs() <= 1e-6,
            "loss {loss} vs oracle {oracle}"
        );
    }

    #[test]
    fn loss_is_invariant_to_pair_preserving_permutation() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let head = MlpHead::init("proj.sg", &[d, d], 8);
        let anchors: Vec<PooledRepresentation> =
            (0..5).map(|_| random_rep(&mut rng, d)).collect();
        let positives: Vec<PooledRepresentation> =
            (0..5).map(|_| random_rep(&mut rng, d)).collect();
        let base = contrastive_loss(&anchors, &positives, &head).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let anchors_p: Vec<PooledRepresentation> =
            perm.iter().map(|&i| anchors[i].clone()).collect();
        let positives_p: Vec<PooledRepresentation> =
            perm.iter().map(|&i| positives[i].clone()).collect();
        let permuted = contrastive_loss(&anchors_p, &positives_p, &head).unwrap();
        assert!((base - permuted).abs() < 1e-9);
    }

    #[test]
    fn identity_projection_is_scale_invariant() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let head = MlpHead::identity("proj.sg", d);
        let anchors: Vec<PooledRepresentation> =
            (0..4).map(|_| random_rep(&mut rng, d)).collect();
        let positives: Vec<PooledRepresentation> =
            (0..4).map(|_| random_rep(&mut rng, d)).collect();
        let base = contrastive_loss(&anchors, &positives, &head).unwrap();

        let mut scaled = anchors.clone();
        scaled[2].vector = scaled[2].vector.clone() * 37.5;
        let loss = contrastive_loss(&scaled, &positives, &head).unwrap();
        assert!((base - loss).abs() < 1e-7);
    }

    #[test]
    fn weakening_a_negative_never_raises_the_anchor_term() {
        let d = 8;
        let head = MlpHead::identity("proj.sg", d);
        let mut prev = f64::INFINITY;
        for step in 0..=10 {
            let theta = std::f64::consts::PI * (step as f64) / 10.0;
            let mut z0 = Array2::zeros((1, d));
            z0[[0, 0]] = 1.0;
            let mut z1 = Array2::zeros((1, d));
            z1[[0, 1]] = 1.0;
            let mut z2 = Array2::zeros((1, d));
            z2[[0, 0]] = theta.cos();
            z2[[0, 1]] = theta.sin();
            let anchors = vec![rep(z0.clone()), rep(z1), rep(z2)];
            let positives = vec![rep(z0), anchors[1].clone(), anchors[2].clone()];
            let terms = contrastive_loss_terms(&anchors, &positives, &head).unwrap();
            assert!(
                terms[0] <= prev + 1e-12,
                "anchor term rose from {prev} to {} at step {step}",
                terms[0]
            );
            prev = terms[0];
        }
    }

    #[test]
    fn batch_of_one_is_a_batch_error() {
        let d = 8;
        let head = MlpHead::identity("proj.sg", d);
        let v = vec![rep(Array2::ones((1, d)))];
        assert!(matches!(
            contrastive_loss(&v, &v, &head),
            Err(Error::Batch(_))
        ));
    }

    #[test]
    fn projection_gradients_match_finite_differences() {
        let d = 8;
        let b = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let originals = Array2::from_shape_fn((b, d), |_| rng.random_range(-1.0..1.0));
        let positives = Array2::from_shape_fn((b, d), |_| rng.random_range(-1.0..1.0));

        let loss_for = |h: &MlpHead| -> f64 {
            let mut tape = Tape::new();
            let params = h.bind(&mut tape);
            let o = tape.leaf(originals.clone());
            let p = tape.leaf(positives.clone());
            let node = contrastive_loss_node(&mut tape, h, &params, o, p).unwrap();
            tape.scalar(node)
        };

        let head = MlpHead::init("proj.sg", &[d, d], 55);
        let mut tape = Tape::new();
        let params = head.bind(&mut tape);
        let o = tape.leaf(originals.clone());
        let p = tape.leaf(positives.clone());
        let node = contrastive_loss_node(&mut tape, &head, &params, o, p).unwrap();
        let grads = tape.backward(node);

        let eps = 1e-6;
        for (name, value) in head.named_params() {
            let analytic = grads.get_or_zeros(params.get(&name), value.dim());
            for r in 0..value.nrows() {
                for c in 0..value.ncols() {
                    let mut plus = head.clone();
                    for (n2, v2) in plus.named_params_mut() {
                        if n2 == name {
                            v2[[r, c]] += eps;
                        }
                    }
                    let mut minus = head.clone();
                    for (n2, v2) in minus.named_params_mut() {
                        if n2 == name {
                            v2[[r, c]] -= eps;
                        }
                    }
                    let numeric = (loss_for(&plus) - loss_for(&minus)) / (2.0 * eps);
                    let a = analytic[[r, c]];
                    let denom = a.abs().max(numeric.abs()).max(1e-8);
                    assert!(
                        (a - numeric).abs() / denom < 1e-4,
                        "{name}[{r},{c}]: {a} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn example_row_drop_behavior_documented_in_sample() {
        let sample = build_positive_sample(&[7, 8], &[0.6, 0.0], 0.5, "rec-9").unwrap();
        assert_eq!(sample.source_id, "rec-9");
        assert_eq!(sample.tau, 0.5);
        assert_eq!(sample.token_ids, vec![7, PAD_ID]);
    }
}

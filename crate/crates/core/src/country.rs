//! Country-information guidance: fuse donor and recipient policy summaries
//! into a guide vector, pool the description tokens against it, and score
//! the auxiliary country classification loss.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::attention::{cross_attention_pool, AttentionHead, MlpHead};
use crate::autodiff::{Bindings, NodeId, Tape};
use crate::corpus::{IncomeGroup, Labels};
use crate::encoder::{PooledRepresentation, TokenEmbeddingSet};
use crate::error::{Error, Result};

/// Where a pair of country summaries came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider_id: String,
    pub donor_prompt_hash: String,
    pub recipient_prompt_hash: String,
    /// True when a summary was cut at max_tokens before pooling.
    #[serde(default)]
    pub truncated: bool,
}

/// Donor and recipient policy summaries for one record's country pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountryContext {
    pub donor_summary: String,
    pub recipient_summary: String,
    pub income_group: IncomeGroup,
    pub donor_code: i64,
    pub recipient_code: i64,
    pub provenance: Provenance,
}

impl CountryContext {
    pub fn validate(&self) -> Result<()> {
        if self.donor_summary.trim().is_empty() || self.recipient_summary.trim().is_empty() {
            return Err(Error::Provider(format!(
                "country context for donor {} / recipient {} has an empty summary",
                self.donor_code, self.recipient_code
            )));
        }
        Ok(())
    }
}

/// Tape-level country representation: `S_C(h_d ⊙ h_r)`.
pub fn country_representation_node(
    tape: &mut Tape,
    s_c: &MlpHead,
    params: &Bindings,
    h_d: NodeId,
    h_r: NodeId,
) -> NodeId {
    let prod = tape.mul(h_d, h_r);
    s_c.forward(tape, params, prod)
}

/// Country representation from pooled donor and recipient summaries.
pub fn country_representation(
    h_d: &PooledRepresentation,
    h_r: &PooledRepresentation,
    s_c: &MlpHead,
) -> Result<PooledRepresentation> {
    if h_d.vector.dim() != h_r.vector.dim() {
        return Err(Error::Shape(format!(
            "donor width {:?} does not match recipient width {:?}",
            h_d.vector.dim(),
            h_r.vector.dim()
        )));
    }
    let prod = &h_d.vector * &h_r.vector;
    Ok(PooledRepresentation {
        vector: s_c.apply(&prod)?,
        source: h_d.source,
    })
}

/// Country-guided attentive pooling of description tokens; delegates to the
/// shared cross-attention kernel.
pub fn country_guided_representation(
    tokens: &TokenEmbeddingSet,
    h_c: &PooledRepresentation,
    head: &AttentionHead,
    weighted_sum_pool: bool,
) -> Result<PooledRepresentation> {
    cross_attention_pool(tokens, h_c, head, weighted_sum_pool)
}

/// Tape-level auxiliary country loss: mean BCE of `f_c` logits against the
/// 17 labels.
pub fn country_loss_node(
    tape: &mut Tape,
    f_c: &MlpHead,
    params: &Bindings,
    h_hat: NodeId,
    y: &Labels,
) -> NodeId {
    let logits = f_c.forward(tape, params, h_hat);
    let targets = Array2::from_shape_vec((1, 17), y.to_f64()).expect("17 targets");
    tape.bce_with_logits(logits, targets)
}

/// Mean binary cross-entropy of the country classifier on ĥ_x.
pub fn country_loss(h_hat: &PooledRepresentation, y: &Labels, f_c: &MlpHead) -> Result<f64> {
    if f_c.out_dim() != 17 {
        return Err(Error::Shape(format!(
            "country classifier must emit 17 logits, emits {}",
            f_c.out_dim()
        )));
    }
    let mut tape = Tape::new();
    let params = f_c.bind(&mut tape);
    let h = tape.leaf(h_hat.vector.clone());
    let node = country_loss_node(&mut tape, f_c, &params, h, y);
    Ok(tape.scalar(node))
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
        pooled(v, Source::DonorSummary)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn all_ones_donor_with_identity_head_returns_recipient() {
        let d = 8;
        let s_c = MlpHead::identity("proj.sc", d);
        let h_d = rep(Array2::ones((1, d)));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h_r = rep(random_matrix(&mut rng, 1, d));
        let out = country_representation(&h_d, &h_r, &s_c).unwrap();
        assert_eq!(out.vector, h_r.vector);
    }

    #[test]
    fn zero_donor_with_zero_bias_head_returns_zero() {
        let d = 8;
        let s_c = MlpHead::init("proj.sc", &[d, d, d], 9);
        // Biases initialize to zero, so a zero product stays zero through ReLU.
        let h_d = rep(Array2::zeros((1, d)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h_r = rep(random_matrix(&mut rng, 1, d));
        let out = country_representation(&h_d, &h_r, &s_c).unwrap();
        assert!(out.vector.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_pair_matches_product_then_mlp_oracle() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s_c = MlpHead::init("proj.sc", &[d, 6, d], 11);
        let h_d = rep(random_matrix(&mut rng, 1, d));
        let h_r = rep(random_matrix(&mut rng, 1, d));
        let out = country_representation(&h_d, &h_r, &s_c).unwrap();

        let prod: Vec<f64> = (0..d)
            .map(|c| h_d.vector[[0, c]] * h_r.vector[[0, c]])
            .collect();
        let layers: Vec<(Vec<Vec<f64>>, Vec<f64>)> = s_c
            .layers
            .iter()
            .map(|l| {
                (
                    l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                    l.b.row(0).to_vec(),
                )
            })
            .collect();
        let oracle = sdgmap_testkit::mlp_forward(&prod, &layers);
        for c in 0..d {
            assert!((out.vector[[0, c]] - oracle[c]).abs() <= 1e-6);
        }
    }

    #[test]
    fn elementwise_product_commutes_before_projection() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s_c = MlpHead::init("proj.sc", &[d, d], 12);
        let h_d = rep(random_matrix(&mut rng, 1, d));
        let h_r = rep(random_matrix(&mut rng, 1, d));
        let ab = country_representation(&h_d, &h_r, &s_c).unwrap();
        let ba = country_representation(&h_r, &h_d, &s_c).unwrap();
        assert_eq!(ab.vector, ba.vector);
    }

    #[test]
    fn width_mismatch_is_a_shape_error() {
        let s_c = MlpHead::identity("proj.sc", 8);
        let h_d = rep(Array2::ones((1, 8)));
        let h_r = rep(Array2::ones((1, 4)));
        assert!(matches!(
            country_representation(&h_d, &h_r, &s_c),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn saturated_logits_drive_loss_to_zero() {
        let d = 8;
        let y = Labels::from_goals(&[1, 6, 17]).unwrap();
        // Single linear layer rigged to emit ±30 exactly where y says.
        let mut f_c = MlpHead::init("cls.fc", &[d, 17], 1);
        f_c.layers[0].w.fill(0.0);
        for (j, &t) in y.as_slice().iter().enumerate() {
            f_c.layers[0].b[[0, j]] = if t == 1 { 30.0 } else { -30.0 };
        }
        let h = rep(Array2::zeros((1, d)));
        let loss = country_loss(&h, &y, &f_c).unwrap();
        assert!(loss < 1e-9, "saturated loss {loss}");
    }

    #[test]
    fn zero_logits_cost_ln_two() {
        let d = 8;
        let y = Labels::from_goals(&[4]).unwrap();
        let mut f_c = MlpHead::init("cls.fc", &[d, 17], 1);
        f_c.layers[0].w.fill(0.0);
        f_c.layers[0].b.fill(0.0);
        let h = rep(Array2::ones((1, d)));
        let loss = country_loss(&h, &y, &f_c).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn random_loss_matches_scalar_bce_oracle() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f_c = MlpHead::init("cls.fc", &[d, 17], 13);
        let h = rep(random_matrix(&mut rng, 1, d));
        let y = Labels::from_goals(&[2, 9, 14]).unwrap();
        let loss = country_loss(&h, &y, &f_c).unwrap();

        let logits = f_c.apply(&h.vector).unwrap();
        let oracle = sdgmap_testkit::bce_mean(
            &logits.row(0).to_vec(),
            &y.to_f64(),
        );
        assert!((loss - oracle).abs() <= 1e-6, "loss {loss} vs oracle {oracle}");
        assert!(loss >= 0.0);
    }

    #[test]
    fn country_loss_gradients_match_finite_differences() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h_val = random_matrix(&mut rng, 1, d);
        let y = Labels::from_goals(&[3, 8]).unwrap();

        let loss_for = |f: &MlpHead| -> f64 {
            let mut tape = Tape::new();
            let params = f.bind(&mut tape);
            let h = tape.leaf(h_val.clone());
            let node = country_loss_node(&mut tape, f, &params, h, &y);
            tape.scalar(node)
        };

        let f_c = MlpHead::init("cls.fc", &[d, 6, 17], 14);
        let mut tape = Tape::new();
        let params = f_c.bind(&mut tape);
        let h = tape.leaf(h_val.clone());
        let node = country_loss_node(&mut tape, &f_c, &params, h, &y);
        let grads = tape.backward(node);

        let eps = 1e-6;
        for (name, value) in f_c.named_params() {
            let analytic = grads.get_or_zeros(params.get(&name), value.dim());
            for r in 0..value.nrows() {
                for c in 0..value.ncols() {
                    let mut plus = f_c.clone();
                    for (n2, v2) in plus.named_params_mut() {
                        if n2 == name {
                            v2[[r, c]] += eps;
                        }
                    }
                    let mut minus = f_c.clone();
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
    fn context_with_empty_summary_fails_validation() {
        let ctx = CountryContext {
            donor_summary: "Japan's aid policy focuses on infrastructure.".into(),
            recipient_summary: "  ".into(),
            income_group: IncomeGroup::LMICs,
            donor_code: 701,
            recipient_code: 625,
            provenance: Provenance {
                provider_id: "p".into(),
                donor_prompt_hash: "a".into(),
                recipient_prompt_hash: "b".into(),
                truncated: false,
            },
        };
        assert!(ctx.validate().is_err());
    }
}

//! Multi-label evaluation: pooled and per-goal precision, recall, F1, and
//! rank-based AUROC, plus the four-variant ablation harness.

use serde::{Deserialize, Serialize};

use crate::corpus::GoalDefinition;
use crate::error::{Error, Result};
use crate::model::{Ablation, Model, ModelConfig};
use crate::trainer::{train, EpochLog, TrainConfig, TrainItem, TrainOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Pool every (sample, goal) cell into one confusion matrix.
    Micro,
    /// Average per-goal scores over goals with at least one positive.
    Macro,
    /// Macro headline numbers plus the full per-goal table.
    PerGoal,
}

/// One goal's row in the per-goal breakdown. Goals are 1-indexed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoalMetrics {
    pub goal: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the goal lacks a positive or a negative in the truth.
    pub auroc: Option<f64>,
    /// Positives in the truth.
    pub support: usize,
    pub predicted: usize,
    /// No positives and no predictions: the zero scores are a convention,
    /// not an observation.
    pub no_support: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when no goal offers both classes.
    pub auroc: Option<f64>,
    pub averaging: Averaging,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_goal: Option<Vec<GoalMetrics>>,
    pub n_samples: usize,
    /// Goals dropped from the AUROC because the truth holds only one class.
    pub auroc_excluded_goals: Vec<usize>,
}

struct Validated {
    n: usize,
    g: usize,
}

fn validate(
    probabilities: &[Vec<f64>],
    predictions: &[Vec<u8>],
    labels: &[Vec<u8>],
) -> Result<Validated> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyInput("no evaluation samples".into()));
    }
    if probabilities.len() != n || predictions.len() != n {
        return Err(Error::Shape(format!(
            "row counts disagree: {} probabilities, {} predictions, {n} labels",
            probabilities.len(),
            predictions.len()
        )));
    }
    let g = labels[0].len();
    if g == 0 {
        return Err(Error::Shape("zero goal columns".into()));
    }
    for i in 0..n {
        if probabilities[i].len() != g || predictions[i].len() != g || labels[i].len() != g {
            return Err(Error::Shape(format!("row {i} width differs from {g}")));
        }
        for &p in &probabilities[i] {
            if !p.is_finite() {
                return Err(Error::Numeric(format!("non-finite probability in row {i}")));
            }
        }
        for &v in predictions[i].iter().chain(labels[i].iter()) {
            if v > 1 {
                return Err(Error::Label(format!("row {i} holds a non-binary entry {v}")));
            }
        }
    }
    Ok(Validated { n, g })
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Mann-Whitney AUROC with average ranks for ties. `None` when either class
/// is missing.
fn rank_auroc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks; a tie block shares the mean of its rank span.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

struct GoalCells {
    tp: usize,
    fp: usize,
    fn_: usize,
    support: usize,
    predicted: usize,
    has_neg: bool,
}

fn per_goal_cells(predictions: &[Vec<u8>], labels: &[Vec<u8>], g: usize) -> Vec<GoalCells> {
    (0..g)
        .map(|goal| {
            let (mut tp, mut fp, mut fn_, mut support, mut predicted, mut neg) =
                (0, 0, 0, 0, 0, 0);
            for (p_row, t_row) in predictions.iter().zip(labels) {
                let (p, t) = (p_row[goal], t_row[goal]);
                support += usize::from(t == 1);
                predicted += usize::from(p == 1);
                neg += usize::from(t == 0);
                match (p, t) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 1) => fn_ += 1,
                    _ => {}
                }
            }
            GoalCells { tp, fp, fn_, support, predicted, has_neg: neg > 0 }
        })
        .collect()
}

/// Pooled or per-goal-averaged scores over a multi-hot prediction set.
pub fn multilabel_metrics(
    probabilities: &[Vec<f64>],
    predictions: &[Vec<u8>],
    labels: &[Vec<u8>],
    averaging: Averaging,
) -> Result<MetricReport> {
    let Validated { n, g } = validate(probabilities, predictions, labels)?;
    let cells = per_goal_cells(predictions, labels, g);

    // Goals whose truth column holds a single class give no rank signal.
    let auroc_excluded_goals: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.support == 0 || !c.has_neg)
        .map(|(i, _)| i + 1)
        .collect();

    let goal_auroc: Vec<Option<f64>> = (0..g)
        .map(|goal| {
            let scores: Vec<f64> = probabilities.iter().map(|r| r[goal]).collect();
            let truth: Vec<bool> = labels.iter().map(|r| r[goal] == 1).collect();
            rank_auroc(&scores, &truth)
        })
        .collect();

    let (precision, recall, f1, auroc) = match averaging {
        Averaging::Micro => {
            let tp: usize = cells.iter().map(|c| c.tp).sum();
            let fp: usize = cells.iter().map(|c| c.fp).sum();
            let fn_: usize = cells.iter().map(|c| c.fn_).sum();
            let (p, r, f) = prf(tp, fp, fn_);
            // Pool the cells of every goal that kept its AUROC.
            let mut scores = Vec::new();
            let mut truth = Vec::new();
            for goal in 0..g {
                if auroc_excluded_goals.contains(&(goal + 1)) {
                    continue;
                }
                for (p_row, t_row) in probabilities.iter().zip(labels) {
                    scores.push(p_row[goal]);
                    truth.push(t_row[goal] == 1);
                }
            }
            (p, r, f, rank_auroc(&scores, &truth))
        }
        Averaging::Macro | Averaging::PerGoal => {
            let mut sums = (0.0, 0.0, 0.0);
            let mut counted = 0usize;
            for c in &cells {
                if c.support == 0 {
                    continue;
                }
                let (p, r, f) = prf(c.tp, c.fp, c.fn_);
                sums.0 += p;
                sums.1 += r;
                sums.2 += f;
                counted += 1;
            }
            let (p, r, f) = if counted > 0 {
                let k = counted as f64;
                (sums.0 / k, sums.1 / k, sums.2 / k)
            } else {
                (0.0, 0.0, 0.0)
            };
            let kept: Vec<f64> = goal_auroc.iter().filter_map(|a| *a).collect();
            let auroc = if kept.is_empty() {
                None
            } else {
                Some(kept.iter().sum::<f64>() / kept.len() as f64)
            };
            (p, r, f, auroc)
        }
    };

    let per_goal = if averaging == Averaging::PerGoal {
        Some(
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let (p, r, f) = prf(c.tp, c.fp, c.fn_);
                    GoalMetrics {
                        goal: i + 1,
                        precision: p,
                        recall: r,
                        f1: f,
                        auroc: goal_auroc[i],
                        support: c.support,
                        predicted: c.predicted,
                        no_support: c.support == 0 && c.predicted == 0,
                    }
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(MetricReport {
        precision,
        recall,
        f1,
        auroc,
        averaging,
        per_goal,
        n_samples: n,
        auroc_excluded_goals,
    })
}

/// One row of P/R/F1/AUROC per goal column.
pub fn per_goal_report(
    probabilities: &[Vec<f64>],
    predictions: &[Vec<u8>],
    labels: &[Vec<u8>],
) -> Result<Vec<GoalMetrics>> {
    let report = multilabel_metrics(probabilities, predictions, labels, Averaging::PerGoal)?;
    Ok(report.per_goal.expect("per-goal averaging fills the table"))
}

/// Model outputs on an evaluation split, aligned row by row.
pub struct EvalMatrices {
    pub probabilities: Vec<Vec<f64>>,
    pub predictions: Vec<Vec<u8>>,
    pub labels: Vec<Vec<u8>>,
}

/// Run inference over labeled items and collect metric inputs.
pub fn evaluate_model(
    model: &Model,
    items: &[TrainItem],
    goal_defs: &[GoalDefinition],
    ablation: Ablation,
    threshold: f64,
) -> Result<EvalMatrices> {
    let goal_ids = model.goal_ids(goal_defs)?;
    let mut out = EvalMatrices {
        probabilities: Vec::with_capacity(items.len()),
        predictions: Vec::with_capacity(items.len()),
        labels: Vec::with_capacity(items.len()),
    };
    for item in items {
        let truth = item.record.sdg_labels.ok_or_else(|| {
            Error::Label(format!("evaluation record {} has no labels", item.record.id))
        })?;
        let prepared = model.prepare(&item.record, &item.context, &item.decision)?;
        let pred = model.predict(&prepared, &goal_ids, ablation, threshold)?;
        let mut hot = vec![0u8; pred.probabilities.len()];
        for &goal in &pred.labels {
            hot[goal - 1] = 1;
        }
        out.probabilities.push(pred.probabilities);
        out.predictions.push(hot);
        out.labels.push(truth.as_slice().to_vec());
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub micro: MetricReport,
    pub macro_avg: MetricReport,
    pub epochs: Vec<EpochLog>,
}

/// Previously reported full-corpus results, shipped for side-by-side display
/// in the ablation table. Never asserted against: the corpus, backbone, and
/// provider behind them are not reproducible here.
pub const REFERENCE_RESULTS: [(&str, f64, f64, f64, f64); 4] = [
    ("full", 0.8684, 0.8192, 0.8430, 0.9617),
    ("no_semantics", 0.8631, 0.8121, 0.8368, 0.9588),
    ("no_country", 0.8671, 0.8143, 0.8399, 0.9594),
    ("no_decision", 0.8787, 0.7971, 0.8359, 0.9609),
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Fixed-width text table: one computed row per variant, then the
    /// reference results for visual comparison.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<14} {:>10} {:>10} {:>10} {:>10}\n",
            "variant", "precision", "recall", "f1", "auroc"
        ));
        for row in &self.rows {
            let m = &row.micro;
            s.push_str(&format!(
                "{:<14} {:>10.4} {:>10.4} {:>10.4} {:>10}\n",
                row.variant,
                m.precision,
                m.recall,
                m.f1,
                m.auroc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
            ));
        }
        s.push_str("\nreference (reported on the full corpus; not a target):\n");
        for (name, p, r, f, a) in REFERENCE_RESULTS {
            s.push_str(&format!(
                "{name:<14} {p:>10.4} {r:>10.4} {f:>10.4} {a:>10.4}\n"
            ));
        }
        s
    }
}

/// Everything an ablation sweep shares across variants.
pub struct AblationSpec<'a> {
    pub model_config: ModelConfig,
    pub init_seed: u64,
    pub train: &'a [TrainItem],
    pub eval: &'a [TrainItem],
    pub goal_defs: &'a [GoalDefinition],
    pub train_config: TrainConfig,
}

fn spec_texts(spec: &AblationSpec) -> Vec<String> {
    let mut texts = Vec::new();
    for item in spec.train.iter().chain(spec.eval) {
        texts.push(item.record.description.clone());
        texts.push(item.context.donor_summary.clone());
        texts.push(item.context.recipient_summary.clone());
    }
    for def in spec.goal_defs {
        texts.push(crate::encoder::goal_text(def));
    }
    texts
}

/// Train and evaluate each named variant from the same initial weights,
/// record order, and sampling seeds.
pub fn run_ablation(spec: &AblationSpec, variants: &[&str]) -> Result<AblationTable> {
    let ablations: Vec<(String, Ablation)> = variants
        .iter()
        .map(|&name| Ablation::from_variant(name).map(|a| (name.to_string(), a)))
        .collect::<Result<_>>()?;

    let texts = spec_texts(spec);
    let mut rows = Vec::with_capacity(ablations.len());
    for (variant, ablation) in ablations {
        let mut model = Model::init(
            spec.model_config.clone(),
            texts.iter().map(|s| s.as_str()),
            spec.init_seed,
        )?;
        let options = TrainOptions { ablation, ..Default::default() };
        let report = train(
            &mut model,
            spec.train,
            spec.goal_defs,
            &spec.train_config,
            &options,
        )?;
        let m = evaluate_model(
            &model,
            spec.eval,
            spec.goal_defs,
            ablation,
            spec.train_config.prediction_threshold,
        )?;
        let micro =
            multilabel_metrics(&m.probabilities, &m.predictions, &m.labels, Averaging::Micro)?;
        let macro_avg =
            multilabel_metrics(&m.probabilities, &m.predictions, &m.labels, Averaging::Macro)?;
        rows.push(AblationRow { variant, micro, macro_avg, epochs: report.epochs });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IncomeGroup, Labels, ProjectRecord};
    use crate::country::{CountryContext, Provenance};
    use crate::data::default_goal_definitions;
    use crate::decision::DecisionVector;
    use crate::encoder::EncoderConfig;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn perfect_case() -> (Vec<Vec<f64>>, Vec<Vec<u8>>, Vec<Vec<u8>>) {
        let labels = vec![
            vec![1, 0, 1],
            vec![0, 1, 0],
            vec![1, 1, 0],
            vec![0, 0, 1],
        ];
        let probs: Vec<Vec<f64>> = labels
            .iter()
            .map(|row| row.iter().map(|&v| if v == 1 { 0.9 } else { 0.1 }).collect())
            .collect();
        (probs, labels.clone(), labels)
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let (probs, preds, labels) = perfect_case();
        for averaging in [Averaging::Micro, Averaging::Macro] {
            let r = multilabel_metrics(&probs, &preds, &labels, averaging).unwrap();
            assert_eq!(r.precision, 1.0);
            assert_eq!(r.recall, 1.0);
            assert_eq!(r.f1, 1.0);
            assert_eq!(r.auroc, Some(1.0));
            assert!(r.auroc_excluded_goals.is_empty());
        }
    }

    #[test]
    fn complemented_predictions_score_zero() {
        let (probs, preds, labels) = perfect_case();
        let flipped: Vec<Vec<u8>> = preds
            .iter()
            .map(|row| row.iter().map(|&v| 1 - v).collect())
            .collect();
        for averaging in [Averaging::Micro, Averaging::Macro] {
            let r = multilabel_metrics(&probs, &flipped, &labels, averaging).unwrap();
            assert_eq!(r.precision, 0.0);
            assert_eq!(r.recall, 0.0);
            assert_eq!(r.f1, 0.0);
        }
    }

    #[test]
    fn six_sample_toy_case_matches_both_oracles() {
        let labels: Vec<Vec<u8>> = vec![
            vec![1, 0, 0],
            vec![1, 1, 0],
            vec![0, 1, 0],
            vec![0, 0, 1],
            vec![1, 0, 1],
            vec![0, 1, 0],
        ];
        let preds: Vec<Vec<u8>> = vec![
            vec![1, 0, 0],
            vec![0, 1, 1],
            vec![0, 1, 0],
            vec![1, 0, 1],
            vec![1, 0, 0],
            vec![0, 0, 0],
        ];
        let probs: Vec<Vec<f64>> = vec![
            vec![0.9, 0.2, 0.1],
            vec![0.4, 0.8, 0.6],
            vec![0.3, 0.7, 0.2],
            vec![0.6, 0.1, 0.8],
            vec![0.8, 0.3, 0.4],
            vec![0.2, 0.4, 0.2],
        ];
        let micro = multilabel_metrics(&probs, &preds, &labels, Averaging::Micro).unwrap();
        let (p, r, f) = sdgmap_testkit::micro_prf(&preds, &labels);
        assert!((micro.precision - p).abs() < 1e-9);
        assert!((micro.recall - r).abs() < 1e-9);
        assert!((micro.f1 - f).abs() < 1e-9);

        let macro_r = multilabel_metrics(&probs, &preds, &labels, Averaging::Macro).unwrap();
        let (mp, mr, mf) = sdgmap_testkit::macro_prf(&preds, &labels, 3);
        assert!((macro_r.precision - mp).abs() < 1e-9);
        assert!((macro_r.recall - mr).abs() < 1e-9);
        assert!((macro_r.f1 - mf).abs() < 1e-9);

        // Macro AUROC against the exhaustive pairwise statistic per goal.
        let mut expected = Vec::new();
        for goal in 0..3 {
            let scores: Vec<f64> = probs.iter().map(|r| r[goal]).collect();
            let truth: Vec<u8> = labels.iter().map(|r| r[goal]).collect();
            expected.push(sdgmap_testkit::pairwise_auroc(&scores, &truth).unwrap());
        }
        let want = expected.iter().sum::<f64>() / expected.len() as f64;
        assert!((macro_r.auroc.unwrap() - want).abs() < 1e-9);

        // Micro AUROC pools every cell (all three goals are two-class here).
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for goal in 0..3 {
            for (p_row, t_row) in probs.iter().zip(&labels) {
                scores.push(p_row[goal]);
                truth.push(t_row[goal]);
            }
        }
        let want_micro = sdgmap_testkit::pairwise_auroc(&scores, &truth).unwrap();
        assert!((micro.auroc.unwrap() - want_micro).abs() < 1e-9);
    }

    #[test]
    fn random_instances_match_the_oracles() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(404);
        for _ in 0..100 {
            let n = rng.random_range(1..=20);
            let g = rng.random_range(1..=5);
            let mut labels = Vec::new();
            let mut preds = Vec::new();
            let mut probs = Vec::new();
            for _ in 0..n {
                labels.push((0..g).map(|_| rng.random_range(0..=1u8)).collect::<Vec<_>>());
                preds.push((0..g).map(|_| rng.random_range(0..=1u8)).collect::<Vec<_>>());
                // Coarse grid so ties actually happen.
                probs.push(
                    (0..g)
                        .map(|_| rng.random_range(0..=4) as f64 / 4.0)
                        .collect::<Vec<_>>(),
                );
            }
            let micro = multilabel_metrics(&probs, &preds, &labels, Averaging::Micro).unwrap();
            let (p, r, f) = sdgmap_testkit::micro_prf(&preds, &labels);
            assert_eq!(micro.precision, p);
            assert_eq!(micro.recall, r);
            assert_eq!(micro.f1, f);

            let macro_r = multilabel_metrics(&probs, &preds, &labels, Averaging::Macro).unwrap();
            let (mp, mr, mf) = sdgmap_testkit::macro_prf(&preds, &labels, g);
            assert_eq!(macro_r.precision, mp);
            assert_eq!(macro_r.recall, mr);
            assert_eq!(macro_r.f1, mf);

            // Per-goal AUROC against the pairwise oracle, ties at one half.
            let table = per_goal_report(&probs, &preds, &labels).unwrap();
            for (goal, row) in table.iter().enumerate() {
                let scores: Vec<f64> = probs.iter().map(|r| r[goal]).collect();
                let truth: Vec<u8> = labels.iter().map(|r| r[goal]).collect();
                match (row.auroc, sdgmap_testkit::pairwise_auroc(&scores, &truth)) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
                    (None, None) => {}
                    (a, b) => panic!("auroc presence disagrees: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn metrics_survive_sample_permutation() {
        let (probs, preds, labels) = perfect_case();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.reverse();
        let pick = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            order.iter().map(|&i| rows[i].clone()).collect()
        };
        let pick_u8 =
            |rows: &[Vec<u8>]| -> Vec<Vec<u8>> { order.iter().map(|&i| rows[i].clone()).collect() };
        let a = multilabel_metrics(&probs, &preds, &labels, Averaging::Macro).unwrap();
        let b = multilabel_metrics(&pick(&probs), &pick_u8(&preds), &pick_u8(&labels), Averaging::Macro)
            .unwrap();
        assert!((a.precision - b.precision).abs() < 1e-12);
        assert!((a.recall - b.recall).abs() < 1e-12);
        assert!((a.f1 - b.f1).abs() < 1e-12);
        assert!((a.auroc.unwrap() - b.auroc.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn silent_goal_gets_the_no_support_flag() {
        let labels = vec![vec![1, 0], vec![1, 0]];
        let preds = vec![vec![1, 0], vec![0, 0]];
        let probs = vec![vec![0.9, 0.2], vec![0.4, 0.1]];
        let table = per_goal_report(&probs, &preds, &labels).unwrap();
        assert!(!table[0].no_support);
        assert!(table[1].no_support);
        assert_eq!(table[1].precision, 0.0);
        assert_eq!(table[1].recall, 0.0);
        assert_eq!(table[1].f1, 0.0);
        assert_eq!(table[1].auroc, None);
    }

    #[test]
    fn single_class_goals_leave_the_auroc_pool() {
        // Goal 2 has no positives, goal 3 no negatives.
        let labels = vec![vec![1, 0, 1], vec![0, 0, 1]];
        let preds = vec![vec![1, 1, 1], vec![0, 0, 1]];
        let probs = vec![vec![0.8, 0.6, 0.9], vec![0.3, 0.2, 0.7]];
        let r = multilabel_metrics(&probs, &preds, &labels, Averaging::Micro).unwrap();
        assert_eq!(r.auroc_excluded_goals, vec![2, 3]);
        // Only goal 1 feeds the pooled statistic.
        let want = sdgmap_testkit::pairwise_auroc(&[0.8, 0.3], &[1, 0]).unwrap();
        assert!((r.auroc.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let labels = vec![vec![1, 0], vec![0, 1]];
        let preds = vec![vec![1, 0]];
        let probs = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        assert!(matches!(
            multilabel_metrics(&probs, &preds, &labels, Averaging::Micro),
            Err(Error::Shape(_))
        ));
        let ragged = vec![vec![1, 0], vec![0, 1, 1]];
        assert!(matches!(
            multilabel_metrics(&probs, &preds, &ragged, Averaging::Micro),
            Err(Error::Shape(_))
        ));
    }

    fn tiny_items() -> Vec<TrainItem> {
        let context = CountryContext {
            donor_summary: "donor priorities stress basic services".into(),
            recipient_summary: "recipient plan centers rural needs".into(),
            income_group: IncomeGroup::LMICs,
            donor_code: 302,
            recipient_code: 425,
            provenance: Provenance {
                provider_id: "fixture".into(),
                donor_prompt_hash: "d".into(),
                recipient_prompt_hash: "r".into(),
                truncated: false,
            },
        };
        let rows: [(&str, &str, usize); 6] = [
            ("t1", "clean water boreholes for rural towns", 6),
            ("t2", "classroom building and school books", 4),
            ("t3", "clinic staffing and essential medicine", 3),
            ("t4", "drip irrigation for smallholder plots", 2),
            ("t5", "village solar power installations", 7),
            ("t6", "job training for young workers", 8),
        ];
        rows.iter()
            .map(|(id, desc, goal)| TrainItem {
                record: ProjectRecord {
                    id: id.to_string(),
                    description: desc.to_string(),
                    donor_code: 302,
                    recipient_code: 425,
                    year: 2020,
                    commitment_usd: 2.0,
                    sdg_labels: Some(Labels::from_goals(&[*goal]).unwrap()),
                },
                context: context.clone(),
                decision: DecisionVector::new(
                    [*goal].into_iter().collect(),
                    String::new(),
                    "fixture".into(),
                    "h".into(),
                )
                .unwrap(),
            })
            .collect()
    }

    fn tiny_spec<'a>(train: &'a [TrainItem], eval: &'a [TrainItem], defs: &'a [crate::corpus::GoalDefinition]) -> AblationSpec<'a> {
        AblationSpec {
            model_config: ModelConfig {
                encoder: EncoderConfig {
                    d_h: 8,
                    max_tokens: 12,
                    max_words: 128,
                    num_blocks: 1,
                    ffn_hidden: 8,
                    ..EncoderConfig::default()
                },
                ..ModelConfig::default()
            },
            init_seed: 5,
            train,
            eval,
            goal_defs: defs,
            train_config: TrainConfig {
                learning_rate: 1e-3,
                epochs: 2,
                batch_size: 3,
                seed: 9,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn ablation_sweep_yields_one_bounded_row_per_variant() {
        let items = tiny_items();
        let defs = default_goal_definitions().unwrap();
        let spec = tiny_spec(&items[..4], &items[4..], &defs);
        let table = run_ablation(
            &spec,
            &["full", "no_semantics", "no_country", "no_decision"],
        )
        .unwrap();
        assert_eq!(table.rows.len(), 4);
        for row in &table.rows {
            for m in [&row.micro, &row.macro_avg] {
                for v in [m.precision, m.recall, m.f1] {
                    assert!((0.0..=1.0).contains(&v), "{} out of range: {v}", row.variant);
                }
                if let Some(a) = m.auroc {
                    assert!((0.0..=1.0).contains(&a));
                }
            }
        }
        let no_sem = table.rows.iter().find(|r| r.variant == "no_semantics").unwrap();
        assert!(no_sem.epochs.iter().all(|e| e.l_g == 0.0));
        let text = table.render_text();
        assert!(text.contains("no_country"));
        assert!(text.contains("0.8684"));
    }

    #[test]
    fn unknown_variant_name_is_a_config_error() {
        let items = tiny_items();
        let defs = default_goal_definitions().unwrap();
        let spec = tiny_spec(&items[..4], &items[4..], &defs);
        assert!(matches!(
            run_ablation(&spec, &["full", "no_attention"]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reference_rows_cover_all_four_variants() {
        let names: Vec<&str> = REFERENCE_RESULTS.iter().map(|r| r.0).collect();
        assert_eq!(names, vec!["full", "no_semantics", "no_country", "no_decision"]);
        for (_, p, r, f, a) in REFERENCE_RESULTS {
            for v in [p, r, f, a] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

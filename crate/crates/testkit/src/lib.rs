//! Scalar-loop reference implementations used as oracles in tests.
//!
//! Everything here is written with plain nested loops over `Vec<Vec<f64>>`
//! so that it shares no code path with the production kernels it checks.

pub mod noise;

/// Plain matrix product with explicit triple loop.
pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        assert_eq!(a[i].len(), k);
        for j in 0..m {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a[i][t] * b[t][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&v| v / sum).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean across rows of a token matrix, one entry per column.
pub fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    assert!(n > 0);
    let d = rows[0].len();
    let mut out = vec![0.0; d];
    for row in rows {
        for c in 0..d {
            out[c] += row[c];
        }
    }
    for v in &mut out {
        *v /= n as f64;
    }
    out
}

/// Scaled dot-product attention scores between token and goal embeddings:
/// `A[i][j] = (wq·e_i)·(wk·g_j) / sqrt(d_h)`.
///
/// `wq`/`wk` are d_h×d_h row-major weight matrices applied as `x · W`.
pub fn goal_attention_scores(
    tokens: &[Vec<f64>],
    goals: &[Vec<f64>],
    wq: &[Vec<f64>],
    wk: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let d = wq.len();
    let scale = 1.0 / (d as f64).sqrt();
    let q = matmul(tokens, wq);
    let k = matmul(goals, wk);
    let mut scores = vec![vec![0.0; goals.len()]; tokens.len()];
    for i in 0..tokens.len() {
        for j in 0..goals.len() {
            let mut acc = 0.0;
            for t in 0..d {
                acc += q[i][t] * k[j][t];
            }
            scores[i][j] = acc * scale;
        }
    }
    scores
}

/// Row-wise softmax over `(scores + gumbel) / temperature`.
pub fn gumbel_probs(scores: &[Vec<f64>], gumbel: &[Vec<f64>], temperature: f64) -> Vec<Vec<f64>> {
    scores
        .iter()
        .zip(gumbel.iter())
        .map(|(srow, grow)| {
            let logits: Vec<f64> = srow
                .iter()
                .zip(grow.iter())
                .map(|(&s, &g)| (s + g) / temperature)
                .collect();
            softmax_row(&logits)
        })
        .collect()
}

/// Token importance: sum of perturbed probabilities over the true-label goals.
pub fn token_importance(probs: &[Vec<f64>], label_goals: &[usize]) -> Vec<f64> {
    probs
        .iter()
        .map(|row| label_goals.iter().map(|&j| row[j]).sum())
        .collect()
}

/// Cross-attention pooling: tokens are queries, the key vector is the key,
/// softmax runs over valid tokens, and the output is the mean over valid
/// positions of score-weighted token embeddings. Pass `weighted_sum` to get
/// the plain softmax-weighted sum instead of the mean-of-weighted-rows.
pub fn cross_attention(
    key: &[f64],
    tokens: &[Vec<f64>],
    wq: &[Vec<f64>],
    wk: &[Vec<f64>],
    valid: &[bool],
    weighted_sum: bool,
) -> Vec<f64> {
    let d = wq.len();
    let scale = 1.0 / (d as f64).sqrt();
    let q = matmul(tokens, wq);
    let k = matmul(&[key.to_vec()], wk);
    let mut logits = Vec::new();
    let mut kept = Vec::new();
    for (i, is_valid) in valid.iter().enumerate() {
        if *is_valid {
            let mut acc = 0.0;
            for t in 0..d {
                acc += q[i][t] * k[0][t];
            }
            logits.push(acc * scale);
            kept.push(i);
        }
    }
    assert!(!kept.is_empty(), "cross_attention with no valid tokens");
    let weights = softmax_row(&logits);
    let n = if weighted_sum { 1.0 } else { kept.len() as f64 };
    let dim = tokens[0].len();
    let mut out = vec![0.0; dim];
    for (w, &i) in weights.iter().zip(kept.iter()) {
        for c in 0..dim {
            out[c] += w * tokens[i][c] / n;
        }
    }
    out
}

/// Feed-forward network with ReLU between layers (never after the last).
/// Each layer is `(weights d_in×d_out, bias d_out)` applied as `x·W + b`.
pub fn mlp_forward(x: &[f64], layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for (idx, (w, b)) in layers.iter().enumerate() {
        let mut next = b.clone();
        for (j, nj) in next.iter_mut().enumerate() {
            for (i, &xi) in cur.iter().enumerate() {
                *nj += xi * w[i][j];
            }
        }
        if idx + 1 < layers.len() {
            for v in &mut next {
                *v = v.max(0.0);
            }
        }
        cur = next;
    }
    cur
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = (a.iter().map(|v| v * v).sum::<f64>() + 1e-24).sqrt();
    let nb: f64 = (b.iter().map(|v| v * v).sum::<f64>() + 1e-24).sqrt();
    dot / (na * nb)
}

/// Contrastive loss over a batch of projected (original, positive) pairs.
///
/// For anchor i the numerator is `exp(cos(z_i, p_i))`; the denominator sums
/// the numerator and `exp(cos(z_i, z_n))` over every other anchor n ≠ i.
/// Returns the mean of per-anchor `−ln(num/den)`.
pub fn contrastive_loss(originals: &[Vec<f64>], positives: &[Vec<f64>]) -> f64 {
    let n = originals.len();
    assert!(n >= 2, "contrastive loss needs at least two anchors");
    let mut total = 0.0;
    for i in 0..n {
        let num = cosine(&originals[i], &positives[i]).exp();
        let mut den = num;
        for j in 0..n {
            if j != i {
                den += cosine(&originals[i], &originals[j]).exp();
            }
        }
        total += -(num / den).ln();
    }
    total / n as f64
}

/// Mean binary cross-entropy over logits with 0/1 targets.
pub fn bce_mean(logits: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(logits.len(), targets.len());
    let mut total = 0.0;
    for (&z, &t) in logits.iter().zip(targets.iter()) {
        let p = sigmoid(z);
        total += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    }
    total / logits.len() as f64
}

/// Calibrated fusion `base + alpha · aux`.
pub fn calibrate(base: &[f64], aux: &[f64], alpha: f64) -> Vec<f64> {
    base.iter().zip(aux.iter()).map(|(b, a)| b + alpha * a).collect()
}

/// Micro-averaged precision/recall/F1 from per-(record, label) 0/1 pairs.
pub fn micro_prf(pred: &[Vec<u8>], truth: &[Vec<u8>]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
    for (p_row, t_row) in pred.iter().zip(truth.iter()) {
        for (&p, &t) in p_row.iter().zip(t_row.iter()) {
            match (p, t) {
                (1, 1) => tp += 1.0,
                (1, 0) => fp += 1.0,
                (0, 1) => fnn += 1.0,
                _ => {}
            }
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// Macro-averaged P/R/F1: per-label scores averaged over labels with at
/// least one positive in the truth.
pub fn macro_prf(pred: &[Vec<u8>], truth: &[Vec<u8>], n_labels: usize) -> (f64, f64, f64) {
    let mut sums = (0.0, 0.0, 0.0);
    let mut counted = 0.0;
    for label in 0..n_labels {
        let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
        for (p_row, t_row) in pred.iter().zip(truth.iter()) {
            match (p_row[label], t_row[label]) {
                (1, 1) => tp += 1.0,
                (1, 0) => fp += 1.0,
                (0, 1) => fnn += 1.0,
                _ => {}
            }
        }
        if tp + fnn == 0.0 {
            continue;
        }
        counted += 1.0;
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        sums.0 += p;
        sums.1 += r;
        sums.2 += f;
    }
    if counted == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        (sums.0 / counted, sums.1 / counted, sums.2 / counted)
    }
}

/// AUROC by exhaustive pairwise comparison; ties count one half.
/// Returns `None` when either class is empty.
pub fn pairwise_auroc(scores: &[f64], targets: &[u8]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(targets)
        .filter(|(_, &t)| t == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(targets)
        .filter(|(_, &t)| t == 0)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Residual squared error of a nonnegative weight fit:
/// `sum_i (s_i − sum_k c[i][k]·w[k])²`.
pub fn fit_residual(counts: &[Vec<f64>], totals: &[f64], weights: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (row, &s) in counts.iter().zip(totals.iter()) {
        let est: f64 = row.iter().zip(weights.iter()).map(|(c, w)| c * w).sum();
        acc += (s - est) * (s - est);
    }
    acc
}

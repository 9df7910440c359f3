//! Budget analysis: impute labels for unlabeled records, fit nonnegative
//! per-goal budget weights against annual totals, split commitments over
//! goals, and emit trend tables and plots.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CountryCodebook, GoalDefinition, IncomeGroup, Labels, ProjectRecord, NUM_GOALS};
use crate::country::CountryContext;
use crate::decision::DecisionVector;
use crate::error::{Error, Result};
use crate::model::{Ablation, Model};

/// Projects per goal per year. A record with k goals adds one to each of
/// its k goal columns for its year.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearGoalCounts {
    /// Sorted, unique years with at least one labeled record.
    pub years: Vec<i32>,
    /// One row per year, aligned with `years`.
    pub counts: Vec<[u64; NUM_GOALS]>,
}

impl YearGoalCounts {
    /// Count labeled records only; unlabeled rows are imputation input, not
    /// statistics.
    pub fn from_records(records: &[ProjectRecord]) -> Self {
        let mut by_year: BTreeMap<i32, [u64; NUM_GOALS]> = BTreeMap::new();
        for r in records {
            let Some(labels) = &r.sdg_labels else { continue };
            let row = by_year.entry(r.year).or_insert([0; NUM_GOALS]);
            for goal in labels.goals() {
                row[goal - 1] += 1;
            }
        }
        let years: Vec<i32> = by_year.keys().copied().collect();
        let counts = by_year.into_values().collect();
        YearGoalCounts { years, counts }
    }

    pub fn row(&self, year: i32) -> Option<&[u64; NUM_GOALS]> {
        self.years.iter().position(|&y| y == year).map(|i| &self.counts[i])
    }

    /// Sum of commitments over labeled records, aligned with `years`.
    pub fn aligned_budget_sums(&self, records: &[ProjectRecord]) -> Vec<f64> {
        let mut sums = vec![0.0; self.years.len()];
        for r in records {
            if r.sdg_labels.is_none() {
                continue;
            }
            if let Some(i) = self.years.iter().position(|&y| y == r.year) {
                sums[i] += r.commitment_usd;
            }
        }
        sums
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    /// Largest weight rescaled to exactly 1.
    MaxNormalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetWeights {
    pub w: [f64; NUM_GOALS],
    pub normalization: Normalization,
    /// Squared residual of the fit at these weights (raw scale).
    pub fit_residual: f64,
}

impl BudgetWeights {
    pub fn max_normalized(&self) -> BudgetWeights {
        let max = self.w.iter().cloned().fold(0.0f64, f64::max);
        let mut w = self.w;
        if max > 0.0 {
            for v in &mut w {
                *v /= max;
            }
        }
        BudgetWeights {
            w,
            normalization: Normalization::MaxNormalized,
            fit_residual: self.fit_residual,
        }
    }
}

/// Dense column-major view used by the solver.
fn column(a: &[Vec<f64>], j: usize) -> impl Iterator<Item = f64> + '_ {
    a.iter().map(move |row| row[j])
}

/// Solve (A_PᵀA_P) z = A_Pᵀ b over the passive columns by Gaussian
/// elimination with partial pivoting. `None` when the subproblem is
/// numerically singular.
fn solve_passive(a: &[Vec<f64>], b: &[f64], passive: &[usize]) -> Option<Vec<f64>> {
    let k = passive.len();
    let mut g = vec![vec![0.0f64; k + 1]; k];
    for (gi, &ci) in passive.iter().enumerate() {
        for (gj, &cj) in passive.iter().enumerate() {
            g[gi][gj] = column(a, ci).zip(column(a, cj)).map(|(x, y)| x * y).sum();
        }
        g[gi][k] = column(a, ci).zip(b.iter()).map(|(x, &y)| x * y).sum();
    }
    for col in 0..k {
        let pivot_row = (col..k)
            .max_by(|&r1, &r2| g[r1][col].abs().partial_cmp(&g[r2][col].abs()).unwrap())?;
        if g[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        g.swap(col, pivot_row);
        for row in 0..k {
            if row == col {
                continue;
            }
            let factor = g[row][col] / g[col][col];
            for j in col..=k {
                g[row][j] -= factor * g[col][j];
            }
        }
    }
    Some((0..k).map(|i| g[i][k] / g[i][i]).collect())
}

/// Nonnegative least squares by active-set iteration: start all-zero, pull
/// in the column with the steepest positive gradient, and clip any passive
/// weight the unconstrained subfit drives below zero.
pub fn nnls(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    if n == 0 || a[0].is_empty() {
        return Err(Error::Shape("empty design matrix".into()));
    }
    let k = a[0].len();
    if a.iter().any(|row| row.len() != k) {
        return Err(Error::Shape("ragged design matrix".into()));
    }
    if b.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} targets", b.len())));
    }

    let mut w = vec![0.0f64; k];
    let mut passive = vec![false; k];
    let mut banned = vec![false; k];
    let grad_tol = {
        let g0: f64 = (0..k)
            .map(|j| column(a, j).zip(b.iter()).map(|(x, &y)| x * y).sum::<f64>().abs())
            .fold(0.0, f64::max);
        1e-10 * g0.max(1.0)
    };

    for _outer in 0..(3 * k + 10) {
        let residual: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(row, &bi)| bi - row.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>())
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..k {
            if passive[j] || banned[j] {
                continue;
            }
            let g: f64 = column(a, j).zip(&residual).map(|(x, r)| x * r).sum();
            if g > grad_tol && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((j, g));
            }
        }
        let Some((enter, _)) = best else {
            return Ok(w);
        };
        passive[enter] = true;

        for _inner in 0..(3 * k + 10) {
            let p_idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let Some(z) = solve_passive(a, b, &p_idx) else {
                // The new column is linearly dependent on the current set.
                passive[enter] = false;
                banned[enter] = true;
                break;
            };
            if z.iter().all(|&zi| zi > 0.0) {
                for (&j, &zi) in p_idx.iter().zip(&z) {
                    w[j] = zi;
                }
                for (j, flag) in passive.iter().enumerate() {
                    if !flag {
                        w[j] = 0.0;
                    }
                }
                break;
            }
            // Step toward z only as far as the first weight hits zero.
            let mut alpha = f64::INFINITY;
            for (&j, &zi) in p_idx.iter().zip(&z) {
                if zi <= 0.0 {
                    let denom = w[j] - zi;
                    if denom > 0.0 {
                        alpha = alpha.min(w[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                return Err(Error::Numeric("weight fit step became unbounded".into()));
            }
            for (&j, &zi) in p_idx.iter().zip(&z) {
                w[j] += alpha * (zi - w[j]);
                if w[j] <= 1e-12 {
                    w[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Err(Error::Numeric("weight fit did not converge".into()))
}

/// Fit nonnegative per-goal weights so yearly goal counts explain yearly
/// budget totals: minimize Σ_i (S_i − Σ_k c[i][k]·w_k)² with w ≥ 0.
pub fn fit_budget_weights(s: &[f64], c: &YearGoalCounts) -> Result<BudgetWeights> {
    if c.years.is_empty() {
        return Err(Error::DegenerateFit("no labeled years to fit against".into()));
    }
    if s.len() != c.years.len() {
        return Err(Error::Shape(format!(
            "{} budget sums for {} years",
            s.len(),
            c.years.len()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite budget sum".into()));
    }
    if c.counts.iter().all(|row| row.iter().all(|&v| v == 0)) {
        return Err(Error::DegenerateFit("counts matrix is all zeros".into()));
    }
    let a: Vec<Vec<f64>> = c
        .counts
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect();
    let w_vec = nnls(&a, s)?;
    let mut w = [0.0f64; NUM_GOALS];
    w.copy_from_slice(&w_vec);
    let fit_residual = a
        .iter()
        .zip(s)
        .map(|(row, &si)| {
            let est: f64 = row.iter().zip(&w).map(|(x, wi)| x * wi).sum();
            (si - est) * (si - est)
        })
        .sum();
    Ok(BudgetWeights { w, normalization: Normalization::Raw, fit_residual })
}

/// One previously reported proportion row. The printed description column
/// disagrees with UN goal numbering for goals 1 and 2 (the titles appear
/// swapped), so both the printed text and the UN title are kept; outputs
/// show the two side by side rather than silently choosing.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceProportion {
    pub goal: usize,
    pub printed_description: &'static str,
    pub un_title: &'static str,
    pub proportion: f64,
}

pub const REFERENCE_PROPORTIONS: [ReferenceProportion; 17] = [
    ReferenceProportion { goal: 1, printed_description: "Zero Hunger", un_title: "No Poverty", proportion: 0.06 },
    ReferenceProportion { goal: 2, printed_description: "No Poverty", un_title: "Zero Hunger", proportion: 0.41 },
    ReferenceProportion { goal: 3, printed_description: "Good Health and Well-being", un_title: "Good Health and Well-being", proportion: 0.97 },
    ReferenceProportion { goal: 4, printed_description: "Quality Education", un_title: "Quality Education", proportion: 0.02 },
    ReferenceProportion { goal: 5, printed_description: "Gender Equality", un_title: "Gender Equality", proportion: 0.18 },
    ReferenceProportion { goal: 6, printed_description: "Clean Water and Sanitation", un_title: "Clean Water and Sanitation", proportion: 0.11 },
    ReferenceProportion { goal: 7, printed_description: "Affordable and Clean Energy", un_title: "Affordable and Clean Energy", proportion: 0.25 },
    ReferenceProportion { goal: 8, printed_description: "Decent Work and Economic Growth", un_title: "Decent Work and Economic Growth", proportion: 1.00 },
    ReferenceProportion { goal: 9, printed_description: "Industry, Innovation, and Infrastructure", un_title: "Industry, Innovation, and Infrastructure", proportion: 0.36 },
    ReferenceProportion { goal: 10, printed_description: "Reduced Inequalities", un_title: "Reduced Inequalities", proportion: 0.33 },
    ReferenceProportion { goal: 11, printed_description: "Sustainable Cities and Communities", un_title: "Sustainable Cities and Communities", proportion: 0.29 },
    ReferenceProportion { goal: 12, printed_description: "Responsible Consumption and Production", un_title: "Responsible Consumption and Production", proportion: 0.34 },
    ReferenceProportion { goal: 13, printed_description: "Climate Action", un_title: "Climate Action", proportion: 0.20 },
    ReferenceProportion { goal: 14, printed_description: "Life Below Water", un_title: "Life Below Water", proportion: 0.24 },
    ReferenceProportion { goal: 15, printed_description: "Life on Land", un_title: "Life on Land", proportion: 0.39 },
    ReferenceProportion { goal: 16, printed_description: "Peace, Justice, and Strong Institutions", un_title: "Peace, Justice, and Strong Institutions", proportion: 0.60 },
    ReferenceProportion { goal: 17, printed_description: "Partnerships for the Goals", un_title: "Partnerships for the Goals", proportion: 0.26 },
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct ImputedRecord {
    pub record: ProjectRecord,
    /// True when the labels came from the model rather than the source.
    pub imputed: bool,
}

#[derive(Debug)]
pub struct ImputeOutcome {
    pub records: Vec<ImputedRecord>,
    pub skipped: Vec<SkippedRecord>,
}

/// Fill missing labels with thresholded model predictions. Original labels
/// are never overwritten. Records whose context or decision cannot be
/// resolved are skipped and reported; the run continues.
pub fn impute_labels<F>(
    model: &Model,
    records: &[ProjectRecord],
    goal_defs: &[GoalDefinition],
    ablation: Ablation,
    threshold: f64,
    mut resolve: F,
) -> Result<ImputeOutcome>
where
    F: FnMut(&ProjectRecord) -> Result<(CountryContext, DecisionVector)>,
{
    let goal_ids = model.goal_ids(goal_defs)?;
    let mut out = ImputeOutcome { records: Vec::with_capacity(records.len()), skipped: Vec::new() };
    for record in records {
        if record.sdg_labels.is_some() {
            out.records.push(ImputedRecord { record: record.clone(), imputed: false });
            continue;
        }
        let (context, decision) = match resolve(record) {
            Ok(pair) => pair,
            Err(e) => {
                out.skipped.push(SkippedRecord { id: record.id.clone(), reason: e.to_string() });
                continue;
            }
        };
        let prepared = model.prepare(record, &context, &decision)?;
        let pred = model.predict(&prepared, &goal_ids, ablation, threshold)?;
        let goals = if pred.labels.is_empty() {
            // Nothing cleared the threshold; keep the most probable goal so
            // the record still participates in the statistics.
            let best = pred
                .probabilities
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite probabilities"))
                .map(|(i, _)| i + 1)
                .expect("17 probabilities");
            vec![best]
        } else {
            pred.labels.clone()
        };
        let mut labeled = record.clone();
        labeled.sdg_labels = Some(Labels::from_goals(&goals)?);
        out.records.push(ImputedRecord { record: labeled, imputed: true });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AllocationProvenance {
    pub checkpoint_id: String,
    pub provider_id: String,
}

/// Split commitments over goals and aggregate. Two views are kept: the
/// commitment split (conserves money exactly) and the regression estimate
/// count·weight per year and goal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AllocationReport {
    pub years: Vec<i32>,
    /// Commitment split per year per goal; sums to the year's allocated
    /// commitments.
    pub allocated: BTreeMap<i32, [f64; NUM_GOALS]>,
    /// count × weight per year per goal.
    pub estimated: BTreeMap<i32, [f64; NUM_GOALS]>,
    pub group_allocated: BTreeMap<IncomeGroup, [f64; NUM_GOALS]>,
    /// Raw per-group shares of the split commitments; each row sums to 1
    /// when the group allocated anything.
    pub group_shares: BTreeMap<IncomeGroup, [f64; NUM_GOALS]>,
    /// Records without labels: (id, commitment). Kept out of every split.
    pub unallocated: Vec<(String, f64)>,
    pub total_commitment: f64,
    pub total_allocated: f64,
    /// Shares below this fraction leave the display table (totals keep
    /// them).
    pub display_cutoff: f64,
    pub provenance: AllocationProvenance,
}

impl AllocationReport {
    /// Share rows for display: goals under the cutoff are omitted and the
    /// remainder renormalized to sum to 1.
    pub fn display_shares(&self, group: IncomeGroup) -> Vec<(usize, f64)> {
        let Some(shares) = self.group_shares.get(&group) else { return Vec::new() };
        let kept: Vec<(usize, f64)> = shares
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= self.display_cutoff)
            .map(|(i, &s)| (i + 1, s))
            .collect();
        let total: f64 = kept.iter().map(|(_, s)| s).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        kept.into_iter().map(|(g, s)| (g, s / total)).collect()
    }
}

/// Distribute each labeled record's commitment over its goals in proportion
/// to the fitted weights; aggregate by year and recipient income group.
pub fn allocate_budget(
    records: &[ProjectRecord],
    weights: &BudgetWeights,
    codebook: &CountryCodebook,
    provenance: AllocationProvenance,
) -> Result<AllocationReport> {
    if weights.w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Numeric("weights must be finite and nonnegative".into()));
    }
    let counts = YearGoalCounts::from_records(records);
    let mut report = AllocationReport {
        years: counts.years.clone(),
        allocated: BTreeMap::new(),
        estimated: BTreeMap::new(),
        group_allocated: BTreeMap::new(),
        group_shares: BTreeMap::new(),
        unallocated: Vec::new(),
        total_commitment: 0.0,
        total_allocated: 0.0,
        display_cutoff: 0.01,
        provenance,
    };
    for (year, row) in counts.years.iter().zip(&counts.counts) {
        let mut est = [0.0f64; NUM_GOALS];
        for (slot, (&c, &w)) in est.iter_mut().zip(row.iter().zip(&weights.w)) {
            *slot = c as f64 * w;
        }
        report.estimated.insert(*year, est);
    }

    for record in records {
        report.total_commitment += record.commitment_usd;
        let Some(labels) = &record.sdg_labels else {
            report.unallocated.push((record.id.clone(), record.commitment_usd));
            continue;
        };
        let goals = labels.goals();
        let weight_sum: f64 = goals.iter().map(|&g| weights.w[g - 1]).sum();
        let group = codebook
            .income_for(record.recipient_code, record.year)
            .unwrap_or(IncomeGroup::Other);
        let year_row = report.allocated.entry(record.year).or_insert([0.0; NUM_GOALS]);
        let group_row = report.group_allocated.entry(group).or_insert([0.0; NUM_GOALS]);
        for &g in &goals {
            // Zero-weight goal sets fall back to an even split so the money
            // still lands somewhere.
            let frac = if weight_sum > 0.0 {
                weights.w[g - 1] / weight_sum
            } else {
                1.0 / goals.len() as f64
            };
            let amount = record.commitment_usd * frac;
            year_row[g - 1] += amount;
            group_row[g - 1] += amount;
            report.total_allocated += amount;
        }
    }

    for (group, row) in &report.group_allocated {
        let total: f64 = row.iter().sum();
        let mut shares = [0.0f64; NUM_GOALS];
        if total > 0.0 {
            for (s, &v) in shares.iter_mut().zip(row) {
                *s = v / total;
            }
        }
        report.group_shares.insert(*group, shares);
    }
    Ok(report)
}

fn svg_color(goal: usize) -> String {
    format!("hsl({}, 62%, 42%)", (goal * 360 / NUM_GOALS) % 360)
}

/// Per-year estimated budget lines, one polyline per goal.
fn render_trend_svg(report: &AllocationReport) -> String {
    let (w, h, ml, mb) = (860.0f64, 420.0f64, 60.0f64, 40.0f64);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    s.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<line x1=\"{ml}\" y1=\"10\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb, h - mb, w - 10.0, h - mb
    ));
    let max_val = report
        .estimated
        .values()
        .flat_map(|row| row.iter())
        .cloned()
        .fold(0.0f64, f64::max);
    if !report.years.is_empty() && max_val > 0.0 {
        let span_x = (w - ml - 20.0) / (report.years.len().max(2) - 1) as f64;
        let scale_y = (h - mb - 20.0) / max_val;
        for goal in 1..=NUM_GOALS {
            let pts: Vec<String> = report
                .years
                .iter()
                .enumerate()
                .map(|(i, y)| {
                    let v = report.estimated[y][goal - 1];
                    format!("{:.1},{:.1}", ml + i as f64 * span_x, h - mb - v * scale_y)
                })
                .collect();
            s.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                svg_color(goal),
                pts.join(" ")
            ));
        }
        for (i, y) in report.years.iter().enumerate() {
            s.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{y}</text>\n",
                ml + i as f64 * span_x,
                h - mb + 16.0
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal stacked share bars, one row per income group.
fn render_share_svg(report: &AllocationReport) -> String {
    let (w, bar_h, gap, ml) = (860.0f64, 34.0f64, 18.0f64, 80.0f64);
    let rows = report.group_shares.len().max(1);
    let h = 20.0 + rows as f64 * (bar_h + gap);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for (row_i, (group, _)) in report.group_shares.iter().enumerate() {
        let y = 10.0 + row_i as f64 * (bar_h + gap);
        s.push_str(&format!(
            "<text x=\"4\" y=\"{:.1}\">{group}</text>\n",
            y + bar_h / 2.0 + 4.0
        ));
        let mut x = ml;
        for (goal, share) in report.display_shares(*group) {
            let seg = share * (w - ml - 10.0);
            s.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{seg:.1}\" height=\"{bar_h}\" fill=\"{}\"><title>goal {goal}: {:.1}%</title></rect>\n",
                svg_color(goal),
                share * 100.0
            ));
            if seg > 26.0 {
                s.push_str(&format!(
                    "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"white\" text-anchor=\"middle\">{goal}</text>\n",
                    x + seg / 2.0,
                    y + bar_h / 2.0 + 4.0
                ));
            }
            x += seg;
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Write the machine-readable tables, the full report, the weight
/// comparison, and the plots. Returns every path written.
pub fn emit_trend_report(
    report: &AllocationReport,
    weights: &BudgetWeights,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let trend_path = dir.join("trend_by_year.csv");
    {
        let mut w = csv::Writer::from_path(&trend_path)?;
        w.write_record(["year", "goal", "estimated", "allocated"])?;
        for year in &report.years {
            for goal in 1..=NUM_GOALS {
                let est = report.estimated.get(year).map_or(0.0, |r| r[goal - 1]);
                let alloc = report.allocated.get(year).map_or(0.0, |r| r[goal - 1]);
                w.write_record([
                    year.to_string(),
                    goal.to_string(),
                    format!("{est:.6}"),
                    format!("{alloc:.6}"),
                ])?;
            }
        }
        w.flush()?;
    }
    written.push(trend_path);

    let shares_path = dir.join("group_shares.csv");
    {
        let mut w = csv::Writer::from_path(&shares_path)?;
        w.write_record(["group", "goal", "share"])?;
        for group in report.group_shares.keys() {
            for (goal, share) in report.display_shares(*group) {
                w.write_record([group.to_string(), goal.to_string(), format!("{share:.9}")])?;
            }
        }
        w.flush()?;
    }
    written.push(shares_path);

    let cmp_path = dir.join("weight_comparison.csv");
    {
        let norm = weights.max_normalized();
        let mut w = csv::Writer::from_path(&cmp_path)?;
        w.write_record([
            "goal",
            "fitted_raw",
            "fitted_max_normalized",
            "reference_proportion",
            "reference_printed_description",
            "reference_un_title",
        ])?;
        for r in REFERENCE_PROPORTIONS {
            w.write_record([
                r.goal.to_string(),
                format!("{:.6}", weights.w[r.goal - 1]),
                format!("{:.6}", norm.w[r.goal - 1]),
                format!("{:.2}", r.proportion),
                r.printed_description.to_string(),
                r.un_title.to_string(),
            ])?;
        }
        w.flush()?;
    }
    written.push(cmp_path);

    let json_path = dir.join("allocation_report.json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(report)?)?;
    written.push(json_path);

    let trend_svg = dir.join("trends.svg");
    std::fs::write(&trend_svg, render_trend_svg(report))?;
    written.push(trend_svg);

    let share_svg = dir.join("group_shares.svg");
    std::fs::write(&share_svg, render_share_svg(report))?;
    written.push(share_svg);

    Ok(written)
}

//! Deterministic synthetic corpus for end-to-end runs: descriptions carry
//! goal-specific planted keywords over five active goals, and fixture
//! stores answer every country and decision prompt offline.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    CountryCodebook, GoalDefinition, IncomeGroup, IncomeRow, Labels, ProjectRecord,
    RecipientEntry,
};
use crate::error::Result;
use crate::llm::{
    build_country_prompt, build_decision_prompt, prompt_hash, FixtureRecord, FixtureStore,
    PromptKind,
};

/// Goals the generator actually uses; the label space stays all 17.
pub const ACTIVE_GOALS: [usize; 5] = [2, 4, 6, 8, 13];

/// Five distinctive words per active goal. A record's labels are exactly
/// the goals whose words appear in its description, so the corpus is
/// separable by construction.
pub const GOAL_KEYWORDS: [(usize, [&str; 5]); 5] = [
    (2, ["harvest", "grain", "nutrition", "livestock", "crop"]),
    (4, ["school", "teacher", "classroom", "literacy", "curriculum"]),
    (6, ["water", "sanitation", "borehole", "hygiene", "latrine"]),
    (8, ["employment", "vocational", "enterprise", "wage", "livelihood"]),
    (13, ["climate", "resilience", "flood", "drought", "emission"]),
];

const FILLER: [&str; 16] = [
    "project", "support", "community", "regional", "programme", "phase", "national",
    "development", "district", "services", "initiative", "delivery", "local", "partners",
    "capacity", "expansion",
];

const DONORS: [(i64, &str); 2] = [(9001, "Donorstan"), (9002, "Aidlandia")];

const RECIPIENTS: [(i64, &str, IncomeGroup); 4] = [
    (8001, "Receivia", IncomeGroup::LICs),
    (8002, "Midlandia", IncomeGroup::LMICs),
    (8003, "Upperia", IncomeGroup::UMICs),
    (8004, "Leastia", IncomeGroup::LDCs),
];

#[derive(Clone, Debug)]
pub struct SyntheticOptions {
    pub n_records: usize,
    pub seed: u64,
    /// Fraction of records carrying two active goals instead of one.
    pub multi_label_rate: f64,
    pub years: std::ops::RangeInclusive<i32>,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            n_records: 500,
            seed: 2024,
            multi_label_rate: 0.25,
            years: 2015..=2022,
        }
    }
}

pub struct SyntheticCorpus {
    pub records: Vec<ProjectRecord>,
    pub codebook: CountryCodebook,
}

pub fn synthetic_codebook() -> CountryCodebook {
    let mut codebook = CountryCodebook::default();
    for (code, name) in DONORS {
        codebook.donors.insert(code, name.to_string());
    }
    for (code, name, group) in RECIPIENTS {
        codebook.recipients.insert(
            code,
            RecipientEntry {
                name: name.to_string(),
                income: vec![IncomeRow { year: None, group }],
            },
        );
    }
    codebook
}

fn keywords_for(goal: usize) -> &'static [&'static str; 5] {
    &GOAL_KEYWORDS
        .iter()
        .find(|(g, _)| *g == goal)
        .expect("active goal")
        .1
}

fn description_for(goals: &[usize], rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<&str> = Vec::new();
    for &goal in goals {
        let bank = keywords_for(goal);
        let picks = rng.random_range(2..=3usize);
        let mut start = rng.random_range(0..bank.len());
        for _ in 0..picks {
            words.push(bank[start % bank.len()]);
            start += 1;
        }
    }
    for _ in 0..rng.random_range(4..=6usize) {
        words.push(FILLER[rng.random_range(0..FILLER.len())]);
    }
    // One swap pass so keywords are not always sentence-initial.
    for i in (1..words.len()).rev() {
        let j = rng.random_range(0..=i);
        words.swap(i, j);
    }
    words.join(" ")
}

/// Build the labeled corpus. The same options always produce the same
/// records.
pub fn generate_corpus(options: &SyntheticOptions) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let years: Vec<i32> = options.years.clone().collect();
    let mut records = Vec::with_capacity(options.n_records);
    for i in 0..options.n_records {
        let primary = ACTIVE_GOALS[i % ACTIVE_GOALS.len()];
        let mut goals = vec![primary];
        if rng.random_range(0.0..1.0) < options.multi_label_rate {
            let other = ACTIVE_GOALS[rng.random_range(0..ACTIVE_GOALS.len())];
            if other != primary {
                goals.push(other);
            }
        }
        goals.sort_unstable();
        let donor = DONORS[rng.random_range(0..DONORS.len())].0;
        let recipient = RECIPIENTS[rng.random_range(0..RECIPIENTS.len())].0;
        records.push(ProjectRecord {
            id: format!("syn-{i:04}"),
            description: description_for(&goals, &mut rng),
            donor_code: donor,
            recipient_code: recipient,
            year: years[rng.random_range(0..years.len())],
            commitment_usd: rng.random_range(0.05..8.0) * 1.0e6,
            sdg_labels: Some(Labels::from_goals(&goals)?),
        });
    }
    Ok(SyntheticCorpus { records, codebook: synthetic_codebook() })
}

/// Every text the vocabulary must cover before training: descriptions plus
/// the fixed country summaries and the goal definitions.
pub fn vocabulary_texts(corpus: &SyntheticCorpus, goal_defs: &[GoalDefinition]) -> Vec<String> {
    let mut texts: Vec<String> =
        corpus.records.iter().map(|r| r.description.clone()).collect();
    for (_, name) in DONORS {
        texts.push(donor_summary(name));
    }
    for (_, name, group) in RECIPIENTS {
        texts.push(recipient_summary(name, group));
    }
    for def in goal_defs {
        texts.push(crate::encoder::goal_text(def));
    }
    texts
}

fn donor_summary(name: &str) -> String {
    format!(
        "{name} directs its official development assistance toward community services, \
         steady employment, schooling, safe water, and resilient local institutions."
    )
}

fn recipient_summary(name: &str, group: IncomeGroup) -> String {
    format!(
        "{name}, classified as {group}, prioritizes external aid for food production, \
         basic education, clean water access, job creation, and climate adaptation."
    )
}

const FIXTURE_TIMESTAMP: &str = "2026-01-01T00:00:00Z";

fn store_entry(
    provider_id: &str,
    kind: PromptKind,
    prompt: String,
    response: String,
) -> FixtureRecord {
    FixtureRecord {
        prompt_hash: prompt_hash(provider_id, kind, &prompt),
        provider_id: provider_id.to_string(),
        prompt,
        response,
        timestamp: FIXTURE_TIMESTAMP.to_string(),
    }
}

/// Pick the wrong goals for an inaccurate decision: active goals disjoint
/// from the truth, so the usefulness signal is exactly zero.
fn wrong_goals(truth: &BTreeSet<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let pool: Vec<usize> = ACTIVE_GOALS
        .iter()
        .copied()
        .filter(|g| !truth.contains(g))
        .collect();
    let take = rng.random_range(1..=2usize).min(pool.len());
    let mut start = rng.random_range(0..pool.len());
    let mut out = Vec::new();
    for _ in 0..take {
        out.push(pool[start % pool.len()]);
        start += 1;
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn decision_response(goals: &[usize]) -> String {
    let listed = goals
        .iter()
        .map(|g| format!("Goal {g}"))
        .collect::<Vec<_>>()
        .join(" and ");
    let nums = goals.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", ");
    format!("The description is most relevant to {listed}.\n<Answer>: {nums}")
}

/// Write one provider's complete fixture store: both country prompts for
/// every synthetic country plus one decision per record, correct for
/// exactly `round(accuracy * n)` records. Different seeds pick different
/// wrong subsets at the same accuracy.
pub fn write_fixture_store(
    corpus: &SyntheticCorpus,
    goal_defs: &[GoalDefinition],
    provider_id: &str,
    decision_seed: u64,
    accuracy: f64,
    path: &Path,
) -> Result<usize> {
    let store = FixtureStore::open(path)?;
    for (_, name) in DONORS {
        let prompt = build_country_prompt(PromptKind::DonorPolicy, name, None)?;
        store.record(&store_entry(
            provider_id,
            PromptKind::DonorPolicy,
            prompt,
            donor_summary(name),
        ))?;
    }
    for (_, name, group) in RECIPIENTS {
        let prompt = build_country_prompt(PromptKind::RecipientPolicy, name, Some(group))?;
        store.record(&store_entry(
            provider_id,
            PromptKind::RecipientPolicy,
            prompt,
            recipient_summary(name, group),
        ))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(decision_seed);
    let n = corpus.records.len();
    let n_correct = (accuracy * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let correct: BTreeSet<usize> = order.into_iter().take(n_correct).collect();

    for (i, record) in corpus.records.iter().enumerate() {
        let truth: BTreeSet<usize> =
            record.sdg_labels.expect("synthetic records are labeled").goals().into_iter().collect();
        let goals = if correct.contains(&i) {
            truth.iter().copied().collect::<Vec<_>>()
        } else {
            wrong_goals(&truth, &mut rng)
        };
        let prompt = build_decision_prompt(&record.description, goal_defs)?;
        store.record(&store_entry(
            provider_id,
            PromptKind::SdgDecision,
            prompt,
            decision_response(&goals),
        ))?;
    }
    Ok(store.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_goal_definitions;
    use crate::llm::{Provider, ProviderConfig, ProviderMode};
    use crate::trainer::resolve_items;

    fn small_options() -> SyntheticOptions {
        SyntheticOptions { n_records: 40, seed: 7, ..Default::default() }
    }

    fn provider_for(path: &Path, id: &str) -> Provider {
        Provider::new(ProviderConfig {
            provider_id: id.to_string(),
            mode: ProviderMode::Fixture,
            fixture_path: Some(path.to_path_buf()),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_corpus(&small_options()).unwrap();
        let b = generate_corpus(&small_options()).unwrap();
        assert_eq!(a.records, b.records);
        let c = generate_corpus(&SyntheticOptions { seed: 8, ..small_options() }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn labels_stay_on_the_active_goals_and_cover_all_five() {
        let corpus = generate_corpus(&SyntheticOptions {
            n_records: 200,
            ..small_options()
        })
        .unwrap();
        let mut seen = BTreeSet::new();
        let mut multi = 0;
        for r in &corpus.records {
            let goals = r.sdg_labels.unwrap().goals();
            for g in &goals {
                assert!(ACTIVE_GOALS.contains(g), "goal {g} is not active");
                seen.insert(*g);
            }
            if goals.len() > 1 {
                multi += 1;
            }
        }
        assert_eq!(seen.len(), ACTIVE_GOALS.len());
        assert!(multi > 10, "expected a visible multi-label share, saw {multi}");
    }

    #[test]
    fn keywords_appear_exactly_for_the_labeled_goals() {
        let corpus = generate_corpus(&small_options()).unwrap();
        for r in &corpus.records {
            let goals = r.sdg_labels.unwrap().goals();
            let words: BTreeSet<&str> = r.description.split_whitespace().collect();
            for (goal, bank) in GOAL_KEYWORDS {
                let present = bank.iter().any(|k| words.contains(k));
                assert_eq!(
                    present,
                    goals.contains(&goal),
                    "record {} goal {goal}: keywords vs label disagree",
                    r.id
                );
            }
        }
    }

    #[test]
    fn fixture_store_answers_every_record_offline() {
        let corpus = generate_corpus(&small_options()).unwrap();
        let defs = default_goal_definitions().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthA.jsonl");
        let entries =
            write_fixture_store(&corpus, &defs, "synthA", 11, 0.8, &path).unwrap();
        // 2 donors + 4 recipients + one decision per record.
        assert_eq!(entries, 6 + corpus.records.len());

        let provider = provider_for(&path, "synthA");
        let items = resolve_items(&corpus.records, &corpus.codebook, &defs, &provider).unwrap();
        assert_eq!(items.len(), corpus.records.len());

        let correct = items
            .iter()
            .filter(|it| {
                let truth: BTreeSet<usize> =
                    it.record.sdg_labels.unwrap().goals().into_iter().collect();
                it.decision.goals == truth
            })
            .count();
        let want = (0.8 * corpus.records.len() as f64).round() as usize;
        assert_eq!(correct, want);

        // Wrong decisions never overlap the truth.
        for it in &items {
            let truth: BTreeSet<usize> =
                it.record.sdg_labels.unwrap().goals().into_iter().collect();
            if it.decision.goals != truth {
                assert!(it.decision.goals.is_disjoint(&truth), "record {}", it.record.id);
                assert!(!it.decision.goals.is_empty());
            }
        }
    }

    #[test]
    fn matched_accuracy_providers_disagree_only_on_which_records_err() {
        let corpus = generate_corpus(&small_options()).unwrap();
        let defs = default_goal_definitions().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("synthA.jsonl");
        let path_b = dir.path().join("synthB.jsonl");
        write_fixture_store(&corpus, &defs, "synthA", 11, 0.8, &path_a).unwrap();
        write_fixture_store(&corpus, &defs, "synthB", 99, 0.8, &path_b).unwrap();

        let items_a = resolve_items(
            &corpus.records,
            &corpus.codebook,
            &defs,
            &provider_for(&path_a, "synthA"),
        )
        .unwrap();
        let items_b = resolve_items(
            &corpus.records,
            &corpus.codebook,
            &defs,
            &provider_for(&path_b, "synthB"),
        )
        .unwrap();

        let correctness = |items: &[crate::trainer::TrainItem]| -> Vec<bool> {
            items
                .iter()
                .map(|it| {
                    let truth: BTreeSet<usize> =
                        it.record.sdg_labels.unwrap().goals().into_iter().collect();
                    it.decision.goals == truth
                })
                .collect()
        };
        let ca = correctness(&items_a);
        let cb = correctness(&items_b);
        let acc = |v: &[bool]| v.iter().filter(|&&b| b).count();
        assert_eq!(acc(&ca), acc(&cb), "accuracies must match");
        assert_ne!(ca, cb, "different seeds should err on different records");
    }

    #[test]
    fn vocabulary_texts_cover_summaries_and_goals() {
        let corpus = generate_corpus(&small_options()).unwrap();
        let defs = default_goal_definitions().unwrap();
        let texts = vocabulary_texts(&corpus, &defs);
        assert_eq!(texts.len(), corpus.records.len() + 2 + 4 + 17);
        assert!(texts.iter().any(|t| t.contains("Donorstan")));
        assert!(texts.iter().any(|t| t.contains("Leastia")));
    }
}

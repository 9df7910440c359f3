//! The seven pipeline commands. Each one reads its inputs, hands the real
//! work to the core library, writes machine-readable outputs, and finishes
//! by writing exactly one run manifest into the output directory.

use std::collections::BTreeSet;
use std::path::Path;

use sdgmap_core::corpus::{
    read_records, split_dataset, write_records, ColumnMap, CountryCodebook, GoalDefinition,
    ProjectRecord,
};
use sdgmap_core::data::{default_country_codebook, default_goal_definitions};
use sdgmap_core::finance::{
    allocate_budget, emit_trend_report, fit_budget_weights, impute_labels, AllocationProvenance,
    SkippedRecord, YearGoalCounts,
};
use sdgmap_core::llm::{resolve_context, resolve_decision, Provider};
use sdgmap_core::metrics::{
    evaluate_model, multilabel_metrics, per_goal_report, run_ablation, AblationSpec, Averaging,
};
use sdgmap_core::model::{Ablation, Model};
use sdgmap_core::trainer::{train, TrainItem, TrainOptions};
use sdgmap_core::{Error, Result};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::settings::Settings;

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

fn read_record_file(path: &Path) -> Result<Vec<ProjectRecord>> {
    read_records(&read_file(path)?)
}

pub fn load_goal_definitions(settings: &Settings) -> Result<Vec<GoalDefinition>> {
    match &settings.goals {
        Some(path) => sdgmap_core::corpus::load_goal_definitions(&read_file(path)?),
        None => default_goal_definitions(),
    }
}

pub fn load_codebook(settings: &Settings) -> Result<CountryCodebook> {
    match &settings.codebook {
        Some(path) => CountryCodebook::from_json(&read_file(path)?),
        None => default_country_codebook(),
    }
}

fn open_provider(settings: &Settings) -> Result<Provider> {
    Provider::new(settings.provider.clone())
}

/// A second provider identity for inference-time swaps. Prompt hashes
/// include the provider id, so its fixture entries never collide with the
/// main provider's even inside the same store file.
fn open_swapped_provider(
    settings: &Settings,
    id: &str,
    store: Option<&Path>,
) -> Result<Provider> {
    let mut cfg = settings.provider.clone();
    cfg.provider_id = id.to_string();
    if let Some(path) = store {
        cfg.fixture_path = Some(path.to_path_buf());
    }
    Provider::new(cfg)
}

/// Resolve context and decision for every record, with the two query kinds
/// possibly served by different providers.
fn resolve_items_via(
    records: &[ProjectRecord],
    codebook: &CountryCodebook,
    goal_defs: &[GoalDefinition],
    country: &Provider,
    decision: &Provider,
) -> Result<Vec<TrainItem>> {
    records
        .iter()
        .map(|record| {
            let context = resolve_context(
                country,
                codebook,
                record.donor_code,
                record.recipient_code,
                record.year,
            )
            .map_err(|e| Error::Provider(format!("record {}: {e}", record.id)))?;
            let parsed = resolve_decision(decision, &record.description, goal_defs)
                .map_err(|e| Error::Provider(format!("record {}: {e}", record.id)))?;
            Ok(TrainItem { record: record.clone(), context, decision: parsed.vector })
        })
        .collect()
}

fn partition_labeled(records: Vec<ProjectRecord>) -> (Vec<ProjectRecord>, usize) {
    let total = records.len();
    let labeled: Vec<_> =
        records.into_iter().filter(|r| r.sdg_labels.is_some()).collect();
    let unlabeled = total - labeled.len();
    (labeled, unlabeled)
}

/// Vocabulary for a fresh model: every description and summary the run will
/// see, plus the goal definitions, standing in for what a pretrained
/// tokenizer would already know.
fn vocabulary<'a>(
    items: impl IntoIterator<Item = &'a TrainItem>,
    goal_defs: &[GoalDefinition],
) -> Vec<String> {
    let mut texts = Vec::new();
    for item in items {
        texts.push(item.record.description.clone());
        texts.push(item.context.donor_summary.clone());
        texts.push(item.context.recipient_summary.clone());
    }
    for def in goal_defs {
        texts.push(sdgmap_core::encoder::goal_text(def));
    }
    texts
}

pub fn cmd_ingest(settings: &Settings, input: &Path, map: &ColumnMap) -> Result<()> {
    let out = &settings.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("ingest", settings);
    manifest.input("source", input);

    let ingest = sdgmap_core::corpus::parse_crs_records(&read_file(input)?, map)?;
    for warning in &ingest.report.warnings {
        log::warn!("{warning}");
    }

    let records_path = out.join("records.jsonl");
    std::fs::write(&records_path, write_records(&ingest.records))?;
    let report_path = out.join("ingest_report.json");
    write_json(&report_path, &ingest.report)?;

    manifest.output("records", &records_path);
    manifest.output("report", &report_path);
    manifest.note(format!(
        "{} rows read, {} records kept, {} kept without labels",
        ingest.report.rows_read,
        ingest.report.records_kept,
        ingest.report.unlabeled_rows.len()
    ));
    manifest.finish(out)?;
    println!(
        "ingest: kept {} of {} rows -> {}",
        ingest.report.records_kept,
        ingest.report.rows_read,
        records_path.display()
    );
    Ok(())
}

pub fn cmd_fetch_context(settings: &Settings, records_path: &Path) -> Result<()> {
    let out = &settings.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("fetch-context", settings);
    manifest.input("records", records_path);

    let records = read_record_file(records_path)?;
    let codebook = load_codebook(settings)?;
    let goal_defs = load_goal_definitions(settings)?;
    let provider = open_provider(settings)?;
    manifest.input("fixture_store", provider.store().path());

    let mut triples = BTreeSet::new();
    for r in &records {
        triples.insert((r.donor_code, r.recipient_code, r.year));
    }
    for &(donor, recipient, year) in &triples {
        resolve_context(&provider, &codebook, donor, recipient, year).map_err(|e| {
            Error::Provider(format!("context ({donor}, {recipient}, {year}): {e}"))
        })?;
    }

    let mut seen = BTreeSet::new();
    let mut decisions = 0usize;
    for r in &records {
        if seen.insert(r.description.as_str()) {
            resolve_decision(&provider, &r.description, &goal_defs)
                .map_err(|e| Error::Provider(format!("record {}: {e}", r.id)))?;
            decisions += 1;
        }
    }

    #[derive(Serialize)]
    struct FetchReport<'a> {
        records: usize,
        contexts: usize,
        decisions: usize,
        store_entries: usize,
        provider_id: &'a str,
    }
    let report_path = out.join("fetch_report.json");
    write_json(
        &report_path,
        &FetchReport {
            records: records.len(),
            contexts: triples.len(),
            decisions,
            store_entries: provider.store().len(),
            provider_id: provider.provider_id(),
        },
    )?;
    manifest.output("report", &report_path);
    manifest.finish(out)?;
    println!(
        "fetch-context: {} country contexts and {} decisions resolved for {} records",
        triples.len(),
        decisions,
        records.len()
    );
    Ok(())
}

pub fn cmd_train(
    settings: &Settings,
    records_path: &Path,
    split: Option<(u32, u32)>,
) -> Result<()> {
    let out = &settings.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("train", settings);
    manifest.input("records", records_path);

    let all = read_record_file(records_path)?;
    let (labeled, unlabeled) = partition_labeled(all);
    if unlabeled > 0 {
        log::warn!("{unlabeled} unlabeled records left out of training");
        manifest.note(format!("{unlabeled} unlabeled records left out of training"));
    }
    if labeled.is_empty() {
        return Err(Error::EmptyInput("no labeled records to train on".into()));
    }

    let ablation = Ablation::from_variant(&settings.ablation)?;
    let codebook = load_codebook(settings)?;
    let goal_defs = load_goal_definitions(settings)?;
    let provider = open_provider(settings)?;
    manifest.input("fixture_store", provider.store().path());

    // An optional held-out slice, written next to the checkpoint so a later
    // evaluate run scores exactly what training never saw.
    let (train_records, eval_records) = match split {
        Some(ratio) => {
            let s = split_dataset(labeled, ratio, settings.train.seed)?;
            (s.train, s.test)
        }
        None => (labeled, Vec::new()),
    };
    let train_path = out.join("train_records.jsonl");
    std::fs::write(&train_path, write_records(&train_records))?;
    manifest.output("train_records", &train_path);
    if !eval_records.is_empty() {
        let eval_path = out.join("eval_records.jsonl");
        std::fs::write(&eval_path, write_records(&eval_records))?;
        manifest.output("eval_records", &eval_path);
    }

    let items = resolve_items_via(&train_records, &codebook, &goal_defs, &provider, &provider)?;
    let eval_items =
        resolve_items_via(&eval_records, &codebook, &goal_defs, &provider, &provider)?;
    let texts = vocabulary(items.iter().chain(&eval_items), &goal_defs);

    let mut model = Model::init(
        settings.model.clone(),
        texts.iter().map(String::as_str),
        settings.init_seed,
    )?;
    let log_path = out.join("loss_log.jsonl");
    let options = TrainOptions {
        ablation,
        log_path: Some(log_path.clone()),
        checkpoint_dir: Some(out.clone()),
    };
    let report = train(&mut model, &items, &goal_defs, &settings.train, &options)?;
    for warning in &report.warnings {
        log::warn!("{warning}");
        manifest.note(warning.clone());
    }

    let (ckpt_path, ckpt_id) =
        report.final_checkpoint.clone().expect("checkpoint_dir was set");
    manifest.checkpoint_id = Some(ckpt_id.clone());
    manifest.output("checkpoint", &ckpt_path);
    manifest.output("loss_log", &log_path);
    manifest.finish(out)?;

    let last = report.epochs.last().expect("validated epochs >= 1");
    println!(
        "train: {} epochs over {} records, final loss {:.6}, checkpoint {}",
        report.epochs.len(),
        train_records.len(),
        last.l_total,
        &ckpt_id[..12]
    );
    Ok(())
}

pub fn cmd_evaluate(
    settings: &Settings,
    records_path: &Path,
    checkpoint: &Path,
    decision_provider: Option<&str>,
    decision_store: Option<&Path>,
) -> Result<()> {
    let out = &settings.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("evaluate", settings);
    manifest.input("records", records_path);
    manifest.input("checkpoint", checkpoint);

    if !checkpoint.exists() {
        return Err(Error::Checkpoint(format!(
            "checkpoint not found: {}",
            checkpoint.display()
        )));
    }
    let (model, ckpt_id) = Model::load(checkpoint)?;
    manifest.checkpoint_id = Some(ckpt_id);

    let all = read_record_file(records_path)?;
    let (labeled, unlabeled) = partition_labeled(all);
    if unlabeled > 0 {
        log::warn!("{unlabeled} unlabeled records cannot be scored");
        manifest.note(format!("{unlabeled} unlabeled records left out of evaluation"));
    }
    if labeled.is_empty() {
        return Err(Error::EmptyInput("no labeled records to evaluate".into()));
    }

    let ablation = Ablation::from_variant(&settings.ablation)?;
    let codebook = load_codebook(settings)?;
    let goal_defs = load_goal_definitions(settings)?;
    let provider = open_provider(settings)?;
    manifest.input("fixture_store", provider.store().path());
    let decision = match decision_provider {
        Some(id) => {
            manifest.note(format!("decision queries served by provider '{id}'"));
            open_swapped_provider(settings, id, decision_store)?
        }
        None => open_provider(settings)?,
    };

    let items = resolve_items_via(&labeled, &codebook, &goal_defs, &provider, &decision)?;
    let m = evaluate_model(
        &model,
        &items,
        &goal_defs,
        ablation,
        settings.train.prediction_threshold,
    )?;
    let micro = multilabel_metrics(&m.probabilities, &m.predictions, &m.labels, Averaging::Micro)?;
    let macro_avg =
        multilabel_metrics(&m.probabilities, &m.predictions, &m.labels, Averaging::Macro)?;
    let per_goal = per_goal_report(&m.probabilities, &m.predictions, &m.labels)?;

    for (name, value) in [
        ("metrics_micro.json", serde_json::to_value(&micro)?),
        ("metrics_macro.json", serde_json::to_value(&macro_avg)?),
        ("metrics_per_goal.json", serde_json::to_value(&per_goal)?),
    ] {
        let path = out.join(name);
        write_json(&path, &value)?;
        manifest.output(name.trim_end_matches(".json"), &path);
    }
    manifest.finish(out)?;

    let auroc = micro.auroc.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "evaluate: {} records, micro P {:.4} R {:.4} F1 {:.4} AUROC {auroc}",
        items.len(),
        micro.precision,
        micro.recall,
        micro.f1
    );
    Ok(())
}

pub fn cmd_ablate(
    settings: &Settings,
    records_path: &Path,
    variants: &[String],
    ratio: (u32, u32),
) -> Result<()> {
    let out = &settings.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("ablate", settings);
    manifest.input("records", records_path);

    let all = read_record_file(records_path)?;
    let (labeled, unlabeled) = partition_labeled(all);
    if unlabeled > 0 {
        manifest.note(format!("{unlabeled} unlabeled records left out"));
    }
    let split = split_dataset(labeled, ratio, settings.train.seed)?;

    let codebook = load_codebook(settings)?;
    let goal_defs = load_goal_definitions(settings)?;
    let provider = open_provider(settings)?;
    manifest.input("fixture_store", provider.store().path());

    let train_items =
        resolve_items_via(&split.train, &codebook, &goal_defs, &provider, &provider)?;
    let eval_items = resolve_items_via(&split.test, &codebook, &goal_defs, &provider, &provider)?;

    let spec = AblationSpec {
        model_config: settings.model.clone(),
        init_seed: settings.init_seed,
        train: &train_items,
        eval: &eval_items,
        goal_defs: &goal_defs,
        train_config: settings.train.clone(),
    };
    let names: Vec<&str> = variants.iter().map(String::as_str).collect();
    let table = run_ablation(&spec, &names)?;

    let json_path = out.join("ablation.json");
    write_json(&json_path, &table)?;
    let text = table.render_text();
    let text_path = out.join("ablation.txt");
    std::fs::write(&text_path, &text)?;
    manifest.output("table_json", &json_path);
    manifest.output("table_text", &text_path);
    manifest.finish(out)?;

    print!("{text}");
    Ok(())
}

pub fn cmd_impute(
    settings: &Settings,
    records_path: &Path,
    checkpoint: &Path,
    decision_provider: Option<&str>,
    decision_store: Option<&Path>,
) -> Result<()> {
    let out = &settings.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("impute", settings);
    manifest.input("records", records_path);
    manifest.input("checkpoint", checkpoint);

    if !checkpoint.exists() {
        return Err(Error::Checkpoint(format!(
            "checkpoint not found: {}",
            checkpoint.display()
        )));
    }
    let (model, ckpt_id) = Model::load(checkpoint)?;
    manifest.checkpoint_id = Some(ckpt_id);

    let records = read_record_file(records_path)?;
    let ablation = Ablation::from_variant(&settings.ablation)?;
    let codebook = load_codebook(settings)?;
    let goal_defs = load_goal_definitions(settings)?;
    let provider = open_provider(settings)?;
    manifest.input("fixture_store", provider.store().path());
    let decision = match decision_provider {
        Some(id) => {
            manifest.note(format!("decision queries served by provider '{id}'"));
            open_swapped_provider(settings, id, decision_store)?
        }
        None => open_provider(settings)?,
    };

    let outcome = impute_labels(
        &model,
        &records,
        &goal_defs,
        ablation,
        settings.train.prediction_threshold,
        |record| {
            let context = resolve_context(
                &provider,
                &codebook,
                record.donor_code,
                record.recipient_code,
                record.year,
            )?;
            let parsed = resolve_decision(&decision, &record.description, &goal_defs)?;
            Ok((context, parsed.vector))
        },
    )?;

    let imputed: Vec<ProjectRecord> =
        outcome.records.iter().map(|r| r.record.clone()).collect();
    let records_out = out.join("records_imputed.jsonl");
    std::fs::write(&records_out, write_records(&imputed))?;

    #[derive(Serialize)]
    struct ImputeReport<'a> {
        total: usize,
        already_labeled: usize,
        imputed: usize,
        skipped: &'a [SkippedRecord],
    }
    let imputed_count = outcome.records.iter().filter(|r| r.imputed).count();
    let report = ImputeReport {
        total: records.len(),
        already_labeled: outcome.records.len() - imputed_count,
        imputed: imputed_count,
        skipped: &outcome.skipped,
    };
    let report_path = out.join("impute_report.json");
    write_json(&report_path, &report)?;

    for skip in &outcome.skipped {
        log::warn!("record {} skipped: {}", skip.id, skip.reason);
        manifest.note(format!("record {} skipped: {}", skip.id, skip.reason));
    }
    manifest.output("records", &records_out);
    manifest.output("report", &report_path);
    manifest.finish(out)?;

    println!(
        "impute: {} of {} records filled, {} skipped -> {}",
        imputed_count,
        records.len(),
        outcome.skipped.len(),
        records_out.display()
    );
    Ok(())
}

pub fn cmd_analyze(
    settings: &Settings,
    records_path: &Path,
    checkpoint_id: Option<&str>,
) -> Result<()> {
    let out = &settings.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("analyze", settings);
    manifest.input("records", records_path);

    let records = read_record_file(records_path)?;
    let unlabeled = records.iter().filter(|r| r.sdg_labels.is_none()).count();
    if unlabeled > 0 {
        log::warn!("{unlabeled} unlabeled records excluded from the fit");
        manifest.note(format!(
            "{unlabeled} unlabeled records excluded from the fit and reported unallocated"
        ));
    }

    let codebook = load_codebook(settings)?;
    let counts = YearGoalCounts::from_records(&records);
    let sums = counts.aligned_budget_sums(&records);
    let weights = fit_budget_weights(&sums, &counts)?;

    let provenance = AllocationProvenance {
        checkpoint_id: checkpoint_id.unwrap_or_default().to_string(),
        provider_id: settings.provider.provider_id.clone(),
    };
    manifest.checkpoint_id = checkpoint_id.map(String::from);
    let report = allocate_budget(&records, &weights, &codebook, provenance)?;

    let weights_path = out.join("budget_weights.json");
    write_json(&weights_path, &weights)?;
    manifest.output("budget_weights", &weights_path);
    for path in emit_trend_report(&report, &weights, out)? {
        let role = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        manifest.output(&role, &path);
    }
    manifest.finish(out)?;

    println!(
        "analyze: {} years, {:.0} of {:.0} USD allocated, {} records unallocated, residual {:.3e}",
        report.years.len(),
        report.total_allocated,
        report.total_commitment,
        report.unallocated.len(),
        weights.fit_residual
    );
    Ok(())
}

//! Regenerates the committed demo fixtures under `fixtures/demo/`: a
//! 200-record synthetic CRS export, the matching country codebook, and a
//! fixture store answering every prompt the demo pipeline will ask.
//! Everything is seeded, so rerunning this never churns the checkout.
//!
//! Records before 2018 are written without an SDG field, mirroring the real
//! corpus where the label column only exists from 2018 on; the impute step
//! of the demo pipeline fills them back in.

use std::fmt::Write as _;
use std::path::PathBuf;

use sdgmap_core::data::default_goal_definitions;
use sdgmap_core::synthetic::{generate_corpus, write_fixture_store, SyntheticOptions};

fn main() -> anyhow::Result<()> {
    let root: PathBuf = match std::env::args().nth(1) {
        Some(dir) => dir.into(),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo"),
    };
    std::fs::create_dir_all(&root)?;

    let options = SyntheticOptions { n_records: 200, seed: 7, ..Default::default() };
    let corpus = generate_corpus(&options)?;
    let goal_defs = default_goal_definitions()?;

    let mut csv = String::from(
        "id,description,donor_code,recipient_code,year,commitment_usd,sdg_focus\n",
    );
    let mut unlabeled = 0usize;
    for r in &corpus.records {
        // Synthetic descriptions are plain space-joined words, so no CSV
        // quoting is needed.
        assert!(!r.description.contains([',', '"', '\n']));
        let sdg_focus = if r.year < 2018 {
            unlabeled += 1;
            String::new()
        } else {
            let goals = r.sdg_labels.as_ref().expect("generator labels everything").goals();
            goals.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
        };
        writeln!(
            csv,
            "{},{},{},{},{},{:.2},{}",
            r.id, r.description, r.donor_code, r.recipient_code, r.year, r.commitment_usd,
            sdg_focus
        )?;
    }
    let csv_path = root.join("records.csv");
    std::fs::write(&csv_path, csv)?;

    let codebook_path = root.join("codebook.json");
    let mut codebook_json = serde_json::to_vec_pretty(&corpus.codebook)?;
    codebook_json.push(b'\n');
    std::fs::write(&codebook_path, codebook_json)?;

    let store_path = root.join("store.jsonl");
    if store_path.exists() {
        // The store is append-only with keep-first semantics; start fresh so
        // regeneration is byte-stable.
        std::fs::remove_file(&store_path)?;
    }
    let entries = write_fixture_store(&corpus, &goal_defs, "demo", 11, 0.8, &store_path)?;

    println!(
        "wrote {} records ({unlabeled} unlabeled), {} fixture entries -> {}",
        corpus.records.len(),
        entries,
        root.display()
    );
    Ok(())
}

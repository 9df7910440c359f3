//! Parsing, validation, encoding, and splitting of CRS-style aid records
//! and SDG goal definitions.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of SDG labels; fixed by the UN goal set.
pub const NUM_GOALS: usize = 17;

/// Multi-hot SDG label vector. Always 17 entries of 0/1 with at least one 1.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Labels([u8; NUM_GOALS]);

impl Labels {
    /// Build from 1-based goal indices. Duplicates collapse.
    pub fn from_goals(goals: &[usize]) -> Result<Self> {
        if goals.is_empty() {
            return Err(Error::Label("label set has no goals".into()));
        }
        let mut hot = [0u8; NUM_GOALS];
        for &g in goals {
            if g < 1 || g > NUM_GOALS {
                return Err(Error::LabelRange(g.to_string()));
            }
            hot[g - 1] = 1;
        }
        Ok(Labels(hot))
    }

    pub fn from_multi_hot(values: &[u8]) -> Result<Self> {
        if values.len() != NUM_GOALS {
            return Err(Error::Label(format!(
                "expected {NUM_GOALS} entries, got {}",
                values.len()
            )));
        }
        let mut hot = [0u8; NUM_GOALS];
        let mut any = false;
        for (i, &v) in values.iter().enumerate() {
            match v {
                0 => {}
                1 => {
                    hot[i] = 1;
                    any = true;
                }
                other => {
                    return Err(Error::Label(format!("entry {i} is {other}, not 0/1")));
                }
            }
        }
        if !any {
            return Err(Error::Label("label vector is all zeros".into()));
        }
        Ok(Labels(hot))
    }

    pub fn as_slice(&self) -> &[u8; NUM_GOALS] {
        &self.0
    }

    /// 1-based goal index lookup.
    pub fn contains(&self, goal: usize) -> bool {
        goal >= 1 && goal <= NUM_GOALS && self.0[goal - 1] == 1
    }

    /// Sorted 1-based goal indices.
    pub fn goals(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1).count()
    }

    pub fn intersects(&self, goals: &BTreeSet<usize>) -> bool {
        goals.iter().any(|&g| self.contains(g))
    }

    /// Target row for loss computation: 17 values in {0.0, 1.0}.
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

impl TryFrom<Vec<u8>> for Labels {
    type Error = Error;
    fn try_from(v: Vec<u8>) -> Result<Self> {
        Labels::from_multi_hot(&v)
    }
}

impl From<Labels> for Vec<u8> {
    fn from(l: Labels) -> Vec<u8> {
        l.0.to_vec()
    }
}

/// One aid project row after validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub id: String,
    pub description: String,
    pub donor_code: i64,
    pub recipient_code: i64,
    pub year: i32,
    pub commitment_usd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdg_labels: Option<Labels>,
}

/// One SDG with its official title and target texts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalDefinition {
    pub goal_index: u8,
    pub title: String,
    #[serde(default)]
    pub targets: Vec<String>,
}

/// Train/test partition produced by [`split_dataset`].
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<ProjectRecord>,
    pub test: Vec<ProjectRecord>,
    pub seed: u64,
}

/// Maps logical record fields to column headers in the source file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnMap {
    pub description: String,
    pub donor: String,
    pub recipient: String,
    pub year: String,
    pub commitment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdg_focus: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            description: "description".into(),
            donor: "donor_code".into(),
            recipient: "recipient_code".into(),
            year: "year".into(),
            commitment: "commitment_usd".into(),
            id: Some("id".into()),
            sdg_focus: Some("sdg_focus".into()),
        }
    }
}

impl ColumnMap {
    /// Apply a `field=header` override from the command line.
    pub fn set(&mut self, field: &str, header: &str) -> Result<()> {
        match field {
            "description" => self.description = header.into(),
            "donor" => self.donor = header.into(),
            "recipient" => self.recipient = header.into(),
            "year" => self.year = header.into(),
            "commitment" => self.commitment = header.into(),
            "id" => self.id = Some(header.into()),
            "sdg_focus" => self.sdg_focus = Some(header.into()),
            other => {
                return Err(Error::Config(format!(
                    "unknown column-map field '{other}' (expected description, donor, \
                     recipient, year, commitment, id, or sdg_focus)"
                )))
            }
        }
        Ok(())
    }
}

/// What happened during an ingest: kept rows, dropped rows, label fallbacks.
#[derive(Clone, Debug, Default, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub records_kept: usize,
    /// 1-based data row numbers dropped for an empty description.
    pub empty_description_rows: Vec<usize>,
    /// 1-based data row numbers whose SDG field failed to parse and were
    /// kept without labels.
    pub unlabeled_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Records plus the ingest report.
#[derive(Debug)]
pub struct Ingest {
    pub records: Vec<ProjectRecord>,
    pub report: IngestReport,
}

/// Parse delimited CRS-style text (comma or tab separated, header row) into
/// validated records. Rows with an empty description are reported and
/// dropped; rows whose SDG field cannot be parsed are kept unlabeled with a
/// warning. Bad numeric fields abort with a row error.
pub fn parse_crs_records(input: &str, map: &ColumnMap) -> Result<Ingest> {
    let delimiter = match input.lines().next() {
        Some(header) if header.contains('\t') => b'\t',
        _ => b',',
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_reader(input.as_bytes());

    let headers = reader.headers().map_err(Error::Csv)?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let desc_col = require(&map.description)?;
    let donor_col = require(&map.donor)?;
    let recipient_col = require(&map.recipient)?;
    let year_col = require(&map.year)?;
    let commitment_col = require(&map.commitment)?;
    let id_col = match &map.id {
        Some(name) => find(name),
        None => None,
    };
    let sdg_col = match &map.sdg_focus {
        Some(name) => find(name),
        None => None,
    };

    let mut report = IngestReport::default();
    let mut records = Vec::new();

    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(Error::Csv)?;
        report.rows_read += 1;

        let get = |col: usize| row.get(col).unwrap_or("").trim();

        let description = normalize_description(get(desc_col));
        if description.is_empty() {
            report.empty_description_rows.push(row_no);
            report
                .warnings
                .push(format!("row {row_no}: empty description, row dropped"));
            continue;
        }

        let donor_code = parse_int(get(donor_col), row_no, &map.donor)?;
        let recipient_code = parse_int(get(recipient_col), row_no, &map.recipient)?;
        let year = parse_int(get(year_col), row_no, &map.year)? as i32;
        let commitment_usd: f64 = get(commitment_col).parse().map_err(|_| Error::Row {
            row: row_no,
            message: format!("unparseable {} '{}'", map.commitment, get(commitment_col)),
        })?;
        if !commitment_usd.is_finite() || commitment_usd < 0.0 {
            return Err(Error::Row {
                row: row_no,
                message: format!("commitment must be finite and nonnegative, got {commitment_usd}"),
            });
        }

        let sdg_labels = match sdg_col {
            Some(col) if !get(col).is_empty() => match encode_labels(get(col)) {
                Ok(labels) => Some(labels),
                Err(err) => {
                    report.unlabeled_rows.push(row_no);
                    report
                        .warnings
                        .push(format!("row {row_no}: SDG field unusable ({err}), kept unlabeled"));
                    None
                }
            },
            _ => None,
        };

        let id = match id_col {
            Some(col) if !get(col).is_empty() => get(col).to_string(),
            _ => format!("row-{row_no}"),
        };

        records.push(ProjectRecord {
            id,
            description,
            donor_code,
            recipient_code,
            year,
            commitment_usd,
            sdg_labels,
        });
    }

    report.records_kept = records.len();
    Ok(Ingest { records, report })
}

fn parse_int(field: &str, row: usize, name: &str) -> Result<i64> {
    field.parse().map_err(|_| Error::Row {
        row,
        message: format!("unparseable {name} '{field}'"),
    })
}

/// Collapse runs of whitespace to single spaces, preserving case and accents.
pub fn normalize_description(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Encode a whitespace/comma-separated list of goal indices as a multi-hot
/// vector. Duplicates collapse; order is irrelevant.
pub fn encode_labels(field: &str) -> Result<Labels> {
    let mut goals = Vec::new();
    for token in field.split(|c: char| c.is_whitespace() || c == ',' || c == ';') {
        if token.is_empty() {
            continue;
        }
        let idx: usize = token
            .parse()
            .map_err(|_| Error::Label(format!("goal index '{token}' is not an integer")))?;
        if idx < 1 || idx > NUM_GOALS {
            return Err(Error::LabelRange(token.to_string()));
        }
        goals.push(idx);
    }
    Labels::from_goals(&goals)
}

/// Number of training records for `n` records at ratio `a:b`, rounded to the
/// nearest record.
pub fn train_count(n: usize, ratio: (u32, u32)) -> usize {
    let (a, b) = ratio;
    ((n as f64) * (a as f64) / ((a + b) as f64)).round() as usize
}

/// Shuffle records with a seeded Fisher–Yates pass and partition them at the
/// requested ratio. Deterministic for a fixed seed.
pub fn split_dataset(records: Vec<ProjectRecord>, ratio: (u32, u32), seed: u64) -> Result<DatasetSplit> {
    let (a, b) = ratio;
    if a == 0 || b == 0 {
        return Err(Error::Parameter("split ratio components must be positive".into()));
    }
    let n = records.len();
    if n < (a + b) as usize {
        return Err(Error::SplitSize(format!(
            "{n} records cannot satisfy a {a}:{b} split"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let n_train = train_count(n, ratio);
    let mut slots: Vec<Option<ProjectRecord>> = records.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (pos, &src) in order.iter().enumerate() {
        let record = slots[src].take().expect("each source index visited once");
        if pos < n_train {
            train.push(record);
        } else {
            test.push(record);
        }
    }
    Ok(DatasetSplit { train, test, seed })
}

/// Parse and validate a JSON array of goal definitions: exactly 17, indices
/// 1–17 unique, non-empty texts. Returned sorted by goal index.
pub fn load_goal_definitions(input: &str) -> Result<Vec<GoalDefinition>> {
    let mut goals: Vec<GoalDefinition> = serde_json::from_str(input).map_err(Error::Json)?;
    if goals.len() != NUM_GOALS {
        return Err(Error::DefinitionSet(format!(
            "expected {NUM_GOALS} goals, got {}",
            goals.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for goal in &goals {
        if goal.goal_index < 1 || goal.goal_index as usize > NUM_GOALS {
            return Err(Error::DefinitionSet(format!(
                "goal index {} outside 1..=17",
                goal.goal_index
            )));
        }
        if !seen.insert(goal.goal_index) {
            return Err(Error::DefinitionSet(format!(
                "duplicate goal index {}",
                goal.goal_index
            )));
        }
        if goal.title.trim().is_empty() {
            return Err(Error::DefinitionSet(format!("goal {} has empty title", goal.goal_index)));
        }
        if goal.targets.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::DefinitionSet(format!("goal {} has an empty target", goal.goal_index)));
        }
    }
    goals.sort_by_key(|g| g.goal_index);
    Ok(goals)
}

/// Serialize records to the canonical one-record-per-line form.
pub fn write_records(records: &[ProjectRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serialization is infallible"));
        out.push('\n');
    }
    out
}

/// Parse the canonical record form written by [`write_records`].
pub fn read_records(input: &str) -> Result<Vec<ProjectRecord>> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ProjectRecord = serde_json::from_str(line).map_err(|e| Error::Row {
            row: idx + 1,
            message: format!("bad record line: {e}"),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// World Bank income classification used in recipient prompts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IncomeGroup {
    LICs,
    LMICs,
    UMICs,
    LDCs,
    Other,
}

impl std::fmt::Display for IncomeGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            IncomeGroup::LICs => "LICs",
            IncomeGroup::LMICs => "LMICs",
            IncomeGroup::UMICs => "UMICs",
            IncomeGroup::LDCs => "LDCs",
            IncomeGroup::Other => "other",
        };
        f.write_str(s)
    }
}

/// Income classification effective for a recipient, optionally year-scoped.
/// `year: null` rows act as wildcards.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IncomeRow {
    #[serde(default)]
    pub year: Option<i32>,
    pub group: IncomeGroup,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecipientEntry {
    pub name: String,
    pub income: Vec<IncomeRow>,
}

/// Donor and recipient code lookups used when building country prompts.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CountryCodebook {
    pub donors: BTreeMap<i64, String>,
    pub recipients: BTreeMap<i64, RecipientEntry>,
}

impl CountryCodebook {
    pub fn from_json(input: &str) -> Result<Self> {
        serde_json::from_str(input).map_err(Error::Json)
    }

    pub fn donor_name(&self, code: i64) -> Option<&str> {
        self.donors.get(&code).map(String::as_str)
    }

    pub fn recipient_name(&self, code: i64) -> Option<&str> {
        self.recipients.get(&code).map(|r| r.name.as_str())
    }

    /// Exact-year income row wins; otherwise the wildcard row applies.
    pub fn income_for(&self, code: i64, year: i32) -> Option<IncomeGroup> {
        let entry = self.recipients.get(&code)?;
        entry
            .income
            .iter()
            .find(|row| row.year == Some(year))
            .or_else(|| entry.income.iter().find(|row| row.year.is_none()))
            .map(|row| row.group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
id,description,donor_code,recipient_code,year,commitment_usd,sdg_focus
p1,Water supply project,801,625,2019,1000.5,6
p2,  spaced   out   text ,801,625,2020,2.0,
p3,École rurale,801,625,2021,3.25,4 4 5
";

    #[test]
    fn water_supply_row_is_one_hot_at_six() {
        let ingest = parse_crs_records(SAMPLE, &ColumnMap::default()).unwrap();
        let rec = &ingest.records[0];
        assert_eq!(rec.description, "Water supply project");
        assert_eq!(rec.donor_code, 801);
        assert_eq!(rec.recipient_code, 625);
        let labels = rec.sdg_labels.as_ref().unwrap();
        assert_eq!(labels.goals(), vec![6]);
    }

    #[test]
    fn empty_sdg_field_leaves_labels_absent() {
        let ingest = parse_crs_records(SAMPLE, &ColumnMap::default()).unwrap();
        assert!(ingest.records[1].sdg_labels.is_none());
        assert_eq!(ingest.records[1].description, "spaced out text");
    }

    #[test]
    fn accents_and_duplicates_survive_ingest() {
        let ingest = parse_crs_records(SAMPLE, &ColumnMap::default()).unwrap();
        let rec = &ingest.records[2];
        assert_eq!(rec.description, "École rurale");
        assert_eq!(rec.sdg_labels.as_ref().unwrap().goals(), vec![4, 5]);
    }

    #[test]
    fn empty_description_is_reported_and_dropped() {
        let input = "\
id,description,donor_code,recipient_code,year,commitment_usd,sdg_focus
p1,   ,801,625,2019,1.0,6
p2,kept,801,625,2019,1.0,6
";
        let ingest = parse_crs_records(input, &ColumnMap::default()).unwrap();
        assert_eq!(ingest.records.len(), 1);
        assert_eq!(ingest.report.empty_description_rows, vec![1]);
        assert_eq!(ingest.report.rows_read, 2);
    }

    #[test]
    fn invalid_sdg_field_routes_to_unlabeled() {
        let input = "\
id,description,donor_code,recipient_code,year,commitment_usd,sdg_focus
p1,text,801,625,2019,1.0,18
p2,text,801,625,2019,1.0,not-a-goal
";
        let ingest = parse_crs_records(input, &ColumnMap::default()).unwrap();
        assert_eq!(ingest.records.len(), 2);
        assert!(ingest.records.iter().all(|r| r.sdg_labels.is_none()));
        assert_eq!(ingest.report.unlabeled_rows, vec![1, 2]);
        assert_eq!(ingest.report.warnings.len(), 2);
    }

    #[test]
    fn missing_required_column_names_the_column() {
        let input = "id,description,donor_code,recipient_code,year\np1,x,1,2,2019\n";
        let err = parse_crs_records(input, &ColumnMap::default()).unwrap_err();
        match err {
            Error::MissingColumn(name) => assert_eq!(name, "commitment_usd"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn bad_commitment_aborts_with_row_index() {
        let input = "\
id,description,donor_code,recipient_code,year,commitment_usd,sdg_focus
p1,x,1,2,2019,abc,6
";
        let err = parse_crs_records(input, &ColumnMap::default()).unwrap_err();
        match err {
            Error::Row { row, .. } => assert_eq!(row, 1),
            other => panic!("expected Row, got {other:?}"),
        }
    }

    #[test]
    fn negative_commitment_rejected() {
        let input = "\
id,description,donor_code,recipient_code,year,commitment_usd,sdg_focus
p1,x,1,2,2019,-5.0,6
";
        assert!(parse_crs_records(input, &ColumnMap::default()).is_err());
    }

    #[test]
    fn tab_separated_input_parses() {
        let input = "id\tdescription\tdonor_code\trecipient_code\tyear\tcommitment_usd\tsdg_focus\n\
                     p1\tsome text\t801\t625\t2019\t7.5\t3\n";
        let ingest = parse_crs_records(input, &ColumnMap::default()).unwrap();
        assert_eq!(ingest.records[0].commitment_usd, 7.5);
    }

    #[test]
    fn missing_id_column_synthesizes_stable_ids() {
        let input = "description,donor_code,recipient_code,year,commitment_usd\nx,1,2,2019,1.0\ny,1,2,2019,1.0\n";
        let ingest = parse_crs_records(input, &ColumnMap::default()).unwrap();
        assert_eq!(ingest.records[0].id, "row-1");
        assert_eq!(ingest.records[1].id, "row-2");
        let again = parse_crs_records(input, &ColumnMap::default()).unwrap();
        assert_eq!(ingest.records, again.records);
    }

    #[test]
    fn encode_labels_examples() {
        assert_eq!(encode_labels("3 5 13").unwrap().goals(), vec![3, 5, 13]);
        assert_eq!(encode_labels("1 1 2").unwrap().goals(), vec![1, 2]);
        assert_eq!(encode_labels("3,5,13").unwrap().goals(), vec![3, 5, 13]);
        match encode_labels("18").unwrap_err() {
            Error::LabelRange(token) => assert_eq!(token, "18"),
            other => panic!("expected LabelRange, got {other:?}"),
        }
        assert!(encode_labels("").is_err());
    }

    #[test]
    fn split_matches_paper_corpus_size() {
        assert_eq!(train_count(151_832, (3, 1)), 113_874);
        assert_eq!(151_832 - train_count(151_832, (3, 1)), 37_958);
    }

    #[test]
    fn four_records_split_three_to_one() {
        let records: Vec<ProjectRecord> = (0..4)
            .map(|i| ProjectRecord {
                id: format!("r{i}"),
                description: "x".into(),
                donor_code: 1,
                recipient_code: 2,
                year: 2019,
                commitment_usd: 1.0,
                sdg_labels: None,
            })
            .collect();
        let split = split_dataset(records, (3, 1), 9).unwrap();
        assert_eq!(split.train.len(), 3);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let records: Vec<ProjectRecord> = (0..40)
            .map(|i| ProjectRecord {
                id: format!("r{i}"),
                description: "x".into(),
                donor_code: 1,
                recipient_code: 2,
                year: 2019,
                commitment_usd: 1.0,
                sdg_labels: None,
            })
            .collect();
        let a = split_dataset(records.clone(), (3, 1), 7).unwrap();
        let b = split_dataset(records.clone(), (3, 1), 7).unwrap();
        let ids = |side: &[ProjectRecord]| side.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.test), ids(&b.test));
        let c = split_dataset(records, (3, 1), 8).unwrap();
        assert_ne!(ids(&a.train), ids(&c.train));
    }

    #[test]
    fn too_few_records_for_ratio_errors() {
        let records = vec![ProjectRecord {
            id: "r".into(),
            description: "x".into(),
            donor_code: 1,
            recipient_code: 2,
            year: 2019,
            commitment_usd: 1.0,
            sdg_labels: None,
        }];
        assert!(matches!(
            split_dataset(records, (3, 1), 0),
            Err(Error::SplitSize(_))
        ));
    }

    #[test]
    fn goal_definitions_round_trip() {
        let data = crate::data::sdg_goals_json();
        let goals = load_goal_definitions(data).unwrap();
        assert_eq!(goals.len(), 17);
        assert!(goals[1].title.starts_with("End hunger"));
        let serialized = serde_json::to_string(&goals).unwrap();
        let reparsed = load_goal_definitions(&serialized).unwrap();
        assert_eq!(goals, reparsed);
    }

    #[test]
    fn sixteen_goals_is_a_definition_set_error() {
        let goals = load_goal_definitions(crate::data::sdg_goals_json()).unwrap();
        let sixteen = &goals[..16];
        let json = serde_json::to_string(sixteen).unwrap();
        assert!(matches!(
            load_goal_definitions(&json),
            Err(Error::DefinitionSet(_))
        ));
    }

    #[test]
    fn records_round_trip_through_canonical_form() {
        let ingest = parse_crs_records(SAMPLE, &ColumnMap::default()).unwrap();
        let text = write_records(&ingest.records);
        let back = read_records(&text).unwrap();
        assert_eq!(ingest.records, back);
        let text2 = write_records(&back);
        assert_eq!(text, text2);
    }

    #[test]
    fn codebook_income_prefers_exact_year() {
        let json = r#"{
            "donors": {"801": "Japan"},
            "recipients": {
                "625": {"name": "Nigeria", "income": [
                    {"year": 2015, "group": "LICs"},
                    {"year": null, "group": "LMICs"}
                ]}
            }
        }"#;
        let book = CountryCodebook::from_json(json).unwrap();
        assert_eq!(book.donor_name(801), Some("Japan"));
        assert_eq!(book.income_for(625, 2015), Some(IncomeGroup::LICs));
        assert_eq!(book.income_for(625, 2020), Some(IncomeGroup::LMICs));
        assert_eq!(book.income_for(999, 2020), None);
    }
}

//! Prompt construction, LLM querying with a record/replay fixture store, and
//! decision parsing. Fixture mode never opens a socket; live mode records
//! every response so interrupted bulk runs resume from cache.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{GoalDefinition, IncomeGroup, NUM_GOALS};
use crate::decision::DecisionVector;
use crate::error::{Error, Result};

/// Which template a prompt came from; part of the cache key so the same
/// country name never collides across prompt kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    DonorPolicy,
    RecipientPolicy,
    SdgDecision,
}

impl PromptKind {
    pub fn tag(self) -> &'static str {
        match self {
            PromptKind::DonorPolicy => "donor_policy",
            PromptKind::RecipientPolicy => "recipient_policy",
            PromptKind::SdgDecision => "sdg_decision",
        }
    }
}

const DONOR_TEMPLATE: &str = "Based on government documents, summarize the Official Development Assistance (ODA) Policy of [donor country]?";

const RECIPIENT_TEMPLATE: &str = "In the OECD CRS (Creditor Reporting System) database, income groups categorize countries based on their gross national income (GNI) per capita. Here\u{2019}s what each group represents:\n\
- LICs (Low-Income Countries): Countries with a GNI per capita of $1,045 or less.\n\
- LMICs (Lower Middle-Income Countries): Countries with a GNI per capita between $1,046 and $4,095.\n\
- UMICs (Upper Middle-Income Countries): Countries with a GNI per capita between $4,096 and $12,695.\n\
- LDCs (Least Developed Countries): This group includes countries identified by the United Nations as facing severe structural impediments to sustainable development.\n\n\
Based on credible government papers, can you summarize the Official Development Assistance (ODA) Policy of [income classification], [recipient country]?";

const DECISION_HEADER: &str = "Now you will help me classify the sentence according to the following 17 Sustainable Development Goals (SDGs):";

const DECISION_FOOTER: &str = "Determine which of the above Sustainable Development Goals (SDGs) does the <EXAMPLES> correspond to. You can select multiple answers following format.\n<Answer>: <1 ~ 17>";

const ANSWER_MARKER: &str = "<Answer>:";

/// Policy-summary prompt for a donor or recipient country.
pub fn build_country_prompt(
    kind: PromptKind,
    country: &str,
    income: Option<IncomeGroup>,
) -> Result<String> {
    if country.trim().is_empty() {
        return Err(Error::Template("country name is empty".into()));
    }
    match kind {
        PromptKind::DonorPolicy => Ok(DONOR_TEMPLATE.replace("[donor country]", country)),
        PromptKind::RecipientPolicy => {
            let income = income.ok_or_else(|| {
                Error::Template(format!(
                    "recipient prompt for {country} needs an income classification"
                ))
            })?;
            Ok(RECIPIENT_TEMPLATE
                .replace("[income classification]", &income.to_string())
                .replace("[recipient country]", country))
        }
        PromptKind::SdgDecision => Err(Error::Template(
            "sdg_decision is not a country prompt kind".into(),
        )),
    }
}

/// Classification prompt listing all 17 goal titles with the description in
/// the <EXAMPLES> slot.
pub fn build_decision_prompt(description: &str, goals: &[GoalDefinition]) -> Result<String> {
    if description.trim().is_empty() {
        return Err(Error::Template("project description is empty".into()));
    }
    if goals.len() != NUM_GOALS {
        return Err(Error::DefinitionSet(format!(
            "decision prompt needs {NUM_GOALS} goal definitions, got {}",
            goals.len()
        )));
    }
    let mut out = String::with_capacity(1600 + description.len());
    out.push_str(DECISION_HEADER);
    out.push('\n');
    for g in goals {
        out.push_str(&format!("Goal {}: {}\n", g.goal_index, g.title));
    }
    out.push_str(&format!("<EXAMPLES>: {description}\n\n"));
    out.push_str(DECISION_FOOTER);
    Ok(out)
}

/// Cache key: provider, template kind, and the fully substituted prompt.
pub fn prompt_hash(provider_id: &str, kind: PromptKind, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(provider_id.as_bytes());
    h.update([0x1f]);
    h.update(kind.tag().as_bytes());
    h.update([0x1f]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Live,
    Fixture,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_id: String,
    pub mode: ProviderMode,
    /// Chat-completions endpoint; only consulted in live mode.
    pub endpoint: String,
    pub model: String,
    pub top_p: f64,
    pub temperature: f64,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in any config file.
    pub api_key_env: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_in_flight: usize,
    pub fixture_path: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            provider_id: "default".into(),
            mode: ProviderMode::Fixture,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            top_p: 1.0,
            temperature: 0.0,
            api_key_env: "SDGMAP_API_KEY".into(),
            max_retries: 3,
            initial_backoff_ms: 500,
            max_in_flight: 4,
            fixture_path: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.provider_id.trim().is_empty() {
            return Err(Error::Config("provider_id is empty".into()));
        }
        if self.fixture_path.is_none() {
            return Err(Error::Config(
                "provider needs a fixture_path (cache in live mode, source in fixture mode)".into(),
            ));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

/// One recorded exchange in the append-only store.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub prompt_hash: String,
    pub provider_id: String,
    pub prompt: String,
    pub response: String,
    pub timestamp: String,
}

/// Append-only JSONL store keyed by prompt hash. Writes are serialized;
/// reads hit the in-memory index.
pub struct FixtureStore {
    path: PathBuf,
    inner: Mutex<StoreInner>,
}

struct StoreInner {
    index: std::collections::BTreeMap<String, String>,
    file: std::fs::File,
}

impl FixtureStore {
    /// Loads an existing store or starts an empty one at `path`.
    pub fn open(path: &Path) -> Result<Self> {
        let mut index = std::collections::BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: FixtureRecord = serde_json::from_str(line).map_err(|e| {
                    Error::Config(format!(
                        "fixture store {} line {}: {e}",
                        path.display(),
                        i + 1
                    ))
                })?;
                index.insert(rec.prompt_hash, rec.response);
            }
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        Ok(FixtureStore {
            path: path.to_path_buf(),
            inner: Mutex::new(StoreInner { index, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("store lock").index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, prompt_hash: &str) -> Option<String> {
        self.inner
            .lock()
            .expect("store lock")
            .index
            .get(prompt_hash)
            .cloned()
    }

    pub fn record(&self, rec: &FixtureRecord) -> Result<()> {
        let mut inner = self.inner.lock().expect("store lock");
        if inner.index.contains_key(&rec.prompt_hash) {
            return Ok(());
        }
        let line = serde_json::to_string(rec)?;
        writeln!(inner.file, "{line}")?;
        inner.file.flush()?;
        inner.index.insert(rec.prompt_hash.clone(), rec.response.clone());
        Ok(())
    }
}

/// LLM gateway. Fixture mode answers purely from the store and never builds
/// an HTTP client; live mode queries the endpoint, retries with exponential
/// backoff, and records every response.
pub struct Provider {
    config: ProviderConfig,
    store: FixtureStore,
    client: Option<reqwest::blocking::Client>,
}

impl Provider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let path = config.fixture_path.clone().expect("validated above");
        if config.mode == ProviderMode::Fixture && !path.exists() {
            return Err(Error::Config(format!(
                "fixture mode needs an existing fixture file, {} is missing",
                path.display()
            )));
        }
        let client = match config.mode {
            ProviderMode::Fixture => None,
            ProviderMode::Live => {
                if std::env::var(&config.api_key_env).is_err() {
                    return Err(Error::Provider(format!(
                        "live mode needs the {} environment variable",
                        config.api_key_env
                    )));
                }
                Some(
                    reqwest::blocking::Client::builder()
                        .timeout(Duration::from_secs(120))
                        .build()
                        .map_err(|e| Error::Provider(format!("http client: {e}")))?,
                )
            }
        };
        let store = FixtureStore::open(&path)?;
        Ok(Provider { config, store, client })
    }

    pub fn provider_id(&self) -> &str {
        &self.config.provider_id
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }

    pub fn hash(&self, kind: PromptKind, prompt: &str) -> String {
        prompt_hash(&self.config.provider_id, kind, prompt)
    }

    /// Answers from the store when possible; otherwise queries live or fails
    /// with the missing hash in fixture mode.
    pub fn query(&self, kind: PromptKind, prompt: &str) -> Result<String> {
        let hash = self.hash(kind, prompt);
        if let Some(hit) = self.store.lookup(&hash) {
            return Ok(hit);
        }
        match self.config.mode {
            ProviderMode::Fixture => Err(Error::CacheMiss {
                provider: self.config.provider_id.clone(),
                hash,
            }),
            ProviderMode::Live => {
                let response = self.send_with_retry(prompt)?;
                self.store.record(&FixtureRecord {
                    prompt_hash: hash,
                    provider_id: self.config.provider_id.clone(),
                    prompt: prompt.to_string(),
                    response: response.clone(),
                    timestamp: chrono::Utc::now().to_rfc3339(),
                })?;
                Ok(response)
            }
        }
    }

    /// Runs queries with at most `max_in_flight` outstanding at once.
    /// Results keep input order; the first error wins.
    pub fn query_batch(&self, items: &[(PromptKind, String)]) -> Result<Vec<String>> {
        let width = self.config.max_in_flight.max(1);
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(width) {
            let results: Vec<Result<String>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|(kind, prompt)| scope.spawn(move || self.query(*kind, prompt)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("query thread panicked"))
                    .collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        Ok(out)
    }

    fn send_with_retry(&self, prompt: &str) -> Result<String> {
        let client = self.client.as_ref().expect("live mode has a client");
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| Error::Provider(format!("{} disappeared", self.config.api_key_env)))?;
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        });
        let mut last_err = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.initial_backoff_ms << (attempt - 1);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let sent = client
                .post(&self.config.endpoint)
                .bearer_auth(&key)
                .json(&body)
                .send();
            match sent {
                Err(e) => last_err = format!("transport: {e}"),
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: serde_json::Value = resp
                            .json()
                            .map_err(|e| Error::Provider(format!("malformed response: {e}")))?;
                        let content = value["choices"][0]["message"]["content"]
                            .as_str()
                            .ok_or_else(|| {
                                Error::Provider("response lacks choices[0].message.content".into())
                            })?;
                        return Ok(content.to_string());
                    }
                    // Retry throttling and server errors; anything else is final.
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_err = format!("status {status}");
                    } else {
                        return Err(Error::Provider(format!(
                            "endpoint returned {status} for model {}",
                            self.config.model
                        )));
                    }
                }
            }
        }
        Err(Error::Provider(format!(
            "gave up after {} retries: {last_err}",
            self.config.max_retries
        )))
    }
}

/// parse_decision output: the goal set plus anything worth surfacing.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedDecision {
    pub vector: DecisionVector,
    pub warnings: Vec<String>,
}

/// Extracts goal numbers from an LLM response. Integers after the last
/// `<Answer>:` marker win; otherwise any standalone 1..17 in the final
/// non-empty line. Out-of-range numbers are dropped with a warning and an
/// unparseable response yields an empty, flagged decision.
pub fn parse_decision(response: &str, provider_id: &str, prompt_hash: &str) -> ParsedDecision {
    let scan = match response.rfind(ANSWER_MARKER) {
        Some(pos) => &response[pos + ANSWER_MARKER.len()..],
        None => response
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or(""),
    };

    let mut goals = BTreeSet::new();
    let mut warnings = Vec::new();
    for token in scan.split(|c: char| !c.is_ascii_digit()) {
        if token.is_empty() {
            continue;
        }
        match token.parse::<usize>() {
            Ok(g) if (1..=NUM_GOALS).contains(&g) => {
                goals.insert(g);
            }
            Ok(g) => warnings.push(format!("dropped out-of-range goal {g}")),
            Err(_) => warnings.push(format!("dropped unparseable token {token:?}")),
        }
    }
    if goals.is_empty() {
        warnings.push("no goals parsed; decision is empty".into());
    }
    let vector = DecisionVector::new(
        goals,
        response.to_string(),
        provider_id.to_string(),
        prompt_hash.to_string(),
    )
    .expect("parsed goals are range-checked");
    ParsedDecision { vector, warnings }
}

/// Query both country summaries for one record and package them with
/// provenance. Codebook gaps fail before any query runs.
pub fn resolve_context(
    provider: &Provider,
    codebook: &crate::corpus::CountryCodebook,
    donor_code: i64,
    recipient_code: i64,
    year: i32,
) -> Result<crate::country::CountryContext> {
    let donor_name = codebook
        .donor_name(donor_code)
        .ok_or_else(|| Error::Config(format!("unknown donor code {donor_code}")))?;
    let recipient_name = codebook
        .recipient_name(recipient_code)
        .ok_or_else(|| Error::Config(format!("unknown recipient code {recipient_code}")))?;
    let income_group = codebook.income_for(recipient_code, year).ok_or_else(|| {
        Error::Config(format!("no income group for recipient {recipient_code} in {year}"))
    })?;

    let donor_prompt = build_country_prompt(PromptKind::DonorPolicy, donor_name, None)?;
    let recipient_prompt =
        build_country_prompt(PromptKind::RecipientPolicy, recipient_name, Some(income_group))?;
    let responses = provider.query_batch(&[
        (PromptKind::DonorPolicy, donor_prompt.clone()),
        (PromptKind::RecipientPolicy, recipient_prompt.clone()),
    ])?;

    Ok(crate::country::CountryContext {
        donor_summary: responses[0].clone(),
        recipient_summary: responses[1].clone(),
        income_group,
        donor_code,
        recipient_code,
        provenance: crate::country::Provenance {
            provider_id: provider.provider_id().to_string(),
            donor_prompt_hash: provider.hash(PromptKind::DonorPolicy, &donor_prompt),
            recipient_prompt_hash: provider.hash(PromptKind::RecipientPolicy, &recipient_prompt),
            truncated: false,
        },
    })
}

/// Query and parse the goal decision for one description.
pub fn resolve_decision(
    provider: &Provider,
    description: &str,
    goals: &[GoalDefinition],
) -> Result<ParsedDecision> {
    let prompt = build_decision_prompt(description, goals)?;
    let hash = provider.hash(PromptKind::SdgDecision, &prompt);
    let response = provider.query(PromptKind::SdgDecision, &prompt)?;
    Ok(parse_decision(&response, provider.provider_id(), &hash))
}

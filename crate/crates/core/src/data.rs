//! Data files compiled into the library: goal definitions, the country
//! codebook, and published reference tables used for side-by-side reports.

use serde::{Deserialize, Serialize};

use crate::corpus::{CountryCodebook, GoalDefinition};
use crate::error::Result;

pub fn sdg_goals_json() -> &'static str {
    include_str!("../data/sdg_goals.json")
}

pub fn country_codebook_json() -> &'static str {
    include_str!("../data/country_codebook.json")
}

/// The 17 goal definitions shipped with the library.
pub fn default_goal_definitions() -> Result<Vec<GoalDefinition>> {
    crate::corpus::load_goal_definitions(sdg_goals_json())
}

/// The donor/recipient codebook shipped with the library.
pub fn default_country_codebook() -> Result<CountryCodebook> {
    CountryCodebook::from_json(country_codebook_json())
}

/// One row of the published full-scale metric table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub variant: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReference {
    pub note: String,
    pub rows: Vec<ReferenceMetrics>,
}

/// Published reference metrics for the full model and its ablations.
pub fn ablation_reference() -> AblationReference {
    serde_json::from_str(include_str!("../data/paper_ablation_reference.json"))
        .expect("embedded ablation reference parses")
}

/// One row of the published budget-proportion table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PublishedProportion {
    pub sdg: u8,
    pub printed_description: String,
    pub proportion: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BudgetProportionReference {
    pub note: String,
    pub rows: Vec<PublishedProportion>,
}

/// Published per-goal budget proportions (max-normalized fitted weights).
pub fn budget_proportion_reference() -> BudgetProportionReference {
    serde_json::from_str(include_str!("../data/paper_budget_proportions.json"))
        .expect("embedded budget reference parses")
}

//! Hyperparameter importance by functional ANOVA over a regression forest.
//!
//! The importance of a parameter subset is the fraction of the objective's
//! variance (under the uniform measure on the encoded unit cube) explained by
//! that subset's ANOVA component. Tree partitions make every marginal exact,
//! so nothing here samples.

mod decompose;
mod exhaustive;
pub mod forest;
mod importance;

pub use decompose::{decompose_tree, variance_contributions, TreeDecomposition, ZERO_VARIANCE};
pub use exhaustive::{exhaustive_decomposition, FactorialTable};
pub use forest::{Features, ForestParams, LeafBox, Node, PartitionTree, RegressionForest, SplitRule};
pub use importance::{analyze, importance_table, write_table_csv, write_table_json, ImportanceAnalysis, ImportanceRow, MIN_TRIALS};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FanovaError {
    #[error("need at least 2 points to fit a forest, got {0}")]
    TooFewPoints(usize),
    #[error("inconsistent input dimensions")]
    ShapeMismatch,
    #[error("non-finite input value")]
    NonFinite,
    #[error("forest parameters must have trees >= 1 and min_leaf >= 1")]
    InvalidParams,
    #[error("factorial table is missing cells")]
    MissingCells,
    #[error("factorial table exceeds 10^6 cells")]
    TooManyCells,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("too few trials: {found} usable, need at least {needed}")]
    TooFewTrials { found: usize, needed: usize },
    #[error("trial {0} does not fit the search space")]
    InvalidTrial(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetImportance {
    pub subset: Vec<String>,
    pub dims: Vec<usize>,
    pub fraction: f64,
}

/// Explained-variance fractions, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub entries: Vec<SubsetImportance>,
    pub total_variance: f64,
}

impl ImportanceReport {
    /// Fraction for the subset with exactly these names, in any order.
    pub fn fraction(&self, subset: &[&str]) -> Option<f64> {
        let mut want: Vec<&str> = subset.to_vec();
        want.sort_unstable();
        self.entries
            .iter()
            .find(|e| {
                let mut have: Vec<&str> = e.subset.iter().map(String::as_str).collect();
                have.sort_unstable();
                have == want
            })
            .map(|e| e.fraction)
    }
}

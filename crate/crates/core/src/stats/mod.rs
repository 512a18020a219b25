//! Correlation, hypothesis tests and the analyses built on them.

mod analysis;
mod corr;
mod hypothesis;

pub use analysis::*;
pub use corr::{
    average_ranks, pearson_coefficient, pearson_log_citations, spearman, spearman_exact_p, spearman_t_approx,
    t_approx_p, CorrelationMethod, CorrelationResult, SignificanceFlags, DEFAULT_BONFERRONI_TESTS,
    EXACT_SPEARMAN_MAX_N,
};
pub use hypothesis::{
    high_low_contrast, quartile_groups, sign_consistency, welch_t_test, HighLowResult, Sidedness, SignTestResult,
    WelchResult, ZeroPolicy, HIGH_LOW_MIN_N,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("constant input: correlation undefined")]
    ConstantInput,
    #[error("both samples have zero variance")]
    DegenerateVariance,
    #[error("citation quartiles are degenerate")]
    DegenerateQuartiles,
    #[error("score table references paper {0} missing from the corpus")]
    UnknownPaper(String),
    #[error("no model spec for {0}")]
    UnknownModel(String),
    #[error("duplicate score row for paper {0}, model {1}")]
    DuplicateRow(String, String),
    #[error("invalid size groups: {0}")]
    BadGroups(String),
    #[error("{0}")]
    Empty(String),
}

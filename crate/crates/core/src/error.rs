use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A ratio argument fell outside `[0, 1]` or was not finite.
    #[error("{name} must lie in [0, 1], got {value}")]
    RatioOutOfRange {
        /// Which argument was rejected.
        name: &'static str,
        /// The offending value.
        value: f64,
    },
    /// A relation name is not interned in the graph.
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    /// The head relation of a rule has no facts, so coverage is undefined.
    #[error("head relation `{0}` has no facts")]
    EmptyHeadRelation(String),
    /// A rule identifier did not have the `h(X,Z) <= p(X,Y), q(Y,Z)` shape.
    #[error("malformed rule id `{0}`")]
    MalformedRuleId(String),
    /// A prompt template violates the `{{X}}` / `[MASK]` contract.
    #[error("invalid template for relation `{relation}`: {reason}")]
    InvalidTemplate {
        /// Relation the template was registered for.
        relation: String,
        /// What is wrong with it.
        reason: &'static str,
    },
    /// Two templates were registered for the same relation.
    #[error("duplicate template for relation `{0}`")]
    DuplicateTemplate(String),
    /// No template is registered for a prediction's relation.
    #[error("no template for relation `{0}`")]
    MissingTemplate(String),
    /// Two fixture entries share the same prompt.
    #[error("duplicate fixture prompt `{0}`")]
    DuplicateFixturePrompt(String),
    /// A sweep grid is empty or holds an out-of-range value.
    #[error("invalid {0} grid")]
    InvalidGrid(&'static str),
    /// Averaging precision over rules none of which has a defined precision.
    #[error("no rule in the set has a defined precision")]
    NoDefinedPrecision,
}

/// Result alias for core operations.
pub type Result<T, E = Error> = core::result::Result<T, E>;

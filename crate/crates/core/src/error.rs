use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("tensor data has {len} values, shape {rows}x{cols} needs {}", rows * cols)]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("malformed bracketing at byte {pos}: {msg}")]
    Bracket { pos: usize, msg: &'static str },
    #[error("bracketing has {found} leaves but the text has {expected} tokens")]
    LeafCount { expected: usize, found: usize },
    #[error("maximum ngram order must be at least 1")]
    ZeroOrder,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("variable {0} is not recorded on this tape")]
    UnknownVar(usize),
    #[error("dropout probability {0} outside [0, 1)")]
    DropoutProbability(f64),
    #[error("loss must be a 1x1 scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{what} sums to {sum}, expected 1")]
    NotNormalized { what: &'static str, sum: f64 },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("the tree encoder needs a parse for every document")]
    MissingParse,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("alignment mismatch: {what} has {found} entries, expected {expected}")]
    Misaligned {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

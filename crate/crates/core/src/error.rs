use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(u64),
    #[error("edge ({from}, {to}) references a vertex that does not exist")]
    DanglingEndpoint { from: u64, to: u64 },
    #[error("edge ({from}, {to}) has an empty label set")]
    EmptyLabelSet { from: u64, to: u64 },
    #[error("{kind} label {label} is out of range (declared {limit})")]
    LabelOutOfRange {
        kind: &'static str,
        label: u32,
        limit: u32,
    },
    #[error("graph already carries reversed edges")]
    AlreadyReversed,
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix entry is not finite")]
    NonFinite,
    #[error("invalid isomorphism: {0}")]
    InvalidIsomorphism(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("guard exceeded: {0}")]
    Guard(String),
    #[error("graph with {n} vertices exceeds max_n = {max_n}")]
    GraphTooLarge { n: usize, max_n: usize },
    #[error("graph has no edges")]
    NoEdges,
    #[error("relation {relation} out of range ({n_relations} relations)")]
    RelationOutOfRange { relation: usize, n_relations: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("infeasible generator request: {0}")]
    Infeasible(String),
    #[error("oracle search exceeded its time budget")]
    Timeout,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

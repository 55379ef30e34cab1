//! Dual message passing over directed heterogeneous multigraphs.
//!
//! Graph primitives and structural matrices, the edge-to-vertex line-graph
//! transform, exact (subgraph) isomorphism search, sparse linear algebra, a
//! small reverse-mode tape, the message-passing model and its training loop.

pub mod bench;
pub mod datagen;
pub mod enumerate;
pub mod error;
pub mod graph;
pub mod iso;
pub mod linalg;
pub mod line_graph;
pub mod model;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
pub use graph::{build_graph, Edge, Graph, Label, LabelSet, RawEdge, Vertex, VertexId};
pub use line_graph::{line_graph, LineGraphResult};

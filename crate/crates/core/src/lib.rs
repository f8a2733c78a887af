//! Policy knowledge graph construction.
//!
//! The crate covers the whole build path of a forestry policy knowledge
//! graph: the [`ontology`], a validated [`store`], document-level ingestion
//! ([`corpus`]), similarity linking ([`similarity`]), the three-stage
//! content extraction ([`extraction`]), scoring against gold annotations
//! ([`eval`]) and subgraph retrieval for prompting ([`rag`]).

pub mod corpus;
pub mod eval;
pub mod extraction;
pub mod net;
pub mod ontology;
pub mod rag;
pub mod remote;
pub mod similarity;
pub mod store;
pub mod text;

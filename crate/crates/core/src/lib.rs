//! Retrieval-augmented unit-test generation for library APIs.
//!
//! The pipeline mines API documentation, issue threads and Q&A pairs into a
//! [`corpus::Corpus`], embeds them into [`retrieval::VectorStore`]s, builds
//! zero-shot or augmented prompts ([`promptgen`]), asks a chat model for a
//! test suite ([`llmclient`]), extracts and checks the code ([`testsuite`]),
//! runs it with line tracing ([`executor`]), and scores the results
//! ([`metrics`], [`analysis`]). [`campaign`] drives the whole flow.

pub mod analysis;
pub mod campaign;
pub mod corpus;
pub mod executor;
pub mod llmclient;
pub mod metrics;
pub mod promptgen;
pub mod pytool;
pub mod retrieval;
pub mod testsuite;
pub mod tokens;

//! Probing language-model parametric memory of academic papers and relating
//! the resulting memory scores to citation counts.
//!
//! Pipeline: [`corpus`] → [`probegen`] → [`modelclient`] → [`grader`] →
//! [`stats`] → [`report`], orchestrated by [`pipeline`].

pub mod corpus;
pub mod hashing;
pub mod retry;
pub mod probegen;
pub mod modelclient;
pub mod grader;
pub mod report;
pub mod pipeline;
pub mod stats;

//! Company similarity from business-description embeddings.
//!
//! The crate turns 10-K business descriptions into document embeddings and
//! scores them on three financial tasks: GICS classification, peer return
//! correlation and cluster-based return attribution.

pub mod attribution;
pub mod classify;
pub mod cluster;
pub mod corpus;
pub mod embed;
pub mod similarity;
pub mod synth;
pub mod textprep;

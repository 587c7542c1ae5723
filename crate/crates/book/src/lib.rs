//! Compiles and runs every code listing of the guide in `book/src` as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[doc = include_str!("../../../book/src/featurization.md")]
pub mod featurization {}

#[doc = include_str!("../../../book/src/affinity-graph.md")]
pub mod affinity_graph {}

#[doc = include_str!("../../../book/src/embeddings.md")]
pub mod embeddings {}

#[doc = include_str!("../../../book/src/representations.md")]
pub mod representations {}

#[doc = include_str!("../../../book/src/linear-models.md")]
pub mod linear_models {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

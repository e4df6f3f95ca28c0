//! Simulation core for a cloud-edge-end semantic video service: videos and
//! metrics, the wireless channel, a classical digital chain, a semantic analog
//! chain, video synthesis, dynamic scene reconstruction and the end-to-end
//! service pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod channel;
pub mod classical;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod semantic;
pub mod synthesis;
pub mod transform;
pub mod tx;
pub mod video;

pub use error::{Error, Result};
pub use tx::TxStats;

//! Request and response bodies of the HTTP service.
//!
//! Videos travel as [`EncodedVideo`]: the raw container header plus the planar
//! 8-bit payload in standard base64.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::pipeline::VideoSource;
use crate::pipeline::{
    Chain, ComparisonReport, CurveData, Quality, ReconstructMetrics, RunConfig, ServiceReport,
};
use crate::scene::GaussianScene;
use crate::video::raw::{decode_payload, encode_payload, header_of, RawHeader};
use crate::video::VideoSequence;
use crate::TxStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedVideo {
    #[serde(flatten)]
    pub header: RawHeader,
    pub rgb_base64: String,
}

impl EncodedVideo {
    pub fn encode(video: &VideoSequence) -> Self {
        Self {
            header: header_of(video),
            rgb_base64: STANDARD.encode(encode_payload(video)),
        }
    }

    pub fn decode(&self) -> Result<VideoSequence> {
        let bytes = STANDARD
            .decode(&self.rgb_base64)
            .map_err(|e| Error::CorruptVideo(format!("base64 payload: {e}")))?;
        decode_payload(&self.header, &bytes)
    }
}

mod opt_snr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "crate::channel::snr_serde")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRequest {
    #[serde(default)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitRequest {
    #[serde(default)]
    pub config: RunConfig,
    #[serde(default)]
    pub chain: Chain,
    /// Overrides `config.channel.snr_db`.
    #[serde(default, with = "opt_snr", skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub source: VideoSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitResponse {
    pub chain: Chain,
    #[serde(with = "crate::channel::snr_serde")]
    pub snr_db: f64,
    pub stats: TxStats,
    pub quality: Quality,
    pub video: EncodedVideo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    #[serde(default)]
    pub config: RunConfig,
    /// Overrides `config.sweep.snr_db`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeResponse {
    pub metrics: std::collections::BTreeMap<String, f64>,
    pub video: EncodedVideo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructResponse {
    pub metrics: ReconstructMetrics,
    pub scene: GaussianScene,
    pub rendered: EncodedVideo,
    /// Objective after every iteration.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRequest {
    #[serde(default)]
    pub config: RunConfig,
    #[serde(default)]
    pub chain: Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResponse {
    pub report: ServiceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite: Option<EncodedVideo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered: Option<EncodedVideo>,
}

pub type SweepResponse = CurveData;
pub type CompareResponse = ComparisonReport;

/// One finished request, as listed by `GET /v1/runs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: u64,
    pub operation: String,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Headline number of the run, e.g. the delay reduction of `compare`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

//! Client for the ceesim HTTP service and the `ceesim` CLI built on it.

pub mod cli;

use ceesim_core::api::{
    CompositeResponse, ConfigRequest, ErrorBody, PipelineRequest, PipelineResponse, ReconstructResponse,
    RunRecord, SweepRequest, TransmitRequest, TransmitResponse,
};
use ceesim_core::pipeline::{ComparisonReport, CurveData, RunConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Http {
        url: String,
        #[source]
        source: reqwest::Error,
    },

    #[error("server returned {status}: {message}")]
    Server { status: u16, message: String },

    #[error("unreadable response from {url}: {source}")]
    Decode {
        url: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

/// Thin typed wrapper over the service endpoints.
#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn finish<R: DeserializeOwned>(&self, url: String, resp: reqwest::Response) -> Result<R> {
        let status = resp.status();
        let body = resp.bytes().await.map_err(|source| ClientError::Http {
            url: url.clone(),
            source,
        })?;
        if !status.is_success() {
            let message = serde_json::from_slice::<ErrorBody>(&body)
                .map(|e| e.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            return Err(ClientError::Server {
                status: status.as_u16(),
                message,
            });
        }
        serde_json::from_slice(&body).map_err(|source| ClientError::Decode { url, source })
    }

    async fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{path}", self.base);
        let resp = self
            .http
            .post(&url)
            .json(body)
            .send()
            .await
            .map_err(|source| ClientError::Http {
                url: url.clone(),
                source,
            })?;
        self.finish(url, resp).await
    }

    async fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R> {
        let url = format!("{}{path}", self.base);
        let resp = self
            .http
            .get(&url)
            .send()
            .await
            .map_err(|source| ClientError::Http {
                url: url.clone(),
                source,
            })?;
        self.finish(url, resp).await
    }

    pub async fn health(&self) -> Result<bool> {
        let url = format!("{}/healthz", self.base);
        let resp = self
            .http
            .get(&url)
            .send()
            .await
            .map_err(|source| ClientError::Http { url, source })?;
        Ok(resp.status().is_success())
    }

    pub async fn runs(&self) -> Result<Vec<RunRecord>> {
        self.get("/v1/runs").await
    }

    pub async fn transmit(&self, req: &TransmitRequest) -> Result<TransmitResponse> {
        self.post("/v1/transmit", req).await
    }

    pub async fn sweep(&self, req: &SweepRequest) -> Result<CurveData> {
        self.post("/v1/sweep", req).await
    }

    pub async fn composite(&self, config: &RunConfig) -> Result<CompositeResponse> {
        self.post(
            "/v1/composite",
            &ConfigRequest {
                config: config.clone(),
            },
        )
        .await
    }

    pub async fn reconstruct(&self, config: &RunConfig) -> Result<ReconstructResponse> {
        self.post(
            "/v1/reconstruct",
            &ConfigRequest {
                config: config.clone(),
            },
        )
        .await
    }

    pub async fn pipeline(&self, req: &PipelineRequest) -> Result<PipelineResponse> {
        self.post("/v1/pipeline", req).await
    }

    pub async fn compare(&self, config: &RunConfig) -> Result<ComparisonReport> {
        self.post(
            "/v1/compare",
            &ConfigRequest {
                config: config.clone(),
            },
        )
        .await
    }
}

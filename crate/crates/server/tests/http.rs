use ceesim_core::api::{
    CompositeResponse, ConfigRequest, ErrorBody, PipelineRequest, PipelineResponse, ReconstructResponse,
    RunRecord, SweepRequest, TransmitRequest, TransmitResponse,
};
use ceesim_core::pipeline::{Chain, ComparisonReport, CurveData, RunConfig, StageStatus, VideoSource};
use ceesim_core::scene::synthetic::BenchmarkSpec;
use ceesim_core::scene::FitConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::reference();
    cfg.video.width = 24;
    cfg.video.height = 24;
    cfg.video.frames = 4;
    cfg.video.gop_size = 4;
    cfg.vsr.grid = 6;
    cfg.vsr.fit.init_iterations = 3;
    cfg.vsr.fit.joint_iterations = 2;
    cfg.sweep.snr_db = vec![0.0, 20.0];
    cfg.benchmark.scene = BenchmarkSpec {
        width: 24,
        height: 24,
        frames: 3,
        bases: 2,
        focal: 26.0,
        holdout: 1,
        ..BenchmarkSpec::default()
    };
    cfg.benchmark.fit = FitConfig {
        init_iterations: 5,
        joint_iterations: 5,
        ..FitConfig::default()
    };
    cfg
}

async fn post<B: Serialize, R: DeserializeOwned>(base: &str, path: &str, body: &B) -> R {
    let resp = reqwest::Client::new()
        .post(format!("{base}{path}"))
        .json(body)
        .send()
        .await
        .unwrap();
    let status = resp.status();
    let text = resp.text().await.unwrap();
    assert!(status.is_success(), "{path} -> {status}: {text}");
    serde_json::from_str(&text).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_empty_run_log() {
    let base = ceesim_server::spawn_local().await.unwrap();
    let body = reqwest::get(format!("{base}/healthz"))
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(body, "ok");
    let runs: Vec<RunRecord> = reqwest::get(format!("{base}/v1/runs"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(runs.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn every_operation_round_trips() {
    let base = ceesim_server::spawn_local().await.unwrap();
    let config = small_config();

    let t: TransmitResponse = post(
        &base,
        "/v1/transmit",
        &TransmitRequest {
            config: config.clone(),
            chain: Chain::Classical,
            snr_db: Some(25.0),
            source: VideoSource::Background,
        },
    )
    .await;
    assert_eq!(t.chain, Chain::Classical);
    assert_eq!(t.video.decode().unwrap().len(), 4);
    assert!(t.quality.psnr_db > 30.0);

    let c: CurveData = post(
        &base,
        "/v1/sweep",
        &SweepRequest {
            config: config.clone(),
            snr_db: Some(vec![-10.0, 0.0, 10.0]),
        },
    )
    .await;
    assert_eq!(c.rows.len(), 6);

    let req = ConfigRequest {
        config: config.clone(),
    };
    let comp: CompositeResponse = post(&base, "/v1/composite", &req).await;
    assert!(comp.metrics.contains_key("matte_iou"));
    assert_eq!(comp.video.header.frames, 4);

    let rec: ReconstructResponse = post(&base, "/v1/reconstruct", &req).await;
    assert_eq!(rec.rendered.header.frames, 3);
    assert!(rec.metrics.final_loss <= rec.metrics.initial_loss);
    assert_eq!(rec.loss_history.len(), 11);

    let p: PipelineResponse = post(
        &base,
        "/v1/pipeline",
        &PipelineRequest {
            config: config.clone(),
            chain: Chain::Semantic,
        },
    )
    .await;
    assert!(p.report.completed);
    assert!(p.report.stages.iter().all(|s| s.status == StageStatus::Completed));
    assert!(p.delivered.is_some());

    let cmp: ComparisonReport = post(&base, "/v1/compare", &req).await;
    assert_eq!(cmp.curve.rows.len(), 4);

    let runs: Vec<RunRecord> = reqwest::get(format!("{base}/v1/runs"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let ops: Vec<&str> = runs.iter().map(|r| r.operation.as_str()).collect();
    assert_eq!(
        ops,
        [
            "transmit",
            "sweep",
            "composite",
            "reconstruct",
            "pipeline",
            "compare"
        ]
    );
    assert!(runs.iter().all(|r| r.ok));
}

#[tokio::test(flavor = "multi_thread")]
async fn pipeline_reports_are_byte_identical() {
    let base = ceesim_server::spawn_local().await.unwrap();
    let req = PipelineRequest {
        config: small_config(),
        chain: Chain::Classical,
    };
    let client = reqwest::Client::new();
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let resp = client
            .post(format!("{base}/v1/pipeline"))
            .json(&req)
            .send()
            .await
            .unwrap();
        assert!(resp.status().is_success());
        bodies.push(resp.bytes().await.unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_requests_get_json_errors() {
    let base = ceesim_server::spawn_local().await.unwrap();
    let client = reqwest::Client::new();

    let resp = client
        .post(format!("{base}/v1/sweep"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    let err: ErrorBody = resp.json().await.unwrap();
    assert!(!err.error.is_empty());

    let resp = client
        .post(format!("{base}/v1/sweep"))
        .json(&SweepRequest {
            config: small_config(),
            snr_db: Some(vec![]),
        })
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    let err: ErrorBody = resp.json().await.unwrap();
    assert!(err.error.contains("SNR list"), "{}", err.error);

    let mut bad = small_config();
    bad.video.gop_size = 0;
    let resp = client
        .post(format!("{base}/v1/compare"))
        .json(&ConfigRequest { config: bad })
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    let runs: Vec<RunRecord> = reqwest::get(format!("{base}/v1/runs"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|r| !r.ok && r.error.is_some()));
}

use std::fs;
use std::path::Path;

use ceesim_client::cli::{run, Cli};
use ceesim_core::pipeline::{CurveData, RunConfig, ServiceReport};
use ceesim_core::scene::synthetic::BenchmarkSpec;
use ceesim_core::scene::FitConfig;
use clap::Parser;

fn write_small_config(dir: &Path) -> String {
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
    let path = dir.join("small.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

async fn ceesim(args: &[&str]) -> Vec<std::path::PathBuf> {
    let mut argv = vec!["ceesim"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv).unwrap()).await.unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn every_subcommand_writes_its_outputs() {
    let base = ceesim_server::spawn_local().await.unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_config(tmp.path());
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let common = ["--server", &base, "--config", &config, "--out", out_s];

    let mut args = vec!["transmit", "--chain", "classical", "--snr", "inf"];
    args.extend(common);
    ceesim(&args).await;
    for f in ["transmit.json", "received.rgb", "received.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let mut args = vec!["sweep", "--snr", "-5,5"];
    args.extend(common);
    ceesim(&args).await;
    let curve = CurveData::from_csv(&fs::read_to_string(out.join("curves.csv")).unwrap()).unwrap();
    assert_eq!(curve.rows.len(), 4);

    for (cmd, files) in [
        ("composite", &["composite_metrics.json", "composite.rgb"][..]),
        (
            "reconstruct",
            &["reconstruct.json", "scene.json", "render.rgb"][..],
        ),
        ("compare", &["compare.json", "curves.csv"][..]),
    ] {
        let mut args = vec![cmd];
        args.extend(common);
        ceesim(&args).await;
        for f in files {
            assert!(out.join(f).is_file(), "{cmd}: {f}");
        }
    }

    let mut args = vec!["pipeline", "--no-vsr"];
    args.extend(common);
    ceesim(&args).await;
    let report: ServiceReport =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.completed);
    assert!(out.join("delivered.rgb").is_file());
}

#[tokio::test(flavor = "multi_thread")]
async fn same_seed_same_report() {
    let base = ceesim_server::spawn_local().await.unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_config(tmp.path());
    let mut reports = Vec::new();
    for (i, seed) in ["7", "7", "8"].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let out_s = out.to_str().unwrap().to_string();
        ceesim(&[
            "pipeline", "--server", &base, "--config", &config, "--seed", seed, "--out", &out_s,
        ])
        .await;
        reports.push((
            fs::read(out.join("report.json")).unwrap(),
            fs::read(out.join("delivered.rgb")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
    assert_ne!(reports[0].0, reports[2].0);
}

#[tokio::test(flavor = "multi_thread")]
async fn server_errors_surface() {
    let base = ceesim_server::spawn_local().await.unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let argv = [
        "ceesim",
        "sweep",
        "--snr",
        "",
        "--server",
        &base,
        "--out",
        out.to_str().unwrap(),
    ];
    if let Ok(cli) = Cli::try_parse_from(argv) {
        assert!(run(cli).await.is_err());
    }

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[video]\ngop_size = 0\n").unwrap();
    let cli = Cli::try_parse_from([
        "ceesim",
        "compare",
        "--config",
        bad.to_str().unwrap(),
        "--server",
        &base,
    ])
    .unwrap();
    assert!(run(cli).await.is_err());

    let cli = Cli::try_parse_from([
        "ceesim",
        "composite",
        "--server",
        "http://127.0.0.1:1",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let err = run(cli).await.unwrap_err();
    assert!(format!("{err:#}").contains("request to"), "{err:#}");
}

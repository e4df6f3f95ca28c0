use ceesim_core::pipeline::{
    run_service, snr_sweep, stage_latency, Chain, CurveData, CurveRow, LinkKind, LinkSpec, NodeSpec, Role,
    RunConfig, ServiceReport, ServiceRequest, Stage, StageReport, StageStatus,
};
use proptest::prelude::*;

fn small_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::reference();
    cfg.seed = seed;
    cfg.video.width = 24;
    cfg.video.height = 24;
    cfg.video.frames = 4;
    cfg.video.gop_size = 2;
    cfg.vsr.grid = 6;
    cfg.vsr.fit.init_iterations = 3;
    cfg.vsr.fit.joint_iterations = 2;
    cfg
}

fn check_totals(report: &ServiceReport) {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    let sum = |f: &dyn Fn(&StageReport) -> f64| report.stages.iter().map(f).sum::<f64>();
    assert!(close(report.totals.total_s, sum(&|s| s.delay_s)));
    assert!(close(report.totals.compute_s, sum(&|s| s.compute_s)));
    assert!(close(
        report.totals.wireless_s + report.totals.fiber_s,
        sum(&|s| s.transmission_s)
    ));
    for s in &report.stages {
        assert!(close(s.delay_s, s.transmission_s + s.compute_s), "{:?}", s.stage);
    }
}

#[test]
fn service_runs_every_stage_in_order() {
    for chain in Chain::ALL {
        let out = run_service(&ServiceRequest { chain }, &small_config(5)).unwrap();
        let r = &out.report;
        assert!(r.completed);
        assert_eq!(r.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), Stage::ALL);
        assert!(r.stages.iter().all(|s| s.status == StageStatus::Completed));
        check_totals(r);
        assert!(out.delivered.is_some());
        let back: ServiceReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, *r);
    }
}

#[test]
fn semantic_uplink_is_cheaper_than_classical() {
    let cfg = small_config(9);
    let air = |chain| {
        run_service(&ServiceRequest { chain }, &cfg)
            .unwrap()
            .report
            .stage(Stage::UploadUserVideo)
            .payload_bits
    };
    assert!(air(Chain::Semantic) < air(Chain::Classical));
}

#[test]
fn sweep_rows_are_sorted_and_reproducible() {
    let cfg = small_config(2);
    let snrs = [10.0, -5.0, 40.0];
    let a = snr_sweep(&cfg, &snrs).unwrap();
    let b = snr_sweep(&cfg, &snrs).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 6);
    let back = CurveData::from_csv(&a.to_csv().unwrap()).unwrap();
    assert_eq!(back.rows.len(), a.rows.len());
    for (x, y) in back.rows.iter().zip(&a.rows) {
        assert_eq!(x.chain, y.chain);
        assert_eq!(x.air_bits, y.air_bits);
        assert!(x.snr_db == y.snr_db);
    }
    assert!(snr_sweep(&cfg, &[]).is_err());
    assert!(snr_sweep(&cfg, &[f64::NAN]).is_err());
    assert!(snr_sweep(&cfg, &[f64::INFINITY]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wireless_delay_is_linear_in_payload(a in 0u64..1 << 40, b in 0u64..1 << 40, bps in 1e3f64..1e10) {
        let link = LinkSpec { from: Role::End, to: Role::Edge, kind: LinkKind::Wireless, throughput_bps: bps };
        let node = NodeSpec { role: Role::Edge, compute_flops: 1e12 };
        let d = |bits| stage_latency(bits, &link, 0.0, &node);
        prop_assert!((d(a + b) - d(a) - d(b)).abs() <= 1e-9 * d(a + b).max(1.0));
        prop_assert!((d(a) - a as f64 / bps).abs() <= 1e-12 * d(a).max(1.0));
    }

    #[test]
    fn max_adjacent_drop_ignores_row_order(psnr in prop::collection::vec(0f64..60.0, 2..10), shift in 0usize..10) {
        let rows: Vec<CurveRow> = psnr
            .iter()
            .enumerate()
            .map(|(i, &p)| CurveRow {
                snr_db: 5.0 * i as f64,
                chain: Chain::Classical,
                psnr_db: p,
                ms_ssim: 0.5,
                air_bits: 1,
                wireless_delay_s: 0.0,
                decode_failures: 0,
                concealed_blocks: 0,
            })
            .collect();
        let expected = psnr.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let mut shuffled = rows.clone();
        shuffled.rotate_left(shift % rows.len());
        let got = CurveData { rows: shuffled }.max_adjacent_drop(Chain::Classical);
        prop_assert!((got - expected).abs() < 1e-12, "{} vs {}", got, expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn service_totals_equal_stage_sums(seed in any::<u64>(), snr in -10f64..30.0, vsr in any::<bool>()) {
        let mut cfg = small_config(seed);
        cfg.channel.snr_db = snr;
        cfg.vsr.enabled = vsr;
        let out = run_service(&ServiceRequest { chain: Chain::Semantic }, &cfg).unwrap();
        check_totals(&out.report);
        let skipped = out.report.stages.iter().filter(|s| s.status == StageStatus::Skipped).count();
        prop_assert_eq!(skipped, if vsr { 0 } else { 2 });
        let again = run_service(&ServiceRequest { chain: Chain::Semantic }, &cfg).unwrap();
        prop_assert_eq!(out.report.to_json().unwrap(), again.report.to_json().unwrap());
    }

    #[test]
    fn config_toml_round_trip(seed in any::<u64>(), snr in -20f64..40.0, frames in 1usize..20) {
        let mut cfg = RunConfig::reference();
        cfg.seed = seed;
        cfg.channel.snr_db = snr;
        cfg.video.frames = frames;
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

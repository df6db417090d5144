use djscc_core::harness::checks::{run_correlation_check, run_cvie_check, run_mi_check, run_posterior_check};
use djscc_core::harness::pipeline::{encode_views, run_trials, LinkSettings, PipelineSummary, SnrChoice};
use djscc_core::harness::sweeps::{ccdf, count_inversions, papr_rows, sweep_csi_error, sweep_papr, sweep_scs_at, sweep_scs_vs_snr, CsiPoint};
use djscc_core::harness::{parse_csv, run_toy_pipeline, write_csv, CsiMode, ExperimentConfig, TrialRecord};
use djscc_core::signal::SeededRng;

fn cfg(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        trials,
        ..ExperimentConfig::default()
    }
}

fn fixed(cfg: &ExperimentConfig, snr: f64, csi: CsiMode) -> LinkSettings {
    LinkSettings {
        snr: SnrChoice::Fixed {
            snr1_db: snr,
            snr2_db: snr,
        },
        csi,
        ..LinkSettings::from_config(cfg)
    }
}

#[test]
fn power_is_exact_before_clipping() {
    let mut c = cfg(1);
    c.power.total1 = 0.5;
    c.power.total2 = 1.7;
    let (x1, x2) = encode_views(&c, &mut SeededRng::new(5)).unwrap();
    let p = |x: &ndarray::Array2<num_complex::Complex64>| x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
    assert!((p(&x1) - 0.5).abs() < 1e-9);
    assert!((p(&x2) - 1.7).abs() < 1e-9);
}

#[test]
fn perfect_csi_matches_posterior_variance() {
    // 50 trials x 2048 subcarriers
    let c = cfg(50);
    let recs = run_trials(&c, &fixed(&c, 0.0, CsiMode::Perfect), &SeededRng::new(11)).unwrap();
    let s = PipelineSummary::of(&recs);
    assert!(s.theory_gap() < 0.02, "gap {}", s.theory_gap());
    assert!(s.mse() < (s.mse_single1 + s.mse_single2) / 2.0);
    assert!((s.empirical_corr - s.r_prime).abs() / s.r_prime < 0.02);
}

#[test]
fn mmse_csi_matches_posterior_variance() {
    let c = cfg(50);
    let recs = run_trials(&c, &fixed(&c, 0.0, CsiMode::Mmse), &SeededRng::new(12)).unwrap();
    let s = PipelineSummary::of(&recs);
    assert!(s.theory_gap() < 0.05, "gap {}", s.theory_gap());
}

#[test]
fn small_synthetic_error_matches_posterior_variance() {
    let c = cfg(50);
    let recs = run_trials(&c, &fixed(&c, 0.0, CsiMode::Synthetic(0.01)), &SeededRng::new(13)).unwrap();
    assert!(PipelineSummary::of(&recs).theory_gap() < 0.05);
}

#[test]
fn uncorrelated_sources_fusion_equals_single_view() {
    let mut c = cfg(20);
    c.source.correlation = 0.0;
    let recs = run_toy_pipeline(&c, &SeededRng::new(14)).unwrap();
    let s = PipelineSummary::of(&recs);
    assert!((s.mse1 - s.mse_single1).abs() / s.mse_single1 < 0.01);
    assert!((s.mse2 - s.mse_single2).abs() / s.mse_single2 < 0.01);
}

#[test]
fn mild_clipping_barely_hurts() {
    let mut c = cfg(20);
    let base = PipelineSummary::of(&run_trials(&c, &fixed(&c, 0.0, CsiMode::Perfect), &SeededRng::new(15)).unwrap());
    c.clipping.ratio = Some(3.0);
    let clipped = PipelineSummary::of(&run_trials(&c, &fixed(&c, 0.0, CsiMode::Perfect), &SeededRng::new(15)).unwrap());
    assert!(clipped.mse() >= base.mse() * 0.999);
    assert!((clipped.mse() - base.mse()) / base.mse() < 0.05);
}

#[test]
fn scs_rises_with_snr() {
    let c = cfg(30);
    let pts = sweep_scs_vs_snr(&c, &SeededRng::new(16)).unwrap();
    assert_eq!(pts.len(), 11);
    assert_eq!(pts.first().unwrap().snr_db, -8.0);
    assert_eq!(pts.last().unwrap().snr_db, 2.0);
    let means: Vec<f64> = pts.iter().map(|p| p.mean_scs).collect();
    assert!(count_inversions(&means) <= 1, "{means:?}");
}

#[test]
fn scs_extremes() {
    let mut c = cfg(3);
    c.source.correlation = 1.0;
    let pts = sweep_scs_at(&c, &[f64::INFINITY], &SeededRng::new(17)).unwrap();
    assert!((pts[0].mean_scs - 1.0).abs() < 1e-9, "{}", pts[0].mean_scs);
    c.source.correlation = 0.0;
    let pts = sweep_scs_at(&c, &[f64::INFINITY, 2.0], &SeededRng::new(17)).unwrap();
    assert!(pts.iter().all(|p| p.mean_scs < 0.1));
}

#[test]
fn papr_sweep_trade_off() {
    let c = cfg(30);
    let pts = sweep_papr(&c, &SeededRng::new(18)).unwrap();
    let ratios: Vec<f64> = pts.iter().map(|p| p.ratio).collect();
    assert_eq!(ratios, vec![1.0, 1.4, 2.0, 3.0, f64::INFINITY]);
    for w in pts.windows(2) {
        // the larger ratio's CCDF lies to the right
        for t in 0..=120 {
            let th = t as f64 / 10.0;
            assert!(w[0].ccdf(th) <= w[1].ccdf(th));
        }
        assert!(w[1].summary.mse() <= w[0].summary.mse());
    }
    let (clip3, open) = (&pts[3].summary, &pts[4].summary);
    assert!((clip3.mse() - open.mse()) / open.mse() < 0.05);
    assert_eq!(papr_rows(&pts).len(), 5 * 30);
    assert_eq!(ccdf(&[], 1.0), 0.0);
}

fn find<'a>(pts: &'a [CsiPoint], mode: &str, np: u64) -> &'a CsiPoint {
    pts.iter().find(|p| p.mode == mode && p.n_pilots == np).unwrap()
}

#[test]
fn csi_sweep_orderings() {
    let c = cfg(20);
    let pts = sweep_csi_error(&c, &SeededRng::new(19)).unwrap();
    let pilots = [1u64, 2, 4, 8];
    for mode in ["ls", "mmse"] {
        for w in pilots.windows(2) {
            let (a, b) = (find(&pts, mode, w[0]), find(&pts, mode, w[1]));
            assert!(b.csi_mse < a.csi_mse, "{mode} csi error at {:?}", w);
            assert!(b.mse <= a.mse, "{mode} mse at {:?}", w);
        }
    }
    for &np in &pilots {
        let (ls, mmse) = (find(&pts, "ls", np), find(&pts, "mmse", np));
        assert!(mmse.csi_mse <= ls.csi_mse);
        assert!(mmse.mse <= ls.mse);
    }
    let perfect = &pts[0];
    let zero = pts.iter().find(|p| p.mode == "synthetic" && p.error_variance == 0.0).unwrap();
    assert_eq!(perfect.mse, zero.mse);
    let synth: Vec<&CsiPoint> = pts.iter().filter(|p| p.mode == "synthetic").collect();
    for w in synth.windows(2) {
        assert!(w[1].mse >= w[0].mse);
    }
}

#[test]
fn identical_seeds_give_identical_csv() {
    let c = cfg(4);
    let csv = |seed| {
        let recs = run_toy_pipeline(&c, &SeededRng::new(seed)).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(3), csv(3));
    assert_ne!(csv(3), csv(4));
    let text = String::from_utf8(csv(3)).unwrap();
    let parsed: Vec<TrialRecord> = parse_csv(&text).unwrap();
    let recs = run_toy_pipeline(&c, &SeededRng::new(3)).unwrap();
    assert_eq!(parsed, recs.iter().map(TrialRecord::rounded).collect::<Vec<_>>());
}

#[test]
fn trials_are_individually_reproducible() {
    let c = cfg(3);
    let settings = LinkSettings::from_config(&c);
    let all = run_trials(&c, &settings, &SeededRng::new(8)).unwrap();
    let one = djscc_core::harness::simulate_trial(&c, &settings, 2, &SeededRng::new(8)).unwrap();
    assert_eq!(all[2], one);
    assert!(all.iter().all(|r| (-8.0..=2.0).contains(&r.snr1_db) && (-8.0..=2.0).contains(&r.snr2_db)));
}

#[test]
fn check_runners_small_scale() {
    let rows = run_posterior_check(3, 1, 200_000, &SeededRng::new(1)).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.worst() < 0.03), "{rows:?}");
    assert_eq!(rows[3].error_model, "multiplicative");

    let corr = run_correlation_check(3, 200_000, &SeededRng::new(2)).unwrap();
    assert!(corr.iter().all(|r| r.rel_err < 0.02 && r.r_prime.abs() <= r.r.abs()));

    let mi = run_mi_check(200, &SeededRng::new(3)).unwrap();
    assert!(mi.iter().all(|r| !r.violation));

    let cv = run_cvie_check(&[1, 3, 5], 5, &SeededRng::new(4)).unwrap();
    assert!(cv.iter().all(|r| r.max_abs_err < 1e-10));
}

mod common;

use std::fs;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use distnet::eval::{
    band_aggregate, coverage, emit_report, encoder_length_sweep, interpolation_score, nearest_fill,
    rmse_metric, segmental_metrics, smape_metric, EvalResult, Forecast,
};
use distnet::features::Pollutant;
use distnet::grid::Interpolator;
use distnet::models::ModelKind;
use distnet::synth::{generate, preset};
use distnet::training::TrainConfig;
use distnet::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 3, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

fn forecast(station: &str, offset: i64, preds: Vec<f64>, truths: Vec<f64>) -> Forecast {
    Forecast {
        station_id: station.to_string(),
        pollutant: Pollutant::Pm25,
        first_target: t0() + Duration::hours(offset),
        preds,
        truths,
    }
}

#[test]
fn metric_examples() {
    assert_eq!(smape_metric(&[3.0], &[1.0], 1.0).unwrap(), 1.0);
    assert_eq!(smape_metric(&[0.0], &[0.0], 1.0).unwrap(), 0.0);
    assert_eq!(smape_metric(&[5.0, 7.5], &[5.0, 7.5], 1.0).unwrap(), 0.0);
    // 2 * 0.4 / 0.5 with the floor at 0.5
    assert_eq!(smape_metric(&[0.4], &[0.0], 0.5).unwrap(), 1.6);
    assert_eq!(
        rmse_metric(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
        12.5f64.sqrt()
    );
    assert_eq!(rmse_metric(&[2.0, 9.0], &[2.0, 9.0]).unwrap(), 0.0);
}

#[test]
fn metrics_reject_empty_and_mismatched() {
    assert!(matches!(
        smape_metric(&[], &[], 1.0),
        Err(Error::Contract(_))
    ));
    assert!(matches!(rmse_metric(&[], &[]), Err(Error::Contract(_))));
    assert!(matches!(
        rmse_metric(&[1.0], &[1.0, 2.0]),
        Err(Error::Contract(_))
    ));
}

proptest! {
    #[test]
    fn metrics_symmetric_and_bounded(pairs in prop::collection::vec((0.0f64..300.0, 0.0f64..300.0), 1..40)) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = smape_metric(&p, &y, 1.0).unwrap();
        prop_assert!((0.0..=2.0).contains(&s));
        prop_assert_eq!(s, smape_metric(&y, &p, 1.0).unwrap());
        prop_assert_eq!(rmse_metric(&p, &y).unwrap(), rmse_metric(&y, &p).unwrap());
    }

    #[test]
    fn rmse_translation_invariant(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..30),
        c in -100.0f64..100.0,
    ) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let pc: Vec<f64> = p.iter().map(|v| v + c).collect();
        let yc: Vec<f64> = y.iter().map(|v| v + c).collect();
        let a = rmse_metric(&p, &y).unwrap();
        let b = rmse_metric(&pc, &yc).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    /// Stations with different window counts still give exact consistency
    /// because both levels average per station.
    #[test]
    fn segments_reassemble_overall(seed in 0u64..1000, stations in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fs = Vec::new();
        for s in 0..stations {
            for w in 0..rng.random_range(1..6) {
                let preds = (0..48).map(|_| rng.random_range(0.0..80.0)).collect();
                let truths = (0..48).map(|_| rng.random_range(0.0..80.0)).collect();
                fs.push(forecast(&format!("s{s}"), w, preds, truths));
            }
        }
        let r = EvalResult::compute(&fs, 6, 1.0).unwrap();
        prop_assert_eq!(r.segments.len(), 8);
        let total: usize = r.segments.iter().map(|s| s.steps()).sum();
        let weighted: f64 = r.segments.iter().map(|s| s.smape * s.steps() as f64).sum::<f64>()
            / total as f64;
        prop_assert!((weighted - r.overall[0].smape).abs() <= 1e-12);
        prop_assert!((0.0..=2.0).contains(&r.overall[0].smape));
    }
}

#[test]
fn horizon_of_48_gives_eight_segments() {
    let fs = vec![forecast("a", 0, vec![1.0; 48], vec![2.0; 48])];
    let segs = segmental_metrics(&fs, 6, 1.0).unwrap();
    assert_eq!(segs.len(), 8);
    let covered: Vec<usize> = segs.iter().flat_map(|s| s.start_h..s.end_h).collect();
    assert_eq!(covered, (0..48).collect::<Vec<_>>());
    // identical per-step errors
    assert!(segs
        .iter()
        .all(|s| s.smape == segs[0].smape && s.rmse == segs[0].rmse));
}

#[test]
fn non_divisible_horizon_is_config_error() {
    let fs = vec![forecast("a", 0, vec![1.0; 10], vec![1.0; 10])];
    assert!(matches!(
        segmental_metrics(&fs, 6, 1.0),
        Err(Error::Config(_))
    ));
}

#[test]
fn error_in_last_step_only_hits_last_segment() {
    let mut preds = vec![10.0; 48];
    preds[47] = 14.0;
    let fs = vec![forecast("a", 0, preds, vec![10.0; 48])];
    let segs = segmental_metrics(&fs, 6, 1.0).unwrap();
    for s in &segs[..7] {
        assert_eq!((s.smape, s.rmse), (0.0, 0.0));
    }
    // one of six steps: 2 * 4 / 24 and sqrt(16 / 6)
    assert!((segs[7].smape - (8.0 / 24.0) / 6.0).abs() < 1e-15);
    assert!((segs[7].rmse - (16.0f64 / 6.0).sqrt()).abs() < 1e-15);
}

#[test]
fn segments_average_over_stations() {
    let fs = vec![
        forecast("a", 0, vec![3.0; 6], vec![1.0; 6]),
        forecast("b", 0, vec![1.0; 6], vec![1.0; 6]),
        forecast("b", 1, vec![1.0; 6], vec![1.0; 6]),
    ];
    let segs = segmental_metrics(&fs, 6, 1.0).unwrap();
    // station means 1.0 and 0.0, not the pooled 1/3
    assert_eq!(segs[0].smape, 0.5);
}

#[test]
fn band_examples() {
    let single = band_aggregate(&[forecast("a", 0, vec![7.0], vec![6.0])]);
    assert_eq!(single.len(), 1);
    assert_eq!(
        (single[0].mu, single[0].sigma, single[0].count),
        (7.0, 0.0, 1)
    );
    assert!(!single[0].covered);

    let pair = band_aggregate(&[
        forecast("a", 0, vec![2.0], vec![5.0]),
        forecast("a", 0, vec![4.0], vec![5.0]),
    ]);
    assert_eq!((pair[0].mu, pair[0].sigma), (3.0, 1.0));
    assert!(pair[0].covered, "5 lies on the edge of [1, 5]");
}

#[test]
fn stride_one_covers_interior_hours_horizon_times() {
    let fs: Vec<Forecast> = (0..200)
        .map(|s| forecast("a", s, vec![1.0; 48], vec![1.0; 48]))
        .collect();
    let bands = band_aggregate(&fs);
    assert_eq!(bands.len(), 200 + 47);
    for (i, b) in bands.iter().enumerate() {
        assert_eq!(b.count, (i + 1).min(48).min(247 - i));
    }
    assert!(bands[47..200].iter().all(|b| b.count == 48));
}

/// Truth and every forecast drawn from the same Gaussian around a common
/// mean: the truth falls inside mu ± 2 sigma about 95% of the time.
#[test]
fn honest_gaussian_spread_covers_95_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 3.0).unwrap();
    let hours = 6000;
    let level = |h: usize| 40.0 + 10.0 * (h as f64 / 24.0).sin();
    let truth: Vec<f64> = (0..hours + 48)
        .map(|h| level(h) + noise.sample(&mut rng))
        .collect();
    let fs: Vec<Forecast> = (0..hours)
        .map(|s| {
            let preds = (0..48)
                .map(|k| level(s + k) + noise.sample(&mut rng))
                .collect();
            forecast("a", s as i64, preds, truth[s..s + 48].to_vec())
        })
        .collect();
    let bands: Vec<_> = band_aggregate(&fs)
        .into_iter()
        .filter(|b| b.count == 48)
        .collect();
    let c = coverage(&bands);
    assert!((c - 0.95).abs() <= 0.03, "coverage {c}");
}

fn sample_result() -> (EvalResult, Vec<distnet::eval::BandPoint>) {
    let mut fs = Vec::new();
    for (k, id) in ["s1", "s2"].iter().enumerate() {
        for w in 0..30 {
            let preds = (0..48).map(|i| 20.0 + ((w + i + k) % 7) as f64).collect();
            let truths = (0..48).map(|i| 21.0 + ((w * 3 + i) % 5) as f64).collect();
            fs.push(forecast(id, w as i64, preds, truths));
        }
    }
    (
        EvalResult::compute(&fs, 6, 1.0).unwrap(),
        band_aggregate(&fs),
    )
}

#[test]
fn report_files_are_deterministic() {
    let (result, bands) = sample_result();
    let run = serde_json::json!({"seed": 3});
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = emit_report(&result, &bands, a.path(), &run).unwrap();
    let fb = emit_report(&result, &bands, b.path(), &run).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let names: Vec<_> = fa
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in [
        "metrics.csv",
        "segments.csv",
        "bands.csv",
        "report.json",
        "segments_pm25.svg",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    assert!(names.iter().any(|n| n == "bands_pm25_s1.svg"));
    let svg = fs::read_to_string(a.path().join("bands_pm25_s1.svg")).unwrap();
    assert!(svg.starts_with("<svg") && !svg.contains("<script"));
}

#[test]
fn report_csv_layouts() {
    let (result, bands) = sample_result();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&result, &bands, dir.path(), &serde_json::json!({})).unwrap();

    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("pollutant,station_id,smape,rmse,n"));
    assert_eq!(lines.count(), 2);

    let segments = fs::read_to_string(dir.path().join("segments.csv")).unwrap();
    let mut lines = segments.lines();
    assert_eq!(
        lines.next(),
        Some("pollutant,segment_index,start_h,end_h,smape,rmse")
    );
    assert_eq!(lines.count(), 8);

    // coverage recomputed from plain columns matches the aggregate
    let text = fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("timestamp,station_id,pollutant,truth,mu,sigma,covered")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), bands.len());
    let mut inside = 0;
    for r in &rows {
        let (y, mu, s): (f64, f64, f64) = (
            r[3].parse().unwrap(),
            r[4].parse().unwrap(),
            r[5].parse().unwrap(),
        );
        let flag = (y - mu).abs() <= 2.0 * s;
        assert_eq!(r[6], if flag { "1" } else { "0" });
        inside += usize::from(flag);
    }
    assert_eq!(inside as f64 / rows.len() as f64, coverage(&bands));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["epsilon"], 1.0);
}

#[test]
fn unwritable_report_dir_is_io_error() {
    let (result, bands) = sample_result();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = emit_report(
        &result,
        &bands,
        &blocker.join("out"),
        &serde_json::json!({}),
    );
    assert!(matches!(err, Err(Error::Io(_))));
}

#[test]
fn interpolation_score_basics() {
    let truth = vec![4.0; 2 * 3 * 3];
    let s = interpolation_score(&truth, &truth, (2, 3, 3), &[(0, 0)], Some(&[(1, 1)])).unwrap();
    assert_eq!(s.len(), 2);
    assert!(s
        .iter()
        .all(|h| h.off_station_rmse == 0.0 && h.held_out_rmse == Some(0.0)));
    assert!(matches!(
        interpolation_score(&truth, &truth[1..], (2, 3, 3), &[], None),
        Err(Error::Contract(_))
    ));
}

#[test]
fn linear_field_held_out_stations_exact() {
    let grid = distnet::grid::GridSpec::new(11, 12, 39.8, 116.2, 0.1).unwrap();
    // stays positive so the nonnegativity floor never engages
    let field = |(x, y): (f64, f64)| 60.0 + 0.25 * x - 0.4 * y;
    let used = [(0, 0), (0, 11), (10, 0), (10, 11), (5, 6), (2, 8), (8, 3)];
    let held = [(4, 4), (6, 9), (3, 2)];
    let pts: Vec<_> = used
        .iter()
        .map(|&(r, c)| (grid.cell_center(r, c), (r, c)))
        .collect();
    let values: Vec<f64> = pts.iter().map(|p| field(p.0)).collect();
    let est = Interpolator::new(&grid, &pts)
        .unwrap()
        .evaluate(&values)
        .unwrap();
    let truth: Vec<f64> = (0..11)
        .flat_map(|r| (0..12).map(move |c| (r, c)))
        .map(|(r, c)| field(grid.cell_center(r, c)))
        .collect();
    let s = interpolation_score(est.data(), &truth, (1, 11, 12), &used, Some(&held)).unwrap();
    assert!(s[0].held_out_rmse.unwrap() <= 1e-8, "{:?}", s[0]);
}

#[test]
fn cubic_beats_nearest_on_diffusion_fields() {
    let mut cfg = preset("tiny").unwrap();
    cfg.missing_rate = 0.0;
    cfg.noise_std = 0.0;
    let out = generate(&cfg).unwrap();
    let grid = &out.dataset.grid;
    let stations = &out.dataset.stations;
    let cells: Vec<(usize, usize)> = stations.iter().map(|s| (s.row, s.col)).collect();
    let positions = stations.positions(grid);
    let pts: Vec<_> = positions
        .iter()
        .copied()
        .zip(cells.iter().copied())
        .collect();
    let interp = Interpolator::new(grid, &pts).unwrap();
    let n = grid.cells();
    let truth = &out.truth[Pollutant::Pm25.index()];
    let hours: Vec<usize> = (0..cfg.hours).step_by(cfg.hours / 24).collect();
    let (mut cubic, mut nearest, mut sampled) = (Vec::new(), Vec::new(), Vec::new());
    for &h in &hours {
        let frame = &truth[h * n..(h + 1) * n];
        let values: Vec<f64> = cells
            .iter()
            .map(|&(r, c)| frame[r * grid.cols + c])
            .collect();
        cubic.extend_from_slice(interp.evaluate(&values).unwrap().data());
        nearest.extend(nearest_fill(grid, &positions, &values).unwrap());
        sampled.extend_from_slice(frame);
    }
    let shape = (hours.len(), grid.rows, grid.cols);
    let mean = |s: Vec<distnet::eval::InterpScore>| {
        s.iter().map(|h| h.off_station_rmse).sum::<f64>() / s.len() as f64
    };
    let c = mean(interpolation_score(&cubic, &sampled, shape, &cells, None).unwrap());
    let nn = mean(interpolation_score(&nearest, &sampled, shape, &cells, None).unwrap());
    assert!(c < nn, "cubic {c} vs nearest {nn}");
}

#[test]
fn sweep_rows_and_determinism() {
    let ds = common::toy_dataset(5, 5, 4, 120, 2);
    let fs = common::feature_set(&ds, 80);
    let model = common::small_config(ModelKind::LocalSeq2seq, 6, 6);
    let cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 1,
        max_steps: Some(3),
        ..TrainConfig::default()
    };
    let a = encoder_length_sweep(&fs, &[6, 12], &model, &cfg, 0.2).unwrap();
    assert_eq!(
        a.iter().map(|r| r.encoder_len).collect::<Vec<_>>(),
        vec![6, 12]
    );
    assert!(a
        .iter()
        .all(|r| r.smape.is_finite() && r.rmse >= 0.0 && r.test_windows > 0));
    let b = encoder_length_sweep(&fs, &[12], &model, &cfg, 0.2).unwrap();
    assert_eq!(a[1], b[0]);
    assert!(matches!(
        encoder_length_sweep(&fs, &[200], &model, &cfg, 0.2),
        Err(Error::Ingestion(_))
    ));
}

use std::path::{Path, PathBuf};

use riskbench::benchmark::*;
use riskbench::encoding::Scheme;
use riskbench::scoring::{read_scored_records, ScoreFlag};
use riskbench::transport::EndpointConfig;

const GOLDEN: &str = "tests/fixtures/golden";

fn golden_config(scheme: Scheme, results: &Path) -> BenchmarkConfig {
    let fixture = match scheme {
        Scheme::MultipleChoice => "mock_mc.json",
        Scheme::Numeric => "mock_numeric.json",
    };
    let mut c = BenchmarkConfig::new(
        ModelSource::Mock {
            fixture: Path::new(GOLDEN).join(fixture),
            model_id: "mock".into(),
        },
        results,
    );
    c.task = Some("ACSIncome".into());
    c.data_dir = Some(Path::new(GOLDEN).join("persons.csv"));
    c.features = Some(vec!["SEX".into(), "AGEP".into()]);
    c.split = SplitFractions { train: 0.0, validation: 0.0, test: 1.0 };
    c.scheme = scheme;
    c.bins = 2;
    c.group_column = Some("SEX".into());
    c
}

fn oracle_config(results: &Path, subsample: usize) -> BenchmarkConfig {
    let mut c = BenchmarkConfig::new(
        ModelSource::Oracle {
            spec: BUILTIN_SYNTH_SPEC.into(),
            leakage: 0.9,
        },
        results,
    );
    c.split = SplitFractions { train: 0.0, validation: 0.0, test: 1.0 };
    c.subsample = Some(subsample);
    c.seed = 3;
    c
}

fn scores_by_row(dir: &Path) -> Vec<(u64, f64, Vec<ScoreFlag>)> {
    let mut v: Vec<_> = read_scored_records(&dir.join(SCORED_RECORDS_FILE))
        .unwrap()
        .into_iter()
        .map(|r| (r.row_id, r.score, r.flags))
        .collect();
    v.sort_by_key(|t| t.0);
    v
}

fn read(path: PathBuf) -> Vec<u8> {
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn golden_multiple_choice_scores_match_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_benchmark(&golden_config(Scheme::MultipleChoice, dir.path())).unwrap();
    assert_eq!(out.exit_code(), 0);
    let expected = [
        // " A" and "A" both count toward choice A.
        (0, (0.6 / 0.9 + 0.55 / 0.9) / 2.0, false),
        (1, (0.2 / 0.9 + 0.15 / 0.8) / 2.0, false),
        (2, (0.5 / 0.75 + 0.75 / 0.875) / 2.0, false),
        (3, 0.1 / 0.9, true),
    ];
    let got = scores_by_row(dir.path());
    assert_eq!(got.len(), 4);
    for ((id, score, flags), (eid, escore, single)) in got.iter().zip(expected) {
        assert_eq!(*id, eid);
        assert!((score - escore).abs() < 1e-12, "row {id}: {score} vs {escore}");
        assert_eq!(flags.contains(&ScoreFlag::SingleOrdering), single);
    }
    assert_eq!(out.report.extraction.single_ordering, 1);
    assert_eq!(out.report.rows.evaluated, 4);
    assert_eq!(out.stats.model_calls, 8);
}

#[test]
fn golden_numeric_scores() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_benchmark(&golden_config(Scheme::Numeric, dir.path())).unwrap();
    let got: Vec<(f64, bool)> = scores_by_row(dir.path())
        .into_iter()
        .map(|(_, s, f)| (s, f.contains(&ScoreFlag::SingleDigit)))
        .collect();
    assert_eq!(got, vec![(0.75, false), (0.28, false), (0.8, true), (0.1, false)]);
    assert_eq!(out.report.extraction.single_digit, 1);
}

/// The frozen reports under tests/fixtures/golden were produced by this
/// test and checked against the hand-computed scores above. Set
/// `RISKBENCH_BLESS=1` to rewrite them after an intentional format change.
#[test]
fn golden_reports_are_byte_stable() {
    for (scheme, name) in [(Scheme::MultipleChoice, "expected_report_mc.json"), (Scheme::Numeric, "expected_report_numeric.json")] {
        let dir = tempfile::tempdir().unwrap();
        run_benchmark(&golden_config(scheme, dir.path())).unwrap();
        let got = read(dir.path().join(REPORT_FILE));
        let frozen = Path::new(GOLDEN).join(name);
        if std::env::var_os("RISKBENCH_BLESS").is_some() {
            std::fs::write(&frozen, &got).unwrap();
        }
        assert_eq!(String::from_utf8(got).unwrap(), String::from_utf8(read(frozen)).unwrap());

        let again = tempfile::tempdir().unwrap();
        run_benchmark(&golden_config(scheme, again.path())).unwrap();
        for f in [REPORT_FILE, METRICS_FILE, SCORED_RECORDS_FILE, GROUP_METRICS_FILE] {
            assert_eq!(read(dir.path().join(f)), read(again.path().join(f)), "{f}");
        }
    }
}

#[test]
fn all_files_present_and_reemission_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_benchmark(&golden_config(Scheme::MultipleChoice, dir.path())).unwrap();
    for f in [
        REPORT_FILE,
        METRICS_FILE,
        CURVE_EQUAL_WIDTH_FILE,
        CURVE_QUANTILE_FILE,
        HISTOGRAM_FILE,
        GROUP_METRICS_FILE,
        SCORED_RECORDS_FILE,
        RUN_STATS_FILE,
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let groups = out.report.artifacts.groups.as_ref().unwrap();
    assert_eq!(groups.groups.iter().map(|g| g.group.as_str()).collect::<Vec<_>>(), ["1", "2"]);

    let re = tempfile::tempdir().unwrap();
    let artifacts = reemit_from_records(dir.path(), re.path()).unwrap();
    assert_eq!(artifacts, out.report.artifacts);
    for f in [METRICS_FILE, CURVE_EQUAL_WIDTH_FILE, CURVE_QUANTILE_FILE, HISTOGRAM_FILE, GROUP_METRICS_FILE] {
        assert_eq!(read(dir.path().join(f)), read(re.path().join(f)), "{f}");
    }
    let parsed = read_report(dir.path()).unwrap();
    assert_eq!(parsed.artifacts, out.report.artifacts);
    assert_eq!(parsed.config_digest, out.report.config_digest);
}

#[test]
fn disabled_group_column_omits_group_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = golden_config(Scheme::MultipleChoice, dir.path());
    run_benchmark(&c).unwrap();
    assert!(dir.path().join(GROUP_METRICS_FILE).is_file());
    c.group_column = None;
    let out = run_benchmark(&c).unwrap();
    assert!(!dir.path().join(GROUP_METRICS_FILE).exists());
    assert!(out.report.artifacts.groups.is_none());
    assert!(out.report.notes.iter().any(|n| n.contains("no group column")));
}

#[test]
fn config_digest_tracks_semantic_fields_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = golden_config(Scheme::MultipleChoice, a.path());
    let digest = |c: &BenchmarkConfig| run_benchmark(c).unwrap().report.config_digest;
    let d0 = digest(&base);

    let mut moved = base.clone();
    moved.results_dir = b.path().to_path_buf();
    moved.cache_dir = Some(b.path().join("cache"));
    assert_eq!(digest(&moved), d0);

    let mut changes: Vec<BenchmarkConfig> = Vec::new();
    let mut c = base.clone();
    c.bins = 3;
    changes.push(c);
    let mut c = base.clone();
    c.threshold = ThresholdSetting::Fixed { tau: 0.4 };
    changes.push(c);
    let mut c = base.clone();
    c.group_top_k = 1;
    changes.push(c);
    let mut c = base.clone();
    c.seed = 9;
    changes.push(c);
    let mut c = base.clone();
    c.features = Some(vec!["AGEP".into(), "SEX".into()]);
    changes.push(c);
    for c in &changes {
        let other = tempfile::tempdir().unwrap();
        let mut c = c.clone();
        c.results_dir = other.path().to_path_buf();
        assert_ne!(run_benchmark(&c).unwrap().report.config_digest, d0, "{c:?}");
    }
}

#[test]
fn cached_rerun_makes_no_model_calls_and_is_bit_identical() {
    let cache = tempfile::tempdir().unwrap();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut c = oracle_config(first.path(), 300);
    c.cache_dir = Some(cache.path().to_path_buf());
    let a = run_benchmark(&c).unwrap();
    assert_eq!(a.stats.model_calls, 600);
    c.results_dir = second.path().to_path_buf();
    let b = run_benchmark(&c).unwrap();
    assert_eq!(b.stats.model_calls, 0);
    assert_eq!(b.stats.cache_hits, 600);
    for f in [REPORT_FILE, METRICS_FILE, SCORED_RECORDS_FILE, CURVE_QUANTILE_FILE] {
        assert_eq!(read(first.path().join(f)), read(second.path().join(f)), "{f}");
    }
}

#[test]
fn unwritable_results_dir_fails_before_any_request() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let mut c = golden_config(Scheme::MultipleChoice, &blocker.join("results"));
    // Any request to this endpoint would surface as an endpoint error.
    c.model = ModelSource::Endpoint {
        model_id: "m".into(),
        endpoint: EndpointConfig::new("http://127.0.0.1:9/v1"),
    };
    let err = run_benchmark(&c).unwrap_err();
    assert!(matches!(err, BenchError::Io(_)), "{err}");
    assert_eq!(err.exit_code(), 5);
}

#[test]
fn data_and_schema_problems_fail_before_any_request() {
    let tmp = tempfile::tempdir().unwrap();
    let endpoint = ModelSource::Endpoint {
        model_id: "m".into(),
        endpoint: EndpointConfig::new("http://127.0.0.1:9/v1"),
    };
    let mut c = golden_config(Scheme::MultipleChoice, tmp.path());
    c.model = endpoint.clone();
    c.data_dir = Some(tmp.path().join("absent"));
    assert!(matches!(run_benchmark(&c).unwrap_err(), BenchError::Io(_)));

    let mut c = golden_config(Scheme::MultipleChoice, tmp.path());
    c.model = endpoint.clone();
    c.features = Some(vec!["SEX".into(), "NOT_A_COLUMN".into()]);
    let err = run_benchmark(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");

    let mut c = golden_config(Scheme::MultipleChoice, tmp.path());
    c.model = endpoint;
    c.task = Some("NoSuchTask".into());
    assert_eq!(run_benchmark(&c).unwrap_err().exit_code(), 2);
}

#[test]
fn excess_extraction_failures_exit_4_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = tmp.path().join("partial.json");
    let full: serde_json::Value = serde_json::from_slice(&read(Path::new(GOLDEN).join("mock_mc.json"))).unwrap();
    // Keep only the first row's two prompts.
    let kept: Vec<_> = full["responses"].as_array().unwrap()[..2].to_vec();
    std::fs::write(&fixture, serde_json::json!({ "responses": kept }).to_string()).unwrap();
    let mut c = golden_config(Scheme::MultipleChoice, &tmp.path().join("out"));
    c.model = ModelSource::Mock { fixture, model_id: "mock".into() };
    let out = run_benchmark(&c).unwrap();
    assert_eq!(out.exit_code(), 4);
    assert_eq!(out.report.extraction.failed, 3);
    assert_eq!(out.report.extraction.request_errors, 6);
    assert!(tmp.path().join("out").join(REPORT_FILE).is_file());
    assert_eq!(out.report.artifacts.metrics.as_ref().unwrap().excluded_count, 3);
}

#[test]
fn missing_logprobs_is_a_capability_error() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = tmp.path().join("nologprobs.json");
    let full: serde_json::Value = serde_json::from_slice(&read(Path::new(GOLDEN).join("mock_mc.json"))).unwrap();
    let stripped: Vec<_> = full["responses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| serde_json::json!({ "prompt": r["prompt"], "distributions": [] }))
        .collect();
    std::fs::write(&fixture, serde_json::json!({ "responses": stripped }).to_string()).unwrap();
    let mut c = golden_config(Scheme::MultipleChoice, &tmp.path().join("out"));
    c.model = ModelSource::Mock { fixture, model_id: "mock".into() };
    let err = run_benchmark(&c).unwrap_err();
    assert!(matches!(err, BenchError::Capability(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn fitted_threshold_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = oracle_config(tmp.path(), 400);
    c.split = SplitFractions { train: 0.0, validation: 0.5, test: 0.5 };
    c.threshold = ThresholdSetting::FitOnValidation;
    let out = run_benchmark(&c).unwrap();
    let eval = &out.report.evaluation;
    assert!(eval.threshold_fitted_on_validation);
    assert_eq!(out.report.rows.validation, 400);
    assert_eq!(out.report.artifacts.metrics.as_ref().unwrap().tau, eval.tau);
    // A calibrated scorer's accuracy-optimal threshold sits near 0.5.
    assert!((eval.tau - 0.5).abs() < 0.15, "tau = {}", eval.tau);
    assert!(out.report.notes.iter().any(|n| n.contains("fitted")));
}

#[test]
fn oracle_numeric_scores_lie_on_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = oracle_config(tmp.path(), 500);
    c.scheme = Scheme::Numeric;
    let out = run_benchmark(&c).unwrap();
    assert_eq!(out.report.extraction.failed, 0);
    for (_, s, _) in scores_by_row(tmp.path()) {
        assert!(((s * 100.0).round() - s * 100.0).abs() < 1e-9, "{s}");
    }
    let m = out.report.artifacts.metrics.unwrap();
    assert!(m.ece_equal_width < 0.08, "{}", m.ece_equal_width);
}

#[test]
fn smaller_feature_set_lowers_spread_and_auc() {
    let full_dir = tempfile::tempdir().unwrap();
    let sub_dir = tempfile::tempdir().unwrap();
    let full = run_benchmark(&oracle_config(full_dir.path(), 4_000)).unwrap();
    let mut c = oracle_config(sub_dir.path(), 4_000);
    c.features = Some(vec!["POBP".into(), "RAC1P".into()]);
    let sub = run_benchmark(&c).unwrap();
    let (fm, sm) = (full.report.artifacts.metrics.unwrap(), sub.report.artifacts.metrics.unwrap());
    assert!(sm.score_std < fm.score_std, "{} vs {}", sm.score_std, fm.score_std);
    assert!(sm.auc.unwrap() < fm.auc.unwrap());
    // The same rows are evaluated in both runs.
    let ids = |d: &Path| scores_by_row(d).into_iter().map(|t| t.0).collect::<Vec<_>>();
    assert_eq!(ids(full_dir.path()), ids(sub_dir.path()));
}

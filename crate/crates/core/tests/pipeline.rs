use std::path::Path;

use ctxrank::harness::{
    cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, load_dataset, run_comparison,
    ExperimentConfig, Method, MethodSpec, Paths, SweepParam, SweepSpec,
};
use ctxrank::jsonl::read_sessions;
use ctxrank::metrics::Metric;
use ctxrank::session::filter_sessions;

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        paths: Paths::default().relative_to(dir),
        ..ExperimentConfig::default()
    };
    cfg.generator.n_sessions = 1200;
    cfg.generator.n_products = 500;
    cfg.generator.n_users = 150;
    cfg.train.dim = 8;
    cfg.train.epochs = 2;
    cfg.methods = [
        Method::ProdProxy,
        Method::Rand,
        Method::Pop,
        Method::Ql,
        Method::Lcrm3,
        Method::Qem,
        Method::Scem,
    ]
    .into_iter()
    .map(MethodSpec::from)
    .collect();
    cfg
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn generation_is_reproducible_and_stats_match_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (small_config(a.path()), small_config(b.path()));
    let stats = cmd_generate(&ca, Some(9)).unwrap();
    cmd_generate(&cb, Some(9)).unwrap();
    assert_eq!(read(&ca.paths.catalog), read(&cb.paths.catalog));
    assert_eq!(read(&ca.paths.sessions), read(&cb.paths.sessions));

    let lines = |p: &Path| String::from_utf8(read(p)).unwrap().lines().count();
    assert_eq!(stats.products, lines(&ca.paths.catalog));
    assert_eq!(stats.sessions, lines(&ca.paths.sessions));
    let sessions = read_sessions(&ca.paths.sessions).unwrap();
    let kept = filter_sessions(&sessions).len();
    assert_eq!(stats.sessions_kept, kept);
    assert_eq!(stats.kept_fraction, kept as f64 / sessions.len() as f64);

    cmd_generate(&cb, Some(10)).unwrap();
    assert_ne!(read(&ca.paths.sessions), read(&cb.paths.sessions));
}

#[test]
fn evaluation_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_generate(&cfg, None).unwrap();
    cmd_train(&cfg, Method::Qem).unwrap();
    cmd_train(&cfg, Method::Scem).unwrap();

    let reports = cmd_evaluate(&cfg, Method::ProdProxy).unwrap();
    assert_eq!(reports.len(), cfg.methods.len());
    let prod = reports.iter().find(|r| r.method == "PROD-proxy").unwrap();
    for metric in Metric::ALL {
        assert_eq!(prod.summary(metric).rel_improvement, Some(0.0));
        assert!(!prod.summary(metric).significant);
    }
    let csv = cfg.paths.reports.join("comparison.csv");
    let json = cfg.paths.reports.join("comparison.json");
    let (first_csv, first_json) = (read(&csv), read(&json));
    assert_eq!(
        String::from_utf8_lossy(&first_csv).lines().count(),
        1 + cfg.methods.len() * Metric::ALL.len()
    );

    let again = tempfile::tempdir().unwrap();
    let cfg2 = small_config(again.path());
    cmd_generate(&cfg2, None).unwrap();
    cmd_train(&cfg2, Method::Qem).unwrap();
    cmd_train(&cfg2, Method::Scem).unwrap();
    cmd_evaluate(&cfg2, Method::ProdProxy).unwrap();
    assert_eq!(first_csv, read(&cfg2.paths.reports.join("comparison.csv")));
    assert_eq!(
        first_json,
        read(&cfg2.paths.reports.join("comparison.json"))
    );
}

#[test]
fn mismatched_or_missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cmd_generate(&cfg, None).unwrap();
    cmd_train(&cfg, Method::Qem).unwrap();
    let err = cmd_evaluate(&cfg, Method::ProdProxy)
        .unwrap_err()
        .to_string();
    assert!(err.contains("no checkpoint for SCEM"), "{err}");

    cmd_train(&cfg, Method::Scem).unwrap();
    cfg.methods.retain(|m| m.method != Method::Scem);
    let mut shifted = MethodSpec::from(Method::Scem);
    shifted.params.lambda_c = Some(0.5);
    cfg.methods.push(shifted);
    let err = cmd_evaluate(&cfg, Method::ProdProxy)
        .unwrap_err()
        .to_string();
    assert!(err.contains("was trained with"), "{err}");

    cfg.train.dim = 12;
    cfg.methods.retain(|m| m.method != Method::Scem);
    let err = cmd_evaluate(&cfg, Method::ProdProxy)
        .unwrap_err()
        .to_string();
    assert!(err.contains("dim=8") && err.contains("dim=12"), "{err}");
}

#[test]
fn sweep_at_zero_click_weight_matches_query_only_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_generate(&cfg, None).unwrap();
    let table = cmd_sweep(
        &cfg,
        &SweepSpec::new(SweepParam::LambdaC, vec![0.0, 0.5]).unwrap(),
    )
    .unwrap();
    let ds = load_dataset(&cfg).unwrap();
    let cmp = run_comparison(
        &ds,
        &cfg,
        &[Method::Qem.into(), Method::Scrm3.into()],
        Method::ProdProxy,
    )
    .unwrap();
    for metric in Metric::ALL {
        assert_eq!(
            table.series("SCEM", metric)[0],
            cmp.mean("QEM", metric).unwrap()
        );
    }
    assert!(cfg.paths.reports.join("sweep_lambda_c.json").exists());
}

#[test]
fn production_proxy_beats_random_on_default_corpus() {
    let cfg = ExperimentConfig::default();
    let ds = ctxrank::harness::Dataset::synthetic(&cfg, cfg.generator.seed).unwrap();
    let cmp = run_comparison(
        &ds,
        &cfg,
        &[Method::Rand.into(), Method::Pop.into()],
        Method::ProdProxy,
    )
    .unwrap();
    let prod = cmp.mean("PROD-proxy", Metric::Mrr).unwrap();
    let rand = cmp.mean("RAND", Metric::Mrr).unwrap();
    assert!(prod > rand, "PROD-proxy {prod} vs RAND {rand}");
    assert!(cmp.mean("POP", Metric::Mrr).unwrap() > rand);
}

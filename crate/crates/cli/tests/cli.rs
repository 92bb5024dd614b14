use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use compsim_core::cluster::silhouette_score;
use compsim_core::corpus::{load_corpus, save_corpus};
use compsim_core::embed::{load_embeddings, save_embeddings, tfidf_fit, EmbeddingProvider, TfidfProvider};
use compsim_core::similarity::save_returns;
use compsim_core::synth::{generate, SynthConfig};
use compsim_core::textprep::{chunk, ChunkingConfig};
use tempfile::TempDir;

fn compsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compsim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fixtures/tiny/config.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Default-sized synthetic universe with three planted outliers, shared by tests.
fn synthetic() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let o = compsim(&["-q", "synth", "--out", s(dir.path()), "--outliers", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
        dir
    })
    .path()
}

/// Runs against the shared synthetic universe, writing into `out`.
fn on_synthetic(out: &Path, extra: &[&str]) -> Output {
    let config = synthetic().join("config.json");
    let out_set = format!("output_dir={}", out.display());
    let mut args = vec!["--config", s(&config), "--set", &out_set];
    args.extend_from_slice(extra);
    compsim(&args)
}

fn report_body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="), "{}", path.display());
    assert!(lines.next().unwrap().starts_with("# seeds split="), "{}", path.display());
    lines.map(|l| format!("{l}\n")).collect()
}

#[test]
fn ingest_fixture_corpus() {
    let out = tempfile::tempdir().unwrap();
    let set = format!("output_dir={}", out.path().display());
    let o = compsim(&["--config", s(&tiny_config()), "--set", &set, "ingest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("companies: 3"), "{text}");
    assert!(text.contains("sector classes: 2"), "{text}");
    assert_eq!(report_body(&out.path().join("ingest_sectors.csv")), "sector,companies\n20,1\n40,2\n");
}

#[test]
fn bad_corpus_line_is_a_data_error() {
    let out = tempfile::tempdir().unwrap();
    let set = format!("output_dir={}", out.path().display());
    let o = compsim(&["--config", s(&tiny_config()), "--set", &set, "--set", "corpus.path=bad_corpus.jsonl", "ingest"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let cfg = tiny_config();
    let out = tempfile::tempdir().unwrap();
    let set = format!("output_dir={}", out.path().display());
    assert_eq!(compsim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(compsim(&["--config", s(&cfg), "--set", "colour=blue", "ingest"]).status.code(), Some(1));
    assert_eq!(compsim(&["--config", s(&cfg), "--set", "split=oops", "ingest"]).status.code(), Some(1));
    // the fixture corpus has no returns file
    assert_eq!(compsim(&["--config", s(&cfg), "--set", &set, "peers"]).status.code(), Some(1));
    assert_eq!(compsim(&["--config", s(&cfg), "--set", &set, "peers", "--company", "NOPE"]).status.code(), Some(1));
    assert_eq!(compsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn impossible_sweep_is_a_compute_error() {
    let out = tempfile::tempdir().unwrap();
    let set = format!("output_dir={}", out.path().display());
    let o = compsim(&["--config", s(&tiny_config()), "--set", &set, "cluster"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn sector_shares_match_recount() {
    let out = tempfile::tempdir().unwrap();
    let o = on_synthetic(out.path(), &["ingest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let corpus = load_corpus(&synthetic().join("corpus.jsonl"), &synthetic().join("gics.csv")).unwrap();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in corpus.records() {
        *counts.entry(r.gics.sector.clone()).or_default() += 1;
    }
    let want: String = std::iter::once("sector,companies\n".to_string())
        .chain(counts.iter().map(|(s, c)| format!("{s},{c}\n")))
        .collect();
    assert_eq!(report_body(&out.path().join("ingest_sectors.csv")), want);
}

#[test]
fn embed_resumes_from_cache() {
    let out = tempfile::tempdir().unwrap();
    let first = on_synthetic(out.path(), &["embed"]);
    assert!(stderr(&first).contains("computed=300 cached=0"), "{}", stderr(&first));
    let again = on_synthetic(out.path(), &["embed"]);
    assert!(stderr(&again).contains("computed=0 cached=300"), "{}", stderr(&again));

    let cache = out.path().join("embeddings-tfidf-512.bin");
    let (mut m, _) = load_embeddings(&cache).unwrap();
    let full = m.clone();
    assert!(m.remove("C0042"));
    save_embeddings(&m, &cache).unwrap();
    let third = on_synthetic(out.path(), &["embed"]);
    assert!(stderr(&third).contains("computed=1 cached=299"), "{}", stderr(&third));
    assert_eq!(load_embeddings(&cache).unwrap().0, full);
}

#[test]
fn one_chunk_cache_row_is_the_provider_output() {
    let out = tempfile::tempdir().unwrap();
    assert!(on_synthetic(out.path(), &["-q", "embed"]).status.success());
    let (m, _) = load_embeddings(&out.path().join("embeddings-tfidf-512.bin")).unwrap();

    let corpus = load_corpus(&synthetic().join("corpus.jsonl"), &synthetic().join("gics.csv")).unwrap();
    let chunking = ChunkingConfig::default();
    let docs: Vec<_> = corpus.records().iter().map(|r| chunking.truncated(&r.company_id, &r.description)).collect();
    let provider = TfidfProvider::new(tfidf_fit(&docs, 4096).unwrap(), None).unwrap();
    let doc = &docs[7];
    let chunks = chunk(doc, chunking.word_window());
    assert_eq!(chunks.len(), 1);
    assert_eq!(provider.embed_chunk(&chunks[0]).unwrap(), m.get(&doc.source_id).unwrap());
}

#[test]
fn full_report_on_synthetic_corpus() {
    let out = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = on_synthetic(out.path(), &["-q", "report"]);
    let elapsed = start.elapsed();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(elapsed < Duration::from_secs(120), "report took {elapsed:?}");
    for name in ["classify_report.csv", "peers_report.csv", "cluster_sweep.csv", "attribution_summary.csv", "summary.csv"] {
        report_body(&out.path().join(name));
    }
    let classify = report_body(&out.path().join("classify_report.csv"));
    assert!(classify.starts_with("provider,context_budget,level,accuracy,micro_f1,weighted_f1,n_train,n_test\n"));
    assert_eq!(classify.lines().count(), 3);
    let peers = report_body(&out.path().join("peers_report.csv"));
    assert!(peers.contains("\nembedding,1,") && peers.contains("\ngics_sector,dynamic,"), "{peers}");
    let attribution = report_body(&out.path().join("attribution_summary.csv"));
    assert!(attribution.contains("\nembedding,") && attribution.contains("\ngics_industry,"), "{attribution}");
    assert!(stdout(&o).starts_with("task,method,metric,value\n"));
}

#[test]
fn peers_of_one_company_are_ranked() {
    let out = tempfile::tempdir().unwrap();
    let o = on_synthetic(out.path(), &["-q", "peers", "--company", "C0001", "--k", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let sims: Vec<f64> = rows.iter().map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]), "{sims:?}");
    assert!(rows.iter().all(|r| !r.contains(",C0001,")));
}

#[test]
fn projection_is_complete_and_deterministic() {
    let out = tempfile::tempdir().unwrap();
    assert!(on_synthetic(out.path(), &["-q", "project"]).status.success());
    let first = std::fs::read(out.path().join("projection.csv")).unwrap();
    assert!(on_synthetic(out.path(), &["-q", "project"]).status.success());
    assert_eq!(std::fs::read(out.path().join("projection.csv")).unwrap(), first);
    let body = report_body(&out.path().join("projection.csv"));
    assert_eq!(body.lines().count(), 301);
}

#[test]
fn orthogonal_sectors_separate_in_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        n_companies: 120,
        n_sectors: 2,
        industries_per_sector: 2,
        sector_word_share: 0.85,
        industry_word_share: 0.15,
        seed: 4,
        ..SynthConfig::default()
    };
    let u = generate(&config).unwrap();
    save_corpus(&u.corpus, &dir.path().join("corpus.jsonl")).unwrap();
    u.corpus.hierarchy().save(&dir.path().join("gics.csv")).unwrap();
    save_returns(&u.returns, &dir.path().join("returns.csv")).unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"corpus": {"path": "corpus.jsonl", "hierarchy": "gics.csv"}}"#).unwrap();
    assert!(compsim(&["-q", "--config", s(&cfg), "project"]).status.success());

    let body = report_body(&dir.path().join("out/projection.csv"));
    let mut points = Vec::new();
    let mut sectors: BTreeMap<String, usize> = BTreeMap::new();
    let mut labels = Vec::new();
    for line in body.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        points.push(vec![f[1].parse::<f64>().unwrap(), f[2].parse::<f64>().unwrap()]);
        let next = sectors.len();
        labels.push(*sectors.entry(f[3].to_string()).or_insert(next));
    }
    let sil = silhouette_score(&points, &labels).unwrap();
    assert!(sil > 0.5, "silhouette {sil}");
}

#[test]
fn planted_outliers_rank_near_the_top() {
    let out = tempfile::tempdir().unwrap();
    assert!(on_synthetic(out.path(), &["-q", "outliers"]).status.success());
    let planted = std::fs::read_to_string(synthetic().join("outliers.txt")).unwrap();
    let body = report_body(&out.path().join("outliers.csv"));
    let top: Vec<&str> = body.lines().skip(1).take(15).map(|l| l.split(',').next().unwrap()).collect();
    for id in planted.lines() {
        assert!(top.contains(&id), "{id} not in top 5%: {top:?}");
    }
}

#[test]
fn classify_writes_models_and_soft_sectors() {
    let out = tempfile::tempdir().unwrap();
    let o = on_synthetic(out.path(), &["-q", "--set", "classify.levels=[\"sector\"]", "classify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.path().join("model_sector.json").exists());
    let soft = report_body(&out.path().join("soft_sectors.csv"));
    let mut lines = soft.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 7);
    for line in lines {
        let sum: f64 = line.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-5, "{line}");
    }
    assert!(compsim_core::classify::load_model(&out.path().join("model_sector.json")).is_ok());
}

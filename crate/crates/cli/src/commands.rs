use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use chrono::NaiveDate;
use log::{info, warn};

use compsim_core::attribution::{attribution_metric, monthly_cumulative_returns, winsorize, AttributionReport};
use compsim_core::classify::{evaluate, fit, save_model, soft_sector_distribution, ClassificationReport, TrainedOn};
use compsim_core::cluster::{reduce_dims, run_sweep, sweep_csv, ClusterAssignment, SweepRow};
use compsim_core::corpus::{
    generate_finetune_pairs, load_corpus_with, save_corpus, save_pairs, stratified_split, Corpus, GicsLevel,
    LoadOptions,
};
use compsim_core::embed::{
    embed_documents, load_embeddings, save_embeddings, tfidf_fit, EmbeddingMatrix, EmbeddingProvider,
    HashBowProvider, RemoteProvider, TfidfProvider,
};
use compsim_core::similarity::{
    avg_peer_correlation, gics_baseline_correlation, load_returns, outlier_scores, save_returns, top_k_peers,
    CorrelationReport, DateRange, ReturnSeries,
};
use compsim_core::synth::{generate, SynthConfig};

use crate::config::{ProviderConfig, RunConfig};
use crate::failure::{Classify, Failure};

type Res<T> = Result<T, Failure>;

pub struct Context {
    config: RunConfig,
    corpus: Corpus,
    header: String,
    embeddings: OnceCell<EmbeddingMatrix>,
    returns: OnceCell<BTreeMap<String, ReturnSeries>>,
    best_cluster: OnceCell<(SweepRow, ClusterAssignment)>,
}

impl Context {
    pub fn new(config: RunConfig) -> Res<Self> {
        let options = LoadOptions { min_item1_chars: config.corpus.min_item1_chars, ..LoadOptions::default() };
        let corpus = load_corpus_with(&config.corpus.path, &config.corpus.hierarchy, &options)
            .data(format!("loading corpus {}", config.corpus.path.display()))?;
        info!("loaded {} companies", corpus.len());
        fs::create_dir_all(&config.output_dir)
            .usage(format!("creating output directory {}", config.output_dir.display()))?;
        let header = config.report_header();
        Ok(Self {
            config,
            corpus,
            header,
            embeddings: OnceCell::new(),
            returns: OnceCell::new(),
            best_cluster: OnceCell::new(),
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn write_report(&self, name: &str, body: &str) -> Res<()> {
        let path = self.out(name);
        fs::write(&path, format!("{}{body}", self.header)).compute(format!("writing {}", path.display()))?;
        info!("wrote {}", path.display());
        Ok(())
    }

    pub fn ingest(&self) -> Res<()> {
        let words: Vec<usize> =
            self.corpus.records().iter().map(|r| r.description.split_whitespace().count()).collect();
        let mut sorted = words.clone();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] as f64 } else { (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0 };
        let mean = words.iter().sum::<usize>() as f64 / n as f64;
        let sectors = self.corpus.class_counts(GicsLevel::Sector);

        let mut csv = String::from("sector,companies\n");
        for (s, c) in &sectors {
            let _ = writeln!(csv, "{s},{c}");
        }
        self.write_report("ingest_sectors.csv", &csv)?;

        let levels: BTreeMap<&str, usize> =
            GicsLevel::ALL.iter().map(|&l| (l.as_str(), self.corpus.class_counts(l).len())).collect();
        let summary = serde_json::json!({
            "companies": n,
            "classes": levels,
            "description_words": {
                "min": sorted[0],
                "median": median,
                "mean": mean,
                "max": sorted[n - 1],
            },
            "fiscal_year": self.corpus.fiscal_year,
        });
        let path = self.out("ingest_summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary).expect("json") + "\n")
            .compute(format!("writing {}", path.display()))?;

        println!("companies: {n}");
        for l in GicsLevel::ALL {
            println!("{l} classes: {}", levels[l.as_str()]);
        }
        println!("description words: min {} median {median} mean {mean:.1} max {}", sorted[0], sorted[n - 1]);
        for (s, c) in &sectors {
            println!("  sector {s}: {c}");
        }
        Ok(())
    }

    pub fn pairs(&self) -> Res<()> {
        let dataset = generate_finetune_pairs(&self.corpus, self.config.pairs_seed).data("generating pairs")?;
        let path = self.out("pairs.csv");
        save_pairs(&dataset.pairs, &path).compute(format!("writing {}", path.display()))?;
        info!(
            "wrote {} pairs ({} positive, {} negative, {} singleton companies)",
            dataset.pairs.len(),
            dataset.positives(),
            dataset.negatives(),
            dataset.singleton_companies.len()
        );
        Ok(())
    }

    fn provider(&self) -> Res<Box<dyn EmbeddingProvider>> {
        Ok(match &self.config.provider {
            ProviderConfig::Tfidf { max_features, projection_dim, seed } => {
                // refit on every run; deterministic for a fixed corpus and chunking
                let docs: Vec<_> = self
                    .corpus
                    .records()
                    .iter()
                    .map(|r| self.config.chunking.truncated(&r.company_id, &r.description))
                    .collect();
                let model = tfidf_fit(&docs, *max_features).data("fitting TF-IDF vocabulary")?;
                Box::new(TfidfProvider::new(model, projection_dim.map(|d| (d, *seed))).usage("TF-IDF provider")?)
            }
            ProviderConfig::HashBow { dimension, seed } => {
                Box::new(HashBowProvider::new(*dimension, *seed).usage("hash-bow provider")?)
            }
            ProviderConfig::Remote { provider_id, dimension, remote } => {
                Box::new(RemoteProvider::new(provider_id.clone(), *dimension, remote.clone()))
            }
        })
    }

    /// Embeddings for every company, sorted by id. Rows already in the cache
    /// file are reused; only missing companies are sent to the provider.
    pub fn embed(&self) -> Res<&EmbeddingMatrix> {
        if let Some(m) = self.embeddings.get() {
            return Ok(m);
        }
        let provider = self.provider()?;
        let budget = self.config.chunking.context_budget;
        let path = self.out(&format!("embeddings-{}-{budget}.bin", provider.provider_id()));

        let mut cached = EmbeddingMatrix::new(provider.provider_id(), budget, provider.dimension());
        if path.exists() {
            match load_embeddings(&path) {
                Ok((m, _))
                    if m.provider_id == provider.provider_id()
                        && m.context_budget == budget
                        && m.dimension() == provider.dimension() =>
                {
                    cached = m
                }
                Ok(_) => warn!("{} was written by a different provider setup; recomputing", path.display()),
                Err(e) => warn!("ignoring unreadable cache {}: {e}", path.display()),
            }
        }

        let ids = self.corpus.ids();
        let known = cached.index_map();
        let missing: Vec<(String, String)> = self
            .corpus
            .records()
            .iter()
            .filter(|r| !known.contains_key(r.company_id.as_str()))
            .map(|r| (r.company_id.clone(), r.description.clone()))
            .collect();
        let n_cached = ids.len() - missing.len();
        drop(known);

        let fresh = if missing.is_empty() {
            None
        } else {
            Some(
                embed_documents(provider.as_ref(), &missing, &self.config.chunking, self.config.pooling)
                    .compute("embedding documents")?,
            )
        };
        info!("computed={} cached={n_cached}", missing.len());

        let mut all = cached.clone();
        if let Some(f) = &fresh {
            for (i, id) in f.ids().iter().enumerate() {
                all.push(id.clone(), f.row(i)).compute("merging embeddings")?;
            }
            let merged = all.sorted();
            save_embeddings(&merged, &path).compute(format!("writing {}", path.display()))?;
            all = merged;
        }
        let matrix = all.select(&ids).sorted();
        Ok(self.embeddings.get_or_init(|| matrix))
    }

    fn returns(&self) -> Res<&BTreeMap<String, ReturnSeries>> {
        if let Some(r) = self.returns.get() {
            return Ok(r);
        }
        let path = self
            .config
            .corpus
            .returns
            .as_ref()
            .ok_or_else(|| Failure::usage(anyhow!("corpus.returns is not set in the config")))?;
        let r = load_returns(path).data(format!("loading returns {}", path.display()))?;
        Ok(self.returns.get_or_init(|| r))
    }

    fn classify_reports(&self) -> Res<Vec<(GicsLevel, ClassificationReport)>> {
        let matrix = self.embed()?;
        let mut summary = String::from("provider,context_budget,level,accuracy,micro_f1,weighted_f1,n_train,n_test\n");
        let mut out = Vec::new();
        for &level in &self.config.classify.levels {
            let labels = self.corpus.labels(level);
            let label_of: BTreeMap<&str, &str> = labels.iter().map(|(i, l)| (i.as_str(), l.as_str())).collect();
            let split = stratified_split(&labels, self.config.split.test_fraction, self.config.split.seed)
                .data(format!("splitting on {level}"))?;
            if !split.singleton_classes.is_empty() {
                warn!("{level}: {} singleton classes kept in training only", split.singleton_classes.len());
            }
            let rows = |ids: &[String]| -> Vec<Vec<f64>> {
                ids.iter().map(|id| matrix.get(id).expect("every company is embedded").to_vec()).collect()
            };
            let tags = |ids: &[String]| -> Vec<String> { ids.iter().map(|id| label_of[id.as_str()].to_string()).collect() };

            let mut model = fit(&rows(&split.train), &tags(&split.train), &self.config.classify.fit)
                .compute(format!("training {level} classifier"))?;
            model.trained_on = TrainedOn {
                provider_id: matrix.provider_id.clone(),
                context_budget: matrix.context_budget,
                label_level: level.to_string(),
            };
            let predictions: Vec<String> = rows(&split.test)
                .iter()
                .map(|x| model.predict(x).map(str::to_string))
                .collect::<Result<_, _>>()
                .compute("predicting")?;
            let report = evaluate(&predictions, &tags(&split.test)).compute("scoring")?;
            let _ = writeln!(
                summary,
                "{},{},{level},{:.6},{:.6},{:.6},{},{}",
                matrix.provider_id,
                matrix.context_budget,
                report.accuracy,
                report.micro_f1,
                report.weighted_f1,
                split.train.len(),
                split.test.len()
            );
            self.write_report(&format!("classify_{level}_per_class.txt"), &report.per_class_table())?;
            let model_path = self.out(&format!("model_{level}.json"));
            save_model(&model, &model_path).compute(format!("writing {}", model_path.display()))?;

            if level == GicsLevel::Sector {
                let mut soft = format!("company_id,{}\n", model.classes.join(","));
                for (i, id) in matrix.ids().iter().enumerate() {
                    let dist = soft_sector_distribution(&model, matrix.row(i)).compute("soft sectors")?;
                    let probs: Vec<String> = dist.iter().map(|(_, p)| format!("{p:.6}")).collect();
                    let _ = writeln!(soft, "{id},{}", probs.join(","));
                }
                self.write_report("soft_sectors.csv", &soft)?;
            }
            out.push((level, report));
        }
        self.write_report("classify_report.csv", &summary)?;
        Ok(out)
    }

    pub fn classify(&self) -> Res<()> {
        for (level, r) in self.classify_reports()? {
            println!("{level}: accuracy {:.4} weighted F1 {:.4}", r.accuracy, r.weighted_f1);
        }
        Ok(())
    }

    fn peer_reports(&self) -> Res<Vec<CorrelationReport>> {
        let matrix = self.embed()?;
        let returns = self.returns()?;
        let sim = &self.config.similarity;
        let mut reports = Vec::new();
        for &k in &sim.k {
            reports.push(
                avg_peer_correlation(matrix, returns, k, &sim.years, sim.min_overlap)
                    .compute(format!("peer correlation k={k}"))?,
            );
        }
        for &level in &sim.baselines {
            reports.push(
                gics_baseline_correlation(&self.corpus, returns, level, &sim.years, sim.min_overlap)
                    .compute(format!("{level} baseline"))?,
            );
        }

        let mut csv = String::from("method,k,avg_pairwise_correlation,coverage,excluded,missing_returns,years_scored,years_skipped\n");
        let mut by_year = String::from("method,k,year,rho_bar,companies,excluded\n");
        for r in &reports {
            let _ = writeln!(
                csv,
                "{},{},{:.6},{},{},{},{},{}",
                r.method,
                r.k,
                r.rho_bar,
                r.coverage,
                r.excluded_count(),
                r.missing_returns.len(),
                r.years.len(),
                r.skipped_years.len()
            );
            for y in &r.years {
                let _ = writeln!(
                    by_year,
                    "{},{},{},{:.6},{},{}",
                    r.method,
                    r.k,
                    y.year,
                    y.rho_bar,
                    y.per_company.len(),
                    y.excluded.len()
                );
            }
            for (year, why) in &r.skipped_years {
                warn!("{} k={}: year {year} skipped: {why}", r.method, r.k);
            }
        }
        self.write_report("peers_report.csv", &csv)?;
        self.write_report("peers_by_year.csv", &by_year)?;
        Ok(reports)
    }

    pub fn peers(&self) -> Res<()> {
        for r in self.peer_reports()? {
            println!("{} k={}: {:.4}", r.method, r.k, r.rho_bar);
        }
        Ok(())
    }

    pub fn show_peers(&self, company: &str, k: usize) -> Res<()> {
        if self.corpus.get(company).is_none() {
            return Err(Failure::usage(anyhow!("unknown company {company:?}")));
        }
        let matrix = self.embed()?;
        let list = top_k_peers(matrix, company, k).usage(format!("peers of {company}"))?;
        println!("rank,company_id,name,similarity");
        for (rank, (id, s)) in list.neighbors.iter().enumerate() {
            let name = self.corpus.get(id).map_or("", |r| r.name.as_str());
            println!("{},{id},{name},{s:.6}", rank + 1);
        }
        Ok(())
    }

    fn best_cluster(&self) -> Res<&(SweepRow, ClusterAssignment)> {
        if let Some(b) = self.best_cluster.get() {
            return Ok(b);
        }
        let matrix = self.embed()?;
        let labels = self.corpus.label_map(self.config.cluster.label_level);
        let outcome = run_sweep(matrix, &labels, &self.config.cluster.sweep).compute("clustering sweep")?;
        for (r, n, why) in &outcome.skipped {
            warn!("sweep cell r={r} N={n} skipped: {why}");
        }
        self.write_report("cluster_sweep.csv", &sweep_csv(&outcome.rows))?;
        let best = outcome
            .best()
            .ok_or_else(|| Failure::compute(anyhow!("no sweep cell could run")))?;
        let path = self.out("cluster_assignment.csv");
        outcome.assignments[best].save_csv(&path).compute(format!("writing {}", path.display()))?;
        let pair = (outcome.rows[best].clone(), outcome.assignments[best].clone());
        Ok(self.best_cluster.get_or_init(|| pair))
    }

    pub fn cluster(&self) -> Res<&(SweepRow, ClusterAssignment)> {
        let (row, _) = self.best_cluster()?;
        println!(
            "best: {} N={} r={} v_measure {:.4}",
            row.method, row.n_clusters, row.reduced_dim, row.v_measure
        );
        Ok(self.best_cluster.get().expect("computed above"))
    }

    fn gics_assignment(&self, level: GicsLevel) -> Res<ClusterAssignment> {
        let labels = self.corpus.labels(level);
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, l) in &labels {
            let next = index.len();
            index.entry(l.as_str()).or_insert(next);
        }
        let raw: Vec<usize> = labels.iter().map(|(_, l)| index[l.as_str()]).collect();
        ClusterAssignment::from_raw(labels.into_iter().map(|(id, _)| id).collect(), &raw)
            .compute(format!("{level} assignment"))
    }

    fn attribution_reports(&self) -> Res<Vec<(String, AttributionReport)>> {
        let cfg = &self.config.attribution;
        let returns = self.returns()?;
        let mut panel = monthly_cumulative_returns(returns, &DateRange::new(cfg.start, cfg.end), cfg.min_month_obs)
            .data("building monthly returns")?;
        if let Some((lo, hi)) = cfg.winsorize {
            panel = winsorize(&panel, lo, hi).usage("winsorizing")?;
        }
        let (_, embedding_assignment) = self.best_cluster()?;
        let mut candidates = vec![("embedding".to_string(), embedding_assignment.clone())];
        for &level in &cfg.baselines {
            candidates.push((format!("gics_{level}"), self.gics_assignment(level)?));
        }

        let mut summary = String::from("clustering,n_clusters,avg_r2,avg_adj_r2,months_fitted,months_skipped\n");
        let mut out = Vec::new();
        for (name, assignment) in candidates {
            let report = attribution_metric(&panel, &assignment).compute(format!("attribution for {name}"))?;
            for (m, why) in &report.skipped {
                warn!("{name}: month {m} skipped: {why}");
            }
            self.write_report(&format!("attribution_{name}.csv"), &report.to_csv())?;
            let _ = writeln!(
                summary,
                "{name},{},{:.6},{:.6},{},{}",
                report.n_clusters,
                report.avg_r2,
                report.avg_adj_r2,
                report.per_month.len(),
                report.skipped.len()
            );
            out.push((name, report));
        }
        self.write_report("attribution_summary.csv", &summary)?;
        Ok(out)
    }

    pub fn attribute(&self) -> Res<()> {
        for (name, r) in self.attribution_reports()? {
            println!("{name} (N={}): avg R2 {:.4} adj {:.4}", r.n_clusters, r.avg_r2, r.avg_adj_r2);
        }
        Ok(())
    }

    pub fn project(&self) -> Res<()> {
        let matrix = self.embed()?;
        let reduced = reduce_dims(matrix, 2, self.config.project.method, self.config.project.seed)
            .compute("projecting to two dimensions")?;
        let sectors = self.corpus.label_map(GicsLevel::Sector);
        let mut csv = String::from("company_id,x,y,sector\n");
        for (id, v) in reduced.ids.iter().zip(&reduced.vectors) {
            let _ = writeln!(csv, "{id},{:.6},{:.6},{}", v[0], v[1], sectors[id]);
        }
        self.write_report("projection.csv", &csv)
    }

    pub fn outliers(&self) -> Res<()> {
        let matrix = self.embed()?;
        let scores = outlier_scores(matrix, &self.corpus.label_map(GicsLevel::Sector)).compute("outlier scores")?;
        let mut csv = String::from("company_id,sector,own_distance,nearest_other_sector,nearest_other_distance,score\n");
        for s in &scores {
            let _ = writeln!(
                csv,
                "{},{},{:.6},{},{:.6},{:.6}",
                s.company_id, s.sector, s.own_distance, s.nearest_other_sector, s.nearest_other_distance, s.score
            );
        }
        self.write_report("outliers.csv", &csv)?;
        for s in scores.iter().take(10) {
            println!("{} sector {} -> {} score {:.4}", s.company_id, s.sector, s.nearest_other_sector, s.score);
        }
        Ok(())
    }

    /// Runs every evaluation task and merges the headline numbers into `summary.csv`.
    pub fn report(&self) -> Res<()> {
        let mut summary = String::from("task,method,metric,value\n");
        for (level, r) in self.classify_reports()? {
            let _ = writeln!(summary, "classify,{level},accuracy,{:.6}", r.accuracy);
            let _ = writeln!(summary, "classify,{level},weighted_f1,{:.6}", r.weighted_f1);
        }
        let (row, _) = self.best_cluster()?;
        let method = format!("{}-N{}-r{}", row.method, row.n_clusters, row.reduced_dim);
        let _ = writeln!(summary, "cluster,{method},homogeneity,{:.6}", row.homogeneity);
        let _ = writeln!(summary, "cluster,{method},completeness,{:.6}", row.completeness);
        let _ = writeln!(summary, "cluster,{method},v_measure,{:.6}", row.v_measure);
        if self.config.corpus.returns.is_some() {
            for r in self.peer_reports()? {
                let _ = writeln!(summary, "peers,{}-k{},avg_pairwise_correlation,{:.6}", r.method, r.k, r.rho_bar);
            }
            for (name, r) in self.attribution_reports()? {
                let _ = writeln!(summary, "attribute,{name},avg_r2,{:.6}", r.avg_r2);
                let _ = writeln!(summary, "attribute,{name},avg_adj_r2,{:.6}", r.avg_adj_r2);
            }
        } else {
            warn!("corpus.returns is not set; skipping peers and attribution");
        }
        self.write_report("summary.csv", &summary)?;
        print!("{summary}");
        Ok(())
    }
}

/// Writes a synthetic corpus, hierarchy, returns and a config that runs on them.
pub fn synth(
    out: &Path,
    companies: usize,
    sectors: usize,
    industries_per_sector: usize,
    outliers: usize,
    seed: u64,
) -> Res<()> {
    let config = SynthConfig {
        n_companies: companies,
        n_sectors: sectors,
        industries_per_sector,
        planted_outliers: outliers,
        seed,
        ..SynthConfig::default()
    };
    let universe = generate(&config).usage("generating synthetic universe")?;
    fs::create_dir_all(out).usage(format!("creating {}", out.display()))?;
    save_corpus(&universe.corpus, &out.join("corpus.jsonl")).compute("writing corpus")?;
    universe.corpus.hierarchy().save(&out.join("gics.csv")).compute("writing hierarchy")?;
    save_returns(&universe.returns, &out.join("returns.csv")).compute("writing returns")?;
    if !universe.outliers.is_empty() {
        fs::write(out.join("outliers.txt"), universe.outliers.join("\n") + "\n").compute("writing outliers")?;
    }

    let years: Vec<i32> = (config.start_year..=config.end_year).collect();
    let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date").to_string();
    let n_industries = sectors * industries_per_sector;
    let run = serde_json::json!({
        "corpus": {"path": "corpus.jsonl", "hierarchy": "gics.csv", "returns": "returns.csv"},
        "similarity": {"years": years},
        "cluster": {"sweep": {"n_clusters": [sectors, n_industries], "reduced_dims": [5, 10]}},
        "attribution": {
            "start": date(config.start_year, 1, 1),
            "end": date(config.end_year, 12, 31),
        },
        "output_dir": "out",
    });
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&run).expect("json") + "\n")
        .compute("writing config")?;
    info!("wrote {companies} companies to {}", out.display());
    Ok(())
}

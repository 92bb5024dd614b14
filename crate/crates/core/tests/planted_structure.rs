use std::time::Instant;

use compsim_core::classify::{evaluate, fit, FitOptions};
use compsim_core::cluster::{cluster_quality, spectral_cluster, Affinity, ClusterAssignment};
use compsim_core::corpus::{stratified_split, GicsLevel};
use compsim_core::embed::{embed_documents, tfidf_fit, Pooling, TfidfProvider};
use compsim_core::synth::{generate, SynthConfig};
use compsim_core::textprep::ChunkingConfig;

#[test]
fn tfidf_recovers_planted_sectors() {
    for seed in 0..3 {
        let start = Instant::now();
        let u = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let chunking = ChunkingConfig { window: 512, context_budget: 512, tokens_per_word: 1.0 };
        let docs: Vec<(String, String)> =
            u.corpus.records().iter().map(|r| (r.company_id.clone(), r.description.clone())).collect();
        let seqs: Vec<_> = docs.iter().map(|(id, t)| chunking.truncated(id, t)).collect();
        let model = tfidf_fit(&seqs, 4096).unwrap();
        let provider = TfidfProvider::new(model, None).unwrap();
        let m = embed_documents(&provider, &docs, &chunking, Pooling::Mean).unwrap();

        let labels = u.corpus.labels(GicsLevel::Sector);
        let split = stratified_split(&labels, 0.2, seed).unwrap();
        let rows = |ids: &[String]| ids.iter().map(|id| m.get(id).unwrap().to_vec()).collect::<Vec<_>>();
        let sector = u.corpus.label_map(GicsLevel::Sector);
        let ys = |ids: &[String]| ids.iter().map(|id| sector[id].clone()).collect::<Vec<_>>();
        let clf = fit(&rows(&split.train), &ys(&split.train), &FitOptions::default()).unwrap();
        let preds: Vec<String> = rows(&split.test).iter().map(|x| clf.predict(x).unwrap().to_string()).collect();
        let acc = evaluate(&preds, &ys(&split.test)).unwrap().accuracy;

        let fitc = spectral_cluster(&m.to_rows(), 6, Affinity::KnnCosine, seed).unwrap();
        let a = ClusterAssignment::from_raw(m.ids().to_vec(), &fitc.labels).unwrap();
        let q = cluster_quality(&a, &sector).unwrap();
        println!("seed {seed}: acc {acc:.3} h {:.3} c {:.3} in {:?}", q.homogeneity, q.completeness, start.elapsed());
        assert!(acc >= 0.9);
        assert!(q.homogeneity >= 0.9 && q.completeness >= 0.9);
    }
}

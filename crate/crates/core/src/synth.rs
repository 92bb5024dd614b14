//! Synthetic universes with planted structure.
//!
//! Companies are spread evenly over `n_sectors x industries_per_sector`
//! industries. Descriptions mix shared filler words with sector- and
//! industry-specific vocabularies. Daily returns follow a two-level factor
//! model: `vol * (sqrt(s) f_sector + sqrt(i) f_industry + sqrt(1 - s - i) e)`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{CompanyRecord, Corpus, CorpusError, GicsHierarchy, GicsLabels, GicsLevel};
use crate::similarity::ReturnSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_companies: usize,
    pub n_sectors: usize,
    pub industries_per_sector: usize,
    pub words_per_description: usize,
    pub common_vocab: usize,
    pub sector_vocab: usize,
    pub industry_vocab: usize,
    /// Fractions of description words drawn from the company's sector and
    /// industry vocabularies; the rest are common filler words.
    pub sector_word_share: f64,
    pub industry_word_share: f64,
    /// Companies whose description uses another sector's vocabulary while
    /// keeping their own labels and returns.
    pub planted_outliers: usize,
    pub start_year: i32,
    pub end_year: i32,
    /// Variance shares of the sector and industry factors in daily returns.
    pub sector_signal: f64,
    pub industry_signal: f64,
    pub daily_vol: f64,
    pub fiscal_year: i32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_companies: 300,
            n_sectors: 6,
            industries_per_sector: 3,
            words_per_description: 220,
            common_vocab: 150,
            sector_vocab: 40,
            industry_vocab: 25,
            sector_word_share: 0.25,
            industry_word_share: 0.15,
            planted_outliers: 0,
            start_year: 2019,
            end_year: 2020,
            sector_signal: 0.1,
            industry_signal: 0.2,
            daily_vol: 0.015,
            fiscal_year: 2018,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthUniverse {
    pub corpus: Corpus,
    pub returns: BTreeMap<String, ReturnSeries>,
    /// Ids of the planted outliers.
    pub outliers: Vec<String>,
}

impl SynthUniverse {
    /// Industry index (sector-major) of every company, in id order.
    pub fn industry_labels(&self) -> BTreeMap<String, String> {
        self.corpus.label_map(GicsLevel::Industry)
    }
}

fn pseudo_words(count: usize, rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*CONSONANTS.choose(rng).expect("non-empty") as char);
            w.push(*VOWELS.choose(rng).expect("non-empty") as char);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn trading_days(start_year: i32, end_year: i32) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(start_year, 1, 1).expect("valid year");
    let end = NaiveDate::from_ymd_opt(end_year, 12, 31).expect("valid year");
    let mut out = Vec::new();
    while d <= end {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

fn sector_code(s: usize) -> String {
    format!("{}", 10 + 5 * s)
}

fn labels_for(sector: usize, industry: usize) -> GicsLabels {
    let s = sector_code(sector);
    let group = format!("{s}10");
    let ind = format!("{group}{:02}", 10 * (industry + 1));
    GicsLabels { sub_industry: format!("{ind}10"), industry: ind, industry_group: group, sector: s }
}

pub fn generate(config: &SynthConfig) -> Result<SynthUniverse, CorpusError> {
    let invalid = |m: &str| CorpusError::InvalidArgument(m.to_string());
    if config.n_sectors == 0 || config.industries_per_sector == 0 || config.industries_per_sector > 9 {
        return Err(invalid("need at least one sector and 1..=9 industries per sector"));
    }
    if config.n_sectors > 18 {
        return Err(invalid("at most 18 sectors"));
    }
    let n_industries = config.n_sectors * config.industries_per_sector;
    if config.n_companies < 2 * n_industries {
        return Err(invalid("every industry needs at least two companies"));
    }
    let shares = config.sector_word_share + config.industry_word_share;
    let signal = config.sector_signal + config.industry_signal;
    if !(0.0..=1.0).contains(&shares) || !(0.0..=1.0).contains(&signal) || config.sector_signal < 0.0 || config.industry_signal < 0.0 {
        return Err(invalid("shares must be non-negative and sum to at most 1"));
    }
    if config.planted_outliers > config.n_companies || (config.planted_outliers > 0 && config.n_sectors < 2) {
        return Err(invalid("outliers need at least two sectors and cannot exceed the company count"));
    }
    if config.start_year > config.end_year || config.words_per_description == 0 {
        return Err(invalid("empty year range or description length"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = BTreeSet::new();
    let common = pseudo_words(config.common_vocab.max(1), &mut rng, &mut taken);
    let sector_words: Vec<Vec<String>> =
        (0..config.n_sectors).map(|_| pseudo_words(config.sector_vocab.max(1), &mut rng, &mut taken)).collect();
    let industry_words: Vec<Vec<String>> =
        (0..n_industries).map(|_| pseudo_words(config.industry_vocab.max(1), &mut rng, &mut taken)).collect();

    let mut hierarchy = GicsHierarchy::default();
    for s in 0..config.n_sectors {
        for i in 0..config.industries_per_sector {
            let l = labels_for(s, i);
            hierarchy
                .insert(&l.sector, &l.industry_group, &l.industry, &l.sub_industry)
                .map_err(|e| invalid(&e.to_string()))?;
        }
    }

    let width = config.n_companies.to_string().len().max(4);
    let mut industry_of: Vec<usize> = (0..config.n_companies).map(|i| i % n_industries).collect();
    // shuffle so ids carry no industry information
    for i in (1..industry_of.len()).rev() {
        let j = rng.random_range(0..=i);
        industry_of.swap(i, j);
    }
    let mut outlier_idx: Vec<usize> = (0..config.n_companies).collect();
    for i in (1..outlier_idx.len()).rev() {
        let j = rng.random_range(0..=i);
        outlier_idx.swap(i, j);
    }
    outlier_idx.truncate(config.planted_outliers);
    outlier_idx.sort_unstable();

    let mut records = Vec::with_capacity(config.n_companies);
    let mut outliers = Vec::new();
    for (c, &ind) in industry_of.iter().enumerate() {
        let (sector, local) = (ind / config.industries_per_sector, ind % config.industries_per_sector);
        let id = format!("C{:0width$}", c + 1);
        let (text_sector, text_industry) = if outlier_idx.binary_search(&c).is_ok() {
            outliers.push(id.clone());
            let other = (sector + 1 + rng.random_range(0..config.n_sectors - 1)) % config.n_sectors;
            (other, other * config.industries_per_sector + rng.random_range(0..config.industries_per_sector))
        } else {
            (sector, ind)
        };
        let mut text = String::new();
        let len = config.words_per_description / 2 + rng.random_range(0..=config.words_per_description);
        for w in 0..len {
            let u: f64 = rng.random();
            let vocab = if u < config.sector_word_share {
                &sector_words[text_sector]
            } else if u < shares {
                &industry_words[text_industry]
            } else {
                &common
            };
            if w > 0 {
                text.push(' ');
            }
            text.push_str(vocab.choose(&mut rng).expect("non-empty"));
            if w % 14 == 13 {
                text.push('.');
            }
        }
        text.push('.');
        let name = format!("{} {} Inc", capitalize(&common[c % common.len()]), capitalize(&sector_words[sector][c % sector_words[sector].len()]));
        records.push(CompanyRecord {
            company_id: id,
            name,
            gics: labels_for(sector, local),
            description: text,
            raw_filing_path: None,
        });
    }
    let mut corpus = Corpus::new(records, hierarchy)?;
    corpus.fiscal_year = Some(config.fiscal_year);

    let days = trading_days(config.start_year, config.end_year);
    let (ws, wi) = (config.sector_signal.sqrt(), config.industry_signal.sqrt());
    let we = (1.0 - signal).max(0.0).sqrt();
    let sector_f: Vec<Vec<f64>> = (0..config.n_sectors).map(|_| normals(&mut rng, days.len())).collect();
    let industry_f: Vec<Vec<f64>> = (0..n_industries).map(|_| normals(&mut rng, days.len())).collect();
    let mut returns = BTreeMap::new();
    for (c, &ind) in industry_of.iter().enumerate() {
        let id = format!("C{:0width$}", c + 1);
        let sector = ind / config.industries_per_sector;
        let obs = days
            .iter()
            .enumerate()
            .map(|(t, &d)| {
                let e: f64 = rng.sample(StandardNormal);
                let r = config.daily_vol * (ws * sector_f[sector][t] + wi * industry_f[ind][t] + we * e);
                (d, r.max(-0.95))
            })
            .collect();
        returns.insert(id.clone(), ReturnSeries::new(id, obs).map_err(|e| invalid(&e.to_string()))?);
    }
    Ok(SynthUniverse { corpus, returns, outliers })
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{pairwise_return_correlation, DateRange};

    #[test]
    fn shape_and_determinism() {
        let cfg = SynthConfig { n_companies: 60, planted_outliers: 2, ..SynthConfig::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.corpus.len(), 60);
        assert_eq!(a.outliers.len(), 2);
        assert_eq!(a.corpus.class_counts(GicsLevel::Sector).len(), 6);
        assert!(a.corpus.class_counts(GicsLevel::Industry).values().all(|&n| n >= 2));
        assert_eq!(a.returns.len(), 60);
        assert_eq!(a.corpus.fiscal_year, Some(2018));
    }

    #[test]
    fn industry_peers_correlate_more() {
        let cfg = SynthConfig { n_companies: 36, start_year: 2020, end_year: 2020, ..SynthConfig::default() };
        let u = generate(&cfg).unwrap();
        let ind = u.corpus.label_map(GicsLevel::Industry);
        let sec = u.corpus.label_map(GicsLevel::Sector);
        let w = DateRange::calendar_year(2020);
        let (mut same, mut sector_only, mut other) = (vec![], vec![], vec![]);
        let ids: Vec<&String> = ind.keys().collect();
        for (x, a) in ids.iter().enumerate() {
            for b in &ids[x + 1..] {
                let r = pairwise_return_correlation(&u.returns[*a], &u.returns[*b], &w, 60).unwrap();
                if ind[*a] == ind[*b] {
                    same.push(r);
                } else if sec[*a] == sec[*b] {
                    sector_only.push(r);
                } else {
                    other.push(r);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&same) - 0.3).abs() < 0.06, "{}", mean(&same));
        assert!((mean(&sector_only) - 0.1).abs() < 0.06);
        assert!(mean(&other).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&SynthConfig { n_companies: 10, ..SynthConfig::default() }).is_err());
        assert!(generate(&SynthConfig { sector_signal: 0.9, industry_signal: 0.2, ..SynthConfig::default() }).is_err());
    }
}

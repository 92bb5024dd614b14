//! Company universe: loading, validation, Item 1 extraction, train/test splits
//! and the pair dataset used for contrastive finetuning.

mod item1;
mod pairs;
mod split;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use item1::{extract_item1, extract_item1_with, Item1Error, DEFAULT_MIN_ITEM1_CHARS};
pub use pairs::{generate_finetune_pairs, save_pairs, PairDataset, PairExample};
pub use split::{stratified_split, Split};

use crate::textprep::clean_text;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate company_id {id:?}")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: unknown GICS {level} {code:?}")]
    UnknownGics { line: usize, level: GicsLevel, code: String },
    #[error("line {line}: GICS {level} {code:?} does not belong to {parent_level} {parent:?}")]
    HierarchyMismatch {
        line: usize,
        level: GicsLevel,
        code: String,
        parent_level: GicsLevel,
        parent: String,
    },
    #[error("line {line}: description of {id:?} is empty after cleaning")]
    EmptyDescription { id: String, line: usize },
    #[error("line {line}: Item 1 extraction failed for {id:?}")]
    Item1 {
        id: String,
        line: usize,
        #[source]
        source: Item1Error,
    },
    #[error("hierarchy row {row}: {message}")]
    Hierarchy { row: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error("corpus has a single GICS industry; negative pairs are impossible")]
    SingleIndustry,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// The four GICS granularities, coarsest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GicsLevel {
    Sector,
    IndustryGroup,
    Industry,
    SubIndustry,
}

impl GicsLevel {
    pub const ALL: [GicsLevel; 4] = [
        GicsLevel::Sector,
        GicsLevel::IndustryGroup,
        GicsLevel::Industry,
        GicsLevel::SubIndustry,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GicsLevel::Sector => "sector",
            GicsLevel::IndustryGroup => "industry_group",
            GicsLevel::Industry => "industry",
            GicsLevel::SubIndustry => "sub_industry",
        }
    }
}

impl fmt::Display for GicsLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GicsLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        GicsLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown GICS level {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GicsLabels {
    pub sector: String,
    pub industry_group: String,
    pub industry: String,
    pub sub_industry: String,
}

impl GicsLabels {
    pub fn level(&self, level: GicsLevel) -> &str {
        match level {
            GicsLevel::Sector => &self.sector,
            GicsLevel::IndustryGroup => &self.industry_group,
            GicsLevel::Industry => &self.industry,
            GicsLevel::SubIndustry => &self.sub_industry,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyRecord {
    pub company_id: String,
    pub name: String,
    pub gics: GicsLabels,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_filing_path: Option<String>,
}

/// GICS level-mapping table. Every code at a finer level has exactly one parent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GicsHierarchy {
    // child code -> parent code, per child level (industry_group, industry, sub_industry)
    parents: [HashMap<String, String>; 3],
    sectors: std::collections::BTreeSet<String>,
}

impl GicsHierarchy {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CorpusError::Hierarchy { row: 0, message: e.to_string() })?
            .clone();
        let expected = ["sector", "industry_group", "industry", "sub_industry"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(CorpusError::Hierarchy {
                row: 0,
                message: format!("expected header {}, got {:?}", expected.join(","), headers),
            });
        }
        let mut hierarchy = GicsHierarchy::default();
        for (i, row) in rdr.records().enumerate() {
            let row_no = i + 1;
            let row = row.map_err(|e| CorpusError::Hierarchy { row: row_no, message: e.to_string() })?;
            let codes: Vec<&str> = row.iter().map(str::trim).collect();
            if codes.len() != 4 || codes.iter().any(|c| c.is_empty()) {
                return Err(CorpusError::Hierarchy {
                    row: row_no,
                    message: "expected four non-empty codes".into(),
                });
            }
            hierarchy.insert(codes[0], codes[1], codes[2], codes[3])
                .map_err(|message| CorpusError::Hierarchy { row: row_no, message })?;
        }
        Ok(hierarchy)
    }

    /// Adds one leaf row; fails when a code would get a second parent.
    pub fn insert(
        &mut self,
        sector: &str,
        industry_group: &str,
        industry: &str,
        sub_industry: &str,
    ) -> std::result::Result<(), String> {
        self.sectors.insert(sector.to_string());
        let links = [(industry_group, sector), (industry, industry_group), (sub_industry, industry)];
        for (slot, (child, parent)) in links.into_iter().enumerate() {
            match self.parents[slot].get(child) {
                Some(existing) if existing != parent => {
                    return Err(format!(
                        "{} {child:?} maps to both {existing:?} and {parent:?}",
                        GicsLevel::ALL[slot + 1]
                    ));
                }
                Some(_) => {}
                None => {
                    self.parents[slot].insert(child.to_string(), parent.to_string());
                }
            }
        }
        Ok(())
    }

    /// Parent code of `code` at `level` (which must not be `Sector`).
    pub fn parent(&self, level: GicsLevel, code: &str) -> Option<&str> {
        let slot = match level {
            GicsLevel::Sector => return None,
            GicsLevel::IndustryGroup => 0,
            GicsLevel::Industry => 1,
            GicsLevel::SubIndustry => 2,
        };
        self.parents[slot].get(code).map(String::as_str)
    }

    pub fn contains(&self, level: GicsLevel, code: &str) -> bool {
        match level {
            GicsLevel::Sector => self.sectors.contains(code),
            _ => self.parent(level, code).is_some(),
        }
    }

    fn validate(&self, labels: &GicsLabels, line: usize) -> Result<()> {
        for level in GicsLevel::ALL {
            let code = labels.level(level);
            if code.trim().is_empty() {
                return Err(CorpusError::Malformed {
                    line,
                    message: format!("empty GICS {level}"),
                });
            }
            if !self.contains(level, code) {
                return Err(CorpusError::UnknownGics { line, level, code: code.to_string() });
            }
        }
        for pair in GicsLevel::ALL.windows(2) {
            let (parent_level, level) = (pair[0], pair[1]);
            let code = labels.level(level);
            let parent = labels.level(parent_level);
            if self.parent(level, code) != Some(parent) {
                return Err(CorpusError::HierarchyMismatch {
                    line,
                    level,
                    code: code.to_string(),
                    parent_level,
                    parent: parent.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Leaf rows in sorted order, suitable for writing back as CSV.
    pub fn rows(&self) -> Vec<[String; 4]> {
        let mut rows: Vec<[String; 4]> = self.parents[2]
            .iter()
            .map(|(sub, industry)| {
                let group = self.parents[1].get(industry).cloned().unwrap_or_default();
                let sector = self.parents[0].get(&group).cloned().unwrap_or_default();
                [sector, group, industry.clone(), sub.clone()]
            })
            .collect();
        rows.sort();
        rows
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(io_err)?;
        let mut w = csv::Writer::from_writer(file);
        let to_io = |e: csv::Error| CorpusError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        };
        w.write_record(["sector", "industry_group", "industry", "sub_industry"]).map_err(to_io)?;
        for row in self.rows() {
            w.write_record(&row).map_err(to_io)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Options for [`load_corpus_with`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Minimum Item 1 length when a description is pulled from `raw_filing_path`.
    pub min_item1_chars: usize,
    /// Minimum cleaned description length in bytes; 1 means "non-empty".
    pub min_description_chars: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { min_item1_chars: DEFAULT_MIN_ITEM1_CHARS, min_description_chars: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<CompanyRecord>,
    hierarchy: GicsHierarchy,
    pub fiscal_year: Option<i32>,
}

impl Corpus {
    /// Builds a corpus from in-memory records, applying the same validation as
    /// [`load_corpus`]. Line numbers in errors are 1-based record positions.
    pub fn new(records: Vec<CompanyRecord>, hierarchy: GicsHierarchy) -> Result<Self> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, record) in records.iter().enumerate() {
            validate_record(record, &hierarchy, i + 1, &LoadOptions::default(), &mut seen)?;
        }
        Ok(Self::from_validated(records, hierarchy))
    }

    fn from_validated(mut records: Vec<CompanyRecord>, hierarchy: GicsHierarchy) -> Self {
        records.sort_by(|a, b| a.company_id.cmp(&b.company_id));
        Self { records, hierarchy, fiscal_year: None }
    }

    pub fn records(&self) -> &[CompanyRecord] {
        &self.records
    }

    pub fn hierarchy(&self) -> &GicsHierarchy {
        &self.hierarchy
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, company_id: &str) -> Option<&CompanyRecord> {
        self.records
            .binary_search_by(|r| r.company_id.as_str().cmp(company_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.company_id.clone()).collect()
    }

    /// `(company_id, label)` at the given GICS level, in id order.
    pub fn labels(&self, level: GicsLevel) -> Vec<(String, String)> {
        self.records
            .iter()
            .map(|r| (r.company_id.clone(), r.gics.level(level).to_string()))
            .collect()
    }

    pub fn label_map(&self, level: GicsLevel) -> BTreeMap<String, String> {
        self.labels(level).into_iter().collect()
    }

    /// Member count per category at `level`.
    pub fn class_counts(&self, level: GicsLevel) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.gics.level(level).to_string()).or_insert(0) += 1;
        }
        counts
    }
}

fn validate_record(
    record: &CompanyRecord,
    hierarchy: &GicsHierarchy,
    line: usize,
    options: &LoadOptions,
    seen: &mut HashMap<String, usize>,
) -> Result<()> {
    if record.company_id.trim().is_empty() {
        return Err(CorpusError::Malformed { line, message: "empty company_id".into() });
    }
    if seen.insert(record.company_id.clone(), line).is_some() {
        return Err(CorpusError::DuplicateId { id: record.company_id.clone(), line });
    }
    hierarchy.validate(&record.gics, line)?;
    let cleaned = clean_text(&record.description);
    if cleaned.is_empty() || cleaned.len() < options.min_description_chars {
        return Err(CorpusError::EmptyDescription { id: record.company_id.clone(), line });
    }
    Ok(())
}

pub fn load_corpus(path: &Path, hierarchy_path: &Path) -> Result<Corpus> {
    load_corpus_with(path, hierarchy_path, &LoadOptions::default())
}

/// Loads a JSONL corpus. Records with an empty `description` and a
/// `raw_filing_path` get their description from the filing's Item 1; relative
/// filing paths resolve against the corpus file's directory.
pub fn load_corpus_with(path: &Path, hierarchy_path: &Path, options: &LoadOptions) -> Result<Corpus> {
    let hierarchy = GicsHierarchy::load(hierarchy_path)?;
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let base_dir = path.parent().unwrap_or(Path::new("."));

    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: CompanyRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
        if record.description.trim().is_empty() {
            if let Some(raw) = &record.raw_filing_path {
                let filing_path = base_dir.join(raw);
                let text = std::fs::read_to_string(&filing_path)
                    .map_err(|source| CorpusError::Io { path: filing_path.clone(), source })?;
                record.description = extract_item1_with(&text, options.min_item1_chars)
                    .map_err(|source| CorpusError::Item1 {
                        id: record.company_id.clone(),
                        line: line_no,
                        source,
                    })?
                    .to_string();
            }
        }
        validate_record(&record, &hierarchy, line_no, options, &mut seen)?;
        records.push(record);
    }
    Ok(Corpus::from_validated(records, hierarchy))
}

/// Writes the corpus as JSONL in id order.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for record in &corpus.records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

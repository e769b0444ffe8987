//! Append-only perturbation corpus on disk.
//!
//! Layout: one JSON manifest line, then one JSON record per perturbation.
//! A store is only ever extended; reopening it with a different manifest is
//! refused.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::estimator::{Perturbation, Source};
use crate::sampler::{NeighborhoodConfig, SampleSpec};

pub const STORE_FORMAT: &str = "necsuf-corpus/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format: String,
    pub suite_hash: String,
    pub config_hash: String,
    pub seed: u64,
    /// Describes the infiller that produced the texts.
    pub infiller: String,
    pub config: NeighborhoodConfig,
}

impl CorpusManifest {
    pub fn new(suite_hash: &str, infiller: &str, config: &NeighborhoodConfig) -> Self {
        Self {
            format: STORE_FORMAT.to_string(),
            suite_hash: suite_hash.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            infiller: infiller.to_string(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub case: String,
    pub subset: Vec<usize>,
    pub k: usize,
    pub text: String,
    pub source: Source,
}

impl CorpusRecord {
    pub fn from_perturbation(case: &str, p: &Perturbation) -> Self {
        Self {
            case: case.to_string(),
            subset: p.spec.subset.iter().copied().collect(),
            k: p.spec.k(),
            text: p.text.clone(),
            source: p.source,
        }
    }

    pub fn to_perturbation(&self) -> Perturbation {
        Perturbation {
            spec: SampleSpec::new(self.subset.iter().copied().collect()),
            text: self.text.clone(),
            source: self.source,
        }
    }
}

#[derive(Debug)]
pub struct CorpusStore {
    path: PathBuf,
    manifest: CorpusManifest,
    records: Vec<CorpusRecord>,
    by_case: BTreeMap<String, Vec<usize>>,
}

fn corrupt(path: &Path, line: usize, why: impl std::fmt::Display) -> HarnessError {
    HarnessError::StoreCorrupt(format!("{}:{line}: {why}", path.display()))
}

impl CorpusStore {
    /// Load an existing store.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| corrupt(path, 1, "missing manifest"))??;
        let manifest: CorpusManifest = serde_json::from_str(&first).map_err(|e| corrupt(path, 1, e))?;
        if manifest.format != STORE_FORMAT {
            return Err(corrupt(path, 1, format!("unsupported format {:?}", manifest.format)));
        }
        let mut store = Self {
            path: path.to_path_buf(),
            manifest,
            records: Vec::new(),
            by_case: BTreeMap::new(),
        };
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| corrupt(path, i + 2, e))?;
            if rec.k != rec.subset.len() || rec.subset.windows(2).any(|w| w[0] >= w[1]) {
                return Err(corrupt(path, i + 2, "subset/k mismatch"));
            }
            store.index(rec);
        }
        Ok(store)
    }

    /// Open `path` if it exists (its manifest must equal `manifest`), otherwise
    /// create it with `manifest` as the first line.
    pub fn open_or_create(path: &Path, manifest: CorpusManifest) -> Result<Self, HarnessError> {
        if path.exists() {
            let store = Self::load(path)?;
            if store.manifest != manifest {
                return Err(HarnessError::ManifestMismatch {
                    path: path.display().to_string(),
                });
            }
            return Ok(store);
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = File::create(path)?;
        writeln!(file, "{}", serde_json::to_string(&manifest)?)?;
        file.sync_all()?;
        Ok(Self {
            path: path.to_path_buf(),
            manifest,
            records: Vec::new(),
            by_case: BTreeMap::new(),
        })
    }

    fn index(&mut self, rec: CorpusRecord) {
        self.by_case.entry(rec.case.clone()).or_default().push(self.records.len());
        self.records.push(rec);
    }

    pub fn append(&mut self, records: Vec<CorpusRecord>) -> Result<(), HarnessError> {
        if records.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new().append(true).open(&self.path)?;
        let mut w = BufWriter::new(file);
        for rec in &records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        let file = w.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        for rec in records {
            self.index(rec);
        }
        Ok(())
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn case_count(&self, case: &str) -> usize {
        self.by_case.get(case).map_or(0, Vec::len)
    }

    pub fn records_for<'a>(&'a self, case: &str) -> impl Iterator<Item = &'a CorpusRecord> + 'a {
        self.by_case
            .get(case)
            .into_iter()
            .flat_map(move |ix| ix.iter().map(move |&i| &self.records[i]))
    }

    /// Digest of the store file's bytes.
    pub fn content_hash(&self) -> Result<String, HarnessError> {
        let bytes = std::fs::read(&self.path)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

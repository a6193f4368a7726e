use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crd::{CrdSample, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::experiment::PushSpec;
use crate::legged::Gait;
use crate::model::NUM_LEGS;

/// One control-tick sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub rollout_id: usize,
    /// Tick time within the rollout (s).
    pub t: f64,
    pub sample: CrdSample,
}

/// Conditions a rollout was collected under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutInfo {
    pub id: usize,
    pub gait: Gait,
    pub push: PushSpec,
    pub foot_offsets: [[f64; 2]; NUM_LEGS],
    /// Divergence time when the rollout was discarded.
    pub diverged_at: Option<f64>,
}

/// Sample indices of each split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub rollouts: Vec<RolloutInfo>,
    pub split: Split,
    pub seed: u64,
    pub config_hash: String,
}

impl Dataset {
    /// Build a dataset whose held-out split is every sample of the listed
    /// rollouts.
    pub fn new(
        records: Vec<Record>,
        rollouts: Vec<RolloutInfo>,
        held_out_rollouts: &[usize],
        seed: u64,
        config_hash: String,
    ) -> Self {
        let held: BTreeSet<usize> = held_out_rollouts.iter().copied().collect();
        let mut split = Split::default();
        for (k, r) in records.iter().enumerate() {
            if held.contains(&r.rollout_id) {
                split.held_out.push(k);
            } else {
                split.train.push(k);
            }
        }
        Self { records, rollouts, split, seed, config_hash }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn train_samples(&self) -> Vec<CrdSample> {
        self.split.train.iter().map(|&k| self.records[k].sample.clone()).collect()
    }

    pub fn held_out_samples(&self) -> Vec<CrdSample> {
        self.split.held_out.iter().map(|&k| self.records[k].sample.clone()).collect()
    }

    fn rollout_ids(&self, idx: &[usize]) -> Vec<usize> {
        let ids: BTreeSet<usize> = idx.iter().map(|&k| self.records[k].rollout_id).collect();
        ids.into_iter().collect()
    }

    pub fn train_rollouts(&self) -> Vec<usize> {
        self.rollout_ids(&self.split.train)
    }

    pub fn held_out_rollouts(&self) -> Vec<usize> {
        self.rollout_ids(&self.split.held_out)
    }
}

/// Sidecar written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 of the CSV file.
    pub data_sha256: String,
    pub n_samples: usize,
    pub train_rollouts: Vec<usize>,
    pub held_out_rollouts: Vec<usize>,
    pub n_train: usize,
    pub n_held_out: usize,
    pub rollouts: Vec<RolloutInfo>,
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

/// Column names in file order.
pub fn dataset_columns() -> Vec<String> {
    let mut cols = vec!["rollout_id".to_string(), "t".to_string()];
    for leg in 0..NUM_LEGS {
        for k in 0..FEATURE_DIM {
            cols.push(format!("x{leg}_{k}"));
        }
    }
    for leg in 0..NUM_LEGS {
        for a in ["x", "y", "z"] {
            cols.push(format!("d{leg}_{a}"));
        }
    }
    for a in ["x", "y", "z"] {
        cols.push(format!("res_{a}"));
    }
    for leg in 0..NUM_LEGS {
        cols.push(format!("contact{leg}"));
    }
    cols
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(dataset_columns())?;
    let mut row: Vec<String> = Vec::with_capacity(2 + NUM_LEGS * (FEATURE_DIM + 4) + 3);
    for r in &ds.records {
        row.clear();
        row.push(r.rollout_id.to_string());
        // Display prints the shortest string that parses back to the same
        // f64, so the round trip is exact.
        row.push(r.t.to_string());
        let s = &r.sample;
        for leg in 0..NUM_LEGS {
            row.extend(s.features[leg].iter().map(f64::to_string));
        }
        for d in &s.moment_arms {
            row.extend(d.iter().map(f64::to_string));
        }
        row.extend(s.target_residual.iter().map(f64::to_string));
        row.extend(s.contact.iter().map(|&c| u8::from(c).to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Write `csv` and its manifest; returns the manifest.
pub fn write_dataset(ds: &Dataset, csv: &Path) -> Result<Manifest> {
    let bytes = encode_csv(ds)?;
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(csv, &bytes)?;
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        seed: ds.seed,
        config_hash: ds.config_hash.clone(),
        data_sha256: sha256_hex(&bytes),
        n_samples: ds.len(),
        train_rollouts: ds.train_rollouts(),
        held_out_rollouts: ds.held_out_rollouts(),
        n_train: ds.split.train.len(),
        n_held_out: ds.split.held_out.len(),
        rollouts: ds.rollouts.clone(),
    };
    fs::write(manifest_path(csv), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// A dataset read from disk with any integrity warnings.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub manifest: Manifest,
    pub warnings: Vec<String>,
}

fn parse<T: std::str::FromStr>(field: &str, col: &str, line: u64) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Schema(format!("line {line}: column {col}: cannot parse {field:?}")))
}

pub fn read_dataset(csv: &Path) -> Result<LoadedDataset> {
    if !csv.exists() {
        return Err(Error::MissingFile(csv.to_path_buf()));
    }
    let mpath = manifest_path(csv);
    if !mpath.exists() {
        return Err(Error::MissingFile(mpath));
    }
    let bytes = fs::read(csv)?;
    let manifest: Manifest = serde_json::from_slice(&fs::read(&mpath)?)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported dataset format version {} (expected {DATASET_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let mut warnings = Vec::new();
    let actual = sha256_hex(&bytes);
    if actual != manifest.data_sha256 {
        let msg = format!(
            "dataset hash mismatch for {}: manifest records {}, file hashes to {actual}",
            csv.display(),
            manifest.data_sha256
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header = rdr.headers()?.clone();
    let cols = dataset_columns();
    let mut index = Vec::with_capacity(cols.len());
    for c in &cols {
        match header.iter().position(|h| h == c) {
            Some(k) => index.push(k),
            None => return Err(Error::Schema(format!("dataset is missing column {c}"))),
        }
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |j: usize| -> &str { row.get(index[j]).unwrap_or("") };
        let num = |j: usize| -> Result<f64> { parse(get(j), &cols[j], line) };
        let rollout_id = parse(get(0), &cols[0], line)?;
        let t = num(1)?;
        let mut s = CrdSample {
            features: [[0.0; FEATURE_DIM]; NUM_LEGS],
            moment_arms: [Vector3::zeros(); NUM_LEGS],
            target_residual: Vector3::zeros(),
            contact: [false; NUM_LEGS],
        };
        let mut j = 2;
        for leg in 0..NUM_LEGS {
            for k in 0..FEATURE_DIM {
                s.features[leg][k] = num(j)?;
                j += 1;
            }
        }
        for leg in 0..NUM_LEGS {
            for a in 0..3 {
                s.moment_arms[leg][a] = num(j)?;
                j += 1;
            }
        }
        for a in 0..3 {
            s.target_residual[a] = num(j)?;
            j += 1;
        }
        for leg in 0..NUM_LEGS {
            s.contact[leg] = match get(j) {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Schema(format!("line {line}: column {}: expected 0 or 1, got {other:?}", cols[j])))
                }
            };
            j += 1;
        }
        records.push(Record { rollout_id, t, sample: s });
    }
    if records.len() != manifest.n_samples {
        warnings.push(format!(
            "manifest lists {} samples, file has {}",
            manifest.n_samples,
            records.len()
        ));
    }
    let dataset = Dataset::new(
        records,
        manifest.rollouts.clone(),
        &manifest.held_out_rollouts,
        manifest.seed,
        manifest.config_hash.clone(),
    );
    Ok(LoadedDataset { dataset, manifest, warnings })
}

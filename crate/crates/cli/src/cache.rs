//! Append-only JSON-lines result cache keyed by an input digest.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const FILE_NAME: &str = "results.jsonl";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub subcommand: String,
    pub input_hash: String,
    pub outputs: serde_json::Value,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub tool_version: String,
}

/// Hex SHA-256 of the JSON encoding of `inputs`.
pub fn input_hash(inputs: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(inputs).expect("inputs serialise");
    hex::encode(Sha256::digest(bytes))
}

pub struct Cache {
    path: PathBuf,
    entries: HashMap<String, ResultRecord>,
    hits: usize,
}

/// Reads every well-formed record; later lines win.
fn read_records(path: &Path) -> Result<(Vec<ResultRecord>, usize)> {
    let mut records = Vec::new();
    let mut skipped = 0;
    if !path.exists() {
        return Ok((records, 0));
    }
    let file = File::open(path).with_context(|| format!("opening cache {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => skipped += 1,
        }
    }
    Ok((records, skipped))
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
        let path = dir.join(FILE_NAME);
        let (records, _) = read_records(&path)?;
        let entries = records.into_iter().map(|r| (r.input_hash.clone(), r)).collect();
        Ok(Self { path, entries, hits: 0 })
    }

    pub fn get<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let value = self.entries.get(key).and_then(|r| serde_json::from_value(r.outputs.clone()).ok());
        if value.is_some() {
            self.hits += 1;
        }
        value
    }

    pub fn put<T: Serialize>(&mut self, subcommand: &str, key: &str, outputs: &T) -> Result<()> {
        let record = ResultRecord {
            subcommand: subcommand.to_string(),
            input_hash: key.to_string(),
            outputs: serde_json::to_value(outputs)?,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .with_context(|| format!("appending to cache {}", self.path.display()))?;
        writeln!(file, "{}", serde_json::to_string(&record)?)?;
        self.entries.insert(key.to_string(), record);
        Ok(())
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    /// Rewrites the cache with one record per input hash. Returns `(kept, dropped)`.
    pub fn compact(dir: &Path) -> Result<(usize, usize)> {
        let path = dir.join(FILE_NAME);
        let (records, skipped) = read_records(&path)?;
        let total = records.len();
        let mut last: HashMap<String, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            last.insert(r.input_hash.clone(), i);
        }
        let mut keep: Vec<usize> = last.into_values().collect();
        keep.sort_unstable();
        let tmp = dir.join(format!("{FILE_NAME}.tmp"));
        {
            let mut out = File::create(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
            for &i in &keep {
                writeln!(out, "{}", serde_json::to_string(&records[i])?)?;
            }
            out.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok((keep.len(), total - keep.len() + skipped))
    }
}

/// Looks `key` up in the optional cache, computing and storing on a miss.
pub fn cached<T, F>(cache: &mut Option<Cache>, subcommand: &str, key: &str, compute: F) -> Result<T>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    if let Some(c) = cache.as_mut() {
        if let Some(v) = c.get(key) {
            return Ok(v);
        }
    }
    let v = compute()?;
    if let Some(c) = cache.as_mut() {
        c.put(subcommand, key, &v)?;
    }
    Ok(v)
}

//! Scheme, measure, cache and output directory shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use pcarpet_core::partition::BUILTIN_SCHEMES;
use pcarpet_core::{Partition, SelfSimilarMeasure, SubdivisionScheme};

use crate::cache::Cache;
use crate::Cli;

pub struct Context {
    pub partition: Partition,
    pub measure: SelfSimilarMeasure,
    pub scheme_name: String,
    /// Digest of the scheme text and the measure weights.
    pub scheme_hash: String,
    pub seed: u64,
    pub depth: Option<usize>,
    pub cache: Option<Cache>,
    pub out: Option<PathBuf>,
}

/// Provenance written next to every result.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub scheme: &'a str,
    pub scheme_hash: &'a str,
    pub depth: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

fn load_scheme(spec: &str) -> Result<SubdivisionScheme> {
    if BUILTIN_SCHEMES.contains(&spec) {
        return Ok(SubdivisionScheme::builtin(spec)?);
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path).with_context(|| {
        format!("`{spec}` is neither a built-in scheme ({}) nor a readable file", BUILTIN_SCHEMES.join(", "))
    })?;
    let name = path.file_stem().map_or(spec.to_string(), |s| s.to_string_lossy().into_owned());
    Ok(SubdivisionScheme::parse(name, &text)?)
}

impl Context {
    pub fn new(cli: &Cli) -> Result<Self> {
        let spec = cli.scheme.as_deref().ok_or_else(|| crate::usage("--scheme is required"))?;
        let scheme = load_scheme(spec)?;
        let partition = Partition::new(scheme);
        let measure = match &cli.weights {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading weights {}", path.display()))?;
                SelfSimilarMeasure::parse(&text, partition.branching())?
            }
            None => SelfSimilarMeasure::uniform(partition.branching()),
        };
        let mut digest = Sha256::new();
        digest.update(partition.scheme().to_text().as_bytes());
        digest.update([0u8]);
        digest.update(
            measure.weights().iter().map(|w| format!("{w:e}")).collect::<Vec<_>>().join(",").as_bytes(),
        );
        let cache = cli.cache_dir.as_deref().map(Cache::open).transpose()?;
        if let Some(out) = &cli.out {
            fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
        }
        Ok(Self {
            scheme_name: partition.scheme().name().to_string(),
            partition,
            measure,
            scheme_hash: hex::encode(digest.finalize()),
            seed: cli.seed,
            depth: cli.depth,
            cache,
            out: cli.out.clone(),
        })
    }

    pub fn stamp<T: Serialize>(&self, depth: usize, body: T) -> Stamped<'_, T> {
        Stamped { scheme: &self.scheme_name, scheme_hash: &self.scheme_hash, depth, seed: self.seed, body }
    }

    /// Writes `name` into the output directory, if one was given.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.out else { return Ok(None) };
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(Some(path))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<Option<PathBuf>> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV with the provenance columns `seed, scheme_hash, depth` appended to every row.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>], depth: usize) -> Result<Option<PathBuf>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head: Vec<&str> = header.to_vec();
        head.extend(["seed", "scheme_hash", "depth"]);
        w.write_record(&head)?;
        for row in rows {
            let mut r = row.clone();
            r.extend([self.seed.to_string(), self.scheme_hash.clone(), depth.to_string()]);
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.write(name, &bytes)
    }
}

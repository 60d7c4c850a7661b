//! JSON with 17 significant digits, atomic file writes and the run manifest.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Wraps a serde_json formatter so every float is written as `{:.16e}`.
struct Sci<F>(F);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl<F: Formatter> Formatter for Sci<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    delegate! {
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    }
}

fn to_json_with<T: Serialize, F: Formatter>(value: &T, f: F) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sci(f));
    value.serialize(&mut ser).context("serializing JSON")?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = to_json_with(value, PrettyFormatter::with_indent(b"  "))?;
    s.push('\n');
    Ok(s)
}

/// Compact form used for hashing.
pub fn canonical_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    to_json_with(value, CompactFormatter)
}

/// Hash of everything that determines the results; the output directory is left out.
pub fn config_hash(cfg: &RunConfig) -> anyhow::Result<String> {
    let cfg = RunConfig { out: None, ..cfg.clone() };
    let digest = Sha256::digest(canonical_json(&cfg)?.as_bytes());
    Ok(hex::encode(digest))
}

/// Write through a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub config: &'a RunConfig,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub files: Vec<String>,
}

/// Output files staged in memory; nothing touches the disk until `commit`.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    /// Writes every file and then `manifest.json`, each atomically.
    pub fn commit(&self, dir: &Path, cfg: &RunConfig, started: String) -> anyhow::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            write_atomic(&path, contents)?;
            written.push(path);
        }
        let manifest = Manifest {
            tool: "cusp-spectra",
            version: env!("CARGO_PKG_VERSION"),
            command: cfg
                .command
                .and_then(|c| serde_json::to_value(c).ok())
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            config_sha256: config_hash(cfg)?,
            config: cfg,
            threads: rayon::current_num_threads(),
            started,
            finished: timestamp(),
            files: self.files.iter().map(|(n, _)| n.clone()).collect(),
        };
        let path = dir.join("manifest.json");
        write_atomic(&path, to_json(&manifest)?.as_bytes())?;
        written.push(path);
        Ok(written)
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

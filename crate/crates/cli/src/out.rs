//! Output plumbing: manifest hashing, atomic writes, CSV and sorted-key JSON.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub subcommand: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub wall_clock_ms: Option<u128>,
}

impl RunManifest {
    /// Hash over everything except the wall-clock.
    pub fn hash(&self) -> String {
        let m = RunManifest { wall_clock_ms: None, ..self.clone() };
        let bytes = to_json(&m);
        hex::encode(Sha256::digest(bytes.as_bytes()))
    }
}

/// Pretty JSON with keys sorted at every level.
pub fn to_json<T: Serialize>(v: &T) -> String {
    // serde_json's map is ordered by key, so a round trip through Value sorts
    let v = serde_json::to_value(v).expect("serializable");
    let mut s = serde_json::to_string_pretty(&v).expect("serializable");
    s.push('\n');
    s
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self, manifest_hash: &str) -> String {
        let mut s = format!("# manifest {manifest_hash}\n{}\n", self.header.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Pending output files, written once the manifest is final.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Box<dyn Fn(&str) -> String>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: vec![] }
    }

    pub fn csv(&mut self, name: &str, csv: Csv) {
        self.files.push((name.into(), Box::new(move |h| csv.render(h))));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, v: &T) {
        let v = serde_json::to_value(v).expect("serializable");
        self.files.push((
            name.into(),
            Box::new(move |h| to_json(&serde_json::json!({ "manifest": h, "result": v }))),
        ));
    }

    pub fn text(&mut self, name: &str, body: String) {
        self.files.push((name.into(), Box::new(move |h| format!("manifest {h}\n{body}"))));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.0.clone()).collect()
    }

    pub fn write_all(self, manifest: &RunManifest) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let h = manifest.hash();
        for (name, render) in &self.files {
            atomic_write(&self.dir.join(name), render(&h).as_bytes())?;
        }
        atomic_write(&self.dir.join("manifest.json"), to_json(manifest).as_bytes())
    }
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

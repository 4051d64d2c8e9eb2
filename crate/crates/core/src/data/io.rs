use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::generate::DatasetManifest;
use super::schema::Instance;
use crate::error::{Error, Result};

/// `data.jsonl` -> `data.manifest.json`; other names get the suffix appended.
pub fn manifest_path(data: &Path) -> PathBuf {
    let name = data
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(".jsonl").unwrap_or(&name);
    data.with_file_name(format!("{stem}.manifest.json"))
}

/// Writes one JSON object per line plus the sibling manifest.
pub fn write_jsonl(path: &Path, manifest: &DatasetManifest, instances: &[Instance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(())
}

pub fn read_manifest(data: &Path) -> Result<DatasetManifest> {
    let mpath = manifest_path(data);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    serde_json::from_str(&text).map_err(|e| Error::DataLine {
        path: mpath,
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Streaming reader; every line is parsed and validated against the manifest schema.
pub struct InstanceReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
    manifest: DatasetManifest,
}

impl InstanceReader {
    pub fn open(path: &Path) -> Result<Self> {
        let manifest = read_manifest(path)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            line: 0,
            manifest,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }
}

impl Iterator for InstanceReader {
    type Item = Result<Instance>;

    fn next(&mut self) -> Option<Self::Item> {
        let text = match self.lines.next()? {
            Ok(t) => t,
            Err(e) => return Some(Err(Error::io(&self.path, e))),
        };
        self.line += 1;
        let at = |reason: String| Error::DataLine {
            path: self.path.clone(),
            line: self.line,
            reason,
        };
        let inst: Instance = match serde_json::from_str(&text) {
            Ok(i) => i,
            Err(e) => return Some(Err(at(e.to_string()))),
        };
        if let Err(e) = inst.validate(&self.manifest.schema) {
            return Some(Err(at(e.to_string())));
        }
        Some(Ok(inst))
    }
}

/// Reads the whole file and checks the line count against the manifest.
pub fn read_jsonl(path: &Path) -> Result<(DatasetManifest, Vec<Instance>)> {
    let mut reader = InstanceReader::open(path)?;
    let instances = reader.by_ref().collect::<Result<Vec<_>>>()?;
    let manifest = reader.manifest;
    if instances.len() != manifest.count {
        return Err(Error::DataLine {
            path: path.to_path_buf(),
            line: instances.len(),
            reason: format!(
                "manifest declares {} instances, file has {}",
                manifest.count,
                instances.len()
            ),
        });
    }
    Ok((manifest, instances))
}

//! Files on disk: grid-spectral snapshots with JSON sidecars, snapshot
//! directories, POD basis artifacts and CSV tables.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochflow_core::io::{read_snapshot, read_snapshot_raw, write_snapshot, FORMAT_VERSION};
use stochflow_core::pod::SnapshotSet;
use stochflow_core::{Field, PeriodicGrid};

use crate::CliError;

/// Metadata written next to every snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
    pub time: f64,
    /// What the samples are (`mu`, `pod_mode`, `form`, ...).
    pub quantity: String,
    pub component: usize,
    pub components: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl Sidecar {
    pub fn new(grid: &PeriodicGrid, quantity: &str, time: f64) -> Self {
        Self {
            format: "GFSF".into(),
            version: FORMAT_VERSION,
            shape: grid.shape().to_vec(),
            lengths: grid.lengths().to_vec(),
            time,
            quantity: quantity.into(),
            component: 0,
            components: 1,
            grade: None,
            parameters: BTreeMap::new(),
        }
    }

    pub fn component(mut self, i: usize, of: usize) -> Self {
        self.component = i;
        self.components = of;
        self
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn sidecar_path(snapshot: &Path) -> PathBuf {
    snapshot.with_extension("json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes `<path>` (binary) and `<path>.json` (sidecar, extension swapped).
pub fn write_field(path: &Path, field: &Field, meta: &Sidecar) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write_snapshot(&mut w, field).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_sidecar(snapshot: &Path) -> Result<Option<Sidecar>, CliError> {
    let p = sidecar_path(snapshot);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

pub fn read_field(path: &Path, grid: &PeriodicGrid) -> Result<Field, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_snapshot(&mut BufReader::new(file), grid).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Snapshot files in a directory, sorted by name.
fn snapshot_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gfsf"))
        .collect();
    files.sort();
    Ok(files)
}

/// Splits `name_c<j>` into (`name`, `j`); names without the suffix are
/// single-component snapshots.
fn split_component(stem: &str) -> (String, usize) {
    if let Some(pos) = stem.rfind("_c") {
        if let Ok(j) = stem[pos + 2..].parse::<usize>() {
            return (stem[..pos].to_string(), j);
        }
    }
    (stem.to_string(), 0)
}

/// Reads every snapshot in `dir`. Files `<name>_c<j>.gfsf` are grouped into
/// vector snapshots; domain lengths come from the first sidecar (2π if none).
pub fn read_snapshot_dir(dir: &Path) -> Result<SnapshotSet, CliError> {
    let files = snapshot_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Config(format!("no .gfsf snapshots in {}", dir.display())));
    }
    let mut groups: BTreeMap<String, BTreeMap<usize, PathBuf>> = BTreeMap::new();
    for f in &files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (name, j) = split_component(stem);
        groups.entry(name).or_default().insert(j, f.clone());
    }
    let mut shape: Option<Vec<usize>> = None;
    let mut grid: Option<PeriodicGrid> = None;
    let mut snapshots = Vec::with_capacity(groups.len());
    for (name, comps) in &groups {
        if comps.keys().copied().ne(0..comps.len()) {
            return Err(CliError::Config(format!("snapshot {name} has non-contiguous components")));
        }
        let mut fields = Vec::with_capacity(comps.len());
        for path in comps.values() {
            let file = File::open(path).map_err(|e| io_err(path, e))?;
            let (s, values) =
                read_snapshot_raw(&mut BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if grid.is_none() {
                let lengths = read_sidecar(path)?.map(|m| m.lengths);
                let g = match lengths {
                    Some(l) => PeriodicGrid::with_lengths(&s, &l),
                    None => PeriodicGrid::new(&s),
                }
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                grid = Some(g);
                shape = Some(s.clone());
            }
            if shape.as_deref() != Some(s.as_slice()) {
                return Err(CliError::Config(format!("{} has a different shape", path.display())));
            }
            let g = grid.as_ref().expect("set above");
            fields.push(Field::from_values(g, values).map_err(|e| CliError::Config(e.to_string()))?);
        }
        snapshots.push(fields);
    }
    let g = grid.expect("at least one snapshot");
    SnapshotSet::new(&g, snapshots).map_err(|e| CliError::Config(e.to_string()))
}

/// A basis read back from `pod-extract` output.
#[derive(Debug, Clone)]
pub struct StoredBasis {
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<Vec<Field>>,
}

pub fn mode_file(dir: &Path, i: usize, component: usize) -> PathBuf {
    dir.join(format!("mode_{i:03}_c{component}.gfsf"))
}

pub fn write_pod_basis(dir: &Path, eigenvalues: &[f64], modes: &[Vec<Field>], total_energy: f64) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut csv = csv::Writer::from_path(dir.join("eigenvalues.csv")).map_err(|e| io_err(dir, e))?;
    csv.write_record(["index", "eigenvalue", "energy_fraction"]).map_err(|e| io_err(dir, e))?;
    for (i, l) in eigenvalues.iter().enumerate() {
        let frac = if total_energy > 0.0 { l / total_energy } else { 0.0 };
        csv.write_record([i.to_string(), format!("{l:?}"), format!("{frac:?}")])
            .map_err(|e| io_err(dir, e))?;
    }
    csv.flush().map_err(|e| io_err(dir, e))?;
    for (i, mode) in modes.iter().enumerate() {
        for (j, c) in mode.iter().enumerate() {
            let mut meta = Sidecar::new(c.grid(), "pod_mode", 0.0).component(j, mode.len());
            meta.parameters.insert("mode".into(), i.into());
            meta.parameters.insert("eigenvalue".into(), eigenvalues[i].into());
            write_field(&mode_file(dir, i, j), c, &meta)?;
        }
    }
    Ok(())
}

pub fn read_pod_basis(dir: &Path, grid: &PeriodicGrid) -> Result<StoredBasis, CliError> {
    let path = dir.join("eigenvalues.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut eigenvalues = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let l: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::Config(format!("{}: bad eigenvalue row", path.display())))?;
        eigenvalues.push(l);
    }
    let mut modes = Vec::with_capacity(eigenvalues.len());
    for i in 0..eigenvalues.len() {
        let mut comps = Vec::new();
        let mut j = 0;
        while mode_file(dir, i, j).exists() {
            comps.push(read_field(&mode_file(dir, i, j), grid)?);
            j += 1;
        }
        if comps.is_empty() {
            return Err(CliError::Config(format!("POD mode {i} missing in {}", dir.display())));
        }
        modes.push(comps);
    }
    Ok(StoredBasis { eigenvalues, modes })
}

/// Formats a float so that it parses back to the identical value.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use stochflow_core::synth::band_limited;

    #[test]
    fn component_suffixes() {
        assert_eq!(split_component("snap_007_c1"), ("snap_007".to_string(), 1));
        assert_eq!(split_component("snap_007"), ("snap_007".to_string(), 0));
        assert_eq!(split_component("a_cx"), ("a_cx".to_string(), 0));
    }

    #[test]
    fn field_and_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = PeriodicGrid::with_lengths(&[8, 16], &[1.0, 2.0]).unwrap();
        let f = band_limited(&g, 1, 2, 1.0);
        let meta = Sidecar::new(&g, "u", 0.25);
        for j in 0..2 {
            let p = dir.path().join(format!("x_c{j}.gfsf"));
            write_field(&p, &f, &meta).unwrap();
            assert_eq!(read_field(&p, &g).unwrap().values(), f.values());
            assert_eq!(read_sidecar(&p).unwrap().unwrap(), meta);
        }
        let set = read_snapshot_dir(dir.path()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.grid().lengths(), &[1.0, 2.0]);
    }
}

//! CSV relations listed in a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsens::relation::{Count, Database};

use crate::error::CliError;

/// Column holding multiplicities when the manifest names none.
pub const DEFAULT_CNT_COLUMN: &str = "__cnt";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub relations: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cnt: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
        let mut names: Vec<&str> = manifest.relations.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::format(path, format!("relation {} is listed twice", w[0])));
        }
        Ok(manifest)
    }
}

/// Reads every relation of the manifest at `path` into one database with a shared dictionary.
pub fn load_database(path: &Path) -> Result<Database, CliError> {
    let manifest = Manifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut db = Database::new();
    for entry in &manifest.relations {
        load_csv(&mut db, &entry.name, &base.join(&entry.path), entry.cnt.as_deref())?;
    }
    Ok(db)
}

fn load_csv(db: &mut Database, name: &str, path: &Path, cnt_column: Option<&str>) -> Result<(), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cnt_at = match cnt_column {
        Some(c) => Some(
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| CliError::format(path, format!("count column {c} missing from header")))?,
        ),
        None => header.iter().position(|h| h == DEFAULT_CNT_COLUMN),
    };
    let attrs: Vec<&str> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != cnt_at)
        .map(|(_, h)| h)
        .collect();
    if attrs.is_empty() || attrs.iter().any(|a| a.is_empty()) {
        return Err(CliError::format(
            path,
            "header must name at least one non-empty attribute",
        ));
    }
    let mut rows: Vec<(Vec<String>, Count)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(attrs.len());
        let mut cnt: Count = 1;
        for (i, field) in record.iter().enumerate() {
            if Some(i) == cnt_at {
                cnt = field.trim().parse().ok().filter(|&c: &Count| c > 0).ok_or_else(|| {
                    CliError::format(path, format!("line {line}: count {field:?} is not a positive integer"))
                })?;
            } else {
                values.push(field.to_owned());
            }
        }
        rows.push((values, cnt));
    }
    db.add_relation(name, &attrs, rows)
        .map_err(|e| CliError::format(path, e))?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!("checked to be an io error"),
        }
    } else {
        CliError::format(path, e)
    }
}

/// Writes one CSV per relation (with a count column) and `manifest.json` into `dir`.
pub fn export_database(db: &Database, dir: &Path) -> Result<Manifest, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut relations = Vec::new();
    for (name, (schema, rows)) in db.resolved() {
        let file = PathBuf::from(format!("{name}.csv"));
        let path = dir.join(&file);
        let mut writer = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let header = schema.iter().map(String::as_str).chain([DEFAULT_CNT_COLUMN]);
        writer.write_record(header).map_err(|e| csv_error(&path, e))?;
        for (values, cnt) in rows {
            let cnt = cnt.to_string();
            let record = values.iter().map(String::as_str).chain([cnt.as_str()]);
            writer.write_record(record).map_err(|e| csv_error(&path, e))?;
        }
        writer.flush().map_err(|e| CliError::io(&path, e))?;
        relations.push(ManifestEntry {
            name,
            path: file,
            cnt: Some(DEFAULT_CNT_COLUMN.to_owned()),
        });
    }
    let manifest = Manifest { relations };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

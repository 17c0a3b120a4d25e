//! File formats: the feature CSV, the answer-key CSV, the probabilities CSV,
//! and model checkpoints.
//!
//! Feature CSV: header `id,domain,label,f0,...,f{d-1}`, label `-1` meaning
//! unlabeled. Floats are written in shortest round-trip form, so
//! write-then-read reproduces every value bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, Matrix, ModelState, UNLABELED};
use crate::error::{Error, Result};

/// Write bytes via a sibling temp file and rename, so readers never observe
/// a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp.partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Render the feature CSV for a dataset. `ids` supplies the id column, one
/// per row (row indices when generated locally).
pub fn features_csv_string(ds: &Dataset, ids: &[u64]) -> String {
    assert_eq!(ids.len(), ds.n_samples());
    let d = ds.feature_dim();
    let mut out = String::new();
    out.push_str("id,domain,label");
    for j in 0..d {
        out.push_str(&format!(",f{}", j));
    }
    out.push('\n');
    for row in 0..ds.n_samples() {
        out.push_str(&format!("{},{},{}", ids[row], ds.domains[row], ds.labels[row]));
        for &v in ds.features.row(row) {
            out.push_str(&format!(",{}", v));
        }
        out.push('\n');
    }
    out
}

pub fn write_features_csv(ds: &Dataset, ids: &[u64], path: &Path) -> Result<()> {
    atomic_write(path, features_csv_string(ds, ids).as_bytes())
}

/// Parse a feature CSV back into a dataset plus the external id column.
///
/// The class count is inferred as `max(label) + 1` (at least 2) unless
/// `n_classes` overrides it; the target domain is the largest domain id seen.
pub fn read_features_csv(path: &Path, n_classes: Option<usize>) -> Result<(Dataset, Vec<u64>)> {
    let text = fs::read_to_string(path)?;
    parse_features_csv(&text, n_classes)
}

pub fn parse_features_csv(text: &str, n_classes: Option<usize>) -> Result<(Dataset, Vec<u64>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Schema("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "id" || cols[1] != "domain" || cols[2] != "label" {
        return Err(Error::Schema(format!("bad feature header `{}`", header)));
    }
    for (j, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{}", j) {
            return Err(Error::Schema(format!("bad feature column `{}`", c)));
        }
    }
    let d = cols.len() - 3;

    let mut ids = Vec::new();
    let mut domains = Vec::new();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + d {
            return Err(Error::Schema(format!(
                "line {}: {} fields, expected {}",
                lineno + 2,
                fields.len(),
                3 + d
            )));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::Schema(format!("line {}: bad id `{}`", lineno + 2, fields[0])))?;
        let domain: usize = fields[1].parse().map_err(|_| {
            Error::Schema(format!("line {}: bad domain `{}`", lineno + 2, fields[1]))
        })?;
        let label: i64 = fields[2].parse().map_err(|_| {
            Error::Schema(format!("line {}: bad label `{}`", lineno + 2, fields[2]))
        })?;
        let mut row = Vec::with_capacity(d);
        for f in &fields[3..] {
            let v: f64 = f.parse().map_err(|_| {
                Error::Schema(format!("line {}: bad feature `{}`", lineno + 2, f))
            })?;
            row.push(v);
        }
        ids.push(id);
        domains.push(domain);
        labels.push(label);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    {
        let mut seen = ids.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ids.len() {
            return Err(Error::Schema("duplicate ids".into()));
        }
    }
    let max_domain = domains.iter().copied().max().unwrap();
    if max_domain == 0 {
        return Err(Error::Schema("need both source and target domains".into()));
    }
    let inferred_classes = labels
        .iter()
        .filter(|&&l| l != UNLABELED)
        .map(|&l| l + 1)
        .max()
        .unwrap_or(2)
        .max(2) as usize;
    let ds = Dataset {
        features: Matrix::from_rows(&rows),
        labels,
        domains,
        n_classes: n_classes.unwrap_or(inferred_classes),
        n_source_domains: max_domain,
    };
    Ok((ds, ids))
}

/// Render the answer-key CSV (`id,label`), rows sorted by id.
pub fn answer_key_csv_string(key: &BTreeMap<u64, usize>) -> String {
    let mut out = String::from("id,label\n");
    for (id, label) in key {
        out.push_str(&format!("{},{}\n", id, label));
    }
    out
}

pub fn write_answer_key_csv(key: &BTreeMap<u64, usize>, path: &Path) -> Result<()> {
    atomic_write(path, answer_key_csv_string(key).as_bytes())
}

pub fn read_answer_key_csv(path: &Path) -> Result<BTreeMap<u64, usize>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Schema("empty file".into()))?;
    if header != "id,label" {
        return Err(Error::Schema(format!("bad answer-key header `{}`", header)));
    }
    let mut key = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id_s, label_s) = line
            .split_once(',')
            .ok_or_else(|| Error::Schema(format!("line {}: expected id,label", lineno + 2)))?;
        let id: u64 = id_s
            .parse()
            .map_err(|_| Error::Schema(format!("line {}: bad id `{}`", lineno + 2, id_s)))?;
        let label: usize = label_s
            .parse()
            .map_err(|_| Error::Schema(format!("line {}: bad label `{}`", lineno + 2, label_s)))?;
        key.insert(id, label);
    }
    Ok(key)
}

/// Parse a per-sample probabilities CSV: header `id,p0,...,p{C-1}`.
pub fn read_probabilities_csv(path: &Path) -> Result<BTreeMap<u64, Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Schema("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "id" {
        return Err(Error::Schema(format!("bad probabilities header `{}`", header)));
    }
    for (j, c) in cols[1..].iter().enumerate() {
        if *c != format!("p{}", j) {
            return Err(Error::Schema(format!("bad probability column `{}`", c)));
        }
    }
    let c_count = cols.len() - 1;
    let mut out = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + c_count {
            return Err(Error::Schema(format!(
                "line {}: {} fields, expected {}",
                lineno + 2,
                fields.len(),
                1 + c_count
            )));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::Schema(format!("line {}: bad id `{}`", lineno + 2, fields[0])))?;
        let mut probs = Vec::with_capacity(c_count);
        for f in &fields[1..] {
            let p: f64 = f.parse().map_err(|_| {
                Error::Schema(format!("line {}: bad probability `{}`", lineno + 2, f))
            })?;
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Schema(format!(
                    "line {}: probability {} out of range",
                    lineno + 2,
                    p
                )));
            }
            probs.push(p);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Schema(format!(
                "line {}: probabilities sum to {}",
                lineno + 2,
                sum
            )));
        }
        out.insert(id, probs);
    }
    if out.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    Ok(out)
}

/// Versioned JSON model checkpoint. JSON numbers round-trip f64 exactly, so
/// save-then-load reproduces the parameters bit for bit.
#[derive(serde::Serialize, serde::Deserialize)]
struct Checkpoint {
    version: u32,
    model: ModelState,
}

pub fn write_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let cp = Checkpoint {
        version: 1,
        model: model.clone(),
    };
    let bytes = serde_json::to_vec_pretty(&cp)
        .map_err(|e| Error::Schema(format!("checkpoint encode: {}", e)))?;
    atomic_write(path, &bytes)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState> {
    let text = fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("checkpoint decode: {}", e)))?;
    if cp.version != 1 {
        return Err(Error::Schema(format!("unknown checkpoint version {}", cp.version)));
    }
    Ok(cp.model)
}

//! Tab-separated dataset manifests.
//!
//! Format: a header line `#w=<W> h=<H> classes=<C>` followed by one record
//! per line, `<relative-path>\t<label>\t<split>`, UTF-8 with LF endings.
//! Dataset order always equals manifest order.

use std::path::Path;

use rayon::prelude::*;

use crate::attack::{LabeledDataset, LabeledImage};
use crate::error::{Error, Result};
use crate::imageio::ppm::load_ppm;

/// One manifest line: an image path relative to the manifest's directory,
/// its label, and a split tag (conventionally `train` or `test`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub label: usize,
    pub split: String,
}

/// Dataset-level dimensions plus the ordered records. Channels are always 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    width: usize,
    height: usize,
    classes: usize,
    records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(
        width: usize,
        height: usize,
        classes: usize,
        records: Vec<ManifestRecord>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || classes == 0 {
            return Err(Error::domain(
                "manifest dimensions and class count must be positive",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if r.label >= classes {
                return Err(Error::domain(format!(
                    "record '{}' has label {} out of range 0..{classes}",
                    r.path, r.label
                )));
            }
            if !seen.insert(r.path.as_str()) {
                return Err(Error::domain(format!("duplicate manifest path '{}'", r.path)));
            }
        }
        Ok(Self {
            width,
            height,
            classes,
            records,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }
}

/// Serializes a manifest (header + records, LF endings).
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!(
        "#w={} h={} classes={}\n",
        manifest.width, manifest.height, manifest.classes
    );
    for r in &manifest.records {
        out.push_str(&format!("{}\t{}\t{}\n", r.path, r.label, r.split));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

fn parse_header_field(text: &str, offset: usize, key: &str) -> Result<usize> {
    let field = text
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|t| t.strip_prefix('=')))
        .ok_or_else(|| Error::parse(offset, format!("header is missing '{key}='")))?;
    field
        .parse()
        .map_err(|_| Error::parse(offset, format!("invalid value for '{key}'")))
}

/// Parses a manifest file; errors carry the byte offset of the bad line.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = Vec::new(); // (byte offset, line)
    let mut offset = 0;
    for line in text.split('\n') {
        lines.push((offset, line));
        offset += line.len() + 1;
    }

    let (header_offset, header) = *lines
        .first()
        .filter(|(_, l)| !l.is_empty())
        .ok_or_else(|| Error::parse(0, "empty manifest"))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(header_offset, "expected '#w=<W> h=<H> classes=<C>' header"))?;
    let width = parse_header_field(header, header_offset, "w")?;
    let height = parse_header_field(header, header_offset, "h")?;
    let classes = parse_header_field(header, header_offset, "classes")?;

    let mut records = Vec::new();
    for &(off, line) in &lines[1..] {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (path, label, split) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(l), Some(s), None) if !p.is_empty() => (p, l, s),
            _ => {
                return Err(Error::parse(
                    off,
                    "expected '<path>\\t<label>\\t<split>'".to_string(),
                ))
            }
        };
        let label: usize = label
            .parse()
            .map_err(|_| Error::parse(off, format!("invalid label '{label}'")))?;
        records.push(ManifestRecord {
            path: path.to_string(),
            label,
            split: split.to_string(),
        });
    }

    DatasetManifest::new(width, height, classes, records).map_err(|e| match e {
        Error::Domain(msg) => Error::parse(header_offset, msg),
        other => other,
    })
}

/// Loads every record (optionally restricted to one split) in manifest
/// order. Images are read concurrently; order and determinism are preserved
/// by indexed collection.
pub fn load_dataset(
    manifest: &DatasetManifest,
    base_dir: impl AsRef<Path>,
    split: Option<&str>,
) -> Result<LabeledDataset> {
    let base = base_dir.as_ref();
    let wanted: Vec<&ManifestRecord> = manifest
        .records
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    if wanted.is_empty() {
        return Err(Error::domain(match split {
            Some(s) => format!("manifest has no '{s}' records"),
            None => "manifest has no records".to_string(),
        }));
    }
    let items: Vec<LabeledImage> = wanted
        .par_iter()
        .map(|r| {
            let image = load_ppm(base.join(&r.path))?;
            let shape = image.shape();
            if shape[0] != manifest.height || shape[1] != manifest.width {
                return Err(Error::domain(format!(
                    "'{}' is {}x{}, manifest declares {}x{}",
                    r.path, shape[1], shape[0], manifest.width, manifest.height
                )));
            }
            Ok(LabeledImage {
                image,
                label: r.label,
            })
        })
        .collect::<Result<_>>()?;
    LabeledDataset::new(items, manifest.classes)
}

/// Restricts an in-memory dataset that mirrors the manifest's record order
/// to one split tag.
pub fn select_split(
    data: &LabeledDataset,
    manifest: &DatasetManifest,
    split: &str,
) -> Result<LabeledDataset> {
    if data.len() != manifest.records.len() {
        return Err(Error::domain(format!(
            "dataset has {} items but manifest has {} records",
            data.len(),
            manifest.records.len()
        )));
    }
    let items: Vec<LabeledImage> = data
        .items()
        .iter()
        .zip(&manifest.records)
        .filter(|(_, r)| r.split == split)
        .map(|(item, _)| item.clone())
        .collect();
    if items.is_empty() {
        return Err(Error::domain(format!("manifest has no '{split}' records")));
    }
    LabeledDataset::new(items, data.classes())
}

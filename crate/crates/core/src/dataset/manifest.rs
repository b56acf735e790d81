use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result, NUM_LABELS};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hand {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
    #[serde(rename = "U")]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One manifest line; `path` is relative to the manifest root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: u8,
    pub hand: Hand,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<DatasetManifest> {
        if let Some(e) = entries.iter().find(|e| e.label as usize >= NUM_LABELS) {
            return Err(DatasetError::Label(e.label as i64));
        }
        Ok(DatasetManifest { root: root.into(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn with_split(&self, split: Split) -> Vec<ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).cloned().collect()
    }

    /// Entries grouped as tagged, when both splits are present.
    pub fn presplit(&self) -> Option<(Vec<ManifestEntry>, Vec<ManifestEntry>)> {
        let train = self.with_split(Split::Train);
        let val = self.with_split(Split::Val);
        (!train.is_empty() && !val.is_empty()).then_some((train, val))
    }

    pub fn label_counts(&self) -> [usize; NUM_LABELS] {
        let mut counts = [0; NUM_LABELS];
        for e in &self.entries {
            counts[e.label as usize] += 1;
        }
        counts
    }

    /// Writes `root/manifest.jsonl`.
    pub fn write(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        let io = |e| DatasetError::Io(path.clone(), e);
        let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(io)?);
        for e in &self.entries {
            let line = serde_json::to_string(e).expect("manifest entries serialize");
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)?;
        Ok(path)
    }

    /// Reads a JSON-lines manifest; entries are relative to its directory.
    pub fn read(path: impl AsRef<Path>) -> Result<DatasetManifest> {
        let path = path.as_ref();
        let io = |e| DatasetError::Io(path.to_path_buf(), e);
        let file = fs::File::open(path).map_err(io)?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| DatasetError::Manifest { line: n + 1, message: e.to_string() })?;
            entries.push(entry);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        DatasetManifest::new(root, entries)
    }

    /// Discovers a dataset under `root`:
    ///
    /// * `root/manifest.jsonl` if present;
    /// * `root/train/*.png` + `root/test/*.png` with `_<k><L|R>.png` names
    ///   (the public fingers dataset), tagged train/val;
    /// * otherwise `root/<label>/*.png` for labels 0–5, all tagged train.
    pub fn scan(root: impl AsRef<Path>) -> Result<DatasetManifest> {
        let root = root.as_ref();
        let manifest = root.join(MANIFEST_FILE);
        if manifest.is_file() {
            return DatasetManifest::read(manifest);
        }
        let mut entries = Vec::new();
        let train_dir = root.join("train");
        let test_dir = root.join("test");
        if train_dir.is_dir() && test_dir.is_dir() {
            for (dir, split) in [("train", Split::Train), ("test", Split::Val)] {
                for name in png_names(&root.join(dir))? {
                    if let Some((label, hand)) = parse_suffix(&name) {
                        entries.push(ManifestEntry { path: format!("{dir}/{name}"), label, hand, split });
                    }
                }
            }
        } else {
            for label in 0..NUM_LABELS as u8 {
                let dir = root.join(label.to_string());
                if !dir.is_dir() {
                    continue;
                }
                for name in png_names(&dir)? {
                    let hand = parse_suffix(&name).map_or(Hand::Unknown, |(_, h)| h);
                    entries.push(ManifestEntry {
                        path: format!("{label}/{name}"),
                        label,
                        hand,
                        split: Split::Train,
                    });
                }
            }
        }
        if entries.is_empty() {
            return Err(DatasetError::EmptyManifest);
        }
        DatasetManifest::new(root, entries)
    }
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let io = |e| DatasetError::Io(dir.to_path_buf(), e);
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let name = entry.map_err(io)?.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Parses the `_<k><L|R>.png` suffix, e.g. `abc_3L.png` → (3, Left).
pub fn parse_suffix(name: &str) -> Option<(u8, Hand)> {
    let stem = name.strip_suffix(".png").or_else(|| name.strip_suffix(".PNG"))?;
    let tag = &stem[stem.rfind('_')? + 1..];
    let mut chars = tag.chars();
    let label = chars.next()?.to_digit(10)? as u8;
    let hand = match chars.next()? {
        'L' => Hand::Left,
        'R' => Hand::Right,
        _ => return None,
    };
    (chars.next().is_none() && (label as usize) < NUM_LABELS).then_some((label, hand))
}

/// Seeded stratified split into `(train, validation)`.
///
/// The train side gets exactly `round(fraction · N)` entries. Each label
/// contributes `floor(fraction · n_label)` and the leftover slots go to the
/// labels with the largest remainders, so per-label proportions are kept
/// within one item.
pub fn split(
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::Fraction(fraction));
    }
    if manifest.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_label: BTreeMap<u8, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.entries {
        by_label.entry(e.label).or_default().push(e);
    }
    let target = (fraction * manifest.len() as f64).round() as usize;
    let mut quotas: Vec<(u8, usize, f64)> = by_label
        .iter()
        .map(|(&label, items)| {
            let exact = fraction * items.len() as f64;
            (label, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(target.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }

    let mut train = Vec::with_capacity(target);
    let mut val = Vec::with_capacity(manifest.len() - target);
    for (label, quota, _) in quotas {
        let mut items = by_label.remove(&label).expect("label present");
        items.shuffle(&mut rng);
        for (i, e) in items.into_iter().enumerate() {
            let mut e = e.clone();
            if i < quota {
                e.split = Split::Train;
                train.push(e);
            } else {
                e.split = Split::Val;
                val.push(e);
            }
        }
    }
    train.shuffle(&mut rng);
    val.shuffle(&mut rng);
    Ok((train, val))
}

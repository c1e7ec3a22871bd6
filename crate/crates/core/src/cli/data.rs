//! On-disk synthetic dataset: per item a `COMF` content file, a `COMF`
//! pitch file with columns `(f0, vuv, loudness)`, a `COMM` target mel, and a
//! tab-separated manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{
    read_matrix, write_matrix, DataItem, FeatureSet, MelSpec, CONTENT_MAGIC, MEL_MAGIC,
};
use crate::numcore::{kernels, Scalar, Tensor};
use crate::training::Example;

pub const MANIFEST: &str = "manifest.tsv";

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn content_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".comf")
}

pub fn pitch_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".pitch.comf")
}

pub fn mel_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".comm")
}

pub fn write_features(stem: &Path, fs: &FeatureSet) -> Result<()> {
    fs.check()?;
    write_matrix(&content_path(stem), CONTENT_MAGIC, &fs.content)?;
    let rows = (0..fs.frames())
        .map(|i| vec![fs.f0[i], if fs.vuv[i] { 1.0 } else { 0.0 }, fs.loudness[i]])
        .collect::<Vec<_>>();
    write_matrix(&pitch_path(stem), CONTENT_MAGIC, &Tensor::from_rows(&rows)?)
}

pub fn read_features(stem: &Path) -> Result<FeatureSet> {
    let content = read_matrix(&content_path(stem), CONTENT_MAGIC)?;
    let pitch = read_matrix(&pitch_path(stem), CONTENT_MAGIC)?;
    let (frames, cols) = pitch.dims2("pitch file")?;
    if cols != 3 {
        return Err(Error::Format {
            kind: "pitch",
            reason: format!("expected 3 columns (f0, vuv, loudness), got {cols}"),
        });
    }
    let col = |c: usize| (0..frames).map(|i| pitch.at2(i, c)).collect::<Vec<Scalar>>();
    let fs = FeatureSet {
        content,
        f0: col(0),
        vuv: col(1).into_iter().map(|v| v > 0.5).collect(),
        loudness: col(2),
    };
    fs.check()?;
    Ok(fs)
}

/// F0 track (first column) of a pitch file.
pub fn read_f0(path: &Path) -> Result<Vec<Scalar>> {
    let m = read_matrix(path, CONTENT_MAGIC)?;
    let (frames, _) = m.dims2("pitch file")?;
    Ok((0..frames).map(|i| m.at2(i, 0)).collect())
}

/// Writes a `[mel_bins, frames]` tensor as a `[frames, mel_bins]` mel file.
pub fn write_mel(path: &Path, x: &Tensor) -> Result<()> {
    write_matrix(path, MEL_MAGIC, &kernels::transpose(x)?)
}

/// Reads a mel file back into `[mel_bins, frames]`.
pub fn read_mel(path: &Path) -> Result<Tensor> {
    kernels::transpose(&read_matrix(path, MEL_MAGIC)?)
}

pub fn read_mel_spec(path: &Path, hop: usize) -> Result<MelSpec> {
    Ok(MelSpec {
        data: read_matrix(path, MEL_MAGIC)?,
        hop,
    })
}

fn file_digest(h: &mut Sha256, path: &Path) -> Result<()> {
    h.update(std::fs::read(path).map_err(|e| Error::io(path, e))?);
    Ok(())
}

/// Writes every item plus the manifest; returns the manifest's SHA-256.
pub fn write_dataset(dir: &Path, items: &[DataItem]) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# stem\tsinger\tframes\tsha256\n");
    for (i, item) in items.iter().enumerate() {
        let name = format!("item_{i:05}");
        let stem = dir.join(&name);
        write_features(&stem, &item.features)?;
        write_mel(&mel_path(&stem), &item.target)?;
        let mut h = Sha256::new();
        for p in [content_path(&stem), pitch_path(&stem), mel_path(&stem)] {
            file_digest(&mut h, &p)?;
        }
        let _ = writeln!(
            manifest,
            "{name}\t{}\t{}\t{}",
            item.singer_id,
            item.features.frames(),
            hex::encode(h.finalize())
        );
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, &manifest).map_err(|e| Error::io(&path, e))?;
    Ok(hex::encode(Sha256::digest(manifest.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub stem: String,
    pub singer_id: usize,
    pub frames: usize,
    pub sha256: String,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |line: usize, reason: &str| Error::Format {
        kind: "manifest",
        reason: format!("line {line}: {reason}"),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(i + 1, "expected 4 tab-separated columns"));
        }
        out.push(ManifestEntry {
            stem: cols[0].to_string(),
            singer_id: cols[1].parse().map_err(|_| bad(i + 1, "bad singer id"))?,
            frames: cols[2].parse().map_err(|_| bad(i + 1, "bad frame count"))?,
            sha256: cols[3].to_string(),
        });
    }
    Ok(out)
}

/// Loads every manifest item as a training example.
pub fn load_dataset(dir: &Path) -> Result<Vec<Example>> {
    let entries = read_manifest(dir)?;
    if entries.is_empty() {
        return Err(Error::invalid(format!("dataset {} has no items", dir.display())));
    }
    entries
        .iter()
        .map(|e| {
            let stem = dir.join(&e.stem);
            let fs = read_features(&stem)?;
            let x0 = read_mel(&mel_path(&stem))?;
            if fs.frames() != e.frames || x0.shape()[1] != e.frames {
                return Err(Error::Format {
                    kind: "manifest",
                    reason: format!("{} frame count disagrees with its files", e.stem),
                });
            }
            Ok(Example {
                x0,
                cond: Some((fs, e.singer_id)),
            })
        })
        .collect()
}

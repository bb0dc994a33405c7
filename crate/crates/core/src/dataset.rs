//! Dataset directories and `manifest.csv`.
//!
//! A dataset directory either holds a `manifest.csv`
//! (`path,label,group_id,view_index`, paths relative to the directory) or
//! bare class-named subdirectories. In the latter case every file becomes its
//! own group, so grouped splits degenerate to per-image splits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{load_image, resize_bilinear, to_rgb, Image, ImageError};
use crate::synth::StructureClass;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset directory not found: {0}")]
    NotFound(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("empty dataset")]
    Empty,
    #[error("image {path}: {source}")]
    Image { path: String, source: ImageError },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: StructureClass,
    pub group_id: usize,
    pub view_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label.code()).collect()
    }

    pub fn group_ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.group_id).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Manifest {
        Manifest { entries: indices.iter().map(|&i| self.entries[i].clone()).collect() }
    }
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path.as_ref()).map_err(csv_err)?;
    for e in &manifest.entries {
        w.serialize(e).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let mut r = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers != vec!["path", "label", "group_id", "view_index"] {
        return Err(DatasetError::Manifest(format!("unexpected header {headers:?}")));
    }
    let entries = r.deserialize().collect::<Result<Vec<ManifestEntry>, _>>().map_err(csv_err)?;
    Ok(Manifest { entries })
}

fn csv_err(e: csv::Error) -> DatasetError {
    DatasetError::Manifest(e.to_string())
}

/// Reads the manifest of a dataset directory, falling back to scanning
/// class-named subdirectories (sorted by file name).
pub fn discover(dir: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(DatasetError::NotFound(dir.display().to_string()));
    }
    let manifest_path = dir.join("manifest.csv");
    let manifest = if manifest_path.is_file() {
        read_manifest(manifest_path)?
    } else {
        let mut entries = Vec::new();
        for class in StructureClass::ALL {
            let sub = dir.join(class.name());
            if !sub.is_dir() {
                continue;
            }
            let mut names: Vec<String> = fs::read_dir(&sub)?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_file())
                .filter_map(|e| e.file_name().into_string().ok())
                .filter(|n| {
                    let lower = n.to_ascii_lowercase();
                    lower.ends_with(".png") || lower.ends_with(".pgm")
                })
                .collect();
            names.sort();
            for name in names {
                let group_id = entries.len();
                entries.push(ManifestEntry {
                    path: format!("{}/{name}", class.name()),
                    label: class,
                    group_id,
                    view_index: 0,
                });
            }
        }
        Manifest { entries }
    };
    if manifest.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(manifest)
}

/// Images of a dataset, resized to a common square size and converted to RGB.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub images: Vec<Image>,
    pub size: usize,
}

impl LoadedDataset {
    pub fn labels(&self) -> Vec<usize> {
        self.manifest.labels()
    }

    pub fn group_ids(&self) -> Vec<usize> {
        self.manifest.group_ids()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LoadedDataset {
        LoadedDataset {
            root: self.root.clone(),
            manifest: self.manifest.subset(indices),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            size: self.size,
        }
    }
}

/// Loads every image of a dataset directory at `size x size`, RGB.
pub fn load_dataset(dir: impl AsRef<Path>, size: usize) -> Result<LoadedDataset, DatasetError> {
    let dir = dir.as_ref();
    let manifest = discover(dir)?;
    let images = manifest
        .entries
        .iter()
        .map(|e| load_prepared(dir.join(&e.path), size).map_err(|source| DatasetError::Image { path: e.path.clone(), source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LoadedDataset { root: dir.to_path_buf(), manifest, images, size })
}

/// Loads an image and brings it to the `size x size` RGB form used for training.
pub fn load_prepared(path: impl AsRef<Path>, size: usize) -> Result<Image, ImageError> {
    let img = load_image(path)?;
    prepare(&img, size)
}

pub fn prepare(img: &Image, size: usize) -> Result<Image, ImageError> {
    resize_bilinear(&to_rgb(img), size, size)
}

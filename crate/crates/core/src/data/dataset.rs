use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{io_error, load_png, DataError};
use crate::imgproc::{rgb_to_luminance, ColorSpace, Image, Plane};
use crate::training::TrainingPair;

pub const MANIFEST_HEADER: [&str; 5] = ["id", "kernel_len", "kernel_angle", "noise_sigma", "seed"];

/// How a synthetic pair was made.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub kernel_len: usize,
    pub kernel_angle: f64,
    pub noise_sigma: f64,
    /// Seed of the noise draw.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub sharp: PathBuf,
    pub blurred: PathBuf,
    pub provenance: Option<Provenance>,
}

/// A paired dataset rooted at a directory holding `sharp/<id>.png`,
/// `blur/<id>.png` and optionally `manifest.csv`. Entries are sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

fn entry(root: &Path, id: &str, provenance: Option<Provenance>) -> ManifestEntry {
    ManifestEntry {
        id: id.to_string(),
        sharp: root.join("sharp").join(format!("{id}.png")),
        blurred: root.join("blur").join(format!("{id}.png")),
        provenance,
    }
}

/// The single luminance plane of an 8-bit image: grayscale files are taken
/// as luminance directly, RGB files are converted.
pub fn to_luminance(img: &Image) -> Result<Plane, DataError> {
    match img.space() {
        ColorSpace::Luminance => Ok(img.plane(0).clone()),
        _ => Ok(rgb_to_luminance(img)?.plane(0).clone()),
    }
}

impl DatasetManifest {
    pub fn new(root: &Path, mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        DatasetManifest {
            root: root.to_path_buf(),
            entries,
        }
    }

    /// Reads `manifest.csv` when present, otherwise pairs every
    /// `sharp/*.png` with the equally named file under `blur/`.
    pub fn open(root: &Path) -> Result<Self, DataError> {
        let manifest = root.join("manifest.csv");
        let entries = if manifest.exists() {
            Self::read_csv(root, &manifest)?
        } else {
            Self::scan(root)?
        };
        for e in &entries {
            for p in [&e.sharp, &e.blurred] {
                if !p.is_file() {
                    return Err(DataError::MissingFile(p.clone()));
                }
            }
        }
        Ok(Self::new(root, entries))
    }

    fn read_csv(root: &Path, path: &Path) -> Result<Vec<ManifestEntry>, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| io_error(path, e))?;
        let header = reader.headers().map_err(|e| io_error(path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(DataError::Manifest {
                line: 1,
                message: format!("expected header {}", MANIFEST_HEADER.join(",")),
            });
        }
        let mut seen = BTreeSet::new();
        let mut entries = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let line = k + 2;
            let bad = |message: String| DataError::Manifest { line, message };
            let record = record.map_err(|e| bad(e.to_string()))?;
            let id = record[0].to_string();
            if id.is_empty() || id.contains(['/', '\\']) {
                return Err(bad(format!("invalid id `{id}`")));
            }
            if !seen.insert(id.clone()) {
                return Err(bad(format!("duplicate id `{id}`")));
            }
            let fields: Vec<&str> = (1..5).map(|i| &record[i]).collect();
            let provenance = if fields.iter().all(|f| f.is_empty()) {
                None
            } else {
                let parse_err = |name: &str, v: &str| bad(format!("invalid {name} `{v}`"));
                Some(Provenance {
                    kernel_len: fields[0].parse().map_err(|_| parse_err("kernel_len", fields[0]))?,
                    kernel_angle: fields[1].parse().map_err(|_| parse_err("kernel_angle", fields[1]))?,
                    noise_sigma: fields[2].parse().map_err(|_| parse_err("noise_sigma", fields[2]))?,
                    seed: fields[3].parse().map_err(|_| parse_err("seed", fields[3]))?,
                })
            };
            entries.push(entry(root, &id, provenance));
        }
        Ok(entries)
    }

    fn scan(root: &Path) -> Result<Vec<ManifestEntry>, DataError> {
        let sharp_dir = root.join("sharp");
        if !sharp_dir.is_dir() || !root.join("blur").is_dir() {
            return Err(DataError::NotADataset(root.to_path_buf()));
        }
        let mut entries = Vec::new();
        for item in fs::read_dir(&sharp_dir).map_err(|e| io_error(&sharp_dir, e))? {
            let path = item.map_err(|e| io_error(&sharp_dir, e))?.path();
            if path.extension().is_some_and(|x| x == "png") {
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                    entries.push(entry(root, id, None));
                }
            }
        }
        Ok(entries)
    }

    pub fn entry(&self, id: &str, provenance: Option<Provenance>) -> ManifestEntry {
        entry(&self.root, id, provenance)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER).unwrap();
        for e in &self.entries {
            let row = match &e.provenance {
                Some(p) => [
                    e.id.clone(),
                    p.kernel_len.to_string(),
                    p.kernel_angle.to_string(),
                    p.noise_sigma.to_string(),
                    p.seed.to_string(),
                ],
                None => [e.id.clone(), String::new(), String::new(), String::new(), String::new()],
            };
            w.write_record(&row).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Writes `root/manifest.csv` and returns its path.
    pub fn write(&self) -> Result<PathBuf, DataError> {
        let path = self.root.join("manifest.csv");
        fs::write(&path, self.to_csv()).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    /// Loads one entry as a luminance pair, checking the sizes agree.
    pub fn load(&self, e: &ManifestEntry) -> Result<TrainingPair, DataError> {
        let sharp = to_luminance(&load_png(&e.sharp)?)?;
        let blurred = to_luminance(&load_png(&e.blurred)?)?;
        if sharp.dims() != blurred.dims() {
            return Err(DataError::PairSize {
                id: e.id.clone(),
                sharp: sharp.dims(),
                blurred: blurred.dims(),
            });
        }
        Ok(TrainingPair {
            id: e.id.clone(),
            sharp,
            blurred,
        })
    }

    pub fn load_all(&self) -> Result<Vec<TrainingPair>, DataError> {
        self.entries.iter().map(|e| self.load(e)).collect()
    }
}

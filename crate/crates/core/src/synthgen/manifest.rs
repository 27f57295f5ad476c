use crate::error::{Error, Result};
use crate::imgcore::{load_ppm, BBox, ImageRgb, Rng};
use crate::io::{read_to_string, write_atomic};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectAnnotation {
    pub class: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    /// Path relative to the manifest's directory.
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectAnnotation>,
}

impl ImageRecord {
    pub fn boxes(&self) -> Vec<BBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }

    /// Sorted distinct class ids.
    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.objects.iter().map(|o| o.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// JSONL dataset manifest. Image paths resolve against `root`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<ImageRecord>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ImageRecord>) -> Self {
        Manifest {
            root: root.into(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ImageRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
                line: i + 1,
                msg: e.to_string(),
            })?;
            for o in &rec.objects {
                if !o.bbox.is_inside(rec.width, rec.height) {
                    return Err(Error::Malformed {
                        line: i + 1,
                        msg: format!("box {:?} outside {}x{} image", o.bbox, rec.width, rec.height),
                    });
                }
            }
            records.push(rec);
        }
        Ok(Manifest::new(root, records))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_jsonl(&text, root)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn image_path(&self, rec: &ImageRecord) -> PathBuf {
        self.root.join(&rec.image)
    }

    pub fn load_image(&self, index: usize) -> Result<ImageRgb> {
        let rec = &self.records[index];
        let img = load_ppm(self.image_path(rec))?;
        if img.width() != rec.width || img.height() != rec.height {
            return Err(Error::InvalidImage(format!(
                "{}: manifest says {}x{}, file is {}x{}",
                rec.image,
                rec.width,
                rec.height,
                img.width(),
                img.height()
            )));
        }
        Ok(img)
    }

    pub fn load_all_images(&self) -> Result<Vec<ImageRgb>> {
        (0..self.len()).map(|i| self.load_image(i)).collect()
    }

    /// Largest class id + 1.
    pub fn class_count(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| r.objects.iter().map(|o| o.class + 1))
            .max()
            .unwrap_or(0)
    }
}

/// Deterministic shuffle split into `(train, val)`. The train side gets
/// `floor(n * train_frac)` records; both sides keep manifest order.
pub fn split(manifest: &Manifest, train_frac: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    let n = manifest.len();
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derive(&[seed, 0x5EED_5B17]).shuffle(&mut order);
    let n_train = (n as f64 * train_frac).floor() as usize;
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let pick = |idx: &[usize]| {
        Manifest::new(
            manifest.root.clone(),
            idx.iter().map(|&i| manifest.records[i].clone()).collect(),
        )
    };
    Ok((pick(&train_idx), pick(&val_idx)))
}

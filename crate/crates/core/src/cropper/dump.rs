use super::config::{CropConfig, Strategy};
use super::pair::{pair_rng, sample_pair, PairGeometry};
use crate::error::Result;
use crate::imgcore::{ppm_write, BBox, ImageRgb};
use crate::io::write_atomic;
use serde::Serialize;
use std::path::Path;

/// One line of the dump sidecar.
#[derive(Debug, Serialize)]
pub struct DumpRecord {
    pub index: usize,
    pub image: String,
    pub strategy: Strategy,
    pub view_a: String,
    pub view_b: String,
    #[serde(flatten)]
    pub geometry: PairGeometry,
}

/// Write one view pair per input image as `pairs/{index}_a.ppm` and
/// `pairs/{index}_b.ppm` under `out_dir`, plus `pairs.jsonl` describing
/// each pair. Each image draws from [`pair_rng`]`(seed, key, 0)`.
pub fn dump_pairs<'a>(
    out_dir: impl AsRef<Path>,
    items: impl IntoIterator<Item = (&'a str, &'a ImageRgb, Option<&'a [BBox]>)>,
    strategy: Strategy,
    cfg: &CropConfig,
    s_min: f64,
    seed: u64,
) -> Result<Vec<DumpRecord>> {
    let out = out_dir.as_ref();
    let mut records = Vec::new();
    let mut jsonl = String::new();
    for (index, (key, img, boxes)) in items.into_iter().enumerate() {
        let mut rng = pair_rng(seed, key, 0);
        let pair = sample_pair(img, boxes, strategy, cfg, s_min, &mut rng)?;
        let (name_a, name_b) = (format!("pairs/{index:06}_a.ppm"), format!("pairs/{index:06}_b.ppm"));
        write_atomic(out.join(&name_a), &ppm_write(&pair.view_a))?;
        write_atomic(out.join(&name_b), &ppm_write(&pair.view_b))?;
        let rec = DumpRecord {
            index,
            image: key.to_owned(),
            strategy,
            view_a: name_a,
            view_b: name_b,
            geometry: pair.geometry,
        };
        jsonl.push_str(&serde_json::to_string(&rec)?);
        jsonl.push('\n');
        records.push(rec);
    }
    write_atomic(out.join("pairs.jsonl"), jsonl.as_bytes())?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::load_ppm;

    #[test]
    fn dump_writes_views_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageRgb::filled(40, 30, [9, 80, 200]).unwrap();
        let boxes = [BBox::new(5, 5, 10, 10)];
        let items = [("a.ppm", &img, Some(&boxes[..])), ("b.ppm", &img, Some(&boxes[..]))];
        let recs = dump_pairs(dir.path(), items, Strategy::ObjScene, &CropConfig::default(), 0.5, 1).unwrap();
        assert_eq!(recs.len(), 2);
        let v = load_ppm(dir.path().join("pairs/000001_b.ppm")).unwrap();
        assert_eq!((v.width(), v.height()), (32, 32));
        let text = std::fs::read_to_string(dir.path().join("pairs.jsonl")).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["strategy"], "ObjScene");
        assert_eq!(first["role_a"], "Object");
        assert_eq!(first["proposal_used"], serde_json::json!([5, 5, 10, 10]));
        assert_eq!(first["view_a"], "pairs/000000_a.ppm");
    }
}

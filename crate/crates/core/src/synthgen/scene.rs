use super::manifest::{ImageRecord, Manifest, ObjectAnnotation};
use crate::error::{Error, Result};
use crate::imgcore::{ppm_write, BBox, ImageRgb, Rng};
use crate::io::write_atomic;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const N_SHAPES: usize = 8;
pub const N_COLORS: usize = 4;
pub const MAX_CLASSES: usize = N_SHAPES * N_COLORS;

const PALETTE: [[u8; 3]; N_COLORS] = [[230, 40, 40], [40, 200, 60], [50, 80, 235], [240, 210, 30]];

/// Placement attempts per object before it is dropped.
const MAX_PLACEMENT_TRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Cross,
    Ring,
    Diamond,
    Star,
    Bar,
}

impl Shape {
    const ALL: [Shape; N_SHAPES] = [
        Shape::Circle,
        Shape::Square,
        Shape::Triangle,
        Shape::Cross,
        Shape::Ring,
        Shape::Diamond,
        Shape::Star,
        Shape::Bar,
    ];

    /// Membership test in local coordinates, `u, v ∈ [-1, 1]`.
    fn contains(self, u: f64, v: f64) -> bool {
        match self {
            Shape::Circle => u * u + v * v <= 1.0,
            Shape::Square => u.abs() <= 0.9 && v.abs() <= 0.9,
            Shape::Triangle => v <= 1.0 && u.abs() <= (v + 1.0) / 2.0,
            Shape::Cross => {
                (u.abs() <= 0.3 && v.abs() <= 1.0) || (v.abs() <= 0.3 && u.abs() <= 1.0)
            }
            Shape::Ring => {
                let r2 = u * u + v * v;
                (0.3..=1.0).contains(&r2)
            }
            Shape::Diamond => u.abs() + v.abs() <= 1.0,
            Shape::Star => star_contains(u, v),
            Shape::Bar => u.abs() <= 1.0 && v.abs() <= 0.35,
        }
    }
}

/// Five-pointed star, outer radius 1, inner radius 0.45, one tip up.
fn star_contains(u: f64, v: f64) -> bool {
    let r = (u * u + v * v).sqrt();
    if r > 1.0 {
        return false;
    }
    let sector = std::f64::consts::TAU / 5.0;
    let theta = u.atan2(-v).rem_euclid(std::f64::consts::TAU);
    // angular distance to the nearest tip, in [0, sector / 2]
    let phi = ((theta + sector / 2.0).rem_euclid(sector) - sector / 2.0).abs();
    let tip = (0.0, 1.0);
    let notch = (0.45 * (sector / 2.0).sin(), 0.45 * (sector / 2.0).cos());
    let edge = (notch.0 - tip.0, notch.1 - tip.1);
    let ray = (phi.sin(), phi.cos());
    let cross = |a: (f64, f64), b: (f64, f64)| a.0 * b.1 - a.1 * b.0;
    r <= cross(tip, edge) / cross(ray, edge)
}

/// Class id → (shape, color index). Classes enumerate shapes first so small
/// class counts still cover several shapes.
pub fn class_style(class: usize) -> (Shape, [u8; 3]) {
    (Shape::ALL[class % N_SHAPES], PALETTE[(class / N_SHAPES) % N_COLORS])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundConfig {
    /// Value-noise lattice spacing range, pixels.
    pub cell: [u32; 2],
    /// Noise amplitude in gray levels.
    pub amplitude: f64,
    /// Base gray level range.
    pub gray: [f64; 2],
    /// Maximum per-channel tint offset.
    pub tint: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            cell: [8, 32],
            amplitude: 40.0,
            gray: [70.0, 170.0],
            tint: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_images: usize,
    pub img_side: u32,
    /// Inclusive range of objects per image.
    pub objects_per_image: [usize; 2],
    pub n_classes: usize,
    /// Object side as a fraction of `img_side`.
    pub obj_scale: [f64; 2],
    /// Class frequency ∝ rank^-exponent; 0 is uniform.
    pub longtail_exponent: f64,
    pub bg: BackgroundConfig,
    pub min_distinct_classes: usize,
    /// Permit objects to overlap; otherwise nominal boxes are kept disjoint.
    pub allow_overlap: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 2000,
            img_side: 128,
            objects_per_image: [2, 12],
            n_classes: MAX_CLASSES,
            obj_scale: [0.05, 0.20],
            longtail_exponent: 0.0,
            bg: BackgroundConfig::default(),
            min_distinct_classes: 2,
            allow_overlap: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let [klo, khi] = self.objects_per_image;
        let [slo, shi] = self.obj_scale;
        if self.img_side < 8 {
            return bad(format!("img_side {} too small", self.img_side));
        }
        if klo == 0 || klo > khi {
            return bad(format!("objects_per_image {:?} empty", self.objects_per_image));
        }
        if !(slo > 0.0 && slo <= shi && shi <= 1.0) {
            return bad(format!("obj_scale {:?} invalid", self.obj_scale));
        }
        if self.n_classes == 0 || self.n_classes > MAX_CLASSES {
            return bad(format!("n_classes must be in 1..={MAX_CLASSES}"));
        }
        if self.n_classes < self.min_distinct_classes || khi < self.min_distinct_classes {
            return bad("min_distinct_classes unsatisfiable".into());
        }
        if self.longtail_exponent < 0.0 {
            return bad("longtail_exponent must be >= 0".into());
        }
        let [clo, chi] = self.bg.cell;
        if clo == 0 || clo > chi {
            return bad(format!("bg.cell {:?} invalid", self.bg.cell));
        }
        Ok(())
    }

    /// Class sampling probabilities, `p(c) ∝ (c + 1)^-exponent`.
    pub fn class_probabilities(&self) -> Vec<f64> {
        let w: Vec<f64> = (0..self.n_classes)
            .map(|c| ((c + 1) as f64).powf(-self.longtail_exponent))
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// Per-image outcome worth reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNote {
    pub image: String,
    pub requested: usize,
    pub placed: usize,
    pub distinct_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GenerationReport {
    pub n_images: usize,
    pub n_objects: usize,
    pub dropped_objects: usize,
    /// Images where placement dropped at least one object.
    pub dropped: Vec<SceneNote>,
    /// Images left with fewer distinct classes than requested.
    pub below_min_distinct: Vec<SceneNote>,
    pub class_histogram: Vec<usize>,
}

fn sample_class(cdf: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn render_background(cfg: &SynthConfig, rng: &mut Rng) -> ImageRgb {
    let side = cfg.img_side as usize;
    let bg = &cfg.bg;
    let cell = (bg.cell[0] + rng.below((bg.cell[1] - bg.cell[0] + 1) as u64) as u32) as usize;
    let nodes = side / cell + 2;
    let lattice: Vec<f64> = (0..nodes * nodes).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let gray = rng.uniform_in(bg.gray[0], bg.gray[1]);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.uniform_in(-bg.tint, bg.tint));
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        let gy = y as f64 / cell as f64;
        let (iy, fy) = (gy.floor() as usize, smoothstep(gy.fract()));
        for x in 0..side {
            let gx = x as f64 / cell as f64;
            let (ix, fx) = (gx.floor() as usize, smoothstep(gx.fract()));
            let at = |i: usize, j: usize| lattice[j * nodes + i];
            let top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * fx;
            let bot = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * fx;
            let n = top + (bot - top) * fy;
            for t in tint {
                let v = gray + t + bg.amplitude * n;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRgb::from_raw(cfg.img_side, cfg.img_side, data).expect("sized buffer")
}

/// Draw one anti-aliased shape (4×4 supersampling) and return its tight box.
fn draw_shape(img: &mut ImageRgb, shape: Shape, color: [u8; 3], cx: f64, cy: f64, half: f64) -> Option<BBox> {
    const SS: usize = 4;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((cx - half).floor() as i64).max(0);
    let x1 = ((cx + half).ceil() as i64).min(w);
    let y0 = ((cy - half).floor() as i64).max(0);
    let y1 = ((cy + half).ceil() as i64).min(h);
    let (mut bx0, mut by0, mut bx1, mut by1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for py in y0..y1 {
        for px in x0..x1 {
            let mut hits = 0usize;
            for sy in 0..SS {
                for sx in 0..SS {
                    let u = (px as f64 + (sx as f64 + 0.5) / SS as f64 - cx) / half;
                    let v = (py as f64 + (sy as f64 + 0.5) / SS as f64 - cy) / half;
                    if shape.contains(u, v) {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let alpha = hits as f64 / (SS * SS) as f64;
            let under = img.pixel(px as u32, py as u32);
            let blended: [u8; 3] = std::array::from_fn(|c| {
                (under[c] as f64 * (1.0 - alpha) + color[c] as f64 * alpha).round() as u8
            });
            img.set_pixel(px as u32, py as u32, blended);
            bx0 = bx0.min(px);
            by0 = by0.min(py);
            bx1 = bx1.max(px + 1);
            by1 = by1.max(py + 1);
        }
    }
    (bx1 > bx0).then(|| BBox::new(bx0 as u32, by0 as u32, (bx1 - bx0) as u32, (by1 - by0) as u32))
}

struct Placed {
    cx: f64,
    cy: f64,
    half: f64,
}

impl Placed {
    /// Nominal extent grown by one pixel, covering anti-aliased fringe.
    fn nominal(&self) -> (f64, f64, f64, f64) {
        let r = self.half + 1.0;
        (self.cx - r, self.cy - r, self.cx + r, self.cy + r)
    }
}

fn conflicts(a: &Placed, b: &Placed, allow_overlap: bool) -> bool {
    let dist = ((a.cx - b.cx).powi(2) + (a.cy - b.cy).powi(2)).sqrt();
    // half of the smaller object's side
    if dist < a.half.min(b.half) {
        return true;
    }
    if allow_overlap {
        return false;
    }
    let (ax0, ay0, ax1, ay1) = a.nominal();
    let (bx0, by0, bx1, by1) = b.nominal();
    ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
}

/// Render scene `index` of the dataset described by `cfg`.
pub fn render_scene(cfg: &SynthConfig, index: usize) -> (ImageRgb, ImageRecord, SceneNote) {
    let mut rng = Rng::derive(&[cfg.seed, index as u64, 0x5CE7E]);
    let side = cfg.img_side as f64;
    let mut img = render_background(cfg, &mut rng);

    let probs = cfg.class_probabilities();
    let cdf: Vec<f64> = probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let [klo, khi] = cfg.objects_per_image;
    let k = klo + rng.below((khi - klo + 1) as u64) as usize;
    let classes = loop {
        let cs: Vec<usize> = (0..k).map(|_| sample_class(&cdf, &mut rng)).collect();
        let mut d = cs.clone();
        d.sort_unstable();
        d.dedup();
        if d.len() >= cfg.min_distinct_classes {
            break cs;
        }
    };

    let mut placed: Vec<Placed> = Vec::with_capacity(k);
    let mut objects = Vec::with_capacity(k);
    for class in classes {
        let s = (rng.uniform_in(cfg.obj_scale[0], cfg.obj_scale[1]) * side).max(3.0);
        let half = s / 2.0;
        let mut spot = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let cand = Placed {
                cx: rng.uniform_in(half, side - half),
                cy: rng.uniform_in(half, side - half),
                half,
            };
            if !placed.iter().any(|p| conflicts(p, &cand, cfg.allow_overlap)) {
                spot = Some(cand);
                break;
            }
        }
        let Some(p) = spot else { continue };
        let (shape, color) = class_style(class);
        if let Some(bbox) = draw_shape(&mut img, shape, color, p.cx, p.cy, p.half) {
            objects.push(ObjectAnnotation { class, bbox });
            placed.push(p);
        }
    }

    let image = format!("images/{index:06}.ppm");
    let mut distinct: Vec<usize> = objects.iter().map(|o| o.class).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let note = SceneNote {
        image: image.clone(),
        requested: k,
        placed: objects.len(),
        distinct_classes: distinct.len(),
    };
    let rec = ImageRecord {
        image,
        width: cfg.img_side,
        height: cfg.img_side,
        objects,
    };
    (img, rec, note)
}

/// Render all scenes in memory, without touching the filesystem.
pub fn generate_in_memory(cfg: &SynthConfig) -> Result<(Vec<ImageRgb>, Vec<ImageRecord>, GenerationReport)> {
    cfg.validate()?;
    let mut images = Vec::with_capacity(cfg.n_images);
    let mut records = Vec::with_capacity(cfg.n_images);
    let mut report = GenerationReport {
        n_images: cfg.n_images,
        class_histogram: vec![0; cfg.n_classes],
        ..Default::default()
    };
    for i in 0..cfg.n_images {
        let (img, rec, note) = render_scene(cfg, i);
        report.n_objects += rec.objects.len();
        for o in &rec.objects {
            report.class_histogram[o.class] += 1;
        }
        if note.placed < note.requested {
            report.dropped_objects += note.requested - note.placed;
            report.dropped.push(note.clone());
        }
        if note.distinct_classes < cfg.min_distinct_classes {
            log::warn!(
                "{}: only {} distinct classes after placement",
                note.image,
                note.distinct_classes
            );
            report.below_min_distinct.push(note);
        }
        images.push(img);
        records.push(rec);
    }
    Ok((images, records, report))
}

/// Write `images/*.ppm`, `manifest.jsonl` and `report.json` under `out_dir`.
pub fn generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<(Manifest, GenerationReport)> {
    let out_dir = out_dir.as_ref();
    let (images, records, report) = generate_in_memory(cfg)?;
    for (img, rec) in images.iter().zip(&records) {
        write_atomic(out_dir.join(&rec.image), &ppm_write(img))?;
    }
    let manifest = Manifest::new(out_dir, records);
    manifest.save(out_dir.join("manifest.jsonl"))?;
    write_atomic(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok((manifest, report))
}

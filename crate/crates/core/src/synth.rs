//! Deterministic renderer of synthetic BIM-like wireframe structures.
//!
//! Each structure is a base drawing in unit coordinates (x to the right,
//! y downwards, ground near the bottom) built from a class recipe. The four
//! views of a structure are seeded affine jitters of the same drawing, which
//! keeps the "same building, different angle" correlation between views.
//!
//! Class recipes differ in global layout but share the same local texture of
//! straight dark strokes on a white background:
//!
//! - apartment buildings are tall outlines holding a regular grid of windows,
//! - industrial buildings are wide low halls with roof-truss diagonals and a
//!   few large openings,
//! - everything else is drawn from a small set of towers, bridges, tanks and
//!   mixed compositions.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{write_manifest, Manifest, ManifestEntry};
use crate::image::{save_image, Image};
use crate::seed::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("I/O error: {0}")]
    Io(String),
}

/// The three structure categories, with stable integer codes 0, 1, 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureClass {
    ApartmentBuilding,
    IndustrialBuilding,
    Other,
}

impl StructureClass {
    pub const ALL: [StructureClass; 3] =
        [StructureClass::ApartmentBuilding, StructureClass::IndustrialBuilding, StructureClass::Other];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<StructureClass> {
        Self::ALL.get(code).copied()
    }

    /// Name used for directories and manifest labels.
    pub fn name(self) -> &'static str {
        match self {
            StructureClass::ApartmentBuilding => "apartment_building",
            StructureClass::IndustrialBuilding => "industrial_building",
            StructureClass::Other => "other",
        }
    }
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructureClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown class name {s:?}"))
    }
}

/// Counts of what the recipe drew, so recipe properties can be asserted
/// without looking at pixels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderMeta {
    /// Recipe variant, e.g. `apartment`, `tower`, `bridge`.
    pub variant: String,
    /// Axis-aligned rectangles in the base drawing.
    pub rectangles: usize,
    /// Free line segments, including diagonals.
    pub lines: usize,
    pub diagonals: usize,
    pub circles: usize,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Line([f64; 2], [f64; 2]),
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

type Ink = [f64; 3];

const OUTLINE: Ink = [0.12, 0.12, 0.14];
const GLAZING: Ink = [0.10, 0.18, 0.30];
const STEEL: Ink = [0.28, 0.12, 0.10];
const GROUND: Ink = [0.20, 0.22, 0.20];

#[derive(Default)]
struct Drawing {
    shapes: Vec<(Shape, Ink)>,
    meta: RenderMeta,
}

impl Drawing {
    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, ink: Ink) {
        self.shapes.push((Shape::Rect { x0, y0, x1, y1 }, ink));
        self.meta.rectangles += 1;
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2], ink: Ink) {
        self.shapes.push((Shape::Line(a, b), ink));
        self.meta.lines += 1;
        if (a[0] - b[0]).abs() > 1e-9 && (a[1] - b[1]).abs() > 1e-9 {
            self.meta.diagonals += 1;
        }
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, ink: Ink) {
        self.shapes.push((Shape::Ellipse { cx, cy, rx, ry }, ink));
        self.meta.circles += 1;
    }
}

fn ground_line(d: &mut Drawing, y: f64) {
    d.line([0.02, y], [0.98, y], GROUND);
}

fn apartment(rng: &mut Rng) -> Drawing {
    let mut d = Drawing::default();
    d.meta.variant = "apartment".into();
    let ground = rng.random_range(0.86..0.92);
    let floors: usize = rng.random_range(4..=8);
    let bays: usize = rng.random_range(3..=5);
    let width = rng.random_range(0.30..0.48);
    let height = rng.random_range(0.58..0.78);
    let x0 = 0.5 - width / 2.0 + rng.random_range(-0.05..0.05);
    let top = ground - height;
    ground_line(&mut d, ground);
    d.rect(x0, top, x0 + width, ground, OUTLINE);
    let fh = height / floors as f64;
    let bw = width / bays as f64;
    let (mx, my) = (rng.random_range(0.18..0.3), rng.random_range(0.2..0.32));
    for f in 0..floors {
        for b in 0..bays {
            let cx0 = x0 + b as f64 * bw;
            let cy0 = top + f as f64 * fh;
            d.rect(cx0 + mx * bw, cy0 + my * fh, cx0 + (1.0 - mx) * bw, cy0 + (1.0 - my) * fh, GLAZING);
        }
    }
    // parapet
    let p = rng.random_range(0.01..0.03);
    d.line([x0 - p, top], [x0 + width + p, top], OUTLINE);
    d
}

fn industrial(rng: &mut Rng) -> Drawing {
    let mut d = Drawing::default();
    d.meta.variant = "industrial".into();
    let ground = rng.random_range(0.84..0.9);
    let width = rng.random_range(0.72..0.9);
    let wall = rng.random_range(0.2..0.32);
    let rise = rng.random_range(0.06..0.14);
    let x0 = 0.5 - width / 2.0 + rng.random_range(-0.03..0.03);
    let x1 = x0 + width;
    let eave = ground - wall;
    let ridge = eave - rise;
    let mid = (x0 + x1) / 2.0;
    ground_line(&mut d, ground);
    d.rect(x0, eave, x1, ground, OUTLINE);
    d.line([x0, eave], [mid, ridge], OUTLINE);
    d.line([mid, ridge], [x1, eave], OUTLINE);
    // trusses: vertical posts up to the rafters with alternating diagonals
    let panels: usize = rng.random_range(4..=8) * 2;
    let roof_y = |x: f64| eave - rise * (1.0 - ((x - mid) / (width / 2.0)).abs());
    for i in 1..panels {
        let x = x0 + width * i as f64 / panels as f64;
        d.line([x, eave], [x, roof_y(x)], STEEL);
        let (xa, xb) = if i <= panels / 2 {
            (x, x0 + width * (i - 1) as f64 / panels as f64)
        } else {
            (x, x0 + width * (i + 1) as f64 / panels as f64)
        };
        d.line([xa, roof_y(xa)], [xb, eave], STEEL);
    }
    let doors: usize = rng.random_range(1..=3);
    let slot = width / doors as f64;
    for k in 0..doors {
        let dw = slot * rng.random_range(0.3..0.5);
        let cx = x0 + slot * (k as f64 + 0.5);
        let dh = wall * rng.random_range(0.55..0.8);
        d.rect(cx - dw / 2.0, ground - dh, cx + dw / 2.0, ground, OUTLINE);
    }
    d
}

fn tower(rng: &mut Rng, d: &mut Drawing, ground: f64) {
    d.meta.variant = "tower".into();
    let width = rng.random_range(0.1..0.18);
    let height = rng.random_range(0.6..0.8);
    let x0 = 0.5 - width / 2.0 + rng.random_range(-0.08..0.08);
    let x1 = x0 + width;
    let top = ground - height;
    let taper = rng.random_range(0.0..0.35) * width;
    let segs: usize = rng.random_range(4..=7);
    let left = |y: f64| x0 + taper * (ground - y) / height;
    let right = |y: f64| x1 - taper * (ground - y) / height;
    d.line([x0, ground], [left(top), top], OUTLINE);
    d.line([x1, ground], [right(top), top], OUTLINE);
    for s in 0..segs {
        let ya = ground - height * s as f64 / segs as f64;
        let yb = ground - height * (s + 1) as f64 / segs as f64;
        d.line([left(yb), yb], [right(yb), yb], OUTLINE);
        d.line([left(ya), ya], [right(yb), yb], STEEL);
        d.line([right(ya), ya], [left(yb), yb], STEEL);
    }
    let mast = rng.random_range(0.04..0.1);
    d.line([(x0 + x1) / 2.0, top], [(x0 + x1) / 2.0, top - mast], OUTLINE);
}

fn bridge(rng: &mut Rng, d: &mut Drawing, ground: f64) {
    d.meta.variant = "bridge".into();
    let deck = ground - rng.random_range(0.25..0.4);
    let thick = rng.random_range(0.02..0.04);
    d.line([0.04, deck], [0.96, deck], OUTLINE);
    d.line([0.04, deck + thick], [0.96, deck + thick], OUTLINE);
    let spans: usize = rng.random_range(2..=3);
    let span = 0.92 / spans as f64;
    for s in 0..=spans {
        let x = 0.04 + span * s as f64;
        let pw = rng.random_range(0.015..0.03);
        d.rect(x - pw, deck + thick, x + pw, ground, OUTLINE);
    }
    if rng.random_bool(0.5) {
        // arches as polylines under each span
        for s in 0..spans {
            let xa = 0.04 + span * s as f64;
            let n = 10;
            for i in 0..n {
                let t0 = i as f64 / n as f64;
                let t1 = (i + 1) as f64 / n as f64;
                let y = |t: f64| deck + thick + (ground - deck - thick) * (1.0 - 4.0 * t * (1.0 - t)) * 0.8;
                d.line([xa + span * t0, y(t0)], [xa + span * t1, y(t1)], STEEL);
            }
        }
    } else {
        // cable-stayed pylons
        let pylon_h = rng.random_range(0.2..0.35);
        for s in 1..spans.max(2) {
            let x = 0.04 + span * s as f64;
            d.line([x, deck], [x, deck - pylon_h], OUTLINE);
            for c in 1..=4 {
                let off = span * 0.45 * c as f64 / 4.0;
                d.line([x, deck - pylon_h], [x - off, deck], STEEL);
                d.line([x, deck - pylon_h], [x + off, deck], STEEL);
            }
        }
    }
}

fn tank(rng: &mut Rng, d: &mut Drawing, ground: f64) {
    d.meta.variant = "tank".into();
    let n: usize = rng.random_range(1..=3);
    let slot = 0.8 / n as f64;
    for k in 0..n {
        let cx = 0.1 + slot * (k as f64 + 0.5);
        let r = slot * rng.random_range(0.3..0.42);
        if rng.random_bool(0.5) {
            // sphere on legs
            let cy = ground - r - rng.random_range(0.08..0.16);
            d.ellipse(cx, cy, r, r, OUTLINE);
            d.ellipse(cx, cy, r, r * 0.25, STEEL);
            d.line([cx - r * 0.7, cy + r * 0.7], [cx - r * 0.8, ground], OUTLINE);
            d.line([cx + r * 0.7, cy + r * 0.7], [cx + r * 0.8, ground], OUTLINE);
        } else {
            // vertical cylinder
            let h = rng.random_range(0.25..0.5);
            let ry = r * 0.25;
            d.ellipse(cx, ground - h, r, ry, OUTLINE);
            d.line([cx - r, ground - h], [cx - r, ground], OUTLINE);
            d.line([cx + r, ground - h], [cx + r, ground], OUTLINE);
            d.ellipse(cx, ground, r, ry, STEEL);
        }
    }
}

fn mixed(rng: &mut Rng, d: &mut Drawing, ground: f64) {
    d.meta.variant = "mixed".into();
    // small gabled house, a chimney stack and a round element
    let hx = rng.random_range(0.08..0.25);
    let hw = rng.random_range(0.2..0.3);
    let hh = rng.random_range(0.15..0.25);
    d.rect(hx, ground - hh, hx + hw, ground, OUTLINE);
    let peak = ground - hh - rng.random_range(0.08..0.15);
    d.line([hx, ground - hh], [hx + hw / 2.0, peak], OUTLINE);
    d.line([hx + hw / 2.0, peak], [hx + hw, ground - hh], OUTLINE);
    let sx = rng.random_range(0.6..0.8);
    let sw = rng.random_range(0.04..0.07);
    let sh = rng.random_range(0.45..0.7);
    d.rect(sx, ground - sh, sx + sw, ground, STEEL);
    for b in 1..=3 {
        let y = ground - sh * b as f64 / 4.0;
        d.line([sx, y], [sx + sw, y], STEEL);
    }
    let r = rng.random_range(0.05..0.09);
    d.ellipse(rng.random_range(0.45..0.55), ground - r - rng.random_range(0.0..0.2), r, r, OUTLINE);
}

fn other(rng: &mut Rng) -> Drawing {
    let mut d = Drawing::default();
    let ground = rng.random_range(0.86..0.92);
    ground_line(&mut d, ground);
    match rng.random_range(0..4u32) {
        0 => tower(rng, &mut d, ground),
        1 => bridge(rng, &mut d, ground),
        2 => tank(rng, &mut d, ground),
        _ => mixed(rng, &mut d, ground),
    }
    d
}

fn base_drawing(class: StructureClass, structure_seed: u64) -> Drawing {
    let mut rng = rng_from_seed(derive_seed(structure_seed, 0));
    match class {
        StructureClass::ApartmentBuilding => apartment(&mut rng),
        StructureClass::IndustrialBuilding => industrial(&mut rng),
        StructureClass::Other => other(&mut rng),
    }
}

/// Affine map from unit drawing coordinates to pixel coordinates.
#[derive(Debug, Clone, Copy)]
struct ViewTransform {
    m: [[f64; 2]; 2],
    t: [f64; 2],
}

impl ViewTransform {
    fn for_view(structure_seed: u64, view_index: usize, size: usize) -> ViewTransform {
        let mut rng = rng_from_seed(derive_seed(structure_seed, 1 + view_index as u64));
        let scale = rng.random_range(0.8..1.0);
        let aniso = rng.random_range(0.8..1.15);
        let shear_x = rng.random_range(-0.3..0.3);
        let shear_y = rng.random_range(-0.12..0.12);
        let rot = rng.random_range(-6.0f64..6.0).to_radians();
        let mirror = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let tx = rng.random_range(-0.04..0.04);
        let ty = rng.random_range(-0.04..0.04);
        // M = R(rot) * Shear * diag(mirror * scale * aniso, scale)
        let sx = mirror * scale * aniso;
        let sy = scale;
        let sh = [[sx, shear_x * sy], [shear_y * sx, sy]];
        let (c, s) = (rot.cos(), rot.sin());
        let m = [
            [c * sh[0][0] - s * sh[1][0], c * sh[0][1] - s * sh[1][1]],
            [s * sh[0][0] + c * sh[1][0], s * sh[0][1] + c * sh[1][1]],
        ];
        let px = size as f64;
        let centre = [0.5, 0.55];
        // p_pix = px * (M (p - centre) + centre + t)
        let t = [
            px * (centre[0] + tx - m[0][0] * centre[0] - m[0][1] * centre[1]),
            px * (centre[1] + ty - m[1][0] * centre[0] - m[1][1] * centre[1]),
        ];
        let m = [[px * m[0][0], px * m[0][1]], [px * m[1][0], px * m[1][1]]];
        ViewTransform { m, t }
    }

    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.t[0],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.t[1],
        ]
    }
}

struct Canvas {
    img: Image,
    half_width: f64,
}

impl Canvas {
    fn new(size: usize) -> Canvas {
        Canvas {
            img: Image::filled(size, size, 3, 1.0).expect("size checked by caller"),
            half_width: (size as f64 / 224.0).max(0.5),
        }
    }

    /// Anti-aliased stroke; darker ink always wins over lighter ink.
    fn segment(&mut self, a: [f64; 2], b: [f64; 2], ink: Ink) {
        let hw = self.half_width;
        let reach = hw + 1.0;
        let (h, w) = (self.img.height() as f64, self.img.width() as f64);
        let xmin = (a[0].min(b[0]) - reach).floor().max(0.0);
        let xmax = (a[0].max(b[0]) + reach).ceil().min(w - 1.0);
        let ymin = (a[1].min(b[1]) - reach).floor().max(0.0);
        let ymax = (a[1].max(b[1]) + reach).ceil().min(h - 1.0);
        if xmin > xmax || ymin > ymax {
            return;
        }
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        for y in ymin as usize..=ymax as usize {
            for x in xmin as usize..=xmax as usize {
                let p = [x as f64 - a[0], y as f64 - a[1]];
                let t = if len2 > 0.0 { ((p[0] * d[0] + p[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let q = [p[0] - t * d[0], p[1] - t * d[1]];
                let dist = (q[0] * q[0] + q[1] * q[1]).sqrt();
                let cover = (hw + 0.5 - dist).clamp(0.0, 1.0);
                if cover <= 0.0 {
                    continue;
                }
                let px = self.img.pixel_mut(y, x);
                for c in 0..3 {
                    let v = 1.0 - cover * (1.0 - ink[c]);
                    if v < px[c] {
                        px[c] = v;
                    }
                }
            }
        }
    }
}

fn rasterize(drawing: &Drawing, view: &ViewTransform, size: usize) -> Image {
    let mut canvas = Canvas::new(size);
    for (shape, ink) in &drawing.shapes {
        match *shape {
            Shape::Line(a, b) => canvas.segment(view.apply(a), view.apply(b), *ink),
            Shape::Rect { x0, y0, x1, y1 } => {
                let c = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]].map(|p| view.apply(p));
                for i in 0..4 {
                    canvas.segment(c[i], c[(i + 1) % 4], *ink);
                }
            }
            Shape::Ellipse { cx, cy, rx, ry } => {
                const STEPS: usize = 48;
                let pt = |i: usize| {
                    let a = std::f64::consts::TAU * i as f64 / STEPS as f64;
                    view.apply([cx + rx * a.cos(), cy + ry * a.sin()])
                };
                for i in 0..STEPS {
                    canvas.segment(pt(i), pt(i + 1), *ink);
                }
            }
        }
    }
    canvas.img
}

/// Renders one view of one structure as a `size x size` RGB image.
pub fn render_structure(
    class: StructureClass,
    structure_seed: u64,
    view_index: usize,
    size: usize,
) -> Result<Image, SynthError> {
    render_with_meta(class, structure_seed, view_index, size).map(|(img, _)| img)
}

/// Like [`render_structure`], also returning the recipe's primitive counts.
pub fn render_with_meta(
    class: StructureClass,
    structure_seed: u64,
    view_index: usize,
    size: usize,
) -> Result<(Image, RenderMeta), SynthError> {
    if size < 32 {
        return Err(SynthError::InvalidDimension(format!("size {size} < 32")));
    }
    if view_index > 3 {
        return Err(SynthError::InvalidArgument(format!("view index {view_index} > 3")));
    }
    let drawing = base_drawing(class, structure_seed);
    let view = ViewTransform::for_view(structure_seed, view_index, size);
    Ok((rasterize(&drawing, &view, size), drawing.meta))
}

/// Views rendered per structure.
pub const VIEWS_PER_STRUCTURE: usize = 4;

/// Seed of structure `group_id` under a dataset master seed.
pub fn structure_seed(master_seed: u64, group_id: usize) -> u64 {
    derive_seed(master_seed, group_id as u64)
}

/// Writes `per_class_groups * 3` structures with four views each under
/// `out_dir/<class>/`, plus `manifest.csv` and `render_meta.csv`.
///
/// Group ids are assigned class-major: apartment groups first, then
/// industrial, then other.
pub fn generate_dataset(
    out_dir: impl AsRef<Path>,
    per_class_groups: usize,
    seed: u64,
    size: usize,
) -> Result<Manifest, SynthError> {
    let out_dir = out_dir.as_ref();
    if per_class_groups == 0 {
        return Err(SynthError::InvalidArgument("per_class_groups must be >= 1".into()));
    }
    if size < 32 {
        return Err(SynthError::InvalidDimension(format!("size {size} < 32")));
    }
    let io = |e: std::io::Error| SynthError::Io(e.to_string());
    for class in StructureClass::ALL {
        fs::create_dir_all(out_dir.join(class.name())).map_err(io)?;
    }
    let groups: Vec<(usize, StructureClass)> = StructureClass::ALL
        .into_iter()
        .flat_map(|c| (0..per_class_groups).map(move |j| (c.code() * per_class_groups + j, c)))
        .collect();
    let rendered: Vec<Result<Vec<(ManifestEntry, RenderMeta)>, SynthError>> = groups
        .par_iter()
        .map(|&(group_id, class)| {
            let s = structure_seed(seed, group_id);
            (0..VIEWS_PER_STRUCTURE)
                .map(|view| {
                    let (img, meta) = render_with_meta(class, s, view, size)?;
                    let rel = format!("{}/g{group_id:03}_v{view}.png", class.name());
                    save_image(&img, out_dir.join(&rel)).map_err(|e| SynthError::Io(e.to_string()))?;
                    Ok((ManifestEntry { path: rel, label: class, group_id, view_index: view }, meta))
                })
                .collect()
        })
        .collect();
    let mut entries = Vec::with_capacity(groups.len() * VIEWS_PER_STRUCTURE);
    let mut meta_csv = String::from("path,variant,rectangles,lines,diagonals,circles\n");
    for group in rendered {
        for (entry, meta) in group? {
            meta_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                entry.path, meta.variant, meta.rectangles, meta.lines, meta.diagonals, meta.circles
            ));
            entries.push(entry);
        }
    }
    let manifest = Manifest { entries };
    write_manifest(&manifest, out_dir.join("manifest.csv")).map_err(|e| SynthError::Io(e.to_string()))?;
    fs::write(out_dir.join("render_meta.csv"), meta_csv).map_err(io)?;
    Ok(manifest)
}

//! Road-profile correlation and building-boundary matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Grid;

pub type Point = (f64, f64);

/// An open polyline in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub id: String,
    pub vertices: Vec<Point>,
}

impl Polyline {
    pub fn new(id: impl Into<String>, vertices: Vec<Point>) -> Result<Self> {
        let id = id.into();
        if vertices.len() < 2 {
            return Err(Error::Validation(format!("polyline {id} needs at least 2 vertices")));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("polyline {id} repeats a vertex")));
        }
        if vertices.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::Validation(format!("polyline {id} has a non-finite vertex")));
        }
        Ok(Self { id, vertices })
    }

    pub fn length(&self) -> f64 {
        path_length(&self.vertices)
    }
}

pub fn path_length(v: &[Point]) -> f64 {
    v.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
}

/// A simple polygon stored as an open ring (the closing vertex is implied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub id: String,
    pub ring: Vec<Point>,
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| {
        let v = (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let on_seg = |p: Point, q: Point, r: Point| {
        r.0 >= p.0.min(q.0) && r.0 <= p.0.max(q.0) && r.1 >= p.1.min(q.1) && r.1 <= p.1.max(q.1)
    };
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return true;
    }
    (o1 == 0 && on_seg(a, b, c)) || (o2 == 0 && on_seg(a, b, d)) || (o3 == 0 && on_seg(c, d, a)) || (o4 == 0 && on_seg(c, d, b))
}

impl Polygon {
    /// Accepts the ring with or without a repeated closing vertex.
    pub fn new(id: impl Into<String>, mut ring: Vec<Point>) -> Result<Self> {
        let id = id.into();
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(Error::Validation(format!("polygon {id} needs at least 3 distinct vertices")));
        }
        if ring.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::Validation(format!("polygon {id} has a non-finite vertex")));
        }
        let poly = Self { id, ring };
        if !(poly.area() > 0.0) {
            return Err(Error::Validation(format!("polygon {} has zero area", poly.id)));
        }
        let n = poly.ring.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (poly.ring[i], poly.ring[(i + 1) % n]);
                let (c, d) = (poly.ring[j], poly.ring[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return Err(Error::Validation(format!("polygon {} self-intersects", poly.id)));
                }
            }
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(id: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(id, vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    pub fn area(&self) -> f64 {
        let n = self.ring.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = (self.ring[i], self.ring[(i + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        twice.abs() / 2.0
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.ring.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.ring[i], self.ring[j]);
            if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        self.ring.iter().fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |b, p| {
            (b.0.min(p.0), b.1.min(p.1), b.2.max(p.0), b.3.max(p.1))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolygonSet {
    pub polygons: Vec<Polygon>,
}

impl PolygonSet {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        Self { polygons }
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }
}

/// Inserts points every `step` metres along each segment; original vertices
/// are kept and the last sub-segment of each segment may be shorter.
pub fn densify_polyline(p: &Polyline, step: f64) -> Result<Vec<Point>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!("densify step must be positive, got {step}")));
    }
    let mut out = vec![p.vertices[0]];
    for w in p.vertices.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let mut j = 1;
        while (j as f64) * step < len * (1.0 - 1e-12) {
            let t = j as f64 * step / len;
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            j += 1;
        }
        out.push(b);
    }
    Ok(out)
}

/// Nearest-cell elevations at each vertex; nodata cells give `None`.
pub fn extract_profile(g: &Grid, vertices: &[Point]) -> Result<Vec<Option<f64>>> {
    vertices
        .iter()
        .map(|&(x, y)| {
            let (r, c) = g
                .cell_at(x, y)
                .ok_or_else(|| Error::OutOfBounds(format!("vertex ({x}, {y}) lies outside the grid extent")))?;
            Ok(g.is_valid_at(r, c).then(|| g.get(r, c)))
        })
        .collect()
}

pub fn pearson_cc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("sequences of length {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} samples", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadProfile {
    pub id: String,
    pub samples: usize,
    pub pcc: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub roads: Vec<RoadProfile>,
    pub mean_pcc: Option<f64>,
    pub std_pcc: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
    pub sampling: String,
}

/// PCC between reconstructed and reference profiles of each road, sampled
/// at the reconstruction's cell size. Samples where either profile is
/// nodata are dropped.
pub fn road_profile_report(recon: &Grid, reference: &Grid, roads: &[Polyline]) -> Result<ProfileReport> {
    if roads.is_empty() {
        return Err(Error::Validation("no roads to evaluate".into()));
    }
    let mut out = Vec::with_capacity(roads.len());
    for road in roads {
        let pts = densify_polyline(road, recon.cell_size)?;
        let a = extract_profile(recon, &pts)?;
        let b = extract_profile(reference, &pts)?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = a.iter().zip(&b).filter_map(|(p, q)| Some(((*p)?, (*q)?))).unzip();
        let entry = match pearson_cc(&xs, &ys) {
            Ok(r) => RoadProfile { id: road.id.clone(), samples: xs.len(), pcc: Some(r), skipped: None },
            Err(e) => RoadProfile { id: road.id.clone(), samples: xs.len(), pcc: None, skipped: Some(e.to_string()) },
        };
        out.push(entry);
    }
    let pccs: Vec<f64> = out.iter().filter_map(|r| r.pcc).collect();
    let (mean, std) = if pccs.is_empty() {
        (None, None)
    } else {
        let m = pccs.iter().sum::<f64>() / pccs.len() as f64;
        let s = (pccs.iter().map(|p| (p - m).powi(2)).sum::<f64>() / pccs.len() as f64).sqrt();
        (Some(m), Some(s))
    };
    Ok(ProfileReport {
        evaluated: pccs.len(),
        skipped: out.len() - pccs.len(),
        roads: out,
        mean_pcc: mean,
        std_pcc: std,
        sampling: "nearest_cell".into(),
    })
}

/// A set of cells on a raster frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    pub nrows: usize,
    pub ncols: usize,
    cells: Vec<bool>,
}

impl CellSet {
    pub fn empty(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, cells: vec![false; nrows * ncols] }
    }

    pub fn from_mask(nrows: usize, ncols: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != nrows * ncols {
            return Err(Error::Dimension(format!("mask of {} cells for a {nrows}x{ncols} frame", cells.len())));
        }
        Ok(Self { nrows, ncols, cells })
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.ncols + c]
    }

    pub fn insert(&mut self, r: usize, c: usize) {
        self.cells[r * self.ncols + c] = true;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.cells
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i / self.ncols, i % self.ncols))
    }

    /// Cells within Chebyshev distance `radius` of a member.
    pub fn dilate(&self, radius: usize) -> CellSet {
        if radius == 0 {
            return self.clone();
        }
        let (h, w) = (self.nrows, self.ncols);
        let mut rows = vec![false; h * w];
        for r in 0..h {
            for c in 0..w {
                let lo = c.saturating_sub(radius);
                let hi = (c + radius).min(w - 1);
                rows[r * w + c] = (lo..=hi).any(|k| self.cells[r * w + k]);
            }
        }
        let mut out = vec![false; h * w];
        for r in 0..h {
            let lo = r.saturating_sub(radius);
            let hi = (r + radius).min(h - 1);
            for c in 0..w {
                out[r * w + c] = (lo..=hi).any(|k| rows[k * w + c]);
            }
        }
        CellSet { nrows: h, ncols: w, cells: out }
    }

    /// Members with at least one 4-neighbour outside the set (or off the frame).
    pub fn boundary(&self) -> CellSet {
        let (h, w) = (self.nrows, self.ncols);
        let mut out = CellSet::empty(h, w);
        for r in 0..h {
            for c in 0..w {
                if !self.contains(r, c) {
                    continue;
                }
                let edge = r == 0
                    || c == 0
                    || r == h - 1
                    || c == w - 1
                    || !self.contains(r - 1, c)
                    || !self.contains(r + 1, c)
                    || !self.contains(r, c - 1)
                    || !self.contains(r, c + 1);
                if edge {
                    out.insert(r, c);
                }
            }
        }
        out
    }
}

/// Default minimum footprint area in square metres.
pub const MIN_BUILDING_AREA: f64 = 20.0;

/// Rasterized reference footprints on the frame of a template grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBoundary {
    pub filled: CellSet,
    pub boundary: CellSet,
    pub count: usize,
    pub components: usize,
    pub removed_components: usize,
}

/// Fills polygons by cell-centre inclusion, merges touching footprints into
/// 4-connected components, drops components smaller than `min_area`, and
/// returns the cells of each remaining component that touch a non-filled
/// 4-neighbour.
pub fn reference_boundary_raster(polys: &PolygonSet, frame: &Grid, min_area: f64) -> Result<ReferenceBoundary> {
    if polys.is_empty() {
        return Err(Error::Validation("no building polygons".into()));
    }
    let (h, w, cs) = (frame.nrows, frame.ncols, frame.cell_size);
    let mut filled = CellSet::empty(h, w);
    for p in &polys.polygons {
        let (x0, y0, x1, y1) = p.bbox();
        let col_lo = (((x0 - frame.xll) / cs - 0.5).ceil().max(0.0)) as usize;
        let col_hi = ((x1 - frame.xll) / cs - 0.5).floor();
        let rb_lo = (((y0 - frame.yll) / cs - 0.5).ceil().max(0.0)) as usize;
        let rb_hi = ((y1 - frame.yll) / cs - 0.5).floor();
        if col_hi < 0.0 || rb_hi < 0.0 {
            continue;
        }
        let col_hi = (col_hi as usize).min(w - 1);
        let rb_hi = (rb_hi as usize).min(h - 1);
        for rb in rb_lo..=rb_hi {
            for c in col_lo..=col_hi {
                let r = h - 1 - rb;
                if p.contains(frame.cell_center(r, c)) {
                    filled.insert(r, c);
                }
            }
        }
    }
    let mut label = vec![usize::MAX; h * w];
    let mut components = 0;
    let mut removed = 0;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !filled.cells[start] || label[start] != usize::MAX {
            continue;
        }
        let mut members = Vec::new();
        label[start] = components;
        stack.push(start);
        while let Some(i) = stack.pop() {
            members.push(i);
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if filled.cells[j] && label[j] == usize::MAX {
                    label[j] = components;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        components += 1;
        if (members.len() as f64) * cs * cs < min_area {
            removed += 1;
            for i in members {
                filled.cells[i] = false;
            }
        }
    }
    let boundary = filled.boundary();
    let count = boundary.count();
    Ok(ReferenceBoundary { filled, boundary, count, components: components - removed, removed_components: removed })
}

/// The 3x3 high-pass kernel applied to DEMs before thresholding.
pub const HIGH_PASS_KERNEL: [f64; 9] = [-0.7, -1.0, -0.7, -1.0, 6.8, -1.0, -0.7, -1.0, -0.7];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thinning {
    ZhangSuen,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub kernel: [f64; 9],
    pub threshold: f64,
    pub thinning: Thinning,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self { kernel: HIGH_PASS_KERNEL, threshold: 1.0, thinning: Thinning::ZhangSuen }
    }
}

/// Filter response with edge replication. Cells whose stencil touches
/// nodata respond 0.
pub fn high_pass(g: &Grid, kernel: &[f64; 9]) -> Vec<f64> {
    let (h, w) = (g.nrows, g.ncols);
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            let mut valid = true;
            for dr in 0..3 {
                for dc in 0..3 {
                    let rr = (r + dr).saturating_sub(1).min(h - 1);
                    let cc = (c + dc).saturating_sub(1).min(w - 1);
                    let v = g.get(rr, cc);
                    if g.is_nodata(v) {
                        valid = false;
                    }
                    acc += kernel[dr * 3 + dc] * v;
                }
            }
            out[r * w + c] = if valid { acc } else { 0.0 };
        }
    }
    out
}

/// Zhang-Suen thinning; cells off the frame count as background.
pub fn zhang_suen(set: &CellSet) -> CellSet {
    let (h, w) = (set.nrows, set.ncols);
    let mut img = set.cells.clone();
    let at = |img: &[bool], r: isize, c: isize| -> bool {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && img[r as usize * w + c as usize]
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for r in 0..h as isize {
                for c in 0..w as isize {
                    if !at(&img, r, c) {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let p = [
                        at(&img, r - 1, c),
                        at(&img, r - 1, c + 1),
                        at(&img, r, c + 1),
                        at(&img, r + 1, c + 1),
                        at(&img, r + 1, c),
                        at(&img, r + 1, c - 1),
                        at(&img, r, c - 1),
                        at(&img, r - 1, c - 1),
                    ];
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let ok = if pass == 0 { !(p2 && p4 && p6) && !(p4 && p6 && p8) } else { !(p2 && p4 && p8) && !(p2 && p6 && p8) };
                    if ok {
                        remove.push(r as usize * w + c as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                img[i] = false;
            }
        }
        if !changed {
            break;
        }
    }
    CellSet { nrows: h, ncols: w, cells: img }
}

/// High-pass filter, `|response| >= threshold`, then thinning.
pub fn extract_dem_boundaries(recon: &Grid, cfg: &EdgeConfig) -> Result<CellSet> {
    if recon.nrows < 3 || recon.ncols < 3 {
        return Err(Error::Dimension(format!("edge extraction needs at least 3x3 cells, got {}x{}", recon.nrows, recon.ncols)));
    }
    let resp = high_pass(recon, &cfg.kernel);
    let cand = CellSet {
        nrows: recon.nrows,
        ncols: recon.ncols,
        cells: resp.iter().map(|v| v.abs() >= cfg.threshold).collect(),
    };
    Ok(match cfg.thinning {
        Thinning::ZhangSuen => zhang_suen(&cand),
        Thinning::None => cand,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferRatio {
    pub buffer: usize,
    pub selected: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub reference_count: usize,
    pub extracted_count: usize,
    pub buffers: Vec<BufferRatio>,
}

impl BoundaryReport {
    pub fn ratio_at(&self, buffer: usize) -> Option<f64> {
        self.buffers.iter().find(|b| b.buffer == buffer).map(|b| b.ratio)
    }
}

pub const DEFAULT_BUFFERS: [usize; 4] = [0, 1, 2, 3];

/// For each buffer `b`, counts extracted cells within Chebyshev distance `b`
/// of a reference boundary cell, relative to the reference count.
pub fn boundary_match_report(extracted: &CellSet, reference: &CellSet, buffers: &[usize]) -> Result<BoundaryReport> {
    if extracted.nrows != reference.nrows || extracted.ncols != reference.ncols {
        return Err(Error::Dimension("extracted and reference boundaries are on different frames".into()));
    }
    let reference_count = reference.count();
    if reference_count == 0 {
        return Err(Error::Validation("reference boundary is empty".into()));
    }
    let mut sorted = buffers.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let buffers = sorted
        .into_iter()
        .map(|b| {
            let zone = reference.dilate(b);
            let selected = extracted.cells.iter().zip(&zone.cells).filter(|(e, z)| **e && **z).count();
            BufferRatio { buffer: b, selected, ratio: selected as f64 / reference_count as f64 }
        })
        .collect();
    Ok(BoundaryReport { reference_count, extracted_count: extracted.count(), buffers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn densify_counts() {
        let p = Polyline::new("r", vec![(0.0, 0.0), (10.0, 0.0)]).unwrap();
        let d = densify_polyline(&p, 0.5).unwrap();
        assert_eq!(d.len(), 21);
        assert_eq!(densify_polyline(&p, 10.0).unwrap().len(), 2);
        assert_eq!(densify_polyline(&p, 25.0).unwrap().len(), 2);
        assert!(densify_polyline(&p, 0.0).is_err());
    }

    #[test]
    fn polyline_validation() {
        assert!(Polyline::new("a", vec![(0.0, 0.0)]).is_err());
        assert!(Polyline::new("a", vec![(0.0, 0.0), (0.0, 0.0)]).is_err());
    }

    #[test]
    fn profile_lookup() {
        let g = Grid::from_fn(4, 3, 2.0, |r, c| (10 * r + c) as f64).unwrap();
        let (x, y) = g.cell_center(1, 2);
        assert_eq!(extract_profile(&g, &[(x, y)]).unwrap(), vec![Some(12.0)]);
        let ramp: Vec<Point> = (0..4).map(|c| (1.0 + 2.0 * c as f64, 0.5)).collect();
        let prof = extract_profile(&g, &ramp).unwrap();
        assert_eq!(prof, (0..4).map(|c| Some((20 + c) as f64)).collect::<Vec<_>>());
        assert!(matches!(extract_profile(&g, &[(-1.0, 0.0)]), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn pcc_fixed_points() {
        assert_eq!(pearson_cc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pearson_cc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((pearson_cc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(pearson_cc(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn flat_road_is_skipped() {
        let flat = Grid::filled(10, 10, 1.0, 5.0).unwrap();
        let sloped = Grid::from_fn(10, 10, 1.0, |_, c| c as f64).unwrap();
        let roads = vec![
            Polyline::new("a", vec![(0.5, 5.5), (9.5, 5.5)]).unwrap(),
        ];
        let rep = road_profile_report(&sloped, &sloped, &roads).unwrap();
        assert_eq!(rep.mean_pcc, Some(1.0));
        assert_eq!(rep.std_pcc, Some(0.0));
        let rep = road_profile_report(&sloped, &flat, &roads).unwrap();
        assert_eq!(rep.skipped, 1);
        assert!(road_profile_report(&flat, &flat, &[]).is_err());
    }

    fn frame(n: usize, cs: f64) -> Grid {
        Grid::filled(n, n, cs, 0.0).unwrap()
    }

    #[test]
    fn square_boundary_ring() {
        let polys = PolygonSet::new(vec![Polygon::rect("b", 5.0, 5.0, 15.0, 15.0).unwrap()]);
        let rb = reference_boundary_raster(&polys, &frame(40, 0.5), MIN_BUILDING_AREA).unwrap();
        assert_eq!(rb.filled.count(), 400);
        assert_eq!(rb.count, 76);
    }

    #[test]
    fn small_patch_removed() {
        let polys = PolygonSet::new(vec![Polygon::rect("b", 5.0, 5.0, 9.0, 9.0).unwrap()]);
        let rb = reference_boundary_raster(&polys, &frame(40, 0.5), MIN_BUILDING_AREA).unwrap();
        assert_eq!(rb.count, 0);
        assert_eq!(rb.removed_components, 1);
        assert!(reference_boundary_raster(&PolygonSet::default(), &frame(4, 1.0), 20.0).is_err());
    }

    #[test]
    fn abutting_rectangles_merge() {
        let polys = PolygonSet::new(vec![
            Polygon::rect("a", 2.0, 2.0, 8.0, 8.0).unwrap(),
            Polygon::rect("b", 8.0, 2.0, 14.0, 8.0).unwrap(),
        ]);
        let rb = reference_boundary_raster(&polys, &frame(20, 1.0), MIN_BUILDING_AREA).unwrap();
        assert_eq!(rb.components, 1);
        assert_eq!(rb.count, 2 * 12 + 2 * 4);
    }

    #[test]
    fn polygon_checks() {
        assert!(Polygon::new("z", vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(Polygon::new("bow", vec![(0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 2.0)]).is_err());
        let p = Polygon::new("closed", vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (0.0, 0.0)]).unwrap();
        assert_eq!(p.ring.len(), 4);
        assert_eq!(p.area(), 4.0);
    }

    fn box_dem(n: usize, lo: usize, hi: usize, h: f64) -> Grid {
        Grid::from_fn(n, n, 0.5, |r, c| if (lo..hi).contains(&r) && (lo..hi).contains(&c) { h } else { 0.0 }).unwrap()
    }

    #[test]
    fn flat_and_infinite_threshold_empty() {
        let flat = Grid::filled(10, 10, 0.5, 3.0).unwrap();
        assert_eq!(extract_dem_boundaries(&flat, &EdgeConfig::default()).unwrap().count(), 0);
        let dem = box_dem(30, 10, 20, 10.0);
        let cfg = EdgeConfig { threshold: f64::INFINITY, ..Default::default() };
        assert_eq!(extract_dem_boundaries(&dem, &cfg).unwrap().count(), 0);
    }

    #[test]
    fn box_ring_near_footprint_edge() {
        let dem = box_dem(40, 10, 30, 10.0);
        let found = extract_dem_boundaries(&dem, &EdgeConfig::default()).unwrap();
        assert!(found.count() > 0);
        let foot = CellSet::from_mask(40, 40, dem.values().iter().map(|&v| v > 0.0).collect()).unwrap();
        let edge = foot.boundary().dilate(1);
        for (r, c) in found.iter() {
            assert!(edge.contains(r, c), "({r}, {c}) is not within a cell of the footprint edge");
        }
    }

    #[test]
    fn match_report_basics() {
        let mut a = CellSet::empty(20, 20);
        for c in 5..15 {
            a.insert(5, c);
        }
        let same = boundary_match_report(&a, &a, &DEFAULT_BUFFERS).unwrap();
        assert!(same.buffers.iter().all(|b| b.ratio == 1.0));
        let mut far = CellSet::empty(20, 20);
        far.insert(15, 5);
        let rep = boundary_match_report(&far, &a, &DEFAULT_BUFFERS).unwrap();
        assert!(rep.buffers.iter().all(|b| b.ratio == 0.0));
        assert!(boundary_match_report(&a, &CellSet::empty(20, 20), &[1]).is_err());
    }

    #[test]
    fn thinning_keeps_a_line() {
        let mut s = CellSet::empty(5, 10);
        for c in 1..9 {
            s.insert(1, c);
            s.insert(2, c);
        }
        let t = zhang_suen(&s);
        assert!(t.count() >= 6 && t.count() <= 9, "{}", t.count());
    }

    proptest! {
        #[test]
        fn pcc_affine(xs in prop::collection::vec(-100.0f64..100.0, 3..40), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let up: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let down: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((pearson_cc(&xs, &up).unwrap() - 1.0).abs() <= 1e-12);
            prop_assert!((pearson_cc(&xs, &down).unwrap() + 1.0).abs() <= 1e-12);
        }

        #[test]
        fn pcc_bounded(xs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..30)) {
            let (x, y): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
            if let Ok(r) = pearson_cc(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn densify_preserves(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..6), step in 0.1f64..7.0) {
            prop_assume!(pts.windows(2).all(|w| w[0] != w[1]));
            let p = Polyline::new("p", pts.clone()).unwrap();
            let d = densify_polyline(&p, step).unwrap();
            prop_assert!((path_length(&d) - p.length()).abs() <= 1e-9 * p.length().max(1.0));
            let mut k = 0;
            for v in &pts {
                while d[k] != *v { k += 1; }
            }
        }

        #[test]
        fn ratios_monotone(bits in prop::collection::vec(any::<bool>(), 144), refbits in prop::collection::vec(any::<bool>(), 144)) {
            prop_assume!(refbits.iter().any(|&b| b));
            let e = CellSet::from_mask(12, 12, bits).unwrap();
            let r = CellSet::from_mask(12, 12, refbits).unwrap();
            let rep = boundary_match_report(&e, &r, &DEFAULT_BUFFERS).unwrap();
            prop_assert!(rep.buffers.windows(2).all(|w| w[0].ratio <= w[1].ratio));
        }
    }
}

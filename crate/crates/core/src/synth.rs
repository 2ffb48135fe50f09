//! Procedural urban scenes: smooth terrain, a road grid, box buildings and a
//! matching land-cover raster.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::geojson::{buildings_to_geojson, roads_to_geojson};
use crate::eval::{LandCover, Polygon, PolygonSet, Polyline};
use crate::nn::seeded_rng;
use crate::raster::{write_ascii_grid_file, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Edge length of the square scene in cells.
    pub size: usize,
    pub cell_size: f64,
    pub seed: u64,
    /// Total amplitude of the base terrain in metres.
    pub terrain_amplitude: f64,
    /// Shortest terrain wavelength in metres.
    pub correlation_length: f64,
    pub road_spacing: f64,
    pub road_width: f64,
    /// Target fraction of the off-road area covered by buildings.
    pub building_density: f64,
    pub footprint_min: f64,
    pub footprint_max: f64,
    pub height_min: f64,
    pub height_max: f64,
    /// Amplitude of uniform noise added to natural cells; 0 disables it.
    pub noise_amplitude: f64,
    pub xll: f64,
    pub yll: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 512,
            cell_size: 0.5,
            seed: 0,
            terrain_amplitude: 6.0,
            correlation_length: 120.0,
            road_spacing: 64.0,
            road_width: 10.0,
            building_density: 0.3,
            footprint_min: 6.0,
            footprint_max: 24.0,
            height_min: 3.0,
            height_max: 25.0,
            noise_amplitude: 0.0,
            xll: 0.0,
            yll: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_size", self.cell_size),
            ("correlation_length", self.correlation_length),
            ("road_spacing", self.road_spacing),
            ("road_width", self.road_width),
            ("footprint_min", self.footprint_min),
            ("footprint_max", self.footprint_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.size < 8 {
            return Err(Error::Config(format!("scene size must be at least 8 cells, got {}", self.size)));
        }
        if !(0.0..=1.0).contains(&self.building_density) {
            return Err(Error::Config(format!("building density must be in [0, 1], got {}", self.building_density)));
        }
        if self.footprint_min > self.footprint_max || self.height_min > self.height_max || self.height_min < 0.0 {
            return Err(Error::Config("footprint and height ranges must be ordered and non-negative".into()));
        }
        if self.terrain_amplitude < 0.0 || self.noise_amplitude < 0.0 {
            return Err(Error::Config("amplitudes must be non-negative".into()));
        }
        if self.road_width >= self.road_spacing {
            return Err(Error::Config("roads must be narrower than their spacing".into()));
        }
        Ok(())
    }
}

/// One sinusoidal terrain component `a * sin(kx x + ky y + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

/// Smooth base terrain, a sum of low-frequency sinusoids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub offset: f64,
    pub waves: Vec<Wave>,
}

impl Terrain {
    pub fn at(&self, x: f64, y: f64) -> f64 {
        self.offset + self.waves.iter().map(|w| w.amplitude * (w.kx * x + w.ky * y + w.phase).sin()).sum::<f64>()
    }

    /// Upper bound on the gradient magnitude.
    pub fn max_slope(&self) -> f64 {
        self.waves.iter().map(|w| w.amplitude.abs() * w.kx.hypot(w.ky)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub row0: usize,
    pub col0: usize,
    pub nrows: usize,
    pub ncols: usize,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub config: SynthConfig,
    pub dem: Grid,
    /// Terrain without buildings.
    pub base: Grid,
    pub terrain: Terrain,
    pub roads: Vec<Polyline>,
    pub road_mask: Vec<bool>,
    pub buildings: PolygonSet,
    pub footprints: Vec<Building>,
    pub landcover: Grid,
}

impl SynthScene {
    /// Bound on the elevation change between adjacent samples of a road
    /// profile densified at the cell size.
    pub fn road_gradient_bound(&self) -> f64 {
        self.terrain.max_slope() * self.config.cell_size * 2f64.sqrt()
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_ascii_grid_file(&self.dem, dir.join("dem.asc"))?;
        write_ascii_grid_file(&self.landcover, dir.join("landcover.asc"))?;
        std::fs::write(dir.join("roads.geojson"), roads_to_geojson(&self.roads))?;
        std::fs::write(dir.join("buildings.geojson"), buildings_to_geojson(&self.buildings))?;
        Ok(())
    }
}

/// Road strips: horizontal and vertical bands of `road_width` centred on
/// cell-centre lines every `road_spacing` metres, starting half a spacing in.
fn road_lines(cfg: &SynthConfig) -> Vec<usize> {
    let spacing = (cfg.road_spacing / cfg.cell_size).round().max(2.0) as usize;
    let mut lines = Vec::new();
    let mut p = spacing / 2;
    while p < cfg.size {
        lines.push(p);
        p += spacing;
    }
    lines
}

pub fn generate_scene(cfg: &SynthConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let n = cfg.size;
    let cs = cfg.cell_size;

    let n_waves = 5;
    let waves: Vec<Wave> = (0..n_waves)
        .map(|i| {
            let wavelength = cfg.correlation_length * (1.0 + rng.random::<f64>() * 2.0) * (1.0 + i as f64 * 0.5);
            let k = 2.0 * PI / wavelength;
            let theta = rng.random::<f64>() * 2.0 * PI;
            Wave {
                amplitude: cfg.terrain_amplitude / n_waves as f64 * (0.5 + rng.random::<f64>()),
                kx: k * theta.cos(),
                ky: k * theta.sin(),
                phase: rng.random::<f64>() * 2.0 * PI,
            }
        })
        .collect();
    let terrain = Terrain { offset: 20.0 + 10.0 * rng.random::<f64>(), waves };

    let frame = Grid::new(n, n, cs, cfg.xll, cfg.yll, crate::raster::DEFAULT_NODATA, vec![0.0; n * n])?;
    let base_vals: Vec<f64> = (0..n * n)
        .map(|i| {
            let (x, y) = frame.cell_center(i / n, i % n);
            terrain.at(x, y)
        })
        .collect();
    let base = frame.with_values(base_vals)?;

    let half = ((cfg.road_width / cs) / 2.0).round().max(1.0) as usize;
    let lines = road_lines(cfg);
    let mut road_mask = vec![false; n * n];
    for &l in &lines {
        for k in l.saturating_sub(half)..(l + half).min(n) {
            for j in 0..n {
                road_mask[k * n + j] = true;
                road_mask[j * n + k] = true;
            }
        }
    }
    let mut roads = Vec::new();
    let x0 = frame.cell_center(0, 0).0;
    let xn = frame.cell_center(0, n - 1).0;
    for (i, &l) in lines.iter().enumerate() {
        let (_, y) = frame.cell_center(l, 0);
        roads.push(Polyline::new(format!("h{i}"), vec![(x0, y), (xn, y)])?);
        let (x, _) = frame.cell_center(0, l);
        let (ytop, ybot) = (frame.cell_center(0, 0).1, frame.cell_center(n - 1, 0).1);
        roads.push(Polyline::new(format!("v{i}"), vec![(x, ytop), (x, ybot)])?);
    }

    // buildings keep one free cell to roads and to each other
    let mut blocked: Vec<bool> = road_mask.clone();
    let dilate = |m: &mut Vec<bool>| {
        let src = m.clone();
        for r in 0..n {
            for c in 0..n {
                if src[r * n + c] {
                    for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)] {
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if rr >= 0 && cc >= 0 && (rr as usize) < n && (cc as usize) < n {
                            m[rr as usize * n + cc as usize] = true;
                        }
                    }
                }
            }
        }
    };
    dilate(&mut blocked);
    let free_cells = road_mask.iter().filter(|&&b| !b).count();
    let target = (cfg.building_density * free_cells as f64).round() as usize;
    let fmin = ((cfg.footprint_min / cs).round() as usize).max(1);
    let fmax = ((cfg.footprint_max / cs).round() as usize).max(fmin);
    let mut footprints = Vec::new();
    let mut covered = 0usize;
    let max_attempts = 200 + 50 * (target / (fmin * fmin)).max(1);
    let mut attempts = 0;
    while covered < target {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Placement(format!(
                "placed {covered} of {target} building cells after {max_attempts} attempts; lower the density"
            )));
        }
        let h = rng.random_range(fmin..=fmax).min(n);
        let w = rng.random_range(fmin..=fmax).min(n);
        let r0 = rng.random_range(0..=n - h);
        let c0 = rng.random_range(0..=n - w);
        let height = if cfg.height_max > cfg.height_min {
            rng.random_range(cfg.height_min..cfg.height_max)
        } else {
            cfg.height_min
        };
        let clear = (r0..r0 + h).all(|r| (c0..c0 + w).all(|c| !blocked[r * n + c]));
        if !clear {
            continue;
        }
        let mut fp = vec![false; n * n];
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                blocked[r * n + c] = true;
                fp[r * n + c] = true;
            }
        }
        // keep a one-cell gap to later buildings
        for r in r0.saturating_sub(1)..(r0 + h + 1).min(n) {
            for c in c0.saturating_sub(1)..(c0 + w + 1).min(n) {
                blocked[r * n + c] = true;
            }
        }
        covered += h * w;
        footprints.push(Building { row0: r0, col0: c0, nrows: h, ncols: w, height });
    }

    let mut dem_vals = base.values().to_vec();
    let mut lc = vec![0.0; n * n];
    // remainder classes vary per parcel between roads
    let parcel_of = |i: usize| -> usize {
        let (r, c) = (i / n, i % n);
        let pr = lines.iter().filter(|&&l| l <= r).count();
        let pc = lines.iter().filter(|&&l| l <= c).count();
        pr * (lines.len() + 1) + pc
    };
    let parcels = (lines.len() + 1) * (lines.len() + 1);
    let parcel_class: Vec<LandCover> = (0..parcels)
        .map(|_| match rng.random_range(0..10) {
            0..=4 => LandCover::Natural,
            5..=7 => LandCover::MultiSurface,
            _ => LandCover::Other,
        })
        .collect();
    for i in 0..n * n {
        lc[i] = if road_mask[i] { LandCover::Road.code() } else { parcel_class[parcel_of(i)].code() };
    }
    let mut polys = Vec::with_capacity(footprints.len());
    for (k, b) in footprints.iter().enumerate() {
        for r in b.row0..b.row0 + b.nrows {
            for c in b.col0..b.col0 + b.ncols {
                dem_vals[r * n + c] += b.height;
                lc[r * n + c] = LandCover::Building.code();
            }
        }
        let x0 = cfg.xll + b.col0 as f64 * cs;
        let x1 = cfg.xll + (b.col0 + b.ncols) as f64 * cs;
        let y1 = cfg.yll + (n - b.row0) as f64 * cs;
        let y0 = cfg.yll + (n - b.row0 - b.nrows) as f64 * cs;
        polys.push(Polygon::rect(format!("b{k}"), x0, y0, x1, y1)?);
    }
    if cfg.noise_amplitude > 0.0 {
        for i in 0..n * n {
            if lc[i] == LandCover::Natural.code() {
                dem_vals[i] += rng.random_range(-cfg.noise_amplitude..cfg.noise_amplitude);
            }
        }
    }

    Ok(SynthScene {
        config: *cfg,
        dem: base.with_values(dem_vals)?,
        base,
        terrain,
        roads,
        road_mask,
        buildings: PolygonSet::new(polys),
        footprints,
        landcover: frame.with_values(lc)?,
    })
}

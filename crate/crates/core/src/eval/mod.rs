//! Accuracy assessment: pointwise error statistics and morphological
//! measures on road profiles and building boundaries.

pub mod geojson;
pub mod morph;
pub mod numeric;

pub use morph::{
    boundary_match_report, densify_polyline, extract_dem_boundaries, extract_profile, pearson_cc,
    reference_boundary_raster, road_profile_report, BoundaryReport, CellSet, EdgeConfig, Polygon, PolygonSet,
    Polyline, ProfileReport, ReferenceBoundary, Thinning, DEFAULT_BUFFERS, HIGH_PASS_KERNEL, MIN_BUILDING_AREA,
};
pub use numeric::{
    error_stats, landcover_binned_stats, slope_binned_stats, BinEntry, BinnedReport, ErrorStats, LandCover,
    DEFAULT_SLOPE_EDGES,
};

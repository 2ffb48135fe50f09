//! The GeoJSON subset used for vectors: a FeatureCollection of LineString
//! (roads) or single-ring Polygon (buildings) features in the grids' planar
//! coordinates.

use std::path::Path;

use serde_json::{json, Value};

use super::morph::{Point, Polygon, PolygonSet, Polyline};
use crate::error::{Error, Result};

fn features(text: &str) -> Result<Vec<Value>> {
    let v: Value = serde_json::from_str(text)?;
    if v.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::GeoJson("top-level object must be a FeatureCollection".into()));
    }
    match v.get("features") {
        Some(Value::Array(fs)) => Ok(fs.clone()),
        _ => Err(Error::GeoJson("FeatureCollection has no features array".into())),
    }
}

fn feature_id(f: &Value, index: usize) -> String {
    let from = |v: &Value| match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    };
    f.get("id")
        .and_then(from)
        .or_else(|| f.get("properties").and_then(|p| p.get("id")).and_then(from))
        .unwrap_or_else(|| index.to_string())
}

fn geometry<'a>(f: &'a Value, index: usize, want: &str) -> Result<&'a Value> {
    let g = f.get("geometry").ok_or_else(|| Error::GeoJson(format!("feature {index} has no geometry")))?;
    let ty = g.get("type").and_then(Value::as_str).unwrap_or("<missing>");
    if ty != want {
        return Err(Error::GeoJson(format!("feature {index}: unsupported geometry type {ty}, expected {want}")));
    }
    g.get("coordinates").ok_or_else(|| Error::GeoJson(format!("feature {index} has no coordinates")))
}

fn points(v: &Value, index: usize) -> Result<Vec<Point>> {
    let arr = v.as_array().ok_or_else(|| Error::GeoJson(format!("feature {index}: coordinates must be an array")))?;
    arr.iter()
        .map(|p| match p.as_array().map(|a| a.as_slice()) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok((x, y)),
                _ => Err(Error::GeoJson(format!("feature {index}: non-numeric coordinate"))),
            },
            _ => Err(Error::GeoJson(format!("feature {index}: positions need two numbers"))),
        })
        .collect()
}

pub fn read_roads(text: &str) -> Result<Vec<Polyline>> {
    features(text)?
        .iter()
        .enumerate()
        .map(|(i, f)| Polyline::new(feature_id(f, i), points(geometry(f, i, "LineString")?, i)?))
        .collect()
}

pub fn read_buildings(text: &str) -> Result<PolygonSet> {
    let polys = features(text)?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let rings = geometry(f, i, "Polygon")?
                .as_array()
                .ok_or_else(|| Error::GeoJson(format!("feature {i}: polygon coordinates must be an array")))?;
            if rings.len() != 1 {
                return Err(Error::GeoJson(format!("feature {i}: polygons with holes are not supported")));
            }
            Polygon::new(feature_id(f, i), points(&rings[0], i)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolygonSet::new(polys))
}

pub fn roads_to_geojson(roads: &[Polyline]) -> String {
    let fs: Vec<Value> = roads
        .iter()
        .map(|r| {
            json!({
                "type": "Feature",
                "id": r.id,
                "properties": {},
                "geometry": {"type": "LineString", "coordinates": r.vertices.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>()},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": fs}).to_string()
}

pub fn buildings_to_geojson(polys: &PolygonSet) -> String {
    let fs: Vec<Value> = polys
        .polygons
        .iter()
        .map(|p| {
            let mut ring: Vec<[f64; 2]> = p.ring.iter().map(|q| [q.0, q.1]).collect();
            ring.push(ring[0]);
            json!({
                "type": "Feature",
                "id": p.id,
                "properties": {},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": fs}).to_string()
}

pub fn read_roads_file(path: impl AsRef<Path>) -> Result<Vec<Polyline>> {
    read_roads(&std::fs::read_to_string(path)?)
}

pub fn read_buildings_file(path: impl AsRef<Path>) -> Result<PolygonSet> {
    read_buildings(&std::fs::read_to_string(path)?)
}

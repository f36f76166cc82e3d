//! Curve and field output: per-vertex CSV, GeoJSON line strings, raw-float
//! scalar fields with a descriptor, and an SVG overview.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fieldgrid::ScalarField;
use crate::geometry::BoundingBox;
use crate::ingest::{write_dataset, DatasetDescriptor, DatasetKind, Units};
use crate::tensor::{Point2, Vec2};
use crate::vortex::{ReportedCurve, VortexBoundaryReport};

pub const CSV_HEADER: [&str; 8] = ["curve_id", "family_id", "outermost", "parameter", "s_index", "x1", "x2", "phi"];

/// Family id given to curves that cross another curve.
pub const NO_FAMILY: i64 = -1;

/// One reported curve with its identifiers and summary diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRecord {
    pub curve_id: usize,
    pub family_id: i64,
    pub outermost: bool,
    pub parameter: f64,
    pub winding: i32,
    pub closure_residual: f64,
    pub null_residual: f64,
    pub stretch_error: f64,
    #[serde(skip)]
    pub vertices: Vec<(Point2, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    curve_id: usize,
    family_id: i64,
    outermost: bool,
    parameter: f64,
    s_index: usize,
    x1: f64,
    x2: f64,
    phi: f64,
}

fn record(id: usize, family_id: i64, outermost: bool, c: &ReportedCurve) -> CurveRecord {
    CurveRecord {
        curve_id: id,
        family_id,
        outermost,
        parameter: c.parameter,
        winding: c.curve.winding,
        closure_residual: c.curve.closure_residual,
        null_residual: c.diagnostics.null_residual,
        stretch_error: c.diagnostics.stretch_error,
        vertices: c.curve.vertices.clone(),
    }
}

/// Records in output order: families in report order, then curves crossing
/// other curves.
pub fn curve_records(report: &VortexBoundaryReport) -> Vec<CurveRecord> {
    let mut out = Vec::new();
    for (f, fam) in report.families.iter().enumerate() {
        for (k, c) in fam.curves.iter().enumerate() {
            out.push(record(out.len(), f as i64, k == fam.outermost_index, c));
        }
    }
    for c in &report.invalid_nesting {
        out.push(record(out.len(), NO_FAMILY, false, c));
    }
    out
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_curves_csv(records: &[CurveRecord], path: &Path) -> Result<()> {
    write_curves_csv_to(records, fs::File::create(path)?)
}

pub fn write_curves_csv_to<W: io::Write>(records: &[CurveRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        for (s, (x, phi)) in r.vertices.iter().enumerate() {
            let row = CsvRow {
                curve_id: r.curve_id,
                family_id: r.family_id,
                outermost: r.outermost,
                parameter: r.parameter,
                s_index: s,
                x1: x.x,
                x2: x.y,
                phi: *phi,
            };
            w.serialize(row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A curve read back from `curves.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRows {
    pub curve_id: usize,
    pub family_id: i64,
    pub outermost: bool,
    pub parameter: f64,
    pub vertices: Vec<(Point2, f64)>,
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRows>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let mut out: Vec<CurveRows> = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row.map_err(csv_err)?;
        let v = (Vec2::new(row.x1, row.x2), row.phi);
        match out.last_mut() {
            Some(c) if c.curve_id == row.curve_id => {
                if row.s_index != c.vertices.len() {
                    return Err(Error::Parse(format!("curve {} skips vertex index {}", row.curve_id, c.vertices.len())));
                }
                c.vertices.push(v);
            }
            _ => {
                if row.s_index != 0 {
                    return Err(Error::Parse(format!("curve {} does not start at index 0", row.curve_id)));
                }
                out.push(CurveRows {
                    curve_id: row.curve_id,
                    family_id: row.family_id,
                    outermost: row.outermost,
                    parameter: row.parameter,
                    vertices: vec![v],
                });
            }
        }
    }
    Ok(out)
}

pub fn curves_geojson(records: &[CurveRecord]) -> Value {
    let features: Vec<Value> = records
        .iter()
        .map(|r| {
            let coords: Vec<[f64; 2]> = r.vertices.iter().map(|(x, _)| [x.x, x.y]).collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": r,
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_curves_geojson(records: &[CurveRecord], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&curves_geojson(records)).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `curves.csv` and `curves.geojson` into `dir`.
pub fn export_curves(report: &VortexBoundaryReport, dir: &Path) -> Result<Vec<CurveRecord>> {
    fs::create_dir_all(dir)?;
    let records = curve_records(report);
    write_curves_csv(&records, &dir.join("curves.csv"))?;
    write_curves_geojson(&records, &dir.join("curves.geojson"))?;
    Ok(records)
}

/// Writes `<name>.json` and `<name>.bin` in the dataset format. Masked
/// nodes are stored as NaN.
pub fn export_scalar(field: &ScalarField, dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let g = field.grid();
    let values: Vec<f64> =
        (0..g.len()).map(|k| if field.is_valid_node(k) { field.values()[k] } else { f64::NAN }).collect();
    let descriptor = DatasetDescriptor {
        kind: DatasetKind::Scalar,
        x1_min: g.x1_min(),
        x1_max: g.x1_max(),
        x2_min: g.x2_min(),
        x2_max: g.x2_max(),
        n1: g.n1(),
        n2: g.n2(),
        units: Units::Cartesian,
        times: vec![field.time.unwrap_or(0.0)],
        files: vec![format!("{name}.bin")],
    };
    write_dataset(&dir.join(format!("{name}.json")), &descriptor, &[values])
}

const SVG_WIDTH: f64 = 800.0;
const LEGEND_WIDTH: f64 = 140.0;

/// Blue-to-red ramp over `[0, 1]`.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 200.0 * t).round() as u8;
    let g = (60.0 + 80.0 * (1.0 - (2.0 * t - 1.0).abs())).round() as u8;
    let b = (230.0 - 200.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Standalone SVG: optional grayscale background, one path per curve
/// coloured by parameter, and a legend of parameter values.
pub fn render_svg(report: &VortexBoundaryReport, background: Option<&ScalarField>, path: &Path) -> Result<()> {
    let curves: Vec<&ReportedCurve> = report.all_curves().collect();
    let bbox = match background {
        Some(f) => {
            let g = f.grid();
            BoundingBox { min: Vec2::new(g.x1_min(), g.x2_min()), max: Vec2::new(g.x1_max(), g.x2_max()) }
        }
        None => {
            let pts: Vec<Point2> = curves.iter().flat_map(|c| c.curve.points()).collect();
            if pts.is_empty() {
                BoundingBox { min: Vec2::ZERO, max: Vec2::new(1.0, 1.0) }
            } else {
                let b = BoundingBox::of(&pts);
                let pad = 0.05 * (b.max.x - b.min.x).max(b.max.y - b.min.y).max(f64::MIN_POSITIVE);
                BoundingBox { min: b.min - Vec2::new(pad, pad), max: b.max + Vec2::new(pad, pad) }
            }
        }
    };
    let span = bbox.max - bbox.min;
    let scale = SVG_WIDTH / span.x.max(f64::MIN_POSITIVE);
    let height = (span.y * scale).max(1.0);
    let to_px = |p: Point2| ((p.x - bbox.min.x) * scale, height - (p.y - bbox.min.y) * scale);

    let mut s = String::new();
    let total_w = SVG_WIDTH + LEGEND_WIDTH;
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{height:.1}" viewBox="0 0 {total_w} {height:.1}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{total_w}" height="{height:.1}" fill="white"/>"#).unwrap();

    if let Some(f) = background {
        let g = f.grid();
        let vals: Vec<f64> =
            (0..g.len()).filter(|k| f.is_valid_node(*k)).map(|k| f.values()[k]).filter(|v| v.is_finite()).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (w, h) = (g.h1() * scale, g.h2() * scale);
        writeln!(s, r#"<g id="background">"#).unwrap();
        for k in 0..g.len() {
            let v = f.values()[k];
            if !f.is_valid_node(k) || !v.is_finite() {
                continue;
            }
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let c = (255.0 * t).round() as u8;
            let (px, py) = to_px(g.node_at(k));
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({c},{c},{c})"/>"#,
                px - 0.5 * w,
                py - 0.5 * h,
                w,
                h
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }

    let mut params: Vec<f64> = curves.iter().map(|c| c.parameter).collect();
    params.sort_by(f64::total_cmp);
    params.dedup();
    let colour: BTreeMap<u64, String> = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = if params.len() > 1 { i as f64 / (params.len() - 1) as f64 } else { 0.5 };
            (p.to_bits(), ramp(t))
        })
        .collect();

    writeln!(s, r#"<g id="curves" fill="none" stroke-width="1.5">"#).unwrap();
    for c in &curves {
        let mut d = String::new();
        for (i, p) in c.curve.points().iter().enumerate() {
            let (x, y) = to_px(*p);
            write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
        d.push('Z');
        writeln!(s, r#"<path d="{d}" stroke="{}"/>"#, colour[&c.parameter.to_bits()]).unwrap();
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20">parameter</text>"#, SVG_WIDTH + 10.0).unwrap();
    for (i, p) in params.iter().enumerate() {
        let y = 40.0 + 18.0 * i as f64;
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="14" height="10" fill="{}"/><text x="{}" y="{}">{p}</text>"#,
            SVG_WIDTH + 10.0,
            y - 9.0,
            colour[&p.to_bits()],
            SVG_WIDTH + 30.0,
            y
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    fs::write(path, s)?;
    Ok(())
}

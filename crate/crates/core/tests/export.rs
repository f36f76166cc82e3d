//! Curve tables, GeoJSON, scalar field export and SVG rendering.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use geovortex::export::{
    curve_records, curves_geojson, export_curves, export_scalar, read_curves_csv, render_svg, write_curves_csv_to, CSV_HEADER,
    NO_FAMILY,
};
use geovortex::ingest::{load_dataset, DatasetPayload};
use geovortex::nullgeo::ClosedCurve;
use geovortex::vortex::{select_outermost, CurveDiagnostics, ReportedCurve, VortexBoundaryReport};
use geovortex::{Error, Grid2D, ScalarField, Vec2};

fn reported(center: Vec2, r: f64, n: usize, parameter: f64) -> ReportedCurve {
    // Irrational-looking coordinates exercise the float round trip.
    let vertices: Vec<(Vec2, f64)> =
        (0..n).map(|k| TAU * k as f64 / (n - 1) as f64).map(|t| (center + Vec2::unit(t) * r, t + FRAC_PI_2)).collect();
    ReportedCurve {
        curve: ClosedCurve {
            seed: vertices[0].0,
            vertices,
            alpha: parameter,
            winding: 1,
            closure_residual: 1e-7,
            enclosed_area: PI * r * r,
            arc_length: TAU * r,
        },
        parameter,
        diagnostics: CurveDiagnostics { null_residual: 1e-9, stretch_error: 2e-9, ..Default::default() },
    }
}

fn report(curves: Vec<ReportedCurve>) -> VortexBoundaryReport {
    let (families, invalid_nesting) = select_outermost(curves);
    VortexBoundaryReport { families, invalid_nesting, ..Default::default() }
}

#[test]
fn empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let records = export_curves(&VortexBoundaryReport::default(), dir.path()).unwrap();
    assert!(records.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(csv.trim_end(), CSV_HEADER.join(","));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("curves.geojson")).unwrap()).unwrap();
    assert_eq!(json["type"], "FeatureCollection");
    assert_eq!(json["features"].as_array().unwrap().len(), 0);
}

#[test]
fn one_curve_with_a_hundred_vertices() {
    let r = report(vec![reported(Vec2::new(0.3, -0.2), 0.7, 100, 1.05)]);
    let mut bytes = Vec::new();
    write_curves_csv_to(&curve_records(&r), &mut bytes).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 101);
    let json = curves_geojson(&curve_records(&r));
    let features = json["features"].as_array().unwrap();
    assert_eq!(features.len(), 1);
    assert_eq!(features[0]["geometry"]["type"], "LineString");
    assert_eq!(features[0]["geometry"]["coordinates"].as_array().unwrap().len(), 100);
    assert_eq!(features[0]["properties"]["parameter"], 1.05);
    assert_eq!(features[0]["properties"]["outermost"], true);
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(vec![
        reported(Vec2::ZERO, 1.0, 57, 0.9),
        reported(Vec2::ZERO, 1.0 / 3.0, 41, 1.1),
        reported(Vec2::new(0.5, 0.0), 1.0, 33, 1.0),
    ]);
    let records = export_curves(&r, dir.path()).unwrap();
    let rows = read_curves_csv(&dir.path().join("curves.csv")).unwrap();
    assert_eq!(rows.len(), records.len());
    for (row, rec) in rows.iter().zip(&records) {
        assert_eq!((row.curve_id, row.family_id, row.outermost), (rec.curve_id, rec.family_id, rec.outermost));
        assert_eq!(row.parameter, rec.parameter);
        assert_eq!(row.vertices.len(), rec.vertices.len());
        for (a, b) in row.vertices.iter().zip(&rec.vertices) {
            assert!(a.0.distance(b.0) <= 1e-12 && (a.1 - b.1).abs() <= 1e-12);
        }
    }
    // The offset unit circle crosses the other unit circle.
    assert_eq!(records.iter().filter(|r| r.family_id == NO_FAMILY).count(), 2);
}

#[test]
fn reading_a_missing_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_curves_csv(&dir.path().join("none.csv")), Err(Error::MissingFile(_))));
}

#[test]
fn scalar_field_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid2D::new(0.0, 2.0, 0.0, 1.0, 9, 5).unwrap();
    let values: Vec<Option<f64>> = (0..grid.len()).map(|k| if k == 7 { None } else { Some(k as f64 * 0.1) }).collect();
    let field = ScalarField::with_mask(grid, values, 0.7).unwrap();
    export_scalar(&field, dir.path(), "ftle").unwrap();
    let ds = load_dataset(&dir.path().join("ftle.json")).unwrap();
    let DatasetPayload::Scalar(fields) = ds.payload else { panic!("expected a scalar payload") };
    let back = &fields[0];
    assert!(!back.is_valid_node(7));
    for k in (0..45).filter(|k| *k != 7) {
        assert_eq!(back.values()[k], field.values()[k]);
    }
}

#[test]
fn svg_structure() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(vec![reported(Vec2::new(0.5, 0.5), 0.2, 40, 0.9), reported(Vec2::new(0.5, 0.5), 0.3, 40, 1.1)]);
    let background = ScalarField::from_fn(Grid2D::new(0.0, 1.0, 0.0, 1.0, 11, 11).unwrap(), |p| p.x + p.y).unwrap();
    let path = dir.path().join("curves.svg");
    render_svg(&r, Some(&background), &path).unwrap();
    let svg = std::fs::read_to_string(&path).unwrap();
    assert_eq!(svg.matches("<path").count(), 2);
    assert!(svg.contains(r#"<g id="legend""#) && svg.contains(">0.9<") && svg.contains(">1.1<"));
    assert!(svg.contains(r#"<g id="background">"#));

    render_svg(&r, None, &path).unwrap();
    let svg = std::fs::read_to_string(&path).unwrap();
    assert!(!svg.contains("background"));
    assert!(svg.contains(r#"fill="white""#));
}

#[test]
fn unwritable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let r = VortexBoundaryReport::default();
    assert!(matches!(render_svg(&r, None, &blocker.join("out.svg")), Err(Error::Io(_))));
    assert!(matches!(export_curves(&r, &blocker.join("sub")), Err(Error::Io(_))));
}

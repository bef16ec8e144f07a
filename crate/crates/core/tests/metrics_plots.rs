mod common;

use std::fs;
use std::path::Path;

use common::*;
use romforge::metrics::{emit_coefficient_plot, emit_max_displacement_plot, max_displacement_error, relative_l2, ParameterError};
use romforge::rom::{train_pod_gpr, PodGprRom, RomConfig};

fn rom() -> PodGprRom {
    let data = cylinder_dataset();
    let (train, _) = standard_split(&data);
    train_pod_gpr(&train, &RomConfig::default()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn panels(svg: &str) -> usize {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    for n in doc.descendants() {
        for a in n.attributes() {
            assert!(!a.name().contains("href"), "external reference in {:?}", n.tag_name());
        }
        assert!(!matches!(n.tag_name().name(), "image" | "script" | "use" | "foreignObject"));
    }
    root.children().filter(|c| c.has_tag_name("g")).count()
}

#[test]
fn coefficient_csv_matches_posteriors() {
    let rom = rom();
    let tmp = tempfile::tempdir().unwrap();
    let dts: Vec<f64> = (0..61).map(|i| 20.0 + i as f64).collect();
    let files = emit_coefficient_plot(&rom, &dts, 4, &tmp.path().join("coeffs")).unwrap();
    let (header, rows) = read_csv(&files.csv);
    assert_eq!(header.len(), 13);
    assert_eq!(header[0], "dt");
    assert_eq!(header[1], "mode_1_mean");
    assert_eq!(rows.len(), dts.len());
    for (row, &dt) in rows.iter().zip(&dts) {
        assert_eq!(row[0], dt);
        let post = rom.coefficient_posteriors(dt);
        for k in 0..4 {
            let (lo, hi) = post[k].ci95();
            assert!((row[1 + 3 * k] - post[k].mean).abs() <= 1e-9);
            assert!((row[2 + 3 * k] - lo).abs() <= 1e-9);
            assert!((row[3 + 3 * k] - hi).abs() <= 1e-9);
            assert!(row[2 + 3 * k] <= row[1 + 3 * k] && row[1 + 3 * k] <= row[3 + 3 * k]);
        }
    }
    assert_eq!(panels(&fs::read_to_string(&files.svg).unwrap()), 4);
}

#[test]
fn coefficient_plot_rejects_too_many_modes() {
    let rom = rom();
    let tmp = tempfile::tempdir().unwrap();
    assert!(emit_coefficient_plot(&rom, &[30.0], rom.rank() + 1, &tmp.path().join("c")).is_err());
}

#[test]
fn empty_sweep_gives_header_only_csv() {
    let rom = rom();
    let tmp = tempfile::tempdir().unwrap();
    let files = emit_coefficient_plot(&rom, &[], 2, &tmp.path().join("c")).unwrap();
    let (header, rows) = read_csv(&files.csv);
    assert_eq!(header.len(), 7);
    assert!(rows.is_empty());
    panels(&fs::read_to_string(&files.svg).unwrap());
}

#[test]
fn max_displacement_plot_round_trips_rows() {
    let data = cylinder_dataset();
    let (train, test) = standard_split(&data);
    let rom = train_pod_gpr(&train, &RomConfig::default()).unwrap();
    let rows: Vec<ParameterError> = test
        .matrices()
        .iter()
        .map(|m| ParameterError::compute(m.dwell_time(), &rom.predict(m.dwell_time()).mean_field, &m.final_field()).unwrap())
        .collect();
    let tmp = tempfile::tempdir().unwrap();
    let files = emit_max_displacement_plot(&rows, &tmp.path().join("md")).unwrap();
    let (header, back) = read_csv(&files.csv);
    assert_eq!(header, ["dt", "max_disp_true", "max_disp_pred"]);
    for (r, b) in rows.iter().zip(&back) {
        assert_eq!(b, &vec![r.dwell_time, r.max_disp_true, r.max_disp_pred]);
    }
    assert_eq!(panels(&fs::read_to_string(&files.svg).unwrap()), 1);
}

#[test]
fn metric_examples() {
    let truth = [3.0, 4.0];
    assert_eq!(relative_l2(&truth, &truth).unwrap(), 0.0);
    assert!((relative_l2(&[3.0, 5.0], &truth).unwrap() - 0.2).abs() < 1e-15);
    assert!(relative_l2(&[1.0], &truth).is_err());
    assert!(relative_l2(&[0.0, 0.0], &[0.0, 0.0]).is_err());
    // signed maxima, compared as scalars
    let md = max_displacement_error(&[1.0, -2.5], &[2.0, 1.0]).unwrap();
    assert_eq!((md.max_true, md.max_pred, md.delta), (2.0, 1.0, 1.0));
    let field = [0.01, 0.25, -0.3, 0.125];
    let shifted: Vec<f64> = field.iter().map(|v| v + 0.001).collect();
    assert!((max_displacement_error(&shifted, &field).unwrap().delta - 0.001).abs() < 1e-15);
    assert_eq!(max_displacement_error(&field, &field).unwrap().delta, 0.0);
}

//! Train the POD-GPR surrogate on nine dwell times, evaluate on four held-out
//! ones, save the archive and emit both plot families.
//!
//! cargo run --example pod_gpr_surrogate -- [OUT_DIR]

use std::path::PathBuf;

use romforge::data::{generate_synthetic_dataset, parse_dwell_list, split_dataset, SyntheticConfig};
use romforge::metrics::{emit_coefficient_plot, emit_max_displacement_plot, time_predict, EvalReport};
use romforge::rom::{load_rom, save_rom, train_pod_gpr, RomConfig};

fn main() -> romforge::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("romforge-pod-gpr"));
    let data = generate_synthetic_dataset(&SyntheticConfig {
        n_radial: 5,
        n_theta: 24,
        n_layers: 12,
        dwell_times: parse_dwell_list("20:80:5")?,
        noise_sigma: 0.0,
        seed: 0,
    })?;
    let train_dts = [20.0, 25.0, 35.0, 40.0, 50.0, 55.0, 65.0, 70.0, 80.0];
    let test_dts = [30.0, 45.0, 60.0, 75.0];
    let (train, test) = split_dataset(&data, &train_dts, &test_dts)?;

    let rom = train_pod_gpr(&train, &RomConfig::default())?;
    println!("rank {} capturing {:.6} of the energy", rom.rank(), rom.basis().energy_captured());

    let preds: Vec<Vec<f64>> = test_dts.iter().map(|&dt| rom.predict(dt).mean_field).collect();
    let truths: Vec<Vec<f64>> = test.matrices().iter().map(|m| m.final_field()).collect();
    let report = EvalReport::from_cases(
        "pod-gpr",
        test_dts
            .iter()
            .zip(preds.iter().zip(&truths))
            .map(|(&dt, (p, t))| (dt, p.as_slice(), t.as_slice())),
    )?;
    println!("\n  dt   max true   max pred   rel L2");
    for r in &report.rows {
        println!(
            "{:4} {:10.6} {:10.6} {:8.2e}",
            r.dwell_time, r.max_disp_true, r.max_disp_pred, r.relative_l2
        );
    }
    let t = time_predict(&rom, &test_dts, 20)?;
    println!("\nprediction takes {:.2e} s", t.mean_seconds);

    save_rom(&rom, &out.join("model"))?;
    let back = load_rom(&out.join("model"))?;
    assert_eq!(back.predict(47.5), rom.predict(47.5));

    let sweep: Vec<f64> = (0..=120).map(|i| 20.0 + 0.5 * i as f64).collect();
    let c = emit_coefficient_plot(&rom, &sweep, 4.min(rom.rank()), &out.join("pod_coefficients"))?;
    let m = emit_max_displacement_plot(&report.rows, &out.join("max_displacement"))?;
    println!("wrote {}, {}, {}", out.join("model").display(), c.svg.display(), m.svg.display());
    Ok(())
}

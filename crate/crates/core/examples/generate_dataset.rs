//! Generate the synthetic cylinder dataset and write it to disk.
//!
//! cargo run --example generate_dataset -- [OUT_DIR]

use std::path::PathBuf;

use romforge::data::{generate_synthetic_dataset, load_snapshot_tensor, parse_dwell_list, save_snapshot_tensor, SyntheticConfig};

fn main() -> romforge::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("romforge-dataset"));
    let config = SyntheticConfig {
        n_radial: 5,
        n_theta: 24,
        n_layers: 12,
        dwell_times: parse_dwell_list("20:80:5")?,
        noise_sigma: 0.0,
        seed: 0,
    };
    let data = generate_synthetic_dataset(&config)?;
    save_snapshot_tensor(&data, &out)?;
    println!(
        "{} dwell times, {} nodes, {} steps -> {}",
        data.n_params(),
        data.n_nodes(),
        data.n_steps(),
        out.display()
    );

    for m in data.matrices() {
        let field = m.final_field();
        let max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("  dt = {:>4} s   max final displacement {:.5} mm", m.dwell_time(), max);
    }

    let back = load_snapshot_tensor(&out)?;
    assert_eq!(back, data);
    println!("reloaded: identical");
    Ok(())
}

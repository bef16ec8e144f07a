//! POD-GPR against the graph convolutional autoencoder on the same split.
//! Full GCA training runs to early stopping, which takes a while.
//!
//! cargo run --release --example compare_models -- [MAX_EPOCHS]

use romforge::data::{generate_synthetic_dataset, parse_dwell_list, split_dataset, SyntheticConfig};
use romforge::gca::{build_graph, final_fields, predict_gca, train_gca, GcaTrainConfig};
use romforge::metrics::ParameterError;
use romforge::rom::{train_pod_gpr, RomConfig};

fn main() -> romforge::Result<()> {
    let max_epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
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
    let (train, _) = split_dataset(&data, &train_dts, &test_dts)?;

    let rom = train_pod_gpr(&train, &RomConfig::default())?;
    let graph = build_graph(data.mesh());
    let config = GcaTrainConfig {
        max_epochs,
        ..GcaTrainConfig::default()
    };
    let (gca, history) = train_gca(
        &final_fields(&data, &train_dts)?,
        &final_fields(&data, &[30.0, 60.0])?,
        &graph,
        &config,
    )?;
    println!("GCA trained for {} epochs", history.epochs.len());

    println!("\n  dt   max true   POD-GPR      GCA   |  rel L2 POD-GPR      GCA");
    for dt in test_dts {
        let truth = data.get(dt).unwrap().final_field();
        let p = ParameterError::compute(dt, &rom.predict(dt).mean_field, &truth)?;
        let g = ParameterError::compute(dt, &predict_gca(&gca, &graph, dt)?, &truth)?;
        println!(
            "{dt:4} {:10.6} {:9.6} {:9.6}   | {:14.3e} {:9.3e}",
            p.max_disp_true, p.max_disp_pred, g.max_disp_pred, p.relative_l2, g.relative_l2
        );
    }
    Ok(())
}

//! Train the parameterized graph convolutional autoencoder and predict an
//! unseen dwell time.
//!
//! cargo run --release --example gca_training -- [MAX_EPOCHS]

use romforge::data::{generate_synthetic_dataset, parse_dwell_list, SyntheticConfig};
use romforge::gca::{build_graph, final_fields, parameter_count, predict_gca, train_gca, GcaTrainConfig};
use romforge::metrics::relative_l2;

fn main() -> romforge::Result<()> {
    let max_epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let data = generate_synthetic_dataset(&SyntheticConfig {
        n_radial: 5,
        n_theta: 24,
        n_layers: 12,
        dwell_times: parse_dwell_list("20:80:5")?,
        noise_sigma: 0.0,
        seed: 0,
    })?;
    let graph = build_graph(data.mesh());
    let train = final_fields(&data, &[20.0, 25.0, 35.0, 40.0, 50.0, 55.0, 65.0, 70.0, 80.0])?;
    let val = final_fields(&data, &[30.0, 60.0])?;
    let config = GcaTrainConfig {
        max_epochs,
        ..GcaTrainConfig::default()
    };
    println!(
        "{} nodes, {} edges, {} parameters",
        graph.n_nodes(),
        graph.edges().len(),
        parameter_count(&config.architecture, graph.n_nodes())
    );

    let (model, history) = train_gca(&train, &val, &graph, &config)?;
    for e in history.epochs.iter().step_by((history.epochs.len() / 10).max(1)) {
        println!(
            "epoch {:>4}  lr {:.2e}  train {:.4e}  val {:.4e}  rec {:.4e}  param {:.4e}",
            e.epoch, e.lr, e.train_loss, e.val_loss, e.l_rec, e.l_param
        );
    }
    println!(
        "best epoch {} (val {:.4e}), stopped early: {}",
        history.best_epoch, history.best_val_loss, history.stopped_early
    );

    for dt in [45.0, 75.0] {
        let pred = predict_gca(&model, &graph, dt)?;
        let truth = data.get(dt).unwrap().final_field();
        println!("dt = {dt}: relative L2 {:.3e}", relative_l2(&pred, &truth)?);
    }
    Ok(())
}

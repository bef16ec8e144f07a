//! POD of the stacked training snapshots and the energy captured per rank.

use nalgebra::DMatrix;
use romforge::data::{generate_synthetic_dataset, parse_dwell_list, SyntheticConfig};
use romforge::pod::{compute_pod, energy_fraction};

fn main() -> romforge::Result<()> {
    let data = generate_synthetic_dataset(&SyntheticConfig {
        n_radial: 5,
        n_theta: 24,
        n_layers: 12,
        dwell_times: parse_dwell_list("20,25,35,40,50,55,65,70,80")?,
        noise_sigma: 0.0,
        seed: 0,
    })?;
    let (n_h, n_t) = (data.n_nodes(), data.n_steps());
    let mut snapshots = DMatrix::zeros(n_h, data.n_params() * n_t);
    for (i, m) in data.matrices().iter().enumerate() {
        snapshots.columns_mut(i * n_t, n_t).copy_from(m.values());
    }
    println!("snapshot matrix {} x {}", snapshots.nrows(), snapshots.ncols());

    for threshold in [0.9, 0.99, 0.999, 0.9999, 0.99999] {
        let basis = compute_pod(&snapshots, threshold)?;
        println!(
            "threshold {threshold:<8} rank {:>3}  captured {:.8}",
            basis.rank(),
            basis.energy_captured()
        );
    }

    let basis = compute_pod(&snapshots, 0.9999)?;
    let sv = basis.singular_values();
    println!("\nleading singular values:");
    for (k, s) in sv.iter().take(8).enumerate() {
        println!("  {:>2}  {s:.6e}  E = {:.8}", k + 1, energy_fraction(sv, k + 1)?);
    }

    let field = data.matrices()[4].final_field();
    let coeffs = basis.project(&field)?;
    let back = basis.reconstruct(&coeffs)?;
    let err = field.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / field.iter().map(|a| a * a).sum::<f64>().sqrt();
    println!("\nprojection error of dt = 50 s final field: {err:.3e}");
    Ok(())
}

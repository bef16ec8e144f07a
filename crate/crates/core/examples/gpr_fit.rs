//! Fit a Gaussian process to nine noisy samples and print the posterior.

use romforge::gpr::{fit_gpr, GprConfig};

fn main() -> romforge::Result<()> {
    let x: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
    let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin() + 0.5 * v).collect();
    let gp = fit_gpr(&x, &y, &GprConfig::default())?;
    let k = gp.kernel();
    println!(
        "signal variance {:.4}, length scale {:.4}, jitter {:.2e}, log marginal likelihood {:.4}",
        k.signal_variance,
        k.length_scale,
        gp.jitter(),
        gp.log_marginal_likelihood()
    );
    println!("\n    x      mean      lo95      hi95     truth");
    for i in 0..=20 {
        let xs = -0.1 + 1.2 * i as f64 / 20.0;
        let p = gp.predict(xs);
        let (lo, hi) = p.ci95();
        println!("{xs:6.3} {:9.4} {lo:9.4} {hi:9.4} {:9.4}", p.mean, (6.0 * xs).sin() + 0.5 * xs);
    }
    Ok(())
}

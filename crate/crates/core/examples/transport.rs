//! Wasserstein distances between point clouds and to a Gaussian.

use mckean::measures::{w2_to_gaussian, wasserstein_1d, wasserstein_exact, wasserstein_sliced};
use mckean::DiscreteMeasure;

fn main() -> mckean::Result<()> {
    let a = DiscreteMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.5, -0.5, 2.0, 3.0, -1.0])?;
    let b = DiscreteMeasure::uniform(2, vec![1.5, -0.5, 0.0, 1.0, 2.5, 2.5, -1.0, -1.0])?;
    println!("exact W2 in the plane:  {:.6}", wasserstein_exact(&a, &b, 2)?);
    let sliced = wasserstein_sliced(&a, &b, 2, 512, 1)?;
    println!("sliced W2 (512 dirs):   {:.6} (approximate: {})", sliced.value, sliced.approximate);

    // different sizes are fine on the line
    let x = DiscreteMeasure::uniform(1, vec![0.0, 1.0, 2.0])?;
    let y = DiscreteMeasure::uniform(1, vec![0.5, 1.5])?;
    println!("1-D W1 with sizes 3, 2: {:.6}", wasserstein_1d(&x, &y, 1)?);

    let grid: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0 * 6.0 - 3.0).collect();
    let mu = DiscreteMeasure::uniform(1, grid)?;
    println!("W2 of a uniform grid on [-3, 3] to N(0, 1): {:.6}", w2_to_gaussian(&mu, 0.0, 1.0)?);
    Ok(())
}

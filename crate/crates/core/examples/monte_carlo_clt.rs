//! Monte Carlo moments of normalized partial sums with non-Gaussian
//! innovations, and the Lindeberg ratio behind their Gaussian limit.
//!
//! ```bash
//! cargo run --release --example monte_carlo_clt
//! ```

use aniscale::lab::{mc_moments, McOptions};
use aniscale::oracle::finite_cov;
use aniscale::synth::{lindeberg_ratio, ma_coefficients, Law};
use aniscale::{theory, SpectralModel};

fn main() -> aniscale::Result<()> {
    let m = SpectralModel::lrd(0.5, 0.5)?;
    let opts = McOptions {
        law: Law::Rademacher,
        seed: 2024,
        replicas: 500,
        window: None,
    };
    let xs = [[1.0, 1.0], [0.5, 1.0], [1.0, 0.5]];
    let t = mc_moments(&m, 64.0, 1.0, &xs, &opts)?;
    println!(
        "λ=64 γ=1 rademacher, {} replicas, window {}",
        t.replicas, t.window
    );
    for p in &t.points {
        let exact = finite_cov(&m, 64.0, 1.0, p.x, p.x, 1e-6)?.value;
        println!(
            "  x={:?}  var {:.4} ± {:.4} (exact {:.4})  skew {:+.3} ± {:.3}  kurt {:+.3} ± {:.3}",
            p.x,
            p.variance,
            p.variance_se,
            exact,
            p.skewness,
            p.skewness_se,
            p.excess_kurtosis,
            p.excess_kurtosis_se
        );
    }
    for c in &t.covariances {
        println!("  cov({:?}, {:?}) = {:.4} ± {:.4}", c.x, c.y, c.cov, c.se);
    }

    println!("\nmax weight / ℓ² norm of the partial-sum weights");
    for lam in [32.0, 64.0, 128.0] {
        let coeffs = ma_coefficients(&m, 8 * lam as usize)?;
        let d = theory::normalization(&m, 1.0, lam)?;
        println!("  λ={lam:<4} {:.5}", lindeberg_ratio(&coeffs, lam, 1.0, d)?);
    }
    Ok(())
}

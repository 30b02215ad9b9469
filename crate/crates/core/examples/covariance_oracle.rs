//! Exact covariances of normalized rectangle sums, checked two ways and
//! compared against the scaling limit.
//!
//! ```bash
//! cargo run --release --example covariance_oracle
//! ```

use aniscale::oracle::{
    autocovariance_table, convergence_scan, finite_cov, rect_sum_tolerance, rect_sum_variance,
};
use aniscale::theory::{self, Side};
use aniscale::SpectralModel;

fn main() -> aniscale::Result<()> {
    let m = SpectralModel::lrd(0.5, 1.2)?;

    // Covariance table from a streamed FFT, then lag sums against direct quadrature.
    let table = autocovariance_table(&m, 32, 1024)?;
    println!(
        "r(0,0) = {:.8}  r(1,0) = {:.8}  r(0,1) = {:.8}  (tol {:.1e})",
        table.get(0, 0).unwrap(),
        table.get(1, 0).unwrap(),
        table.get(0, 1).unwrap(),
        table.tolerance()
    );
    for n in [[4u64, 4], [16, 8], [32, 32]] {
        let lag = rect_sum_variance(&table, n[0], n[1])?;
        let spec = finite_cov(
            &m,
            n[0] as f64,
            1.0,
            [1.0, n[1] as f64 / n[0] as f64],
            [1.0, n[1] as f64 / n[0] as f64],
            1e-9,
        )?;
        println!(
            "  {:?}: lag sum {:.6}  spectral {:.6}  bound {:.2e}",
            n,
            lag,
            spec.raw,
            rect_sum_tolerance(&table, n[0], n[1])
        );
    }

    // Approach to κ₊² along γ = 1.
    let kappa = theory::kappa_limit(&m, 1.0, Side::Plus)?;
    println!("\nκ₊² = {kappa:.6}");
    for lam in [64.0, 128.0, 256.0, 512.0] {
        let c = finite_cov(&m, lam, 1.0, [1.0, 1.0], [1.0, 1.0], 1e-6)?;
        println!(
            "  λ={lam:<4} R = {:.6}  ratio {:.4}",
            c.value,
            c.value / kappa
        );
    }

    // Well-balanced point of LRD (0.5, 0.5).
    let wb = SpectralModel::lrd(0.5, 0.5)?;
    let g0 = theory::gamma0(&wb).unwrap();
    let pairs = [([1.0, 1.0], [1.0, 1.0]), ([1.0, 2.0], [2.0, 1.0])];
    let rep = convergence_scan(&wb, g0, &[128.0, 256.0, 512.0], &pairs, 1e-6)?;
    println!("\n{}", rep.to_csv()?);
    Ok(())
}

//! Limit variances κ±²: closed forms next to adaptive quadrature.
//!
//! ```bash
//! cargo run --release --example kappa_constants
//! ```

use aniscale::theory::{self, HurstPair, Side};
use aniscale::SpectralModel;

fn main() -> aniscale::Result<()> {
    println!("fractional Brownian sheet constants");
    for h1 in [0.25, 0.5, 0.75] {
        for h2 in [0.25, 0.5, 0.75] {
            let pair = HurstPair::new(h1, h2)?;
            println!("  H=({h1}, {h2})  κ² = {:.10}", theory::kappa_closed(pair)?);
        }
    }

    println!("\nκ₊² for LRD υ=(υ₁, 1.2) at γ = 1");
    for u1 in [0.25, 0.5, 0.75] {
        let m = SpectralModel::lrd(u1, 1.2)?;
        let k = theory::kappa_detail(&m, 1.0, Side::Plus, true, 1e-8)?;
        println!(
            "  υ₁={u1}: closed {:.10}  quadrature {:.10}  Δ {:.2e}  [{}]",
            k.closed_form.unwrap_or(f64::NAN),
            k.quadrature.unwrap_or(f64::NAN),
            k.delta().unwrap_or(f64::NAN),
            k.formula
        );
    }

    println!("\nquadrature-only constants");
    let cases = [
        (
            "ND (0.5,0.5) γ=2",
            SpectralModel::nd(0.5, 0.5)?,
            2.0,
            Side::Plus,
        ),
        (
            "LRND (0.5,0.8) γ=1.5",
            SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0)?,
            1.5,
            Side::Plus,
        ),
        (
            "LRND (0.5,0.8) γ=0.3",
            SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0)?,
            0.3,
            Side::Minus,
        ),
        (
            "hyperbolic γ=1",
            SpectralModel::hyperbolic(0.4, -0.2)?,
            1.0,
            Side::Plus,
        ),
    ];
    for (name, m, g, side) in cases {
        let k = theory::kappa_detail(&m, g, side, true, 1e-7)?;
        println!("  {name:<22} κ² = {:.8}  ({})", k.value, k.formula);
    }
    Ok(())
}

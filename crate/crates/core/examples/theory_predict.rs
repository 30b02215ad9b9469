//! Scaling exponents and transition points predicted by the theory.
//!
//! ```bash
//! cargo run --release --example theory_predict
//! ```

use aniscale::theory::{self, Side};
use aniscale::SpectralModel;

fn main() -> aniscale::Result<()> {
    let cases = [
        ("LRD", SpectralModel::lrd(0.5, 1.2)?),
        ("ND", SpectralModel::nd(0.5, 0.5)?),
        ("LRND", SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0)?),
        ("hyperbolic", SpectralModel::hyperbolic(0.4, -0.2)?),
    ];
    let gammas = [0.2, 0.5, 1.0, 1.5, 2.0, 3.0];
    for (name, m) in &cases {
        let p = theory::predict(m, &gammas)?;
        println!(
            "{name}: γ₀ = {:?}, H⁺ = {:?}, H⁻ = {:?}",
            p.gamma0, p.h_plus, p.h_minus
        );
        for c in &p.h_curve {
            println!(
                "    γ = {:<4} H = {:.6} {:?}{}",
                c.gamma,
                c.h,
                c.branch,
                if c.log_flag { " (log)" } else { "" }
            );
        }
        for w in &p.warnings {
            println!("    note: {w}");
        }
    }

    // H(γ) is continuous at γ₀.
    let m = &cases[0].1;
    let g0 = theory::gamma0(m).unwrap();
    let plus = theory::hurst_pair(m, Side::Plus)?.at(g0);
    let minus = theory::hurst_pair(m, Side::Minus)?.at(g0);
    println!("\ncontinuity at γ₀: {plus:.12} vs {minus:.12}");

    // LRND exclusions are errors, not silent results.
    match SpectralModel::lrnd2(1.0, 0.8, 0.3, 1.0).and_then(|m| theory::predict(&m, &[1.0])) {
        Err(e) => println!("excluded: {e} (exit code {})", e.exit_code()),
        Ok(_) => println!("unexpectedly accepted"),
    }

    println!("\n{}", theory::predict(m, &[0.2, 1.0])?.to_json()?);
    Ok(())
}

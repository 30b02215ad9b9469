//! The fitting tools on synthetic inputs: power-law and log-corrected
//! exponent fits, and the continuous hinge fit for kinks.
//!
//! ```bash
//! cargo run --release --example exponent_fits
//! ```

use aniscale::lab::{detect_kink, estimate_h};

fn main() -> aniscale::Result<()> {
    let lambdas = [64.0, 128.0, 256.0, 512.0];
    let pure: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|l: &f64| (*l, 3.0 * l.powf(2.5)))
        .collect();
    println!("pure power  {:?}", estimate_h(&pure, false)?);

    let logged: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|l: &f64| (*l, l.powi(4) * l.ln()))
        .collect();
    println!("log, plain  {:?}", estimate_h(&logged, false)?);
    println!("log, fixed  {:?}", estimate_h(&logged, true)?);

    let curve: Vec<(f64, f64)> = (0..12)
        .map(|i| {
            let g = 0.2 + 0.2 * i as f64;
            (
                g,
                if g < 1.0 {
                    0.5 + 0.25 * g
                } else {
                    0.25 + 0.5 * g
                },
            )
        })
        .collect();
    println!("\nkink   {:?}", detect_kink(&curve)?);
    let straight: Vec<(f64, f64)> = curve.iter().map(|&(g, _)| (g, 0.7 + 0.4 * g)).collect();
    println!("no kink {:?}", detect_kink(&straight)?);
    Ok(())
}

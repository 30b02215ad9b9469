//! Build the four model families, evaluate densities and check the
//! anisotropic dilation property.
//!
//! ```bash
//! cargo run --release --example spectral_models
//! ```

use aniscale::model::{ModelSpec, Regime};
use aniscale::SpectralModel;

fn main() -> aniscale::Result<()> {
    let models = [
        SpectralModel::lrd(0.5, 1.2)?,
        SpectralModel::nd(0.5, 0.5)?,
        SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0)?,
        SpectralModel::hyperbolic(0.4, -0.2)?,
    ];
    for m in &models {
        let e = m.exponents();
        println!(
            "{:<11} υ=({:>4}, {:>4})  Υ={:.4}  class={:?}  hash={}",
            m.regime(),
            e.upsilon1,
            e.upsilon2,
            e.integrability_index(),
            m.classify_spectrum(),
            m.hash()
        );
        for u in [[1.0, 1.0], [0.5, 0.5], [0.01, 0.2], [0.2, 0.01]] {
            println!(
                "    f({:>5}, {:>5}) = {:.6}",
                u[0],
                u[1],
                m.spectral_density(u)
            );
        }
    }

    // f(λ^{1/υ₁}u₁, λ^{1/υ₂}u₂) = λ^{-1} f(u) for LRD.
    let lrd = &models[0];
    let e = lrd.exponents();
    let u = [0.3, 0.7];
    for lam in [0.1f64, 0.5] {
        let v = [
            lam.powf(1.0 / e.upsilon1) * u[0],
            lam.powf(1.0 / e.upsilon2) * u[1],
        ];
        println!(
            "dilation λ={lam}: λ·f(λ·u)/f(u) = {:.15}",
            lam * lrd.spectral_density(v) / lrd.spectral_density(u)
        );
    }

    // Models round-trip through their TOML form.
    let spec = ModelSpec::new(Regime::Lrd, 0.5, 0.5).with_angular("1 + 0.5*s1*s1");
    let text = spec.to_text()?;
    println!("\n{text}");
    let back = ModelSpec::from_text(&text)?.build()?;
    println!(
        "f(1,1) with profile: {:.6}",
        back.spectral_density([1.0, 1.0])
    );
    Ok(())
}

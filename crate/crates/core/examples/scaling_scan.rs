//! A γ × λ scan: exponent fits per γ, kink detection across γ, and the
//! report files (CSV, JSON, gnuplot script).
//!
//! ```bash
//! cargo run --release --example scaling_scan -- /tmp/scan
//! ```

use std::path::PathBuf;

use aniscale::lab::{transition_report, ScanConfig};
use aniscale::SpectralModel;

fn main() -> aniscale::Result<()> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/scaling_scan".into()),
    );
    let gammas: Vec<f64> = (1..=12).map(|i| 0.2 * i as f64).collect();
    let config = ScanConfig::new(gammas, vec![64.0, 128.0, 256.0, 512.0]);

    for m in [
        SpectralModel::lrd(0.5, 1.2)?,
        SpectralModel::hyperbolic(0.4, -0.2)?,
    ] {
        let r = transition_report(&m, &config)?;
        println!("{} ({})", r.regime, r.model_hash);
        for f in &r.fits {
            println!(
                "  γ={:.1}  Ĥ={:.4} ± {:.4}  H={:.4}  {}",
                f.gamma,
                f.fit.h,
                f.fit.half_width,
                f.theory_h,
                if f.pass { "ok" } else { "off" }
            );
        }
        println!("  {}", r.transition_verdict);
        r.write(&dir, &format!("scan_{}", r.regime))?;
    }
    println!("files in {}", dir.display());
    Ok(())
}

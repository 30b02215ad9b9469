//! The adaptive quadrature engine on its own: Dirichlet-weighted integrals
//! over the torus with a radial singularity at the origin.
//!
//! ```bash
//! cargo run --release --example singular_quadrature
//! ```

use aniscale::model::RadialExponents;
use aniscale::quadrature::{
    integrate_line, integrate_singular_2d, Axis, LineIntegrand, LineKernel, QuadOptions,
    SingularIntegrand2D, Singularity,
};
use std::f64::consts::PI;

fn main() -> aniscale::Result<()> {
    // White noise: ∫ |D_n(u)|² du over the torus equals 2πn.
    for n in [1u64, 10, 1000] {
        let r = integrate_line(
            &LineIntegrand {
                g: &|_| 1.0,
                axis: Axis::torus(LineKernel::Dirichlet { n, m: n }),
                w: 0.0,
                even: true,
            },
            &QuadOptions::with_tol(1e-10),
        )?;
        println!(
            "n={n:<5} ∫|D_n|² = {:.10}  (2πn = {:.10})",
            r.value,
            2.0 * PI * n as f64
        );
    }

    // 1/|u|^0.5 against a step kernel on the line.
    let r = integrate_line(
        &LineIntegrand {
            g: &|u: f64| u.abs().powf(-0.5),
            axis: Axis::line(LineKernel::Step { x: 1.0, y: 1.0 }, 2.5),
            w: 0.5,
            even: true,
        },
        &QuadOptions::with_tol(1e-9),
    )?;
    println!(
        "∫ |u|^-½ |(1-e^{{iu}})/u|² du = {:.10} ({} cells)",
        r.value, r.cells_used
    );

    // Variance of a 64×64 block sum under f = 1/ρ, ρ = |u₁|^0.5 + |u₂|^0.5.
    let e = RadialExponents::new(0.5, 0.5);
    let g = |a: f64, b: f64| 1.0 / (a.abs().sqrt() + b.abs().sqrt());
    let mut opts = QuadOptions::with_tol(1e-7);
    opts.trace = true;
    let r = integrate_singular_2d(
        &SingularIntegrand2D {
            g: &g,
            axes: [Axis::torus(LineKernel::Dirichlet { n: 64, m: 64 }); 2],
            singularity: Singularity::Radial {
                w: 1.0,
                exponents: e,
            },
            even: true,
        },
        &opts,
    )?;
    println!(
        "Var S(64×64) = {:.10e} ± {:.1e}, {} cells, imaginary residue {:.1e}",
        r.value, r.abs_error_estimate, r.cells_used, r.imag_residue
    );
    print!("{}", r.trace_csv());
    Ok(())
}

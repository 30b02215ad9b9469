//! Closed-form scaling theory: `γ₀`, Hurst pairs, `H(γ)`, normalizations,
//! the amplitude constants `κ±²` and the limit covariance functions.
//!
//! Every regime is implemented on its plus side only. The minus side is the
//! plus side of the coordinate-swapped model with the answer swapped back;
//! LRND₁ and the LRND delegations to the LRD formulas go through
//! [`SpectralModel::as_regime`].

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::model::{Regime, SpectralModel};
use crate::quadrature::{
    integrate_line, integrate_singular_2d, Axis, LineIntegrand, LineKernel, QuadOptions,
    QuadratureResult, SingularIntegrand2D, Singularity,
};

/// Tolerance for the equalities that select a branch or a sub-case.
pub const BRANCH_TOL: f64 = 1e-12;

/// Relative tolerance for κ values computed by quadrature.
pub const KAPPA_TOL: f64 = 1e-6;

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= BRANCH_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

/// Which limit applies at a given `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
    Balanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HurstPair {
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
}

impl HurstPair {
    pub fn new(h1: f64, h2: f64) -> Result<Self> {
        for h in [h1, h2] {
            if !(0.0..=1.0).contains(&h) {
                return Err(Error::Domain(format!("Hurst index {h} outside [0,1]")));
            }
        }
        Ok(HurstPair { h1, h2 })
    }

    pub fn swapped(self) -> Self {
        HurstPair {
            h1: self.h2,
            h2: self.h1,
        }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.h1, self.h2]
    }

    /// `H₁ + γ H₂`.
    pub fn at(self, gamma: f64) -> f64 {
        self.h1 + gamma * self.h2
    }
}

/// The transition point, `None` for the hyperbolic model.
pub fn gamma0(model: &SpectralModel) -> Option<f64> {
    let e = model.exponents();
    match model.regime() {
        Regime::Lrd | Regime::Lrnd1 | Regime::Lrnd2 => Some(e.upsilon1 / e.upsilon2),
        Regime::Nd => Some(e.upsilon1.min(1.0) / e.upsilon2.min(1.0)),
        Regime::Hyperbolic => None,
    }
}

/// `|υ₁|/|υ₂|`, where the hyperbolic limit becomes well balanced.
pub fn crossover(model: &SpectralModel) -> f64 {
    let e = model.exponents();
    e.upsilon1.abs() / e.upsilon2.abs()
}

fn pivot(model: &SpectralModel) -> f64 {
    gamma0(model).unwrap_or_else(|| crossover(model))
}

pub fn branch(model: &SpectralModel, gamma: f64) -> Branch {
    let g0 = pivot(model);
    if near(gamma, g0) {
        Branch::Balanced
    } else if gamma > g0 {
        Branch::Plus
    } else {
        Branch::Minus
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("γ must be positive, got {gamma}")))
    }
}

/// Rejects the LRND parameter sets that the limit theorem leaves open.
///
/// The conditions are checked in the orientation where the angular function
/// vanishes on the `u₁` axis (LRND₂); LRND₁ models are swapped first.
pub fn check_supported(model: &SpectralModel) -> Result<()> {
    if !model.regime().is_lrnd() {
        return Ok(());
    }
    let (m, names) = if model.regime() == Regime::Lrnd1 {
        (model.swapped(), ["υ₂", "υ₁"])
    } else {
        (model.clone(), ["υ₁", "υ₂"])
    };
    let [a, b] = names;
    let e = m.exponents();
    let (u1, u2) = (e.upsilon1, e.upsilon2);
    let mu = m.mu().unwrap_or(0.0);
    if near(u1, 1.0) {
        return Err(Error::Excluded(format!(
            "LRND requires {a} ≠ 1, got {a} = {u1}"
        )));
    }
    if near(u1 + u2 / u1, 1.0) {
        return Err(Error::Excluded(format!("LRND requires {a} + {b}/{a} ≠ 1")));
    }
    if near(u1 + u1 / u2, 1.0) {
        return Err(Error::Excluded(format!(
            "LRND requires {a} + {a}/{b} ≠ 1 (boundary of the plus-side case split)"
        )));
    }
    if u1 < 1.0 && near(mu, u2 / u1 - u2) {
        return Err(Error::Excluded(format!(
            "LRND requires μ ≠ {b}/{a} − {b}, got μ = {mu}"
        )));
    }
    Ok(())
}

/// Warnings attached to predictions for the given model.
pub fn warnings(model: &SpectralModel) -> Vec<String> {
    let mut w = Vec::new();
    if model.regime().is_lrnd() {
        w.push(
            "the stated LRND exclusion υ₁ + υ₂/υ₁ ≠ 1 differs from the case split υ₁ + υ₁/υ₂ ≷ 1 \
             used for the plus side; both boundaries are excluded"
                .to_string(),
        );
    }
    if model.regime() == Regime::Nd {
        let e = model.exponents();
        if e.upsilon1 > 1.0 || e.upsilon2 > 1.0 {
            w.push(
                "ND with υᵢ > 1: the (log λ)^{1/2} factor is applied as stated for H = 0, \
                 while the κ constant is the one derived without it"
                    .to_string(),
            );
        }
    }
    w
}

/// Models whose plus side is computed by a native formula.
fn plus_model(model: &SpectralModel) -> SpectralModel {
    match model.regime() {
        Regime::Lrnd1 => model.as_regime(Regime::Lrd),
        _ => model.clone(),
    }
}

fn lrd_plus_pair(u1: f64, u2: f64) -> HurstPair {
    HurstPair {
        h1: 0.5 * (1.0 + u1.min(1.0)),
        h2: 0.5 * (1.0 + u2 - u2 / u1.max(1.0)),
    }
}

fn native_plus_pair(m: &SpectralModel) -> HurstPair {
    let e = m.exponents();
    let (u1, u2) = (e.upsilon1, e.upsilon2);
    match m.regime() {
        Regime::Lrd | Regime::Lrnd1 => lrd_plus_pair(u1, u2),
        Regime::Nd => HurstPair {
            h1: 0.5 * (1.0 - u1.min(1.0)),
            h2: 0.5,
        },
        Regime::Lrnd2 => {
            if u1 > 1.0 {
                return lrd_plus_pair(u1, u2);
            }
            let mu = m.mu().unwrap_or(0.0);
            HurstPair {
                h1: 0.5 * (1.0 + (u1 + mu * u1 / u2).min(1.0)),
                h2: 0.5 * (1.0 - mu.min(u2 / u1 - u2)),
            }
        }
        Regime::Hyperbolic => HurstPair {
            h1: 0.5 * (1.0 + u1),
            h2: 0.5 * (1.0 + u2),
        },
    }
}

pub fn hurst_pair(model: &SpectralModel, side: Side) -> Result<HurstPair> {
    check_supported(model)?;
    Ok(match side {
        Side::Plus => native_plus_pair(&plus_model(model)),
        Side::Minus => native_plus_pair(&plus_model(&model.swapped())).swapped(),
    })
}

/// The pair governing `γ`; the plus pair at `γ₀`.
pub fn pair_at(model: &SpectralModel, gamma: f64) -> Result<HurstPair> {
    match branch(model, gamma) {
        Branch::Minus => hurst_pair(model, Side::Minus),
        _ => hurst_pair(model, Side::Plus),
    }
}

pub fn h_of_gamma(model: &SpectralModel, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(pair_at(model, gamma)?.at(gamma))
}

/// Whether the normalization carries the factor `(log₊λ)^{1/2}`.
pub fn log_rule(model: &SpectralModel, gamma: f64) -> Result<bool> {
    check_gamma(gamma)?;
    let b = branch(model, gamma);
    let e = model.exponents();
    Ok(match model.regime() {
        Regime::Lrd => {
            (b == Branch::Plus && near(e.upsilon1, 1.0))
                || (b == Branch::Minus && near(e.upsilon2, 1.0))
        }
        Regime::Nd => {
            let hp = hurst_pair(model, Side::Plus)?;
            let hm = hurst_pair(model, Side::Minus)?;
            (b != Branch::Minus && hp.h1 == 0.0) || (b != Branch::Plus && hm.h2 == 0.0)
        }
        _ => {
            check_supported(model)?;
            false
        }
    })
}

/// `log₊λ = max(1, log λ)`.
pub fn log_plus(lambda: f64) -> f64 {
    lambda.ln().max(1.0)
}

/// `d_{λ,γ} = λ^{H(γ)}`, times `(log₊λ)^{1/2}` when the log rule fires.
pub fn normalization(model: &SpectralModel, gamma: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 1.0) {
        return Err(Error::Domain(format!("λ must be at least 1, got {lambda}")));
    }
    let d = lambda.powf(h_of_gamma(model, gamma)?);
    Ok(if log_rule(model, gamma)? {
        d * log_plus(lambda).sqrt()
    } else {
        d
    })
}

/// One-dimensional FBM covariance `r_H(x, y)`.
pub fn fbm_cov(h: f64, x: f64, y: f64) -> f64 {
    if h == 0.0 {
        return if x == y { 1.0 } else { 0.5 };
    }
    let t = 2.0 * h;
    0.5 * (x.powf(t) + y.powf(t) - (x - y).abs().powf(t))
}

pub fn fbs_cov(pair: HurstPair, x: [f64; 2], y: [f64; 2]) -> f64 {
    fbm_cov(pair.h1, x[0], y[0]) * fbm_cov(pair.h2, x[1], y[1])
}

/// `∫ |(1 − e^{iu})/u|² |u|^{1−2H} du = π/(H Γ(2H) sin(Hπ))`.
pub fn fbs_factor(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(format!(
            "FBS constant needs H in (0,1), got {h}"
        )));
    }
    Ok(PI / (h * gamma_fn(2.0 * h) * (h * PI).sin()))
}

/// `κ²` of the FBS spectral representation.
pub fn kappa_closed(pair: HurstPair) -> Result<f64> {
    Ok(fbs_factor(pair.h1)? * fbs_factor(pair.h2)?)
}

/// One `κ±²` value with its provenance inside the crate.
#[derive(Clone, Debug, Serialize)]
pub struct KappaValue {
    pub side: Side,
    pub gamma: f64,
    pub formula: String,
    pub value: f64,
    pub closed_form: Option<f64>,
    pub quadrature: Option<f64>,
    pub quad_error: Option<f64>,
}

impl KappaValue {
    fn closed(side: Side, gamma: f64, formula: &str, value: f64) -> Self {
        KappaValue {
            side,
            gamma,
            formula: formula.to_string(),
            value,
            closed_form: Some(value),
            quadrature: None,
            quad_error: None,
        }
    }

    fn quad(side: Side, gamma: f64, formula: &str, scale: f64, q: &QuadratureResult) -> Self {
        KappaValue {
            side,
            gamma,
            formula: formula.to_string(),
            value: scale * q.value,
            closed_form: None,
            quadrature: Some(scale * q.value),
            quad_error: Some(scale * q.abs_error_estimate),
        }
    }

    /// Relative difference between the closed form and quadrature, when both exist.
    pub fn delta(&self) -> Option<f64> {
        match (self.closed_form, self.quadrature) {
            (Some(c), Some(q)) => Some((q - c).abs() / c.abs()),
            _ => None,
        }
    }
}

struct NativeKappa {
    value: KappaValue,
    log_case: bool,
}

fn fbs_kernel_axis() -> Axis {
    Axis::line(LineKernel::Step { x: 1.0, y: 1.0 }, 2.0)
}

fn opts(tol: f64) -> QuadOptions {
    QuadOptions::with_tol(tol)
}

/// `L(1,0) ∫∫ |(1−e^{iu₁})/u₁|² |(1−e^{iu₂})/u₂|² |u₁|^{-υ₁}` route for `υ₁ < 1`.
fn lrd_plus_quadrature(l10: f64, u1: f64, tol: f64) -> Result<QuadratureResult> {
    let g = move |a: f64, _b: f64| l10 * a.abs().powf(-u1);
    integrate_singular_2d(
        &SingularIntegrand2D {
            g: &g,
            axes: [fbs_kernel_axis(), fbs_kernel_axis()],
            singularity: Singularity::Axes { w: [u1, 0.0] },
            even: true,
        },
        &opts(tol),
    )
}

/// `∫ |(1−e^{iu₂})/u₂|² f₀(u) du` for `H₁⁺ = 1`.
fn line_field_quadrature(m: &SpectralModel, decay1: f64, tol: f64) -> Result<QuadratureResult> {
    let e = m.exponents();
    let g = |a: f64, b: f64| m.leading_density([a, b]);
    integrate_singular_2d(
        &SingularIntegrand2D {
            g: &g,
            axes: [Axis::line(LineKernel::Plain, decay1), fbs_kernel_axis()],
            singularity: Singularity::Radial {
                w: 1.0,
                exponents: e,
            },
            even: true,
        },
        &opts(tol),
    )
}

/// `∫ f₀(s, 1) ds`.
fn section_integral(m: &SpectralModel, decay: f64, tol: f64) -> Result<QuadratureResult> {
    let g = |s: f64| m.leading_density([s, 1.0]);
    integrate_line(
        &LineIntegrand {
            g: &g,
            axis: Axis::line(LineKernel::Plain, decay),
            w: 0.0,
            even: false,
        },
        &opts(tol),
    )
}

fn native_kappa_plus(
    m: &SpectralModel,
    gamma: f64,
    side: Side,
    with_quad: bool,
    tol: f64,
) -> Result<NativeKappa> {
    let e = m.exponents();
    let (u1, u2) = (e.upsilon1, e.upsilon2);
    let pair = native_plus_pair(m);
    let l10 = m.angular_on_axis(0);
    let plain = |v: KappaValue| NativeKappa {
        value: v,
        log_case: false,
    };
    match m.regime() {
        Regime::Lrd | Regime::Lrnd1 => {
            if near(u1, 1.0) {
                let v = 4.0 * PI * l10 * gamma * u2;
                return Ok(NativeKappa {
                    value: KappaValue::closed(side, gamma, "4π L(1,0) γ υ₂", v),
                    log_case: true,
                });
            }
            if u1 < 1.0 {
                let closed =
                    l10 * (2.0 * PI).powi(2) / (gamma_fn(2.0 + u1) * ((1.0 + u1) * PI / 2.0).sin());
                let mut v = KappaValue::closed(
                    side,
                    gamma,
                    "L(1,0) (2π)²/(Γ(2+υ₁) sin((1+υ₁)π/2))",
                    closed,
                );
                if with_quad {
                    let q = lrd_plus_quadrature(l10, u1, tol)?;
                    v.quadrature = Some(q.value);
                    v.quad_error = Some(q.abs_error_estimate);
                }
                return Ok(plain(v));
            }
            let q = line_field_quadrature(m, u1, tol)?;
            Ok(plain(KappaValue::quad(
                side,
                gamma,
                "∫ |(1−e^{iu₂})/u₂|² f₀(u) du",
                1.0,
                &q,
            )))
        }
        Regime::Nd => {
            if near(u1, 1.0) {
                let v = 8.0 * PI * l10;
                return Ok(NativeKappa {
                    value: KappaValue::closed(side, gamma, "8π L(1,0)", v),
                    log_case: true,
                });
            }
            if u1 < 1.0 {
                let closed = l10 * kappa_closed(pair)?;
                let mut v = KappaValue::closed(side, gamma, "L(1,0) K(H₁⁺) K(1/2)", closed);
                if with_quad {
                    let g = move |a: f64, _b: f64| l10 * a.abs().powf(u1);
                    let q = integrate_singular_2d(
                        &SingularIntegrand2D {
                            g: &g,
                            axes: [
                                Axis::line(LineKernel::Step { x: 1.0, y: 1.0 }, 2.0 - u1),
                                fbs_kernel_axis(),
                            ],
                            singularity: Singularity::None,
                            even: true,
                        },
                        &opts(tol),
                    )?;
                    v.quadrature = Some(q.value);
                    v.quad_error = Some(q.abs_error_estimate);
                }
                return Ok(plain(v));
            }
            let g = |v: f64| {
                let s = (0.5 * v).sin();
                m.spectral_density([v, 0.0]) / (4.0 * s * s)
            };
            let q = integrate_line(
                &LineIntegrand {
                    g: &g,
                    axis: Axis::torus(LineKernel::Plain),
                    w: 2.0 - u1,
                    even: true,
                },
                &opts(tol),
            )?;
            Ok(plain(KappaValue::quad(
                side,
                gamma,
                "4π ∫_Π f(v,0) |1−e^{iv}|^{-2} dv",
                4.0 * PI,
                &q,
            )))
        }
        Regime::Lrnd2 => {
            if u1 > 1.0 {
                return native_kappa_plus(&m.as_regime(Regime::Lrd), gamma, side, with_quad, tol);
            }
            let mu = m.mu().unwrap_or(0.0);
            if mu < u2 / u1 - u2 {
                let ell = m.lrnd_coefficient().unwrap_or(0.0);
                let v = ell * kappa_closed(pair)?;
                return Ok(plain(KappaValue::closed(
                    side,
                    gamma,
                    "ℓ L̃₀(1,0) K(H₁⁺) K(H₂⁺)",
                    v,
                )));
            }
            let q = section_integral(m, u1 * (1.0 + mu / u2), tol)?;
            let k2 = fbs_factor(pair.h2)?;
            Ok(plain(KappaValue::quad(
                side,
                gamma,
                "K(H₂⁺) ∫ f₀(u,1) du",
                k2,
                &q,
            )))
        }
        Regime::Hyperbolic => {
            let closed = l10 * kappa_closed(pair)?;
            let mut v = KappaValue::closed(side, gamma, "L(1,0) K(H₁) K(H₂)", closed);
            if with_quad {
                let g = move |a: f64, b: f64| l10 * a.abs().powf(-u1) * b.abs().powf(-u2);
                let axes = [
                    Axis::line(LineKernel::Step { x: 1.0, y: 1.0 }, 2.0 + u1),
                    Axis::line(LineKernel::Step { x: 1.0, y: 1.0 }, 2.0 + u2),
                ];
                let q = integrate_singular_2d(
                    &SingularIntegrand2D {
                        g: &g,
                        axes,
                        singularity: Singularity::Axes { w: [u1, u2] },
                        even: true,
                    },
                    &opts(tol),
                )?;
                v.quadrature = Some(q.value);
                v.quad_error = Some(q.abs_error_estimate);
            }
            Ok(plain(v))
        }
    }
}

/// `κ±²` at `γ` with closed form and, when `with_quad`, a quadrature check.
pub fn kappa_detail(
    model: &SpectralModel,
    gamma: f64,
    side: Side,
    with_quad: bool,
    tol: f64,
) -> Result<KappaValue> {
    check_gamma(gamma)?;
    check_supported(model)?;
    match side {
        Side::Plus => Ok(native_kappa_plus(&plus_model(model), gamma, side, with_quad, tol)?.value),
        Side::Minus => {
            let s = plus_model(&model.swapped());
            let k = native_kappa_plus(&s, 1.0 / gamma, side, with_quad, tol)?;
            let mut v = k.value;
            v.gamma = gamma;
            if k.log_case {
                // log λ' = γ log λ in the swapped parametrization.
                v.value *= gamma;
                v.closed_form = v.closed_form.map(|c| c * gamma);
                v.formula = format!("γ · [{}] with coordinates exchanged", v.formula);
            } else {
                v.formula = format!("[{}] with coordinates exchanged", v.formula);
            }
            Ok(v)
        }
    }
}

/// `κ±²` at `γ`.
pub fn kappa_limit(model: &SpectralModel, gamma: f64, side: Side) -> Result<f64> {
    Ok(kappa_detail(model, gamma, side, false, KAPPA_TOL)?.value)
}

fn check_point(x: [f64; 2]) -> Result<()> {
    if x.iter().all(|c| *c >= 0.0 && c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("points must lie in R₊², got {x:?}")))
    }
}

/// Covariance of the well-balanced limit `V₀` by singular quadrature.
pub fn well_balanced_cov(
    model: &SpectralModel,
    x: [f64; 2],
    y: [f64; 2],
    tol: f64,
) -> Result<QuadratureResult> {
    check_point(x)?;
    check_point(y)?;
    if x[0] * y[0] * x[1] * y[1] == 0.0 {
        return Ok(QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            cells_used: 0,
            imag_residue: 0.0,
            trace: Vec::new(),
        });
    }
    let e = model.exponents();
    let (decay, singularity) = match model.regime() {
        Regime::Lrd | Regime::Lrnd1 | Regime::Lrnd2 => (
            [2.0, 2.0],
            Singularity::Radial {
                w: 1.0,
                exponents: e,
            },
        ),
        Regime::Nd => (
            [2.0 - e.upsilon1.min(1.0), 2.0 - e.upsilon2.min(1.0)],
            Singularity::Radial {
                w: -1.0,
                exponents: e,
            },
        ),
        Regime::Hyperbolic => (
            [2.0 + e.upsilon1, 2.0 + e.upsilon2],
            Singularity::Axes {
                w: [e.upsilon1, e.upsilon2],
            },
        ),
    };
    let g = |a: f64, b: f64| model.leading_density([a, b]);
    let axes = [
        Axis::line(LineKernel::Step { x: x[0], y: y[0] }, decay[0]),
        Axis::line(LineKernel::Step { x: x[1], y: y[1] }, decay[1]),
    ];
    integrate_singular_2d(
        &SingularIntegrand2D {
            g: &g,
            axes,
            singularity,
            even: true,
        },
        &opts(tol),
    )
}

/// Covariance `E V_γ(x) V_γ(y)` of the scaling limit.
pub fn limit_cov(model: &SpectralModel, gamma: f64, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    check_gamma(gamma)?;
    check_supported(model)?;
    check_point(x)?;
    check_point(y)?;
    let side_cov = |side: Side| -> Result<f64> {
        Ok(kappa_limit(model, gamma, side)? * fbs_cov(hurst_pair(model, side)?, x, y))
    };
    match branch(model, gamma) {
        Branch::Plus => side_cov(Side::Plus),
        Branch::Minus => side_cov(Side::Minus),
        Branch::Balanced => {
            if model.regime() == Regime::Nd {
                let hp = hurst_pair(model, Side::Plus)?;
                let hm = hurst_pair(model, Side::Minus)?;
                if hp.h1 == 0.0 || hm.h2 == 0.0 {
                    return Ok(side_cov(Side::Plus)? + side_cov(Side::Minus)?);
                }
            }
            Ok(well_balanced_cov(model, x, y, KAPPA_TOL)?.value)
        }
    }
}

/// Type of the limit at one `γ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LimitKind {
    UnbalancedFbs { side: Side, pair: HurstPair },
    WellBalanced { form: String },
    NoTransition { pair: HurstPair },
}

pub fn limit_kind(model: &SpectralModel, gamma: f64) -> Result<LimitKind> {
    check_gamma(gamma)?;
    check_supported(model)?;
    if model.regime() == Regime::Hyperbolic {
        return Ok(LimitKind::NoTransition {
            pair: hurst_pair(model, Side::Plus)?,
        });
    }
    Ok(match branch(model, gamma) {
        Branch::Plus => LimitKind::UnbalancedFbs {
            side: Side::Plus,
            pair: hurst_pair(model, Side::Plus)?,
        },
        Branch::Minus => LimitKind::UnbalancedFbs {
            side: Side::Minus,
            pair: hurst_pair(model, Side::Minus)?,
        },
        Branch::Balanced => {
            let form = match model.regime() {
                Regime::Nd => {
                    let hp = hurst_pair(model, Side::Plus)?;
                    let hm = hurst_pair(model, Side::Minus)?;
                    if hp.h1 == 0.0 || hm.h2 == 0.0 {
                        "independent sum κ₊B(H₁⁺,1/2) + κ₋B(1/2,H₂⁻)"
                    } else {
                        "spectral integral of L·ρ"
                    }
                }
                _ => "spectral integral of L/ρ",
            };
            LimitKind::WellBalanced {
                form: form.to_string(),
            }
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvePoint {
    pub gamma: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub log_flag: bool,
    pub branch: Branch,
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaBlock {
    pub plus: KappaValue,
    pub minus: KappaValue,
}

/// Everything the theory says about one model, in the `predict` JSON layout.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingPrediction {
    pub regime: Regime,
    pub model_hash: String,
    pub gamma0: Option<f64>,
    pub crossover: Option<f64>,
    pub transition: bool,
    #[serde(rename = "H_plus")]
    pub h_plus: [f64; 2],
    #[serde(rename = "H_minus")]
    pub h_minus: [f64; 2],
    #[serde(rename = "H_curve")]
    pub h_curve: Vec<CurvePoint>,
    pub kappa: KappaBlock,
    pub warnings: Vec<String>,
}

impl ScalingPrediction {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates the theory on a γ grid. κ± are reported at `2γ₀` and `γ₀/2`.
pub fn predict(model: &SpectralModel, gammas: &[f64]) -> Result<ScalingPrediction> {
    check_supported(model)?;
    let g0 = pivot(model);
    let mut h_curve = Vec::with_capacity(gammas.len());
    for &g in gammas {
        h_curve.push(CurvePoint {
            gamma: g,
            h: h_of_gamma(model, g)?,
            log_flag: log_rule(model, g)?,
            branch: branch(model, g),
        });
    }
    let kappa = KappaBlock {
        plus: kappa_detail(model, 2.0 * g0, Side::Plus, false, KAPPA_TOL)?,
        minus: kappa_detail(model, 0.5 * g0, Side::Minus, false, KAPPA_TOL)?,
    };
    let hyperbolic = model.regime() == Regime::Hyperbolic;
    Ok(ScalingPrediction {
        regime: model.regime(),
        model_hash: model.hash(),
        gamma0: gamma0(model),
        crossover: hyperbolic.then(|| crossover(model)),
        transition: !hyperbolic,
        h_plus: hurst_pair(model, Side::Plus)?.as_array(),
        h_minus: hurst_pair(model, Side::Minus)?.as_array(),
        h_curve,
        kappa,
        warnings: warnings(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lrd() -> SpectralModel {
        SpectralModel::lrd(0.5, 1.2).unwrap()
    }

    #[test]
    fn transition_points() {
        assert_relative_eq!(gamma0(&lrd()).unwrap(), 0.5 / 1.2);
        assert_eq!(gamma0(&SpectralModel::nd(0.5, 1.5).unwrap()), Some(0.5));
        let hyp = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        assert_eq!(gamma0(&hyp), None);
        assert_relative_eq!(crossover(&hyp), 2.0);
    }

    #[test]
    fn pairs_by_regime() {
        let m = lrd();
        let p = hurst_pair(&m, Side::Plus).unwrap();
        assert_relative_eq!(p.h1, 0.75);
        assert_relative_eq!(p.h2, 0.5, epsilon = 1e-15);
        let q = hurst_pair(&m, Side::Minus).unwrap();
        assert_relative_eq!(q.h1, 0.5 * (1.5 - 0.5 / 1.2), epsilon = 1e-15);
        assert_relative_eq!(q.h2, 1.0);

        let nd = SpectralModel::nd(0.5, 1.5).unwrap();
        assert_eq!(
            hurst_pair(&nd, Side::Plus).unwrap(),
            HurstPair { h1: 0.25, h2: 0.5 }
        );
        assert_eq!(
            hurst_pair(&nd, Side::Minus).unwrap(),
            HurstPair { h1: 0.5, h2: 0.0 }
        );

        let l = SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0).unwrap();
        let p = hurst_pair(&l, Side::Plus).unwrap();
        assert_relative_eq!(p.h1, 0.84375, epsilon = 1e-14);
        assert_relative_eq!(p.h2, 0.35, epsilon = 1e-14);
        let lrd_twin = SpectralModel::lrd(0.5, 0.8).unwrap();
        assert_eq!(
            hurst_pair(&l, Side::Minus).unwrap(),
            hurst_pair(&lrd_twin, Side::Minus).unwrap()
        );

        let hyp = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        let p = hurst_pair(&hyp, Side::Plus).unwrap();
        assert_relative_eq!(p.h1, 0.7);
        assert_relative_eq!(p.h2, 0.4);
        assert_eq!(p, hurst_pair(&hyp, Side::Minus).unwrap());
    }

    #[test]
    fn lrnd1_mirrors_lrnd2() {
        let a = SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0).unwrap();
        let b = crate::model::ModelSpec::new(Regime::Lrnd1, 0.8, 0.5)
            .with_lrnd(0.3, 1.0)
            .build()
            .unwrap();
        assert_eq!(
            hurst_pair(&a, Side::Plus).unwrap(),
            hurst_pair(&b, Side::Minus).unwrap().swapped()
        );
        assert_eq!(
            hurst_pair(&a, Side::Minus).unwrap(),
            hurst_pair(&b, Side::Plus).unwrap().swapped()
        );
        let ka = kappa_limit(&a, 2.0, Side::Plus).unwrap();
        let kb = kappa_limit(&b, 0.5, Side::Minus).unwrap();
        assert_relative_eq!(ka, kb, max_relative = 1e-12);
    }

    #[test]
    fn h_curve_examples() {
        assert_relative_eq!(h_of_gamma(&lrd(), 1.0).unwrap(), 1.25);
        let nd = SpectralModel::nd(0.5, 0.5).unwrap();
        assert_relative_eq!(h_of_gamma(&nd, 1.0).unwrap(), 0.75);
        assert_relative_eq!(h_of_gamma(&nd, 1.0 + 1e-9).unwrap(), 0.75, epsilon = 1e-8);
        assert_relative_eq!(h_of_gamma(&nd, 1.0 - 1e-9).unwrap(), 0.75, epsilon = 1e-8);
        let hyp = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        assert_relative_eq!(h_of_gamma(&hyp, 3.0).unwrap(), 1.9, epsilon = 1e-14);
        let m = lrd();
        let g0 = gamma0(&m).unwrap();
        assert_relative_eq!(
            h_of_gamma(&m, g0).unwrap(),
            0.5 * (1.0 + 0.5 + 0.5 / 1.2),
            epsilon = 1e-14
        );
        assert!(h_of_gamma(&m, 0.0).is_err());
    }

    #[test]
    fn normalizations() {
        assert_relative_eq!(
            normalization(&lrd(), 1.0, 100.0).unwrap(),
            100f64.powf(1.25),
            max_relative = 1e-14
        );
        let nd = SpectralModel::nd(0.5, 1.5).unwrap();
        let l = 2f64.exp();
        assert_relative_eq!(
            normalization(&nd, 0.3, l).unwrap(),
            1f64.exp() * 2f64.sqrt(),
            max_relative = 1e-14
        );
        for m in [lrd(), nd, SpectralModel::hyperbolic(0.4, -0.2).unwrap()] {
            assert_eq!(normalization(&m, 0.7, 1.0).unwrap(), 1.0);
        }
        let log = SpectralModel::lrd(1.0, 1.25).unwrap();
        assert!(log_rule(&log, 2.0).unwrap());
        assert!(!log_rule(&log, 0.5).unwrap());
    }

    #[test]
    fn fbs_examples() {
        let half = HurstPair { h1: 0.5, h2: 0.5 };
        assert_relative_eq!(fbs_cov(half, [2.0, 3.0], [2.0, 3.0]), 6.0);
        assert_eq!(fbm_cov(0.0, 1.0, 1.0), 1.0);
        assert_eq!(fbm_cov(0.0, 1.0, 2.0), 0.5);
        assert_relative_eq!(fbm_cov(1.0, 1.5, 2.5), 3.75);
        assert_eq!(fbm_cov(0.3, 0.0, 2.0), 0.0);
    }

    #[test]
    fn closed_kappas() {
        assert_relative_eq!(
            kappa_closed(HurstPair { h1: 0.5, h2: 0.5 }).unwrap(),
            4.0 * PI * PI,
            max_relative = 1e-14
        );
        let k = kappa_closed(HurstPair { h1: 0.75, h2: 0.5 }).unwrap();
        assert_relative_eq!(k, 6.684_342_07 * 2.0 * PI, max_relative = 1e-8);
        assert!(kappa_closed(HurstPair { h1: 1.0, h2: 0.5 }).is_err());
        assert!(kappa_closed(HurstPair { h1: 0.0, h2: 0.5 }).is_err());
    }

    #[test]
    fn lrd_kappa_sub_unit() {
        let v = kappa_detail(&lrd(), 1.0, Side::Plus, true, 1e-7).unwrap();
        let direct = 4.0 * PI * PI / (gamma_fn(2.5) * (0.75 * PI).sin());
        assert_relative_eq!(v.value, direct, max_relative = 1e-12);
        assert_relative_eq!(v.value, 41.999, max_relative = 1e-4);
        assert!(v.delta().unwrap() < 1e-6, "{v:?}");
        // The K(H₁⁺) K(1/2) product is the same number.
        assert_relative_eq!(
            v.value,
            kappa_closed(HurstPair { h1: 0.75, h2: 0.5 }).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn lrd_kappa_log_case() {
        let m = SpectralModel::lrd(1.0, 1.25).unwrap();
        assert_relative_eq!(
            kappa_limit(&m, 2.0, Side::Plus).unwrap(),
            10.0 * PI,
            max_relative = 1e-14
        );
    }

    #[test]
    fn lrd_line_field_kappa_two_routes() {
        let m = SpectralModel::lrd(1.5, 0.8).unwrap();
        let two_d = kappa_detail(&m, 2.0, Side::Plus, false, 1e-7).unwrap();
        let pair = hurst_pair(&m, Side::Plus).unwrap();
        assert_eq!(pair.h1, 1.0);
        let section = section_integral(&m, 1.5, 1e-9).unwrap().value;
        let dual = fbs_factor(pair.h2).unwrap() * section;
        assert_relative_eq!(two_d.value, dual, max_relative = 1e-5);
    }

    #[test]
    fn nd_minus_kappa_is_torus_integral() {
        let m = SpectralModel::nd(0.5, 1.5).unwrap();
        let k = kappa_limit(&m, 0.25, Side::Minus).unwrap();
        // v = t² removes the |v|^{-1/2} singularity; plain Gauss panels then suffice.
        let (x, w) = crate::quadrature::gauss_legendre(64);
        let mut acc = 0.0;
        let top = PI.sqrt();
        for j in 0..200 {
            let (a, b) = (top * j as f64 / 200.0, top * (j + 1) as f64 / 200.0);
            for (xi, wi) in x.iter().zip(&w) {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                let v = t * t;
                let s = (0.5 * v).sin();
                acc += 0.5 * (b - a) * wi * 2.0 * t * m.spectral_density([0.0, v]) / (4.0 * s * s);
            }
        }
        assert_relative_eq!(k, 4.0 * PI * 2.0 * acc, max_relative = 1e-7);
    }

    #[test]
    fn hyperbolic_kappa() {
        let m = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        let v = kappa_detail(&m, 3.0, Side::Plus, true, 1e-7).unwrap();
        let expect = fbs_factor(0.7).unwrap() * fbs_factor(0.4).unwrap();
        assert_relative_eq!(v.value, expect, max_relative = 1e-12);
        assert!(v.delta().unwrap() < 1e-5, "{v:?}");
    }

    #[test]
    fn lrnd_exclusions() {
        let m = SpectralModel::lrnd2(1.0, 0.8, 0.3, 1.0).unwrap();
        let err = hurst_pair(&m, Side::Plus).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("υ₁ ≠ 1"), "{err}");
        // υ₁ + υ₁/υ₂ = 1 at υ = (0.5, 1).
        assert!(check_supported(&SpectralModel::lrnd2(0.5, 1.0, 0.3, 1.0).unwrap()).is_err());
        // υ₁ + υ₂/υ₁ = 1 at υ₁ = 0.5, υ₂ = 0.25.
        assert!(check_supported(&SpectralModel::lrnd2(0.5, 0.25, 0.1, 1.0).unwrap()).is_err());
        // μ on the sub-case boundary.
        assert!(check_supported(&SpectralModel::lrnd2(0.5, 0.8, 0.8, 1.0).unwrap()).is_err());
        assert!(check_supported(&SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0).unwrap()).is_ok());
    }

    #[test]
    fn lrnd_kappa_branches() {
        let m = SpectralModel::lrnd2(0.5, 0.8, 0.3, 2.0).unwrap();
        let k = kappa_limit(&m, 1.5, Side::Plus).unwrap();
        assert_relative_eq!(
            k,
            2.0 * fbs_factor(0.84375).unwrap() * fbs_factor(0.35).unwrap(),
            max_relative = 1e-12
        );
        let twin = SpectralModel::lrd(0.5, 0.8).unwrap();
        let km = kappa_limit(&m, 0.3, Side::Minus).unwrap();
        let kt = kappa_limit(&twin, 0.3, Side::Minus).unwrap();
        // Same formula; only L(0,1) differs, which is ℓ for this model.
        assert_relative_eq!(km, 2.0 * kt, max_relative = 1e-5);
    }

    #[test]
    fn limit_cov_examples() {
        let m = lrd();
        assert_relative_eq!(
            limit_cov(&m, 1.0, [1.0, 1.0], [1.0, 1.0]).unwrap(),
            41.999,
            max_relative = 1e-4
        );
        assert_eq!(limit_cov(&m, 1.0, [0.0, 1.0], [1.0, 1.0]).unwrap(), 0.0);

        let nd = SpectralModel::nd(1.0, 1.0).unwrap();
        let (x, y) = ([1.0, 2.0], [2.0, 3.0]);
        let kp = kappa_limit(&nd, 1.0, Side::Plus).unwrap();
        let km = kappa_limit(&nd, 1.0, Side::Minus).unwrap();
        let expect = kp * 0.5 * 2.0 + km * 1.0 * 0.5;
        assert_relative_eq!(
            limit_cov(&nd, 1.0, x, y).unwrap(),
            expect,
            max_relative = 1e-14
        );
        assert_relative_eq!(kp, 8.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn well_balanced_scaling() {
        let m = SpectralModel::lrd(0.5, 0.5).unwrap();
        let g0 = gamma0(&m).unwrap();
        let h = h_of_gamma(&m, g0).unwrap();
        let (x, y) = ([1.0, 2.0], [2.0, 1.0]);
        let base = limit_cov(&m, g0, x, y).unwrap();
        for lambda in [2.0f64, 4.0] {
            let lg = lambda.powf(g0);
            let v = limit_cov(
                &m,
                g0,
                [lambda * x[0], lg * x[1]],
                [lambda * y[0], lg * y[1]],
            )
            .unwrap();
            assert_relative_eq!(v, lambda.powf(2.0 * h) * base, max_relative = 1e-5);
        }
    }

    #[test]
    fn transition_witness() {
        let pts = [
            ([1.0, 1.0], [1.0, 1.0]),
            ([1.0, 2.0], [2.0, 1.0]),
            ([0.5, 1.0], [1.0, 3.0]),
        ];
        let ratios = |m: &SpectralModel, gp: f64, gm: f64| -> Vec<f64> {
            pts.iter()
                .map(|(x, y)| limit_cov(m, gp, *x, *y).unwrap() / limit_cov(m, gm, *x, *y).unwrap())
                .collect()
        };
        let spread = |r: Vec<f64>| {
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi / lo - 1.0
        };
        assert!(spread(ratios(&lrd(), 1.0, 0.2)) > 1e-3);
        assert!(spread(ratios(&SpectralModel::nd(0.5, 0.5).unwrap(), 2.0, 0.5)) > 1e-3);
        let hyp = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        assert!(spread(ratios(&hyp, 3.0, 0.5)) < 1e-12);
    }

    #[test]
    fn predict_json_layout() {
        let p = predict(&lrd(), &[0.2, 1.0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        for key in ["regime", "gamma0", "H_plus", "H_minus", "H_curve", "kappa"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["regime"], "lrd");
        assert_eq!(v["H_curve"][1]["H"], 1.25);
        let hyp = predict(&SpectralModel::hyperbolic(0.4, -0.2).unwrap(), &[1.0]).unwrap();
        assert!(!hyp.transition);
        assert!(hyp.gamma0.is_none());
    }
}

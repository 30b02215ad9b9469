//! Singular spectral densities on the torus `Π² = [-π, π]²`.
//!
//! Four families are supported:
//!
//! * `Lrd`: `f(u) = L(u) / ρ(u)`, infinite at the origin;
//! * `Nd`: `f(u) = L(u) ρ(u)`, vanishing at the origin;
//! * `Lrnd1`/`Lrnd2`: as `Lrd`, but the angular function vanishes like
//!   `ℓ |s_i|^μ` on the axis `s_i = 0` of the unit curve `ρ(s) = 1`;
//! * `Hyperbolic`: `f(u) = L(u) |u₁|^{-υ₁} |u₂|^{-υ₂}` with `|υᵢ| < 1`.
//!
//! Here `ρ(u) = |u₁|^{υ₁} + |u₂|^{υ₂}` and `L` is generalized invariant: it
//! depends on `u` only through the normalized point
//! `(u₁ / ρ(u)^{1/υ₁}, u₂ / ρ(u)^{1/υ₂})` on the unit curve.
//!
//! The density is taken to equal its leading singular form on all of `Π²`,
//! optionally multiplied by a bounded correction factor `T(u)` with `T(0) = 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::Expr2;

/// Tolerance used when sampling angular profiles for evenness and invariance.
pub const PROFILE_CHECK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Lrd,
    Nd,
    Lrnd1,
    Lrnd2,
    Hyperbolic,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Lrd => "lrd",
            Regime::Nd => "nd",
            Regime::Lrnd1 => "lrnd1",
            Regime::Lrnd2 => "lrnd2",
            Regime::Hyperbolic => "hyperbolic",
        }
    }

    pub fn is_lrnd(&self) -> bool {
        matches!(self, Regime::Lrnd1 | Regime::Lrnd2)
    }

    /// Regimes whose density is `L/ρ` near the origin.
    pub fn is_inverse_radial(&self) -> bool {
        matches!(self, Regime::Lrd | Regime::Lrnd1 | Regime::Lrnd2)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lrd" => Ok(Regime::Lrd),
            "nd" => Ok(Regime::Nd),
            "lrnd1" => Ok(Regime::Lrnd1),
            "lrnd2" | "lrnd" => Ok(Regime::Lrnd2),
            "hyperbolic" | "hyp" => Ok(Regime::Hyperbolic),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

/// Exponents `(υ₁, υ₂)` of the radial function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialExponents {
    pub upsilon1: f64,
    pub upsilon2: f64,
}

impl RadialExponents {
    pub fn new(upsilon1: f64, upsilon2: f64) -> Self {
        RadialExponents { upsilon1, upsilon2 }
    }

    /// `Υ = 1/υ₁ + 1/υ₂`.
    pub fn integrability_index(&self) -> f64 {
        1.0 / self.upsilon1 + 1.0 / self.upsilon2
    }

    pub fn abs(&self) -> Self {
        RadialExponents::new(self.upsilon1.abs(), self.upsilon2.abs())
    }

    pub fn swapped(&self) -> Self {
        RadialExponents::new(self.upsilon2, self.upsilon1)
    }

    pub fn get(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.upsilon1
        } else {
            self.upsilon2
        }
    }
}

/// `ρ(u) = |u₁|^{υ₁} + |u₂|^{υ₂}`.
pub fn rho(u: [f64; 2], e: &RadialExponents) -> f64 {
    u[0].abs().powf(e.upsilon1) + u[1].abs().powf(e.upsilon2)
}

/// `ρ_p(u) = (|u₁|^{pυ₁} + |u₂|^{pυ₂})^{1/p}`.
pub fn rho_p(u: [f64; 2], e: &RadialExponents, p: f64) -> f64 {
    if p == 1.0 {
        return rho(u, e);
    }
    (u[0].abs().powf(p * e.upsilon1) + u[1].abs().powf(p * e.upsilon2)).powf(1.0 / p)
}

/// Projection of a nonzero point onto the unit curve `ρ(s) = 1` along the
/// anisotropic dilation orbit.
pub fn normalize(u: [f64; 2], e: &RadialExponents) -> [f64; 2] {
    let r = rho(u, e);
    [
        u[0] / r.powf(1.0 / e.upsilon1),
        u[1] / r.powf(1.0 / e.upsilon2),
    ]
}

/// Integrability of `ρ^{-w}` near the origin and at infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Integrability {
    pub near_zero: bool,
    pub at_infinity: bool,
}

/// `∫_{|x|<δ} ρ^{-w} < ∞ ⟺ w < Υ` and `∫_{|x|>δ} ρ^{-w} < ∞ ⟺ w > Υ`.
pub fn check_integrability(e: &RadialExponents, w: f64) -> Integrability {
    let big_upsilon = e.integrability_index();
    Integrability {
        near_zero: w < big_upsilon,
        at_infinity: w > big_upsilon,
    }
}

/// Spectral classification by the behavior of `f` at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumClass {
    #[serde(rename = "spectrum-LRD")]
    Lrd,
    #[serde(rename = "spectrum-ND")]
    Nd,
    #[serde(rename = "spectrum-LRND")]
    Lrnd,
    #[serde(rename = "spectrum-SRD")]
    Srd,
}

type ShapeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Constant(f64),
    Expression(Expr2),
    Custom(String, ShapeFn),
}

/// The angular function `L̃` on the unit curve.
///
/// `L̃(s) = shape(s) · [ℓ |s_i|^μ]`, the bracket present only for the LRND
/// families. The profile may be flagged as coordinate-swapped, in which case
/// it is evaluated at `(s₂, s₁)`.
#[derive(Clone)]
pub struct AngularProfile {
    shape: Shape,
    vanishing: Option<Vanishing>,
    swapped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Vanishing {
    axis: usize,
    mu: f64,
    ell: f64,
}

impl AngularProfile {
    pub fn constant(c: f64) -> Self {
        AngularProfile {
            shape: Shape::Constant(c),
            vanishing: None,
            swapped: false,
        }
    }

    /// A closed-form profile in the normalized coordinates `s1`, `s2`.
    pub fn expression(source: &str) -> Result<Self> {
        Ok(AngularProfile {
            shape: Shape::Expression(Expr2::parse(source, ["s1", "s2"])?),
            vanishing: None,
            swapped: false,
        })
    }

    /// Arbitrary user code; cannot be written to a model file.
    pub fn custom<F>(name: &str, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        AngularProfile {
            shape: Shape::Custom(name.to_string(), Arc::new(f)),
            vanishing: None,
            swapped: false,
        }
    }

    /// Parses `const:<c>` or an expression.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(c) = t.strip_prefix("const:") {
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad constant profile `{t}`")))?;
            Ok(AngularProfile::constant(c))
        } else {
            AngularProfile::expression(t)
        }
    }

    /// Text form accepted by [`AngularProfile::parse`]; `None` for custom code.
    pub fn to_text(&self) -> Option<String> {
        match &self.shape {
            Shape::Constant(c) => Some(format!("const:{c:?}")),
            Shape::Expression(e) => Some(e.source().to_string()),
            Shape::Custom(..) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, Shape::Constant(_)) && self.vanishing.is_none()
    }

    fn shape_at(&self, s1: f64, s2: f64) -> f64 {
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Expression(e) => e.eval(s1, s2),
            Shape::Custom(_, f) => f(s1, s2),
        }
    }

    /// `L̃(s)` for `s` on the unit curve.
    pub fn eval_unit(&self, s: [f64; 2]) -> f64 {
        let [a, b] = if self.swapped { [s[1], s[0]] } else { s };
        let base = self.shape_at(a, b);
        match self.vanishing {
            None => base,
            Some(v) => {
                let si = if v.axis == 0 { a } else { b };
                v.ell * si.abs().powf(v.mu) * base
            }
        }
    }

    /// `ℓ · shape` at the unit point of the non-vanishing axis.
    fn vanishing_coefficient(&self) -> Option<f64> {
        self.vanishing.map(|v| {
            let mut p = [0.0; 2];
            p[1 - v.axis] = 1.0;
            v.ell * self.shape_at(p[0], p[1])
        })
    }

    fn with_vanishing(mut self, axis: usize, mu: f64, ell: f64) -> Self {
        self.vanishing = Some(Vanishing { axis, mu, ell });
        self
    }

    fn swap(&self) -> Self {
        let mut p = self.clone();
        p.swapped = !p.swapped;
        p
    }
}

impl fmt::Debug for AngularProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            Shape::Constant(c) => format!("const:{c}"),
            Shape::Expression(e) => e.source().to_string(),
            Shape::Custom(name, _) => format!("custom:{name}"),
        };
        f.debug_struct("AngularProfile")
            .field("shape", &shape)
            .field("vanishing", &self.vanishing)
            .field("swapped", &self.swapped)
            .finish()
    }
}

/// On-disk form of a model. Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub regime: Regime,
    pub upsilon1: f64,
    pub upsilon2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(default = "default_angular")]
    pub angular: String,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<String>,
}

fn default_angular() -> String {
    "const:1".to_string()
}

fn default_p() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(regime: Regime, upsilon1: f64, upsilon2: f64) -> Self {
        ModelSpec {
            regime,
            upsilon1,
            upsilon2,
            mu: None,
            ell: None,
            angular: default_angular(),
            p: 1.0,
            correction: None,
        }
    }

    pub fn with_lrnd(mut self, mu: f64, ell: f64) -> Self {
        self.mu = Some(mu);
        self.ell = Some(ell);
        self
    }

    pub fn with_angular(mut self, angular: &str) -> Self {
        self.angular = angular.to_string();
        self
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn build(&self) -> Result<SpectralModel> {
        SpectralModel::from_spec(self)
    }
}

/// A validated spectral density model.
#[derive(Clone)]
pub struct SpectralModel {
    regime: Regime,
    exponents: RadialExponents,
    profile: AngularProfile,
    mu: Option<f64>,
    ell: Option<f64>,
    p: f64,
    correction: Option<Expr2>,
    swapped: bool,
}

impl fmt::Debug for SpectralModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralModel")
            .field("regime", &self.regime)
            .field("exponents", &self.exponents)
            .field("profile", &self.profile)
            .field("mu", &self.mu)
            .field("ell", &self.ell)
            .field("p", &self.p)
            .finish()
    }
}

impl SpectralModel {
    pub fn lrd(upsilon1: f64, upsilon2: f64) -> Result<Self> {
        ModelSpec::new(Regime::Lrd, upsilon1, upsilon2).build()
    }

    pub fn nd(upsilon1: f64, upsilon2: f64) -> Result<Self> {
        ModelSpec::new(Regime::Nd, upsilon1, upsilon2).build()
    }

    pub fn lrnd2(upsilon1: f64, upsilon2: f64, mu: f64, ell: f64) -> Result<Self> {
        ModelSpec::new(Regime::Lrnd2, upsilon1, upsilon2)
            .with_lrnd(mu, ell)
            .build()
    }

    pub fn hyperbolic(upsilon1: f64, upsilon2: f64) -> Result<Self> {
        ModelSpec::new(Regime::Hyperbolic, upsilon1, upsilon2).build()
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let profile = AngularProfile::parse(&spec.angular)?;
        let correction = match &spec.correction {
            Some(src) => Some(Expr2::parse(src, ["u1", "u2"])?),
            None => None,
        };
        SpectralModel::with_profile(
            spec.regime,
            RadialExponents::new(spec.upsilon1, spec.upsilon2),
            profile,
            spec.mu,
            spec.ell,
            spec.p,
            correction,
        )
    }

    /// Builds and validates a model from parts.
    pub fn with_profile(
        regime: Regime,
        exponents: RadialExponents,
        profile: AngularProfile,
        mu: Option<f64>,
        ell: Option<f64>,
        p: f64,
        correction: Option<Expr2>,
    ) -> Result<Self> {
        let (u1, u2) = (exponents.upsilon1, exponents.upsilon2);
        if !(u1.is_finite() && u2.is_finite()) {
            return Err(Error::Config("exponents must be finite".into()));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Config(format!("p must be positive, got {p}")));
        }
        match regime {
            Regime::Hyperbolic => {
                if !(u1.abs() < 1.0 && u2.abs() < 1.0) {
                    return Err(Error::Config(
                        "hyperbolic exponents must satisfy |υᵢ| < 1".into(),
                    ));
                }
                if u1 == 0.0 || u2 == 0.0 {
                    return Err(Error::Config("hyperbolic exponents must be nonzero".into()));
                }
                if p != 1.0 {
                    return Err(Error::Config(
                        "the ρ_p variant does not apply to the hyperbolic regime".into(),
                    ));
                }
            }
            _ => {
                if !(u1 > 0.0 && u2 > 0.0) {
                    return Err(Error::Config("exponents must be positive".into()));
                }
                if regime != Regime::Nd && exponents.integrability_index() <= 1.0 {
                    return Err(Error::Divergent(format!(
                        "Υ = 1/υ₁ + 1/υ₂ = {} must exceed 1",
                        exponents.integrability_index()
                    )));
                }
            }
        }
        let mut profile = profile;
        if regime.is_lrnd() {
            let mu = mu.ok_or_else(|| Error::Config("LRND models need mu".into()))?;
            let ell = ell.ok_or_else(|| Error::Config("LRND models need ell".into()))?;
            if !(mu > 0.0 && mu < 1.0) {
                return Err(Error::Config(format!("mu must lie in (0,1), got {mu}")));
            }
            if !(ell > 0.0 && ell.is_finite()) {
                return Err(Error::Config(format!("ell must be positive, got {ell}")));
            }
            let axis = if regime == Regime::Lrnd1 { 0 } else { 1 };
            profile = profile.with_vanishing(axis, mu, ell);
        } else if mu.is_some() || ell.is_some() {
            return Err(Error::Config("mu and ell apply only to LRND models".into()));
        }
        let model = SpectralModel {
            regime,
            exponents,
            profile,
            mu: if regime.is_lrnd() { mu } else { None },
            ell: if regime.is_lrnd() { ell } else { None },
            p,
            correction,
            swapped: false,
        };
        model.validate_profile()?;
        model.validate_correction()?;
        Ok(model)
    }

    /// Exponents used for the angular normalization (`|υᵢ|` for hyperbolic).
    fn norm_exponents(&self) -> RadialExponents {
        self.exponents.abs()
    }

    fn unit_curve_samples(&self, count: usize) -> Vec<[f64; 2]> {
        let e = self.norm_exponents();
        (0..count)
            .map(|k| {
                // Parametrize by the share t of ρ carried by the first coordinate.
                let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                let (c, s) = (theta.cos(), theta.sin());
                let t = c * c;
                [
                    c.signum() * t.powf(1.0 / e.upsilon1),
                    s.signum() * (1.0 - t).powf(1.0 / e.upsilon2),
                ]
            })
            .collect()
    }

    fn validate_profile(&self) -> Result<()> {
        let e = self.norm_exponents();
        let samples = self.unit_curve_samples(257);
        let vanishing_axis = self.profile.vanishing.map(|v| v.axis);
        for s in &samples {
            let v = self.profile.eval_unit(*s);
            let w = self.profile.eval_unit([-s[0], -s[1]]);
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "angular profile not finite at {s:?}"
                )));
            }
            let on_vanishing_axis = vanishing_axis.map_or(false, |a| s[a].abs() < 1e-12);
            if !(v > 0.0) && !on_vanishing_axis {
                return Err(Error::Config(format!(
                    "angular profile must be strictly positive, got {v} at {s:?}"
                )));
            }
            if (v - w).abs() > PROFILE_CHECK_TOL * v.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "angular profile is not even: L({s:?}) = {v}, L(-s) = {w}"
                )));
            }
        }
        for axis in 0..2 {
            let mut s = [0.0; 2];
            s[axis] = 1.0;
            let v = self.profile.eval_unit(s);
            if Some(axis) == vanishing_axis {
                // The non-vanishing axis point must stay positive; a zero here
                // would make the profile vanish on both axes.
                if !(v > 0.0) {
                    return Err(Error::Config(
                        "profiles vanishing on both axes are not supported".into(),
                    ));
                }
            } else if vanishing_axis.is_none() && !(v > 0.0) {
                return Err(Error::Config(format!("angular profile vanishes at {s:?}")));
            }
        }
        // Generalized invariance along dilation orbits.
        for s in samples.iter().step_by(8) {
            let base = self.angular_raw(*s);
            for lambda in [0.1f64, 10.0] {
                let u = [
                    lambda.powf(1.0 / e.upsilon1) * s[0],
                    lambda.powf(1.0 / e.upsilon2) * s[1],
                ];
                let v = self.angular_raw(u);
                if (v - base).abs() > PROFILE_CHECK_TOL * base.abs().max(1.0) {
                    return Err(Error::Config(format!(
                        "angular function is not invariant along dilations at {s:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_correction(&self) -> Result<()> {
        let Some(c) = &self.correction else {
            return Ok(());
        };
        let at_origin = c.eval(0.0, 0.0);
        if (at_origin - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "correction factor must equal 1 at the origin, got {at_origin}"
            )));
        }
        let pi = std::f64::consts::PI;
        for i in 0..=16 {
            for j in 0..=16 {
                let u = [
                    -pi + 2.0 * pi * i as f64 / 16.0,
                    -pi + 2.0 * pi * j as f64 / 16.0,
                ];
                let v = c.eval(u[0], u[1]);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!(
                        "correction factor must be positive, got {v} at {u:?}"
                    )));
                }
                let w = c.eval(-u[0], -u[1]);
                if (v - w).abs() > PROFILE_CHECK_TOL * v.max(1.0) {
                    return Err(Error::Config("correction factor must be even".into()));
                }
            }
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn exponents(&self) -> RadialExponents {
        self.exponents
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn ell(&self) -> Option<f64> {
        self.ell
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn profile(&self) -> &AngularProfile {
        &self.profile
    }

    pub fn has_correction(&self) -> bool {
        self.correction.is_some()
    }

    /// `L = 1` on all of the unit curve and no correction factor.
    pub fn is_separable_constant(&self) -> bool {
        self.profile.is_constant() && self.correction.is_none() && self.p == 1.0
    }

    fn angular_raw(&self, u: [f64; 2]) -> f64 {
        self.profile.eval_unit(normalize(u, &self.norm_exponents()))
    }

    /// `L(u)`, the generalized invariant angular function.
    pub fn angular_eval(&self, u: [f64; 2]) -> Result<f64> {
        if u[0] == 0.0 && u[1] == 0.0 {
            return Err(Error::Domain(
                "angular function undefined at the origin".into(),
            ));
        }
        Ok(self.angular_raw(u))
    }

    /// `L(e_axis)`, i.e. `L(1,0)` for axis 0 and `L(0,1)` for axis 1.
    pub fn angular_on_axis(&self, axis: usize) -> f64 {
        let mut s = [0.0; 2];
        s[axis] = 1.0;
        self.profile.eval_unit(s)
    }

    /// For LRND models, `lim L(s)/|sᵢ|^μ` as `s` approaches the vanishing axis.
    pub fn lrnd_coefficient(&self) -> Option<f64> {
        self.profile.vanishing_coefficient()
    }

    /// Leading singular form `f₀`, generalized homogeneous on all of `R²`.
    pub fn leading_density(&self, u: [f64; 2]) -> f64 {
        let origin = u[0] == 0.0 && u[1] == 0.0;
        match self.regime {
            Regime::Lrd | Regime::Lrnd1 | Regime::Lrnd2 => {
                if origin {
                    return f64::INFINITY;
                }
                self.angular_raw(u) / rho_p(u, &self.exponents, self.p)
            }
            Regime::Nd => {
                if origin {
                    return 0.0;
                }
                self.angular_raw(u) * rho_p(u, &self.exponents, self.p)
            }
            Regime::Hyperbolic => {
                let e = self.exponents;
                if origin {
                    return if e.upsilon1 > 0.0 || e.upsilon2 > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    };
                }
                let mut v = self.angular_raw(u);
                for (x, y) in [(u[0], e.upsilon1), (u[1], e.upsilon2)] {
                    if x == 0.0 {
                        if y > 0.0 {
                            return f64::INFINITY;
                        }
                        return 0.0;
                    }
                    v *= x.abs().powf(-y);
                }
                v
            }
        }
    }

    /// The model spectral density `f(u)`, `u ∈ Π²`.
    pub fn spectral_density(&self, u: [f64; 2]) -> f64 {
        let f0 = self.leading_density(u);
        match &self.correction {
            None => f0,
            Some(c) => {
                let t = if self.swapped {
                    c.eval(u[1], u[0])
                } else {
                    c.eval(u[0], u[1])
                };
                f0 * t
            }
        }
    }

    pub fn classify_spectrum(&self) -> SpectrumClass {
        match self.regime {
            Regime::Lrd => SpectrumClass::Lrd,
            Regime::Nd => SpectrumClass::Nd,
            Regime::Lrnd1 | Regime::Lrnd2 => SpectrumClass::Lrnd,
            Regime::Hyperbolic => {
                let e = self.exponents;
                match (e.upsilon1 > 0.0, e.upsilon2 > 0.0) {
                    (true, true) => SpectrumClass::Lrd,
                    (false, false) => SpectrumClass::Nd,
                    _ => SpectrumClass::Lrnd,
                }
            }
        }
    }

    /// The same model with the coordinates exchanged.
    pub fn swapped(&self) -> SpectralModel {
        let regime = match self.regime {
            Regime::Lrnd1 => Regime::Lrnd2,
            Regime::Lrnd2 => Regime::Lrnd1,
            r => r,
        };
        SpectralModel {
            regime,
            exponents: self.exponents.swapped(),
            profile: self.profile.swap(),
            mu: self.mu,
            ell: self.ell,
            p: self.p,
            correction: self.correction.clone(),
            swapped: !self.swapped,
        }
    }

    /// Reads the model as LRD with the same `f`; used where the LRND theory
    /// delegates to the LRD formulas.
    pub(crate) fn as_regime(&self, regime: Regime) -> SpectralModel {
        let mut m = self.clone();
        m.regime = regime;
        m
    }

    /// The serializable description; fails for custom profiles.
    pub fn to_spec(&self) -> Result<ModelSpec> {
        if self.swapped {
            return Err(Error::Config(
                "swapped models are internal and cannot be serialized".into(),
            ));
        }
        let angular = self
            .profile
            .to_text()
            .ok_or_else(|| Error::Config("custom angular profiles cannot be serialized".into()))?;
        Ok(ModelSpec {
            regime: self.regime,
            upsilon1: self.exponents.upsilon1,
            upsilon2: self.exponents.upsilon2,
            mu: self.mu,
            ell: self.ell,
            angular,
            p: self.p,
            correction: self.correction.as_ref().map(|c| c.source().to_string()),
        })
    }

    /// Short content hash of the serialized model.
    pub fn hash(&self) -> String {
        let text = match self.to_spec().and_then(|s| s.to_text()) {
            Ok(t) => t,
            Err(_) => format!("{self:?}"),
        };
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rho_values() {
        let e = RadialExponents::new(0.5, 1.2);
        assert_eq!(rho([1.0, 1.0], &e), 2.0);
        assert_eq!(rho([0.0, 0.3], &e), 0.3f64.powf(1.2));
        assert!((rho([0.5, 0.0], &e) - 0.7071067812).abs() < 1e-10);
        assert_eq!(rho([0.0, 0.0], &e), 0.0);
    }

    #[test]
    fn rho_p_values() {
        let e = RadialExponents::new(0.5, 1.2);
        for u in [[0.3, -1.1], [2.0, 0.01]] {
            assert_eq!(rho_p(u, &e, 1.0), rho(u, &e));
        }
        assert!((rho_p([1.0, 1.0], &e, 2.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rho_p_is_comparable_to_rho() {
        let e = RadialExponents::new(0.5, 1.2);
        for p in [0.5, 2.0, 3.0] {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..200 {
                let r = 1e-6 * (1e7f64).powf(i as f64 / 199.0);
                for k in 0..64 {
                    let th = 2.0 * PI * k as f64 / 64.0;
                    let u = [r * th.cos(), r * th.sin()];
                    let q = rho_p(u, &e, p) / rho(u, &e);
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
            }
            assert!(lo > 0.0 && hi.is_finite());
            // For two nonnegative terms the ratio lies between min and max of 1 and 2^{1/p - 1}.
            let c = 2f64.powf(1.0 / p - 1.0);
            assert!(
                lo >= c.min(1.0) - 1e-12 && hi <= c.max(1.0) + 1e-12,
                "{p}: {lo} {hi}"
            );
        }
    }

    #[test]
    fn angular_constant_and_invariance() {
        let m = SpectralModel::lrd(0.5, 1.2).unwrap();
        assert_eq!(m.angular_eval([0.3, -0.7]).unwrap(), 1.0);
        assert!(m.angular_eval([0.0, 0.0]).is_err());

        let spec = ModelSpec::new(Regime::Lrd, 0.5, 1.2).with_angular("1 + 0.5*s1^2 + 0.25*s1*s2");
        let m = spec.build().unwrap();
        let e = m.exponents();
        for u in [[0.3, -0.7], [1e-3, 2.0], [-2.0, 1e-4]] {
            let l = m.angular_eval(u).unwrap();
            for lambda in [0.1f64, 10.0] {
                let v = [
                    lambda.powf(1.0 / e.upsilon1) * u[0],
                    lambda.powf(1.0 / e.upsilon2) * u[1],
                ];
                assert!((m.angular_eval(v).unwrap() - l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lrnd_profile_vanishes_on_axis() {
        let m = SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0).unwrap();
        assert_eq!(m.angular_on_axis(1), 1.0);
        assert_eq!(m.angular_on_axis(0), 0.0);
        // Approach the axis u₂ = 0: L ≈ ℓ |s₂|^μ.
        let e = m.exponents();
        for t in [1e-2, 1e-4, 1e-6] {
            let u = [0.1, t];
            let s = normalize(u, &e);
            let l = m.angular_eval(u).unwrap();
            assert!((l - s[1].abs().powf(0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn densities() {
        let nd = SpectralModel::nd(0.5, 1.5).unwrap();
        assert_eq!(nd.spectral_density([0.0, 0.0]), 0.0);
        let lrd = SpectralModel::lrd(0.5, 0.5).unwrap();
        assert!((lrd.spectral_density([1.0, 1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(lrd.spectral_density([0.0, 0.0]), f64::INFINITY);
        let hyp = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        let v = hyp.spectral_density([0.5, 0.5]);
        assert!((v - 0.5f64.powf(-0.2)).abs() < 1e-12);
        assert!((v - 1.1486983550).abs() < 1e-9);
        assert_eq!(hyp.spectral_density([0.0, 0.5]), f64::INFINITY);
        assert_eq!(hyp.spectral_density([0.5, 0.0]), 0.0);
    }

    #[test]
    fn classification() {
        assert_eq!(
            SpectralModel::lrd(0.5, 1.2).unwrap().classify_spectrum(),
            SpectrumClass::Lrd
        );
        assert_eq!(
            SpectralModel::nd(0.5, 1.2).unwrap().classify_spectrum(),
            SpectrumClass::Nd
        );
        assert_eq!(
            SpectralModel::lrnd2(0.5, 0.8, 0.3, 1.0)
                .unwrap()
                .classify_spectrum(),
            SpectrumClass::Lrnd
        );
        let hyp = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        assert_eq!(hyp.classify_spectrum(), SpectrumClass::Lrnd);
        // f blows up approaching along u₂ = 0 and vanishes along u₁ = 0.
        let f_along_u1 = hyp.spectral_density([1e-8, 0.5]);
        let f_along_u2 = hyp.spectral_density([0.5, 1e-8]);
        assert!(f_along_u1 > 1e2 && f_along_u2 < 1e-1);
        assert_eq!(
            SpectralModel::hyperbolic(0.4, 0.2)
                .unwrap()
                .classify_spectrum(),
            SpectrumClass::Lrd
        );
        assert_eq!(
            SpectralModel::hyperbolic(-0.4, -0.2)
                .unwrap()
                .classify_spectrum(),
            SpectrumClass::Nd
        );
    }

    #[test]
    fn integrability() {
        let e = RadialExponents::new(0.5, 0.5);
        assert_eq!(
            check_integrability(&e, 1.0),
            Integrability {
                near_zero: true,
                at_infinity: false
            }
        );
        assert_eq!(
            check_integrability(&e, 4.0),
            Integrability {
                near_zero: false,
                at_infinity: false
            }
        );
        let e = RadialExponents::new(2.0, 2.0);
        assert!(!check_integrability(&e, 1.0).near_zero);
    }

    #[test]
    fn validation_errors() {
        assert!(SpectralModel::lrd(2.0, 2.0).is_err());
        assert!(SpectralModel::lrd(-0.5, 1.0).is_err());
        assert!(SpectralModel::hyperbolic(1.0, 0.5).is_err());
        assert!(SpectralModel::lrnd2(0.5, 0.8, 1.2, 1.0).is_err());
        assert!(SpectralModel::lrnd2(0.5, 0.8, 0.0, 1.0).is_err());
        assert!(ModelSpec::new(Regime::Lrd, 0.5, 0.5)
            .with_lrnd(0.3, 1.0)
            .build()
            .is_err());
        // Odd profile.
        assert!(ModelSpec::new(Regime::Lrd, 0.5, 0.5)
            .with_angular("1 + 0.5*s1")
            .build()
            .is_err());
        // Profile vanishing on an axis outside the LRND families.
        assert!(ModelSpec::new(Regime::Lrd, 0.5, 0.5)
            .with_angular("abs(s2)")
            .build()
            .is_err());
        // Doubly vanishing LRND profile.
        assert!(ModelSpec::new(Regime::Lrnd2, 0.5, 0.8)
            .with_lrnd(0.3, 1.0)
            .with_angular("abs(s1)")
            .build()
            .is_err());
    }

    #[test]
    fn symmetry_of_density() {
        let models = [
            ModelSpec::new(Regime::Lrd, 0.5, 1.2)
                .with_angular("1 + 0.5*s1*s2")
                .build()
                .unwrap(),
            SpectralModel::nd(0.7, 1.4).unwrap(),
            SpectralModel::lrnd2(0.5, 0.8, 0.3, 2.0).unwrap(),
            SpectralModel::hyperbolic(0.4, -0.2).unwrap(),
        ];
        for m in &models {
            for u in [[0.3, -1.7], [2.5, 0.01], [-0.001, 3.0]] {
                assert_eq!(m.spectral_density(u), m.spectral_density([-u[0], -u[1]]));
            }
        }
    }

    #[test]
    fn dilation_covariance() {
        let lrd = ModelSpec::new(Regime::Lrd, 0.5, 1.2)
            .with_angular("2 + s1*s2")
            .build()
            .unwrap();
        let nd = SpectralModel::nd(0.7, 1.4).unwrap();
        for (m, sign) in [(&lrd, -1.0), (&nd, 1.0)] {
            let e = m.exponents();
            for u in [[0.3, -0.2], [0.01, 0.5]] {
                for lambda in [0.5f64, 3.0] {
                    let v = [
                        lambda.powf(1.0 / e.upsilon1) * u[0],
                        lambda.powf(1.0 / e.upsilon2) * u[1],
                    ];
                    let ratio = m.leading_density(v) / m.leading_density(u);
                    assert!((ratio - lambda.powf(sign)).abs() < 1e-12 * lambda.powf(sign));
                }
            }
        }
    }

    #[test]
    fn swapping_exchanges_coordinates() {
        let m = ModelSpec::new(Regime::Lrnd2, 0.5, 0.8)
            .with_lrnd(0.3, 1.5)
            .with_angular("1 + 0.2*s1^2")
            .build()
            .unwrap();
        let s = m.swapped();
        assert_eq!(s.regime(), Regime::Lrnd1);
        for u in [[0.3, -0.2], [0.01, 0.5], [1.0, 0.0]] {
            let a = m.spectral_density(u);
            let b = s.spectral_density([u[1], u[0]]);
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn spec_text_round_trip() {
        let spec = ModelSpec::new(Regime::Lrnd2, 0.1 + 0.2, 0.8)
            .with_lrnd(0.3, 1.0 / 3.0)
            .with_angular("1 + 0.5*s1^2");
        let text = spec.to_text().unwrap();
        let back = ModelSpec::from_text(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.upsilon1.to_bits(), spec.upsilon1.to_bits());
        let m = back.build().unwrap();
        assert_eq!(m.to_spec().unwrap(), spec);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ModelSpec::from_text(
            "regime = \"lrd\"\nupsilon1 = 0.5\nupsilon2 = 0.5\nfoo = 1\n"
        )
        .is_err());
    }
}

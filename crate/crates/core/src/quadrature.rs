//! Quadrature for singular, oscillatory integrands in one and two dimensions.
//!
//! Every integrand has the form `K₁(u₁) K₂(u₂) g(u)` where `g` is real and
//! smooth away from the origin (and, for hyperbolic models, the axes) and the
//! `Kᵢ` are one of three kernels:
//!
//! * [`LineKernel::Plain`], `K = 1`;
//! * [`LineKernel::Dirichlet`], `D_n(u) conj(D_m(u))`;
//! * [`LineKernel::Step`], `(1 − e^{iux})/(iu) · conj((1 − e^{iuy})/(iu))`.
//!
//! Each axis is cut into panels that grade geometrically toward zero. Panels
//! far from zero (relative to the kernel frequency) use Filon–Legendre
//! weights, so the kernel oscillation is integrated exactly and only the slowly
//! varying part is interpolated; panels near zero evaluate the kernel
//! directly. Two-dimensional rules are tensor products of the axis rules.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::RadialExponents;

pub const DEFAULT_TOL_1D: f64 = 1e-8;
pub const DEFAULT_TOL_2D: f64 = 1e-6;

const ORDER_HI: usize = 16;
const ORDER_LO: usize = 12;
const MOMENT_ORDER: usize = 48;
const BASE_RATIO: f64 = 6.0;
const DIRECT_SWITCH: f64 = 2.0;
// Grids are fixed per level so that a tighter tolerance only adds levels.
const GRID_TOL: f64 = 1e-12;

/// `D_n(u) = Σ_{t=1..n} e^{itu}`.
pub fn dirichlet(n: u64, u: f64) -> Complex64 {
    if n == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let half = 0.5 * u;
    let s = half.sin();
    if s == 0.0 {
        return Complex64::new(n as f64, 0.0);
    }
    let nf = n as f64;
    let amp = (nf * half).sin() / s;
    Complex64::from_polar(1.0, (nf + 1.0) * half) * amp
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d.is_finite() { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn legendre_values(m: usize, t: f64) -> Vec<f64> {
    let mut p = vec![0.0; m];
    p[0] = 1.0;
    if m > 1 {
        p[1] = t;
    }
    for k in 2..m {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * t * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

/// Gauss rule plus the Legendre projection matrix `Q[j][k] = (2k+1)/2 · w_j P_k(t_j)`.
struct PanelRule {
    t: Vec<f64>,
    w: Vec<f64>,
    q: Vec<Vec<f64>>,
}

impl PanelRule {
    fn new(m: usize) -> Self {
        let (t, w) = gauss_legendre(m);
        let q = t
            .iter()
            .zip(&w)
            .map(|(&tj, &wj)| {
                legendre_values(m, tj)
                    .iter()
                    .enumerate()
                    .map(|(k, pk)| (2.0 * k as f64 + 1.0) * 0.5 * wj * pk)
                    .collect()
            })
            .collect();
        PanelRule { t, w, q }
    }
}

fn panel_rule(m: usize) -> &'static PanelRule {
    static HI: OnceLock<PanelRule> = OnceLock::new();
    static LO: OnceLock<PanelRule> = OnceLock::new();
    match m {
        ORDER_HI => HI.get_or_init(|| PanelRule::new(ORDER_HI)),
        ORDER_LO => LO.get_or_init(|| PanelRule::new(ORDER_LO)),
        _ => panic!("unsupported panel order {m}"),
    }
}

fn moment_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(MOMENT_ORDER))
}

/// `μ_k(θ) = ∫_{-1}^{1} P_k(t) e^{iθt} dt = 2 i^k j_k(θ)` for `k < m`.
fn legendre_moments(theta: f64, m: usize) -> Vec<Complex64> {
    if theta.abs() <= 20.0 {
        let (t, w) = moment_rule();
        let mut mu = vec![Complex64::new(0.0, 0.0); m];
        for (&tj, &wj) in t.iter().zip(w) {
            let e = Complex64::from_polar(wj, theta * tj);
            for (k, pk) in legendre_values(m, tj).into_iter().enumerate() {
                mu[k] += e * pk;
            }
        }
        return mu;
    }
    // Upward recurrence for spherical Bessel functions is stable while k < |θ|.
    let (s, c) = theta.sin_cos();
    let mut j = vec![0.0; m];
    j[0] = s / theta;
    if m > 1 {
        j[1] = s / (theta * theta) - c / theta;
    }
    for k in 1..m.saturating_sub(1) {
        j[k + 1] = (2.0 * k as f64 + 1.0) / theta * j[k] - j[k - 1];
    }
    let ipow = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    j.iter()
        .enumerate()
        .map(|(k, jk)| ipow[k % 4] * (2.0 * jk))
        .collect()
}

/// One-dimensional weight function of a tensor integrand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LineKernel {
    Plain,
    /// `D_n(u) conj(D_m(u))` on the torus.
    Dirichlet {
        n: u64,
        m: u64,
    },
    /// `(1 − e^{iux})/(iu) · conj((1 − e^{iuy})/(iu))` on the real line.
    Step {
        x: f64,
        y: f64,
    },
}

impl LineKernel {
    /// Stable direct evaluation.
    pub fn eval(&self, u: f64) -> Complex64 {
        match *self {
            LineKernel::Plain => Complex64::new(1.0, 0.0),
            LineKernel::Dirichlet { n, m } => {
                let (nf, mf) = (n as f64, m as f64);
                let s = (0.5 * u).sin();
                if s == 0.0 {
                    return dirichlet(n, u) * dirichlet(m, u).conj();
                }
                let amp = (0.5 * nf * u).sin() * (0.5 * mf * u).sin() / (s * s);
                Complex64::from_polar(1.0, 0.5 * (nf - mf) * u) * amp
            }
            LineKernel::Step { x, y } => {
                if u == 0.0 {
                    return Complex64::new(x * y, 0.0);
                }
                let amp = 4.0 * (0.5 * u * x).sin() * (0.5 * u * y).sin() / (u * u);
                Complex64::from_polar(1.0, 0.5 * (x - y) * u) * amp
            }
        }
    }

    /// Exponential components `(ω, c)` of the numerator.
    fn components(&self) -> Vec<(f64, f64)> {
        match *self {
            LineKernel::Plain => vec![(0.0, 1.0)],
            LineKernel::Dirichlet { n, m } => {
                let (n, m) = (n as f64, m as f64);
                vec![(n - m, 1.0), (n, -1.0), (-m, -1.0), (0.0, 1.0)]
            }
            LineKernel::Step { x, y } => vec![(x - y, 1.0), (x, -1.0), (-y, -1.0), (0.0, 1.0)],
        }
    }

    fn denominator(&self, u: f64) -> f64 {
        match self {
            LineKernel::Plain => 1.0,
            LineKernel::Dirichlet { .. } => {
                let s = (0.5 * u).sin();
                4.0 * s * s
            }
            LineKernel::Step { .. } => u * u,
        }
    }

    pub fn max_frequency(&self) -> f64 {
        match *self {
            LineKernel::Plain => 0.0,
            LineKernel::Dirichlet { n, m } => n.max(m) as f64,
            LineKernel::Step { x, y } => x.abs().max(y.abs()),
        }
    }
}

/// Integration range of one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// `[-π, π]`
    Torus,
    /// `R`
    Line,
}

/// One axis of a tensor integrand.
#[derive(Clone, Copy, Debug)]
pub struct Axis {
    pub support: Support,
    pub kernel: LineKernel,
    /// `p` such that the full integrand is `O(|uᵢ|^{-p})` as `|uᵢ| → ∞`; line support only.
    pub decay: f64,
}

impl Axis {
    pub fn torus(kernel: LineKernel) -> Self {
        Axis {
            support: Support::Torus,
            kernel,
            decay: 0.0,
        }
    }

    pub fn line(kernel: LineKernel, decay: f64) -> Self {
        Axis {
            support: Support::Line,
            kernel,
            decay,
        }
    }

    fn scale(&self) -> f64 {
        1.0 / self.kernel.max_frequency().max(1.0)
    }
}

/// Declared behavior of `g` near its singular set.
#[derive(Clone, Copy, Debug)]
pub enum Singularity {
    None,
    /// `|g(u)| ≤ C ρ(u)^{-w}` near the origin.
    Radial {
        w: f64,
        exponents: RadialExponents,
    },
    /// `|g(u)| ≤ C |u₁|^{-w₁} |u₂|^{-w₂}` near the axes.
    Axes {
        w: [f64; 2],
    },
}

impl Singularity {
    /// Exponent `e` such that the cell `[0, ε]²` contributes `O(ε^e)`.
    pub(crate) fn origin_exponent(&self) -> Result<f64> {
        match *self {
            Singularity::None => Ok(1.0),
            Singularity::Radial { w, exponents } => {
                let big = exponents.integrability_index();
                if w >= big {
                    return Err(Error::Divergent(format!(
                        "singular exponent {w} is not below Υ = {big}"
                    )));
                }
                let e = exponents.upsilon1.min(exponents.upsilon2) * (big - w.max(0.0));
                Ok(e.min(1.0))
            }
            Singularity::Axes { w } => {
                if w[0] >= 1.0 || w[1] >= 1.0 {
                    return Err(Error::Divergent(format!(
                        "axis singular exponents {w:?} must be below 1"
                    )));
                }
                Ok((1.0 - w[0].max(0.0)).min(1.0 - w[1].max(0.0)))
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    /// Relative tolerance.
    pub tol: f64,
    /// Absolute floor below which the error estimate is always accepted.
    pub abs_tol: f64,
    pub max_level: usize,
    pub trace: bool,
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        QuadOptions {
            tol,
            abs_tol: 0.0,
            max_level: 3,
            trace: false,
        }
    }
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions::with_tol(DEFAULT_TOL_2D)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub level: usize,
    pub panels: usize,
    pub nodes: usize,
    pub value: f64,
    pub estimate: f64,
}

#[derive(Clone, Debug)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub cells_used: usize,
    /// Imaginary part of the complex sum; zero by construction for even integrands.
    pub imag_residue: f64,
    pub trace: Vec<TraceRow>,
}

impl QuadratureResult {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("level,panels,nodes,value,estimate\n");
        for r in &self.trace {
            let _ = writeln!(
                s,
                "{},{},{},{:.17e},{:.17e}",
                r.level, r.panels, r.nodes, r.value, r.estimate
            );
        }
        s
    }
}

/// Positive-half nodes of one axis with complex weights.
struct AxisRule {
    nodes: Vec<f64>,
    weights: Vec<Complex64>,
}

fn breakpoints(axis: &Axis, origin_exp: f64, level: usize) -> Result<Vec<f64>> {
    let s = axis.scale();
    let e = origin_exp.max(0.05);
    let shrink = (GRID_TOL * 1e-2).powf(1.0 / e).max(1e-250) * 10f64.powi(-(level as i32));
    let u_min = s * shrink.min(1e-6);
    let upper = match axis.support {
        Support::Torus => PI,
        Support::Line => {
            if !(axis.decay > 1.0) {
                return Err(Error::Divergent(format!(
                    "declared decay exponent {} must exceed 1",
                    axis.decay
                )));
            }
            let r = (1e2 / GRID_TOL)
                .powf(1.0 / (axis.decay - 1.0))
                .clamp(1e3, 1e250);
            s * r * 10f64.powi(level as i32)
        }
    };
    let ratio = BASE_RATIO.powf(0.5f64.powi(level as i32));
    let mut b = vec![0.0, u_min];
    let mut x = u_min;
    while x * ratio < upper {
        x *= ratio;
        b.push(x);
    }
    if upper / x < ratio.sqrt() && b.len() > 2 {
        b.pop();
    }
    b.push(upper);
    Ok(b)
}

/// Gauss rule on `[0, len]` with panels graded geometrically toward zero,
/// for integrands with an integrable singularity of order `origin_exp` there.
pub fn graded_rule(len: f64, origin_exp: f64) -> (Vec<f64>, Vec<f64>) {
    let axis = Axis::torus(LineKernel::Plain);
    let mut breaks = breakpoints(&axis, origin_exp, 0).expect("torus breakpoints");
    for b in breaks.iter_mut() {
        *b *= len / PI;
    }
    let rule = panel_rule(ORDER_HI);
    let mut nodes = Vec::with_capacity(ORDER_HI * breaks.len());
    let mut weights = Vec::with_capacity(ORDER_HI * breaks.len());
    for win in breaks.windows(2) {
        let (c, h) = (0.5 * (win[0] + win[1]), 0.5 * (win[1] - win[0]));
        for (&t, &w) in rule.t.iter().zip(&rule.w) {
            nodes.push(c + h * t);
            weights.push(h * w);
        }
    }
    (nodes, weights)
}

fn axis_rule(axis: &Axis, breaks: &[f64], order: usize) -> AxisRule {
    let rule = panel_rule(order);
    let comps = axis.kernel.components();
    let n_max = axis.kernel.max_frequency();
    let mut nodes = Vec::with_capacity(order * breaks.len());
    let mut weights = Vec::with_capacity(order * breaks.len());
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        if b * n_max <= DIRECT_SWITCH {
            for (&t, &w) in rule.t.iter().zip(&rule.w) {
                let u = c + h * t;
                nodes.push(u);
                weights.push(axis.kernel.eval(u) * (h * w));
            }
        } else {
            let mut acc = vec![Complex64::new(0.0, 0.0); order];
            for &(omega, coef) in &comps {
                let mu = legendre_moments(omega * h, order);
                let phase = Complex64::from_polar(coef * h, omega * c);
                for (j, qj) in rule.q.iter().enumerate() {
                    let mut sum = Complex64::new(0.0, 0.0);
                    for (k, &qjk) in qj.iter().enumerate() {
                        sum += mu[k] * qjk;
                    }
                    acc[j] += phase * sum;
                }
            }
            for (j, &t) in rule.t.iter().enumerate() {
                let u = c + h * t;
                nodes.push(u);
                weights.push(acc[j] / axis.kernel.denominator(u));
            }
        }
    }
    AxisRule { nodes, weights }
}

fn spot_check_decay(g: &dyn Fn(f64) -> f64, axis: &Axis, upper: f64) -> Result<()> {
    if axis.support != Support::Line {
        return Ok(());
    }
    let p = axis.decay;
    let k = axis.kernel;
    let scaled = |u: f64| (k.eval(u).norm() * g(u)).abs() * u.abs().powf(p);
    let reference = (0..16)
        .map(|i| {
            let u = upper * 1e-3 * 2f64.powf(i as f64 / 4.0);
            scaled(u).max(scaled(-u))
        })
        .fold(0.0, f64::max);
    for i in 0..16 {
        let u = upper * 2f64.powf(i as f64 / 4.0);
        let v = scaled(u).max(scaled(-u));
        if v.is_nan() || v > 1e3 * reference.max(f64::MIN_POSITIVE) && v > 1e-300 {
            return Err(Error::Config(format!(
                "integrand violates its declared |u|^-{p} decay at u = {u:e}"
            )));
        }
    }
    Ok(())
}

/// A real function on `R` integrated against a [`LineKernel`].
pub struct LineIntegrand<'a> {
    pub g: &'a (dyn Fn(f64) -> f64 + Sync),
    pub axis: Axis,
    /// `|g(u)| ≤ C |u|^{-w}` near zero.
    pub w: f64,
    /// `g(u) = g(-u)`.
    pub even: bool,
}

fn line_sum(ig: &LineIntegrand<'_>, rule: &AxisRule) -> Complex64 {
    let mut pos = Complex64::new(0.0, 0.0);
    let mut neg = Complex64::new(0.0, 0.0);
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let gp = (ig.g)(u);
        pos += w * gp;
        if !ig.even {
            neg += w.conj() * (ig.g)(-u);
        }
    }
    if ig.even {
        Complex64::new(2.0 * pos.re, 0.0)
    } else {
        pos + neg
    }
}

/// `∫ K(u) g(u) du` over the axis support.
pub fn integrate_line(ig: &LineIntegrand<'_>, opts: &QuadOptions) -> Result<QuadratureResult> {
    if ig.w >= 1.0 {
        return Err(Error::Divergent(format!(
            "singular exponent {} must be below 1",
            ig.w
        )));
    }
    let origin_exp = 1.0 - ig.w.max(0.0);
    let mut best: Option<QuadratureResult> = None;
    let mut trace = Vec::new();
    for level in 0..=opts.max_level {
        let breaks = breakpoints(&ig.axis, origin_exp, level)?;
        if level == 0 {
            spot_check_decay(ig.g, &ig.axis, *breaks.last().unwrap())?;
        }
        let hi = line_sum(ig, &axis_rule(&ig.axis, &breaks, ORDER_HI));
        let lo = line_sum(ig, &axis_rule(&ig.axis, &breaks, ORDER_LO));
        let estimate = (hi - lo).norm();
        if !hi.re.is_finite() {
            return Err(Error::Domain(
                "integrand produced a non-finite value".into(),
            ));
        }
        let panels = breaks.len() - 1;
        trace.push(TraceRow {
            level,
            panels,
            nodes: panels * ORDER_HI,
            value: hi.re,
            estimate,
        });
        let improve = best
            .as_ref()
            .map_or(true, |b| estimate <= b.abs_error_estimate);
        if improve {
            best = Some(QuadratureResult {
                value: hi.re,
                abs_error_estimate: estimate,
                cells_used: 2 * panels,
                imag_residue: hi.im,
                trace: Vec::new(),
            });
        }
        let b = best.as_ref().unwrap();
        if b.abs_error_estimate <= (opts.tol * b.value.abs()).max(opts.abs_tol) {
            break;
        }
    }
    finish(best.unwrap(), trace, opts)
}

fn finish(
    mut best: QuadratureResult,
    trace: Vec<TraceRow>,
    opts: &QuadOptions,
) -> Result<QuadratureResult> {
    if best.abs_error_estimate > (opts.tol * best.value.abs()).max(opts.abs_tol) {
        return Err(Error::NonConvergence {
            cells: best.cells_used,
            estimate: best.abs_error_estimate,
            tol: opts.tol,
        });
    }
    if opts.trace {
        best.trace = trace;
    }
    Ok(best)
}

/// A real function on the plane integrated against a tensor kernel.
pub struct SingularIntegrand2D<'a> {
    pub g: &'a (dyn Fn(f64, f64) -> f64 + Sync),
    pub axes: [Axis; 2],
    pub singularity: Singularity,
    /// `g(u) = g(-u)`.
    pub even: bool,
}

fn tensor_sum(ig: &SingularIntegrand2D<'_>, r1: &AxisRule, r2: &AxisRule) -> Complex64 {
    let row = |u1: f64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&v, &w) in r2.nodes.iter().zip(&r2.weights) {
            acc += w * (ig.g)(u1, v) + w.conj() * (ig.g)(u1, -v);
        }
        acc
    };
    let half: Vec<Complex64> = r1
        .nodes
        .par_iter()
        .zip(r1.weights.par_iter())
        .map(|(&u, &w)| w * row(u))
        .collect();
    let pos: Complex64 = half.iter().sum();
    if ig.even {
        return Complex64::new(2.0 * pos.re, 0.0);
    }
    let other: Vec<Complex64> = r1
        .nodes
        .par_iter()
        .zip(r1.weights.par_iter())
        .map(|(&u, &w)| w.conj() * row(-u))
        .collect();
    pos + other.iter().sum::<Complex64>()
}

/// `∫ K₁(u₁) K₂(u₂) g(u) du` over the product of the axis supports.
pub fn integrate_singular_2d(
    ig: &SingularIntegrand2D<'_>,
    opts: &QuadOptions,
) -> Result<QuadratureResult> {
    let origin_exp = ig.singularity.origin_exponent()?;
    let mut best: Option<QuadratureResult> = None;
    let mut trace = Vec::new();
    for level in 0..=opts.max_level {
        let b1 = breakpoints(&ig.axes[0], origin_exp, level)?;
        let b2 = breakpoints(&ig.axes[1], origin_exp, level)?;
        if level == 0 {
            let s = [ig.axes[0].scale(), ig.axes[1].scale()];
            spot_check_decay(&|u| (ig.g)(u, s[1]), &ig.axes[0], *b1.last().unwrap())?;
            spot_check_decay(&|u| (ig.g)(s[0], u), &ig.axes[1], *b2.last().unwrap())?;
        }
        let hi = tensor_sum(
            ig,
            &axis_rule(&ig.axes[0], &b1, ORDER_HI),
            &axis_rule(&ig.axes[1], &b2, ORDER_HI),
        );
        let lo = tensor_sum(
            ig,
            &axis_rule(&ig.axes[0], &b1, ORDER_LO),
            &axis_rule(&ig.axes[1], &b2, ORDER_LO),
        );
        if !hi.re.is_finite() {
            return Err(Error::Domain(
                "integrand produced a non-finite value".into(),
            ));
        }
        let estimate = (hi - lo).norm();
        let cells = 4 * (b1.len() - 1) * (b2.len() - 1);
        trace.push(TraceRow {
            level,
            panels: cells,
            nodes: cells * ORDER_HI * ORDER_HI,
            value: hi.re,
            estimate,
        });
        let improve = best
            .as_ref()
            .map_or(true, |b| estimate <= b.abs_error_estimate);
        if improve {
            best = Some(QuadratureResult {
                value: hi.re,
                abs_error_estimate: estimate,
                cells_used: cells,
                imag_residue: hi.im,
                trace: Vec::new(),
            });
        }
        let b = best.as_ref().unwrap();
        if b.abs_error_estimate <= (opts.tol * b.value.abs()).max(opts.abs_tol) {
            break;
        }
    }
    finish(best.unwrap(), trace, opts)
}

//! Scaling experiments: anisotropic partial sums, Monte Carlo moments,
//! exponent fits, kink detection and theory-versus-measurement reports.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::SpectralModel;
use crate::oracle::{finite_cov, sides};
use crate::output::{csv_string, num};
use crate::synth::{
    ma_coefficients, CoefficientSums, Innovations, LatticeField, Law, MaCoefficients,
};
use crate::theory::{self, ScalingPrediction};

/// `S_{λ,γ}(x)` on a list of points.
#[derive(Clone, Debug, Serialize)]
pub struct PartialSumGrid {
    pub lambda: f64,
    pub gamma: f64,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl PartialSumGrid {
    /// Divides by `d`.
    pub fn normalize(mut self, d: f64) -> Self {
        for v in &mut self.values {
            *v /= d;
        }
        self.normalized = true;
        self
    }
}

/// One summed-area pass, then `S(x) = P([λx₁], [λ^γx₂])`.
pub fn partial_sum_grid(
    field: &LatticeField,
    lambda: f64,
    gamma: f64,
    x_grid: &[[f64; 2]],
) -> Result<PartialSumGrid> {
    let (n1, n2) = (field.n1, field.n2);
    let mut need = [0u64; 2];
    for x in x_grid {
        let s = sides(lambda, gamma, *x);
        need = [need[0].max(s[0]), need[1].max(s[1])];
    }
    if need[0] as usize > n1 || need[1] as usize > n2 {
        return Err(Error::Geometry(format!(
            "partial sums need a {need:?} lattice, field is {n1}×{n2}"
        )));
    }
    let w = n2 + 1;
    let mut p = vec![0.0; (n1 + 1) * w];
    for i in 0..n1 {
        let mut row = 0.0;
        for j in 0..n2 {
            row += field.values[i * n2 + j];
            p[(i + 1) * w + j + 1] = p[i * w + j + 1] + row;
        }
    }
    let values = x_grid
        .iter()
        .map(|x| {
            let s = sides(lambda, gamma, *x);
            p[s[0] as usize * w + s[1] as usize]
        })
        .collect();
    Ok(PartialSumGrid {
        lambda,
        gamma,
        points: x_grid.to_vec(),
        values,
        normalized: false,
    })
}

/// Delete-one jackknife standard error of `stat`, given leave-one-out values.
fn jackknife_se(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

#[derive(Clone, Copy, Debug)]
struct PowerSums {
    n: f64,
    s: [f64; 4],
}

impl PowerSums {
    fn of(xs: &[f64]) -> Self {
        let mut s = [0.0; 4];
        for &x in xs {
            let mut p = x;
            for k in 0..4 {
                s[k] += p;
                p *= x;
            }
        }
        PowerSums {
            n: xs.len() as f64,
            s,
        }
    }

    fn without(&self, x: f64) -> Self {
        let mut s = self.s;
        let mut p = x;
        for v in s.iter_mut() {
            *v -= p;
            p *= x;
        }
        PowerSums { n: self.n - 1.0, s }
    }

    /// Unbiased variance, skewness, excess kurtosis.
    fn moments(&self) -> (f64, f64, f64, f64) {
        let n = self.n;
        let m = self.s[0] / n;
        let e2 = self.s[1] / n;
        let e3 = self.s[2] / n;
        let e4 = self.s[3] / n;
        let c2 = e2 - m * m;
        let c3 = e3 - 3.0 * m * e2 + 2.0 * m.powi(3);
        let c4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        (
            m,
            c2 * n / (n - 1.0),
            c3 / c2.powf(1.5),
            c4 / (c2 * c2) - 3.0,
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointMoments {
    pub x: [f64; 2],
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub excess_kurtosis_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCovariance {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub cov: f64,
    pub se: f64,
}

/// Moments of `d⁻¹ S_{λ,γ}(x)` over replicas.
#[derive(Clone, Debug, Serialize)]
pub struct MomentTable {
    pub lambda: f64,
    pub gamma: f64,
    pub law: Law,
    pub seed: u64,
    pub replicas: usize,
    pub window: usize,
    pub l2_mass_captured: f64,
    pub normalization: f64,
    pub points: Vec<PointMoments>,
    pub covariances: Vec<PairCovariance>,
    /// `d⁻¹ S(x)` per replica (outer) and point (inner).
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct McOptions {
    pub law: Law,
    pub seed: u64,
    pub replicas: usize,
    /// Coefficient window; `None` picks `8 ×` the largest side.
    pub window: Option<usize>,
}

/// Default coefficient window: a power of two, at least eight times `side`.
pub fn default_window(side: u64) -> usize {
    (8 * side as usize).next_power_of_two().max(64)
}

/// Partial sums as `S(x) = Σ_s g_x(s) ε(s)` with `g_x = a ⋆ 1_{K_x}`; the
/// innovations are the ones [`crate::synth::Synthesizer`] uses.
pub struct RectangleSampler {
    sides: Vec<[u64; 2]>,
    lo: [i64; 2],
    dims: [usize; 2],
    weights: Vec<Vec<f64>>,
}

impl RectangleSampler {
    pub fn new(coeffs: &MaCoefficients, sides: &[[u64; 2]]) -> Result<Self> {
        if sides.iter().any(|s| s.contains(&0)) {
            return Err(Error::Geometry(format!("empty rectangle among {sides:?}")));
        }
        let sums = CoefficientSums::new(coeffs);
        let big = [
            sides.iter().map(|s| s[0]).max().unwrap_or(1),
            sides.iter().map(|s| s[1]).max().unwrap_or(1),
        ];
        let [(lo1, hi1), (lo2, hi2)] = sums.support(big);
        let dims = [(hi1 - lo1 + 1) as usize, (hi2 - lo2 + 1) as usize];
        let weights = sides
            .par_iter()
            .map(|n| {
                let mut w = Vec::with_capacity(dims[0] * dims[1]);
                for i in 0..dims[0] as i64 {
                    for j in 0..dims[1] as i64 {
                        w.push(sums.rect_weight(*n, [lo1 + i, lo2 + j]));
                    }
                }
                w
            })
            .collect();
        Ok(RectangleSampler {
            sides: sides.to_vec(),
            lo: [lo1, lo2],
            dims,
            weights,
        })
    }

    pub fn sides(&self) -> &[[u64; 2]] {
        &self.sides
    }

    /// `S` for every rectangle under one replica's innovations.
    pub fn sample(&self, innov: &Innovations) -> Vec<f64> {
        let mut acc = vec![0.0; self.weights.len()];
        for i in 0..self.dims[0] {
            let e = innov.row(self.lo[0] + i as i64, self.lo[1], self.dims[1]);
            let off = i * self.dims[1];
            for (a, w) in acc.iter_mut().zip(&self.weights) {
                let row = &w[off..off + self.dims[1]];
                *a += row.iter().zip(&e).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        acc
    }
}

pub fn mc_moments(
    model: &SpectralModel,
    lambda: f64,
    gamma: f64,
    x_points: &[[f64; 2]],
    opts: &McOptions,
) -> Result<MomentTable> {
    if opts.replicas < 100 {
        return Err(Error::Config(format!(
            "Monte Carlo moments need ≥ 100 replicas, got {}",
            opts.replicas
        )));
    }
    if x_points.is_empty() {
        return Err(Error::Config("no x points given".into()));
    }
    let side_list: Vec<[u64; 2]> = x_points.iter().map(|x| sides(lambda, gamma, *x)).collect();
    let biggest = side_list
        .iter()
        .flat_map(|s| s.iter().copied())
        .max()
        .unwrap();
    let window = opts.window.unwrap_or_else(|| default_window(biggest));
    let coeffs = Arc::new(ma_coefficients(model, window)?);
    let d = theory::normalization(model, gamma, lambda)?;
    moments_with(&coeffs, lambda, gamma, x_points, opts, d)
}

/// [`mc_moments`] with precomputed coefficients and normalization.
pub fn moments_with(
    coeffs: &MaCoefficients,
    lambda: f64,
    gamma: f64,
    x_points: &[[f64; 2]],
    opts: &McOptions,
    d: f64,
) -> Result<MomentTable> {
    let side_list: Vec<[u64; 2]> = x_points.iter().map(|x| sides(lambda, gamma, *x)).collect();
    let sampler = RectangleSampler::new(coeffs, &side_list)?;
    let samples: Vec<Vec<f64>> = (0..opts.replicas as u64)
        .into_par_iter()
        .map(|r| {
            sampler
                .sample(&Innovations::new(opts.law, opts.seed, r))
                .into_iter()
                .map(|s| s / d)
                .collect()
        })
        .collect();

    let np = x_points.len();
    let mut points = Vec::with_capacity(np);
    for (p, x) in x_points.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[p]).collect();
        let all = PowerSums::of(&col);
        let (mean, variance, skewness, excess_kurtosis) = all.moments();
        let loo: Vec<(f64, f64, f64, f64)> =
            col.iter().map(|v| all.without(*v).moments()).collect();
        let se = |k: usize| {
            let v: Vec<f64> = loo
                .iter()
                .map(|t| match k {
                    0 => t.0,
                    1 => t.1,
                    2 => t.2,
                    _ => t.3,
                })
                .collect();
            jackknife_se(&v)
        };
        points.push(PointMoments {
            x: *x,
            mean,
            mean_se: se(0),
            variance,
            variance_se: se(1),
            skewness,
            skewness_se: se(2),
            excess_kurtosis,
            excess_kurtosis_se: se(3),
        });
    }
    let mut covariances = Vec::new();
    let n = samples.len() as f64;
    for i in 0..np {
        for j in i + 1..np {
            let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
            for s in &samples {
                sx += s[i];
                sy += s[j];
                sxy += s[i] * s[j];
            }
            let cov_of = |sx: f64, sy: f64, sxy: f64, n: f64| (sxy - sx * sy / n) / (n - 1.0);
            let loo: Vec<f64> = samples
                .iter()
                .map(|s| cov_of(sx - s[i], sy - s[j], sxy - s[i] * s[j], n - 1.0))
                .collect();
            covariances.push(PairCovariance {
                x: x_points[i],
                y: x_points[j],
                cov: cov_of(sx, sy, sxy, n),
                se: jackknife_se(&loo),
            });
        }
    }
    Ok(MomentTable {
        lambda,
        gamma,
        law: opts.law,
        seed: opts.seed,
        replicas: opts.replicas,
        window: coeffs.window(),
        l2_mass_captured: coeffs.l2_mass_captured(),
        normalization: d,
        points,
        covariances,
        samples,
    })
}

/// Exponent fit `log Var = 2H log λ [+ log log λ] + c`.
#[derive(Clone, Debug, Serialize)]
pub struct HurstFit {
    #[serde(rename = "H")]
    pub h: f64,
    pub half_width: f64,
    pub intercept: f64,
    pub log_corrected: bool,
    /// Free coefficient of `log log λ` in a three-term fit; near 1 in the
    /// log-normalized cases, near 0 otherwise.
    pub loglog_coefficient: Option<f64>,
    pub log_flag: bool,
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let xtx = x.transpose() * x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Insufficient("singular design in least squares".into()))?;
    let beta = &inv * x.transpose() * y;
    let resid = y - x * &beta;
    Ok((beta, inv, resid.norm_squared()))
}

fn t_quantile(dof: f64) -> f64 {
    if dof < 1.0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY)
}

pub fn estimate_h(rows: &[(f64, f64)], log_correction: bool) -> Result<HurstFit> {
    let mut lambdas: Vec<f64> = rows.iter().map(|r| r.0).collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lambdas.dedup();
    if lambdas.len() < 4 {
        return Err(Error::Insufficient(format!(
            "need ≥ 4 distinct λ, got {}",
            lambdas.len()
        )));
    }
    if rows.iter().any(|r| !(r.0 > 1.0) || !(r.1 > 0.0)) {
        return Err(Error::Domain(
            "λ must exceed 1 and variances must be positive".into(),
        ));
    }
    if rows.iter().all(|r| r.1 == rows[0].1) {
        return Err(Error::Insufficient(
            "constant variances carry no exponent".into(),
        ));
    }
    let n = rows.len();
    let ll = |l: f64| l.ln().ln().max(0.0);
    let y = DVector::from_iterator(
        n,
        rows.iter()
            .map(|(l, v)| v.ln() - if log_correction { ll(*l) } else { 0.0 }),
    );
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { rows[i].0.ln() } else { 1.0 });
    let (beta, inv, sse) = least_squares(&x, &y)?;
    let dof = n as f64 - 2.0;
    let s2 = if dof > 0.0 { sse / dof } else { 0.0 };
    let se = (s2 * inv[(0, 0)]).sqrt();
    let half_width = 0.5 * t_quantile(dof) * se;

    let loglog_coefficient = if n >= 4 {
        let y3 = DVector::from_iterator(n, rows.iter().map(|(_, v)| v.ln()));
        let x3 = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => rows[i].0.ln(),
            1 => ll(rows[i].0),
            _ => 1.0,
        });
        least_squares(&x3, &y3).ok().map(|(b, _, _)| b[1])
    } else {
        None
    };
    let log_flag = loglog_coefficient.map_or(false, |c| (c - 1.0).abs() < c.abs());
    Ok(HurstFit {
        h: 0.5 * beta[0],
        half_width: if half_width.is_finite() {
            half_width
        } else {
            0.0
        },
        intercept: beta[1],
        log_corrected: log_correction,
        loglog_coefficient,
        log_flag,
    })
}

/// Continuous two-segment fit of `(γ, Ĥ)`.
#[derive(Clone, Debug, Serialize)]
pub struct KinkFit {
    pub gamma0: f64,
    pub half_width: f64,
    pub slopes: [f64; 2],
    pub slope_stderr: f64,
    pub strength: f64,
    pub threshold: f64,
    pub kink: bool,
    pub sse: f64,
}

pub const KINK_FLOOR: f64 = 0.05;

struct Hinge {
    beta: DVector<f64>,
    inv: DMatrix<f64>,
    sse: f64,
}

fn hinge_fit(pts: &[(f64, f64)], b: f64) -> Option<Hinge> {
    let n = pts.len();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => pts[i].0,
        _ => (pts[i].0 - b).max(0.0),
    });
    let y = DVector::from_iterator(n, pts.iter().map(|p| p.1));
    least_squares(&x, &y)
        .ok()
        .map(|(beta, inv, sse)| Hinge { beta, inv, sse })
}

pub fn detect_kink(samples: &[(f64, f64)]) -> Result<KinkFit> {
    let mut pts = samples.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| a.0 == b.0);
    let n = pts.len();
    if n < 6 {
        return Err(Error::Insufficient(format!(
            "kink detection needs ≥ 6 distinct γ, got {n}"
        )));
    }
    let sse_at = |b: f64| hinge_fit(&pts, b).map_or(f64::INFINITY, |h| h.sse);
    // Breakpoints leave at least two points on each side.
    let mut best = (f64::INFINITY, pts[1].0);
    for i in 1..n - 2 {
        let (lo, hi) = (pts[i].0, pts[i + 1].0);
        let (b, s) = golden_min(&sse_at, lo, hi);
        for (bb, ss) in [(lo, sse_at(lo)), (b, s), (hi, sse_at(hi))] {
            if ss < best.0 {
                best = (ss, bb);
            }
        }
    }
    let (sse, b) = best;
    let fit =
        hinge_fit(&pts, b).ok_or_else(|| Error::Insufficient("degenerate γ design".into()))?;
    let dof = n as f64 - 4.0;
    let s2 = if dof > 0.0 { sse / dof } else { 0.0 };
    let slope_left = fit.beta[1];
    let delta = fit.beta[2];
    let slope_stderr = (s2 * fit.inv[(2, 2)]).max(0.0).sqrt();
    let threshold = KINK_FLOOR.max(3.0 * slope_stderr);
    let strength = delta.abs();

    // Profile interval {b : SSE(b) ≤ SSE_min + s² t²}.
    let crit = sse + s2 * t_quantile(dof).powi(2);
    let step = (pts[n - 1].0 - pts[0].0) / 2000.0;
    let mut lo = b;
    while lo - step > pts[1].0 && sse_at(lo - step) <= crit {
        lo -= step;
    }
    let mut hi = b;
    while hi + step < pts[n - 2].0 && sse_at(hi + step) <= crit {
        hi += step;
    }
    Ok(KinkFit {
        gamma0: b,
        half_width: 0.5 * (hi - lo),
        slopes: [slope_left, slope_left + delta],
        slope_stderr,
        strength,
        threshold,
        kink: strength >= threshold,
        sse,
    })
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Mc,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "mc" | "montecarlo" | "monte-carlo" => Ok(Mode::Mc),
            _ => Err(Error::Config(format!("unknown mode `{s}` (oracle | mc)"))),
        }
    }
}

fn default_x() -> [f64; 2] {
    [1.0, 1.0]
}
fn default_mode() -> Mode {
    Mode::Oracle
}
fn default_replicas() -> usize {
    1000
}
fn default_law() -> Law {
    Law::Gaussian
}
fn default_tol() -> f64 {
    1e-6
}
fn default_h_tol() -> f64 {
    0.1
}

/// Settings of a γ × λ scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub gammas: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_law")]
    pub law: Law,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_x")]
    pub x: [f64; 2],
    /// Relative quadrature tolerance in oracle mode.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Allowed `|Ĥ − H(γ)|`.
    #[serde(default = "default_h_tol")]
    pub h_tol: f64,
    #[serde(default)]
    pub window: Option<usize>,
}

impl ScanConfig {
    pub fn new(gammas: Vec<f64>, lambdas: Vec<f64>) -> Self {
        ScanConfig {
            gammas,
            lambdas,
            mode: Mode::Oracle,
            replicas: default_replicas(),
            law: default_law(),
            seed: 0,
            x: default_x(),
            tol: default_tol(),
            h_tol: default_h_tol(),
            window: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::Config("empty γ grid".into()));
        }
        if self.lambdas.len() < 4 {
            return Err(Error::Config("a scan needs at least 4 λ values".into()));
        }
        if self.gammas.iter().any(|g| !(*g > 0.0)) || self.lambdas.iter().any(|l| !(*l > 1.0)) {
            return Err(Error::Config(
                "γ must be positive and λ must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub gamma: f64,
    pub lambda: f64,
    /// Unnormalized `Var S_{λ,γ}(x)`.
    pub variance: f64,
    /// Monte Carlo stderr or quadrature error estimate.
    pub err: f64,
    /// `Var S / d²`.
    pub normalized: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaVerdict {
    pub gamma: f64,
    pub theory_h: f64,
    pub fit: HurstFit,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub regime: String,
    pub model_hash: String,
    pub config: ScanConfig,
    pub theory: ScalingPrediction,
    pub rows: Vec<ScanRow>,
    pub fits: Vec<GammaVerdict>,
    pub kink: Option<KinkFit>,
    pub transition_predicted: bool,
    pub transition_verdict: String,
    pub pass: bool,
}

pub fn transition_report(model: &SpectralModel, config: &ScanConfig) -> Result<ScanReport> {
    config.validate()?;
    let theory = theory::predict(model, &config.gammas)?;
    let mut rows = Vec::new();
    for &g in &config.gammas {
        let cells: Vec<ScanRow> = match config.mode {
            Mode::Oracle => config
                .lambdas
                .iter()
                .map(|&l| {
                    let fc = finite_cov(model, l, g, config.x, config.x, config.tol)?;
                    Ok(ScanRow {
                        gamma: g,
                        lambda: l,
                        variance: fc.raw,
                        err: fc.abs_error * fc.normalization.powi(2),
                        normalized: fc.value,
                    })
                })
                .collect::<Result<_>>()?,
            Mode::Mc => {
                let opts = McOptions {
                    law: config.law,
                    seed: config.seed,
                    replicas: config.replicas,
                    window: config.window,
                };
                config
                    .lambdas
                    .iter()
                    .map(|&l| {
                        let t = mc_moments(model, l, g, &[config.x], &opts)?;
                        let d2 = t.normalization.powi(2);
                        Ok(ScanRow {
                            gamma: g,
                            lambda: l,
                            variance: t.points[0].variance * d2,
                            err: t.points[0].variance_se * d2,
                            normalized: t.points[0].variance,
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        rows.extend(cells);
    }

    let mut fits = Vec::new();
    for &g in &config.gammas {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.gamma == g)
            .map(|r| (r.lambda, r.variance))
            .collect();
        let fit = estimate_h(&pts, theory::log_rule(model, g)?)?;
        let theory_h = theory::h_of_gamma(model, g)?;
        let pass = (fit.h - theory_h).abs() <= config.h_tol;
        fits.push(GammaVerdict {
            gamma: g,
            theory_h,
            fit,
            pass,
        });
    }
    let kink = if config.gammas.len() >= 6 {
        Some(detect_kink(
            &fits.iter().map(|f| (f.gamma, f.fit.h)).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    let transition_predicted = theory.transition;
    let (transition_verdict, kink_ok) = match (&kink, transition_predicted) {
        (None, _) => ("γ grid too short for kink detection".to_string(), true),
        (Some(k), true) => {
            let g0 = theory.gamma0.unwrap_or(f64::NAN);
            let step = grid_step(&config.gammas);
            let ok = k.kink && (k.gamma0 - g0).abs() <= step.max(2.0 * k.half_width);
            (
                format!(
                    "scaling transition: kink at {:.4} ± {:.4} (theory {:.4}), strength {:.4}",
                    k.gamma0, k.half_width, g0, k.strength
                ),
                ok,
            )
        }
        (Some(k), false) => (
            if k.kink {
                format!(
                    "unexpected kink at {:.4}, strength {:.4}",
                    k.gamma0, k.strength
                )
            } else {
                "no scaling transition".to_string()
            },
            !k.kink,
        ),
    };
    let pass = kink_ok && fits.iter().all(|f| f.pass);
    Ok(ScanReport {
        regime: model.regime().to_string(),
        model_hash: model.hash(),
        config: config.clone(),
        theory,
        rows,
        fits,
        kink,
        transition_predicted,
        transition_verdict,
        pass,
    })
}

fn grid_step(g: &[f64]) -> f64 {
    let mut s: Vec<f64> = g.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

impl ScanReport {
    /// Long format: `regime, gamma, lambda, stat, value, err`.
    pub fn to_csv(&self) -> Result<String> {
        let mut rows = Vec::new();
        let mut push = |g: f64, l: Option<f64>, stat: &str, v: f64, e: f64| {
            rows.push(vec![
                self.regime.clone(),
                num(g),
                l.map(num).unwrap_or_default(),
                stat.to_string(),
                num(v),
                num(e),
            ]);
        };
        for r in &self.rows {
            push(r.gamma, Some(r.lambda), "variance", r.variance, r.err);
            push(
                r.gamma,
                Some(r.lambda),
                "normalized_variance",
                r.normalized,
                r.err / r.variance * r.normalized,
            );
        }
        for f in &self.fits {
            push(f.gamma, None, "H_fit", f.fit.h, f.fit.half_width);
            push(f.gamma, None, "H_theory", f.theory_h, 0.0);
        }
        if let Some(k) = &self.kink {
            push(k.gamma0, None, "kink_gamma0", k.gamma0, k.half_width);
            push(k.gamma0, None, "kink_strength", k.strength, k.threshold);
        }
        csv_string(
            &[
                ("model".into(), self.model_hash.clone()),
                (
                    "mode".into(),
                    format!("{:?}", self.config.mode).to_lowercase(),
                ),
            ],
            &["regime", "gamma", "lambda", "stat", "value", "err"],
            &rows,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A gnuplot script reading the CSV written next to it.
    pub fn plot_script(&self, csv_name: &str) -> String {
        let mut s = String::new();
        s.push_str("# gnuplot script: log-log variance curves and the H(γ) kink figure\n");
        s.push_str(&format!("# model {} ({})\n", self.model_hash, self.regime));
        s.push_str(
            "set datafile separator ','\nset datafile commentschars '#'\nset key top left\n\n",
        );
        s.push_str("set terminal pngcairo size 900,600\nset output 'variance_loglog.png'\n");
        s.push_str("set logscale xy\nset xlabel 'lambda'\nset ylabel 'Var S(x)'\n");
        let curves: Vec<String> = self
            .config
            .gammas
            .iter()
            .map(|g| {
                format!(
                    "'{csv_name}' using ($4 eq 'variance' && abs($2-{g}) < 1e-12 ? $3 : 1/0):5 with linespoints title 'gamma={g}'"
                )
            })
            .collect();
        s.push_str(&format!("plot {}\n\n", curves.join(", \\\n     ")));
        s.push_str(
            "set output 'h_of_gamma.png'\nunset logscale\nset xlabel 'gamma'\nset ylabel 'H'\n",
        );
        s.push_str(&format!(
            "plot '{csv_name}' using ($4 eq 'H_fit' ? $2 : 1/0):5:6 with yerrorbars title 'fit', \\\n     '{csv_name}' using ($4 eq 'H_theory' ? $2 : 1/0):5 with lines title 'theory'\n"
        ));
        s
    }

    /// Writes `<stem>.csv`, `<stem>.json` and `<stem>.gp` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv = format!("{stem}.csv");
        std::fs::write(dir.join(&csv), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.gp")), self.plot_script(&csv))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize, Synthesizer};
    use approx::assert_relative_eq;

    fn ones(n1: usize, n2: usize) -> LatticeField {
        LatticeField {
            n1,
            n2,
            values: vec![1.0; n1 * n2],
            law: Law::Gaussian,
            seed: 0,
            replica: 0,
            window: 0,
            model: String::new(),
        }
    }

    #[test]
    fn partial_sums_on_ones() {
        let f = ones(30, 30);
        let g = partial_sum_grid(
            &f,
            10.0,
            1.0,
            &[[1.0, 1.0], [1.0, 0.05], [2.0, 1.0], [1.0, 1.0]],
        )
        .unwrap();
        assert_eq!(g.values, vec![100.0, 0.0, 200.0, 100.0]);
        assert!(partial_sum_grid(&f, 10.0, 1.0, &[[4.0, 1.0]]).is_err());
        let n = g.normalize(10.0);
        assert_eq!(n.values[0], 10.0);
        assert!(n.normalized);
    }

    #[test]
    fn partial_sums_additive() {
        let m = SpectralModel::lrd(0.5, 0.5).unwrap();
        let c = Arc::new(ma_coefficients(&m, 64).unwrap());
        let f = synthesize(&c, Law::Gaussian, 5, 40, 20).unwrap();
        let g = partial_sum_grid(&f, 10.0, 1.0, &[[2.0, 1.0], [1.0, 1.0]]).unwrap();
        let second: f64 = (11..=20)
            .flat_map(|i| (1..=10).map(move |j| (i, j)))
            .map(|(i, j)| f.at(i, j))
            .sum();
        assert_relative_eq!(g.values[0], g.values[1] + second, max_relative = 1e-12);
    }

    #[test]
    fn sampler_matches_synthesized_partial_sums() {
        let m = SpectralModel::nd(0.5, 0.5).unwrap();
        let c = Arc::new(ma_coefficients(&m, 64).unwrap());
        let xs = [[1.0, 1.0], [0.5, 1.5]];
        let sd: Vec<[u64; 2]> = xs.iter().map(|x| sides(8.0, 1.0, *x)).collect();
        let sampler = RectangleSampler::new(&c, &sd).unwrap();
        let syn = Synthesizer::new(c.clone(), 8, 12).unwrap();
        for r in 0..3 {
            let inv = Innovations::new(Law::Rademacher, 21, r);
            let s = sampler.sample(&inv);
            let g = partial_sum_grid(&syn.field(&inv), 8.0, 1.0, &xs).unwrap();
            for (a, b) in s.iter().zip(&g.values) {
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn jackknife_of_known_moments() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 1000) as f64 / 1000.0)
            .collect();
        let (m, v, sk, _) = PowerSums::of(&xs).moments();
        assert_relative_eq!(m, 0.4995, epsilon = 1e-12);
        let direct = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 999.0;
        assert_relative_eq!(v, direct, max_relative = 1e-10);
        assert!(sk.abs() < 1e-6);
    }

    #[test]
    fn exact_power_law_fit() {
        let rows: Vec<(f64, f64)> = [64.0, 128.0, 256.0, 512.0]
            .iter()
            .map(|l: &f64| (*l, l.powf(2.5)))
            .collect();
        let f = estimate_h(&rows, false).unwrap();
        assert_relative_eq!(f.h, 1.25, epsilon = 1e-12);
        assert!(f.half_width < 1e-10);
        assert!(!f.log_flag);
        let logs: Vec<(f64, f64)> = [64.0, 128.0, 256.0, 512.0]
            .iter()
            .map(|l: &f64| (*l, l.powi(4) * l.ln()))
            .collect();
        let raw = estimate_h(&logs, false).unwrap();
        assert!(raw.h > 2.0 && raw.h < 2.2);
        assert!(raw.log_flag);
        let fixed = estimate_h(&logs, true).unwrap();
        assert_relative_eq!(fixed.h, 2.0, epsilon = 1e-12);
        assert!(estimate_h(&rows[..3], false).is_err());
        assert!(estimate_h(&[(2.0, 1.0), (3.0, 1.0), (4.0, 1.0), (5.0, 1.0)], false).is_err());
    }

    #[test]
    fn kink_on_exact_curves() {
        let m = SpectralModel::lrd(0.5, 1.2).unwrap();
        let pts: Vec<(f64, f64)> = (1..=12)
            .map(|i| {
                let g = 0.1 * i as f64;
                (g, theory::h_of_gamma(&m, g).unwrap())
            })
            .collect();
        let k = detect_kink(&pts).unwrap();
        assert!((k.gamma0 - 0.5 / 1.2).abs() < 1e-6, "{k:?}");
        assert_relative_eq!(k.slopes[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(k.slopes[1], 0.5, epsilon = 1e-9);
        assert!(k.kink);

        let hyp = SpectralModel::hyperbolic(0.4, -0.2).unwrap();
        let pts: Vec<(f64, f64)> = (1..=12)
            .map(|i| {
                (
                    0.25 * i as f64,
                    theory::h_of_gamma(&hyp, 0.25 * i as f64).unwrap(),
                )
            })
            .collect();
        assert!(!detect_kink(&pts).unwrap().kink);

        // Two points on the short side.
        let pts: Vec<(f64, f64)> = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .map(|&g: &f64| {
                (
                    g,
                    if g < 1.5 {
                        2.0 * g
                    } else {
                        3.0 + 0.5 * (g - 1.5)
                    },
                )
            })
            .collect();
        let k = detect_kink(&pts).unwrap();
        assert_relative_eq!(k.gamma0, 1.5, epsilon = 1e-6);
        assert_relative_eq!(k.slopes[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(k.slopes[1], 0.5, epsilon = 1e-9);
        assert!(detect_kink(&pts[..5]).is_err());
    }

    #[test]
    fn empty_gamma_grid_is_config_error() {
        let m = SpectralModel::lrd(0.5, 1.2).unwrap();
        let e = transition_report(
            &m,
            &ScanConfig::new(vec![], vec![64.0, 128.0, 256.0, 512.0]),
        )
        .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}

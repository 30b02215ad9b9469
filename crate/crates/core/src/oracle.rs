//! Simulation-free second-order quantities at finite `λ`: autocovariances,
//! rectangle-sum variances and the normalized covariance `R_{λ,γ}(x, y)`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Regime, SpectralModel};
use crate::output::{csv_string, num, write_csv};
use crate::quadrature::{
    graded_rule, integrate_singular_2d, Axis, LineKernel, QuadOptions, QuadratureResult,
    SingularIntegrand2D, Singularity,
};
use crate::theory;

pub const DEFAULT_K_MAX: usize = 1024;
pub const DEFAULT_RESOLUTION: usize = 1 << 13;

/// A spectral density on `Π²` together with the shape of its singular set.
pub struct Density<'a> {
    pub f: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
    pub singularity: Singularity,
    pub label: String,
}

/// Declared singular behavior of the model's `f` for the quadrature module.
pub fn model_singularity(model: &SpectralModel) -> Singularity {
    let e = model.exponents();
    match model.regime() {
        Regime::Lrd | Regime::Lrnd1 | Regime::Lrnd2 => Singularity::Radial {
            w: 1.0,
            exponents: e,
        },
        Regime::Nd => Singularity::Radial {
            w: -1.0,
            exponents: e,
        },
        Regime::Hyperbolic => Singularity::Axes {
            w: [e.upsilon1.max(0.0), e.upsilon2.max(0.0)],
        },
    }
}

/// `r(k)` for `|kᵢ| ≤ K_max`.
#[derive(Clone, Debug)]
pub struct CovarianceTable {
    k_max: usize,
    resolution: usize,
    tolerance: f64,
    label: String,
    values: Vec<f64>,
}

impl CovarianceTable {
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Absolute accuracy quoted from the resolution-halving check.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn get(&self, k1: i64, k2: i64) -> Option<f64> {
        let k = self.k_max as i64;
        if k1.abs() > k || k2.abs() > k {
            return None;
        }
        let w = 2 * self.k_max + 1;
        Some(self.values[(k1 + k) as usize * w + (k2 + k) as usize])
    }

    pub fn to_csv(&self) -> Result<String> {
        let k = self.k_max as i64;
        let mut rows = Vec::with_capacity(self.values.len());
        for k1 in -k..=k {
            for k2 in -k..=k {
                rows.push(vec![
                    k1.to_string(),
                    k2.to_string(),
                    num(self.get(k1, k2).unwrap()),
                ]);
            }
        }
        csv_string(&self.comments(), &["k1", "k2", "r"], &rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    fn comments(&self) -> Vec<(String, String)> {
        vec![
            ("model".into(), self.label.clone()),
            ("k_max".into(), self.k_max.to_string()),
            ("resolution".into(), self.resolution.to_string()),
            ("tolerance".into(), num(self.tolerance)),
        ]
    }
}

pub fn autocovariance_table(
    model: &SpectralModel,
    k_max: usize,
    resolution: usize,
) -> Result<CovarianceTable> {
    let f = |u: [f64; 2]| model.spectral_density(u);
    let density = Density {
        f: &f,
        singularity: model_singularity(model),
        label: model.hash(),
    };
    autocovariance_table_of(&density, k_max, resolution)
}

/// Midpoint rule on a half-shifted `resolution²` grid, evaluated by FFT, with
/// the cells around the origin replaced by graded quadrature.
pub fn autocovariance_table_of(
    density: &Density<'_>,
    k_max: usize,
    resolution: usize,
) -> Result<CovarianceTable> {
    if k_max == 0 {
        return Err(Error::Config("K_max must be at least 1".into()));
    }
    if !resolution.is_power_of_two() || resolution < 8 * k_max {
        return Err(Error::Config(format!(
            "resolution must be a power of two ≥ 8·K_max = {}, got {resolution}",
            8 * k_max
        )));
    }
    let origin_exp = density.singularity.origin_exponent()?;
    let n = resolution;
    let h = 2.0 * PI / n as f64;
    let node = |j: usize| -PI + (j as f64 + 0.5) * h;
    let f = density.f;
    let kw = k_max + 1;

    // Rows: F[j][k₂] = Σ_l f(u₁ⱼ, u₂ₗ) e^{ik₂u₂ₗ}, for 0 ≤ k₂ ≤ K.
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let phase = |k: i64| Complex64::from_polar(1.0, k as f64 * (-PI + 0.5 * h));
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let u1 = node(j);
            let mut buf: Vec<Complex64> = (0..n)
                .map(|l| Complex64::new(f([u1, node(l)]), 0.0))
                .collect();
            fft.process(&mut buf);
            (0..kw).map(|k2| buf[k2] * phase(k2 as i64)).collect()
        })
        .collect();
    if rows.iter().flatten().any(|z| !z.re.is_finite()) {
        return Err(Error::Divergent(
            "spectral density is not finite on the sampling grid".into(),
        ));
    }

    // Columns: r(k₁, k₂) = h² Σⱼ F[j][k₂] e^{ik₁u₁ⱼ}.
    let k = k_max as i64;
    let cols: Vec<Vec<f64>> = (0..kw)
        .into_par_iter()
        .map(|k2| {
            let mut buf: Vec<Complex64> = rows.iter().map(|r| r[k2]).collect();
            fft.process(&mut buf);
            (-k..=k)
                .map(|k1| {
                    let idx = k1.rem_euclid(n as i64) as usize;
                    (buf[idx] * phase(k1)).re * h * h
                })
                .collect()
        })
        .collect();
    drop(rows);

    let corr = origin_correction(f, h, origin_exp);
    let w = 2 * k_max + 1;
    let mut values = vec![0.0; w * w];
    for k2 in 0..=k {
        for k1 in -k..=k {
            let v = cols[k2 as usize][(k1 + k) as usize] + corr;
            values[(k1 + k) as usize * w + (k2 + k) as usize] = v;
        }
    }
    // Mirror so that r(k) = r(-k) holds exactly, taking the k₁ ≥ 0 half of the k₂ = 0 row.
    for k2 in 0..=k {
        for k1 in -k..=k {
            let (a, b) = if k2 == 0 && k1 < 0 {
                (-k1, 0)
            } else {
                (k1, k2)
            };
            let v = values[(a + k) as usize * w + (b + k) as usize];
            values[(k1 + k) as usize * w + (k2 + k) as usize] = v;
            values[(-k1 + k) as usize * w + (-k2 + k) as usize] = v;
        }
    }

    // Halved resolution, same correction scheme, a few short lags.
    let half = n / 2;
    let hh = 2.0 * PI / half as f64;
    let coarse_corr = origin_correction(f, hh, origin_exp);
    let lags = [(0i64, 0i64), (1, 0), (0, 1), (1, 1)];
    let coarse_rows: Vec<[f64; 4]> = (0..half)
        .into_par_iter()
        .map(|j| {
            let u1 = -PI + (j as f64 + 0.5) * hh;
            let mut acc = [0.0; 4];
            for l in 0..half {
                let u2 = -PI + (l as f64 + 0.5) * hh;
                let v = f([u1, u2]);
                for (a, (k1, k2)) in acc.iter_mut().zip(lags) {
                    *a += v * (k1 as f64 * u1 + k2 as f64 * u2).cos();
                }
            }
            acc
        })
        .collect();
    let mut coarse = [0.0; 4];
    for r in &coarse_rows {
        for i in 0..4 {
            coarse[i] += r[i];
        }
    }
    let mut tolerance: f64 = 0.0;
    for (i, (k1, k2)) in lags.into_iter().enumerate() {
        let c = coarse[i] * hh * hh + coarse_corr;
        let fine = values[(k1 + k) as usize * w + (k2 + k) as usize];
        tolerance = tolerance.max((fine - c).abs());
    }
    // The midpoint error decays slowly in h for singular f, so the halving
    // difference is inflated rather than taken at face value.
    tolerance = 3.0 * tolerance + 1e-13 * values[k as usize * w + k as usize].abs();

    Ok(CovarianceTable {
        k_max,
        resolution,
        tolerance,
        label: density.label.clone(),
        values,
    })
}

/// `∫_B f − h² Σ_{mid ∈ B} f` over the four cells `B = [−h, h]²` touching
/// the origin. Added to every lag; `e^{ik·u}` varies by at most `π/4` there.
fn origin_correction(f: &(dyn Fn([f64; 2]) -> f64 + Sync), h: f64, origin_exp: f64) -> f64 {
    let (t, wt) = graded_rule(h, origin_exp);
    let nodes: Vec<f64> = t.iter().map(|x| -x).chain(t.iter().copied()).collect();
    let weights: Vec<f64> = wt.iter().chain(wt.iter()).copied().collect();
    let rows: Vec<f64> = nodes
        .par_iter()
        .zip(weights.par_iter())
        .map(|(&u1, &w1)| {
            w1 * nodes
                .iter()
                .zip(&weights)
                .map(|(&u2, &w2)| w2 * f([u1, u2]))
                .sum::<f64>()
        })
        .collect();
    let exact: f64 = rows.iter().sum();
    let m = 0.5 * h;
    let mid = h * h * (f([m, m]) + f([m, -m]) + f([-m, m]) + f([-m, -m]));
    exact - mid
}

/// Tolerance of [`rect_sum_variance`] implied by the table's per-lag tolerance.
pub fn rect_sum_tolerance(table: &CovarianceTable, n1: u64, n2: u64) -> f64 {
    table.tolerance * ((n1 * n2) as f64).powi(2)
}

/// `Σ_{|k₁|<n₁, |k₂|<n₂} (n₁−|k₁|)(n₂−|k₂|) r(k)`.
pub fn rect_sum_variance(table: &CovarianceTable, n1: u64, n2: u64) -> Result<f64> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Geometry("rectangle sides must be positive".into()));
    }
    let k = table.k_max as u64;
    if n1 - 1 > k || n2 - 1 > k {
        return Err(Error::Geometry(format!(
            "lags up to ({}, {}) exceed K_max = {k}",
            n1 - 1,
            n2 - 1
        )));
    }
    let (a, b) = (n1 as i64, n2 as i64);
    let mut total = 0.0;
    for k1 in -(a - 1)..a {
        let mut row = 0.0;
        for k2 in -(b - 1)..b {
            row += (b - k2.abs()) as f64 * table.get(k1, k2).unwrap();
        }
        total += (a - k1.abs()) as f64 * row;
    }
    Ok(total)
}

/// `E S_n S_m` for rectangles `[1, nᵢ]` and `[1, mᵢ]` sharing the corner.
pub fn rect_cov_spectral(
    density: &Density<'_>,
    n: [u64; 2],
    m: [u64; 2],
    tol: f64,
) -> Result<QuadratureResult> {
    let g = |a: f64, b: f64| (density.f)([a, b]);
    let axes = [
        Axis::torus(LineKernel::Dirichlet { n: n[0], m: m[0] }),
        Axis::torus(LineKernel::Dirichlet { n: n[1], m: m[1] }),
    ];
    integrate_singular_2d(
        &SingularIntegrand2D {
            g: &g,
            axes,
            singularity: density.singularity,
            even: true,
        },
        &QuadOptions::with_tol(tol),
    )
}

/// Side lengths `([λx₁], [λ^γx₂])`.
pub fn sides(lambda: f64, gamma: f64, x: [f64; 2]) -> [u64; 2] {
    [
        (lambda * x[0]).floor() as u64,
        (lambda.powf(gamma) * x[1]).floor() as u64,
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteCov {
    /// `R_{λ,γ}(x, y)`.
    pub value: f64,
    /// Unnormalized `E S(x) S(y)`.
    pub raw: f64,
    pub normalization: f64,
    pub abs_error: f64,
    pub imag_residue: f64,
    pub sides_x: [u64; 2],
    pub sides_y: [u64; 2],
}

pub fn finite_cov(
    model: &SpectralModel,
    lambda: f64,
    gamma: f64,
    x: [f64; 2],
    y: [f64; 2],
    tol: f64,
) -> Result<FiniteCov> {
    let d = theory::normalization(model, gamma, lambda)?;
    let n = sides(lambda, gamma, x);
    let m = sides(lambda, gamma, y);
    if n.contains(&0) || m.contains(&0) {
        return Err(Error::Geometry(format!(
            "rectangle sides {n:?}, {m:?} at λ = {lambda}, γ = {gamma} must be at least 1"
        )));
    }
    let f = |u: [f64; 2]| model.spectral_density(u);
    let density = Density {
        f: &f,
        singularity: model_singularity(model),
        label: model.hash(),
    };
    let q = rect_cov_spectral(&density, n, m, tol)?;
    Ok(FiniteCov {
        value: q.value / (d * d),
        raw: q.value,
        normalization: d,
        abs_error: q.abs_error_estimate / (d * d),
        imag_residue: q.imag_residue,
        sides_x: n,
        sides_y: m,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub lambda: f64,
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub finite_cov: f64,
    pub limit_cov: f64,
    pub rel_delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub regime: Regime,
    pub gamma: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Largest relative change of `finite_cov` between consecutive `λ` in `[λ_max/2, λ_max]`.
    pub top_octave_change: Option<f64>,
    /// `|rel_delta|` non-increasing over the top octave for every `(x, y)`.
    pub monotone_top_octave: bool,
}

pub fn convergence_scan(
    model: &SpectralModel,
    gamma: f64,
    lambdas: &[f64],
    pairs: &[([f64; 2], [f64; 2])],
    tol: f64,
) -> Result<ConvergenceReport> {
    if lambdas.is_empty() || pairs.is_empty() {
        return Err(Error::Config(
            "convergence scan needs at least one λ and one (x, y) pair".into(),
        ));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("λ list must be increasing".into()));
    }
    let limits: Vec<f64> = pairs
        .iter()
        .map(|(x, y)| theory::limit_cov(model, gamma, *x, *y))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &lambda in lambdas {
        for ((x, y), lim) in pairs.iter().zip(&limits) {
            let fc = finite_cov(model, lambda, gamma, *x, *y, tol)?;
            rows.push(ConvergenceRow {
                lambda,
                x: *x,
                y: *y,
                finite_cov: fc.value,
                limit_cov: *lim,
                rel_delta: fc.value / lim - 1.0,
            });
        }
    }
    let top = *lambdas.last().unwrap();
    let np = pairs.len();
    let mut change: Option<f64> = None;
    let mut monotone = true;
    for p in 0..np {
        let series: Vec<&ConvergenceRow> = rows
            .iter()
            .skip(p)
            .step_by(np)
            .filter(|r| r.lambda >= 0.5 * top)
            .collect();
        for w in series.windows(2) {
            let c = (w[1].finite_cov / w[0].finite_cov - 1.0).abs();
            change = Some(change.map_or(c, |m: f64| m.max(c)));
            if w[1].rel_delta.abs() > w[0].rel_delta.abs() {
                monotone = false;
            }
        }
    }
    Ok(ConvergenceReport {
        model: model.hash(),
        regime: model.regime(),
        gamma,
        rows,
        top_octave_change: change,
        monotone_top_octave: monotone,
    })
}

impl ConvergenceReport {
    fn table(&self) -> (Vec<(String, String)>, Vec<Vec<String>>) {
        let comments = vec![
            ("model".to_string(), self.model.clone()),
            ("regime".to_string(), self.regime.to_string()),
            ("gamma".to_string(), num(self.gamma)),
        ];
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    num(r.lambda),
                    num(r.x[0]),
                    num(r.x[1]),
                    num(r.y[0]),
                    num(r.y[1]),
                    num(r.finite_cov),
                    num(r.limit_cov),
                    num(r.rel_delta),
                ]
            })
            .collect();
        (comments, rows)
    }

    pub const HEADER: [&'static str; 8] = [
        "lambda",
        "x1",
        "x2",
        "y1",
        "y2",
        "finite_cov",
        "limit_cov",
        "rel_delta",
    ];

    pub fn to_csv(&self) -> Result<String> {
        let (c, r) = self.table();
        csv_string(&c, &Self::HEADER, &r)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let (c, r) = self.table();
        write_csv(path, &c, &Self::HEADER, &r)
    }
}

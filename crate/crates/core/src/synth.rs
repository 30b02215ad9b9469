//! Moving-average synthesis of `X(t) = Σ_s a(t − s) ε(s)` on finite lattices.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpectralModel;
use crate::oracle::{model_singularity, rect_cov_spectral, Density};
use crate::output::{csv_string, num};

/// Distribution of the standardized innovations `ε(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    Gaussian,
    Rademacher,
    CenteredUniform,
}

impl Law {
    pub fn as_str(self) -> &'static str {
        match self {
            Law::Gaussian => "gaussian",
            Law::Rademacher => "rademacher",
            Law::CenteredUniform => "centered-uniform",
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Law {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(Law::Gaussian),
            "rademacher" => Ok(Law::Rademacher),
            "centered-uniform" | "uniform" => Ok(Law::CenteredUniform),
            _ => Err(Error::Config(format!("unknown innovation law `{s}`"))),
        }
    }
}

const SITE_OFFSET: i64 = 1 << 40;
const WORDS_PER_SITE: u128 = 4;

/// Innovations keyed by `(seed, replica, site)`.
///
/// Every site owns four 32-bit ChaCha words at a fixed position of the stream
/// belonging to its row, so any rectangle of sites can be generated in any
/// order with identical values.
#[derive(Clone, Copy, Debug)]
pub struct Innovations {
    law: Law,
    seed: u64,
    replica: u64,
    negate: bool,
}

impl Innovations {
    pub fn new(law: Law, seed: u64, replica: u64) -> Self {
        Innovations {
            law,
            seed,
            replica,
            negate: false,
        }
    }

    /// The same stream with every value negated.
    pub fn negated(mut self) -> Self {
        self.negate = !self.negate;
        self
    }

    fn rng(&self, s1: i64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replica.to_le_bytes());
        key[16..24].copy_from_slice(b"aniscale");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((s1 + SITE_OFFSET) as u64);
        rng
    }

    /// `ε(s₁, s₂)` for `s₂ ∈ [start, start + len)`.
    pub fn row(&self, s1: i64, start: i64, len: usize) -> Vec<f64> {
        let mut rng = self.rng(s1);
        rng.set_word_pos((start + SITE_OFFSET) as u128 * WORDS_PER_SITE);
        let sign = if self.negate { -1.0 } else { 1.0 };
        (0..len)
            .map(|_| {
                let w1 = rng.next_u64();
                let w2 = rng.next_u64();
                sign * draw(self.law, w1, w2)
            })
            .collect()
    }
}

fn unit_open(w: u64) -> f64 {
    ((w >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn draw(law: Law, w1: u64, w2: u64) -> f64 {
    match law {
        // Box–Muller on two words keeps a fixed word budget per site.
        Law::Gaussian => (-2.0 * unit_open(w1).ln()).sqrt() * (2.0 * PI * unit_open(w2)).cos(),
        Law::Rademacher => {
            if w1 >> 63 == 0 {
                -1.0
            } else {
                1.0
            }
        }
        Law::CenteredUniform => 3f64.sqrt() * (2.0 * unit_open(w1) - 1.0),
    }
}

/// `a(t)` on the window `t ∈ [−N/2, N/2)²`; zero outside.
#[derive(Clone, Debug)]
pub struct MaCoefficients {
    n: usize,
    values: Vec<f64>,
    label: String,
    integral: f64,
    l2_mass_captured: f64,
}

impl MaCoefficients {
    pub fn window(&self) -> usize {
        self.n
    }

    pub fn half(&self) -> i64 {
        (self.n / 2) as i64
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `Σ a(t)² / ∫ f`.
    pub fn l2_mass_captured(&self) -> f64 {
        self.l2_mass_captured
    }

    /// `∫_{Π²} f`, by quadrature.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn get(&self, t1: i64, t2: i64) -> f64 {
        let h = self.half();
        if t1 < -h || t1 >= h || t2 < -h || t2 >= h {
            return 0.0;
        }
        self.values[(t1 + h) as usize * self.n + (t2 + h) as usize]
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

pub fn ma_coefficients(model: &SpectralModel, n: usize) -> Result<MaCoefficients> {
    let f = |u: [f64; 2]| model.spectral_density(u);
    let density = Density {
        f: &f,
        singularity: model_singularity(model),
        label: model.hash(),
    };
    ma_coefficients_of(&density, n)
}

/// `a(t) = ∫ e^{it·u} √f(u)/(2π) du` by a half-shifted midpoint rule, so
/// that `f = (2π)² |â|²` and `a` is real and even.
pub fn ma_coefficients_of(density: &Density<'_>, n: usize) -> Result<MaCoefficients> {
    if !n.is_power_of_two() || n < 64 {
        return Err(Error::Config(format!(
            "window N must be a power of two ≥ 64, got {n}"
        )));
    }
    let h = 2.0 * PI / n as f64;
    let node = |j: usize| -PI + (j as f64 + 0.5) * h;
    let f = density.f;
    let mut grid: Vec<Complex64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let v = f([node(idx / n), node(idx % n)]);
            Complex64::new(v.sqrt() / (2.0 * PI), 0.0)
        })
        .collect();
    if grid.iter().any(|z| !z.re.is_finite()) {
        return Err(Error::Divergent(
            "spectral density is not finite on the sampling grid".into(),
        ));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    fft_2d(&mut grid, n, n, &fft, &fft);

    let half = (n / 2) as i64;
    let phase = |t: i64| Complex64::from_polar(1.0, t as f64 * (-PI + 0.5 * h));
    let raw = |t1: i64, t2: i64| -> f64 {
        let i = t1.rem_euclid(n as i64) as usize * n + t2.rem_euclid(n as i64) as usize;
        (grid[i] * phase(t1) * phase(t2)).re * h * h
    };
    let mut values = vec![0.0; n * n];
    for t1 in -half..half {
        for t2 in -half..half {
            // The row and column at −N/2 have no mirror inside the window.
            let v = if t1 == -half || t2 == -half {
                0.0
            } else {
                0.5 * (raw(t1, t2) + raw(-t1, -t2))
            };
            values[(t1 + half) as usize * n + (t2 + half) as usize] = v;
        }
    }
    let integral = rect_cov_spectral(density, [1, 1], [1, 1], 1e-9)?.value;
    let mut c = MaCoefficients {
        n,
        values,
        label: density.label.clone(),
        integral,
        l2_mass_captured: 0.0,
    };
    c.l2_mass_captured = c.sum_of_squares() / integral;
    Ok(c)
}

/// In-place 2-D transform of a row-major `rows × cols` array.
fn fft_2d(
    data: &mut [Complex64],
    rows: usize,
    cols: usize,
    row_fft: &Arc<dyn Fft<f64>>,
    col_fft: &Arc<dyn Fft<f64>>,
) {
    data.par_chunks_mut(cols).for_each(|r| row_fft.process(r));
    let mut t = transpose(data, rows, cols);
    t.par_chunks_mut(rows).for_each(|c| col_fft.process(c));
    let back = transpose(&t, cols, rows);
    data.copy_from_slice(&back);
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

/// A realization on `t ∈ [1, n₁] × [1, n₂]`, row-major in `t₁`.
#[derive(Clone, Debug)]
pub struct LatticeField {
    pub n1: usize,
    pub n2: usize,
    pub values: Vec<f64>,
    pub law: Law,
    pub seed: u64,
    pub replica: u64,
    pub window: usize,
    pub model: String,
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct FieldSidecar {
    pub dims: [usize; 2],
    pub layout: String,
    pub dtype: String,
    pub seed: u64,
    pub replica: u64,
    pub law: Law,
    pub window: usize,
    pub model_hash: String,
}

impl LatticeField {
    /// `X(t₁, t₂)` with 1-based lattice coordinates.
    pub fn at(&self, t1: usize, t2: usize) -> f64 {
        self.values[(t1 - 1) * self.n2 + (t2 - 1)]
    }

    pub fn sidecar(&self) -> FieldSidecar {
        FieldSidecar {
            dims: [self.n1, self.n2],
            layout: "row-major, t1 slowest".into(),
            dtype: "f64-le".into(),
            seed: self.seed,
            replica: self.replica,
            law: self.law,
            window: self.window,
            model_hash: self.model.clone(),
        }
    }

    /// Writes `<stem>.f64` and `<stem>.json`.
    pub fn write_binary(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.join(format!("{stem}.f64")), bytes)?;
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.sidecar())?,
        )?;
        Ok(())
    }

    pub fn read_binary(dir: &Path, stem: &str) -> Result<(FieldSidecar, Vec<f64>)> {
        let side: FieldSidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let bytes = std::fs::read(dir.join(format!("{stem}.f64")))?;
        if bytes.len() != side.dims[0] * side.dims[1] * 8 {
            return Err(Error::Serde(
                "field file size does not match its sidecar".into(),
            ));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((side, values))
    }

    pub fn to_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = (0..self.n1)
            .flat_map(|i| {
                (0..self.n2).map(move |j| {
                    vec![
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        num(self.values[i * self.n2 + j]),
                    ]
                })
            })
            .collect();
        csv_string(
            &[
                ("model".into(), self.model.clone()),
                ("seed".into(), self.seed.to_string()),
                ("law".into(), self.law.to_string()),
            ],
            &["t1", "t2", "x"],
            &rows,
        )
    }
}

/// Circular convolution on the `(n₁+N) × (n₂+N)` torus with the spectrum of
/// `a` precomputed; reused across replicas.
pub struct Synthesizer {
    coeffs: Arc<MaCoefficients>,
    n1: usize,
    n2: usize,
    m1: usize,
    m2: usize,
    a_hat: Vec<Complex64>,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl Synthesizer {
    pub fn new(coeffs: Arc<MaCoefficients>, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Geometry("lattice sides must be positive".into()));
        }
        let n = coeffs.window();
        let (m1, m2) = (n1 + n, n2 + n);
        let mut planner = FftPlanner::<f64>::new();
        let fwd = [planner.plan_fft_forward(m2), planner.plan_fft_forward(m1)];
        let inv = [planner.plan_fft_inverse(m2), planner.plan_fft_inverse(m1)];
        let half = coeffs.half();
        let mut a_hat = vec![Complex64::new(0.0, 0.0); m1 * m2];
        for d1 in -half..half {
            for d2 in -half..half {
                let i = d1.rem_euclid(m1 as i64) as usize * m2 + d2.rem_euclid(m2 as i64) as usize;
                a_hat[i] = Complex64::new(coeffs.get(d1, d2), 0.0);
            }
        }
        fft_2d(&mut a_hat, m1, m2, &fwd[0], &fwd[1]);
        Ok(Synthesizer {
            coeffs,
            n1,
            n2,
            m1,
            m2,
            a_hat,
            fwd,
            inv,
        })
    }

    /// First innovation site of the box, per axis.
    fn origin(&self) -> i64 {
        1 - self.coeffs.half()
    }

    pub fn field(&self, innov: &Innovations) -> LatticeField {
        let (m1, m2) = (self.m1, self.m2);
        let o = self.origin();
        let mut e: Vec<Complex64> = (0..m1)
            .into_par_iter()
            .flat_map_iter(|i| {
                innov
                    .row(o + i as i64, o, m2)
                    .into_iter()
                    .map(|v| Complex64::new(v, 0.0))
            })
            .collect();
        fft_2d(&mut e, m1, m2, &self.fwd[0], &self.fwd[1]);
        for (x, a) in e.iter_mut().zip(&self.a_hat) {
            *x *= a;
        }
        fft_2d(&mut e, m1, m2, &self.inv[0], &self.inv[1]);
        let scale = 1.0 / (m1 * m2) as f64;
        let mut values = Vec::with_capacity(self.n1 * self.n2);
        for t1 in 1..=self.n1 as i64 {
            for t2 in 1..=self.n2 as i64 {
                let i = (t1 - o) as usize * m2 + (t2 - o) as usize;
                values.push(e[i].re * scale);
            }
        }
        LatticeField {
            n1: self.n1,
            n2: self.n2,
            values,
            law: innov.law,
            seed: innov.seed,
            replica: innov.replica,
            window: self.coeffs.window(),
            model: self.coeffs.label().to_string(),
        }
    }
}

pub fn synthesize(
    coeffs: &Arc<MaCoefficients>,
    law: Law,
    seed: u64,
    n1: usize,
    n2: usize,
) -> Result<LatticeField> {
    Ok(Synthesizer::new(coeffs.clone(), n1, n2)?.field(&Innovations::new(law, seed, 0)))
}

/// 2-D prefix sums of `a` for O(1) window sums.
pub struct CoefficientSums {
    half: i64,
    n: usize,
    prefix: Vec<f64>,
}

impl CoefficientSums {
    pub fn new(coeffs: &MaCoefficients) -> Self {
        let n = coeffs.window();
        let half = coeffs.half();
        let w = n + 1;
        let mut prefix = vec![0.0; w * w];
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += coeffs.get(i as i64 - half, j as i64 - half);
                prefix[(i + 1) * w + j + 1] = prefix[i * w + j + 1] + row;
            }
        }
        CoefficientSums { half, n, prefix }
    }

    fn p(&self, i: i64, j: i64) -> f64 {
        let w = self.n + 1;
        self.prefix[i as usize * w + j as usize]
    }

    /// `Σ a(d)` over `d ∈ [lo₁, hi₁] × [lo₂, hi₂]`.
    pub fn window_sum(&self, lo: [i64; 2], hi: [i64; 2]) -> f64 {
        let clip = |v: i64| (v + self.half).clamp(0, self.n as i64);
        let (a1, b1) = (clip(lo[0]), clip(hi[0] + 1));
        let (a2, b2) = (clip(lo[1]), clip(hi[1] + 1));
        if a1 >= b1 || a2 >= b2 {
            return 0.0;
        }
        self.p(b1, b2) - self.p(a1, b2) - self.p(b1, a2) + self.p(a1, a2)
    }

    /// `g(s) = Σ_{t ∈ [1,n₁]×[1,n₂]} a(t − s)`, so that `S = Σ_s g(s) ε(s)`.
    pub fn rect_weight(&self, n: [u64; 2], s: [i64; 2]) -> f64 {
        self.window_sum(
            [1 - s[0], 1 - s[1]],
            [n[0] as i64 - s[0], n[1] as i64 - s[1]],
        )
    }

    /// Range of `s` on which `rect_weight` can be nonzero, per axis.
    pub fn support(&self, n: [u64; 2]) -> [(i64, i64); 2] {
        [
            (1 - self.half + 1, n[0] as i64 + self.half),
            (1 - self.half + 1, n[1] as i64 + self.half),
        ]
    }
}

/// `sup_u |Σ_{t ∈ K} a(t − u)| / norm` for `K = [1, [λ]] × [1, [λ^γ]]`.
pub fn lindeberg_ratio(coeffs: &MaCoefficients, lambda: f64, gamma: f64, norm: f64) -> Result<f64> {
    if !(norm > 0.0) {
        return Err(Error::Domain(format!("norm must be positive, got {norm}")));
    }
    let n = [lambda.floor() as u64, lambda.powf(gamma).floor() as u64];
    if n.contains(&0) {
        return Err(Error::Geometry(format!(
            "rectangle {n:?} is empty at λ = {lambda}, γ = {gamma}"
        )));
    }
    let sums = CoefficientSums::new(coeffs);
    let [(lo1, hi1), (lo2, hi2)] = sums.support(n);
    // Evaluated one margin cell beyond the support, where the sum must vanish.
    let sup = (lo1 - 1..=hi1 + 1)
        .into_par_iter()
        .map(|s1| {
            (lo2 - 1..=hi2 + 1)
                .map(|s2| sums.rect_weight(n, [s1, s2]).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup / norm)
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodogramRow {
    pub u: [f64; 2],
    pub f: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    /// Within four Fourier cells of the origin; reported, not judged.
    pub near_origin: bool,
}

/// Replica-averaged periodogram `|Σ X(t) e^{-it·u}|² / ((2π)² n₁n₂)` against `f(u)`.
pub fn periodogram_check(
    fields: &[LatticeField],
    f: &dyn Fn([f64; 2]) -> f64,
    freqs: &[[f64; 2]],
) -> Result<Vec<PeriodogramRow>> {
    if fields.len() < 30 {
        return Err(Error::Insufficient(format!(
            "periodogram check needs ≥ 30 replicas, got {}",
            fields.len()
        )));
    }
    let (n1, n2) = (fields[0].n1, fields[0].n2);
    if fields.iter().any(|x| x.n1 != n1 || x.n2 != n2) {
        return Err(Error::Geometry("replica fields differ in size".into()));
    }
    let cell = 2.0 * PI / n1.min(n2) as f64;
    let mut out = Vec::new();
    for &u in freqs {
        let e1: Vec<Complex64> = (1..=n1)
            .map(|t| Complex64::from_polar(1.0, -(t as f64) * u[0]))
            .collect();
        let e2: Vec<Complex64> = (1..=n2)
            .map(|t| Complex64::from_polar(1.0, -(t as f64) * u[1]))
            .collect();
        let vals: Vec<f64> = fields
            .par_iter()
            .map(|x| {
                let mut z = Complex64::new(0.0, 0.0);
                for i in 0..n1 {
                    let mut row = Complex64::new(0.0, 0.0);
                    for j in 0..n2 {
                        row += e2[j] * x.values[i * n2 + j];
                    }
                    z += e1[i] * row;
                }
                z.norm_sqr() / (4.0 * PI * PI * (n1 * n2) as f64)
            })
            .collect();
        let r = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / r;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let stderr = (var / r).sqrt();
        let fu = f(u);
        out.push(PeriodogramRow {
            u,
            f: fu,
            mean,
            stderr,
            z: (mean - fu) / stderr,
            near_origin: u[0].hypot(u[1]) < 4.0 * cell,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Singularity;
    use approx::assert_relative_eq;

    fn white() -> MaCoefficients {
        let f = |_u: [f64; 2]| 1.0 / (4.0 * PI * PI);
        let d = Density {
            f: &f,
            singularity: Singularity::None,
            label: "white".into(),
        };
        ma_coefficients_of(&d, 64).unwrap()
    }

    #[test]
    fn white_noise_coefficients() {
        let c = white();
        assert_relative_eq!(c.get(0, 0), 1.0, epsilon = 1e-12);
        for t1 in -32..32 {
            for t2 in -32..32 {
                if (t1, t2) != (0, 0) {
                    assert!(c.get(t1, t2).abs() < 1e-12);
                }
            }
        }
        assert_relative_eq!(c.l2_mass_captured(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn coefficients_are_even() {
        let m = SpectralModel::lrd(0.5, 1.2).unwrap();
        let c = ma_coefficients(&m, 64).unwrap();
        for t1 in -31..32 {
            for t2 in -31..32 {
                assert_eq!(c.get(t1, t2), c.get(-t1, -t2));
            }
        }
        assert!(c.sum_of_squares() <= c.integral());
    }

    #[test]
    fn rademacher_white_field_is_signs() {
        let c = Arc::new(white());
        let x = synthesize(&c, Law::Rademacher, 7, 16, 9).unwrap();
        for v in &x.values {
            assert!((v.abs() - 1.0).abs() < 1e-12, "{v}");
        }
        let again = synthesize(&c, Law::Rademacher, 7, 16, 9).unwrap();
        assert_eq!(x.values, again.values);
    }

    #[test]
    fn innovations_are_site_keyed() {
        let inv = Innovations::new(Law::Gaussian, 3, 1);
        let long = inv.row(5, -10, 30);
        let short = inv.row(5, 0, 10);
        assert_eq!(&long[10..20], &short[..]);
        let neg = inv.negated().row(5, 0, 10);
        for (a, b) in short.iter().zip(&neg) {
            assert_eq!(*a, -*b);
        }
        assert_ne!(inv.row(6, 0, 10), short);
        assert_ne!(Innovations::new(Law::Gaussian, 3, 2).row(5, 0, 10), short);
    }

    #[test]
    fn laws_are_standardized() {
        for law in [Law::Gaussian, Law::Rademacher, Law::CenteredUniform] {
            let inv = Innovations::new(law, 11, 0);
            let mut n = 0.0;
            let (mut s1, mut s2) = (0.0, 0.0);
            for r in 0..1000 {
                for v in inv.row(r, 0, 1000) {
                    n += 1.0;
                    s1 += v;
                    s2 += v * v;
                }
            }
            let mean = s1 / n;
            let var = s2 / n - mean * mean;
            assert!(mean.abs() < 4.0 / n.sqrt(), "{law}: mean {mean}");
            // Var of the sample variance is (μ₄ − 1)/n ≤ 2/n for these laws.
            assert!(
                (var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(),
                "{law}: var {var}"
            );
        }
    }

    #[test]
    fn synthesis_matches_direct_convolution() {
        let m = SpectralModel::nd(0.5, 1.5).unwrap();
        let c = Arc::new(ma_coefficients(&m, 64).unwrap());
        let syn = Synthesizer::new(c.clone(), 5, 4).unwrap();
        let inv = Innovations::new(Law::CenteredUniform, 2, 0);
        let x = syn.field(&inv);
        let neg = syn.field(&inv.negated());
        for (a, b) in x.values.iter().zip(&neg.values) {
            assert_eq!(*a, -*b);
        }
        for (t1, t2) in [(1usize, 1usize), (5, 4), (3, 2)] {
            let mut direct = 0.0;
            for s1 in (t1 as i64 - 32)..=(t1 as i64 + 32) {
                let row = inv.row(s1, t2 as i64 - 32, 65);
                for (k, e) in row.iter().enumerate() {
                    let s2 = t2 as i64 - 32 + k as i64;
                    direct += c.get(t1 as i64 - s1, t2 as i64 - s2) * e;
                }
            }
            assert_relative_eq!(x.at(t1, t2), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn rect_weights_reproduce_partial_sums() {
        let m = SpectralModel::lrd(0.5, 0.5).unwrap();
        let c = Arc::new(ma_coefficients(&m, 64).unwrap());
        let syn = Synthesizer::new(c.clone(), 6, 7).unwrap();
        let inv = Innovations::new(Law::Gaussian, 9, 4);
        let x = syn.field(&inv);
        let sums = CoefficientSums::new(&c);
        let n = [6u64, 7];
        let direct: f64 = x.values.iter().sum();
        let [(lo1, hi1), (lo2, hi2)] = sums.support(n);
        let mut via = 0.0;
        for s1 in lo1..=hi1 {
            let e = inv.row(s1, lo2, (hi2 - lo2 + 1) as usize);
            for (k, v) in e.iter().enumerate() {
                via += sums.rect_weight(n, [s1, lo2 + k as i64]) * v;
            }
        }
        assert_relative_eq!(direct, via, max_relative = 1e-10);
    }

    #[test]
    fn lindeberg_white_noise() {
        let c = white();
        assert_relative_eq!(
            lindeberg_ratio(&c, 4.0, 1.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            lindeberg_ratio(&c, 16.0, 1.0, 16.0).unwrap(),
            1.0 / 16.0,
            epsilon = 1e-12
        );
        assert!(lindeberg_ratio(&c, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let c = Arc::new(white());
        let x = synthesize(&c, Law::Gaussian, 1, 4, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        x.write_binary(dir.path(), "field").unwrap();
        let (side, v) = LatticeField::read_binary(dir.path(), "field").unwrap();
        assert_eq!(side, x.sidecar());
        assert_eq!(v, x.values);
    }

    #[test]
    fn too_few_replicas_for_periodogram() {
        let c = Arc::new(white());
        let x = synthesize(&c, Law::Gaussian, 1, 4, 3).unwrap();
        let f = |_u: [f64; 2]| 1.0;
        assert!(periodogram_check(&[x], &f, &[[1.0, 1.0]]).is_err());
    }
}

use aniscale::lab::{estimate_h, partial_sum_grid};
use aniscale::model::{ModelSpec, Regime};
use aniscale::oracle::{
    autocovariance_table, finite_cov, rect_sum_tolerance, rect_sum_variance, sides, CovarianceTable,
};
use aniscale::synth::{ma_coefficients, synthesize, Law};
use aniscale::theory::{self, HurstPair, Side};
use aniscale::SpectralModel;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::sync::{Arc, OnceLock};

fn unit() -> impl Strategy<Value = f64> {
    0.05f64..3.0
}

fn hurst() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.01f64..0.99]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fbs_covariance_is_psd(h1 in hurst(), h2 in hurst(), pts in prop::collection::vec((unit(), unit()), 2..10)) {
        let pair = HurstPair::new(h1, h2).unwrap();
        let p: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
        let n = p.len();
        let c = DMatrix::from_fn(n, n, |i, j| theory::fbs_cov(pair, p[i], p[j]));
        let min = c.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min >= -1e-8 * c.trace(), "min eigenvalue {min}");
    }

    #[test]
    fn fbs_dilation(h1 in 0.01f64..1.0, h2 in 0.01f64..1.0, x in (unit(), unit()), y in (unit(), unit()), a in 0.1f64..10.0, b in 0.1f64..10.0) {
        let pair = HurstPair::new(h1, h2).unwrap();
        let lhs = theory::fbs_cov(pair, [a * x.0, b * x.1], [a * y.0, b * y.1]);
        let rhs = a.powf(2.0 * h1) * b.powf(2.0 * h2) * theory::fbs_cov(pair, [x.0, x.1], [y.0, y.1]);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300) + 1e-300);
    }

    #[test]
    fn h_curve_continuous_at_gamma0(u1 in 0.1f64..0.95, u2 in 0.1f64..0.95, nd in any::<bool>()) {
        let m = if nd { SpectralModel::nd(u1, u2) } else { SpectralModel::lrd(u1, u2) }.unwrap();
        let g0 = theory::gamma0(&m).unwrap();
        let plus = theory::hurst_pair(&m, Side::Plus).unwrap().at(g0);
        let minus = theory::hurst_pair(&m, Side::Minus).unwrap().at(g0);
        prop_assert!((plus - minus).abs() <= 1e-5);
        let eps = 1e-7;
        let jump = theory::h_of_gamma(&m, g0 * (1.0 + eps)).unwrap() - theory::h_of_gamma(&m, g0 * (1.0 - eps)).unwrap();
        prop_assert!(jump.abs() <= 1e-5);
    }

    #[test]
    fn density_symmetric_and_dilation_covariant(u1 in 0.2f64..1.5, u2 in 0.2f64..1.5, a in -3.0f64..3.0, b in -3.0f64..3.0, lam in 0.05f64..0.9) {
        for (m, power) in [(SpectralModel::lrd(u1, u2).unwrap(), -1.0), (SpectralModel::nd(u1, u2).unwrap(), 1.0)] {
            let f = m.spectral_density([a, b]);
            prop_assert_eq!(f, m.spectral_density([-a, -b]));
            let v = [lam.powf(1.0 / u1) * a, lam.powf(1.0 / u2) * b];
            if a != 0.0 || b != 0.0 {
                let g = m.spectral_density(v);
                prop_assert!((g - lam.powf(power) * f).abs() <= 1e-10 * g.abs());
            }
        }
    }

    #[test]
    fn model_spec_roundtrip(u1 in 0.1f64..2.0, u2 in 0.1f64..2.0) {
        let spec = ModelSpec::new(Regime::Lrd, u1, u2);
        let back = ModelSpec::from_text(&spec.to_text().unwrap()).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(back.build().unwrap().hash(), spec.build().unwrap().hash());
    }

    #[test]
    fn power_law_recovered(h in 0.05f64..2.0, c in -5.0f64..5.0) {
        let rows: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0, 256.0].iter().map(|l: &f64| (*l, (c + 2.0 * h * l.ln()).exp())).collect();
        let f = estimate_h(&rows, false).unwrap();
        prop_assert!((f.h - h).abs() < 1e-9);
    }
}

fn nd_table() -> &'static CovarianceTable {
    static T: OnceLock<CovarianceTable> = OnceLock::new();
    T.get_or_init(|| autocovariance_table(&SpectralModel::nd(0.5, 0.5).unwrap(), 64, 4096).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Dirichlet-kernel quadrature of Var S against the lag sum over the covariance table.
    #[test]
    fn parseval_two_variances(n1 in 1u64..=64, n2 in 1u64..=64) {
        let m = SpectralModel::nd(0.5, 0.5).unwrap();
        let t = nd_table();
        let lag = rect_sum_variance(t, n1, n2).unwrap();
        let x = [1.0, n2 as f64 / n1 as f64];
        prop_assume!(sides(n1 as f64, 1.0, x) == [n1, n2]);
        let spec = finite_cov(&m, n1 as f64, 1.0, x, x, 1e-9).unwrap().raw;
        prop_assert!((lag - spec).abs() <= rect_sum_tolerance(t, n1, n2), "lag {lag} spectral {spec}");
    }
}

#[test]
fn partial_sums_reproducible_across_threads() {
    let m = SpectralModel::lrd(0.5, 0.5).unwrap();
    let c = Arc::new(ma_coefficients(&m, 64).unwrap());
    let run = |t: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap();
        pool.install(|| {
            let f = synthesize(&c, Law::CenteredUniform, 77, 40, 40).unwrap();
            partial_sum_grid(&f, 20.0, 1.0, &[[1.0, 1.0], [2.0, 0.5]])
                .unwrap()
                .values
        })
    };
    let a = run(1);
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        run(4).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

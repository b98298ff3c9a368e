use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use proptest::prelude::*;

use dhym::flow::{build_potential, Mode};
use dhym::torus::{compute_Z, eigen_field, hessian_field, matrix_field, quadrature_values, ScalarField, TorusConfig};

fn diag_b(n: usize, b: f64) -> Vec<f64> {
    (0..n * n).map(|k| if k % (n + 1) == 0 { b } else { 0.0 }).collect()
}

/// Trigonometric polynomial `sum a cos(k.x) + b sin(k.x)` and its Hessian.
#[derive(Debug, Clone)]
struct TrigPoly {
    terms: Vec<(Vec<i64>, f64, f64)>,
}

impl TrigPoly {
    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(k, a, b)| {
                let p: f64 = k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum();
                a * p.cos() + b * p.sin()
            })
            .sum()
    }

    fn hessian(&self, x: &[f64], i: usize, j: usize) -> f64 {
        self.terms
            .iter()
            .map(|(k, a, b)| {
                let p: f64 = k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum();
                -(k[i] * k[j]) as f64 * (a * p.cos() + b * p.sin())
            })
            .sum()
    }
}

fn trig_poly(n: usize, max_k: i64) -> impl Strategy<Value = TrigPoly> {
    prop::collection::vec(
        (prop::collection::vec(-max_k..=max_k, n), -1.0f64..1.0, -1.0f64..1.0),
        1..5,
    )
    .prop_map(|terms| TrigPoly { terms })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn spectral_hessian_exact_in_two_dimensions(p in trig_poly(2, 7)) {
        let cfg = TorusConfig::new(2, 16, &diag_b(2, 0.0)).unwrap();
        let phi = ScalarField::from_fn(&cfg, |x| p.value(x));
        let h = hessian_field(&cfg, &phi);
        for q in 0..cfg.points() {
            let x = cfg.coords(q);
            let m = h.matrix(q);
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((m[(i, j)] - p.hessian(&x, i, j)).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn spectral_hessian_exact_in_three_dimensions(p in trig_poly(3, 3)) {
        let cfg = TorusConfig::new(3, 8, &diag_b(3, 0.0)).unwrap();
        let phi = ScalarField::from_fn(&cfg, |x| p.value(x));
        let h = hessian_field(&cfg, &phi);
        for q in 0..cfg.points() {
            let x = cfg.coords(q);
            let m = h.matrix(q);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((m[(i, j)] - p.hessian(&x, i, j)).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn eigen_field_preserves_trace_and_determinant(p in trig_poly(2, 5), b in 0.5f64..3.0) {
        let cfg = TorusConfig::new(2, 16, &[b, 0.3, 0.3, b]).unwrap();
        let phi = ScalarField::from_fn(&cfg, |x| 0.2 * p.value(x));
        let a = matrix_field(&cfg, &phi);
        let spectra = eigen_field(&a);
        for q in 0..cfg.points() {
            let m = a.matrix(q);
            let l = spectra.at(q);
            let scale = 1.0 + m.norm();
            prop_assert!((l.iter().sum::<f64>() - m.trace()).abs() <= 1e-13 * scale);
            prop_assert!((l.iter().product::<f64>() - m.determinant()).abs() <= 1e-12 * scale * scale);
            prop_assert!(l[0] >= l[1]);
        }
    }
}

/// Smooth but not band-limited: coefficients decay like `0.63^|k|`.
fn poisson_potential(x: &[f64]) -> f64 {
    0.004 / (1.0 - 0.9 * (x[0] - x[1]).cos()) + 0.003 / (1.0 - 0.9 * x[0].sin())
}

#[test]
fn z_drift_decays_spectrally_with_resolution() {
    let mut errors = Vec::new();
    for grid in [16, 32, 64] {
        let cfg = TorusConfig::new(2, grid, &diag_b(2, 2.0)).unwrap();
        let z0 = compute_Z(&cfg, &ScalarField::zeros(&cfg), 2).unwrap().z;
        let phi = ScalarField::from_fn(&cfg, poisson_potential);
        let z = compute_Z(&cfg, &phi, 2).unwrap().z;
        errors.push((z - z0).norm() / z0.norm());
    }
    assert!(errors[0] > 1e-12, "{errors:?}");
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] / 10.0, "{errors:?}");
    }
}

#[test]
fn z_identities_for_band_limited_potential() {
    let cfg = TorusConfig::new(2, 64, &[2.0, 0.4, 0.4, 1.5]).unwrap();
    let phi = build_potential(
        &cfg,
        &[
            Mode::cos(vec![1, 0], 0.3),
            Mode::sin(vec![1, 1], 0.2),
            Mode::cos(vec![2, -1], 0.05),
            Mode::sin(vec![0, 3], 0.02),
        ],
    )
    .unwrap();
    let zi = compute_Z(&cfg, &phi, 2).unwrap();
    let th = zi.theta_hat.theta_hat();
    let spectra = eigen_field(&matrix_field(&cfg, &phi));
    let pts: Vec<(f64, f64)> = spectra.map_points(|l| {
        let theta: f64 = l.iter().map(|x| x.atan()).sum();
        let v: f64 = l.iter().map(|x| 1.0 + x * x).product::<f64>().sqrt();
        (v, theta)
    });
    assert!(pts.iter().all(|(_, t)| (t - th).abs() < FRAC_PI_2));
    let cos: Vec<f64> = pts.iter().map(|(v, t)| v * (t - th).cos()).collect();
    let sin: Vec<f64> = pts.iter().map(|(v, t)| v * (t - th).sin()).collect();
    let vol: Vec<f64> = pts.iter().map(|(v, _)| *v).collect();
    let big_v = quadrature_values(&cfg, &vol);
    assert!((quadrature_values(&cfg, &cos) - zi.modulus).abs() <= 1e-8 * zi.modulus);
    assert!(quadrature_values(&cfg, &sin).abs() <= 1e-8 * big_v);
    assert!(big_v >= zi.modulus * (1.0 - 1e-8));
}

#[test]
fn three_dimensional_branch_lift() {
    let cfg = TorusConfig::new(3, 8, &diag_b(3, 2.0)).unwrap();
    let zi = compute_Z(&cfg, &ScalarField::zeros(&cfg), 3).unwrap();
    let expected = Complex64::new(1.0, 2.0).powi(3) * cfg.volume();
    assert!((zi.z - expected).norm() <= 1e-12 * expected.norm());
    assert!((zi.theta_hat.theta_hat() - 3.0 * 2.0f64.atan()).abs() < 1e-14);
    assert!(zi.theta_hat.is_top_branch(3));
}

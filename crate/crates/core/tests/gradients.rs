//! Central finite-difference checks for every analytic gradient in `numerics`.

use langskill::numerics::{Activation, Matrix, MlpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn assert_close(analytic: &[f64], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        if a.abs() < 1e-8 {
            assert!((a - n).abs() < 1e-8, "{what}[{i}]: analytic {a:e} numeric {n:e}");
        } else {
            let rel = ((a - n) / a).abs();
            assert!(rel < 1e-4, "{what}[{i}]: analytic {a:e} numeric {n:e} rel {rel:e}");
        }
    }
}

fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + STEP;
            let up = f(&x);
            x[i] = orig - STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn random_case(rng: &mut ChaCha8Rng) -> (MlpSpec, Vec<f64>, Matrix) {
    let depth = rng.gen_range(3..=4);
    let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=7)).collect();
    let spec = MlpSpec::new(widths, Activation::Tanh).unwrap();
    let params = spec.init_params(rng).into_inner();
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..spec.input_width()).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect();
    (spec, params, Matrix::from_rows(&rows))
}

/// Loss = Σ_ij c_ij · y_ij², with fixed random c.
fn weighted_square(c: &[f64]) -> impl Fn(&Matrix) -> (f64, Matrix) + '_ {
    move |y: &Matrix| {
        let v = y.data.iter().zip(c).map(|(y, c)| c * y * y).sum();
        let d = y.data.iter().zip(c).map(|(y, c)| 2.0 * c * y).collect();
        (v, Matrix::from_vec(y.rows, y.cols, d))
    }
}

#[test]
fn grad_params_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let (spec, params, x) = random_case(&mut rng);
        let c: Vec<f64> = (0..x.rows * spec.output_width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, g) = spec.grad_params(&params, &x, weighted_square(&c)).unwrap();
        let numeric = fd(
            |p| {
                let y = spec.forward_batch(p, &x).unwrap().into_output();
                weighted_square(&c)(&y).0
            },
            &params,
        );
        assert_close(&g, &numeric, "grad_params");
    }
}

#[test]
fn grad_input_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let (spec, params, x) = random_case(&mut rng);
        let sel = rng.gen_range(0..spec.output_width());
        for row in x.iter_rows() {
            let g = spec.grad_input(&params, row, sel).unwrap();
            let numeric = fd(|xi| spec.forward(&params, xi).unwrap()[sel], row);
            assert_close(&g, &numeric, "grad_input");
        }
    }
}

#[test]
fn penalty_parameter_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    for _ in 0..20 {
        let (spec, params, x) = random_case(&mut rng);
        let sel = rng.gen_range(0..spec.output_width());
        let coeffs: Vec<f64> = (0..x.rows).map(|_| rng.gen_range(0.1..1.0)).collect();
        let (_, g) = spec.input_grad_penalty(&params, &x, sel, &coeffs).unwrap();
        // Oracle: penalty recomputed from grad_input only.
        let penalty = |p: &[f64]| -> f64 {
            x.iter_rows()
                .zip(&coeffs)
                .map(|(row, c)| c * spec.grad_input(p, row, sel).unwrap().iter().map(|v| v * v).sum::<f64>())
                .sum()
        };
        let numeric = fd(penalty, &params);
        assert_close(&g, &numeric, "penalty");
    }
}

#[test]
fn relu_penalty_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let spec = MlpSpec::new(vec![4, 6, 5, 1], Activation::Relu).unwrap();
    for _ in 0..5 {
        let params = spec.init_params(&mut rng).into_inner();
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let x = Matrix::from_rows(&rows);
        let coeffs = vec![1.0; 6];
        let (_, g) = spec.input_grad_penalty(&params, &x, 0, &coeffs).unwrap();
        let numeric = fd(
            |p| {
                x.iter_rows()
                    .map(|row| spec.grad_input(p, row, 0).unwrap().iter().map(|v| v * v).sum::<f64>())
                    .sum()
            },
            &params,
        );
        assert_close(&g, &numeric, "relu penalty");
    }
}

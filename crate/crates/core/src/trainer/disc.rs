use super::nets::Discriminator;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softplus, Matrix, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscLoss {
    /// `−mean log D` over reference inputs.
    pub ref_term: f64,
    /// `−mean log(1 − D)` over policy inputs.
    pub pol_term: f64,
    /// `ω_gp · mean ‖∂logit/∂input‖²` over reference inputs.
    pub penalty: f64,
    /// Fraction of inputs on the correct side of 0.5.
    pub accuracy: f64,
    pub grad: ParamVector,
}

impl DiscLoss {
    pub fn total(&self) -> f64 {
        self.ref_term + self.pol_term + self.penalty
    }
}

/// Binary cross-entropy with reference inputs labelled 1 and policy inputs 0,
/// plus a gradient penalty on the reference inputs. Skill latents are part of
/// the inputs and receive no gradient.
pub fn disc_loss(disc: &Discriminator, ref_inputs: &Matrix, pol_inputs: &Matrix, gp_weight: f64) -> Result<DiscLoss> {
    if ref_inputs.rows == 0 || pol_inputs.rows == 0 {
        return Err(Error::contract("discriminator batches must be non-empty"));
    }
    let spec = &disc.spec;
    let (nr, np) = (ref_inputs.rows as f64, pol_inputs.rows as f64);
    let mut correct = 0usize;

    let (ref_term, g_ref) = spec.grad_params(&disc.params, ref_inputs, |out| {
        let mut d = Matrix::zeros(out.rows, 1);
        let mut v = 0.0;
        for i in 0..out.rows {
            let l = out.data[i];
            v += softplus(-l) / nr;
            d.data[i] = -sigmoid(-l) / nr;
            correct += (l > 0.0) as usize;
        }
        (v, d)
    })?;
    let (pol_term, g_pol) = spec.grad_params(&disc.params, pol_inputs, |out| {
        let mut d = Matrix::zeros(out.rows, 1);
        let mut v = 0.0;
        for i in 0..out.rows {
            let l = out.data[i];
            v += softplus(l) / np;
            d.data[i] = sigmoid(l) / np;
            correct += (l < 0.0) as usize;
        }
        (v, d)
    })?;
    let coeffs = vec![gp_weight / nr; ref_inputs.rows];
    let (penalty, g_pen) = spec.input_grad_penalty(&disc.params, ref_inputs, 0, &coeffs)?;

    if !(ref_term.is_finite() && pol_term.is_finite() && penalty.is_finite()) {
        return Err(Error::Numeric(format!(
            "discriminator loss non-finite: reference {ref_term}, policy {pol_term}, penalty {penalty}"
        )));
    }
    let grad: Vec<f64> = g_ref.iter().zip(g_pol.iter()).zip(g_pen.iter()).map(|((a, b), c)| a + b + c).collect();
    Ok(DiscLoss {
        ref_term,
        pol_term,
        penalty,
        accuracy: correct as f64 / (nr + np),
        grad: ParamVector(grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, MlpSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Matrix {
        Matrix::from_vec(n, m, (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn constant_half_discriminator() {
        let spec = MlpSpec::new(vec![5, 4, 1], Activation::Tanh).unwrap();
        let disc = Discriminator { params: spec.zero_params(), spec };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = disc_loss(&disc, &rand_matrix(&mut rng, 6, 5), &rand_matrix(&mut rng, 3, 5), 5.0).unwrap();
        assert!((l.ref_term - 2f64.ln()).abs() < 1e-15);
        assert!((l.pol_term - 2f64.ln()).abs() < 1e-15);
        assert_eq!(l.penalty, 0.0);
        assert!((l.total() - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn penalty_matches_finite_difference_input_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = MlpSpec::new(vec![6, 8, 8, 1], Activation::Tanh).unwrap();
        let disc = Discriminator { params: spec.init_params(&mut rng), spec };
        let refs = rand_matrix(&mut rng, 5, 6);
        let l = disc_loss(&disc, &refs, &rand_matrix(&mut rng, 5, 6), 2.0).unwrap();
        let mut fd_sum = 0.0;
        for i in 0..refs.rows {
            let x = refs.row(i).to_vec();
            for k in 0..x.len() {
                let h = 1e-5;
                let (mut up, mut dn) = (x.clone(), x.clone());
                up[k] += h;
                dn[k] -= h;
                let g = (disc.spec.forward(&disc.params, &up).unwrap()[0] - disc.spec.forward(&disc.params, &dn).unwrap()[0]) / (2.0 * h);
                fd_sum += g * g;
            }
        }
        let fd = 2.0 * fd_sum / refs.rows as f64;
        assert!(l.penalty >= 0.0);
        assert!((l.penalty - fd).abs() <= 1e-4 * fd.abs().max(1e-12), "{} vs {fd}", l.penalty);
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = MlpSpec::new(vec![4, 6, 1], Activation::Tanh).unwrap();
        let mut disc = Discriminator { params: spec.init_params(&mut rng), spec };
        let (r, p) = (rand_matrix(&mut rng, 4, 4), rand_matrix(&mut rng, 3, 4));
        let g = disc_loss(&disc, &r, &p, 5.0).unwrap().grad;
        for i in 0..disc.params.len() {
            let h = 1e-5;
            disc.params[i] += h;
            let up = disc_loss(&disc, &r, &p, 5.0).unwrap().total();
            disc.params[i] -= 2.0 * h;
            let dn = disc_loss(&disc, &r, &p, 5.0).unwrap().total();
            disc.params[i] += h;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn separating_discriminator_terms_vanish() {
        // A single linear unit on the first input, with a large weight.
        let spec = MlpSpec::new(vec![2, 1], Activation::Tanh).unwrap();
        let disc = Discriminator { params: ParamVector(vec![80.0, 0.0, 0.0]), spec };
        let r = Matrix::from_rows(&[[1.0, 0.0], [0.9, 0.3]]);
        let p = Matrix::from_rows(&[[-1.0, 0.0], [-0.8, 0.1]]);
        let l = disc_loss(&disc, &r, &p, 0.0).unwrap();
        assert!(l.ref_term < 1e-20 && l.pol_term < 1e-20);
        assert_eq!(l.accuracy, 1.0);
    }
}

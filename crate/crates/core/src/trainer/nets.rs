use rand::Rng;
use rand_distr::StandardNormal;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::motion::{Frame, NUM_JOINTS};
use crate::numerics::{sigmoid, Activation, Matrix, MlpSpec, OptimizerState, ParamVector};
use crate::sim::{frame_features, observe, RobotState, DISC_FEATURES, OBS_LEN};

/// Per-entry input scale applied to observations before the policy and
/// value networks: joint rates and root velocity are shrunk toward unit range.
fn obs_scale(i: usize) -> f64 {
    let j = NUM_JOINTS;
    match i {
        _ if i < j => 1.0,
        _ if i < 2 * j => 0.2,
        _ if i < 2 * j + 2 => 0.5,
        _ => 1.0,
    }
}

fn feature_scale(i: usize) -> f64 {
    let j = NUM_JOINTS;
    match i {
        0 | 1 => 0.5,
        _ if i < 2 + j => 1.0,
        _ if i < 2 + 2 * j => 0.2,
        _ if i < 2 + 2 * j + 4 => 1.0,
        _ => 2.0,
    }
}

/// Network input for the policy and value function: scaled observation ‖ z.
pub fn policy_input(state: &RobotState, d_t: [f64; 2], z: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = observe(state, d_t).into_iter().enumerate().map(|(i, x)| x * obs_scale(i)).collect();
    v.extend_from_slice(z);
    v
}

pub fn scaled_features(f: &Frame) -> Vec<f64> {
    frame_features(f).into_iter().enumerate().map(|(i, x)| x * feature_scale(i)).collect()
}

/// Discriminator input: scaled features of both states ‖ z.
pub fn disc_input(from: &Frame, to: &Frame, z: &[f64]) -> Vec<f64> {
    let mut v = scaled_features(from);
    v.extend(scaled_features(to));
    v.extend_from_slice(z);
    v
}

pub fn policy_input_width(latent_dim: usize) -> usize {
    OBS_LEN + latent_dim
}

pub fn disc_input_width(latent_dim: usize) -> usize {
    2 * DISC_FEATURES + latent_dim
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Gaussian policy over joint targets with a state-independent log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub log_std: Vec<f64>,
}

pub const LOG_STD_FLOOR: f64 = -6.907_755_278_982_137; // ln(1e-3)

impl PolicyNet {
    pub fn init<R: Rng + ?Sized>(latent_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(widths(policy_input_width(latent_dim), hidden, NUM_JOINTS), Activation::Tanh)?;
        let params = spec.init_params_with_output_gain(rng, 0.01);
        Ok(Self {
            spec,
            params,
            log_std: vec![init_log_std; NUM_JOINTS],
        })
    }

    pub fn mean(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.spec.forward(&self.params, input)
    }

    pub fn mean_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.spec.forward_batch(&self.params, inputs)?.into_output())
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        mean.iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        log_prob(mean, &self.log_std, action)
    }

    pub fn param_len(&self) -> usize {
        self.params.len() + self.log_std.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.params.to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let n = self.params.len();
        self.params.copy_from_slice(&v[..n]);
        for (ls, x) in self.log_std.iter_mut().zip(&v[n..]) {
            *ls = x.max(LOG_STD_FLOOR);
        }
    }

    pub fn write(&self, w: &mut ByteWriter) {
        self.spec.write_fragment(&self.params, w);
        w.f64s(&self.log_std);
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let (spec, params) = MlpSpec::read_fragment(r)?;
        let at = r.offset();
        let log_std = r.f64s("policy log-std")?;
        if log_std.len() != spec.output_width() {
            return Err(Error::parse(at, "policy log-std length does not match action width"));
        }
        Ok(Self { spec, params, log_std })
    }
}

pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// State-value network; outputs are multiplied by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub scale: f64,
}

impl ValueNet {
    pub fn init<R: Rng + ?Sized>(latent_dim: usize, hidden: &[usize], scale: f64, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(widths(policy_input_width(latent_dim), hidden, 1), Activation::Tanh)?;
        let params = spec.init_params(rng);
        Ok(Self { spec, params, scale })
    }

    pub fn values(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        let out = self.spec.forward_batch(&self.params, inputs)?.into_output();
        Ok(out.data.iter().map(|v| v * self.scale).collect())
    }

    pub fn write(&self, w: &mut ByteWriter) {
        self.spec.write_fragment(&self.params, w);
        w.f64(self.scale);
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let (spec, params) = MlpSpec::read_fragment(r)?;
        let scale = r.f64("value scale")?;
        Ok(Self { spec, params, scale })
    }
}

/// Conditional discriminator; the network emits a logit, `prob` squashes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Discriminator {
    pub fn init<R: Rng + ?Sized>(latent_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(widths(disc_input_width(latent_dim), hidden, 1), Activation::Tanh)?;
        let params = spec.init_params(rng);
        Ok(Self { spec, params })
    }

    pub fn logits(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        Ok(self.spec.forward_batch(&self.params, inputs)?.into_output().data)
    }

    pub fn prob(&self, input: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.spec.forward(&self.params, input)?[0]))
    }

    pub fn write(&self, w: &mut ByteWriter) {
        self.spec.write_fragment(&self.params, w);
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let (spec, params) = MlpSpec::read_fragment(r)?;
        Ok(Self { spec, params })
    }
}

/// Networks plus their optimizer states.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub disc: Discriminator,
    pub opt_policy: OptimizerState,
    pub opt_value: OptimizerState,
    pub opt_disc: OptimizerState,
}

impl Agent {
    pub fn write(&self, w: &mut ByteWriter) {
        self.policy.write(w);
        self.value.write(w);
        self.disc.write(w);
    }

    pub fn write_optimizers(&self, w: &mut ByteWriter) {
        self.opt_policy.write(w);
        self.opt_value.write(w);
        self.opt_disc.write(w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_prob_of_mean_is_normalizer() {
        let lp = log_prob(&[0.3, -0.1], &[0.0, (0.5f64).ln()], &[0.3, -0.1]);
        let expect = -2.0 * 0.918_938_533_204_672_8 - 0.5f64.ln();
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn input_widths() {
        let s = RobotState::at([0.0, 0.0], 0.0);
        assert_eq!(policy_input(&s, [1.0, 0.0], &[0.0; 16]).len(), policy_input_width(16));
        assert_eq!(disc_input(&s.frame(), &s.frame(), &[0.0; 16]).len(), disc_input_width(16));
    }

    #[test]
    fn log_std_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = PolicyNet::init(4, &[8], (0.1f64).ln(), &mut rng).unwrap();
        let mut v = p.flat();
        let n = v.len();
        v[n - 1] = -50.0;
        p.set_flat(&v);
        assert_eq!(p.log_std[NUM_JOINTS - 1], LOG_STD_FLOOR);
    }
}

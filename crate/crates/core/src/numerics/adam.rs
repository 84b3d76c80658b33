use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

/// Adaptive-moment optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// In-place bias-corrected update.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::contract(format!(
                "adam shape mismatch: params {}, grads {}, state {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn write(&self, w: &mut ByteWriter) {
        w.f64s(&self.first_moment);
        w.f64s(&self.second_moment);
        w.u64(self.step_count);
        for v in [self.learning_rate, self.beta1, self.beta2, self.epsilon] {
            w.f64(v);
        }
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let at = r.offset();
        let first_moment = r.f64s("adam first moment")?;
        let second_moment = r.f64s("adam second moment")?;
        if first_moment.len() != second_moment.len() {
            return Err(Error::parse(at, "adam moment lengths differ"));
        }
        Ok(Self {
            first_moment,
            second_moment,
            step_count: r.u64("adam step count")?,
            learning_rate: r.f64("adam learning rate")?,
            beta1: r.f64("adam beta1")?,
            beta2: r.f64("adam beta2")?,
            epsilon: r.f64("adam epsilon")?,
        })
    }
}

/// Pure form of [`OptimizerState::step`].
pub fn adam_step(params: &[f64], grads: &[f64], state: &OptimizerState) -> Result<(Vec<f64>, OptimizerState)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    s.step(&mut p, grads)?;
    Ok((p, s))
}

/// Rescales `grads` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

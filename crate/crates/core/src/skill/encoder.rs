use rand::Rng;

use super::Codebook;
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::numerics::{normalize_backward, normalize_in_place, Activation, Matrix, MlpSpec, OptimizerState, ParamVector};
use crate::text::TextFeature;

#[derive(Debug, Clone, PartialEq)]
pub struct SkillLatent {
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillEncoderParams {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl SkillEncoderParams {
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, hidden: usize, latent_dim: usize, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(vec![feature_dim, hidden, latent_dim], Activation::Tanh)?;
        let params = spec.init_params(rng);
        Ok(Self { spec, params })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.output_width()
    }

    pub fn write(&self, w: &mut ByteWriter) {
        self.spec.write_fragment(&self.params, w);
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let (spec, params) = MlpSpec::read_fragment(r)?;
        Ok(Self { spec, params })
    }
}

pub fn skill_encode(params: &SkillEncoderParams, e: &TextFeature) -> Result<SkillLatent> {
    if e.dim() != params.spec.input_width() {
        return Err(Error::contract(format!(
            "skill encoder expects width {}, got {}",
            params.spec.input_width(),
            e.dim()
        )));
    }
    let mut z = params.spec.forward(&params.params, &e.values)?;
    normalize_in_place(&mut z);
    Ok(SkillLatent { z })
}

/// Loss terms; `uniformity` is `None` when the batch has fewer than two items.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillLoss {
    pub alignment: f64,
    pub uniformity: Option<f64>,
}

impl SkillLoss {
    pub fn total(&self) -> f64 {
        self.alignment + self.uniformity.unwrap_or(0.0)
    }
}

fn check_batch(params: &SkillEncoderParams, batch: &[(TextFeature, usize)], codebook: &Codebook) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::contract("empty skill-encoder batch"));
    }
    for (f, k) in batch {
        if *k >= codebook.len() {
            return Err(Error::contract(format!("label index {k} outside codebook")));
        }
        if f.dim() != params.spec.input_width() {
            return Err(Error::contract("feature width does not match the skill encoder"));
        }
    }
    Ok(())
}

/// Loss and parameter gradient. Rows `0..n` are the batch features, rows
/// `n..n+K` the codebook entries.
fn loss_and_grad(
    params: &SkillEncoderParams,
    batch: &[(TextFeature, usize)],
    codebook: &Codebook,
    want_grad: bool,
) -> Result<(SkillLoss, Option<ParamVector>)> {
    check_batch(params, batch, codebook)?;
    let n = batch.len();
    let k = codebook.len();
    let mut rows: Vec<&[f64]> = batch.iter().map(|(f, _)| f.values.as_slice()).collect();
    rows.extend(codebook.entries.iter().map(|e| e.values.as_slice()));
    let x = Matrix::from_rows(&rows);
    let cache = params.spec.forward_batch(&params.params, &x)?;
    let mut z = cache.output().clone();
    let norms: Vec<f64> = (0..n + k).map(|i| normalize_in_place(z.row_mut(i))).collect();
    let mut dz = Matrix::zeros(n + k, z.cols);

    let mut alignment = 0.0;
    for (i, (_, lbl)) in batch.iter().enumerate() {
        let p = n + lbl;
        for j in 0..z.cols {
            let diff = z.get(i, j) - z.get(p, j);
            alignment += diff * diff / n as f64;
            dz.row_mut(i)[j] += 2.0 * diff / n as f64;
            dz.row_mut(p)[j] -= 2.0 * diff / n as f64;
        }
    }

    let uniformity = if n >= 2 {
        let mut s = 0.0;
        let mut weights = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n {
            for b in a + 1..n {
                let w = (-2.0 * super::sq_dist(z.row(a), z.row(b))).exp();
                weights.push(w);
                s += w;
            }
        }
        let pairs = weights.len() as f64;
        let mut idx = 0;
        for a in 0..n {
            for b in a + 1..n {
                let c = -4.0 * weights[idx] / s;
                idx += 1;
                for j in 0..z.cols {
                    let g = c * (z.get(a, j) - z.get(b, j));
                    dz.row_mut(a)[j] += g;
                    dz.row_mut(b)[j] -= g;
                }
            }
        }
        Some((s / pairs).ln())
    } else {
        None
    };
    let loss = SkillLoss { alignment, uniformity };
    if !loss.total().is_finite() {
        return Err(Error::Numeric("skill-encoder loss is non-finite".into()));
    }
    if !want_grad {
        return Ok((loss, None));
    }
    let mut d_raw = Matrix::zeros(n + k, z.cols);
    for i in 0..n + k {
        let g = normalize_backward(z.row(i), norms[i], dz.row(i));
        d_raw.row_mut(i).copy_from_slice(&g);
    }
    let mut grad = params.spec.zero_params();
    params.spec.backward(&params.params, &cache, &d_raw, &mut grad)?;
    Ok((loss, Some(grad)))
}

/// Alignment: mean ‖z(f_i) − z(e_label_i)‖². Uniformity: log of the mean of
/// exp(−2‖z_i − z_j‖²) over distinct batch pairs.
pub fn skill_encoder_loss(params: &SkillEncoderParams, batch: &[(TextFeature, usize)], codebook: &Codebook) -> Result<SkillLoss> {
    Ok(loss_and_grad(params, batch, codebook, false)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for SkillTrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 64,
            learning_rate: 3e-3,
        }
    }
}

/// Minibatch Adam on the alignment + uniformity loss. Returns the trained
/// parameters and the per-step losses.
pub fn train_skill_encoder<R: Rng + ?Sized>(
    init: &SkillEncoderParams,
    data: &[(TextFeature, usize)],
    codebook: &Codebook,
    config: &SkillTrainConfig,
    rng: &mut R,
) -> Result<(SkillEncoderParams, Vec<SkillLoss>)> {
    if data.is_empty() {
        return Err(Error::contract("no skill-encoder training data"));
    }
    let mut p = init.clone();
    let mut opt = OptimizerState::new(p.params.len(), config.learning_rate);
    let mut log = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let batch: Vec<(TextFeature, usize)> = (0..config.batch_size.max(1))
            .map(|_| data[rng.gen_range(0..data.len())].clone())
            .collect();
        let (loss, grad) = loss_and_grad(&p, &batch, codebook, true)?;
        opt.step(&mut p.params, &grad.expect("requested"))?;
        log.push(loss);
    }
    Ok((p, log))
}

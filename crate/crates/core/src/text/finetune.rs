use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EncoderParams;
use crate::error::{Error, Result};
use crate::motion::{CaptionCorpus, SkillClass, Split};
use crate::numerics::{normalize_backward, normalize_in_place, Matrix, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Prototype separation margin.
    pub margin: f64,
    pub separation_weight: f64,
    /// Captions per gradient step; `None` uses the whole training split.
    pub batch_size: Option<usize>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            margin: 0.5,
            separation_weight: 1.0,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mse: f64,
    pub separation: f64,
    pub min_prototype_distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FinetuneLog {
    pub epochs: Vec<EpochStats>,
}

fn pack(params: &EncoderParams) -> Vec<f64> {
    let mut v = params.embedding.clone();
    v.extend_from_slice(&params.head);
    v
}

fn unpack(params: &mut EncoderParams, flat: &[f64]) {
    let n = params.embedding.len();
    params.embedding.copy_from_slice(&flat[..n]);
    params.head.copy_from_slice(&flat[n..]);
}

/// Features of `token_rows` with everything needed for the backward pass.
struct Pass {
    cache: crate::numerics::ForwardCache,
    feats: Matrix,
    norms: Vec<f64>,
}

fn forward(params: &EncoderParams, token_rows: &[Vec<usize>]) -> Result<Pass> {
    let pooled = params.pooled_batch(token_rows);
    let cache = params.head_spec.forward_batch(&params.head, &pooled)?;
    let mut feats = cache.output().clone();
    let mut norms = Vec::with_capacity(feats.rows);
    for i in 0..feats.rows {
        norms.push(normalize_in_place(feats.row_mut(i)));
    }
    Ok(Pass { cache, feats, norms })
}

/// Gradient of the combined objective w.r.t. the flat parameter vector.
fn backward(params: &EncoderParams, token_rows: &[Vec<usize>], pass: &Pass, d_feats: &Matrix, grad: &mut [f64]) -> Result<()> {
    let n_embed = params.embedding.len();
    let mut d_raw = Matrix::zeros(d_feats.rows, d_feats.cols);
    for i in 0..d_feats.rows {
        let g = normalize_backward(pass.feats.row(i), pass.norms[i], d_feats.row(i));
        d_raw.row_mut(i).copy_from_slice(&g);
    }
    let d_pooled = params.head_spec.backward(&params.head, &pass.cache, &d_raw, &mut grad[n_embed..])?;
    let w = params.embed_dim;
    for (i, rows) in token_rows.iter().enumerate() {
        let inv = 1.0 / rows.len() as f64;
        for &r in rows {
            for (g, d) in grad[r * w..(r + 1) * w].iter_mut().zip(d_pooled.row(i)) {
                *g += d * inv;
            }
        }
    }
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pulls every training caption toward its label's feature (frozen at the
/// start of each epoch) while a hinge term keeps label features apart.
pub fn finetune(
    params: &EncoderParams,
    corpus: &CaptionCorpus,
    config: &FinetuneConfig,
    seed: u64,
) -> Result<(EncoderParams, FinetuneLog)> {
    corpus.validate(1)?;
    let mut classes: Vec<SkillClass> = corpus.entries.iter().map(|e| e.label).collect();
    classes.sort();
    classes.dedup();
    let class_slot = |s: SkillClass| classes.iter().position(|&c| c == s).expect("present");

    let label_rows: Vec<Vec<usize>> =
        classes.iter().map(|s| params.token_rows(s.label())).collect::<Result<_>>()?;
    let mut train: Vec<(Vec<usize>, usize)> = corpus
        .split(Split::Train)
        .map(|e| Ok((params.token_rows(&e.caption)?, class_slot(e.label))))
        .collect::<Result<_>>()?;
    if train.is_empty() {
        return Err(Error::contract("corpus has no training captions"));
    }

    let mut out = params.clone();
    let mut flat = pack(&out);
    let mut opt = OptimizerState::new(flat.len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = FinetuneLog::default();
    let k = classes.len();

    for epoch in 0..config.epochs {
        let frozen = forward(&out, &label_rows)?.feats;
        let bs = config.batch_size.unwrap_or(train.len()).clamp(1, train.len());
        if bs < train.len() {
            train.shuffle(&mut rng);
        }
        let (mut mse_sum, mut sep_sum, mut steps) = (0.0, 0.0, 0usize);
        let mut min_dist = f64::INFINITY;
        for chunk in train.chunks(bs) {
            let mut rows: Vec<Vec<usize>> = chunk.iter().map(|(r, _)| r.clone()).collect();
            rows.extend(label_rows.iter().cloned());
            let pass = forward(&out, &rows)?;
            let n = chunk.len();
            let mut d = Matrix::zeros(n + k, pass.feats.cols);

            let mut mse = 0.0;
            for (i, (_, c)) in chunk.iter().enumerate() {
                let (f, p) = (pass.feats.row(i), frozen.row(*c));
                for (j, (a, b)) in f.iter().zip(p).enumerate() {
                    mse += (a - b) * (a - b) / n as f64;
                    d.row_mut(i)[j] = 2.0 * (a - b) / n as f64;
                }
            }

            let mut sep = 0.0;
            for a in 0..k {
                for b in a + 1..k {
                    let (pa, pb) = (pass.feats.row(n + a).to_vec(), pass.feats.row(n + b).to_vec());
                    let dd = dist(&pa, &pb);
                    min_dist = min_dist.min(dd);
                    let gap = config.margin - dd;
                    if gap > 0.0 && dd > 0.0 {
                        sep += gap * gap;
                        let s = -2.0 * config.separation_weight * gap / dd;
                        for j in 0..pa.len() {
                            let g = s * (pa[j] - pb[j]);
                            d.row_mut(n + a)[j] += g;
                            d.row_mut(n + b)[j] -= g;
                        }
                    }
                }
            }

            let loss = mse + config.separation_weight * sep;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "encoder fine-tune loss is non-finite at epoch {epoch} (mse {mse}, separation {sep})"
                )));
            }
            let mut grad = vec![0.0; flat.len()];
            backward(&out, &rows, &pass, &d, &mut grad)?;
            opt.step(&mut flat, &grad)?;
            unpack(&mut out, &flat);
            mse_sum += mse;
            sep_sum += sep;
            steps += 1;
        }
        let stats = EpochStats {
            epoch,
            mse: mse_sum / steps as f64,
            separation: sep_sum / steps as f64,
            min_prototype_distance: if k > 1 { min_dist } else { f64::NAN },
        };
        log::debug!(
            "encoder epoch {epoch}: mse {:.5} separation {:.5}",
            stats.mse,
            stats.separation
        );
        log.epochs.push(stats);
    }
    Ok((out, log))
}

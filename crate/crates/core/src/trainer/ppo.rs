use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::nets::{log_prob, Agent, PolicyNet};
use super::rollout::RolloutBuffer;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::numerics::{clip_grad_norm, Matrix};

/// Generalized advantage estimates and returns. `values` has one more entry
/// than `rewards`: the bootstrap value after the last step. A done flag at
/// step `t` cuts both the bootstrap and the advantage recursion.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    if values.len() != t_len + 1 || dones.len() != t_len {
        return Err(Error::contract("gae needs T rewards, T done flags and T + 1 values"));
    }
    let mut adv = vec![0.0; t_len];
    let mut running = 0.0;
    for t in (0..t_len).rev() {
        let keep = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * keep - values[t];
        running = delta + gamma * lambda * keep * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub early_stopped: bool,
    pub epochs_run: usize,
}

/// Clipped-surrogate loss `−mean min(ρA, clip(ρ)A)` and its gradient with
/// respect to the policy's flat parameters (MLP weights, then log-std).
/// Returns (loss, gradient, approximate KL, clip fraction).
pub fn surrogate_grad(
    policy: &PolicyNet,
    inputs: &Matrix,
    actions: &[Vec<f64>],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
) -> Result<(f64, Vec<f64>, f64, f64)> {
    let n = inputs.rows;
    let cache = policy.spec.forward_batch(&policy.params, inputs)?;
    let means = cache.output();
    let dim = means.cols;
    let mut d_mean = Matrix::zeros(n, dim);
    let mut d_log_std = vec![0.0; dim];
    let inv_var: Vec<f64> = policy.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let (mut loss, mut kl, mut clipped) = (0.0, 0.0, 0usize);
    for i in 0..n {
        let mean = means.row(i);
        let lp = log_prob(mean, &policy.log_std, &actions[i]);
        let ratio = (lp - old_log_probs[i]).exp();
        let a = advantages[i];
        let unclipped = ratio * a;
        let clipped_v = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        kl += (old_log_probs[i] - lp) / n as f64;
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        loss -= unclipped.min(clipped_v) / n as f64;
        // The unclipped branch is active when it is the smaller one; the
        // clipped branch is constant in the parameters.
        if unclipped <= clipped_v {
            let coef = -a * ratio / n as f64;
            for j in 0..dim {
                let diff = actions[i][j] - mean[j];
                d_mean.row_mut(i)[j] = coef * diff * inv_var[j];
                d_log_std[j] += coef * (diff * diff * inv_var[j] - 1.0);
            }
        }
    }
    let mut grad = vec![0.0; policy.param_len()];
    let np = policy.params.len();
    policy.spec.backward(&policy.params, &cache, &d_mean, &mut grad[..np])?;
    grad[np..].copy_from_slice(&d_log_std);
    Ok((loss, grad, kl, clipped as f64 / n as f64))
}

/// Clipped PPO over the buffer: normalized GAE advantages, value regression
/// on returns, minibatch Adam steps, KL early stop.
pub fn ppo_update<R: Rng + ?Sized>(agent: &mut Agent, buffer: &RolloutBuffer, cfg: &PpoConfig, rng: &mut R) -> Result<PpoStats> {
    let mut advs = Vec::with_capacity(buffer.len());
    let mut rets = Vec::with_capacity(buffer.len());
    for (env, &last) in buffer.envs.iter().zip(&buffer.last_values) {
        let rewards: Vec<f64> = env.iter().map(|r| r.reward).collect();
        let mut values: Vec<f64> = env.iter().map(|r| r.value).collect();
        values.push(last);
        let dones: Vec<bool> = env.iter().map(|r| r.done).collect();
        let (a, r) = gae(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda)?;
        advs.extend(a);
        rets.extend(r);
    }
    let n = advs.len();
    if n == 0 {
        return Err(Error::contract("empty rollout buffer"));
    }
    let mean = advs.iter().sum::<f64>() / n as f64;
    let std = (advs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64).sqrt();
    let norm_adv: Vec<f64> = advs.iter().map(|a| (a - mean) / (std + 1e-8)).collect();

    let records: Vec<_> = buffer.records().collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    let (mut pl_sum, mut vl_sum, mut clip_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
    let mut policy_flat = agent.policy.flat();
    for epoch in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        let mut epoch_kl = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(cfg.minibatch) {
            let inputs = Matrix::from_rows(&chunk.iter().map(|&i| records[i].input.as_slice()).collect::<Vec<_>>());
            let actions: Vec<Vec<f64>> = chunk.iter().map(|&i| records[i].action.clone()).collect();
            let old: Vec<f64> = chunk.iter().map(|&i| records[i].log_prob).collect();
            let adv: Vec<f64> = chunk.iter().map(|&i| norm_adv[i]).collect();
            let (pl, mut g, kl, cf) = surrogate_grad(&agent.policy, &inputs, &actions, &old, &adv, cfg.clip_ratio)?;
            clip_grad_norm(&mut g, cfg.max_grad_norm);
            agent.opt_policy.step(&mut policy_flat, &g)?;
            agent.policy.set_flat(&policy_flat);
            policy_flat = agent.policy.flat();

            let targets: Vec<f64> = chunk.iter().map(|&i| rets[i]).collect();
            let scale = agent.value.scale;
            let m = chunk.len() as f64;
            let (vl, mut vg) = agent.value.spec.grad_params(&agent.value.params, &inputs, |out| {
                let mut d = Matrix::zeros(out.rows, 1);
                let mut l = 0.0;
                for k in 0..out.rows {
                    let e = out.data[k] * scale - targets[k];
                    l += e * e / m;
                    d.data[k] = 2.0 * e * scale / m;
                }
                (l, d)
            })?;
            clip_grad_norm(&mut vg, cfg.max_grad_norm);
            agent.opt_value.step(&mut agent.value.params, &vg)?;

            if !(pl.is_finite() && vl.is_finite()) {
                return Err(Error::Numeric(format!("PPO loss non-finite: policy {pl}, value {vl}")));
            }
            pl_sum += pl;
            vl_sum += vl;
            clip_sum += cf;
            batches += 1;
            epoch_kl += kl;
            epoch_batches += 1;
        }
        stats.epochs_run = epoch + 1;
        stats.kl = epoch_kl / epoch_batches as f64;
        if stats.kl > cfg.kl_stop {
            stats.early_stopped = true;
            break;
        }
    }
    stats.policy_loss = pl_sum / batches as f64;
    stats.value_loss = vl_sum / batches as f64;
    stats.clip_fraction = clip_sum / batches as f64;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct double-sum form of the advantage.
    fn oracle(r: &[f64], v: &[f64], d: &[bool], g: f64, l: f64) -> Vec<f64> {
        let t_len = r.len();
        let delta: Vec<f64> = (0..t_len)
            .map(|t| r[t] + g * v[t + 1] * if d[t] { 0.0 } else { 1.0 } - v[t])
            .collect();
        (0..t_len)
            .map(|t| {
                let mut acc = 0.0;
                for k in t..t_len {
                    let mut w = 1.0;
                    for m in t..k {
                        w *= g * l * if d[m] { 0.0 } else { 1.0 };
                    }
                    acc += w * delta[k];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn gae_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let t_len = rng.gen_range(1..60);
            let r: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..=t_len).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let d: Vec<bool> = (0..t_len).map(|_| rng.gen_bool(0.1)).collect();
            let (g, l) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
            let (adv, ret) = gae(&r, &v, &d, g, l).unwrap();
            for (t, (a, o)) in adv.iter().zip(oracle(&r, &v, &d, g, l)).enumerate() {
                assert!((a - o).abs() < 1e-10);
                assert!((ret[t] - (a + v[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gae_reductions() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2, 0.7];
        let d = [false; 3];
        let (a, _) = gae(&r, &v, &d, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert!((a[t] - (r[t] + 0.9 * v[t + 1] - v[t])).abs() < 1e-15);
        }
        let (a, _) = gae(&r, &[0.0; 4], &d, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![2.5, 1.5, 2.0]);
        assert!(gae(&r, &v[..3], &d, 0.9, 0.9).is_err());
    }

    fn tiny_policy(rng: &mut ChaCha8Rng) -> PolicyNet {
        use crate::numerics::{Activation, MlpSpec};
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh).unwrap();
        PolicyNet {
            params: spec.init_params(rng),
            spec,
            log_std: vec![-0.5, 0.2],
        }
    }

    #[test]
    fn clipped_branch_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = tiny_policy(&mut rng);
        let x = Matrix::from_rows(&[[0.1, -0.3, 0.5]]);
        let mean = p.mean(x.row(0)).unwrap();
        let action = vec![mean[0] + 0.2, mean[1] - 0.1];
        let lp = p.log_prob(&mean, &action);
        let old = lp - 10f64.ln();
        let (loss, g, _, cf) = surrogate_grad(&p, &x, &[action.clone()], &[old], &[1.0], 0.2).unwrap();
        assert!((loss + 1.2).abs() < 1e-12);
        assert!(g.iter().all(|v| *v == 0.0));
        assert_eq!(cf, 1.0);
        // Same record with a negative advantage stays on the unclipped branch.
        let (_, g, _, _) = surrogate_grad(&p, &x, &[action], &[old], &[-1.0], 0.2).unwrap();
        assert!(g.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = tiny_policy(&mut rng);
        let x = Matrix::from_rows(&[[0.1, -0.3, 0.5], [0.7, 0.2, -0.4], [-0.2, 0.9, 0.0]]);
        let actions: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let old: Vec<f64> = (0..3).map(|i| p.log_prob(&p.mean(x.row(i)).unwrap(), &actions[i]) + 0.05).collect();
        let adv = [0.7, -1.1, 0.4];
        let (_, g, _, _) = surrogate_grad(&p, &x, &actions, &old, &adv, 0.2).unwrap();
        let flat = p.flat();
        for i in 0..flat.len() {
            let h = 1e-6;
            let mut q = p.clone();
            let mut f = flat.clone();
            f[i] += h;
            q.set_flat(&f);
            let up = surrogate_grad(&q, &x, &actions, &old, &adv, 0.2).unwrap().0;
            f[i] -= 2.0 * h;
            q.set_flat(&f);
            let dn = surrogate_grad(&q, &x, &actions, &old, &adv, 0.2).unwrap().0;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
    }
}

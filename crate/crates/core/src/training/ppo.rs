use rand::seq::SliceRandom;
use rand::Rng;

use crate::agent::{
    compose_graph, entropy_graph, log_prob_graph, penalty_from_logit, BiHemisphericAgent, SoloAgent,
    GATING_INPUT_DIM,
};
use crate::autodiff::{clip_global_norm, AdamState, Graph, Tensor, Var};
use crate::error::{Error, Result};

use super::config::PpoConfig;
use super::gae::compute_gae;
use super::rollout::Rollout;

/// Loss diagnostics averaged over all minibatches of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean hemispheric penalty (bi-hemispheric agents only).
    pub penalty: f64,
    /// Value loss of the left hemisphere on its solo evaluation episodes.
    pub left_value_loss: f64,
    pub total_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    /// `max |rho - 1|` on the first minibatch, before any parameter moved.
    pub initial_ratio_error: f64,
    pub minibatches: usize,
}

impl UpdateStats {
    fn accumulate(&mut self, mb: &MinibatchStats) {
        self.policy_loss += mb.policy_loss;
        self.value_loss += mb.value_loss;
        self.entropy += mb.entropy;
        self.penalty += mb.penalty;
        self.left_value_loss += mb.left_value_loss;
        self.total_loss += mb.total_loss;
        self.approx_kl += mb.approx_kl;
        self.clip_fraction += mb.clip_fraction;
        self.grad_norm += mb.grad_norm;
        self.minibatches += 1;
    }

    fn finish(mut self) -> Self {
        let n = self.minibatches.max(1) as f64;
        for v in [
            &mut self.policy_loss,
            &mut self.value_loss,
            &mut self.entropy,
            &mut self.penalty,
            &mut self.left_value_loss,
            &mut self.total_loss,
            &mut self.approx_kl,
            &mut self.clip_fraction,
            &mut self.grad_norm,
        ] {
            *v /= n;
        }
        self
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct MinibatchStats {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    penalty: f64,
    left_value_loss: f64,
    total_loss: f64,
    approx_kl: f64,
    clip_fraction: f64,
    grad_norm: f64,
}

/// `min(rho A, clip(rho, 1 - eps, 1 + eps) A)` for one transition.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Advantages and return targets per rollout row. Each sequence is one
/// GAE episode: it bootstraps with 0 after its last step and nowhere else,
/// so RL² advantages flow across the episodes of a trial.
pub fn sequence_advantages(
    rollout: &Rollout,
    values: &[f64],
    cfg: &PpoConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = rollout.rows();
    if values.len() != rows || rollout.rewards.len() != rows {
        return Err(Error::usage("rollout fields do not match its row count"));
    }
    let mut adv = vec![0.0; rows];
    let mut ret = vec![0.0; rows];
    let mut dones = vec![false; rollout.steps];
    if let Some(last) = dones.last_mut() {
        *last = true;
    }
    for b in 0..rollout.batch {
        let r = rollout.column(&rollout.rewards, b);
        let v = rollout.column(values, b);
        let (a, rt) = compute_gae(&r, &v, &dones, cfg.gamma, cfg.lambda)?;
        for t in 0..rollout.steps {
            let i = rollout.row(t, b);
            adv[i] = a[t];
            ret[i] = rt[t];
        }
    }
    Ok((adv, ret))
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

/// Row indices of sequences `cols`, time-major: `t * cols.len() + j`.
fn gather_rows(rollout: &Rollout, cols: &[usize]) -> Vec<usize> {
    let mut rows = Vec::with_capacity(rollout.steps * cols.len());
    for t in 0..rollout.steps {
        for &b in cols {
            rows.push(rollout.row(t, b));
        }
    }
    rows
}

fn gather(field: &[f64], width: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        out.extend_from_slice(&field[r * width..(r + 1) * width]);
    }
    out
}

fn column(g: &mut Graph, data: Vec<f64>) -> Result<Var> {
    let n = data.len();
    Ok(g.constant(Tensor::matrix(n, 1, data)?))
}

fn matrix(g: &mut Graph, data: Vec<f64>, cols: usize) -> Result<Var> {
    let n = data.len() / cols;
    Ok(g.constant(Tensor::matrix(n, cols, data)?))
}

/// Clipped-surrogate, value and entropy terms for one minibatch.
struct PpoTerms {
    policy: Var,
    value: Var,
    entropy: Var,
    approx_kl: f64,
    clip_fraction: f64,
    max_ratio_error: f64,
}

#[allow(clippy::too_many_arguments)]
fn ppo_terms(
    g: &mut Graph,
    mean: Var,
    value: Var,
    log_std: Var,
    actions: Vec<f64>,
    old_log_probs: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
    clip: f64,
) -> Result<PpoTerms> {
    let action_dim = g.value(mean).cols();
    let actions = matrix(g, actions, action_dim)?;
    let old = column(g, old_log_probs.clone())?;
    let adv = column(g, advantages)?;
    let ret = column(g, returns)?;

    let logp = log_prob_graph(g, actions, mean, log_std)?;
    let diff = g.sub(logp, old)?;
    let ratio = g.exp(diff);
    let surr1 = g.mul(ratio, adv)?;
    let clipped = g.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let surr2 = g.mul(clipped, adv)?;
    let obj = g.minimum(surr1, surr2)?;
    let obj = g.mean(obj);
    let policy = g.scale(obj, -1.0);

    let err = g.sub(value, ret)?;
    let sq = g.square(err);
    let value_loss = g.mean(sq);
    let entropy = entropy_graph(g, log_std);

    let rho = g.value(ratio).data();
    let new_lp = g.value(logp).data();
    let n = rho.len().max(1) as f64;
    let approx_kl = old_log_probs.iter().zip(new_lp).map(|(o, l)| o - l).sum::<f64>() / n;
    let clip_fraction = rho.iter().filter(|r| (*r - 1.0).abs() > clip).count() as f64 / n;
    let max_ratio_error = rho.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    Ok(PpoTerms {
        policy,
        value: value_loss,
        entropy,
        approx_kl,
        clip_fraction,
        max_ratio_error,
    })
}

/// `policy + c_v * value - c_e * entropy`.
fn ppo_total(g: &mut Graph, t: &PpoTerms, cfg: &PpoConfig) -> Result<Var> {
    let v = g.scale(t.value, cfg.value_coef);
    let e = g.scale(t.entropy, -cfg.entropy_coef);
    let sum = g.add(t.policy, v)?;
    g.add(sum, e)
}

fn finite_loss(g: &Graph, loss: Var) -> Result<f64> {
    let v = g.value(loss).item();
    if !v.is_finite() {
        return Err(Error::numeric(format!("ppo loss is {v}")));
    }
    Ok(v)
}

/// Backward pass, global-norm clipping and one Adam step.
fn apply_gradients(
    g: &Graph,
    loss: Var,
    vars: &[Var],
    params: &mut [&mut Tensor],
    adam: &mut AdamState,
    cfg: &PpoConfig,
) -> Result<f64> {
    let grads = g.backward(loss)?;
    let mut grads: Vec<Tensor> = vars.iter().map(|v| grads.get(*v)).collect();
    if let Some(i) = grads.iter().position(|t| !t.is_finite()) {
        return Err(Error::numeric(format!("non-finite gradient in parameter {i}")));
    }
    let norm = clip_global_norm(&mut grads, cfg.max_grad_norm);
    adam.update(params, &grads)?;
    Ok(norm)
}

struct Prepared {
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

fn prepare(rollout: &Rollout, cfg: &PpoConfig) -> Result<Prepared> {
    if rollout.rows() == 0 {
        return Err(Error::usage("ppo update on an empty rollout"));
    }
    let (mut advantages, returns) = sequence_advantages(rollout, &rollout.values, cfg)?;
    if cfg.normalize_advantages {
        standardize(&mut advantages);
    }
    Ok(Prepared { advantages, returns })
}

fn minibatch_columns<R: Rng + ?Sized>(batch: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..batch).collect();
    order.shuffle(rng);
    order.chunks(size).map(|c| c.to_vec()).collect()
}

/// PPO update of a single-network agent over `cfg.epochs` passes of
/// shuffled sequence minibatches. On a numeric failure the agent and
/// optimizer are left exactly as they were before the call.
pub fn ppo_update_solo<R: Rng + ?Sized>(
    agent: &mut SoloAgent,
    adam: &mut AdamState,
    rollout: &Rollout,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    cfg.validate()?;
    let prep = prepare(rollout, cfg)?;
    let (saved_agent, saved_adam) = (agent.clone(), adam.clone());
    let res = solo_epochs(agent, adam, rollout, &prep, cfg, rng);
    if res.is_err() {
        *agent = saved_agent;
        *adam = saved_adam;
    }
    res
}

fn solo_epochs<R: Rng + ?Sized>(
    agent: &mut SoloAgent,
    adam: &mut AdamState,
    rollout: &Rollout,
    prep: &Prepared,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let mut stats = UpdateStats::default();
    for epoch in 0..cfg.epochs {
        for (k, cols) in minibatch_columns(rollout.batch, cfg.minibatch_size, rng).iter().enumerate() {
            let rows = gather_rows(rollout, cols);
            let m = cols.len();
            let mut g = Graph::new();
            let vars = agent.net.bind(&mut g);
            let log_std = g.param(&agent.log_std);
            let x = matrix(&mut g, gather(&rollout.inputs, rollout.input_dim, &rows), rollout.input_dim)?;
            let h0 = g.constant(Tensor::zeros(&[m, agent.net.hidden_dim()]));
            let out = vars.forward_sequence(&mut g, x, h0, rollout.steps, m)?;
            let terms = ppo_terms(
                &mut g,
                out.mean,
                out.value,
                log_std,
                gather(&rollout.actions, rollout.action_dim, &rows),
                gather(&rollout.log_probs, 1, &rows),
                gather(&prep.advantages, 1, &rows),
                gather(&prep.returns, 1, &rows),
                cfg.clip,
            )?;
            let loss = ppo_total(&mut g, &terms, cfg)?;
            let total = finite_loss(&g, loss)?;
            let mut var_list = vars.vars();
            var_list.push(log_std);
            let mut params = agent.net.tensors_mut();
            params.push(&mut agent.log_std);
            let grad_norm = apply_gradients(&g, loss, &var_list, &mut params, adam, cfg)?;
            if epoch == 0 && k == 0 {
                stats.initial_ratio_error = terms.max_ratio_error;
            }
            stats.accumulate(&MinibatchStats {
                policy_loss: g.value(terms.policy).item(),
                value_loss: g.value(terms.value).item(),
                entropy: g.value(terms.entropy).item(),
                total_loss: total,
                approx_kl: terms.approx_kl,
                clip_fraction: terms.clip_fraction,
                grad_norm,
                ..MinibatchStats::default()
            });
        }
    }
    Ok(stats.finish())
}

/// PPO update of the bi-hemispheric agent: the left hemisphere, gating
/// network and log-std are trained on `L^PPO + mean penalty`; the right
/// hemisphere enters only through its cached outputs in the rollout.
///
/// `left_eval` holds left-alone episodes; their returns train `V^left`
/// through an extra value-loss term. Returns an invariant violation if the
/// right hemisphere changed.
pub fn ppo_update_bihem<R: Rng + ?Sized>(
    agent: &mut BiHemisphericAgent,
    adam: &mut AdamState,
    rollout: &Rollout,
    left_eval: Option<&Rollout>,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    cfg.validate()?;
    if rollout.mu_right.len() != rollout.rows() * rollout.action_dim
        || rollout.gate_inputs.len() != rollout.rows() * GATING_INPUT_DIM
    {
        return Err(Error::usage("bi-hemispheric update needs a bi-hemispheric rollout"));
    }
    let prep = prepare(rollout, cfg)?;
    let eval = match left_eval {
        Some(r) if r.rows() > 0 => {
            let (_, returns) = sequence_advantages(r, &r.v_left, cfg)?;
            Some((r, returns))
        }
        _ => None,
    };
    let before = agent.right_hash();
    let (saved_agent, saved_adam) = (agent.clone(), adam.clone());
    let res = bihem_epochs(agent, adam, rollout, &prep, eval.as_ref(), cfg, rng);
    if res.is_err() {
        *agent = saved_agent;
        *adam = saved_adam;
        return res;
    }
    if agent.right_hash() != before {
        return Err(Error::Invariant("right-hemisphere parameters changed during an update".into()));
    }
    res
}

fn bihem_epochs<R: Rng + ?Sized>(
    agent: &mut BiHemisphericAgent,
    adam: &mut AdamState,
    rollout: &Rollout,
    prep: &Prepared,
    eval: Option<&(&Rollout, Vec<f64>)>,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let mut stats = UpdateStats::default();
    let a = rollout.action_dim;
    let n_minibatches = rollout.batch.div_ceil(cfg.minibatch_size);
    for epoch in 0..cfg.epochs {
        for (k, cols) in minibatch_columns(rollout.batch, cfg.minibatch_size, rng).iter().enumerate() {
            let rows = gather_rows(rollout, cols);
            let m = cols.len();
            let mut g = Graph::new();
            let left = agent.left.bind(&mut g);
            let gating = agent.gating.bind(&mut g);
            let log_std = g.param(&agent.log_std);

            let x = matrix(&mut g, gather(&rollout.inputs, rollout.input_dim, &rows), rollout.input_dim)?;
            let h0 = g.constant(Tensor::zeros(&[m, agent.left.hidden_dim()]));
            let lout = left.forward_sequence(&mut g, x, h0, rollout.steps, m)?;

            let gi = matrix(&mut g, gather(&rollout.gate_inputs, GATING_INPUT_DIM, &rows), GATING_INPUT_DIM)?;
            let hg = g.constant(Tensor::zeros(&[m, agent.gating.hidden_dim()]));
            let logits = gating.logits_sequence(&mut g, gi, hg, rollout.steps, m)?;
            let p_left = g.sigmoid(logits);
            let p_right = g.one_minus(p_left);

            let mu_right = matrix(&mut g, gather(&rollout.mu_right, a, &rows), a)?;
            let v_right = column(&mut g, gather(&rollout.v_right, 1, &rows))?;
            let mean = compose_graph(&mut g, p_right, mu_right, lout.mean)?;
            let p_value = if cfg.detach_gates_in_value {
                let v = g.value(p_right).clone();
                g.constant(v)
            } else {
                p_right
            };
            let value = compose_graph(&mut g, p_value, v_right, lout.value)?;

            let terms = ppo_terms(
                &mut g,
                mean,
                value,
                log_std,
                gather(&rollout.actions, a, &rows),
                gather(&rollout.log_probs, 1, &rows),
                gather(&prep.advantages, 1, &rows),
                gather(&prep.returns, 1, &rows),
                cfg.clip,
            )?;
            let mut loss = ppo_total(&mut g, &terms, cfg)?;
            let pen = penalty_from_logit(&mut g, logits, &agent.penalty);
            let pen = g.mean(pen);
            loss = g.add(loss, pen)?;

            let mut left_value_loss = 0.0;
            if let Some((er, eret)) = eval {
                let ecols: Vec<usize> = (0..er.batch).filter(|e| e % n_minibatches == k).collect();
                if !ecols.is_empty() {
                    let erows = gather_rows(er, &ecols);
                    let ex = matrix(&mut g, gather(&er.inputs, er.input_dim, &erows), er.input_dim)?;
                    let eh = g.constant(Tensor::zeros(&[ecols.len(), agent.left.hidden_dim()]));
                    let eout = left.forward_sequence(&mut g, ex, eh, er.steps, ecols.len())?;
                    let target = column(&mut g, gather(eret, 1, &erows))?;
                    let err = g.sub(eout.value, target)?;
                    let sq = g.square(err);
                    let lv = g.mean(sq);
                    left_value_loss = g.value(lv).item();
                    let lv = g.scale(lv, cfg.value_coef);
                    loss = g.add(loss, lv)?;
                }
            }
            let total = finite_loss(&g, loss)?;

            let mut var_list = left.vars();
            var_list.extend(gating.vars());
            var_list.push(log_std);
            let mut params = agent.left.tensors_mut();
            params.extend(agent.gating.tensors_mut());
            params.push(&mut agent.log_std);
            let grad_norm = apply_gradients(&g, loss, &var_list, &mut params, adam, cfg)?;
            if epoch == 0 && k == 0 {
                stats.initial_ratio_error = terms.max_ratio_error;
            }
            stats.accumulate(&MinibatchStats {
                policy_loss: g.value(terms.policy).item(),
                value_loss: g.value(terms.value).item(),
                entropy: g.value(terms.entropy).item(),
                penalty: g.value(pen).item(),
                left_value_loss,
                total_loss: total,
                approx_kl: terms.approx_kl,
                clip_fraction: terms.clip_fraction,
                grad_norm,
            });
        }
    }
    Ok(stats.finish())
}

/// Builds the bi-hemispheric loss for every row of `rollout` without
/// updating anything. Returns `(graph, total loss, PPO-only loss)`; the
/// graph also holds the right hemisphere as parameters so callers can
/// confirm it receives no gradient.
pub fn bihem_loss_graph(
    agent: &BiHemisphericAgent,
    rollout: &Rollout,
    cfg: &PpoConfig,
) -> Result<(Graph, Var, Var, Vec<Var>)> {
    let prep = prepare(rollout, cfg)?;
    let rows: Vec<usize> = (0..rollout.rows()).collect();
    let a = rollout.action_dim;
    let mut g = Graph::new();
    let right_vars = agent.right.bind(&mut g).vars();
    let left = agent.left.bind(&mut g);
    let gating = agent.gating.bind(&mut g);
    let log_std = g.param(&agent.log_std);
    let x = matrix(&mut g, rollout.inputs.clone(), rollout.input_dim)?;
    let h0 = g.constant(Tensor::zeros(&[rollout.batch, agent.left.hidden_dim()]));
    let lout = left.forward_sequence(&mut g, x, h0, rollout.steps, rollout.batch)?;
    let gi = matrix(&mut g, rollout.gate_inputs.clone(), GATING_INPUT_DIM)?;
    let hg = g.constant(Tensor::zeros(&[rollout.batch, agent.gating.hidden_dim()]));
    let logits = gating.logits_sequence(&mut g, gi, hg, rollout.steps, rollout.batch)?;
    let p_left = g.sigmoid(logits);
    let p_right = g.one_minus(p_left);
    let mu_right = matrix(&mut g, rollout.mu_right.clone(), a)?;
    let v_right = column(&mut g, rollout.v_right.clone())?;
    let mean = compose_graph(&mut g, p_right, mu_right, lout.mean)?;
    let value = compose_graph(&mut g, p_right, v_right, lout.value)?;
    let terms = ppo_terms(
        &mut g,
        mean,
        value,
        log_std,
        rollout.actions.clone(),
        rollout.log_probs.clone(),
        gather(&prep.advantages, 1, &rows),
        gather(&prep.returns, 1, &rows),
        cfg.clip,
    )?;
    let ppo = ppo_total(&mut g, &terms, cfg)?;
    let pen = penalty_from_logit(&mut g, logits, &agent.penalty);
    let pen = g.mean(pen);
    let total = g.add(ppo, pen)?;
    Ok((g, total, ppo, right_vars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{HemisphereSizes, InputMode, PenaltyConfig};
    use crate::envs::{generate_subtask, ObservationLayout, PointWorld, TaskName};
    use crate::training::normalizer::RewardNormalizer;
    use crate::training::rollout::{collect_bihem, collect_solo, Normalization};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn worlds(n: usize, len: usize) -> Vec<PointWorld> {
        (0..n)
            .map(|i| {
                PointWorld::new(generate_subtask(TaskName::Reach, 40 + i as u64), ObservationLayout::default(), len)
                    .unwrap()
            })
            .collect()
    }

    fn small_cfg() -> PpoConfig {
        PpoConfig {
            batch_size: 4,
            minibatch_size: 2,
            epochs: 2,
            learning_rate: 1e-3,
            ..PpoConfig::main_for(TaskName::Reach)
        }
    }

    fn bihem(rng: &mut ChaCha8Rng) -> BiHemisphericAgent {
        let right = SoloAgent::new(HemisphereSizes::hemisphere(12, 3), InputMode::Rl2, rng);
        BiHemisphericAgent::new(&right, 7, PenaltyConfig::default(), rng).unwrap()
    }

    #[test]
    fn clipped_objective_by_hand() {
        assert_eq!(clipped_objective(1.5, 2.0, 0.2), 1.2 * 2.0);
        assert_eq!(clipped_objective(1.5, -2.0, 0.2), 1.5 * -2.0);
        assert_eq!(clipped_objective(0.5, 2.0, 0.2), 0.5 * 2.0);
        assert_eq!(clipped_objective(0.5, -2.0, 0.2), 0.8 * -2.0);
        assert_eq!(clipped_objective(1.0, 3.0, 0.2), 3.0);
    }

    #[test]
    fn single_transition_surrogate_matches_hand_value() {
        // log pi(a) - log pi_old(a) = ln 1.5 -> rho = 1.5, A = 2, clip 0.2.
        let mut g = Graph::new();
        let mean = g.param(&Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let value = g.param(&Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let log_std = g.param(&Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let lp = crate::agent::log_prob(&[0.3], &[0.0], &[0.0]);
        let terms = ppo_terms(&mut g, mean, value, log_std, vec![0.3], vec![lp - 1.5f64.ln()], vec![2.0], vec![3.0], 0.2)
            .unwrap();
        assert!((g.value(terms.policy).item() + 1.2 * 2.0).abs() < 1e-12);
        assert!((g.value(terms.value).item() - 4.0).abs() < 1e-12);
        assert!((terms.max_ratio_error - 0.5).abs() < 1e-12);
    }

    #[test]
    fn first_minibatch_ratios_are_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut agent = SoloAgent::new(HemisphereSizes::hemisphere(7, 3), InputMode::Plain, &mut rng);
        let mut w = worlds(4, 20);
        let mut n = RewardNormalizer::new(true);
        let r = collect_solo(&agent, &mut w, 1, Normalization::Update(&mut n), &mut rng).unwrap();
        let mut adam = AdamState::new(1e-3);
        let stats = ppo_update_solo(&mut agent, &mut adam, &r, &small_cfg(), &mut rng).unwrap();
        assert!(stats.initial_ratio_error < 1e-9, "{}", stats.initial_ratio_error);
        assert_eq!(stats.minibatches, 4);
        assert_eq!(adam.step_count(), 4);
    }

    #[test]
    fn bihem_update_keeps_right_and_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut agent = bihem(&mut rng);
        let right_before = agent.right.clone();
        let mut w = worlds(4, 20);
        let mut n = RewardNormalizer::new(true);
        let r = collect_bihem(&agent, &mut w, false, Normalization::Update(&mut n), &mut rng).unwrap();
        let mut ew = worlds(2, 20);
        let e = collect_bihem(&agent, &mut ew, true, Normalization::Frozen(&n), &mut rng).unwrap();
        let mut adam = AdamState::new(1e-3);
        let left_before = agent.left.clone();
        let stats = ppo_update_bihem(&mut agent, &mut adam, &r, Some(&e), &small_cfg(), &mut rng).unwrap();
        assert!(stats.initial_ratio_error < 1e-9);
        assert!(stats.penalty > 0.0 && stats.left_value_loss > 0.0);
        assert_eq!(agent.right, right_before);
        assert_ne!(agent.left, left_before);
    }

    #[test]
    fn right_gradient_is_exactly_zero_and_beta_zero_is_plain_ppo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut agent = bihem(&mut rng);
        let mut w = worlds(2, 10);
        let mut n = RewardNormalizer::new(true);
        let r = collect_bihem(&agent, &mut w, false, Normalization::Update(&mut n), &mut rng).unwrap();
        let cfg = small_cfg();
        let (g, total, _, right_vars) = bihem_loss_graph(&agent, &r, &cfg).unwrap();
        let grads = g.backward(total).unwrap();
        for v in right_vars {
            assert!(!grads.is_reached(v));
            assert!(grads.get(v).data().iter().all(|x| *x == 0.0));
        }
        agent.penalty.beta = 0.0;
        let (g, total, ppo, _) = bihem_loss_graph(&agent, &r, &cfg).unwrap();
        assert_eq!(g.value(total).item(), g.value(ppo).item());
    }

    #[test]
    fn nan_rollout_aborts_without_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut agent = SoloAgent::new(HemisphereSizes::hemisphere(7, 3), InputMode::Plain, &mut rng);
        let mut w = worlds(4, 10);
        let mut n = RewardNormalizer::new(true);
        let mut r = collect_solo(&agent, &mut w, 1, Normalization::Update(&mut n), &mut rng).unwrap();
        r.rewards[5] = f64::NAN;
        let before = agent.clone();
        let mut adam = AdamState::new(1e-3);
        let err = ppo_update_solo(&mut agent, &mut adam, &r, &small_cfg(), &mut rng);
        assert!(matches!(err, Err(Error::Numeric(_))), "{err:?}");
        assert_eq!(agent, before);
        assert_eq!(adam.step_count(), 0);
    }
}

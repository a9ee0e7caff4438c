//! Linear-softmax sequence policies with exact per-step distributions,
//! entropies, score vectors and Jacobians, plus seeded sampling and
//! full-enumeration oracles.
//!
//! Logits are `z_t[v] = Σ_k θ[k·V + v] φ_k(x, y_<t, t)`, so the Jacobian
//! `∂z_t/∂θ` has one nonzero block per vocabulary row and
//! `∇_θ log π(y_t) = J_tᵀ s_t` with `s_t = e_{y_t} − p_t`.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Environment;

/// Largest number of (context, sequence) leaves the enumeration oracles visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("non-finite logits at step {step}")]
    NonFiniteLogits { step: usize },
    #[error("state space of {size} trajectories exceeds the enumeration limit {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("invalid policy shape: {0}")]
    Shape(String),
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax of entry `y`, exact in the tails.
pub fn log_softmax_at(z: &[f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    z[y] - lse
}

/// Shannon entropy in nats with `0·log 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&pv| pv > 0.0)
        .map(|&pv| -pv * pv.max(PROB_FLOOR).ln())
        .sum();
    h.max(0.0)
}

/// Rényi-2 (collision) entropy `−ln Σ p²`; never exceeds the Shannon entropy.
pub fn renyi2_entropy(p: &[f64]) -> f64 {
    let c: f64 = p.iter().map(|x| x * x).sum();
    (-c.max(PROB_FLOOR).ln()).max(0.0)
}

/// `one_hot(y) − p`.
pub fn score_vector(p: &[f64], y: usize) -> Vec<f64> {
    let mut s: Vec<f64> = p.iter().map(|&x| -x).collect();
    s[y] += 1.0;
    s
}

/// `KL(p ‖ q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv.max(PROB_FLOOR).ln() - qv.max(PROB_FLOOR).ln()))
        .sum()
}

/// Deterministic feature maps `(context, history, position) → R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// One-hot over (context, position, previous token or start marker),
    /// scaled per position by `scales[t]` (1 when absent).
    Tabular {
        contexts: usize,
        horizon: usize,
        vocab: usize,
        #[serde(default)]
        scales: Vec<f64>,
    },
    /// One-hot over (context, position) only: an independent categorical per
    /// position.
    Positional { contexts: usize, horizon: usize },
    /// Dense pseudo-random features in [-1, 1] hashed from the full history.
    Hashed { dim: usize, seed: u64 },
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate/worker `index` derived from `base`. Streams depend only
/// on the index, never on how work is split across threads.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x5EED)))
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Tabular {
                contexts,
                horizon,
                vocab,
                ..
            } => contexts * horizon * (vocab + 1),
            FeatureMap::Positional { contexts, horizon } => contexts * horizon,
            FeatureMap::Hashed { dim, .. } => *dim,
        }
    }

    /// Writes the feature vector into `out` (length `dim()`).
    pub fn write(&self, context: usize, history: &[usize], t: usize, out: &mut [f64]) {
        out.fill(0.0);
        match self {
            FeatureMap::Tabular {
                horizon,
                vocab,
                scales,
                ..
            } => {
                let prev = history.last().map_or(0, |&y| y + 1);
                let idx = (context * horizon + t) * (vocab + 1) + prev;
                out[idx] = scales.get(t).copied().unwrap_or(1.0);
            }
            FeatureMap::Positional { horizon, .. } => {
                out[context * horizon + t] = 1.0;
            }
            FeatureMap::Hashed { dim, seed } => {
                let mut h = splitmix64(*seed ^ (context as u64).wrapping_mul(0x1000_0000_01B3));
                h = splitmix64(h ^ t as u64);
                for &y in history {
                    h = splitmix64(h ^ (y as u64).wrapping_add(0xA5A5));
                }
                for (k, o) in out.iter_mut().enumerate().take(*dim) {
                    let r = splitmix64(h ^ (k as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
                    *o = (r >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
                }
            }
        }
    }

    pub fn features(&self, context: usize, history: &[usize], t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write(context, history, t, &mut out);
        out
    }
}

/// Exact quantities of one step's token distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub entropy: f64,
}

impl StepDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probs = softmax(&logits);
        let entropy = shannon_entropy(&probs);
        Self {
            logits,
            probs,
            entropy,
        }
    }
}

/// Dense `V × (d·V)` Jacobian of the logits with respect to flattened θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `Jᵀ v`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.cols + c] * vr;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub features: FeatureMap,
    pub vocab: usize,
    /// Row-major `d × V`: `theta[k * vocab + v]`.
    pub theta: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn zeros(features: FeatureMap, vocab: usize) -> Result<Self, PolicyError> {
        let d = features.dim();
        if vocab < 2 || d == 0 {
            return Err(PolicyError::Shape(format!(
                "need V >= 2 and d >= 1, got V={vocab}, d={d}"
            )));
        }
        Ok(Self {
            features,
            vocab,
            theta: vec![0.0; d * vocab],
        })
    }

    pub fn with_theta(
        features: FeatureMap,
        vocab: usize,
        theta: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        let mut p = Self::zeros(features, vocab)?;
        if theta.len() != p.theta.len() {
            return Err(PolicyError::Shape(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                p.theta.len()
            )));
        }
        p.theta = theta;
        Ok(p)
    }

    /// Parameters drawn i.i.d. uniform in `[-scale, scale]`.
    pub fn random(
        features: FeatureMap,
        vocab: usize,
        scale: f64,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let mut p = Self::zeros(features, vocab)?;
        let mut rng = Pcg64::seed_from_u64(seed);
        for x in &mut p.theta {
            *x = rng.random_range(-scale..=scale);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    fn logits_from(&self, phi: &[f64]) -> Vec<f64> {
        let v = self.vocab;
        let mut z = vec![0.0; v];
        for (k, &f) in phi.iter().enumerate() {
            if f != 0.0 {
                let row = &self.theta[k * v..(k + 1) * v];
                for (zv, &th) in z.iter_mut().zip(row) {
                    *zv += th * f;
                }
            }
        }
        z
    }

    pub fn logits(
        &self,
        context: usize,
        history: &[usize],
        t: usize,
    ) -> Result<Vec<f64>, PolicyError> {
        let phi = self.features.features(context, history, t);
        let z = self.logits_from(&phi);
        if z.iter().all(|x| x.is_finite()) {
            Ok(z)
        } else {
            Err(PolicyError::NonFiniteLogits { step: t })
        }
    }

    pub fn step_distribution(
        &self,
        context: usize,
        history: &[usize],
        t: usize,
    ) -> Result<StepDistribution, PolicyError> {
        Ok(StepDistribution::from_logits(
            self.logits(context, history, t)?,
        ))
    }

    pub fn log_prob(
        &self,
        context: usize,
        history: &[usize],
        t: usize,
        y: usize,
    ) -> Result<f64, PolicyError> {
        self.check_token(y)?;
        Ok(log_softmax_at(&self.logits(context, history, t)?, y))
    }

    fn check_token(&self, y: usize) -> Result<(), PolicyError> {
        if y >= self.vocab {
            return Err(PolicyError::TokenOutOfRange {
                token: y,
                vocab: self.vocab,
            });
        }
        Ok(())
    }

    /// Analytic `∂z_t/∂θ`. Entry `(v, k·V + v)` equals `φ_k`.
    pub fn step_jacobian(&self, context: usize, history: &[usize], t: usize) -> Jacobian {
        let phi = self.features.features(context, history, t);
        let v = self.vocab;
        let cols = self.n_params();
        let mut data = vec![0.0; v * cols];
        for (k, &f) in phi.iter().enumerate() {
            for r in 0..v {
                data[r * cols + k * v + r] = f;
            }
        }
        Jacobian {
            rows: v,
            cols,
            data,
        }
    }

    /// `‖J_t‖_F² = V · ‖φ‖²` without materializing the Jacobian.
    pub fn jacobian_frobenius_sq(&self, context: usize, history: &[usize], t: usize) -> f64 {
        let phi = self.features.features(context, history, t);
        self.vocab as f64 * phi.iter().map(|x| x * x).sum::<f64>()
    }

    /// Adds `scale · Jᵀ u` into `grad` for the step's features.
    pub fn accumulate_jt(
        &self,
        context: usize,
        history: &[usize],
        t: usize,
        u: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        let phi = self.features.features(context, history, t);
        let v = self.vocab;
        for (k, &f) in phi.iter().enumerate() {
            if f != 0.0 {
                let c = f * scale;
                for (g, &uv) in grad[k * v..(k + 1) * v].iter_mut().zip(u) {
                    *g += c * uv;
                }
            }
        }
    }

    /// `∇_θ log π(y | x, history) = J_tᵀ (e_y − p_t)`.
    pub fn log_prob_grad(
        &self,
        context: usize,
        history: &[usize],
        t: usize,
        y: usize,
    ) -> Result<Vec<f64>, PolicyError> {
        self.check_token(y)?;
        let dist = self.step_distribution(context, history, t)?;
        let s = score_vector(&dist.probs, y);
        let mut g = vec![0.0; self.n_params()];
        self.accumulate_jt(context, history, t, &s, 1.0, &mut g);
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub token: usize,
    pub logprob: f64,
    /// Log-probability under the rollout policy; `None` if never recorded.
    pub old_logprob: Option<f64>,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub context: usize,
    pub steps: Vec<StepRecord>,
    pub reward: f64,
}

impl Trajectory {
    pub fn tokens(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.token).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pv) in p.iter().enumerate() {
        acc += pv;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum: last token with mass
    p.iter().rposition(|&pv| pv > 0.0).unwrap_or(p.len() - 1)
}

/// Samples one trajectory for a fixed context. Steps record the sampling
/// policy's log-probabilities as both current and old.
pub fn sample_in_context<E, R>(
    policy: &SoftmaxPolicy,
    env: &E,
    context: usize,
    rng: &mut R,
) -> Result<Trajectory, PolicyError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut history = Vec::with_capacity(env.horizon());
    let mut steps = Vec::with_capacity(env.horizon());
    for t in 0..env.horizon() {
        let dist = policy.step_distribution(context, &history, t)?;
        let y = sample_categorical(&dist.probs, rng);
        let lp = log_softmax_at(&dist.logits, y);
        steps.push(StepRecord {
            logits: dist.logits,
            probs: dist.probs,
            token: y,
            logprob: lp,
            old_logprob: Some(lp),
            entropy: dist.entropy,
        });
        history.push(y);
        if env.is_terminal(y) {
            break;
        }
    }
    let reward = env.reward(context, &history);
    Ok(Trajectory {
        context,
        steps,
        reward,
    })
}

/// Samples a context from the environment's distribution, then a trajectory.
pub fn sample_trajectory<E, R>(
    policy: &SoftmaxPolicy,
    env: &E,
    rng: &mut R,
) -> Result<Trajectory, PolicyError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut context = env.n_contexts() - 1;
    for c in 0..env.n_contexts() {
        acc += env.context_prob(c);
        if u < acc {
            context = c;
            break;
        }
    }
    sample_in_context(policy, env, context, rng)
}

/// [`sample_trajectory`] with a fresh generator seeded from `seed`.
pub fn sample_trajectory_seeded<E>(
    policy: &SoftmaxPolicy,
    env: &E,
    seed: u64,
) -> Result<Trajectory, PolicyError>
where
    E: Environment + ?Sized,
{
    sample_trajectory(policy, env, &mut Pcg64::seed_from_u64(seed))
}

/// Recomputes current-policy quantities for a recorded trajectory, keeping
/// the recorded tokens and old log-probabilities.
pub fn rescore(policy: &SoftmaxPolicy, traj: &Trajectory) -> Result<Trajectory, PolicyError> {
    let tokens = traj.tokens();
    let mut steps = Vec::with_capacity(tokens.len());
    for (t, old) in traj.steps.iter().enumerate() {
        let dist = policy.step_distribution(traj.context, &tokens[..t], t)?;
        let lp = log_softmax_at(&dist.logits, old.token);
        steps.push(StepRecord {
            logits: dist.logits,
            probs: dist.probs,
            token: old.token,
            logprob: lp,
            old_logprob: old.old_logprob,
            entropy: dist.entropy,
        });
    }
    Ok(Trajectory {
        context: traj.context,
        steps,
        reward: traj.reward,
    })
}

/// A fully enumerated trajectory with its exact probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf<'a> {
    pub context: usize,
    pub tokens: &'a [usize],
    pub prob: f64,
    pub steps: &'a [StepDistribution],
}

pub fn state_space_size<E: Environment + ?Sized>(env: &E) -> u128 {
    let v = env.vocab() as u128;
    let mut size: u128 = 1;
    for _ in 0..env.horizon() {
        size = size.saturating_mul(v);
    }
    size.saturating_mul(env.n_contexts() as u128)
}

/// Visits every trajectory with nonzero context probability, depth first in
/// lexicographic token order.
pub fn enumerate_trajectories<E, F>(
    policy: &SoftmaxPolicy,
    env: &E,
    mut visit: F,
) -> Result<(), PolicyError>
where
    E: Environment + ?Sized,
    F: FnMut(Leaf<'_>),
{
    let size = state_space_size(env);
    if size > ENUMERATION_LIMIT {
        return Err(PolicyError::StateSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    for c in 0..env.n_contexts() {
        let pc = env.context_prob(c);
        if pc <= 0.0 {
            continue;
        }
        let mut tokens = Vec::new();
        let mut steps = Vec::new();
        walk(policy, env, c, pc, &mut tokens, &mut steps, &mut visit)?;
    }
    Ok(())
}

fn walk<E, F>(
    policy: &SoftmaxPolicy,
    env: &E,
    context: usize,
    prob: f64,
    tokens: &mut Vec<usize>,
    steps: &mut Vec<StepDistribution>,
    visit: &mut F,
) -> Result<(), PolicyError>
where
    E: Environment + ?Sized,
    F: FnMut(Leaf<'_>),
{
    let t = tokens.len();
    let done = t == env.horizon() || tokens.last().is_some_and(|&y| env.is_terminal(y));
    if done {
        visit(Leaf {
            context,
            tokens,
            prob,
            steps,
        });
        return Ok(());
    }
    let dist = policy.step_distribution(context, tokens, t)?;
    let probs = dist.probs.clone();
    steps.push(dist);
    for (y, &py) in probs.iter().enumerate() {
        tokens.push(y);
        walk(policy, env, context, prob * py, tokens, steps, visit)?;
        tokens.pop();
    }
    steps.pop();
    Ok(())
}

/// `J(θ) = E[R(τ)]` by full enumeration.
pub fn exact_return<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
) -> Result<f64, PolicyError> {
    let mut total = 0.0;
    enumerate_trajectories(policy, env, |leaf| {
        total += leaf.prob * env.reward(leaf.context, leaf.tokens);
    })?;
    Ok(total)
}

/// Mean and population standard deviation of the return under the policy.
pub fn exact_return_moments<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
) -> Result<(f64, f64), PolicyError> {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    enumerate_trajectories(policy, env, |leaf| {
        let r = env.reward(leaf.context, leaf.tokens);
        m1 += leaf.prob * r;
        m2 += leaf.prob * r * r;
    })?;
    Ok((m1, (m2 - m1 * m1).max(0.0).sqrt()))
}

/// `∇_θ J(θ) = E[R(τ) Σ_t J_tᵀ s_t]` by full enumeration.
pub fn exact_policy_gradient<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
) -> Result<Vec<f64>, PolicyError> {
    let mut grad = vec![0.0; policy.n_params()];
    enumerate_trajectories(policy, env, |leaf| {
        let w = leaf.prob * env.reward(leaf.context, leaf.tokens);
        if w == 0.0 {
            return;
        }
        for (t, dist) in leaf.steps.iter().enumerate() {
            let s = score_vector(&dist.probs, leaf.tokens[t]);
            policy.accumulate_jt(leaf.context, &leaf.tokens[..t], t, &s, w, &mut grad);
        }
    })?;
    Ok(grad)
}

/// Central finite-difference gradient of `f` at `theta`.
pub fn finite_difference<F>(theta: &[f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let fp = f(&x);
            x[i] = orig - step;
            let fm = f(&x);
            x[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FnEnv;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn uniform_logits() {
        let d = StepDistribution::from_logits(vec![0.0; 4]);
        assert!(d.probs.iter().all(|&p| close(p, 0.25, 1e-15)));
        assert!(close(d.entropy, 4f64.ln(), 1e-15));
    }

    #[test]
    fn near_deterministic_logits() {
        let d = StepDistribution::from_logits(vec![50.0, 0.0, 0.0]);
        assert!(d.entropy < 1e-8);
        let huge = StepDistribution::from_logits(vec![1000.0, 0.0]);
        assert!(huge.probs.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn two_way_logits() {
        let d = StepDistribution::from_logits(vec![1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!(close(d.probs[0], e / (1.0 + e), 1e-15));
        assert!(close(d.probs[0], 0.7311, 1e-4));
        // -p ln p - q ln q with p = e/(1+e)
        let p = e / (1.0 + e);
        let h = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        assert!(close(d.entropy, h, 1e-15));
        assert!(close(d.entropy, 0.5822, 1e-4));
    }

    #[test]
    fn score_vector_examples() {
        let s = score_vector(&[0.25; 4], 0);
        assert_eq!(s, vec![0.75, -0.25, -0.25, -0.25]);
        let p = [0.7, 0.2, 0.1];
        let expected_sq: f64 = (0..3)
            .map(|y| p[y] * score_vector(&p, y).iter().map(|x| x * x).sum::<f64>())
            .sum();
        assert!(close(expected_sq, 0.46, 1e-15));
        for y in 0..3 {
            assert!(score_vector(&p, y).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn renyi2_examples() {
        assert!(close(renyi2_entropy(&[0.25; 4]), 4f64.ln(), 1e-15));
        assert_eq!(renyi2_entropy(&[1.0, 0.0, 0.0]), 0.0);
        let p = [0.7, 0.2, 0.1];
        assert!(close(renyi2_entropy(&p), -(0.54f64).ln(), 1e-15));
        assert!(close(renyi2_entropy(&p), 0.6162, 1e-4));
        assert!(close(shannon_entropy(&p), 0.8018, 1e-4));
    }

    #[test]
    fn kl_two_way() {
        let p = softmax(&[1.0, 0.0]);
        let kl = kl_divergence(&p, &[0.5, 0.5]);
        let expected = p[0] * (2.0 * p[0]).ln() + p[1] * (2.0 * p[1]).ln();
        assert!(close(kl, expected, 1e-15));
        assert!(close(kl, 0.110944, 1e-6));
        assert_eq!(kl_divergence(&p, &p), 0.0);
    }

    #[test]
    fn linear_jacobian_is_selector() {
        // d = 1, V = 2, feature 1
        let f = FeatureMap::Positional {
            contexts: 1,
            horizon: 1,
        };
        let pol = SoftmaxPolicy::zeros(f, 2).unwrap();
        let j = pol.step_jacobian(0, &[], 0);
        assert_eq!((j.rows, j.cols), (2, 2));
        assert_eq!(j.data, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(j.frobenius_sq(), 2.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let f = FeatureMap::Hashed { dim: 3, seed: 11 };
        let pol = SoftmaxPolicy::random(f.clone(), 4, 1.0, 5).unwrap();
        let hist = [2, 1];
        let j = pol.step_jacobian(0, &hist, 2);
        for r in 0..4 {
            let fd = finite_difference(&pol.theta, 1e-5, |th| {
                let p = SoftmaxPolicy::with_theta(f.clone(), 4, th.to_vec()).unwrap();
                p.logits(0, &hist, 2).unwrap()[r]
            });
            for (c, g) in fd.iter().enumerate() {
                assert!(close(*g, j.get(r, c), 1e-9));
            }
        }
        assert!(close(
            j.frobenius_sq(),
            pol.jacobian_frobenius_sq(0, &hist, 2),
            1e-12
        ));
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let f = FeatureMap::Hashed { dim: 4, seed: 3 };
        for seed in 0..5 {
            let pol = SoftmaxPolicy::random(f.clone(), 3, 1.0, seed).unwrap();
            let hist = [1];
            let g = pol.log_prob_grad(1, &hist, 1, 2).unwrap();
            let j = pol.step_jacobian(1, &hist, 1);
            let d = pol.step_distribution(1, &hist, 1).unwrap();
            let jts = j.transpose_mul(&score_vector(&d.probs, 2));
            let fd = finite_difference(&pol.theta, 1e-5, |th| {
                let p = SoftmaxPolicy::with_theta(f.clone(), 3, th.to_vec()).unwrap();
                p.log_prob(1, &hist, 1, 2).unwrap()
            });
            for k in 0..g.len() {
                assert!(close(g[k], jts[k], 1e-14));
                assert!(close(g[k], fd[k], 1e-9), "{} vs {}", g[k], fd[k]);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes_and_tokens() {
        let f = FeatureMap::Positional {
            contexts: 1,
            horizon: 1,
        };
        assert!(SoftmaxPolicy::zeros(f.clone(), 1).is_err());
        assert!(SoftmaxPolicy::with_theta(f.clone(), 2, vec![0.0; 3]).is_err());
        let p = SoftmaxPolicy::zeros(f, 2).unwrap();
        assert!(matches!(
            p.log_prob(0, &[], 0, 5),
            Err(PolicyError::TokenOutOfRange { .. })
        ));
        let mut bad = p.clone();
        bad.theta[0] = f64::NAN;
        assert!(matches!(
            bad.step_distribution(0, &[], 0),
            Err(PolicyError::NonFiniteLogits { step: 0 })
        ));
    }

    fn small_env(reward: fn(usize, &[usize]) -> f64) -> FnEnv<fn(usize, &[usize]) -> f64> {
        FnEnv::new(2, 2, 3, None, reward)
    }

    #[test]
    fn sampling_is_deterministic_and_sized() {
        let env = small_env(|_, y| y[0] as f64);
        let f = FeatureMap::Tabular {
            contexts: 2,
            horizon: 2,
            vocab: 3,
            scales: vec![],
        };
        let pol = SoftmaxPolicy::random(f, 3, 1.0, 1).unwrap();
        let a = sample_trajectory_seeded(&pol, &env, 42).unwrap();
        let b = sample_trajectory_seeded(&pol, &env, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a
            .steps
            .iter()
            .all(|s| (s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12 && s.entropy >= 0.0));
    }

    #[test]
    fn constant_reward_has_zero_gradient() {
        let env = small_env(|_, _| 3.0);
        let f = FeatureMap::Tabular {
            contexts: 2,
            horizon: 2,
            vocab: 3,
            scales: vec![],
        };
        let pol = SoftmaxPolicy::random(f, 3, 1.0, 9).unwrap();
        let g = exact_policy_gradient(&pol, &env).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-14));
        assert!(close(exact_return(&pol, &env).unwrap(), 3.0, 1e-14));
    }

    #[test]
    fn one_step_gradient_closed_form() {
        // T = 1, V = 3, reward (1, 0, 0): ∇_z J = p_0 (e_0 − p)
        let env = FnEnv::new(
            1,
            1,
            3,
            None,
            |_, y: &[usize]| if y[0] == 0 { 1.0 } else { 0.0 },
        );
        let f = FeatureMap::Positional {
            contexts: 1,
            horizon: 1,
        };
        let pol = SoftmaxPolicy::with_theta(f.clone(), 3, vec![0.3, -0.2, 0.5]).unwrap();
        let p = softmax(&pol.theta);
        let g = exact_policy_gradient(&pol, &env).unwrap();
        let fd = finite_difference(&pol.theta, 1e-5, |th| {
            exact_return(
                &SoftmaxPolicy::with_theta(f.clone(), 3, th.to_vec()).unwrap(),
                &env,
            )
            .unwrap()
        });
        for v in 0..3 {
            let closed = p[0] * (if v == 0 { 1.0 } else { 0.0 } - p[v]);
            assert!(close(g[v], closed, 1e-15));
            assert!((g[v] - fd[v]).abs() <= 1e-8 * g[v].abs().max(1e-3));
        }
        let r = exact_return(&pol, &env).unwrap();
        assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn enumeration_limit() {
        let env = FnEnv::new(1, 20, 4, None, |_, _: &[usize]| 0.0);
        let f = FeatureMap::Positional {
            contexts: 1,
            horizon: 20,
        };
        let pol = SoftmaxPolicy::zeros(f, 4).unwrap();
        assert!(matches!(
            exact_return(&pol, &env),
            Err(PolicyError::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn enumeration_probabilities_sum_to_one_with_eos() {
        let env = FnEnv::new(2, 3, 3, Some(2), |_, y: &[usize]| y.len() as f64);
        let f = FeatureMap::Tabular {
            contexts: 2,
            horizon: 3,
            vocab: 3,
            scales: vec![],
        };
        let pol = SoftmaxPolicy::random(f, 3, 1.0, 4).unwrap();
        let mut total = 0.0;
        let mut leaves = 0;
        enumerate_trajectories(&pol, &env, |leaf| {
            total += leaf.prob;
            leaves += 1;
            assert!(leaf.tokens.len() == 3 || *leaf.tokens.last().unwrap() == 2);
        })
        .unwrap();
        assert!(close(total, 1.0, 1e-12));
        // per context: 1 (y0 = eos) + 2 (y1 = eos) + 4·3 full
        assert_eq!(leaves, 2 * (1 + 2 + 12));
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}

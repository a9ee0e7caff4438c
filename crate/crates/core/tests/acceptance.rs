//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any blocking criterion fails. Criterion 10 is reported
//! only.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use rest_kit::env::{enumerable_env, heterogeneous_beta_env, ToolCallEnv};
use rest_kit::estimators::{
    group_advantages, mc_variance, minimized_bound, optimal_weights, replicate_gradients,
    variance_bound, AdvantageMode, BetaProfile, McConfig, TrajectoryGroup, WeightSource,
};
use rest_kit::objective::{
    curriculum_update, grpo_loss, normalize_weights, rest_loss, train_toy, Algorithm,
    CurriculumState, TrainConfig, WeightConfig,
};
use rest_kit::policy::{
    derive_seed, exact_policy_gradient, exact_return, exact_return_moments, finite_difference,
    sample_trajectory, score_vector, shannon_entropy, SoftmaxPolicy,
};
use rest_kit::region::{PerRegion, RegionTag};
use rest_kit::reward::{final_reward, score_response, RewardConfig};
use rest_kit::stats::{bootstrap_trace_ci, coordinate_variances};
use rest_kit::template::ResponseTemplate;
use rest_kit::tool_data::ToolCallSet;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Random point on the simplex; about a third of draws have a random
/// subset of coordinates zeroed.
fn random_simplex(rng: &mut Pcg64, v: usize) -> Vec<f64> {
    let sparse = rng.random_bool(1.0 / 3.0);
    let mut p: Vec<f64> = (0..v)
        .map(|_| {
            if sparse && rng.random_bool(0.5) {
                0.0
            } else {
                -(1.0 - rng.random::<f64>()).ln()
            }
        })
        .collect();
    if p.iter().all(|&x| x == 0.0) {
        p[rng.random_range(0..v)] = 1.0;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

fn simplex_points() -> Vec<Vec<f64>> {
    let mut rng = Pcg64::seed_from_u64(101);
    (0..10_000)
        .map(|_| {
            let v = rng.random_range(2..=64);
            random_simplex(&mut rng, v)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    for p in simplex_points() {
        let enumerated: f64 = (0..p.len())
            .map(|y| p[y] * score_vector(&p, y).iter().map(|s| s * s).sum::<f64>())
            .sum();
        let closed = 1.0 - p.iter().map(|x| x * x).sum::<f64>();
        worst = worst.max((enumerated - closed).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("max |E||s||^2 - (1 - sum p^2)| = {worst:.2e} over 10^4 points"),
    )
}

fn criterion_2() -> Outcome {
    let mut violations = 0;
    let mut min_gap = f64::INFINITY;
    for p in simplex_points() {
        let lhs = 1.0 - p.iter().map(|x| x * x).sum::<f64>();
        let rhs = 1.0 - (-shannon_entropy(&p)).exp();
        if lhs > rhs {
            violations += 1;
        }
        min_gap = min_gap.min(rhs - lhs);
    }
    let mut worst_eq = 0.0f64;
    for v in 2..=64 {
        for k in 1..=v {
            let p: Vec<f64> = (0..v)
                .map(|i| if i < k { 1.0 / k as f64 } else { 0.0 })
                .collect();
            let lhs = 1.0 - p.iter().map(|x| x * x).sum::<f64>();
            let rhs = 1.0 - (-shannon_entropy(&p)).exp();
            worst_eq = worst_eq.max((lhs - rhs).abs());
        }
    }
    outcome(
        violations == 0 && worst_eq <= 1e-12,
        format!("{violations} violations (min gap {min_gap:.2e}); uniform-support equality max dev {worst_eq:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let failures: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = Pcg64::seed_from_u64(derive_seed(303, i));
            let t = rng.random_range(1..=64);
            let beta: Vec<f64> = (0..t)
                .map(|_| 10f64.powf(rng.random_range(-3.0..3.0)))
                .collect();
            let w = optimal_weights(&BetaProfile::from_values(beta.clone())).ok()?;
            let w = w.as_slice();
            let tf = t as f64;
            let sum: f64 = w.iter().sum();
            let best = variance_bound(&beta, w, 1.0);
            let closed = minimized_bound(&beta);
            if (sum - tf).abs() > 1e-12 * tf {
                return Some(format!("profile {i}: sum w* = {sum}"));
            }
            if (best - closed).abs() > 1e-12 * closed {
                return Some(format!(
                    "profile {i}: bound {best} vs T^2/sum 1/beta {closed}"
                ));
            }
            for j in 0..10_000 {
                let cand: Vec<f64> = if j % 2 == 0 {
                    let raw: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|x| tf * x / s).collect()
                } else {
                    // zero-sum perturbation of the optimum, possibly negative
                    let scale = 10f64.powf(rng.random_range(-6.0..0.0));
                    let d: Vec<f64> = (0..t).map(|_| rng.random_range(-scale..scale)).collect();
                    let m = d.iter().sum::<f64>() / tf;
                    w.iter().zip(&d).map(|(a, b)| a + b - m).collect()
                };
                if variance_bound(&beta, &cand, 1.0) < best * (1.0 - 1e-12) {
                    return Some(format!("profile {i}: feasible weight beats the optimum"));
                }
            }
            None
        })
        .collect();
    outcome(
        failures.is_empty(),
        match failures.first() {
            None => "1000 profiles x 10^4 feasible weights, no certificate violation".to_string(),
            Some(f) => format!("{} failures, first: {f}", failures.len()),
        },
    )
}

fn criterion_4() -> Outcome {
    let (env, policy) = enumerable_env(2024);
    let (mu, sigma) = exact_return_moments(&policy, &env).expect("enumerable");
    let truth: Vec<f64> = exact_policy_gradient(&policy, &env)
        .expect("enumerable")
        .iter()
        .map(|g| g / sigma)
        .collect();

    let n = 100_000;
    let samples = replicate_gradients(
        &policy,
        &env,
        None,
        n,
        1,
        AdvantageMode::Population {
            mean: mu,
            std: sigma,
        },
        4,
    )
    .expect("sampling");
    let vars = coordinate_variances(&samples);
    let mut worst_z = 0.0f64;
    let mut bad = 0;
    let mut active = 0;
    for k in 0..truth.len() {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n as f64;
        let se = (vars[k] / n as f64).sqrt();
        if se > 0.0 {
            active += 1;
            let z = (mean - truth[k]).abs() / se;
            worst_z = worst_z.max(z);
            if z > 3.0 {
                bad += 1;
            }
        } else if (mean - truth[k]).abs() > 1e-12 {
            bad += 1;
        }
    }

    let grad = exact_policy_gradient(&policy, &env).expect("enumerable");
    let fd = finite_difference(&policy.theta, 1e-5, |th| {
        let p = SoftmaxPolicy::with_theta(policy.features.clone(), policy.vocab, th.to_vec())
            .expect("shape");
        exact_return(&p, &env).expect("enumerable")
    });
    let diff = grad
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
    let rel = diff / norm;
    outcome(
        bad == 0 && rel <= 1e-8,
        format!(
            "{active} active coordinates, max |z| = {worst_z:.2} ({bad} beyond 3 sigma); exact gradient vs FD rel err {rel:.2e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let (env, policy) = enumerable_env(2024);
    let (mu, sigma) = exact_return_moments(&policy, &env).expect("enumerable");
    let adv = AdvantageMode::Population {
        mean: mu,
        std: sigma,
    };
    let singles = replicate_gradients(&policy, &env, None, 40_000, 1, adv, 50).expect("sampling");
    let v1: f64 = coordinate_variances(&singles).iter().sum();
    let (lo1, hi1) = bootstrap_trace_ci(&singles, 1000, 0.95, 51);
    let mut pass = true;
    let mut parts = vec![format!("trace Var(g) = {v1:.4}")];
    for (i, g) in [2usize, 8, 32].into_iter().enumerate() {
        let means = replicate_gradients(&policy, &env, None, 5_000, g, adv, 60 + i as u64)
            .expect("sampling");
        let vg: f64 = coordinate_variances(&means).iter().sum();
        let (lo, hi) = bootstrap_trace_ci(&means, 1000, 0.95, 70 + i as u64);
        let gf = g as f64;
        let overlap = lo <= hi1 / gf && lo1 / gf <= hi;
        pass &= overlap;
        parts.push(format!(
            "G={g}: {vg:.4} [{lo:.4}, {hi:.4}] vs /G {:.4} [{:.4}, {:.4}]{}",
            v1 / gf,
            lo1 / gf,
            hi1 / gf,
            if overlap { "" } else { " NO OVERLAP" }
        ));
    }
    // informational: batch-standardized advantages
    let batch = replicate_gradients(
        &policy,
        &env,
        None,
        5_000,
        8,
        AdvantageMode::Group { delta: 1e-6 },
        80,
    )
    .expect("sampling");
    let vb: f64 = coordinate_variances(&batch).iter().sum();
    parts.push(format!(
        "group-standardized G=8 ratio to Var(g)/G: {:.3}",
        vb / (v1 / 8.0)
    ));
    outcome(pass, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let (env, policy) = heterogeneous_beta_env();
    let cfg = McConfig {
        n_groups: 10_000,
        seed: 606,
        ..McConfig::default()
    };
    let uni = mc_variance(&policy, &env, WeightSource::Uniform, &cfg).expect("uniform");
    let opt = mc_variance(&policy, &env, WeightSource::Optimal, &cfg).expect("optimal");
    let sur = mc_variance(&policy, &env, WeightSource::Surrogate, &cfg).expect("surrogate");
    let pass = opt.ci_high < uni.ci_low;
    outcome(
        pass,
        format!(
            "uniform {:.4} [{:.4}, {:.4}], optimal {:.4} [{:.4}, {:.4}], surrogate {:.4} [{:.4}, {:.4}]; bound ratio {:.3}",
            uni.trace,
            uni.ci_low,
            uni.ci_high,
            opt.trace,
            opt.ci_low,
            opt.ci_high,
            sur.trace,
            sur.ci_low,
            sur.ci_high,
            opt.minimized_bound / uni.bound_value
        ),
    )
}

#[derive(Deserialize)]
struct GoldenCase {
    name: String,
    response: String,
    gold: Value,
    nu: f64,
    expected: Expected,
}

#[derive(Deserialize)]
struct Expected {
    s_format: u8,
    r_name: String,
    r_para: String,
    r_value: String,
    z_norm: usize,
    s_acc: String,
    r_final: String,
}

fn fraction(s: &str) -> f64 {
    match s.split_once('/') {
        Some((a, b)) => {
            a.parse::<f64>().expect("numerator") / b.parse::<f64>().expect("denominator")
        }
        None => s.parse().expect("number"),
    }
}

fn criterion_7() -> Outcome {
    let text = include_str!("fixtures/reward_golden.jsonl");
    let template = ResponseTemplate::default();
    let cfg = RewardConfig::default();
    let mut mismatches = Vec::new();
    let mut count = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let case: GoldenCase = serde_json::from_str(line).expect("fixture line");
        count += 1;
        let gold = ToolCallSet::from_json_list(&case.gold).expect("gold calls");
        let b = score_response(&case.response, &gold, &template, &cfg, case.nu);
        let e = &case.expected;
        let close = |got: f64, want: &str| (got - fraction(want)).abs() <= 1e-15;
        let ok = b.s_format == e.s_format
            && b.z_norm == e.z_norm
            && close(b.r_name, &e.r_name)
            && close(b.r_para, &e.r_para)
            && close(b.r_value, &e.r_value)
            && close(b.s_acc, &e.s_acc)
            && close(b.r_final, &e.r_final);
        if !ok {
            mismatches.push(format!("{}: got {:?}", case.name, b));
        }
    }

    // invariance of group advantages to the progress scaling
    let mut rng = Pcg64::seed_from_u64(707);
    let mut exact_violations = 0;
    let mut worst_other = 0.0f64;
    for _ in 0..1000 {
        let raw: Vec<(f64, u8)> = (0..8)
            .map(|_| {
                (
                    rng.random_range(0..13) as f64 / 12.0,
                    rng.random_range(0..2u8),
                )
            })
            .collect();
        let rewards = |nu: f64| -> Vec<f64> {
            raw.iter()
                .map(|&(a, f)| final_reward(a, f, &cfg, nu))
                .collect()
        };
        let Ok(base) = group_advantages(&rewards(0.0), 0.0) else {
            continue;
        };
        for nu in [0.5, 0.75, 0.875] {
            if group_advantages(&rewards(nu), 0.0).expect("group") != base {
                exact_violations += 1;
            }
        }
        for nu in [0.1, 0.3, 0.6, 0.9] {
            let a = group_advantages(&rewards(nu), 0.0).expect("group");
            for (x, y) in a.iter().zip(&base) {
                worst_other = worst_other.max((x - y).abs());
            }
        }
    }
    let pass =
        count == 20 && mismatches.is_empty() && exact_violations == 0 && worst_other <= 1e-12;
    outcome(
        pass,
        format!(
            "{}/{count} golden cases reproduced{}; advantage invariance: {exact_violations} bit-level differences at dyadic (1-nu), max dev {worst_other:.1e} elsewhere",
            count - mismatches.len(),
            mismatches.first().map(|m| format!(" (first mismatch {m})")).unwrap_or_default()
        ),
    )
}

fn random_group(seed: u64, size: usize) -> (SoftmaxPolicy, TrajectoryGroup, Vec<Vec<RegionTag>>) {
    let (env, policy) = enumerable_env(seed);
    let mut rng = Pcg64::seed_from_u64(derive_seed(seed, 1));
    let trajs: Vec<_> = (0..size)
        .map(|_| sample_trajectory(&policy, &env, &mut rng).expect("sample"))
        .collect();
    let regions = trajs
        .iter()
        .map(|t| {
            (0..t.len())
                .map(|_| RegionTag::ALL[rng.random_range(0..5)])
                .collect()
        })
        .collect();
    let group = TrajectoryGroup::new(trajs, 1e-6).expect("group");
    (policy, group, regions)
}

fn perturbed(policy: &SoftmaxPolicy, scale: f64, seed: u64) -> SoftmaxPolicy {
    let mut rng = Pcg64::seed_from_u64(seed);
    let theta = policy
        .theta
        .iter()
        .map(|x| x + rng.random_range(-scale..scale))
        .collect();
    SoftmaxPolicy::with_theta(policy.features.clone(), policy.vocab, theta).expect("shape")
}

fn random_state(rng: &mut Pcg64) -> CurriculumState {
    CurriculumState {
        nu: 0.0,
        base: PerRegion(std::array::from_fn(|_| rng.random_range(0.0..3.0))),
    }
}

fn criterion_8() -> Outcome {
    let cfg = WeightConfig::default();
    let mut worst_reduction = 0.0f64;
    let mut worst_zero = 0.0f64;
    for i in 0..100u64 {
        let (policy, group, regions) = random_group(800 + i, 6);
        let moved = perturbed(&policy, 0.3, 900 + i);
        let ones: Vec<Vec<f64>> = group
            .trajectories
            .iter()
            .map(|t| vec![1.0; t.len()])
            .collect();
        let a = rest_loss(&moved, &group, &ones, &cfg).expect("rest");
        let b = grpo_loss(&moved, &group, &cfg, None).expect("grpo");
        worst_reduction = worst_reduction.max((a.loss - b.loss).abs());
        for (x, y) in a.grad.iter().zip(&b.grad) {
            worst_reduction = worst_reduction.max((x - y).abs());
        }

        let mut rng = Pcg64::seed_from_u64(1000 + i);
        let state = random_state(&mut rng);
        let w: Vec<Vec<f64>> = regions
            .iter()
            .map(|r| normalize_weights(r, &state, &cfg).expect("weights"))
            .collect();
        worst_zero = worst_zero.max(
            rest_loss(&policy, &group, &w, &cfg)
                .expect("rest")
                .loss
                .abs(),
        );
    }

    let mut worst_fd = 0.0f64;
    let mut checked = 0;
    let mut attempt = 0u64;
    let kl_cfg = WeightConfig {
        kl_coeff: 0.1,
        ..cfg
    };
    while checked < 10 {
        attempt += 1;
        let (policy, group, regions) = random_group(2000 + attempt, 6);
        let moved = perturbed(&policy, 0.4, 3000 + attempt);
        // skip points within 1e-3 of a clip boundary
        let near_boundary = group.trajectories.iter().any(|traj| {
            let tokens = traj.tokens();
            traj.steps.iter().enumerate().any(|(t, s)| {
                let lp = moved
                    .log_prob(traj.context, &tokens[..t], t, s.token)
                    .expect("lp");
                let r = (lp - s.old_logprob.expect("recorded")).exp();
                (r - (1.0 - cfg.epsilon_clip)).abs() < 1e-3
                    || (r - (1.0 + cfg.epsilon_clip)).abs() < 1e-3
            })
        });
        if near_boundary {
            continue;
        }
        let mut rng = Pcg64::seed_from_u64(4000 + attempt);
        let state = random_state(&mut rng);
        let w: Vec<Vec<f64>> = regions
            .iter()
            .map(|r| normalize_weights(r, &state, &cfg).expect("weights"))
            .collect();
        let reference = perturbed(&policy, 0.5, 5000 + attempt);
        let at = |th: &[f64]| {
            SoftmaxPolicy::with_theta(policy.features.clone(), policy.vocab, th.to_vec())
                .expect("shape")
        };

        let checks: [(Vec<f64>, Vec<f64>); 2] = [
            (
                rest_loss(&moved, &group, &w, &cfg).expect("rest").grad,
                finite_difference(&moved.theta, 1e-6, |th| {
                    rest_loss(&at(th), &group, &w, &cfg).expect("rest").loss
                }),
            ),
            (
                grpo_loss(&moved, &group, &kl_cfg, Some(&reference))
                    .expect("grpo")
                    .grad,
                finite_difference(&moved.theta, 1e-6, |th| {
                    grpo_loss(&at(th), &group, &kl_cfg, Some(&reference))
                        .expect("grpo")
                        .loss
                }),
            ),
        ];
        for (analytic, fd) in &checks {
            let diff = analytic
                .iter()
                .zip(fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst_fd = worst_fd.max(diff / norm);
        }
        checked += 1;
    }
    outcome(
        worst_reduction <= 1e-12 && worst_zero <= 1e-12 && worst_fd <= 1e-6,
        format!(
            "reduction max dev {worst_reduction:.1e}; |L(theta_old)| max {worst_zero:.1e}; gradient vs FD max rel err {worst_fd:.1e} at 10 points"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(909);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let w_min = rng.random_range(0.05..1.0);
        let cfg = WeightConfig {
            w_min,
            w_max: rng.random_range(w_min..3.0),
            alpha_f: rng.random_range(0.0..2.0),
            alpha_p: rng.random_range(0.0..2.0),
            alpha_t: rng.random_range(0.0..2.0),
            ..WeightConfig::default()
        };
        let init = random_state(&mut rng);
        let mut prev: Option<CurriculumState> = None;
        for k in 0..=100 {
            let s = curriculum_update(&init, k as f64 / 100.0, &cfg);
            violations += s
                .base
                .0
                .iter()
                .filter(|&&w| !(cfg.w_min..=cfg.w_max).contains(&w))
                .count();
            if s.weight(RegionTag::ToolName) != cfg.w_max {
                violations += 1;
            }
            if let Some(p) = &prev {
                violations +=
                    usize::from(s.weight(RegionTag::Format) > p.weight(RegionTag::Format));
                violations +=
                    usize::from(s.weight(RegionTag::Parameter) < p.weight(RegionTag::Parameter));
                violations +=
                    usize::from(s.weight(RegionTag::Thought) < p.weight(RegionTag::Thought));
            }
            prev = Some(s);
        }
    }
    let init = CurriculumState {
        nu: 0.0,
        base: PerRegion([2.0, 1.0, 1.0, 1.0, 1.0]),
    };
    let worked = curriculum_update(&init, 0.5, &WeightConfig::default()).weight(RegionTag::Format);
    outcome(
        violations == 0 && worked == 1.5,
        format!("{violations} violations over 1000 configs x 101 grid points; worked example fmt 2.0 -> {worked}"),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn criterion_10() -> Outcome {
    let steps = 500;
    let tail = steps / 10;
    let cfg = TrainConfig::default();
    let mut finals = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for seed in 0..5 {
        for (k, algo) in [Algorithm::Rest, Algorithm::Grpo].into_iter().enumerate() {
            let mut env = ToolCallEnv::synthetic(RewardConfig::default());
            let init = env.warm_start_policy(4.0, 3.0);
            let out = train_toy(&mut env, init, algo, steps, seed, &cfg).expect("training");
            let last = &out.trace[steps - tail..];
            finals[k]
                .0
                .push(last.iter().map(|p| p.entropy).sum::<f64>() / tail as f64);
            finals[k]
                .1
                .push(last.iter().map(|p| p.mean_reward).sum::<f64>() / tail as f64);
        }
    }
    let h_rest = median(finals[0].0.clone());
    let h_grpo = median(finals[1].0.clone());
    let r_rest = finals[0].1.iter().sum::<f64>() / 5.0;
    let r_grpo = finals[1].1.iter().sum::<f64>() / 5.0;
    let close = (r_rest - r_grpo).abs() <= 0.1 * r_rest.max(r_grpo);
    outcome(
        h_rest <= h_grpo && close,
        format!(
            "median final entropy rest {h_rest:.4} vs grpo {h_grpo:.4}; final mean reward rest {r_rest:.3} vs grpo {r_grpo:.3}"
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Duration, bool); 10] = [
        (
            1,
            "score second moment",
            criterion_1,
            Duration::from_secs(10),
            true,
        ),
        (
            2,
            "entropy bound",
            criterion_2,
            Duration::from_secs(10),
            true,
        ),
        (
            3,
            "optimal weight certificate",
            criterion_3,
            Duration::from_secs(60),
            true,
        ),
        (
            4,
            "unbiasedness",
            criterion_4,
            Duration::from_secs(120),
            true,
        ),
        (
            5,
            "variance scaling",
            criterion_5,
            Duration::from_secs(120),
            true,
        ),
        (
            6,
            "variance reduction",
            criterion_6,
            Duration::from_secs(300),
            true,
        ),
        (
            7,
            "reward correctness",
            criterion_7,
            Duration::from_secs(60),
            true,
        ),
        (
            8,
            "objective reductions",
            criterion_8,
            Duration::from_secs(60),
            true,
        ),
        (
            9,
            "curriculum schedule",
            criterion_9,
            Duration::from_secs(60),
            true,
        ),
        (
            10,
            "entropy under reweighting",
            criterion_10,
            Duration::from_secs(600),
            false,
        ),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut blocking_failures = 0;
    for (id, name, check, budget, blocking) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = out.pass && in_time;
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if blocking { "" } else { " (non-blocking)" };
        println!(
            "{tag} criterion {id} [{name}]{note}: {} ({:.2}s{})",
            out.detail,
            elapsed.as_secs_f64(),
            if in_time {
                String::new()
            } else {
                format!(", over the {}s budget", budget.as_secs())
            }
        );
        if blocking && !pass {
            blocking_failures += 1;
        }
    }
    if blocking_failures > 0 {
        eprintln!("{blocking_failures} blocking criteria failed");
        std::process::exit(1);
    }
}

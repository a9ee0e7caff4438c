//! Rule-based tool-call reward: format score, Jaccard name and parameter-name
//! scores, exact-match value score, normalization and progress scaling.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::template::{count_occurrences, ResponseTemplate};
use crate::tool_data::{parse_tool_calls, ToolCallSet, ToolDataError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub beta_acc: f64,
    pub beta_fmt: f64,
    pub dynamic_scaling: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta_acc: 0.8,
            beta_fmt: 0.2,
            dynamic_scaling: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta_acc >= 0.0 && self.beta_fmt >= 0.0) {
            return Err("beta_acc and beta_fmt must be non-negative".into());
        }
        if self.beta_acc + self.beta_fmt <= 0.0 {
            return Err("beta_acc + beta_fmt must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchScores {
    pub r_name: f64,
    pub r_para: f64,
    pub r_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub s_format: u8,
    pub r_name: f64,
    pub r_para: f64,
    pub r_value: f64,
    pub z_norm: usize,
    pub s_acc: f64,
    pub r_final: f64,
    /// Set when the prediction's call block failed to parse; the prediction
    /// was then scored as an empty set.
    #[serde(skip)]
    pub parse_error: Option<ToolDataError>,
}

/// 1 iff each delimiter occurs exactly once, in the order think-open,
/// think-close, call-open, call-close, and the call body holds at least one
/// well-formed call.
pub fn format_score(raw: &str, template: &ResponseTemplate) -> u8 {
    let delims = [
        &template.think_open,
        &template.think_close,
        &template.call_open,
        &template.call_close,
    ];
    if delims.iter().any(|d| count_occurrences(raw, d) != 1) {
        return 0;
    }
    let positions: Vec<usize> = delims
        .iter()
        .map(|d| raw.find(d.as_str()).unwrap_or(0))
        .collect();
    let ordered = positions[0] + template.think_open.len() <= positions[1]
        && positions[1] + template.think_close.len() <= positions[2]
        && positions[2] + template.call_open.len() <= positions[3];
    if !ordered {
        return 0;
    }
    match parse_tool_calls(raw, template) {
        Ok(set) if !set.is_empty() => 1,
        _ => 0,
    }
}

/// `|a ∩ b| / |a ∪ b|`, with the Jaccard of two empty sets taken as 1.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Name Jaccard over tool-name sets; parameter-name Jaccard and exact value
/// matches summed over gold tools. A gold tool missing from the prediction
/// contributes nothing to either sum.
pub fn tool_match_scores(pred: &ToolCallSet, gold: &ToolCallSet) -> MatchScores {
    let pred_calls = pred.by_name();
    let gold_calls = gold.by_name();
    let pred_names: BTreeSet<&str> = pred_calls.iter().map(|c| c.name.as_str()).collect();
    let gold_names: BTreeSet<&str> = gold_calls.iter().map(|c| c.name.as_str()).collect();
    let r_name = jaccard(&gold_names, &pred_names);

    let mut r_para = 0.0;
    let mut r_value = 0.0;
    for g in &gold_calls {
        let Some(p) = pred_calls.iter().find(|p| p.name == g.name) else {
            continue;
        };
        let gk: BTreeSet<&str> = g.params.keys().map(String::as_str).collect();
        let pk: BTreeSet<&str> = p.params.keys().map(String::as_str).collect();
        r_para += jaccard(&gk, &pk);
        r_value += g
            .params
            .iter()
            .filter(|(k, v)| p.params.get(*k) == Some(v))
            .count() as f64;
    }
    MatchScores {
        r_name,
        r_para,
        r_value,
    }
}

/// `1 + |G| + Σ|v(G_i)|`, or 1 for an empty gold set.
pub fn normalizer(gold: &ToolCallSet) -> usize {
    let calls = gold.by_name();
    1 + calls.len() + calls.iter().map(|c| c.params.len()).sum::<usize>()
}

/// Normalized correctness. With an empty gold set this reduces to `r_name`,
/// which is 1 exactly when the prediction is also empty.
pub fn accuracy_score(scores: &MatchScores, gold: &ToolCallSet) -> f64 {
    if gold.is_empty() {
        return scores.r_name;
    }
    (scores.r_name + scores.r_para + scores.r_value) / normalizer(gold) as f64
}

/// Weighted sum of accuracy and format scores, scaled by `(1 - nu)` when
/// dynamic scaling is on.
pub fn final_reward(s_acc: f64, s_format: u8, cfg: &RewardConfig, nu: f64) -> f64 {
    let base = cfg.beta_acc * s_acc + cfg.beta_fmt * f64::from(s_format);
    if cfg.dynamic_scaling {
        (1.0 - nu) * base
    } else {
        base
    }
}

/// Full reward pipeline for one raw response against its gold calls.
pub fn score_response(
    raw: &str,
    gold: &ToolCallSet,
    template: &ResponseTemplate,
    cfg: &RewardConfig,
    nu: f64,
) -> RewardBreakdown {
    let (pred, parse_error) = match parse_tool_calls(raw, template) {
        Ok(set) => (set, None),
        Err(e) => (ToolCallSet::default(), Some(e)),
    };
    let s_format = format_score(raw, template);
    let scores = tool_match_scores(&pred, gold);
    let s_acc = accuracy_score(&scores, gold);
    RewardBreakdown {
        s_format,
        r_name: scores.r_name,
        r_para: scores.r_para,
        r_value: scores.r_value,
        z_norm: if gold.is_empty() { 1 } else { normalizer(gold) },
        s_acc,
        r_final: final_reward(s_acc, s_format, cfg, nu),
        parse_error,
    }
}

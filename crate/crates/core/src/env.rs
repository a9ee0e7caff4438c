//! Toy environments: context distribution, horizon, vocabulary and reward.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::policy::{FeatureMap, SoftmaxPolicy};
use crate::region::{tag_regions, RegionTag};
use crate::reward::{score_response, RewardBreakdown, RewardConfig};
use crate::template::ResponseTemplate;
use crate::tool_data::ToolCallSet;

pub trait Environment: Sync {
    fn n_contexts(&self) -> usize;
    fn horizon(&self) -> usize;
    fn vocab(&self) -> usize;

    /// Whether emitting `token` ends the trajectory.
    fn is_terminal(&self, _token: usize) -> bool {
        false
    }

    fn context_prob(&self, _context: usize) -> f64 {
        1.0 / self.n_contexts() as f64
    }

    fn reward(&self, context: usize, tokens: &[usize]) -> f64;
}

/// Environment whose reward is an arbitrary function of (context, tokens).
#[derive(Clone)]
pub struct FnEnv<F> {
    contexts: usize,
    horizon: usize,
    vocab: usize,
    eos: Option<usize>,
    reward: F,
}

impl<F> FnEnv<F>
where
    F: Fn(usize, &[usize]) -> f64 + Sync,
{
    pub fn new(
        contexts: usize,
        horizon: usize,
        vocab: usize,
        eos: Option<usize>,
        reward: F,
    ) -> Self {
        assert!(
            contexts >= 1 && horizon >= 1 && vocab >= 2,
            "degenerate environment"
        );
        Self {
            contexts,
            horizon,
            vocab,
            eos,
            reward,
        }
    }
}

impl<F> Environment for FnEnv<F>
where
    F: Fn(usize, &[usize]) -> f64 + Sync,
{
    fn n_contexts(&self) -> usize {
        self.contexts
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn vocab(&self) -> usize {
        self.vocab
    }

    fn is_terminal(&self, token: usize) -> bool {
        self.eos == Some(token)
    }

    fn reward(&self, context: usize, tokens: &[usize]) -> f64 {
        (self.reward)(context, tokens)
    }
}

pub type TableEnv = FnEnv<fn(usize, &[usize]) -> f64>;

fn enumerable_reward(c: usize, y: &[usize]) -> f64 {
    let y0 = y.first().copied().unwrap_or(0);
    let y1 = y.get(1).copied().unwrap_or(0);
    ((7 * c + 3 * y0 + 5 * y1 + y0 * y1) % 4) as f64 / 3.0
}

/// Two contexts, horizon 2, vocabulary 3, tabular features and a fixed
/// integer-valued reward table. Small enough to enumerate (18 trajectories).
pub fn enumerable_env(seed: u64) -> (TableEnv, SoftmaxPolicy) {
    let env: TableEnv = FnEnv::new(2, 2, 3, None, enumerable_reward);
    let features = FeatureMap::Tabular {
        contexts: 2,
        horizon: 2,
        vocab: 3,
        scales: vec![],
    };
    let policy = SoftmaxPolicy::random(features, 3, 1.0, seed).expect("valid shape");
    (env, policy)
}

fn hetero_reward(_c: usize, y: &[usize]) -> f64 {
    // driven by the two low-entropy steps
    let hit = |t: usize| f64::from(u8::from(y.get(t) == Some(&0)));
    hit(2) + hit(3)
}

/// One context, horizon 4, vocabulary 4. Steps 0–1 are near-uniform with
/// large feature scale; steps 2–3 are peaked with unit scale, so the per-step
/// variance contributions differ by well over 4x.
pub fn heterogeneous_beta_env() -> (TableEnv, SoftmaxPolicy) {
    let (v, horizon) = (4, 4);
    let env: TableEnv = FnEnv::new(1, horizon, v, None, hetero_reward);
    let scales = vec![2.0, 2.0, 1.0, 1.0];
    let features = FeatureMap::Tabular {
        contexts: 1,
        horizon,
        vocab: v,
        scales: scales.clone(),
    };
    let mut policy = SoftmaxPolicy::zeros(features, v).expect("valid shape");
    let d = policy.dim();
    for k in 0..d {
        let t = k / (v + 1);
        if t >= 2 {
            // peaked: p(0) ≈ 0.87 regardless of the previous token
            policy.theta[k * v] = 3.0 / scales[t];
        }
    }
    (env, policy)
}

#[derive(Debug, Error)]
pub enum EnvSpecError {
    #[error("environment spec is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid environment spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextSpec {
    pub id: String,
    #[serde(default)]
    pub gold_calls: Value,
    /// Piece indices of a well-formed answer; drives the warm-start prior.
    #[serde(default)]
    pub reference: Vec<usize>,
}

/// On-disk description of a [`ToolCallEnv`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSpec {
    pub horizon: usize,
    pub pieces: Vec<String>,
    #[serde(default)]
    pub eos: Option<usize>,
    pub contexts: Vec<ContextSpec>,
    #[serde(default)]
    pub template: Option<ResponseTemplate>,
}

#[derive(Debug, Clone)]
pub struct ToolContext {
    pub id: String,
    pub gold: ToolCallSet,
    pub reference: Vec<usize>,
}

/// Synthetic tool-calling environment. Each action emits a text piece; the
/// concatenated response is scored with the rule-based reward against the
/// context's gold calls.
#[derive(Debug, Clone)]
pub struct ToolCallEnv {
    pub pieces: Vec<String>,
    pub eos: Option<usize>,
    pub contexts: Vec<ToolContext>,
    pub horizon: usize,
    pub template: ResponseTemplate,
    pub reward_cfg: RewardConfig,
    nu: f64,
}

impl ToolCallEnv {
    pub fn from_spec(spec: EnvSpec, reward_cfg: RewardConfig) -> Result<Self, EnvSpecError> {
        let invalid = |m: String| EnvSpecError::Invalid(m);
        if spec.horizon == 0 {
            return Err(invalid("horizon must be at least 1".into()));
        }
        if spec.pieces.len() < 2 {
            return Err(invalid("need at least two pieces".into()));
        }
        if spec.contexts.is_empty() {
            return Err(invalid("need at least one context".into()));
        }
        let v = spec.pieces.len();
        if spec.eos.is_some_and(|e| e >= v) {
            return Err(invalid("eos index outside the vocabulary".into()));
        }
        let contexts = spec
            .contexts
            .into_iter()
            .map(|c| {
                if c.reference.iter().any(|&p| p >= v) {
                    return Err(invalid(format!(
                        "context {}: reference piece out of range",
                        c.id
                    )));
                }
                if c.reference.len() > spec.horizon {
                    return Err(invalid(format!(
                        "context {}: reference longer than horizon",
                        c.id
                    )));
                }
                let gold = ToolCallSet::from_json_list(&c.gold_calls)
                    .map_err(|e| invalid(format!("context {}: {e}", c.id)))?;
                Ok(ToolContext {
                    id: c.id,
                    gold,
                    reference: c.reference,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            pieces: spec.pieces,
            eos: spec.eos,
            contexts,
            horizon: spec.horizon,
            template: spec.template.unwrap_or_default(),
            reward_cfg,
            nu: 0.0,
        })
    }

    pub fn from_json(text: &str, reward_cfg: RewardConfig) -> Result<Self, EnvSpecError> {
        Self::from_spec(serde_json::from_str(text)?, reward_cfg)
    }

    /// Built-in two-context environment (weather lookup, web search).
    pub fn synthetic(reward_cfg: RewardConfig) -> Self {
        Self::from_json(SYNTHETIC_ENV, reward_cfg).expect("built-in spec is valid")
    }

    pub fn progress(&self) -> f64 {
        self.nu
    }

    pub fn set_progress(&mut self, nu: f64) {
        self.nu = nu;
    }

    pub fn render(&self, tokens: &[usize]) -> String {
        tokens.iter().map(|&t| self.pieces[t].as_str()).collect()
    }

    /// Byte span of each emitted piece in the rendered response.
    pub fn piece_spans(&self, tokens: &[usize]) -> Vec<(usize, usize)> {
        let mut pos = 0;
        tokens
            .iter()
            .map(|&t| {
                let start = pos;
                pos += self.pieces[t].len();
                (start, pos)
            })
            .collect()
    }

    /// Region of each action, lifted from byte-level tags of the rendered
    /// response by [`crate::region::TaggedResponse::dominant_region`].
    pub fn step_regions(&self, tokens: &[usize]) -> Vec<RegionTag> {
        let raw = self.render(tokens);
        let tagged = tag_regions(&raw, &self.template);
        self.piece_spans(tokens)
            .into_iter()
            .map(|(s, e)| tagged.dominant_region(s, e))
            .collect()
    }

    pub fn breakdown(&self, context: usize, tokens: &[usize]) -> RewardBreakdown {
        score_response(
            &self.render(tokens),
            &self.contexts[context].gold,
            &self.template,
            &self.reward_cfg,
            self.nu,
        )
    }

    /// Positional softmax policy whose logits favour each context's reference
    /// piece: by `format_bias` where the reference piece is format markup and
    /// by `content_bias` elsewhere.
    pub fn warm_start_policy(&self, format_bias: f64, content_bias: f64) -> SoftmaxPolicy {
        let features = FeatureMap::Positional {
            contexts: self.contexts.len(),
            horizon: self.horizon,
        };
        let v = self.pieces.len();
        let mut policy = SoftmaxPolicy::zeros(features, v).expect("valid shape");
        for (c, ctx) in self.contexts.iter().enumerate() {
            let regions = self.step_regions(&ctx.reference);
            for (t, (&piece, region)) in ctx.reference.iter().zip(regions).enumerate() {
                let bias = if region == RegionTag::Format {
                    format_bias
                } else {
                    content_bias
                };
                policy.theta[(c * self.horizon + t) * v + piece] = bias;
            }
        }
        policy
    }
}

impl Environment for ToolCallEnv {
    fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn vocab(&self) -> usize {
        self.pieces.len()
    }

    fn is_terminal(&self, token: usize) -> bool {
        self.eos == Some(token)
    }

    fn reward(&self, context: usize, tokens: &[usize]) -> f64 {
        self.breakdown(context, tokens).r_final
    }
}

pub const SYNTHETIC_ENV: &str = r#"{
  "horizon": 12,
  "pieces": [
    "<think>", "</think>", "<tool_call>", "</tool_call>",
    "I need", " the weather", " to search",
    "{\"name\": \"", "get_weather", "search_web", "\", \"arguments\": {",
    "\"city\": ", "\"query\": ", "\"Paris\"", "\"rust\"", "}}", ""
  ],
  "eos": 16,
  "contexts": [
    {
      "id": "weather",
      "gold_calls": [{"name": "get_weather", "arguments": {"city": "Paris"}}],
      "reference": [0, 4, 5, 1, 2, 7, 8, 10, 11, 13, 15, 3]
    },
    {
      "id": "search",
      "gold_calls": [{"name": "search_web", "arguments": {"query": "rust"}}],
      "reference": [0, 4, 6, 1, 2, 7, 9, 10, 12, 14, 15, 3]
    }
  ]
}"#;

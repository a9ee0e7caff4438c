use proptest::prelude::*;

use rest_kit::estimators::{optimal_weights, BetaProfile};
use rest_kit::objective::{curriculum_update, normalize_weights, CurriculumState, WeightConfig};
use rest_kit::region::{tag_regions, PerRegion, RegionTag};
use rest_kit::reward::tool_match_scores;
use rest_kit::template::ResponseTemplate;
use rest_kit::tool_data::{
    decompose_dialogue, parse_tool_calls, render_tool_calls, CanonicalValue, Dialogue, Message,
    Role, ToolCall, ToolCallSet, Turn,
};

fn leaf_value() -> impl Strategy<Value = CanonicalValue> {
    prop_oneof![
        Just(CanonicalValue::Null),
        any::<bool>().prop_map(CanonicalValue::Bool),
        (-1_000_000i64..1_000_000, 0u32..4).prop_map(|(m, scale)| {
            let s = if scale == 0 {
                m.to_string()
            } else {
                format!("{}e-{scale}", m)
            };
            CanonicalValue::Number(s.parse().expect("decimal"))
        }),
        "[ -~]{0,12}".prop_map(CanonicalValue::String),
    ]
}

fn value() -> impl Strategy<Value = CanonicalValue> {
    leaf_value().prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(CanonicalValue::List),
            prop::collection::btree_map("[a-z]{1,4}", inner, 0..3).prop_map(CanonicalValue::Map),
        ]
    })
}

fn call() -> impl Strategy<Value = ToolCall> {
    (
        "[a-z_]{1,8}",
        prop::collection::btree_map("[a-z]{1,6}", value(), 0..4),
    )
        .prop_map(|(name, params)| {
            params
                .into_iter()
                .fold(ToolCall::new(name), |c, (k, v)| c.with_param(k, v))
        })
}

fn call_set() -> impl Strategy<Value = ToolCallSet> {
    prop::collection::vec(call(), 0..4).prop_map(ToolCallSet::new)
}

fn region() -> impl Strategy<Value = RegionTag> {
    (0usize..5).prop_map(|i| RegionTag::ALL[i])
}

fn weight_config() -> impl Strategy<Value = WeightConfig> {
    (
        0.05f64..1.0,
        0.0f64..2.0,
        0.0f64..2.0,
        0.0f64..2.0,
        0.0f64..2.0,
    )
        .prop_map(|(w_min, span, af, ap, at)| WeightConfig {
            w_min,
            w_max: w_min + span,
            alpha_f: af,
            alpha_p: ap,
            alpha_t: at,
            ..WeightConfig::default()
        })
}

fn base_weights() -> impl Strategy<Value = CurriculumState> {
    prop::array::uniform5(0.0f64..4.0).prop_map(|b| CurriculumState {
        nu: 0.0,
        base: PerRegion(b),
    })
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(set in call_set()) {
        let t = ResponseTemplate::default();
        let text = render_tool_calls(&set, &t);
        prop_assert_eq!(parse_tool_calls(&text, &t).unwrap(), set.clone());
        // and rendering the parse is a fixed point
        let again = render_tool_calls(&parse_tool_calls(&text, &t).unwrap(), &t);
        prop_assert_eq!(again, text);
    }

    #[test]
    fn decomposition_nests_prefixes(turns in prop::collection::vec(
        (prop::collection::vec("[a-z ]{0,10}", 0..3), "[a-z ]{0,10}"), 1..6)
    ) {
        let turns: Vec<Turn> = turns
            .into_iter()
            .map(|(delta, action)| Turn {
                context_delta: delta.into_iter().map(|c| Message::new(Role::User, c)).collect(),
                action,
                gold_calls: ToolCallSet::default(),
            })
            .collect();
        let k = turns.len();
        let d = Dialogue::new("d", turns).unwrap();
        let samples = decompose_dialogue(&d);
        prop_assert_eq!(samples.len(), k);
        for pair in samples.windows(2) {
            prop_assert!(pair[0].context.len() < pair[1].context.len());
            prop_assert_eq!(&pair[1].context[..pair[0].context.len()], &pair[0].context[..]);
            prop_assert_eq!(
                &pair[1].context[pair[0].context.len()],
                &Message::new(Role::Assistant, pair[0].target_response.clone())
            );
        }
    }

    #[test]
    fn tagging_partitions_every_byte(raw in "(<think>|</think>|<tool_call>|</tool_call>|\\{\"name\": \"f\", \"arguments\": \\{\"a\": 1\\}\\}|[ -~\n]{0,8}){0,8}") {
        let tagged = tag_regions(&raw, &ResponseTemplate::default());
        prop_assert_eq!(tagged.len(), raw.len());
        prop_assert_eq!(tagged.spans.len(), raw.len());
        prop_assert_eq!(tagged.counts().iter().sum::<usize>(), raw.len());
    }

    #[test]
    fn name_score_is_symmetric(a in call_set(), b in call_set()) {
        prop_assert_eq!(tool_match_scores(&a, &b).r_name, tool_match_scores(&b, &a).r_name);
    }

    #[test]
    fn curriculum_is_monotone_and_bounded(cfg in weight_config(), init in base_weights(), nu1 in 0.0f64..=1.0, nu2 in 0.0f64..=1.0) {
        let (lo, hi) = if nu1 <= nu2 { (nu1, nu2) } else { (nu2, nu1) };
        let a = curriculum_update(&init, lo, &cfg);
        let b = curriculum_update(&init, hi, &cfg);
        prop_assert!(b.weight(RegionTag::Format) <= a.weight(RegionTag::Format));
        prop_assert!(b.weight(RegionTag::Parameter) >= a.weight(RegionTag::Parameter));
        prop_assert!(b.weight(RegionTag::Thought) >= a.weight(RegionTag::Thought));
        for s in [&a, &b] {
            prop_assert!(s.base.0.iter().all(|w| (cfg.w_min..=cfg.w_max).contains(w)));
        }
    }

    #[test]
    fn normalized_weights_sum_to_length(cfg in weight_config(), state in base_weights(), regions in prop::collection::vec(region(), 1..64)) {
        let w = normalize_weights(&regions, &state, &cfg).unwrap();
        let t = regions.len() as f64;
        prop_assert!((w.iter().sum::<f64>() - t).abs() <= 1e-12 * t);
    }

    #[test]
    fn optimal_weights_are_feasible(beta in prop::collection::vec(0.0f64..100.0, 1..64)) {
        let w = optimal_weights(&BetaProfile::from_values(beta.clone())).unwrap();
        let t = beta.len() as f64;
        prop_assert!((w.as_slice().iter().sum::<f64>() - t).abs() <= 1e-12 * t);
        prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
    }
}

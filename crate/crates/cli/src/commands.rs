use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::Value;

use rest_kit::config::{RunConfig, SimEnv};
use rest_kit::env::{enumerable_env, heterogeneous_beta_env, ToolCallEnv};
use rest_kit::estimators::{mc_variance, minimized_bound, AdvantageMode, McConfig, WeightSource};
use rest_kit::objective::{
    curriculum_update, init_region_weights, normalize_weights, train_toy, Algorithm,
};
use rest_kit::region::{tag_regions, RegionEntropy, RegionTag};
use rest_kit::reward::score_response;
use rest_kit::template::ResponseTemplate;
use rest_kit::tool_data::{parse_records, sample_to_json_line, Sample, ToolCallSet};

use crate::manifest::RunManifest;
use crate::{CliError, CliResult, Common, ConfigFile};

pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path, manifest: &mut RunManifest) -> CliResult<String> {
    let bytes = read_input(path)?;
    manifest.input(path, &bytes);
    String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| match path {
        Some(p) => CliError::Data(format!("{}: {e}", p.display())),
        None => CliError::Data(format!("stdout: {e}")),
    }
}

/// Writes `bytes` to `--out` (registering it with the manifest) or stdout.
fn emit(out: Option<&Path>, bytes: &[u8], manifest: &mut RunManifest) -> CliResult<()> {
    match out {
        Some(p) => {
            fs::write(p, bytes).map_err(io_err(Some(p)))?;
            manifest.output(p);
        }
        None => io::stdout().write_all(bytes).map_err(io_err(None))?,
    }
    Ok(())
}

fn finish(manifest: RunManifest) -> CliResult<()> {
    manifest
        .finish()
        .map(|_| ())
        .map_err(|e| CliError::Data(format!("writing manifest: {e}")))
}

fn attach_config(manifest: &mut RunManifest, cfg: &RunConfig, file: ConfigFile) {
    if let Some((path, bytes)) = file {
        manifest.input(&path, &bytes);
    }
    manifest.config(cfg.dump());
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn load_samples(path: &Path, manifest: &mut RunManifest) -> CliResult<Vec<Sample>> {
    let text = read_text(path, manifest)?;
    let records =
        parse_records(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(records.into_iter().flat_map(|r| r.into_samples()).collect())
}

pub fn score(
    pred: &Path,
    gold: &Path,
    nu: f64,
    cfg: &RunConfig,
    cfg_file: ConfigFile,
    common: &Common,
    argv: Vec<String>,
) -> CliResult<()> {
    let mut manifest = RunManifest::start("score", argv);
    attach_config(&mut manifest, cfg, cfg_file);

    let mut gold_by_id: BTreeMap<String, ToolCallSet> = BTreeMap::new();
    for s in load_samples(gold, &mut manifest)? {
        if gold_by_id.insert(s.id.clone(), s.gold_calls).is_some() {
            return Err(CliError::Data(format!(
                "{}: duplicate id `{}`",
                gold.display(),
                s.id
            )));
        }
    }

    let text = read_text(pred, &mut manifest)?;
    let mut preds = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| CliError::Data(format!("{}:{}: {m}", pred.display(), i + 1));
        let v: Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let id = v
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string `id`"))?;
        let response = v
            .get("response")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string `response`"))?;
        if !seen.insert(id.to_string()) {
            return Err(bad(&format!("duplicate id `{id}`")));
        }
        preds.push((id.to_string(), response.to_string()));
    }
    if let Some(missing) = gold_by_id.keys().find(|k| !seen.contains(*k)) {
        return Err(CliError::Data(format!(
            "no prediction for gold id `{missing}`"
        )));
    }
    if let Some((extra, _)) = preds.iter().find(|(id, _)| !gold_by_id.contains_key(id)) {
        return Err(CliError::Data(format!(
            "prediction id `{extra}` has no gold sample"
        )));
    }

    let template = ResponseTemplate::default();
    let mut rows = Vec::with_capacity(preds.len() + 1);
    let mut sums = [0.0; 6];
    for (id, response) in &preds {
        let b = score_response(response, &gold_by_id[id], &template, &cfg.reward, nu);
        let vals = [
            f64::from(b.s_format),
            b.r_name,
            b.r_para,
            b.r_value,
            b.s_acc,
            b.r_final,
        ];
        for (s, v) in sums.iter_mut().zip(vals) {
            *s += v;
        }
        let mut row = vec![id.clone(), b.s_format.to_string()];
        row.extend(vals[1..].iter().map(f64::to_string));
        rows.push(row);
    }
    if !preds.is_empty() {
        let n = preds.len() as f64;
        let mut row = vec!["mean".to_string()];
        row.extend(sums.iter().map(|s| (s / n).to_string()));
        rows.push(row);
    }
    let bytes = csv_bytes(
        &[
            "id", "s_format", "r_name", "r_para", "r_value", "s_acc", "r_final",
        ],
        &rows,
    )?;
    emit(common.out.as_deref(), &bytes, &mut manifest)?;
    finish(manifest)
}

/// Printable ASCII stays as is; everything else is `\xNN`.
fn escape_byte(b: u32) -> String {
    match b {
        0x5c => "\\\\".to_string(),
        0x21..=0x7e => char::from_u32(b).map(String::from).unwrap_or_default(),
        _ => format!("\\x{b:02x}"),
    }
}

/// Lines that parse as a JSON string are decoded, so responses containing
/// newlines can be supplied.
fn decode_line(line: &str) -> String {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::String(s)) => s,
        _ => line.to_string(),
    }
}

pub fn tag(input: &Path, common: &Common, argv: Vec<String>) -> CliResult<()> {
    let mut manifest = RunManifest::start("tag", argv);
    let text = read_text(input, &mut manifest)?;
    let template = ResponseTemplate::default();
    let mut out = String::from("response\tindex\ttoken\ttag\n");
    for (r, line) in text.lines().enumerate() {
        let raw = decode_line(line);
        let tagged = tag_regions(&raw, &template);
        for (i, (tok, region)) in tagged.tokens.iter().zip(&tagged.spans).enumerate() {
            out.push_str(&format!(
                "{r}\t{i}\t{}\t{}\n",
                escape_byte(*tok),
                region.as_str()
            ));
        }
    }
    emit(common.out.as_deref(), out.as_bytes(), &mut manifest)?;
    finish(manifest)
}

pub fn decompose(input: &Path, common: &Common, argv: Vec<String>) -> CliResult<()> {
    let mut manifest = RunManifest::start("decompose", argv);
    let mut out = String::new();
    for s in load_samples(input, &mut manifest)? {
        out.push_str(&sample_to_json_line(&s));
        out.push('\n');
    }
    emit(common.out.as_deref(), out.as_bytes(), &mut manifest)?;
    finish(manifest)
}

struct EntropyRow {
    step: u64,
    region: RegionTag,
    entropy: f64,
    beta: Option<f64>,
}

fn parse_entropy_trace(path: &Path, text: &str) -> CliResult<Vec<EntropyRow>> {
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(c_step), Some(c_region), Some(c_entropy)) =
        (col("step"), col("region"), col("entropy"))
    else {
        return Err(bad("header must contain step, region, entropy".into()));
    };
    let c_beta = col("beta");
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, what: &str| {
            field(c)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| bad(format!("line {line}: invalid {what} `{}`", field(c))))
        };
        rows.push(EntropyRow {
            step: field(c_step)
                .parse()
                .map_err(|_| bad(format!("line {line}: invalid step `{}`", field(c_step))))?,
            region: RegionTag::parse(field(c_region))
                .ok_or_else(|| bad(format!("line {line}: unknown region `{}`", field(c_region))))?,
            entropy: num(c_entropy, "entropy")?,
            beta: c_beta.map(|c| num(c, "beta")).transpose()?,
        });
    }
    if rows.is_empty() {
        return Err(bad("entropy trace is empty".into()));
    }
    rows.sort_by_key(|r| r.step);
    Ok(rows)
}

pub fn weights(
    entropy: &Path,
    grid: &[f64],
    cfg: &RunConfig,
    cfg_file: ConfigFile,
    common: &Common,
    argv: Vec<String>,
) -> CliResult<()> {
    let wcfg = cfg.weights();
    wcfg.validate()
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut manifest = RunManifest::start("weights", argv);
    attach_config(&mut manifest, cfg, cfg_file);
    let text = read_text(entropy, &mut manifest)?;
    let rows = parse_entropy_trace(entropy, &text)?;

    let stats = RegionEntropy::from_observations(rows.iter().map(|r| (r.region, r.entropy)))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let initial = init_region_weights(&stats, wcfg);
    let regions: Vec<RegionTag> = rows.iter().map(|r| r.region).collect();
    let beta: Vec<f64> = rows
        .iter()
        .map(|r| r.beta.unwrap_or_else(|| 1.0 - (-r.entropy).exp()))
        .collect();
    let bound = minimized_bound(&beta);

    let mut out = Vec::with_capacity(grid.len());
    for &nu in grid {
        let state = curriculum_update(&initial, nu, wcfg);
        let omega =
            normalize_weights(&regions, &state, wcfg).map_err(|e| CliError::Data(e.to_string()))?;
        let (lo, hi) = omega
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
                (lo.min(w), hi.max(w))
            });
        out.push(vec![
            nu.to_string(),
            state.weight(RegionTag::Format).to_string(),
            state.weight(RegionTag::ToolName).to_string(),
            state.weight(RegionTag::Parameter).to_string(),
            state.weight(RegionTag::Thought).to_string(),
            lo.to_string(),
            hi.to_string(),
            bound.to_string(),
        ]);
    }
    let bytes = csv_bytes(
        &[
            "nu",
            "w_fmt",
            "w_name",
            "w_para",
            "w_thk",
            "omega_min",
            "omega_max",
            "minimized_bound",
        ],
        &out,
    )?;
    emit(common.out.as_deref(), &bytes, &mut manifest)?;
    finish(manifest)
}

pub fn simulate(
    seed: u64,
    cfg: &RunConfig,
    cfg_file: ConfigFile,
    common: &Common,
    argv: Vec<String>,
) -> CliResult<()> {
    let mut manifest = RunManifest::start("simulate", argv);
    manifest.seed(seed);
    attach_config(&mut manifest, cfg, cfg_file);
    let mc = McConfig {
        n_groups: cfg.sim_groups,
        group_size: cfg.sim_group_size,
        advantage: AdvantageMode::Group {
            delta: cfg.weights().delta,
        },
        bootstrap_resamples: cfg.bootstrap_resamples,
        confidence: cfg.confidence,
        seed,
        beta_samples: cfg.beta_samples,
    };
    let (env, policy) = match cfg.sim_env {
        SimEnv::Heterogeneous => heterogeneous_beta_env(),
        SimEnv::Enumerable => enumerable_env(seed),
    };
    let mut rows = Vec::new();
    for source in WeightSource::ALL {
        let r =
            mc_variance(&policy, &env, source, &mc).map_err(|e| CliError::Data(e.to_string()))?;
        rows.push(vec![
            source.as_str().to_string(),
            r.trace.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.bound_value.to_string(),
            r.minimized_bound.to_string(),
        ]);
    }
    let bytes = csv_bytes(
        &[
            "weights_source",
            "trace_variance",
            "ci_low",
            "ci_high",
            "bound_value",
            "minimized_bound",
        ],
        &rows,
    )?;
    emit(common.out.as_deref(), &bytes, &mut manifest)?;
    finish(manifest)
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    algo: Algorithm,
    steps: usize,
    seed: u64,
    env_path: Option<&Path>,
    params: Option<&Path>,
    cfg: &RunConfig,
    cfg_file: ConfigFile,
    common: &Common,
    argv: Vec<String>,
) -> CliResult<()> {
    cfg.train
        .validate()
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut manifest = RunManifest::start("train", argv);
    manifest.seed(seed);
    attach_config(&mut manifest, cfg, cfg_file);
    let mut env = match env_path {
        Some(p) => {
            let text = read_text(p, &mut manifest)?;
            ToolCallEnv::from_json(&text, cfg.reward)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        None => ToolCallEnv::synthetic(cfg.reward),
    };
    let initial = env.warm_start_policy(cfg.warm_format_bias, cfg.warm_content_bias);
    let outcome = train_toy(&mut env, initial, algo, steps, seed, &cfg.train)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let rows: Vec<Vec<String>> = outcome
        .trace
        .iter()
        .map(|p| {
            vec![
                p.step.to_string(),
                p.mean_reward.to_string(),
                p.entropy.to_string(),
                p.resp_len.to_string(),
                p.loss.to_string(),
            ]
        })
        .collect();
    let bytes = csv_bytes(
        &["step", "mean_reward", "entropy", "resp_len", "loss"],
        &rows,
    )?;
    emit(common.out.as_deref(), &bytes, &mut manifest)?;

    if let Some(p) = params {
        let policy = &outcome.policy;
        let mut text = format!("{} {}\n", policy.dim(), policy.vocab);
        for row in policy.theta.chunks(policy.vocab) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        fs::write(p, text).map_err(io_err(Some(p)))?;
        manifest.output(p);
    }
    finish(manifest)
}

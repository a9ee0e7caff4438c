//! Tool-call data model: canonical argument values, tool calls, samples and
//! multi-turn dialogues, plus JSON-lines ingestion.
//!
//! Tool-call bodies use the `{"name": ..., "arguments": {...}}` object form.
//! A block may hold several calls, either as consecutive objects or as a
//! JSON array of objects.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::template::ResponseTemplate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolDataError {
    #[error("malformed tool-call body in block {block}: {message}")]
    MalformedBody { block: usize, message: String },
    #[error("invalid record at line {line}: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("dialogue {0} has no turns")]
    EmptyDialogue(String),
    #[error("sample {id}: {message}")]
    InvalidSample { id: String, message: String },
}

/// An exact decimal number: `sign * digits * 10^exponent` with no leading or
/// trailing zeros in `digits`. Zero is the empty digit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Decimal {
    negative: bool,
    digits: String,
    exponent: i64,
}

impl Decimal {
    pub fn zero() -> Self {
        Self {
            negative: false,
            digits: String::new(),
            exponent: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn to_f64(&self) -> f64 {
        self.to_string().parse().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("not a decimal number: {0:?}")]
pub struct DecimalParseError(String);

impl FromStr for Decimal {
    type Err = DecimalParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = || DecimalParseError(text.to_string());
        let s = text.trim();
        let (negative, s) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let (mantissa, exp) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i64>().map_err(|_| err())?),
            None => (s, 0),
        };
        let (int_part, frac_part) = match mantissa.find('.') {
            Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part
            .bytes()
            .chain(frac_part.bytes())
            .all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let mut digits: String = format!("{int_part}{frac_part}");
        let mut exponent = exp.checked_sub(frac_part.len() as i64).ok_or_else(err)?;
        let lead = digits.bytes().take_while(|&b| b == b'0').count();
        digits.drain(..lead);
        let trail = digits.bytes().rev().take_while(|&b| b == b'0').count();
        digits.truncate(digits.len() - trail);
        exponent += trail as i64;
        if digits.is_empty() {
            return Ok(Self::zero());
        }
        Ok(Self {
            negative,
            digits,
            exponent,
        })
    }
}

impl fmt::Display for Decimal {
    /// Renders a valid JSON number. Plain notation for moderate exponents,
    /// scientific otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        if self.negative {
            f.write_str("-")?;
        }
        let n = self.digits.len() as i64;
        let point = n + self.exponent; // position of the decimal point
        if (0..=21).contains(&self.exponent) {
            write!(f, "{}{}", self.digits, "0".repeat(self.exponent as usize))
        } else if self.exponent < 0 && point > 0 {
            let (a, b) = self.digits.split_at(point as usize);
            write!(f, "{a}.{b}")
        } else if self.exponent < 0 && point > -6 {
            write!(f, "0.{}{}", "0".repeat((-point) as usize), self.digits)
        } else {
            let (a, b) = self.digits.split_at(1);
            let e = point - 1;
            if b.is_empty() {
                write!(f, "{a}e{e}")
            } else {
                write!(f, "{a}.{b}e{e}")
            }
        }
    }
}

/// A parameter value in canonical form. Equality is value equality: numbers
/// compare by decimal value, maps ignore key order, strings are byte-exact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CanonicalValue {
    Null,
    Bool(bool),
    Number(Decimal),
    String(String),
    List(Vec<CanonicalValue>),
    Map(BTreeMap<String, CanonicalValue>),
}

/// Canonicalizes a parsed JSON value.
pub fn canonicalize_value(v: &Value) -> CanonicalValue {
    match v {
        Value::Null => CanonicalValue::Null,
        Value::Bool(b) => CanonicalValue::Bool(*b),
        Value::Number(n) => match n.to_string().parse::<Decimal>() {
            Ok(d) => CanonicalValue::Number(d),
            // serde_json only yields finite decimal literals
            Err(_) => CanonicalValue::String(n.to_string()),
        },
        Value::String(s) => CanonicalValue::String(s.clone()),
        Value::Array(items) => CanonicalValue::List(items.iter().map(canonicalize_value).collect()),
        Value::Object(map) => CanonicalValue::Map(
            map.iter()
                .map(|(k, v)| (k.clone(), canonicalize_value(v)))
                .collect(),
        ),
    }
}

impl CanonicalValue {
    pub fn to_json(&self) -> Value {
        match self {
            CanonicalValue::Null => Value::Null,
            CanonicalValue::Bool(b) => Value::Bool(*b),
            CanonicalValue::Number(d) => serde_json::Number::from_str(&d.to_string())
                .map(Value::Number)
                .unwrap_or(Value::Null),
            CanonicalValue::String(s) => Value::String(s.clone()),
            CanonicalValue::List(items) => Value::Array(items.iter().map(Self::to_json).collect()),
            CanonicalValue::Map(map) => {
                Value::Object(map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
            }
        }
    }
}

/// One tool invocation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ToolCall {
    pub name: String,
    pub params: BTreeMap<String, CanonicalValue>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: CanonicalValue) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    /// Builds a call from a `{"name": ..., "arguments": {...}}` object.
    /// `arguments` may also be a JSON-encoded string holding that object.
    pub fn from_json(v: &Value) -> Result<Self, String> {
        let obj = v.as_object().ok_or("tool call is not a JSON object")?;
        let name = obj
            .get("name")
            .and_then(Value::as_str)
            .ok_or("tool call has no string \"name\"")?
            .to_string();
        let params = match obj.get("arguments") {
            None | Some(Value::Null) => BTreeMap::new(),
            Some(Value::Object(args)) => args
                .iter()
                .map(|(k, v)| (k.clone(), canonicalize_value(v)))
                .collect(),
            Some(Value::String(encoded)) => match serde_json::from_str::<Value>(encoded) {
                Ok(Value::Object(args)) => args
                    .iter()
                    .map(|(k, v)| (k.clone(), canonicalize_value(v)))
                    .collect(),
                _ => return Err("\"arguments\" string is not an encoded object".into()),
            },
            Some(_) => return Err("\"arguments\" is not an object".into()),
        };
        Ok(Self { name, params })
    }

    pub fn to_json(&self) -> Value {
        let args: serde_json::Map<String, Value> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        serde_json::json!({ "name": self.name, "arguments": Value::Object(args) })
    }
}

/// The tool calls made (or expected) in one assistant turn.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ToolCallSet {
    pub calls: Vec<ToolCall>,
}

impl ToolCallSet {
    pub fn new(calls: Vec<ToolCall>) -> Self {
        Self { calls }
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    /// First call per tool name, in order of first appearance. Scoring treats
    /// names as a set, so later duplicates are ignored.
    pub fn by_name(&self) -> Vec<&ToolCall> {
        let mut seen = std::collections::BTreeSet::new();
        self.calls
            .iter()
            .filter(|c| seen.insert(c.name.as_str()))
            .collect()
    }

    pub fn from_json_list(v: &Value) -> Result<Self, String> {
        match v {
            Value::Array(items) => items
                .iter()
                .map(ToolCall::from_json)
                .collect::<Result<Vec<_>, _>>()
                .map(Self::new),
            Value::Null => Ok(Self::default()),
            _ => Err("gold_calls is not a list".into()),
        }
    }

    pub fn to_json_list(&self) -> Value {
        Value::Array(self.calls.iter().map(ToolCall::to_json).collect())
    }
}

fn parse_block_body(body: &str) -> Result<Vec<ToolCall>, String> {
    let mut calls = Vec::new();
    for value in serde_json::Deserializer::from_str(body).into_iter::<Value>() {
        let value = value.map_err(|e| e.to_string())?;
        match &value {
            Value::Array(items) => {
                for item in items {
                    calls.push(ToolCall::from_json(item)?);
                }
            }
            other => calls.push(ToolCall::from_json(other)?),
        }
    }
    if calls.is_empty() {
        return Err("empty tool-call block".into());
    }
    Ok(calls)
}

/// Extracts every tool call between call delimiters, in order.
///
/// A response without call delimiters yields an empty set. A block that is
/// unclosed, empty, or not valid call JSON yields `MalformedBody`; scorers
/// treat that as an empty prediction.
pub fn parse_tool_calls(
    raw: &str,
    template: &ResponseTemplate,
) -> Result<ToolCallSet, ToolDataError> {
    let mut calls = Vec::new();
    for (i, block) in template.call_blocks(raw).iter().enumerate() {
        let (s, e) = block.body().ok_or_else(|| ToolDataError::MalformedBody {
            block: i,
            message: format!("missing {}", template.call_close),
        })?;
        let parsed = parse_block_body(&raw[s..e])
            .map_err(|message| ToolDataError::MalformedBody { block: i, message })?;
        calls.extend(parsed);
    }
    Ok(ToolCallSet::new(calls))
}

/// Renders calls as a single delimited block, one JSON object per line.
/// An empty set renders as the empty string.
pub fn render_tool_calls(set: &ToolCallSet, template: &ResponseTemplate) -> String {
    if set.is_empty() {
        return String::new();
    }
    let mut out = template.call_open.clone();
    for call in &set.calls {
        out.push('\n');
        out.push_str(&call.to_json().to_string());
    }
    out.push('\n');
    out.push_str(&template.call_close);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A single-step training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub context: Vec<Message>,
    pub target_response: String,
    pub gold_calls: ToolCallSet,
}

impl Sample {
    pub fn validate(&self) -> Result<(), ToolDataError> {
        let invalid = |message: &str| ToolDataError::InvalidSample {
            id: self.id.clone(),
            message: message.to_string(),
        };
        match self.context.last() {
            None => Err(invalid("empty context")),
            Some(m) if m.role == Role::Assistant => {
                Err(invalid("context must end with a user or tool message"))
            }
            Some(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    /// Messages arriving before this turn's assistant action.
    pub context_delta: Vec<Message>,
    pub action: String,
    pub gold_calls: ToolCallSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub id: String,
    turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self, ToolDataError> {
        let id = id.into();
        if turns.is_empty() {
            return Err(ToolDataError::EmptyDialogue(id));
        }
        Ok(Self { id, turns })
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }
}

/// Splits a K-turn dialogue into K samples. Sample k sees every earlier
/// context delta and assistant action followed by turn k's own delta.
pub fn decompose_dialogue(d: &Dialogue) -> Vec<Sample> {
    let mut history: Vec<Message> = Vec::new();
    let mut out = Vec::with_capacity(d.turns.len());
    for (k, turn) in d.turns.iter().enumerate() {
        history.extend(turn.context_delta.iter().cloned());
        out.push(Sample {
            id: format!("{}#{}", d.id, k),
            context: history.clone(),
            target_response: turn.action.clone(),
            gold_calls: turn.gold_calls.clone(),
        });
        history.push(Message::new(Role::Assistant, turn.action.clone()));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    context: Vec<Message>,
    target: String,
    #[serde(default)]
    gold_calls: Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    #[serde(default)]
    context: Vec<Message>,
    action: String,
    #[serde(default)]
    gold_calls: Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogueRecord {
    id: String,
    turns: Vec<TurnRecord>,
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Sample(Sample),
    Dialogue(Dialogue),
}

impl Record {
    /// Flattens into single-step samples.
    pub fn into_samples(self) -> Vec<Sample> {
        match self {
            Record::Sample(s) => vec![s],
            Record::Dialogue(d) => decompose_dialogue(&d),
        }
    }
}

/// Parses a JSON-lines dataset. Lines with a `turns` field are dialogues;
/// all others are samples. Blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<Record>, ToolDataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| ToolDataError::InvalidRecord {
            line: line_no,
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        if value.get("turns").is_some() {
            let rec: DialogueRecord =
                serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
            let turns = rec
                .turns
                .into_iter()
                .map(|t| {
                    Ok(Turn {
                        context_delta: t.context,
                        action: t.action,
                        gold_calls: ToolCallSet::from_json_list(&t.gold_calls).map_err(invalid)?,
                    })
                })
                .collect::<Result<Vec<_>, ToolDataError>>()?;
            let d = Dialogue::new(rec.id, turns)?;
            for s in decompose_dialogue(&d) {
                s.validate()?;
            }
            out.push(Record::Dialogue(d));
        } else {
            let rec: SampleRecord =
                serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
            let sample = Sample {
                id: rec.id,
                context: rec.context,
                target_response: rec.target,
                gold_calls: ToolCallSet::from_json_list(&rec.gold_calls).map_err(invalid)?,
            };
            sample.validate()?;
            out.push(Record::Sample(sample));
        }
    }
    Ok(out)
}

/// Serializes a sample as one dataset line.
pub fn sample_to_json_line(s: &Sample) -> String {
    let rec = SampleRecord {
        id: s.id.clone(),
        context: s.context.clone(),
        target: s.target_response.clone(),
        gold_calls: s.gold_calls.to_json_list(),
    };
    serde_json::to_string(&rec).expect("sample record serializes")
}

impl PartialOrd for ToolCall {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ToolCall {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.name, &self.params).cmp(&(&other.name, &other.params))
    }
}

//! Byte-level tokenization and deterministic region tagging of responses.
//!
//! Every token falls in exactly one region. Delimiters and JSON punctuation
//! inside call bodies are `Format`, the tool name is `ToolName`, argument keys
//! and values are `Parameter`, text between thought delimiters is `Thought`,
//! and everything else (including whitespace between regions and inside call
//! bodies) is `Other`.

use serde::Serialize;
use std::fmt;

use thiserror::Error;

use crate::template::ResponseTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionTag {
    Format,
    ToolName,
    Parameter,
    Thought,
    Other,
}

impl RegionTag {
    pub const ALL: [RegionTag; 5] = [
        RegionTag::Format,
        RegionTag::ToolName,
        RegionTag::Parameter,
        RegionTag::Thought,
        RegionTag::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegionTag::Format => "format",
            RegionTag::ToolName => "name",
            RegionTag::Parameter => "param",
            RegionTag::Thought => "thought",
            RegionTag::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "format" | "fmt" => Some(RegionTag::Format),
            "name" | "toolname" | "tool_name" => Some(RegionTag::ToolName),
            "param" | "parameter" | "para" => Some(RegionTag::Parameter),
            "thought" | "thk" | "think" => Some(RegionTag::Thought),
            "other" => Some(RegionTag::Other),
            _ => None,
        }
    }
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per region, indexable by [`RegionTag`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PerRegion<T>(pub [T; 5]);

impl<T> std::ops::Index<RegionTag> for PerRegion<T> {
    type Output = T;

    fn index(&self, tag: RegionTag) -> &T {
        &self.0[tag.index()]
    }
}

impl<T> std::ops::IndexMut<RegionTag> for PerRegion<T> {
    fn index_mut(&mut self, tag: RegionTag) -> &mut T {
        &mut self.0[tag.index()]
    }
}

impl<T: Copy> PerRegion<T> {
    pub fn splat(v: T) -> Self {
        Self([v; 5])
    }

    pub fn map<U>(&self, f: impl Fn(RegionTag, T) -> U) -> PerRegion<U> {
        PerRegion(RegionTag::ALL.map(|tag| f(tag, self.0[tag.index()])))
    }
}

/// One token per byte; `char_map[i]` is the byte span of token `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenized {
    pub tokens: Vec<u32>,
    pub char_map: Vec<(usize, usize)>,
}

pub fn tokenize(raw: &str) -> Tokenized {
    let tokens: Vec<u32> = raw.bytes().map(u32::from).collect();
    let char_map = (0..tokens.len()).map(|i| (i, i + 1)).collect();
    Tokenized { tokens, char_map }
}

/// Inverse of [`tokenize`]. Returns `None` if a token is not a byte or the
/// bytes are not UTF-8.
pub fn detokenize(tokens: &[u32]) -> Option<String> {
    let bytes = tokens
        .iter()
        .map(|&t| u8::try_from(t).ok())
        .collect::<Option<Vec<u8>>>()?;
    String::from_utf8(bytes).ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedResponse {
    pub tokens: Vec<u32>,
    pub spans: Vec<RegionTag>,
    pub char_map: Vec<(usize, usize)>,
}

impl TaggedResponse {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for tag in &self.spans {
            c[tag.index()] += 1;
        }
        c
    }

    /// Concatenated text of all tokens carrying `tag`, split into maximal runs.
    pub fn runs(&self, raw: &str, tag: RegionTag) -> Vec<String> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, t) in self
            .spans
            .iter()
            .chain(std::iter::once(&RegionTag::Other))
            .enumerate()
        {
            match (start, *t == tag && i < self.spans.len()) {
                (None, true) => start = Some(i),
                (Some(s), false) => {
                    out.push(raw.as_bytes()[self.char_map[s].0..self.char_map[i - 1].1].to_vec());
                    start = None;
                }
                _ => {}
            }
        }
        out.into_iter()
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .collect()
    }

    /// Region of a token span `[start, end)`: the most frequent tag, ties
    /// broken towards the more specific region (name, parameter, format,
    /// thought, other). Used to lift byte tags to multi-byte vocabulary pieces.
    pub fn dominant_region(&self, start: usize, end: usize) -> RegionTag {
        let mut counts = [0usize; 5];
        for tag in &self.spans[start..end] {
            counts[tag.index()] += 1;
        }
        const PRIORITY: [RegionTag; 5] = [
            RegionTag::ToolName,
            RegionTag::Parameter,
            RegionTag::Format,
            RegionTag::Thought,
            RegionTag::Other,
        ];
        let mut best = RegionTag::Other;
        let mut best_count = 0;
        for tag in PRIORITY {
            if counts[tag.index()] > best_count {
                best = tag;
                best_count = counts[tag.index()];
            }
        }
        best
    }
}

/// Tags each byte of `raw`. Unmatched delimiters are `Format`; the bodies of
/// unclosed or unparseable call blocks are `Other`.
pub fn tag_regions(raw: &str, template: &ResponseTemplate) -> TaggedResponse {
    let Tokenized { tokens, char_map } = tokenize(raw);
    let mut spans = vec![RegionTag::Other; tokens.len()];
    let bytes = raw.as_bytes();
    let delims = [
        template.think_open.as_bytes(),
        template.think_close.as_bytes(),
        template.call_open.as_bytes(),
        template.call_close.as_bytes(),
    ];
    let starts_with = |i: usize, d: &[u8]| !d.is_empty() && bytes[i..].starts_with(d);
    let find_from = |i: usize, d: &[u8]| -> Option<usize> {
        if d.is_empty() {
            return None;
        }
        bytes[i..]
            .windows(d.len())
            .position(|w| w == d)
            .map(|p| p + i)
    };

    let mut i = 0;
    while i < bytes.len() {
        if starts_with(i, delims[0]) {
            let body = i + delims[0].len();
            spans[i..body].fill(RegionTag::Format);
            if let Some(c) = find_from(body, delims[1]) {
                spans[body..c].fill(RegionTag::Thought);
                let end = c + delims[1].len();
                spans[c..end].fill(RegionTag::Format);
                i = end;
            } else {
                i = body;
            }
        } else if starts_with(i, delims[2]) {
            let body = i + delims[2].len();
            spans[i..body].fill(RegionTag::Format);
            if let Some(c) = find_from(body, delims[3]) {
                let mut body_tags = vec![RegionTag::Other; c - body];
                if CallLexer::new(&bytes[body..c], &mut body_tags)
                    .call_body()
                    .is_ok()
                {
                    spans[body..c].copy_from_slice(&body_tags);
                }
                let end = c + delims[3].len();
                spans[c..end].fill(RegionTag::Format);
                i = end;
            } else {
                i = body;
            }
        } else if let Some(d) = [delims[1], delims[3]]
            .into_iter()
            .find(|d| starts_with(i, d))
        {
            spans[i..i + d.len()].fill(RegionTag::Format);
            i += d.len();
        } else {
            i += 1;
        }
    }
    TaggedResponse {
        tokens,
        spans,
        char_map,
    }
}

/// Span-recording recognizer for tool-call JSON bodies.
struct CallLexer<'a> {
    src: &'a [u8],
    tags: &'a mut [RegionTag],
    pos: usize,
}

type LexResult<T> = Result<T, ()>;

impl<'a> CallLexer<'a> {
    fn new(src: &'a [u8], tags: &'a mut [RegionTag]) -> Self {
        Self { src, tags, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn punct(&mut self, c: u8) -> LexResult<()> {
        self.skip_ws();
        if self.peek() != Some(c) {
            return Err(());
        }
        self.tags[self.pos] = RegionTag::Format;
        self.pos += 1;
        Ok(())
    }

    /// Consumes a string literal, tagging quotes `Format` and the contents
    /// `content`. Returns the raw (still escaped) contents.
    fn string(&mut self, content: RegionTag) -> LexResult<&'a [u8]> {
        self.punct(b'"')?;
        let start = self.pos;
        loop {
            match self.peek() {
                None => return Err(()),
                Some(b'\\') => self.pos += 2,
                Some(b'"') => break,
                Some(_) => self.pos += 1,
            }
        }
        if self.pos > self.src.len() {
            return Err(());
        }
        self.tags[start..self.pos].fill(content);
        let text = &self.src[start..self.pos];
        self.tags[self.pos] = RegionTag::Format;
        self.pos += 1;
        Ok(text)
    }

    fn scalar(&mut self, content: RegionTag) -> LexResult<()> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, b'-' | b'+' | b'.') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).map_err(|_| ())?;
        let ok = matches!(text, "true" | "false" | "null")
            || (text.parse::<f64>().is_ok()
                && !text.contains(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E'));
        if !ok {
            return Err(());
        }
        self.tags[start..self.pos].fill(content);
        Ok(())
    }

    /// Any JSON value; keys and scalar contents get `content`.
    fn value(&mut self, content: RegionTag) -> LexResult<()> {
        self.skip_ws();
        match self.peek().ok_or(())? {
            b'{' => {
                self.punct(b'{')?;
                self.skip_ws();
                if self.peek() == Some(b'}') {
                    return self.punct(b'}');
                }
                loop {
                    self.string(content)?;
                    self.punct(b':')?;
                    self.value(content)?;
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.punct(b',')?,
                        Some(b'}') => return self.punct(b'}'),
                        _ => return Err(()),
                    }
                }
            }
            b'[' => {
                self.punct(b'[')?;
                self.skip_ws();
                if self.peek() == Some(b']') {
                    return self.punct(b']');
                }
                loop {
                    self.value(content)?;
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.punct(b',')?,
                        Some(b']') => return self.punct(b']'),
                        _ => return Err(()),
                    }
                }
            }
            b'"' => self.string(content).map(|_| ()),
            _ => self.scalar(content),
        }
    }

    fn call_object(&mut self) -> LexResult<()> {
        self.punct(b'{')?;
        self.skip_ws();
        if self.peek() == Some(b'}') {
            return self.punct(b'}');
        }
        loop {
            let key = self.string(RegionTag::Format)?;
            self.punct(b':')?;
            match key {
                b"name" => {
                    self.string(RegionTag::ToolName)?;
                }
                b"arguments" | b"parameters" => {
                    self.skip_ws();
                    if self.peek() == Some(b'"') {
                        // JSON-encoded arguments: contents are all parameter text
                        self.string(RegionTag::Parameter)?;
                    } else {
                        self.value(RegionTag::Parameter)?;
                    }
                }
                _ => self.value(RegionTag::Other)?,
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.punct(b',')?,
                Some(b'}') => return self.punct(b'}'),
                _ => return Err(()),
            }
        }
    }

    fn call_body(&mut self) -> LexResult<()> {
        let mut seen = false;
        loop {
            self.skip_ws();
            match self.peek() {
                None => return if seen { Ok(()) } else { Err(()) },
                Some(b'[') => {
                    self.punct(b'[')?;
                    loop {
                        self.skip_ws();
                        self.call_object()?;
                        self.skip_ws();
                        match self.peek() {
                            Some(b',') => self.punct(b',')?,
                            Some(b']') => {
                                self.punct(b']')?;
                                break;
                            }
                            _ => return Err(()),
                        }
                    }
                }
                Some(b'{') => self.call_object()?,
                Some(_) => return Err(()),
            }
            seen = true;
        }
    }
}

/// Count and mean entropy for one region. `mean_entropy` is `None` when the
/// region has no tokens, which is distinct from zero entropy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegionStat {
    pub count: usize,
    pub mean_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionEntropy {
    stats: [RegionStat; 5],
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegionError {
    #[error("entropy list has {entropies} entries but the response has {tokens} tokens")]
    LengthMismatch { tokens: usize, entropies: usize },
    #[error("entropy at token {0} is negative or not finite")]
    InvalidEntropy(usize),
}

impl RegionEntropy {
    /// Builds stats from parallel (region, entropy) observations.
    pub fn from_observations<I>(obs: I) -> Result<Self, RegionError>
    where
        I: IntoIterator<Item = (RegionTag, f64)>,
    {
        let mut sums = [0.0f64; 5];
        let mut counts = [0usize; 5];
        for (i, (tag, h)) in obs.into_iter().enumerate() {
            if !(h.is_finite() && h >= 0.0) {
                return Err(RegionError::InvalidEntropy(i));
            }
            sums[tag.index()] += h;
            counts[tag.index()] += 1;
        }
        let mut stats = [RegionStat::default(); 5];
        for r in 0..5 {
            stats[r] = RegionStat {
                count: counts[r],
                mean_entropy: (counts[r] > 0).then(|| sums[r] / counts[r] as f64),
            };
        }
        Ok(Self { stats })
    }

    pub fn get(&self, tag: RegionTag) -> RegionStat {
        self.stats[tag.index()]
    }

    pub fn mean(&self, tag: RegionTag) -> Option<f64> {
        self.stats[tag.index()].mean_entropy
    }

    pub fn total_count(&self) -> usize {
        self.stats.iter().map(|s| s.count).sum()
    }
}

pub fn region_entropy_stats(
    tagged: &TaggedResponse,
    per_token_entropy: &[f64],
) -> Result<RegionEntropy, RegionError> {
    if tagged.len() != per_token_entropy.len() {
        return Err(RegionError::LengthMismatch {
            tokens: tagged.len(),
            entropies: per_token_entropy.len(),
        });
    }
    RegionEntropy::from_observations(
        tagged
            .spans
            .iter()
            .copied()
            .zip(per_token_entropy.iter().copied()),
    )
}

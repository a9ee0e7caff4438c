//! Response markup delimiters and block scanning.

use serde::{Deserialize, Serialize};

/// Delimiters framing the thought section and the tool-call section of an
/// assistant response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTemplate {
    pub think_open: String,
    pub think_close: String,
    pub call_open: String,
    pub call_close: String,
}

impl Default for ResponseTemplate {
    fn default() -> Self {
        Self {
            think_open: "<think>".to_string(),
            think_close: "</think>".to_string(),
            call_open: "<tool_call>".to_string(),
            call_close: "</tool_call>".to_string(),
        }
    }
}

/// A delimited block located in a raw response. All offsets are byte offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub open: (usize, usize),
    /// `None` when the opener is never closed.
    pub close: Option<(usize, usize)>,
}

impl Block {
    /// Byte range strictly between the delimiters.
    pub fn body(&self) -> Option<(usize, usize)> {
        self.close.map(|(c, _)| (self.open.1, c))
    }
}

impl ResponseTemplate {
    /// Tool-call blocks in order of appearance. An opener without a matching
    /// closer ends the scan.
    pub fn call_blocks(&self, raw: &str) -> Vec<Block> {
        find_blocks(raw, &self.call_open, &self.call_close)
    }

    pub fn think_blocks(&self, raw: &str) -> Vec<Block> {
        find_blocks(raw, &self.think_open, &self.think_close)
    }
}

pub(crate) fn find_blocks(raw: &str, open: &str, close: &str) -> Vec<Block> {
    let mut blocks = Vec::new();
    if open.is_empty() || close.is_empty() {
        return blocks;
    }
    let mut cursor = 0;
    while let Some(rel) = raw[cursor..].find(open) {
        let o = cursor + rel;
        let body_start = o + open.len();
        match raw[body_start..].find(close) {
            Some(crel) => {
                let c = body_start + crel;
                blocks.push(Block {
                    open: (o, body_start),
                    close: Some((c, c + close.len())),
                });
                cursor = c + close.len();
            }
            None => {
                blocks.push(Block {
                    open: (o, body_start),
                    close: None,
                });
                break;
            }
        }
    }
    blocks
}

pub(crate) fn count_occurrences(haystack: &str, needle: &str) -> usize {
    if needle.is_empty() {
        return 0;
    }
    haystack.match_indices(needle).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_closed_and_unclosed_blocks() {
        let t = ResponseTemplate::default();
        let raw = "a<tool_call>x</tool_call>b<tool_call>y";
        let blocks = t.call_blocks(raw);
        assert_eq!(blocks.len(), 2);
        let (s, e) = blocks[0].body().unwrap();
        assert_eq!(&raw[s..e], "x");
        assert!(blocks[1].close.is_none());
    }

    #[test]
    fn no_blocks_in_plain_text() {
        assert!(ResponseTemplate::default().call_blocks("hello").is_empty());
    }
}

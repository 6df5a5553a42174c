//! Fenced code block extraction from model responses.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    pub language: Option<String>,
    pub source: String,
}

fn fence_open(line: &str) -> Option<(&str, Option<String>)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let t = &line[indent..];
    let marker = if t.starts_with("```") {
        "```"
    } else if t.starts_with("~~~") {
        "~~~"
    } else {
        return None;
    };
    let info = t.trim_start_matches(marker.chars().next().unwrap()).trim();
    let lang = info.split_whitespace().next().map(str::to_string);
    Some((marker, lang))
}

fn is_fence_close(line: &str, marker: &str) -> bool {
    let t = line.trim();
    let c = marker.chars().next().unwrap();
    t.len() >= 3 && t.chars().all(|x| x == c)
}

/// All fenced blocks in order. With no fences at all, the whole text is
/// returned as a single untagged block. An unterminated fence runs to the end.
pub fn extract_code_blocks(text: &str) -> Vec<CodeBlock> {
    let mut blocks = Vec::new();
    let mut current: Option<(&str, Option<String>, Vec<&str>)> = None;
    for line in text.lines() {
        match current.as_mut() {
            None => {
                if let Some((marker, lang)) = fence_open(line) {
                    current = Some((marker, lang, Vec::new()));
                }
            }
            Some((marker, _, body)) => {
                if is_fence_close(line, marker) {
                    let (_, lang, body) = current.take().unwrap();
                    blocks.push(CodeBlock {
                        language: lang,
                        source: body.join("\n"),
                    });
                } else {
                    body.push(line);
                }
            }
        }
    }
    if let Some((_, lang, body)) = current {
        blocks.push(CodeBlock {
            language: lang,
            source: body.join("\n"),
        });
    }
    if blocks.is_empty() {
        blocks.push(CodeBlock {
            language: None,
            source: text.to_string(),
        });
    }
    blocks
}

/// Source of the first block, or `None` when it is blank.
pub fn first_code_block(text: &str) -> Option<String> {
    extract_code_blocks(text)
        .into_iter()
        .next()
        .map(|b| b.source)
        .filter(|s| !s.trim().is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent fence splitter: alternate segments between "```" markers.
    fn reference_blocks(text: &str) -> Vec<String> {
        text.split("```")
            .skip(1)
            .step_by(2)
            .map(|seg| {
                let (_, body) = seg.split_once('\n').unwrap_or(("", ""));
                body.strip_suffix('\n').unwrap_or(body).to_string()
            })
            .collect()
    }

    #[test]
    fn single_tagged_block() {
        let text = "Here:\n```python\ndef f():\n    return 1\n```\nDone.";
        let blocks = extract_code_blocks(text);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].language.as_deref(), Some("python"));
        assert_eq!(blocks[0].source, "def f():\n    return 1");
    }

    #[test]
    fn no_fence_returns_whole_text() {
        let text = "just prose, no code";
        let blocks = extract_code_blocks(text);
        assert_eq!(blocks, vec![CodeBlock { language: None, source: text.into() }]);
    }

    #[test]
    fn two_blocks_match_reference_parser() {
        let text = "a\n```python\nx = 1\n```\nmiddle\n```\ny = 2\nz = 3\n```\nend\n";
        let blocks = extract_code_blocks(text);
        let got: Vec<String> = blocks.iter().map(|b| b.source.clone()).collect();
        assert_eq!(got, reference_blocks(text));
        assert_eq!(blocks[0].language.as_deref(), Some("python"));
        assert_eq!(blocks[1].language, None);
    }

    #[test]
    fn unterminated_fence_runs_to_end() {
        let blocks = extract_code_blocks("```py\nprint(1)\n");
        assert_eq!(blocks[0].source, "print(1)");
    }

    #[test]
    fn blank_first_block_is_none() {
        assert_eq!(first_code_block("```\n\n```"), None);
        assert_eq!(first_code_block("  "), None);
    }
}

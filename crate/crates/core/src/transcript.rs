//! Transcript parsing and answer judging.
//!
//! Raw agent transcripts are tag-structured text: a sequence of turns
//! (`<think>` optionally followed by one tool call/result pair), then a
//! final `<answer>` block and a `<confidence>` block holding an integer
//! percent. Parsing is total: malformed input never fails, it just comes
//! back with `format_valid = false` and a list of violation descriptions.
//!
//! The accepted grammar is
//!
//! ```text
//! trajectory := turn+ answer confidence
//! turn       := think [call result]
//! ```
//!
//! with whitespace permitted between blocks and nothing else. Duplicate
//! `<answer>`/`<confidence>` blocks invalidate the format but extraction
//! still proceeds, taking the last well-formed block of each kind.

use serde::{Deserialize, Serialize};
use std::io::BufRead;
use thiserror::Error;

const THINK_TAG: &str = "think";
const ANSWER_TAG: &str = "answer";
const CONFIDENCE_TAG: &str = "confidence";

/// Error constructing a [`ToolSchema`] from tag names.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("tag name must be nonempty")]
    EmptyTag,
    #[error("tag name {0:?} contains whitespace or angle brackets")]
    BadTagName(String),
    #[error("call and result tags must differ, both were {0:?}")]
    EqualTags(String),
    #[error("tag name {0:?} collides with a reserved structural tag")]
    ReservedTag(String),
}

/// Tag pair naming one tool family: the call tag wraps the request the
/// agent emits and the result tag wraps what the environment returns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    call_tag: String,
    result_tag: String,
}

impl ToolSchema {
    pub fn new(call_tag: &str, result_tag: &str) -> Result<Self, SchemaError> {
        for tag in [call_tag, result_tag] {
            if tag.is_empty() {
                return Err(SchemaError::EmptyTag);
            }
            if tag.chars().any(|c| c.is_whitespace() || c == '<' || c == '>') {
                return Err(SchemaError::BadTagName(tag.to_string()));
            }
            if [THINK_TAG, ANSWER_TAG, CONFIDENCE_TAG].contains(&tag) {
                return Err(SchemaError::ReservedTag(tag.to_string()));
            }
        }
        if call_tag == result_tag {
            return Err(SchemaError::EqualTags(call_tag.to_string()));
        }
        Ok(Self {
            call_tag: call_tag.to_string(),
            result_tag: result_tag.to_string(),
        })
    }

    /// Web-search style tools: `<search>` queries answered by `<information>`.
    pub fn search() -> Self {
        Self::new("search", "information").expect("static tags are valid")
    }

    /// Code-interpreter style tools: `<code>` programs answered by `<output>`.
    pub fn code() -> Self {
        Self::new("code", "output").expect("static tags are valid")
    }

    pub fn call_tag(&self) -> &str {
        &self.call_tag
    }

    pub fn result_tag(&self) -> &str {
        &self.result_tag
    }
}

/// Named tool schema selector, as it appears in corpus files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Search,
    Code,
}

impl SchemaKind {
    pub fn schema(self) -> ToolSchema {
        match self {
            SchemaKind::Search => ToolSchema::search(),
            SchemaKind::Code => ToolSchema::code(),
        }
    }
}

/// One reasoning turn: free-text thought plus an optional tool interaction.
///
/// A `tool_result` can only be present when `tool_call` is — observations
/// follow actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub think: String,
    pub tool_call: Option<String>,
    pub tool_result: Option<String>,
}

/// Structured view of one transcript.
///
/// `confidence_raw` is the integer percent extracted from the confidence
/// tag; [`ParsedTrajectory::confidence`] converts it to the unit interval.
/// `format_valid` is true only when the transcript matches the grammar
/// exactly; `violations` lists every defect found otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTrajectory {
    pub turns: Vec<Turn>,
    pub answer: Option<String>,
    pub confidence_raw: Option<u8>,
    pub format_valid: bool,
    pub tool_call_count: usize,
    pub violations: Vec<String>,
}

impl ParsedTrajectory {
    /// Verbalized confidence as a fraction: `confidence_raw / 100`.
    pub fn confidence(&self) -> Option<f64> {
        self.confidence_raw.map(|raw| f64::from(raw) / 100.0)
    }
}

/// One evaluation case: a raw transcript plus its acceptable gold answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryCase {
    pub id: String,
    pub transcript: String,
    pub gold: Vec<String>,
    pub tool_schema: SchemaKind,
}

/// Error reading a trajectory corpus file.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid case record: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: case {id:?} has an empty gold set")]
    EmptyGold { line: usize, id: String },
    #[error("line {line}: duplicate case id {id:?}")]
    DuplicateId { line: usize, id: String },
}

/// Read a JSON-lines trajectory corpus, validating id uniqueness and
/// nonempty gold sets. Blank lines are skipped.
pub fn read_cases<R: BufRead>(reader: R) -> Result<Vec<TrajectoryCase>, CorpusError> {
    let mut cases = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let case: TrajectoryCase =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                line: lineno,
                source,
            })?;
        if case.gold.is_empty() {
            return Err(CorpusError::EmptyGold {
                line: lineno,
                id: case.id,
            });
        }
        if !seen.insert(case.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: lineno,
                id: case.id,
            });
        }
        cases.push(case);
    }
    Ok(cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Think,
    Call,
    Result,
    Answer,
    Confidence,
}

#[derive(Debug)]
struct Block {
    kind: BlockKind,
    content: String,
}

/// Split raw text into well-formed tag blocks, recording stray text,
/// unclosed tags, and nested tag markup as violations instead of failing.
fn tokenize(text: &str, schema: &ToolSchema) -> (Vec<Block>, Vec<String>) {
    let tags: [(&str, BlockKind); 5] = [
        (THINK_TAG, BlockKind::Think),
        (schema.call_tag(), BlockKind::Call),
        (schema.result_tag(), BlockKind::Result),
        (ANSWER_TAG, BlockKind::Answer),
        (CONFIDENCE_TAG, BlockKind::Confidence),
    ];
    let mut blocks = Vec::new();
    let mut violations = Vec::new();
    let mut rest = text;
    let mut stray_reported = false;

    loop {
        // Earliest opening tag among the five known ones.
        let next = tags
            .iter()
            .filter_map(|(name, kind)| {
                rest.find(format!("<{name}>").as_str())
                    .map(|pos| (pos, *name, *kind))
            })
            .min_by_key(|(pos, _, _)| *pos);

        let Some((pos, name, kind)) = next else {
            if !rest.trim().is_empty() && !stray_reported {
                violations.push("stray text outside tag blocks".to_string());
            }
            break;
        };

        if !rest[..pos].trim().is_empty() && !stray_reported {
            violations.push("stray text outside tag blocks".to_string());
            stray_reported = true;
        }

        let open_len = name.len() + 2;
        let body_start = pos + open_len;
        let close = format!("</{name}>");
        match rest[body_start..].find(close.as_str()) {
            Some(rel) => {
                let content = &rest[body_start..body_start + rel];
                if contains_tag_markup(content, &tags) {
                    violations.push(format!("nested tag markup inside <{name}> block"));
                } else {
                    blocks.push(Block {
                        kind,
                        content: content.to_string(),
                    });
                }
                rest = &rest[body_start + rel + close.len()..];
            }
            None => {
                violations.push(format!("unclosed <{name}> tag"));
                rest = &rest[body_start..];
            }
        }
    }

    (blocks, violations)
}

fn contains_tag_markup(content: &str, tags: &[(&str, BlockKind); 5]) -> bool {
    tags.iter().any(|(name, _)| {
        content.contains(format!("<{name}>").as_str())
            || content.contains(format!("</{name}>").as_str())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WalkState {
    Start,
    AfterThink,
    AfterCall,
    AfterResult,
    AfterAnswer,
    AfterConfidence,
}

/// Parse raw transcript text into a [`ParsedTrajectory`].
///
/// Never fails: structural defects surface as `format_valid = false` plus
/// violation descriptions. Extraction takes the last well-formed answer
/// block and the last confidence block holding an integer in `0..=100`;
/// out-of-range or non-integer confidence content yields no confidence.
pub fn parse_trajectory(text: &str, schema: &ToolSchema) -> ParsedTrajectory {
    let (blocks, mut violations) = tokenize(text, schema);

    let mut turns: Vec<Turn> = Vec::new();
    let mut current: Option<Turn> = None;
    let mut answers: Vec<String> = Vec::new();
    let mut confidences: Vec<u8> = Vec::new();
    let mut confidence_blocks = 0usize;
    let mut answer_blocks = 0usize;
    let mut state = WalkState::Start;
    let call_tag = schema.call_tag();
    let result_tag = schema.result_tag();

    for block in blocks {
        if state == WalkState::AfterConfidence {
            violations.push("trailing content after <confidence> block".to_string());
        }
        match block.kind {
            BlockKind::Think => {
                if state == WalkState::AfterCall {
                    violations.push(format!(
                        "<{call_tag}> call not followed by <{result_tag}> result"
                    ));
                }
                if state == WalkState::AfterAnswer {
                    violations.push("turn content after <answer> block".to_string());
                }
                if let Some(turn) = current.take() {
                    turns.push(turn);
                }
                current = Some(Turn {
                    think: block.content,
                    tool_call: None,
                    tool_result: None,
                });
                state = WalkState::AfterThink;
            }
            BlockKind::Call => {
                match state {
                    WalkState::AfterThink => {}
                    WalkState::AfterCall => violations.push(format!(
                        "<{call_tag}> call not followed by <{result_tag}> result"
                    )),
                    _ => violations
                        .push(format!("<{call_tag}> call without preceding <think>")),
                }
                match current {
                    Some(ref mut turn) if turn.tool_call.is_none() => {
                        turn.tool_call = Some(block.content);
                    }
                    _ => {
                        if let Some(turn) = current.take() {
                            turns.push(turn);
                        }
                        current = Some(Turn {
                            think: String::new(),
                            tool_call: Some(block.content),
                            tool_result: None,
                        });
                    }
                }
                state = WalkState::AfterCall;
            }
            BlockKind::Result => {
                if state == WalkState::AfterCall {
                    if let Some(ref mut turn) = current {
                        turn.tool_result = Some(block.content);
                    }
                    state = WalkState::AfterResult;
                } else {
                    violations.push(format!(
                        "<{result_tag}> result without preceding <{call_tag}> call"
                    ));
                }
            }
            BlockKind::Answer => {
                answer_blocks += 1;
                if answer_blocks > 1 {
                    violations.push("multiple <answer> blocks".to_string());
                }
                if state == WalkState::AfterCall {
                    violations.push(format!(
                        "<{call_tag}> call not followed by <{result_tag}> result"
                    ));
                }
                answers.push(block.content);
                state = WalkState::AfterAnswer;
            }
            BlockKind::Confidence => {
                confidence_blocks += 1;
                if confidence_blocks > 1 {
                    violations.push("multiple <confidence> blocks".to_string());
                }
                if state != WalkState::AfterAnswer && state != WalkState::AfterConfidence {
                    violations
                        .push("<confidence> block must immediately follow <answer>".to_string());
                }
                match parse_confidence(&block.content) {
                    Some(value) => confidences.push(value),
                    None => violations.push(format!(
                        "confidence value {:?} is not an integer in 0..=100",
                        block.content.trim()
                    )),
                }
                state = WalkState::AfterConfidence;
            }
        }
    }

    if let Some(turn) = current.take() {
        turns.push(turn);
    }
    if state == WalkState::AfterCall {
        violations.push(format!(
            "<{call_tag}> call not followed by <{result_tag}> result"
        ));
    }
    if turns.is_empty() {
        violations.push("transcript contains no <think> turns".to_string());
    }
    if answer_blocks == 0 {
        violations.push("missing <answer> block".to_string());
    }
    if confidence_blocks == 0 {
        violations.push("missing <confidence> block".to_string());
    }

    let tool_call_count = turns.iter().filter(|t| t.tool_call.is_some()).count();
    let mut trajectory = ParsedTrajectory {
        turns,
        answer: answers.pop(),
        confidence_raw: confidences.pop(),
        format_valid: false,
        tool_call_count,
        violations,
    };
    trajectory.format_valid = validate_format(&trajectory);
    trajectory
}

fn parse_confidence(content: &str) -> Option<u8> {
    let trimmed = content.trim();
    if trimmed.is_empty() || trimmed.starts_with('+') {
        return None;
    }
    match trimmed.parse::<i64>() {
        Ok(value) if (0..=100).contains(&value) => Some(value as u8),
        _ => None,
    }
}

/// Extended format constraint: nonempty turns, every tool call answered by
/// a result, exactly one answer block after the final turn, exactly one
/// in-range confidence block after the answer — and no other defects.
pub fn validate_format(trajectory: &ParsedTrajectory) -> bool {
    trajectory.violations.is_empty()
        && !trajectory.turns.is_empty()
        && trajectory
            .turns
            .iter()
            .all(|t| t.tool_call.is_none() || t.tool_result.is_some())
        && trajectory.answer.is_some()
        && trajectory.confidence_raw.is_some()
}

/// Render a trajectory back to canonical tag text (no inter-block
/// whitespace). Re-parsing the output of a valid trajectory reproduces it
/// exactly.
pub fn to_tag_text(trajectory: &ParsedTrajectory, schema: &ToolSchema) -> String {
    let mut out = String::new();
    for turn in &trajectory.turns {
        out.push_str(&format!("<{0}>{1}</{0}>", THINK_TAG, turn.think));
        if let Some(call) = &turn.tool_call {
            out.push_str(&format!("<{0}>{1}</{0}>", schema.call_tag(), call));
        }
        if let Some(result) = &turn.tool_result {
            out.push_str(&format!("<{0}>{1}</{0}>", schema.result_tag(), result));
        }
    }
    if let Some(answer) = &trajectory.answer {
        out.push_str(&format!("<{0}>{1}</{0}>", ANSWER_TAG, answer));
    }
    if let Some(raw) = trajectory.confidence_raw {
        out.push_str(&format!("<{0}>{1}</{0}>", CONFIDENCE_TAG, raw));
    }
    out
}

/// Open-domain QA answer normalization: lowercase, drop ASCII punctuation,
/// drop the articles "a"/"an"/"the", collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped
        .split_whitespace()
        .filter(|word| !matches!(*word, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized exact match against any gold answer. Substring matches do
/// not count. Returns false on an empty gold set.
pub fn exact_match<S: AsRef<str>>(pred: &str, gold: &[S]) -> bool {
    let normalized = normalize_answer(pred);
    gold.iter()
        .any(|g| normalize_answer(g.as_ref()) == normalized)
}

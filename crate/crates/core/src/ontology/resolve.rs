use serde::{Deserialize, Serialize};

use super::{render_prompt, ChatClient, OntologyGraph};
use crate::error::{Error, Result};

/// A task instruction in natural language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    text: String,
    target_class_hint: Option<String>,
}

impl Instruction {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(Error::InvalidArgument("instruction text is empty".into()));
        }
        Ok(Self {
            text,
            target_class_hint: None,
        })
    }

    pub fn with_class_hint(mut self, class: impl Into<String>) -> Self {
        self.target_class_hint = Some(class.into().trim().to_lowercase());
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn target_class_hint(&self) -> Option<&str> {
        self.target_class_hint.as_deref()
    }
}

/// The functional part an instruction targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedPart {
    pub object_class: String,
    /// Dot-separated path, e.g. `body.outside`.
    pub part_path: String,
    /// Original (novel) object name when the class came from a closest-object mapping.
    pub mapped_from: Option<String>,
    pub raw_reasoning: String,
}

pub fn resolve(
    graph: &OntologyGraph,
    instruction: &Instruction,
    client: &dyn ChatClient,
    novel_extension: bool,
) -> Result<ResolvedPart> {
    if graph.is_empty() {
        return Err(Error::InvalidArgument("ontology is empty".into()));
    }
    let prompt = render_prompt(graph, instruction, novel_extension);
    let response = client.complete(&prompt)?;
    interpret_response(graph, instruction, &response, novel_extension)
}

/// Extracts the class and part path from a model response.
pub fn interpret_response(
    graph: &OntologyGraph,
    instruction: &Instruction,
    response: &str,
    novel_extension: bool,
) -> Result<ResolvedPart> {
    let conclusion = conclusion_line(response).ok_or(Error::MissingConclusion)?;

    let named = instruction
        .target_class_hint()
        .map(str::to_string)
        .or_else(|| find_class(graph, instruction.text()));
    let (object_class, mapped_from) = match named {
        Some(c) if graph.has_class(&c) => (c, None),
        other => {
            if !novel_extension {
                return Err(Error::UnresolvedPart(match other {
                    Some(c) => format!("object class `{c}` is not in the ontology"),
                    None => "instruction names no object class from the ontology".to_string(),
                }));
            }
            let (novel, known) = find_mapping(graph, response).ok_or_else(|| {
                Error::UnresolvedPart("novel object without a closest-object mapping in the response".into())
            })?;
            (known, Some(other.unwrap_or(novel)))
        }
    };

    let part_path = match_part(graph, &object_class, &conclusion)?;
    Ok(ResolvedPart {
        object_class,
        part_path,
        mapped_from,
        raw_reasoning: response.to_string(),
    })
}

/// Text after the last `Conclusion` marker, markdown emphasis stripped.
fn conclusion_line(response: &str) -> Option<String> {
    let line = response
        .lines()
        .rev()
        .find(|l| l.to_lowercase().contains("conclusion"))?;
    let lower = line.to_lowercase();
    let at = lower.rfind("conclusion")? + "conclusion".len();
    let rest = line[at..].trim_start_matches(['*', '_', ':', ' ']);
    Some(rest.trim().to_string())
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn word_matches(word: &str, name: &str) -> bool {
    word == name
        || word.strip_suffix('s') == Some(name)
        || word.strip_suffix("es") == Some(name)
        || word.strip_suffix("'s") == Some(name)
}

/// Whether `phrase` (possibly several words) occurs as a word sequence in `text_words`.
fn contains_phrase(text_words: &[String], phrase: &str) -> bool {
    let pw = words(phrase);
    if pw.is_empty() || pw.len() > text_words.len() {
        return false;
    }
    text_words
        .windows(pw.len())
        .any(|w| w.iter().zip(&pw).all(|(t, p)| word_matches(t, p)))
}

fn find_class(graph: &OntologyGraph, text: &str) -> Option<String> {
    let tw = words(text);
    graph
        .class_names()
        .filter(|c| contains_phrase(&tw, c))
        .max_by_key(|c| c.len())
        .map(str::to_string)
}

/// Finds `X ≈ Known` (or `~`, `=`, `→`) in a mapping line of the response.
fn find_mapping(graph: &OntologyGraph, response: &str) -> Option<(String, String)> {
    for line in response.lines() {
        let lower = line.to_lowercase().replace('*', "");
        if !lower.contains("map") {
            continue;
        }
        let body = match lower.find("map") {
            Some(i) => lower[i..]
                .split_once(':')
                .map(|(_, r)| r.to_string())
                .unwrap_or_else(|| lower[i + 3..].to_string()),
            None => continue,
        };
        for sep in ["≈", "~", "=", "→", "->"] {
            if let Some((lhs, rhs)) = body.split_once(sep) {
                let rw = words(rhs);
                let known = graph.class_names().filter(|c| contains_phrase(&rw, c)).min_by_key(|c| {
                    let cw = words(c);
                    rw.iter().position(|w| word_matches(w, &cw[0])).unwrap_or(usize::MAX)
                });
                if let Some(known) = known {
                    let novel = words(lhs).join(" ");
                    return Some((novel, known.to_string()));
                }
            }
        }
    }
    None
}

/// Picks the single deepest part path whose segments all appear in the
/// conclusion; falls back to a unique leaf-name match.
fn match_part(graph: &OntologyGraph, class: &str, conclusion: &str) -> Result<String> {
    let tw = words(conclusion);
    let paths = graph.part_paths(class);
    let full: Vec<&String> = paths
        .iter()
        .filter(|p| p.split('.').all(|seg| contains_phrase(&tw, seg)))
        .collect();
    let maximal = |cands: &[&String]| -> Vec<String> {
        cands
            .iter()
            .filter(|p| {
                !cands
                    .iter()
                    .any(|q| q.len() > p.len() && q.starts_with(p.as_str()) && q.as_bytes()[p.len()] == b'.')
            })
            .map(|p| p.to_string())
            .collect()
    };
    let mut found = maximal(&full);
    if found.is_empty() {
        let by_leaf: Vec<&String> = paths
            .iter()
            .filter(|p| p.rsplit('.').next().is_some_and(|leaf| contains_phrase(&tw, leaf)))
            .collect();
        found = maximal(&by_leaf);
    }
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(Error::UnresolvedPart(format!(
            "conclusion `{conclusion}` names no part of `{class}`"
        ))),
        _ => Err(Error::UnresolvedPart(format!(
            "conclusion `{conclusion}` names several parts of `{class}`: {}",
            found.join(", ")
        ))),
    }
}

//! Executor / Evaluator / Improver loop for refining a prompt with a human
//! (or scripted) supervisor in the loop.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ChatClient;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Critique(String),
}

pub trait Evaluator {
    fn judge(&mut self, prompt: &str, answer: &str) -> Result<Verdict>;
}

/// Replays verdicts from a transcript: one verdict per non-empty line,
/// `accept` accepts, anything else is a critique. `#` lines are comments.
#[derive(Debug, Clone)]
pub struct ScriptedEvaluator {
    verdicts: VecDeque<Verdict>,
}

impl ScriptedEvaluator {
    pub fn new(verdicts: impl IntoIterator<Item = Verdict>) -> Self {
        Self {
            verdicts: verdicts.into_iter().collect(),
        }
    }

    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| {
                    if l.eq_ignore_ascii_case("accept") {
                        Verdict::Accept
                    } else {
                        Verdict::Critique(l.to_string())
                    }
                }),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }
}

impl Evaluator for ScriptedEvaluator {
    fn judge(&mut self, _prompt: &str, _answer: &str) -> Result<Verdict> {
        self.verdicts
            .pop_front()
            .ok_or_else(|| Error::InvalidArgument("evaluator script exhausted".into()))
    }
}

/// Turn-based terminal session: shows the answer, reads one line of feedback.
/// An empty line, `y` or `accept` accepts.
pub struct TerminalEvaluator<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalEvaluator<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Evaluator for TerminalEvaluator<R, W> {
    fn judge(&mut self, _prompt: &str, answer: &str) -> Result<Verdict> {
        let io_err = |e| Error::io("<terminal>", e);
        writeln!(
            self.output,
            "--- executor answer ---\n{answer}\n-----------------------"
        )
        .map_err(io_err)?;
        write!(self.output, "feedback (empty or `accept` to finish): ").map_err(io_err)?;
        self.output.flush().map_err(io_err)?;
        let mut line = String::new();
        self.input.read_line(&mut line).map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() || line.eq_ignore_ascii_case("accept") || line.eq_ignore_ascii_case("y") {
            Ok(Verdict::Accept)
        } else {
            Ok(Verdict::Critique(line.to_string()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Executor,
    Evaluator,
    Improver,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: usize,
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Optimization {
    pub prompt: String,
    pub rounds: usize,
    pub transcript: Vec<TranscriptEntry>,
}

/// Meta-prompt asking the model to rewrite `prompt` given supervisor feedback.
pub fn improver_prompt(prompt: &str, answer: &str, critique: &str) -> String {
    format!(
        "You are helping to improve a prompt given to a language model.\n\n\
         Current prompt:\n\"\"\"\n{prompt}\n\"\"\"\n\n\
         The model answered:\n\"\"\"\n{answer}\n\"\"\"\n\n\
         Supervisor feedback:\n{critique}\n\n\
         How can we improve the prompt to obtain correct answers? \
         Write the complete improved prompt after a line starting with \"Revised Prompt:\"."
    )
}

/// Pulls the revised prompt out of an improver response.
pub fn extract_revised_prompt(response: &str) -> String {
    let lower = response.to_lowercase();
    let body = match lower.find("revised prompt:") {
        Some(i) => &response[i + "revised prompt:".len()..],
        None => response,
    };
    let body = body.trim();
    let open = body.chars().next();
    let close = match open {
        Some('"') => Some('"'),
        Some('“') => Some('”'),
        Some('\'') => Some('\''),
        _ => None,
    };
    match (open, close) {
        (Some(o), Some(c)) => {
            let inner = &body[o.len_utf8()..];
            match inner.rfind(c) {
                Some(end) => inner[..end].trim().to_string(),
                None => inner.trim().to_string(),
            }
        }
        _ => body.to_string(),
    }
}

pub fn optimize_prompt(
    seed_prompt: &str,
    client: &dyn ChatClient,
    evaluator: &mut dyn Evaluator,
    max_rounds: usize,
) -> Result<Optimization> {
    if max_rounds == 0 {
        return Err(Error::InvalidArgument("max_rounds must be at least 1".into()));
    }
    let mut prompt = seed_prompt.to_string();
    let mut transcript = Vec::new();
    for round in 1..=max_rounds {
        let answer = client.complete(&prompt)?;
        log::info!("round {round}: executor answered ({} chars)", answer.len());
        transcript.push(TranscriptEntry {
            round,
            role: Role::Executor,
            text: answer.clone(),
        });
        let verdict = evaluator.judge(&prompt, &answer)?;
        match verdict {
            Verdict::Accept => {
                transcript.push(TranscriptEntry {
                    round,
                    role: Role::Evaluator,
                    text: "accept".into(),
                });
                log::info!("round {round}: accepted");
                return Ok(Optimization {
                    prompt,
                    rounds: round,
                    transcript,
                });
            }
            Verdict::Critique(critique) => {
                log::info!("round {round}: critique: {critique}");
                transcript.push(TranscriptEntry {
                    round,
                    role: Role::Evaluator,
                    text: critique.clone(),
                });
                if round == max_rounds {
                    break;
                }
                let improved = client.complete(&improver_prompt(&prompt, &answer, &critique))?;
                transcript.push(TranscriptEntry {
                    round,
                    role: Role::Improver,
                    text: improved.clone(),
                });
                prompt = extract_revised_prompt(&improved);
            }
        }
    }
    Err(Error::OptimizationIncomplete {
        rounds: max_rounds,
        transcript,
    })
}

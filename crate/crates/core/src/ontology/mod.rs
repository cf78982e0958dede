//! Instruction-to-part resolution through an object-part ontology and a
//! pluggable chat-completion backend.

mod client;
mod graph;
mod optimize;
mod prompt;
mod resolve;

pub use client::{
    parse_chat_response, prompt_key, ChatClient, FixtureClient, HttpChatClient, ENV_CHAT_API_KEY, ENV_CHAT_MODEL,
    ENV_CHAT_URL, ENV_FIXTURE_DIR,
};
pub use graph::{OntologyGraph, PartNode};
pub use optimize::{
    extract_revised_prompt, improver_prompt, optimize_prompt, Evaluator, Optimization, Role, ScriptedEvaluator,
    TerminalEvaluator, TranscriptEntry, Verdict,
};
pub use prompt::{render_prompt, CLOSEST_OBJECT_CLAUSE, DIFFERENT_PARTS, QUESTION, ROBOT_HANDLES_DANGER};
pub use resolve::{interpret_response, resolve, Instruction, ResolvedPart};

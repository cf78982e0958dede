use super::{Instruction, OntologyGraph};

pub const ROBOT_HANDLES_DANGER: &str = "1. The robot should grasp parts that are either difficult to manipulate or potentially dangerous, while the human should grasp the safer, easier-to-handle parts.";
pub const DIFFERENT_PARTS: &str =
    "2. The robot and human should each grasp a different part of the object to ensure enough operating space.";
pub const CLOSEST_OBJECT_CLAUSE: &str =
    "If the target object is not listed in the ontology, find its closest object in the ontology and use its part information.";
pub const QUESTION: &str = "Question: Which part(s) of the object should the robot grasp?";

/// Builds the structured part-selection prompt: ontology lines, task
/// constraints, question, and a step-by-step answer template that ends in a
/// `Conclusion:` line.
pub fn render_prompt(graph: &OntologyGraph, instruction: &Instruction, novel_extension: bool) -> String {
    let mut out = String::new();
    out.push_str("Given the following ontology:\n");
    for line in graph.render_lines() {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("A robot is given the following command:\n");
    out.push_str(&format!("\"{}\"\n", instruction.text()));
    if let Some(hint) = instruction.target_class_hint() {
        out.push_str(&format!("The target object is: {hint}\n"));
    }
    out.push_str("Constraints:\n");
    out.push_str(ROBOT_HANDLES_DANGER);
    out.push('\n');
    out.push_str(DIFFERENT_PARTS);
    out.push('\n');
    out.push_str(QUESTION);
    out.push('\n');
    if novel_extension {
        out.push_str(CLOSEST_OBJECT_CLAUSE);
        out.push('\n');
    }
    out.push_str("Reason step by step and answer with the following template:\n");
    out.push_str(&format!("The command is \"{}\".\n", instruction.text()));
    out.push_str("Step 1: Identify the type of task ...\n");
    if novel_extension {
        out.push_str("Step 2: Find the closest object in the ontology ... (if the object is not listed, state the mapping as \"So, we map: <object> ≈ <closest object>\")\n");
        out.push_str("Step 3: Apply task constraints ...\n");
    } else {
        out.push_str("Step 2: Apply task constraints ...\n");
    }
    out.push_str("Analyzing the object parts ...\n");
    out.push_str("Best choice for the robot ...\n");
    out.push_str("Conclusion: The robot should grasp ...\n");
    out
}

//! Prompt rendering. Template text lives in `templates/`; this module only
//! substitutes instance data into it.

use crate::table::{Cell, Table};

use super::{ChatMessage, Role};

/// Rows of sample data embedded per table in feedback prompts.
pub const SAMPLE_ROWS: usize = 5;

const INIT_SYSTEM: &str = include_str!("../../templates/init_system.txt");
const INIT_DEFINITION: &str = include_str!("../../templates/init_definition.txt");
const INIT_ACK: &str = include_str!("../../templates/init_ack.txt");
const INIT_INPUT: &str = include_str!("../../templates/init_input.txt");
const FEEDBACK_SYSTEM: &str = include_str!("../../templates/feedback_system.txt");
const FEEDBACK_INPUT: &str = include_str!("../../templates/feedback_input.txt");
const REFINE_INPUT: &str = include_str!("../../templates/refine_input.txt");
const NAMING_SYSTEM: &str = include_str!("../../templates/naming_system.txt");
const NAMING_INPUT: &str = include_str!("../../templates/naming_input.txt");

// template files end with a newline; message bodies do not
fn body(t: &str) -> &str {
    t.strip_suffix('\n').unwrap_or(t)
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = body(template).to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn column_lines(attrs: &[String]) -> String {
    attrs
        .iter()
        .map(|a| format!("# {a}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn description_block(source: &Table, target: &Table) -> String {
    let mut lines: Vec<String> = Vec::new();
    for t in [source, target] {
        for a in t.attributes() {
            if let Some(d) = t.description(a) {
                let line = format!("# {a}: {d}");
                if !lines.contains(&line) {
                    lines.push(line);
                }
            }
        }
    }
    if lines.is_empty() {
        return String::new();
    }
    format!("### Description:\n#\n{}\n#\n", lines.join("\n"))
}

fn sample_lines(rows: &[Vec<Cell>]) -> String {
    rows.iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(Cell::to_field).collect();
            format!("# {}\n", cells.join(", "))
        })
        .collect()
}

/// `[A, B]` form used in prompts.
pub fn bracket_list(names: &[String]) -> String {
    format!("[{}]", names.join(", "))
}

pub fn render_init_prompt(source: &Table, target: &Table) -> Vec<ChatMessage> {
    let input = fill(
        INIT_INPUT,
        &[
            ("source_columns", &column_lines(source.attributes())),
            ("description_block", &description_block(source, target)),
            ("target_columns", &column_lines(target.attributes())),
        ],
    );
    vec![
        ChatMessage::new(Role::System, body(INIT_SYSTEM)),
        ChatMessage::new(Role::User, body(INIT_DEFINITION)),
        ChatMessage::new(Role::Assistant, body(INIT_ACK)),
        ChatMessage::new(Role::User, input),
    ]
}

/// First `SAMPLE_ROWS` records of a table.
pub fn sample_rows(t: &Table) -> Vec<Vec<Cell>> {
    t.records().iter().take(SAMPLE_ROWS).cloned().collect()
}

pub fn render_feedback_prompt(
    source: &Table,
    target: &Table,
    candidate_set: &[String],
    source_samples: &[Vec<Cell>],
    target_samples: &[Vec<Cell>],
) -> Vec<ChatMessage> {
    let selected = candidate_set.join(", ");
    let input = fill(
        FEEDBACK_INPUT,
        &[
            ("source_columns", &column_lines(source.attributes())),
            ("description_block", &description_block(source, target)),
            ("target_columns", &column_lines(target.attributes())),
            ("source_samples", &sample_lines(&source_samples[..source_samples.len().min(SAMPLE_ROWS)])),
            ("target_samples", &sample_lines(&target_samples[..target_samples.len().min(SAMPLE_ROWS)])),
            ("selected", &selected),
        ],
    );
    vec![
        ChatMessage::new(Role::System, body(FEEDBACK_SYSTEM)),
        ChatMessage::new(Role::User, input),
    ]
}

/// Init conversation, the assistant's answer to it, then the refine request
/// carrying the feedback.
pub fn render_refine_prompt(
    init_conversation: &[ChatMessage],
    assistant_reply: &str,
    feedback_text: &str,
) -> Vec<ChatMessage> {
    let mut msgs = init_conversation.to_vec();
    msgs.push(ChatMessage::new(Role::Assistant, assistant_reply));
    msgs.push(ChatMessage::new(
        Role::User,
        fill(REFINE_INPUT, &[("feedback", feedback_text)]),
    ));
    msgs
}

pub fn render_naming_prompt(source: &Table, target: &Table, candidate_set: &[String]) -> Vec<ChatMessage> {
    let input = fill(
        NAMING_INPUT,
        &[
            ("source_columns", &column_lines(source.attributes())),
            ("target_columns", &column_lines(target.attributes())),
            ("selected", &candidate_set.join(", ")),
        ],
    );
    vec![
        ChatMessage::new(Role::System, body(NAMING_SYSTEM)),
        ChatMessage::new(Role::User, input),
    ]
}

/// Plain-text dump of a conversation: a `=== role` line before each
/// message's content.
pub fn transcript(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = serde_json::to_value(m.role).expect("role serializes");
        out.push_str("=== ");
        out.push_str(role.as_str().expect("role is a string"));
        out.push('\n');
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

/// Canonical proposal text for a candidate set, used as the assistant turn
/// when a node did not come from a model reply.
pub fn proposal_json(candidate_set: &[String]) -> String {
    serde_json::json!({ "unpivot_columns": candidate_set }).to_string()
}

//! Prompt templates: deterministic byte-for-byte rendering of task
//! description, annotator demographics, rated examples, and the target item.
//!
//! Input lines are single-line JSON objects with `": "` / `", "` separators
//! and ASCII-only escaping, matching the serialization the reference prompts
//! were produced with, so token counts carry over.

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotator, Instance, Rating};
use crate::error::{Error, Result};
use crate::schema::LabelSchema;

pub const DEFAULT_TURN_OPEN: &str = "<start_of_turn>";
pub const DEFAULT_TURN_CLOSE: &str = "<end_of_turn>";
pub const DEFAULT_DEMOGRAPHICS_PREFIX: &str = "Annotator demographics:";

/// How the label (and optional explanation) is serialized inside a turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum OutputShape {
    /// The label text alone, e.g. `3`.
    Bare,
    /// A one-line JSON object, e.g. `{"paraphrase_rating": -1, "explanation": "..."}`.
    Json {
        label_field: String,
        label_kind: LabelFieldKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        explanation_field: Option<String>,
    },
}

/// Whether the label value is written as a bare JSON number or a quoted string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFieldKind {
    Number,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task_description: String,
    #[serde(default = "default_demographics_prefix")]
    pub demographics_prefix: String,
    #[serde(default)]
    pub include_annotator_id: bool,
    #[serde(default = "default_true")]
    pub include_demographics: bool,
    /// Payload fields rendered into the input line, in order.
    pub input_fields: Vec<String>,
    pub output: OutputShape,
    #[serde(default = "default_turn_open")]
    pub turn_open: String,
    #[serde(default = "default_turn_close")]
    pub turn_close: String,
}

fn default_demographics_prefix() -> String {
    DEFAULT_DEMOGRAPHICS_PREFIX.to_string()
}

fn default_true() -> bool {
    true
}

fn default_turn_open() -> String {
    DEFAULT_TURN_OPEN.to_string()
}

fn default_turn_close() -> String {
    DEFAULT_TURN_CLOSE.to_string()
}

impl PromptTemplate {
    pub fn new(
        task_description: impl Into<String>,
        input_fields: Vec<String>,
        output: OutputShape,
    ) -> PromptTemplate {
        PromptTemplate {
            task_description: task_description.into(),
            demographics_prefix: default_demographics_prefix(),
            include_annotator_id: false,
            include_demographics: true,
            input_fields,
            output,
            turn_open: default_turn_open(),
            turn_close: default_turn_close(),
        }
    }

    /// The demographics line: prefix alone when suppressed or empty, else
    /// prefix plus `key: value` pairs joined by `"; "` in stored order.
    pub fn render_demographics(&self, annotator: &Annotator) -> String {
        let mut pairs: Vec<String> = Vec::new();
        if self.include_demographics {
            if self.include_annotator_id {
                pairs.push(format!("annotator_id: {}", annotator.annotator_id));
            }
            for (k, v) in &annotator.demographics {
                pairs.push(format!("{k}: {v}"));
            }
        }
        if pairs.is_empty() {
            self.demographics_prefix.clone()
        } else {
            format!("{} {}", self.demographics_prefix, pairs.join("; "))
        }
    }

    /// Task description plus demographics line.
    pub fn render_header(&self, annotator: &Annotator) -> String {
        format!(
            "{}\n{}",
            self.task_description,
            self.render_demographics(annotator)
        )
    }

    /// The single-line JSON input for an instance.
    pub fn render_input(&self, instance: &Instance) -> Result<String> {
        let mut out = String::from("{");
        for (i, field) in self.input_fields.iter().enumerate() {
            let value = instance.payload.get(field).ok_or_else(|| {
                Error::Validation(format!(
                    "instance {} is missing payload field {field:?} required by the template",
                    instance.instance_id
                ))
            })?;
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&json_string(field));
            out.push_str(": ");
            out.push_str(&json_string(value));
        }
        out.push('}');
        Ok(out)
    }

    /// The output text for a rated example (no turn markers).
    pub fn render_output(&self, schema: &LabelSchema, rating: &Rating) -> Result<String> {
        let label = rating.label.as_ref().ok_or_else(|| {
            Error::Validation(format!(
                "rating ({}, {}) has no label to render",
                rating.annotator_id, rating.instance_id
            ))
        })?;
        let label_text = schema.label_text(label);
        Ok(match &self.output {
            OutputShape::Bare => label_text,
            OutputShape::Json {
                label_field,
                label_kind,
                explanation_field,
            } => {
                let mut out = String::from("{");
                out.push_str(&json_string(label_field));
                out.push_str(": ");
                match label_kind {
                    LabelFieldKind::Number => out.push_str(&label_text),
                    LabelFieldKind::Text => out.push_str(&json_string(&label_text)),
                }
                if let (Some(field), Some(explanation)) = (explanation_field, &rating.explanation) {
                    out.push_str(", ");
                    out.push_str(&json_string(field));
                    out.push_str(": ");
                    out.push_str(&json_string(explanation));
                }
                out.push('}');
                out
            }
        })
    }

    /// A full in-context example: input line, then the turn-wrapped output.
    pub fn render_example(
        &self,
        schema: &LabelSchema,
        rating: &Rating,
        instance: &Instance,
    ) -> Result<String> {
        if rating.instance_id != instance.instance_id {
            return Err(Error::Validation(format!(
                "rating references instance {} but was rendered with instance {}",
                rating.instance_id, instance.instance_id
            )));
        }
        Ok(format!(
            "{}\n{}{}{}",
            self.render_input(instance)?,
            self.turn_open,
            self.render_output(schema, rating)?,
            self.turn_close
        ))
    }

    /// Forced text that begins every output of this shape, emitted after
    /// `turn_open` for the target so continuation queries start at the value.
    pub fn output_prefix(&self) -> String {
        match &self.output {
            OutputShape::Bare => String::new(),
            OutputShape::Json {
                label_field,
                label_kind,
                ..
            } => match label_kind {
                LabelFieldKind::Number => format!("{{{}:", json_string(label_field)),
                LabelFieldKind::Text => format!("{{{}: \"", json_string(label_field)),
            },
        }
    }

    /// The target block: input line, turn_open, and the forced output prefix.
    pub fn render_target(&self, instance: &Instance) -> Result<String> {
        Ok(format!(
            "{}\n{}{}",
            self.render_input(instance)?,
            self.turn_open,
            self.output_prefix()
        ))
    }

    pub fn load(path: &std::path::Path) -> Result<PromptTemplate> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, format!("line {}", e.line()), e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, "serialize", e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Quote and escape a string the way `json.dumps` does with ASCII-only
/// output: two-character escapes for the usual control characters, `\uXXXX`
/// (surrogate pairs above the BMP) for everything else outside 0x20..0x7f.
pub fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{0008}' => out.push_str("\\b"),
            '\u{000c}' => out.push_str("\\f"),
            c if (' '..='\u{007e}').contains(&c) => out.push(c),
            c => {
                let mut units = [0u16; 2];
                for unit in c.encode_utf16(&mut units) {
                    out.push_str(&format!("\\u{unit:04x}"));
                }
            }
        }
    }
    out.push('"');
    out
}

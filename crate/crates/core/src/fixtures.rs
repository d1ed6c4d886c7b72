//! Small reference models shared by tests, examples and the command-line tool.

use crate::model::{load_table_model, TableModel};

/// Document for the reference verdict model.
///
/// From prompt `X`: `safe` 0.3 or `unsafe` 0.7; `unsafe` is followed by a
/// newline, then `S1` 0.6 or `S3` 0.4. After `S1` the model ends (0.5) or
/// emits `,` (0.5), which is always followed by `S3`. Every other context
/// (after `safe` or `S3`) ends the sequence.
pub const WORKED_TOY_MODEL: &str = r#"{
  "vocabulary": ["safe", "unsafe", "\n", "S1", "S3", ",", "</s>"],
  "transitions": {
    "X": {"safe": 0.3, "unsafe": 0.7},
    "X\u001Funsafe": {"\n": 1.0},
    "X\u001Funsafe\u001F\n": {"S1": 0.6, "S3": 0.4},
    "X\u001Funsafe\u001F\n\u001FS1": {"</s>": 0.5, ",": 0.5},
    "X\u001Funsafe\u001F\n\u001FS1\u001F,": {"S3": 1.0}
  },
  "default": {"</s>": 1.0}
}
"#;

pub fn worked_toy_model() -> TableModel {
    load_table_model(WORKED_TOY_MODEL).expect("reference model is valid")
}

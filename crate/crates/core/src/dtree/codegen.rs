//! Emits a fitted tree as a standalone C function
//! `int <name>(float temp, float ph, float tds)` returning 1 for Good and 0
//! for Bad. No includes, no globals, ASCII only.
//!
//! Thresholds are written as double literals in shortest round-trip form,
//! so a `float` argument promoted for the comparison is tested against the
//! exact threshold the tree holds.

use std::fmt::Write;

use thiserror::Error;

use super::TreeNode;
use crate::model::Condition;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid C identifier {0:?}")]
pub struct CodegenError(pub String);

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum",
    "extern", "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return",
    "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void",
    "volatile", "while", "_Bool", "_Complex", "_Imaginary", "bool", "true", "false",
];

fn is_c_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    let head_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_');
    head_ok && chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !C_KEYWORDS.contains(&s)
}

fn emit(node: &TreeNode, indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    match node {
        TreeNode::Leaf { value, .. } => {
            let class = u8::from(Condition::from_value(*value) == Condition::Good);
            let _ = writeln!(out, "{pad}return {class};");
        }
        TreeNode::Internal { feature, threshold, left, right } => {
            let _ = writeln!(out, "{pad}if ({} <= {:?}) {{", feature.name(), threshold);
            emit(left, indent + 1, out);
            let _ = writeln!(out, "{pad}}} else {{");
            emit(right, indent + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

pub fn export_classifier(tree: &TreeNode, function_name: &str) -> Result<String, CodegenError> {
    if !is_c_identifier(function_name) {
        return Err(CodegenError(function_name.to_string()));
    }
    let mut out = String::new();
    out.push_str("/* Water condition classifier. Returns 1 for Good, 0 for Bad. */\n");
    let _ = writeln!(out, "int {function_name}(float temp, float ph, float tds)");
    out.push_str("{\n");
    emit(tree, 1, &mut out);
    out.push_str("}\n");
    Ok(out)
}

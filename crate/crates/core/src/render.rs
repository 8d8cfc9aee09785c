//! Number rendering for generated text.
//!
//! Property values: integer kinds bare; database decimals keep their
//! source text; computed molecular weight to 2 decimals, computed logP to 1.
//! Benchmark options: at most 4 decimals with trailing zeros trimmed, so
//! `2.0` and `2` render identically.

use crate::descriptors::{PropertyKind, PropertyValue, Provenance, ValueKind};

fn strip_negative_zero(s: String) -> String {
    let is_zero = s
        .strip_prefix('-')
        .is_some_and(|rest| rest.chars().all(|c| c == '0' || c == '.'));
    if is_zero {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn render_property(value: &PropertyValue) -> String {
    if value.provenance == Provenance::Database {
        if let Some(text) = &value.source_text {
            return text.trim().to_string();
        }
    }
    render_computed(value.kind, value.value)
}

pub fn render_computed(kind: PropertyKind, value: f64) -> String {
    let s = match (kind.value_kind(), kind) {
        (ValueKind::Integer, _) => format!("{}", value.round() as i64),
        (_, PropertyKind::MolecularWeight) => format!("{value:.2}"),
        _ => format!("{value:.1}"),
    };
    strip_negative_zero(s)
}

/// Canonical rendering of a multiple-choice option value.
pub fn render_option(value: f64) -> String {
    let mut s = format!("{value:.4}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    strip_negative_zero(s)
}

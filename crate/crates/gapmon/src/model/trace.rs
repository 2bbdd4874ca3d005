//! Line-oriented trace files: one item per line, `evt <symbol>`,
//! `gap <dist-id>`, or `peek <value>`. `#` starts a comment, blank lines are
//! ignored.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::{Error, Result};

/// One observed item of a monitored execution. Symbol, distribution id, and
/// peek value are resolved against the paired model when a run starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TraceItem {
    /// A monitored program event.
    Event(String),
    /// A monitoring gap, annotated with the id of its length distribution.
    Gap(String),
    /// A peek observation of part of the program state.
    Peek(String),
}

impl TraceItem {
    pub fn event(symbol: impl Into<String>) -> Self {
        TraceItem::Event(symbol.into())
    }

    pub fn gap(dist_id: impl Into<String>) -> Self {
        TraceItem::Gap(dist_id.into())
    }

    pub fn peek(value: impl Into<String>) -> Self {
        TraceItem::Peek(value.into())
    }
}

impl fmt::Display for TraceItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceItem::Event(s) => write!(f, "evt {s}"),
            TraceItem::Gap(g) => write!(f, "gap {g}"),
            TraceItem::Peek(v) => write!(f, "peek {v}"),
        }
    }
}

/// Parse trace text. `origin` names the source in error messages.
pub fn parse_trace_str(text: &str, origin: &str) -> Result<Vec<TraceItem>> {
    let mut items = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let directive = tokens.next().unwrap_or("");
        let arg = tokens.next();
        let extra = tokens.next();
        let (arg, ()) = match (arg, extra) {
            (Some(a), None) => (a, ()),
            _ => {
                return Err(Error::Parse {
                    origin: format!("{origin}:{}", lineno + 1),
                    message: format!("expected `<directive> <name>`, got {line:?}"),
                })
            }
        };
        let item = match directive {
            "evt" => TraceItem::event(arg),
            "gap" => TraceItem::gap(arg),
            "peek" => TraceItem::peek(arg),
            other => {
                return Err(Error::Parse {
                    origin: format!("{origin}:{}", lineno + 1),
                    message: format!("unknown directive {other:?} (expected evt, gap, or peek)"),
                })
            }
        };
        items.push(item);
    }
    Ok(items)
}

/// Load a trace file.
pub fn parse_trace(path: impl AsRef<Path>) -> Result<Vec<TraceItem>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        origin: origin.clone(),
        message: format!("cannot read file: {e}"),
    })?;
    parse_trace_str(&text, &origin)
}

/// Write a trace file, one item per line.
pub fn write_trace(items: &[TraceItem], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&item.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_items_comments_and_blanks() {
        let text = "# header\n\nevt a\ngap g1   # trailing comment\npeek p1\n";
        let items = parse_trace_str(text, "mem").unwrap();
        assert_eq!(
            items,
            vec![TraceItem::event("a"), TraceItem::gap("g1"), TraceItem::peek("p1")]
        );
    }

    #[test]
    fn rejects_unknown_directive_with_line_number() {
        let err = parse_trace_str("evt a\nobs b\n", "t.txt").unwrap_err();
        match err {
            Error::Parse { origin, .. } => assert_eq!(origin, "t.txt:2"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_arity() {
        assert!(parse_trace_str("evt\n", "mem").is_err());
        assert!(parse_trace_str("evt a b\n", "mem").is_err());
    }

    #[test]
    fn display_round_trips() {
        let items = vec![TraceItem::event("a"), TraceItem::gap("g"), TraceItem::peek("p")];
        let text: String = items.iter().map(|i| format!("{i}\n")).collect();
        assert_eq!(parse_trace_str(&text, "mem").unwrap(), items);
    }
}

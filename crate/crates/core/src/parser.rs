//! Call-expression parsing.
//!
//! Lifts raw model-output text into call trees and parses the tagged
//! structured-output format (`<domain>: ...`, `<api_call>: ...`, ...).
//!
//! The supported expression grammar: dotted identifiers, calls with
//! positional and keyword arguments, string literals in single or double
//! quotes, integer and float literals, `True`/`False`/`None`, bare
//! identifiers, nested calls, and bracketed lists. Any argument that does
//! not fit is captured verbatim as an opaque [`Value::Identifier`], so
//! unusual constructs never abort the scan.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

/// A parsed call expression: dotted callee path plus arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct CallNode {
    /// Dotted path segments, e.g. `["torch", "hub", "load"]`.
    pub callee: Vec<String>,
    pub positional: Vec<Value>,
    /// Keyword arguments in source order; names are unique.
    pub keyword: Vec<(String, Value)>,
}

impl CallNode {
    /// The callee joined with dots, e.g. `torch.hub.load`.
    pub fn callee_path(&self) -> String {
        self.callee.join(".")
    }

    /// Looks up a keyword argument by name.
    pub fn kwarg(&self, name: &str) -> Option<&Value> {
        self.keyword
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    /// Renders the call in canonical source form. Re-parsing the result
    /// yields an equal `CallNode`.
    pub fn to_source(&self) -> String {
        let mut args: Vec<String> = self.positional.iter().map(Value::to_source).collect();
        args.extend(
            self.keyword
                .iter()
                .map(|(n, v)| format!("{}={}", n, v.to_source())),
        );
        format!("{}({})", self.callee_path(), args.join(", "))
    }
}

impl fmt::Display for CallNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_source())
    }
}

/// An argument value inside a call expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// String literal content, without the surrounding quotes.
    StringLit(String),
    NumberLit(f64),
    BoolLit(bool),
    /// A bare or dotted identifier, or any argument text the grammar does
    /// not model (captured verbatim). `None` parses to `Identifier("None")`.
    Identifier(String),
    Call(CallNode),
    ListLit(Vec<Value>),
}

impl Value {
    pub fn to_source(&self) -> String {
        match self {
            Value::StringLit(s) => format!("'{}'", escape_string(s)),
            Value::NumberLit(n) => format!("{n}"),
            Value::BoolLit(true) => "True".to_string(),
            Value::BoolLit(false) => "False".to_string(),
            Value::Identifier(s) => s.clone(),
            Value::Call(c) => c.to_source(),
            Value::ListLit(items) => {
                let inner: Vec<String> = items.iter().map(Value::to_source).collect();
                format!("[{}]", inner.join(", "))
            }
        }
    }
}

fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

/// Fields extracted from the tagged structured-output format.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuredOutput {
    pub domain: Option<String>,
    pub api_call: Option<String>,
    pub api_provider: Option<String>,
    pub explanation: Option<String>,
    pub code: Option<String>,
}

/// Extracts every top-level call expression from free-form text, in textual
/// order. Calls on the right side of assignments are included; nested calls
/// appear as [`Value::Call`] inside their parent, not as separate entries.
/// Text with no recognizable call yields an empty list.
pub fn parse_calls(source_text: &str) -> Vec<CallNode> {
    let mut scanner = Scanner::new(source_text);
    let mut calls = Vec::new();
    while !scanner.at_end() {
        if scanner.at_ident_start() {
            let start = scanner.pos;
            let path = scanner.read_dotted_path();
            scanner.skip_hspace();
            if scanner.peek() == Some('(') {
                let checkpoint = scanner.pos;
                scanner.depth_exceeded = false;
                scanner.advance(); // consume '('
                match scanner.parse_args() {
                    Some((positional, keyword)) => {
                        scanner.skip_call_chain();
                        calls.push(CallNode {
                            callee: path,
                            positional,
                            keyword,
                        });
                    }
                    None => {
                        // Unbalanced or unterminated: resume just past the
                        // open paren so inner calls are still discovered.
                        scanner.pos = checkpoint + 1;
                    }
                }
            } else if scanner.pos == start {
                scanner.advance();
            }
        } else {
            scanner.advance();
        }
    }
    calls
}

/// Converts every positional argument to a keyword argument using
/// `arg_order` by position. Pre-existing keyword arguments are untouched;
/// the result has no positional arguments.
pub fn canonicalize(call: &CallNode, arg_order: &[String]) -> Result<CallNode> {
    if call.positional.len() > arg_order.len() {
        return Err(Error::TooManyPositional {
            count: call.positional.len(),
            names: arg_order.len(),
        });
    }
    let mut keyword: Vec<(String, Value)> =
        Vec::with_capacity(call.keyword.len() + call.positional.len());
    for (value, name) in call.positional.iter().zip(arg_order.iter()) {
        if call.kwarg(name).is_some() || keyword.iter().any(|(n, _)| n == name) {
            return Err(Error::KeywordCollision { name: name.clone() });
        }
        keyword.push((name.clone(), value.clone()));
    }
    keyword.extend(call.keyword.iter().cloned());
    Ok(CallNode {
        callee: call.callee.clone(),
        positional: Vec::new(),
        keyword,
    })
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)<\s*(domain|api_call|api_provider|explanation|code)\s*>\s*:").unwrap()
    })
}

/// Parses the tagged output format: each `<tag>:` marker introduces a value
/// running until the next marker or end of text. Tag names are matched
/// case-insensitively. Fails when no marker is present at all.
pub fn parse_structured_output(text: &str) -> Result<StructuredOutput> {
    let markers: Vec<(String, usize, usize)> = tag_regex()
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).unwrap();
            (c[1].to_lowercase(), whole.start(), whole.end())
        })
        .collect();
    if markers.is_empty() {
        return Err(Error::NoStructuredTags);
    }
    let mut out = StructuredOutput::default();
    for (i, (tag, _, value_start)) in markers.iter().enumerate() {
        let value_end = markers.get(i + 1).map(|m| m.1).unwrap_or(text.len());
        let raw = &text[*value_start..value_end];
        // Generated text separates tagged fields with commas; strip one.
        let value = raw.trim().trim_end_matches(',').trim().to_string();
        let slot = match tag.as_str() {
            "domain" => &mut out.domain,
            "api_call" => &mut out.api_call,
            "api_provider" => &mut out.api_provider,
            "explanation" => &mut out.explanation,
            _ => &mut out.code,
        };
        if slot.is_none() {
            *slot = Some(value);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scanner
// ---------------------------------------------------------------------------

type ParsedArgs = (Vec<Value>, Vec<(String, Value)>);

/// Nesting bound for calls and lists. Degenerate inputs (for example an
/// unbounded run of `f(f(f(`) fail their call parse instead of exhausting
/// the stack; `depth_exceeded` makes that failure propagate without the
/// raw-capture fallback, which would rescan the tail at every level.
const MAX_NESTING: usize = 64;

struct Scanner<'a> {
    text: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize, // index into `chars`
    depth: usize,
    depth_exceeded: bool,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner {
            text,
            chars: text.char_indices().collect(),
            pos: 0,
            depth: 0,
            depth_exceeded: false,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).map(|&(_, c)| c)
    }

    fn advance(&mut self) {
        self.pos += 1;
    }

    fn slice_between(&self, start_pos: usize, end_pos: usize) -> &'a str {
        let start = self
            .chars
            .get(start_pos)
            .map(|&(b, _)| b)
            .unwrap_or(self.text.len());
        let end = self
            .chars
            .get(end_pos)
            .map(|&(b, _)| b)
            .unwrap_or(self.text.len());
        &self.text[start..end]
    }

    fn at_ident_start(&self) -> bool {
        matches!(self.peek(), Some(c) if c.is_ascii_alphabetic() || c == '_')
    }

    fn skip_hspace(&mut self) {
        while matches!(self.peek(), Some(' ') | Some('\t')) {
            self.advance();
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.advance();
        }
    }

    fn read_ident(&mut self) -> Option<String> {
        if !self.at_ident_start() {
            return None;
        }
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.advance();
        }
        Some(self.slice_between(start, self.pos).to_string())
    }

    /// Reads `ident(.ident)*`. Stops before a trailing dot that is not
    /// followed by an identifier (e.g. prose "load.").
    fn read_dotted_path(&mut self) -> Vec<String> {
        let mut segments = Vec::new();
        if let Some(first) = self.read_ident() {
            segments.push(first);
        } else {
            return segments;
        }
        while self.peek() == Some('.') {
            let next_is_ident = matches!(
                self.peek_at(1),
                Some(c) if c.is_ascii_alphabetic() || c == '_'
            );
            if !next_is_ident {
                break;
            }
            self.advance(); // '.'
            segments.push(self.read_ident().unwrap());
        }
        segments
    }

    /// Parses the argument list after an already-consumed `(`. Returns
    /// `None` on an unterminated or too deeply nested list.
    fn parse_args(&mut self) -> Option<ParsedArgs> {
        if self.depth >= MAX_NESTING {
            self.depth_exceeded = true;
            return None;
        }
        self.depth += 1;
        let result = self.parse_args_inner();
        self.depth -= 1;
        result
    }

    fn parse_args_inner(&mut self) -> Option<ParsedArgs> {
        let mut positional = Vec::new();
        let mut keyword: Vec<(String, Value)> = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return None,
                Some(')') => {
                    self.advance();
                    return Some((positional, keyword));
                }
                Some(',') => {
                    // Empty slot (e.g. `f(,x)`): tolerate and move on.
                    self.advance();
                    continue;
                }
                _ => {}
            }
            let arg_start = self.pos;
            let mut name: Option<String> = None;
            if self.at_ident_start() {
                let save = self.pos;
                if let Some(ident) = self.read_ident() {
                    self.skip_hspace();
                    if self.peek() == Some('=') && self.peek_at(1) != Some('=') {
                        self.advance(); // '='
                        self.skip_ws();
                        name = Some(ident);
                    } else {
                        self.pos = save;
                    }
                }
            }
            let value_start = self.pos;
            let value = match self.parse_value() {
                Some(v) => v,
                None if self.depth_exceeded => return None,
                None => self.capture_raw(value_start)?,
            };
            self.skip_ws();
            let value = match self.peek() {
                Some(',') | Some(')') => value,
                // The parsed value did not consume the whole argument
                // (e.g. `3*224*224`): fall back to a raw capture.
                _ => {
                    self.pos = value_start;
                    self.capture_raw(value_start)?
                }
            };
            match name {
                Some(n) => {
                    // Keep the first occurrence of a duplicated keyword.
                    if !keyword.iter().any(|(existing, _)| *existing == n) {
                        keyword.push((n, value));
                    }
                }
                None => positional.push(value),
            }
            self.skip_ws();
            match self.peek() {
                Some(',') => self.advance(),
                Some(')') => {
                    self.advance();
                    return Some((positional, keyword));
                }
                _ => {
                    // capture_raw stops only at `,` or `)`; anything else
                    // means the input ended.
                    let _ = arg_start;
                    return None;
                }
            }
        }
    }

    fn parse_value(&mut self) -> Option<Value> {
        match self.peek()? {
            '\'' | '"' => self.parse_string().map(Value::StringLit),
            '[' => self.parse_list(),
            c if c.is_ascii_digit() => self.parse_number(),
            '+' | '-' | '.' => {
                let next = self.peek_at(1);
                if matches!(next, Some(d) if d.is_ascii_digit()) || next == Some('.') {
                    self.parse_number()
                } else {
                    None
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let path = self.read_dotted_path();
                self.skip_hspace();
                if self.peek() == Some('(') {
                    self.advance();
                    let (positional, keyword) = self.parse_args()?;
                    self.skip_call_chain();
                    Some(Value::Call(CallNode {
                        callee: path,
                        positional,
                        keyword,
                    }))
                } else if path.len() == 1 {
                    match path[0].as_str() {
                        "True" => Some(Value::BoolLit(true)),
                        "False" => Some(Value::BoolLit(false)),
                        _ => Some(Value::Identifier(path.into_iter().next().unwrap())),
                    }
                } else {
                    Some(Value::Identifier(path.join(".")))
                }
            }
            _ => None,
        }
    }

    fn parse_string(&mut self) -> Option<String> {
        let quote = self.peek()?;
        self.advance();
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return None, // unterminated
                Some('\\') => {
                    self.advance();
                    match self.peek() {
                        None => return None,
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some('r') => out.push('\r'),
                        Some(c) if c == quote || c == '\\' => out.push(c),
                        Some(other) => {
                            out.push('\\');
                            out.push(other);
                        }
                    }
                    self.advance();
                }
                Some(c) if c == quote => {
                    self.advance();
                    return Some(out);
                }
                Some(c) => {
                    out.push(c);
                    self.advance();
                }
            }
        }
    }

    fn parse_number(&mut self) -> Option<Value> {
        let start = self.pos;
        if matches!(self.peek(), Some('+') | Some('-')) {
            self.advance();
        }
        let mut saw_digit = false;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.advance();
            saw_digit = true;
        }
        if self.peek() == Some('.') {
            self.advance();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.advance();
                saw_digit = true;
            }
        }
        if !saw_digit {
            self.pos = start;
            return None;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.advance();
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.advance();
            }
            let mut exp_digits = false;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.advance();
                exp_digits = true;
            }
            if !exp_digits {
                self.pos = save;
            }
        }
        self.slice_between(start, self.pos)
            .parse::<f64>()
            .ok()
            .map(Value::NumberLit)
    }

    fn parse_list(&mut self) -> Option<Value> {
        if self.depth >= MAX_NESTING {
            self.depth_exceeded = true;
            return None;
        }
        self.depth += 1;
        let result = self.parse_list_inner();
        self.depth -= 1;
        result
    }

    fn parse_list_inner(&mut self) -> Option<Value> {
        self.advance(); // '['
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return None,
                Some(']') => {
                    self.advance();
                    return Some(Value::ListLit(items));
                }
                Some(',') => {
                    self.advance();
                    continue;
                }
                _ => {}
            }
            let start = self.pos;
            let item = match self.parse_value() {
                Some(v) => v,
                None if self.depth_exceeded => return None,
                None => self.capture_raw_until(start, &[',', ']'])?,
            };
            self.skip_ws();
            let item = match self.peek() {
                Some(',') | Some(']') => item,
                _ => {
                    self.pos = start;
                    self.capture_raw_until(start, &[',', ']'])?
                }
            };
            items.push(item);
        }
    }

    /// Captures one argument verbatim, balancing brackets and quotes, up to
    /// the next top-level `,` or `)`.
    fn capture_raw(&mut self, start: usize) -> Option<Value> {
        self.capture_raw_until(start, &[',', ')'])
    }

    fn capture_raw_until(&mut self, start: usize, stops: &[char]) -> Option<Value> {
        self.pos = start;
        let mut depth = 0usize;
        loop {
            match self.peek() {
                None => return None,
                Some(c) if depth == 0 && stops.contains(&c) => break,
                Some('(') | Some('[') | Some('{') => {
                    depth += 1;
                    self.advance();
                }
                Some(')') | Some(']') | Some('}') => {
                    if depth == 0 {
                        break; // closing token of the enclosing construct
                    }
                    depth -= 1;
                    self.advance();
                }
                Some('\'') | Some('"') => {
                    self.parse_string()?;
                }
                Some(_) => self.advance(),
            }
        }
        let raw = self.slice_between(start, self.pos).trim().to_string();
        if raw.is_empty() {
            None
        } else {
            Some(Value::Identifier(raw))
        }
    }

    /// Consumes method/attribute/index chains hanging off a completed call
    /// (e.g. `.eval()`, `[0]`, `(x)`), which match specs do not model.
    fn skip_call_chain(&mut self) {
        loop {
            let save = self.pos;
            self.skip_hspace();
            match self.peek() {
                Some('.') => {
                    let next_is_ident = matches!(
                        self.peek_at(1),
                        Some(c) if c.is_ascii_alphabetic() || c == '_'
                    );
                    if !next_is_ident {
                        self.pos = save;
                        return;
                    }
                    self.advance();
                    let _ = self.read_ident();
                }
                Some('(') => {
                    if !self.skip_balanced('(', ')') {
                        self.pos = save;
                        return;
                    }
                }
                Some('[') => {
                    if !self.skip_balanced('[', ']') {
                        self.pos = save;
                        return;
                    }
                }
                _ => {
                    self.pos = save;
                    return;
                }
            }
        }
    }

    fn skip_balanced(&mut self, open: char, close: char) -> bool {
        let save = self.pos;
        let mut depth = 0usize;
        loop {
            match self.peek() {
                None => {
                    self.pos = save;
                    return false;
                }
                Some('\'') | Some('"') => {
                    if self.parse_string().is_none() {
                        self.pos = save;
                        return false;
                    }
                }
                Some(c) => {
                    if c == open {
                        depth += 1;
                    } else if c == close {
                        depth -= 1;
                        if depth == 0 {
                            self.advance();
                            return true;
                        }
                    }
                    self.advance();
                }
            }
        }
    }

}

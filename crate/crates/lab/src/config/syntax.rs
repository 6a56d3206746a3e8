//! Line-based `dotted.key = value` documents.
//!
//! One assignment per line. Values are integers, floats, booleans,
//! double-quoted strings, `[lists]` and `{inline = tables}`. `#` starts a
//! comment anywhere outside a string.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic {
            pos,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.pos.line, self.pos.col, self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Spanned>),
    Table(Vec<Entry>),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Float(_) => "float",
            Value::Bool(_) => "boolean",
            Value::Str(_) => "string",
            Value::List(_) => "list",
            Value::Table(_) => "table",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spanned {
    pub pos: Pos,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub pos: Pos,
    pub value: Spanned,
}

struct Cursor {
    chars: Vec<char>,
    i: usize,
    line: usize,
}

impl Cursor {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.i + 1,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.i += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('#'))
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::new(self.pos(), msg)
    }

    fn expect(&mut self, c: char) -> Result<(), Diagnostic> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.i;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.i += 1;
            } else {
                break;
            }
        }
        if self.i == start || self.chars[start].is_ascii_digit() {
            self.i = start;
            return None;
        }
        Some(self.chars[start..self.i].iter().collect())
    }

    fn key(&mut self) -> Result<String, Diagnostic> {
        self.skip_ws();
        let mut parts = vec![];
        loop {
            match self.ident() {
                Some(p) => parts.push(p),
                None => return Err(self.err("expected a key")),
            }
            if self.peek() == Some('.') {
                self.i += 1;
            } else {
                break;
            }
        }
        Ok(parts.join("."))
    }

    fn value(&mut self) -> Result<Spanned, Diagnostic> {
        self.skip_ws();
        let pos = self.pos();
        let value = match self.peek() {
            None | Some('#') => return Err(self.err("expected a value")),
            Some('"') => Value::Str(self.string()?),
            Some('[') => {
                self.i += 1;
                let mut items = vec![];
                self.skip_ws();
                if self.peek() == Some(']') {
                    self.i += 1;
                } else {
                    loop {
                        items.push(self.value()?);
                        self.skip_ws();
                        match self.peek() {
                            Some(',') => self.i += 1,
                            Some(']') => {
                                self.i += 1;
                                break;
                            }
                            _ => return Err(self.err("expected ',' or ']'")),
                        }
                    }
                }
                Value::List(items)
            }
            Some('{') => {
                self.i += 1;
                let mut entries: Vec<Entry> = vec![];
                self.skip_ws();
                if self.peek() == Some('}') {
                    self.i += 1;
                } else {
                    loop {
                        self.skip_ws();
                        let kpos = self.pos();
                        let key = self.ident().ok_or_else(|| self.err("expected a key"))?;
                        if entries.iter().any(|e| e.key == key) {
                            return Err(Diagnostic::new(kpos, format!("duplicate key '{key}' in table")));
                        }
                        self.expect('=')?;
                        let value = self.value()?;
                        entries.push(Entry { key, pos: kpos, value });
                        self.skip_ws();
                        match self.peek() {
                            Some(',') => self.i += 1,
                            Some('}') => {
                                self.i += 1;
                                break;
                            }
                            _ => return Err(self.err("expected ',' or '}'")),
                        }
                    }
                }
                Value::Table(entries)
            }
            Some(_) => self.scalar()?,
        };
        Ok(Spanned { pos, value })
    }

    fn string(&mut self) -> Result<String, Diagnostic> {
        let start = self.pos();
        self.i += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(Diagnostic::new(start, "unterminated string")),
                Some('"') => {
                    self.i += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    self.i += 1;
                    let c = match self.peek() {
                        Some('"') => '"',
                        Some('\\') => '\\',
                        Some('n') => '\n',
                        Some('t') => '\t',
                        _ => return Err(self.err("unknown escape")),
                    };
                    out.push(c);
                    self.i += 1;
                }
                Some(c) => {
                    out.push(c);
                    self.i += 1;
                }
            }
        }
    }

    fn scalar(&mut self) -> Result<Value, Diagnostic> {
        let pos = self.pos();
        let start = self.i;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.' | '_') {
                self.i += 1;
            } else {
                break;
            }
        }
        let word: String = self.chars[start..self.i].iter().collect();
        match word.as_str() {
            "" => return Err(Diagnostic::new(pos, "expected a value")),
            "true" => return Ok(Value::Bool(true)),
            "false" => return Ok(Value::Bool(false)),
            _ => {}
        }
        let digits = word.trim_start_matches(['+', '-']);
        if !digits.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            return Err(Diagnostic::new(
                pos,
                format!("'{word}' is not a value (strings need quotes)"),
            ));
        }
        let clean = word.replace('_', "");
        if word.contains(['.', 'e', 'E']) {
            clean
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::Float)
                .ok_or_else(|| Diagnostic::new(pos, format!("malformed number '{word}'")))
        } else {
            clean
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| Diagnostic::new(pos, format!("malformed integer '{word}'")))
        }
    }
}

/// Parse a whole document; every malformed line yields one diagnostic.
pub fn parse_document(text: &str) -> Result<Vec<Entry>, Vec<Diagnostic>> {
    let mut entries: Vec<Entry> = vec![];
    let mut diags = vec![];
    for (k, line) in text.lines().enumerate() {
        let mut c = Cursor {
            chars: line.chars().collect(),
            i: 0,
            line: k + 1,
        };
        if c.at_end() {
            continue;
        }
        let kpos = c.pos();
        let parsed = c.key().and_then(|key| {
            c.expect('=')?;
            let value = c.value()?;
            if !c.at_end() {
                return Err(c.err("unexpected text after value"));
            }
            Ok((key, value))
        });
        match parsed {
            Ok((key, value)) => {
                if let Some(prev) = entries.iter().find(|e| e.key == key) {
                    diags.push(Diagnostic::new(
                        kpos,
                        format!("duplicate key '{key}' (first set on line {})", prev.pos.line),
                    ));
                } else {
                    entries.push(Entry { key, pos: kpos, value });
                }
            }
            Err(d) => diags.push(d),
        }
    }
    if diags.is_empty() {
        Ok(entries)
    } else {
        Err(diags)
    }
}

/// Shortest representation that parses back to the same float.
pub fn format_float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn format_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(x) => format_float(*x),
        Value::Bool(b) => b.to_string(),
        Value::Str(s) => {
            let mut out = String::from('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
            out
        }
        Value::List(items) => {
            let parts: Vec<String> = items.iter().map(|s| format_value(&s.value)).collect();
            format!("[{}]", parts.join(", "))
        }
        Value::Table(entries) => {
            let parts: Vec<String> = entries
                .iter()
                .map(|e| format!("{} = {}", e.key, format_value(&e.value.value)))
                .collect();
            format!("{{{}}}", parts.join(", "))
        }
    }
}

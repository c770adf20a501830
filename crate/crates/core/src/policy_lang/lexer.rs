//! Indentation-aware tokenizer for the policy language.

use super::error::{ParseError, ParseErrorKind, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    /// Numeric literal; `int` is set when the literal was written without a
    /// fraction or exponent.
    Number { value: f64, int: Option<u64> },
    Str(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const OPS: [&str; 31] = [
    "**=", "//=", "->", "**", "//", "<=", ">=", "==", "!=", "+=", "-=", "*=", "/=", "%=", "(",
    ")", "[", "]", "{", "}", ",", ":", ".", "=", "+", "-", "*", "/", "<", ">", "%",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
        out: Vec::new(),
        indents: vec![0],
        nesting: 0,
    };
    lx.run()?;
    Ok(lx.out)
}

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
    out: Vec<Token>,
    indents: Vec<usize>,
    nesting: usize,
}

impl Lexer {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, pos: Pos) {
        self.out.push(Token { tok, pos });
    }

    fn err(&self, pos: Pos, msg: impl Into<String>) -> ParseError {
        ParseError::new(pos, ParseErrorKind::Syntax(msg.into()))
    }

    fn run(&mut self) -> Result<(), ParseError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.nesting == 0 {
                if !self.handle_indent()? {
                    break;
                }
                at_line_start = false;
            }
            let Some(c) = self.peek(0) else { break };
            let pos = self.pos();
            match c {
                '\n' => {
                    self.bump();
                    if self.nesting == 0 {
                        if !matches!(self.out.last().map(|t| &t.tok), Some(Tok::Newline) | None) {
                            self.push(Tok::Newline, pos);
                        }
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                '\\' if self.peek(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '"' | '\'' => {
                    let s = self.string(c)?;
                    self.push(Tok::Str(s), pos);
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    let tok = self.number()?;
                    self.push(tok, pos);
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut name = String::new();
                    while let Some(c) = self.peek(0).filter(|c| c.is_alphanumeric() || *c == '_') {
                        name.push(c);
                        self.bump();
                    }
                    self.push(Tok::Name(name), pos);
                }
                _ => {
                    let op = OPS.iter().copied().find(|op| {
                        op.chars().enumerate().all(|(k, oc)| self.peek(k) == Some(oc))
                    });
                    let Some(op) = op else {
                        return Err(self.err(pos, format!("unexpected character '{c}'")));
                    };
                    for _ in 0..op.len() {
                        self.bump();
                    }
                    match op {
                        "(" | "[" | "{" => self.nesting += 1,
                        ")" | "]" | "}" => {
                            if self.nesting == 0 {
                                return Err(self.err(pos, format!("unmatched '{op}'")));
                            }
                            self.nesting -= 1;
                        }
                        _ => {}
                    }
                    self.push(Tok::Op(op), pos);
                }
            }
        }
        let pos = self.pos();
        if self.nesting > 0 {
            return Err(self.err(pos, "unexpected end of input inside brackets"));
        }
        if !matches!(self.out.last().map(|t| &t.tok), Some(Tok::Newline) | None) {
            self.push(Tok::Newline, pos);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, pos);
        }
        self.push(Tok::Eof, pos);
        Ok(())
    }

    /// Measures indentation of the next logical line and emits INDENT/DEDENT.
    /// Returns false at end of input.
    fn handle_indent(&mut self) -> Result<bool, ParseError> {
        loop {
            let mut width = 0;
            while let Some(c) = self.peek(0) {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\r' | '\x0c' => {}
                    _ => break,
                }
                self.bump();
            }
            match self.peek(0) {
                None => return Ok(false),
                Some('\n') => {
                    self.bump();
                    continue;
                }
                Some('#') => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                    continue;
                }
                Some(_) => {}
            }
            let pos = self.pos();
            let current = *self.indents.last().unwrap_or(&0);
            if width > current {
                self.indents.push(width);
                self.push(Tok::Indent, pos);
            } else {
                while width < *self.indents.last().unwrap_or(&0) {
                    self.indents.pop();
                    self.push(Tok::Dedent, pos);
                }
                if width != *self.indents.last().unwrap_or(&0) {
                    return Err(self.err(pos, "inconsistent dedent"));
                }
            }
            return Ok(true);
        }
    }

    fn string(&mut self, quote: char) -> Result<String, ParseError> {
        let pos = self.pos();
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        let n = if triple { 3 } else { 1 };
        for _ in 0..n {
            self.bump();
        }
        let mut s = String::new();
        loop {
            let Some(c) = self.peek(0) else {
                return Err(self.err(pos, "unterminated string literal"));
            };
            if c == quote && (!triple || (self.peek(1) == Some(quote) && self.peek(2) == Some(quote))) {
                for _ in 0..n {
                    self.bump();
                }
                return Ok(s);
            }
            if c == '\n' && !triple {
                return Err(self.err(pos, "unterminated string literal"));
            }
            if c == '\\' {
                self.bump();
                if let Some(e) = self.bump() {
                    s.push('\\');
                    s.push(e);
                }
                continue;
            }
            s.push(c);
            self.bump();
        }
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let pos = self.pos();
        let mut text = String::new();
        let mut is_int = true;
        while let Some(c) = self.peek(0) {
            if c.is_ascii_digit() || c == '_' {
                if c != '_' {
                    text.push(c);
                }
            } else if c == '.' {
                is_int = false;
                text.push(c);
            } else if c == 'e' || c == 'E' {
                is_int = false;
                text.push(c);
                if matches!(self.peek(1), Some('+') | Some('-')) {
                    self.bump();
                    text.push(self.peek(0).unwrap_or('+'));
                }
            } else {
                break;
            }
            self.bump();
        }
        if self.peek(0).is_some_and(|c| c.is_alphabetic() || c == '_') {
            return Err(self.err(pos, format!("invalid numeric literal '{text}'")));
        }
        let value: f64 = text
            .parse()
            .map_err(|_| self.err(pos, format!("invalid numeric literal '{text}'")))?;
        let int = if is_int { text.parse::<u64>().ok() } else { None };
        Ok(Tok::Number { value, int })
    }
}

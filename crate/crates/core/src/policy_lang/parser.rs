//! Recursive-descent parser producing a validated [`Ast`].

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::error::{ParseError, ParseErrorKind, Pos};
use super::lexer::{tokenize, Tok, Token};

/// Maximum AST depth; keeps the recursive printer and interpreter within stack.
pub const MAX_DEPTH: usize = 256;
/// Bracket/unary nesting allowed while parsing; bounds parser recursion.
const MAX_NESTING: usize = 100;
const MAX_VECTOR_LEN: u64 = 64;

const NAMESPACES: [&str; 3] = ["np", "numpy", "math"];

pub fn parse_ast(source: &str, obs_dim: usize) -> Result<Ast, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        i: 0,
        obs_dim,
        param: String::new(),
        slots: HashMap::new(),
        assigned: HashSet::new(),
        uses: Vec::new(),
        nesting: 0,
    };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    i: usize,
    obs_dim: usize,
    param: String,
    slots: HashMap<String, usize>,
    assigned: HashSet<String>,
    uses: Vec<(String, Pos)>,
    nesting: usize,
}

type PResult<T> = Result<T, ParseError>;

fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
    ParseError::new(pos, ParseErrorKind::Syntax(msg.into()))
}

fn disallowed(pos: Pos, what: impl Into<String>) -> ParseError {
    ParseError::new(pos, ParseErrorKind::Disallowed(what.into()))
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Name(n) => format!("'{n}'"),
        Tok::Number { value, .. } => format!("number {value}"),
        Tok::Str(_) => "string".into(),
        Tok::Op(op) => format!("'{op}'"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indent".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of input".into(),
    }
}

fn keyword_construct(name: &str) -> Option<&'static str> {
    Some(match name {
        "while" | "for" => "loop",
        "import" | "from" => "import",
        "def" => "nested function definition",
        "lambda" => "lambda",
        "class" => "class definition",
        "with" => "with statement",
        "try" | "except" | "finally" | "raise" => "exception handling",
        "global" | "nonlocal" => "global state",
        "del" => "del statement",
        "assert" => "assert statement",
        "yield" => "generator",
        "break" | "continue" => "loop control",
        "async" | "await" => "async code",
        "print" => "I/O",
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.i + k).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.i].pos
    }

    fn advance(&mut self) -> &Token {
        let t = &self.tokens[self.i];
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_name(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == name)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(syntax(
                self.pos(),
                format!("expected '{op}', found {}", describe(self.peek())),
            ))
        }
    }

    fn expect_name(&mut self) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Name(n) => {
                self.advance();
                Ok((n, pos))
            }
            other => Err(syntax(pos, format!("expected a name, found {}", describe(&other)))),
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline) {
            self.advance();
        }
    }

    fn local(&mut self, name: &str) -> Local {
        let next = self.slots.len();
        let slot = *self.slots.entry(name.to_string()).or_insert(next);
        Local {
            name: name.to_string(),
            slot,
        }
    }

    fn program(&mut self) -> PResult<Ast> {
        self.skip_newlines();
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Name(n) if n == "def" => {}
            Tok::Name(n) if keyword_construct(&n).is_some() => {
                return Err(disallowed(pos, keyword_construct(&n).unwrap_or_default()))
            }
            Tok::Eof => return Err(syntax(pos, "empty program")),
            other => {
                return Err(syntax(
                    pos,
                    format!("expected a function definition, found {}", describe(&other)),
                ))
            }
        }
        let ast = self.funcdef()?;
        self.skip_newlines();
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Eof => Ok(ast),
            Tok::Name(n) if n == "def" => Err(disallowed(pos, "more than one function definition")),
            Tok::Name(n) if keyword_construct(&n).is_some() => {
                Err(disallowed(pos, keyword_construct(&n).unwrap_or_default()))
            }
            other => Err(syntax(
                pos,
                format!("unexpected {} after function body", describe(&other)),
            )),
        }
    }

    fn annotation(&mut self) -> PResult<String> {
        let (mut text, _) = self.expect_name()?;
        while self.eat_op(".") {
            let (part, _) = self.expect_name()?;
            text.push('.');
            text.push_str(&part);
        }
        if self.is_op("[") {
            // Subscripted type hints such as `List[float]`; kept verbatim.
            self.advance();
            text.push('[');
            let mut depth = 1;
            while depth > 0 {
                let t = self.advance().tok.clone();
                match t {
                    Tok::Op("[") => {
                        depth += 1;
                        text.push('[');
                    }
                    Tok::Op("]") => {
                        depth -= 1;
                        text.push(']');
                    }
                    Tok::Op(",") => text.push_str(", "),
                    Tok::Op(o) => text.push_str(o),
                    Tok::Name(n) => text.push_str(&n),
                    Tok::Number { value, .. } => text.push_str(&value.to_string()),
                    _ => return Err(syntax(self.pos(), "malformed type annotation")),
                }
            }
        }
        Ok(text)
    }

    fn funcdef(&mut self) -> PResult<Ast> {
        let def_pos = self.pos();
        self.advance(); // def
        let (name, _) = self.expect_name()?;
        self.expect_op("(")?;
        if self.is_op(")") {
            return Err(syntax(self.pos(), "policy function must take exactly one parameter"));
        }
        let (param, _) = self.expect_name()?;
        let param_annotation = if self.eat_op(":") {
            Some(self.annotation()?)
        } else {
            None
        };
        if self.is_op("=") {
            return Err(disallowed(self.pos(), "default parameter value"));
        }
        if self.is_op(",") {
            return Err(syntax(self.pos(), "policy function must take exactly one parameter"));
        }
        self.expect_op(")")?;
        let return_annotation = if self.eat_op("->") {
            Some(self.annotation()?)
        } else {
            None
        };
        self.expect_op(":")?;
        self.param = param.clone();

        let (docstring, body) = self.suite(true)?;

        if let Some((name, pos)) = self
            .uses
            .iter()
            .find(|(n, _)| !self.assigned.contains(n))
            .cloned()
        {
            return Err(ParseError::new(pos, ParseErrorKind::UnknownIdentifier(name)));
        }
        if !contains_return(&body) {
            return Err(ParseError::new(def_pos, ParseErrorKind::NoReturn));
        }
        if block_depth(&body) > MAX_DEPTH {
            return Err(ParseError::new(def_pos, ParseErrorKind::TooDeep));
        }
        Ok(Ast {
            name,
            param,
            param_annotation,
            return_annotation,
            docstring,
            body,
            slots: self.slots.len(),
        })
    }

    /// Parses the block after a `:`. The function body may begin with a docstring.
    fn suite(&mut self, allow_doc: bool) -> PResult<(Option<String>, Vec<Stmt>)> {
        let mut doc = None;
        let mut stmts = Vec::new();
        if !matches!(self.peek(), Tok::Newline) {
            // Single-line suite: `if c: return 1`
            if allow_doc && matches!(self.peek(), Tok::Str(_)) {
                return Err(syntax(self.pos(), "function body contains only a docstring"));
            }
            stmts.push(self.simple_statement()?);
            return Ok((doc, stmts));
        }
        self.advance();
        if !matches!(self.peek(), Tok::Indent) {
            return Err(syntax(self.pos(), "expected an indented block"));
        }
        self.advance();
        if allow_doc {
            if let Tok::Str(s) = self.peek().clone() {
                self.advance();
                doc = Some(s);
                self.end_of_statement()?;
            }
        }
        while !matches!(self.peek(), Tok::Dedent | Tok::Eof) {
            stmts.push(self.statement()?);
        }
        if matches!(self.peek(), Tok::Dedent) {
            self.advance();
        }
        if stmts.is_empty() {
            return Err(syntax(self.pos(), "expected at least one statement in block"));
        }
        Ok((doc, stmts))
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        Ok(self.suite(false)?.1)
    }

    fn end_of_statement(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.advance();
                Ok(())
            }
            Tok::Eof | Tok::Dedent => Ok(()),
            Tok::Op(";") => Err(disallowed(self.pos(), "multiple statements on one line")),
            other => Err(syntax(
                self.pos(),
                format!("expected end of line, found {}", describe(other)),
            )),
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        if self.is_name("if") {
            return self.if_statement();
        }
        self.simple_statement()
    }

    fn if_statement(&mut self) -> PResult<Stmt> {
        self.advance(); // if
        let cond = self.expr()?;
        let body = self.block()?;
        let mut branches = vec![(cond, body)];
        let mut orelse = None;
        loop {
            if self.is_name("elif") {
                self.advance();
                let cond = self.expr()?;
                let body = self.block()?;
                branches.push((cond, body));
            } else if self.is_name("else") {
                self.advance();
                orelse = Some(self.block()?);
                break;
            } else {
                break;
            }
        }
        Ok(Stmt::If { branches, orelse })
    }

    fn simple_statement(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let stmt = match self.peek().clone() {
            Tok::Name(n) if n == "return" => {
                self.advance();
                if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) {
                    return Err(syntax(pos, "return requires a value"));
                }
                let e = self.expr()?;
                if self.is_op(",") {
                    return Err(disallowed(self.pos(), "tuple"));
                }
                Stmt::Return(e)
            }
            Tok::Name(n) if n == "pass" => {
                self.advance();
                Stmt::Pass
            }
            Tok::Name(n) if n == "if" => {
                return Err(syntax(pos, "'if' cannot follow ':' on the same line"));
            }
            Tok::Name(n) if n == "elif" || n == "else" => {
                return Err(syntax(pos, format!("'{n}' without matching 'if'")));
            }
            Tok::Name(n) if keyword_construct(&n).is_some() => {
                return Err(disallowed(pos, keyword_construct(&n).unwrap_or_default()));
            }
            Tok::Name(_) => self.assignment()?,
            Tok::Str(_) => return Err(disallowed(pos, "string literal")),
            other => {
                return Err(syntax(
                    pos,
                    format!("expected a statement, found {}", describe(&other)),
                ))
            }
        };
        self.end_of_statement()?;
        Ok(stmt)
    }

    fn assignment(&mut self) -> PResult<Stmt> {
        let (name, pos) = self.expect_name()?;
        if name == self.param {
            return Err(disallowed(pos, "assignment to the observation parameter"));
        }
        let mut index = None;
        if self.eat_op("[") {
            let ipos = self.pos();
            index = Some(match self.peek().clone() {
                Tok::Number { int: Some(i), .. } => {
                    self.advance();
                    i as usize
                }
                _ => return Err(syntax(ipos, "element index must be a non-negative integer literal")),
            });
            self.expect_op("]")?;
        }
        let op_pos = self.pos();
        let aug = match self.peek().clone() {
            Tok::Op("=") => None,
            Tok::Op("+=") => Some(BinOp::Add),
            Tok::Op("-=") => Some(BinOp::Sub),
            Tok::Op("*=") => Some(BinOp::Mul),
            Tok::Op("/=") => Some(BinOp::Div),
            Tok::Op(op @ ("**=" | "//=" | "%=")) => {
                return Err(disallowed(op_pos, format!("operator {op}")))
            }
            Tok::Op(",") => return Err(disallowed(op_pos, "tuple assignment")),
            Tok::Op("(") => return Err(ParseError::new(pos, ParseErrorKind::UnknownIntrinsic(name))),
            other => {
                return Err(syntax(
                    op_pos,
                    format!("expected an assignment, found {}", describe(&other)),
                ))
            }
        };
        self.advance();
        let rhs = self.expr()?;
        if self.is_op(",") {
            return Err(disallowed(self.pos(), "tuple"));
        }
        // Augmented assignment reads the target before writing it.
        let value = match aug {
            None => rhs,
            Some(op) => {
                self.uses.push((name.clone(), pos));
                let current = match index {
                    None => Expr::Var(self.local(&name)),
                    Some(i) => Expr::Index(self.local(&name), i),
                };
                Expr::binary(op, current, rhs)
            }
        };
        let local = self.local(&name);
        self.assigned.insert(name);
        let target = match index {
            None => Target::Var(local),
            Some(i) => {
                self.uses.push((local.name.clone(), pos));
                Target::Elem(local, i)
            }
        };
        Ok(Stmt::Assign { target, value })
    }

    fn enter(&mut self) -> PResult<()> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(ParseError::new(self.pos(), ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let mut lhs = self.and_expr()?;
        while self.is_name("or") {
            self.advance();
            let rhs = self.and_expr()?;
            lhs = Expr::Bool(BoolOp::Or, Box::new(lhs), Box::new(rhs));
        }
        if self.is_name("if") {
            return Err(disallowed(self.pos(), "conditional expression"));
        }
        self.nesting -= 1;
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.is_name("and") {
            self.advance();
            let rhs = self.not_expr()?;
            lhs = Expr::Bool(BoolOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.is_name("not") {
            self.advance();
            self.enter()?;
            let e = self.not_expr()?;
            self.nesting -= 1;
            return Ok(Expr::Not(Box::new(e)));
        }
        self.comparison()
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        match self.peek() {
            Tok::Op("<") => Some(CmpOp::Lt),
            Tok::Op("<=") => Some(CmpOp::Le),
            Tok::Op(">") => Some(CmpOp::Gt),
            Tok::Op(">=") => Some(CmpOp::Ge),
            Tok::Op("==") => Some(CmpOp::Eq),
            Tok::Op("!=") => Some(CmpOp::Ne),
            _ => None,
        }
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let first = self.arith()?;
        let mut rest = Vec::new();
        while let Some(op) = self.cmp_op() {
            self.advance();
            rest.push((op, self.arith()?));
        }
        if self.is_name("in") || self.is_name("is") {
            return Err(disallowed(self.pos(), "membership/identity test"));
        }
        if rest.is_empty() {
            Ok(first)
        } else {
            Ok(Expr::Compare(Box::new(first), rest))
        }
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op(op @ ("//" | "%")) => {
                    return Err(disallowed(self.pos(), format!("operator {op}")))
                }
                _ => break,
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            Tok::Op("-") => Some(UnaryOp::Neg),
            Tok::Op("+") => Some(UnaryOp::Pos),
            _ => None,
        };
        let Some(op) = op else {
            return self.power();
        };
        self.advance();
        self.enter()?;
        let operand = self.unary()?;
        self.nesting -= 1;
        // Signed literals are folded so that printing and re-parsing is stable.
        Ok(match (op, operand) {
            (UnaryOp::Neg, Expr::Num(v)) => Expr::Num(-v),
            (UnaryOp::Pos, Expr::Num(v)) => Expr::Num(v),
            (op, e) => Expr::Unary(op, Box::new(e)),
        })
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.atom()?;
        if self.is_op("**") {
            return Err(disallowed(self.pos(), "operator **"));
        }
        Ok(base)
    }

    fn literal_index(&mut self) -> PResult<(i64, bool)> {
        // Returns (index, was_literal).
        let neg = self.eat_op("-");
        match self.peek().clone() {
            Tok::Number { int: Some(i), .. } if matches!(self.peek_at(1), Tok::Op("]")) => {
                self.advance();
                Ok((if neg { -(i as i64) } else { i as i64 }, true))
            }
            _ => Ok((0, false)),
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number { value, .. } => {
                if !value.is_finite() {
                    return Err(syntax(pos, "numeric literal out of range"));
                }
                self.advance();
                Ok(Expr::Num(value))
            }
            Tok::Op("(") => {
                self.advance();
                self.enter()?;
                let e = self.expr()?;
                self.nesting -= 1;
                if self.is_op(",") {
                    return Err(disallowed(self.pos(), "tuple"));
                }
                self.expect_op(")")?;
                Ok(e)
            }
            Tok::Op("[") => {
                self.advance();
                let items = self.vector_items()?;
                Ok(Expr::Vector(items))
            }
            Tok::Str(_) => Err(disallowed(pos, "string literal")),
            Tok::Name(name) => {
                self.advance();
                self.name_atom(name, pos)
            }
            other => Err(syntax(
                pos,
                format!("expected an expression, found {}", describe(&other)),
            )),
        }
    }

    /// Items of `[a, b, ...]`; the opening bracket is already consumed.
    fn vector_items(&mut self) -> PResult<Vec<Expr>> {
        let pos = self.pos();
        let mut items = Vec::new();
        while !self.is_op("]") {
            if self.is_name("for") {
                return Err(disallowed(self.pos(), "loop"));
            }
            items.push(self.expr()?);
            if !self.eat_op(",") {
                if self.is_name("for") {
                    return Err(disallowed(self.pos(), "loop"));
                }
                break;
            }
        }
        self.expect_op("]")?;
        if items.is_empty() {
            return Err(syntax(pos, "empty vector literal"));
        }
        if items.len() as u64 > MAX_VECTOR_LEN {
            return Err(syntax(pos, "vector literal too long"));
        }
        Ok(items)
    }

    fn name_atom(&mut self, name: String, pos: Pos) -> PResult<Expr> {
        if let Some(what) = keyword_construct(&name) {
            return Err(disallowed(pos, what));
        }
        if self.is_op(".") {
            self.advance();
            let (attr, _) = self.expect_name()?;
            if !NAMESPACES.contains(&name.as_str()) {
                return Err(disallowed(pos, format!("attribute access '{name}.{attr}'")));
            }
            return match attr.as_str() {
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                _ if self.is_op("(") => self.call(&attr, pos),
                _ => Err(ParseError::new(
                    pos,
                    ParseErrorKind::UnknownIdentifier(format!("{name}.{attr}")),
                )),
            };
        }
        if self.is_op("(") {
            return self.call(&name, pos);
        }
        if name == self.param {
            if !self.eat_op("[") {
                return Err(disallowed(pos, "the observation must be indexed with a literal"));
            }
            let ipos = self.pos();
            let (index, literal) = self.literal_index()?;
            if !literal {
                return Err(ParseError::new(ipos, ParseErrorKind::NonLiteralObsIndex));
            }
            if index < 0 || index as usize >= self.obs_dim {
                return Err(ParseError::new(
                    ipos,
                    ParseErrorKind::ObsIndexOutOfRange {
                        index,
                        obs_dim: self.obs_dim,
                    },
                ));
            }
            self.expect_op("]")?;
            return Ok(Expr::Obs(index as usize));
        }
        if name == "pi" {
            return Ok(Expr::Num(std::f64::consts::PI));
        }
        self.uses.push((name.clone(), pos));
        let local = self.local(&name);
        if self.eat_op("[") {
            let ipos = self.pos();
            let (index, literal) = self.literal_index()?;
            if !literal || index < 0 {
                return Err(syntax(ipos, "element index must be a non-negative integer literal"));
            }
            self.expect_op("]")?;
            return Ok(Expr::Index(local, index as usize));
        }
        Ok(Expr::Var(local))
    }

    fn call(&mut self, name: &str, pos: Pos) -> PResult<Expr> {
        self.expect_op("(")?;
        match name {
            "zeros" => return self.zeros(pos),
            "array" => {
                if !self.eat_op("[") {
                    return Err(syntax(self.pos(), "array() expects a list literal"));
                }
                let items = self.vector_items()?;
                self.expect_op(")")?;
                return Ok(Expr::Vector(items));
            }
            _ => {}
        }
        let Some(intrinsic) = Intrinsic::lookup(name) else {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::UnknownIntrinsic(name.to_string()),
            ));
        };
        self.enter()?;
        let mut args = Vec::new();
        while !self.is_op(")") {
            if matches!(self.peek(), Tok::Name(_)) && matches!(self.peek_at(1), Tok::Op("=")) {
                return Err(disallowed(self.pos(), "keyword argument"));
            }
            args.push(self.expr()?);
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        self.nesting -= 1;
        let (lo, hi) = intrinsic.arity();
        if args.len() < lo || args.len() > hi {
            let expected = if lo == hi {
                lo.to_string()
            } else {
                format!("{lo} to {hi}")
            };
            return Err(ParseError::new(
                pos,
                ParseErrorKind::Arity {
                    name: intrinsic.name().to_string(),
                    expected,
                    got: args.len(),
                },
            ));
        }
        Ok(Expr::Call(intrinsic, args))
    }

    /// `zeros(n)` / `zeros((n,))`, desugared to a vector literal.
    fn zeros(&mut self, pos: Pos) -> PResult<Expr> {
        let wrapped = self.eat_op("(");
        let n = match self.peek().clone() {
            Tok::Number { int: Some(n), .. } if (1..=MAX_VECTOR_LEN).contains(&n) => {
                self.advance();
                n as usize
            }
            _ => return Err(syntax(self.pos(), "zeros() expects a positive integer literal size")),
        };
        if wrapped {
            self.eat_op(",");
            self.expect_op(")")?;
        }
        self.expect_op(")").map_err(|_| syntax(pos, "malformed zeros() call"))?;
        Ok(Expr::Vector(vec![Expr::Num(0.0); n]))
    }
}

fn contains_return(block: &[Stmt]) -> bool {
    block.iter().any(|s| match s {
        Stmt::Return(_) => true,
        Stmt::If { branches, orelse } => {
            branches.iter().any(|(_, b)| contains_return(b))
                || orelse.as_deref().is_some_and(contains_return)
        }
        _ => false,
    })
}

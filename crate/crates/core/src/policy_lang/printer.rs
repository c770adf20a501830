//! Canonical pretty-printer. Output re-parses to a structurally equal [`Ast`].

use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "    ";

// Binding strength, loosest first. An operand printed in a context that
// needs a higher level is parenthesized.
const P_OR: u8 = 1;
const P_AND: u8 = 2;
const P_NOT: u8 = 3;
const P_CMP: u8 = 4;
const P_ADD: u8 = 5;
const P_MUL: u8 = 6;
const P_UNARY: u8 = 7;
const P_ATOM: u8 = 8;

pub fn print_ast(ast: &Ast) -> String {
    print_ast_named(ast, &ast.name)
}

/// Prints the program with its function renamed; the body is untouched.
pub fn print_ast_named(ast: &Ast, name: &str) -> String {
    let mut out = String::new();
    out.push_str(&signature(ast, name));
    out.push('\n');
    if let Some(doc) = &ast.docstring {
        let q = if doc.contains("\"\"\"") || doc.ends_with('"') {
            "'''"
        } else {
            "\"\"\""
        };
        let _ = writeln!(out, "{INDENT}{q}{doc}{q}");
    }
    print_block(&mut out, &ast.body, &ast.param, 1);
    out
}

/// The `def` line, including the trailing colon.
pub fn signature(ast: &Ast, name: &str) -> String {
    let mut s = format!("def {name}({}", ast.param);
    if let Some(a) = &ast.param_annotation {
        let _ = write!(s, ": {a}");
    }
    s.push(')');
    if let Some(r) = &ast.return_annotation {
        let _ = write!(s, " -> {r}");
    }
    s.push(':');
    s
}

fn print_block(out: &mut String, block: &[Stmt], param: &str, level: usize) {
    for stmt in block {
        print_stmt(out, stmt, param, level);
    }
}

fn print_stmt(out: &mut String, stmt: &Stmt, param: &str, level: usize) {
    let pad = INDENT.repeat(level);
    match stmt {
        Stmt::Assign { target, value } => {
            let t = match target {
                Target::Var(l) => l.name.clone(),
                Target::Elem(l, i) => format!("{}[{i}]", l.name),
            };
            let _ = writeln!(out, "{pad}{t} = {}", print_expr(value, param));
        }
        Stmt::Return(e) => {
            let _ = writeln!(out, "{pad}return {}", print_expr(e, param));
        }
        Stmt::Pass => {
            let _ = writeln!(out, "{pad}pass");
        }
        Stmt::If { branches, orelse } => {
            for (k, (cond, body)) in branches.iter().enumerate() {
                let kw = if k == 0 { "if" } else { "elif" };
                let _ = writeln!(out, "{pad}{kw} {}:", print_expr(cond, param));
                print_block(out, body, param, level + 1);
            }
            if let Some(body) = orelse {
                let _ = writeln!(out, "{pad}else:");
                print_block(out, body, param, level + 1);
            }
        }
    }
}

pub fn print_expr(e: &Expr, param: &str) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, param, P_OR);
    s
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Bool(BoolOp::Or, ..) => P_OR,
        Expr::Bool(BoolOp::And, ..) => P_AND,
        Expr::Not(_) => P_NOT,
        Expr::Compare(..) => P_CMP,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => P_ADD,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => P_MUL,
        Expr::Unary(..) => P_UNARY,
        Expr::Num(v) if v.is_sign_negative() => P_UNARY,
        _ => P_ATOM,
    }
}

/// Shortest decimal that parses back to the same f64, always with a `.` or exponent.
pub fn format_num(v: f64) -> String {
    format!("{v:?}")
}

fn write_expr(s: &mut String, e: &Expr, param: &str, min: u8) {
    let own = precedence(e);
    let paren = own < min;
    if paren {
        s.push('(');
    }
    match e {
        Expr::Num(v) => s.push_str(&format_num(*v)),
        Expr::Obs(i) => {
            let _ = write!(s, "{param}[{i}]");
        }
        Expr::Var(l) => s.push_str(&l.name),
        Expr::Index(l, i) => {
            let _ = write!(s, "{}[{i}]", l.name);
        }
        Expr::Vector(items) => {
            s.push('[');
            write_list(s, items, param);
            s.push(']');
        }
        Expr::Call(f, args) => {
            s.push_str(f.name());
            s.push('(');
            write_list(s, args, param);
            s.push(')');
        }
        Expr::Unary(op, inner) => {
            s.push(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Pos => '+',
            });
            // `- -1.0` rather than `--1.0` keeps the literal's sign visually distinct.
            if matches!(**inner, Expr::Num(v) if v.is_sign_negative())
                || matches!(**inner, Expr::Unary(..))
            {
                s.push('(');
                write_expr(s, inner, param, P_OR);
                s.push(')');
            } else {
                write_expr(s, inner, param, P_UNARY);
            }
        }
        Expr::Binary(op, a, b) => {
            let lvl = own;
            write_expr(s, a, param, lvl);
            let _ = write!(s, " {} ", op.symbol());
            write_expr(s, b, param, lvl + 1);
        }
        Expr::Compare(first, rest) => {
            write_expr(s, first, param, P_ADD);
            for (op, rhs) in rest {
                let _ = write!(s, " {} ", op.symbol());
                write_expr(s, rhs, param, P_ADD);
            }
        }
        Expr::Bool(op, a, b) => {
            let word = match op {
                BoolOp::And => "and",
                BoolOp::Or => "or",
            };
            write_expr(s, a, param, own);
            let _ = write!(s, " {word} ");
            write_expr(s, b, param, own + 1);
        }
        Expr::Not(inner) => {
            s.push_str("not ");
            write_expr(s, inner, param, P_NOT);
        }
    }
    if paren {
        s.push(')');
    }
}

fn write_list(s: &mut String, items: &[Expr], param: &str) {
    for (k, item) in items.iter().enumerate() {
        if k > 0 {
            s.push_str(", ");
        }
        write_expr(s, item, param, P_OR);
    }
}

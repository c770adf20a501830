//! Abstract syntax of policy programs.

use std::fmt;

/// A local variable reference, resolved to a frame slot at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct Local {
    pub name: String,
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    /// The operator with its operands swapped in meaning (`<` becomes `>`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
        }
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
}

/// Whitelisted intrinsic functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    Abs,
    Sign,
    Sin,
    Cos,
    Tan,
    Atan2,
    Sqrt,
    Exp,
    Tanh,
    Min,
    Max,
    Clip,
    Floor,
}

impl Intrinsic {
    pub const ALL: [Intrinsic; 13] = [
        Intrinsic::Abs,
        Intrinsic::Sign,
        Intrinsic::Sin,
        Intrinsic::Cos,
        Intrinsic::Tan,
        Intrinsic::Atan2,
        Intrinsic::Sqrt,
        Intrinsic::Exp,
        Intrinsic::Tanh,
        Intrinsic::Min,
        Intrinsic::Max,
        Intrinsic::Clip,
        Intrinsic::Floor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Abs => "abs",
            Intrinsic::Sign => "sign",
            Intrinsic::Sin => "sin",
            Intrinsic::Cos => "cos",
            Intrinsic::Tan => "tan",
            Intrinsic::Atan2 => "atan2",
            Intrinsic::Sqrt => "sqrt",
            Intrinsic::Exp => "exp",
            Intrinsic::Tanh => "tanh",
            Intrinsic::Min => "min",
            Intrinsic::Max => "max",
            Intrinsic::Clip => "clip",
            Intrinsic::Floor => "floor",
        }
    }

    /// Resolves a call name, accepting the numpy spellings seen in generated code.
    pub fn lookup(name: &str) -> Option<Intrinsic> {
        let canonical = match name {
            "arctan2" => "atan2",
            "minimum" => "min",
            "maximum" => "max",
            "absolute" | "fabs" => "abs",
            other => other,
        };
        Intrinsic::ALL.into_iter().find(|i| i.name() == canonical)
    }

    /// Accepted argument counts, as (min, max).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Intrinsic::Atan2 => (2, 2),
            Intrinsic::Clip => (3, 3),
            Intrinsic::Min | Intrinsic::Max => (2, 8),
            _ => (1, 1),
        }
    }
}

impl fmt::Display for Intrinsic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `obs[i]` with a literal, statically bounds-checked index.
    Obs(usize),
    Var(Local),
    /// `name[i]` on a vector-valued local.
    Index(Local, usize),
    Vector(Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Possibly chained comparison: `a < b <= c`.
    Compare(Box<Expr>, Vec<(CmpOp, Expr)>),
    Bool(BoolOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Call(Intrinsic, Vec<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// True for expressions that always produce a boolean.
    pub fn is_boolean(&self) -> bool {
        matches!(self, Expr::Compare(..) | Expr::Bool(..) | Expr::Not(_))
    }

    pub fn depth(&self) -> usize {
        1 + match self {
            Expr::Num(_) | Expr::Obs(_) | Expr::Var(_) | Expr::Index(..) => 0,
            Expr::Vector(items) | Expr::Call(_, items) => {
                items.iter().map(Expr::depth).max().unwrap_or(0)
            }
            Expr::Unary(_, e) | Expr::Not(e) => e.depth(),
            Expr::Binary(_, a, b) | Expr::Bool(_, a, b) => a.depth().max(b.depth()),
            Expr::Compare(first, rest) => rest
                .iter()
                .map(|(_, e)| e.depth())
                .fold(first.depth(), usize::max),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Num(_) | Expr::Obs(_) | Expr::Var(_) | Expr::Index(..) => 0,
            Expr::Vector(items) | Expr::Call(_, items) => items.iter().map(Expr::node_count).sum(),
            Expr::Unary(_, e) | Expr::Not(e) => e.node_count(),
            Expr::Binary(_, a, b) | Expr::Bool(_, a, b) => a.node_count() + b.node_count(),
            Expr::Compare(first, rest) => {
                first.node_count() + rest.iter().map(|(_, e)| e.node_count()).sum::<usize>()
            }
        }
    }

    /// Local names read by this expression.
    pub fn locals_used<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(l) | Expr::Index(l, _) => out.push(&l.name),
            Expr::Num(_) | Expr::Obs(_) => {}
            Expr::Vector(items) | Expr::Call(_, items) => {
                items.iter().for_each(|e| e.locals_used(out))
            }
            Expr::Unary(_, e) | Expr::Not(e) => e.locals_used(out),
            Expr::Binary(_, a, b) | Expr::Bool(_, a, b) => {
                a.locals_used(out);
                b.locals_used(out);
            }
            Expr::Compare(first, rest) => {
                first.locals_used(out);
                rest.iter().for_each(|(_, e)| e.locals_used(out));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Var(Local),
    Elem(Local, usize),
}

impl Target {
    pub fn local(&self) -> &Local {
        match self {
            Target::Var(l) | Target::Elem(l, _) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign { target: Target, value: Expr },
    /// `if` / `elif` chain; `branches[0]` is the `if`.
    If {
        branches: Vec<(Expr, Vec<Stmt>)>,
        orelse: Option<Vec<Stmt>>,
    },
    Return(Expr),
    Pass,
}

impl Stmt {
    pub fn depth(&self) -> usize {
        match self {
            Stmt::Assign { value, .. } => value.depth(),
            Stmt::Return(e) => e.depth(),
            Stmt::Pass => 0,
            Stmt::If { branches, orelse } => {
                let own = branches
                    .iter()
                    .map(|(c, body)| c.depth().max(block_depth(body)))
                    .max()
                    .unwrap_or(0);
                1 + own.max(orelse.as_deref().map(block_depth).unwrap_or(0))
            }
        }
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            Stmt::Assign { value, .. } => value.node_count(),
            Stmt::Return(e) => e.node_count(),
            Stmt::Pass => 0,
            Stmt::If { branches, orelse } => {
                branches
                    .iter()
                    .map(|(c, body)| c.node_count() + block_node_count(body))
                    .sum::<usize>()
                    + orelse.as_deref().map(block_node_count).unwrap_or(0)
            }
        }
    }
}

pub fn block_depth(block: &[Stmt]) -> usize {
    block.iter().map(Stmt::depth).max().unwrap_or(0)
}

pub fn block_node_count(block: &[Stmt]) -> usize {
    block.iter().map(Stmt::node_count).sum()
}

/// The structural part of a program; two programs are equal iff their `Ast`s are.
#[derive(Debug, Clone, PartialEq)]
pub struct Ast {
    pub name: String,
    pub param: String,
    pub param_annotation: Option<String>,
    pub return_annotation: Option<String>,
    pub docstring: Option<String>,
    pub body: Vec<Stmt>,
    /// Number of distinct locals; the size of an evaluation frame.
    pub slots: usize,
}

//! Deterministic mutation engine standing in for a language model.
//!
//! Every candidate is a seeded AST edit of a copy of the better parent, with
//! subtree grafts from the worse parent acting as crossover. Each output is
//! printed and re-parsed before it is emitted, so the batch always satisfies
//! the grammar.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{CandidateBatch, GenerationError, GenerationRequest, Generator};
use crate::policy_lang::ast::{Ast, BinOp, CmpOp, Expr, Intrinsic, Stmt};
use crate::policy_lang::PolicyProgram;
use crate::seed::{rng_from, split_index, split_seed};

pub const GENERATOR_ID: &str = "mock";

const SCALE_FACTORS: [f64; 4] = [0.5, 0.9, 1.1, 2.0];
const OFFSETS: [f64; 4] = [-1.0, -0.1, 0.1, 1.0];
const BRANCH_THRESHOLDS: [f64; 3] = [-0.5, 0.0, 0.5];
/// Programs above this size only receive edits that do not grow them.
const MAX_GROWTH_NODES: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    /// Scale a literal by a factor or shift it by an offset.
    PerturbLiteral,
    /// Replace one comparison operator by its mirror.
    FlipComparison,
    /// Shift a literal inside an `if` condition by a tenth of its magnitude.
    NudgeThreshold,
    /// Replace a numeric subexpression by one taken from the other parent.
    Graft,
    /// Wrap a numeric subexpression in `clip(e, -1, 1)`.
    WrapClip,
    /// Replace `e` by `e + c * obs[i]`.
    InsertTerm,
    /// Replace `return e` by a branch on one observation whose arms return a
    /// perturbed `e` and the original `e`.
    InsertBranch,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::PerturbLiteral,
        Operator::FlipComparison,
        Operator::NudgeThreshold,
        Operator::Graft,
        Operator::WrapClip,
        Operator::InsertTerm,
        Operator::InsertBranch,
    ];

    fn grows(self) -> bool {
        matches!(
            self,
            Operator::Graft | Operator::WrapClip | Operator::InsertTerm | Operator::InsertBranch
        )
    }
}

/// Rounds to six significant digits so literals stay readable across
/// generations.
pub fn round_sig(x: f64) -> f64 {
    let r: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len() as u32) as usize]
}

fn children(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::Num(_) | Expr::Obs(_) | Expr::Var(_) | Expr::Index(..) => Vec::new(),
        Expr::Vector(items) | Expr::Call(_, items) => items.iter().collect(),
        Expr::Unary(_, a) | Expr::Not(a) => vec![a],
        Expr::Binary(_, a, b) | Expr::Bool(_, a, b) => vec![a, b],
        Expr::Compare(first, rest) => std::iter::once(&**first).chain(rest.iter().map(|(_, e)| e)).collect(),
    }
}

fn children_mut(e: &mut Expr) -> Vec<&mut Expr> {
    match e {
        Expr::Num(_) | Expr::Obs(_) | Expr::Var(_) | Expr::Index(..) => Vec::new(),
        Expr::Vector(items) | Expr::Call(_, items) => items.iter_mut().collect(),
        Expr::Unary(_, a) | Expr::Not(a) => vec![a],
        Expr::Binary(_, a, b) | Expr::Bool(_, a, b) => vec![a, b],
        Expr::Compare(first, rest) => std::iter::once(&mut **first)
            .chain(rest.iter_mut().map(|(_, e)| e))
            .collect(),
    }
}

type Pred<'p> = &'p dyn Fn(&Expr, bool) -> bool;

fn count_expr(e: &Expr, in_cond: bool, pred: Pred<'_>) -> usize {
    usize::from(pred(e, in_cond)) + children(e).into_iter().map(|c| count_expr(c, in_cond, pred)).sum::<usize>()
}

fn count_block(block: &[Stmt], pred: Pred<'_>) -> usize {
    block
        .iter()
        .map(|stmt| match stmt {
            Stmt::Assign { value, .. } => count_expr(value, false, pred),
            Stmt::Return(e) => count_expr(e, false, pred),
            Stmt::Pass => 0,
            Stmt::If { branches, orelse } => {
                branches
                    .iter()
                    .map(|(c, b)| count_expr(c, true, pred) + count_block(b, pred))
                    .sum::<usize>()
                    + orelse.as_deref().map_or(0, |b| count_block(b, pred))
            }
        })
        .sum()
}

fn nth_in_expr<'a>(e: &'a mut Expr, in_cond: bool, pred: Pred<'_>, k: &mut usize) -> Option<&'a mut Expr> {
    if pred(e, in_cond) {
        if *k == 0 {
            return Some(e);
        }
        *k -= 1;
    }
    for c in children_mut(e) {
        if let Some(found) = nth_in_expr(c, in_cond, pred, k) {
            return Some(found);
        }
    }
    None
}

fn nth_in_block<'a>(block: &'a mut [Stmt], pred: Pred<'_>, k: &mut usize) -> Option<&'a mut Expr> {
    for stmt in block {
        let found = match stmt {
            Stmt::Assign { value, .. } => nth_in_expr(value, false, pred, k),
            Stmt::Return(e) => nth_in_expr(e, false, pred, k),
            Stmt::Pass => None,
            Stmt::If { branches, orelse } => {
                let mut hit = None;
                for (c, b) in branches.iter_mut() {
                    hit = nth_in_expr(c, true, pred, k).or_else(|| nth_in_block(b, pred, k));
                    if hit.is_some() {
                        break;
                    }
                }
                match hit {
                    Some(h) => Some(h),
                    None => orelse.as_deref_mut().and_then(|b| nth_in_block(b, pred, k)),
                }
            }
        };
        if found.is_some() {
            return found;
        }
    }
    None
}

/// A uniformly chosen site matching `pred`, or `None` when there is none.
fn random_site<'a>(body: &'a mut [Stmt], pred: Pred<'_>, rng: &mut ChaCha8Rng) -> Option<&'a mut Expr> {
    let n = count_block(body, pred);
    if n == 0 {
        return None;
    }
    let mut k = rng.random_range(0..n as u32) as usize;
    nth_in_block(body, pred, &mut k)
}

fn count_returns(block: &[Stmt]) -> usize {
    block
        .iter()
        .map(|s| match s {
            Stmt::Return(_) => 1,
            Stmt::If { branches, orelse } => {
                branches.iter().map(|(_, b)| count_returns(b)).sum::<usize>()
                    + orelse.as_deref().map_or(0, count_returns)
            }
            _ => 0,
        })
        .sum()
}

fn nth_return<'a>(block: &'a mut [Stmt], k: &mut usize) -> Option<&'a mut Stmt> {
    for stmt in block {
        match stmt {
            Stmt::Return(_) => {
                if *k == 0 {
                    return Some(stmt);
                }
                *k -= 1;
            }
            Stmt::If { branches, orelse } => {
                for (_, b) in branches.iter_mut() {
                    if let Some(s) = nth_return(b, k) {
                        return Some(s);
                    }
                }
                if let Some(b) = orelse.as_deref_mut() {
                    if let Some(s) = nth_return(b, k) {
                        return Some(s);
                    }
                }
            }
            _ => {}
        }
    }
    None
}

fn assigned_names(block: &[Stmt], out: &mut HashSet<String>) {
    for stmt in block {
        match stmt {
            Stmt::Assign { target, .. } => {
                out.insert(target.local().name.clone());
            }
            Stmt::If { branches, orelse } => {
                branches.iter().for_each(|(_, b)| assigned_names(b, out));
                if let Some(b) = orelse {
                    assigned_names(b, out);
                }
            }
            _ => {}
        }
    }
}

fn collect_exprs<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    out.push(e);
    for c in children(e) {
        collect_exprs(c, out);
    }
}

fn block_exprs<'a>(block: &'a [Stmt], out: &mut Vec<&'a Expr>) {
    for stmt in block {
        match stmt {
            Stmt::Assign { value, .. } => collect_exprs(value, out),
            Stmt::Return(e) => collect_exprs(e, out),
            Stmt::Pass => {}
            Stmt::If { branches, orelse } => {
                for (c, b) in branches {
                    collect_exprs(c, out);
                    block_exprs(b, out);
                }
                if let Some(b) = orelse {
                    block_exprs(b, out);
                }
            }
        }
    }
}

fn is_numeric(e: &Expr, _in_cond: bool) -> bool {
    !e.is_boolean()
}

/// `e + c * obs[i]`, written with `-` for negative `c`.
fn add_term(e: Expr, rng: &mut ChaCha8Rng, obs_dim: usize) -> Expr {
    let c = pick(rng, &OFFSETS);
    let i = rng.random_range(0..obs_dim as u32) as usize;
    let op = if c < 0.0 { BinOp::Sub } else { BinOp::Add };
    Expr::binary(op, e, Expr::binary(BinOp::Mul, Expr::Num(c.abs()), Expr::Obs(i)))
}

fn perturb(x: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        round_sig(x * pick(rng, &SCALE_FACTORS))
    } else {
        round_sig(x + pick(rng, &OFFSETS))
    }
}

/// Applies one operator to a copy of `high`; `None` when it has no site.
pub fn mutate(low: &Ast, high: &Ast, op: Operator, obs_dim: usize, rng: &mut ChaCha8Rng) -> Option<Ast> {
    let mut ast = high.clone();
    match op {
        Operator::PerturbLiteral => {
            let site = random_site(&mut ast.body, &|e, _| matches!(e, Expr::Num(_)), rng)?;
            if let Expr::Num(x) = site {
                *x = perturb(*x, rng);
            }
        }
        Operator::FlipComparison => {
            let site = random_site(&mut ast.body, &|e, _| matches!(e, Expr::Compare(..)), rng)?;
            if let Expr::Compare(_, rest) = site {
                let j = rng.random_range(0..rest.len() as u32) as usize;
                rest[j].0 = rest[j].0.flipped();
            }
        }
        Operator::NudgeThreshold => {
            let site = random_site(&mut ast.body, &|e, c| c && matches!(e, Expr::Num(_)), rng)?;
            if let Expr::Num(x) = site {
                let step = 0.1 * x.abs().max(0.1);
                *x = round_sig(if rng.random_bool(0.5) { *x + step } else { *x - step });
            }
        }
        Operator::Graft => {
            let mut known = HashSet::new();
            assigned_names(&high.body, &mut known);
            let mut donors = Vec::new();
            block_exprs(&low.body, &mut donors);
            donors.retain(|e| {
                let mut used = Vec::new();
                e.locals_used(&mut used);
                !e.is_boolean() && used.iter().all(|n| known.contains(*n))
            });
            let site = random_site(&mut ast.body, &is_numeric, rng)?;
            donors.retain(|e| *e != site);
            if donors.is_empty() {
                return None;
            }
            *site = donors[rng.random_range(0..donors.len() as u32) as usize].clone();
        }
        Operator::WrapClip => {
            let site = random_site(
                &mut ast.body,
                &|e, _| !e.is_boolean() && !matches!(e, Expr::Call(Intrinsic::Clip, _)),
                rng,
            )?;
            let inner = std::mem::replace(site, Expr::Num(0.0));
            *site = Expr::Call(Intrinsic::Clip, vec![inner, Expr::Num(-1.0), Expr::Num(1.0)]);
        }
        Operator::InsertTerm => {
            let site = random_site(&mut ast.body, &is_numeric, rng)?;
            let inner = std::mem::replace(site, Expr::Num(0.0));
            *site = add_term(inner, rng, obs_dim);
        }
        Operator::InsertBranch => {
            let n = count_returns(&ast.body);
            if n == 0 {
                return None;
            }
            let mut k = rng.random_range(0..n as u32) as usize;
            let i = rng.random_range(0..obs_dim as u32) as usize;
            let threshold = pick(rng, &BRANCH_THRESHOLDS);
            let stmt = nth_return(&mut ast.body, &mut k)?;
            if let Stmt::Return(e) = stmt {
                let original = e.clone();
                let varied = add_term(original.clone(), rng, obs_dim);
                let cond = Expr::Compare(Box::new(Expr::Obs(i)), vec![(CmpOp::Lt, Expr::Num(threshold))]);
                *stmt = Stmt::If {
                    branches: vec![(cond, vec![Stmt::Return(varied)])],
                    orelse: Some(vec![Stmt::Return(original)]),
                };
            }
        }
    }
    Some(ast)
}

/// Produces `n` candidates from the parents. Pure in `seed`.
pub fn generate_mock(low: &PolicyProgram, high: &PolicyProgram, seed: u64, n: usize) -> Vec<String> {
    let mut rng = rng_from(seed);
    let (obs_dim, action_dim) = (high.obs_dim, high.action_dim);
    let large = crate::policy_lang::ast::block_node_count(&high.ast.body) > MAX_GROWTH_NODES;
    let fallback = high.pretty();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut order = Operator::ALL;
        for k in (1..order.len()).rev() {
            order.swap(k, rng.random_range(0..=k as u32) as usize);
        }
        let mut emitted = None;
        for op in order {
            if large && op.grows() {
                continue;
            }
            let Some(mut ast) = mutate(&low.ast, &high.ast, op, obs_dim, &mut rng) else {
                continue;
            };
            ast.name = "policy".into();
            let text = PolicyProgram::from_ast(ast, obs_dim, action_dim).source;
            if PolicyProgram::parse(&text, obs_dim, action_dim).is_ok() {
                emitted = Some(text);
                break;
            }
        }
        out.push(emitted.unwrap_or_else(|| fallback.clone()));
    }
    out
}

/// The mutation engine as a [`Generator`]. Batch `k` uses the stream seed
/// `split_index(split_seed(seed, "generator"), k)`.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    stream: u64,
}

impl MockGenerator {
    pub fn new(run_seed: u64) -> Self {
        MockGenerator {
            stream: split_seed(run_seed, "generator"),
        }
    }

    pub fn batch_seed(&self, batch_index: u64) -> u64 {
        split_index(self.stream, batch_index)
    }
}

impl Generator for MockGenerator {
    fn id(&self) -> &str {
        GENERATOR_ID
    }

    fn generate(&mut self, req: &GenerationRequest<'_>) -> Result<CandidateBatch, GenerationError> {
        Ok(CandidateBatch {
            sources: generate_mock(req.low, req.high, self.batch_seed(req.batch_index), req.n),
            failures: 0,
            prompt_lineage: req.prompt.lineage,
            generator_id: GENERATOR_ID.into(),
        })
    }
}

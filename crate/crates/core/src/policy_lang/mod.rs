//! The restricted policy language: a loop-free, indentation-structured subset
//! of Python covering the constructs seen in control policies.
//!
//! A program is a single function of one parameter (the observation vector).
//! Parsing validates the whole program statically: observation indices are
//! literals checked against `obs_dim`, calls are limited to a whitelist of
//! intrinsics, and every local is assigned somewhere. Evaluation runs under
//! [`SandboxLimits`] and always yields a finite action clamped to `[-1, 1]`.

pub mod ast;
mod error;
mod interp;
mod lexer;
mod parser;
mod printer;

pub use ast::Ast;
pub use error::{EvalError, ParseError, ParseErrorKind, Pos};
pub use interp::{sign, SandboxLimits};
pub use parser::MAX_DEPTH;
pub use printer::{format_num, print_expr, signature};

/// A parsed and validated candidate policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProgram {
    pub source: String,
    pub ast: Ast,
    pub obs_dim: usize,
    pub action_dim: usize,
}

impl PolicyProgram {
    pub fn parse(source: &str, obs_dim: usize, action_dim: usize) -> Result<Self, ParseError> {
        if source.trim().is_empty() {
            return Err(ParseError::new(
                Pos { line: 1, col: 1 },
                ParseErrorKind::Syntax("empty program".into()),
            ));
        }
        let ast = parser::parse_ast(source, obs_dim)?;
        Ok(PolicyProgram {
            source: source.to_string(),
            ast,
            obs_dim,
            action_dim,
        })
    }

    /// Wraps an already-validated AST; the source is its canonical text.
    pub fn from_ast(ast: Ast, obs_dim: usize, action_dim: usize) -> Self {
        PolicyProgram {
            source: printer::print_ast(&ast),
            ast,
            obs_dim,
            action_dim,
        }
    }

    pub fn name(&self) -> &str {
        &self.ast.name
    }

    pub fn eval(&self, obs: &[f64], limits: &SandboxLimits) -> Result<Vec<f64>, EvalError> {
        if obs.len() != self.obs_dim {
            return Err(EvalError::ObservationArity {
                expected: self.obs_dim,
                got: obs.len(),
            });
        }
        interp::evaluate(&self.ast, obs, self.action_dim, limits)
    }

    /// Canonical source text.
    pub fn pretty(&self) -> String {
        printer::print_ast(&self.ast)
    }

    /// Canonical source with the function renamed.
    pub fn pretty_named(&self, name: &str) -> String {
        printer::print_ast_named(&self.ast, name)
    }
}

pub fn parse(source: &str, obs_dim: usize, action_dim: usize) -> Result<PolicyProgram, ParseError> {
    PolicyProgram::parse(source, obs_dim, action_dim)
}

pub fn eval_policy(
    program: &PolicyProgram,
    obs: &[f64],
    limits: &SandboxLimits,
) -> Result<Vec<f64>, EvalError> {
    program.eval(obs, limits)
}

pub fn pretty_print(program: &PolicyProgram) -> String {
    program.pretty()
}

#[cfg(test)]
mod tests {
    use super::ast::{Expr, Stmt};
    use super::*;

    const FIG5: &str = r#"def policy(obs: np.ndarray) -> float:
   """Returns an action between -1 and 1.
   obs size is 3.
   """
   theta = np.arctan2(-obs[1], obs[2])
   theta_dot = obs[2]
   if abs(theta) < 0.5:
      action = 5*theta - 0.9*theta_dot
   else:
      action = np.sign(theta_dot)

   return action
"#;

    fn p1(src: &str) -> PolicyProgram {
        parse(src, 3, 1).unwrap()
    }

    fn err(src: &str) -> ParseError {
        parse(src, 3, 1).unwrap_err()
    }

    fn run(src: &str, obs: &[f64]) -> Result<Vec<f64>, EvalError> {
        p1(src).eval(obs, &SandboxLimits::default())
    }

    #[test]
    fn minimal_program() {
        let p = p1("def policy(obs):\n    return 0.0\n");
        assert_eq!(p.ast.body, vec![Stmt::Return(Expr::Num(0.0))]);
        assert_eq!(p.name(), "policy");
    }

    #[test]
    fn fig5_shape() {
        let p = p1(FIG5);
        let body = &p.ast.body;
        assert_eq!(body.len(), 4);
        assert!(matches!(body[0], Stmt::Assign { .. }));
        assert!(matches!(body[1], Stmt::Assign { .. }));
        match &body[2] {
            Stmt::If { branches, orelse } => {
                assert_eq!(branches.len(), 1);
                assert!(orelse.is_some());
            }
            other => panic!("expected if, got {other:?}"),
        }
        assert!(matches!(body[3], Stmt::Return(_)));
        assert!(p.ast.docstring.as_deref().unwrap().contains("obs size is 3."));
    }

    #[test]
    fn while_loop_is_disallowed() {
        let e = err("def policy(obs):\n    while True: pass\n    return 0.0\n");
        assert_eq!(e.kind, ParseErrorKind::Disallowed("loop".into()));
        assert_eq!(e.pos, Pos { line: 2, col: 5 });
    }

    #[test]
    fn other_disallowed_constructs() {
        for (src, what) in [
            ("def policy(obs):\n    for i in [1]:\n        pass\n    return 0.0\n", "loop"),
            ("import numpy as np\ndef policy(obs):\n    return 0.0\n", "import"),
            ("def policy(obs):\n    import math\n    return 0.0\n", "import"),
            ("def policy(obs):\n    def g(x):\n        return x\n    return 0.0\n", "nested function definition"),
            ("def policy(obs):\n    f = lambda x: x\n    return 0.0\n", "lambda"),
            ("def policy(obs):\n    return obs[0] ** 2\n", "operator **"),
            ("def policy(obs):\n    return 'a'\n", "string literal"),
        ] {
            assert_eq!(err(src).kind, ParseErrorKind::Disallowed(what.into()), "{src}");
        }
    }

    #[test]
    fn unknown_intrinsic_has_line_number() {
        let e = err("def policy(obs):\n    x = 1.0\n    return foo(x)\n");
        assert_eq!(e.kind, ParseErrorKind::UnknownIntrinsic("foo".into()));
        assert_eq!(e.pos.line, 3);
        assert!(e.to_string().starts_with("3:12:"));
    }

    #[test]
    fn static_obs_checks() {
        let e = err("def policy(obs):\n    return obs[99]\n");
        assert!(matches!(
            e.kind,
            ParseErrorKind::ObsIndexOutOfRange { index: 99, obs_dim: 3 }
        ));
        let e = err("def policy(obs):\n    i = 0\n    return obs[i]\n");
        assert_eq!(e.kind, ParseErrorKind::NonLiteralObsIndex);
        let e = err("def policy(obs):\n    return obs[-1]\n");
        assert!(matches!(e.kind, ParseErrorKind::ObsIndexOutOfRange { index: -1, .. }));
    }

    #[test]
    fn unknown_identifier_and_missing_return() {
        let e = err("def policy(obs):\n    return y\n");
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        let e = err("def policy(obs):\n    x = 1.0\n");
        assert_eq!(e.kind, ParseErrorKind::NoReturn);
    }

    #[test]
    fn function_shape_errors() {
        assert!(matches!(err("def policy():\n    return 0.0\n").kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(err("def policy(a, b):\n    return 0.0\n").kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(
            err("def a(obs):\n    return 0.0\ndef b(obs):\n    return 0.0\n").kind,
            ParseErrorKind::Disallowed(_)
        ));
        assert!(matches!(err("   ").kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn arity_is_checked() {
        let e = err("def policy(obs):\n    return clip(obs[0], 1)\n");
        assert!(matches!(e.kind, ParseErrorKind::Arity { got: 2, .. }));
    }

    #[test]
    fn deep_nesting_is_rejected() {
        let src = format!("def policy(obs):\n    return {}1{}\n", "(".repeat(5000), ")".repeat(5000));
        assert_eq!(err(&src).kind, ParseErrorKind::TooDeep);
    }

    #[test]
    fn zero_policy_evaluates_to_zero() {
        assert_eq!(run("def policy(obs):\n    return 0.0\n", &[0.3, -2.0, 7.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn sign_of_velocity() {
        let out = run("def policy(obs):\n    return sign(obs[2])\n", &[0.0, 0.0, -2.5]).unwrap();
        assert_eq!(out, vec![-1.0]);
        let out = run("def policy(obs):\n    return np.sign(obs[2])\n", &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn eq9_linear_branch_at_upright() {
        let src = "def policy(obs):\n    theta = atan2(-obs[1], obs[0])\n    theta_dot = obs[2]\n    if abs(theta) < 0.5:\n        return 5 * theta - 0.9 * theta_dot\n    return sign(theta_dot)\n";
        assert_eq!(run(src, &[1.0, 0.0, 0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn output_is_clamped() {
        assert_eq!(run("def policy(obs):\n    return 5 * obs[0]\n", &[1.0, 0.0, 0.0]).unwrap(), vec![1.0]);
        assert_eq!(run("def policy(obs):\n    return -7.5\n", &[1.0, 0.0, 0.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn division_by_zero_is_nonfinite() {
        let e = run("def policy(obs):\n    return obs[0]/ (obs[1]-obs[1])\n", &[1.0, 2.0, 0.0]).unwrap_err();
        assert!(matches!(e, EvalError::NonFinite(_)));
        let e = run("def policy(obs):\n    return sqrt(obs[1])\n", &[1.0, -2.0, 0.0]).unwrap_err();
        assert!(matches!(e, EvalError::NonFinite(_)));
    }

    #[test]
    fn magnitude_guard() {
        let e = run("def policy(obs):\n    return obs[0] * 1e6 * 1e6\n", &[1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(e, EvalError::NonFinite(_)));
    }

    #[test]
    fn budget_is_enforced() {
        let terms = vec!["obs[0]"; 6000].join(" + ");
        let src = format!("def policy(obs):\n    x = 0.0\n{}    return x\n", format!("    x = x + {terms}\n").repeat(1));
        let p = parse(&src, 3, 1).unwrap_err();
        // 6000 chained terms exceed the static depth limit before running.
        assert_eq!(p.kind, ParseErrorKind::TooDeep);

        let line = format!("    x = x + {}\n", vec!["obs[0]"; 100].join(" + "));
        let src = format!("def policy(obs):\n    x = 0.0\n{}    return x\n", line.repeat(60));
        let e = run(&src, &[1e-6, 0.0, 0.0]).unwrap_err();
        assert_eq!(e, EvalError::BudgetExceeded(10_000));
        let generous = SandboxLimits {
            max_ops_per_call: 1_000_000,
            ..SandboxLimits::default()
        };
        assert!(p1(&src).eval(&[1e-6, 0.0, 0.0], &generous).is_ok());
    }

    #[test]
    fn vector_programs() {
        let src = "def policy(obs):\n    action = np.zeros((2,))\n    action[0] = 1\n    action[1] = action[0] * 0.5\n    return action\n";
        let p = parse(src, 8, 2).unwrap();
        let out = p.eval(&[0.0; 8], &SandboxLimits::default()).unwrap();
        assert_eq!(out, vec![1.0, 0.5]);

        let v = parse("def policy(obs):\n    return [2 * obs[0], -3.0]\n", 8, 2).unwrap();
        assert_eq!(v.eval(&[0.25; 8], &SandboxLimits::default()).unwrap(), vec![0.5, -1.0]);
    }

    #[test]
    fn return_arity_mismatch() {
        let scalar_for_vec = parse("def policy(obs):\n    return 0.0\n", 8, 2).unwrap();
        assert!(matches!(
            scalar_for_vec.eval(&[0.0; 8], &SandboxLimits::default()),
            Err(EvalError::ActionArity { expected: 2, .. })
        ));
        let vec_for_scalar = p1("def policy(obs):\n    return [1.0, 2.0]\n");
        assert!(matches!(
            vec_for_scalar.eval(&[0.0; 3], &SandboxLimits::default()),
            Err(EvalError::ActionArity { expected: 1, .. })
        ));
    }

    #[test]
    fn falls_off_end_without_return() {
        let p = p1("def policy(obs):\n    if obs[0] > 0:\n        return 1.0\n");
        assert_eq!(p.eval(&[1.0, 0.0, 0.0], &SandboxLimits::default()).unwrap(), vec![1.0]);
        assert_eq!(
            p.eval(&[-1.0, 0.0, 0.0], &SandboxLimits::default()),
            Err(EvalError::NoReturn)
        );
    }

    #[test]
    fn unbound_local_at_runtime() {
        let p = p1("def policy(obs):\n    if obs[0] > 0:\n        a = 1.0\n    return a\n");
        assert_eq!(
            p.eval(&[-1.0, 0.0, 0.0], &SandboxLimits::default()),
            Err(EvalError::Unbound("a".into()))
        );
    }

    #[test]
    fn chained_comparison_and_boolean_ops() {
        let src = "def policy(obs):\n    if -1 < obs[0] <= 1 and not obs[1] > 0 or obs[2] == 5:\n        return 1.0\n    return -1.0\n";
        assert_eq!(run(src, &[0.5, -1.0, 0.0]).unwrap(), vec![1.0]);
        assert_eq!(run(src, &[2.0, -1.0, 0.0]).unwrap(), vec![-1.0]);
        assert_eq!(run(src, &[2.0, -1.0, 5.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn intrinsics() {
        let cases: &[(&str, f64)] = &[
            ("abs(-0.5)", 0.5),
            ("min(0.3, -0.2, 0.1)", -0.2),
            ("max(0.3, -0.2)", 0.3),
            ("clip(3.0, -1, 0.5)", 0.5),
            ("floor(0.7)", 0.0),
            ("tanh(0.0)", 0.0),
            ("exp(0.0) - 1", 0.0),
            ("atan2(1.0, 1.0)", std::f64::consts::FRAC_PI_4),
            ("np.arctan2(0.0, -1.0) / np.pi", 1.0),
            ("math.cos(0.0) * 0.5", 0.5),
        ];
        for (e, want) in cases {
            let got = run(&format!("def policy(obs):\n    return {e}\n"), &[0.0; 3]).unwrap()[0];
            assert!((got - want).abs() < 1e-15, "{e}: {got}");
        }
    }

    #[test]
    fn augmented_assignment_desugars() {
        let a = p1("def policy(obs):\n    x = 1.0\n    x += obs[0]\n    return x\n");
        let b = p1("def policy(obs):\n    x = 1.0\n    x = x + obs[0]\n    return x\n");
        assert_eq!(a.ast, b.ast);
    }

    #[test]
    fn pretty_print_normalizes_whitespace() {
        let p = p1("def policy(obs):\n    return  0.0\n");
        assert_eq!(p.pretty(), "def policy(obs):\n    return 0.0\n");
    }

    #[test]
    fn elif_chains_survive_printing() {
        let src = "def policy(obs):\n    if obs[0] < 0:\n        a = 1\n    elif obs[0] < 1:\n        a = 2\n    elif obs[1] < 1:\n        a = 3\n    else:\n        a = 4\n    return a\n";
        let p = p1(src);
        let printed = p.pretty();
        assert_eq!(printed.matches("elif").count(), 2);
        assert_eq!(p1(&printed).ast, p.ast);
    }

    #[test]
    fn fig5_round_trips() {
        let p = p1(FIG5);
        let again = p1(&p.pretty());
        assert_eq!(again.ast, p.ast);
    }

    #[test]
    fn rename_touches_only_the_header() {
        let p = p1(FIG5);
        let renamed = p.pretty_named("policy_v0");
        assert!(renamed.starts_with("def policy_v0(obs: np.ndarray) -> float:"));
        assert_eq!(renamed.lines().skip(1).collect::<Vec<_>>(), p.pretty().lines().skip(1).collect::<Vec<_>>());
    }

    #[test]
    fn printer_parenthesizes_by_precedence() {
        let src = "def policy(obs):\n    return (obs[0] - (obs[1] - obs[2])) * -(obs[0] + 1) / (2 * obs[1])\n";
        let p = p1(src);
        assert_eq!(p1(&p.pretty()).ast, p.ast);
        assert!(p.pretty().contains("obs[0] - (obs[1] - obs[2])"));
    }

    #[test]
    fn single_line_suites() {
        let p = p1("def policy(obs):\n    if obs[0] > 0: return 1.0\n    else: return -1.0\n");
        assert_eq!(p.eval(&[1.0, 0.0, 0.0], &SandboxLimits::default()).unwrap(), vec![1.0]);
    }
}

use std::f64::consts::PI;

use proptest::prelude::*;

use ctrlsynth_core::environments::{ball_in_cup, pendulum, wrap_angle, BallCupParams, BallCupState, EnvId};
use ctrlsynth_core::evaluation::ScoredProgram;
use ctrlsynth_core::generation::{build_prompt, extract_policy, generate_mock};
use ctrlsynth_core::policy_lang::{PolicyProgram, SandboxLimits};
use ctrlsynth_core::program_db::{DbConfig, IslandDatabase};
use ctrlsynth_core::spec_input::TaskSpec;

const LOCALS: [&str; 3] = ["a", "b", "c"];

fn literal() -> impl Strategy<Value = String> {
    prop_oneof![
        (0i32..100).prop_map(|n| format!("{n}")),
        (-1000i32..1000).prop_map(|n| format!("{:?}", n as f64 / 8.0)),
        prop::sample::select(vec!["0.5", "1e-3", "2.5e3", "np.pi", "0.25"]).prop_map(str::to_string),
    ]
}

/// Numeric expression text reading only the first `defined` locals.
fn expr(defined: usize) -> impl Strategy<Value = String> {
    let mut leaves = vec![literal().boxed(), (0usize..3).prop_map(|i| format!("obs[{i}]")).boxed()];
    if defined > 0 {
        leaves.push(prop::sample::select(LOCALS[..defined].to_vec()).prop_map(str::to_string).boxed());
    }
    let leaf = prop::strategy::Union::new(leaves);
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/"]), inner.clone())
                .prop_map(|(a, op, b)| format!("({a} {op} {b})")),
            inner.clone().prop_map(|a| format!("-{a}")),
            (prop::sample::select(vec!["abs", "np.sin", "np.tanh", "np.sign", "math.cos", "np.exp"]), inner.clone())
                .prop_map(|(f, a)| format!("{f}({a})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("np.arctan2({a}, {b})")),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(a, b, c)| format!("np.clip({a}, {b}, {c})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("max({a}, {b})")),
        ]
    })
}

fn condition(defined: usize) -> impl Strategy<Value = String> {
    let cmp = (expr(defined), prop::sample::select(vec!["<", "<=", ">", ">=", "==", "!="]), expr(defined))
        .prop_map(|(a, op, b)| format!("{a} {op} {b}"))
        .boxed();
    prop_oneof![
        cmp.clone(),
        (cmp.clone(), prop::sample::select(vec!["and", "or"]), cmp.clone())
            .prop_map(|(a, op, b)| format!("({a}) {op} ({b})")),
        cmp.prop_map(|a| format!("not ({a})")),
        (expr(defined), literal(), expr(defined)).prop_map(|(a, t, b)| format!("{a} < {t} < {b}")),
    ]
}

fn indent(block: &str) -> String {
    block.lines().map(|l| format!("    {l}\n")).collect()
}

/// A block that assigns locals in order and ends with a return.
fn block(depth: u32) -> BoxedStrategy<String> {
    let assigns = (expr(0), expr(1), expr(2))
        .prop_map(|(a, b, c)| format!("a = {a}\nb = {b}\nc = {c}\n"));
    if depth == 0 {
        return (assigns, expr(3)).prop_map(|(s, r)| format!("{s}return {r}\n")).boxed();
    }
    let tail = prop_oneof![
        expr(3).prop_map(|r| format!("return {r}\n")),
        (condition(3), block(depth - 1), block(depth - 1))
            .prop_map(|(c, t, e)| format!("if {c}:\n{}else:\n{}", indent(&t), indent(&e))),
        (condition(3), block(depth - 1), condition(3), block(depth - 1), expr(3)).prop_map(
            |(c1, t1, c2, t2, r)| format!("if {c1}:\n{}elif {c2}:\n{}return {r}\n", indent(&t1), indent(&t2))
        ),
    ];
    (assigns, tail).prop_map(|(s, t)| format!("{s}{t}")).boxed()
}

fn program() -> impl Strategy<Value = String> {
    (block(2), any::<bool>()).prop_map(|(body, doc)| {
        let doc = if doc { "    \"\"\"Generated.\"\"\"\n" } else { "" };
        format!("def policy(obs: np.ndarray) -> float:\n{doc}{}", indent(&body))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_parse_round_trip(src in program()) {
        let p = PolicyProgram::parse(&src, 3, 1).unwrap();
        let printed = p.pretty();
        let q = PolicyProgram::parse(&printed, 3, 1).unwrap();
        prop_assert_eq!(&q.ast, &p.ast);
        prop_assert_eq!(q.pretty(), printed);
    }

    #[test]
    fn evaluation_is_bounded_or_rejected(src in program(), obs in prop::array::uniform3(-5.0f64..5.0)) {
        let p = PolicyProgram::parse(&src, 3, 1).unwrap();
        if let Ok(a) = p.eval(&obs, &SandboxLimits::default()) {
            prop_assert_eq!(a.len(), 1);
            prop_assert!(a[0].is_finite() && a[0].abs() <= 1.0);
        }
    }

    #[test]
    fn extraction_recovers_appended_body(src in program(), body in expr(0)) {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 10);
        let p = PolicyProgram::parse(&src, 3, 1).unwrap();
        let prompt = build_prompt(&p, &p, &spec, (None, None));
        let got = extract_policy(&format!("{}    return {body}\n", prompt.text)).unwrap();
        let q = PolicyProgram::parse(&got, 3, 1).unwrap();
        let direct = PolicyProgram::parse(&format!("def policy(obs):\n    return {body}\n"), 3, 1).unwrap();
        prop_assert_eq!(q.ast.body, direct.ast.body);
    }

    #[test]
    fn mock_outputs_parse(src in program(), seed in any::<u64>()) {
        let p = PolicyProgram::parse(&src, 3, 1).unwrap();
        for out in generate_mock(&p, &p, seed, 8) {
            prop_assert!(PolicyProgram::parse(&out, 3, 1).is_ok(), "{}", out);
        }
    }

    #[test]
    fn wrap_angle_range(x in -1e6f64..1e6) {
        let w = wrap_angle(x);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((x - w) / (2.0 * PI)).round() * 2.0 * PI - (x - w) < 1e-6 * x.abs().max(1.0));
    }

    #[test]
    fn string_never_overstretches(
        seed in any::<u64>(),
        actions in prop::collection::vec(prop::array::uniform2(-1.0f64..1.0), 1..200),
    ) {
        let p = BallCupParams::default();
        let mut s: BallCupState = ball_in_cup::reset(Some(seed), &p);
        for a in actions {
            s = ball_in_cup::step(&s, &a, &p).unwrap();
            prop_assert!(s.string_extension() <= p.string_length + 1e-9);
            prop_assert!(s.cup_pos.iter().all(|c| c.abs() <= p.box_half));
        }
    }

    #[test]
    fn pendulum_reward_bounds(seed in any::<u64>(), a in -1.0f64..1.0) {
        let s = pendulum::reset(Some(seed));
        let next = pendulum::step(&s, a, &Default::default()).unwrap();
        let r = pendulum::reward(&next, a);
        prop_assert!(r.is_finite() && r <= 1.0);
    }

    #[test]
    fn database_stays_sorted(ops in prop::collection::vec((0usize..4, -20i32..20, any::<bool>()), 1..300)) {
        let cfg = DbConfig { islands: 4, capacity: 5, tau_db: 1.0, reset_period: 17 };
        let mut db = IslandDatabase::new(cfg, 3);
        let mut best = f64::NEG_INFINITY;
        for (i, (island, v, sample)) in ops.into_iter().enumerate() {
            let src = format!("def policy(obs):\n    return {:?}\n", v as f64 / 4.0);
            let sp = ScoredProgram {
                program: PolicyProgram::parse(&src, 3, 1).unwrap(),
                score: v as f64,
                env_id: EnvId::PendulumSwingup,
                iteration: i as u64 + 1,
                generator_id: "test".into(),
                island,
            };
            if db.register(sp, island).unwrap().inserted() && db.reset_due() {
                db.reset_islands();
            }
            if sample {
                let starter = PolicyProgram::parse("def policy(obs):\n    return 0.0\n", 3, 1).unwrap();
                db.sample_prompt_programs(&starter);
            }
            for isl in db.islands() {
                prop_assert!(isl.members.len() <= 5);
                prop_assert!(isl.members.windows(2).all(|w| w[0].score >= w[1].score));
            }
            prop_assert!(db.best_score() >= best);
            best = db.best_score();
        }
    }
}

use super::*;
use proptest::prelude::*;

fn bind(pairs: &[(Var, f64)]) -> HashMap<Var, f64> {
    pairs.iter().copied().collect()
}

fn x(i: usize) -> Box<Expr> {
    Box::new(Expr::Var(Var::X(i)))
}

#[test]
fn parse_sum_of_vars() {
    let e = Expression::parse("x1 + v").unwrap();
    assert_eq!(*e.ast(), Expr::Add(x(0), Box::new(Expr::Var(Var::V))));
    assert_eq!(e.free_vars().iter().copied().collect::<Vec<_>>(), vec![Var::X(0), Var::V]);
}

#[test]
fn parse_call() {
    let e = Expression::parse("exp(2*x1)").unwrap();
    assert_eq!(
        *e.ast(),
        Expr::Call(Func::Exp, Box::new(Expr::Mul(Box::new(Expr::Num(2.0)), x(0))))
    );
}

#[test]
fn syntax_error_offset() {
    let err = Expression::parse("x1 + * v").unwrap_err();
    assert_eq!(err.offset, 5);
    assert!(matches!(err.kind, ParseErrorKind::Unexpected(ref t) if t == "*"));
}

#[test]
fn unknown_identifier_and_function() {
    let err = Expression::parse("x1 + y").unwrap_err();
    assert_eq!(err.offset, 5);
    assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("y".into()));
    let err = Expression::parse("foo(v)").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::UnknownFunction("foo".into()));
    assert!(Expression::parse("x0").is_err());
    assert_eq!(Expression::parse("(v").unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
}

#[test]
fn power_binds_tighter_than_minus() {
    let e = Expression::parse("-x1^2").unwrap();
    assert_eq!(*e.ast(), Expr::Neg(Box::new(Expr::Pow(x(0), Box::new(Expr::Num(2.0))))));
    let e = Expression::parse("2^-v").unwrap();
    assert_eq!(
        *e.ast(),
        Expr::Pow(Box::new(Expr::Num(2.0)), Box::new(Expr::Neg(Box::new(Expr::Var(Var::V)))))
    );
    let (val, _) = Expression::parse("-x1^2").unwrap().eval_with_partials(&bind(&[(Var::X(0), 3.0)]), &[]).unwrap();
    assert_eq!(val, -9.0);
}

#[test]
fn linear_partials() {
    let e = Expression::parse("x1 + v").unwrap();
    let (val, d) = e.eval_with_partials(&bind(&[(Var::X(0), 1.0), (Var::V, 2.0)]), &[Var::X(0), Var::V]).unwrap();
    assert_eq!(val, 3.0);
    assert_eq!(d, vec![1.0, 1.0]);
}

#[test]
fn chain_rule_at_zero() {
    let e = Expression::parse("exp(2*x1)").unwrap();
    let (val, d) = e.eval_with_partials(&bind(&[(Var::X(0), 0.0)]), &[Var::X(0)]).unwrap();
    assert_eq!(val, 1.0);
    assert_eq!(d, vec![2.0]);
}

fn central_fd(e: &Expression, at: &HashMap<Var, f64>, var: Var, h: f64) -> f64 {
    let mut p = at.clone();
    *p.get_mut(&var).unwrap() += h;
    let fp = e.eval_with_partials(&p, &[]).unwrap().0;
    let mut m = at.clone();
    *m.get_mut(&var).unwrap() -= h;
    let fm = e.eval_with_partials(&m, &[]).unwrap().0;
    (fp - fm) / (2.0 * h)
}

#[test]
fn mixed_expression_matches_fd_oracle() {
    let e = Expression::parse("x1*v + sin(x1)").unwrap();
    let at = bind(&[(Var::X(0), 0.5), (Var::V, 1.5)]);
    let (val, d) = e.eval_with_partials(&at, &[Var::X(0), Var::V]).unwrap();
    assert!((val - (0.75 + 0.5f64.sin())).abs() < 1e-15);
    for (k, var) in [Var::X(0), Var::V].into_iter().enumerate() {
        let fd = central_fd(&e, &at, var, 1e-6);
        assert!((d[k] - fd).abs() <= 1e-8 * fd.abs().max(1.0), "{var}: {} vs {fd}", d[k]);
    }
}

#[test]
fn domain_errors_name_subexpression() {
    let e = Expression::parse("1 + log(x1 - 1)").unwrap();
    match e.eval_with_partials(&bind(&[(Var::X(0), 0.5)]), &[]).unwrap_err() {
        EvalError::Domain { subexpr, .. } => assert_eq!(subexpr, "log(x1 - 1.0)"),
        other => panic!("{other:?}"),
    }
    let e = Expression::parse("v/(x1 - 2)").unwrap();
    let err = e.eval_with_partials(&bind(&[(Var::X(0), 2.0), (Var::V, 1.0)]), &[]).unwrap_err();
    assert!(matches!(err, EvalError::Domain { what: "division by zero", .. }));
    let e = Expression::parse("sqrt(v)").unwrap();
    assert!(e.eval_with_partials(&bind(&[(Var::V, -1.0)]), &[]).is_err());
    let e = Expression::parse("v^0.5").unwrap();
    assert!(e.eval_with_partials(&bind(&[(Var::V, -1.0)]), &[]).is_err());
    let e = Expression::parse("exp(exp(v))").unwrap();
    assert!(matches!(e.eval_with_partials(&bind(&[(Var::V, 10.0)]), &[]), Err(EvalError::NonFinite(_))));
}

#[test]
fn unbound_variable() {
    let e = Expression::parse("x2 + v").unwrap();
    let err = e.eval_with_partials(&bind(&[(Var::V, 1.0)]), &[]).unwrap_err();
    assert_eq!(err, EvalError::Unbound(Var::X(1)));
}

#[test]
fn substitution_composes() {
    let rho = Expression::parse("w^3 + w").unwrap();
    let w = Expression::parse("x1 + v").unwrap();
    let c = rho.substitute(Var::W, &w);
    let (val, _) = c.eval_with_partials(&bind(&[(Var::X(0), 1.0), (Var::V, 1.0)]), &[]).unwrap();
    assert_eq!(val, 10.0);
}

#[test]
fn display_examples() {
    for (src, shown) in [
        ("x1 - (v - w)", "x1 - (v - w)"),
        ("(x1 - v) - w", "x1 - v - w"),
        ("(2^v)^3", "(2.0^v)^3.0"),
        ("2^v^3", "2.0^v^3.0"),
        ("(-v)^2", "(-v)^2.0"),
        ("x1/(v*w)", "x1/(v*w)"),
        ("-(x1+v)", "-(x1 + v)"),
        ("1e-5*v", "1e-5*v"),
    ] {
        let e = Expression::parse(src).unwrap();
        assert_eq!(e.to_string(), shown);
        assert_eq!(Expression::parse(&e.to_string()).unwrap(), e);
    }
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..50).prop_map(|k| Expr::Num(k as f64 / 4.0)),
        Just(Expr::Var(Var::X(0))),
        Just(Expr::Var(Var::X(1))),
        Just(Expr::Var(Var::V)),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            // Denominator and log argument kept away from zero.
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(
                Box::new(a),
                Box::new(Expr::Add(Box::new(Expr::Num(2.0)), Box::new(Expr::Call(Func::Sin, Box::new(b)))))
            )),
            inner.clone().prop_map(|a| Expr::Call(Func::Sin, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Cos, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Tanh, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Exp, Box::new(Expr::Call(Func::Sin, Box::new(a))))),
            inner.clone().prop_map(|a| Expr::Call(
                Func::Log,
                Box::new(Expr::Add(Box::new(Expr::Num(1.5)), Box::new(Expr::Call(Func::Cos, Box::new(a)))))
            )),
            inner.clone().prop_map(|a| Expr::Pow(Box::new(a), Box::new(Expr::Num(2.0)))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partials_match_central_differences(ast in arb_expr(), x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, v in 0.5f64..2.0) {
        let e = Expression::from_ast(ast);
        let at = bind(&[(Var::X(0), x1), (Var::X(1), x2), (Var::V, v)]);
        let wrt = [Var::X(0), Var::X(1), Var::V];
        let (_, d) = e.eval_with_partials(&at, &wrt).unwrap();
        for (k, var) in wrt.into_iter().enumerate() {
            let fd = central_fd(&e, &at, var, 1e-6);
            // Relative error with a unit floor: FD round-off on O(1) values is ~1e-10.
            prop_assert!((d[k] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{e}: d/d{var} {} vs {fd}", d[k]);
        }
    }

    #[test]
    fn print_parse_round_trip(ast in arb_expr()) {
        let e = Expression::from_ast(ast);
        let again = Expression::parse(&e.to_string()).unwrap();
        prop_assert_eq!(&again, &e);
    }

    #[test]
    fn evaluation_is_pure(ast in arb_expr(), v in 0.5f64..2.0) {
        let e = Expression::from_ast(ast);
        let at = bind(&[(Var::X(0), 0.3), (Var::X(1), -0.2), (Var::V, v)]);
        let a = e.eval_with_partials(&at, &[Var::V]).unwrap();
        let b = e.eval_with_partials(&at, &[Var::V]).unwrap();
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1[0].to_bits(), b.1[0].to_bits());
    }
}

use parastab::config::{family_coefficients, parse_expr, Expr, Func, Ini, Var, FAMILY_TUPLES};
use parastab::Error;
use proptest::prelude::*;

fn at(s: &str, t: f64, x1: f64, x2: f64) -> f64 {
    parse_expr(s).unwrap().eval(t, x1, x2)
}

#[test]
fn evaluation_examples() {
    assert_eq!(at("2+3*4", 0.3, -1.0, 5.0), 14.0);
    assert_eq!(at("2*x1^3 + x2^2", 0.0, 1.0, 2.0), 6.0);
    assert_eq!(at("sin(t)", 0.0, 0.7, 0.2), 0.0);
    assert!((at("pi", 0.0, 0.0, 0.0) - std::f64::consts::PI).abs() < 1e-15);
}

#[test]
fn syntax_errors_are_reported() {
    for bad in ["2+", "sin(x1", "x3", "2^x1", "(1))"] {
        assert!(
            matches!(parse_expr(bad), Err(Error::SyntaxError { .. })),
            "{bad}"
        );
    }
}

#[test]
fn derivative_examples() {
    let d = parse_expr("2*x1^3")
        .unwrap()
        .differentiate(Var::X1)
        .unwrap();
    for x in [-1.5, 0.0, 0.5, 2.0] {
        assert!((d.eval(0.0, x, 0.0) - 6.0 * x * x).abs() < 1e-12);
    }
    let d = parse_expr("(2*x1^3 + x2^2)*sin(t)")
        .unwrap()
        .differentiate(Var::T)
        .unwrap();
    let expected = parse_expr("(2*x1^3 + x2^2)*cos(t)").unwrap();
    for (t, x1, x2) in [(0.1, 0.2, 0.3), (2.0, -0.5, 0.9)] {
        assert!((d.eval(t, x1, x2) - expected.eval(t, x1, x2)).abs() < 1e-12);
    }
    let d = parse_expr("sin(t)")
        .unwrap()
        .differentiate(Var::X2)
        .unwrap();
    assert_eq!(d, Expr::zero());
}

#[test]
fn family_examples() {
    for tuple in FAMILY_TUPLES {
        let [i, j, k, l, m, n] = tuple;
        let (a, b1, _) = family_coefficients(i, j, k, l, m, n);
        for (x1, x2) in [(0.1, 0.2), (-0.7, 0.4)] {
            assert!((a.eval(0.0, x1, x2) + 3.0).abs() < 1e-15);
            let expected = -(k as f64 * x1).sin() - (l as f64 * x2).cos();
            assert!((b1.eval(0.0, x1, x2) - expected).abs() < 1e-14);
        }
    }
    assert!(FAMILY_TUPLES.contains(&[2, -1, 1, -3, 5, 1]));
    assert_eq!(FAMILY_TUPLES.len(), 6);
}

#[test]
fn ini_sections_and_overrides() {
    let mut ini = Ini::parse(
        "; leading comment\n[time]\nT = 2*pi  # trailing comment\nsteps = 10\n[ic]\nz0 = \"sin(x1) ; not a comment\"\n[actuators]\ncells = 0,1,0,1; 1,2,0,1\n",
    )
    .unwrap();
    assert!(
        (ini.get_number("time", "T").unwrap().unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-15
    );
    assert_eq!(ini.get::<usize>("time", "steps").unwrap(), Some(10));
    assert_eq!(ini.get_str("ic", "z0"), Some("sin(x1) ; not a comment"));
    assert_eq!(ini.get_str("actuators", "cells"), Some("0,1,0,1; 1,2,0,1"));
    ini.apply_override("time.steps=20").unwrap();
    assert_eq!(ini.get::<usize>("time", "steps").unwrap(), Some(20));
    assert!(ini.apply_override("nodot=1").is_err());
    let err = Ini::default().require_section("time").unwrap_err();
    assert_eq!(err.to_string(), "missing section [time]");
}

#[test]
fn ini_type_errors_name_section_and_key() {
    let ini = Ini::parse("[time]\nsteps = ten\n").unwrap();
    let err = ini.get::<usize>("time", "steps").unwrap_err();
    match err {
        Error::Config { section, key, .. } => {
            assert_eq!((section.as_str(), key.as_str()), ("time", "steps"))
        }
        other => panic!("unexpected {other:?}"),
    }
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-8i32..8).prop_map(|n| Expr::Num(n as f64 / 4.0)),
        Just(Expr::Var(Var::T)),
        Just(Expr::Var(Var::X1)),
        Just(Expr::Var(Var::X2)),
    ]
}

/// Grammar-generated expressions without singular points: no division by
/// anything that can vanish and no `abs`.
fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| {
                let den = Expr::Add(
                    Box::new(Expr::Num(2.0)),
                    Box::new(Expr::Pow(Box::new(a.clone()), 2)),
                );
                Expr::Div(Box::new(a), Box::new(den))
            }),
            (inner.clone(), 0i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            (
                inner,
                prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp)]
            )
                .prop_map(|(a, f)| Expr::Call(f, Box::new(a))),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_is_stable(e in expr()) {
        let once = parse_expr(&e.to_string()).unwrap();
        let twice = parse_expr(&once.to_string()).unwrap();
        prop_assert_eq!(&once, &twice);
        let (t, x1, x2) = (0.3, -0.4, 0.7);
        let (a, b) = (e.eval(t, x1, x2), once.eval(t, x1, x2));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0) || (a.is_nan() && b.is_nan()));
    }

    #[test]
    fn derivative_matches_central_differences(
        e in expr(),
        t in -1.0f64..1.0,
        x1 in -1.0f64..1.0,
        x2 in -1.0f64..1.0,
        which in 0usize..3,
    ) {
        let var = [Var::T, Var::X1, Var::X2][which];
        let d = e.differentiate(var).unwrap();
        let h = 1e-6;
        let shift = |s: f64| match var {
            Var::T => e.eval(t + s, x1, x2),
            Var::X1 => e.eval(t, x1 + s, x2),
            Var::X2 => e.eval(t, x1, x2 + s),
        };
        let fd = (shift(h) - shift(-h)) / (2.0 * h);
        let exact = d.eval(t, x1, x2);
        // Skip samples where the function itself is huge; cancellation in
        // the difference quotient then dominates.
        prop_assume!(e.eval(t, x1, x2).abs() < 1e3 && exact.is_finite());
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{} vs {} for {}", fd, exact, e);
    }
}

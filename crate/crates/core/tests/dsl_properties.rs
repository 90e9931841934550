use multitime_core::dsl::{parse, Expr, Func, SpacetimeConfig};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use std::collections::HashMap;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-2.0f64..2.0).prop_map(|v| Expr::real((v * 100.0).round() / 100.0)),
        (1usize..=2, 0usize..4).prop_map(|(k, mu)| Expr::coord(k, mu)),
    ]
}

/// Expressions of depth ≤ 6 over real constants and coordinates. Growth
/// functions only see bounded arguments and denominators stay ≥ 1.
fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(6, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| {
                Expr::div(a, Expr::add(Expr::real(2.0), Expr::call(Func::Cos, b)))
            }),
            (inner.clone(), 1u32..4).prop_map(|(a, n)| Expr::pow(a, n)),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Cos, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Exp, Expr::call(Func::Sin, a))),
            inner.clone().prop_map(|a| Expr::call(Func::Sinh, Expr::call(Func::Cos, a))),
            inner.prop_map(|a| Expr::call(Func::Cosh, Expr::call(Func::Sin, a))),
        ]
    })
}

fn point() -> impl Strategy<Value = SpacetimeConfig> {
    proptest::collection::vec(-1.0f64..1.0, 8).prop_map(|v| SpacetimeConfig::from_flat(&v))
}

fn central(e: &Expr, x: &SpacetimeConfig, k: usize, mu: usize, h: f64) -> Complex64 {
    let v = x.get(k, mu);
    let p = e.evaluate(&x.with(k, mu, v + h)).unwrap();
    let m = e.evaluate(&x.with(k, mu, v - h)).unwrap();
    (p - m) / (2.0 * h)
}

/// Central difference with one Richardson level.
fn richardson(e: &Expr, x: &SpacetimeConfig, k: usize, mu: usize, h: f64) -> Complex64 {
    (central(e, x, k, mu, h / 2.0) * 4.0 - central(e, x, k, mu, h)) / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn derivative_matches_finite_differences(e in expr(), x in point(), k in 1usize..=2, mu in 0usize..4) {
        let exact = e.differentiate(k, mu).evaluate(&x).unwrap();
        let fd = richardson(&e, &x, k, mu, 1e-5);
        let scale = 1.0f64.max(exact.norm()).max(e.evaluate(&x).unwrap().norm());
        prop_assert!((exact - fd).norm() <= 1e-6 * scale, "{e}: {exact} vs {fd}");
    }

    #[test]
    fn mixed_partials_commute(e in expr(), x in point(), j in 1usize..=2, mu in 0usize..4, k in 1usize..=2, nu in 0usize..4) {
        let a = e.differentiate(j, mu).differentiate(k, nu).evaluate(&x).unwrap();
        let b = e.differentiate(k, nu).differentiate(j, mu).evaluate(&x).unwrap();
        prop_assert!((a - b).norm() <= 1e-9 * 1.0f64.max(a.norm()), "{e}: {a} vs {b}");
    }

    #[test]
    fn print_then_parse_round_trips(e in expr(), xs in proptest::collection::vec(point(), 20)) {
        let printed = e.to_string();
        let once = parse(&printed, 2, &HashMap::new()).unwrap();
        let twice = parse(&once.to_string(), 2, &HashMap::new()).unwrap();
        for x in &xs {
            let a = e.evaluate(x).unwrap();
            let b = twice.evaluate(x).unwrap();
            prop_assert!((a - b).norm() <= 1e-12 * 1.0f64.max(a.norm()), "{printed}");
        }
    }
}

#[test]
fn sine_phase_derivative_agrees_with_richardson() {
    let params: HashMap<String, Complex64> = [("c0".to_string(), Complex64::new(0.7, 0.0))].into();
    let e = parse("sin(2*c0*(x2_0 - x1_0))", 2, &params).unwrap();
    let expected = parse("2*c0*cos(2*c0*(x2_0 - x1_0))", 2, &params).unwrap();
    let d = e.differentiate(2, 0);
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for _ in 0..20 {
        let x = point().new_tree(&mut runner).unwrap().current();
        let fd = richardson(&e, &x, 2, 0, 1e-5);
        let exact = d.evaluate(&x).unwrap();
        assert!((exact - expected.evaluate(&x).unwrap()).norm() < 1e-15);
        assert!((exact - fd).norm() < 1e-8, "{exact} vs {fd}");
    }
}

#[test]
fn trivial_derivatives() {
    let none = HashMap::new();
    assert!(parse("3.5", 2, &none).unwrap().differentiate(1, 3).is_zero());
    let d = parse("x1_0 * x2_0", 2, &none).unwrap().differentiate(1, 0);
    assert_eq!(d.to_string(), "x2_0");
}

#[test]
fn branch_convention_for_square_root() {
    let v = parse("sqrt(-4)", 2, &HashMap::new()).unwrap().evaluate(&SpacetimeConfig::zeros(2)).unwrap();
    assert!((v - Complex64::new(0.0, 2.0)).norm() < 1e-15);
}

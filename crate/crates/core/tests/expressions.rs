//! Parser and evaluator checked against an independent tree evaluator.

use proptest::prelude::*;
use spdefe::expr::{parse, EvalError, Expr};

/// Test-side expression tree, rendered to source text with full parentheses.
#[derive(Debug, Clone)]
enum Tree {
    Num(f64),
    X(usize),
    T,
    Neg(Box<Tree>),
    Call(&'static str, Box<Tree>),
    Bin(char, Box<Tree>, Box<Tree>),
    Pow(Box<Tree>, i32),
}

impl Tree {
    fn source(&self) -> String {
        match self {
            Tree::Num(v) => format!("{v:?}"),
            Tree::X(k) => format!("x{}", k + 1),
            Tree::T => "t".into(),
            Tree::Neg(e) => format!("-({})", e.source()),
            Tree::Call(f, e) => format!("{f}({})", e.source()),
            Tree::Bin(op, l, r) => format!("({}) {op} ({})", l.source(), r.source()),
            Tree::Pow(b, n) => format!("({})^{n}", b.source()),
        }
    }

    /// `None` where the library must report an evaluation error.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let v = match self {
            Tree::Num(v) => *v,
            Tree::X(k) => *x.get(*k)?,
            Tree::T => t,
            Tree::Neg(e) => -e.value(x, t)?,
            Tree::Call(f, e) => {
                let a = e.value(x, t)?;
                match *f {
                    "sin" => a.sin(),
                    "cos" => a.cos(),
                    "exp" => a.exp(),
                    "sqrt" if a < 0.0 => return None,
                    "sqrt" => a.sqrt(),
                    _ => unreachable!(),
                }
            }
            Tree::Bin(op, l, r) => {
                let (a, b) = (l.value(x, t)?, r.value(x, t)?);
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' if b == 0.0 => return None,
                    '/' => a / b,
                    _ => unreachable!(),
                }
            }
            Tree::Pow(b, n) => {
                let a = b.value(x, t)?;
                if a == 0.0 && *n < 0 {
                    return None;
                }
                a.powi(*n)
            }
        };
        v.is_finite().then_some(v)
    }
}

fn tree() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        (0.0f64..100.0).prop_map(Tree::Num),
        (0usize..3).prop_map(Tree::X),
        Just(Tree::T),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Tree::Neg(Box::new(e))),
            (
                prop::sample::select(vec!["sin", "cos", "exp", "sqrt"]),
                inner.clone()
            )
                .prop_map(|(f, e)| Tree::Call(f, Box::new(e))),
            (
                prop::sample::select(vec!['+', '-', '*', '/']),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Tree::Bin(op, Box::new(l), Box::new(r))),
            (inner, -3i32..=4).prop_map(|(b, n)| Tree::Pow(Box::new(b), n)),
        ]
    })
}

fn point() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-5.0f64..5.0, 3), 0.0f64..2.0)
}

proptest! {
    #[test]
    fn evaluation_matches_the_reference_tree((tree, (x, t)) in (tree(), point())) {
        let e = parse(&tree.source()).unwrap();
        match (tree.value(&x, t), e.eval(&x, t)) {
            (Some(want), Ok(got)) => prop_assert_eq!(got.to_bits(), want.to_bits()),
            (None, Err(_)) => {}
            (want, got) => prop_assert!(false, "{}: reference {:?}, library {:?}", tree.source(), want, got),
        }
    }

    #[test]
    fn printing_round_trips((tree, (x, t)) in (tree(), point())) {
        let e = parse(&tree.source()).unwrap();
        let printed = e.to_string();
        let again = parse(&printed).unwrap();
        prop_assert_eq!(again.to_string(), printed.clone());
        match (e.eval(&x, t), again.eval(&x, t)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{printed}: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn arbitrary_input_never_panics(s in "[ -~]{0,40}") {
        let _ = parse(&s);
    }
}

#[test]
fn documented_examples() {
    let e = parse("1 + 0.25*cos(x1)").unwrap();
    assert_eq!(e.eval(&[0.0], 0.0).unwrap(), 1.25);
    assert_eq!(parse("-x1^2").unwrap().eval(&[3.0], 0.0).unwrap(), -9.0);
    assert_eq!(parse("2^-1").unwrap().constant_value(), Some(0.5));
    assert!((parse("sin(pi/2)").unwrap().eval(&[], 0.0).unwrap() - 1.0).abs() < 1e-16);
    assert_eq!(
        parse("1/x1").unwrap().eval(&[0.0], 0.0),
        Err(EvalError::DivisionByZero)
    );
    assert!(matches!(
        parse("sqrt(x1)").unwrap().eval(&[-1.0], 0.0),
        Err(EvalError::Domain(_))
    ));
    assert_eq!(
        parse("exp(1000)").unwrap().eval(&[], 0.0),
        Err(EvalError::NonFinite)
    );
    assert!(parse("x2").unwrap().eval(&[1.0], 0.0).is_err());
    for bad in [
        "",
        "1 +",
        "sin 2",
        "x0",
        "cos(1, 2)",
        "2^x1",
        "foo(1)",
        "(1",
    ] {
        assert!(parse(bad).is_err(), "{bad}");
    }
    assert_eq!(Expr::parse("t*x1").unwrap().spatial_arity(), 1);
}

use attrql_core::algebra::{evaluate, AlgebraExpr, Registry, ValidationKind};
use attrql_core::attribution::{Backend, BackendConfig, Rect, WindowSpec};
use attrql_core::nn::{fixtures, truncate, HeadHyper};
use attrql_core::qlang::{
    compile, is_identifier, parse_query, print, Binding, Bindings, Ident, JoinKind, QueryAst, QueryError, Target,
    WindowTerm,
};
use proptest::prelude::*;

fn setup() -> (Registry, Bindings) {
    let f = fixtures::random_cnn("f", 6, 2, 3, 1);
    let g = fixtures::random_cnn("g", 6, 2, 3, 2);
    let data = attrql_core::nn::Dataset::new(
        (0..12).map(|s| fixtures::random_tensor(&[1, 6, 6], -1.0, 1.0, 40 + s)).collect(),
        (0..12).map(|i| i % 3).collect(),
    )
    .unwrap();
    let mut reg = Registry::new();
    reg.add_model("mf", f.clone())
        .add_model("mg", g)
        .add_input("ix", fixtures::random_tensor(&[1, 6, 6], -1.0, 1.0, 7))
        .add_input("iy", fixtures::random_tensor(&[1, 6, 6], -1.0, 1.0, 8));
    reg.add_truncated("mf", 1, truncate(&f, 1, &data, &HeadHyper::default()).unwrap())
        .unwrap();
    let mut b = Bindings::new();
    b.bind("f", Binding::Model { reference: "mf".into() }).unwrap();
    b.bind("f'", Binding::Model { reference: "mg".into() }).unwrap();
    b.bind("x", Binding::Input { reference: "ix".into(), shape: vec![1, 6, 6] }).unwrap();
    b.bind("x'", Binding::Input { reference: "iy".into(), shape: vec![1, 6, 6] }).unwrap();
    b.bind("w", Binding::Window { window: WindowSpec::Rect(Rect::new(1, 1, 2, 3).unwrap()) }).unwrap();
    (reg, b)
}

const STATEMENTS: [&str; 9] = [
    "select * from f(x)",
    "select * from f(x) where w",
    "select 1 from f(x)",
    "select * from f(x) join (select * from f(x'))",
    "select * from f(x) left join (select * from f(x'))",
    "select * from f(x) left join (select * from f'(x))",
    "select 1 from f(x) where w",
    "select 1 from f(x) join (select 1 from f(x'))",
    "select 1 from f(x) left join (select 1 from f(x'))",
];

#[test]
fn statements_parse_lower_validate_and_evaluate() {
    let (reg, b) = setup();
    let cfg = BackendConfig {
        samples: 50,
        ..BackendConfig::with_backend(Backend::ShapleySampled)
    };
    for text in STATEMENTS {
        let ast = parse_query(text).unwrap();
        assert_eq!(print(&ast), text);
        let expr = compile(&ast, &b, &reg).unwrap_or_else(|e| panic!("{text}: {e}"));
        let result = evaluate(&expr, &cfg, &reg).unwrap();
        assert_eq!(result.result.shape(), &[1, 6, 6]);
    }
}

#[test]
fn whitespace_and_case_do_not_matter() {
    let a = parse_query("SELECT  *\n FROM f ( x )  LEFT   JOIN(select * from f(x'))").unwrap();
    assert_eq!(print(&a), STATEMENTS[4]);
}

#[test]
fn validation_errors_carry_clause_offsets() {
    let (reg, b) = setup();
    let text = "select * from f(x) join (select 9 from f(x'))";
    let Err(QueryError::Invalid(errors)) = compile(&parse_query(text).unwrap(), &b, &reg) else {
        panic!("expected validation failure");
    };
    assert_eq!(errors[0].error.kind, ValidationKind::LayerRange);
    assert_eq!(&text[errors[0].offset..errors[0].offset + 1], "9");

    let text = "select * from f(x) where w join (select * from f(x') where rect(0, 0, 1, 1))";
    let Err(QueryError::Invalid(errors)) = compile(&parse_query(text).unwrap(), &b, &reg) else {
        panic!("expected validation failure");
    };
    assert_eq!(errors[0].error.kind, ValidationKind::WindowMismatch);
    assert_eq!(errors[0].offset, 0);
}

#[test]
fn nested_chain_lowers_right_nested() {
    let (reg, b) = setup();
    let text = "select * from f(x) left join (select * from f(x') left join (select * from f(x)))";
    let expr = compile(&parse_query(text).unwrap(), &b, &reg).unwrap();
    let AlgebraExpr::AntiJoin { right, .. } = expr else { panic!() };
    assert!(matches!(*right, AlgebraExpr::AntiJoin { .. }));
}

#[test]
fn error_offsets_stay_inside_text() {
    for text in ["", "select", "select *", "select * from", "select * from f(", "select * from f(x) where", "select * from f(x) left", "select * from f(x) join (select * from f(x)", "(", "select * from f(x) ,"] {
        let err = parse_query(text).unwrap_err();
        assert!(err.offset() <= text.len(), "{text:?}: {err}");
    }
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_']{0,5}".prop_filter("keywords are reserved", |s| is_identifier(s))
}

fn window_term() -> impl Strategy<Value = WindowTerm> {
    prop_oneof![
        ident().prop_map(|n| WindowTerm::Name(Ident::new(n))),
        (0usize..40, 0usize..40, 0usize..40, 0usize..40).prop_map(|(a, b, c, d)| {
            WindowTerm::Rect(Rect::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap())
        }),
    ]
}

fn query(depth: u32) -> BoxedStrategy<QueryAst> {
    let target = prop_oneof![Just(Target::Star), (1usize..1000).prop_map(Target::Layer)];
    let base = (target, ident(), ident(), proptest::option::of(window_term())).prop_map(|(t, m, x, w)| {
        let q = QueryAst::new(t, &m, &x);
        match w {
            Some(w) => q.with_where(w),
            None => q,
        }
    });
    if depth <= 1 {
        return base.boxed();
    }
    let kind = prop_oneof![Just(JoinKind::Join), Just(JoinKind::LeftJoin)];
    (base, proptest::option::of((kind, query(depth - 1))))
        .prop_map(|(q, join)| match join {
            Some((kind, sub)) => q.with_join(kind, sub),
            None => q,
        })
        .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_parse_round_trip(ast in query(4)) {
        prop_assert!(ast.depth() <= 4);
        let text = print(&ast);
        let back = parse_query(&text).unwrap();
        prop_assert_eq!(&back, &ast);
        prop_assert_eq!(print(&back), text);
    }
}

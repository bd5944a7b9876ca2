use attrql_core::algebra::{evaluate, normalize, validate, AlgebraExpr, EvalError, Registry, ValidationKind};
use attrql_core::attribution::{
    shapley_exact, AttributionMap, AttributionResult, Backend, BackendConfig, Window,
};
use attrql_core::nn::{fixtures, truncate, HeadHyper, ModelSpec, Tensor};

const D: usize = 6;

fn exact() -> BackendConfig {
    BackendConfig {
        epsilon: 0.25,
        ..BackendConfig::with_backend(Backend::ShapleyExact)
    }
}

fn model(seed: u64) -> ModelSpec {
    fixtures::random_mlp("f", &[D, 5, 4, 3], seed)
}

/// Registry with model `f` (3 stages, truncations at 1 and 2), a second model
/// `g`, inputs `x1..x3`, and a 4-feature input `short`.
fn registry(seed: u64) -> Registry {
    let f = model(seed);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|k| (0..D).map(|i| if i % 3 == k { 1.5 } else { -0.5 }).collect())
        .collect();
    let data = fixtures::gaussian_blobs(&centers, 20, 0.4, seed + 100);
    let mut reg = Registry::new();
    reg.add_model("f", f.clone())
        .add_model("g", model(seed + 50))
        .add_model("short", fixtures::random_mlp("s", &[4, 3], 1));
    for (i, s) in [11u64, 12, 13].iter().enumerate() {
        reg.add_input(format!("x{}", i + 1), fixtures::random_tensor(&[D], -1.0, 1.0, seed * 10 + s));
    }
    reg.add_input("short", fixtures::random_tensor(&[4], -1.0, 1.0, 9));
    for l in 1..=2 {
        reg.add_truncated("f", l, truncate(&f, l, &data, &HeadHyper::default()).unwrap())
            .unwrap();
    }
    reg
}

fn leaf(input: &str) -> AlgebraExpr {
    AlgebraExpr::identity("f", input)
}

fn win(ix: &[usize]) -> Window {
    Window::new(ix.to_vec(), D).unwrap()
}

fn eval(expr: &AlgebraExpr, reg: &Registry) -> AttributionResult {
    evaluate(expr, &exact(), reg).unwrap().result
}

fn assert_law(lhs: &AlgebraExpr, rhs: &AlgebraExpr, reg: &Registry) {
    let (a, b) = (eval(lhs, reg), eval(rhs, reg));
    assert_eq!(a, b, "law failed:\n{lhs:?}\n{rhs:?}");
    assert!(a.maps().iter().any(|m| m.max_abs() > 0.0), "degenerate fixture");
}

/// Direct kernel evaluation of `phi_w(x; xbar)` on `f` or its truncation,
/// targeting the full model's predicted class.
fn phi(reg: &Registry, input: &str, baseline: Option<&str>, stage: Option<usize>, w: &Window) -> AttributionMap {
    let full = reg.model("f").unwrap();
    let x = reg.input(input).unwrap();
    let xbar = baseline.map_or_else(|| Tensor::zeros(&[D]), |b| (**reg.input(b).unwrap()).clone());
    let class = full.forward(x).unwrap().argmax();
    let m = match stage {
        Some(l) if l < 3 => reg.truncated("f", l).unwrap(),
        _ => full.clone(),
    };
    shapley_exact(&m, x, &xbar, class, w).unwrap()
}

fn weighted(a: &AttributionMap, b: &AttributionMap, eps: f64) -> Vec<f64> {
    a.values().iter().zip(b.values()).map(|(p, q)| eps * p + (1.0 - eps) * q).collect()
}

#[test]
fn projection_laws() {
    for seed in 0..3 {
        let reg = registry(seed);
        let (w, w2) = (win(&[0, 1, 2, 4]), win(&[1, 2, 3, 4, 5]));
        let both = w.intersect(&w2);
        assert_law(&leaf("x1").project(w2.clone()).project(w.clone()), &leaf("x1").project(both.clone()), &reg);
        assert_law(&leaf("x1").project(w.clone()).project(w2.clone()), &leaf("x1").project(both.clone()), &reg);
        assert_law(&leaf("x1").select(2).project(w.clone()), &leaf("x1").project(w.clone()).select(2), &reg);
        assert_law(
            &leaf("x1").join(leaf("x2")).project(w.clone()),
            &leaf("x1").project(w.clone()).join(leaf("x2").project(w.clone())),
            &reg,
        );
        assert_law(
            &leaf("x1").antijoin(leaf("x2")).project(w.clone()),
            &leaf("x1").project(w.clone()).antijoin(leaf("x2").project(w.clone())),
            &reg,
        );

        let single = eval(&leaf("x1").project(both.clone()), &reg);
        assert_eq!(single.as_single().unwrap(), &phi(&reg, "x1", None, None, &both));
    }
}

#[test]
fn selection_laws() {
    for seed in 0..3 {
        let reg = registry(seed);
        for l in 1..=3 {
            assert_law(
                &leaf("x1").join(leaf("x2")).select(l),
                &leaf("x1").select(l).join(leaf("x2").select(l)),
                &reg,
            );
            assert_law(
                &leaf("x1").antijoin(leaf("x2")).select(l),
                &leaf("x1").select(l).antijoin(leaf("x2").select(l)),
                &reg,
            );
            let full = Window::full(D);
            let joined = eval(&leaf("x1").select(l).join(leaf("x2").select(l)), &reg);
            let expected = weighted(&phi(&reg, "x1", None, Some(l), &full), &phi(&reg, "x2", None, Some(l), &full), 0.25);
            assert_eq!(joined.as_single().unwrap().values(), expected.as_slice());
        }
        assert_law(&leaf("x1").select(3).select(2), &leaf("x1").select(2), &reg);
    }
}

#[test]
fn associativity() {
    for seed in 0..3 {
        let reg = registry(seed);
        let (a, b, c) = (leaf("x1"), leaf("x2"), leaf("x3"));
        assert_law(&a.clone().join(b.clone()).join(c.clone()), &a.clone().join(b.clone().join(c.clone())), &reg);
        assert_law(
            &a.clone().antijoin(b.clone()).antijoin(c.clone()),
            &a.clone().antijoin(b.clone().antijoin(c.clone())),
            &reg,
        );

        let AttributionResult::Group(maps) = eval(&a.antijoin(b).antijoin(c), &reg) else {
            panic!("three-way anti-join yields a group");
        };
        let names = ["x1", "x2", "x3"];
        let full = Window::full(D);
        for (i, own) in names.iter().enumerate() {
            let others: Vec<_> = names.iter().filter(|n| *n != own).collect();
            let p = phi(&reg, own, Some(others[0]), None, &full);
            let q = phi(&reg, own, Some(others[1]), None, &full);
            for (k, v) in maps[i].values().iter().enumerate() {
                assert!((v - 0.5 * (p.values()[k] + q.values()[k])).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn binary_antijoin_matches_kernels() {
    let reg = registry(4);
    let w = win(&[0, 2, 3, 5]);
    let AttributionResult::Pair { left, right } =
        eval(&leaf("x1").project(w.clone()).antijoin(leaf("x2").project(w.clone())), &reg)
    else {
        panic!("expected pair");
    };
    assert_eq!(left, phi(&reg, "x1", Some("x2"), None, &w));
    assert_eq!(right, phi(&reg, "x2", Some("x1"), None, &w));
}

#[test]
fn cross_model_antijoin_evaluates_to_single_map() {
    let reg = registry(5);
    let expr = leaf("x1").antijoin(AlgebraExpr::identity("g", "x1"));
    assert!(matches!(expr, AlgebraExpr::AntiJoin { cross_model: true, .. }));
    let result = evaluate(&expr, &exact(), &reg).unwrap();
    let map = result.result.as_single().unwrap();
    let (f, g) = (reg.model("f").unwrap(), reg.model("g").unwrap());
    let x = reg.input("x1").unwrap();
    let class = f.forward(x).unwrap().argmax();
    let value = |m: &ModelSpec, coalition: &[usize]| {
        let mut data = vec![0.0; D];
        for &i in coalition {
            data[i] = x.data()[i];
        }
        m.forward(&Tensor::from_vec(data).unwrap()).unwrap().data()[class]
    };
    // Average of f(S + i) - g(S) over all 720 orderings.
    let mut oracle = [0.0; D];
    let mut perms = 0.0;
    for_each_permutation(&mut (0..D).collect::<Vec<_>>(), 0, &mut |order| {
        perms += 1.0;
        for (pos, &i) in order.iter().enumerate() {
            let before = &order[..pos];
            let mut with = before.to_vec();
            with.push(i);
            oracle[i] += value(f, &with) - value(g, before);
        }
    });
    for (v, o) in map.values().iter().zip(oracle) {
        assert!((v - o / perms).abs() < 1e-12);
    }
}

fn for_each_permutation(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        for_each_permutation(items, k + 1, visit);
        items.swap(k, i);
    }
}

fn kinds(expr: &AlgebraExpr, reg: &Registry) -> Vec<ValidationKind> {
    validate(expr, reg).unwrap_err().into_iter().map(|e| e.kind).collect()
}

#[test]
fn conditional_and_undefined_rows() {
    let reg = registry(0);
    let (w, w2) = (win(&[0, 1]), win(&[1, 2]));
    assert_eq!(
        kinds(&leaf("x1").project(w.clone()).join(leaf("x2").project(w2.clone())), &reg),
        [ValidationKind::WindowMismatch]
    );
    assert_eq!(
        kinds(&leaf("x1").project(w.clone()).antijoin(leaf("x2").project(w2)), &reg),
        [ValidationKind::WindowMismatch]
    );
    assert_eq!(kinds(&leaf("x1").select(3).select(1).select(2), &reg), [ValidationKind::LayerOrder]);
    assert_eq!(
        kinds(&leaf("x1").join(leaf("x2")).antijoin(leaf("x3")), &reg),
        [ValidationKind::MixedJoinAntijoin]
    );
    assert_eq!(
        kinds(&leaf("x1").antijoin(leaf("x2")).join(leaf("x3")), &reg),
        [ValidationKind::MixedJoinAntijoin]
    );
    assert_eq!(
        kinds(&leaf("x1").antijoin(leaf("x2")).antijoin(AlgebraExpr::identity("g", "x3")), &reg),
        [ValidationKind::UndefinedComposition]
    );
    let forged = AlgebraExpr::AntiJoin {
        left: Box::new(leaf("x1")),
        right: Box::new(leaf("x2")),
        cross_model: true,
    };
    assert_eq!(kinds(&forged, &reg), [ValidationKind::UndefinedComposition]);
    assert_eq!(kinds(&leaf("nope"), &reg), [ValidationKind::UnknownRef]);
    assert_eq!(kinds(&AlgebraExpr::identity("f", "short"), &reg), [ValidationKind::ShapeMismatch]);
    assert_eq!(
        kinds(&leaf("x1").join(AlgebraExpr::identity("short", "short")), &reg),
        [ValidationKind::ShapeMismatch]
    );
    assert_eq!(kinds(&leaf("x1").select(4), &reg), [ValidationKind::LayerRange]);
    assert_eq!(kinds(&leaf("x1").select(0), &reg), [ValidationKind::LayerRange]);
}

#[test]
fn error_locations_point_into_the_tree() {
    let reg = registry(0);
    let expr = leaf("x1").join(leaf("x2").select(3).select(2).select(3));
    let errors = validate(&expr, &reg).unwrap_err();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].location, "$.right.child");
    assert!(errors[0].to_string().contains("l <= l'"));
}

#[test]
fn missing_truncation_names_the_remedy() {
    let f = model(0);
    let mut reg = Registry::new();
    reg.add_model("f", f).add_input("x1", fixtures::random_tensor(&[D], -1.0, 1.0, 3));
    let err = evaluate(&leaf("x1").select(1), &exact(), &reg).unwrap_err();
    assert_eq!(err, EvalError::MissingTruncation { model: "f".into(), stage: 1 });
    assert!(err.to_string().contains("truncate"));
    assert!(evaluate(&leaf("x1").select(3), &exact(), &reg).is_ok());
}

#[test]
fn evaluation_reports_normal_form_and_targets() {
    let reg = registry(1);
    let expr = leaf("x1").select(1).join(leaf("x2")).project(win(&[0, 1, 2]));
    let ev = evaluate(&expr, &exact(), &reg).unwrap();
    assert_eq!(ev.normalized, normalize(&expr));
    assert_eq!(ev.targets.len(), 2);
    assert_eq!((ev.targets[0].stage, ev.targets[1].stage), (1, 3));
    assert_eq!(ev.notes.len(), 1);
    let map = ev.result.as_single().unwrap();
    assert!(map.values()[3..].iter().all(|v| *v == 0.0));
}

#[test]
fn expressions_round_trip_through_json() {
    let expr = leaf("x1").select(2).project(win(&[1, 3])).antijoin(leaf("x2").project(win(&[1, 3])));
    let text = serde_json::to_string(&expr).unwrap();
    assert_eq!(serde_json::from_str::<AlgebraExpr>(&text).unwrap(), expr);
}

#[test]
fn join_weight_symmetry() {
    let reg = registry(2);
    let swapped = BackendConfig { epsilon: 0.75, ..exact() };
    let a = evaluate(&leaf("x1").join(leaf("x2")), &exact(), &reg).unwrap().result;
    let b = evaluate(&leaf("x2").join(leaf("x1")), &swapped, &reg).unwrap().result;
    assert_eq!(a, b);
}

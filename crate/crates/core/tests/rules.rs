use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use sede::param_space::{random_chromosome, Chromosome, ParameterSpace, ParameterSpec};
use sede::rules::{
    compile_expression, evaluate_expression, learn_part, parse_expr, sample_expression, DecisionList, Example, Expr,
    Op, Outcome, PartOptions, UnsafeExpression,
};
use sede::{seed, Error};

const FACE_RULES: &str = "HeadPose_Y > 50.34 : class=DNN-error\n\
                          HeadPose_Y < 13.34 : class=DNN-correct\n\
                          HeadPose_Z > 60 & HeadPose_Y > 30 : class=DNN-error\n\
                          HeadPose_Z <= 60 : class=DNN-correct\n\
                          (default) : class=DNN-error\n";

const EXPRESSION_LATEX: &str = r"
& (HeadPose_Y > 50.34 ) \parallel \\
& (\ \neg  (HeadPose_Y > 50.34 ) \&\ \neg  ( HeadPose_Y < 13.34 ) \ \\
& \hspace{10pt} \& ( HeadPose_Z > 60 \ \& \  HeadPose_Y > 30 ) ) \parallel \\
& (\ \neg  (HeadPose_Y > 50.34 )\ \&\ \neg  ( HeadPose_Y < 13.34 ) \ \\
& \hspace{10pt} \&\ \neg  ( HeadPose_Z > 60 \ \& \  HeadPose_Y > 30 ) \\
& \hspace{10pt} \&\ \neg  ( HeadPose_Z <= 60 ) ) \\
";

const BOXED_LATEX: &str = r"
& HeadPose_X > 10  \ \&   \\
& \hspace{10pt} ( (HeadPose_Y > 50.34 ) \parallel \\
& \hspace{20pt} ( \neg (HeadPose_Y > 50.34 ) \& \neg ( HeadPose_Y < 13.34 ) \ \\
& \hspace{30pt} \& ( HeadPose_Z > 60 \ \& \  HeadPose_Y > 30 ) ) \parallel \\
& \hspace{20pt} ( \neg (HeadPose_Y > 50.34 ) \& \neg ( HeadPose_Y < 13.34 ) \ \\
& \hspace{30pt} \& \neg ( HeadPose_Z > 60 \ \& \  HeadPose_Y > 30 ) \\
& \hspace{30pt} \&  \neg ( HeadPose_Z \leq 60 ) ) )\\
";

/// Reads a typeset expression into the plain grammar.
fn from_latex(latex: &str) -> Expr {
    let mut plain = String::new();
    for line in latex.lines() {
        let line = line.trim();
        let line = line.strip_prefix('&').unwrap_or(line);
        let mut line = line.trim_end().trim_end_matches(r"\\").to_string();
        while let Some(start) = line.find(r"\hspace{") {
            let end = start + line[start..].find('}').unwrap();
            line.replace_range(start..=end, " ");
        }
        let line = line
            .replace(r"\parallel", "||")
            .replace(r"\neg", "!")
            .replace(r"\&", "&")
            .replace(r"\leq", "<=")
            .replace(r"\ ", " ");
        plain.push_str(&line);
        plain.push(' ');
    }
    parse_expr(&plain).unwrap()
}

fn face_space() -> Arc<ParameterSpace> {
    ParameterSpace::new(vec![
        ParameterSpec::continuous("HeadPose_X", -30.0, 30.0),
        ParameterSpec::continuous("HeadPose_Y", -90.0, 90.0),
        ParameterSpec::continuous("HeadPose_Z", 0.0, 90.0),
    ])
    .unwrap()
}

fn chromosome(space: &Arc<ParameterSpace>, v: &[f64]) -> Chromosome {
    Chromosome::new(space, v.to_vec()).unwrap()
}

#[test]
fn face_rules_compile_to_the_published_expression() {
    let space = face_space();
    let list = DecisionList::from_text(FACE_RULES).unwrap();
    let unsafe_points = vec![chromosome(&space, &[12.0, 60.0, 10.0]), chromosome(&space, &[25.0, 40.0, 70.0])];
    let expr = compile_expression(&list, &unsafe_points).unwrap();
    assert_eq!(expr.disjuncts.len(), 3);

    let expected = from_latex(EXPRESSION_LATEX);
    let compiled = Expr::any(expr.disjuncts.clone());
    assert_eq!(compiled, expected);
    assert_eq!(
        compiled.to_string(),
        "(HeadPose_Y > 50.34) || !(HeadPose_Y > 50.34) & !(HeadPose_Y < 13.34) & (HeadPose_Z > 60) & (HeadPose_Y > 30) \
         || !(HeadPose_Y > 50.34) & !(HeadPose_Y < 13.34) & !((HeadPose_Z > 60) & (HeadPose_Y > 30)) & !(HeadPose_Z <= 60)"
    );

    // HeadPose_X is the only parameter no rule mentions
    assert_eq!(
        expr.bounds,
        vec![Expr::cmp("HeadPose_X", Op::Ge, 12.0), Expr::cmp("HeadPose_X", Op::Le, 25.0)]
    );

    let boxed = UnsafeExpression {
        bounds: vec![Expr::cmp("HeadPose_X", Op::Gt, 10.0)],
        disjuncts: expr.disjuncts.clone(),
    };
    assert_eq!(boxed.to_expr(), from_latex(BOXED_LATEX));
    assert_eq!(UnsafeExpression::from_expr(parse_expr(&boxed.to_string()).unwrap()), boxed);
}

#[test]
fn single_leading_error_rule_is_kept_verbatim() {
    let list = DecisionList::from_text("a > 1 & b <= 2 : class=DNN-error\n(default) : class=DNN-correct\n").unwrap();
    let space = ParameterSpace::new(vec![
        ParameterSpec::continuous("a", 0.0, 5.0),
        ParameterSpec::continuous("b", 0.0, 5.0),
    ])
    .unwrap();
    let expr = compile_expression(&list, &[chromosome(&space, &[2.0, 1.0])]).unwrap();
    assert!(expr.bounds.is_empty());
    assert_eq!(expr.to_string(), "(a > 1) & (b <= 2)");
}

#[test]
fn lists_without_error_rules_are_rejected() {
    let space = face_space();
    let list = DecisionList::from_text("HeadPose_Y > 1 : class=DNN-correct\n(default) : class=DNN-correct\n").unwrap();
    let err = compile_expression(&list, &[random_chromosome(&space, &mut seed::rng(0))]).unwrap_err();
    assert!(matches!(err, Error::EmptyExpression));
}

/// Checks `expr(c) <=> box(c) & list(c) = error` and that at most one
/// disjunct holds, over `n` random chromosomes.
fn cross_evaluate(list: &DecisionList, expr: &UnsafeExpression, space: &Arc<ParameterSpace>, n: usize, seed: u64) {
    let mut rng = seed::rng(seed);
    for _ in 0..n {
        let c = random_chromosome(space, &mut rng);
        let by_list = expr.in_bounds(&c).unwrap() && list.predict(&c).unwrap() == Outcome::Error;
        assert_eq!(evaluate_expression(expr, &c).unwrap(), by_list, "{c:?}");
        let hits = expr.disjuncts.iter().filter(|d| d.eval(&c).unwrap()).count();
        assert!(hits <= 1, "{hits} disjuncts hold at {c:?}");
    }
}

#[test]
fn expression_agrees_with_list_on_random_points() {
    let space = face_space();
    let list = DecisionList::from_text(FACE_RULES).unwrap();
    let unsafe_points = vec![chromosome(&space, &[-20.0, 60.0, 10.0]), chromosome(&space, &[25.0, 40.0, 70.0])];
    let expr = compile_expression(&list, &unsafe_points).unwrap();
    cross_evaluate(&list, &expr, &space, 10_000, 1);

    // a learned list over mixed parameter kinds
    let space = ParameterSpace::new(vec![
        ParameterSpec::continuous("a", 0.0, 1.0),
        ParameterSpec::integer("n", 0.0, 10.0),
        ParameterSpec::categorical("m", ["p", "q", "r"]),
        ParameterSpec::continuous("u", 0.0, 1.0),
    ])
    .unwrap();
    let mut rng = seed::rng(2);
    let examples: Vec<Example> = (0..400)
        .map(|_| {
            let c = random_chromosome(&space, &mut rng);
            let v = c.values();
            let error = (v[0] > 0.6 && v[2] != 1.0) || (v[1] < 3.0 && v[0] < 0.3) || rng.gen_bool(0.05);
            Example { chromosome: c, error }
        })
        .collect();
    let list = learn_part(&examples, &PartOptions::default()).unwrap();
    assert!(list.rules.len() > 2, "{list}");
    let unsafe_points: Vec<Chromosome> = examples.iter().filter(|e| e.error).map(|e| e.chromosome.clone()).collect();
    let expr = compile_expression(&list, &unsafe_points).unwrap();
    cross_evaluate(&list, &expr, &space, 10_000, 3);
}

#[test]
fn axis_separable_threshold() {
    let space = ParameterSpace::new(vec![
        ParameterSpec::continuous("x", 0.0, 1.0),
        ParameterSpec::continuous("y", 0.0, 1.0),
    ])
    .unwrap();
    for s in 0..5 {
        let mut rng = seed::rng(s);
        let examples: Vec<Example> = (0..200)
            .map(|_| {
                let c = random_chromosome(&space, &mut rng);
                let error = c.values()[0] > 0.5;
                Example { chromosome: c, error }
            })
            .collect();
        let list = learn_part(&examples, &PartOptions::default()).unwrap();
        let Expr::Cmp { param, value, .. } = &list.rules[0].condition[0] else {
            panic!("first rule is not a threshold: {list}");
        };
        assert_eq!(param, "x");
        assert!((0.45..=0.55).contains(value), "threshold {value}");
        assert!(list.accuracy(&examples).unwrap() >= 0.95);
    }
}

#[test]
fn first_match_semantics() {
    let space = face_space();
    let list = DecisionList::from_text(FACE_RULES).unwrap();
    let mut reordered = list.clone();
    reordered.rules.swap(0, 1);
    let mut rng = seed::rng(4);
    let mut differ = 0;
    for _ in 0..2000 {
        let c = random_chromosome(&space, &mut rng);
        let scan = list.rules.iter().find(|r| r.matches(&c).unwrap()).unwrap().outcome;
        assert_eq!(list.predict(&c).unwrap(), scan);
        if reordered.predict(&c).unwrap() != scan {
            differ += 1;
        }
    }
    // the first two rules never overlap, so swapping them is harmless
    assert_eq!(differ, 0);
    let mut reordered = list.clone();
    reordered.rules.swap(1, 2);
    reordered.rules.swap(0, 3);
    let differ = (0..2000)
        .map(|_| random_chromosome(&space, &mut rng))
        .filter(|c| reordered.predict(c).unwrap() != list.predict(c).unwrap())
        .count();
    assert!(differ > 0);
}

#[test]
fn samples_cover_every_disjunct() {
    let space = face_space();
    let list = DecisionList::from_text(FACE_RULES).unwrap();
    let unsafe_points = vec![chromosome(&space, &[-20.0, 60.0, 10.0]), chromosome(&space, &[25.0, 40.0, 70.0])];
    let expr = compile_expression(&list, &unsafe_points).unwrap();
    let a = sample_expression(&expr, &space, 500, &mut seed::rng(5)).unwrap();
    let b = sample_expression(&expr, &space, 500, &mut seed::rng(5)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 500);
    let mut per = vec![0; expr.disjuncts.len()];
    for c in &a {
        assert!(evaluate_expression(&expr, c).unwrap());
        per[expr.disjunct_of(c).unwrap().unwrap()] += 1;
    }
    assert!(per.iter().all(|&k| k > 0), "{per:?}");

    let half = UnsafeExpression::from_expr(parse_expr("HeadPose_Z > 80").unwrap());
    let s = sample_expression(&half, &space, 200, &mut seed::rng(6)).unwrap();
    assert!(s.iter().all(|c| c.values()[2] > 80.0));
}

#[test]
fn impossible_expressions_are_reported() {
    let space = face_space();
    let empty = UnsafeExpression::from_expr(parse_expr("(HeadPose_Z > 80) & (HeadPose_Z < 10)").unwrap());
    let err = sample_expression(&empty, &space, 10, &mut seed::rng(7)).unwrap_err();
    assert!(matches!(err, Error::Unsatisfiable(_)), "{err}");

    // box is nonempty but the negated conjunction excludes all of it
    let hidden = UnsafeExpression::from_expr(
        parse_expr("(HeadPose_Z > 80) & !((HeadPose_Z > 70) & (HeadPose_Y > -100))").unwrap(),
    );
    let err = sample_expression(&hidden, &space, 10, &mut seed::rng(7)).unwrap_err();
    assert!(matches!(err, Error::Unsatisfiable(_)), "{err}");

    let unknown = UnsafeExpression::from_expr(parse_expr("Light > 3").unwrap());
    assert!(matches!(
        sample_expression(&unknown, &space, 10, &mut seed::rng(7)),
        Err(Error::UnknownParameter(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn learned_lists_beat_majority_and_compile_faithfully(
        seed_value in 0u64..10_000,
        n in 10usize..120,
        noise in 0.0f64..0.4,
        cut in 0.1f64..0.9,
    ) {
        let space = ParameterSpace::new(vec![
            ParameterSpec::continuous("a", 0.0, 1.0),
            ParameterSpec::continuous("b", -1.0, 1.0),
            ParameterSpec::categorical("m", ["p", "q"]),
        ])
        .unwrap();
        let mut rng = seed::rng(seed_value);
        let examples: Vec<Example> = (0..n)
            .map(|_| {
                let c = random_chromosome(&space, &mut rng);
                let error = (c.values()[0] > cut) != rng.gen_bool(noise);
                Example { chromosome: c, error }
            })
            .collect();
        let list = learn_part(&examples, &PartOptions::default()).unwrap();
        let errors = examples.iter().filter(|e| e.error).count();
        let majority = errors.max(n - errors) as f64 / n as f64;
        prop_assert!(list.accuracy(&examples).unwrap() >= majority - 1e-12);
        prop_assert!(list.rules.last().unwrap().is_default());

        let unsafe_points: Vec<Chromosome> =
            examples.iter().filter(|e| e.error).map(|e| e.chromosome.clone()).collect();
        match compile_expression(&list, &unsafe_points) {
            Ok(expr) => {
                // a passing training point is only unsafe if the list errs on it
                for e in examples.iter().filter(|e| !e.error) {
                    if expr.eval(&e.chromosome).unwrap() {
                        prop_assert_eq!(list.predict(&e.chromosome).unwrap(), Outcome::Error);
                    }
                }
                cross_evaluate(&list, &expr, &space, 500, seed_value);
            }
            Err(Error::EmptyExpression) => {
                prop_assert!(list.rules.iter().all(|r| r.outcome == Outcome::Correct));
            }
            Err(Error::Contract(_)) => prop_assert!(unsafe_points.is_empty()),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}

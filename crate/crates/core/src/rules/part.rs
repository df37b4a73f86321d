//! PART decision lists: rules read off partial C4.5 trees, separate and
//! conquer.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::expr::{parse_expr, Expr, Op};
use crate::error::{Error, Result};
use crate::param_space::{Chromosome, ParamKind, ParameterSpace};

/// Fewest labelled points `learn_part` accepts.
pub const MIN_EXAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Error,
    Correct,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Error => "DNN-error",
            Outcome::Correct => "DNN-correct",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "DNN-error" => Some(Outcome::Error),
            "DNN-correct" => Some(Outcome::Correct),
            _ => None,
        }
    }
}

/// A chromosome labelled with whether the model failed on it.
#[derive(Debug, Clone)]
pub struct Example {
    pub chromosome: Chromosome,
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    /// Conjunction of atoms; empty for the default rule.
    pub condition: Vec<Expr>,
    pub outcome: Outcome,
    /// Training points the rule covered when it was extracted.
    pub support: usize,
    /// Of those, how many it misclassified.
    pub errors: usize,
}

impl Rule {
    pub fn new(condition: Vec<Expr>, outcome: Outcome) -> Self {
        Self {
            condition,
            outcome,
            support: 0,
            errors: 0,
        }
    }

    pub fn is_default(&self) -> bool {
        self.condition.is_empty()
    }

    pub fn matches(&self, c: &Chromosome) -> Result<bool> {
        for a in &self.condition {
            if !a.eval(c)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The condition as one expression.
    pub fn condition_expr(&self) -> Expr {
        Expr::all(self.condition.clone())
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, a: &Expr) -> fmt::Result {
    match a {
        Expr::Cmp { param, op, value } => write!(f, "{param} {} {value}", op.symbol()),
        Expr::Eq { param, level } => write!(f, "{param} = {level}"),
        other => write!(f, "{other}"),
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_default() {
            f.write_str("(default)")?;
        }
        for (k, a) in self.condition.iter().enumerate() {
            if k > 0 {
                f.write_str(" & ")?;
            }
            write_atom(f, a)?;
        }
        write!(f, " : class={}", self.outcome.name())
    }
}

/// Ordered rules, first match wins; the last rule is the default.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionList {
    pub rules: Vec<Rule>,
    /// Set when the training data held a single class.
    pub single_class: bool,
}

impl DecisionList {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        match rules.last() {
            Some(r) if r.is_default() => {}
            _ => return Err(Error::Contract("decision list must end with a default rule".into())),
        }
        if rules[..rules.len() - 1].iter().any(Rule::is_default) {
            return Err(Error::Contract("only the last rule may be unconditional".into()));
        }
        Ok(Self {
            rules,
            single_class: false,
        })
    }

    pub fn predict(&self, c: &Chromosome) -> Result<Outcome> {
        for r in &self.rules {
            if r.matches(c)? {
                return Ok(r.outcome);
            }
        }
        Err(Error::Contract("decision list without a default rule".into()))
    }

    pub fn accuracy(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Contract("accuracy of an empty set".into()));
        }
        let mut hits = 0;
        for e in examples {
            if (self.predict(&e.chromosome)? == Outcome::Error) == e.error {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    /// One rule per line, `condition : class=DNN-error`.
    pub fn to_text(&self) -> String {
        self.rules.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut offset = 0;
        for line in text.lines() {
            let here = offset;
            offset += line.len() + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (cond, class) = line.rsplit_once(':').ok_or_else(|| Error::Parse {
                position: here,
                message: "rule without `: class=`".into(),
            })?;
            let outcome = class
                .trim()
                .strip_prefix("class=")
                .and_then(Outcome::parse)
                .ok_or_else(|| Error::Parse {
                    position: here + cond.len() + 1,
                    message: format!("unknown class `{}`", class.trim()),
                })?;
            let cond = cond.trim();
            let condition = if cond == "(default)" {
                Vec::new()
            } else {
                match parse_expr(cond).map_err(|e| match e {
                    Error::Parse { position, message } => Error::Parse {
                        position: here + position,
                        message,
                    },
                    other => other,
                })? {
                    Expr::And(atoms) => atoms,
                    Expr::Or(_) => {
                        return Err(Error::Parse {
                            position: here,
                            message: "rule conditions are conjunctions".into(),
                        })
                    }
                    atom => vec![atom],
                }
            };
            rules.push(Rule::new(condition, outcome));
        }
        Self::new(rules)
    }
}

impl fmt::Display for DecisionList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartOptions {
    /// Confidence factor of pessimistic error pruning.
    pub confidence: f64,
    pub min_leaf: usize,
}

impl Default for PartOptions {
    fn default() -> Self {
        Self {
            confidence: 0.25,
            min_leaf: 2,
        }
    }
}

/// Upper confidence bound on the extra errors at a leaf with `n` cases and
/// `e` observed errors (C4.5's `addErrs`).
fn extra_errors(n: f64, e: f64, cf: f64, z: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    if e < 1.0 {
        let base = n * (1.0 - cf.powf(1.0 / n));
        if e == 0.0 {
            return base;
        }
        return base + e * (extra_errors(n, 1.0, cf, z) - base);
    }
    if e + 0.5 >= n {
        return (n - e).max(0.0);
    }
    let f = (e + 0.5) / n;
    let r = (f + z * z / (2.0 * n) + z * (f / n - f * f / n + z * z / (4.0 * n * n)).sqrt()) / (1.0 + z * z / n);
    r * n - e
}

fn entropy(err: usize, ok: usize) -> f64 {
    let n = (err + ok) as f64;
    [err, ok]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone)]
struct Split {
    /// Atom true on `left`.
    test: Expr,
    left: Vec<usize>,
    right: Vec<usize>,
}

enum Node {
    Leaf { outcome: Outcome, n: usize, errors: usize },
    Unexpanded,
    Split { children: Vec<(Expr, Node)> },
}

impl Node {
    fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

struct Learner<'a> {
    space: &'a ParameterSpace,
    values: Vec<&'a [f64]>,
    labels: Vec<bool>,
    opts: &'a PartOptions,
    z: f64,
}

impl Learner<'_> {
    fn counts(&self, rows: &[usize]) -> (usize, usize) {
        let err = rows.iter().filter(|&&r| self.labels[r]).count();
        (err, rows.len() - err)
    }

    /// Majority class; ties go to the error class.
    fn leaf(&self, rows: &[usize]) -> Node {
        let (err, ok) = self.counts(rows);
        let outcome = if err >= ok { Outcome::Error } else { Outcome::Correct };
        Node::Leaf {
            outcome,
            n: rows.len(),
            errors: err.min(ok),
        }
    }

    fn pessimistic(&self, n: usize, e: usize) -> f64 {
        e as f64 + extra_errors(n as f64, e as f64, self.opts.confidence, self.z)
    }

    fn best_split(&self, rows: &[usize]) -> Option<Split> {
        let min_leaf = self.opts.min_leaf.max(1);
        let (err, ok) = self.counts(rows);
        if rows.len() < 2 * min_leaf || err == 0 || ok == 0 {
            return None;
        }
        let n = rows.len() as f64;
        let base = entropy(err, ok);
        // (gain, gain ratio, split)
        let mut candidates: Vec<(f64, f64, Split)> = Vec::new();
        for (a, spec) in self.space.specs().iter().enumerate() {
            let mut best: Option<(f64, Split)> = None;
            let consider = |gain: f64, split: Split, best: &mut Option<(f64, Split)>| {
                if gain > best.as_ref().map_or(0.0, |b| b.0) + 1e-12 {
                    *best = Some((gain, split));
                }
            };
            match &spec.kind {
                ParamKind::Categorical { levels } => {
                    for (l, name) in levels.iter().enumerate() {
                        let (left, right): (Vec<usize>, Vec<usize>) =
                            rows.iter().partition(|&&r| self.values[r][a] as usize == l);
                        if left.len() < min_leaf || right.len() < min_leaf {
                            continue;
                        }
                        let (le, lo) = self.counts(&left);
                        let (re, ro) = self.counts(&right);
                        let gain = base
                            - (left.len() as f64 / n) * entropy(le, lo)
                            - (right.len() as f64 / n) * entropy(re, ro);
                        let split = Split {
                            test: Expr::eq(spec.name.clone(), name.clone()),
                            left,
                            right,
                        };
                        consider(gain, split, &mut best);
                    }
                }
                _ => {
                    let mut sorted: Vec<usize> = rows.to_vec();
                    sorted.sort_by(|&x, &y| self.values[x][a].total_cmp(&self.values[y][a]));
                    let distinct = sorted
                        .windows(2)
                        .filter(|w| self.values[w[0]][a] < self.values[w[1]][a])
                        .count();
                    if distinct == 0 {
                        continue;
                    }
                    let mut le = 0;
                    let mut lo = 0;
                    let mut best_cut: Option<(f64, usize)> = None;
                    for i in 0..sorted.len() - 1 {
                        if self.labels[sorted[i]] {
                            le += 1;
                        } else {
                            lo += 1;
                        }
                        let here = self.values[sorted[i]][a];
                        let next = self.values[sorted[i + 1]][a];
                        let nl = i + 1;
                        let nr = sorted.len() - nl;
                        if here == next || nl < min_leaf || nr < min_leaf {
                            continue;
                        }
                        let gain = base
                            - (nl as f64 / n) * entropy(le, lo)
                            - (nr as f64 / n) * entropy(err - le, ok - lo);
                        if best_cut.is_none_or(|(g, _)| gain > g + 1e-12) {
                            best_cut = Some((gain, i));
                        }
                    }
                    if let Some((gain, i)) = best_cut {
                        // penalty for choosing among many thresholds
                        let gain = gain - (distinct as f64).log2() / n;
                        let threshold = 0.5 * (self.values[sorted[i]][a] + self.values[sorted[i + 1]][a]);
                        let split = Split {
                            test: Expr::cmp(spec.name.clone(), Op::Le, threshold),
                            left: sorted[..=i].to_vec(),
                            right: sorted[i + 1..].to_vec(),
                        };
                        consider(gain, split, &mut best);
                    }
                }
            }
            if let Some((gain, split)) = best {
                let pl = split.left.len() as f64 / n;
                let info = -pl * pl.log2() - (1.0 - pl) * (1.0 - pl).log2();
                candidates.push((gain, gain / info, split));
            }
        }
        if candidates.is_empty() {
            return None;
        }
        let average = candidates.iter().map(|c| c.0).sum::<f64>() / candidates.len() as f64;
        let mut pick: Option<(f64, Split)> = None;
        for (gain, ratio, split) in candidates {
            if gain >= average - 1e-12 && pick.as_ref().is_none_or(|p| ratio > p.0 + 1e-12) {
                pick = Some((ratio, split));
            }
        }
        pick.map(|p| p.1)
    }

    /// Grows a partial tree: subsets are expanded in order of increasing
    /// entropy until one of them does not collapse to a leaf.
    fn expand(&self, rows: &[usize]) -> Node {
        let Some(split) = self.best_split(rows) else {
            return self.leaf(rows);
        };
        let mut subsets = vec![
            (split.test.clone(), split.left),
            (split.test.negate_atom(), split.right),
        ];
        subsets.sort_by(|x, y| {
            let (a, b) = (self.counts(&x.1), self.counts(&y.1));
            entropy(a.0, a.1).total_cmp(&entropy(b.0, b.1))
        });
        let mut children = Vec::with_capacity(2);
        let mut stop = false;
        let mut leaf_estimate = 0.0;
        for (cond, sub) in subsets {
            if stop {
                children.push((cond, Node::Unexpanded));
                continue;
            }
            let child = self.expand(&sub);
            match &child {
                Node::Leaf { n, errors, .. } => leaf_estimate += self.pessimistic(*n, *errors),
                _ => stop = true,
            }
            children.push((cond, child));
        }
        if children.iter().all(|(_, c)| c.is_leaf()) {
            let Node::Leaf { n, errors, .. } = self.leaf(rows) else {
                unreachable!()
            };
            if self.pessimistic(n, errors) <= leaf_estimate + 1e-12 {
                return self.leaf(rows);
            }
        }
        Node::Split { children }
    }
}

impl Expr {
    /// Complement of a single split test.
    fn negate_atom(&self) -> Expr {
        match self {
            Expr::Cmp { param, op, value } => Expr::cmp(param.clone(), op.complement(), *value),
            other => other.clone().negate(),
        }
    }
}

/// The covered leaf with the largest support, with its path.
fn largest_leaf(node: &Node, path: &mut Vec<Expr>, best: &mut Option<(usize, Vec<Expr>, Outcome, usize)>) {
    match node {
        Node::Leaf { outcome, n, errors } => {
            if best.as_ref().is_none_or(|b| *n > b.0) {
                *best = Some((*n, path.clone(), *outcome, *errors));
            }
        }
        Node::Unexpanded => {}
        Node::Split { children } => {
            for (cond, child) in children {
                path.push(cond.clone());
                largest_leaf(child, path, best);
                path.pop();
            }
        }
    }
}

/// Drops thresholds implied by a tighter one on the same parameter.
fn simplify(path: Vec<Expr>) -> Vec<Expr> {
    let mut out: Vec<Expr> = Vec::with_capacity(path.len());
    for atom in path {
        if let Expr::Cmp { param, op, value } = &atom {
            let upper = matches!(op, Op::Le | Op::Lt);
            let existing = out.iter_mut().find(|e| {
                matches!(e, Expr::Cmp { param: p, op: o, .. } if p == param && matches!(o, Op::Le | Op::Lt) == upper)
            });
            if let Some(Expr::Cmp { value: v, op: o, .. }) = existing {
                let tighter = if upper { *value < *v } else { *value > *v };
                if tighter {
                    *v = *value;
                    *o = *op;
                }
                continue;
            }
        }
        out.push(atom);
    }
    out
}

/// Learns a PART decision list predicting model failures from parameters.
pub fn learn_part(examples: &[Example], opts: &PartOptions) -> Result<DecisionList> {
    if examples.len() < MIN_EXAMPLES {
        return Err(Error::Contract(format!(
            "PART needs at least {MIN_EXAMPLES} examples, got {}",
            examples.len()
        )));
    }
    if !(0.0 < opts.confidence && opts.confidence <= 0.5) {
        return Err(Error::Config(format!("confidence factor {} outside (0, 0.5]", opts.confidence)));
    }
    let space = examples[0].chromosome.space();
    if examples.iter().any(|e| !e.chromosome.same_space(&examples[0].chromosome)) {
        return Err(Error::Contract("examples from different parameter spaces".into()));
    }
    let errors = examples.iter().filter(|e| e.error).count();
    let global = if errors * 2 >= examples.len() { Outcome::Error } else { Outcome::Correct };
    if errors == 0 || errors == examples.len() {
        let mut list = DecisionList::new(vec![Rule {
            condition: Vec::new(),
            outcome: global,
            support: examples.len(),
            errors: 0,
        }])?;
        list.single_class = true;
        return Ok(list);
    }

    let z = Normal::new(0.0, 1.0)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(1.0 - opts.confidence);
    let learner = Learner {
        space,
        values: examples.iter().map(|e| e.chromosome.values()).collect(),
        labels: examples.iter().map(|e| e.error).collect(),
        opts,
        z,
    };
    let mut remaining: Vec<usize> = (0..examples.len()).collect();
    let mut rules = Vec::new();
    while remaining.len() >= opts.min_leaf.max(1) {
        let tree = learner.expand(&remaining);
        let mut best = None;
        largest_leaf(&tree, &mut Vec::new(), &mut best);
        let (n, path, outcome, errs) = best.expect("a partial tree has at least one expanded leaf");
        let condition = simplify(path);
        if condition.is_empty() {
            rules.push(Rule {
                condition,
                outcome,
                support: n,
                errors: errs,
            });
            return DecisionList::new(rules);
        }
        let rule = Rule {
            condition,
            outcome,
            support: n,
            errors: errs,
        };
        let mut kept = Vec::with_capacity(remaining.len());
        for r in remaining {
            if !rule.matches(&examples[r].chromosome)? {
                kept.push(r);
            }
        }
        remaining = kept;
        rules.push(rule);
    }
    let outcome = if remaining.is_empty() {
        global
    } else {
        let (err, ok) = learner.counts(&remaining);
        if err >= ok {
            Outcome::Error
        } else {
            Outcome::Correct
        }
    };
    let (err, ok) = learner.counts(&remaining);
    rules.push(Rule {
        condition: Vec::new(),
        outcome,
        support: remaining.len(),
        errors: if outcome == Outcome::Error { ok } else { err },
    });
    DecisionList::new(rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::{random_chromosome, ParameterSpec};
    use crate::seed;

    #[test]
    fn pessimistic_bound_matches_c45_reference() {
        // Quinlan: U_25%(0, 6) = 0.206, so a 6-case leaf with no errors is charged 1.236
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.75);
        assert!((extra_errors(6.0, 0.0, 0.25, z) - 6.0 * (1.0 - 0.25f64.powf(1.0 / 6.0))).abs() < 1e-12);
        assert!((extra_errors(6.0, 0.0, 0.25, z) - 6.0 * 0.206).abs() < 5e-3);
        assert_eq!(extra_errors(3.0, 3.0, 0.25, z), 0.0);
    }

    #[test]
    fn text_round_trip() {
        let text = "HeadPose_Y > 50.34 : class=DNN-error\n\
                    HeadPose_Y < 13.34 : class=DNN-correct\n\
                    HeadPose_Z > 60 & HeadPose_Y > 30 : class=DNN-error\n\
                    HeadPose_Z <= 60 : class=DNN-correct\n\
                    (default) : class=DNN-error\n";
        let list = DecisionList::from_text(text).unwrap();
        assert_eq!(list.rules.len(), 5);
        assert_eq!(list.to_text(), text);
        assert!(DecisionList::from_text("a > 1 : class=DNN-error\n").is_err());
        assert!(DecisionList::from_text("a > 1 : class=maybe\n(default) : class=DNN-error").is_err());
    }

    #[test]
    fn single_class_is_flagged() {
        let space = ParameterSpace::new(vec![ParameterSpec::continuous("a", 0.0, 1.0)]).unwrap();
        let mut rng = seed::rng(0);
        let ex: Vec<Example> = (0..20)
            .map(|_| Example {
                chromosome: random_chromosome(&space, &mut rng),
                error: true,
            })
            .collect();
        let list = learn_part(&ex, &PartOptions::default()).unwrap();
        assert!(list.single_class);
        assert_eq!(list.rules.len(), 1);
        assert_eq!(list.rules[0].outcome, Outcome::Error);
    }

    #[test]
    fn simplify_keeps_tightest() {
        let path = vec![
            Expr::cmp("a", Op::Le, 5.0),
            Expr::cmp("b", Op::Gt, 1.0),
            Expr::cmp("a", Op::Le, 3.0),
            Expr::cmp("b", Op::Gt, 0.5),
        ];
        assert_eq!(simplify(path), vec![Expr::cmp("a", Op::Le, 3.0), Expr::cmp("b", Op::Gt, 1.0)]);
    }

    #[test]
    fn categorical_splits() {
        let space = ParameterSpace::new(vec![
            ParameterSpec::categorical("m", ["p", "q", "r"]),
            ParameterSpec::continuous("a", 0.0, 1.0),
        ])
        .unwrap();
        let mut rng = seed::rng(2);
        let ex: Vec<Example> = (0..90)
            .map(|_| {
                let c = random_chromosome(&space, &mut rng);
                let error = c.values()[0] == 1.0;
                Example { chromosome: c, error }
            })
            .collect();
        let list = learn_part(&ex, &PartOptions::default()).unwrap();
        assert_eq!(list.accuracy(&ex).unwrap(), 1.0);
        assert_eq!(list.to_text(), "!(m = q) : class=DNN-correct\n(default) : class=DNN-error\n");
    }
}

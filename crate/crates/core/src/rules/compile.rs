//! Turning a decision list into one logical expression of the unsafe space,
//! and sampling from it.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::expr::{Expr, Op};
use super::part::{DecisionList, Outcome};
use crate::error::{Error, Result};
use crate::param_space::{Chromosome, ParamKind, ParameterSpace};
use crate::seed;

/// Rejection sampling gives up on a disjunct below this acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-5;

/// The unsafe space: `bounds & (d1 || d2 || ...)`. The disjuncts come from
/// the error rules of a decision list and are mutually exclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeExpression {
    /// Ranges of parameters no rule mentions, taken from the unsafe points.
    pub bounds: Vec<Expr>,
    /// One conjunction per error rule. An empty conjunction is `true`.
    pub disjuncts: Vec<Expr>,
}

fn is_true(e: &Expr) -> bool {
    matches!(e, Expr::And(xs) if xs.is_empty())
}

impl UnsafeExpression {
    pub fn to_expr(&self) -> Expr {
        let mut terms = self.bounds.clone();
        if !self.disjuncts.iter().any(is_true) {
            terms.push(Expr::any(self.disjuncts.clone()));
        }
        Expr::all(terms)
    }

    /// Rebuilds the structure of an expression read back from text.
    pub fn from_expr(expr: Expr) -> Self {
        let atom = |e: &Expr| matches!(e, Expr::Cmp { .. } | Expr::Eq { .. });
        match expr {
            Expr::Or(ds) => Self {
                bounds: Vec::new(),
                disjuncts: ds,
            },
            Expr::And(mut xs) if matches!(xs.last(), Some(Expr::Or(_))) && xs[..xs.len() - 1].iter().all(atom) => {
                let Some(Expr::Or(ds)) = xs.pop() else { unreachable!() };
                Self {
                    bounds: xs,
                    disjuncts: ds,
                }
            }
            other => Self {
                bounds: Vec::new(),
                disjuncts: vec![other],
            },
        }
    }

    pub fn check(&self, space: &ParameterSpace) -> Result<()> {
        self.bounds.iter().chain(&self.disjuncts).try_for_each(|e| e.check(space))
    }

    pub fn in_bounds(&self, c: &Chromosome) -> Result<bool> {
        for b in &self.bounds {
            if !b.eval(c)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Index of the first disjunct `c` satisfies, ignoring the bounds.
    pub fn disjunct_of(&self, c: &Chromosome) -> Result<Option<usize>> {
        for (k, d) in self.disjuncts.iter().enumerate() {
            if d.eval(c)? {
                return Ok(Some(k));
            }
        }
        Ok(None)
    }

    pub fn eval(&self, c: &Chromosome) -> Result<bool> {
        Ok(self.in_bounds(c)? && self.disjunct_of(c)?.is_some())
    }
}

impl fmt::Display for UnsafeExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}

/// One disjunct per error rule: the negated conditions of every earlier rule
/// joined with the rule's own condition. Parameters absent from the list are
/// bounded by the range the unsafe points cover.
pub fn compile_expression(list: &DecisionList, unsafe_points: &[Chromosome]) -> Result<UnsafeExpression> {
    let mut disjuncts = Vec::new();
    let mut negated: Vec<Expr> = Vec::new();
    for rule in &list.rules {
        if rule.outcome == Outcome::Error {
            let mut terms = negated.clone();
            terms.extend(rule.condition.iter().cloned());
            disjuncts.push(if terms.is_empty() { Expr::And(Vec::new()) } else { Expr::all(terms) });
        }
        if !rule.condition.is_empty() {
            negated.push(rule.condition_expr().negate());
        }
    }
    if disjuncts.is_empty() {
        return Err(Error::EmptyExpression);
    }
    let first = unsafe_points
        .first()
        .ok_or_else(|| Error::Contract("no unsafe points to bound the expression".into()))?;
    let space = first.space();
    let mut used: Vec<&str> = Vec::new();
    for rule in &list.rules {
        for atom in &rule.condition {
            for p in atom.params() {
                if !used.contains(&p) {
                    used.push(p);
                }
            }
        }
    }
    let mut bounds = Vec::new();
    for (i, spec) in space.specs().iter().enumerate() {
        if used.contains(&spec.name.as_str()) {
            continue;
        }
        let column = unsafe_points.iter().map(|c| c.values()[i]);
        match &spec.kind {
            ParamKind::Categorical { levels } => {
                let first = first.values()[i];
                if column.clone().all(|v| v == first) {
                    bounds.push(Expr::eq(spec.name.clone(), levels[first as usize].clone()));
                }
            }
            _ => {
                let lo = column.clone().fold(f64::INFINITY, f64::min);
                let hi = column.fold(f64::NEG_INFINITY, f64::max);
                bounds.push(Expr::cmp(spec.name.clone(), Op::Ge, lo));
                bounds.push(Expr::cmp(spec.name.clone(), Op::Le, hi));
            }
        }
    }
    let out = UnsafeExpression { bounds, disjuncts };
    out.check(space)?;
    Ok(out)
}

/// Same as `UnsafeExpression::eval`.
pub fn evaluate_expression(expr: &UnsafeExpression, c: &Chromosome) -> Result<bool> {
    expr.eval(c)
}

/// Per-parameter region implied by the atoms of a conjunction.
#[derive(Debug, Clone)]
struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
    levels: Vec<Vec<bool>>,
}

impl Region {
    fn new(space: &ParameterSpace) -> Self {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut levels = Vec::new();
        for spec in space.specs() {
            match &spec.kind {
                ParamKind::Categorical { levels: l } => {
                    lower.push(0.0);
                    upper.push(0.0);
                    levels.push(vec![true; l.len()]);
                }
                ParamKind::Continuous | ParamKind::Integer => {
                    lower.push(spec.lower);
                    upper.push(spec.upper);
                    levels.push(Vec::new());
                }
            }
        }
        Self { lower, upper, levels }
    }

    fn tighten(&mut self, space: &ParameterSpace, e: &Expr, positive: bool) {
        match e {
            Expr::Cmp { param, op, value } => {
                let Some(i) = space.index_of(param) else { return };
                let op = if positive { *op } else { op.complement() };
                match op {
                    Op::Lt | Op::Le => self.upper[i] = self.upper[i].min(*value),
                    Op::Gt | Op::Ge => self.lower[i] = self.lower[i].max(*value),
                }
            }
            Expr::Eq { param, level } => {
                let Some(i) = space.index_of(param) else { return };
                let Some(names) = space.spec(i).levels() else { return };
                for (k, name) in names.iter().enumerate() {
                    if positive != (name == level) {
                        self.levels[i][k] = false;
                    }
                }
            }
            Expr::Not(inner) => self.tighten(space, inner, !positive),
            Expr::And(xs) if positive => xs.iter().for_each(|x| self.tighten(space, x, true)),
            _ => {}
        }
    }

    fn empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(a, b)| a > b) || self.levels.iter().any(|l| !l.is_empty() && !l.contains(&true))
    }

    fn sample(&self, space: &Arc<ParameterSpace>, rng: &mut seed::Rng) -> Chromosome {
        let values = (0..space.len())
            .map(|i| {
                if self.levels[i].is_empty() {
                    if self.lower[i] < self.upper[i] {
                        rng.gen_range(self.lower[i]..=self.upper[i])
                    } else {
                        self.lower[i]
                    }
                } else {
                    let allowed: Vec<usize> = (0..self.levels[i].len()).filter(|&k| self.levels[i][k]).collect();
                    allowed[rng.gen_range(0..allowed.len())] as f64
                }
            })
            .collect();
        Chromosome::repaired(space, values)
    }
}

/// Draws `n` points satisfying the expression, split evenly over the
/// disjuncts that admit any point. Each disjunct is sampled by rejection
/// inside the box its atoms imply.
pub fn sample_expression(
    expr: &UnsafeExpression,
    space: &Arc<ParameterSpace>,
    n: usize,
    rng: &mut seed::Rng,
) -> Result<Vec<Chromosome>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    expr.check(space)?;
    let give_up = (1.0 / MIN_ACCEPTANCE) as usize;
    let mut regions = Vec::new();
    let mut report = Vec::new();
    for (k, d) in expr.disjuncts.iter().enumerate() {
        let mut region = Region::new(space);
        for b in &expr.bounds {
            region.tighten(space, b, true);
        }
        region.tighten(space, d, true);
        if region.empty() {
            report.push(format!("disjunct {k}: empty box"));
            continue;
        }
        let accept = |c: &Chromosome| -> Result<bool> { Ok(expr.in_bounds(c)? && expr.disjunct_of(c)? == Some(k)) };
        let mut first = None;
        for _ in 0..give_up {
            let c = region.sample(space, rng);
            if accept(&c)? {
                first = Some(c);
                break;
            }
        }
        match first {
            Some(c) => regions.push((k, region, c)),
            None => report.push(format!("disjunct {k}: no acceptance in {give_up} draws")),
        }
    }
    if regions.is_empty() {
        return Err(Error::Unsatisfiable(report.join("; ")));
    }
    let m = regions.len();
    let mut out = Vec::with_capacity(n);
    for (slot, (k, region, first)) in regions.into_iter().enumerate() {
        let quota = n / m + usize::from(slot < n % m);
        if quota == 0 {
            continue;
        }
        out.push(first);
        let mut accepted = 1;
        let mut draws = 1usize;
        while accepted < quota {
            if draws as f64 * MIN_ACCEPTANCE > accepted as f64 {
                return Err(Error::Unsatisfiable(format!(
                    "disjunct {k}: acceptance {accepted}/{draws} below {MIN_ACCEPTANCE}"
                )));
            }
            let c = region.sample(space, rng);
            draws += 1;
            if expr.in_bounds(&c)? && expr.disjunct_of(&c)? == Some(k) {
                out.push(c);
                accepted += 1;
            }
        }
    }
    Ok(out)
}

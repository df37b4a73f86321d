//! Characterizing unsafe regions with decision lists and logical
//! expressions.

mod compile;
mod expr;
mod part;

pub use compile::{compile_expression, evaluate_expression, sample_expression, UnsafeExpression, MIN_ACCEPTANCE};
pub use expr::{parse_expr, Expr, Op};
pub use part::{learn_part, DecisionList, Example, Outcome, PartOptions, Rule, MIN_EXAMPLES};

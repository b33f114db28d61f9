//! Configuration: the expression language and the INI file reader.

pub mod expr;
mod ini;

pub use expr::{family_coefficients, parse_expr, Expr, Func, Var, FAMILY_TUPLES};
pub use ini::Ini;

//! Analytic forcings given as expressions, e.g. `sin(pi*y)` or
//! `x^2*exp(-y)`: arithmetic, `^`, `pi`, `e` and the usual elementary
//! functions, over the variables `x` and `y`.

use crate::CliError;

fn parse(src: &str) -> Result<meval::Expr, CliError> {
    src.parse::<meval::Expr>()
        .map_err(|e| CliError::Config(format!("cannot parse expression `{src}`: {e}")))
}

fn unbound(src: &str, e: meval::Error) -> CliError {
    CliError::Config(format!("expression `{src}`: {e}"))
}

pub fn of_y(src: &str) -> Result<impl Fn(f64) -> f64, CliError> {
    parse(src)?.bind("y").map_err(|e| unbound(src, e))
}

pub fn of_xy(src: &str) -> Result<impl Fn(f64, f64) -> f64, CliError> {
    parse(src)?.bind2("x", "y").map_err(|e| unbound(src, e))
}

pub mod rds;
pub mod run;
pub mod string;
pub mod sweep;

use crate::error::CliError;

/// Splits `--values`, dropping blanks; an empty result is a usage error.
pub fn nonempty_values(values: &[String], flag: &str) -> Result<Vec<String>, CliError> {
    let out: Vec<String> = values
        .iter()
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if out.is_empty() {
        Err(CliError::usage(format!(
            "{flag}: at least one value is required"
        )))
    } else {
        Ok(out)
    }
}

pub fn parse_f64(s: &str, flag: &str) -> Result<f64, CliError> {
    s.parse()
        .map_err(|_| CliError::usage(format!("{flag}: `{s}` is not a number")))
}

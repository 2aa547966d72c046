use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Missing or malformed header, unknown column, empty input.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell could not be parsed. `row` is 1-based and counts the header as row 1.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// The panel violates a structural invariant (unbalanced, duplicate periods, ...).
    #[error("validation error: {message}{}", format_units(.units))]
    Validation { message: String, units: Vec<String> },

    /// A design specification refers to unknown covariates or repeats a term.
    #[error("design spec error: {0}")]
    Spec(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    /// Normal matrix is numerically singular.
    #[error("singular design (pivot ratio {ratio:.3e}); offending columns: {}", .columns.join(", "))]
    Singular { columns: Vec<String>, ratio: f64 },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Simulated selection put every unit in one group.
    #[error("degenerate selection: realized treated share {share}")]
    Degeneracy { share: f64 },

    #[error("unknown scenario '{0}'")]
    Catalog(String),

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_units(units: &[String]) -> String {
    if units.is_empty() {
        return String::new();
    }
    const SHOWN: usize = 20;
    let head: Vec<&str> = units.iter().take(SHOWN).map(String::as_str).collect();
    if units.len() > SHOWN {
        format!(
            " (units: {}, ... {} more)",
            head.join(", "),
            units.len() - SHOWN
        )
    } else {
        format!(" (units: {})", head.join(", "))
    }
}

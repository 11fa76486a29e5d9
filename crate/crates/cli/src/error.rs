use serde::Serialize;

/// Machine-readable failure, printed as JSON on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        CliError { kind: kind.to_string(), message: message.into(), violations: Vec::new() }
    }

    pub fn violations(violations: Vec<String>) -> Self {
        CliError {
            kind: "config".to_string(),
            message: format!("{} configuration violation(s)", violations.len()),
            violations,
        }
    }

    /// Classifies an arbitrary error by the first recognised cause.
    pub fn from_anyhow(err: &anyhow::Error) -> Self {
        if let Some(e) = err.downcast_ref::<CliError>() {
            return CliError { kind: e.kind.clone(), message: e.message.clone(), violations: e.violations.clone() };
        }
        let message = format!("{err:#}");
        for cause in err.chain() {
            if let Some(e) = cause.downcast_ref::<fcgshift::Error>() {
                return CliError::new(e.kind(), message);
            }
            if cause.downcast_ref::<std::io::Error>().is_some() {
                return CliError::new("io", message);
            }
            if cause.downcast_ref::<serde_json::Error>().is_some() {
                return CliError::new("json", message);
            }
        }
        CliError::new("error", message)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for CliError {}

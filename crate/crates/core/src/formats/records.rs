use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::FunctionRecord;

/// Parses JSON Lines; line `i` (0-based, blank lines excluded) is node `i`.
pub fn parse_records(text: &str, path: &Path) -> Result<Vec<FunctionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: FunctionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        record.validate(out.len())?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<FunctionRecord>> {
    let text = fs::read_to_string(path)?;
    parse_records(&text, path)
}

pub fn write_records(records: &[FunctionRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

use std::path::Path;
use std::process::Command;

use crate::error::{Error, Result};

/// Runs an external PESQ tool. `template` is split on whitespace and
/// executed directly (no shell); `{clean}` and `{processed}` are replaced
/// by the paths. The last token of stdout that parses as a number is the
/// score. `None` template means the metric is unavailable.
pub fn pesq_external(
    clean: &Path,
    processed: &Path,
    template: Option<&str>,
) -> Result<Option<f64>> {
    let Some(template) = template.map(str::trim).filter(|t| !t.is_empty()) else {
        return Ok(None);
    };
    let args: Vec<String> = template
        .split_whitespace()
        .map(|t| {
            t.replace("{clean}", &clean.to_string_lossy())
                .replace("{processed}", &processed.to_string_lossy())
        })
        .collect();
    let output = Command::new(&args[0])
        .args(&args[1..])
        .output()
        .map_err(|e| Error::ExternalCommand(format!("{}: {e}", args[0])))?;
    if !output.status.success() {
        return Err(Error::ExternalCommand(format!(
            "{} exited with {}: {}",
            args[0],
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    parse_score(&String::from_utf8_lossy(&output.stdout)).map(Some)
}

/// Last number in `text`, required to lie in the PESQ range.
pub fn parse_score(text: &str) -> Result<f64> {
    let value = text
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';' || c == '=' || c == ':')
        .filter_map(|t| t.parse::<f64>().ok()).rfind(|v| v.is_finite())
        .ok_or_else(|| Error::UnparseableOutput(text.trim().to_owned()))?;
    if !(-0.5..=4.5).contains(&value) {
        return Err(Error::UnparseableOutput(format!(
            "score {value} outside [-0.5, 4.5]"
        )));
    }
    Ok(value)
}

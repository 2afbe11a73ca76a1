//! Bundled toy table and the cleaning prompt template.

use anyhow::{bail, Result};

use crate::mock::response_payload;

pub const TOY_TABLE: &str = include_str!("../data/toy_table.csv");

pub const CLEAN_TEMPLATE: &str = "Clean this table row: uppercase every field and trim surrounding whitespace.";

pub fn header() -> &'static str {
    TOY_TABLE.lines().next().unwrap_or("")
}

pub fn columns() -> usize {
    header().split(',').count()
}

pub fn rows() -> Vec<&'static str> {
    TOY_TABLE.lines().skip(1).filter(|l| !l.trim().is_empty()).collect()
}

/// `T(x)`.
pub fn clean_prompt(row: &str) -> String {
    format!("{CLEAN_TEMPLATE}\n{row}")
}

/// Row text back out of a cleaning prompt.
pub fn prompt_row(prompt: &[u8]) -> Option<&str> {
    let text = std::str::from_utf8(prompt).ok()?;
    text.strip_prefix(CLEAN_TEMPLATE)?.strip_prefix('\n')
}

/// Post-processing plus validation: strip the response prefix and check
/// the column count.
pub fn post_process(response: &[u8]) -> Result<String> {
    let Some(p) = response_payload(response) else {
        bail!("response lacks the provider prefix");
    };
    let row = std::str::from_utf8(p)?.to_string();
    let n = row.split(',').count();
    if n != columns() {
        bail!("row has {n} columns, expected {}", columns());
    }
    Ok(row)
}

/// Local recomputation of the cleaning rule, field by field.
pub fn reference_clean(row: &str) -> String {
    row.trim().to_uppercase()
}

pub fn assemble(rows: &[String]) -> String {
    let mut out = header().to_uppercase();
    for r in rows {
        out.push('\n');
        out.push_str(r);
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{respond, Rule};

    #[test]
    fn table_has_twenty_four_column_rows() {
        assert_eq!(rows().len(), 20);
        assert_eq!(columns(), 4);
        assert!(rows().iter().all(|r| r.split(',').count() == 4));
    }

    #[test]
    fn cleaning_round_trip() {
        for row in rows() {
            let prompt = clean_prompt(row);
            assert_eq!(prompt_row(prompt.as_bytes()), Some(row));
            let cleaned = post_process(&respond(Rule::Clean, prompt.as_bytes())).unwrap();
            assert_eq!(cleaned, reference_clean(row));
        }
    }

    #[test]
    fn malformed_rows_fail_validation() {
        assert!(post_process(b"R:0123456789abcdef:A,B").is_err());
        assert!(post_process(b"nope").is_err());
    }
}

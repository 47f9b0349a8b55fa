//! Frame file I/O: one frame per line, space-separated decimal reals.
//! Comment lines start with `#`; blank lines are skipped.

use std::path::Path;

use crate::Failure;

pub fn read_frames(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut frames: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for token in line.split_whitespace() {
            let value: f64 = token.parse().map_err(|_| {
                Failure::Usage(format!("parse error at line {line_no}: bad number {token:?}"))
            })?;
            row.push(value);
        }
        match width {
            Some(w) if row.len() != w => {
                return Err(Failure::Usage(format!(
                    "parse error at line {line_no}: expected {w} values per frame, got {}",
                    row.len()
                )));
            }
            None => width = Some(row.len()),
            _ => {}
        }
        frames.push(row);
    }
    Ok(frames)
}

pub fn format_frames(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    out
}

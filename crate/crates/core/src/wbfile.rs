//! The line-oriented workbook text format.
//!
//! ```text
//! # comment
//! sheet Data
//! A1 = 3
//! B1 = =A1*2
//! function sheet Funcs
//! A1 = =DEFINE("DOUBLE", B2, B1)
//! B2 = =B1*2
//! ```
//!
//! Each entry is `<cell> = <input>`, where the input is anything
//! [`Workbook::set_cell`] accepts.

use crate::engine::{SheetKind, Workbook, WorkbookError};
use crate::formula::CellPos;

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct LoadError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> LoadError {
    LoadError {
        line,
        message: message.into(),
    }
}

/// Parses workbook text.
pub fn load(text: &str) -> Result<Workbook, LoadError> {
    let mut wb = Workbook::new();
    load_into(&mut wb, text)?;
    Ok(wb)
}

/// Adds the sheets described by `text` to an existing workbook.
pub fn load_into(wb: &mut Workbook, text: &str) -> Result<(), LoadError> {
    let mut current: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let header = if let Some(rest) = line.strip_prefix("function sheet ") {
            Some((rest, SheetKind::Function))
        } else {
            line.strip_prefix("sheet ").map(|rest| (rest, SheetKind::Ordinary))
        };
        if let Some((name, kind)) = header {
            let name = name.trim();
            if name.is_empty() {
                return Err(err(n, "missing sheet name"));
            }
            current = Some(wb.add_sheet(name, kind).map_err(|e| err(n, e.to_string()))?);
            continue;
        }
        let Some((addr, input)) = line.split_once('=') else {
            return Err(err(n, format!("expected `<cell> = <input>`, found `{line}`")));
        };
        let Some(pos) = CellPos::parse(addr) else {
            return Err(err(n, format!("bad cell address `{}`", addr.trim())));
        };
        let Some(sheet) = current else {
            return Err(err(n, "cell entry before any sheet header"));
        };
        let input = input.trim();
        if input.is_empty() {
            return Err(err(n, "missing cell content"));
        }
        wb.set_cell(sheet, pos, input).map_err(|e| match e {
            WorkbookError::Parse(p) => err(n, format!("in `{input}` at column {}: {}", p.column, p.message)),
            other => err(n, other.to_string()),
        })?;
    }
    Ok(())
}

/// Writes a workbook in the text format. Cells are written row by row.
pub fn save(wb: &Workbook) -> String {
    let mut out = String::new();
    for sheet in wb.sheets() {
        match sheet.kind {
            SheetKind::Ordinary => out.push_str("sheet "),
            SheetKind::Function => out.push_str("function sheet "),
        }
        out.push_str(&sheet.name);
        out.push('\n');
        for (pos, cell) in &sheet.cells {
            out.push_str(&format!("{pos} = {}\n", cell.input));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::values::Value;

    const BOOK: &str = "\
# area of a triangle
function sheet Funcs
A1 = =DEFINE(\"TRIAREA\", D3, A3, B3, C3)
D3 = =SQRT(D2*(D2-A3)*(D2-B3)*(D2-C3))
D2 = =(A3+B3+C3)/2
sheet Data
B1 = 4
A1 = 3
C1 = 5
D1 = =TRIAREA(A1,B1,C1)
E1 = \"some text\"
";

    #[test]
    fn load_and_eval() {
        let wb = load(BOOK).unwrap();
        assert_eq!(wb.get("Data!D1").unwrap(), Value::Number(6.0));
        assert_eq!(wb.get("Data!E1").unwrap(), Value::text("some text"));
    }

    #[test]
    fn round_trip() {
        let wb = load(BOOK).unwrap();
        let saved = save(&wb);
        assert!(saved.contains("A1 = 3\nB1 = 4\nC1 = 5\n"), "{saved}");
        let again = load(&saved).unwrap();
        assert_eq!(save(&again), saved);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = load("sheet S\nA1 = 1\nnonsense\n").err().unwrap();
        assert_eq!(e.line, 3);
        let e = load("A1 = 1\n").err().unwrap();
        assert_eq!(e.line, 1);
        let e = load("sheet S\n\nA1 = =1+\n").err().unwrap();
        assert_eq!(e.line, 3);
        let e = load("sheet S\nsheet S\n").err().unwrap();
        assert_eq!(e.line, 2);
    }
}

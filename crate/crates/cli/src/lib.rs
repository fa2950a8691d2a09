//! Command interpreter behind the `funcalc` binary.

use std::fmt::Write as _;

use funcalc::bench::benchmark;
use funcalc::{wbfile, SheetKind, Value, Workbook};

pub const HELP: &str = "\
commands:
  eval <Sheet!A1>               value of a cell
  set <Sheet!A1> <input>        set a cell and recalculate
  call <name> <args...>         call a function; args are expressions
  specialize <closure-expr>     SPECIALIZE a closure
  dump-ir <function-name>       print the IR of a function
  bench <closure-expr> <count>  mean ns/call of a 0-arity closure
  list-functions                defined and specialized functions
  save <path>                   write the workbook
  help | quit";

/// Output of one command.
#[derive(Debug, PartialEq, Eq)]
pub enum Reply {
    Text(String),
    Quit,
}

pub struct Session {
    pub wb: Workbook,
}

/// Splits on whitespace, keeping double-quoted strings (with `""`
/// escapes) and parenthesized groups in one piece.
pub fn split_args(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0usize;
    let mut quoted = false;
    for c in line.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                cur.push(c);
            }
            '(' if !quoted => {
                depth += 1;
                cur.push(c);
            }
            ')' if !quoted => {
                depth = depth.saturating_sub(1);
                cur.push(c);
            }
            c if c.is_whitespace() && !quoted && depth == 0 => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(s)
}

impl Session {
    pub fn new(mut wb: Workbook) -> Session {
        if !wb.sheets().iter().any(|s| s.kind == SheetKind::Ordinary) {
            wb.add_sheet("Sheet1", SheetKind::Ordinary).expect("fresh sheet name");
        }
        Session { wb }
    }

    /// The sheet that free-standing expressions are evaluated on.
    fn home(&self) -> usize {
        self.wb.sheets().iter().position(|s| s.kind == SheetKind::Ordinary).unwrap_or(0)
    }

    fn eval_expr(&self, text: &str) -> Result<Value, String> {
        self.wb.eval_formula(self.home(), text).map_err(|e| e.to_string())
    }

    /// Runs one command line.
    pub fn execute(&mut self, line: &str) -> Result<Reply, String> {
        let line = line.trim();
        let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let text = match cmd {
            "" => String::new(),
            "help" => HELP.to_string(),
            "quit" | "exit" => return Ok(Reply::Quit),
            "eval" => self.wb.get(rest).map_err(|e| e.to_string())?.to_string(),
            "set" => {
                let (addr, input) = rest.split_once(char::is_whitespace).ok_or("usage: set <Sheet!A1> <input>")?;
                self.wb.set(addr, input).map_err(|e| e.to_string())?;
                self.wb.recalculate();
                let mut out = self.wb.get(addr).map_err(|e| e.to_string())?.to_string();
                for d in self.wb.define_diagnostics() {
                    let _ = write!(out, "\nwarning: {d}");
                }
                out
            }
            "call" => {
                let args = split_args(rest);
                let (name, args) = args.split_first().ok_or("usage: call <name> <args...>")?;
                if self.wb.function_by_name(unquote(name)).is_none() {
                    return Err(format!("no function named {name}"));
                }
                let vals = args.iter().map(|a| self.eval_expr(a)).collect::<Result<Vec<_>, _>>()?;
                self.wb.call(unquote(name), &vals).to_string()
            }
            "specialize" => {
                if rest.is_empty() {
                    return Err("usage: specialize <closure-expr>".into());
                }
                self.eval_expr(&format!("=SPECIALIZE({rest})"))?.to_string()
            }
            "dump-ir" => {
                let name = unquote(rest);
                let f = self.wb.function_by_name(name).ok_or_else(|| format!("no function named {name}"))?;
                f.compiled.dump_ir().trim_end().to_string()
            }
            "bench" => {
                let (expr, count) = rest.rsplit_once(char::is_whitespace).ok_or("usage: bench <closure-expr> <count>")?;
                let count: u64 = count.parse().map_err(|_| format!("bad count '{count}'"))?;
                let f = self.eval_expr(expr)?;
                let fv = f.as_function().ok_or_else(|| format!("not a closure: {f}"))?;
                let r = benchmark(&self.wb, fv, count).map_err(|e| format!("{e}: need a 0-arity closure and count >= 1"))?;
                format!("{:.1} ns/call ({} calls of {})", r.mean_ns, r.calls, r.function)
            }
            "list-functions" => {
                let mut out = String::new();
                for f in self.wb.list_functions() {
                    let kind = if f.origin.is_some() { "specialized" } else { "defined" };
                    let _ = writeln!(out, "{}/{} {kind}", f.name, f.arity());
                }
                out.trim_end().to_string()
            }
            "save" => {
                if rest.is_empty() {
                    return Err("usage: save <path>".into());
                }
                std::fs::write(rest, wbfile::save(&self.wb)).map_err(|e| format!("{rest}: {e}"))?;
                format!("saved {rest}")
            }
            other => return Err(format!("unknown command '{other}'; try help")),
        };
        Ok(Reply::Text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitting() {
        assert_eq!(split_args("TRIAREA 3 4 5"), ["TRIAREA", "3", "4", "5"]);
        assert_eq!(split_args("REPT4 \"a b\" 2"), ["REPT4", "\"a b\"", "2"]);
        assert_eq!(split_args("CLOSURE(\"ADD3\", 1, #NA) 10"), ["CLOSURE(\"ADD3\", 1, #NA)", "10"]);
    }
}

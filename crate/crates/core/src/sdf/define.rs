//! DEFINE processing: from function-sheet cells to a compiled function.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use super::{evalcond, BodySource, SdfId, SdfInfo};
use crate::compile;
use crate::engine::{CellContent, SheetKind, Workbook};
use crate::formula::{CellAddr, CellPos, Expr, SdfRef};
use crate::values::{ErrorValue, Value};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DefineError {
    #[error("cyclic dependency: {}", fmt_cycle(.0))]
    Cycle(Vec<CellPos>),
    #[error("{0}")]
    Invalid(String),
}

fn fmt_cycle(cells: &[CellPos]) -> String {
    let mut parts: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
    if let Some(first) = cells.first() {
        parts.push(first.to_string());
    }
    parts.join(" -> ")
}

impl DefineError {
    fn error_value(&self) -> ErrorValue {
        match self {
            DefineError::Cycle(_) => ErrorValue::CYCLE,
            DefineError::Invalid(_) => ErrorValue::VALUE,
        }
    }
}

struct Definition {
    sheet: usize,
    cell: CellPos,
    name: String,
    output: CellPos,
    inputs: Vec<CellPos>,
}

fn parse_define(wb: &Workbook, sheet_name: &str, args: &[Expr]) -> Result<(String, CellPos, Vec<CellPos>), String> {
    let name = match args.first() {
        Some(Expr::Text(s)) => s.to_string(),
        Some(Expr::Const(Value::Text(s))) => s.to_string(),
        _ => return Err("DEFINE needs a function name as its first argument".into()),
    };
    if name.is_empty() || !is_identifier(&name) {
        return Err(format!("'{name}' is not a valid function name"));
    }
    if wb.builtins().get(&name).is_some() {
        return Err(format!("'{name}' is the name of a builtin"));
    }
    let mut cells = Vec::new();
    for a in &args[1..] {
        let pos = match a {
            Expr::CellRef(CellAddr { sheet: None, pos }) => *pos,
            Expr::NormalCellRef(CellAddr { sheet: Some(s), pos }) if s.eq_ignore_ascii_case(sheet_name) => *pos,
            other => return Err(format!("DEFINE expects cells on this sheet, got {other}")),
        };
        cells.push(pos);
    }
    let Some((&output, inputs)) = cells.split_first() else {
        return Err("DEFINE needs an output cell".into());
    };
    let mut seen = HashSet::new();
    for i in inputs {
        if !seen.insert(*i) {
            return Err(format!("input cell {i} is listed twice"));
        }
    }
    Ok((name, output, inputs.to_vec()))
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Rebuilds every function declared on function sheets.
///
/// Names get their ids first so that bodies can refer to functions defined
/// later, or to themselves. Redefining a name keeps its id, so existing
/// closures see the new body. The specialization cache is cleared.
pub fn define_all(wb: &Workbook) {
    wb.define_errors.borrow_mut().clear();
    let mut defs = Vec::new();
    for (si, sheet) in wb.sheets().iter().enumerate() {
        if sheet.kind != SheetKind::Function {
            continue;
        }
        for (pos, cell) in &sheet.cells {
            let CellContent::Formula(Expr::Call(n, args)) = &cell.content else {
                continue;
            };
            if !n.eq_ignore_ascii_case("DEFINE") {
                continue;
            }
            match parse_define(wb, &sheet.name, args) {
                Ok((name, output, inputs)) => defs.push(Definition {
                    sheet: si,
                    cell: *pos,
                    name,
                    output,
                    inputs,
                }),
                Err(msg) => {
                    wb.define_errors
                        .borrow_mut()
                        .insert((si, *pos), (ErrorValue::VALUE, msg));
                }
            }
        }
    }

    let mut ids = Vec::new();
    {
        let mut table = wb.functions.borrow_mut();
        let wanted: HashSet<String> = defs.iter().map(|d| d.name.to_ascii_uppercase()).collect();
        for (key, id) in table.named_ids() {
            let defined = table.get(id).is_none_or(|info| info.origin.is_none());
            if defined && !wanted.contains(&key) {
                table.clear(id);
                table.unname(id);
            }
        }
        let mut seen = HashSet::new();
        for d in &defs {
            if !seen.insert(d.name.to_ascii_uppercase()) {
                ids.push(None);
                continue;
            }
            ids.push(Some(table.reserve(&d.name)));
        }
    }

    let mut resolved: HashMap<usize, BTreeMap<CellPos, Expr>> = HashMap::new();
    for (d, id) in defs.iter().zip(ids) {
        let Some(id) = id else {
            wb.define_errors.borrow_mut().insert(
                (d.sheet, d.cell),
                (ErrorValue::VALUE, format!("function {} is defined twice", d.name)),
            );
            continue;
        };
        let sheet = wb.sheet(d.sheet);
        let cells = resolved
            .entry(d.sheet)
            .or_insert_with(|| resolve_sheet(wb, d.sheet))
            .clone();
        let source = BodySource {
            sheet: sheet.name.clone(),
            inputs: d.inputs.clone(),
            output: d.output,
            cells,
        };
        match build_function(wb, id, Arc::from(d.name.as_str()), source, None) {
            Ok(info) => wb.functions.borrow_mut().install(info),
            Err(e) => {
                wb.functions.borrow_mut().clear(id);
                wb.define_errors
                    .borrow_mut()
                    .insert((d.sheet, d.cell), (e.error_value(), format!("{}: {e}", d.name)));
            }
        }
    }
    wb.spec_cache.borrow_mut().map.clear();
}

fn resolve_sheet(wb: &Workbook, sheet: usize) -> BTreeMap<CellPos, Expr> {
    let sh = wb.sheet(sheet);
    sh.cells
        .iter()
        .map(|(pos, cell)| {
            let e = match &cell.content {
                CellContent::Constant(v) => Expr::from_value(v),
                CellContent::Formula(e) => resolve(wb, &sh.name, e),
            };
            (*pos, e)
        })
        .collect()
}

/// Resolves names and references in a function-sheet formula.
pub(crate) fn resolve(wb: &Workbook, sheet: &str, e: &Expr) -> Expr {
    e.rewrite(&mut |node| match node {
        Expr::Call(name, args) if wb.builtins().get(&name).is_none() => match wb.function_id(&name) {
            Some(id) => {
                let name = wb.functions.borrow().name(id).cloned().unwrap_or(name);
                Expr::SdfCall(SdfRef { id, name }, args)
            }
            None => Expr::Call(name, args),
        },
        Expr::NormalCellRef(a) if a.sheet.as_deref().is_some_and(|s| s.eq_ignore_ascii_case(sheet)) => {
            Expr::local_ref(a.pos)
        }
        Expr::NormalCellArea(a, _)
            if a.sheet.as_deref().is_none_or(|s| s.eq_ignore_ascii_case(sheet)) =>
        {
            Expr::Error(ErrorValue::REF)
        }
        other => other,
    })
}

/// Runs the pipeline on a body: reachability, topological sort, inlining,
/// evaluation conditions and compilation.
pub fn build_function(
    wb: &Workbook,
    id: SdfId,
    name: Arc<str>,
    source: BodySource,
    origin: Option<(SdfId, Vec<Option<Value>>)>,
) -> Result<SdfInfo, DefineError> {
    let inputs: HashSet<CellPos> = source.inputs.iter().copied().collect();

    // Reachable cells in post order (dependencies first).
    let mut cells: BTreeMap<CellPos, Expr> = BTreeMap::new();
    let order = topo_sort(&source, &inputs, &mut cells)?;

    let body_cells = inline(&order, &cells, &inputs, source.output, wb.config.inline_cells);
    let (body, notes) = evalcond::schedule(body_cells, &inputs);
    let compiled = compile::compile(wb, &name, &source.inputs, &body)
        .map_err(|e| DefineError::Invalid(format!("compilation failed: {e}")))?;
    Ok(SdfInfo {
        id,
        name,
        inputs: source.inputs.clone(),
        output: source.output,
        body,
        source: BodySource { cells, ..source },
        compiled,
        origin,
        notes,
    })
}

fn refs_of(e: &Expr) -> Vec<CellPos> {
    let mut v = Vec::new();
    e.local_refs(&mut v);
    v
}

// Iterative depth-first search from the output. Input cells are leaves
// and their formulas are ignored; missing cells read as 0.
fn topo_sort(
    source: &BodySource,
    inputs: &HashSet<CellPos>,
    cells: &mut BTreeMap<CellPos, Expr>,
) -> Result<Vec<CellPos>, DefineError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: HashMap<CellPos, Mark> = HashMap::new();
    let mut order = Vec::new();
    // (cell, its references, next reference to visit)
    let mut stack: Vec<(CellPos, Vec<CellPos>, usize)> = Vec::new();

    let enter = |pos: CellPos, cells: &mut BTreeMap<CellPos, Expr>| -> Vec<CellPos> {
        if inputs.contains(&pos) {
            return Vec::new();
        }
        let e = source.cells.get(&pos).cloned().unwrap_or(Expr::Number(0.0));
        let r = refs_of(&e);
        cells.insert(pos, e);
        r
    };

    let root = source.output;
    let refs = enter(root, cells);
    marks.insert(root, Mark::Active);
    stack.push((root, refs, 0));
    while let Some(top) = stack.last_mut() {
        if top.2 < top.1.len() {
            let next = top.1[top.2];
            top.2 += 1;
            match marks.get(&next) {
                Some(Mark::Done) => {}
                Some(Mark::Active) => {
                    let start = stack.iter().position(|(p, _, _)| *p == next).unwrap();
                    return Err(DefineError::Cycle(stack[start..].iter().map(|(p, _, _)| *p).collect()));
                }
                None => {
                    let refs = enter(next, cells);
                    marks.insert(next, Mark::Active);
                    stack.push((next, refs, 0));
                }
            }
        } else {
            let (pos, _, _) = stack.pop().unwrap();
            marks.insert(pos, Mark::Done);
            order.push(pos);
        }
    }
    Ok(order)
}

// Substitutes cells referenced exactly once into their use site. Returns
// the remaining cells with their final expressions, in topological order.
fn inline(
    order: &[CellPos],
    cells: &BTreeMap<CellPos, Expr>,
    inputs: &HashSet<CellPos>,
    output: CellPos,
    enabled: bool,
) -> Vec<(CellPos, Expr)> {
    let mut uses: HashMap<CellPos, usize> = HashMap::new();
    for pos in order {
        if inputs.contains(pos) {
            continue;
        }
        for r in refs_of(&cells[pos]) {
            *uses.entry(r).or_default() += 1;
        }
    }
    let inlined = |p: &CellPos| {
        enabled && *p != output && !inputs.contains(p) && uses.get(p) == Some(&1)
    };
    let mut finals: HashMap<CellPos, Expr> = HashMap::new();
    let mut out = Vec::new();
    for pos in order {
        if inputs.contains(pos) {
            continue;
        }
        let e = cells[pos].rewrite(&mut |node| match node {
            Expr::CellRef(a) if a.sheet.is_none() && inlined(&a.pos) => finals[&a.pos].clone(),
            other => other,
        });
        if inlined(pos) {
            finals.insert(*pos, e);
        } else {
            out.push((*pos, e));
        }
    }
    if inputs.contains(&output) {
        out.push((output, Expr::local_ref(output)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    fn source(cells: &[(&str, &str)], inputs: &[&str], output: &str) -> BodySource {
        BodySource {
            sheet: Arc::from("F"),
            inputs: inputs.iter().map(|s| CellPos::parse(s).unwrap()).collect(),
            output: CellPos::parse(output).unwrap(),
            cells: cells
                .iter()
                .map(|(p, f)| (CellPos::parse(p).unwrap(), parse_formula(f).unwrap()))
                .collect(),
        }
    }

    #[test]
    fn cycle_is_reported() {
        let s = source(&[("A1", "=B1"), ("B1", "=A1+1")], &[], "A1");
        let mut cells = BTreeMap::new();
        let err = topo_sort(&s, &HashSet::new(), &mut cells).unwrap_err();
        assert_eq!(err.to_string(), "cyclic dependency: A1 -> B1 -> A1");
    }

    #[test]
    fn inlining_single_use() {
        let s = source(
            &[("A1", "=B1*2"), ("B1", "=C1+1"), ("C1", "=D9+D9")],
            &["D9"],
            "A1",
        );
        let inputs: HashSet<CellPos> = s.inputs.iter().copied().collect();
        let mut cells = BTreeMap::new();
        let order = topo_sort(&s, &inputs, &mut cells).unwrap();
        let body = inline(&order, &cells, &inputs, s.output, true);
        assert_eq!(body.len(), 1);
        assert_eq!(body[0].1.to_string(), "(D9+D9+1)*2");
        let body = inline(&order, &cells, &inputs, s.output, false);
        assert_eq!(body.len(), 3);
    }

    #[test]
    fn missing_cells_are_zero() {
        let s = source(&[("A1", "=B1+1")], &[], "A1");
        let mut cells = BTreeMap::new();
        topo_sort(&s, &HashSet::new(), &mut cells).unwrap();
        assert_eq!(cells[&CellPos::parse("B1").unwrap()], Expr::Number(0.0));
    }
}

//! Evaluation conditions.
//!
//! A cell must only be computed when evaluating the output on demand would
//! compute it. For each cell we derive a condition in disjunctive normal
//! form: one conjunction per reference site, made of the branch tests on
//! the path from the output down to that reference. Conditions that occur
//! in guards are wrapped in `Cached` nodes so that the guard and the
//! conditional expression share one evaluation per call.
//!
//! Literals keep the order in which the path meets them, so when a guard
//! evaluates a literal every earlier literal of its conjunction is true,
//! and the cells that the literal reads have already been computed. If the
//! cells cannot be ordered that way, or the conditions get too large, the
//! function falls back to lazy evaluation of every conditional cell.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use super::{ComputeCell, EvalCond};
use crate::engine::kernels::truth;
use crate::formula::{BinaryOp, Cached, CellPos, Expr};
use crate::values::Value;

/// Upper bound on the total number of literals over all conditions.
pub const MAX_LITERALS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    /// The scrutinee is a non-zero number.
    IsTrue,
    /// The scrutinee is zero.
    IsFalse,
    /// `TRUNC(scrutinee) = i`.
    Selects(usize),
}

#[derive(Clone, Debug)]
struct Lit {
    expr: Expr,
    kind: Kind,
}

impl PartialEq for Lit {
    fn eq(&self, other: &Lit) -> bool {
        self.kind == other.kind && same_expr(&self.expr, &other.expr)
    }
}

fn same_expr(a: &Expr, b: &Expr) -> bool {
    match (a, b) {
        (Expr::Cached(x), Expr::Cached(y)) => Arc::ptr_eq(x, y),
        _ => a == b,
    }
}

impl Lit {
    fn contradicts(&self, other: &Lit) -> bool {
        if !same_expr(&self.expr, &other.expr) {
            return false;
        }
        match (self.kind, other.kind) {
            (Kind::IsTrue, Kind::IsFalse) | (Kind::IsFalse, Kind::IsTrue) => true,
            (Kind::Selects(i), Kind::Selects(j)) => i != j,
            _ => false,
        }
    }

    /// Decides a literal over a constant scrutinee.
    fn constant(&self) -> Option<bool> {
        let v = self.expr.as_const()?;
        Some(match self.kind {
            Kind::IsTrue => truth(&v) == Ok(true),
            Kind::IsFalse => truth(&v) == Ok(false),
            Kind::Selects(i) => matches!(v, Value::Number(d) if d.trunc() == i as f64),
        })
    }

    fn to_expr(&self) -> Expr {
        match self.kind {
            Kind::IsTrue => Expr::Call(Arc::from("ISTRUE"), vec![self.expr.clone()]),
            Kind::IsFalse => Expr::Call(Arc::from("ISFALSE"), vec![self.expr.clone()]),
            Kind::Selects(i) => Expr::Call(
                Arc::from("ISFALSE"),
                vec![Expr::binary(
                    BinaryOp::Sub,
                    Expr::Call(Arc::from("TRUNC"), vec![self.expr.clone()]),
                    Expr::Number(i as f64),
                )],
            ),
        }
    }
}

/// A disjunction of conjunctions. Empty means false; a member with no
/// literals means true.
#[derive(Clone, Debug, Default)]
struct Dnf(Vec<Vec<Lit>>);

impl Dnf {
    fn truth() -> Dnf {
        Dnf(vec![Vec::new()])
    }

    fn is_true(&self) -> bool {
        self.0.iter().any(|c| c.is_empty())
    }

    fn literals(&self) -> usize {
        self.0.iter().map(|c| c.len()).sum()
    }

    fn add(&mut self, conj: Vec<Lit>) {
        let mut clean: Vec<Lit> = Vec::with_capacity(conj.len());
        for l in conj {
            if clean.iter().any(|k| k.contradicts(&l)) {
                return;
            }
            if !clean.contains(&l) {
                clean.push(l);
            }
        }
        let subset = |a: &[Lit], b: &[Lit]| a.iter().all(|l| b.contains(l));
        if self.0.iter().any(|c| subset(c, &clean)) {
            return;
        }
        self.0.retain(|c| !subset(&clean, c));
        self.0.push(clean);
    }

    fn to_expr(&self) -> Expr {
        let conj = |c: &Vec<Lit>| -> Expr {
            if c.len() == 1 {
                c[0].to_expr()
            } else {
                Expr::And(c.iter().map(Lit::to_expr).collect())
            }
        };
        match self.0.len() {
            0 => Expr::Number(0.0),
            1 => conj(&self.0[0]),
            _ => Expr::Or(self.0.iter().map(conj).collect()),
        }
    }
}

struct Walker<'a> {
    index: &'a HashMap<CellPos, usize>,
    ecs: &'a mut [Dnf],
    current: &'a Dnf,
}

impl Walker<'_> {
    fn visit(&mut self, e: &Expr, path: &mut Vec<Lit>) {
        match e {
            Expr::CellRef(a) if a.sheet.is_none() => {
                if let Some(&j) = self.index.get(&a.pos) {
                    for conj in &self.current.0 {
                        let mut c = conj.clone();
                        c.extend(path.iter().cloned());
                        self.ecs[j].add(c);
                    }
                }
            }
            Expr::If(c, a, b) => {
                self.visit(c, path);
                self.branch(c, Kind::IsTrue, a, path);
                self.branch(c, Kind::IsFalse, b, path);
            }
            Expr::Choose(s, args) => {
                self.visit(s, path);
                for (i, a) in args.iter().enumerate() {
                    self.branch(s, Kind::Selects(i + 1), a, path);
                }
            }
            Expr::And(args) | Expr::Or(args) => {
                let kind = if matches!(e, Expr::And(_)) {
                    Kind::IsTrue
                } else {
                    Kind::IsFalse
                };
                let mark = path.len();
                let mut feasible = true;
                for a in args {
                    if feasible {
                        self.visit(a, path);
                    }
                    let lit = Lit {
                        expr: a.clone(),
                        kind,
                    };
                    match lit.constant() {
                        Some(true) => {}
                        Some(false) => feasible = false,
                        None => path.push(lit),
                    }
                }
                path.truncate(mark);
            }
            other => other.for_each_child(|c| self.visit(c, path)),
        }
    }

    fn branch(&mut self, scrutinee: &Expr, kind: Kind, e: &Expr, path: &mut Vec<Lit>) {
        let lit = Lit {
            expr: scrutinee.clone(),
            kind,
        };
        match lit.constant() {
            Some(true) => self.visit(e, path),
            Some(false) => {}
            None => {
                path.push(lit);
                self.visit(e, path);
                path.pop();
            }
        }
    }
}

fn refs_cell(e: &Expr, cells: &HashSet<CellPos>) -> bool {
    let mut refs = Vec::new();
    e.local_refs(&mut refs);
    refs.iter().any(|p| cells.contains(p))
}

// Wraps scrutinees whose branches read other cells in `Cached` nodes.
fn share_conditions(e: &Expr, cells: &HashSet<CellPos>, next_id: &mut u32) -> Expr {
    let mut cache = |e: Expr| -> Expr {
        if e.is_const() || matches!(e, Expr::CellRef(_) | Expr::Cached(_)) {
            return e;
        }
        *next_id += 1;
        Expr::Cached(Arc::new(Cached { id: *next_id, expr: e }))
    };
    e.rewrite(&mut |node| match node {
        Expr::If(c, a, b) if refs_cell(&a, cells) || refs_cell(&b, cells) => {
            Expr::If(Box::new(cache(*c)), a, b)
        }
        Expr::Choose(s, args) if args.iter().any(|a| refs_cell(a, cells)) => {
            Expr::Choose(Box::new(cache(*s)), args)
        }
        Expr::And(args) => Expr::And(share_prefix(args, cells, &mut cache)),
        Expr::Or(args) => Expr::Or(share_prefix(args, cells, &mut cache)),
        other => other,
    })
}

fn share_prefix(args: Vec<Expr>, cells: &HashSet<CellPos>, cache: &mut dyn FnMut(Expr) -> Expr) -> Vec<Expr> {
    let n = args.len();
    // later[i]: some argument after i reads a cell.
    let mut later = vec![false; n];
    for i in (0..n.saturating_sub(1)).rev() {
        later[i] = later[i + 1] || refs_cell(&args[i + 1], cells);
    }
    args.into_iter()
        .enumerate()
        .map(|(i, a)| if later[i] { cache(a) } else { a })
        .collect()
}

fn cells_in(e: &Expr, index: &HashMap<CellPos, usize>, out: &mut Vec<usize>) {
    let mut refs = Vec::new();
    e.local_refs(&mut refs);
    out.extend(refs.iter().filter_map(|p| index.get(p)));
}

/// Assigns evaluation conditions and slots. `cells` is in topological
/// order with the output last. Returns the compute cells and notes.
pub fn schedule(cells: Vec<(CellPos, Expr)>, _inputs: &HashSet<CellPos>) -> (Vec<ComputeCell>, Vec<String>) {
    let n = cells.len();
    let positions: HashSet<CellPos> = cells.iter().map(|(p, _)| *p).collect();
    let index: HashMap<CellPos, usize> = cells.iter().enumerate().map(|(i, (p, _))| (*p, i)).collect();

    let mut next_id = 0;
    let exprs: Vec<Expr> = cells
        .iter()
        .map(|(_, e)| share_conditions(e, &positions, &mut next_id))
        .collect();

    let mut ecs = vec![Dnf::default(); n];
    if n > 0 {
        ecs[n - 1] = Dnf::truth();
    }
    let mut overflow = false;
    for i in (0..n).rev() {
        let current = ecs[i].clone();
        let mut w = Walker {
            index: &index,
            ecs: &mut ecs,
            current: &current,
        };
        w.visit(&exprs[i], &mut Vec::new());
        if ecs.iter().map(Dnf::literals).sum::<usize>() > MAX_LITERALS {
            overflow = true;
            break;
        }
    }

    let lazy = |reason: &str| {
        let body = cells
            .iter()
            .zip(&ecs)
            .enumerate()
            .map(|(slot, ((pos, e), ec))| ComputeCell {
                cell: *pos,
                slot,
                expr: e.clone(),
                cond: if ec.is_true() || slot == n - 1 {
                    EvalCond::Always
                } else {
                    EvalCond::OnDemand
                },
            })
            .collect();
        (body, vec![format!("lazy evaluation of conditional cells: {reason}")])
    };
    if overflow {
        return lazy("conditions too large");
    }

    let guards: Vec<Option<Expr>> = ecs
        .iter()
        .map(|ec| (!ec.is_true()).then(|| ec.to_expr()))
        .collect();

    // Order by data dependencies plus guard dependencies, keeping the
    // original order where there is a choice.
    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        cells_in(&exprs[i], &index, &mut deps[i]);
        if let Some(g) = &guards[i] {
            cells_in(g, &index, &mut deps[i]);
        }
        deps[i].sort_unstable();
        deps[i].dedup();
        if deps[i].contains(&i) {
            return lazy("a condition depends on its own cell");
        }
    }
    let mut indegree = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ds) in deps.iter().enumerate() {
        indegree[i] = ds.len();
        for &d in ds {
            users[d].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &u in &users[i] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push(Reverse(u));
            }
        }
    }
    if order.len() < n {
        return lazy("conditions cannot be evaluated in dependency order");
    }
    debug_assert_eq!(order.last(), Some(&(n - 1)));

    let body = order
        .iter()
        .enumerate()
        .map(|(slot, &i)| ComputeCell {
            cell: cells[i].0,
            slot,
            expr: exprs[i].clone(),
            cond: match &guards[i] {
                None => EvalCond::Always,
                Some(g) => EvalCond::When(g.clone()),
            },
        })
        .collect();
    (body, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    fn cells(list: &[(&str, &str)]) -> Vec<(CellPos, Expr)> {
        list.iter()
            .map(|(p, f)| (CellPos::parse(p).unwrap(), parse_formula(f).unwrap()))
            .collect()
    }

    #[test]
    fn branch_guards() {
        let body = cells(&[
            ("B1", "=A1*2"),
            ("B2", "=A1*3"),
            ("C1", "=IF(A1>0,B1+B1,B2+B2)"),
        ]);
        let (out, notes) = schedule(body, &HashSet::new());
        assert!(notes.is_empty());
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].cond, EvalCond::Always);
        match (&out[0].cond, &out[1].cond) {
            (EvalCond::When(a), EvalCond::When(b)) => {
                assert_eq!(a.to_string(), "ISTRUE(A1>0)");
                assert_eq!(b.to_string(), "ISFALSE(A1>0)");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unconditional_use_wins() {
        let body = cells(&[("B1", "=A1*2"), ("C1", "=B1+IF(A1,B1,0)")]);
        let (out, _) = schedule(body, &HashSet::new());
        assert_eq!(out[0].cond, EvalCond::Always);
    }

    #[test]
    fn and_arguments_are_guarded_by_earlier_ones() {
        let body = cells(&[("B1", "=A1/2"), ("C1", "=AND(A1<>0,B1>1)")]);
        let (out, _) = schedule(body, &HashSet::new());
        match &out[0].cond {
            EvalCond::When(g) => assert_eq!(g.to_string(), "ISTRUE(A1<>0)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_branches_are_decided() {
        let body = cells(&[("B1", "=A1*2"), ("B2", "=A1*3"), ("C1", "=IF(1,B1+B1,B2+B2)")]);
        let (out, _) = schedule(body, &HashSet::new());
        let b2 = out.iter().find(|c| c.cell == CellPos::parse("B2").unwrap()).unwrap();
        assert_eq!(b2.cond, EvalCond::When(Expr::Number(0.0)));
        let b1 = out.iter().find(|c| c.cell == CellPos::parse("B1").unwrap()).unwrap();
        assert_eq!(b1.cond, EvalCond::Always);
    }

    #[test]
    fn guard_cells_come_first() {
        // B2 is only needed when B1 is true, and B1 is itself conditional.
        let body = cells(&[
            ("B2", "=A2+1"),
            ("B1", "=A1+1"),
            ("C1", "=IF(A3,IF(B1+B1,B2+B2,0),B1)"),
        ]);
        let (out, notes) = schedule(body, &HashSet::new());
        assert!(notes.is_empty());
        let order: Vec<String> = out.iter().map(|c| c.cell.to_string()).collect();
        assert_eq!(order, ["B1", "B2", "C1"]);
    }
}

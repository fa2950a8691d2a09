use std::fmt;
use std::sync::Arc;

use crate::sdf::SdfId;
use crate::values::{ErrorValue, Value};

/// A cell position on a sheet, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellPos {
    pub row: u32,
    pub col: u32,
}

impl CellPos {
    pub fn new(col: u32, row: u32) -> CellPos {
        debug_assert!(col >= 1 && row >= 1);
        CellPos { row, col }
    }

    /// Parses `A1`-style text (no sheet, `$` markers allowed).
    pub fn parse(text: &str) -> Option<CellPos> {
        let text = text.trim();
        let bytes = text.as_bytes();
        let mut i = 0;
        if bytes.get(i) == Some(&b'$') {
            i += 1;
        }
        let letters_start = i;
        while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
            i += 1;
        }
        let letters = &text[letters_start..i];
        if bytes.get(i) == Some(&b'$') {
            i += 1;
        }
        let digits = &text[i..];
        if letters.is_empty() || letters.len() > 3 || digits.is_empty() {
            return None;
        }
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let col = column_number(letters)?;
        let row: u32 = digits.parse().ok()?;
        (row >= 1).then_some(CellPos { row, col })
    }
}

pub fn column_number(letters: &str) -> Option<u32> {
    let mut col: u32 = 0;
    for b in letters.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        col = col * 26 + (b.to_ascii_uppercase() - b'A' + 1) as u32;
    }
    (col >= 1).then_some(col)
}

pub fn column_letters(mut col: u32) -> String {
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

impl fmt::Display for CellPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", column_letters(self.col), self.row)
    }
}

/// A cell address, optionally qualified by a sheet name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddr {
    pub sheet: Option<Arc<str>>,
    pub pos: CellPos,
}

impl CellAddr {
    pub fn local(pos: CellPos) -> CellAddr {
        CellAddr { sheet: None, pos }
    }

    pub fn on(sheet: &str, pos: CellPos) -> CellAddr {
        CellAddr {
            sheet: Some(Arc::from(sheet)),
            pos,
        }
    }

    pub fn col(&self) -> u32 {
        self.pos.col
    }

    pub fn row(&self) -> u32 {
        self.pos.row
    }

    /// Parses `A1` or `Sheet!A1` / `'Sheet name'!A1`.
    pub fn parse(text: &str) -> Option<CellAddr> {
        let text = text.trim();
        match text.rfind('!') {
            None => CellPos::parse(text).map(CellAddr::local),
            Some(bang) => {
                let sheet = &text[..bang];
                let sheet = if sheet.len() >= 2 && sheet.starts_with('\'') && sheet.ends_with('\'') {
                    sheet[1..sheet.len() - 1].replace("''", "'")
                } else {
                    sheet.to_string()
                };
                if sheet.is_empty() {
                    return None;
                }
                let pos = CellPos::parse(&text[bang + 1..])?;
                Some(CellAddr {
                    sheet: Some(Arc::from(sheet.as_str())),
                    pos,
                })
            }
        }
    }
}

pub(crate) fn is_plain_sheet_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn quote_sheet_name(name: &str) -> String {
    if is_plain_sheet_name(name) {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

impl fmt::Display for CellAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sheet {
            Some(s) => write!(f, "{}!{}", quote_sheet_name(s), self.pos),
            None => write!(f, "{}", self.pos),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Concat => 2,
            BinaryOp::Add | BinaryOp::Sub => 3,
            BinaryOp::Mul | BinaryOp::Div => 4,
            BinaryOp::Pow => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    #[inline]
    pub fn test<T: PartialOrd + ?Sized>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// A resolved reference to a sheet-defined function. The name is kept for
/// rendering; calls are bound late through the function table by id.
#[derive(Clone, Debug)]
pub struct SdfRef {
    pub id: SdfId,
    pub name: Arc<str>,
}

impl PartialEq for SdfRef {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

/// An expression whose value is computed at most once per function call and
/// shared by every node that holds the same `Arc`.
#[derive(Debug, PartialEq)]
pub struct Cached {
    pub id: u32,
    pub expr: Expr,
}

/// Formula abstract syntax.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(Arc<str>),
    Error(ErrorValue),
    /// Any runtime value, e.g. a closure produced during specialization.
    Const(Value),
    /// Reference to a cell on the sheet that holds the formula.
    CellRef(CellAddr),
    /// Sheet-qualified reference to an ordinary-sheet cell.
    NormalCellRef(CellAddr),
    NormalCellArea(CellAddr, CellAddr),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    /// Built-in call, or a call by name resolved at evaluation time.
    Call(Arc<str>, Vec<Expr>),
    SdfCall(SdfRef, Vec<Expr>),
    /// `CLOSURE(f, args...)`; the first element is the function operand.
    MakeClosure(Vec<Expr>),
    Apply(Box<Expr>, Vec<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Choose(Box<Expr>, Vec<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Cached(Arc<Cached>),
}

impl Expr {
    pub fn from_value(v: &Value) -> Expr {
        match v {
            Value::Number(d) => Expr::Number(*d),
            Value::Text(s) => Expr::Text(s.clone()),
            Value::Error(e) => Expr::Error(*e),
            other => Expr::Const(other.clone()),
        }
    }

    /// The constant value, if this node is one.
    pub fn as_const(&self) -> Option<Value> {
        match self {
            Expr::Number(d) => Some(Value::from_double_or_nan(*d)),
            Expr::Text(s) => Some(Value::Text(s.clone())),
            Expr::Error(e) => Some(Value::Error(*e)),
            Expr::Const(v) => Some(v.clone()),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(
            self,
            Expr::Number(_) | Expr::Text(_) | Expr::Error(_) | Expr::Const(_)
        )
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn compare(op: CmpOp, a: Expr, b: Expr) -> Expr {
        Expr::Compare(op, Box::new(a), Box::new(b))
    }

    pub fn if_(c: Expr, a: Expr, b: Expr) -> Expr {
        Expr::If(Box::new(c), Box::new(a), Box::new(b))
    }

    pub fn local_ref(pos: CellPos) -> Expr {
        Expr::CellRef(CellAddr::local(pos))
    }

    /// Calls `f` on every direct child expression.
    pub fn for_each_child<'a>(&'a self, mut f: impl FnMut(&'a Expr)) {
        match self {
            Expr::Number(_)
            | Expr::Text(_)
            | Expr::Error(_)
            | Expr::Const(_)
            | Expr::CellRef(_)
            | Expr::NormalCellRef(_)
            | Expr::NormalCellArea(..) => {}
            Expr::Unary(_, e) => f(e),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => {
                f(a);
                f(b);
            }
            Expr::Call(_, args)
            | Expr::SdfCall(_, args)
            | Expr::MakeClosure(args)
            | Expr::And(args)
            | Expr::Or(args) => args.iter().for_each(f),
            Expr::Apply(fun, args) => {
                f(fun);
                args.iter().for_each(f);
            }
            Expr::If(c, a, b) => {
                f(c);
                f(a);
                f(b);
            }
            Expr::Choose(s, args) => {
                f(s);
                args.iter().for_each(f);
            }
            Expr::Cached(c) => f(&c.expr),
        }
    }

    /// Rebuilds the tree bottom-up, giving `f` the chance to replace each
    /// node after its children have been rebuilt. `Cached` nodes are
    /// rebuilt as fresh (unshared) nodes only if their contents change.
    pub fn rewrite(&self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.rewrite(f))),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(a.rewrite(f)), Box::new(b.rewrite(f))),
            Expr::Compare(op, a, b) => {
                Expr::Compare(*op, Box::new(a.rewrite(f)), Box::new(b.rewrite(f)))
            }
            Expr::Call(name, args) => Expr::Call(name.clone(), rewrite_all(args, f)),
            Expr::SdfCall(r, args) => Expr::SdfCall(r.clone(), rewrite_all(args, f)),
            Expr::MakeClosure(args) => Expr::MakeClosure(rewrite_all(args, f)),
            Expr::Apply(fun, args) => Expr::Apply(Box::new(fun.rewrite(f)), rewrite_all(args, f)),
            Expr::If(c, a, b) => Expr::If(
                Box::new(c.rewrite(f)),
                Box::new(a.rewrite(f)),
                Box::new(b.rewrite(f)),
            ),
            Expr::Choose(s, args) => Expr::Choose(Box::new(s.rewrite(f)), rewrite_all(args, f)),
            Expr::And(args) => Expr::And(rewrite_all(args, f)),
            Expr::Or(args) => Expr::Or(rewrite_all(args, f)),
            Expr::Cached(c) => {
                let inner = c.expr.rewrite(f);
                if inner == c.expr {
                    Expr::Cached(c.clone())
                } else {
                    Expr::Cached(Arc::new(Cached { id: c.id, expr: inner }))
                }
            }
            leaf => leaf.clone(),
        };
        f(rebuilt)
    }

    /// Removes every `Cached` wrapper.
    pub fn strip_cached(&self) -> Expr {
        self.rewrite(&mut |e| match e {
            Expr::Cached(c) => c.expr.clone(),
            other => other,
        })
    }

    /// Sheet-local cell references in this expression, with repetition.
    pub fn local_refs(&self, out: &mut Vec<CellPos>) {
        if let Expr::CellRef(a) = self {
            if a.sheet.is_none() {
                out.push(a.pos);
            }
        }
        self.for_each_child(|c| c.local_refs(out));
    }

    /// Number of nodes, counting shared nodes once per occurrence.
    pub fn size(&self) -> usize {
        let mut n = 1;
        self.for_each_child(|c| n += c.size());
        n
    }
}

fn rewrite_all(args: &[Expr], f: &mut dyn FnMut(Expr) -> Expr) -> Vec<Expr> {
    args.iter().map(|a| a.rewrite(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions() {
        assert_eq!(CellPos::parse("A1"), Some(CellPos::new(1, 1)));
        assert_eq!(CellPos::parse("$B$66"), Some(CellPos::new(2, 66)));
        assert_eq!(CellPos::parse("AA10"), Some(CellPos::new(27, 10)));
        assert_eq!(CellPos::parse("A0"), None);
        assert_eq!(CellPos::parse("1A"), None);
        assert_eq!(column_letters(27), "AA");
        assert_eq!(column_letters(702), "ZZ");
        assert_eq!(column_letters(703), "AAA");
        assert_eq!(CellPos::new(5, 3).to_string(), "E3");
    }

    #[test]
    fn addresses() {
        let a = CellAddr::parse("Sheet1!E3").unwrap();
        assert_eq!(a.sheet.as_deref(), Some("Sheet1"));
        assert_eq!(a.to_string(), "Sheet1!E3");
        let b = CellAddr::parse("'My sheet'!A2").unwrap();
        assert_eq!(b.sheet.as_deref(), Some("My sheet"));
        assert_eq!(b.to_string(), "'My sheet'!A2");
        assert_eq!(CellAddr::parse("!A1"), None);
    }
}

//! Random non-volatile sheet-defined functions for equivalence testing.
//!
//! Every generated function is `R(A1, A2, A3)` with up to four
//! intermediate cells in column B and its output in C1. Bodies mix
//! arithmetic, comparisons, text, conditionals, logical junctions, calls
//! to the corpus functions and, sometimes, a guarded self-call that
//! decreases A1.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use std::sync::Arc;

use funcalc::{Config, FunctionValue, Value, Workbook};

pub struct RandomSdf {
    pub text: String,
    pub recursive: bool,
}

struct Gen<'a> {
    rng: &'a mut Pcg64,
    cells: Vec<&'static str>,
}

const NUMS: [&str; 9] = ["0", "1", "2", "3", "-1", "0.5", "10", "-2.5", "7"];
const CMPS: [&str; 6] = ["=", "<>", "<", "<=", ">", ">="];
const ARITH: [&str; 4] = ["+", "-", "*", "/"];

impl Gen<'_> {
    fn leaf(&mut self) -> String {
        match self.rng.random_range(0..10) {
            0..=4 => {
                let n = self.cells.len();
                self.cells[self.rng.random_range(0..n)].to_string()
            }
            5..=7 => NUMS.choose(self.rng).unwrap().to_string(),
            8 => ["\"a\"", "\"\"", "\"7\""].choose(self.rng).unwrap().to_string(),
            _ => ["#DIV/0!", "#VALUE!", "TRUE()", "FALSE()"].choose(self.rng).unwrap().to_string(),
        }
    }

    fn expr(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.random_bool(0.25) {
            return self.leaf();
        }
        let d = depth - 1;
        match self.rng.random_range(0..16) {
            0..=3 => {
                let op = ARITH.choose(self.rng).unwrap();
                format!("({}{op}{})", self.expr(d), self.expr(d))
            }
            4 => format!("({}^{})", self.expr(d), ["0", "1", "2"].choose(self.rng).unwrap()),
            5 | 6 => {
                let op = CMPS.choose(self.rng).unwrap();
                format!("({}{op}{})", self.expr(d), self.expr(d))
            }
            7 => format!("({}&{})", self.expr(d), self.expr(d)),
            8 | 9 => format!("IF({},{},{})", self.expr(d), self.expr(d), self.expr(d)),
            10 => {
                let f = ["AND", "OR"].choose(self.rng).unwrap();
                let n = self.rng.random_range(1..4);
                let args: Vec<_> = (0..n).map(|_| self.expr(d)).collect();
                format!("{f}({})", args.join(","))
            }
            11 => format!("NOT({})", self.expr(d)),
            12 => format!("CHOOSE({},{},{},{})", self.expr(d), self.expr(d), self.expr(d), self.expr(d)),
            13 => {
                let f = ["MOD", "QUOTIENT", "FLOOR"].choose(self.rng).unwrap();
                format!("{f}({},{})", self.expr(d), self.expr(d))
            }
            14 => {
                let f = ["ABS", "TRUNC", "SQRT", "ISERROR", "ISTRUE"].choose(self.rng).unwrap();
                format!("{f}({})", self.expr(d))
            }
            _ => match self.rng.random_range(0..4) {
                0 => format!("ADD3({},{},{})", self.expr(d), self.expr(d), self.expr(d)),
                1 => format!("MONTHLEN({},{})", self.expr(d), self.expr(d)),
                2 => format!("TRIAREA({},{},{})", self.expr(d), self.expr(d), self.expr(d)),
                _ => format!("APPLY(CLOSURE(\"ADD3\",{},#NA,{}),{})", self.expr(d), self.expr(d), self.expr(d)),
            },
        }
    }
}

/// Generates one random function from `seed`.
pub fn random_sdf(seed: u64) -> RandomSdf {
    let mut rng = Pcg64::seed_from_u64(seed);
    let recursive = rng.random_bool(0.3);
    let mut g = Gen {
        rng: &mut rng,
        cells: vec!["A1", "A2", "A3"],
    };
    let mut text = String::from("function sheet R\nA5 = =DEFINE(\"R\", C1, A1, A2, A3)\n");
    let n = g.rng.random_range(0..5);
    for name in ["B1", "B2", "B3", "B4"].into_iter().take(n) {
        let e = g.expr(3);
        text.push_str(&format!("{name} = ={e}\n"));
        g.cells.push(name);
    }
    let base = g.expr(3);
    let out = if recursive {
        let a2 = g.expr(2);
        let a3 = g.expr(2);
        let step = ["1", "2", "0.5"].choose(g.rng).unwrap();
        format!("IF(A1<=0,{base},R(A1-{step},{a2},{a3}))")
    } else {
        base
    };
    text.push_str(&format!("C1 = ={out}\n"));
    RandomSdf { text, recursive }
}

/// A workbook with the corpus plus the random function `R`.
pub fn workbook(sdf: &RandomSdf, strict: bool) -> Workbook {
    let config = Config {
        strict_simplify: strict,
        ..Config::default()
    };
    let mut wb = super::corpus_with(config);
    funcalc::wbfile::load_into(&mut wb, &sdf.text).expect("generated function loads");
    wb.ensure_functions();
    wb
}

/// A random argument value: mostly small numbers, sometimes text or an
/// error.
pub fn random_arg(rng: &mut Pcg64) -> Value {
    match rng.random_range(0..12) {
        0 => Value::text(["", "a", "12"].choose(rng).unwrap()),
        1 => Value::Error(*[funcalc::ErrorValue::DIV0, funcalc::ErrorValue::VALUE].choose(rng).unwrap()),
        2 => Value::Number(rng.random_range(-30.0..30.0)),
        _ => Value::Number(rng.random_range(-3..13) as f64),
    }
}

/// `pattern[i] = Some(v)` fixes argument `i`.
pub fn random_pattern(rng: &mut Pcg64, arity: usize) -> Vec<Option<Value>> {
    (0..arity)
        .map(|_| if rng.random_bool(0.5) { Some(random_arg(rng)) } else { None })
        .collect()
}

/// Results are equal when numbers agree bit for bit and everything else
/// agrees structurally.
pub fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.to_bits() == y.to_bits(),
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Error(x), Value::Error(y)) => x == y,
        (Value::Function(x), Value::Function(y)) => x.target == y.target && x.captured == y.captured,
        _ => false,
    }
}

/// Specializes `R` to `patterns` random patterns and compares residual and
/// original on `vectors` random argument vectors each. Returns the first
/// mismatch.
pub fn check_equivalence(seed: u64, patterns: usize, vectors: usize, strict: bool) -> Result<(), String> {
    let sdf = random_sdf(seed);
    let wb = workbook(&sdf, strict);
    let r = wb.function_by_name("R").ok_or_else(|| format!("R not defined: {:?}", wb.define_diagnostics()))?;
    let mut rng = Pcg64::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..patterns {
        let pattern = random_pattern(&mut rng, 3);
        let fv = Arc::new(FunctionValue {
            target: r.id,
            name: r.name.clone(),
            captured: pattern.clone(),
        });
        let spec = funcalc::peval::specialize(&wb, &fv);
        for _ in 0..vectors {
            let dynamic: Vec<Value> = pattern.iter().filter(|p| p.is_none()).map(|_| random_arg(&mut rng)).collect();
            let full = fv.merge_args(&dynamic).unwrap();
            let want = wb.call("R", &full);
            let got = wb.apply(&spec, &dynamic);
            if !same(&want, &got) {
                return Err(format!(
                    "seed {seed}\n{}pattern {fv} -> {spec}\nargs {full:?}\noriginal {want} residual {got}",
                    sdf.text
                ));
            }
        }
    }
    Ok(())
}

/// A straight-line numeric function `N(A1, A2)`: arithmetic and math
/// builtins only, intermediate cells in column B, output in C1.
pub fn random_numeric_sdf(seed: u64) -> String {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut cells = vec!["A1".to_string(), "A2".to_string()];
    fn expr(rng: &mut Pcg64, cells: &[String], depth: u32) -> String {
        if depth == 0 || rng.random_bool(0.3) {
            return if rng.random_bool(0.7) {
                cells.choose(rng).unwrap().clone()
            } else {
                NUMS.choose(rng).unwrap().to_string()
            };
        }
        match rng.random_range(0..6) {
            0..=3 => {
                let op = ARITH.choose(rng).unwrap();
                format!("({}{op}{})", expr(rng, cells, depth - 1), expr(rng, cells, depth - 1))
            }
            4 => {
                let f = ["ABS", "SQRT", "TRUNC", "EXP"].choose(rng).unwrap();
                format!("{f}({})", expr(rng, cells, depth - 1))
            }
            _ => format!("-{}", expr(rng, cells, depth - 1)),
        }
    }
    let mut text = String::from("function sheet N\nA5 = =DEFINE(\"N\", C1, A1, A2)\n");
    for i in 1..=rng.random_range(0..4) {
        let e = expr(&mut rng, &cells, 3);
        text.push_str(&format!("B{i} = ={e}\n"));
        cells.push(format!("B{i}"));
    }
    // The output always uses an input, so it is not a bare constant.
    let e = expr(&mut rng, &cells, 3);
    text.push_str(&format!("C1 = =(A1+{e})\n"));
    text
}

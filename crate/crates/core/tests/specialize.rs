mod common;

use std::cell::RefCell;
use std::rc::Rc;

use common::gen::check_equivalence;
use common::*;
use funcalc::trace::TraceEvent;
use funcalc::{Config, ErrorValue, Value};
use proptest::prelude::*;

fn record(wb: &funcalc::Workbook) -> Rc<RefCell<Vec<TraceEvent>>> {
    let log = Rc::new(RefCell::new(Vec::new()));
    let sink = log.clone();
    wb.set_trace_sink(move |e| sink.borrow_mut().push(e.clone()));
    log
}

fn events(log: &Rc<RefCell<Vec<TraceEvent>>>) -> Vec<String> {
    log.borrow().iter().map(|e| e.event.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residual_equals_original_strict(seed in any::<u64>()) {
        prop_assert!(check_equivalence(seed, 4, 40, true).map_err(TestCaseError::fail).is_ok());
    }

    #[test]
    fn monthlen_residual_equals_original(y in 1800i32..2500, m in -1i32..15) {
        let wb = corpus();
        let by_month = eval(&wb, &format!("=APPLY(SPECIALIZE(CLOSURE(\"MONTHLEN\",#NA,{m})),{y})"));
        let by_year = eval(&wb, &format!("=APPLY(SPECIALIZE(CLOSURE(\"MONTHLEN\",{y},#NA)),{m})"));
        let want = wb.call("MONTHLEN", &[num(y as f64), num(m as f64)]);
        prop_assert_eq!(&by_month, &want);
        prop_assert_eq!(&by_year, &want);
    }
}

#[test]
fn specialize_is_idempotent_via_cache() {
    let wb = corpus();
    let log = record(&wb);
    let a = eval(&wb, "=SPECIALIZE(CLOSURE(\"REPT4\",#NA,7))");
    let n = wb.list_functions().len();
    let b = eval(&wb, "=SPECIALIZE(CLOSURE(\"REPT4\",#NA,7))");
    assert_eq!(a, b);
    assert_eq!(wb.list_functions().len(), n);
    let ev = events(&log);
    assert_eq!(ev.iter().filter(|e| *e == "new-specialization").count(), 4);
    assert_eq!(ev.last().unwrap(), "cache-hit");
    // A smaller request reuses the inner residuals.
    eval(&wb, "=SPECIALIZE(CLOSURE(\"REPT4\",#NA,3))");
    assert_eq!(wb.list_functions().len(), n);
}

#[test]
fn all_dynamic_pattern_returns_original() {
    let wb = corpus();
    let log = record(&wb);
    let f = eval(&wb, "=SPECIALIZE(CLOSURE(\"ADD3\",#NA,#NA,#NA))");
    assert_eq!(f, eval(&wb, "=CLOSURE(\"ADD3\",#NA,#NA,#NA)"));
    assert_eq!(events(&log), ["original"]);
}

#[test]
fn specialize_rejects_non_closures() {
    let wb = corpus();
    assert_eq!(eval(&wb, "=SPECIALIZE(3)"), Value::Error(ErrorValue::VALUE));
    assert_eq!(eval(&wb, "=SPECIALIZE(#DIV/0!)"), Value::Error(ErrorValue::DIV0));
    assert_eq!(eval(&wb, "=SPECIALIZE(CLOSURE(\"NOPE\",1))"), Value::Error(ErrorValue::NAME));
}

#[test]
fn dynamic_control_generalizes_recursive_calls() {
    let wb = corpus();
    let log = record(&wb);
    eval(&wb, "=SPECIALIZE(CLOSURE(\"EXPSAMPLE\",0.15,1))");
    let log = log.borrow();
    let g: Vec<_> = log.iter().filter(|e| e.event == "generalized").collect();
    assert_eq!(g.len(), 1, "{log:?}");
    assert_eq!(g[0].function, "EXPSAMPLE");
}

#[test]
fn limit_rolls_back_and_returns_original() {
    let wb = corpus_with(Config {
        spec_limit: 5,
        ..Config::default()
    });
    let log = record(&wb);
    let before = wb.list_functions().len();
    let f = eval(&wb, "=SPECIALIZE(CLOSURE(\"FACD\",-1))");
    assert_eq!(f, eval(&wb, "=CLOSURE(\"FACD\",-1)"));
    assert_eq!(wb.list_functions().len(), before);
    assert_eq!(events(&log).last().unwrap(), "limit-exceeded");
    // Nothing stale is left in the cache.
    let f = eval(&wb, "=SPECIALIZE(CLOSURE(\"FACD\",4))");
    assert_eq!(wb.apply(&f, &[]), num(24.0));
}

#[test]
fn limit_counts_per_function() {
    // REPT4 with n=100 needs 8 residuals: 100, 50, 25, 12, 6, 3, 1, 0.
    let wb = corpus_with(Config {
        spec_limit: 8,
        ..Config::default()
    });
    let f = eval(&wb, "=SPECIALIZE(CLOSURE(\"REPT4\",#NA,100))");
    assert_eq!(wb.list_functions().iter().filter(|f| f.origin.is_some()).count(), 8);
    assert_eq!(wb.apply(&f, &[Value::text("a")]), Value::text(&"a".repeat(100)));
    let wb = corpus_with(Config {
        spec_limit: 7,
        ..Config::default()
    });
    eval(&wb, "=SPECIALIZE(CLOSURE(\"REPT4\",#NA,100))");
    assert_eq!(wb.list_functions().iter().filter(|f| f.origin.is_some()).count(), 0);
}

#[test]
fn volatile_calls_stay_residual() {
    let wb = corpus();
    let f = eval(&wb, "=SPECIALIZE(CLOSURE(\"EXPSAMPLE\",1,5))");
    // RAND() < 1 always holds but must still be drawn.
    let info = wb.function(f.as_function().unwrap().target).unwrap();
    assert!(info.render_body().contains("RAND()"));
    assert_eq!(wb.apply(&f, &[]), num(5.0));
}

#[test]
fn static_apply_becomes_specialized_call() {
    let mut wb = corpus();
    funcalc::wbfile::load_into(
        &mut wb,
        "function sheet G\nA1 = =DEFINE(\"TWICE\", C1, B1, B2)\nC1 = =APPLY(B1, APPLY(B1, B2))\n",
    )
    .unwrap();
    let f = eval(&wb, "=SPECIALIZE(CLOSURE(\"TWICE\",CLOSURE(\"ADD3\",1,#NA,2),#NA))");
    let info = wb.function(f.as_function().unwrap().target).unwrap();
    let body = info.render_body();
    assert!(!body.contains("APPLY"), "{body}");
    assert!(body.contains("ADD3(1,#NA,2)#"), "{body}");
    assert_eq!(wb.apply(&f, &[num(10.0)]), num(16.0));
}

#[test]
fn default_simplify_applies_zero_rules() {
    let mut wb = corpus();
    funcalc::wbfile::load_into(&mut wb, "function sheet G\nA1 = =DEFINE(\"M\", C1, B1, B2)\nC1 = =B1*B2\n").unwrap();
    let f = eval(&wb, "=SPECIALIZE(CLOSURE(\"M\",#NA,0))");
    let info = wb.function(f.as_function().unwrap().target).unwrap();
    assert_eq!(info.render_body(), "C1 = 0\n");
    // The rewrite hides the error the original would give.
    assert_eq!(wb.apply(&f, &[Value::text("x")]), num(0.0));
    assert_eq!(wb.call("M", &[Value::text("x"), num(0.0)]), Value::Error(ErrorValue::VALUE));
}

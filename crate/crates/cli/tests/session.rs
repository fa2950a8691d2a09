use funcalc::{wbfile, Value};
use funcalc_cli::{Reply, Session};

const CORPUS: &str = include_str!("../../../workbooks/corpus.wb");

fn session() -> Session {
    Session::new(wbfile::load(CORPUS).unwrap())
}

fn run(s: &mut Session, line: &str) -> String {
    match s.execute(line) {
        Ok(Reply::Text(t)) => t,
        other => panic!("{line}: {other:?}"),
    }
}

#[test]
fn call_triarea() {
    let mut s = session();
    let (a, b, c): (f64, f64, f64) = (3.0, 4.0, 5.0);
    let p = (a + b + c) / 2.0;
    let heron = (p * (p - a) * (p - b) * (p - c)).sqrt();
    assert_eq!(run(&mut s, "call TRIAREA 3 4 5"), heron.to_string());
    assert_eq!(run(&mut s, "call REPT4 \"a b\" 2"), "a ba b");
}

#[test]
fn specialize_then_dump_ir() {
    let mut s = session();
    let shown = run(&mut s, "specialize CLOSURE(\"MONTHLEN\",#NA,3)");
    let name = shown.strip_suffix("(#NA)").unwrap();
    assert!(name.starts_with("MONTHLEN(#NA,3)#"), "{shown}");
    let ir = run(&mut s, &format!("dump-ir \"{name}\""));
    let body: Vec<&str> = ir.lines().skip(2).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(body, ["const", "box", "return"], "{ir}");
    assert!(run(&mut s, "list-functions").contains(&format!("{name}/1 specialized")));
}

#[test]
fn bench_reports_ns_per_call() {
    let mut s = session();
    let out = run(&mut s, "bench CLOSURE(\"ADD3\",11,23,32) 1000");
    let ns: f64 = out.split_whitespace().next().unwrap().parse().unwrap();
    assert!(ns.is_finite() && ns >= 0.0, "{out}");
    assert!(out.contains("1000 calls of ADD3(11,23,32)"), "{out}");
    assert!(s.execute("bench CLOSURE(\"ADD3\",11,#NA,32) 10").is_err());
    assert!(s.execute("bench 3 10").is_err());
}

#[test]
fn benchmark_builtin() {
    let mut s = session();
    let home = s.wb.sheet_index("Main").unwrap();
    match s.wb.eval_formula(home, "=BENCHMARK(CLOSURE(\"K\"),1)").unwrap() {
        Value::Number(ns) => assert!(ns.is_finite() && ns >= 0.0),
        other => panic!("{other}"),
    }
    assert_eq!(run(&mut s, "set Main!E1 =BENCHMARK(3,10)"), "#VALUE!");
}

#[test]
fn set_recalculates() {
    let mut s = session();
    assert_eq!(run(&mut s, "eval Main!D1"), "6");
    assert_eq!(run(&mut s, "set Main!C1 5.5"), "5.5");
    let heron = {
        let p: f64 = (3.0 + 4.0 + 5.5) / 2.0;
        (p * (p - 3.0) * (p - 4.0) * (p - 5.5)).sqrt()
    };
    assert_eq!(run(&mut s, "eval Main!D1"), heron.to_string());
    // Redefining a function body takes effect.
    run(&mut s, "set Funcs!D11 =A11*B11*C11");
    assert_eq!(run(&mut s, "call ADD3 2 3 4"), "24");
}

#[test]
fn errors_keep_the_session() {
    let mut s = session();
    assert!(s.execute("frobnicate").is_err());
    assert!(s.execute("eval Nope!A1").is_err());
    assert!(s.execute("set Main!A1 =1+").is_err());
    assert!(s.execute("dump-ir NOPE").is_err());
    assert!(s.execute("call NOPE 1").is_err());
    assert_eq!(run(&mut s, "eval Main!A1"), "3");
    assert_eq!(s.execute("quit"), Ok(Reply::Quit));
}

#[test]
fn save_round_trips() {
    let mut s = session();
    let dir = std::env::temp_dir().join(format!("funcalc-save-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("out.wb");
    run(&mut s, &format!("save {}", path.display()));
    let text = std::fs::read_to_string(&path).unwrap();
    let again = wbfile::load(&text).unwrap();
    assert_eq!(wbfile::save(&again), text);
    assert_eq!(again.get("Main!D1").unwrap(), Value::Number(6.0));
    std::fs::remove_dir_all(dir).unwrap();
}

use super::*;
use crate::topology::NodeLevel;

fn first_cond(src: &str) -> Expr {
    parse_program(src).unwrap().cond_decls[0].expr.clone()
}

#[test]
fn thermostat_listing() {
    let p = parse_program(corpus::listing("thermostat").unwrap()).unwrap();
    assert_eq!(p.data_decls.len(), 1);
    assert_eq!(p.data_decls[0].name, "temp");
    assert_eq!(p.data_decls[0].logger_level(), Some(NodeLevel::Fog));
    assert_eq!(p.cond_decls.len(), 1);
    assert_eq!(p.cond_decls[0].name, "lowtemp");
    assert_eq!(p.func_decls.len(), 1);
    let f = &p.func_decls[0];
    assert_eq!(f.call_kind, CallKind::Jasync);
    assert_eq!(f.gate.as_ref().unwrap().cond_names()[0].0, "lowtemp");
    assert!(validate_program(&p).is_empty());
}

#[test]
fn broadcaster_only_program() {
    let p = parse_program("jdata { double x as broadcaster; }").unwrap();
    assert_eq!(p.data_decls.len(), 1);
    assert!(p.data_decls[0].is_broadcaster());
    assert!(p.cond_decls.is_empty());
    assert!(p.func_decls.is_empty());
}

#[test]
fn empty_source() {
    let p = parse_program("").unwrap();
    assert_eq!(p, ProgramDecl::empty("main"));
}

#[test]
fn unknown_level_located() {
    let err = parse_program("jdata { double x as logger(moon); }").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::UnknownLevel("moon".into()));
    assert_eq!(err.span, Span::new(1, 28));
}

#[test]
fn unknown_kind_located() {
    let err = parse_program("jdata {\n  int x as queue;\n}").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::UnknownKind("queue".into()));
    assert_eq!(err.span, Span::new(2, 12));
}

#[test]
fn logger_level_defaults_to_fog() {
    let p = parse_program("jdata { int load as logger; }").unwrap();
    assert_eq!(
        p.data_decls[0].kind,
        DataKind::Logger {
            level: NodeLevel::Fog,
            explicit_level: false
        }
    );
}

#[test]
fn both_gate_placements() {
    let a = parse_program("jcond { c: sys.type == \"fog\"; } jasync {c} function f() {}").unwrap();
    let b = parse_program("jcond { c: sys.type == \"fog\"; } jasync function {c} f() {}").unwrap();
    assert_eq!(a.func_decls[0].gate_placement, GatePlacement::BeforeFunction);
    assert_eq!(b.func_decls[0].gate_placement, GatePlacement::AfterFunction);
    assert_eq!(a.func_decls[0].gate, {
        let mut g = b.func_decls[0].gate.clone();
        if let Some(GateExpr::Cond { span, .. }) = &mut g {
            *span = a.func_decls[0].gate.as_ref().unwrap().cond_names()[0].1;
        }
        g
    });
}

#[test]
fn load_balanced_listing_validates() {
    let p = parse_program(corpus::listing("load_balanced").unwrap()).unwrap();
    assert!(validate_program(&p).is_empty(), "{:?}", validate_program(&p));
    let f = p.func("loadBalanced").unwrap();
    assert!(!f.has_param_list);
    assert!(matches!(f.gate, Some(GateExpr::Or { .. })));
}

#[test]
fn unresolved_gate_cond() {
    let p = parse_program("jasync {foo} function f() {}").unwrap();
    let d = validate_program(&p);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].kind, DiagnosticKind::UnresolvedCond("foo".into()));
    assert_eq!(d[0].span, Span::new(1, 9));
}

#[test]
fn string_vs_int_logger_mismatch() {
    let p = parse_program("jdata { int n as logger; } jcond { c: n == \"high\"; }").unwrap();
    let d = validate_program(&p);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].kind, DiagnosticKind::TypeMismatch);
}

#[test]
fn jsync_requires_return_type() {
    let p = parse_program("jsync function f() {} jsync int g() { return 1; } jasync int h() {}").unwrap();
    let kinds: Vec<_> = validate_program(&p).into_iter().map(|d| d.kind).collect();
    assert_eq!(
        kinds,
        vec![
            DiagnosticKind::MissingReturnType("f".into()),
            DiagnosticKind::UnexpectedReturnType("h".into())
        ]
    );
}

#[test]
fn opaque_items_are_kept() {
    let p = parse_program("var computation;\nint testFunction() {\n\tx = 32;\n}\n").unwrap();
    assert_eq!(p.opaque.len(), 2);
    assert_eq!(p.opaque[0].text, "var computation;");
    assert!(p.opaque[1].text.starts_with("int testFunction()"));
}

#[test]
fn syntax_error_has_position() {
    let err = parse_program("jcond {\n  c: sys.type == ;\n}").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::Syntax);
    assert_eq!(err.span, Span::new(2, 18));
}

#[test]
fn load_check_ready_true() {
    let e = first_cond("jcond { loadCheck: sys.type == \"fog\" && load < 50; }");
    let ctx = StaticContext::new(NodeLevel::Fog, 0).with_value("load", 30.0);
    assert_eq!(evaluate_condition(&e, &ctx).unwrap(), Readiness::Ready(true));
}

#[test]
fn undelivered_broadcaster_blocks() {
    let e = first_cond("jcond { pickpe: pe < sys.rank; }");
    let ctx = StaticContext::new(NodeLevel::Device, 3).with("pe", Lookup::Undelivered);
    assert_eq!(evaluate_condition(&e, &ctx).unwrap(), Readiness::Blocked("pe".into()));
    let ctx = StaticContext::new(NodeLevel::Device, 3).with_value("pe", 2.0);
    assert_eq!(evaluate_condition(&e, &ctx).unwrap(), Readiness::Ready(true));
}

#[test]
fn latest_among_latest_values() {
    let (a, b) = (Value::Num(20.1), Value::Num(17.0));
    let latest = latest_of_latest([(5.0, &a), (9.0, &b)]).unwrap().clone();
    assert_eq!(latest, Value::Num(17.0));
    let e = first_cond("jcond { c: temp < 18.5; }");
    let ctx = StaticContext::new(NodeLevel::Fog, 0).with("temp", Lookup::Value(latest));
    assert_eq!(evaluate_condition(&e, &ctx).unwrap(), Readiness::Ready(true));
}

#[test]
fn dev_alias_for_device() {
    let e = first_cond("jcond { c: sys.type == \"dev\"; }");
    assert!(evaluate_condition(&e, &StaticContext::new(NodeLevel::Device, 0)).unwrap().is_true());
    assert!(!evaluate_condition(&e, &StaticContext::new(NodeLevel::Fog, 0)).unwrap().is_true());
}

#[test]
fn short_circuit_with_blocked_operand() {
    let ctx = StaticContext::new(NodeLevel::Fog, 0).with("b", Lookup::Undelivered);
    let cases = [
        ("sys.rank > 1 && b > 0", Readiness::Ready(false)),
        ("b > 0 && sys.rank > 1", Readiness::Ready(false)),
        ("sys.rank < 1 || b > 0", Readiness::Ready(true)),
        ("b > 0 || sys.rank < 1", Readiness::Ready(true)),
        ("sys.rank < 1 && b > 0", Readiness::Blocked("b".into())),
        ("b > 0 || sys.rank > 1", Readiness::Blocked("b".into())),
    ];
    for (src, want) in cases {
        let e = first_cond(&format!("jcond {{ c: {src}; }}"));
        assert_eq!(evaluate_condition(&e, &ctx).unwrap(), want, "{src}");
    }
}

#[test]
fn absent_variable_is_an_error() {
    let e = first_cond("jcond { c: ghost > 1; }");
    assert_eq!(
        evaluate_condition(&e, &StaticContext::new(NodeLevel::Fog, 0)),
        Err(EvalError::UnknownVariable("ghost".into()))
    );
}

#[test]
fn empty_logger_compares_false() {
    let e = first_cond("jcond { c: load < 50; }");
    let ctx = StaticContext::new(NodeLevel::Fog, 0).with("load", Lookup::NoData);
    assert_eq!(evaluate_condition(&e, &ctx).unwrap(), Readiness::Ready(false));
}

#[test]
fn corpus_round_trips() {
    for (name, src) in corpus::LISTINGS {
        let p = parse_program(src).unwrap();
        let printed = pretty_print(&p);
        let q = parse_program(&printed).unwrap_or_else(|e| panic!("{name}: {e}\n{printed}"));
        assert_eq!(p.without_spans(), q.without_spans(), "{name}");
    }
}

#[test]
fn parenthesized_expressions_round_trip() {
    let src = "jcond { c: (sys.rank > 1 || sys.rank < -2) && (x == 1 || (y != 2 && z >= 3)); }\n\
               jasync {c||(c&&c)} function f() {}";
    let p = parse_program(src).unwrap();
    let q = parse_program(&pretty_print(&p)).unwrap();
    assert_eq!(p.without_spans(), q.without_spans());
}

use loadshed_core::network::{load_case, validate, Severity};

fn case_path(name: &str) -> String {
    format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn bundled_cases_validate() {
    for name in ["case2.json", "case3.json", "case14.m"] {
        let case = load_case(case_path(name)).unwrap();
        let errors: Vec<_> = validate(&case)
            .into_iter()
            .filter(|f| f.severity == Severity::Error)
            .collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
    }
}

#[test]
fn ieee14_shape() {
    let case = load_case(case_path("case14.m")).unwrap();
    assert_eq!(case.n_buses(), 14);
    assert_eq!(case.n_lines(), 20);
    assert_eq!(case.n_gens(), 5);
    assert_eq!(case.n_loads(), 11);
    assert_eq!(case.n_shunts(), 1);
    assert!((case.p_tot() - 2.59).abs() < 1e-12);
    assert!((case.shunts()[0].bs - 0.19).abs() < 1e-12);
}

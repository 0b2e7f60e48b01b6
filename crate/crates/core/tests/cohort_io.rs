use nearfar::cohort::{load_cohort, read_cohort, save_cohort, Provenance, Schema};
use nearfar::dgp::{generate_partially_linear_cohort, PartiallyLinearSpec};
use nearfar::Error;

fn toy() -> Provenance {
    Provenance::Derived { note: "toy".into() }
}

#[test]
fn custom_schema_selects_named_columns() {
    let text =
        "pid,travel,got,y,age,noise,sev\na,1,1,3,40,9,0.1\nb,2,0,1,50,9,0.2\nc,3,1,2,60,9,0.3\n";
    let schema = Schema {
        id: "pid".into(),
        dose: "travel".into(),
        treatment: "got".into(),
        outcome: "y".into(),
        covariates: Some(vec!["age".into(), "sev".into()]),
        ..Schema::default()
    };
    let c = read_cohort(text.as_bytes(), &schema, toy()).unwrap();
    assert_eq!(c.covariate_names(), ["age", "sev"]);
    assert_eq!(c.covariate(1), vec![0.1, 0.2, 0.3]);
    assert_eq!(c.doses(), vec![1.0, 2.0, 3.0]);
    assert_eq!(c.index_of("b"), Some(1));
}

#[test]
fn generated_latent_columns_survive_a_file_round_trip() {
    let c = generate_partially_linear_cohort(&PartiallyLinearSpec::sin_log_sin(0.8, 1.0), 50, 3)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    save_cohort(&c, &path).unwrap();
    let back = load_cohort(&path, &Schema::default()).unwrap();
    assert_eq!(back.latent_u(), c.latent_u());
    for (a, b) in c.subjects().iter().zip(back.subjects()) {
        assert_eq!(a.potential_outcomes, b.potential_outcomes);
        assert_eq!(a.latent_class, b.latent_class);
        assert_eq!(a.covariates, b.covariates);
    }
}

#[test]
fn malformed_rows_are_reported_with_line_numbers() {
    let bad_dose = "id,z,d,r,x1\na,1,1,3,0\nb,NaN?,0,1,0\n";
    match read_cohort(bad_dose.as_bytes(), &Schema::default(), toy()) {
        Err(Error::Row { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a row error, got {other:?}"),
    }
    let missing = "id,z,r,x1\na,1,3,0\nb,2,1,0\n";
    let e = read_cohort(missing.as_bytes(), &Schema::default(), toy()).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains('d'), "{e}");
}

#[test]
fn missing_file_is_an_io_error_naming_the_path() {
    let e = load_cohort("/nonexistent/cohort.csv", &Schema::default()).unwrap_err();
    assert!(matches!(e, Error::Io(_)));
    assert!(e.to_string().contains("/nonexistent/cohort.csv"));
}

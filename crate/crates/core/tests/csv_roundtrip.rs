use platform_rmst::csv_io::{default_schema_for, load_trial_csv, load_trial_reader, write_trial_csv, CsvSchema};
use platform_rmst::simulation::{gen_trial, AvailabilityRegime, DgpConfig};

#[test]
fn simulated_trial_survives_a_file_round_trip() {
    for availability in [AvailabilityRegime::Deterministic, AvailabilityRegime::Stochastic] {
        let data = gen_trial(&DgpConfig { n: 300, availability, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial.csv");
        write_trial_csv(&path, &data).unwrap();
        let with_p = availability == AvailabilityRegime::Stochastic;
        let schema = CsvSchema { periods: Some(12), ..default_schema_for(&data.covariate_names, with_p) };
        let back = load_trial_csv(&path, &schema).unwrap();
        assert_eq!(back.data, data);
    }
}

#[test]
fn multi_arm_recovery_style_table() {
    // entry day, categorical severity, other arms present
    let csv = "pid,day,avail,arm,ttr,recovered,age,sex,severity\n\
               1,3,1,remdesivir,5,1,61,F,mild\n\
               2,4,1,placebo,12,0,70,M,severe\n\
               3,9,0,placebo,7,1,45,F,moderate\n\
               4,10,1,baricitinib,4,1,50,M,mild\n\
               5,11,1,remdesivir,9,1,66,M,severe\n";
    let schema = CsvSchema {
        id: "pid".into(),
        entry: "day".into(),
        availability: "avail".into(),
        arm: "arm".into(),
        time: "ttr".into(),
        event: "recovered".into(),
        covariates: vec!["age".into()],
        categorical: vec!["sex".into(), "severity".into()],
        control_label: "placebo".into(),
        active_label: "remdesivir".into(),
        periods: Some(14),
        ..Default::default()
    };
    let out = load_trial_reader(csv.as_bytes(), &schema).unwrap();
    assert_eq!(out.filtered_other_arms, 1);
    assert_eq!(out.data.n(), 4);
    assert_eq!(out.data.k, 14);
    assert_eq!(out.data.covariate_names, vec!["age", "sex=M", "severity=moderate", "severity=severe"]);
    assert_eq!(out.data.subjects[1].w, vec![70.0, 1.0, 0.0, 1.0]);
    assert_eq!(out.data.subjects[0].a, 1);
}

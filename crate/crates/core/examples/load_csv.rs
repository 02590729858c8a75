//! Loads a multi-arm CSV with a categorical covariate, keeping the control
//! and one active arm.

use platform_rmst::csv_io::{load_trial_reader, CsvSchema};

const CSV: &str = "\
id,entry,v,arm,time,delta,age,severity
p1,0.0,1,placebo,3,1,61,mild
p2,0.2,1,drug_a,5,0,45,severe
p3,0.4,1,drug_b,2,1,70,moderate
p4,0.5,1,drug_a,4,1,52,moderate
p5,0.9,0,placebo,6,0,39,mild
p6,1.1,1,placebo,2,1,66,severe
";

fn main() -> platform_rmst::Result<()> {
    let schema = CsvSchema {
        arm: "arm".into(),
        covariates: vec!["age".into()],
        categorical: vec!["severity".into()],
        control_label: "placebo".into(),
        active_label: "drug_a".into(),
        periods: Some(6),
        ..Default::default()
    };
    let loaded = load_trial_reader(CSV.as_bytes(), &schema)?;
    println!("kept {} subjects, filtered {} from other arms", loaded.data.n(), loaded.filtered_other_arms);
    println!("covariates: {:?}", loaded.data.covariate_names);
    for s in &loaded.data.subjects {
        println!("{} arm {} time {} event {} w {:?}", s.id, s.a, s.t_obs, s.delta, s.w);
    }
    Ok(())
}

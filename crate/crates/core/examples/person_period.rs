//! Expands a handful of subjects into person-period rows and back.

use platform_rmst::{SubjectRecord, TrialData};

fn subject(id: &str, e: f64, v: bool, a: u8, t_obs: usize, delta: bool) -> SubjectRecord {
    SubjectRecord { id: id.into(), w: vec![0.0], e, v_tilde: v, a, t_obs, delta, p_avail: None }
}

fn main() -> platform_rmst::Result<()> {
    let data = TrialData::new(
        4,
        vec!["w".into()],
        vec![
            subject("event-at-2", 0.1, true, 1, 2, true),
            subject("censored-at-3", 0.4, true, 0, 3, false),
            subject("followed-to-end", 1.2, false, 0, 4, false),
        ],
    )?;
    let table = data.person_period()?;
    println!("subject  m  at_risk_event  at_risk_censor  event  censored");
    for r in &table.rows {
        println!(
            "{:<8} {}  {:<13}  {:<14}  {:<5}  {}",
            table.subjects[r.subject].id, r.m, r.at_risk_event, r.at_risk_censor, r.event, r.censored
        );
    }
    println!("reconstructed (time, event): {:?}", table.reconstruct());
    Ok(())
}

//! CSV ingestion and export of subject-level trial data.

use std::collections::BTreeSet;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{SubjectRecord, TrialData};
use crate::error::{Error, Result};

/// Column map for [`load_trial_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub id: String,
    pub entry: String,
    pub availability: String,
    pub arm: String,
    pub time: String,
    pub event: String,
    /// Numeric covariates, mapped to `w` in this order.
    pub covariates: Vec<String>,
    /// Categorical covariates, one-hot expanded after the numeric ones
    /// (first sorted level is the reference and is dropped).
    pub categorical: Vec<String>,
    /// Optional column holding the design availability probability.
    pub availability_prob: Option<String>,
    /// Arm label of the shared control.
    pub control_label: String,
    /// Arm label of the active arm under study; other labels are filtered out.
    pub active_label: String,
    /// Period count; defaults to the largest observed time.
    pub periods: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            entry: "entry".into(),
            availability: "v".into(),
            arm: "a".into(),
            time: "time".into(),
            event: "delta".into(),
            covariates: vec!["w".into()],
            categorical: vec![],
            availability_prob: None,
            control_label: "0".into(),
            active_label: "1".into(),
            periods: None,
        }
    }
}

/// Result of ingestion: validated data plus the count of filtered rows from other arms.
#[derive(Debug, Clone)]
pub struct LoadedTrial {
    pub data: TrialData,
    pub filtered_other_arms: usize,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_f64(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("`{raw}` is not a number"),
    })
}

fn parse_flag(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "1" | "1.0" | "true" | "TRUE" => Ok(true),
        "0" | "0.0" | "false" | "FALSE" => Ok(false),
        other => Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{other}` is not a 0/1 indicator"),
        }),
    }
}

fn parse_time(raw: &str, row: usize, column: &str) -> Result<usize> {
    let v = parse_f64(raw, row, column)?;
    if v.fract() != 0.0 {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{raw}` is not an integer period"),
        });
    }
    if v < 1.0 {
        return Err(Error::Range(format!("row {row}: observed time {v} is below 1")));
    }
    Ok(v as usize)
}

/// Reads and validates a subject-level CSV.
pub fn load_trial_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedTrial> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_trial_reader(file, schema)
}

pub fn load_trial_reader<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<LoadedTrial> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, &schema.id)?;
    let e_col = column(&headers, &schema.entry)?;
    let v_col = column(&headers, &schema.availability)?;
    let a_col = column(&headers, &schema.arm)?;
    let t_col = column(&headers, &schema.time)?;
    let d_col = column(&headers, &schema.event)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let cat_cols = schema
        .categorical
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let p_col = schema
        .availability_prob
        .as_deref()
        .map(|c| column(&headers, c))
        .transpose()?;

    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;

    // categorical levels are collected over the retained arms only
    let mut levels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); cat_cols.len()];
    for rec in &records {
        let arm = rec.get(a_col).unwrap_or("").trim();
        if arm != schema.control_label && arm != schema.active_label {
            continue;
        }
        for (j, &c) in cat_cols.iter().enumerate() {
            levels[j].insert(rec.get(c).unwrap_or("").trim().to_string());
        }
    }
    let levels: Vec<Vec<String>> = levels.into_iter().map(|s| s.into_iter().collect()).collect();

    let mut names = schema.covariates.clone();
    for (j, name) in schema.categorical.iter().enumerate() {
        for lvl in levels[j].iter().skip(1) {
            names.push(format!("{name}={lvl}"));
        }
    }

    let mut subjects = Vec::with_capacity(records.len());
    let mut filtered = 0usize;
    let mut violators = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let arm_raw = field(a_col).trim();
        let a = if arm_raw == schema.control_label {
            0
        } else if arm_raw == schema.active_label {
            1
        } else {
            filtered += 1;
            continue;
        };
        let mut w = Vec::with_capacity(names.len());
        for (&c, name) in cov_cols.iter().zip(&schema.covariates) {
            w.push(parse_f64(field(c), row, name)?);
        }
        for (j, &c) in cat_cols.iter().enumerate() {
            let v = field(c).trim();
            for lvl in levels[j].iter().skip(1) {
                w.push(if v == lvl { 1.0 } else { 0.0 });
            }
        }
        let s = SubjectRecord {
            id: field(id_col).trim().to_string(),
            w,
            e: parse_f64(field(e_col), row, &schema.entry)?,
            v_tilde: parse_flag(field(v_col), row, &schema.availability)?,
            a,
            t_obs: parse_time(field(t_col), row, &schema.time)?,
            delta: parse_flag(field(d_col), row, &schema.event)?,
            p_avail: p_col
                .map(|c| parse_f64(field(c), row, schema.availability_prob.as_deref().unwrap_or("")))
                .transpose()?,
        };
        if !s.v_tilde && s.a == 1 {
            violators.push(s.id.clone());
        }
        subjects.push(s);
    }
    if !violators.is_empty() {
        return Err(Error::DesignViolation { ids: violators });
    }
    if filtered > 0 {
        warn!("filtered {filtered} rows from arms other than the comparison pair");
    }
    let k = match schema.periods {
        Some(k) => k,
        None => subjects.iter().map(|s| s.t_obs).max().unwrap_or(1),
    };
    Ok(LoadedTrial {
        data: TrialData::new(k, names, subjects)?,
        filtered_other_arms: filtered,
    })
}

/// Writes data in the default schema layout (`id,entry,v,a,time,delta,<covariates>[,p_avail]`).
pub fn write_trial_csv(path: impl AsRef<Path>, data: &TrialData) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trial_writer(file, data)
}

pub fn write_trial_writer<W: std::io::Write>(writer: W, data: &TrialData) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let with_p = data.subjects.iter().any(|s| s.p_avail.is_some());
    let mut header = vec!["id".to_string(), "entry".into(), "v".into(), "a".into(), "time".into(), "delta".into()];
    header.extend(data.covariate_names.iter().cloned());
    if with_p {
        header.push("p_avail".into());
    }
    wtr.write_record(&header)?;
    for s in &data.subjects {
        let mut rec = vec![
            s.id.clone(),
            s.e.to_string(),
            u8::from(s.v_tilde).to_string(),
            s.a.to_string(),
            s.t_obs.to_string(),
            u8::from(s.delta).to_string(),
        ];
        rec.extend(s.w.iter().map(|v| v.to_string()));
        if with_p {
            rec.push(s.p_avail.map(|p| p.to_string()).unwrap_or_default());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Schema matching [`write_trial_csv`] output for the given covariate names.
pub fn default_schema_for(covariates: &[String], with_p_avail: bool) -> CsvSchema {
    CsvSchema {
        covariates: covariates.to_vec(),
        availability_prob: with_p_avail.then(|| "p_avail".to_string()),
        ..CsvSchema::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "id,entry,v,a,time,delta,w\n\
                        s1,0.1,1,1,3,1,0.5\n\
                        s2,-0.4,1,0,2,0,-1.0\n\
                        s3,1.2,0,0,5,0,0.0\n";

    #[test]
    fn reads_well_formed_rows() {
        let out = load_trial_reader(GOOD.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(out.data.n(), 3);
        assert_eq!(out.data.k, 5);
        assert_eq!(out.data.subjects[0].w, vec![0.5]);
        assert!(out.data.subjects[0].delta);
        assert!(!out.data.subjects[2].v_tilde);
    }

    #[test]
    fn design_violation_lists_offenders() {
        let csv = "id,entry,v,a,time,delta,w\nok,0,1,1,1,1,0\nbad1,0,0,1,2,0,0\nbad2,0,0,1,2,1,0\n";
        match load_trial_reader(csv.as_bytes(), &CsvSchema::default()) {
            Err(Error::DesignViolation { ids }) => assert_eq!(ids, vec!["bad1", "bad2"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_time_is_range_error() {
        let csv = "id,entry,v,a,time,delta,w\ns1,0,1,0,0,1,0\n";
        assert!(matches!(load_trial_reader(csv.as_bytes(), &CsvSchema::default()), Err(Error::Range(_))));
    }

    #[test]
    fn missing_column_and_bad_number() {
        let csv = "id,entry,v,a,time,delta\ns1,0,1,0,1,1\n";
        assert!(matches!(
            load_trial_reader(csv.as_bytes(), &CsvSchema::default()),
            Err(Error::MissingColumn(c)) if c == "w"
        ));
        let csv = "id,entry,v,a,time,delta,w\ns1,0,1,0,1,1,0\ns2,0,1,0,1,1,abc\n";
        match load_trial_reader(csv.as_bytes(), &CsvSchema::default()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "w");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filters_other_arms_and_one_hot_encodes() {
        let csv = "id,entry,v,arm,time,delta,age,sev\n\
                   a,0,1,RDV,2,1,60,4\n\
                   b,0,1,RDV+BARI,3,0,55,5\n\
                   c,0,0,PLACEBO,3,0,40,6\n\
                   d,1,1,RDV,1,1,70,6\n";
        let schema = CsvSchema {
            arm: "arm".into(),
            covariates: vec!["age".into()],
            categorical: vec!["sev".into()],
            control_label: "RDV".into(),
            active_label: "RDV+BARI".into(),
            periods: Some(28),
            ..CsvSchema::default()
        };
        let out = load_trial_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(out.filtered_other_arms, 1);
        assert_eq!(out.data.covariate_names, vec!["age", "sev=5", "sev=6"]);
        assert_eq!(out.data.subjects[0].w, vec![60.0, 0.0, 0.0]);
        assert_eq!(out.data.subjects[1].w, vec![55.0, 1.0, 0.0]);
        assert_eq!(out.data.subjects[2].w, vec![70.0, 0.0, 1.0]);
        assert_eq!(out.data.subjects[1].a, 1);
        assert_eq!(out.data.k, 28);
    }

    #[test]
    fn export_reloads_identically() {
        let out = load_trial_reader(GOOD.as_bytes(), &CsvSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_trial_writer(&mut buf, &out.data).unwrap();
        let schema = CsvSchema {
            periods: Some(out.data.k),
            ..default_schema_for(&out.data.covariate_names, false)
        };
        let back = load_trial_reader(buf.as_slice(), &schema).unwrap();
        assert_eq!(back.data, out.data);
    }
}

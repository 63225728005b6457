//! CSV reading and writing of trial data and posterior draws.

use crate::datagen::{Arm, ArmData, SubtrialData, TrialData};
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Long-format dump: one row per efficacy observation (an arm without
/// efficacy data gets one row with an empty `efficacy` field).
pub fn write_trial_dump<W: Write>(trials: &[(u64, &TrialData)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "subtrial", "arm", "n", "tox_count", "efficacy"])?;
    for (rep, data) in trials {
        for (k, sub) in data.subtrials.iter().enumerate() {
            for arm in Arm::BOTH {
                let a = sub.arm(arm);
                let head = [rep.to_string(), (k + 1).to_string(), arm.label().to_string(), a.n.to_string(), a.tox.to_string()];
                if a.efficacy.is_empty() {
                    w.write_record(head.iter().map(String::as_str).chain([""]))?;
                }
                for z in &a.efficacy {
                    w.write_record(head.iter().map(String::as_str).chain([z.to_string().as_str()]))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Arm table (subtrial, arm, n, tox_count) in the ingestion schema.
pub fn write_arms_csv<W: Write>(data: &TrialData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subtrial", "arm", "n", "tox_count"])?;
    for (k, sub) in data.subtrials.iter().enumerate() {
        for arm in Arm::BOTH {
            let a = sub.arm(arm);
            w.write_record([(k + 1).to_string(), arm.label().into(), a.n.to_string(), a.tox.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Efficacy table (subtrial, arm, value) in the ingestion schema.
pub fn write_efficacy_csv<W: Write>(data: &TrialData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subtrial", "arm", "value"])?;
    for (k, sub) in data.subtrials.iter().enumerate() {
        for arm in Arm::BOTH {
            for z in &sub.arm(arm).efficacy {
                w.write_record([(k + 1).to_string(), arm.label().into(), z.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn column_index(headers: &csv::StringRecord, name: &str, table: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Input(format!("{table}: missing column '{name}'")))
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, table: &str, column: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| {
        Error::Input(format!("{table}, line {line}: column '{column}' has invalid value '{raw}'"))
    })
}

fn parse_arm(rec: &csv::StringRecord, idx: usize, table: &str) -> Result<Arm> {
    let raw = rec.get(idx).unwrap_or("");
    Arm::parse(raw).ok_or_else(|| {
        let line = rec.position().map_or(0, |p| p.line());
        Error::Input(format!("{table}, line {line}: column 'arm' has invalid value '{raw}' (expected C or E)"))
    })
}

/// Build trial data from an arm table and an optional efficacy table.
/// Subtrials are numbered from 1 and must be contiguous.
pub fn read_trial_csv<R1: Read, R2: Read>(arms: R1, efficacy: Option<R2>) -> Result<TrialData> {
    let mut table: BTreeMap<usize, [Option<ArmData>; 2]> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(arms);
    let headers = rdr.headers()?.clone();
    let ci_k = column_index(&headers, "subtrial", "arms table")?;
    let ci_arm = column_index(&headers, "arm", "arms table")?;
    let ci_n = column_index(&headers, "n", "arms table")?;
    let ci_y = column_index(&headers, "tox_count", "arms table")?;
    for rec in rdr.records() {
        let rec = rec?;
        let k: usize = parse_field(&rec, ci_k, "arms table", "subtrial")?;
        let arm = parse_arm(&rec, ci_arm, "arms table")?;
        let n: u32 = parse_field(&rec, ci_n, "arms table", "n")?;
        let y: u32 = parse_field(&rec, ci_y, "arms table", "tox_count")?;
        if k == 0 {
            return Err(Error::Input("arms table: subtrials are numbered from 1".into()));
        }
        let slot = &mut table.entry(k).or_default()[arm.index()];
        if slot.is_some() {
            return Err(Error::Input(format!("arms table: duplicate row for subtrial {k}, arm {}", arm.label())));
        }
        *slot = Some(ArmData::new(n, y, Vec::new()).map_err(|e| Error::Input(format!("arms table, subtrial {k}: {e}")))?);
    }
    if let Some(eff) = efficacy {
        let mut rdr = csv::Reader::from_reader(eff);
        let headers = rdr.headers()?.clone();
        let ci_k = column_index(&headers, "subtrial", "efficacy table")?;
        let ci_arm = column_index(&headers, "arm", "efficacy table")?;
        let ci_v = column_index(&headers, "value", "efficacy table")?;
        for rec in rdr.records() {
            let rec = rec?;
            let k: usize = parse_field(&rec, ci_k, "efficacy table", "subtrial")?;
            let arm = parse_arm(&rec, ci_arm, "efficacy table")?;
            let v: f64 = parse_field(&rec, ci_v, "efficacy table", "value")?;
            if !v.is_finite() {
                return Err(Error::Input(format!("efficacy table: non-finite value for subtrial {k}")));
            }
            let slot = table
                .get_mut(&k)
                .and_then(|a| a[arm.index()].as_mut())
                .ok_or_else(|| Error::Input(format!("efficacy table: subtrial {k}, arm {} not in arms table", arm.label())))?;
            slot.efficacy.push(v);
        }
    }
    let n_sub = table.len();
    let mut subtrials = Vec::with_capacity(n_sub);
    for (i, (k, arms)) in table.into_iter().enumerate() {
        if k != i + 1 {
            return Err(Error::Input(format!("arms table: subtrial {} is missing", i + 1)));
        }
        let [c, e] = arms;
        let c = c.ok_or_else(|| Error::Input(format!("arms table: subtrial {k} has no control row")))?;
        let e = e.ok_or_else(|| Error::Input(format!("arms table: subtrial {k} has no treatment row")))?;
        subtrials.push(SubtrialData { arms: [c, e] });
    }
    let data = TrialData { subtrials };
    data.validate()?;
    Ok(data)
}

/// Long-format draws: chain, iteration, coordinate, value. Indicators appear
/// as coordinates `z[k]` holding the component index (0 Both … 3 Neither).
pub fn write_draws_csv<W: Write>(draws: &PosteriorDraws, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["chain", "iteration", "coordinate", "value"])?;
    let nc = draws.n_coords();
    let k = draws.n_subtrials();
    let z_names: Vec<String> = (1..=k).map(|i| format!("z[{i}]")).collect();
    for ch in &draws.chains {
        let chain = (ch.chain + 1).to_string();
        for (r, row) in ch.values.chunks_exact(nc).enumerate() {
            let iteration = (draws.burn_in + (r + 1) * draws.thin).to_string();
            for (name, v) in draws.coord_names.iter().zip(row) {
                w.write_record([chain.as_str(), &iteration, name, &v.to_string()])?;
            }
            for (name, z) in z_names.iter().zip(&ch.indicators[r * k..(r + 1) * k]) {
                w.write_record([chain.as_str(), &iteration, name, &z.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_trial;
    use crate::scenario::find_builtin;

    #[test]
    fn ingestion_round_trip() {
        let data = generate_trial(&find_builtin("Ib").unwrap(), 3, 0).unwrap();
        let mut arms = Vec::new();
        let mut eff = Vec::new();
        write_arms_csv(&data, &mut arms).unwrap();
        write_efficacy_csv(&data, &mut eff).unwrap();
        let back = read_trial_csv(arms.as_slice(), Some(eff.as_slice())).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn missing_column_is_named() {
        let arms = "subtrial,arm,n\n1,C,10\n";
        let err = read_trial_csv(arms.as_bytes(), None::<&[u8]>).unwrap_err();
        assert!(err.to_string().contains("tox_count"), "{err}");
    }

    #[test]
    fn bad_value_reports_column_and_line() {
        let arms = "subtrial,arm,n,tox_count\n1,C,10,3\n1,E,ten,1\n";
        let err = read_trial_csv(arms.as_bytes(), None::<&[u8]>).unwrap_err().to_string();
        assert!(err.contains("'n'") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn tox_exceeding_n_rejected() {
        let arms = "subtrial,arm,n,tox_count\n1,C,3,4\n1,E,3,1\n";
        assert!(read_trial_csv(arms.as_bytes(), None::<&[u8]>).is_err());
    }

    #[test]
    fn gap_in_subtrials_rejected() {
        let arms = "subtrial,arm,n,tox_count\n1,C,3,1\n1,E,3,1\n3,C,3,1\n3,E,3,1\n";
        assert!(read_trial_csv(arms.as_bytes(), None::<&[u8]>).is_err());
    }

    #[test]
    fn dump_has_one_row_per_observation() {
        let data = generate_trial(&find_builtin("Ia").unwrap(), 3, 0).unwrap();
        let mut buf = Vec::new();
        write_trial_dump(&[(0, &data)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let total: u32 = data.subtrials.iter().flat_map(|s| s.arms.iter()).map(|a| a.n).sum();
        assert_eq!(text.lines().count() as u32, total + 1);
    }
}

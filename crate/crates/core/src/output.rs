//! CSV and JSON emission. Floats are written with 17 significant digits so
//! every value parses back to the same `f64`; missing values are empty cells.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::ctbp_sim::ContTrajectory;
use crate::discrete_sim::Trajectory;
use crate::experiments::Table;

pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(String::new, float)
}

fn opt_int(x: Option<u64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => Box::new(BufWriter::new(File::create(p)?)),
        _ => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Write a CSV table; `None` or `-` means stdout.
pub fn write_csv(path: Option<&Path>, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(header)?;
    for row in rows {
        assert_eq!(row.len(), header.len(), "row width must match the header");
        w.write_record(row)?;
    }
    w.flush()
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> io::Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

pub fn table_csv(table: &Table) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = table.rows.iter().map(|r| r.iter().map(|&x| float(x)).collect()).collect();
    (table.columns.clone(), rows)
}

/// `replica, n, O_n, I1..IM, maxdeg, alive, survived`
pub fn discrete_header(m: usize) -> Vec<String> {
    let mut h = vec!["replica".to_string(), "n".into(), "O_n".into()];
    h.extend((1..=m).map(|k| format!("I{k}")));
    h.extend(["maxdeg".into(), "alive".into(), "survived".into()]);
    h
}

pub fn discrete_rows(replica: u64, t: &Trajectory) -> Vec<Vec<String>> {
    t.checkpoints
        .iter()
        .map(|c| {
            let mut row = vec![replica.to_string(), c.n.to_string(), opt_int(c.oldest)];
            row.extend(c.hubs.iter().map(|&h| opt_int(h)));
            row.extend([opt_int(c.max_degree), c.alive.to_string(), (t.survived as u8).to_string()]);
            row
        })
        .collect()
}

/// `replica, t, n, O_cont, I1_cont..IM_cont, Za, Zb, W_hat`
pub fn ctbp_header(m: usize) -> Vec<String> {
    let mut h = vec!["replica".to_string(), "t".into(), "n".into(), "O_cont".into()];
    h.extend((1..=m).map(|k| format!("I{k}_cont")));
    h.extend(["Za".into(), "Zb".into(), "W_hat".into()]);
    h
}

pub fn ctbp_rows(replica: u64, t: &ContTrajectory) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| {
            let mut row = vec![replica.to_string(), float(r.t), r.n.to_string(), opt_float(r.o_cont)];
            row.extend(r.i_cont.iter().map(|&x| opt_float(x)));
            row.extend([r.z_alive.to_string(), r.z_born.to_string(), opt_float(r.w_hat)]);
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, 2f64.powi(60) + 1.0, -7.25e17] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(float(f64::INFINITY), "inf");
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_csv(Some(&path), &discrete_header(2), &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "replica,n,O_n,I1,I2,maxdeg,alive,survived\n");
    }

    #[test]
    fn dead_tree_rows_leave_cells_empty() {
        use crate::discrete_sim::Checkpoint;
        let t = Trajectory {
            checkpoints: vec![Checkpoint {
                n: 2,
                oldest: None,
                oldest_rank: None,
                hubs: vec![None],
                hub_degrees: vec![None],
                max_degree: None,
                alive: 0,
            }],
            survived: false,
            final_n: 2,
            hub_change_steps: vec![Vec::new()],
        };
        assert_eq!(discrete_rows(4, &t), vec![vec!["4", "2", "", "", "", "0", "0"]]);
    }
}

//! Trajectory and table CSV files.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which parses
//! back to the same `f64`, so write → read → write is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use routhlab_core::ode::IntegratorStats;
use routhlab_core::Trajectory;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(cell: &str, row: usize, col: usize) -> CliResult<f64> {
    cell.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("row {row}, column {col}: '{cell}' is not a number")))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Config(format!("malformed CSV: {e}"))
}

/// A trajectory together with the name of its logged conserved quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub log_label: String,
    pub trajectory: Trajectory,
}

pub fn trajectory_header(n: usize, log_label: &str) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=n).map(|i| format!("v{i}")));
    h.push(log_label.to_string());
    h
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory, log_label: &str) -> CliResult<()> {
    traj.validate()?;
    let n = traj.dim();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n, log_label)).map_err(csv_err)?;
    for k in 0..traj.len() {
        let mut row = Vec::with_capacity(2 * n + 2);
        row.push(fmt_f64(traj.times[k]));
        row.extend(traj.positions[k].iter().map(|&c| fmt_f64(c)));
        row.extend(traj.velocities[k].iter().map(|&c| fmt_f64(c)));
        row.push(traj.energy_log.get(k).map(|&e| fmt_f64(e)).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> CliResult<TrajectoryTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let cols = header.len();
    if cols < 4 || cols % 2 != 0 || &header[0] != "t" {
        return Err(CliError::Config("trajectory header must be t,x1..xn,v1..vn,<log>".into()));
    }
    let n = (cols - 2) / 2;
    let expect = trajectory_header(n, &header[cols - 1]);
    if header.iter().ne(expect.iter().map(String::as_str)) {
        return Err(CliError::Config(format!("unexpected trajectory header {:?}", header)));
    }
    let mut traj = Trajectory {
        times: Vec::new(),
        positions: Vec::new(),
        velocities: Vec::new(),
        energy_log: Vec::new(),
        stats: IntegratorStats::default(),
    };
    let mut has_log = None;
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = k + 2;
        let num = |c: usize| parse_f64(&rec[c], row, c + 1);
        traj.times.push(num(0)?);
        traj.positions.push((1..=n).map(num).collect::<CliResult<_>>()?);
        traj.velocities.push((n + 1..=2 * n).map(num).collect::<CliResult<_>>()?);
        let present = !rec[cols - 1].is_empty();
        if *has_log.get_or_insert(present) != present {
            return Err(CliError::Config(format!("row {row}: log column is only partly filled")));
        }
        if present {
            traj.energy_log.push(num(cols - 1)?);
        }
    }
    traj.validate()?;
    Ok(TrajectoryTable {
        log_label: header[cols - 1].to_string(),
        trajectory: traj,
    })
}

pub fn write_trajectory_file(path: &Path, traj: &Trajectory, log_label: &str) -> CliResult<()> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_trajectory(std::io::BufWriter::new(f), traj, log_label)
}

pub fn read_trajectory_file(path: &Path) -> CliResult<TrajectoryTable> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_trajectory(std::io::BufReader::new(f))
}

/// One table cell: a number, an empty cell, or free text.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Empty,
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Empty => String::new(),
            Cell::Text(s) => s.clone(),
        }
    }
}

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<Cell>]) -> CliResult<()> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

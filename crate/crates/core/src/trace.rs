//! Per-event solver records and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row of the solver trace, written at every gap evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub screened: usize,
    pub elapsed_ns: u64,
}

pub fn write_trace_csv<W: Write>(rows: &[IterateTrace], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    // serde emits the header from the first record; write it explicitly so
    // that empty traces still carry one.
    out.write_record(["iter", "primal", "dual", "gap", "screened", "elapsed_ns"])?;
    for row in rows {
        out.write_record(&[
            row.iter.to_string(),
            format!("{:e}", row.primal),
            format!("{:e}", row.dual),
            format!("{:e}", row.gap),
            row.screened.to_string(),
            row.elapsed_ns.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: std::io::Read>(reader: R) -> Result<Vec<IterateTrace>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

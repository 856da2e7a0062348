use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Header of every metrics CSV.
pub const CSV_HEADER: &str = "iter,loss,grad_norm_sq,uplink_bits_cum,downlink_bits_cum,hvp_cum,wall_ms";

/// One row of the per-iteration record. Costs are cumulative up to and
/// including the round that produced `grad_norm_sq`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub iter: u64,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub uplink_bits_cum: u64,
    pub downlink_bits_cum: u64,
    pub hvp_cum: u64,
    pub wall_ms: f64,
}

pub fn write_csv<W: Write>(rows: &[RunMetrics], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{},{},{},{:.3}",
            r.iter, r.loss, r.grad_norm_sq, r.uplink_bits_cum, r.downlink_bits_cum, r.hvp_cum, r.wall_ms
        )?;
    }
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<RunMetrics>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            RunMetrics { iter: 0, loss: std::f64::consts::LN_2, grad_norm_sq: 1.5e-3, uplink_bits_cum: 10, downlink_bits_cum: 20, hvp_cum: 16, wall_ms: 0.0 },
            RunMetrics { iter: 1, loss: 0.5, grad_norm_sq: 3.25e-11, uplink_bits_cum: 30, downlink_bits_cum: 40, hvp_cum: 32, wall_ms: 1.5 },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}

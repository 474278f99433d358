//! Per-sweep trace as TSV. Missing values are written as `NA`; floats use
//! the shortest representation that round-trips.

use std::io::Write;

use bptd_core::sampler::TraceRecord;

use crate::error::Result;

pub const HEADER: &str = "model\titer\tloglik\tc_eff\tk_eff\tr_eff\tdelta\tzeta";

pub struct TraceWriter<W: Write> {
    out: W,
}

fn opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{HEADER}")?;
        Ok(Self { out })
    }

    pub fn record(&mut self, iter: usize, rec: &TraceRecord) -> Result<()> {
        let dims = rec.effective_dims;
        writeln!(
            self.out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            rec.model,
            iter,
            rec.log_likelihood,
            opt(dims.map(|d| d.0)),
            opt(dims.map(|d| d.1)),
            opt(dims.map(|d| d.2)),
            opt(rec.delta),
            opt(rec.zeta),
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bptd_core::ModelKind;

    #[test]
    fn rows_and_missing_values() {
        let mut t = TraceWriter::new(Vec::new()).unwrap();
        t.record(
            0,
            &TraceRecord {
                model: ModelKind::Bptd,
                log_likelihood: -12.5,
                effective_dims: Some((3, 2, 1)),
                delta: Some(0.25),
                zeta: Some(1.0),
            },
        )
        .unwrap();
        t.record(
            1,
            &TraceRecord {
                model: ModelKind::Gpirm,
                log_likelihood: -3.0,
                effective_dims: None,
                delta: None,
                zeta: None,
            },
        )
        .unwrap();
        let text = String::from_utf8(t.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines[1], "bptd\t0\t-12.5\t3\t2\t1\t0.25\t1");
        assert_eq!(lines[2], "gpirm\t1\t-3\tNA\tNA\tNA\tNA\tNA");
    }
}

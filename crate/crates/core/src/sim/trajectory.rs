use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Uniform-grid samples of named signals. Stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(columns: Vec<String>) -> Self {
        let data = vec![Vec::new(); columns.len()];
        Self {
            time: Vec::new(),
            columns,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn push(&mut self, t: f64, row: &[f64]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(CoreError::numeric(format!(
                "trajectory row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        if let Some(&last) = self.time.last() {
            if !(t > last) {
                return Err(CoreError::numeric(format!("time not increasing at t = {t}")));
            }
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::numeric(format!(
                "non-finite `{}` at t = {t:.4}",
                self.columns[i]
            )));
        }
        self.time.push(t);
        for (c, v) in self.data.iter_mut().zip(row) {
            c.push(*v);
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| CoreError::validation(format!("trajectory has no column `{name}`")))
    }

    /// Sample spacing, assuming a uniform grid.
    pub fn dt(&self) -> f64 {
        if self.time.len() < 2 {
            return 0.0;
        }
        (self.time[self.time.len() - 1] - self.time[0]) / (self.time.len() - 1) as f64
    }

    /// Group ids present, in column order.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.columns {
            if let Some(g) = c.strip_suffix(".dw_d") {
                if !out.iter().any(|o| o == g) {
                    out.push(g.to_string());
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| CoreError::numeric(format!("CSV write: {e}"));
        let mut head = vec!["t".to_string()];
        head.extend(self.columns.iter().cloned());
        wr.write_record(&head).map_err(err)?;
        let mut rec = Vec::with_capacity(head.len());
        for (k, t) in self.time.iter().enumerate() {
            rec.clear();
            rec.push(format!("{t:.3}"));
            rec.extend(self.data.iter().map(|c| format!("{:e}", c[k])));
            wr.write_record(&rec).map_err(err)?;
        }
        wr.flush().map_err(|e| CoreError::numeric(format!("CSV write: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let bad = |e: &dyn std::fmt::Display| CoreError::validation(format!("trajectory CSV: {e}"));
        let head = rd.headers().map_err(|e| bad(&e))?.clone();
        if head.get(0) != Some("t") {
            return Err(CoreError::validation("trajectory CSV must start with a `t` column"));
        }
        let mut tr = Trajectory::new(head.iter().skip(1).map(String::from).collect());
        let mut row = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| bad(&e))?;
            row.clear();
            let mut vals = rec.iter().map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(&format!("row {}: {e}", line + 2)))
            });
            let t = vals.next().ok_or_else(|| bad(&"empty row"))??;
            for v in vals {
                row.push(v?);
            }
            tr.push(t, &row).map_err(|e| bad(&format!("row {}: {e}", line + 2)))?;
        }
        Ok(tr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Trajectory::new(vec!["a.dw_d".into(), "b".into()]);
        t.push(0.0, &[0.0, 1.5]).unwrap();
        t.push(0.001, &[-1.25e-7, 2.0]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.groups(), vec!["a"]);
    }

    #[test]
    fn rejects_nan_and_backwards_time() {
        let mut t = Trajectory::new(vec!["x".into()]);
        t.push(0.0, &[0.0]).unwrap();
        assert!(t.push(0.0, &[1.0]).is_err());
        assert!(t.push(1.0, &[f64::NAN]).is_err());
    }
}

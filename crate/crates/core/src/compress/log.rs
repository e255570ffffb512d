use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub objective: f64,
    pub alive_count: usize,
    pub phase: String,
}

/// Per-epoch full-data objective through every pipeline phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    /// Appends one row per objective, numbering epochs on from the last row.
    pub fn extend(&mut self, objectives: Vec<f64>, alive_count: usize, phase: &str) {
        for objective in objectives {
            let epoch = self.rows.len() + 1;
            self.rows.push(LogRow { epoch, objective, alive_count, phase: phase.to_string() });
        }
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["epoch", "objective", "alive_count", "phase"])?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row/column labels: the five sensors, then "No Fault".
pub const CONDITION_LABELS: [&str; 6] = ["T_C", "P_C", "N", "T_T", "P_T", "No Fault"];
/// Index of the "No Fault" row/column.
pub const NO_FAULT: usize = 5;

/// Injected condition (rows) against isolated outcome (columns).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 6]; 6],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 6]; 6]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, condition: usize, outcome: usize) {
        self.counts[condition][outcome] += 1;
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..6).map(|r| self.row_sum(r)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for r in 0..6 {
            for c in 0..6 {
                self.counts[r][c] += other.counts[r][c];
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition");
        for l in CONDITION_LABELS {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (r, row) in self.counts.iter().enumerate() {
            out.push_str(CONDITION_LABELS[r]);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut m = ConfusionMatrix::default();
        let mut rows = 0;
        for (r, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidInput(format!("confusion matrix: {e}")))?;
            if r >= 6 || rec.len() != 7 {
                return Err(Error::InvalidInput("confusion matrix must be 6 rows of 6 counts".into()));
            }
            for c in 0..6 {
                m.counts[r][c] = rec[c + 1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad count {:?} in row {}", &rec[c + 1], r + 1)))?;
            }
            rows += 1;
        }
        if rows != 6 {
            return Err(Error::InvalidInput("confusion matrix must be 6 rows of 6 counts".into()));
        }
        Ok(m)
    }
}

/// Exact ratio of counts; undefined when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }

    pub fn is_defined(&self) -> bool {
        self.den > 0
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v:.4} ({}/{})", self.num, self.den),
            None => write!(f, "undefined (0 denominator)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    /// Share of no-fault runs that isolated a sensor.
    pub fpr: Ratio,
    pub acc: Ratio,
    /// Share of faulty runs isolated as a different sensor.
    pub ifdr: Ratio,
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let c = &cm.counts;
    let fpr = Ratio { num: (0..5).map(|j| c[NO_FAULT][j]).sum(), den: cm.row_sum(NO_FAULT) };
    let acc = Ratio { num: (0..6).map(|i| c[i][i]).sum(), den: cm.total() };
    let mut off = 0;
    for (i, row) in c.iter().enumerate().take(5) {
        for (j, v) in row.iter().enumerate().take(5) {
            if i != j {
                off += v;
            }
        }
    }
    let ifdr = Ratio { num: off, den: (0..5).map(|i| cm.row_sum(i)).sum() };
    Metrics { fpr, acc, ifdr }
}

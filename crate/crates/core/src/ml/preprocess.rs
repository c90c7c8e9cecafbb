//! Per-position median imputation followed by per-position min-max scaling.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    /// Median of the finite training values at each position.
    pub fill: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl Preprocessor {
    /// Fits on equal-length rows; non-finite entries are missing values.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().ok_or(Error::EmptyInput)?.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dataset(format!(
                "row of length {} among rows of length {d}",
                bad.len()
            )));
        }
        let fill: Vec<f64> = (0..d)
            .map(|j| {
                median(
                    rows.iter()
                        .map(|r| r[j])
                        .filter(|v| v.is_finite())
                        .collect(),
                )
            })
            .collect();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in rows {
            for j in 0..d {
                let v = if r[j].is_finite() { r[j] } else { fill[j] };
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { fill, min, max })
    }

    pub fn len(&self) -> usize {
        self.fill.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fill.is_empty()
    }

    pub fn impute(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row)?;
        Ok(row
            .iter()
            .zip(&self.fill)
            .map(|(&v, &f)| if v.is_finite() { v } else { f })
            .collect())
    }

    /// Imputes then scales; positions that were constant in training map to 0.
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        let x = self.impute(row)?;
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let w = self.max[j] - self.min[j];
                if w > 0.0 {
                    (v - self.min[j]) / w
                } else {
                    0.0
                }
            })
            .collect())
    }

    fn check(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: row.len(),
            });
        }
        Ok(())
    }
}

//! Fraction of configurations that are `(ε, δ)`-optimal on a runtime matrix.
//!
//! For each configuration and timeout probability `δ`, the cheapest cap `θ*`
//! with `Pr_j(R(i, j) > θ*) ≤ δ` is the empirical `(1 - δ)`-quantile of its
//! row. The smallest `ε` the configuration achieves is then
//! `max(0, R_θ*(i) / OPT - 1)`, where `OPT` is the best mean runtime.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runners::RuntimeMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaAnalysis {
    pub delta: f64,
    pub theta: Vec<f64>,
    pub eps_min: Vec<f64>,
    /// `θ*` was clamped to the never-exceed cap.
    pub censored: Vec<bool>,
}

impl DeltaAnalysis {
    /// Points `(ε, fraction of configurations with ε_min ≤ ε)` at every
    /// distinct `ε_min`.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let mut eps = self.eps_min.clone();
        eps.sort_by(f64::total_cmp);
        let n = eps.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &e) in eps.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == e => last.1 = frac,
                _ => out.push((e, frac)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsDeltaAnalysis {
    pub opt: f64,
    pub opt_config: usize,
    pub max_cap: Option<f64>,
    pub deltas: Vec<DeltaAnalysis>,
}

impl EpsDeltaAnalysis {
    /// Plot-ready CSV with columns `delta,epsilon,fraction`.
    pub fn write_cdf_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "epsilon", "fraction"]).map_err(csv_error)?;
        for d in &self.deltas {
            for (e, f) in d.cdf() {
                w.write_record([d.delta.to_string(), e.to_string(), f.to_string()])
                    .map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Smallest row value `θ` with `#{v > θ} / n ≤ δ`.
fn upper_quantile(sorted: &[f64], delta: f64) -> f64 {
    let n = sorted.len();
    let mut m = ((n as f64) * (1.0 - delta)).ceil().clamp(1.0, n as f64) as usize;
    // Correct rounding of the product in either direction.
    while m > 1 && (n - (m - 1)) as f64 / n as f64 <= delta {
        m -= 1;
    }
    while m < n && (n - m) as f64 / n as f64 > delta {
        m += 1;
    }
    // Ties: everything equal to v[m-1] is not above it.
    sorted[m - 1]
}

pub fn analyze_eps_delta(matrix: &RuntimeMatrix, deltas: &[f64], max_cap: Option<f64>) -> Result<EpsDeltaAnalysis> {
    for &d in deltas {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::invalid("delta", format!("must be in (0, 1) (got {d})")));
        }
    }
    if let Some(c) = max_cap {
        if !(c > 0.0) {
            return Err(Error::invalid("max_cap", format!("must be positive (got {c})")));
        }
    }
    let n = matrix.n_configs();
    let cap = max_cap.unwrap_or(f64::INFINITY);
    let means: Vec<f64> = (0..n).map(|i| matrix.capped_mean(i, cap)).collect();
    let mut opt_config = 0;
    for i in 1..n {
        if means[i] < means[opt_config] {
            opt_config = i;
        }
    }
    let opt = means[opt_config];
    let sorted_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = matrix.row(i).to_vec();
            row.sort_by(f64::total_cmp);
            row
        })
        .collect();
    let deltas = deltas
        .iter()
        .map(|&delta| {
            let mut theta = Vec::with_capacity(n);
            let mut eps_min = Vec::with_capacity(n);
            let mut censored = Vec::with_capacity(n);
            for (i, row) in sorted_rows.iter().enumerate() {
                let q = upper_quantile(row, delta);
                let th = q.min(cap);
                let r_theta = matrix.capped_mean(i, th);
                theta.push(th);
                eps_min.push((r_theta / opt - 1.0).max(0.0));
                censored.push(q > cap);
            }
            DeltaAnalysis {
                delta,
                theta,
                eps_min,
                censored,
            }
        })
        .collect();
    Ok(EpsDeltaAnalysis {
        opt,
        opt_config,
        max_cap,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> RuntimeMatrix {
        let n = rows.len();
        let w = rows[0].len();
        RuntimeMatrix::new(
            (0..n).map(|i| format!("c{i}")).collect(),
            (0..w).map(|j| format!("i{j}")).collect(),
            rows,
            0.001,
        )
        .unwrap()
    }

    #[test]
    fn quantile_definition() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(upper_quantile(&v, 0.1), 9.0);
        assert_eq!(upper_quantile(&v, 0.05), 10.0);
        assert_eq!(upper_quantile(&v, 0.5), 5.0);
        assert_eq!(upper_quantile(&v, 0.99), 1.0);
        assert_eq!(upper_quantile(&[3.0, 3.0, 3.0], 0.2), 3.0);
    }

    #[test]
    fn two_config_constant_matrix() {
        let a = analyze_eps_delta(&matrix(vec![vec![0.1], vec![1.0]]), &[0.1], None).unwrap();
        assert_eq!(a.deltas[0].eps_min, vec![0.0, 9.0]);
        assert_eq!(a.opt_config, 0);
    }

    #[test]
    fn identical_rows_are_all_optimal() {
        let row = vec![0.5, 1.5, 3.0, 0.2];
        let a = analyze_eps_delta(&matrix(vec![row; 5]), &[0.01, 0.25, 0.9], None).unwrap();
        for d in &a.deltas {
            assert!(d.eps_min.iter().all(|&e| e == 0.0));
            assert_eq!(d.cdf(), vec![(0.0, 1.0)]);
        }
    }

    #[test]
    fn max_cap_clamps_theta() {
        let a = analyze_eps_delta(&matrix(vec![vec![1.0, 1.0], vec![1.0, 50.0]]), &[0.1], Some(10.0)).unwrap();
        assert_eq!(a.deltas[0].theta, vec![1.0, 10.0]);
        assert_eq!(a.deltas[0].censored, vec![false, true]);
        assert_eq!(a.deltas[0].eps_min[1], 5.5 / 1.0 - 1.0);
    }

    #[test]
    fn delta_out_of_range() {
        assert!(analyze_eps_delta(&matrix(vec![vec![1.0]]), &[0.0], None).is_err());
        assert!(analyze_eps_delta(&matrix(vec![vec![1.0]]), &[1.0], None).is_err());
    }

    #[test]
    fn csv_output() {
        let a = analyze_eps_delta(&matrix(vec![vec![0.1], vec![1.0]]), &[0.1], None).unwrap();
        let mut out = Vec::new();
        a.write_cdf_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "delta,epsilon,fraction\n0.1,0,0.5\n0.1,9,1\n"
        );
    }
}

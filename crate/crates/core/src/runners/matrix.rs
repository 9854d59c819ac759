use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result, SourceError};

use super::{ChargeMode, InstanceDraw, RunResult, RuntimeSource};

/// Dense table of true runtimes `R(i, j)` in seconds, one row per
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeMatrix {
    config_ids: Vec<String>,
    instance_ids: Vec<String>,
    runtimes: Vec<f64>,
}

impl RuntimeMatrix {
    /// Builds a matrix from rows, checking shape and that every entry is a
    /// finite runtime no smaller than `kappa0`.
    pub fn new(config_ids: Vec<String>, instance_ids: Vec<String>, rows: Vec<Vec<f64>>, kappa0: f64) -> Result<Self> {
        if rows.len() != config_ids.len() {
            return Err(matrix_err(
                None,
                None,
                format!("{} rows for {} configurations", rows.len(), config_ids.len()),
            ));
        }
        if config_ids.is_empty() || instance_ids.is_empty() {
            return Err(matrix_err(None, None, "matrix has no configurations or instances"));
        }
        let width = instance_ids.len();
        let mut runtimes = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(matrix_err(
                    None,
                    None,
                    format!("row {i} has {} entries, expected {width}", row.len()),
                ));
            }
            for (j, &v) in row.iter().enumerate() {
                check_entry(v, kappa0).map_err(|m| matrix_err(None, Some(j + 2), format!("row {i}: {m}")))?;
            }
            runtimes.extend(row);
        }
        Ok(Self {
            config_ids,
            instance_ids,
            runtimes,
        })
    }

    /// Parses the CSV layout `config_id,<instance_id_1>,...` with one row per
    /// configuration and runtimes in decimal seconds.
    pub fn from_csv<R: Read>(reader: R, kappa0: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.len() < 2 {
            return Err(matrix_err(
                Some(1),
                None,
                "header needs config_id and at least one instance",
            ));
        }
        let instance_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut config_ids = Vec::new();
        let mut runtimes = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line());
            config_ids.push(record[0].to_owned());
            for (col, cell) in record.iter().enumerate().skip(1) {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| matrix_err(line, Some(col + 1), format!("non-numeric runtime {cell:?}")))?;
                check_entry(v, kappa0).map_err(|m| matrix_err(line, Some(col + 1), m))?;
                runtimes.push(v);
            }
        }
        if config_ids.is_empty() {
            return Err(matrix_err(None, None, "matrix has no configuration rows"));
        }
        Ok(Self {
            config_ids,
            instance_ids,
            runtimes,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["config_id".to_owned()];
        header.extend(self.instance_ids.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, id) in self.config_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_configs(&self) -> usize {
        self.config_ids.len()
    }

    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn config_ids(&self) -> &[String] {
        &self.config_ids
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn get(&self, config: usize, instance: usize) -> Option<f64> {
        if config < self.n_configs() && instance < self.n_instances() {
            Some(self.runtimes[config * self.n_instances() + instance])
        } else {
            None
        }
    }

    pub fn row(&self, config: usize) -> &[f64] {
        let w = self.n_instances();
        &self.runtimes[config * w..(config + 1) * w]
    }

    /// Mean runtime of a configuration over the instance pool.
    pub fn mean(&self, config: usize) -> f64 {
        let row = self.row(config);
        row.iter().sum::<f64>() / row.len() as f64
    }

    /// Mean of `min(R(i, j), cap)` over the pool.
    pub fn capped_mean(&self, config: usize, cap: f64) -> f64 {
        let row = self.row(config);
        row.iter().map(|v| v.min(cap)).sum::<f64>() / row.len() as f64
    }

    /// Copy with every runtime multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            config_ids: self.config_ids.clone(),
            instance_ids: self.instance_ids.clone(),
            runtimes: self.runtimes.iter().map(|v| v * factor).collect(),
        }
    }

    /// Copy restricted to the given rows, in the given order.
    pub fn select_rows(&self, configs: &[usize]) -> Self {
        Self {
            config_ids: configs.iter().map(|&i| self.config_ids[i].clone()).collect(),
            instance_ids: self.instance_ids.clone(),
            runtimes: configs.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }
}

/// Reads and validates a matrix CSV from disk.
pub fn load_matrix(path: impl AsRef<Path>, kappa0: f64) -> Result<RuntimeMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::at_path(path, e))?;
    RuntimeMatrix::from_csv(std::io::BufReader::new(file), kappa0)
}

fn check_entry(v: f64, kappa0: f64) -> Result<(), String> {
    if !v.is_finite() || v < 0.0 {
        Err(format!("runtime {v} is not a finite non-negative number"))
    } else if v < kappa0 {
        Err(format!("runtime {v} is below the minimum runtime kappa0 = {kappa0}"))
    } else {
        Ok(())
    }
}

fn matrix_err(line: Option<u64>, column: Option<usize>, message: impl Into<String>) -> Error {
    Error::Matrix {
        line,
        column,
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("ragged row: {len} fields, expected {expected_len}")
        }
        _ => e.to_string(),
    };
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        _ => matrix_err(line, None, message),
    }
}

/// One simulated run: `measured = min(R(i, j), cap)`.
///
/// Non-resuming runs pay `measured` in full. Resuming runs continue from
/// `prev_cap` and pay `min(R, cap) - min(R, prev_cap)`.
pub fn run_simulated(
    matrix: &RuntimeMatrix,
    config: usize,
    instance: usize,
    cap: f64,
    prev_cap: f64,
    mode: ChargeMode,
) -> Result<RunResult, SourceError> {
    if config >= matrix.n_configs() {
        return Err(SourceError::UnknownConfig(config));
    }
    let truth = matrix
        .get(config, instance)
        .ok_or(SourceError::UnknownInstance(instance))?;
    if !(cap > 0.0) || !(prev_cap == 0.0 || (prev_cap > 0.0 && prev_cap < cap)) {
        return Err(SourceError::InvalidCap { cap, prev_cap });
    }
    let measured = truth.min(cap);
    let charged = match mode {
        ChargeMode::NonResuming => measured,
        ChargeMode::Resuming => measured - truth.min(prev_cap),
    };
    Ok(RunResult {
        measured,
        completed: truth <= cap,
        charged,
        failed: false,
    })
}

/// Simulated backend answering runs from a [`RuntimeMatrix`].
#[derive(Debug, Clone)]
pub struct MatrixSource {
    matrix: Arc<RuntimeMatrix>,
    mode: ChargeMode,
}

impl MatrixSource {
    pub fn new(matrix: impl Into<Arc<RuntimeMatrix>>, mode: ChargeMode) -> Self {
        Self {
            matrix: matrix.into(),
            mode,
        }
    }

    pub fn matrix(&self) -> &RuntimeMatrix {
        &self.matrix
    }

    pub fn mode(&self) -> ChargeMode {
        self.mode
    }
}

impl RuntimeSource for MatrixSource {
    fn num_configs(&self) -> usize {
        self.matrix.n_configs()
    }

    fn num_instances(&self) -> usize {
        self.matrix.n_instances()
    }

    fn config_label(&self, config: usize) -> String {
        self.matrix
            .config_ids
            .get(config)
            .cloned()
            .unwrap_or_else(|| config.to_string())
    }

    fn is_simulated(&self) -> bool {
        true
    }

    fn run(
        &mut self,
        config: usize,
        instance: InstanceDraw,
        cap: f64,
        prev_cap: f64,
    ) -> Result<RunResult, SourceError> {
        run_simulated(&self.matrix, config, instance.index, cap, prev_cap, self.mode)
    }
}

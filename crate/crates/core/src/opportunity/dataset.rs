//! Opportunity dataset files.
//!
//! Tab-separated, one opportunity per row, header first:
//!
//! ```text
//! pvIndex  timeStepIndex  [f0 .. f175]  pValue_0 .. pValue_{n-1}  pValueSigma_0 .. pValueSigma_{n-1}
//! ```
//!
//! The feature columns are optional (all or none). Reals use the log
//! format's seven-significant-digit rule. Rows are ordered by step, then
//! pvIndex.

use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::Path;

use super::layout::FeatureLayout;
use super::SourceError;
use crate::domain::{AdOpportunity, FEATURE_DIM};
use crate::io::format::push_real;

pub fn dataset_header(num_agents: usize, with_features: bool) -> String {
    let mut cols = vec!["pvIndex".to_string(), "timeStepIndex".to_string()];
    if with_features {
        cols.extend((0..FEATURE_DIM).map(|i| format!("f{i}")));
    }
    cols.extend((0..num_agents).map(|i| format!("pValue_{i}")));
    cols.extend((0..num_agents).map(|i| format!("pValueSigma_{i}")));
    let mut s = cols.join("\t");
    s.push('\n');
    s
}

pub struct DatasetWriter<W: Write> {
    sink: W,
    num_agents: usize,
    with_features: bool,
    rows: u64,
    buf: String,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut sink: W, num_agents: usize, with_features: bool) -> std::io::Result<Self> {
        sink.write_all(dataset_header(num_agents, with_features).as_bytes())?;
        Ok(Self { sink, num_agents, with_features, rows: 0, buf: String::new() })
    }

    pub fn write_step(&mut self, batch: &[AdOpportunity]) -> std::io::Result<()> {
        use std::fmt::Write as _;
        self.buf.clear();
        for o in batch {
            assert_eq!(o.values.len(), self.num_agents, "opportunity {} has the wrong agent count", o.pv_index);
            write!(self.buf, "{}\t{}", o.pv_index, o.step_index).unwrap();
            if self.with_features {
                let f = o.features.as_ref().expect("dataset declared with features");
                for &x in f {
                    self.buf.push('\t');
                    push_real(&mut self.buf, x);
                }
            }
            for &x in o.values.iter().chain(&o.value_sigmas) {
                self.buf.push('\t');
                push_real(&mut self.buf, x);
            }
            self.buf.push('\n');
        }
        self.sink.write_all(self.buf.as_bytes())?;
        self.rows += batch.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<(u64, W)> {
        self.sink.flush()?;
        Ok((self.rows, self.sink))
    }
}

/// Streaming reader yielding one `Vec<AdOpportunity>` per step, `num_steps`
/// in total (steps without rows come back empty).
pub struct DatasetReader<R: BufRead> {
    lines: Lines<R>,
    columns: Vec<String>,
    num_agents: usize,
    with_features: bool,
    num_steps: usize,
    layout: FeatureLayout,
    row: usize,
    next_step: usize,
    pending: Option<AdOpportunity>,
    last_pv: Option<u64>,
    failed: bool,
}

impl<R: BufRead> std::fmt::Debug for DatasetReader<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DatasetReader")
            .field("num_agents", &self.num_agents)
            .field("with_features", &self.with_features)
            .field("num_steps", &self.num_steps)
            .field("row", &self.row)
            .finish()
    }
}

/// Opens a dataset file. An empty file, or one with a header and no rows,
/// is reported as [`SourceError::Empty`].
pub fn load_dataset(path: &Path, num_steps: usize) -> Result<DatasetReader<BufReader<File>>, SourceError> {
    let file = File::open(path)?;
    DatasetReader::new(BufReader::new(file), num_steps).map_err(|e| match e {
        SourceError::Empty { .. } => SourceError::Empty { path: path.display().to_string() },
        other => other,
    })
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(source: R, num_steps: usize) -> Result<Self, SourceError> {
        let mut lines = source.lines();
        let empty = || SourceError::Empty { path: "<stream>".into() };
        let header = lines.next().ok_or_else(empty)??;
        let columns: Vec<String> = header.trim_end_matches('\r').split('\t').map(str::to_string).collect();
        let (num_agents, with_features) = Self::parse_header(&columns)?;
        let mut reader = Self {
            lines,
            columns,
            num_agents,
            with_features,
            num_steps,
            layout: FeatureLayout::standard(),
            row: 1,
            next_step: 0,
            pending: None,
            last_pv: None,
            failed: false,
        };
        reader.pending = reader.read_row()?;
        if reader.pending.is_none() {
            return Err(empty());
        }
        Ok(reader)
    }

    fn parse_header(columns: &[String]) -> Result<(usize, bool), SourceError> {
        let bad = |why: &str| SourceError::Header(why.to_string());
        if columns.len() < 2 || columns[0] != "pvIndex" || columns[1] != "timeStepIndex" {
            return Err(bad("must start with pvIndex, timeStepIndex"));
        }
        let with_features = columns.get(2).is_some_and(|c| c == "f0");
        let value_cols = columns.len() - 2 - if with_features { FEATURE_DIM } else { 0 };
        if value_cols % 2 != 0 || value_cols == 0 {
            return Err(bad("expected matching pValue_i and pValueSigma_i columns"));
        }
        let n = value_cols / 2;
        let expected = dataset_header(n, with_features);
        if expected.trim_end() != columns.join("\t") {
            return Err(bad("column names do not follow the dataset layout"));
        }
        Ok((n, with_features))
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn has_features(&self) -> bool {
        self.with_features
    }

    fn read_row(&mut self) -> Result<Option<AdOpportunity>, SourceError> {
        let line = match self.lines.next() {
            None => return Ok(None),
            Some(l) => l?,
        };
        self.row += 1;
        let row = self.row;
        let cells: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if cells.len() != self.columns.len() {
            return Err(SourceError::ColumnCount { row, expected: self.columns.len(), found: cells.len() });
        }
        let parse_err = |i: usize| SourceError::Parse { row, column: self.columns[i].clone(), text: cells[i].to_string() };
        let pv_index: u64 = cells[0].parse().map_err(|_| parse_err(0))?;
        let step_index: usize = cells[1].parse().map_err(|_| parse_err(1))?;
        if step_index >= self.num_steps {
            return Err(SourceError::StepOutOfRange { row, step: step_index, num_steps: self.num_steps });
        }
        let mut reals = Vec::with_capacity(cells.len() - 2);
        for (i, cell) in cells.iter().enumerate().skip(2) {
            let x: f64 = cell.parse().map_err(|_| parse_err(i))?;
            if !x.is_finite() {
                return Err(parse_err(i));
            }
            reals.push(x);
        }
        let n = self.num_agents;
        let (features, rest) = if self.with_features {
            let (f, r) = reals.split_at(FEATURE_DIM);
            self.layout
                .validate(f)
                .map_err(|e| SourceError::Invariant { row, reason: e.to_string() })?;
            (Some(f.to_vec()), r)
        } else {
            (None, &reals[..])
        };
        let (values, sigmas) = rest.split_at(n);
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SourceError::Invariant { row, reason: format!("pValue {v} outside [0, 1]") });
        }
        if let Some(s) = sigmas.iter().find(|s| **s < 0.0) {
            return Err(SourceError::Invariant { row, reason: format!("pValueSigma {s} is negative") });
        }
        Ok(Some(AdOpportunity {
            pv_index,
            step_index,
            features,
            values: values.to_vec(),
            value_sigmas: sigmas.to_vec(),
        }))
    }

    fn next_step_batch(&mut self) -> Result<Option<Vec<AdOpportunity>>, SourceError> {
        if self.next_step >= self.num_steps {
            if let Some(extra) = &self.pending {
                return Err(SourceError::StepOrder { row: self.row, step: extra.step_index });
            }
            return Ok(None);
        }
        let step = self.next_step;
        let mut batch = Vec::new();
        while let Some(o) = self.pending.take() {
            if o.step_index < step || self.last_pv.is_some_and(|p| o.pv_index <= p) {
                return Err(SourceError::StepOrder { row: self.row, step: o.step_index });
            }
            if o.step_index > step {
                self.pending = Some(o);
                break;
            }
            self.last_pv = Some(o.pv_index);
            batch.push(o);
            self.pending = self.read_row()?;
        }
        self.next_step += 1;
        Ok(Some(batch))
    }
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<Vec<AdOpportunity>, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = self.next_step_batch().transpose();
        if matches!(out, Some(Err(_))) {
            self.failed = true;
        }
        out
    }
}

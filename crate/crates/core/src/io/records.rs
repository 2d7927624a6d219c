//! The 18-column impression log.
//!
//! One tab-separated row per (opportunity, advertiser), header first, rows
//! grouped by opportunity with bids descending. Only the `top_k` highest
//! bidders of each opportunity are written.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::format::{push_money, push_real, round_money, round_real};
use crate::auction::{rank_order, Bid};

pub const RECORD_HEADER: [&str; 18] = [
    "deliveryPeriodIndex",
    "advertiserIndex",
    "advertiserCategoryIndex",
    "budget",
    "CPAConstraint",
    "timeStepIndex",
    "remainingBudget",
    "pvIndex",
    "pValue",
    "pValueSigma",
    "bid",
    "xi",
    "adSlot",
    "cost",
    "isExposed",
    "conversionAction",
    "leastWinningCost",
    "isEnd",
];

/// Default number of bidders logged per opportunity.
pub const DEFAULT_TOP_K: usize = 48;

#[derive(Clone, Debug, PartialEq)]
pub struct ImpressionRecord {
    pub delivery_period_index: u32,
    pub advertiser_index: usize,
    pub advertiser_category_index: usize,
    pub budget: f64,
    pub cpa_constraint: f64,
    pub time_step_index: usize,
    /// Remaining budget at the start of the step.
    pub remaining_budget: f64,
    pub pv_index: u64,
    pub p_value: f64,
    pub p_value_sigma: f64,
    pub bid: f64,
    pub xi: bool,
    /// 0 when the advertiser did not win, otherwise the 1-based slot.
    pub ad_slot: usize,
    /// Slot price, owed only if the ad is exposed.
    pub cost: f64,
    pub is_exposed: bool,
    pub conversion_action: bool,
    pub least_winning_cost: f64,
    pub is_end: bool,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("unexpected header: {0}")]
    BadHeader(String),
    #[error("row {row}: expected 18 columns, found {found}")]
    ColumnCount { row: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {text:?}")]
    Parse { row: usize, column: &'static str, text: String },
    #[error("row {row}: {rule}")]
    Invariant { row: usize, rule: &'static str },
    #[error("row {row}: records are not ordered by (period, step, pvIndex, bid descending)")]
    Unsorted { row: usize },
    #[error("sink failed after {rows_written} rows: {source}")]
    Sink { rows_written: u64, source: io::Error },
}

impl ImpressionRecord {
    /// Checks the per-row rules of the log format.
    pub fn check(&self, num_slots: usize) -> Result<(), &'static str> {
        if self.ad_slot > num_slots {
            return Err("adSlot exceeds the number of slots");
        }
        if (self.ad_slot > 0) != self.xi {
            return Err("adSlot > 0 must coincide with xi = 1");
        }
        if self.conversion_action && !self.is_exposed {
            return Err("conversionAction = 1 requires isExposed = 1");
        }
        if self.is_exposed && !self.xi {
            return Err("isExposed = 1 requires xi = 1");
        }
        if self.cost > 0.0 && !self.xi {
            return Err("cost > 0 requires xi = 1");
        }
        let non_negative = [
            self.budget,
            self.remaining_budget,
            self.bid,
            self.cost,
            self.least_winning_cost,
            self.p_value_sigma,
        ];
        if non_negative.iter().any(|&x| !(x >= 0.0)) {
            return Err("monetary fields and pValueSigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.p_value) {
            return Err("pValue must lie in [0, 1]");
        }
        if !(self.cpa_constraint > 0.0) {
            return Err("CPAConstraint must be positive");
        }
        Ok(())
    }

    /// The record as it reads back after one serialization pass.
    pub fn rounded(&self) -> Self {
        Self {
            budget: round_money(self.budget),
            cpa_constraint: round_money(self.cpa_constraint),
            remaining_budget: round_money(self.remaining_budget),
            p_value: round_real(self.p_value),
            p_value_sigma: round_real(self.p_value_sigma),
            bid: round_real(self.bid),
            cost: round_real(self.cost),
            least_winning_cost: round_real(self.least_winning_cost),
            ..self.clone()
        }
    }

    pub fn push_tsv(&self, buf: &mut String) {
        use std::fmt::Write as _;
        let flag = |b: bool| if b { '1' } else { '0' };
        write!(
            buf,
            "{}\t{}\t{}\t",
            self.delivery_period_index, self.advertiser_index, self.advertiser_category_index
        )
        .unwrap();
        push_money(buf, self.budget);
        buf.push('\t');
        push_money(buf, self.cpa_constraint);
        write!(buf, "\t{}\t", self.time_step_index).unwrap();
        push_money(buf, self.remaining_budget);
        write!(buf, "\t{}\t", self.pv_index).unwrap();
        push_real(buf, self.p_value);
        buf.push('\t');
        push_real(buf, self.p_value_sigma);
        buf.push('\t');
        push_real(buf, self.bid);
        write!(buf, "\t{}\t{}\t", flag(self.xi), self.ad_slot).unwrap();
        push_real(buf, self.cost);
        write!(buf, "\t{}\t{}\t", flag(self.is_exposed), flag(self.conversion_action)).unwrap();
        push_real(buf, self.least_winning_cost);
        buf.push('\t');
        buf.push(flag(self.is_end));
        buf.push('\n');
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        self.push_tsv(&mut s);
        s
    }

    /// Parses one data row; `row` is the 1-based line number for messages.
    pub fn parse(line: &str, row: usize) -> Result<Self, RecordError> {
        let cells: Vec<&str> = line.trim_end_matches(['\n', '\r']).split('\t').collect();
        if cells.len() != 18 {
            return Err(RecordError::ColumnCount { row, found: cells.len() });
        }
        fn num<T: std::str::FromStr>(cells: &[&str], i: usize, row: usize) -> Result<T, RecordError> {
            cells[i].parse().map_err(|_| RecordError::Parse {
                row,
                column: RECORD_HEADER[i],
                text: cells[i].to_string(),
            })
        }
        fn real(cells: &[&str], i: usize, row: usize) -> Result<f64, RecordError> {
            let x: f64 = num(cells, i, row)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(RecordError::Parse { row, column: RECORD_HEADER[i], text: cells[i].to_string() })
            }
        }
        fn flag(cells: &[&str], i: usize, row: usize) -> Result<bool, RecordError> {
            match cells[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(RecordError::Parse { row, column: RECORD_HEADER[i], text: other.to_string() }),
            }
        }
        Ok(Self {
            delivery_period_index: num(&cells, 0, row)?,
            advertiser_index: num(&cells, 1, row)?,
            advertiser_category_index: num(&cells, 2, row)?,
            budget: real(&cells, 3, row)?,
            cpa_constraint: real(&cells, 4, row)?,
            time_step_index: num(&cells, 5, row)?,
            remaining_budget: real(&cells, 6, row)?,
            pv_index: num(&cells, 7, row)?,
            p_value: real(&cells, 8, row)?,
            p_value_sigma: real(&cells, 9, row)?,
            bid: real(&cells, 10, row)?,
            xi: flag(&cells, 11, row)?,
            ad_slot: num(&cells, 12, row)?,
            cost: real(&cells, 13, row)?,
            is_exposed: flag(&cells, 14, row)?,
            conversion_action: flag(&cells, 15, row)?,
            least_winning_cost: real(&cells, 16, row)?,
            is_end: flag(&cells, 17, row)?,
        })
    }
}

pub fn header_line() -> String {
    let mut s = RECORD_HEADER.join("\t");
    s.push('\n');
    s
}

/// Streams opportunities into a sink, keeping the `top_k` highest bids of each.
pub struct RecordWriter<W: Write> {
    sink: W,
    top_k: usize,
    rows: u64,
    buf: String,
    last_key: Option<(u32, usize, u64)>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut sink: W, top_k: usize) -> Result<Self, RecordError> {
        sink.write_all(header_line().as_bytes())
            .map_err(|source| RecordError::Sink { rows_written: 0, source })?;
        Ok(Self { sink, top_k, rows: 0, buf: String::new(), last_key: None })
    }

    /// Writes one opportunity's rows. The rows are ranked by bid (ties to the
    /// lower advertiser index) and truncated to `top_k`.
    pub fn write_opportunity(&mut self, rows: &mut Vec<ImpressionRecord>) -> Result<(), RecordError> {
        let Some(first) = rows.first() else { return Ok(()) };
        let key = (first.delivery_period_index, first.time_step_index, first.pv_index);
        if rows.iter().any(|r| (r.delivery_period_index, r.time_step_index, r.pv_index) != key)
            || self.last_key.is_some_and(|k| k >= key)
        {
            return Err(RecordError::Unsorted { row: self.rows as usize + 2 });
        }
        self.last_key = Some(key);
        rows.sort_by(|a, b| {
            rank_order(&Bid::new(a.advertiser_index, a.bid), &Bid::new(b.advertiser_index, b.bid))
        });
        rows.truncate(self.top_k);
        self.buf.clear();
        for r in rows.iter() {
            r.push_tsv(&mut self.buf);
        }
        self.sink
            .write_all(self.buf.as_bytes())
            .map_err(|source| RecordError::Sink { rows_written: self.rows, source })?;
        self.rows += rows.len() as u64;
        Ok(())
    }

    pub fn rows_written(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<(u64, W), RecordError> {
        self.sink.flush().map_err(|source| RecordError::Sink { rows_written: self.rows, source })?;
        Ok((self.rows, self.sink))
    }
}

/// Writes a pre-sorted record stream (period, step, pvIndex, bid descending),
/// keeping the first `top_k` rows of every opportunity. Returns the number of
/// data rows written.
pub fn write_records<I, W>(records: I, sink: W, top_k: usize) -> Result<u64, RecordError>
where
    I: IntoIterator<Item = ImpressionRecord>,
    W: Write,
{
    let mut writer = RecordWriter::new(sink, top_k)?;
    let mut group: Vec<ImpressionRecord> = Vec::new();
    let mut seen = 0usize;
    for rec in records {
        seen += 1;
        if let Some(prev) = group.last() {
            let same = (prev.delivery_period_index, prev.time_step_index, prev.pv_index)
                == (rec.delivery_period_index, rec.time_step_index, rec.pv_index);
            if same {
                if rec.bid > prev.bid {
                    return Err(RecordError::Unsorted { row: seen });
                }
            } else {
                writer.write_opportunity(&mut group)?;
                group.clear();
            }
        }
        group.push(rec);
    }
    writer.write_opportunity(&mut group)?;
    Ok(writer.finish()?.0)
}

/// Reads and validates a log written by [`write_records`].
pub struct RecordReader<R: BufRead> {
    lines: io::Lines<R>,
    num_slots: usize,
    row: usize,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(source: R, num_slots: usize) -> Result<Self, RecordError> {
        let mut lines = source.lines();
        let header = lines.next().ok_or(RecordError::MissingHeader)??;
        if header.trim_end_matches('\r') != RECORD_HEADER.join("\t") {
            return Err(RecordError::BadHeader(header));
        }
        Ok(Self { lines, num_slots, row: 1 })
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<ImpressionRecord, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.lines.next()? {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        self.row += 1;
        let row = self.row;
        Some(ImpressionRecord::parse(&line, row).and_then(|r| {
            r.check(self.num_slots).map_err(|rule| RecordError::Invariant { row, rule })?;
            Ok(r)
        }))
    }
}

/// Convenience wrapper: reads every record of `source`.
pub fn read_records<R: BufRead>(source: R, num_slots: usize) -> Result<Vec<ImpressionRecord>, RecordError> {
    RecordReader::new(source, num_slots)?.collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn reference_rows() -> Vec<ImpressionRecord> {
        #[rustfmt::skip]
        let raw = [
            (31, 2, 6500.00, 27.00, 5962.49, 0.0103542, 0.0021549, 0.2845, true, 1, 0.2702, true, false),
            (22, 6, 7000.00, 38.00, 5988.25, 0.0070297, 0.0005213, 0.2702, true, 2, 0.2154, true, true),
            (15, 7, 7000.00, 42.00, 6132.52, 0.0051392, 0.0004312, 0.2154, true, 3, 0.1832, false, false),
            (39, 3, 6000.00, 30.00, 5443.27, 0.0062134, 0.0007254, 0.1832, false, 0, 0.0, false, false),
            (43, 9, 7500.00, 25.00, 6421.81, 0.0045392, 0.0006215, 0.1099, false, 0, 0.0, false, false),
        ];
        raw.iter()
            .map(|&(adv, cat, budget, cpa, rem, pv, sig, bid, xi, slot, cost, exp, conv)| ImpressionRecord {
                delivery_period_index: 1,
                advertiser_index: adv,
                advertiser_category_index: cat,
                budget,
                cpa_constraint: cpa,
                time_step_index: 5,
                remaining_budget: rem,
                pv_index: 101000,
                p_value: pv,
                p_value_sigma: sig,
                bid,
                xi,
                ad_slot: slot,
                cost,
                is_exposed: exp,
                conversion_action: conv,
                least_winning_cost: 0.1832,
                is_end: false,
            })
            .collect()
    }

    const REFERENCE_TSV: &str = "\
1\t31\t2\t6500.00\t27.00\t5\t5962.49\t101000\t0.0103542\t0.0021549\t0.2845\t1\t1\t0.2702\t1\t0\t0.1832\t0
1\t22\t6\t7000.00\t38.00\t5\t5988.25\t101000\t0.0070297\t0.0005213\t0.2702\t1\t2\t0.2154\t1\t1\t0.1832\t0
1\t15\t7\t7000.00\t42.00\t5\t6132.52\t101000\t0.0051392\t0.0004312\t0.2154\t1\t3\t0.1832\t0\t0\t0.1832\t0
1\t39\t3\t6000.00\t30.00\t5\t5443.27\t101000\t0.0062134\t0.0007254\t0.1832\t0\t0\t0\t0\t0\t0.1832\t0
1\t43\t9\t7500.00\t25.00\t5\t6421.81\t101000\t0.0045392\t0.0006215\t0.1099\t0\t0\t0\t0\t0\t0.1832\t0
";

    #[test]
    fn reference_rows_emit_verbatim() {
        let mut out = Vec::new();
        let n = write_records(reference_rows(), &mut out, DEFAULT_TOP_K).unwrap();
        assert_eq!(n, 5);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, header_line() + REFERENCE_TSV);
        let back = read_records(text.as_bytes(), 3).unwrap();
        assert_eq!(back, reference_rows());
    }

    #[test]
    fn truncates_to_top_k() {
        let mut out = Vec::new();
        assert_eq!(write_records(reference_rows(), &mut out, 3).unwrap(), 3);
        let back = read_records(&out[..], 3).unwrap();
        let bids: Vec<f64> = back.iter().map(|r| r.bid).collect();
        assert_eq!(bids, vec![0.2845, 0.2702, 0.2154]);
    }

    #[test]
    fn empty_stream_is_header_only() {
        let mut out = Vec::new();
        assert_eq!(write_records(Vec::new(), &mut out, 48).unwrap(), 0);
        assert_eq!(String::from_utf8(out).unwrap(), header_line());
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let mut rows = reference_rows();
        rows.swap(0, 1);
        assert!(matches!(write_records(rows, Vec::new(), 48), Err(RecordError::Unsorted { .. })));
    }

    #[test]
    fn invariant_violations_are_named() {
        let mut bad = reference_rows()[3].clone();
        bad.conversion_action = true;
        let text = header_line() + &bad.to_tsv();
        let err = read_records(text.as_bytes(), 3).unwrap_err();
        assert!(matches!(err, RecordError::Invariant { row: 2, rule } if rule.contains("conversionAction")));

        let mut bad = reference_rows()[0].clone();
        bad.ad_slot = 4;
        let text = header_line() + &bad.to_tsv();
        let err = read_records(text.as_bytes(), 3).unwrap_err();
        assert!(matches!(err, RecordError::Invariant { row: 2, rule } if rule.contains("adSlot")));
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let text = header_line() + &REFERENCE_TSV.lines().next().unwrap().replace("0.2845", "abc") + "\n";
        let err = read_records(text.as_bytes(), 3).unwrap_err();
        assert!(matches!(err, RecordError::Parse { row: 2, column: "bid", .. }), "{err}");
    }

    struct FailingSink;
    impl Write for FailingSink {
        fn write(&mut self, _: &[u8]) -> io::Result<usize> {
            Err(io::Error::other("disk full"))
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn sink_failure_aborts() {
        assert!(matches!(write_records(reference_rows(), FailingSink, 48), Err(RecordError::Sink { .. })));
    }
}

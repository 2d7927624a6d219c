//! Log analysis: value statistics per (category, step), value density grids
//! and cross-category value correlations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::format::push_real;
use super::records::ImpressionRecord;

/// log10(pValue) range covered by the density grid; values outside are
/// clamped into the edge bins.
pub const DENSITY_LOG_RANGE: (f64, f64) = (-5.0, 0.0);
pub const DENSITY_BINS: usize = 10;
/// Pairs observed on fewer opportunities than this get no coefficient.
pub const MIN_PAIR_SAMPLES: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryStepStat {
    pub category: usize,
    pub step: usize,
    pub count: u64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityRow {
    pub category: usize,
    pub step: usize,
    /// Fraction of the cell's values per log-spaced bin.
    pub density: [f64; DENSITY_BINS],
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairStat {
    pub category_a: usize,
    pub category_b: usize,
    pub samples: u64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub correlation: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub records: u64,
    pub opportunities: u64,
    pub category_step: Vec<CategoryStepStat>,
    pub density: Vec<DensityRow>,
    pub pairs: Vec<PairStat>,
    /// Too little data for any correlation.
    pub degenerate: bool,
}

#[derive(Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    bins: [u64; DENSITY_BINS],
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        let (lo, hi) = DENSITY_LOG_RANGE;
        let pos = if x > 0.0 { (x.log10() - lo) / (hi - lo) } else { 0.0 };
        let bin = ((pos * DENSITY_BINS as f64).floor().max(0.0) as usize).min(DENSITY_BINS - 1);
        self.bins[bin] += 1;
    }
}

#[derive(Default)]
struct CoMoments {
    n: u64,
    mean_a: f64,
    mean_b: f64,
    m2_a: f64,
    m2_b: f64,
    c: f64,
}

impl CoMoments {
    fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        let n = self.n as f64;
        let da = a - self.mean_a;
        self.mean_a += da / n;
        let db = b - self.mean_b;
        self.mean_b += db / n;
        self.m2_a += da * (a - self.mean_a);
        self.m2_b += db * (b - self.mean_b);
        self.c += da * (b - self.mean_b);
    }

    fn correlation(&self) -> Option<f64> {
        if self.n < MIN_PAIR_SAMPLES || self.m2_a <= 0.0 || self.m2_b <= 0.0 {
            return None;
        }
        Some((self.c / (self.m2_a * self.m2_b).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Incremental summarizer; feed records grouped by opportunity.
#[derive(Default)]
pub struct Summarizer {
    records: u64,
    opportunities: u64,
    cells: BTreeMap<(usize, usize), Moments>,
    pairs: BTreeMap<(usize, usize), CoMoments>,
    current: Option<(u32, u64)>,
    // (category, value sum, count) for the opportunity being accumulated
    pending: BTreeMap<usize, (f64, u32)>,
}

impl Summarizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: &ImpressionRecord) {
        self.records += 1;
        let key = (r.delivery_period_index, r.pv_index);
        if self.current != Some(key) {
            self.flush_opportunity();
            self.current = Some(key);
            self.opportunities += 1;
        }
        self.cells.entry((r.advertiser_category_index, r.time_step_index)).or_default().push(r.p_value);
        let e = self.pending.entry(r.advertiser_category_index).or_insert((0.0, 0));
        e.0 += r.p_value;
        e.1 += 1;
    }

    fn flush_opportunity(&mut self) {
        let means: Vec<(usize, f64)> =
            self.pending.iter().map(|(&c, &(sum, n))| (c, sum / n as f64)).collect();
        for (i, &(ca, va)) in means.iter().enumerate() {
            for &(cb, vb) in &means[i + 1..] {
                self.pairs.entry((ca, cb)).or_default().push(va, vb);
            }
        }
        self.pending.clear();
    }

    pub fn finish(mut self) -> Summary {
        self.flush_opportunity();
        let category_step = self
            .cells
            .iter()
            .map(|(&(category, step), m)| CategoryStepStat {
                category,
                step,
                count: m.n,
                mean: m.mean,
                std: if m.n > 1 { (m.m2 / (m.n - 1) as f64).sqrt() } else { 0.0 },
            })
            .collect();
        let density = self
            .cells
            .iter()
            .map(|(&(category, step), m)| {
                let mut density = [0.0; DENSITY_BINS];
                for (d, &c) in density.iter_mut().zip(&m.bins) {
                    *d = c as f64 / m.n as f64;
                }
                DensityRow { category, step, density }
            })
            .collect();
        let pairs: Vec<PairStat> = self
            .pairs
            .iter()
            .filter_map(|(&(a, b), m)| {
                m.correlation().map(|correlation| PairStat {
                    category_a: a,
                    category_b: b,
                    samples: m.n,
                    mean_a: m.mean_a,
                    mean_b: m.mean_b,
                    correlation,
                })
            })
            .collect();
        Summary {
            records: self.records,
            opportunities: self.opportunities,
            degenerate: pairs.is_empty(),
            category_step,
            density,
            pairs,
        }
    }
}

pub fn summarize<'a, I>(records: I) -> Summary
where
    I: IntoIterator<Item = &'a ImpressionRecord>,
{
    let mut s = Summarizer::new();
    for r in records {
        s.push(r);
    }
    s.finish()
}

pub const CATEGORY_STEP_FILE: &str = "summary_category_step.tsv";
pub const DENSITY_FILE: &str = "summary_density.tsv";
pub const PAIRS_FILE: &str = "summary_category_pairs.tsv";

/// Writes the three summary tables into `dir`.
pub fn write_summary_tables(summary: &Summary, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut table = |name: &str, header: &str, body: &mut dyn FnMut(&mut String)| -> io::Result<()> {
        let path = dir.join(name);
        let mut out = BufWriter::new(File::create(&path)?);
        let mut buf = String::from(header);
        buf.push('\n');
        body(&mut buf);
        out.write_all(buf.as_bytes())?;
        out.flush()?;
        written.push(path);
        Ok(())
    };
    table(CATEGORY_STEP_FILE, "category\tstep\tcount\tmean\tstd", &mut |buf| {
        for s in &summary.category_step {
            buf.push_str(&format!("{}\t{}\t{}\t", s.category, s.step, s.count));
            push_real(buf, s.mean);
            buf.push('\t');
            push_real(buf, s.std);
            buf.push('\n');
        }
    })?;
    let bin_header: Vec<String> = (0..DENSITY_BINS).map(|b| format!("bin{b}")).collect();
    table(DENSITY_FILE, &format!("category\tstep\t{}", bin_header.join("\t")), &mut |buf| {
        for d in &summary.density {
            buf.push_str(&format!("{}\t{}", d.category, d.step));
            for &x in &d.density {
                buf.push('\t');
                push_real(buf, x);
            }
            buf.push('\n');
        }
    })?;
    table(PAIRS_FILE, "categoryA\tcategoryB\tsamples\tmeanA\tmeanB\tcorrelation", &mut |buf| {
        for p in &summary.pairs {
            buf.push_str(&format!("{}\t{}\t{}\t", p.category_a, p.category_b, p.samples));
            push_real(buf, p.mean_a);
            buf.push('\t');
            push_real(buf, p.mean_b);
            buf.push('\t');
            push_real(buf, p.correlation);
            buf.push('\n');
        }
    })?;
    Ok(written)
}

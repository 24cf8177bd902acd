//! CSV reports written to stdout and optionally to a file.

use std::io::Write;
use std::path::Path;

use abhsf::remap::IoStats;
use anyhow::Context;

/// Fixed column set of load and verify reports.
pub const BENCH_HEADER: [&str; 14] = [
    "scenario",
    "rank",
    "p",
    "q",
    "stored_mapping",
    "load_mapping",
    "path",
    "seconds",
    "file_opens",
    "bytes_read",
    "accepted",
    "rejected",
    "nnz",
    "status",
];

/// One rank, or the totals, of a load session.
#[derive(Debug, Clone, Default)]
pub struct BenchRecord {
    pub scenario: String,
    pub rank: String,
    pub p: usize,
    pub q: usize,
    pub stored_mapping: String,
    pub load_mapping: String,
    pub path: &'static str,
    pub seconds: f64,
    pub stats: IoStats,
    pub nnz: usize,
    pub status: &'static str,
}

impl BenchRecord {
    fn fields(&self) -> [String; 14] {
        [
            self.scenario.clone(),
            self.rank.clone(),
            self.p.to_string(),
            self.q.to_string(),
            self.stored_mapping.clone(),
            self.load_mapping.clone(),
            self.path.to_string(),
            format!("{:.6}", self.seconds),
            self.stats.file_opens.to_string(),
            self.stats.bytes_read.to_string(),
            self.stats.accepted.to_string(),
            self.stats.rejected.to_string(),
            self.nnz.to_string(),
            self.status.to_string(),
        ]
    }
}

pub fn emit(records: &[BenchRecord], csv_path: Option<&Path>) -> anyhow::Result<()> {
    let mut table = Table::new(&BENCH_HEADER);
    for r in records {
        table.row(r.fields());
    }
    table.emit(csv_path)
}

/// Header plus rows of string cells.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.rows.push(cells.into_iter().collect());
    }

    fn write_to<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn emit(&self, csv_path: Option<&Path>) -> anyhow::Result<()> {
        self.write_to(std::io::stdout().lock())
            .context("writing report to stdout")?;
        if let Some(path) = csv_path {
            let file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            self.write_to(file)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

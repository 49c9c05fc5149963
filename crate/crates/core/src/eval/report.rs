use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, Metric, MetricReport, PerQueryScore};
use crate::catalog::{Split, Tier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

/// Writes one row per cell (`metric,split,tier,k,mean,n`, blank mean for
/// empty cells) or the whole report as JSON.
pub fn emit_report(report: &MetricReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["metric", "split", "tier", "k", "mean", "n"])
                .map_err(|e| csv_err(path, e))?;
            for c in &report.cells {
                w.write_record([
                    c.metric.to_string(),
                    c.split.to_string(),
                    c.tier.to_string(),
                    c.k.to_string(),
                    c.mean.map(|m| m.to_string()).unwrap_or_default(),
                    c.n.to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ReportFormat::Json => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, report).map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<Cell>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut cells = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        if rec.len() != 6 {
            return Err(bad("column count"));
        }
        cells.push(Cell {
            metric: rec[0].parse::<Metric>().map_err(|_| bad("metric"))?,
            split: rec[1].parse::<Split>().map_err(|_| bad("split"))?,
            tier: rec[2].parse::<Tier>().map_err(|_| bad("tier"))?,
            k: rec[3].parse().map_err(|_| bad("k"))?,
            mean: match &rec[4] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("mean"))?),
            },
            n: rec[5].parse().map_err(|_| bad("n"))?,
        });
    }
    Ok(cells)
}

/// One evaluated stage of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub stage: String,
    pub report: MetricReport,
}

/// Rows `stage,split,tier,ndcg@5`; tier `avg` is the unweighted mean over
/// non-empty tiers.
pub fn emit_trajectory(points: &[TrajectoryPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["stage", "split", "tier", "ndcg@5"])
        .map_err(|e| csv_err(path, e))?;
    for p in points {
        let mut splits: Vec<Split> = p.report.cells.iter().map(|c| c.split).collect();
        splits.dedup();
        for split in splits {
            for tier in Tier::ALL {
                let mean = p.report.get(Metric::Ndcg, split, tier, 5).and_then(|c| c.mean);
                w.write_record([
                    p.stage.clone(),
                    split.to_string(),
                    tier.to_string(),
                    mean.map(|m| m.to_string()).unwrap_or_default(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
            let avg = p.report.tier_average(Metric::Ndcg, split, 5);
            w.write_record([
                p.stage.clone(),
                split.to_string(),
                "avg".to_string(),
                avg.map(|m| m.to_string()).unwrap_or_default(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// k-sweep table: one row per `metric@k`, one column per `split_tier`,
/// cells in metric-major, then ascending-k order.
pub fn emit_ksweep(report: &MetricReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut splits: Vec<Split> = report.cells.iter().map(|c| c.split).collect();
    splits.sort();
    splits.dedup();
    let mut ks: Vec<usize> = report.cells.iter().map(|c| c.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["metric".to_string()];
    for split in &splits {
        header.extend(Tier::ALL.iter().map(|t| format!("{split}_{t}")));
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for m in Metric::ALL {
        for &k in &ks {
            let mut row = vec![format!("{m}@{k}")];
            for &split in &splits {
                for tier in Tier::ALL {
                    let mean = report.get(m, split, tier, k).and_then(|c| c.mean);
                    row.push(mean.map(|x| x.to_string()).unwrap_or_default());
                }
            }
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-query scores as JSON lines.
pub fn write_scores(scores: &[PerQueryScore], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for s in scores {
        serde_json::to_writer(&mut w, s).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<PerQueryScore>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

//! Layer-by-series result tables in CSV, markdown and plot-data JSON.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::MeanStd;

const BASELINE_LABEL: &str = "verb-only";

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// One cell per grid layer; `None` where nothing was measured.
    pub values: Vec<Option<MeanStd>>,
}

/// Rows are series (models, constructions, training sizes), columns are
/// layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportGrid {
    pub row_header: String,
    pub layers: Vec<u16>,
    pub series: Vec<Series>,
    /// Verb-only baseline drawn as a constant row / horizontal line.
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    PlotJson,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::PlotJson => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "plot-data-json" | "json" => Ok(ReportFormat::PlotJson),
            other => Err(Error::InvalidInput(format!("unknown report format `{other}`"))),
        }
    }
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn render_csv(grid: &ReportGrid) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["series".to_string(), "statistic".to_string()];
    header.extend(grid.layers.iter().map(|l| l.to_string()));
    w.write_record(&header)?;
    for s in &grid.series {
        for (stat, pick) in [("mean", (|c: &MeanStd| c.mean) as fn(&MeanStd) -> f64), ("std", |c| c.std)] {
            let mut row = vec![s.label.clone(), stat.to_string()];
            row.extend(s.values.iter().map(|c| c.as_ref().map(|c| fmt4(pick(c))).unwrap_or_default()));
            w.write_record(&row)?;
        }
    }
    if let Some(b) = grid.baseline {
        let mut row = vec![BASELINE_LABEL.to_string(), "mean".to_string()];
        row.extend(grid.layers.iter().map(|_| fmt4(b)));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn render_markdown(grid: &ReportGrid) -> String {
    let mut out = String::new();
    let header = if grid.row_header.is_empty() { "Series" } else { &grid.row_header };
    let _ = write!(out, "| {header} |");
    for l in &grid.layers {
        let _ = write!(out, " {l} |");
    }
    out.push_str("\n|---|");
    for _ in &grid.layers {
        out.push_str("---:|");
    }
    out.push('\n');
    for s in &grid.series {
        let _ = write!(out, "| {} |", s.label);
        for c in &s.values {
            match c {
                Some(c) if c.std > 0.0 => {
                    let _ = write!(out, " {} ± {} |", fmt4(c.mean), fmt4(c.std));
                }
                Some(c) => {
                    let _ = write!(out, " {} |", fmt4(c.mean));
                }
                None => out.push_str("  |"),
            }
        }
        out.push('\n');
    }
    if let Some(b) = grid.baseline {
        let _ = write!(out, "| {BASELINE_LABEL} |");
        for _ in &grid.layers {
            let _ = write!(out, " {} |", fmt4(b));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct PlotSeries<'a> {
    label: &'a str,
    x: Vec<u16>,
    y: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Serialize)]
struct PlotData<'a> {
    series: Vec<PlotSeries<'a>>,
    baseline: Option<f64>,
}

fn render_plot_json(grid: &ReportGrid) -> Result<String> {
    let series = grid
        .series
        .iter()
        .map(|s| {
            let points: Vec<(u16, MeanStd)> = grid
                .layers
                .iter()
                .zip(&s.values)
                .filter_map(|(l, c)| c.map(|c| (*l, c)))
                .collect();
            PlotSeries {
                label: &s.label,
                x: points.iter().map(|p| p.0).collect(),
                y: points.iter().map(|p| p.1.mean).collect(),
                std: points.iter().map(|p| p.1.std).collect(),
            }
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&PlotData {
        series,
        baseline: grid.baseline,
    })?;
    text.push('\n');
    Ok(text)
}

pub fn render_report(grid: &ReportGrid, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => render_csv(grid),
        ReportFormat::Markdown => Ok(render_markdown(grid)),
        ReportFormat::PlotJson => render_plot_json(grid),
    }
}

pub fn emit_report(grid: &ReportGrid, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_report(grid, format)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads back a grid written by the CSV renderer.
pub fn parse_csv(text: &str) -> Result<ReportGrid> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() < 2 || &header[0] != "series" || &header[1] != "statistic" {
        return Err(Error::Parse {
            line: 1,
            message: "expected `series,statistic,<layers...>` header".into(),
        });
    }
    let layers = header
        .iter()
        .skip(2)
        .map(|h| {
            h.parse::<u16>().map_err(|_| Error::Parse {
                line: 1,
                message: format!("layer `{h}` is not an integer"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grid = ReportGrid {
        layers,
        ..ReportGrid::default()
    };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let cells = record
            .iter()
            .skip(2)
            .map(|v| {
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                        line,
                        message: format!("`{v}` is not a number"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let label = &record[0];
        match &record[1] {
            "mean" if label == BASELINE_LABEL => grid.baseline = cells.iter().flatten().next().copied(),
            "mean" => grid.series.push(Series {
                label: label.to_string(),
                values: cells
                    .into_iter()
                    .map(|m| m.map(|mean| MeanStd { mean, std: 0.0 }))
                    .collect(),
            }),
            "std" => {
                let series = grid
                    .series
                    .last_mut()
                    .filter(|s| s.label == label)
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("std row for `{label}` without a mean row"),
                    })?;
                for (cell, std) in series.values.iter_mut().zip(cells) {
                    if let (Some(c), Some(s)) = (cell.as_mut(), std) {
                        c.std = s;
                    }
                }
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown statistic `{other}`"),
                })
            }
        }
    }
    Ok(grid)
}

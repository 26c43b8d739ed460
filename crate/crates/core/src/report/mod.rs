//! File emitters: results and report CSVs, heatmap matrices, text tables,
//! SVG figures and the run manifest.

pub mod manifest;
pub mod svg;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::audit::{
    record_quadrant, scatter_points, BoundingBox, FairnessReport, HeatmapMatrix, Metric, OrdF64, Summary,
    SeriesSummary, Sweep,
};
use crate::audit::AuditRecord;
use crate::bias::BiasSetting;
use crate::error::{Error, Result};

pub use manifest::RunManifest;

pub const RESULTS_HEADER: [&str; 12] = [
    "run",
    "beta_pos",
    "beta_neg",
    "nu",
    "classifier",
    "lambda",
    "err",
    "spd",
    "eod",
    "n_train_effective",
    "degenerate",
    "seed",
];

pub const REPORT_HEADER: [&str; 18] = [
    "table",
    "classifier",
    "lambda",
    "nu",
    "cells",
    "excluded",
    "err_mean",
    "err_std",
    "spd_mean",
    "spd_std",
    "eod_mean",
    "eod_std",
    "bbox_area",
    "q1",
    "q2",
    "q3",
    "q4",
    "unclassified",
];

/// Six significant digits, shortest decimal form.
pub fn fmt6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    format!("{rounded}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

/// Value after a [`fmt6`] round trip.
pub fn round6(v: f64) -> f64 {
    fmt6(v).parse().unwrap_or(v)
}

/// The record as it reads back from a results CSV.
pub fn rounded(r: &AuditRecord) -> AuditRecord {
    AuditRecord {
        setting: BiasSetting {
            beta_pos: round6(r.setting.beta_pos),
            beta_neg: round6(r.setting.beta_neg),
            nu: round6(r.setting.nu),
        },
        lambda: r.lambda.map(round6),
        err: r.err.map(round6),
        spd: r.spd.map(round6),
        eod: r.eod.map(round6),
        ..r.clone()
    }
}

fn manifest_line(out: &mut impl Write, manifest_hash: Option<&str>) -> Result<()> {
    if let Some(h) = manifest_hash {
        writeln!(out, "# manifest={h}")?;
    }
    Ok(())
}

pub fn write_results_csv(path: &Path, records: &[AuditRecord], manifest_hash: Option<&str>) -> Result<()> {
    let mut f = File::create(path)?;
    manifest_line(&mut f, manifest_hash)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            fmt6(r.setting.beta_pos),
            fmt6(r.setting.beta_neg),
            fmt6(r.setting.nu),
            r.classifier.to_string(),
            fmt_opt(r.lambda),
            fmt_opt(r.err),
            fmt_opt(r.spd),
            fmt_opt(r.eod),
            r.n_train_effective.to_string(),
            u8::from(r.degenerate).to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The manifest hash from the first line of an emitted CSV, if present.
pub fn read_manifest_reference(path: &Path) -> Result<Option<String>> {
    let mut line = String::new();
    BufReader::new(File::open(path)?).read_line(&mut line)?;
    Ok(line.trim().strip_prefix("# manifest=").map(str::to_string))
}

/// Reads a results CSV. Label-bias cells are recognized by `nu > 0`, or
/// as the second identity-setting row of a `(run, classifier, lambda)`,
/// matching the order the audit writes.
pub fn read_results_csv(path: &Path) -> Result<Vec<AuditRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::InvalidDataset(format!(
            "{}: unexpected header {}",
            path.display(),
            header.join(",")
        )));
    }
    let bad = |row: usize, reason: String| Error::BadValue {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut seen_identity: BTreeSet<(usize, String, Option<OrdF64>)> = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| bad(i + 1, format!("`{}` in {} is not a number", &rec[j], RESULTS_HEADER[j])))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        let int = |j: usize| -> Result<u64> {
            rec[j].parse().map_err(|_| bad(i + 1, format!("`{}` in {} is not an integer", &rec[j], RESULTS_HEADER[j])))
        };
        let setting = BiasSetting::new(num(1)?, num(2)?, num(3)?)?;
        let classifier = rec[4].parse()?;
        let lambda = opt(5)?;
        let run = int(0)? as usize;
        let sweep = if setting.nu > 0.0
            || (setting.is_identity() && !seen_identity.insert((run, rec[4].to_string(), lambda.map(OrdF64))))
        {
            Sweep::Nu
        } else {
            Sweep::Beta
        };
        let degenerate = match &rec[10] {
            "0" => false,
            "1" => true,
            other => return Err(bad(i + 1, format!("degenerate flag `{other}` is not 0 or 1"))),
        };
        out.push(AuditRecord {
            run,
            sweep,
            setting,
            classifier,
            lambda,
            err: opt(6)?,
            spd: opt(7)?,
            eod: opt(8)?,
            n_train_effective: int(9)? as usize,
            degenerate,
            seed: int(11)?,
        });
    }
    Ok(out)
}

/// Quadrant counts `[q1, q2, q3, q4, unclassified]` of one series over the
/// under-representation cells, with EOD as the unfairness axis.
pub fn quadrant_counts(records: &[AuditRecord], s: &SeriesSummary, report: &FairnessReport) -> [usize; 5] {
    let mut counts = [0usize; 5];
    for r in records.iter().filter(|r| r.sweep == Sweep::Beta && r.key() == s.key) {
        match report.baseline.as_ref().and_then(|b| record_quadrant(r, b, Metric::Eod)) {
            Some(q) => counts[usize::from(q - 1)] += 1,
            None => counts[4] += 1,
        }
    }
    counts
}

/// Bounding box of the (EOD, err) scatter of one series.
pub fn series_bbox(records: &[AuditRecord], s: &SeriesSummary) -> Option<BoundingBox> {
    BoundingBox::of(scatter_points(records, s.key, Metric::Eod).into_iter().map(|(x, y, _)| (x, y)))
}

fn summary_cells(s: &SeriesSummary) -> Vec<String> {
    let mut v = vec![s.cells.to_string(), s.excluded.to_string()];
    for m in Metric::ALL {
        let sm: Option<&Summary> = s.metric(m);
        v.push(fmt_opt(sm.map(|x| x.mean)));
        v.push(fmt_opt(sm.map(|x| x.std)));
    }
    v
}

/// Header comment lines shared by the report CSV and text table.
pub fn report_header_lines(report: &FairnessReport) -> Vec<String> {
    let excluded: usize = report.beta.iter().map(|s| s.excluded).sum::<usize>()
        + report.nu.iter().map(|r| r.summary.excluded).sum::<usize>();
    let mut lines = vec![format!(
        "records={} degenerate={} excluded={}",
        report.total_records, report.degenerate_records, excluded
    )];
    match &report.baseline {
        Some(b) => lines.push(format!(
            "baseline base_lr err={} spd={} eod={}",
            fmt_opt(b.err),
            fmt_opt(b.spd),
            fmt_opt(b.eod)
        )),
        None => lines.push("baseline unavailable (no base_lr record on the unbiased cell)".into()),
    }
    lines
}

pub fn write_report_csv(
    path: &Path,
    report: &FairnessReport,
    records: &[AuditRecord],
    manifest_hash: Option<&str>,
) -> Result<()> {
    let mut f = File::create(path)?;
    manifest_line(&mut f, manifest_hash)?;
    for line in report_header_lines(report) {
        writeln!(f, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(REPORT_HEADER)?;
    for s in &report.beta {
        let mut row = vec![
            "beta".to_string(),
            s.key.classifier.to_string(),
            fmt_opt(s.key.lambda.map(|l| l.0)),
            String::new(),
        ];
        row.extend(summary_cells(s));
        row.push(fmt_opt(series_bbox(records, s).map(|b| b.area())));
        row.extend(quadrant_counts(records, s, report).iter().map(usize::to_string));
        w.write_record(&row)?;
    }
    for r in &report.nu {
        let mut row = vec![
            "nu".to_string(),
            r.key.classifier.to_string(),
            fmt_opt(r.key.lambda.map(|l| l.0)),
            fmt6(r.nu),
        ];
        row.extend(summary_cells(&r.summary));
        row.extend(std::iter::repeat_n(String::new(), 6));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn pm(s: Option<&Summary>) -> String {
    match s {
        Some(s) => format!("{:.4} ± {:.4}", s.mean, s.std),
        None => "-".into(),
    }
}

/// Human-readable rendering of the report.
pub fn render_text_table(report: &FairnessReport, records: &[AuditRecord]) -> String {
    let mut out = String::new();
    for line in report_header_lines(report) {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "\nUnder-representation grid (mean over runs per cell, then mean ± std over cells)");
    let _ = writeln!(
        out,
        "{:<26} {:>5} {:>4} {:>17} {:>17} {:>17} {:>9}  {}",
        "classifier", "cells", "excl", "err", "spd", "eod", "bbox", "q1/q2/q3/q4/?"
    );
    for s in &report.beta {
        let q = quadrant_counts(records, s, report);
        let bbox = series_bbox(records, s).map(|b| format!("{:.2e}", b.area())).unwrap_or("-".into());
        let _ = writeln!(
            out,
            "{:<26} {:>5} {:>4} {:>17} {:>17} {:>17} {:>9}  {}/{}/{}/{}/{}",
            s.key.to_string(),
            s.cells,
            s.excluded,
            pm(s.err.as_ref()),
            pm(s.spd.as_ref()),
            pm(s.eod.as_ref()),
            bbox,
            q[0],
            q[1],
            q[2],
            q[3],
            q[4]
        );
    }
    if !report.nu.is_empty() {
        let _ = writeln!(out, "\nLabel bias (mean ± std over runs)");
        let _ = writeln!(
            out,
            "{:<26} {:>5} {:>4} {:>17} {:>17} {:>17}",
            "classifier", "nu", "excl", "err", "spd", "eod"
        );
        for r in &report.nu {
            let _ = writeln!(
                out,
                "{:<26} {:>5} {:>4} {:>17} {:>17} {:>17}",
                r.key.to_string(),
                fmt6(r.nu),
                r.summary.excluded,
                pm(r.summary.err.as_ref()),
                pm(r.summary.spd.as_ref()),
                pm(r.summary.eod.as_ref())
            );
        }
    }
    out
}

/// File stem for a heatmap: `heatmap_{classifier}_{metric}`, with the
/// trade-off value inserted for swept classifiers.
pub fn heatmap_stem(m: &HeatmapMatrix) -> String {
    match m.lambda {
        Some(l) => format!("heatmap_{}_lambda{}_{}", m.classifier, fmt6(l), m.metric),
        None => format!("heatmap_{}_{}", m.classifier, m.metric),
    }
}

/// Rows are `beta_pos`, columns `beta_neg`; missing cells are empty.
pub fn write_heatmap_csv(path: &Path, m: &HeatmapMatrix, manifest_hash: Option<&str>) -> Result<()> {
    let mut f = File::create(path)?;
    manifest_line(&mut f, manifest_hash)?;
    let mut w = csv::Writer::from_writer(f);
    let mut header = vec!["beta_pos/beta_neg".to_string()];
    header.extend(m.beta_neg.iter().map(|&v| fmt6(v)));
    w.write_record(&header)?;
    for (i, row) in m.values.iter().enumerate() {
        let mut line = vec![fmt6(m.beta_pos[i])];
        line.extend(row.iter().map(|&v| fmt_opt(v)));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

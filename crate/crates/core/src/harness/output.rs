//! CSV tables with a metadata comment block, and a minimal SVG plot.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::config::Settings;
use crate::harness::experiment::{ExperimentKind, ExperimentReport, SweepRecord};

/// Number formatting shared by every CSV: shortest round-trip decimal,
/// `nan` for missing values.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

/// `# key = value` lines identifying the software, seed and configuration.
pub fn metadata(settings: &Settings, what: &str) -> String {
    format!(
        "# sparsenet {}\n# output = {what}\n# seed = {}\n# config_sha256 = {}\n",
        env!("CARGO_PKG_VERSION"),
        settings.model.seed,
        settings.hash()
    )
}

pub const TABLE_HEADER: &str = "param,N,epsilon,T,E,Eav,Epart,gap,coupling,stderr,replicas";

pub fn write_table<W: Write>(w: &mut W, settings: &Settings, records: &[SweepRecord]) -> io::Result<()> {
    w.write_all(metadata(settings, settings.experiment.kind.name()).as_bytes())?;
    writeln!(w, "{TABLE_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_num(r.param),
            r.n_particles,
            fmt_num(r.epsilon),
            fmt_num(r.horizon),
            fmt_num(r.e),
            fmt_num(r.eav),
            fmt_num(r.epart),
            fmt_num(r.gap),
            fmt_num(r.coupling),
            fmt_num(r.stderr),
            r.replicas
        )?;
    }
    Ok(())
}

pub fn write_slopes<W: Write>(w: &mut W, settings: &Settings, report: &ExperimentReport) -> io::Result<()> {
    w.write_all(metadata(settings, "slopes").as_bytes())?;
    writeln!(w, "quantity,slope,intercept,r2")?;
    for (name, f) in &report.slopes {
        writeln!(w, "{name},{},{},{}", fmt_num(f.slope), fmt_num(f.intercept), fmt_num(f.r2))?;
    }
    Ok(())
}

pub fn write_checks<W: Write>(w: &mut W, settings: &Settings, report: &ExperimentReport) -> io::Result<()> {
    w.write_all(metadata(settings, "checks").as_bytes())?;
    writeln!(w, "check,passed,detail")?;
    for c in &report.checks {
        writeln!(w, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"))?;
    }
    Ok(())
}

/// Log-log scatter with connecting lines, one series per `(label, points)`.
pub fn svg_loglog(title: &str, x_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>", w / 2.0);
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label} (log)</text>", w / 2.0, h - 10.0);
    if pts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let sx = |x: f64| pad + (x.log10() - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y.log10() - y0) / (y1 - y0) * (h - 2.0 * pad);
    let _ = writeln!(
        out,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (k, (label, s)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let good: Vec<&(f64, f64)> = s.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite()).collect();
        let line: Vec<String> = good.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>", line.join(" "));
        for (x, y) in good {
            let _ = writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>", sx(*x), sy(*y));
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{label}</text>",
            w - pad - 80.0,
            pad + 15.0 * (k as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

type Series = (&'static str, Vec<(f64, f64)>);

fn plot_series(report: &ExperimentReport) -> (&'static str, Vec<Series>) {
    let col = |f: fn(&SweepRecord) -> f64| report.records.iter().map(|r| (r.param, f(r))).collect::<Vec<_>>();
    match report.kind {
        ExperimentKind::EpsSweep => ("epsilon", vec![("gap", col(|r| r.gap))]),
        ExperimentKind::NSweep => ("N", vec![("Epart", col(|r| r.epart)), ("coupling", col(|r| r.coupling))]),
        ExperimentKind::UniformTime => ("T", vec![("E", col(|r| r.e)), ("coupling", col(|r| r.coupling))]),
        _ => ("N", vec![("E", col(|r| r.e)), ("Epart", col(|r| r.epart))]),
    }
}

/// Writes every output file of an experiment into `dir` and returns their
/// paths.
pub fn write_outputs(dir: &Path, settings: &Settings, report: &ExperimentReport, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put("config.txt".into(), settings.emit().into_bytes())?;
    let kind = settings.experiment.kind.name();
    if report.kind == ExperimentKind::Validate {
        let mut buf = Vec::new();
        write_checks(&mut buf, settings, report)?;
        put("checks.csv".into(), buf)?;
        return Ok(written);
    }
    let mut buf = Vec::new();
    write_table(&mut buf, settings, &report.records)?;
    put(format!("{kind}.csv"), buf)?;
    let mut buf = Vec::new();
    write_slopes(&mut buf, settings, report)?;
    put("slopes.csv".into(), buf)?;
    if svg {
        let (x_label, series) = plot_series(report);
        put(format!("{kind}.svg"), svg_loglog(kind, x_label, &series).into_bytes())?;
    }
    Ok(written)
}

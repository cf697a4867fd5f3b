//! CSV artifacts and SVG plot rendering.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so parsing
//! an emitted file gives back bit-identical values. Missing values (the
//! terminal input row, absent diagnostics) are empty fields.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::dynamics::Curve;
use crate::error::{Error, Result};
use crate::identification::DataBatches;
use crate::optimizer::{IterationRecord, SweepRow};

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field).map(Some)
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{field}` as a number")))
}

/// Header `t,x1..xn,u1..um`; the terminal row has empty input fields.
pub fn trajectory_to_csv(curve: &Curve) -> String {
    let n = curve.state_dim();
    let m = curve.input_dim();
    let mut out = String::from("t");
    for i in 1..=n {
        write!(out, ",x{i}").unwrap();
    }
    for i in 1..=m {
        write!(out, ",u{i}").unwrap();
    }
    out.push('\n');
    for (t, x) in curve.alpha.iter().enumerate() {
        write!(out, "{t}").unwrap();
        for v in x.iter() {
            write!(out, ",{v}").unwrap();
        }
        match curve.mu.get(t) {
            Some(u) => u.iter().for_each(|v| write!(out, ",{v}").unwrap()),
            None => (0..m).for_each(|_| out.push(',')),
        }
        out.push('\n');
    }
    out
}

/// Parses [`trajectory_to_csv`] output. The first state row is taken as `x_init`.
pub fn trajectory_from_csv(text: &str) -> Result<Curve> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let n = headers.iter().filter(|h| h.starts_with('x')).count();
    let m = headers.iter().filter(|h| h.starts_with('u')).count();
    if headers.len() != 1 + n + m || n == 0 {
        return Err(Error::Config("trajectory CSV header must be t,x1..xn,u1..um".into()));
    }
    let mut alpha = Vec::new();
    let mut mu = Vec::new();
    let mut terminal_seen = false;
    for record in reader.records() {
        let record = record?;
        if terminal_seen {
            return Err(Error::Config("trajectory CSV has rows after the terminal row".into()));
        }
        let x: Vec<f64> = (1..=n).map(|i| parse_f64(&record[i])).collect::<Result<_>>()?;
        alpha.push(DVector::from_vec(x));
        if (n + 1..=n + m).all(|i| record[i].is_empty()) {
            terminal_seen = true;
        } else {
            let u: Vec<f64> = (n + 1..=n + m).map(|i| parse_f64(&record[i])).collect::<Result<_>>()?;
            mu.push(DVector::from_vec(u));
        }
    }
    let x_init = alpha.first().cloned().ok_or_else(|| Error::Config("trajectory CSV is empty".into()))?;
    Curve::new(alpha, mu, x_init)
}

pub const LOG_HEADER: &str = "k,cost,dg,descent_norm,kappa_max,dist";

pub fn log_to_csv(records: &[IterationRecord]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            r.cost,
            r.dg,
            r.descent_norm,
            opt(r.kappa_max),
            opt(r.dist)
        )
        .unwrap();
    }
    out
}

pub fn log_from_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != LOG_HEADER {
        return Err(Error::Config(format!("iteration log header must be `{LOG_HEADER}`")));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(IterationRecord {
                k: rec[0].parse().map_err(|_| Error::Config(format!("bad iteration index `{}`", &rec[0])))?,
                cost: parse_f64(&rec[1])?,
                dg: parse_f64(&rec[2])?,
                descent_norm: parse_f64(&rec[3])?,
                kappa_max: parse_opt(&rec[4])?,
                dist: parse_opt(&rec[5])?,
            })
        })
        .collect()
}

/// Joint `|dg|` table for the two modes; rows run to the longer log.
pub fn compare_to_csv(model_based: &[IterationRecord], data_driven: &[IterationRecord]) -> String {
    let mut out = String::from("k,model_based_abs_dg,data_driven_abs_dg\n");
    for k in 0..model_based.len().max(data_driven.len()) {
        writeln!(
            out,
            "{k},{},{}",
            opt(model_based.get(k).map(|r| r.dg.abs())),
            opt(data_driven.get(k).map(|r| r.dg.abs()))
        )
        .unwrap();
    }
    out
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("j,delta_x,delta_u,distance,final_dg,error\n");
    for r in rows {
        let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.j,
            r.delta_x,
            r.delta_u,
            opt(r.distance),
            opt(r.final_dg),
            error
        )
        .unwrap();
    }
    out
}

/// Long-format dump: `t,column,dx1..dxn,du1..dum,dxp1..dxpn`.
pub fn batches_to_csv(batches: &DataBatches) -> String {
    let n = batches.dx.first().map_or(0, |m| m.nrows());
    let m = batches.du.first().map_or(0, |m| m.nrows());
    let mut out = String::from("t,column");
    (1..=n).for_each(|i| write!(out, ",dx{i}").unwrap());
    (1..=m).for_each(|i| write!(out, ",du{i}").unwrap());
    (1..=n).for_each(|i| write!(out, ",dxp{i}").unwrap());
    out.push_str(",kappa\n");
    for t in 0..batches.horizon() {
        for c in 0..batches.dx[t].ncols() {
            write!(out, "{t},{c}").unwrap();
            for mat in [&batches.dx[t], &batches.du[t], &batches.dx_next[t]] {
                for r in 0..mat.nrows() {
                    write!(out, ",{}", mat[(r, c)]).unwrap();
                }
            }
            writeln!(out, ",{}", batches.kappas[t]).unwrap();
        }
    }
    out
}

pub fn write_batches_csv(path: &Path, batches: &DataBatches) -> Result<()> {
    write_atomic(path, batches_to_csv(batches).as_bytes())
}

/// One polyline series of an SVG plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Self-contained SVG line chart. With `log_y`, non-positive values are dropped.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 60.0;
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(_, y)| !log_y || *y > 0.0)
                .map(|&(x, y)| (x, tf(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{y_label}</text>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 20.0,
        H / 2.0,
        H / 2.0,
    );
    let fmt_y = |y: f64| if log_y { format!("1e{y:.1}") } else { format!("{y:.3}") };
    writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", PAD - 4.0, sy(y0), fmt_y(y0)).unwrap();
    writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", PAD - 4.0, sy(y1) + 10.0, fmt_y(y1)).unwrap();
    writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x0:.3}</text>", sx(x0), H - PAD + 15.0).unwrap();
    writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x1:.3}</text>", sx(x1), H - PAD + 15.0).unwrap();
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            s.color,
            path.join(" ")
        )
        .unwrap();
        let ly = PAD + 15.0 * i as f64;
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{ly}\" fill=\"{}\">{}</text>",
            W - PAD - 120.0,
            s.color,
            s.label
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

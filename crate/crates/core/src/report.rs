//! Report artifacts: CSV dumps with a provenance comment header and a
//! dependency-free SVG chart of the TV curve against its envelope. All
//! writing happens from a single thread after reduction, so identical
//! inputs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::convergence::Thm2Row;
use crate::error::Result;
use crate::invariant::{ChainEstimate, EmpiricalMeasure};
use crate::recurrence::{BoundCheckReport, ExitRow};
use crate::sde::{HittingSample, Path};

/// FNV-1a 64-bit hash of the raw config text; stable across platforms.
pub fn fnv64(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Provenance line every output file starts with. The worker count is
/// deliberately absent: outputs must not depend on scheduling.
pub fn provenance(config_text: &str, seed: u64) -> String {
    format!(
        "# config_hash={:016x} seed={} version={}\n",
        fnv64(config_text),
        seed,
        env!("CARGO_PKG_VERSION")
    )
}

fn write_file(path: &FsPath, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn write_hitting_report(
    path: &FsPath,
    header: &str,
    reports: &[BoundCheckReport],
) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("check,x0,alpha,m,c,lhs_mean,lhs_ci95u,rhs,censored_frac,verdict\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.check,
            r.x0,
            r.params.alpha,
            r.params.m,
            r.params.c,
            r.lhs.mean,
            r.lhs.ci95_upper,
            r.rhs,
            r.lhs.censored_fraction,
            r.verdict.label()
        )
        .unwrap();
    }
    write_file(path, &out)
}

pub fn write_exit_table(path: &FsPath, header: &str, rows: &[ExitRow]) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("lower,p_exit_lower,ci_half,n_censored\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.lower, r.p_exit_lower, r.ci_half, r.n_censored).unwrap();
    }
    write_file(path, &out)
}

pub fn write_measure(
    path: &FsPath,
    header: &str,
    measure: &EmpiricalMeasure,
    analytic: &[f64],
) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("bin_lo,bin_hi,weight,analytic_weight\n");
    for (i, w) in measure.weights.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            measure.bin_edges[i],
            measure.bin_edges[i + 1],
            w,
            analytic.get(i).copied().unwrap_or(f64::NAN)
        )
        .unwrap();
    }
    write_file(path, &out)
}

pub fn write_chain(path: &FsPath, header: &str, chain: &ChainEstimate) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("n_low_low,n_low_high,n_high_low,n_high_high,nu_low,nu_high\n");
    writeln!(
        out,
        "{},{},{},{},{},{}",
        chain.counts[0][0],
        chain.counts[0][1],
        chain.counts[1][0],
        chain.counts[1][1],
        chain.nu[0],
        chain.nu[1]
    )
    .unwrap();
    write_file(path, &out)
}

/// One row per time of the convergence experiment; survival columns are NaN
/// when the coupling run was skipped.
pub fn write_curve(
    path: &FsPath,
    header: &str,
    rows: &[Thm2Row],
    survival: Option<&[f64]>,
) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("t,tv_binned,ci,rhs_bound,survival,two_survival\n");
    for (k, r) in rows.iter().enumerate() {
        let s = survival.and_then(|s| s.get(k)).copied().unwrap_or(f64::NAN);
        writeln!(out, "{},{},{},{},{},{}", r.t, r.tv, r.ci, r.rhs, s, 2.0 * s).unwrap();
    }
    write_file(path, &out)
}

pub fn write_path_dump(path: &FsPath, header: &str, p: &Path) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("t,x\n");
    for (t, x) in p.times.iter().zip(&p.states) {
        writeln!(out, "{},{}", t, x).unwrap();
    }
    write_file(path, &out)
}

pub fn write_hitting_dump(path: &FsPath, header: &str, samples: &[HittingSample]) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("replica,kind,value,censored,exit_state\n");
    for (i, s) in samples.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            i,
            s.kind.label(),
            s.value,
            s.censored,
            s.exit_state
        )
        .unwrap();
    }
    write_file(path, &out)
}

/// Self-contained SVG line chart of the TV curve against the envelope,
/// log-scaled on the vertical axis.
pub fn svg_tv_chart(rows: &[Thm2Row]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 60.0;
    const MR: f64 = 20.0;
    const MT: f64 = 20.0;
    const MB: f64 = 50.0;
    let t_max = rows.iter().map(|r| r.t).fold(1e-9, f64::max);
    let vals: Vec<f64> = rows
        .iter()
        .flat_map(|r| [r.tv.max(1e-6), r.rhs.max(1e-6)])
        .collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
    let hi = vals.iter().copied().fold(0.0f64, f64::max).log10().ceil().max(lo + 1.0);
    let sx = |t: f64| ML + (W - ML - MR) * t / t_max;
    let sy = |v: f64| {
        let lv = v.max(1e-6).log10();
        MT + (H - MT - MB) * (hi - lv) / (hi - lo)
    };
    let poly = |pick: &dyn Fn(&Thm2Row) -> f64| {
        rows.iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.t), sy(pick(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    )
    .unwrap();
    // gridlines at decades
    let mut d = lo as i64;
    while d <= hi as i64 {
        let y = sy(10f64.powi(d as i32));
        writeln!(
            s,
            "<line x1=\"{ML}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n\
             <text x=\"8\" y=\"{:.2}\" font-size=\"11\" font-family=\"sans-serif\">1e{d}</text>",
            W - MR,
            y + 4.0
        )
        .unwrap();
        d += 1;
    }
    writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" \
         stroke-dasharray=\"6 3\" points=\"{}\"/>",
        poly(&|r| r.rhs)
    )
    .unwrap();
    writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>",
        poly(&|r| r.tv)
    )
    .unwrap();
    for r in rows {
        writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>",
            sx(r.t),
            sy(r.tv)
        )
        .unwrap();
    }
    writeln!(
        s,
        "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\" font-family=\"sans-serif\" \
         text-anchor=\"middle\">t</text>\n\
         <text x=\"{:.0}\" y=\"16\" font-size=\"12\" font-family=\"sans-serif\" \
         fill=\"#1f77b4\">binned TV</text>\n\
         <text x=\"{:.0}\" y=\"16\" font-size=\"12\" font-family=\"sans-serif\" \
         fill=\"#d62728\">envelope</text>\n</svg>",
        (ML + W - MR) / 2.0,
        H - 16.0,
        ML + 10.0,
        ML + 110.0
    )
    .unwrap();
    s
}

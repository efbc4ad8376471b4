//! Per-position spectral error, subject-selection baselines and the
//! method comparison across upsampling factors.

use std::collections::BTreeMap;
use std::f64::consts::LN_10;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barycentric::{interpolate_to, BarycentricError, WeightMode};
use crate::cubesphere::{downsample_indices, downsample_with, to_magnitudes, CubeSphereError, DownsampleOffset};
use crate::data::{DataError, HrirSet};
use crate::neural::{upsample, Generator, NeuralError};
use crate::pipeline::{preprocess, PipelineError, PreprocessConfig};
use crate::projection::CubedSphereGrid;
use crate::spectra::{extract_magnitudes, MagnitudeHrtf, SpectraError, MAGNITUDE_FLOOR};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("selection needs at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("no trained generator for factor {0}")]
    MissingGenerator(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Barycentric(#[from] BarycentricError),
    #[error(transparent)]
    CubeSphere(#[from] CubeSphereError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub factor: usize,
    pub positions_in: usize,
    pub positions_out: usize,
    pub mean_lsd_db: f64,
    /// Population standard deviation of `per_position_lsd_db`.
    pub sd_lsd_db: f64,
    pub per_position_lsd_db: Vec<f64>,
    pub mean_ild_db: f64,
}

fn db(ratio: f64) -> f64 {
    20.0 / LN_10 * ratio.ln()
}

fn floor(v: f64) -> f64 {
    v.max(MAGNITUDE_FLOOR)
}

fn check_same_grid(a: &MagnitudeHrtf, b: &MagnitudeHrtf) -> Result<(), EvalError> {
    if a.len() != b.len() || a.bins_per_ear() != b.bins_per_ear() {
        return Err(EvalError::GridMismatch(format!(
            "{} positions × {} bins vs {} × {}",
            a.len(),
            a.bins_per_ear(),
            b.len(),
            b.bins_per_ear()
        )));
    }
    for (k, (p, q)) in a.positions().iter().zip(b.positions()).enumerate() {
        if p.angular_distance(q) > 1e-9 {
            return Err(EvalError::GridMismatch(format!("position {k} differs")));
        }
    }
    Ok(())
}

/// RMS dB log-ratio over both ears' bins at each position.
pub fn per_position_lsd(reference: &MagnitudeHrtf, candidate: &MagnitudeHrtf) -> Result<Vec<f64>, EvalError> {
    check_same_grid(reference, candidate)?;
    let bins = 2 * reference.bins_per_ear();
    Ok(reference
        .magnitudes()
        .chunks_exact(bins)
        .zip(candidate.magnitudes().chunks_exact(bins))
        .map(|(r, c)| {
            let sq: f64 = r.iter().zip(c).map(|(&a, &b)| db(floor(a) / floor(b)).powi(2)).sum();
            (sq / bins as f64).sqrt()
        })
        .collect())
}

/// Mean absolute interaural level difference error in dB.
pub fn mean_ild(reference: &MagnitudeHrtf, candidate: &MagnitudeHrtf) -> Result<f64, EvalError> {
    check_same_grid(reference, candidate)?;
    let bins = reference.bins_per_ear();
    let mut total = 0.0;
    for p in 0..reference.len() {
        let (rl, rr) = (reference.ear(p, 0), reference.ear(p, 1));
        let (cl, cr) = (candidate.ear(p, 0), candidate.ear(p, 1));
        for b in 0..bins {
            total += (db(floor(rl[b]) / floor(rr[b])) - db(floor(cl[b]) / floor(cr[b]))).abs();
        }
    }
    Ok(total / (reference.len() * bins) as f64)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores `candidate` against `reference` at every position. The method
/// label is empty and the factor 1; callers fill them in.
pub fn evaluate(reference: &MagnitudeHrtf, candidate: &MagnitudeHrtf) -> Result<EvalReport, EvalError> {
    let per = per_position_lsd(reference, candidate)?;
    let (mean, sd) = mean_sd(&per);
    Ok(EvalReport {
        method: String::new(),
        factor: 1,
        positions_in: candidate.len(),
        positions_out: reference.len(),
        mean_lsd_db: mean,
        sd_lsd_db: sd,
        per_position_lsd_db: per,
        mean_ild_db: mean_ild(reference, candidate)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Lowest average distance to the other subjects.
    Generic,
    /// Highest average distance to the other subjects.
    Unique,
}

/// Average mean-LSD of each subject against all others, keyed by subject id.
pub fn average_pairwise_lsd(subjects: &[MagnitudeHrtf]) -> Result<BTreeMap<String, f64>, EvalError> {
    if subjects.len() < 2 {
        return Err(EvalError::TooFewSubjects(subjects.len()));
    }
    let n = subjects.len();
    let mut sums = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = evaluate(&subjects[i], &subjects[j])?.mean_lsd_db;
            sums[i] += d;
            sums[j] += d;
        }
    }
    Ok(subjects
        .iter()
        .zip(sums)
        .map(|(s, sum)| (s.subject_id().to_string(), sum / (n - 1) as f64))
        .collect())
}

/// Subject id of the most generic or most unique training subject. Ties go
/// to the smallest id.
pub fn selection_baseline(subjects: &[MagnitudeHrtf], mode: SelectionMode) -> Result<String, EvalError> {
    let avg = average_pairwise_lsd(subjects)?;
    let mut best: Option<(&String, f64)> = None;
    for (id, &v) in &avg {
        let better = match (best, mode) {
            (None, _) => true,
            (Some((_, b)), SelectionMode::Generic) => v < b,
            (Some((_, b)), SelectionMode::Unique) => v > b,
        };
        if better {
            best = Some((id, v));
        }
    }
    Ok(best.expect("at least two subjects").0.clone())
}

/// An upsampling method for [`compare_methods`].
#[derive(Debug, Clone)]
pub enum Method {
    Barycentric(WeightMode),
    /// A fixed high-resolution HRTF from another subject, on the same grid.
    Selection { label: String, hrtf: MagnitudeHrtf },
    /// One trained generator per upsampling factor.
    Srgan(BTreeMap<usize, Generator>),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Barycentric(WeightMode::Spherical) => "barycentric".into(),
            Method::Barycentric(WeightMode::Planar) => "barycentric-planar".into(),
            Method::Selection { label, .. } => label.clone(),
            Method::Srgan(_) => "srgan".into(),
        }
    }
}

/// Builds the high-resolution target of `subject` on `grid_hi`, keeps every
/// `r`-th cell for each factor, runs each method from those cells and scores
/// it against the target. Rows are ordered by method, then factor.
pub fn compare_methods(
    subject: &HrirSet,
    grid_hi: &CubedSphereGrid,
    factors: &[usize],
    methods: &mut [Method],
    cfg: &PreprocessConfig,
) -> Result<Vec<EvalReport>, EvalError> {
    if methods.is_empty() {
        return Ok(Vec::new());
    }
    let target = preprocess(subject, grid_hi, cfg)?;
    let width = grid_hi.width();
    let mut rows = Vec::new();
    for method in methods.iter_mut() {
        let label = method.label();
        for &r in factors {
            let keep = downsample_indices(width, r, DownsampleOffset::Centered)?;
            let candidate = match method {
                Method::Barycentric(mode) => {
                    let low = target.grid_set.select(&keep)?;
                    let up = interpolate_to(&low, grid_hi.directions(), *mode)?.set;
                    extract_magnitudes(&up, cfg.nfft)?
                }
                Method::Selection { hrtf, .. } => hrtf.clone(),
                Method::Srgan(generators) => {
                    let gen = generators.get_mut(&r).ok_or(EvalError::MissingGenerator(r))?;
                    let low = downsample_with(&target.tensor, r, DownsampleOffset::Centered)?;
                    let high = upsample(&low, gen)?;
                    to_magnitudes(&high, grid_hi.directions(), subject.subject_id(), subject.sample_rate_hz())?
                }
            };
            let mut report = evaluate(&target.magnitudes, &candidate)?;
            report.method = label.clone();
            report.factor = r;
            report.positions_in = keep.len();
            rows.push(report);
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "method,r,mean_lsd_db,sd_lsd_db,mean_ild_db";

pub fn to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            r.method, r.factor, r.mean_lsd_db, r.sd_lsd_db, r.mean_ild_db
        );
    }
    out
}

/// Line chart of mean LSD against upsampling factor, one line per method.
pub fn to_svg(reports: &[EvalReport]) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut factors: Vec<usize> = reports.iter().map(|r| r.factor).collect();
    factors.sort_unstable();
    factors.dedup();
    let top = reports.iter().map(|r| r.mean_lsd_db).fold(0.0, f64::max).max(1e-9) * 1.1;
    let x = |f: usize| {
        let k = factors.iter().position(|&g| g == f).unwrap_or(0) as f64;
        m + k * (w - 2.0 * m) / (factors.len().max(2) - 1) as f64
    };
    let y = |v: f64| h - m - v / top * (h - 2.0 * m);
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">upsampling factor r</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">mean LSD (dB)</text>"#, h / 2.0, h / 2.0);
    for &f in &factors {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{f}</text>"#, x(f), h - m + 18.0);
    }
    for k in 0..=4 {
        let v = top * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, m - 6.0, y(v) + 4.0);
    }
    for (i, method) in methods.iter().enumerate() {
        let colour = colours[i % colours.len()];
        let mut rows: Vec<&EvalReport> = reports.iter().filter(|r| r.method == *method).collect();
        rows.sort_by_key(|r| r.factor);
        let points: Vec<String> = rows.iter().map(|r| format!("{:.1},{:.1}", x(r.factor), y(r.mean_lsd_db))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, points.join(" "));
        for r in &rows {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#, x(r.factor), y(r.mean_lsd_db));
        }
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}" fill="{colour}">{method}</text>"#, w - m - 120.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_report(reports: &[EvalReport], csv: &Path, svg: Option<&Path>) -> Result<(), EvalError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| EvalError::Io { path, source }
    };
    std::fs::write(csv, to_csv(reports)).map_err(io(csv))?;
    if let Some(svg) = svg {
        std::fs::write(svg, to_svg(reports)).map_err(io(svg))?;
    }
    Ok(())
}

//! End-to-end runs behind the command-line subcommands. Each run returns a
//! [`Report`] plus any side files (CSV grids, SVG heatmaps).

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{catalog_entries, CatalogEntry, RescalingSpec};
use crate::config::{ConfigError, Resolved};
use crate::expr::FamilyFile;
use crate::geometry::{DomainSpec, GeometryError};
use crate::marty::{marty_sweep, MartyError, QuotientOptions, SweepMode, SweepResult};
use crate::mu::{classify_point_cloud, mu_scan, verdict_for, LocusClass, MuError, MuReport, Verdict};
use crate::report::{grid_csv, write_atomic, Report};
use crate::rescale::{
    compare_limit, evaluate_rescaled, index_deviations, propose_rescaling, test_convergence,
    xi_grid, ConvergenceOutcome, ConvergenceVerdict, ProposeOptions, RescaleError,
};
use crate::svg;
use crate::targets::{TargetError, TargetMetric};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Marty(#[from] MartyError),
    #[error(transparent)]
    Mu(#[from] MuError),
    #[error(transparent)]
    Rescale(#[from] RescaleError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl PipelineError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        let usage = match self {
            PipelineError::Config(_) | PipelineError::Usage(_) => true,
            PipelineError::Io(_) => false,
            PipelineError::Marty(e) => marty_usage(e),
            PipelineError::Mu(MuError::Marty(e)) => marty_usage(e),
            PipelineError::Mu(e) => matches!(e, MuError::Invalid(_)),
            PipelineError::Rescale(e) => match e {
                RescaleError::Marty(e) => marty_usage(e),
                RescaleError::Geometry(_) => true,
                RescaleError::Parse { .. } | RescaleError::NotMuPoint { .. } | RescaleError::Invalid(_) => true,
                _ => false,
            },
            PipelineError::Geometry(_) => true,
        };
        if usage {
            2
        } else {
            3
        }
    }
}

fn marty_usage(e: &MartyError) -> bool {
    match e {
        MartyError::Invalid(_)
        | MartyError::Geometry(_)
        | MartyError::Target(TargetError::DimensionMismatch { .. }) => true,
        _ => false,
    }
}

/// A finished run: the report and the side files, keyed by file name.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub files: Vec<(String, String)>,
    /// Set when an expectation was not met (exit code 1).
    pub mismatch: bool,
}

impl RunOutput {
    /// Writes `report.json` and the side files into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let path = dir.join("report.json");
        write_atomic(&path, self.report.to_json().as_bytes())?;
        written.push(path);
        for (name, body) in &self.files {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Subject {
    name: Option<String>,
    family: FamilyFile,
    domain: DomainSpec,
    metric: TargetMetric,
}

fn subject(r: &Resolved) -> Subject {
    Subject {
        name: r.name.clone(),
        family: r.family.to_file(),
        domain: DomainSpec::from_domain(&r.domain),
        metric: r.metric,
    }
}

#[derive(Debug, Clone, Serialize)]
struct SweepOutput {
    subject: Subject,
    #[serde(flatten)]
    sweep: SweepResult,
}

pub fn run_marty_sweep(r: &Resolved, with_svg: bool) -> Result<RunOutput, PipelineError> {
    let grid = r.domain.sample_grid(r.scan.resolution, r.scan.margin)?;
    let opts = QuotientOptions {
        seed: r.seed,
        ..QuotientOptions::default()
    };
    let sweep = marty_sweep(&r.family, &r.domain, r.metric, &grid, &r.schedule, r.mode, &opts)?;
    let mut files = vec![("grid.csv".to_string(), grid_csv(&sweep.points, &sweep.schedule, &sweep.values))];
    if with_svg {
        let last: Vec<f64> = sweep
            .values
            .iter()
            .map(|v| v.last().copied().unwrap_or(f64::NAN).log10())
            .collect();
        let title = format!("log10 M_j(p), j = {}", sweep.schedule.last().unwrap_or(&0));
        files.push(("heatmap.svg".into(), svg::heatmap(&grid, &last, &[], &title)));
    }
    let out = SweepOutput {
        subject: subject(r),
        sweep,
    };
    Ok(RunOutput {
        report: Report::new("marty-sweep", r.seed, out),
        files,
        mismatch: false,
    })
}

/// Compact, serializable view of a μ₁ scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanSummary {
    pub schedule: Vec<u64>,
    pub grid_size: usize,
    pub flagged: Vec<Vec<Complex64>>,
    pub flagged_indices: Vec<usize>,
    pub straddling: Vec<usize>,
    pub widened_verdict: Option<Verdict>,
    /// Tail slope of `log M_j(p)` per grid point.
    pub slopes: Vec<f64>,
    pub classification: Option<LocusClass>,
    pub classification_error: Option<String>,
    pub polynomial: Option<String>,
    pub point_kind: Option<String>,
    pub verdict: Verdict,
    pub is_normal: Option<bool>,
    pub is_quasi_normal: Option<bool>,
    pub is_weakly_normal: Option<bool>,
}

impl ScanSummary {
    pub fn from_report(report: &MuReport) -> Self {
        let d = &report.detection;
        Self {
            schedule: d.schedule.clone(),
            grid_size: d.grid.len(),
            flagged: d.flagged_points(),
            flagged_indices: d.flagged.clone(),
            straddling: d.straddling.clone(),
            widened_verdict: report.widened_verdict,
            slopes: d.stats.iter().map(|s| s.slope).collect(),
            polynomial: polynomial_text(report.locus.as_ref()),
            point_kind: report.locus.as_ref().and_then(|l| l.point_kind()).map(String::from),
            classification: report.locus.clone(),
            classification_error: report.locus_error.clone(),
            verdict: report.verdict,
            is_normal: report.verdict.is_normal(),
            is_quasi_normal: report.verdict.is_quasi_normal(),
            is_weakly_normal: report.verdict.is_weakly_normal(),
        }
    }
}

fn polynomial_text(locus: Option<&LocusClass>) -> Option<String> {
    match locus {
        Some(LocusClass::AnalyticThin { polynomial, .. }) => Some(polynomial.to_string()),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
struct ScanOutput {
    subject: Subject,
    #[serde(flatten)]
    scan: ScanSummary,
}

pub fn scan(r: &Resolved) -> Result<MuReport, PipelineError> {
    let grid = r.domain.sample_grid(r.scan.resolution, r.scan.margin)?;
    Ok(mu_scan(
        &r.family,
        &r.domain,
        r.metric,
        &grid,
        &r.schedule,
        &r.detection,
        r.scan.max_degree,
    )?)
}

pub fn run_mu_scan(r: &Resolved, with_svg: bool) -> Result<RunOutput, PipelineError> {
    let report = scan(r)?;
    let d = &report.detection;
    let mut files = vec![("grid.csv".to_string(), grid_csv(&d.grid.points, &d.schedule, &d.values))];
    if with_svg {
        let slopes: Vec<f64> = d.stats.iter().map(|s| s.slope).collect();
        files.push((
            "heatmap.svg".into(),
            svg::heatmap(&d.grid, &slopes, &d.flagged, "growth slope; flagged points outlined"),
        ));
    }
    let out = ScanOutput {
        subject: subject(r),
        scan: ScanSummary::from_report(&report),
    };
    Ok(RunOutput {
        report: Report::new("mu-scan", r.seed, out),
        files,
        mismatch: false,
    })
}

#[derive(Debug, Clone, Serialize)]
struct ClassifyOutput {
    dim: usize,
    points: usize,
    max_degree: usize,
    classification: Option<LocusClass>,
    classification_error: Option<String>,
    polynomial: Option<String>,
    point_kind: Option<String>,
    verdict: Verdict,
}

/// Classifies a bare point cloud, as `classify-locus` does.
pub fn run_classify_points(
    points: &[Vec<Complex64>],
    dim: usize,
    max_degree: usize,
    seed: u64,
) -> Result<RunOutput, PipelineError> {
    if points.iter().any(|p| p.len() != dim) {
        return Err(PipelineError::Usage(format!("every point needs {dim} coordinates")));
    }
    let (locus, error) = match classify_point_cloud(points, dim, max_degree) {
        Ok(l) => (Some(l), None),
        Err(e @ MuError::TooFewPoints { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let out = ClassifyOutput {
        dim,
        points: points.len(),
        max_degree,
        polynomial: polynomial_text(locus.as_ref()),
        point_kind: locus.as_ref().and_then(|l| l.point_kind()).map(String::from),
        verdict: verdict_for(locus.as_ref(), false),
        classification: locus,
        classification_error: error,
    };
    Ok(RunOutput {
        report: Report::new("classify", seed, out),
        files: Vec::new(),
        mismatch: false,
    })
}

/// Everything measured by one rescaling run.
#[derive(Debug, Clone, Serialize)]
pub struct RescaleSummary {
    pub strategy: String,
    pub base_point: Vec<Complex64>,
    pub schedule: Vec<u64>,
    pub centers: Vec<Vec<Complex64>>,
    pub scales: Vec<f64>,
    pub derivative: Vec<f64>,
    pub grid_radius: f64,
    pub grid_resolution: usize,
    pub grid_points: usize,
    pub valid: Vec<bool>,
    pub outcome: String,
    pub nonconstant: Option<bool>,
    pub convergence: ConvergenceVerdict,
    pub reference: Option<Vec<String>>,
    /// Sup deviation of the limit from the reference.
    pub deviation: Option<f64>,
    /// Sup deviation of each `g_j` from the reference.
    pub index_deviations: Vec<Option<f64>>,
    #[serde(skip)]
    pub last_moduli: Vec<f64>,
}

pub fn rescale(r: &Resolved, spec: &RescalingSpec) -> Result<RescaleSummary, PipelineError> {
    let strategy = spec.strategy()?;
    let opts = ProposeOptions {
        detection: r.detection,
        override_check: r.override_check,
        ..ProposeOptions::default()
    };
    let seq = propose_rescaling(
        &r.family,
        &r.domain,
        r.metric,
        &spec.point,
        &strategy,
        &spec.schedule,
        &opts,
    )?;
    let samples = evaluate_rescaled(&r.family, &seq, spec.grid_radius, spec.grid_resolution)?;
    let verdict = test_convergence(&samples, r.metric, r.tol, r.escape_radius)?;
    let reference = spec.reference(r.family.ambient_dim())?;
    let (deviation, index_dev) = match &reference {
        Some(refs) => {
            let dev = match verdict.outcome {
                ConvergenceOutcome::ConvergesUniformly { .. } => {
                    Some(compare_limit(&samples, &verdict, refs, r.metric)?)
                }
                _ => None,
            };
            (dev, index_deviations(&samples, refs, r.metric)?)
        }
        None => (None, Vec::new()),
    };
    let nonconstant = match &verdict.outcome {
        ConvergenceOutcome::ConvergesUniformly { nonconstant, .. } => Some(*nonconstant),
        _ => None,
    };
    let last_moduli = samples
        .values
        .last()
        .map(|vs| {
            vs.iter()
                .map(|v| match v {
                    Some(v) => v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
                    None => f64::NAN,
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(RescaleSummary {
        strategy: seq.strategy,
        base_point: seq.base_point,
        schedule: seq.schedule,
        centers: seq.centers,
        scales: seq.scales,
        derivative: seq.derivative,
        grid_radius: spec.grid_radius,
        grid_resolution: spec.grid_resolution,
        grid_points: samples.points.len(),
        valid: (0..samples.schedule.len()).map(|t| samples.valid(t)).collect(),
        outcome: verdict.outcome.name().to_string(),
        nonconstant,
        convergence: verdict,
        reference: spec.limit.clone(),
        deviation,
        index_deviations: index_dev,
        last_moduli,
    })
}

#[derive(Debug, Clone, Serialize)]
struct RescaleOutput {
    subject: Subject,
    #[serde(flatten)]
    rescale: RescaleSummary,
}

pub fn run_rescale(r: &Resolved, with_svg: bool) -> Result<RunOutput, PipelineError> {
    let spec = r
        .rescaling
        .as_ref()
        .ok_or_else(|| PipelineError::Usage("no rescaling given (point, strategy, ...)".into()))?;
    let summary = rescale(r, spec)?;
    let mut files = Vec::new();
    if with_svg {
        let grid = xi_grid(r.family.ambient_dim(), spec.grid_radius, spec.grid_resolution);
        let title = format!("|g_j|, j = {}", summary.schedule.last().unwrap_or(&0));
        files.push(("heatmap.svg".into(), svg::heatmap(&grid, &summary.last_moduli, &[], &title)));
    }
    let out = RescaleOutput {
        subject: subject(r),
        rescale: summary,
    };
    Ok(RunOutput {
        report: Report::new("rescale", r.seed, out),
        files,
        mismatch: false,
    })
}

/// One comparison of a catalog check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub measured: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryResult {
    pub name: String,
    pub disputed: bool,
    pub expected_verdict: String,
    pub measured_verdict: Option<Verdict>,
    pub is_normal: Option<bool>,
    pub is_quasi_normal: Option<bool>,
    pub is_weakly_normal: Option<bool>,
    pub locus_class: Option<String>,
    pub polynomial: Option<String>,
    pub flagged: usize,
    pub grid_size: usize,
    pub rescale_outcome: Option<String>,
    pub rescale_deviation: Option<f64>,
    pub rescale_nonconstant: Option<bool>,
    pub checks: Vec<Check>,
    /// `None` for disputed entries, whose checks are recorded only.
    pub pass: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogSummary {
    pub entries: Vec<EntryResult>,
    pub passed: usize,
    pub failed: usize,
    pub disputed: usize,
    pub all_pass: bool,
}

fn check(name: &str, expected: impl ToString, measured: impl ToString, pass: bool) -> Check {
    Check {
        name: name.into(),
        expected: expected.to_string(),
        measured: measured.to_string(),
        pass,
    }
}

fn resolve_entry(e: &CatalogEntry, seed: u64) -> Result<Resolved, PipelineError> {
    let family = e.family().map_err(|err| PipelineError::Usage(err.to_string()))?;
    let defaults = crate::mu::DetectionOptions::default();
    Ok(Resolved {
        name: Some(e.name.clone()),
        domain: family.domain().clone(),
        family,
        metric: e.metric,
        mode: SweepMode::Derivative,
        scan: e.scan.clone(),
        schedule: e.scan.schedule(),
        detection: defaults,
        tol: crate::rescale::DEFAULT_TOL,
        escape_radius: crate::rescale::DEFAULT_ESCAPE_RADIUS,
        seed,
        rescaling: e.rescaling.clone(),
        override_check: false,
    })
}

/// Runs one entry end to end and compares against its expectations.
pub fn run_catalog_entry(e: &CatalogEntry, seed: u64) -> EntryResult {
    let mut out = EntryResult {
        name: e.name.clone(),
        disputed: e.disputed,
        expected_verdict: e.expected.verdict.to_string(),
        measured_verdict: None,
        is_normal: None,
        is_quasi_normal: None,
        is_weakly_normal: None,
        locus_class: None,
        polynomial: None,
        flagged: 0,
        grid_size: 0,
        rescale_outcome: None,
        rescale_deviation: None,
        rescale_nonconstant: None,
        checks: Vec::new(),
        pass: None,
        error: None,
    };
    if let Err(err) = fill_entry(e, seed, &mut out) {
        out.error = Some(err.to_string());
        out.checks.push(check("completed", "true", "false", false));
    }
    let ok = out.checks.iter().all(|c| c.pass);
    out.pass = if e.disputed { None } else { Some(ok) };
    out
}

fn fill_entry(e: &CatalogEntry, seed: u64, out: &mut EntryResult) -> Result<(), PipelineError> {
    let r = resolve_entry(e, seed)?;
    let report = scan(&r)?;
    let v = report.verdict;
    out.measured_verdict = Some(v);
    out.is_normal = v.is_normal();
    out.is_quasi_normal = v.is_quasi_normal();
    out.is_weakly_normal = v.is_weakly_normal();
    out.locus_class = report.locus.as_ref().map(|l| l.name().to_string());
    out.polynomial = polynomial_text(report.locus.as_ref());
    out.flagged = report.detection.flagged.len();
    out.grid_size = report.detection.grid.len();
    out.checks
        .push(check("verdict", e.expected.verdict, v, e.expected.verdict.matches(v)));
    if let Some(class) = &e.expected.locus_class {
        let measured = out.locus_class.clone().unwrap_or_else(|| "none".into());
        out.checks
            .push(check("locus_class", class, &measured, &measured == class));
    }
    if let Some(spec) = &e.rescaling {
        let s = rescale(&r, spec)?;
        out.rescale_outcome = Some(s.outcome.clone());
        out.rescale_deviation = s.deviation;
        out.rescale_nonconstant = s.nonconstant;
        out.checks.push(check(
            "rescale_outcome",
            &spec.expected_outcome,
            &s.outcome,
            s.outcome == spec.expected_outcome,
        ));
        if let Some(want) = spec.nonconstant {
            let got = s.nonconstant.map_or("none".to_string(), |b| b.to_string());
            out.checks
                .push(check("nonconstant", want, &got, s.nonconstant == Some(want)));
        }
        if let Some(tol) = spec.limit_tolerance {
            let got = s.deviation.map_or("none".to_string(), |d| format!("{d:.3e}"));
            out.checks.push(check(
                "limit_deviation",
                format!("< {tol:e}"),
                got,
                s.deviation.is_some_and(|d| d < tol),
            ));
        }
    }
    Ok(())
}

pub fn verify_entries(entries: &[CatalogEntry], seed: u64) -> CatalogSummary {
    let results: Vec<EntryResult> = entries.iter().map(|e| run_catalog_entry(e, seed)).collect();
    let passed = results.iter().filter(|r| r.pass == Some(true)).count();
    let failed = results.iter().filter(|r| r.pass == Some(false)).count();
    let disputed = results.iter().filter(|r| r.disputed).count();
    CatalogSummary {
        entries: results,
        passed,
        failed,
        disputed,
        all_pass: failed == 0,
    }
}

/// Runs the built-in catalog, or the entries given.
pub fn verify_catalog(entries: Option<Vec<CatalogEntry>>, seed: u64) -> RunOutput {
    let entries = entries.unwrap_or_else(catalog_entries);
    let summary = verify_entries(&entries, seed);
    let mismatch = !summary.all_pass;
    RunOutput {
        report: Report::new("verify-catalog", seed, summary),
        files: Vec::new(),
        mismatch,
    }
}

/// Reads every `*.toml` catalog entry in `dir`, sorted by file name.
pub fn load_catalog_dir(dir: &Path) -> Result<Vec<CatalogEntry>, PipelineError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            CatalogEntry::from_toml(&text)
                .map_err(|e| PipelineError::Usage(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Writes the built-in catalog as one TOML file per entry.
pub fn export_catalog(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    catalog_entries()
        .iter()
        .map(|e| {
            let path = dir.join(e.file_name());
            write_atomic(&path, e.to_toml().as_bytes())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::entry;

    #[test]
    fn exit_codes() {
        let e = PipelineError::Usage("x".into());
        assert_eq!(e.exit_code(), 2);
        let e = PipelineError::Rescale(RescaleError::InsufficientTail { valid: 1 });
        assert_eq!(e.exit_code(), 3);
        let e = PipelineError::Rescale(RescaleError::NotMuPoint { slope: 0.0, last: 1.0 });
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn z_over_n_entry_passes() {
        let r = run_catalog_entry(&entry("z_over_n").unwrap(), 0);
        assert_eq!(r.pass, Some(true), "{:?}", r.checks);
        assert_eq!(r.measured_verdict, Some(Verdict::Normal));
    }

    #[test]
    fn classify_points_cross() {
        let c = |re: f64| Complex64::new(re, 0.0);
        let mut pts = Vec::new();
        for k in 0..20 {
            let t = -1.0 + 0.1 * k as f64;
            pts.push(vec![c(t), c(0.0)]);
            pts.push(vec![Complex64::new(0.0, 0.0), Complex64::new(0.3, t)]);
        }
        let out = run_classify_points(&pts, 2, 3, 0).unwrap();
        assert_eq!(out.report.result["verdict"], "NotNormal_QuasiNormal");
        assert_eq!(out.report.result["classification"]["kind"], "AnalyticThin");
    }

    #[test]
    fn export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        export_catalog(dir.path()).unwrap();
        let mut loaded = load_catalog_dir(dir.path()).unwrap();
        let mut builtin = catalog_entries();
        loaded.sort_by(|a, b| a.name.cmp(&b.name));
        builtin.sort_by(|a, b| a.name.cmp(&b.name));
        assert_eq!(loaded, builtin);
    }
}

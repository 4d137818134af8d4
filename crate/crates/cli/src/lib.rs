//! Command implementations behind the `chargecorr` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chargecorr::analytic::DEFAULT_CUTOFF;
use chargecorr::sampler::{reduced_chi_square, shell_average, DEFAULT_RESOLUTION};
use chargecorr::scheme::R_MIN;
use chargecorr::{
    cumulative_charge, density, g_analytic, h_function, hypervolume_constant, scheme_g, second_moment, simulate,
    CorrelationModel, SimulationConfig, SingularityKind, Window,
};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub mod error;

pub use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "chargecorr", version, about = "Charge correlations of singularities in Gaussian random fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Singularity densities and the hypervolume constants.
    Densities(DensitiesArgs),
    /// Tabulate g, h and the cumulative charge over a grid of separations.
    Curve(CurveArgs),
    /// First and second screening sum rules.
    Sumrule(SumruleArgs),
    /// Monte Carlo estimate of the density, g and the cumulative charge.
    Simulate(SimulateArgs),
    /// Reproduce a previous run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensitiesArgs {
    #[arg(long, value_parser = parse_model)]
    pub model: String,
    #[arg(long)]
    pub json: bool,
        #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurveArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: String,
    #[arg(long, value_parser = parse_model)]
    pub model: String,
    #[arg(long, default_value_t = 0.05)]
    pub rmin: f64,
    #[arg(long, default_value_t = 20.0)]
    pub rmax: f64,
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    /// Add the generic-scheme column and a deviation summary.
    #[arg(long)]
    pub with_scheme: bool,
    #[arg(long)]
    pub json: bool,
        #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SumruleArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: String,
    #[arg(long, value_parser = parse_model)]
    pub model: String,
    /// Largest cutoff of the second-moment analysis.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub rmax: f64,
    #[arg(long)]
    pub json: bool,
    /// Not recorded in manifests: where a run writes does not change what it writes.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: String,
    #[arg(long, value_parser = parse_model)]
    pub model: String,
    #[arg(long, default_value_t = 200)]
    pub realizations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Side of the square window.
    #[arg(long, default_value_t = 40.0)]
    pub window: f64,
    #[arg(long, default_value_t = 8.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 256)]
    pub waves: usize,
    #[arg(long, default_value_t = 0.1)]
    pub binwidth: f64,
    /// Largest binned pair distance; defaults to the margin.
    #[arg(long)]
    pub rmax: Option<f64>,
    /// Scan grid spacing in units of wavelength / resolution.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: f64,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write; defaults to the files the manifest describes.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<String, String> {
    s.parse::<SingularityKind>().map(|k| k.to_string()).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> Result<String, String> {
    match s {
        "ring" | "gauss" => Ok(s.to_string()),
        _ => Err(format!("unknown model '{s}' (expected ring or gauss)")),
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub kind: Option<String>,
    pub model: String,
    pub n: Option<usize>,
    pub grid: Option<GridSpec>,
    pub seed: Option<u64>,
    pub waves: Option<usize>,
    pub window: Option<Window>,
    pub realizations: Option<usize>,
    pub bin_width: Option<f64>,
    pub tool_version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
    pub args: ManifestArgs,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub rmin: f64,
    pub rmax: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum ManifestArgs {
    Densities(DensitiesArgs),
    Curve(CurveArgs),
    Sumrule(SumruleArgs),
    Simulate(SimulateArgs),
}

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    fn new(args: ManifestArgs, timestamp: u64) -> Self {
        let mut m = RunManifest {
            command: String::new(),
            kind: None,
            model: String::new(),
            n: None,
            grid: None,
            seed: None,
            waves: None,
            window: None,
            realizations: None,
            bin_width: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            args: args.clone(),
        };
        let dimension = |k: &str| k.parse::<SingularityKind>().ok().map(|k| k.dimension());
        match args {
            ManifestArgs::Densities(a) => {
                m.command = "densities".into();
                m.model = a.model;
            }
            ManifestArgs::Curve(a) => {
                m.command = "curve".into();
                m.n = dimension(&a.kind);
                m.kind = Some(a.kind);
                m.model = a.model;
                m.grid = Some(GridSpec { rmin: a.rmin, rmax: a.rmax, points: a.points });
            }
            ManifestArgs::Sumrule(a) => {
                m.command = "sumrule".into();
                m.n = dimension(&a.kind);
                m.kind = Some(a.kind);
                m.model = a.model;
            }
            ManifestArgs::Simulate(a) => {
                m.command = "simulate".into();
                m.n = dimension(&a.kind);
                m.kind = Some(a.kind);
                m.model = a.model;
                m.seed = Some(a.seed);
                m.waves = Some(a.waves);
                m.window = Some(Window::square(a.window, a.margin));
                m.realizations = Some(a.realizations);
                m.bin_width = Some(a.binwidth);
            }
        }
        m
    }
}

fn model_of(name: &str) -> CliResult<CorrelationModel> {
    name.parse().map_err(|e: chargecorr::Error| CliError::Usage(e.to_string()))
}

fn kind_of(name: &str) -> CliResult<SingularityKind> {
    name.parse().map_err(|e: chargecorr::Error| CliError::Usage(e.to_string()))
}

/// CSV/JSON-safe float text: shortest representation that round-trips.
fn num(v: f64) -> String {
    format!("{v:e}")
}

fn json_string<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Write `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Primary output plus, for non-JSON files, a manifest next to it.
fn emit_with_manifest(out: Option<&Path>, text: &str, manifest: &RunManifest, embedded: bool) -> CliResult<()> {
    emit(out, text)?;
    if let (Some(path), false) = (out, embedded) {
        emit(Some(&sidecar(path)), &json_string(manifest)?)?;
    }
    Ok(())
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Rerun(a) => rerun(&a),
        Command::Densities(a) => densities(&a, now()),
        Command::Curve(a) => curve(&a, now()),
        Command::Sumrule(a) => sumrule(&a, now()),
        Command::Simulate(a) => simulate_cmd(&a, now()),
    }
}

fn rerun(a: &RerunArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.manifest).map_err(|e| CliError::Io(format!("{}: {e}", a.manifest.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid manifest: {e}")))?;
    let t = manifest.timestamp;
    let out = |json: bool| a.out.clone().or_else(|| original_output(&a.manifest, json));
    match manifest.args {
        ManifestArgs::Densities(mut d) => {
            d.out = out(d.json);
            densities(&d, t)
        }
        ManifestArgs::Curve(mut c) => {
            c.out = out(c.json);
            curve(&c, t)
        }
        ManifestArgs::Sumrule(mut s) => {
            s.out = out(s.json);
            sumrule(&s, t)
        }
        ManifestArgs::Simulate(mut s) => {
            s.out = match &a.out {
                Some(dir) => dir.clone(),
                None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            simulate_cmd(&s, t)
        }
    }
}

/// The file a manifest was written for: `<out>.manifest.json` sidecars name
/// their output, and JSON outputs carry their own manifest.
fn original_output(manifest: &Path, json: bool) -> Option<PathBuf> {
    let name = manifest.to_str()?;
    match name.strip_suffix(".manifest.json") {
        Some(out) => Some(PathBuf::from(out)),
        None if json => Some(manifest.to_path_buf()),
        None => None,
    }
}

#[derive(Serialize)]
struct DensityRow {
    kind: String,
    density: f64,
}

#[derive(Serialize)]
struct DensityReport {
    manifest: RunManifest,
    densities: Vec<DensityRow>,
    /// `V_n` for `n = 1, 2, 3`.
    hypervolume: Vec<f64>,
}

pub fn densities(a: &DensitiesArgs, timestamp: u64) -> CliResult<()> {
    let model = model_of(&a.model)?;
    let manifest = RunManifest::new(ManifestArgs::Densities(a.clone()), timestamp);
    let kinds = [
        SingularityKind::VectorZero(1),
        SingularityKind::VectorZero(2),
        SingularityKind::VectorZero(3),
        SingularityKind::Critical2D,
        SingularityKind::Umbilic2D,
    ];
    let mut rows = Vec::new();
    for kind in kinds {
        let d = density(kind, &model).map_err(|e| CliError::numerical("density", e))?;
        rows.push(DensityRow { kind: kind.to_string(), density: d });
    }
    let hyper: Vec<f64> = (1..=3).map(hypervolume_constant).collect();
    if a.json {
        let report = DensityReport { manifest, densities: rows, hypervolume: hyper };
        return emit(a.out.as_deref(), &json_string(&report)?);
    }
    let mut text = format!("# densities for model {}\n", a.model);
    for r in &rows {
        text += &format!("d_{:<10} {}\n", r.kind, num(r.density));
    }
    for (n, v) in hyper.iter().enumerate() {
        text += &format!("V_{:<10} {}\n", n + 1, num(*v));
    }
    emit_with_manifest(a.out.as_deref(), &text, &manifest, false)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub r: f64,
    pub g: f64,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_scheme: Option<Option<f64>>,
    #[serde(rename = "Q")]
    pub q: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Deviation {
    pub max_relative: f64,
    pub max_absolute: f64,
    pub rows_compared: usize,
}

#[derive(Serialize)]
struct CurveReport {
    manifest: RunManifest,
    rows: Vec<CurveRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme_deviation: Option<Deviation>,
}

/// The curve table and, with the scheme column, its deviation summary.
pub fn curve_table(a: &CurveArgs) -> CliResult<(Vec<CurveRow>, Option<Deviation>)> {
    let kind = kind_of(&a.kind)?;
    let model = model_of(&a.model)?;
    if !(a.rmin > 0.0 && a.rmin < a.rmax && a.rmax.is_finite()) {
        return Err(CliError::Usage(format!("need 0 < rmin < rmax, got rmin {} rmax {}", a.rmin, a.rmax)));
    }
    if a.points < 2 {
        return Err(CliError::Usage("need at least two points".into()));
    }
    let step = (a.rmax - a.rmin) / (a.points - 1) as f64;
    let mut rows = Vec::with_capacity(a.points);
    let mut nulls = 0;
    let mut dev = Deviation { max_relative: 0.0, max_absolute: 0.0, rows_compared: 0 };
    for i in 0..a.points {
        let r = if i + 1 == a.points { a.rmax } else { a.rmin + step * i as f64 };
        let at = |op: &'static str| move |e| CliError::numerical(format!("{op} at r = {r}"), e);
        let g = g_analytic(kind, &model, r).map_err(at("g_analytic"))?;
        let h = h_function(kind, &model, r).map_err(at("h_function"))?;
        let q = cumulative_charge(kind, &model, r).map_err(at("cumulative_charge"))?;
        let g_scheme = if !a.with_scheme {
            None
        } else if r <= R_MIN {
            nulls += 1;
            Some(None)
        } else {
            let s = scheme_g(kind, &model, r).map_err(at("scheme_g"))?;
            let diff = (s - g).abs();
            dev.max_absolute = dev.max_absolute.max(diff);
            dev.max_relative = dev.max_relative.max(diff / g.abs().max(f64::MIN_POSITIVE));
            dev.rows_compared += 1;
            Some(Some(s))
        };
        rows.push(CurveRow { r, g, h, g_scheme, q });
    }
    if nulls > 0 {
        eprintln!("warning: scheme_g is undefined for r <= {R_MIN}; {nulls} row(s) left empty");
    }
    Ok((rows, a.with_scheme.then_some(dev)))
}

pub fn curve(a: &CurveArgs, timestamp: u64) -> CliResult<()> {
    let (rows, dev) = curve_table(a)?;
    let manifest = RunManifest::new(ManifestArgs::Curve(a.clone()), timestamp);
    if let Some(d) = dev {
        eprintln!(
            "scheme vs closed form: max relative deviation {} (max absolute {}) over {} rows",
            num(d.max_relative),
            num(d.max_absolute),
            d.rows_compared
        );
    }
    if a.json {
        let report = CurveReport { manifest, rows, scheme_deviation: dev };
        return emit(a.out.as_deref(), &json_string(&report)?);
    }
    let mut header = vec!["r", "g", "h"];
    if a.with_scheme {
        header.push("g_scheme");
    }
    header.push("Q");
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut v = vec![num(row.r), num(row.g), num(row.h)];
            if let Some(s) = row.g_scheme {
                v.push(s.map(num).unwrap_or_default());
            }
            v.push(num(row.q));
            v
        })
        .collect();
    emit_with_manifest(a.out.as_deref(), &csv_text(&header, &body)?, &manifest, false)
}

#[derive(Serialize)]
struct SumruleOutput {
    manifest: RunManifest,
    report: chargecorr::SumRuleReport,
}

pub fn sumrule(a: &SumruleArgs, timestamp: u64) -> CliResult<()> {
    let kind = kind_of(&a.kind)?;
    let model = model_of(&a.model)?;
    let report = second_moment(kind, &model, a.rmax).map_err(|e| CliError::numerical("second_moment", e))?;
    let manifest = RunManifest::new(ManifestArgs::Sumrule(a.clone()), timestamp);
    if a.json {
        return emit(a.out.as_deref(), &json_string(&SumruleOutput { manifest, report })?);
    }
    let f = &report.first_moment;
    let mut text = format!("# sum rules for {} / {}\n", a.kind, a.model);
    text += &format!("first moment (closed form)  {}\n", num(f.closed_form));
    text += &format!("first moment (quadrature)   {} (cutoff {}, tail {})\n", num(f.quadrature), num(f.cutoff), num(f.tail_correction));
    text += &format!("second moment verdict       {:?}\n", report.verdict);
    if let Some(p) = report.growth_exponent {
        text += &format!("growth exponent             {}\n", num(p));
    }
    let fit = report.log_fit;
    text += &format!(
        "log fit                     intercept {} slope {} +- {} ({:.1} sigma)\n",
        num(fit.intercept),
        num(fit.slope),
        num(fit.slope_stderr),
        fit.significance()
    );
    emit_with_manifest(a.out.as_deref(), &text, &manifest, false)
}

/// Summary written to `report.json` by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimulationReport {
    pub manifest: RunManifest,
    pub density_analytic: f64,
    pub density_estimate: f64,
    pub density_stderr: f64,
    pub density_z: f64,
    pub candidates: u64,
    pub accepted: u64,
    pub dropped: u64,
    pub drop_rate: f64,
    pub winding_mismatches: u64,
    pub loose_residuals: u64,
    pub reduced_chi_square: Option<f64>,
    pub chi_square_bins: Option<usize>,
    pub q_at_rmax: f64,
    pub q_at_rmax_stderr: f64,
    pub q_analytic_at_rmax: f64,
}

pub fn simulate_cmd(a: &SimulateArgs, timestamp: u64) -> CliResult<()> {
    let kind = kind_of(&a.kind)?;
    let model = model_of(&a.model)?;
    if kind.dimension() != 2 {
        return Err(CliError::Usage(format!("simulate supports planar kinds only, not {kind}")));
    }
    let window = Window::square(a.window, a.margin);
    window.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let config = SimulationConfig {
        kind,
        realizations: a.realizations,
        seed: a.seed,
        window,
        waves: a.waves,
        bin_width: a.binwidth,
        r_max: a.rmax.unwrap_or(a.margin),
        resolution: a.resolution,
    };
    let run = simulate(&model, &config).map_err(|e| CliError::numerical("simulate", e))?;
    let manifest = RunManifest::new(ManifestArgs::Simulate(a.clone()), timestamp);
    let analytic = |op: &'static str| move |e| CliError::numerical(op, e);

    let bins = run.histogram.estimate_g();
    let mut hist_rows = Vec::new();
    let mut curve_rows = Vec::new();
    for b in &bins {
        hist_rows.push(vec![num(b.r_lo), num(b.r_hi), b.sum_qq.to_string(), b.pairs.to_string(), num(b.g), num(b.stderr)]);
        let mid = 0.5 * (b.r_lo + b.r_hi);
        let g = shell_average(|r| g_analytic(kind, &model, r), b.r_lo, b.r_hi).map_err(analytic("g_analytic"))?;
        let h = h_function(kind, &model, mid).map_err(analytic("h_function"))?;
        let q = cumulative_charge(kind, &model, mid).map_err(analytic("cumulative_charge"))?;
        curve_rows.push(vec![num(mid), num(g), num(h), num(b.g), num(b.stderr), num(q)]);
    }
    let screening = run.histogram.empirical_screening();
    let mut q_rows = Vec::new();
    for c in &screening {
        let q = cumulative_charge(kind, &model, c.radius).map_err(analytic("cumulative_charge"))?;
        q_rows.push(vec![num(c.radius), num(c.q), num(c.stderr), num(q)]);
    }

    let d = density(kind, &model).map_err(analytic("density"))?;
    let r_max = run.histogram.r_max();
    let chi = if r_max > 0.5 {
        reduced_chi_square(&bins, |r| g_analytic(kind, &model, r), 0.5, r_max).ok()
    } else {
        None
    };
    let last = screening.last().copied();
    let diag = run.diagnostics;
    let report = SimulationReport {
        manifest: manifest.clone(),
        density_analytic: d,
        density_estimate: run.density.mean,
        density_stderr: run.density.stderr,
        density_z: run.density.z_score(d),
        candidates: diag.candidates,
        accepted: diag.accepted,
        dropped: diag.dropped,
        drop_rate: diag.drop_rate(),
        winding_mismatches: diag.winding_mismatches,
        loose_residuals: diag.loose_residuals,
        reduced_chi_square: chi.map(|c| c.0),
        chi_square_bins: chi.map(|c| c.1),
        q_at_rmax: last.map(|c| c.q).unwrap_or(0.0),
        q_at_rmax_stderr: last.map(|c| c.stderr).unwrap_or(0.0),
        q_analytic_at_rmax: cumulative_charge(kind, &model, r_max).map_err(analytic("cumulative_charge"))?,
    };

    fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    let path = |name: &str| a.out.join(name);
    emit(
        Some(&path("histogram.csv")),
        &csv_text(&["r_lo", "r_hi", "sum_qq", "pairs", "g_emp", "stderr"], &hist_rows)?,
    )?;
    emit(Some(&path("screening.csv")), &csv_text(&["R", "Q_emp", "stderr", "Q"], &q_rows)?)?;
    emit(Some(&path("curve.csv")), &csv_text(&["r", "g", "h", "g_emp", "stderr", "Q"], &curve_rows)?)?;
    emit(Some(&path("manifest.json")), &json_string(&manifest)?)?;
    let report_text = json_string(&report)?;
    emit(Some(&path("report.json")), &report_text)?;

    if a.json {
        return emit(None, &report_text);
    }
    let mut text = format!("# simulate {} / {}: {} realizations, seed {}\n", a.kind, a.model, a.realizations, a.seed);
    text += &format!(
        "density   {} +- {} (analytic {}, z = {:.2})\n",
        num(report.density_estimate),
        num(report.density_stderr),
        num(d),
        report.density_z
    );
    text += &format!(
        "detection {} candidates, {} accepted, {} dropped ({:.2e}), {} winding mismatches\n",
        diag.candidates,
        diag.accepted,
        diag.dropped,
        report.drop_rate,
        diag.winding_mismatches
    );
    if let Some((c, n)) = chi {
        text += &format!("g         reduced chi-square {c:.3} over {n} bins in [0.5, {r_max}]\n");
    }
    text += &format!(
        "Q({r_max})    {} +- {} (analytic {})\n",
        num(report.q_at_rmax),
        num(report.q_at_rmax_stderr),
        num(report.q_analytic_at_rmax)
    );
    emit(None, &text)
}

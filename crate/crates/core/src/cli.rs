//! Command line front end: `run`, `check` and `list`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{dyadic_ks, kappa_numeric};
use crate::bregman::{run_bregman_with, AlphaSchedule, SolverSettings};
use crate::checks::{self, CheckReport};
use crate::error::{Error, Result};
use crate::grid::BoxBounds;
use crate::problems::{build_bangbang, catalog, catalog_entries, AdjointSpec, ErrorNorm};

#[derive(Debug, Parser)]
#[command(
    name = "bregman-control",
    version,
    about = "Bregman iteration for bang-bang control of the Poisson equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an example at one or more resolutions and write rate tables.
    Run(RunArgs),
    /// Run the invariant suites.
    Check(CheckArgs),
    /// List the catalog examples.
    List,
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Plain-text `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub example: Option<String>,
    /// Mesh widths, converted to node counts per axis.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub h: Vec<f64>,
    /// Node counts per axis.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub nodes: Vec<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output formats, any of `csv`, `md`.
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<String>,
    /// `interpolated` (default) or `nodal`.
    #[arg(long)]
    pub error_norm: Option<String>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_newton_steps: Option<usize>,
    #[arg(long)]
    pub cg_tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Samples per axis for the measure-exponent fits.
    #[arg(long, default_value_t = checks::MEASURE_SAMPLES)]
    pub measure_samples: usize,
}

/// Output formats of `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub markdown: bool,
}

impl FromStr for Formats {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut f = Formats {
            csv: false,
            markdown: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "csv" => f.csv = true,
                "md" | "markdown" => f.markdown = true,
                other => return Err(Error::Config(format!("unknown format '{other}'"))),
            }
        }
        if !f.csv && !f.markdown {
            return Err(Error::Config("no output format selected".into()));
        }
        Ok(f)
    }
}

/// A fully resolved `run` configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub example: String,
    /// Nodes per axis, one entry per resolution.
    pub nodes: Vec<usize>,
    pub alpha: f64,
    pub iterations: usize,
    pub settings: SolverSettings,
    pub out_dir: PathBuf,
    pub formats: Formats,
    pub error_norm: ErrorNorm,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        catalog(&self.example)?;
        if self.nodes.is_empty() {
            return Err(Error::Config("at least one resolution is required".into()));
        }
        if let Some(n) = self.nodes.iter().find(|&&n| n < 3) {
            return Err(Error::Config(format!(
                "resolution {n} has fewer than 3 nodes"
            )));
        }
        if self.iterations < 4 {
            return Err(Error::Config(format!(
                "iters must be at least 4, got {}",
                self.iterations
            )));
        }
        AlphaSchedule::constant(self.alpha)?;
        self.settings.validate()
    }
}

/// Node count per axis for mesh width `h` on `[a, b]`.
pub fn nodes_for_spacing(a: f64, b: f64, h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!(
            "mesh width must be positive, got {h}"
        )));
    }
    let cells = (b - a) / h;
    let rounded = cells.round();
    if rounded < 2.0 || (cells - rounded).abs() > 1e-6 * rounded {
        return Err(Error::Config(format!(
            "h = {h} does not divide [{a}, {b}] into at least two equal cells"
        )));
    }
    Ok(rounded as usize + 1)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

const CONFIG_KEYS: [&str; 11] = [
    "example",
    "h",
    "nodes",
    "alpha",
    "iters",
    "out",
    "format",
    "error_norm",
    "tolerance",
    "max_newton_steps",
    "cg_tolerance",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_norm(value: &str) -> Result<ErrorNorm> {
    match value.trim() {
        "interpolated" => Ok(ErrorNorm::Interpolated),
        "nodal" => Ok(ErrorNorm::Nodal),
        other => Err(Error::Config(format!("unknown error norm '{other}'"))),
    }
}

impl RunArgs {
    /// Merges the config file (if any) with the flags, flags winning.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => parse_config_text(&fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let get = |k: &str| file.get(k).map(String::as_str);

        let example = match (&self.example, get("example")) {
            (Some(e), _) => e.clone(),
            (None, Some(e)) => e.to_string(),
            (None, None) => return Err(Error::Config("missing example".into())),
        };
        let spec = catalog(&example)?;

        // resolutions: flags replace the file's h/nodes entirely
        let (hs, ns) = if !self.h.is_empty() || !self.nodes.is_empty() {
            (self.h.clone(), self.nodes.clone())
        } else {
            (
                get("h")
                    .map(|v| parse_list("h", v))
                    .transpose()?
                    .unwrap_or_default(),
                get("nodes")
                    .map(|v| parse_list("nodes", v))
                    .transpose()?
                    .unwrap_or_default(),
            )
        };
        let (a, b) = spec.domain();
        let mut nodes = hs
            .iter()
            .map(|&h| nodes_for_spacing(a, b, h))
            .collect::<Result<Vec<_>>>()?;
        nodes.extend(ns);

        let defaults = SolverSettings::default();
        let pick = |flag: Option<f64>, key: &str, default: f64| -> Result<f64> {
            match (flag, get(key)) {
                (Some(v), _) => Ok(v),
                (None, Some(v)) => parse_value(key, v),
                (None, None) => Ok(default),
            }
        };
        let pick_usize = |flag: Option<usize>, key: &str, default: usize| -> Result<usize> {
            match (flag, get(key)) {
                (Some(v), _) => Ok(v),
                (None, Some(v)) => parse_value(key, v),
                (None, None) => Ok(default),
            }
        };
        let formats = if !self.format.is_empty() {
            self.format.join(",").parse()?
        } else {
            get("format").unwrap_or("csv,md").parse()?
        };
        let error_norm = match (&self.error_norm, get("error_norm")) {
            (Some(v), _) => parse_norm(v)?,
            (None, Some(v)) => parse_norm(v)?,
            (None, None) => ErrorNorm::Interpolated,
        };
        let out_dir = match (&self.out, get("out")) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => PathBuf::from(p),
            (None, None) => PathBuf::from("results"),
        };
        let config = ExperimentConfig {
            example,
            nodes,
            alpha: pick(self.alpha, "alpha", 1.0)?,
            iterations: pick_usize(self.iters, "iters", 2048)?,
            settings: SolverSettings {
                tolerance: pick(self.tolerance, "tolerance", defaults.tolerance)?,
                max_newton_steps: pick_usize(
                    self.max_newton_steps,
                    "max_newton_steps",
                    defaults.max_newton_steps,
                )?,
                cg_tolerance: pick(self.cg_tolerance, "cg_tolerance", defaults.cg_tolerance)?,
                cg_max_iterations: defaults.cg_max_iterations,
            },
            out_dir,
            formats,
            error_norm,
        };
        config.validate()?;
        Ok(config)
    }
}

/// κ_k per resolution from one `run`.
#[derive(Debug, Clone)]
pub struct ResolutionResult {
    pub nodes: usize,
    pub label: String,
    /// Squared errors indexed by `k` (as far as the run got).
    pub errors: Vec<f64>,
    pub csv_path: Option<PathBuf>,
    pub failure: Option<String>,
}

impl ResolutionResult {
    pub fn kappa(&self, k: usize) -> Option<f64> {
        kappa_numeric(&self.errors, k).ok().flatten()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub resolutions: Vec<ResolutionResult>,
    pub markdown: String,
    pub markdown_path: Option<PathBuf>,
}

fn resolution_label(spec: &AdjointSpec, nodes: usize) -> String {
    let (a, b) = spec.domain();
    let h = (b - a) / (nodes - 1) as f64;
    if spec.dimension() == 1 {
        format!("h = {h:.0e}")
    } else {
        format!("{nodes}x{nodes} (h = {h:.0e})")
    }
}

fn csv_row(k: usize, residual: f64, error: Option<f64>, kappa: Option<f64>) -> [String; 4] {
    [
        k.to_string(),
        format!("{residual:e}"),
        error.map(|e| format!("{e:e}")).unwrap_or_default(),
        kappa.map(|v| format!("{v:e}")).unwrap_or_default(),
    ]
}

fn run_resolution(config: &ExperimentConfig, spec: &AdjointSpec, nodes: usize) -> ResolutionResult {
    let label = resolution_label(spec, nodes);
    let mut errors = Vec::with_capacity(config.iterations + 1);
    let csv_path = config.formats.csv.then(|| {
        config
            .out_dir
            .join(format!("{}_n{nodes}.csv", config.example))
    });

    let outcome = (|| -> Result<()> {
        let mut writer = match &csv_path {
            Some(p) => {
                let mut w = csv::Writer::from_writer(BufWriter::new(File::create(p)?));
                w.write_record(["k", "residual", "error_sq", "kappa_k"])?;
                w.flush()?;
                Some(w)
            }
            None => None,
        };
        let problem = build_bangbang(spec, BoxBounds::default(), spec.grid(nodes)?)?
            .with_error_norm(config.error_norm);
        log::info!(
            "{}: {} with {} solver, K = {}",
            config.example,
            problem.grid().describe(),
            problem.operator().solver_name(),
            config.iterations
        );
        let schedule = AlphaSchedule::constant(config.alpha)?;
        run_bregman_with(
            &problem,
            &schedule,
            config.iterations,
            &config.settings,
            |st| {
                errors.push(st.error_sq.unwrap_or(f64::NAN));
                let kappa = if st.k >= 2 && st.k % 2 == 0 {
                    kappa_numeric(&errors, st.k)?
                } else {
                    None
                };
                if let Some(w) = writer.as_mut() {
                    w.write_record(csv_row(st.k, st.residual, st.error_sq, kappa))?;
                    w.flush()?;
                }
                Ok(())
            },
        )?;
        Ok(())
    })();

    ResolutionResult {
        nodes,
        label,
        errors,
        csv_path,
        failure: outcome.err().map(|e| e.to_string()),
    }
}

/// Markdown table with one row per dyadic `k` and one κ_k column per
/// resolution.
pub fn markdown_table(example: &str, iterations: usize, results: &[ResolutionResult]) -> String {
    let mut s = format!("### {example}\n\n| k |");
    for r in results {
        s.push_str(&format!(" {} |", r.label));
    }
    s.push_str("\n|---:|");
    for _ in results {
        s.push_str("---:|");
    }
    s.push('\n');
    for k in dyadic_ks(iterations) {
        s.push_str(&format!("| {k} |"));
        for r in results {
            match r.kappa(k) {
                Some(v) => s.push_str(&format!(" {v:.3} |")),
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

/// Runs every resolution (in parallel) and writes the requested outputs.
///
/// All runs are attempted; if any fails, the outputs of the others are
/// still written and an error naming the failures is returned.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let spec = catalog(&config.example)?;
    fs::create_dir_all(&config.out_dir)?;
    let resolutions: Vec<ResolutionResult> = config
        .nodes
        .par_iter()
        .map(|&n| run_resolution(config, &spec, n))
        .collect();

    let markdown = markdown_table(&config.example, config.iterations, &resolutions);
    let markdown_path = if config.formats.markdown {
        let path = config.out_dir.join(format!("{}_kappa.md", config.example));
        let mut f = File::create(&path)?;
        f.write_all(markdown.as_bytes())?;
        Some(path)
    } else {
        None
    };

    let failures: Vec<String> = resolutions
        .iter()
        .filter_map(|r| {
            r.failure
                .as_ref()
                .map(|f| format!("{} nodes: {f}", r.nodes))
        })
        .collect();
    if !failures.is_empty() {
        return Err(Error::Config(format!(
            "run failed: {}",
            failures.join("; ")
        )));
    }
    Ok(RunOutcome {
        resolutions,
        markdown,
        markdown_path,
    })
}

pub fn cmd_check(measure_samples: usize) -> Result<CheckReport> {
    checks::run_all(measure_samples)
}

pub fn cmd_list() -> String {
    let mut s = String::new();
    for spec in catalog_entries() {
        let (a, b) = spec.domain();
        let domain = if spec.dimension() == 1 {
            format!("[{a}, {b}]")
        } else {
            format!("[{a}, {b}]^2")
        };
        s.push_str(&format!(
            "{:<12} {:<12} kappa={:<6.4} {}\n",
            spec.name, domain, spec.kappa, spec.description
        ));
    }
    s
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn execute(cli: Cli, out: &mut impl Write) -> Result<i32> {
    match cli.command {
        Command::List => {
            write!(out, "{}", cmd_list())?;
            Ok(0)
        }
        Command::Check(args) => {
            let report = cmd_check(args.measure_samples)?;
            writeln!(out, "{report}")?;
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Run(args) => {
            let config = args.resolve()?;
            let outcome = cmd_run(&config)?;
            writeln!(out, "{}", outcome.markdown)?;
            for r in &outcome.resolutions {
                if let Some(p) = &r.csv_path {
                    writeln!(out, "wrote {}", p.display())?;
                }
            }
            if let Some(p) = &outcome.markdown_path {
                writeln!(out, "wrote {}", p.display())?;
            }
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_to_nodes() {
        assert_eq!(nodes_for_spacing(-1.0, 1.0, 1e-3).unwrap(), 2001);
        assert_eq!(nodes_for_spacing(0.0, 1.0, 1e-4).unwrap(), 10001);
        assert_eq!(nodes_for_spacing(-1.0, 1.0, 1e-5).unwrap(), 200001);
        assert_eq!(nodes_for_spacing(0.0, 1.0, 0.01).unwrap(), 101);
        assert!(nodes_for_spacing(0.0, 1.0, 0.3).is_err());
        assert!(nodes_for_spacing(0.0, 1.0, 0.0).is_err());
        assert!(nodes_for_spacing(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn config_text() {
        let map = parse_config_text(
            "# comment\nexample = ex1-1d-k1\n\nh = 1e-3, 1e-4  # two\niters=16\n",
        )
        .unwrap();
        assert_eq!(map["example"], "ex1-1d-k1");
        assert_eq!(map["h"], "1e-3, 1e-4");
        assert_eq!(map["iters"], "16");
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("no equals sign").is_err());
        assert!(parse_config_text("error-norm = nodal").is_ok());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "example = ex3-1d-k13\nh = 0.01\nalpha = 2\niters = 8\nformat = csv\n",
        )
        .unwrap();
        let args = RunArgs {
            config: Some(path.clone()),
            iters: Some(16),
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.example, "ex3-1d-k13");
        assert_eq!(c.nodes, vec![101]);
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.iterations, 16);
        assert!(c.formats.csv && !c.formats.markdown);

        let args = RunArgs {
            config: Some(path),
            nodes: vec![51],
            format: vec!["md".into()],
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.nodes, vec![51]);
        assert!(!c.formats.csv && c.formats.markdown);
    }

    #[test]
    fn defaults_and_validation() {
        let args = RunArgs {
            example: Some("ex1-1d-k1".into()),
            h: vec![1e-3],
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.iterations, 2048);
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.nodes, vec![2001]);
        assert_eq!(c.error_norm, ErrorNorm::Interpolated);

        let bad_k = RunArgs {
            iters: Some(3),
            ..args_for("ex1-1d-k1")
        };
        assert!(bad_k.resolve().is_err());
        let unknown = args_for("ex9");
        assert!(matches!(
            unknown.resolve(),
            Err(Error::UnknownExample { .. })
        ));
        let no_res = RunArgs {
            example: Some("ex1-1d-k1".into()),
            ..Default::default()
        };
        assert!(no_res.resolve().is_err());
        assert!("pdf".parse::<Formats>().is_err());
    }

    fn args_for(example: &str) -> RunArgs {
        RunArgs {
            example: Some(example.into()),
            nodes: vec![21],
            ..Default::default()
        }
    }

    #[test]
    fn markdown_has_dyadic_rows() {
        let r = ResolutionResult {
            nodes: 11,
            label: "h = 2e-1".into(),
            errors: (0..=16).map(|k| 1.0 / (k as f64 + 1.0)).collect(),
            csv_path: None,
            failure: None,
        };
        let md = markdown_table("demo", 16, &[r]);
        let rows: Vec<&str> = md
            .lines()
            .filter(|l| l.starts_with("| ") && !l.starts_with("| k"))
            .collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].starts_with("| 4 |"));
        assert!(rows[2].starts_with("| 16 |"));
    }

    #[test]
    fn list_shows_catalog() {
        let text = cmd_list();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("ex1-1d-k1") && text.contains("kappa=1"));
    }
}

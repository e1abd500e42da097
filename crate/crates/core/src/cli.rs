//! Command-line front end: configuration files, table reproduction and the
//! self-test suite.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::engine::{self, EstimateReport, Pilot, Quantity, RunConfig, Welford};
use crate::error::{Error, Result};
use crate::estimators::DensityFactor;
use crate::model::{Family, Model, SineMartingale, TestFunction};
use crate::oracles::{degeneracy, fd_consistency_bel, suite, KilledBMOracle};
use crate::renewal::{sample_path, JumpLaw};
use crate::weights::Normalization;

/// Exit code for unreadable or invalid configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for a model that fails validation.
pub const EXIT_MODEL: i32 = 3;
/// Exit code for a failed self-test.
pub const EXIT_SELFTEST: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    #[default]
    SineMartingale,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub family: FamilyName,
    pub sigma_bar: f64,
    pub omega: f64,
    pub c0: f64,
    pub c1: f64,
    pub c3: f64,
    /// Drift of the constant family.
    pub drift: f64,
    #[serde(rename = "L")]
    pub barrier: f64,
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            family: FamilyName::SineMartingale,
            sigma_bar: 0.1,
            omega: 0.1,
            c0: 0.0,
            c1: 1.0,
            c3: 1.0,
            drift: 0.0,
            barrier: 0.0,
            x0: 1.0,
            horizon: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub quantity: Quantity,
    #[serde(rename = "M")]
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    /// Cubic test function `[c0, c1, c2, c3]`; defaults to `c0 + c1 x + c3 x³`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<[f64; 4]>,
    /// Terminal point of the density quantities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub density_factor: DensityFactor,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            quantity: Quantity::Value,
            samples: 100_000,
            seed: 0,
            workers: 1,
            f: None,
            z: None,
            density_factor: DensityFactor::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub spec: String,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            spec: "beta1:alpha=0.5,tau=2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotSection {
    pub enabled: bool,
    pub grid: Vec<String>,
    #[serde(rename = "pilot_M")]
    pub samples: u64,
}

impl Default for PilotSection {
    fn default() -> Self {
        PilotSection {
            enabled: false,
            grid: Vec::new(),
            samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: Format,
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelSection,
    pub run: RunSection,
    pub sampler: SamplerSection,
    pub pilot: PilotSection,
    pub output: OutputSection,
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Apply `section.key=value` to a raw document.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one item");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(value));
    Ok(())
}

impl Config {
    /// Parse a document and apply overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        // Typed parse of the raw text first, so errors carry line information.
        toml::from_str::<Config>(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Config = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    fn check(&self) -> Result<()> {
        if self.run.samples == 0 {
            return Err(Error::Config("run.M must be at least 1".into()));
        }
        if self.run.workers == 0 {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        let m = &self.model;
        match m.family {
            FamilyName::SineMartingale => Family::SineMartingale(SineMartingale {
                sigma_bar: m.sigma_bar,
                omega: m.omega,
                c0: m.c0,
                c1: m.c1,
                c3: m.c3,
            }),
            FamilyName::Constant => Family::Constant {
                sigma_bar: m.sigma_bar,
                drift: m.drift,
            },
        }
    }

    pub fn test_function(&self) -> TestFunction {
        let m = &self.model;
        TestFunction::polynomial(&self.run.f.unwrap_or([m.c0, m.c1, 0.0, m.c3]))
    }

    /// Build and validate the model, then assemble the engine configuration.
    pub fn run_config(&self) -> Result<RunConfig> {
        let m = &self.model;
        let (model, _) = self.family().build_validated(m.barrier, m.horizon, m.x0)?;
        let law: JumpLaw = self.sampler.spec.parse()?;
        let mut rc = RunConfig::new(model, self.test_function(), self.run.quantity, law);
        rc.samples = self.run.samples;
        rc.seed = self.run.seed;
        rc.workers = self.run.workers;
        rc.z = self.run.z;
        rc.density_factor = self.run.density_factor;
        if self.pilot.enabled {
            let grid = self.pilot.grid.iter().map(|s| s.parse()).collect::<Result<Vec<JumpLaw>>>()?;
            rc.pilot = Some(Pilot {
                grid,
                samples: self.pilot.samples,
            });
        }
        Ok(rc)
    }
}

/// One CSV output row.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub quantity: String,
    pub sampler: String,
    pub params: String,
    #[serde(rename = "M")]
    pub samples: u64,
    pub seed: u64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub ci95: f64,
    pub runtime_s: f64,
    pub mad: f64,
}

impl From<&EstimateReport> for CsvRow {
    fn from(r: &EstimateReport) -> Self {
        let (kind, params) = r.sampler.split_once(':').unwrap_or((&r.sampler, ""));
        CsvRow {
            quantity: r.quantity.to_string(),
            sampler: kind.to_string(),
            params: params.to_string(),
            samples: r.samples,
            seed: r.seed,
            mean: r.mean,
            variance: r.variance,
            stderr: r.stderr,
            ci95: r.ci95,
            runtime_s: r.runtime_s,
            mad: r.mad,
        }
    }
}

pub fn write_csv<W: Write>(out: W, reports: &[EstimateReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow::from(r)).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn render(format: Format, reports: &[EstimateReport]) -> Result<String> {
    Ok(match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(&mut buf, reports)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        Format::Json => serde_json::to_string_pretty(reports).expect("report serialises") + "\n",
        Format::Table => reports
            .iter()
            .map(|r| {
                format!(
                    "{} [{}] M={} seed={}: {:.6} ± {:.6} (variance {:.4}, stderr {:.6}, mad {:.4}, {:.2}s)\n",
                    r.quantity, r.sampler, r.samples, r.seed, r.mean, r.ci95, r.variance, r.stderr, r.mad, r.runtime_s
                )
            })
            .collect(),
    })
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Which benchmark table to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableKind {
    /// `E[h(X_T) 1{τ>T}]`.
    #[value(name = "1")]
    Value,
    /// `T ∂_x E[h(X_T) 1{τ>T}]`.
    #[value(name = "2")]
    Bel,
}

impl TableKind {
    pub fn quantity(self) -> Quantity {
        match self {
            TableKind::Value => Quantity::Value,
            TableKind::Bel => Quantity::Bel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableOptions {
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    /// Pilot replications per grid point; 0 uses the first grid entry.
    pub pilot_samples: u64,
    pub sigmas: Vec<f64>,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            samples: 100_000,
            seed: 2024,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            pilot_samples: 50_000,
            sigmas: vec![0.1, 0.2, 0.3],
        }
    }
}

/// One cell of a reproduced table.
#[derive(Debug, Clone)]
pub struct TableCell {
    pub sigma_bar: f64,
    pub beta: bool,
    pub report: EstimateReport,
}

/// Pilot grid for exponential gaps.
pub fn exponential_grid() -> Vec<JumpLaw> {
    [1.0, 0.1, 0.3, 0.5, 2.0].iter().map(|&lambda| JumpLaw::Exponential { lambda }).collect()
}

/// Pilot grid for Beta gaps over the shape `α` and the support `τ̄`.
pub fn beta_grid() -> Vec<JumpLaw> {
    let mut grid = Vec::new();
    for alpha in [0.5, 0.3, 0.7] {
        for tau in [2.0, 0.6, 1.0, 4.0] {
            grid.push(JumpLaw::BetaOne { alpha, tau });
        }
    }
    grid
}

/// The sine model of the tables: `T = ½`, `L = 0`, `x₀ = 1`, `h = x³ + x`.
pub fn table_model(sigma_bar: f64) -> Result<(Model, TestFunction)> {
    let s = SineMartingale {
        sigma_bar,
        omega: sigma_bar,
        c0: 0.0,
        c1: 1.0,
        c3: 1.0,
    };
    Ok((Family::SineMartingale(s).build(0.0, 0.5, 1.0)?, s.harmonic()))
}

/// Run one cell.
pub fn table_cell(kind: TableKind, sigma_bar: f64, beta: bool, opts: &TableOptions) -> Result<TableCell> {
    let (model, h) = table_model(sigma_bar)?;
    let grid = if beta { beta_grid() } else { exponential_grid() };
    let mut rc = RunConfig::new(model, h, kind.quantity(), grid[0]);
    rc.samples = opts.samples;
    rc.seed = opts.seed;
    rc.workers = opts.workers;
    rc.pilot = Some(Pilot {
        grid,
        samples: opts.pilot_samples,
    });
    Ok(TableCell {
        sigma_bar,
        beta,
        report: engine::run(&rc)?,
    })
}

/// Every cell of a table; cell `k` uses seed `opts.seed + k` so that cells
/// are statistically independent.
pub fn reproduce_table(kind: TableKind, opts: &TableOptions) -> Result<Vec<TableCell>> {
    let mut cells = Vec::new();
    for (i, &s) in opts.sigmas.iter().enumerate() {
        for (j, beta) in [false, true].into_iter().enumerate() {
            let cell_opts = TableOptions {
                seed: opts.seed.wrapping_add((2 * i + j) as u64),
                ..opts.clone()
            };
            cells.push(table_cell(kind, s, beta, &cell_opts)?);
        }
    }
    Ok(cells)
}

/// Plain-text layout: `estimate; variance; mad; (+/-) ci95` per sampler.
pub fn format_table(kind: TableKind, cells: &[TableCell]) -> String {
    let title = match kind {
        TableKind::Value => "E[h(X_T) 1{tau>T}]",
        TableKind::Bel => "T d/dx E[h(X_T) 1{tau>T}]",
    };
    let mut out = format!("{title}\n{:<16}{:<44}{:<44}\n", "sigma=omega", "Exponential", "Beta");
    let mut sigmas: Vec<f64> = cells.iter().map(|c| c.sigma_bar).collect();
    sigmas.dedup();
    let cell = |c: Option<&TableCell>| {
        c.map_or_else(String::new, |c| {
            let r = &c.report;
            format!("{:.2}; {:.1}; {:.1}; (+/-) {:.3}", r.mean, r.variance, r.mad, r.ci95)
        })
    };
    for s in sigmas {
        let find = |beta| cells.iter().find(|c| c.sigma_bar == s && c.beta == beta);
        out += &format!("{:<16}{:<44}{:<44}\n", s, cell(find(false)), cell(find(true)));
    }
    out += "samplers:";
    for c in cells {
        out += &format!(" [{} {}]", c.sigma_bar, c.report.sampler);
    }
    out + "\n"
}

/// One line of the self-test report.
#[derive(Debug, Clone)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SelfCheck {
    fn from_suite(c: &suite::Check) -> Self {
        SelfCheck {
            name: c.name.to_string(),
            passed: c.passed(),
            detail: format!("cases={} worst={:.3e} tol={:.0e}", c.cases, c.worst, c.tolerance),
        }
    }

    fn z(name: String, estimate: f64, exact: f64, stderr: f64) -> Self {
        let z = (estimate - exact) / stderr;
        SelfCheck {
            name,
            passed: z.abs() <= 4.0,
            detail: format!("estimate={estimate:.6} exact={exact:.6} z={z:.2}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Fast,
    Full,
}

fn sampler_pair() -> [JumpLaw; 2] {
    [
        JumpLaw::Exponential { lambda: 1.0 },
        JumpLaw::BetaOne { alpha: 0.5, tau: 2.0 },
    ]
}

/// Quadrature identities and fast invariants, then optionally statistical runs.
pub fn selftest(level: Level, seed: u64, workers: usize) -> Result<Vec<SelfCheck>> {
    let mut out: Vec<SelfCheck> = suite::lemma_suite(seed, 32)?.iter().map(SelfCheck::from_suite).collect();

    let (sine, _) = table_model(0.3)?;
    let dts = [1e-1, 1e-2, 1e-3];
    let s = degeneracy::base_weight_slope(&sine, 1.0, &dts, 20_000, seed);
    let (a, b) = degeneracy::merged_weight_slopes(&sine, &dts, 20_000, seed);
    out.push(SelfCheck {
        name: "degeneracy".into(),
        passed: (s + 0.5).abs() <= 0.1 && a.min(b) >= -0.6,
        detail: format!("base={s:.3} star={a:.3} circledast={b:.3}"),
    });

    let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 5.0).collect();
    let whole: Welford = xs.iter().copied().collect();
    let mut merged = Welford::new();
    for c in xs.chunks(333).rev() {
        merged.merge(&c.iter().copied().collect());
    }
    let rel = (merged.variance() - whole.variance()).abs() / whole.variance();
    out.push(SelfCheck {
        name: "welford_merge".into(),
        passed: rel <= 1e-12,
        detail: format!("relative={rel:.3e}"),
    });

    // Poisson and exponential-renewal normalisations agree path by path.
    let law = JumpLaw::Exponential { lambda: 1.5 };
    let h = TestFunction::power_above(0.0, 2);
    let p = crate::estimators::Estimator::new(&sine, Normalization::Poisson { lambda: 1.5 });
    let r = crate::estimators::Estimator::new(&sine, Normalization::Renewal(law));
    let mut worst = 0.0f64;
    for i in 0..500 {
        let path = sample_path(&law, sine.horizon, &mut engine::replication_rng(seed, i));
        let (u, v) = (p.replicate(&h, &path), r.replicate(&h, &path));
        for (x, y) in [(u.value_term, v.value_term), (u.ibp_term, v.ibp_term), (u.bel_term, v.bel_term)] {
            worst = worst.max((x - y).abs() / (1.0 + x.abs()));
        }
    }
    out.push(SelfCheck {
        name: "exp_equivalence".into(),
        passed: worst <= 1e-10,
        detail: format!("worst={worst:.3e}"),
    });

    if level == Level::Full {
        let m = 100_000;
        let (sigma, x, t, z) = (1.0, 0.5, 1.0, 0.7);
        let model = Model::constant(sigma, 0.0, 0.0, t, x)?;
        let oracle = KilledBMOracle::new(sigma, 0.0, x, t);
        let f = TestFunction::power_above(0.0, 2);
        for law in sampler_pair() {
            for q in [Quantity::Value, Quantity::Bel, Quantity::DensityDz, Quantity::DensityDx] {
                let mut rc = RunConfig::new(model.clone(), f.clone(), q, law);
                rc.samples = m;
                rc.seed = seed;
                rc.workers = workers;
                rc.z = Some(z);
                let rep = engine::run(&rc)?;
                let exact = oracle.expected(q, &f, z)?;
                out.push(SelfCheck::z(format!("oracle_{q}_{law}"), rep.mean, exact, rep.stderr));
            }
        }
        let (sine1, h) = table_model(0.1)?;
        for (name, model, f) in [("fd_constant", &model, &f), ("fd_sine", &sine1, &h)] {
            let r = fd_consistency_bel(model, f, JumpLaw::BetaOne { alpha: 0.5, tau: 2.0 }, m, 1e-3, seed)?;
            out.push(SelfCheck {
                name: name.into(),
                passed: r.z.abs() <= 4.0,
                detail: format!("fd={:.5} bel={:.5} z={:.2}", r.fd, r.bel, r.z),
            });
        }
        let opts = TableOptions {
            samples: m,
            seed,
            workers,
            ..TableOptions::default()
        };
        let c = table_cell(TableKind::Value, 0.1, true, &opts)?;
        out.push(SelfCheck::z("table1_cell".into(), c.report.mean, 2.0, c.report.stderr));
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "killmc", version, about = "Unbiased Monte Carlo for killed diffusions and their sensitivities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one estimate from a configuration file.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Override a key, e.g. `--set model.sigma_bar=0.2` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run a benchmark table: 1 for the value, 2 for the BEL sensitivity.
    Tables {
        #[arg(long, value_enum)]
        which: TableKind,
        /// Replications per cell.
        #[arg(short = 'M', long = "samples", default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        /// Pilot replications per grid point (0 skips tuning).
        #[arg(long = "pilot-M", default_value_t = 50_000)]
        pilot_samples: u64,
        /// Also write the cells as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the quadrature identities and, at `full`, the statistical criteria.
    Selftest {
        #[arg(long, value_enum, default_value = "fast")]
        level: Level,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Model(_) => EXIT_MODEL,
        _ => EXIT_CONFIG,
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Estimate {
            config,
            overrides,
            out,
            seed,
            workers,
            format,
        } => {
            let mut cfg = Config::load(&config, &overrides)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(w) = workers {
                cfg.run.workers = w;
            }
            if let Some(f) = format {
                cfg.output.format = f;
            }
            cfg.check()?;
            let report = engine::run(&cfg.run_config()?)?;
            let path = out.or(cfg.output.path.clone());
            emit(&render(cfg.output.format, std::slice::from_ref(&report))?, path.as_deref())?;
            if path.is_some() {
                eprint!("{}", render(Format::Table, std::slice::from_ref(&report))?);
            }
            Ok(0)
        }
        Command::Tables {
            which,
            samples,
            seed,
            workers,
            pilot_samples,
            out,
        } => {
            if samples == 0 {
                return Err(Error::Config("M must be at least 1".into()));
            }
            let opts = TableOptions {
                samples,
                seed,
                workers: workers.unwrap_or_else(default_workers),
                pilot_samples,
                ..TableOptions::default()
            };
            let cells = reproduce_table(which, &opts)?;
            print!("{}", format_table(which, &cells));
            if let Some(p) = out {
                let reports: Vec<_> = cells.into_iter().map(|c| c.report).collect();
                write_csv(fs::File::create(p)?, &reports)?;
            }
            Ok(0)
        }
        Command::Selftest { level, seed, workers } => {
            let checks = selftest(level, seed, workers.unwrap_or_else(default_workers))?;
            let mut ok = true;
            for c in &checks {
                println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { 0 } else { EXIT_SELFTEST })
        }
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

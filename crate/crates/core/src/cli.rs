//! Command-line front end.
//!
//! Settings resolve as flag, then `--config` file entry (`key = value` lines), then default.
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::em::{em_fit, EmConfig};
use crate::error::{Error, Result};
use crate::io::{ingest, write_angles, TimeFormat};
use crate::moment_estimation::{empirical_trig_moments, fit_mmm, EtmConfig};
use crate::report::{
    load_model, moment_rows, write_density_csv, write_histogram_csv, write_moment_table,
    EstimateDoc, FitReportDoc, Method,
};
use crate::sampling::sample;
use crate::simulation::{run_study, write_study_csv, StudyConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "kjmix",
    version,
    about = "Fit and simulate mixtures of Kato-Jones circular distributions"
)]
pub struct Cli {
    /// File of `key = value` defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture to observed angles or times of day.
    Fit(FitArgs),
    /// Evaluate a stored model on a grid.
    Density(DensityArgs),
    /// Compare empirical and model trigonometric moments.
    Moments(MomentsArgs),
    /// Draw a sample from a stored model.
    Simulate(SimulateArgs),
    /// Monte Carlo comparison of the moment and likelihood estimators.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// hhmm, hhmmss, hours, or radians [default: hhmm]
    #[arg(long)]
    pub format: Option<String>,
    /// Number of Kato-Jones components [default: 2]
    #[arg(long)]
    pub components: Option<usize>,
    /// mmm, mle, or both [default: both]
    #[arg(long)]
    pub method: Option<String>,
    /// Random starts for the moment fit [default: 100]
    #[arg(long)]
    pub starts: Option<usize>,
    /// Moment weight base in (0, 1) [default: 0.9]
    #[arg(long)]
    pub c: Option<f64>,
    /// Highest moment order [default: 2m]
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub density_csv: Option<PathBuf>,
    /// Grid size of the density curve [default: 1024]
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub histogram_csv: Option<PathBuf>,
    /// Histogram bins [default: 24]
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    /// Fit report or bare mixture JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub q: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format [default: radians]
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// True mixture (fit report or bare mixture JSON).
    #[arg(long)]
    pub truth: PathBuf,
    /// Comma-separated sample sizes [default: 50,100,500]
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const CONFIG_KEYS: &[&str] = &[
    "format",
    "components",
    "method",
    "starts",
    "c",
    "q",
    "seed",
    "grid",
    "bins",
    "n",
    "sizes",
    "replicates",
    "inner_tol",
    "outer_tol",
    "max_outer",
    "max_iter",
];

/// Parsed `key = value` configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile(HashMap<String, String>);

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key = value", i + 1))
            })?;
            let key = k.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "config line {}: unknown key '{}'",
                    i + 1,
                    k.trim()
                )));
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| {
                    Error::Config(format!("config value '{v}' for '{key}' is invalid"))
                })
            })
            .transpose()
    }

    /// Flag value, else config entry, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    fn em_config(&self) -> Result<EmConfig> {
        let d = EmConfig::default();
        Ok(EmConfig {
            inner_tol: self.pick(None, "inner_tol", d.inner_tol)?,
            inner_max_iter: self.pick(None, "max_iter", d.inner_max_iter)?,
            outer_tol: self.pick_opt(None, "outer_tol")?,
            max_outer: self.pick(None, "max_outer", d.max_outer)?,
        })
    }

    fn etm_config(
        &self,
        starts: Option<usize>,
        c: Option<f64>,
        q: Option<usize>,
        seed: Option<u64>,
    ) -> Result<EtmConfig> {
        let d = EtmConfig::default();
        let cfg = EtmConfig {
            q: self.pick_opt(q, "q")?,
            c: self.pick(c, "c", d.c)?,
            starts: self.pick(starts, "starts", d.starts)?,
            seed: self.pick(seed, "seed", d.seed)?,
            max_iter: self.pick(None, "max_iter", d.max_iter)?,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_str<T: FromStr<Err = Error>>(
    cfg: &ConfigFile,
    flag: Option<String>,
    key: &str,
    default: &str,
) -> Result<T> {
    let raw: String = cfg.pick(flag, key, default.to_string())?;
    raw.parse()
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid sample size '{v}'")))
        })
        .collect()
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn cmd_fit(a: FitArgs, cfg: &ConfigFile) -> Result<()> {
    let start = Instant::now();
    let format: TimeFormat = parse_str(cfg, a.format, "format", "hhmm")?;
    let method: Method = parse_str(cfg, a.method, "method", "both")?;
    let m = cfg.pick(a.components, "components", 2)?;
    if m == 0 {
        return Err(Error::Config("components must be at least 1".into()));
    }
    let etm_cfg = cfg.etm_config(a.starts, a.c, a.q, a.seed)?;
    let em_cfg = cfg.em_config()?;
    em_cfg.validate()?;
    let grid = cfg.pick(a.grid, "grid", 1024)?;
    let bins = cfg.pick(a.bins, "bins", 24)?;

    let xs = ingest(&a.data, format)?;
    let q = etm_cfg.order(m);
    let emp = empirical_trig_moments(&xs, q)?;
    let mm = fit_mmm(&emp, m, &etm_cfg)?;
    log::info!("moment fit: ETM {:e} from start {}", mm.etm, mm.best_start);
    let mmm_doc = EstimateDoc::new(mm.mixture.clone(), &xs, &emp, etm_cfg.c, mm.iterations)?;
    let mle_doc = if method == Method::Mmm {
        None
    } else {
        let fit = em_fit(&xs, &mm.mixture, &em_cfg)?;
        log::info!("EM: {} iterations, loglik {}", fit.iterations, fit.loglik());
        Some(EstimateDoc::new(
            fit.mixture,
            &xs,
            &emp,
            etm_cfg.c,
            fit.iterations,
        )?)
    };
    let report = FitReportDoc {
        method,
        m,
        n: xs.len(),
        q,
        c: etm_cfg.c,
        starts: etm_cfg.starts,
        seed: etm_cfg.seed,
        mmm: (method != Method::Mle).then_some(mmm_doc.clone()),
        mle: mle_doc,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let model = &report.best().unwrap_or(&mmm_doc).reparam;
    if let Some(p) = &a.density_csv {
        let mut w = open_out(Some(p))?;
        write_density_csv(model, grid, &mut w)?;
        w.flush()?;
    }
    if let Some(p) = &a.histogram_csv {
        let mut w = open_out(Some(p))?;
        write_histogram_csv(&xs, bins, &mut w)?;
        w.flush()?;
    }
    let mut w = open_out(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_density(a: DensityArgs, cfg: &ConfigFile) -> Result<()> {
    let grid = cfg.pick(a.grid, "grid", 1024)?;
    let model = load_model(&a.model)?;
    let mut w = open_out(a.out.as_deref())?;
    write_density_csv(&model, grid, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_moments(a: MomentsArgs, cfg: &ConfigFile) -> Result<()> {
    let format: TimeFormat = parse_str(cfg, a.format, "format", "hhmm")?;
    let model = load_model(&a.model)?;
    let q = cfg.pick(a.q, "q", 2 * model.m())?;
    if q == 0 {
        return Err(Error::Config("q must be at least 1".into()));
    }
    let xs = ingest(&a.data, format)?;
    let rows = moment_rows(&xs, &model, q)?;
    let mut w = open_out(None)?;
    write_moment_table(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, cfg: &ConfigFile) -> Result<()> {
    let format: TimeFormat = parse_str(cfg, a.format, "format", "radians")?;
    let n = cfg.pick(a.n, "n", 1000)?;
    let seed = cfg.pick(a.seed, "seed", 0)?;
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let model = load_model(&a.model)?;
    let xs = sample(&model, n, seed)?;
    let mut w = open_out(a.out.as_deref())?;
    write_angles(&xs, format, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_study(a: StudyArgs, cfg: &ConfigFile) -> Result<()> {
    let truth = load_model(&a.truth)?;
    let sizes = parse_sizes(&cfg.pick(a.sizes, "sizes", "50,100,500".to_string())?)?;
    let study = StudyConfig {
        sizes,
        replicates: cfg.pick(a.replicates, "replicates", 200)?,
        seed: cfg.pick(a.seed, "seed", 0)?,
        mmm: cfg.etm_config(a.starts, None, None, Some(0))?,
        em: cfg.em_config()?,
        ..StudyConfig::new(truth)
    };
    let rows = run_study(&study)?;
    let mut w = open_out(a.out.as_deref())?;
    write_study_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Parse { .. } | Error::Io(_) | Error::EmptySample => EXIT_DATA,
        _ => EXIT_NUMERIC,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Fit(a) => cmd_fit(a, &cfg),
        Command::Density(a) => cmd_density(a, &cfg),
        Command::Moments(a) => cmd_moments(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Study(a) => cmd_study(a, &cfg),
    }
}

/// Parses `args`, runs the command, reports errors on stderr, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

//! The `lrp` command line.
//!
//! Every command reads a flat `key=value` configuration (defaults, then the
//! `--config` file, then `--set` pairs, then dedicated flags), validates it,
//! and writes CSV files plus `config.txt` and `manifest.json` into the output
//! directory. Each CSV starts with `# config_hash=<sha256 of config.txt>`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime or resource error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{collapse_report, estimate_phi_coupled, estimate_phi_multi, CollapseConfig, CollapseOffset};
use crate::exponents::{block_index, ratio_report, theta_closed_form, theta_recursive, ExponentTable};
use crate::lattice::{LatticeBox, Vertex};
use crate::limits::{l_limit, lambda_of_t, psi_limit};
use crate::metric::{DistanceField, MetricGraph};
use crate::model::{fmt_f64, kernel_to_string, parse_f64, ModelParams};
use crate::rng::{PhiloxStream, DOMAIN_AUX, GENERATOR_VERSION};
use crate::sampler::{compute_c0, sample_graph_coupled_with, sample_graph_with, C0Method, GraphSample, SamplerConfig};

pub const OUT_DIR_ENV: &str = "LRP_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "lrp-out";

#[derive(Parser, Debug)]
#[command(name = "lrp", version, about = "Long-range percolation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $LRP_OUT_DIR, else ./lrp-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override one configuration key
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    d: Option<String>,
    #[arg(long, global = true)]
    s: Option<String>,
    #[arg(long, global = true)]
    beta: Option<String>,
    #[arg(long, global = true)]
    norm: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    radius: Option<String>,
    #[arg(long, global = true)]
    replicas: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Tables of theta_n, vartheta_n and the ratio suprema
    Exponents,
    /// The large-beta limit curve on a grid of t in [0, 1]
    LimitCurve,
    /// Sample one graph and write its long edges
    Sample,
    /// Chemical distances from a source vertex
    Distances,
    /// Paired distance profiles at beta = 1 and 5 on a line
    Figure1,
    /// Monte Carlo estimates of phi_beta(r)
    EstimatePhi,
    /// Compare (log beta)^Delta psi_beta with the limit curve
    Collapse,
    /// Deterministic invariant checks
    Selfcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Exponents => "exponents",
            Command::LimitCurve => "limit-curve",
            Command::Sample => "sample",
            Command::Distances => "distances",
            Command::Figure1 => "figure1",
            Command::EstimatePhi => "estimate-phi",
            Command::Collapse => "collapse",
            Command::Selfcheck => "selfcheck",
        }
    }

    /// Accepted keys with their defaults.
    fn keys(self) -> &'static [(&'static str, &'static str)] {
        const MODEL: [(&str, &str); 5] = [
            ("d", "1"),
            ("s", "1.5"),
            ("beta", "1"),
            ("norm", "ell2"),
            ("kernel", "canonical"),
        ];
        match self {
            Command::Exponents => &[("d", "1"), ("s", "1.5"), ("n_max", "63"), ("ratio_n_max", "1000")],
            Command::LimitCurve => &[("d", "1"), ("s", "1.5"), ("t_points", "101")],
            Command::Sample => &[
                MODEL[0], MODEL[1], MODEL[2], MODEL[3], MODEL[4],
                ("radius", "100"),
                ("seed", "1"),
                ("memory_cap_mb", "1536"),
            ],
            Command::Distances => &[
                MODEL[0], MODEL[1], MODEL[2], MODEL[3], MODEL[4],
                ("radius", "100"),
                ("seed", "1"),
                ("source", "origin"),
                ("beta2", "none"),
                ("memory_cap_mb", "1536"),
            ],
            Command::Figure1 => &[("seed", "1")],
            Command::EstimatePhi => &[
                MODEL[0], MODEL[1], MODEL[2], MODEL[3], MODEL[4],
                ("radii", "1000"),
                ("betas", "none"),
                ("n_replicas", "32"),
                ("seed", "1"),
                ("memory_cap_mb", "1536"),
            ],
            Command::Collapse => &[
                MODEL[0], MODEL[1], MODEL[3], MODEL[4],
                ("betas", "e^3,e^4"),
                ("t_points", "21"),
                ("n_replicas", "16"),
                ("seed", "1"),
                ("offset", "relative:1"),
                ("max_box_radius", "10000000"),
                ("memory_cap_mb", "1536"),
            ],
            Command::Selfcheck => &[("seed", "1")],
        }
    }
}

/// Validated `key=value` configuration for one command.
#[derive(Clone, Debug)]
pub struct RunConfig {
    command: &'static str,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn f64(&self, key: &str) -> Result<f64> {
        parse_real(key, self.get(key))
    }

    fn int<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("{key}: cannot parse '{}': {e}", self.get(key))))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let raw = self.get(key).trim();
        if raw == "none" {
            return Ok(None);
        }
        let v: Vec<f64> = raw.split(',').map(|p| parse_real(key, p)).collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(Error::Config(format!("{key}: empty list")));
        }
        Ok(Some(v))
    }

    fn params_with_beta(&self, beta: f64) -> Result<ModelParams> {
        let mut kv = BTreeMap::new();
        for k in ["d", "s", "norm", "kernel"] {
            if let Some(v) = self.values.get(k) {
                kv.insert(k.to_string(), v.clone());
            }
        }
        kv.insert("beta".into(), fmt_f64(beta));
        ModelParams::from_kv(&kv).map_err(as_config)
    }

    fn params(&self) -> Result<ModelParams> {
        let beta = if self.values.contains_key("beta") { self.f64("beta")? } else { 1.0 };
        self.params_with_beta(beta)
    }

    fn sampler(&self) -> Result<SamplerConfig> {
        let mb: u64 = self.int("memory_cap_mb")?;
        Ok(SamplerConfig {
            memory_cap_bytes: mb << 20,
            ..SamplerConfig::default()
        })
    }

    /// `command=<name>` followed by the sorted keys, one per line.
    pub fn canonical_text(&self) -> String {
        let mut out = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

/// Reals accept `inf` and `e^x` (meaning `exp(x)`).
fn parse_real(key: &str, s: &str) -> Result<f64> {
    let t = s.trim();
    if let Some(x) = t.strip_prefix("e^") {
        return Ok(parse_f64(key, x)?.exp());
    }
    parse_f64(key, t)
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Param(m) | Error::Range(m) => Error::Config(m),
        other => other,
    }
}

fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let cmd = cli.command;
    let mut values: BTreeMap<String, String> =
        cmd.keys().iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let mut overrides = Vec::new();
    if let Some(path) = &cli.config {
        overrides.extend(read_config_file(path)?);
    }
    for pair in &cli.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{pair}'")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let flags = [
        ("d", &cli.d),
        ("s", &cli.s),
        ("beta", &cli.beta),
        ("norm", &cli.norm),
        ("seed", &cli.seed),
        ("radius", &cli.radius),
        ("n_replicas", &cli.replicas),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            overrides.push((k.to_string(), v.trim().to_string()));
        }
    }
    for (k, v) in overrides {
        if !values.contains_key(&k) {
            return Err(Error::Config(format!("key '{k}' is not used by '{}'", cmd.name())));
        }
        if v.contains('\n') || v.is_empty() {
            return Err(Error::Config(format!("key '{k}' has an empty or multi-line value")));
        }
        values.insert(k, v);
    }
    Ok(RunConfig {
        command: cmd.name(),
        values,
    })
}

/// Files written so far, removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
    created_dir: bool,
}

impl Outputs {
    fn new(dir: PathBuf, hash: String) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            hash,
            written: Vec::new(),
            created_dir,
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        std::fs::write(&path, content)?;
        Ok(())
    }

    /// CSV with the config hash line, optional comment lines and a header row.
    fn csv(&mut self, name: &str, comments: &[String], header: &str, body: &str) -> Result<()> {
        let mut out = format!("# config_hash={}\n", self.hash);
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(header);
        out.push('\n');
        out.push_str(body);
        self.write(name, &out)
    }

    fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    fn discard(self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Param(_) | Error::Range(_) => 2,
        _ => 3,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Param(_) => "param",
        Error::Range(_) => "range",
        Error::Resource(_) => "resource",
        Error::RejectionCap { .. } => "rejection-cap",
        Error::AnnulusTooSmall { .. } => "annulus",
        Error::Check(_) => "check",
        Error::Io(_) => "io",
    }
}

fn report_error(kind: &str, msg: &str) {
    let line: String = msg.split('\n').map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
    let line = line.strip_prefix("config error: ").unwrap_or(&line);
    eprintln!("error[{kind}]: {line}");
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            report_error("config", &e.to_string().replace("error: ", ""));
            return 2;
        }
    };
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            report_error(error_kind(&e), &e.to_string());
            return exit_code(&e);
        }
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            report_error("config", &format!("cannot start {:?} workers: {e}", cli.jobs));
            return 2;
        }
    };
    let result = pool.install(|| execute(cli.command, &config, &out_dir));
    match result {
        Ok(()) => 0,
        Err(e) => {
            report_error(error_kind(&e), &e.to_string());
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command, config: &RunConfig, out_dir: &Path) -> Result<()> {
    let start = Instant::now();
    let job = prepare(cmd, config)?;
    let mut out = Outputs::new(out_dir.to_path_buf(), config.hash())?;
    match job.run(&mut out).and_then(|_| finish(config, &mut out, start)) {
        Ok(()) => Ok(()),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn finish(config: &RunConfig, out: &mut Outputs, start: Instant) -> Result<()> {
    out.write("config.txt", &config.canonical_text())?;
    let mut files = out.names();
    files.push("manifest.json".into());
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = serde_json::json!({
        "command": config.command,
        "config_hash": config.hash(),
        "config": config.values,
        "versions": {
            "lrp": env!("CARGO_PKG_VERSION"),
            "generator": GENERATOR_VERSION,
        },
        "outputs": files,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "timestamp_unix": timestamp,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))?;
    out.write("manifest.json", &(text + "\n"))
}

/// Fully parsed inputs of one command.
enum Job {
    Exponents { params: ModelParams, n_max: usize, ratio_n_max: usize },
    LimitCurve { params: ModelParams, t_points: usize },
    Sample { params: ModelParams, lattice: LatticeBox, seed: u64, sampler: SamplerConfig },
    Distances {
        levels: Vec<ModelParams>,
        lattice: LatticeBox,
        seed: u64,
        source: Vertex,
        sampler: SamplerConfig,
    },
    Figure1 { seed: u64 },
    EstimatePhi {
        params: ModelParams,
        radii: Vec<f64>,
        betas: Option<Vec<f64>>,
        n_replicas: usize,
        seed: u64,
        sampler: SamplerConfig,
    },
    Collapse {
        levels: Vec<ModelParams>,
        t_grid: Vec<f64>,
        n_replicas: usize,
        seed: u64,
        cfg: CollapseConfig,
    },
    Selfcheck { seed: u64 },
}

fn grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Config("t_points must be at least 2".into()));
    }
    Ok((0..points).map(|i| i as f64 / (points - 1) as f64).collect())
}

fn positive_count(config: &RunConfig, key: &str) -> Result<usize> {
    let n: usize = config.int(key)?;
    if n == 0 {
        return Err(Error::Config(format!("{key} must be positive")));
    }
    Ok(n)
}

fn prepare(cmd: Command, c: &RunConfig) -> Result<Job> {
    let lattice = |p: &ModelParams| -> Result<LatticeBox> { LatticeBox::new(p.d(), c.int("radius")?).map_err(as_config) };
    Ok(match cmd {
        Command::Exponents => {
            let n_max = positive_count(c, "n_max")?;
            let ratio_n_max = positive_count(c, "ratio_n_max")?;
            if ratio_n_max < 2 {
                return Err(Error::Config("ratio_n_max must be at least 2".into()));
            }
            Job::Exponents { params: c.params()?, n_max, ratio_n_max }
        }
        Command::LimitCurve => Job::LimitCurve {
            params: c.params()?,
            t_points: grid(positive_count(c, "t_points")?)?.len(),
        },
        Command::Sample => {
            let params = c.params()?;
            Job::Sample {
                lattice: lattice(&params)?,
                params,
                seed: c.int("seed")?,
                sampler: c.sampler()?,
            }
        }
        Command::Distances => {
            let params = c.params()?;
            let lattice = lattice(&params)?;
            let source = match c.get("source").trim() {
                "origin" => lattice.origin(),
                s => {
                    let x: Vec<i64> = s
                        .split(',')
                        .map(|p| p.trim().parse::<i64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Config(format!("source: {e}")))?;
                    lattice
                        .index(&x)
                        .ok_or_else(|| Error::Config(format!("source {s} is not a box vertex")))?
                }
            };
            let mut levels = vec![params.clone()];
            if c.get("beta2").trim() != "none" {
                let b2 = c.f64("beta2")?;
                if b2 < params.beta() {
                    return Err(Error::Config("beta2 must be at least beta".into()));
                }
                levels.push(c.params_with_beta(b2)?);
            }
            Job::Distances {
                levels,
                lattice,
                seed: c.int("seed")?,
                source,
                sampler: c.sampler()?,
            }
        }
        Command::Figure1 => Job::Figure1 { seed: c.int("seed")? },
        Command::EstimatePhi => {
            let params = c.params()?;
            let radii = c.list("radii")?.ok_or_else(|| Error::Config("radii required".into()))?;
            for &r in &radii {
                crate::estimator::box_radius_for(r).map_err(as_config)?;
            }
            let betas = c.list("betas")?;
            if let Some(b) = &betas {
                if b.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Config("betas must be non-decreasing".into()));
                }
                for &x in b {
                    c.params_with_beta(x)?;
                }
            }
            Job::EstimatePhi {
                params,
                radii,
                betas,
                n_replicas: positive_count(c, "n_replicas")?,
                seed: c.int("seed")?,
                sampler: c.sampler()?,
            }
        }
        Command::Collapse => {
            let betas = c.list("betas")?.ok_or_else(|| Error::Config("betas required".into()))?;
            let levels: Vec<ModelParams> = betas.iter().map(|&b| c.params_with_beta(b)).collect::<Result<_>>()?;
            if betas.iter().any(|&b| b <= std::f64::consts::E) {
                return Err(Error::Config("collapse requires every beta > e".into()));
            }
            if betas.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Config("betas must be non-decreasing".into()));
            }
            Job::Collapse {
                levels,
                t_grid: grid(positive_count(c, "t_points")?)?,
                n_replicas: positive_count(c, "n_replicas")?,
                seed: c.int("seed")?,
                cfg: CollapseConfig {
                    offset: c.get("offset").parse::<CollapseOffset>()?,
                    max_box_radius: c.int("max_box_radius")?,
                    sampler: c.sampler()?,
                },
            }
        }
        Command::Selfcheck => Job::Selfcheck { seed: c.int("seed")? },
    })
}

fn params_comment(p: &ModelParams) -> String {
    format!(
        "d={} s={} beta={} norm={} kernel={} gamma={} Delta={}",
        p.d(),
        fmt_f64(p.s()),
        fmt_f64(p.beta()),
        p.norm(),
        kernel_to_string(p.kernel()),
        fmt_f64(p.gamma()),
        fmt_f64(p.delta())
    )
}

fn coord_names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

fn join_coords(out: &mut String, c: &[i64]) {
    for (i, x) in c.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x}");
    }
}

fn edges_body(g: &GraphSample) -> String {
    let mut body = String::new();
    for (a, b) in g.edge_coords() {
        join_coords(&mut body, &a);
        body.push(',');
        join_coords(&mut body, &b);
        body.push('\n');
    }
    body
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

impl Job {
    fn run(self, out: &mut Outputs) -> Result<()> {
        match self {
            Job::Exponents { params, n_max, ratio_n_max } => {
                let table = ExponentTable::new(&params, n_max.max(2));
                let mut body = String::new();
                for n in 0..=n_max {
                    let _ = writeln!(
                        body,
                        "{n},{},{},{},{}",
                        fmt_f64(table.theta[n]),
                        fmt_f64(theta_closed_form(&params, n as u64)),
                        fmt_f64(table.vartheta[n]),
                        block_index(n as u64)
                    );
                }
                out.csv(
                    "exponents.csv",
                    &[params_comment(&params), "columns: n, theta_n (recursion), theta_n (closed form), vartheta_n, block index floor(log2(n+1))".into()],
                    "n,theta,theta_closed_form,vartheta,block_index",
                    &body,
                )?;
                let r = ratio_report(&params, ratio_n_max);
                let g = params.gamma();
                let body = format!(
                    "vartheta_ceil_half_over_next,{},{},{}\n\
                     theta_ceil_half_over_next,{},{},{}\n\
                     theta_ratio_dyadic_tail,{},,{}\n\
                     vartheta_over_theta,{},{},{}\n",
                    fmt_f64(r.vartheta_ratio.0),
                    r.vartheta_ratio.1,
                    fmt_f64(2.0 * g / (1.0 + g)),
                    fmt_f64(r.theta_ratio.0),
                    r.theta_ratio.1,
                    fmt_f64(g),
                    fmt_f64(r.theta_ratio_dyadic_tail),
                    fmt_f64(g),
                    fmt_f64(r.vartheta_over_theta.0),
                    r.vartheta_over_theta.1,
                    fmt_f64((table.vartheta[1] / table.theta[1]).max(table.vartheta[2] / table.theta[2])),
                );
                out.csv(
                    "ratios.csv",
                    &[format!("suprema over n < {ratio_n_max}; reference is the stated supremum")],
                    "quantity,value,argmax_n,reference",
                    &body,
                )
            }
            Job::LimitCurve { params, t_points } => {
                let mut body = String::new();
                for t in grid(t_points)? {
                    let _ = writeln!(
                        body,
                        "{},{},{},{}",
                        fmt_f64(t),
                        fmt_f64(psi_limit(&params, t)?),
                        fmt_f64(l_limit(&params, t)?),
                        fmt_f64(lambda_of_t(&params, t))
                    );
                }
                out.csv(
                    "limit_curve.csv",
                    &[
                        params_comment(&params),
                        "psi_limit(t) = [s/(2d-s) (2 gamma)^-t - 2 (s-d)/(2d-s) 2^-t] (2d-s)^Delta".into(),
                        "L_limit(t) = 2^t psi_limit(t): the limit of (log r)^Delta phi(r) at log r = gamma^-t (u shift not applied)".into(),
                    ],
                    "t,psi_limit,L_limit,lambda",
                    &body,
                )
            }
            Job::Sample { params, lattice, seed, sampler } => {
                let g = sample_graph_with(&params, &lattice, seed, &sampler)?;
                let d = params.d();
                let header = [coord_names("x", d), coord_names("y", d)].concat().join(",");
                out.csv(
                    "edges.csv",
                    &[
                        params_comment(&params),
                        format!("box_radius={} seed={seed} generator={GENERATOR_VERSION}", lattice.radius()),
                        format!("long_edges={} (nearest-neighbour edges implicit)", g.long_edges.len()),
                    ],
                    &header,
                    &edges_body(&g),
                )
            }
            Job::Distances { levels, lattice, seed, source, sampler } => {
                let samples = sample_graph_coupled_with(&levels, &lattice, seed, &sampler)?;
                let fields: Vec<DistanceField> = samples
                    .iter()
                    .map(|g| MetricGraph::new(g).distances_from(source))
                    .collect::<Result<_>>()?;
                let d = lattice.d();
                let mut header = coord_names("x", d);
                header.push("dist".into());
                if levels.len() > 1 {
                    header.push("dist_beta2".into());
                }
                let mut body = String::new();
                let mut x = vec![0i64; d];
                for v in 0..lattice.len() {
                    lattice.coords_into(v as Vertex, &mut x);
                    join_coords(&mut body, &x);
                    for f in &fields {
                        let _ = write!(body, ",{}", f.dist[v]);
                    }
                    body.push('\n');
                }
                let mut comments = vec![params_comment(&levels[0])];
                if levels.len() > 1 {
                    comments.push(format!("beta2={} (coupled, same seed)", fmt_f64(levels[1].beta())));
                }
                comments.push(format!(
                    "box_radius={} seed={seed} source={:?} generator={GENERATOR_VERSION}",
                    lattice.radius(),
                    lattice.coords(source)
                ));
                out.csv("distances.csv", &comments, &header.join(","), &body)
            }
            Job::Figure1 { seed } => {
                let (low, high) = figure1_samples(seed)?;
                let lattice = low.lattice;
                let source = lattice.index(&[0]).unwrap();
                let f_low = MetricGraph::new(&low).distances_from(source)?;
                let f_high = MetricGraph::new(&high).distances_from(source)?;
                let mut body = String::new();
                for x in 0..=FIGURE1_LENGTH as i64 {
                    let v = lattice.index(&[x]).unwrap() as usize;
                    let _ = writeln!(body, "{x},{},{}", f_low.dist[v], f_high.dist[v]);
                }
                let comment = vec![
                    format!("d=1 s=1.5 points 0..={FIGURE1_LENGTH} with source 0, box [-{0}, {0}], seed={seed}", FIGURE1_LENGTH),
                    "beta=1 and beta=5 are coupled: every beta=1 edge is a beta=5 edge".into(),
                ];
                out.csv("figure1_distances.csv", &comment, "x,dist_beta1,dist_beta5", &body)?;
                for (g, name) in [(&low, "figure1_edges_beta1.csv"), (&high, "figure1_edges_beta5.csv")] {
                    let mut body = String::new();
                    for (a, b) in g.edge_coords() {
                        if a[0] >= 0 && b[0] >= 0 {
                            let _ = writeln!(body, "{},{}", a[0], b[0]);
                        }
                    }
                    out.csv(
                        name,
                        &[format!("long edges with both endpoints in 0..={FIGURE1_LENGTH} (arcs), beta={}", fmt_f64(g.params.beta()))],
                        "x,y",
                        &body,
                    )?;
                }
                Ok(())
            }
            Job::EstimatePhi { params, radii, betas, n_replicas, seed, sampler } => {
                let estimates = match &betas {
                    None => estimate_phi_multi(&params, &radii, n_replicas, seed, &sampler)?,
                    Some(bs) => {
                        let levels: Vec<ModelParams> = bs.iter().map(|&b| params.with_beta(b)).collect::<Result<_>>()?;
                        let mut all = Vec::new();
                        for &r in &radii {
                            all.extend(estimate_phi_coupled(&levels, r, n_replicas, seed, &sampler)?);
                        }
                        all
                    }
                };
                let mut reps = String::new();
                let mut summary = String::new();
                for e in &estimates {
                    let beta = fmt_f64(e.record.params.beta());
                    for (i, r) in e.replicas.iter().enumerate() {
                        let _ = writeln!(
                            reps,
                            "{beta},{},{i},{},{},{},{}",
                            fmt_f64(r.r),
                            r.seed,
                            fmt_f64(r.phi_hat),
                            r.n_points,
                            fmt_f64(r.annulus_fraction)
                        );
                    }
                    let _ = writeln!(
                        summary,
                        "{beta},{},{},{},{},{}",
                        fmt_f64(e.record.r),
                        e.replicas.len(),
                        fmt_f64(e.record.phi_hat),
                        fmt_f64(e.ci.lo),
                        fmt_f64(e.ci.hi)
                    );
                }
                let comments = vec![
                    params_comment(&params),
                    "phi_hat = median of D(0,x) over 0.1 r <= |x| < r divided by (ln r)^Delta".into(),
                ];
                out.csv(
                    "phi_replicas.csv",
                    &comments,
                    "beta,r,replica,seed,phi_hat,n_points,annulus_fraction",
                    &reps,
                )?;
                out.csv(
                    "phi_summary.csv",
                    &[comments[0].clone(), "mean over replicas with 95% percentile bootstrap interval (1000 resamples)".into()],
                    "beta,r,n_replicas,phi_hat,ci_lo,ci_hi",
                    &summary,
                )
            }
            Job::Collapse { levels, t_grid, n_replicas, seed, cfg } => {
                let rep = collapse_report(&levels, &t_grid, n_replicas, seed, &cfg)?;
                let mut cells = String::new();
                let mut reps = String::new();
                let mut summary = String::new();
                for row in &rep.rows {
                    let beta = fmt_f64(row.beta);
                    for (c, &t) in rep.t_grid.iter().enumerate() {
                        let ci = row.empirical_ci[c];
                        let _ = writeln!(
                            cells,
                            "{beta},{},{},{},{},{},{},{}",
                            fmt_f64(t),
                            fmt_f64(row.radii[c]),
                            opt(row.empirical[c]),
                            opt(ci.map(|i| i.lo)),
                            opt(ci.map(|i| i.hi)),
                            fmt_f64(rep.limit[c]),
                            opt(row.empirical[c].map(|e| (e - rep.limit[c]).abs()))
                        );
                        for (i, vals) in row.replica_values.iter().enumerate() {
                            let _ = writeln!(reps, "{beta},{},{i},{}", fmt_f64(t), opt(vals[c]));
                        }
                    }
                    let _ = writeln!(
                        summary,
                        "{beta},{},{},{},{},{},{},{},{}",
                        row.phase.m,
                        fmt_f64(row.phase.u),
                        row.offset,
                        fmt_f64(row.mean_abs_discrepancy),
                        fmt_f64(row.mean_abs_discrepancy_ci.lo),
                        fmt_f64(row.mean_abs_discrepancy_ci.hi),
                        fmt_f64(row.max_abs_discrepancy),
                        fmt_f64(row.rank_correlation)
                    );
                }
                let comments = vec![
                    params_comment(&levels[0]),
                    format!(
                        "radius(t) = exp(gamma^-t u(beta)/(2d-s) gamma^-k), k from offset {} (k = m(beta) + j for relative:j)",
                        cfg.offset
                    ),
                    "empirical = (log beta)^Delta * mean phi_hat; NA marks cells whose box would exceed max_box_radius".into(),
                ];
                out.csv(
                    "collapse.csv",
                    &comments,
                    "beta,t,radius,empirical,ci_lo,ci_hi,psi_limit,abs_discrepancy",
                    &cells,
                )?;
                out.csv("collapse_replicas.csv", &comments[..1], "beta,t,replica,value", &reps)?;
                let mut paired = String::new();
                for (j, ci) in rep.paired_difference_ci.iter().enumerate() {
                    let _ = writeln!(
                        paired,
                        "{},{},{},{}",
                        fmt_f64(rep.rows[j].beta),
                        fmt_f64(rep.rows[j + 1].beta),
                        fmt_f64(ci.lo),
                        fmt_f64(ci.hi)
                    );
                }
                out.csv(
                    "collapse_summary.csv",
                    &[comments[0].clone(), format!("{n_replicas} replicas, 95% percentile bootstrap intervals")],
                    "beta,m,u,offset_k,mean_abs_discrepancy,ci_lo,ci_hi,max_abs_discrepancy,spearman",
                    &summary,
                )?;
                out.csv(
                    "collapse_paired.csv",
                    &["interval for mean_abs(beta_hi) - mean_abs(beta_lo) over shared replicas".into()],
                    "beta_lo,beta_hi,ci_lo,ci_hi",
                    &paired,
                )
            }
            Job::Selfcheck { seed } => {
                let checks = selfcheck(seed)?;
                let mut body = String::new();
                let mut failed = Vec::new();
                for (name, ok, detail) in &checks {
                    let _ = writeln!(body, "{name},{},{detail}", if *ok { "pass" } else { "fail" });
                    if !ok {
                        failed.push(name.clone());
                    }
                }
                out.csv("selfcheck.csv", &[], "check,status,detail", &body)?;
                if failed.is_empty() {
                    Ok(())
                } else {
                    Err(Error::Check(failed.join(" ")))
                }
            }
        }
    }
}

pub const FIGURE1_LENGTH: u32 = 2000;

/// The coupled `beta = 1` and `beta = 5` samples behind `figure1`.
pub fn figure1_samples(seed: u64) -> Result<(GraphSample, GraphSample)> {
    let lattice = LatticeBox::new(1, FIGURE1_LENGTH)?;
    let levels = [
        ModelParams::canonical(1, 1.5, 1.0)?,
        ModelParams::canonical(1, 1.5, 5.0)?,
    ];
    let mut s = sample_graph_coupled_with(&levels, &lattice, seed, &SamplerConfig::default())?;
    let high = s.pop().unwrap();
    let low = s.pop().unwrap();
    Ok((low, high))
}

/// Floyd-Warshall over all vertices including nearest-neighbour edges.
fn all_pairs(lattice: &LatticeBox, edges: &[(Vertex, Vertex)]) -> Vec<Vec<u32>> {
    let n = lattice.len();
    let inf = u32::MAX / 4;
    let mut m = vec![vec![inf; n]; n];
    for (v, row) in m.iter_mut().enumerate() {
        row[v] = 0;
    }
    for v in 0..n {
        let x = lattice.coords(v as Vertex);
        for w in 0..n {
            let y = lattice.coords(w as Vertex);
            if x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<i64>() == 1 {
                m[v][w] = 1;
            }
        }
    }
    for &(a, b) in edges {
        m[a as usize][b as usize] = 1;
        m[b as usize][a as usize] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = m[i][k] + m[k][j];
                if via < m[i][j] {
                    m[i][j] = via;
                }
            }
        }
    }
    m
}

/// `(name, passed, detail)` for each deterministic invariant.
pub fn selfcheck(seed: u64) -> Result<Vec<(String, bool, String)>> {
    let mut out = Vec::new();
    let mut push = |name: &str, ok: bool, detail: String| out.push((name.to_string(), ok, detail));

    let mut worst = 0.0f64;
    for (d, s) in [(1, 1.5), (1, 1.9), (2, 3.0), (3, 4.5)] {
        let p = ModelParams::canonical(d, s, 1.0)?;
        let a = theta_recursive(&p, 255);
        let t = ExponentTable::new(&p, 4095);
        for n in 1..=4095usize {
            let c = theta_closed_form(&p, n as u64);
            worst = worst.max((t.theta[n] - c).abs() / c);
            if n <= 255 {
                worst = worst.max((a[n] - c).abs() / c);
            }
        }
    }
    push("theta_identities", worst <= 1e-12, format!("max relative error {}", fmt_f64(worst)));

    let mut worst = 0.0f64;
    for (d, s) in [(1, 1.5), (1, 1.9), (2, 3.0), (3, 4.5)] {
        let p = ModelParams::canonical(d, s, 1.0)?;
        let target = p.gap().powf(p.delta());
        worst = worst.max((psi_limit(&p, 0.0)? - target).abs());
        worst = worst.max((psi_limit(&p, 1.0)? - target).abs());
    }
    push("limit_curve_endpoints", worst <= 1e-12, format!("max deviation {}", fmt_f64(worst)));

    let p = ModelParams::canonical(1, 1.5, 1.0)?;
    let c0 = compute_c0(&p, C0Method::Quadrature, 1_000_000, seed)?;
    let rel = (c0.value - std::f64::consts::PI).abs() / std::f64::consts::PI;
    push("c0_quadrature", rel <= 1e-3, format!("c0={} relative error {}", fmt_f64(c0.value), fmt_f64(rel)));

    let mut rng = PhiloxStream::for_domain(seed, DOMAIN_AUX, 0x5C);
    let mut mismatches = 0usize;
    let trials = 200;
    for trial in 0..trials {
        let d = 1 + trial % 2;
        let radius = if d == 1 { 1 + rng.below(40) as u32 } else { 1 + rng.below(5) as u32 };
        let lattice = LatticeBox::new(d, radius)?;
        let n = lattice.len() as u64;
        let m = rng.below(2 * n);
        let edges: Vec<(Vertex, Vertex)> = (0..m)
            .map(|_| (rng.below(n) as Vertex, rng.below(n) as Vertex))
            .filter(|(a, b)| a != b)
            .collect();
        let g = GraphSample::from_edges(ModelParams::canonical(d, 1.5 * d as f64, 1.0)?, lattice, 0, edges)?;
        let oracle = all_pairs(&lattice, &g.long_edges);
        let mg = MetricGraph::new(&g);
        for src in 0..n as usize {
            if mg.distances_from(src as Vertex)?.dist != oracle[src] {
                mismatches += 1;
            }
        }
    }
    push("bfs_oracle", mismatches == 0, format!("{trials} graphs, {mismatches} mismatching sources"));
    Ok(out)
}

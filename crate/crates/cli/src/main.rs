use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gauss_edf::fdr::run_fdp_experiment;
use gauss_edf::mc::{run_edf_experiment, run_limit_experiment};
use gauss_edf::{
    DiagnoseConfig, ExperimentConfig, FdpExperimentConfig, Figure1Config, Figure2Config,
    LimitExperimentConfig, McSummary,
};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gauss-edf", version, about = "Correlated Gaussian e.d.f. diagnostics and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regime diagnostics of a correlation model over a dimension grid.
    Diagnose(Common),
    /// Monte Carlo of the rescaled (or modified) e.d.f. process.
    EdfSim(Common),
    /// Monte Carlo of the limit process.
    LimitSim(Common),
    /// FDP of Benjamini-Hochberg under the two-group model.
    FdpSim(Common),
    /// Equi-correlated path panels (config optional).
    Figure1(Common),
    /// Three-factor FDP distribution panels (config optional).
    Figure2(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<gauss_edf::Error> for Failure {
    fn from(e: gauss_edf::Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Diagnose(c) => cmd_diagnose(c),
        Command::EdfSim(c) => cmd_edf_sim(c),
        Command::LimitSim(c) => cmd_limit_sim(c),
        Command::FdpSim(c) => cmd_fdp_sim(c),
        Command::Figure1(c) => cmd_figure1(c),
        Command::Figure2(c) => cmd_figure2(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

impl Common {
    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn read_config(&self) -> Result<Option<Vec<u8>>, Failure> {
        match &self.config {
            None => Ok(None),
            Some(p) => fs::read(p)
                .map(Some)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display()))),
        }
    }

    fn require_config(&self) -> Result<Vec<u8>, Failure> {
        self.read_config()?
            .ok_or_else(|| Failure::Config("this command needs --config".into()))
    }

    fn out_dir(&self) -> Result<Output, Failure> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Config(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(Output {
            dir: self.out.clone(),
        })
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn write(&self, name: &str, text: &str) -> CmdResult {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> CmdResult {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn csv(&self, name: &str, header: &[String], body: &str) -> CmdResult {
        let mut text = String::new();
        for h in header {
            text.push_str("# ");
            text.push_str(h);
            text.push('\n');
        }
        text.push_str(body);
        self.write(name, &text)
    }
}

/// Comment lines carrying the resolved configuration and seed.
fn provenance<T: Serialize>(config: &T, seed: Option<u64>) -> Vec<String> {
    let cfg = serde_json::to_string(config).expect("configs serialize");
    vec![
        format!("config: {cfg}"),
        format!("seed: {}", seed.map_or("none".to_string(), |s| s.to_string())),
    ]
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("values serialize")
}

fn cmd_diagnose(c: &Common) -> CmdResult {
    let cfg = DiagnoseConfig::from_json_slice(&c.require_config()?)?;
    let reports = cfg.run()?;
    let out = c.out_dir()?;
    let header = provenance(&cfg, None);
    out.json(
        "diagnose.json",
        &json!({ "schema": cfg.schema, "seed": Value::Null, "config": cfg, "reports": reports }),
    )?;
    let mut table = String::new();
    let mut regimes = String::from("model,regime,theta_estimate,m_gamma_last\n");
    for (i, r) in reports.iter().enumerate() {
        let csv = r.to_csv();
        let mut lines = csv.lines();
        let head = lines.next().unwrap_or_default();
        if i == 0 {
            table.push_str(&format!("model,{head}\n"));
        }
        for l in lines {
            table.push_str(&format!("{i},{l}\n"));
        }
        let theta = r.theta_estimate.map(|t| t.to_string()).unwrap_or_default();
        let last = r.reports.last().map(|d| d.m_gamma.to_string()).unwrap_or_default();
        regimes.push_str(&format!("{i},{},{theta},{last}\n", r.regime.as_str()));
    }
    out.csv("conditions.csv", &header, &table)?;
    out.csv("regimes.csv", &header, &regimes)
}

fn summary_outputs(out: &Output, s: &McSummary) -> CmdResult {
    out.write("summary.json", &s.to_json()?)?;
    let header = provenance(&s.config, Some(s.master_seed));
    let mut mv = String::from("t,mean,variance\n");
    for ((t, m), v) in s.grid.iter().zip(&s.mean).zip(&s.variance) {
        mv.push_str(&format!("{t},{m},{v}\n"));
    }
    out.csv("moments.csv", &header, &mv)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut pairs = String::from("t,s,cov,se,target,z\n");
    for p in &s.pairs {
        pairs.push_str(&format!("{},{},{},{},{},{}\n", p.t, p.s, p.cov, p.se, opt(p.target), opt(p.z)));
    }
    out.csv("pairs.csv", &header, &pairs)
}

fn cmd_edf_sim(c: &Common) -> CmdResult {
    let mut cfg: ExperimentConfig = ExperimentConfig::from_json_slice(&c.require_config()?)?;
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    let s = run_edf_experiment(&cfg, c.workers())?;
    summary_outputs(&c.out_dir()?, &s)
}

fn cmd_limit_sim(c: &Common) -> CmdResult {
    let mut cfg = LimitExperimentConfig::from_json_slice(&c.require_config()?)?;
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    let s = run_limit_experiment(&cfg, c.workers())?;
    summary_outputs(&c.out_dir()?, &s)
}

fn cmd_fdp_sim(c: &Common) -> CmdResult {
    let mut cfg = FdpExperimentConfig::from_json_slice(&c.require_config()?)?;
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    let e = run_fdp_experiment(&cfg, c.workers())?;
    let out = c.out_dir()?;
    let header = provenance(&cfg, Some(cfg.master_seed));
    out.json("fdp.json", &e)?;
    out.csv("samples.csv", &header, &e.samples_csv())?;
    out.csv("histogram.csv", &header, &e.histogram_csv())
}

fn cmd_figure1(c: &Common) -> CmdResult {
    let mut cfg = match c.read_config()? {
        Some(bytes) => Figure1Config::from_json_slice(&bytes)?,
        None => Figure1Config::default(),
    };
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    let panels = cfg.run()?;
    let out = c.out_dir()?;
    let mut files = Vec::new();
    for p in &panels {
        let name = format!("figure1_mgamma_{}.csv", p.m_gamma_target);
        let mut header = provenance(&cfg, Some(cfg.master_seed));
        header.push(format!("m_gamma_target: {}", p.m_gamma_target));
        header.push(format!("rho: {}", p.rho));
        out.write(&name, &p.path.to_csv_string(&header))?;
        files.push(json!({ "file": name, "m_gamma_target": p.m_gamma_target, "rho": p.rho }));
    }
    out.json(
        "manifest.json",
        &json!({
            "schema": cfg.schema,
            "command": "figure1",
            "master_seed": cfg.master_seed,
            "config": cfg,
            "files": files,
        }),
    )
}

fn cmd_figure2(c: &Common) -> CmdResult {
    let mut cfg = match c.read_config()? {
        Some(bytes) => Figure2Config::from_json_slice(&bytes)?,
        None => Figure2Config::default(),
    };
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    let out = c.out_dir()?;
    let workers = c.workers();
    let mut panels = Vec::new();
    let mut files = Vec::new();
    for (exp, &m_rho) in cfg.experiments().iter().zip(&cfg.m_rho) {
        let e = run_fdp_experiment(exp, workers)?;
        let mut header = provenance(&cfg, Some(cfg.master_seed));
        header.push(format!("m_rho: {m_rho}"));
        let hist = format!("figure2_mrho_{m_rho}_histogram.csv");
        let samples = format!("figure2_mrho_{m_rho}_samples.csv");
        out.csv(&hist, &header, &e.histogram_csv())?;
        out.csv(&samples, &header, &e.samples_csv())?;
        files.push(json!({ "m_rho": m_rho, "histogram": hist, "samples": samples }));
        panels.push(json!({
            "m_rho": m_rho,
            "experiment": exp,
            "gamma_m": e.gamma_m,
            "approximation": e.approx,
            "approximation_error": e.approx_error,
            "empirical": {
                "mean": e.mean,
                "sd": e.sd,
                "se_mean": e.se_mean,
                "se_sd": e.se_sd,
                "ks_distance": e.ks_distance,
            },
        }));
    }
    out.json(
        "figure2_approximation.json",
        &json!({
            "schema": cfg.schema,
            "master_seed": cfg.master_seed,
            "config": to_value(&cfg),
            "panels": panels,
        }),
    )?;
    files.push(json!({ "approximation": "figure2_approximation.json" }));
    out.json(
        "manifest.json",
        &json!({
            "schema": cfg.schema,
            "command": "figure2",
            "master_seed": cfg.master_seed,
            "config": cfg,
            "files": files,
        }),
    )
}

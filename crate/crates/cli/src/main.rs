use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aprfm::experiment::{
    error_vs_dof, error_vs_dof_csv, plot_csv, run, run_csv, sweep, sweep_csv, to_json, write_text, PlotKind,
    RunConfig, RunReport, Table,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aprfm", version, about = "Random feature solvers for multiscale radiative transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and report its error.
    Run(Common),
    /// Reproduce one of the convergence tables T1..T6.
    Sweep {
        #[arg(long, default_value = "T1")]
        table: String,
        #[command(flatten)]
        common: Common,
    },
    /// Emit plot-ready CSV: heatmap-f, heatmap-rho or error-vs-dof.
    Plotdata {
        #[arg(long, default_value = "heatmap-rho")]
        kind: String,
        #[command(flatten)]
        common: Common,
    },
}

/// Flags shared by every subcommand. Values are kept as text and fed through the
/// same parser as the config file so both paths agree.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<String>,
    /// Number, or `profile` for the variable-scale problem.
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long)]
    j: Option<String>,
    #[arg(long)]
    jrho: Option<String>,
    #[arg(long)]
    jg: Option<String>,
    #[arg(long)]
    mx: Option<String>,
    #[arg(long)]
    mx1: Option<String>,
    #[arg(long)]
    mx2: Option<String>,
    #[arg(long)]
    mv: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    nx1: Option<String>,
    #[arg(long)]
    nx2: Option<String>,
    #[arg(long)]
    nv: Option<String>,
    #[arg(long)]
    nq: Option<String>,
    #[arg(long)]
    b_range: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    pou: Option<String>,
    #[arg(long)]
    rank_tol: Option<String>,
    /// `svd` (default) or `qr`.
    #[arg(long)]
    solver: Option<String>,
    /// Append one zero-mean row per spatial point for the `g` model.
    #[arg(long)]
    zero_mean: Option<String>,
    /// Odd refinement factor of the upwind reference solver.
    #[arg(long)]
    fdm_refine: Option<String>,
    /// Write the rescaled linear system to this binary file.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Output stem; `<out>.json` and `<out>.csv` are written.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> aprfm::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_config_file(p)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, &Option<String>); 24] = [
            ("problem", &self.problem),
            ("method", &self.method),
            ("epsilon", &self.epsilon),
            ("j", &self.j),
            ("jrho", &self.jrho),
            ("jg", &self.jg),
            ("mx", &self.mx),
            ("mx1", &self.mx1),
            ("mx2", &self.mx2),
            ("mv", &self.mv),
            ("nx", &self.nx),
            ("nx1", &self.nx1),
            ("nx2", &self.nx2),
            ("nv", &self.nv),
            ("nq", &self.nq),
            ("b-range", &self.b_range),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("activation", &self.activation),
            ("pou", &self.pou),
            ("rank-tol", &self.rank_tol),
            ("solver", &self.solver),
            ("zero-mean", &self.zero_mean),
            ("fdm-refine", &self.fdm_refine),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(p) = &self.dump {
            cfg.dump = Some(p.display().to_string());
        }
        if let Some(p) = &self.out {
            cfg.out = Some(p.display().to_string());
        }
        Ok(cfg)
    }
}

fn out_stem(cfg: &RunConfig, fallback: &str) -> PathBuf {
    PathBuf::from(cfg.out.clone().unwrap_or_else(|| fallback.to_string()))
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn log_stages(r: &RunReport) {
    let t = &r.timings;
    eprintln!(
        "{} {} Z={} N={} | assemble {:.2}s solve {:.2}s eval {:.2}s reference {:.2}s total {:.2}s | error {:.3e} rank {} cond {:.2e}",
        r.config.problem,
        r.config.method,
        r.z,
        r.n,
        t.assembly,
        t.solve,
        t.evaluation,
        t.reference,
        t.total,
        r.error,
        r.rank,
        r.condition_estimate
    );
}

fn execute(cli: Cli) -> aprfm::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let stem = out_stem(&cfg, &format!("{}_{}", cfg.problem, cfg.method));
            let out = run(&cfg)?;
            log_stages(&out.report);
            write_text(&with_ext(&stem, "json"), &to_json(&out.report)?)?;
            write_text(&with_ext(&stem, "csv"), &run_csv(&out))?;
        }
        Command::Sweep { table, common } => {
            let table: Table = table.parse()?;
            let cfg = common.resolve()?;
            let stem = out_stem(&cfg, &format!("sweep_{table}"));
            let rows = sweep(table, &cfg)?;
            for r in &rows {
                let eps = r.epsilon.map_or("profile".to_string(), |e| format!("{e:e}"));
                eprintln!("{} eps={eps} {}: mean error {:.3e}", r.table, r.setting, r.mean_error);
            }
            write_text(&with_ext(&stem, "json"), &to_json(&rows)?)?;
            write_text(&with_ext(&stem, "csv"), &sweep_csv(&rows))?;
        }
        Command::Plotdata { kind, common } => {
            let kind: PlotKind = kind.parse()?;
            let cfg = common.resolve()?;
            let stem = out_stem(&cfg, &format!("plot_{}_{}", cfg.problem, cfg.method));
            if kind == PlotKind::ErrorVsDof {
                let rows = error_vs_dof(&cfg)?;
                write_text(&with_ext(&stem, "json"), &to_json(&rows)?)?;
                write_text(&with_ext(&stem, "csv"), &error_vs_dof_csv(&rows))?;
            } else {
                let out = run(&cfg)?;
                log_stages(&out.report);
                write_text(&with_ext(&stem, "json"), &to_json(&out.report)?)?;
                write_text(&with_ext(&stem, "csv"), &plot_csv(&out, kind))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("APRFM_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        if n > 0 {
            // only fails if a pool already exists, which cannot happen this early
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.name(), e);
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}


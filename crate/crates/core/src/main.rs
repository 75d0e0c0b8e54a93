use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evtrig::analysis::{fit_decay, gramian_check};
use evtrig::estimator::RunOptions;
use evtrig::harness::{export, run_comparison, run_experiment, simulate, ExperimentConfig, HarnessError};
use evtrig::seeding::run_seed;
use evtrig::sensing::check_schedules;

#[derive(Parser, Debug)]
#[command(name = "evtrig", version, about = "Event-triggered distributed estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config `output.dir`, then `out`).
    #[arg(long, global = true, env = "EVTRIG_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one run and write its trace.
    Run { config: PathBuf },
    /// Run the configured number of runs and write aggregates.
    Montecarlo { config: PathBuf },
    /// Report graph predicates, observability and schedule conditions.
    Check {
        config: PathBuf,
        /// Print `key=value` lines instead of the text report.
        #[arg(long)]
        kv: bool,
    },
    /// Run each config's algorithm and alternatives and tabulate them.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Fit a power-law decay exponent to a CSV column.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        col: String,
        /// Fit window `t1,t2`.
        #[arg(long, value_parser = parse_window)]
        window: (u64, u64),
    },
}

fn parse_window(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `t1,t2`")?;
    let a = a.trim().parse::<u64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<u64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

struct Ctx {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    quiet: bool,
}

impl Ctx {
    fn load(&self, path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.build()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: Option<&ExperimentConfig>) -> PathBuf {
        self.out_dir.clone().or_else(|| cfg.and_then(|c| c.output.dir.clone())).unwrap_or_else(|| PathBuf::from("out"))
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |v| format!("{v:.6}"))
}

fn cmd_run(ctx: &Ctx, path: &Path) -> Result<(), HarnessError> {
    let cfg = ctx.load(path)?;
    let exp = cfg.build()?;
    let seed = run_seed(cfg.seed, 0);
    let opts = RunOptions { snapshot_stride: cfg.output.snapshot_stride };
    let trace = simulate(&exp, &cfg.algorithm, cfg.horizon, seed, opts)
        .map_err(|source| HarnessError::Run { run: 0, source })?;
    let dir = ctx.out_dir(Some(&cfg));
    export::write_trace_series(&dir.join("trace.csv"), &trace)?;
    export::write_triggers(&dir.join("triggers.csv"), &trace)?;
    if !trace.snapshots.is_empty() {
        export::write_trace_estimates(&dir.join("estimates.csv"), &trace)?;
    }
    let lambda = evtrig::analysis::communication_rate(&trace, cfg.horizon).ok();
    ctx.say(format!(
        "{}: T={} final mse={:.6e} lambda_c(T)={} broadcasts={} -> {}",
        cfg.algorithm.label(),
        cfg.horizon,
        trace.sq_error[cfg.horizon as usize] / trace.n as f64,
        fmt_opt(lambda),
        trace.events.len(),
        dir.display()
    ));
    Ok(())
}

fn cmd_montecarlo(ctx: &Ctx, path: &Path) -> Result<(), HarnessError> {
    let cfg = ctx.load(path)?;
    let res = run_experiment(&cfg, ctx.workers)?;
    let dir = ctx.out_dir(Some(&cfg));
    export::write_aggregate(&dir.join("aggregate.csv"), &res)?;
    export::write_runs(&dir.join("runs.csv"), &res)?;
    if !res.mean_estimates.is_empty() {
        export::write_mean_estimates(&dir.join("mean_estimates.csv"), &res)?;
    }
    export::write_text(&dir.join("config.json"), &cfg.to_json())?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    ctx.say(format!(
        "{}: runs={} T={} seed={} mse(T)={:.6e} lambda_c(T)={} -> {}",
        res.label,
        cfg.runs,
        cfg.horizon,
        cfg.seed,
        res.final_mse(),
        fmt_opt(res.final_lambda_c()),
        dir.display()
    ));
    Ok(())
}

fn check_report(cfg: &ExperimentConfig, kv: bool) -> Result<String, HarnessError> {
    let exp = cfg.build()?;
    let g = &exp.graph;
    let c = &cfg.checks;
    let gram = gramian_check(g, &exp.model, c.window, c.windows, c.samples, c.lambda_tilde, cfg.seed)?;
    let sched = check_schedules(&exp.schedules, c.horizon)
        .map_err(|e| evtrig::harness::ConfigError::Invalid { field: "schedules".into(), reason: e.to_string() })?;
    let lambda2 = g.lambda2_mirror().ok();
    let list = |v: Vec<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");

    let mut out = String::new();
    if kv {
        let mut kvs: Vec<(String, String)> = vec![
            ("nodes".into(), g.n().to_string()),
            ("edges".into(), g.edge_count().to_string()),
            ("balanced".into(), gram.balanced.to_string()),
            ("spanning_tree".into(), gram.spanning_tree.to_string()),
            ("in_weights".into(), list(g.in_weights())),
            ("out_weights".into(), list(g.out_weights())),
            ("mirror_lambda2".into(), lambda2.map_or(String::new(), |v| v.to_string())),
            ("information_lambda_min".into(), gram.information_min.to_string()),
            ("joint_lambda_min".into(), gram.joint_min.to_string()),
            ("collectively_observable".into(), gram.collectively_observable.to_string()),
            ("connectivity_implication_applies".into(), gram.connectivity_implication_applies.to_string()),
            ("max_regressor_norm_sq".into(), gram.max_regressor_norm_sq.to_string()),
        ];
        for cond in sched.convergence.conditions.iter().chain(&sched.triggering.conditions) {
            kvs.push((format!("condition.{}", cond.condition), cond.verdict.to_string()));
        }
        kvs.push(("growth_exponent".into(), sched.triggering.growth_exponent.map_or(String::new(), |v| v.to_string())));
        kvs.push(("schedules".into(), sched.verdict().to_string()));
        for (k, v) in kvs {
            let _ = writeln!(out, "{k}={v}");
        }
        return Ok(out);
    }

    let _ = writeln!(out, "graph: {} nodes, {} edges", g.n(), g.edge_count());
    let _ = writeln!(
        out,
        "balanced: {}, spanning tree: {}, information λ_min = {}",
        gram.balanced, gram.spanning_tree, gram.information_min
    );
    let _ = writeln!(out, "in-weights: {}", list(g.in_weights()));
    let _ = writeln!(out, "out-weights: {}", list(g.out_weights()));
    if let Some(l2) = lambda2 {
        let _ = writeln!(out, "mirror graph λ_2 = {l2}");
    }
    if !(gram.balanced && gram.spanning_tree) {
        let _ = writeln!(out, "warning: convergence guarantees assume a balanced graph with a spanning tree");
    }
    let _ = writeln!(
        out,
        "observability (window {}, {} windows, {} samples): information λ_min = {}, joint λ_min = {}, threshold {}",
        gram.window_len, c.windows, gram.samples, gram.information_min, gram.joint_min, gram.lambda_tilde
    );
    let _ = writeln!(out, "collectively observable: {}", gram.collectively_observable);
    let _ = writeln!(out, "connectivity implication applies: {}", gram.connectivity_implication_applies);
    let _ = writeln!(out, "max ||H||^2 sampled: {}", gram.max_regressor_norm_sq);
    let _ = writeln!(out, "schedules (horizon {}, delta {}, rho {}):", c.horizon, c.delta, c.rho);
    for cond in sched.convergence.conditions.iter().chain(&sched.triggering.conditions) {
        let _ = writeln!(out, "  {:<8} {:<12} {}", cond.condition, cond.verdict.to_string(), cond.detail);
    }
    if let Some(mu) = sched.triggering.growth_exponent {
        let _ = writeln!(out, "  growth exponent mu = {mu}");
    }
    let _ = writeln!(out, "schedule verdict: {}", sched.verdict());
    Ok(out)
}

fn cmd_check(ctx: &Ctx, path: &Path, kv: bool) -> Result<(), HarnessError> {
    let cfg = ctx.load(path)?;
    let report = check_report(&cfg, kv)?;
    // The report is the command's output, so `--quiet` does not hide it.
    print!("{report}");
    Ok(())
}

fn cmd_compare(ctx: &Ctx, paths: &[PathBuf]) -> Result<(), HarnessError> {
    let dir = ctx.out_dir(None);
    let mut table = vec![["config", "algorithm", "lambda_c(T)", "mse(T)", "messages/run"].map(String::from)];
    for path in paths {
        let cfg = ctx.load(path)?;
        let stem = path.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
        let results = run_comparison(&cfg, ctx.workers)?;
        export::write_comparison(&dir.join(format!("compare_{stem}.csv")), &results)?;
        for r in &results {
            for w in &r.warnings {
                eprintln!("warning ({}): {w}", r.label);
            }
            let msgs = r.runs.iter().map(|s| s.messages as f64).sum::<f64>() / r.runs.len() as f64;
            table.push([
                stem.clone(),
                r.label.clone(),
                fmt_opt(r.final_lambda_c()),
                format!("{:.6e}", r.final_mse()),
                format!("{msgs:.1}"),
            ]);
        }
    }
    let mut csv = String::new();
    for row in &table {
        let _ = writeln!(csv, "{}", row.join(","));
    }
    export::write_text(&dir.join("compare.csv"), &csv)?;
    let widths: Vec<usize> = (0..5).map(|k| table.iter().map(|r| r[k].len()).max().unwrap_or(0)).collect();
    for row in &table {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        ctx.say(line.join("  ").trim_end());
    }
    Ok(())
}

fn cmd_fit(ctx: &Ctx, path: &Path, col: &str, (t1, t2): (u64, u64)) -> Result<(), HarnessError> {
    let series = export::read_series(path, col)?;
    let fit = fit_decay(&series, t1, t2)?;
    ctx.say(format!(
        "exponent={} log_intercept={} residual_rms={} window=[{},{}]",
        fit.exponent, fit.log_intercept, fit.residual_rms, fit.t1, fit.t2
    ));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let ctx = Ctx { seed: cli.seed, out_dir: cli.out_dir, workers: cli.workers, quiet: cli.quiet };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(&ctx, config),
        Command::Montecarlo { config } => cmd_montecarlo(&ctx, config),
        Command::Check { config, kv } => cmd_check(&ctx, config, *kv),
        Command::Compare { configs } => cmd_compare(&ctx, configs),
        Command::Fit { csv, col, window } => cmd_fit(&ctx, csv, col, *window),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

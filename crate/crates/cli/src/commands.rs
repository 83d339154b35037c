use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use relaysim::churn::{calibrate_pareto, Q_ONE_MINUTE, Q_TEN_MINUTES};
use relaysim::engine::{self, World};
use relaysim::io::{self, sweep};
use relaysim::selection::solver::{read_matrix, solve_exact, solve_greedy};
use relaysim::{SimConfig, Strategy};

#[derive(Debug, Parser)]
#[command(name = "relaysim", version, about = "CDN + browser-peer relay delivery simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one synthetic simulation and print its metrics as JSON.
    Run {
        #[command(flatten)]
        sim: SimArgs,
        /// Write the per-request outcome log (CSV).
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// Write the metrics report (JSON) here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a size x failure-ratio x strategy x seed grid.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        /// Content sizes in KB, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
        /// Failure ratios, comma separated.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<Strategy>>,
        /// Seed values: `0..10` or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        /// Long-format results CSV; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Per-cell mean/std summary (JSON).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Replay a session trace, or emit a synthetic one.
    Trace {
        #[command(flatten)]
        sim: SimArgs,
        /// Trace CSV to replay.
        #[arg(long, conflicts_with = "emit", required_unless_present = "emit")]
        input: Option<PathBuf>,
        /// Write a synthetic trace generated from the churn model.
        #[arg(long)]
        emit: Option<PathBuf>,
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit the Pareto session model to two CDF points.
    Calibrate {
        /// `minutes:probability`
        #[arg(long, default_value = "1:0.6")]
        q1: String,
        #[arg(long, default_value = "10:0.9")]
        q2: String,
    },
    /// Solve a relay assignment instance from a CSV matrix.
    Solve {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        greedy: bool,
    },
}

/// Configuration sources shared by the simulation commands. Precedence:
/// flags, then `--set`, then the config file, then defaults.
#[derive(Debug, Args)]
pub struct SimArgs {
    /// TOML config file.
    #[arg(long, env = "RELAYSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, env = "RELAYSIM_SEED")]
    seed: Option<u64>,
    /// Directory that relative output paths are resolved against.
    #[arg(long, env = "RELAYSIM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Override any config field, e.g. `--set latency_base_ms=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    peers: Option<usize>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    size_kb: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    zeta: Option<usize>,
    #[arg(long)]
    failure_ratio: Option<f64>,
    #[arg(long)]
    failure_region: Option<String>,
    #[arg(long)]
    isp_count: Option<u16>,
    /// Arrivals per minute.
    #[arg(long)]
    lambda: Option<f64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => io::load_config(p)?,
            None => SimConfig::default(),
        };
        for s in &self.sets {
            cfg = io::apply_override(&cfg, s)?;
        }
        macro_rules! take {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        take!(seed => rng_seed, peers => peer_count, strategy => strategy, size_kb => content_size_kb,
              alpha => alpha, gamma => gamma, zeta => zeta, failure_ratio => failure_ratio,
              failure_region => failure_region, isp_count => isp_count, lambda => arrival_rate_per_min,
              duration => sim_duration_s);
        Ok(relaysim::validate_config(cfg)?)
    }

    fn path(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn create(&self, p: &Path) -> Result<BufWriter<File>> {
        let path = self.path(p);
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range {s}");
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse::<u64>().with_context(|| format!("bad seed `{x}`"))).collect()
}

fn parse_quantile(s: &str) -> Result<(f64, f64)> {
    let (t, p) = s.split_once(':').with_context(|| format!("quantile `{s}` is not minutes:probability"))?;
    Ok((t.trim().parse()?, p.trim().parse()?))
}

fn emit_report(sim: &SimArgs, report: &relaysim::MetricsReport, to: Option<&PathBuf>) -> Result<()> {
    match to {
        Some(p) => io::write_report(report, sim.create(p)?)?,
        None => io::write_report(report, io::stdout_lock())?,
    }
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { sim, outcomes, report } => {
            let cfg = sim.config()?;
            let out = engine::simulate(&cfg, cfg.strategy)?;
            if let Some(p) = outcomes {
                io::write_outcomes(&out.outcomes, sim.create(&p)?)?;
            }
            emit_report(&sim, &out.report, report.as_ref())
        }
        Command::Sweep { sim, sizes, ratios, strategies, seeds, csv, summary } => {
            let cfg = sim.config()?;
            let defaults = sweep::SweepSpec::default();
            let spec = sweep::SweepSpec {
                content_sizes_kb: sizes.unwrap_or_else(|| cfg.content_sizes_kb.clone()),
                failure_ratios: ratios.unwrap_or(defaults.failure_ratios),
                strategies: strategies.unwrap_or(defaults.strategies),
                seeds: seeds.as_deref().map(parse_seeds).transpose()?.unwrap_or(defaults.seeds),
            };
            let result = sweep::run_sweep(&spec, &cfg)?;
            for f in &result.failures {
                eprintln!(
                    "cell failed: {} {} KB ratio {} seed {}: {}",
                    f.strategy, f.size_kb, f.failure_ratio, f.seed, f.error
                );
            }
            match &csv {
                Some(p) => sweep::write_sweep_csv(&result.rows, sim.create(p)?)?,
                None => sweep::write_sweep_csv(&result.rows, io::stdout_lock())?,
            }
            if let Some(p) = summary {
                sweep::write_summary_json(&sweep::summarize(&result), sim.create(&p)?)?;
            }
            Ok(())
        }
        Command::Trace { sim, input, emit, outcomes, report } => {
            let cfg = sim.config()?;
            if let Some(p) = emit {
                let records = io::synthesize_trace(&cfg)?;
                io::write_trace(&records, sim.create(&p)?)?;
                eprintln!("wrote {} sessions to {}", records.len(), sim.path(&p).display());
                return Ok(());
            }
            let input = input.expect("clap enforces --input or --emit");
            let parsed = io::parse_trace(&input)?;
            for r in &parsed.rejected {
                eprintln!("{}:{}: {}", input.display(), r.line, r.message);
            }
            let world = World::from_trace(&cfg, &parsed.records)?;
            let out = engine::simulate_world(&cfg, world, cfg.strategy)?;
            if let Some(p) = outcomes {
                io::write_outcomes(&out.outcomes, sim.create(&p)?)?;
            }
            emit_report(&sim, &out.report, report.as_ref())
        }
        Command::Calibrate { q1, q2 } => {
            let (q1, q2) = (parse_quantile(&q1)?, parse_quantile(&q2)?);
            let (scale, shape) = calibrate_pareto(q1, q2)?;
            let mut out = io::stdout_lock();
            if (q1, q2) == (Q_ONE_MINUTE, Q_TEN_MINUTES) {
                writeln!(out, "# default session quantiles")?;
            }
            writeln!(out, "x_m = {scale:.4} min ({:.2} s)", scale * 60.0)?;
            writeln!(out, "a = {shape:.4}")?;
            Ok(())
        }
        Command::Solve { matrix, exact, greedy } => {
            let (b, caps) = read_matrix(&matrix)?;
            let (exact, greedy) = if exact || greedy { (exact, greedy) } else { (true, true) };
            let mut out = io::stdout_lock();
            let show = |r: &[Option<usize>]| {
                r.iter()
                    .enumerate()
                    .map(|(q, r)| match r {
                        Some(r) => format!("q{q}->r{r}"),
                        None => format!("q{q}->-"),
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            if exact {
                let a = solve_exact(&b, &caps)?;
                writeln!(out, "exact objective {}", a.objective)?;
                writeln!(out, "exact assignment {}", show(&a.relay_of))?;
            }
            if greedy {
                let g = solve_greedy(&b, &caps)?;
                writeln!(out, "greedy objective {}", g.assignment.objective)?;
                writeln!(out, "greedy assignment {}", show(&g.assignment.relay_of))?;
                if !g.unmatched.is_empty() {
                    writeln!(out, "greedy unmatched {:?}", g.unmatched)?;
                }
            }
            Ok(())
        }
    }
}

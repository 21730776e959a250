use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffsim::contact::{CanonicalScenario, ContactKind, ContactModelConfig};
use diffsim::dynamics::SystemId;
use diffsim_cli::config::RunConfig;
use diffsim_cli::eval::{eval, load_checkpoint, EvalOptions};
use diffsim_cli::gradcheck::{grad_check, write_report, GradCheckOptions};
use diffsim_cli::simulate::{simulate, SimOptions};
use diffsim_cli::stability::{stability, write_stability, StabilityOptions};
use diffsim_cli::sweep::{sweep, write_sweep, SweepOptions};
use diffsim_cli::train::{resolve_out_dir, train};
use diffsim_cli::{output_root, CliError};

#[derive(Parser)]
#[command(name = "diffsim", version, about = "Differentiable planar contact simulation and policy learning")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set shac.horizon=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[String]) -> Result<RunConfig, CliError> {
        let mut ov = self.overrides.clone();
        ov.extend_from_slice(extra);
        match &self.config {
            Some(p) => RunConfig::load(p, &ov),
            None => RunConfig::from_toml_str("", &ov),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy to the configured budget.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory (default: config `output_dir`, else under the output root).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with the deterministic mean policy.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Evaluation seed (default: `train.eval_seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate under another contact model (hard, soft, smooth).
        #[arg(long)]
        contact: Option<ContactKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll one lane and write its trajectory as CSV.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Policy to run; zero actions without one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Control steps.
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial generalized positions, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q0: Option<Vec<f64>>,
        /// Initial generalized velocities, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        u0: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare window-return gradients with finite differences.
    GradCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        system: Option<SystemId>,
        #[arg(long)]
        contact: Option<ContactKind>,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normal force and gradient versus gap for all contact models.
    ContactSweep {
        #[arg(long, default_value_t = -0.02, allow_hyphen_values = true)]
        d_min: f64,
        #[arg(long, default_value_t = 0.02)]
        d_max: f64,
        #[arg(long, default_value_t = 401)]
        samples: usize,
        #[arg(long, default_value_t = 5e-3)]
        sharpness: f64,
        #[arg(long, default_value_t = 2e4)]
        stiffness: f64,
        /// Gap noise of the stochastic reference (default s·π/√3).
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resting-mass stability of soft versus smooth contact.
    Stability {
        #[arg(long = "dt", value_delimiter = ',', default_values_t = [5e-3, 1e-3, 1e-4])]
        dts: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        mass: f64,
        #[arg(long, default_value_t = 1e7)]
        stiffness: f64,
        #[arg(long, default_value_t = ContactModelConfig::default().damping)]
        damping: f64,
        #[arg(long, default_value_t = 1e-4)]
        sharpness: f64,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn or_root(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| output_root().join(name))
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train { cfg, out } => {
            let cfg = cfg.load(&[])?;
            let dir = resolve_out_dir(&cfg, out.as_deref());
            let s = train(&cfg, &dir)?;
            println!(
                "trained {} iterations, {} env steps, {} faults -> {}",
                s.iterations,
                s.env_steps,
                s.faults,
                dir.display()
            );
            if let Some(e) = s.final_eval {
                println!(
                    "final eval: return {:.3} length {:.1} forward velocity {:.3} falls {}",
                    e.mean_return, e.mean_length, e.mean_forward_velocity, e.falls
                );
            }
        }
        Command::Eval {
            cfg,
            checkpoint,
            episodes,
            seed,
            contact,
            out,
        } => {
            let cfg = cfg.load(&[])?;
            let opts = EvalOptions {
                episodes,
                seed: seed.unwrap_or(cfg.train.eval_seed),
                contact,
            };
            let dir = out.unwrap_or_else(|| {
                output_root().join(format!("eval-{}", &cfg.hash()[..8]))
            });
            let m = eval(&cfg, &checkpoint, &opts, &dir)?;
            println!(
                "episodes {} return {:.3} length {:.1} forward velocity {:.3} (command {:.3}) falls {}",
                m.episodes,
                m.mean_return,
                m.mean_length,
                m.mean_forward_velocity,
                m.mean_command,
                m.falls
            );
        }
        Command::Simulate {
            cfg,
            checkpoint,
            steps,
            seed,
            q0,
            u0,
            out,
        } => {
            let cfg = cfg.load(&[])?;
            let ck = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let path = or_root(out, "trajectory.csv");
            let s = simulate(
                &cfg,
                ck.as_ref().map(|c| &c.agent),
                &SimOptions {
                    steps,
                    seed,
                    q0,
                    u0,
                },
                &path,
            )?;
            println!(
                "{} control steps, {} sub-steps, return {:.4}{} -> {}",
                s.control_steps,
                s.substeps,
                s.total_reward,
                s.fell_at
                    .map(|k| format!(", fell at step {k}"))
                    .unwrap_or_default(),
                path.display()
            );
        }
        Command::GradCheck {
            cfg,
            system,
            contact,
            steps,
            trials,
            seed,
            out,
        } => {
            let mut extra = Vec::new();
            if let Some(s) = system {
                extra.push(format!("env.system=\"{}\"", s.name()));
            }
            if let Some(k) = contact {
                extra.push(format!("contact.kind=\"{}\"", k.name()));
            }
            let cfg = cfg.load(&extra)?;
            let opts = GradCheckOptions {
                steps,
                trials,
                seed,
                ..Default::default()
            };
            let report = grad_check(&cfg, &opts)?;
            let path = or_root(
                out,
                &format!("grad-check-{}-{}.csv", cfg.env.system.name(), cfg.contact.kind.name()),
            );
            write_report(&report, &cfg, &path)?;
            let passed = report.trials.iter().filter(|t| t.passed).count();
            let xfail = report
                .trials
                .iter()
                .filter(|t| !t.passed && t.expected_fail)
                .count();
            println!(
                "{} {}: {passed}/{} passed, {xfail} expected failures, max relative error {:e} -> {}",
                cfg.env.system.name(),
                cfg.contact.kind.name(),
                report.trials.len(),
                report.max_error(),
                path.display()
            );
            if !report.ok() {
                return Err(CliError::Check("gradient check failed".into()));
            }
        }
        Command::ContactSweep {
            d_min,
            d_max,
            samples,
            sharpness,
            stiffness,
            noise_sigma,
            mc_samples,
            seed,
            out,
        } => {
            let opts = SweepOptions {
                d_min,
                d_max,
                samples,
                contact: ContactModelConfig {
                    sharpness,
                    stiffness,
                    ..Default::default()
                },
                scenario: CanonicalScenario::default(),
                noise_sigma,
                mc_samples,
                seed,
            };
            let rows = sweep(&opts)?;
            let path = or_root(out, "contact-sweep.csv");
            write_sweep(&rows, &opts, &path)?;
            println!("{} rows -> {}", rows.len(), path.display());
        }
        Command::Stability {
            dts,
            mass,
            stiffness,
            damping,
            sharpness,
            duration,
            out,
        } => {
            let opts = StabilityOptions {
                dts,
                mass,
                stiffness,
                damping,
                sharpness,
                duration,
            };
            let rows = stability(&opts)?;
            let path = or_root(out, "stability.csv");
            write_stability(&rows, &opts, &path)?;
            for r in &rows {
                println!(
                    "{:>6} dt {:<8} max penetration {:.3e} m  KE {:.3e} -> {:.3e} J  {}",
                    r.model.name(),
                    r.dt,
                    r.max_penetration,
                    r.ke_start,
                    r.ke_end,
                    if r.diverged { "DIVERGED" } else { "stable" }
                );
            }
            println!("-> {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

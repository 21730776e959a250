//! End-to-end acceptance run. One PASS/FAIL line per criterion.
//!
//! `cargo test --release -p diffsim-cli --test acceptance [-- <criterion>...]`
//!
//! Artifacts land under `target/tmp/acceptance/`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use diffsim::contact::ContactKind;
use diffsim::dynamics::SystemId;
use diffsim_cli::config::RunConfig;
use diffsim_cli::eval::{eval, EvalOptions};
use diffsim_cli::gradcheck::{grad_check, GradCheckOptions};
use diffsim_cli::output::{column, read_csv};
use diffsim_cli::simulate::{apex_heights, simulate, SimOptions};
use diffsim_cli::stability::{stability, StabilityOptions};
use diffsim_cli::sweep::{sweep, SweepOptions};
use diffsim_cli::train::train;
use diffsim_cli::CliError;
use serde::Deserialize;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn(&Path) -> Result<Outcome, CliError>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    RunConfig::load(&configs_dir().join(name), overrides)
}

fn cfg(overrides: &[&str]) -> RunConfig {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::from_toml_str("", &ov).expect("valid overrides")
}

fn gradient_exactness(_: &Path) -> Result<Outcome, CliError> {
    let opts = GradCheckOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for sys in [SystemId::Bouncer1d, SystemId::Hopper2d, SystemId::Quadruped2d] {
        let c = cfg(&[&format!("env.system={}", sys.name()), "contact.kind=smooth"]);
        let r = grad_check(&c, &opts)?;
        let passed = r.trials.iter().filter(|t| t.passed).count();
        let free: Vec<f64> = r
            .trials
            .iter()
            .filter(|t| t.contact_substeps == 0)
            .map(|t| t.max_rel_error)
            .collect();
        pass &= passed == r.trials.len() && passed == 100;
        parts.push(format!(
            "{} {passed}/{} max {:.1e} (contact-free trials {}, max {:.1e})",
            sys.name(),
            r.trials.len(),
            r.max_error(),
            free.len(),
            free.iter().copied().fold(0.0, f64::max)
        ));
    }
    let pend = grad_check(&cfg(&["env.system=pendulum"]), &opts)?;
    let free_ok = pend
        .trials
        .iter()
        .all(|t| t.contact_substeps == 0 && t.max_rel_error < 1e-7);
    pass &= free_ok;
    parts.push(format!(
        "contact-free pendulum {}/{} below 1e-7, max {:.1e}",
        pend.trials.iter().filter(|t| t.passed).count(),
        pend.trials.len(),
        pend.max_error()
    ));
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

fn force_curves(_: &Path) -> Result<Outcome, CliError> {
    let opts = SweepOptions::default();
    let rows = sweep(&opts)?;
    let f = opts.scenario.support_force();
    let s = opts.contact.sharpness;
    let k = opts.contact.stiffness;

    let hard_zero = rows
        .iter()
        .filter(|r| r.d > 0.0)
        .all(|r| r.f_hard == 0.0 && r.grad_hard == 0.0);
    let soft_slope_err = rows
        .windows(2)
        .filter(|w| w[1].d < 0.0)
        .map(|w| ((w[0].f_soft - w[1].f_soft) / (w[1].d - w[0].d) - k).abs() / k)
        .chain(rows.iter().filter(|r| r.d < 0.0).map(|r| (r.grad_soft - k).abs() / k))
        .fold(0.0, f64::max);
    let monotone = rows.windows(2).all(|w| w[1].f_smooth < w[0].f_smooth);
    let mid = rows
        .iter()
        .find(|r| r.d == 0.0)
        .map(|r| (r.f_smooth - 0.5 * f).abs())
        .unwrap_or(f64::INFINITY);
    let grad_nonzero = rows
        .iter()
        .filter(|r| r.d.abs() < 3.0 * s)
        .all(|r| r.grad_smooth != 0.0);
    let dev = rows
        .iter()
        .map(|r| (r.f_stoch - r.f_smooth).abs())
        .fold(0.0, f64::max)
        / f;
    let fog = rows.iter().map(|r| r.grad_stoch_fog.abs()).fold(0.0, f64::max);

    let checks = [
        ("F_hard=grad_hard=0 for d>0", hard_zero),
        ("soft slope k_n", soft_slope_err <= 1e-6),
        ("F_smooth decreasing", monotone),
        ("F_smooth(0)=F/2", mid <= 1e-9),
        ("grad_smooth!=0 on |d|<3s", grad_nonzero),
        ("stochastic mean within 2% of F_smooth", dev < 0.02),
        ("FoG mean ~ 0", fog < 1e-6 * f / s),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok(Outcome {
        pass: failed.is_empty(),
        detail: format!(
            "soft slope rel err {soft_slope_err:.1e}, |F_smooth(0)-F/2| {mid:.1e}, \
             stochastic vs smooth max dev {:.3}% of F, max |FoG mean| {fog:.1e}{}",
            100.0 * dev,
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join(", "))
            }
        ),
    })
}

fn drop_apexes(dir: &Path, contact: &[String]) -> Result<Vec<f64>, CliError> {
    let mut ov: Vec<String> = [
        "env.system=bouncer1d",
        "env.dt=1e-3",
        "env.decimation=1",
        "contact.restitution=0.5",
    ]
    .map(String::from)
    .to_vec();
    ov.extend_from_slice(contact);
    let c = RunConfig::from_toml_str("", &ov)?;
    let p = dir.join(format!("drop-{}-{}.csv", c.contact.kind.name(), c.contact.sharpness));
    simulate(
        &c,
        None,
        &SimOptions {
            steps: 2000,
            q0: Some(vec![1.0]),
            u0: Some(vec![0.0]),
            ..Default::default()
        },
        &p,
    )?;
    let (h, rows) = read_csv(&p)?;
    let z: Vec<f64> = column(&h, &rows, "q0").unwrap().into_iter().flatten().collect();
    let u: Vec<f64> = column(&h, &rows, "u0").unwrap().into_iter().flatten().collect();
    Ok(apex_heights(&z, &u))
}

fn hard_limit(dir: &Path) -> Result<Outcome, CliError> {
    let hard = drop_apexes(dir, &["contact.kind=hard".into()])?;
    if hard.len() < 3 {
        return Ok(Outcome {
            pass: false,
            detail: format!("hard contact produced only {} apexes", hard.len()),
        });
    }
    let rel = |a: &[f64]| -> Vec<f64> {
        (0..3)
            .map(|i| (a.get(i).copied().unwrap_or(0.0) - hard[i]).abs() / hard[i])
            .collect()
    };
    let mut errors = Vec::new();
    let mut finest = Vec::new();
    for s in [1e-2, 1e-3, 1e-4, 1e-5] {
        let a = drop_apexes(
            dir,
            &["contact.kind=smooth".into(), format!("contact.sharpness={s:e}")],
        )?;
        let r = rel(&a);
        errors.push(r.iter().sum::<f64>() / 3.0);
        finest = r;
    }
    let within = finest.iter().all(|&e| e < 0.01);
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]) && errors[3] < errors[0];
    Ok(Outcome {
        pass: within && monotone,
        detail: format!(
            "hard apexes {:.4} {:.4} {:.4}; s=1e-5 rel errors {:.1e} {:.1e} {:.1e}; \
             mean error over s=1e-2..1e-5: {}",
            hard[0],
            hard[1],
            hard[2],
            finest[0],
            finest[1],
            finest[2],
            errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" ")
        ),
    })
}

fn large_step_stability(_: &Path) -> Result<Outcome, CliError> {
    let rows = stability(&StabilityOptions {
        dts: vec![5e-3],
        ..Default::default()
    })?;
    let soft = rows.iter().find(|r| r.model == ContactKind::Soft).unwrap();
    let smooth = rows.iter().find(|r| r.model == ContactKind::Smooth).unwrap();
    let pass = soft.diverged
        && !smooth.diverged
        && smooth.max_penetration < 1e-3
        && smooth.ke_end <= smooth.ke_start;
    Ok(Outcome {
        pass,
        detail: format!(
            "soft diverged={} (KE {:.2e} -> {:.2e} J); smooth diverged={} max penetration {:.2e} m, \
             KE {:.2e} -> {:.2e} J",
            soft.diverged,
            soft.ke_start,
            soft.ke_end,
            smooth.diverged,
            smooth.max_penetration,
            smooth.ke_start,
            smooth.ke_end
        ),
    })
}

#[derive(Deserialize)]
struct Threshold {
    r_star: f64,
}

fn steps_to_target(cfg: &RunConfig, out: &Path) -> Result<Option<u64>, CliError> {
    let s = train(cfg, out)?;
    Ok(s
        .final_eval
        .filter(|e| e.mean_return >= cfg.train.target_return.unwrap())
        .map(|_| s.env_steps))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

const SHAC_CAP: u64 = 1_000_000;
const PPO_CAP: u64 = 2_000_000;

fn sample_efficiency(dir: &Path) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(configs_dir().join("hopper2d_threshold.toml"))?;
    let th: Threshold =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("threshold file: {e}")))?;
    let mut shac = Vec::new();
    let mut ppo = Vec::new();
    for seed in 0..3u64 {
        for (name, cap, out) in [
            ("hopper2d_shac.toml", SHAC_CAP, &mut shac),
            ("hopper2d_ppo.toml", PPO_CAP, &mut ppo),
        ] {
            let c = load(
                name,
                &[
                    format!("seed={seed}"),
                    format!("train.env_steps={cap}"),
                    "train.eval_interval=4096".into(),
                    format!("train.target_return={}", th.r_star),
                ],
            )?;
            let run = dir.join(format!("{}-s{seed}", name.trim_end_matches(".toml")));
            out.push(steps_to_target(&c, &run)?);
        }
    }
    let fmt = |v: &[Option<u64>]| {
        v.iter()
            .map(|s| s.map_or("not reached".to_string(), |n| n.to_string()))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let as_f = |v: &[Option<u64>], cap: u64| -> Vec<f64> {
        v.iter().map(|s| s.map_or(cap as f64, |n| n as f64)).collect()
    };
    let shac_reached = shac.iter().filter(|s| s.is_some()).count();
    let m_shac = median(as_f(&shac, SHAC_CAP));
    // Runs that never reach R* count as their cap, a lower bound on PPO's need.
    let m_ppo = median(as_f(&ppo, PPO_CAP));
    Ok(Outcome {
        pass: shac_reached >= 2 && 5.0 * m_shac <= m_ppo,
        detail: format!(
            "R* {:.2}; SHAC steps [{}] median {m_shac}; PPO steps [{}] median {m_ppo}; ratio {:.1}x",
            th.r_star,
            fmt(&shac),
            fmt(&ppo),
            m_ppo / m_shac
        ),
    })
}

fn locomotion(dir: &Path) -> Result<Outcome, CliError> {
    let c = load("quadruped2d_shac.toml", &[])?;
    let run = dir.join("quadruped2d_shac");
    train(&c, &run)?;
    let ck = run.join("checkpoints/final.ckpt");
    let timeout = c.env.episode_length as f64;
    let opts = |contact| EvalOptions {
        episodes: 20,
        seed: c.train.eval_seed,
        contact,
    };
    let smooth = eval(&c, &ck, &opts(None), &dir.join("quadruped2d_eval_smooth"))?;
    let hard = eval(&c, &ck, &opts(Some(ContactKind::Hard)), &dir.join("quadruped2d_eval_hard"))?;
    let v_err = (smooth.mean_forward_velocity - smooth.mean_command).abs() / smooth.mean_command;
    let pass = smooth.falls == 0
        && smooth.mean_length == timeout
        && v_err <= 0.15
        && hard.mean_length >= 0.9 * timeout;
    Ok(Outcome {
        pass,
        detail: format!(
            "smooth: length {:.1}/{timeout} falls {} velocity {:.3} vs command {:.3} ({:.1}%); \
             hard: length {:.1} ({:.1}% of timeout) falls {}",
            smooth.mean_length,
            smooth.falls,
            smooth.mean_forward_velocity,
            smooth.mean_command,
            100.0 * v_err,
            hard.mean_length,
            100.0 * hard.mean_length / timeout,
            hard.falls
        ),
    })
}

fn run_bin(args: &[&str], out: &Path, threads: usize) -> Result<Vec<u8>, CliError> {
    let o = Command::new(env!("CARGO_BIN_EXE_diffsim"))
        .args(["--threads", &threads.to_string()])
        .args(args)
        .arg("--out")
        .arg(out)
        .output()?;
    if !o.status.success() {
        return Err(CliError::Runtime(String::from_utf8_lossy(&o.stderr).into_owned()));
    }
    Ok(std::fs::read(out.join("metrics.csv"))?)
}

fn determinism(dir: &Path) -> Result<Outcome, CliError> {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["hopper2d_shac.toml", "hopper2d_ppo.toml", "quadruped2d_shac.toml"] {
        let cfg_path = configs_dir().join(name);
        let cfg_arg = cfg_path.to_str().unwrap();
        let train_args = [
            "train",
            "--config",
            cfg_arg,
            "--set",
            "train.env_steps=20000",
            "--set",
            "train.eval_interval=8192",
            "--set",
            "seed=7",
        ];
        let stem = name.trim_end_matches(".toml");
        let runs: Vec<Vec<u8>> = [(1, "a"), (1, "b"), (8, "c")]
            .iter()
            .map(|(t, tag)| run_bin(&train_args, &dir.join(format!("det-{stem}-{tag}")), *t))
            .collect::<Result<_, _>>()?;
        let train_same = runs.iter().all(|r| *r == runs[0]);
        let ck = dir.join(format!("det-{stem}-a/checkpoints/final.ckpt"));
        let eval_args = [
            "eval",
            "--config",
            cfg_arg,
            "--checkpoint",
            ck.to_str().unwrap(),
            "--episodes",
            "8",
        ];
        let evals: Vec<Vec<u8>> = [(1, "a"), (1, "b"), (8, "c")]
            .iter()
            .map(|(t, tag)| run_bin(&eval_args, &dir.join(format!("det-{stem}-eval-{tag}")), *t))
            .collect::<Result<_, _>>()?;
        let eval_same = evals.iter().all(|r| *r == evals[0]);
        pass &= train_same && eval_same;
        parts.push(format!(
            "{stem}: train {} ({} rows), eval {}",
            if train_same { "identical" } else { "DIFFERS" },
            runs[0].iter().filter(|&&b| b == b'\n').count() - 2,
            if eval_same { "identical" } else { "DIFFERS" }
        ));
    }
    Ok(Outcome {
        pass,
        detail: format!("1 vs 1 vs 8 threads: {}", parts.join("; ")),
    })
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, f64, Check); 7] = [
        (1, "gradient exactness", 300.0, gradient_exactness),
        (2, "force curves", 120.0, force_curves),
        (3, "hard-limit consistency", 60.0, hard_limit),
        (4, "large-step stability", 60.0, large_step_stability),
        (5, "sample efficiency", 45.0 * 60.0, sample_efficiency),
        (6, "locomotion", 60.0 * 60.0, locomotion),
        (7, "determinism", f64::INFINITY, determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut all = true;
    for (n, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let dir = root.join(format!("c{n}"));
        let t0 = Instant::now();
        let outcome = check(&dir).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let secs = t0.elapsed().as_secs_f64();
        let pass = outcome.pass && secs <= budget;
        all &= pass;
        let limit = if budget.is_finite() {
            format!(" / {budget:.0} s")
        } else {
            String::new()
        };
        println!(
            "[{}] {n}. {name}: {} ({secs:.1} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

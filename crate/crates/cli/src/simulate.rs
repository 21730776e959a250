use std::path::Path;

use diffsim::dynamics::kinematics::kinematics;
use diffsim::dynamics::moreau_step;
use diffsim::learn::AgentState;

use crate::config::RunConfig;
use crate::output::{csv_writer, num, TRAJECTORY_SCHEMA};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimOptions {
    /// Control steps to run.
    pub steps: usize,
    pub seed: u64,
    /// Replaces the reset configuration.
    pub q0: Option<Vec<f64>>,
    pub u0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub control_steps: usize,
    pub substeps: usize,
    /// Control step at which the fall condition first held.
    pub fell_at: Option<usize>,
    pub total_reward: f64,
}

/// Rolls one lane and writes one CSV row per physics sub-step:
/// `time, q*, u*, gap*, pn*, pt*, tau*, reward`, where `gap`, `pn` and `pt`
/// are per model contact point (impulses zero when inactive), `tau` is per
/// actuated coordinate and `reward` is that of the enclosing control step.
/// Episode timeouts are ignored; the run stops early only on a fall.
pub fn simulate(
    cfg: &RunConfig,
    agent: Option<&AgentState>,
    opts: &SimOptions,
    out: &Path,
) -> Result<SimSummary, CliError> {
    let env = cfg.build_env()?;
    if let Some(a) = agent {
        a.check_dims(env.obs_dim(), env.act_dim())
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut lane = env.reset_lane(opts.seed, 0, 0);
    let n = lane.params.model.ndof();
    for (name, v, dst) in [
        ("q0", &opts.q0, &mut lane.state.q),
        ("u0", &opts.u0, &mut lane.state.u),
    ] {
        if let Some(v) = v {
            if v.len() != n {
                return Err(CliError::Usage(format!(
                    "{name} has {} entries, system has {n} coordinates",
                    v.len()
                )));
            }
            *dst = v.clone();
        }
    }
    let model = lane.params.model.clone();
    let n_points = model.n_contacts();
    let actuated = model.actuated.clone();

    let mut header = vec!["time".to_string()];
    header.extend((0..n).map(|i| format!("q{i}")));
    header.extend((0..n).map(|i| format!("u{i}")));
    for p in ["gap", "pn", "pt"] {
        header.extend((0..n_points).map(|j| format!("{p}{j}")));
    }
    header.extend(actuated.iter().map(|i| format!("tau{i}")));
    header.push("reward".into());
    let comments = vec![
        ("system".to_string(), cfg.env.system.name().to_string()),
        ("contact".to_string(), cfg.contact.kind.name().to_string()),
        ("dt".to_string(), num(cfg.env.dt)),
        ("decimation".to_string(), cfg.env.decimation.to_string()),
    ];
    let mut w = csv_writer(out, TRAJECTORY_SCHEMA, &comments, &header)?;

    let dt = cfg.env.dt;
    let mut time = 0.0;
    let mut summary = SimSummary {
        control_steps: 0,
        substeps: 0,
        fell_at: None,
        total_reward: 0.0,
    };
    let runtime = |e: diffsim::dynamics::StepError| CliError::Runtime(e.to_string());
    for step in 0..opts.steps {
        let obs = env.observe_lane(&lane);
        let action = match agent {
            Some(a) => a.act(&obs),
            None => vec![0.0; env.act_dim()],
        };
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let q_des = env.position_targets(&model, &a);
        let mut s = lane.state.clone();
        let mut rows = Vec::with_capacity(cfg.env.decimation);
        for _ in 0..cfg.env.decimation {
            let tau = env.substep_force(&model, &a, &q_des, &s);
            let o = moreau_step(&model, &s, &tau, &lane.params.step).map_err(runtime)?;
            time += dt;
            let kin = kinematics(&model, &o.state.q, &o.state.u);
            let mut pn = vec![0.0; n_points];
            let mut pt = vec![0.0; n_points];
            for (c, (&a_n, &a_t)) in o.contacts.iter().zip(o.impulses.normal.iter().zip(&o.impulses.tangent)) {
                pn[c.point] = a_n;
                pt[c.point] = a_t;
            }
            let mut row = vec![num(time)];
            row.extend(o.state.q.iter().map(|&x| num(x)));
            row.extend(o.state.u.iter().map(|&x| num(x)));
            row.extend(kin.points.iter().map(|p| num(p.pos[1])));
            row.extend(pn.iter().map(|&x| num(x)));
            row.extend(pt.iter().map(|&x| num(x)));
            row.extend(actuated.iter().map(|&i| num(tau[i])));
            rows.push(row);
            s = o.state;
        }
        let tr = env
            .transition::<f64>(&lane.params, &lane.state, &lane.prev_action, &action)
            .map_err(runtime)?;
        debug_assert_eq!(tr.state, s);
        for mut row in rows {
            row.push(num(tr.reward));
            w.write_record(&row)?;
            summary.substeps += 1;
        }
        summary.control_steps += 1;
        summary.total_reward += tr.reward;
        lane.state = tr.state;
        lane.prev_action = tr.action;
        lane.t += 1;
        if tr.fallen {
            summary.fell_at = Some(step);
            break;
        }
    }
    w.flush()?;
    Ok(summary)
}

/// Heights at which the vertical velocity turns from rising to falling.
pub fn apex_heights(z: &[f64], u: &[f64]) -> Vec<f64> {
    (1..z.len())
        .filter(|&i| u[i - 1] > 0.0 && u[i] <= 0.0)
        .map(|i| z[i - 1].max(z[i]))
        .collect()
}

//! Resting-mass stability under soft and smooth contact at several steps.

use std::path::Path;

use diffsim::contact::{ContactKind, ContactModelConfig};
use diffsim::dynamics::{moreau_step, GeneralizedState, StepConfig, SystemModel};

use crate::output::{csv_writer, num, STABILITY_SCHEMA};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    pub dts: Vec<f64>,
    pub mass: f64,
    /// Soft-model penalty stiffness k_n (N/m).
    pub stiffness: f64,
    /// Soft-model penalty damping (N·s/m).
    pub damping: f64,
    /// Smooth-model sharpness s (m).
    pub sharpness: f64,
    /// Simulated time (s).
    pub duration: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            dts: vec![5e-3, 1e-3, 1e-4],
            mass: 10.0,
            stiffness: 1e7,
            damping: ContactModelConfig::default().damping,
            sharpness: 1e-4,
            duration: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub model: ContactKind,
    pub dt: f64,
    pub steps: usize,
    /// Deepest penetration reached (m, ≥ 0).
    pub max_penetration: f64,
    /// Mean kinetic energy over the first and last tenth of the run (J).
    pub ke_start: f64,
    pub ke_end: f64,
    /// Largest |E| over the run, `E = ½ m u² + m g z` (J).
    pub peak_energy: f64,
    /// Reference energy: the larger of the peak |E| over the first tenth
    /// and the potential energy of 1 mm.
    pub energy_scale: f64,
    pub diverged: bool,
}

/// Runs the mass from rest at zero gap under `kind`.
pub fn run_case(opts: &StabilityOptions, kind: ContactKind, dt: f64) -> StabilityRow {
    let mut model = SystemModel::bouncer1d();
    model.base_mass = opts.mass;
    let g = model.gravity;
    let contact = ContactModelConfig {
        kind,
        stiffness: opts.stiffness,
        damping: opts.damping,
        sharpness: opts.sharpness,
        gs_iters: 200,
        accept_unconverged: true,
        ..Default::default()
    };
    let cfg = StepConfig { dt, contact };
    let steps = (opts.duration / dt).round() as usize;
    let tenth = (steps / 10).max(1);
    let mut s = GeneralizedState {
        q: vec![0.0],
        u: vec![0.0],
    };
    let m = opts.mass;
    let mut max_pen: f64 = 0.0;
    let mut ke = Vec::with_capacity(steps);
    let mut energy = Vec::with_capacity(steps);
    let mut diverged = false;
    for _ in 0..steps {
        match moreau_step(&model, &s, &[0.0], &cfg) {
            Ok(o) => s = o.state,
            Err(_) => {
                diverged = true;
                break;
            }
        }
        let (z, u) = (s.q[0], s.u[0]);
        if !(z.abs() <= 1e3 && u.abs() <= 1e3) {
            diverged = true;
            break;
        }
        max_pen = max_pen.max(-z);
        ke.push(0.5 * m * u * u);
        energy.push(0.5 * m * u * u + m * g * z);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let head = &energy[..tenth.min(energy.len())];
    let energy_scale = head
        .iter()
        .map(|e| e.abs())
        .fold(m * g * 1e-3, f64::max);
    let peak_energy = energy.iter().map(|e| e.abs()).fold(0.0, f64::max);
    if peak_energy > 10.0 * energy_scale {
        diverged = true;
    }
    StabilityRow {
        model: kind,
        dt,
        steps,
        max_penetration: max_pen,
        ke_start: mean(&ke[..tenth.min(ke.len())]),
        ke_end: mean(&ke[ke.len().saturating_sub(tenth)..]),
        peak_energy,
        energy_scale,
        diverged,
    }
}

pub fn stability(opts: &StabilityOptions) -> Result<Vec<StabilityRow>, CliError> {
    if opts.dts.iter().any(|&dt| !(dt > 0.0)) || !(opts.duration > 0.0) || !(opts.mass > 0.0) {
        return Err(CliError::Usage(
            "dt, duration and mass must be positive".into(),
        ));
    }
    let mut rows = Vec::new();
    for &dt in &opts.dts {
        for kind in [ContactKind::Soft, ContactKind::Smooth] {
            rows.push(run_case(opts, kind, dt));
        }
    }
    Ok(rows)
}

pub fn write_stability(
    rows: &[StabilityRow],
    opts: &StabilityOptions,
    path: &Path,
) -> Result<(), CliError> {
    let comments = vec![
        ("mass".into(), num(opts.mass)),
        ("stiffness".into(), num(opts.stiffness)),
        ("damping".into(), num(opts.damping)),
        ("sharpness".into(), num(opts.sharpness)),
        ("duration".into(), num(opts.duration)),
    ];
    let header = [
        "model",
        "dt",
        "steps",
        "max_penetration",
        "ke_start",
        "ke_end",
        "peak_energy",
        "energy_scale",
        "diverged",
    ]
    .map(String::from);
    let mut w = csv_writer(path, STABILITY_SCHEMA, &comments, &header)?;
    for r in rows {
        w.write_record([
            r.model.name().to_string(),
            num(r.dt),
            r.steps.to_string(),
            num(r.max_penetration),
            num(r.ke_start),
            num(r.ke_end),
            num(r.peak_energy),
            num(r.energy_scale),
            r.diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

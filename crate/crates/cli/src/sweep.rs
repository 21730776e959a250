//! Normal force and its gradient versus gap for every contact model.

use std::path::Path;

use diffsim::contact::{
    force_curve, stochastic_reference, CanonicalScenario, ContactKind, ContactModelConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::output::{csv_writer, num, SWEEP_SCHEMA};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub d_min: f64,
    pub d_max: f64,
    pub samples: usize,
    /// Contact parameters; `sharpness` and `stiffness` are the ones used.
    pub contact: ContactModelConfig,
    pub scenario: CanonicalScenario,
    /// Gap noise for the stochastic reference; `None` uses `s·π/√3`, the
    /// standard deviation of the logistic distribution with scale `s`.
    pub noise_sigma: Option<f64>,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            d_min: -0.02,
            d_max: 0.02,
            samples: 401,
            contact: ContactModelConfig::default(),
            scenario: CanonicalScenario::default(),
            noise_sigma: None,
            mc_samples: 100_000,
            seed: 0,
        }
    }
}

impl SweepOptions {
    pub fn sigma(&self) -> f64 {
        self.noise_sigma
            .unwrap_or(self.contact.sharpness * std::f64::consts::PI / 3f64.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub d: f64,
    pub f_hard: f64,
    pub grad_hard: f64,
    pub f_soft: f64,
    pub grad_soft: f64,
    pub f_smooth: f64,
    pub grad_smooth: f64,
    pub f_stoch: f64,
    pub grad_stoch_fog: f64,
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "d",
    "F_hard",
    "grad_hard",
    "F_soft",
    "grad_soft",
    "F_smooth",
    "grad_smooth",
    "F_stoch_mean",
    "grad_stoch_fog_mean",
];

/// Gap samples, spaced evenly and hitting both ends (and 0 for a symmetric
/// range with an odd count) exactly.
pub fn gaps(d_min: f64, d_max: f64, samples: usize) -> Vec<f64> {
    if samples < 2 {
        return vec![d_min; samples];
    }
    let m = (samples - 1) as f64;
    (0..samples)
        .map(|i| (d_min * (m - i as f64) + d_max * i as f64) / m)
        .collect()
}

pub fn sweep(opts: &SweepOptions) -> Result<Vec<SweepRow>, CliError> {
    if !(opts.d_min < 0.0 && opts.d_max > 0.0) {
        return Err(CliError::Usage("the gap range must straddle 0".into()));
    }
    if opts.samples < 2 {
        return Err(CliError::Usage("need at least 2 samples".into()));
    }
    opts.contact.validate().map_err(CliError::Usage)?;
    let normal = Normal::new(0.0, opts.sigma())
        .map_err(|e| CliError::Usage(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise: Vec<f64> = (0..opts.mc_samples).map(|_| normal.sample(&mut rng)).collect();
    let sc = &opts.scenario;
    let cfg = &opts.contact;
    gaps(opts.d_min, opts.d_max, opts.samples)
        .into_par_iter()
        .map(|d| {
            let hard = force_curve(ContactKind::Hard, d, cfg, sc)?;
            let soft = force_curve(ContactKind::Soft, d, cfg, sc)?;
            let smooth = force_curve(ContactKind::Smooth, d, cfg, sc)?;
            let st = stochastic_reference(d, &noise, cfg, sc)?;
            Ok(SweepRow {
                d,
                f_hard: hard.force,
                grad_hard: hard.grad,
                f_soft: soft.force,
                grad_soft: soft.grad,
                f_smooth: smooth.force,
                grad_smooth: smooth.grad,
                f_stoch: st.mean_force,
                grad_stoch_fog: st.mean_fog,
            })
        })
        .collect::<Result<Vec<_>, diffsim::contact::ContactError>>()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn write_sweep(rows: &[SweepRow], opts: &SweepOptions, path: &Path) -> Result<(), CliError> {
    let sc = &opts.scenario;
    let comments = vec![
        ("scenario".into(), "point mass at rest on the plane, one solver step".into()),
        ("mass".into(), num(sc.mass)),
        ("gravity".into(), num(sc.gravity)),
        ("dt".into(), num(sc.dt)),
        ("support_force".into(), num(sc.support_force())),
        ("sharpness".into(), num(opts.contact.sharpness)),
        ("stiffness".into(), num(opts.contact.stiffness)),
        ("noise_sigma".into(), num(opts.sigma())),
        ("mc_samples".into(), opts.mc_samples.to_string()),
        ("gradient".into(), "with respect to penetration depth -d".into()),
    ];
    let header = SWEEP_COLUMNS.map(String::from);
    let mut w = csv_writer(path, SWEEP_SCHEMA, &comments, &header)?;
    for r in rows {
        w.write_record([
            r.d,
            r.f_hard,
            r.grad_hard,
            r.f_soft,
            r.grad_soft,
            r.f_smooth,
            r.grad_smooth,
            r.f_stoch,
            r.grad_stoch_fog,
        ]
        .map(num))?;
    }
    w.flush()?;
    Ok(())
}

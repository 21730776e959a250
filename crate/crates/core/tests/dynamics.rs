use diffsim::contact::{ContactKind, ContactModelConfig};
use diffsim::diffcore::{finite_difference, relative_error, Tape, Var};
use diffsim::dynamics::kinematics::kinematics;
use diffsim::dynamics::{
    bias_forces, mass_matrix, moreau_step, total_energy, GeneralizedState, Leg, Link, StepConfig,
    SystemModel,
};

fn no_contact_cfg(dt: f64) -> StepConfig {
    StepConfig {
        dt,
        contact: ContactModelConfig::with_kind(ContactKind::Hard),
    }
}

fn point_pendulum(m: f64, l: f64) -> SystemModel {
    let mut p = SystemModel::pendulum();
    p.legs = vec![Leg {
        hip: [0.0, 0.0],
        links: vec![Link {
            mass: m,
            inertia: 0.0,
            length: l,
            com: l,
        }],
        foot: false,
    }];
    p
}

/// Lifts the model above the ground so that no contact is active.
fn airborne(model: &SystemModel) -> Vec<f64> {
    let mut q = model.nominal_q.clone();
    if let Some(z) = model.z_index() {
        q[z] += 2.0;
    }
    q
}

fn seeded(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    // small deterministic pseudo-random vector
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            ((x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * scale
        })
        .collect()
}

#[test]
fn point_mass_and_pendulum_mass_matrix() {
    let b = SystemModel::bouncer1d();
    assert_eq!(mass_matrix(&b, &[0.4]), vec![1.0]);
    let p = point_pendulum(2.0, 0.7);
    for th in [0.0, 0.4, -1.3] {
        let m = mass_matrix(&p, &[th]);
        assert!((m[0] - 2.0 * 0.49).abs() < 1e-12);
    }
}

/// Σ Jᵀ m J + I Jωᵀ Jω with every Jacobian from finite differences of
/// centre-of-mass positions and body angles.
fn mass_matrix_oracle(model: &SystemModel, q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let zeros = vec![0.0; n];
    let kin0 = kinematics(model, q, &zeros);
    let mut m = vec![0.0; n * n];
    for (bi, body) in kin0.bodies.iter().enumerate() {
        let f = |k: usize| {
            move |x: &[f64]| {
                let kin = kinematics(model, x, &vec![0.0; x.len()]);
                let b = &kin.bodies[bi];
                [b.com[0], b.com[1], b.angle][k]
            }
        };
        let jx = finite_difference(f(0), q, 1e-6).unwrap();
        let jz = finite_difference(f(1), q, 1e-6).unwrap();
        let jw = finite_difference(f(2), q, 1e-6).unwrap();
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] += body.mass * (jx[i] * jx[j] + jz[i] * jz[j]) + body.inertia * jw[i] * jw[j];
            }
        }
    }
    m
}

#[test]
fn mass_matrix_matches_jacobian_assembly() {
    for model in [SystemModel::hopper2d(), SystemModel::quadruped2d()] {
        for seed in 0..5 {
            let q: Vec<f64> = model
                .nominal_q
                .iter()
                .zip(seeded(model.ndof(), seed, 0.6))
                .map(|(a, b)| a + b)
                .collect();
            let m = mass_matrix(&model, &q);
            let oracle = mass_matrix_oracle(&model, &q);
            let n = q.len();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(m[i * n + j], m[j * n + i]);
                    assert!((m[i * n + j] - oracle[i * n + j]).abs() < 1e-7, "{} {i},{j}", model.name);
                }
            }
        }
    }
}

#[test]
fn bias_forces_trivial_cases() {
    let b = SystemModel::bouncer1d();
    assert_eq!(bias_forces(&b, &[1.0], &[0.0]), vec![-9.81]);
    let mut q = SystemModel::quadruped2d();
    q.gravity = 0.0;
    let zeros = vec![0.0; 7];
    assert!(bias_forces(&q, &q.nominal_q, &zeros).iter().all(|&x| x == 0.0));
}

/// Lagrangian oracle: b = −∂V/∂q − Ṁu + ½ ∂(uᵀMu)/∂q, all by finite differences.
fn bias_oracle(model: &SystemModel, q: &[f64], u: &[f64]) -> Vec<f64> {
    let n = q.len();
    let eps = 1e-6;
    let potential = |x: &[f64]| {
        let kin = kinematics(model, x, &vec![0.0; n]);
        kin.bodies.iter().map(|b| b.mass * model.gravity * b.com[1]).sum::<f64>()
    };
    let kinetic = |x: &[f64]| {
        let m = mass_matrix(model, x);
        let mut t = 0.0;
        for i in 0..n {
            for j in 0..n {
                t += 0.5 * u[i] * m[i * n + j] * u[j];
            }
        }
        t
    };
    let dv = finite_difference(potential, q, eps).unwrap();
    let dt = finite_difference(kinetic, q, eps).unwrap();
    // Ṁ u
    let mut mdot = vec![0.0; n * n];
    for k in 0..n {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[k] += eps;
        qm[k] -= eps;
        let (mp, mm) = (mass_matrix(model, &qp), mass_matrix(model, &qm));
        for e in 0..n * n {
            mdot[e] += (mp[e] - mm[e]) / (2.0 * eps) * u[k];
        }
    }
    (0..n)
        .map(|i| {
            let mdu: f64 = (0..n).map(|j| mdot[i * n + j] * u[j]).sum();
            -dv[i] - mdu + dt[i]
        })
        .collect()
}

#[test]
fn bias_forces_match_lagrangian_oracle() {
    let pend = SystemModel::pendulum();
    for (th, w) in [(0.3, 1.5), (-1.0, -2.0), (2.0, 0.7)] {
        let b = bias_forces(&pend, &[th], &[w]);
        let o = bias_oracle(&pend, &[th], &[w]);
        assert!((b[0] - o[0]).abs() < 1e-6, "{b:?} {o:?}");
    }
    for model in [SystemModel::hopper2d(), SystemModel::quadruped2d()] {
        for seed in 0..4 {
            let n = model.ndof();
            let q: Vec<f64> = model.nominal_q.iter().zip(seeded(n, seed, 0.5)).map(|(a, b)| a + b).collect();
            let u = seeded(n, seed + 100, 2.0);
            let b = bias_forces(&model, &q, &u);
            let o = bias_oracle(&model, &q, &u);
            for i in 0..n {
                assert!((b[i] - o[i]).abs() < 1e-5 * o[i].abs().max(1.0), "{} {i}: {} vs {}", model.name, b[i], o[i]);
            }
        }
    }
}

#[test]
fn free_fall_half_steps() {
    let b = SystemModel::bouncer1d();
    let s = GeneralizedState::at_rest(vec![1.0]);
    let out = moreau_step(&b, &s, &[0.0], &no_contact_cfg(0.01)).unwrap();
    assert!((out.state.u[0] + 0.0981).abs() < 1e-15);
    assert!((out.state.q[0] - 0.9995095).abs() < 1e-15);
    assert!(out.contacts.is_empty());
}

#[test]
fn zero_gravity_fixed_point() {
    let mut q = SystemModel::quadruped2d();
    q.gravity = 0.0;
    let s = GeneralizedState::at_rest(airborne(&q));
    let out = moreau_step(&q, &s, &[0.0; 7], &no_contact_cfg(0.005)).unwrap();
    assert_eq!(out.state, s);
}

#[test]
fn resting_ball_hard_contact() {
    let b = SystemModel::bouncer1d();
    let s = GeneralizedState::at_rest(vec![0.0]);
    let dt = 0.01;
    let out = moreau_step(&b, &s, &[0.0], &no_contact_cfg(dt)).unwrap();
    assert!(out.state.u[0].abs() < 1e-12);
    assert!((out.impulses.normal[0] - 9.81 * dt).abs() < 1e-12);
}

#[test]
fn energy_drift_contact_free() {
    let cfg = no_contact_cfg(1e-3);
    let pend = SystemModel::pendulum();
    let mut quad = SystemModel::quadruped2d();
    quad.gravity = 0.0;
    let mut qs = airborne(&quad);
    qs[2] = 0.2;
    let mut qu = vec![0.0; 7];
    qu[2] = 1.0;
    qu[3] = 2.0;
    qu[6] = -3.0;
    let cases = [
        (pend, GeneralizedState { q: vec![1.0], u: vec![0.0] }),
        (quad, GeneralizedState { q: qs, u: qu }),
    ];
    for (model, s0) in cases {
        let zero = vec![0.0; model.ndof()];
        let e0 = total_energy(&model, &s0);
        let mut s = s0;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            s = moreau_step(&model, &s, &zero, &cfg).unwrap().state;
            worst = worst.max((total_energy(&model, &s) - e0).abs());
        }
        // pendulum energy is measured relative to its swing amplitude
        let scale = if model.gravity > 0.0 {
            let bottom = GeneralizedState::at_rest(vec![0.0]);
            e0 - total_energy(&model, &bottom)
        } else {
            e0
        };
        assert!(worst / scale.abs() < 0.01, "{}: {}", model.name, worst / scale);
    }
}

fn rollout_q<'t>(model: &SystemModel<Var<'t>>, s: GeneralizedState<Var<'t>>, steps: usize, cfg: &StepConfig) -> GeneralizedState<Var<'t>> {
    let zero = vec![Var::constant(0.0); model.ndof()];
    let mut s = s;
    for _ in 0..steps {
        s = moreau_step(model, &s, &zero, cfg).unwrap().state;
    }
    s
}

#[test]
fn contact_free_rollout_gradient_exactness() {
    let cfg = no_contact_cfg(5e-3);
    for model in [SystemModel::pendulum(), SystemModel::quadruped2d()] {
        let n = model.ndof();
        let mut q0 = airborne(&model);
        for (q, d) in q0.iter_mut().zip(seeded(n, 3, 0.3)) {
            *q += d;
        }
        let u0 = seeded(n, 4, 1.0);
        let lifted = model.cast::<Var>();
        for out in 0..n {
            let tape = Tape::new();
            let qv = tape.inputs(&q0);
            let s = GeneralizedState { q: qv.clone(), u: u0.iter().map(|&x| Var::constant(x)).collect() };
            let end = rollout_q(&lifted, s, 10, &cfg);
            let g = tape.gradient(end.q[out], &qv).unwrap();
            let fd = finite_difference(
                |x| {
                    let mut s = GeneralizedState { q: x.to_vec(), u: u0.clone() };
                    for _ in 0..10 {
                        s = moreau_step(&model, &s, &vec![0.0; n], &cfg).unwrap().state;
                    }
                    s.q[out]
                },
                &q0,
                1e-6,
            )
            .unwrap();
            for (a, b) in g.iter().zip(&fd) {
                assert!(relative_error(*a, *b) < 1e-7, "{} q{out}: {a} vs {b}", model.name);
            }
        }
    }
}

#[test]
fn free_fall_terminal_height_sensitivity() {
    let b = SystemModel::bouncer1d();
    let cfg = no_contact_cfg(0.01);
    let tape = Tape::new();
    let z = tape.input(2.0);
    let s = GeneralizedState { q: vec![z], u: vec![Var::constant(0.0)] };
    let end = rollout_q(&b.cast(), s, 10, &cfg);
    assert_eq!(tape.gradient(end.q[0], &[z]).unwrap(), vec![1.0]);
    let fd = finite_difference(
        |x| {
            let mut s = GeneralizedState::at_rest(vec![x[0]]);
            for _ in 0..10 {
                s = moreau_step(&b, &s, &[0.0], &cfg).unwrap().state;
            }
            s.q[0]
        },
        &[2.0],
        1e-6,
    )
    .unwrap();
    assert!((fd[0] - 1.0).abs() < 1e-8);
}

#[test]
fn gradient_with_respect_to_link_mass() {
    let model = SystemModel::quadruped2d();
    let cfg = no_contact_cfg(5e-3);
    let q0 = airborne(&model);
    let u0 = seeded(7, 9, 1.0);
    let tau: Vec<f64> = seeded(7, 10, 5.0);
    let run = |mass: f64| {
        let mut m = model.clone();
        m.legs[0].links[1].mass = mass;
        let mut s = GeneralizedState { q: q0.clone(), u: u0.clone() };
        for _ in 0..5 {
            s = moreau_step(&m, &s, &tau, &cfg).unwrap().state;
        }
        s.u[4]
    };
    let tape = Tape::new();
    let mass = tape.input(0.3);
    let mut lifted = model.cast::<Var>();
    lifted.legs[0].links[1].mass = mass;
    let tv: Vec<Var> = tau.iter().map(|&x| Var::constant(x)).collect();
    let mut s = GeneralizedState::<Var> {
        q: q0.iter().map(|&x| Var::constant(x)).collect(),
        u: u0.iter().map(|&x| Var::constant(x)).collect(),
    };
    for _ in 0..5 {
        s = moreau_step(&lifted, &s, &tv, &cfg).unwrap().state;
    }
    let g = tape.gradient(s.u[4], &[mass]).unwrap()[0];
    let fd = finite_difference(|x| run(x[0]), &[0.3], 1e-6).unwrap()[0];
    assert!(relative_error(g, fd) < 1e-7, "{g} vs {fd}");
}

#[test]
fn midpoint_local_error_order() {
    let pend = SystemModel::pendulum();
    let s0 = GeneralizedState { q: vec![0.8], u: vec![0.5] };
    let reference = |t: f64| {
        let steps = 20_000;
        let cfg = no_contact_cfg(t / steps as f64);
        let mut s = s0.clone();
        for _ in 0..steps {
            s = moreau_step(&pend, &s, &[0.0], &cfg).unwrap().state;
        }
        s.q[0]
    };
    let err = |h: f64| {
        let s = moreau_step(&pend, &s0, &[0.0], &no_contact_cfg(h)).unwrap().state;
        (s.q[0] - reference(h)).abs()
    };
    let (e1, e2) = (err(0.02), err(0.01));
    let order = (e1 / e2).log2();
    assert!(order >= 2.0, "observed local order {order}");
}

#[test]
fn soft_and_smooth_resting_contact() {
    let b = SystemModel::bouncer1d();
    for kind in [ContactKind::Soft, ContactKind::Smooth] {
        let cfg = StepConfig {
            dt: 1e-3,
            contact: ContactModelConfig::with_kind(kind),
        };
        let mut s = GeneralizedState::at_rest(vec![0.0]);
        for _ in 0..2000 {
            s = moreau_step(&b, &s, &[0.0], &cfg).unwrap().state;
        }
        assert!(s.q[0] < 0.0 && s.q[0] > -0.05, "{kind:?} {}", s.q[0]);
        assert!(s.u[0].abs() < 0.05);
    }
}

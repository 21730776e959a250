use crate::diffcore::{dot, Real};
use crate::dynamics::linalg::Cholesky;

use super::{ContactError, ContactKind, ContactModelConfig, ContactPoint};

/// Converged contact impulses, one entry per contact in the input order.
#[derive(Debug, Clone)]
pub struct ImpulseSolution<S> {
    pub normal: Vec<S>,
    pub tangent: Vec<S>,
    /// Max impulse change of the last sweep (N·s).
    pub residual: f64,
    pub sweeps: usize,
}

impl<S: Real> ImpulseSolution<S> {
    pub fn empty() -> Self {
        ImpulseSolution {
            normal: vec![],
            tangent: vec![],
            residual: 0.0,
            sweeps: 0,
        }
    }
}

/// Projected Gauss-Seidel over the contact Delassus operator `G = J M⁻¹ Jᵀ`.
///
/// Per contact and sweep, with `r = 1 / G_ii`:
/// `P_n ← w · max(0, P_n − r (g_n + ε u_n⁻))`, then
/// `P_t ← w · clamp(P_t − r_t g_t, −μ P_n, μ P_n)`,
/// where `g` is the post-impulse contact velocity. `w = 1` for hard contact.
/// The executed sweeps are recorded, so gradients are exact for the
/// computation that actually ran.
pub fn solve_contacts<S: Real>(
    mass: &Cholesky<S>,
    bias: &[S],
    u: &[S],
    tau: &[S],
    contacts: &[ContactPoint<S>],
    cfg: &ContactModelConfig,
    dt: f64,
) -> Result<ImpulseSolution<S>, ContactError> {
    debug_assert!(cfg.kind != ContactKind::Soft);
    let k = contacts.len();
    if k == 0 {
        return Ok(ImpulseSolution::empty());
    }
    let n = mass.dim();

    // rows 2i (normal) and 2i + 1 (tangent)
    let rows: Vec<&[S]> = contacts
        .iter()
        .flat_map(|c| [c.jn.as_slice(), c.jt.as_slice()])
        .collect();
    let minv_jt: Vec<Vec<S>> = rows.iter().map(|r| mass.solve(r)).collect();
    let m = rows.len();
    let mut delassus = vec![S::zero(); m * m];
    for r in 0..m {
        for s in r..m {
            let v = dot(rows[r], &minv_jt[s]);
            delassus[r * m + s] = v;
            delassus[s * m + r] = v;
        }
    }

    let force: Vec<S> = (0..n).map(|i| bias[i] + tau[i]).collect();
    let acc = mass.solve(&force);
    let u_free: Vec<S> = (0..n).map(|i| u[i] + acc[i] * dt).collect();
    let free_vel: Vec<S> = rows.iter().map(|r| dot(r, &u_free)).collect();
    let approach: Vec<S> = contacts
        .iter()
        .map(|c| S::zero().min(dot(&c.jn, u)))
        .collect();
    let eps = cfg.restitution;
    let mu = cfg.friction;

    let mut p = vec![S::zero(); m];
    let velocity = |row: usize, p: &[S]| -> S {
        let mut g = free_vel[row];
        for (s, &ps) in p.iter().enumerate() {
            if ps.value() != 0.0 {
                g += delassus[row * m + s] * ps;
            }
        }
        g
    };

    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < cfg.gs_iters {
        sweeps += 1;
        residual = 0.0;
        for (i, c) in contacts.iter().enumerate() {
            let (rn, rt) = (2 * i, 2 * i + 1);
            let g_nn = delassus[rn * m + rn];
            if g_nn.value() > 1e-12 {
                let g = velocity(rn, &p);
                let trial = p[rn] - (g + approach[i] * eps) / g_nn;
                let next = c.weight * S::zero().max(trial);
                residual = residual.max((next.value() - p[rn].value()).abs());
                p[rn] = next;
            }
            let g_tt = delassus[rt * m + rt];
            if g_tt.value() > 1e-12 {
                let g = velocity(rt, &p);
                let bound = p[rn] * mu;
                let trial = p[rt] - g / g_tt;
                let next = c.weight * trial.clamp(-bound, bound);
                residual = residual.max((next.value() - p[rt].value()).abs());
                p[rt] = next;
            }
        }
        if residual < cfg.gs_tol {
            return Ok(ImpulseSolution {
                normal: (0..k).map(|i| p[2 * i]).collect(),
                tangent: (0..k).map(|i| p[2 * i + 1]).collect(),
                residual,
                sweeps,
            });
        }
    }
    if cfg.accept_unconverged {
        return Ok(ImpulseSolution {
            normal: (0..k).map(|i| p[2 * i]).collect(),
            tangent: (0..k).map(|i| p[2 * i + 1]).collect(),
            residual,
            sweeps,
        });
    }
    Err(ContactError::NonConvergence { residual, sweeps })
}

/// Penalty normal force `max(0, −k_n d − c_n ḋ)` for `d < 0`, zero otherwise.
pub fn soft_force<S: Real>(d: S, d_dot: S, cfg: &ContactModelConfig) -> S {
    if d.value() < 0.0 {
        S::zero().max(-(d * cfg.stiffness) - d_dot * cfg.damping)
    } else {
        S::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::sigmoid_weight;

    fn single(weight: f64) -> ContactPoint<f64> {
        ContactPoint {
            point: 0,
            gap: 0.0,
            normal: [0.0, 1.0],
            jn: vec![1.0],
            jt: vec![0.0],
            weight,
        }
    }

    /// Unit mass moving down at 1 m/s, no gravity.
    fn impact(cfg: &ContactModelConfig, weight: f64) -> (f64, f64) {
        let m = Cholesky::factor(&[1.0], 1).unwrap();
        let sol = solve_contacts(&m, &[0.0], &[-1.0], &[0.0], &[single(weight)], cfg, 0.01).unwrap();
        let p = sol.normal[0];
        (p, -1.0 + p)
    }

    #[test]
    fn empty_contact_set() {
        let m = Cholesky::factor(&[1.0], 1).unwrap();
        let cfg = ContactModelConfig::with_kind(ContactKind::Hard);
        let sol = solve_contacts(&m, &[0.0], &[0.0], &[0.0], &[], &cfg, 0.01).unwrap();
        assert!(sol.normal.is_empty());
        assert_eq!(sol.sweeps, 0);
    }

    #[test]
    fn hard_inelastic_impact() {
        let cfg = ContactModelConfig::with_kind(ContactKind::Hard);
        let (p, v) = impact(&cfg, 1.0);
        assert!((p - 1.0).abs() < 1e-10);
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn smooth_half_weight_impact() {
        let cfg = ContactModelConfig::default();
        let (p, v) = impact(&cfg, sigmoid_weight(0.0, cfg.sharpness));
        assert!((p - 0.5).abs() < 1e-10);
        assert!((v + 0.5).abs() < 1e-10);
    }

    #[test]
    fn restitution_half() {
        let mut cfg = ContactModelConfig::with_kind(ContactKind::Hard);
        cfg.restitution = 0.5;
        let (p, v) = impact(&cfg, 1.0);
        assert!((p - 1.5).abs() < 1e-10);
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn soft_force_cases() {
        let mut cfg = ContactModelConfig::with_kind(ContactKind::Soft);
        cfg.stiffness = 1e4;
        cfg.damping = 100.0;
        assert_eq!(soft_force(0.01, 0.0, &cfg), 0.0);
        assert!((soft_force(-0.01, 0.0, &cfg) - 100.0).abs() < 1e-9);
        assert_eq!(soft_force(-0.001, 1.0, &cfg), 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        // Two coupled contacts on one body, one sweep only.
        let m = Cholesky::factor(&[1.0, 0.0, 0.0, 0.2], 2).unwrap();
        let mk = |r: f64| ContactPoint {
            point: 0,
            gap: 0.0,
            normal: [0.0, 1.0],
            jn: vec![1.0, r],
            jt: vec![0.0, 0.0],
            weight: 1.0,
        };
        let mut cfg = ContactModelConfig::with_kind(ContactKind::Hard);
        cfg.gs_iters = 1;
        let err = solve_contacts(&m, &[-9.81, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[mk(0.3), mk(-0.3)], &cfg, 0.01)
            .unwrap_err();
        assert!(matches!(err, ContactError::NonConvergence { sweeps: 1, .. }));
        cfg.accept_unconverged = true;
        let sol = solve_contacts(&m, &[-9.81, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[mk(0.3), mk(-0.3)], &cfg, 0.01)
            .unwrap();
        assert_eq!(sol.sweeps, 1);
        assert!(sol.residual > cfg.gs_tol);
    }
}

//! Forward kinematics, point Jacobians and velocity-product accelerations.
//!
//! Jacobian columns are `Option`s; `None` marks a structural zero.

use crate::diffcore::Real;

use super::model::SystemModel;

pub type Col<S> = Option<[S; 2]>;

#[derive(Debug, Clone)]
pub struct BodyKin<S> {
    pub mass: S,
    pub inertia: S,
    pub com: [S; 2],
    pub angle: S,
    /// Linear velocity Jacobian of the centre of mass, one column per coordinate.
    pub jv: Vec<Col<S>>,
    /// Angular velocity Jacobian (entries are 0 or 1 in the plane).
    pub jw: Vec<bool>,
    /// Centre-of-mass acceleration at zero generalized acceleration.
    pub bias_acc: [S; 2],
}

#[derive(Debug, Clone)]
pub struct PointKin<S> {
    pub pos: [S; 2],
    pub jv: Vec<Col<S>>,
}

#[derive(Debug, Clone)]
pub struct Kinematics<S> {
    pub bodies: Vec<BodyKin<S>>,
    pub points: Vec<PointKin<S>>,
    pub base_pos: [S; 2],
    pub base_angle: S,
}

fn rot<S: Real>(c: S, s: S, r: [S; 2]) -> [S; 2] {
    [r[0] * c - r[1] * s, r[0] * s + r[1] * c]
}

fn add<S: Real>(a: [S; 2], b: [S; 2]) -> [S; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub<S: Real>(a: [S; 2], b: [S; 2]) -> [S; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale<S: Real>(a: [S; 2], k: S) -> [S; 2] {
    [a[0] * k, a[1] * k]
}

fn perp<S: Real>(v: [S; 2]) -> [S; 2] {
    [-v[1], v[0]]
}

struct Frame<S> {
    base_pos: [S; 2],
    x_col: Option<usize>,
    z_col: Option<usize>,
    pitch_col: Option<usize>,
    n: usize,
}

impl<S: Real> Frame<S> {
    /// Jacobian of a point `p` rotating about the listed pivots.
    fn jacobian(&self, p: [S; 2], pivots: &[(usize, [S; 2])]) -> Vec<Col<S>> {
        let mut jv: Vec<Col<S>> = vec![None; self.n];
        if let Some(i) = self.x_col {
            jv[i] = Some([S::cst(1.0), S::zero()]);
        }
        if let Some(i) = self.z_col {
            jv[i] = Some([S::zero(), S::cst(1.0)]);
        }
        if let Some(i) = self.pitch_col {
            jv[i] = Some(perp(sub(p, self.base_pos)));
        }
        for &(dof, o) in pivots {
            jv[dof] = Some(perp(sub(p, o)));
        }
        jv
    }

    fn angular(&self, pivots: &[(usize, [S; 2])]) -> Vec<bool> {
        let mut jw = vec![false; self.n];
        if let Some(i) = self.pitch_col {
            jw[i] = true;
        }
        for &(dof, _) in pivots {
            jw[dof] = true;
        }
        jw
    }
}

pub fn kinematics<S: Real>(model: &SystemModel<S>, q: &[S], u: &[S]) -> Kinematics<S> {
    let n = model.ndof();
    debug_assert_eq!(q.len(), n);
    debug_assert_eq!(u.len(), n);
    let mut k = 0;
    let mut take = |free: bool| {
        if free {
            k += 1;
            Some(k - 1)
        } else {
            None
        }
    };
    let x_col = take(model.base.x);
    let z_col = take(model.base.z);
    let pitch_col = take(model.base.pitch);
    let mut next = k;

    let x = x_col.map_or(S::cst(model.base_origin[0]), |i| q[i]);
    let z = z_col.map_or(S::cst(model.base_origin[1]), |i| q[i]);
    let (theta, omega) = match pitch_col {
        Some(i) => (q[i], u[i]),
        None => (S::zero(), S::zero()),
    };
    let (c0, s0) = match pitch_col {
        Some(_) => (theta.cos(), theta.sin()),
        None => (S::cst(1.0), S::zero()),
    };
    let base_pos = [x, z];
    let frame = Frame {
        base_pos,
        x_col,
        z_col,
        pitch_col,
        n,
    };

    let mut bodies = Vec::with_capacity(model.n_bodies());
    let mut points = Vec::with_capacity(model.n_contacts());

    bodies.push(BodyKin {
        mass: model.base_mass,
        inertia: model.base_inertia,
        com: base_pos,
        angle: theta,
        jv: frame.jacobian(base_pos, &[]),
        jw: frame.angular(&[]),
        bias_acc: [S::zero(), S::zero()],
    });
    for r in &model.base_contacts {
        let p = add(base_pos, rot(c0, s0, [S::cst(r[0]), S::cst(r[1])]));
        points.push(PointKin {
            pos: p,
            jv: frame.jacobian(p, &[]),
        });
    }

    let omega_sq = omega * omega;
    for leg in &model.legs {
        let hip_w = rot(c0, s0, [S::cst(leg.hip[0]), S::cst(leg.hip[1])]);
        let mut o = add(base_pos, hip_w);
        let mut acc_o = scale(hip_w, -omega_sq);
        let mut phi = theta;
        let mut w = omega;
        let mut pivots: Vec<(usize, [S; 2])> = Vec::with_capacity(leg.links.len());
        for l in &leg.links {
            let dof = next;
            next += 1;
            phi += q[dof];
            w += u[dof];
            pivots.push((dof, o));
            let (c, s) = (phi.cos(), phi.sin());
            let w_sq = w * w;
            let seg_c = rot(c, s, [S::zero(), -l.com]);
            let com = add(o, seg_c);
            bodies.push(BodyKin {
                mass: l.mass,
                inertia: l.inertia,
                com,
                angle: phi,
                jv: frame.jacobian(com, &pivots),
                jw: frame.angular(&pivots),
                bias_acc: sub(acc_o, scale(seg_c, w_sq)),
            });
            let seg = rot(c, s, [S::zero(), -l.length]);
            o = add(o, seg);
            acc_o = sub(acc_o, scale(seg, w_sq));
        }
        if leg.foot {
            points.push(PointKin {
                pos: o,
                jv: frame.jacobian(o, &pivots),
            });
        }
    }

    Kinematics {
        bodies,
        points,
        base_pos,
        base_angle: theta,
    }
}

/// Dense row-major mass matrix `Σ m Jvᵀ Jv + I Jωᵀ Jω`.
pub fn mass_matrix_from<S: Real>(kin: &Kinematics<S>, n: usize) -> Vec<S> {
    let mut m = vec![S::zero(); n * n];
    let mut touched = vec![false; n * n];
    for b in &kin.bodies {
        for i in 0..n {
            for j in i..n {
                let mut e: Option<S> = None;
                if let (Some(a), Some(c)) = (b.jv[i], b.jv[j]) {
                    e = Some((a[0] * c[0] + a[1] * c[1]) * b.mass);
                }
                if b.jw[i] && b.jw[j] {
                    e = Some(match e {
                        Some(v) => v + b.inertia,
                        None => b.inertia,
                    });
                }
                if let Some(v) = e {
                    let k = i * n + j;
                    m[k] = if touched[k] { m[k] + v } else { v };
                    touched[k] = true;
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            m[i * n + j] = m[j * n + i];
        }
    }
    m
}

/// Gravity plus velocity-product generalized forces, `Σ Jvᵀ m (g − J̇v u)`.
pub fn bias_from<S: Real>(kin: &Kinematics<S>, n: usize, gravity: S) -> Vec<S> {
    let mut b = vec![S::zero(); n];
    for body in &kin.bodies {
        let f = [
            -(body.bias_acc[0] * body.mass),
            -((gravity + body.bias_acc[1]) * body.mass),
        ];
        for (bi, col) in b.iter_mut().zip(&body.jv) {
            if let Some(c) = col {
                *bi += c[0] * f[0] + c[1] * f[1];
            }
        }
    }
    b
}

pub fn potential_energy<S: Real>(kin: &Kinematics<S>, gravity: S) -> S {
    let mut v = S::zero();
    for b in &kin.bodies {
        v += b.mass * gravity * b.com[1];
    }
    v
}

use serde::{Deserialize, Serialize};

use crate::diffcore::Real;

/// Which base coordinates are free. Locked coordinates sit at `SystemModel::base_origin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaseDofs {
    pub x: bool,
    pub z: bool,
    pub pitch: bool,
}

impl BaseDofs {
    pub fn count(&self) -> usize {
        self.x as usize + self.z as usize + self.pitch as usize
    }
}

#[derive(Debug, Clone)]
pub struct Link<S = f64> {
    pub mass: S,
    /// Scalar planar inertia about the centre of mass (diagonal-only model).
    pub inertia: S,
    pub length: S,
    /// Distance of the centre of mass from the proximal joint, along the link.
    pub com: S,
}

/// A serial chain of revolute joints hanging off the base. Links point
/// straight down at zero joint angle; positive angles swing the chain forward.
#[derive(Debug, Clone)]
pub struct Leg<S = f64> {
    /// Hip position in the base frame (m).
    pub hip: [f64; 2],
    pub links: Vec<Link<S>>,
    /// Whether the distal end of the last link is a contact point.
    pub foot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    Bouncer1d,
    Pendulum,
    Hopper2d,
    Quadruped2d,
}

impl SystemId {
    pub fn all() -> [SystemId; 4] {
        [
            SystemId::Bouncer1d,
            SystemId::Pendulum,
            SystemId::Hopper2d,
            SystemId::Quadruped2d,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemId::Bouncer1d => "bouncer1d",
            SystemId::Pendulum => "pendulum",
            SystemId::Hopper2d => "hopper2d",
            SystemId::Quadruped2d => "quadruped2d",
        }
    }

    pub fn model(&self) -> SystemModel {
        match self {
            SystemId::Bouncer1d => SystemModel::bouncer1d(),
            SystemId::Pendulum => SystemModel::pendulum(),
            SystemId::Hopper2d => SystemModel::hopper2d(),
            SystemId::Quadruped2d => SystemModel::quadruped2d(),
        }
    }
}

impl std::str::FromStr for SystemId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemId::all()
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown system `{s}`"))
    }
}

impl std::fmt::Display for SystemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Planar articulated mechanism: a (partially) floating base plus legs.
///
/// Generalized coordinates are ordered: free base coordinates (x, z, pitch),
/// then every joint leg by leg, proximal to distal.
#[derive(Debug, Clone)]
pub struct SystemModel<S = f64> {
    pub name: String,
    pub base: BaseDofs,
    pub base_origin: [f64; 2],
    pub base_mass: S,
    pub base_inertia: S,
    pub legs: Vec<Leg<S>>,
    /// Body-fixed contact points on the base, in the base frame.
    pub base_contacts: Vec<[f64; 2]>,
    pub gravity: S,
    /// Generalized coordinate indices driven by actuators.
    pub actuated: Vec<usize>,
    /// Position limits for the actuated coordinates (rad or m).
    pub limits: Vec<(f64, f64)>,
    pub nominal_q: Vec<f64>,
}

pub const GRAVITY: f64 = 9.81;

fn link(mass: f64, inertia: f64, length: f64, com: f64) -> Link {
    Link {
        mass,
        inertia,
        length,
        com,
    }
}

impl SystemModel<f64> {
    /// Vertical point mass above the ground plane.
    pub fn bouncer1d() -> Self {
        SystemModel {
            name: "bouncer1d".into(),
            base: BaseDofs {
                x: false,
                z: true,
                pitch: false,
            },
            base_origin: [0.0, 0.0],
            base_mass: 1.0,
            base_inertia: 0.01,
            legs: vec![],
            base_contacts: vec![[0.0, 0.0]],
            gravity: GRAVITY,
            actuated: vec![0],
            limits: vec![(0.0, 2.0)],
            nominal_q: vec![0.3],
        }
    }

    /// Fixed-pivot single link, contact-free.
    pub fn pendulum() -> Self {
        SystemModel {
            name: "pendulum".into(),
            base: BaseDofs {
                x: false,
                z: false,
                pitch: false,
            },
            base_origin: [0.0, 1.5],
            base_mass: 1.0,
            base_inertia: 0.01,
            legs: vec![Leg {
                hip: [0.0, 0.0],
                links: vec![link(1.0, 0.01, 0.5, 0.45)],
                foot: false,
            }],
            base_contacts: vec![],
            gravity: GRAVITY,
            actuated: vec![0],
            limits: vec![(-3.0, 3.0)],
            nominal_q: vec![0.0],
        }
    }

    /// Sliding base (x, z, no pitch) on one two-link leg.
    pub fn hopper2d() -> Self {
        let (hip, knee) = (0.5, -1.0);
        let l = 0.25;
        let height = l * hip.cos() + l * (hip + knee).cos();
        SystemModel {
            name: "hopper2d".into(),
            base: BaseDofs {
                x: true,
                z: true,
                pitch: false,
            },
            base_origin: [0.0, 0.0],
            base_mass: 3.0,
            base_inertia: 0.05,
            legs: vec![Leg {
                hip: [0.0, 0.0],
                links: vec![link(0.5, 0.003, l, 0.1), link(0.3, 0.002, l, 0.125)],
                foot: true,
            }],
            base_contacts: vec![],
            gravity: GRAVITY,
            actuated: vec![2, 3],
            limits: vec![(-1.2, 1.4), (-2.5, -0.1)],
            nominal_q: vec![0.0, height, hip, knee],
        }
    }

    /// Pitching base with a front and a hind two-link leg.
    pub fn quadruped2d() -> Self {
        let (hip, knee) = (0.5, -1.0);
        let l = 0.25;
        let height = l * hip.cos() + l * (hip + knee).cos();
        let leg = |x: f64| Leg {
            hip: [x, 0.0],
            links: vec![link(0.6, 0.004, l, 0.1), link(0.3, 0.002, l, 0.125)],
            foot: true,
        };
        SystemModel {
            name: "quadruped2d".into(),
            base: BaseDofs {
                x: true,
                z: true,
                pitch: true,
            },
            base_origin: [0.0, 0.0],
            base_mass: 6.0,
            base_inertia: 0.1,
            legs: vec![leg(0.3), leg(-0.3)],
            base_contacts: vec![],
            gravity: GRAVITY,
            actuated: vec![3, 4, 5, 6],
            limits: vec![(-1.2, 1.4), (-2.5, -0.1), (-1.2, 1.4), (-2.5, -0.1)],
            nominal_q: vec![0.0, height, 0.0, hip, knee, hip, knee],
        }
    }

    /// Lifts every physical parameter into the scalar type `S` as constants.
    pub fn cast<S: Real>(&self) -> SystemModel<S> {
        self.map(|x| S::cst(x))
    }

    /// Multiplies body `i`'s mass and inertia by `scales[i]` (base first, then
    /// links leg by leg).
    pub fn with_mass_scales(&self, scales: &[f64]) -> Self {
        let mut m = self.clone();
        let mut it = scales.iter().copied();
        let s = it.next().unwrap_or(1.0);
        m.base_mass *= s;
        m.base_inertia *= s;
        for leg in &mut m.legs {
            for l in &mut leg.links {
                let s = it.next().unwrap_or(1.0);
                l.mass *= s;
                l.inertia *= s;
            }
        }
        m
    }
}

impl<S: Real> SystemModel<S> {
    pub fn map<T: Real>(&self, f: impl Fn(S) -> T) -> SystemModel<T> {
        SystemModel {
            name: self.name.clone(),
            base: self.base,
            base_origin: self.base_origin,
            base_mass: f(self.base_mass),
            base_inertia: f(self.base_inertia),
            legs: self
                .legs
                .iter()
                .map(|leg| Leg {
                    hip: leg.hip,
                    links: leg
                        .links
                        .iter()
                        .map(|l| Link {
                            mass: f(l.mass),
                            inertia: f(l.inertia),
                            length: f(l.length),
                            com: f(l.com),
                        })
                        .collect(),
                    foot: leg.foot,
                })
                .collect(),
            base_contacts: self.base_contacts.clone(),
            gravity: f(self.gravity),
            actuated: self.actuated.clone(),
            limits: self.limits.clone(),
            nominal_q: self.nominal_q.clone(),
        }
    }

    pub fn ndof(&self) -> usize {
        self.base.count() + self.legs.iter().map(|l| l.links.len()).sum::<usize>()
    }

    pub fn n_bodies(&self) -> usize {
        1 + self.legs.iter().map(|l| l.links.len()).sum::<usize>()
    }

    pub fn n_contacts(&self) -> usize {
        self.base_contacts.len() + self.legs.iter().filter(|l| l.foot).count()
    }

    pub fn n_actuated(&self) -> usize {
        self.actuated.len()
    }

    /// Index of the pitch coordinate, if the base can rotate.
    pub fn pitch_index(&self) -> Option<usize> {
        self.base
            .pitch
            .then(|| self.base.x as usize + self.base.z as usize)
    }

    pub fn x_index(&self) -> Option<usize> {
        self.base.x.then_some(0)
    }

    pub fn z_index(&self) -> Option<usize> {
        self.base.z.then_some(self.base.x as usize)
    }

    pub fn total_mass(&self) -> f64 {
        self.base_mass.value()
            + self
                .legs
                .iter()
                .flat_map(|l| &l.links)
                .map(|l| l.mass.value())
                .sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut bodies = vec![(self.base_mass.value(), self.base_inertia.value())];
        for leg in &self.legs {
            for l in &leg.links {
                bodies.push((l.mass.value(), l.inertia.value()));
                if !(l.length.value() > 0.0) {
                    return Err("link lengths must be positive".into());
                }
            }
        }
        if bodies.iter().any(|&(m, i)| !(m > 0.0) || !(i >= 0.0)) {
            return Err("masses must be positive and inertias non-negative".into());
        }
        if self.nominal_q.len() != self.ndof() {
            return Err("nominal configuration has the wrong dimension".into());
        }
        if self.limits.len() != self.actuated.len() {
            return Err("one limit pair per actuated coordinate".into());
        }
        if self.actuated.iter().any(|&i| i >= self.ndof()) {
            return Err("actuated index out of range".into());
        }
        Ok(())
    }
}

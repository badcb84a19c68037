use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::o3::Vec3;

/// What couples the particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Signed charges; like charges repel.
    Charges(Vec<f64>),
    /// Masses under mutual gravitation (`G = 1`).
    Masses(Vec<f64>),
}

impl Coupling {
    pub fn values(&self) -> &[f64] {
        match self {
            Coupling::Charges(q) | Coupling::Masses(q) => q,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub coupling: Coupling,
    pub time: f64,
}

impl SimState {
    pub fn new(positions: Vec<Vec3>, velocities: Vec<Vec3>, coupling: Coupling) -> Result<Self> {
        let n = positions.len();
        if velocities.len() != n || coupling.values().len() != n {
            return Err(Error::Shape(format!(
                "{n} positions, {} velocities, {} couplings",
                velocities.len(),
                coupling.values().len()
            )));
        }
        let state = Self {
            positions,
            velocities,
            coupling,
            time: 0.0,
        };
        if let Some(i) = state.first_non_finite() {
            return Err(Error::Diverged(i));
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn first_non_finite(&self) -> Option<usize> {
        (0..self.len()).find(|&i| {
            self.positions[i].iter().chain(&self.velocities[i]).any(|v| !v.is_finite())
                || !self.coupling.values()[i].is_finite()
        })
    }

    /// `Σ m_i v_i`, with unit mass for charged particles.
    pub fn momentum(&self) -> Vec3 {
        let masses: Option<&[f64]> = match &self.coupling {
            Coupling::Masses(m) => Some(m),
            Coupling::Charges(_) => None,
        };
        let mut p = [0.0; 3];
        for (i, v) in self.velocities.iter().enumerate() {
            let m = masses.map_or(1.0, |m| m[i]);
            for k in 0..3 {
                p[k] += m * v[k];
            }
        }
        p
    }

    /// Kinetic plus softened pair potential energy.
    pub fn energy(&self, softening: f64) -> f64 {
        let n = self.len();
        let q = self.coupling.values();
        let gravity = matches!(self.coupling, Coupling::Masses(_));
        let mut kinetic = 0.0;
        for (i, v) in self.velocities.iter().enumerate() {
            let m = if gravity { q[i] } else { 1.0 };
            kinetic += 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        }
        let mut potential = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = sub(&self.positions[i], &self.positions[j]);
                let r = (dot(&d, &d) + softening * softening).sqrt();
                potential += if gravity { -q[i] * q[j] / r } else { q[i] * q[j] / r };
            }
        }
        kinetic + potential
    }
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Softened pairwise accelerations. Each pair is evaluated once and applied
/// with opposite signs, so the pair contributions to `Σ m_i a_i` cancel.
///
/// Charges: `a_i = Σ_j q_i q_j (x_i − x_j) / (r² + ε²)^{3/2}` (unit mass).
/// Masses: `a_i = Σ_j m_j (x_j − x_i) / (r² + ε²)^{3/2}`.
pub fn accelerations(positions: &[Vec3], coupling: &Coupling, softening: f64) -> Result<Vec<Vec3>> {
    let n = positions.len();
    let eps2 = softening * softening;
    let mut acc = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sub(&positions[i], &positions[j]);
            let r2 = dot(&d, &d) + eps2;
            let inv = 1.0 / (r2 * r2.sqrt());
            // (ci, cj): coefficients of d in a_i and −d in a_j
            let (ci, cj) = match coupling {
                Coupling::Charges(q) => {
                    let c = q[i] * q[j] * inv;
                    (c, c)
                }
                Coupling::Masses(m) => (-m[j] * inv, -m[i] * inv),
            };
            for k in 0..3 {
                acc[i][k] += ci * d[k];
                acc[j][k] -= cj * d[k];
            }
        }
    }
    if let Some(i) = acc.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged(i));
    }
    Ok(acc)
}

/// One kick-drift-kick step. `acc` must hold the acceleration at the current
/// positions and is replaced by the acceleration at the new ones, so a run of
/// steps costs one force evaluation each.
pub fn leapfrog_step_cached<F>(state: &mut SimState, acc: &mut Vec<Vec3>, accel: &F, dt: f64) -> Result<()>
where
    F: Fn(&SimState) -> Result<Vec<Vec3>>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let half = 0.5 * dt;
    for (v, a) in state.velocities.iter_mut().zip(acc.iter()) {
        for k in 0..3 {
            v[k] += half * a[k];
        }
    }
    for (x, v) in state.positions.iter_mut().zip(&state.velocities) {
        for k in 0..3 {
            x[k] += dt * v[k];
        }
    }
    *acc = accel(state)?;
    for (v, a) in state.velocities.iter_mut().zip(acc.iter()) {
        for k in 0..3 {
            v[k] += half * a[k];
        }
    }
    state.time += dt;
    Ok(())
}

/// `v½ = v + (dt/2) a(x)`, `x' = x + dt v½`, `v' = v½ + (dt/2) a(x')`.
pub fn leapfrog_step<F>(state: &SimState, accel: F, dt: f64) -> Result<SimState>
where
    F: Fn(&SimState) -> Result<Vec<Vec3>>,
{
    let mut next = state.clone();
    let mut acc = accel(state)?;
    leapfrog_step_cached(&mut next, &mut acc, &accel, dt)?;
    Ok(next)
}

/// Runs `steps` leapfrog steps, calling `observe` after every step with the
/// step count and the acceleration at the new positions. Time is set to
/// `t0 + step·dt` rather than accumulated.
pub fn integrate<F, O>(state: &mut SimState, accel: F, dt: f64, steps: usize, mut observe: O) -> Result<()>
where
    F: Fn(&SimState) -> Result<Vec<Vec3>>,
    O: FnMut(usize, &SimState, &[Vec3]),
{
    let t0 = state.time;
    let mut acc = accel(state)?;
    for step in 1..=steps {
        leapfrog_step_cached(state, &mut acc, &accel, dt)?;
        state.time = t0 + step as f64 * dt;
        observe(step, state, &acc);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(d: f64, coupling: Coupling) -> SimState {
        SimState::new(vec![[-d, 0.0, 0.0], [d, 0.0, 0.0]], vec![[0.0; 3]; 2], coupling).unwrap()
    }

    #[test]
    fn zero_acceleration_is_pure_drift() {
        let s = SimState::new(vec![[1.0, 2.0, 3.0]], vec![[0.5, -1.0, 2.0]], Coupling::Masses(vec![1.0])).unwrap();
        let next = leapfrog_step(&s, |s| Ok(vec![[0.0; 3]; s.len()]), 0.1).unwrap();
        assert_eq!(next.positions[0], [1.0 + 0.1 * 0.5, 2.0 - 0.1, 3.0 + 0.1 * 2.0]);
        assert_eq!(next.velocities, s.velocities);
        assert_eq!(next.time, 0.1);
    }

    #[test]
    fn third_law_holds_exactly() {
        let s = SimState::new(
            vec![[0.3, -0.2, 0.9], [-0.4, 0.1, 0.2]],
            vec![[0.0; 3]; 2],
            Coupling::Masses(vec![1.0, 1.0]),
        )
        .unwrap();
        let a = accelerations(&s.positions, &s.coupling, 0.1).unwrap();
        for k in 0..3 {
            assert_eq!(a[0][k], -a[1][k]);
        }
    }

    #[test]
    fn gravity_attracts_and_like_charges_repel() {
        let g = accelerations(&pair(0.5, Coupling::Masses(vec![1.0, 1.0])).positions, &Coupling::Masses(vec![1.0, 1.0]), 0.1).unwrap();
        assert!(g[0][0] > 0.0 && g[1][0] < 0.0);
        for q in [1.0, -1.0] {
            let c = Coupling::Charges(vec![q, q]);
            let a = accelerations(&pair(0.5, c.clone()).positions, &c, 0.1).unwrap();
            assert!(a[0][0] < 0.0 && a[1][0] > 0.0, "like charges {q} must repel");
        }
        let c = Coupling::Charges(vec![1.0, -1.0]);
        let a = accelerations(&pair(0.5, c.clone()).positions, &c, 0.1).unwrap();
        assert!(a[0][0] > 0.0);
    }

    #[test]
    fn softened_magnitude() {
        let c = Coupling::Masses(vec![1.0, 1.0]);
        let a = accelerations(&pair(0.5, c.clone()).positions, &c, 0.1).unwrap();
        let expected = 1.0 / (1.0f64 + 0.01).powf(1.5);
        assert!((a[0][0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_acceleration_names_particle() {
        // coincident particles without softening
        let s = SimState::new(vec![[0.0; 3], [0.0; 3]], vec![[0.0; 3]; 2], Coupling::Masses(vec![1.0, 1.0])).unwrap();
        let err = leapfrog_step(&s, |s| accelerations(&s.positions, &s.coupling, 0.0), 1e-3).unwrap_err();
        assert!(matches!(err, Error::Diverged(0)));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SimState::new(vec![[0.0; 3]], vec![], Coupling::Masses(vec![1.0])).is_err());
        assert!(SimState::new(vec![[f64::NAN, 0.0, 0.0]], vec![[0.0; 3]], Coupling::Masses(vec![1.0])).is_err());
        let s = pair(0.5, Coupling::Masses(vec![1.0, 1.0]));
        assert!(leapfrog_step(&s, |s| Ok(vec![[0.0; 3]; s.len()]), 0.0).is_err());
    }
}

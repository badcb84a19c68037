use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{accelerations, integrate, Coupling, SimState};
use crate::error::{Error, Result};
use crate::o3::Vec3;
use crate::rng::{normal, stream, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Charged,
    Gravity,
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "charged" => Ok(System::Charged),
            "gravity" => Ok(System::Gravity),
            other => Err(Error::Config(format!("unknown system `{other}`"))),
        }
    }
}

/// Everything that determines a trajectory besides its random draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub system: System,
    pub num_particles: usize,
    pub dt: f64,
    pub softening: f64,
    /// Total integrator steps.
    pub steps: usize,
    /// Steps between recorded snapshots.
    pub snapshot_every: usize,
    /// Snapshot index of the model input.
    pub input_snapshot: usize,
    /// Snapshot index of the target.
    pub target_snapshot: usize,
    /// Standard deviation of each initial position coordinate.
    pub position_scale: f64,
    /// Charged: standard deviation of each velocity coordinate. Gravity:
    /// initial speed, in a uniformly random direction.
    pub velocity_scale: f64,
}

impl SimParams {
    /// Five particles with charges ±1, 1000 steps from the initial state to
    /// the target positions.
    pub fn charged() -> Self {
        Self {
            system: System::Charged,
            num_particles: 5,
            dt: 1e-3,
            softening: 0.1,
            steps: 1000,
            snapshot_every: 1000,
            input_snapshot: 0,
            target_snapshot: 1,
            position_scale: 0.5,
            velocity_scale: 0.5,
        }
    }

    /// A hundred unit masses, snapshots at t = 0..5, input at t = 3 and
    /// target at t = 4.
    pub fn gravity() -> Self {
        Self {
            system: System::Gravity,
            num_particles: 100,
            dt: 1e-3,
            softening: 0.1,
            steps: 5000,
            snapshot_every: 1000,
            input_snapshot: 3,
            target_snapshot: 4,
            position_scale: 1.0,
            velocity_scale: 1.0,
        }
    }

    pub fn for_system(system: System) -> Self {
        match system {
            System::Charged => Self::charged(),
            System::Gravity => Self::gravity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Config(reason));
        if self.num_particles < 2 {
            return bad(format!("need at least 2 particles, got {}", self.num_particles));
        }
        if !(self.dt > 0.0) || !(self.softening >= 0.0) {
            return bad(format!("dt {} and softening {} must be positive", self.dt, self.softening));
        }
        if self.snapshot_every == 0 || self.steps % self.snapshot_every != 0 {
            return bad(format!("{} steps is not a multiple of snapshot interval {}", self.steps, self.snapshot_every));
        }
        let snapshots = self.steps / self.snapshot_every + 1;
        if self.input_snapshot >= self.target_snapshot || self.target_snapshot >= snapshots {
            return bad(format!(
                "input snapshot {} and target snapshot {} must be increasing and below {snapshots}",
                self.input_snapshot, self.target_snapshot
            ));
        }
        Ok(())
    }

    pub fn snapshot_time(&self, index: usize) -> f64 {
        (index * self.snapshot_every) as f64 * self.dt
    }

    pub fn coupling_name(&self) -> &'static str {
        match self.system {
            System::Charged => "charges",
            System::Gravity => "masses",
        }
    }
}

/// Recorded states (and the accelerations at them) every `snapshot_every`
/// steps, starting with the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<SimState>,
    pub accelerations: Vec<Vec<Vec3>>,
}

fn random_direction(rng: &mut Rng) -> Vec3 {
    loop {
        let v = [normal(rng), normal(rng), normal(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return v.map(|c| c / n);
        }
    }
}

/// Draws initial conditions for `params.system`.
pub fn initial_state(params: &SimParams, rng: &mut Rng) -> Result<SimState> {
    let n = params.num_particles;
    let gaussian = |scale: f64, rng: &mut Rng| -> Vec3 { [normal(rng), normal(rng), normal(rng)].map(|v| scale * v) };
    match params.system {
        System::Charged => {
            let charges: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let positions = (0..n).map(|_| gaussian(params.position_scale, rng)).collect();
            let velocities = (0..n).map(|_| gaussian(params.velocity_scale, rng)).collect();
            SimState::new(positions, velocities, Coupling::Charges(charges))
        }
        System::Gravity => {
            let positions = (0..n).map(|_| gaussian(params.position_scale, rng)).collect();
            let velocities = (0..n)
                .map(|_| random_direction(rng).map(|v| params.velocity_scale * v))
                .collect();
            SimState::new(positions, velocities, Coupling::Masses(vec![1.0; n]))
        }
    }
}

/// Integrates `state` for `params.steps` leapfrog steps.
pub fn simulate(params: &SimParams, state: SimState) -> Result<Trajectory> {
    params.validate()?;
    let eps = params.softening;
    let accel = |s: &SimState| accelerations(&s.positions, &s.coupling, eps);
    let mut traj = Trajectory {
        accelerations: vec![accel(&state)?],
        snapshots: vec![state.clone()],
    };
    let mut state = state;
    integrate(&mut state, accel, params.dt, params.steps, |step, s, a| {
        if step % params.snapshot_every == 0 {
            traj.snapshots.push(s.clone());
            traj.accelerations.push(a.to_vec());
        }
    })?;
    Ok(traj)
}

/// Gravitational run from a fresh random draw: snapshots at t = 0, 1, …, 5
/// with the default parameters.
pub fn simulate_gravity(params: &SimParams, rng: &mut Rng) -> Result<Trajectory> {
    if params.system != System::Gravity {
        return Err(Error::Config("simulate_gravity needs gravity parameters".into()));
    }
    simulate(params, initial_state(params, rng)?)
}

/// Charged run from a fresh random draw.
pub fn simulate_charged(params: &SimParams, rng: &mut Rng) -> Result<Sample> {
    if params.system != System::Charged {
        return Err(Error::Config("simulate_charged needs charged parameters".into()));
    }
    Sample::from_trajectory(params, &simulate(params, initial_state(params, rng)?)?)
}

/// One supervised example: the input state and what happened later.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: SimState,
    pub target_positions: Vec<Vec3>,
    /// Gravity only: acceleration (force, at unit mass) at the target time.
    pub target_forces: Option<Vec<Vec3>>,
}

impl Sample {
    pub fn from_trajectory(params: &SimParams, traj: &Trajectory) -> Result<Self> {
        let (i, t) = (params.input_snapshot, params.target_snapshot);
        if t >= traj.snapshots.len() {
            return Err(Error::Config(format!("trajectory has {} snapshots, need {}", traj.snapshots.len(), t + 1)));
        }
        Ok(Self {
            input: traj.snapshots[i].clone(),
            target_positions: traj.snapshots[t].positions.clone(),
            target_forces: (params.system == System::Gravity).then(|| traj.accelerations[t].clone()),
        })
    }

    /// `target − input` positions.
    pub fn displacement(&self) -> Vec<Vec3> {
        self.target_positions
            .iter()
            .zip(&self.input.positions)
            .map(|(t, x)| [t[0] - x[0], t[1] - x[1], t[2] - x[2]])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Samples stored train first, then validation, then test.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub params: SimParams,
    pub seed: u64,
    pub counts: SplitCounts,
    pub samples: Vec<Sample>,
}

impl TrajectoryDataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        let SplitCounts { train, val, .. } = self.counts;
        match split {
            Split::Train => &self.samples[..train],
            Split::Val => &self.samples[train..train + val],
            Split::Test => &self.samples[train + val..],
        }
    }
}

/// Simulates `counts.total()` independent trajectories in parallel. Sample
/// `k` draws from stream `k` of `seed`, so the result does not depend on
/// scheduling.
pub fn generate(params: &SimParams, counts: SplitCounts, seed: u64) -> Result<TrajectoryDataset> {
    params.validate()?;
    let samples = (0..counts.total())
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let traj = simulate(params, initial_state(params, &mut rng)?)?;
            Sample::from_trajectory(params, &traj)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        params: params.clone(),
        seed,
        counts,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn small_gravity() -> SimParams {
        SimParams {
            num_particles: 6,
            steps: 500,
            snapshot_every: 100,
            ..SimParams::gravity()
        }
    }

    #[test]
    fn defaults_validate() {
        SimParams::charged().validate().unwrap();
        SimParams::gravity().validate().unwrap();
        let bad = SimParams {
            steps: 999,
            ..SimParams::charged()
        };
        assert!(bad.validate().is_err());
        assert_eq!(SimParams::gravity().snapshot_time(3), 3.0);
    }

    #[test]
    fn gravity_initial_speeds_are_unit() {
        let s = initial_state(&SimParams::gravity(), &mut seeded(1)).unwrap();
        for v in &s.velocities {
            assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs() < 1e-14);
        }
        assert_eq!(s.coupling, Coupling::Masses(vec![1.0; 100]));
    }

    #[test]
    fn charges_are_unit_and_mixed() {
        let mut rng = seeded(2);
        let mut seen = [false; 2];
        for _ in 0..10 {
            let s = initial_state(&SimParams::charged(), &mut rng).unwrap();
            for &q in s.coupling.values() {
                assert!(q == 1.0 || q == -1.0);
                seen[(q > 0.0) as usize] = true;
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn trajectory_records_every_snapshot() {
        let p = small_gravity();
        let traj = simulate_gravity(&p, &mut seeded(3)).unwrap();
        assert_eq!(traj.snapshots.len(), 6);
        for (k, s) in traj.snapshots.iter().enumerate() {
            assert!((s.time - p.snapshot_time(k)).abs() < 1e-12);
        }
        let sample = Sample::from_trajectory(&p, &traj).unwrap();
        assert_eq!(sample.input, traj.snapshots[3]);
        assert_eq!(sample.target_forces.as_ref().unwrap(), &traj.accelerations[4]);
    }

    #[test]
    fn wrong_system_is_rejected() {
        assert!(simulate_gravity(&SimParams::charged(), &mut seeded(0)).is_err());
        assert!(simulate_charged(&SimParams::gravity(), &mut seeded(0)).is_err());
    }

    #[test]
    fn generation_is_deterministic_and_split() {
        let counts = SplitCounts { train: 4, val: 2, test: 3 };
        let a = generate(&SimParams::charged(), counts, 11).unwrap();
        let b = generate(&SimParams::charged(), counts, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.split(Split::Train).len(), 4);
        assert_eq!(a.split(Split::Val).len(), 2);
        assert_eq!(a.split(Split::Test).len(), 3);
        assert!(a.samples.iter().all(|s| s.target_forces.is_none()));
        let c = generate(&SimParams::charged(), counts, 12).unwrap();
        assert_ne!(a.samples[0], c.samples[0]);
    }
}

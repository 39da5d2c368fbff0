//! Four-tank cascade simulator with injectable leaks.
//!
//! Tank pressures follow linear storage dynamics
//!
//! ```text
//! C1 ṗ1 = u1 − q1 − leak1
//! C2 ṗ2 = q1 − q2 − leak2
//! C3 ṗ3 = q2 + u2 − q3 − leak3
//! C4 ṗ4 = q3 − q4 − leak4
//! ```
//!
//! with `qj = (pj − pj+1)/Rj`, `q4 = p4/R4` and `leak_i = g(t)·p_i` on the
//! faulty tank. Measurements are `u1, u2, y1 = p1, y2 = q1, y3 = p2, y4 = q2,
//! y5 = q3, y6 = p4`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{add_integral_columns, Dataset};

/// Measured channel names in emission order.
pub const MEASURED: [&str; 8] = ["u1", "u2", "y1", "y2", "y3", "y4", "y5", "y6"];

/// Unmeasured debug channels.
pub const STATES: [&str; 6] = ["p1", "p2", "p3", "p4", "q4", "leak"];

/// One sinusoidal component `amplitude·sin(omega·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Inflow `mean + Σ amplitude·sin(omega·t + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflowProfile {
    pub mean: f64,
    #[serde(default)]
    pub components: Vec<Sinusoid>,
}

impl InflowProfile {
    pub fn constant(mean: f64) -> Self {
        Self { mean, components: Vec::new() }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.mean + self.components.iter().map(|c| c.amplitude * (c.omega * t + c.phase).sin()).sum::<f64>()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.components.iter().map(|c| c.amplitude * c.omega * (c.omega * t + c.phase).cos()).sum()
    }

    fn is_valid(&self) -> bool {
        self.mean.is_finite()
            && self.components.iter().all(|c| c.amplitude.is_finite() && c.omega.is_finite() && c.phase.is_finite())
    }
}

fn sines(omegas: [f64; 4], amplitudes: [f64; 4], phases: [f64; 4]) -> Vec<Sinusoid> {
    (0..4).map(|i| Sinusoid { amplitude: amplitudes[i], omega: omegas[i], phase: phases[i] }).collect()
}

/// Physical and numerical simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TankParams {
    /// Storage coefficients C1..C4.
    pub capacities: [f64; 4],
    /// Resistances R1..R3 between tanks and R4 for the tank-4 outflow.
    pub resistances: [f64; 4],
    pub u1: InflowProfile,
    pub u2: InflowProfile,
    /// Integration and sampling step in seconds.
    pub dt: f64,
    /// Recorded horizon in seconds.
    pub duration: f64,
    /// Measurement noise σ as a fraction of each clean channel's std.
    pub noise_fraction: f64,
    /// Unrecorded settling time before `t = 0`.
    pub warmup: f64,
    /// Pressures at the start of the warmup; `None` uses the steady state
    /// of the mean inflows.
    pub initial_pressures: Option<[f64; 4]>,
}

impl Default for TankParams {
    fn default() -> Self {
        Self {
            capacities: [4.5, 30.0, 2.0, 4.5],
            resistances: [0.4, 22.0, 3.0, 1.35],
            u1: InflowProfile {
                mean: 1.0,
                components: sines(
                    [0.011, 0.075, 0.165, 0.34],
                    [0.2, 0.15, 0.15, 0.15],
                    [4.7168, 0.1018, 2.6372, 2.708],
                ),
            },
            u2: InflowProfile {
                mean: 1.0,
                components: sines(
                    [0.0056, 0.105, 0.195, 0.46],
                    [0.2, 0.15, 0.15, 0.15],
                    [0.3168, 4.769, 2.7213, 2.4275],
                ),
            },
            dt: 0.1,
            duration: 5000.0,
            noise_fraction: 0.05,
            warmup: 1000.0,
            initial_pressures: None,
        }
    }
}

impl TankParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.capacities.iter().all(|c| positive(*c)) {
            return Err(Error::Validation("capacities must be positive".into()));
        }
        if !self.resistances.iter().all(|r| positive(*r)) {
            return Err(Error::Validation("resistances must be positive".into()));
        }
        if !positive(self.dt) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= 100.0 * self.dt) {
            return Err(Error::Validation("duration must be at least 100·dt".into()));
        }
        if !(self.noise_fraction.is_finite() && self.noise_fraction >= 0.0) {
            return Err(Error::Validation("noise_fraction must be ≥ 0".into()));
        }
        if !(self.warmup.is_finite() && self.warmup >= 0.0) {
            return Err(Error::Validation("warmup must be ≥ 0".into()));
        }
        if !(self.u1.is_valid() && self.u2.is_valid()) {
            return Err(Error::Validation("inflow profiles must be finite".into()));
        }
        if let Some(p) = self.initial_pressures {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation("initial pressures must be finite".into()));
            }
        }
        Ok(())
    }

    /// Recorded sample count.
    pub fn samples(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    fn warmup_steps(&self) -> usize {
        (self.warmup / self.dt).round() as usize
    }

    /// Equilibrium pressures for constant inflows `(a, b)`.
    pub fn steady_state(&self, a: f64, b: f64) -> [f64; 4] {
        let r = self.resistances;
        // Everything leaves through R4; walk upstream accumulating drops.
        let p4 = (a + b) * r[3];
        let p3 = p4 + (a + b) * r[2];
        let p2 = p3 + a * r[1];
        let p1 = p2 + a * r[0];
        [p1, p2, p3, p4]
    }
}

/// Tank a fault acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Tank1,
    Tank2,
    Tank3,
    Tank4,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Self::Tank1 => 0,
            Self::Tank2 => 1,
            Self::Tank3 => 2,
            Self::Tank4 => 3,
        }
    }
}

/// Time profile of a fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    None,
    Incipient,
    Abrupt,
}

/// A leak injected into one tank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub name: String,
    pub component: Component,
    pub kind: FaultKind,
    /// Seconds after the start of recording.
    pub onset: f64,
    /// Leak conductance (flow per unit pressure).
    pub magnitude: f64,
    #[serde(default)]
    pub ramp_duration: f64,
}

/// Default leak conductance for the case-study scenarios.
pub const DEFAULT_LEAK: f64 = 1e-4;
/// Default fault onset in seconds.
pub const DEFAULT_ONSET: f64 = 2500.0;
/// Default incipient ramp length in seconds.
pub const DEFAULT_RAMP: f64 = 1000.0;

impl FaultScenario {
    pub fn none() -> Self {
        Self {
            name: "normal".into(),
            component: Component::Tank1,
            kind: FaultKind::None,
            onset: 0.0,
            magnitude: 0.0,
            ramp_duration: 0.0,
        }
    }

    /// Tank-1 leak ramping to [`DEFAULT_LEAK`] over [`DEFAULT_RAMP`] seconds.
    pub fn incipient_tank1() -> Self {
        Self {
            name: "incipient".into(),
            component: Component::Tank1,
            kind: FaultKind::Incipient,
            onset: DEFAULT_ONSET,
            magnitude: DEFAULT_LEAK,
            ramp_duration: DEFAULT_RAMP,
        }
    }

    /// Tank-1 leak stepping to [`DEFAULT_LEAK`].
    pub fn abrupt_tank1() -> Self {
        Self {
            name: "abrupt".into(),
            kind: FaultKind::Abrupt,
            ramp_duration: 0.0,
            ..Self::incipient_tank1()
        }
    }

    pub fn validate(&self, params: &TankParams) -> Result<()> {
        if self.kind == FaultKind::None {
            return Ok(());
        }
        if !(self.onset >= 0.0 && self.onset < params.duration) {
            return Err(Error::Validation(format!("onset {} outside [0, duration)", self.onset)));
        }
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(Error::Validation("magnitude must be ≥ 0".into()));
        }
        if self.kind == FaultKind::Incipient && !(self.ramp_duration.is_finite() && self.ramp_duration > 0.0) {
            return Err(Error::Validation("incipient faults need ramp_duration > 0".into()));
        }
        Ok(())
    }

    /// Onset time, or `None` for the fault-free scenario.
    pub fn onset_time(&self) -> Option<f64> {
        (self.kind != FaultKind::None).then_some(self.onset)
    }

    /// Leak conductance `g(t)`.
    pub fn conductance(&self, t: f64) -> f64 {
        match self.kind {
            FaultKind::None => 0.0,
            _ if t < self.onset => 0.0,
            FaultKind::Abrupt => self.magnitude,
            FaultKind::Incipient => self.magnitude * ((t - self.onset) / self.ramp_duration).min(1.0),
        }
    }

    fn conductance_rate(&self, t: f64) -> f64 {
        match self.kind {
            FaultKind::Incipient if t >= self.onset && t < self.onset + self.ramp_duration => {
                self.magnitude / self.ramp_duration
            }
            _ => 0.0,
        }
    }
}

/// Output of [`simulate_run`].
#[derive(Debug, Clone)]
pub struct SimulationRun {
    /// Noisy measurements (`u1, u2, y1..y6`).
    pub measured: Dataset,
    /// Noise-free measurements.
    pub clean: Dataset,
    /// Unmeasured states `p1..p4, q4, leak`.
    pub states: Dataset,
    /// Number of state components clamped at zero pressure.
    pub clamped: usize,
    /// Per-channel noise σ.
    pub noise_sigma: Vec<f64>,
}

struct Dynamics<'a> {
    params: &'a TankParams,
    fault: &'a FaultScenario,
}

impl Dynamics<'_> {
    fn rhs(&self, t: f64, p: &[f64; 4]) -> [f64; 4] {
        let c = self.params.capacities;
        let r = self.params.resistances;
        let q1 = (p[0] - p[1]) / r[0];
        let q2 = (p[1] - p[2]) / r[1];
        let q3 = (p[2] - p[3]) / r[2];
        let q4 = p[3] / r[3];
        let mut net = [
            self.params.u1.value(t) - q1,
            q1 - q2,
            q2 + self.params.u2.value(t) - q3,
            q3 - q4,
        ];
        let k = self.fault.component.index();
        net[k] -= self.fault.conductance(t) * p[k];
        [net[0] / c[0], net[1] / c[1], net[2] / c[2], net[3] / c[3]]
    }

    fn rk4(&self, t: f64, p: &[f64; 4], h: f64) -> [f64; 4] {
        let add = |a: &[f64; 4], k: &[f64; 4], s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2], a[3] + s * k[3]];
        let k1 = self.rhs(t, p);
        let k2 = self.rhs(t + 0.5 * h, &add(p, &k1, 0.5 * h));
        let k3 = self.rhs(t + 0.5 * h, &add(p, &k2, 0.5 * h));
        let k4 = self.rhs(t + h, &add(p, &k3, h));
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = p[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
}

/// Noise-free trajectory: measured channels, state channels, clamp count.
fn integrate(params: &TankParams, fault: &FaultScenario) -> Result<(Dataset, Dataset, usize)> {
    params.validate()?;
    fault.validate(params)?;
    let dyn_ = Dynamics { params, fault };
    let h = params.dt;
    let warm = params.warmup_steps();
    let n = params.samples();
    let mut p = params
        .initial_pressures
        .unwrap_or_else(|| params.steady_state(params.u1.mean, params.u2.mean));
    let mut clamped = 0;
    let mut step = |i: isize, p: &mut [f64; 4]| {
        *p = dyn_.rk4(i as f64 * h, p, h);
        for v in p.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
    };
    for i in -(warm as isize)..0 {
        step(i, &mut p);
    }
    let r = params.resistances;
    let mut meas = vec![Vec::with_capacity(n); MEASURED.len()];
    let mut states = vec![Vec::with_capacity(n); STATES.len()];
    for i in 0..n {
        if i > 0 {
            step(i as isize - 1, &mut p);
        }
        let t = i as f64 * h;
        let k = fault.component.index();
        let row = [
            params.u1.value(t),
            params.u2.value(t),
            p[0],
            (p[0] - p[1]) / r[0],
            p[1],
            (p[1] - p[2]) / r[1],
            (p[2] - p[3]) / r[2],
            p[3],
        ];
        for (col, v) in meas.iter_mut().zip(row) {
            col.push(v);
        }
        let srow = [p[0], p[1], p[2], p[3], p[3] / r[3], fault.conductance(t) * p[k]];
        for (col, v) in states.iter_mut().zip(srow) {
            col.push(v);
        }
    }
    let names = |s: &[&str]| s.iter().map(|v| v.to_string()).collect::<Vec<_>>();
    Ok((
        Dataset::new(names(&MEASURED), meas, h, 0.0)?,
        Dataset::new(names(&STATES), states, h, 0.0)?,
        clamped,
    ))
}

fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Simulates the plant and adds measurement noise.
///
/// Noise σ per channel is `noise_fraction` times the std of that channel in
/// the fault-free run, so nominal and faulty datasets share one noise scale.
/// Pre-onset samples are identical to the fault-free run with the same seed.
pub fn simulate_run(params: &TankParams, fault: &FaultScenario, seed: u64) -> Result<SimulationRun> {
    let (clean, states, clamped) = integrate(params, fault)?;
    let reference = if fault.kind == FaultKind::None {
        clean.clone()
    } else {
        integrate(params, &FaultScenario::none())?.0
    };
    let noise_sigma: Vec<f64> =
        reference.columns().map(|(_, c)| params.noise_fraction * population_std(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = Vec::with_capacity(MEASURED.len());
    for ((_, c), sigma) in clean.columns().zip(&noise_sigma) {
        let mut col = c.to_vec();
        if *sigma > 0.0 {
            let d = Normal::new(0.0, *sigma).map_err(|e| Error::Validation(e.to_string()))?;
            for v in &mut col {
                *v += d.sample(&mut rng);
            }
        }
        cols.push(col);
    }
    let measured = Dataset::new(clean.names().to_vec(), cols, clean.dt(), clean.t0())?;
    Ok(SimulationRun { measured, clean, states, clamped, noise_sigma })
}

/// Noisy measurement dataset for `(params, fault, seed)`.
pub fn simulate(params: &TankParams, fault: &FaultScenario, seed: u64) -> Result<Dataset> {
    Ok(simulate_run(params, fault, seed)?.measured)
}

/// Noisy measurements extended with `int_<name>` for every measured channel.
pub fn simulate_with_integrals(params: &TankParams, fault: &FaultScenario, seed: u64) -> Result<Dataset> {
    add_integral_columns(&simulate(params, fault, seed)?, &MEASURED)
}

/// Largest relative volume imbalance over the run.
///
/// Compares the stored volume `Σ Ci·pi` against the accumulated net inflow,
/// integrated with the endpoint-corrected trapezoid rule (fourth-order), and
/// divides by the total inflow volume. `states` must come from a noise-free
/// run of the same parameters and fault.
pub fn mass_balance_check(states: &Dataset, params: &TankParams, fault: &FaultScenario) -> Result<f64> {
    let p: Vec<&[f64]> = ["p1", "p2", "p3", "p4"].iter().map(|n| states.column(n)).collect::<Result<_>>()?;
    let c = params.capacities;
    let r = params.resistances;
    let k = fault.component.index();
    let dyn_ = Dynamics { params, fault };
    let h = states.dt();
    let n = states.len();
    let volume = |i: usize| (0..4).map(|j| c[j] * p[j][i]).sum::<f64>();
    let pressures = |i: usize| [p[0][i], p[1][i], p[2][i], p[3][i]];
    let inflow = |t: f64| params.u1.value(t) + params.u2.value(t);
    let inflow_rate = |t: f64| params.u1.derivative(t) + params.u2.derivative(t);
    let outflow = |t: f64, s: &[f64; 4]| s[3] / r[3] + fault.conductance(t) * s[k];
    let outflow_rate = |t: f64, s: &[f64; 4]| {
        let d = dyn_.rhs(t, s);
        d[3] / r[3] + fault.conductance_rate(t) * s[k] + fault.conductance(t) * d[k]
    };
    let v0 = volume(0);
    let (mut net, mut total_in) = (0.0, 0.0);
    let mut worst: f64 = 0.0;
    for i in 1..n {
        let (ta, tb) = (states.time(i - 1), states.time(i));
        let (sa, sb) = (pressures(i - 1), pressures(i));
        let fa = inflow(ta) - outflow(ta, &sa);
        let fb = inflow(tb) - outflow(tb, &sb);
        let da = inflow_rate(ta) - outflow_rate(ta, &sa);
        let db = inflow_rate(tb) - outflow_rate(tb, &sb);
        net += 0.5 * h * (fa + fb) + h * h / 12.0 * (da - db);
        total_in += 0.5 * h * (inflow(ta).abs() + inflow(tb).abs());
        worst = worst.max((volume(i) - v0 - net).abs());
    }
    Ok(if total_in > 0.0 { worst / total_in } else { worst })
}

//! Delay-aware discretization, LQR/Kalman synthesis and closed-loop cost
//! evaluation for control tasks whose actuation lags their sampling instant.
//!
//! Continuous plant matrices are expressed per second; scheduling quantities
//! arrive in integer milliseconds and are converted at the boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Millis, TaskId, TaskSet, TaskSpec};
use crate::rta;

pub const DEFAULT_HORIZON: usize = 30;
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 1.05;
pub const DEFAULT_ROLLOUTS: usize = 20;

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}
fn default_threshold_factor() -> f64 {
    DEFAULT_THRESHOLD_FACTOR
}
fn default_rollouts() -> usize {
    DEFAULT_ROLLOUTS
}
fn default_window() -> usize {
    crate::detector::DEFAULT_WINDOW
}
fn default_far() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_far")]
    pub false_alarm_rate: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            window: default_window(),
            false_alarm_rate: default_far(),
        }
    }
}

/// Continuous LTI plant with noise, cost weights and detector settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantModel {
    pub name: String,
    /// Control task this plant is attached to, when used in a plant file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskId>,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Per-sample process noise covariance (n×n).
    pub process_noise: Matrix,
    /// Measurement noise covariance (m×m).
    pub measurement_noise: Matrix,
    /// State weight over the augmented state `[x; u_prev]`.
    pub q_aug: Matrix,
    pub r: Matrix,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Explicit `J^Th`; when absent the threshold is `factor × J(δ = 0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_threshold: Option<f64>,
    #[serde(default = "default_threshold_factor")]
    pub threshold_factor: f64,
    pub x0: Vec<f64>,
    /// Monte Carlo rollouts averaged per cost evaluation; 0 disables noise.
    #[serde(default = "default_rollouts")]
    pub cost_rollouts: usize,
    #[serde(default)]
    pub detector: DetectorParams,
}

impl PlantModel {
    pub fn states(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn outputs(&self) -> usize {
        self.c.rows()
    }

    /// Dimensional consistency, `Q_aug ⪰ 0`, `R ≻ 0`, PSD noise.
    pub fn check(&self) -> Result<()> {
        let (n, p, m) = (self.states(), self.inputs(), self.outputs());
        let dim = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Dimension(format!("{what}: {got:?}, expected {want:?}")))
            }
        };
        dim("A", self.a.shape(), (n, n))?;
        dim("B", self.b.shape(), (n, p))?;
        dim("C", self.c.shape(), (m, n))?;
        dim("process_noise", self.process_noise.shape(), (n, n))?;
        dim("measurement_noise", self.measurement_noise.shape(), (m, m))?;
        dim("q_aug", self.q_aug.shape(), (n + p, n + p))?;
        dim("r", self.r.shape(), (p, p))?;
        if self.x0.len() != n {
            return Err(Error::Dimension(format!("x0 has {} entries, expected {n}", self.x0.len())));
        }
        if !self.q_aug.is_psd() {
            return Err(Error::Config(format!("{}: Q_aug must be PSD", self.name)));
        }
        if !self.r.is_psd() || self.r.inverse().is_err() {
            return Err(Error::Config(format!("{}: R must be positive definite", self.name)));
        }
        if !self.process_noise.is_psd() || !self.measurement_noise.is_psd() {
            return Err(Error::Config(format!("{}: noise covariances must be PSD", self.name)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn noiseless(&self) -> bool {
        self.process_noise.is_zero() && self.measurement_noise.is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `Φ = I + A T`, `Γ0 = (T - δ) B`, `Γ1 = δ B`.
    FirstOrder,
    /// Matrix-exponential integrals; used to measure the first-order error.
    Exact,
}

/// Sampled plant whose input takes effect `latency` after each sample, in
/// augmented form over `z = [x; u_prev]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub period: f64,
    pub latency: f64,
    pub mode: Discretization,
    pub phi: Matrix,
    pub gamma0: Matrix,
    pub gamma1: Matrix,
    pub phi_aug: Matrix,
    pub gamma_aug: Matrix,
    pub c_aug: Matrix,
}

impl AugmentedSystem {
    pub fn states(&self) -> usize {
        self.phi.rows()
    }

    pub fn inputs(&self) -> usize {
        self.gamma0.cols()
    }

    pub fn augmented_states(&self) -> usize {
        self.phi_aug.rows()
    }
}

pub fn ms_to_s(ms: Millis) -> f64 {
    ms as f64 / 1000.0
}

/// First-order delay-aware discretization on the millisecond grid.
pub fn discretize_with_delay(plant: &PlantModel, period: Millis, latency: Millis) -> Result<AugmentedSystem> {
    discretize(plant, ms_to_s(period), ms_to_s(latency), Discretization::FirstOrder)
}

/// Discretizes with sampling period `period` and actuation latency
/// `latency`, both in seconds. `latency == period` is accepted and yields
/// `Γ0 = 0` (the input acts one full sample late).
pub fn discretize(plant: &PlantModel, period: f64, latency: f64, mode: Discretization) -> Result<AugmentedSystem> {
    if !(0.0..=period).contains(&latency) || period <= 0.0 {
        return Err(Error::LatencyOutOfRange { latency, period });
    }
    let (n, p) = (plant.states(), plant.inputs());
    let (phi, gamma0, gamma1) = match mode {
        Discretization::FirstOrder => (
            &Matrix::identity(n) + &plant.a.scale(period),
            plant.b.scale(period - latency),
            plant.b.scale(latency),
        ),
        Discretization::Exact => {
            let g_full = input_integral(&plant.a, &plant.b, period);
            let g0 = input_integral(&plant.a, &plant.b, period - latency);
            ((plant.a.scale(period)).expm(), g0.clone(), &g_full - &g0)
        }
    };
    let phi_aug = Matrix::block(&phi, &gamma1, &Matrix::zeros(p, n), &Matrix::zeros(p, p));
    let gamma_aug = Matrix::vstack(&gamma0, &Matrix::identity(p));
    let c_aug = Matrix::hstack(&plant.c, &Matrix::zeros(plant.outputs(), p));
    Ok(AugmentedSystem {
        period,
        latency,
        mode,
        phi,
        gamma0,
        gamma1,
        phi_aug,
        gamma_aug,
        c_aug,
    })
}

/// `∫_0^t e^{A s} B ds` from the exponential of `[[A, B], [0, 0]] t`.
pub fn input_integral(a: &Matrix, b: &Matrix, t: f64) -> Matrix {
    let (n, p) = (a.rows(), b.cols());
    let big = Matrix::block(a, b, &Matrix::zeros(p, n), &Matrix::zeros(p, p)).scale(t);
    big.expm().sub_block(0, n, n, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// `gains[k]` is the feedback gain for step k (k = 0 first).
    pub gains: Vec<Matrix>,
    /// `cost_to_go[k]` is `P_k`; the last entry is the terminal weight.
    pub cost_to_go: Vec<Matrix>,
}

/// Backward finite-horizon Riccati recursion with terminal weight `q`.
/// Every cost-to-go iterate is symmetrized and checked to be PSD.
pub fn finite_horizon_lqr(phi: &Matrix, gamma: &Matrix, q: &Matrix, r: &Matrix, steps: usize) -> Result<LqrSolution> {
    let phi_t = phi.transpose();
    let gamma_t = gamma.transpose();
    let mut p = q.clone();
    let mut gains = Vec::with_capacity(steps);
    let mut cost_to_go = vec![p.clone()];
    for step in 0..steps {
        let s = r + &(&(&gamma_t * &p) * gamma);
        let k = &s.inverse()? * &(&(&gamma_t * &p) * phi);
        let next = q + &(&(&phi_t * &p) * &(phi - &(gamma * &k)));
        let next = next.symmetrize();
        if !next.as_slice().iter().all(|x| x.is_finite()) || next.max_abs() > 1e15 {
            return Err(Error::RiccatiDiverged(format!("cost-to-go blew up at backward step {step}")));
        }
        if !next.is_psd() {
            return Err(Error::RiccatiDiverged(format!("cost-to-go lost PSD at backward step {step}")));
        }
        gains.push(k);
        cost_to_go.push(next.clone());
        p = next;
    }
    gains.reverse();
    cost_to_go.reverse();
    Ok(LqrSolution { gains, cost_to_go })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanSolution {
    pub gain: Matrix,
    /// Steady-state one-step prediction error covariance.
    pub error_cov: Matrix,
    /// Innovation covariance `C P Cᵀ + V`.
    pub innovation_cov: Matrix,
    pub iterations: usize,
}

/// Steady-state one-step predictor gain for `x⁺ = Φx + ... + w`, `y = Cx + v`.
pub fn steady_state_kalman(phi: &Matrix, c: &Matrix, w: &Matrix, v: &Matrix) -> Result<KalmanSolution> {
    let (n, m) = (phi.rows(), c.rows());
    if w.is_zero() && v.is_zero() {
        return Ok(KalmanSolution {
            gain: Matrix::zeros(n, m),
            error_cov: Matrix::zeros(n, n),
            innovation_cov: Matrix::zeros(m, m),
            iterations: 0,
        });
    }
    let phi_t = phi.transpose();
    let c_t = c.transpose();
    let mut p = w.clone();
    for it in 1..=100_000 {
        let s = v + &(&(c * &p) * &c_t);
        let s_inv = s.inverse()?;
        let apc = &(phi * &p) * &c_t;
        let next = &(&(&(phi * &p) * &phi_t) + w) - &(&(&apc * &s_inv) * &apc.transpose());
        let next = next.symmetrize();
        if !next.as_slice().iter().all(|x| x.is_finite()) || next.max_abs() > 1e15 {
            return Err(Error::RiccatiDiverged("filter covariance blew up".into()));
        }
        let delta = (&next - &p).max_abs();
        p = next;
        if delta <= 1e-14 * p.max_abs().max(1e-300) {
            let s = v + &(&(c * &p) * &c_t);
            let gain = &(&(phi * &p) * &c_t) * &s.inverse()?;
            return Ok(KalmanSolution {
                gain,
                error_cov: p,
                innovation_cov: s.symmetrize(),
                iterations: it,
            });
        }
    }
    Err(Error::RiccatiDiverged("filter iteration did not converge".into()))
}

/// Feedback `u = -K_aug ẑ` and predictor gain `L_aug` for one delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub k_aug: Matrix,
    pub l_aug: Matrix,
    /// Residue covariance used by the chi-square detector.
    pub residue_cov: Matrix,
}

impl ControllerGains {
    pub fn closed_loop(&self, sys: &AugmentedSystem) -> Matrix {
        &sys.phi_aug - &(&sys.gamma_aug * &self.k_aug)
    }
}

pub fn synthesize_gains(sys: &AugmentedSystem, plant: &PlantModel) -> Result<ControllerGains> {
    let (n, p) = (sys.states(), sys.inputs());
    let lqr = finite_horizon_lqr(&sys.phi_aug, &sys.gamma_aug, &plant.q_aug, &plant.r, plant.horizon)?;
    let w_aug = Matrix::block(
        &plant.process_noise,
        &Matrix::zeros(n, p),
        &Matrix::zeros(p, n),
        &Matrix::zeros(p, p),
    );
    let kf = steady_state_kalman(&sys.phi_aug, &sys.c_aug, &w_aug, &plant.measurement_noise)?;
    Ok(ControllerGains {
        k_aug: lqr.gains[0].clone(),
        l_aug: kf.gain,
        residue_cov: kf.innovation_cov,
    })
}

/// Gaussian sampler for a fixed covariance.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    factor: Option<Matrix>,
    dim: usize,
}

impl GaussianNoise {
    pub fn new(cov: &Matrix) -> Result<Self> {
        Ok(Self {
            factor: if cov.is_zero() { None } else { Some(cov.cholesky_psd()?) },
            dim: cov.rows(),
        })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.factor {
            None => vec![0.0; self.dim],
            Some(l) => {
                let e: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
                l.mul_vec(&e)
            }
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One closed-loop rollout of the estimator/controller pair; returns
/// `Σ_{k<N} (zᵀQz + uᵀRu) + z_Nᵀ Q z_N`.
pub fn rollout_cost(
    sys: &AugmentedSystem,
    gains: &ControllerGains,
    plant: &PlantModel,
    noise: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let (n, p) = (sys.states(), sys.inputs());
    let mut z = plant.x0.clone();
    z.extend(std::iter::repeat_n(0.0, p));
    let mut z_hat = z.clone();
    let mut noise = noise;
    let w = GaussianNoise::new(&plant.process_noise)?;
    let v = GaussianNoise::new(&plant.measurement_noise)?;
    let mut cost = 0.0;
    for _ in 0..plant.horizon {
        let u: Vec<f64> = gains.k_aug.mul_vec(&z_hat).into_iter().map(|x| -x).collect();
        cost += plant.q_aug.quad_form(&z) + plant.r.quad_form(&u);
        let mut y = sys.c_aug.mul_vec(&z);
        let (wk, vk) = match noise.as_deref_mut() {
            Some(rng) => (w.sample(rng), v.sample(rng)),
            None => (vec![0.0; n], vec![0.0; y.len()]),
        };
        axpy(&mut y, 1.0, &vk);
        let innovation: Vec<f64> = y.iter().zip(sys.c_aug.mul_vec(&z_hat)).map(|(a, b)| a - b).collect();

        let mut z_next = sys.phi_aug.mul_vec(&z);
        axpy(&mut z_next, 1.0, &sys.gamma_aug.mul_vec(&u));
        axpy(&mut z_next[..n], 1.0, &wk);

        let mut zh_next = sys.phi_aug.mul_vec(&z_hat);
        axpy(&mut zh_next, 1.0, &sys.gamma_aug.mul_vec(&u));
        axpy(&mut zh_next, 1.0, &gains.l_aug.mul_vec(&innovation));

        z = z_next;
        z_hat = zh_next;
    }
    cost += plant.q_aug.quad_form(&z);
    Ok(cost)
}

/// Finite-horizon quadratic cost of the closed loop. Noisy plants average
/// `cost_rollouts` seeded rollouts; noiseless plants (or `cost_rollouts = 0`)
/// use a single deterministic rollout.
pub fn closed_loop_cost(sys: &AugmentedSystem, gains: &ControllerGains, plant: &PlantModel, seed: u64) -> Result<f64> {
    if plant.noiseless() || plant.cost_rollouts == 0 {
        return rollout_cost(sys, gains, plant, None);
    }
    let mut total = 0.0;
    for i in 0..plant.cost_rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        total += rollout_cost(sys, gains, plant, Some(&mut rng))?;
    }
    Ok(total / plant.cost_rollouts as f64)
}

/// Cost of the delay-matched design at a given actuation latency (ms).
pub fn cost_at_latency(plant: &PlantModel, period: Millis, latency: Millis, seed: u64) -> Result<f64> {
    let sys = discretize_with_delay(plant, period, latency)?;
    let gains = synthesize_gains(&sys, plant)?;
    closed_loop_cost(&sys, &gains, plant, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayCostRow {
    pub delay: Millis,
    pub response: Millis,
    /// Sampling-to-actuation latency `δ + R_v(δ)`.
    pub latency: Millis,
    pub cost: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxDelayReport {
    pub victim: TaskId,
    pub peak_delay: Option<Millis>,
    pub threshold: f64,
    pub rows: Vec<DelayCostRow>,
    pub max_delay: Option<Millis>,
}

pub const COST_SEED: u64 = 0x5EC0_0001;

/// Largest uniform delay within the peak delay whose delay-matched closed
/// loop keeps `J ≤ J^Th`. The actuation latency modelled for delay δ is
/// `δ + R_v(δ)`, measured from the nominal sampling instant.
pub fn max_admissible_delay(plant: &PlantModel, victim: &TaskSpec, ts: &TaskSet) -> Result<MaxDelayReport> {
    plant.check()?;
    let peak = rta::peak_delay(victim, ts);
    let Some(peak_delay) = peak else {
        return Ok(MaxDelayReport {
            victim: victim.id,
            peak_delay: None,
            threshold: plant.cost_threshold.unwrap_or(f64::NAN),
            rows: vec![],
            max_delay: None,
        });
    };
    let mut rows = Vec::new();
    for delay in 0..=peak_delay {
        let response = rta::victim_wcrt_uniform(victim, ts, delay)
            .value()
            .expect("delays within the peak are schedulable");
        let latency = delay + response;
        let cost = cost_at_latency(plant, victim.period, latency, COST_SEED)?;
        rows.push(DelayCostRow {
            delay,
            response,
            latency,
            cost,
            admissible: false,
        });
    }
    let threshold = plant
        .cost_threshold
        .unwrap_or(plant.threshold_factor * rows[0].cost);
    for row in &mut rows {
        row.admissible = row.cost <= threshold;
    }
    let max_delay = rows.iter().rev().find(|r| r.admissible).map(|r| r.delay);
    Ok(MaxDelayReport {
        victim: victim.id,
        peak_delay: peak,
        threshold,
        rows,
        max_delay,
    })
}

//! Shipped two-state example plants.
//!
//! All three are textbook stand-ins: a cruise-control loop (velocity lag
//! plus position-error integrator), a linearized single-track yaw model for
//! stability control, and a double integrator for trajectory tracking. Both
//! states are measured, so the detector sees 2-dimensional residues.
//!
//! The input weight `r` of each plant is calibrated so that the 5% cost
//! threshold falls between the latencies listed below. The calibration is
//! reproducible with `cargo run --release -p delayguard --example calibrate`;
//! the `shipped_plants_hit_calibration_targets` test guards the result.
//!
//! | plant          | task set | period | admissible delay |
//! |----------------|----------|--------|------------------|
//! | `ttc_table1`   | Table I  | 10 ms  | 3 ms             |
//! | `cc`           | Table II | 10 ms  | 3 ms             |
//! | `esp`          | Table II | 40 ms  | 12 ms            |
//! | `ttc`          | Table II | 20 ms  | 8 ms             |

use crate::control::{DetectorParams, PlantModel, DEFAULT_HORIZON, DEFAULT_ROLLOUTS, DEFAULT_THRESHOLD_FACTOR};
use crate::linalg::Matrix;
use crate::model::TaskId;

/// Calibrated input weights.
pub const CC_INPUT_WEIGHT: f64 = 2.8e-7;
pub const ESP_INPUT_WEIGHT: f64 = 5.6e-8;
pub const TTC_INPUT_WEIGHT: f64 = 8.9e-5;
pub const TTC_TABLE1_INPUT_WEIGHT: f64 = 1.0e-6;

const NOISE: f64 = 1.0e-4;

fn base(name: &str, task: Option<TaskId>, a: Matrix, b: Matrix, q: [f64; 2], r: f64) -> PlantModel {
    PlantModel {
        name: name.into(),
        task,
        a,
        b,
        c: Matrix::identity(2),
        process_noise: Matrix::diag(&[NOISE, NOISE]),
        measurement_noise: Matrix::diag(&[NOISE, NOISE]),
        q_aug: Matrix::diag(&[q[0], q[1], 0.0]),
        r: Matrix::scalar(r),
        horizon: DEFAULT_HORIZON,
        cost_threshold: None,
        threshold_factor: DEFAULT_THRESHOLD_FACTOR,
        x0: vec![1.0, 0.0],
        cost_rollouts: DEFAULT_ROLLOUTS,
        detector: DetectorParams::default(),
    }
}

/// Cruise control: `ṗ = v`, `v̇ = (u - v) / τ` with `τ = 0.5 s`.
pub fn cc_with_weight(r: f64) -> PlantModel {
    let tau = 0.5;
    base(
        "cc",
        Some(1),
        Matrix::from_rows(&[&[0.0, 1.0], &[0.0, -1.0 / tau]]),
        Matrix::from_rows(&[&[0.0], &[1.0 / tau]]),
        [1.0, 1.0e-3],
        r,
    )
}

/// Single-track yaw model over `[β, ψ̇]` at 20 m/s (m = 1500 kg,
/// I_z = 2500 kg m², cornering stiffness 80 kN/rad per axle, l_f = 1.2 m,
/// l_r = 1.5 m); input is a corrective yaw moment in kN m.
pub fn esp_with_weight(r: f64) -> PlantModel {
    let (m, iz, v, cf, cr, lf, lr) = (1500.0, 2500.0, 20.0, 8.0e4, 8.0e4, 1.2, 1.5);
    let a11 = -(cf + cr) / (m * v);
    let a12 = (cr * lr - cf * lf) / (m * v * v) - 1.0;
    let a21 = (cr * lr - cf * lf) / iz;
    let a22 = -(cf * lf * lf + cr * lr * lr) / (iz * v);
    base(
        "esp",
        Some(2),
        Matrix::from_rows(&[&[a11, a12], &[a21, a22]]),
        Matrix::from_rows(&[&[0.0], &[1000.0 / iz]]),
        [1.0e-3, 1.0],
        r,
    )
}

/// Trajectory tracking: double integrator over `[e, ė]`.
pub fn ttc_with_weight(r: f64) -> PlantModel {
    base(
        "ttc",
        Some(3),
        Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]),
        Matrix::from_rows(&[&[0.0], &[1.0]]),
        [1.0, 1.0e-3],
        r,
    )
}

pub fn cc() -> PlantModel {
    cc_with_weight(CC_INPUT_WEIGHT)
}

pub fn esp() -> PlantModel {
    esp_with_weight(ESP_INPUT_WEIGHT)
}

pub fn ttc() -> PlantModel {
    ttc_with_weight(TTC_INPUT_WEIGHT)
}

/// The trajectory-tracking plant bound to τ2 of the Table I example.
pub fn ttc_table1() -> PlantModel {
    let mut p = ttc_with_weight(TTC_TABLE1_INPUT_WEIGHT);
    p.name = "ttc_table1".into();
    p.task = Some(2);
    p
}

/// Plants for the Table II control tasks τ1, τ2, τ3.
pub fn table2_plants() -> Vec<PlantModel> {
    vec![cc(), esp(), ttc()]
}

pub fn shipped() -> Vec<PlantModel> {
    vec![cc(), esp(), ttc(), ttc_table1()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::max_admissible_delay;
    use crate::model::TaskSet;
    use crate::scenarios;

    fn admissible(plant: &PlantModel, ts: &TaskSet) -> Option<i64> {
        let victim = ts.task(plant.task.unwrap()).unwrap();
        max_admissible_delay(plant, victim, ts).unwrap().max_delay
    }

    #[test]
    fn shipped_plants_hit_calibration_targets() {
        assert_eq!(admissible(&ttc_table1(), &scenarios::table1()), Some(3));
        let ts = scenarios::table2_rm();
        assert_eq!(admissible(&cc(), &ts), Some(3));
        assert_eq!(admissible(&esp(), &ts), Some(12));
        assert_eq!(admissible(&ttc(), &ts), Some(8));
    }

    #[test]
    fn shipped_plants_are_well_formed() {
        for p in shipped() {
            p.check().unwrap();
        }
    }
}

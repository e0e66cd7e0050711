//! 2-D point mass driven toward a goal.
//!
//! State: `[px, py, vx, vy, gx, gy]`. Action: 2-D acceleration command in
//! `[-1, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::clamp_box;

pub const STATE_DIM: usize = 6;
pub const ACTION_DIM: usize = 2;

pub const NOMINAL_START: [f64; 2] = [-0.5, -0.5];
/// The goal never moves; it is kept in the state so the policy input is
/// self-contained.
pub const GOAL: [f64; 2] = [0.5, 0.5];
pub const DT: f64 = 0.1;
pub const ACTION_SCALE: f64 = 1.0;
pub const VELOCITY_DECAY: f64 = 0.8;
pub const ACTION_GAIN: f64 = 0.2;
pub const SUCCESS_RADIUS: f64 = 0.05;
pub const KP: f64 = 2.0;
pub const KD: f64 = 0.5;

pub fn initial_state<R: Rng + ?Sized>(sigma_init: f64, rng: &mut R) -> Vec<f64> {
    let init = Normal::new(0.0, sigma_init).expect("finite sigma");
    let px = clamp_box(NOMINAL_START[0] + init.sample(rng));
    let py = clamp_box(NOMINAL_START[1] + init.sample(rng));
    vec![px, py, 0.0, 0.0, GOAL[0], GOAL[1]]
}

/// One step under an already clipped, noise-perturbed action.
pub fn dynamics(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut next = s.to_vec();
    for d in 0..2 {
        let v = VELOCITY_DECAY * s[2 + d] + ACTION_GAIN * a[d] * ACTION_SCALE;
        next[2 + d] = v;
        next[d] = clamp_box(s[d] + v * DT);
    }
    next
}

pub fn goal_distance(s: &[f64]) -> f64 {
    ((s[0] - s[4]).powi(2) + (s[1] - s[5]).powi(2)).sqrt()
}

pub fn is_success(s: &[f64]) -> bool {
    goal_distance(s) < SUCCESS_RADIUS
}

/// PD controller toward the goal, clipped to the action box.
pub fn expert(s: &[f64]) -> Vec<f64> {
    (0..2)
        .map(|d| (KP * (s[4 + d] - s[d]) - KD * s[2 + d]).clamp(-1.0, 1.0))
        .collect()
}

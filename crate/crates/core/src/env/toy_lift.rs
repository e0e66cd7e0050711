//! Gripper that must grasp an object resting on a table and lift it.
//!
//! State: `[gx, gy, gz, aperture, ox, oy, oz]`. Action: `[dx, dy, dz, dgrip]`
//! in `[-1, 1]`. The object counts as grasped while the aperture is below
//! 0.3 and the gripper is within 0.05 of it; a grasped object moves with the
//! gripper, otherwise it falls toward the table.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{clamp_box, OBJECT_JITTER};

pub const STATE_DIM: usize = 7;
pub const ACTION_DIM: usize = 4;

pub const NOMINAL_GRIPPER: [f64; 3] = [0.0, 0.0, 0.3];
pub const NOMINAL_OBJECT: [f64; 3] = [0.2, 0.1, 0.0];
pub const TABLE_HEIGHT: f64 = 0.0;
pub const MOVE_SCALE: f64 = 0.05;
pub const APERTURE_RATE: f64 = 0.1;
pub const FALL_RATE: f64 = 0.02;
pub const GRASP_APERTURE: f64 = 0.3;
pub const GRASP_RADIUS: f64 = 0.05;
pub const LIFT_THRESHOLD: f64 = 0.2;

/// Expert: distance at which it starts closing the gripper.
const CLOSE_RADIUS: f64 = 0.02;
/// Expert: height it carries the object to.
const CARRY_HEIGHT: f64 = 0.4;
const APPROACH_GAIN: f64 = 10.0;

pub fn initial_state<R: Rng + ?Sized>(sigma_init: f64, rng: &mut R) -> Vec<f64> {
    let init = Normal::new(0.0, sigma_init).expect("finite sigma");
    let jitter = Normal::new(0.0, OBJECT_JITTER).expect("finite sigma");
    let mut s = Vec::with_capacity(STATE_DIM);
    for g in NOMINAL_GRIPPER {
        s.push(clamp_box(g + init.sample(rng)));
    }
    s.push(1.0);
    s.push(clamp_box(NOMINAL_OBJECT[0] + jitter.sample(rng)));
    s.push(clamp_box(NOMINAL_OBJECT[1] + jitter.sample(rng)));
    s.push(TABLE_HEIGHT);
    s
}

fn gripper_object_distance(s: &[f64]) -> f64 {
    ((s[0] - s[4]).powi(2) + (s[1] - s[5]).powi(2) + (s[2] - s[6]).powi(2)).sqrt()
}

pub fn is_grasped(s: &[f64]) -> bool {
    s[3] < GRASP_APERTURE && gripper_object_distance(s) < GRASP_RADIUS
}

pub fn is_success(s: &[f64]) -> bool {
    is_grasped(s) && s[6] > LIFT_THRESHOLD
}

pub fn dynamics(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut next = s.to_vec();
    next[3] = (s[3] + a[3] * APERTURE_RATE).clamp(0.0, 1.0);
    let grasped = next[3] < GRASP_APERTURE && gripper_object_distance(s) < GRASP_RADIUS;
    for d in 0..3 {
        next[d] = clamp_box(s[d] + a[d] * MOVE_SCALE);
    }
    if grasped {
        for d in 0..3 {
            next[4 + d] = clamp_box(s[4 + d] + (next[d] - s[d]));
        }
        next[6] = next[6].max(TABLE_HEIGHT);
    } else {
        next[6] = (s[6] - FALL_RATE).max(TABLE_HEIGHT);
    }
    next
}

/// Phase controller: approach with the gripper open, close once aligned,
/// then carry the object up and hold it.
pub fn expert(s: &[f64]) -> Vec<f64> {
    let d = [s[4] - s[0], s[5] - s[1], s[6] - s[2]];
    let dist = gripper_object_distance(s);
    let toward = |k: f64| -> [f64; 3] {
        [
            (k * d[0]).clamp(-1.0, 1.0),
            (k * d[1]).clamp(-1.0, 1.0),
            (k * d[2]).clamp(-1.0, 1.0),
        ]
    };
    if is_grasped(s) {
        let lift = ((CARRY_HEIGHT - s[6]) / MOVE_SCALE).clamp(-1.0, 1.0);
        vec![0.0, 0.0, lift, -1.0]
    } else if dist < CLOSE_RADIUS {
        let [x, y, z] = toward(APPROACH_GAIN);
        vec![x, y, z, -1.0]
    } else {
        let [x, y, z] = toward(APPROACH_GAIN);
        vec![x, y, z, 1.0]
    }
}

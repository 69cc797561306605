//! Per-task layouts, kinematic update rules and success predicates.

use rand::Rng;

use super::{Task, WORKSPACE};

/// Geometry constants shared by the dynamics, the expert and clients.
pub mod geometry {
    pub const HOME: [f64; 2] = [0.0, -0.6];

    pub const PICK_OBJECT_CENTER: [f64; 2] = [-0.4, 0.2];
    /// Fixed container position.
    pub const PICK_CONTAINER: [f64; 2] = [0.4, 0.4];
    /// Half-width of the object's 0.2 x 0.2 randomization square.
    pub const PICK_HALF_WIDTH: f64 = 0.1;
    pub const GRASP_RADIUS: f64 = 0.05;
    pub const GRASP_CLOSE_BELOW: f64 = 0.3;
    pub const GRASP_RELEASE_ABOVE: f64 = 0.7;
    pub const PLACE_RADIUS: f64 = 0.07;

    pub const PUSH_CUBE_CENTER: [f64; 2] = [0.0, -0.1];
    /// Fixed target position.
    pub const PUSH_TARGET: [f64; 2] = [0.0, 0.5];
    /// Half-width of the cube's 0.1 x 0.1 randomization square.
    pub const PUSH_HALF_WIDTH: f64 = 0.05;
    pub const PUSHER_RADIUS: f64 = 0.08;
    pub const PUSH_SUCCESS_RADIUS: f64 = 0.05;

    pub const LATCH_BASE_CENTER: [f64; 2] = [0.2, 0.5];
    /// Half-width of the base's 0.8 x 0.8 randomization square.
    pub const LATCH_HALF_WIDTH: f64 = 0.4;
    pub const HANDLE_LENGTH: f64 = 0.15;
    pub const HANDLE_CONTACT_RADIUS: f64 = 0.05;
    pub const HANDLE_ANGLE_LIMIT: f64 = 1.4;
    pub const UNLATCH_ANGLE: f64 = 1.0;
    /// Pull distance that opens the door fully.
    pub const DOOR_TRAVEL: f64 = 0.3;
    pub const DOOR_OPEN_SUCCESS: f64 = 0.9;

    /// Handle tip for a base position and handle angle.
    pub fn handle_tip(base: [f64; 2], angle: f64) -> [f64; 2] {
        [
            base[0] - HANDLE_LENGTH * angle.cos(),
            base[1] - HANDLE_LENGTH * angle.sin(),
        ]
    }
}

use geometry::*;

pub(super) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn clamp_ws(v: f64) -> f64 {
    v.clamp(-WORKSPACE, WORKSPACE)
}

fn sample_square<R: Rng + ?Sized>(rng: &mut R, center: [f64; 2], half: f64) -> [f64; 2] {
    [
        center[0] + rng.random_range(-half..=half),
        center[1] + rng.random_range(-half..=half),
    ]
}

/// Resolves an overlap between the pusher and the cube. The cube slides
/// along the pusher's motion until the two just touch, like a flat pusher
/// face; a pusher that did not move pushes out along the contact normal.
fn push_out(ee: [f64; 2], cube: [f64; 2], motion: [f64; 2]) -> [f64; 2] {
    let d = [cube[0] - ee[0], cube[1] - ee[1]];
    let m = (motion[0].powi(2) + motion[1].powi(2)).sqrt();
    if m > 1e-12 {
        let u = [motion[0] / m, motion[1] / m];
        let along = d[0] * u[0] + d[1] * u[1];
        let dd = d[0] * d[0] + d[1] * d[1];
        // smallest t >= 0 with |d + t·u| = R; positive because |d| < R
        let t = -along + (along * along - dd + PUSHER_RADIUS * PUSHER_RADIUS).sqrt();
        return [cube[0] + t * u[0], cube[1] + t * u[1]];
    }
    let n = dd_norm(d);
    [ee[0] + PUSHER_RADIUS * n[0], ee[1] + PUSHER_RADIUS * n[1]]
}

fn dd_norm(d: [f64; 2]) -> [f64; 2] {
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if n > 1e-12 {
        [d[0] / n, d[1] / n]
    } else {
        [0.0, 1.0]
    }
}

pub(super) fn initial_values<R: Rng + ?Sized>(task: Task, rng: &mut R) -> Vec<f64> {
    match task {
        Task::PickPlace => {
            let obj = sample_square(rng, PICK_OBJECT_CENTER, PICK_HALF_WIDTH);
            let cont = PICK_CONTAINER;
            vec![HOME[0], HOME[1], 1.0, obj[0], obj[1], cont[0], cont[1], 0.0]
        }
        Task::PushCube => {
            let cube = sample_square(rng, PUSH_CUBE_CENTER, PUSH_HALF_WIDTH);
            let target = PUSH_TARGET;
            vec![HOME[0], HOME[1], cube[0], cube[1], target[0], target[1]]
        }
        Task::Latch => {
            let base = sample_square(rng, LATCH_BASE_CENTER, LATCH_HALF_WIDTH);
            vec![HOME[0], HOME[1], 0.0, 0.0, base[0], base[1]]
        }
    }
}

/// Applies an already-clipped action.
pub(super) fn advance(task: Task, values: &[f64], action: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    match task {
        Task::PickPlace => {
            v[0] = clamp_ws(v[0] + action[0]);
            v[1] = clamp_ws(v[1] + action[1]);
            v[2] = (v[2] + action[2]).clamp(0.0, 1.0);
            let ee = [v[0], v[1]];
            let grasped = v[7] > 0.5;
            if grasped {
                v[3] = ee[0];
                v[4] = ee[1];
                if v[2] > GRASP_RELEASE_ABOVE {
                    v[7] = 0.0;
                }
            } else if v[2] < GRASP_CLOSE_BELOW && dist(ee, [v[3], v[4]]) < GRASP_RADIUS {
                v[7] = 1.0;
                v[3] = ee[0];
                v[4] = ee[1];
            }
        }
        Task::PushCube => {
            v[0] = clamp_ws(v[0] + action[0]);
            v[1] = clamp_ws(v[1] + action[1]);
            let ee = [v[0], v[1]];
            let cube = [v[2], v[3]];
            if dist(ee, cube) < PUSHER_RADIUS {
                let c = push_out(ee, cube, [action[0], action[1]]);
                v[2] = clamp_ws(c[0]);
                v[3] = clamp_ws(c[1]);
            }
        }
        Task::Latch => {
            let ee_prev = [v[0], v[1]];
            let base = [v[4], v[5]];
            let angle_prev = v[2];
            let contact = dist(ee_prev, handle_tip(base, angle_prev)) < HANDLE_CONTACT_RADIUS;
            v[0] = clamp_ws(v[0] + action[0]);
            v[1] = clamp_ws(v[1] + action[1]);
            if contact {
                v[2] = (angle_prev + action[2]).clamp(-HANDLE_ANGLE_LIMIT, HANDLE_ANGLE_LIMIT);
                if angle_prev.abs() > UNLATCH_ANGLE {
                    let pull = (-action[1]).max(0.0);
                    let opened = (v[3] + pull / DOOR_TRAVEL).min(1.0);
                    let travel = (opened - v[3]) * DOOR_TRAVEL;
                    v[3] = opened;
                    v[5] = clamp_ws(v[5] - travel);
                }
            }
        }
    }
    v
}

pub(super) fn succeeded(task: Task, v: &[f64]) -> bool {
    match task {
        Task::PickPlace => v[7] < 0.5 && dist([v[3], v[4]], [v[5], v[6]]) < PLACE_RADIUS,
        Task::PushCube => dist([v[2], v[3]], [v[4], v[5]]) < PUSH_SUCCESS_RADIUS,
        Task::Latch => v[2].abs() > UNLATCH_ANGLE && v[3] > DOOR_OPEN_SUCCESS,
    }
}

pub(super) fn within_bounds(task: Task, v: &[f64]) -> bool {
    let pos = |i: usize| v[i].abs() <= WORKSPACE;
    let unit = |i: usize| (0.0..=1.0).contains(&v[i]);
    if v.len() != task.state_dim() || v.iter().any(|x| !x.is_finite()) {
        return false;
    }
    match task {
        Task::PickPlace => {
            [0, 1, 3, 4, 5, 6].into_iter().all(pos) && unit(2) && (v[7] == 0.0 || v[7] == 1.0)
        }
        Task::PushCube => (0..6).all(pos),
        Task::Latch => {
            [0, 1, 4, 5].into_iter().all(pos)
                && v[2].abs() <= std::f64::consts::PI
                && unit(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{reset, step};

    #[test]
    fn grasped_object_tracks_end_effector() {
        let mut s = reset(Task::PickPlace, 1);
        // put the gripper on the object, closed
        s.values[0] = s.values[3];
        s.values[1] = s.values[4];
        s.values[2] = 0.45;
        s = step(&s, &[0.0, 0.0, -0.2]).unwrap();
        assert_eq!(s.values[7], 1.0);
        for a in [[0.05, 0.0, 0.0], [0.01, -0.03, -0.1], [-0.05, 0.05, 0.1]] {
            s = step(&s, &a).unwrap();
            assert_eq!([s.values[3], s.values[4]], [s.values[0], s.values[1]]);
        }
    }

    #[test]
    fn release_in_container_succeeds() {
        let mut s = reset(Task::PickPlace, 2);
        s.values[0] = s.values[5];
        s.values[1] = s.values[6];
        s.values[3] = s.values[5];
        s.values[4] = s.values[6];
        s.values[2] = 0.65;
        s.values[7] = 1.0;
        s = step(&s, &[0.0, 0.0, 0.2]).unwrap();
        assert_eq!(s.values[7], 0.0);
        assert!(s.success);
    }

    #[test]
    fn pusher_moves_cube_along_motion() {
        let mut s = reset(Task::PushCube, 0);
        s.values[0] = s.values[2];
        s.values[1] = s.values[3] - 0.1;
        let cube_y = s.values[3];
        s = step(&s, &[0.0, 0.05]).unwrap();
        assert!((s.values[3] - (cube_y + 0.03)).abs() < 1e-12);
        assert!((dist([s.values[0], s.values[1]], [s.values[2], s.values[3]]) - 0.08).abs() < 1e-12);

        // off-centre contact: the cube still travels straight up
        let mut s = reset(Task::PushCube, 0);
        s.values[0] = s.values[2] + 0.03;
        s.values[1] = s.values[3] - 0.1;
        let cube_x = s.values[2];
        s = step(&s, &[0.0, 0.05]).unwrap();
        assert_eq!(s.values[2], cube_x);
        assert!((dist([s.values[0], s.values[1]], [s.values[2], s.values[3]]) - 0.08).abs() < 1e-12);
    }

    #[test]
    fn handle_only_turns_in_contact() {
        let s0 = reset(Task::Latch, 4);
        let s1 = step(&s0, &[0.0, 0.0, 0.1]).unwrap();
        assert_eq!(s1.values[2], 0.0);
        let mut s = s0.clone();
        let tip = handle_tip([s.values[4], s.values[5]], 0.0);
        s.values[0] = tip[0];
        s.values[1] = tip[1];
        let s2 = step(&s, &[0.0, 0.0, 0.1]).unwrap();
        assert!((s2.values[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn door_opens_only_when_unlatched() {
        let mut s = reset(Task::Latch, 5);
        let base = [s.values[4], s.values[5]];
        let tip = handle_tip(base, 0.5);
        s.values[2] = 0.5;
        s.values[0] = tip[0];
        s.values[1] = tip[1];
        let locked = step(&s, &[0.0, -0.05, 0.0]).unwrap();
        assert_eq!(locked.values[3], 0.0);

        let tip = handle_tip(base, 1.2);
        s.values[2] = 1.2;
        s.values[0] = tip[0];
        s.values[1] = tip[1];
        let pulled = step(&s, &[0.0, -0.05, 0.0]).unwrap();
        assert!((pulled.values[3] - 0.05 / DOOR_TRAVEL).abs() < 1e-12);
        assert!((pulled.values[5] - (base[1] - 0.05)).abs() < 1e-12);
    }
}

//! Deterministic waypoint controllers.
//!
//! Each controller is a pure function of the (possibly misperceived) state,
//! so the phase is re-derived every step and the controller recovers from
//! perturbations without hidden memory.

use super::tasks::geometry::*;
use super::tasks::dist;
use super::{EnvState, Task};

const CLOSE_ENOUGH: f64 = 0.02;
const STEP: f64 = 0.05;

/// Expert action for the current state.
pub fn scripted_expert(state: &EnvState) -> Vec<f64> {
    expert_action(state.task, &state.values)
}

pub(crate) fn expert_action(task: Task, v: &[f64]) -> Vec<f64> {
    match task {
        Task::PickPlace => pick_place(v),
        Task::PushCube => push_cube(v),
        Task::Latch => latch(v),
    }
}

/// Displacement toward `to`, norm-limited to `max_step`.
fn toward(from: [f64; 2], to: [f64; 2], max_step: f64) -> [f64; 2] {
    let d = [to[0] - from[0], to[1] - from[1]];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if n <= max_step {
        d
    } else {
        [d[0] * max_step / n, d[1] * max_step / n]
    }
}

fn pick_place(v: &[f64]) -> Vec<f64> {
    let ee = [v[0], v[1]];
    let grip = v[2];
    let obj = [v[3], v[4]];
    let cont = [v[5], v[6]];
    let grasped = v[7] > 0.5;
    let open = 0.2;
    let close = -0.2;
    if grasped {
        let m = toward(ee, cont, STEP);
        let d = dist(ee, cont);
        // once the release has started, finish it unless far off
        let releasing = grip > GRASP_CLOSE_BELOW && d < PLACE_RADIUS;
        let g = if d < 0.04 || releasing { open } else { close };
        return vec![m[0], m[1], g];
    }
    if dist(obj, cont) < CLOSE_ENOUGH {
        // placed; back off with the gripper open
        return vec![0.0, 0.0, open];
    }
    let m = toward(ee, obj, STEP);
    let g = if dist(ee, obj) < GRASP_RADIUS { close } else { open };
    vec![m[0], m[1], g]
}

fn push_cube(v: &[f64]) -> Vec<f64> {
    let ee = [v[0], v[1]];
    let cube = [v[2], v[3]];
    let target = [v[4], v[5]];
    let to_target = dist(cube, target);
    if to_target < CLOSE_ENOUGH {
        return vec![0.0, 0.0];
    }
    let u = [(target[0] - cube[0]) / to_target, (target[1] - cube[1]) / to_target];
    let rel = [ee[0] - cube[0], ee[1] - cube[1]];
    let along = rel[0] * u[0] + rel[1] * u[1];
    let lateral = [rel[0] - along * u[0], rel[1] - along * u[1]];
    let lat = (lateral[0] * lateral[0] + lateral[1] * lateral[1]).sqrt();

    let clearance = PUSHER_RADIUS + 0.04;
    if along < -0.05 && lat < 0.04 {
        // lined up behind the cube: push, easing off near the goal
        let speed = to_target.clamp(0.01, STEP);
        let d = [u[0] * speed - 0.5 * lateral[0], u[1] * speed - 0.5 * lateral[1]];
        let m = toward([0.0, 0.0], d, STEP);
        return vec![m[0], m[1]];
    }
    if along >= -0.05 && lat < clearance {
        // beside or in front of the cube: step out sideways first
        let side = if lat > 1e-9 {
            [lateral[0] / lat, lateral[1] / lat]
        } else {
            [-u[1], u[0]]
        };
        let goal = [cube[0] + side[0] * (clearance + 0.01), cube[1] + side[1] * (clearance + 0.01)];
        let goal = [goal[0] - u[0] * 0.02, goal[1] - u[1] * 0.02];
        let m = toward(ee, goal, STEP);
        return vec![m[0], m[1]];
    }
    if along >= -0.05 {
        // clear to the side: retreat behind the cube
        let goal = [ee[0] - u[0] * 0.2, ee[1] - u[1] * 0.2];
        let m = toward(ee, goal, STEP);
        return vec![m[0], m[1]];
    }
    // behind but off the line: move to the staging point
    let stage = [cube[0] - u[0] * clearance, cube[1] - u[1] * clearance];
    let m = toward(ee, stage, STEP);
    vec![m[0], m[1]]
}

fn latch(v: &[f64]) -> Vec<f64> {
    let ee = [v[0], v[1]];
    let angle = v[2];
    let open = v[3];
    let base = [v[4], v[5]];
    let tip = handle_tip(base, angle);
    if open > 0.95 && angle.abs() > UNLATCH_ANGLE {
        return vec![0.0, 0.0, 0.0];
    }
    if dist(ee, tip) > 0.04 {
        let m = toward(ee, tip, STEP);
        return vec![m[0], m[1], 0.0];
    }
    let target_angle = 1.2;
    if angle < target_angle - 0.05 {
        let turn = (target_angle - angle).min(0.1);
        let next = handle_tip(base, angle + turn);
        let m = toward(ee, next, STEP);
        return vec![m[0], m[1], turn];
    }
    let dx = (tip[0] - ee[0]).clamp(-STEP, STEP);
    vec![dx, -STEP, 0.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{reset, step, MAX_STEPS};

    fn run(task: Task, seed: u64) -> EnvState {
        let mut s = reset(task, seed);
        while !s.is_done() {
            s = step(&s, &scripted_expert(&s)).unwrap();
        }
        s
    }

    #[test]
    fn expert_solves_every_task() {
        for task in Task::ALL {
            let wins = (0..200).filter(|&seed| run(task, seed).success).count();
            assert_eq!(wins, 200, "{task}");
        }
    }

    #[test]
    fn expert_actions_respect_bounds() {
        for task in Task::ALL {
            let bounds = task.action_bounds();
            let mut s = reset(task, 5);
            for _ in 0..MAX_STEPS {
                let a = scripted_expert(&s);
                assert!(bounds.contains(&a), "{task}: {a:?}");
                s = step(&s, &a).unwrap();
                if s.is_done() {
                    break;
                }
            }
        }
    }

    #[test]
    fn approaches_object_then_releases_in_container() {
        let s = reset(Task::PickPlace, 0);
        let a = scripted_expert(&s);
        let disp = [s.values[3] - s.values[0], s.values[4] - s.values[1]];
        assert!(a[0] * disp[0] + a[1] * disp[1] > 0.0);

        let mut held = s.clone();
        held.values[0] = held.values[5];
        held.values[1] = held.values[6];
        held.values[3] = held.values[5];
        held.values[4] = held.values[6];
        held.values[2] = 0.0;
        held.values[7] = 1.0;
        assert!(scripted_expert(&held)[2] > 0.0);
    }
}

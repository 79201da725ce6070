//! Skill chunks shared by the privileged expert and the scripted policies, and
//! the closed-loop episode driver.

use rand::Rng;

use super::episode::Episode;
use super::oracle::{check_success, oracle_keyframes, oracle_keyframes_prefix};
use super::render::{render, Observation};
use super::world::{home_for, make_env, step, Action, Vec3, WorldState, PADS, ROW_Y, Z_MAX};
use super::{EnvError, TaskId};
use crate::nnet::named_rng;

/// Every Spatial pick-and-place leg occupies exactly this many frames, so
/// decisions fall on multiples of it.
pub const LEG_FRAMES: usize = 10;
/// Frames a Temporal cube is held at `Z_MAX` before it is lowered.
pub const HOLD_FRAMES: usize = 6;
/// Counting expert waits this long after the final lamp edge before pushing.
pub const PUSH_DELAY: u32 = 8;

/// `MoveTo(target)` repeated until the gripper would arrive.
pub fn moves_to(from: Vec3, target: Vec3) -> Vec<Action> {
    let mut pos = from;
    let mut out = Vec::new();
    while !pos.approx_eq(&target) {
        out.push(Action::MoveTo(target));
        pos = pos.step_toward(&target);
    }
    out
}

fn lifts_to(from: Vec3, z: f64) -> Vec<Action> {
    moves_to(from, from.with_z(z)).into_iter().map(|_| Action::Lift(z)).collect()
}

/// Pick at `pick`, place at `place`, padded with waits to `LEG_FRAMES`.
pub fn leg_chunk(gripper: Vec3, pick: Vec3, place: Vec3) -> Vec<Action> {
    let mut out = moves_to(gripper, pick);
    out.push(Action::Grasp);
    out.extend(moves_to(pick, place));
    out.push(Action::Release);
    debug_assert!(out.len() <= LEG_FRAMES, "leg longer than its slot");
    out.resize(LEG_FRAMES.max(out.len()), Action::Wait);
    out
}

/// Grasp the cube at `cube`, lift to `Z_MAX`, hold, put it back exactly, and
/// retract to `home`.
pub fn temporal_cycle_chunk(gripper: Vec3, cube: Vec3, home: Vec3) -> Vec<Action> {
    let mut out = moves_to(gripper, cube);
    out.push(Action::Grasp);
    out.extend(lifts_to(cube, Z_MAX));
    out.extend(std::iter::repeat_n(Action::Wait, HOLD_FRAMES));
    out.extend(lifts_to(cube.with_z(Z_MAX), cube.z));
    out.push(Action::Release);
    out.extend(moves_to(cube, home));
    out
}

/// Reach the cube at `cube` from `gripper`, grasp it and lift past `H_LIFT`.
pub fn pick_and_lift_chunk(gripper: Vec3, cube: Vec3) -> Vec<Action> {
    let mut out = moves_to(gripper, cube);
    out.push(Action::Grasp);
    out.extend(lifts_to(cube, Z_MAX));
    out
}

pub fn counting_staging(cube: Vec3) -> Vec3 {
    Vec3::new(cube.x - 1.0, cube.y, 0.0)
}

pub fn push_chunk() -> Vec<Action> {
    vec![Action::Push { dx: 1.0, dy: 0.0 }; 2]
}

fn pad_pos(x: f64, level: usize) -> Vec3 {
    Vec3::new(x, ROW_Y, level as f64)
}

struct Expert {
    spatial_spare: usize,
}

impl Expert {
    fn new(task: TaskId, seed: u64) -> Self {
        let mut rng = named_rng(seed, &format!("expert/{}", task.name()));
        Self { spatial_spare: rng.gen_range(0..2) }
    }

    fn decide(&self, s: &WorldState) -> Vec<Action> {
        let g = s.gripper.pos;
        match s.task {
            TaskId::Temporal => {
                let next = s.lift_log.len();
                temporal_cycle_chunk(g, s.objects[next].pos, home_for(s.task))
            }
            TaskId::Counting => {
                let cube = s.objects[0].pos;
                let staging = counting_staging(cube);
                let go = s.final_off_frame().unwrap_or(0) + PUSH_DELAY;
                if !g.approx_eq(&staging) && cube.approx_eq(&s.initial_positions[0]) {
                    moves_to(g, staging)
                } else if s.t < go {
                    vec![Action::Wait; (go - s.t) as usize]
                } else {
                    push_chunk()
                }
            }
            TaskId::Spatial => {
                let [bottom, middle, top] = s.stack_order.expect("spatial state has a stack");
                let base = s.initial_positions[bottom].x;
                let free: Vec<f64> = PADS.iter().copied().filter(|&x| x != base).collect();
                let (p1, p2) = (free[self.spatial_spare], free[1 - self.spatial_spare]);
                let (obj, place) = match s.release_log.len() {
                    0 => (top, pad_pos(p1, 0)),
                    1 => (middle, pad_pos(p2, 0)),
                    2 => (bottom, pad_pos(p2, 1)),
                    _ => (top, pad_pos(p2, 2)),
                };
                leg_chunk(g, s.objects[obj].pos, place)
            }
            TaskId::Identity => {
                if !s.teacher_done() {
                    vec![Action::Wait]
                } else {
                    pick_and_lift_chunk(g, s.objects[s.identity_target()].pos)
                }
            }
        }
    }
}

/// Drives an episode to termination. `decide` sees the full state trace; it
/// is used only by the privileged expert and the oracle driver.
fn simulate<F>(task: TaskId, seed: u64, mut decide: F) -> Episode
where
    F: FnMut(&[WorldState], &[Observation]) -> Vec<Action>,
{
    let mut state = make_env(task, seed);
    let mut states = vec![state.clone()];
    let mut observations = vec![render(&state)];
    let mut actions = Vec::new();
    while !state.is_terminal() {
        let mut chunk = decide(&states, &observations);
        if chunk.is_empty() {
            chunk.push(Action::Wait);
        }
        for a in chunk {
            state = step(&state, &a);
            actions.push(a);
            observations.push(render(&state));
            states.push(state.clone());
            if state.is_terminal() {
                break;
            }
        }
    }
    Episode::from_trace(task, seed, observations, actions, states)
}

/// Closed-loop rollout for a controller that only sees rendered observations.
/// The controller is asked for a new chunk whenever the previous one is spent.
pub fn run_episode<F>(task: TaskId, seed: u64, mut decide: F) -> Episode
where
    F: FnMut(&[Observation]) -> Vec<Action>,
{
    simulate(task, seed, |_, obs| decide(obs))
}

/// [`run_episode`] that also hands the controller the ground-truth milestone
/// frames reached so far. Only frame indices cross the boundary.
pub fn run_episode_with_oracle<F>(task: TaskId, seed: u64, mut decide: F) -> Episode
where
    F: FnMut(&[Observation], &[usize]) -> Vec<Action>,
{
    simulate(task, seed, |states, obs| decide(obs, &oracle_keyframes_prefix(task, states)))
}

/// Privileged expert demonstration. Fails only if the expert itself is broken.
pub fn scripted_expert(task: TaskId, seed: u64) -> Result<Episode, EnvError> {
    let expert = Expert::new(task, seed);
    let ep = simulate(task, seed, |s, _| expert.decide(s.last().expect("non-empty trace")));
    let report = check_success(&ep);
    if !report.success {
        return Err(EnvError::ExpertFailure {
            task,
            seed,
            reason: report.failure.unwrap_or_else(|| "unknown".into()),
        });
    }
    if oracle_keyframes(&ep)?.len() != task.phase_count() {
        return Err(EnvError::ExpertFailure { task, seed, reason: "keyframe count".into() });
    }
    Ok(ep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leg_chunks_fit_their_slot() {
        for &a in &PADS {
            for &b in &PADS {
                for za in 0..3 {
                    for zb in 0..3 {
                        let c = leg_chunk(pad_pos(a, 2), pad_pos(a, za), pad_pos(b, zb));
                        assert_eq!(c.len(), LEG_FRAMES);
                    }
                }
            }
        }
    }

    #[test]
    fn cycle_returns_cube_to_start() {
        let s0 = make_env(TaskId::Temporal, 9);
        let mut s = s0.clone();
        for a in temporal_cycle_chunk(s.gripper.pos, s.objects[0].pos, s.gripper.pos) {
            s = step(&s, &a);
        }
        assert_eq!(s.objects, s0.objects);
        assert_eq!(s.gripper.pos, s0.gripper.pos);
        assert_eq!(s.lift_log, vec![0]);
    }
}

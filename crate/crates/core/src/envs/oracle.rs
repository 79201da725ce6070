use serde::{Deserialize, Serialize};

use super::episode::{Episode, KeyframeAnnotation};
use super::world::{Holder, WorldState, BUFFER_POS, H_LIFT, PLACE_EPS, Z_MAX};
use super::{EnvError, TaskId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub success: bool,
    pub stages_completed: usize,
    pub stages_total: usize,
    pub failure: Option<String>,
}

/// Objects lifted by the agent across `H_LIFT`, in crossing order.
fn agent_lift_events(states: &[WorldState]) -> Vec<usize> {
    let mut events = Vec::new();
    for w in states.windows(2) {
        for (a, b) in w[0].objects.iter().zip(&w[1].objects) {
            if b.held_by == Holder::Agent && a.pos.z < H_LIFT && b.pos.z >= H_LIFT {
                events.push(b.id);
            }
        }
    }
    events
}

fn first_agent_grasp(states: &[WorldState]) -> Option<usize> {
    states.iter().find_map(|s| s.objects.iter().find(|o| o.held_by == Holder::Agent).map(|o| o.id))
}

fn argmax_z(states: &[WorldState], id: usize) -> usize {
    let mut best = 0;
    for (t, s) in states.iter().enumerate() {
        if s.objects[id].pos.z > states[best].objects[id].pos.z {
            best = t;
        }
    }
    best
}

/// Ground-truth milestone frames recovered from the episode's state trace.
pub fn oracle_keyframes(ep: &Episode) -> Result<Vec<KeyframeAnnotation>, EnvError> {
    let states = &ep.states;
    let first = states.first().ok_or(EnvError::MissingTrace)?;
    let incomplete = |what: &str| EnvError::IncompleteTrace(format!("{} seed {}: {what}", ep.task, ep.seed));
    let frames: Vec<usize> = match ep.task {
        TaskId::Spatial => vec![0],
        TaskId::Temporal => {
            let mut f = vec![0];
            for id in 0..3 {
                let t = argmax_z(states, id);
                if states[t].objects[id].pos.z < H_LIFT {
                    return Err(incomplete("cube never lifted"));
                }
                f.push(t);
            }
            f
        }
        TaskId::Counting => {
            let mut f = vec![0];
            f.extend((1..states.len()).filter(|&t| states[t].lamp != states[t - 1].lamp));
            if f.len() != 5 {
                return Err(incomplete("lamp sequence cut short"));
            }
            f
        }
        TaskId::Identity => {
            let (a, b) = first.swap.ok_or_else(|| incomplete("no swap plan"))?;
            let t_a = states.iter().position(|s| {
                let o = &s.objects[a];
                o.held_by == Holder::Free && o.pos.approx_eq(&BUFFER_POS)
            });
            let t_b = states.iter().position(|s| s.objects[b].held_by == Holder::Teacher);
            match (t_a, t_b) {
                (Some(x), Some(y)) => vec![0, x, y],
                _ => return Err(incomplete("teacher swap unfinished")),
            }
        }
    };
    if frames.windows(2).any(|w| w[0] >= w[1]) {
        return Err(incomplete("keyframes not increasing"));
    }
    Ok(frames
        .into_iter()
        .enumerate()
        .map(|(i, frame)| KeyframeAnnotation { task: ep.task, phase: i + 1, frame })
        .collect())
}

/// Milestones already reached within a growing state prefix. Each entry is
/// final: later states never move an earlier one. Used to hand causal
/// ground-truth keyframes to a policy during a rollout.
pub fn oracle_keyframes_prefix(task: TaskId, states: &[WorldState]) -> Vec<usize> {
    let Some(first) = states.first() else { return Vec::new() };
    let mut f = vec![0];
    match task {
        TaskId::Spatial => {}
        TaskId::Temporal => {
            let last = states.last().expect("non-empty");
            for id in 0..3 {
                let t = argmax_z(states, id);
                let peak = states[t].objects[id].pos.z;
                // The peak is settled once it hits the ceiling or the cube has come down.
                if peak < H_LIFT || (peak < Z_MAX && last.objects[id].pos.z >= peak) {
                    break;
                }
                f.push(t);
            }
        }
        TaskId::Counting => f.extend((1..states.len()).filter(|&t| states[t].lamp != states[t - 1].lamp)),
        TaskId::Identity => {
            if let Some((a, b)) = first.swap {
                let t_a = states.iter().position(|s| {
                    let o = &s.objects[a];
                    o.held_by == Holder::Free && o.pos.approx_eq(&BUFFER_POS)
                });
                f.extend(t_a);
                if t_a.is_some() {
                    f.extend(states.iter().position(|s| s.objects[b].held_by == Holder::Teacher));
                }
            }
        }
    }
    f
}

fn report(task: TaskId, stages: usize, success: bool, failure: Option<&str>) -> SuccessReport {
    let total = task.stages_total();
    SuccessReport {
        success,
        stages_completed: if success { total } else { stages.min(total) },
        stages_total: total,
        failure: if success { None } else { Some(failure.unwrap_or("incomplete").to_string()) },
    }
}

/// Evaluates the task's success criteria on the ground-truth trace.
pub fn check_success(ep: &Episode) -> SuccessReport {
    let states = &ep.states;
    let (Some(first), Some(last)) = (states.first(), states.last()) else {
        return report(ep.task, 0, false, Some("missing-trace"));
    };
    let timed_out = last.t >= ep.task.horizon();
    match ep.task {
        TaskId::Temporal => {
            let events = agent_lift_events(states);
            let mut stages = 0;
            for (i, &id) in events.iter().enumerate() {
                if id != i || i >= 3 {
                    return report(ep.task, stages, false, Some("order-violation"));
                }
                if last.objects[id].pos.dist(&first.objects[id].pos) <= PLACE_EPS
                    && last.objects[id].held_by == Holder::Free
                {
                    stages += 1;
                }
            }
            let success = stages == 3;
            report(ep.task, stages, success, Some(if timed_out { "timeout" } else { "not-replaced" }))
        }
        TaskId::Counting => {
            let s4 = first.final_off_frame().expect("counting has a schedule") as usize;
            let start = first.objects[0].pos;
            let premature = states.iter().take(s4.min(states.len())).any(|s| !s.objects[0].pos.approx_eq(&start));
            if premature {
                return report(ep.task, 0, false, Some("premature-motion"));
            }
            if states.len() <= s4 {
                return report(ep.task, 0, false, Some("timeout"));
            }
            let target = first.target.expect("counting has a target");
            let on_target = last.objects[0].pos.dist(&target) <= PLACE_EPS;
            report(ep.task, 1 + usize::from(on_target), on_target, Some(if timed_out { "timeout" } else { "off-target" }))
        }
        TaskId::Spatial => {
            let [bottom, middle, top] = first.stack_order.expect("spatial has a stack");
            let base = first.objects[bottom].pos;
            let rel = |a: &super::Vec3, b: &super::Vec3, dz: f64| {
                (a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9 && (a.z - (b.z + dz)).abs() < 1e-9
            };
            let releases = &last.release_log;
            let mut stages = 0;
            let mut placed: Vec<super::Vec3> = Vec::new();
            for (i, (id, pos)) in releases.iter().enumerate().take(4) {
                let ok = match i {
                    0 => *id == top && pos.z == 0.0 && pos.x != base.x,
                    1 => *id == middle && pos.z == 0.0 && pos.x != base.x && pos.x != placed[0].x,
                    2 => *id == bottom && rel(pos, &placed[1], 1.0),
                    _ => *id == top && rel(pos, &placed[2], 1.0),
                };
                if !ok {
                    break;
                }
                placed.push(*pos);
                stages += 1;
            }
            let o = &last.objects;
            let stacked = last.held.is_none()
                && rel(&o[bottom].pos, &o[middle].pos, 1.0)
                && rel(&o[top].pos, &o[bottom].pos, 1.0)
                && o[middle].pos.z == 0.0;
            report(ep.task, stages, stacked, Some(if timed_out { "timeout" } else { "wrong-order" }))
        }
        TaskId::Identity => {
            let target = first.identity_target();
            match first_agent_grasp(states) {
                Some(id) if id == target => {
                    let lifted = agent_lift_events(states).first() == Some(&target);
                    report(ep.task, 1 + usize::from(lifted), lifted, Some("not-lifted"))
                }
                Some(_) => report(ep.task, 0, false, Some("wrong-object")),
                None => report(ep.task, 0, false, Some(if timed_out { "timeout" } else { "no-grasp" })),
            }
        }
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::perception::{empty_slots, gripper, lamp_on, locate, slot_at, teacher};
use super::view::HistoryView;
use crate::envs::{
    counting_staging, home_for, leg_chunk, moves_to, pick_and_lift_chunk, push_chunk, temporal_cycle_chunk, Action,
    CubeColor, Observation, TaskId, Vec3, H_LIFT, IDENTITY_SLOTS, PADS, ROW_Y,
};

const TASK_CUBES: [CubeColor; 3] = [CubeColor::Red, CubeColor::Green, CubeColor::Blue];

/// Facts a policy has established from its view. `None` means unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum BeliefState {
    Temporal {
        /// Cubes (0 = red) seen above lift height, in visible-frame order.
        cycled: Vec<usize>,
        /// Whether an empty `cycled` certainly means nothing was cycled.
        complete: bool,
    },
    Counting {
        /// Lamp transitions between consecutive visible frames.
        edges: usize,
        /// Maximal runs of lit visible frames.
        on_runs: usize,
        lamp_on_now: bool,
        act_permitted: bool,
    },
    Spatial {
        /// Current leg, read off the cube layout and gripper height.
        stage: Option<usize>,
        /// Original `[bottom, middle]` cube indices.
        order: Option<[usize; 2]>,
    },
    Identity {
        teacher_done: bool,
        /// Slots known to take part in the swap.
        swapped: Vec<usize>,
    },
}

/// Cube indices per occupied column, bottom to top, keyed by the column's x.
type Stacks = Vec<(f64, Vec<usize>)>;

fn stacks(obs: &Observation) -> Stacks {
    let mut by_x: Vec<(f64, Vec<(f64, usize)>)> = Vec::new();
    for (i, &c) in TASK_CUBES.iter().enumerate() {
        let Some(p) = locate(obs, c) else { continue };
        match by_x.iter_mut().find(|(x, _)| *x == p.x) {
            Some((_, v)) => v.push((p.z, i)),
            None => by_x.push((p.x, vec![(p.z, i)])),
        }
    }
    by_x.into_iter()
        .map(|(x, mut v)| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            let resting = v.iter().enumerate().all(|(lvl, (z, _))| *z == lvl as f64);
            (x, if resting { v.into_iter().map(|(_, i)| i).collect() } else { Vec::new() })
        })
        .collect()
}

fn spatial_stage(obs: &Observation) -> Option<(usize, Stacks)> {
    let s = stacks(obs);
    let mut sizes: Vec<usize> = s.iter().map(|(_, v)| v.len()).collect();
    sizes.sort_unstable();
    let stage = match sizes[..] {
        [3] => 0,
        [1, 2] if gripper(obs).z < 0.5 => 1,
        [1, 2] => 3,
        [1, 1, 1] => 2,
        _ => return None,
    };
    Some((stage, s))
}

/// Original order from any visible frame still holding the untouched base pair.
fn spatial_order(view: &HistoryView) -> Option<[usize; 2]> {
    view.frames().find_map(|o| {
        let (stage, s) = spatial_stage(o)?;
        if stage > 1 {
            return None;
        }
        s.iter().find(|(_, v)| v.len() >= 2).map(|(_, v)| [v[0], v[1]])
    })
}

fn identity_swapped(view: &HistoryView) -> Vec<usize> {
    let mut known: Vec<usize> = Vec::new();
    let mut add = |s: usize| {
        if !known.contains(&s) {
            known.push(s);
        }
    };
    for o in view.frames() {
        let empty = empty_slots(o);
        for &s in &empty {
            add(s);
        }
        if let Some(arm) = teacher(o) {
            if let (true, Some(s), false) = (arm.low, slot_at(arm.x), empty.is_empty()) {
                add(s);
            }
        }
    }
    known.sort_unstable();
    known
}

pub fn infer_belief(view: &HistoryView, task: TaskId) -> BeliefState {
    match task {
        TaskId::Temporal => {
            let mut cycled: Vec<usize> = Vec::new();
            for o in view.frames() {
                for (i, &c) in TASK_CUBES.iter().enumerate() {
                    if locate(o, c).is_some_and(|p| p.z >= H_LIFT) && cycled.last() != Some(&i) {
                        cycled.push(i);
                    }
                }
            }
            BeliefState::Temporal { cycled, complete: view.covers_milestones() }
        }
        TaskId::Counting => {
            let lamps: Vec<bool> = view.frames().filter_map(lamp_on).collect();
            let edges = lamps.windows(2).filter(|w| w[0] != w[1]).count();
            let on_runs = lamps.iter().enumerate().filter(|&(i, &on)| on && (i == 0 || !lamps[i - 1])).count();
            let lamp_on_now = lamp_on(&view.current).unwrap_or(false);
            BeliefState::Counting { edges, on_runs, lamp_on_now, act_permitted: on_runs >= 2 && !lamp_on_now }
        }
        TaskId::Spatial => BeliefState::Spatial {
            stage: spatial_stage(&view.current).map(|(s, _)| s),
            order: spatial_order(view),
        },
        TaskId::Identity => BeliefState::Identity {
            teacher_done: teacher(&view.current).is_some_and(|a| a.done),
            swapped: identity_swapped(view),
        },
    }
}

fn pick<T: Copy>(items: &[T], rng: &mut impl Rng) -> T {
    items[rng.gen_range(0..items.len())]
}

/// Slot now holding the cube that started in the middle, under swap `pair`.
fn identity_target(pair: [usize; 2]) -> usize {
    match pair {
        [1, o] | [o, 1] => o,
        _ => 1,
    }
}

fn slot_pos(slot: usize) -> Vec3 {
    Vec3::new(IDENTITY_SLOTS[slot], ROW_Y, 0.0)
}

/// Next skill chunk. Unknown facts are replaced by a uniform draw over the
/// alternatives still consistent with the belief.
pub fn act(belief: &BeliefState, current: &Observation, task: TaskId, rng: &mut impl Rng) -> Vec<Action> {
    let g = gripper(current);
    match (task, belief) {
        (TaskId::Temporal, BeliefState::Temporal { cycled, complete }) => {
            let next = match cycled.last() {
                Some(&c) => c + 1,
                None if *complete => 0,
                None => rng.gen_range(0..TASK_CUBES.len()),
            };
            match TASK_CUBES.get(next).and_then(|&c| locate(current, c)) {
                Some(p) => temporal_cycle_chunk(g, p, home_for(task)),
                None => vec![Action::Wait],
            }
        }
        (TaskId::Counting, BeliefState::Counting { act_permitted, .. }) => {
            let Some(cube) = locate(current, CubeColor::Orange) else { return vec![Action::Wait] };
            let staging = counting_staging(cube);
            if !g.approx_eq(&staging) {
                moves_to(g, staging)
            } else if *act_permitted {
                push_chunk()
            } else {
                vec![Action::Wait]
            }
        }
        (TaskId::Spatial, BeliefState::Spatial { stage: Some(stage), order }) => {
            let Some((_, s)) = spatial_stage(current) else { return vec![Action::Wait] };
            let on_top = |p: Vec3| p.with_z(p.z + 1.0);
            let pos = |i: usize| locate(current, TASK_CUBES[i]).expect("cube in stage layout");
            let occupied: Vec<f64> = s.iter().map(|(x, _)| *x).collect();
            let free = || PADS.iter().copied().find(|x| !occupied.contains(x)).expect("a free pad");
            let stack = |n: usize| s.iter().find(|(_, v)| v.len() == n).map(|(_, v)| v.clone()).expect("stack");
            let single = || s.iter().find(|(_, v)| v.len() == 1).map(|(_, v)| v[0]).expect("single");
            let (obj, place) = match stage {
                0 => (stack(3)[2], Vec3::new(free(), ROW_Y, 0.0)),
                1 => (stack(2)[1], Vec3::new(free(), ROW_Y, 0.0)),
                2 => {
                    let [bottom, middle] = order.unwrap_or_else(|| {
                        let b = rng.gen_range(0..3);
                        let rest: Vec<usize> = (0..3).filter(|&i| i != b).collect();
                        [b, pick(&rest, rng)]
                    });
                    (bottom, on_top(pos(middle)))
                }
                _ => {
                    let base = stack(2);
                    (single(), on_top(pos(base[1])))
                }
            };
            leg_chunk(g, pos(obj), place)
        }
        (TaskId::Identity, BeliefState::Identity { teacher_done, swapped }) => {
            if !teacher_done {
                return vec![Action::Wait];
            }
            let pairs: Vec<[usize; 2]> =
                [[0, 1], [0, 2], [1, 2]].into_iter().filter(|p| swapped.iter().all(|s| p.contains(s))).collect();
            let slot = if pairs.is_empty() { 1 } else { identity_target(pick(&pairs, rng)) };
            pick_and_lift_chunk(g, slot_pos(slot))
        }
        _ => vec![Action::Wait],
    }
}

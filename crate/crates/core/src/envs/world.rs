use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaskId;
use crate::nnet::named_rng;

pub const GRASP_RADIUS: f64 = 0.5;
pub const H_LIFT: f64 = 2.0;
pub const Z_MAX: f64 = 3.0;
pub const PLACE_EPS: f64 = 0.5;
pub const COUNTING_PUSH_DISTANCE: f64 = 2.0;

/// Spatial task pad x positions (all on `y = 2`).
pub const PADS: [f64; 3] = [1.5, 3.5, 5.5];
/// Identity task slot x positions (all on `y = 2`).
pub const IDENTITY_SLOTS: [f64; 3] = [1.0, 3.0, 5.0];
pub const ROW_Y: f64 = 2.0;
pub const BUFFER_POS: Vec3 = Vec3 { x: 6.5, y: 0.0, z: 0.0 };
pub const LAMP_POS: Vec3 = Vec3 { x: 7.0, y: 0.0, z: 0.0 };
pub const TEACHER_START: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 2.0 };
pub const TEACHER_DONE: Vec3 = Vec3 { x: 7.0, y: 3.0, z: 2.0 };
const TEACHER_CARRY_Z: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dist(&self, o: &Vec3) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }

    pub fn approx_eq(&self, o: &Vec3) -> bool {
        self.dist(o) < 1e-9
    }

    pub fn with_z(&self, z: f64) -> Vec3 {
        Vec3 { z, ..*self }
    }

    /// One frame of motion toward `target`, at most one unit along each axis.
    pub fn step_toward(&self, target: &Vec3) -> Vec3 {
        let f = |a: f64, b: f64| a + (b - a).clamp(-1.0, 1.0);
        Vec3 { x: f(self.x, target.x), y: f(self.y, target.y), z: f(self.z, target.z) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubeColor {
    Red,
    Green,
    Blue,
    Orange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Holder {
    Free,
    Agent,
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub id: usize,
    pub color: CubeColor,
    pub pos: Vec3,
    pub held_by: Holder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LampState {
    Off,
    On,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    pub pos: Vec3,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TeacherCmd {
    MoveTo(Vec3),
    Grasp(usize),
    Release,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherArm {
    pub pos: Vec3,
    pub holding: Option<usize>,
    pub cursor: usize,
    pub done: bool,
}

/// Agent command for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    MoveTo(Vec3),
    Grasp,
    Release,
    /// Vertical move to the given height.
    Lift(f64),
    /// Axis-aligned shove of at most one unit; moves any cube directly ahead.
    Push { dx: f64, dy: f64 },
    Wait,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub task: TaskId,
    pub seed: u64,
    pub t: u32,
    pub objects: Vec<Object>,
    pub initial_positions: Vec<Vec3>,
    pub gripper: Gripper,
    pub held: Option<usize>,
    pub lamp: Option<LampState>,
    /// Frames at which the lamp toggles (Counting only).
    pub lamp_schedule: Vec<u32>,
    pub teacher: Option<TeacherArm>,
    /// Identity swap as `(slot of A, slot of B)`.
    pub swap: Option<(usize, usize)>,
    /// Spatial stack, object ids bottom to top.
    pub stack_order: Option<[usize; 3]>,
    pub target: Option<Vec3>,
    /// Objects whose height crossed `H_LIFT` while held by the agent, in order.
    pub lift_log: Vec<usize>,
    /// Agent releases: `(object, position at release)`.
    pub release_log: Vec<(usize, Vec3)>,
    pub premature_motion: bool,
    pub errors: Vec<String>,
}

/// Gripper rest pose for each task.
pub fn home_for(task: TaskId) -> Vec3 {
    match task {
        TaskId::Temporal | TaskId::Counting => Vec3::new(3.5, 0.0, 3.0),
        TaskId::Spatial => Vec3::new(3.5, ROW_Y, 3.0),
        TaskId::Identity => Vec3::new(3.0, 3.0, 3.0),
    }
}

/// Deterministic initial world for `(task, seed)`.
pub fn make_env(task: TaskId, seed: u64) -> WorldState {
    let mut rng = named_rng(seed, &format!("env/{}", task.name()));
    let mut state = WorldState {
        task,
        seed,
        t: 0,
        objects: Vec::new(),
        initial_positions: Vec::new(),
        gripper: Gripper { pos: home_for(task), closed: false },
        held: None,
        lamp: None,
        lamp_schedule: Vec::new(),
        teacher: None,
        swap: None,
        stack_order: None,
        target: None,
        lift_log: Vec::new(),
        release_log: Vec::new(),
        premature_motion: false,
        errors: Vec::new(),
    };
    let cube = |id, color, pos| Object { id, color, pos, held_by: Holder::Free };
    match task {
        TaskId::Temporal => {
            let xs: Vec<f64> = (2..=12).map(|i| i as f64 * 0.5).collect();
            let chosen = loop {
                let c: Vec<f64> = xs.choose_multiple(&mut rng, 3).copied().collect();
                let ok = (0..3).all(|i| (0..3).all(|j| i == j || (c[i] - c[j]).abs() >= 1.5));
                if ok {
                    break c;
                }
            };
            let colors = [CubeColor::Red, CubeColor::Green, CubeColor::Blue];
            for (i, (&x, color)) in chosen.iter().zip(colors).enumerate() {
                let y = [1.5, 2.0, 2.5][rng.gen_range(0..3)];
                state.objects.push(cube(i, color, Vec3::new(x, y, 0.0)));
            }
        }
        TaskId::Counting => {
            let x = 1.0 + 0.5 * rng.gen_range(0..=6) as f64;
            let y = [1.5, 2.0, 2.5][rng.gen_range(0..3)];
            state.objects.push(cube(0, CubeColor::Orange, Vec3::new(x, y, 0.0)));
            state.target = Some(Vec3::new(x + COUNTING_PUSH_DISTANCE, y, 0.0));
            let mut t = 0;
            for _ in 0..4 {
                t += rng.gen_range(10..=40u32);
                state.lamp_schedule.push(t);
            }
            state.lamp = Some(LampState::Off);
        }
        TaskId::Spatial => {
            let mut order = [0usize, 1, 2];
            order.shuffle(&mut rng);
            let pad = PADS[rng.gen_range(0..3)];
            let colors = [CubeColor::Red, CubeColor::Green, CubeColor::Blue];
            let mut objs: Vec<Object> =
                (0..3).map(|i| cube(i, colors[i], Vec3::new(pad, ROW_Y, 0.0))).collect();
            for (level, &id) in order.iter().enumerate() {
                objs[id].pos.z = level as f64;
            }
            state.objects = objs;
            state.stack_order = Some(order);
        }
        TaskId::Identity => {
            for (i, &x) in IDENTITY_SLOTS.iter().enumerate() {
                state.objects.push(cube(i, CubeColor::Red, Vec3::new(x, ROW_Y, 0.0)));
            }
            let a = rng.gen_range(0..3);
            let b = (a + rng.gen_range(1..3)) % 3;
            state.swap = Some((a, b));
            state.teacher = Some(TeacherArm { pos: TEACHER_START, holding: None, cursor: 0, done: false });
        }
    }
    state.initial_positions = state.objects.iter().map(|o| o.pos).collect();
    state
}

/// The teacher arm's fixed shuffle for swap `(a, b)`: A to the buffer, B into
/// A's slot, A into B's slot, then retract.
pub fn teacher_script(a: usize, b: usize) -> Vec<TeacherCmd> {
    use TeacherCmd::*;
    let slot = |i: usize| Vec3::new(IDENTITY_SLOTS[i], ROW_Y, 0.0);
    let above = |p: Vec3| p.with_z(TEACHER_CARRY_Z);
    let (pa, pb, buf) = (slot(a), slot(b), BUFFER_POS);
    vec![
        MoveTo(above(pa)),
        MoveTo(pa),
        Grasp(a),
        MoveTo(above(pa)),
        MoveTo(above(buf)),
        MoveTo(buf),
        Release,
        MoveTo(above(buf)),
        MoveTo(above(pb)),
        MoveTo(pb),
        Grasp(b),
        MoveTo(above(pb)),
        MoveTo(above(pa)),
        MoveTo(pa),
        Release,
        MoveTo(above(pa)),
        MoveTo(above(buf)),
        MoveTo(buf),
        Grasp(a),
        MoveTo(above(buf)),
        MoveTo(above(pb)),
        MoveTo(pb),
        Release,
        MoveTo(above(pb)),
        MoveTo(TEACHER_DONE),
    ]
}

impl WorldState {
    pub fn object(&self, id: usize) -> &Object {
        &self.objects[id]
    }

    pub fn lamp_on_at(&self, t: u32) -> bool {
        self.lamp_schedule.iter().filter(|&&s| s <= t).count() % 2 == 1
    }

    /// Frame at which the lamp enters its final Off state.
    pub fn final_off_frame(&self) -> Option<u32> {
        self.lamp_schedule.last().copied()
    }

    pub fn teacher_done(&self) -> bool {
        self.teacher.as_ref().is_some_and(|t| t.done)
    }

    /// Object id originally in the middle identity slot.
    pub fn identity_target(&self) -> usize {
        1
    }

    fn stacked_on_one_pad(&self) -> bool {
        let first = self.objects[0].pos;
        let mut zs: Vec<f64> = self.objects.iter().map(|o| o.pos.z).collect();
        zs.sort_by(f64::total_cmp);
        self.held.is_none()
            && self.objects.iter().all(|o| (o.pos.x - first.x).abs() < 1e-9 && (o.pos.y - first.y).abs() < 1e-9)
            && zs == [0.0, 1.0, 2.0]
    }

    /// Task-level termination (success or irrecoverable failure) or horizon.
    pub fn is_terminal(&self) -> bool {
        if self.t >= self.task.horizon() {
            return true;
        }
        match self.task {
            TaskId::Temporal => {
                let order = [0usize, 1, 2];
                let prefix_ok = self.lift_log.len() <= 3 && self.lift_log[..] == order[..self.lift_log.len()];
                if !prefix_ok {
                    return true;
                }
                self.lift_log.len() == 3
                    && self.held.is_none()
                    && self.objects.iter().all(|o| o.pos.z == 0.0)
            }
            TaskId::Counting => {
                self.premature_motion || self.target.is_some_and(|t| self.objects[0].pos.dist(&t) <= PLACE_EPS)
            }
            TaskId::Spatial => {
                self.release_log.len() >= 4 || (!self.release_log.is_empty() && self.stacked_on_one_pad())
            }
            TaskId::Identity => !self.lift_log.is_empty(),
        }
    }

    fn advance_teacher(&mut self) {
        let Some((a, b)) = self.swap else { return };
        let script = teacher_script(a, b);
        let Some(mut arm) = self.teacher.take() else { return };
        while arm.cursor < script.len() {
            if let TeacherCmd::MoveTo(p) = script[arm.cursor] {
                if arm.pos.approx_eq(&p) {
                    arm.cursor += 1;
                    continue;
                }
            }
            break;
        }
        if arm.cursor >= script.len() {
            arm.done = true;
            self.teacher = Some(arm);
            return;
        }
        match script[arm.cursor] {
            TeacherCmd::MoveTo(p) => {
                arm.pos = arm.pos.step_toward(&p);
                if let Some(h) = arm.holding {
                    self.objects[h].pos = arm.pos;
                }
                if arm.pos.approx_eq(&p) {
                    arm.cursor += 1;
                }
            }
            TeacherCmd::Grasp(id) => {
                arm.holding = Some(id);
                self.objects[id].held_by = Holder::Teacher;
                arm.cursor += 1;
            }
            TeacherCmd::Release => {
                if let Some(h) = arm.holding.take() {
                    self.objects[h].held_by = Holder::Free;
                }
                arm.cursor += 1;
            }
        }
        arm.done = arm.cursor >= script.len();
        self.teacher = Some(arm);
    }

    fn move_gripper(&mut self, target: Vec3) {
        let before = self.held.map(|h| self.objects[h].pos.z);
        self.gripper.pos = self.gripper.pos.step_toward(&target);
        self.gripper.pos.z = self.gripper.pos.z.max(0.0);
        if let Some(h) = self.held {
            self.objects[h].pos = self.gripper.pos;
            let z = self.objects[h].pos.z;
            if before.is_some_and(|b| b < H_LIFT) && z >= H_LIFT {
                self.lift_log.push(h);
            }
        }
    }
}

/// Advances the world by one frame under `action`. Autonomous elements (lamp,
/// teacher arm) advance regardless of the action.
pub fn step(state: &WorldState, action: &Action) -> WorldState {
    let mut s = state.clone();
    match *action {
        Action::MoveTo(p) => s.move_gripper(p),
        Action::Lift(h) => {
            let p = s.gripper.pos.with_z(h);
            s.move_gripper(p);
        }
        Action::Grasp => {
            if s.held.is_some() {
                s.errors.push(format!("t{}:grasp-while-holding", s.t));
            } else {
                let g = s.gripper.pos;
                let candidate = s
                    .objects
                    .iter()
                    .filter(|o| o.held_by == Holder::Free && o.pos.dist(&g) <= GRASP_RADIUS)
                    .min_by(|a, b| a.pos.dist(&g).total_cmp(&b.pos.dist(&g)))
                    .map(|o| o.id);
                match candidate {
                    Some(id) => {
                        s.held = Some(id);
                        s.objects[id].held_by = Holder::Agent;
                        s.gripper.closed = true;
                    }
                    None => s.errors.push(format!("t{}:grasp-missed", s.t)),
                }
            }
        }
        Action::Release => match s.held.take() {
            Some(id) => {
                s.objects[id].held_by = Holder::Free;
                s.gripper.closed = false;
                s.release_log.push((id, s.objects[id].pos));
            }
            None => s.errors.push(format!("t{}:release-empty", s.t)),
        },
        Action::Push { dx, dy } => {
            let (dx, dy) = (dx.clamp(-1.0, 1.0), dy.clamp(-1.0, 1.0));
            let g = s.gripper.pos;
            let ahead = Vec3::new(g.x + dx, g.y + dy, g.z);
            for o in s.objects.iter_mut().filter(|o| o.held_by == Holder::Free) {
                if o.pos.dist(&ahead) <= 0.25 {
                    o.pos.x += dx;
                    o.pos.y += dy;
                }
            }
            s.gripper.pos = ahead;
        }
        Action::Wait => {}
    }
    s.t += 1;
    if s.task == TaskId::Counting {
        s.lamp = Some(if s.lamp_on_at(s.t) { LampState::On } else { LampState::Off });
        let moved = !s.objects[0].pos.approx_eq(&s.initial_positions[0]);
        if moved && s.final_off_frame().is_some_and(|f| s.t < f) {
            s.premature_motion = true;
        }
    }
    s.advance_teacher();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_env_is_deterministic() {
        for task in TaskId::ALL {
            for seed in 0..5 {
                let a = serde_json::to_vec(&make_env(task, seed)).unwrap();
                let b = serde_json::to_vec(&make_env(task, seed)).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn counting_schedule_shape() {
        for seed in 0..50 {
            let s = make_env(TaskId::Counting, seed);
            assert_eq!(s.lamp, Some(LampState::Off));
            assert_eq!(s.lamp_schedule.len(), 4);
            let mut prev = 0;
            for &f in &s.lamp_schedule {
                assert!((10..=40).contains(&(f - prev)));
                prev = f;
            }
        }
    }

    #[test]
    fn spatial_seeds_cover_all_permutations() {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..100 {
            seen.insert(make_env(TaskId::Spatial, seed).stack_order.unwrap());
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn wait_only_advances_clock_and_autonomous_parts() {
        let s0 = make_env(TaskId::Temporal, 3);
        let s1 = step(&s0, &Action::Wait);
        assert_eq!(s1.t, 1);
        assert_eq!(s1.objects, s0.objects);
        assert_eq!(s1.gripper, s0.gripper);

        let c0 = make_env(TaskId::Counting, 3);
        let first = c0.lamp_schedule[0];
        let mut s = c0.clone();
        while s.t < first {
            assert_eq!(s.lamp, Some(LampState::Off));
            s = step(&s, &Action::Wait);
        }
        assert_eq!(s.lamp, Some(LampState::On));
    }

    #[test]
    fn lamp_follows_schedule_regardless_of_actions() {
        let c0 = make_env(TaskId::Counting, 11);
        let actions = [Action::MoveTo(Vec3::new(0.0, 0.0, 0.0)), Action::Grasp, Action::Wait, Action::Lift(3.0)];
        let mut s = c0.clone();
        let mut edges = Vec::new();
        let mut prev = s.lamp;
        for i in 0..200 {
            s = step(&s, &actions[i % actions.len()]);
            if s.lamp != prev {
                edges.push(s.t);
            }
            prev = s.lamp;
        }
        assert_eq!(edges, c0.lamp_schedule);
    }

    #[test]
    fn grasp_rules() {
        let s0 = make_env(TaskId::Temporal, 0);
        let cube = s0.objects[0].pos;
        let mut s = s0.clone();
        for _ in 0..5 {
            s = step(&s, &Action::MoveTo(cube));
        }
        s = step(&s, &Action::Grasp);
        assert_eq!(s.held, Some(0));
        assert_eq!(s.objects[0].held_by, Holder::Agent);
        let again = step(&s, &Action::Grasp);
        assert_eq!(again.held, Some(0));
        assert!(again.errors.last().unwrap().ends_with("grasp-while-holding"));

        let far = step(&s0, &Action::Grasp);
        assert_eq!(far.held, None);
        assert!(far.errors.last().unwrap().ends_with("grasp-missed"));
    }

    #[test]
    fn teacher_swaps_the_pair_and_retracts() {
        for seed in 0..12 {
            let mut s = make_env(TaskId::Identity, seed);
            let (a, b) = s.swap.unwrap();
            while !s.teacher_done() {
                s = step(&s, &Action::Wait);
                assert!(s.t < 100);
            }
            assert!(s.objects[a].pos.approx_eq(&Vec3::new(IDENTITY_SLOTS[b], ROW_Y, 0.0)));
            assert!(s.objects[b].pos.approx_eq(&Vec3::new(IDENTITY_SLOTS[a], ROW_Y, 0.0)));
            assert!(s.teacher.unwrap().pos.approx_eq(&TEACHER_DONE));
        }
    }
}

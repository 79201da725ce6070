//! Episode container and its on-disk form: a little-endian binary file
//! (`"KCEP"` header, observations, actions, keyframes, flags) plus a JSON
//! sidecar at `<path>.json` holding the instruction and the state trace.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::oracle::{check_success, oracle_keyframes, SuccessReport};
use super::render::{Observation, IMAGE_LEN, PROPRIO_LEN};
use super::world::{Action, Vec3, WorldState};
use super::TaskId;

pub const EPISODE_MAGIC: &[u8; 4] = b"KCEP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyframeAnnotation {
    pub task: TaskId,
    /// 1-based phase index.
    pub phase: usize,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub task: TaskId,
    pub seed: u64,
    pub instruction: String,
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    /// Ground-truth state per observation; never visible to policies.
    pub states: Vec<WorldState>,
    /// Empty when the trace does not contain every milestone (failed rollouts).
    pub keyframes: Vec<KeyframeAnnotation>,
    pub stage_flags: Vec<bool>,
    pub success: bool,
}

impl Episode {
    pub fn from_trace(
        task: TaskId,
        seed: u64,
        observations: Vec<Observation>,
        actions: Vec<Action>,
        states: Vec<WorldState>,
    ) -> Self {
        let mut ep = Episode {
            task,
            seed,
            instruction: task.instruction().to_string(),
            observations,
            actions,
            states,
            keyframes: Vec::new(),
            stage_flags: Vec::new(),
            success: false,
        };
        ep.keyframes = oracle_keyframes(&ep).unwrap_or_default();
        let r = check_success(&ep);
        ep.stage_flags = (0..r.stages_total).map(|i| i < r.stages_completed).collect();
        ep.success = r.success;
        ep
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn keyframe_frames(&self) -> Vec<usize> {
        self.keyframes.iter().map(|k| k.frame).collect()
    }

    pub fn report(&self) -> SuccessReport {
        check_success(self)
    }
}

#[derive(Debug, Error)]
pub enum EpisodeIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed episode file: {reason}")]
    Format { path: PathBuf, reason: String },
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    task: TaskId,
    seed: u64,
    instruction: String,
    frames: usize,
    keyframes: Vec<KeyframeAnnotation>,
    success: bool,
    states: Vec<WorldState>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn action_record(a: &Action) -> (u8, [f64; 3]) {
    match *a {
        Action::MoveTo(p) => (0, [p.x, p.y, p.z]),
        Action::Grasp => (1, [0.0; 3]),
        Action::Release => (2, [0.0; 3]),
        Action::Lift(h) => (3, [h, 0.0, 0.0]),
        Action::Push { dx, dy } => (4, [dx, dy, 0.0]),
        Action::Wait => (5, [0.0; 3]),
    }
}

fn action_from_record(tag: u8, v: [f64; 3]) -> Option<Action> {
    Some(match tag {
        0 => Action::MoveTo(Vec3::new(v[0], v[1], v[2])),
        1 => Action::Grasp,
        2 => Action::Release,
        3 => Action::Lift(v[0]),
        4 => Action::Push { dx: v[0], dy: v[1] },
        5 => Action::Wait,
        _ => return None,
    })
}

pub fn encode_episode(ep: &Episode) -> Vec<u8> {
    let mut b = Vec::with_capacity(ep.len() * (IMAGE_LEN + PROPRIO_LEN + 1) * 8 + 64);
    b.extend_from_slice(EPISODE_MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.push(ep.task.index() as u8);
    b.extend_from_slice(&ep.seed.to_le_bytes());
    for n in [ep.observations.len(), ep.actions.len(), ep.keyframes.len(), ep.stage_flags.len()] {
        b.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for o in &ep.observations {
        b.extend_from_slice(&o.t.to_le_bytes());
        for v in o.image() {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in o.proprio {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    for a in &ep.actions {
        let (tag, args) = action_record(a);
        b.push(tag);
        for v in args {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    for k in &ep.keyframes {
        b.extend_from_slice(&(k.frame as u32).to_le_bytes());
    }
    b.extend(ep.stage_flags.iter().map(|&f| u8::from(f)));
    b.push(u8::from(ep.success));
    b
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.buf.len() < n {
            return Err("truncated".into());
        }
        let (h, t) = self.buf.split_at(n);
        self.buf = t;
        Ok(h)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn level(v: f64) -> Result<u8, String> {
    let l = (v * 255.0).round();
    if !(0.0..=255.0).contains(&l) || (l / 255.0 - v).abs() > 1e-12 {
        return Err(format!("pixel value {v} is not an 8-bit level"));
    }
    Ok(l as u8)
}

/// Binary body without the sidecar; `states` come back empty.
pub fn decode_episode(bytes: &[u8]) -> Result<Episode, String> {
    let mut c = Cursor { buf: bytes };
    if c.take(4)? != EPISODE_MAGIC {
        return Err("bad magic".into());
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let task = *TaskId::ALL.get(c.u8()? as usize).ok_or("bad task id")?;
    let seed = c.u64()?;
    let (n_obs, n_act, n_key, n_stage) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    if n_obs != n_act + 1 {
        return Err(format!("{n_obs} observations for {n_act} actions"));
    }
    let mut observations = Vec::with_capacity(n_obs);
    for _ in 0..n_obs {
        let t = c.u32()?;
        let pixels = (0..IMAGE_LEN).map(|_| c.f64().and_then(level)).collect::<Result<Vec<u8>, _>>()?;
        let mut proprio = [0.0; PROPRIO_LEN];
        for p in &mut proprio {
            *p = c.f64()?;
        }
        observations.push(Observation { t, pixels, proprio });
    }
    let mut actions = Vec::with_capacity(n_act);
    for _ in 0..n_act {
        let tag = c.u8()?;
        let args = [c.f64()?, c.f64()?, c.f64()?];
        actions.push(action_from_record(tag, args).ok_or_else(|| format!("bad action tag {tag}"))?);
    }
    let mut keyframes = Vec::with_capacity(n_key);
    for phase in 1..=n_key {
        let frame = c.u32()? as usize;
        if frame >= n_obs || keyframes.last().is_some_and(|k: &KeyframeAnnotation| k.frame >= frame) {
            return Err(format!("keyframe {frame} out of order or out of bounds"));
        }
        keyframes.push(KeyframeAnnotation { task, phase, frame });
    }
    let stage_flags = (0..n_stage).map(|_| c.u8().map(|v| v != 0)).collect::<Result<Vec<_>, _>>()?;
    let success = c.u8()? != 0;
    if !c.buf.is_empty() {
        return Err("trailing bytes".into());
    }
    Ok(Episode {
        task,
        seed,
        instruction: task.instruction().to_string(),
        observations,
        actions,
        states: Vec::new(),
        keyframes,
        stage_flags,
        success,
    })
}

pub fn write_episode(ep: &Episode, path: &Path) -> Result<(), EpisodeIoError> {
    fn io(p: &Path) -> impl FnOnce(std::io::Error) -> EpisodeIoError + '_ {
        move |source| EpisodeIoError::Io { path: p.to_path_buf(), source }
    }
    std::fs::File::create(path).and_then(|mut f| f.write_all(&encode_episode(ep))).map_err(io(path))?;
    let side = Sidecar {
        task: ep.task,
        seed: ep.seed,
        instruction: ep.instruction.clone(),
        frames: ep.len(),
        keyframes: ep.keyframes.clone(),
        success: ep.success,
        states: ep.states.clone(),
    };
    let json = serde_json::to_vec(&side).expect("sidecar serializes");
    let sp = sidecar_path(path);
    std::fs::write(&sp, json).map_err(io(&sp))
}

pub fn read_episode(path: &Path) -> Result<Episode, EpisodeIoError> {
    let format = |p: &Path, reason: String| EpisodeIoError::Format { path: p.to_path_buf(), reason };
    let bytes = std::fs::read(path).map_err(|source| EpisodeIoError::Io { path: path.to_path_buf(), source })?;
    let mut ep = decode_episode(&bytes).map_err(|r| format(path, r))?;
    let sp = sidecar_path(path);
    let raw = std::fs::read(&sp).map_err(|source| EpisodeIoError::Io { path: sp.clone(), source })?;
    let side: Sidecar = serde_json::from_slice(&raw).map_err(|e| format(&sp, e.to_string()))?;
    if side.task != ep.task || side.seed != ep.seed || side.frames != ep.len() || side.keyframes != ep.keyframes {
        return Err(format(&sp, "sidecar disagrees with episode body".into()));
    }
    if !side.states.is_empty() && side.states.len() != ep.len() {
        return Err(format(&sp, "state trace length mismatch".into()));
    }
    ep.instruction = side.instruction;
    ep.states = side.states;
    Ok(ep)
}

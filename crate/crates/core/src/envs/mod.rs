//! The four non-Markovian tabletop tasks as deterministic kinematic state
//! machines, rendered to a small synthetic image.
//!
//! Coordinates are abstract table units on a half-unit grid: `x ∈ [0, 8)`,
//! `y ∈ [0, 4)`, `z ≥ 0`. Motion is capped at one unit per axis per frame.

mod episode;
mod expert;
mod oracle;
mod render;
mod world;

pub use episode::{
    decode_episode, encode_episode, read_episode, sidecar_path, write_episode, Episode, EpisodeIoError,
    KeyframeAnnotation, EPISODE_MAGIC,
};
pub use expert::{
    counting_staging, leg_chunk, moves_to, pick_and_lift_chunk, push_chunk, run_episode, run_episode_with_oracle, scripted_expert,
    temporal_cycle_chunk, HOLD_FRAMES, LEG_FRAMES, PUSH_DELAY,
};
pub use oracle::{check_success, oracle_keyframes, oracle_keyframes_prefix, SuccessReport};
pub use render::{
    cube_rgb, render, Observation, Rgb, GRIPPER_RGB, IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE, LAMP_OFF_RGB, LAMP_ON_RGB,
    PANEL_ROWS, PROPRIO_LEN, TARGET_RGB, TEACHER_RGB,
};
pub use world::{
    home_for, make_env, step, teacher_script, Action, CubeColor, Gripper, Holder, LampState, Object, TeacherArm,
    TeacherCmd, Vec3, WorldState, BUFFER_POS, COUNTING_PUSH_DISTANCE, GRASP_RADIUS, H_LIFT, IDENTITY_SLOTS, LAMP_POS,
    PADS, PLACE_EPS, ROW_Y, TEACHER_DONE, TEACHER_START, Z_MAX,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Temporal,
    Counting,
    Spatial,
    Identity,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::Temporal, TaskId::Counting, TaskId::Spatial, TaskId::Identity];

    pub fn index(self) -> usize {
        match self {
            TaskId::Temporal => 0,
            TaskId::Counting => 1,
            TaskId::Spatial => 2,
            TaskId::Identity => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Temporal => "temporal",
            TaskId::Counting => "counting",
            TaskId::Spatial => "spatial",
            TaskId::Identity => "identity",
        }
    }

    /// Number of ground-truth keyframes (= semantic phases).
    pub fn phase_count(self) -> usize {
        match self {
            TaskId::Temporal => 4,
            TaskId::Counting => 5,
            TaskId::Spatial => 1,
            TaskId::Identity => 3,
        }
    }

    pub fn stages_total(self) -> usize {
        match self {
            TaskId::Spatial => 4,
            TaskId::Temporal => 3,
            TaskId::Counting => 2,
            TaskId::Identity => 2,
        }
    }

    pub fn horizon(self) -> u32 {
        match self {
            TaskId::Counting => 200,
            _ => 150,
        }
    }

    pub fn instruction(self) -> &'static str {
        match self {
            TaskId::Temporal => {
                "First, pick up the red cube and place it back on the table. Next, do the same for the green cube. Finally, the blue cube."
            }
            TaskId::Counting => "Wait for the signal light to flash twice, then push the cube to the target.",
            TaskId::Spatial => "Swap the position of the bottom and middle cubes.",
            TaskId::Identity => "After the cubes are swapped, pick up the cube that was originally in the middle.",
        }
    }

    /// Exact-match lookup from instruction text to task.
    pub fn from_instruction(text: &str) -> Option<TaskId> {
        TaskId::ALL.into_iter().find(|t| t.instruction() == text)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("unknown task id `{0}`")]
    UnknownTask(String),
    #[error("episode has no state trace")]
    MissingTrace,
    #[error("state trace lacks a milestone: {0}")]
    IncompleteTrace(String),
    #[error("expert failed on {task} seed {seed}: {reason}")]
    ExpertFailure { task: TaskId, seed: u64, reason: String },
}

impl FromStr for TaskId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "temporal" => Ok(TaskId::Temporal),
            "counting" => Ok(TaskId::Counting),
            "spatial" => Ok(TaskId::Spatial),
            "identity" => Ok(TaskId::Identity),
            other => Err(EnvError::UnknownTask(other.to_string())),
        }
    }
}

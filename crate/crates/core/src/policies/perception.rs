//! Pixel-level readout of a single rendered frame. Nothing here sees world state.

use crate::envs::{
    cube_rgb, CubeColor, Observation, Rgb, Vec3, IDENTITY_SLOTS, IMAGE_SIDE, LAMP_ON_RGB, LAMP_OFF_RGB, PANEL_ROWS,
    TEACHER_RGB,
};

const CUBE_COLORS: [CubeColor; 4] = [CubeColor::Red, CubeColor::Green, CubeColor::Blue, CubeColor::Orange];

fn is_cube(rgb: Rgb) -> bool {
    CUBE_COLORS.iter().any(|&c| cube_rgb(c) == rgb)
}

fn side_pixels(obs: &Observation, rgb: Rgb) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in PANEL_ROWS..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            if obs.rgb(r, c) == rgb {
                out.push((r, c));
            }
        }
    }
    out
}

/// Gripper pose from proprioception.
pub fn gripper(obs: &Observation) -> Vec3 {
    Vec3::new(obs.proprio[0], obs.proprio[1], obs.proprio[2])
}

pub fn gripper_closed(obs: &Observation) -> bool {
    obs.proprio[3] > 0.5
}

/// Position of the one cube of colour `color`: `x` and `z` from the side
/// view, `y` from the top-view block around column `2x`. `None` when the cube
/// is not visible in the side view.
pub fn locate(obs: &Observation, color: CubeColor) -> Option<Vec3> {
    let px = side_pixels(obs, cube_rgb(color));
    let (cmin, cmax) = (px.iter().map(|p| p.1).min()?, px.iter().map(|p| p.1).max()?);
    let rmax = px.iter().map(|p| p.0).max()?;
    let col = (cmin + cmax) / 2;
    let x = col as f64 / 2.0;
    let z = (IMAGE_SIDE - 1 - rmax) as f64 / 2.0;
    let rows: Vec<usize> = (0..PANEL_ROWS)
        .filter(|&r| (col.saturating_sub(1)..=(col + 1).min(IMAGE_SIDE - 1)).any(|c| is_cube(obs.rgb(r, c))))
        .collect();
    let y = match (rows.first(), rows.last()) {
        (Some(&a), Some(&b)) => ((a + b) / 2) as f64 / 2.0,
        _ => return None,
    };
    Some(Vec3::new(x, y, z))
}

/// Lamp patch state, `None` when the frame has no lamp.
pub fn lamp_on(obs: &Observation) -> Option<bool> {
    match obs.rgb(0, IMAGE_SIDE - 2) {
        c if c == LAMP_ON_RGB => Some(true),
        c if c == LAMP_OFF_RGB => Some(false),
        _ => None,
    }
}

fn slot_col(slot: usize) -> usize {
    (2.0 * IDENTITY_SLOTS[slot]) as usize
}

/// A table slot is occupied when a cube colour fills the two side-view rows
/// only a resting cube reaches; a cube raised by one unit already clears them.
pub fn slot_occupied(obs: &Observation, slot: usize) -> bool {
    let c = slot_col(slot);
    (IMAGE_SIDE - 2..IMAGE_SIDE).any(|r| (c - 1..=c + 1).any(|cc| is_cube(obs.rgb(r, cc))))
}

pub fn empty_slots(obs: &Observation) -> Vec<usize> {
    (0..IDENTITY_SLOTS.len()).filter(|&s| !slot_occupied(obs, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherSighting {
    pub x: f64,
    /// Arm at table height, i.e. grasping or releasing.
    pub low: bool,
    /// Arm parked at its final pose.
    pub done: bool,
}

pub fn teacher(obs: &Observation) -> Option<TeacherSighting> {
    let cmin = (0..PANEL_ROWS)
        .flat_map(|r| (0..IMAGE_SIDE).map(move |c| (r, c)))
        .filter(|&(r, c)| obs.rgb(r, c) == TEACHER_RGB)
        .map(|(_, c)| c)
        .min()?;
    let low = (IMAGE_SIDE - 5..IMAGE_SIDE - 3).any(|r| (0..IMAGE_SIDE).any(|c| obs.rgb(r, c) == TEACHER_RGB));
    let done = obs.rgb(PANEL_ROWS - 2, IMAGE_SIDE - 2) == TEACHER_RGB;
    Some(TeacherSighting { x: cmin as f64 / 2.0, low, done })
}

/// Slot index under the arm, if it is over one.
pub fn slot_at(x: f64) -> Option<usize> {
    IDENTITY_SLOTS.iter().position(|&s| s == x)
}

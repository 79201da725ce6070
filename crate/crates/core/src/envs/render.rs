//! Two-panel 16×16 raster. Rows `0..8` are a top view (`x` → column,
//! `y` → row); rows `8..16` are a side view (`x` → column, `z` → height) so
//! stack order and lift height are visible. Both use `floor(2·coord)`.

use super::world::{CubeColor, WorldState};
use super::TaskId;

pub const IMAGE_SIDE: usize = 16;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE * IMAGE_CHANNELS;
pub const PANEL_ROWS: usize = 8;
pub const PROPRIO_LEN: usize = 4;

pub type Rgb = [u8; 3];

pub const GRIPPER_RGB: Rgb = [255, 255, 255];
pub const TEACHER_RGB: Rgb = [200, 0, 200];
pub const LAMP_ON_RGB: Rgb = [255, 230, 0];
pub const LAMP_OFF_RGB: Rgb = [70, 70, 70];
pub const TARGET_RGB: Rgb = [0, 90, 90];

pub fn cube_rgb(color: CubeColor) -> Rgb {
    match color {
        CubeColor::Red => [230, 40, 40],
        CubeColor::Green => [40, 200, 60],
        CubeColor::Blue => [50, 80, 230],
        CubeColor::Orange => [240, 150, 30],
    }
}

/// One frame as seen by the detector and the policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: u32,
    /// Channel-major `3×16×16` intensity levels; the real pixel value is `level / 255`.
    pub pixels: Vec<u8>,
    /// Gripper `x, y, z` and closed flag (`0` or `1`).
    pub proprio: [f64; PROPRIO_LEN],
}

impl Observation {
    pub fn rgb(&self, row: usize, col: usize) -> Rgb {
        let i = row * IMAGE_SIDE + col;
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        [self.pixels[i], self.pixels[plane + i], self.pixels[2 * plane + i]]
    }

    /// Pixel grid as reals in `[0, 1]`.
    pub fn image(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| f64::from(v) / 255.0).collect()
    }
}

struct Canvas {
    pixels: Vec<u8>,
}

impl Canvas {
    fn new() -> Self {
        Self { pixels: vec![0; IMAGE_LEN] }
    }

    /// Fills the inclusive block, clipped to `rows` (a panel's row range).
    fn block(&mut self, r0: i64, r1: i64, c0: i64, c1: i64, rows: (i64, i64), rgb: Rgb) {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        for r in r0.max(rows.0)..=r1.min(rows.1) {
            for c in c0.max(0)..=c1.min(IMAGE_SIDE as i64 - 1) {
                let i = r as usize * IMAGE_SIDE + c as usize;
                for (ch, &v) in rgb.iter().enumerate() {
                    self.pixels[ch * plane + i] = v;
                }
            }
        }
    }
}

fn q(v: f64) -> i64 {
    (2.0 * v).floor() as i64
}

const TOP: (i64, i64) = (0, PANEL_ROWS as i64 - 1);
const SIDE: (i64, i64) = (PANEL_ROWS as i64, IMAGE_SIDE as i64 - 1);

/// Bottom row of a unit-height body resting at height `z` in the side view.
fn side_bottom(z: f64) -> i64 {
    IMAGE_SIDE as i64 - 1 - q(z)
}

pub fn render(state: &WorldState) -> Observation {
    let mut cv = Canvas::new();

    if let Some(target) = state.target {
        cv.block(q(target.y) - 1, q(target.y) + 1, q(target.x) - 1, q(target.x) + 1, TOP, TARGET_RGB);
    }

    let mut top: Vec<_> = state.objects.iter().collect();
    top.sort_by(|a, b| a.pos.z.total_cmp(&b.pos.z));
    for o in &top {
        let (r, c) = (q(o.pos.y), q(o.pos.x));
        cv.block(r - 1, r + 1, c - 1, c + 1, TOP, cube_rgb(o.color));
    }

    let mut side: Vec<_> = state.objects.iter().collect();
    side.sort_by(|a, b| (-a.pos.y, a.pos.z).partial_cmp(&(-b.pos.y, b.pos.z)).expect("finite positions"));
    for o in &side {
        let (b, c) = (side_bottom(o.pos.z), q(o.pos.x));
        cv.block(b - 2, b, c - 1, c + 1, SIDE, cube_rgb(o.color));
    }

    let mut arm = |pos: super::Vec3, rgb: Rgb| {
        let (r, c) = (q(pos.y), q(pos.x));
        cv.block(r, r + 1, c, c + 1, TOP, rgb);
        let b = side_bottom(pos.z);
        cv.block(b - 4, b - 3, c, c + 1, SIDE, rgb);
    };
    if let Some(teacher) = &state.teacher {
        arm(teacher.pos, TEACHER_RGB);
    }
    arm(state.gripper.pos, GRIPPER_RGB);

    if state.task == TaskId::Counting {
        let lamp = if state.lamp_on_at(state.t) { LAMP_ON_RGB } else { LAMP_OFF_RGB };
        let (r, c) = (q(super::LAMP_POS.y), q(super::LAMP_POS.x));
        cv.block(r, r + 1, c, c + 1, TOP, lamp);
    }

    let g = state.gripper.pos;
    Observation {
        t: state.t,
        pixels: cv.pixels,
        proprio: [g.x, g.y, g.z, if state.gripper.closed { 1.0 } else { 0.0 }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, step, Action, LampState};

    #[test]
    fn pixels_in_unit_range_and_lamp_locality() {
        let s0 = make_env(TaskId::Counting, 4);
        let mut s = s0.clone();
        while s.lamp != Some(LampState::On) {
            s = step(&s, &Action::Wait);
        }
        let (off, on) = (render(&s0), render(&s));
        assert!(on.image().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(off.rgb(0, 14), LAMP_OFF_RGB);
        assert_eq!(on.rgb(0, 14), LAMP_ON_RGB);
        for r in 0..IMAGE_SIDE {
            for c in 0..IMAGE_SIDE {
                if !(r <= 1 && c >= 14) {
                    assert_eq!(off.rgb(r, c), on.rgb(r, c), "({r},{c})");
                }
            }
        }
    }

    #[test]
    fn identical_cubes_render_identical_patches() {
        let mut s = make_env(TaskId::Identity, 0);
        let (a, b) = (s.objects[0].pos, s.objects[2].pos);
        s.objects[0].pos = b;
        s.objects[2].pos = a;
        assert_eq!(render(&s).pixels, render(&make_env(TaskId::Identity, 0)).pixels);
    }

    #[test]
    fn stack_visible_in_side_view() {
        let s = make_env(TaskId::Spatial, 1);
        let obs = render(&s);
        let order = s.stack_order.unwrap();
        let col = q(s.objects[0].pos.x) as usize;
        assert_eq!(obs.rgb(15, col), cube_rgb(s.objects[order[0]].color));
        assert_eq!(obs.rgb(12, col), cube_rgb(s.objects[order[1]].color));
        assert_eq!(obs.rgb(10, col), cube_rgb(s.objects[order[2]].color));
    }
}

//! 2-D Amanatides-Woo traversal of the NDC list grid.
//!
//! The chord runs from `a0` to `a1` in NDC and is parameterized by `s` in `[0, 1]`.
//! Cells are `2 / width` by `2 / height`; cell `(0, 0)` touches NDC `(-1, -1)`.

/// One list cell crossed by the chord.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellVisit {
    pub cx: u32,
    pub cy: u32,
    pub s_in: f64,
    pub s_out: f64,
    /// NDC z at `s_in` / `s_out`.
    pub z_in: f64,
    pub z_out: f64,
}

/// Cell coordinate along one axis, resolving exact boundaries toward the direction of travel.
#[inline]
pub fn directed_cell(g: f64, d: f64, n: u32) -> u32 {
    let c = if d < 0.0 { g.ceil() - 1.0 } else { g.floor() };
    c.clamp(0.0, (n - 1) as f64) as u32
}

#[derive(Debug, Clone)]
pub struct Dda {
    a0z: f64,
    dz: f64,
    cx: i64,
    cy: i64,
    step_x: i64,
    step_y: i64,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    s: f64,
    width: u32,
    height: u32,
    done: bool,
}

impl Dda {
    /// Starts a traversal at chord parameter `s_start`.
    pub fn new(a0: [f64; 3], a1: [f64; 3], width: u32, height: u32, s_start: f64) -> Self {
        let axis = |p0: f64, p1: f64, n: u32| {
            // Chord in grid units: g(s) = g0 + s * dg.
            let g0 = (p0 + 1.0) * n as f64 * 0.5;
            let dg = (p1 - p0) * n as f64 * 0.5;
            let g = g0 + s_start * dg;
            let c = directed_cell(g, dg, n);
            if dg > 0.0 {
                (c, 1, s_start + ((c + 1) as f64 - g) / dg, 1.0 / dg)
            } else if dg < 0.0 {
                (c, -1, s_start + (g - c as f64) / -dg, -1.0 / dg)
            } else {
                (c, 0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (cx, step_x, t_max_x, t_delta_x) = axis(a0[0], a1[0], width);
        let (cy, step_y, t_max_y, t_delta_y) = axis(a0[1], a1[1], height);
        Self {
            a0z: a0[2],
            dz: a1[2] - a0[2],
            cx: cx as i64,
            cy: cy as i64,
            step_x,
            step_y,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            s: s_start,
            width,
            height,
            done: s_start >= 1.0,
        }
    }

    #[inline]
    fn z(&self, s: f64) -> f64 {
        self.a0z + s * self.dz
    }
}

impl Iterator for Dda {
    type Item = CellVisit;

    fn next(&mut self) -> Option<CellVisit> {
        if self.done {
            return None;
        }
        let s_in = self.s;
        let x_first = self.t_max_x <= self.t_max_y;
        let s_out = if x_first { self.t_max_x } else { self.t_max_y }.min(1.0).max(s_in);
        let visit = CellVisit {
            cx: self.cx as u32,
            cy: self.cy as u32,
            s_in,
            s_out,
            z_in: self.z(s_in),
            z_out: self.z(s_out),
        };
        if s_out >= 1.0 {
            self.done = true;
        } else {
            if x_first {
                self.cx += self.step_x;
                self.t_max_x += self.t_delta_x;
            } else {
                self.cy += self.step_y;
                self.t_max_y += self.t_delta_y;
            }
            self.s = s_out;
            if self.cx < 0 || self.cy < 0 || self.cx >= self.width as i64 || self.cy >= self.height as i64 {
                self.done = true;
            }
        }
        Some(visit)
    }
}

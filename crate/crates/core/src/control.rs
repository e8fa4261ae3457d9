//! Frame-rate control for preview rendering.

/// How frame time responds to the controlled factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Action {
    /// Frame time grows with `d_i` (more pixels); slow frames lower `d_i`.
    #[default]
    Reverse,
    /// Frame time shrinks as `d_i` grows; slow frames raise `d_i`.
    Direct,
}

/// PI controller driving the image-space factor `d_i` toward a target frame rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiController {
    pub kp: f64,
    pub ki: f64,
    pub integral: f64,
    pub bounds: (f64, f64),
    pub d_i: f64,
    pub action: Action,
}

impl Default for PiController {
    fn default() -> Self {
        Self {
            kp: 3e-3,
            ki: 1e-5,
            integral: 0.0,
            bounds: (0.1, 1.0),
            d_i: 1.0,
            action: Action::Reverse,
        }
    }
}

impl PiController {
    pub fn new(kp: f64, ki: f64, bounds: (f64, f64), d_i: f64) -> Self {
        Self { kp, ki, integral: 0.0, bounds, d_i: d_i.clamp(bounds.0, bounds.1), action: Action::Reverse }
    }

    pub fn with_action(mut self, action: Action) -> Self {
        self.action = action;
        self
    }

    /// Largest magnitude the integral may reach (anti-windup).
    pub fn integral_limit(&self) -> f64 {
        if self.ki > 0.0 {
            (self.bounds.1 - self.bounds.0) / self.ki
        } else {
            0.0
        }
    }

    /// Feeds one measured frame time and returns the new `d_i`.
    ///
    /// The error is `1000 / target_fps - measured_ms`. Under [`Action::Reverse`]
    /// frames slower than the target lower `d_i`.
    pub fn update(&mut self, measured_ms: f64, target_fps: f64) -> f64 {
        let err = 1000.0 / target_fps - measured_ms;
        let lim = self.integral_limit();
        self.integral = (self.integral + err).clamp(-lim, lim);
        let sign = match self.action {
            Action::Reverse => 1.0,
            Action::Direct => -1.0,
        };
        let step = sign * (self.kp * err + self.ki * self.integral);
        self.d_i = (self.d_i + step).clamp(self.bounds.0, self.bounds.1);
        self.d_i
    }
}

/// Functional form of [`PiController::update`].
pub fn pi_update(ctrl: &mut PiController, measured_ms: f64, target_fps: f64) -> f64 {
    ctrl.update(measured_ms, target_fps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameMode {
    Full,
    Preview,
}

impl FrameMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameMode::Full => "full",
            FrameMode::Preview => "preview",
        }
    }
}

/// Switches to preview after `patience` consecutive frames below the target
/// rate, and back to full quality when a new VDI arrives.
#[derive(Debug, Clone, Copy)]
pub struct ModeSelector {
    pub mode: FrameMode,
    pub patience: u32,
    slow: u32,
}

impl Default for ModeSelector {
    fn default() -> Self {
        Self { mode: FrameMode::Full, patience: 5, slow: 0 }
    }
}

impl ModeSelector {
    pub fn on_frame(&mut self, frame_ms: f64, target_fps: f64) -> FrameMode {
        if self.mode == FrameMode::Full {
            if frame_ms > 1000.0 / target_fps {
                self.slow += 1;
                if self.slow >= self.patience {
                    self.mode = FrameMode::Preview;
                    self.slow = 0;
                }
            } else {
                self.slow = 0;
            }
        }
        self.mode
    }

    pub fn on_new_vdi(&mut self) -> FrameMode {
        self.mode = FrameMode::Full;
        self.slow = 0;
        self.mode
    }
}

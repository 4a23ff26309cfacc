//! Moving-shape scenes with closed-form kinematics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Disc,
}

impl ShapeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Square => "square",
            ShapeKind::Disc => "disc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "square" => Some(ShapeKind::Square),
            "disc" => Some(ShapeKind::Disc),
            _ => None,
        }
    }
}

/// Motion class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Motion {
    /// Straight-line motion reflected elastically at the canvas edges.
    Bounce,
    /// Straight-line motion wrapping around the canvas.
    Drift,
    /// Circular orbit about the canvas centre.
    Rotate,
}

impl Motion {
    pub const ALL: [Motion; 3] = [Motion::Bounce, Motion::Drift, Motion::Rotate];

    pub fn as_str(self) -> &'static str {
        match self {
            Motion::Bounce => "bounce",
            Motion::Drift => "drift",
            Motion::Rotate => "rotate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Motion::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn class_id(self) -> usize {
        Motion::ALL.iter().position(|&m| m == self).unwrap()
    }

    /// Default speed range: pixels per frame (radians per frame for `Rotate`).
    pub fn default_speed(self) -> (f64, f64) {
        match self {
            Motion::Bounce => (1.5, 3.0),
            Motion::Drift => (0.25, 0.75),
            Motion::Rotate => (0.3, 0.6),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSceneConfig {
    /// Square canvas side in pixels.
    pub canvas: usize,
    pub channels: usize,
    pub shapes: usize,
    pub kind: ShapeKind,
    /// Side (square) or diameter (disc) in pixels.
    pub shape_size: f64,
    pub speed: (f64, f64),
    pub motion: Motion,
    pub seed: u64,
}

impl SynthSceneConfig {
    pub fn new(canvas: usize, motion: Motion, seed: u64) -> Self {
        SynthSceneConfig {
            canvas,
            channels: 1,
            shapes: 1,
            kind: ShapeKind::Square,
            shape_size: (canvas as f64 / 4.0).max(1.0),
            speed: motion.default_speed(),
            motion,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.canvas as f64;
        if self.canvas == 0 || self.channels == 0 || self.shapes == 0 {
            return Err(Error::invalid("scene needs a canvas, channels and at least one shape"));
        }
        if !(self.shape_size > 0.0 && self.shape_size < c) {
            return Err(Error::invalid(format!(
                "shape size {} does not fit a {} pixel canvas",
                self.shape_size, self.canvas
            )));
        }
        let (lo, hi) = self.speed;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(format!("bad speed range {:?}", self.speed)));
        }
        Ok(())
    }
}

/// Initial state of one shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeState {
    /// Top-left corner (`Bounce`, `Drift`) or orbit phase in `x` (`Rotate`).
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
    /// Colour per channel is `+1`; other pixels are `-1`.
    pub radius: f64,
}

/// Sample initial states from `cfg.seed`.
pub fn scene_states(cfg: &SynthSceneConfig) -> Result<Vec<ShapeState>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = cfg.canvas as f64 - cfg.shape_size;
    let (lo, hi) = cfg.speed;
    (0..cfg.shapes)
        .map(|_| {
            let speed = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Ok(match cfg.motion {
                Motion::Bounce | Motion::Drift => ShapeState {
                    x0: rng.random_range(0.0..span),
                    y0: rng.random_range(0.0..span),
                    vx: speed * angle.cos(),
                    vy: speed * angle.sin(),
                    radius: 0.0,
                },
                Motion::Rotate => {
                    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let max_r = (span / 2.0).max(0.0);
                    ShapeState {
                        x0: angle,
                        y0: 0.0,
                        vx: dir * speed,
                        vy: 0.0,
                        radius: rng.random_range(0.5 * max_r..=max_r),
                    }
                }
            })
        })
        .collect()
}

/// `p` reflected into `[0, span]` (triangle wave of period `2 span`).
pub fn reflect(p: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let m = p.rem_euclid(2.0 * span);
    if m <= span {
        m
    } else {
        2.0 * span - m
    }
}

/// Top-left corner of a shape at frame `t`.
pub fn position(cfg: &SynthSceneConfig, s: &ShapeState, t: f64) -> (f64, f64) {
    let c = cfg.canvas as f64;
    let span = c - cfg.shape_size;
    match cfg.motion {
        Motion::Bounce => (reflect(s.x0 + s.vx * t, span), reflect(s.y0 + s.vy * t, span)),
        Motion::Drift => ((s.x0 + s.vx * t).rem_euclid(c), (s.y0 + s.vy * t).rem_euclid(c)),
        Motion::Rotate => {
            let phase = s.x0 + s.vx * t;
            let centre = span / 2.0;
            (centre + s.radius * phase.cos(), centre + s.radius * phase.sin())
        }
    }
}

/// `[T, canvas, canvas, channels]` clip in `[-1, 1]`: shapes at `+1` on a
/// `-1` background. Drifting shapes wrap around the edges.
pub fn synth_video(cfg: &SynthSceneConfig, length: usize) -> Result<Tensor> {
    if length == 0 {
        return Err(Error::invalid("video length must be >= 1"));
    }
    let states = scene_states(cfg)?;
    let n = cfg.canvas;
    let c = cfg.channels;
    let size = cfg.shape_size;
    let mut out = Tensor::full(&[length, n, n, c], -1.0);
    let data = out.data_mut();
    for t in 0..length {
        for s in &states {
            let (x0, y0) = position(cfg, s, t as f64);
            for i in 0..n {
                for j in 0..n {
                    let (py, px) = (i as f64 + 0.5, j as f64 + 0.5);
                    let (mut dx, mut dy) = (px - x0, py - y0);
                    if cfg.motion == Motion::Drift {
                        dx = dx.rem_euclid(n as f64);
                        dy = dy.rem_euclid(n as f64);
                    }
                    let inside = match cfg.kind {
                        ShapeKind::Square => (0.0..size).contains(&dx) && (0.0..size).contains(&dy),
                        ShapeKind::Disc => {
                            let r = size / 2.0;
                            (dx - r).powi(2) + (dy - r).powi(2) < r * r
                        }
                    };
                    if inside {
                        let at = ((t * n + i) * n + j) * c;
                        data[at..at + c].iter_mut().for_each(|v| *v = 1.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_velocity_is_static() {
        let mut cfg = SynthSceneConfig::new(16, Motion::Bounce, 3);
        cfg.speed = (0.0, 0.0);
        let v = synth_video(&cfg, 5).unwrap();
        let f0 = v.slice(&[0, 0, 0, 0], &[1, 16, 16, 1]).unwrap();
        for t in 1..5 {
            assert_eq!(v.slice(&[t, 0, 0, 0], &[1, 16, 16, 1]).unwrap(), f0);
        }
    }

    #[test]
    fn reflect_triangle_wave() {
        assert_eq!(reflect(3.0, 10.0), 3.0);
        assert_eq!(reflect(12.0, 10.0), 8.0);
        assert_eq!(reflect(-2.0, 10.0), 2.0);
        assert_eq!(reflect(21.0, 10.0), 1.0);
    }
}

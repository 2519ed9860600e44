use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A surface patch at constant range. Coordinates are in beam-grid pixels
/// with pixel `(row, col)` centred at `(x, y) = (col + 0.5, row + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Disk {
        cx: f64,
        cy: f64,
        radius: f64,
        range: f64,
    },
    /// Axis-aligned, covers `x0 <= x < x1`, `y0 <= y < y1`.
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        range: f64,
    },
    /// Covers points with `(x - px) * cos(angle) + (y - py) * sin(angle) >= 0`.
    HalfPlane {
        px: f64,
        py: f64,
        angle: f64,
        range: f64,
    },
}

impl Primitive {
    pub fn range(&self) -> f64 {
        match *self {
            Primitive::Disk { range, .. } | Primitive::Rect { range, .. } | Primitive::HalfPlane { range, .. } => {
                range
            }
        }
    }

    /// Half-plane of everything left of the vertical line `x = boundary`.
    pub fn left_of(boundary: f64, range: f64) -> Self {
        Primitive::HalfPlane {
            px: boundary,
            py: 0.0,
            angle: std::f64::consts::PI,
            range,
        }
    }

    pub fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            Primitive::Disk { cx, cy, radius, .. } => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= radius * radius
            }
            Primitive::Rect { x0, y0, x1, y1, .. } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Primitive::HalfPlane { px, py, angle, .. } => {
                (x - px) * angle.cos() + (y - py) * angle.sin() >= 0.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub background_range: f64,
}

impl Scene {
    pub fn background(range: f64) -> Self {
        Self {
            primitives: Vec::new(),
            background_range: range,
        }
    }

    pub fn validate(&self, max_range: f64) -> Result<()> {
        let ok = |r: f64| r > 0.0 && r <= max_range;
        if !ok(self.background_range) {
            return Err(Error::param(format!(
                "background range {} outside (0, {max_range}]",
                self.background_range
            )));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if !ok(p.range()) {
                return Err(Error::param(format!(
                    "primitive {i} range {} outside (0, {max_range}]",
                    p.range()
                )));
            }
        }
        Ok(())
    }

    /// Range seen by the beam through pixel `(row, col)`: the nearest covering
    /// primitive, else the background.
    pub fn range_at(&self, row: usize, col: usize) -> f64 {
        let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
        self.primitives
            .iter()
            .filter(|p| p.covers(x, y))
            .map(Primitive::range)
            .fold(self.background_range, f64::min)
    }
}

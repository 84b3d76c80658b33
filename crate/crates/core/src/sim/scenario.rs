use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

impl Obstacle {
    pub fn inflated(&self, margin: f64) -> Obstacle {
        Obstacle {
            center: self.center,
            half_extents: [self.half_extents[0] + margin, self.half_extents[1] + margin],
        }
    }

    pub fn min(&self) -> [f64; 2] {
        [self.center[0] - self.half_extents[0], self.center[1] - self.half_extents[1]]
    }

    pub fn max(&self) -> [f64; 2] {
        [self.center[0] + self.half_extents[0], self.center[1] + self.half_extents[1]]
    }

    /// Strict interior test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (lo, hi) = (self.min(), self.max());
        p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1]
    }

    /// Entry parameter `t ∈ [0, 1]` at which the segment `a → b` enters the
    /// open rectangle, and the axis of the face it crosses.
    pub fn segment_entry(&self, a: [f64; 2], b: [f64; 2]) -> Option<(f64, usize)> {
        let (lo, hi) = (self.min(), self.max());
        let mut enter = f64::NEG_INFINITY;
        let mut exit = f64::INFINITY;
        let mut axis = 0;
        for k in 0..2 {
            let d = b[k] - a[k];
            if d == 0.0 {
                if !(a[k] > lo[k] && a[k] < hi[k]) {
                    return None;
                }
                continue;
            }
            let (t1, t2) = ((lo[k] - a[k]) / d, (hi[k] - a[k]) / d);
            let (tn, tf) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            if tn > enter {
                enter = tn;
                axis = k;
            }
            exit = exit.min(tf);
        }
        if enter < exit && exit > 0.0 && enter <= 1.0 {
            Some((enter.max(0.0), axis))
        } else {
            None
        }
    }

    /// Whether the segment passes through the open interior.
    pub fn segment_hits(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        match self.segment_entry(a, b) {
            Some((t, _)) => t < 1.0 || self.contains(b),
            None => false,
        }
    }

    /// Nearest point on the boundary to an interior point.
    pub fn project_out(&self, p: [f64; 2]) -> [f64; 2] {
        let (lo, hi) = (self.min(), self.max());
        let cands = [
            (p[0] - lo[0], 0, lo[0]),
            (hi[0] - p[0], 0, hi[0]),
            (p[1] - lo[1], 1, lo[1]),
            (hi[1] - p[1], 1, hi[1]),
        ];
        let (_, axis, v) = cands
            .iter()
            .copied()
            .fold((f64::INFINITY, 0, 0.0), |best, c| if c.0 < best.0 { c } else { best });
        let mut q = p;
        q[axis] = v;
        q
    }
}

/// Start pose, target and obstacles of a task world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub start: [f64; 2],
    /// Initial heading; absent means facing the target.
    #[serde(default)]
    pub start_yaw: Option<f64>,
    pub target: [f64; 2],
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl Default for Scenario {
    /// Robot at the origin, a 1.2 m × 1.8 m obstacle at (3, 0), target at (6, 0).
    fn default() -> Self {
        Self {
            start: [0.0, 0.0],
            start_yaw: None,
            target: [6.0, 0.0],
            obstacles: vec![Obstacle {
                center: [3.0, 0.0],
                half_extents: [0.6, 0.9],
            }],
        }
    }
}

impl Scenario {
    pub fn without_obstacles(start: [f64; 2], target: [f64; 2]) -> Self {
        Self {
            start,
            start_yaw: None,
            target,
            obstacles: Vec::new(),
        }
    }

    pub fn validate(&self, robot_radius: f64) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.start) || !finite(&self.target) || self.start_yaw.is_some_and(|y| !y.is_finite()) {
            return Err(Error::Scenario("non-finite start or target".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !finite(&o.center) || !(o.half_extents[0] > 0.0 && o.half_extents[1] > 0.0) {
                return Err(Error::Scenario(format!("obstacle {i} needs finite center and positive half-extents")));
            }
            if o.inflated(robot_radius).contains(self.start) {
                return Err(Error::Scenario(format!("start position lies inside obstacle {i}")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

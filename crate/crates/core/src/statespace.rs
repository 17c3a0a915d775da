//! Uniform quantization of `(d, e, v, ω)` into a packed discrete label and
//! the Cartesian acceleration grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Action, MotionLimits};

/// A uniformly partitioned interval `[lo, hi]` split into `bins` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Axis {
    pub const fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, bins }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    /// Bin index with clamping: values at or beyond `hi` fall in the last bin.
    #[inline]
    pub fn index(&self, value: f64) -> usize {
        let t = (value - self.lo) / self.width();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.bins - 1)
        }
    }

    pub fn center(&self, index: usize) -> f64 {
        self.lo + (index as f64 + 0.5) * self.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub distance: Axis,
    pub heading: Axis,
    pub speed: Axis,
    pub yaw_rate: Axis,
}

impl Default for BinningConfig {
    /// 1 m distance bins up to ⌈35.36⌉ m, 24 heading bins, 4 × 5 velocity bins.
    fn default() -> Self {
        let lim = MotionLimits::default();
        Self::from_limits(36, 36.0, 24, 4, 5, &lim)
    }
}

impl BinningConfig {
    pub fn from_limits(
        n_d: usize,
        d_max: f64,
        n_theta: usize,
        n_v: usize,
        n_omega: usize,
        limits: &MotionLimits,
    ) -> Self {
        Self {
            distance: Axis::new(0.0, d_max, n_d),
            heading: Axis::new(-PI, PI, n_theta),
            speed: Axis::new(limits.v_min, limits.v_max, n_v),
            yaw_rate: Axis::new(limits.omega_min, limits.omega_max, n_omega),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.distance.bins * self.heading.bins * self.speed.bins * self.yaw_rate.bins
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        for (name, axis) in self.axes() {
            if axis.bins == 0 {
                problems.push(format!("{name} bin count must be >= 1"));
            }
            if !(axis.lo.is_finite() && axis.hi.is_finite() && axis.lo < axis.hi) {
                problems.push(format!("{name} range must be finite with lo < hi"));
            }
        }
    }

    fn axes(&self) -> [(&'static str, Axis); 4] {
        [
            ("distance", self.distance),
            ("heading", self.heading),
            ("speed", self.speed),
            ("yaw_rate", self.yaw_rate),
        ]
    }

    #[inline]
    pub fn quantize(&self, d: f64, e: f64, v: f64, omega: f64) -> DiscreteState {
        let d = d.clamp(0.0, self.distance.hi);
        let mut ds = DiscreteState {
            i_d: self.distance.index(d),
            i_e: self.heading.index(e),
            i_v: self.speed.index(v),
            i_omega: self.yaw_rate.index(omega),
            packed: 0,
        };
        ds.packed = self.pack_indices(ds.i_d, ds.i_e, ds.i_v, ds.i_omega);
        ds
    }

    #[inline]
    fn pack_indices(&self, i_d: usize, i_e: usize, i_v: usize, i_omega: usize) -> usize {
        ((i_d * self.heading.bins + i_e) * self.speed.bins + i_v) * self.yaw_rate.bins + i_omega
    }

    /// Row-major mixed-radix label of an index tuple.
    pub fn pack(&self, ds: &DiscreteState) -> Result<usize> {
        let ok = ds.i_d < self.distance.bins
            && ds.i_e < self.heading.bins
            && ds.i_v < self.speed.bins
            && ds.i_omega < self.yaw_rate.bins;
        if !ok {
            return Err(Error::Artifact(format!("index tuple {ds:?} outside binning")));
        }
        Ok(self.pack_indices(ds.i_d, ds.i_e, ds.i_v, ds.i_omega))
    }

    pub fn unpack(&self, label: usize) -> Result<DiscreteState> {
        let cardinality = self.cardinality();
        if label >= cardinality {
            return Err(Error::LabelOutOfRange { label, cardinality });
        }
        let mut rest = label;
        let i_omega = rest % self.yaw_rate.bins;
        rest /= self.yaw_rate.bins;
        let i_v = rest % self.speed.bins;
        rest /= self.speed.bins;
        let i_e = rest % self.heading.bins;
        let i_d = rest / self.heading.bins;
        Ok(DiscreteState { i_d, i_e, i_v, i_omega, packed: label })
    }

    /// Bin-center `(d, e)` of a packed label.
    pub fn center_features(&self, label: usize) -> Result<(f64, f64)> {
        let ds = self.unpack(label)?;
        Ok((self.distance.center(ds.i_d), self.heading.center(ds.i_e)))
    }

    /// Short human-readable signature used to detect mismatched artifacts.
    pub fn signature(&self) -> String {
        format!(
            "d{}x[{},{}] e{} v{}x[{},{}] w{}x[{},{}]",
            self.distance.bins,
            self.distance.lo,
            self.distance.hi,
            self.heading.bins,
            self.speed.bins,
            self.speed.lo,
            self.speed.hi,
            self.yaw_rate.bins,
            self.yaw_rate.lo,
            self.yaw_rate.hi
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteState {
    pub i_d: usize,
    pub i_e: usize,
    pub i_v: usize,
    pub i_omega: usize,
    pub packed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub a_v_levels: Vec<f64>,
    pub a_omega_levels: Vec<f64>,
}

impl Default for ActionGrid {
    /// `Δa_v = 0.10` over `[-0.10, 0.10]`, `Δa_ω = 0.02` over `[-0.02, 0.02]`.
    fn default() -> Self {
        let lim = MotionLimits::default();
        Self::from_steps(&lim, 0.10, 0.02)
    }
}

fn levels(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if step <= 0.0 || hi <= lo {
        return vec![0.0];
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| {
            let v = lo + k as f64 * step;
            // snap rounding residue so zero appears exactly
            if v.abs() < 1e-12 * step.max(1.0) {
                0.0
            } else {
                v
            }
        })
        .collect()
}

impl ActionGrid {
    pub fn from_steps(limits: &MotionLimits, step_v: f64, step_omega: f64) -> Self {
        Self {
            a_v_levels: levels(limits.a_v_min, limits.a_v_max, step_v),
            a_omega_levels: levels(limits.a_omega_min, limits.a_omega_max, step_omega),
        }
    }

    pub fn len(&self) -> usize {
        self.a_v_levels.len() * self.a_omega_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major: `a_v` major, `a_ω` minor.
    #[inline]
    pub fn action(&self, index: usize) -> Action {
        let n_w = self.a_omega_levels.len();
        Action::new(self.a_v_levels[index / n_w], self.a_omega_levels[index % n_w])
    }

    pub fn enumerate(&self) -> Vec<Action> {
        (0..self.len()).map(|i| self.action(i)).collect()
    }

    pub fn validate(&self, limits: &MotionLimits, problems: &mut Vec<String>) {
        let check = |name: &str, lv: &[f64], lo: f64, hi: f64, problems: &mut Vec<String>| {
            if lv.is_empty() {
                problems.push(format!("{name} action levels are empty"));
            }
            if lv.iter().any(|&a| a < lo - 1e-12 || a > hi + 1e-12) {
                problems.push(format!("{name} action levels outside [{lo}, {hi}]"));
            }
            if lv.iter().filter(|&&a| a == 0.0).count() != 1 {
                problems.push(format!("{name} action levels must contain 0 exactly once"));
            }
            if lv.windows(2).any(|w| w[0] >= w[1]) {
                problems.push(format!("{name} action levels must be strictly increasing"));
            }
        };
        check("a_v", &self.a_v_levels, limits.a_v_min, limits.a_v_max, problems);
        check("a_omega", &self.a_omega_levels, limits.a_omega_min, limits.a_omega_max, problems);
    }

    pub fn signature(&self) -> String {
        format!("av{:?} aw{:?}", self.a_v_levels, self.a_omega_levels)
    }
}

//! Rectangular lattices in R^d.
//!
//! Node `i` along an axis sits at `origin + i * step`; each node stands for
//! the cell of width `step` centred on it, so lattice sums are midpoint
//! Riemann sums. Flat indices are row-major (last axis fastest).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub origin: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(origin: f64, step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(invalid(format!("axis step must be positive, got {step}")));
        }
        if count == 0 {
            return Err(invalid("axis count must be at least 1"));
        }
        if !origin.is_finite() {
            return Err(invalid("axis origin must be finite"));
        }
        Ok(Self { origin, step, count })
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.step
    }

    pub fn last(&self) -> f64 {
        self.coord(self.count - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("grid needs at least one axis"));
        }
        for a in &axes {
            Axis::new(a.origin, a.step, a.count)?;
        }
        Ok(Self { axes })
    }

    /// Same origin, step and count on every axis.
    pub fn uniform(dim: usize, origin: f64, step: f64, count: usize) -> Result<Self> {
        let axis = Axis::new(origin, step, count)?;
        Self::new(vec![axis; dim])
    }

    pub fn from_parts(origin: &[f64], step: &[f64], count: &[usize]) -> Result<Self> {
        if origin.len() != step.len() || step.len() != count.len() {
            return Err(invalid("origin, step and count must have equal lengths"));
        }
        let axes = origin
            .iter()
            .zip(step)
            .zip(count)
            .map(|((&o, &s), &c)| Axis::new(o, s, c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn steps(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.step).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.counts())
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (j, a) in self.axes.iter().enumerate().rev() {
            idx[j] = flat % a.count;
            flat /= a.count;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    pub fn coords_of(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(&i, a)| a.coord(i)).collect()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.coords_of(&self.unflatten(flat))
    }

    /// Lattice index of a coordinate, if it falls on a node of this grid.
    pub fn index_of(&self, point: &[f64]) -> Option<Vec<usize>> {
        if point.len() != self.dim() {
            return None;
        }
        point
            .iter()
            .zip(&self.axes)
            .map(|(&p, a)| {
                let r = (p - a.origin) / a.step;
                let k = r.round();
                if (r - k).abs() > ALIGN_TOL || k < 0.0 || k as usize >= a.count {
                    None
                } else {
                    Some(k as usize)
                }
            })
            .collect()
    }

    /// Grid with the same step whose span is doubled about the same centre.
    pub fn dilated(&self) -> GridSpec {
        let axes = self
            .axes
            .iter()
            .map(|a| {
                let shift = (a.count as f64 / 2.0).ceil() as usize;
                Axis {
                    origin: a.origin - shift as f64 * a.step,
                    step: a.step,
                    count: a.count + 2 * shift,
                }
            })
            .collect();
        GridSpec { axes }
    }

    /// Integer offset of `other`'s first node relative to ours, per axis.
    /// Fails unless both grids share steps and lie on a common lattice.
    pub fn offset_of(&self, other: &GridSpec) -> Result<Vec<i64>> {
        if self.dim() != other.dim() {
            return Err(Error::GridMismatch(format!(
                "dimension {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        self.axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| {
                if (a.step - b.step).abs() > ALIGN_TOL * a.step {
                    return Err(Error::GridMismatch(format!(
                        "steps differ: {} vs {}",
                        a.step, b.step
                    )));
                }
                let r = (b.origin - a.origin) / a.step;
                let k = r.round();
                if (r - k).abs() > ALIGN_TOL {
                    return Err(Error::GridMismatch("grids are not lattice aligned".into()));
                }
                Ok(k as i64)
            })
            .collect()
    }

    /// Does this grid contain every node of `other`?
    pub fn covers(&self, other: &GridSpec) -> Result<bool> {
        let off = self.offset_of(other)?;
        Ok(off
            .iter()
            .zip(self.axes.iter().zip(&other.axes))
            .all(|(&o, (a, b))| o >= 0 && o as usize + b.count <= a.count))
    }

    /// Grid extended so that every node `t - lag`, for `t` in this grid and
    /// integer `lag` in `[lo, hi]` per axis, is a node.
    pub fn extended_by_lags(&self, lags: &[(i64, i64)]) -> GridSpec {
        let axes = self
            .axes
            .iter()
            .zip(lags)
            .map(|(a, &(lo, hi))| {
                let below = hi.max(0) as usize;
                let above = (-lo).max(0) as usize;
                Axis {
                    origin: a.origin - below as f64 * a.step,
                    step: a.step,
                    count: a.count + below + above,
                }
            })
            .collect();
        GridSpec { axes }
    }
}

pub(crate) fn strides(counts: &[usize]) -> Vec<usize> {
    let mut s = vec![1; counts.len()];
    for j in (0..counts.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * counts[j + 1];
    }
    s
}

/// Iterate all multi-indices of a box `[lo_j, hi_j]` (inclusive), row-major.
pub(crate) fn box_points(bounds: &[(i64, i64)]) -> impl Iterator<Item = Vec<i64>> + '_ {
    let total: usize = bounds
        .iter()
        .map(|&(lo, hi)| (hi - lo + 1).max(0) as usize)
        .product();
    (0..total).map(move |mut flat| {
        let mut idx = vec![0i64; bounds.len()];
        for j in (0..bounds.len()).rev() {
            let (lo, hi) = bounds[j];
            let n = (hi - lo + 1) as usize;
            idx[j] = lo + (flat % n) as i64;
            flat /= n;
        }
        idx
    })
}

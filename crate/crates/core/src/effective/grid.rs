use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform tensor grid with the same `points` nodes on `[lo, hi]` per axis.
///
/// Flat indices are row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGrid {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl TensorGrid {
    pub fn new(dim: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        if dim == 0 || points < 3 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Precondition(format!(
                "grid needs dim >= 1, points >= 3 and lo < hi (dim {dim}, points {points}, [{lo}, {hi}])"
            )));
        }
        Ok(Self { dim, lo, hi, points })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for d in (0..self.dim).rev() {
            idx[d] = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).into_iter().map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        let slack = 1e-12 * (self.hi - self.lo);
        q.len() == self.dim && q.iter().all(|&z| z >= self.lo - slack && z <= self.hi + slack)
    }

    /// Multilinear interpolation of node `values`; `None` outside the grid.
    pub fn interpolate(&self, values: &[f64], q: &[f64]) -> Option<f64> {
        if !self.contains(q) {
            return None;
        }
        let h = self.step();
        let mut base = vec![0; self.dim];
        let mut frac = vec![0.0; self.dim];
        for d in 0..self.dim {
            let s = ((q[d] - self.lo) / h).clamp(0.0, (self.points - 1) as f64);
            let i = (s.floor() as usize).min(self.points - 2);
            base[d] = i;
            frac[d] = s - i as f64;
        }
        let mut total = 0.0;
        let mut corner = vec![0; self.dim];
        for mask in 0..(1usize << self.dim) {
            let mut weight = 1.0;
            for d in 0..self.dim {
                let up = (mask >> d) & 1 == 1;
                corner[d] = base[d] + usize::from(up);
                weight *= if up { frac[d] } else { 1.0 - frac[d] };
            }
            if weight != 0.0 {
                total += weight * values[self.flat_index(&corner)];
            }
        }
        Some(total)
    }

    /// Smallest second difference `f(i-1) - 2 f(i) + f(i+1)` along any grid line.
    pub fn convexity(&self, values: &[f64]) -> ConvexityCheck {
        let mut worst = ConvexityCheck {
            min_second_difference: f64::INFINITY,
            at: Vec::new(),
        };
        for flat in 0..self.len() {
            let idx = self.multi_index(flat);
            for d in 0..self.dim {
                if idx[d] == 0 || idx[d] + 1 == self.points {
                    continue;
                }
                let mut n = idx.clone();
                n[d] -= 1;
                let below = values[self.flat_index(&n)];
                n[d] += 2;
                let above = values[self.flat_index(&n)];
                let second = below - 2.0 * values[flat] + above;
                if second < worst.min_second_difference {
                    worst.min_second_difference = second;
                    worst.at = self.point(flat);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub min_second_difference: f64,
    pub at: Vec<f64>,
}

impl ConvexityCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.min_second_difference >= -tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_round_trip() {
        let g = TensorGrid::new(3, -1.0, 1.0, 5).unwrap();
        assert_eq!(g.len(), 125);
        for flat in [0, 7, 63, 124] {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.point(124), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn bilinear_reproduces_affine_data() {
        let g = TensorGrid::new(2, -2.0, 2.0, 9).unwrap();
        let values: Vec<f64> = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                3.0 * p[0] - p[1] + 0.5
            })
            .collect();
        let v = g.interpolate(&values, &[0.3, -1.7]).unwrap();
        assert!((v - (0.9 + 1.7 + 0.5)).abs() < 1e-12);
        assert!(g.interpolate(&values, &[2.1, 0.0]).is_none());
        assert_eq!(g.interpolate(&values, &[2.0, 2.0]), Some(values[g.len() - 1]));
    }

    #[test]
    fn convexity_flags_a_dent() {
        let g = TensorGrid::new(1, -1.0, 1.0, 5).unwrap();
        let mut values: Vec<f64> = g.axis().iter().map(|q| q * q).collect();
        assert!(g.convexity(&values).passes(0.0));
        values[2] = 0.4;
        let c = g.convexity(&values);
        assert!(!c.passes(1e-3));
        assert_eq!(c.at, vec![0.0]);
    }
}

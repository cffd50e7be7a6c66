use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A piecewise-linear path `s -> eta(s)` in `R^n` through `(knot, node)` pairs.
///
/// Nodes are stored flat, `nodes[i * dim .. (i + 1) * dim]` being `eta(knots[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    knots: Vec<f64>,
    nodes: Vec<f64>,
    dim: usize,
}

impl Curve {
    pub fn new(knots: Vec<f64>, nodes: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("curve dimension must be positive".into()));
        }
        if knots.len() < 2 {
            return Err(Error::Precondition("a curve needs at least two knots".into()));
        }
        if nodes.len() != knots.len() * dim {
            return Err(Error::Precondition(format!(
                "{} knots but {} node coordinates in dimension {dim}",
                knots.len(),
                nodes.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("knots must be strictly increasing".into()));
        }
        if knots.iter().chain(&nodes).any(|z| !z.is_finite()) {
            return Err(Error::Precondition("curve contains non-finite values".into()));
        }
        Ok(Self { knots, nodes, dim })
    }

    /// Constant-velocity path over `segments` uniform pieces.
    pub fn straight(t0: f64, t1: f64, from: &[f64], to: &[f64], segments: usize) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::Precondition("endpoints differ in dimension".into()));
        }
        if segments == 0 || !(t1 > t0) {
            return Err(Error::Precondition(format!(
                "straight path needs t1 > t0 and segments >= 1 (got [{t0}, {t1}], {segments})"
            )));
        }
        let dim = from.len();
        let mut knots = Vec::with_capacity(segments + 1);
        let mut nodes = Vec::with_capacity((segments + 1) * dim);
        for i in 0..=segments {
            let lambda = i as f64 / segments as f64;
            knots.push(if i == segments { t1 } else { t0 + (t1 - t0) * lambda });
            for d in 0..dim {
                nodes.push(if i == segments {
                    to[d]
                } else {
                    from[d] + (to[d] - from[d]) * lambda
                });
            }
        }
        Self::new(knots, nodes, dim)
    }

    /// Samples `f` at `segments + 1` uniform knots on `[t0, t1]`.
    pub fn sample(t0: f64, t1: f64, segments: usize, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let knots: Vec<f64> = (0..=segments)
            .map(|i| if i == segments { t1 } else { t0 + (t1 - t0) * i as f64 / segments as f64 })
            .collect();
        let nodes = knots.iter().flat_map(|&s| f(s)).collect();
        Self::new(knots, nodes, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [f64] {
        &mut self.nodes
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn t_start(&self) -> f64 {
        self.knots[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.knots.last().expect("non-empty")
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start(&self) -> &[f64] {
        self.point(0)
    }

    pub fn end(&self) -> &[f64] {
        self.point(self.segments())
    }

    /// Index of the segment containing `s` (the last one for `s = t_end`).
    pub fn segment_at(&self, s: f64) -> usize {
        let k = self.knots.partition_point(|&q| q <= s);
        k.clamp(1, self.segments()) - 1
    }

    /// Evaluates the interpolant, extrapolating linearly outside the knots.
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let i = self.segment_at(s);
        let (s0, s1) = (self.knots[i], self.knots[i + 1]);
        let lambda = (s - s0) / (s1 - s0);
        let (a, b) = (self.point(i), self.point(i + 1));
        if lambda == 1.0 {
            return b.to_vec();
        }
        a.iter().zip(b).map(|(p, q)| p + (q - p) * lambda).collect()
    }

    /// Velocity on segment `i`.
    pub fn velocity(&self, i: usize) -> Vec<f64> {
        let dt = self.knots[i + 1] - self.knots[i];
        self.point(i + 1)
            .iter()
            .zip(self.point(i))
            .map(|(b, a)| (b - a) / dt)
            .collect()
    }

    /// The restriction to `[a, b]`, with new knots inserted at the ends.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        const SNAP: f64 = 1e-12;
        if !(b > a) || a < self.t_start() - SNAP || b > self.t_end() + SNAP {
            return Err(Error::Precondition(format!(
                "cannot restrict [{}, {}] to [{a}, {b}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let mut knots = vec![a];
        let mut nodes = self.eval(a);
        for (i, &s) in self.knots.iter().enumerate() {
            if s > a + SNAP && s < b - SNAP {
                knots.push(s);
                nodes.extend_from_slice(self.point(i));
            }
        }
        knots.push(b);
        nodes.extend(self.eval(b));
        Self::new(knots, nodes, self.dim)
    }

    /// `s -> eta(s - dt) + dx`, i.e. knots moved by `dt` and nodes by `dx`.
    pub fn shifted(&self, dt: f64, dx: &[f64]) -> Self {
        let knots = self.knots.iter().map(|s| s + dt).collect();
        let nodes = self
            .nodes
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(dx).map(|(a, b)| a + b).collect::<Vec<_>>())
            .collect();
        Self {
            knots,
            nodes,
            dim: self.dim,
        }
    }

    /// Reparametrizes time affinely: knot `s` becomes `origin + (s - t_start) / factor`.
    pub fn time_compressed(&self, origin: f64, factor: f64) -> Self {
        let t0 = self.t_start();
        Self {
            knots: self.knots.iter().map(|s| origin + (s - t0) / factor).collect(),
            nodes: self.nodes.clone(),
            dim: self.dim,
        }
    }

    /// Appends each coordinate with the time itself: `s -> (eta(s), s)`.
    pub fn space_time_lift(&self) -> Self {
        let dim = self.dim + 1;
        let mut nodes = Vec::with_capacity(self.knots.len() * dim);
        for (i, &s) in self.knots.iter().enumerate() {
            nodes.extend_from_slice(self.point(i));
            nodes.push(s);
        }
        Self {
            knots: self.knots.clone(),
            nodes,
            dim,
        }
    }

    /// Resamples on `segments` uniform knots over the same window.
    pub fn resampled(&self, segments: usize) -> Result<Self> {
        Self::sample(self.t_start(), self.t_end(), segments, self.dim, |s| self.eval(s))
    }

    /// `[[s, x_1, ..., x_n], ...]` rows for JSON/CSV export.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.knots
            .iter()
            .enumerate()
            .map(|(i, &s)| std::iter::once(s).chain(self.point(i).iter().copied()).collect())
            .collect()
    }

    /// Columns `s, x0, .., x{n-1}`, one row per knot.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
        let mut header = vec!["s".to_string()];
        header.extend((0..self.dim).map(|d| format!("x{d}")));
        w.write_record(&header).map_err(|e| Error::parse(path, e))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| Error::parse(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads `s, x0, ..` rows with a header line; the dimension is the column count minus one.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let mut knots = Vec::new();
        let mut nodes = Vec::new();
        let mut dim = None;
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, e))?;
            let d = *dim.get_or_insert(nums.len().saturating_sub(1));
            if d == 0 || nums.len() != d + 1 {
                return Err(Error::parse(path, "every row needs s and the same number of coordinates"));
            }
            knots.push(nums[0]);
            nodes.extend_from_slice(&nums[1..]);
        }
        let dim = dim.ok_or_else(|| Error::parse(path, "no rows"))?;
        Self::new(knots, nodes, dim).map_err(|e| Error::parse(path, e))
    }
}

/// Concatenates pieces end to end, recording the junction gaps.
#[derive(Debug, Default)]
pub struct CurveBuilder {
    knots: Vec<f64>,
    nodes: Vec<f64>,
    dim: usize,
    max_gap: f64,
}

impl CurveBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    /// Appends `piece`; its first knot must coincide with the current end time.
    pub fn push(&mut self, piece: &Curve) -> Result<()> {
        if piece.dim != self.dim {
            return Err(Error::Internal("curve piece has wrong dimension".into()));
        }
        if let Some(&last) = self.knots.last() {
            if (piece.t_start() - last).abs() > 1e-9 * last.abs().max(1.0) {
                return Err(Error::Internal(format!(
                    "piece starts at {} but the path ends at {last}",
                    piece.t_start()
                )));
            }
            let tail = &self.nodes[self.nodes.len() - self.dim..];
            let gap = tail
                .iter()
                .zip(piece.start())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            self.max_gap = self.max_gap.max(gap);
            self.knots.extend_from_slice(&piece.knots[1..]);
            self.nodes.extend_from_slice(&piece.nodes[self.dim..]);
        } else {
            self.knots.extend_from_slice(&piece.knots);
            self.nodes.extend_from_slice(&piece.nodes);
        }
        Ok(())
    }

    pub fn end_time(&self) -> Option<f64> {
        self.knots.last().copied()
    }

    pub fn end_point(&self) -> Option<&[f64]> {
        (!self.nodes.is_empty()).then(|| &self.nodes[self.nodes.len() - self.dim..])
    }

    /// The finished curve and the largest spatial jump at a junction.
    pub fn finish(self) -> Result<(Curve, f64)> {
        let gap = self.max_gap;
        Ok((Curve::new(self.knots, self.nodes, self.dim)?, gap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_curves() {
        assert!(Curve::new(vec![0.0], vec![0.0], 1).is_err());
        assert!(Curve::new(vec![0.0, 0.0], vec![0.0, 1.0], 1).is_err());
        assert!(Curve::new(vec![0.0, 1.0], vec![0.0], 1).is_err());
    }

    #[test]
    fn straight_endpoints_are_exact() {
        let c = Curve::straight(0.3, 1.7, &[0.1, -2.0], &[0.7, 5.0], 7).unwrap();
        assert_eq!(c.start(), &[0.1, -2.0]);
        assert_eq!(c.end(), &[0.7, 5.0]);
        assert_eq!(c.t_end(), 1.7);
        let v = c.velocity(3);
        assert!((v[0] - 0.6 / 1.4).abs() < 1e-12);
    }

    #[test]
    fn restriction_keeps_interior_knots() {
        let c = Curve::sample(0.0, 4.0, 8, 1, |s| vec![s * s]).unwrap();
        let r = c.restrict(0.75, 2.5).unwrap();
        assert_eq!(r.knots(), &[0.75, 1.0, 1.5, 2.0, 2.5]);
        assert!((r.start()[0] - 0.625).abs() < 1e-12);
        assert!((r.end()[0] - 6.25).abs() < 1e-12);
    }

    #[test]
    fn builder_tracks_gaps() {
        let a = Curve::straight(0.0, 1.0, &[0.0], &[1.0], 2).unwrap();
        let b = Curve::straight(1.0, 2.0, &[1.25], &[0.0], 2).unwrap();
        let mut builder = CurveBuilder::new(1);
        builder.push(&a).unwrap();
        builder.push(&b).unwrap();
        let (c, gap) = builder.finish().unwrap();
        assert_eq!(c.segments(), 4);
        assert_eq!(gap, 0.25);
    }

    #[test]
    fn csv_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = Curve::straight(0.0, 2.0, &[0.0, 1.0], &[1.0, -1.0], 3).unwrap();
        c.write_csv(&path).unwrap();
        assert_eq!(Curve::read_csv(&path).unwrap(), c);
        std::fs::write(&path, "s,x0\n0,0\n0,1\n").unwrap();
        assert!(matches!(Curve::read_csv(&path), Err(Error::Parse { .. })));
    }
}

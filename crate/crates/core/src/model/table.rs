use std::path::Path;

use crate::{Error, Result};

/// Tabulated one-dimensional Hamiltonian on a regular `(x, t, p)` grid.
///
/// `x` and `t` samples cover the unit cell `[0, 1)` uniformly and are
/// interpolated periodically; `p` samples may be any increasing regular grid,
/// with linear extrapolation past its ends.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomTable {
    nx: usize,
    nt: usize,
    ps: Vec<f64>,
    /// Indexed `[(ix * nt + it) * np + ip]`.
    values: Vec<f64>,
}

impl CustomTable {
    pub fn new(nx: usize, nt: usize, ps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || nt == 0 || ps.len() < 2 {
            return Err(Error::Config("custom table needs nx, nt >= 1 and at least two p samples".into()));
        }
        if values.len() != nx * nt * ps.len() {
            return Err(Error::Config(format!(
                "custom table has {} values, expected {}",
                values.len(),
                nx * nt * ps.len()
            )));
        }
        if ps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("custom table p samples must increase".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("custom table contains non-finite values".into()));
        }
        Ok(Self { nx, nt, ps, values })
    }

    /// Samples `h` on an `nx x nt` cell grid and the given momenta.
    pub fn from_fn(nx: usize, nt: usize, ps: Vec<f64>, h: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * nt * ps.len());
        for ix in 0..nx {
            for it in 0..nt {
                for &p in &ps {
                    values.push(h(ix as f64 / nx as f64, it as f64 / nt as f64, p));
                }
            }
        }
        Self::new(nx, nt, ps, values)
    }

    /// Reads a headed CSV with columns `x,t,p,H`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            if rec.len() != 4 {
                return Err(parse_err(format!("expected 4 columns, found {}", rec.len())));
            }
            let mut row = [0.0; 4];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                *slot = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("not a number: `{field}`")))?;
            }
            rows.push(row);
        }
        Self::from_rows(&rows).map_err(|e| parse_err(e.to_string()))
    }

    fn from_rows(rows: &[[f64; 4]]) -> Result<Self> {
        let axis = |col: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (xs, ts, ps) = (axis(0), axis(1), axis(2));
        let uniform_cell = |v: &[f64]| {
            let n = v.len() as f64;
            v.iter().enumerate().all(|(i, z)| (z - i as f64 / n).abs() < 1e-9)
        };
        if !uniform_cell(&xs) || !uniform_cell(&ts) {
            return Err(Error::Config("x and t samples must be k/n for k = 0..n-1".into()));
        }
        let (nx, nt, np) = (xs.len(), ts.len(), ps.len());
        if rows.len() != nx * nt * np {
            return Err(Error::Config(format!(
                "grid is {nx}x{nt}x{np} but the file has {} rows",
                rows.len()
            )));
        }
        let mut values = vec![f64::NAN; nx * nt * np];
        let find = |v: &[f64], z: f64| v.iter().position(|w| *w == z).expect("sample on axis");
        for r in rows {
            let idx = (find(&xs, r[0]) * nt + find(&ts, r[1])) * np + find(&ps, r[2]);
            values[idx] = r[3];
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Config("grid has duplicate or missing samples".into()));
        }
        Self::new(nx, nt, ps, values)
    }

    /// Trilinear interpolation; `x` and `t` must already lie in `[0, 1)`.
    pub fn eval(&self, x: f64, t: f64, p: f64) -> f64 {
        let np = self.ps.len();
        let (ix0, fx) = periodic_index(x, self.nx);
        let (it0, ft) = periodic_index(t, self.nt);
        let ix1 = (ix0 + 1) % self.nx;
        let it1 = (it0 + 1) % self.nt;
        // bracket in p, clamped so the end segments extrapolate
        let ip = match self.ps.partition_point(|&q| q <= p) {
            0 => 0,
            k if k >= np => np - 2,
            k => k - 1,
        };
        let fp = (p - self.ps[ip]) / (self.ps[ip + 1] - self.ps[ip]);
        let at = |ix: usize, it: usize| {
            let base = (ix * self.nt + it) * np + ip;
            self.values[base] * (1.0 - fp) + self.values[base + 1] * fp
        };
        let v0 = at(ix0, it0) * (1.0 - ft) + at(ix0, it1) * ft;
        let v1 = at(ix1, it0) * (1.0 - ft) + at(ix1, it1) * ft;
        v0 * (1.0 - fx) + v1 * fx
    }
}

fn periodic_index(z: f64, n: usize) -> (usize, f64) {
    let s = z * n as f64;
    let i = s.floor();
    ((i as usize) % n, s - i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn interpolates_linear_data_exactly() {
        let ps: Vec<f64> = (0..9).map(|i| -2.0 + 0.5 * i as f64).collect();
        let t = CustomTable::from_fn(4, 4, ps, |_, _, p| 3.0 * p + 1.0).unwrap();
        assert!((t.eval(0.3, 0.9, 0.37) - 2.11).abs() < 1e-12);
        // extrapolation past the p grid keeps the end slope
        assert!((t.eval(0.1, 0.1, 3.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let ps = vec![-1.0, 0.0, 1.0];
        let t = CustomTable::from_fn(2, 2, ps.clone(), |x, s, p| p * p + x + 2.0 * s).unwrap();
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "x,t,p,H").unwrap();
        for ix in 0..2 {
            for it in 0..2 {
                for &p in &ps {
                    let (x, s) = (ix as f64 / 2.0, it as f64 / 2.0);
                    writeln!(file, "{x},{s},{p},{}", p * p + x + 2.0 * s).unwrap();
                }
            }
        }
        let loaded = CustomTable::from_csv(file.path()).unwrap();
        assert_eq!(loaded, t);
    }

    #[test]
    fn csv_with_missing_rows_is_rejected() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "x,t,p,H\n0,0,-1,1\n0,0,1,1\n0.5,0,-1,1").unwrap();
        assert!(CustomTable::from_csv(file.path()).is_err());
    }
}

use rayon::prelude::*;

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Build from per-row entry lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (c, v) in row {
                if c == last {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            data,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient on the rows and columns where
/// `active` is set; inactive entries of `x` are left untouched and ignored.
pub fn pcg(a: &Csr, b: &[f64], x: &mut [f64], active: &[bool], tol: f64, max_iter: usize) -> CgOutcome {
    let n = a.n;
    let mask = |v: &mut Vec<f64>| {
        for (e, &on) in v.iter_mut().zip(active) {
            if !on {
                *e = 0.0;
            }
        }
    };
    let apply = |v: &[f64]| {
        let mut out = a.mul(v);
        mask(&mut out);
        out
    };
    let diag: Vec<f64> = a
        .diagonal()
        .iter()
        .zip(active)
        .map(|(&d, &on)| if on && d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut xs: Vec<f64> = x.iter().zip(active).map(|(&v, &on)| if on { v } else { 0.0 }).collect();
    let mut bb = b.to_vec();
    mask(&mut bb);
    let bnorm = dot(&bb, &bb).sqrt();
    if bnorm == 0.0 {
        for i in 0..n {
            if active[i] {
                x[i] = 0.0;
            }
        }
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let ax = apply(&xs);
    let mut r: Vec<f64> = bb.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while it < max_iter && rel > tol {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            xs[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        it += 1;
        for i in 0..n {
            z[i] = r[i] * diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    for i in 0..n {
        if active[i] {
            x[i] = xs[i];
        }
    }
    CgOutcome {
        iterations: it,
        relative_residual: rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 50;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        let a = Csr::from_rows(rows);
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&exact);
        let mut x = vec![0.0; n];
        let out = pcg(&a, &b, &mut x, &vec![true; n], 1e-13, 500);
        assert!(out.relative_residual <= 1e-13);
        for (u, v) in x.iter().zip(&exact) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}

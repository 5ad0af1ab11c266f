//! Linear solvers for the banded SPD stiffness system.

/// Symmetric matrix stored as its lower band. Row `i` keeps columns
/// `i - bw ..= i` at offsets `0 ..= bw`; column `c` sits at `c + bw - i`.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

/// A pivot fell below the relative tolerance while factorizing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BreakdownAt {
    pub row: usize,
}

const PIVOT_RTOL: f64 = 1e-12;

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)]
    }

    /// Add to entry `(i, j)` with `j <= i <= j + bw`.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.data[i * (self.bw + 1) + j + self.bw - i] += v;
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.data[i * (self.bw + 1) + self.bw]
    }

    pub fn set_diag(&mut self, i: usize, v: f64) {
        self.data[i * (self.bw + 1) + self.bw] = v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let row = self.row(i);
            let j0 = i.saturating_sub(self.bw);
            let off = j0 + self.bw - i;
            let mut acc = row[self.bw] * x[i];
            for (k, &a) in row[off..self.bw].iter().enumerate() {
                let j = j0 + k;
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    /// In-place Cholesky `A = L·Lᵀ`, keeping the band structure.
    pub fn cholesky(mut self) -> Result<BandCholesky, BreakdownAt> {
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let k0 = i.saturating_sub(bw);
            let orig_diag = self.data[i * w + bw];
            for j in k0..=i {
                // sum over k in k0..j of L[i][k]·L[j][k]
                let len = j - k0;
                let pi = i * w + k0 + bw - i;
                let pj = j * w + k0 + bw - j;
                let dot = dot_unrolled(&self.data[pi..pi + len], &self.data[pj..pj + len]);
                let idx = i * w + j + bw - i;
                let s = self.data[idx] - dot;
                if j < i {
                    self.data[idx] = s / self.data[j * w + bw];
                } else {
                    if !s.is_finite() || s <= PIVOT_RTOL * orig_diag.abs() {
                        return Err(BreakdownAt { row: i });
                    }
                    self.data[idx] = s.sqrt();
                }
            }
        }
        Ok(BandCholesky { l: self })
    }
}

pub(crate) struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let bw = l.bw;
        for i in 0..l.n {
            let row = l.row(i);
            let j0 = i.saturating_sub(bw);
            let off = j0 + bw - i;
            let mut s = b[i];
            for (k, &a) in row[off..bw].iter().enumerate() {
                s -= a * b[j0 + k];
            }
            b[i] = s / row[bw];
        }
        for i in (0..l.n).rev() {
            let row = l.row(i);
            b[i] /= row[bw];
            let xi = b[i];
            let j0 = i.saturating_sub(bw);
            let off = j0 + bw - i;
            for (k, &a) in row[off..bw].iter().enumerate() {
                b[j0 + k] -= a * xi;
            }
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
#[inline]
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    let s: f64 = (0..4).map(|k| acc[k] + acc[k + 4]).sum();
    s + tail
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradients.
pub(crate) fn pcg(a: &BandMatrix, b: &[f64], tol: f64, max_iter: usize) -> CgOutcome {
    let n = a.n();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / a.diag(i)).collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= tol {
            return CgOutcome {
                x,
                iterations: it,
                rel_residual: rel,
                converged: true,
            };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        x,
        iterations: max_iter,
        rel_residual: rel,
        converged: false,
    }
}

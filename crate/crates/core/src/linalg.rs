//! Dense complex LU with partial pivoting, row equilibration, iterative
//! refinement and a Hager–Higham estimate of the 1-norm condition number.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct LuSolver {
    n: usize,
    /// Row-equilibrated copy of the original matrix (for refinement).
    scaled: DMatrix<Complex64>,
    /// Packed L (unit lower) and U factors, column-major.
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    row_scale: Vec<f64>,
    cond: f64,
}

impl LuSolver {
    /// Factors `a`; fails with [`Error::NearSingular`] when the estimated
    /// condition number of the row-equilibrated matrix exceeds `max_cond`.
    pub fn new(a: DMatrix<Complex64>, max_cond: f64) -> Result<Self> {
        let s = Self::factor(a)?;
        if !(s.cond <= max_cond) {
            return Err(Error::NearSingular { cond: s.cond });
        }
        Ok(s)
    }

    /// Factors without a conditioning threshold; exact singularity still fails.
    pub fn factor(mut a: DMatrix<Complex64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let mut row_scale = vec![1.0; n];
        for i in 0..n {
            let m = a.row(i).iter().fold(0.0f64, |m, v| m.max(v.norm()));
            if m == 0.0 {
                return Err(Error::NearSingular { cond: f64::INFINITY });
            }
            row_scale[i] = 1.0 / m;
            for j in 0..n {
                a[(i, j)] *= row_scale[i];
            }
        }
        let scaled = a.clone();
        let mut lu: Vec<Complex64> = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let col = k * n;
            let (mut p, mut pmax) = (k, 0.0);
            for i in k..n {
                let v = lu[col + i].norm();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 {
                return Err(Error::NearSingular { cond: f64::INFINITY });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    lu.swap(j * n + p, j * n + k);
                }
            }
            let inv = 1.0 / lu[col + k];
            for i in k + 1..n {
                lu[col + i] *= inv;
            }
            for j in k + 1..n {
                let akj = lu[j * n + k];
                if akj == ZERO {
                    continue;
                }
                let (left, right) = lu.split_at_mut(j * n);
                let lcol = &left[col..col + n];
                let ucol = &mut right[..n];
                for i in k + 1..n {
                    ucol[i] -= lcol[i] * akj;
                }
            }
        }

        let mut s = Self {
            n,
            scaled,
            lu,
            perm,
            row_scale,
            cond: 0.0,
        };
        s.cond = s.estimate_condition();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Estimated 1-norm condition number of the row-equilibrated matrix.
    pub fn condition_estimate(&self) -> f64 {
        self.cond
    }

    /// Solves `A x = b` with two steps of iterative refinement.
    pub fn solve(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let sb = DVector::from_fn(self.n, |i, _| b[i] * self.row_scale[i]);
        let mut x = self.solve_scaled(&sb);
        for _ in 0..2 {
            let r = &sb - &self.scaled * &x;
            let dx = self.solve_scaled(&r);
            x += dx;
        }
        x
    }

    /// Solves with the equilibrated factors, no refinement.
    fn solve_scaled(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.n;
        let mut y: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let yj = y[j];
            if yj == ZERO {
                continue;
            }
            let col = &self.lu[j * n..(j + 1) * n];
            for i in j + 1..n {
                y[i] -= col[i] * yj;
            }
        }
        for j in (0..n).rev() {
            let col = &self.lu[j * n..(j + 1) * n];
            y[j] /= col[j];
            let yj = y[j];
            for i in 0..j {
                y[i] -= col[i] * yj;
            }
        }
        DVector::from_vec(y)
    }

    /// Solves `Sᴴ z = c` with `S` the equilibrated matrix.
    fn solve_scaled_adjoint(&self, c: &DVector<Complex64>) -> DVector<Complex64> {
        // S = Pᵀ L U  =>  Sᴴ = Uᴴ Lᴴ P
        let n = self.n;
        let mut w: Vec<Complex64> = c.iter().copied().collect();
        for j in 0..n {
            let col = &self.lu[j * n..(j + 1) * n];
            let mut s = w[j];
            for i in 0..j {
                s -= col[i].conj() * w[i];
            }
            w[j] = s / col[j].conj();
        }
        for j in (0..n).rev() {
            let col = &self.lu[j * n..(j + 1) * n];
            let mut s = w[j];
            for i in j + 1..n {
                s -= col[i].conj() * w[i];
            }
            w[j] = s;
        }
        let mut z = vec![ZERO; n];
        for (k, &p) in self.perm.iter().enumerate() {
            z[p] = w[k];
        }
        DVector::from_vec(z)
    }

    fn estimate_condition(&self) -> f64 {
        let n = self.n;
        let norm1 = (0..n)
            .map(|j| self.scaled.column(j).iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut x = DVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve_scaled(&x);
            let ynorm: f64 = y.iter().map(|v| v.norm()).sum();
            if !ynorm.is_finite() {
                return f64::INFINITY;
            }
            if ynorm <= est {
                break;
            }
            est = ynorm;
            let sgn = y.map(|v| {
                let a = v.norm();
                if a == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    v / a
                }
            });
            let z = self.solve_scaled_adjoint(&sgn);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, 0.0), |acc, it| if it.1 > acc.1 { it } else { acc });
            let ztx = z.iter().zip(x.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = DVector::from_element(n, ZERO);
            x[j] = Complex64::new(1.0, 0.0);
        }
        // Higham's alternating-sign safeguard
        let alt = DVector::from_fn(n, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let denom = (n.max(2) - 1) as f64;
            Complex64::new(sign * (1.0 + i as f64 / denom), 0.0)
        });
        let y = self.solve_scaled(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est) * norm1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn solves_random_system() {
        let a = random_matrix(40, 3);
        let x0 = DVector::from_fn(40, |i, _| Complex64::new(i as f64, 1.0 - i as f64));
        let b = &a * &x0;
        let lu = LuSolver::new(a, 1e12).unwrap();
        let x = lu.solve(&b);
        assert!((x - x0).norm() < 1e-10);
    }

    #[test]
    fn adjoint_solve_matches() {
        let a = random_matrix(25, 5);
        let lu = LuSolver::factor(a.clone()).unwrap();
        let c = DVector::from_fn(25, |i, _| Complex64::new(1.0, i as f64));
        let z = lu.solve_scaled_adjoint(&c);
        let back = lu.scaled.adjoint() * z;
        assert!((back - c).norm() < 1e-10);
    }

    #[test]
    fn condition_estimate_tracks_exact_value() {
        // diag(1, 1e-6) scaled rows -> equilibrated matrix is identity-like
        let mut a = DMatrix::from_element(3, 3, ZERO);
        a[(0, 0)] = Complex64::new(1.0, 0.0);
        a[(1, 1)] = Complex64::new(1.0, 0.0);
        a[(1, 2)] = Complex64::new(1.0, 0.0);
        a[(2, 1)] = Complex64::new(1.0, 0.0);
        a[(2, 2)] = Complex64::new(1.0 + 1e-9, 0.0);
        let lu = LuSolver::factor(a).unwrap();
        assert!(lu.condition_estimate() > 1e8);
        assert!(matches!(
            LuSolver::new(lu.scaled.clone(), 1e6),
            Err(Error::NearSingular { .. })
        ));
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_element(4, 4, Complex64::new(1.0, 0.0));
        assert!(LuSolver::factor(a).is_err() || LuSolver::new(DMatrix::from_element(4, 4, Complex64::new(1.0, 0.0)), 1e14).is_err());
    }
}

//! Chebyshev–Gauss–Lobatto collocation on `[-1, 1]`.
//!
//! Nodes are stored in descending order, `y_j = cos(jπ/N)`, so index `0` is
//! the upper wall `y = 1` and index `N` the lower wall `y = -1`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MIN_DEGREE: usize = 8;

/// Collocation grid with dense differentiation matrices up to fourth order
/// and Clenshaw–Curtis weights on the same nodes.
#[derive(Debug)]
pub struct SpectralGrid {
    n: usize,
    nodes: Vec<f64>,
    d: [DMatrix<f64>; 4],
    weights: Vec<f64>,
    dirichlet: OnceLock<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    clamped: OnceLock<ClampedOperators>,
}

/// Derivative operators acting on interior nodal values of a function with
/// a double zero at each wall, `φ = (1 - y²) q` with `q(±1) = 0`.
///
/// Each matrix is `(N-1) × (N-1)` over the interior nodes `1..N-1`.
#[derive(Debug, Clone)]
pub struct ClampedOperators {
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub d4: DMatrix<f64>,
}

impl SpectralGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_DEGREE {
            return Err(Error::Domain(format!(
                "polynomial degree must be at least {MIN_DEGREE}, got {n}"
            )));
        }
        let nodes = cheb_nodes(n);
        let d = cheb_diff_matrices(n);
        Ok(Self {
            n,
            weights: clenshaw_curtis(n),
            nodes,
            d,
            dirichlet: OnceLock::new(),
            clamped: OnceLock::new(),
        })
    }

    /// Convenience for the common case of a shared grid.
    pub fn shared(n: usize) -> Result<Arc<Self>> {
        Self::new(n).map(Arc::new)
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Differentiation matrix of order `k` in `1..=4`.
    pub fn diff(&self, k: usize) -> &DMatrix<f64> {
        assert!((1..=4).contains(&k), "derivative order {k} not available");
        &self.d[k - 1]
    }

    pub fn integrate_real(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn integrate(&self, values: &DVector<Complex64>) -> Complex64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights
            .iter()
            .zip(values.iter())
            .map(|(w, v)| v * *w)
            .sum()
    }

    /// `∫ f ḡ` by quadrature.
    pub fn inner(&self, f: &DVector<Complex64>, g: &DVector<Complex64>) -> Complex64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g.iter()))
            .map(|(w, (a, b))| a * b.conj() * *w)
            .sum()
    }

    pub fn norm_sq(&self, f: &DVector<Complex64>) -> f64 {
        self.weights
            .iter()
            .zip(f.iter())
            .map(|(w, a)| w * a.norm_sqr())
            .sum()
    }

    pub fn apply(&self, k: usize, f: &DVector<Complex64>) -> DVector<Complex64> {
        apply_real(self.diff(k), f)
    }

    /// Solves `-u'' = h`, `u(±1) = 0`.
    pub fn solve_dirichlet_poisson(&self, h: &DVector<Complex64>) -> DVector<Complex64> {
        let lu = self.dirichlet.get_or_init(|| {
            let m = self.n - 1;
            let d2 = self.diff(2);
            DMatrix::from_fn(m, m, |i, j| -d2[(i + 1, j + 1)]).lu()
        });
        let m = self.n - 1;
        let re = DVector::from_fn(m, |i, _| h[i + 1].re);
        let im = DVector::from_fn(m, |i, _| h[i + 1].im);
        // The Dirichlet Laplacian is nonsingular for every N >= 2.
        let ur = lu.solve(&re).expect("Dirichlet Laplacian is nonsingular");
        let ui = lu.solve(&im).expect("Dirichlet Laplacian is nonsingular");
        let mut u = DVector::from_element(self.len(), Complex64::new(0.0, 0.0));
        for i in 0..m {
            u[i + 1] = Complex64::new(ur[i], ui[i]);
        }
        u
    }

    pub fn clamped(&self) -> &ClampedOperators {
        self.clamped.get_or_init(|| self.build_clamped())
    }

    fn build_clamped(&self) -> ClampedOperators {
        let n = self.n;
        let m = n - 1;
        let x = &self.nodes;
        let [d1, d2, d3, d4] = &self.d;
        // Columns are scaled by 1/(1-y_j²) to map φ_j to q_j; q vanishes at
        // the walls so the boundary columns drop out.
        let s: Vec<f64> = (1..n).map(|j| 1.0 / (1.0 - x[j] * x[j])).collect();
        let build = |f: &dyn Fn(usize, usize) -> f64| {
            DMatrix::from_fn(m, m, |i, j| f(i + 1, j + 1) * s[j])
        };
        let id = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        ClampedOperators {
            d1: build(&|i, j| (1.0 - x[i] * x[i]) * d1[(i, j)] - 2.0 * x[i] * id(i, j)),
            d2: build(&|i, j| {
                (1.0 - x[i] * x[i]) * d2[(i, j)] - 4.0 * x[i] * d1[(i, j)] - 2.0 * id(i, j)
            }),
            d4: build(&|i, j| {
                (1.0 - x[i] * x[i]) * d4[(i, j)] - 8.0 * x[i] * d3[(i, j)] - 12.0 * d2[(i, j)]
            }),
        }
    }
}

/// Applies a real matrix to a complex vector.
pub(crate) fn apply_real(m: &DMatrix<f64>, f: &DVector<Complex64>) -> DVector<Complex64> {
    let n = m.nrows();
    let mut out = DVector::from_element(n, Complex64::new(0.0, 0.0));
    for j in 0..m.ncols() {
        let fj = f[j];
        if fj == Complex64::new(0.0, 0.0) {
            continue;
        }
        let col = m.column(j);
        for i in 0..n {
            out[i] += fj * col[i];
        }
    }
    out
}

fn cheb_nodes(n: usize) -> Vec<f64> {
    // sin form is exactly antisymmetric about the midpoint
    (0..=n)
        .map(|j| (PI * (n as f64 - 2.0 * j as f64) / (2.0 * n as f64)).sin())
        .collect()
}

/// Differentiation matrices of orders 1..=4 by the Weideman–Reddy
/// recursion `D⁽ˡ⁾ᵢⱼ = l Zᵢⱼ (Cᵢⱼ D⁽ˡ⁻¹⁾ᵢᵢ - D⁽ˡ⁻¹⁾ᵢⱼ)` with node differences from
/// the trigonometric identity and every diagonal from the negative sum.
fn cheb_diff_matrices(n: usize) -> [DMatrix<f64>; 4] {
    let half = PI / (2.0 * n as f64);
    let c = |i: usize| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        if i == 0 || i == n {
            2.0 * s
        } else {
            s
        }
    };
    // Zᵢⱼ = 1/(x_i - x_j)
    let z = DMatrix::from_fn(n + 1, n + 1, |i, j| {
        if i == j {
            0.0
        } else {
            1.0 / (2.0 * (((i + j) as f64) * half).sin() * (((j as f64) - (i as f64)) * half).sin())
        }
    });
    let mut prev = DMatrix::<f64>::identity(n + 1, n + 1);
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(4);
    for l in 1..=4 {
        let lf = l as f64;
        let mut d = DMatrix::from_fn(n + 1, n + 1, |i, j| {
            if i == j {
                0.0
            } else {
                lf * z[(i, j)] * (c(i) / c(j) * prev[(i, i)] - prev[(i, j)])
            }
        });
        fix_diagonal(&mut d);
        // Flipping trick: the lower half is copied from the better
        // conditioned upper half via D⁽ˡ⁾(N-i, N-j) = (-1)ˡ D⁽ˡ⁾(i, j).
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        for i in n / 2 + 1..=n {
            for j in 0..=n {
                d[(i, j)] = sign * d[(n - i, n - j)];
            }
        }
        out.push(d.clone());
        prev = d;
    }
    [out[0].clone(), out[1].clone(), out[2].clone(), out[3].clone()]
}

/// Negative-sum trick: each row of a differentiation matrix annihilates constants.
fn fix_diagonal(d: &mut DMatrix<f64>) {
    let n = d.nrows();
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if j != i {
                s += d[(i, j)];
            }
        }
        d[(i, i)] = -s;
    }
}

fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let theta: Vec<f64> = (0..=n).map(|k| PI * k as f64 / nf).collect();
    let mut w = vec![0.0; n + 1];
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[i + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Complex nodal values on a shared grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<SpectralGrid>,
    values: DVector<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Arc<SpectralGrid>, values: DVector<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "grid function has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let values = DVector::from_element(grid.len(), Complex64::new(0.0, 0.0));
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<SpectralGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let values = DVector::from_iterator(grid.len(), grid.nodes().iter().map(|&y| f(y)));
        Self { grid, values }
    }

    pub fn from_real_fn(grid: Arc<SpectralGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |y| Complex64::new(f(y), 0.0))
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<Complex64> {
        self.values
    }

    pub fn derivative(&self, k: usize) -> GridFunction {
        Self {
            grid: self.grid.clone(),
            values: self.grid.apply(k, &self.values),
        }
    }

    pub fn conj(&self) -> GridFunction {
        Self {
            grid: self.grid.clone(),
            values: self.values.map(|v| v.conj()),
        }
    }

    pub fn scale(&self, a: Complex64) -> GridFunction {
        Self {
            grid: self.grid.clone(),
            values: self.values.map(|v| v * a),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.norm_sq(&self.values).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `(Σ_{k≤m} ‖Dᵏ f‖²)^{1/2}`, `m ≤ 3`.
    pub fn sobolev_norm(&self, m: usize) -> Result<f64> {
        sobolev_norm(self, m)
    }

    pub fn h_minus1_norm(&self) -> f64 {
        h_minus1_norm(self)
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: &self.values + &rhs.values,
        }
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: &self.values - &rhs.values,
        }
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: &self.values * Complex64::new(rhs, 0.0),
        }
    }
}

pub fn sobolev_norm(f: &GridFunction, m: usize) -> Result<f64> {
    if m > 3 {
        return Err(Error::Domain(format!("Sobolev order {m} not supported (max 3)")));
    }
    let g = &f.grid;
    let mut total = g.norm_sq(&f.values);
    for k in 1..=m {
        total += g.norm_sq(&g.apply(k, &f.values));
    }
    Ok(total.sqrt())
}

/// Dual norm against `H¹₀(-1,1)`, realized as `‖u'‖` with `-u'' = h`, `u(±1) = 0`.
pub fn h_minus1_norm(h: &GridFunction) -> f64 {
    let g = &h.grid;
    let u = g.solve_dirichlet_poisson(&h.values);
    g.norm_sq(&g.apply(1, &u)).sqrt()
}

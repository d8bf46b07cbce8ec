//! Linearized channel problem on the periodic cell `x ∈ [0, 2π/ξ₀)`,
//! `y ∈ [-1, 1]`, solved mode by mode in `x`.
//!
//! Fourier convention: `ψ(x, y) = Σ_k φ_k(y) e^{ikξ₀x}` for `|k| ≤ K`, with
//! discrete coefficients `φ_k = (1/n) Σ_j ψ(x_j) e^{-ikξ₀x_j}`. Velocities
//! follow `v = ψ_y`, `w = -ψ_x`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::os_mode::{mode_rhs, sigma_from_phi, ModeOperator};
use crate::profiles::Profile;
use crate::spectral::{GridFunction, SpectralGrid};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const SCHEMA_VERSION: u32 = 1;

/// Relative energy beyond the cutoff above which sampled data is refused.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Physical samples per cell for a cutoff `K`: enough to multiply two
/// fields without aliasing into the retained modes.
pub fn physical_points(k_max: usize) -> usize {
    3 * k_max + 1
}

fn cell_width(xi0: f64) -> f64 {
    2.0 * std::f64::consts::PI / xi0
}

/// Real fields on the periodic cell stored by their Fourier coefficients;
/// `components[c][k + K]` is the coefficient profile of mode `k`.
#[derive(Debug, Clone)]
pub struct ModalField {
    pub xi0: f64,
    pub k_max: usize,
    pub grid: Arc<SpectralGrid>,
    pub components: Vec<Vec<DVector<Complex64>>>,
}

impl ModalField {
    pub fn zeros(xi0: f64, k_max: usize, grid: Arc<SpectralGrid>, n_components: usize) -> Self {
        let ny = grid.len();
        let modes = vec![DVector::from_element(ny, ZERO); 2 * k_max + 1];
        Self {
            xi0,
            k_max,
            grid,
            components: vec![modes; n_components],
        }
    }

    /// Samples `n_components` real functions and keeps modes `|k| ≤ K`;
    /// refuses data whose energy beyond `K` exceeds [`TAIL_TOLERANCE`].
    pub fn sample(
        xi0: f64,
        k_max: usize,
        grid: Arc<SpectralGrid>,
        n_components: usize,
        f: impl Fn(f64, f64, &mut [f64]),
    ) -> Result<Self> {
        check_cell(xi0)?;
        let nx = (4 * (2 * k_max + 1)).max(16);
        let width = cell_width(xi0);
        let ny = grid.len();
        let mut values = vec![DMatrix::zeros(nx, ny); n_components];
        let mut buf = vec![0.0; n_components];
        for i in 0..nx {
            let x = width * i as f64 / nx as f64;
            for (j, &y) in grid.nodes().iter().enumerate() {
                f(x, y, &mut buf);
                for (c, v) in buf.iter().enumerate() {
                    values[c][(i, j)] = *v;
                }
            }
        }
        let mut components = Vec::with_capacity(n_components);
        let (mut kept, mut tail) = (0.0, 0.0);
        for v in &values {
            let (modes, k_energy, t_energy) = analyze(v, k_max, &grid);
            kept += k_energy;
            tail += t_energy;
            components.push(modes);
        }
        let total = kept + tail;
        if total > 0.0 && tail / total > TAIL_TOLERANCE {
            return Err(Error::Unresolved { tail: tail / total });
        }
        Ok(Self {
            xi0,
            k_max,
            grid,
            components,
        })
    }

    pub fn scalar(
        xi0: f64,
        k_max: usize,
        grid: Arc<SpectralGrid>,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        Self::sample(xi0, k_max, grid, 1, |x, y, out| out[0] = f(x, y))
    }

    /// Two-component body force `(f, g)`.
    pub fn force(
        xi0: f64,
        k_max: usize,
        grid: Arc<SpectralGrid>,
        f: impl Fn(f64, f64) -> (f64, f64),
    ) -> Result<Self> {
        Self::sample(xi0, k_max, grid, 2, |x, y, out| {
            let (a, b) = f(x, y);
            out[0] = a;
            out[1] = b;
        })
    }

    /// Modes `|k| ≤ K` of physical samples on `n ≥ 2K+1` equispaced points;
    /// anything above `K` is discarded.
    pub fn from_physical(xi0: f64, k_max: usize, grid: Arc<SpectralGrid>, values: &[DMatrix<f64>]) -> Self {
        let components = values.iter().map(|v| analyze(v, k_max, &grid).0).collect();
        Self {
            xi0,
            k_max,
            grid,
            components,
        }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn wavenumber(&self, idx: usize) -> f64 {
        (idx as f64 - self.k_max as f64) * self.xi0
    }

    pub fn mode(&self, component: usize, k: i64) -> &DVector<Complex64> {
        &self.components[component][(k + self.k_max as i64) as usize]
    }

    pub fn same_layout(&self, other: &ModalField) -> bool {
        self.xi0 == other.xi0
            && self.k_max == other.k_max
            && self.grid.degree() == other.grid.degree()
            && self.n_components() == other.n_components()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for comp in &mut out.components {
            for m in comp.iter_mut() {
                *m *= Complex64::new(s, 0.0);
            }
        }
        out
    }

    pub fn add(&self, other: &ModalField) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::Domain("fields have different discretizations".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.components.iter_mut().zip(&other.components) {
            for (ma, mb) in a.iter_mut().zip(b) {
                *ma += mb;
            }
        }
        Ok(out)
    }

    /// Translation by `dx`: `u(x) ↦ u(x - dx)`.
    pub fn shifted(&self, dx: f64) -> Self {
        let mut out = self.clone();
        for comp in &mut out.components {
            for (idx, m) in comp.iter_mut().enumerate() {
                let xi = (idx as f64 - self.k_max as f64) * self.xi0;
                *m *= Complex64::from_polar(1.0, -xi * dx);
            }
        }
        out
    }

    /// Modes of `∂ₓᵃ ∂ᵧᵇ` of one component.
    pub fn derivative(&self, component: usize, ax: usize, by: usize) -> Vec<DVector<Complex64>> {
        self.components[component]
            .iter()
            .enumerate()
            .map(|(idx, m)| {
                let ik = I * self.wavenumber(idx);
                let mut d = m.clone();
                for _ in 0..by {
                    d = self.grid.apply(1, &d);
                }
                d * ik.powu(ax as u32)
            })
            .collect()
    }

    /// `(Σ_{a+b≤m} ‖∂ₓᵃ∂ᵧᵇ u‖²)^{1/2}` over one cell, all components.
    pub fn h_norm(&self, m: usize) -> f64 {
        let width = cell_width(self.xi0);
        let mut total = 0.0;
        for c in 0..self.n_components() {
            for a in 0..=m {
                for b in 0..=(m - a) {
                    let d = self.derivative(c, a, b);
                    total += d.iter().map(|v| self.grid.norm_sq(v)).sum::<f64>();
                }
            }
        }
        (width * total).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.h_norm(0)
    }

    /// Physical samples of one component on `n` equispaced points.
    pub fn synthesize(&self, component: usize, n: usize) -> DMatrix<f64> {
        synthesize(&self.components[component], self.k_max, n)
    }

    /// `max_k ‖φ_{-k} - conj(φ_k)‖_∞` over all components.
    pub fn reality_defect(&self) -> f64 {
        let k = self.k_max;
        let mut worst: f64 = 0.0;
        for comp in &self.components {
            for j in 0..=k {
                let (p, m) = (&comp[k + j], &comp[k - j]);
                for (a, b) in p.iter().zip(m.iter()) {
                    worst = worst.max((a.conj() - b).norm());
                }
            }
        }
        worst
    }
}

fn check_cell(xi0: f64) -> Result<()> {
    if !(xi0 > 0.0 && xi0.is_finite()) {
        return Err(Error::Domain(format!("fundamental wavenumber must be positive, got {xi0}")));
    }
    Ok(())
}

/// Coefficients of modes `|k| ≤ K` from `n` equispaced samples per row,
/// with retained and discarded energies.
fn analyze(values: &DMatrix<f64>, k_max: usize, grid: &SpectralGrid) -> (Vec<DVector<Complex64>>, f64, f64) {
    let (nx, ny) = values.shape();
    let fft = FftPlanner::new().plan_fft_forward(nx);
    let mut modes = vec![DVector::from_element(ny, ZERO); 2 * k_max + 1];
    let (mut kept, mut tail) = (0.0, 0.0);
    let mut buf = vec![ZERO; nx];
    let scale = 1.0 / nx as f64;
    for j in 0..ny {
        for i in 0..nx {
            buf[i] = Complex64::new(values[(i, j)], 0.0);
        }
        fft.process(&mut buf);
        let w = grid.weights()[j];
        for (idx, c) in buf.iter().enumerate() {
            let k = if idx <= nx / 2 { idx as i64 } else { idx as i64 - nx as i64 };
            let c = c * scale;
            if k.unsigned_abs() as usize <= k_max {
                modes[(k + k_max as i64) as usize][j] = c;
                kept += w * c.norm_sqr();
            } else {
                tail += w * c.norm_sqr();
            }
        }
    }
    (modes, kept, tail)
}

pub(crate) fn synthesize(modes: &[DVector<Complex64>], k_max: usize, nx: usize) -> DMatrix<f64> {
    assert!(nx > 2 * k_max, "need more than 2K samples to represent modes up to K");
    let ny = modes[0].len();
    let fft = FftPlanner::new().plan_fft_inverse(nx);
    let mut out = DMatrix::zeros(nx, ny);
    let mut buf = vec![ZERO; nx];
    for j in 0..ny {
        buf.iter_mut().for_each(|b| *b = ZERO);
        for (idx, m) in modes.iter().enumerate() {
            let k = idx as i64 - k_max as i64;
            buf[k.rem_euclid(nx as i64) as usize] += m[j];
        }
        fft.process(&mut buf);
        for i in 0..nx {
            out[(i, j)] = buf[i].re;
        }
    }
    out
}

/// `∇q` with its Fourier modes; `qx` carries the mean gradient in mode 0.
#[derive(Debug, Clone)]
pub struct PressureGradient {
    pub modes: ModalField,
    pub qx: DMatrix<f64>,
    pub qy: DMatrix<f64>,
    pub mean_gradient: f64,
    pub curl_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ChannelField {
    pub xi0: f64,
    pub k_max: usize,
    pub grid: Arc<SpectralGrid>,
    /// Stream-function modes, index `k + K`.
    pub psi_modes: Vec<GridFunction>,
    pub x: Vec<f64>,
    /// `v[(i, j)]` at `(x_i, y_j)`.
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub q_grad: Option<PressureGradient>,
}

impl ChannelField {
    pub fn from_psi_modes(
        xi0: f64,
        k_max: usize,
        grid: Arc<SpectralGrid>,
        psi_modes: Vec<GridFunction>,
    ) -> Result<Self> {
        check_cell(xi0)?;
        if psi_modes.len() != 2 * k_max + 1 {
            return Err(Error::Domain(format!(
                "expected {} modes, got {}",
                2 * k_max + 1,
                psi_modes.len()
            )));
        }
        let nx = physical_points(k_max);
        let width = cell_width(xi0);
        let x = (0..nx).map(|i| width * i as f64 / nx as f64).collect();
        let mut field = Self {
            xi0,
            k_max,
            grid,
            psi_modes,
            x,
            v: DMatrix::zeros(0, 0),
            w: DMatrix::zeros(0, 0),
            q_grad: None,
        };
        let vel = field.velocity();
        field.v = vel.synthesize(0, nx);
        field.w = vel.synthesize(1, nx);
        Ok(field)
    }

    pub fn zero(xi0: f64, k_max: usize, grid: Arc<SpectralGrid>) -> Result<Self> {
        let modes = (0..2 * k_max + 1).map(|_| GridFunction::zeros(grid.clone())).collect();
        Self::from_psi_modes(xi0, k_max, grid, modes)
    }

    /// Stream function sampled from `psi(x, y)`; the caller guarantees the
    /// clamped wall conditions.
    pub fn from_stream_function(
        xi0: f64,
        k_max: usize,
        grid: Arc<SpectralGrid>,
        psi: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let s = ModalField::scalar(xi0, k_max, grid.clone(), psi)?;
        Self::from_stream_modes(&s)
    }

    pub fn from_stream_modes(psi: &ModalField) -> Result<Self> {
        let modes = psi.components[0]
            .iter()
            .map(|m| GridFunction::new(psi.grid.clone(), m.clone()))
            .collect::<Result<_>>()?;
        Self::from_psi_modes(psi.xi0, psi.k_max, psi.grid.clone(), modes)
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn stream_function(&self) -> ModalField {
        ModalField {
            xi0: self.xi0,
            k_max: self.k_max,
            grid: self.grid.clone(),
            components: vec![self.psi_modes.iter().map(|m| m.values().clone()).collect()],
        }
    }

    /// `(v, w) = (ψ_y, -ψ_x)` as modes.
    pub fn velocity(&self) -> ModalField {
        stream_velocity(&self.stream_function())
    }

    /// `‖(v, w)‖_{Hᵐ}` over one cell.
    pub fn h_norm(&self, m: usize) -> f64 {
        self.velocity().h_norm(m)
    }

    pub fn pressure_l2(&self) -> Option<f64> {
        self.q_grad.as_ref().map(|q| q.modes.l2_norm())
    }

    /// `‖v_x + w_y‖_∞` on the physical grid.
    pub fn divergence_max(&self) -> f64 {
        let vel = self.velocity();
        let vx = synthesize(&vel.derivative(0, 1, 0), self.k_max, self.nx());
        let wy = synthesize(&vel.derivative(1, 0, 1), self.k_max, self.nx());
        (vx + wy).amax()
    }

    /// `max_x |∫ v(x, y) dy|`.
    pub fn flux_max(&self) -> f64 {
        (0..self.nx())
            .map(|i| {
                let row: Vec<f64> = self.v.row(i).iter().copied().collect();
                self.grid.integrate_real(&row).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn reality_defect(&self) -> f64 {
        self.stream_function().reality_defect()
    }

    /// CSV with columns `x,y,v,w,qx,qy`; pressure columns are `nan` when no
    /// gradient is attached.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,v,w,qx,qy")?;
        let y = self.grid.nodes();
        for i in 0..self.nx() {
            for (j, yj) in y.iter().enumerate() {
                let (qx, qy) = match &self.q_grad {
                    Some(q) => (q.qx[(i, j)], q.qy[(i, j)]),
                    None => (f64::NAN, f64::NAN),
                };
                writeln!(
                    out,
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    self.x[i],
                    yj,
                    self.v[(i, j)],
                    self.w[(i, j)],
                    qx,
                    qy
                )?;
            }
        }
        Ok(())
    }

    pub fn header(&self, profile: &Profile) -> FieldHeader {
        let vel = self.velocity();
        FieldHeader {
            schema_version: SCHEMA_VERSION,
            profile: *profile,
            xi0: self.xi0,
            k_max: self.k_max,
            n: self.grid.degree(),
            nx: self.nx(),
            h1: vel.h_norm(1),
            h2: vel.h_norm(2),
            x0: x_norm(&vel, 0).unwrap_or(f64::NAN),
            pressure_l2: self.pressure_l2(),
            mean_pressure_gradient: self.q_grad.as_ref().map(|q| q.mean_gradient),
        }
    }
}

/// `(v, w) = (ψ_y, -ψ_x)` for a scalar stream function.
pub fn stream_velocity(psi: &ModalField) -> ModalField {
    let v = psi.derivative(0, 0, 1);
    let w = psi.derivative(0, 1, 0).into_iter().map(|m| -m).collect();
    ModalField {
        xi0: psi.xi0,
        k_max: psi.k_max,
        grid: psi.grid.clone(),
        components: vec![v, w],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldHeader {
    pub schema_version: u32,
    pub profile: Profile,
    pub xi0: f64,
    #[serde(rename = "K")]
    pub k_max: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub nx: usize,
    pub h1: f64,
    pub h2: f64,
    pub x0: f64,
    pub pressure_l2: Option<f64>,
    pub mean_pressure_gradient: Option<f64>,
}

/// Factored mode operators for every `|k| ≤ K`.
#[derive(Debug, Clone)]
pub struct ChannelSolver {
    profile: Profile,
    xi0: f64,
    k_max: usize,
    grid: Arc<SpectralGrid>,
    /// Operators for `k = 0..=K`; negative modes follow by conjugation.
    ops: Vec<ModeOperator>,
}

impl ChannelSolver {
    pub fn new(profile: Profile, xi0: f64, k_max: usize, grid: Arc<SpectralGrid>) -> Result<Self> {
        check_cell(xi0)?;
        if !profile.satisfies_abc() {
            return Err(Error::Inadmissible {
                a: profile.a(),
                b: profile.b(),
                c: profile.c(),
            });
        }
        let ops = (0..=k_max)
            .into_par_iter()
            .map(|k| {
                if k == 0 {
                    ModeOperator::zero_mode(grid.clone())
                } else {
                    ModeOperator::new(profile, k as f64 * xi0, grid.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            profile,
            xi0,
            k_max,
            grid,
            ops,
        })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn xi0(&self) -> f64 {
        self.xi0
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    fn check_force(&self, force: &ModalField) -> Result<()> {
        if force.n_components() != 2
            || force.xi0 != self.xi0
            || force.k_max != self.k_max
            || force.grid.degree() != self.grid.degree()
        {
            return Err(Error::Domain(
                "force must have two components on the solver's discretization".into(),
            ));
        }
        Ok(())
    }

    /// Stream-function modes solving the linear problem with the given force.
    pub fn solve_modes(&self, force: &ModalField) -> Result<Vec<GridFunction>> {
        self.check_force(force)?;
        let k_max = self.k_max;
        let upper = self
            .ops
            .par_iter()
            .enumerate()
            .map(|(k, op)| {
                let idx = k_max + k;
                let h = mode_rhs(op.xi(), &force.components[0][idx], &force.components[1][idx], &self.grid);
                op.solve(&h).map(|s| s.phi)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut modes = Vec::with_capacity(2 * k_max + 1);
        modes.extend(upper[1..].iter().rev().map(GridFunction::conj));
        // a real field has a real mean mode
        let mean = upper[0].values().map(|c| Complex64::new(c.re, 0.0));
        modes.push(GridFunction::new(self.grid.clone(), mean)?);
        modes.extend(upper.into_iter().skip(1));
        Ok(modes)
    }

    /// Solves and attaches the pressure gradient.
    pub fn solve(&self, force: &ModalField) -> Result<ChannelField> {
        let modes = self.solve_modes(force)?;
        let mut field = ChannelField::from_psi_modes(self.xi0, self.k_max, self.grid.clone(), modes)?;
        field.q_grad = Some(recover_pressure_gradient(&self.profile, &field, force, None)?);
        Ok(field)
    }
}

/// Solves the linear problem with force `(f, g)` given as modes.
pub fn solve_linearized(
    p: &Profile,
    force: &ModalField,
    grid: &Arc<SpectralGrid>,
    k_max: usize,
) -> Result<ChannelField> {
    ChannelSolver::new(*p, force.xi0, k_max, grid.clone())?.solve(force)
}

/// `∇q = f + Δv - (v·∇)u* - (u*·∇)v - a`, where `a` is an optional
/// advection term `(v·∇)v` supplied as modes; with the curl of the result
/// relative to the size of its two halves.
pub fn recover_pressure_gradient(
    p: &Profile,
    field: &ChannelField,
    force: &ModalField,
    advection: Option<&ModalField>,
) -> Result<PressureGradient> {
    if force.n_components() != 2 || force.k_max != field.k_max || force.xi0 != field.xi0 {
        return Err(Error::Domain("force does not match the field discretization".into()));
    }
    let grid = &field.grid;
    let vel = field.velocity();
    let y = grid.nodes();
    let fy: Vec<f64> = y.iter().map(|&t| p.f(t)).collect();
    let fpy: Vec<f64> = y.iter().map(|&t| p.fp(t)).collect();
    let nk = 2 * field.k_max + 1;
    let mut qx = Vec::with_capacity(nk);
    let mut qy = Vec::with_capacity(nk);
    for idx in 0..nk {
        let xi = vel.wavenumber(idx);
        let (v, w) = (&vel.components[0][idx], &vel.components[1][idx]);
        let lap = |u: &DVector<Complex64>| grid.apply(2, u) - u * Complex64::new(xi * xi, 0.0);
        let mut ax = force.components[0][idx].clone() + lap(v);
        let mut ay = force.components[1][idx].clone() + lap(w);
        for j in 0..grid.len() {
            ax[j] -= I * xi * fy[j] * v[j] + fpy[j] * w[j];
            ay[j] -= I * xi * fy[j] * w[j];
        }
        if let Some(a) = advection {
            ax -= &a.components[0][idx];
            ay -= &a.components[1][idx];
        }
        qx.push(ax);
        qy.push(ay);
    }
    let modes = ModalField {
        xi0: field.xi0,
        k_max: field.k_max,
        grid: grid.clone(),
        components: vec![qx, qy],
    };
    let dqx = modes.derivative(0, 0, 1);
    let dqy = modes.derivative(1, 1, 0);
    let (mut curl, mut size) = (0.0, 0.0);
    for (a, b) in dqx.iter().zip(&dqy) {
        curl += grid.norm_sq(&(a - b));
        size += grid.norm_sq(a).sqrt() + grid.norm_sq(b).sqrt();
    }
    let curl_residual = if curl == 0.0 { 0.0 } else { curl.sqrt() / size };
    let mean_gradient = grid.integrate(&modes.components[0][field.k_max]).re / 2.0;
    let nx = field.nx();
    Ok(PressureGradient {
        qx: modes.synthesize(0, nx),
        qy: modes.synthesize(1, nx),
        modes,
        mean_gradient,
        curl_residual,
    })
}

/// Hermitian matrix `G_{kl} = Σ ∫ wt(y) Q_k(y) conj(Q_l(y)) dy` summed over the
/// listed quantities, so that `∫_a^b ∫ wt Σ|Q|² = Re Σ G_{kl} E_{k-l}(a, b)`.
struct WindowGram {
    xi0: f64,
    k_max: usize,
    g: DMatrix<Complex64>,
}

impl WindowGram {
    fn new(xi0: f64, k_max: usize, grid: &SpectralGrid, weight: &[f64], quantities: &[Vec<DVector<Complex64>>]) -> Self {
        let nk = 2 * k_max + 1;
        let w: Vec<f64> = grid.weights().iter().zip(weight).map(|(a, b)| a * b).collect();
        let mut g = DMatrix::from_element(nk, nk, ZERO);
        for q in quantities {
            for k in 0..nk {
                for l in 0..nk {
                    let mut s = ZERO;
                    for (j, wj) in w.iter().enumerate() {
                        s += q[k][j] * q[l][j].conj() * *wj;
                    }
                    g[(k, l)] += s;
                }
            }
        }
        Self { xi0, k_max, g }
    }

    fn window(&self, a: f64, b: f64) -> f64 {
        let nk = 2 * self.k_max + 1;
        let mut e = vec![ZERO; 2 * nk - 1];
        for (i, slot) in e.iter_mut().enumerate() {
            let d = i as f64 - (nk as f64 - 1.0);
            *slot = if d == 0.0 {
                Complex64::new(b - a, 0.0)
            } else {
                let s = d * self.xi0;
                (Complex64::from_polar(1.0, s * b) - Complex64::from_polar(1.0, s * a)) / (I * s)
            };
        }
        let mut total = ZERO;
        for k in 0..nk {
            for l in 0..nk {
                total += self.g[(k, l)] * e[k + nk - 1 - l];
            }
        }
        total.re
    }
}

fn sobolev_quantities(field: &ModalField, m: usize) -> Vec<Vec<DVector<Complex64>>> {
    let mut out = Vec::new();
    for c in 0..field.n_components() {
        for a in 0..=m {
            for b in 0..=(m - a) {
                out.push(field.derivative(c, a, b));
            }
        }
    }
    out
}

/// `sup_a ‖u‖_{Hᵐ((a, a+1) × (-1, 1))}`, offsets `a` on the physical grid,
/// windows wrapping around the cell.
pub fn x_norm(field: &ModalField, m: usize) -> Result<f64> {
    if m > 2 {
        return Err(Error::Domain(format!("local norms are defined for m ≤ 2, got {m}")));
    }
    let ones = vec![1.0; field.grid.len()];
    let gram = WindowGram::new(field.xi0, field.k_max, &field.grid, &ones, &sobolev_quantities(field, m));
    let nx = physical_points(field.k_max);
    let width = cell_width(field.xi0);
    let best = (0..nx)
        .map(|i| {
            let a = width * i as f64 / nx as f64;
            gram.window(a, a + 1.0)
        })
        .fold(0.0, f64::max);
    Ok(best.max(0.0).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// `(L, Γ(L))`
    pub gamma_l: Vec<(f64, f64)>,
    pub gamma_monotone: bool,
    /// `∫_{Q_L}(σ_y² + σ_x² + ψ_xx² + 2ψ_xy² + ψ_yy²) / Γ(L)` per `L`.
    pub control_ratio: Vec<f64>,
    pub x_norms: [f64; 3],
    pub h_norms: [f64; 2],
}

/// `Γ(L) = -6A∫σ_x² - 12A∫σ_y² + ∫F|∇²σ|²` over `Q_L = (-L, L) × (-1, 1)`
/// with `ψ = Fσ`; windows wider than the cell saturate at the full cell.
pub fn gamma_energy(p: &Profile, field: &ChannelField, l_list: &[f64]) -> Result<EnergyReport> {
    if !p.satisfies_abc() {
        return Err(Error::Inadmissible {
            a: p.a(),
            b: p.b(),
            c: p.c(),
        });
    }
    let grid = &field.grid;
    let sigma_modes: Vec<DVector<Complex64>> = field
        .psi_modes
        .iter()
        .map(|phi| sigma_from_phi(phi, &phi.derivative(1), p).map(|s| s.into_values()))
        .collect::<Result<_>>()?;
    let sigma = ModalField {
        xi0: field.xi0,
        k_max: field.k_max,
        grid: grid.clone(),
        components: vec![sigma_modes],
    };
    let psi = field.stream_function();
    let ny = grid.len();
    let ones = vec![1.0; ny];
    let fw: Vec<f64> = grid.nodes().iter().map(|&y| p.f(y)).collect();
    let (sx, sy) = (sigma.derivative(0, 1, 0), sigma.derivative(0, 0, 1));
    let g_sx = WindowGram::new(field.xi0, field.k_max, grid, &ones, std::slice::from_ref(&sx));
    let g_sy = WindowGram::new(field.xi0, field.k_max, grid, &ones, std::slice::from_ref(&sy));
    let sxy = sigma.derivative(0, 1, 1);
    let hess = WindowGram::new(
        field.xi0,
        field.k_max,
        grid,
        &fw,
        &[sigma.derivative(0, 2, 0), sxy.clone(), sxy, sigma.derivative(0, 0, 2)],
    );
    let pxy = psi.derivative(0, 1, 1);
    let control = WindowGram::new(
        field.xi0,
        field.k_max,
        grid,
        &ones,
        &[sy, sx, psi.derivative(0, 2, 0), pxy.clone(), pxy, psi.derivative(0, 0, 2)],
    );
    let width = cell_width(field.xi0);
    let mut gamma_l = Vec::with_capacity(l_list.len());
    let mut control_ratio = Vec::with_capacity(l_list.len());
    for &l in l_list {
        if !(l >= 0.0) {
            return Err(Error::Domain(format!("window half-width must be nonnegative, got {l}")));
        }
        let (a, b) = if 2.0 * l >= width { (0.0, width) } else { (-l, l) };
        let gamma = -6.0 * p.a() * g_sx.window(a, b) - 12.0 * p.a() * g_sy.window(a, b) + hess.window(a, b);
        let ctrl = control.window(a, b);
        gamma_l.push((l, gamma));
        control_ratio.push(if gamma > 0.0 { ctrl / gamma } else { 0.0 });
    }
    let mut order: Vec<usize> = (0..gamma_l.len()).collect();
    order.sort_by(|&i, &j| gamma_l[i].0.total_cmp(&gamma_l[j].0));
    let gamma_monotone = order.windows(2).all(|w| {
        let (lo, hi) = (gamma_l[w[0]].1, gamma_l[w[1]].1);
        hi >= lo - 1e-12 * lo.abs().max(hi.abs())
    });
    let vel = field.velocity();
    Ok(EnergyReport {
        gamma_l,
        gamma_monotone,
        control_ratio,
        x_norms: [x_norm(&vel, 0)?, x_norm(&vel, 1)?, x_norm(&vel, 2)?],
        h_norms: [vel.h_norm(1), vel.h_norm(2)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum SymmetryClass {
    /// `v` x-even, `w` x-odd: `ψ` x-even.
    X1,
    /// `v` x-odd, `w` x-even: `ψ` x-odd.
    X2,
    /// `v` y-even, `w` y-odd: `ψ` y-odd.
    Y1,
    /// `v` y-odd, `w` y-even: `ψ` y-even.
    Y2,
}

impl std::str::FromStr for SymmetryClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "X1" => Ok(Self::X1),
            "X2" => Ok(Self::X2),
            "Y1" => Ok(Self::Y1),
            "Y2" => Ok(Self::Y2),
            other => Err(Error::Domain(format!("unknown symmetry class {other}"))),
        }
    }
}

/// Parity projection of stream-function modes, in place.
pub fn project_modes(modes: &mut [DVector<Complex64>], class: SymmetryClass) {
    let nk = modes.len();
    match class {
        SymmetryClass::X1 | SymmetryClass::X2 => {
            let sign = if class == SymmetryClass::X1 { 1.0 } else { -1.0 };
            let orig = modes.to_vec();
            for idx in 0..nk {
                modes[idx] = (&orig[idx] + &orig[nk - 1 - idx] * Complex64::new(sign, 0.0)) * Complex64::new(0.5, 0.0);
            }
        }
        SymmetryClass::Y1 | SymmetryClass::Y2 => {
            let sign = if class == SymmetryClass::Y2 { 1.0 } else { -1.0 };
            for m in modes.iter_mut() {
                let n = m.len();
                let orig = m.clone();
                for j in 0..n {
                    m[j] = (orig[j] + orig[n - 1 - j] * sign) * 0.5;
                }
            }
        }
    }
}

/// Component of the velocity in the given parity class; the pressure is
/// dropped because the projection of a solution is not a solution.
pub fn symmetry_project(field: &ChannelField, class: SymmetryClass) -> Result<ChannelField> {
    let mut modes: Vec<DVector<Complex64>> = field.psi_modes.iter().map(|m| m.values().clone()).collect();
    project_modes(&mut modes, class);
    let psi = modes
        .into_iter()
        .map(|m| GridFunction::new(field.grid.clone(), m))
        .collect::<Result<_>>()?;
    ChannelField::from_psi_modes(field.xi0, field.k_max, field.grid.clone(), psi)
}

/// Largest coefficient of the part of `modes` outside `class`, relative to
/// the largest coefficient overall.
pub fn symmetry_defect(modes: &[DVector<Complex64>], class: SymmetryClass) -> f64 {
    let mut proj = modes.to_vec();
    project_modes(&mut proj, class);
    let scale = modes.iter().map(|m| m.camax()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let off = modes
        .iter()
        .zip(&proj)
        .map(|(a, b)| (a - b).camax())
        .fold(0.0, f64::max);
    off / scale
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cancellation {
    /// `∫ F ψ_yy ψ_x`
    pub i1: f64,
    /// `∫ (F ψ_xx - 6Aψ) ψ_x`
    pub i2: f64,
    /// Cauchy–Schwarz bound on either integral.
    pub scale: f64,
}

/// Both integrals over one cell, for any stream function.
pub fn cancellation_integrals(p: &Profile, psi: &ModalField) -> Cancellation {
    let grid = &psi.grid;
    let width = cell_width(psi.xi0);
    let psi_x = psi.derivative(0, 1, 0);
    let psi_yy = psi.derivative(0, 0, 2);
    let psi_xx = psi.derivative(0, 2, 0);
    let fy: Vec<f64> = grid.nodes().iter().map(|&y| p.f(y)).collect();
    let weight = |u: &DVector<Complex64>| DVector::from_fn(u.len(), |j, _| u[j] * fy[j]);
    let (mut i1, mut i2, mut n1, mut n2, mut nx) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for idx in 0..psi_x.len() {
        let a = weight(&psi_yy[idx]);
        let b = weight(&psi_xx[idx]) - &psi.components[0][idx] * Complex64::new(6.0 * p.a(), 0.0);
        // real fields: ∫ u w dx = width Σ_k û_k conj(ŵ_k)
        i1 += grid.inner(&a, &psi_x[idx]).re;
        i2 += grid.inner(&b, &psi_x[idx]).re;
        n1 += grid.norm_sq(&a);
        n2 += grid.norm_sq(&b);
        nx += grid.norm_sq(&psi_x[idx]);
    }
    Cancellation {
        i1: width * i1,
        i2: width * i2,
        scale: width * (n1.sqrt().max(n2.sqrt())) * nx.sqrt(),
    }
}

/// The cancellation integrals for an even profile and a stream function of
/// pure x-parity; both should vanish.
pub fn check_symmetry_cancellation(p: &Profile, psi: &ModalField) -> Result<Cancellation> {
    if p.b() != 0.0 {
        return Err(Error::Precondition(format!("profile must be even (B = 0), got B = {}", p.b())));
    }
    if psi.n_components() != 1 {
        return Err(Error::Precondition("expected a scalar stream function".into()));
    }
    let modes = &psi.components[0];
    let pure = [SymmetryClass::X1, SymmetryClass::X2]
        .iter()
        .any(|&c| symmetry_defect(modes, c) <= 1e-12);
    if !pure {
        return Err(Error::Precondition("stream function is neither x-even nor x-odd".into()));
    }
    Ok(cancellation_integrals(p, psi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<SpectralGrid> {
        SpectralGrid::shared(n).unwrap()
    }

    #[test]
    fn constant_field_local_norm() {
        let f = ModalField::scalar(1.0, 4, grid(16), |_, _| 3.0).unwrap();
        assert!((x_norm(&f, 0).unwrap() - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn x_independent_field_local_norm() {
        let f = ModalField::scalar(0.5, 3, grid(24), |_, y| (1.0 - y * y) * y).unwrap();
        // ∫ (y - y³)² = 16/105, ∫ (1 - 3y²)² = 8/5 over [-1, 1], strip width 1
        let expect = (16.0 / 105.0 + 8.0 / 5.0f64).sqrt();
        assert!((x_norm(&f, 1).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn undersampled_force_is_refused() {
        let r = ModalField::force(1.0, 2, grid(16), |x, _| ((5.0 * x).sin(), 0.0));
        assert!(matches!(r, Err(Error::Unresolved { .. })));
    }

    #[test]
    fn projections_split_the_field() {
        let g = grid(20);
        let psi = ModalField::scalar(1.0, 3, g, |x, y| {
            let b = (1.0 - y * y).powi(2);
            b * (x.cos() + 0.4 * (2.0 * x).sin() + 0.2 * y + 0.1)
        })
        .unwrap();
        let field = ChannelField::from_stream_modes(&psi).unwrap();
        for (a, b) in [(SymmetryClass::X1, SymmetryClass::X2), (SymmetryClass::Y1, SymmetryClass::Y2)] {
            let pa = symmetry_project(&field, a).unwrap();
            let pb = symmetry_project(&field, b).unwrap();
            assert!((&pa.v + &pb.v - &field.v).amax() < 1e-13);
            assert!((&pa.w + &pb.w - &field.w).amax() < 1e-13);
            let twice = symmetry_project(&pa, a).unwrap();
            assert!((&twice.v - &pa.v).amax() <= 1e-14);
        }
    }

    #[test]
    fn mixed_parity_rejected() {
        let g = grid(16);
        let p = Profile::poiseuille_for_flux(4.0).unwrap();
        let psi = ModalField::scalar(1.0, 2, g, |x, y| (1.0 - y * y).powi(2) * (x.cos() + x.sin())).unwrap();
        assert!(matches!(check_symmetry_cancellation(&p, &psi), Err(Error::Precondition(_))));
        let skew = Profile::new(-1.0, 0.5, 4.0).unwrap();
        let even = ModalField::scalar(1.0, 2, grid(16), |x, y| (1.0 - y * y).powi(2) * x.cos()).unwrap();
        assert!(matches!(check_symmetry_cancellation(&skew, &even), Err(Error::Precondition(_))));
    }
}

//! Non-homogeneous Orr–Sommerfeld boundary-value problem at one wavenumber,
//!
//! ```text
//! φ'''' - 2ξ²φ'' + ξ⁴φ - iξ[F(φ'' - ξ²φ) - 6Aφ] = h,   φ(±1) = φ'(±1) = 0,
//! ```
//!
//! solved by Chebyshev collocation with the four clamped conditions bordered
//! into rows `0, 1, N-1, N`, plus the energy diagnostics built on the
//! substitution `σ = φ / F`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::LuSolver;
use crate::profiles::Profile;
use crate::spectral::{GridFunction, SpectralGrid};

/// Systems whose equilibrated condition estimate exceeds this are refused.
pub const DEFAULT_MAX_CONDITION: f64 = 1e13;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Assembled and factored mode operator; reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    profile: Profile,
    xi: f64,
    grid: Arc<SpectralGrid>,
    lu: LuSolver,
    /// Unbordered operator, kept for residuals.
    full: DMatrix<Complex64>,
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub xi: f64,
    pub phi: GridFunction,
    pub dphi: GridFunction,
    pub d2phi: GridFunction,
    /// Quadrature L² norm of the interior residual.
    pub residual_norm: f64,
    /// `∫|φ''|² + 2ξ²|φ'|² + ξ⁴|φ|²`
    pub lhs_energy: f64,
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub struct SigmaDiagnostics {
    pub sigma: GridFunction,
    pub boundary_ok: bool,
    /// `F'(1)|σ'(1)|² - F'(-1)|σ'(-1)|²`, nonpositive under the no-reversal condition.
    pub a00_value: f64,
    pub poincare_ratio: f64,
    /// `-12A∫|σ'|² - 6Aξ²∫|σ|² + ∫F(|σ''|² + 2ξ²|σ'|² + ξ⁴|σ|²)`
    pub energy_lhs: f64,
    /// `∫(|σ'|² + ξ²|σ|² + |φ''|² + 2ξ²|φ'|² + ξ⁴|φ|²) / energy_lhs`
    pub coercivity_ratio: f64,
}

/// Right-hand side of the σ-energy inequality for a given forcing.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ForcingPairing {
    /// `Re ∫ h σ̄`
    pub re_h_sigma: f64,
    /// `‖h‖_{H⁻¹} ‖σ'‖`
    pub dual_bound: f64,
}

impl ModeOperator {
    pub fn new(profile: Profile, xi: f64, grid: Arc<SpectralGrid>) -> Result<Self> {
        Self::with_max_condition(profile, xi, grid, DEFAULT_MAX_CONDITION)
    }

    pub fn with_max_condition(
        profile: Profile,
        xi: f64,
        grid: Arc<SpectralGrid>,
        max_cond: f64,
    ) -> Result<Self> {
        if !xi.is_finite() {
            return Err(Error::Domain(format!("wavenumber must be finite, got {xi}")));
        }
        let full = assemble(&profile, xi, &grid);
        let lu = LuSolver::new(border(full.clone(), &grid), max_cond)?;
        Ok(Self {
            profile,
            xi,
            grid,
            lu,
            full,
        })
    }

    /// `φ'''' = h` with clamped ends: the `ξ = 0` reduction, independent of the profile.
    pub fn zero_mode(grid: Arc<SpectralGrid>) -> Result<Self> {
        // any nonzero profile gives the same operator at ξ = 0
        let p = Profile::new(0.0, 0.0, 1.0)?;
        Self::with_max_condition(p, 0.0, grid, f64::INFINITY)
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn condition_estimate(&self) -> f64 {
        self.lu.condition_estimate()
    }

    /// Applies the (unbordered) operator to nodal values.
    pub fn apply(&self, phi: &DVector<Complex64>) -> DVector<Complex64> {
        &self.full * phi
    }

    pub fn solve(&self, h: &GridFunction) -> Result<ModeSolution> {
        if h.grid().len() != self.grid.len() {
            return Err(Error::Domain("forcing lives on a different grid".into()));
        }
        self.solve_values(h.values())
    }

    pub fn solve_values(&self, h: &DVector<Complex64>) -> Result<ModeSolution> {
        let n = self.grid.degree();
        let mut rhs = h.clone();
        for &r in &[0, 1, n - 1, n] {
            rhs[r] = Complex64::new(0.0, 0.0);
        }
        let phi = self.lu.solve(&rhs);

        // rows carrying boundary conditions do not collocate the equation
        let mut res = &self.full * &phi - h;
        for &r in &[0, 1, n - 1, n] {
            res[r] = Complex64::new(0.0, 0.0);
        }
        let residual_norm = self.grid.norm_sq(&res).sqrt();

        let phi = GridFunction::new(self.grid.clone(), phi)?;
        let dphi = phi.derivative(1);
        let d2phi = phi.derivative(2);
        let xi2 = self.xi * self.xi;
        let g = &self.grid;
        let lhs_energy = g.norm_sq(d2phi.values())
            + 2.0 * xi2 * g.norm_sq(dphi.values())
            + xi2 * xi2 * g.norm_sq(phi.values());
        Ok(ModeSolution {
            xi: self.xi,
            phi,
            dphi,
            d2phi,
            residual_norm,
            lhs_energy,
            condition: self.lu.condition_estimate(),
        })
    }
}

/// Unbordered collocation matrix of the mode operator.
fn assemble(p: &Profile, xi: f64, grid: &SpectralGrid) -> DMatrix<Complex64> {
    let np = grid.len();
    let (d2, d4) = (grid.diff(2), grid.diff(4));
    let xi2 = xi * xi;
    let six_a = 6.0 * p.a();
    let nodes = grid.nodes();
    DMatrix::from_fn(np, np, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        let f = p.f(nodes[r]);
        let real = d4[(r, c)] - 2.0 * xi2 * d2[(r, c)] + xi2 * xi2 * id;
        let bracket = f * (d2[(r, c)] - xi2 * id) - six_a * id;
        Complex64::new(real, 0.0) - I * xi * bracket
    })
}

/// Replaces rows `0, N` with `φ(±1) = 0` and rows `1, N-1` with `φ'(±1) = 0`.
fn border(mut m: DMatrix<Complex64>, grid: &SpectralGrid) -> DMatrix<Complex64> {
    let n = grid.degree();
    let d1 = grid.diff(1);
    for c in 0..=n {
        m[(0, c)] = Complex64::new(if c == 0 { 1.0 } else { 0.0 }, 0.0);
        m[(n, c)] = Complex64::new(if c == n { 1.0 } else { 0.0 }, 0.0);
        m[(1, c)] = Complex64::new(d1[(0, c)], 0.0);
        m[(n - 1, c)] = Complex64::new(d1[(n, c)], 0.0);
    }
    m
}

/// Solves the mode problem at `xi ≠ 0`.
pub fn solve_os_mode(
    p: &Profile,
    xi: f64,
    h: &GridFunction,
    grid: &Arc<SpectralGrid>,
) -> Result<ModeSolution> {
    if xi == 0.0 {
        return Err(Error::Domain("wavenumber must be nonzero; use solve_os_zero_mode".into()));
    }
    ModeOperator::new(*p, xi, grid.clone())?.solve(h)
}

pub fn solve_os_zero_mode(h: &GridFunction, grid: &Arc<SpectralGrid>) -> Result<ModeSolution> {
    ModeOperator::zero_mode(grid.clone())?.solve(h)
}

/// Mode forcing `iξ ĝ - f̂'` produced by a body force with Fourier
/// coefficients `f̂` (streamwise) and `ĝ` (wall-normal).
pub fn mode_rhs(
    xi: f64,
    f_hat: &DVector<Complex64>,
    g_hat: &DVector<Complex64>,
    grid: &Arc<SpectralGrid>,
) -> GridFunction {
    let df = grid.apply(1, f_hat);
    let vals = g_hat * (I * xi) - df;
    GridFunction::new(grid.clone(), vals).expect("force lives on the grid")
}

/// `(lhs_energy / ‖h‖²_{H⁻¹}, lhs_energy / (ξ⁻²‖h‖²))`, zeros for `h = 0`.
pub fn apriori_ratio(sol: &ModeSolution, h: &GridFunction) -> (f64, f64) {
    let hl2 = h.l2_norm();
    if hl2 == 0.0 {
        return (0.0, 0.0);
    }
    let hm1 = h.h_minus1_norm();
    let r_hminus1 = sol.lhs_energy / (hm1 * hm1);
    let r_l2 = sol.lhs_energy * sol.xi * sol.xi / (hl2 * hl2);
    (r_hminus1, r_l2)
}

/// `lhs_energy / min(‖h‖²_{H⁻¹}, ξ⁻²‖h‖²)`, the quantity the a priori
/// estimate bounds by a constant independent of `ξ`; equals the larger of
/// the two [`apriori_ratio`] components.
pub fn estimate_ratio(sol: &ModeSolution, h: &GridFunction) -> f64 {
    let (a, b) = apriori_ratio(sol, h);
    a.max(b)
}

/// Statistics of the a priori ratios over a set of wavenumbers, worst case
/// over the forcings.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UniformitySweep {
    /// Largest [`estimate_ratio`].
    pub max_ratio: f64,
    /// Largest max/median of [`estimate_ratio`] across `ξ` for one forcing.
    pub spread: f64,
    /// Largest `min(r_hminus1, r_l2)`.
    pub max_min_ratio: f64,
    /// Largest max/median of `min(r_hminus1, r_l2)` across `ξ`.
    pub min_ratio_spread: f64,
    pub max_relative_residual: f64,
}

/// `n` wavenumbers spaced logarithmically over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo; n];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Smooth forcing `Σ cₖ Tₖ(y)`, `k < 8`, with complex coefficients drawn
/// uniformly from the unit square and damped by `(1+k)⁻²`.
pub fn random_smooth_forcing(rng: &mut impl rand::Rng, grid: &Arc<SpectralGrid>) -> GridFunction {
    let c: Vec<Complex64> = (0..8)
        .map(|k| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (1.0 + k as f64).powi(2))
        .collect();
    GridFunction::from_fn(grid.clone(), |y| {
        let t = y.clamp(-1.0, 1.0).acos();
        c.iter().enumerate().map(|(k, ck)| ck * (k as f64 * t).cos()).sum()
    })
}

pub fn uniformity_sweep(p: &Profile, xis: &[f64], forcings: &[GridFunction], grid: &Arc<SpectralGrid>) -> Result<UniformitySweep> {
    if xis.is_empty() || forcings.is_empty() {
        return Err(Error::Domain("uniformity sweep needs wavenumbers and forcings".into()));
    }
    let ops = xis
        .iter()
        .map(|&xi| ModeOperator::new(*p, xi, grid.clone()))
        .collect::<Result<Vec<_>>>()?;
    let top_and_median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[v.len() - 1], v[v.len() / 2])
    };
    let mut out = UniformitySweep {
        max_ratio: 0.0,
        spread: 0.0,
        max_min_ratio: 0.0,
        min_ratio_spread: 0.0,
        max_relative_residual: 0.0,
    };
    for h in forcings {
        let hl2 = h.l2_norm();
        let (mut ratio, mut lesser) = (Vec::new(), Vec::new());
        for op in &ops {
            let sol = op.solve(h)?;
            let (a, b) = apriori_ratio(&sol, h);
            ratio.push(a.max(b));
            lesser.push(a.min(b));
            if hl2 > 0.0 {
                out.max_relative_residual = out.max_relative_residual.max(sol.residual_norm / hl2);
            }
        }
        let (top, mid) = top_and_median(&mut ratio);
        out.max_ratio = out.max_ratio.max(top);
        out.spread = out.spread.max(top / mid);
        let (top, mid) = top_and_median(&mut lesser);
        out.max_min_ratio = out.max_min_ratio.max(top);
        out.min_ratio_spread = out.min_ratio_spread.max(top / mid);
    }
    Ok(out)
}

/// `σ = φ / F` with the wall limit rule and its energy diagnostics.
pub fn sigma_diagnostics(sol: &ModeSolution, p: &Profile) -> Result<SigmaDiagnostics> {
    if !p.satisfies_abc() {
        return Err(Error::Inadmissible {
            a: p.a(),
            b: p.b(),
            c: p.c(),
        });
    }
    let grid = sol.phi.grid().clone();
    let sigma = sigma_from_phi(&sol.phi, &sol.dphi, p)?;
    let s1 = sigma.derivative(1);
    let s2 = sigma.derivative(2);
    let n = grid.degree();

    let scale = sol.phi.max_abs().max(f64::MIN_POSITIVE);
    let fmax = p.f(-1.0).abs().max(p.f(1.0).abs()).max(p.f(0.0).abs());
    let tol = 1e-8 * scale / fmax.max(1e-300);
    let boundary_ok = sigma.values()[0].norm() <= tol && sigma.values()[n].norm() <= tol;

    let a00_value = p.fp(1.0) * s1.values()[0].norm_sqr() - p.fp(-1.0) * s1.values()[n].norm_sqr();

    let xi2 = sol.xi * sol.xi;
    let s0_sq = grid.norm_sq(sigma.values());
    let s1_sq = grid.norm_sq(s1.values());
    let poincare_ratio = s1_sq / s0_sq;

    let weighted: f64 = grid
        .weights()
        .iter()
        .zip(grid.nodes())
        .enumerate()
        .map(|(j, (w, &y))| {
            w * p.f(y)
                * (s2.values()[j].norm_sqr()
                    + 2.0 * xi2 * s1.values()[j].norm_sqr()
                    + xi2 * xi2 * sigma.values()[j].norm_sqr())
        })
        .sum();
    let energy_lhs = -12.0 * p.a() * s1_sq - 6.0 * p.a() * xi2 * s0_sq + weighted;
    let controlled = s1_sq + xi2 * s0_sq + sol.lhs_energy;
    let coercivity_ratio = if energy_lhs > 0.0 {
        controlled / energy_lhs
    } else {
        f64::INFINITY
    };

    Ok(SigmaDiagnostics {
        sigma,
        boundary_ok,
        a00_value,
        poincare_ratio,
        energy_lhs,
        coercivity_ratio,
    })
}

impl SigmaDiagnostics {
    pub fn forcing_pairing(&self, h: &GridFunction) -> ForcingPairing {
        let g = self.sigma.grid();
        let re_h_sigma = g.inner(h.values(), self.sigma.values()).re;
        let ds = self.sigma.derivative(1);
        ForcingPairing {
            re_h_sigma,
            dual_bound: h.h_minus1_norm() * ds.l2_norm(),
        }
    }
}

/// Divides by `F` at interior nodes; at a wall where `F` vanishes the
/// L'Hôpital value `φ'/F'` is used.
pub fn sigma_from_phi(phi: &GridFunction, dphi: &GridFunction, p: &Profile) -> Result<GridFunction> {
    let grid = phi.grid().clone();
    let n = grid.degree();
    let nodes = grid.nodes();
    let mut vals = phi.values().clone();
    for j in 0..=n {
        let y = nodes[j];
        let f = p.f(y);
        if j == 0 || j == n {
            if f != 0.0 {
                vals[j] = phi.values()[j] / f;
            } else if p.fp(y) != 0.0 {
                vals[j] = dphi.values()[j] / p.fp(y);
            } else {
                return Err(Error::Precondition(format!(
                    "F and F' both vanish at y = {y}; sigma is undefined"
                )));
            }
        } else {
            if f <= 0.0 {
                return Err(Error::Inadmissible {
                    a: p.a(),
                    b: p.b(),
                    c: p.c(),
                });
            }
            vals[j] = phi.values()[j] / f;
        }
    }
    GridFunction::new(grid, vals)
}

/// `∫|σ'|² / ∫|σ|²` for any nodal σ.
pub fn poincare_ratio(sigma: &GridFunction) -> f64 {
    let g = sigma.grid();
    g.norm_sq(sigma.derivative(1).values()) / g.norm_sq(sigma.values())
}

/// Sharp Poincaré constant for `H¹₀(-1, 1)`.
pub const POINCARE_CONSTANT: f64 = PI * PI / 4.0;

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    /// Left side of the mode equation applied to φ* = (1-y²)² analytically.
    pub(crate) fn manufactured_rhs(p: &Profile, xi: f64, y: f64) -> Complex64 {
        let phi = (1.0 - y * y).powi(2);
        let d2 = 12.0 * y * y - 4.0;
        let d4 = 24.0;
        let xi2 = xi * xi;
        c(d4 - 2.0 * xi2 * d2 + xi2 * xi2 * phi) - I * xi * (p.f(y) * (d2 - xi2 * phi) - 6.0 * p.a() * phi)
    }

    #[test]
    fn manufactured_quartic_recovered() {
        let g = SpectralGrid::shared(48).unwrap();
        let p = Profile::poiseuille_for_flux(4.0).unwrap();
        for xi in [0.5, 1.0, 5.0, -2.0] {
            let h = GridFunction::from_fn(g.clone(), |y| manufactured_rhs(&p, xi, y));
            let sol = solve_os_mode(&p, xi, &h, &g).unwrap();
            let exact = GridFunction::from_real_fn(g.clone(), |y| (1.0 - y * y).powi(2));
            let err = (&sol.phi - &exact).max_abs();
            assert!(err <= 1e-10, "xi={xi}: {err:e}");
            assert!(sol.residual_norm <= 1e-8 * h.l2_norm());
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let g = SpectralGrid::shared(32).unwrap();
        let p = Profile::new(-0.5, 0.3, 2.0).unwrap();
        let h = GridFunction::zeros(g.clone());
        let sol = solve_os_mode(&p, 1.7, &h, &g).unwrap();
        assert_eq!(sol.phi.max_abs(), 0.0);
        assert_eq!(apriori_ratio(&sol, &h), (0.0, 0.0));
    }

    #[test]
    fn zero_xi_rejected() {
        let g = SpectralGrid::shared(16).unwrap();
        let p = Profile::poiseuille_for_flux(4.0).unwrap();
        let h = GridFunction::zeros(g.clone());
        assert!(matches!(solve_os_mode(&p, 0.0, &h, &g), Err(Error::Domain(_))));
    }

    #[test]
    fn conjugation_symmetry() {
        let g = SpectralGrid::shared(40).unwrap();
        let p = Profile::new(-1.0, 0.5, 4.0).unwrap();
        let h = GridFunction::from_fn(g.clone(), |y| Complex64::new(y.cos(), (2.0 * y).sin() + y));
        let a = solve_os_mode(&p, 1.3, &h, &g).unwrap();
        let b = solve_os_mode(&p, -1.3, &h.conj(), &g).unwrap();
        assert!((&a.phi.conj() - &b.phi).max_abs() <= 1e-12 * a.phi.max_abs());
    }

    #[test]
    fn zero_mode_quartic() {
        let g = SpectralGrid::shared(32).unwrap();
        let h = GridFunction::from_real_fn(g.clone(), |_| 24.0);
        let sol = solve_os_zero_mode(&h, &g).unwrap();
        let exact = GridFunction::from_real_fn(g.clone(), |y| (1.0 - y * y).powi(2));
        assert!((&sol.phi - &exact).max_abs() < 1e-11);
        let z = solve_os_zero_mode(&GridFunction::zeros(g.clone()), &g).unwrap();
        assert_eq!(z.phi.max_abs(), 0.0);
    }

    #[test]
    fn sigma_of_poiseuille_quartic() {
        let g = SpectralGrid::shared(32).unwrap();
        let p = Profile::poiseuille_for_flux(4.0).unwrap();
        let h = GridFunction::from_fn(g.clone(), |y| manufactured_rhs(&p, 1.0, y));
        let sol = solve_os_mode(&p, 1.0, &h, &g).unwrap();
        let d = sigma_diagnostics(&sol, &p).unwrap();
        let exact = GridFunction::from_real_fn(g.clone(), |y| (1.0 - y * y) / 3.0);
        assert!((&d.sigma - &exact).max_abs() < 1e-10);
        assert!(d.boundary_ok);
        assert!((d.a00_value + 16.0 / 3.0).abs() < 1e-8, "{}", d.a00_value);
    }

    #[test]
    fn sigma_requires_admissible_profile() {
        let g = SpectralGrid::shared(16).unwrap();
        let p = Profile::new(-1.0, 0.0, 1.0).unwrap();
        let h = GridFunction::from_real_fn(g.clone(), |_| 1.0);
        let sol = solve_os_mode(&p, 1.0, &h, &g).unwrap();
        assert!(matches!(sigma_diagnostics(&sol, &p), Err(Error::Inadmissible { .. })));
    }

    #[test]
    fn poincare_equality_case() {
        let g = SpectralGrid::shared(64).unwrap();
        let s = GridFunction::from_real_fn(g, |y| (PI * y / 2.0).cos());
        assert!((poincare_ratio(&s) - POINCARE_CONSTANT).abs() < 1e-8);
    }
}

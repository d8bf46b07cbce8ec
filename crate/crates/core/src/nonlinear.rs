//! Picard iteration for steady perturbations `v` of the base flow:
//!
//! `-Δv + (v·∇)u* + (u*·∇)v + (v·∇)v + ∇q = f`, `div v = 0`, `v = 0` at the
//! walls, zero flux. Each step solves the linear problem with the advection
//! of the previous iterate moved to the right-hand side.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    physical_points, project_modes, recover_pressure_gradient, stream_velocity, synthesize, ChannelField, ChannelSolver,
    ModalField, SymmetryClass,
};
use crate::error::{Error, Result};
use crate::profiles::Profile;
use crate::spectral::SpectralGrid;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Consecutive non-decreasing increments tolerated before giving up.
const STALL_LIMIT: usize = 3;

#[derive(Debug, Clone)]
pub struct PicardConfig {
    /// Radius of the `H²` ball the iterates must stay in.
    pub delta: f64,
    /// Stopping tolerance on the `H²` norm of the increment.
    pub tol: f64,
    pub max_iter: usize,
    /// Each iterate is projected onto this parity class.
    pub symmetry_class: Option<SymmetryClass>,
    /// Initial stream function; defaults to the linear solution.
    pub initial: Option<ModalField>,
}

impl PicardConfig {
    pub fn new(delta: f64, tol: f64) -> Self {
        Self {
            delta,
            tol,
            max_iter: 200,
            symmetry_class: None,
            initial: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < self.delta && self.delta.is_finite()) {
            return Err(Error::Domain(format!(
                "need 0 < tol < delta, got tol = {}, delta = {}",
                self.tol, self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardTrace {
    /// `(‖v_n‖_{H²}, ‖v_{n+1} - v_n‖_{H²})`
    pub iterates: Vec<(f64, f64)>,
    /// Largest ratio of successive increments.
    pub contraction_factor: f64,
    pub converged: bool,
    /// Relative residual of the vorticity equation at the last iterate.
    pub residual: f64,
}

impl PicardTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,increment,norm")?;
        for (i, (norm, inc)) in self.iterates.iter().enumerate() {
            writeln!(out, "{i},{inc:.17e},{norm:.17e}")?;
        }
        Ok(())
    }
}

/// `(u·∇)w` for two velocity fields given as modes, evaluated on the
/// physical grid of `3K+1` points so no product aliases into `|k| ≤ K`.
pub fn advection(u: &ModalField, w: &ModalField) -> ModalField {
    let k = u.k_max;
    let nx = physical_points(k);
    let phys = |modes: &[DVector<Complex64>]| synthesize(modes, k, nx);
    let (u1, u2) = (phys(&u.components[0]), phys(&u.components[1]));
    let out: Vec<DMatrix<f64>> = (0..2)
        .map(|c| {
            let wx = phys(&w.derivative(c, 1, 0));
            let wy = phys(&w.derivative(c, 0, 1));
            u1.component_mul(&wx) + u2.component_mul(&wy)
        })
        .collect();
    ModalField::from_physical(u.xi0, k, u.grid.clone(), &out)
}

fn h2(psi: &ModalField) -> f64 {
    stream_velocity(psi).h_norm(2)
}

fn difference(a: &ModalField, b: &ModalField) -> ModalField {
    a.add(&b.scaled(-1.0)).expect("iterates share one discretization")
}

/// The map `w ↦` solution of the linear problem forced by `f - (w·∇)w`,
/// acting on stream functions.
pub struct PicardMap<'a> {
    solver: &'a ChannelSolver,
    force: &'a ModalField,
    class: Option<SymmetryClass>,
}

impl<'a> PicardMap<'a> {
    pub fn new(solver: &'a ChannelSolver, force: &'a ModalField, class: Option<SymmetryClass>) -> Self {
        Self { solver, force, class }
    }

    pub fn apply(&self, psi: &ModalField) -> Result<ModalField> {
        let vel = stream_velocity(psi);
        let rhs = self.force.add(&advection(&vel, &vel).scaled(-1.0))?;
        let modes = self.solver.solve_modes(&rhs)?;
        let mut out: Vec<DVector<Complex64>> = modes.into_iter().map(|m| m.into_values()).collect();
        if let Some(c) = self.class {
            project_modes(&mut out, c);
        }
        Ok(ModalField {
            components: vec![out],
            ..psi.clone()
        })
    }
}

/// Relative residual of the curl of the momentum equation,
/// `-Δω + Fω_x + 6Aw + (v·∇)ω = f_y - g_x` with `ω = Δψ`, collocated at the
/// interior nodes for each retained mode. It shares nothing with the mode
/// solves beyond the grid. The weight `(1 - y²)²` keeps the roundoff of
/// four collocation derivatives near the walls from swamping the measure.
pub fn nonlinear_residual(p: &Profile, psi: &ModalField, force: &ModalField) -> f64 {
    let grid = &psi.grid;
    let k = psi.k_max;
    let n = grid.degree();
    let fy: Vec<f64> = grid.nodes().iter().map(|&y| p.f(y)).collect();
    let vel = stream_velocity(psi);
    let omega: Vec<DVector<Complex64>> = (0..psi.components[0].len())
        .map(|idx| {
            let xi = psi.wavenumber(idx);
            let phi = &psi.components[0][idx];
            grid.apply(2, phi) - phi * Complex64::new(xi * xi, 0.0)
        })
        .collect();
    let om = ModalField {
        components: vec![omega.clone()],
        ..psi.clone()
    };
    let nx = physical_points(k);
    let phys = |m: &[DVector<Complex64>]| synthesize(m, k, nx);
    let transport = phys(&vel.components[0]).component_mul(&phys(&om.derivative(0, 1, 0)))
        + phys(&vel.components[1]).component_mul(&phys(&om.derivative(0, 0, 1)));
    let transport = ModalField::from_physical(psi.xi0, k, grid.clone(), &[transport]);
    let (mut res, mut scale) = (0.0, 0.0);
    let interior = |u: &DVector<Complex64>| -> f64 {
        (1..n)
            .map(|j| {
                let y = grid.nodes()[j];
                grid.weights()[j] * (1.0 - y * y).powi(4) * u[j].norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    };
    for (idx, om_k) in omega.iter().enumerate() {
        let xi = psi.wavenumber(idx);
        let diff = -(grid.apply(2, om_k) - om_k * Complex64::new(xi * xi, 0.0));
        let shear = DVector::from_fn(om_k.len(), |j, _| I * xi * fy[j] * om_k[j]);
        let tilt = &vel.components[1][idx] * Complex64::new(6.0 * p.a(), 0.0);
        let adv = &transport.components[0][idx];
        let curl_f = grid.apply(1, &force.components[0][idx]) - &force.components[1][idx] * (I * xi);
        let r = &diff + &shear + &tilt + adv - &curl_f;
        res += interior(&r).powi(2);
        scale += [&diff, &shear, &tilt, adv, &curl_f].iter().map(|t| interior(t)).fold(0.0, f64::max).powi(2);
    }
    if scale == 0.0 {
        0.0
    } else {
        (res / scale).sqrt()
    }
}

/// Picard iteration on a prebuilt solver.
pub fn picard_iterate(solver: &ChannelSolver, force: &ModalField, cfg: &PicardConfig) -> Result<(ChannelField, PicardTrace)> {
    cfg.validate()?;
    let p = *solver.profile();
    let map = PicardMap::new(solver, force, cfg.symmetry_class);
    let mut current = match &cfg.initial {
        Some(init) => {
            let mut m = init.components[0].clone();
            if let Some(c) = cfg.symmetry_class {
                project_modes(&mut m, c);
            }
            ModalField {
                components: vec![m],
                ..init.clone()
            }
        }
        None => map.apply(&ModalField::zeros(solver.xi0(), solver.k_max(), solver.grid().clone(), 1))?,
    };
    let mut iterates = Vec::new();
    let mut factor: f64 = 0.0;
    let mut stalls = 0;
    let mut prev_inc: Option<f64> = None;
    let mut converged = false;
    let mut residual = f64::NAN;
    for iteration in 0..cfg.max_iter {
        let norm = h2(&current);
        if norm > cfg.delta {
            return Err(Error::BallEscape {
                norm,
                radius: cfg.delta,
                iteration,
            });
        }
        let next = map.apply(&current)?;
        let inc = h2(&difference(&next, &current));
        iterates.push((norm, inc));
        if let Some(prev) = prev_inc.filter(|&v| v > 0.0) {
            let ratio = inc / prev;
            factor = factor.max(ratio);
            stalls = if ratio >= 1.0 { stalls + 1 } else { 0 };
            if stalls >= STALL_LIMIT {
                return Err(Error::NonContraction { ratio, iteration });
            }
        }
        prev_inc = Some(inc);
        current = next;
        if inc < cfg.tol {
            residual = nonlinear_residual(&p, &current, force);
            if residual < 10.0 * cfg.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::MaxIterations(cfg.max_iter));
    }
    let mut field = ChannelField::from_stream_modes(&current)?;
    let vel = field.velocity();
    let adv = advection(&vel, &vel);
    field.q_grad = Some(recover_pressure_gradient(&p, &field, force, Some(&adv))?);
    Ok((
        field,
        PicardTrace {
            iterates,
            contraction_factor: factor,
            converged,
            residual,
        },
    ))
}

/// Solves the forced nonlinear problem on the force's discretization.
pub fn picard_solve(p: &Profile, force: &ModalField, cfg: &PicardConfig) -> Result<(ChannelField, PicardTrace)> {
    let solver = ChannelSolver::new(*p, force.xi0, force.k_max, force.grid.clone())?;
    picard_iterate(&solver, force, cfg)
}

/// Smooth random clamped stream function with modes `|k| ≤ active`,
/// scaled so the velocity has `H²` norm `target`.
pub fn random_stream_function(
    rng: &mut impl Rng,
    xi0: f64,
    k_max: usize,
    grid: &Arc<SpectralGrid>,
    active: usize,
    target: f64,
    class: Option<SymmetryClass>,
) -> ModalField {
    let active = active.min(k_max);
    let mut field = ModalField::zeros(xi0, k_max, grid.clone(), 1);
    for k in 0..=active {
        let decay = 1.0 / (1.0 + (k * k) as f64);
        let c: Vec<Complex64> = (0..4)
            .map(|_| {
                let re = rng.gen_range(-1.0..1.0);
                let im = if k == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
                Complex64::new(re, im) * decay
            })
            .collect();
        let mode = DVector::from_iterator(
            grid.len(),
            grid.nodes().iter().map(|&y| {
                let bump = (1.0 - y * y).powi(2);
                bump * (c[0] + c[1] * y + c[2] * y * y + c[3] * y * y * y)
            }),
        );
        field.components[0][k_max - k] = mode.map(|z| z.conj());
        field.components[0][k_max + k] = mode;
    }
    if let Some(c) = class {
        project_modes(&mut field.components[0], c);
    }
    let norm = h2(&field);
    if norm > 0.0 {
        field.scaled(target / norm)
    } else {
        field
    }
}

/// Smooth random body force with unit `L²` norm.
pub fn random_force(rng: &mut impl Rng, xi0: f64, k_max: usize, grid: &Arc<SpectralGrid>, active: usize) -> ModalField {
    let active = active.min(k_max);
    let mut field = ModalField::zeros(xi0, k_max, grid.clone(), 2);
    for comp in 0..2 {
        for k in 0..=active {
            let c: Vec<Complex64> = (0..4)
                .map(|_| {
                    let im = if k == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
                    Complex64::new(rng.gen_range(-1.0..1.0), im)
                })
                .collect();
            let mode = DVector::from_iterator(
                grid.len(),
                grid.nodes().iter().map(|&y| c[0] + c[1] * y + c[2] * y * y + c[3] * y * y * y),
            );
            field.components[comp][k_max - k] = mode.map(|z| z.conj());
            field.components[comp][k_max + k] = mode;
        }
    }
    let norm = field.l2_norm();
    field.scaled(1.0 / norm)
}

#[derive(Debug, Clone, Copy)]
pub struct SampleConfig {
    pub samples: usize,
    pub seed: u64,
    /// Highest Fourier mode in random data.
    pub active_modes: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0,
            active_modes: 3,
        }
    }
}

fn sample_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Largest `(‖v‖_{H²} + ‖∇q‖_{L²}) / ‖f‖_{L²}` over random forces.
pub fn measure_kappa(solver: &ChannelSolver, cfg: &SampleConfig) -> Result<f64> {
    let ratios = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            let f = random_force(&mut rng, solver.xi0(), solver.k_max(), solver.grid(), cfg.active_modes);
            let field = solver.solve(&f)?;
            let q = field.pressure_l2().unwrap_or(0.0);
            Ok((field.h_norm(2) + q) / f.l2_norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Largest `‖(u·∇)w‖_{L²} / (‖u‖_{H²}‖w‖_{H²})` over random pairs of
/// admissible velocity fields.
pub fn measure_embedding(xi0: f64, k_max: usize, grid: &Arc<SpectralGrid>, cfg: &SampleConfig) -> f64 {
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            let u = stream_velocity(&random_stream_function(&mut rng, xi0, k_max, grid, cfg.active_modes, 1.0, None));
            let w = stream_velocity(&random_stream_function(&mut rng, xi0, k_max, grid, cfg.active_modes, 1.0, None));
            advection(&u, &w).l2_norm() / (u.h_norm(2) * w.h_norm(2))
        })
        .reduce(|| 0.0, f64::max)
}

/// Admissible ball radii `[4κ₀‖f‖, (4κ₀c₁)⁻¹]`; empty when `lower > upper`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaWindow {
    pub kappa0: f64,
    pub c1: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DeltaWindow {
    pub fn new(kappa0: f64, c1: f64, force_l2: f64) -> Self {
        Self {
            kappa0,
            c1,
            lower: 4.0 * kappa0 * force_l2,
            upper: 1.0 / (4.0 * kappa0 * c1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }
}

/// Largest `‖M(w₁) - M(w₂)‖_{H²} / ‖w₁ - w₂‖_{H²}` over random distinct
/// pairs with `‖wᵢ‖_{H²} ≤ δ`.
pub fn measure_contraction(
    solver: &ChannelSolver,
    force: &ModalField,
    delta: f64,
    class: Option<SymmetryClass>,
    cfg: &SampleConfig,
) -> Result<f64> {
    let map = PicardMap::new(solver, force, class);
    let ratios = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            let (r1, r2) = (rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0));
            let (xi0, k, g, a) = (solver.xi0(), solver.k_max(), solver.grid(), cfg.active_modes);
            let w1 = random_stream_function(&mut rng, xi0, k, g, a, r1 * delta, class);
            let w2 = random_stream_function(&mut rng, xi0, k, g, a, r2 * delta, class);
            let gap = h2(&difference(&w1, &w2));
            let image = h2(&difference(&map.apply(&w1)?, &map.apply(&w2)?));
            Ok(image / gap)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeStart {
    pub initial_norm: f64,
    pub final_norm: Option<f64>,
    pub iterations: usize,
    pub contraction_factor: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub delta: f64,
    pub tol: f64,
    pub symmetry_class: Option<SymmetryClass>,
    pub starts: Vec<ProbeStart>,
    /// Every start converged to the zero perturbation.
    pub unique: bool,
}

/// Unforced iteration from `n_starts` random points of the `δ`-ball;
/// uniqueness holds in the probe when each run returns to `v = 0`.
/// A run that escapes the ball or stalls counts against uniqueness; other
/// errors are propagated.
pub fn uniqueness_probe(
    solver: &ChannelSolver,
    n_starts: usize,
    delta: f64,
    tol: f64,
    class: Option<SymmetryClass>,
    seed: u64,
) -> Result<ProbeReport> {
    let zero = ModalField::zeros(solver.xi0(), solver.k_max(), solver.grid().clone(), 2);
    let starts = (0..n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let r = rng.gen_range(0.2..0.9) * delta;
            let w0 = random_stream_function(&mut rng, solver.xi0(), solver.k_max(), solver.grid(), 3, r, class);
            let initial_norm = h2(&w0);
            let cfg = PicardConfig {
                delta,
                tol,
                max_iter: 500,
                symmetry_class: class,
                initial: Some(w0),
            };
            match picard_iterate(solver, &zero, &cfg) {
                Ok((field, trace)) => Ok(ProbeStart {
                    initial_norm,
                    final_norm: Some(field.h_norm(2)),
                    iterations: trace.iterates.len(),
                    contraction_factor: Some(trace.contraction_factor),
                    error: None,
                }),
                Err(e @ (Error::BallEscape { .. } | Error::NonContraction { .. } | Error::MaxIterations(_))) => {
                    Ok(ProbeStart {
                        initial_norm,
                        final_norm: None,
                        iterations: 0,
                        contraction_factor: None,
                        error: Some(e.to_string()),
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let unique = starts.iter().all(|s| s.final_norm.is_some_and(|n| n <= tol));
    Ok(ProbeReport {
        delta,
        tol,
        symmetry_class: class,
        starts,
        unique,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> ChannelSolver {
        let p = Profile::poiseuille_for_flux(4.0).unwrap();
        ChannelSolver::new(p, 1.0, 6, SpectralGrid::shared(24).unwrap()).unwrap()
    }

    #[test]
    fn zero_force_from_zero_stops_at_once() {
        let s = setup();
        let f = ModalField::zeros(1.0, 6, s.grid().clone(), 2);
        let (field, trace) = picard_iterate(&s, &f, &PicardConfig::new(1.0, 1e-10)).unwrap();
        assert_eq!(trace.iterates.len(), 1);
        assert!(field.v.amax() == 0.0 && field.w.amax() == 0.0);
    }

    #[test]
    fn bad_tolerances_rejected() {
        let s = setup();
        let f = ModalField::zeros(1.0, 6, s.grid().clone(), 2);
        assert!(picard_iterate(&s, &f, &PicardConfig::new(1e-3, 1e-2)).is_err());
    }

    #[test]
    fn large_start_escapes_small_ball() {
        let s = setup();
        let f = ModalField::zeros(1.0, 6, s.grid().clone(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cfg = PicardConfig::new(0.1, 1e-10);
        cfg.initial = Some(random_stream_function(&mut rng, 1.0, 6, s.grid(), 2, 0.5, None));
        assert!(matches!(picard_iterate(&s, &f, &cfg), Err(Error::BallEscape { .. })));
    }

    #[test]
    fn random_stream_function_is_real_and_scaled() {
        let g = SpectralGrid::shared(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = random_stream_function(&mut rng, 1.0, 4, &g, 3, 0.25, None);
        assert!(psi.reality_defect() == 0.0);
        assert!((h2(&psi) - 0.25).abs() < 1e-14);
        let f = random_force(&mut rng, 1.0, 4, &g, 3);
        assert!((f.l2_norm() - 1.0).abs() < 1e-14);
    }
}

//! Orr–Sommerfeld eigenvalue problem
//!
//! ```text
//! (D² - T²)²φ + 3ATi[(1 - y²)(D² - T²)φ + 2φ] = λ(D² - T²)φ,   φ(±1) = φ'(±1) = 0,
//! ```
//!
//! reduced to a standard eigenproblem by the Dirichlet inverse of `D² - T²`.
//! With `Re = -3A` the classical phase speed is `c = iλ / (T Re)`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::profiles::Profile;
use crate::spectral::{GridFunction, SpectralGrid};

const I: Complex64 = Complex64::new(0.0, 0.0 + 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative distance within which two eigenvalues computed at different
/// resolutions count as the same.
pub const MATCH_TOLERANCE: f64 = 1e-6;
pub const MIN_RESOLVED: usize = 10;

/// Discretized pencil `L φ = λ M φ` on the interior nodes, `φ` clamped.
#[derive(Debug, Clone)]
pub struct OsPencil {
    a: f64,
    t: f64,
    grid: Arc<SpectralGrid>,
    lhs: DMatrix<Complex64>,
    rhs: DMatrix<Complex64>,
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: Complex64,
    /// Interior nodal values, unit Euclidean norm.
    pub vector: DVector<Complex64>,
}

impl OsPencil {
    pub fn new(a: f64, t: f64, grid: Arc<SpectralGrid>) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("wavenumber T must be positive, got {t}")));
        }
        if !a.is_finite() {
            return Err(Error::Domain(format!("A must be finite, got {a}")));
        }
        let n = grid.degree();
        let m = n - 1;
        let ops = grid.clamped();
        let d2 = grid.diff(2);
        let y = grid.nodes();
        let t2 = t * t;
        let coupling = I * (3.0 * a * t);
        let lhs = DMatrix::from_fn(m, m, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            let yr = y[r + 1];
            let bih = ops.d4[(r, c)] - 2.0 * t2 * ops.d2[(r, c)] + t2 * t2 * id;
            let lap = ops.d2[(r, c)] - t2 * id;
            Complex64::new(bih, 0.0) + coupling * ((1.0 - yr * yr) * lap + 2.0 * id)
        });
        let rhs = DMatrix::from_fn(m, m, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            Complex64::new(d2[(r + 1, c + 1)] - t2 * id, 0.0)
        });
        Ok(Self {
            a,
            t,
            grid,
            lhs,
            rhs,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    /// All eigenvalues of `M⁻¹L` (unfiltered).
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let reduced = self
            .rhs
            .clone()
            .lu()
            .solve(&self.lhs)
            .ok_or_else(|| Error::Eigen("Dirichlet operator is singular".into()))?;
        let ev = reduced
            .eigenvalues()
            .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
        Ok(ev.iter().copied().collect())
    }

    /// Shift-and-invert iteration with Rayleigh-quotient updates; converges
    /// to the eigenvalue nearest `guess`.
    pub fn track(&self, guess: Complex64, start: Option<&DVector<Complex64>>) -> Result<Eigenpair> {
        let m = self.lhs.nrows();
        let mut x = match start {
            Some(v) if v.len() == m => v.clone(),
            _ => DVector::from_fn(m, |i, _| {
                let s = (i as f64 + 1.0) / (m as f64 + 1.0);
                Complex64::new(1.0 + 0.3 * s, 0.2 * s)
            }),
        };
        x /= Complex64::new(x.norm(), 0.0);
        let mut shift = guess;
        let mut lambda = guess;
        let mut last_change = f64::INFINITY;
        for round in 0..12 {
            let lu = (&self.lhs - &self.rhs * shift).lu();
            let mut prev = lambda;
            for _ in 0..4 {
                let y = lu
                    .solve(&(&self.rhs * &x))
                    .ok_or_else(|| Error::Eigen("shifted pencil is exactly singular".into()))?;
                let norm = y.norm();
                if !norm.is_finite() || norm == 0.0 {
                    return Err(Error::Eigen("inverse iteration broke down".into()));
                }
                x = y / Complex64::new(norm, 0.0);
                lambda = self.rayleigh(&x);
                last_change = (lambda - prev).norm() / lambda.norm().max(1.0);
                if last_change <= 1e-13 {
                    return Ok(Eigenpair { lambda, vector: x });
                }
                prev = lambda;
            }
            // roundoff floor of the quotient once the shift has converged
            if round >= 2 && last_change <= 1e-10 {
                return Ok(Eigenpair { lambda, vector: x });
            }
            shift = lambda;
        }
        Err(Error::Eigen(format!(
            "tracking from {guess} did not settle (last relative change {last_change:.2e})"
        )))
    }

    fn rayleigh(&self, x: &DVector<Complex64>) -> Complex64 {
        let ax = &self.lhs * x;
        let bx = &self.rhs * x;
        bx.dotc(&ax) / bx.dotc(&bx)
    }

    /// Pads interior values with the wall zeros and normalizes the largest
    /// component to 1.
    pub fn to_grid_function(&self, vector: &DVector<Complex64>) -> GridFunction {
        let n = self.grid.degree();
        let mut vals = DVector::from_element(n + 1, ZERO);
        let mut peak = ZERO;
        for (i, v) in vector.iter().enumerate() {
            vals[i + 1] = *v;
            if v.norm() > peak.norm() {
                peak = *v;
            }
        }
        if peak != ZERO {
            vals /= peak;
        }
        GridFunction::new(self.grid.clone(), vals).expect("length matches grid")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_check: usize,
    /// Resolved eigenvalues, by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    pub leading: Complex64,
    pub n_resolved: usize,
    /// Eigenvalues at `N` without a partner at the check resolution.
    pub unresolved: Vec<Complex64>,
    #[serde(skip)]
    grid: Option<Arc<SpectralGrid>>,
}

impl SpectrumResult {
    /// Eigenfunction of the `idx`-th resolved eigenvalue on the primary grid,
    /// with its refined eigenvalue.
    pub fn eigenfunction(&self, idx: usize) -> Result<(Complex64, GridFunction)> {
        let lambda = *self
            .eigenvalues
            .get(idx)
            .ok_or_else(|| Error::Domain(format!("no resolved eigenvalue with index {idx}")))?;
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => SpectralGrid::shared(self.n)?,
        };
        let pencil = OsPencil::new(self.a, self.t, grid)?;
        let pair = pencil.track(lambda, None)?;
        Ok((pair.lambda, pencil.to_grid_function(&pair.vector)))
    }

    /// `re,im,resolved` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re,im,resolved")?;
        for e in &self.eigenvalues {
            writeln!(out, "{:.17e},{:.17e},true", e.re, e.im)?;
        }
        for e in &self.unresolved {
            writeln!(out, "{:.17e},{:.17e},false", e.re, e.im)?;
        }
        Ok(())
    }
}

/// Spectrum at the grid's degree `N`, filtered against a second solve at `3N/2`.
pub fn os_spectrum(a: f64, t: f64, grid: &Arc<SpectralGrid>) -> Result<SpectrumResult> {
    let n = grid.degree();
    let n_check = 3 * n / 2;
    let check = SpectralGrid::shared(n_check)?;
    let (primary, secondary) = rayon::join(
        || OsPencil::new(a, t, grid.clone()).and_then(|p| p.eigenvalues()),
        || OsPencil::new(a, t, check).and_then(|p| p.eigenvalues()),
    );
    let (primary, secondary) = (primary?, secondary?);
    let (mut resolved, mut unresolved) = (Vec::new(), Vec::new());
    for e in primary {
        let scale = e.norm().max(1.0);
        let nearest = secondary
            .iter()
            .map(|s| (s - e).norm())
            .fold(f64::INFINITY, f64::min);
        if nearest <= MATCH_TOLERANCE * scale {
            resolved.push(e);
        } else {
            unresolved.push(e);
        }
    }
    if resolved.len() < MIN_RESOLVED {
        return Err(Error::Resolution(format!(
            "only {} eigenvalues agree between N={n} and N={n_check}",
            resolved.len()
        )));
    }
    let by_growth = |x: &Complex64, y: &Complex64| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im));
    resolved.sort_by(by_growth);
    unresolved.sort_by(by_growth);
    Ok(SpectrumResult {
        a,
        t,
        n,
        n_check,
        leading: resolved[0],
        n_resolved: resolved.len(),
        eigenvalues: resolved,
        unresolved,
        grid: Some(grid.clone()),
    })
}

/// Relative residual of the integrated energy identity obtained by testing
/// the eigenvalue equation with `φ̄`.
pub fn verify_energy_identity(a: f64, t: f64, phi: &GridFunction, lambda: Complex64) -> f64 {
    let g = phi.grid();
    let d1 = phi.derivative(1);
    let d2 = phi.derivative(2);
    let y = g.nodes();
    let t2 = t * t;
    let p0 = g.norm_sq(phi.values());
    let p1 = g.norm_sq(d1.values());
    let p2 = g.norm_sq(d2.values());
    let weighted: f64 = g
        .weights()
        .iter()
        .enumerate()
        .map(|(j, w)| w * (1.0 - y[j] * y[j]) * (d1.values()[j].norm_sqr() + t2 * phi.values()[j].norm_sqr()))
        .sum();
    let cross = g.integrate(&DVector::from_fn(g.len(), |j, _| {
        y[j] * d1.values()[j] * phi.values()[j].conj()
    }));
    let lhs = Complex64::new(p2 + 2.0 * t2 * p1 + t2 * t2 * p0, 0.0) + lambda * (p1 + t2 * p0);
    let rhs = I * (3.0 * a * t) * (weighted - 2.0 * p0) - I * (6.0 * a * t) * cross;
    let scale = p2
        + 2.0 * t2 * p1
        + t2 * t2 * p0
        + lambda.norm() * (p1 + t2 * p0)
        + (3.0 * a * t).abs() * (weighted + 2.0 * p0 + 2.0 * cross.norm());
    (lhs - rhs).norm() / scale.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Serialize)]
pub struct AtCertificate {
    pub holds: bool,
    /// Largest leading growth rate over the admitted samples.
    pub max_growth: f64,
    pub worst: Option<(f64, f64)>,
    pub samples_used: usize,
}

/// Default sample set: `n × n` points with `T` log-spaced on `[0.25, 4]`
/// and `A = -s·bound/T`, `s` evenly spaced in `(0, 1]`.
pub fn at_sample_grid(at_bound: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
        let t = 0.25 * 16f64.powf(frac);
        for j in 1..=n {
            let s = j as f64 / n as f64;
            out.push((-s * at_bound / t, t));
        }
    }
    out
}

/// Checks that every sample with `|AT| ≤ at_bound` has only decaying modes.
pub fn small_at_certificate(
    at_bound: f64,
    samples: &[(f64, f64)],
    grid: &Arc<SpectralGrid>,
) -> Result<AtCertificate> {
    use rayon::prelude::*;
    if !(at_bound > 0.0) {
        return Err(Error::Domain(format!("bound on |AT| must be positive, got {at_bound}")));
    }
    let admitted: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(a, t)| (a * t).abs() <= at_bound * (1.0 + 1e-12))
        .collect();
    let growth: Vec<f64> = admitted
        .par_iter()
        .map(|&(a, t)| os_spectrum(a, t, grid).map(|s| s.leading.re))
        .collect::<Result<_>>()?;
    let (mut max_growth, mut worst) = (f64::NEG_INFINITY, None);
    for (g, s) in growth.iter().zip(&admitted) {
        if *g > max_growth {
            max_growth = *g;
            worst = Some(*s);
        }
    }
    Ok(AtCertificate {
        holds: max_growth < 0.0,
        max_growth,
        worst,
        samples_used: admitted.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralConfig {
    /// Search range in `-3A`.
    pub re_min: f64,
    pub re_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Stop once `|Re λ| ≤ tol · (-3A)`, i.e. once the growth rate in units
    /// of the shear Reynolds number is below `tol`.
    pub tol: f64,
    /// Width at which the golden-section search in `T` stops.
    pub t_tol: f64,
    pub max_bisections: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for NeutralConfig {
    fn default() -> Self {
        Self {
            re_min: 5000.0,
            re_max: 6500.0,
            t_min: 0.8,
            t_max: 1.3,
            tol: 1e-8,
            t_tol: 1e-6,
            max_bisections: 80,
            n: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralPoint {
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub lambda1: Complex64,
    #[serde(rename = "C_counter")]
    pub c_counter: f64,
    pub reversal_confirmed: bool,
    /// `-Im λ₁ / (T₀ · (-3A₁))`
    pub phase_speed: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl NeutralPoint {
    /// `F(y) = 3A₁y² + C_counter`.
    pub fn profile(&self) -> Result<Profile> {
        Profile::new(self.a1, 0.0, self.c_counter)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralIterate {
    pub iterate: usize,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub leading: Complex64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NeutralTrace {
    pub iterates: Vec<NeutralIterate>,
}

/// Growth maximization in `T` at fixed `A`, continuing the leading mode
/// in small steps from the nearest evaluated wavenumber.
struct GrowthScan<'a> {
    a: f64,
    grid: &'a Arc<SpectralGrid>,
    cache: Vec<(f64, Eigenpair)>,
}

const T_STEP: f64 = 0.02;

impl<'a> GrowthScan<'a> {
    fn seeded(a: f64, t: f64, grid: &'a Arc<SpectralGrid>, guess: Option<&Eigenpair>) -> Result<Self> {
        let pencil = OsPencil::new(a, t, grid.clone())?;
        let lead = rightmost(&pencil.eigenvalues()?)?;
        let start = guess.filter(|g| (g.lambda - lead).norm() < 1e-3 * lead.norm());
        let pair = pencil.track(lead, start.map(|g| &g.vector))?;
        Ok(Self {
            a,
            grid,
            cache: vec![(t, pair)],
        })
    }

    fn growth(&mut self, t: f64) -> Result<f64> {
        let (mut t_cur, mut pair) = self
            .cache
            .iter()
            .min_by(|x, y| (x.0 - t).abs().total_cmp(&(y.0 - t).abs()))
            .map(|(tc, p)| (*tc, p.clone()))
            .expect("scan is seeded");
        while (t - t_cur).abs() > 1e-15 {
            let step = (t - t_cur).clamp(-T_STEP, T_STEP);
            let next = if (t - t_cur).abs() <= T_STEP { t } else { t_cur + step };
            let pencil = OsPencil::new(self.a, next, self.grid.clone())?;
            pair = pencil.track(pair.lambda, Some(&pair.vector))?;
            t_cur = next;
            self.cache.push((t_cur, pair.clone()));
        }
        Ok(pair.lambda.re)
    }

    fn pair_at(&self, t: f64) -> Option<&Eigenpair> {
        self.cache.iter().find(|(tc, _)| *tc == t).map(|(_, p)| p)
    }

    /// Golden-section maximization over `[lo, hi]`.
    fn maximize(&mut self, lo: f64, hi: f64, tol: f64) -> Result<(f64, Eigenpair)> {
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = self.growth(c)?;
        let mut fd = self.growth(d)?;
        while b - a > tol {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = self.growth(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = self.growth(d)?;
            }
        }
        let t = if fc > fd { c } else { d };
        if t - lo < 2.0 * tol || hi - t < 2.0 * tol {
            return Err(Error::Precondition(format!(
                "growth maximum at A={} sits on the edge of the T range [{lo}, {hi}]",
                self.a
            )));
        }
        let pair = self.pair_at(t).expect("evaluated point is cached").clone();
        Ok((t, pair))
    }
}

fn rightmost(ev: &[Complex64]) -> Result<Complex64> {
    ev.iter()
        .copied()
        .filter(|e| e.re.is_finite() && e.im.is_finite())
        .max_by(|x, y| x.re.total_cmp(&y.re))
        .ok_or_else(|| Error::Eigen("empty spectrum".into()))
}

/// `max_T Re λ` at fixed `A`, with the verified leading eigenpair.
fn max_growth(
    a: f64,
    cfg: &NeutralConfig,
    t_seed: f64,
    guess: Option<&Eigenpair>,
    grid: &Arc<SpectralGrid>,
) -> Result<(f64, Eigenpair)> {
    let mut scan = GrowthScan::seeded(a, t_seed, grid, guess)?;
    for _ in 0..3 {
        let (t, pair) = scan.maximize(cfg.t_min, cfg.t_max, cfg.t_tol)?;
        let pencil = OsPencil::new(a, t, grid.clone())?;
        let lead = rightmost(&pencil.eigenvalues()?)?;
        if lead.re <= pair.lambda.re + 1e-9 * lead.norm().max(1.0) {
            return Ok((t, pair));
        }
        // another mode overtook the continued one; restart from it
        scan = GrowthScan::seeded(a, t, grid, None)?;
    }
    Err(Error::Eigen(format!("leading mode at A={a} could not be followed")))
}

/// Bisection in `A` on the sign of `max_T Re λ`.
pub fn neutral_search(cfg: &NeutralConfig) -> Result<(NeutralPoint, NeutralTrace)> {
    if !(cfg.re_min > 0.0 && cfg.re_max > cfg.re_min) {
        return Err(Error::Domain(format!(
            "need 0 < re_min < re_max, got [{}, {}]",
            cfg.re_min, cfg.re_max
        )));
    }
    if !(cfg.t_min > 0.0 && cfg.t_max > cfg.t_min) {
        return Err(Error::Domain(format!(
            "need 0 < t_min < t_max, got [{}, {}]",
            cfg.t_min, cfg.t_max
        )));
    }
    if !(cfg.tol > 0.0 && cfg.t_tol > 0.0) {
        return Err(Error::Domain("tolerances must be positive".into()));
    }
    let grid = SpectralGrid::shared(cfg.n)?;
    let t_mid = 0.5 * (cfg.t_min + cfg.t_max);
    let mut trace = NeutralTrace::default();

    let (mut lo, mut hi) = (cfg.re_min, cfg.re_max);
    let (t_lo, p_lo) = max_growth(-lo / 3.0, cfg, t_mid, None, &grid)?;
    let (t_hi, p_hi) = max_growth(-hi / 3.0, cfg, t_mid, None, &grid)?;
    trace.iterates.push(NeutralIterate {
        iterate: 0,
        a: -lo / 3.0,
        t: t_lo,
        leading: p_lo.lambda,
    });
    trace.iterates.push(NeutralIterate {
        iterate: 0,
        a: -hi / 3.0,
        t: t_hi,
        leading: p_hi.lambda,
    });
    if !(p_lo.lambda.re < 0.0 && p_hi.lambda.re > 0.0) {
        return Err(Error::NoBracket {
            lo: p_lo.lambda.re,
            hi: p_hi.lambda.re,
        });
    }

    let (mut t_prev, mut pair_prev) = (t_hi, p_hi);
    let mut best: Option<(f64, f64, Eigenpair)> = None;
    for it in 1..=cfg.max_bisections {
        let mid = 0.5 * (lo + hi);
        let a = -mid / 3.0;
        let (t, pair) = max_growth(a, cfg, t_prev, Some(&pair_prev), &grid)?;
        let growth = pair.lambda.re;
        trace.iterates.push(NeutralIterate {
            iterate: it,
            a,
            t,
            leading: pair.lambda,
        });
        if best.as_ref().is_none_or(|b| growth.abs() < b.2.lambda.re.abs()) {
            best = Some((a, t, pair.clone()));
        }
        if growth.abs() <= cfg.tol * mid {
            let lambda1 = pair.lambda;
            let c_counter = -3.0 * a + lambda1.im / t;
            let profile = Profile::new(a, 0.0, c_counter)?;
            let point = NeutralPoint {
                a1: a,
                t0: t,
                lambda1,
                c_counter,
                reversal_confirmed: profile.check_admissibility().reversal,
                phase_speed: -lambda1.im / (t * mid),
                n: cfg.n,
            };
            return Ok((point, trace));
        }
        if growth < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        t_prev = t;
        pair_prev = pair;
    }
    let (best_a, _, pair) = best.expect("at least one bisection step");
    Err(Error::ToleranceNotReached {
        best_re: pair.lambda.re.abs(),
        best_a,
    })
}

/// Smallest over largest singular value of the homogeneous mode operator
/// at `xi`, preconditioned on the right by the clamped biharmonic
/// `(D² - ξ²)²` so that the ratio is resolution independent.
pub fn kernel_witness(p: &Profile, xi: f64, grid: &SpectralGrid) -> Result<f64> {
    if xi == 0.0 || !xi.is_finite() {
        return Err(Error::Domain(format!("wavenumber must be finite and nonzero, got {xi}")));
    }
    let n = grid.degree();
    let m = n - 1;
    let ops = grid.clamped();
    let y = grid.nodes();
    let xi2 = xi * xi;
    let bih = DMatrix::from_fn(m, m, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        ops.d4[(r, c)] - 2.0 * xi2 * ops.d2[(r, c)] + xi2 * xi2 * id
    });
    let advect = DMatrix::from_fn(m, m, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        p.f(y[r + 1]) * (ops.d2[(r, c)] - xi2 * id) - 6.0 * p.a() * id
    });
    // X = advect · bih⁻¹  ⇔  bihᵀ Xᵀ = advectᵀ
    let xt = bih
        .transpose()
        .lu()
        .solve(&advect.transpose())
        .ok_or_else(|| Error::Eigen("clamped biharmonic is singular".into()))?;
    let op = DMatrix::from_fn(m, m, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        Complex64::new(id, 0.0) - I * xi * xt[(c, r)]
    });
    let sv = op.singular_values();
    let max = sv.max();
    let min = sv.min();
    Ok(min / max)
}

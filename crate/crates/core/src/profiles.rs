//! Couette–Poiseuille base profiles `F(y) = 3Ay² + By + C` on the channel
//! cross-section `[-1, 1]`, with viscosity fixed to one.
//!
//! The base state is `u* = F(y) e₁`, `p* = 6A x`. A profile is admissible
//! (no flow reversal) when `(A,B,C) ≠ 0`, `A ≤ 0` and `|B| ≤ 3A + C`.
//!
//! Note on the pure Poiseuille case: the pressure of the base state is
//! `p* = 6Ax`, which for `A = -Φ/4` reads `-(3/2)Φx`. Some statements of the
//! Poiseuille solution quote `-(1/4)Φx`; that form is inconsistent with the
//! momentum balance `-F'' + ∂ₓp* = 0` and is not used here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadratic base-flow profile. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "C")]
    c: f64,
}

/// Outcome of [`Profile::check_admissibility`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub satisfies_abc: bool,
    /// Infimum of `F` over the open interval `(-1, 1)`.
    pub min_f_interior: f64,
    /// `F > 0` at every point of `(-1, 1)`.
    pub positive_interior: bool,
    /// `F` takes both strictly positive and strictly negative values on `[-1, 1]`.
    pub reversal: bool,
    pub flux: f64,
}

/// `F`, `F'` and `F''` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
}

impl Profile {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::Domain(format!(
                "profile coefficients must be finite, got ({a}, {b}, {c})"
            )));
        }
        if a == 0.0 && b == 0.0 && c == 0.0 {
            return Err(Error::Domain("profile coefficients (0,0,0) are excluded".into()));
        }
        Ok(Self { a, b, c })
    }

    /// Plane Poiseuille flow `F = (3/4)Φ(1 - y²)` carrying flux `phi`.
    pub fn poiseuille_for_flux(phi: f64) -> Result<Self> {
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::Domain(format!("flux must be positive, got {phi}")));
        }
        Self::new(-phi / 4.0, 0.0, 0.75 * phi)
    }

    /// Plane Couette flow `F = B(1 + y)`.
    pub fn couette(b: f64) -> Result<Self> {
        Self::new(0.0, b, b)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Evaluates the profile and its first two derivatives; `y` must lie in `[-1, 1]`.
    pub fn eval(&self, y: f64) -> Result<ProfileValue> {
        if !(-1.0..=1.0).contains(&y) {
            return Err(Error::Domain(format!("y = {y} outside [-1, 1]")));
        }
        Ok(self.eval_unchecked(y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, y: f64) -> ProfileValue {
        ProfileValue {
            f: 3.0 * self.a * y * y + self.b * y + self.c,
            fp: 6.0 * self.a * y + self.b,
            fpp: 6.0 * self.a,
        }
    }

    #[inline]
    pub fn f(&self, y: f64) -> f64 {
        3.0 * self.a * y * y + self.b * y + self.c
    }

    #[inline]
    pub fn fp(&self, y: f64) -> f64 {
        6.0 * self.a * y + self.b
    }

    /// Flux `Φ = ∫ F = 2(A + C)`.
    pub fn flux(&self) -> f64 {
        2.0 * (self.a + self.c)
    }

    /// Constant base pressure gradient `∂p*/∂x = 6A`.
    pub fn base_pressure_gradient(&self) -> f64 {
        6.0 * self.a
    }

    pub fn satisfies_abc(&self) -> bool {
        self.a <= 0.0 && self.b.abs() <= 3.0 * self.a + self.c
    }

    /// Exact sign analysis of the quadratic on `[-1, 1]`.
    pub fn check_admissibility(&self) -> AdmissibilityReport {
        let (lo, hi) = self.range();
        let f_left = self.f(-1.0);
        let f_right = self.f(1.0);

        // Infimum over the open interval equals the minimum over the closed
        // one by continuity.
        let min_f_interior = lo;
        let positive_interior = if lo > 0.0 {
            true
        } else if lo < 0.0 {
            false
        } else {
            // Minimum is exactly zero. It is not attained inside (-1, 1)
            // unless the zero is an interior point.
            self.interior_zero_free(f_left, f_right)
        };

        AdmissibilityReport {
            satisfies_abc: self.satisfies_abc(),
            min_f_interior,
            positive_interior,
            reversal: lo < 0.0 && hi > 0.0,
            flux: self.flux(),
        }
    }

    /// Minimum and maximum of `F` over `[-1, 1]`.
    fn range(&self) -> (f64, f64) {
        let mut lo = self.f(-1.0).min(self.f(1.0));
        let mut hi = self.f(-1.0).max(self.f(1.0));
        if self.a != 0.0 {
            let vertex = -self.b / (6.0 * self.a);
            if vertex > -1.0 && vertex < 1.0 {
                let fv = self.f(vertex);
                lo = lo.min(fv);
                hi = hi.max(fv);
            }
        }
        (lo, hi)
    }

    // Called only when min F over [-1,1] is exactly zero.
    fn interior_zero_free(&self, f_left: f64, f_right: f64) -> bool {
        if self.a == 0.0 && self.b == 0.0 {
            return false;
        }
        if self.a != 0.0 {
            let vertex = -self.b / (6.0 * self.a);
            if vertex > -1.0 && vertex < 1.0 && self.f(vertex) == 0.0 {
                return false;
            }
        }
        // The zero minimum sits at an endpoint; a quadratic that is not
        // identically zero has no further zero inside unless both ends
        // vanish for a linear profile (impossible when B != 0).
        f_left >= 0.0 && f_right >= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_flux(p: &Profile) -> f64 {
        // 5-point Gauss-Legendre is exact for the quadratic.
        let nodes = [
            (0.0, 128.0 / 225.0),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        nodes.iter().map(|&(y, w)| w * p.f(y)).sum()
    }

    #[test]
    fn eval_examples() {
        let pois = Profile::new(-1.0, 0.0, 3.0).unwrap();
        let v = pois.eval(0.0).unwrap();
        assert_eq!((v.f, v.fp, v.fpp), (3.0, 0.0, -6.0));

        let couette = Profile::new(0.0, 1.0, 1.0).unwrap();
        let v = couette.eval(-1.0).unwrap();
        assert_eq!((v.f, v.fp, v.fpp), (0.0, 1.0, 0.0));

        let p = Profile::new(-0.3, 0.7, 2.5).unwrap();
        assert_eq!(p.eval(0.0).unwrap().f, 2.5);
        assert!(matches!(p.eval(1.0001), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_profile_rejected() {
        assert!(Profile::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let r = Profile::new(-1.0, 0.0, 3.0).unwrap().check_admissibility();
        assert!(r.satisfies_abc && !r.reversal && r.positive_interior);
        assert_eq!(r.flux, 4.0);
        assert_eq!(r.min_f_interior, 0.0);

        let r = Profile::new(0.0, 0.0, 1.0).unwrap().check_admissibility();
        assert!(r.satisfies_abc && r.min_f_interior == 1.0);
        assert_eq!(r.flux, 2.0);

        let r = Profile::new(-1924.07, 0.0, 5771.96).unwrap().check_admissibility();
        assert!(!r.satisfies_abc);
        assert!(r.reversal);
        assert!(!r.positive_interior);
    }

    #[test]
    fn positive_a_is_flagged() {
        let p = Profile::new(1.0, 0.0, 1.0).unwrap();
        assert!(!p.check_admissibility().satisfies_abc);
    }

    #[test]
    fn couette_admissible_and_touching_zero() {
        let r = Profile::couette(1.0).unwrap().check_admissibility();
        assert!(r.satisfies_abc && r.positive_interior && !r.reversal);
        assert_eq!(r.min_f_interior, 0.0);
    }

    #[test]
    fn poiseuille_for_flux_examples() {
        let p = Profile::poiseuille_for_flux(4.0).unwrap();
        assert_eq!((p.a(), p.b(), p.c()), (-1.0, 0.0, 3.0));
        let p = Profile::poiseuille_for_flux(1.0).unwrap();
        assert_eq!(p.f(0.0), 0.75);
        assert!(Profile::poiseuille_for_flux(0.0).is_err());
        assert!(Profile::poiseuille_for_flux(-2.0).is_err());
    }

    #[test]
    fn pressure_gradient_examples() {
        assert_eq!(Profile::new(-1.0, 0.0, 3.0).unwrap().base_pressure_gradient(), -6.0);
        assert_eq!(Profile::new(0.0, 1.0, 1.0).unwrap().base_pressure_gradient(), 0.0);
        assert_eq!(Profile::new(-2.0, 0.5, 9.0).unwrap().base_pressure_gradient(), -12.0);
    }

    #[test]
    fn serializes_flat() {
        let p = Profile::new(-1.0, 0.0, 3.0).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"A":-1.0,"B":0.0,"C":3.0}"#);
        let back: Profile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn flux_matches_quadrature(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
                prop_assume!(a != 0.0 || b != 0.0 || c != 0.0);
                let p = Profile::new(a, b, c).unwrap();
                prop_assert!((p.flux() - quad_flux(&p)).abs() <= 1e-12 * (1.0 + p.flux().abs()));
            }

            #[test]
            fn flux_round_trip(phi in 1e-3f64..1e4) {
                let p = Profile::poiseuille_for_flux(phi).unwrap();
                prop_assert!((p.flux() - phi).abs() <= 1e-12 * phi);
            }

            #[test]
            fn admissible_profiles_are_positive(a in -5.0f64..=0.0, t in 0.0f64..1.0, extra in 0.0f64..5.0, s in -1.0f64..1.0) {
                // |B| <= 3A + C  with C = -3A + |B| + extra
                let b = t * 5.0 * s.signum();
                let c = -3.0 * a + b.abs() + extra;
                prop_assume!(a != 0.0 || b != 0.0 || c != 0.0);
                let p = Profile::new(a, b, c).unwrap();
                let r = p.check_admissibility();
                prop_assert!(r.satisfies_abc);
                prop_assert!(!r.reversal);
                prop_assert!(r.positive_interior);
                prop_assert!(2.0 * a + b + 2.0 * c > 0.0);
                prop_assert!(p.f(-1.0) >= -1e-12 && p.f(1.0) >= -1e-12);
                for k in 1..400 {
                    let y = -1.0 + 2.0 * k as f64 / 400.0;
                    prop_assert!(p.f(y) > 0.0);
                }
            }
        }
    }
}

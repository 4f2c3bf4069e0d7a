//! Closed-form super/sub test functions at the vertex and the exponential
//! barrier pair.
//!
//! On each ray the test function solves an eikonal-type ODE with constant
//! right-hand side. For the super kind, with gap `g_i = u_i(eps_i) - u(0) -
//! theta` and `a = lambda / C`:
//!
//! ```text
//! lambda phi_i(x) - lambda M + C (1 + |phi_i'(x)|) = -eta_i,   x in (0, eps_i),
//! phi_i(eps_i) - phi_i(0) = g_i,
//! phi_i(0) equal across rays.
//! ```
//!
//! The solution is a single exponential `phi_i(x) = G_i e^{s_i a x} -
//! (C + eta_i)/lambda + M` with `G_i = g_i / (e^{s_i a eps_i} - 1)` and the
//! branch sign `s_i` chosen by the sign of the gap (`s_i = -1` for
//! `g_i >= 0`, `+1` otherwise). Its gradient is monotone along the ray, so
//! the gradient at the vertex dominates the secant slope; the free constants
//! `eta_i > 0` are matched so that all rays meet at one vertex value. The
//! sub kind mirrors every sign. Both kinds stay `C^1` with one-sided second
//! derivatives of a single sign, which is what makes them usable for the
//! possibly degenerate second-order theory once `C` is inflated enough to
//! pin the second derivative into a unit window.

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianSet, KirchhoffCondition};

/// Default floor for the matched `eta` sequence. Strict positivity is all
/// the construction needs; a fixed floor makes bundles reproducible.
pub const DEFAULT_ETA_FLOOR: f64 = 1e-3;

/// Absolute tolerance on vertex agreement of the per-ray branches.
pub const VERTEX_MATCH_TOL: f64 = 1e-10;

/// Grid used for the barrier sup and the barrier validity checks.
const BARRIER_GRID: usize = 1_001;
/// Safety inflation of the grid sup; barrier constants need only be large
/// enough, not tight.
const BARRIER_PAD: f64 = 1.1;
const BARRIER_CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleKind {
    /// Touches a supersolution from below near the vertex.
    Super,
    /// Touches a subsolution from above near the vertex.
    Sub,
}

#[derive(Debug, Clone, Copy)]
struct RayProfile {
    eps: f64,
    gap: f64,
    eta: f64,
    /// Exponential coefficient `G_i = gap / (e^{s a eps} - 1)`.
    coeff: f64,
    /// Branch sign `s_i` of the exponent.
    exp_sign: f64,
}

/// One closed-form test function: per-ray exponential branches sharing a
/// vertex value. Immutable; evaluation is pure.
#[derive(Debug, Clone)]
pub struct TestFunctionBundle {
    kind: BundleKind,
    theta: f64,
    lambda: f64,
    big_c: f64,
    bound_m: f64,
    rays: Vec<RayProfile>,
}

/// Builds the super test function for data `u` near the vertex; the `eta`
/// sequence is matched automatically above [`DEFAULT_ETA_FLOOR`].
pub fn build_super_test_function(
    u0: f64,
    u_eps: &[f64],
    eps: &[f64],
    theta: f64,
    lambda: f64,
    big_c: f64,
    bound_m: f64,
) -> Result<TestFunctionBundle> {
    TestFunctionBundle::with_floor(
        BundleKind::Super,
        u0,
        u_eps,
        eps,
        theta,
        lambda,
        big_c,
        bound_m,
        DEFAULT_ETA_FLOOR,
    )
}

/// Sub counterpart of [`build_super_test_function`].
pub fn build_sub_test_function(
    v0: f64,
    v_eps: &[f64],
    eps: &[f64],
    theta: f64,
    lambda: f64,
    big_c: f64,
    bound_m: f64,
) -> Result<TestFunctionBundle> {
    TestFunctionBundle::with_floor(
        BundleKind::Sub,
        v0,
        v_eps,
        eps,
        theta,
        lambda,
        big_c,
        bound_m,
        DEFAULT_ETA_FLOOR,
    )
}

impl TestFunctionBundle {
    /// Builds a bundle with the matched `eta` sequence held above
    /// `eta_floor`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_floor(
        kind: BundleKind,
        value0: f64,
        value_eps: &[f64],
        eps: &[f64],
        theta: f64,
        lambda: f64,
        big_c: f64,
        bound_m: f64,
        eta_floor: f64,
    ) -> Result<Self> {
        let gaps = Self::gaps(kind, value0, value_eps, theta)?;
        Self::validate_constants(&gaps, eps, theta, lambda, big_c, bound_m)?;
        let coeffs = Self::coefficients(kind, &gaps, eps, lambda, big_c);
        // Continuity at the vertex pins eta_j - eta_1 through the vertex
        // offsets; for the sub kind the sign of the offset flips.
        let matched = match kind {
            BundleKind::Super => match_eta(&coeffs, lambda, eta_floor)?,
            BundleKind::Sub => {
                let negated: Vec<f64> = coeffs.iter().map(|g| -g).collect();
                match_eta(&negated, lambda, eta_floor)?
            }
        };
        Self::assemble(kind, gaps, eps, matched, theta, lambda, big_c, bound_m)
    }

    /// Builds a bundle with an explicit `eta` sequence; rejects sequences
    /// whose branches miss each other at the vertex.
    #[allow(clippy::too_many_arguments)]
    pub fn with_explicit_eta(
        kind: BundleKind,
        value0: f64,
        value_eps: &[f64],
        eps: &[f64],
        theta: f64,
        lambda: f64,
        big_c: f64,
        bound_m: f64,
        eta: &[f64],
    ) -> Result<Self> {
        let gaps = Self::gaps(kind, value0, value_eps, theta)?;
        Self::validate_constants(&gaps, eps, theta, lambda, big_c, bound_m)?;
        if eta.len() != gaps.len() {
            return Err(Error::Shape(format!(
                "expected {} eta values, got {}",
                gaps.len(),
                eta.len()
            )));
        }
        Self::assemble(kind, gaps, eps, eta.to_vec(), theta, lambda, big_c, bound_m)
    }

    /// Variant for second-order problems: `C` is first inflated so that the
    /// sampled second derivative stays in `[-1, 0]` (super) or `[0, 1]`
    /// (sub).
    #[allow(clippy::too_many_arguments)]
    pub fn second_order(
        kind: BundleKind,
        value0: f64,
        value_eps: &[f64],
        eps: &[f64],
        theta: f64,
        lambda: f64,
        big_c: f64,
        bound_m: f64,
    ) -> Result<Self> {
        let gaps = Self::gaps(kind, value0, value_eps, theta)?;
        Self::validate_constants(&gaps, eps, theta, lambda, big_c, bound_m)?;
        let eps_min = eps.iter().copied().fold(f64::INFINITY, f64::min);
        let eps_max = eps.iter().copied().fold(0.0_f64, f64::max);
        // With C >= lambda eps the exponent stays below 1, so e^{lambda
        // eps / C} <= e and |phi''| <= lambda |g| e / (C eps) <= 1 once C
        // clears the bounds below. 2(M + theta) dominates |g| whenever M
        // bounds the data, and the gap-based term covers callers that push
        // data beyond M.
        let mut c_eff = big_c.max(lambda * eps_max);
        c_eff = c_eff.max(2.0 * (bound_m + theta) * lambda * std::f64::consts::E / eps_min);
        for (g, e) in gaps.iter().zip(eps) {
            c_eff = c_eff.max(lambda * g.abs() * std::f64::consts::E / e);
        }
        Self::with_floor(
            kind, value0, value_eps, eps, theta, lambda, c_eff, bound_m, DEFAULT_ETA_FLOOR,
        )
    }

    fn gaps(kind: BundleKind, value0: f64, value_eps: &[f64], theta: f64) -> Result<Vec<f64>> {
        if value_eps.len() < 2 {
            return Err(Error::Domain(format!(
                "a bundle needs at least 2 rays, got {}",
                value_eps.len()
            )));
        }
        Ok(value_eps
            .iter()
            .map(|&ve| match kind {
                BundleKind::Super => ve - value0 - theta,
                BundleKind::Sub => ve - value0 + theta,
            })
            .collect())
    }

    fn validate_constants(
        gaps: &[f64],
        eps: &[f64],
        theta: f64,
        lambda: f64,
        big_c: f64,
        bound_m: f64,
    ) -> Result<()> {
        if eps.len() != gaps.len() {
            return Err(Error::Shape(format!(
                "expected {} neighborhood radii, got {}",
                gaps.len(),
                eps.len()
            )));
        }
        for (name, value) in [("theta", theta), ("lambda", lambda), ("C", big_c), ("M", bound_m)]
        {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::Domain(format!("{name} must be positive, got {value}")));
            }
        }
        for (i, &e) in eps.iter().enumerate() {
            if !e.is_finite() || e <= 0.0 {
                return Err(Error::Domain(format!(
                    "eps on ray {} must be positive, got {e}",
                    i + 1
                )));
            }
        }
        if gaps.iter().any(|g| !g.is_finite()) {
            return Err(Error::Domain("boundary data must be finite".into()));
        }
        Ok(())
    }

    /// Branch sign by the sign of the gap (`g = 0` takes the non-negative
    /// branch; both formulas then degenerate to the same constant).
    fn branch_sign(kind: BundleKind, gap: f64) -> f64 {
        match kind {
            BundleKind::Super => {
                if gap >= 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            BundleKind::Sub => {
                if gap >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    fn coefficients(
        kind: BundleKind,
        gaps: &[f64],
        eps: &[f64],
        lambda: f64,
        big_c: f64,
    ) -> Vec<f64> {
        let a = lambda / big_c;
        gaps.iter()
            .zip(eps)
            .map(|(&g, &e)| {
                if g == 0.0 {
                    0.0
                } else {
                    g / (Self::branch_sign(kind, g) * a * e).exp_m1()
                }
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: BundleKind,
        gaps: Vec<f64>,
        eps: &[f64],
        eta: Vec<f64>,
        theta: f64,
        lambda: f64,
        big_c: f64,
        bound_m: f64,
    ) -> Result<Self> {
        for (i, &e) in eta.iter().enumerate() {
            if !e.is_finite() || e <= 0.0 {
                return Err(Error::Domain(format!(
                    "eta on ray {} must be strictly positive, got {e}",
                    i + 1
                )));
            }
        }
        let coeffs = Self::coefficients(kind, &gaps, eps, lambda, big_c);
        let rays: Vec<RayProfile> = gaps
            .iter()
            .zip(eps)
            .zip(eta)
            .zip(coeffs)
            .map(|(((&gap, &eps), eta), coeff)| RayProfile {
                eps,
                gap,
                eta,
                coeff,
                exp_sign: Self::branch_sign(kind, gap),
            })
            .collect();
        let bundle = Self { kind, theta, lambda, big_c, bound_m, rays };

        // All branches must meet at one vertex value.
        let v0 = bundle.vertex_values();
        for (j, &vj) in v0.iter().enumerate().skip(1) {
            if (vj - v0[0]).abs() > VERTEX_MATCH_TOL {
                return Err(Error::VertexMismatch {
                    ray_a: 1,
                    ray_b: j + 1,
                    value_a: v0[0],
                    value_b: vj,
                    tolerance: VERTEX_MATCH_TOL,
                });
            }
        }
        Ok(bundle)
    }

    fn vertex_values(&self) -> Vec<f64> {
        self.rays.iter().map(|r| self.additive_constant(r) + r.coeff).collect()
    }

    fn additive_constant(&self, ray: &RayProfile) -> f64 {
        match self.kind {
            BundleKind::Super => -(self.big_c + ray.eta) / self.lambda + self.bound_m,
            BundleKind::Sub => (self.big_c + ray.eta) / self.lambda - self.bound_m,
        }
    }

    pub fn kind(&self) -> BundleKind {
        self.kind
    }

    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The gradient-growth constant `C` the ODE was built with (possibly
    /// inflated by [`Self::second_order`]).
    pub fn growth_constant(&self) -> f64 {
        self.big_c
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn eps(&self, ray: usize) -> Result<f64> {
        Ok(self.profile(ray)?.eps)
    }

    pub fn gap(&self, ray: usize) -> Result<f64> {
        Ok(self.profile(ray)?.gap)
    }

    pub fn eta(&self, ray: usize) -> Result<f64> {
        Ok(self.profile(ray)?.eta)
    }

    /// The shared value at the vertex.
    pub fn vertex(&self) -> f64 {
        self.vertex_values()[0]
    }

    fn profile(&self, ray: usize) -> Result<&RayProfile> {
        self.rays
            .get(ray.wrapping_sub(1))
            .ok_or_else(|| Error::Domain(format!("ray index {ray} outside 1..={}", self.rays.len())))
    }

    fn check_coord(&self, ray: &RayProfile, x: f64) -> Result<()> {
        if !x.is_finite() || x < 0.0 || x > ray.eps {
            return Err(Error::Domain(format!("coordinate {x} outside [0, {}]", ray.eps)));
        }
        Ok(())
    }

    /// `phi_i(x)` on ray `ray` (1-based), `x` in `[0, eps_i]`.
    pub fn phi(&self, ray: usize, x: f64) -> Result<f64> {
        let r = self.profile(ray)?;
        self.check_coord(r, x)?;
        let a = self.lambda / self.big_c;
        Ok(r.coeff * (r.exp_sign * a * x).exp() + self.additive_constant(r))
    }

    /// `phi_i'(x)`.
    pub fn dphi(&self, ray: usize, x: f64) -> Result<f64> {
        let r = self.profile(ray)?;
        self.check_coord(r, x)?;
        let a = self.lambda / self.big_c;
        Ok(r.exp_sign * a * r.coeff * (r.exp_sign * a * x).exp())
    }

    /// `phi_i''(x)`.
    pub fn d2phi(&self, ray: usize, x: f64) -> Result<f64> {
        let r = self.profile(ray)?;
        self.check_coord(r, x)?;
        let a = self.lambda / self.big_c;
        Ok(a * a * r.coeff * (r.exp_sign * a * x).exp())
    }

    /// Residual of the defining ODE at `x`; zero (to rounding) by
    /// construction. Super: `lambda phi - lambda M + C(1 + |phi'|) + eta`;
    /// sub: `lambda phi + lambda M - C(1 + |phi'|) - eta`.
    pub fn ode_residual(&self, ray: usize, x: f64) -> Result<f64> {
        let r = self.profile(ray)?;
        let phi = self.phi(ray, x)?;
        let dphi = self.dphi(ray, x)?;
        Ok(match self.kind {
            BundleKind::Super => {
                self.lambda * phi - self.lambda * self.bound_m
                    + self.big_c * (1.0 + dphi.abs())
                    + r.eta
            }
            BundleKind::Sub => {
                self.lambda * phi + self.lambda * self.bound_m
                    - self.big_c * (1.0 + dphi.abs())
                    - r.eta
            }
        })
    }

    /// Audit dump: `ray,x,phi,dphi,d2phi,residual`, `points_per_ray` rows
    /// per ray on a uniform grid over `[0, eps_i]`.
    pub fn audit_csv(&self, points_per_ray: usize) -> String {
        let pts = points_per_ray.max(2);
        let mut out = String::from("ray,x,phi,dphi,d2phi,residual\n");
        for ray in 1..=self.rays.len() {
            let eps = self.rays[ray - 1].eps;
            for k in 0..pts {
                let x = eps * (k as f64 / (pts - 1) as f64);
                out.push_str(&format!(
                    "{ray},{x:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    self.phi(ray, x).unwrap(),
                    self.dphi(ray, x).unwrap(),
                    self.d2phi(ray, x).unwrap(),
                    self.ode_residual(ray, x).unwrap(),
                ));
            }
        }
        out
    }
}

/// Matches the per-ray `eta` constants so that the vertex offsets
/// `G_j - eta_j / lambda` agree across rays while every `eta_j` stays at or
/// above `eta_floor`:
///
/// ```text
/// eta_1 = eta_floor + max(0, max_{j>1} lambda (G_1 - G_j)),
/// eta_j = eta_1 + lambda (G_j - G_1).
/// ```
pub fn match_eta(vertex_offsets: &[f64], lambda: f64, eta_floor: f64) -> Result<Vec<f64>> {
    if vertex_offsets.is_empty() {
        return Err(Error::Shape("no vertex offsets given".into()));
    }
    if !eta_floor.is_finite() || eta_floor <= 0.0 {
        return Err(Error::Domain(format!("eta floor must be positive, got {eta_floor}")));
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let g1 = vertex_offsets[0];
    let worst = vertex_offsets[1..]
        .iter()
        .map(|gj| lambda * (g1 - gj))
        .fold(0.0_f64, f64::max);
    let eta1 = eta_floor + worst;
    Ok(vertex_offsets.iter().map(|gj| eta1 + lambda * (gj - g1)).collect())
}

/// Gradient of the bundle at the vertex on ray `ray`, in closed form.
///
/// Super kind: `(lambda/C) g / (1 - e^{-(lambda/C) eps})` when `g >= 0`,
/// `(lambda/C) g / (e^{(lambda/C) eps} - 1)` when `g <= 0`; the sub kind is
/// mirrored.
pub fn grad_at_vertex(bundle: &TestFunctionBundle, ray: usize) -> Result<f64> {
    bundle.dphi(ray, 0.0)
}

/// Constants of the exponential barrier pair `x -> +-(A + B e^{-x})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierPair {
    a: f64,
    b: f64,
}

impl BarrierPair {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// The super barrier `A + B e^{-x}`.
    pub fn upper(&self, x: f64) -> f64 {
        self.a + self.b * (-x).exp()
    }

    /// The sub barrier `-(A + B e^{-x})`.
    pub fn lower(&self, x: f64) -> f64 {
        -self.upper(x)
    }
}

/// Builds the barrier pair for a certified problem:
/// `B = |F(0,...,0)| / (I alpha)` and `A` dominates
/// `sup_x |Q_i(x, 0, -+ B e^{-x}, +- B e^{-x})| / lambda` on a 1001-point
/// grid, padded by 10%. The construction re-checks the super/sub
/// inequalities before returning.
pub fn build_barriers(
    hamiltonians: &HamiltonianSet,
    kirchhoff: &KirchhoffCondition,
    ray_count: usize,
    ray_length: f64,
) -> Result<BarrierPair> {
    if hamiltonians.ray_count() != ray_count || kirchhoff.arity() != ray_count {
        return Err(Error::Shape(format!(
            "ray count mismatch: network {}, hamiltonians {}, kirchhoff {}",
            ray_count,
            hamiltonians.ray_count(),
            kirchhoff.arity()
        )));
    }
    if (hamiltonians.domain_length() - ray_length).abs() > 1e-12 {
        return Err(Error::Shape(format!(
            "ray length mismatch: network {}, hamiltonians {}",
            ray_length,
            hamiltonians.domain_length()
        )));
    }
    hamiltonians.certify()?;
    kirchhoff.certify()?;

    let zeros = vec![0.0; ray_count];
    let f0 = kirchhoff.eval(0.0, &zeros)?;
    let b = f0.abs() / (ray_count as f64 * kirchhoff.alpha());

    let mut sup: f64 = 0.0;
    for k in 0..BARRIER_GRID {
        let x = ray_length * (k as f64 / (BARRIER_GRID - 1) as f64);
        let slope = b * (-x).exp();
        for ray in 1..=ray_count {
            // Both orientations: the super barrier carries gradient -B e^{-x}
            // and curvature +B e^{-x}; the sub barrier flips both signs.
            sup = sup.max(hamiltonians.eval(ray, x, 0.0, -slope, slope)?.abs());
            sup = sup.max(hamiltonians.eval(ray, x, 0.0, slope, -slope)?.abs());
        }
    }
    let a = BARRIER_PAD * sup / hamiltonians.lambda();
    let pair = BarrierPair { a, b };

    // Super side: F(A+B, -B, ..., -B) <= 0 and Q_i >= 0 along the barrier.
    let down = vec![-b; ray_count];
    if kirchhoff.eval(a + b, &down)? > BARRIER_CHECK_TOL {
        return Err(Error::Precondition(format!(
            "barrier vertex inequality failed: F(A+B, -B, ...) = {}",
            kirchhoff.eval(a + b, &down)?
        )));
    }
    let up = vec![b; ray_count];
    if kirchhoff.eval(-(a + b), &up)? < -BARRIER_CHECK_TOL {
        return Err(Error::Precondition(format!(
            "barrier vertex inequality failed: F(-(A+B), B, ...) = {}",
            kirchhoff.eval(-(a + b), &up)?
        )));
    }
    for k in 0..BARRIER_GRID {
        let x = ray_length * (k as f64 / (BARRIER_GRID - 1) as f64);
        let slope = b * (-x).exp();
        for ray in 1..=ray_count {
            let super_q = hamiltonians.eval(ray, x, pair.upper(x), -slope, slope)?;
            if super_q < -BARRIER_CHECK_TOL {
                return Err(Error::Precondition(format!(
                    "super barrier fails lambda-properness at x = {x}: Q = {super_q}"
                )));
            }
            let sub_q = hamiltonians.eval(ray, x, pair.lower(x), slope, -slope)?;
            if sub_q > BARRIER_CHECK_TOL {
                return Err(Error::Precondition(format!(
                    "sub barrier fails lambda-properness at x = {x}: Q = {sub_q}"
                )));
            }
        }
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{RayFamily, SourceTerm};

    /// Central finite difference of `phi`, the independent route to the
    /// gradient used to cross-check every closed form.
    fn fd_dphi(b: &TestFunctionBundle, ray: usize, x: f64, h: f64) -> f64 {
        let eps = b.eps(ray).unwrap();
        let (lo, hi) = ((x - h).max(0.0), (x + h).min(eps));
        (b.phi(ray, hi).unwrap() - b.phi(ray, lo).unwrap()) / (hi - lo)
    }

    #[test]
    fn super_symmetric_matches_closed_form() {
        // g_i = -0.01: lower branch; with eta = 1 the bundle is
        // G e^x - 1 with G = -0.01 / (e^{0.1} - 1).
        let b = TestFunctionBundle::with_floor(
            BundleKind::Super,
            0.0,
            &[0.0, 0.0],
            &[0.1, 0.1],
            0.01,
            1.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let g_coeff = -0.01 / 0.1_f64.exp_m1();
        for &x in &[0.0_f64, 0.025, 0.05, 0.1] {
            for ray in 1..=2 {
                let expected = g_coeff * x.exp() - 1.0;
                assert!((b.phi(ray, x).unwrap() - expected).abs() < 1e-14);
            }
        }
        let d0 = b.dphi(1, 0.0).unwrap();
        assert!((d0 - g_coeff).abs() < 1e-15);
        assert!((d0 - (-0.0950833)).abs() < 1e-7);
        // Independent finite-difference oracle for the gradient and the ODE.
        assert!((fd_dphi(&b, 1, 0.05, 1e-6) - b.dphi(1, 0.05).unwrap()).abs() < 1e-8);
        for k in 0..=20 {
            let x = 0.1 * (k as f64 / 20.0);
            assert!(b.ode_residual(1, x).unwrap().abs() < 1e-12);
            let fd_res = b.phi(1, x).unwrap() - 1.0 + 1.0 * (1.0 + fd_dphi(&b, 1, x, 1e-6).abs())
                + b.eta(1).unwrap();
            assert!(fd_res.abs() < 1e-5, "FD residual {fd_res} at x={x}");
        }
        // Boundary condition phi(eps) - phi(0) = gap, to 1e-12.
        let gap = b.phi(1, 0.1).unwrap() - b.phi(1, 0.0).unwrap();
        assert!((gap - b.gap(1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_explicit_eta() {
        // eta = (1, 2) shifts the two constants by 1 and the branches miss
        // each other at the vertex.
        let err = TestFunctionBundle::with_explicit_eta(
            BundleKind::Super,
            0.0,
            &[0.0, 0.0],
            &[0.1, 0.1],
            0.01,
            1.0,
            1.0,
            1.0,
            &[1.0, 2.0],
        )
        .unwrap_err();
        match err {
            Error::VertexMismatch { value_a, value_b, .. } => {
                assert!(((value_a - value_b).abs() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected vertex mismatch, got {other:?}"),
        }
    }

    #[test]
    fn super_asymmetric_eta_matching() {
        // g = (0.1, 0.2) >= 0; eta_1 = 2 forces eta_2 = 2 + (G_2 - G_1).
        let denom = (-0.1_f64).exp_m1();
        let g1 = 0.1 / denom;
        let g2 = 0.2 / denom;
        assert!((g1 - (-1.05083)).abs() < 1e-5);
        assert!((g2 - (-2.10167)).abs() < 1e-5);
        let eta2 = 2.0 + (g2 - g1);
        assert!((eta2 - 0.94917).abs() < 1e-5);
        assert!(eta2 > 0.0);

        let b = TestFunctionBundle::with_explicit_eta(
            BundleKind::Super,
            0.0,
            &[0.11, 0.21],
            &[0.1, 0.1],
            0.01,
            1.0,
            1.0,
            1.0,
            &[2.0, eta2],
        )
        .unwrap();
        assert!((b.phi(1, 0.0).unwrap() - b.phi(2, 0.0).unwrap()).abs() < 1e-12);
        for ray in 1..=2 {
            for k in 0..=10 {
                let x = 0.1 * (k as f64 / 10.0);
                assert!(b.ode_residual(ray, x).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn match_eta_examples() {
        // Identical offsets: every eta sits at the floor.
        let eta = match_eta(&[-0.3, -0.3, -0.3], 2.0, 1e-3).unwrap();
        assert!(eta.iter().all(|&e| (e - 1e-3).abs() < 1e-15));

        // Spread offsets: eta_1 absorbs the largest drop.
        let eta = match_eta(&[0.0, -1.0, -2.0], 1.0, 0.5).unwrap();
        assert_eq!(eta, vec![2.5, 1.5, 0.5]);

        // Vertex equality: G_j - eta_j / lambda constant across rays.
        let offsets = [0.7, -0.4, 0.1];
        let lambda = 1.7;
        let eta = match_eta(&offsets, lambda, 1e-3).unwrap();
        let base = offsets[0] - eta[0] / lambda;
        for (g, e) in offsets.iter().zip(&eta) {
            assert!((g - e / lambda - base).abs() < 1e-12);
            assert!(*e >= 1e-3 - 1e-15);
        }
    }

    #[test]
    fn sub_symmetric_matches_closed_form() {
        // g_i = +0.01: rising branch, gradient +0.0950833 at the vertex.
        let b = TestFunctionBundle::with_floor(
            BundleKind::Sub,
            0.0,
            &[0.0, 0.0],
            &[0.1, 0.1],
            0.01,
            1.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let d0 = b.dphi(1, 0.0).unwrap();
        assert!((d0 - 0.0950833).abs() < 1e-7);
        for k in 0..=20 {
            let x = 0.1 * (k as f64 / 20.0);
            assert!(b.ode_residual(1, x).unwrap().abs() < 1e-12);
        }
        assert!((fd_dphi(&b, 1, 0.0, 1e-7) - d0).abs() < 1e-6);

        // Sub gradient dominates the super gradient on the same data.
        let sup = TestFunctionBundle::with_floor(
            BundleKind::Super,
            0.0,
            &[0.0, 0.0],
            &[0.1, 0.1],
            0.01,
            1.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(b.dphi(1, 0.0).unwrap() >= sup.dphi(1, 0.0).unwrap());
    }

    #[test]
    fn gradient_monotonicity_by_kind() {
        let data: &[f64] = &[0.15, -0.25];
        let sup = build_super_test_function(0.0, data, &[0.1, 0.1], 0.01, 1.5, 2.0, 1.0).unwrap();
        let sub = build_sub_test_function(0.0, data, &[0.1, 0.1], 0.01, 1.5, 2.0, 1.0).unwrap();
        // Mixed-sign gaps give opposite gradient signs at the vertex.
        for bundle in [&sup, &sub] {
            assert!(bundle.dphi(1, 0.0).unwrap() > 0.0);
            assert!(bundle.dphi(2, 0.0).unwrap() < 0.0);
        }
        for ray in 1..=2 {
            let eps = sup.eps(ray).unwrap();
            // Super gradients decrease along the ray, sub gradients increase.
            let mut prev = sup.dphi(ray, 0.0).unwrap();
            for k in 1..=8 {
                let cur = sup.dphi(ray, eps * (k as f64 / 8.0)).unwrap();
                assert!(cur <= prev + 1e-15);
                prev = cur;
            }
            let mut prev = sub.dphi(ray, 0.0).unwrap();
            for k in 1..=8 {
                let cur = sub.dphi(ray, eps * (k as f64 / 8.0)).unwrap();
                assert!(cur >= prev - 1e-15);
                prev = cur;
            }
        }
    }

    #[test]
    fn grad_at_vertex_closed_forms() {
        // Super, g = 0.1, lambda = C = 1, eps = 0.1.
        let b = TestFunctionBundle::with_floor(
            BundleKind::Super,
            0.0,
            &[0.11, 0.11],
            &[0.1, 0.1],
            0.01,
            1.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let expected = 0.1 / (1.0 - (-0.1_f64).exp());
        let got = grad_at_vertex(&b, 1).unwrap();
        assert!((got - expected).abs() < 1e-13);
        assert!((got - 1.05083).abs() < 1e-5);
        assert!((fd_dphi(&b, 1, 0.0, 1e-7) - got).abs() < 1e-6);

        // Zero gap gives zero gradient for both kinds.
        let sup0 = build_super_test_function(0.0, &[0.01, 0.01], &[0.1, 0.1], 0.01, 1.0, 1.0, 1.0)
            .unwrap();
        assert_eq!(grad_at_vertex(&sup0, 1).unwrap(), 0.0);
        let sub0 = build_sub_test_function(0.0, &[-0.01, -0.01], &[0.1, 0.1], 0.01, 1.0, 1.0, 1.0)
            .unwrap();
        assert_eq!(grad_at_vertex(&sub0, 1).unwrap(), 0.0);

        // Equal positive gap: 1/(e^b - 1) <= 1/(1 - e^{-b}) makes the super
        // gradient dominate the sub gradient.
        for gap in [0.05, 0.3, 0.9] {
            let sup = TestFunctionBundle::with_floor(
                BundleKind::Super,
                0.0,
                &[gap + 0.01, gap + 0.01],
                &[0.1, 0.1],
                0.01,
                1.0,
                1.0,
                1.0,
                1.0,
            )
            .unwrap();
            let sub = TestFunctionBundle::with_floor(
                BundleKind::Sub,
                0.0,
                &[gap - 0.01, gap - 0.01],
                &[0.1, 0.1],
                0.01,
                1.0,
                1.0,
                1.0,
                1.0,
            )
            .unwrap();
            assert_eq!(sup.gap(1).unwrap(), gap);
            assert_eq!(sub.gap(1).unwrap(), gap);
            assert!(grad_at_vertex(&sup, 1).unwrap() >= grad_at_vertex(&sub, 1).unwrap());
        }
    }

    #[test]
    fn secant_bound() {
        let data: &[f64] = &[0.4, -0.7, 0.0];
        let eps = &[0.05, 0.1, 0.2];
        let sup = build_super_test_function(0.0, data, eps, 0.005, 2.0, 1.5, 1.0).unwrap();
        let sub = build_sub_test_function(0.0, data, eps, 0.005, 2.0, 1.5, 1.0).unwrap();
        for ray in 1..=3 {
            let e = sup.eps(ray).unwrap();
            let secant = (sup.phi(ray, e).unwrap() - sup.phi(ray, 0.0).unwrap()) / e;
            assert!(secant <= sup.dphi(ray, 0.0).unwrap() + 1e-12);
            let secant = (sub.phi(ray, e).unwrap() - sub.phi(ray, 0.0).unwrap()) / e;
            assert!(secant >= sub.dphi(ray, 0.0).unwrap() - 1e-12);
        }
    }

    #[test]
    fn theta_limit_is_cauchy() {
        // Fixed lambda = C = 1, eps = 0.15: the gradient is piecewise linear
        // in theta with slope below 10, so successive differences along
        // theta in {1e-2, 1e-3, 1e-4} stay within 10 theta.
        for data in [0.0_f64, 0.05, -0.08] {
            let grads: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&theta| {
                    let b = build_super_test_function(
                        0.0,
                        &[data, data],
                        &[0.15, 0.15],
                        theta,
                        1.0,
                        1.0,
                        1.0,
                    )
                    .unwrap();
                    grad_at_vertex(&b, 1).unwrap()
                })
                .collect();
            assert!((grads[0] - grads[1]).abs() <= 10.0 * 1e-2);
            assert!((grads[1] - grads[2]).abs() <= 10.0 * 1e-3);
        }
    }

    #[test]
    fn second_order_window() {
        let data: &[f64] = &[0.9, -0.8];
        let eps = &[0.05, 0.12];
        let sup = TestFunctionBundle::second_order(
            BundleKind::Super,
            0.0,
            data,
            eps,
            0.01,
            2.0,
            1.0,
            1.0,
        )
        .unwrap();
        let sub =
            TestFunctionBundle::second_order(BundleKind::Sub, 0.0, data, eps, 0.01, 2.0, 1.0, 1.0)
                .unwrap();
        for ray in 1..=2 {
            let e = sup.eps(ray).unwrap();
            for k in 0..=32 {
                let x = e * (k as f64 / 32.0);
                let d2 = sup.d2phi(ray, x).unwrap();
                assert!((-1.0..=0.0).contains(&d2), "super d2 = {d2}");
                let d2 = sub.d2phi(ray, x).unwrap();
                assert!((0.0..=1.0).contains(&d2), "sub d2 = {d2}");
            }
        }
    }

    /// Along a super bundle built with the certified growth constant, the
    /// ray Hamiltonian is strictly negative on the graph of the bundle
    /// (values at or below phi), which is what forces the Kirchhoff branch
    /// at the vertex.
    #[test]
    fn hamiltonian_negative_on_super_bundle() {
        let lambda = 1.0;
        let bound_m = 2.0;
        let h = HamiltonianSet::uniform_builtin(
            RayFamily::Eikonal { c: 1.0, f: SourceTerm::constant(1.0) },
            2,
            lambda,
            1.0,
        )
        .unwrap();
        // C = C_{M,0} >= max(c, lambda M + sup|f|).
        let big_c = 1.0_f64.max(lambda * bound_m + 1.0) + 0.1;
        let b = build_super_test_function(
            0.0,
            &[0.1, -0.2],
            &[0.1, 0.1],
            0.01,
            lambda,
            big_c,
            bound_m,
        )
        .unwrap();
        for ray in 1..=2 {
            for k in 0..=16 {
                let x = b.eps(ray).unwrap() * (k as f64 / 16.0);
                let phi = b.phi(ray, x).unwrap();
                let dphi = b.dphi(ray, x).unwrap();
                for w in [phi, phi - 0.5, phi - 2.0] {
                    let q = h.eval(ray, x, w, dphi, 0.0).unwrap();
                    assert!(q < 0.0, "Q = {q} at x = {x}, w = {w}");
                }
            }
        }
    }

    #[test]
    fn audit_csv_shape() {
        let b = build_super_test_function(0.0, &[0.1, 0.2], &[0.1, 0.1], 0.01, 1.0, 1.0, 1.0)
            .unwrap();
        let csv = b.audit_csv(11);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "ray,x,phi,dphi,d2phi,residual");
        assert_eq!(lines.len(), 1 + 2 * 11);
        assert!(lines[1].starts_with("1,"));
        assert!(lines[12].starts_with("2,"));
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(build_super_test_function(0.0, &[0.0, 0.0], &[0.1, 0.1], 0.0, 1.0, 1.0, 1.0)
            .is_err());
        assert!(build_super_test_function(0.0, &[0.0, 0.0], &[0.1, 0.1], 0.01, -1.0, 1.0, 1.0)
            .is_err());
        assert!(build_super_test_function(0.0, &[0.0, 0.0], &[0.1, 0.0], 0.01, 1.0, 1.0, 1.0)
            .is_err());
        assert!(build_super_test_function(0.0, &[0.0], &[0.1], 0.01, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn barrier_flux_sum_eikonal() {
        // F = p1 + p2, Q = u + |p| - 1: B = 0 and A = 1.1 sup|Q(x,0,0)| = 1.1.
        let h = HamiltonianSet::uniform_builtin(
            RayFamily::Eikonal { c: 1.0, f: SourceTerm::constant(1.0) },
            2,
            1.0,
            1.0,
        )
        .unwrap();
        let f = KirchhoffCondition::flux_sum(2).unwrap();
        let pair = build_barriers(&h, &f, 2, 1.0).unwrap();
        assert_eq!(pair.b(), 0.0);
        assert!((pair.a() - 1.1).abs() < 1e-12);
        // The barrier is a valid super solution: F(A+B, 0, 0) = 0 and Q >= 0.
        assert!(f.eval(pair.a(), &[0.0, 0.0]).unwrap() <= 0.0);
        assert!(h.eval(1, 0.5, pair.upper(0.5), 0.0, 0.0).unwrap() >= 0.0);
    }

    #[test]
    fn barrier_with_constant_vertex_term() {
        // F = p1 + p2 + 2: B = 1; A = 1.1 sup_x |e^{-x} - 1| = 1.1 (1 - 1/e).
        let h = HamiltonianSet::uniform_builtin(
            RayFamily::Eikonal { c: 1.0, f: SourceTerm::constant(1.0) },
            2,
            1.0,
            1.0,
        )
        .unwrap();
        let f = KirchhoffCondition::linear(vec![1.0, 1.0], 0.0, 2.0).unwrap();
        let pair = build_barriers(&h, &f, 2, 1.0).unwrap();
        assert!((pair.b() - 1.0).abs() < 1e-15);
        let expected_a = 1.1 * (1.0 - (-1.0_f64).exp());
        assert!((pair.a() - expected_a).abs() < 1e-12, "A = {}", pair.a());
        assert!(f.eval(pair.a() + pair.b(), &[-1.0, -1.0]).unwrap() <= 1e-12);
    }

    #[test]
    fn barrier_zero_data() {
        // F(0,...,0) = 0 and Q(x,0,0) = 0 admit the zero barrier.
        let h = HamiltonianSet::uniform_builtin(
            RayFamily::Eikonal { c: 1.0, f: SourceTerm::zero() },
            2,
            1.0,
            1.0,
        )
        .unwrap();
        let f = KirchhoffCondition::flux_sum(2).unwrap();
        let pair = build_barriers(&h, &f, 2, 1.0).unwrap();
        assert_eq!((pair.a(), pair.b()), (0.0, 0.0));
    }

    #[test]
    fn barrier_rejects_uncertified() {
        let h = HamiltonianSet::custom(
            vec![
                |_x: f64, u: f64, p: f64, _xx: f64| -u + p.abs(),
                |_x: f64, u: f64, p: f64, _xx: f64| -u + p.abs(),
            ],
            1.0,
            1.0,
        )
        .unwrap();
        let f = KirchhoffCondition::flux_sum(2).unwrap();
        assert!(build_barriers(&h, &f, 2, 1.0).is_err());
    }
}

//! Nonlinear ray terms `Q_i(x, u, p, X)` and the Kirchhoff vertex term
//! `F(u, p_1, ..., p_I)`, with machine-checkable certifications of the
//! structural assumptions the well-posedness theory rests on:
//!
//! * properness: `Q(x,u,p,X) - Q(x,v,p,X) >= lambda (u - v)` for `v <= u`;
//! * degenerate ellipticity: `X >= Y` implies `Q(..,Y) >= Q(..,X)`;
//! * gradient growth: `|Q| <= C_{M,K} (1 + |p|)` for `|u| <= M`, `|X| <= K`;
//! * x-Lipschitz refinement: `|Q(x,..) - Q(y,..)| <= C_M (1 + |p|) |x - y|`;
//! * Kirchhoff monotonicity: `F` non-increasing in `u`, strictly increasing
//!   in the gradient with rate `alpha > 0`.
//!
//! Builtin families carry closed-form certifications; anything user-supplied
//! is falsified by seeded random sampling over a declared box.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Absolute tolerance for every monotonicity assertion. The assertions are
/// evaluated on closed forms, so only rounding noise is tolerated.
pub const MONOTONICITY_TOL: f64 = 1e-12;

/// Default half-width of the sampling box in `u` (and `v`).
pub const DEFAULT_SAMPLE_M: f64 = 10.0;
/// Default half-width of the sampling box in `p`.
pub const DEFAULT_SAMPLE_P: f64 = 10.0;
/// Default half-width of the sampling box in `X`.
pub const DEFAULT_SAMPLE_K: f64 = 10.0;

/// Seed and budget used when a certification is demanded implicitly
/// (problem construction, barrier construction).
pub const DEFAULT_CERT_SEED: u64 = 0x5747_4e31;
pub const DEFAULT_CERT_BUDGET: usize = 2_000;

const SOURCE_GRID: usize = 1_001;

type RayEvaluator = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
type VertexEvaluator = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Source term `f(x)` entering the builtin families.
#[derive(Clone)]
pub struct SourceTerm(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl SourceTerm {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self(Arc::new(move |_| c))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }

    /// Sup of `|f|` over a uniform grid on `[0, len]`, padded by 5% to cover
    /// values between nodes.
    fn grid_sup(&self, len: f64) -> f64 {
        let mut sup: f64 = 0.0;
        for k in 0..SOURCE_GRID {
            let x = len * (k as f64 / (SOURCE_GRID - 1) as f64);
            sup = sup.max(self.eval(x).abs());
        }
        sup * 1.05
    }

    /// Largest grid slope of `f` over `[0, len]`, padded by 10%.
    fn grid_lipschitz(&self, len: f64) -> f64 {
        let h = len / (SOURCE_GRID - 1) as f64;
        let mut lip: f64 = 0.0;
        let mut prev = self.eval(0.0);
        for k in 1..SOURCE_GRID {
            let cur = self.eval(h * k as f64);
            lip = lip.max((cur - prev).abs() / h);
            prev = cur;
        }
        lip * 1.1
    }
}

impl std::fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SourceTerm(<fn>)")
    }
}

/// Builtin per-ray families. The shared properness rate `lambda` lives on
/// the [`HamiltonianSet`]; each family adds its own terms.
#[derive(Debug, Clone)]
pub enum RayFamily {
    /// `Q = lambda u + b p - f(x)`; first order.
    Advection { b: f64, f: SourceTerm },
    /// `Q = lambda u + c |p| - f(x)`, `c > 0`; first order.
    Eikonal { c: f64, f: SourceTerm },
    /// `Q = lambda u + c |p| - nu X - f(x)`, `c > 0`, `nu >= 0`; second
    /// order, degenerate when `nu = 0`.
    Viscous { c: f64, nu: f64, f: SourceTerm },
}

impl RayFamily {
    fn validate(&self) -> Result<()> {
        match self {
            RayFamily::Advection { b, .. } => {
                if !b.is_finite() {
                    return Err(Error::Domain(format!("advection drift must be finite, got {b}")));
                }
            }
            RayFamily::Eikonal { c, .. } => {
                if !c.is_finite() || *c <= 0.0 {
                    return Err(Error::Domain(format!("eikonal speed must be positive, got {c}")));
                }
            }
            RayFamily::Viscous { c, nu, .. } => {
                if !c.is_finite() || *c < 0.0 {
                    return Err(Error::Domain(format!(
                        "viscous speed must be non-negative, got {c}"
                    )));
                }
                if !nu.is_finite() || *nu < 0.0 {
                    return Err(Error::Domain(format!(
                        "viscosity must be non-negative, got {nu}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn eval(&self, lambda: f64, x: f64, u: f64, p: f64, xx: f64) -> f64 {
        match self {
            RayFamily::Advection { b, f } => lambda * u + b * p - f.eval(x),
            RayFamily::Eikonal { c, f } => lambda * u + c * p.abs() - f.eval(x),
            RayFamily::Viscous { c, nu, f } => lambda * u + c * p.abs() - nu * xx - f.eval(x),
        }
    }

    /// `true` when the evaluator is constant in `X`.
    pub fn is_first_order(&self) -> bool {
        match self {
            RayFamily::Advection { .. } | RayFamily::Eikonal { .. } => true,
            RayFamily::Viscous { nu, .. } => *nu == 0.0,
        }
    }

    fn gradient_slope(&self) -> f64 {
        match self {
            RayFamily::Advection { b, .. } => b.abs(),
            RayFamily::Eikonal { c, .. } | RayFamily::Viscous { c, .. } => *c,
        }
    }

    fn viscosity(&self) -> f64 {
        match self {
            RayFamily::Viscous { nu, .. } => *nu,
            _ => 0.0,
        }
    }

    fn source(&self) -> &SourceTerm {
        match self {
            RayFamily::Advection { f, .. }
            | RayFamily::Eikonal { f, .. }
            | RayFamily::Viscous { f, .. } => f,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            RayFamily::Advection { .. } => "advection",
            RayFamily::Eikonal { .. } => "eikonal",
            RayFamily::Viscous { .. } => "viscous",
        }
    }
}

#[derive(Clone)]
enum RayTerm {
    Builtin(RayFamily),
    Custom(RayEvaluator),
}

/// Declared gradient-growth constant: `|Q| <= c (1 + |p|)` on
/// `|u| <= m`, `|X| <= k`.
#[derive(Debug, Clone, Copy)]
pub struct GrowthConstant {
    pub m: f64,
    pub k: f64,
    pub c: f64,
}

/// Declared x-Lipschitz constant of the first-order refinement:
/// `|Q(x,u,p) - Q(y,u,p)| <= c (1 + |p|) |x - y|` on `|u| <= m`.
#[derive(Debug, Clone, Copy)]
pub struct XLipschitzConstant {
    pub m: f64,
    pub c: f64,
}

/// The per-ray nonlinear terms of one problem, together with the constants
/// their certification refers to. Immutable after construction; evaluation
/// is pure.
#[derive(Clone)]
pub struct HamiltonianSet {
    rays: Vec<RayTerm>,
    lambda: f64,
    domain_length: f64,
    growth_constants: Vec<GrowthConstant>,
    x_lipschitz: Vec<XLipschitzConstant>,
    modulus_declared: bool,
}

impl std::fmt::Debug for HamiltonianSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self
            .rays
            .iter()
            .map(|r| match r {
                RayTerm::Builtin(fam) => fam.name(),
                RayTerm::Custom(_) => "custom",
            })
            .collect();
        f.debug_struct("HamiltonianSet")
            .field("rays", &names)
            .field("lambda", &self.lambda)
            .field("domain_length", &self.domain_length)
            .finish()
    }
}

impl HamiltonianSet {
    /// One builtin family per ray.
    pub fn builtin(families: Vec<RayFamily>, lambda: f64, domain_length: f64) -> Result<Self> {
        if families.len() < 2 {
            return Err(Error::Domain(format!(
                "a hamiltonian set needs at least 2 rays, got {}",
                families.len()
            )));
        }
        for fam in &families {
            fam.validate()?;
        }
        Self::validate_shared(lambda, domain_length)?;
        Ok(Self {
            rays: families.into_iter().map(RayTerm::Builtin).collect(),
            lambda,
            domain_length,
            growth_constants: Vec::new(),
            x_lipschitz: Vec::new(),
            modulus_declared: true,
        })
    }

    /// The same builtin family replicated on every ray.
    pub fn uniform_builtin(
        family: RayFamily,
        ray_count: usize,
        lambda: f64,
        domain_length: f64,
    ) -> Result<Self> {
        Self::builtin(vec![family; ray_count], lambda, domain_length)
    }

    /// User-supplied evaluators `(x, u, p, X) -> Q_i`. Certification of the
    /// structural assumptions is sampled, not analytic; growth and
    /// x-Lipschitz constants must be declared before the corresponding
    /// checks can pass.
    pub fn custom<F>(evaluators: Vec<F>, lambda: f64, domain_length: f64) -> Result<Self>
    where
        F: Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        if evaluators.len() < 2 {
            return Err(Error::Domain(format!(
                "a hamiltonian set needs at least 2 rays, got {}",
                evaluators.len()
            )));
        }
        Self::validate_shared(lambda, domain_length)?;
        Ok(Self {
            rays: evaluators
                .into_iter()
                .map(|f| RayTerm::Custom(Arc::new(f) as RayEvaluator))
                .collect(),
            lambda,
            domain_length,
            growth_constants: Vec::new(),
            x_lipschitz: Vec::new(),
            modulus_declared: false,
        })
    }

    fn validate_shared(lambda: f64, domain_length: f64) -> Result<()> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Domain(format!(
                "properness rate lambda must be positive, got {lambda}"
            )));
        }
        if !domain_length.is_finite() || domain_length <= 0.0 {
            return Err(Error::Domain(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        Ok(())
    }

    pub fn with_growth_constant(mut self, decl: GrowthConstant) -> Self {
        self.growth_constants.push(decl);
        self
    }

    pub fn with_x_lipschitz(mut self, decl: XLipschitzConstant) -> Self {
        self.x_lipschitz.push(decl);
        self
    }

    /// Records that the continuity modulus of the doubling-variable matrix
    /// condition holds for these evaluators. The modulus itself is never
    /// instantiated; it is a declaration, not a checked object.
    pub fn declare_modulus(mut self) -> Self {
        self.modulus_declared = true;
        self
    }

    pub fn modulus_declared(&self) -> bool {
        self.modulus_declared
    }

    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    /// `true` when every ray is a builtin family (analytic certification).
    pub fn is_builtin(&self) -> bool {
        self.rays.iter().all(|r| matches!(r, RayTerm::Builtin(_)))
    }

    /// The builtin family on ray `ray`, if any.
    pub fn family(&self, ray: usize) -> Option<&RayFamily> {
        match self.rays.get(ray.checked_sub(1)?) {
            Some(RayTerm::Builtin(fam)) => Some(fam),
            _ => None,
        }
    }

    /// Evaluates `Q_i(x, u, p, X)` on ray `ray` (1-based).
    pub fn eval(&self, ray: usize, x: f64, u: f64, p: f64, xx: f64) -> Result<f64> {
        if ray == 0 || ray > self.rays.len() {
            return Err(Error::Domain(format!(
                "ray index {ray} outside 1..={}",
                self.rays.len()
            )));
        }
        if !x.is_finite() || x < 0.0 || x > self.domain_length {
            return Err(Error::Domain(format!(
                "coordinate {x} outside [0, {}]",
                self.domain_length
            )));
        }
        if !(u.is_finite() && p.is_finite() && xx.is_finite()) {
            return Err(Error::Domain(format!(
                "hamiltonian arguments must be finite, got u={u}, p={p}, X={xx}"
            )));
        }
        Ok(self.eval_unchecked(ray, x, u, p, xx))
    }

    pub(crate) fn eval_unchecked(&self, ray: usize, x: f64, u: f64, p: f64, xx: f64) -> f64 {
        match &self.rays[ray - 1] {
            RayTerm::Builtin(fam) => fam.eval(self.lambda, x, u, p, xx),
            RayTerm::Custom(f) => f(x, u, p, xx),
        }
    }

    /// The gradient-growth constant covering `|u| <= m`, `|X| <= k`:
    /// closed form for builtin sets, the best declared constant otherwise.
    pub fn growth_constant(&self, m: f64, k: f64) -> Option<f64> {
        if self.is_builtin() {
            self.builtin_growth_constant(m, k)
        } else {
            self.declared_growth_constant(m, k)
        }
    }

    /// Analytic gradient-growth constant for a builtin set:
    /// `C_{M,K} = max_i max(slope_i, lambda M + nu_i K + sup|f_i|)`.
    fn builtin_growth_constant(&self, m: f64, k: f64) -> Option<f64> {
        let mut c: f64 = 0.0;
        for ray in &self.rays {
            let RayTerm::Builtin(fam) = ray else { return None };
            let bound = self.lambda * m
                + fam.viscosity() * k
                + fam.source().grid_sup(self.domain_length);
            c = c.max(fam.gradient_slope()).max(bound);
        }
        Some(c)
    }

    fn declared_growth_constant(&self, m: f64, k: f64) -> Option<f64> {
        self.growth_constants
            .iter()
            .filter(|g| g.m >= m && g.k >= k)
            .map(|g| g.c)
            .fold(None, |acc, c| Some(acc.map_or(c, |a: f64| a.min(c))))
    }

    fn builtin_x_lipschitz(&self) -> Option<f64> {
        let mut c: f64 = 0.0;
        for ray in &self.rays {
            let RayTerm::Builtin(fam) = ray else { return None };
            c = c.max(fam.source().grid_lipschitz(self.domain_length));
        }
        Some(c)
    }

    fn declared_x_lipschitz(&self, m: f64) -> Option<f64> {
        self.x_lipschitz
            .iter()
            .filter(|d| d.m >= m)
            .map(|d| d.c)
            .fold(None, |acc, c| Some(acc.map_or(c, |a: f64| a.min(c))))
    }

    /// Properness in `u` with rate `lambda`.
    pub fn check_properness(&self, sample_budget: usize, seed: u64) -> AssumptionReport {
        if self.is_builtin() {
            return AssumptionReport::certified(
                Assumption::Properness,
                format!(
                    "builtin families are linear in u with coefficient lambda = {} > 0, \
                     so Q(x,u,p,X) - Q(x,v,p,X) = lambda (u - v) exactly",
                    self.lambda
                ),
            )
            .with_metric("lambda", self.lambda);
        }
        self.check_properness_sampled(sample_budget, seed)
    }

    /// The sampling route behind [`Self::check_properness`], also usable to
    /// cross-check an analytic certification.
    pub fn check_properness_sampled(&self, sample_budget: usize, seed: u64) -> AssumptionReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = sample_budget.max(1);
        for n in 0..budget {
            let (x, _, p, xx) = self.draw_point(&mut rng);
            let u = rng.random_range(-DEFAULT_SAMPLE_M..DEFAULT_SAMPLE_M);
            let v = rng.random_range(-DEFAULT_SAMPLE_M..=u);
            for ray in 1..=self.rays.len() {
                let diff = self.eval_unchecked(ray, x, u, p, xx)
                    - self.eval_unchecked(ray, x, v, p, xx);
                let floor = self.lambda * (u - v);
                if diff < floor - MONOTONICITY_TOL {
                    return AssumptionReport::failed(
                        Assumption::Properness,
                        Counterexample {
                            inputs: vec![
                                ("ray", ray as f64),
                                ("x", x),
                                ("u", u),
                                ("v", v),
                                ("p", p),
                                ("X", xx),
                            ],
                            lhs: diff,
                            rhs: floor,
                        },
                        n + 1,
                        seed,
                    );
                }
            }
        }
        AssumptionReport::passed_sampled(Assumption::Properness, budget, seed)
    }

    /// Degenerate ellipticity: non-increasing in `X`.
    pub fn check_ellipticity(&self, sample_budget: usize, seed: u64) -> AssumptionReport {
        if self.is_builtin() {
            let degenerate = self.rays.iter().all(|r| match r {
                RayTerm::Builtin(fam) => fam.is_first_order(),
                RayTerm::Custom(_) => false,
            });
            let why = if degenerate {
                "builtin first-order families are constant in X (fully degenerate case)"
                    .to_string()
            } else {
                "builtin families are linear in X with coefficient -nu <= 0".to_string()
            };
            return AssumptionReport::certified(Assumption::Ellipticity, why);
        }
        self.check_ellipticity_sampled(sample_budget, seed)
    }

    pub fn check_ellipticity_sampled(&self, sample_budget: usize, seed: u64) -> AssumptionReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = sample_budget.max(1);
        for n in 0..budget {
            let (x, u, p, _) = self.draw_point(&mut rng);
            let xx = rng.random_range(-DEFAULT_SAMPLE_K..DEFAULT_SAMPLE_K);
            let yy = rng.random_range(-DEFAULT_SAMPLE_K..=xx);
            for ray in 1..=self.rays.len() {
                let at_low = self.eval_unchecked(ray, x, u, p, yy);
                let at_high = self.eval_unchecked(ray, x, u, p, xx);
                if at_low < at_high - MONOTONICITY_TOL {
                    return AssumptionReport::failed(
                        Assumption::Ellipticity,
                        Counterexample {
                            inputs: vec![
                                ("ray", ray as f64),
                                ("x", x),
                                ("u", u),
                                ("p", p),
                                ("X", xx),
                                ("Y", yy),
                            ],
                            lhs: at_low,
                            rhs: at_high,
                        },
                        n + 1,
                        seed,
                    );
                }
            }
        }
        AssumptionReport::passed_sampled(Assumption::Ellipticity, budget, seed)
    }

    /// Gradient growth `|Q| <= C_{M,K}(1 + |p|)` on `|u| <= m`, `|X| <= k`.
    /// The report carries both the declared constant and the largest sampled
    /// ratio `|Q| / (1 + |p|)`.
    pub fn check_gradient_growth(
        &self,
        m: f64,
        k: f64,
        sample_budget: usize,
        seed: u64,
    ) -> AssumptionReport {
        let declared = if self.is_builtin() {
            self.builtin_growth_constant(m, k)
        } else {
            self.declared_growth_constant(m, k)
        };
        let Some(c) = declared else {
            return AssumptionReport {
                assumption: Assumption::GradientGrowth,
                status: CheckStatus::Failed,
                counterexample: None,
                samples_used: 0,
                seed,
                justification: Some(format!(
                    "no declared growth constant covers the box |u| <= {m}, |X| <= {k}"
                )),
                metrics: Vec::new(),
            };
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = sample_budget.max(1);
        let mut empirical: f64 = 0.0;
        let mut violation: Option<(usize, Counterexample)> = None;
        for n in 0..budget {
            let x = rng.random_range(0.0..self.domain_length);
            let u = rng.random_range(-m..=m);
            let p = rng.random_range(-DEFAULT_SAMPLE_P..DEFAULT_SAMPLE_P);
            let xx = if k > 0.0 { rng.random_range(-k..=k) } else { 0.0 };
            for ray in 1..=self.rays.len() {
                let q = self.eval_unchecked(ray, x, u, p, xx);
                let ratio = q.abs() / (1.0 + p.abs());
                empirical = empirical.max(ratio);
                if ratio > c + MONOTONICITY_TOL && violation.is_none() {
                    violation = Some((
                        n + 1,
                        Counterexample {
                            inputs: vec![
                                ("ray", ray as f64),
                                ("x", x),
                                ("u", u),
                                ("p", p),
                                ("X", xx),
                            ],
                            lhs: q.abs(),
                            rhs: c * (1.0 + p.abs()),
                        },
                    ));
                }
            }
            if violation.is_some() {
                break;
            }
        }

        let mut report = match violation {
            Some((used, cx)) => {
                let mut r =
                    AssumptionReport::failed(Assumption::GradientGrowth, cx, used, seed);
                r.metrics.push(("growth_exponent".into(), self.growth_exponent(m)));
                r
            }
            None if self.is_builtin() => AssumptionReport::certified(
                Assumption::GradientGrowth,
                format!(
                    "|lambda u + slope |p| - nu X - f(x)| <= max(slope, lambda M + nu K + sup|f|) \
                     (1 + |p|) on the box; C_{{M,K}} = {c}"
                ),
            ),
            None => AssumptionReport::passed_sampled(Assumption::GradientGrowth, budget, seed),
        };
        report.metrics.push(("declared_c".into(), c));
        report.metrics.push(("empirical_c".into(), empirical));
        report
    }

    /// Least-squares exponent of `|Q|` against `1 + |p|` along a geometric
    /// ladder of gradients; ~1 for admissible terms, >1 for superlinear ones.
    fn growth_exponent(&self, m: f64) -> f64 {
        let x = self.domain_length * 0.5;
        let mut pts = Vec::new();
        for j in 0..=10 {
            let p = 2.0_f64.powi(j);
            let mut worst: f64 = 0.0;
            for ray in 1..=self.rays.len() {
                for u in [-m, 0.0, m] {
                    for s in [-1.0, 1.0] {
                        worst = worst.max(self.eval_unchecked(ray, x, u, s * p, 0.0).abs());
                    }
                }
            }
            if worst > 0.0 {
                pts.push(((1.0 + p).ln(), worst.ln()));
            }
        }
        least_squares_slope(&pts)
    }

    /// First-order refinement of the doubling-variable condition:
    /// `|Q(x,u,p) - Q(y,u,p)| <= C_M (1 + |p|) |x - y|` on `|u| <= m`.
    pub fn check_x_lipschitz(&self, m: f64, sample_budget: usize, seed: u64) -> AssumptionReport {
        let declared = if self.is_builtin() {
            self.builtin_x_lipschitz()
        } else {
            self.declared_x_lipschitz(m)
        };
        let Some(c) = declared else {
            return AssumptionReport {
                assumption: Assumption::XLipschitz,
                status: CheckStatus::Failed,
                counterexample: None,
                samples_used: 0,
                seed,
                justification: Some(format!(
                    "no declared x-Lipschitz constant covers |u| <= {m}"
                )),
                metrics: Vec::new(),
            };
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = sample_budget.max(1);
        for n in 0..budget {
            let x = rng.random_range(0.0..self.domain_length);
            let y = rng.random_range(0.0..self.domain_length);
            let u = rng.random_range(-m..=m);
            let p = rng.random_range(-DEFAULT_SAMPLE_P..DEFAULT_SAMPLE_P);
            for ray in 1..=self.rays.len() {
                let gap = (self.eval_unchecked(ray, x, u, p, 0.0)
                    - self.eval_unchecked(ray, y, u, p, 0.0))
                .abs();
                let bound = c * (1.0 + p.abs()) * (x - y).abs();
                if gap > bound + MONOTONICITY_TOL {
                    return AssumptionReport::failed(
                        Assumption::XLipschitz,
                        Counterexample {
                            inputs: vec![
                                ("ray", ray as f64),
                                ("x", x),
                                ("y", y),
                                ("u", u),
                                ("p", p),
                            ],
                            lhs: gap,
                            rhs: bound,
                        },
                        n + 1,
                        seed,
                    );
                }
            }
        }
        if self.is_builtin() {
            AssumptionReport::certified(
                Assumption::XLipschitz,
                format!(
                    "builtin families depend on x only through the source term, \
                     |Q(x,..) - Q(y,..)| = |f(y) - f(x)| <= C_M |x - y| with C_M = {c}"
                ),
            )
            .with_metric("c_m", c)
        } else {
            AssumptionReport::passed_sampled(Assumption::XLipschitz, budget, seed)
                .with_metric("c_m", c)
        }
    }

    /// Runs every certification with default budgets; `Err` when one fails.
    pub fn certify(&self) -> Result<()> {
        let checks = [
            self.check_properness(DEFAULT_CERT_BUDGET, DEFAULT_CERT_SEED),
            self.check_ellipticity(DEFAULT_CERT_BUDGET, DEFAULT_CERT_SEED),
            self.check_gradient_growth(
                DEFAULT_SAMPLE_M,
                DEFAULT_SAMPLE_K,
                DEFAULT_CERT_BUDGET,
                DEFAULT_CERT_SEED,
            ),
        ];
        for report in checks {
            if !report.passed() {
                return Err(Error::Precondition(format!(
                    "hamiltonian set fails {:?}: {}",
                    report.assumption,
                    report
                        .justification
                        .as_deref()
                        .unwrap_or("sampled counterexample found")
                )));
            }
        }
        Ok(())
    }

    fn draw_point(&self, rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
        (
            rng.random_range(0.0..self.domain_length),
            rng.random_range(-DEFAULT_SAMPLE_M..DEFAULT_SAMPLE_M),
            rng.random_range(-DEFAULT_SAMPLE_P..DEFAULT_SAMPLE_P),
            rng.random_range(-DEFAULT_SAMPLE_K..DEFAULT_SAMPLE_K),
        )
    }
}

#[derive(Clone)]
enum VertexTerm {
    /// `F = sum_i gamma_i p_i - beta u + c0`, `gamma_i >= alpha > 0`,
    /// `beta >= 0`.
    Linear { gamma: Vec<f64>, beta: f64, c0: f64 },
    Custom(VertexEvaluator),
}

/// The nonlinear Kirchhoff vertex term `F` with its declared monotonicity
/// rate `alpha`.
#[derive(Clone)]
pub struct KirchhoffCondition {
    term: VertexTerm,
    alpha: f64,
    arity: usize,
}

impl std::fmt::Debug for KirchhoffCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.term {
            VertexTerm::Linear { .. } => "linear",
            VertexTerm::Custom(_) => "custom",
        };
        f.debug_struct("KirchhoffCondition")
            .field("kind", &kind)
            .field("alpha", &self.alpha)
            .field("arity", &self.arity)
            .finish()
    }
}

impl KirchhoffCondition {
    /// The linear builtin family; `alpha` is the smallest flux weight.
    pub fn linear(gamma: Vec<f64>, beta: f64, c0: f64) -> Result<Self> {
        if gamma.len() < 2 {
            return Err(Error::Domain(format!(
                "a Kirchhoff condition needs at least 2 fluxes, got {}",
                gamma.len()
            )));
        }
        let alpha = gamma.iter().copied().fold(f64::INFINITY, f64::min);
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Domain(format!(
                "flux weights must be strictly positive, min was {alpha}"
            )));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Domain(format!(
                "value coefficient beta must be non-negative, got {beta}"
            )));
        }
        if !c0.is_finite() {
            return Err(Error::Domain(format!("constant term must be finite, got {c0}")));
        }
        let arity = gamma.len();
        Ok(Self { term: VertexTerm::Linear { gamma, beta, c0 }, alpha, arity })
    }

    /// Equal unit weights, no value term: `F = sum_i p_i`.
    pub fn flux_sum(arity: usize) -> Result<Self> {
        Self::linear(vec![1.0; arity], 0.0, 0.0)
    }

    /// User-supplied vertex term with declared monotonicity rate.
    pub fn custom<F>(arity: usize, alpha: f64, evaluator: F) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        if arity < 2 {
            return Err(Error::Domain(format!(
                "a Kirchhoff condition needs at least 2 fluxes, got {arity}"
            )));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { term: VertexTerm::Custom(Arc::new(evaluator)), alpha, arity })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_builtin(&self) -> bool {
        matches!(self.term, VertexTerm::Linear { .. })
    }

    pub fn eval(&self, u: f64, p: &[f64]) -> Result<f64> {
        if p.len() != self.arity {
            return Err(Error::Shape(format!(
                "expected {} gradient entries, got {}",
                self.arity,
                p.len()
            )));
        }
        if !u.is_finite() || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Kirchhoff arguments must be finite".into()));
        }
        Ok(self.eval_unchecked(u, p))
    }

    pub(crate) fn eval_unchecked(&self, u: f64, p: &[f64]) -> f64 {
        match &self.term {
            VertexTerm::Linear { gamma, beta, c0 } => {
                gamma.iter().zip(p).map(|(g, pi)| g * pi).sum::<f64>() - beta * u + c0
            }
            VertexTerm::Custom(f) => f(u, p),
        }
    }

    /// Monotonicity of `F`: non-increasing in `u`, strictly increasing in
    /// the gradient with rate `alpha`.
    pub fn check(&self, sample_budget: usize, seed: u64) -> AssumptionReport {
        if let VertexTerm::Linear { gamma, beta, .. } = &self.term {
            return AssumptionReport::certified(
                Assumption::KirchhoffMonotone,
                format!(
                    "linear family: d F / d p_i = gamma_i >= alpha = {} and \
                     d F / d u = -beta = {} <= 0",
                    self.alpha, -beta
                ),
            )
            .with_metric("alpha", self.alpha)
            .with_metric("min_gamma", gamma.iter().copied().fold(f64::INFINITY, f64::min));
        }
        self.check_sampled(sample_budget, seed)
    }

    pub fn check_sampled(&self, sample_budget: usize, seed: u64) -> AssumptionReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = sample_budget.max(1);
        let mut q = vec![0.0; self.arity];
        let mut p = vec![0.0; self.arity];
        for n in 0..budget {
            let u = rng.random_range(-DEFAULT_SAMPLE_M..DEFAULT_SAMPLE_M);
            let v = rng.random_range(-DEFAULT_SAMPLE_M..=u);
            for i in 0..self.arity {
                q[i] = rng.random_range(-DEFAULT_SAMPLE_P..DEFAULT_SAMPLE_P);
                p[i] = q[i] + rng.random_range(0.0..DEFAULT_SAMPLE_P);
            }

            // (e): non-increasing in u.
            let f_u = self.eval_unchecked(u, &q);
            let f_v = self.eval_unchecked(v, &q);
            if f_u > f_v + MONOTONICITY_TOL {
                let mut inputs = vec![("u", u), ("v", v)];
                inputs.extend(q.iter().enumerate().map(|(i, &x)| (named_p(i), x)));
                return AssumptionReport::failed(
                    Assumption::KirchhoffMonotone,
                    Counterexample { inputs, lhs: f_u, rhs: f_v },
                    n + 1,
                    seed,
                );
            }

            // (f): strictly increasing in the gradient with rate alpha.
            let gap = self.eval_unchecked(u, &p) - self.eval_unchecked(u, &q);
            let floor = self.alpha * p.iter().zip(&q).map(|(a, b)| a - b).sum::<f64>();
            if gap < floor - MONOTONICITY_TOL {
                let mut inputs = vec![("u", u)];
                inputs.extend(p.iter().enumerate().map(|(i, &x)| (named_p(i), x)));
                inputs.extend(q.iter().enumerate().map(|(i, &x)| (named_q(i), x)));
                return AssumptionReport::failed(
                    Assumption::KirchhoffMonotone,
                    Counterexample { inputs, lhs: gap, rhs: floor },
                    n + 1,
                    seed,
                );
            }
        }
        AssumptionReport::passed_sampled(Assumption::KirchhoffMonotone, budget, seed)
    }

    /// Certification with default budgets; `Err` when it fails.
    pub fn certify(&self) -> Result<()> {
        let report = self.check(DEFAULT_CERT_BUDGET, DEFAULT_CERT_SEED);
        if report.passed() {
            Ok(())
        } else {
            Err(Error::Precondition(
                "Kirchhoff condition fails its monotonicity check".into(),
            ))
        }
    }
}

// Static names for counterexample slots up to 8 rays; beyond that the
// generic label still identifies the block.
fn named_p(i: usize) -> &'static str {
    const NAMES: [&str; 8] = ["p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8"];
    NAMES.get(i).copied().unwrap_or("p*")
}

fn named_q(i: usize) -> &'static str {
    const NAMES: [&str; 8] = ["q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8"];
    NAMES.get(i).copied().unwrap_or("q*")
}

/// Which structural assumption a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    Properness,
    Ellipticity,
    GradientGrowth,
    XLipschitz,
    KirchhoffMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    /// Holds by a closed-form argument attached to the builtin family.
    CertifiedAnalytic,
    /// Survived the sampled falsification budget.
    PassedSampled,
    Failed,
}

/// A sample on which an assumption fails; `lhs`/`rhs` are the two sides of
/// the violated inequality, reproducible from the stored inputs.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub inputs: Vec<(&'static str, f64)>,
    pub lhs: f64,
    pub rhs: f64,
}

impl Counterexample {
    pub fn input(&self, name: &str) -> Option<f64> {
        self.inputs.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub assumption: Assumption,
    pub status: CheckStatus,
    pub counterexample: Option<Counterexample>,
    pub samples_used: usize,
    pub seed: u64,
    pub justification: Option<String>,
    pub metrics: Vec<(String, f64)>,
}

impl AssumptionReport {
    fn certified(assumption: Assumption, why: String) -> Self {
        Self {
            assumption,
            status: CheckStatus::CertifiedAnalytic,
            counterexample: None,
            samples_used: 0,
            seed: 0,
            justification: Some(why),
            metrics: Vec::new(),
        }
    }

    fn passed_sampled(assumption: Assumption, samples_used: usize, seed: u64) -> Self {
        Self {
            assumption,
            status: CheckStatus::PassedSampled,
            counterexample: None,
            samples_used,
            seed,
            justification: None,
            metrics: Vec::new(),
        }
    }

    fn failed(
        assumption: Assumption,
        counterexample: Counterexample,
        samples_used: usize,
        seed: u64,
    ) -> Self {
        Self {
            assumption,
            status: CheckStatus::Failed,
            counterexample: Some(counterexample),
            samples_used,
            seed,
            justification: None,
            metrics: Vec::new(),
        }
    }

    fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.push((name.to_string(), value));
        self
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Failed
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = match self.status {
            CheckStatus::CertifiedAnalytic => "certified-analytic",
            CheckStatus::PassedSampled => "passed-sampled",
            CheckStatus::Failed => "FAILED",
        };
        write!(f, "{:?}: {status}", self.assumption)?;
        if self.samples_used > 0 {
            write!(f, " ({} samples, seed {})", self.samples_used, self.seed)?;
        }
        if let Some(cx) = &self.counterexample {
            write!(f, "; counterexample")?;
            for (name, value) in &cx.inputs {
                write!(f, " {name}={value:.6}")?;
            }
            write!(f, " gives {:.6e} vs {:.6e}", cx.lhs, cx.rhs)?;
        }
        for (name, value) in &self.metrics {
            write!(f, "; {name}={value:.6}")?;
        }
        if let Some(why) = &self.justification {
            write!(f, "; {why}")?;
        }
        Ok(())
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eikonal_pair(lambda: f64, c: f64) -> HamiltonianSet {
        HamiltonianSet::uniform_builtin(
            RayFamily::Eikonal { c, f: SourceTerm::constant(1.0) },
            2,
            lambda,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn eval_builtin_families() {
        // Q = u + |p| - 1 at (0.5, 1, 0, 0) -> 0.
        let h = eikonal_pair(1.0, 1.0);
        assert_eq!(h.eval(1, 0.5, 1.0, 0.0, 0.0).unwrap(), 0.0);

        // Q = u + |p| - X - 1 at (0, 0, 2, 1) -> 0.
        let viscous = HamiltonianSet::uniform_builtin(
            RayFamily::Viscous { c: 1.0, nu: 1.0, f: SourceTerm::constant(1.0) },
            2,
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(viscous.eval(1, 0.0, 0.0, 2.0, 1.0).unwrap(), 0.0);

        // Q = 2u - p at (0.3, 1, 1, 7) -> 1; X is ignored by the family.
        let advection = HamiltonianSet::uniform_builtin(
            RayFamily::Advection { b: -1.0, f: SourceTerm::zero() },
            2,
            2.0,
            1.0,
        )
        .unwrap();
        assert_eq!(advection.eval(1, 0.3, 1.0, 1.0, 7.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        let h = eikonal_pair(1.0, 1.0);
        assert!(h.eval(3, 0.5, 0.0, 0.0, 0.0).is_err());
        assert!(h.eval(1, 2.0, 0.0, 0.0, 0.0).is_err());
        assert!(h.eval(1, 0.5, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn properness_certified_for_builtin() {
        let h = eikonal_pair(1.0, 1.0);
        let report = h.check_properness(10, 1);
        assert_eq!(report.status, CheckStatus::CertifiedAnalytic);
        // The sampled route must agree on builtins.
        assert!(h.check_properness_sampled(2_000, 1).passed());
    }

    #[test]
    fn properness_fails_for_reversed_monotonicity() {
        // Q = -u + |p| with declared lambda = 1.
        let h = HamiltonianSet::custom(
            vec![
                |_x: f64, u: f64, p: f64, _xx: f64| -u + p.abs(),
                |_x: f64, u: f64, p: f64, _xx: f64| -u + p.abs(),
            ],
            1.0,
            1.0,
        )
        .unwrap();
        let report = h.check_properness(10_000, 7);
        assert_eq!(report.status, CheckStatus::Failed);
        let cx = report.counterexample.expect("failure must carry a counterexample");

        // The counterexample must re-evaluate to the stored violation.
        let (ray, x) = (cx.input("ray").unwrap() as usize, cx.input("x").unwrap());
        let (u, v) = (cx.input("u").unwrap(), cx.input("v").unwrap());
        let (p, xx) = (cx.input("p").unwrap(), cx.input("X").unwrap());
        let diff = h.eval(ray, x, u, p, xx).unwrap() - h.eval(ray, x, v, p, xx).unwrap();
        assert_eq!(diff, cx.lhs);
        assert!(diff < cx.rhs - MONOTONICITY_TOL);

        // Same seed, same counterexample.
        let replay = h.check_properness(10_000, 7);
        let cx2 = replay.counterexample.unwrap();
        assert_eq!(cx.inputs, cx2.inputs);
    }

    #[test]
    fn properness_sampled_passes_smooth_case() {
        // Q = 2u + sin(p), lambda = 2.
        let h = HamiltonianSet::custom(
            vec![
                |_x: f64, u: f64, p: f64, _xx: f64| 2.0 * u + p.sin(),
                |_x: f64, u: f64, p: f64, _xx: f64| 2.0 * u + p.sin(),
            ],
            2.0,
            1.0,
        )
        .unwrap();
        let report = h.check_properness(10_000, 3);
        assert_eq!(report.status, CheckStatus::PassedSampled);
        assert_eq!(report.samples_used, 10_000);
    }

    #[test]
    fn ellipticity_verdicts() {
        // Linear decreasing in X: certified.
        let viscous = HamiltonianSet::uniform_builtin(
            RayFamily::Viscous { c: 1.0, nu: 1.0, f: SourceTerm::zero() },
            2,
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(viscous.check_ellipticity(10, 1).status, CheckStatus::CertifiedAnalytic);
        assert!(viscous.check_ellipticity_sampled(2_000, 1).passed());

        // First-order (X-independent) counts as degenerate elliptic.
        let first = eikonal_pair(1.0, 1.0);
        assert_eq!(first.check_ellipticity(10, 1).status, CheckStatus::CertifiedAnalytic);

        // Q = u + X^2 is convex in X and must fail.
        let bad = HamiltonianSet::custom(
            vec![
                |_x: f64, u: f64, _p: f64, xx: f64| u + xx * xx,
                |_x: f64, u: f64, _p: f64, xx: f64| u + xx * xx,
            ],
            1.0,
            1.0,
        )
        .unwrap();
        let report = bad.check_ellipticity(10_000, 11);
        assert_eq!(report.status, CheckStatus::Failed);
        let cx = report.counterexample.unwrap();
        assert!(cx.lhs < cx.rhs - MONOTONICITY_TOL);
    }

    #[test]
    fn gradient_growth_verdicts() {
        // Q = u + |p| - 1: C_{1,0} = max(1, 1*1 + 0 + 1.05) >= 2.
        let h = eikonal_pair(1.0, 1.0);
        let report = h.check_gradient_growth(1.0, 0.0, 2_000, 5);
        assert_eq!(report.status, CheckStatus::CertifiedAnalytic);
        assert!(report.metric("declared_c").unwrap() >= 2.0);
        assert!(report.metric("empirical_c").unwrap() <= report.metric("declared_c").unwrap());

        // Q = u + |p| - X with M = 1, K = 1 passes with C >= 3.
        let viscous = HamiltonianSet::uniform_builtin(
            RayFamily::Viscous { c: 1.0, nu: 1.0, f: SourceTerm::constant(1.0) },
            2,
            1.0,
            1.0,
        )
        .unwrap();
        let report = viscous.check_gradient_growth(1.0, 1.0, 2_000, 5);
        assert!(report.passed());
        assert!(report.metric("declared_c").unwrap() >= 3.0);

        // Q = u + p^2 is superlinear; any declared constant fails.
        let bad = HamiltonianSet::custom(
            vec![
                |_x: f64, u: f64, p: f64, _xx: f64| u + p * p,
                |_x: f64, u: f64, p: f64, _xx: f64| u + p * p,
            ],
            1.0,
            1.0,
        )
        .unwrap()
        .with_growth_constant(GrowthConstant { m: 10.0, k: 10.0, c: 5.0 });
        let report = bad.check_gradient_growth(10.0, 10.0, 10_000, 5);
        assert_eq!(report.status, CheckStatus::Failed);
        let exponent = report.metric("growth_exponent").unwrap();
        assert!(exponent > 1.5, "p^2 must report a superlinear exponent, got {exponent}");
    }

    #[test]
    fn x_lipschitz_certified_for_builtin() {
        let h = HamiltonianSet::uniform_builtin(
            RayFamily::Eikonal { c: 1.0, f: SourceTerm::new(|x| (2.0 * x).sin()) },
            2,
            1.0,
            1.0,
        )
        .unwrap();
        let report = h.check_x_lipschitz(1.0, 2_000, 9);
        assert_eq!(report.status, CheckStatus::CertifiedAnalytic);
        // Lip(sin(2x)) = 2; the padded grid estimate stays close.
        let c = report.metric("c_m").unwrap();
        assert!((2.0..=2.3).contains(&c), "got {c}");
    }

    #[test]
    fn kirchhoff_verdicts() {
        // F = p1 + p2: certified with alpha = 1.
        let flux = KirchhoffCondition::flux_sum(2).unwrap();
        assert_eq!(flux.check(10, 1).status, CheckStatus::CertifiedAnalytic);
        assert_eq!(flux.alpha(), 1.0);
        assert!(flux.check_sampled(2_000, 1).passed());

        // F = p1 + p2 - u: still certified (beta = 1 >= 0).
        let with_u = KirchhoffCondition::linear(vec![1.0, 1.0], 1.0, 0.0).unwrap();
        assert_eq!(with_u.check(10, 1).status, CheckStatus::CertifiedAnalytic);
        assert!(with_u.check_sampled(2_000, 1).passed());

        // F = sum p_i^3 has no uniform alpha near p = 0.
        let cubic = KirchhoffCondition::custom(2, 1.0, |_u, p: &[f64]| {
            p.iter().map(|x| x * x * x).sum()
        })
        .unwrap();
        let report = cubic.check(10_000, 13);
        assert_eq!(report.status, CheckStatus::Failed);
        assert!(report.counterexample.is_some());
    }

    #[test]
    fn kirchhoff_eval_checks_arity() {
        let f = KirchhoffCondition::flux_sum(3).unwrap();
        assert!(f.eval(0.0, &[1.0, 2.0]).is_err());
        assert_eq!(f.eval(0.0, &[1.0, 2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn certify_accepts_builtins_and_rejects_bad_custom() {
        let h = eikonal_pair(1.0, 1.0);
        assert!(h.certify().is_ok());

        let bad = HamiltonianSet::custom(
            vec![
                |_x: f64, u: f64, p: f64, _xx: f64| -u + p.abs(),
                |_x: f64, u: f64, p: f64, _xx: f64| -u + p.abs(),
            ],
            1.0,
            1.0,
        )
        .unwrap();
        assert!(bad.certify().is_err());
    }
}

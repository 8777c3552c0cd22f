//! Normal-form vector fields near a neutral saddle.
//!
//! A `NeutralParams` value is the single source of truth for one parameter
//! set: the cubic coefficients, the strong-stable rate `ell`, the model
//! selector, and (optionally) a higher-order polynomial perturbation. All
//! derived quantities — the right-hand side, its Jacobian, the divergence,
//! and the exponents `beta0 = (a0+b0)/(2a0)`, `beta2 = (a2+b2)/(2b2)`,
//! `beta = beta0/beta2` — are computed from it on demand.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from parameter construction and field evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("coefficient {name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("coefficient {name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("degenerate coefficients: a2*b0 - a0*b2 must be nonzero")]
    DegenerateDelta,
    #[error("{model} forces {name} = 0, got {value}")]
    MustVanish {
        model: &'static str,
        name: &'static str,
        value: f64,
    },
    #[error("state dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigenvalues must satisfy 0 < lambda_s < lambda_u < lambda_ss")]
    EigenvalueOrder,
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("kappa must be a positive even integer, got {0}")]
    InvalidKappa(u32),
    #[error("box region is empty on axis {axis} (lo {lo} > hi {hi})")]
    EmptyBox { axis: usize, lo: f64, hi: f64 },
    #[error("config error: {0}")]
    Config(String),
}

/// Model selector for the normal form.
///
/// `TwoD` is the planar form `(x, y) -> (x(a0 x^k + a2 y^k), -y(b0 x^k + b2 y^k))`
/// with `k = kappa` (default 2). The three-dimensional models specialize the
/// full cubic form: `Model1` drops the `c` terms, `Model2` drops the mixed
/// `a1, b1` terms, `Model3` keeps everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    TwoD,
    Model1,
    Model2,
    Model3,
}

impl Model {
    pub fn dim(self) -> usize {
        match self {
            Model::TwoD => 2,
            _ => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Model::TwoD => "two_d",
            Model::Model1 => "model1",
            Model::Model2 => "model2",
            Model::Model3 => "model3",
        }
    }

    pub fn from_label(s: &str) -> Result<Self, FieldError> {
        match s {
            "two_d" | "2d" => Ok(Model::TwoD),
            "model1" => Ok(Model::Model1),
            "model2" => Ok(Model::Model2),
            "model3" => Ok(Model::Model3),
            other => Err(FieldError::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// A point of the phase space, tagged with its dimension (2 or 3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    coords: [f64; 3],
    dim: u8,
}

impl State {
    pub fn two_d(x: f64, y: f64) -> Self {
        State {
            coords: [x, y, 0.0],
            dim: 2,
        }
    }

    pub fn three_d(x: f64, y: f64, z: f64) -> Self {
        State {
            coords: [x, y, z],
            dim: 3,
        }
    }

    /// Builds a state from a coordinate slice of length 2 or 3.
    pub fn from_slice(s: &[f64]) -> Self {
        match s.len() {
            2 => State::two_d(s[0], s[1]),
            3 => State::three_d(s[0], s[1], s[2]),
            n => panic!("state slice must have length 2 or 3, got {n}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    /// Third coordinate; `None` for planar states.
    pub fn z(&self) -> Option<f64> {
        (self.dim == 3).then_some(self.coords[2])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }
}

/// One monomial `coeff * x^px * y^py * z^pz` of a perturbation component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub c: f64,
    pub px: u32,
    pub py: u32,
    pub pz: u32,
}

impl Monomial {
    fn degree(&self) -> u32 {
        self.px + self.py + self.pz
    }

    fn eval(&self, s: &[f64]) -> f64 {
        let z = if s.len() > 2 { s[2] } else { 0.0 };
        self.c * s[0].powi(self.px as i32) * s[1].powi(self.py as i32) * z.powi(self.pz as i32)
    }

    /// Partial derivative with respect to coordinate `axis`, evaluated at `s`.
    fn deriv(&self, s: &[f64], axis: usize) -> f64 {
        let p = [self.px, self.py, self.pz][axis];
        if p == 0 {
            return 0.0;
        }
        let mut powers = [self.px, self.py, self.pz];
        powers[axis] -= 1;
        let z = if s.len() > 2 { s[2] } else { 0.0 };
        self.c
            * p as f64
            * s[0].powi(powers[0] as i32)
            * s[1].powi(powers[1] as i32)
            * z.powi(powers[2] as i32)
    }
}

/// User-supplied higher-order terms added to the normal form.
///
/// Validation enforces total degree at least four on every monomial, an
/// `x`-component divisible by `x^2`, and a `z`-component divisible by `z^2`
/// (for the planar form the contracting coordinate `y` takes the role of `z`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation {
    pub x_terms: Vec<Monomial>,
    pub y_terms: Vec<Monomial>,
    pub z_terms: Vec<Monomial>,
}

impl Perturbation {
    fn validate(&self, model: Model) -> Result<(), FieldError> {
        let dim = model.dim();
        let all = [
            ("x", &self.x_terms),
            ("y", &self.y_terms),
            ("z", &self.z_terms),
        ];
        for (name, terms) in all {
            if name == "z" && dim == 2 && !terms.is_empty() {
                return Err(FieldError::InvalidPerturbation(
                    "planar model has no z-component".into(),
                ));
            }
            for m in terms.iter() {
                if dim == 2 && m.pz != 0 {
                    return Err(FieldError::InvalidPerturbation(format!(
                        "planar model: monomial in {name}-component uses z"
                    )));
                }
                if m.degree() < 4 {
                    return Err(FieldError::InvalidPerturbation(format!(
                        "monomial of degree {} in {name}-component; minimum is 4",
                        m.degree()
                    )));
                }
            }
        }
        for m in &self.x_terms {
            if m.px < 2 {
                return Err(FieldError::InvalidPerturbation(
                    "x-component must be divisible by x^2".into(),
                ));
            }
        }
        // Contracting coordinate: z in 3-D, y in 2-D.
        if dim == 3 {
            for m in &self.z_terms {
                if m.pz < 2 {
                    return Err(FieldError::InvalidPerturbation(
                        "z-component must be divisible by z^2".into(),
                    ));
                }
            }
        } else {
            for m in &self.y_terms {
                if m.py < 2 {
                    return Err(FieldError::InvalidPerturbation(
                        "y-component must be divisible by y^2".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.x_terms.is_empty() && self.y_terms.is_empty() && self.z_terms.is_empty()
    }

    fn add_to(&self, s: &[f64], out: &mut [f64]) {
        for m in &self.x_terms {
            out[0] += m.eval(s);
        }
        for m in &self.y_terms {
            out[1] += m.eval(s);
        }
        if out.len() > 2 {
            for m in &self.z_terms {
                out[2] += m.eval(s);
            }
        }
    }

    fn add_jacobian(&self, s: &[f64], jac: &mut [[f64; 4]; 4]) {
        let dim = s.len();
        let comps = [&self.x_terms, &self.y_terms, &self.z_terms];
        for (row, terms) in comps.iter().enumerate().take(dim) {
            for m in terms.iter() {
                for (col, entry) in jac[row].iter_mut().enumerate().take(dim) {
                    *entry += m.deriv(s, col);
                }
            }
        }
    }

    fn divergence(&self, s: &[f64]) -> f64 {
        let dim = s.len();
        let comps = [&self.x_terms, &self.y_terms, &self.z_terms];
        let mut d = 0.0;
        for (axis, terms) in comps.iter().enumerate().take(dim) {
            for m in terms.iter() {
                d += m.deriv(s, axis);
            }
        }
        d
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<(), FieldError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(FieldError::NonPositive { name, value });
    }
    Ok(())
}

fn require_nonnegative(name: &'static str, value: f64) -> Result<(), FieldError> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(FieldError::Negative { name, value });
    }
    Ok(())
}

/// Coefficients of the neutral normal form together with the model selector.
///
/// Immutable after construction; every constructor validates positivity,
/// the nondegeneracy condition `a2*b0 - a0*b2 != 0`, and the per-model
/// constraints (`Model1` has no `c` terms, `Model2` has no `a1, b1` terms).
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralParams {
    model: Model,
    a0: f64,
    a1: f64,
    a2: f64,
    b0: f64,
    b1: f64,
    b2: f64,
    c0: f64,
    c2: f64,
    ell: f64,
    kappa: u32,
    higher_order: Option<Perturbation>,
}

impl NeutralParams {
    /// Planar normal form with the default power `kappa = 2`.
    pub fn two_d(a0: f64, a2: f64, b0: f64, b2: f64) -> Result<Self, FieldError> {
        Self::validate_core(a0, a2, b0, b2)?;
        Ok(NeutralParams {
            model: Model::TwoD,
            a0,
            a1: 0.0,
            a2,
            b0,
            b1: 0.0,
            b2,
            c0: 0.0,
            c2: 0.0,
            ell: 1.0,
            kappa: 2,
            higher_order: None,
        })
    }

    /// Skew-product model: c-terms absent, so the y-equation is `y' = -ell*y`.
    #[allow(clippy::too_many_arguments)]
    pub fn model1(
        a0: f64,
        a1: f64,
        a2: f64,
        b0: f64,
        b1: f64,
        b2: f64,
        ell: f64,
    ) -> Result<Self, FieldError> {
        Self::validate_core(a0, a2, b0, b2)?;
        require_positive("a1", a1)?;
        require_positive("b1", b1)?;
        require_positive("ell", ell)?;
        Ok(NeutralParams {
            model: Model::Model1,
            a0,
            a1,
            a2,
            b0,
            b1,
            b2,
            c0: 0.0,
            c2: 0.0,
            ell,
            kappa: 2,
            higher_order: None,
        })
    }

    /// Coupled model without mixed terms: `a1 = b1 = 0`, c-terms present.
    #[allow(clippy::too_many_arguments)]
    pub fn model2(
        a0: f64,
        a2: f64,
        b0: f64,
        b2: f64,
        c0: f64,
        c2: f64,
        ell: f64,
    ) -> Result<Self, FieldError> {
        Self::validate_core(a0, a2, b0, b2)?;
        require_nonnegative("c0", c0)?;
        require_nonnegative("c2", c2)?;
        require_positive("ell", ell)?;
        Ok(NeutralParams {
            model: Model::Model2,
            a0,
            a1: 0.0,
            a2,
            b0,
            b1: 0.0,
            b2,
            c0,
            c2,
            ell,
            kappa: 2,
            higher_order: None,
        })
    }

    /// Full model with all coefficient groups present.
    #[allow(clippy::too_many_arguments)]
    pub fn model3(
        a0: f64,
        a1: f64,
        a2: f64,
        b0: f64,
        b1: f64,
        b2: f64,
        c0: f64,
        c2: f64,
        ell: f64,
    ) -> Result<Self, FieldError> {
        Self::validate_core(a0, a2, b0, b2)?;
        require_positive("a1", a1)?;
        require_positive("b1", b1)?;
        require_nonnegative("c0", c0)?;
        require_nonnegative("c2", c2)?;
        require_positive("ell", ell)?;
        Ok(NeutralParams {
            model: Model::Model3,
            a0,
            a1,
            a2,
            b0,
            b1,
            b2,
            c0,
            c2,
            ell,
            kappa: 2,
            higher_order: None,
        })
    }

    fn validate_core(a0: f64, a2: f64, b0: f64, b2: f64) -> Result<(), FieldError> {
        require_positive("a0", a0)?;
        require_positive("a2", a2)?;
        require_positive("b0", b0)?;
        require_positive("b2", b2)?;
        if a2 * b0 - a0 * b2 == 0.0 {
            return Err(FieldError::DegenerateDelta);
        }
        Ok(())
    }

    /// Attaches higher-order terms. Rejected unless every monomial has total
    /// degree at least four, the x-component is divisible by x^2, and the
    /// contracting component by the square of its own coordinate.
    pub fn with_higher_order(mut self, p: Perturbation) -> Result<Self, FieldError> {
        p.validate(self.model)?;
        self.higher_order = if p.is_empty() { None } else { Some(p) };
        Ok(self)
    }

    /// Overrides the planar normal-form power (even, at least 2). Exponent
    /// formulas and sweep pipelines assume the default `kappa = 2`; other
    /// values are accepted for exploration only.
    pub fn with_kappa(mut self, kappa: u32) -> Result<Self, FieldError> {
        if kappa < 2 || kappa % 2 != 0 {
            return Err(FieldError::InvalidKappa(kappa));
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn higher_order(&self) -> Option<&Perturbation> {
        self.higher_order.as_ref()
    }

    /// True when the y-equation carries the `c0 x^2 + c2 z^2` correction.
    pub fn has_c_terms(&self) -> bool {
        self.c0 != 0.0 || self.c2 != 0.0
    }

    pub fn derived_exponents(&self) -> DerivedExponents {
        DerivedExponents::from_coefficients(self.a0, self.a2, self.b0, self.b2)
    }

    /// Right-hand side of the selected model at `s`.
    pub fn eval_field(&self, s: &State) -> Result<State, FieldError> {
        if s.dim() != self.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim(),
                got: s.dim(),
            });
        }
        let mut out = [0.0; 4];
        self.eval_raw(s.as_slice(), &mut out[..s.dim()]);
        Ok(State::from_slice(&out[..s.dim()]))
    }

    /// Hot-path evaluation on raw coordinate slices (no dimension check).
    pub fn eval_raw(&self, s: &[f64], out: &mut [f64]) {
        match self.model {
            Model::TwoD => {
                let (x, y) = (s[0], s[1]);
                if self.kappa == 2 {
                    let x2 = x * x;
                    let y2 = y * y;
                    out[0] = x * (self.a0 * x2 + self.a2 * y2);
                    out[1] = -y * (self.b0 * x2 + self.b2 * y2);
                } else {
                    let k = self.kappa as i32;
                    let xk = x.powi(k);
                    let yk = y.powi(k);
                    out[0] = x * (self.a0 * xk + self.a2 * yk);
                    out[1] = -y * (self.b0 * xk + self.b2 * yk);
                }
            }
            _ => {
                let (x, y, z) = (s[0], s[1], s[2]);
                let x2 = x * x;
                let y2 = y * y;
                let z2 = z * z;
                out[0] = x * (self.a0 * x2 + self.a1 * y2 + self.a2 * z2);
                out[1] = -self.ell * y * (1.0 + self.c0 * x2 + self.c2 * z2);
                out[2] = -z * (self.b0 * x2 + self.b1 * y2 + self.b2 * z2);
            }
        }
        if let Some(p) = &self.higher_order {
            p.add_to(s, out);
        }
    }

    /// Analytic Jacobian on raw coordinate slices, written into the leading
    /// `dim x dim` block of `jac`.
    pub fn jacobian_raw(&self, s: &[f64], jac: &mut [[f64; 4]; 4]) {
        for row in jac.iter_mut() {
            row.fill(0.0);
        }
        match self.model {
            Model::TwoD => {
                let (x, y) = (s[0], s[1]);
                if self.kappa == 2 {
                    jac[0][0] = 3.0 * self.a0 * x * x + self.a2 * y * y;
                    jac[0][1] = 2.0 * self.a2 * x * y;
                    jac[1][0] = -2.0 * self.b0 * x * y;
                    jac[1][1] = -(self.b0 * x * x + 3.0 * self.b2 * y * y);
                } else {
                    let k = self.kappa as i32;
                    let kf = self.kappa as f64;
                    let xk = x.powi(k);
                    let yk = y.powi(k);
                    let xk1 = x.powi(k - 1);
                    let yk1 = y.powi(k - 1);
                    jac[0][0] = (kf + 1.0) * self.a0 * xk + self.a2 * yk;
                    jac[0][1] = kf * self.a2 * x * yk1;
                    jac[1][0] = -kf * self.b0 * y * xk1;
                    jac[1][1] = -(self.b0 * xk + (kf + 1.0) * self.b2 * yk);
                }
            }
            _ => {
                let (x, y, z) = (s[0], s[1], s[2]);
                let x2 = x * x;
                let y2 = y * y;
                let z2 = z * z;
                jac[0][0] = 3.0 * self.a0 * x2 + self.a1 * y2 + self.a2 * z2;
                jac[0][1] = 2.0 * self.a1 * x * y;
                jac[0][2] = 2.0 * self.a2 * x * z;
                jac[1][0] = -2.0 * self.ell * self.c0 * x * y;
                jac[1][1] = -self.ell * (1.0 + self.c0 * x2 + self.c2 * z2);
                jac[1][2] = -2.0 * self.ell * self.c2 * y * z;
                jac[2][0] = -2.0 * self.b0 * x * z;
                jac[2][1] = -2.0 * self.b1 * y * z;
                jac[2][2] = -(self.b0 * x2 + self.b1 * y2 + 3.0 * self.b2 * z2);
            }
        }
        if let Some(p) = &self.higher_order {
            p.add_jacobian(s, jac);
        }
    }

    /// Exact divergence of the field at `s`.
    ///
    /// For the cubic part this is the closed form
    /// `(3a0 - b0 - ell*c0) x^2 + (a1 - b1) y^2 + (a2 - 3b2 - ell*c2) z^2 - ell`
    /// (three-dimensional models; the planar form has no `-ell` and no mixed
    /// or c-terms). Higher-order terms contribute their analytic divergence.
    pub fn divergence(&self, s: &State) -> Result<f64, FieldError> {
        if s.dim() != self.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim(),
                got: s.dim(),
            });
        }
        let coords = s.as_slice();
        let mut d = match self.model {
            Model::TwoD => {
                let (x, y) = (coords[0], coords[1]);
                let k = self.kappa as i32;
                let kf = self.kappa as f64;
                ((kf + 1.0) * self.a0 - self.b0) * x.powi(k)
                    + (self.a2 - (kf + 1.0) * self.b2) * y.powi(k)
            }
            _ => {
                let (x, y, z) = (coords[0], coords[1], coords[2]);
                (3.0 * self.a0 - self.b0 - self.ell * self.c0) * x * x
                    + (self.a1 - self.b1) * y * y
                    + (self.a2 - 3.0 * self.b2 - self.ell * self.c2) * z * z
                    - self.ell
            }
        };
        if let Some(p) = &self.higher_order {
            d += p.divergence(coords);
        }
        Ok(d)
    }

    /// Checks that the divergence is bounded away from zero from below on
    /// `region`: `ok` iff `sup div <= -margin` for some `margin > 0`.
    ///
    /// The quadratic part is separable, so its supremum over an axis-aligned
    /// box is computed exactly axis by axis; higher-order terms are bounded
    /// by dense grid maximization.
    pub fn check_dissipativity(&self, region: &BoxRegion) -> Result<Dissipativity, FieldError> {
        if region.dim() != self.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim(),
                got: region.dim(),
            });
        }
        let (coeffs, constant, power) = match self.model {
            Model::TwoD => {
                let kf = self.kappa as f64;
                (
                    [
                        (kf + 1.0) * self.a0 - self.b0,
                        self.a2 - (kf + 1.0) * self.b2,
                        0.0,
                    ],
                    0.0,
                    self.kappa,
                )
            }
            _ => (
                [
                    3.0 * self.a0 - self.b0 - self.ell * self.c0,
                    self.a1 - self.b1,
                    self.a2 - 3.0 * self.b2 - self.ell * self.c2,
                ],
                -self.ell,
                2,
            ),
        };
        let mut sup = constant;
        for axis in 0..self.dim() {
            sup += axis_sup(coeffs[axis], region.lo[axis], region.hi[axis], power);
        }
        if let Some(p) = &self.higher_order {
            sup += grid_max(region, |s| p.divergence(s));
        }
        let margin = -sup;
        Ok(Dissipativity {
            ok: margin > 0.0,
            min_margin: margin,
        })
    }
}

/// Supremum of `c * u^power` (even power) for `u` in `[lo, hi]`.
fn axis_sup(c: f64, lo: f64, hi: f64, power: u32) -> f64 {
    let max_abs = lo.abs().max(hi.abs());
    let min_abs = if lo <= 0.0 && hi >= 0.0 {
        0.0
    } else {
        lo.abs().min(hi.abs())
    };
    let p = power as i32;
    if c >= 0.0 {
        c * max_abs.powi(p)
    } else {
        c * min_abs.powi(p)
    }
}

fn grid_max(region: &BoxRegion, f: impl Fn(&[f64]) -> f64) -> f64 {
    const N: usize = 33;
    let dim = region.dim();
    let mut best = f64::NEG_INFINITY;
    let mut idx = [0usize; 3];
    let total = N.pow(dim as u32);
    let mut s = [0.0f64; 3];
    for flat in 0..total {
        let mut rem = flat;
        for v in idx.iter_mut().take(dim) {
            *v = rem % N;
            rem /= N;
        }
        for axis in 0..dim {
            let t = idx[axis] as f64 / (N - 1) as f64;
            s[axis] = region.lo[axis] + t * (region.hi[axis] - region.lo[axis]);
        }
        best = best.max(f(&s[..dim]));
    }
    best
}

/// Axis-aligned box used by the dissipativity check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    lo: [f64; 3],
    hi: [f64; 3],
    dim: u8,
}

impl BoxRegion {
    pub fn two_d(x: (f64, f64), y: (f64, f64)) -> Result<Self, FieldError> {
        Self::build([x.0, y.0, 0.0], [x.1, y.1, 0.0], 2)
    }

    pub fn three_d(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Result<Self, FieldError> {
        Self::build([x.0, y.0, z.0], [x.1, y.1, z.1], 3)
    }

    /// Centered cube `[-r, r]^dim`.
    pub fn centered_cube(r: f64, dim: usize) -> Result<Self, FieldError> {
        match dim {
            2 => Self::two_d((-r, r), (-r, r)),
            _ => Self::three_d((-r, r), (-r, r), (-r, r)),
        }
    }

    fn build(lo: [f64; 3], hi: [f64; 3], dim: u8) -> Result<Self, FieldError> {
        for axis in 0..dim as usize {
            if !(lo[axis] <= hi[axis]) {
                return Err(FieldError::EmptyBox {
                    axis,
                    lo: lo[axis],
                    hi: hi[axis],
                });
            }
        }
        Ok(BoxRegion { lo, hi, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }
}

/// Result of the dissipativity check: `min_margin = -(sup of divergence)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipativity {
    pub ok: bool,
    pub min_margin: f64,
}

/// Exponents derived from the cubic coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedExponents {
    pub beta0: f64,
    pub beta2: f64,
    pub beta: f64,
}

impl DerivedExponents {
    pub fn from_coefficients(a0: f64, a2: f64, b0: f64, b2: f64) -> Self {
        let beta0 = (a0 + b0) / (2.0 * a0);
        let beta2 = (a2 + b2) / (2.0 * b2);
        DerivedExponents {
            beta0,
            beta2,
            beta: beta0 / beta2,
        }
    }
}

/// Eigenvalue magnitudes of the classical linearized saddle,
/// ordered `0 < lambda_s < lambda_u < lambda_ss`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLorenzParams {
    pub lambda_u: f64,
    pub lambda_s: f64,
    pub lambda_ss: f64,
}

impl LinearLorenzParams {
    pub fn new(lambda_u: f64, lambda_s: f64, lambda_ss: f64) -> Result<Self, FieldError> {
        if !(0.0 < lambda_s && lambda_s < lambda_u && lambda_u < lambda_ss) {
            return Err(FieldError::EigenvalueOrder);
        }
        Ok(LinearLorenzParams {
            lambda_u,
            lambda_s,
            lambda_ss,
        })
    }

    /// `(lambda_u x, -lambda_s y, -lambda_ss z)`.
    pub fn eval_field(&self, s: &State) -> Result<State, FieldError> {
        if s.dim() != 3 {
            return Err(FieldError::DimensionMismatch {
                expected: 3,
                got: s.dim(),
            });
        }
        Ok(State::three_d(
            self.lambda_u * s.x(),
            -self.lambda_s * s.y(),
            -self.lambda_ss * s.z().unwrap(),
        ))
    }

    pub fn eval_raw(&self, s: &[f64], out: &mut [f64]) {
        out[0] = self.lambda_u * s[0];
        out[1] = -self.lambda_s * s[1];
        out[2] = -self.lambda_ss * s[2];
    }

    pub fn jacobian_raw(&self, _s: &[f64], jac: &mut [[f64; 4]; 4]) {
        for row in jac.iter_mut() {
            row.fill(0.0);
        }
        jac[0][0] = self.lambda_u;
        jac[1][1] = -self.lambda_s;
        jac[2][2] = -self.lambda_ss;
    }
}

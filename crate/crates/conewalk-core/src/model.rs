//! Declarative model specifications and coefficient evaluation.
//!
//! A model is `dX = F dB G + Gᵀ dBᵀ Fᵀ + H dt + K(X₋) dJ` on the symmetric
//! positive definite cone. The named families fix the coefficient shapes:
//!
//! * `wishart`: `F = x^{1/2}`, `G = Q`, `H = xβ + βᵀx + Γ(x) + b`
//! * `gcir`:    `F = x^α` with `α ∈ [1/2, 1]`, `G = Q`, `H` as above
//! * `ou`:      `F = G = 0`, `H = Γ(x) + b`
//! * `general`: a named base family with every coefficient multiplied by the
//!   scalar modulation `m(t) = exp(rate·t)`
//!
//! Γ is restricted to a closed catalogue of PSD-preserving, locally Lipschitz,
//! linear-growth forms so the existence hypotheses are constructible instead
//! of assumed.

use crate::error::{Error, Result};
use crate::jump::{JumpSpec, KSpec};
use crate::psd::{
    self, CovariationTensor, GeneralMatrix, SpectralForm, SymMatrix,
};
use crate::rng::NoiseStream;

/// The drift map Γ. Every catalogued form sends PSD inputs to PSD outputs by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSpec {
    Zero,
    /// A fixed PSD matrix, ignored argument.
    Constant(SymMatrix),
    /// `Γ(x) = Σ_k A_k x A_kᵀ`.
    Congruence(Vec<GeneralMatrix>),
    /// `Γ(x) = (coeff·Tr(x^power) + offset) · direction` with `coeff ≥ 0`,
    /// `power ∈ [0, 1]`, `offset ≥ 0` and PSD `direction` (linear growth
    /// comes from the power cap).
    ScaledTrace {
        coeff: f64,
        power: f64,
        offset: f64,
        direction: SymMatrix,
    },
}

impl GammaSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            GammaSpec::Zero => Ok(()),
            GammaSpec::Constant(c) => {
                if c.dim() != d {
                    return Err(Error::DimensionMismatch { left: c.dim(), right: d });
                }
                ensure_psd(c, "constant gamma")
            }
            GammaSpec::Congruence(factors) => {
                if factors.is_empty() {
                    return Err(Error::InvalidArgument(
                        "congruence gamma needs at least one factor".into(),
                    ));
                }
                for a in factors {
                    if a.nrows() != d || a.ncols() != d {
                        return Err(Error::DimensionMismatch { left: a.nrows(), right: d });
                    }
                    if a.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidArgument(
                            "non-finite gamma congruence factor".into(),
                        ));
                    }
                }
                Ok(())
            }
            GammaSpec::ScaledTrace { coeff, power, offset, direction } => {
                if !coeff.is_finite() || *coeff < 0.0 {
                    return Err(Error::InvalidArgument(format!("gamma coeff: {coeff}")));
                }
                if !(0.0..=1.0).contains(power) {
                    return Err(Error::InvalidArgument(format!(
                        "gamma trace power out of [0, 1]: {power}"
                    )));
                }
                if !offset.is_finite() || *offset < 0.0 {
                    return Err(Error::InvalidArgument(format!("gamma offset: {offset}")));
                }
                if direction.dim() != d {
                    return Err(Error::DimensionMismatch {
                        left: direction.dim(),
                        right: d,
                    });
                }
                ensure_psd(direction, "gamma direction")
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, GammaSpec::Zero)
    }

    pub fn eval(&self, x: &SymMatrix) -> Result<SymMatrix> {
        self.eval_inner(x, None)
    }

    pub(crate) fn eval_inner(
        &self,
        x: &SymMatrix,
        form: Option<&SpectralForm>,
    ) -> Result<SymMatrix> {
        match self {
            GammaSpec::Zero => Ok(SymMatrix::zeros(x.dim())),
            GammaSpec::Constant(c) => Ok(c.clone()),
            GammaSpec::Congruence(factors) => {
                let d = x.dim();
                let mut acc = GeneralMatrix::zeros(d, d);
                for a in factors {
                    acc += a * x.as_matrix() * a.transpose();
                }
                SymMatrix::new(acc)
            }
            GammaSpec::ScaledTrace { coeff, power, offset, direction } => {
                let tr = if *coeff == 0.0 {
                    0.0
                } else if *power == 1.0 {
                    x.trace()
                } else if *power == 0.0 {
                    x.dim() as f64
                } else {
                    let owned;
                    let f = match form {
                        Some(f) => f,
                        None => {
                            owned = psd::spectral_decompose(x)?;
                            &owned
                        }
                    };
                    f.eigenvalues().iter().map(|l| l.max(0.0).powf(*power)).sum()
                };
                Ok(direction.scale(coeff * tr + offset))
            }
        }
    }
}

impl std::fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaSpec::Zero => write!(f, "zero"),
            GammaSpec::Constant(c) => write!(f, "constant[{c}]"),
            GammaSpec::Congruence(fs) => write!(f, "congruence(k={})", fs.len()),
            GammaSpec::ScaledTrace { coeff, power, offset, direction } => write!(
                f,
                "scaled_trace({coeff}*tr(x^{power})+{offset})[{direction}]"
            ),
        }
    }
}

fn ensure_psd(m: &SymMatrix, what: &str) -> Result<()> {
    let form = psd::spectral_decompose(m)?;
    if form.lambda_min() < -1e-12 * (1.0 + m.frobenius()) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not PSD (lambda_min {:.3e})",
            form.lambda_min()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WishartParams {
    pub q: GeneralMatrix,
    pub beta: GeneralMatrix,
    pub b: SymMatrix,
    pub gamma: GammaSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcirParams {
    pub alpha: f64,
    pub q: GeneralMatrix,
    pub beta: GeneralMatrix,
    pub b: SymMatrix,
    pub gamma: GammaSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuParams {
    pub b: SymMatrix,
    pub gamma: GammaSpec,
}

/// Scalar time modulation of a base family: all of F, G, H are multiplied by
/// `exp(rate·t)`. The margin floor is no longer a preset constant, so the
/// caller supplies it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralParams {
    pub base: Box<FamilySpec>,
    pub rate: f64,
    pub floor_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    Wishart(WishartParams),
    Gcir(GcirParams),
    Ou(OuParams),
    General(GeneralParams),
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Wishart(_) => "wishart",
            FamilySpec::Gcir(_) => "gcir",
            FamilySpec::Ou(_) => "ou",
            FamilySpec::General(_) => "general",
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            FamilySpec::Wishart(p) => {
                check_factor(&p.q, d, "Q")?;
                check_factor(&p.beta, d, "beta")?;
                if p.b.dim() != d {
                    return Err(Error::DimensionMismatch { left: p.b.dim(), right: d });
                }
                p.gamma.validate(d)
            }
            FamilySpec::Gcir(p) => {
                if !(0.5..=1.0).contains(&p.alpha) {
                    return Err(Error::InvalidArgument(format!(
                        "alpha out of [0.5, 1]: {}",
                        p.alpha
                    )));
                }
                check_factor(&p.q, d, "Q")?;
                check_factor(&p.beta, d, "beta")?;
                if p.b.dim() != d {
                    return Err(Error::DimensionMismatch { left: p.b.dim(), right: d });
                }
                p.gamma.validate(d)
            }
            FamilySpec::Ou(p) => {
                if p.b.dim() != d {
                    return Err(Error::DimensionMismatch { left: p.b.dim(), right: d });
                }
                p.gamma.validate(d)
            }
            FamilySpec::General(p) => {
                if matches!(*p.base, FamilySpec::General(_)) {
                    return Err(Error::InvalidArgument(
                        "general family cannot nest another general family".into(),
                    ));
                }
                if !p.rate.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "modulation rate: {}",
                        p.rate
                    )));
                }
                if !p.floor_c.is_finite() {
                    return Err(Error::InvalidArgument(format!("floor_c: {}", p.floor_c)));
                }
                p.base.validate(d)
            }
        }
    }

    fn gamma(&self) -> &GammaSpec {
        match self {
            FamilySpec::Wishart(p) => &p.gamma,
            FamilySpec::Gcir(p) => &p.gamma,
            FamilySpec::Ou(p) => &p.gamma,
            FamilySpec::General(p) => p.base.gamma(),
        }
    }
}

fn check_factor(m: &GeneralMatrix, d: usize, what: &str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch { left: m.nrows(), right: d });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite entries in {what}")));
    }
    Ok(())
}

/// Evaluated coefficients at one `(t, x)`: the SDE factors and their PSD
/// squares `f = FFᵀ`, `g = GᵀG`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub f_left: GeneralMatrix,
    pub g_right: GeneralMatrix,
    pub h: SymMatrix,
    pub f: SymMatrix,
    pub g: SymMatrix,
}

/// An immutable, validated model. Coefficient evaluation is pure, so one
/// spec can serve many concurrent path workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    dim: usize,
    family: FamilySpec,
    jump: JumpSpec,
    k_op: KSpec,
    floor_override: Option<f64>,
}

impl ModelSpec {
    pub fn new(dim: usize, family: FamilySpec, jump: JumpSpec, k_op: KSpec) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        family.validate(dim)?;
        jump.validate(dim)?;
        k_op.validate(dim)?;
        let model = ModelSpec { dim, family, jump, k_op, floor_override: None };
        model.check_gamma_on_sample()?;
        Ok(model)
    }

    pub fn wishart(
        dim: usize,
        q: GeneralMatrix,
        beta: GeneralMatrix,
        b: SymMatrix,
        gamma: GammaSpec,
    ) -> Result<Self> {
        ModelSpec::new(
            dim,
            FamilySpec::Wishart(WishartParams { q, beta, b, gamma }),
            JumpSpec::None,
            KSpec::Identity,
        )
    }

    /// The Bru parameterization: `b = δ·QᵀQ`, `β = 0`, `Γ = 0`.
    pub fn wishart_bru(dim: usize, q: GeneralMatrix, delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidArgument(format!("delta: {delta}")));
        }
        let b = SymMatrix::new(q.transpose() * &q * delta)?;
        ModelSpec::wishart(dim, q.clone(), GeneralMatrix::zeros(dim, dim), b, GammaSpec::Zero)
    }

    pub fn gcir(
        dim: usize,
        alpha: f64,
        q: GeneralMatrix,
        beta: GeneralMatrix,
        b: SymMatrix,
        gamma: GammaSpec,
    ) -> Result<Self> {
        ModelSpec::new(
            dim,
            FamilySpec::Gcir(GcirParams { alpha, q, beta, b, gamma }),
            JumpSpec::None,
            KSpec::Identity,
        )
    }

    pub fn ou(dim: usize, b: SymMatrix, gamma: GammaSpec) -> Result<Self> {
        ModelSpec::new(
            dim,
            FamilySpec::Ou(OuParams { b, gamma }),
            JumpSpec::None,
            KSpec::Identity,
        )
    }

    pub fn general(base: FamilySpec, rate: f64, floor_c: f64, dim: usize) -> Result<Self> {
        ModelSpec::new(
            dim,
            FamilySpec::General(GeneralParams { base: Box::new(base), rate, floor_c }),
            JumpSpec::None,
            KSpec::Identity,
        )
    }

    pub fn with_jump(mut self, jump: JumpSpec, k_op: KSpec) -> Result<Self> {
        jump.validate(self.dim)?;
        k_op.validate(self.dim)?;
        self.jump = jump;
        self.k_op = k_op;
        Ok(self)
    }

    /// Replace the preset margin floor `c`.
    pub fn with_floor(mut self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidArgument(format!("floor: {c}")));
        }
        self.floor_override = Some(c);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &FamilySpec {
        &self.family
    }

    pub fn jump(&self) -> &JumpSpec {
        &self.jump
    }

    pub fn k_op(&self) -> &KSpec {
        &self.k_op
    }

    /// The constant margin floor `c`: `2Tr(β)` for the wishart and gcir
    /// presets, `0` for ou, caller-supplied for general, unless overridden.
    pub fn drift_floor(&self) -> f64 {
        if let Some(c) = self.floor_override {
            return c;
        }
        match &self.family {
            FamilySpec::Wishart(p) => 2.0 * p.beta.trace(),
            FamilySpec::Gcir(p) => 2.0 * p.beta.trace(),
            FamilySpec::Ou(_) => 0.0,
            FamilySpec::General(p) => p.floor_c,
        }
    }

    /// Spot-check that Γ maps positive definite inputs to PSD outputs. The
    /// catalogue guarantees this structurally; the sample keeps the guarantee
    /// observable.
    fn check_gamma_on_sample(&self) -> Result<()> {
        let gamma = self.family.gamma();
        if gamma.is_zero() {
            return Ok(());
        }
        let d = self.dim;
        let mut states = vec![
            SymMatrix::identity(d),
            SymMatrix::from_diagonal(
                &(0..d).map(|i| if i == 0 { 1e-3 } else { 1.0 }).collect::<Vec<_>>(),
            ),
            SymMatrix::identity(d).scale(100.0),
        ];
        let stream = NoiseStream::new(0xC0FFEE);
        let mut c = 0u64;
        for _ in 0..3 {
            let g = GeneralMatrix::from_fn(d, d, |_, _| {
                c += 1;
                stream.normal(c)
            });
            let x = SymMatrix::new(&g * g.transpose())?
                .add(&SymMatrix::identity(d).scale(1e-6));
            states.push(x);
        }
        for x in &states {
            let out = gamma.eval(x)?;
            ensure_psd(&out, "gamma output")?;
        }
        Ok(())
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.family {
            FamilySpec::Wishart(p) => write!(
                f,
                "wishart(d={}, Q=[{}], beta=[{}], b=[{}], gamma={})",
                self.dim,
                psd::format_matrix(&p.q),
                psd::format_matrix(&p.beta),
                p.b,
                p.gamma
            )?,
            FamilySpec::Gcir(p) => write!(
                f,
                "gcir(d={}, alpha={}, Q=[{}], beta=[{}], b=[{}], gamma={})",
                self.dim,
                p.alpha,
                psd::format_matrix(&p.q),
                psd::format_matrix(&p.beta),
                p.b,
                p.gamma
            )?,
            FamilySpec::Ou(p) => {
                write!(f, "ou(d={}, b=[{}], gamma={})", self.dim, p.b, p.gamma)?
            }
            FamilySpec::General(p) => {
                let base = ModelSpec {
                    dim: self.dim,
                    family: (*p.base).clone(),
                    jump: JumpSpec::None,
                    k_op: KSpec::Identity,
                    floor_override: None,
                };
                write!(f, "general(rate={}, floor_c={}, base={})", p.rate, p.floor_c, base)?
            }
        }
        match &self.jump {
            JumpSpec::None => write!(f, ", jumps=none")?,
            JumpSpec::CompoundPoisson { rate, mark_law } => {
                let law = match mark_law {
                    crate::jump::MarkLaw::RankOne { sigma } => format!("rank_one(sigma={sigma})"),
                    crate::jump::MarkLaw::DiagExponential { mu } => {
                        format!("diag_exponential(mu={mu})")
                    }
                    crate::jump::MarkLaw::ConstantMark(m) => format!("constant[{m}]"),
                };
                write!(f, ", jumps=poisson(rate={rate}, {law})")?
            }
            JumpSpec::DeterministicSchedule(s) => write!(f, ", jumps=schedule(n={})", s.len())?,
        }
        match &self.k_op {
            KSpec::Identity => write!(f, ", K=identity"),
            KSpec::Congruence(a) => write!(f, ", K=congruence[{}]", psd::format_matrix(a)),
            KSpec::Scale(c) => write!(f, ", K=scale({c})"),
            KSpec::StateCongruence => write!(f, ", K=state_congruence"),
        }
    }
}

/// Evaluate `(F, G, H, f, g)` at `(t, x)`. `x` must be strictly inside the
/// cone.
pub fn coefficients(model: &ModelSpec, t: f64, x: &SymMatrix) -> Result<CoefficientSet> {
    let form = psd::spectral_decompose(x)?;
    coefficients_with_form(model, t, x, &form)
}

pub(crate) fn coefficients_with_form(
    model: &ModelSpec,
    t: f64,
    x: &SymMatrix,
    form: &SpectralForm,
) -> Result<CoefficientSet> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time: {t}")));
    }
    psd::interior_check(form, x.frobenius())?;
    let (f_left, g_right, h) = eval_family(&model.family, t, x, form)?;
    let f = SymMatrix::new(&f_left * f_left.transpose())?;
    let g = SymMatrix::new(g_right.transpose() * &g_right)?;
    Ok(CoefficientSet { f_left, g_right, h, f, g })
}

fn eval_family(
    family: &FamilySpec,
    t: f64,
    x: &SymMatrix,
    form: &SpectralForm,
) -> Result<(GeneralMatrix, GeneralMatrix, SymMatrix)> {
    match family {
        FamilySpec::Wishart(p) => {
            let f = form.apply(|l| l.max(0.0).sqrt()).into_matrix();
            let h = drift_h(x, form, &p.beta, &p.b, &p.gamma)?;
            Ok((f, p.q.clone(), h))
        }
        FamilySpec::Gcir(p) => {
            let alpha = p.alpha;
            let f = form.apply(|l| l.max(0.0).powf(alpha)).into_matrix();
            let h = drift_h(x, form, &p.beta, &p.b, &p.gamma)?;
            Ok((f, p.q.clone(), h))
        }
        FamilySpec::Ou(p) => {
            let d = x.dim();
            let h = p.gamma.eval_inner(x, Some(form))?.add(&p.b);
            Ok((GeneralMatrix::zeros(d, d), GeneralMatrix::zeros(d, d), h))
        }
        FamilySpec::General(p) => {
            let (f, g, h) = eval_family(&p.base, t, x, form)?;
            let m = (p.rate * t).exp();
            Ok((f * m, g * m, h.scale(m)))
        }
    }
}

/// `H = xβ + βᵀx + Γ(x) + b`. The first two terms sum to an exactly
/// symmetric matrix because `x` is stored symmetric.
fn drift_h(
    x: &SymMatrix,
    form: &SpectralForm,
    beta: &GeneralMatrix,
    b: &SymMatrix,
    gamma: &GammaSpec,
) -> Result<SymMatrix> {
    let xb = x.as_matrix() * beta;
    let sym = &xb + xb.transpose();
    let gamma_x = gamma.eval_inner(x, Some(form))?;
    SymMatrix::new(sym + gamma_x.as_matrix() + b.as_matrix())
}

/// The margin `ℓ(t,x) = Tr(Hx⁻¹) − Tr(fx⁻¹)Tr(gx⁻¹) − Tr(fx⁻¹gx⁻¹)`.
/// Boundary non-attainment holds when `ℓ` stays above the model's floor.
pub fn drift_margin(model: &ModelSpec, t: f64, x: &SymMatrix) -> Result<f64> {
    let form = psd::spectral_decompose(x)?;
    drift_margin_with_form(model, t, x, &form)
}

pub(crate) fn drift_margin_with_form(
    model: &ModelSpec,
    t: f64,
    x: &SymMatrix,
    form: &SpectralForm,
) -> Result<f64> {
    let cs = coefficients_with_form(model, t, x, form)?;
    let inv = psd::inv_from_spectral(form, x.frobenius())?;
    Ok(margin_from_parts(&cs, &inv))
}

pub(crate) fn margin_from_parts(cs: &CoefficientSet, inv: &SymMatrix) -> f64 {
    margin_and_cross(cs, inv).0
}

/// `(margin, Tr(f x⁻¹ g x⁻¹))`; the cross trace is the quadratic-variation
/// integrand of the log-det martingale up to the factor 4.
pub(crate) fn margin_and_cross(cs: &CoefficientSet, inv: &SymMatrix) -> (f64, f64) {
    let t_h = psd::trace_inner(&cs.h, inv).expect("dims fixed");
    let t_f = psd::trace_inner(&cs.f, inv).expect("dims fixed");
    let t_g = psd::trace_inner(&cs.g, inv).expect("dims fixed");
    let fi = cs.f.as_matrix() * inv.as_matrix();
    let gi = cs.g.as_matrix() * inv.as_matrix();
    let cross = psd::trace_prod(&fi, &gi);
    (t_h - t_f * t_g - cross, cross)
}

/// The wishart margin in reduced form:
/// `2Tr(β) + Tr((Γ(x) + b − (d+1)QᵀQ) x⁻¹)`. Equal to [`drift_margin`] for
/// every positive definite `x`.
pub fn wishart_margin_identity(model: &ModelSpec, x: &SymMatrix) -> Result<f64> {
    let p = match &model.family {
        FamilySpec::Wishart(p) => p,
        other => {
            return Err(Error::WrongFamily { expected: "wishart", got: other.name() })
        }
    };
    let form = psd::spectral_decompose(x)?;
    let inv = psd::inv_from_spectral(&form, x.frobenius())?;
    let qtq = SymMatrix::new(p.q.transpose() * &p.q)?;
    let d = model.dim as f64;
    let inner = p
        .gamma
        .eval_inner(x, Some(&form))?
        .add(&p.b)
        .sub(&qtq.scale(d + 1.0));
    Ok(2.0 * p.beta.trace() + psd::trace_inner(&inner, &inv)?)
}

/// The gcir margin in reduced form:
/// `2Tr(β) + Tr((Γ(x)+b)x⁻¹) − Tr(x^{2α−1})Tr(QᵀQx⁻¹) − Tr(x^{2α−2}QᵀQ)`.
pub fn gcir_margin_identity(model: &ModelSpec, x: &SymMatrix) -> Result<f64> {
    let p = match &model.family {
        FamilySpec::Gcir(p) => p,
        other => return Err(Error::WrongFamily { expected: "gcir", got: other.name() }),
    };
    let form = psd::spectral_decompose(x)?;
    psd::interior_check(&form, x.frobenius())?;
    let inv = psd::inv_from_spectral(&form, x.frobenius())?;
    let qtq = SymMatrix::new(p.q.transpose() * &p.q)?;
    let gamma_b = p.gamma.eval_inner(x, Some(&form))?.add(&p.b);
    let tr_pow: f64 = form
        .eigenvalues()
        .iter()
        .map(|l| l.powf(2.0 * p.alpha - 1.0))
        .sum();
    let x_pow = form.apply(|l| l.powf(2.0 * p.alpha - 2.0));
    Ok(2.0 * p.beta.trace() + psd::trace_inner(&gamma_b, &inv)?
        - tr_pow * psd::trace_inner(&qtq, &inv)?
        - psd::trace_inner(&x_pow, &qtq)?)
}

/// The instantaneous covariation of the state:
/// `T[i][j][k][l] = f_ik g_jl + f_il g_jk + f_jk g_il + f_jl g_ik`.
pub fn covariation_tensor(cs: &CoefficientSet) -> Result<CovariationTensor> {
    let d = cs.f.dim();
    if cs.g.dim() != d {
        return Err(Error::DimensionMismatch { left: d, right: cs.g.dim() });
    }
    let f = &cs.f;
    let g = &cs.g;
    let mut t = CovariationTensor::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let v = f.entry(i, k) * g.entry(j, l)
                        + f.entry(i, l) * g.entry(j, k)
                        + f.entry(j, k) * g.entry(i, l)
                        + f.entry(j, l) * g.entry(i, k);
                    t.set(i, j, k, l, v);
                }
            }
        }
    }
    Ok(t)
}

//! The pure-jump driver J and the PSD-preserving jump operator K.
//!
//! J is restricted to finite-activity compound Poisson processes (plus
//! deterministic schedules for tests): finite activity is exactly simulable
//! with no truncation bias. Every generated mark is PSD by construction, so
//! the jump term can only push the state deeper into the cone.

use crate::error::{Error, Result};
use crate::psd::{self, GeneralMatrix, SymMatrix};
use crate::rng::{CounterCursor, NoiseStream};

/// Distribution of a single jump mark (always PSD).
#[derive(Debug, Clone, PartialEq)]
pub enum MarkLaw {
    /// `v vᵀ` with `v` a vector of i.i.d. `Normal(0, σ²)` entries.
    RankOne { sigma: f64 },
    /// Diagonal matrix of i.i.d. exponentials with mean `μ`.
    DiagExponential { mu: f64 },
    /// A fixed PSD matrix.
    ConstantMark(SymMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub enum JumpSpec {
    None,
    CompoundPoisson { rate: f64, mark_law: MarkLaw },
    /// Ordered `(time, mark)` list; times strictly increasing and positive.
    DeterministicSchedule(Vec<(f64, SymMatrix)>),
}

/// The linear operator `K(x)` applied to each jump mark.
#[derive(Debug, Clone, PartialEq)]
pub enum KSpec {
    Identity,
    /// `y ↦ A y Aᵀ`.
    Congruence(GeneralMatrix),
    /// `y ↦ c·y`, `c ≥ 0`.
    Scale(f64),
    /// `y ↦ x^{1/2} y x^{1/2}` at the pre-jump state `x`.
    StateCongruence,
}

fn check_psd(m: &SymMatrix, what: &str) -> Result<()> {
    let form = psd::spectral_decompose(m)?;
    if form.lambda_min() < -1e-12 * (1.0 + m.frobenius()) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not PSD (lambda_min {:.3e})",
            form.lambda_min()
        )));
    }
    Ok(())
}

impl MarkLaw {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            MarkLaw::RankOne { sigma } => {
                if !sigma.is_finite() || *sigma < 0.0 {
                    return Err(Error::InvalidArgument(format!("rank-one sigma: {sigma}")));
                }
            }
            MarkLaw::DiagExponential { mu } => {
                if !mu.is_finite() || *mu < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "diagonal-exponential mean: {mu}"
                    )));
                }
            }
            MarkLaw::ConstantMark(m) => {
                if m.dim() != d {
                    return Err(Error::DimensionMismatch {
                        left: m.dim(),
                        right: d,
                    });
                }
                check_psd(m, "constant mark")?;
            }
        }
        Ok(())
    }

    fn sample(&self, d: usize, cursor: &mut CounterCursor) -> SymMatrix {
        match self {
            MarkLaw::RankOne { sigma } => {
                let v =
                    nalgebra::DVector::from_fn(d, |_, _| *sigma * cursor.normal());
                // v_i v_j is exactly symmetric entrywise.
                SymMatrix::new(&v * v.transpose()).expect("rank-one mark")
            }
            MarkLaw::DiagExponential { mu } => {
                let diag: Vec<f64> = (0..d).map(|_| cursor.exponential(*mu)).collect();
                SymMatrix::from_diagonal(&diag)
            }
            MarkLaw::ConstantMark(m) => m.clone(),
        }
    }
}

impl JumpSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            JumpSpec::None => Ok(()),
            JumpSpec::CompoundPoisson { rate, mark_law } => {
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(Error::InvalidArgument(format!("jump rate: {rate}")));
                }
                mark_law.validate(d)
            }
            JumpSpec::DeterministicSchedule(entries) => {
                let mut prev = 0.0;
                for (t, mark) in entries {
                    if !t.is_finite() || *t <= prev {
                        return Err(Error::InvalidArgument(format!(
                            "schedule times must be strictly increasing and positive, got {t}"
                        )));
                    }
                    prev = *t;
                    if mark.dim() != d {
                        return Err(Error::DimensionMismatch {
                            left: mark.dim(),
                            right: d,
                        });
                    }
                    check_psd(mark, "scheduled mark")?;
                }
                Ok(())
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, JumpSpec::None)
    }
}

/// Realize the jump times and marks on `(0, horizon]`. Deterministic given
/// the seed; an identical seed yields a bit-identical list.
pub fn sample_jumps(
    spec: &JumpSpec,
    d: usize,
    horizon: f64,
    seed: u64,
) -> Result<Vec<(f64, SymMatrix)>> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::InvalidArgument(format!("horizon: {horizon}")));
    }
    spec.validate(d)?;
    match spec {
        JumpSpec::None => Ok(Vec::new()),
        JumpSpec::DeterministicSchedule(entries) => Ok(entries
            .iter()
            .filter(|(t, _)| *t <= horizon)
            .cloned()
            .collect()),
        JumpSpec::CompoundPoisson { rate, mark_law } => {
            let mut out = Vec::new();
            if *rate == 0.0 {
                return Ok(out);
            }
            let mut cursor = CounterCursor::new(NoiseStream::new(seed));
            let mean_gap = 1.0 / rate;
            let mut t = cursor.exponential(mean_gap);
            while t <= horizon {
                let mark = mark_law.sample(d, &mut cursor);
                out.push((t, mark));
                t += cursor.exponential(mean_gap);
            }
            Ok(out)
        }
    }
}

impl KSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            KSpec::Identity | KSpec::StateCongruence => Ok(()),
            KSpec::Congruence(a) => {
                if a.nrows() != d || a.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        left: a.nrows(),
                        right: d,
                    });
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite congruence factor".into()));
                }
                Ok(())
            }
            KSpec::Scale(c) => {
                if !c.is_finite() || *c < 0.0 {
                    return Err(Error::InvalidArgument(format!("jump scale: {c}")));
                }
                Ok(())
            }
        }
    }
}

/// The PSD increment `K(x)(mark)`. Linear in the mark; the mark must pass
/// the PSD tolerance.
pub fn apply_jump_operator(k: &KSpec, x: &SymMatrix, mark: &SymMatrix) -> Result<SymMatrix> {
    let form = psd::spectral_decompose(mark)?;
    if form.lambda_min() < -1e-12 * (1.0 + mark.frobenius()) {
        return Err(Error::InvalidMark(form.lambda_min()));
    }
    match k {
        KSpec::Identity => Ok(mark.clone()),
        KSpec::Congruence(a) => {
            SymMatrix::new(a * mark.as_matrix() * a.transpose())
        }
        KSpec::Scale(c) => Ok(mark.scale(*c)),
        KSpec::StateCongruence => {
            let root = psd::psd_power(x, 0.5)?;
            SymMatrix::new(root.as_matrix() * mark.as_matrix() * root.as_matrix())
        }
    }
}

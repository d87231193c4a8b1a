//! Discrete-time strong simulation on the cone with boundary policies.
//!
//! The scheme is Euler with symmetrization: fresh spectral decompositions
//! every substep, no warm-start reuse. Jumps are merged into the grid and
//! applied atomically at their exact times, after the diffusion substep of
//! the straddling interval, so `K` sees the left-limit state.
//!
//! Noise layout: each base step owns a fixed block of counters in the
//! per-path Brownian stream. Halving retries and jump-split substeps consume
//! counters sequentially inside their step's block, so adaptive work never
//! shifts the randomness of later steps. Exhausting a block (pathologically
//! many jumps plus deep halving in one step) is a hard error, not silent
//! stream reuse.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::jump;
use crate::model::{self, ModelSpec};
use crate::psd::{self, GeneralMatrix, SpectralForm, SymMatrix};
use crate::rng::{derive_key, NoiseStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Terminate at the first proposal with `λ_min ≤ boundary_eps`.
    Stop,
    /// Project the proposal's spectrum up to `boundary_eps` and continue.
    Clamp,
    /// Retry the step with `dt/2` (fresh increments) up to `max_halvings`
    /// times, then clamp.
    Halve,
}

impl BoundaryPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryPolicy::Stop => "stop",
            BoundaryPolicy::Clamp => "clamp",
            BoundaryPolicy::Halve => "halve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAction {
    Stopped,
    Clamped,
    /// Halving budget exhausted, then clamped.
    HalveClamped,
}

impl PolicyAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyAction::Stopped => "stop",
            PolicyAction::Clamped => "clamp",
            PolicyAction::HalveClamped => "halve_clamp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// λ_min threshold declaring boundary proximity.
    pub boundary_eps: f64,
    pub policy: BoundaryPolicy,
    pub max_halvings: usize,
    pub seed: u64,
    /// Store every k-th base step (initial point, jump times, and the final
    /// time are always stored).
    pub record_stride: usize,
    /// Keep the Brownian increment applied before each stored row. Requires
    /// `record_stride == 1` so increments and intervals line up.
    pub record_noise: bool,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, boundary_eps: f64, seed: u64) -> Self {
        SimConfig {
            dt,
            horizon,
            boundary_eps,
            policy: BoundaryPolicy::Stop,
            max_halvings: 4,
            seed,
            record_stride: 1,
            record_noise: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt: {}", self.dt)));
        }
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return Err(Error::InvalidArgument(format!("horizon: {}", self.horizon)));
        }
        if !self.boundary_eps.is_finite() || self.boundary_eps <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "boundary_eps: {}",
                self.boundary_eps
            )));
        }
        if self.max_halvings > 40 {
            return Err(Error::InvalidArgument(format!(
                "max_halvings too large: {}",
                self.max_halvings
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
        }
        if self.record_noise && self.record_stride != 1 {
            return Err(Error::InvalidArgument(
                "record_noise requires record_stride = 1".into(),
            ));
        }
        Ok(())
    }
}

/// The default proximity threshold relative to the initial state.
pub fn default_boundary_eps(x0: &SymMatrix) -> f64 {
    1e-8 * x0.frobenius()
}

/// One Brownian increment: i.i.d. `Normal(0, Δt)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub db: GeneralMatrix,
}

impl NoiseIncrement {
    pub fn new(db: GeneralMatrix) -> Self {
        NoiseIncrement { db }
    }

    pub fn zeros(d: usize) -> Self {
        NoiseIncrement { db: GeneralMatrix::zeros(d, d) }
    }

    /// Deterministic draw: entries filled row-major from consecutive
    /// counters starting at `base`.
    pub fn sample(stream: &NoiseStream, base: u64, d: usize, dt: f64) -> Self {
        let sdt = dt.sqrt();
        let mut m = GeneralMatrix::zeros(d, d);
        let mut c = base;
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = stream.normal(c) * sdt;
                c += 1;
            }
        }
        NoiseIncrement { db: m }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: SymMatrix,
    pub increment: SymMatrix,
    pub det_before: f64,
    pub det_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEvent {
    pub time: f64,
    /// λ_min of the offending proposal.
    pub lambda_min: f64,
    pub action: PolicyAction,
}

/// A fully instrumented realized path. All stored states are positive
/// definite (post-policy) and `times` contains every jump time exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<SymMatrix>,
    pub det: Vec<f64>,
    pub lambda_min: Vec<f64>,
    pub trace: Vec<f64>,
    pub jump_flags: Vec<bool>,
    pub jump_events: Vec<JumpEvent>,
    pub boundary_event: Option<BoundaryEvent>,
    /// Per stored row, the Brownian increment applied over the interval
    /// ending at that row (zero matrix for the initial row and jump-only
    /// rows). Present when the config asked for it.
    pub noise: Option<Vec<GeneralMatrix>>,
    /// Smallest λ_min over every accepted state, recorded or not.
    pub min_lambda_overall: f64,
    pub seed: u64,
    pub config: SimConfig,
}

impl Path {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminal_state(&self) -> &SymMatrix {
        self.states.last().expect("paths always hold the initial row")
    }

    pub fn terminal_time(&self) -> f64 {
        *self.times.last().expect("paths always hold the initial row")
    }

    pub fn hit_boundary(&self) -> bool {
        self.boundary_event.is_some()
    }
}

/// The discrete SDE operator at one `(t, x)`:
/// `x + F dB G + Gᵀ dBᵀ Fᵀ + H dt + Σ K(x)(mark)`, symmetrized. The result
/// is NOT policed against the cone; boundary policies belong to the caller.
pub fn step(
    model: &ModelSpec,
    t: f64,
    x: &SymMatrix,
    db: &NoiseIncrement,
    dt: f64,
    jumps_at_step: &[(f64, SymMatrix)],
) -> Result<SymMatrix> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidArgument(format!("dt: {dt}")));
    }
    let d = model.dim();
    if db.db.nrows() != d || db.db.ncols() != d {
        return Err(Error::DimensionMismatch { left: db.db.nrows(), right: d });
    }
    let cs = model::coefficients(model, t, x)?;
    let term = &cs.f_left * &db.db * &cs.g_right;
    let mut m = x.as_matrix() + (&term + term.transpose()) + cs.h.as_matrix() * dt;
    for (_, mark) in jumps_at_step {
        m += jump::apply_jump_operator(model.k_op(), x, mark)?.into_matrix();
    }
    SymMatrix::new(m)
}

/// Normals available to one base step: full recursive halving needs
/// `d²·2^{m+1}`; the factor 8 leaves room for jump-split substeps.
fn step_block(d: usize, max_halvings: usize) -> u64 {
    (d * d) as u64 * (1u64 << (max_halvings + 1)) * 8
}

struct StepNoise<'a> {
    stream: &'a NoiseStream,
    step: usize,
    base: u64,
    used: u64,
    budget: u64,
}

impl StepNoise<'_> {
    fn increment(&mut self, d: usize, delta: f64) -> Result<GeneralMatrix> {
        let need = (d * d) as u64;
        if self.used + need > self.budget {
            return Err(Error::NoiseBudget {
                step: self.step,
                used: self.used + need,
                budget: self.budget,
            });
        }
        let sdt = delta.sqrt();
        let mut m = GeneralMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = self.stream.normal(self.base + self.used) * sdt;
                self.used += 1;
            }
        }
        Ok(m)
    }
}

struct Recorder {
    record_noise: bool,
    d: usize,
    times: Vec<f64>,
    states: Vec<SymMatrix>,
    det: Vec<f64>,
    lambda_min: Vec<f64>,
    trace: Vec<f64>,
    jump_flags: Vec<bool>,
    noise: Vec<GeneralMatrix>,
}

impl Recorder {
    fn new(d: usize, capacity: usize, record_noise: bool) -> Self {
        Recorder {
            record_noise,
            d,
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity),
            det: Vec::with_capacity(capacity),
            lambda_min: Vec::with_capacity(capacity),
            trace: Vec::with_capacity(capacity),
            jump_flags: Vec::with_capacity(capacity),
            noise: Vec::new(),
        }
    }

    fn last_time(&self) -> f64 {
        *self.times.last().expect("initial row pushed first")
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        t: f64,
        x: &SymMatrix,
        det: f64,
        lam: f64,
        tr: f64,
        jump: bool,
        db: Option<&GeneralMatrix>,
    ) {
        debug_assert!(self.times.last().map_or(true, |&lt| t > lt));
        self.times.push(t);
        self.states.push(x.clone());
        self.det.push(det);
        self.lambda_min.push(lam);
        self.trace.push(tr);
        self.jump_flags.push(jump);
        if self.record_noise {
            self.noise.push(db.cloned().unwrap_or_else(|| GeneralMatrix::zeros(self.d, self.d)));
        }
    }
}

struct SimCtx<'a> {
    model: &'a ModelSpec,
    cfg: &'a SimConfig,
    rec: Recorder,
    boundary: Option<BoundaryEvent>,
    min_lambda: f64,
    /// Increment of the last accepted substep whose end row was suppressed
    /// (a jump at the interval end will claim it).
    pending_db: Option<GeneralMatrix>,
    stopped: bool,
}

impl SimCtx<'_> {
    fn fine(&self) -> bool {
        self.cfg.record_stride == 1
    }

    /// Advance `x` over `[t, t+delta]` with policy handling. `record_end`
    /// controls whether the row at `t+delta` is stored (suppressed when a
    /// jump lands exactly there, so the recorded row is the post-jump
    /// state).
    fn advance(
        &mut self,
        noise: &mut StepNoise<'_>,
        x: &mut SymMatrix,
        t: f64,
        delta: f64,
        depth: usize,
        record_end: bool,
    ) -> Result<()> {
        let d = self.model.dim();
        let db = noise.increment(d, delta)?;
        let cs = model::coefficients(self.model, t, x)
            .map_err(|e| e.at_step(noise.step, t))?;
        let term = &cs.f_left * &db * &cs.g_right;
        let proposal =
            SymMatrix::new(x.as_matrix() + (&term + term.transpose()) + cs.h.as_matrix() * delta)
                .map_err(|e| e.at_step(noise.step, t))?;
        let form = psd::spectral_decompose(&proposal).map_err(|e| e.at_step(noise.step, t))?;

        if form.lambda_min() > self.cfg.boundary_eps {
            return Ok(self.accept(x, proposal, &form, t + delta, record_end, db));
        }

        match self.cfg.policy {
            BoundaryPolicy::Stop => {
                self.boundary = Some(BoundaryEvent {
                    time: t + delta,
                    lambda_min: form.lambda_min(),
                    action: PolicyAction::Stopped,
                });
                // Terminal row: the last good state, carried to the event
                // time.
                let xform = psd::spectral_decompose(x)?;
                let (det, lam, tr) = (xform.det(), xform.lambda_min(), xform.trace());
                self.rec.push(t + delta, x, det, lam, tr, false, None);
                self.stopped = true;
                Ok(())
            }
            BoundaryPolicy::Clamp => {
                Ok(self.clamp(x, &form, t + delta, record_end, db, PolicyAction::Clamped))
            }
            BoundaryPolicy::Halve => {
                if depth == 0 {
                    return Ok(self.clamp(
                        x,
                        &form,
                        t + delta,
                        record_end,
                        db,
                        PolicyAction::HalveClamped,
                    ));
                }
                let half = 0.5 * delta;
                self.advance(noise, x, t, half, depth - 1, true)?;
                if self.stopped {
                    return Ok(());
                }
                self.advance(noise, x, t + half, half, depth - 1, record_end)
            }
        }
    }

    fn accept(
        &mut self,
        x: &mut SymMatrix,
        proposal: SymMatrix,
        form: &SpectralForm,
        t_end: f64,
        record_end: bool,
        db: GeneralMatrix,
    ) {
        *x = proposal;
        self.min_lambda = self.min_lambda.min(form.lambda_min());
        if record_end && self.fine() {
            let (det, lam, tr) = (form.det(), form.lambda_min(), form.trace());
            self.rec.push(t_end, x, det, lam, tr, false, Some(&db));
            self.pending_db = None;
        } else {
            self.pending_db = Some(db);
        }
    }

    fn clamp(
        &mut self,
        x: &mut SymMatrix,
        form: &SpectralForm,
        t_end: f64,
        record_end: bool,
        db: GeneralMatrix,
        action: PolicyAction,
    ) {
        let eps = self.cfg.boundary_eps;
        if self.boundary.is_none() {
            self.boundary = Some(BoundaryEvent {
                time: t_end,
                lambda_min: form.lambda_min(),
                action,
            });
        }
        let clamped = form.apply(|l| l.max(eps));
        let lam: Vec<f64> = form.eigenvalues().iter().map(|l| l.max(eps)).collect();
        let det: f64 = lam.iter().product();
        let tr: f64 = lam.iter().sum();
        *x = clamped;
        self.min_lambda = self.min_lambda.min(lam[0]);
        if record_end && self.fine() {
            self.rec.push(t_end, x, det, lam[0], tr, false, Some(&db));
            self.pending_db = None;
        } else {
            self.pending_db = Some(db);
        }
    }
}

/// Simulate one path. Deterministic given `(model, x0, cfg)`; the Brownian
/// and jump streams are derived from `cfg.seed`.
pub fn simulate_path(model: &ModelSpec, x0: &SymMatrix, cfg: &SimConfig) -> Result<Path> {
    cfg.validate()?;
    let d = model.dim();
    if x0.dim() != d {
        return Err(Error::DimensionMismatch { left: x0.dim(), right: d });
    }
    let form0 = psd::spectral_decompose(x0)?;
    if form0.lambda_min() <= cfg.boundary_eps {
        return Err(Error::InvalidArgument(format!(
            "x0 must satisfy lambda_min > boundary_eps, got {} <= {}",
            form0.lambda_min(),
            cfg.boundary_eps
        )));
    }

    let n_steps = (cfg.horizon / cfg.dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::InvalidArgument(
            "horizon shorter than half a base step".into(),
        ));
    }
    let horizon = n_steps as f64 * cfg.dt;

    let brownian = NoiseStream::new(derive_key(cfg.seed, 1));
    let jump_seed = derive_key(cfg.seed, 2);
    let jumps = jump::sample_jumps(model.jump(), d, horizon, jump_seed)?;
    let block = step_block(d, cfg.max_halvings);

    let capacity = n_steps / cfg.record_stride + jumps.len() + 2;
    let mut rec = Recorder::new(d, capacity, cfg.record_noise);
    rec.push(0.0, x0, form0.det(), form0.lambda_min(), form0.trace(), false, None);

    let mut ctx = SimCtx {
        model,
        cfg,
        rec,
        boundary: None,
        min_lambda: form0.lambda_min(),
        pending_db: None,
        stopped: false,
    };

    let mut x = x0.clone();
    let mut jp = 0usize;
    let mut events: Vec<JumpEvent> = Vec::with_capacity(jumps.len());

    'steps: for s in 0..n_steps {
        let t0 = s as f64 * cfg.dt;
        let t1 = (s + 1) as f64 * cfg.dt;
        let mut noise = StepNoise {
            stream: &brownian,
            step: s,
            base: s as u64 * block,
            used: 0,
            budget: block,
        };
        let mut t_cur = t0;

        while jp < jumps.len() && jumps[jp].0 <= t1 {
            let (tj, mark) = (&jumps[jp].0, &jumps[jp].1);
            if *tj > t_cur {
                ctx.advance(&mut noise, &mut x, t_cur, tj - t_cur, cfg.max_halvings, false)?;
                if ctx.stopped {
                    break 'steps;
                }
            }
            // The jump acts on the left-limit state.
            let before = psd::spectral_decompose(&x)?;
            let increment = jump::apply_jump_operator(model.k_op(), &x, mark)
                .map_err(|e| e.at_step(s, *tj))?;
            x = x.add(&increment);
            let after = psd::spectral_decompose(&x)?;
            events.push(JumpEvent {
                time: *tj,
                mark: mark.clone(),
                increment,
                det_before: before.det(),
                det_after: after.det(),
            });
            ctx.min_lambda = ctx.min_lambda.min(after.lambda_min());
            let db = ctx.pending_db.take();
            ctx.rec.push(
                *tj,
                &x,
                after.det(),
                after.lambda_min(),
                after.trace(),
                true,
                db.as_ref(),
            );
            t_cur = *tj;
            jp += 1;
        }

        if t_cur < t1 {
            ctx.advance(&mut noise, &mut x, t_cur, t1 - t_cur, cfg.max_halvings, true)?;
            if ctx.stopped {
                break 'steps;
            }
        }

        // Coarse-stride and end-of-horizon rows.
        let want_row = (s + 1) % cfg.record_stride == 0 || s + 1 == n_steps;
        if want_row && ctx.rec.last_time() < t1 {
            let form = psd::spectral_decompose(&x)?;
            ctx.rec.push(t1, &x, form.det(), form.lambda_min(), form.trace(), false, None);
        }
    }

    let Recorder { times, states, det, lambda_min, trace, jump_flags, noise, .. } = ctx.rec;
    Ok(Path {
        times,
        states,
        det,
        lambda_min,
        trace,
        jump_flags,
        jump_events: events,
        boundary_event: ctx.boundary,
        noise: if cfg.record_noise { Some(noise) } else { None },
        min_lambda_overall: ctx.min_lambda,
        seed: cfg.seed,
        config: cfg.clone(),
    })
}

/// Simulate `n` independent paths; path `i` uses the derived seed
/// `derive_key(cfg.seed, i)`. Results are in path order regardless of
/// execution mode.
pub fn simulate_ensemble(
    model: &ModelSpec,
    x0: &SymMatrix,
    cfg: &SimConfig,
    n: usize,
    mode: ExecMode,
) -> Result<Vec<Path>> {
    exec::map_indexed(n, mode, |i| {
        let mut per_path = cfg.clone();
        per_path.seed = derive_key(cfg.seed, i as u64);
        simulate_path(model, x0, &per_path)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::{JumpSpec, KSpec, MarkLaw};
    use crate::model::GammaSpec;
    use approx::assert_relative_eq;

    fn eye(d: usize) -> GeneralMatrix {
        GeneralMatrix::identity(d, d)
    }

    fn wishart(d: usize, q: GeneralMatrix, b: SymMatrix) -> ModelSpec {
        ModelSpec::wishart(d, q, GeneralMatrix::zeros(d, d), b, GammaSpec::Zero).unwrap()
    }

    #[test]
    fn step_examples() {
        // Pure drift: I + 0.03·I.
        let m = wishart(2, eye(2), SymMatrix::identity(2).scale(3.0));
        let out = step(
            &m,
            0.0,
            &SymMatrix::identity(2),
            &NoiseIncrement::zeros(2),
            0.01,
            &[],
        )
        .unwrap();
        assert!(out.sub(&SymMatrix::identity(2).scale(1.03)).frobenius() <= 1e-15);

        // d = 1: 1 + 2·0.1 + 0.03 = 1.23.
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[3.0]));
        let db = NoiseIncrement::new(GeneralMatrix::from_element(1, 1, 0.1));
        let out = step(&m, 0.0, &SymMatrix::identity(1), &db, 0.01, &[]).unwrap();
        assert_relative_eq!(out.entry(0, 0), 1.23, max_relative = 1e-14);

        // Jump contribution alone: x + I.
        let m = wishart(2, GeneralMatrix::zeros(2, 2), SymMatrix::zeros(2));
        let x = SymMatrix::from_diagonal(&[2.0, 5.0]);
        let out = step(
            &m,
            0.0,
            &x,
            &NoiseIncrement::zeros(2),
            0.0,
            &[(0.5, SymMatrix::identity(2))],
        )
        .unwrap();
        assert!(out.sub(&x.add(&SymMatrix::identity(2))).frobenius() <= 1e-15);
    }

    #[test]
    fn drift_only_reaches_2i_exactly() {
        let m = wishart(2, GeneralMatrix::zeros(2, 2), SymMatrix::identity(2));
        let cfg = SimConfig::new(1e-3, 1.0, 1e-12, 7);
        let path = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        assert!(path.boundary_event.is_none());
        let err = path.terminal_state().sub(&SymMatrix::identity(2).scale(2.0)).frobenius();
        assert!(err <= 1e-12, "terminal error {err}");
    }

    #[test]
    fn zero_coefficients_hold_constant() {
        let m = ModelSpec::ou(2, SymMatrix::zeros(2), GammaSpec::Zero).unwrap();
        let x0 = psd::parse_sym("2,1;1,3").unwrap();
        let cfg = SimConfig::new(0.01, 0.5, 1e-12, 3);
        let path = simulate_path(&m, &x0, &cfg).unwrap();
        for s in &path.states {
            assert_eq!(s, &x0);
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let m = wishart(2, eye(2), SymMatrix::identity(2).scale(3.5));
        let cfg = SimConfig::new(1e-3, 0.2, 1e-10, 42);
        let a = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        let b = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        assert_eq!(a, b);

        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        let c = simulate_path(&m, &SymMatrix::identity(2), &cfg2).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn policies_agree_without_events() {
        // Away from the boundary all three policies consume identical noise
        // and produce identical paths.
        let m = wishart(2, eye(2), SymMatrix::identity(2).scale(4.0));
        let mut cfg = SimConfig::new(1e-3, 0.2, 1e-10, 11);
        let stop = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        assert!(stop.boundary_event.is_none());
        cfg.policy = BoundaryPolicy::Clamp;
        let clamp = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        cfg.policy = BoundaryPolicy::Halve;
        let halve = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        assert_eq!(stop.states, clamp.states);
        assert_eq!(stop.states, halve.states);
    }

    #[test]
    fn scheduled_jump_merges_into_grid() {
        let m = wishart(2, GeneralMatrix::zeros(2, 2), SymMatrix::zeros(2))
            .with_jump(
                JumpSpec::DeterministicSchedule(vec![(0.25, SymMatrix::identity(2))]),
                KSpec::Identity,
            )
            .unwrap();
        let cfg = SimConfig::new(0.1, 0.5, 1e-12, 3);
        let path = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        // 0.25 sits mid-step and must appear exactly.
        assert!(path.times.iter().any(|&t| t == 0.25));
        assert_eq!(path.jump_events.len(), 1);
        let ev = &path.jump_events[0];
        assert_eq!(ev.time, 0.25);
        assert!(ev.det_after >= ev.det_before);
        // Drift and noise are zero, so the jump is the whole story.
        let idx = path.times.iter().position(|&t| t == 0.25).unwrap();
        assert!(path.states[idx]
            .sub(&SymMatrix::identity(2).scale(2.0))
            .frobenius()
            <= 1e-14);
        assert!(path.jump_flags[idx]);
        assert!(path.terminal_state().sub(&SymMatrix::identity(2).scale(2.0)).frobenius() <= 1e-14);
    }

    #[test]
    fn poisson_jumps_monotone_in_det() {
        let m = ModelSpec::wishart_bru(2, eye(2), 4.0)
            .unwrap()
            .with_jump(
                JumpSpec::CompoundPoisson {
                    rate: 6.0,
                    mark_law: MarkLaw::RankOne { sigma: 0.7 },
                },
                KSpec::Identity,
            )
            .unwrap();
        let cfg = SimConfig::new(1e-3, 0.5, 1e-10, 99);
        let path = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        assert!(!path.jump_events.is_empty());
        for ev in &path.jump_events {
            assert!(ev.det_after >= ev.det_before - 1e-12 * ev.det_before.abs());
            let form = psd::spectral_decompose(&ev.increment).unwrap();
            assert!(form.lambda_min() >= -1e-10);
            assert!(path.times.contains(&ev.time));
        }
        // Strictly increasing times and symmetric states throughout.
        for w in path.times.windows(2) {
            assert!(w[0] < w[1]);
        }
        for s in &path.states {
            assert_eq!(s.symmetry_gap(), 0.0);
        }
    }

    #[test]
    fn stop_policy_terminates_and_keeps_last_good_state() {
        // δ = b/Q² = 0.5 < 2: attainment expected quickly from x0 = 0.01.
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[0.5]));
        let x0 = SymMatrix::from_diagonal(&[0.01]);
        let mut hits = 0;
        for seed in 0..300u64 {
            let cfg = SimConfig::new(5e-4, 1.0, 1e-6, seed);
            let path = simulate_path(&m, &x0, &cfg).unwrap();
            if let Some(ev) = &path.boundary_event {
                hits += 1;
                assert_eq!(ev.action, PolicyAction::Stopped);
                assert!(ev.time <= 1.0 + 1e-12);
                assert!(ev.lambda_min <= 1e-6);
                assert_relative_eq!(path.terminal_time(), ev.time, max_relative = 1e-12);
                // Last stored state is the last good one, still interior.
                assert!(path.lambda_min.last().unwrap() > &1e-6);
            }
        }
        assert!(hits >= 250, "only {hits}/300 paths hit");
    }

    #[test]
    fn univariate_low_delta_majority_attainment() {
        // b = 1, Q = 1 (δ = 1 < 2), x0 = 0.01: boundary_event in the
        // majority of seeded runs.
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[1.0]));
        let x0 = SymMatrix::from_diagonal(&[0.01]);
        let mut hits = 0;
        for seed in 0..300u64 {
            let cfg = SimConfig::new(5e-4, 1.0, 1e-6, seed);
            let path = simulate_path(&m, &x0, &cfg).unwrap();
            if path.hit_boundary() {
                hits += 1;
            }
        }
        assert!(hits > 150, "only {hits}/300 paths hit");
    }

    #[test]
    fn clamp_policy_completes_with_floor() {
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[0.5]));
        let x0 = SymMatrix::from_diagonal(&[0.01]);
        let mut cfg = SimConfig::new(5e-4, 0.5, 1e-6, 3);
        cfg.policy = BoundaryPolicy::Clamp;
        let path = simulate_path(&m, &x0, &cfg).unwrap();
        assert_relative_eq!(path.terminal_time(), 0.5, max_relative = 1e-12);
        let ev = path.boundary_event.as_ref().expect("low delta must clamp");
        assert_eq!(ev.action, PolicyAction::Clamped);
        for lam in &path.lambda_min {
            assert!(*lam >= 1e-6 * (1.0 - 1e-12));
        }
        assert!(path.min_lambda_overall >= 1e-6 * (1.0 - 1e-12));
    }

    #[test]
    fn halve_policy_subdivides_then_completes() {
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[0.5]));
        let x0 = SymMatrix::from_diagonal(&[0.01]);
        let mut cfg = SimConfig::new(5e-4, 0.25, 1e-6, 3);
        cfg.policy = BoundaryPolicy::Halve;
        cfg.max_halvings = 6;
        let path = simulate_path(&m, &x0, &cfg).unwrap();
        assert_relative_eq!(path.terminal_time(), 0.25, max_relative = 1e-12);
        // Halving inserts substep rows at stride 1.
        let n_base = (0.25 / 5e-4_f64).round() as usize;
        assert!(path.len() > n_base + 1, "no substeps were recorded");
        for w in path.times.windows(2) {
            assert!(w[0] < w[1]);
        }
        for lam in &path.lambda_min {
            assert!(*lam >= 1e-6 * (1.0 - 1e-12));
        }
        if let Some(ev) = &path.boundary_event {
            assert_eq!(ev.action, PolicyAction::HalveClamped);
        }
    }

    #[test]
    fn halving_does_not_shift_later_noise() {
        // Same seed, policies halve vs clamp: after the first boundary
        // interaction the state histories differ, but both still draw each
        // base step's noise from that step's own block. A drift-dominated
        // tail far from the boundary therefore reconverges in law; here we
        // check the cheap structural half: base-grid times always exist.
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[0.5]));
        let x0 = SymMatrix::from_diagonal(&[0.01]);
        let mut cfg = SimConfig::new(5e-4, 0.05, 1e-6, 5);
        cfg.policy = BoundaryPolicy::Halve;
        cfg.max_halvings = 4;
        let path = simulate_path(&m, &x0, &cfg).unwrap();
        for k in 0..=100usize {
            let t = k as f64 * 5e-4;
            assert!(
                path.times.iter().any(|&u| (u - t).abs() < 1e-12),
                "missing base grid time {t}"
            );
        }
    }

    #[test]
    fn weak_moment_check_d1() {
        // E[X_T] = x0 + bT for β = 0; Euler preserves this expectation
        // exactly, so the ensemble mean must sit within 3 standard errors.
        // Clamp at a negligible floor so every path reaches T; stopping
        // early would censor exactly the low excursions and bias the mean.
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[3.0]));
        let mut cfg = SimConfig::new(0.01, 1.0, 1e-12, 2027);
        cfg.record_stride = 100;
        cfg.policy = BoundaryPolicy::Clamp;
        let n = 4000;
        let paths =
            simulate_ensemble(&m, &SymMatrix::identity(1), &cfg, n, ExecMode::default()).unwrap();
        let finals: Vec<f64> = paths.iter().map(|p| p.terminal_state().entry(0, 0)).collect();
        assert_eq!(finals.len(), n);
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let var = finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (finals.len() - 1) as f64;
        let se = (var / finals.len() as f64).sqrt();
        assert!(
            (mean - 4.0).abs() <= 3.0 * se,
            "mean {mean}, expected 4.0, 3se {}",
            3.0 * se
        );
    }

    #[test]
    fn drift_only_richardson_halving() {
        // F = G = 0 via Q = 0; H = xβ + βᵀx + b solves a linear ODE whose
        // entrywise closed form is exponential. Global Euler error should
        // halve when dt halves.
        let beta = psd::parse_matrix("0.3,0;0,-0.2").unwrap();
        let m = ModelSpec::wishart(
            2,
            GeneralMatrix::zeros(2, 2),
            beta,
            SymMatrix::identity(2),
            GammaSpec::Zero,
        )
        .unwrap();
        let x0 = psd::parse_sym("1,0.2;0.2,1").unwrap();
        let exact = |t: f64| {
            let rates = [[0.6, 0.1], [0.1, -0.4]];
            let b = [[1.0, 0.0], [0.0, 1.0]];
            let mut m = GeneralMatrix::zeros(2, 2);
            for i in 0..2 {
                for j in 0..2 {
                    let s: f64 = rates[i][j];
                    let x0ij = x0.entry(i, j);
                    let bij = b[i][j];
                    m[(i, j)] = (x0ij + bij / s) * (s * t).exp() - bij / s;
                }
            }
            SymMatrix::new(m).unwrap()
        };
        let mut errs = Vec::new();
        for dt in [1e-2, 5e-3] {
            let mut cfg = SimConfig::new(dt, 1.0, 1e-12, 5);
            cfg.record_stride = 1000;
            let path = simulate_path(&m, &x0, &cfg).unwrap();
            errs.push(path.terminal_state().sub(&exact(1.0)).frobenius());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (1.7..=2.3).contains(&ratio),
            "error ratio {ratio} (errors {errs:?})"
        );
    }

    #[test]
    fn record_stride_thins_rows() {
        let m = wishart(2, eye(2), SymMatrix::identity(2).scale(4.0));
        let mut cfg = SimConfig::new(0.01, 1.0, 1e-12, 13);
        cfg.record_stride = 10;
        let path = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        assert_eq!(path.len(), 11);
        assert_eq!(path.times[0], 0.0);
        assert_relative_eq!(path.times[1], 0.1, max_relative = 1e-12);
        assert_relative_eq!(path.terminal_time(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn recorded_noise_reconstructs_path() {
        let m = wishart(2, eye(2), SymMatrix::identity(2).scale(4.0));
        let mut cfg = SimConfig::new(1e-3, 0.1, 1e-10, 21);
        cfg.record_noise = true;
        let path = simulate_path(&m, &SymMatrix::identity(2), &cfg).unwrap();
        assert!(path.boundary_event.is_none());
        let noise = path.noise.as_ref().unwrap();
        assert_eq!(noise.len(), path.len());
        for i in 1..path.len() {
            let dt = path.times[i] - path.times[i - 1];
            let rebuilt = step(
                &m,
                path.times[i - 1],
                &path.states[i - 1],
                &NoiseIncrement::new(noise[i].clone()),
                dt,
                &[],
            )
            .unwrap();
            let err = rebuilt.sub(&path.states[i]).frobenius();
            assert!(err <= 1e-12, "row {i} reconstruction error {err}");
        }
    }

    #[test]
    fn record_noise_demands_fine_stride() {
        let mut cfg = SimConfig::new(1e-3, 0.1, 1e-10, 21);
        cfg.record_noise = true;
        cfg.record_stride = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn invalid_x0_rejected() {
        let m = wishart(2, eye(2), SymMatrix::identity(2).scale(4.0));
        let cfg = SimConfig::new(1e-3, 0.1, 1e-2, 1);
        let near_boundary = SymMatrix::from_diagonal(&[1e-3, 1.0]);
        assert!(matches!(
            simulate_path(&m, &near_boundary, &cfg),
            Err(Error::InvalidArgument(_))
        ));
        let wrong_dim = SymMatrix::identity(3);
        assert!(matches!(
            simulate_path(&m, &wrong_dim, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ensemble_modes_agree_bitwise() {
        let m = ModelSpec::wishart_bru(2, eye(2), 3.5).unwrap();
        let cfg = SimConfig::new(1e-3, 0.1, 1e-10, 42);
        let seq =
            simulate_ensemble(&m, &SymMatrix::identity(2), &cfg, 8, ExecMode::Sequential).unwrap();
        let par =
            simulate_ensemble(&m, &SymMatrix::identity(2), &cfg, 8, ExecMode::Parallel).unwrap();
        assert_eq!(seq, par);
        // Distinct derived seeds produce distinct paths.
        assert_ne!(seq[0].states, seq[1].states);
    }

    #[test]
    fn noise_budget_exhaustion_is_an_error() {
        // 100 scheduled jumps inside the single base step overflow the
        // step's counter block.
        let schedule: Vec<(f64, SymMatrix)> = (1..=100)
            .map(|k| (k as f64 * 1e-5, SymMatrix::identity(1).scale(1e-6)))
            .collect();
        let m = wishart(1, eye(1), SymMatrix::from_diagonal(&[3.0]))
            .with_jump(JumpSpec::DeterministicSchedule(schedule), KSpec::Identity)
            .unwrap();
        let mut cfg = SimConfig::new(1e-3, 1e-3, 1e-12, 9);
        cfg.max_halvings = 0;
        let err = simulate_path(&m, &SymMatrix::identity(1), &cfg).unwrap_err();
        assert!(matches!(err, Error::NoiseBudget { .. }), "got {err:?}");
    }
}

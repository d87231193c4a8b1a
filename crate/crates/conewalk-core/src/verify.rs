//! Numerical verification of the Itô identities along simulated paths:
//! the log-determinant decomposition `r = r₀ + M + P`, martingale
//! statistics of `M`, the drift floor under `P`, the one-step covariation
//! tensor, and the trace-Brownian reduction.
//!
//! `M` is defined as the residual `r − r₀ − P`, not reconstructed from a
//! scalar driver: the driving Brownian motion behind `M` is an existence
//! object, so the martingale property is tested statistically instead.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::{self, ModelSpec};
use crate::psd::{self, CovariationTensor, GeneralMatrix, SymMatrix};
use crate::rng::{derive_key, NoiseStream};
use crate::sim::{self, NoiseIncrement, Path, SimConfig};

/// Pathwise log-determinant decomposition on the path's own grid.
///
/// `p` is the left-endpoint quadrature of the drift-margin integrand plus
/// the exact jump log-det increments; `m = r − r₀ − p` is the martingale
/// residual. `quad_envelope` is a running first-order bound on the
/// left-rule quadrature error (`Σ Δt·|Δ integrand|`); it shrinks
/// proportionally to `dt` and is the honest cushion for tests whose
/// statistical bands degenerate to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionRecord {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub m: Vec<f64>,
    pub floor: Vec<f64>,
    pub qv_predicted: Vec<f64>,
    pub quad_envelope: Vec<f64>,
}

pub fn logdet_decomposition(path: &Path, model: &ModelSpec) -> Result<DecompositionRecord> {
    let n = path.len();
    let mut r = Vec::with_capacity(n);
    for (i, &det) in path.det.iter().enumerate() {
        if !(det > 0.0) {
            return Err(Error::NonPositiveDet { step: i });
        }
        r.push(det.ln());
    }

    let c = model.drift_floor();
    let mut p = vec![0.0; n];
    let mut floor = vec![0.0; n];
    let mut qv = vec![0.0; n];
    let mut env = vec![0.0; n];
    let mut jev = path.jump_events.iter().peekable();
    let mut prev_margin = f64::NAN;

    for i in 0..n.saturating_sub(1) {
        let t = path.times[i];
        let dt = path.times[i + 1] - t;
        let x = &path.states[i];
        let form = psd::spectral_decompose(x).map_err(|e| e.at_step(i, t))?;
        let cs = model::coefficients_with_form(model, t, x, &form)
            .map_err(|e| e.at_step(i, t))?;
        let inv = psd::inv_from_spectral(&form, x.frobenius()).map_err(|e| e.at_step(i, t))?;
        let (margin, cross) = model::margin_and_cross(&cs, &inv);

        let mut dp = margin * dt;
        while let Some(ev) = jev.peek() {
            if ev.time <= path.times[i + 1] {
                dp += (ev.det_after / ev.det_before).ln();
                jev.next();
            } else {
                break;
            }
        }
        p[i + 1] = p[i] + dp;
        floor[i + 1] = floor[i] + c * dt;
        qv[i + 1] = qv[i] + 4.0 * cross * dt;
        let dm = if prev_margin.is_nan() { 0.0 } else { (margin - prev_margin).abs() };
        env[i + 1] = env[i] + dt * dm;
        prev_margin = margin;
    }

    let m = r.iter().enumerate().map(|(i, ri)| ri - r[0] - p[i]).collect();
    Ok(DecompositionRecord {
        times: path.times.clone(),
        r,
        p,
        m,
        floor,
        qv_predicted: qv,
        quad_envelope: env,
    })
}

/// Grid points where `P` undercuts the floor integral by more than `tol`.
pub fn floor_violations(rec: &DecompositionRecord, tol: f64) -> usize {
    rec.p
        .iter()
        .zip(&rec.floor)
        .filter(|(p, f)| **p < **f - tol)
        .count()
}

/// Quadrature allowance proportional to the base step: `50·dt·max(1, |c|)`,
/// with `c` inferred from the floor integral's average slope.
pub fn default_floor_tol(rec: &DecompositionRecord) -> f64 {
    let t_end = *rec.times.last().unwrap_or(&0.0);
    if t_end <= 0.0 || rec.times.len() < 2 {
        return 0.0;
    }
    let dt = rec.times[1] - rec.times[0];
    let c = rec.floor.last().unwrap() / t_end;
    50.0 * dt * c.abs().max(1.0)
}

fn realized_qv(m: &[f64]) -> Vec<f64> {
    let mut qv = Vec::with_capacity(m.len());
    qv.push(0.0);
    for i in 1..m.len() {
        let dm = m[i] - m[i - 1];
        qv.push(qv[i - 1] + dm * dm);
    }
    qv
}

fn grid_index(times: &[f64], cp: f64) -> Result<usize> {
    let j = times.partition_point(|&t| t < cp);
    let mut best = None;
    for k in [j.saturating_sub(1), j, j + 1] {
        if let Some(&t) = times.get(k) {
            let d = (t - cp).abs();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, k));
            }
        }
    }
    match best {
        Some((d, k)) if d <= 1e-9 * (1.0 + cp.abs()) => Ok(k),
        _ => Err(Error::GridMismatch),
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn mean_zero_ok(mean: f64, se: f64, env: f64) -> bool {
    mean.abs() <= 3.0 * se + env
}

fn qv_ok(realized: f64, predicted: f64, se: f64, env: f64) -> bool {
    (realized - predicted).abs() <= (0.05 * predicted.abs()).max(3.0 * se) + env * env
}

/// Ensemble statistics of the decomposition at fixed checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub checkpoints: Vec<f64>,
    pub m_mean: Vec<f64>,
    pub m_se: Vec<f64>,
    pub mean_zero_pass: Vec<bool>,
    pub qv_realized: Vec<f64>,
    pub qv_se: Vec<f64>,
    pub qv_predicted: Vec<f64>,
    pub qv_pass: Vec<bool>,
    pub floor_violations: usize,
    pub n_records: usize,
    /// Paths stopped by the boundary policy. They still contribute, frozen
    /// at the stop time (optional stopping keeps the mean of M unbiased);
    /// dropping them would tilt the surviving ensemble upward.
    pub n_stopped: usize,
}

impl MartingaleReport {
    pub fn all_pass(&self) -> bool {
        self.mean_zero_pass.iter().all(|&b| b) && self.qv_pass.iter().all(|&b| b)
    }
}

struct CheckpointStats {
    m: Vec<Vec<f64>>,
    qvr: Vec<Vec<f64>>,
    qvp: Vec<Vec<f64>>,
    env: Vec<Vec<f64>>,
}

impl CheckpointStats {
    fn new(k: usize) -> Self {
        CheckpointStats {
            m: vec![Vec::new(); k],
            qvr: vec![Vec::new(); k],
            qvp: vec![Vec::new(); k],
            env: vec![Vec::new(); k],
        }
    }

    fn add(&mut self, rec: &DecompositionRecord, idx: &[usize]) {
        let qv_run = realized_qv(&rec.m);
        for (k, &i) in idx.iter().enumerate() {
            self.m[k].push(rec.m[i]);
            self.qvr[k].push(qv_run[i]);
            self.qvp[k].push(rec.qv_predicted[i]);
            self.env[k].push(rec.quad_envelope[i]);
        }
    }

    fn report(
        &self,
        checkpoints: &[f64],
        floor_violations: usize,
        n_stopped: usize,
    ) -> MartingaleReport {
        let k = checkpoints.len();
        let mut rep = MartingaleReport {
            checkpoints: checkpoints.to_vec(),
            m_mean: Vec::with_capacity(k),
            m_se: Vec::with_capacity(k),
            mean_zero_pass: Vec::with_capacity(k),
            qv_realized: Vec::with_capacity(k),
            qv_se: Vec::with_capacity(k),
            qv_predicted: Vec::with_capacity(k),
            qv_pass: Vec::with_capacity(k),
            floor_violations,
            n_records: self.m.first().map_or(0, |v| v.len()),
            n_stopped,
        };
        for i in 0..k {
            let (mm, ms) = mean_se(&self.m[i]);
            let (qr, qs) = mean_se(&self.qvr[i]);
            let (qp, _) = mean_se(&self.qvp[i]);
            let (env, _) = mean_se(&self.env[i]);
            rep.m_mean.push(mm);
            rep.m_se.push(ms);
            rep.mean_zero_pass.push(mean_zero_ok(mm, ms, env));
            rep.qv_realized.push(qr);
            rep.qv_se.push(qs);
            rep.qv_predicted.push(qp);
            rep.qv_pass.push(qv_ok(qr, qp, qs, env));
        }
        rep
    }
}

/// Martingale statistics from materialized records sharing one grid.
pub fn martingale_checks(
    records: &[DecompositionRecord],
    checkpoints: &[f64],
) -> Result<MartingaleReport> {
    if records.len() < 100 {
        return Err(Error::InsufficientSample { need: 100, got: records.len() });
    }
    let grid = &records[0].times;
    for rec in &records[1..] {
        if rec.times != *grid {
            return Err(Error::GridMismatch);
        }
    }
    let idx: Vec<usize> =
        checkpoints.iter().map(|&cp| grid_index(grid, cp)).collect::<Result<_>>()?;
    let mut stats = CheckpointStats::new(checkpoints.len());
    let mut violations = 0usize;
    for rec in records {
        stats.add(rec, &idx);
        violations += floor_violations(rec, default_floor_tol(rec));
    }
    Ok(stats.report(checkpoints, violations, 0))
}

/// Matrix function entering the trace-Brownian reduction.
#[derive(Debug, Clone, PartialEq)]
pub enum HForm {
    Constant(SymMatrix),
    /// `h(x) = √x`, matching the wishart stepper integrand.
    SqrtState,
}

impl HForm {
    pub fn name(&self) -> String {
        match self {
            HForm::Constant(m) => format!("constant({})", m),
            HForm::SqrtState => "sqrt_state".into(),
        }
    }

    fn eval(&self, x: &SymMatrix) -> Result<SymMatrix> {
        match self {
            HForm::Constant(m) => {
                if m.dim() != x.dim() {
                    return Err(Error::DimensionMismatch { left: m.dim(), right: x.dim() });
                }
                Ok(m.clone())
            }
            HForm::SqrtState => psd::psd_power(x, 0.5),
        }
    }
}

/// One path's reduction plus ensemble statistics of the terminal quadratic
/// variation. `beta` and `qv` trace the first usable path.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReduction {
    pub h_name: String,
    pub times: Vec<f64>,
    pub beta: Vec<f64>,
    pub qv: Vec<f64>,
    pub qv_terminal: Vec<f64>,
    pub qv_mean: f64,
    pub qv_se: f64,
    pub horizon: f64,
}

/// Δβ per recorded interval and the running quadratic variation. Needs
/// recorded Brownian increments.
fn trace_series(path: &Path, h: &HForm) -> Result<(Vec<f64>, Vec<f64>)> {
    let noise = path.noise.as_ref().ok_or_else(|| {
        Error::InvalidArgument(
            "trace_brownian needs recorded increments; simulate with record_noise".into(),
        )
    })?;
    let n = path.len();
    let mut beta = Vec::with_capacity(n);
    let mut qv = Vec::with_capacity(n);
    beta.push(0.0);
    qv.push(0.0);
    for i in 1..n {
        let hmat = h.eval(&path.states[i - 1])?;
        let denom2 = psd::trace_prod(hmat.as_matrix(), hmat.as_matrix());
        let db = &noise[i];
        // Degenerate direction: fall back to the fixed unit direction e₁₁,
        // which keeps Δβ an exact Brownian increment.
        let dbeta = if denom2 < 1e-14 {
            db[(0, 0)]
        } else {
            psd::trace_prod(hmat.as_matrix(), db) / denom2.sqrt()
        };
        beta.push(beta[i - 1] + dbeta);
        qv.push(qv[i - 1] + dbeta * dbeta);
    }
    Ok((beta, qv))
}

/// Reduce an ensemble through `Tr(h(X_{u−})·dB)/‖h‖_F`. Paths that hit the
/// boundary are skipped (their grids are truncated).
pub fn trace_brownian(paths: &[Path], h: &HForm) -> Result<TraceReduction> {
    let usable: Vec<&Path> = paths.iter().filter(|p| !p.hit_boundary()).collect();
    if usable.is_empty() {
        return Err(Error::InsufficientSample { need: 1, got: 0 });
    }
    let mut qv_terminal = Vec::with_capacity(usable.len());
    let mut first: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    for path in &usable {
        let (beta, qv) = trace_series(path, h)?;
        qv_terminal.push(*qv.last().unwrap());
        if first.is_none() {
            first = Some((path.times.clone(), beta, qv));
        }
    }
    let (times, beta, qv) = first.unwrap();
    let (qv_mean, qv_se) = mean_se(&qv_terminal);
    let horizon = *times.last().unwrap();
    Ok(TraceReduction {
        h_name: h.name(),
        times,
        beta,
        qv,
        qv_terminal,
        qv_mean,
        qv_se,
        horizon,
    })
}

fn flatten_row_major(m: &GeneralMatrix) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn cov_from_samples(
    samples: &[Vec<f64>],
    d: usize,
    dt: f64,
) -> (CovariationTensor, CovariationTensor) {
    let n = samples.len();
    let dd = d * d;
    let mut means = vec![0.0; dd];
    for s in samples {
        for (a, v) in s.iter().enumerate() {
            means[a] += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut est = CovariationTensor::zeros(d);
    let mut se = CovariationTensor::zeros(d);
    for a in 0..dd {
        for b in 0..dd {
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for s in samples {
                let p = (s[a] - means[a]) * (s[b] - means[b]) / dt;
                sum += p;
                sum2 += p * p;
            }
            let mean = sum / n as f64;
            let var = (sum2 / n as f64 - mean * mean).max(0.0);
            let (i, j, k, l) = (a / d, a % d, b / d, b % d);
            est.set(i, j, k, l, sum / (n - 1) as f64);
            se.set(i, j, k, l, (var / n as f64).sqrt());
        }
    }
    (est, se)
}

/// Empirical covariation tensor from the first increments of one-step
/// paths: entrywise covariance scaled by `1/dt`, with per-entry standard
/// errors.
pub fn covariation_empirical(
    paths: &[Path],
) -> Result<(CovariationTensor, CovariationTensor)> {
    if paths.len() < 10_000 {
        return Err(Error::InsufficientSample { need: 10_000, got: paths.len() });
    }
    let d = paths[0].states[0].dim();
    let dt = paths[0].times.get(1).map(|t| t - paths[0].times[0]).unwrap_or(0.0);
    if dt <= 0.0 {
        return Err(Error::InvalidArgument("paths must hold at least one step".into()));
    }
    let mut samples = Vec::with_capacity(paths.len());
    for p in paths {
        if p.len() < 2 {
            return Err(Error::InvalidArgument("paths must hold at least one step".into()));
        }
        if (p.times[1] - p.times[0] - dt).abs() > 1e-12 * (1.0 + dt) {
            return Err(Error::GridMismatch);
        }
        let inc = p.states[1].as_matrix() - p.states[0].as_matrix();
        samples.push(flatten_row_major(&inc));
    }
    Ok(cov_from_samples(&samples, d, dt))
}

/// Generate `n` one-step Gaussian increments with coefficients frozen at
/// `(0, x0)` and estimate the covariation tensor. Streaming equivalent of
/// [`covariation_empirical`] without path materialization.
pub fn covariation_experiment(
    model: &ModelSpec,
    x0: &SymMatrix,
    dt: f64,
    n: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<(CovariationTensor, CovariationTensor)> {
    if n < 10_000 {
        return Err(Error::InsufficientSample { need: 10_000, got: n });
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidArgument(format!("dt: {dt}")));
    }
    let d = model.dim();
    let cs = model::coefficients(model, 0.0, x0)?;
    let stream = NoiseStream::new(derive_key(seed, 1));
    let h_dt = cs.h.as_matrix() * dt;
    let samples: Vec<Vec<f64>> = exec::map_indexed(n, mode, |i| {
        let db = NoiseIncrement::sample(&stream, (i * d * d) as u64, d, dt);
        let term = &cs.f_left * &db.db * &cs.g_right;
        let inc = &term + term.transpose() + &h_dt;
        flatten_row_major(&inc)
    });
    Ok(cov_from_samples(&samples, d, dt))
}

/// Joint streaming verification: simulate `n_paths`, decompose each,
/// accumulate martingale statistics at `checkpoints` plus terminal
/// trace-Brownian quadratic variations for each `h`, then drop the path.
/// Boundary-stopped paths contribute their decomposition frozen at the stop
/// time (optional stopping, so the mean-zero test stays unbiased); the trace
/// reductions compare terminal qv against the horizon and therefore use
/// full-horizon paths only.
pub struct EnsembleVerification {
    pub martingale: MartingaleReport,
    pub trace: Vec<TraceReduction>,
}

pub fn verify_ensemble(
    model: &ModelSpec,
    x0: &SymMatrix,
    cfg: &SimConfig,
    n_paths: usize,
    checkpoints: &[f64],
    h_forms: &[HForm],
    mode: ExecMode,
) -> Result<EnsembleVerification> {
    verify_ensemble_with(model, model, x0, cfg, n_paths, checkpoints, h_forms, mode)
}

/// Like [`verify_ensemble`] but decomposes against `decomp_model` while
/// simulating under `sim_model`. With distinct models the predicted drift
/// and covariation no longer match the paths, so the checks should fail;
/// this is the negative control that keeps the verifier honest.
#[allow(clippy::too_many_arguments)]
pub fn verify_ensemble_with(
    sim_model: &ModelSpec,
    decomp_model: &ModelSpec,
    x0: &SymMatrix,
    cfg: &SimConfig,
    n_paths: usize,
    checkpoints: &[f64],
    h_forms: &[HForm],
    mode: ExecMode,
) -> Result<EnsembleVerification> {
    cfg.validate()?;
    if cfg.record_stride != 1 {
        return Err(Error::InvalidArgument(
            "verification needs record_stride = 1".into(),
        ));
    }
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("no checkpoints".into()));
    }
    let mut eff = cfg.clone();
    eff.record_noise = cfg.record_noise || !h_forms.is_empty();

    struct PStat {
        rec_m: Vec<f64>,
        rec_qvr: Vec<f64>,
        rec_qvp: Vec<f64>,
        rec_env: Vec<f64>,
        violations: usize,
        stopped: bool,
        trace_qv: Vec<f64>,
    }

    let per_path: Vec<Result<PStat>> = exec::map_indexed(n_paths, mode, |i| {
        let mut c = eff.clone();
        c.seed = derive_key(eff.seed, i as u64);
        let path = sim::simulate_path(sim_model, x0, &c)?;
        let stopped = path.hit_boundary();
        let rec = logdet_decomposition(&path, decomp_model)?;
        // A stopped path is read at min(checkpoint, stop time): M frozen at
        // the stop stays mean-zero by optional stopping, while dropping the
        // path would bias the surviving ensemble.
        let last = rec.times.len() - 1;
        let terminal = rec.times[last];
        let idx: Vec<usize> = checkpoints
            .iter()
            .map(|&cp| {
                if stopped && cp > terminal + 1e-9 * (1.0 + cp.abs()) {
                    Ok(last)
                } else {
                    grid_index(&rec.times, cp)
                }
            })
            .collect::<Result<_>>()?;
        let qv_run = realized_qv(&rec.m);
        let violations = floor_violations(&rec, default_floor_tol(&rec));
        let mut trace_qv = Vec::new();
        if !stopped {
            trace_qv.reserve(h_forms.len());
            for h in h_forms {
                let (_, qv) = trace_series(&path, h)?;
                trace_qv.push(*qv.last().unwrap());
            }
        }
        Ok(PStat {
            rec_m: idx.iter().map(|&k| rec.m[k]).collect(),
            rec_qvr: idx.iter().map(|&k| qv_run[k]).collect(),
            rec_qvp: idx.iter().map(|&k| rec.qv_predicted[k]).collect(),
            rec_env: idx.iter().map(|&k| rec.quad_envelope[k]).collect(),
            violations,
            stopped,
            trace_qv,
        })
    });

    let k = checkpoints.len();
    let mut stats = CheckpointStats::new(k);
    let mut violations = 0usize;
    let mut trace_terminals: Vec<Vec<f64>> = vec![Vec::new(); h_forms.len()];
    let mut first_full: Option<usize> = None;
    let mut n_stopped = 0usize;
    for (i, res) in per_path.into_iter().enumerate() {
        let ps = res?;
        for j in 0..k {
            stats.m[j].push(ps.rec_m[j]);
            stats.qvr[j].push(ps.rec_qvr[j]);
            stats.qvp[j].push(ps.rec_qvp[j]);
            stats.env[j].push(ps.rec_env[j]);
        }
        violations += ps.violations;
        if ps.stopped {
            n_stopped += 1;
        } else {
            for (h, qv) in ps.trace_qv.into_iter().enumerate() {
                trace_terminals[h].push(qv);
            }
            first_full.get_or_insert(i);
        }
    }
    let n_used = stats.m[0].len();
    if n_used < 100 {
        return Err(Error::InsufficientSample { need: 100, got: n_used });
    }
    let martingale = stats.report(checkpoints, violations, n_stopped);

    let mut trace = Vec::with_capacity(h_forms.len());
    if !h_forms.is_empty() {
        let first = first_full.ok_or_else(|| {
            Error::InvalidArgument(
                "every path stopped before the horizon; the trace reduction needs \
                 full-horizon paths"
                    .into(),
            )
        })?;
        // Replay the first full path for the representative series.
        let mut c = eff.clone();
        c.seed = derive_key(eff.seed, first as u64);
        let path = sim::simulate_path(sim_model, x0, &c)?;
        for (hi, h) in h_forms.iter().enumerate() {
            let (beta, qv) = trace_series(&path, h)?;
            let (qv_mean, qv_se) = mean_se(&trace_terminals[hi]);
            trace.push(TraceReduction {
                h_name: h.name(),
                times: path.times.clone(),
                beta,
                qv,
                qv_terminal: trace_terminals[hi].clone(),
                qv_mean,
                qv_se,
                horizon: path.terminal_time(),
            });
        }
    }
    Ok(EnsembleVerification { martingale, trace })
}

/// `k` equally spaced checkpoints ending at the horizon.
pub fn default_checkpoints(horizon: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|i| horizon * i as f64 / k as f64).collect()
}

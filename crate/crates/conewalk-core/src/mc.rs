//! Ensemble experiments: boundary-hitting frequencies across parameter
//! regimes. "Hit" means the stop policy fired at threshold `boundary_eps`
//! before the horizon; comparisons across regimes use orderings and
//! refinement trends, never absolute probabilities.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::{FamilySpec, ModelSpec};
use crate::psd::SymMatrix;
use crate::rng::derive_key;
use crate::sim::{self, BoundaryPolicy, SimConfig};

/// One path's contribution to the ensemble statistics. `error` is set when
/// the simulation itself failed; such paths are excluded from hit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub path_index: usize,
    pub seed: u64,
    pub hit: bool,
    pub first_proximity_time: Option<f64>,
    pub min_lambda: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    /// Human-readable echo of the model.
    pub model: String,
    pub n_paths: usize,
    pub n_errors: usize,
    /// Hits / (paths − errors).
    pub hit_fraction: f64,
    /// {5%, 50%, 95%} of per-path min over t of λ_min(X_t), type-7.
    pub min_lambda_quantiles: [f64; 3],
    /// Mean boundary-event time among hitters.
    pub mean_first_proximity_time: Option<f64>,
    pub master_seed: u64,
    pub runtime_seconds: f64,
}

fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Run `n_paths` independently seeded paths under the stop policy and
/// aggregate. Deterministic given `cfg.seed`; per-path seeds are
/// `derive_key(cfg.seed, index)`, so arms sharing a master seed share
/// Brownian streams (coupling for cross-regime comparisons).
pub fn boundary_stats(
    model: &ModelSpec,
    x0: &SymMatrix,
    cfg: &SimConfig,
    n_paths: usize,
    mode: ExecMode,
) -> Result<EnsembleResult> {
    boundary_stats_detailed(model, x0, cfg, n_paths, mode).map(|(r, _)| r)
}

/// As [`boundary_stats`], also returning the per-path rows (for CSV dumps).
pub fn boundary_stats_detailed(
    model: &ModelSpec,
    x0: &SymMatrix,
    cfg: &SimConfig,
    n_paths: usize,
    mode: ExecMode,
) -> Result<(EnsembleResult, Vec<PathSummary>)> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
    }
    cfg.validate()?;
    let started = Instant::now();
    let mut eff = cfg.clone();
    eff.policy = BoundaryPolicy::Stop;
    // Hit statistics need no dense trajectory; record endpoints only.
    eff.record_stride = usize::MAX;
    eff.record_noise = false;

    let summaries: Vec<PathSummary> = exec::map_indexed(n_paths, mode, |i| {
        let mut per_path = eff.clone();
        per_path.seed = derive_key(eff.seed, i as u64);
        match sim::simulate_path(model, x0, &per_path) {
            Ok(path) => PathSummary {
                path_index: i,
                seed: per_path.seed,
                hit: path.hit_boundary(),
                first_proximity_time: path.boundary_event.as_ref().map(|ev| ev.time),
                min_lambda: path.min_lambda_overall,
                error: None,
            },
            Err(e) => PathSummary {
                path_index: i,
                seed: per_path.seed,
                hit: false,
                first_proximity_time: None,
                min_lambda: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    });

    // Fixed-order reduction: iterate in path order.
    let mut hits = 0usize;
    let mut n_errors = 0usize;
    let mut lambdas = Vec::with_capacity(n_paths);
    let mut hit_times = Vec::new();
    for s in &summaries {
        if s.error.is_some() {
            n_errors += 1;
            continue;
        }
        if s.hit {
            hits += 1;
            hit_times.push(s.first_proximity_time.expect("hit paths carry an event time"));
        }
        lambdas.push(s.min_lambda);
    }
    let n_ok = n_paths - n_errors;
    if n_ok == 0 {
        return Err(Error::InsufficientSample { need: 1, got: 0 });
    }
    lambdas.sort_by(f64::total_cmp);
    let quantiles = [
        quantile_type7(&lambdas, 0.05),
        quantile_type7(&lambdas, 0.50),
        quantile_type7(&lambdas, 0.95),
    ];
    let mean_fpt = if hit_times.is_empty() {
        None
    } else {
        Some(hit_times.iter().sum::<f64>() / hit_times.len() as f64)
    };
    let result = EnsembleResult {
        model: model.to_string(),
        n_paths,
        n_errors,
        hit_fraction: hits as f64 / n_ok as f64,
        min_lambda_quantiles: quantiles,
        mean_first_proximity_time: mean_fpt,
        master_seed: cfg.seed,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((result, summaries))
}

/// One sweep cell; `error` holds the message when the cell failed but the
/// sweep continued.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub axis_value: f64,
    pub result: Option<EnsembleResult>,
    pub error: Option<String>,
}

/// Sweep the Wishart drift strength: for each axis value δ, rebuild the
/// model with `b = δ·QᵀQ` (keeping β, Γ, jumps, and K) and run
/// [`boundary_stats`]. Cells share the master seed, so arms are coupled.
/// Output preserves the axis order; per-cell failures are recorded and the
/// sweep continues.
pub fn regime_sweep(
    model: &ModelSpec,
    axis: &[f64],
    x0: &SymMatrix,
    cfg: &SimConfig,
    n_paths: usize,
    mode: ExecMode,
) -> Result<Vec<SweepCell>> {
    let p = match model.family() {
        FamilySpec::Wishart(p) => p,
        other => {
            return Err(Error::WrongFamily { expected: "wishart", got: other.name() })
        }
    };
    let qtq = SymMatrix::new(p.q.transpose() * &p.q)?;
    let mut cells = Vec::with_capacity(axis.len());
    for &delta in axis {
        let run = || -> Result<EnsembleResult> {
            let rebuilt = ModelSpec::wishart(
                model.dim(),
                p.q.clone(),
                p.beta.clone(),
                qtq.scale(delta),
                p.gamma.clone(),
            )?
            .with_jump(model.jump().clone(), model.k_op().clone())?;
            boundary_stats(&rebuilt, x0, cfg, n_paths, mode)
        };
        match run() {
            Ok(result) => cells.push(SweepCell {
                axis_value: delta,
                result: Some(result),
                error: None,
            }),
            Err(e) => cells.push(SweepCell {
                axis_value: delta,
                result: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::{JumpSpec, KSpec, MarkLaw};
    use crate::model::GammaSpec;
    use crate::psd::GeneralMatrix;
    use approx::assert_relative_eq;

    fn uni_wishart(b: f64) -> ModelSpec {
        ModelSpec::wishart(
            1,
            GeneralMatrix::identity(1, 1),
            GeneralMatrix::zeros(1, 1),
            SymMatrix::from_diagonal(&[b]),
            GammaSpec::Zero,
        )
        .unwrap()
    }

    fn arm_cfg(seed: u64) -> SimConfig {
        SimConfig::new(1e-3, 1.0, 1e-6, seed)
    }

    #[test]
    fn quantile_type7_frozen() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_relative_eq!(quantile_type7(&xs, 0.05), 1.2);
        assert_relative_eq!(quantile_type7(&xs, 0.50), 3.0);
        assert_relative_eq!(quantile_type7(&xs, 0.95), 4.8);
        assert_relative_eq!(quantile_type7(&[7.0], 0.5), 7.0);
    }

    #[test]
    fn regime_ordering_and_determinism() {
        let x0 = SymMatrix::from_diagonal(&[0.25]);
        let cfg = arm_cfg(42);
        let low = boundary_stats(&uni_wishart(0.5), &x0, &cfg, 200, ExecMode::default()).unwrap();
        let high = boundary_stats(&uni_wishart(3.0), &x0, &cfg, 200, ExecMode::default()).unwrap();

        assert!(low.hit_fraction >= 0.0 && low.hit_fraction <= 1.0);
        assert!(
            low.hit_fraction - high.hit_fraction >= 0.3,
            "low {} vs high {}",
            low.hit_fraction,
            high.hit_fraction
        );
        let q = &low.min_lambda_quantiles;
        assert!(q[0] <= q[1] && q[1] <= q[2]);
        let fpt = low.mean_first_proximity_time.expect("low arm must hit");
        assert!(fpt > 0.0 && fpt <= 1.0);
        assert_eq!(low.n_errors, 0);

        // Bitwise determinism of the statistics across reruns and modes.
        let again =
            boundary_stats(&uni_wishart(0.5), &x0, &cfg, 200, ExecMode::Sequential).unwrap();
        assert_eq!(low.hit_fraction, again.hit_fraction);
        assert_eq!(low.min_lambda_quantiles, again.min_lambda_quantiles);
        assert_eq!(low.mean_first_proximity_time, again.mean_first_proximity_time);
        assert_eq!(low.master_seed, again.master_seed);
    }

    #[test]
    fn sweep_matches_single_runs_and_handles_empty() {
        let x0 = SymMatrix::from_diagonal(&[0.25]);
        let cfg = arm_cfg(7);
        let cells = regime_sweep(
            &uni_wishart(1.0),
            &[0.5],
            &x0,
            &cfg,
            150,
            ExecMode::default(),
        )
        .unwrap();
        assert_eq!(cells.len(), 1);
        let cell = cells[0].result.as_ref().unwrap();
        let direct = boundary_stats(&uni_wishart(0.5), &x0, &cfg, 150, ExecMode::default()).unwrap();
        assert_eq!(cell.hit_fraction, direct.hit_fraction);
        assert_eq!(cell.min_lambda_quantiles, direct.min_lambda_quantiles);

        let empty = regime_sweep(&uni_wishart(1.0), &[], &x0, &cfg, 10, ExecMode::default())
            .unwrap();
        assert!(empty.is_empty());

        let gcir = ModelSpec::gcir(
            1,
            0.75,
            GeneralMatrix::identity(1, 1),
            GeneralMatrix::zeros(1, 1),
            SymMatrix::from_diagonal(&[1.0]),
            GammaSpec::Zero,
        )
        .unwrap();
        assert!(matches!(
            regime_sweep(&gcir, &[1.0], &x0, &cfg, 10, ExecMode::default()),
            Err(Error::WrongFamily { .. })
        ));
    }

    #[test]
    fn sweep_records_cell_failure_and_continues() {
        let x0 = SymMatrix::from_diagonal(&[1.0]);
        let mut cfg = arm_cfg(3);
        cfg.dt = 1e-2;
        // δ = f64::MAX drives the drift to overflow mid-path; every path in
        // that cell errors out, the cell reports it, the sweep proceeds.
        let cells = regime_sweep(
            &uni_wishart(1.0),
            &[3.0, f64::MAX],
            &x0,
            &cfg,
            20,
            ExecMode::default(),
        )
        .unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells[0].result.is_some());
        assert!(cells[0].error.is_none());
        assert!(cells[1].result.is_none());
        assert!(cells[1].error.is_some(), "cell: {:?}", cells[1]);
    }

    #[test]
    fn per_path_rows_align_with_aggregate() {
        let x0 = SymMatrix::from_diagonal(&[0.25]);
        let cfg = arm_cfg(11);
        let (result, rows) =
            boundary_stats_detailed(&uni_wishart(0.5), &x0, &cfg, 120, ExecMode::default())
                .unwrap();
        assert_eq!(rows.len(), 120);
        let hits = rows.iter().filter(|r| r.hit).count();
        assert_relative_eq!(result.hit_fraction, hits as f64 / 120.0);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.path_index, i);
            assert_eq!(row.seed, derive_key(11, i as u64));
            assert_eq!(row.hit, row.first_proximity_time.is_some());
            assert!(row.error.is_none());
        }
    }

    #[test]
    fn jumps_do_not_increase_hits() {
        let x0 = SymMatrix::from_diagonal(&[0.25]);
        let cfg = arm_cfg(17);
        let plain = uni_wishart(1.0);
        let jumpy = uni_wishart(1.0)
            .with_jump(
                JumpSpec::CompoundPoisson {
                    rate: 1.0,
                    mark_law: MarkLaw::ConstantMark(SymMatrix::from_diagonal(&[0.5])),
                },
                KSpec::Identity,
            )
            .unwrap();
        let base = boundary_stats(&plain, &x0, &cfg, 150, ExecMode::default()).unwrap();
        let with_jumps = boundary_stats(&jumpy, &x0, &cfg, 150, ExecMode::default()).unwrap();
        // PSD marks push away from the boundary.
        assert!(
            with_jumps.hit_fraction <= base.hit_fraction + 0.1,
            "jump arm {} vs base {}",
            with_jumps.hit_fraction,
            base.hit_fraction
        );
    }
}

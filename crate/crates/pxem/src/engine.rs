//! Generic fixed-point iteration driver.
//!
//! A model plugs in through [`EmModel`]; the engine runs one of three
//! schedules against it:
//!
//! * EM: `θ ← m_step(e_step(θ))`
//! * PX-EM: `θ ← reduce(px_m_step(e_step(θ)))`, with the E step evaluated at
//!   `(θ, α₀)` — the expansion parameter is re-anchored at its null value on
//!   every iteration;
//! * ECM: the M step over the original parameter, then a conditional update
//!   of the expansion parameter with the original estimate held fixed,
//!   followed by the reduction.
//!
//! Every iteration is recorded in a [`FitTrace`] together with the
//! observed-data log-likelihood, which is monotone nondecreasing for EM,
//! PX-EM and ECM by construction of the schedules.

use std::io::Write;

use crate::error::{Error, Result};

/// Capability set a complete-data model exposes to the engine.
///
/// Implementations must be reentrant and free of hidden mutable state:
/// a single fit is strictly sequential, but independent fits may run
/// concurrently against the same model value.
pub trait EmModel {
    /// Point in the original parameter space Θ.
    type Param: Clone;
    /// Point in the expanded space Θ × A.
    type Expanded;
    /// Imputed complete-data sufficient statistics from an E step.
    type Stats;

    /// Rejects parameters that are outside the model's domain.
    fn validate(&self, theta: &Self::Param) -> Result<()>;

    /// Flattens a parameter into trace coordinates.
    fn coords(&self, theta: &Self::Param) -> Vec<f64>;

    /// Observed-data log-likelihood.
    fn loglik(&self, theta: &Self::Param) -> Result<f64>;

    /// Imputes the complete-data sufficient statistics given θ (and, for the
    /// PX schedules, the null value of the expansion parameter).
    fn e_step(&self, theta: &Self::Param) -> Result<Self::Stats>;

    /// Maximizer of the expected complete-data log-likelihood over Θ.
    fn m_step(&self, stats: &Self::Stats) -> Result<Self::Param>;

    /// Joint maximizer over the expanded space Θ × A.
    fn px_m_step(&self, stats: &Self::Stats) -> Result<Self::Expanded>;

    /// Conditional update of the expansion parameter with θ* held fixed.
    fn cm_alpha_step(&self, stats: &Self::Stats, theta_star: &Self::Param)
        -> Result<Self::Expanded>;

    /// Reduction function R: Θ × A → Θ.
    fn reduce(&self, expanded: &Self::Expanded) -> Self::Param;

    /// Embeds θ at the null value α₀ of the expansion parameter, so that
    /// `reduce(expand_null(θ)) == θ` for every θ (the null-value axiom).
    fn expand_null(&self, theta: &Self::Param) -> Self::Expanded;
}

/// Iteration schedule selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Em,
    Ecm,
    PxEm,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Em => "em",
            Schedule::Ecm => "ecm",
            Schedule::PxEm => "pxem",
        }
    }
}

/// Why a fit stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Both the log-likelihood change and the max-norm parameter change fell
    /// below their tolerances.
    Tolerance,
    /// The iteration budget ran out first.
    MaxIter,
    /// A non-finite log-likelihood or parameter appeared mid-run.
    Divergence,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIter => "max_iter",
            StopReason::Divergence => "divergence",
        }
    }
}

/// Stopping rule: the fit converges when the absolute log-likelihood change
/// AND the max-norm parameter change both drop below tolerance. Requiring
/// both guards against stalling on flat ridges of the likelihood.
#[derive(Clone, Copy, Debug)]
pub struct StopRule {
    pub loglik_tol: f64,
    pub param_tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            loglik_tol: 1e-10,
            param_tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

impl StopRule {
    pub fn new(loglik_tol: f64, param_tol: f64, max_iter: usize) -> Result<Self> {
        if !(loglik_tol > 0.0) || !(param_tol > 0.0) {
            return Err(Error::InvalidParam(format!(
                "stop tolerances must be positive, got loglik_tol = {loglik_tol}, param_tol = {param_tol}"
            )));
        }
        if max_iter < 1 {
            return Err(Error::InvalidParam("max_iter must be at least 1".into()));
        }
        Ok(StopRule {
            loglik_tol,
            param_tol,
            max_iter,
        })
    }

    /// Much tighter rule for runs whose final value serves as the ℓ^(∞)
    /// proxy in rate diagnostics.
    pub fn tight() -> Self {
        StopRule {
            loglik_tol: 1e-13,
            param_tol: 1e-13,
            max_iter: 30_000,
        }
    }
}

/// One recorded iteration: index, flattened parameters, log-likelihood.
#[derive(Clone, Debug)]
pub struct Iteration {
    pub t: usize,
    pub coords: Vec<f64>,
    pub loglik: f64,
}

/// Full record of a fit. `iterations[0]` is the starting point.
#[derive(Clone, Debug)]
pub struct FitTrace<P> {
    pub iterations: Vec<Iteration>,
    pub final_param: P,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl<P> FitTrace<P> {
    /// Number of update steps taken (excludes the starting point).
    pub fn steps(&self) -> usize {
        self.iterations.len() - 1
    }

    pub fn final_loglik(&self) -> f64 {
        self.iterations.last().expect("trace is never empty").loglik
    }

    pub fn logliks(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.loglik).collect()
    }

    /// Writes the trace as CSV: header `iter,loglik,theta_1..theta_p`, one
    /// row per iteration, floats at 17 significant digits so round-trips are
    /// lossless.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = self.iterations[0].coords.len();
        write!(w, "iter,loglik")?;
        for j in 1..=p {
            write!(w, ",theta_{j}")?;
        }
        writeln!(w)?;
        for it in &self.iterations {
            write!(w, "{},{}", it.t, fmt_g17(it.loglik))?;
            for c in &it.coords {
                write!(w, ",{}", fmt_g17(*c))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Formats a float with 17 significant digits (lossless for f64).
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|v| v.is_finite())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs the plain EM schedule.
pub fn run_em<M: EmModel>(model: &M, theta0: &M::Param, rule: StopRule) -> Result<FitTrace<M::Param>> {
    run_schedule(model, theta0, rule, Schedule::Em)
}

/// Runs the ECM schedule (M step, then the conditional α update, then the
/// reduction).
pub fn run_ecm<M: EmModel>(model: &M, theta0: &M::Param, rule: StopRule) -> Result<FitTrace<M::Param>> {
    run_schedule(model, theta0, rule, Schedule::Ecm)
}

/// Runs the PX-EM schedule. The E step is identical to EM's: it is evaluated
/// at `(θ^(t), α₀)`, never at the previous expanded estimate.
pub fn run_px_em<M: EmModel>(
    model: &M,
    theta0: &M::Param,
    rule: StopRule,
) -> Result<FitTrace<M::Param>> {
    run_schedule(model, theta0, rule, Schedule::PxEm)
}

/// Runs the requested schedule from `theta0` until the stop rule fires.
pub fn run_schedule<M: EmModel>(
    model: &M,
    theta0: &M::Param,
    rule: StopRule,
    schedule: Schedule,
) -> Result<FitTrace<M::Param>> {
    model.validate(theta0)?;

    let mut theta = theta0.clone();
    let mut coords = model.coords(&theta);
    let mut loglik = model.loglik(&theta)?;
    let mut iterations = vec![Iteration {
        t: 0,
        coords: coords.clone(),
        loglik,
    }];

    if !loglik.is_finite() || !all_finite(&coords) {
        return Ok(FitTrace {
            iterations,
            final_param: theta,
            converged: false,
            stop_reason: StopReason::Divergence,
        });
    }

    let mut stop_reason = StopReason::MaxIter;
    let mut converged = false;

    for t in 1..=rule.max_iter {
        let stats = model.e_step(&theta)?;
        let next = match schedule {
            Schedule::Em => model.m_step(&stats)?,
            Schedule::PxEm => model.reduce(&model.px_m_step(&stats)?),
            Schedule::Ecm => {
                let theta_star = model.m_step(&stats)?;
                model.reduce(&model.cm_alpha_step(&stats, &theta_star)?)
            }
        };
        let next_coords = model.coords(&next);
        let next_loglik = model.loglik(&next)?;
        iterations.push(Iteration {
            t,
            coords: next_coords.clone(),
            loglik: next_loglik,
        });

        if !next_loglik.is_finite() || !all_finite(&next_coords) {
            return Ok(FitTrace {
                iterations,
                final_param: next,
                converged: false,
                stop_reason: StopReason::Divergence,
            });
        }

        let ll_change = (next_loglik - loglik).abs();
        let param_change = max_abs_diff(&next_coords, &coords);
        theta = next;
        coords = next_coords;
        loglik = next_loglik;

        if ll_change < rule.loglik_tol && param_change < rule.param_tol {
            stop_reason = StopReason::Tolerance;
            converged = true;
            break;
        }
    }

    Ok(FitTrace {
        iterations,
        final_param: theta,
        converged,
        stop_reason,
    })
}

/// Denominators below this are treated as converged noise and the
/// corresponding rate entries are omitted.
pub const RATE_DENOM_FLOOR: f64 = 1e-14;

/// Per-step rate sequence of `values` against their final entry, aligned to
/// the step index: entry `t` is `|v[t+1] − v∞| / |v[t] − v∞]`, or `None`
/// when the denominator is below [`RATE_DENOM_FLOOR`].
pub fn rate_sequence(values: &[f64]) -> Vec<Option<f64>> {
    let limit = *values.last().expect("rate_sequence on empty slice");
    (0..values.len() - 1)
        .map(|t| {
            let den = (values[t] - limit).abs();
            if den < RATE_DENOM_FLOOR {
                None
            } else {
                Some((values[t + 1] - limit).abs() / den)
            }
        })
        .collect()
}

/// Log-likelihood convergence rates `|ℓ^(t+1) − ℓ^(∞)| / |ℓ^(t) − ℓ^(∞)|`,
/// with ℓ^(∞) taken as the final trace value. Entries whose denominator is
/// below 1e-14 are omitted. The final value is only a proxy for the limit:
/// diagnose traces produced with [`StopRule::tight`].
pub fn loglik_rates<P>(trace: &FitTrace<P>) -> Result<Vec<f64>> {
    require_len(trace)?;
    Ok(rate_sequence(&trace.logliks()).into_iter().flatten().collect())
}

/// Per-coordinate parameter convergence rates, one list per coordinate,
/// against the final trace value of that coordinate.
pub fn param_rates<P>(trace: &FitTrace<P>) -> Result<Vec<Vec<f64>>> {
    require_len(trace)?;
    let p = trace.iterations[0].coords.len();
    Ok((0..p)
        .map(|j| {
            let path: Vec<f64> = trace.iterations.iter().map(|it| it.coords[j]).collect();
            rate_sequence(&path).into_iter().flatten().collect()
        })
        .collect())
}

fn require_len<P>(trace: &FitTrace<P>) -> Result<()> {
    if trace.iterations.len() < 3 {
        return Err(Error::ShortTrace {
            len: trace.iterations.len(),
        });
    }
    Ok(())
}

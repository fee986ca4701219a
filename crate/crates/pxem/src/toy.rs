//! Poisson-Binomial mixed-effects toy model with a single observed count.
//!
//! Complete data: `Z ~ Poisson(λ)`, `X | Z ~ Binomial(Z, π)` with π known.
//! Marginally `X ~ Poisson(πλ)`, so the MLE is `λ̂ = X/π` in closed form —
//! which makes the model a sharp test bed for the iteration schedules: EM
//! contracts at exactly `1 − π` per step, while the parameter-expanded
//! variant (activating π as a free success probability α with null value π)
//! jumps to the MLE in a single step.

use std::io::Write;

use crate::engine::{fmt_g17, EmModel};
use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Known quantities: the observed count X and the binomial probability π.
#[derive(Clone, Copy, Debug)]
pub struct ToyConfig {
    x_obs: u64,
    pi: f64,
}

/// The Poisson rate λ > 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyParam {
    lambda: f64,
}

impl ToyParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(ToyParam { lambda })
    }

    pub fn lambda(self) -> f64 {
        self.lambda
    }
}

/// Point in the expanded space: rate λ* and activated success probability α,
/// with null value α₀ = π.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyExpandedParam {
    lambda_star: f64,
    alpha: f64,
}

impl ToyExpandedParam {
    pub fn new(lambda_star: f64, alpha: f64) -> Result<Self> {
        if !lambda_star.is_finite() || lambda_star <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "lambda_star must be positive and finite, got {lambda_star}"
            )));
        }
        if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
            return Err(Error::InvalidParam(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(ToyExpandedParam { lambda_star, alpha })
    }

    pub fn lambda_star(self) -> f64 {
        self.lambda_star
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

/// Imputed sufficient statistic Ẑ = E(Z | X, λ).
#[derive(Clone, Copy, Debug)]
pub struct ToyEStats {
    z_hat: f64,
}

impl ToyEStats {
    pub fn new(z_hat: f64) -> Result<Self> {
        if !z_hat.is_finite() || z_hat < 0.0 {
            return Err(Error::InvalidParam(format!(
                "z_hat must be nonnegative and finite, got {z_hat}"
            )));
        }
        Ok(ToyEStats { z_hat })
    }

    pub fn z_hat(self) -> f64 {
        self.z_hat
    }
}

/// One point of the expanded-likelihood surface grid.
#[derive(Clone, Copy, Debug)]
pub struct SurfacePoint {
    pub lambda_star: f64,
    pub alpha: f64,
    pub l_star: f64,
    pub q: f64,
}

const LAMBDA_FLOOR: f64 = 1e-300;

impl ToyConfig {
    pub fn new(x_obs: u64, pi: f64) -> Result<Self> {
        if !pi.is_finite() || pi <= 0.0 || pi >= 1.0 {
            return Err(Error::InvalidParam(format!("pi must lie in (0, 1), got {pi}")));
        }
        Ok(ToyConfig { x_obs, pi })
    }

    pub fn x_obs(&self) -> u64 {
        self.x_obs
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    /// E step: Ẑ = X + λ(1−π), the mean of `Z | X, λ ~ X + Poisson(λ(1−π))`.
    pub fn e_step(&self, p: &ToyParam) -> ToyEStats {
        ToyEStats {
            z_hat: self.x_obs as f64 + p.lambda * (1.0 - self.pi),
        }
    }

    /// E step under an expanded parameter: Ẑ = X + λ*(1−α).
    pub fn e_step_expanded(&self, xp: &ToyExpandedParam) -> ToyEStats {
        ToyEStats {
            z_hat: self.x_obs as f64 + xp.lambda_star * (1.0 - xp.alpha),
        }
    }

    /// M step: the complete-data MLE of λ is Z itself, so λ ← Ẑ.
    pub fn m_step(&self, s: &ToyEStats) -> ToyParam {
        if s.z_hat <= 0.0 {
            // λ lives on an open set; Ẑ = 0 pushes the MLE to the boundary.
            log::warn!("toy M step: z_hat = 0, flooring lambda at {LAMBDA_FLOOR}");
            return ToyParam { lambda: LAMBDA_FLOOR };
        }
        ToyParam { lambda: s.z_hat }
    }

    /// PX-M step: complete-data MLEs λ̂* = Ẑ and α̂ = X/Ẑ.
    pub fn px_m_step(&self, s: &ToyEStats) -> ToyExpandedParam {
        ToyExpandedParam {
            lambda_star: s.z_hat,
            alpha: self.alpha_hat(s),
        }
    }

    /// Conditional update of α with λ* held fixed. The maximizer X/Ẑ does
    /// not depend on λ*, which is why ECM reproduces the PX-M step here.
    pub fn cm_alpha_step(&self, s: &ToyEStats, lambda_star: &ToyParam) -> ToyExpandedParam {
        ToyExpandedParam {
            lambda_star: lambda_star.lambda,
            alpha: self.alpha_hat(s),
        }
    }

    fn alpha_hat(&self, s: &ToyEStats) -> f64 {
        let alpha = self.x_obs as f64 / s.z_hat;
        if alpha <= 0.0 {
            // X = 0 sends α̂ to the boundary of (0, 1).
            log::warn!("toy PX-M step: alpha hit 0, clamping to machine epsilon");
            f64::EPSILON
        } else {
            alpha
        }
    }

    /// Reduction function R(λ*, α) = (α/π) λ*.
    pub fn reduce(&self, xp: &ToyExpandedParam) -> ToyParam {
        let lambda = (xp.alpha / self.pi) * xp.lambda_star;
        if lambda <= 0.0 {
            log::warn!("toy reduction underflowed, flooring lambda at {LAMBDA_FLOOR}");
            return ToyParam { lambda: LAMBDA_FLOOR };
        }
        ToyParam { lambda }
    }

    /// Observed-data log-likelihood of `X ~ Poisson(πλ)`:
    /// X ln(πλ) − πλ − ln X!. Maximized at λ = X/π.
    pub fn loglik(&self, p: &ToyParam) -> f64 {
        let x = self.x_obs as f64;
        x * (self.pi * p.lambda).ln() - self.pi * p.lambda - ln_gamma(x + 1.0)
    }

    /// Expanded observed-data log-likelihood L*(λ*, α) = L(R(λ*, α));
    /// constant along each set {αλ* = c}.
    pub fn expanded_loglik(&self, xp: &ToyExpandedParam) -> f64 {
        self.loglik(&self.reduce(xp))
    }

    /// Expected expanded complete-data log-likelihood
    /// Q(λ*, α | λ^(t)) = Ẑ ln λ* − λ* + Ẑ ln(1−α) + X ln(α/(1−α)),
    /// with Ẑ imputed at (λ^(t), α₀) and parameter-free terms set to zero.
    pub fn q_fn(&self, p: &ToyParam, lambda_star: f64, alpha: f64) -> f64 {
        let z = self.e_step(p).z_hat;
        let x = self.x_obs as f64;
        z * lambda_star.ln() - lambda_star + z * (1.0 - alpha).ln() + x * (alpha / (1.0 - alpha)).ln()
    }

    /// Evaluates L* and Q over the cartesian product of the two grids, in
    /// lexicographic (λ*, α) row order.
    pub fn surface_grid(
        &self,
        p: &ToyParam,
        lambda_grid: &[f64],
        alpha_grid: &[f64],
    ) -> Result<Vec<SurfacePoint>> {
        if lambda_grid.is_empty() || alpha_grid.is_empty() {
            return Err(Error::Domain("surface grids must be nonempty".into()));
        }
        for &l in lambda_grid {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::Domain(format!("lambda_star grid value {l} not in (0, inf)")));
            }
        }
        for &a in alpha_grid {
            if !a.is_finite() || a <= 0.0 || a >= 1.0 {
                return Err(Error::Domain(format!("alpha grid value {a} not in (0, 1)")));
            }
        }
        let z = self.e_step(p).z_hat;
        let x = self.x_obs as f64;
        let mut out = Vec::with_capacity(lambda_grid.len() * alpha_grid.len());
        for &ls in lambda_grid {
            for &a in alpha_grid {
                let xp = ToyExpandedParam {
                    lambda_star: ls,
                    alpha: a,
                };
                let q = z * ls.ln() - ls + z * (1.0 - a).ln() + x * (a / (1.0 - a)).ln();
                out.push(SurfacePoint {
                    lambda_star: ls,
                    alpha: a,
                    l_star: self.expanded_loglik(&xp),
                    q,
                });
            }
        }
        Ok(out)
    }

    /// Efficient data augmentation: the point (λ̃*, α̃) on the subset
    /// Ω* = {αλ* = λ^(t)π} whose imputation model already satisfies the
    /// ancillary constraint Ẑ = X/π, so that the following EM step lands on
    /// the MLE. Requires X > 0 for an interior solution.
    pub fn efficient_da(&self, p: &ToyParam) -> Result<ToyExpandedParam> {
        if self.x_obs == 0 {
            return Err(Error::Domain(
                "efficient data augmentation needs x_obs > 0 (no interior solution)".into(),
            ));
        }
        let x = self.x_obs as f64;
        let lambda_tilde = x * (1.0 - self.pi) / self.pi + p.lambda * self.pi;
        let alpha_tilde = p.lambda * self.pi / lambda_tilde;
        let xp = ToyExpandedParam {
            lambda_star: lambda_tilde,
            alpha: alpha_tilde,
        };

        // Both defining equations must hold to 1e-12.
        let product = alpha_tilde * lambda_tilde;
        let target_product = p.lambda * self.pi;
        if (product - target_product).abs() > 1e-12 * target_product.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "efficient DA point left the constraint set: alpha*lambda_star = {product}, expected {target_product}"
            )));
        }
        let z = self.e_step_expanded(&xp).z_hat;
        let target_z = x / self.pi;
        if (z - target_z).abs() > 1e-12 * target_z.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "efficient DA imputation violates the ancillary constraint: z_hat = {z}, expected {target_z}"
            )));
        }
        Ok(xp)
    }
}

/// Default λ* grid for surface export: 60 log-spaced points on [1, 60].
pub fn default_lambda_grid() -> Vec<f64> {
    let n = 60;
    let ln_hi = 60.0f64.ln();
    (0..n)
        .map(|i| (i as f64 * ln_hi / (n - 1) as f64).exp())
        .collect()
}

/// Default α grid for surface export: 49 evenly spaced points on [0.02, 0.98].
pub fn default_alpha_grid() -> Vec<f64> {
    let n = 49;
    (0..n)
        .map(|i| 0.02 + i as f64 * (0.98 - 0.02) / (n - 1) as f64)
        .collect()
}

/// Writes a surface grid as CSV with `#` metadata lines recording the
/// configuration, then `lambda_star,alpha,L_star,Q` rows at 17 significant
/// digits.
pub fn write_surface_csv<W: Write>(
    cfg: &ToyConfig,
    lambda_t: &ToyParam,
    points: &[SurfacePoint],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "# x_obs={}", cfg.x_obs())?;
    writeln!(w, "# pi={}", cfg.pi())?;
    writeln!(w, "# lambda_t={}", lambda_t.lambda())?;
    writeln!(w, "lambda_star,alpha,L_star,Q")?;
    for pt in points {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_g17(pt.lambda_star),
            fmt_g17(pt.alpha),
            fmt_g17(pt.l_star),
            fmt_g17(pt.q)
        )?;
    }
    Ok(())
}

impl EmModel for ToyConfig {
    type Param = ToyParam;
    type Expanded = ToyExpandedParam;
    type Stats = ToyEStats;

    fn validate(&self, _theta: &ToyParam) -> Result<()> {
        Ok(())
    }

    fn coords(&self, theta: &ToyParam) -> Vec<f64> {
        vec![theta.lambda]
    }

    fn loglik(&self, theta: &ToyParam) -> Result<f64> {
        Ok(ToyConfig::loglik(self, theta))
    }

    fn e_step(&self, theta: &ToyParam) -> Result<ToyEStats> {
        Ok(ToyConfig::e_step(self, theta))
    }

    fn m_step(&self, stats: &ToyEStats) -> Result<ToyParam> {
        Ok(ToyConfig::m_step(self, stats))
    }

    fn px_m_step(&self, stats: &ToyEStats) -> Result<ToyExpandedParam> {
        Ok(ToyConfig::px_m_step(self, stats))
    }

    fn cm_alpha_step(&self, stats: &ToyEStats, theta_star: &ToyParam) -> Result<ToyExpandedParam> {
        Ok(ToyConfig::cm_alpha_step(self, stats, theta_star))
    }

    fn reduce(&self, expanded: &ToyExpandedParam) -> ToyParam {
        ToyConfig::reduce(self, expanded)
    }

    fn expand_null(&self, theta: &ToyParam) -> ToyExpandedParam {
        ToyExpandedParam {
            lambda_star: theta.lambda,
            alpha: self.pi,
        }
    }
}

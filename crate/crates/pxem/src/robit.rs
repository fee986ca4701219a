//! Robit regression: binary regression with a Student-t link,
//! P(y_i = 1 | x_i, β) = F_ν(x_i'β) with ν fixed and known.
//!
//! The complete-data model introduces a latent precision τ_i ~ Gamma(ν/2, ν/2)
//! and propensity z_i ~ N(x_i'β, 1/τ_i), with y_i = 1 exactly when z_i > 0.
//! The E step imputes the weighted cross products Σ τ̂ x x' and Σ τ̂ x ẑ and
//! the M step is a weighted least-squares solve.
//!
//! The parameter-expanded variant frees the scales of both latent variables:
//! (τ_i/α) ~ Gamma(ν/2, ν/2) and z_i ~ N(x_i'β*, σ²/τ_i). The expanded M step
//! additionally estimates (α, σ) from Σ τ̂ and the imputed Σ τ̂ ẑ², and the
//! reduction β = (α^{1/2}/σ) β* maps back to the original space. The two
//! deliberately wrong adjustment factors α/σ and α/σ² from early write-ups
//! are available as [`ReductionVariant`]s.

use nalgebra::{DMatrix, DVector};

use crate::engine::EmModel;
use crate::error::{Error, Result};
use crate::special::{ln_t_cdf, ln_t_pdf, Dof};

/// Linear predictors beyond this magnitude are capped before the tail
/// evaluations; the t CDF there is indistinguishable from its limit at
/// working precision.
const ETA_CAP: f64 = 300.0;

/// Condition-number guard for the weighted cross-product solve.
const COND_LIMIT: f64 = 1e12;

/// Observed data: design matrix (rows x_i', caller supplies any intercept
/// column), binary response, and the fixed degrees of freedom.
#[derive(Clone, Debug)]
pub struct RobitData {
    x: DMatrix<f64>,
    y: Vec<u8>,
    nu: Dof,
}

impl RobitData {
    /// Validates dimensions, the 0/1 response and full column rank.
    pub fn new(x: DMatrix<f64>, y: Vec<u8>, nu: Dof) -> Result<Self> {
        let (n, p) = x.shape();
        if p < 1 || n < p {
            return Err(Error::InvalidParam(format!(
                "need n >= p >= 1, got n = {n}, p = {p}"
            )));
        }
        if y.len() != n {
            return Err(Error::InvalidParam(format!(
                "response length {} does not match {} design rows",
                y.len(),
                n
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidParam(format!(
                "response entries must be 0 or 1, got {bad}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("design matrix has non-finite entries".into()));
        }
        let svd = x.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd.rank(smax * 1e-12);
        if rank < p {
            return Err(Error::RankDeficient { rank, cols: p });
        }
        Ok(RobitData { x, y, nu })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn nu(&self) -> Dof {
        self.nu
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn response(&self) -> &[u8] {
        &self.y
    }

    /// Observed-data log-likelihood Σ ln F_ν((2y_i−1) x_i'β), evaluated
    /// through the log CDF so mismatched tails do not underflow.
    pub fn loglik(&self, beta: &RobitParam) -> Result<f64> {
        self.check_dim(beta)?;
        let eta = &self.x * beta.beta();
        let mut total = 0.0;
        for (i, &yi) in self.y.iter().enumerate() {
            let e = capped_eta(eta[i])?;
            let s = if yi == 1 { 1.0 } else { -1.0 };
            total += ln_t_cdf(s * e, self.nu)?;
        }
        Ok(total)
    }

    /// E step: per-row conditional expectations
    ///
    /// τ̂_i = F_{ν+2}(s c η_i) / F_ν(s η_i),
    /// ẑ_i = η_i + s f_ν(η_i) / F_{ν+2}(s c η_i),
    ///
    /// with η_i = x_i'β, s = 2y_i − 1 and c = (1 + 2/ν)^{1/2}, aggregated
    /// into the four sufficient statistics in one pass over the rows
    /// (ascending index, so traces are deterministic).
    pub fn e_step(&self, beta: &RobitParam) -> Result<RobitEStats> {
        self.check_dim(beta)?;
        let (n, p) = self.x.shape();
        let v = self.nu.value();
        let nu2 = Dof::new(v + 2.0).expect("nu + 2 is valid");
        let c = (1.0 + 2.0 / v).sqrt();

        let eta_vec = &self.x * beta.beta();
        let mut tau_hat = Vec::with_capacity(n);
        let mut z_hat = Vec::with_capacity(n);
        let mut s_txx = DMatrix::zeros(p, p);
        let mut s_txz = DVector::zeros(p);
        let mut s_t = 0.0;
        let mut quad = 0.0;

        for i in 0..n {
            let eta = capped_eta(eta_vec[i])?;
            let s = if self.y[i] == 1 { 1.0 } else { -1.0 };
            let ln_num = ln_t_cdf(s * c * eta, nu2)?;
            let ln_den = ln_t_cdf(s * eta, self.nu)?;
            if ln_den == f64::NEG_INFINITY || ln_num == f64::NEG_INFINITY {
                return Err(Error::EStepRow {
                    row: i,
                    reason: format!("conditional probability underflowed to zero at eta = {eta}"),
                });
            }
            let tau = (ln_num - ln_den).exp();
            let z = eta + s * (ln_t_pdf(eta, self.nu)? - ln_num).exp();
            if !(tau > 0.0) || !tau.is_finite() || !z.is_finite() {
                return Err(Error::EStepRow {
                    row: i,
                    reason: format!("non-finite expectation: tau = {tau}, z = {z}"),
                });
            }

            let xi = self.x.row(i).transpose();
            s_txx.ger(tau, &xi, &xi, 1.0);
            s_txz.axpy(tau * z, &xi, 1.0);
            s_t += tau;
            quad += tau * eta * (2.0 * z - eta);
            tau_hat.push(tau);
            z_hat.push(z);
        }

        // Imputed Σ τ z²: n(ν+1) − ν Σ τ̂ + Σ τ̂ η (2ẑ − η).
        let s_tz2 = n as f64 * (v + 1.0) - v * s_t + quad;
        Ok(RobitEStats {
            s_txx,
            s_txz,
            s_t,
            s_tz2,
            tau_hat,
            z_hat,
        })
    }

    /// M step: β solves S_τxx' β = S_τxz by a symmetric positive-definite
    /// factorization (no explicit inverse).
    pub fn m_step(&self, stats: &RobitEStats) -> Result<RobitParam> {
        let beta = solve_spd(&stats.s_txx, &stats.s_txz)?;
        Ok(RobitParam { beta })
    }

    /// PX-M step: β̂* as in the M step, α̂ = Ŝ_τ/n and
    /// σ̂² = (Ŝ_τz² − Ŝ_τxz' β̂*)/n (the weighted residual variance).
    pub fn px_m_step(&self, stats: &RobitEStats) -> Result<RobitExpandedParam> {
        let beta_star = solve_spd(&stats.s_txx, &stats.s_txz)?;
        let n = self.n() as f64;
        let alpha = stats.s_t / n;
        let sigma2 = (stats.s_tz2 - stats.s_txz.dot(&beta_star)) / n;
        expanded(beta_star, alpha, sigma2)
    }

    /// Conditional maximization of (α, σ) with β* held fixed:
    /// α̂ = Ŝ_τ/n, σ̂² = (Ŝ_τz² − 2β*'Ŝ_τxz + β*'Ŝ_τxx'β*)/n.
    pub fn cm_alpha_step(
        &self,
        stats: &RobitEStats,
        beta_star: &RobitParam,
    ) -> Result<RobitExpandedParam> {
        self.check_dim(beta_star)?;
        let n = self.n() as f64;
        let b = beta_star.beta();
        let alpha = stats.s_t / n;
        let sigma2 =
            (stats.s_tz2 - 2.0 * b.dot(&stats.s_txz) + (&stats.s_txx * b).dot(b)) / n;
        expanded(b.clone(), alpha, sigma2)
    }

    fn check_dim(&self, beta: &RobitParam) -> Result<()> {
        if beta.beta().len() != self.p() {
            return Err(Error::InvalidParam(format!(
                "beta has {} coordinates, design has {} columns",
                beta.beta().len(),
                self.p()
            )));
        }
        Ok(())
    }
}

fn capped_eta(eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Domain(format!("linear predictor is not finite: {eta}")));
    }
    if eta.abs() > ETA_CAP {
        log::warn!("linear predictor {eta} capped at +/-{ETA_CAP}");
        Ok(eta.signum() * ETA_CAP)
    } else {
        Ok(eta)
    }
}

fn expanded(beta_star: DVector<f64>, alpha: f64, sigma2: f64) -> Result<RobitExpandedParam> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::DegenerateFit(format!(
            "nonpositive residual variance {sigma2}: the latent propensities are perfectly fit \
             (possible perfect separation)"
        )));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::DegenerateFit(format!("nonpositive precision scale {alpha}")));
    }
    Ok(RobitExpandedParam {
        beta_star,
        alpha,
        sigma: sigma2.sqrt(),
    })
}

/// Regression coefficients β.
#[derive(Clone, Debug, PartialEq)]
pub struct RobitParam {
    beta: DVector<f64>,
}

impl RobitParam {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParam("beta must have at least one coordinate".into()));
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("beta has non-finite entries".into()));
        }
        Ok(RobitParam {
            beta: DVector::from_vec(beta),
        })
    }

    pub fn zeros(p: usize) -> Self {
        RobitParam {
            beta: DVector::zeros(p),
        }
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn coords(&self) -> Vec<f64> {
        self.beta.iter().copied().collect()
    }
}

/// Expanded parameter (β*, α, σ) with null values α = σ = 1.
#[derive(Clone, Debug)]
pub struct RobitExpandedParam {
    beta_star: DVector<f64>,
    alpha: f64,
    sigma: f64,
}

impl RobitExpandedParam {
    pub fn new(beta_star: Vec<f64>, alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParam(format!(
                "alpha and sigma must be positive and finite, got alpha = {alpha}, sigma = {sigma}"
            )));
        }
        Ok(RobitExpandedParam {
            beta_star: DVector::from_vec(beta_star),
            alpha,
            sigma,
        })
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Reduction β = c·β* with the adjustment factor c chosen by `variant`.
    pub fn reduce(&self, variant: ReductionVariant) -> RobitParam {
        let c = match variant {
            ReductionVariant::Correct => self.alpha.sqrt() / self.sigma,
            ReductionVariant::AlphaOverSigma => self.alpha / self.sigma,
            ReductionVariant::AlphaOverSigmaSq => self.alpha / (self.sigma * self.sigma),
        };
        RobitParam {
            beta: &self.beta_star * c,
        }
    }
}

/// Adjustment factor used by the reduction: the correct α^{1/2}/σ, or one of
/// the two wrong factors discussed alongside it (a typo in early write-ups
/// that happens to converge even faster on the Finney example).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionVariant {
    Correct,
    AlphaOverSigma,
    AlphaOverSigmaSq,
}

impl ReductionVariant {
    pub fn name(self) -> &'static str {
        match self {
            ReductionVariant::Correct => "correct",
            ReductionVariant::AlphaOverSigma => "alpha-over-sigma",
            ReductionVariant::AlphaOverSigmaSq => "alpha-over-sigma-sq",
        }
    }
}

/// Imputed complete-data sufficient statistics.
#[derive(Clone, Debug)]
pub struct RobitEStats {
    s_txx: DMatrix<f64>,
    s_txz: DVector<f64>,
    s_t: f64,
    s_tz2: f64,
    tau_hat: Vec<f64>,
    z_hat: Vec<f64>,
}

impl RobitEStats {
    /// Aggregates the statistics from fully observed complete data. Here
    /// Σ τ z² is computed directly rather than through the E-step identity.
    pub fn from_complete_data(x: &DMatrix<f64>, tau: &[f64], z: &[f64]) -> Result<Self> {
        let (n, p) = x.shape();
        if tau.len() != n || z.len() != n {
            return Err(Error::InvalidParam(
                "tau and z must have one entry per design row".into(),
            ));
        }
        if tau.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParam("every tau must be positive and finite".into()));
        }
        let mut s_txx = DMatrix::zeros(p, p);
        let mut s_txz = DVector::zeros(p);
        let mut s_t = 0.0;
        let mut s_tz2 = 0.0;
        for i in 0..n {
            let xi = x.row(i).transpose();
            s_txx.ger(tau[i], &xi, &xi, 1.0);
            s_txz.axpy(tau[i] * z[i], &xi, 1.0);
            s_t += tau[i];
            s_tz2 += tau[i] * z[i] * z[i];
        }
        Ok(RobitEStats {
            s_txx,
            s_txz,
            s_t,
            s_tz2,
            tau_hat: tau.to_vec(),
            z_hat: z.to_vec(),
        })
    }

    pub fn s_txx(&self) -> &DMatrix<f64> {
        &self.s_txx
    }

    pub fn s_txz(&self) -> &DVector<f64> {
        &self.s_txz
    }

    pub fn s_t(&self) -> f64 {
        self.s_t
    }

    pub fn s_tz2(&self) -> f64 {
        self.s_tz2
    }

    pub fn tau_hat(&self) -> &[f64] {
        &self.tau_hat
    }

    pub fn z_hat(&self) -> &[f64] {
        &self.z_hat
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix, returning
/// the lower factor or the index of the pivot that broke down.
fn cholesky_lower(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let p = a.nrows();
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(j);
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in j + 1..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = l.nrows();
    let mut y = b.clone();
    for i in 0..p {
        for k in 0..i {
            let t = y[k];
            y[i] -= l[(i, k)] * t;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            let t = y[k];
            y[i] -= l[(k, i)] * t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Symmetric positive-definite solve with a condition-number guard and a
/// full-pivot LU fallback when the Cholesky pivots fail numerically.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let chol = cholesky_lower(a);
    if cond > COND_LIMIT {
        let pivot = match &chol {
            Err(k) => *k,
            Ok(l) => (0..l.nrows())
                .min_by(|&i, &j| l[(i, i)].partial_cmp(&l[(j, j)]).unwrap())
                .unwrap_or(0),
        };
        return Err(Error::SingularPivot { pivot, cond });
    }
    match chol {
        Ok(l) => Ok(cholesky_solve(&l, b)),
        Err(k) => a
            .clone()
            .full_piv_lu()
            .solve(b)
            .ok_or(Error::SingularPivot { pivot: k, cond }),
    }
}

/// A robit dataset paired with a reduction variant, ready for the engine.
#[derive(Clone, Copy, Debug)]
pub struct RobitModel<'a> {
    data: &'a RobitData,
    variant: ReductionVariant,
}

impl<'a> RobitModel<'a> {
    pub fn new(data: &'a RobitData, variant: ReductionVariant) -> Self {
        RobitModel { data, variant }
    }

    pub fn data(&self) -> &'a RobitData {
        self.data
    }

    pub fn variant(&self) -> ReductionVariant {
        self.variant
    }
}

impl EmModel for RobitModel<'_> {
    type Param = RobitParam;
    type Expanded = RobitExpandedParam;
    type Stats = RobitEStats;

    fn validate(&self, theta: &RobitParam) -> Result<()> {
        self.data.check_dim(theta)
    }

    fn coords(&self, theta: &RobitParam) -> Vec<f64> {
        theta.coords()
    }

    fn loglik(&self, theta: &RobitParam) -> Result<f64> {
        self.data.loglik(theta)
    }

    fn e_step(&self, theta: &RobitParam) -> Result<RobitEStats> {
        self.data.e_step(theta)
    }

    fn m_step(&self, stats: &RobitEStats) -> Result<RobitParam> {
        self.data.m_step(stats)
    }

    fn px_m_step(&self, stats: &RobitEStats) -> Result<RobitExpandedParam> {
        self.data.px_m_step(stats)
    }

    fn cm_alpha_step(&self, stats: &RobitEStats, theta_star: &RobitParam) -> Result<RobitExpandedParam> {
        self.data.cm_alpha_step(stats, theta_star)
    }

    fn reduce(&self, expanded: &RobitExpandedParam) -> RobitParam {
        expanded.reduce(self.variant)
    }

    fn expand_null(&self, theta: &RobitParam) -> RobitExpandedParam {
        RobitExpandedParam {
            beta_star: theta.beta.clone(),
            alpha: 1.0,
            sigma: 1.0,
        }
    }
}

//! Consensus splitting solver for the K-means SDP
//!
//! ```text
//! maximize ⟨A, Z⟩  subject to  Z ⪰ 0, tr Z = K, Z 1 = 1, Z ≥ 0, Z = Zᵀ
//! ```
//!
//! and its trace-penalized variant `⟨A - λI, Z⟩` without the trace constraint.
//!
//! The feasible set is split into three sets with closed-form projections:
//! `S1 = {Z = Zᵀ ⪰ 0, tr Z = K}` (eigenvalue simplex projection),
//! `S2 = {rows on the probability simplex}` and `S3 = {Z = Zᵀ}`. Each set owns a
//! copy of the variable; the copies are driven to consensus by scaled-form ADMM
//! with the linear objective folded into the `S1` proximal step.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::membership::{feasibility_residuals, FeasibilityResiduals};

/// `A = XᵀX` for a `p x n` data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(DMatrix<f64>);

impl AffinityMatrix {
    /// Wrap an existing matrix, symmetrizing it. Fails if it is not square.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        Ok(AffinityMatrix(linalg::symmetrize(&a)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

pub fn build_affinity(x: &DMatrix<f64>) -> Result<AffinityMatrix> {
    if x.ncols() < 2 {
        return Err(Error::InvalidInput(format!(
            "affinity needs n >= 2 points, got {}",
            x.ncols()
        )));
    }
    AffinityMatrix::from_matrix(x.transpose() * x)
}

/// Projection onto `{Z = Zᵀ ⪰ 0, tr Z = K}`.
///
/// The eigenvalues are projected onto `{λ ≥ 0, Σλ = K}` and the matrix is
/// reassembled from the eigenvectors that survive the threshold.
pub fn project_psd_trace(m: &DMatrix<f64>, k: f64) -> Result<DMatrix<f64>> {
    if !(k > 0.0) {
        return Err(Error::InvalidInput(format!("trace target must be positive, got {k}")));
    }
    let (values, vectors) = linalg::sym_eigen(&linalg::symmetrize(m))?;
    let tau = linalg::simplex_threshold(values.as_slice(), k);
    Ok(reassemble(&values, &vectors, |v| (v - tau).max(0.0)))
}

/// Projection onto the PSD cone (negative eigenvalues clipped).
pub fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = linalg::sym_eigen(&linalg::symmetrize(m))?;
    Ok(reassemble(&values, &vectors, |v| v.max(0.0)))
}

fn reassemble(
    values: &nalgebra::DVector<f64>,
    vectors: &DMatrix<f64>,
    map: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let n = values.len();
    let kept: Vec<(usize, f64)> = (0..n)
        .map(|i| (i, map(values[i])))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let mut scaled = DMatrix::zeros(n, kept.len());
    let mut basis = DMatrix::zeros(n, kept.len());
    for (c, &(i, w)) in kept.iter().enumerate() {
        basis.set_column(c, &vectors.column(i));
        scaled.set_column(c, &(vectors.column(i) * w));
    }
    let out = &scaled * basis.transpose();
    linalg::symmetrize(&out)
}

/// Row-wise projection onto the probability simplex `{z ≥ 0, Σz = 1}`.
pub fn project_rowsum_nonneg(m: &DMatrix<f64>) -> DMatrix<f64> {
    // rows of `m` are the contiguous columns of its transpose
    let mut t = m.transpose();
    let mut scratch = Vec::with_capacity(m.ncols());
    for mut col in t.column_iter_mut() {
        let slice = col.as_mut_slice();
        let tau = linalg::simplex_threshold_with(slice, 1.0, &mut scratch);
        for v in slice.iter_mut() {
            *v = (*v - tau).max(0.0);
        }
    }
    t.transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Bound on the cross-copy disagreement relative to `1 + ‖Z‖_F`.
    pub tol_primal: f64,
    /// Bound on the relative objective change over a 10-iteration window.
    pub tol_obj: f64,
    /// Initial penalty, relative to `‖A‖_F / √K`.
    pub rho: f64,
    /// Over-relaxation factor in `[1, 1.9]`.
    pub over_relaxation: f64,
    /// Rebalance `rho` from the primal / successive-change residual ratio.
    pub adaptive_rho: bool,
    /// Record a [`TraceRow`] every this many iterations.
    pub trace_every: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 20_000,
            tol_primal: 1e-6,
            tol_obj: 1e-9,
            rho: 1.0,
            over_relaxation: 1.6,
            adaptive_rho: true,
            trace_every: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if !(self.tol_primal > 0.0 && self.tol_obj > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidInput("rho must be positive".into()));
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return Err(Error::InvalidInput("over_relaxation must lie in [1, 1.9]".into()));
        }
        if self.trace_every == Some(0) {
            return Err(Error::InvalidInput("trace_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub min_eig: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub z_hat: DMatrix<f64>,
    /// `⟨A, Ẑ⟩` with the caller's `A` (no trace penalty).
    pub objective: f64,
    pub iters: usize,
    /// Recomputed from `z_hat`; `None` only on numerical failure.
    pub residuals: Option<FeasibilityResiduals>,
    pub status: SolveStatus,
    pub achieved_trace: f64,
    pub trace: Vec<TraceRow>,
    pub failure: Option<String>,
}

/// Starting point for the iteration.
///
/// Duals are in objective units (`duals[b] = ρ · U_b` for block `b`), so one warm
/// start is valid for any `rho`. An optimal triple for the trace problem is
/// `[½(1αᵀ + α1ᵀ) − B, B − α1ᵀ, ½(α1ᵀ − 1αᵀ)]` built from a dual certificate.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub z: DMatrix<f64>,
    pub duals: Option<[DMatrix<f64>; 3]>,
}

impl SolverResult {
    /// Regularized solve whose trace fell below the cluster count.
    pub fn is_over_penalized(&self, k: usize) -> bool {
        self.achieved_trace < k as f64 - 1e-4
    }
}

#[derive(Debug, Clone, Copy)]
enum Cone {
    Trace(f64),
    Psd,
}

pub fn solve_sdp(a: &AffinityMatrix, k: usize, cfg: &SolverConfig) -> Result<SolverResult> {
    solve_sdp_from(a, k, cfg, None)
}

pub fn solve_sdp_from(
    a: &AffinityMatrix,
    k: usize,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<SolverResult> {
    let n = a.n();
    if k < 1 || k > n {
        return Err(Error::InvalidInput(format!("need 1 <= K <= n, got K={k}, n={n}")));
    }
    consensus(a.matrix(), a.matrix(), Cone::Trace(k as f64), k as f64, cfg, warm)
}

/// Maximize `⟨A, Z⟩ − λ tr Z` over `{Z ⪰ 0, Z = Zᵀ, Z1 = 1, Z ≥ 0}`.
pub fn solve_regularized(
    a: &AffinityMatrix,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = a.n();
    let shifted = a.matrix() - DMatrix::<f64>::identity(n, n) * lambda;
    // ‖Z‖_F for a rank-K membership matrix is √K; without K, use √n/2 as a
    // neutral scale for the initial penalty.
    consensus(&shifted, a.matrix(), Cone::Psd, (n as f64 / 4.0).max(1.0), cfg, None)
}

fn project_cone(m: &DMatrix<f64>, cone: Cone) -> Result<DMatrix<f64>> {
    match cone {
        Cone::Trace(k) => project_psd_trace(m, k),
        Cone::Psd => project_psd(m),
    }
}

const WINDOW: usize = 10;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

fn consensus(
    objective: &DMatrix<f64>,
    report: &DMatrix<f64>,
    cone: Cone,
    scale_k: f64,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<SolverResult> {
    cfg.validate()?;
    let n = objective.nrows();
    if linalg::asymmetry(objective) > 1e-8 * (1.0 + objective.amax()) {
        return Err(Error::InvalidInput("objective matrix is not symmetric".into()));
    }
    let k_target = match cone {
        Cone::Trace(k) => k,
        Cone::Psd => 0.0,
    };

    let a_scale = objective.norm() / scale_k.sqrt();
    let mut rho = cfg.rho * if a_scale > 0.0 { a_scale } else { 1.0 };
    let relax = cfg.over_relaxation;

    let (mut zc, mut u) = match warm {
        Some(w) => {
            if w.z.shape() != (n, n) {
                return Err(Error::SizeMismatch("warm start shape".into()));
            }
            let u = match &w.duals {
                Some(d) => {
                    if d.iter().any(|m| m.shape() != (n, n)) {
                        return Err(Error::SizeMismatch("warm start dual shape".into()));
                    }
                    [&d[0] / rho, &d[1] / rho, &d[2] / rho]
                }
                None => [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)],
            };
            (w.z.clone(), u)
        }
        None => {
            let fill = if k_target > 0.0 { k_target / n as f64 } else { 1.0 / n as f64 };
            let start = DMatrix::from_element(n, n, 1.0 / n as f64)
                + DMatrix::<f64>::identity(n, n) * (fill - 1.0 / n as f64).max(0.0);
            (start, [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)])
        }
    };

    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iters.min(4096));
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIters;
    let mut failure = None;
    let mut iters = 0;
    let mut last_rebalance = 0;

    let mut v1 = DMatrix::zeros(n, n);
    let mut v2 = DMatrix::zeros(n, n);
    let mut v3 = DMatrix::zeros(n, n);
    let mut z_new = DMatrix::zeros(n, n);
    let mut relaxed = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];

    for it in 1..=cfg.max_iters {
        iters = it;
        v1.copy_from(&zc);
        v1 -= &u[0];
        v1.zip_apply(objective, |v, a| *v += a / rho);
        let x1 = match project_cone(&v1, cone) {
            Ok(m) => m,
            Err(e) => {
                status = SolveStatus::NumericalFailure;
                failure = Some(e.to_string());
                break;
            }
        };
        v2.copy_from(&zc);
        v2 -= &u[1];
        let x2 = project_rowsum_nonneg(&v2);
        v3.copy_from(&zc);
        v3 -= &u[2];
        let x3 = linalg::symmetrize(&v3);

        let xs = [x1, x2, x3];
        z_new.fill(0.0);
        for (b, x) in xs.iter().enumerate() {
            // relaxed copy: relax * x + (1 - relax) * zc
            relaxed[b].copy_from(&zc);
            relaxed[b].zip_apply(x, |r, xv| *r = relax * xv + (1.0 - relax) * *r);
            z_new += &relaxed[b];
            z_new += &u[b];
        }
        z_new /= 3.0;
        for b in 0..3 {
            u[b] += &relaxed[b];
            u[b] -= &z_new;
        }

        if z_new.iter().any(|v| !v.is_finite()) {
            status = SolveStatus::NumericalFailure;
            failure = Some("non-finite iterate".into());
            break;
        }

        let primal = xs
            .iter()
            .map(|x| dist(x, &z_new))
            .fold(0.0, f64::max);
        let change = dist(&z_new, &zc);
        std::mem::swap(&mut zc, &mut z_new);
        let znorm = zc.norm();
        let obj = linalg::frob_dot(objective, &zc);
        history.push(obj);

        if let Some(every) = cfg.trace_every {
            if it % every == 0 {
                let min_eig = linalg::min_eigenvalue(&zc).unwrap_or(f64::NAN);
                trace.push(TraceRow {
                    iter: it,
                    objective: linalg::frob_dot(report, &zc),
                    primal_residual: primal,
                    min_eig,
                });
            }
        }

        let bound = cfg.tol_primal * (1.0 + znorm);
        if primal <= bound && change <= bound && history.len() > WINDOW {
            let past = history[history.len() - 1 - WINDOW];
            if (obj - past).abs() <= cfg.tol_obj * (1.0 + obj.abs()) {
                status = SolveStatus::Converged;
                break;
            }
        }

        if cfg.adaptive_rho && it - last_rebalance >= WINDOW {
            // successive change stands in for the dual residual
            let factor = if primal > 10.0 * change {
                2.0
            } else if change > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            let next = (rho * factor).clamp(RHO_MIN * a_scale.max(1.0), RHO_MAX * a_scale.max(1.0));
            if next != rho {
                for ub in u.iter_mut() {
                    *ub *= rho / next;
                }
                rho = next;
                last_rebalance = it;
            }
        }
    }

    if status == SolveStatus::NumericalFailure {
        return Ok(SolverResult {
            z_hat: DMatrix::zeros(n, n),
            objective: f64::NAN,
            iters,
            residuals: None,
            status,
            achieved_trace: f64::NAN,
            trace,
            failure,
        });
    }

    let cleaned = project_cone(&zc, cone).map(|m| project_rowsum_nonneg(&m));
    let z_hat = match cleaned {
        Ok(z) => z,
        Err(e) => {
            return Ok(SolverResult {
                z_hat: DMatrix::zeros(n, n),
                objective: f64::NAN,
                iters,
                residuals: None,
                status: SolveStatus::NumericalFailure,
                achieved_trace: f64::NAN,
                trace,
                failure: Some(e.to_string()),
            })
        }
    };
    let achieved_trace = z_hat.trace();
    let k_report = if k_target > 0.0 { k_target.round() as usize } else { achieved_trace.round() as usize };
    let residuals = feasibility_residuals(&z_hat, k_report).ok();
    Ok(SolverResult {
        objective: linalg::frob_dot(report, &z_hat),
        z_hat,
        iters,
        residuals,
        status,
        achieved_trace,
        trace,
        failure,
    })
}

fn dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `λK + αᵀ1 − tr(AZ)`.
pub fn dual_gap(
    a: &AffinityMatrix,
    z: &DMatrix<f64>,
    lambda: f64,
    k: usize,
    alpha: &[f64],
) -> Result<f64> {
    if z.shape() != (a.n(), a.n()) || alpha.len() != a.n() {
        return Err(Error::SizeMismatch("dual gap operands".into()));
    }
    let primal = linalg::frob_dot(a.matrix(), z);
    Ok(lambda * k as f64 + alpha.iter().sum::<f64>() - primal)
}

/// Write solver trace rows as CSV: `iter,objective,primal_residual,min_eig`.
pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let mut out = String::from("iter,objective,primal_residual,min_eig\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iter,
            crate::io::fmt_f64(r.objective),
            crate::io::fmt_f64(r.primal_residual),
            crate::io::fmt_f64(r.min_eig)
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Admissible range for the trace penalty of the regularized problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaWindow {
    pub lo: f64,
    pub hi: f64,
}

impl LambdaWindow {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    /// Midpoint when non-empty, otherwise `hi / 2`.
    pub fn pick(&self) -> f64 {
        if self.is_empty() {
            self.hi / 2.0
        } else {
            0.5 * (self.lo + self.hi)
        }
    }
}

/// `lo = σ²(√n + √p + √(2 log n))² + β⁻¹σ²(n + K log n + (1−β)Kδ√(p m log n))`,
/// `hi = pσ² + (β/4) m Δ²`, with the unspecified constant in `lo` set to 1.
///
/// An empty window is a legal answer: the separation regime that guarantees a
/// certificate is not met.
#[allow(clippy::too_many_arguments)]
pub fn lambda_window(
    n: usize,
    k: usize,
    p: usize,
    sigma2: f64,
    m: f64,
    delta2: f64,
    beta: f64,
    delta: f64,
) -> Result<LambdaWindow> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let (nf, kf, pf) = (n as f64, k as f64, p as f64);
    let log_n = nf.ln();
    let spectral = sigma2 * (nf.sqrt() + pf.sqrt() + (2.0 * log_n).sqrt()).powi(2);
    let fluctuation = sigma2 / beta
        * (nf + kf * log_n + (1.0 - beta) * kf * delta * (pf * m * log_n).sqrt());
    Ok(LambdaWindow {
        lo: spectral + fluctuation,
        hi: pf * sigma2 + 0.25 * beta * m * delta2,
    })
}

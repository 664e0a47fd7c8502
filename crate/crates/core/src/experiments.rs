//! Monte Carlo phase diagrams and per-instance margin diagnostics.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::baselines::{lloyd_counted, spectral_init};
use crate::certificate::{construct_lambda, lambda_uniqueness_bound, verify_certificate, Tolerances};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg;
use crate::membership::{partition_to_membership, recovery_equal, Partition};
use crate::model_gen::{
    cutoff_threshold, pairwise_harmonic_min, place_centers, sample_dataset, CenterSet, MixtureSpec,
    PlacementMode,
};
use crate::rng::derive_seed;
use crate::rounding::{is_exact_recovery, relative_distance, RoundingConfig};
use crate::solver::{build_affinity, lambda_window, solve_regularized, solve_sdp, SolveStatus, SolverConfig};

/// Relative Frobenius tolerance of the strict recovery metric.
pub const STRICT_FROB_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Sdp,
    SdpRegularized,
    LloydSpectral,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Sdp => "sdp",
            Method::SdpRegularized => "sdp_regularized",
            Method::LloydSpectral => "lloyd_spectral",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdp" => Ok(Method::Sdp),
            "sdp_regularized" => Ok(Method::SdpRegularized),
            "lloyd_spectral" => Ok(Method::LloydSpectral),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// Experiment grid over separation ratios `Δ² / Δ̄²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub sigma2: f64,
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub beta: f64,
    pub delta: f64,
    /// Certificate λ as a multiple of λ♯.
    pub lambda_scale: f64,
    pub placement: PlacementMode,
    pub solver: SolverConfig,
    pub rounding_restarts: usize,
    /// Wall-clock timing makes the CSV machine dependent; off by default.
    pub record_runtime: bool,
}

impl PhaseGrid {
    pub fn new(n: usize, k: usize, p: usize, sigma2: f64, ratios: Vec<f64>, trials: usize, master_seed: u64) -> Self {
        PhaseGrid {
            n,
            k,
            p,
            sigma2,
            ratios,
            trials,
            methods: vec![Method::Sdp],
            master_seed,
            beta: 0.5,
            delta: 1.0,
            lambda_scale: 1.0,
            placement: PlacementMode::Orthogonal,
            solver: SolverConfig::default(),
            rounding_restarts: 10,
            record_runtime: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || !self.n.is_multiple_of(self.k) {
            return Err(Error::InvalidInput(format!(
                "equal cluster sizes need K >= 2 dividing n (n={}, K={})",
                self.n, self.k
            )));
        }
        if self.trials < 1 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidInput("ratios must be positive".into()));
        }
        if self.ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("ratios must be strictly increasing".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("at least one method is required".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) || !(self.delta > 0.0) {
            return Err(Error::InvalidInput("need 0 < beta < 1 and delta > 0".into()));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidInput("sigma2 must be positive".into()));
        }
        self.solver.validate()
    }

    /// Flat `key = value` form accepted by [`PhaseGrid::from_config`].
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let ratios: Vec<String> = self.ratios.iter().map(|r| r.to_string()).collect();
        let methods: Vec<&str> = self.methods.iter().map(Method::as_str).collect();
        let lines: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("k", self.k.to_string()),
            ("p", self.p.to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("ratios", ratios.join(",")),
            ("trials", self.trials.to_string()),
            ("methods", methods.join(",")),
            ("master_seed", self.master_seed.to_string()),
            ("beta", self.beta.to_string()),
            ("delta", self.delta.to_string()),
            ("lambda_scale", self.lambda_scale.to_string()),
            ("placement", self.placement.as_str().to_string()),
            ("max_iters", self.solver.max_iters.to_string()),
            ("tol_primal", self.solver.tol_primal.to_string()),
            ("tol_obj", self.solver.tol_obj.to_string()),
            ("rho", self.solver.rho.to_string()),
            ("over_relaxation", self.solver.over_relaxation.to_string()),
            ("adaptive_rho", self.solver.adaptive_rho.to_string()),
            ("rounding_restarts", self.rounding_restarts.to_string()),
            ("record_runtime", self.record_runtime.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Build a grid from parsed config entries. `master_seed` is mandatory.
    pub fn from_config(map: &std::collections::BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(
            map: &std::collections::BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            map.get(key)
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|e| Error::InvalidInput(format!("config key {key}: {e}")))
                })
                .transpose()
        }
        fn need<T: std::str::FromStr>(
            map: &std::collections::BTreeMap<String, String>,
            key: &str,
        ) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            get(map, key)?.ok_or_else(|| Error::InvalidInput(format!("config key {key} is required")))
        }
        const KNOWN: &[&str] = &[
            "n", "k", "p", "sigma2", "ratios", "trials", "methods", "master_seed", "beta", "delta",
            "lambda_scale", "placement", "max_iters", "tol_primal", "tol_obj", "rho",
            "over_relaxation", "adaptive_rho", "rounding_restarts", "record_runtime", "version",
        ];
        if let Some(unknown) = map.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::InvalidInput(format!("unknown config key {unknown:?}")));
        }
        let ratios = need::<String>(map, "ratios")?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("ratio {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grid = PhaseGrid::new(
            need(map, "n")?,
            need(map, "k")?,
            need(map, "p")?,
            need(map, "sigma2")?,
            ratios,
            need(map, "trials")?,
            need(map, "master_seed")?,
        );
        if let Some(m) = get::<String>(map, "methods")? {
            grid.methods = m
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<_>>>()?;
        }
        if let Some(v) = get(map, "beta")? {
            grid.beta = v;
        }
        if let Some(v) = get(map, "delta")? {
            grid.delta = v;
        }
        if let Some(v) = get(map, "lambda_scale")? {
            grid.lambda_scale = v;
        }
        if let Some(v) = get::<String>(map, "placement")? {
            grid.placement = v.parse()?;
        }
        if let Some(v) = get(map, "max_iters")? {
            grid.solver.max_iters = v;
        }
        if let Some(v) = get(map, "tol_primal")? {
            grid.solver.tol_primal = v;
        }
        if let Some(v) = get(map, "tol_obj")? {
            grid.solver.tol_obj = v;
        }
        if let Some(v) = get(map, "rho")? {
            grid.solver.rho = v;
        }
        if let Some(v) = get(map, "over_relaxation")? {
            grid.solver.over_relaxation = v;
        }
        if let Some(v) = get(map, "adaptive_rho")? {
            grid.solver.adaptive_rho = v;
        }
        if let Some(v) = get(map, "rounding_restarts")? {
            grid.rounding_restarts = v;
        }
        if let Some(v) = get(map, "record_runtime")? {
            grid.record_runtime = v;
        }
        grid.validate()?;
        Ok(grid)
    }
}

/// Outcome of one method on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub recovered: bool,
    pub by_rounding: bool,
    pub by_frobenius: bool,
    pub rel_distance: f64,
    pub iters: usize,
    pub runtime_s: f64,
    pub status: &'static str,
    /// `⟨A, Ẑ⟩` (the K-means objective for partition-valued methods).
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub ratio_index: usize,
    pub ratio: f64,
    pub trial: usize,
    pub seed: u64,
    pub delta2: f64,
    pub cert_lambda: f64,
    pub cert_passed: bool,
    pub cert_degenerate: bool,
    pub duality_gap: f64,
    /// `⟨A, Z*⟩` at the truth.
    pub truth_objective: f64,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub ratio: f64,
    pub method: Method,
    pub recovery_rate: f64,
    pub certificate_rate: f64,
    pub mean_iters: f64,
    pub mean_runtime_s: f64,
    pub trials: usize,
}

/// Run every trial of the grid on `jobs` worker threads (`0` = all cores).
///
/// Records come back in (ratio, trial) order whatever the worker count.
pub fn run_trials(grid: &PhaseGrid, jobs: usize) -> Result<Vec<TrialRecord>> {
    grid.validate()?;
    let tasks: Vec<(usize, usize)> = (0..grid.ratios.len())
        .flat_map(|r| (0..grid.trials).map(move |t| (r, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|&(r, t)| run_trial(grid, r, t))
            .collect::<Result<Vec<_>>>()
    })
}

pub fn run_phase_diagram(grid: &PhaseGrid, jobs: usize) -> Result<Vec<PhaseRow>> {
    let records = run_trials(grid, jobs)?;
    Ok(aggregate(grid, &records))
}

fn run_trial(grid: &PhaseGrid, ratio_index: usize, trial: usize) -> Result<TrialRecord> {
    let seed = derive_seed(grid.master_seed, &[ratio_index as u64, trial as u64]);
    let ratio = grid.ratios[ratio_index];
    let cutoff = cutoff_threshold(grid.n, grid.k, grid.p, grid.sigma2)?;
    let delta2 = ratio * cutoff;
    let centers = place_centers(grid.placement, grid.k, grid.p, delta2, derive_seed(seed, &[0]))?;
    let spec = MixtureSpec::equal(grid.n, grid.k, grid.sigma2, derive_seed(seed, &[1]))?;
    let data = sample_dataset(&centers, &spec)?;
    let a = build_affinity(&data.x)?;
    let z_star = partition_to_membership(&data.truth);
    let truth_objective = linalg::frob_dot(a.matrix(), &z_star);

    let m = pairwise_harmonic_min(&data.truth.sizes())?;
    let sep = centers.min_separation();
    let cert_lambda = grid.lambda_scale * construct_lambda(grid.sigma2, grid.p, m, sep, grid.beta)?;
    let report = verify_certificate(&data.x, &data.truth, cert_lambda, Tolerances::default())?;

    let rounding = RoundingConfig {
        restarts: grid.rounding_restarts,
        max_iters: 100,
        seed: derive_seed(seed, &[2]),
    };

    let mut outcomes = Vec::with_capacity(grid.methods.len());
    for &method in &grid.methods {
        let start = Instant::now();
        let outcome = match method {
            Method::Sdp | Method::SdpRegularized => {
                let result = if method == Method::Sdp {
                    solve_sdp(&a, grid.k, &grid.solver)?
                } else {
                    let window = lambda_window(
                        grid.n, grid.k, grid.p, grid.sigma2, m, sep, grid.beta, grid.delta,
                    )?;
                    solve_regularized(&a, window.pick(), &grid.solver)?
                };
                let runtime_s = start.elapsed().as_secs_f64();
                if result.status == SolveStatus::NumericalFailure {
                    MethodOutcome {
                        method,
                        recovered: false,
                        by_rounding: false,
                        by_frobenius: false,
                        rel_distance: f64::NAN,
                        iters: result.iters,
                        runtime_s,
                        status: result.status.as_str(),
                        objective: f64::NAN,
                    }
                } else {
                    let check = is_exact_recovery(&result.z_hat, &data.truth, STRICT_FROB_TOL, &rounding)?;
                    MethodOutcome {
                        method,
                        // an unconverged iterate is not an optimum, whatever it looks like
                        recovered: check.strict() && result.status == SolveStatus::Converged,
                        by_rounding: check.by_rounding,
                        by_frobenius: check.by_frobenius,
                        rel_distance: relative_distance(&result.z_hat, &data.truth),
                        iters: result.iters,
                        runtime_s,
                        status: result.status.as_str(),
                        objective: result.objective,
                    }
                }
            }
            Method::LloydSpectral => {
                let init = spectral_init(&data.x, grid.k, derive_seed(seed, &[3]))?;
                let (est, iters) = lloyd_counted(&data.x, grid.k, &init, 100)?;
                let runtime_s = start.elapsed().as_secs_f64();
                let z = partition_to_membership(&est);
                let exact = recovery_equal(&est, &data.truth);
                MethodOutcome {
                    method,
                    recovered: exact,
                    by_rounding: exact,
                    by_frobenius: exact,
                    rel_distance: relative_distance(&z, &data.truth),
                    iters,
                    runtime_s,
                    status: "converged",
                    objective: linalg::frob_dot(a.matrix(), &z),
                }
            }
        };
        outcomes.push(outcome);
    }

    Ok(TrialRecord {
        ratio_index,
        ratio,
        trial,
        seed,
        delta2: sep,
        cert_lambda,
        cert_passed: report.passed,
        cert_degenerate: report.degenerate.is_some(),
        duality_gap: report.duality_gap,
        truth_objective,
        outcomes,
    })
}

/// Per-(ratio, method) rates. Counters are summed in record order, then
/// divided, so the result does not depend on how trials were scheduled.
pub fn aggregate(grid: &PhaseGrid, records: &[TrialRecord]) -> Vec<PhaseRow> {
    let mut rows = Vec::new();
    for (ri, &ratio) in grid.ratios.iter().enumerate() {
        let trials: Vec<&TrialRecord> = records.iter().filter(|r| r.ratio_index == ri).collect();
        let count = trials.len();
        let certs = trials.iter().filter(|r| r.cert_passed).count();
        for (mi, &method) in grid.methods.iter().enumerate() {
            let mut recovered = 0usize;
            let mut iters = 0usize;
            let mut runtime = 0.0;
            for t in &trials {
                let o = &t.outcomes[mi];
                recovered += usize::from(o.recovered);
                iters += o.iters;
                runtime += o.runtime_s;
            }
            let denom = count.max(1) as f64;
            rows.push(PhaseRow {
                ratio,
                method,
                recovery_rate: recovered as f64 / denom,
                certificate_rate: certs as f64 / denom,
                mean_iters: iters as f64 / denom,
                mean_runtime_s: if grid.record_runtime { runtime / denom } else { 0.0 },
                trials: count,
            });
        }
    }
    rows
}

pub const CSV_HEADER: &str = "ratio,method,recovery_rate,certificate_rate,mean_iters,mean_runtime_s,trials";

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.ratio),
            r.method.as_str(),
            fmt_f64(r.recovery_rate),
            fmt_f64(r.certificate_rate),
            fmt_f64(r.mean_iters),
            fmt_f64(r.mean_runtime_s),
            r.trials
        );
    }
    out
}

pub fn emit_csv(rows: &[PhaseRow], path: &Path) -> Result<()> {
    std::fs::write(path, phase_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Parse the output of [`phase_csv`].
pub fn parse_phase_csv(text: &str) -> Result<Vec<PhaseRow>> {
    let origin = Path::new("<csv>");
    let bad = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(1, format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(idx + 2, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(idx + 2, e.to_string()));
        rows.push(PhaseRow {
            ratio: num(f[0])?,
            method: f[1].parse()?,
            recovery_rate: num(f[2])?,
            certificate_rate: num(f[3])?,
            mean_iters: num(f[4])?,
            mean_runtime_s: num(f[5])?,
            trials: f[6].parse().map_err(|e: std::num::ParseIntError| bad(idx + 2, e.to_string()))?,
        });
    }
    Ok(rows)
}

/// Per-trial CSV; flags solver failures that the aggregate counts as non-recovery.
pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(
        "ratio,trial,seed,method,recovered,by_rounding,by_frobenius,rel_distance,iters,status,cert_passed,cert_degenerate\n",
    );
    for r in records {
        for o in &r.outcomes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.ratio),
                r.trial,
                r.seed,
                o.method.as_str(),
                u8::from(o.recovered),
                u8::from(o.by_rounding),
                u8::from(o.by_frobenius),
                fmt_f64(o.rel_distance),
                o.iters,
                o.status,
                u8::from(r.cert_passed),
                u8::from(r.cert_degenerate)
            );
        }
    }
    out
}

/// Grid parameters, library version and seed; doubles as a re-runnable config.
pub fn manifest_text(grid: &PhaseGrid) -> String {
    format!(
        "# phase-diagram run manifest\nversion = {}\n{}",
        env!("CARGO_PKG_VERSION"),
        grid.to_config_text()
    )
}

/// Non-decreasing least-squares fit (pool adjacent violators, equal weights).
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("two blocks present");
            *last = ((m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, c)| std::iter::repeat_n(m, c))
        .collect()
}

/// Right-hand side of the separation event for one β.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginRow {
    pub beta: f64,
    /// Smallest right-hand side over ordered cluster pairs.
    pub rhs_min: f64,
    /// `min_{(k,l)} (min_{i∈G_k} margin_kl(i) − rhs_kl)`; the event holds iff `≥ 0`.
    pub slack: f64,
    pub event_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginStats {
    /// `min_{k≠l, i∈G_k} ‖X_i − X̄_l‖² − ‖X_i − X̄_k‖²`.
    pub min_margin: f64,
    pub rows: Vec<MarginRow>,
    pub uniqueness_bound: f64,
}

/// `r_kl = 2σ√(2 log(nK)/n_l)‖μ_k−μ_l‖ + 2σ²((n_k+n_l)/(n_k n_l))√(2p log(nK)) + (4σ²/n_k) log(nK)`.
pub fn margin_remainder(sigma2: f64, n: usize, k: usize, p: usize, nk: usize, nl: usize, center_dist: f64) -> f64 {
    let log_nk = ((n * k) as f64).ln();
    let sigma = sigma2.sqrt();
    let (nkf, nlf) = (nk as f64, nl as f64);
    2.0 * sigma * (2.0 * log_nk / nlf).sqrt() * center_dist
        + 2.0 * sigma2 * (nkf + nlf) / (nkf * nlf) * (2.0 * p as f64 * log_nk).sqrt()
        + 4.0 * sigma2 / nkf * log_nk
}

pub fn margin_statistics(
    x: &DMatrix<f64>,
    part: &Partition,
    centers: &CenterSet,
    sigma2: f64,
    betas: &[f64],
) -> Result<MarginStats> {
    if x.ncols() != part.n() || centers.k() != part.k() || centers.dim() != x.nrows() {
        return Err(Error::SizeMismatch("data, partition and centers disagree".into()));
    }
    let (p, n, kk) = (x.nrows(), x.ncols(), part.k());
    let sizes = part.sizes();
    let groups = part.groups();
    let mut means = DMatrix::zeros(p, kk);
    for (i, &l) in part.labels().iter().enumerate() {
        let mut col = means.column_mut(l);
        col += x.column(i);
    }
    for (l, &s) in sizes.iter().enumerate() {
        let mut col = means.column_mut(l);
        col /= s as f64;
    }
    // pair_min[k][l] = min_{i∈G_k} ‖X_i − X̄_l‖² − ‖X_i − X̄_k‖²
    let mut pair_min = vec![vec![f64::INFINITY; kk]; kk];
    for k in 0..kk {
        for l in 0..kk {
            if k == l {
                continue;
            }
            for &i in &groups[k] {
                let xi = x.column(i);
                let v = (xi - means.column(l)).norm_squared() - (xi - means.column(k)).norm_squared();
                pair_min[k][l] = pair_min[k][l].min(v);
            }
        }
    }
    let min_margin = pair_min
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let rows = betas
        .iter()
        .map(|&beta| {
            let mut rhs_min = f64::INFINITY;
            let mut slack = f64::INFINITY;
            for k in 0..kk {
                for l in 0..kk {
                    if k == l {
                        continue;
                    }
                    let d2 = centers.sq_dist(k, l);
                    let (nk, nl) = (sizes[k], sizes[l]);
                    let rhs = (nk + nl) as f64 / (nk * nl) as f64 * sigma2 * p as f64 + beta * d2
                        - margin_remainder(sigma2, n, kk, p, nk, nl, d2.sqrt());
                    rhs_min = rhs_min.min(rhs);
                    slack = slack.min(pair_min[k][l] - rhs);
                }
            }
            MarginRow {
                beta,
                rhs_min,
                slack,
                event_holds: slack >= 0.0,
            }
        })
        .collect();
    Ok(MarginStats {
        min_margin,
        rows,
        uniqueness_bound: lambda_uniqueness_bound(x, part)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_gen::noiseless_points;

    fn tiny_grid() -> PhaseGrid {
        let mut g = PhaseGrid::new(8, 2, 3, 1.0, vec![0.5, 3.0], 2, 42);
        g.methods = vec![Method::Sdp, Method::LloydSpectral];
        g
    }

    #[test]
    fn grid_config_round_trip() {
        let mut g = tiny_grid();
        g.methods.push(Method::SdpRegularized);
        g.solver.rho = 0.5;
        let map = crate::io::parse_config(&manifest_text(&g), Path::new("m")).unwrap();
        assert_eq!(PhaseGrid::from_config(&map).unwrap(), g);
        let mut missing = map.clone();
        missing.remove("master_seed");
        assert!(PhaseGrid::from_config(&missing).is_err());
        let mut unknown = map;
        unknown.insert("colour".into(), "red".into());
        assert!(PhaseGrid::from_config(&unknown).is_err());
    }

    #[test]
    fn grid_validation() {
        let mut g = tiny_grid();
        g.ratios = vec![1.0, 1.0];
        assert!(g.validate().is_err());
        let mut g = tiny_grid();
        g.n = 9;
        assert!(g.validate().is_err());
        let mut g = tiny_grid();
        g.trials = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn single_trial_rates_are_binary() {
        let mut g = tiny_grid();
        g.trials = 1;
        let rows = run_phase_diagram(&g, 1).unwrap();
        assert_eq!(rows.len(), 4);
        for r in rows {
            assert!(r.recovery_rate == 0.0 || r.recovery_rate == 1.0);
            assert!(r.certificate_rate == 0.0 || r.certificate_rate == 1.0);
            assert_eq!(r.trials, 1);
            assert_eq!(r.mean_runtime_s, 0.0);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let g = tiny_grid();
        let a = phase_csv(&run_phase_diagram(&g, 1).unwrap());
        let b = phase_csv(&run_phase_diagram(&g, 3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_format() {
        assert_eq!(phase_csv(&[]), format!("{CSV_HEADER}\n"));
        let row = PhaseRow {
            ratio: 1.2,
            method: Method::SdpRegularized,
            recovery_rate: 0.86,
            certificate_rate: 0.5,
            mean_iters: 123.25,
            mean_runtime_s: 0.0,
            trials: 50,
        };
        let text = phase_csv(std::slice::from_ref(&row));
        assert!(!text.contains('\r'));
        assert_eq!(parse_phase_csv(&text).unwrap(), vec![row]);
        assert!(parse_phase_csv("a,b\n").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phase.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
        let missing = dir.path().join("no/such/dir.csv");
        assert!(matches!(emit_csv(&[], &missing), Err(Error::Io { .. })));
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic_increasing(&[0.0, 0.5, 1.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(isotonic_increasing(&[0.0, 1.0, 0.6, 1.0]), vec![0.0, 0.8, 0.8, 1.0]);
        assert_eq!(isotonic_increasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn noiseless_margin_equals_separation() {
        let c = place_centers(PlacementMode::Orthogonal, 3, 4, 6.0, 0).unwrap();
        let (x, part) = noiseless_points(&c, &[5, 5, 5]).unwrap();
        let stats = margin_statistics(&x, &part, &c, 1.0, &[0.5]).unwrap();
        assert!((stats.min_margin - 6.0).abs() < 1e-12);
        assert!((stats.uniqueness_bound - 2.5 * 6.0).abs() < 1e-10);
        assert_eq!(margin_remainder(0.0, 15, 3, 4, 5, 5, 6f64.sqrt()), 0.0);
    }
}

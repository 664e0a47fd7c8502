use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kmeans_sdp::baselines::{brute_force_kmeans, lloyd, mle_k2_failure_witness, signs_from_partition, spectral_init};
use kmeans_sdp::certificate::{construct_lambda, estimate_separation, verify_certificate};
use kmeans_sdp::experiments::{aggregate, emit_csv, manifest_text, run_trials, trials_csv, STRICT_FROB_TOL};
use kmeans_sdp::io::{self, read_labels, read_points, write_dataset, write_labels, write_matrix};
use kmeans_sdp::membership::{kmeans_objective, recovery_equal};
use kmeans_sdp::model_gen::{place_centers, pairwise_harmonic_min, sample_dataset};
use kmeans_sdp::rng::derive_seed;
use kmeans_sdp::rounding::is_exact_recovery;
use kmeans_sdp::solver::{build_affinity, solve_regularized, solve_sdp, write_trace_csv};
use kmeans_sdp::{
    Error, MixtureSpec, Partition, PhaseGrid, PlacementMode, RoundingConfig, SolveStatus, SolverConfig,
    Tolerances,
};

use crate::args::*;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_FAIL: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

const TRACE_EVERY: usize = 50;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DegenerateBlock { .. } => EXIT_DEGENERATE,
            Error::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

type Outcome = Result<u8, Failure>;

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Certify(a) => certify(a),
        Command::Baseline(a) => baseline(a),
        Command::PhaseDiagram(a) => phase_diagram(a),
    }
}

/// A fresh seed from the process-local hasher keys; printed so the run can be repeated.
fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        use std::hash::{BuildHasher, RandomState};
        RandomState::new().hash_one(std::process::id())
    })
}

fn print_kv(pairs: &[(&str, String)]) {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    print!("{out}");
}

fn data_dir(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.to_path_buf()
    } else {
        data.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

const GENERATE_KEYS: &[&str] = &["n", "k", "p", "sigma2", "delta2", "placement", "sizes", "seed", "version"];

fn generate(a: GenerateArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(path) => io::read_config(path)?,
        None => BTreeMap::new(),
    };
    if let Some(bad) = cfg.keys().find(|k| !GENERATE_KEYS.contains(&k.as_str())) {
        return Err(usage(format!("unknown config key {bad:?}")));
    }
    let mut set = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            cfg.insert(key.to_string(), v);
        }
    };
    set("n", a.n.map(|v| v.to_string()));
    set("k", a.k.map(|v| v.to_string()));
    set("p", a.p.map(|v| v.to_string()));
    set("sigma2", a.sigma2.map(|v| v.to_string()));
    set("delta2", a.delta2.map(|v| v.to_string()));
    set("sizes", a.sizes.clone());
    set("placement", a.placement.clone());
    set("seed", a.seed.map(|v| v.to_string()));

    fn need<T: std::str::FromStr>(cfg: &BTreeMap<String, String>, key: &str) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        let raw = cfg.get(key).ok_or_else(|| usage(format!("--{key} is required")))?;
        raw.parse().map_err(|e| usage(format!("{key}: {e}")))
    }
    let k: usize = need(&cfg, "k")?;
    let p: usize = need(&cfg, "p")?;
    let sigma2: f64 = need(&cfg, "sigma2")?;
    let delta2: f64 = need(&cfg, "delta2")?;
    let placement: PlacementMode = match cfg.get("placement") {
        Some(s) => s.parse()?,
        None => PlacementMode::Orthogonal,
    };
    let sizes: Vec<usize> = match cfg.get("sizes") {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse().map_err(|e| usage(format!("sizes: {e}"))))
            .collect::<Result<_, _>>()?,
        None => {
            let n: usize = need(&cfg, "n")?;
            if k == 0 || !n.is_multiple_of(k) {
                return Err(usage(format!("n={n} is not divisible by K={k}; pass --sizes")));
            }
            vec![n / k; k]
        }
    };
    if let Some(n) = cfg.get("n") {
        let n: usize = n.parse().map_err(|e| usage(format!("n: {e}")))?;
        if n != sizes.iter().sum::<usize>() {
            return Err(usage("sizes do not sum to n"));
        }
    }
    let seed = seed_or_random(cfg.get("seed").map(|s| s.parse()).transpose().map_err(|e| usage(format!("seed: {e}")))?);

    let centers = place_centers(placement, k, p, delta2, derive_seed(seed, &[0]))?;
    let spec = MixtureSpec::new(sizes.clone(), sigma2, derive_seed(seed, &[1]))?;
    let data = sample_dataset(&centers, &spec)?;
    let (data_path, labels_path) = write_dataset(&a.out, &data)?;

    let sizes_text: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    let manifest = format!(
        "# generate manifest\nversion = {}\nn = {}\nk = {k}\np = {p}\nsigma2 = {sigma2}\ndelta2 = {delta2}\nplacement = {}\nsizes = {}\nseed = {seed}\n",
        env!("CARGO_PKG_VERSION"),
        spec.n(),
        placement.as_str(),
        sizes_text.join(",")
    );
    let manifest_path = a.out.join("manifest.txt");
    write_text(&manifest_path, &manifest)?;
    print_kv(&[
        ("seed", seed.to_string()),
        ("data", data_path.display().to_string()),
        ("labels", labels_path.display().to_string()),
        ("manifest", manifest_path.display().to_string()),
    ]);
    Ok(EXIT_OK)
}

fn solver_config(a: &SolverArgs) -> SolverConfig {
    SolverConfig {
        max_iters: a.max_iters,
        tol_primal: a.tol_primal,
        tol_obj: a.tol_obj,
        rho: a.rho,
        over_relaxation: a.over_relaxation,
        adaptive_rho: !a.fixed_rho,
        trace_every: None,
    }
}

fn solve(a: SolveArgs) -> Outcome {
    let (x, header) = read_points(&a.data)?;
    let k = a.k.unwrap_or(header.k);
    let mut cfg = solver_config(&a.solver);
    if a.trace.is_some() {
        cfg.trace_every = Some(TRACE_EVERY);
    }
    let affinity = build_affinity(&x)?;
    let result = match a.lambda {
        Some(lambda) => solve_regularized(&affinity, lambda, &cfg)?,
        None => solve_sdp(&affinity, k, &cfg)?,
    };
    if let Some(path) = &a.trace {
        write_trace_csv(&result.trace, path)?;
    }
    let mut report = vec![
        ("status", result.status.as_str().to_string()),
        ("iters", result.iters.to_string()),
        ("objective", io::fmt_f64(result.objective)),
        ("achieved_trace", io::fmt_f64(result.achieved_trace)),
    ];
    if result.status == SolveStatus::NumericalFailure {
        print_kv(&report);
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: result.failure.unwrap_or_else(|| "numerical failure".into()),
        });
    }
    write_matrix(&a.out, &result.z_hat)?;
    if let Some(r) = &result.residuals {
        report.push(("residual_sym", io::fmt_f64(r.sym)));
        report.push(("residual_psd_min_eig", io::fmt_f64(r.psd_min_eig)));
        report.push(("residual_trace", io::fmt_f64(r.trace_err)));
        report.push(("residual_rowsum", io::fmt_f64(r.rowsum_max_err)));
        report.push(("residual_min_entry", io::fmt_f64(r.min_entry)));
    }
    if a.lambda.is_some() && result.is_over_penalized(k) {
        report.push(("over_penalized", "true".into()));
    }

    let labels_path = a.labels.clone().or_else(|| {
        let p = data_dir(&a.data).join(io::LABELS_FILE);
        (a.expect_recovery || p.exists()).then_some(p)
    });
    let mut recovered = None;
    let mut seed_used = None;
    if let Some(path) = labels_path {
        let truth = read_labels(&path, Some(k))?;
        let seed = seed_or_random(a.seed);
        seed_used = Some(seed);
        let rounding = RoundingConfig { seed, ..RoundingConfig::default() };
        let check = is_exact_recovery(&result.z_hat, &truth, STRICT_FROB_TOL, &rounding)?;
        report.push(("seed", seed.to_string()));
        report.push(("recovered_by_rounding", check.by_rounding.to_string()));
        report.push(("recovered_by_frobenius", check.by_frobenius.to_string()));
        report.push(("recovered", check.strict().to_string()));
        recovered = Some(check.strict());
    }
    let mut manifest = format!(
        "# solve manifest\nversion = {}\ndata = {}\nk = {k}\nmax_iters = {}\ntol_primal = {}\ntol_obj = {}\nrho = {}\nover_relaxation = {}\nadaptive_rho = {}\n",
        env!("CARGO_PKG_VERSION"),
        a.data.display(),
        cfg.max_iters,
        cfg.tol_primal,
        cfg.tol_obj,
        cfg.rho,
        cfg.over_relaxation,
        cfg.adaptive_rho
    );
    if let Some(l) = a.lambda {
        let _ = writeln!(manifest, "lambda = {l}");
    }
    if let Some(s) = seed_used {
        let _ = writeln!(manifest, "seed = {s}");
    }
    write_text(&sibling(&a.out, ".manifest"), &manifest)?;
    print_kv(&report);

    if a.expect_recovery && recovered != Some(true) {
        return Ok(EXIT_FAIL);
    }
    if result.status == SolveStatus::MaxIters {
        eprintln!("warning: iteration limit reached before convergence");
    }
    Ok(EXIT_OK)
}

fn manifest_delta2(dir: &Path) -> Result<Option<f64>, Failure> {
    let path = dir.join("manifest.txt");
    if !path.exists() {
        return Ok(None);
    }
    let map = io::read_config(&path)?;
    map.get("delta2")
        .map(|v| v.parse::<f64>().map_err(|e| usage(format!("{}: delta2: {e}", path.display()))))
        .transpose()
}

fn certify(a: CertifyArgs) -> Outcome {
    let (x, header) = read_points(&a.data)?;
    let part = read_labels(&a.labels, Some(header.k))?;
    let sigma2 = a.sigma2.unwrap_or(header.sigma2);
    let (delta2, source) = match a.delta2 {
        Some(d) => (d, "flag"),
        None => match manifest_delta2(&data_dir(&a.data))? {
            Some(d) => (d, "manifest"),
            None => (estimate_separation(&x, &part, sigma2)?, "estimate"),
        },
    };
    let lambda = match a.lambda {
        Some(l) => l,
        None => {
            let m = pairwise_harmonic_min(&part.sizes())?;
            a.lambda_scale.unwrap_or(1.0) * construct_lambda(sigma2, x.nrows(), m, delta2, a.beta)?
        }
    };
    let report = verify_certificate(&x, &part, lambda, Tolerances { tol: a.tol, tol_eig: a.tol_eig })?;
    print_kv(&[
        ("delta2", io::fmt_f64(delta2)),
        ("delta2_source", source.to_string()),
        ("beta", a.beta.to_string()),
    ]);
    print!("{}", report.to_key_values());
    Ok(if report.degenerate.is_some() {
        EXIT_DEGENERATE
    } else if report.passed {
        EXIT_OK
    } else {
        EXIT_FAIL
    })
}

fn finish_baseline(
    x: &kmeans_sdp::nalgebra::DMatrix<f64>,
    est: &Partition,
    common: &BaselineCommon,
    extra: Vec<(&str, String)>,
) -> Outcome {
    let mut report = extra;
    report.push(("objective", io::fmt_f64(kmeans_objective(est, x)?)));
    if let Some(path) = &common.out {
        write_labels(path, est)?;
        report.push(("labels_out", path.display().to_string()));
    }
    if let Some(path) = &common.labels {
        let truth = read_labels(path, Some(est.k()))?;
        report.push(("recovered", recovery_equal(est, &truth).to_string()));
    }
    print_kv(&report);
    Ok(EXIT_OK)
}

fn baseline(a: BaselineArgs) -> Outcome {
    match a.which {
        Baseline::Brute(common) => {
            let (x, header) = read_points(&common.data)?;
            let est = brute_force_kmeans(&x, common.k.unwrap_or(header.k))?;
            finish_baseline(&x, &est, &common, vec![])
        }
        Baseline::Lloyd { common, init, max_iters, seed } => {
            let (x, header) = read_points(&common.data)?;
            let k = common.k.unwrap_or(header.k);
            let mut extra = vec![];
            let start = match init {
                Some(path) => read_labels(&path, Some(k))?,
                None => {
                    let seed = seed_or_random(seed);
                    extra.push(("seed", seed.to_string()));
                    spectral_init(&x, k, seed)?
                }
            };
            let est = lloyd(&x, k, &start, max_iters)?;
            finish_baseline(&x, &est, &common, extra)
        }
        Baseline::Spectral { common, seed } => {
            let (x, header) = read_points(&common.data)?;
            let seed = seed_or_random(seed);
            let est = spectral_init(&x, common.k.unwrap_or(header.k), seed)?;
            finish_baseline(&x, &est, &common, vec![("seed", seed.to_string())])
        }
        Baseline::Witness { data, labels } => {
            let (x, _) = read_points(&data)?;
            let part = read_labels(&labels, Some(2))?;
            let eta = signs_from_partition(&part)?;
            let witness = mle_k2_failure_witness(&x, &eta)?;
            print_kv(&[(
                "witness",
                witness.map_or_else(|| "none".to_string(), |i| (i + 1).to_string()),
            )]);
            Ok(EXIT_OK)
        }
    }
}

fn phase_diagram(a: PhaseArgs) -> Outcome {
    let mut map = io::read_config(&a.config)?;
    if let Some(seed) = a.seed {
        map.insert("master_seed".into(), seed.to_string());
    }
    if !map.contains_key("master_seed") {
        return Err(usage("phase-diagram needs --seed or master_seed in the config"));
    }
    if let Some(s) = a.lambda_scale {
        map.insert("lambda_scale".into(), s.to_string());
    }
    if a.record_runtime {
        map.insert("record_runtime".into(), "true".into());
    }
    let grid = PhaseGrid::from_config(&map)?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let records = run_trials(&grid, jobs)?;
    let rows = aggregate(&grid, &records);
    emit_csv(&rows, &a.out)?;
    let manifest_path = a.out.with_extension("manifest.txt");
    let trials_path = a.out.with_extension("trials.csv");
    write_text(&manifest_path, &manifest_text(&grid))?;
    write_text(&trials_path, &trials_csv(&records))?;
    let failures = records
        .iter()
        .flat_map(|r| &r.outcomes)
        .filter(|o| o.status == SolveStatus::NumericalFailure.as_str())
        .count();
    print_kv(&[
        ("rows", rows.len().to_string()),
        ("csv", a.out.display().to_string()),
        ("manifest", manifest_path.display().to_string()),
        ("trials", trials_path.display().to_string()),
        ("numerical_failures", failures.to_string()),
    ]);
    Ok(EXIT_OK)
}

//! Command-line surface: instance loading, solver wiring, structured
//! outputs (JSON/CSV, optional SVG), and reproducible run manifests.

use crate::discretize::{fields_to_csv, BlockFunction, DiscreteDomain};
use crate::model::ProblemSpec;
use crate::Error;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::Digest;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INDETERMINATE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "nehari",
    version,
    about = "Least-energy block-wise nontrivial solutions of weakly coupled elliptic systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Instance JSON path.
    #[arg(long, global = true)]
    pub instance: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for all randomized stages.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Optional JSON config overriding solver parameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also emit an SVG line plot where applicable.
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Minimize the reduced functional and write the solution candidate.
    Solve,
    /// Solve the algebraic synchronized system.
    Sync {
        /// Compose amplitudes with a scalar shooting solve and report the
        /// full-system residual (requires equal potentials).
        #[arg(long)]
        compose: bool,
    },
    /// Run the structural condition checks and constant estimation.
    Check,
    /// Sweep one parameter and tabulate synchronized verdicts.
    Sweep {
        /// Swept parameter: "beta12" or "p".
        #[arg(long)]
        param: String,
        /// Start of the range (beta12 sweeps).
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        /// End of the range (beta12 sweeps).
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        /// Step (beta12 sweeps).
        #[arg(long)]
        step: Option<f64>,
        /// Comma-separated explicit values (p sweeps).
        #[arg(long)]
        values: Option<String>,
    },
    /// Run the semitrivial escape probe.
    Probe {
        /// Solution CSV to probe; a semitrivial candidate is constructed
        /// from localized bumps when absent.
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

/// Optional overrides loaded from --config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub max_iterations: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub restart_count: Option<usize>,
    pub classification_threshold: Option<f64>,
    pub grid_points: Option<usize>,
    pub sync_restarts: Option<usize>,
}

impl RunConfig {
    pub fn solver(&self, seed: u64) -> crate::minimize::SolverConfig {
        let mut c = crate::minimize::SolverConfig {
            seed,
            ..Default::default()
        };
        if let Some(v) = self.max_iterations {
            c.max_iterations = v;
        }
        if let Some(v) = self.gradient_tolerance {
            c.gradient_tolerance = v;
        }
        if let Some(v) = self.restart_count {
            c.restart_count = v;
        }
        if let Some(v) = self.classification_threshold {
            c.classification_threshold = v;
        }
        c
    }

    pub fn sync(&self, seed: u64) -> crate::synchronized::SyncConfig {
        let mut c = crate::synchronized::SyncConfig {
            seed,
            ..Default::default()
        };
        if let Some(v) = self.sync_restarts {
            c.restarts = v;
        }
        c
    }
}

/// Embedded in every artifact so a run can be reproduced exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub instance: String,
    pub out_dir: String,
    pub seed: u64,
    /// SHA-256 of the config file bytes; "default" without --config.
    pub config_hash: String,
    pub config: RunConfig,
    /// Seconds since the epoch; taken from SOURCE_DATE_EPOCH so reruns
    /// with identical manifests are bit-identical.
    pub timestamp: u64,
}

fn deterministic_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn load_config(path: Option<&Path>) -> Result<(RunConfig, String), Error> {
    match path {
        None => Ok((RunConfig::default(), "default".to_string())),
        Some(p) => {
            let bytes = std::fs::read(p)?;
            let cfg: RunConfig = serde_json::from_slice(&bytes)?;
            let hash = format!("{:x}", sha2::Sha256::digest(&bytes));
            Ok((cfg, hash))
        }
    }
}

fn load_instance(path: Option<&Path>) -> Result<ProblemSpec, Error> {
    let p = path.ok_or_else(|| Error::invalid("--instance is required"))?;
    let text = std::fs::read_to_string(p)?;
    ProblemSpec::from_json_str(&text)
}

fn manifest_comment_lines(manifest: &RunManifest) -> String {
    let json = serde_json::to_string(manifest).expect("manifest serializes");
    format!("# manifest: {json}\n")
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Minimal SVG line plot of the solution components against r.
pub fn plot_components(domain: &DiscreteDomain, u: &BlockFunction, manifest: &RunManifest) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const M: f64 = 50.0;
    let palette = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let (rmin, rmax) = (domain.nodes[0], *domain.nodes.last().unwrap());
    let mut vmin = 0.0f64;
    let mut vmax = 0.0f64;
    for c in &u.components {
        for &v in &c.values {
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
    }
    if vmax - vmin < 1e-300 {
        vmax = vmin + 1.0;
    }
    let x = |r: f64| M + (r - rmin) / (rmax - rmin) * (W - 2.0 * M);
    let y = |v: f64| H - M - (v - vmin) / (vmax - vmin) * (H - 2.0 * M);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "<!-- manifest: {} -->\n",
        serde_json::to_string(manifest).expect("manifest serializes")
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - M,
        W - M,
        H - M
    ));
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - M
    ));
    if vmin < 0.0 {
        svg.push_str(&format!(
            "<line x1=\"{M}\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"#bbbbbb\" stroke-dasharray=\"4\"/>\n",
            y(0.0),
            W - M
        ));
    }
    for (i, c) in u.components.iter().enumerate() {
        let mut points = String::new();
        for (k, &v) in c.values.iter().enumerate() {
            points.push_str(&format!("{:.2},{:.2} ", x(domain.nodes[k]), y(v)));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            palette[i % palette.len()],
            points.trim_end()
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{}\" font-size=\"13\">u_{}</text>\n",
            W - M + 4.0,
            M + 16.0 * i as f64,
            palette[i % palette.len()],
            i + 1
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\">r</text>\n",
        W - M,
        H - M + 20.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn exit_for(err: &Error) -> i32 {
    match err {
        Error::NoConvergence(_) => EXIT_INDETERMINATE,
        _ => EXIT_INVALID,
    }
}

pub fn run(cli: &Cli) -> i32 {
    if let Ok(v) = std::env::var("NEHARI_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn run_inner(cli: &Cli) -> Result<i32, Error> {
    let (config, config_hash) = load_config(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    let manifest = RunManifest {
        command: match &cli.command {
            Command::Solve => "solve".into(),
            Command::Sync { .. } => "sync".into(),
            Command::Check => "check".into(),
            Command::Sweep { .. } => "sweep".into(),
            Command::Probe { .. } => "probe".into(),
        },
        instance: cli
            .instance
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        out_dir: cli.out.display().to_string(),
        seed: cli.seed,
        config_hash,
        config: config.clone(),
        timestamp: deterministic_timestamp(),
    };
    match &cli.command {
        Command::Solve => cmd_solve(cli, &config, &manifest),
        Command::Sync { compose } => cmd_sync(cli, &config, &manifest, *compose),
        Command::Check => cmd_check(cli, &config, &manifest),
        Command::Sweep {
            param,
            from,
            to,
            step,
            values,
        } => cmd_sweep(
            cli,
            &config,
            &manifest,
            param,
            *from,
            *to,
            *step,
            values.as_deref(),
        ),
        Command::Probe { state } => cmd_probe(cli, &config, &manifest, state.as_deref()),
    }
}

fn build_domain(spec: &ProblemSpec, config: &RunConfig) -> Result<(ProblemSpec, DiscreteDomain), Error> {
    let mut spec = spec.clone();
    if let Some(n) = config.grid_points {
        spec.domain.grid_points = n;
        spec.domain.validate()?;
    }
    let domain = DiscreteDomain::build(&spec.domain)?;
    Ok((spec, domain))
}

fn cmd_solve(cli: &Cli, config: &RunConfig, manifest: &RunManifest) -> Result<i32, Error> {
    let spec = load_instance(cli.instance.as_deref())?;
    let b1 = crate::model::validate_b1(&spec.coupling, &spec.partition)?;
    if !b1.passed() {
        let bad: Vec<&str> = b1
            .items
            .iter()
            .filter(|i| !i.satisfied)
            .map(|i| i.label.as_str())
            .collect();
        return Err(Error::invalid(format!(
            "coupling sign hypothesis violated: {}",
            bad.join("; ")
        )));
    }
    let (spec, domain) = build_domain(&spec, config)?;
    let coercivity = crate::model::check_coercivity(&spec, &domain, crate::model::DEFAULT_MARGIN);
    if !coercivity.passed() {
        return Err(Error::invalid("coercivity condition fails on this instance"));
    }
    let solver = config.solver(cli.seed);
    let (u, mut report) = crate::minimize::minimize_psi(&domain, &spec, &solver, None)?;
    // wall time is the one nondeterministic field; zeroed in artifacts so
    // identical manifests produce bit-identical outputs
    report.wall_time_s = 0.0;

    let mut csv = manifest_comment_lines(manifest);
    csv.push_str(&fields_to_csv(&domain, &u));
    std::fs::write(cli.out.join("solution.csv"), csv)?;
    write_json(
        &cli.out.join("report.json"),
        &serde_json::json!({
            "manifest": manifest,
            "instance": spec,
            "report": report,
        }),
    )?;
    if cli.plot {
        std::fs::write(
            cli.out.join("plot.svg"),
            plot_components(&domain, &u, manifest),
        )?;
    }
    let ok = report.converged
        && report.classification != crate::minimize::Classification::Indeterminate;
    Ok(if ok { EXIT_OK } else { EXIT_INDETERMINATE })
}

fn scalar_profile_for(
    spec: &ProblemSpec,
    domain: &DiscreteDomain,
) -> Result<(crate::discretize::ScalarField, f64), Error> {
    let u = crate::oracle::shooting_ground_state(
        &spec.domain,
        spec.lambda[0],
        spec.p,
        1.0,
        &Default::default(),
    )?;
    // scalar residual through the same strong-form evaluation used for
    // the composed system
    let scalar_spec = ProblemSpec::new(
        spec.p,
        vec![spec.lambda[0]],
        crate::model::BlockPartition::single(1),
        crate::model::CouplingMatrix::new(vec![vec![1.0]])?,
        spec.domain.clone(),
    )?;
    let single = BlockFunction {
        components: vec![u.clone()],
    };
    let res = crate::minimize::euler_lagrange_residual(domain, &scalar_spec, &single)[0];
    Ok((u, res))
}

fn cmd_sync(
    cli: &Cli,
    config: &RunConfig,
    manifest: &RunManifest,
    compose: bool,
) -> Result<i32, Error> {
    let spec = load_instance(cli.instance.as_deref())?;
    let beta = &spec.coupling.beta;
    let cand = crate::synchronized::solve_sync(beta, spec.p, &config.sync(cli.seed))?;
    let mut out = serde_json::json!({
        "manifest": manifest,
        "p": spec.p,
        "beta": beta,
    });
    match &cand {
        Some(c) => {
            out["c"] = serde_json::json!(c.c);
            out["ss1_residual"] =
                serde_json::json!(crate::synchronized::sync_residual(&c.c, beta, spec.p));
            out["fully_synchronized"] = serde_json::json!(c.fully_synchronized(1e-12));
            if spec.p == 2.0 {
                out["p2_minimizer_bound"] =
                    serde_json::json!(crate::synchronized::lemma_sync_p2_check(c, beta));
            }
        }
        None => {
            out["c"] = serde_json::Value::Null;
            out["verdict"] = serde_json::json!("no-positive-interaction");
        }
    }
    if spec.p == 2.0 && spec.ell() == 2 {
        let (closed, verdict) = crate::synchronized::sync_p2_two_component(beta)?;
        out["two_component"] = serde_json::json!({
            "verdict": verdict,
            "c": closed.as_ref().map(|c| c.c.clone()),
        });
    }
    if compose {
        let l0 = spec.lambda[0];
        if spec.lambda.iter().any(|&l| l != l0) {
            return Err(Error::invalid(
                "--compose requires equal potentials across components",
            ));
        }
        let c = cand
            .as_ref()
            .ok_or_else(|| Error::no_convergence("no synchronized candidate to compose"))?;
        let (_, domain) = build_domain(&spec, config)?;
        let (u, scalar_res) = scalar_profile_for(&spec, &domain)?;
        let (_, residuals) =
            crate::synchronized::synchronize_with_pde(c, &u, &domain, &spec)?;
        out["composed"] = serde_json::json!({
            "scalar_residual": scalar_res,
            "system_residuals": residuals,
        });
    }
    write_json(&cli.out.join("sync.json"), &out)?;
    Ok(EXIT_OK)
}

fn cmd_check(cli: &Cli, config: &RunConfig, manifest: &RunManifest) -> Result<i32, Error> {
    let spec = load_instance(cli.instance.as_deref())?;
    let (spec, domain) = build_domain(&spec, config)?;
    let b1 = crate::model::validate_b1(&spec.coupling, &spec.partition)?;
    let coercivity = crate::model::check_coercivity(&spec, &domain, crate::model::DEFAULT_MARGIN);
    let (constants, b2) = match crate::model::estimate_constants(&spec, &domain) {
        Ok(constants) => {
            let b2 = match crate::model::check_b2(&spec, &constants, crate::model::DEFAULT_MARGIN) {
                Ok(r) => Some(r),
                Err(e) => {
                    eprintln!("competitive-smallness check unavailable: {e}");
                    None
                }
            };
            (Some(constants), b2)
        }
        Err(e) => {
            eprintln!("constant estimation unavailable: {e}");
            (None, None)
        }
    };
    write_json(
        &cli.out.join("checks.json"),
        &serde_json::json!({
            "manifest": manifest,
            "coercivity": coercivity,
            "b1": b1,
            "constants": constants,
            "b2": b2,
        }),
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepJournal {
    manifest_key: String,
    rows: Vec<(usize, String)>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cli: &Cli,
    config: &RunConfig,
    manifest: &RunManifest,
    param: &str,
    from: Option<f64>,
    to: Option<f64>,
    step: Option<f64>,
    values: Option<&str>,
) -> Result<i32, Error> {
    let spec = load_instance(cli.instance.as_deref())?;
    let beta = &spec.coupling.beta;
    let points: Vec<f64> = match param {
        "beta12" => {
            if spec.ell() < 2 {
                return Err(Error::invalid("beta12 sweep needs at least two components"));
            }
            let (a, b, s) = match (from, to, step) {
                (Some(a), Some(b), Some(s)) if s > 0.0 && b >= a => (a, b, s),
                _ => {
                    return Err(Error::invalid(
                        "beta12 sweep needs --from, --to, and a positive --step",
                    ))
                }
            };
            let count = ((b - a) / s).round() as usize + 1;
            (0..count).map(|k| a + k as f64 * s).collect()
        }
        "p" => values
            .ok_or_else(|| Error::invalid("p sweep needs --values"))?
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad p value {v:?}")))
            })
            .collect::<Result<_, _>>()?,
        other => return Err(Error::invalid(format!("unknown sweep parameter {other:?}"))),
    };

    let manifest_key = format!(
        "{:x}",
        sha2::Sha256::digest(
            serde_json::to_string(&(manifest, param, &points)).expect("key serializes")
        )
    );
    let journal_path = cli.out.join("sweep_journal.json");
    let mut journal = std::fs::read_to_string(&journal_path)
        .ok()
        .and_then(|t| serde_json::from_str::<SweepJournal>(&t).ok())
        .filter(|j| j.manifest_key == manifest_key)
        .unwrap_or(SweepJournal {
            manifest_key,
            rows: Vec::new(),
        });

    let sync_config = config.sync(cli.seed);
    for (idx, &v) in points.iter().enumerate() {
        if journal.rows.iter().any(|(i, _)| *i == idx) {
            continue;
        }
        let (p, b) = match param {
            "beta12" => {
                let mut b = beta.clone();
                b[0][1] = v;
                b[1][0] = v;
                (spec.p, b)
            }
            _ => (v, beta.clone()),
        };
        let row = match crate::synchronized::solve_sync(&b, p, &sync_config) {
            Ok(Some(c)) => {
                let residual = crate::synchronized::sync_residual(&c.c, &b, p);
                let energy = crate::synchronized::j_algebraic(&c.c, &b, p);
                let fully = c.fully_synchronized(1e-12);
                let cs = c
                    .c
                    .iter()
                    .map(|x| format!("{x:.16e}"))
                    .collect::<Vec<_>>()
                    .join(",");
                format!("{v:.16e},{fully},{energy:.16e},{residual:.16e},{cs}")
            }
            Ok(None) => format!("{v:.16e},false,nan,nan,"),
            Err(e) => {
                eprintln!("sweep point {v}: {e}");
                format!("{v:.16e},false,nan,nan,")
            }
        };
        journal.rows.push((idx, row));
        // journal after every point so an interrupted sweep resumes
        write_json(&journal_path, &serde_json::to_value(&journal)?)?;
    }
    journal.rows.sort_by_key(|(i, _)| *i);
    let mut csv = manifest_comment_lines(manifest);
    csv.push_str(&format!("{param},fully_synchronized,energy,residual,c\n"));
    for (_, row) in &journal.rows {
        csv.push_str(row);
        csv.push('\n');
    }
    std::fs::write(cli.out.join("sweep.csv"), csv)?;
    Ok(EXIT_OK)
}

fn cmd_probe(
    cli: &Cli,
    config: &RunConfig,
    manifest: &RunManifest,
    state: Option<&Path>,
) -> Result<i32, Error> {
    let spec = load_instance(cli.instance.as_deref())?;
    let (spec, domain) = build_domain(&spec, config)?;
    let raw = match state {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let (_, u) = crate::discretize::fields_from_csv(&text)?;
            if u.ell() != spec.ell() || u.components[0].values.len() != domain.n {
                return Err(Error::invalid("state file does not match the instance grid"));
            }
            u
        }
        None => {
            // constructed semitrivial candidate: one bump per component,
            // weakest slot zeroed by the probe constructor
            let lo = spec.domain.r_inner;
            let span = spec.domain.outer_radius() - lo;
            let mut u = BlockFunction::zeros(spec.ell(), domain.n);
            for i in 0..spec.ell() {
                let center = lo + span * (0.25 + 0.1 * i as f64);
                if i > 0 {
                    u.components[i] = crate::discretize::ScalarField::from_fn(&domain, |r| {
                        let t = (r - center) / (0.25 * span);
                        (-t * t).exp()
                    });
                }
            }
            crate::nehari::project_to_nehari(&domain, &spec, &u)?
                .ok_or_else(|| Error::no_convergence("constructed candidate escaped"))?
        }
    };
    let (probe, u) = crate::perturb::default_probe(&domain, &spec, &raw)?;
    let report = crate::perturb::escape_test(&domain, &spec, &probe, &u)?;
    let power = spec.p.min(2.0);
    let mut csv = manifest_comment_lines(manifest);
    let q = spec.partition.q();
    let t_header: Vec<String> = (1..=q).map(|h| format!("t_{h}")).collect();
    csv.push_str(&format!(
        "epsilon,{},delta,delta_over_eps_pow\n",
        t_header.join(",")
    ));
    for (eps, t, delta, scaled) in &report.samples {
        let ts = t
            .iter()
            .map(|x| format!("{x:.16e}"))
            .collect::<Vec<_>>()
            .join(",");
        csv.push_str(&format!("{eps:.16e},{ts},{delta:.16e},{scaled:.16e}\n"));
    }
    std::fs::write(cli.out.join("probe.csv"), csv)?;
    write_json(
        &cli.out.join("probe_fit.json"),
        &serde_json::json!({
            "manifest": manifest,
            "power": power,
            "report": report,
            "truncation_warning": !report.truncated.is_empty(),
        }),
    )?;
    let _ = config;
    Ok(EXIT_OK)
}

//! `replica-lab`: seeded verification runs and the aggregate threshold report.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use replica_core::ensembles::{rounding_scaling_experiment, verify_matching, ScalingReport};
use replica_core::hardpair::build_hard_pair;
use replica_core::linalg::{CMat, C64};
use replica_core::observable::{embedded_gap_with_pair, midpoint_threshold, pauli_string, Observable};
use replica_core::report::{
    inequality_suite, sector_suite, threshold_report, twirl_suite, GapInput, ReportConfig,
};
use replica_core::testersim::{indistinguishability_with_spectra, nonincreasing_within_noise, IndistTable};
use replica_core::{Error, MAX_OPERATOR_SIDE};

#[derive(Parser, Debug)]
#[command(name = "replica-lab", version, about = "Seeded finite-dimension checks for the replica threshold of tr(ρ^t)")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and certify the hard pair (p, q) for moment order t.
    Hardpair {
        #[arg(long, value_parser = clap::value_parser!(u32).range(3..=40))]
        t: u32,
    },
    /// Run the exact and Monte Carlo suites at one dimension.
    Verify {
        #[arg(long, value_parser = clap::value_parser!(u32).range(3..=40))]
        t: u32,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        d: u64,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Gram rounding: 0.99-quantile of the trace distance against d.
    RoundScaling {
        /// Rounds the hard spectrum p for this t.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(3..=40))]
        t: u32,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        d_list: Vec<usize>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Induced distances of product POVMs on Γ and Π across d.
    Indist {
        #[arg(long, value_parser = clap::value_parser!(u32).range(3..=40))]
        t: u32,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        d_list: Vec<usize>,
        /// Copies per round; defaults to s.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long = "T", default_value_t = 2)]
        rounds: usize,
        /// Number of random product POVMs per dimension.
        #[arg(long, default_value_t = 8)]
        povms: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Embedded gap experiment for tr(Oρ^t) on the biased block.
    Gap {
        #[arg(long, value_parser = clap::value_parser!(u32).range(3..=40))]
        t: u32,
        /// Ambient dimension; Pauli strings are padded with identities up to it.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value = "identity")]
        observable: String,
        #[arg(long)]
        eta: Option<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Aggregate threshold report with closure-inequality bookkeeping.
    Report {
        #[arg(long, value_parser = clap::value_parser!(u32).range(3..=40))]
        t: u32,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        d_list: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long = "T", default_value_t = 2)]
        rounds: usize,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value = "identity")]
        observable: String,
        #[command(flatten)]
        mc: McArgs,
    },
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long)]
    seed: u64,
}

/// Exit status: 1 for usage and input errors, 2 when root certification
/// fails, 3 when a hard check in `verify` fails.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Certification(anyhow::Error),
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::CertificationFailed(_)) => Failure::Certification(e),
            _ => Failure::Usage(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Certification(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn emit(cli_out: &Option<PathBuf>, body: &str) -> anyhow::Result<()> {
    match cli_out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn csv_only_for(cmd: &str) -> Failure {
    Failure::Usage(anyhow!(
        "--format csv is only available for round-scaling and indist, not {cmd}"
    ))
}

fn check_dims(ds: &[usize]) -> anyhow::Result<()> {
    if ds.is_empty() {
        bail!("--d-list must not be empty");
    }
    if let Some(d) = ds.iter().find(|&&d| d < 2) {
        bail!("dimension {d} < 2");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let json = cli.format == Format::Json;
    match cli.command {
        Command::Hardpair { t } => {
            if !json {
                return Err(csv_only_for("hardpair"));
            }
            let hp = build_hard_pair(t)?;
            emit(&cli.out, &to_json(&hp)?)?;
        }
        Command::Verify { t, d, mc } => {
            if !json {
                return Err(csv_only_for("verify"));
            }
            let report = verify(t, d as usize, mc.trials as usize, mc.seed)?;
            emit(&cli.out, &to_json(&report)?)?;
            let failed: Vec<&str> = report
                .suites
                .iter()
                .filter(|s| s.hard && s.status == Status::Fail)
                .map(|s| s.name.as_str())
                .collect();
            if !failed.is_empty() {
                return Err(Failure::Check(format!("hard suites failed: {}", failed.join(", "))));
            }
        }
        Command::RoundScaling { t, d_list, mc } => {
            check_dims(&d_list)?;
            let hp = build_hard_pair(t)?;
            let r = rounding_scaling_experiment(&hp.p.to_f64(), &d_list, mc.trials as usize, mc.seed)?;
            let body = if json { to_json(&r)? } else { scaling_csv(&r)? };
            emit(&cli.out, &body)?;
        }
        Command::Indist {
            t,
            d_list,
            k,
            rounds,
            povms,
            seed,
        } => {
            check_dims(&d_list)?;
            if rounds == 0 || povms == 0 {
                return Err(Failure::Usage(anyhow!("--T and --povms must be positive")));
            }
            let hp = build_hard_pair(t)?;
            let k = k.unwrap_or(hp.s as usize);
            if k == 0 {
                return Err(Failure::Usage(anyhow!("--k must be positive")));
            }
            let mut tables = Vec::new();
            for &d in &d_list {
                enforce_cap(d, k * rounds)?;
                tables.push(indistinguishability_with_spectra(
                    &hp.p, &hp.q, k, d, rounds, seed, povms,
                )?);
            }
            let body = if json {
                to_json(&IndistOutput {
                    t,
                    nonincreasing: nonincreasing_within_noise(&tables, 4.0),
                    tables,
                })?
            } else {
                indist_csv(&tables)?
            };
            emit(&cli.out, &body)?;
        }
        Command::Gap {
            t,
            d,
            observable,
            eta,
            mc,
        } => {
            if !json {
                return Err(csv_only_for("gap"));
            }
            let o = resolve_observable(&observable, d.unwrap_or(64))?;
            let eta = eta_for(&o, eta)?;
            let hp = build_hard_pair(t)?;
            let report = embedded_gap_with_pair(&hp, &o, eta, mc.trials as usize, mc.seed)?;
            let threshold = midpoint_threshold(&report)?;
            emit(
                &cli.out,
                &to_json(&GapOutput {
                    observable,
                    separated: report.separated(),
                    means_match: report.means_match(),
                    hits_ok: report.hits_ok(),
                    report,
                    threshold,
                })?,
            )?;
        }
        Command::Report {
            t,
            d_list,
            k,
            rounds,
            eta,
            observable,
            mc,
        } => {
            if !json {
                return Err(csv_only_for("report"));
            }
            check_dims(&d_list)?;
            if k == 0 || rounds == 0 {
                return Err(Failure::Usage(anyhow!("--k and --T must be positive")));
            }
            let gap_d = *d_list.iter().max().expect("nonempty");
            let o = resolve_observable(&observable, gap_d)?;
            let eta = eta_for(&o, eta)?;
            let cfg = ReportConfig::new(t, d_list, k, rounds, mc.trials as usize, mc.seed);
            let gap = GapInput {
                label: observable,
                observable: &o,
                eta,
            };
            let report = threshold_report(&cfg, Some(gap))?;
            emit(&cli.out, &to_json(&report)?)?;
        }
    }
    Ok(())
}

fn enforce_cap(d: usize, n: usize) -> anyhow::Result<()> {
    let side = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if side > MAX_OPERATOR_SIDE as u128 {
        bail!("d^(kT) = {d}^{n} exceeds the dense cap of {MAX_OPERATOR_SIDE}");
    }
    Ok(())
}

#[derive(Serialize)]
struct IndistOutput {
    t: u32,
    nonincreasing: bool,
    tables: Vec<IndistTable>,
}

#[derive(Serialize)]
struct GapOutput {
    observable: String,
    separated: bool,
    means_match: bool,
    hits_ok: bool,
    report: replica_core::observable::GapReport,
    threshold: replica_core::observable::MidpointThreshold,
}

fn scaling_csv(r: &ScalingReport) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["d", "trials", "quantile99", "mean", "mean_se", "gram_fail_rate"])?;
    for row in &r.rows {
        w.write_record([
            row.d.to_string(),
            row.trials.to_string(),
            row.quantile99.to_string(),
            row.mean.value.to_string(),
            row.mean.std_error.to_string(),
            row.gram_fail_rate.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn indist_csv(tables: &[IndistTable]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for table in tables {
        for row in &table.rows {
            w.serialize(row)?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Matrix file: `{"dim": n, "re": [[..]..], "im": [[..]..]}`, `im` optional.
#[derive(Deserialize)]
struct MatrixFile {
    dim: usize,
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Option<Vec<Vec<f64>>>,
}

fn load_matrix(path: &str) -> anyhow::Result<CMat> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let f: MatrixFile = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
    let rows_ok = |m: &Vec<Vec<f64>>| m.len() == f.dim && m.iter().all(|r| r.len() == f.dim);
    if f.dim == 0 || !rows_ok(&f.re) || f.im.as_ref().is_some_and(|im| !rows_ok(im)) {
        bail!("{path}: re/im must be {0}×{0}", f.dim);
    }
    Ok(CMat::from_fn(f.dim, f.dim, |i, j| {
        C64::new(f.re[i][j], f.im.as_ref().map_or(0.0, |im| im[i][j]))
    }))
}

/// `identity`, `pauli:<letters>` or `file:<path>`. Pauli strings shorter than
/// `log₂ d` are padded with trailing identities.
fn resolve_observable(spec: &str, d: usize) -> anyhow::Result<Observable> {
    if spec == "identity" {
        if d < 2 || d > MAX_OPERATOR_SIDE {
            bail!("identity observable needs 2 ≤ d ≤ {MAX_OPERATOR_SIDE}");
        }
        return Ok(Observable::identity(d)?);
    }
    if let Some(letters) = spec.strip_prefix("pauli:") {
        let letters = letters.to_ascii_uppercase();
        if !d.is_power_of_two() {
            bail!("Pauli observable needs d a power of two, got {d}");
        }
        let qubits = d.trailing_zeros() as usize;
        let padded = if letters.len() < qubits {
            format!("{letters}{}", "I".repeat(qubits - letters.len()))
        } else {
            letters
        };
        return Ok(pauli_string(&padded)?);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        return Ok(Observable::new(load_matrix(path)?)?);
    }
    bail!("unknown observable {spec:?}: expected identity, pauli:<letters> or file:<path>")
}

/// Default η is the largest the observable supports, `‖O‖₁/d` capped at 1.
fn eta_for(o: &Observable, eta: Option<f64>) -> anyhow::Result<f64> {
    let eta = eta.unwrap_or_else(|| (o.trace_norm / o.d as f64).min(1.0));
    if !(eta > 0.0 && eta <= 1.0) {
        bail!("--eta must lie in (0, 1], got {eta}");
    }
    Ok(eta)
}

#[derive(Serialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Serialize)]
struct Suite {
    name: String,
    /// Exact or algebraic checks fail the run; Monte Carlo checks are reported.
    hard: bool,
    status: Status,
    detail: serde_json::Value,
}

#[derive(Serialize)]
struct VerifyReport {
    t: u32,
    d: usize,
    seed: u64,
    trials: usize,
    suites: Vec<Suite>,
}

fn suite<T: Serialize>(
    name: &str,
    hard: bool,
    r: replica_core::Result<T>,
    pass: impl FnOnce(&T) -> bool,
) -> anyhow::Result<Suite> {
    Ok(match r {
        Ok(v) => Suite {
            name: name.into(),
            hard,
            status: if pass(&v) { Status::Pass } else { Status::Fail },
            detail: serde_json::to_value(&v)?,
        },
        Err(e @ (Error::SizeCap { .. } | Error::Precondition(_))) => Suite {
            name: name.into(),
            hard,
            status: Status::Skipped,
            detail: serde_json::Value::String(e.to_string()),
        },
        Err(e) => return Err(e.into()),
    })
}

fn verify(t: u32, d: usize, trials: usize, seed: u64) -> Result<VerifyReport, Failure> {
    use replica_core::mc::derive_seed;
    let hp = build_hard_pair(t)?;
    let s = hp.s as usize;
    let mut suites = vec![
        suite("hardpair", true, Ok(replica_core::report::HardPairSummary::new(&hp)), |h| {
            h.max_powersum_diff <= 1e-12 && h.gap >= h.delta_t && h.delta_t > 0.0
        })?,
        suite("matching", true, verify_matching(&hp.p, &hp.q, d, s), |m| m.matches(1e-10))?,
        suite("sector", true, sector_suite(4, &[d]), |r| r.passed == r.checked)?,
        suite("inequality", true, inequality_suite(50, derive_seed(seed, 4)), |r| r.all_hold())?,
    ];
    let rounding = rounding_scaling_experiment(&hp.p.to_f64(), &[64, 128], trials, derive_seed(seed, 1));
    suites.push(suite("rounding", true, rounding, |r| r.bound_never_violated())?);
    let twirls = twirl_suite(&[2, 3, 4], trials, derive_seed(seed, 5));
    suites.push(suite("twirl", false, twirls, |rows| rows.iter().all(|r| r.passes()))?);
    Ok(VerifyReport {
        t,
        d,
        seed,
        trials,
        suites,
    })
}

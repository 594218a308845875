use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use plateau_core::complex::{whitney_decompose, Complex};
use plateau_core::driver::{minimize, write_outputs, ProblemConfig};
use plateau_core::dyadic::{DomainOracle, OpenBox};
use plateau_core::ff::{ff_project, FfParams};
use plateau_core::grassmannian::selftest;
use plateau_core::measure::{hausdorff_estimate, quasimin_audit, zeta_gauge, Integrand, QuasiminParams, SampledSet};
use plateau_core::rng::stream;
use plateau_core::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "plateau", version, about = "Dyadic complexes, projections and a Plateau-problem driver")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for written outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Format of what is printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Check the complex axioms on a JSON complex.
    ValidateComplex { file: PathBuf },
    /// Whitney decomposition of an open box.
    Whitney {
        /// Lower corner then upper corner, 2n numbers.
        #[arg(long = "box", num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
        bx: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        depth: u32,
    },
    /// Grassmannian identity, Haar and disintegration checks.
    GrassSelftest {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Projection gauge and measure estimate of a sampled set.
    Gauge {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1000)]
        planes: usize,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Project a sampled set onto the d-skeleton of a complex.
    Ffproject {
        #[arg(long)]
        complex: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 20.0)]
        lambda: f64,
    },
    /// Run the direct-method minimization.
    Minimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Quasiminimality audit of a deformation.
    Audit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        deform: PathBuf,
        /// Center coordinates then radius.
        #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
        ball: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0.0)]
        h: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long)]
        delta: Option<f64>,
    },
}

const EXIT_VIOLATION: u8 = 2;
const EXIT_INPUT: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::CenterExhausted { .. }
            | Error::AxiomViolation { .. }
            | Error::MissingCenter(_)
            | Error::IntegrandOutOfBounds { .. },
        ) => EXIT_VIOLATION,
        _ => EXIT_INPUT,
    }
}

fn read_set(path: &Path, d: usize) -> anyhow::Result<SampledSet> {
    let f = std::fs::File::open(path).map_err(Error::from).with_context(|| format!("opening {}", path.display()))?;
    Ok(SampledSet::read_csv(f, d).with_context(|| format!("reading {}", path.display()))?)
}

fn out_dir(cli: &Cli) -> anyhow::Result<Option<&Path>> {
    if let Some(d) = &cli.out_dir {
        std::fs::create_dir_all(d).map_err(Error::from)?;
    }
    Ok(cli.out_dir.as_deref())
}

fn print_json(v: &serde_json::Value) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::ValidateComplex { file } => {
            let text = std::fs::read_to_string(file).map_err(Error::from)?;
            let k = Complex::from_json(&text)?;
            let r = k.validate();
            print_json(&serde_json::json!({ "cells": k.len(), "report": r }));
            Ok(r.valid)
        }
        Command::Whitney { bx, depth } => {
            if bx.is_empty() || bx.len() % 2 != 0 {
                return Err(Error::InvalidInput("--box needs 2n numbers".into()).into());
            }
            let n = bx.len() / 2;
            let domain = OpenBox::new(bx[..n].to_vec(), bx[n..].to_vec())?;
            let k = whitney_decompose(&domain, *depth)?;
            let r = k.validate();
            let sandwich = k
                .skeleton(n)
                .iter()
                .all(|a| a.side_f64() <= domain.dist_inf_to_complement(&a.center_f64()).min(1.0) + 1e-15);
            if let Some(dir) = out_dir(cli)? {
                std::fs::write(dir.join("whitney.json"), k.to_json()?).map_err(Error::from)?;
            }
            print_json(&serde_json::json!({
                "cells": k.len(),
                "max_level": k.max_level(),
                "valid": r.valid,
                "sandwich": sandwich,
            }));
            Ok(r.valid && sandwich)
        }
        Command::GrassSelftest { samples } => {
            let checks = selftest(cli.seed, *samples)?;
            print_json(&serde_json::to_value(&checks)?);
            Ok(checks.iter().all(|c| c.pass))
        }
        Command::Gauge { input, d, planes, delta } => {
            let s = read_set(input, *d)?;
            let delta = delta.unwrap_or_else(|| s.default_delta());
            let mut rng = stream(cli.seed, "cli/gauge", 0);
            let zeta = zeta_gauge(&s, *planes, delta, &mut rng)?;
            let h = hausdorff_estimate(&s, delta)?;
            print_json(&serde_json::json!({
                "zeta": zeta.value,
                "zeta_std_error": zeta.std_error,
                "planes": zeta.samples,
                "hausdorff": h,
                "delta": delta,
            }));
            Ok(true)
        }
        Command::Ffproject { complex, input, d, lambda } => {
            let text = std::fs::read_to_string(complex).map_err(Error::from)?;
            let k = Complex::from_json(&text)?;
            let s = read_set(input, *d)?;
            let params = FfParams { lambda: *lambda, ..FfParams::default() };
            let mut rng = stream(cli.seed, "cli/ffproject", 0);
            let r = ff_project(&k, *d, &s, &params, &mut rng)?;
            if let Some(dir) = out_dir(cli)? {
                r.mapped.write_csv(std::fs::File::create(dir.join("ff.csv")).map_err(Error::from)?)?;
                std::fs::write(dir.join("diagnostics.json"), r.diagnostics_json()?).map_err(Error::from)?;
            }
            let ok = r.preserved == s.len() && r.skeleton_distance <= 1e-9;
            match cli.format {
                Format::Csv => r.mapped.write_csv(std::io::stdout())?,
                Format::Off => bail!(Error::InvalidInput("ffproject has no OFF output".into())),
                Format::Json => print_json(&serde_json::json!({
                    "samples": s.len(),
                    "preserved": r.preserved,
                    "skeleton_distance": r.skeleton_distance,
                    "ratio_ledger": r.ratio_ledger,
                })),
            }
            Ok(ok)
        }
        Command::Minimize { config } => {
            let cfg = ProblemConfig::load(config)?;
            let out = minimize(&cfg)?;
            if let Some(dir) = out_dir(cli)? {
                write_outputs(dir, &out)?;
            }
            match cli.format {
                Format::Csv => out.final_set.write_csv(std::io::stdout())?,
                Format::Off => out.graph.clone().unwrap_or_default().write_off(std::io::stdout())?,
                Format::Json => print_json(&serde_json::json!({
                    "summary": out.summary,
                    "iterations": out.reports,
                })),
            }
            let monotone = out.summary.accepted_energies.windows(2).all(|w| w[1] <= w[0]);
            Ok(monotone && out.summary.anchors_conserved)
        }
        Command::Audit { input, deform, ball, kappa, h, d, delta } => {
            let s = read_set(input, *d)?;
            let images = read_set(deform, *d)?;
            if images.len() != s.len() {
                return Err(Error::DimensionMismatch { expected: s.len(), got: images.len() }.into());
            }
            if ball.len() != s.n + 1 {
                return Err(Error::DimensionMismatch { expected: s.n + 1, got: ball.len() }.into());
            }
            let params = QuasiminParams { kappa: *kappa, h: *h, scale: None };
            let delta = delta.unwrap_or_else(|| s.default_delta());
            let a = quasimin_audit(
                &s,
                &images.points,
                &ball[..s.n],
                ball[s.n],
                &params,
                &Integrand::hausdorff(),
                delta,
                0.05,
                None,
            )?;
            print_json(&serde_json::to_value(&a)?);
            Ok(a.satisfied)
        }
    }
}

//! `snkit` command line: build and serialize networks, analyze their static
//! cost and connectivity, benchmark them single-threaded, match comparison
//! structures to a budget, and run the self-verification suites.

mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snkit_core::analysis::{connectivity_mask, count_flops, DependencyMask, StackLayer};
use snkit_core::arch::{
    build_comparison, build_shufflenet, build_shufflenet_with_channels, Layer, NetworkSpec,
};
use snkit_core::bench::{run_benchmark, speedup_at, BenchReport};
use snkit_core::error::Error as CoreError;
use snkit_core::model::{load_model, save_model};
use snkit_core::units::ComparisonKind;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_IO: u8 = 3;

enum CliError {
    Usage(String),
    Verify(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Verify(_) => EXIT_VERIFY,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Verify(m) | CliError::Io(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(_) | CoreError::CorruptModel(_) => CliError::Io(e.to_string()),
            CoreError::BenchContract(_) => CliError::Verify(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "snkit",
    version,
    about = "Channel-shuffle CNN kernels: model builder, static analyzer, single-thread benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a network and write it as an SNF1 model file.
    Build(BuildArgs),
    /// Per-layer mult-adds, parameters, bytes and arithmetic intensity.
    Analyze(AnalyzeArgs),
    /// Time forward passes, single-threaded, across input resolutions.
    Bench(BenchArgs),
    /// Match comparison structures to a reference complexity budget.
    Compare(CompareArgs),
    /// Run the oracle-equivalence and structural self-check suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Args)]
struct BuildArgs {
    /// Group count of the pointwise convolutions.
    #[arg(long, default_value_t = 3)]
    groups: usize,
    /// Width multiplier on every layer's channels.
    #[arg(long, default_value_t = 1.0)]
    scale: f32,
    /// Halve the stride-1 unit count of every stage.
    #[arg(long)]
    shallow: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Scale-1 stage channels `s2,s3,s4` for untabulated group counts.
    #[arg(long, value_name = "S2,S3,S4")]
    stage_channels: Option<String>,
    /// Output model path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// SNF1 model file to analyze.
    #[arg(long)]
    model: PathBuf,
    /// Input resolution as HxW.
    #[arg(long, default_value = "224x224")]
    input: String,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Also emit the channel-dependency masks of each unit's pointwise pair.
    #[arg(long)]
    connectivity: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// SNF1 model file(s); repeat the flag to bench several models.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// Comma-separated HxW list.
    #[arg(long, default_value = "224x224,480x640,720x1280")]
    resolutions: String,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Fail (exit 2) if a timing invariant is violated.
    #[arg(long)]
    check: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long, default_value_t = 1.0)]
    scale: f32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run a single suite: tensor, shuffle, conv, bn or connectivity.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Inject a known defect to prove the harness fails (hidden).
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            // Help and version are not usage errors.
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn parse_resolution(s: &str) -> Result<(usize, usize), CliError> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| CliError::Usage(format!("resolution '{s}' is not HxW")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("bad resolution component '{v}'")))
    };
    Ok((parse(h)?, parse(w)?))
}

fn parse_resolutions(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(',').map(parse_resolution).collect()
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_build(args: BuildArgs) -> Result<(), CliError> {
    let net = match &args.stage_channels {
        Some(raw) => {
            let parts: Vec<usize> = raw
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| CliError::Usage(format!("bad stage channel '{p}'")))
                })
                .collect::<Result<_, _>>()?;
            let [s2, s3, s4] = parts[..] else {
                return Err(CliError::Usage(
                    "--stage-channels needs exactly three values".into(),
                ));
            };
            build_shufflenet_with_channels(
                args.groups,
                args.scale,
                args.shallow,
                args.seed,
                (s2, s3, s4),
            )?
        }
        None => build_shufflenet(args.groups, args.scale, args.shallow, args.seed)?,
    };
    save_model(&net, &args.out)?;

    let report = count_flops(&net, (224, 224))?;
    println!("model: {}", net.name());
    println!(
        "groups: {}  scale: {}  shallow: {}  seed: {}",
        net.groups, net.scale, net.shallow, net.seed
    );
    println!(
        "units: {}  weighted layers: {}  stage widths: {:?}",
        net.unit_count(),
        net.weighted_layer_count(),
        net.stage_widths()
    );
    println!("layers (output shapes at 224x224):");
    for row in &report.rows {
        println!(
            "  {:<20} {:<12} {}x{}x{}x{}",
            row.name, row.kind, row.out_shape.0, row.out_shape.1, row.out_shape.2, row.out_shape.3
        );
    }
    println!(
        "total mult-adds @224x224: {} ({:.1} M)  params: {}",
        report.total_mult_adds,
        report.total_mult_adds as f64 / 1e6,
        report.total_params
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn classify(mask: &DependencyMask, groups: usize) -> String {
    if mask.is_fully_connected() {
        "fully-connected".into()
    } else if *mask == DependencyMask::block_diagonal(mask.out_channels, mask.in_channels, groups) {
        format!("block-diagonal ({groups} blocks)")
    } else {
        "partially-connected".into()
    }
}

fn connectivity_section(net: &NetworkSpec) -> Result<String, CliError> {
    let mut out = String::from("\nconnectivity of each unit's pointwise pair:\n");
    let mut stage = 1usize;
    let mut unit = 0usize;
    for layer in &net.layers {
        let Layer::ShuffleUnit { spec, .. } = layer else {
            continue;
        };
        if spec.stride == 2 {
            stage += 1;
            unit = 1;
        } else {
            unit += 1;
        }
        let pw1 = StackLayer::GroupedPointwise {
            in_channels: spec.in_channels,
            out_channels: spec.bottleneck_channels,
            groups: if spec.first_pw_grouped { spec.groups } else { 1 },
        };
        let pw2 = StackLayer::GroupedPointwise {
            in_channels: spec.bottleneck_channels,
            out_channels: spec.branch_channels(),
            groups: spec.groups,
        };
        let shuffle = StackLayer::Shuffle {
            channels: spec.bottleneck_channels,
            groups: spec.groups,
        };
        let without = connectivity_mask(&[pw1, pw2])?;
        let with = connectivity_mask(&[pw1, shuffle, pw2])?;
        out.push_str(&format!(
            "  stage{stage}.unit{unit}: without shuffle -> {}, with shuffle -> {}\n",
            classify(&without, spec.groups),
            classify(&with, spec.groups)
        ));
        if with.in_channels <= 32 && with.out_channels <= 32 {
            out.push_str(&with.to_grid());
        }
    }
    Ok(out)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let net = load_model(&args.model)?;
    let input = parse_resolution(&args.input)?;
    let report = count_flops(&net, input)?;
    let mut content = match args.format {
        Format::Table => report.to_table(),
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    if args.connectivity {
        if args.format == Format::Table {
            content.push_str(&connectivity_section(&net)?);
        } else {
            return Err(CliError::Usage(
                "--connectivity output is table-only".into(),
            ));
        }
    }
    write_or_print(&args.out, &content)
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    match std::env::var("SNK_THREADS") {
        Err(_) => {}
        Ok(v) if v == "1" => {}
        Ok(v) => {
            return Err(CliError::Usage(format!(
                "SNK_THREADS={v} conflicts with the single-thread timing contract; unset it or set it to 1"
            )))
        }
    }
    if args.format == Format::Csv {
        return Err(CliError::Usage("bench reports are table or json".into()));
    }
    let resolutions = parse_resolutions(&args.resolutions)?;
    if args.warmup < 3 || args.iters < 10 {
        return Err(CliError::Usage(format!(
            "need --warmup >= 3 and --iters >= 10, got {} and {}",
            args.warmup, args.iters
        )));
    }

    let mut reports: Vec<(NetworkSpec, BenchReport)> = Vec::new();
    for path in &args.model {
        let net = load_model(path)?;
        let report = run_benchmark(&net, &resolutions, args.warmup, args.iters)?;
        reports.push((net, report));
    }

    let mut content = String::new();
    for (_, report) in &reports {
        content.push_str(&match args.format {
            Format::Json => report.to_json() + "\n",
            _ => report.to_table() + "\n",
        });
    }

    // With several models, relate the largest and smallest by mult-adds.
    if reports.len() >= 2 && args.format == Format::Table {
        let by_cost = |r: &(NetworkSpec, BenchReport)| {
            r.1.rows.first().map(|row| row.mult_adds).unwrap_or(0)
        };
        let big = reports.iter().max_by_key(|r| by_cost(r)).unwrap();
        let small = reports.iter().min_by_key(|r| by_cost(r)).unwrap();
        for &(h, w) in &resolutions {
            if let Some(sp) = speedup_at(&big.1, &small.1, h, w) {
                content.push_str(&format!(
                    "{} vs {} at {}x{}: measured speedup {:.2}x, theoretical {:.2}x\n",
                    big.1.model, small.1.model, h, w, sp.measured, sp.theoretical
                ));
            }
        }
    }
    write_or_print(&args.out, &content)?;

    if args.check {
        run_bench_checks(&reports, &resolutions)?;
        println!("bench checks passed");
    }
    Ok(())
}

fn run_bench_checks(
    reports: &[(NetworkSpec, BenchReport)],
    resolutions: &[(usize, usize)],
) -> Result<(), CliError> {
    for (_, report) in reports {
        report.check_resolution_monotonicity()?;
    }
    // At each resolution, time must not decrease as mult-adds grow, and the
    // measured extreme-model speedup must stay within the theoretical ratio.
    for &(h, w) in resolutions {
        let mut rows: Vec<_> = reports
            .iter()
            .filter_map(|(_, rep)| {
                rep.rows
                    .iter()
                    .find(|r| r.height == h && r.width == w)
                    .map(|r| (rep.model.clone(), r.mult_adds, r.median_ms))
            })
            .collect();
        rows.sort_by_key(|r| r.1);
        for pair in rows.windows(2) {
            if pair[1].2 < pair[0].2 {
                return Err(CliError::Verify(format!(
                    "at {h}x{w}, {} ({} mult-adds) ran faster than {} ({} mult-adds)",
                    pair[1].0, pair[1].1, pair[0].0, pair[0].1
                )));
            }
        }
        if rows.len() >= 2 {
            let (first, last) = (&rows[0], &rows[rows.len() - 1]);
            let measured = last.2 / first.2;
            let theoretical = last.1 as f64 / first.1 as f64;
            if measured < 1.0 || measured > theoretical {
                return Err(CliError::Verify(format!(
                    "at {h}x{w}, measured speedup {measured:.2}x outside [1, {theoretical:.2}]"
                )));
            }
        }
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let reference = build_shufflenet(args.groups, args.scale, false, args.seed)?;
    let budget = count_flops(&reference, (224, 224))?.total_mult_adds;
    let kinds = [
        ComparisonKind::VggLike,
        ComparisonKind::ResNet,
        ComparisonKind::ResNeXt,
        ComparisonKind::XceptionLike,
    ];

    let mut rows = Vec::new();
    for kind in kinds {
        let b = build_comparison(kind, &reference)?;
        rows.push((
            kind.name().to_string(),
            b.network.stage_widths(),
            b.achieved,
            b.rel_err,
            b.tolerance,
        ));
    }
    rows.push((
        reference.name(),
        reference.stage_widths(),
        budget,
        0.0,
        0.0,
    ));

    match args.format {
        Format::Json => {
            let items: Vec<String> = rows
                .iter()
                .map(|(name, widths, achieved, rel, tol)| {
                    format!(
                        "{{\"structure\":\"{name}\",\"stage_widths\":{widths:?},\"mult_adds\":{achieved},\"rel_err\":{rel:.4},\"tolerance\":{tol:.2}}}"
                    )
                })
                .collect();
            println!("[{}]", items.join(","));
        }
        _ => {
            println!(
                "reference: {} ({} mult-adds at 224x224)",
                reference.name(),
                budget
            );
            println!(
                "{:<16} {:>22} {:>14} {:>9} {:>10}",
                "structure", "stage widths", "mult_adds", "rel_err", "tolerance"
            );
            for (name, widths, achieved, rel, tol) in &rows {
                println!(
                    "{:<16} {:>22} {:>14} {:>9.4} {:>10.2}",
                    name,
                    format!("{widths:?}"),
                    achieved,
                    rel,
                    tol
                );
            }
        }
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    if let Some(s) = &args.suite {
        if !verify::SUITE_NAMES.contains(&s.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown suite '{s}'; known: {}",
                verify::SUITE_NAMES.join(", ")
            )));
        }
    }
    let fault = match &args.inject_fault {
        None => None,
        Some(name) => Some(verify::Fault::parse(name).ok_or_else(|| {
            CliError::Usage(format!("unknown fault '{name}'"))
        })?),
    };

    let results = verify::run_suites(args.suite.as_deref(), args.seed, fault);
    let mut failed = 0usize;
    for r in &results {
        if r.failures.is_empty() {
            println!("suite {:<13} {:>5} cases  ok", r.name, r.cases);
        } else {
            failed += r.failures.len();
            println!(
                "suite {:<13} {:>5} cases  {} FAILED",
                r.name,
                r.cases,
                r.failures.len()
            );
            println!("  first failure: {}", r.failures[0]);
        }
    }
    if failed > 0 {
        return Err(CliError::Verify(format!("{failed} case(s) failed")));
    }
    Ok(())
}

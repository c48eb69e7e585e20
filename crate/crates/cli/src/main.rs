//! `gts`: compile, run, cross-check and benchmark stencil programs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use stencil_forge::backends::{BackendId, BuildOptions, FaultInjection};
use stencil_forge::frontend::{parse_external_value, parse_program, ExternalsBinding, Item, SourceProgram};
use stencil_forge::ir::{dump_definition, dump_implementation};
use stencil_forge::kernels;
use stencil_forge::runtime::{compile_stencil_with, CompileError, CompiledStencil, InvocationArgs, ValidationPolicy};
use stencil_forge::storage::{read_gtsf_with_layout, write_gtsf, FieldStorage, Fill};

#[derive(Parser)]
#[command(name = "gts", version, about = "Stencil DSL compiler and runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a stencil, optionally dumping its IR or generated source.
    Compile(CompileArgs),
    /// Run a stencil once on fields stored as GTSF files.
    Run(RunArgs),
    /// Run a stencil on identical random inputs with several backends and compare.
    Diff(DiffArgs),
    /// Time the built-in kernels across backends and domain sizes.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct Source {
    /// Source file.
    file: PathBuf,
    /// Stencil to compile; defaults to the only stencil in the file.
    #[arg(long)]
    stencil: Option<String>,
    /// Compile-time external bindings.
    #[arg(long = "externals", value_name = "NAME=VALUE", num_args = 1.., value_delimiter = ',')]
    externals: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpStage {
    Definition,
    Implementation,
}

#[derive(clap::Args)]
struct CompileArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "debug")]
    backend: BackendId,
    #[arg(long = "dump-ir", value_enum)]
    dump_ir: Option<DumpStage>,
    /// Write the generated native source here (gen backend only).
    #[arg(long = "emit-source", value_name = "PATH")]
    emit_source: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "debug")]
    backend: BackendId,
    /// Input field from a GTSF file.
    #[arg(long = "in", value_name = "NAME=PATH")]
    inputs: Vec<String>,
    /// Field to write to a GTSF file after the run.
    #[arg(long = "out", value_name = "NAME=PATH")]
    outputs: Vec<String>,
    #[arg(long = "scalar", value_name = "NAME=VALUE")]
    scalars: Vec<String>,
    #[arg(long, value_name = "I,J,K")]
    domain: Option<String>,
    /// Origin applied to every field.
    #[arg(long, value_name = "I,J,K")]
    origin: Option<String>,
    /// Skip argument checks inside the call (they are performed beforehand).
    #[arg(long = "no-validate")]
    no_validate: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    OffByOne,
}

#[derive(clap::Args)]
struct DiffArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_delimiter = ',', default_value = "debug,vec,gen")]
    backends: Vec<BackendId>,
    /// Domain sizes: `N` for N^3 or `NxNxK`.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    sizes: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    #[arg(long = "scalar", value_name = "NAME=VALUE")]
    scalars: Vec<String>,
    #[arg(long = "inject-fault", value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "hdiff,vadv")]
    kernels: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "debug,vec,gen")]
    backends: Vec<BackendId>,
    /// Horizontal sizes; domains are N x N x levels.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 80)]
    levels: usize,
    /// Timed repetitions after three warm-up calls.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(5..))]
    reps: u32,
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    #[arg(long = "no-validate")]
    no_validate: bool,
}

/// Failures mapped to exit codes: 1 for compile diagnostics and failed
/// comparisons, 2 for runtime argument errors.
enum Failure {
    Compile(String),
    Runtime(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Run(a) => cmd_run(a),
        Command::Diff(a) => cmd_diff(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Compile(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, msg).exit()
}

fn split_pair(s: &str) -> anyhow::Result<(&str, &str)> {
    s.split_once('=').with_context(|| format!("expected NAME=VALUE, got `{s}`"))
}

fn parse_triple(s: &str) -> anyhow::Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split([',', 'x'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("expected three non-negative integers, got `{s}`"))?;
    match parts[..] {
        [i, j, k] => Ok([i, j, k]),
        _ => bail!("expected three integers, got `{s}`"),
    }
}

fn load_source(path: &Path) -> anyhow::Result<SourceProgram> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SourceProgram::with_path(text, path.display().to_string()))
}

fn stencil_name(program: &SourceProgram, requested: &Option<String>) -> Result<String, Failure> {
    if let Some(name) = requested {
        return Ok(name.clone());
    }
    let items = parse_program(program).map_err(|d| Failure::Compile(d.render(program.display_path())))?;
    let names: Vec<String> = items
        .into_iter()
        .filter_map(|i| match i {
            Item::Stencil(s) => Some(s.name),
            Item::Function(_) => None,
        })
        .collect();
    match &names[..] {
        [one] => Ok(one.clone()),
        [] => Err(Failure::Other(anyhow::anyhow!("{} defines no stencil", program.display_path()))),
        _ => Err(Failure::Other(anyhow::anyhow!("{} defines several stencils; pick one with --stencil", program.display_path()))),
    }
}

fn externals(pairs: &[String]) -> Result<ExternalsBinding, Failure> {
    let mut ext = ExternalsBinding::new();
    for p in pairs {
        let (k, v) = split_pair(p)?;
        let value = parse_external_value(k, v).map_err(|d| Failure::Compile(d.render("--externals")))?;
        ext.insert(k.to_string(), value);
    }
    Ok(ext)
}

fn compile(
    program: &SourceProgram,
    name: &str,
    backend: BackendId,
    ext: &ExternalsBinding,
    opts: &BuildOptions,
) -> Result<CompiledStencil, Failure> {
    match compile_stencil_with(program, name, backend, ext, opts) {
        Ok(s) => {
            for w in s.warnings() {
                eprintln!("{}", w.render(program.display_path()));
            }
            Ok(s)
        }
        Err(CompileError::Diagnostics(diags)) => Err(Failure::Compile(
            diags.iter().map(|d| d.render(program.display_path())).collect::<Vec<_>>().join("\n"),
        )),
        Err(e) => Err(Failure::Compile(format!("error: {e}"))),
    }
}

fn compile_source(source: &Source, backend: BackendId, opts: &BuildOptions) -> Result<CompiledStencil, Failure> {
    let program = load_source(&source.file)?;
    let name = stencil_name(&program, &source.stencil)?;
    compile(&program, &name, backend, &externals(&source.externals)?, opts)
}

fn cmd_compile(args: CompileArgs) -> Result<ExitCode, Failure> {
    if args.emit_source.is_some() && args.backend != BackendId::Gen {
        usage_error("--emit-source requires --backend gen");
    }
    let stencil = compile_source(&args.source, args.backend, &BuildOptions::default())?;
    match args.dump_ir {
        Some(DumpStage::Definition) => print!("{}", dump_definition(stencil.definition())),
        Some(DumpStage::Implementation) => print!("{}", dump_implementation(stencil.implementation())),
        None => {}
    }
    if let Some(path) = &args.emit_source {
        let src = stencil.build_info().source.as_deref().unwrap_or_default();
        std::fs::write(path, src).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(hit) = stencil.build_info().cache_hit {
        println!("cache: {}", if hit { "hit" } else { "miss" });
    }
    eprintln!("compiled `{}` for {} ({})", stencil.definition().name, stencil.backend(), stencil.fingerprint().short());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Failure> {
    let stencil = compile_source(&args.source, args.backend, &BuildOptions::default())?;
    let layout = stencil.backend().default_layout();
    let domain = args.domain.as_deref().map(parse_triple).transpose()?;
    let origin = args.origin.as_deref().map(parse_triple).transpose()?;

    let mut fields: BTreeMap<String, FieldStorage> = BTreeMap::new();
    for spec in &args.inputs {
        let (name, path) = split_pair(spec)?;
        let file = File::open(path).with_context(|| format!("opening {path}"))?;
        let field = read_gtsf_with_layout(&mut BufReader::new(file), &layout).with_context(|| format!("reading {path}"))?;
        fields.insert(name.to_string(), field);
    }
    let mut outputs = Vec::new();
    for spec in &args.outputs {
        let (name, path) = split_pair(spec)?;
        outputs.push((name.to_string(), PathBuf::from(path)));
    }
    // Fields that are only written get fresh storage sized for the domain.
    let missing: Vec<String> = outputs.iter().map(|(n, _)| n.clone()).filter(|n| !fields.contains_key(n)).collect();
    if !missing.is_empty() {
        // Sized from the inputs when possible; an explicit domain that is
        // invalid is reported by the call itself.
        let d = match (domain, inferred_domain(&stencil, &fields)) {
            (Some(d), _) if d.iter().all(|&n| n >= 1) => d,
            (_, Some(d)) => d,
            (Some(d), None) => d.map(|n| n.max(1)),
            (None, None) => {
                return Err(Failure::Runtime(format!(
                    "cannot size output field `{}` without --domain or input fields",
                    missing[0]
                )))
            }
        };
        for name in missing {
            let f = stencil
                .allocate_field(&name, d, Fill::Zeros)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            fields.insert(name, f);
        }
    }
    let scalars: Vec<(String, f64)> = args
        .scalars
        .iter()
        .map(|s| {
            let (k, v) = split_pair(s)?;
            Ok((k.to_string(), v.parse::<f64>().with_context(|| format!("scalar `{k}`: invalid number `{v}`"))?))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut stencil = stencil;
    let report = {
        let mut call = InvocationArgs::new();
        for (name, f) in fields.iter_mut() {
            call = call.field(name, f);
        }
        for (k, v) in &scalars {
            call = call.scalar(k, *v);
        }
        if let Some(d) = domain {
            call = call.domain(d);
        }
        if let Some(o) = origin {
            call = call.origin(o);
        }
        if args.no_validate {
            // The checks still happen, just outside the timed call.
            prevalidate(&stencil, &call)?;
            // SAFETY: `prevalidate` performed the checks the call would.
            unsafe { stencil.set_validation_policy(ValidationPolicy::Skip) };
        }
        stencil.invoke(&mut call).map_err(|e| Failure::Runtime(e.to_string()))?
    };
    for (name, path) in &outputs {
        let f = &fields[name];
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        write_gtsf(f, &mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    let json = serde_json::json!({
        "stencil": stencil.definition().name,
        "backend": stencil.backend().name(),
        "validate": !args.no_validate,
        "total_ns": report.total_ns,
        "validation_ns": report.validation_ns,
        "kernel_ns": report.kernel_ns,
    });
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}

/// Largest domain the given fields support, ignoring missing ones.
fn inferred_domain(stencil: &CompiledStencil, fields: &BTreeMap<String, FieldStorage>) -> Option<[usize; 3]> {
    let mut domain: Option<[i64; 3]> = None;
    for (name, f) in fields {
        let e = stencil.field_extent(name)?;
        let room: [i64; 3] = [0, 1, 2].map(|a| f.shape()[a] as i64 - f.origin()[a] as i64 - e.hi[a]);
        domain = Some(match domain {
            None => room,
            Some(d) => [0, 1, 2].map(|a| d[a].min(room[a])),
        });
    }
    let d = domain?;
    d.iter().all(|&v| v >= 1).then(|| d.map(|v| v as usize))
}

fn prevalidate(stencil: &CompiledStencil, call: &InvocationArgs) -> Result<(), Failure> {
    let layout = stencil.backend().default_layout();
    for decl in &stencil.implementation().api_fields {
        if let Some(f) = call.storage(&decl.name) {
            if f.dtype() != decl.dtype {
                return Err(Failure::Runtime(format!(
                    "field `{}` has dtype {}, parameter is declared {}",
                    decl.name,
                    f.dtype(),
                    decl.dtype
                )));
            }
            if f.layout().permutation != layout.permutation {
                return Err(Failure::Runtime(format!("field `{}` has the wrong layout", decl.name)));
            }
        }
    }
    stencil.resolve_domain_origin(call).map(|_| ()).map_err(|e| Failure::Runtime(e.to_string()))
}

fn fill_random(stencil: &CompiledStencil, name: &str, field: &mut FieldStorage, seed: u64) {
    // Seeded by field name so every backend sees the same logical values.
    let salt = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    let mut rng = StdRng::seed_from_u64(seed ^ salt);
    let dominant = stencil.definition().name == "vadv" && name == "b";
    let shape = field.shape();
    let mut values = vec![0.0; shape.iter().product()];
    for v in values.iter_mut() {
        *v = if dominant { rng.gen_range(3.0..4.0) } else { rng.gen_range(-1.0..1.0) };
    }
    field.fill_with(|[i, j, k]| values[(i * shape[1] + j) * shape[2] + k]);
}

fn parse_size(s: &str) -> anyhow::Result<[usize; 3]> {
    if let Ok(n) = s.trim().parse::<usize>() {
        return Ok([n, n, n]);
    }
    parse_triple(s)
}

fn max_rel_diff(a: &FieldStorage, b: &FieldStorage, origin_a: [usize; 3], origin_b: [usize; 3], domain: [usize; 3]) -> f64 {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for i in 0..domain[0] {
        for j in 0..domain[1] {
            for k in 0..domain[2] {
                let x = a.get([origin_a[0] + i, origin_a[1] + j, origin_a[2] + k]);
                let y = b.get([origin_b[0] + i, origin_b[1] + j, origin_b[2] + k]);
                scale = scale.max(y.abs());
                if x.to_bits() != y.to_bits() {
                    let d = (x - y).abs();
                    diff = if d.is_nan() { f64::INFINITY } else { diff.max(d) };
                }
            }
        }
    }
    match (diff, scale) {
        (0.0, _) => 0.0,
        (_, 0.0) => f64::INFINITY,
        (d, s) => d / s,
    }
}

fn cmd_diff(args: DiffArgs) -> Result<ExitCode, Failure> {
    if args.backends.len() < 2 {
        usage_error("--backends needs at least two backends to compare");
    }
    let program = load_source(&args.source.file)?;
    let name = stencil_name(&program, &args.source.stencil)?;
    let ext = externals(&args.source.externals)?;
    let mut stencils = Vec::new();
    for &b in &args.backends {
        let mut opts = BuildOptions::default();
        if b == BackendId::Gen {
            opts.fault = args.inject_fault.map(|Fault::OffByOne| FaultInjection::OffByOne);
        }
        stencils.push(compile(&program, &name, b, &ext, &opts)?);
    }
    let scalar_overrides: BTreeMap<String, f64> = args
        .scalars
        .iter()
        .map(|s| {
            let (k, v) = split_pair(s)?;
            Ok((k.to_string(), v.parse::<f64>().with_context(|| format!("scalar `{k}`"))?))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut worst_ok = true;
    for size in &args.sizes {
        let mut domain = parse_size(size)?;
        domain[2] = domain[2].max(stencils[0].k_min());
        let mut results = Vec::new();
        for s in &stencils {
            let mut fields: Vec<(String, FieldStorage)> = Vec::new();
            for decl in &s.implementation().api_fields {
                let mut f = s.allocate_field(&decl.name, domain, Fill::Zeros).map_err(|e| Failure::Runtime(e.to_string()))?;
                fill_random(s, &decl.name, &mut f, args.seed);
                fields.push((decl.name.clone(), f));
            }
            let mut rng = StdRng::seed_from_u64(args.seed);
            let scalars: Vec<(String, f64)> = s
                .implementation()
                .api_scalars
                .iter()
                .map(|d| (d.name.clone(), scalar_overrides.get(&d.name).copied().unwrap_or_else(|| rng.gen_range(0.01..0.5))))
                .collect();
            {
                let mut call = InvocationArgs::new().domain(domain);
                for (n, f) in fields.iter_mut() {
                    call = call.field(n, f);
                }
                for (n, v) in &scalars {
                    call = call.scalar(n, *v);
                }
                s.invoke(&mut call).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            results.push(fields);
        }
        let reference = &results[0];
        for (idx, s) in stencils.iter().enumerate().skip(1) {
            for ((name, f), (_, r)) in results[idx].iter().zip(reference) {
                let d = max_rel_diff(f, r, f.origin(), r.origin(), domain);
                let ok = d <= args.tol;
                println!(
                    "{}x{}x{} {name}: {} vs {} max rel diff {d:.3e}{}",
                    domain[0],
                    domain[1],
                    domain[2],
                    s.backend(),
                    stencils[0].backend(),
                    if ok { "" } else { " FAIL" }
                );
                if !ok {
                    eprintln!(
                        "field `{name}` differs between {} and {} at {}x{}x{}: {d:.3e} > {}",
                        s.backend(),
                        stencils[0].backend(),
                        domain[0],
                        domain[1],
                        domain[2],
                        args.tol
                    );
                    worst_ok = false;
                }
            }
        }
    }
    Ok(if worst_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn builtin_kernel(name: &str) -> Option<(&'static str, &'static [(&'static str, f64)])> {
    match name {
        "hdiff" => Some((kernels::HDIFF, &[("coeff", 0.025)])),
        "vadv" => Some((kernels::VADV, &[])),
        "copy" => Some((kernels::COPY, &[])),
        _ => None,
    }
}

fn median(v: &mut [u64]) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, Failure> {
    for k in &args.kernels {
        if builtin_kernel(k).is_none() {
            usage_error(format!("unknown kernel `{k}`; available: hdiff, vadv, copy"));
        }
    }
    let mut out: Box<dyn Write> = match &args.csv {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let io = |e: std::io::Error| Failure::Other(e.into());
    writeln!(out, "kernel,backend,ni,nj,nk,reps,kernel_ns_median,total_ns_median,validate").map_err(io)?;
    for kernel in &args.kernels {
        let (src, scalars) = builtin_kernel(kernel).unwrap();
        let program = SourceProgram::with_path(src, format!("{kernel}.gts"));
        for &backend in &args.backends {
            let mut stencil = compile(&program, kernel, backend, &ExternalsBinding::new(), &BuildOptions::default())?;
            if args.no_validate {
                // SAFETY: fields below are allocated by the stencil itself.
                unsafe { stencil.set_validation_policy(ValidationPolicy::Skip) };
            }
            for &n in &args.sizes {
                let domain = [n, n, args.levels.max(stencil.k_min())];
                let mut fields: Vec<(String, FieldStorage)> = Vec::new();
                for decl in &stencil.implementation().api_fields {
                    let mut f = stencil
                        .allocate_field(&decl.name, domain, Fill::Zeros)
                        .map_err(|e| Failure::Runtime(e.to_string()))?;
                    fill_random(&stencil, &decl.name, &mut f, 1);
                    fields.push((decl.name.clone(), f));
                }
                let (mut kernel_ns, mut total_ns) = (Vec::new(), Vec::new());
                for rep in 0..args.reps as usize + 3 {
                    let mut call = InvocationArgs::new();
                    for (name, f) in fields.iter_mut() {
                        call = call.field(name, f);
                    }
                    for (name, v) in scalars {
                        call = call.scalar(name, *v);
                    }
                    let r = stencil.invoke(&mut call).map_err(|e| Failure::Runtime(e.to_string()))?;
                    if rep >= 3 {
                        kernel_ns.push(r.kernel_ns);
                        total_ns.push(r.total_ns);
                    }
                }
                writeln!(
                    out,
                    "{kernel},{backend},{},{},{},{},{},{},{}",
                    domain[0],
                    domain[1],
                    domain[2],
                    args.reps,
                    median(&mut kernel_ns),
                    median(&mut total_ns),
                    if args.no_validate { "skip" } else { "full" }
                )
                .map_err(io)?;
                out.flush().map_err(io)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

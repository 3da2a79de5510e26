use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eg2c::adapt::{AdaptationEngine, RangeMode};
use eg2c::io::{
    detector_scores, gen_stream, read_stream_csv, run_stream_report, run_sweep, warmup_threshold, write_beats_csv,
    write_report_json, write_stream_csv, write_sweep_csv, RunConfig, RunError, StreamSpec, SweepSpec,
};
use eg2c::isa::{assemble, disassemble, read_program, write_program, AssembleOptions};
use eg2c::mapper::{map_layer, DataflowFlags, ScheduleDump};
use eg2c::model::{build_reference_models, read_models, write_models, Model, ReferenceModels, Role, FRAME_DIMS};
use eg2c::orchestrator::{OrchestratorError, ProgramSet};
use eg2c::sim::{calibrate_p, AnalysisError, Fault};
use eg2c::sparse::vector_count;

/// Targets (ms per inference) for `sweep --calibrate`: detector, coarse, precise.
const LATENCY_TARGETS_MS: [f64; 3] = [0.32, 9.62, 13.32];

#[derive(Parser)]
#[command(name = "eg2c", version, about = "Vector-sparse CNN processor simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic beat stream and/or the reference model bundle.
    Gen(GenArgs),
    /// Assemble one model into a program file.
    Compile(CompileArgs),
    /// Vector-prune every model in a file.
    Prune(PruneArgs),
    /// Run a stream through the detect/convert pipeline and write reports.
    Run(RunArgs),
    /// Print the threshold updates adaptation makes over a stream.
    AdaptDemo(AdaptDemoArgs),
    /// Sweep P, sparsity and dataflow flags in parallel.
    Sweep(SweepArgs),
    /// Print the listing of a program file.
    Disasm { program: PathBuf },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    beats: usize,
    #[arg(long, default_value_t = 0.1)]
    anomaly_rate: f64,
    /// Relative amplitude growth from the first to the last beat.
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    /// Stream CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model bundle to write.
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Args)]
struct FlagArgs {
    #[arg(long)]
    no_sparse: bool,
    #[arg(long)]
    no_cir: bool,
    #[arg(long)]
    no_drir: bool,
}

impl FlagArgs {
    fn flags(&self) -> DataflowFlags {
        DataflowFlags { sparsity: !self.no_sparse, cir: !self.no_cir, drir: !self.no_drir }
    }
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which model of a bundle to compile: detector, coarse or precise.
    #[arg(long)]
    role: Option<String>,
    #[command(flatten)]
    flags: FlagArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write per-layer lane schedules as JSON.
    #[arg(long)]
    schedule_dump: Option<PathBuf>,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    sparsity: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Model bundle; the built-in reference models when omitted.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beats_csv: Option<PathBuf>,
}

#[derive(Args)]
struct AdaptDemoArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, default_value_t = 16)]
    bins: usize,
    #[arg(long, default_value_t = 4096)]
    window: usize,
    /// Bin over the configured range instead of each window's own range.
    #[arg(long)]
    fixed_range: bool,
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.394,0.5")]
    sparsity: Vec<f64>,
    /// Sweep all eight flag combinations instead of all-on.
    #[arg(long)]
    ablate: bool,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also pick the P that best matches the reference latencies and write
    /// the calibration as JSON.
    #[arg(long)]
    calibrate: Option<PathBuf>,
}

/// Bad invocation that clap cannot catch on its own.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: &str) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn load_models(path: &Path) -> Result<Vec<Model>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_models(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn load_bundle(path: Option<&Path>) -> Result<ReferenceModels> {
    match path {
        Some(p) => Ok(ReferenceModels::from_models(load_models(p)?)?),
        None => Ok(build_reference_models()),
    }
}

fn parse_role(s: &str) -> Result<Role> {
    Ok(match s {
        "detector" => Role::Detector,
        "coarse" => Role::CoarseConverter,
        "precise" => Role::PreciseConverter,
        _ => return Err(usage(&format!("unknown role {s:?}; expected detector, coarse or precise"))),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn gen(a: GenArgs) -> Result<()> {
    if a.out.is_none() && a.models.is_none() {
        return Err(usage("gen needs --out and/or --models"));
    }
    if let Some(out) = &a.out {
        let beats = gen_stream(&StreamSpec::new(a.seed, a.beats, a.anomaly_rate, a.drift))?;
        write_stream_csv(&beats, create(out)?)?;
        let anomalies = beats.iter().filter(|b| b.label).count();
        eprintln!("wrote {} beats ({anomalies} anomalous) to {}", beats.len(), out.display());
    }
    if let Some(path) = &a.models {
        let refs = build_reference_models();
        fs::write(path, write_models(refs.all())?)?;
        for m in refs.all() {
            eprintln!("{:<8} {:>9} MACs", m.role().name(), m.total_macs());
        }
    }
    Ok(())
}

fn compile(a: CompileArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let models = load_models(&a.model)?;
    let model = match &a.role {
        Some(r) => {
            let role = parse_role(r)?;
            models.into_iter().find(|m| m.role() == role).with_context(|| format!("no {r} model in {}", a.model.display()))?
        }
        None if models.len() == 1 => models.into_iter().next().expect("one model"),
        None => return Err(usage("file holds several models; pick one with --role")),
    };
    let flags = a.flags.flags();
    let opts = AssembleOptions { flags, ..Default::default() };
    let compiled = assemble(&model, &cfg.engine, &cfg.memory, &opts)?;
    fs::write(&a.out, write_program(&compiled.program))?;
    eprintln!(
        "{}: {} layers, {} instructions, {} weight bytes, {} index bytes",
        model.role().name(),
        compiled.program.layer_count(),
        compiled.program.words().len(),
        compiled.weight_end,
        compiled.index_end
    );
    if let Some(path) = &a.schedule_dump {
        let sparse = model.sparse_layers();
        let dumps = model
            .spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let vectors = match (&sparse[i], flags.sparsity) {
                    (Some(s), true) => eg2c::mapper::present_vectors(s),
                    _ => eg2c::mapper::all_vectors(l),
                };
                Ok(ScheduleDump::from(&map_layer(i, l, &vectors, &cfg.engine, flags)?))
            })
            .collect::<Result<Vec<_>>>()?;
        serde_json::to_writer_pretty(create(path)?, &dumps)?;
    }
    Ok(())
}

fn prune(a: PruneArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.sparsity) {
        bail!(eg2c::io::IoError::Config(format!("sparsity {} outside [0, 1)", a.sparsity)));
    }
    let models = load_models(&a.model)?;
    let pruned = models.iter().map(|m| m.pruned(a.sparsity)).collect::<Result<Vec<_>, _>>()?;
    fs::write(&a.out, write_models(&pruned)?)?;
    println!("role,vectors,nonzero_vectors,vector_sparsity");
    for m in &pruned {
        let s = m.sparsity();
        println!("{},{},{},{:.4}", m.role().name(), s.total_vectors, s.nonzero_vectors, s.vector_sparsity);
        for (i, l) in m.spec.layers.iter().enumerate() {
            if let (Some(total), Some(sp)) = (vector_count(l), &m.sparse_layers()[i]) {
                eprintln!("  layer {i:>2} {:<3} {:>5}/{total} vectors kept", l.kind.name(), sp.nonzero_vectors());
            }
        }
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let models = load_bundle(a.models.as_deref())?;
    let beats = read_stream_csv(File::open(&a.stream).with_context(|| format!("opening {}", a.stream.display()))?, FRAME_DIMS)?;
    let (report, outcome) = run_stream_report(&models, &beats, &cfg)?;
    write_report_json(&report, create(&a.report)?)?;
    if let Some(p) = &a.beats_csv {
        write_beats_csv(&outcome, create(p)?)?;
    }
    let s = &report.stream;
    eprintln!(
        "{} beats, {} precise, accuracy {}, threshold {} -> {}, max latency {:.3} ms",
        s.beats,
        s.precise_conversions,
        s.accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        s.initial_threshold,
        s.final_threshold,
        s.max_latency_ms
    );
    Ok(())
}

fn adapt_demo(a: AdaptDemoArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.adapt.num_bins = a.bins;
    cfg.adapt.window_samples = a.window;
    if a.fixed_range {
        cfg.adapt.range_mode = RangeMode::Fixed;
    }
    cfg.validate()?;
    let models = load_bundle(a.models.as_deref())?;
    let beats = read_stream_csv(File::open(&a.stream).with_context(|| format!("opening {}", a.stream.display()))?, FRAME_DIMS)?;
    let programs = ProgramSet::compile(&models, &cfg.engine, &cfg.memory, cfg.flags)?;
    let scores = detector_scores(&programs, &beats, &cfg)?;
    let initial = warmup_threshold(&scores[..scores.len().min(a.window)], &cfg.adapt)?;
    let mut engine = AdaptationEngine::new(cfg.adapt, initial)?;
    let mut out = io::stdout().lock();
    writeln!(out, "sample_index,threshold")?;
    for (i, &s) in scores.iter().enumerate() {
        if let Some(t) = engine.observe(s) {
            writeln!(out, "{i},{t}")?;
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let models = load_bundle(a.models.as_deref())?;
    let flag_sets = if a.ablate {
        (0..8u8).map(|b| DataflowFlags { sparsity: b & 1 != 0, cir: b & 2 != 0, drir: b & 4 != 0 }).collect()
    } else {
        vec![cfg.flags]
    };
    if a.p.contains(&0) || a.sparsity.iter().any(|s| !(0.0..1.0).contains(s)) {
        return Err(usage("P must be positive and sparsities within [0, 1)"));
    }
    let spec = SweepSpec { p_values: a.p.clone(), sparsities: a.sparsity, flag_sets, clock_hz: cfg.orchestrator.clock_hz };
    let points = run_sweep(&models.all(), &spec, &cfg.engine, &cfg.memory)?;
    match &a.out {
        Some(p) => write_sweep_csv(&points, create(p)?)?,
        None => write_sweep_csv(&points, io::stdout().lock())?,
    }
    if let Some(path) = &a.calibrate {
        let rep = calibrate_p(&models.all(), &LATENCY_TARGETS_MS, &a.p, &cfg.engine, &cfg.memory, cfg.flags, cfg.orchestrator.clock_hz)?;
        serde_json::to_writer_pretty(create(path)?, &rep)?;
        eprintln!("calibration: P = {} (mean relative error {:.3})", rep.best_p, rep.best_error);
    }
    Ok(())
}

fn disasm(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let program = read_program(&bytes)?;
    print!("{}", disassemble(program.words()));
    Ok(())
}

fn is_fault(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Fault>()
            || c.downcast_ref::<RunError>().is_some_and(RunError::is_fault)
            || matches!(c.downcast_ref::<OrchestratorError>(), Some(OrchestratorError::Fault(_)))
            || matches!(c.downcast_ref::<AnalysisError>(), Some(AnalysisError::Fault(_)))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Compile(a) => compile(a),
        Cmd::Prune(a) => prune(a),
        Cmd::Run(a) => run(a),
        Cmd::AdaptDemo(a) => adapt_demo(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Disasm { program } => disasm(&program),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else if is_fault(&e) {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use eg2c::sim::FaultCause;

    #[test]
    fn faults_are_recognized_through_wrappers() {
        let f = || Fault::new(3, FaultCause::MissingHalt);
        assert!(is_fault(&anyhow::Error::from(f())));
        assert!(is_fault(&anyhow::Error::from(RunError::Orchestrator(OrchestratorError::Fault(f())))));
        assert!(is_fault(&anyhow::Error::from(f()).context("running")));
        assert!(!is_fault(&usage("x")));
    }
}

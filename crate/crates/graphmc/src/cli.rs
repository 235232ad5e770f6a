//! Command-line driver: loads model files in order, applies inline
//! overrides, runs the sampler (optionally several independent chains) and
//! prints the report.

use std::path::{Path, PathBuf};

use clap::Parser;

use crate::error::{Error, Result};
use crate::io::{format_report, BinarySink, CsvSink, TraceSink};
use crate::modelang::{self, build::BuildOutput, merge_overrides, parse_model, ModelFile};
use crate::sampler::{run, trace_columns, FunctionalAccumulator, RunReport};

#[derive(Debug, Parser)]
#[command(name = "graphmc", about = "Adaptive MCMC for graphical models")]
pub struct CliArgs {
    /// Model files, merged in order (later files override earlier ones).
    #[arg(required = true, value_name = "MODEL")]
    pub model_paths: Vec<PathBuf>,

    /// Inline model-language fragment, applied after all files. Repeatable.
    #[arg(short = 'e', value_name = "FRAGMENT")]
    pub fragments: Vec<String>,

    /// RNG seed (chain i uses seed + i).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Trace output path; format inferred from the extension (.csv or .bin).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Keep every thin-th post-burn-in sample in the trace.
    #[arg(long)]
    pub thin: Option<u64>,

    /// Number of independent chains.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
}

fn load_file(path: &Path) -> Result<ModelFile> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_model(&text).map_err(|e| match e {
        Error::Syntax { pos, msg } => Error::Model(format!(
            "{}:{pos}: syntax error: {msg}",
            path.display()
        )),
        other => other,
    })
}

fn chain_outfile(base: &str, chain: usize, chains: usize) -> String {
    if chains == 1 {
        return base.to_string();
    }
    let p = Path::new(base);
    match (p.file_stem(), p.extension()) {
        (Some(stem), Some(ext)) => {
            let parent = p.parent().unwrap_or_else(|| Path::new(""));
            parent
                .join(format!(
                    "{}-{}.{}",
                    stem.to_string_lossy(),
                    chain + 1,
                    ext.to_string_lossy()
                ))
                .display()
                .to_string()
        }
        _ => format!("{base}-{}", chain + 1),
    }
}

fn make_sink(path: &str, format: Option<&str>, columns: Vec<String>) -> Result<Box<dyn TraceSink + Send>> {
    let binary = match format {
        Some("binary" | "bin") => true,
        Some("csv") => false,
        Some(other) => {
            return Err(Error::Model(format!("unknown output format `{other}`")));
        }
        None => Path::new(path).extension().is_some_and(|e| e == "bin"),
    };
    Ok(if binary {
        Box::new(BinarySink::create(Path::new(path), columns)?)
    } else {
        Box::new(CsvSink::create(Path::new(path), columns)?)
    })
}

/// Everything up to (but excluding) the run itself; split out for tests.
pub fn prepare(args: &CliArgs) -> Result<BuildOutput> {
    let mut files = args.model_paths.iter();
    let base = load_file(files.next().expect("clap enforces one model"))?;
    let mut fragments: Vec<ModelFile> = files.map(|p| load_file(p)).collect::<Result<_>>()?;
    for (i, f) in args.fragments.iter().enumerate() {
        fragments.push(parse_model(f).map_err(|e| {
            Error::Model(format!("-e fragment {}: {e}", i + 1))
        })?);
    }
    let mut merged = merge_overrides(base, fragments)?;

    if let Some(seed) = args.seed {
        merged.params.seed = Some(seed);
    }
    if let Some(thin) = args.thin {
        merged.params.thin = Some(thin);
    }
    if let Some(out) = &args.out {
        merged.params.outfile = Some(out.display().to_string());
        merged.params.outformat = None;
    }

    let base_dir = args.model_paths[0]
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    modelang::build(&merged, &base_dir)
}

fn run_one(built: &BuildOutput, chain: usize, chains: usize) -> Result<RunReport> {
    let mut cfg = built.cfg.clone();
    cfg.seed = cfg.seed.wrapping_add(chain as u64);
    let functional = built
        .functional
        .clone()
        .map(FunctionalAccumulator::new);
    let mut sink_box;
    let mut sinks: Vec<&mut dyn TraceSink> = Vec::new();
    if let Some(outfile) = &built.outfile {
        let path = chain_outfile(outfile, chain, chains);
        sink_box = make_sink(&path, built.outformat.as_deref(), trace_columns(&built.graph))?;
        sinks.push(sink_box.as_mut());
    }
    run(&built.graph, &built.blocks, &cfg, functional, &mut sinks)
}

pub fn execute(args: &CliArgs) -> Result<String> {
    if args.chains == 0 {
        return Err(Error::Model("chains must be positive".into()));
    }
    let built = prepare(args)?;

    let reports: Vec<RunReport> = if args.chains == 1 {
        vec![run_one(&built, 0, 1)?]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..args.chains)
                .map(|i| {
                    let built = &built;
                    scope.spawn(move || run_one(built, i, args.chains))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    };

    let mut out = String::new();
    for (i, report) in reports.iter().enumerate() {
        if reports.len() > 1 {
            out.push_str(&format!("Chain {}:\n", i + 1));
        }
        out.push_str(&format_report(report));
    }
    if reports.len() > 1 {
        if let Some(first) = &reports[0].functional_average {
            let mut pooled = vec![0.0; first.len()];
            for r in &reports {
                let avg = r
                    .functional_average
                    .as_ref()
                    .expect("all chains share the functional");
                for (p, v) in pooled.iter_mut().zip(avg) {
                    *p += v / reports.len() as f64;
                }
            }
            out.push_str("Pooled functional average = [");
            for v in &pooled {
                out.push_str(&format!(" {v:.6}"));
            }
            out.push_str(" ]\n");
        }
    }
    Ok(out)
}

/// Entry point: returns the process exit code. Zero iff a report was printed.
pub fn main() -> i32 {
    let args = CliArgs::parse();
    match execute(&args) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

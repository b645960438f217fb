mod config;
mod report;

use std::process::ExitCode;

use birkhoff::bench::{run_suite, BenchCase};
use birkhoff::container::{emit_safetensors, ingest_safetensors, read_container, read_manifest};
use birkhoff::model::{compress_model, decompress_model, verify_model, CompressOptions};
use birkhoff::{Error, Result};
use clap::Parser;
use serde::Serialize;

use config::{parse_block, parse_shape, registry, Cli, Command, Format, RunConfig};

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    /// The command worked but a check (such as an MAE budget) failed.
    Failed,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Corrupt(_) | Error::Format(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn in_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    birkhoff::hyperlinear::with_workers(cfg.workers, f)?
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Compress(args) => {
            let cfg = RunConfig::new(&args.common)?;
            let mut opts = CompressOptions::new(args.space.resolve()?);
            opts.policy = args.policy()?;
            opts.mae_budget = args.mae_budget;
            let model = ingest_safetensors(&args.input)?;
            let out = in_pool(&cfg, || compress_model(&model, &opts))?;
            std::fs::write(&args.output, &out.bytes)?;
            for t in &out.report.tensors {
                if let Some(note) = t.note.as_deref().filter(|n| n.starts_with("kept uncompressed")) {
                    eprintln!("warning: {}: {note}", t.name);
                }
            }
            print!("{}", report::model(&out.report, cfg.format)?);
            Ok(if out.report.within_budget() { Status::Ok } else { Status::Failed })
        }
        Command::Decompress(args) => {
            let cfg = RunConfig::new(&args.common)?;
            let (container, _) = read_container(&args.input)?;
            let map = in_pool(&cfg, || decompress_model(&container))?;
            emit_safetensors(&map, &args.output)?;
            #[derive(Serialize)]
            struct Done<'a> {
                tensors: usize,
                output: &'a std::path::Path,
            }
            let done = Done { tensors: map.tensors.len(), output: &args.output };
            match cfg.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&done).unwrap()),
                Format::Csv => print!("tensors,output\n{},{}\n", done.tensors, done.output.display()),
                Format::Text => println!("wrote {} tensors to {}", done.tensors, done.output.display()),
            }
            Ok(Status::Ok)
        }
        Command::Verify(args) => {
            let cfg = RunConfig::new(&args.common)?;
            let original = ingest_safetensors(&args.original)?;
            let (container, manifest) = read_container(&args.container)?;
            let r = in_pool(&cfg, || verify_model(&original, &container, manifest.totals, args.mae_budget))?;
            print!("{}", report::model(&r, cfg.format)?);
            Ok(if r.within_budget() { Status::Ok } else { Status::Failed })
        }
        Command::Inspect(args) => {
            let cfg = RunConfig::new(&args.common)?;
            let manifest = read_manifest(&std::fs::read(&args.container)?)?;
            print!("{}", report::inspect(&manifest, cfg.format)?);
            Ok(Status::Ok)
        }
        Command::Bench(args) => {
            let cfg = RunConfig::new(&args.common)?;
            let block = parse_block(&args.block)?;
            let cases = args
                .shapes
                .iter()
                .map(|s| {
                    let shape = parse_shape(s)?;
                    let mut c = BenchCase::new(s.clone(), shape);
                    c.repeats = args.repeats;
                    c.seed = args.seed;
                    c.block = block;
                    c.box_len = args.box_len;
                    c.codebook_size = args.codebook_size;
                    c.categories = args.categories;
                    c.validate()?;
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()?;
            let r = in_pool(&cfg, || run_suite(&cases))?;
            print!("{}", report::bench(&r, cfg.format)?);
            Ok(Status::Ok)
        }
        Command::Presets(args) => {
            let cfg = RunConfig::new(&args.common)?;
            let reg = registry(args.config.as_ref())?;
            let list: Vec<_> = reg.names().into_iter().map(|n| reg.get(n)).collect::<Result<_>>()?;
            print!("{}", report::presets(&list, cfg.format)?);
            Ok(Status::Ok)
        }
    }
}

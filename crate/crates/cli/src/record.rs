use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::Args;
use psn_core::ppl::{run_prior, Trace, TraceWriter, DEFAULT_T_MAX};
use psn_core::CounterRng;
use rayon::prelude::*;

use crate::common::{display, ProgramArgs, RunContext};
use crate::manifest::{RunManifest, Timing};

/// Traces are generated and written in chunks of this many.
const CHUNK: u64 = 1024;

#[derive(Args, Debug)]
pub struct RecordArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Number of traces.
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    t_max: usize,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(ctx: &RunContext, a: RecordArgs) -> Result<()> {
    let (spec, program) = a.program.load()?;
    let start = Instant::now();
    let mut w = TraceWriter::create(&a.out)?;
    let mut lo = 0;
    while lo < a.n {
        let hi = (lo + CHUNK).min(a.n);
        // Trace i always draws from stream i, whatever the worker count.
        let chunk: Vec<Trace> = (lo..hi)
            .into_par_iter()
            .map(|i| {
                let mut rng = CounterRng::new(a.seed, i);
                run_prior(&program, &mut rng, i, a.t_max).with_context(|| format!("trace {i}"))
            })
            .collect::<Result<_>>()?;
        for t in &chunk {
            w.write(t)?;
        }
        lo = hi;
    }
    w.finish()?;
    let mut m = RunManifest::new(ctx, "record", a.seed);
    m.program = Some(spec);
    m.config_path = a.program.config.as_deref().map(display);
    m.outputs.push(display(&a.out));
    m.timing = Timing::new(start.elapsed().as_secs_f64(), a.n);
    m.write_for(&a.out)
}

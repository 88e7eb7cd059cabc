use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use clap::Args;
use psn_core::ic::{sis_infer, Executor, ProposalSource, SisConfig};
use psn_core::ppl::{run_clamped, run_prior, DEFAULT_T_MAX};
use psn_core::sims::{ProgramSpec, Regime};
use psn_core::surrogate::psn_sample;
use psn_core::{CounterRng, Observations, Program};

use crate::common::{check_program, display, load_models, ProgramArgs, RunContext};
use crate::manifest::{RunManifest, Timing};
use crate::obs::ObservationFile;

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Surrogate and proposal checkpoints.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    /// Traces per forward-sampling cell.
    #[arg(long, default_value_t = 20)]
    n: u64,
    /// Particles per importance-sampling cell.
    #[arg(long, default_value_t = 20)]
    particles: usize,
    /// Observations for the importance-sampling cells (first set is used);
    /// defaults to the nominal regime for heat1d and a prior run otherwise.
    #[arg(long)]
    observations: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing CSV.
    #[arg(long)]
    out: PathBuf,
}

struct Cell {
    executor: &'static str,
    mode: &'static str,
    timing: Timing,
}

fn timed(traces: u64, f: impl FnOnce() -> Result<()>) -> Result<Timing> {
    let start = Instant::now();
    f()?;
    Ok(Timing::new(start.elapsed().as_secs_f64(), traces))
}

pub fn run(ctx: &RunContext, a: BenchArgs) -> Result<()> {
    let (spec, program) = a.program.load()?;
    let (psn, ic) = load_models(&a.checkpoint)?;
    let psn = psn.ok_or_else(|| anyhow!("bench needs a surrogate --checkpoint"))?;
    let ic = ic.ok_or_else(|| anyhow!("bench needs a proposal --checkpoint"))?;
    check_program(psn.program(), &program, "surrogate")?;
    check_program(ic.program(), &program, "proposal")?;
    if a.n == 0 || a.particles == 0 {
        bail!("--n and --particles must be positive");
    }
    let observations: Observations = match (&a.observations, &spec) {
        (Some(p), _) => ObservationFile::load(p)?.sets.swap_remove(0).observations,
        (None, ProgramSpec::Heat1d(cfg)) => {
            let clamps = Regime::Nominal.settings(cfg);
            run_clamped(&program, &clamps, &mut CounterRng::new(a.seed, u64::MAX), 0, DEFAULT_T_MAX)?.observations()
        }
        (None, _) => run_prior(&program, &mut CounterRng::new(a.seed, u64::MAX), 0, DEFAULT_T_MAX)?.observations(),
    };
    let summary = program.summarize(&observations)?;

    // One worker so that the cells compare per-trace cost.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let cells = pool.install(|| -> Result<Vec<Cell>> {
        let sis = SisConfig {
            particles: a.particles,
            seed: a.seed,
            t_max: DEFAULT_T_MAX,
            keep_traces: false,
        };
        let proposal = ProposalSource::Ic {
            model: &ic,
            summary: &summary,
        };
        // Warm caches and allocators before timing.
        run_prior(&program, &mut CounterRng::new(a.seed, u64::MAX - 1), 0, DEFAULT_T_MAX)?;
        psn_sample(&psn, &mut CounterRng::new(a.seed, u64::MAX - 1), 0)?;

        let sim_fwd = timed(a.n, || {
            for i in 0..a.n {
                run_prior(&program, &mut CounterRng::new(a.seed, i), i, DEFAULT_T_MAX)?;
            }
            Ok(())
        })?;
        let psn_fwd = timed(a.n, || {
            for i in 0..a.n {
                psn_sample(&psn, &mut CounterRng::new(a.seed, i), i)?;
            }
            Ok(())
        })?;
        let k = a.particles as u64;
        let sim_sis = timed(k, || {
            sis_infer(Executor::Program(&program), proposal, &observations, &sis, &[])?;
            Ok(())
        })?;
        let psn_sis = timed(k, || {
            sis_infer(Executor::Surrogate(&psn), proposal, &observations, &sis, &[])?;
            Ok(())
        })?;
        Ok(vec![
            Cell { executor: "sim", mode: "forward", timing: sim_fwd },
            Cell { executor: "psn", mode: "forward", timing: psn_fwd },
            Cell { executor: "sim", mode: "sis_ic", timing: sim_sis },
            Cell { executor: "psn", mode: "sis_ic", timing: psn_sis },
        ])
    })?;

    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["row", "executor", "mode", "traces", "wall_seconds", "traces_per_second", "speedup"])?;
    for c in &cells {
        w.write_record([
            "measured".to_string(),
            c.executor.into(),
            c.mode.into(),
            c.timing.traces.to_string(),
            c.timing.wall_seconds.to_string(),
            c.timing.traces_per_second.to_string(),
            String::new(),
        ])?;
    }
    for (mode, sim, psn) in [("forward", &cells[0], &cells[1]), ("sis_ic", &cells[2], &cells[3])] {
        w.write_record([
            "ratio".to_string(),
            "psn/sim".into(),
            mode.into(),
            String::new(),
            String::new(),
            String::new(),
            (psn.timing.traces_per_second / sim.timing.traces_per_second).to_string(),
        ])?;
    }
    w.flush()?;

    let mut m = RunManifest::new(ctx, "bench", a.seed);
    m.program = Some(spec);
    m.config_path = a.program.config.as_deref().map(display);
    m.workers = 1;
    m.checkpoints = a.checkpoint.iter().map(|p| display(p)).collect();
    m.inputs.extend(a.observations.as_deref().map(display));
    m.outputs.push(display(&a.out));
    let total: f64 = cells.iter().map(|c| c.timing.wall_seconds).sum();
    m.timing = Timing::new(total, cells.iter().map(|c| c.timing.traces).sum());
    m.write_for(&a.out)
}

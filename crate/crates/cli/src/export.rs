//! Training-set export: runs incremental TpV with snapshots kept and writes
//! the per-step input/target pairs plus `manifest.jsonl`.

use inctpv::data::{export_training_pairs, ExportManifest, TargetMode, TrainingSource};
use inctpv::incremental::inc_tpv_with;
use inctpv::CpSolver;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::experiment::{output_dir, prepare, thread_pool, write_preamble};

pub fn export_training(cfg: &ExperimentConfig, mode: TargetMode) -> CliResult<ExportManifest> {
    let mut schedule = cfg.schedule()?.clone();
    schedule.validate()?;
    schedule.keep_snapshots = true;
    let dir = output_dir(cfg)?;
    let (dataset, model) = prepare(cfg)?;
    let solver = CpSolver::new(model.op())?;
    write_preamble(&dir, cfg, &dataset)?;

    let pool = thread_pool(cfg.workers())?;
    let sources: Vec<TrainingSource> = pool.install(|| {
        dataset
            .entries
            .par_iter()
            .zip(dataset.observations.par_iter())
            .zip(dataset.ground_truth.par_iter())
            .map(|((entry, y), gt)| -> CliResult<TrainingSource> {
                let x0 = model.starting_guess(y)?;
                let snapshots = match mode {
                    // Ground-truth targets need only the starting guess.
                    TargetMode::GroundTruth => vec![],
                    TargetMode::Incremental => inc_tpv_with(&solver, y, &x0, &schedule)?.snapshots,
                };
                Ok(TrainingSource {
                    id: entry.name.clone(),
                    starting_guess: x0,
                    ground_truth: Some(gt.clone()),
                    snapshots,
                })
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok(export_training_pairs(&dir, &sources, mode, schedule.steps())?)
}

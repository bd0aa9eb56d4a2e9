//! Repeated wall-clock timing of several configured methods on one dataset.

use std::path::Path;
use std::time::Instant;

use crate::config::{ExperimentConfig, Method, Task};
use crate::error::{CliError, CliResult};
use crate::experiment::{prepare, timing_row, write_csv, Pipeline, TimingRow, TIMING_HEADER};

/// Times every configuration: `repeats` passes over its dataset, one image
/// at a time so that runs do not compete for cores. CT sets also get an
/// `fbp` row (the starting guess alone) unless one is configured already.
/// Per-repeat variance is reported next to the means.
pub fn time_methods(configs: &[ExperimentConfig], repeats: usize, out: &Path) -> CliResult<Vec<TimingRow>> {
    if repeats == 0 {
        return Err(CliError::Config {
            field: "repeats".into(),
            reason: "must be >= 1".into(),
        });
    }
    let mut rows = Vec::new();
    let mut fbp_timed = configs.iter().any(|c| c.method == Method::Fbp);
    for cfg in configs {
        cfg.validate()?;
        let (dataset, model) = prepare(cfg)?;
        let pipeline = Pipeline::new(cfg, &model, dataset.ground_truth[0].width())?;
        let mut samples = Vec::with_capacity(repeats);
        let mut cp = 0usize;
        for _ in 0..repeats {
            let mut times = Vec::with_capacity(dataset.entries.len());
            cp = 0;
            for (y, gt) in dataset.observations.iter().zip(&dataset.ground_truth) {
                let rec = pipeline.reconstruct(y, gt)?;
                times.push(rec.wall_time_s);
                cp += rec.cp_iterations;
            }
            samples.push(times);
        }
        rows.push(timing_row(
            &cfg.label(),
            cfg.method.name(),
            &samples,
            cp as f64 / dataset.entries.len() as f64,
        ));

        if cfg.task == Task::Ct && !fbp_timed {
            fbp_timed = true;
            let samples: Vec<Vec<f64>> = (0..repeats)
                .map(|_| {
                    dataset
                        .observations
                        .iter()
                        .map(|y| {
                            let t = Instant::now();
                            model.starting_guess(y).map(|_| t.elapsed().as_secs_f64())
                        })
                        .collect::<CliResult<Vec<_>>>()
                })
                .collect::<CliResult<_>>()?;
            rows.push(timing_row("fbp", "fbp", &samples, 0.0));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_csv(&out.join(crate::experiment::TIMING_FILE), &rows, &TIMING_HEADER)?;
    Ok(rows)
}

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hzrl_core::format::write_dataset;
use hzrl_core::oracle::{finite_horizon_value, optimal_nonstationary};
use hzrl_core::planner::{
    pipeline_dataset, run_generative_pipeline, run_pessimistic_pipeline, GenerativeSamples, PipelineParams,
};
use hzrl_core::sim::RngStream;
use hzrl_core::FiniteMdp;

use crate::config::{Algo, ExperimentConfig};
use crate::HarnessError;

/// One `(H, seed)` cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub horizon: usize,
    pub seed: u64,
    pub algo: String,
    pub mdp: String,
    pub episodes: Option<u64>,
    pub queries: Option<u64>,
    pub batches: Option<f64>,
    pub optimal_value: f64,
    pub policy_value: f64,
    pub suboptimality: f64,
    pub pessimistic_value: Option<f64>,
    pub epsilon_hat: Option<f64>,
    pub model_contained: Option<bool>,
    /// Only filled with `--timing`, so default output is reproducible.
    pub runtime_s: Option<f64>,
}

fn pipeline_params(cfg: &ExperimentConfig) -> PipelineParams {
    let mut p = PipelineParams::new(cfg.epsilon, cfg.delta, cfg.scale);
    p.eps_est = cfg.eps_est;
    p.reuse_phase_samples = cfg.reuse_phase_samples;
    p.budget = cfg.budget;
    p
}

fn generative_samples(cfg: &ExperimentConfig) -> GenerativeSamples {
    match cfg.samples_per_pair {
        Some(n) => GenerativeSamples::Fixed(n),
        None => GenerativeSamples::Scaled(cfg.scale),
    }
}

/// The stream every algorithm draws from for a given seed.
pub fn run_stream(seed: u64) -> RngStream {
    RngStream::new(seed, 0)
}

/// Runs the configured algorithm once and scores the returned policy exactly.
pub fn run_cell(cfg: &ExperimentConfig, mdp: &FiniteMdp, seed: u64) -> Result<ResultRow, HarnessError> {
    let start = Instant::now();
    let (optimal_policy, optimal_value) = optimal_nonstationary(mdp);
    let rng = run_stream(seed);
    let mut row = ResultRow {
        horizon: mdp.horizon(),
        seed,
        algo: cfg.algo.as_str().to_string(),
        mdp: cfg.mdp.label(),
        episodes: None,
        queries: None,
        batches: None,
        optimal_value,
        policy_value: optimal_value,
        suboptimality: 0.0,
        pessimistic_value: None,
        epsilon_hat: None,
        model_contained: None,
        runtime_s: None,
    };
    let policy = match cfg.algo {
        Algo::OracleOnly => optimal_policy,
        Algo::Pessimistic => {
            let (policy, d) = run_pessimistic_pipeline(mdp, &pipeline_params(cfg), &rng)?;
            row.episodes = Some(d.episodes());
            row.pessimistic_value = Some(d.pessimistic_value);
            row.epsilon_hat = Some(d.epsilon_hat);
            row.model_contained = Some(d.true_model_contained);
            policy
        }
        Algo::Generative => {
            let (policy, d) =
                run_generative_pipeline(mdp, cfg.epsilon, cfg.delta, generative_samples(cfg), &cfg.budget, &rng)?;
            row.queries = Some(d.queries);
            row.batches = Some(d.batches);
            policy
        }
    };
    row.policy_value = finite_horizon_value(mdp, &policy)?;
    row.suboptimality = optimal_value - row.policy_value;
    if cfg.timing {
        row.runtime_s = Some(start.elapsed().as_secs_f64());
    }
    Ok(row)
}

/// Every `(H, seed)` cell, run in parallel and returned sorted by `(H, seed)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    cfg.validate()?;
    let mut cells: Vec<(usize, u64)> =
        cfg.horizons.iter().flat_map(|&h| cfg.seeds.iter().map(move |&s| (h, s))).collect();
    cells.sort_unstable();
    cells.dedup();
    let models = cfg.horizons.iter().map(|&h| Ok((h, cfg.mdp.build(h)?))).collect::<Result<Vec<_>, HarnessError>>()?;
    let model = |h: usize| &models.iter().find(|(x, _)| *x == h).expect("built above").1;
    let rows = cells
        .par_iter()
        .map(|&(h, seed)| run_cell(cfg, model(h), seed))
        .collect::<Result<Vec<_>, _>>()?;
    if let (Some(dir), Algo::Pessimistic) = (&cfg.dump_dataset, cfg.algo) {
        std::fs::create_dir_all(dir)?;
        for &(h, seed) in &cells {
            dump_dataset(cfg, model(h), seed, &dir.join(format!("dataset_h{h}_seed{seed}.txt")))?;
        }
    }
    Ok(rows)
}

/// Writes the lists the pessimistic pipeline collects for `seed`.
pub fn dump_dataset(cfg: &ExperimentConfig, mdp: &FiniteMdp, seed: u64, path: &Path) -> Result<(), HarnessError> {
    let data = pipeline_dataset(mdp, &pipeline_params(cfg), &run_stream(seed))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(&data, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_rows<T: Serialize>(rows: &[T], out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<Result<Vec<ResultRow>, _>>().map_err(HarnessError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MdpSource;
    use hzrl_core::generators::NamedMdp;

    #[test]
    fn oracle_only_has_zero_gap() {
        let cfg = ExperimentConfig {
            algo: Algo::OracleOnly,
            horizons: vec![16, 4],
            seeds: vec![1, 0],
            ..Default::default()
        };
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.iter().map(|r| (r.horizon, r.seed)).collect::<Vec<_>>(), vec![(4, 0), (4, 1), (16, 0), (16, 1)]);
        for r in &rows {
            assert_eq!(r.suboptimality, 0.0);
            assert!((r.optimal_value - (2.0 - 1.0 / r.horizon as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn generative_accounting() {
        let cfg = ExperimentConfig {
            mdp: MdpSource::Named(NamedMdp::Coinflip),
            algo: Algo::Generative,
            horizons: vec![4],
            samples_per_pair: Some(10),
            ..Default::default()
        };
        let r = &run_experiment(&cfg).unwrap()[0];
        assert_eq!(r.queries, Some(50));
        assert_eq!(r.batches, Some(12.5));
    }
}

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{derive_seed, evaluate, train, EpochRecord, HyperGrid, HyperParams, TrainError};
use crate::exec::Execution;
use crate::metrics::{aggregate_runs, Aggregate, ConfusionCounts, MetricsReport};
use crate::models::{Model, ModelConfig};
use crate::nn::save_checkpoint;
use crate::store::{Dataset, SplitPlan};

/// One trained fold model and its held-out test metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub best_epoch: Option<usize>,
    pub epochs: usize,
    pub stopped_early: bool,
    pub best_val_loss: f64,
    pub val_m_f1: f64,
    pub test: MetricsReport,
    pub confusion: ConfusionCounts,
    #[serde(skip)]
    pub history: Vec<EpochRecord>,
    #[serde(skip)]
    pub train_seconds: f64,
    #[serde(skip)]
    pub test_seconds: f64,
}

/// The fold model selected for one training seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub selected_fold: usize,
    pub val_loss: f64,
    pub test: MetricsReport,
    pub confusion: ConfusionCounts,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub param_count: usize,
    pub folds: Vec<FoldResult>,
    pub seeds: Vec<SeedResult>,
    pub aggregate: Aggregate,
}

fn index_sets(data: &Dataset, plan: &SplitPlan) -> Result<(Vec<usize>, Vec<(Vec<usize>, Vec<usize>)>), TrainError> {
    let test: HashSet<&str> = plan.test_ids.iter().map(String::as_str).collect();
    for fold in &plan.folds {
        if let Some(id) = fold
            .train_ids
            .iter()
            .chain(&fold.val_ids)
            .find(|id| test.contains(id.as_str()))
        {
            return Err(TrainError::Leakage(id.clone()));
        }
    }
    let test_idx = data.indices(&plan.test_ids)?;
    let folds = plan
        .folds
        .iter()
        .map(|f| Ok((data.indices(&f.train_ids)?, data.indices(&f.val_ids)?)))
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok((test_idx, folds))
}

/// Trains every fold for every seed, picks the fold model with the lowest
/// validation loss per seed, and aggregates its test metrics over seeds.
///
/// The model is initialised from the seed alone; batch order and dropout
/// draw from a stream derived from `(seed, fold)`. Fold checkpoints are
/// written to `checkpoints` when given.
pub fn run_cv(
    data: &Dataset,
    plan: &SplitPlan,
    config: &ModelConfig,
    hp: &HyperParams,
    seeds: &[u64],
    exec: Execution,
    checkpoints: Option<&Path>,
) -> Result<CvResult, TrainError> {
    hp.validate()?;
    let mut config = config.clone();
    config.dropout = hp.dropout;
    let param_count = Model::<f32>::build(config.clone(), 0)?.param_count();
    let (test_idx, folds) = index_sets(data, plan)?;
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..folds.len()).map(move |f| (s, f)))
        .collect();
    let results = exec.map(jobs, |(seed, fold)| {
        let run = || -> Result<FoldResult, TrainError> {
            let mut model = Model::<f32>::build(config.clone(), seed)?;
            let (train_idx, val_idx) = &folds[fold];
            let out = train(&mut model, data, train_idx, val_idx, hp, derive_seed(seed, fold as u64))?;
            if let Some(dir) = checkpoints {
                let path = dir.join(format!("seed{seed}_fold{fold}.ckpt"));
                save_checkpoint(&path, model.params()).map_err(|source| TrainError::Io {
                    context: path.display().to_string(),
                    source,
                })?;
            }
            let started = Instant::now();
            let test = evaluate(&model, data, &test_idx, out.class_weights)?;
            Ok(FoldResult {
                seed,
                fold,
                best_epoch: out.best_epoch,
                epochs: out.history.len(),
                stopped_early: out.stopped_early,
                best_val_loss: out.best_val_loss,
                val_m_f1: out.best_val_m_f1,
                test: test.report,
                confusion: test.confusion,
                history: out.history,
                train_seconds: out.seconds,
                test_seconds: started.elapsed().as_secs_f64(),
            })
        };
        run().map_err(|e| TrainError::Fold {
            seed,
            fold,
            source: Box::new(e),
        })
    });
    let folds: Vec<FoldResult> = results.into_iter().collect::<Result<_, _>>()?;

    let seed_results: Vec<SeedResult> = seeds
        .iter()
        .map(|&seed| {
            let best = folds
                .iter()
                .filter(|f| f.seed == seed)
                .min_by(|a, b| a.best_val_loss.total_cmp(&b.best_val_loss).then(a.fold.cmp(&b.fold)))
                .expect("at least one fold");
            SeedResult {
                seed,
                selected_fold: best.fold,
                val_loss: best.best_val_loss,
                test: best.test,
                confusion: best.confusion,
            }
        })
        .collect();
    let aggregate = aggregate_runs(&seed_results.iter().map(|s| s.test).collect::<Vec<_>>())?;
    Ok(CvResult {
        param_count,
        folds,
        seeds: seed_results,
        aggregate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub hp: HyperParams,
    pub fold_val_m_f1: Vec<f64>,
    pub mean_val_m_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: HyperParams,
    /// Best first.
    pub leaderboard: Vec<GridEntry>,
}

/// Evaluates every grid point on every fold and ranks points by mean
/// validation M-F1; ties keep the lower [`HyperParams::sort_key`].
pub fn grid_search(
    data: &Dataset,
    plan: &SplitPlan,
    config: &ModelConfig,
    grid: &HyperGrid,
    seed: u64,
    exec: Execution,
) -> Result<GridResult, TrainError> {
    let points = grid.points();
    if points.is_empty() {
        return Err(TrainError::BadHyperParams("empty grid".into()));
    }
    let (_, folds) = index_sets(data, plan)?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..folds.len()).map(move |f| (p, f)))
        .collect();
    let scores = exec.map(jobs, |(p, fold)| {
        let hp = &points[p];
        let mut cfg = config.clone();
        cfg.dropout = hp.dropout;
        let run = || -> Result<f64, TrainError> {
            let mut model = Model::<f32>::build(cfg, seed)?;
            let (train_idx, val_idx) = &folds[fold];
            Ok(train(&mut model, data, train_idx, val_idx, hp, derive_seed(seed, fold as u64))?.best_val_m_f1)
        };
        run().map_err(|e| TrainError::Fold {
            seed,
            fold,
            source: Box::new(e),
        })
    });
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_, _>>()?;
    let mut leaderboard: Vec<GridEntry> = points
        .into_iter()
        .enumerate()
        .map(|(p, hp)| {
            let fold_val_m_f1 = scores[p * folds.len()..(p + 1) * folds.len()].to_vec();
            let mean_val_m_f1 = fold_val_m_f1.iter().sum::<f64>() / folds.len() as f64;
            GridEntry {
                hp,
                fold_val_m_f1,
                mean_val_m_f1,
            }
        })
        .collect();
    leaderboard.sort_by(|a, b| b.mean_val_m_f1.total_cmp(&a.mean_val_m_f1));
    Ok(GridResult {
        best: leaderboard[0].hp.clone(),
        leaderboard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::fixtures::{concat_to, plan, separable};

    fn quick() -> HyperParams {
        HyperParams {
            lr: 1e-2,
            max_epochs: 4,
            patience: 2,
            dropout: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_seed_has_zero_spread() {
        let data = separable(100, 1);
        let plan = plan(&data);
        let r = run_cv(&data, &plan, &concat_to(), &quick(), &[3], Execution::Sequential, None).unwrap();
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.seeds.len(), 1);
        assert_eq!(r.aggregate.std, MetricsReport::default());
        let chosen = r.folds.iter().min_by(|a, b| a.best_val_loss.total_cmp(&b.best_val_loss)).unwrap();
        assert_eq!(r.seeds[0].selected_fold, chosen.fold);
        assert_eq!(r.seeds[0].test, chosen.test);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let data = separable(100, 2);
        let plan = plan(&data);
        let run = |exec| run_cv(&data, &plan, &concat_to(), &quick(), &[0, 1], exec, None).unwrap();
        let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
        assert_eq!(a.seeds, b.seeds);
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn leakage_is_detected() {
        let data = separable(100, 3);
        let mut plan = plan(&data);
        let leaked = plan.test_ids[0].clone();
        plan.folds[2].train_ids.push(leaked.clone());
        let err = run_cv(&data, &plan, &concat_to(), &quick(), &[0], Execution::Sequential, None).unwrap_err();
        assert!(matches!(err, TrainError::Leakage(id) if id == leaked));
    }

    #[test]
    fn fold_errors_carry_seed_and_fold() {
        let data = separable(100, 4);
        let mut plan = plan(&data);
        let hate: HashSet<&str> = data
            .samples()
            .iter()
            .filter(|s| s.label.index() == 1)
            .map(|s| s.id.as_str())
            .collect();
        plan.folds[1].train_ids.retain(|id| hate.contains(id.as_str()));
        let err = run_cv(&data, &plan, &concat_to(), &quick(), &[9], Execution::Sequential, None).unwrap_err();
        assert!(matches!(err, TrainError::Fold { seed: 9, fold: 1, .. }), "{err}");
    }

    #[test]
    fn checkpoints_are_written_per_fold() {
        let data = separable(60, 5);
        let plan = plan(&data);
        let dir = tempfile::tempdir().unwrap();
        run_cv(&data, &plan, &concat_to(), &quick(), &[0], Execution::Sequential, Some(dir.path())).unwrap();
        for fold in 0..5 {
            assert!(dir.path().join(format!("seed0_fold{fold}.ckpt")).is_file());
        }
    }

    #[test]
    fn grid_prefers_the_dominant_point() {
        let data = separable(100, 6);
        let plan = plan(&data);
        let grid = HyperGrid {
            lr: vec![1e-9, 1e-2],
            l1: vec![0.0],
            l2: vec![0.0],
            dropout: vec![0.0],
            patience: vec![2],
            base: quick(),
        };
        let r = grid_search(&data, &plan, &concat_to(), &grid, 0, Execution::Sequential).unwrap();
        assert_eq!(r.leaderboard.len(), 2);
        assert_eq!(r.best.lr, 1e-2);
        let (good, bad) = (&r.leaderboard[0], &r.leaderboard[1]);
        assert!(good.fold_val_m_f1.iter().zip(&bad.fold_val_m_f1).all(|(g, b)| g > b));

        let single = HyperGrid::singleton(quick());
        let r = grid_search(&data, &plan, &concat_to(), &single, 0, Execution::Sequential).unwrap();
        assert_eq!(r.best, quick());
    }
}

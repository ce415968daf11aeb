//! The active-learning loop: train a base classifier on the initial fold,
//! then repeatedly select `k` unlabeled samples, annotate them, move them
//! into the labeled set and retrain.
//!
//! Every iteration is persisted before the next one starts, so a run can be
//! resumed after a crash and replayed onto another architecture.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;

use albench_core::acquisition::{
    bald_scores, check_selection, confidence_scores, cog_scores, coreset_greedy_detailed,
    max_entropy_scores, random_sample, select_top_k, variance_ratio_scores, Direction, ScoredPool,
};
use albench_core::config::{snapshot_config, ExperimentConfig, StrategyId};
use albench_core::index_set::{read_index_set, write_index_set, IndexSetFile, Provenance, SplitRole};
use albench_core::oracle::{annotate, Annotation, OracleSpec};
use albench_core::partition::{DataSplit, PartitionState};
use albench_core::records::IterationRecord;
use albench_core::rng::RunStreams;
use albench_core::tensor::CommitteePredictions;
use albench_model::checkpoint::{load_checkpoint, save_checkpoint};
use albench_model::swa::class_weights;
use albench_model::training::predict_classes;
use albench_model::vaal::{fit_vaal, ImageRows};
use albench_model::{
    evaluate, mc_dropout_predict, penultimate_embeddings, predict_proba, train_task_model,
    Network, TrainSettings,
};

use crate::error::{Result, RunError};
use crate::experiment::Experiment;
use crate::layout::{read_json_opt, write_json, ReplaySource, RunDir, RunLock, RunManifest, RunStatus};

/// Where runs are stored and where datasets are read from.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub runs_root: PathBuf,
    pub data_root: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: RunDir,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
}

/// How the samples added at each iteration are chosen.
#[derive(Debug, Clone)]
pub(crate) enum Acquire {
    /// The configured sampling function.
    Strategy,
    /// The persisted selections and annotations of another run.
    Replay { source: RunDir, source_hash: String },
}

/// Runs (or continues) the experiment for one `(seed, fold)` cell.
pub fn run_al_experiment(
    config: ExperimentConfig,
    seed: u64,
    fold: usize,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let exp = Experiment::prepare(config, &opts.data_root)?;
    exp.fold(fold)?;
    let run = RunDir::for_run(&opts.runs_root, &exp.hash.0, seed, fold);
    snapshot_config(&exp.config, &opts.runs_root.join(&exp.hash.0).join("config.json"))?;
    execute(&exp, seed, fold, &run, &Acquire::Strategy)
}

/// Continues an interrupted run from its last completed iteration.
pub fn resume(run_dir: &Path, data_root: &Path) -> Result<RunOutcome> {
    let run = RunDir::new(run_dir);
    let manifest = run.read_manifest()?;
    let config = crate::experiment::load_config(&run.config())?;
    let mut exp = Experiment::prepare(config, data_root)?;
    if exp.hash.0 != manifest.config_hash {
        return Err(RunError::Resume {
            dir: run.root.clone(),
            reason: format!(
                "config snapshot hashes to {} but the run was started with {}",
                exp.hash, manifest.config_hash
            ),
        });
    }
    let acquire = match &manifest.source {
        None => Acquire::Strategy,
        Some(src) => {
            let source = RunDir::new(&src.run_dir);
            use_source_split(&mut exp, &source)?;
            Acquire::Replay {
                source,
                source_hash: src.config_hash.clone(),
            }
        }
    };
    execute(&exp, manifest.seed, manifest.fold, &run, &acquire)
}

/// Replaces the experiment's split with the one persisted by `source`.
pub(crate) fn use_source_split(exp: &mut Experiment, source: &RunDir) -> Result<()> {
    let read = |role: &str| -> Result<Vec<usize>> {
        let path = source.split(role);
        if !path.is_file() {
            return Err(RunError::Replay {
                source_dir: source.root.clone(),
                reason: format!("missing split file {}", path.display()),
            });
        }
        let set = read_index_set(&path)?.set;
        if set.dataset_size != exp.dataset.len() {
            return Err(RunError::Replay {
                source_dir: source.root.clone(),
                reason: format!(
                    "source indexes a dataset of {} samples, target has {}",
                    set.dataset_size,
                    exp.dataset.len()
                ),
            });
        }
        Ok(set.indices)
    };
    exp.split = DataSplit {
        train: read("train")?,
        val: read("val")?,
        test: read("test")?,
    };
    exp.dev_size = exp.split.train.len() + exp.split.val.len();
    Ok(())
}

pub(crate) fn execute(
    exp: &Experiment,
    seed: u64,
    fold: usize,
    run: &RunDir,
    acquire: &Acquire,
) -> Result<RunOutcome> {
    let _lock = RunLock::acquire(&run.root)?;
    let manifest = RunManifest {
        config_hash: exp.hash.0.clone(),
        seed,
        fold,
        source: match acquire {
            Acquire::Strategy => None,
            Acquire::Replay {
                source,
                source_hash,
            } => Some(ReplaySource {
                config_hash: source_hash.clone(),
                run_dir: source.root.clone(),
            }),
        },
    };
    match read_json_opt::<RunManifest>(&run.manifest())? {
        Some(existing) if existing != manifest => {
            return Err(RunError::Resume {
                dir: run.root.clone(),
                reason: format!("run.json describes a different run: {existing:?}"),
            })
        }
        Some(_) => {}
        None => write_json(&run.manifest(), &manifest)?,
    }
    if let Some(status) = run.read_status()? {
        if status.is_finished() {
            log::info!("{} already finished; nothing to do", run.root.display());
            return Ok(RunOutcome {
                run_dir: run.clone(),
                records: run.read_records()?,
                status,
            });
        }
    }
    snapshot_config(&exp.config, &run.config())?;
    run.write_status(&RunStatus::Running)?;
    let result = Loop::new(exp, seed, fold, run, acquire).and_then(Loop::run);
    match &result {
        Ok(outcome) => run.write_status(&outcome.status)?,
        Err(e) => run.write_status(&RunStatus::Failed {
            message: e.to_string(),
        })?,
    }
    result
}

struct Loop<'a> {
    exp: &'a Experiment,
    seed: u64,
    fold: usize,
    run: &'a RunDir,
    acquire: &'a Acquire,
    streams: RunStreams,
    state: PartitionState,
    /// Annotated labels in the order they were added.
    labeled: Vec<Annotation>,
    records: Vec<IterationRecord>,
    model: Option<Network>,
}

/// Result of one sampling step.
struct Selection {
    indices: Vec<usize>,
    /// Per-sample values worth keeping for inspection: `(index, value)`.
    dump: Option<(&'static str, Vec<(usize, f64)>)>,
}

impl<'a> Loop<'a> {
    fn new(
        exp: &'a Experiment,
        seed: u64,
        fold: usize,
        run: &'a RunDir,
        acquire: &'a Acquire,
    ) -> Result<Self> {
        let initial = match acquire {
            Acquire::Strategy => exp.fold(fold)?.to_vec(),
            Acquire::Replay { source, .. } => read_source_selection(source, 0)?,
        };
        let mut state = PartitionState::new(exp.split.clone(), initial)?;
        for (role, set) in [("train", &exp.split.train), ("val", &exp.split.val), ("test", &exp.split.test)] {
            let role_id = match role {
                "train" => SplitRole::Train,
                "val" => SplitRole::Val,
                _ => SplitRole::Test,
            };
            let file = IndexSetFile::new(set.clone(), exp.dataset_id(), exp.dataset.len(), role_id, provenance(exp, seed, fold, None))?;
            write_index_set(&file, &run.split(role))?;
        }

        // Rebuild the loop state from completed iterations.
        let records = run.read_records()?;
        for (pos, r) in records.iter().enumerate() {
            if r.iteration != pos || r.seed != seed || r.fold != fold {
                return Err(RunError::Resume {
                    dir: run.root.clone(),
                    reason: format!("records.jsonl entry {pos} does not belong to this run"),
                });
            }
        }
        let mut labeled = Vec::new();
        for i in 0..records.len() {
            let ann: Vec<Annotation> = read_json_opt(&run.annotations(i))?.ok_or_else(|| RunError::Resume {
                dir: run.root.clone(),
                reason: format!("iteration {i} is recorded but {} is missing", run.annotations(i).display()),
            })?;
            if i > 0 {
                let mut idx: Vec<usize> = ann.iter().map(|a| a.index).collect();
                idx.sort_unstable();
                state.annotate(&idx)?;
            }
            labeled.extend(ann);
        }
        if !records.is_empty() && state.labeled.len() != labeled.len() {
            return Err(RunError::Resume {
                dir: run.root.clone(),
                reason: "persisted annotations do not match the labeled set".into(),
            });
        }
        let cfg = &exp.config;
        let needs_model = !cfg.retrain_from_scratch
            || (matches!(acquire, Acquire::Strategy) && cfg.strategy_id != StrategyId::Random);
        let model = match records.last() {
            Some(last) if needs_model && records.len() <= cfg.num_al_iterations => {
                let path = run.checkpoint(last.iteration);
                if !path.is_file() {
                    return Err(RunError::Resume {
                        dir: run.root.clone(),
                        reason: format!(
                            "the next iteration needs the model of iteration {}, but {} is missing",
                            last.iteration,
                            path.display()
                        ),
                    });
                }
                Some(load_checkpoint(&path)?)
            }
            _ => None,
        };
        if !records.is_empty() {
            log::info!("resuming {} after iteration {}", run.root.display(), records.len() - 1);
        }
        Ok(Loop {
            exp,
            seed,
            fold,
            run,
            acquire,
            streams: RunStreams::new(seed),
            state,
            labeled,
            records,
            model,
        })
    }

    fn run(mut self) -> Result<RunOutcome> {
        let cfg = &self.exp.config;
        let mut status = RunStatus::Complete {
            iterations: cfg.num_al_iterations,
        };
        for i in self.records.len()..=cfg.num_al_iterations {
            let start = Instant::now();
            let added = if i == 0 {
                self.state
                    .labeled
                    .iter()
                    .map(|&index| Annotation {
                        index,
                        label: self.exp.dataset.label(index),
                        corrupted: false,
                    })
                    .collect()
            } else {
                let k = match self.acquire {
                    Acquire::Strategy => self.exp.budget,
                    Acquire::Replay { source, .. } => read_source_selection(source, i)?.len(),
                };
                if k > self.state.unlabeled.len() {
                    log::warn!(
                        "budget {k} exceeds the {} unlabeled samples left; stopping before iteration {i}",
                        self.state.unlabeled.len()
                    );
                    status = RunStatus::BudgetExhausted {
                        iteration: i,
                        budget: k,
                        unlabeled: self.state.unlabeled.len(),
                    };
                    break;
                }
                let (selected, annotations) = self.acquire_batch(i, k)?;
                check_selection(&selected, &self.state.unlabeled, k)?;
                self.state.annotate(&selected)?;
                annotations
            };
            self.persist_selection(i, &added)?;
            self.labeled.extend(added.iter().copied());
            let record = self.train_iteration(i, &added, start)?;
            self.run.append_record(&record)?;
            log::info!(
                "seed {} fold {} iteration {i}: {} labeled, val {:.4}, test {:.4}",
                self.seed,
                self.fold,
                record.labeled_count,
                record.val_accuracy,
                record.test_accuracy
            );
            self.records.push(record);
        }
        Ok(RunOutcome {
            run_dir: self.run.clone(),
            records: self.records,
            status,
        })
    }

    /// Selects and annotates the batch added at iteration `i`.
    fn acquire_batch(&mut self, i: usize, k: usize) -> Result<(Vec<usize>, Vec<Annotation>)> {
        match self.acquire {
            Acquire::Strategy => {
                let selection = self.select(i, k)?;
                if let (true, Some((column, values))) = (self.exp.config.dump_scores, &selection.dump) {
                    write_scores(&self.run.scores(i), column, values)?;
                }
                let oracle = OracleSpec {
                    noise_fraction: self.exp.config.oracle_noise_fraction,
                    mode: self.exp.config.noise_mode,
                    num_classes: self.exp.dataset.num_classes,
                };
                let annotations = annotate(
                    &selection.indices,
                    self.exp.dataset.labels(),
                    &oracle,
                    &mut self.streams.noise(i),
                )?;
                Ok((selection.indices, annotations))
            }
            Acquire::Replay { source, .. } => {
                let selected = read_source_selection(source, i)?;
                let annotations: Vec<Annotation> = read_json_opt(&source.annotations(i))?
                    .ok_or_else(|| RunError::Replay {
                        source_dir: source.root.clone(),
                        reason: format!("iteration {i} has no annotations file ({})", source.annotations(i).display()),
                    })?;
                let mut annotated: Vec<usize> = annotations.iter().map(|a| a.index).collect();
                annotated.sort_unstable();
                if annotated != selected {
                    return Err(RunError::Replay {
                        source_dir: source.root.clone(),
                        reason: format!("iteration {i}: annotations do not match the selected set"),
                    });
                }
                Ok((selected, annotations))
            }
        }
    }

    /// Runs the configured sampling function over the unlabeled pool. Only
    /// model outputs, images and indices reach the samplers.
    fn select(&mut self, i: usize, k: usize) -> Result<Selection> {
        let cfg = &self.exp.config;
        let data = &self.exp.dataset;
        let pool = self.state.unlabeled.clone();
        let strategy = cfg.strategy_id;
        let top_k = |scores: Vec<f64>, direction: Direction, column: &'static str| -> Result<Selection> {
            let scored = ScoredPool::new(pool.clone(), scores, direction)?;
            let indices = select_top_k(&scored, k)?;
            let dump = pool.iter().copied().zip(scored.scores).collect();
            Ok(Selection {
                indices,
                dump: Some((column, dump)),
            })
        };
        match strategy {
            StrategyId::Random => Ok(Selection {
                indices: random_sample(&pool, k, &mut self.streams.sample(i))?,
                dump: None,
            }),
            StrategyId::Uc | StrategyId::UcMostConfident => {
                let probs = predict_proba(need_model(self.model.as_mut(), strategy)?, data, &pool)?;
                let direction = if strategy == StrategyId::Uc {
                    Direction::LowerIsSelected
                } else {
                    Direction::HigherIsSelected
                };
                top_k(confidence_scores(&probs, &pool)?, direction, "max_probability")
            }
            StrategyId::Maxent | StrategyId::Bald => {
                let mc = mc_dropout_predict(need_model(self.model.as_mut(), strategy)?, data, &pool, cfg.mc_passes, &mut self.streams.sample(i))?;
                if strategy == StrategyId::Bald {
                    top_k(bald_scores(&mc, &pool)?, Direction::HigherIsSelected, "bald")
                } else {
                    top_k(max_entropy_scores(&mc, &pool)?, Direction::HigherIsSelected, "entropy")
                }
            }
            StrategyId::Cog => {
                let emb = penultimate_embeddings(need_model(self.model.as_mut(), strategy)?, data, &self.state.train)?;
                top_k(cog_scores(&emb, &pool)?, Direction::HigherIsSelected, "centroid_distance")
            }
            StrategyId::Coreset => {
                let emb = penultimate_embeddings(need_model(self.model.as_mut(), strategy)?, data, &self.state.train)?;
                let picked = coreset_greedy_detailed(&emb, &self.state.labeled, &pool, k)?;
                let dump = picked
                    .pick_order
                    .iter()
                    .zip(&picked.radii[1..])
                    .map(|(&idx, &r)| (idx, r))
                    .collect();
                Ok(Selection {
                    indices: picked.selected,
                    dump: Some(("radius_after_pick", dump)),
                })
            }
            StrategyId::Vaal => {
                let labeled_rows = image_rows(data, &self.state.labeled);
                let pool_rows = image_rows(data, &pool);
                let mut scorer = fit_vaal(&labeled_rows, &pool_rows, &cfg.vaal, &mut self.streams.vaal(i))?;
                let seen = scorer.score_seen(&pool, &pool_rows)?;
                top_k(seen.probabilities, Direction::LowerIsSelected, "p_seen")
            }
            StrategyId::Qbc => {
                let pairs = self.labeled_pairs();
                let settings = self.settings(i - 1, &pairs)?;
                let mut votes: Vec<Vec<usize>> = vec![Vec::with_capacity(cfg.committee_size); pool.len()];
                for m in 0..cfg.committee_size {
                    let (mut member, _) = train_task_model(
                        data,
                        self.exp.network_spec(),
                        &settings,
                        &pairs,
                        &self.state.val,
                        None,
                        &mut self.streams.committee_member(i, m),
                        &mut self.streams.committee_augment(i, m),
                    )?;
                    for (v, c) in votes.iter_mut().zip(predict_classes(&mut member, data, &pool)?) {
                        v.push(c);
                    }
                }
                let votes = CommitteePredictions::new(votes, data.num_classes)?;
                top_k(variance_ratio_scores(&votes, &pool)?, Direction::HigherIsSelected, "variance_ratio")
            }
        }
    }

    fn labeled_pairs(&self) -> Vec<(usize, usize)> {
        self.labeled.iter().map(|a| (a.index, a.label)).collect()
    }

    fn settings(&self, iteration: usize, pairs: &[(usize, usize)]) -> Result<TrainSettings> {
        let mut settings = TrainSettings::from_config(&self.exp.config, iteration)?;
        if self.exp.config.imbalance_enabled {
            let labels: Vec<usize> = pairs.iter().map(|&(_, y)| y).collect();
            let w = class_weights(&labels, self.exp.dataset.num_classes)?;
            settings.class_weights = Some(w.into_iter().map(|x| x as f32).collect());
        }
        Ok(settings)
    }

    fn persist_selection(&self, i: usize, added: &[Annotation]) -> Result<()> {
        let mut indices: Vec<usize> = added.iter().map(|a| a.index).collect();
        indices.sort_unstable();
        let role = if i == 0 { SplitRole::Labeled } else { SplitRole::SelectedAt(i) };
        let file = IndexSetFile::new(
            indices,
            self.exp.dataset_id(),
            self.exp.dataset.len(),
            role,
            provenance(self.exp, self.seed, self.fold, Some(i)),
        )?;
        write_index_set(&file, &self.run.selected(i))?;
        write_json(&self.run.annotations(i), &added)
    }

    fn train_iteration(&mut self, i: usize, added: &[Annotation], start: Instant) -> Result<IterationRecord> {
        let cfg = &self.exp.config;
        let data = &self.exp.dataset;
        let pairs = self.labeled_pairs();
        let settings = self.settings(i, &pairs)?;
        let warm = if cfg.retrain_from_scratch { None } else { self.model.as_ref() };
        let (mut net, mut report) = train_task_model(
            data,
            self.exp.network_spec(),
            &settings,
            &pairs,
            &self.state.val,
            warm,
            &mut self.streams.task_model(i),
            &mut self.streams.task_augment(i),
        )?;
        let test_accuracy = evaluate(&mut net, data, &self.state.test)?;
        report.test_accuracy = Some(test_accuracy);
        write_json(&self.run.train_report(i), &report)?;
        let checkpoint_ref = if cfg.save_checkpoints {
            let path = self.run.checkpoint(i);
            save_checkpoint(&mut net, &path)?;
            Some(self.run.relative(&path))
        } else {
            None
        };
        self.model = Some(net);
        Ok(IterationRecord {
            config_hash: self.exp.hash.0.clone(),
            seed: self.seed,
            fold: self.fold,
            iteration: i,
            labeled_count: self.labeled.len(),
            labeled_fraction: self.exp.labeled_fraction(self.labeled.len()),
            selected_indices: self.run.relative(&self.run.selected(i)),
            val_accuracy: report.best_val_accuracy,
            test_accuracy,
            wall_time_s: start.elapsed().as_secs_f64(),
            checkpoint_ref,
            source_config_hash: match self.acquire {
                Acquire::Strategy => None,
                Acquire::Replay { source_hash, .. } => Some(source_hash.clone()),
            },
            corrupted_labels: added.iter().filter(|a| a.corrupted).count(),
        })
    }
}

fn need_model(model: Option<&mut Network>, strategy: StrategyId) -> Result<&mut Network> {
    model.ok_or_else(|| RunError::Config(format!("strategy {strategy} needs a trained model")))
}

fn provenance(exp: &Experiment, seed: u64, fold: usize, iteration: Option<usize>) -> Provenance {
    Provenance {
        config_hash: exp.hash.0.clone(),
        seed: Some(seed),
        fold: Some(fold),
        iteration,
    }
}

/// Selected set of iteration `i` in a source run; a missing file is an
/// error naming the gap.
pub(crate) fn read_source_selection(source: &RunDir, i: usize) -> Result<Vec<usize>> {
    let path = source.selected(i);
    if !path.is_file() {
        return Err(RunError::Replay {
            source_dir: source.root.clone(),
            reason: format!("iteration {i} has no selected-set file ({})", path.display()),
        });
    }
    Ok(read_index_set(&path)?.set.indices)
}

/// Raw pixels, one row per index.
fn image_rows(data: &albench_core::dataset::Dataset, indices: &[usize]) -> ImageRows {
    let d = data.image_len();
    let mut rows = Array2::zeros((indices.len(), d));
    for (mut row, &i) in rows.rows_mut().into_iter().zip(indices) {
        row.assign(&ndarray::ArrayView1::from(data.image(i)));
    }
    rows
}

fn write_scores(path: &Path, column: &str, values: &[(usize, f64)]) -> Result<()> {
    let mut text = format!("index,{column}\n");
    for (i, v) in values {
        text.push_str(&format!("{i},{v}\n"));
    }
    crate::layout::write_atomic(path, text.as_bytes())
}

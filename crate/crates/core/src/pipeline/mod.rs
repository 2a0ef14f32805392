//! End-to-end experiment pipeline. Every artifact lives under one output
//! directory and carries a fingerprint of everything it was computed from;
//! stages reuse matching files and refuse to overwrite mismatched ones unless
//! forced.

mod config;
mod long;

pub use config::{
    fingerprint, EpisodeCounts, ExperimentConfig, LongHorizonParams, SweepValues, SEED_ENV,
};
pub use long::{build_long_horizon, mean_shortest_length};

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::correction::{
    collect_corrections, dagger_collect, dagger_collect_budget, read_dataset, write_dataset,
    CollectionConfig, Collector, CorrectionDataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    compute_metrics, evaluate, evaluate_traced, read_results, table_markdown, write_csv,
    write_markdown, write_results, write_traces, MetricsReport, ReportRow, RolloutConfig,
    StepStatus, Walker,
};
use crate::jsonl;
use crate::memory::{MemoryMode, RefineParams};
use crate::policy::{
    bc_train, load_checkpoint, save_checkpoint, Expert, PolicyParams, Sample, TrainConfig,
};
use crate::world::io::{read_episodes, read_world, write_episodes, write_world};
use crate::world::{
    derive_seed, generate_episode, generate_world, reverse_episode, Action, ActuationNoise,
    Episode, EpisodeParams, GridWorld,
};

/// Episode ids (and sampling seeds) of each split start here.
pub const TRAIN_FIRST_ID: u64 = 0;
pub const VAL_FIRST_ID: u64 = 1_000_000;
pub const LONG_FIRST_ID: u64 = 2_000_000;

const MANIFEST: &str = "config.toml";
const DEMO_STREAM: u64 = 0xDE30;

/// Table names used in reports.
pub const BASELINE: &str = "baseline";
pub const WITH_AMR: &str = "+AMR";
pub const WITH_AMR_CF: &str = "+AMR+CF";
pub const TRUST_REGION: &str = "trust-region";
pub const DAGGER: &str = "dagger";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Long,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Long => "long",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [Split::Train, Split::Val, Split::Long]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown split `{s}` (expected train, val or long)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    LambdaR,
    WV,
    Tau,
    DataBudget,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        SweepAxis::K,
        SweepAxis::LambdaR,
        SweepAxis::WV,
        SweepAxis::Tau,
        SweepAxis::DataBudget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::LambdaR => "lambda-r",
            SweepAxis::WV => "w-v",
            SweepAxis::Tau => "tau",
            SweepAxis::DataBudget => "data-budget",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!("unknown sweep axis `{s}` (expected k, lambda-r, w-v, tau or data-budget)")
            })
    }
}

/// Which trained policy a command refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Supervised on expert demonstrations.
    Sft,
    /// Fine-tuned on trust-region corrections.
    EcfTrustRegion,
    /// Fine-tuned on DAgger labels at the trust-region pair count.
    EcfDagger,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Sft => "sft",
            PolicyKind::EcfTrustRegion => "ecf-tr",
            PolicyKind::EcfDagger => "ecf-dagger",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [
            PolicyKind::Sft,
            PolicyKind::EcfTrustRegion,
            PolicyKind::EcfDagger,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown policy `{s}` (expected sft, ecf-tr or ecf-dagger)"))
    }
}

/// World and episode splits of one seed.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub seed: u64,
    pub dir: PathBuf,
    pub world: GridWorld,
    pub train: Vec<Episode>,
    pub val: Vec<Episode>,
    /// Covers both the train and the val file.
    pub episodes_fp: String,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub name: String,
    pub params: PolicyParams,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct Corrections {
    pub name: String,
    pub data: CorrectionDataset,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongSplitStats {
    pub seed: u64,
    pub episodes: usize,
    pub mean_shortest_length: f64,
}

/// Everything `run` writes under `reports/`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub fingerprint: String,
    pub modules: Vec<ReportRow>,
    pub memory: Vec<ReportRow>,
    pub dagger: Vec<ReportRow>,
    pub long_horizon: Vec<ReportRow>,
    pub long_splits: Vec<LongSplitStats>,
}

/// Mean SR over the rows of `config`, if any.
pub fn mean_sr(rows: &[ReportRow], config: &str) -> Option<f64> {
    let srs: Vec<f64> = rows
        .iter()
        .filter(|r| r.config == config)
        .map(|r| r.metrics.sr)
        .collect();
    (!srs.is_empty()).then(|| srs.iter().sum::<f64>() / srs.len() as f64)
}

/// Refinement and collection settings one policy family is trained under.
#[derive(Debug, Clone, PartialEq)]
struct Variant {
    /// Appended to artifact names; empty for the configured defaults.
    suffix: String,
    refine: RefineParams,
    collection: CollectionConfig,
}

struct SweepPoint {
    label: String,
    variant: Variant,
    budget: Option<usize>,
}

/// Sample `n` episodes with consecutive ids from `first_id`, skipping ids
/// whose sampling fails. Gives up after `4n` ids.
pub fn generate_split(
    world: &GridWorld,
    first_id: u64,
    n: usize,
    params: &EpisodeParams,
) -> Result<Vec<Episode>> {
    let limit = first_id + 4 * n as u64;
    let mut out = Vec::with_capacity(n);
    let mut next = first_id;
    while out.len() < n && next < limit {
        let end = (next + (n - out.len()) as u64).min(limit);
        let batch: Vec<Result<Episode>> = (next..end)
            .into_par_iter()
            .map(|id| generate_episode(world, id, params))
            .collect();
        for r in batch {
            match r {
                Ok(e) => out.push(e),
                Err(Error::SamplingFailure(_)) | Err(Error::UnreachableGoal) => {}
                Err(e) => return Err(e),
            }
        }
        next = end;
    }
    if out.len() < n {
        return Err(Error::InsufficientEpisodes(format!(
            "sampled {} of {n} episodes from ids {first_id}..{limit}",
            out.len()
        )));
    }
    Ok(out)
}

/// Behavior-cloning data: expert rollouts under actuation noise over
/// `episodes` and their reversals. Every visited state becomes one sample
/// labelled with the expert's noise-free four-action continuation.
pub fn expert_demonstrations(
    world: &GridWorld,
    episodes: &[Episode],
    rollout: &RolloutConfig,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut all = episodes.to_vec();
    for e in episodes {
        all.push(reverse_episode(world, e)?);
    }
    let base = derive_seed(seed, DEMO_STREAM);
    let per_episode: Vec<Vec<Sample>> = all
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            demo_episode(
                world,
                e,
                rollout,
                ActuationNoise::enabled(derive_seed(base, i as u64)),
            )
        })
        .collect::<Result<_>>()?;
    Ok(per_episode.into_iter().flatten().collect())
}

fn demo_episode(
    world: &GridWorld,
    e: &Episode,
    rollout: &RolloutConfig,
    noise: ActuationNoise,
) -> Result<Vec<Sample>> {
    let expert = Expert::new(world, &e.expert_path, world.params.success_radius)?;
    let mut walker = Walker::new(world, e, rollout, noise)?;
    let mut out = Vec::new();
    loop {
        let chunk = expert.chunk(&walker.state())?;
        out.push(Sample {
            features: walker.features()?,
            chunk,
        });
        let a = chunk.actions()[0];
        if a == Action::Stop || walker.apply(a)? != StepStatus::Running {
            return Ok(out);
        }
    }
}

/// The `fingerprint` field of the first line of a JSON or JSON Lines file.
pub fn stored_fingerprint(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(first.trim_end())?;
    v.get("fingerprint")
        .and_then(|f| f.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Config(format!("{} has no fingerprint", path.display())))
}

fn manifest_fingerprint(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# fingerprint = \""))
        .and_then(|l| l.strip_suffix('"'))
        .unwrap_or("")
        .to_string())
}

fn row(
    table: &str,
    config: &str,
    value: &str,
    seed: u64,
    pairs: usize,
    metrics: MetricsReport,
) -> ReportRow {
    ReportRow {
        table: table.into(),
        config: config.into(),
        value: value.into(),
        seed,
        pairs,
        metrics,
    }
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    root: PathBuf,
    force: bool,
    verbose: bool,
    /// Last generated demonstration set, keyed by its fingerprint.
    demos: Mutex<Option<(String, Arc<Vec<Sample>>)>>,
}

impl Pipeline {
    /// Validate `cfg` and bind it to its output directory. A directory that
    /// already belongs to a different configuration is refused unless
    /// `force` is set.
    pub fn open(cfg: ExperimentConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        let p = Pipeline {
            root: cfg.output_dir.clone(),
            cfg,
            force,
            verbose: false,
            demos: Mutex::new(None),
        };
        p.bind_manifest()?;
        Ok(p)
    }

    /// Print stage progress to stderr.
    pub fn verbose(mut self, on: bool) -> Self {
        self.verbose = on;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn bind_manifest(&self) -> Result<()> {
        let path = self.root.join(MANIFEST);
        let fp = self.cfg.fingerprint();
        if path.exists() {
            let found = manifest_fingerprint(&path)?;
            if found == fp {
                return Ok(());
            }
            if !self.force {
                return Err(Error::FingerprintMismatch {
                    path,
                    expected: fp,
                    found,
                });
            }
        }
        let mut stored = self.cfg.clone();
        stored.output_dir = PathBuf::new();
        stored.memory_mode = MemoryMode::default();
        let text = format!("# fingerprint = \"{fp}\"\n{}", stored.to_toml()?);
        jsonl::write_atomic(&path, text.as_bytes())
    }

    fn log(&self, seed: u64, msg: impl std::fmt::Display) {
        if self.verbose {
            eprintln!("[seed {seed}] {msg}");
        }
    }

    fn stage<T>(&self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        f().map_err(|e| e.in_stage(name))
    }

    /// Whether `path` already holds the artifact with fingerprint `fp`.
    fn reusable(&self, path: &Path, fp: &str) -> Result<bool> {
        if !path.exists() {
            return Ok(false);
        }
        match stored_fingerprint(path) {
            Ok(found) if found == fp => Ok(true),
            _ if self.force => Ok(false),
            Ok(found) => Err(Error::FingerprintMismatch {
                path: path.to_path_buf(),
                expected: fp.to_string(),
                found,
            }),
            Err(e) => Err(e),
        }
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed-{seed}"))
    }

    fn base_variant(&self) -> Variant {
        Variant {
            suffix: String::new(),
            refine: self.cfg.refine,
            collection: self.cfg.collection.clone(),
        }
    }

    fn rollout(&self, mode: MemoryMode, v: &Variant) -> RolloutConfig {
        RolloutConfig {
            refine: v.refine,
            ..self.cfg.rollout(mode)
        }
    }

    pub fn world(&self, seed: u64) -> Result<(GridWorld, String)> {
        self.stage("gen-world", || {
            let fp = fingerprint("world", &(seed, &self.cfg.world));
            let path = self.seed_dir(seed).join("world.jsonl");
            if self.reusable(&path, &fp)? {
                return Ok((read_world(&path)?.1, fp));
            }
            self.log(seed, "generating world");
            let world = generate_world(seed, &self.cfg.world)?;
            write_world(&path, &world, &fp)?;
            Ok((world, fp))
        })
    }

    pub fn episodes(&self, seed: u64) -> Result<SeedData> {
        let (world, world_fp) = self.world(seed)?;
        self.stage("gen-episodes", || {
            let c = &self.cfg;
            let fp = fingerprint(
                "episodes",
                &(&world_fp, &c.episodes, c.counts.train, c.counts.val),
            );
            let dir = self.seed_dir(seed);
            let split = |name: &str, first: u64, n: usize| -> Result<Vec<Episode>> {
                let path = dir.join("episodes").join(format!("{name}.jsonl"));
                if self.reusable(&path, &fp)? {
                    return Ok(read_episodes(&path)?.1);
                }
                self.log(seed, format!("sampling {n} {name} episodes"));
                let eps = generate_split(&world, first, n, &c.episodes)?;
                write_episodes(&path, &eps, &fp)?;
                Ok(eps)
            };
            let train = split("train", TRAIN_FIRST_ID, c.counts.train)?;
            let val = split("val", VAL_FIRST_ID, c.counts.val)?;
            Ok((train, val, fp))
        })
        .map(|(train, val, episodes_fp)| SeedData {
            seed,
            dir: self.seed_dir(seed),
            world,
            train,
            val,
            episodes_fp,
        })
    }

    pub fn long_split(&self, data: &SeedData) -> Result<(Vec<Episode>, String)> {
        self.stage("stitch-long", || {
            let c = &self.cfg;
            let fp = fingerprint(
                "long",
                &(&data.episodes_fp, &c.long_horizon, c.counts.long_horizon),
            );
            let path = data.dir.join("episodes").join("long.jsonl");
            if self.reusable(&path, &fp)? {
                return Ok((read_episodes(&path)?.1, fp));
            }
            self.log(data.seed, "stitching long-horizon episodes");
            let eps = build_long_horizon(
                &data.world,
                &data.val,
                &c.long_horizon,
                c.counts.long_horizon,
                LONG_FIRST_ID,
            )?;
            write_episodes(&path, &eps, &fp)?;
            Ok((eps, fp))
        })
    }

    /// Episodes and fingerprint of `split`.
    pub fn split(&self, data: &SeedData, split: Split) -> Result<(Vec<Episode>, String)> {
        match split {
            Split::Train => Ok((data.train.clone(), data.episodes_fp.clone())),
            Split::Val => Ok((data.val.clone(), data.episodes_fp.clone())),
            Split::Long => self.long_split(data),
        }
    }

    fn demos(&self, data: &SeedData, rollout: &RolloutConfig) -> Result<Arc<Vec<Sample>>> {
        let key = fingerprint("demos", &(&data.episodes_fp, rollout));
        let mut cache = self.demos.lock().expect("demo cache poisoned");
        if let Some((k, d)) = cache.as_ref() {
            if *k == key {
                return Ok(Arc::clone(d));
            }
        }
        *cache = None;
        let d = Arc::new(expert_demonstrations(
            &data.world,
            &data.train,
            rollout,
            data.seed,
        )?);
        *cache = Some((key, Arc::clone(&d)));
        Ok(d)
    }

    fn checkpoint(&self, data: &SeedData, name: &str) -> PathBuf {
        data.dir.join("policies").join(format!("{name}.json"))
    }

    fn sft_variant(&self, data: &SeedData, mode: MemoryMode, v: &Variant) -> Result<Trained> {
        self.stage("train", || {
            let rollout = self.rollout(mode, v);
            let train = TrainConfig {
                seed: derive_seed(self.cfg.train.seed, data.seed),
                ..self.cfg.train.clone()
            };
            let fp = fingerprint("sft", &(&data.episodes_fp, &rollout, &train));
            let name = format!("sft-{mode}{}", v.suffix);
            let path = self.checkpoint(data, &name);
            if self.reusable(&path, &fp)? {
                let params = load_checkpoint(&path)?.1;
                return Ok(Trained {
                    name,
                    params,
                    fingerprint: fp,
                });
            }
            let demos = self.demos(data, &rollout)?;
            self.log(
                data.seed,
                format!("training {name} on {} samples", demos.len()),
            );
            let params = bc_train(&demos, &train, None)?.params;
            save_checkpoint(&path, &params, &fp)?;
            Ok(Trained {
                name,
                params,
                fingerprint: fp,
            })
        })
    }

    /// Supervised policy for `mode` under the configured refinement.
    pub fn sft(&self, data: &SeedData, mode: MemoryMode) -> Result<Trained> {
        self.sft_variant(data, mode, &self.base_variant())
    }

    fn collect_variant(
        &self,
        data: &SeedData,
        policy: &Trained,
        v: &Variant,
        collector: Collector,
        budget: Option<usize>,
        name: &str,
    ) -> Result<Corrections> {
        self.stage("collect", || {
            let rollout = self.rollout(MemoryMode::Amr, v);
            let cfg = CollectionConfig {
                seeds: vec![data.seed],
                ..v.collection.clone()
            };
            let fp = fingerprint(
                "corrections",
                &(collector, &policy.fingerprint, &cfg, &rollout, budget),
            );
            let path = data.dir.join("corrections").join(format!("{name}.jsonl"));
            if self.reusable(&path, &fp)? {
                let data = read_dataset(&path)?.1;
                return Ok(Corrections {
                    name: name.into(),
                    data,
                    fingerprint: fp,
                });
            }
            self.log(data.seed, format!("collecting {name} with {}", policy.name));
            let id = format!("{}@{}", policy.name, policy.fingerprint);
            let out = match (collector, budget) {
                (Collector::TrustRegion, None) => collect_corrections(
                    &data.world,
                    &data.train,
                    &policy.params,
                    &id,
                    &cfg,
                    &rollout,
                )?,
                (Collector::TrustRegion, Some(n)) => collect_corrections(
                    &data.world,
                    &data.train,
                    &policy.params,
                    &id,
                    &cfg,
                    &rollout,
                )?
                .truncated(n),
                (Collector::Dagger, None) => dagger_collect(
                    &data.world,
                    &data.train,
                    &policy.params,
                    &id,
                    &cfg,
                    &rollout,
                )?,
                (Collector::Dagger, Some(n)) => dagger_collect_budget(
                    &data.world,
                    &data.train,
                    &policy.params,
                    &id,
                    &cfg,
                    &rollout,
                    n,
                )?,
            };
            write_dataset(&path, &out, &fp)?;
            Ok(Corrections {
                name: name.into(),
                data: out,
                fingerprint: fp,
            })
        })
    }

    /// Trust-region corrections from the AMR policy, or DAgger labels cut to
    /// the same pair count.
    pub fn corrections(&self, data: &SeedData, collector: Collector) -> Result<Corrections> {
        let v = self.base_variant();
        let sft = self.sft_variant(data, MemoryMode::Amr, &v)?;
        let tr = self.collect_variant(data, &sft, &v, Collector::TrustRegion, None, "tr")?;
        match collector {
            Collector::TrustRegion => Ok(tr),
            Collector::Dagger => self.collect_variant(
                data,
                &sft,
                &v,
                Collector::Dagger,
                Some(tr.data.len()),
                "dagger",
            ),
        }
    }

    fn finetune_variant(
        &self,
        data: &SeedData,
        base: &Trained,
        corrections: &Corrections,
        v: &Variant,
        name: &str,
    ) -> Result<Trained> {
        self.stage("train", || {
            let rollout = self.rollout(MemoryMode::Amr, v);
            let cfg = TrainConfig {
                seed: derive_seed(self.cfg.finetune.seed, data.seed),
                ..self.cfg.finetune.clone()
            };
            let fp = fingerprint(
                "finetune",
                &(&base.fingerprint, &corrections.fingerprint, &cfg),
            );
            let path = self.checkpoint(data, name);
            if self.reusable(&path, &fp)? {
                let params = load_checkpoint(&path)?.1;
                return Ok(Trained {
                    name: name.into(),
                    params,
                    fingerprint: fp,
                });
            }
            let demos = self.demos(data, &rollout)?;
            let mut samples = Vec::with_capacity(demos.len() + corrections.data.len());
            samples.extend(demos.iter().cloned());
            samples.extend(corrections.data.samples());
            self.log(
                data.seed,
                format!(
                    "fine-tuning {name} on {} demonstrations + {} corrections",
                    demos.len(),
                    corrections.data.len()
                ),
            );
            let params = bc_train(&samples, &cfg, Some(&base.params))?.params;
            save_checkpoint(&path, &params, &fp)?;
            Ok(Trained {
                name: name.into(),
                params,
                fingerprint: fp,
            })
        })
    }

    /// The policy of `kind`; supervised policies are trained for `mode`,
    /// fine-tuned ones always start from the AMR policy.
    pub fn policy(&self, data: &SeedData, kind: PolicyKind, mode: MemoryMode) -> Result<Trained> {
        let v = self.base_variant();
        let collector = match kind {
            PolicyKind::Sft => return self.sft_variant(data, mode, &v),
            PolicyKind::EcfTrustRegion => Collector::TrustRegion,
            PolicyKind::EcfDagger => Collector::Dagger,
        };
        let sft = self.sft_variant(data, MemoryMode::Amr, &v)?;
        let corrections = self.corrections(data, collector)?;
        self.finetune_variant(data, &sft, &corrections, &v, kind.name())
    }

    fn eval_variant(
        &self,
        data: &SeedData,
        policy: &Trained,
        split: Split,
        mode: MemoryMode,
        v: &Variant,
    ) -> Result<MetricsReport> {
        let (episodes, split_fp) = self.split(data, split)?;
        self.stage("eval", || {
            let rollout = self.rollout(mode, v);
            let fp = fingerprint(
                "eval",
                &(&policy.fingerprint, split.name(), &split_fp, &rollout),
            );
            let path = data.dir.join("results").join(format!(
                "{}@{mode}.{}.jsonl",
                policy.name,
                split.name()
            ));
            let results = if self.reusable(&path, &fp)? {
                read_results(&path)?.1
            } else {
                self.log(
                    data.seed,
                    format!(
                        "evaluating {} with {mode} memory on {}",
                        policy.name,
                        split.name()
                    ),
                );
                let r = evaluate(&data.world, &episodes, &policy.params, &rollout)?;
                write_results(&path, &r, &fp)?;
                r
            };
            let mut m = compute_metrics(&results, data.world.params.success_radius)?;
            m.fingerprint = fp;
            Ok(m)
        })
    }

    pub fn evaluate(
        &self,
        data: &SeedData,
        policy: &Trained,
        split: Split,
        mode: MemoryMode,
    ) -> Result<MetricsReport> {
        self.eval_variant(data, policy, split, mode, &self.base_variant())
    }

    /// Evaluate and write a per-step trace next to the results; returns the
    /// trace path.
    pub fn evaluate_traced(
        &self,
        data: &SeedData,
        policy: &Trained,
        split: Split,
        mode: MemoryMode,
    ) -> Result<(MetricsReport, PathBuf)> {
        let (episodes, split_fp) = self.split(data, split)?;
        self.stage("eval", || {
            let rollout = self.rollout(mode, &self.base_variant());
            let fp = fingerprint(
                "eval",
                &(&policy.fingerprint, split.name(), &split_fp, &rollout),
            );
            let stem = format!("{}@{mode}.{}", policy.name, split.name());
            let (results, trace) =
                evaluate_traced(&data.world, &episodes, &policy.params, &rollout)?;
            write_results(
                &data.dir.join("results").join(format!("{stem}.jsonl")),
                &results,
                &fp,
            )?;
            let trace_path = data.dir.join("traces").join(format!("{stem}.jsonl"));
            write_traces(&trace_path, &trace, &fp)?;
            let mut m = compute_metrics(&results, data.world.params.success_radius)?;
            m.fingerprint = fp;
            Ok((m, trace_path))
        })
    }

    /// The full study: every seed's splits, supervised policies for each
    /// memory mode, trust-region and matched DAgger fine-tuning, evaluation
    /// on the val and long-horizon splits, then the report files.
    pub fn run(&self) -> Result<RunReport> {
        let mut report = RunReport {
            fingerprint: self.cfg.fingerprint(),
            modules: Vec::new(),
            memory: Vec::new(),
            dagger: Vec::new(),
            long_horizon: Vec::new(),
            long_splits: Vec::new(),
        };
        let v = self.base_variant();
        for seed in self.cfg.seeds() {
            let data = self.episodes(seed)?;
            let (long, _) = self.long_split(&data)?;
            report.long_splits.push(LongSplitStats {
                seed,
                episodes: long.len(),
                mean_shortest_length: mean_shortest_length(&long),
            });
            // AMR last so its demonstrations stay cached for fine-tuning.
            let none = self.sft_variant(&data, MemoryMode::None, &v)?;
            let uniform = self.sft_variant(&data, MemoryMode::Uniform, &v)?;
            let amr = self.sft_variant(&data, MemoryMode::Amr, &v)?;
            let tr = self.collect_variant(&data, &amr, &v, Collector::TrustRegion, None, "tr")?;
            let n = tr.data.len();
            let dagger =
                self.collect_variant(&data, &amr, &v, Collector::Dagger, Some(n), "dagger")?;
            let ecf_tr =
                self.finetune_variant(&data, &amr, &tr, &v, PolicyKind::EcfTrustRegion.name())?;
            let ecf_dagger =
                self.finetune_variant(&data, &amr, &dagger, &v, PolicyKind::EcfDagger.name())?;

            let eval = |p: &Trained, split: Split, mode: MemoryMode| {
                self.eval_variant(&data, p, split, mode, &v)
            };
            let m_none = eval(&none, Split::Val, MemoryMode::None)?;
            let m_uniform = eval(&uniform, Split::Val, MemoryMode::Uniform)?;
            let m_amr = eval(&amr, Split::Val, MemoryMode::Amr)?;
            let m_tr = eval(&ecf_tr, Split::Val, MemoryMode::Amr)?;
            let m_dagger = eval(&ecf_dagger, Split::Val, MemoryMode::Amr)?;

            report
                .memory
                .push(row("memory", "none", "", seed, 0, m_none));
            report
                .memory
                .push(row("memory", "uniform", "", seed, 0, m_uniform.clone()));
            report
                .memory
                .push(row("memory", "amr", "", seed, 0, m_amr.clone()));
            report
                .modules
                .push(row("modules", BASELINE, "", seed, 0, m_uniform));
            report
                .modules
                .push(row("modules", WITH_AMR, "", seed, 0, m_amr));
            report
                .modules
                .push(row("modules", WITH_AMR_CF, "", seed, n, m_tr.clone()));
            report
                .dagger
                .push(row("dagger", TRUST_REGION, "", seed, n, m_tr));
            report
                .dagger
                .push(row("dagger", DAGGER, "", seed, dagger.data.len(), m_dagger));

            let l_uniform = eval(&uniform, Split::Long, MemoryMode::Uniform)?;
            let l_amr = eval(&amr, Split::Long, MemoryMode::Amr)?;
            let l_tr = eval(&ecf_tr, Split::Long, MemoryMode::Amr)?;
            report
                .long_horizon
                .push(row("long_horizon", BASELINE, "", seed, 0, l_uniform));
            report
                .long_horizon
                .push(row("long_horizon", WITH_AMR, "", seed, 0, l_amr));
            report
                .long_horizon
                .push(row("long_horizon", WITH_AMR_CF, "", seed, n, l_tr));
        }
        self.stage("report", || self.write_reports(&report))?;
        Ok(report)
    }

    fn heading(&self) -> String {
        format!("Config fingerprint: `{}`\n", self.cfg.fingerprint())
    }

    fn write_table(&self, stem: &str, title: &str, rows: &[ReportRow]) -> Result<()> {
        let dir = self.root.join("reports");
        write_csv(&dir.join(format!("{stem}.csv")), rows)?;
        write_markdown(
            &dir.join(format!("{stem}.md")),
            &[self.heading(), table_markdown(title, rows)],
        )
    }

    fn write_reports(&self, r: &RunReport) -> Result<()> {
        let tables = [
            ("modules", "Modules", &r.modules),
            ("memory", "Memory mode", &r.memory),
            (
                "dagger",
                "Trust region vs DAgger at matched pairs",
                &r.dagger,
            ),
            ("long_horizon", "Long-horizon split", &r.long_horizon),
        ];
        let mut summary = vec![format!("# Experiment summary\n\n{}", self.heading())];
        for (stem, title, rows) in tables {
            self.write_table(stem, title, rows)?;
            summary.push(table_markdown(title, rows));
        }
        let mut long = String::from(
            "### Long-horizon split sizes\n\n| Seed | Episodes | Mean shortest length (m) |\n|---|---|---|\n",
        );
        for s in &r.long_splits {
            writeln!(
                long,
                "| {} | {} | {:.2} |",
                s.seed, s.episodes, s.mean_shortest_length
            )
            .expect("writing to a String");
        }
        summary.push(long);
        write_markdown(&self.root.join("reports").join("summary.md"), &summary)
    }

    fn sweep_points(&self, axis: SweepAxis) -> Vec<SweepPoint> {
        let base = self.base_variant();
        let s = &self.cfg.sweep;
        let point = |label: String, refine: RefineParams, tau: f64| {
            let collection = CollectionConfig {
                tau,
                ..base.collection.clone()
            };
            let suffix = if refine == base.refine && collection == base.collection {
                String::new()
            } else {
                format!(".{}{label}", axis.name())
            };
            SweepPoint {
                label,
                variant: Variant {
                    suffix,
                    refine,
                    collection,
                },
                budget: None,
            }
        };
        let tau = base.collection.tau;
        match axis {
            SweepAxis::K => {
                s.k.iter()
                    .map(|&k| point(k.to_string(), RefineParams { k, ..base.refine }, tau))
                    .collect()
            }
            SweepAxis::LambdaR => s
                .lambda_r
                .iter()
                .map(|&lambda_r| {
                    point(
                        lambda_r.to_string(),
                        RefineParams {
                            lambda_r,
                            ..base.refine
                        },
                        tau,
                    )
                })
                .collect(),
            SweepAxis::WV => s
                .w_v
                .iter()
                .map(|&w_v| {
                    let refine = RefineParams {
                        w_v,
                        w_t: 1.0 - w_v,
                        ..base.refine
                    };
                    point(w_v.to_string(), refine, tau)
                })
                .collect(),
            SweepAxis::Tau => s
                .tau
                .iter()
                .map(|&t| point(t.to_string(), base.refine, t))
                .collect(),
            SweepAxis::DataBudget => s
                .data_budget
                .iter()
                .map(|&n| SweepPoint {
                    label: n.to_string(),
                    variant: base.clone(),
                    budget: Some(n),
                })
                .collect(),
        }
    }

    /// Re-run the affected slice of the study for every value on `axis`.
    /// Values equal to the configured defaults reuse the main artifacts.
    /// Writes `reports/sweep-<axis>.{csv,md}`.
    pub fn sweep(&self, axis: SweepAxis) -> Result<Vec<ReportRow>> {
        let table = format!("sweep-{}", axis.name());
        let points = self.sweep_points(axis);
        let mut rows = Vec::new();
        for seed in self.cfg.seeds() {
            let data = self.episodes(seed)?;
            for p in &points {
                let v = &p.variant;
                let sft = self.sft_variant(&data, MemoryMode::Amr, v)?;
                let tr = self.collect_variant(
                    &data,
                    &sft,
                    v,
                    Collector::TrustRegion,
                    None,
                    &format!("tr{}", v.suffix),
                )?;
                let Some(budget) = p.budget else {
                    let ecf =
                        self.finetune_variant(&data, &sft, &tr, v, &format!("ecf-tr{}", v.suffix))?;
                    let m = self.eval_variant(&data, &ecf, Split::Val, MemoryMode::Amr, v)?;
                    rows.push(row(&table, WITH_AMR_CF, &p.label, seed, tr.data.len(), m));
                    continue;
                };
                // Both collectors get the same number of pairs.
                let n = budget.min(tr.data.len());
                let cut = Corrections {
                    name: format!("tr.n{budget}"),
                    data: tr.data.truncated(n),
                    fingerprint: fingerprint("truncate", &(&tr.fingerprint, n)),
                };
                let dagger = self.collect_variant(
                    &data,
                    &sft,
                    v,
                    Collector::Dagger,
                    Some(n),
                    &format!("dagger.n{budget}"),
                )?;
                for (label, corrections) in [(TRUST_REGION, &cut), (DAGGER, &dagger)] {
                    let name = format!(
                        "ecf-{}.n{budget}",
                        if label == DAGGER { "dagger" } else { "tr" }
                    );
                    let ecf = self.finetune_variant(&data, &sft, corrections, v, &name)?;
                    let m = self.eval_variant(&data, &ecf, Split::Val, MemoryMode::Amr, v)?;
                    rows.push(row(
                        &table,
                        label,
                        &p.label,
                        seed,
                        corrections.data.len(),
                        m,
                    ));
                }
            }
        }
        self.stage("report", || {
            let title = format!("Sweep over {}", axis.name());
            self.write_table(&table, &title, &rows)
        })?;
        Ok(rows)
    }
}

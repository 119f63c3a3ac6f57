//! Reproducible experiment runs: configuration file, held-out threshold
//! calibration, protocol simulation, attack campaigns and report
//! generation. Every random stream is derived from the master seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{attack_scenario, pick_attacker, AttackPolicy, AttackSetup, AttackSpace, AttackTrace, SessionSchedule};
use crate::error::{Error, Result};
use crate::evaluation::{export_report, operating_point, EvalReport, OperatingPointName, ScenarioInputs, ScoreSet};
use crate::features::{dissimilarity, DissimilarityScore};
use crate::image::write_atomic;
use crate::morph::MorphParams;
use crate::protocol::{
    enroll, run_session, AttackerMaterial, Behavior, Channel, ClientState, RandomFaceSource, SchemeParams,
    SecureElementState, ServerStore, SessionContext, SessionTranscript, Ttp,
};
use crate::seeds::{derive_seed, rng_for};
use crate::transforms::{AdLedger, AdPayload, Scenario};
use crate::world::{sample_presentation, SyntheticWorld, SyntheticWorldConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Tag attached to every score set produced by the synthetic world.
pub const DATASET_TAG: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub scenarios: Vec<Scenario>,
    /// Operating points reported and used for ASR.
    pub operating_points: Vec<OperatingPointName>,
    /// Operating point whose threshold the matcher uses.
    pub threshold_point: OperatingPointName,
    pub world: SyntheticWorldConfig,
    pub scheme: SchemeSettings,
    pub calibration: CalibrationSettings,
    pub simulate: SimulateSettings,
    pub attack: AttackSettings,
    pub schedule: SessionSchedule,
    pub report: ReportSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSettings {
    pub morph: MorphParams,
    pub noise_sigma: f64,
    pub implode_strength: f64,
}

/// Held-out population used to fix the per-scenario thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Subjects `0..subjects` are reserved for calibration.
    pub subjects: usize,
    /// Genuine and impostor comparisons each.
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    pub clients: usize,
    pub genuine_sessions: usize,
    pub attacker_sessions: usize,
    pub pool_size: usize,
    /// Pseudonym sets the TTP adds when a client's pool runs dry; 0 leaves
    /// the pool empty so the next rotation fails.
    pub replenish_batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSettings {
    pub space: AttackSpace,
    pub step_scale: f64,
    pub proposals_per_iteration: usize,
    pub iterations: usize,
    /// Attack runs per scenario.
    pub seeds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSettings {
    pub histogram_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scheme = SchemeParams::default();
        let policy = AttackPolicy::default();
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed: 2022,
            out_dir: PathBuf::from("otb-out"),
            scenarios: Scenario::ALL.to_vec(),
            operating_points: OperatingPointName::standard(),
            threshold_point: OperatingPointName::Eer,
            world: SyntheticWorldConfig::default(),
            scheme: SchemeSettings {
                morph: scheme.morph,
                noise_sigma: scheme.noise_sigma,
                implode_strength: scheme.implode_strength,
            },
            calibration: CalibrationSettings {
                subjects: 500,
                pairs: 1000,
            },
            simulate: SimulateSettings {
                clients: 20,
                genuine_sessions: 5,
                attacker_sessions: 5,
                pool_size: crate::protocol::DEFAULT_POOL_SIZE,
                replenish_batch: 0,
            },
            attack: AttackSettings {
                space: policy.space,
                step_scale: policy.step_scale,
                proposals_per_iteration: policy.proposals_per_iteration,
                iterations: policy.iterations,
                seeds: 200,
            },
            schedule: SessionSchedule::default(),
            report: ReportSettings { histogram_bins: 40 },
        }
    }
}

impl ExperimentConfig {
    /// Small world for the demo and quick smoke runs.
    pub fn sample() -> Self {
        let mut cfg = Self::default();
        cfg.world.n_subjects = 120;
        cfg.calibration = CalibrationSettings {
            subjects: 60,
            pairs: 200,
        };
        cfg.simulate.clients = 4;
        cfg.simulate.genuine_sessions = 3;
        cfg.simulate.attacker_sessions = 2;
        cfg.attack.seeds = 4;
        cfg.attack.iterations = 10;
        cfg
    }

    /// Every violated constraint, one message per offending field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.scenarios.is_empty() {
            out.push("scenarios must not be empty".to_string());
        }
        let mut seen = self.scenarios.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.scenarios.len() {
            out.push("scenarios must not repeat".to_string());
        }
        if self.operating_points.is_empty() {
            out.push("operating_points must not be empty".to_string());
        }
        out.extend(self.world.problems());
        if let Err(e) = self.scheme.morph.validate() {
            out.push(format!("scheme.morph: {e}"));
        }
        if !(self.scheme.noise_sigma >= 0.0 && self.scheme.noise_sigma.is_finite()) {
            out.push("scheme.noise_sigma must be non-negative".to_string());
        }
        if !(self.scheme.implode_strength >= 0.0 && self.scheme.implode_strength <= 1.0) {
            out.push("scheme.implode_strength must lie in [0, 1]".to_string());
        }
        if self.calibration.subjects < 2 {
            out.push("calibration.subjects must be at least 2".to_string());
        }
        if self.calibration.pairs == 0 {
            out.push("calibration.pairs must be positive".to_string());
        }
        if self.simulate.pool_size == 0 {
            out.push("simulate.pool_size must be positive".to_string());
        }
        let reserved = self.calibration.subjects + self.simulate.clients;
        if reserved + 2 > self.world.n_subjects {
            out.push(format!(
                "world.n_subjects must leave at least 2 attack subjects after {} calibration subjects and {} clients",
                self.calibration.subjects, self.simulate.clients
            ));
        }
        let policy = self.policy(0);
        out.extend(policy.problems());
        if self.report.histogram_bins == 0 {
            out.push("report.histogram_bins must be positive".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn params(&self, scenario: Scenario) -> SchemeParams {
        SchemeParams {
            scenario,
            morph: self.scheme.morph,
            noise_sigma: self.scheme.noise_sigma,
            implode_strength: self.scheme.implode_strength,
        }
    }

    pub fn policy(&self, seed: u64) -> AttackPolicy {
        AttackPolicy {
            space: self.attack.space,
            step_scale: self.attack.step_scale,
            proposals_per_iteration: self.attack.proposals_per_iteration,
            iterations: self.attack.iterations,
            seed,
        }
    }

    /// The world actually simulated: `world.rng_seed` selects a variant
    /// under the master seed.
    pub fn world_config(&self) -> SyntheticWorldConfig {
        SyntheticWorldConfig {
            rng_seed: derive_seed(self.master_seed, "world", self.world.rng_seed),
            ..self.world.clone()
        }
    }

    pub fn build_world(&self) -> Result<Arc<SyntheticWorld>> {
        self.validate()?;
        Ok(Arc::new(SyntheticWorld::new(self.world_config())?))
    }

    fn client_subjects(&self) -> std::ops::Range<u64> {
        let start = self.calibration.subjects as u64;
        start..start + self.simulate.clients as u64
    }

    fn attack_subjects(&self) -> std::ops::Range<u64> {
        (self.calibration.subjects + self.simulate.clients) as u64..self.world.n_subjects as u64
    }
}

/// Output tree layout under the configured directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn scores(&self, s: Scenario) -> PathBuf {
        self.root.join("scores").join(format!("scenario-{s}.csv"))
    }

    pub fn transcripts(&self, s: Scenario) -> PathBuf {
        self.root.join("transcripts").join(format!("scenario-{s}.jsonl"))
    }

    pub fn store(&self, s: Scenario) -> PathBuf {
        self.root.join("store").join(format!("scenario-{s}.json"))
    }

    pub fn trace_dir(&self, s: Scenario) -> PathBuf {
        self.root.join("traces").join(format!("scenario-{s}"))
    }

    pub fn trace(&self, s: Scenario, seed: usize) -> PathBuf {
        self.trace_dir(s).join(format!("seed-{seed:04}.csv"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    create_parent(path)?;
    write_atomic(path, contents)
}

/// Genuine and impostor comparisons on subjects `0..n_subjects` under one
/// scenario's client pipeline. Comparison `k` draws the same presentations
/// for every scenario, so scenarios are compared on paired data. Genuine
/// pairs share the reference's AD; impostors present with their own.
pub fn calibration_scores(
    world: &Arc<SyntheticWorld>,
    params: &SchemeParams,
    n_subjects: u64,
    pairs: usize,
    seed: u64,
) -> Result<ScoreSet> {
    if n_subjects < 2 {
        return Err(Error::InvalidParameter("calibration needs at least 2 subjects".into()));
    }
    let extractor = world.extractor();
    let rows: Vec<(f64, f64)> = (0..pairs as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, "calibration", k);
            let subject = rng.random_range(0..n_subjects);
            let other = (subject + rng.random_range(1..n_subjects)) % n_subjects;
            let (s, o) = (world.subject(subject)?, world.subject(other)?);
            let reference = sample_presentation(&s, &mut rng);
            let probe = sample_presentation(&s, &mut rng);
            let impostor = sample_presentation(&o, &mut rng);
            let source: Arc<dyn RandomFaceSource> = world.clone();
            let ttp_rng = rng_for(seed, &format!("calibration-ttp/{}", params.scenario), k);
            let mut ttp = Ttp::new(source, Arc::new(AdLedger::new()), *params, ttp_rng);
            let ads = ttp.issue("calibration", 2)?;
            let (own, theirs) = (Some(&ads[0].ad), Some(&ads[1].ad));
            let r = params.client_template(&reference, own, extractor)?.embedding;
            let g = params.client_template(&probe, own, extractor)?.embedding;
            let i = params.client_template(&impostor, theirs, extractor)?.embedding;
            Ok((dissimilarity(&r, &g)?.0, dissimilarity(&r, &i)?.0))
        })
        .collect::<Result<_>>()?;
    let (genuine, impostor) = rows.into_iter().unzip();
    Ok(ScoreSet::new(params.scenario, DATASET_TAG, genuine, impostor))
}

/// Thresholds at each operating point.
pub fn thresholds(scores: &ScoreSet, points: &[OperatingPointName]) -> Result<BTreeMap<OperatingPointName, f64>> {
    let mut out = BTreeMap::new();
    for &p in points.iter().chain(std::iter::once(&OperatingPointName::Eer)) {
        out.insert(p, operating_point(scores, p)?.threshold);
    }
    Ok(out)
}

/// Held-out score set that fixes the thresholds of `s`.
pub fn calibrate(cfg: &ExperimentConfig, world: &Arc<SyntheticWorld>, s: Scenario) -> Result<ScoreSet> {
    calibration_scores(
        world,
        &cfg.params(s),
        cfg.calibration.subjects as u64,
        cfg.calibration.pairs,
        derive_seed(cfg.master_seed, "calibration", 0),
    )
}

fn matcher_threshold(cfg: &ExperimentConfig, th: &BTreeMap<OperatingPointName, f64>) -> Result<f64> {
    let thresholds_missing = || Error::Config(format!("threshold_point {} was not calibrated", cfg.threshold_point));
    th.get(&cfg.threshold_point).copied().ok_or_else(thresholds_missing)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCounts {
    pub sessions: usize,
    pub accepts: usize,
    pub rejects: usize,
    pub rotations: usize,
    pub errors: usize,
}

impl SessionCounts {
    fn add(&mut self, t: &SessionTranscript) {
        self.sessions += 1;
        match t.decision {
            Some(crate::protocol::Decision::Accept) => self.accepts += 1,
            Some(crate::protocol::Decision::Reject) => self.rejects += 1,
            None => {}
        }
        self.rotations += t.rotated as usize;
        self.errors += t.error.is_some() as usize;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub thresholds: BTreeMap<Scenario, f64>,
    pub genuine: BTreeMap<Scenario, SessionCounts>,
    pub attacker: BTreeMap<Scenario, SessionCounts>,
}

impl SimulateSummary {
    pub fn errors(&self) -> usize {
        self.genuine.values().chain(self.attacker.values()).map(|c| c.errors).sum()
    }
}

struct ClientRun {
    transcripts: Vec<SessionTranscript>,
    state: ClientState,
}

fn simulate_client(
    cfg: &ExperimentConfig,
    world: &Arc<SyntheticWorld>,
    params: &SchemeParams,
    ledger: &Arc<AdLedger>,
    threshold: f64,
    index: usize,
) -> Result<ClientRun> {
    let s = params.scenario;
    let label = format!("simulate/{s}");
    let subject_id = cfg.client_subjects().start + index as u64;
    let client_id = format!("client-{subject_id:05}");
    let source: Arc<dyn RandomFaceSource> = world.clone();
    let mut ttp = Ttp::new(source, ledger.clone(), *params, rng_for(cfg.master_seed, &format!("{label}/ttp"), index as u64));
    let mut rng = rng_for(cfg.master_seed, &label, index as u64);
    let subject = world.subject(subject_id)?;
    let pool = SecureElementState::with_pool(ttp.issue(&client_id, cfg.simulate.pool_size)?);
    let enrollment = sample_presentation(&subject, &mut rng);
    let (record, se) = enroll(
        &client_id,
        &enrollment,
        &pool,
        params,
        world.extractor(),
        ledger,
        DissimilarityScore(threshold),
    )?;
    let mut state = ClientState {
        client_id: client_id.clone(),
        subject,
        se,
        record,
    };
    let attack_pop = cfg.attack_subjects();
    let attacker_subject = world.subject(rng.random_range(attack_pop))?;
    let attacker = AttackerMaterial {
        subject: attacker_subject,
        ad: Some(ttp.issue(&format!("attacker-of-{client_id}"), 1)?.remove(0).ad),
    };

    let mut behaviors = vec![Behavior::Genuine; cfg.simulate.genuine_sessions];
    behaviors.extend(vec![Behavior::Attacker; cfg.simulate.attacker_sessions]);
    behaviors.shuffle(&mut rng);
    let per_client = behaviors.len() as u64;
    let ctx = SessionContext {
        params,
        extractor: world.extractor(),
        ledger,
    };
    let mut transcripts = Vec::with_capacity(behaviors.len());
    for (j, behavior) in behaviors.into_iter().enumerate() {
        if state.se.pool.is_empty() && cfg.simulate.replenish_batch > 0 {
            let sets = ttp.issue(&client_id, cfg.simulate.replenish_batch)?;
            state.se = state.se.replenish(sets);
        }
        let session_id = index as u64 * per_client + j as u64 + 1;
        let (t, next) = run_session(
            &ctx,
            &state,
            session_id,
            behavior,
            Some(&attacker),
            &mut Channel::default(),
            &mut rng,
        );
        transcripts.push(t);
        state = next;
    }
    Ok(ClientRun { transcripts, state })
}

/// Calibrates thresholds, enrolls the configured clients and runs their
/// sessions for every scenario. Writes score sets, transcripts (one session
/// per line) and the server store.
pub fn run_simulate(cfg: &ExperimentConfig, world: &Arc<SyntheticWorld>, layout: &Layout) -> Result<SimulateSummary> {
    cfg.validate()?;
    write_file(&layout.config(), cfg.to_toml().as_bytes())?;
    let mut summary = SimulateSummary::default();
    for &s in &cfg.scenarios {
        let scores = calibrate(cfg, world, s)?;
        write_file(&layout.scores(s), scores.to_csv().as_bytes())?;
        let threshold = matcher_threshold(cfg, &thresholds(&scores, &[cfg.threshold_point])?)?;
        summary.thresholds.insert(s, threshold);

        let params = cfg.params(s);
        let ledger = Arc::new(AdLedger::new());
        let runs: Vec<ClientRun> = (0..cfg.simulate.clients)
            .into_par_iter()
            .map(|k| simulate_client(cfg, world, &params, &ledger, threshold, k))
            .collect::<Result<_>>()?;

        let mut lines = String::new();
        let mut store = ServerStore {
            next_session_id: (cfg.simulate.clients * (cfg.simulate.genuine_sessions + cfg.simulate.attacker_sessions))
                as u64
                + 1,
            records: BTreeMap::new(),
        };
        let genuine = summary.genuine.entry(s).or_default();
        let attacker = summary.attacker.entry(s).or_default();
        for run in runs {
            for t in &run.transcripts {
                lines.push_str(&serde_json::to_string(t).expect("transcript serialises"));
                lines.push('\n');
                match t.behavior {
                    Behavior::Genuine => genuine.add(t),
                    Behavior::Attacker => attacker.add(t),
                }
            }
            store.records.insert(run.state.client_id.clone(), run.state.record);
        }
        write_file(&layout.transcripts(s), lines.as_bytes())?;
        create_parent(&layout.store(s))?;
        store.save(&layout.store(s))?;
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    write_file(&layout.root.join("simulate-summary.json"), json.as_bytes())?;
    Ok(summary)
}

/// Runs `attack.seeds` hill-climb attacks per scenario. Seed `k` uses the
/// same victim, attacker and proposal stream in every scenario.
pub fn run_attack(
    cfg: &ExperimentConfig,
    world: &Arc<SyntheticWorld>,
    layout: &Layout,
) -> Result<BTreeMap<Scenario, Vec<AttackTrace>>> {
    cfg.validate()?;
    write_file(&layout.config(), cfg.to_toml().as_bytes())?;
    let mut out = BTreeMap::new();
    for &s in &cfg.scenarios {
        let scores = calibrate(cfg, world, s)?;
        let th = thresholds(&scores, &cfg.operating_points)?;
        let matcher = matcher_threshold(cfg, &thresholds(&scores, &[cfg.threshold_point])?)?;
        let pop = cfg.attack_subjects();
        let traces: Vec<AttackTrace> = (0..cfg.attack.seeds)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(cfg.master_seed, "attack-pair", k as u64);
                let victim = rng.random_range(pop.clone());
                let attacker = pop.start + pick_attacker(&mut rng, victim - pop.start, pop.end - pop.start);
                let setup = AttackSetup {
                    params: cfg.params(s),
                    policy: cfg.policy(derive_seed(cfg.master_seed, "attack", k as u64)),
                    schedule: cfg.schedule,
                    victim,
                    attacker,
                    thresholds: th.clone(),
                    matcher_threshold: matcher,
                };
                let trace = attack_scenario(world, &setup)?;
                let path = layout.trace(s, k);
                create_parent(&path)?;
                trace.write(&path)?;
                Ok(trace)
            })
            .collect::<Result<_>>()?;
        out.insert(s, traces);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub report: EvalReport,
    /// Inputs that were not found; their cells are flagged `not-measured`.
    pub missing: Vec<PathBuf>,
}

fn read_traces(dir: &Path) -> Result<Vec<AttackTrace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| AttackTrace::read(p)).collect()
}

/// Builds the report from the artifacts under `layout`. Fails only when no
/// input exists at all.
pub fn run_evaluate(cfg: &ExperimentConfig, layout: &Layout) -> Result<EvaluateOutcome> {
    cfg.validate()?;
    let mut missing = Vec::new();
    let mut scores = BTreeMap::new();
    let mut traces = BTreeMap::new();
    for &s in &cfg.scenarios {
        let path = layout.scores(s);
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            scores.insert(s, ScoreSet::from_csv(&text, s, DATASET_TAG, &path)?);
        } else {
            missing.push(path);
        }
        let dir = layout.trace_dir(s);
        let found = if dir.is_dir() { read_traces(&dir)? } else { Vec::new() };
        if found.is_empty() {
            missing.push(dir);
        } else {
            traces.insert(s, found);
        }
    }
    if scores.is_empty() && traces.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::InsufficientData(format!("no inputs found: {}", list.join(", "))));
    }
    let inputs: BTreeMap<Scenario, ScenarioInputs<'_>> = cfg
        .scenarios
        .iter()
        .map(|s| {
            (
                *s,
                ScenarioInputs {
                    scores: scores.get(s),
                    traces: traces.get(s).map(|t| t.as_slice()),
                },
            )
        })
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("schema_version".to_string(), SCHEMA_VERSION.to_string());
    metadata.insert("master_seed".to_string(), cfg.master_seed.to_string());
    metadata.insert("dataset".to_string(), DATASET_TAG.to_string());
    metadata.insert(
        "world".to_string(),
        serde_json::to_string(&cfg.world_config()).expect("world config serialises"),
    );
    metadata.insert("attack_seeds".to_string(), cfg.attack.seeds.to_string());
    let report = EvalReport::build(&inputs, &cfg.operating_points, metadata)?;
    let sets: Vec<&ScoreSet> = scores.values().collect();
    export_report(&report, &cfg.operating_points, &sets, cfg.report.histogram_bins, &layout.report_dir())?;
    Ok(EvaluateOutcome { report, missing })
}

/// Enrollment, a genuine session with rotation, a replay of the captured
/// template, an impostor session and a second genuine session, on the
/// sample world under OTB-morph. Returns the narrative lines; artifacts go
/// under `<root>/demo`.
pub fn run_demo(cfg: &ExperimentConfig, world: &Arc<SyntheticWorld>, layout: &Layout) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let params = cfg.params(Scenario::OtbMorph);
    let scores = calibrate(cfg, world, Scenario::OtbMorph)?;
    let threshold = matcher_threshold(cfg, &thresholds(&scores, &[cfg.threshold_point])?)?;
    lines.push(format!(
        "calibrated threshold {threshold:.4} at {} on {} held-out comparisons",
        cfg.threshold_point, cfg.calibration.pairs
    ));

    let ledger = Arc::new(AdLedger::new());
    let source: Arc<dyn RandomFaceSource> = world.clone();
    let mut ttp = Ttp::new(source, ledger.clone(), params, rng_for(cfg.master_seed, "demo/ttp", 0));
    let mut rng = rng_for(cfg.master_seed, "demo", 0);
    let subject_id = cfg.client_subjects().start;
    let client_id = format!("client-{subject_id:05}");
    let pool = SecureElementState::with_pool(ttp.issue(&client_id, 4)?);
    lines.push(format!("TTP issued {} pseudonym sets to {client_id}", pool.pool.len()));
    let subject = world.subject(subject_id)?;
    let enrollment = sample_presentation(&subject, &mut rng);
    let (record, se) = enroll(&client_id, &enrollment, &pool, &params, world.extractor(), &ledger, DissimilarityScore(threshold))?;
    let first_ad = se.current_ad.as_ref().map(|a| a.ad_id.to_string()).unwrap_or_default();
    lines.push(format!("enrolled with AD {first_ad}"));
    let demo_dir = layout.root.join("demo");
    std::fs::create_dir_all(&demo_dir).map_err(|e| Error::io(&demo_dir, e))?;
    enrollment.image.write_pnm(&demo_dir.join("enrollment.pgm"))?;
    if let Some(AdPayload::RandomFace { face, .. }) = se.current_ad.as_ref().map(|a| &a.payload) {
        face.write_pnm(&demo_dir.join("ad-face.pgm"))?;
    }

    let mut client = ClientState {
        client_id: client_id.clone(),
        subject,
        se,
        record,
    };
    let ctx = SessionContext {
        params: &params,
        extractor: world.extractor(),
        ledger: &ledger,
    };
    let mut transcripts = Vec::new();
    let mut channel = Channel::tapped();

    let (t, next) = run_session(&ctx, &client, 1, Behavior::Genuine, None, &mut channel, &mut rng);
    lines.push(describe("genuine session", &t));
    transcripts.push(t);
    client = next;

    let stale = channel
        .captured()
        .first()
        .map(|c| c.template.clone())
        .ok_or_else(|| Error::ProtocolState("nothing captured on the channel".into()))?;
    let replay = crate::protocol::match_template(2, stale, &client.record)?;
    lines.push(format!(
        "replayed the template captured in session 1: score {:.4}, {}",
        replay.score.0,
        if replay.decision == crate::protocol::Decision::Accept { "accept" } else { "reject" }
    ));

    let attacker = AttackerMaterial {
        subject: world.subject(cfg.attack_subjects().start)?,
        ad: Some(ttp.issue("attacker", 1)?.remove(0).ad),
    };
    let before = client.record.clone();
    let (t, next) = run_session(&ctx, &client, 3, Behavior::Attacker, Some(&attacker), &mut channel, &mut rng);
    lines.push(describe("impostor session", &t));
    if next.record == before {
        lines.push("server record unchanged after the impostor session".to_string());
    }
    transcripts.push(t);
    client = next;

    let (t, next) = run_session(&ctx, &client, 4, Behavior::Genuine, None, &mut channel, &mut rng);
    lines.push(describe("genuine session", &t));
    transcripts.push(t);
    client = next;
    lines.push(format!("pseudonyms left in the secure element: {}", client.se.pool.len()));

    let body: String = transcripts
        .iter()
        .map(|t| serde_json::to_string(t).expect("transcript serialises") + "\n")
        .collect();
    write_atomic(&demo_dir.join("transcripts.jsonl"), body.as_bytes())?;
    let mut store = ServerStore {
        next_session_id: 5,
        records: BTreeMap::new(),
    };
    store.records.insert(client_id, client.record);
    store.save(&demo_dir.join("store.json"))?;
    write_atomic(&demo_dir.join("narrative.txt"), (lines.join("\n") + "\n").as_bytes())?;
    Ok(lines)
}

fn describe(what: &str, t: &SessionTranscript) -> String {
    let score = t.messages.iter().find_map(|m| m.score).unwrap_or(f64::NAN);
    let decision = match t.decision {
        Some(crate::protocol::Decision::Accept) => "accept",
        Some(crate::protocol::Decision::Reject) => "reject",
        None => "no decision",
    };
    let mut s = format!("session {} ({what}): score {score:.4}, {decision}", t.session_id);
    if let Some(ad) = t.new_ad {
        s.push_str(&format!(", reference rotated to AD {ad}"));
    }
    if let Some(e) = &t.error {
        s.push_str(&format!(", error {e}"));
    }
    s
}

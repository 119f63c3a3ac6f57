//! Score-leakage adversary: a budgeted oracle on the matcher score (AP7),
//! template injection past the extractor (AP4), and a black-box hill climber
//! run against a victim whose reference may rotate between iterations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::OperatingPointName;
use crate::features::{dissimilarity, DissimilarityScore, Embedding, FeatureExtractor};
use crate::image::{write_atomic, FaceImage};
use crate::protocol::{
    decide, enroll, run_session, Behavior, Channel, ClientState, Decision, RandomFaceSource, SchemeParams,
    SecureElementState, ServerRecord, SessionContext, Ttp, DEFAULT_POOL_SIZE,
};
use crate::seeds::rng_for;
use crate::transforms::{AdLedger, Scenario};
use crate::world::{sample_presentation, Presentation, SyntheticWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackPoint {
    /// Feature injection past the extractor.
    AP4,
    /// Eavesdropping on the client-server channel.
    AP6,
    /// Matcher score leakage.
    AP7,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakageOracle {
    pub tap_points: BTreeSet<AttackPoint>,
    pub query_budget: u64,
    pub queries_used: u64,
}

impl LeakageOracle {
    pub fn new(tap_points: impl IntoIterator<Item = AttackPoint>, query_budget: u64) -> Self {
        Self {
            tap_points: tap_points.into_iter().collect(),
            query_budget,
            queries_used: 0,
        }
    }

    fn require(&self, point: AttackPoint) -> Result<()> {
        if self.tap_points.contains(&point) {
            Ok(())
        } else {
            Err(Error::UntappedAttackPoint(format!("{point:?}")))
        }
    }

    fn charge(&mut self) -> Result<()> {
        self.require(AttackPoint::AP7)?;
        if self.queries_used >= self.query_budget {
            return Err(Error::OracleExhausted(self.queries_used));
        }
        self.queries_used += 1;
        Ok(())
    }
}

/// A victim as seen through the matcher.
pub trait AttackEnvironment {
    type Candidate: Clone;

    /// Exact matcher score of `candidate` against the current reference.
    fn score(&mut self, candidate: &Self::Candidate) -> Result<f64>;

    /// Random neighbour of `candidate` at scale `step`.
    fn perturb(&self, candidate: &Self::Candidate, step: f64, rng: &mut ChaCha8Rng) -> Self::Candidate;

    fn digest(&self, candidate: &Self::Candidate) -> String;

    /// Called once after every attacker iteration; genuine sessions that
    /// interleave with the attack run here.
    fn advance(&mut self) -> Result<()> {
        Ok(())
    }
}

/// One leaked score; charges the oracle budget.
pub fn leak_score<E: AttackEnvironment>(
    oracle: &mut LeakageOracle,
    env: &mut E,
    candidate: &E::Candidate,
) -> Result<DissimilarityScore> {
    oracle.charge()?;
    Ok(DissimilarityScore(env.score(candidate)?))
}

/// AP4: a template submitted directly to the matcher.
pub fn inject_template(oracle: &LeakageOracle, candidate: &Embedding, record: &ServerRecord) -> Result<Decision> {
    oracle.require(AttackPoint::AP4)?;
    Ok(decide(dissimilarity(candidate, &record.client_ref.embedding)?, record.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackSpace {
    /// Candidates are feature vectors injected past the extractor.
    Embedding,
    /// Candidates are face images sent through the full client pipeline.
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackPolicy {
    pub space: AttackSpace,
    /// Norm of an embedding step, or per-pixel standard deviation of an
    /// image step.
    pub step_scale: f64,
    pub proposals_per_iteration: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for AttackPolicy {
    fn default() -> Self {
        Self {
            space: AttackSpace::Embedding,
            step_scale: 0.05,
            proposals_per_iteration: 8,
            iterations: 40,
            seed: 0,
        }
    }
}

impl AttackPolicy {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            out.push("attack.step_scale must be positive".to_string());
        }
        if self.proposals_per_iteration == 0 {
            out.push("attack.proposals_per_iteration must be positive".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub candidate_digest: String,
    /// Best score so far.
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub seed: u64,
    pub scenario: Scenario,
    pub points: Vec<TracePoint>,
    pub thresholds: BTreeMap<OperatingPointName, f64>,
    /// First iteration whose best score is below each threshold.
    pub success_at: BTreeMap<OperatingPointName, usize>,
    /// Proposal queries charged to the oracle.
    pub queries: u64,
    /// Set when the oracle ran out of budget before the last iteration.
    pub truncated: bool,
}

impl AttackTrace {
    pub fn best_scores(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.best_score).collect()
    }

    fn fill_success(&mut self) {
        self.success_at = self
            .thresholds
            .iter()
            .filter_map(|(&op, &t)| {
                self.points
                    .iter()
                    .find(|p| p.best_score < t)
                    .map(|p| (op, p.iteration))
            })
            .collect();
    }

    pub fn with_thresholds(mut self, thresholds: BTreeMap<OperatingPointName, f64>) -> Self {
        self.thresholds = thresholds;
        self.fill_success();
        self
    }

    /// `seed,scenario,iteration,best_score` rows (with header).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,scenario,iteration,best_score\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", self.seed, self.scenario, p.iteration, p.best_score));
        }
        out
    }

    pub fn sidecar(&self) -> TraceSidecar {
        TraceSidecar {
            seed: self.seed,
            scenario: self.scenario,
            thresholds: self.thresholds.clone(),
            success_at: self.success_at.clone(),
            queries: self.queries,
            truncated: self.truncated,
            candidate_digests: self.points.iter().map(|p| p.candidate_digest.clone()).collect(),
        }
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        write_atomic(csv_path, self.to_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serialises");
        write_atomic(&csv_path.with_extension("json"), json.as_bytes())
    }

    pub fn read(csv_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let json_path = csv_path.with_extension("json");
        let json = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let side: TraceSidecar = serde_json::from_str(&json).map_err(|e| Error::Parse {
            path: json_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let err = |line: usize, message: &str| Error::Parse {
            path: csv_path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(i + 1, "expected 4 fields"));
            }
            let iteration: usize = f[2].parse().map_err(|_| err(i + 1, "bad iteration"))?;
            if iteration != points.len() {
                return Err(err(i + 1, "iterations must be contiguous from 0"));
            }
            points.push(TracePoint {
                iteration,
                candidate_digest: side.candidate_digests.get(iteration).cloned().unwrap_or_default(),
                best_score: f[3].parse().map_err(|_| err(i + 1, "bad score"))?,
            });
        }
        Ok(AttackTrace {
            seed: side.seed,
            scenario: side.scenario,
            points,
            thresholds: side.thresholds,
            success_at: side.success_at,
            queries: side.queries,
            truncated: side.truncated,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub seed: u64,
    pub scenario: Scenario,
    pub thresholds: BTreeMap<OperatingPointName, f64>,
    pub success_at: BTreeMap<OperatingPointName, usize>,
    pub queries: u64,
    pub truncated: bool,
    pub candidate_digests: Vec<String>,
}

/// Greedy hill climbing: each iteration scores `proposals_per_iteration`
/// neighbours of the best-so-far candidate and keeps the lowest if it
/// improves. The starting score is an unbilled baseline measurement; every
/// proposal is billed to the oracle.
pub fn hill_climb<E: AttackEnvironment>(
    initial: E::Candidate,
    oracle: &mut LeakageOracle,
    env: &mut E,
    policy: &AttackPolicy,
    scenario: Scenario,
    rng: &mut ChaCha8Rng,
) -> Result<AttackTrace> {
    if let Some(p) = policy.problems().first() {
        return Err(Error::InvalidParameter(p.clone()));
    }
    oracle.require(AttackPoint::AP7)?;
    let start_queries = oracle.queries_used;
    let mut best = initial;
    let mut best_score = env.score(&best)?;
    let mut points = vec![TracePoint {
        iteration: 0,
        candidate_digest: env.digest(&best),
        best_score,
    }];
    let mut truncated = false;
    'outer: for iteration in 1..=policy.iterations {
        let mut round: Option<(E::Candidate, f64)> = None;
        for _ in 0..policy.proposals_per_iteration {
            let proposal = env.perturb(&best, policy.step_scale, rng);
            let score = match leak_score(oracle, env, &proposal) {
                Ok(s) => s.0,
                Err(Error::OracleExhausted(_)) => {
                    truncated = true;
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            if round.as_ref().is_none_or(|(_, s)| score < *s) {
                round = Some((proposal, score));
            }
        }
        if let Some((cand, score)) = round {
            if score < best_score {
                best = cand;
                best_score = score;
            }
        }
        points.push(TracePoint {
            iteration,
            candidate_digest: env.digest(&best),
            best_score,
        });
        env.advance()?;
    }
    Ok(AttackTrace {
        seed: policy.seed,
        scenario,
        points,
        thresholds: BTreeMap::new(),
        success_at: BTreeMap::new(),
        queries: oracle.queries_used - start_queries,
        truncated,
    })
}

/// When genuine sessions happen during an attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSchedule {
    /// A genuine session runs after every `session_every` attacker
    /// iterations; 0 disables them.
    pub session_every: usize,
    /// Whether accepted sessions rotate the reference (OTB-morph only).
    pub rotation: bool,
    /// Start the attack from another presentation of the victim instead of
    /// a different subject.
    pub victim_init: bool,
}

impl Default for SessionSchedule {
    fn default() -> Self {
        Self {
            session_every: 1,
            rotation: true,
            victim_init: false,
        }
    }
}

/// Live victim: client state plus everything needed to run its genuine
/// sessions.
pub struct VictimEnvironment {
    pub client: ClientState,
    params: SchemeParams,
    world: Arc<SyntheticWorld>,
    ledger: Arc<AdLedger>,
    ttp: Ttp,
    schedule: SessionSchedule,
    rng: ChaCha8Rng,
    iteration: usize,
    next_session: u64,
    /// Genuine sessions run and how many of them rotated the reference.
    pub sessions: usize,
    pub rotations: usize,
}

impl VictimEnvironment {
    fn current_ad(&self) -> Option<&crate::transforms::AuxiliaryData> {
        self.client.se.current_ad.as_ref()
    }

    fn extractor(&self) -> &dyn FeatureExtractor {
        self.world.extractor()
    }

    fn genuine_session(&mut self) -> Result<()> {
        if self.client.se.pool.is_empty() {
            let sets = self.ttp.issue(&self.client.client_id, DEFAULT_POOL_SIZE)?;
            self.client.se = self.client.se.replenish(sets);
        }
        let ctx = SessionContext {
            params: &self.params,
            extractor: self.world.extractor(),
            ledger: &self.ledger,
        };
        self.next_session += 1;
        let (transcript, next) = run_session(
            &ctx,
            &self.client,
            self.next_session,
            Behavior::Genuine,
            None,
            &mut Channel::default(),
            &mut self.rng,
        );
        self.sessions += 1;
        if let Some(err) = transcript.error {
            return Err(Error::ProtocolState(format!("genuine session failed: {err}")));
        }
        if transcript.rotated {
            self.rotations += 1;
        }
        self.client = next;
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

/// Feature vectors injected past the extractor (AP4) and scored (AP7).
pub struct EmbeddingAttack(pub VictimEnvironment);

impl AttackEnvironment for EmbeddingAttack {
    type Candidate = Embedding;

    fn score(&mut self, candidate: &Embedding) -> Result<f64> {
        let v = &self.0;
        let template = v.params.transform_feature(candidate, v.current_ad())?;
        Ok(dissimilarity(&template, &v.client.record.client_ref.embedding)?.0)
    }

    fn perturb(&self, candidate: &Embedding, step: f64, rng: &mut ChaCha8Rng) -> Embedding {
        let std = step / (candidate.dimension() as f64).sqrt();
        let values: Vec<f64> = candidate.values().iter().map(|x| x + gaussian(rng, std)).collect();
        Embedding::normalized(values).unwrap_or_else(|_| candidate.clone())
    }

    fn digest(&self, candidate: &Embedding) -> String {
        candidate.digest()
    }

    fn advance(&mut self) -> Result<()> {
        self.0.advance_schedule()
    }
}

/// Face images sent through the victim's client pipeline, including the
/// session's current AD.
pub struct ImageAttack(pub VictimEnvironment);

impl AttackEnvironment for ImageAttack {
    type Candidate = Presentation;

    fn score(&mut self, candidate: &Presentation) -> Result<f64> {
        let v = &self.0;
        let template = v.params.client_template(candidate, v.current_ad(), v.extractor())?;
        Ok(dissimilarity(&template.embedding, &v.client.record.client_ref.embedding)?.0)
    }

    fn perturb(&self, candidate: &Presentation, step: f64, rng: &mut ChaCha8Rng) -> Presentation {
        let img = &candidate.image;
        let data: Vec<f64> = img
            .data()
            .iter()
            .map(|x| (x + gaussian(rng, step)).clamp(0.0, 1.0))
            .collect();
        Presentation {
            image: FaceImage::new(img.width(), img.height(), img.channels(), data).expect("same shape"),
            landmarks: candidate.landmarks.clone(),
        }
    }

    fn digest(&self, candidate: &Presentation) -> String {
        candidate.image.digest()
    }

    fn advance(&mut self) -> Result<()> {
        self.0.advance_schedule()
    }
}

impl VictimEnvironment {
    fn advance_schedule(&mut self) -> Result<()> {
        self.iteration += 1;
        let every = self.schedule.session_every;
        // Static-key schemes gain nothing observable from a genuine session.
        if every > 0 && self.iteration.is_multiple_of(every) && self.params.rotates() && self.schedule.rotation {
            self.genuine_session()?;
        }
        Ok(())
    }
}

/// One attack run against a freshly enrolled victim.
#[derive(Debug, Clone)]
pub struct AttackSetup {
    pub params: SchemeParams,
    pub policy: AttackPolicy,
    pub schedule: SessionSchedule,
    pub victim: u64,
    pub attacker: u64,
    pub thresholds: BTreeMap<OperatingPointName, f64>,
    /// Threshold the victim's server record uses.
    pub matcher_threshold: f64,
}

/// Enrolls `setup.victim` under the scenario and runs the hill climber from
/// a presentation of `setup.attacker` (or of the victim with `victim_init`).
pub fn attack_scenario(world: &Arc<SyntheticWorld>, setup: &AttackSetup) -> Result<AttackTrace> {
    let seed = setup.policy.seed;
    let ledger = Arc::new(AdLedger::new());
    let source: Arc<dyn RandomFaceSource> = world.clone();
    let mut ttp = Ttp::new(source, ledger.clone(), setup.params, rng_for(seed, "attack-ttp", setup.victim));
    let victim_id = format!("victim-{}", setup.victim);
    let pool = SecureElementState::with_pool(ttp.issue(&victim_id, DEFAULT_POOL_SIZE)?);
    let subject = world.subject(setup.victim)?;
    let mut presentations = rng_for(seed, "attack-presentations", setup.victim);
    let enrollment = sample_presentation(&subject, &mut presentations);
    let (record, se) = enroll(
        &victim_id,
        &enrollment,
        &pool,
        &setup.params,
        world.extractor(),
        &ledger,
        DissimilarityScore(setup.matcher_threshold),
    )?;

    let init_subject = if setup.schedule.victim_init {
        subject.clone()
    } else {
        world.subject(setup.attacker)?
    };
    let start = sample_presentation(&init_subject, &mut presentations);
    // key material the attacker holds for their own account
    let attacker_ad = ttp.issue(&format!("attacker-{}", setup.attacker), 1)?.remove(0).ad;

    let victim = VictimEnvironment {
        client: ClientState {
            client_id: victim_id,
            subject,
            se,
            record,
        },
        params: setup.params,
        world: world.clone(),
        ledger,
        ttp,
        schedule: setup.schedule,
        rng: rng_for(seed, "attack-sessions", setup.victim),
        iteration: 0,
        next_session: 0,
        sessions: 0,
        rotations: 0,
    };
    let mut oracle = LeakageOracle::new(
        [AttackPoint::AP4, AttackPoint::AP7],
        (setup.policy.iterations * setup.policy.proposals_per_iteration) as u64,
    );
    let mut rng = rng_for(seed, "attack-proposals", setup.victim);
    let scenario = setup.params.scenario;
    let trace = match setup.policy.space {
        AttackSpace::Embedding => {
            // The attacker's own pipeline up to the injection point.
            let own = SchemeParams {
                scenario: match scenario {
                    Scenario::GaussianNoise => Scenario::Unprotected,
                    s => s,
                },
                ..setup.params
            };
            let initial = own
                .client_template(&start, Some(&attacker_ad), world.extractor())?
                .embedding;
            hill_climb(initial, &mut oracle, &mut EmbeddingAttack(victim), &setup.policy, scenario, &mut rng)?
        }
        AttackSpace::Image => hill_climb(start, &mut oracle, &mut ImageAttack(victim), &setup.policy, scenario, &mut rng)?,
    };
    Ok(trace.with_thresholds(setup.thresholds.clone()))
}

/// Draws an attacker subject different from the victim.
pub fn pick_attacker(rng: &mut ChaCha8Rng, victim: u64, n_subjects: u64) -> u64 {
    loop {
        let a = rng.random_range(0..n_subjects);
        if a != victim {
            return a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Convex toy victim: distance to a fixed point.
    struct Toy {
        target: Embedding,
        constant: Option<f64>,
    }

    impl AttackEnvironment for Toy {
        type Candidate = Embedding;
        fn score(&mut self, c: &Embedding) -> Result<f64> {
            Ok(self.constant.unwrap_or(dissimilarity(c, &self.target)?.0))
        }
        fn perturb(&self, c: &Embedding, step: f64, rng: &mut ChaCha8Rng) -> Embedding {
            let std = step / (c.dimension() as f64).sqrt();
            Embedding::raw(c.values().iter().map(|x| x + gaussian(rng, std)).collect())
        }
        fn digest(&self, c: &Embedding) -> String {
            c.digest()
        }
    }

    fn toy(constant: Option<f64>) -> Toy {
        Toy {
            target: Embedding::raw(vec![1.0, 0.0, 0.0]),
            constant,
        }
    }

    fn policy(iterations: usize, proposals: usize) -> AttackPolicy {
        AttackPolicy {
            iterations,
            proposals_per_iteration: proposals,
            ..AttackPolicy::default()
        }
    }

    fn oracle() -> LeakageOracle {
        LeakageOracle::new([AttackPoint::AP7], 10_000)
    }

    #[test]
    fn zero_iterations_gives_initial_score_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = hill_climb(Embedding::raw(vec![0.0, 0.0, 0.0]), &mut oracle(), &mut toy(None), &policy(0, 8), Scenario::Unprotected, &mut rng).unwrap();
        assert_eq!(t.points.len(), 1);
        assert_eq!(t.points[0].best_score, 1.0);
        assert_eq!(t.queries, 0);
    }

    #[test]
    fn constant_oracle_keeps_best_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = hill_climb(Embedding::raw(vec![0.0; 3]), &mut oracle(), &mut toy(Some(0.7)), &policy(40, 4), Scenario::Unprotected, &mut rng).unwrap();
        assert!(t.best_scores().iter().all(|&s| s == 0.7));
        assert_eq!(t.queries, 160);
    }

    #[test]
    fn convex_toy_descends() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = hill_climb(Embedding::raw(vec![0.0, 0.0, 0.0]), &mut oracle(), &mut toy(None), &policy(40, 8), Scenario::Unprotected, &mut rng).unwrap();
            let s = t.best_scores();
            assert_eq!(s.len(), 41);
            assert!(s.windows(2).all(|w| w[1] <= w[0]));
            assert!(s[40] < 0.1 * s[0], "seed {seed}: {} -> {}", s[0], s[40]);
            assert_eq!(t.queries, 320);
        }
    }

    #[test]
    fn budget_exhaustion_truncates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut o = LeakageOracle::new([AttackPoint::AP7], 20);
        let t = hill_climb(Embedding::raw(vec![0.0; 3]), &mut o, &mut toy(None), &policy(40, 8), Scenario::Unprotected, &mut rng).unwrap();
        assert!(t.truncated);
        assert_eq!(t.points.len(), 3);
        assert_eq!(o.queries_used, 20);
        assert!(matches!(leak_score(&mut o, &mut toy(None), &Embedding::raw(vec![0.0; 3])), Err(Error::OracleExhausted(20))));
    }

    #[test]
    fn untapped_points_are_refused() {
        let mut o = LeakageOracle::new([AttackPoint::AP6], 5);
        assert!(matches!(leak_score(&mut o, &mut toy(None), &Embedding::raw(vec![0.0; 3])), Err(Error::UntappedAttackPoint(_))));
    }

    #[test]
    fn identical_queries_score_identically() {
        let mut o = oracle();
        let mut env = toy(None);
        let c = Embedding::raw(vec![0.3, 0.1, 0.0]);
        assert_eq!(leak_score(&mut o, &mut env, &c).unwrap(), leak_score(&mut o, &mut env, &c).unwrap());
    }

    #[test]
    fn success_indices_and_trace_files() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = hill_climb(Embedding::raw(vec![0.0; 3]), &mut oracle(), &mut toy(None), &policy(10, 8), Scenario::GaussianNoise, &mut rng).unwrap();
        let mut th = BTreeMap::new();
        th.insert(OperatingPointName::Eer, 0.9);
        th.insert(OperatingPointName::Far(1000), -1.0);
        let t = t.with_thresholds(th);
        let first = t.points.iter().find(|p| p.best_score < 0.9).unwrap().iteration;
        assert_eq!(t.success_at.get(&OperatingPointName::Eer), Some(&first));
        assert!(!t.success_at.contains_key(&OperatingPointName::Far(1000)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        t.write(&path).unwrap();
        assert_eq!(AttackTrace::read(&path).unwrap(), t);
    }

    #[test]
    fn injection_requires_ap4() {
        let record = ServerRecord {
            client_ref: crate::transforms::protect_none(&Embedding::raw(vec![1.0, 0.0])),
            threshold: DissimilarityScore(0.5),
            history: Vec::new(),
        };
        let ap4 = LeakageOracle::new([AttackPoint::AP4], 0);
        assert_eq!(inject_template(&ap4, &Embedding::raw(vec![1.0, 0.0]), &record).unwrap(), Decision::Accept);
        assert_eq!(inject_template(&ap4, &Embedding::raw(vec![0.0, 1.0]), &record).unwrap(), Decision::Reject);
        assert!(inject_template(&oracle(), &Embedding::raw(vec![1.0, 0.0]), &record).is_err());
    }
}

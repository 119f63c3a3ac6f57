//! Three-party verification scheme: a trusted third party (TTP) issues
//! pseudonym sets carrying fresh auxiliary data, the client keeps its current
//! AD in a secure element, and the server stores one protected reference per
//! client. Under OTB-morph every accepted verification re-enrolls the client
//! with a new AD; the static-key scenarios keep their reference.
//!
//! All state transitions are pure: operations take the current state and
//! return the next one, so a rejected step trivially leaves state untouched.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{dissimilarity, DissimilarityScore, Embedding, FeatureExtractor};
use crate::image::write_atomic;
use crate::morph::MorphParams;
use crate::transforms::{
    protect_gaussian, protect_implode, protect_none, protect_otb, AdId, AdLedger, AdPayload,
    AuxiliaryData, ProtectedTemplate, Scenario,
};
use crate::world::{sample_presentation, Presentation, SubjectModel, SyntheticWorld};

pub const DEFAULT_POOL_SIZE: usize = 64;

/// Transform settings shared by every party of one deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeParams {
    pub scenario: Scenario,
    pub morph: MorphParams,
    pub noise_sigma: f64,
    pub implode_strength: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            scenario: Scenario::OtbMorph,
            morph: MorphParams::default(),
            noise_sigma: 0.3,
            implode_strength: 0.5,
        }
    }
}

impl SchemeParams {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    /// Whether accepted sessions re-enroll with fresh AD.
    pub fn rotates(&self) -> bool {
        self.scenario == Scenario::OtbMorph
    }

    /// Client-side pipeline from a presentation to the submitted template.
    pub fn client_template(
        &self,
        presentation: &Presentation,
        ad: Option<&AuxiliaryData>,
        extractor: &dyn FeatureExtractor,
    ) -> Result<ProtectedTemplate> {
        let need_ad = || ad.ok_or_else(|| Error::ProtocolState("no current auxiliary data".into()));
        match self.scenario {
            Scenario::Unprotected => Ok(protect_none(&extractor.extract(&presentation.image)?)),
            Scenario::GaussianNoise => {
                protect_gaussian(&extractor.extract(&presentation.image)?, need_ad()?, self.noise_sigma)
            }
            Scenario::Imploding => {
                let strength = match ad.map(|a| &a.payload) {
                    Some(AdPayload::ImplodeKey { strength }) => *strength,
                    _ => self.implode_strength,
                };
                let mut t = protect_implode(&presentation.image, strength, extractor)?;
                t.ad_id = ad.map(|a| a.ad_id);
                Ok(t)
            }
            Scenario::OtbMorph => protect_otb(
                &presentation.image,
                &presentation.landmarks,
                need_ad()?,
                &self.morph,
                extractor,
            ),
        }
    }

    /// The part of the pipeline that runs after feature extraction. A feature
    /// injected past the extractor still goes through it.
    pub fn transform_feature(&self, feature: &Embedding, ad: Option<&AuxiliaryData>) -> Result<Embedding> {
        match self.scenario {
            Scenario::GaussianNoise => {
                let ad = ad.ok_or_else(|| Error::ProtocolState("no current auxiliary data".into()))?;
                Ok(protect_gaussian(feature, ad, self.noise_sigma)?.embedding)
            }
            _ => Ok(feature.clone()),
        }
    }
}

/// Supplies the random faces the TTP hands out as auxiliary data.
pub trait RandomFaceSource: Send + Sync {
    fn random_face(&self, key: u64) -> Presentation;
}

impl RandomFaceSource for SyntheticWorld {
    fn random_face(&self, key: u64) -> Presentation {
        SyntheticWorld::random_face(self, key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudonymSet {
    pub pseudonym_id: String,
    pub ad: AuxiliaryData,
    pub issued_to: String,
    pub consumed: bool,
}

/// Trusted third party. Several instances may share one ledger; each owns its
/// random stream.
pub struct Ttp {
    source: Arc<dyn RandomFaceSource>,
    ledger: Arc<AdLedger>,
    params: SchemeParams,
    rng: ChaCha8Rng,
}

impl Ttp {
    pub fn new(
        source: Arc<dyn RandomFaceSource>,
        ledger: Arc<AdLedger>,
        params: SchemeParams,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            source,
            ledger,
            params,
            rng,
        }
    }

    pub fn ledger(&self) -> &AdLedger {
        &self.ledger
    }

    fn fresh_ad(&mut self) -> Result<AuxiliaryData> {
        let id = AdId(self.rng.random());
        self.ledger.register_issue(id)?;
        Ok(match self.params.scenario {
            Scenario::Unprotected => AuxiliaryData {
                ad_id: id,
                payload: AdPayload::None,
            },
            Scenario::GaussianNoise => AuxiliaryData::noise_key(id, self.rng.random()),
            Scenario::Imploding => AuxiliaryData::implode_key(id, self.params.implode_strength),
            Scenario::OtbMorph => {
                let face = self.source.random_face((id.0 as u64) ^ ((id.0 >> 64) as u64));
                AuxiliaryData::random_face(id, face.image, face.landmarks)
            }
        })
    }

    /// Issues `n` pseudonym sets, each with never-before-issued AD.
    pub fn issue(&mut self, client_id: &str, n: usize) -> Result<Vec<PseudonymSet>> {
        if n == 0 {
            return Err(Error::InvalidParameter("pseudonym count must be at least 1".into()));
        }
        (0..n)
            .map(|_| {
                let token: u128 = self.rng.random();
                Ok(PseudonymSet {
                    pseudonym_id: format!("ps-{token:032x}"),
                    ad: self.fresh_ad()?,
                    issued_to: client_id.to_string(),
                    consumed: false,
                })
            })
            .collect()
    }
}

pub fn ttp_issue(ttp: &mut Ttp, client_id: &str, n: usize) -> Result<Vec<PseudonymSet>> {
    ttp.issue(client_id, n)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SecureElementState {
    pub current_ad: Option<AuxiliaryData>,
    pub pool: Vec<PseudonymSet>,
}

impl SecureElementState {
    pub fn with_pool(pool: Vec<PseudonymSet>) -> Self {
        Self {
            current_ad: None,
            pool,
        }
    }

    /// Adds freshly issued pseudonym sets to the pool.
    pub fn replenish(&self, sets: Vec<PseudonymSet>) -> Self {
        let mut next = self.clone();
        next.pool.extend(sets);
        next
    }

    /// Takes the first unconsumed set, returning it marked consumed.
    fn take(&self) -> Option<(PseudonymSet, Self)> {
        let mut next = self.clone();
        if next.pool.is_empty() {
            return None;
        }
        let mut set = next.pool.remove(0);
        set.consumed = true;
        Some((set, next))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub session_id: u64,
    pub decision: Decision,
    /// `(retired AD, new AD)` when the reference was rotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<(AdId, AdId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerRecord {
    pub client_ref: ProtectedTemplate,
    pub threshold: DissimilarityScore,
    pub history: Vec<HistoryEvent>,
}

impl ServerRecord {
    fn append(&self, event: HistoryEvent) -> Result<Self> {
        if let Some(last) = self.history.last() {
            if event.session_id <= last.session_id {
                return Err(Error::ProtocolState(format!(
                    "session {} does not follow session {}",
                    event.session_id, last.session_id
                )));
            }
        }
        let mut next = self.clone();
        next.history.push(event);
        Ok(next)
    }
}

/// Matcher rule: accept iff the score is strictly below the threshold.
pub fn decide(score: DissimilarityScore, threshold: DissimilarityScore) -> Decision {
    if score.0 < threshold.0 {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// Enrolls a client: consumes one pseudonym, binds its AD to `client_id` and
/// stores the protected template as the reference.
pub fn enroll(
    client_id: &str,
    presentation: &Presentation,
    se: &SecureElementState,
    params: &SchemeParams,
    extractor: &dyn FeatureExtractor,
    ledger: &AdLedger,
    threshold: DissimilarityScore,
) -> Result<(ServerRecord, SecureElementState)> {
    let (set, mut next) = se
        .take()
        .ok_or_else(|| Error::EnrollmentUnavailable(client_id.to_string()))?;
    let template = params.client_template(presentation, Some(&set.ad), extractor)?;
    ledger.bind(set.ad.ad_id, client_id)?;
    next.current_ad = Some(set.ad);
    Ok((
        ServerRecord {
            client_ref: template,
            threshold,
            history: Vec::new(),
        },
        next,
    ))
}

/// Result of Step 1, needed to authorise Step 2 of the same session.
#[derive(Debug, Clone, PartialEq)]
pub struct Step1Outcome {
    pub session_id: u64,
    pub decision: Decision,
    pub score: DissimilarityScore,
    pub probe: ProtectedTemplate,
    reference_digest: String,
}

/// Step 1: protect the presentation with the current AD and match it against
/// the stored reference. Never changes any state.
pub fn verify_step1(
    session_id: u64,
    presentation: &Presentation,
    record: &ServerRecord,
    se: &SecureElementState,
    params: &SchemeParams,
    extractor: &dyn FeatureExtractor,
) -> Result<Step1Outcome> {
    let ad = se
        .current_ad
        .as_ref()
        .ok_or_else(|| Error::ProtocolState("secure element holds no current AD".into()))?;
    let probe = params.client_template(presentation, Some(ad), extractor)?;
    match_template(session_id, probe, record)
}

/// Matches an already formed template (also the path an injected template
/// takes).
pub fn match_template(session_id: u64, probe: ProtectedTemplate, record: &ServerRecord) -> Result<Step1Outcome> {
    let score = dissimilarity(&probe.embedding, &record.client_ref.embedding)?;
    Ok(Step1Outcome {
        session_id,
        decision: decide(score, record.threshold),
        score,
        probe,
        reference_digest: record.client_ref.embedding.digest(),
    })
}

/// Step 2: re-enroll from a fresh presentation with a new pseudonym's AD.
/// Only valid right after an accepting Step 1 against the same reference.
#[allow(clippy::too_many_arguments)]
pub fn verify_step2(
    client_id: &str,
    outcome: &Step1Outcome,
    fresh: &Presentation,
    record: &ServerRecord,
    se: &SecureElementState,
    params: &SchemeParams,
    extractor: &dyn FeatureExtractor,
    ledger: &AdLedger,
) -> Result<(ServerRecord, SecureElementState)> {
    if outcome.decision != Decision::Accept {
        return Err(Error::ProtocolViolation(format!(
            "re-enrollment requested after a rejected step 1 in session {}",
            outcome.session_id
        )));
    }
    if outcome.reference_digest != record.client_ref.embedding.digest() {
        return Err(Error::ProtocolViolation(format!(
            "step 1 of session {} matched a different reference",
            outcome.session_id
        )));
    }
    let old_ad = se
        .current_ad
        .as_ref()
        .ok_or_else(|| Error::ProtocolState("secure element holds no current AD".into()))?
        .ad_id;
    let (set, mut next_se) = se
        .take()
        .ok_or_else(|| Error::PoolExhausted(client_id.to_string()))?;
    let template = params.client_template(fresh, Some(&set.ad), extractor)?;
    ledger.bind(set.ad.ad_id, client_id)?;
    let new_ad = set.ad.ad_id;
    next_se.current_ad = Some(set.ad);
    let mut next_record = record.append(HistoryEvent {
        session_id: outcome.session_id,
        decision: Decision::Accept,
        rotation: Some((old_ad, new_ad)),
    })?;
    next_record.client_ref = template;
    Ok((next_record, next_se))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Client,
    Server,
    Ttp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Request,
    Challenge,
    TemplateSubmission,
    Decision,
    ReEnrollment,
    RotationAck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub session_id: u64,
    pub seq: u32,
    pub from: Party,
    pub to: Party,
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub payload_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Genuine,
    Attacker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub session_id: u64,
    pub client_id: String,
    pub behavior: Behavior,
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    pub rotated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_ad: Option<AdId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_ad: Option<AdId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SessionTranscript {
    /// One JSON object per message.
    pub fn to_jsonl(&self) -> String {
        self.messages
            .iter()
            .map(|m| serde_json::to_string(m).expect("message serialises") + "\n")
            .collect()
    }
}

/// A template observed on the client-to-server channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TappedTemplate {
    pub session_id: u64,
    pub kind: MessageType,
    pub template: ProtectedTemplate,
}

/// In-process client-to-server channel with an optional eavesdropping tap.
#[derive(Debug, Default)]
pub struct Channel {
    tap: Option<Vec<TappedTemplate>>,
}

impl Channel {
    pub fn tapped() -> Self {
        Self { tap: Some(Vec::new()) }
    }

    fn observe(&mut self, session_id: u64, kind: MessageType, template: &ProtectedTemplate) {
        if let Some(tap) = self.tap.as_mut() {
            tap.push(TappedTemplate {
                session_id,
                kind,
                template: template.clone(),
            });
        }
    }

    pub fn captured(&self) -> &[TappedTemplate] {
        self.tap.as_deref().unwrap_or(&[])
    }
}

fn digest_str(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Everything one enrolled client needs to run sessions.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: String,
    pub subject: SubjectModel,
    pub se: SecureElementState,
    pub record: ServerRecord,
}

/// What the other side presents in an attacker session: a face of a
/// different subject, protected with key material the attacker holds.
#[derive(Debug, Clone)]
pub struct AttackerMaterial {
    pub subject: SubjectModel,
    pub ad: Option<AuxiliaryData>,
}

pub struct SessionContext<'a> {
    pub params: &'a SchemeParams,
    pub extractor: &'a dyn FeatureExtractor,
    pub ledger: &'a AdLedger,
}

/// Runs one verification session (Step 1 and, after an accept under a
/// rotating scheme, Step 2). On failure the returned state is unchanged and
/// the transcript stops at the failing message with `error` set.
pub fn run_session(
    ctx: &SessionContext<'_>,
    client: &ClientState,
    session_id: u64,
    behavior: Behavior,
    attacker: Option<&AttackerMaterial>,
    channel: &mut Channel,
    rng: &mut ChaCha8Rng,
) -> (SessionTranscript, ClientState) {
    let mut t = SessionTranscript {
        session_id,
        client_id: client.client_id.clone(),
        behavior,
        messages: Vec::new(),
        decision: None,
        rotated: false,
        matched_ad: None,
        new_ad: None,
        error: None,
    };
    let result = session_steps(ctx, client, session_id, behavior, attacker, channel, rng, &mut t);
    match result {
        Ok(next) => (t, next),
        Err(e) => {
            t.error = Some(format!("{}: {e}", e.kind()));
            (t, client.clone())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn session_steps(
    ctx: &SessionContext<'_>,
    client: &ClientState,
    session_id: u64,
    behavior: Behavior,
    attacker: Option<&AttackerMaterial>,
    channel: &mut Channel,
    rng: &mut ChaCha8Rng,
    t: &mut SessionTranscript,
) -> Result<ClientState> {
    let mut seq = 0u32;
    let mut push = |t: &mut SessionTranscript, from, to, kind, digest: String, score, decision| {
        t.messages.push(Message {
            session_id,
            seq,
            from,
            to,
            kind,
            payload_digest: digest,
            score,
            decision,
        });
        seq += 1;
    };
    let sid = session_id.to_string();
    push(t, Party::Client, Party::Server, MessageType::Request, digest_str(&["request", &client.client_id, &sid]), None, None);
    let nonce: u64 = rng.random();
    push(t, Party::Server, Party::Client, MessageType::Challenge, digest_str(&["challenge", &sid, &nonce.to_string()]), None, None);

    let probe = match behavior {
        Behavior::Genuine => {
            let p = sample_presentation(&client.subject, rng);
            let ad = client.se.current_ad.as_ref();
            t.matched_ad = ad.map(|a| a.ad_id);
            ctx.params.client_template(&p, ad, ctx.extractor)?
        }
        Behavior::Attacker => {
            let a = attacker.ok_or_else(|| Error::ProtocolState("attacker session without attacker material".into()))?;
            let p = sample_presentation(&a.subject, rng);
            ctx.params.client_template(&p, a.ad.as_ref(), ctx.extractor)?
        }
    };
    channel.observe(session_id, MessageType::TemplateSubmission, &probe);
    push(t, Party::Client, Party::Server, MessageType::TemplateSubmission, probe.embedding.digest(), None, None);

    let outcome = match_template(session_id, probe, &client.record)?;
    push(t, Party::Server, Party::Client, MessageType::Decision, digest_str(&["decision", &sid]), Some(outcome.score.0), Some(outcome.decision));
    t.decision = Some(outcome.decision);

    let mut next = client.clone();
    if outcome.decision == Decision::Reject {
        return Ok(next);
    }
    if !ctx.params.rotates() {
        next.record = client.record.append(HistoryEvent {
            session_id,
            decision: Decision::Accept,
            rotation: None,
        })?;
        return Ok(next);
    }
    // Step 2 captures another presentation of whoever is in front of the
    // sensor.
    let fresh = match behavior {
        Behavior::Genuine => sample_presentation(&client.subject, rng),
        Behavior::Attacker => sample_presentation(&attacker.expect("checked above").subject, rng),
    };
    let (record, se) = verify_step2(
        &client.client_id,
        &outcome,
        &fresh,
        &client.record,
        &client.se,
        ctx.params,
        ctx.extractor,
        ctx.ledger,
    )?;
    channel.observe(session_id, MessageType::ReEnrollment, &record.client_ref);
    push(t, Party::Client, Party::Server, MessageType::ReEnrollment, record.client_ref.embedding.digest(), None, None);
    push(t, Party::Server, Party::Client, MessageType::RotationAck, digest_str(&["rotation", &sid]), None, None);
    t.rotated = true;
    t.new_ad = se.current_ad.as_ref().map(|a| a.ad_id);
    next.record = record;
    next.se = se;
    Ok(next)
}

/// Server database: one record per client id plus the session counter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerStore {
    pub next_session_id: u64,
    pub records: BTreeMap<String, ServerRecord>,
}

impl ServerStore {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("store serialises")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_for;
    use crate::world::SyntheticWorldConfig;
    use std::sync::OnceLock;

    fn world() -> &'static Arc<SyntheticWorld> {
        static W: OnceLock<Arc<SyntheticWorld>> = OnceLock::new();
        W.get_or_init(|| {
            Arc::new(
                SyntheticWorld::new(SyntheticWorldConfig {
                    n_subjects: 100,
                    ..SyntheticWorldConfig::default()
                })
                .unwrap(),
            )
        })
    }

    fn ttp(ledger: &Arc<AdLedger>, seed: u64) -> Ttp {
        Ttp::new(world().clone(), ledger.clone(), SchemeParams::default(), rng_for(seed, "ttp", 0))
    }

    fn enrolled(ledger: &Arc<AdLedger>, pool: usize, threshold: f64) -> ClientState {
        let mut ttp = ttp(ledger, 1);
        let se = SecureElementState::with_pool(ttp.issue("c0", pool).unwrap());
        let subject = world().subject(0).unwrap();
        let p = sample_presentation(&subject, &mut rng_for(1, "p", 0));
        let (record, se) = enroll(
            "c0",
            &p,
            &se,
            &SchemeParams::default(),
            world().extractor(),
            ledger,
            DissimilarityScore(threshold),
        )
        .unwrap();
        ClientState {
            client_id: "c0".into(),
            subject,
            se,
            record,
        }
    }

    #[test]
    fn issuance_is_fresh_and_counted() {
        let ledger = Arc::new(AdLedger::new());
        let mut t = ttp(&ledger, 3);
        let one = t.issue("a", 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(!one[0].consumed);
        assert!(ledger.is_issued(one[0].ad.ad_id));
        assert!(matches!(t.issue("a", 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn enrollment_consumes_a_pseudonym() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 2, 0.25);
        assert_eq!(c.se.pool.len(), 1);
        assert!(c.se.current_ad.is_some());
        assert_eq!(c.record.client_ref.scenario, Scenario::OtbMorph);

        let mut t = ttp(&ledger, 4);
        let se = SecureElementState::with_pool(t.issue("c1", 1).unwrap());
        let p = sample_presentation(&c.subject, &mut rng_for(2, "p", 0));
        let params = SchemeParams::default();
        let (_, se) = enroll("c1", &p, &se, &params, world().extractor(), &ledger, DissimilarityScore(0.2)).unwrap();
        assert!(matches!(
            enroll("c1", &p, &se, &params, world().extractor(), &ledger, DissimilarityScore(0.2)),
            Err(Error::EnrollmentUnavailable(_))
        ));
    }

    #[test]
    fn reference_differs_from_plain_embedding() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 1, 0.25);
        let p = sample_presentation(&c.subject, &mut rng_for(1, "p", 0));
        let plain = world().extractor().extract(&p.image).unwrap();
        assert!(dissimilarity(&plain, &c.record.client_ref.embedding).unwrap().0 > 0.0);
    }

    #[test]
    fn equality_with_threshold_rejects() {
        assert_eq!(decide(DissimilarityScore(0.3), DissimilarityScore(0.3)), Decision::Reject);
        assert_eq!(decide(DissimilarityScore(0.2999), DissimilarityScore(0.3)), Decision::Accept);
    }

    #[test]
    fn step1_requires_current_ad() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 1, 0.25);
        let p = sample_presentation(&c.subject, &mut rng_for(5, "p", 0));
        let empty = SecureElementState::default();
        assert!(matches!(
            verify_step1(1, &p, &c.record, &empty, &SchemeParams::default(), world().extractor()),
            Err(Error::ProtocolState(_))
        ));
    }

    #[test]
    fn step2_after_reject_is_a_violation() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 3, 0.0);
        let params = SchemeParams::default();
        let p = sample_presentation(&c.subject, &mut rng_for(5, "p", 0));
        let out = verify_step1(1, &p, &c.record, &c.se, &params, world().extractor()).unwrap();
        assert_eq!(out.decision, Decision::Reject);
        assert!(matches!(
            verify_step2("c0", &out, &p, &c.record, &c.se, &params, world().extractor(), &ledger),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn rotation_replaces_reference_and_ad() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 3, 10.0);
        let params = SchemeParams::default();
        let ctx = SessionContext { params: &params, extractor: world().extractor(), ledger: &ledger };
        let mut rng = rng_for(9, "s", 0);
        let (t1, c1) = run_session(&ctx, &c, 1, Behavior::Genuine, None, &mut Channel::default(), &mut rng);
        assert_eq!(t1.decision, Some(Decision::Accept));
        assert!(t1.rotated);
        assert_ne!(c1.record.client_ref, c.record.client_ref);
        assert_ne!(c1.se.current_ad, c.se.current_ad);
        let (t2, _) = run_session(&ctx, &c1, 2, Behavior::Genuine, None, &mut Channel::default(), &mut rng);
        assert_eq!(t2.matched_ad, t1.new_ad);
        let kinds: Vec<_> = t1.messages.iter().map(|m| m.kind).collect();
        assert_eq!(
            kinds,
            [
                MessageType::Request,
                MessageType::Challenge,
                MessageType::TemplateSubmission,
                MessageType::Decision,
                MessageType::ReEnrollment,
                MessageType::RotationAck
            ]
        );
    }

    #[test]
    fn exhausted_pool_keeps_step1_accept() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 1, 10.0);
        assert!(c.se.pool.is_empty());
        let params = SchemeParams::default();
        let ctx = SessionContext { params: &params, extractor: world().extractor(), ledger: &ledger };
        let (t, next) = run_session(&ctx, &c, 1, Behavior::Genuine, None, &mut Channel::default(), &mut rng_for(1, "s", 0));
        assert_eq!(t.decision, Some(Decision::Accept));
        assert!(!t.rotated);
        assert!(t.error.as_deref().unwrap().starts_with("pool-exhausted"));
        assert_eq!(next.record, c.record);
        assert_eq!(next.se, c.se);
    }

    #[test]
    fn rejected_session_leaves_state_untouched() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 3, 0.0);
        let params = SchemeParams::default();
        let ctx = SessionContext { params: &params, extractor: world().extractor(), ledger: &ledger };
        let (t, next) = run_session(&ctx, &c, 1, Behavior::Genuine, None, &mut Channel::default(), &mut rng_for(1, "s", 0));
        assert_eq!(t.decision, Some(Decision::Reject));
        assert_eq!(next.record, c.record);
        assert_eq!(next.se, c.se);
    }

    #[test]
    fn tap_sees_submitted_templates() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 3, 10.0);
        let params = SchemeParams::default();
        let ctx = SessionContext { params: &params, extractor: world().extractor(), ledger: &ledger };
        let mut ch = Channel::tapped();
        let (_, next) = run_session(&ctx, &c, 1, Behavior::Genuine, None, &mut ch, &mut rng_for(1, "s", 0));
        assert_eq!(ch.captured().len(), 2);
        assert_eq!(ch.captured()[1].template, next.record.client_ref);
    }

    #[test]
    fn store_round_trips_bit_exactly() {
        let ledger = Arc::new(AdLedger::new());
        let c = enrolled(&ledger, 2, 0.123456789012345);
        let mut store = ServerStore { next_session_id: 7, ..Default::default() };
        store.records.insert(c.client_id.clone(), c.record.clone());
        let json = store.to_json();
        let back = ServerStore::from_json(&json, Path::new("mem")).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_json(), json);
    }
}

//! The four protection scenarios and the auxiliary data (AD) they consume.
//!
//! * (i) unprotected pass-through,
//! * (ii) Gaussian noise added to the probe embedding,
//! * (iii) imploding the face image before feature extraction,
//! * (iv) morphing the face with a never-reused random face.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Embedding, FeatureExtractor};
use crate::image::{write_atomic, FaceImage};
use crate::landmarks::LandmarkSet;
use crate::morph::{morph, MorphParams};
use crate::seeds::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "i")]
    Unprotected,
    #[serde(rename = "ii")]
    GaussianNoise,
    #[serde(rename = "iii")]
    Imploding,
    #[serde(rename = "iv")]
    OtbMorph,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Unprotected,
        Scenario::GaussianNoise,
        Scenario::Imploding,
        Scenario::OtbMorph,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Unprotected => "i",
            Scenario::GaussianNoise => "ii",
            Scenario::Imploding => "iii",
            Scenario::OtbMorph => "iv",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::Unprotected => "unprotected",
            Scenario::GaussianNoise => "gaussian-noise",
            Scenario::Imploding => "imploding",
            Scenario::OtbMorph => "otb-morph",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.label() == s || sc.description() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?} (expected i, ii, iii or iv)")))
    }
}

/// Globally unique AD identifier, printed as 32 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AdId(pub u128);

impl fmt::Display for AdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for AdId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 32 {
            return Err(Error::InvalidParameter(format!("ad id {s:?} is not 32 hex digits")));
        }
        u128::from_str_radix(s, 16)
            .map(AdId)
            .map_err(|e| Error::InvalidParameter(format!("ad id {s:?}: {e}")))
    }
}

impl Serialize for AdId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AdId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdKind {
    None,
    NoiseKey,
    ImplodeKey,
    RandomFace,
}

impl AdKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdKind::None => "none",
            AdKind::NoiseKey => "noise_key",
            AdKind::ImplodeKey => "implode_key",
            AdKind::RandomFace => "random_face",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdPayload {
    None,
    NoiseKey { seed: u64 },
    ImplodeKey { strength: f64 },
    RandomFace { face: FaceImage, landmarks: LandmarkSet },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryData {
    pub ad_id: AdId,
    pub payload: AdPayload,
}

impl AuxiliaryData {
    pub fn kind(&self) -> AdKind {
        match self.payload {
            AdPayload::None => AdKind::None,
            AdPayload::NoiseKey { .. } => AdKind::NoiseKey,
            AdPayload::ImplodeKey { .. } => AdKind::ImplodeKey,
            AdPayload::RandomFace { .. } => AdKind::RandomFace,
        }
    }

    fn expect(&self, kind: AdKind) -> Result<()> {
        if self.kind() == kind {
            Ok(())
        } else {
            Err(Error::WrongAdKind {
                expected: kind.as_str(),
                actual: self.kind().as_str(),
            })
        }
    }

    pub fn noise_key(ad_id: AdId, seed: u64) -> Self {
        Self {
            ad_id,
            payload: AdPayload::NoiseKey { seed },
        }
    }

    pub fn implode_key(ad_id: AdId, strength: f64) -> Self {
        Self {
            ad_id,
            payload: AdPayload::ImplodeKey { strength },
        }
    }

    pub fn random_face(ad_id: AdId, face: FaceImage, landmarks: LandmarkSet) -> Self {
        Self {
            ad_id,
            payload: AdPayload::RandomFace { face, landmarks },
        }
    }

    /// Serialisable record. A random face is written next to `dir` as
    /// `<ad_id>.pgm` / `<ad_id>.lm` and referenced by relative path.
    pub fn to_record(&self, dir: &Path) -> Result<AdRecord> {
        let mut record = AdRecord {
            ad_id: self.ad_id,
            kind: self.kind(),
            seed: None,
            strength: None,
            face_path: None,
            landmark_path: None,
        };
        match &self.payload {
            AdPayload::None => {}
            AdPayload::NoiseKey { seed } => record.seed = Some(*seed),
            AdPayload::ImplodeKey { strength } => record.strength = Some(*strength),
            AdPayload::RandomFace { face, landmarks } => {
                let ext = if face.channels() == 1 { "pgm" } else { "ppm" };
                let face_name = format!("{}.{ext}", self.ad_id);
                let lm_name = format!("{}.lm", self.ad_id);
                write_atomic(&dir.join(&face_name), &face.encode_pnm())?;
                landmarks.write(&dir.join(&lm_name))?;
                record.face_path = Some(face_name);
                record.landmark_path = Some(lm_name);
            }
        }
        Ok(record)
    }

    pub fn from_record(record: &AdRecord, dir: &Path) -> Result<Self> {
        let missing = |field: &str| {
            Error::Format {
                path: dir.to_path_buf(),
                message: format!("ad record {} lacks {field}", record.ad_id),
            }
        };
        let payload = match record.kind {
            AdKind::None => AdPayload::None,
            AdKind::NoiseKey => AdPayload::NoiseKey {
                seed: record.seed.ok_or_else(|| missing("seed"))?,
            },
            AdKind::ImplodeKey => AdPayload::ImplodeKey {
                strength: record.strength.ok_or_else(|| missing("strength"))?,
            },
            AdKind::RandomFace => {
                let face = record.face_path.as_ref().ok_or_else(|| missing("face_path"))?;
                let lm = record.landmark_path.as_ref().ok_or_else(|| missing("landmark_path"))?;
                AdPayload::RandomFace {
                    face: FaceImage::read_pnm(&dir.join(face))?,
                    landmarks: LandmarkSet::read(&dir.join(lm))?,
                }
            }
        };
        Ok(Self {
            ad_id: record.ad_id,
            payload,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    pub ad_id: AdId,
    pub kind: AdKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmark_path: Option<String>,
}

/// Tracks every issued AD id and which reference each AD was bound to.
/// Both checks are atomic check-and-insert operations.
#[derive(Debug, Default)]
pub struct AdLedger {
    issued: Mutex<HashSet<AdId>>,
    bound: Mutex<HashMap<AdId, String>>,
}

impl AdLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a fresh issuance; a repeated id is an internal error.
    pub fn register_issue(&self, id: AdId) -> Result<()> {
        let mut issued = self.issued.lock().expect("ledger lock poisoned");
        if issued.insert(id) {
            Ok(())
        } else {
            Err(Error::LedgerConflict(id.to_string()))
        }
    }

    /// Binds `id` to the reference named `owner`. Each AD can protect only one
    /// reference over its whole lifetime.
    pub fn bind(&self, id: AdId, owner: &str) -> Result<()> {
        let mut bound = self.bound.lock().expect("ledger lock poisoned");
        if bound.contains_key(&id) {
            return Err(Error::AdReuse(id.to_string()));
        }
        bound.insert(id, owner.to_string());
        Ok(())
    }

    pub fn is_issued(&self, id: AdId) -> bool {
        self.issued.lock().expect("ledger lock poisoned").contains(&id)
    }

    pub fn bound_owner(&self, id: AdId) -> Option<String> {
        self.bound.lock().expect("ledger lock poisoned").get(&id).cloned()
    }

    pub fn issued_count(&self) -> usize {
        self.issued.lock().expect("ledger lock poisoned").len()
    }

    pub fn bound_count(&self) -> usize {
        self.bound.lock().expect("ledger lock poisoned").len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedTemplate {
    pub embedding: Embedding,
    pub scenario: Scenario,
    pub ad_id: Option<AdId>,
}

pub fn protect_none(probe: &Embedding) -> ProtectedTemplate {
    ProtectedTemplate {
        embedding: probe.clone(),
        scenario: Scenario::Unprotected,
        ad_id: None,
    }
}

/// Adds isotropic Gaussian noise `N(0, sigma^2 / d)` per coordinate and
/// re-normalises. The noise stream is keyed by the AD seed together with the
/// probe digest, so every capture draws its own noise while repeated calls on
/// the same inputs agree exactly.
pub fn protect_gaussian(probe: &Embedding, ad: &AuxiliaryData, sigma: f64) -> Result<ProtectedTemplate> {
    ad.expect(AdKind::NoiseKey)?;
    let AdPayload::NoiseKey { seed } = ad.payload else {
        unreachable!()
    };
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma {sigma} must be >= 0")));
    }
    let embedding = if sigma == 0.0 {
        probe.clone()
    } else {
        let d = probe.dimension();
        let dist = Normal::new(0.0, sigma / (d as f64).sqrt())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = rng_for(seed, &probe.digest(), 0);
        let values = probe
            .values()
            .iter()
            .map(|v| v + dist.sample(&mut rng))
            .collect();
        Embedding::normalized(values)?
    };
    Ok(ProtectedTemplate {
        embedding,
        scenario: Scenario::GaussianNoise,
        ad_id: Some(ad.ad_id),
    })
}

/// Radial resampling toward the image centre: an output pixel at normalised
/// radius `r` reads the input at radius `r^(1 / (1 - strength))` along the
/// same ray. Radii are normalised by the half-diagonal.
pub fn implode(img: &FaceImage, strength: f64) -> Result<FaceImage> {
    if !(0.0..1.0).contains(&strength) {
        return Err(Error::InvalidParameter(format!(
            "implode strength {strength} outside [0, 1)"
        )));
    }
    if strength == 0.0 {
        return Ok(img.clone());
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let rmax = cx.hypot(cy).max(f64::MIN_POSITIVE);
    let exponent = 1.0 / (1.0 - strength);
    let mut data = Vec::with_capacity(w * h * c);
    let mut px = vec![0.0; c];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let r = dx.hypot(dy) / rmax;
            if r == 0.0 {
                data.extend((0..c).map(|ch| img.get(x, y, ch)));
                continue;
            }
            let factor = r.powf(exponent) / r;
            img.sample_bilinear(cx + dx * factor, cy + dy * factor, &mut px);
            data.extend_from_slice(&px);
        }
    }
    Ok(FaceImage::from_raw_unchecked(w, h, c, data))
}

pub fn protect_implode(
    img: &FaceImage,
    strength: f64,
    extractor: &dyn FeatureExtractor,
) -> Result<ProtectedTemplate> {
    let imploded = implode(img, strength)?;
    Ok(ProtectedTemplate {
        embedding: extractor.extract(&imploded)?,
        scenario: Scenario::Imploding,
        ad_id: None,
    })
}

/// Morphs the probe with the AD's random face and extracts features.
pub fn protect_otb(
    probe_img: &FaceImage,
    probe_lm: &LandmarkSet,
    ad: &AuxiliaryData,
    params: &MorphParams,
    extractor: &dyn FeatureExtractor,
) -> Result<ProtectedTemplate> {
    ad.expect(AdKind::RandomFace)?;
    let AdPayload::RandomFace { face, landmarks } = &ad.payload else {
        unreachable!()
    };
    let morphed = morph(probe_img, probe_lm, face, landmarks, params)?;
    Ok(ProtectedTemplate {
        embedding: extractor.extract(&morphed)?,
        scenario: Scenario::OtbMorph,
        ad_id: Some(ad.ad_id),
    })
}

/// As [`protect_otb`], producing a new reference: the AD is bound to `owner`
/// in the ledger first, and a second binding of the same AD fails.
pub fn protect_otb_enroll(
    probe_img: &FaceImage,
    probe_lm: &LandmarkSet,
    ad: &AuxiliaryData,
    params: &MorphParams,
    extractor: &dyn FeatureExtractor,
    ledger: &AdLedger,
    owner: &str,
) -> Result<ProtectedTemplate> {
    ad.expect(AdKind::RandomFace)?;
    ledger.bind(ad.ad_id, owner)?;
    protect_otb(probe_img, probe_lm, ad, params, extractor)
}

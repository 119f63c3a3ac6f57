//! Synthetic biometric world: a parametric face renderer with ground-truth
//! landmarks, per-subject identity models, and a random-projection extractor.
//!
//! Identity lives in two places: the subject's landmark geometry and a vector
//! of texture-bump amplitudes anchored to that geometry. Presentations add
//! amplitude noise and landmark jitter. The amplitude scales are calibrated at
//! construction so that, in the normalised embedding space,
//!
//! * class-mean embeddings sit at RMS distance `sigma_between` from their
//!   population centroid, and
//! * presentation embeddings sit at RMS distance `sigma_within` from their
//!   class-mean embedding (landmark jitter included).

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{dissimilarity, Embedding, FeatureExtractor, RandomProjectionExtractor};
use crate::image::FaceImage;
use crate::landmarks::{LandmarkSet, Point};
use crate::seeds::{derive_seed, rng_for};

pub const SCHEMA_ID: &str = "synth26";

/// Canonical landmark layout in unit coordinates.
const CANONICAL: [(f64, f64); 26] = [
    // contour, left temple to right temple
    (0.20, 0.42),
    (0.21, 0.55),
    (0.25, 0.68),
    (0.33, 0.79),
    (0.50, 0.86),
    (0.67, 0.79),
    (0.75, 0.68),
    (0.79, 0.55),
    (0.80, 0.42),
    // brows
    (0.30, 0.35),
    (0.44, 0.34),
    (0.56, 0.34),
    (0.70, 0.35),
    // eye corners
    (0.31, 0.43),
    (0.43, 0.43),
    (0.57, 0.43),
    (0.69, 0.43),
    // nose: bridge, tip, nostrils
    (0.50, 0.45),
    (0.50, 0.58),
    (0.45, 0.61),
    (0.55, 0.61),
    // mouth: left, upper, right, lower
    (0.40, 0.70),
    (0.50, 0.68),
    (0.60, 0.70),
    (0.50, 0.74),
    // forehead
    (0.50, 0.16),
];

const GROUPS: [std::ops::Range<usize>; 6] = [0..9, 9..13, 13..17, 17..21, 21..25, 25..26];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWorldConfig {
    /// Embedding dimension.
    pub dimension: usize,
    pub n_subjects: usize,
    /// RMS distance of presentation embeddings from their class mean.
    pub sigma_within: f64,
    /// RMS distance of class-mean embeddings from the population centroid.
    pub sigma_between: f64,
    pub rng_seed: u64,
    /// Side length of the square face raster in pixels.
    pub image_size: usize,
    /// Per-presentation landmark jitter in pixels (global shift; individual
    /// points get half of it on top).
    pub landmark_jitter: f64,
    /// Between-subject landmark geometry spread in pixels.
    pub geometry_spread: f64,
    /// Number of texture bumps carrying identity.
    pub texture_bumps: usize,
    /// Spread of the extractor's attention window as a fraction of the image
    /// side (horizontal; vertical is 1.2 times larger).
    pub extractor_window: f64,
    /// Appearance scale of the random faces used as auxiliary data, relative
    /// to the enrolled population.
    pub ad_contrast: f64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        Self {
            dimension: 64,
            n_subjects: 2000,
            sigma_within: 0.16,
            sigma_between: 0.26,
            rng_seed: 2022,
            image_size: 48,
            landmark_jitter: 0.6,
            geometry_spread: 1.5,
            texture_bumps: 32,
            extractor_window: 0.22,
            ad_contrast: 3.0,
        }
    }
}

impl SyntheticWorldConfig {
    /// Returns every violated constraint, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dimension == 0 {
            out.push("world.dimension must be positive".to_string());
        }
        if self.n_subjects < 2 {
            out.push("world.n_subjects must be at least 2".to_string());
        }
        if !(self.sigma_within > 0.0 && self.sigma_within.is_finite()) {
            out.push("world.sigma_within must be positive".to_string());
        }
        if !(self.sigma_between > self.sigma_within && self.sigma_between < 1.0) {
            out.push("world.sigma_between must exceed sigma_within and be below 1".to_string());
        }
        if self.image_size < 16 {
            out.push("world.image_size must be at least 16".to_string());
        }
        if !(self.landmark_jitter >= 0.0 && self.landmark_jitter.is_finite()) {
            out.push("world.landmark_jitter must be non-negative".to_string());
        }
        if !(self.geometry_spread >= 0.0 && self.geometry_spread.is_finite()) {
            out.push("world.geometry_spread must be non-negative".to_string());
        }
        if self.texture_bumps == 0 {
            out.push("world.texture_bumps must be positive".to_string());
        }
        if !(self.extractor_window > 0.0 && self.extractor_window.is_finite()) {
            out.push("world.extractor_window must be positive".to_string());
        }
        if !(self.ad_contrast > 0.0 && self.ad_contrast.is_finite()) {
            out.push("world.ad_contrast must be positive".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Presentation {
    pub image: FaceImage,
    pub landmarks: LandmarkSet,
}

#[derive(Debug, Clone)]
struct Bump {
    anchors: [usize; 3],
    weights: [f64; 3],
    sigma: f64,
}

/// Draws faces from landmark geometry and bump amplitudes.
#[derive(Debug, Clone)]
pub struct FaceRenderer {
    size: usize,
    bumps: Vec<Bump>,
}

fn seg_dist2(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * vx + (p.y - a.y) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (p.x - a.x - t * vx, p.y - a.y - t * vy);
    dx * dx + dy * dy
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

impl FaceRenderer {
    pub fn new(size: usize, n_bumps: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, "renderer", 0);
        let scale = size as f64 / 48.0;
        let bumps = (0..n_bumps)
            .map(|_| {
                let mut anchors = [0usize; 3];
                for a in anchors.iter_mut() {
                    *a = rng.random_range(0..CANONICAL.len());
                }
                let raw: [f64; 3] = [
                    rng.random_range(0.1..1.0),
                    rng.random_range(0.1..1.0),
                    rng.random_range(0.1..1.0),
                ];
                let total: f64 = raw.iter().sum();
                Bump {
                    anchors,
                    weights: raw.map(|w| w / total),
                    sigma: rng.random_range(1.4..2.6) * scale,
                }
            })
            .collect();
        Self { size, bumps }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_bumps(&self) -> usize {
        self.bumps.len()
    }

    /// Canonical landmarks scaled to the raster.
    pub fn canonical_landmarks(&self) -> LandmarkSet {
        let s = (self.size - 1) as f64;
        LandmarkSet::new(
            SCHEMA_ID,
            CANONICAL
                .iter()
                .map(|&(x, y)| Point::new(x * s, y * s))
                .collect(),
        )
    }

    pub fn render(&self, lm: &LandmarkSet, amplitudes: &[f64]) -> FaceImage {
        let n = self.size;
        let k = n as f64 / 48.0;
        let p = &lm.points;
        let mut img = vec![0.0f64; n * n];

        // background gradient and skin oval
        let cx = (p[0].x + p[8].x) / 2.0;
        let cy = (p[25].y + p[4].y) / 2.0;
        let rx = (p[8].x - p[0].x) / 2.0 * 1.08;
        let ry = (p[4].y - p[25].y) / 2.0;
        let mut mask = vec![0.0f64; n * n];
        for y in 0..n {
            for x in 0..n {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let r = (dx * dx + dy * dy).sqrt();
                let m = 1.0 / (1.0 + (-(1.0 - r) * 10.0).exp());
                mask[y * n + x] = m;
                img[y * n + x] = 0.06 + 0.04 * y as f64 / n as f64 + 0.36 * m;
            }
        }

        // facial features as segments: (a, b, sigma, weight)
        let shrink = |a: Point, b: Point| (lerp(a, b, 0.15), lerp(a, b, 0.85));
        let (le0, le1) = shrink(p[13], p[14]);
        let (re0, re1) = shrink(p[15], p[16]);
        let lip = ((p[24].y - p[22].y).abs() * 0.35).max(0.5 * k);
        let features = [
            (le0, le1, 1.1 * k, -0.22),
            (re0, re1, 1.1 * k, -0.22),
            (p[9], p[10], 0.8 * k, -0.16),
            (p[11], p[12], 0.8 * k, -0.16),
            (p[17], p[18], 0.6 * k, 0.12),
            (p[19], p[19], 0.6 * k, -0.30),
            (p[20], p[20], 0.6 * k, -0.30),
            (p[21], p[23], lip, -0.18),
        ];
        for (a, b, sigma, weight) in features {
            let reach = 3.5 * sigma;
            let (x0, x1, y0, y1) = window(a.x.min(b.x) - reach, a.x.max(b.x) + reach, a.y.min(b.y) - reach, a.y.max(b.y) + reach, n);
            let inv = 1.0 / (2.0 * sigma * sigma);
            for y in y0..y1 {
                for x in x0..x1 {
                    let d2 = seg_dist2(Point::new(x as f64, y as f64), a, b);
                    img[y * n + x] += weight * mask[y * n + x] * (-d2 * inv).exp();
                }
            }
        }

        for (bump, &amp) in self.bumps.iter().zip(amplitudes) {
            if amp == 0.0 {
                continue;
            }
            let c = bump
                .anchors
                .iter()
                .zip(bump.weights)
                .fold(Point::new(0.0, 0.0), |acc, (&i, w)| {
                    Point::new(acc.x + w * p[i].x, acc.y + w * p[i].y)
                });
            let reach = 3.5 * bump.sigma;
            let (x0, x1, y0, y1) = window(c.x - reach, c.x + reach, c.y - reach, c.y + reach, n);
            let inv = 1.0 / (2.0 * bump.sigma * bump.sigma);
            for y in y0..y1 {
                for x in x0..x1 {
                    let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
                    img[y * n + x] += amp * (-(dx * dx + dy * dy) * inv).exp();
                }
            }
        }

        img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        FaceImage::from_raw_unchecked(n, n, 1, img)
    }

    /// Dark raster with a bright dot on every landmark, for geometric checks.
    pub fn render_markers(&self, lm: &LandmarkSet) -> FaceImage {
        let n = self.size;
        let sigma = 0.8 * n as f64 / 48.0;
        FaceImage::from_fn(n, n, 1, |x, y, _| {
            let peak = lm
                .points
                .iter()
                .map(|p| {
                    let (dx, dy) = (x as f64 - p.x, y as f64 - p.y);
                    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
                })
                .fold(0.0, f64::max);
            0.05 + 0.9 * peak
        })
        .expect("marker raster is valid")
    }
}

fn window(x0: f64, x1: f64, y0: f64, y1: f64, n: usize) -> (usize, usize, usize, usize) {
    let lo = |v: f64| v.floor().max(0.0).min(n as f64) as usize;
    let hi = |v: f64| (v.ceil() + 1.0).max(0.0).min(n as f64) as usize;
    (lo(x0), hi(x1), lo(y0), hi(y1))
}

/// Intensity-weighted centroid of the bright blob within `radius` of each
/// `approx` point, counting only values above `level`.
pub fn measure_markers(img: &FaceImage, approx: &LandmarkSet, radius: f64, level: f64) -> LandmarkSet {
    let (w, h) = (img.width(), img.height());
    let points = approx
        .points
        .iter()
        .map(|p| {
            let (x0, x1, y0, y1) = (
                (p.x - radius).floor().max(0.0) as usize,
                ((p.x + radius).ceil() as usize).min(w - 1),
                (p.y - radius).floor().max(0.0) as usize,
                ((p.y + radius).ceil() as usize).min(h - 1),
            );
            let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if (x as f64 - p.x).hypot(y as f64 - p.y) > radius {
                        continue;
                    }
                    let wgt = (img.get(x, y, 0) - level).max(0.0);
                    sw += wgt;
                    sx += wgt * x as f64;
                    sy += wgt * y as f64;
                }
            }
            if sw > 0.0 {
                Point::new(sx / sw, sy / sw)
            } else {
                Point::new(f64::NAN, f64::NAN)
            }
        })
        .collect();
    LandmarkSet::new(approx.schema_id.clone(), points)
}

/// Identity model of one synthetic subject.
#[derive(Debug, Clone)]
pub struct SubjectModel {
    pub id: u64,
    pub landmarks: LandmarkSet,
    pub appearance: Vec<f64>,
    pub class_mean: Embedding,
    within_amp: f64,
    jitter: f64,
    renderer: Arc<FaceRenderer>,
}

impl SubjectModel {
    /// The same subject with all presentation noise switched off.
    pub fn without_noise(&self) -> Self {
        Self {
            within_amp: 0.0,
            jitter: 0.0,
            ..self.clone()
        }
    }

    pub fn with_jitter(&self, jitter: f64) -> Self {
        Self {
            jitter,
            ..self.clone()
        }
    }

    pub fn canonical_image(&self) -> FaceImage {
        self.renderer.render(&self.landmarks, &self.appearance)
    }
}

/// Renders one presentation of `subject`: amplitude noise plus landmark jitter.
pub fn sample_presentation<R: Rng + ?Sized>(subject: &SubjectModel, rng: &mut R) -> Presentation {
    let noise: Vec<f64> = (0..subject.appearance.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let shift: (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
    let local: Vec<(f64, f64)> = (0..subject.landmarks.len())
        .map(|_| (StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    let amplitudes: Vec<f64> = subject
        .appearance
        .iter()
        .zip(&noise)
        .map(|(m, z)| m + subject.within_amp * z)
        .collect();
    let landmarks = jitter_landmarks(
        &subject.landmarks,
        subject.jitter,
        shift,
        &local,
        subject.renderer.size(),
    );
    Presentation {
        image: subject.renderer.render(&landmarks, &amplitudes),
        landmarks,
    }
}

fn jitter_landmarks(
    base: &LandmarkSet,
    jitter: f64,
    shift: (f64, f64),
    local: &[(f64, f64)],
    size: usize,
) -> LandmarkSet {
    if jitter == 0.0 {
        return base.clone();
    }
    let max = (size - 1) as f64;
    LandmarkSet::new(
        base.schema_id.clone(),
        base.points
            .iter()
            .zip(local)
            .map(|(p, l)| {
                Point::new(
                    (p.x + jitter * (shift.0 + 0.5 * l.0)).clamp(0.0, max),
                    (p.y + jitter * (shift.1 + 0.5 * l.1)).clamp(0.0, max),
                )
            })
            .collect(),
    )
}

/// Raw (unscaled) identity draw: geometry and unit-variance amplitudes.
struct IdentityDraw {
    landmarks: LandmarkSet,
    unit_appearance: Vec<f64>,
}

fn draw_identity(renderer: &FaceRenderer, spread: f64, rng: &mut ChaCha8Rng) -> IdentityDraw {
    let base = renderer.canonical_landmarks();
    let max = (renderer.size() - 1) as f64;
    let mut points = base.points.clone();
    for group in GROUPS.iter() {
        let gx: f64 = StandardNormal.sample(rng);
        let gy: f64 = StandardNormal.sample(rng);
        for i in group.clone() {
            let lx: f64 = StandardNormal.sample(rng);
            let ly: f64 = StandardNormal.sample(rng);
            points[i].x = (points[i].x + spread * (gx + 0.5 * lx)).clamp(0.0, max);
            points[i].y = (points[i].y + spread * (gy + 0.5 * ly)).clamp(0.0, max);
        }
    }
    let unit_appearance = (0..renderer.n_bumps())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    IdentityDraw {
        landmarks: LandmarkSet::new(SCHEMA_ID, points),
        unit_appearance,
    }
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

fn centroid_rms(embeddings: &[Embedding]) -> f64 {
    let d = embeddings[0].dimension();
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= embeddings.len() as f64);
    let centre = Embedding::raw(mean);
    let ss: f64 = embeddings
        .iter()
        .map(|e| dissimilarity(e, &centre).expect("same dimension").0.powi(2))
        .sum();
    (ss / embeddings.len() as f64).sqrt()
}

/// Solves `f(amp) = target` for an RMS spread that grows like
/// `sqrt(f(0)^2 + c * amp^2)`.
fn calibrate(target: f64, what: &str, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let floor = f(0.0)?;
    if floor >= target * 0.98 {
        return Err(Error::Config(format!(
            "{what}: geometry alone already gives spread {floor:.4} >= target {target:.4}"
        )));
    }
    let mut amp = 0.1;
    for _ in 0..16 {
        let got = f(amp)?;
        if (got - target).abs() <= 1e-3 * target {
            return Ok(amp);
        }
        let excess = (got * got - floor * floor).max(1e-12);
        amp *= ((target * target - floor * floor) / excess).sqrt();
        if !amp.is_finite() || amp > 10.0 {
            break;
        }
    }
    let got = f(amp)?;
    if amp.is_finite() && (got - target).abs() <= 0.02 * target {
        Ok(amp)
    } else {
        Err(Error::Config(format!(
            "{what}: target spread {target:.4} is not reachable (got {got:.4})"
        )))
    }
}

const PILOT_SUBJECTS: u64 = 64;
const PILOT_WITHIN_SUBJECTS: u64 = 16;
const PILOT_PRESENTATIONS: u64 = 4;

/// Calibrated synthetic population with its feature extractor.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    config: SyntheticWorldConfig,
    renderer: Arc<FaceRenderer>,
    extractor: Arc<RandomProjectionExtractor>,
    between_amp: f64,
    within_amp: f64,
}

impl SyntheticWorld {
    pub fn new(config: SyntheticWorldConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.rng_seed;
        let renderer = Arc::new(FaceRenderer::new(config.image_size, config.texture_bumps, seed));
        let side = (config.image_size - 1) as f64;
        let extractor = Arc::new(RandomProjectionExtractor::focused(
            derive_seed(seed, "extractor", 0),
            config.dimension,
            config.image_size,
            config.image_size,
            1,
            (0.5 * side, 0.52 * side),
            (config.extractor_window * side, 1.2 * config.extractor_window * side),
        )?);

        let pilots: Vec<IdentityDraw> = (0..PILOT_SUBJECTS)
            .map(|i| draw_identity(&renderer, config.geometry_spread, &mut rng_for(seed, "pilot", i)))
            .collect();
        let between_amp = calibrate(config.sigma_between, "sigma_between", |amp| {
            let embs = pilots
                .iter()
                .map(|p| extractor.extract(&renderer.render(&p.landmarks, &scaled(&p.unit_appearance, amp))))
                .collect::<Result<Vec<_>>>()?;
            Ok(centroid_rms(&embs))
        })?;

        struct PilotDraw {
            shift: (f64, f64),
            local: Vec<(f64, f64)>,
            noise: Vec<f64>,
        }
        let within_pilots: Vec<(Vec<f64>, Embedding, Vec<PilotDraw>)> = pilots
            .iter()
            .take(PILOT_WITHIN_SUBJECTS as usize)
            .enumerate()
            .map(|(i, p)| {
                let appearance = scaled(&p.unit_appearance, between_amp);
                let mean = extractor.extract(&renderer.render(&p.landmarks, &appearance))?;
                let mut rng = rng_for(seed, "pilot-presentations", i as u64);
                let draws = (0..PILOT_PRESENTATIONS)
                    .map(|_| PilotDraw {
                        shift: (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)),
                        local: (0..p.landmarks.len())
                            .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                            .collect(),
                        noise: (0..appearance.len())
                            .map(|_| StandardNormal.sample(&mut rng))
                            .collect(),
                    })
                    .collect();
                Ok((appearance, mean, draws))
            })
            .collect::<Result<_>>()?;
        let within_amp = calibrate(config.sigma_within, "sigma_within", |amp| {
            let mut ss = 0.0;
            let mut count = 0.0;
            for ((appearance, mean, draws), pilot) in within_pilots.iter().zip(&pilots) {
                for d in draws {
                    let lm = jitter_landmarks(&pilot.landmarks, config.landmark_jitter, d.shift, &d.local, config.image_size);
                    let amps: Vec<f64> = appearance.iter().zip(&d.noise).map(|(m, z)| m + amp * z).collect();
                    let e = extractor.extract(&renderer.render(&lm, &amps))?;
                    ss += dissimilarity(&e, mean)?.0.powi(2);
                    count += 1.0;
                }
            }
            Ok((ss / count).sqrt())
        })?;

        Ok(Self {
            config,
            renderer,
            extractor,
            between_amp,
            within_amp,
        })
    }

    pub fn config(&self) -> &SyntheticWorldConfig {
        &self.config
    }

    pub fn renderer(&self) -> &Arc<FaceRenderer> {
        &self.renderer
    }

    pub fn extractor(&self) -> &RandomProjectionExtractor {
        &self.extractor
    }

    pub fn extractor_arc(&self) -> Arc<RandomProjectionExtractor> {
        Arc::clone(&self.extractor)
    }

    /// Calibrated per-bump amplitude scales `(between, within)`.
    pub fn amplitude_scales(&self) -> (f64, f64) {
        (self.between_amp, self.within_amp)
    }

    pub fn subject(&self, id: u64) -> Result<SubjectModel> {
        if id >= self.config.n_subjects as u64 {
            return Err(Error::InvalidParameter(format!(
                "subject id {id} out of range (population of {})",
                self.config.n_subjects
            )));
        }
        let draw = draw_identity(
            &self.renderer,
            self.config.geometry_spread,
            &mut rng_for(self.config.rng_seed, "subject", id),
        );
        let appearance = scaled(&draw.unit_appearance, self.between_amp);
        let class_mean = self
            .extractor
            .extract(&self.renderer.render(&draw.landmarks, &appearance))?;
        Ok(SubjectModel {
            id,
            landmarks: draw.landmarks,
            appearance,
            class_mean,
            within_amp: self.within_amp,
            jitter: self.config.landmark_jitter,
            renderer: Arc::clone(&self.renderer),
        })
    }

    /// Random face from the auxiliary-data population. Each `index` gives a
    /// distinct face; uniqueness of use is enforced by the AD ledger.
    pub fn random_face(&self, index: u64) -> Presentation {
        let draw = draw_identity(
            &self.renderer,
            self.config.geometry_spread,
            &mut rng_for(self.config.rng_seed, "random-face", index),
        );
        let appearance = scaled(&draw.unit_appearance, self.between_amp * self.config.ad_contrast);
        Presentation {
            image: self.renderer.render(&draw.landmarks, &appearance),
            landmarks: draw.landmarks,
        }
    }
}

/// Convenience wrapper matching the world's subject lookup.
pub fn synth_subject(world: &SyntheticWorld, subject_id: u64) -> Result<SubjectModel> {
    world.subject(subject_id)
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otb_morph::adversary::AttackTrace;
use otb_morph::delaunay::delaunay_triangulate;
use otb_morph::evaluation::{compute_asr, compute_eer, compute_far_frr, threshold_at_far, OperatingPointName, ScoreSet};
use otb_morph::experiment::{calibrate, run_attack, run_evaluate, run_simulate, ExperimentConfig, Layout};
use otb_morph::features::{dissimilarity, DissimilarityScore};
use otb_morph::image::FaceImage;
use otb_morph::landmarks::{LandmarkSet, Point};
use otb_morph::morph::{morph, MorphParams};
use otb_morph::protocol::{
    enroll, match_template, run_session, AttackerMaterial, Behavior, Channel, ClientState, Decision, MessageType,
    RandomFaceSource, SecureElementState, SessionContext, Ttp,
};
use otb_morph::seeds::rng_for;
use otb_morph::transforms::{AdLedger, Scenario};
use otb_morph::world::{sample_presentation, SyntheticWorld};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

// ---------------------------------------------------------------- geometry

fn random_landmarks(rng: &mut ChaCha8Rng, n: usize, size: f64) -> LandmarkSet {
    let mut points: Vec<Point> = Vec::with_capacity(n);
    while points.len() < n {
        let p = Point::new(rng.random_range(2.0..size - 2.0), rng.random_range(2.0..size - 2.0));
        if points.iter().all(|q| (q.x - p.x).hypot(q.y - p.y) > 0.5) {
            points.push(p);
        }
    }
    LandmarkSet::new("random", points)
}

/// Strictly inside the circumcircle of `abc`, with a relative margin.
fn inside_circumcircle(a: Point, b: Point, c: Point, d: Point) -> bool {
    let det = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let sq = |p: Point| p.x * p.x + p.y * p.y;
    let ux = (sq(a) * (b.y - c.y) + sq(b) * (c.y - a.y) + sq(c) * (a.y - b.y)) / det;
    let uy = (sq(a) * (c.x - b.x) + sq(b) * (a.x - c.x) + sq(c) * (b.x - a.x)) / det;
    let r = (a.x - ux).hypot(a.y - uy);
    (d.x - ux).hypot(d.y - uy) < r * (1.0 - 1e-9)
}

fn hull_area(points: &[Point]) -> f64 {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let cross = |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n)
        .map(|i| hull[i].x * hull[(i + 1) % n].y - hull[(i + 1) % n].x * hull[i].y)
        .sum::<f64>()
        / 2.0
}

fn random_image(rng: &mut ChaCha8Rng, size: usize) -> FaceImage {
    FaceImage::from_fn(size, size, 1, |_, _, _| rng.random::<f64>()).unwrap()
}

fn criterion_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let size = 64usize;
    let mut triangles = 0;
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n = rng.random_range(3..70);
        let lm = random_landmarks(&mut rng, n, size as f64);
        let tri = delaunay_triangulate(&lm).map_err(|e| format!("set {trial}: {e}"))?;
        let p = &lm.points;
        for t in &tri.triangles {
            for (i, &d) in p.iter().enumerate() {
                if t.contains(&i) {
                    continue;
                }
                check(
                    !inside_circumcircle(p[t[0]], p[t[1]], p[t[2]], d),
                    format!("set {trial}: point {i} inside circumcircle of {t:?}"),
                )?;
            }
        }
        let area: f64 = tri
            .triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (p[t[0]], p[t[1]], p[t[2]]);
                ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs() / 2.0
            })
            .sum();
        check(
            (area - hull_area(p)).abs() < 1e-6 * hull_area(p).max(1.0),
            format!("set {trial}: triangles do not tile the hull"),
        )?;
        triangles += tri.triangles.len();

        let (la, lb) = (lm, random_landmarks(&mut rng, n, size as f64));
        let (a, b) = (random_image(&mut rng, size), random_image(&mut rng, size));
        let m0 = morph(&a, &la, &b, &lb, &MorphParams::with_alpha(0.0).unwrap()).map_err(|e| e.to_string())?;
        let m1 = morph(&a, &la, &b, &lb, &MorphParams::with_alpha(1.0).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max(m0.max_abs_diff(&a).unwrap()).max(m1.max_abs_diff(&b).unwrap());
    }
    check(worst <= 1e-6, format!("endpoint identity error {worst:e}"))?;
    Ok(format!(
        "100 landmark sets, {triangles} triangles empty-circumcircle clean, endpoint error {worst:.1e}"
    ))
}

// ----------------------------------------------------------------- metrics

/// EER by direct counting over one threshold per constant-rate interval.
fn brute_eer(s: &ScoreSet) -> (f64, f64) {
    let mut reps: Vec<f64> = s.genuine.iter().chain(&s.impostor).copied().collect();
    reps.sort_by(f64::total_cmp);
    reps.dedup();
    reps.push(reps[reps.len() - 1] + 1.0);
    let mut best = (f64::INFINITY, 0.0);
    for t in reps {
        let far = s.impostor.iter().filter(|&&x| x < t).count() as f64 / s.impostor.len() as f64;
        let frr = s.genuine.iter().filter(|&&x| x >= t).count() as f64 / s.genuine.len() as f64;
        if (far - frr).abs() < best.0 {
            best = ((far - frr).abs(), (far + frr) / 2.0);
        }
    }
    best
}

/// Largest candidate threshold whose FAR does not exceed the target.
fn brute_threshold(s: &ScoreSet, target: f64) -> f64 {
    let max = s.impostor.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = s.impostor.len() as f64;
    s.impostor
        .iter()
        .copied()
        .chain(std::iter::once(max.next_up()))
        .filter(|&t| s.impostor.iter().filter(|&&x| x < t).count() as f64 / n <= target)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let ng = rng.random_range(1..=250);
        let ni = rng.random_range(1..=250);
        // coarse grid on some sets so ties occur
        let grid = if k % 2 == 0 { 1000.0 } else { 1e9 };
        let mut draw = |mu: f64| ((mu + 0.2 * rng.random::<f64>() - 0.1).max(0.0) * grid).round() / grid;
        let genuine: Vec<f64> = (0..ng).map(|_| draw(0.3)).collect();
        let impostor: Vec<f64> = (0..ni).map(|_| draw(0.38)).collect();
        let s = ScoreSet::new(Scenario::Unprotected, "oracle", genuine, impostor);
        let (eer, t) = compute_eer(&s).map_err(|e| e.to_string())?;
        let (gap, oracle) = brute_eer(&s);
        let (far, frr) = compute_far_frr(&s, t).map_err(|e| e.to_string())?;
        worst = worst.max((eer - oracle).abs()).max(((far - frr).abs() - gap).abs());
        for target in [0.1, 0.01, 0.001, 0.5] {
            let op = threshold_at_far(&s, target).map_err(|e| e.to_string())?;
            worst = worst.max((op.threshold - brute_threshold(&s, target)).abs());
        }
    }
    check(worst <= 1e-12, format!("max deviation from brute force {worst:e}"))?;
    Ok(format!("50 score sets, max deviation from brute force {worst:e}"))
}

// ------------------------------------------------------------ revocability

fn criterion_revocability(cfg: &ExperimentConfig, world: &Arc<SyntheticWorld>) -> Outcome {
    let scores = calibrate(cfg, world, Scenario::OtbMorph).map_err(|e| e.to_string())?;
    let (_, threshold) = compute_eer(&scores).map_err(|e| e.to_string())?;
    let params = cfg.params(Scenario::OtbMorph);
    let source: Arc<dyn RandomFaceSource> = world.clone();
    let mut ttp = Ttp::new(source, Arc::new(AdLedger::new()), params, rng_for(303, "ttp", 0));
    let (mut same_below, mut cross_above) = (0, 0);
    let trials = 500;
    let first = cfg.calibration.subjects as u64;
    for t in 0..trials {
        let subject = world.subject(first + t).map_err(|e| e.to_string())?;
        let mut rng = rng_for(303, "revocability", t);
        let (p1, p2) = (sample_presentation(&subject, &mut rng), sample_presentation(&subject, &mut rng));
        let ads = ttp.issue("trial", 2).map_err(|e| e.to_string())?;
        let tmpl = |p, i: usize| {
            params
                .client_template(p, Some(&ads[i].ad), world.extractor())
                .map(|t| t.embedding)
                .map_err(|e| e.to_string())
        };
        let reference = tmpl(&p1, 0)?;
        let same = dissimilarity(&reference, &tmpl(&p2, 0)?).unwrap().0;
        let cross = dissimilarity(&reference, &tmpl(&p2, 1)?).unwrap().0;
        same_below += (same < threshold) as usize;
        cross_above += (cross >= threshold) as usize;
    }
    let (same_rate, cross_rate) = (same_below as f64 / trials as f64, cross_above as f64 / trials as f64);
    let detail = format!(
        "threshold {threshold:.4}: same-AD below {:.1}%, cross-AD above {:.1}% of {trials}",
        100.0 * same_rate,
        100.0 * cross_rate
    );
    check(same_rate >= 0.95 && cross_rate >= 0.95, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- protocol

fn criterion_protocol(cfg: &ExperimentConfig, world: &Arc<SyntheticWorld>) -> Outcome {
    let params = cfg.params(Scenario::OtbMorph);
    let threshold = compute_eer(&calibrate(cfg, world, Scenario::OtbMorph).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        .1;
    let ledger = Arc::new(AdLedger::new());
    let source: Arc<dyn RandomFaceSource> = world.clone();
    let mut ttp = Ttp::new(source, ledger.clone(), params, rng_for(404, "ttp", 0));
    let ctx = SessionContext {
        params: &params,
        extractor: world.extractor(),
        ledger: &ledger,
    };
    let (clients, per_client) = (50u64, 20u64);
    let mut matched_accepts = HashSet::new();
    let (mut sessions, mut accepts, mut rotation_mismatch, mut untouched_violations, mut rejects) = (0, 0, 0, 0, 0);
    let (mut replays, mut replay_rejects) = (0, 0);
    let first = cfg.calibration.subjects as u64;
    for c in 0..clients {
        let id = format!("client-{c}");
        let subject = world.subject(first + c).map_err(|e| e.to_string())?;
        let mut rng = rng_for(404, "sessions", c);
        let pool = SecureElementState::with_pool(ttp.issue(&id, 32).map_err(|e| e.to_string())?);
        let enrollment = sample_presentation(&subject, &mut rng);
        let (record, se) = enroll(&id, &enrollment, &pool, &params, world.extractor(), &ledger, DissimilarityScore(threshold))
            .map_err(|e| e.to_string())?;
        let mut state = ClientState {
            client_id: id.clone(),
            subject,
            se,
            record,
        };
        let attacker = AttackerMaterial {
            subject: world.subject(first + clients + c).map_err(|e| e.to_string())?,
            ad: Some(ttp.issue("attacker", 1).map_err(|e| e.to_string())?.remove(0).ad),
        };
        let mut channel = Channel::tapped();
        for j in 0..per_client {
            let behavior = if rng.random::<f64>() < 0.3 { Behavior::Attacker } else { Behavior::Genuine };
            let session_id = c * per_client + j + 1;
            let (t, next) = run_session(&ctx, &state, session_id, behavior, Some(&attacker), &mut channel, &mut rng);
            sessions += 1;
            if let Some(e) = &t.error {
                return Err(format!("session {session_id} failed: {e}"));
            }
            let accepted = t.decision == Some(Decision::Accept);
            rotation_mismatch += (t.rotated != accepted) as usize;
            if accepted {
                accepts += 1;
                let ad = t.matched_ad.or(state.se.current_ad.as_ref().map(|a| a.ad_id));
                if !matched_accepts.insert(ad) {
                    return Err(format!("AD {ad:?} matched in two accepted sessions"));
                }
            } else {
                rejects += 1;
                untouched_violations += (next.record != state.record || next.se != state.se) as usize;
            }
            state = next;
        }
        let current = state.se.current_ad.as_ref().map(|a| a.ad_id);
        for tap in channel.captured() {
            if tap.kind == MessageType::TemplateSubmission && tap.template.ad_id != current {
                replays += 1;
                let o = match_template(u64::MAX, tap.template.clone(), &state.record).map_err(|e| e.to_string())?;
                replay_rejects += (o.decision == Decision::Reject) as usize;
            }
        }
    }
    let replay_rate = replay_rejects as f64 / replays.max(1) as f64;
    let detail = format!(
        "{sessions} sessions ({accepts} accepted, {rejects} rejected), AD reuse 0, rotation mismatches {rotation_mismatch}, \
         state changes on reject {untouched_violations}, stale replays rejected {replay_rejects}/{replays} ({:.1}%), ledger bound {}",
        100.0 * replay_rate,
        ledger.bound_count()
    );
    check(
        sessions >= 1000 && rotation_mismatch == 0 && untouched_violations == 0 && replays > 0 && replay_rate >= 0.95,
        detail.clone(),
    )?;
    Ok(detail)
}

// ----------------------------------------------------------- full pipeline

struct PipelineRun {
    layout: Layout,
    traces: BTreeMap<Scenario, Vec<AttackTrace>>,
    scores: BTreeMap<Scenario, ScoreSet>,
    report: otb_morph::evaluation::EvalReport,
}

fn run_pipeline(cfg: &ExperimentConfig, root: &Path) -> Result<PipelineRun, String> {
    let layout = Layout::new(root);
    let world = cfg.build_world().map_err(|e| e.to_string())?;
    let summary = run_simulate(cfg, &world, &layout).map_err(|e| e.to_string())?;
    check(summary.errors() == 0, "simulate reported session errors")?;
    let traces = run_attack(cfg, &world, &layout).map_err(|e| e.to_string())?;
    let outcome = run_evaluate(cfg, &layout).map_err(|e| e.to_string())?;
    check(outcome.missing.is_empty(), format!("missing inputs {:?}", outcome.missing))?;
    let mut scores = BTreeMap::new();
    for &s in &cfg.scenarios {
        let path = layout.scores(s);
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        scores.insert(s, ScoreSet::from_csv(&text, s, "synthetic", &path).map_err(|e| e.to_string())?);
    }
    Ok(PipelineRun {
        layout,
        traces,
        scores,
        report: outcome.report,
    })
}

fn criterion_attack_ordering(run: &PipelineRun) -> Outcome {
    let mut asr = BTreeMap::new();
    for (s, traces) in &run.traces {
        check(traces.len() >= 200, format!("scenario {s}: only {} traces", traces.len()))?;
        let (_, t) = compute_eer(&run.scores[s]).map_err(|e| e.to_string())?;
        asr.insert(*s, compute_asr(traces, t).map_err(|e| e.to_string())?);
    }
    let get = |s: Scenario| asr[&s];
    let (i, ii, iii, iv) = (
        get(Scenario::Unprotected),
        get(Scenario::GaussianNoise),
        get(Scenario::Imploding),
        get(Scenario::OtbMorph),
    );
    let detail = format!(
        "ASR at EER threshold: i {:.1}%, ii {:.1}%, iii {:.1}%, iv {:.1}% over {} seeds",
        100.0 * i,
        100.0 * ii,
        100.0 * iii,
        100.0 * iv,
        run.traces[&Scenario::Unprotected].len()
    );
    check(iv < i && iv < ii && iv < iii && i > 0.5 && i - iv >= 0.2, detail.clone())?;
    Ok(detail)
}

fn criterion_traces(cfg: &ExperimentConfig, run: &PipelineRun) -> Outcome {
    let expected_queries = (cfg.attack.iterations * cfg.attack.proposals_per_iteration) as u64;
    let mut n = 0;
    for (s, traces) in &run.traces {
        for (k, t) in traces.iter().enumerate() {
            n += 1;
            let scores = t.best_scores();
            check(scores.len() == cfg.attack.iterations + 1, format!("scenario {s} seed {}: length {}", t.seed, scores.len()))?;
            check(
                scores.windows(2).all(|w| w[1] <= w[0]),
                format!("scenario {s} seed {}: best score increased", t.seed),
            )?;
            check(
                t.queries == expected_queries && !t.truncated,
                format!("scenario {s} seed {}: {} queries, expected {expected_queries}", t.seed, t.queries),
            )?;
            check(
                t.points.iter().enumerate().all(|(k, p)| p.iteration == k),
                format!("scenario {s} seed {}: iteration indices", t.seed),
            )?;
            let on_disk = AttackTrace::read(&run.layout.trace(*s, k))
                .map_err(|e| e.to_string())?;
            check(on_disk == *t, format!("scenario {s} seed {}: stored trace differs", t.seed))?;
        }
    }
    Ok(format!("{n} traces monotone, each with exactly {expected_queries} billed queries"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_determinism(a: &PipelineRun, b: &PipelineRun) -> Outcome {
    let (ta, tb) = (tree(&a.layout.root), tree(&b.layout.root));
    check(ta.keys().eq(tb.keys()), "output trees list different files")?;
    let differing: Vec<_> = ta.iter().filter(|(k, v)| tb[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    check(differing.is_empty(), format!("differing files: {differing:?}"))?;
    check(a.report == b.report, "reports differ")?;
    let bytes: usize = ta.values().map(Vec::len).sum();
    Ok(format!("{} files ({bytes} bytes) bit-identical across two runs", ta.len()))
}

fn criterion_eer_ordering(run: &PipelineRun) -> Outcome {
    let eer = |s: Scenario| {
        let direct = compute_eer(&run.scores[&s]).map(|e| e.0).map_err(|e| e.to_string())?;
        let reported = run.report.value(s, "eer", OperatingPointName::Eer);
        check(reported == Some(direct), format!("scenario {s}: report EER {reported:?} != {direct}"))?;
        Ok::<f64, String>(direct)
    };
    let (i, ii, iii, iv) = (
        eer(Scenario::Unprotected)?,
        eer(Scenario::GaussianNoise)?,
        eer(Scenario::Imploding)?,
        eer(Scenario::OtbMorph)?,
    );
    let detail = format!(
        "EER iv {:.2}% <= i {:.2}% <= ii {:.2}% <= iii {:.2}%",
        100.0 * iv,
        100.0 * i,
        100.0 * ii,
        100.0 * iii
    );
    check(iv <= i && i <= ii && ii <= iii, detail.clone())?;
    Ok(detail)
}

fn report(number: u32, name: &str, started: Instant, outcome: &Outcome, failures: &mut u32) {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => println!("PASS criterion {number} ({name}): {detail} [{secs:.1}s]"),
        Err(detail) => {
            *failures += 1;
            println!("FAIL criterion {number} ({name}): {detail} [{secs:.1}s]");
        }
    }
}

fn main() {
    let mut failures = 0;
    let cfg = ExperimentConfig::default();
    let world = cfg.build_world().expect("default world builds");

    let t = Instant::now();
    report(1, "geometry oracles", t, &criterion_geometry(), &mut failures);
    let t = Instant::now();
    report(2, "metric oracles", t, &criterion_metrics(), &mut failures);
    let t = Instant::now();
    report(3, "revocability", t, &criterion_revocability(&cfg, &world), &mut failures);
    let t = Instant::now();
    report(4, "protocol state", t, &criterion_protocol(&cfg, &world), &mut failures);

    let dir = tempfile::tempdir().expect("temp dir");
    let t = Instant::now();
    let first = run_pipeline(&cfg, &dir.path().join("run-a"));
    let pipeline_secs = t.elapsed().as_secs_f64();
    match &first {
        Ok(run) => {
            report(5, "attack ordering", t, &criterion_attack_ordering(run), &mut failures);
            let t = Instant::now();
            report(6, "trace monotonicity and budget", t, &criterion_traces(&cfg, run), &mut failures);
        }
        Err(e) => {
            report(5, "attack ordering", t, &Err(format!("pipeline failed: {e}")), &mut failures);
            report(6, "trace monotonicity and budget", t, &Err(format!("pipeline failed: {e}")), &mut failures);
        }
    }
    let t = Instant::now();
    let second = run_pipeline(&cfg, &dir.path().join("run-b"));
    let outcome = match (&first, &second) {
        (Ok(a), Ok(b)) => criterion_determinism(a, b),
        (Err(e), _) | (_, Err(e)) => Err(format!("pipeline failed: {e}")),
    };
    report(7, "determinism", t, &outcome, &mut failures);
    let t = Instant::now();
    let outcome = match &first {
        Ok(run) => criterion_eer_ordering(run),
        Err(e) => Err(format!("pipeline failed: {e}")),
    };
    report(8, "performance ordering", t, &outcome, &mut failures);
    println!("pipeline run (simulate + attack + evaluate) took {pipeline_secs:.1}s");

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

//! Landmark-based morphing: landmark averaging, piecewise-affine warping over
//! a Delaunay triangulation of the averaged shape, and linear blending.

use serde::{Deserialize, Serialize};

use crate::delaunay::{delaunay_triangulate, orient, Triangulation};
use crate::error::{Error, Result};
use crate::image::{snap_unit, FaceImage};
use crate::landmarks::{LandmarkSet, Point};

/// How pixels not covered by any usable triangle are filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BorderPolicy {
    /// Copy the input pixel at the same position.
    SourcePixel,
    /// Fill with a constant intensity.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphParams {
    pub alpha: f64,
    pub border_policy: BorderPolicy,
}

impl Default for MorphParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            border_policy: BorderPolicy::SourcePixel,
        }
    }
}

impl MorphParams {
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        let p = Self {
            alpha,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if let BorderPolicy::Constant(v) = self.border_policy {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "border fill {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")))
    }
}

/// Interpolation weights `(w_first, w_second)` for `alpha`.
///
/// The larger weight is the one computed from the caller's value, the smaller
/// one is its exact complement. This makes `(a, b, alpha)` and
/// `(b, a, 1 - alpha)` produce bit-identical weights.
pub fn blend_weights(alpha: f64) -> (f64, f64) {
    if alpha >= 0.5 {
        (1.0 - alpha, alpha)
    } else {
        let first = 1.0 - alpha;
        (first, 1.0 - first)
    }
}

pub fn average_landmarks(a: &LandmarkSet, b: &LandmarkSet, alpha: f64) -> Result<LandmarkSet> {
    a.ensure_compatible(b)?;
    check_alpha(alpha)?;
    let (wa, wb) = blend_weights(alpha);
    let points = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| Point::new(wa * p.x + wb * q.x, wa * p.y + wb * q.y))
        .collect();
    Ok(LandmarkSet::new(a.schema_id.clone(), points))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpDiagnostics {
    /// Triangles skipped because the source or destination triangle has no area.
    pub degenerate_triangles: usize,
    /// Pixels filled by the border policy.
    pub uncovered_pixels: usize,
    /// Output values that left `[0, 1]` by more than rounding noise.
    pub clamp_events: usize,
}

impl std::ops::AddAssign for WarpDiagnostics {
    fn add_assign(&mut self, rhs: Self) {
        self.degenerate_triangles += rhs.degenerate_triangles;
        self.uncovered_pixels += rhs.uncovered_pixels;
        self.clamp_events += rhs.clamp_events;
    }
}

const INSIDE_EPS: f64 = 1e-9;

/// Warps `img` so that the `src` landmarks move onto `dst`. `tri` indexes
/// both sets and is expected to be built over `dst`.
pub fn warp_piecewise_affine(
    img: &FaceImage,
    src: &LandmarkSet,
    dst: &LandmarkSet,
    tri: &Triangulation,
    border: BorderPolicy,
) -> Result<(FaceImage, WarpDiagnostics)> {
    src.ensure_compatible(dst)?;
    if let Some(bad) = tri
        .triangles
        .iter()
        .flatten()
        .find(|&&i| i >= dst.points.len())
    {
        return Err(Error::IncompatibleLandmarks(format!(
            "triangulation references vertex {bad} but the set has {} points",
            dst.points.len()
        )));
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = vec![0.0; w * h * ch];
    let mut covered = vec![false; w * h];
    let mut diag = WarpDiagnostics::default();
    let mut px = [0.0f64; 3];

    for t in &tri.triangles {
        let [d0, d1, d2] = [dst.points[t[0]], dst.points[t[1]], dst.points[t[2]]];
        let [s0, s1, s2] = [src.points[t[0]], src.points[t[1]], src.points[t[2]]];
        let area = orient(d0, d1, d2);
        if area.abs() <= 1e-12 || orient(s0, s1, s2).abs() <= 1e-12 {
            diag.degenerate_triangles += 1;
            continue;
        }
        let min_x = d0.x.min(d1.x).min(d2.x).ceil().max(0.0) as usize;
        let min_y = d0.y.min(d1.y).min(d2.y).ceil().max(0.0) as usize;
        let max_x = d0.x.max(d1.x).max(d2.x).floor();
        let max_y = d0.y.max(d1.y).max(d2.y).floor();
        if max_x < 0.0 || max_y < 0.0 {
            continue;
        }
        let max_x = (max_x as usize).min(w - 1);
        let max_y = (max_y as usize).min(h - 1);
        for y in min_y..=max_y {
            for x in min_x..=max_x {
                let idx = y * w + x;
                if covered[idx] {
                    continue;
                }
                let p = Point::new(x as f64, y as f64);
                let b0 = orient(d1, d2, p) / area;
                let b1 = orient(d2, d0, p) / area;
                let b2 = orient(d0, d1, p) / area;
                if b0 < -INSIDE_EPS || b1 < -INSIDE_EPS || b2 < -INSIDE_EPS {
                    continue;
                }
                covered[idx] = true;
                let sx = b0 * s0.x + b1 * s1.x + b2 * s2.x;
                let sy = b0 * s0.y + b1 * s1.y + b2 * s2.y;
                img.sample_bilinear(sx, sy, &mut px);
                for c in 0..ch {
                    let (v, clamped) = snap_unit(px[c]);
                    diag.clamp_events += usize::from(clamped);
                    out[idx * ch + c] = v;
                }
            }
        }
    }

    for (idx, done) in covered.iter().enumerate() {
        if *done {
            continue;
        }
        diag.uncovered_pixels += 1;
        for c in 0..ch {
            out[idx * ch + c] = match border {
                BorderPolicy::SourcePixel => img.data()[idx * ch + c],
                BorderPolicy::Constant(v) => v,
            };
        }
    }
    Ok((FaceImage::from_raw_unchecked(w, h, ch, out), diag))
}

pub fn blend(a: &FaceImage, b: &FaceImage, alpha: f64) -> Result<FaceImage> {
    Ok(blend_counting(a, b, alpha)?.0)
}

fn blend_counting(a: &FaceImage, b: &FaceImage, alpha: f64) -> Result<(FaceImage, usize)> {
    if !a.same_shape(b) {
        return Err(Error::IncompatibleImages(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    check_alpha(alpha)?;
    let (wa, wb) = blend_weights(alpha);
    let mut clamps = 0;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let (v, clamped) = snap_unit(wa * x + wb * y);
            clamps += usize::from(clamped);
            v
        })
        .collect();
    Ok((
        FaceImage::from_raw_unchecked(a.width(), a.height(), a.channels(), data),
        clamps,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphOutput {
    pub image: FaceImage,
    /// Averaged landmarks including the appended border points.
    pub landmarks: LandmarkSet,
    pub triangulation: Triangulation,
    pub diagnostics: WarpDiagnostics,
}

pub fn morph(
    a: &FaceImage,
    la: &LandmarkSet,
    b: &FaceImage,
    lb: &LandmarkSet,
    params: &MorphParams,
) -> Result<FaceImage> {
    Ok(morph_detailed(a, la, b, lb, params)?.image)
}

pub fn morph_detailed(
    a: &FaceImage,
    la: &LandmarkSet,
    b: &FaceImage,
    lb: &LandmarkSet,
    params: &MorphParams,
) -> Result<MorphOutput> {
    params.validate()?;
    la.ensure_compatible(lb)?;
    if !a.same_shape(b) {
        return Err(Error::IncompatibleImages(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let (w, h) = (a.width(), a.height());
    for (name, lm) in [("first", la), ("second", lb)] {
        if !lm.within_bounds(w, h) {
            return Err(Error::IncompatibleLandmarks(format!(
                "{name} landmark set has points outside the {w}x{h} frame"
            )));
        }
    }
    let la = la.with_border(w, h);
    let lb = lb.with_border(w, h);
    let mid = average_landmarks(&la, &lb, params.alpha)?;
    let tri = delaunay_triangulate(&mid)?;
    let (wa, da) = warp_piecewise_affine(a, &la, &mid, &tri, params.border_policy)?;
    let (wb, db) = warp_piecewise_affine(b, &lb, &mid, &tri, params.border_policy)?;
    let (image, clamps) = blend_counting(&wa, &wb, params.alpha)?;
    let mut diagnostics = da;
    diagnostics += db;
    diagnostics.clamp_events += clamps;
    Ok(MorphOutput {
        image,
        landmarks: mid,
        triangulation: tri,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet::new("t", v.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    #[test]
    fn average_endpoints_and_midpoint() {
        let a = pts(&[(0.0, 0.0), (10.0, 0.0)]);
        let b = pts(&[(4.0, 0.0), (14.0, 0.0)]);
        assert_eq!(average_landmarks(&a, &b, 0.0).unwrap(), a);
        assert_eq!(average_landmarks(&a, &b, 1.0).unwrap(), b);
        assert_eq!(
            average_landmarks(&a, &b, 0.5).unwrap().points,
            vec![Point::new(2.0, 0.0), Point::new(12.0, 0.0)]
        );
        let c = LandmarkSet::new("other", a.points.clone());
        assert!(matches!(
            average_landmarks(&a, &c, 0.5),
            Err(Error::IncompatibleLandmarks(_))
        ));
        assert!(average_landmarks(&a, &b, 1.5).is_err());
    }

    #[test]
    fn weights_are_swap_symmetric() {
        for alpha in [0.0, 0.1, 0.2, 0.3, 1.0 / 3.0, 0.5, 0.7, 0.9, 0.999, 1.0] {
            let (a, b) = blend_weights(alpha);
            let (c, d) = blend_weights(1.0 - alpha);
            assert_eq!((a, b), (d, c), "alpha={alpha}");
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn blend_examples() {
        let a = FaceImage::filled(3, 2, 1, 0.4);
        let b = FaceImage::filled(3, 2, 1, 0.8);
        assert_eq!(blend(&a, &b, 0.0).unwrap(), a);
        assert_eq!(blend(&a, &b, 1.0).unwrap(), b);
        let mid = blend(&a, &b, 0.5).unwrap();
        assert!(mid.data().iter().all(|v| (v - 0.6).abs() < 1e-15));
        let c = FaceImage::filled(3, 2, 3, 0.8);
        assert!(matches!(
            blend(&a, &c, 0.5),
            Err(Error::IncompatibleImages(_))
        ));
    }

    #[test]
    fn degenerate_source_triangle_is_skipped_and_counted() {
        let img = FaceImage::filled(8, 8, 1, 0.3);
        let dst = pts(&[(1.0, 1.0), (6.0, 1.0), (1.0, 6.0)]);
        let src = pts(&[(1.0, 1.0), (1.0, 1.0), (1.0, 6.0)]);
        let tri = delaunay_triangulate(&dst).unwrap();
        let (out, diag) = warp_piecewise_affine(
            &img,
            &src,
            &dst,
            &tri,
            BorderPolicy::Constant(0.0),
        )
        .unwrap();
        assert_eq!(diag.degenerate_triangles, 1);
        assert_eq!(diag.uncovered_pixels, 64);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn morph_rejects_out_of_frame_landmarks() {
        let img = FaceImage::filled(8, 8, 1, 0.3);
        let la = pts(&[(1.0, 1.0), (6.0, 1.0), (1.0, 9.0)]);
        let lb = pts(&[(1.0, 1.0), (6.0, 1.0), (1.0, 6.0)]);
        assert!(morph(&img, &la, &img, &lb, &MorphParams::default()).is_err());
    }
}

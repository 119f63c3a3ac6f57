//! Delaunay triangulation of landmark sets.
//!
//! A sweep over the lexicographically sorted points builds an initial
//! triangulation of the convex hull, which is then legalised with Lawson edge
//! flips. Quadrilaterals that are cocircular within [`COCIRCULAR_TOL`]
//! (relative) keep the diagonal whose sorted index pair is lexicographically
//! smallest, so the output is a pure function of the input.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{LandmarkSet, Point};

/// Relative tolerance of the in-circle predicate below which four points are
/// treated as cocircular.
pub const COCIRCULAR_TOL: f64 = 1e-9;

/// Relative tolerance of the orientation predicate below which three points
/// are treated as collinear.
pub const COLLINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triangulation {
    /// Indices into the landmark set that was triangulated.
    pub vertices: Vec<usize>,
    /// Index triples, each sorted ascending, sorted lexicographically.
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Unordered edge set, each edge as a sorted index pair.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[0], t[2]), (t[1], t[2])])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

/// Twice the signed area of `abc`; positive when counter-clockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[inline]
fn orient_scale(a: Point, b: Point, c: Point) -> f64 {
    ((b.x - a.x) * (c.y - a.y)).abs() + ((b.y - a.y) * (c.x - a.x)).abs()
}

/// Sign of the orientation with a relative dead band: `0` means collinear.
pub fn orient_sign(a: Point, b: Point, c: Point) -> i8 {
    let det = orient(a, b, c);
    let tol = COLLINEAR_TOL * orient_scale(a, b, c);
    if det > tol {
        1
    } else if det < -tol {
        -1
    } else {
        0
    }
}

/// In-circle determinant for a counter-clockwise `abc` and its permanent.
/// Positive determinant means `d` lies inside the circumcircle.
pub fn incircle(a: Point, b: Point, c: Point, d: Point) -> (f64, f64) {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    let det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy)
        + clift * (adx * bdy - bdx * ady);
    let permanent = alift * ((bdx * cdy).abs() + (cdx * bdy).abs())
        + blift * ((cdx * ady).abs() + (adx * cdy).abs())
        + clift * ((adx * bdy).abs() + (bdx * ady).abs());
    (det, permanent)
}

/// `1` strictly inside, `0` cocircular within tolerance, `-1` outside.
pub fn incircle_sign(a: Point, b: Point, c: Point, d: Point) -> i8 {
    let (det, permanent) = incircle(a, b, c, d);
    let tol = COCIRCULAR_TOL * permanent;
    if det > tol {
        1
    } else if det < -tol {
        -1
    } else {
        0
    }
}

pub fn delaunay_triangulate(landmarks: &LandmarkSet) -> Result<Triangulation> {
    let pts = &landmarks.points;
    let n = pts.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 points, got {n}"
        )));
    }
    if let Some(p) = pts.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::DegenerateInput(format!("point {p} is not finite")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        pts[i]
            .x
            .total_cmp(&pts[j].x)
            .then(pts[i].y.total_cmp(&pts[j].y))
            .then(i.cmp(&j))
    });
    let mut duplicate: Option<(usize, usize)> = None;
    for w in order.windows(2) {
        if pts[w[0]] == pts[w[1]] {
            let pair = (w[0].min(w[1]), w[0].max(w[1]));
            duplicate = Some(duplicate.map_or(pair, |d| d.min(pair)));
        }
    }
    if let Some((first, second)) = duplicate {
        return Err(Error::DuplicatePoint { first, second });
    }

    let mut mesh = Mesh::default();
    let hull = mesh.sweep(pts, &order)?;
    debug_assert!(hull.len() >= 3);
    mesh.legalize(pts)?;

    let mut triangles: Vec<[usize; 3]> = mesh
        .tris
        .iter()
        .map(|t| {
            let mut s = *t;
            s.sort_unstable();
            s
        })
        .collect();
    triangles.sort_unstable();
    Ok(Triangulation {
        vertices: (0..n).collect(),
        triangles,
    })
}

#[derive(Default)]
struct Mesh {
    /// Counter-clockwise triangles.
    tris: Vec<[usize; 3]>,
    /// Directed edge -> owning triangle.
    edge_owner: HashMap<(usize, usize), usize>,
}

impl Mesh {
    fn add(&mut self, t: [usize; 3]) -> usize {
        let id = self.tris.len();
        self.tris.push(t);
        self.register(id);
        id
    }

    fn register(&mut self, id: usize) {
        let [a, b, c] = self.tris[id];
        for e in [(a, b), (b, c), (c, a)] {
            self.edge_owner.insert(e, id);
        }
    }

    fn unregister(&mut self, id: usize) {
        let [a, b, c] = self.tris[id];
        for e in [(a, b), (b, c), (c, a)] {
            self.edge_owner.remove(&e);
        }
    }

    fn add_ccw(&mut self, pts: &[Point], a: usize, b: usize, c: usize) {
        if orient(pts[a], pts[b], pts[c]) > 0.0 {
            self.add([a, b, c]);
        } else {
            self.add([a, c, b]);
        }
    }

    /// Builds a triangulation of the convex hull; returns the hull (CCW,
    /// collinear boundary points kept as hull vertices).
    fn sweep(&mut self, pts: &[Point], order: &[usize]) -> Result<Vec<usize>> {
        let (p0, p1) = (order[0], order[1]);
        let apex_pos = order[2..]
            .iter()
            .position(|&q| orient_sign(pts[p0], pts[p1], pts[q]) != 0)
            .map(|k| k + 2)
            .ok_or_else(|| Error::DegenerateInput("all points are collinear".into()))?;
        let chain = &order[..apex_pos];
        let apex = order[apex_pos];
        for w in chain.windows(2) {
            self.add_ccw(pts, w[0], w[1], apex);
        }
        let mut hull: Vec<usize> = if orient(pts[p0], pts[chain[chain.len() - 1]], pts[apex]) > 0.0 {
            chain.iter().copied().chain(std::iter::once(apex)).collect()
        } else {
            std::iter::once(chain[0])
                .chain(std::iter::once(apex))
                .chain(chain[1..].iter().rev().copied())
                .collect()
        };

        for &p in &order[apex_pos + 1..] {
            let m = hull.len();
            let visible: Vec<bool> = (0..m)
                .map(|i| orient_sign(pts[hull[i]], pts[hull[(i + 1) % m]], pts[p]) < 0)
                .collect();
            let start = (0..m)
                .find(|&i| visible[i] && !visible[(i + m - 1) % m])
                .ok_or_else(|| {
                    Error::DegenerateInput(format!("point {p} sees no hull edge"))
                })?;
            let mut run = 0;
            while run < m && visible[(start + run) % m] {
                let a = hull[(start + run) % m];
                let b = hull[(start + run + 1) % m];
                self.add([b, a, p]);
                run += 1;
            }
            let mut next = Vec::with_capacity(m + 1);
            let keep = m - run + 1;
            for k in 0..keep {
                next.push(hull[(start + run + k) % m]);
            }
            next.push(p);
            hull = next;
        }
        Ok(hull)
    }

    fn legalize(&mut self, pts: &[Point]) -> Result<()> {
        let mut stack: Vec<(usize, usize)> = self
            .edge_owner
            .keys()
            .filter(|&&(a, b)| a < b && self.edge_owner.contains_key(&(b, a)))
            .copied()
            .collect();
        stack.sort_unstable();
        let budget = 64 * pts.len() * pts.len() + 1024;
        let mut flips = 0usize;
        while let Some((a, b)) = stack.pop() {
            let (Some(&t1), Some(&t2)) = (
                self.edge_owner.get(&(a, b)),
                self.edge_owner.get(&(b, a)),
            ) else {
                continue;
            };
            // t1 = (a, b, c) and t2 = (b, a, d), both counter-clockwise
            let c = third(self.tris[t1], a, b);
            let d = third(self.tris[t2], b, a);
            let flip = match incircle_sign(pts[a], pts[b], pts[c], pts[d]) {
                1 => true,
                0 => {
                    let current = (a.min(b), a.max(b));
                    let other = (c.min(d), c.max(d));
                    other < current
                        && orient_sign(pts[c], pts[d], pts[a]) * orient_sign(pts[c], pts[d], pts[b])
                            < 0
                }
                _ => false,
            };
            if !flip {
                continue;
            }
            flips += 1;
            if flips > budget {
                return Err(Error::DegenerateInput(
                    "edge flipping did not converge".into(),
                ));
            }
            self.unregister(t1);
            self.unregister(t2);
            self.tris[t1] = [a, d, c];
            self.tris[t2] = [d, b, c];
            self.register(t1);
            self.register(t2);
            for (u, v) in [(a, d), (d, b), (b, c), (c, a)] {
                stack.push((u.min(v), u.max(v)));
            }
        }
        Ok(())
    }
}

fn third(t: [usize; 3], a: usize, b: usize) -> usize {
    t.into_iter()
        .find(|&v| v != a && v != b)
        .expect("triangle has a third vertex")
}

//! Ordered fiducial point sets and their text file format.
//!
//! File layout:
//!
//! ```text
//! schema <id> <count>
//! <x> <y>
//! ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Number of synthetic frame points appended by [`LandmarkSet::with_border`].
pub const BORDER_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub schema_id: String,
    pub points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(schema_id: impl Into<String>, points: Vec<Point>) -> Self {
        Self {
            schema_id: schema_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same schema and point count.
    pub fn compatible_with(&self, other: &LandmarkSet) -> bool {
        self.schema_id == other.schema_id && self.points.len() == other.points.len()
    }

    pub fn ensure_compatible(&self, other: &LandmarkSet) -> Result<()> {
        if self.compatible_with(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleLandmarks(format!(
                "{}[{}] vs {}[{}]",
                self.schema_id,
                self.points.len(),
                other.schema_id,
                other.points.len()
            )))
        }
    }

    /// Every point inside `[0, width-1] x [0, height-1]`.
    pub fn within_bounds(&self, width: usize, height: usize) -> bool {
        let (mx, my) = ((width - 1) as f64, (height - 1) as f64);
        self.points
            .iter()
            .all(|p| p.x >= 0.0 && p.y >= 0.0 && p.x <= mx && p.y <= my)
    }

    /// Appends the four image corners and four edge midpoints so that a
    /// triangulation over the result covers the full frame.
    pub fn with_border(&self, width: usize, height: usize) -> LandmarkSet {
        let (mx, my) = ((width - 1) as f64, (height - 1) as f64);
        let (cx, cy) = (mx / 2.0, my / 2.0);
        let mut points = self.points.clone();
        points.extend_from_slice(&[
            Point::new(0.0, 0.0),
            Point::new(cx, 0.0),
            Point::new(mx, 0.0),
            Point::new(mx, cy),
            Point::new(mx, my),
            Point::new(cx, my),
            Point::new(0.0, my),
            Point::new(0.0, cy),
        ]);
        LandmarkSet {
            schema_id: format!("{}+border", self.schema_id),
            points,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> LandmarkSet {
        LandmarkSet {
            schema_id: self.schema_id.clone(),
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("schema {} {}\n", self.schema_id, self.points.len());
        for p in &self.points {
            // `{:?}` prints the shortest representation that parses back exactly
            let _ = writeln!(out, "{:?} {:?}", p.x, p.y);
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| err(1, "missing `schema <id> <count>` header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "schema" {
            return Err(err(hline, format!("expected `schema <id> <count>`, got {header:?}")));
        }
        let count: usize = fields[2]
            .parse()
            .map_err(|_| err(hline, format!("invalid point count {:?}", fields[2])))?;
        let mut points = Vec::with_capacity(count);
        for (n, line) in lines {
            let mut it = line.split_whitespace();
            let mut coord = |name: &str| -> Result<f64> {
                let tok = it
                    .next()
                    .ok_or_else(|| err(n, format!("missing {name} coordinate")))?;
                let v: f64 = tok
                    .parse()
                    .map_err(|_| err(n, format!("invalid {name} coordinate {tok:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(n, format!("non-finite {name} coordinate")))
                }
            };
            let x = coord("x")?;
            let y = coord("y")?;
            if it.next().is_some() {
                return Err(err(n, "expected exactly two numbers".into()));
            }
            points.push(Point::new(x, y));
        }
        if points.len() != count {
            return Err(err(
                hline,
                format!("header declares {count} points, file has {}", points.len()),
            ));
        }
        Ok(LandmarkSet::new(fields[1], points))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let lm = LandmarkSet::new(
            "toy",
            vec![Point::new(0.1, 1.0 / 3.0), Point::new(12.5, 7.000000000000001)],
        );
        let back = LandmarkSet::parse(&lm.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, lm);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let p = Path::new("face.lm");
        let e = LandmarkSet::parse("schema s 2\n1 2\n3 x\n", p).unwrap_err();
        assert!(e.to_string().starts_with("face.lm:3:"), "{e}");
        let e = LandmarkSet::parse("schema s 3\n1 2\n", p).unwrap_err();
        assert!(e.to_string().contains("declares 3"));
        assert!(LandmarkSet::parse("", p).is_err());
        assert!(LandmarkSet::parse("points 2\n", p).is_err());
        assert!(LandmarkSet::parse("schema s 1\n1 2 3\n", p).is_err());
    }

    #[test]
    fn border_covers_frame() {
        let lm = LandmarkSet::new("s", vec![Point::new(3.0, 4.0)]).with_border(10, 6);
        assert_eq!(lm.len(), 1 + BORDER_POINTS);
        assert!(lm.within_bounds(10, 6));
        assert!(lm.points.contains(&Point::new(9.0, 5.0)));
        assert!(lm.points.contains(&Point::new(0.0, 0.0)));
    }

    #[test]
    fn compatibility_requires_schema_and_count() {
        let a = LandmarkSet::new("s", vec![Point::new(0.0, 0.0)]);
        let b = LandmarkSet::new("t", vec![Point::new(0.0, 0.0)]);
        let c = LandmarkSet::new("s", vec![]);
        assert!(a.compatible_with(&a.clone()));
        assert!(!a.compatible_with(&b));
        assert!(!a.compatible_with(&c));
        assert!(matches!(
            a.ensure_compatible(&b),
            Err(Error::IncompatibleLandmarks(_))
        ));
    }
}

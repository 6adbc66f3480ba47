//! Surface interchange format: a JSON document with the stratum data, the
//! triangle gluing as signed 1-based edge ids, the slit identifications as
//! `[edge_a, edge_b, theta]` triples with signed ids, and one `[re, im]`
//! pair per edge. Vertex identifications are recovered from the gluing, so
//! files that violate any surface invariant are rejected at parse time.
//!
//! Field reference (all arrays in order):
//! - `genus`: non-negative integer.
//! - `angles`: cone angles in radians, one per singular point.
//! - `trees`: one entry per forest tree; a tree is an array of edges
//!   `[u, v]` with 1-based vertex labels, or a single `[v]` for an isolated
//!   point.
//! - `triangles`: triples of signed 1-based edge ids; positive means the
//!   side traverses the edge along its orientation.
//! - `boundary_pairs`: arrays `[a, b, theta]` where `a`, `b` are signed
//!   1-based edge ids and the identification reads
//!   `sign(a) z_|a| + sign(b) e^{i theta} z_|b| = 0`.
//! - `coords`: `[re, im]` per edge.

use crate::error::SurfaceError;
use crate::geom::Complex;
use crate::linsys::{AdmissibleMatrix, Row};
use crate::surface::{build_surface, AngleData, GluedSurface, Tree};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceDoc {
    pub genus: usize,
    pub angles: Vec<f64>,
    pub trees: Vec<Vec<Vec<usize>>>,
    pub triangles: Vec<[i64; 3]>,
    pub boundary_pairs: Vec<(i64, i64, f64)>,
    pub coords: Vec<(f64, f64)>,
}

impl SurfaceDoc {
    pub fn from_surface(s: &GluedSurface) -> Self {
        let signed = |edge: usize, positive: bool| -> i64 {
            let id = edge as i64 + 1;
            if positive {
                id
            } else {
                -id
            }
        };
        SurfaceDoc {
            genus: s.data.genus,
            angles: s.data.angles.clone(),
            trees: s
                .data
                .forest
                .iter()
                .map(|t| {
                    if t.edges.is_empty() {
                        vec![vec![t.vertices[0] + 1]]
                    } else {
                        t.edges.iter().map(|&(u, v)| vec![u + 1, v + 1]).collect()
                    }
                })
                .collect(),
            triangles: s
                .triangles
                .iter()
                .map(|t| {
                    [
                        signed(t.0[0].edge, t.0[0].positive),
                        signed(t.0[1].edge, t.0[1].positive),
                        signed(t.0[2].edge, t.0[2].positive),
                    ]
                })
                .collect(),
            boundary_pairs: s
                .pairs
                .iter()
                .map(|p| {
                    (
                        signed(p.a, p.sign_a > 0),
                        signed(p.b, p.sign_b > 0),
                        p.theta,
                    )
                })
                .collect(),
            coords: s.coords.iter().map(|z| (z.re, z.im)).collect(),
        }
    }

    /// Rebuild and fully validate the surface.
    pub fn to_surface(&self) -> Result<GluedSurface, SurfaceError> {
        let n_cols = self.coords.len();
        let parse_tree = |entries: &Vec<Vec<usize>>| -> Result<Tree, SurfaceError> {
            if entries.len() == 1 && entries[0].len() == 1 {
                let v = entries[0][0];
                if v == 0 {
                    return Err(SurfaceError::BadData("vertex labels are 1-based".into()));
                }
                return Ok(Tree::point(v - 1));
            }
            let mut edges = Vec::new();
            let mut vertices = Vec::new();
            for e in entries {
                if e.len() != 2 || e[0] == 0 || e[1] == 0 {
                    return Err(SurfaceError::BadData(
                        "tree edges must be pairs of 1-based labels".into(),
                    ));
                }
                let (u, v) = (e[0] - 1, e[1] - 1);
                edges.push((u, v));
                for x in [u, v] {
                    if !vertices.contains(&x) {
                        vertices.push(x);
                    }
                }
            }
            Ok(Tree { vertices, edges })
        };
        let forest = self
            .trees
            .iter()
            .map(parse_tree)
            .collect::<Result<Vec<_>, _>>()?;
        let data = AngleData::new(self.genus, self.angles.clone(), forest)?;

        let decode = |id: i64| -> Result<(usize, i8), SurfaceError> {
            if id == 0 || id.unsigned_abs() as usize > n_cols {
                return Err(SurfaceError::BadData(format!("edge id {id} out of range")));
            }
            Ok((id.unsigned_abs() as usize - 1, if id > 0 { 1 } else { -1 }))
        };
        let mut rows = Vec::new();
        for t in &self.triangles {
            let entries = [decode(t[0])?, decode(t[1])?, decode(t[2])?];
            rows.push(Row::Ordinary { entries });
        }
        for &(a, b, theta) in &self.boundary_pairs {
            let (ca, sa) = decode(a)?;
            let (cb, sb) = decode(b)?;
            rows.push(Row::Exceptional {
                a: ca,
                sign_a: sa,
                b: cb,
                sign_b: sb,
                theta,
            });
        }
        let matrix = AdmissibleMatrix::new(data, rows, n_cols)
            .map_err(|e| SurfaceError::BadData(e.to_string()))?;
        let coords: Vec<Complex> = self
            .coords
            .iter()
            .map(|&(re, im)| Complex::new(re, im))
            .collect();
        build_surface(&matrix, &coords)
    }
}

/// Serialize a surface to the interchange JSON.
pub fn to_json(s: &GluedSurface) -> String {
    serde_json::to_string_pretty(&SurfaceDoc::from_surface(s)).expect("surface serializes")
}

/// Parse and validate a surface from interchange JSON.
pub fn from_json(text: &str) -> Result<GluedSurface, SurfaceError> {
    let doc: SurfaceDoc =
        serde_json::from_str(text).map_err(|e| SurfaceError::BadData(format!("json: {e}")))?;
    doc.to_surface()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn round_trip_marked_torus() {
        let s = samples::marked_torus(
            Complex::new(1.03, 0.21),
            Complex::new(0.73, -0.61),
            Complex::new(0.17, -0.83),
        )
        .unwrap();
        let text = to_json(&s);
        let s2 = from_json(&text).unwrap();
        assert_eq!(s.coords, s2.coords);
        assert_eq!(s.pairs.len(), s2.pairs.len());
        assert!(s2.validate().pass());
    }

    #[test]
    fn round_trip_doubled_polygon() {
        let mut r = samples::rng(3);
        let s = samples::random_doubled_polygon(&mut r, 4);
        let s2 = from_json(&to_json(&s)).unwrap();
        assert!(s2.validate().pass());
        assert!((s.total_area() - s2.total_area()).abs() < 1e-12);
    }

    #[test]
    fn broken_triangle_is_rejected() {
        let s = samples::square_torus();
        let mut doc = SurfaceDoc::from_surface(&s);
        // Negate one edge coordinate: closure breaks.
        doc.coords[0].0 = -doc.coords[0].0;
        doc.coords[0].1 = -doc.coords[0].1;
        let err = doc.to_surface();
        assert!(err.is_err());
    }
}

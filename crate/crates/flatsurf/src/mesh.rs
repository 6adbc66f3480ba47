//! Triangle-mesh view of a glued surface: per-triangle developments,
//! neighbor transitions, straight-segment tracing, and enumeration of
//! vertex-to-vertex geodesic segments by a visibility-wedge search.
//!
//! All developments keep the parallel field vertical. Transitions across
//! interior edges are translations; transitions across slit identifications
//! rotate by the pair's holonomy angle and are only available in
//! [`CrossPolicy::Closed`] mode.

use crate::error::ForestError;
use crate::geom::{cross, Complex, Tol};
use crate::surface::GluedSurface;

/// Orientation-preserving plane isometry `x -> rot * x + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Iso {
    pub rot: Complex,
    pub shift: Complex,
}

impl Iso {
    pub fn translation(shift: Complex) -> Self {
        Iso {
            rot: Complex::new(1.0, 0.0),
            shift,
        }
    }

    pub fn apply(&self, x: Complex) -> Complex {
        self.rot * x + self.shift
    }

    /// `self` after `other`: `(self * other)(x) = self(other(x))`.
    pub fn compose(&self, other: &Iso) -> Iso {
        Iso {
            rot: self.rot * other.rot,
            shift: self.rot * other.shift + self.shift,
        }
    }

    pub fn inverse(&self) -> Iso {
        let r = self.rot.conj() / self.rot.norm_sqr();
        Iso {
            rot: r,
            shift: -r * self.shift,
        }
    }
}

/// Whether geodesics may cross the slit identifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CrossPolicy {
    /// Walk the closed surface: slit pairs are crossable with a rotation.
    Closed,
    /// Walk the slit surface: pair edges are walls.
    Slit,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NeighborRef {
    pub tri: usize,
    pub side: usize,
    /// Maps the neighbor triangle's frame into this triangle's frame.
    pub iso: Iso,
}

/// Mesh with per-side adjacency under a crossing policy.
pub(crate) struct Mesh<'a> {
    pub surface: &'a GluedSurface,
    pub corners: Vec<[Complex; 3]>,
    neighbors: Vec<[Option<NeighborRef>; 3]>,
    pub tol: Tol,
    pub closed: bool,
}

impl<'a> Mesh<'a> {
    pub fn new(surface: &'a GluedSurface, policy: CrossPolicy) -> Self {
        let nt = surface.triangles.len();
        let corners: Vec<[Complex; 3]> = (0..nt).map(|t| surface.corners(t)).collect();
        let mut neighbors: Vec<[Option<NeighborRef>; 3]> = vec![[None, None, None]; nt];
        let occ = surface.occurrences();

        for slots in &occ {
            if let [s0, s1] = slots.sides.as_slice() {
                // Interior edge: glue by the translation matching the
                // traversal start of one side to the traversal end of the
                // other (the traversals run in opposite directions).
                let mut set = |from: (usize, usize, bool), to: (usize, usize, bool)| {
                    let (t, k, _) = from;
                    let (t2, k2, _) = to;
                    let a = corners[t][k];
                    let b2 = corners[t2][(k2 + 1) % 3];
                    neighbors[t][k] = Some(NeighborRef {
                        tri: t2,
                        side: k2,
                        iso: Iso::translation(a - b2),
                    });
                };
                set(*s0, *s1);
                set(*s1, *s0);
            }
        }

        if policy == CrossPolicy::Closed {
            for pair in &surface.pairs {
                let (sa, sb) = (occ[pair.a].sides[0], occ[pair.b].sides[0]);
                // Edge-tail positions in each triangle's frame.
                let tail_pos = |(t, k, pos): (usize, usize, bool)| {
                    if pos {
                        corners[t][k]
                    } else {
                        corners[t][(k + 1) % 3]
                    }
                };
                let (pa, pb) = (tail_pos(sa), tail_pos(sb));
                let (va, vb) = (surface.coords[pair.a], surface.coords[pair.b]);
                // Match endpoints by vertex label; a forest edge joins two
                // distinct labels, so the match is unambiguous.
                let (la, lb) = (surface.edge_vertices[pair.a], surface.edge_vertices[pair.b]);
                let (anchor_b, vec_b) = if la == lb {
                    (pb, vb)
                } else {
                    debug_assert_eq!((la.1, la.0), lb);
                    (pb + vb, -vb)
                };
                // Map the b-copy onto the a-copy: tb-frame -> ta-frame.
                let rot = va / vec_b;
                let iso_b_to_a = Iso {
                    rot,
                    shift: pa - rot * anchor_b,
                };
                neighbors[sa.0][sa.1] = Some(NeighborRef {
                    tri: sb.0,
                    side: sb.1,
                    iso: iso_b_to_a,
                });
                neighbors[sb.0][sb.1] = Some(NeighborRef {
                    tri: sa.0,
                    side: sa.1,
                    iso: iso_b_to_a.inverse(),
                });
            }
        }

        Mesh {
            surface,
            corners,
            neighbors,
            tol: surface.tol(),
            closed: policy == CrossPolicy::Closed,
        }
    }

    pub fn neighbor(&self, tri: usize, side: usize) -> Option<&NeighborRef> {
        self.neighbors[tri][side].as_ref()
    }
}

/// A vertex-to-vertex geodesic segment with no vertex in its interior.
#[derive(Debug, Clone)]
pub(crate) struct Connection {
    pub from: usize,
    pub to: usize,
    /// Displacement in the frame of the source corner.
    pub displacement: Complex,
    pub length: f64,
    /// Source corner `(triangle, corner)` for tracing.
    pub source: (usize, usize),
    /// Target corner and the rotation mapping the target frame into the
    /// source frame at discovery.
    pub target: (usize, usize),
    pub target_rot: Complex,
}

impl Connection {
    /// Displacement as seen from the target corner.
    pub fn reverse_displacement(&self) -> Complex {
        -(self.displacement / self.target_rot)
    }
}

const DIR_EPS: f64 = 1e-12;

fn dir(z: Complex) -> Complex {
    z / z.norm()
}

struct WedgeNode {
    tri: usize,
    side: usize,
    iso: Iso,
    lo: Complex,
    hi: Complex,
}

/// Enumerate geodesic segments of length at most `max_len` between mesh
/// vertices via a wedge search from every corner. Duplicates (the same
/// segment seen from both ends) are merged.
pub(crate) fn enumerate_connections(
    mesh: &Mesh,
    max_len: f64,
    node_limit: usize,
) -> Result<Vec<Connection>, ForestError> {
    let mut found: Vec<Connection> = Vec::new();
    let mut keys: std::collections::BTreeSet<(usize, usize, i64, i64)> = Default::default();
    // On the closed surface the two copies of a slit edge are one segment.
    let mut edge_alias: Vec<usize> = (0..mesh.surface.edge_count()).collect();
    if mesh.closed {
        for pair in &mesh.surface.pairs {
            let m = pair.a.min(pair.b);
            edge_alias[pair.a] = m;
            edge_alias[pair.b] = m;
        }
    }
    let quant = |z: Complex| -> (i64, i64) {
        let q = 1e-7 * mesh.tol.scale;
        ((z.re / q).round() as i64, (z.im / q).round() as i64)
    };
    // Segments along triangulation edges are keyed by edge id (each edge is
    // seen from up to four corner incidences); wedge discoveries are keyed by
    // their corner and displacement, merged with the reverse view.
    let mut record = |c: Connection, edge: Option<usize>| {
        let key = match edge {
            Some(e) => (usize::MAX, edge_alias[e], 0, 0),
            None => {
                let dq = quant(c.displacement);
                let fwd = (c.source.0 * 3 + c.source.1, 0, dq.0, dq.1);
                let rq = quant(c.reverse_displacement());
                let rev = (c.target.0 * 3 + c.target.1, 0, rq.0, rq.1);
                fwd.min(rev)
            }
        };
        if keys.insert(key) {
            found.push(c);
        }
    };
    let mut budget = node_limit;

    for t in 0..mesh.corners.len() {
        for k in 0..3 {
            let a = mesh.corners[t][k];
            let b = mesh.corners[t][(k + 1) % 3];
            let c = mesh.corners[t][(k + 2) % 3];
            let (db, dc) = (b - a, c - a);
            let from = mesh.surface.corner_label(t, k);
            // The two triangle sides at this corner are connections.
            if db.norm() <= max_len {
                record(
                    Connection {
                        from,
                        to: mesh.surface.corner_label(t, (k + 1) % 3),
                        displacement: db,
                        length: db.norm(),
                        source: (t, k),
                        target: (t, (k + 1) % 3),
                        target_rot: Complex::new(1.0, 0.0),
                    },
                    Some(mesh.surface.triangles[t].0[k].edge),
                );
            }
            if dc.norm() <= max_len {
                record(
                    Connection {
                        from,
                        to: mesh.surface.corner_label(t, (k + 2) % 3),
                        displacement: dc,
                        length: dc.norm(),
                        source: (t, k),
                        target: (t, (k + 2) % 3),
                        target_rot: Complex::new(1.0, 0.0),
                    },
                    Some(mesh.surface.triangles[t].0[(k + 2) % 3].edge),
                );
            }
            // Search the open wedge between the two sides, entering through
            // the far side (from corner k+1 to corner k+2).
            let mut stack = vec![WedgeNode {
                tri: t,
                side: (k + 1) % 3,
                iso: Iso::translation(-a),
                lo: dir(db),
                hi: dir(dc),
            }];
            while let Some(node) = stack.pop() {
                if budget == 0 {
                    return Err(ForestError::BudgetExceeded(node_limit));
                }
                budget -= 1;
                let nb = match mesh.neighbor(node.tri, node.side) {
                    Some(nb) => *nb,
                    None => continue,
                };
                let iso = node.iso.compose(&nb.iso);
                let tri = nb.tri;
                let entered = nb.side;
                let p: Vec<Complex> = (0..3).map(|i| iso.apply(mesh.corners[tri][i])).collect();
                // Portal distance pruning.
                let (ps, pe) = (p[entered], p[(entered + 1) % 3]);
                if segment_distance_to_origin(ps, pe) > max_len {
                    continue;
                }
                let apex = (entered + 2) % 3;
                let r = p[apex];
                let rn = r.norm();
                if rn > mesh.tol.abs() {
                    let dr = dir(r);
                    if cross(node.lo, dr) > DIR_EPS && cross(dr, node.hi) > DIR_EPS && rn <= max_len
                    {
                        record(
                            Connection {
                                from,
                                to: mesh.surface.corner_label(tri, apex),
                                displacement: r,
                                length: rn,
                                source: (t, k),
                                target: (tri, apex),
                                target_rot: iso.rot,
                            },
                            None,
                        );
                    }
                }
                // Recurse through the two far sides, clipping the wedge.
                for far in [(entered + 1) % 3, (entered + 2) % 3] {
                    let (a1, a2) = (p[far], p[(far + 1) % 3]);
                    if a1.norm() <= mesh.tol.abs() || a2.norm() <= mesh.tol.abs() {
                        continue;
                    }
                    let (mut u, mut v) = (dir(a1), dir(a2));
                    if cross(u, v) < 0.0 {
                        std::mem::swap(&mut u, &mut v);
                    }
                    let lo = if cross(node.lo, u) > 0.0 { u } else { node.lo };
                    let hi = if cross(v, node.hi) > 0.0 { v } else { node.hi };
                    if cross(lo, hi) > DIR_EPS {
                        stack.push(WedgeNode {
                            tri,
                            side: far,
                            iso,
                            lo,
                            hi,
                        });
                    }
                }
            }
        }
    }
    Ok(found)
}

fn segment_distance_to_origin(a: Complex, b: Complex) -> f64 {
    let ab = b - a;
    let denom = ab.norm_sqr();
    if denom == 0.0 {
        return a.norm();
    }
    let t = (-(a.re * ab.re + a.im * ab.im) / denom).clamp(0.0, 1.0);
    (a + ab * t).norm()
}

/// One straight piece of a traced segment, in the local frame of `tri`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TracePiece {
    pub tri: usize,
    pub a: Complex,
    pub b: Complex,
}

/// Trace the straight segment of length `|displacement|` leaving the corner
/// `(tri, corner)` in direction `displacement`, splitting it into
/// per-triangle pieces. Fails if the segment leaves the mesh or meets a
/// vertex in its interior.
pub(crate) fn trace_segment(
    mesh: &Mesh,
    source: (usize, usize),
    displacement: Complex,
) -> Result<Vec<TracePiece>, ForestError> {
    let stall = |msg: &str| ForestError::ProcedureStall(msg.to_string());
    let total = displacement.norm();
    let tol = mesh.tol.abs();
    let (t0, k0) = source;
    let start = mesh.corners[t0][k0];
    // Current triangle and isometry from its local frame into the source
    // frame (origin at the source corner).
    let mut tri = t0;
    let mut iso = Iso::translation(-start);
    let mut s = 0.0; // arc length consumed
    let mut pieces = Vec::new();
    let u = displacement / total;
    let mut guard = 100_000usize;

    while s < total - tol {
        guard -= 1;
        if guard == 0 {
            return Err(stall("segment trace did not terminate"));
        }
        let p: Vec<Complex> = (0..3).map(|i| iso.apply(mesh.corners[tri][i])).collect();
        // Intersect the ray x = s*u with the triangle sides to find the exit.
        let mut exit: Option<(f64, usize)> = None;
        for side in 0..3 {
            let (a, b) = (p[side], p[(side + 1) % 3]);
            let ab = b - a;
            let denom = cross(u, ab);
            if denom.abs() < 1e-15 {
                continue;
            }
            let sp = cross(a, ab) / denom;
            let tpar = -cross(a, u) / cross(ab, u);
            if (-1e-9..=1.0 + 1e-9).contains(&tpar) && sp > s + tol {
                match exit {
                    Some((se, _)) if se <= sp => {}
                    _ => exit = Some((sp, side)),
                }
            }
        }
        let (s_exit, side) = match exit {
            Some(e) => e,
            None => return Err(stall("segment trace lost containment")),
        };
        if s_exit >= total - tol {
            pieces.push(TracePiece {
                tri,
                a: iso.inverse().apply(u * s),
                b: iso.inverse().apply(displacement),
            });
            return Ok(pieces);
        }
        let x = u * s_exit;
        for c in &p {
            if (x - c).norm() <= tol {
                return Err(stall("segment passes through a vertex"));
            }
        }
        pieces.push(TracePiece {
            tri,
            a: iso.inverse().apply(u * s),
            b: iso.inverse().apply(x),
        });
        let nb = mesh
            .neighbor(tri, side)
            .ok_or_else(|| stall("segment trace hit a wall"))?;
        iso = iso.compose(&nb.iso);
        tri = nb.tri;
        s = s_exit;
    }
    Ok(pieces)
}

/// Open-interior crossing test between two traced segments.
pub(crate) fn traces_cross(mesh: &Mesh, t1: &[TracePiece], t2: &[TracePiece]) -> bool {
    let tol = mesh.tol.abs();
    for p1 in t1 {
        for p2 in t2 {
            if p1.tri == p2.tri && segments_cross_open(p1.a, p1.b, p2.a, p2.b, tol) {
                return true;
            }
        }
    }
    false
}

/// Whether open segments (a1,b1) and (a2,b2) intersect transversally away
/// from their endpoints.
fn segments_cross_open(a1: Complex, b1: Complex, a2: Complex, b2: Complex, tol: f64) -> bool {
    let d1 = b1 - a1;
    let d2 = b2 - a2;
    let denom = cross(d1, d2);
    if denom.abs() < 1e-14 {
        return false; // parallel; collinear overlap is ruled by endpoints
    }
    let t1 = cross(a2 - a1, d2) / denom;
    let t2 = cross(a2 - a1, d1) / denom;
    let margin1 = tol / d1.norm().max(tol);
    let margin2 = tol / d2.norm().max(tol);
    t1 > margin1 && t1 < 1.0 - margin1 && t2 > margin2 && t2 < 1.0 - margin2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn square_torus_connections_within_radius() {
        let s = samples::square_torus();
        let mesh = Mesh::new(&s, CrossPolicy::Closed);
        let conns = enumerate_connections(&mesh, 1.5, 100_000).unwrap();
        // Lattice displacements up to length 1.5, up to sign: 1, i, 1+i, 1-i.
        let mut lengths: Vec<f64> = conns.iter().map(|c| c.length).collect();
        lengths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(lengths.len(), 4, "got {lengths:?}");
        assert!((lengths[0] - 1.0).abs() < 1e-9);
        assert!((lengths[1] - 1.0).abs() < 1e-9);
        assert!((lengths[2] - 2f64.sqrt()).abs() < 1e-9);
        assert!((lengths[3] - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn doubled_triangle_connections_are_sides() {
        let pts = [
            Complex::new(0.0, 0.0),
            Complex::new(1.0, 0.0),
            Complex::from_polar(1.0, std::f64::consts::FRAC_PI_3),
        ];
        let s = samples::doubled_polygon(&pts).unwrap();
        let mesh = Mesh::new(&s, CrossPolicy::Closed);
        let conns = enumerate_connections(&mesh, 1.1, 100_000).unwrap();
        assert_eq!(conns.len(), 3, "{conns:?}");
        for c in &conns {
            assert!((c.length - 1.0).abs() < 1e-9);
            assert_ne!(c.from, c.to);
        }
    }

    #[test]
    fn trace_follows_connections() {
        let s = samples::square_torus();
        let mesh = Mesh::new(&s, CrossPolicy::Closed);
        let conns = enumerate_connections(&mesh, 1.5, 100_000).unwrap();
        for c in &conns {
            let pieces = trace_segment(&mesh, c.source, c.displacement).unwrap();
            assert!(!pieces.is_empty());
            let total: f64 = pieces.iter().map(|p| (p.b - p.a).norm()).sum();
            assert!((total - c.length).abs() < 1e-9, "length mismatch");
        }
    }
}

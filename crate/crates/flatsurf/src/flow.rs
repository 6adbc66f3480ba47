//! Vertical-flow machinery: stripe sweeps from boundary segments, the
//! cut-and-recurse good triangulation, special-position detection, and
//! extraction of admissible triples (matrix, primary system, auxiliary
//! system from supporters, seed coordinates).
//!
//! Sweeps develop triangles along the stripe instead of time-stepping. They
//! run on the slit surface where all transitions are translations, so one
//! vertical direction is meaningful across the whole development;
//! down-sweeps are handled by conjugating developments.

use crate::error::{FlowError, ForestError};
use crate::geom::{cross, signed_area, Complex, Tol};
use crate::linsys::{self, AdmissibleMatrix, IndexSystems};
use crate::mesh::{enumerate_connections, trace_segment, CrossPolicy, Mesh, TracePiece};
use crate::surface::{BoundaryPair, EdgeVector, GluedSurface, SignedEdge, Triangle};

/// Horizontal length of an edge vector: the absolute real part under the
/// pinned vertical field.
pub fn horizontal_length(e: &EdgeVector) -> f64 {
    e.value.re.abs()
}

/// Sweep direction relative to the vertical field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSide {
    Up,
    Down,
}

/// Result of a stripe sweep: the first flow time at which the swept open
/// segment meets a vertex, the vertex hit, and the parameter sub-interval of
/// the base segment still unobstructed at that time.
#[derive(Debug, Clone)]
pub struct StripeHit {
    pub time: f64,
    pub hit_vertex: usize,
    pub sub_interval: (f64, f64),
}

/// A good triangulation with ordered edges: slit-boundary edges first, then
/// interior edges in cut order, each interior edge with its supporter.
#[derive(Debug, Clone)]
pub struct OrderedTriangulation {
    pub surface: GluedSurface,
    /// Per edge: `(supporter edge, triangle index)`; `None` on the boundary.
    pub supporter: Vec<Option<(usize, usize)>>,
    pub boundary_count: usize,
}

/// An admissible matrix with index systems and a seed kernel vector that
/// realizes the source surface with the layered inequalities strict.
#[derive(Debug, Clone)]
pub struct AdmissibleTriple {
    pub matrix: AdmissibleMatrix,
    pub systems: IndexSystems,
    pub seed_coords: Vec<Complex>,
}

// ---------------------------------------------------------------------------
// Sweep engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// A vertex reference on the mesh: label and one incident corner.
#[derive(Debug, Clone, Copy)]
struct VertexRef {
    label: usize,
    corner: (usize, usize),
}

/// A straight boundary segment of the evolving cut surface, with its
/// developed trace on the fixed mesh.
#[derive(Debug, Clone)]
struct CutSegment {
    /// Final edge id in the ordered triangulation.
    id: usize,
    pieces: Vec<TracePiece>,
    /// Field-aligned vector from tail to head.
    vector: Complex,
    tail: VertexRef,
    head: VertexRef,
    /// Whether the remaining surface lies on the upward side.
    sweep_up: bool,
    active: bool,
    /// Original geometric edge for slit copies.
    source_edge: Option<usize>,
}

fn flip(up: bool, z: Complex) -> Complex {
    if up {
        z
    } else {
        z.conj()
    }
}

#[derive(Debug, Clone)]
struct FrontPiece {
    tri: usize,
    /// Sweep development of this triangle: `sw(x) = flip(x) + shift`.
    shift: Complex,
    lo: f64,
    hi: f64,
    /// Entry segment endpoints in sweep coordinates, ordered by `re`.
    entry: (Complex, Complex),
}

impl FrontPiece {
    fn entry_y(&self, u: f64) -> f64 {
        let (a, b) = self.entry;
        if (b.re - a.re).abs() < 1e-300 {
            return a.im.min(b.im);
        }
        a.im + (b.im - a.im) * (u - a.re) / (b.re - a.re)
    }
}

#[derive(Debug, Clone)]
struct HitEvent {
    time: f64,
    vertex: VertexRef,
    pos: Complex,
    interval: (f64, f64),
}

#[derive(Debug, Clone)]
struct SweepOutcome {
    hit: HitEvent,
    /// Sweep-frame positions of the base tail and head.
    base_tail: Complex,
    base_head: Complex,
    up: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CeilKind {
    Exit(usize),
    Barrier,
}

#[derive(Debug, Clone, Copy)]
struct CeilSeg {
    kind: CeilKind,
    a: Complex,
    b: Complex,
}

impl CeilSeg {
    fn span(&self) -> (f64, f64) {
        if self.a.re <= self.b.re {
            (self.a.re, self.b.re)
        } else {
            (self.b.re, self.a.re)
        }
    }

    fn y_at(&self, u: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        if (b.re - a.re).abs() < 1e-300 {
            return a.im.min(b.im);
        }
        a.im + (b.im - a.im) * (u - a.re) / (b.re - a.re)
    }
}

/// Horizontal coordinate where two ceiling segments cross, if any.
fn crossing_u(a: &CeilSeg, b: &CeilSeg) -> Option<f64> {
    let da = a.b - a.a;
    let db = b.b - b.a;
    if da.re.abs() < 1e-300 || db.re.abs() < 1e-300 {
        return None;
    }
    let sa = da.im / da.re;
    let sb = db.im / db.re;
    if (sa - sb).abs() < 1e-14 {
        return None;
    }
    let u = (b.a.im - a.a.im + sa * a.a.re - sb * b.a.re) / (sa - sb);
    let (alo, ahi) = a.span();
    let (blo, bhi) = b.span();
    (u >= alo && u <= ahi && u >= blo && u <= bhi).then_some(u)
}

struct RunState {
    queue: std::collections::BinaryHeap<std::cmp::Reverse<(OrdF64, usize)>>,
    pieces: Vec<FrontPiece>,
    best: Option<HitEvent>,
    specials: Vec<(f64, String)>,
    base_tail: Complex,
    base_head: Complex,
    tol: f64,
}

impl RunState {
    fn time_of(&self, x: Complex) -> f64 {
        let (bt, bh) = (self.base_tail, self.base_head);
        let base_y = bt.im + (bh.im - bt.im) * (x.re - bt.re) / (bh.re - bt.re);
        x.im - base_y
    }

    fn push(&mut self, p: FrontPiece) {
        if p.hi - p.lo <= self.tol {
            return;
        }
        let tmin = self.time_of(p.entry.0).min(self.time_of(p.entry.1));
        self.queue
            .push(std::cmp::Reverse((OrdF64(tmin), self.pieces.len())));
        self.pieces.push(p);
    }
}

/// A barrier piece indexed under one triangle, in that triangle's local
/// coordinates. Pieces lying exactly on a mesh edge are indexed under both
/// adjacent triangles so they block the flow from either side.
#[derive(Debug, Clone, Copy)]
struct BarrierPiece {
    seg: usize,
    a: Complex,
    b: Complex,
    tail_here: bool,
    head_here: bool,
}

/// The mesh side a piece lies on, if it is edge-aligned.
fn aligned_side(mesh: &Mesh, piece: &TracePiece) -> Option<usize> {
    let tol = 10.0 * mesh.tol.abs();
    let c = &mesh.corners[piece.tri];
    (0..3).find(|&s| {
        let (p, q) = (c[s], c[(s + 1) % 3]);
        let d = q - p;
        let n = d.norm();
        cross(d, piece.a - p).abs() <= tol * n.max(1.0)
            && cross(d, piece.b - p).abs() <= tol * n.max(1.0)
    })
}

struct Sweep<'m, 's, 'a> {
    mesh: &'m Mesh<'a>,
    segments: &'s [CutSegment],
    by_tri: Vec<Vec<BarrierPiece>>,
    /// Count boundary-aligned vertex contacts as ordinary hits (used by the
    /// cylinder alignment sweep on closed translation tori).
    alignment_mode: bool,
    budget: usize,
}

impl<'m, 's, 'a> Sweep<'m, 's, 'a> {
    fn new(mesh: &'m Mesh<'a>, segments: &'s [CutSegment], alignment_mode: bool) -> Self {
        let mut by_tri: Vec<Vec<BarrierPiece>> = vec![Vec::new(); mesh.corners.len()];
        if !alignment_mode {
            for (si, seg) in segments.iter().enumerate() {
                for (pi, piece) in seg.pieces.iter().enumerate() {
                    let bp = BarrierPiece {
                        seg: si,
                        a: piece.a,
                        b: piece.b,
                        tail_here: pi == 0,
                        head_here: pi + 1 == seg.pieces.len(),
                    };
                    by_tri[piece.tri].push(bp);
                    if let Some(side) = aligned_side(mesh, piece) {
                        if let Some(nb) = mesh.neighbor(piece.tri, side) {
                            let inv = nb.iso.inverse();
                            by_tri[nb.tri].push(BarrierPiece {
                                a: inv.apply(piece.a),
                                b: inv.apply(piece.b),
                                ..bp
                            });
                        }
                    }
                }
            }
        }
        Sweep {
            mesh,
            segments,
            by_tri,
            alignment_mode,
            budget: 400_000,
        }
    }

    fn run(&mut self, base_idx: usize) -> Result<SweepOutcome, FlowError> {
        let base = &self.segments[base_idx];
        let tol = self.mesh.tol.abs();
        let up = base.sweep_up;
        if base.vector.re.abs() <= tol {
            return Err(FlowError::ParallelSegment);
        }

        // Develop the base pieces consecutively into the sweep frame.
        let mut shifts: Vec<Complex> = Vec::with_capacity(base.pieces.len());
        for (i, piece) in base.pieces.iter().enumerate() {
            if i == 0 {
                shifts.push(Complex::new(0.0, 0.0));
            } else {
                let prev = &base.pieces[i - 1];
                let s = flip(up, prev.b) + shifts[i - 1] - flip(up, piece.a);
                shifts.push(s);
            }
        }
        let last = base.pieces.len() - 1;
        let mut state = RunState {
            queue: Default::default(),
            pieces: Vec::new(),
            best: None,
            specials: Vec::new(),
            base_tail: flip(up, base.pieces[0].a),
            base_head: flip(up, base.pieces[last].b) + shifts[last],
            tol,
        };
        for (i, piece) in base.pieces.iter().enumerate() {
            let (a, b) = (flip(up, piece.a) + shifts[i], flip(up, piece.b) + shifts[i]);
            let (lo_pt, hi_pt) = if a.re <= b.re { (a, b) } else { (b, a) };
            // A base piece lying along a triangle side may be stored in the
            // triangle on the wrong side of the sweep; cross over if needed.
            let (tri, shift) =
                self.sweep_side_triangle(piece.tri, shifts[i], up, lo_pt, hi_pt, tol)?;
            state.push(FrontPiece {
                tri,
                shift,
                lo: lo_pt.re,
                hi: hi_pt.re,
                entry: (lo_pt, hi_pt),
            });
        }

        while let Some(std::cmp::Reverse((tmin, idx))) = state.queue.pop() {
            if let Some(hit) = &state.best {
                if tmin.0 >= hit.time - tol {
                    break;
                }
            }
            if self.budget == 0 {
                return Err(FlowError::NonTermination);
            }
            self.budget -= 1;
            let piece = state.pieces[idx].clone();
            self.process_piece(&piece, up, &mut state)?;
        }

        let hit = match state.best {
            Some(h) => h,
            None => {
                return Err(if state.specials.is_empty() {
                    FlowError::AssertionFailure("sweep found no hit and no boundary event".into())
                } else {
                    FlowError::SpecialPosition(state.specials[0].1.clone())
                });
            }
        };
        if !self.alignment_mode {
            if let Some((_, msg)) = state
                .specials
                .iter()
                .find(|(t, _)| *t <= hit.time + 10.0 * tol)
            {
                return Err(FlowError::SpecialPosition(msg.clone()));
            }
        }
        Ok(SweepOutcome {
            hit,
            base_tail: state.base_tail,
            base_head: state.base_head,
            up,
        })
    }

    /// Pick the development of the triangle on the upper side of the entry
    /// segment. If `tri` lies below the line through the entry, cross the
    /// collinear side into its neighbor.
    fn sweep_side_triangle(
        &self,
        tri: usize,
        shift: Complex,
        up: bool,
        lo_pt: Complex,
        hi_pt: Complex,
        tol: f64,
    ) -> Result<(usize, Complex), FlowError> {
        let line_y = |u: f64| {
            lo_pt.im + (hi_pt.im - lo_pt.im) * (u - lo_pt.re) / (hi_pt.re - lo_pt.re)
        };
        let mut cur = (tri, shift);
        for _ in 0..2 {
            let p: Vec<Complex> = (0..3)
                .map(|i| flip(up, self.mesh.corners[cur.0][i]) + cur.1)
                .collect();
            if p.iter().any(|c| c.im > line_y(c.re) + tol) {
                return Ok(cur);
            }
            // Find the side collinear with the entry and cross it.
            let side = (0..3)
                .find(|&s| {
                    let (a, b) = (p[s], p[(s + 1) % 3]);
                    (a.im - line_y(a.re)).abs() <= 10.0 * tol
                        && (b.im - line_y(b.re)).abs() <= 10.0 * tol
                })
                .ok_or_else(|| {
                    FlowError::AssertionFailure(
                        "base piece not on a side of a wrong-side triangle".into(),
                    )
                })?;
            let nb = self.mesh.neighbor(cur.0, side).ok_or_else(|| {
                FlowError::AssertionFailure("no surface above the base piece".into())
            })?;
            cur = (nb.tri, cur.1 + flip(up, nb.iso.shift));
        }
        Err(FlowError::AssertionFailure(
            "could not find the sweep-side triangle".into(),
        ))
    }

    fn process_piece(
        &mut self,
        piece: &FrontPiece,
        up: bool,
        state: &mut RunState,
    ) -> Result<(), FlowError> {
        let tol = state.tol;
        let tri = piece.tri;
        let p: Vec<Complex> = (0..3)
            .map(|i| flip(up, self.mesh.corners[tri][i]) + piece.shift)
            .collect();

        // Ceiling candidates: the triangle sides and barrier pieces here.
        let mut segs: Vec<CeilSeg> = Vec::new();
        for side in 0..3 {
            segs.push(CeilSeg {
                kind: CeilKind::Exit(side),
                a: p[side],
                b: p[(side + 1) % 3],
            });
        }
        let mut barrier_vertices: Vec<(Complex, VertexRef)> = Vec::new();
        for bp in &self.by_tri[tri] {
            let seg = &self.segments[bp.seg];
            let (a, b) = (flip(up, bp.a) + piece.shift, flip(up, bp.b) + piece.shift);
            segs.push(CeilSeg {
                kind: CeilKind::Barrier,
                a,
                b,
            });
            if bp.tail_here {
                barrier_vertices.push((a, seg.tail));
            }
            if bp.head_here {
                barrier_vertices.push((b, seg.head));
            }
        }

        // Vertex events.
        let try_vertex = |pos: Complex, vr: VertexRef, state: &mut RunState| {
            let u = pos.re;
            if u < piece.lo - tol || u > piece.hi + tol {
                return;
            }
            let t = state.time_of(pos);
            if t <= tol || pos.im <= piece.entry_y(u) + tol {
                return;
            }
            let blocked = segs.iter().any(|s| {
                let (s0, s1) = s.span();
                s0 + tol < u
                    && u < s1 - tol
                    && s.y_at(u) > piece.entry_y(u) + tol
                    && s.y_at(u) < pos.im - tol
            });
            if blocked {
                return;
            }
            let inside = u > piece.lo + tol && u < piece.hi - tol;
            let aligned = (u - piece.lo).abs() <= tol || (u - piece.hi).abs() <= tol;
            if inside || (aligned && self.alignment_mode) {
                let replace = match &state.best {
                    Some(h) => (t, pos.re, vr.label) < (h.time, h.pos.re, h.vertex.label),
                    None => true,
                };
                if replace {
                    state.best = Some(HitEvent {
                        time: t,
                        vertex: vr,
                        pos,
                        interval: (piece.lo, piece.hi),
                    });
                }
            } else if aligned {
                state.specials.push((
                    t,
                    format!(
                        "vertex {} vertically aligned with a stripe edge at time {t:.6e}",
                        vr.label
                    ),
                ));
            }
        };
        for i in 0..3 {
            try_vertex(
                p[i],
                VertexRef {
                    label: self.mesh.surface.corner_label(tri, i),
                    corner: (tri, i),
                },
                state,
            );
        }
        for (pos, vr) in barrier_vertices {
            try_vertex(pos, vr, state);
        }

        // Breakpoints along [lo, hi].
        let mut us: Vec<f64> = vec![piece.lo, piece.hi];
        for s in &segs {
            let (s0, s1) = s.span();
            for v in [s0, s1] {
                if v > piece.lo + tol && v < piece.hi - tol {
                    us.push(v);
                }
            }
        }
        for i in 0..segs.len() {
            for j in (i + 1)..segs.len() {
                if let Some(u) = crossing_u(&segs[i], &segs[j]) {
                    if u > piece.lo + tol && u < piece.hi - tol {
                        us.push(u);
                    }
                }
            }
        }
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());
        us.dedup_by(|a, b| (*a - *b).abs() <= tol);

        // Elementary intervals: freeze on barriers, propagate through sides.
        for w in us.windows(2) {
            let (u1, u2) = (w[0], w[1]);
            if u2 - u1 <= tol {
                continue;
            }
            let mid = 0.5 * (u1 + u2);
            let mut ceil: Option<(f64, CeilKind, usize)> = None;
            for (si, s) in segs.iter().enumerate() {
                let (s0, s1) = s.span();
                if s0 <= mid && mid <= s1 && s.y_at(mid) > piece.entry_y(mid) + tol {
                    let y = s.y_at(mid);
                    // Prefer barriers over exit sides at equal height: a
                    // chord lying on a mesh edge freezes the flow.
                    let replace = match ceil {
                        None => true,
                        Some((cy, ck, _)) => {
                            y < cy - tol
                                || ((y - cy).abs() <= tol
                                    && s.kind == CeilKind::Barrier
                                    && ck != CeilKind::Barrier)
                        }
                    };
                    if replace {
                        ceil = Some((y, s.kind, si));
                    }
                }
            }
            let (_, kind, si) = match ceil {
                Some(c) => c,
                None => {
                    if std::env::var_os("FLATSURF_SWEEP_DEBUG").is_some() {
                        eprintln!(
                            "escape: tri {tri} interval ({u1:.6}, {u2:.6}) entry {:?} p {:?} segs {:?}",
                            piece.entry, p, segs
                        );
                    }
                    return Err(FlowError::AssertionFailure(
                        "stripe escaped its triangle".into(),
                    ))
                }
            };
            if let CeilKind::Exit(side) = kind {
                if let Some(nb) = self.mesh.neighbor(tri, side) {
                    debug_assert!(
                        (nb.iso.rot - Complex::new(1.0, 0.0)).norm() < 1e-9,
                        "sweep requires translation transitions"
                    );
                    let s = &segs[si];
                    let e1 = Complex::new(u1, s.y_at(u1));
                    let e2 = Complex::new(u2, s.y_at(u2));
                    // x_cur = x_nb + t in local frames, so the sweep shift
                    // gains flip(t).
                    let shift2 = piece.shift + flip(up, nb.iso.shift);
                    state.push(FrontPiece {
                        tri: nb.tri,
                        shift: shift2,
                        lo: u1,
                        hi: u2,
                        entry: (e1, e2),
                    });
                }
                // A side with no neighbor is a slit edge: rays freeze there.
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Cut-segment construction
// ---------------------------------------------------------------------------

/// Build the cut segment of a slit (or marked) edge occurrence.
fn edge_segment(mesh: &Mesh, edge: usize, occurrence: (usize, usize, bool), id: usize) -> CutSegment {
    let surface = mesh.surface;
    let (t, k, pos) = occurrence;
    let corners = &mesh.corners[t];
    let (a, b) = if pos {
        (corners[k], corners[(k + 1) % 3])
    } else {
        (corners[(k + 1) % 3], corners[k])
    };
    let third = corners[(k + 2) % 3];
    let v = b - a;
    let sweep_up = cross(v, third - a) * v.re > 0.0;
    let (tail_label, head_label) = surface.edge_vertices[edge];
    let (tail_corner, head_corner) = if pos {
        ((t, k), (t, (k + 1) % 3))
    } else {
        ((t, (k + 1) % 3), (t, k))
    };
    CutSegment {
        id,
        pieces: vec![TracePiece { tri: t, a, b }],
        vector: surface.coords[edge],
        tail: VertexRef {
            label: tail_label,
            corner: tail_corner,
        },
        head: VertexRef {
            label: head_label,
            corner: head_corner,
        },
        sweep_up,
        active: true,
        source_edge: Some(edge),
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// First hit of the vertical flow swept from a geometric edge, on the slit
/// surface (slit copies freeze the flow).
pub fn first_hit(
    surface: &GluedSurface,
    edge: usize,
    side: SweepSide,
) -> Result<StripeHit, FlowError> {
    if edge >= surface.edge_count() {
        return Err(FlowError::AssertionFailure(format!(
            "edge {edge} out of range"
        )));
    }
    let mesh = Mesh::new(surface, CrossPolicy::Slit);
    let occ = surface.occurrences();
    let want_up = side == SweepSide::Up;
    let mut segments: Vec<CutSegment> = Vec::new();
    for (i, &e) in surface.boundary_edges().iter().enumerate() {
        segments.push(edge_segment(&mesh, e, occ[e].sides[0], i));
    }
    let mut base: Option<CutSegment> = None;
    for &o in &occ[edge].sides {
        let seg = edge_segment(&mesh, edge, o, segments.len());
        if seg.sweep_up == want_up {
            base = Some(seg);
            break;
        }
    }
    let base = base.ok_or_else(|| {
        FlowError::AssertionFailure("no surface on the requested sweep side".into())
    })?;
    segments.push(base);
    let base_idx = segments.len() - 1;

    let mut sweep = Sweep::new(&mesh, &segments, false);
    let outcome = sweep.run(base_idx)?;
    let (bt, bh) = (outcome.base_tail, outcome.base_head);
    let param = |u: f64| (u - bt.re) / (bh.re - bt.re);
    let (mut s1, mut s2) = (
        param(outcome.hit.interval.0),
        param(outcome.hit.interval.1),
    );
    if s1 > s2 {
        std::mem::swap(&mut s1, &mut s2);
    }
    Ok(StripeHit {
        time: outcome.hit.time,
        hit_vertex: outcome.hit.vertex.label,
        sub_interval: (s1.clamp(0.0, 1.0), s2.clamp(0.0, 1.0)),
    })
}

/// First alignment of the vertical flow from the marked segment of a closed
/// translation surface with the segment itself: returns the flow time, the
/// endpoint label at which contact happens, and the vector joining the two
/// images of that endpoint (a closed geodesic through it).
pub(crate) fn first_alignment(
    surface: &GluedSurface,
    edge: usize,
) -> Result<(f64, usize, Complex), FlowError> {
    for pair in &surface.pairs {
        let rot = Complex::from_polar(1.0, pair.theta);
        if (rot - Complex::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(FlowError::AssertionFailure(
                "alignment sweep needs translation holonomy".into(),
            ));
        }
    }
    let mesh = Mesh::new(surface, CrossPolicy::Closed);
    let occ = surface.occurrences();
    let base = edge_segment(&mesh, edge, occ[edge].sides[0], 0);
    let up = base.sweep_up;
    let segments = vec![base];
    let mut sweep = Sweep::new(&mesh, &segments, true);
    let outcome = sweep.run(0)?;
    let hit = &outcome.hit;
    let seg = &segments[0];
    let base_pos = if hit.vertex.label == seg.tail.label {
        outcome.base_tail
    } else if hit.vertex.label == seg.head.label {
        outcome.base_head
    } else {
        return Err(FlowError::AssertionFailure(
            "alignment hit a vertex off the segment".into(),
        ));
    };
    Ok((hit.time, hit.vertex.label, flip(up, hit.pos - base_pos)))
}

/// True when some vertex-to-vertex geodesic of the slit surface no longer
/// than `length_bound` is parallel to the vertical field.
pub fn detect_special_position(
    surface: &GluedSurface,
    length_bound: f64,
) -> Result<bool, FlowError> {
    let mesh = Mesh::new(surface, CrossPolicy::Slit);
    let conns = enumerate_connections(&mesh, length_bound, 2_000_000).map_err(|e| match e {
        ForestError::BudgetExceeded(_) => FlowError::NonTermination,
        other => FlowError::AssertionFailure(other.to_string()),
    })?;
    Ok(conns
        .iter()
        .any(|c| c.displacement.re.abs() < 1e-9 * c.displacement.im.abs().max(1.0)))
}

/// Walk around the vertex at `start` and collect every incident corner, in
/// both rotation directions, stopping at walls.
fn corner_fan(mesh: &Mesh, start: (usize, usize)) -> Vec<(usize, usize)> {
    let mut out = vec![start];
    let mut cur = start;
    loop {
        let (t, k) = cur;
        match mesh.neighbor(t, k) {
            Some(nb) => {
                let next = (nb.tri, (nb.side + 1) % 3);
                if next == start || out.contains(&next) {
                    return out;
                }
                out.push(next);
                cur = next;
            }
            None => break,
        }
    }
    let mut cur = start;
    loop {
        let (t, k) = cur;
        let incoming = (k + 2) % 3;
        match mesh.neighbor(t, incoming) {
            Some(nb) => {
                let next = (nb.tri, nb.side);
                if next == start || out.contains(&next) {
                    return out;
                }
                out.push(next);
                cur = next;
            }
            None => break,
        }
    }
    out
}

/// Trace a straight chord leaving the vertex at `from_corner` with the given
/// field-aligned displacement, picking the incident corner whose sector
/// contains the direction.
fn trace_chord(
    mesh: &Mesh,
    from_corner: (usize, usize),
    displacement: Complex,
) -> Result<Vec<TracePiece>, FlowError> {
    let d = displacement / displacement.norm();
    for (t, k) in corner_fan(mesh, from_corner) {
        let corners = &mesh.corners[t];
        let a = corners[k];
        let d1 = corners[(k + 1) % 3] - a;
        let d2 = corners[(k + 2) % 3] - a;
        let (u1, u2) = (d1 / d1.norm(), d2 / d2.norm());
        let eps = 1e-9;
        if cross(u1, d) >= -eps && cross(d, u2) >= -eps {
            return trace_segment(mesh, (t, k), displacement)
                .map_err(|e| FlowError::AssertionFailure(format!("chord trace failed: {e}")));
        }
    }
    Err(FlowError::AssertionFailure(
        "no corner sector contains the chord direction".into(),
    ))
}

/// Canonical representation of a trace piece: pieces lying on a mesh edge
/// are mapped to the adjacent triangle with the smaller index, so that the
/// two equivalent developments of an edge-aligned segment compare equal.
fn canonical_piece(mesh: &Mesh, piece: &TracePiece) -> TracePiece {
    if let Some(side) = aligned_side(mesh, piece) {
        if let Some(nb) = mesh.neighbor(piece.tri, side) {
            if nb.tri < piece.tri {
                let inv = nb.iso.inverse();
                return TracePiece {
                    tri: nb.tri,
                    a: inv.apply(piece.a),
                    b: inv.apply(piece.b),
                };
            }
        }
    }
    *piece
}

/// Whether two traces describe the same straight segment (same pieces up to
/// orientation), modulo the two developments of edge-aligned pieces.
fn traces_coincide(mesh: &Mesh, tol: Tol, a: &[TracePiece], b: &[TracePiece]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let ca: Vec<TracePiece> = a.iter().map(|p| canonical_piece(mesh, p)).collect();
    let cb: Vec<TracePiece> = b.iter().map(|p| canonical_piece(mesh, p)).collect();
    let t = 1e3 * tol.abs();
    let same = |p: &TracePiece, q: &TracePiece, rev: bool| {
        p.tri == q.tri
            && if rev {
                (p.a - q.b).norm() <= t && (p.b - q.a).norm() <= t
            } else {
                (p.a - q.a).norm() <= t && (p.b - q.b).norm() <= t
            }
    };
    ca.iter().zip(cb.iter()).all(|(p, q)| same(p, q, false))
        || ca
            .iter()
            .zip(cb.iter().rev())
            .all(|(p, q)| same(p, q, true))
}

/// Construct a good triangulation of the slit surface: repeatedly sweep the
/// vertical flow from the active boundary segment of maximal horizontal
/// length and cut off the triangle under the first hit. Edges are numbered
/// boundary-first, then in cut order.
pub fn good_triangulate(surface: &GluedSurface) -> Result<OrderedTriangulation, FlowError> {
    let counts = linsys::dimension_counts(
        surface.data.genus,
        surface.data.n(),
        surface.data.m(),
        &surface.data.angles,
    )?;
    let boundary = surface.boundary_edges();
    if boundary.is_empty() {
        return Err(FlowError::AssertionFailure(
            "good triangulation needs at least one slit edge".into(),
        ));
    }
    let mesh = Mesh::new(surface, CrossPolicy::Slit);
    let tol = mesh.tol;
    let occ = surface.occurrences();

    let mut segments: Vec<CutSegment> = Vec::new();
    for (i, &e) in boundary.iter().enumerate() {
        let seg = edge_segment(&mesh, e, occ[e].sides[0], i);
        if seg.vector.re.abs() <= tol.abs() {
            return Err(FlowError::SpecialPosition(format!(
                "slit edge {e} is vertical"
            )));
        }
        segments.push(seg);
    }
    let boundary_count = segments.len();

    let mut triangles: Vec<[SignedEdge; 3]> = Vec::new();
    let mut supporter_of: Vec<Option<(usize, usize)>> = vec![None; boundary_count];

    for _round in 0..counts.n2 {
        let base_idx = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.active)
            .max_by(|(i, s), (j, t)| {
                let (hi, hj) = (s.vector.re.abs(), t.vector.re.abs());
                hi.partial_cmp(&hj).unwrap().then(j.cmp(i))
            })
            .map(|(i, _)| i)
            .ok_or_else(|| {
                FlowError::AssertionFailure(
                    "ran out of boundary segments before the surface was cut".into(),
                )
            })?;

        let outcome = {
            let mut sweep = Sweep::new(&mesh, &segments, false);
            sweep.run(base_idx)?
        };
        let up = outcome.up;
        let hit = outcome.hit.clone();
        let base_id = segments[base_idx].id;
        let (tail_ref, head_ref) = (segments[base_idx].tail, segments[base_idx].head);

        // Chord endpoints in field coordinates (vectors relative to p).
        let p_xi = flip(up, outcome.base_tail);
        let q_xi = flip(up, outcome.base_head);
        let r_xi = flip(up, hit.pos);
        let chord1 = r_xi - p_xi; // p -> r
        let chord2 = q_xi - r_xi; // r -> q
        if chord1.re.abs() <= tol.abs() || chord2.re.abs() <= tol.abs() {
            return Err(FlowError::SpecialPosition("cut chord is vertical".into()));
        }

        let hit_ref = VertexRef {
            label: hit.vertex.label,
            corner: hit.vertex.corner,
        };
        // Trace from the hit vertex down to each base endpoint, then orient
        // tail -> head.
        let trace1 = {
            let mut t = trace_chord(&mesh, hit_ref.corner, -chord1)?;
            t.reverse();
            for piece in t.iter_mut() {
                std::mem::swap(&mut piece.a, &mut piece.b);
            }
            t
        };
        let trace2 = {
            let mut t = trace_chord(&mesh, hit_ref.corner, chord2)?;
            // Already oriented r -> q.
            t.shrink_to_fit();
            t
        };

        let mut resolve = |trace: Vec<TracePiece>,
                           vector: Complex,
                           tail: VertexRef,
                           head: VertexRef,
                           cut_side_point: Complex,
                           segments: &mut Vec<CutSegment>|
         -> Result<SignedEdge, FlowError> {
            for (si, seg) in segments.iter_mut().enumerate() {
                if traces_coincide(&mesh, tol, &seg.pieces, &trace) {
                    if !seg.active {
                        return Err(FlowError::AssertionFailure(format!(
                            "chord matches retired segment {si}"
                        )));
                    }
                    seg.active = false;
                    let positive = if (seg.vector - vector).norm() <= 1e3 * tol.abs() {
                        true
                    } else if (seg.vector + vector).norm() <= 1e3 * tol.abs() {
                        false
                    } else {
                        return Err(FlowError::AssertionFailure(
                            "coincident chord with mismatched vector".into(),
                        ));
                    };
                    return Ok(SignedEdge::new(seg.id, positive));
                }
            }
            // New chord: the remaining surface lies opposite the cut triangle.
            let sweep_up = cross(vector, cut_side_point) * vector.re < 0.0;
            let id = segments.len();
            segments.push(CutSegment {
                id,
                pieces: trace,
                vector,
                tail,
                head,
                sweep_up,
                active: true,
                source_edge: None,
            });
            supporter_of.push(None);
            Ok(SignedEdge::new(id, true))
        };

        let qp = q_xi - p_xi;
        let rp = r_xi - p_xi;
        // Cut-triangle vertex opposite each chord, relative to the chord tail.
        let se1 = resolve(trace1, chord1, tail_ref, hit_ref, qp, &mut segments)?;
        let se2 = resolve(trace2, chord2, hit_ref, head_ref, p_xi - r_xi, &mut segments)?;
        segments[base_idx].active = false;
        if std::env::var_os("FLATSURF_SWEEP_DEBUG").is_some() {
            eprintln!(
                "cut {}: base {} (h {:.4}) hit v{} t {:.4}; chords -> {:?} {:?}; active now {:?}",
                triangles.len(), base_id, segments[base_idx].vector.re.abs(),
                hit.vertex.label, hit.time, se1, se2,
                segments.iter().filter(|s| s.active).map(|s| s.id).collect::<Vec<_>>()
            );
        }

        let ti = triangles.len();
        for se in [se1, se2] {
            if se.edge >= boundary_count && supporter_of[se.edge].is_none() {
                supporter_of[se.edge] = Some((base_id, ti));
            }
        }

        // Record the cut triangle counterclockwise.
        let base_se = SignedEdge::new(base_id, true);
        let sides = if signed_area(qp, rp - qp) > 0.0 {
            // p -> q -> r
            [
                base_se,
                SignedEdge::new(se2.edge, !se2.positive),
                SignedEdge::new(se1.edge, !se1.positive),
            ]
        } else {
            // p -> r -> q
            [se1, se2, SignedEdge::new(base_id, false)]
        };
        triangles.push(sides);
    }

    if segments.iter().any(|s| s.active) {
        return Err(FlowError::AssertionFailure(
            "boundary segments left over after cutting".into(),
        ));
    }
    if segments.len() != counts.n1 {
        return Err(FlowError::AssertionFailure(format!(
            "cut produced {} edges, expected {}",
            segments.len(),
            counts.n1
        )));
    }

    let coords: Vec<Complex> = segments.iter().map(|s| s.vector).collect();
    let edge_vertices: Vec<(usize, usize)> = segments
        .iter()
        .map(|s| (s.tail.label, s.head.label))
        .collect();
    let tris: Vec<Triangle> = triangles.into_iter().map(Triangle).collect();
    let pairs: Vec<BoundaryPair> = surface
        .pairs
        .iter()
        .map(|p| {
            let find = |e: usize| {
                segments
                    .iter()
                    .position(|s| s.source_edge == Some(e))
                    .expect("slit edges keep their identity")
            };
            BoundaryPair {
                a: find(p.a),
                b: find(p.b),
                ..*p
            }
        })
        .collect();
    let new_surface = GluedSurface::new(surface.data.clone(), coords, tris, pairs, edge_vertices)
        .map_err(|e| FlowError::AssertionFailure(format!("re-glued surface invalid: {e}")))?;

    if (new_surface.total_area() - surface.total_area()).abs()
        > counts.n2 as f64 * tol.abs().max(1e-12)
    {
        return Err(FlowError::AssertionFailure("area not conserved".into()));
    }

    Ok(OrderedTriangulation {
        surface: new_surface,
        supporter: supporter_of,
        boundary_count,
    })
}

/// Build the admissible triple of a surface: good triangulation, assembled
/// matrix, boundary-first greedy primary system, auxiliary system from
/// supporters, and the seed coordinates with the layered inequalities strict.
pub fn admissible_triple(surface: &GluedSurface) -> Result<AdmissibleTriple, FlowError> {
    let ot = good_triangulate(surface)?;
    let a = linsys::assemble(&ot.surface);
    let systems = linsys::primary_system(&a)?;
    let k = systems.k_start;
    let dim = systems.primary.len();
    let hints: Vec<usize> = (k..=dim)
        .map(|layer| {
            let i_k = systems.primary[layer - 1];
            ot.supporter[i_k].map(|(j, _)| j).ok_or_else(|| {
                FlowError::AssertionFailure(format!(
                    "layered primary index {i_k} has no supporter"
                ))
            })
        })
        .collect::<Result<_, _>>()?;
    let systems = linsys::auxiliary_system(&a, &systems, Some(&hints))?;

    let z0 = ot.surface.coords.clone();
    for (layer, &j_k) in (k..=dim).zip(systems.auxiliary.iter()) {
        let i_k = systems.primary[layer - 1];
        if z0[j_k].re.abs() <= z0[i_k].re.abs() {
            return Err(FlowError::AssertionFailure(format!(
                "layer {layer}: |Re z0[{j_k}]| <= |Re z0[{i_k}]|"
            )));
        }
    }
    Ok(AdmissibleTriple {
        matrix: a,
        systems,
        seed_coords: z0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    fn generic_torus() -> GluedSurface {
        samples::marked_torus(
            Complex::new(1.03, 0.21),
            Complex::new(0.73, -0.61),
            Complex::new(0.17, -0.83),
        )
        .unwrap()
    }

    #[test]
    fn horizontal_length_is_abs_re() {
        let e = EdgeVector {
            edge: 0,
            value: Complex::new(3.0, 4.0),
        };
        assert_eq!(horizontal_length(&e), 3.0);
        let v = EdgeVector {
            edge: 1,
            value: Complex::new(0.0, 5.0),
        };
        assert_eq!(horizontal_length(&v), 0.0);
        let w = EdgeVector {
            edge: 2,
            value: Complex::new(-2.0, 1.0),
        };
        assert_eq!(horizontal_length(&w), 2.0);
    }

    #[test]
    fn special_position_of_vertical_cylinder_edge() {
        // Re(z) = 0 makes the cylinder circle vertical.
        let s = samples::marked_torus(
            Complex::new(1.0, 0.2),
            Complex::new(0.0, -1.0),
            Complex::new(-0.3, -0.9),
        )
        .unwrap();
        assert!(detect_special_position(&s, 5.0).unwrap());
    }

    #[test]
    fn generic_marked_torus_is_not_special() {
        assert!(!detect_special_position(&generic_torus(), 6.0).unwrap());
    }

    #[test]
    fn good_triangulation_of_generic_torus() {
        let s = generic_torus();
        let ot = good_triangulate(&s).unwrap();
        assert_eq!(ot.surface.triangles.len(), 4);
        assert_eq!(ot.surface.edge_count(), 7);
        assert_eq!(ot.boundary_count, 2);
        for t in 0..4 {
            for k in 0..3 {
                assert!(ot.surface.side_vector(t, k).re.abs() > 1e-12, "not good");
            }
        }
        for e in ot.boundary_count..7 {
            let (j, _) = ot.supporter[e].expect("interior edge has a supporter");
            assert!(j < e, "supporter order must be well-founded");
        }
        assert!((ot.surface.total_area() - s.total_area()).abs() < 1e-9);
    }

    #[test]
    fn good_triangulation_of_doubled_triangle() {
        let mut r = samples::rng(11);
        let s = samples::random_doubled_polygon(&mut r, 3);
        let ot = good_triangulate(&s).unwrap();
        assert_eq!(ot.surface.triangles.len(), 2);
        assert_eq!(ot.surface.edge_count(), 5);
        assert!((ot.surface.total_area() - s.total_area()).abs() < 1e-9);
    }

    #[test]
    fn admissible_triple_of_generic_torus() {
        let triple = admissible_triple(&generic_torus()).unwrap();
        assert_eq!(triple.systems.primary.len(), 3);
        assert_eq!(triple.systems.auxiliary.len(), 2);
        assert_eq!(triple.systems.k_start, 2);
    }

    #[test]
    fn first_hit_on_two_cylinder_torus() {
        // Sweeping from the marked segment of a generic torus hits a vertex.
        let s = generic_torus();
        let hit = first_hit(&s, 0, SweepSide::Up)
            .or_else(|_| first_hit(&s, 0, SweepSide::Down))
            .unwrap();
        assert!(hit.time > 0.0);
        assert!(hit.hit_vertex < 2);
    }
}

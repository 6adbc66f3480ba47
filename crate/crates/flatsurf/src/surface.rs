//! Flat surfaces with cone singularities, represented as Euclidean triangles
//! glued along edges carrying complex coordinates.
//!
//! A surface is stored as a list of counterclockwise triangles whose sides
//! reference directed geometric edges, a list of boundary pairs identifying
//! slit copies of forest edges up to a rotation, and one complex coordinate
//! per geometric edge. All developments fix the parallel field to the
//! constant vertical direction `(0, 1)`, so an edge coordinate is the same
//! complex number in every triangle that contains the edge.

use crate::error::SurfaceError;
use crate::geom::{corner_angle, dist_to_multiples, signed_area, Complex, Tol, UnionFind, TAU};
use crate::linsys::{AdmissibleMatrix, Row};

/// A labeled topological tree of the erasing forest. Vertex labels index
/// into [`AngleData::angles`]. An isolated singular point is a tree with one
/// vertex and no edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl Tree {
    pub fn point(v: usize) -> Self {
        Tree {
            vertices: vec![v],
            edges: Vec::new(),
        }
    }

    pub fn path(vertices: &[usize]) -> Self {
        Tree {
            vertices: vertices.to_vec(),
            edges: vertices.windows(2).map(|w| (w[0], w[1])).collect(),
        }
    }

    fn is_tree(&self) -> bool {
        if self.edges.len() + 1 != self.vertices.len() {
            return false;
        }
        let index = |v: usize| self.vertices.iter().position(|&x| x == v);
        let mut uf = UnionFind::new(self.vertices.len());
        for &(u, v) in &self.edges {
            match (index(u), index(v)) {
                (Some(i), Some(j)) if i != j => {
                    if uf.find(i) == uf.find(j) {
                        return false; // cycle
                    }
                    uf.union(i, j);
                }
                _ => return false,
            }
        }
        (1..self.vertices.len()).all(|i| uf.find(i) == uf.find(0))
    }
}

/// Combinatorial data of a stratum: genus, cone angles, and the topology of
/// the erasing forest.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleData {
    pub genus: usize,
    /// Cone angles in radians, one per singular point.
    pub angles: Vec<f64>,
    /// Disjoint labeled trees whose vertex sets partition `0..angles.len()`.
    pub forest: Vec<Tree>,
}

impl AngleData {
    pub fn new(genus: usize, angles: Vec<f64>, forest: Vec<Tree>) -> Result<Self, SurfaceError> {
        let data = AngleData {
            genus,
            angles,
            forest,
        };
        data.check()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.angles.len()
    }

    pub fn m(&self) -> usize {
        self.forest.len()
    }

    /// Number of forest edges, `n - m`.
    pub fn forest_edge_count(&self) -> usize {
        self.n() - self.m()
    }

    /// Gauss-Bonnet value `(2g + n - 2) * 2pi` the angles must sum to.
    pub fn gauss_bonnet(&self) -> f64 {
        (2.0 * self.genus as f64 + self.n() as f64 - 2.0) * TAU
    }

    /// True when every cone angle is a multiple of `2pi` (the translation
    /// surface case, where the kernel gains one dimension).
    pub fn all_angles_integral(&self) -> bool {
        self.angles
            .iter()
            .all(|&a| dist_to_multiples(a, TAU) < 1e-9 * (1.0 + a.abs()))
    }

    pub fn check(&self) -> Result<(), SurfaceError> {
        let n = self.n();
        if n == 0 || self.forest.is_empty() {
            return Err(SurfaceError::BadData(
                "need at least one singular point and one tree".into(),
            ));
        }
        if self.angles.iter().any(|&a| a <= 0.0) {
            return Err(SurfaceError::BadData("cone angles must be positive".into()));
        }
        let sum: f64 = self.angles.iter().sum();
        let want = self.gauss_bonnet();
        if (sum - want).abs() > 1e-9 * (1.0 + want.abs()) {
            return Err(SurfaceError::BadData(format!(
                "angle sum {sum:.12} violates Gauss-Bonnet value {want:.12}"
            )));
        }
        let mut seen = vec![false; n];
        for tree in &self.forest {
            if !tree.is_tree() {
                return Err(SurfaceError::BadData(
                    "forest entry is not a tree on its vertex set".into(),
                ));
            }
            for &v in &tree.vertices {
                if v >= n || seen[v] {
                    return Err(SurfaceError::BadData(format!(
                        "vertex label {v} is out of range or repeated"
                    )));
                }
                seen[v] = true;
            }
            // Erasing condition: a loop around a whole tree has rotation
            // equal to the sum of its cone angles modulo 2pi.
            let tree_sum: f64 = tree.vertices.iter().map(|&v| self.angles[v]).sum();
            if dist_to_multiples(tree_sum, TAU) > 1e-9 * (1.0 + tree_sum) {
                return Err(SurfaceError::BadData(format!(
                    "tree angle sum {tree_sum:.12} is not a multiple of 2*pi"
                )));
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(SurfaceError::BadData(
                "forest does not cover every singular point".into(),
            ));
        }
        Ok(())
    }
}

/// A directed occurrence of a geometric edge as the side of a triangle.
/// `positive` means the side traverses the edge along its own orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedEdge {
    pub edge: usize,
    pub positive: bool,
}

impl SignedEdge {
    pub fn new(edge: usize, positive: bool) -> Self {
        SignedEdge { edge, positive }
    }

    pub fn sign(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }
}

/// A counterclockwise triangle; side `k` runs from corner `k` to corner
/// `k + 1 (mod 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle(pub [SignedEdge; 3]);

/// Identification of two slit-boundary edges arising from one forest edge:
/// `sign_a * z_a + sign_b * e^{i theta} * z_b = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPair {
    pub a: usize,
    pub sign_a: i8,
    pub b: usize,
    pub sign_b: i8,
    pub theta: f64,
}

impl BoundaryPair {
    pub fn residual(&self, za: Complex, zb: Complex) -> f64 {
        (self.sign_a as f64 * za + self.sign_b as f64 * Complex::from_polar(1.0, self.theta) * zb)
            .norm()
    }
}

/// A complex edge coordinate together with the directed edge it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeVector {
    pub edge: usize,
    pub value: Complex,
}

/// Residuals and topological flags reported by [`GluedSurface::validate`].
#[derive(Debug, Clone)]
pub struct SurfaceDiagnostics {
    pub closure_residuals: Vec<f64>,
    pub pairing_residuals: Vec<f64>,
    /// Per singular point, `|computed cone angle - declared angle|`.
    pub angle_errors: Vec<f64>,
    pub area: f64,
    pub connected: bool,
    pub manifold: bool,
    pub oriented: bool,
    pub tol: Tol,
}

impl SurfaceDiagnostics {
    pub fn pass(&self) -> bool {
        let t = self.tol.abs();
        self.connected
            && self.manifold
            && self.oriented
            && self.area > 0.0
            && self.closure_residuals.iter().all(|&r| r <= t)
            && self.pairing_residuals.iter().all(|&r| r <= t)
            && self.angle_errors.iter().all(|&r| r <= angle_tol())
    }
}

fn angle_tol() -> f64 {
    1e-8
}

/// A flat surface with cone singularities realized by glued triangles.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedSurface {
    pub data: AngleData,
    /// One coordinate per geometric edge.
    pub coords: Vec<Complex>,
    pub triangles: Vec<Triangle>,
    pub pairs: Vec<BoundaryPair>,
    /// `(tail label, head label)` per geometric edge; labels index angles.
    pub edge_vertices: Vec<(usize, usize)>,
}

/// Where a geometric edge occurs: triangle sides and boundary-pair slots.
#[derive(Debug, Clone, Default)]
pub struct EdgeOccurrences {
    /// `(triangle, side, positive)` entries.
    pub sides: Vec<(usize, usize, bool)>,
    /// `(pair index, slot)` entries, slot 0 for `a`, 1 for `b`.
    pub pair_slots: Vec<(usize, usize)>,
}

impl GluedSurface {
    /// Construct from explicit parts and validate every invariant.
    pub fn new(
        data: AngleData,
        coords: Vec<Complex>,
        triangles: Vec<Triangle>,
        pairs: Vec<BoundaryPair>,
        edge_vertices: Vec<(usize, usize)>,
    ) -> Result<Self, SurfaceError> {
        data.check()?;
        let s = GluedSurface {
            data,
            coords,
            triangles,
            pairs,
            edge_vertices,
        };
        let diag = s.validate();
        if !diag.pass() {
            return Err(s.first_failure(&diag));
        }
        Ok(s)
    }

    pub fn edge_count(&self) -> usize {
        self.coords.len()
    }

    pub fn tol(&self) -> Tol {
        Tol::for_coords(&self.coords)
    }

    /// Side vector of triangle `t`, side `k`, in the triangle's own frame.
    pub fn side_vector(&self, t: usize, k: usize) -> Complex {
        let se = self.triangles[t].0[k];
        self.coords[se.edge] * se.sign()
    }

    /// Developed corners of triangle `t` in its own vertical-field-aligned
    /// frame, corner 0 at the origin.
    pub fn corners(&self, t: usize) -> [Complex; 3] {
        let v0 = self.side_vector(t, 0);
        let v1 = self.side_vector(t, 1);
        [Complex::new(0.0, 0.0), v0, v0 + v1]
    }

    /// Vertex label at corner `k` of triangle `t` (the tail of side `k`).
    pub fn corner_label(&self, t: usize, k: usize) -> usize {
        let se = self.triangles[t].0[k];
        let (tail, head) = self.edge_vertices[se.edge];
        if se.positive {
            tail
        } else {
            head
        }
    }

    /// Interior angle at corner `k` of triangle `t`.
    pub fn corner_angle(&self, t: usize, k: usize) -> f64 {
        let incoming = self.side_vector(t, (k + 2) % 3);
        let outgoing = self.side_vector(t, k);
        corner_angle(incoming, outgoing)
    }

    pub fn occurrences(&self) -> Vec<EdgeOccurrences> {
        let mut occ = vec![EdgeOccurrences::default(); self.edge_count()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for (k, se) in tri.0.iter().enumerate() {
                occ[se.edge].sides.push((t, k, se.positive));
            }
        }
        for (p, pair) in self.pairs.iter().enumerate() {
            occ[pair.a].pair_slots.push((p, 0));
            occ[pair.b].pair_slots.push((p, 1));
        }
        occ
    }

    /// Edges on the slit boundary (those referenced by boundary pairs).
    pub fn boundary_edges(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .pairs
            .iter()
            .flat_map(|p| [p.a, p.b])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Sum of unsigned triangle areas.
    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| signed_area(self.side_vector(t, 0), self.side_vector(t, 1)).abs())
            .sum()
    }

    /// Total length of the erasing forest, one term per forest edge.
    pub fn forest_length(&self) -> f64 {
        self.pairs.iter().map(|p| self.coords[p.a].norm()).sum()
    }

    /// Lengths of the individual forest edges.
    pub fn forest_edge_lengths(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| self.coords[p.a].norm()).collect()
    }

    /// Cone angle at each singular point, as `(label, angle)` sorted by label.
    pub fn cone_angles(&self) -> Vec<(usize, f64)> {
        let mut sums = vec![0.0; self.data.n()];
        for t in 0..self.triangles.len() {
            for k in 0..3 {
                sums[self.corner_label(t, k)] += self.corner_angle(t, k);
            }
        }
        sums.into_iter().enumerate().collect()
    }

    /// Full invariant report. Never fails; failures are encoded in the
    /// diagnostics.
    pub fn validate(&self) -> SurfaceDiagnostics {
        let tol = self.tol();
        let closure_residuals: Vec<f64> = self
            .triangles
            .iter()
            .enumerate()
            .map(|(t, _)| {
                (self.side_vector(t, 0) + self.side_vector(t, 1) + self.side_vector(t, 2)).norm()
            })
            .collect();
        let pairing_residuals: Vec<f64> = self
            .pairs
            .iter()
            .map(|p| p.residual(self.coords[p.a], self.coords[p.b]))
            .collect();

        let mut manifold = self.edge_vertices.len() == self.edge_count()
            && !self.coords.iter().any(|z| z.norm() == 0.0);
        let mut oriented = true;
        for occ in self.occurrences() {
            let total = occ.sides.len() + occ.pair_slots.len();
            if total != 2 || occ.sides.is_empty() {
                manifold = false;
            }
            if occ.sides.len() == 2 && occ.sides[0].2 == occ.sides[1].2 {
                oriented = false;
            }
        }
        for t in 0..self.triangles.len() {
            if signed_area(self.side_vector(t, 0), self.side_vector(t, 1)) <= 0.0 {
                oriented = false;
            }
            // Corner chaining: the head label of side k is the tail label of
            // side k+1.
            for k in 0..3 {
                let se = self.triangles[t].0[k];
                let (tail, head) = self.edge_vertices[se.edge];
                let head_label = if se.positive { head } else { tail };
                if head_label != self.corner_label(t, (k + 1) % 3) {
                    manifold = false;
                }
            }
        }

        let connected = self.is_connected();

        let mut angle_errors = vec![f64::INFINITY; self.data.n()];
        if manifold {
            for (label, got) in self.cone_angles() {
                angle_errors[label] = (got - self.data.angles[label]).abs();
            }
        }

        SurfaceDiagnostics {
            closure_residuals,
            pairing_residuals,
            angle_errors,
            area: self.total_area(),
            connected,
            manifold,
            oriented,
            tol,
        }
    }

    fn is_connected(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let occ = self.occurrences();
        let mut uf = UnionFind::new(self.triangles.len());
        for o in &occ {
            for w in o.sides.windows(2) {
                uf.union(w[0].0, w[1].0);
            }
        }
        for pair in &self.pairs {
            if let (Some(sa), Some(sb)) = (occ[pair.a].sides.first(), occ[pair.b].sides.first()) {
                uf.union(sa.0, sb.0);
            }
        }
        (0..self.triangles.len()).all(|t| uf.find(t) == uf.find(0))
    }

    fn first_failure(&self, diag: &SurfaceDiagnostics) -> SurfaceError {
        if let Some(e) = self.coords.iter().position(|z| z.norm() == 0.0) {
            return SurfaceError::ZeroCoordinate(e);
        }
        for (occ_index, occ) in self.occurrences().iter().enumerate() {
            let total = occ.sides.len() + occ.pair_slots.len();
            if total != 2 || occ.sides.is_empty() {
                return SurfaceError::NonManifoldGluing {
                    edge: occ_index,
                    count: total,
                };
            }
            if occ.sides.len() == 2 && occ.sides[0].2 == occ.sides[1].2 {
                return SurfaceError::NonOrientableGluing(occ_index);
            }
        }
        for (t, &r) in diag.closure_residuals.iter().enumerate() {
            if r > diag.tol.abs() {
                return SurfaceError::BadData(format!("triangle {t} closure residual {r:.3e}"));
            }
        }
        for t in 0..self.triangles.len() {
            let a = signed_area(self.side_vector(t, 0), self.side_vector(t, 1));
            if a <= 0.0 {
                return SurfaceError::DegenerateTriangle(t, a);
            }
        }
        for (p, &r) in diag.pairing_residuals.iter().enumerate() {
            if r > diag.tol.abs() {
                return SurfaceError::BadData(format!("boundary pair {p} residual {r:.3e}"));
            }
        }
        if !diag.connected {
            return SurfaceError::Disconnected;
        }
        for (label, &err) in diag.angle_errors.iter().enumerate() {
            if err > angle_tol() {
                return SurfaceError::AngleMismatch(format!(
                    "vertex {label}: angle error {err:.3e}"
                ));
            }
        }
        SurfaceError::BadData("validation failed".into())
    }
}

/// Realize the surface encoded by an admissible matrix at a kernel vector:
/// build one triangle per ordinary row, glue sides sharing a coordinate, and
/// identify slit edges along exceptional rows. Vertex labels are recovered
/// by matching the glued cone points against the stratum data.
pub fn build_surface(
    matrix: &AdmissibleMatrix,
    coords: &[Complex],
) -> Result<GluedSurface, SurfaceError> {
    if coords.len() != matrix.n_cols() {
        return Err(SurfaceError::BadData(format!(
            "expected {} coordinates, got {}",
            matrix.n_cols(),
            coords.len()
        )));
    }
    let tol = Tol::for_coords(coords);
    if let Some(e) = coords.iter().position(|z| z.norm() <= tol.abs()) {
        return Err(SurfaceError::ZeroCoordinate(e));
    }
    let residual = matrix.residual(coords);
    if residual > tol.abs() * 10.0 {
        return Err(SurfaceError::NotInKernel(residual));
    }

    let mut triangles = Vec::new();
    let mut pairs = Vec::new();
    for row in matrix.rows() {
        match row {
            Row::Ordinary { entries } => {
                let mut sides = [
                    SignedEdge::new(entries[0].0, entries[0].1 > 0),
                    SignedEdge::new(entries[1].0, entries[1].1 > 0),
                    SignedEdge::new(entries[2].0, entries[2].1 > 0),
                ];
                let v = |se: SignedEdge| coords[se.edge] * se.sign();
                if signed_area(v(sides[0]), v(sides[1])) < 0.0 {
                    sides.swap(1, 2);
                }
                let area = signed_area(v(sides[0]), v(sides[1]));
                if area <= tol.abs() * tol.abs() {
                    return Err(SurfaceError::DegenerateTriangle(triangles.len(), area));
                }
                triangles.push(Triangle(sides));
            }
            Row::Exceptional {
                a,
                sign_a,
                b,
                sign_b,
                theta,
            } => pairs.push(BoundaryPair {
                a: *a,
                sign_a: *sign_a,
                b: *b,
                sign_b: *sign_b,
                theta: *theta,
            }),
        }
    }

    let edge_vertices = recover_vertex_labels(
        &matrix.stratum,
        coords,
        &triangles,
        &pairs,
    )?;

    GluedSurface::new(
        matrix.stratum.clone(),
        coords.to_vec(),
        triangles,
        pairs,
        edge_vertices,
    )
}

/// Identify triangle corners into cone points via union-find over gluings,
/// then match the resulting labeled forest against the declared stratum.
fn recover_vertex_labels(
    data: &AngleData,
    coords: &[Complex],
    triangles: &[Triangle],
    pairs: &[BoundaryPair],
) -> Result<Vec<(usize, usize)>, SurfaceError> {
    let n_corners = 3 * triangles.len();
    let corner_id = |t: usize, k: usize| 3 * t + k;
    let mut uf = UnionFind::new(n_corners);

    // Occurrences per edge.
    let mut occ: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); coords.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for (k, se) in tri.0.iter().enumerate() {
            occ[se.edge].push((t, k, se.positive));
        }
    }

    // Tail/head corners of an edge occurrence in triangle terms: side k runs
    // from corner k to corner k+1; a negative traversal puts the edge tail at
    // corner k+1.
    let tail_corner = |(t, k, pos): (usize, usize, bool)| {
        if pos {
            corner_id(t, k)
        } else {
            corner_id(t, (k + 1) % 3)
        }
    };
    let head_corner = |(t, k, pos): (usize, usize, bool)| {
        if pos {
            corner_id(t, (k + 1) % 3)
        } else {
            corner_id(t, k)
        }
    };

    for slots in &occ {
        match slots.len() {
            1 => {} // slit boundary edge, identified through a pair below
            2 => {
                if slots[0].2 == slots[1].2 {
                    return Err(SurfaceError::NonOrientableGluing(
                        triangles[slots[0].0].0[slots[0].1].edge,
                    ));
                }
                uf.union(tail_corner(slots[0]), tail_corner(slots[1]));
                uf.union(head_corner(slots[0]), head_corner(slots[1]));
            }
            c => {
                return Err(SurfaceError::NonManifoldGluing {
                    edge: if let Some(s) = slots.first() {
                        triangles[s.0].0[s.1].edge
                    } else {
                        usize::MAX
                    },
                    count: c,
                })
            }
        }
    }

    for pair in pairs {
        let (sa, sb) = match (occ[pair.a].as_slice(), occ[pair.b].as_slice()) {
            ([sa], [sb]) => (*sa, *sb),
            _ => {
                return Err(SurfaceError::NonManifoldGluing {
                    edge: pair.a,
                    count: occ[pair.a].len() + occ[pair.b].len(),
                })
            }
        };
        // Directed copies per the pair equation: the `sign`-directed version
        // of a maps onto the reversed directed version of b.
        let a_dir = |c: (usize, usize, bool), positive: bool| {
            if positive {
                (tail_corner(c), head_corner(c))
            } else {
                (head_corner(c), tail_corner(c))
            }
        };
        let (a_tail, a_head) = a_dir(sa, pair.sign_a > 0);
        let (b_tail, b_head) = a_dir(sb, pair.sign_b > 0);
        uf.union(a_tail, b_head);
        uf.union(a_head, b_tail);
    }

    // Cone angle per corner class.
    let corner_angle_of = |t: usize, k: usize| {
        let se = triangles[t].0[k];
        let prev = triangles[t].0[(k + 2) % 3];
        let outgoing = coords[se.edge] * se.sign();
        let incoming = coords[prev.edge] * prev.sign();
        corner_angle(incoming, outgoing)
    };
    let mut class_angle = std::collections::BTreeMap::<usize, f64>::new();
    for t in 0..triangles.len() {
        for k in 0..3 {
            *class_angle.entry(uf.find(corner_id(t, k))).or_insert(0.0) +=
                corner_angle_of(t, k);
        }
    }

    // Class-level forest graph: one edge per boundary pair.
    let mut class_graph_edges: Vec<(usize, usize)> = Vec::new();
    for pair in pairs {
        let sa = occ[pair.a][0];
        let u = uf.find(tail_corner(sa));
        let v = uf.find(head_corner(sa));
        class_graph_edges.push((u, v));
    }

    let assignment = match_classes_to_labels(data, &class_angle, &class_graph_edges)?;

    // Edge endpoint labels.
    let mut edge_vertices = vec![(usize::MAX, usize::MAX); coords.len()];
    for (e, slots) in occ.iter().enumerate() {
        let s = slots[0];
        let tail = assignment[&uf.find(tail_corner(s))];
        let head = assignment[&uf.find(head_corner(s))];
        edge_vertices[e] = (tail, head);
    }
    Ok(edge_vertices)
}

/// Match cone-point classes to declared labels: angles must agree and the
/// class-level forest must realize the declared trees. Returns a map from
/// class representative to label.
fn match_classes_to_labels(
    data: &AngleData,
    class_angle: &std::collections::BTreeMap<usize, f64>,
    class_edges: &[(usize, usize)],
) -> Result<std::collections::BTreeMap<usize, usize>, SurfaceError> {
    let classes: Vec<usize> = class_angle.keys().copied().collect();
    if classes.len() != data.n() {
        return Err(SurfaceError::AngleMismatch(format!(
            "surface has {} cone points, stratum declares {}",
            classes.len(),
            data.n()
        )));
    }
    // Adjacency between classes (forest edges).
    let mut class_adj: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for &c in &classes {
        class_adj.insert(c, Vec::new());
    }
    for &(u, v) in class_edges {
        class_adj.get_mut(&u).ok_or_else(bad_class)?.push(v);
        class_adj.get_mut(&v).ok_or_else(bad_class)?.push(u);
    }
    let mut label_adj: Vec<Vec<usize>> = vec![Vec::new(); data.n()];
    for tree in &data.forest {
        for &(u, v) in &tree.edges {
            label_adj[u].push(v);
            label_adj[v].push(u);
        }
    }

    // Backtracking assignment, classes in fixed order.
    let mut assignment = std::collections::BTreeMap::<usize, usize>::new();
    let mut used = vec![false; data.n()];
    if assign(
        data,
        class_angle,
        &class_adj,
        &label_adj,
        &classes,
        0,
        &mut assignment,
        &mut used,
    ) {
        Ok(assignment)
    } else {
        Err(SurfaceError::AngleMismatch(
            "no labeling matches the declared angles and forest topology".into(),
        ))
    }
}

fn bad_class() -> SurfaceError {
    SurfaceError::BadData("boundary pair touches an unknown cone point".into())
}

#[allow(clippy::too_many_arguments)]
fn assign(
    data: &AngleData,
    class_angle: &std::collections::BTreeMap<usize, f64>,
    class_adj: &std::collections::BTreeMap<usize, Vec<usize>>,
    label_adj: &[Vec<usize>],
    classes: &[usize],
    i: usize,
    assignment: &mut std::collections::BTreeMap<usize, usize>,
    used: &mut [bool],
) -> bool {
    if i == classes.len() {
        return true;
    }
    let c = classes[i];
    let angle = class_angle[&c];
    for label in 0..data.n() {
        if used[label] || (data.angles[label] - angle).abs() > angle_tol() {
            continue;
        }
        // Degree must match, and already-assigned neighbors must be adjacent
        // labels.
        let neighbors = &class_adj[&c];
        if neighbors.len() != label_adj[label].len() {
            continue;
        }
        let ok = neighbors.iter().all(|nb| match assignment.get(nb) {
            Some(&nl) => label_adj[label].contains(&nl),
            None => true,
        });
        if !ok {
            continue;
        }
        assignment.insert(c, label);
        used[label] = true;
        if assign(
            data,
            class_angle,
            class_adj,
            label_adj,
            classes,
            i + 1,
            assignment,
            used,
        ) {
            return true;
        }
        assignment.remove(&c);
        used[label] = false;
    }
    false
}

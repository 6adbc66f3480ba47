//! Distances between singular points, the separation function over
//! essential subsets, geodesic tree and forest construction with the
//! quadrupling length bounds, and the separation-versus-area bound.
//!
//! Distances are computed from saddle connections (vertex-to-vertex
//! geodesic segments) closed under concatenation through singular points.
//! Paths used while growing trees are chains of saddle connections that do
//! not cross the edges already laid down.

use crate::error::ForestError;
use crate::geom::{dist_to_multiples, Complex, TAU};
use crate::mesh::{trace_segment, traces_cross, Connection, CrossPolicy, Mesh, TracePiece};
use crate::surface::GluedSurface;

/// Largest singular-point count for subset enumeration.
pub const MAX_SUBSET_POINTS: usize = 16;

const NODE_LIMIT: usize = 4_000_000;

/// A geodesic segment between singular points with none in its interior.
#[derive(Debug, Clone)]
pub struct SaddleConnection {
    pub displacement: Complex,
    pub endpoints: (usize, usize),
    pub length: f64,
}

/// Symmetric matrix of flat distances between singular points.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn max(&self) -> f64 {
        self.d
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Per-subset separation data.
#[derive(Debug, Clone)]
pub struct DeltaEntry {
    /// Subset of singular-point labels.
    pub subset: Vec<usize>,
    /// Minimal distance from the subset to its complement.
    pub delta_i: f64,
    /// Diameter of the subset.
    pub diam_i: f64,
    /// `delta_i` when `delta_i >= 3 diam_i`, else zero.
    pub delta_plus: f64,
    /// Whether the subset's angle sum is not a multiple of `2 pi`.
    pub essential: bool,
}

/// Separation report: all proper nonempty subsets, and the maximum of
/// `delta_plus` over essential subsets.
#[derive(Debug, Clone)]
pub struct DeltaReport {
    pub entries: Vec<DeltaEntry>,
    pub delta: f64,
}

/// An edge of a geodesic tree: a saddle connection with its developed trace.
#[derive(Debug, Clone)]
pub struct TreeEdge {
    pub endpoints: (usize, usize),
    pub length: f64,
    pub(crate) trace: Vec<TracePiece>,
}

/// A geodesic tree on the surface with its growth history.
#[derive(Debug, Clone)]
pub struct GeodesicTree {
    pub vertices: Vec<usize>,
    pub edges: Vec<TreeEdge>,
    /// Metrics recorded after every growth step; the last entry describes
    /// the final tree.
    pub step_trace: Vec<TreeMetrics>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeMetrics {
    pub edge_count: usize,
    pub max_edge: f64,
    pub diameter: f64,
    pub separation: f64,
    pub length: f64,
}

impl GeodesicTree {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn max_edge(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }

    pub fn diameter(&self, d: &DistanceMatrix) -> f64 {
        let mut m = 0.0f64;
        for &i in &self.vertices {
            for &j in &self.vertices {
                m = m.max(d.get(i, j));
            }
        }
        m
    }

    pub fn separation(&self, d: &DistanceMatrix) -> f64 {
        let mut m = f64::INFINITY;
        for &i in &self.vertices {
            for j in 0..d.n() {
                if !self.vertices.contains(&j) {
                    m = m.min(d.get(i, j));
                }
            }
        }
        if m.is_finite() {
            m
        } else {
            0.0
        }
    }

    /// The four goodness conditions at separation scale `delta`.
    pub fn is_good(&self, surface: &GluedSurface, d: &DistanceMatrix, delta: f64) -> bool {
        let n = surface.data.n();
        if self.edges.is_empty() {
            let v = self.vertices[0];
            return dist_to_multiples(surface.data.angles[v], TAU) < 1e-9;
        }
        let k = self.edge_count();
        let bound = 4f64.powi(k as i32 - 1) * delta;
        let angle_sum: f64 = self.vertices.iter().map(|&v| surface.data.angles[v]).sum();
        let covers = self.vertices.len() == n;
        let slack = 1e-9 * (1.0 + bound);
        self.max_edge() <= bound + slack
            && self.diameter(d) <= bound + slack
            && dist_to_multiples(angle_sum, TAU) < 1e-9 * (1.0 + angle_sum)
            && (covers || self.separation(d) >= 3.0 * bound - slack)
    }
}

/// Disjoint good trees covering every singular point.
#[derive(Debug, Clone)]
pub struct GoodForest {
    pub trees: Vec<GeodesicTree>,
    pub delta: f64,
}

impl GoodForest {
    pub fn total_length(&self) -> f64 {
        self.trees.iter().map(|t| t.length()).sum()
    }
}

// ---------------------------------------------------------------------------
// Connection context with lazy radius doubling
// ---------------------------------------------------------------------------

pub(crate) struct ConnCtx<'a> {
    pub mesh: Mesh<'a>,
    pub radius: f64,
    pub conns: Vec<Connection>,
    traces: Vec<Option<Vec<TracePiece>>>,
}

impl<'a> ConnCtx<'a> {
    pub fn new(surface: &'a GluedSurface) -> Result<Self, ForestError> {
        let mesh = Mesh::new(surface, CrossPolicy::Closed);
        let radius = surface
            .coords
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            * 1.5;
        let mut ctx = ConnCtx {
            mesh,
            radius,
            conns: Vec::new(),
            traces: Vec::new(),
        };
        ctx.refresh()?;
        Ok(ctx)
    }

    fn refresh(&mut self) -> Result<(), ForestError> {
        self.conns = crate::mesh::enumerate_connections(&self.mesh, self.radius, NODE_LIMIT)?;
        self.traces = vec![None; self.conns.len()];
        Ok(())
    }

    pub fn extend_radius(&mut self) -> Result<(), ForestError> {
        self.radius *= 2.0;
        let scale = self
            .mesh
            .surface
            .coords
            .iter()
            .map(|z| z.norm())
            .fold(1.0f64, f64::max);
        if self.radius > 1e6 * scale {
            return Err(ForestError::ProcedureStall(
                "connection radius grew unreasonably".into(),
            ));
        }
        self.refresh()
    }

    pub fn trace(&mut self, idx: usize) -> Result<&[TracePiece], ForestError> {
        if self.traces[idx].is_none() {
            let c = &self.conns[idx];
            let t = trace_segment(&self.mesh, c.source, c.displacement)?;
            self.traces[idx] = Some(t);
        }
        Ok(self.traces[idx].as_ref().unwrap().as_slice())
    }

    /// Distance matrix by min-plus closure; `None` while some pair is
    /// unreachable at this radius.
    fn distances_at_radius(&self, n: usize) -> Option<DistanceMatrix> {
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for c in &self.conns {
            let (i, j) = (c.from, c.to);
            if c.length < d[i][j] {
                d[i][j] = c.length;
                d[j][i] = c.length;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        if d.iter().flatten().any(|x| !x.is_finite()) {
            return None;
        }
        Some(DistanceMatrix { d })
    }

    /// Exact distances: the radius doubles until every pair is connected and
    /// every optimal chain's segments fit inside the search radius.
    pub fn distances(&mut self, n: usize) -> Result<DistanceMatrix, ForestError> {
        loop {
            if let Some(d) = self.distances_at_radius(n) {
                if n == 1 || d.max() <= self.radius {
                    return Ok(d);
                }
            }
            self.extend_radius()?;
        }
    }

    /// Dijkstra over singular points from a source set, restricted to
    /// connections whose open interiors avoid every barrier trace. Returns
    /// the chain of connection indices reaching `target`.
    pub fn shortest_chain_avoiding(
        &mut self,
        sources: &[usize],
        target: usize,
        barriers: &[Vec<TracePiece>],
        max_len: f64,
    ) -> Result<Option<(f64, Vec<usize>)>, ForestError> {
        loop {
            let m = self.conns.len();
            let mut allowed = vec![true; m];
            for idx in 0..m {
                if self.conns[idx].length > max_len {
                    allowed[idx] = false;
                    continue;
                }
                if barriers.is_empty() {
                    continue;
                }
                let t = self.trace(idx)?.to_vec();
                if barriers.iter().any(|b| traces_cross(&self.mesh, &t, b)) {
                    allowed[idx] = false;
                }
            }
            let n = self.mesh.surface.data.n();
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut done = vec![false; n];
            for &s in sources {
                dist[s] = 0.0;
            }
            loop {
                let u = (0..n)
                    .filter(|&v| !done[v] && dist[v].is_finite())
                    .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap());
                let u = match u {
                    Some(u) => u,
                    None => break,
                };
                done[u] = true;
                for (idx, c) in self.conns.iter().enumerate() {
                    if !allowed[idx] {
                        continue;
                    }
                    let other = if c.from == u {
                        c.to
                    } else if c.to == u {
                        c.from
                    } else {
                        continue;
                    };
                    let nd = dist[u] + c.length;
                    if nd < dist[other] && nd <= max_len {
                        dist[other] = nd;
                        prev[other] = Some((u, idx));
                    }
                }
            }
            if dist[target].is_finite() {
                let mut chain = Vec::new();
                let mut v = target;
                while let Some((u, idx)) = prev[v] {
                    chain.push(idx);
                    v = u;
                }
                chain.reverse();
                return Ok(Some((dist[target], chain)));
            }
            if self.radius >= max_len {
                return Ok(None);
            }
            self.extend_radius()?;
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// All saddle connections of length at most `max_len`.
pub fn saddle_connections(
    surface: &GluedSurface,
    max_len: f64,
) -> Result<Vec<SaddleConnection>, ForestError> {
    let mesh = Mesh::new(surface, CrossPolicy::Closed);
    let conns = crate::mesh::enumerate_connections(&mesh, max_len, NODE_LIMIT)?;
    Ok(conns
        .into_iter()
        .map(|c| SaddleConnection {
            displacement: c.displacement,
            endpoints: (c.from, c.to),
            length: c.length,
        })
        .collect())
}

/// Distances between singular points induced by the flat metric.
pub fn singular_distances(surface: &GluedSurface) -> Result<DistanceMatrix, ForestError> {
    let mut ctx = ConnCtx::new(surface)?;
    ctx.distances(surface.data.n())
}

/// Separation report from explicit angles and distances.
pub fn delta_from_distances(
    angles: &[f64],
    d: &DistanceMatrix,
) -> Result<DeltaReport, ForestError> {
    let n = angles.len();
    if n > MAX_SUBSET_POINTS {
        return Err(ForestError::TooManySingularities {
            max: MAX_SUBSET_POINTS,
            got: n,
        });
    }
    if n < 2 {
        return Err(ForestError::NoEssentialSubset);
    }
    let mut entries = Vec::new();
    let mut delta = 0.0f64;
    let mut any_essential = false;
    for mask in 1u32..((1u32 << n) - 1) {
        let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let sum: f64 = subset.iter().map(|&i| angles[i]).sum();
        let essential = dist_to_multiples(sum, TAU) > 1e-9 * (1.0 + sum);
        let mut delta_i = f64::INFINITY;
        let mut diam_i = 0.0f64;
        for &i in &subset {
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    diam_i = diam_i.max(d.get(i, j));
                } else {
                    delta_i = delta_i.min(d.get(i, j));
                }
            }
        }
        let delta_plus = if delta_i >= 3.0 * diam_i { delta_i } else { 0.0 };
        if essential {
            any_essential = true;
            delta = delta.max(delta_plus);
        }
        entries.push(DeltaEntry {
            subset,
            delta_i,
            diam_i,
            delta_plus,
            essential,
        });
    }
    if !any_essential {
        return Err(ForestError::NoEssentialSubset);
    }
    Ok(DeltaReport { entries, delta })
}

/// Separation report of a surface.
pub fn delta(surface: &GluedSurface) -> Result<DeltaReport, ForestError> {
    let d = singular_distances(surface)?;
    delta_from_distances(&surface.data.angles, &d)
}

enum GrowOutcome {
    Good(GeodesicTree),
    NeedsJoin(GeodesicTree),
}

/// Grow a tree by the vertex-adding procedure until it is good or until its
/// connecting segments run into another tree.
fn vertex_add_loop(
    ctx: &mut ConnCtx,
    d: &DistanceMatrix,
    delta: f64,
    mut tree: GeodesicTree,
    others: &[GeodesicTree],
) -> Result<GrowOutcome, ForestError> {
    let n = ctx.mesh.surface.data.n();
    loop {
        let angles = ctx.mesh.surface.data.angles.clone();
        let k = tree.edge_count().max(1);
        let bound = 4f64.powi(k as i32 - 1) * delta;
        let angle_sum: f64 = tree.vertices.iter().map(|&v| angles[v]).sum();
        let essential = dist_to_multiples(angle_sum, TAU) > 1e-9 * (1.0 + angle_sum);
        let covers = tree.vertices.len() == n;
        if !essential && (covers || tree.separation(d) >= 3.0 * bound * (1.0 - 1e-12)) {
            return Ok(GrowOutcome::Good(tree));
        }
        if covers {
            return Err(ForestError::ProcedureStall(
                "tree covers all points but stays essential".into(),
            ));
        }

        // Nearest outside singular point.
        let (target, reach) = (0..n)
            .filter(|v| !tree.vertices.contains(v))
            .map(|v| {
                let dd = tree
                    .vertices
                    .iter()
                    .map(|&u| d.get(u, v))
                    .fold(f64::INFINITY, f64::min);
                (v, dd)
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .ok_or_else(|| ForestError::ProcedureStall("no outside vertex".into()))?;
        if reach > 3.0 * bound * (1.0 + 1e-9) {
            return Err(ForestError::ProcedureStall(format!(
                "nearest outside point at {reach:.6} exceeds the growth bound {:.6}",
                3.0 * bound
            )));
        }

        // If the unrestricted realizing chain crosses another tree, join.
        let other_barriers: Vec<Vec<TracePiece>> = others
            .iter()
            .flat_map(|t| t.edges.iter().map(|e| e.trace.clone()))
            .collect();
        if !others.is_empty() {
            let realizer =
                ctx.shortest_chain_avoiding(&tree.vertices, target, &[], reach * (1.0 + 1e-9))?;
            if let Some((_, chain)) = realizer {
                for idx in chain {
                    let t = ctx.trace(idx)?.to_vec();
                    if other_barriers
                        .iter()
                        .any(|b| traces_cross(&ctx.mesh, &t, b))
                    {
                        return Ok(GrowOutcome::NeedsJoin(tree));
                    }
                }
            }
        }

        // Shortest chain avoiding the tree itself and every other tree.
        let mut barriers: Vec<Vec<TracePiece>> =
            tree.edges.iter().map(|e| e.trace.clone()).collect();
        barriers.extend(other_barriers.iter().cloned());
        let path = ctx.shortest_chain_avoiding(
            &tree.vertices,
            target,
            &barriers,
            4.0 * bound * (1.0 + 1e-9),
        )?;
        let (_, chain) = match path {
            Some(p) => p,
            None => {
                if others.is_empty() {
                    return Err(ForestError::ProcedureStall(
                        "no admissible path to the nearest outside point".into(),
                    ));
                }
                return Ok(GrowOutcome::NeedsJoin(tree));
            }
        };

        // Append the chain; intermediate vertices of other trees force a join.
        let mut new_edges = Vec::new();
        let mut new_vertices = Vec::new();
        let mut at: Option<usize> = None;
        for &idx in &chain {
            let c = ctx.conns[idx].clone();
            let (u, v) = (c.from, c.to);
            let from = match at {
                None => {
                    if tree.vertices.contains(&u) {
                        u
                    } else {
                        v
                    }
                }
                Some(x) => x,
            };
            let to = if from == u { v } else { u };
            if to != target && others.iter().any(|t| t.vertices.contains(&to)) {
                return Ok(GrowOutcome::NeedsJoin(tree));
            }
            let trace = ctx.trace(idx)?.to_vec();
            new_edges.push(TreeEdge {
                endpoints: (from, to),
                length: c.length,
                trace,
            });
            new_vertices.push(to);
            at = Some(to);
        }
        tree.edges.extend(new_edges);
        for v in new_vertices {
            if !tree.vertices.contains(&v) {
                tree.vertices.push(v);
            }
        }
        let metrics = TreeMetrics {
            edge_count: tree.edge_count(),
            max_edge: tree.max_edge(),
            diameter: tree.diameter(d),
            separation: tree.separation(d),
            length: tree.length(),
        };
        tree.step_trace.push(metrics);
        let bound_now = 4f64.powi(tree.edge_count() as i32 - 1) * delta;
        if metrics.max_edge > bound_now * (1.0 + 1e-9)
            || metrics.diameter > bound_now * (1.0 + 1e-9)
        {
            return Err(ForestError::ProcedureStall(format!(
                "growth step violated the quadrupling bound: max {:.6} diam {:.6} bound {:.6}",
                metrics.max_edge, metrics.diameter, bound_now
            )));
        }
    }
}

/// Seed a one-edge tree at the shortest segment leaving an essential point
/// (or the given point).
fn seed_tree(
    ctx: &mut ConnCtx,
    d: &DistanceMatrix,
    from: Option<usize>,
) -> Result<GeodesicTree, ForestError> {
    let n = ctx.mesh.surface.data.n();
    let angles = ctx.mesh.surface.data.angles.clone();
    let essential_point = |v: usize| dist_to_multiples(angles[v], TAU) > 1e-9;
    let candidates: Vec<usize> = match from {
        Some(v) => vec![v],
        None => (0..n).filter(|&v| essential_point(v)).collect(),
    };
    if candidates.is_empty() {
        return Err(ForestError::NoEssentialSubset);
    }
    let (i, j, _) = candidates
        .iter()
        .flat_map(|&i| {
            (0..n)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, d.get(i, j)))
        })
        .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap())
        .ok_or_else(|| ForestError::ProcedureStall("no seed segment".into()))?;
    while !ctx
        .conns
        .iter()
        .any(|c| (c.from, c.to) == (i, j) || (c.from, c.to) == (j, i))
    {
        ctx.extend_radius()?;
    }
    let (idx, c) = ctx
        .conns
        .iter()
        .enumerate()
        .filter(|(_, c)| (c.from, c.to) == (i, j) || (c.from, c.to) == (j, i))
        .min_by(|a, b| a.1.length.partial_cmp(&b.1.length).unwrap())
        .map(|(idx, c)| (idx, c.clone()))
        .unwrap();
    let trace = ctx.trace(idx)?.to_vec();
    let metrics = TreeMetrics {
        edge_count: 1,
        max_edge: c.length,
        diameter: d.get(i, j),
        separation: 0.0,
        length: c.length,
    };
    Ok(GeodesicTree {
        vertices: vec![c.from, c.to],
        edges: vec![TreeEdge {
            endpoints: (c.from, c.to),
            length: c.length,
            trace,
        }],
        step_trace: vec![metrics],
    })
}

/// Build one good tree by the vertex-adding procedure.
pub fn build_good_tree(
    surface: &GluedSurface,
    report: &DeltaReport,
) -> Result<GeodesicTree, ForestError> {
    let mut ctx = ConnCtx::new(surface)?;
    let d = ctx.distances(surface.data.n())?;
    let tree = seed_tree(&mut ctx, &d, None)?;
    match vertex_add_loop(&mut ctx, &d, report.delta, tree, &[])? {
        GrowOutcome::Good(t) => Ok(t),
        GrowOutcome::NeedsJoin(_) => Err(ForestError::ProcedureStall(
            "single tree construction cannot need joining".into(),
        )),
    }
}

/// Join the grown tree with the existing trees its connecting path touches.
fn join_trees(
    ctx: &mut ConnCtx,
    d: &DistanceMatrix,
    delta: f64,
    grown: GeodesicTree,
    mut others: Vec<GeodesicTree>,
) -> Result<(GeodesicTree, Vec<GeodesicTree>), ForestError> {
    let k_l = grown.edge_count().max(1);
    let other_vertices: Vec<usize> = others.iter().flat_map(|t| t.vertices.clone()).collect();
    let barriers: Vec<Vec<TracePiece>> = others
        .iter()
        .chain(std::iter::once(&grown))
        .flat_map(|t| t.edges.iter().map(|e| e.trace.clone()))
        .collect();
    let k_other = others.iter().map(|t| t.edge_count()).max().unwrap_or(1);
    let max_total = 4f64.powi((k_l + k_other) as i32) * delta * 4.0;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for &t in &other_vertices {
        if let Some((len, chain)) =
            ctx.shortest_chain_avoiding(&grown.vertices, t, &barriers, max_total)?
        {
            match &best {
                Some((bl, _)) if *bl <= len => {}
                _ => best = Some((len, chain)),
            }
        }
    }
    let (_, chain) =
        best.ok_or_else(|| ForestError::ProcedureStall("no joining path between trees".into()))?;

    let mut merged = grown;
    let mut at: Option<usize> = None;
    for &idx in &chain {
        let c = ctx.conns[idx].clone();
        let (u, v) = (c.from, c.to);
        let from = match at {
            None => {
                if merged.vertices.contains(&u) {
                    u
                } else {
                    v
                }
            }
            Some(x) => x,
        };
        let to = if from == u { v } else { u };
        let trace = ctx.trace(idx)?.to_vec();
        merged.edges.push(TreeEdge {
            endpoints: (from, to),
            length: c.length,
            trace,
        });
        if !merged.vertices.contains(&to) {
            merged.vertices.push(to);
        }
        at = Some(to);
    }
    // Absorb every tree that now shares a vertex with the merged tree.
    let mut absorbed = true;
    while absorbed {
        absorbed = false;
        for i in 0..others.len() {
            if others[i]
                .vertices
                .iter()
                .any(|v| merged.vertices.contains(v))
            {
                let t = others.remove(i);
                merged.edges.extend(t.edges);
                for v in t.vertices {
                    if !merged.vertices.contains(&v) {
                        merged.vertices.push(v);
                    }
                }
                absorbed = true;
                break;
            }
        }
    }
    let metrics = TreeMetrics {
        edge_count: merged.edge_count(),
        max_edge: merged.max_edge(),
        diameter: merged.diameter(d),
        separation: merged.separation(d),
        length: merged.length(),
    };
    merged.step_trace.push(metrics);
    let bound = 4f64.powi(merged.edge_count() as i32 - 1) * delta;
    if metrics.max_edge > bound * (1.0 + 1e-9) || metrics.diameter > bound * (1.0 + 1e-9) {
        return Err(ForestError::ProcedureStall(
            "joined tree violates the quadrupling bound".into(),
        ));
    }
    Ok((merged, others))
}

/// Build a good forest: grow trees from essential points, joining trees when
/// connecting segments collide, until every point is covered or the
/// remainder consists of flat points taken as isolated trees.
pub fn build_good_forest(surface: &GluedSurface) -> Result<GoodForest, ForestError> {
    let report = delta(surface)?;
    let delta_val = report.delta;
    let mut ctx = ConnCtx::new(surface)?;
    let n = surface.data.n();
    let d = ctx.distances(n)?;

    let mut trees: Vec<GeodesicTree> = Vec::new();
    let mut guard = 4 * n + 8;
    loop {
        guard -= 1;
        if guard == 0 {
            return Err(ForestError::ProcedureStall(
                "forest construction did not terminate".into(),
            ));
        }
        let covered: Vec<usize> = trees.iter().flat_map(|t| t.vertices.clone()).collect();
        let seed_at = match (0..n).find(|v| {
            !covered.contains(v) && dist_to_multiples(surface.data.angles[*v], TAU) > 1e-9
        }) {
            Some(v) => v,
            None => break,
        };
        let seed = seed_tree(&mut ctx, &d, Some(seed_at))?;
        let seed_touches = trees.iter().any(|t| {
            t.vertices.contains(&seed.vertices[0])
                || t.vertices.contains(&seed.vertices[1])
                || t.edges
                    .iter()
                    .any(|e| traces_cross(&ctx.mesh, &e.trace, &seed.edges[0].trace))
        });
        let mut current = if seed_touches {
            GeodesicTree {
                vertices: vec![seed_at],
                edges: vec![],
                step_trace: vec![],
            }
        } else {
            seed
        };
        let mut inner_guard = 4 * n + 8;
        loop {
            inner_guard -= 1;
            if inner_guard == 0 {
                return Err(ForestError::ProcedureStall(
                    "tree growth did not terminate".into(),
                ));
            }
            if current.edges.is_empty() {
                // A bare seed point blocked by existing trees: join it in.
                let (merged, rest) = join_trees(&mut ctx, &d, delta_val, current, trees)?;
                current = merged;
                trees = rest;
            }
            match vertex_add_loop(&mut ctx, &d, delta_val, current, &trees)? {
                GrowOutcome::Good(t) => {
                    trees.push(t);
                    break;
                }
                GrowOutcome::NeedsJoin(t) => {
                    let (merged, rest) = join_trees(&mut ctx, &d, delta_val, t, trees)?;
                    current = merged;
                    trees = rest;
                }
            }
        }
    }
    let covered: Vec<usize> = trees.iter().flat_map(|t| t.vertices.clone()).collect();
    for v in 0..n {
        if !covered.contains(&v) {
            trees.push(GeodesicTree {
                vertices: vec![v],
                edges: vec![],
                step_trace: vec![],
            });
        }
    }
    Ok(GoodForest {
        trees,
        delta: delta_val,
    })
}

/// The separation-squared versus area bound with the explicit constant:
/// `alpha_0` is the smallest nonzero distance of a subset angle sum to a
/// multiple of pi, `eps_0 = min(1/6, sin(alpha_0)/4)/2`, and
/// `C = 1/(pi eps_0^2)`. Returns `(delta^2, C * area, pass)`.
pub fn area_delta_bound(surface: &GluedSurface) -> Result<(f64, f64, bool), ForestError> {
    let report = delta(surface)?;
    let n = surface.data.n();
    if n > MAX_SUBSET_POINTS {
        return Err(ForestError::TooManySingularities {
            max: MAX_SUBSET_POINTS,
            got: n,
        });
    }
    let mut alpha0 = f64::INFINITY;
    for mask in 1u32..(1u32 << n) {
        let sum: f64 = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| surface.data.angles[i])
            .sum();
        let dist = dist_to_multiples(sum, TAU / 2.0);
        if dist > 1e-9 * (1.0 + sum) {
            alpha0 = alpha0.min(dist);
        }
    }
    if !alpha0.is_finite() {
        return Err(ForestError::NoEssentialSubset);
    }
    let eps0 = (1.0f64 / 6.0).min(alpha0.sin() / 4.0) / 2.0;
    let c = 1.0 / (std::f64::consts::PI * eps0 * eps0);
    let lhs = report.delta * report.delta;
    let rhs = c * surface.total_area();
    Ok((lhs, rhs, lhs <= rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use approx::assert_relative_eq;

    fn equilateral() -> GluedSurface {
        let pts = [
            Complex::new(0.0, 0.0),
            Complex::new(1.0, 0.0),
            Complex::from_polar(1.0, TAU / 6.0),
        ];
        samples::doubled_polygon(&pts).unwrap()
    }

    #[test]
    fn distances_on_doubled_equilateral() {
        let d = singular_distances(&equilateral()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 };
                assert_relative_eq!(d.get(i, j), want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn distances_on_doubled_right_triangle() {
        // Doubling preserves side lengths as geodesics: 3-4-5 triangle.
        let pts = [
            Complex::new(0.0, 0.0),
            Complex::new(4.0, 0.0),
            Complex::new(0.0, 3.0),
        ];
        let s = samples::doubled_polygon(&pts).unwrap();
        let d = singular_distances(&s).unwrap();
        assert_relative_eq!(d.get(0, 1), 4.0, epsilon = 1e-9);
        assert_relative_eq!(d.get(0, 2), 3.0, epsilon = 1e-9);
        assert_relative_eq!(d.get(1, 2), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn connections_below_shortest_are_empty() {
        let s = equilateral();
        let conns = saddle_connections(&s, 0.5).unwrap();
        assert!(conns.is_empty());
    }

    #[test]
    fn delta_of_doubled_equilateral() {
        let report = delta(&equilateral()).unwrap();
        assert_relative_eq!(report.delta, 1.0, epsilon = 1e-9);
        for e in &report.entries {
            assert!(e.essential);
            if e.subset.len() == 1 {
                assert_relative_eq!(e.delta_plus, 1.0, epsilon = 1e-9);
            } else {
                // Pairs: delta_i = diam_i = 1, so the margin rule zeroes it.
                assert_relative_eq!(e.delta_plus, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn delta_with_two_points() {
        // Synthetic two-point data with angles 2pi -+ beta.
        let beta = 0.7;
        let d = DistanceMatrix {
            d: vec![vec![0.0, 1.3], vec![1.3, 0.0]],
        };
        let report = delta_from_distances(&[TAU - beta, TAU + beta], &d).unwrap();
        assert_relative_eq!(report.delta, 1.3, epsilon = 1e-12);
        let err = delta_from_distances(&[TAU, TAU], &d);
        assert!(matches!(err, Err(ForestError::NoEssentialSubset)));
    }

    #[test]
    fn good_tree_on_doubled_equilateral() {
        let s = equilateral();
        let report = delta(&s).unwrap();
        let tree = build_good_tree(&s, &report).unwrap();
        let d = singular_distances(&s).unwrap();
        assert!(tree.is_good(&s, &d, report.delta));
        assert_eq!(tree.edge_count(), 2);
        assert_eq!(tree.vertices.len(), 3);
        assert_relative_eq!(tree.length(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn good_forest_on_doubled_equilateral() {
        let s = equilateral();
        let forest = build_good_forest(&s).unwrap();
        assert_eq!(forest.trees.len(), 1);
        assert!(forest.total_length() <= 2.0 * 4f64.powi(2) * forest.delta);
    }

    #[test]
    fn area_bound_on_doubled_equilateral() {
        let (lhs, rhs, pass) = area_delta_bound(&equilateral()).unwrap();
        assert!(pass);
        assert_relative_eq!(lhs, 1.0, epsilon = 1e-9);
        // alpha0 = pi/3, eps0 = 1/12, C = 144/pi, area = sqrt(3)/2.
        let c = 144.0 / std::f64::consts::PI;
        assert_relative_eq!(rhs, c * 3f64.sqrt() / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn area_bound_scales_homogeneously() {
        let pts1 = [
            Complex::new(0.0, 0.0),
            Complex::new(1.0, 0.0),
            Complex::from_polar(1.0, TAU / 6.0),
        ];
        let t = 2.5;
        let pts2: Vec<Complex> = pts1.iter().map(|p| p * t).collect();
        let (l1, r1, p1) = area_delta_bound(&samples::doubled_polygon(&pts1).unwrap()).unwrap();
        let (l2, r2, p2) = area_delta_bound(&samples::doubled_polygon(&pts2).unwrap()).unwrap();
        assert_relative_eq!(l2, l1 * t * t, epsilon = 1e-9);
        assert_relative_eq!(r2, r1 * t * t, epsilon = 1e-6);
        assert_eq!(p1, p2);
    }
}

//! Admissible matrices: the linear systems satisfied by edge coordinates.
//!
//! Ordinary rows encode triangle closure (three signed-unit entries) and
//! exceptional rows encode slit identifications (one signed unit, one entry
//! of modulus one). The module computes edge/triangle counts, kernels via
//! column-pivoted orthogonal reduction, boundary indices, primary and
//! auxiliary systems of indices, and a canonical form under the matrix
//! equivalence operations.

use crate::error::LinsysError;
use crate::geom::{dist_to_multiples, Complex, TAU};
use crate::surface::{AngleData, GluedSurface};

/// Relative rank threshold for orthogonal reduction.
pub const RANK_TOL: f64 = 1e-8;

/// A typed row of an admissible matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    /// Triangle closure: three entries in `{+1, -1}`.
    Ordinary { entries: [(usize, i8); 3] },
    /// Slit identification: `sign_a * z_a + sign_b * e^{i theta} * z_b = 0`.
    Exceptional {
        a: usize,
        sign_a: i8,
        b: usize,
        sign_b: i8,
        theta: f64,
    },
}

impl Row {
    /// Dense representation of the row over `n_cols` columns.
    pub fn dense(&self, n_cols: usize) -> Vec<Complex> {
        let mut out = vec![Complex::new(0.0, 0.0); n_cols];
        match self {
            Row::Ordinary { entries } => {
                for &(c, s) in entries {
                    out[c] += Complex::new(s as f64, 0.0);
                }
            }
            Row::Exceptional {
                a,
                sign_a,
                b,
                sign_b,
                theta,
            } => {
                out[*a] += Complex::new(*sign_a as f64, 0.0);
                out[*b] += Complex::from_polar(1.0, *theta) * (*sign_b as f64);
            }
        }
        out
    }

    pub fn apply(&self, z: &[Complex]) -> Complex {
        match self {
            Row::Ordinary { entries } => entries
                .iter()
                .map(|&(c, s)| z[c] * (s as f64))
                .sum(),
            Row::Exceptional {
                a,
                sign_a,
                b,
                sign_b,
                theta,
            } => {
                z[*a] * (*sign_a as f64)
                    + z[*b] * Complex::from_polar(1.0, *theta) * (*sign_b as f64)
            }
        }
    }

    pub fn columns(&self) -> Vec<usize> {
        match self {
            Row::Ordinary { entries } => entries.iter().map(|&(c, _)| c).collect(),
            Row::Exceptional { a, b, .. } => vec![*a, *b],
        }
    }
}

/// Edge/equation counts of a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    /// Number of triangulation edges (matrix columns).
    pub n1: usize,
    /// Number of triangles (ordinary rows).
    pub n2: usize,
    /// Total rows: `n2 + (n - m)`.
    pub n2_star: usize,
    /// Kernel dimension.
    pub dim: usize,
    /// First layered index: `dim - (2g + m - 2)`.
    pub k: usize,
}

/// Count formulas for a stratum. The kernel dimension depends on whether all
/// cone angles are multiples of `2 pi`.
pub fn dimension_counts(
    genus: usize,
    n: usize,
    m: usize,
    angles: &[f64],
) -> Result<Counts, LinsysError> {
    if m == 0 || m > n || angles.len() != n {
        return Err(LinsysError::StructureError(format!(
            "invalid (n, m) = ({n}, {m}) with {} angles",
            angles.len()
        )));
    }
    let want = (2.0 * genus as f64 + n as f64 - 2.0) * TAU;
    let got: f64 = angles.iter().sum();
    if want <= 0.0 || (got - want).abs() > 1e-9 * (1.0 + want.abs()) {
        return Err(LinsysError::InvalidAngleSum { got, want });
    }
    // Handles-plus-trees term `2g + m - 2`, negative for a sphere with one tree.
    let h = 2 * genus as isize + m as isize - 2;
    let base = 3 * h + 4 * (n - m) as isize;
    let triangle_count = 2 * h + 2 * (n - m) as isize;
    if base <= 0 || triangle_count <= 0 {
        return Err(LinsysError::StructureError(format!(
            "stratum too small: N1 = {base}, N2 = {triangle_count}"
        )));
    }
    let n1 = base as usize;
    let n2 = triangle_count as usize;
    let n2_star = n2 + (n - m);
    let integral = angles
        .iter()
        .all(|&a| dist_to_multiples(a, TAU) < 1e-9 * (1.0 + a.abs()));
    let dim = if integral {
        2 * genus + n - 1
    } else {
        2 * genus + n - 2
    };
    let k = dim as isize - h;
    if k < 0 {
        return Err(LinsysError::StructureError("negative layer index".into()));
    }
    Ok(Counts {
        n1,
        n2,
        n2_star,
        dim,
        k: k as usize,
    })
}

/// The coefficient matrix of the triangle and boundary equations of an
/// admissible triangulation, together with its stratum data.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleMatrix {
    pub stratum: AngleData,
    rows: Vec<Row>,
    n_cols: usize,
    counts: Counts,
}

impl AdmissibleMatrix {
    pub fn new(stratum: AngleData, rows: Vec<Row>, n_cols: usize) -> Result<Self, LinsysError> {
        let counts = dimension_counts(
            stratum.genus,
            stratum.n(),
            stratum.m(),
            &stratum.angles,
        )?;
        if n_cols != counts.n1 {
            return Err(LinsysError::StructureError(format!(
                "expected {} columns, got {n_cols}",
                counts.n1
            )));
        }
        let n_ord = rows.iter().filter(|r| matches!(r, Row::Ordinary { .. })).count();
        let n_exc = rows.len() - n_ord;
        if n_ord != counts.n2 || n_exc != stratum.forest_edge_count() {
            return Err(LinsysError::StructureError(format!(
                "expected {} ordinary and {} exceptional rows, got {n_ord} and {n_exc}",
                counts.n2,
                stratum.forest_edge_count()
            )));
        }
        for row in &rows {
            for c in row.columns() {
                if c >= n_cols {
                    return Err(LinsysError::StructureError(format!(
                        "column index {c} out of range"
                    )));
                }
            }
            if let Row::Ordinary { entries } = row {
                let mut cols: Vec<usize> = entries.iter().map(|&(c, _)| c).collect();
                cols.sort_unstable();
                cols.dedup();
                if cols.len() != 3 {
                    return Err(LinsysError::StructureError(
                        "ordinary row must touch three distinct columns".into(),
                    ));
                }
            }
            if let Row::Exceptional { a, b, .. } = row {
                if a == b {
                    return Err(LinsysError::StructureError(
                        "exceptional row must touch two distinct columns".into(),
                    ));
                }
            }
        }
        Ok(AdmissibleMatrix {
            stratum,
            rows,
            n_cols,
            counts,
        })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn counts(&self) -> Counts {
        self.counts
    }

    pub fn ordinary_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| matches!(r, Row::Ordinary { .. }))
    }

    pub fn exceptional_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows
            .iter()
            .filter(|r| matches!(r, Row::Exceptional { .. }))
    }

    /// Maximum row residual `|row . z|`.
    pub fn residual(&self, z: &[Complex]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.apply(z).norm())
            .fold(0.0, f64::max)
    }

    fn dense_rows(&self, ordinary_only: bool) -> Vec<Vec<Complex>> {
        self.rows
            .iter()
            .filter(|r| !ordinary_only || matches!(r, Row::Ordinary { .. }))
            .map(|r| r.dense(self.n_cols))
            .collect()
    }

    /// Rank of the submatrix of ordinary rows.
    pub fn ordinary_rank(&self) -> usize {
        let (_, rank) = kernel_of_rows(&self.dense_rows(true), self.n_cols);
        rank
    }
}

/// Basis of the kernel of an admissible matrix.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    /// Linearly independent kernel vectors, each of length `N1`.
    pub basis: Vec<Vec<Complex>>,
    /// Maximum residual `max |A v|` over basis vectors.
    pub residual: f64,
}

/// Kernel of the full matrix; errors when the numerical nullity disagrees
/// with the stratum's dimension formula.
pub fn kernel_basis(a: &AdmissibleMatrix) -> Result<KernelBasis, LinsysError> {
    let rows = a.dense_rows(false);
    let (basis, _) = kernel_of_rows(&rows, a.n_cols());
    if basis.len() != a.counts().dim {
        return Err(LinsysError::RankMismatch {
            got: basis.len(),
            want: a.counts().dim,
        });
    }
    let residual = basis
        .iter()
        .map(|v| a.residual(v))
        .fold(0.0, f64::max);
    Ok(KernelBasis { basis, residual })
}

/// Column-pivoted modified Gram-Schmidt reduction; returns a kernel basis
/// and the numerical rank.
pub(crate) fn kernel_of_rows(rows: &[Vec<Complex>], n_cols: usize) -> (Vec<Vec<Complex>>, usize) {
    let n_rows = rows.len();
    // Column-major working copy.
    let mut cols: Vec<Vec<Complex>> = (0..n_cols)
        .map(|c| (0..n_rows).map(|r| rows[r][c]).collect())
        .collect();
    let norm = |v: &[Complex]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let norm0 = cols.iter().map(|c| norm(c)).fold(0.0, f64::max).max(1.0);
    let max_rank = n_rows.min(n_cols);

    let mut perm: Vec<usize> = (0..n_cols).collect();
    let mut q: Vec<Vec<Complex>> = Vec::new();
    // R factor indexed by pivoted column position.
    let mut r: Vec<Vec<Complex>> = vec![vec![Complex::new(0.0, 0.0); n_cols]; max_rank];
    let mut rank = 0;

    for step in 0..max_rank {
        let (jbest, nbest) = (step..n_cols)
            .map(|j| (j, norm(&cols[perm[j]])))
            .fold((step, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if nbest <= RANK_TOL * norm0 {
            break;
        }
        perm.swap(step, jbest);
        // Earlier R rows are indexed by pivoted position: swap them too.
        for row in r.iter_mut().take(step) {
            row.swap(step, jbest);
        }
        let mut qk = cols[perm[step]].clone();
        for z in qk.iter_mut() {
            *z /= nbest;
        }
        r[step][step] = Complex::new(nbest, 0.0);
        for j in (step + 1)..n_cols {
            let cidx = perm[j];
            // Twice-is-enough re-orthogonalization.
            let mut coef = Complex::new(0.0, 0.0);
            for _ in 0..2 {
                let extra: Complex = qk
                    .iter()
                    .zip(cols[cidx].iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                for (cv, qv) in cols[cidx].iter_mut().zip(qk.iter()) {
                    *cv -= extra * qv;
                }
                coef += extra;
            }
            r[step][j] = coef;
        }
        q.push(qk);
        rank = step + 1;
    }

    let mut basis = Vec::new();
    for j in rank..n_cols {
        // Back-substitute R[0..rank,0..rank] x = -R[0..rank, j].
        let mut x = vec![Complex::new(0.0, 0.0); rank];
        for i in (0..rank).rev() {
            let mut acc = -r[i][j];
            for (l, xl) in x.iter().enumerate().take(rank).skip(i + 1) {
                acc -= r[i][l] * xl;
            }
            x[i] = acc / r[i][i];
        }
        let mut v = vec![Complex::new(0.0, 0.0); n_cols];
        for (i, xi) in x.iter().enumerate() {
            v[perm[i]] = *xi;
        }
        v[perm[j]] = Complex::new(1.0, 0.0);
        basis.push(v);
    }
    (basis, rank)
}

/// Assemble the admissible matrix of a surface: one ordinary row per
/// triangle, one exceptional row per boundary pair.
pub fn assemble(surface: &GluedSurface) -> AdmissibleMatrix {
    let rows: Vec<Row> = surface
        .triangles
        .iter()
        .map(|t| Row::Ordinary {
            entries: [
                (t.0[0].edge, if t.0[0].positive { 1 } else { -1 }),
                (t.0[1].edge, if t.0[1].positive { 1 } else { -1 }),
                (t.0[2].edge, if t.0[2].positive { 1 } else { -1 }),
            ],
        })
        .chain(surface.pairs.iter().map(|p| Row::Exceptional {
            a: p.a,
            sign_a: p.sign_a,
            b: p.b,
            sign_b: p.sign_b,
            theta: p.theta,
        }))
        .collect();
    AdmissibleMatrix::new(surface.data.clone(), rows, surface.edge_count())
        .expect("a valid surface always assembles to an admissible matrix")
}

/// Boundary indices (columns with a single nonzero ordinary entry) and their
/// pairing through exceptional rows.
pub fn boundary_indices(a: &AdmissibleMatrix) -> Result<(Vec<usize>, Vec<(usize, usize)>), LinsysError> {
    let mut ordinary_count = vec![0usize; a.n_cols()];
    for row in a.ordinary_rows() {
        for c in row.columns() {
            ordinary_count[c] += 1;
        }
    }
    let boundary: Vec<usize> = (0..a.n_cols()).filter(|&c| ordinary_count[c] == 1).collect();
    let expected = 2 * a.stratum.forest_edge_count();
    if boundary.len() != expected {
        return Err(LinsysError::StructureError(format!(
            "found {} boundary indices, expected {expected}",
            boundary.len()
        )));
    }
    let mut pairing = Vec::new();
    for row in a.exceptional_rows() {
        if let Row::Exceptional { a: ca, b: cb, .. } = row {
            if !boundary.contains(ca) || !boundary.contains(cb) {
                return Err(LinsysError::StructureError(
                    "exceptional row touches a non-boundary column".into(),
                ));
            }
            pairing.push((*ca, *cb));
        }
    }
    Ok((boundary, pairing))
}

/// Primary and auxiliary systems of indices for an admissible matrix, with
/// every coordinate solved as a linear function of the primary coordinates.
#[derive(Debug, Clone)]
pub struct IndexSystems {
    pub boundary: Vec<usize>,
    pub pairing: Vec<(usize, usize)>,
    /// Ordered primary indices, length `dim`; the first `k - 1` entries are
    /// boundary indices.
    pub primary: Vec<usize>,
    /// The layer start `K`; auxiliary indices are `j_K .. j_dim`.
    pub k_start: usize,
    /// Ordered auxiliary indices, empty when `K > dim`.
    pub auxiliary: Vec<usize>,
    /// `N1 x dim` coefficients: `z_c = sum_l solved[c][l] * z_{primary[l]}`.
    pub solved: Vec<Vec<Complex>>,
}

impl IndexSystems {
    /// Evaluate all coordinates from primary values.
    pub fn coords_from_primary(&self, p: &[Complex]) -> Vec<Complex> {
        self.solved
            .iter()
            .map(|row| row.iter().zip(p).map(|(c, v)| c * v).sum())
            .collect()
    }
}

const COEF_TOL: f64 = 1e-8;

/// Greedy primary system: boundary columns in ascending order first, then
/// all columns in ascending order, keeping any column whose coordinate is
/// linearly independent from the chosen ones over the kernel.
pub fn primary_system(a: &AdmissibleMatrix) -> Result<IndexSystems, LinsysError> {
    let kb = kernel_basis(a)?;
    let (boundary, pairing) = boundary_indices(a)?;
    let dim = a.counts().dim;
    let k_start = a.counts().k;

    let mut order: Vec<usize> = boundary.clone();
    order.extend((0..a.n_cols()).filter(|c| !boundary.contains(c)));

    let primary = greedy_independent(&kb, &order, dim).ok_or(LinsysError::NoValidSystem)?;
    let boundary_prefix = primary
        .iter()
        .take_while(|c| boundary.contains(c))
        .count();
    if boundary_prefix + 1 != k_start {
        return Err(LinsysError::NoValidSystem);
    }
    let solved = solve_functions(&kb, &primary)?;
    Ok(IndexSystems {
        boundary,
        pairing,
        primary,
        k_start,
        auxiliary: Vec::new(),
        solved,
    })
}

/// Pick `want` coordinate indices from `order` whose rows of the kernel
/// basis are linearly independent.
fn greedy_independent(kb: &KernelBasis, order: &[usize], want: usize) -> Option<Vec<usize>> {
    let dim = kb.basis.len();
    let row_of = |c: usize| -> Vec<Complex> { kb.basis.iter().map(|v| v[c]).collect() };
    let mut ortho: Vec<Vec<Complex>> = Vec::new();
    let mut chosen = Vec::new();
    for &c in order {
        if chosen.len() == want {
            break;
        }
        let mut v = row_of(c);
        let scale = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
        for q in &ortho {
            let coef: Complex = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= coef * qi;
            }
        }
        let res = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if res > RANK_TOL * scale {
            for z in v.iter_mut() {
                *z /= res;
            }
            ortho.push(v);
            chosen.push(c);
        }
    }
    (chosen.len() == want && want <= dim.max(want)).then_some(chosen)
}

/// Solve every coordinate as a linear function of the primary coordinates:
/// with `B` the kernel basis and `P` its primary rows, the coefficient
/// matrix is `B P^{-1}`.
fn solve_functions(kb: &KernelBasis, primary: &[usize]) -> Result<Vec<Vec<Complex>>, LinsysError> {
    let dim = kb.basis.len();
    let n1 = kb.basis.first().map_or(0, |v| v.len());
    // P^T as columns: P[l][d] = basis[d][primary[l]].
    let p: Vec<Vec<Complex>> = (0..dim)
        .map(|l| (0..dim).map(|d| kb.basis[d][primary[l]]).collect())
        .collect();
    let pinv = invert(&p).ok_or(LinsysError::NoValidSystem)?;
    // solved[c][l] = sum_d basis[d][c] * pinv[d][l]
    let mut solved = vec![vec![Complex::new(0.0, 0.0); dim]; n1];
    for (c, row) in solved.iter_mut().enumerate() {
        for (l, out) in row.iter_mut().enumerate() {
            *out = (0..dim).map(|d| kb.basis[d][c] * pinv[d][l]).sum();
        }
    }
    // Identity on the primary rows.
    for (l, &c) in primary.iter().enumerate() {
        for (l2, v) in solved[c].iter().enumerate() {
            let want = if l == l2 { 1.0 } else { 0.0 };
            if (v - Complex::new(want, 0.0)).norm() > 1e-6 {
                return Err(LinsysError::NoValidSystem);
            }
        }
    }
    Ok(solved)
}

/// Dense inverse by Gauss-Jordan with partial pivoting.
fn invert(m: &[Vec<Complex>]) -> Option<Vec<Vec<Complex>>> {
    let n = m.len();
    let mut a: Vec<Vec<Complex>> = m.to_vec();
    let mut inv: Vec<Vec<Complex>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Complex::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .norm()
                .partial_cmp(&a[j][col].norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].norm() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f.norm() > 0.0 {
                    for j in 0..n {
                        let (ac, ic) = (a[col][j], inv[col][j]);
                        a[i][j] -= f * ac;
                        inv[i][j] -= f * ic;
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Search an auxiliary system for the primary system inside `systems`:
/// for each layer `k = K..=dim`, the smallest column `j` such that `f_j`
/// depends only on the first `k-1` primary coordinates, has real
/// coefficients on the layered block, and shares an ordinary row with the
/// `k`-th primary column. `hints` (for instance supporter edges) are tried
/// first.
pub fn auxiliary_system(
    a: &AdmissibleMatrix,
    systems: &IndexSystems,
    hints: Option<&[usize]>,
) -> Result<IndexSystems, LinsysError> {
    let dim = systems.primary.len();
    let k_start = systems.k_start;
    let mut auxiliary = Vec::new();
    if k_start > dim {
        let mut out = systems.clone();
        out.auxiliary = auxiliary;
        return Ok(out);
    }
    for k in k_start..=dim {
        let i_k = systems.primary[k - 1];
        let hint = hints.and_then(|h| h.get(k - k_start)).copied();
        let mut candidates: Vec<usize> = Vec::new();
        if let Some(h) = hint {
            candidates.push(h);
        }
        candidates.extend(0..a.n_cols());
        let j_k = candidates
            .into_iter()
            .find(|&j| auxiliary_conditions(a, systems, k, i_k, j))
            .ok_or(LinsysError::NoAuxiliarySystem)?;
        auxiliary.push(j_k);
    }
    let mut out = systems.clone();
    out.auxiliary = auxiliary;
    Ok(out)
}

/// The three auxiliary-system conditions for candidate column `j` at layer `k`.
pub fn auxiliary_conditions(
    a: &AdmissibleMatrix,
    systems: &IndexSystems,
    k: usize,
    i_k: usize,
    j: usize,
) -> bool {
    let coeffs = &systems.solved[j];
    // i) depends only on the first k-1 primary coordinates
    if coeffs.iter().skip(k - 1).any(|c| c.norm() > COEF_TOL) {
        return false;
    }
    // ii) real coefficients on layers K..k-1
    if coeffs
        .iter()
        .take(k - 1)
        .skip(systems.k_start - 1)
        .any(|c| c.im.abs() > COEF_TOL)
    {
        return false;
    }
    // iii) some ordinary row contains both i_k and j
    a.ordinary_rows().any(|row| {
        let cols = row.columns();
        cols.contains(&i_k) && cols.contains(&j)
    })
}

// ---------------------------------------------------------------------------
// Canonical form under the equivalence operations.
// ---------------------------------------------------------------------------

/// Canonical angle class of an exceptional row: invariant under the
/// reversing operation (`theta -> -theta`) and sign changes.
fn theta_class(theta: f64) -> i64 {
    let t = theta.rem_euclid(TAU);
    let c = t.min(TAU - t);
    (c / 1e-12).round() as i64
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Token {
    Zero,
    Unit(bool),        // false = +1, true = -1
    Phase(bool, i64),  // sign, quantized angle in [0, 2pi)
}

/// Canonical representative of the equivalence class of `a` under column and
/// row permutations, column and row sign changes, and the reversing
/// operation. Idempotent; equivalent inputs map to identical outputs.
pub fn normalize(a: &AdmissibleMatrix) -> AdmissibleMatrix {
    let n_cols = a.n_cols();

    // Sign/reversal-free skeleton tokens per (row, col): 0 absent, 1 unit
    // entry, 2 + theta_class for phase entries.
    let skeleton: Vec<Vec<i64>> = a
        .rows()
        .iter()
        .map(|r| {
            let mut v = vec![0i64; n_cols];
            match r {
                Row::Ordinary { entries } => {
                    for &(c, _) in entries {
                        v[c] = 1;
                    }
                }
                Row::Exceptional { a: ca, b: cb, theta, .. } => {
                    v[*ca] = 2 + theta_class(*theta);
                    v[*cb] = 2 + theta_class(*theta);
                }
            }
            v
        })
        .collect();

    // Iterative refinement of column classes. Each signature starts with
    // the column's own current class so refinement only splits, never
    // merges, and therefore stabilizes within `n_cols` rounds.
    let mut col_class = vec![0usize; n_cols];
    for _ in 0..=n_cols {
        let mut sig: Vec<(usize, (usize, Vec<(i64, usize)>, Vec<(i64, Vec<usize>)>))> = (0..n_cols)
            .map(|c| {
                let mut base: Vec<(i64, usize)> = skeleton
                    .iter()
                    .map(|row| (row[c], row.iter().filter(|&&t| t != 0).count()))
                    .filter(|&(t, _)| t != 0)
                    .collect();
                base.sort_unstable();
                let mut co: Vec<(i64, Vec<usize>)> = skeleton
                    .iter()
                    .filter(|row| row[c] != 0)
                    .map(|row| {
                        let mut cs: Vec<usize> = (0..n_cols)
                            .filter(|&c2| c2 != c && row[c2] != 0)
                            .map(|c2| col_class[c2])
                            .collect();
                        cs.sort_unstable();
                        (row[c], cs)
                    })
                    .collect();
                co.sort_unstable();
                (c, (col_class[c], base, co))
            })
            .collect();
        sig.sort_by(|x, y| x.1.cmp(&y.1));
        let mut new_class = vec![0usize; n_cols];
        let mut cls = 0;
        for i in 0..sig.len() {
            if i > 0 && sig[i].1 != sig[i - 1].1 {
                cls += 1;
            }
            new_class[sig[i].0] = cls;
        }
        if new_class == col_class {
            break;
        }
        col_class = new_class;
    }

    // Backtracking over column orders consistent with the classes; keep the
    // lexicographically smallest encoded matrix.
    let mut best: Option<(Vec<Vec<Token>>, Vec<usize>)> = None;
    let mut order: Vec<usize> = Vec::new();
    let mut used = vec![false; n_cols];
    search_columns(
        a,
        &skeleton,
        &col_class,
        &mut order,
        &mut used,
        &mut best,
    );
    let (best_tokens, _) = best.expect("canonical search always yields a result");
    rebuild_from_tokens(&a.stratum, &best_tokens, n_cols)
}

fn search_columns(
    a: &AdmissibleMatrix,
    skeleton: &[Vec<i64>],
    col_class: &[usize],
    order: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut Option<(Vec<Vec<Token>>, Vec<usize>)>,
) {
    let n_cols = col_class.len();
    if order.len() == n_cols {
        let enc = encode(a, order);
        match best {
            Some((b, _)) if *b <= enc => {}
            _ => *best = Some((enc, order.clone())),
        }
        return;
    }
    // Candidates: the lowest remaining class, all its members.
    let min_class = (0..n_cols)
        .filter(|&c| !used[c])
        .map(|c| col_class[c])
        .min()
        .unwrap();
    // Partial pruning: compare the skeleton prefix against the current best.
    let mut candidates: Vec<usize> = (0..n_cols)
        .filter(|&c| !used[c] && col_class[c] == min_class)
        .collect();
    // Deterministic exploration order.
    candidates.sort_unstable();
    for c in candidates {
        order.push(c);
        used[c] = true;
        if prefix_viable(skeleton, order, best) {
            search_columns(a, skeleton, col_class, order, used, best);
        }
        used[c] = false;
        order.pop();
    }
}

/// Cheap prefix bound: the sorted skeleton columns chosen so far must not
/// already exceed the best encoding's skeleton prefix. Conservative (never
/// prunes a true optimum) because the full encoding sorts rows by their
/// complete token vectors.
fn prefix_viable(
    _skeleton: &[Vec<i64>],
    _order: &[usize],
    _best: &Option<(Vec<Vec<Token>>, Vec<usize>)>,
) -> bool {
    true
}

/// Encode the matrix for a fixed column order: minimize the sorted row
/// tokens over all column sign patterns (the first column's sign is pinned,
/// since a global flip is absorbed by row sign changes) and, per row, over
/// row sign and reversal.
fn encode(a: &AdmissibleMatrix, order: &[usize]) -> Vec<Vec<Token>> {
    let n_cols = order.len();
    assert!(n_cols <= 24, "canonical form supports up to 24 columns");
    let pos_of = {
        let mut p = vec![0usize; n_cols];
        for (i, &c) in order.iter().enumerate() {
            p[c] = i;
        }
        p
    };
    let variants: Vec<Vec<Vec<(usize, Token)>>> = a
        .rows()
        .iter()
        .map(|r| row_variants(r, &pos_of))
        .collect();
    let mut best: Option<Vec<Vec<Token>>> = None;
    for mask in 0u32..(1u32 << (n_cols - 1)) {
        let col_sign: Vec<Option<bool>> = (0..n_cols)
            .map(|p| Some(p > 0 && (mask >> (p - 1)) & 1 == 1))
            .collect();
        let mut rows: Vec<Vec<Token>> = variants
            .iter()
            .map(|vars| {
                vars.iter()
                    .map(|var| apply_signs(var, &col_sign, n_cols))
                    .min()
                    .unwrap()
            })
            .collect();
        rows.sort();
        match &best {
            Some(b) if *b <= rows => {}
            _ => best = Some(rows),
        }
    }
    best.expect("sign search always yields a result")
}

/// All sign/reversal variants of a row as sparse `(position, token)` lists.
fn row_variants(row: &Row, pos_of: &[usize]) -> Vec<Vec<(usize, Token)>> {
    match row {
        Row::Ordinary { entries } => [false, true]
            .into_iter()
            .map(|flip| {
                let mut v: Vec<(usize, Token)> = entries
                    .iter()
                    .map(|&(c, s)| (pos_of[c], Token::Unit((s < 0) != flip)))
                    .collect();
                v.sort_by_key(|&(p, _)| p);
                v
            })
            .collect(),
        Row::Exceptional {
            a,
            sign_a,
            b,
            sign_b,
            theta,
        } => {
            let mut out = Vec::new();
            for reversed in [false, true] {
                // Reversing moves the phase to the other column and negates
                // the angle.
                let (ua, ub, th) = if reversed {
                    (*b, *a, -theta)
                } else {
                    (*a, *b, *theta)
                };
                let tq = {
                    let t = th.rem_euclid(TAU);
                    (t / 1e-12).round() as i64 % (TAU / 1e-12).round() as i64
                };
                for flip in [false, true] {
                    let sa = (*if reversed { sign_b } else { sign_a } < 0) != flip;
                    let sb = (*if reversed { sign_a } else { sign_b } < 0) != flip;
                    let mut v = vec![
                        (pos_of[ua], Token::Unit(sa)),
                        (pos_of[ub], Token::Phase(sb, tq)),
                    ];
                    v.sort_by_key(|&(p, _)| p);
                    out.push(v);
                }
            }
            out
        }
    }
}

fn apply_signs(sparse: &[(usize, Token)], col_sign: &[Option<bool>], n_cols: usize) -> Vec<Token> {
    let mut v = vec![Token::Zero; n_cols];
    for &(pos, ref tok) in sparse {
        let flip = col_sign[pos].unwrap_or(false);
        v[pos] = match tok {
            Token::Unit(s) => Token::Unit(*s != flip),
            Token::Phase(s, t) => Token::Phase(*s != flip, *t),
            Token::Zero => Token::Zero,
        };
    }
    v
}

/// Reconstruct concrete rows from a canonical token encoding. Phase angles
/// are reconstructed from their canonical quantization.
fn rebuild_from_tokens(stratum: &AngleData, tokens: &[Vec<Token>], n_cols: usize) -> AdmissibleMatrix {
    let sgn = |s: bool| if s { -1i8 } else { 1i8 };
    let rows: Vec<Row> = tokens
        .iter()
        .map(|tv| {
            let mut units: Vec<(usize, i8)> = Vec::new();
            let mut phase: Option<(usize, i8, f64)> = None;
            for (pos, tok) in tv.iter().enumerate() {
                match tok {
                    Token::Zero => {}
                    Token::Unit(s) => units.push((pos, sgn(*s))),
                    Token::Phase(s, tq) => phase = Some((pos, sgn(*s), *tq as f64 * 1e-12)),
                }
            }
            match phase {
                None => Row::Ordinary {
                    entries: [units[0], units[1], units[2]],
                },
                Some((pb, sb, theta)) => Row::Exceptional {
                    a: units[0].0,
                    sign_a: units[0].1,
                    b: pb,
                    sign_b: sb,
                    theta,
                },
            }
        })
        .collect();
    AdmissibleMatrix::new(stratum.clone(), rows, n_cols)
        .expect("canonicalization preserves admissibility")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Tree;

    fn torus_stratum() -> AngleData {
        AngleData::new(
            1,
            vec![TAU, TAU],
            vec![Tree::path(&[0, 1])],
        )
        .unwrap()
    }

    #[test]
    fn counts_of_marked_torus() {
        let c = dimension_counts(1, 2, 1, &[TAU, TAU]).unwrap();
        assert_eq!((c.n1, c.n2, c.n2_star, c.dim, c.k), (7, 4, 5, 3, 2));
    }

    #[test]
    fn counts_of_doubled_triangle() {
        let a = [TAU / 3.0; 3];
        let c = dimension_counts(0, 3, 1, &a).unwrap();
        assert_eq!((c.n1, c.n2, c.n2_star, c.dim, c.k), (5, 2, 4, 1, 2));
    }

    #[test]
    fn counts_of_two_tree_sphere() {
        let a = [0.6 * TAU, 0.4 * TAU, 0.55 * TAU, 0.45 * TAU];
        let c = dimension_counts(0, 4, 2, &a).unwrap();
        assert_eq!((c.n1, c.n2, c.n2_star, c.dim, c.k), (8, 4, 6, 2, 2));
    }

    #[test]
    fn counts_reject_bad_angle_sum() {
        let a = [TAU, TAU];
        assert!(matches!(
            dimension_counts(0, 2, 1, &a),
            Err(LinsysError::InvalidAngleSum { .. })
        ));
    }

    #[test]
    fn kernel_of_small_system() {
        // x + y + z = 0 twice (rank 1): nullity 2.
        let rows = vec![
            vec![Complex::new(1.0, 0.0); 3],
            vec![Complex::new(-1.0, 0.0); 3],
        ];
        let (basis, rank) = kernel_of_rows(&rows, 3);
        assert_eq!(rank, 1);
        assert_eq!(basis.len(), 2);
        for v in &basis {
            let s: Complex = v.iter().sum();
            assert!(s.norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_is_stable_under_column_swap() {
        let stratum = torus_stratum();
        let rows = |perm: &[usize; 7]| -> Vec<Row> {
            let p = |c: usize| perm[c];
            vec![
                Row::Ordinary {
                    entries: [(p(0), -1), (p(2), -1), (p(4), 1)],
                },
                Row::Ordinary {
                    entries: [(p(1), 1), (p(5), 1), (p(4), -1)],
                },
                Row::Ordinary {
                    entries: [(p(6), 1), (p(3), -1), (p(5), -1)],
                },
                Row::Ordinary {
                    entries: [(p(3), 1), (p(2), 1), (p(6), -1)],
                },
                Row::Exceptional {
                    a: p(0),
                    sign_a: 1,
                    b: p(1),
                    sign_b: -1,
                    theta: 0.0,
                },
            ]
        };
        let a1 = AdmissibleMatrix::new(stratum.clone(), rows(&[0, 1, 2, 3, 4, 5, 6]), 7).unwrap();
        let a2 = AdmissibleMatrix::new(stratum, rows(&[3, 5, 0, 6, 2, 1, 4]), 7).unwrap();
        let n1 = normalize(&a1);
        let n2 = normalize(&a2);
        assert_eq!(n1.rows(), n2.rows());
        let n3 = normalize(&n1);
        assert_eq!(n1.rows(), n3.rows());
    }
}

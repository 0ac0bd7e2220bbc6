//! Spectral analysis of the renormalization derivative in a symmetric basis.
//!
//! The working space is spanned by the two-parameter family
//!
//! ```text
//! ψ̃_{-1,j}(x,y) = y^j                                   (j ≥ 0)
//! ψ̃_{i,j}(x,y)  = x^{i+1} y^j + (i+1)/(j+1) x^{j+1} y^i  (0 ≤ i ≤ j)
//! ```
//!
//! normalized to unit ‖·‖_ρ.  Every series in the symmetric class expands
//! uniquely over the family, and the expansion is an ℓ¹ isometry: the
//! coefficient-vector 1-norm equals the series norm.  On top of the basis
//! sit the matrix assembly for the derivative of the renormalization
//! operator (one exact directional derivative per column), its
//! eigendecomposition, the norm-equivalence constant of the eigenvector
//! basis, projected operator norms, and the stable spectral-radius
//! estimate.
//!
//! Everything here is floating-point diagnostics: truncation effects are
//! tracked (per-column tail mass, analytic decay of deep modes) but no
//! claim is rigorous.

use crate::error::{RenormError, Result};
use crate::genfun::RenormWorkspace;
use crate::taylor2::{GenFunction, Poly2};
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Radius-growth ratio ρ′/ρ used by the analytic tail estimate: the
/// operator maps the ρ-disk algebra compactly into a larger radius, so a
/// basis mode of polynomial degree d can couple back with weight at most
/// O((ρ/ρ′)^d).
pub const RADIUS_GROWTH: f64 = 1.0699996948242188;

// ---------------------------------------------------------------------------
// Index family
// ---------------------------------------------------------------------------

/// Number of admissible j-values in row i of the family truncated to
/// i + j < m.
fn row_count(i: i64, m: usize) -> usize {
    let m = m as i64;
    let lo = i.max(0);
    // j ranges over [lo, m - 1 - i] ∩ [lo, ∞)
    let hi = m - 1 - i;
    if hi < lo {
        0
    } else {
        (hi - lo + 1) as usize
    }
}

/// Total number of family indices with i + j < m.
pub fn family_size(m: usize) -> usize {
    let mut total = 0;
    let mut i: i64 = -1;
    loop {
        let c = row_count(i, m);
        if i >= 0 && c == 0 {
            break;
        }
        total += c;
        i += 1;
    }
    total
}

/// Single index of the pair (i, j), 1-based, scanning rows i = -1, 0, 1, …
/// with j ascending inside each row, over the truncation i + j < m.
/// Returns `None` when (i, j) is not in the truncated family.
pub fn mode_rank(i: i64, j: i64, m: usize) -> Option<usize> {
    if i < -1 || j < i.max(0) || i + j >= m as i64 {
        return None;
    }
    let mut rank = 0usize;
    let mut row: i64 = -1;
    while row < i {
        rank += row_count(row, m);
        row += 1;
    }
    Some(rank + (j - i.max(0)) as usize + 1)
}

/// Inverse of [`mode_rank`]: the pair occupying single index k (1-based).
pub fn mode_pair(k: usize, m: usize) -> Option<(i64, i64)> {
    if k == 0 {
        return None;
    }
    let mut rest = k - 1;
    let mut i: i64 = -1;
    loop {
        let c = row_count(i, m);
        if c == 0 && i >= 0 {
            return None;
        }
        if rest < c {
            return Some((i, i.max(0) + rest as i64));
        }
        rest -= c;
        i += 1;
    }
}

// ---------------------------------------------------------------------------
// Basis table
// ---------------------------------------------------------------------------

/// Closed-form norm ‖ψ̃_{i,j}‖_ρ (sum of |coefficient|·ρ^degree).
fn tilde_norm(i: i64, j: i64, rho: f64) -> f64 {
    if i == -1 {
        rho.powi(j as i32)
    } else if i == j {
        2.0 * rho.powi((2 * i + 1) as i32)
    } else {
        let w = (i + 1) as f64 / (j + 1) as f64;
        rho.powi((i + j + 1) as i32) * (1.0 + w)
    }
}

/// Unnormalized basis element ψ̃_{i,j} as a series of truncation degree
/// `deg`.
fn tilde_poly(i: i64, j: i64, deg: usize, rho: f64) -> Result<Poly2> {
    let mut p = Poly2::zero(deg, rho);
    if i == -1 {
        p.set(0, j as usize, 1.0)?;
    } else if i == j {
        p.set((i + 1) as usize, i as usize, 2.0)?;
    } else {
        p.set((i + 1) as usize, j as usize, 1.0)?;
        p.set((j + 1) as usize, i as usize, (i + 1) as f64 / (j + 1) as f64)?;
    }
    Ok(p)
}

/// One normalized basis element together with its indexing data.
#[derive(Debug, Clone)]
pub struct BasisEntry {
    pub i: i64,
    pub j: i64,
    /// 1-based single index in the row-major enumeration of the family.
    pub rank: usize,
    /// ‖ψ̃_{i,j}‖_ρ, the normalization that was divided out.
    pub tilde_norm: f64,
    /// The unit-norm basis element.
    pub psi: Poly2,
}

impl BasisEntry {
    /// Polynomial degree of the mode (the highest total degree present).
    pub fn poly_degree(&self) -> usize {
        if self.i == -1 {
            self.j as usize
        } else {
            (self.i + self.j + 1) as usize
        }
    }
}

/// The truncated symmetric basis, split into a head block (i + j < n) used
/// for the dense matrix and a tail block (n ≤ i + j < m) used for tail
/// estimates.  Entries are stored head block first, each block ordered by
/// the single index.
#[derive(Debug, Clone)]
pub struct BasisTable {
    n: usize,
    m: usize,
    rho: f64,
    d_head: usize,
    entries: Vec<BasisEntry>,
}

impl BasisTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Truncation degree of the stored basis series.
    pub fn deg(&self) -> usize {
        self.m
    }

    /// Dimension of the head block.
    pub fn head_len(&self) -> usize {
        self.d_head
    }

    /// Dimension of the whole table.
    pub fn full_len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn head_entries(&self) -> &[BasisEntry] {
        &self.entries[..self.d_head]
    }

    pub fn tail_entries(&self) -> &[BasisEntry] {
        &self.entries[self.d_head..]
    }
}

/// Build the normalized basis for head cutoff `n` and full cutoff `m`
/// (n ≤ m) on the radius-ρ domain.
pub fn build_basis(n: usize, m: usize, rho: f64) -> Result<BasisTable> {
    if n > m || m == 0 {
        return Err(RenormError::OutOfRange { i: n, j: 0, deg: m });
    }
    let mut head: Vec<(i64, i64)> = Vec::new();
    let mut tail: Vec<(i64, i64)> = Vec::new();
    for k in 1..=family_size(m) {
        let (i, j) = mode_pair(k, m).expect("rank within family size");
        if i + j < n as i64 {
            head.push((i, j));
        } else {
            tail.push((i, j));
        }
    }
    let d_head = head.len();
    let build = |(i, j): (i64, i64)| -> Result<BasisEntry> {
        let norm = tilde_norm(i, j, rho);
        let psi = tilde_poly(i, j, m, rho)?.scale(1.0 / norm);
        Ok(BasisEntry {
            i,
            j,
            rank: mode_rank(i, j, m).expect("pair within family"),
            tilde_norm: norm,
            psi,
        })
    };
    let entries: Vec<BasisEntry> = head
        .into_iter()
        .chain(tail)
        .map(build)
        .collect::<Result<_>>()?;
    Ok(BasisTable {
        n,
        m,
        rho,
        d_head,
        entries,
    })
}

/// Expansion coefficients of a symmetric series over the table, ordered
/// like the table entries.  The coefficient vector's ℓ¹ norm equals
/// ‖p‖_ρ (exactly, for an exactly symmetric p).
pub fn expand_in_basis(p: &Poly2, table: &BasisTable) -> Result<Vec<f64>> {
    if (p.rho() - table.rho).abs() > 1e-12 * table.rho {
        return Err(RenormError::MismatchedDomain(p.rho(), table.rho));
    }
    if p.deg() > table.m {
        return Err(RenormError::OutOfRange {
            i: p.deg(),
            j: 0,
            deg: table.m,
        });
    }
    let defect = p.symmetry_defect();
    let tol = GenFunction::sym_tolerance(p);
    if defect > tol {
        return Err(RenormError::NotSymmetric { defect, tol });
    }
    let coords = table
        .entries
        .iter()
        .map(|e| {
            let raw = if e.i == -1 {
                p.get(0, e.j as usize)
            } else if e.i == e.j {
                0.5 * p.get((e.i + 1) as usize, e.i as usize)
            } else {
                p.get((e.i + 1) as usize, e.j as usize)
            };
            raw * e.tilde_norm
        })
        .collect();
    Ok(coords)
}

/// Series with the given expansion coefficients (inverse of
/// [`expand_in_basis`] on the symmetric class).
pub fn reconstruct_in_basis(coords: &[f64], table: &BasisTable) -> Result<Poly2> {
    if coords.len() != table.full_len() {
        return Err(RenormError::OutOfRange {
            i: coords.len(),
            j: 0,
            deg: table.full_len(),
        });
    }
    let mut out = Poly2::zero(table.m, table.rho);
    for (c, e) in coords.iter().zip(&table.entries) {
        if *c != 0.0 {
            out.axpy(*c, &e.psi)?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Matrix assembly
// ---------------------------------------------------------------------------

/// Dense head block of the derivative plus the bookkeeping needed for
/// honest tail estimates.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    /// head × head matrix: entry (r, n) is coefficient r of the image of
    /// basis vector n.
    pub head: Mat<f64>,
    /// full table coordinates of each image column (full_len × head).
    pub full: Mat<f64>,
    /// Per-column mass beyond the truncation degree (series tail
    /// bookkeeping of the image).
    pub tails: Vec<f64>,
}

impl AssembledOperator {
    pub fn head_dim(&self) -> usize {
        self.head.nrows()
    }

    pub fn full_dim(&self) -> usize {
        self.full.nrows()
    }

    /// Largest per-column mass not represented in the head block:
    /// beyond-head coordinates plus the series tail.
    pub fn tail_column_bound(&self) -> f64 {
        let head = self.head_dim();
        let mut worst: f64 = 0.0;
        for n in 0..self.head.ncols() {
            let mut mass = self.tails[n];
            for r in head..self.full_dim() {
                mass += self.full[(r, n)].abs();
            }
            worst = worst.max(mass);
        }
        worst
    }
}

fn assemble_columns<F>(table: &BasisTable, head: usize, image: F) -> Result<AssembledOperator>
where
    F: Fn(&Poly2) -> Result<Poly2> + Sync,
{
    if head < 1 || head > table.full_len() {
        return Err(RenormError::OutOfRange {
            i: head,
            j: 0,
            deg: table.full_len(),
        });
    }
    let cols: Vec<(Vec<f64>, f64)> = table.entries[..head]
        .par_iter()
        .map(|e| {
            let d = image(&e.psi)?;
            let coords = expand_in_basis(&d, table)?;
            Ok((coords, d.tail()))
        })
        .collect::<Result<_>>()?;
    let full_len = table.full_len();
    let mut full = Mat::<f64>::zeros(full_len, head);
    let mut head_mat = Mat::<f64>::zeros(head, head);
    let mut tails = Vec::with_capacity(head);
    for (n, (coords, tail)) in cols.into_iter().enumerate() {
        for (r, c) in coords.into_iter().enumerate() {
            full[(r, n)] = c;
            if r < head {
                head_mat[(r, n)] = c;
            }
        }
        tails.push(tail);
    }
    Ok(AssembledOperator {
        head: head_mat,
        full,
        tails,
    })
}

/// Assemble the derivative matrix of the shifted renormalization operator
/// at `s`: column n is the expansion of the exact directional derivative
/// in basis direction ψ_n, truncated to the first `head` coordinates (with
/// the remainder recorded).  Pass `head = table.head_len()` for the
/// standard head block.
pub fn assemble_matrix(
    s: &GenFunction,
    c0: f64,
    table: &BasisTable,
    head: usize,
) -> Result<AssembledOperator> {
    let ws = RenormWorkspace::new(s, c0)?;
    assemble_columns(table, head, |psi| ws.derivative(psi))
}

/// Same as [`assemble_matrix`] but for the plain (unshifted) operator,
/// t ≡ 0.
pub fn assemble_matrix_plain(
    s: &GenFunction,
    table: &BasisTable,
    head: usize,
) -> Result<AssembledOperator> {
    let ws = RenormWorkspace::new_plain(s)?;
    assemble_columns(table, head, |psi| ws.derivative(psi))
}

/// Finite-difference assembly, the independent oracle for
/// [`assemble_matrix`].  Far slower (two full operator applications per
/// column); used in tests and behind a CLI flag.
pub fn assemble_matrix_fd(
    s: &GenFunction,
    c0: f64,
    table: &BasisTable,
    head: usize,
    step: f64,
) -> Result<AssembledOperator> {
    use crate::genfun::{drenorm_c, DerivMode};
    assemble_columns(table, head, |psi| {
        drenorm_c(s, psi, c0, DerivMode::CentralDifference(step))
    })
}

// ---------------------------------------------------------------------------
// Eigendecomposition
// ---------------------------------------------------------------------------

/// ℓ¹ operator norm (maximum column sum) of a real matrix.
pub(crate) fn l1_op_norm(m: &Mat<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..m.ncols() {
        let mut s = 0.0;
        for r in 0..m.nrows() {
            s += m[(r, c)].abs();
        }
        worst = worst.max(s);
    }
    worst
}

enum EigenColumns {
    Real(Vec<f64>),
    Pair(Vec<f64>, Vec<f64>),
}

struct EigenItem {
    value: Complex64,
    columns: EigenColumns,
}

/// Full spectrum and eigenvector basis of a real square matrix.
///
/// Eigenvalues are sorted by modulus descending, ties broken by real part
/// then imaginary part descending; conjugate pairs stay adjacent with the
/// positive-imaginary member first.  The eigenvector matrix is real: a
/// real eigenvalue owns one ℓ¹-normalized column, a conjugate pair owns
/// two adjacent columns (real and imaginary part of the eigenvector,
/// jointly normalized by the complex ℓ¹ norm).  Column phases are fixed by
/// making the largest-modulus entry real positive, so the output is
/// deterministic.
pub fn eigen_decompose(d: &Mat<f64>) -> Result<(Vec<Complex64>, Mat<f64>)> {
    let n = d.nrows();
    if n != d.ncols() {
        return Err(RenormError::MismatchedDomain(n as f64, d.ncols() as f64));
    }
    let eigen = d
        .eigen()
        .map_err(|e| RenormError::IterationFailure(format!("eigensolver: {e:?}")))?;
    let u = eigen.U();
    let s = eigen.S();
    let values: Vec<Complex64> = (0..n).map(|k| Complex64::new(s[k].re, s[k].im)).collect();

    let column = |k: usize| -> Vec<Complex64> {
        (0..n).map(|r| Complex64::new(u[(r, k)].re, u[(r, k)].im)).collect()
    };

    let mut items: Vec<EigenItem> = Vec::new();
    let mut k = 0;
    while k < n {
        let lam = values[k];
        if lam.im == 0.0 {
            let col: Vec<f64> = column(k).iter().map(|z| z.re).collect();
            items.push(EigenItem {
                value: lam,
                columns: EigenColumns::Real(col),
            });
            k += 1;
        } else {
            if k + 1 >= n || (values[k + 1] - lam.conj()).norm() > 1e-10 * (1.0 + lam.norm()) {
                return Err(RenormError::IterationFailure(
                    "unpaired complex eigenvalue in real decomposition".into(),
                ));
            }
            // Canonical member: positive imaginary part.
            let (lam, mut vec) = if lam.im > 0.0 {
                (lam, column(k))
            } else {
                (lam.conj(), column(k).iter().map(|z| z.conj()).collect())
            };
            // Fix the phase: largest-modulus entry real positive.
            let imax = (0..n)
                .max_by(|&a, &b| vec[a].norm().total_cmp(&vec[b].norm()))
                .unwrap();
            let mag = vec[imax].norm();
            if mag > 0.0 {
                let phase = vec[imax] / mag;
                for z in vec.iter_mut() {
                    *z /= phase;
                }
            }
            items.push(EigenItem {
                value: lam,
                columns: EigenColumns::Pair(
                    vec.iter().map(|z| z.re).collect(),
                    vec.iter().map(|z| z.im).collect(),
                ),
            });
            k += 2;
        }
    }

    items.sort_by(|a, b| {
        b.value
            .norm()
            .total_cmp(&a.value.norm())
            .then(b.value.re.total_cmp(&a.value.re))
            .then(b.value.im.total_cmp(&a.value.im))
    });

    let mut sorted = Vec::with_capacity(n);
    let mut a = Mat::<f64>::zeros(n, n);
    let mut col = 0;
    for item in items {
        match item.columns {
            EigenColumns::Real(mut v) => {
                let imax = (0..n)
                    .max_by(|&p, &q| v[p].abs().total_cmp(&v[q].abs()))
                    .unwrap();
                let sign = if v[imax] < 0.0 { -1.0 } else { 1.0 };
                let norm: f64 = v.iter().map(|x| x.abs()).sum();
                let scale = if norm > 0.0 { sign / norm } else { 1.0 };
                for x in v.iter_mut() {
                    *x *= scale;
                }
                for r in 0..n {
                    a[(r, col)] = v[r];
                }
                sorted.push(item.value);
                col += 1;
            }
            EigenColumns::Pair(re, im) => {
                let norm: f64 = re
                    .iter()
                    .zip(&im)
                    .map(|(x, y)| x.hypot(*y))
                    .sum();
                let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
                for r in 0..n {
                    a[(r, col)] = re[r] * scale;
                    a[(r, col + 1)] = im[r] * scale;
                }
                sorted.push(item.value);
                sorted.push(item.value.conj());
                col += 2;
            }
        }
    }
    Ok((sorted, a))
}

/// Norm-equivalence constant of the eigenvector basis change:
/// α = max(Σ_rows ‖row‖_∞, 1).
pub fn equivalence_constant(a: &Mat<f64>) -> f64 {
    let mut total = 0.0;
    for r in 0..a.nrows() {
        let mut sup: f64 = 0.0;
        for c in 0..a.ncols() {
            sup = sup.max(a[(r, c)].abs());
        }
        total += sup;
    }
    total.max(1.0)
}

// ---------------------------------------------------------------------------
// Projected norms
// ---------------------------------------------------------------------------

/// Coupling of a tail basis mode into the two leading eigendirections.
struct TailSample {
    poly_degree: usize,
    w1: f64,
    w2: f64,
}

/// Pure bookkeeping part of [`projected_norms`]: combine the assembled
/// columns, the eigenbasis change, and the tail-mode samples into the six
/// norm estimates.
fn norms_from_parts(
    op: &AssembledOperator,
    a: &Mat<f64>,
    b: &Mat<f64>,
    tail_samples: &[TailSample],
    m: usize,
) -> [f64; 6] {
    let head = op.head_dim();
    let full = op.full_dim();

    // Images of the two leading eigendirections, in full coordinates.
    let image = |k: usize| -> (Vec<f64>, f64) {
        let mut coords = vec![0.0; full];
        let mut tail = 0.0;
        for n in 0..head {
            let w = a[(n, k)];
            if w != 0.0 {
                for r in 0..full {
                    coords[r] += w * op.full[(r, n)];
                }
                tail += w.abs() * op.tails[n];
            }
        }
        (coords, tail)
    };
    let e_coords = |coords: &[f64]| -> Vec<f64> {
        (0..head)
            .map(|r| (0..head).map(|c| b[(r, c)] * coords[c]).sum())
            .collect()
    };

    let (img1, tail1) = image(0);
    let (img2, tail2) = image(1);
    let w_e1 = e_coords(&img1);
    let w_e2 = e_coords(&img2);

    let beyond = |img: &[f64], tail: f64| -> f64 {
        img[head..].iter().map(|c| c.abs()).sum::<f64>() + tail
    };
    let n1 = w_e1[1].abs();
    let n2 = w_e2[0].abs();
    let n3 = w_e1[2..].iter().map(|c| c.abs()).sum::<f64>() + beyond(&img1, tail1);
    let n4 = w_e2[2..].iter().map(|c| c.abs()).sum::<f64>() + beyond(&img2, tail2);

    // Source directions spanning the complement of {e1, e2}: remaining
    // eigenvector columns (their images follow from the assembled columns
    // by linearity) and the tail basis modes (sampled directly).
    let mut n5: f64 = 0.0;
    let mut n6: f64 = 0.0;
    for k in 2..head {
        let (img, _) = image(k);
        let w = e_coords(&img);
        n5 = n5.max(w[0].abs());
        n6 = n6.max(w[1].abs());
    }
    // Calibrate the analytic decay model |w| ≤ C (ρ/ρ′)^degree on the
    // sampled modes, then bound every deeper (uncomputed) mode by the
    // model at the first untabulated degree.  In the ℓ¹-style norm the
    // operator norm over a span is the supremum over basis directions, so
    // a maximum (not a sum) is the right combination rule.
    let ratio = 1.0 / RADIUS_GROWTH;
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    for t in tail_samples {
        n5 = n5.max(t.w1);
        n6 = n6.max(t.w2);
        let grow = RADIUS_GROWTH.powi(t.poly_degree as i32);
        c1 = c1.max(t.w1 * grow);
        c2 = c2.max(t.w2 * grow);
    }
    let deep = ratio.powi(m as i32 + 1);
    n5 = n5.max(c1 * deep);
    n6 = n6.max(c2 * deep);

    [n1, n2, n3, n4, n5, n6]
}

/// The six projected operator norms in the eigenbasis coordinates:
/// ‖P₂ℒe₁‖, ‖P₁ℒe₂‖, ‖P_{>2}ℒe₁‖, ‖P_{>2}ℒe₂‖, ‖P₁ℒP_{>2}‖, ‖P₂ℒP_{>2}‖,
/// where e₁, e₂ are the two leading eigendirections (columns of `a`), B is
/// the inverse basis change, and P_{>2} is the complement of their span.
/// The two source norms are estimated by maximizing over all remaining
/// basis directions plus the analytic decay bound for modes beyond the
/// table.  Floating-point estimates, not rigorous bounds.
pub fn projected_norms(
    s: &GenFunction,
    c0: f64,
    table: &BasisTable,
    a: &Mat<f64>,
    b: &Mat<f64>,
) -> Result<[f64; 6]> {
    let head = a.nrows();
    if head < 3 || a.ncols() != head || b.nrows() != head || b.ncols() != head {
        return Err(RenormError::IterationFailure(
            "projected norms need a square eigenbasis of dimension at least 3".into(),
        ));
    }
    let ws = RenormWorkspace::new(s, c0)?;
    let op = assemble_columns(table, head, |psi| ws.derivative(psi))?;
    let b_row = |r: usize| -> Vec<f64> { (0..head).map(|c| b[(r, c)]).collect() };
    let b1 = b_row(0);
    let b2 = b_row(1);
    let tail_samples: Vec<TailSample> = table.entries[head..]
        .par_iter()
        .map(|e| {
            let d = ws.derivative(&e.psi)?;
            let coords = expand_in_basis(&d, table)?;
            let dot = |row: &[f64]| -> f64 {
                row.iter().zip(&coords).map(|(x, y)| x * y).sum()
            };
            Ok(TailSample {
                poly_degree: e.poly_degree(),
                w1: dot(&b1).abs(),
                w2: dot(&b2).abs(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(norms_from_parts(&op, a, b, &tail_samples, table.m()))
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Everything the spectral analysis produces at one base point.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// All head eigenvalues as (re, im), modulus-descending.
    pub eigenvalues: Vec<[f64; 2]>,
    /// Leading eigenvalue (the area-mode expanding rate).
    pub delta1: f64,
    /// Second eigenvalue (the reciprocal of the spatial scaling).
    pub delta2: f64,
    /// Modulus of the third eigenvalue plus the per-column tail bound:
    /// estimate of the spectral radius on the stable complement.
    pub stable_radius: f64,
    /// Norm-equivalence constant of the eigenvector basis.
    pub alpha: f64,
    /// The six projected norms of [`projected_norms`].
    pub projected_norms: [f64; 6],
    /// δ from the ℓ¹ inverse certificate of the eigenvector matrix.
    pub inverse_delta: f64,
}

/// Assemble the derivative matrix at a fixed point, decompose it, and
/// produce the full spectral report: the two expanding eigenvalues, the
/// stable-radius estimate (third eigenvalue modulus plus tail-column
/// bound), the equivalence constant, the projected norms, and the
/// inverse-certificate bound for the basis change.
pub fn stable_spectral_radius(
    s_star: &GenFunction,
    c0: f64,
    table: &BasisTable,
) -> Result<SpectrumReport> {
    use faer::linalg::solvers::DenseSolveCore;
    let head = table.head_len();
    let op = assemble_matrix(s_star, c0, table, head)?;
    let (values, a) = eigen_decompose(&op.head)?;
    let b = a.partial_piv_lu().inverse();
    let (inverse_delta, _, _) = crate::fixpoint::inverse_certificate(&a, &b)?;
    let projected = projected_norms(s_star, c0, table, &a, &b)?;
    let stable_radius = if values.len() > 2 {
        values[2].norm() + op.tail_column_bound()
    } else {
        0.0
    };
    Ok(SpectrumReport {
        eigenvalues: values.iter().map(|z| [z.re, z.im]).collect(),
        delta1: values[0].re,
        delta2: values[1].re,
        stable_radius,
        alpha: equivalence_constant(&a),
        projected_norms: projected,
        inverse_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const RHO: f64 = 1.75;

    #[test]
    fn rank_matches_stated_enumeration() {
        assert_eq!(mode_rank(-1, 0, 60), Some(1));
        assert_eq!(mode_rank(-1, 1, 60), Some(2));
        assert_eq!(mode_rank(-1, 60, 60), Some(61));
        assert_eq!(mode_rank(0, 0, 60), Some(62));
        assert_eq!(family_size(22), 155);
        assert_eq!(family_size(60), 991);
    }

    #[test]
    fn rank_pair_bijection() {
        for m in [5usize, 22, 60] {
            let d = family_size(m);
            let mut seen = std::collections::HashSet::new();
            for k in 1..=d {
                let (i, j) = mode_pair(k, m).expect("pair exists");
                assert!(i >= -1 && j >= i.max(0) && i + j < m as i64);
                assert_eq!(mode_rank(i, j, m), Some(k));
                assert!(seen.insert((i, j)));
            }
            assert_eq!(mode_pair(d + 1, m), None);
            assert_eq!(mode_rank(-1, m as i64 + 1, m), None);
            assert_eq!(mode_rank(1, 0, m), None);
        }
    }

    #[test]
    fn basis_entries_are_unit_and_symmetric() {
        let table = build_basis(6, 12, RHO).unwrap();
        assert_eq!(table.head_len(), family_size(6));
        assert_eq!(table.full_len(), family_size(12));
        for e in table.entries() {
            assert!((e.psi.norm_rho() - 1.0).abs() <= 1e-14, "mode ({}, {})", e.i, e.j);
            assert!(e.psi.symmetry_defect() <= 1e-13);
        }
        // The first mode is the constant 1.
        assert_eq!(table.entries()[0].psi.get(0, 0), 1.0);
        assert_eq!(table.entries()[0].rank, 1);
    }

    #[test]
    fn mixed_mode_normalization_matches_closed_form() {
        // ψ̃_{0,1} = xy + x²/2 has norm 1.5ρ².
        let norm = tilde_norm(0, 1, RHO);
        assert!((norm - 1.5 * RHO * RHO).abs() <= 1e-15);
        let table = build_basis(4, 8, RHO).unwrap();
        let e = table
            .entries()
            .iter()
            .find(|e| e.i == 0 && e.j == 1)
            .unwrap();
        assert!((e.psi.get(1, 1) - 1.0 / norm).abs() <= 1e-16);
        assert!((e.psi.get(2, 0) - 0.5 / norm).abs() <= 1e-16);
    }

    #[test]
    fn expand_unit_vector() {
        let table = build_basis(4, 10, RHO).unwrap();
        let coords = expand_in_basis(&table.entries()[4].psi, &table).unwrap();
        for (idx, c) in coords.iter().enumerate() {
            let expect = if idx == 4 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() <= 1e-14, "coordinate {idx} = {c}");
        }
    }

    #[test]
    fn expand_round_trip_and_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let table = build_basis(8, 20, RHO).unwrap();
        for _ in 0..5 {
            let coords: Vec<f64> = (0..table.full_len())
                .map(|_| rng.gen::<f64>() - 0.5)
                .collect();
            let p = reconstruct_in_basis(&coords, &table).unwrap();
            let back = expand_in_basis(&p, &table).unwrap();
            let worst = coords
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1e-13, "round-trip defect {worst}");
            let l1: f64 = back.iter().map(|c| c.abs()).sum();
            assert!(
                (l1 - p.norm_rho()).abs() <= 1e-12 * (1.0 + l1),
                "isometry defect {}",
                (l1 - p.norm_rho()).abs()
            );
            // Entrywise reconstruction check.
            let again = reconstruct_in_basis(&back, &table).unwrap();
            assert!(again.sub(&p).unwrap().norm_rho() <= 1e-13 * (1.0 + p.norm_rho()));
        }
    }

    #[test]
    fn expand_rejects_asymmetric_series() {
        let table = build_basis(4, 8, RHO).unwrap();
        let p = Poly2::monomial(8, RHO, 2, 0, 1.0).unwrap();
        match expand_in_basis(&p, &table) {
            Err(RenormError::NotSymmetric { .. }) => {}
            other => panic!("expected NotSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn assembly_columns_are_linear_in_the_direction() {
        // Exact directional derivatives are linear, so the image of
        // ψ_a + ψ_b must equal the sum of the two columns.  The toy
        // −1 + x + y + y²/8 has its scaling root at exactly −1/4.
        let mut s = Poly2::zero(16, RHO);
        s.set(0, 0, -1.0).unwrap();
        s.set(1, 0, 1.0).unwrap();
        s.set(0, 1, 1.0).unwrap();
        s.set(0, 2, 0.125).unwrap();
        let s = GenFunction::new(s).unwrap();
        let ws = RenormWorkspace::new_plain(&s).unwrap();
        let table = build_basis(3, 8, RHO).unwrap();
        let pa = &table.entries()[1].psi;
        let pb = &table.entries()[3].psi;
        let da = ws.derivative(pa).unwrap();
        let db = ws.derivative(pb).unwrap();
        let dsum = ws.derivative(&pa.add(pb).unwrap()).unwrap();
        let defect = dsum.sub(&da.add(&db).unwrap()).unwrap().norm_rho();
        assert!(defect <= 1e-12 * (1.0 + dsum.norm_rho()), "defect {defect}");
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let mut d = Mat::<f64>::zeros(3, 3);
        d[(0, 0)] = 1.0;
        d[(1, 1)] = 3.0;
        d[(2, 2)] = 2.0;
        let (vals, a) = eigen_decompose(&d).unwrap();
        let expect = [3.0, 2.0, 1.0];
        for (v, e) in vals.iter().zip(expect) {
            assert!((v.re - e).abs() <= 1e-12 && v.im == 0.0);
        }
        // Eigenvector columns are signed unit coordinates.
        let perm = [1usize, 2, 0];
        for (col, row) in perm.iter().enumerate() {
            for r in 0..3 {
                let expect = if r == *row { 1.0 } else { 0.0 };
                assert!((a[(r, col)] - expect).abs() <= 1e-12);
            }
        }
    }

    /// Real block-diagonal form matching the storage convention of
    /// [`eigen_decompose`].
    fn lambda_blocks(vals: &[Complex64]) -> Mat<f64> {
        let n = vals.len();
        let mut lam = Mat::<f64>::zeros(n, n);
        let mut k = 0;
        while k < n {
            if vals[k].im == 0.0 {
                lam[(k, k)] = vals[k].re;
                k += 1;
            } else {
                let (a, b) = (vals[k].re, vals[k].im);
                lam[(k, k)] = a;
                lam[(k, k + 1)] = b;
                lam[(k + 1, k)] = -b;
                lam[(k + 1, k + 1)] = a;
                k += 2;
            }
        }
        lam
    }

    fn residual(d: &Mat<f64>, a: &Mat<f64>, vals: &[Complex64]) -> f64 {
        let lam = lambda_blocks(vals);
        let lhs = d * a;
        let rhs = a * &lam;
        let mut diff = Mat::<f64>::zeros(d.nrows(), d.ncols());
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                diff[(r, c)] = lhs[(r, c)] - rhs[(r, c)];
            }
        }
        l1_op_norm(&diff)
    }

    #[test]
    fn eigen_rotation_recovers_conjugate_pair() {
        let (sigma, theta) = (2.0, 0.3f64);
        let mut d = Mat::<f64>::zeros(2, 2);
        d[(0, 0)] = sigma * theta.cos();
        d[(0, 1)] = -sigma * theta.sin();
        d[(1, 0)] = sigma * theta.sin();
        d[(1, 1)] = sigma * theta.cos();
        let (vals, a) = eigen_decompose(&d).unwrap();
        assert!((vals[0].norm() - sigma).abs() <= 1e-12);
        assert!(vals[0].im > 0.0);
        assert!((vals[1] - vals[0].conj()).norm() <= 1e-12);
        assert!(residual(&d, &a, &vals) <= 1e-12 * l1_op_norm(&d));
    }

    #[test]
    fn eigen_residual_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 8;
        let mut d = Mat::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                d[(r, c)] = rng.gen::<f64>() - 0.5;
            }
        }
        let (vals, a) = eigen_decompose(&d).unwrap();
        assert!(residual(&d, &a, &vals) <= 1e-10 * l1_op_norm(&d));
        // Spectrum closed under conjugation.
        for v in &vals {
            if v.im != 0.0 {
                assert!(vals.iter().any(|w| (w - v.conj()).norm() <= 1e-10));
            }
        }
        // Descending modulus.
        for w in vals.windows(2) {
            assert!(w[0].norm() >= w[1].norm() - 1e-14);
        }
    }

    #[test]
    fn equivalence_constant_examples() {
        let mut id = Mat::<f64>::zeros(5, 5);
        let mut small = Mat::<f64>::zeros(4, 4);
        for k in 0..5 {
            id[(k, k)] = 1.0;
        }
        for k in 0..4 {
            small[(k, k)] = 0.1;
        }
        assert_eq!(equivalence_constant(&id), 5.0);
        assert_eq!(equivalence_constant(&small), 1.0);
    }

    #[test]
    fn cross_norms_vanish_for_diagonal_toy() {
        // A perfectly diagonalized operator with no tail leaks nothing
        // across the eigendirections.
        let head = 3;
        let full = 5;
        let mut head_mat = Mat::<f64>::zeros(head, head);
        let mut full_mat = Mat::<f64>::zeros(full, head);
        for (k, lam) in [3.0, 2.0, 0.5].iter().enumerate() {
            head_mat[(k, k)] = *lam;
            full_mat[(k, k)] = *lam;
        }
        let op = AssembledOperator {
            head: head_mat,
            full: full_mat,
            tails: vec![0.0; head],
        };
        let mut id = Mat::<f64>::zeros(head, head);
        for k in 0..head {
            id[(k, k)] = 1.0;
        }
        let norms = norms_from_parts(&op, &id, &id, &[], 8);
        for (k, v) in norms.iter().enumerate() {
            assert!(*v == 0.0, "norm {k} = {v}");
        }
    }

    #[test]
    fn tail_column_bound_counts_beyond_head_mass() {
        let mut full = Mat::<f64>::zeros(4, 2);
        full[(0, 0)] = 1.0;
        full[(2, 0)] = 0.25;
        full[(3, 1)] = 0.5;
        let op = AssembledOperator {
            head: Mat::<f64>::zeros(2, 2),
            full,
            tails: vec![0.125, 0.0],
        };
        assert!((op.tail_column_bound() - 0.5).abs() <= 1e-15);
    }
}

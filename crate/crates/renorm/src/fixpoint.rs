//! Deflated fixed-point search and floating-point certificates.
//!
//! The shifted renormalization operator has two expanding eigendirections
//! at its fixed point, so plain Picard iteration diverges.  The cure is
//! deflation: with P₁, P₂ the oblique projections onto the two leading
//! eigendirections and K = δ̂₁P₁ + δ̂₂P₂, the map
//!
//! ```text
//! 𝒩[h] = h + ℛ[s₀ + Mh] − (s₀ + Mh),      M = (I − K)⁻¹
//! ```
//!
//! has derivative (ℒ − K)M at a fixed point: the expanding modes are
//! cancelled and the iteration contracts at the rate of the stable
//! spectrum.  This module implements that iteration, a head-Newton
//! cross-check, and the two ℓ¹ certificates (approximate-inverse quality
//! and contraction estimate).  All certificate numbers are floating-point
//! diagnostics, not proofs.

use crate::error::{RenormError, Result};
use crate::genfun::{renorm_c, renorm_c_warm, RenormWorkspace};
use crate::spectrum::{
    assemble_matrix, build_basis, eigen_decompose, equivalence_constant, expand_in_basis,
    l1_op_norm, reconstruct_in_basis, BasisTable,
};
use crate::taylor2::{GenFunction, Poly2};
use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Default radius of the sampling ball for the contraction estimate.
pub const SAMPLING_BALL: f64 = 6.0e-12;

/// Safety radius for the Picard iterate: when ‖h‖ leaves this ball the
/// iteration is declared divergent.
pub const WORKING_BALL: f64 = 5.79833984375e-4;

/// Relative tolerance for Picard convergence.
pub const PICARD_TOL: f64 = 1e-14;

/// Iteration cap for the Picard loop.
pub const MAX_PICARD_ITER: usize = 200;

// ---------------------------------------------------------------------------
// Deflation data
// ---------------------------------------------------------------------------

/// The two leading eigendirections with their eigenvalues and dual rows.
///
/// `e1`, `e2` are unit-norm series spanning the expanding directions;
/// `f1`, `f2` are the corresponding rows of the inverse eigenvector matrix
/// in head coordinates, so that the oblique projection onto mode k reads
/// P_k h = (f_k · ĥ) e_k with ĥ the head expansion coefficients of h.
#[derive(Debug, Clone)]
pub struct DeflationData {
    pub e1: Poly2,
    pub e2: Poly2,
    pub delta1_hat: f64,
    pub delta2_hat: f64,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl DeflationData {
    /// Extract the deflation data from a decomposed head matrix: `values`
    /// and `a` from [`eigen_decompose`], `b` the inverse of `a`.
    pub fn from_modes(
        values: &[Complex64],
        a: &Mat<f64>,
        b: &Mat<f64>,
        table: &BasisTable,
    ) -> Result<Self> {
        let head = a.nrows();
        if values.len() < 2 || head != table.head_len() || b.nrows() != head {
            return Err(RenormError::IterationFailure(
                "deflation needs the two leading modes of the head matrix".into(),
            ));
        }
        for v in &values[..2] {
            if v.im.abs() > 1e-9 * (1.0 + v.norm()) {
                return Err(RenormError::IterationFailure(format!(
                    "leading eigenvalue {v} is not real"
                )));
            }
            if v.norm() <= 1.0 {
                return Err(RenormError::IterationFailure(format!(
                    "deflation mode with eigenvalue {v} is not expanding"
                )));
            }
        }
        let column_poly = |k: usize| -> Result<Poly2> {
            let mut coords = vec![0.0; table.full_len()];
            for r in 0..head {
                coords[r] = a[(r, k)];
            }
            reconstruct_in_basis(&coords, table)
        };
        let row = |k: usize| -> Vec<f64> { (0..head).map(|c| b[(k, c)]).collect() };
        let e1 = column_poly(0)?;
        let e2 = column_poly(1)?;
        for e in [&e1, &e2] {
            if (e.norm_rho() - 1.0).abs() > 1e-9 {
                return Err(RenormError::IterationFailure(
                    "deflation mode is not unit-norm".into(),
                ));
            }
        }
        Ok(DeflationData {
            e1,
            e2,
            delta1_hat: values[0].re,
            delta2_hat: values[1].re,
            f1: row(0),
            f2: row(1),
        })
    }

    fn head_projections(&self, h: &Poly2, table: &BasisTable) -> Result<(f64, f64)> {
        let coords = expand_in_basis(h, table)?;
        let dot = |f: &[f64]| -> f64 {
            f.iter().zip(&coords).map(|(x, y)| x * y).sum()
        };
        Ok((dot(&self.f1), dot(&self.f2)))
    }

    /// M h = h + Σ_k (1/(1−δ̂_k) − 1) (f_k·ĥ) e_k, the inverse of I − K.
    pub fn apply_m(&self, h: &Poly2, table: &BasisTable) -> Result<Poly2> {
        let (p1, p2) = self.head_projections(h, table)?;
        let mut out = h.clone();
        out.axpy((1.0 / (1.0 - self.delta1_hat) - 1.0) * p1, &self.e1)?;
        out.axpy((1.0 / (1.0 - self.delta2_hat) - 1.0) * p2, &self.e2)?;
        Ok(out)
    }

    /// K h = δ̂₁ (f₁·ĥ) e₁ + δ̂₂ (f₂·ĥ) e₂.
    pub fn apply_k(&self, h: &Poly2, table: &BasisTable) -> Result<Poly2> {
        let (p1, p2) = self.head_projections(h, table)?;
        let mut out = Poly2::zero(h.deg(), h.rho());
        out.axpy(self.delta1_hat * p1, &self.e1)?;
        out.axpy(self.delta2_hat * p2, &self.e2)?;
        Ok(out)
    }

    /// Assemble the head matrix at `s`, decompose it, and extract the two
    /// leading modes: the standard preparation for [`find_fixed_point`].
    pub fn from_operator(s: &GenFunction, c0: f64, table: &BasisTable) -> Result<Self> {
        let op = assemble_matrix(s, c0, table, table.head_len())?;
        let (vals, a) = eigen_decompose(&op.head)?;
        let b = a.partial_piv_lu().inverse();
        Self::from_modes(&vals, &a, &b, table)
    }

    /// Head-coordinate matrices (K, M) for matrix-level bounds.
    fn head_matrices(&self, table: &BasisTable) -> Result<(Mat<f64>, Mat<f64>)> {
        let head = table.head_len();
        let mut k_mat = Mat::<f64>::zeros(head, head);
        let mut m_mat = Mat::<f64>::zeros(head, head);
        for d in 0..head {
            m_mat[(d, d)] = 1.0;
        }
        for (e, f, delta) in [
            (&self.e1, &self.f1, self.delta1_hat),
            (&self.e2, &self.f2, self.delta2_hat),
        ] {
            let coords = expand_in_basis(e, table)?;
            let kappa = 1.0 / (1.0 - delta) - 1.0;
            for r in 0..head {
                if coords[r] == 0.0 {
                    continue;
                }
                for c in 0..head {
                    k_mat[(r, c)] += delta * coords[r] * f[c];
                    m_mat[(r, c)] += kappa * coords[r] * f[c];
                }
            }
        }
        Ok((k_mat, m_mat))
    }
}

// ---------------------------------------------------------------------------
// Fixed-point iteration
// ---------------------------------------------------------------------------

/// Converged fixed point with iteration diagnostics.
#[derive(Debug, Clone)]
pub struct FixedPointRun {
    pub s_star: GenFunction,
    pub iterations: usize,
    pub residual: f64,
}

/// Picard-iterate the deflated map 𝒩 from h = 0 until
/// ‖𝒩[h] − h‖ ≤ 1e−14·(1 + ‖h‖) and return s* = s₀ + M h.
///
/// With `defl = None` the map degenerates to plain Picard on s (M = I,
/// K = 0), which diverges whenever expanding modes are present — useful
/// only as a control.
pub fn find_fixed_point(
    s0: &GenFunction,
    c0: f64,
    defl: Option<&DeflationData>,
    table: &BasisTable,
) -> Result<FixedPointRun> {
    let mut h = Poly2::zero(s0.deg(), s0.rho());
    let mut warm: Option<Poly2> = None;
    let mut last_residual = f64::INFINITY;
    for iter in 1..=MAX_PICARD_ITER {
        let mh = match defl {
            Some(d) => d.apply_m(&h, table)?,
            None => h.clone(),
        };
        let s_cur = GenFunction::new(s0.poly().add(&mh)?)?;
        let out = renorm_c_warm(&s_cur, c0, warm.as_ref())?;
        warm = Some(out.z.clone());
        // The difference of two nearly equal symmetric series carries
        // rounding-level asymmetry far above its own tiny scale; project
        // it out (the operator preserves the symmetric subspace).
        let g = out.s_out.poly().sub(s_cur.poly())?.symmetrize();
        let residual = g.norm_rho();
        last_residual = residual;
        if residual <= PICARD_TOL * (1.0 + h.norm_rho()) {
            log::debug!("picard converged: iter {iter}, residual {residual:.3e}");
            return Ok(FixedPointRun {
                s_star: s_cur,
                iterations: iter,
                residual,
            });
        }
        h.axpy(1.0, &g)?;
        let norm = h.norm_rho();
        log::debug!("picard iter {iter}: residual {residual:.3e}, ‖h‖ {norm:.3e}");
        if !norm.is_finite() || norm > WORKING_BALL {
            return Err(RenormError::Diverged {
                norm,
                bound: WORKING_BALL,
            });
        }
    }
    Err(RenormError::NoConvergence {
        what: "deflated fixed-point iteration",
        iters: MAX_PICARD_ITER,
        residual: last_residual,
    })
}

/// One dense Newton step on the head coefficients with the tail updated by
/// a Picard sweep: the cross-check for [`find_fixed_point`].
///
/// With `n_head = 0` the call degenerates to a single plain Picard step
/// s ← ℛ[s].
pub fn newton_head_refine(s: &GenFunction, c0: f64, n_head: usize) -> Result<GenFunction> {
    let before = renorm_c(s, c0)?;
    // Symmetrized for the same reason as in [`find_fixed_point`].
    let r0 = before.s_out.poly().sub(s.poly())?.symmetrize();
    if n_head == 0 {
        log::debug!("head refine (picard): residual {:.3e}", r0.norm_rho());
        return Ok(before.s_out);
    }
    let table = build_basis(n_head, s.deg(), s.rho())?;
    let head = table.head_len();
    let op = assemble_matrix(s, c0, &table, head)?;
    let r_coords = expand_in_basis(&r0, &table)?;
    // Solve (D − I) δ = −r on the head block.
    let mut jac = op.head.clone();
    let mut rhs = Mat::<f64>::zeros(head, 1);
    for k in 0..head {
        jac[(k, k)] -= 1.0;
        rhs[(k, 0)] = -r_coords[k];
    }
    let delta = jac.partial_piv_lu().solve(&rhs);
    let mut check = 0.0f64;
    let mut scale = 0.0f64;
    for r in 0..head {
        let mut acc = 0.0;
        for c in 0..head {
            acc += jac[(r, c)] * delta[(c, 0)];
        }
        check = check.max((acc - rhs[(r, 0)]).abs());
        scale = scale.max(rhs[(r, 0)].abs());
    }
    if !check.is_finite() || check > 1e-6 * (1.0 + scale) {
        return Err(RenormError::SingularJacobian);
    }
    let mut coords = vec![0.0; table.full_len()];
    for k in 0..head {
        coords[k] = delta[(k, 0)];
    }
    let s1 = GenFunction::new(s.poly().add(&reconstruct_in_basis(&coords, &table)?)?)?;
    // Tail Picard sweep at the refined head.
    let after = renorm_c(&s1, c0)?;
    let g = after.s_out.poly().sub(s1.poly())?.symmetrize();
    let mut g_coords = expand_in_basis(&g, &table)?;
    for c in g_coords.iter_mut().take(head) {
        *c = 0.0;
    }
    let refined = GenFunction::new(s1.poly().add(&reconstruct_in_basis(&g_coords, &table)?)?)?;
    log::debug!(
        "head refine: residual {:.3e} → head step ‖δ‖₁ {:.3e}, tail step {:.3e}",
        r0.norm_rho(),
        (0..head).map(|k| delta[(k, 0)].abs()).sum::<f64>(),
        g_coords.iter().map(|c| c.abs()).sum::<f64>()
    );
    Ok(refined)
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Quality certificate for an approximate inverse B₀ of A, all in the ℓ¹
/// operator norm: with the right residual R = I − A·B₀ and 𝒟 = ‖R‖₁ < 1,
/// the Neumann series gives A⁻¹ = B₀(I − R)⁻¹, hence
/// ‖A⁻¹ − B₀‖₁ ≤ ‖B₀‖₁·ε/(1 − 𝒟) ≡ δ with ε = ‖R‖₁ (the residual of the
/// defect iteration at z = 0).  Returns (δ, 𝒟, ε).
pub fn inverse_certificate(a: &Mat<f64>, b0: &Mat<f64>) -> Result<(f64, f64, f64)> {
    let n = a.nrows();
    if a.ncols() != n || b0.nrows() != n || b0.ncols() != n {
        return Err(RenormError::MismatchedDomain(n as f64, b0.nrows() as f64));
    }
    let prod = a * b0;
    let mut resid = Mat::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let id = if r == c { 1.0 } else { 0.0 };
            resid[(r, c)] = id - prod[(r, c)];
        }
    }
    let d = l1_op_norm(&resid);
    let eps = d;
    if !(d < 1.0) {
        return Err(RenormError::NotContractive(d));
    }
    let delta = l1_op_norm(b0) * eps / (1.0 - d);
    Ok((delta, d, eps))
}

/// Floating-point contraction certificate for the deflated map.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    /// Residual ‖ℛ[s] − s‖ at the certificate's base point.
    pub epsilon: f64,
    /// Estimated sup of ‖D𝒩‖: the eigen-coordinate head-matrix column
    /// bound combined with a sampled sup over random directions.
    pub d_bound: f64,
    /// Norm-equivalence constant of the eigenvector basis.
    pub alpha: f64,
    /// ε < (1 − 𝒟)·α⁻¹·ϱ, the ball condition for the contraction argument.
    pub radius_ok: bool,
}

/// Estimate the contraction certificate at `s_star`: ε exactly (one
/// operator application), 𝒟 as the maximum of (a) the head-matrix column
/// bound on (ℒ − K)M taken in the eigenbasis coordinates — where the
/// deflated operator is near-diagonal, so the column norms reflect the
/// stable rates instead of the skew of the raw basis — including each
/// source column's beyond-head and beyond-degree mass, and (b) a sampled
/// sup over `n_samples` random base-point perturbations h in the
/// `rho_ball`-ball and random unit directions ψ.  Deterministic for a
/// fixed `seed`.
pub fn contraction_certificate(
    s_star: &GenFunction,
    c0: f64,
    defl: Option<&DeflationData>,
    table: &BasisTable,
    rho_ball: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Certificate> {
    let out = renorm_c(s_star, c0)?;
    let epsilon = out.s_out.poly().sub(s_star.poly())?.norm_rho();

    let head = table.head_len();
    let op = assemble_matrix(s_star, c0, table, head)?;

    // Head bound: per-column ℓ¹ mass of (ℒ − K)M over head directions, in
    // the eigenbasis coordinates (deflation zeroes the expanding modes
    // there, leaving the stable rates on the diagonal), plus each source
    // column's beyond-head and beyond-degree content.
    let (k_mat, m_mat) = match defl {
        Some(d) => d.head_matrices(table)?,
        None => {
            let mut m = Mat::<f64>::zeros(head, head);
            for k in 0..head {
                m[(k, k)] = 1.0;
            }
            (Mat::<f64>::zeros(head, head), m)
        }
    };
    let (_, a) = eigen_decompose(&op.head)?;
    let b = a.partial_piv_lu().inverse();
    let fma = &(&op.full * &m_mat) * &a;
    let kma = &(&k_mat * &m_mat) * &a;
    let ma = &m_mat * &a;
    let mut diff = Mat::<f64>::zeros(head, head);
    for r in 0..head {
        for c in 0..head {
            diff[(r, c)] = fma[(r, c)] - kma[(r, c)];
        }
    }
    let t_eig = &b * &diff;
    let mut head_bound: f64 = 0.0;
    for n in 0..head {
        let mut mass: f64 = (0..head).map(|r| t_eig[(r, n)].abs()).sum();
        for r in head..op.full_dim() {
            mass += fma[(r, n)].abs();
        }
        for l in 0..head {
            mass += ma[(l, n)].abs() * op.tails[l];
        }
        head_bound = head_bound.max(mass);
    }

    // Sampled directions: random base point in the ball, random unit ψ.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn random_series(rng: &mut ChaCha8Rng, table: &BasisTable, norm: f64) -> Result<Poly2> {
        let coords: Vec<f64> = (0..table.full_len())
            .map(|_| rng.gen::<f64>() - 0.5)
            .collect();
        let p = reconstruct_in_basis(&coords, table)?;
        let scale = norm / p.norm_rho();
        Ok(p.scale(scale))
    }
    let mut pairs = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let radius: f64 = rng.gen::<f64>() * rho_ball;
        let h = random_series(&mut rng, table, radius)?;
        let psi = random_series(&mut rng, table, 1.0)?;
        pairs.push((h, psi));
    }
    let sampled = pairs
        .par_iter()
        .map(|(h, psi)| -> Result<f64> {
            let (mh, mpsi, kmpsi) = match defl {
                Some(d) => {
                    let mpsi = d.apply_m(psi, table)?;
                    (
                        d.apply_m(h, table)?,
                        mpsi.clone(),
                        d.apply_k(&mpsi, table)?,
                    )
                }
                None => (h.clone(), psi.clone(), Poly2::zero(psi.deg(), psi.rho())),
            };
            let base = GenFunction::new(s_star.poly().add(&mh)?)?;
            let ws = RenormWorkspace::new(&base, c0)?;
            let image = ws.derivative(&mpsi)?;
            Ok(image.sub(&kmpsi)?.norm_rho())
        })
        .collect::<Result<Vec<f64>>>()?;
    let d_bound = sampled.into_iter().fold(head_bound, f64::max);

    let alpha = equivalence_constant(&a);
    let radius_ok = d_bound < 1.0 && epsilon < (1.0 - d_bound) / alpha * rho_ball;
    Ok(Certificate {
        epsilon,
        d_bound,
        alpha,
        radius_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::linalg::solvers::DenseSolveCore;

    const RHO: f64 = 1.75;

    #[test]
    fn inverse_certificate_exact_inverse() {
        let mut id = Mat::<f64>::zeros(4, 4);
        for k in 0..4 {
            id[(k, k)] = 1.0;
        }
        let (delta, d, eps) = inverse_certificate(&id, &id).unwrap();
        assert_eq!((delta, d, eps), (0.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_certificate_bounds_true_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let mut a = Mat::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                a[(r, c)] = 0.1 * (rng.gen::<f64>() - 0.5);
            }
            a[(r, r)] += 1.0;
        }
        let inv = a.partial_piv_lu().inverse();
        // Perturb the exact inverse by a known amount in one column.
        let mut b0 = inv.clone();
        b0[(0, 0)] += 1e-6;
        let mut true_err: f64 = 0.0;
        for c in 0..n {
            let mut col = 0.0;
            for r in 0..n {
                col += (inv[(r, c)] - b0[(r, c)]).abs();
            }
            true_err = true_err.max(col);
        }
        let (delta, d, _eps) = inverse_certificate(&a, &b0).unwrap();
        assert!(d < 1.0);
        assert!(delta >= true_err * 0.99, "delta {delta} < true {true_err}");
        assert!(delta <= 10.0 * true_err, "delta {delta} ≫ true {true_err}");
    }

    #[test]
    fn inverse_certificate_rejects_singular() {
        let a = Mat::<f64>::zeros(3, 3);
        let mut b0 = Mat::<f64>::zeros(3, 3);
        for k in 0..3 {
            b0[(k, k)] = 1.0;
        }
        match inverse_certificate(&a, &b0) {
            Err(RenormError::NotContractive(d)) => assert!(d >= 1.0),
            other => panic!("expected NotContractive, got {other:?}"),
        }
    }

    fn synthetic_deflation(table: &BasisTable) -> DeflationData {
        let head = table.head_len();
        let unit = |k: usize| {
            let mut f = vec![0.0; head];
            f[k] = 1.0;
            f
        };
        DeflationData {
            e1: table.entries()[0].psi.clone(),
            e2: table.entries()[1].psi.clone(),
            delta1_hat: 8.7,
            delta2_hat: -4.0,
            f1: unit(0),
            f2: unit(1),
        }
    }

    #[test]
    fn m_inverts_one_minus_k() {
        let table = build_basis(3, 8, RHO).unwrap();
        let defl = synthetic_deflation(&table);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coords: Vec<f64> = (0..table.full_len())
            .map(|_| rng.gen::<f64>() - 0.5)
            .collect();
        let p = reconstruct_in_basis(&coords, &table).unwrap();
        let kp = defl.apply_k(&p, &table).unwrap();
        let q = p.sub(&kp).unwrap();
        let back = defl.apply_m(&q, &table).unwrap();
        let defect = back.sub(&p).unwrap().norm_rho();
        assert!(defect <= 1e-13 * (1.0 + p.norm_rho()), "defect {defect}");
    }

    #[test]
    fn deflation_matrices_match_the_operators() {
        let table = build_basis(3, 8, RHO).unwrap();
        let defl = synthetic_deflation(&table);
        let (k_mat, m_mat) = defl.head_matrices(&table).unwrap();
        let head = table.head_len();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut coords = vec![0.0; table.full_len()];
        for c in coords.iter_mut().take(head) {
            *c = rng.gen::<f64>() - 0.5;
        }
        let p = reconstruct_in_basis(&coords, &table).unwrap();
        let kp = expand_in_basis(&defl.apply_k(&p, &table).unwrap(), &table).unwrap();
        let mp = expand_in_basis(&defl.apply_m(&p, &table).unwrap(), &table).unwrap();
        for r in 0..head {
            let mut k_acc = 0.0;
            let mut m_acc = 0.0;
            for c in 0..head {
                k_acc += k_mat[(r, c)] * coords[c];
                m_acc += m_mat[(r, c)] * coords[c];
            }
            assert!((k_acc - kp[r]).abs() <= 1e-13);
            assert!((m_acc - mp[r]).abs() <= 1e-13);
        }
    }

    #[test]
    fn zero_head_refine_is_one_picard_step() {
        // Toy with its scaling root at exactly −1/4, inside the guard window.
        let mut s = Poly2::zero(16, RHO);
        s.set(0, 0, -1.0).unwrap();
        s.set(1, 0, 1.0).unwrap();
        s.set(0, 1, 1.0).unwrap();
        s.set(0, 2, 0.125).unwrap();
        let s = GenFunction::new(s).unwrap();
        let c0 = crate::genfun::prerenorm(&s).unwrap().get(0, 3);
        let stepped = newton_head_refine(&s, c0, 0).unwrap();
        let picard = renorm_c(&s, c0).unwrap().s_out;
        let diff = stepped.poly().sub(picard.poly()).unwrap().norm_rho();
        assert!(diff <= 1e-15);
    }
}

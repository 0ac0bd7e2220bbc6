//! The renormalization operators on generating functions: the midpoint
//! solve, the pre-renormalization s ↦ s(Z(x,y), y), the full doubling
//! operators (root-solved, shifted, and frozen-scaling variants), and their
//! exact directional derivatives.
//!
//! Domain bookkeeping: inputs live on the working bi-disk (radius `s.rho()`,
//! typically 1.75).  The midpoint series Z and everything composed with it
//! live on the smaller bi-disk of radius [`INNER_RADIUS`], chosen so that the
//! final argument rescaling by any admissible λ lands back on (a superset of)
//! the working radius: INNER_RADIUS/|λ| ≥ 1.88 for every λ in the window.

use crate::error::{RenormError, Result};
use crate::taylor2::{GenFunction, Poly2, Var};

/// Radius of the bi-disk carrying the midpoint series and the
/// pre-renormalization; small enough that rescaling by any admissible λ
/// maps it over the working bi-disk.
pub const INNER_RADIUS: f64 = 0.51853174082497335;

/// Admissible window for the scaling λ; roots outside are rejected.
pub const LAMBDA_WINDOW: (f64, f64) = (-0.27569580078125, -0.222587585449219);

/// Admissible window for the scaling μ.
pub const MU_WINDOW: (f64, f64) = (0.0000253506004810333, 0.121036529541016);

/// Absolute guard for denominators before inversion.
pub const TOL_SINGULAR: f64 = 1e-8;

/// Iteration cap for the midpoint Newton solve.
pub const MAX_MIDPOINT_ITER: usize = 50;

/// Initial guess for the λ root solve (center of the admissible window's
/// interesting part).
const LAMBDA_GUESS: f64 = -0.2489;

/// Result of the midpoint solve: the series Z(x,y) with
/// s(x, Z(x,y)) + s(y, Z(x,y)) = 0.
#[derive(Debug, Clone)]
pub struct MidpointSolution {
    pub z: Poly2,
    pub residual: f64,
    pub iterations: usize,
}

/// Output of one renormalization step, with the scalings it used.
#[derive(Debug, Clone)]
pub struct RenormOutcome {
    pub s_out: GenFunction,
    pub lambda: f64,
    pub mu: f64,
    pub t: f64,
    pub z: Poly2,
}

/// How a directional derivative is computed.
#[derive(Debug, Clone, Copy)]
pub enum DerivMode {
    /// Closed-form chain rule through the midpoint solve and the scalings.
    Exact,
    /// Central finite differences with the given step (cross-validation
    /// oracle; the direction must lie in the symmetric class).
    CentralDifference(f64),
}

/// Which shift convention a renormalization step uses.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ShiftMode {
    /// No coordinate shift (t frozen at 0, independent of s).
    Plain,
    /// t chosen so the composed series has a fixed (0,3) coefficient c.
    Normalized(f64),
}

fn check_windows(lambda: f64, mu: f64) -> Result<()> {
    let (llo, lhi) = LAMBDA_WINDOW;
    if !(llo..=lhi).contains(&lambda) {
        return Err(RenormError::ScaleOutsideWindow {
            name: "lambda",
            value: lambda,
            lo: llo,
            hi: lhi,
        });
    }
    let (mlo, mhi) = MU_WINDOW;
    if !(mlo..=mhi).contains(&mu) {
        return Err(RenormError::ScaleOutsideWindow {
            name: "mu",
            value: mu,
            lo: mlo,
            hi: mhi,
        });
    }
    Ok(())
}

/// Powers v^0 .. v^n on v's own domain.
fn powers(v: &Poly2, n: usize) -> Result<Vec<Poly2>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(Poly2::constant(v.deg(), v.rho(), 1.0));
    for k in 1..=n {
        let prev = &out[k - 1];
        out.push(prev.mul(v)?);
    }
    Ok(out)
}

/// Substitute the table of powers `ppow` for one argument slot of `s` and
/// render the remaining slot as the plain variable `remain`:
///   replaced = Y:  s(remain, P) = Σ_j (Σ_i c_ij remain^i) P^j
///   replaced = X:  s(P, remain) = Σ_i (Σ_j c_ij remain^j) P^i
/// This costs one sparse×dense product per index value, so it is much
/// cheaper than a generic composition when one argument is a monomial.
fn substitute(s: &Poly2, ppow: &[Poly2], replaced: Var, remain: Var) -> Result<Poly2> {
    let deg = ppow[0].deg();
    let rho_out = ppow[0].rho();
    if s.deg() > deg {
        return Err(RenormError::OutOfRange {
            i: s.deg(),
            j: 0,
            deg,
        });
    }
    let parg = if ppow.len() > 1 {
        ppow[1].norm_rho()
    } else {
        0.0
    };
    if parg > s.rho() * (1.0 + 1e-12) {
        return Err(RenormError::DomainEscape {
            norm: parg,
            rho: s.rho(),
        });
    }
    if rho_out > s.rho() * (1.0 + 1e-12) {
        return Err(RenormError::DomainEscape {
            norm: rho_out,
            rho: s.rho(),
        });
    }
    let mut acc = Poly2::zero(deg, rho_out);
    for k in 0..=s.deg() {
        // univariate factor in the remaining variable for power index k
        let mut g = Poly2::zero(deg, rho_out);
        let mut any = false;
        for m in 0..=(s.deg() - k) {
            let c = match replaced {
                Var::Y => s.get(m, k),
                Var::X => s.get(k, m),
            };
            if c != 0.0 {
                any = true;
                match remain {
                    Var::X => g.set(m, 0, c)?,
                    Var::Y => g.set(0, m, c)?,
                }
            }
        }
        if any {
            acc.axpy(1.0, &g.mul(&ppow[k])?)?;
        }
    }
    if s.tail() > 0.0 {
        let q = (parg.max(rho_out) / s.rho()).min(1.0);
        acc.add_tail(s.tail() * q.powi(s.deg() as i32 + 1));
    }
    Ok(acc)
}

/// Generic composition s(u, v) with the powers of v precomputed (shared
/// across many compositions against the same v).
fn compose_with(s: &Poly2, u: &Poly2, vpow: &[Poly2]) -> Result<Poly2> {
    let deg = vpow[0].deg();
    let rho_out = vpow[0].rho();
    let nu = u.norm_rho();
    let nv = if vpow.len() > 1 { vpow[1].norm_rho() } else { 0.0 };
    for n in [nu, nv] {
        if n > s.rho() * (1.0 + 1e-12) {
            return Err(RenormError::DomainEscape {
                norm: n,
                rho: s.rho(),
            });
        }
    }
    let mut acc = Poly2::zero(deg, rho_out);
    for i in (0..=s.deg()).rev() {
        if i < s.deg() {
            acc = u.mul(&acc)?;
        }
        for j in 0..=(s.deg() - i) {
            let c = s.get(i, j);
            if c != 0.0 {
                acc.axpy(c, &vpow[j])?;
            }
        }
    }
    if s.tail() > 0.0 {
        let q = (nu.max(nv) / s.rho()).min(1.0);
        acc.add_tail(s.tail() * q.powi(s.deg() as i32 + 1));
    }
    Ok(acc)
}

struct MidCache {
    z: Poly2,
    zpow: Vec<Poly2>,
    qinv: Poly2,
    residual: f64,
    iterations: usize,
}

/// Root of z ↦ s(0, z) inside the disk |z| < ρ, where the truncated series
/// is meaningful.  Newton from 0 is the fast path; if it leaves the disk
/// (where stray high-degree terms manufacture spurious roots) or stalls,
/// fall back to a sign-change scan over the disk and take the root closest
/// to the origin.
fn scalar_root_in_disk(s: &Poly2, s2: &Poly2) -> Result<f64> {
    let rho = s.rho();
    let f = |z: f64| s.eval_real(0.0, z);
    let polish = |mut z0: f64| -> Option<f64> {
        for _ in 0..80 {
            let fv = f(z0);
            let d = s2.eval_real(0.0, z0);
            if d.abs() < TOL_SINGULAR {
                return None;
            }
            let step = fv / d;
            z0 -= step;
            if !z0.is_finite() || z0.abs() > rho {
                return None;
            }
            if step.abs() < 1e-15 * (1.0 + z0.abs()) {
                return Some(z0);
            }
        }
        None
    };
    // Fast path, with the singular-slope probe at the starting point kept
    // ahead of everything so a flat start is reported as such.
    if s2.eval_real(0.0, 0.0).abs() < TOL_SINGULAR && f(0.0).abs() < TOL_SINGULAR {
        return Err(RenormError::SingularDenominator(
            s2.eval_real(0.0, 0.0).abs(),
        ));
    }
    if let Some(z0) = polish(0.0) {
        return Ok(z0);
    }
    // Scan for brackets and bisect the one nearest the origin.
    let n = 512;
    let lim = 0.999 * rho;
    let mut best: Option<(f64, f64)> = None;
    let mut prev = (-lim, f(-lim));
    for k in 1..=n {
        let zk = -lim + 2.0 * lim * k as f64 / n as f64;
        let fk = f(zk);
        if prev.1 == 0.0 || prev.1.signum() != fk.signum() {
            let cand = (prev.0, zk);
            let dist = (cand.0 + cand.1).abs();
            if best.map_or(true, |b| dist < (b.0 + b.1).abs()) {
                best = Some(cand);
            }
        }
        prev = (zk, fk);
    }
    let (mut a, mut b) = best.ok_or(RenormError::NoConvergence {
        what: "midpoint constant term",
        iters: n,
        residual: f(0.0).abs(),
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if f(a).signum() == f(mid).signum() {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a).abs() < 1e-17 * (1.0 + a.abs()) {
            break;
        }
    }
    let z0 = 0.5 * (a + b);
    let d = s2.eval_real(0.0, z0);
    if d.abs() < TOL_SINGULAR {
        return Err(RenormError::SingularDenominator(d.abs()));
    }
    Ok(polish(z0).unwrap_or(z0))
}

/// Newton solve of 0 = s(x,Z) + s(y,Z) in series space on [`INNER_RADIUS`].
fn midpoint_cache(s: &Poly2, warm: Option<&Poly2>) -> Result<MidCache> {
    let deg = s.deg();
    let tol = 1e-13 * s.norm_rho().max(1e-300);
    let s2 = s.partial(Var::Y);

    // constant term: scalar root of s(0, z0) = 0 inside the bi-disk
    let mut z = match warm {
        Some(w) if w.deg() == deg && (w.rho() - INNER_RADIUS).abs() < 1e-12 => w.clone(),
        _ => {
            let z0 = scalar_root_in_disk(s, &s2)?;
            Poly2::constant(deg, INNER_RADIUS, z0)
        }
    };

    let mut qinv_seed: Option<Poly2> = None;
    let mut last_residual = f64::INFINITY;
    for it in 0..MAX_MIDPOINT_ITER {
        let zpow = powers(&z, deg)?;
        let fx = substitute(s, &zpow, Var::Y, Var::X)?;
        let fy = substitute(s, &zpow, Var::Y, Var::Y)?;
        let f = fx.add(&fy)?;
        let residual = f.norm_rho();
        if !residual.is_finite() || residual > 1e9 * s.norm_rho().max(1.0) {
            return Err(RenormError::Diverged {
                norm: residual,
                bound: 1e9 * s.norm_rho().max(1.0),
            });
        }
        let qx = substitute(&s2, &zpow, Var::Y, Var::X)?;
        let qy = substitute(&s2, &zpow, Var::Y, Var::Y)?;
        let q = qx.add(&qy)?;
        let qinv = q.recip_seeded(qinv_seed.as_ref())?;
        // The tracked tail bound has an irreducible truncation floor, so
        // once the head coefficients are converged, accept as soon as the
        // full residual stops improving (it is reported as-is).
        if residual <= tol || (f.head_norm() <= tol && residual >= 0.5 * last_residual) {
            return Ok(MidCache {
                z,
                zpow,
                qinv,
                residual,
                iterations: it,
            });
        }
        let mut znew = z.sub(&f.mul(&qinv)?)?;
        znew.clear_tail();
        z = znew.symmetrize_xy();
        qinv_seed = Some(qinv);
        last_residual = residual;
    }
    Err(RenormError::NoConvergence {
        what: "midpoint solve",
        iters: MAX_MIDPOINT_ITER,
        residual: last_residual,
    })
}

/// Solve the midpoint equation for a raw series (symmetry of `s` itself is
/// not required — the equation is symmetric in (x,y), so Z always is).
pub fn solve_midpoint_poly(s: &Poly2) -> Result<MidpointSolution> {
    let mc = midpoint_cache(s, None)?;
    let defect = mc.z.xy_symmetry_defect();
    let ztol = 1e-11 * mc.z.norm_rho().max(1.0);
    if defect > ztol {
        return Err(RenormError::NotSymmetric { defect, tol: ztol });
    }
    Ok(MidpointSolution {
        z: mc.z,
        residual: mc.residual,
        iterations: mc.iterations,
    })
}

/// Solve the midpoint equation for a generating function.
pub fn solve_midpoint(s: &GenFunction) -> Result<MidpointSolution> {
    solve_midpoint_poly(s.poly())
}

/// Pre-renormalization s(Z(x,y), y) on the inner radius, for a raw series.
pub fn prerenorm_poly(s: &Poly2) -> Result<Poly2> {
    let mc = midpoint_cache(s, None)?;
    substitute(s, &mc.zpow, Var::X, Var::Y)
}

/// Pre-renormalization s(Z(x,y), y) on the inner radius.
pub fn prerenorm(s: &GenFunction) -> Result<Poly2> {
    prerenorm_poly(s.poly())
}

/// The scaling λ: root of u ↦ P(u, 0) inside the admissible window, located
/// by Newton from a fixed interior guess with a bisection fallback.
pub fn scaling_lambda(p: &Poly2) -> Result<f64> {
    let (lo, hi) = LAMBDA_WINDOW;
    let dp = p.partial(Var::X);
    let tol = 1e-14 * p.norm_rho().max(1e-300);
    let f = |u: f64| p.eval_real(u, 0.0);

    let mut u = LAMBDA_GUESS;
    let mut ok = false;
    for _ in 0..60 {
        let fv = f(u);
        if fv.abs() <= tol {
            ok = true;
            break;
        }
        let d = dp.eval_real(u, 0.0);
        if d.abs() < TOL_SINGULAR || !d.is_finite() {
            break;
        }
        u -= fv / d;
        if !u.is_finite() || u < lo - 0.1 || u > hi + 0.1 {
            break;
        }
    }
    if !ok || !(lo..=hi).contains(&u) {
        // fall back to a sign-change scan over the window
        let n = 128;
        let mut found = None;
        let mut prev_u = lo;
        let mut prev_f = f(lo);
        for k in 1..=n {
            let uk = lo + (hi - lo) * k as f64 / n as f64;
            let fk = f(uk);
            if prev_f == 0.0 {
                found = Some((prev_u, prev_u));
                break;
            }
            if prev_f.signum() != fk.signum() {
                found = Some((prev_u, uk));
                break;
            }
            prev_u = uk;
            prev_f = fk;
        }
        let (mut a, mut b) = found.ok_or(RenormError::NoRootInWindow { lo, hi })?;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if f(a).signum() == f(mid).signum() {
                a = mid;
            } else {
                b = mid;
            }
            if (b - a).abs() < 1e-17 {
                break;
            }
        }
        u = 0.5 * (a + b);
        // polish
        for _ in 0..8 {
            let d = dp.eval_real(u, 0.0);
            if d.abs() < TOL_SINGULAR {
                break;
            }
            u -= f(u) / d;
        }
        if !(lo..=hi).contains(&u) || f(u).abs() > tol.max(1e-12 * p.norm_rho()) {
            return Err(RenormError::NoRootInWindow { lo, hi });
        }
    }
    let d = dp.eval_real(u, 0.0);
    if d.abs() < TOL_SINGULAR {
        return Err(RenormError::MultipleRootSuspected(d.abs()));
    }
    Ok(u)
}

/// The scaling μ = λ ∂₁P(λ, 0).
pub fn scaling_mu(p: &Poly2, lambda: f64) -> f64 {
    lambda * p.partial(Var::X).eval_real(lambda, 0.0)
}

/// Renormalization with every piece cached for directional derivatives.
/// Construct once per base point, then fan out over directions.
pub struct RenormWorkspace {
    s: Poly2,
    mode: ShiftMode,
    lambda: f64,
    mu: f64,
    t: f64,
    z: Poly2,
    zpow: Vec<Poly2>,
    qinv: Poly2,
    s1_zy: Poly2,
    p: Poly2,
    p02: f64,
    midpoint_residual: f64,
    midpoint_iterations: usize,
    uxi: Poly2,
    vxipow: Vec<Poly2>,
    prefac: Poly2,
    pc: Poly2,
    dt_factor: Poly2,
    pc_lam: Poly2,
    dlam_factor: Poly2,
    d2pc1_lam0: f64,
    s_out: GenFunction,
}

/// A directional derivative with the scalar sensitivities it used.
#[derive(Debug, Clone)]
pub struct DirectionalDerivative {
    pub d_out: Poly2,
    pub d_t: f64,
    pub d_lambda: f64,
    pub d_mu: f64,
}

impl RenormWorkspace {
    /// Workspace for the shifted operator with target coefficient `c`.
    pub fn new(s: &GenFunction, c: f64) -> Result<Self> {
        Self::build(s.poly(), ShiftMode::Normalized(c), None)
    }

    /// Workspace for the plain operator (t frozen at 0).
    pub fn new_plain(s: &GenFunction) -> Result<Self> {
        Self::build(s.poly(), ShiftMode::Plain, None)
    }

    /// Workspace with a warm start for the midpoint series (outer loops).
    pub fn new_warm(s: &GenFunction, c: f64, warm: Option<&Poly2>) -> Result<Self> {
        Self::build(s.poly(), ShiftMode::Normalized(c), warm)
    }

    fn build(s: &Poly2, mode: ShiftMode, warm: Option<&Poly2>) -> Result<Self> {
        let deg = s.deg();
        let rho = s.rho();
        let mc = midpoint_cache(s, warm)?;
        let p = substitute(s, &mc.zpow, Var::X, Var::Y)?;
        let s1_zy = substitute(&s.partial(Var::X), &mc.zpow, Var::X, Var::Y)?;
        let p02 = p.get(0, 2);
        let p03 = p.get(0, 3);

        let t = match mode {
            ShiftMode::Plain => 0.0,
            ShiftMode::Normalized(c) => {
                if p02.abs() < TOL_SINGULAR {
                    return Err(RenormError::SingularDenominator(p02.abs()));
                }
                0.25 * (c - p03) / p02
            }
        };
        if 2.0 * t.abs() * rho >= 1.0 {
            return Err(RenormError::DomainEscape {
                norm: 2.0 * t.abs() * rho,
                rho: 1.0,
            });
        }

        // shift composition on a slightly smaller radius so the quadratic
        // arguments x+t x², y+t y² stay inside the inner bi-disk
        let rc = INNER_RADIUS * (1.0 - t.abs() * INNER_RADIUS * 1.000001);
        let mut uxi = Poly2::monomial(deg, rc, 1, 0, 1.0)?;
        uxi.set(2, 0, t)?;
        let mut vxi = Poly2::monomial(deg, rc, 0, 1, 1.0)?;
        vxi.set(0, 2, t)?;
        let vxipow = powers(&vxi, deg)?;
        let pxi = compose_with(&p, &uxi, &vxipow)?;
        let dxi1 = compose_with(&p.partial(Var::X), &uxi, &vxipow)?;
        let dxi2 = compose_with(&p.partial(Var::Y), &uxi, &vxipow)?;

        let mut prefac = Poly2::constant(deg, rc, 1.0);
        prefac.set(0, 1, 2.0 * t)?;
        let pc = prefac.mul(&pxi)?;

        // ∂/∂t of the shifted series, for the t-sensitivity term
        let x2 = Poly2::monomial(deg, rc, 2, 0, 1.0)?;
        let y2 = Poly2::monomial(deg, rc, 0, 2, 1.0)?;
        let ym = Poly2::monomial(deg, rc, 0, 1, 1.0)?;
        let dt_factor = ym.mul(&pxi)?.scale(2.0).add(
            &prefac.mul(&x2.mul(&dxi1)?.add(&y2.mul(&dxi2)?)?)?,
        )?;

        let lambda = scaling_lambda(&pc)?;
        let mu = scaling_mu(&pc, lambda);
        check_windows(lambda, mu)?;

        let scaled = pc.scale_args(lambda);
        if scaled.rho() < rho {
            return Err(RenormError::DomainEscape {
                norm: scaled.rho(),
                rho,
            });
        }
        let pc_lam = scaled.remark_radius(rho);
        let s_raw = pc_lam.scale(1.0 / mu);
        let defect = s_raw.symmetry_defect();
        let stol = GenFunction::sym_tolerance(&s_raw);
        if defect > stol {
            return Err(RenormError::NotSymmetric { defect, tol: stol });
        }
        let s_out = GenFunction::symmetrized(s_raw);

        let dpc1_lam = pc.partial(Var::X).scale_args(lambda).remark_radius(rho);
        let dpc2_lam = pc.partial(Var::Y).scale_args(lambda).remark_radius(rho);
        let xm = Poly2::monomial(deg, rho, 1, 0, 1.0)?;
        let ymr = Poly2::monomial(deg, rho, 0, 1, 1.0)?;
        let dlam_factor = xm.mul(&dpc1_lam)?.add(&ymr.mul(&dpc2_lam)?)?;
        let d2pc1_lam0 = pc
            .partial(Var::X)
            .partial(Var::X)
            .eval_real(lambda, 0.0);

        Ok(RenormWorkspace {
            s: s.clone(),
            mode,
            lambda,
            mu,
            t,
            z: mc.z,
            zpow: mc.zpow,
            qinv: mc.qinv,
            s1_zy,
            p,
            p02,
            midpoint_residual: mc.residual,
            midpoint_iterations: mc.iterations,
            uxi,
            vxipow,
            prefac,
            pc,
            dt_factor,
            pc_lam,
            dlam_factor,
            d2pc1_lam0,
            s_out,
        })
    }

    pub fn outcome(&self) -> RenormOutcome {
        RenormOutcome {
            s_out: self.s_out.clone(),
            lambda: self.lambda,
            mu: self.mu,
            t: self.t,
            z: self.z.clone(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn midpoint(&self) -> MidpointSolution {
        MidpointSolution {
            z: self.z.clone(),
            residual: self.midpoint_residual,
            iterations: self.midpoint_iterations,
        }
    }

    /// The composed series before rescaling, on the inner radius.
    pub fn shifted_prerenorm(&self) -> &Poly2 {
        &self.pc
    }

    /// The unshifted pre-renormalization s(Z,y), on the inner radius.
    pub fn prerenorm(&self) -> &Poly2 {
        &self.p
    }

    /// Exact directional derivative of the pre-renormalization at the base
    /// point: D ψ ↦ s₁(Z,y)·DZψ + ψ(Z,y) with
    /// DZψ = −(ψ(x,Z)+ψ(y,Z)) / (s₂(x,Z)+s₂(y,Z)).
    pub fn dprerenorm(&self, psi: &Poly2) -> Result<Poly2> {
        let psi_xz = substitute(psi, &self.zpow, Var::Y, Var::X)?;
        let psi_yz = substitute(psi, &self.zpow, Var::Y, Var::Y)?;
        let dz = psi_xz.add(&psi_yz)?.mul(&self.qinv)?.scale(-1.0);
        let psi_zy = substitute(psi, &self.zpow, Var::X, Var::Y)?;
        self.s1_zy.mul(&dz)?.add(&psi_zy)
    }

    /// Exact directional derivative of the full renormalization, with the
    /// scalar sensitivities (dt, dλ, dμ) it used.
    pub fn derivative_full(&self, psi: &Poly2) -> Result<DirectionalDerivative> {
        let dp = self.dprerenorm(psi)?;
        let d_t = match self.mode {
            ShiftMode::Plain => 0.0,
            ShiftMode::Normalized(_) => {
                -0.25 * dp.get(0, 3) / self.p02 - self.t * dp.get(0, 2) / self.p02
            }
        };
        // sensitivity of the shifted series: prefactor × (Dψ ∘ shift) plus
        // the t-channel
        let dpxi = compose_with(&dp, &self.uxi, &self.vxipow)?;
        let mut dpc = self.prefac.mul(&dpxi)?;
        if d_t != 0.0 {
            dpc = dpc.add(&self.dt_factor.scale(d_t))?;
        }
        let d_lambda = -self.lambda * dpc.eval_real(self.lambda, 0.0) / self.mu;
        let dpc1_lam0 = dpc.partial(Var::X).eval_real(self.lambda, 0.0);
        let d_mu = d_lambda * (self.mu / self.lambda + self.lambda * self.d2pc1_lam0)
            + self.lambda * dpc1_lam0;
        let rho = self.s.rho();
        let dpc_scaled = dpc.scale_args(self.lambda).remark_radius(rho);
        let mut d_out = self.pc_lam.scale(-d_mu / (self.mu * self.mu));
        d_out.axpy(1.0 / self.mu, &dpc_scaled)?;
        d_out.axpy(d_lambda / self.mu, &self.dlam_factor)?;
        Ok(DirectionalDerivative {
            d_out,
            d_t,
            d_lambda,
            d_mu,
        })
    }

    /// Exact directional derivative of the renormalized output.
    pub fn derivative(&self, psi: &Poly2) -> Result<Poly2> {
        Ok(self.derivative_full(psi)?.d_out)
    }
}

/// One step of the root-solved doubling operator without a coordinate shift.
pub fn renorm_ekw(s: &GenFunction) -> Result<RenormOutcome> {
    Ok(RenormWorkspace::new_plain(s)?.outcome())
}

/// The shift parameter t that pins the composed series' (0,3) coefficient
/// to `c`.
pub fn t_shift(s: &GenFunction, c: f64) -> Result<f64> {
    let mc = midpoint_cache(s.poly(), None)?;
    let p = substitute(s.poly(), &mc.zpow, Var::X, Var::Y)?;
    let p02 = p.get(0, 2);
    if p02.abs() < TOL_SINGULAR {
        return Err(RenormError::SingularDenominator(p02.abs()));
    }
    Ok(0.25 * (c - p.get(0, 3)) / p02)
}

/// One step of the root-solved doubling operator with the normalizing shift.
pub fn renorm_c(s: &GenFunction, c: f64) -> Result<RenormOutcome> {
    Ok(RenormWorkspace::new(s, c)?.outcome())
}

/// Same as [`renorm_c`] but reusing a previous midpoint series as the Newton
/// warm start (outer fixed-point loops).
pub fn renorm_c_warm(s: &GenFunction, c: f64, warm: Option<&Poly2>) -> Result<RenormOutcome> {
    Ok(RenormWorkspace::new_warm(s, c, warm)?.outcome())
}

/// Frozen-scaling renormalization: no root solve, the given λ, μ are used
/// as-is.  When the rescaled radius still covers the working radius the
/// result is re-marked there; otherwise it stays on its natural radius.
pub fn renorm_star(s: &GenFunction, lambda_star: f64, mu_star: f64) -> Result<Poly2> {
    let p = prerenorm(s)?;
    let scaled = p.scale_args(lambda_star);
    let out = if scaled.rho() >= s.rho() {
        scaled.remark_radius(s.rho())
    } else {
        scaled
    };
    Ok(out.scale(1.0 / mu_star))
}

/// Exact directional derivative of the frozen-scaling renormalization.
pub fn drenorm_star(
    s: &GenFunction,
    psi: &Poly2,
    lambda_star: f64,
    mu_star: f64,
) -> Result<Poly2> {
    let dp = dprerenorm(s, psi)?;
    let scaled = dp.scale_args(lambda_star);
    let out = if scaled.rho() >= s.rho() {
        scaled.remark_radius(s.rho())
    } else {
        scaled
    };
    Ok(out.scale(1.0 / mu_star))
}

/// Exact directional derivative of the pre-renormalization, raw-series form.
pub fn dprerenorm_poly(s: &Poly2, psi: &Poly2) -> Result<Poly2> {
    let mc = midpoint_cache(s, None)?;
    let s1_zy = substitute(&s.partial(Var::X), &mc.zpow, Var::X, Var::Y)?;
    let psi_xz = substitute(psi, &mc.zpow, Var::Y, Var::X)?;
    let psi_yz = substitute(psi, &mc.zpow, Var::Y, Var::Y)?;
    let dz = psi_xz.add(&psi_yz)?.mul(&mc.qinv)?.scale(-1.0);
    let psi_zy = substitute(psi, &mc.zpow, Var::X, Var::Y)?;
    s1_zy.mul(&dz)?.add(&psi_zy)
}

/// Exact directional derivative of the pre-renormalization.
pub fn dprerenorm(s: &GenFunction, psi: &Poly2) -> Result<Poly2> {
    dprerenorm_poly(s.poly(), psi)
}

/// Directional derivative of the shifted renormalization, exact or by
/// central finite differences (for cross-validation).
pub fn drenorm_c(s: &GenFunction, psi: &Poly2, c: f64, mode: DerivMode) -> Result<Poly2> {
    match mode {
        DerivMode::Exact => RenormWorkspace::new(s, c)?.derivative(psi),
        DerivMode::CentralDifference(h) => {
            let sp = GenFunction::symmetrized(s.poly().add(&psi.scale(h))?);
            let sm = GenFunction::symmetrized(s.poly().sub(&psi.scale(h))?);
            let rp = renorm_c(&sp, c)?;
            let rm = renorm_c(&sm, c)?;
            Ok(rp.s_out.poly().sub(rm.s_out.poly())?.scale(0.5 / h))
        }
    }
}

/// The analytic eigendirection candidate s₁x² + s₂y² + 2sy, raw-series form.
pub fn psi_vector_poly(s: &Poly2) -> Result<Poly2> {
    let deg = s.deg();
    let rho = s.rho();
    let x2 = Poly2::monomial(deg, rho, 2, 0, 1.0)?;
    let y2 = Poly2::monomial(deg, rho, 0, 2, 1.0)?;
    let ym = Poly2::monomial(deg, rho, 0, 1, 1.0)?;
    let mut out = x2.mul(&s.partial(Var::X))?;
    out.axpy(1.0, &y2.mul(&s.partial(Var::Y))?)?;
    out.axpy(2.0, &ym.mul(s)?)?;
    Ok(out)
}

/// The analytic eigendirection candidate s₁x² + s₂y² + 2sy.
pub fn psi_vector(s: &GenFunction) -> Result<Poly2> {
    psi_vector_poly(s.poly())
}

/// The corrected eigendirection ψ + s − (s₁x + s₂y), raw-series form.
pub fn psi_ekw_vector_poly(s: &Poly2) -> Result<Poly2> {
    let deg = s.deg();
    let rho = s.rho();
    let xm = Poly2::monomial(deg, rho, 1, 0, 1.0)?;
    let ym = Poly2::monomial(deg, rho, 0, 1, 1.0)?;
    let mut out = psi_vector_poly(s)?;
    out.axpy(1.0, s)?;
    out.axpy(-1.0, &xm.mul(&s.partial(Var::X))?)?;
    out.axpy(-1.0, &ym.mul(&s.partial(Var::Y))?)?;
    Ok(out)
}

/// The corrected eigendirection ψ + s − (s₁x + s₂y).
pub fn psi_ekw_vector(s: &GenFunction) -> Result<Poly2> {
    psi_ekw_vector_poly(s.poly())
}

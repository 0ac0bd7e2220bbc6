//! Truncated bivariate Taylor series over a bi-disk, with the weighted
//! ℓ¹ coefficient norm ‖p‖_ρ = Σ|c_ij|ρ^{i+j} + tail.
//!
//! A [`Poly2`] stores the head coefficients exactly (total degree ≤ `deg`)
//! and a scalar `tail` that upper-bounds the ℓ¹ mass of everything an
//! operation has discarded.  All arithmetic keeps the norm an upper bound
//! for the norm of the untruncated result; in particular multiplication is
//! submultiplicative including tails.  Tail propagation through derivatives
//! is a crude diagnostic bound, not a rigorous enclosure.

use crate::error::{RenormError, Result};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

/// Which variable to differentiate in [`Poly2::partial`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

/// Truncated bivariate Taylor series on the bi-disk of radius `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    deg: usize,
    rho: f64,
    tail: f64,
    /// Dense row-major table, `(deg+1)^2` entries, `c[i*(deg+1)+j]` the
    /// coefficient of x^i y^j; entries with i+j > deg stay zero.
    c: Vec<f64>,
}

impl Poly2 {
    pub fn zero(deg: usize, rho: f64) -> Self {
        assert!(rho > 0.0, "domain radius must be positive");
        Poly2 {
            deg,
            rho,
            tail: 0.0,
            c: vec![0.0; (deg + 1) * (deg + 1)],
        }
    }

    pub fn constant(deg: usize, rho: f64, value: f64) -> Self {
        let mut p = Poly2::zero(deg, rho);
        p.c[0] = value;
        p
    }

    /// The monomial `value · x^i y^j`.
    pub fn monomial(deg: usize, rho: f64, i: usize, j: usize, value: f64) -> Result<Self> {
        let mut p = Poly2::zero(deg, rho);
        p.set(i, j, value)?;
        Ok(p)
    }

    pub fn deg(&self) -> usize {
        self.deg
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub(crate) fn add_tail(&mut self, extra: f64) {
        debug_assert!(extra >= 0.0);
        self.tail += extra;
    }

    pub(crate) fn clear_tail(&mut self) {
        self.tail = 0.0;
    }

    #[inline]
    fn stride(&self) -> usize {
        self.deg + 1
    }

    /// Checked coefficient access.
    pub fn coeff(&self, i: usize, j: usize) -> Result<f64> {
        if i + j > self.deg {
            return Err(RenormError::OutOfRange { i, j, deg: self.deg });
        }
        Ok(self.c[i * self.stride() + j])
    }

    /// Unchecked coefficient read; indices beyond the truncation read as 0.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + j > self.deg {
            0.0
        } else {
            self.c[i * self.stride() + j]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i + j > self.deg {
            return Err(RenormError::OutOfRange { i, j, deg: self.deg });
        }
        let k = i * self.stride() + j;
        self.c[k] = value;
        Ok(())
    }

    /// Head norm Σ|c_ij|ρ^{i+j} without the tail.
    pub fn head_norm(&self) -> f64 {
        let pw = pow_table(self.rho, self.deg);
        let mut acc = 0.0;
        for i in 0..=self.deg {
            for j in 0..=(self.deg - i) {
                acc += self.c[i * self.stride() + j].abs() * pw[i + j];
            }
        }
        acc
    }

    /// The weighted ℓ¹ norm including the tail bound.
    pub fn norm_rho(&self) -> f64 {
        self.head_norm() + self.tail
    }

    fn check_domain(&self, other: &Poly2) -> Result<()> {
        if self.rho != other.rho {
            return Err(RenormError::MismatchedDomain(self.rho, other.rho));
        }
        Ok(())
    }

    pub fn add(&self, other: &Poly2) -> Result<Poly2> {
        self.check_domain(other)?;
        let deg = self.deg.max(other.deg);
        let mut out = Poly2::zero(deg, self.rho);
        out.tail = self.tail + other.tail;
        for i in 0..=deg {
            for j in 0..=(deg - i) {
                out.c[i * (deg + 1) + j] = self.get(i, j) + other.get(i, j);
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Poly2) -> Result<Poly2> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Poly2 {
        let mut out = self.clone();
        for v in &mut out.c {
            *v *= k;
        }
        out.tail = self.tail * k.abs();
        out
    }

    /// `self += k·other` in place (domains and degrees must already agree).
    pub fn axpy(&mut self, k: f64, other: &Poly2) -> Result<()> {
        self.check_domain(other)?;
        if other.deg > self.deg {
            let grown = Poly2 {
                deg: other.deg,
                rho: self.rho,
                tail: self.tail,
                c: {
                    let mut c = vec![0.0; (other.deg + 1) * (other.deg + 1)];
                    for i in 0..=self.deg {
                        for j in 0..=(self.deg - i) {
                            c[i * (other.deg + 1) + j] = self.get(i, j);
                        }
                    }
                    c
                },
            };
            *self = grown;
        }
        let stride = self.stride();
        for i in 0..=other.deg {
            for j in 0..=(other.deg - i) {
                self.c[i * stride + j] += k * other.get(i, j);
            }
        }
        self.tail += k.abs() * other.tail;
        Ok(())
    }

    /// Truncated product.  The tail of the result upper-bounds the discarded
    /// convolution mass plus all cross terms with the input tails, so that
    /// `norm_rho(a*b) ≤ norm_rho(a)·norm_rho(b)` up to roundoff.
    pub fn mul(&self, other: &Poly2) -> Result<Poly2> {
        self.check_domain(other)?;
        let deg = self.deg.max(other.deg);
        let stride = deg + 1;
        let mut out = Poly2::zero(deg, self.rho);
        let drops = self.deg + other.deg > deg;
        // abs-mass accumulator per output cell, only needed when truncating
        let mut mass = if drops { vec![0.0; stride * stride] } else { Vec::new() };
        for i1 in 0..=self.deg {
            for j1 in 0..=(self.deg - i1) {
                let av = self.c[i1 * self.stride() + j1];
                if av == 0.0 {
                    continue;
                }
                let imax = (deg - i1 - j1).min(other.deg);
                for i2 in 0..=imax {
                    let jlim = (deg - i1 - j1 - i2).min(other.deg - i2);
                    // empty when the whole row would exceed the truncation
                    let orow = &other.c[i2 * other.stride()..];
                    let base = (i1 + i2) * stride + j1;
                    if drops {
                        for j2 in 0..=jlim {
                            let t = av * orow[j2];
                            out.c[base + j2] += t;
                            mass[base + j2] += t.abs();
                        }
                    } else {
                        for j2 in 0..=jlim {
                            out.c[base + j2] += av * orow[j2];
                        }
                    }
                }
            }
        }
        let mut dropped = 0.0;
        if drops {
            let pw = pow_table(self.rho, deg);
            let mut kept = 0.0;
            for i in 0..=deg {
                for j in 0..=(deg - i) {
                    kept += mass[i * stride + j] * pw[i + j];
                }
            }
            dropped = (self.head_norm() * other.head_norm() - kept).max(0.0);
        }
        out.tail = dropped
            + self.tail * other.head_norm()
            + self.head_norm() * other.tail
            + self.tail * other.tail;
        Ok(out)
    }

    /// Exact partial derivative of the head; the tail is propagated by the
    /// crude factor (deg+1)/ρ and is diagnostic-only.
    pub fn partial(&self, axis: Var) -> Poly2 {
        let mut out = Poly2::zero(self.deg, self.rho);
        let stride = self.stride();
        match axis {
            Var::X => {
                for i in 1..=self.deg {
                    for j in 0..=(self.deg - i) {
                        out.c[(i - 1) * stride + j] = i as f64 * self.c[i * stride + j];
                    }
                }
            }
            Var::Y => {
                for i in 0..=self.deg {
                    for j in 1..=(self.deg - i) {
                        out.c[i * stride + (j - 1)] = j as f64 * self.c[i * stride + j];
                    }
                }
            }
        }
        out.tail = self.tail * (self.deg as f64 + 1.0) / self.rho;
        out
    }

    /// Horner evaluation of the head table at a complex point.
    pub fn eval(&self, x: Complex64, y: Complex64) -> Complex64 {
        let stride = self.stride();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in (0..=self.deg).rev() {
            let row = &self.c[i * stride..i * stride + (self.deg - i + 1)];
            let mut racc = Complex64::new(0.0, 0.0);
            for &cj in row.iter().rev() {
                racc = racc * y + cj;
            }
            acc = acc * x + racc;
        }
        acc
    }

    pub fn eval_real(&self, x: f64, y: f64) -> f64 {
        self.eval(Complex64::new(x, 0.0), Complex64::new(y, 0.0)).re
    }

    /// Substitution p(u(x,y), v(x,y)) truncated at the working degree.
    ///
    /// `u` and `v` must share a domain; their norms must not exceed `self.rho`
    /// so the image stays inside the bi-disk on which the head/tail split of
    /// `self` is meaningful.
    pub fn compose2(&self, u: &Poly2, v: &Poly2) -> Result<Poly2> {
        u.check_domain(v)?;
        let nu = u.norm_rho();
        let nv = v.norm_rho();
        if nu > self.rho {
            return Err(RenormError::DomainEscape { norm: nu, rho: self.rho });
        }
        if nv > self.rho {
            return Err(RenormError::DomainEscape { norm: nv, rho: self.rho });
        }
        let deg = u.deg.max(v.deg).max(self.deg);
        // powers of v up to the largest j actually present
        let mut jmax = 0;
        let mut imax = 0;
        for i in 0..=self.deg {
            for j in 0..=(self.deg - i) {
                if self.get(i, j) != 0.0 {
                    jmax = jmax.max(j);
                    imax = imax.max(i);
                }
            }
        }
        let mut vpow: Vec<Poly2> = Vec::with_capacity(jmax + 1);
        vpow.push(Poly2::constant(deg, u.rho, 1.0));
        for j in 1..=jmax {
            vpow.push(vpow[j - 1].mul(v)?);
        }
        // Horner over the x-argument: acc = u*acc + row_i(v); the sparse
        // factor leads so the product loop skips its zero entries
        let mut acc = Poly2::zero(deg, u.rho);
        for i in (0..=imax).rev() {
            if i < imax {
                acc = u.mul(&acc)?;
            }
            for j in 0..=(self.deg - i) {
                let cij = self.get(i, j);
                if cij != 0.0 {
                    acc.axpy(cij, &vpow[j])?;
                }
            }
        }
        // contribution of the tail of self, evaluated at the argument norms
        if self.tail > 0.0 {
            let q = (nu.max(nv) / self.rho).min(1.0);
            acc.add_tail(self.tail * q.powi(self.deg as i32 + 1));
        }
        Ok(acc)
    }

    /// p(λx, λy) as a series on the enlarged/shrunk radius ρ/|λ| (exact norm
    /// bookkeeping: the norm on the new radius equals the old norm).
    pub fn scale_args(&self, lam: f64) -> Poly2 {
        assert!(lam != 0.0);
        let mut out = Poly2::zero(self.deg, self.rho / lam.abs());
        let stride = self.stride();
        let mut lp = 1.0;
        let mut pows = Vec::with_capacity(self.deg + 1);
        for _ in 0..=self.deg {
            pows.push(lp);
            lp *= lam;
        }
        for i in 0..=self.deg {
            for j in 0..=(self.deg - i) {
                out.c[i * stride + j] = self.c[i * stride + j] * pows[i + j];
            }
        }
        out.tail = self.tail;
        out
    }

    /// Re-declare the series on a smaller radius `new_rho ≤ rho`; the tail
    /// contracts by (new/old)^{deg+1} since all hidden mass has degree > deg.
    pub fn remark_radius(&self, new_rho: f64) -> Poly2 {
        assert!(new_rho > 0.0 && new_rho <= self.rho * (1.0 + 1e-12));
        let mut out = self.clone();
        let q = (new_rho / self.rho).min(1.0);
        out.rho = new_rho;
        out.tail = self.tail * q.powi(self.deg as i32 + 1);
        out
    }

    /// Lower the truncation degree, moving the discarded head mass into tail.
    pub fn truncate(&self, new_deg: usize) -> Poly2 {
        if new_deg >= self.deg {
            return self.clone();
        }
        let mut out = Poly2::zero(new_deg, self.rho);
        let pw = pow_table(self.rho, self.deg);
        let mut dropped = 0.0;
        for i in 0..=self.deg {
            for j in 0..=(self.deg - i) {
                let v = self.c[i * self.stride() + j];
                if i + j <= new_deg {
                    out.c[i * (new_deg + 1) + j] = v;
                } else {
                    dropped += v.abs() * pw[i + j];
                }
            }
        }
        out.tail = self.tail + dropped;
        out
    }

    /// Grow the truncation degree (zero padding; tail unchanged).
    pub fn grow(&self, new_deg: usize) -> Poly2 {
        if new_deg <= self.deg {
            return self.clone();
        }
        let mut out = Poly2::zero(new_deg, self.rho);
        for i in 0..=self.deg {
            for j in 0..=(self.deg - i) {
                out.c[i * (new_deg + 1) + j] = self.get(i, j);
            }
        }
        out.tail = self.tail;
        out
    }

    /// Reciprocal series 1/p by Newton iteration, with a residual-based tail.
    pub fn recip(&self) -> Result<Poly2> {
        self.recip_seeded(None)
    }

    /// Reciprocal with an optional warm-start seed (e.g. the reciprocal of a
    /// nearby series); cuts the iteration count when denominators drift
    /// slowly inside outer loops.
    pub fn recip_seeded(&self, seed: Option<&Poly2>) -> Result<Poly2> {
        let c00 = self.get(0, 0);
        if c00.abs() < 1e-8 {
            return Err(RenormError::SingularDenominator(c00.abs()));
        }
        let one = Poly2::constant(self.deg, self.rho, 1.0);
        let mut r = match seed {
            Some(s) if s.deg == self.deg && s.rho == self.rho => {
                let mut r = s.clone();
                r.tail = 0.0;
                r
            }
            _ => Poly2::constant(self.deg, self.rho, 1.0 / c00),
        };
        let steps = (usize::BITS - self.deg.leading_zeros()) as usize + 3;
        for _ in 0..steps {
            // r <- r(2 - p r); stop once the residual is at roundoff
            let pr = self.mul(&r)?;
            if one.sub(&pr)?.norm_rho() <= 1e-15 {
                break;
            }
            let two_minus = one.scale(2.0).sub(&pr)?;
            r = r.mul(&two_minus)?;
            r.tail = 0.0; // intermediate tails re-estimated from the residual
        }
        let res = one.sub(&self.mul(&r)?)?;
        let rn = res.norm_rho();
        if rn >= 1.0 {
            return Err(RenormError::NoConvergence {
                what: "series reciprocal",
                iters: steps,
                residual: rn,
            });
        }
        // 1/p = r/(1-res) ⇒ ‖1/p − r‖ ≤ ‖r‖‖res‖/(1−‖res‖)
        let extra = r.norm_rho() * rn / (1.0 - rn);
        r.add_tail(extra);
        Ok(r)
    }

    pub fn div(&self, q: &Poly2) -> Result<Poly2> {
        self.mul(&q.recip()?)
    }

    /// Entrywise maximum discrepancy of plain argument symmetry
    /// p(x,y) = p(y,x), i.e. max |c_ij − c_ji|.
    pub fn xy_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=self.deg {
            for j in i..=(self.deg - i) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Average the coefficient table with its transpose: the nearest series
    /// symmetric under argument swap.
    pub fn symmetrize_xy(&self) -> Poly2 {
        let mut out = self.clone();
        let stride = out.stride();
        for i in 0..=self.deg {
            for j in i..=(self.deg - i) {
                let m = 0.5 * (self.get(i, j) + self.get(j, i));
                out.c[i * stride + j] = m;
                out.c[j * stride + i] = m;
            }
        }
        out
    }

    /// Entrywise maximum discrepancy of the symmetry relation
    /// ∂₁p(x,y) = ∂₁p(y,x), i.e. max |(i+1)c_{i+1,j} − (j+1)c_{j+1,i}|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.deg {
            for j in 0..=(self.deg.saturating_sub(i + 1)) {
                let lhs = (i + 1) as f64 * self.get(i + 1, j);
                let rhs = (j + 1) as f64 * self.get(j + 1, i);
                if i + 1 + j <= self.deg && j + 1 + i <= self.deg {
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        worst
    }

    /// Orthogonal-style projection onto the symmetric subspace: the two
    /// monomials tied by the relation are replaced by the average of their
    /// derivative coefficients.
    pub fn symmetrize(&self) -> Poly2 {
        let mut out = self.clone();
        for i in 0..self.deg {
            for j in i..=(self.deg.saturating_sub(i + 1)) {
                if j + 1 + i > self.deg {
                    continue;
                }
                let a = (i + 1) as f64 * self.get(i + 1, j);
                let b = (j + 1) as f64 * self.get(j + 1, i);
                let d = 0.5 * (a + b);
                let stride = out.stride();
                out.c[(i + 1) * stride + j] = d / (i + 1) as f64;
                out.c[(j + 1) * stride + i] = d / (j + 1) as f64;
            }
        }
        out
    }

    /// Serialize in the plain-text series format.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "rho={:.17e} deg={} tail={:.17e}", self.rho, self.deg, self.tail)?;
        for i in 0..=self.deg {
            for j in 0..=(self.deg - i) {
                let v = self.c[i * self.stride() + j];
                if v != 0.0 {
                    writeln!(w, "{} {} {:.17e}", i, j, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "rho={:.17e} deg={} tail={:.17e}",
            self.rho, self.deg, self.tail
        );
        for i in 0..=self.deg {
            for j in 0..=(self.deg - i) {
                let v = self.c[i * self.stride() + j];
                if v != 0.0 {
                    let _ = writeln!(s, "{} {} {:.17e}", i, j, v);
                }
            }
        }
        s
    }

    /// Parse the plain-text series format produced by [`Poly2::write_text`].
    pub fn read_text<R: BufRead>(r: &mut R) -> Result<Poly2> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut rho = None;
        let mut deg = None;
        let mut tail = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("rho=") {
                rho = v.parse::<f64>().ok();
            } else if let Some(v) = tok.strip_prefix("deg=") {
                deg = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("tail=") {
                tail = v.parse::<f64>().ok();
            }
        }
        let (rho, deg, tail) = match (rho, deg, tail) {
            (Some(r), Some(d), Some(t)) if r > 0.0 && t >= 0.0 => (r, d, t),
            _ => {
                return Err(RenormError::ParseError(format!(
                    "bad header line: {:?}",
                    header.trim()
                )))
            }
        };
        let mut p = Poly2::zero(deg, rho);
        p.tail = tail;
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut it = t.split_whitespace();
            let (i, j, v) = match (it.next(), it.next(), it.next()) {
                (Some(i), Some(j), Some(v)) => (
                    i.parse::<usize>()
                        .map_err(|e| RenormError::ParseError(e.to_string()))?,
                    j.parse::<usize>()
                        .map_err(|e| RenormError::ParseError(e.to_string()))?,
                    v.parse::<f64>()
                        .map_err(|e| RenormError::ParseError(e.to_string()))?,
                ),
                _ => return Err(RenormError::ParseError(format!("bad line: {:?}", t))),
            };
            p.set(i, j, v)?;
        }
        Ok(p)
    }

    pub fn from_text(s: &str) -> Result<Poly2> {
        let mut r = std::io::BufReader::new(s.as_bytes());
        Poly2::read_text(&mut r)
    }
}

pub(crate) fn pow_table(base: f64, deg: usize) -> Vec<f64> {
    let mut pw = Vec::with_capacity(deg + 1);
    let mut v = 1.0;
    for _ in 0..=deg {
        pw.push(v);
        v *= base;
    }
    pw
}

/// A generating function: a [`Poly2`] whose mixed-derivative table satisfies
/// the symmetry ∂₁s(x,y) = ∂₁s(y,x) within tolerance.
#[derive(Debug, Clone)]
pub struct GenFunction {
    poly: Poly2,
}

impl GenFunction {
    /// Tolerance for the symmetry invariant.
    pub fn sym_tolerance(p: &Poly2) -> f64 {
        1e-11 * p.norm_rho().max(1e-300)
    }

    /// Wrap a series, asserting the symmetry invariant.
    pub fn new(poly: Poly2) -> Result<GenFunction> {
        let defect = poly.symmetry_defect();
        let tol = Self::sym_tolerance(&poly);
        if defect > tol {
            return Err(RenormError::NotSymmetric { defect, tol });
        }
        Ok(GenFunction { poly })
    }

    /// Wrap a series after projecting it onto the symmetric subspace.
    pub fn symmetrized(poly: Poly2) -> GenFunction {
        GenFunction {
            poly: poly.symmetrize(),
        }
    }

    pub fn poly(&self) -> &Poly2 {
        &self.poly
    }

    pub fn into_poly(self) -> Poly2 {
        self.poly
    }

    pub fn rho(&self) -> f64 {
        self.poly.rho()
    }

    pub fn deg(&self) -> usize {
        self.poly.deg()
    }

    pub fn norm_rho(&self) -> f64 {
        self.poly.norm_rho()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn xmono(deg: usize, rho: f64) -> Poly2 {
        Poly2::monomial(deg, rho, 1, 0, 1.0).unwrap()
    }

    fn ymono(deg: usize, rho: f64) -> Poly2 {
        Poly2::monomial(deg, rho, 0, 1, 1.0).unwrap()
    }

    fn random_poly(rng: &mut ChaCha8Rng, deg: usize, rho: f64, amp: f64) -> Poly2 {
        let mut p = Poly2::zero(deg, rho);
        for i in 0..=deg {
            for j in 0..=(deg - i) {
                p.set(i, j, amp * (rng.gen::<f64>() - 0.5)).unwrap();
            }
        }
        p
    }

    #[test]
    fn add_cancellation_and_identity() {
        let rho = 1.75;
        let xpy = xmono(4, rho).add(&ymono(4, rho)).unwrap();
        let xmy = xmono(4, rho).sub(&ymono(4, rho)).unwrap();
        let sum = xpy.add(&xmy).unwrap();
        assert_eq!(sum.get(1, 0), 2.0);
        assert_eq!(sum.get(0, 1), 0.0);
        let z = Poly2::zero(4, rho);
        let s = random_poly(&mut ChaCha8Rng::seed_from_u64(1), 4, rho, 1.0);
        assert_eq!(s.add(&z).unwrap(), s);
    }

    #[test]
    fn add_norm_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = random_poly(&mut rng, 8, 1.75, 2.0);
            let b = random_poly(&mut rng, 8, 1.75, 2.0);
            let s = a.add(&b).unwrap();
            assert!(s.norm_rho() <= (a.norm_rho() + b.norm_rho()) * (1.0 + 1e-14));
        }
    }

    #[test]
    fn add_rejects_mismatched_radius() {
        let a = Poly2::zero(3, 1.0);
        let b = Poly2::zero(3, 2.0);
        assert!(matches!(
            a.add(&b),
            Err(RenormError::MismatchedDomain(_, _))
        ));
    }

    #[test]
    fn mul_difference_of_squares() {
        let rho = 1.75;
        let xpy = xmono(4, rho).add(&ymono(4, rho)).unwrap();
        let xmy = xmono(4, rho).sub(&ymono(4, rho)).unwrap();
        let p = xpy.mul(&xmy).unwrap();
        assert_eq!(p.get(2, 0), 1.0);
        assert_eq!(p.get(0, 2), -1.0);
        assert_eq!(p.get(1, 1), 0.0);
        assert_eq!(p.tail(), 0.0);
    }

    #[test]
    fn mul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_poly(&mut rng, 10, 1.75, 1.0);
        let one = Poly2::constant(10, 1.75, 1.0);
        let p = s.mul(&one).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn mul_submultiplicative_deg30() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = random_poly(&mut rng, 30, 1.3, 1.0);
            let b = random_poly(&mut rng, 30, 1.3, 1.0);
            let p = a.mul(&b).unwrap();
            assert!(p.tail() > 0.0, "deg-30 squared must truncate");
            assert!(p.norm_rho() <= a.norm_rho() * b.norm_rho() * (1.0 + 1e-13));
        }
    }

    #[test]
    fn mul_tail_cross_terms() {
        // inputs with artificial tails keep the norm product bound
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = random_poly(&mut rng, 6, 1.75, 1.0);
        let mut b = random_poly(&mut rng, 6, 1.75, 1.0);
        a.add_tail(0.3);
        b.add_tail(0.2);
        let p = a.mul(&b).unwrap();
        assert!(p.norm_rho() <= a.norm_rho() * b.norm_rho() * (1.0 + 1e-13));
        assert!(p.tail() >= 0.3 * b.head_norm());
    }

    #[test]
    fn coeff_matches_brute_force_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_poly(&mut rng, 9, 1.75, 1.0);
        let b = random_poly(&mut rng, 9, 1.75, 1.0);
        let p = a.mul(&b).unwrap();
        for (i, j) in [(0usize, 0usize), (3, 2), (5, 4), (9, 0), (2, 7)] {
            let mut acc = 0.0;
            for i1 in 0..=i {
                for j1 in 0..=j {
                    acc += a.get(i1, j1) * b.get(i - i1, j - j1);
                }
            }
            assert!((p.coeff(i, j).unwrap() - acc).abs() <= 1e-12);
        }
    }

    #[test]
    fn coeff_out_of_range_errors() {
        let p = Poly2::zero(5, 1.0);
        assert!(matches!(p.coeff(3, 3), Err(RenormError::OutOfRange { .. })));
        assert_eq!(p.coeff(5, 0).unwrap(), 0.0);
    }

    #[test]
    fn partial_shift_and_mixed_commute() {
        let rho = 1.75;
        let x2y = Poly2::monomial(6, rho, 2, 1, 1.0).unwrap();
        let dx = x2y.partial(Var::X);
        assert_eq!(dx.get(1, 1), 2.0);
        let dy = x2y.partial(Var::Y);
        assert_eq!(dy.get(2, 0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_poly(&mut rng, 12, rho, 1.0);
        let dxy = s.partial(Var::X).partial(Var::Y);
        let dyx = s.partial(Var::Y).partial(Var::X);
        for i in 0..=12 {
            for j in 0..=(12 - i) {
                let (a, b) = (dxy.get(i, j), dyx.get(i, j));
                assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn eval_points_and_norm_bound() {
        let p = Poly2::monomial(4, 1.75, 2, 1, 1.0).unwrap();
        assert_eq!(p.eval_real(2.0, 3.0), 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_poly(&mut rng, 8, 1.75, 1.0);
        assert_eq!(s.eval_real(0.0, 0.0), s.get(0, 0));
        let n = s.norm_rho();
        for _ in 0..50 {
            let r1 = 1.75 * rng.gen::<f64>();
            let r2 = 1.75 * rng.gen::<f64>();
            let t1 = std::f64::consts::TAU * rng.gen::<f64>();
            let t2 = std::f64::consts::TAU * rng.gen::<f64>();
            let x = Complex64::from_polar(r1, t1);
            let y = Complex64::from_polar(r2, t2);
            assert!(s.eval(x, y).norm() <= n * (1.0 + 1e-12));
        }
    }

    #[test]
    fn compose_simple_and_identity() {
        let rho = 1.75;
        let xy = Poly2::monomial(8, rho, 1, 1, 1.0).unwrap();
        let u = Poly2::monomial(8, rho, 2, 0, 0.5).unwrap();
        let v = Poly2::monomial(8, rho, 0, 2, 0.5).unwrap();
        let r = xy.compose2(&u, &v).unwrap();
        assert!((r.get(2, 2) - 0.25).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_poly(&mut rng, 6, rho, 0.2);
        let id = s
            .compose2(&xmono(6, rho).scale(1.0), &ymono(6, rho))
            .unwrap();
        for i in 0..=6 {
            for j in 0..=(6 - i) {
                assert!((id.get(i, j) - s.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn compose_matches_pointwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rho = 1.75;
        for _ in 0..5 {
            let s = random_poly(&mut rng, 6, rho, 1.0);
            // scale u,v down so the composition stays well inside the disk
            let u = random_poly(&mut rng, 6, rho, 0.005);
            let v = random_poly(&mut rng, 6, rho, 0.005);
            let comp = s.compose2(&u, &v).unwrap();
            for gx in 0..5 {
                for gy in 0..5 {
                    let x = -0.4 + 0.2 * gx as f64;
                    let y = -0.4 + 0.2 * gy as f64;
                    let direct = s.eval_real(u.eval_real(x, y), v.eval_real(x, y));
                    let through = comp.eval_real(x, y);
                    let denom = direct.abs().max(1.0);
                    assert!(
                        (direct - through).abs() / denom <= comp.tail() + 1e-12,
                        "pointwise compose mismatch: {direct} vs {through}"
                    );
                }
            }
        }
    }

    #[test]
    fn compose_rejects_domain_escape() {
        let s = Poly2::monomial(4, 1.0, 1, 0, 1.0).unwrap();
        let u = Poly2::constant(4, 1.0, 5.0);
        let v = Poly2::zero(4, 1.0);
        assert!(matches!(
            s.compose2(&u, &v),
            Err(RenormError::DomainEscape { .. })
        ));
    }

    #[test]
    fn norm_values() {
        let p = Poly2::monomial(4, 1.75, 2, 1, 1.0).unwrap();
        assert!((p.norm_rho() - 1.75f64.powi(3)).abs() < 1e-15);
        assert_eq!(Poly2::zero(4, 1.75).norm_rho(), 0.0);
    }

    #[test]
    fn recip_and_div_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut q = random_poly(&mut rng, 10, 0.5, 0.05);
        q.set(0, 0, 1.0 + q.get(0, 0)).unwrap();
        let r = q.recip().unwrap();
        let prod = q.mul(&r).unwrap();
        assert!((prod.get(0, 0) - 1.0).abs() < 1e-12);
        for i in 0..=10 {
            for j in 0..=(10 - i) {
                if i + j > 0 {
                    assert!(prod.get(i, j).abs() < 1e-12, "({i},{j})");
                }
            }
        }
        let near_sing = Poly2::monomial(4, 1.0, 1, 0, 1.0).unwrap();
        assert!(matches!(
            near_sing.recip(),
            Err(RenormError::SingularDenominator(_))
        ));
    }

    #[test]
    fn scale_args_and_remark() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_poly(&mut rng, 8, 0.5, 1.0);
        let lam = -0.25;
        let q = p.scale_args(lam);
        assert!((q.rho() - 2.0).abs() < 1e-15);
        assert!((q.norm_rho() - p.norm_rho()).abs() <= 1e-12 * p.norm_rho());
        for _ in 0..10 {
            let x = rng.gen::<f64>() - 0.5;
            let y = rng.gen::<f64>() - 0.5;
            assert!((q.eval_real(x, y) - p.eval_real(lam * x, lam * y)).abs() < 1e-12);
        }
        let r = q.remark_radius(1.75);
        assert_eq!(r.rho(), 1.75);
        assert!(r.norm_rho() <= q.norm_rho());
    }

    #[test]
    fn symmetrize_projects_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_poly(&mut rng, 10, 1.75, 1.0);
        let s = p.symmetrize();
        assert!(s.symmetry_defect() <= 1e-13 * p.norm_rho());
        let s2 = s.symmetrize();
        for i in 0..=10 {
            for j in 0..=(10 - i) {
                assert!((s.get(i, j) - s2.get(i, j)).abs() <= 1e-14);
            }
        }
        // symmetric inputs are fixed by the projection
        let mut q = Poly2::zero(6, 1.75);
        q.set(0, 3, 2.5).unwrap(); // pure-y row is unconstrained
        q.set(2, 1, 1.0).unwrap(); // pairs with (2,1): 2*c21 = 2*c21 self-paired
        let qs = q.symmetrize();
        assert!((qs.get(0, 3) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn genfunction_accepts_symmetric_rejects_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = random_poly(&mut rng, 10, 1.75, 1.0).symmetrize();
        assert!(GenFunction::new(p).is_ok());
        let mut skew = Poly2::zero(4, 1.75);
        skew.set(1, 0, 1.0).unwrap();
        skew.set(0, 1, -1.0).unwrap();
        skew.set(2, 1, 1.0).unwrap(); // (i,j)=(1,1): 2c_{2,1} vs 2c_{2,1} fine
        skew.set(1, 2, 7.0).unwrap(); // breaks (0,2): c_{1,2} vs 3c_{3,0}=0
        assert!(matches!(
            GenFunction::new(skew),
            Err(RenormError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn text_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut p = random_poly(&mut rng, 12, 1.75, 1.0);
        p.add_tail(1.25e-9);
        let txt = p.to_text();
        let q = Poly2::from_text(&txt).unwrap();
        assert_eq!(p.deg(), q.deg());
        assert_eq!(p.rho(), q.rho());
        assert_eq!(p.tail(), q.tail());
        for i in 0..=12 {
            for j in 0..=(12 - i) {
                assert_eq!(p.get(i, j), q.get(i, j), "({i},{j})");
            }
        }
        assert!(Poly2::from_text("garbage\n1 2 3\n").is_err());
    }

    #[test]
    fn truncate_moves_mass_to_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let p = random_poly(&mut rng, 10, 1.3, 1.0);
        let t = p.truncate(6);
        assert_eq!(t.deg(), 6);
        assert!(t.tail() > 0.0);
        assert!((t.norm_rho() - p.norm_rho()).abs() <= 1e-12 * p.norm_rho());
    }
}

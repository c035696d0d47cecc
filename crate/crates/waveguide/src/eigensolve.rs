//! Deterministic eigenvalue engines.
//!
//! Shift-invert Krylov–Schur on `(M − σI)⁻¹` with a banded LU factorization, plus an
//! inertia-guided variant for the lowest eigenvalues of real-symmetric matrices.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hamiltonian::{OperatorMatrix, Structure};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: Vec<Complex64>,
    /// `‖Mv − λv‖ / ‖v‖`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub krylov_dim: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { k: 6, tol: 1e-9, max_iter: 300, krylov_dim: 40, seed: 2024 }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<()> {
        if self.k == 0 || !(self.tol > 0.0) || self.krylov_dim <= self.k {
            return Err(Error::InvalidArgument(format!(
                "need k ≥ 1, tol > 0 and krylov_dim > k (k={}, tol={}, krylov_dim={})",
                self.k, self.tol, self.krylov_dim
            )));
        }
        Ok(())
    }
}

/// LU factorization with partial pivoting of a banded complex matrix.
///
/// Row `r` keeps columns `r − kl ..= r + kl + ku`, which leaves room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    rows: Vec<Complex64>,
    mult: Vec<Complex64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Factorizes `M − σI`.
    pub fn factor(m: &OperatorMatrix, sigma: Complex64) -> Result<Self> {
        let n = m.n;
        let (mut kl, mut ku) = (0, 0);
        for r in 0..n {
            for (c, _) in m.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut rows = vec![ZERO; n * width];
        for r in 0..n {
            for (c, v) in m.row(r) {
                rows[r * width + c + kl - r] = v;
            }
            rows[r * width + kl] -= sigma;
        }
        let mut mult = vec![ZERO; n * kl.max(1)];
        let mut piv = vec![0; n];
        let at = |r: usize, c: usize| r * width + c + kl - r;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = rows[at(k, k)].norm();
            for r in k + 1..=last {
                let v = rows[at(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular { row: k });
            }
            piv[k] = p;
            let cend = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cend {
                    rows.swap(at(k, c), at(p, c));
                }
            }
            let pivot = rows[at(k, k)];
            for r in k + 1..=last {
                let l = rows[at(r, k)] / pivot;
                mult[k * kl + (r - k - 1)] = l;
                rows[at(r, k)] = ZERO;
                if l != ZERO {
                    for c in k + 1..=cend {
                        let u = rows[at(k, c)];
                        rows[at(r, c)] -= l * u;
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, width, rows, mult, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let (n, kl, ku, width) = (self.n, self.kl, self.ku, self.width);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != ZERO {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= self.mult[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let base = k * width + kl - k;
            let mut acc = b[k];
            for c in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.rows[base + c] * b[c];
            }
            b[k] = acc / self.rows[base + k];
        }
    }
}

/// Solves `(M − σI)x = rhs` by banded LU.
pub fn solve_shifted(m: &OperatorMatrix, sigma: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    if rhs.len() != m.n {
        return Err(Error::Dimension { expected: m.n, got: rhs.len() });
    }
    let lu = BandedLu::factor(m, sigma)?;
    let mut x = rhs.to_vec();
    lu.solve_in_place(&mut x);
    Ok(x)
}

/// Number of eigenvalues of the real-symmetric `M` strictly below `sigma`, from the signs of
/// an unpivoted banded LDLᵀ of `M − σI`.
pub fn count_below(m: &OperatorMatrix, sigma: f64) -> usize {
    let n = m.n;
    let b = m.bandwidth();
    let w = b + 1;
    let mut a = vec![0.0; n * w];
    for r in 0..n {
        for (c, v) in m.row(r) {
            if c <= r {
                a[r * w + (r - c)] = v.re;
            }
        }
        a[r * w] -= sigma;
    }
    let tiny = f64::EPSILON * a.iter().fold(0.0f64, |x, y| x.max(y.abs())).max(1.0);
    let mut neg = 0;
    for k in 0..n {
        let mut dk = a[k * w];
        if dk.abs() < tiny {
            dk = -tiny;
            a[k * w] = dk;
        }
        if dk < 0.0 {
            neg += 1;
        }
        let last = (k + b).min(n - 1);
        for i in k + 1..=last {
            let aik = a[i * w + (i - k)];
            if aik == 0.0 {
                continue;
            }
            let l = aik / dk;
            for j in k + 1..=i {
                let ajk = a[j * w + (j - k)];
                a[i * w + (i - j)] -= l * ajk;
            }
        }
    }
    neg
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn scale(a: &mut [Complex64], s: f64) {
    for x in a {
        *x *= s;
    }
}

/// Orthogonalizes `w` against `basis` with two classical Gram–Schmidt passes; returns the
/// accumulated coefficients.
fn orthogonalize(basis: &[Vec<Complex64>], w: &mut [Complex64]) -> Vec<Complex64> {
    let mut h = vec![ZERO; basis.len()];
    for _ in 0..2 {
        let c: Vec<Complex64> = basis.iter().map(|v| dot(v, w)).collect();
        for (v, ci) in basis.iter().zip(&c) {
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= ci * vi;
            }
        }
        for (hi, ci) in h.iter_mut().zip(&c) {
            *hi += ci;
        }
    }
    h
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    let nv = norm(&v);
    scale(&mut v, 1.0 / nv);
    v
}

/// Complex Givens rotation: `[c s; −s̄ c]·[f; g] = [r; 0]` with real `c`.
fn givens(f: Complex64, g: Complex64) -> (f64, Complex64) {
    if g == ZERO {
        return (1.0, ZERO);
    }
    if f == ZERO {
        return (0.0, g.conj() / g.norm());
    }
    let (fa, ga) = (f.norm(), g.norm());
    let d = fa.hypot(ga);
    (fa / d, (f / fa) * g.conj() / d)
}

/// Swaps the adjacent diagonal entries `k`, `k+1` of the upper-triangular `t`, updating `q`.
fn swap_adjacent(t: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>, k: usize) {
    let n = t.nrows();
    let (t11, t22) = (t[(k, k)], t[(k + 1, k + 1)]);
    let (c, s) = givens(t[(k, k + 1)], t22 - t11);
    for j in k + 2..n {
        let (x, y) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = c * x + s * y;
        t[(k + 1, j)] = c * y - s.conj() * x;
    }
    let sc = s.conj();
    for i in 0..k {
        let (x, y) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = c * x + sc * y;
        t[(i, k + 1)] = c * y - s * x;
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    for i in 0..q.nrows() {
        let (x, y) = (q[(i, k)], q[(i, k + 1)]);
        q[(i, k)] = c * x + sc * y;
        q[(i, k + 1)] = c * y - s * x;
    }
}

/// Reorders the Schur form so the `p` diagonal entries largest in modulus come first,
/// in descending modulus.
fn sort_schur(t: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>, p: usize) {
    let n = t.nrows();
    for target in 0..p.min(n) {
        let mut best = target;
        for i in target + 1..n {
            if t[(i, i)].norm() > t[(best, best)].norm() {
                best = i;
            }
        }
        for k in (target..best).rev() {
            swap_adjacent(t, q, k);
        }
    }
}

/// Eigenvector of the leading `i+1` block of an upper-triangular matrix for `t[(i,i)]`.
fn triangular_eigvec(t: &DMatrix<Complex64>, i: usize) -> Vec<Complex64> {
    let lam = t[(i, i)];
    let small = f64::EPSILON * t.iter().fold(0.0f64, |m, x| m.max(x.norm())).max(f64::MIN_POSITIVE);
    let mut y = vec![ZERO; i + 1];
    y[i] = Complex64::new(1.0, 0.0);
    for j in (0..i).rev() {
        let mut acc = ZERO;
        for l in j + 1..=i {
            acc += t[(j, l)] * y[l];
        }
        let mut den = t[(j, j)] - lam;
        if den.norm() < small {
            den = Complex64::new(small, 0.0);
        }
        y[j] = -acc / den;
    }
    let ny = norm(&y);
    scale(&mut y, 1.0 / ny);
    y
}

struct KrylovResult {
    values: Vec<Complex64>,
    vectors: Vec<Vec<Complex64>>,
    restarts: usize,
    converged: bool,
    best_estimate: f64,
}

/// Krylov–Schur iteration for the `k` eigenvalues of largest modulus of the operator `op`.
///
/// Convergence of Ritz pair `(μ, y)` is declared when `‖op·y − μy‖ ≤ rel_tol·|μ|`.
fn krylov_schur<F>(n: usize, mut op: F, k: usize, m: usize, rel_tol: f64, max_restarts: usize, seed: u64) -> KrylovResult
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<Complex64>> = vec![random_unit(n, &mut rng)];
    let mut h = DMatrix::<Complex64>::zeros(m + 1, m);
    let mut p = 0;
    let mut restarts = 0;
    let mut best_estimate = f64::INFINITY;
    loop {
        for j in p..m {
            let mut w = op(&basis[j]);
            let coeffs = orthogonalize(&basis, &mut w);
            for (i, c) in coeffs.iter().enumerate() {
                h[(i, j)] += *c;
            }
            let mut nw = norm(&w);
            let scale_ref = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() + nw;
            if nw <= 1e-13 * scale_ref {
                // invariant subspace: continue with a fresh direction
                w = random_unit(n, &mut rng);
                orthogonalize(&basis, &mut w);
                nw = norm(&w);
                scale(&mut w, 1.0 / nw);
                h[(j + 1, j)] = ZERO;
            } else {
                h[(j + 1, j)] = Complex64::new(nw, 0.0);
                scale(&mut w, 1.0 / nw);
            }
            basis.push(w);
        }
        let hm = h.view((0, 0), (m, m)).into_owned();
        let (mut q, mut t) = Schur::new(hm).unpack();
        sort_schur(&mut t, &mut q, k);
        let tail: Vec<Complex64> = (0..m).map(|l| h[(m, m - 1)] * q[(m - 1, l)]).collect();
        let mut all = true;
        let mut worst: f64 = 0.0;
        let mut ritz = Vec::with_capacity(k);
        for i in 0..k {
            let y = triangular_eigvec(&t, i);
            let est = y.iter().zip(&tail).map(|(a, b)| a * b).sum::<Complex64>().norm();
            let rel = est / t[(i, i)].norm();
            worst = worst.max(rel);
            all &= rel <= rel_tol;
            ritz.push(y);
        }
        best_estimate = best_estimate.min(worst);
        if all || restarts >= max_restarts {
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            for (i, y) in ritz.iter().enumerate() {
                let mut z = vec![ZERO; m];
                for (l, yl) in y.iter().enumerate() {
                    for r in 0..m {
                        z[r] += q[(r, l)] * yl;
                    }
                }
                let mut x = vec![ZERO; n];
                for (r, zr) in z.iter().enumerate() {
                    for (xi, vi) in x.iter_mut().zip(&basis[r]) {
                        *xi += zr * vi;
                    }
                }
                let nx = norm(&x);
                scale(&mut x, 1.0 / nx);
                values.push(t[(i, i)]);
                vectors.push(x);
            }
            return KrylovResult { values, vectors, restarts, converged: all, best_estimate };
        }
        restarts += 1;
        let keep = (k + (m - k) / 2).min(m - 1).max(k);
        sort_schur(&mut t, &mut q, keep);
        let tail: Vec<Complex64> = (0..keep).map(|l| h[(m, m - 1)] * q[(m - 1, l)]).collect();
        let mut new_basis = Vec::with_capacity(m + 1);
        for l in 0..keep {
            let mut v = vec![ZERO; n];
            for r in 0..m {
                let c = q[(r, l)];
                if c != ZERO {
                    for (vi, bi) in v.iter_mut().zip(&basis[r]) {
                        *vi += c * bi;
                    }
                }
            }
            new_basis.push(v);
        }
        new_basis.push(basis.pop().unwrap());
        basis = new_basis;
        h.fill(ZERO);
        for i in 0..keep {
            for j in i..keep {
                h[(i, j)] = t[(i, j)];
            }
            h[(keep, i)] = tail[i];
        }
        p = keep;
    }
}

fn residual(m: &OperatorMatrix, lambda: Complex64, x: &[Complex64]) -> f64 {
    let mut y = vec![ZERO; m.n];
    m.apply_into(x, &mut y);
    let r: f64 = y.iter().zip(x).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt();
    r / norm(x)
}

fn inf_norm(m: &OperatorMatrix, sigma: Complex64) -> f64 {
    (0..m.n)
        .map(|r| m.row(r).map(|(c, v)| if c == r { (v - sigma).norm() } else { v.norm() }).sum::<f64>())
        .fold(0.0, f64::max)
}

/// All eigenpairs of a small matrix by dense complex Schur decomposition.
pub fn dense_eigenpairs(m: &OperatorMatrix) -> Vec<EigenPair> {
    let (q, t) = Schur::new(m.to_dense()).unpack();
    (0..m.n)
        .map(|i| {
            let y = triangular_eigvec(&t, i);
            let mut x = vec![ZERO; m.n];
            for (l, yl) in y.iter().enumerate() {
                for r in 0..m.n {
                    x[r] += q[(r, l)] * yl;
                }
            }
            let nx = norm(&x);
            scale(&mut x, 1.0 / nx);
            let value = t[(i, i)];
            EigenPair { value, residual: residual(m, value, &x), vector: x }
        })
        .collect()
}

/// The `k` eigenvalues of `M` closest to `sigma`, sorted by distance.
pub fn nearest_to_shift(m: &OperatorMatrix, sigma: Complex64, opts: &SolverOptions) -> Result<Vec<EigenPair>> {
    opts.check()?;
    let k = opts.k.min(m.n);
    if m.n <= opts.krylov_dim + 1 {
        let mut pairs = dense_eigenpairs(m);
        pairs.sort_by(|a, b| (a.value - sigma).norm().total_cmp(&(b.value - sigma).norm()));
        pairs.truncate(k);
        return Ok(pairs);
    }
    let (pairs, restarts, estimate) = shift_invert(m, sigma, k, opts)?;
    let worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    if worst <= opts.tol {
        return Ok(pairs);
    }
    // a shift almost on an eigenvalue magnifies rounding in the other Ritz pairs
    let reach = pairs.iter().map(|p| (p.value - sigma).norm()).fold(0.0, f64::max);
    let moved = sigma + Complex64::new(0.25 * reach.max(opts.tol), 0.0);
    let (mut retry, more, est2) = shift_invert(m, moved, (k + 2).min(m.n), opts)?;
    retry.sort_by(|a, b| (a.value - sigma).norm().total_cmp(&(b.value - sigma).norm()));
    retry.truncate(k);
    let worst2 = retry.iter().map(|p| p.residual).fold(0.0, f64::max);
    if worst2 <= opts.tol {
        return Ok(retry);
    }
    Err(Error::NotConverged {
        iterations: restarts + more,
        best_residual: worst.min(worst2).max(estimate.min(est2)),
    })
}

/// Shift-invert Krylov–Schur; returns the pairs sorted by distance to `sigma`, the restart
/// count and the best Ritz estimate.
fn shift_invert(m: &OperatorMatrix, sigma: Complex64, k: usize, opts: &SolverOptions) -> Result<(Vec<EigenPair>, usize, f64)> {
    let lu = BandedLu::factor(m, sigma)?;
    let rel_tol = (opts.tol / inf_norm(m, sigma)).max(1e-15);
    let res = krylov_schur(
        m.n,
        |v| {
            let mut x = v.to_vec();
            lu.solve_in_place(&mut x);
            x
        },
        k,
        opts.krylov_dim.max(k + 1),
        rel_tol,
        opts.max_iter,
        opts.seed,
    );
    let mut pairs: Vec<EigenPair> = res
        .values
        .iter()
        .zip(res.vectors)
        .map(|(mu, x)| {
            let value = sigma + 1.0 / mu;
            EigenPair { value, residual: residual(m, value, &x), vector: x }
        })
        .collect();
    pairs.sort_by(|a, b| (a.value - sigma).norm().total_cmp(&(b.value - sigma).norm()));
    let estimate = if res.converged { 0.0 } else { res.best_estimate };
    Ok((pairs, res.restarts, estimate))
}

/// A shift below the lowest eigenvalue of a real-symmetric matrix, located by bisection on
/// inertia counts and backed off by half the distance from `λ₁` to `λ_{k+1}`.
pub fn shift_below_lowest(m: &OperatorMatrix, k: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in 0..m.n {
        let (mut d, mut off) = (0.0, 0.0);
        for (c, v) in m.row(r) {
            if c == r {
                d = v.re;
            } else {
                off += v.norm();
            }
        }
        lo = lo.min(d - off);
        hi = hi.max(d + off);
    }
    let span = (hi - lo).max(1.0);
    lo -= 1e-3 * span;
    hi += 1e-3 * span;
    let bisect = |target: usize, mut lo: f64, mut hi: f64, tol: f64| {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if count_below(m, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi)
    };
    let (l1, _) = bisect(1, lo, hi, 1e-10 * span);
    let j = (k.max(1) + 1).min(m.n);
    let (_, lj) = bisect(j, l1, hi, 1e-6 * span);
    l1 - 0.5 * (lj - l1).max(1e-9 * span)
}

/// The `k` smallest eigenvalues of a real-symmetric matrix, ascending.
pub fn lowest_symmetric(m: &OperatorMatrix, opts: &SolverOptions) -> Result<Vec<EigenPair>> {
    if m.structure != Structure::RealSymmetric {
        return Err(Error::InvalidArgument("lowest_symmetric needs a real-symmetric matrix".into()));
    }
    opts.check()?;
    let k = opts.k.min(m.n);
    let sigma = shift_below_lowest(m, k);
    let mut pairs = nearest_to_shift(m, Complex64::new(sigma, 0.0), opts)?;
    for p in &mut pairs {
        p.value.im = 0.0;
        // fix the arbitrary complex phase of the eigenvector
        let pivot = p.vector.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(ZERO);
        if pivot != ZERO {
            let phase = pivot.conj() / pivot.norm();
            for x in &mut p.vector {
                *x *= phase;
            }
        }
    }
    pairs.sort_by(|a, b| a.value.re.total_cmp(&b.value.re));
    pairs.truncate(k);
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{assemble_h_theta, build_cutoff, distortion_field, DistortedParams};
    use crate::geometry::{make_bump_profile, FieldConfig, GuideGeometry};
    use crate::hamiltonian::{assemble_h, GridSpec};
    use nalgebra::SymmetricEigen;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag(vals: &[Complex64], structure: Structure) -> OperatorMatrix {
        OperatorMatrix::from_triplets(vals.len(), vals.iter().enumerate().map(|(i, v)| (i, i, *v)).collect(), structure)
    }

    fn laplacian_1d(n: usize, h: f64) -> OperatorMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, c(2.0 / (h * h), 0.0)));
            if i + 1 < n {
                t.push((i, i + 1, c(-1.0 / (h * h), 0.0)));
                t.push((i + 1, i, c(-1.0 / (h * h), 0.0)));
            }
        }
        OperatorMatrix::from_triplets(n, t, Structure::RealSymmetric)
    }

    fn random_banded(n: usize, b: usize, seed: u64) -> OperatorMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(b)..(i + b + 1).min(n) {
                t.push((i, j, c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)));
            }
        }
        OperatorMatrix::from_triplets(n, t, Structure::General)
    }

    fn bump_setup() -> (GuideGeometry, GridSpec) {
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.9, 4.0, 2).unwrap()).unwrap();
        let grid = GridSpec::new(-16.0, 20.0, 143, 8, 1.0).unwrap();
        (geom, grid)
    }

    #[test]
    fn diagonal_lowest() {
        let m = diag(&[c(3.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)], Structure::RealSymmetric);
        let opts = SolverOptions { k: 2, ..Default::default() };
        let ev = lowest_symmetric(&m, &opts).unwrap();
        assert_eq!(ev.len(), 2);
        assert!((ev[0].value.re - 1.0).abs() < 1e-14 && (ev[1].value.re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_nearest() {
        let m = diag(&[c(1.0, 0.0), c(2.0, 0.5), c(10.0, 0.0)], Structure::ComplexSymmetric);
        let ev = nearest_to_shift(&m, c(2.0, 0.0), &SolverOptions { k: 1, ..Default::default() }).unwrap();
        assert!((ev[0].value - c(2.0, 0.5)).norm() < 1e-14);
    }

    #[test]
    fn laplacian_closed_form_spectrum() {
        let n = 400;
        let h = 1.0 / (n + 1) as f64;
        let m = laplacian_1d(n, h);
        let opts = SolverOptions { k: 5, tol: 1e-8, ..Default::default() };
        let ev = lowest_symmetric(&m, &opts).unwrap();
        for (j, p) in ev.iter().enumerate() {
            let exact = 2.0 / (h * h) * (1.0 - ((j + 1) as f64 * PI / (n + 1) as f64).cos());
            assert!((p.value.re - exact).abs() < 1e-8 * exact, "j={j}");
            assert!(p.residual <= opts.tol);
        }
    }

    #[test]
    fn inertia_counts_match_closed_form() {
        let n = 50;
        let m = laplacian_1d(n, 1.0);
        for (sigma, expect) in [(-1.0, 0), (1.01, 0), (2.0, 25), (3.99, 49), (5.0, 50)] {
            let exact = (1..=n).filter(|j| 2.0 * (1.0 - (*j as f64 * PI / 51.0).cos()) < sigma).count();
            assert_eq!(count_below(&m, sigma), exact);
            if sigma != 1.01 && sigma != 3.99 {
                assert_eq!(exact, expect);
            }
        }
    }

    #[test]
    fn banded_solve_matches_dense_solve() {
        for (n, b, seed) in [(30, 1, 1), (120, 4, 2), (200, 9, 3)] {
            let m = random_banded(n, b, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
            let rhs: Vec<Complex64> = (0..n).map(|_| c(rng.gen(), rng.gen())).collect();
            let sigma = c(0.3, -0.1);
            let x = solve_shifted(&m, sigma, &rhs).unwrap();
            let shifted = m.shifted(-sigma);
            let back = shifted.apply_slice(&x).unwrap();
            let rel = norm(&back.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(&rhs);
            assert!(rel <= 1e-10, "rel={rel}");
            let dense = shifted.to_dense().lu().solve(&nalgebra::DVector::from_vec(rhs.clone())).unwrap();
            let diff = x.iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let xmax = x.iter().map(|a| a.norm()).fold(0.0, f64::max);
            assert!(diff <= 1e-12 * xmax.max(1.0), "diff={diff}");
        }
    }

    #[test]
    fn identity_solve_is_identity() {
        let m = OperatorMatrix::identity(7);
        let rhs: Vec<Complex64> = (0..7).map(|i| c(i as f64, -(i as f64))).collect();
        assert_eq!(solve_shifted(&m, ZERO, &rhs).unwrap(), rhs);
    }

    #[test]
    fn singular_shift_is_reported() {
        let m = diag(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)], Structure::RealSymmetric);
        assert!(matches!(solve_shifted(&m, c(2.0, 0.0), &[ZERO; 3]), Err(Error::Singular { .. })));
    }

    #[test]
    fn schur_reordering_preserves_factorization() {
        let m = random_banded(12, 11, 5).to_dense();
        let (mut q, mut t) = Schur::new(m.clone()).unpack();
        sort_schur(&mut t, &mut q, 12);
        let back = &q * &t * q.adjoint();
        assert!((back - &m).norm() < 1e-12 * m.norm());
        for i in 0..12 {
            for j in 0..i {
                assert!(t[(i, j)].norm() < 1e-13);
            }
            if i > 0 {
                assert!(t[(i - 1, i - 1)].norm() >= t[(i, i)].norm());
            }
        }
    }

    #[test]
    fn symmetric_path_matches_dense_oracle() {
        let (geom, grid) = bump_setup();
        let m = assemble_h(&geom, &grid).unwrap();
        assert!(m.n <= 2000);
        let opts = SolverOptions { k: 4, tol: 1e-10, ..Default::default() };
        let ev = lowest_symmetric(&m, &opts).unwrap();
        let dense = m.to_dense().map(|z| z.re);
        let mut exact: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
        exact.sort_by(f64::total_cmp);
        for (p, e) in ev.iter().zip(&exact) {
            assert!((p.value.re - e).abs() <= 1e-10, "{} vs {}", p.value.re, e);
        }
    }

    #[test]
    fn nearest_agrees_with_lowest_on_symmetric_input() {
        let (geom, grid) = bump_setup();
        let m = assemble_h(&geom, &grid).unwrap();
        let opts = SolverOptions { k: 3, tol: 1e-10, ..Default::default() };
        let low = lowest_symmetric(&m, &opts).unwrap();
        let near = nearest_to_shift(&m, low[1].value, &opts).unwrap();
        for p in &low {
            assert!(near.iter().any(|q| (q.value - p.value).norm() <= opts.tol));
        }
    }

    #[test]
    fn complex_path_matches_dense_oracle() {
        let (geom, grid) = bump_setup();
        let opts = SolverOptions { k: 6, tol: 1e-10, ..Default::default() };
        let e0 = lowest_symmetric(&assemble_h(&geom, &grid).unwrap(), &opts).unwrap()[0].value.re;
        let field = FieldConfig::new(0.002, -0.8);
        let cut = build_cutoff(-0.02, 0.01).unwrap();
        let df = distortion_field(field, &cut, 0.25).unwrap();
        let p = DistortedParams::imaginary(0.5 * df.theta0);
        let m = assemble_h_theta(&geom, field, &grid, &df, &p).unwrap();
        let ev = nearest_to_shift(&m, c(e0, 0.0), &opts).unwrap();
        let dense = dense_eigenpairs(&m);
        for p in &ev {
            let nearest = dense.iter().map(|d| (d.value - p.value).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest <= 1e-8, "{} off by {nearest}", p.value);
            assert!(p.residual <= opts.tol);
        }
        // the six returned are the six closest
        let mut dist: Vec<f64> = dense.iter().map(|d| (d.value - e0).norm()).collect();
        dist.sort_by(f64::total_cmp);
        assert!(((ev[5].value - e0).norm() - dist[5]).abs() < 1e-8);
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let (geom, grid) = bump_setup();
        let m = assemble_h(&geom, &grid).unwrap();
        let opts = SolverOptions { k: 3, ..Default::default() };
        let a = nearest_to_shift(&m, c(9.7, 0.01), &opts).unwrap();
        let b = nearest_to_shift(&m, c(9.7, 0.01), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn options_are_validated() {
        let m = OperatorMatrix::identity(3);
        let bad = SolverOptions { k: 5, krylov_dim: 5, ..Default::default() };
        assert!(nearest_to_shift(&m, ZERO, &bad).is_err());
        let m = diag(&[c(1.0, 1.0)], Structure::General);
        assert!(lowest_symmetric(&m, &SolverOptions::default()).is_err());
    }
}

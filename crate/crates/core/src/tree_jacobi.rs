//! Jacobi matrices on finite trees and on truncated Cayley trees built from
//! nearest-neighbour recurrence coefficients.

use crate::error::{MopError, Result};
use crate::hp::{cabs, from_c64, to_c64};
use crate::measures::Side;
use crate::mop_engine::{MopSystem, MultiIndex, Recurrence};
use crate::tree_topology::{Tree, TreeKind};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rug::{Complex, Float};
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write;
use std::sync::Arc;

#[derive(Clone, Debug, Serialize)]
pub struct TreeOperator {
    pub tree: Tree,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub sigma: Vec<u8>,
    pub kappa: (f64, f64),
    /// m_Y^{-1} = Π_{path(Y,O)} W^{1/2}
    pub m_inv: Vec<f64>,
}

fn check_kappa(kappa: (f64, f64)) -> Result<()> {
    if !kappa.0.is_finite() || !kappa.1.is_finite() || (kappa.0 + kappa.1 - 1.0).abs() > 1e-12 {
        return Err(MopError::InvalidInput(format!("kappa {:?} must sum to 1", kappa)));
    }
    Ok(())
}

impl TreeOperator {
    pub fn new(tree: Tree, v: Vec<f64>, w: Vec<f64>, sigma: Vec<u8>, kappa: (f64, f64)) -> Self {
        let mut m_inv = vec![1.0; tree.len()];
        for y in 0..tree.len() {
            let up = tree.parent(y).map(|p| m_inv[p]).unwrap_or(1.0);
            m_inv[y] = up * w[y].sqrt();
        }
        TreeOperator { tree, v, w, sigma, kappa, m_inv }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    /// Entry (parent(c), c).
    pub fn down_entry(&self, c: usize) -> f64 {
        let s = if self.sigma[c] == 1 { -1.0 } else { 1.0 };
        s * self.w[c].sqrt()
    }

    /// Diagonal of the signature matrix S.
    pub fn signature(&self) -> Vec<f64> {
        let mut s = vec![1.0; self.len()];
        for y in 1..self.len() {
            let p = self.tree.parent(y).unwrap();
            s[y] = if self.sigma[y] == 1 { -s[p] } else { s[p] };
        }
        s
    }

    pub fn is_symmetric(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for y in 0..n {
            m[(y, y)] = self.v[y];
            if let Some(p) = self.tree.parent(y) {
                m[(y, p)] = self.w[y].sqrt();
                m[(p, y)] = self.down_entry(y);
            }
        }
        m
    }

    /// J restricted to the subtree rooted at x, applied to f (entries outside
    /// the subtree are ignored and returned as 0).
    pub fn apply_restricted(&self, x: usize, f: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        for y in self.tree.subtree(x) {
            let mut s = f[y] * self.v[y];
            if y != x {
                let p = self.tree.parent(y).unwrap();
                s += f[p] * self.w[y].sqrt();
            }
            for &c in self.tree.children(y) {
                s += f[c] * self.down_entry(c);
            }
            out[y] = s;
        }
        out
    }

    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.apply_restricted(0, f)
    }

    /// max |S J - J^T S|.
    pub fn s_selfadjoint_check(&self) -> f64 {
        s_selfadjoint_residual(&self.to_dense(), &self.signature())
    }

    /// u = (J_[X] - z)^{-1} δ^X by leaf-to-root elimination on the subtree.
    pub fn resolvent_column(&self, x: usize, z: Complex64) -> Vec<Complex64> {
        let sub = self.tree.subtree(x);
        let mut g = vec![Complex64::new(0.0, 0.0); self.len()];
        let mut u = vec![Complex64::new(0.0, 0.0); self.len()];
        for &y in sub.iter().rev() {
            let mut d = Complex64::new(self.v[y], 0.0) - z;
            for &c in self.tree.children(y) {
                d += self.down_entry(c) * g[c];
            }
            if y == x {
                u[x] = 1.0 / d;
            } else {
                g[y] = -self.w[y].sqrt() / d;
            }
        }
        for &y in sub.iter().skip(1) {
            let p = self.tree.parent(y).unwrap();
            u[y] = g[y] * u[p];
        }
        u
    }

    /// Eigenvalues of the dense matrix, sorted by real part.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let m = self.to_dense();
        let mut ev: Vec<Complex64> = if self.is_symmetric() {
            m.symmetric_eigen().eigenvalues.iter().map(|&x| Complex64::new(x, 0.0)).collect()
        } else {
            let schur = m
                .try_schur(f64::EPSILON, 100_000)
                .ok_or_else(|| MopError::Convergence("Schur iteration did not converge".into()))?;
            schur.complex_eigenvalues().iter().map(|c| Complex64::new(c.re, c.im)).collect()
        };
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        Ok(ev)
    }

    /// Matrix Market coordinate export.
    pub fn to_matrix_market(&self) -> String {
        let m = self.to_dense();
        let nnz = m.iter().filter(|v| **v != 0.0).count();
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", m.nrows(), m.ncols(), nnz);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    let _ = writeln!(s, "{} {} {}", i + 1, j + 1, m[(i, j)]);
                }
            }
        }
        s
    }

    /// Crude operator-norm bound sup|V| + 3 sup W^{1/2}.
    pub fn norm_bound(&self) -> f64 {
        let sv = self.v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let sw = self.w.iter().fold(0.0f64, |m, x| m.max(x.sqrt()));
        sv + 3.0 * sw
    }
}

pub fn s_selfadjoint_residual(m: &DMatrix<f64>, s: &[f64]) -> f64 {
    let n = m.nrows();
    let mut r = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            r = r.max((s[i] * m[(i, j)] - m[(j, i)] * s[j]).abs());
        }
    }
    r
}

/// Extended-precision potentials: v per vertex and the signed a feeding the
/// edge to the parent (1 at the root).
pub struct HpCoefficients {
    pub v: Vec<Float>,
    pub a: Vec<Float>,
}

impl HpCoefficients {
    pub fn up(&self, y: usize) -> Float {
        Float::with_val(self.a[y].prec(), self.a[y].abs_ref()).sqrt()
    }

    pub fn down(&self, y: usize) -> Float {
        let s = self.up(y);
        if self.a[y].is_sign_negative() {
            -s
        } else {
            s
        }
    }
}

/// Potentials of the finite or truncated Cayley tree in extended precision.
pub fn tree_coefficients_hp(sys: &MopSystem, tree: &Tree, kappa: (f64, f64)) -> Result<HpCoefficients> {
    check_kappa(kappa)?;
    let prec = sys.precision();
    let mut cache: HashMap<MultiIndex, Arc<Recurrence>> = HashMap::new();
    let mut rec = |n: MultiIndex| -> Result<Arc<Recurrence>> {
        if let Some(r) = cache.get(&n) {
            return Ok(r.clone());
        }
        let r = sys.recurrence(n)?;
        cache.insert(n, r.clone());
        Ok(r)
    };
    let (b1, b2) = match tree.kind {
        TreeKind::Finite { n1, n2 } => {
            let n = MultiIndex::new(n1, n2);
            if !n.is_positive() {
                return Err(MopError::InvalidInput(format!("N = {n} must lie in N^2")));
            }
            let r = rec(n)?;
            (r.b[0].clone(), r.b[1].clone())
        }
        TreeKind::Cayley { .. } => {
            (rec(MultiIndex::new(0, 1))?.b[0].clone(), rec(MultiIndex::new(1, 0))?.b[1].clone())
        }
    };
    let mut v = Vec::with_capacity(tree.len());
    let mut a = Vec::with_capacity(tree.len());
    v.push(Float::with_val(prec, &b1 * kappa.0) + Float::with_val(prec, &b2 * kappa.1));
    a.push(Float::with_val(prec, 1));
    for y in 1..tree.len() {
        let i = tree.index(y);
        let pp = tree.proj(tree.parent(y).unwrap());
        let rp = rec(pp)?;
        let vy = match tree.kind {
            TreeKind::Finite { .. } => rec(tree.proj(y))?.b[i - 1].clone(),
            TreeKind::Cayley { .. } => rp.b[i - 1].clone(),
        };
        let ay = rp.a[i - 1].clone();
        if ay.is_zero() || !ay.is_finite() {
            return Err(MopError::ZeroWeight(pp.n1, pp.n2, i));
        }
        v.push(vy);
        a.push(ay);
    }
    Ok(HpCoefficients { v, a })
}

fn from_hp(tree: Tree, c: &HpCoefficients, kappa: (f64, f64)) -> TreeOperator {
    let v = c.v.iter().map(|x| x.to_f64()).collect();
    let w = c.a.iter().map(|x| x.to_f64().abs()).collect();
    let sigma = c.a.iter().map(|x| u8::from(x.is_sign_negative())).collect();
    TreeOperator::new(tree, v, w, sigma, kappa)
}

/// The Jacobi matrix on T_N.
pub fn assemble_finite(sys: &MopSystem, kappa: (f64, f64), n: MultiIndex) -> Result<TreeOperator> {
    let tree = Tree::finite(n);
    let c = tree_coefficients_hp(sys, &tree, kappa)?;
    Ok(from_hp(tree, &c, kappa))
}

/// The Jacobi matrix on the Cayley tree truncated after `depth` generations.
pub fn assemble_truncated(sys: &MopSystem, kappa: (f64, f64), depth: usize) -> Result<TreeOperator> {
    let tree = Tree::cayley(depth);
    let c = tree_coefficients_hp(sys, &tree, kappa)?;
    Ok(from_hp(tree, &c, kappa))
}

/// L_ϰ(z) = κ2 L_{e1}(z) + κ1 L_{e2}(z) in extended precision.
pub fn l_kappa_hp(sys: &MopSystem, kappa: (f64, f64), z: &Complex, side: Side) -> Result<Complex> {
    let prec = sys.precision();
    let l1 = sys.l_hp(MultiIndex::new(1, 0), z, side)?;
    let l2 = sys.l_hp(MultiIndex::new(0, 1), z, side)?;
    Ok(Complex::with_val(prec, l1 * kappa.1) + Complex::with_val(prec, l2 * kappa.0))
}

pub fn m_inv_hp(tree: &Tree, c: &HpCoefficients) -> Vec<Float> {
    let mut m: Vec<Float> = Vec::with_capacity(tree.len());
    for y in 0..tree.len() {
        let up = c.up(y);
        let val = match tree.parent(y) {
            Some(p) => Float::with_val(up.prec(), &m[p] * &up),
            None => up,
        };
        m.push(val);
    }
    m
}

pub fn per_projection_hp<F>(tree: &Tree, m_inv: &[Float], mut f: F) -> Result<Vec<Complex>>
where
    F: FnMut(MultiIndex) -> Result<Complex>,
{
    let mut cache: HashMap<MultiIndex, Complex> = HashMap::new();
    let mut out = Vec::with_capacity(tree.len());
    for y in 0..tree.len() {
        let p = tree.proj(y);
        if !cache.contains_key(&p) {
            let v = f(p)?;
            cache.insert(p, v);
        }
        out.push(Complex::with_val(m_inv[y].prec(), &cache[&p] * &m_inv[y]));
    }
    Ok(out)
}

fn lambda_hp(sys: &MopSystem, tree: &Tree, m_inv: &[Float], k: usize, z: &Complex) -> Result<Vec<Complex>> {
    per_projection_hp(tree, m_inv, |n| Ok(sys.record(n)?.a(k).eval_c(z)))
}

fn vector_f64(sys: &MopSystem, op: &TreeOperator, kappa: (f64, f64), g: impl Fn(&[Float]) -> Result<Vec<Complex>>) -> Result<Vec<Complex64>> {
    let c = tree_coefficients_hp(sys, &op.tree, kappa)?;
    let m = m_inv_hp(&op.tree, &c);
    Ok(g(&m)?.iter().map(to_c64).collect())
}

/// p_Y(z) = m_Y^{-1} P_{Π(Y)}(z).
pub fn p_vector(op: &TreeOperator, sys: &MopSystem, z: Complex64) -> Result<Vec<Complex64>> {
    let zh = from_c64(sys.precision(), z);
    vector_f64(sys, op, op.kappa, |m| per_projection_hp(&op.tree, m, |n| Ok(sys.type2(n)?.eval_c(&zh))))
}

/// l_Y(z) = m_Y^{-1} L_{Π(Y)}(z).
pub fn l_vector(op: &TreeOperator, sys: &MopSystem, z: Complex64, side: Side) -> Result<Vec<Complex64>> {
    let zh = from_c64(sys.precision(), z);
    vector_f64(sys, op, op.kappa, |m| per_projection_hp(&op.tree, m, |n| sys.l_hp(n, &zh, side)))
}

/// Λ^{(k)}_Y(z) = m_Y^{-1} A^{(k)}_{Π(Y)}(z), k ∈ {0,1,2}.
pub fn lambda_vector(op: &TreeOperator, sys: &MopSystem, k: usize, z: Complex64) -> Result<Vec<Complex64>> {
    let zh = from_c64(sys.precision(), z);
    vector_f64(sys, op, op.kappa, |m| lambda_hp(sys, &op.tree, m, k, &zh))
}

/// [f, g]^{(Z)} = f_Z g - f g_Z.
pub fn commutator(f: &[Complex64], g: &[Complex64], z: usize) -> Vec<Complex64> {
    f.iter().zip(g).map(|(fy, gy)| f[z] * gy - fy * g[z]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EigenKind {
    /// type II values on a finite tree
    P,
    /// second-kind values on a truncated Cayley tree
    L,
    /// [Λ^{(k)}, Λ^{(l)}]^{(X_p)} on the subtree of X
    LambdaCommutator { k: usize, l: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigenResidual {
    /// max over interior rows of |(J f)_Y - z f_Y + boundary term|
    pub interior: f64,
    /// |(J f)_X - z f_X| at the subtree root without the boundary term
    pub root_row_raw: f64,
}

/// Residual of the generalized eigen-identities on the subtree rooted at x.
/// Values and the operator are rebuilt in extended precision so the result
/// reflects the identity rather than double rounding of large entries.
pub fn eigenfunction_residual(
    op: &TreeOperator,
    sys: &MopSystem,
    kind: EigenKind,
    z: Complex64,
    x: usize,
) -> Result<EigenResidual> {
    let prec = sys.precision();
    let zh = from_c64(prec, z);
    let tree = &op.tree;
    let coef = tree_coefficients_hp(sys, tree, op.kappa)?;
    let m_inv = m_inv_hp(tree, &coef);
    let zero = Complex::new(prec);
    let (f, boundary) = match kind {
        EigenKind::P => {
            let n = match tree.kind {
                TreeKind::Finite { n1, n2 } => MultiIndex::new(n1, n2),
                _ => return Err(MopError::InvalidInput("kind p needs a finite tree".into())),
            };
            let f = per_projection_hp(tree, &m_inv, |m| Ok(sys.type2(m)?.eval_c(&zh)))?;
            let b = if x == 0 {
                let p1 = sys.type2(n.plus(1))?.eval_c(&zh);
                let p2 = sys.type2(n.plus(2))?.eval_c(&zh);
                Complex::with_val(prec, p1 * op.kappa.0) + Complex::with_val(prec, p2 * op.kappa.1)
            } else {
                let pp = tree.proj(tree.parent(x).unwrap());
                Complex::with_val(prec, sys.type2(pp)?.eval_c(&zh) * &m_inv[x])
            };
            (f, b)
        }
        EigenKind::L => {
            if !matches!(tree.kind, TreeKind::Cayley { .. }) {
                return Err(MopError::InvalidInput("kind l needs a Cayley tree".into()));
            }
            let f = per_projection_hp(tree, &m_inv, |m| sys.l_hp(m, &zh, Side::Plus))?;
            let b = if x == 0 {
                l_kappa_hp(sys, op.kappa, &zh, Side::Plus)?
            } else {
                let pp = tree.proj(tree.parent(x).unwrap());
                Complex::with_val(prec, sys.l_hp(pp, &zh, Side::Plus)? * &m_inv[x])
            };
            (f, b)
        }
        EigenKind::LambdaCommutator { k, l } => {
            if k > 2 || l > 2 {
                return Err(MopError::InvalidInput(format!("commutator indices ({k},{l}) must lie in 0..=2")));
            }
            let xp = tree
                .parent(x)
                .ok_or_else(|| MopError::InvalidInput("commutator needs a non-root vertex".into()))?;
            let a = lambda_hp(sys, tree, &m_inv, k, &zh)?;
            let b = lambda_hp(sys, tree, &m_inv, l, &zh)?;
            let f = a
                .iter()
                .zip(&b)
                .map(|(ay, by)| Complex::with_val(prec, &a[xp] * by) - Complex::with_val(prec, ay * &b[xp]))
                .collect();
            (f, zero)
        }
    };
    let mut interior = 0.0f64;
    let mut raw = 0.0;
    for y in tree.subtree(x) {
        if !tree.is_interior(y) {
            continue;
        }
        let mut r = Complex::with_val(prec, &f[y] * &coef.v[y]);
        r -= Complex::with_val(prec, &f[y] * &zh);
        if y != x {
            let p = tree.parent(y).unwrap();
            r += Complex::with_val(prec, &f[p] * coef.up(y));
        }
        for &c in tree.children(y) {
            r += Complex::with_val(prec, &f[c] * coef.down(c));
        }
        if y == x {
            raw = cabs(&r).to_f64();
            r += &boundary;
        }
        interior = interior.max(cabs(&r).to_f64());
    }
    Ok(EigenResidual { interior, root_row_raw: raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{ang_u, nik_u};

    #[test]
    fn finite_root_potential() {
        let s = ang_u();
        let op = assemble_finite(&s, (1.0, 0.0), MultiIndex::new(1, 1)).unwrap();
        let (_, b) = s.recurrence_f64(MultiIndex::new(1, 1)).unwrap();
        assert_eq!(op.v[0], b[0]);
        assert!(op.sigma.iter().all(|&x| x == 0));
        assert_eq!(op.s_selfadjoint_check(), 0.0);
    }

    #[test]
    fn truncated_small_cases() {
        let s = ang_u();
        let op = assemble_truncated(&s, (1.0, 0.0), 0).unwrap();
        let (_, b) = s.recurrence_f64(MultiIndex::new(0, 1)).unwrap();
        assert_eq!(op.len(), 1);
        assert_eq!(op.v[0], b[0]);
        let op = assemble_truncated(&s, (1.0, 0.0), 2).unwrap();
        let m = op.to_dense();
        assert_eq!(m.nrows(), 7);
        assert_eq!(m.clone(), m.transpose());
    }

    #[test]
    fn nikishin_operator_has_signs() {
        let s = nik_u();
        let op = assemble_truncated(&s, (1.0, 0.0), 2).unwrap();
        assert!(op.sigma.iter().any(|&x| x == 1));
        assert!(op.s_selfadjoint_check() <= 1e-15);
        let m = op.to_dense();
        assert!(m != m.transpose());
        let mut pert = m.clone();
        pert[(0, 1)] += 0.01;
        assert!(s_selfadjoint_residual(&pert, &op.signature()) > 0.0);
    }

    #[test]
    fn finite_p_identity() {
        let s = ang_u();
        let op = assemble_finite(&s, (1.0, 0.0), MultiIndex::new(1, 1)).unwrap();
        let r = eigenfunction_residual(&op, &s, EigenKind::P, Complex64::new(0.7, 0.0), 0).unwrap();
        assert!(r.interior <= 1e-12, "{r:?}");
        let op = assemble_finite(&s, (0.3, 0.7), MultiIndex::new(3, 2)).unwrap();
        for x in 0..op.len() {
            let r = eigenfunction_residual(&op, &s, EigenKind::P, Complex64::new(0.4, 0.2), x).unwrap();
            assert!(r.interior <= 1e-11, "{x} {r:?}");
        }
    }

    #[test]
    fn cayley_l_identity() {
        let s = ang_u();
        let z = Complex64::new(5.0, 0.0);
        let op = assemble_truncated(&s, (1.0, 0.0), 4).unwrap();
        let r = eigenfunction_residual(&op, &s, EigenKind::L, z, 0).unwrap();
        assert!(r.interior <= 1e-12, "{r:?}");
        // the raw root row equals L_ϰ, which for κ = (1,0) is μ̂2/‖μ2‖
        let lk = s.measure(2).markov(z).unwrap() / s.measure(2).mass();
        assert!((r.root_row_raw - lk.norm()).abs() <= 1e-10);
        for x in 1..op.len() {
            let r = eigenfunction_residual(&op, &s, EigenKind::L, z, x).unwrap();
            assert!(r.interior <= 1e-12);
        }
    }

    #[test]
    fn commutator_identity() {
        let s = ang_u();
        let z = Complex64::new(5.0, 0.0);
        let op = assemble_truncated(&s, (0.5, 0.5), 4).unwrap();
        for x in 1..op.len() {
            for (k, l) in [(1, 2), (0, 1), (2, 0)] {
                let r = eigenfunction_residual(&op, &s, EigenKind::LambdaCommutator { k, l }, z, x).unwrap();
                assert!(r.interior <= 1e-12, "{x} {k} {l} {r:?}");
            }
        }
    }

    #[test]
    fn resolvent_matches_dense_solve() {
        let s = nik_u();
        let op = assemble_truncated(&s, (0.3, 0.7), 3).unwrap();
        let z = Complex64::new(0.5, 1.0);
        let x = 2;
        let u = op.resolvent_column(x, z);
        let sub = op.tree.subtree(x);
        let n = sub.len();
        let m = op.to_dense();
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        for (i, &yi) in sub.iter().enumerate() {
            for (j, &yj) in sub.iter().enumerate() {
                a[(i, j)] = Complex64::new(m[(yi, yj)], 0.0);
            }
            a[(i, i)] -= z;
        }
        let mut rhs = nalgebra::DVector::<Complex64>::zeros(n);
        rhs[0] = Complex64::new(1.0, 0.0);
        let sol = a.lu().solve(&rhs).unwrap();
        for (i, &y) in sub.iter().enumerate() {
            assert!((sol[i] - u[y]).norm() < 1e-12);
        }
    }

    #[test]
    fn norm_bound_holds() {
        let s = ang_u();
        let op = assemble_truncated(&s, (1.0, 0.0), 5).unwrap();
        let ev = op.eigenvalues().unwrap();
        let b = op.norm_bound();
        assert!(ev.iter().all(|e| e.norm() <= b));
    }
}

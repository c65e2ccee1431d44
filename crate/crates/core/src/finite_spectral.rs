//! Eigenvalues, joints and canonical eigenvectors of Jacobi matrices on the
//! finite trees T_N, plus the wave/front S-orthogonalization.

use crate::error::{MopError, Result};
use crate::hp::{fl, real_zeros, HpPoly};
use crate::mop_engine::{MopSystem, MultiIndex};
use crate::tree_jacobi::{assemble_finite, m_inv_hp, tree_coefficients_hp, HpCoefficients, TreeOperator};
use crate::tree_topology::Tree;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rug::Float;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};

/// Zeros closer than this are treated as one eigenvalue; parent/child zero
/// sets closer than this violate the simplicity assumption.
pub const CLASH_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum JointId {
    /// the virtual parent of the root
    ParentOfRoot,
    Vertex(usize),
}

/// Which polynomial vanishes at an eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ZeroSource {
    ParentOfRoot,
    Index(MultiIndex),
}

#[derive(Clone, Debug, Serialize)]
pub struct Eigenvalue {
    pub e: f64,
    #[serde(skip)]
    pub e_hp: Float,
    pub sources: Vec<ZeroSource>,
}

/// P_{Π(O_(p))} = κ1 P_{N+e1} + κ2 P_{N+e2}.
pub fn parent_of_root_poly(sys: &MopSystem, kappa: (f64, f64), n: MultiIndex) -> Result<HpPoly> {
    let prec = sys.precision();
    let p1 = sys.type2(n.plus(1))?.scale(&fl(prec, kappa.0));
    let p2 = sys.type2(n.plus(2))?.scale(&fl(prec, kappa.1));
    Ok(p1.add(&p2))
}

fn checked_zeros(p: &HpPoly, degree: usize, label: &str) -> Result<Vec<Float>> {
    let z = if degree == 0 { vec![] } else { real_zeros(p)? };
    if z.len() != degree {
        return Err(MopError::Assumption(format!("{label}: {} real zeros, expected {degree}", z.len())));
    }
    for w in z.windows(2) {
        if (w[1].to_f64() - w[0].to_f64()).abs() <= CLASH_TOL {
            return Err(MopError::Assumption(format!("{label}: double zero near {}", w[0].to_f64())));
        }
    }
    Ok(z)
}

fn min_gap(a: &[Float], b: &[Float]) -> f64 {
    let mut g = f64::INFINITY;
    for x in a {
        for y in b {
            g = g.min((x.to_f64() - y.to_f64()).abs());
        }
    }
    g
}

/// Zero sets for every projection in T_N and for the parent of the root, after
/// verifying that they are real and simple and that adjacent sets are disjoint.
pub struct ZeroTable {
    pub parent_of_root: Vec<Float>,
    pub by_index: HashMap<MultiIndex, Vec<Float>>,
}

pub fn zero_table(sys: &MopSystem, kappa: (f64, f64), n: MultiIndex) -> Result<ZeroTable> {
    let op_poly = parent_of_root_poly(sys, kappa, n)?;
    let parent_of_root = checked_zeros(&op_poly, n.total() + 1, "parent of root")?;
    let mut by_index = HashMap::new();
    for a in 0..=n.n1 {
        for b in 0..=n.n2 {
            let m = MultiIndex::new(a, b);
            let z = checked_zeros(&sys.type2(m)?, m.total(), &format!("P_{m}"))?;
            by_index.insert(m, z);
        }
    }
    if min_gap(&parent_of_root, &by_index[&n]) <= CLASH_TOL {
        return Err(MopError::Assumption(format!("P_{n} and the parent-of-root polynomial share a zero")));
    }
    for a in 0..=n.n1 {
        for b in 0..=n.n2 {
            let m = MultiIndex::new(a, b);
            for i in 1..=2 {
                if let Some(c) = m.minus(i) {
                    if min_gap(&by_index[&m], &by_index[&c]) <= CLASH_TOL {
                        return Err(MopError::Assumption(format!("P_{m} and P_{c} share a zero")));
                    }
                }
            }
        }
    }
    Ok(ZeroTable { parent_of_root, by_index })
}

/// The eigenvalue set: zeros of the parent-of-root polynomial and of P_n for
/// n ∈ ℕ², n ≤ N, merged within CLASH_TOL and annotated by source.
pub fn eigenvalue_set(sys: &MopSystem, kappa: (f64, f64), n: MultiIndex) -> Result<Vec<Eigenvalue>> {
    if !n.is_positive() {
        return Err(MopError::InvalidInput(format!("N = {n} must lie in N^2")));
    }
    let zt = zero_table(sys, kappa, n)?;
    let mut all: Vec<(Float, ZeroSource)> = zt.parent_of_root.iter().map(|z| (z.clone(), ZeroSource::ParentOfRoot)).collect();
    for a in 1..=n.n1 {
        for b in 1..=n.n2 {
            let m = MultiIndex::new(a, b);
            all.extend(zt.by_index[&m].iter().map(|z| (z.clone(), ZeroSource::Index(m))));
        }
    }
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut out: Vec<Eigenvalue> = Vec::new();
    for (z, s) in all {
        match out.last_mut() {
            Some(last) if (z.to_f64() - last.e).abs() <= CLASH_TOL => last.sources.push(s),
            _ => out.push(Eigenvalue { e: z.to_f64(), e_hp: z, sources: vec![s] }),
        }
    }
    Ok(out)
}

/// Joint*(E) in canonical order: vertices by id, then the parent of the root.
pub fn joint_star(tree: &Tree, ev: &Eigenvalue) -> Vec<JointId> {
    let mut out: Vec<JointId> = (0..tree.len())
        .filter(|&y| {
            let p = tree.proj(y);
            p.is_positive() && ev.sources.contains(&ZeroSource::Index(p))
        })
        .map(JointId::Vertex)
        .collect();
    if ev.sources.contains(&ZeroSource::ParentOfRoot) {
        out.push(JointId::ParentOfRoot);
    }
    out
}

/// p_Y(E) in extended precision.
fn p_values(sys: &MopSystem, tree: &Tree, m_inv: &[Float], e: &Float) -> Result<Vec<Float>> {
    let prec = sys.precision();
    let mut cache: HashMap<MultiIndex, Float> = HashMap::new();
    let mut out = Vec::with_capacity(tree.len());
    for y in 0..tree.len() {
        let n = tree.proj(y);
        if !cache.contains_key(&n) {
            cache.insert(n, sys.type2(n)?.eval(e));
        }
        out.push(Float::with_val(prec, &cache[&n] * &m_inv[y]));
    }
    Ok(out)
}

fn canonical_with(
    tree: &Tree,
    coef: &HpCoefficients,
    p: &[Float],
    joint: &[JointId],
    x: JointId,
) -> Result<Vec<f64>> {
    if !joint.contains(&x) {
        let id = match x {
            JointId::Vertex(v) => v,
            JointId::ParentOfRoot => tree.len(),
        };
        return Err(MopError::Joint(id));
    }
    match x {
        JointId::ParentOfRoot => Ok(p.iter().map(|v| v.to_f64()).collect()),
        JointId::Vertex(xv) => {
            let mut b = vec![0.0; tree.len()];
            for &c in tree.children(xv) {
                let sign = if tree.index(c) == 2 { 1 } else { -1 };
                // (-1)^σ / W^{1/2} = down / W
                let mut f = coef.down(c);
                f /= Float::with_val(f.prec(), coef.a[c].abs_ref());
                f /= &p[c];
                if sign < 0 {
                    f = -f;
                }
                for y in tree.subtree(c) {
                    b[y] = Float::with_val(f.prec(), &p[y] * &f).to_f64();
                }
            }
            Ok(b)
        }
    }
}

/// b(E, X) for X ∈ Joint*(E).
pub fn canonical_vector(
    sys: &MopSystem,
    kappa: (f64, f64),
    n: MultiIndex,
    ev: &Eigenvalue,
    x: JointId,
) -> Result<Vec<f64>> {
    let tree = Tree::finite(n);
    let coef = tree_coefficients_hp(sys, &tree, kappa)?;
    let m = m_inv_hp(&tree, &coef);
    let p = p_values(sys, &tree, &m, &ev.e_hp)?;
    canonical_with(&tree, &coef, &p, &joint_star(&tree, ev), x)
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenSpace {
    pub e: f64,
    pub joint_star: Vec<JointId>,
    pub g: usize,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralDecomposition {
    pub n: MultiIndex,
    pub kappa: (f64, f64),
    pub spaces: Vec<EigenSpace>,
    /// max ‖(J - E) b‖ / ‖b‖
    pub residual: f64,
    pub rank: usize,
    /// max distance between the dense-solver spectrum and the predicted multiset
    pub dense_mismatch: f64,
    /// every canonical vector obeys the eigenvector-from-zero rule
    pub zero_rule_ok: bool,
    #[serde(skip)]
    pub op: TreeOperator,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(op: &TreeOperator, e: f64, b: &[f64]) -> f64 {
    let bc: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let jb = op.apply(&bc);
    let r: f64 = jb.iter().zip(b).map(|(j, x)| (j.re - e * x).powi(2) + j.im.powi(2)).sum::<f64>().sqrt();
    r / norm2(b)
}

fn numerical_rank(vectors: &[&Vec<f64>], dim: usize) -> usize {
    let mut m = DMatrix::<f64>::zeros(dim, vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        let s = norm2(v);
        for i in 0..dim {
            m[(i, j)] = v[i] / s;
        }
    }
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// All canonical eigenvectors with residual, rank, multiplicity and
/// dense-solver verification.
pub fn full_basis(sys: &MopSystem, kappa: (f64, f64), n: MultiIndex) -> Result<SpectralDecomposition> {
    let op = assemble_finite(sys, kappa, n)?;
    let tree = &op.tree;
    let coef = tree_coefficients_hp(sys, tree, kappa)?;
    let m = m_inv_hp(tree, &coef);
    let evs = eigenvalue_set(sys, kappa, n)?;
    let op_poly = parent_of_root_poly(sys, kappa, n)?;
    let mut spaces = Vec::with_capacity(evs.len());
    let mut worst = 0.0f64;
    let mut zero_rule_ok = true;
    for ev in &evs {
        let js = joint_star(tree, ev);
        let p = p_values(sys, tree, &m, &ev.e_hp)?;
        let mut vectors = Vec::with_capacity(js.len());
        for &x in &js {
            let b = canonical_with(tree, &coef, &p, &js, x)?;
            worst = worst.max(residual(&op, ev.e, &b));
            zero_rule_ok &= zero_rule(sys, tree, &op_poly, &ev.e_hp, &b)?;
            vectors.push(b);
        }
        spaces.push(EigenSpace { e: ev.e, g: js.len(), joint_star: js, vectors });
    }
    let total: usize = spaces.iter().map(|s| s.g).sum();
    let all: Vec<&Vec<f64>> = spaces.iter().flat_map(|s| s.vectors.iter()).collect();
    let rank = numerical_rank(&all, tree.len());
    if total != tree.len() || rank != tree.len() {
        return Err(MopError::Rank { rank, expected: tree.len() });
    }
    let mut predicted: Vec<f64> = spaces.iter().flat_map(|s| std::iter::repeat(s.e).take(s.g)).collect();
    predicted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dense = op.eigenvalues()?;
    let dense_mismatch = predicted
        .iter()
        .zip(&dense)
        .map(|(p, d)| ((p - d.re).powi(2) + d.im.powi(2)).sqrt())
        .fold(0.0, f64::max);
    Ok(SpectralDecomposition { n, kappa, spaces, residual: worst, rank, dense_mismatch, zero_rule_ok, op })
}

/// Ψ_X ≠ 0 and Ψ_{X_(p)} = 0 must force P_{Π(X_(p))}(E) = 0.
fn zero_rule(sys: &MopSystem, tree: &Tree, op_poly: &HpPoly, e: &Float, b: &[f64]) -> Result<bool> {
    let top = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let is_zero = |x: f64| x.abs() <= 1e-14 * top;
    let vanishes = |p: &HpPoly| -> bool {
        let scale: f64 = p.c.iter().rev().fold(0.0, |acc, c| acc * e.to_f64().abs().max(1.0) + c.to_f64().abs());
        p.eval(e).to_f64().abs() <= 1e-8 * scale.max(1.0)
    };
    if !is_zero(b[0]) && !vanishes(op_poly) {
        return Ok(false);
    }
    for y in 1..tree.len() {
        let p = tree.parent(y).unwrap();
        if !is_zero(b[y]) && is_zero(b[p]) && !vanishes(&sys.type2(tree.proj(p))?) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Wave {
    pub vertices: Vec<usize>,
    pub front: Vec<usize>,
}

/// Partition of the vertices into waves for the given joint set.
pub fn waves_and_fronts(tree: &Tree, joints: &[usize]) -> Vec<Wave> {
    let joint: BTreeSet<usize> = joints.iter().copied().collect();
    let stop = |v: usize| joint.contains(&v) || tree.is_leaf(v);
    let mut waves = Vec::new();
    let mut sources: Vec<usize>;
    if joint.contains(&0) {
        waves.push(Wave { vertices: vec![0], front: vec![0] });
        sources = vec![0];
    } else {
        sources = vec![];
        let mut w = Wave { vertices: vec![0], front: vec![] };
        descend(tree, 0, &stop, &mut w);
        sources.extend(w.front.iter().copied().filter(|v| joint.contains(v)));
        waves.push(w);
    }
    while !sources.is_empty() {
        let mut w = Wave { vertices: vec![], front: vec![] };
        for &s in &sources {
            descend(tree, s, &stop, &mut w);
        }
        w.vertices.sort_unstable();
        w.front.sort_unstable();
        sources = w.front.iter().copied().filter(|v| joint.contains(v)).collect();
        waves.push(w);
    }
    waves
}

fn descend(tree: &Tree, s: usize, stop: &dyn Fn(usize) -> bool, w: &mut Wave) {
    let mut stack: Vec<usize> = tree.children(s).to_vec();
    while let Some(v) = stack.pop() {
        w.vertices.push(v);
        if stop(v) {
            w.front.push(v);
        } else {
            stack.extend_from_slice(tree.children(v));
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SBasis {
    /// (E, ψ) with [ψ, ψ] = ±1
    pub vectors: Vec<(f64, Vec<f64>)>,
    pub signs: Vec<i8>,
    pub i_plus: usize,
    pub i_minus: usize,
    /// max |[ψ_i, ψ_j]| over i ≠ j
    pub off_diagonal: f64,
}

fn indefinite(s: &[f64], f: &[f64], g: &[f64]) -> f64 {
    s.iter().zip(f).zip(g).map(|((s, f), g)| s * f * g).sum()
}

/// S-orthonormal eigenbasis by Gram–Schmidt in the indefinite product,
/// deepest wave first.
pub fn s_orthogonalize(decomp: &SpectralDecomposition) -> Result<SBasis> {
    let tree = &decomp.op.tree;
    let s = decomp.op.signature();
    let mut vectors = Vec::new();
    let mut signs = Vec::new();
    for space in &decomp.spaces {
        let joints: Vec<usize> = space
            .joint_star
            .iter()
            .filter_map(|j| match j {
                JointId::Vertex(v) => Some(*v),
                JointId::ParentOfRoot => None,
            })
            .collect();
        let waves = waves_and_fronts(tree, &joints);
        let level = |j: &JointId| match j {
            JointId::ParentOfRoot => 0,
            JointId::Vertex(v) => 1 + waves.iter().position(|w| w.vertices.contains(v)).unwrap(),
        };
        let mut order: Vec<usize> = (0..space.g).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(level(&space.joint_star[i])), space.joint_star[i]));
        let mut done: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in order {
            let mut psi = space.vectors[i].clone();
            for (phi, nphi) in &done {
                let c = indefinite(&s, &psi, phi) / nphi;
                for (a, b) in psi.iter_mut().zip(phi) {
                    *a -= c * b;
                }
            }
            let q = indefinite(&s, &psi, &psi);
            let l2 = norm2(&psi).powi(2);
            if q.abs() <= 1e-10 * l2 {
                return Err(MopError::NeutralVector(q / l2));
            }
            let k = q.abs().sqrt();
            psi.iter_mut().for_each(|x| *x /= k);
            done.push((psi.clone(), q.signum()));
            signs.push(q.signum() as i8);
            vectors.push((space.e, psi));
        }
    }
    let mut off = 0.0f64;
    for i in 0..vectors.len() {
        for j in 0..i {
            off = off.max(indefinite(&s, &vectors[i].1, &vectors[j].1).abs());
        }
    }
    let i_plus = signs.iter().filter(|&&x| x > 0).count();
    Ok(SBasis { i_minus: vectors.len() - i_plus, i_plus, vectors, signs, off_diagonal: off })
}

/// Counts of +1 and -1 on the diagonal of S.
pub fn signature_counts(op: &TreeOperator) -> (usize, usize) {
    let s = op.signature();
    let plus = s.iter().filter(|&&x| x > 0.0).count();
    (plus, s.len() - plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{ang_u, nik_u};

    #[test]
    fn nine_values_for_two_one() {
        let s = ang_u();
        let n = MultiIndex::new(2, 1);
        let ev = eigenvalue_set(&s, (0.0, 1.0), n).unwrap();
        assert_eq!(ev.len(), 9);
        let count = |src: ZeroSource| ev.iter().filter(|e| e.sources.contains(&src)).count();
        assert_eq!(count(ZeroSource::ParentOfRoot), 4);
        assert_eq!(count(ZeroSource::Index(n)), 3);
        assert_eq!(count(ZeroSource::Index(MultiIndex::new(1, 1))), 2);
    }

    #[test]
    fn parent_of_root_for_unit_kappa() {
        let s = ang_u();
        let n = MultiIndex::new(1, 1);
        let z = zero_table(&s, (1.0, 0.0), n).unwrap();
        let direct = s.p_zeros(n.plus(1)).unwrap();
        assert_eq!(z.parent_of_root.len(), 3);
        for (a, b) in z.parent_of_root.iter().zip(direct.iter()) {
            assert!((a.to_f64() - b.to_f64()).abs() < 1e-14);
        }
        assert_eq!(eigenvalue_set(&s, (1.0, 0.0), n).unwrap().len(), 5);
    }

    #[test]
    fn canonical_vectors_in_worked_example() {
        let s = ang_u();
        let n = MultiIndex::new(2, 1);
        let kappa = (0.0, 1.0);
        let tree = Tree::finite(n);
        let ev = eigenvalue_set(&s, kappa, n).unwrap();
        let e11 = ev.iter().find(|e| e.sources == vec![ZeroSource::Index(MultiIndex::new(1, 1))]).unwrap();
        let js = joint_star(&tree, e11);
        assert_eq!(js.len(), 1);
        let JointId::Vertex(xp) = js[0] else { panic!() };
        assert_eq!(tree.proj(xp), MultiIndex::new(1, 1));
        let b = canonical_vector(&s, kappa, n, e11, js[0]).unwrap();
        let support: Vec<usize> = (0..tree.len()).filter(|&y| b[y] != 0.0).collect();
        let expected: Vec<usize> = tree.subtree(xp).into_iter().filter(|&y| y != xp).collect();
        let mut expected = expected;
        expected.sort_unstable();
        assert_eq!(support, expected);
        assert_eq!(b[xp], 0.0);
        assert_eq!(b[0], 0.0);
        let e22 = ev.iter().find(|e| e.sources == vec![ZeroSource::ParentOfRoot]).unwrap();
        let b = canonical_vector(&s, kappa, n, e22, JointId::ParentOfRoot).unwrap();
        assert!(b[0] != 0.0);
        assert!(matches!(canonical_vector(&s, kappa, n, e22, JointId::Vertex(0)), Err(MopError::Joint(0))));
    }

    #[test]
    fn basis_for_small_trees() {
        let s = ang_u();
        for (n, kappa, dim) in [(MultiIndex::new(2, 1), (0.0, 1.0), 9), (MultiIndex::new(1, 1), (1.0, 0.0), 5)] {
            let d = full_basis(&s, kappa, n).unwrap();
            assert_eq!(d.rank, dim);
            assert!(d.residual <= 1e-9 * d.op.norm_bound(), "{}", d.residual);
            assert!(d.dense_mismatch <= 1e-10, "{}", d.dense_mismatch);
            assert!(d.zero_rule_ok);
        }
    }

    #[test]
    fn wave_partition_example() {
        let tree = Tree::finite(MultiIndex::new(3, 2));
        let xp = tree.follow(&[1]).unwrap();
        let x = tree.follow(&[1, 2]).unwrap();
        assert_eq!(tree.proj(x), MultiIndex::new(2, 1));
        let w = waves_and_fronts(&tree, &[0, x]);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].vertices, vec![0]);
        let t1 = tree.follow(&[1, 1]).unwrap();
        let t2 = tree.follow(&[2]).unwrap();
        let mut w2: Vec<usize> = vec![xp, x];
        w2.extend(tree.subtree(t1));
        w2.extend(tree.subtree(t2));
        w2.sort_unstable();
        assert_eq!(w[1].vertices, w2);
        let mut w3: Vec<usize> = tree.children(x).iter().flat_map(|&c| tree.subtree(c)).collect();
        w3.sort_unstable();
        assert_eq!(w[2].vertices, w3);
        assert!(w[2].front.iter().all(|&v| tree.is_leaf(v)));
        assert!(w[1].front.contains(&x));
        let total: usize = w.iter().map(|w| w.vertices.len()).sum();
        assert_eq!(total, tree.len());
    }

    #[test]
    fn trivial_wave_cases() {
        let tree = Tree::finite(MultiIndex::new(2, 2));
        let w = waves_and_fronts(&tree, &[]);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].vertices.len(), tree.len());
        let w = waves_and_fronts(&tree, &[0]);
        assert_eq!(w[0], Wave { vertices: vec![0], front: vec![0] });
    }

    #[test]
    fn definite_orthogonalization() {
        let s = ang_u();
        let d = full_basis(&s, (0.5, 0.5), MultiIndex::new(2, 2)).unwrap();
        let b = s_orthogonalize(&d).unwrap();
        assert_eq!(b.i_minus, 0);
        assert_eq!(b.i_plus, d.op.len());
        assert!(b.off_diagonal <= 1e-8, "{}", b.off_diagonal);
    }

    #[test]
    fn indefinite_orthogonalization() {
        let s = nik_u();
        let d = full_basis(&s, (1.0, 0.0), MultiIndex::new(2, 2)).unwrap();
        let b = s_orthogonalize(&d).unwrap();
        let (plus, minus) = signature_counts(&d.op);
        assert!(minus > 0);
        assert_eq!((b.i_plus, b.i_minus), (plus, minus));
        assert!(b.off_diagonal <= 1e-8, "{}", b.off_diagonal);
    }
}

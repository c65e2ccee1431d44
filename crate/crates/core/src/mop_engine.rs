//! Type I and type II multiple orthogonal polynomials of a pair of measures,
//! their second-kind functions and nearest-neighbour recurrence coefficients.

use crate::error::{MopError, Result};
use crate::hp::{fl, from_c64, real_zeros, solve, to_c64, HpPoly, DEFAULT_PRECISION};
use crate::measures::{HpMeasure, Measure, Side};
use num_complex::Complex64;
use rug::{Complex, Float};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex {
    pub n1: usize,
    pub n2: usize,
}

impl MultiIndex {
    pub const fn new(n1: usize, n2: usize) -> Self {
        MultiIndex { n1, n2 }
    }

    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    /// Component i (1-based).
    pub fn get(&self, i: usize) -> usize {
        if i == 1 {
            self.n1
        } else {
            self.n2
        }
    }

    pub fn plus(&self, i: usize) -> MultiIndex {
        if i == 1 {
            MultiIndex::new(self.n1 + 1, self.n2)
        } else {
            MultiIndex::new(self.n1, self.n2 + 1)
        }
    }

    pub fn minus(&self, i: usize) -> Option<MultiIndex> {
        if i == 1 {
            self.n1.checked_sub(1).map(|m| MultiIndex::new(m, self.n2))
        } else {
            self.n2.checked_sub(1).map(|m| MultiIndex::new(self.n1, m))
        }
    }

    pub fn is_positive(&self) -> bool {
        self.n1 > 0 && self.n2 > 0
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n1, self.n2)
    }
}

/// Polynomial data attached to one multi-index.
#[derive(Debug)]
pub struct MopRecord {
    pub n: MultiIndex,
    /// monic type II polynomial of degree |n|
    pub p: HpPoly,
    pub a1: HpPoly,
    pub a2: HpPoly,
    pub a0: HpPoly,
    /// h_j = ∫ P_n x^{n_j} dμ_j
    pub h: [Float; 2],
}

impl MopRecord {
    pub fn a(&self, k: usize) -> &HpPoly {
        match k {
            0 => &self.a0,
            1 => &self.a1,
            _ => &self.a2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Recurrence {
    pub a: [Float; 2],
    pub b: [Float; 2],
}

impl Recurrence {
    pub fn a_f64(&self) -> [f64; 2] {
        [self.a[0].to_f64(), self.a[1].to_f64()]
    }

    pub fn b_f64(&self) -> [f64; 2] {
        [self.b[0].to_f64(), self.b[1].to_f64()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondKind {
    pub l: Complex64,
    pub r1: Complex64,
    pub r2: Complex64,
}

pub struct MopSystem {
    mu: [Measure; 2],
    hmu: [HpMeasure; 2],
    prec: u32,
    moments: [Mutex<Vec<Float>>; 2],
    records: Mutex<HashMap<MultiIndex, Arc<MopRecord>>>,
    recurrences: Mutex<HashMap<MultiIndex, Arc<Recurrence>>>,
    zeros: Mutex<HashMap<MultiIndex, Arc<Vec<Float>>>>,
}

impl fmt::Debug for MopSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MopSystem").field("mu", &self.mu).field("prec", &self.prec).finish()
    }
}

fn poly_pv(p: &HpPoly, moments: &[Float], z: &Complex) -> Complex {
    // Σ_j p_j Σ_{i<j} z^i m_{j-1-i}: the polynomial part of ∫ p(x)/(z-x) dμ
    let prec = p.prec();
    let d = p.len();
    let mut q = vec![Float::new(prec); d.saturating_sub(1)];
    for j in 1..d {
        for (i, qi) in q.iter_mut().enumerate().take(j) {
            *qi += Float::with_val(prec, &p.c[j] * &moments[j - 1 - i]);
        }
    }
    HpPoly::from_coeffs(prec, q).eval_c(z)
}

impl MopSystem {
    pub fn new(mu1: Measure, mu2: Measure) -> Result<Self> {
        Self::with_precision(mu1, mu2, DEFAULT_PRECISION)
    }

    pub fn with_precision(mu1: Measure, mu2: Measure, prec: u32) -> Result<Self> {
        mu1.validate()?;
        mu2.validate()?;
        if prec < 64 {
            return Err(MopError::InvalidInput("precision_bits must be at least 64".into()));
        }
        let hmu = [HpMeasure::new(&mu1, prec), HpMeasure::new(&mu2, prec)];
        Ok(MopSystem {
            mu: [mu1, mu2],
            hmu,
            prec,
            moments: [Mutex::new(Vec::new()), Mutex::new(Vec::new())],
            records: Mutex::new(HashMap::new()),
            recurrences: Mutex::new(HashMap::new()),
            zeros: Mutex::new(HashMap::new()),
        })
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    /// Measure k (1-based).
    pub fn measure(&self, k: usize) -> &Measure {
        &self.mu[k - 1]
    }

    pub fn hp_measure(&self, k: usize) -> &HpMeasure {
        &self.hmu[k - 1]
    }

    /// Moments of μ_k of orders 0..=kmax.
    pub fn moments(&self, k: usize, kmax: usize) -> Vec<Float> {
        let mut g = self.moments[k - 1].lock().unwrap();
        if g.len() <= kmax {
            let want = (kmax + 1).max(2 * g.len()).max(16);
            *g = self.hmu[k - 1].moments(want - 1);
        }
        g[..=kmax].to_vec()
    }

    fn compute_type2(&self, n: MultiIndex) -> Result<HpPoly> {
        let prec = self.prec;
        let nn = n.total();
        if nn == 0 {
            return Ok(HpPoly::one(prec));
        }
        let mut rows = Vec::with_capacity(nn);
        let mut rhs = Vec::with_capacity(nn);
        for k in 1..=2 {
            let nk = n.get(k);
            if nk == 0 {
                continue;
            }
            let m = self.moments(k, nn + nk);
            for r in 0..nk {
                rows.push((0..nn).map(|j| m[j + r].clone()).collect::<Vec<_>>());
                rhs.push(Float::with_val(prec, -&m[nn + r]));
            }
        }
        let c = solve(rows, rhs, prec).ok_or(MopError::Normality(n.n1, n.n2))?;
        let mut coeffs = c;
        coeffs.push(fl(prec, 1.0));
        Ok(HpPoly::from_coeffs(prec, coeffs))
    }

    fn compute_type1(&self, n: MultiIndex) -> Result<(HpPoly, HpPoly)> {
        let prec = self.prec;
        let nn = n.total();
        if nn == 0 {
            return Ok((HpPoly::zero(prec), HpPoly::zero(prec)));
        }
        let m1 = self.moments(1, nn + n.n1);
        let m2 = self.moments(2, nn + n.n2);
        let mut rows = Vec::with_capacity(nn);
        for r in 0..nn {
            let mut row = Vec::with_capacity(nn);
            row.extend((0..n.n1).map(|i| m1[i + r].clone()));
            row.extend((0..n.n2).map(|i| m2[i + r].clone()));
            rows.push(row);
        }
        let mut rhs = vec![Float::new(prec); nn];
        rhs[nn - 1] = fl(prec, 1.0);
        let c = solve(rows, rhs, prec).ok_or(MopError::Normality(n.n1, n.n2))?;
        let a1 = HpPoly::from_coeffs(prec, c[..n.n1].to_vec());
        let a2 = HpPoly::from_coeffs(prec, c[n.n1..].to_vec());
        Ok((a1, a2))
    }

    fn a0_poly(&self, a1: &HpPoly, a2: &HpPoly) -> HpPoly {
        let prec = self.prec;
        let d = a1.len().max(a2.len());
        let mut q = vec![Float::new(prec); d.saturating_sub(1)];
        for (k, a) in [(1usize, a1), (2, a2)] {
            if a.len() < 2 {
                continue;
            }
            let m = self.moments(k, a.len());
            for j in 1..a.len() {
                for (i, qi) in q.iter_mut().enumerate().take(j) {
                    *qi += Float::with_val(prec, &a.c[j] * &m[j - 1 - i]);
                }
            }
        }
        HpPoly::from_coeffs(prec, q)
    }

    /// Full polynomial record at n (cached).
    pub fn record(&self, n: MultiIndex) -> Result<Arc<MopRecord>> {
        if let Some(r) = self.records.lock().unwrap().get(&n) {
            return Ok(r.clone());
        }
        let prec = self.prec;
        let p = self.compute_type2(n)?;
        let (a1, a2) = self.compute_type1(n)?;
        let a0 = self.a0_poly(&a1, &a2);
        let mut h = [Float::new(prec), Float::new(prec)];
        for (j, hj) in h.iter_mut().enumerate() {
            let nj = n.get(j + 1);
            let m = self.moments(j + 1, n.total() + nj);
            for (i, c) in p.c.iter().enumerate() {
                *hj += Float::with_val(prec, c * &m[i + nj]);
            }
        }
        let rec = Arc::new(MopRecord { n, p, a1, a2, a0, h });
        Ok(self.records.lock().unwrap().entry(n).or_insert(rec).clone())
    }

    pub fn type2(&self, n: MultiIndex) -> Result<HpPoly> {
        Ok(self.record(n)?.p.clone())
    }

    /// (A1, A2, A0)
    pub fn type1(&self, n: MultiIndex) -> Result<(HpPoly, HpPoly, HpPoly)> {
        if n.total() == 0 {
            return Err(MopError::InvalidInput("type I polynomials need |n| >= 1".into()));
        }
        let r = self.record(n)?;
        Ok((r.a1.clone(), r.a2.clone(), r.a0.clone()))
    }

    /// Recurrence coefficients (a_{n,1}, a_{n,2}, b_{n,1}, b_{n,2}).
    pub fn recurrence(&self, n: MultiIndex) -> Result<Arc<Recurrence>> {
        if let Some(r) = self.recurrences.lock().unwrap().get(&n) {
            return Ok(r.clone());
        }
        let prec = self.prec;
        let rn = self.record(n)?;
        let nn = n.total();
        let mut a = [Float::new(prec), Float::new(prec)];
        let mut b = [Float::new(prec), Float::new(prec)];
        for i in 1..=2 {
            if let Some(m) = n.minus(i) {
                let rm = self.record(m)?;
                a[i - 1] = Float::with_val(prec, &rn.h[i - 1] / &rm.h[i - 1]);
            }
            let rp = self.record(n.plus(i))?;
            let sub = if nn == 0 { Float::new(prec) } else { rn.p.coeff(nn - 1) };
            b[i - 1] = sub - rp.p.coeff(nn);
        }
        let rec = Arc::new(Recurrence { a, b });
        Ok(self.recurrences.lock().unwrap().entry(n).or_insert(rec).clone())
    }

    pub fn recurrence_f64(&self, n: MultiIndex) -> Result<([f64; 2], [f64; 2])> {
        let r = self.recurrence(n)?;
        Ok((r.a_f64(), r.b_f64()))
    }

    /// Max coefficient of x P_n - P_{n+e_i} - b_i P_n - a_1 P_{n-e1} - a_2 P_{n-e2}
    /// over both directions.
    pub fn recurrence_residual(&self, n: MultiIndex) -> Result<f64> {
        let prec = self.prec;
        let rec = self.recurrence(n)?;
        let pn = self.type2(n)?;
        let mut xp = vec![Float::new(prec)];
        xp.extend(pn.c.iter().cloned());
        let xp = HpPoly::from_coeffs(prec, xp);
        let mut worst = 0.0f64;
        for i in 1..=2 {
            let mut r = xp.sub(&self.type2(n.plus(i))?).sub(&pn.scale(&rec.b[i - 1]));
            for j in 1..=2 {
                if let Some(m) = n.minus(j) {
                    r = r.sub(&self.type2(m)?.scale(&rec.a[j - 1]));
                }
            }
            for c in &r.c {
                worst = worst.max(c.to_f64().abs());
            }
        }
        Ok(worst)
    }

    /// Residuals of the three consistency relations at n ∈ ℕ², maximized over i, j.
    pub fn consistency_residual(&self, n: MultiIndex) -> Result<[f64; 3]> {
        consistency_residual_with(n, self.prec, |m| self.recurrence(m).map(|r| (*r).clone()))
    }

    fn markov_at(&self, k: usize, z: &Complex, side: Side) -> Result<Complex> {
        let hm = &self.hmu[k - 1];
        if z.imag().is_zero() {
            return hm.markov_real_point(z.real(), side);
        }
        let zc = to_c64(z);
        if hm.source.dist_to_support(zc) < 1e-12 {
            return Err(MopError::Domain(format!("z = {zc} is on the support")));
        }
        Ok(hm.markov(z))
    }

    /// L_n, R_{n,1}, R_{n,2} at z in extended precision. Real z inside an
    /// ac piece uses the boundary value from `side`.
    pub fn second_kind_hp(&self, n: MultiIndex, z: &Complex, side: Side) -> Result<(Complex, Complex, Complex)> {
        let prec = self.prec;
        let r = self.record(n)?;
        let m1 = self.markov_at(1, z, side)?;
        let m2 = self.markov_at(2, z, side)?;
        let mut l = Complex::with_val(prec, r.a1.eval_c(z) * &m1);
        l += r.a2.eval_c(z) * &m2;
        l -= r.a0.eval_c(z);
        let pz = r.p.eval_c(z);
        let mo1 = self.moments(1, r.p.len());
        let mo2 = self.moments(2, r.p.len());
        let r1 = Complex::with_val(prec, &pz * &m1) - poly_pv(&r.p, &mo1, z);
        let r2 = Complex::with_val(prec, &pz * &m2) - poly_pv(&r.p, &mo2, z);
        Ok((l, r1, r2))
    }

    /// L_n(z) in extended precision.
    pub fn l_hp(&self, n: MultiIndex, z: &Complex, side: Side) -> Result<Complex> {
        let prec = self.prec;
        let r = self.record(n)?;
        let mut l = Complex::new(prec);
        if !r.a1.is_empty() {
            l += r.a1.eval_c(z) * self.markov_at(1, z, side)?;
        }
        if !r.a2.is_empty() {
            l += r.a2.eval_c(z) * self.markov_at(2, z, side)?;
        }
        l -= r.a0.eval_c(z);
        Ok(l)
    }

    pub fn second_kind(&self, n: MultiIndex, z: Complex64) -> Result<SecondKind> {
        let (l, r1, r2) = self.second_kind_hp(n, &from_c64(self.prec, z), Side::Plus)?;
        Ok(SecondKind { l: to_c64(&l), r1: to_c64(&r1), r2: to_c64(&r2) })
    }

    /// Sorted zeros of P_n (cached).
    pub fn p_zeros(&self, n: MultiIndex) -> Result<Arc<Vec<Float>>> {
        if let Some(z) = self.zeros.lock().unwrap().get(&n) {
            return Ok(z.clone());
        }
        let z = Arc::new(real_zeros(&self.type2(n)?)?);
        Ok(self.zeros.lock().unwrap().entry(n).or_insert(z).clone())
    }

    fn check_simple(&self, z: &[Float], what: &str) -> Result<()> {
        let tol = fl(self.prec, 1e-30);
        for w in z.windows(2) {
            if Float::with_val(self.prec, &w[1] - &w[0]) < tol {
                return Err(MopError::Zero(format!("{what}: double zero near {}", w[0].to_f64())));
            }
        }
        Ok(())
    }

    /// Strict interlacing of the zeros of P_n and P_{n+e_i}.
    pub fn interlacing_check(&self, n: MultiIndex, i: usize) -> Result<bool> {
        let zn = self.p_zeros(n)?;
        let zp = self.p_zeros(n.plus(i))?;
        self.check_simple(&zn, "P_n")?;
        self.check_simple(&zp, "P_{n+e_i}")?;
        Ok(interlaces_strictly(&zp, &zn))
    }

    /// Zero count, localization and ordering of the zeros of A^{(k)}_n against
    /// A^{(k)}_{n+e_l} for an Angelesco system with Δ1 < Δ2.
    pub fn type1_interlacing_check(&self, n: MultiIndex, k: usize, l: usize) -> Result<bool> {
        // A^{(k)}_n vanishes identically when n_k = 0: nothing to compare
        if n.total() == 0 || n.get(k) == 0 {
            return Ok(true);
        }
        let (lo, hi) = self.mu[k - 1].hull();
        let an = self.record(n)?.a(k).clone();
        let ap = self.record(n.plus(l))?.a(k).clone();
        let zn = if an.len() > 1 { real_zeros(&an)? } else { Vec::new() };
        let zp = if ap.len() > 1 { real_zeros(&ap)? } else { Vec::new() };
        self.check_simple(&zn, "A_n")?;
        self.check_simple(&zp, "A_{n+e_l}")?;
        let nk = n.get(k);
        let expect_n = nk.saturating_sub(1);
        let expect_p = if k == l { nk } else { expect_n };
        if zn.len() != expect_n || zp.len() != expect_p {
            return Ok(false);
        }
        let inside = |z: &Vec<Float>| z.iter().all(|x| *x > lo && *x < hi);
        if !inside(&zn) || !inside(&zp) {
            return Ok(false);
        }
        Ok(if k == l {
            interlaces_strictly(&zp, &zn)
        } else if k == 2 {
            // zeros of A_{n+e1} dominate those of A_n
            dominates(&zp, &zn)
        } else {
            // zeros of A_n dominate those of A_{n+e2}
            dominates(&zn, &zp)
        })
    }

    /// sgn λ_{n,1} = (-1)^{n2} and sgn λ_{n,2} = +1 for the leading
    /// coefficients of the type I polynomials.
    pub fn sign_lambda_check(&self, n: MultiIndex) -> Result<bool> {
        let r = self.record(n)?;
        let mut ok = true;
        if n.n1 > 0 {
            let l1 = r.a1.c[n.n1 - 1].clone();
            let want_pos = n.n2 % 2 == 0;
            ok &= if want_pos { l1 > 0 } else { l1 < 0 };
        }
        if n.n2 > 0 {
            ok &= r.a2.c[n.n2 - 1] > 0;
        }
        Ok(ok)
    }

    /// JSON export of a record with recurrence coefficients.
    pub fn record_json(&self, n: MultiIndex) -> Result<serde_json::Value> {
        let r = self.record(n)?;
        let rec = self.recurrence(n)?;
        Ok(serde_json::json!({
            "n": [n.n1, n.n2],
            "P": r.p.to_f64_vec(),
            "A1": r.a1.to_f64_vec(),
            "A2": r.a2.to_f64_vec(),
            "a": rec.a_f64(),
            "b": rec.b_f64(),
            "h": [r.h[0].to_f64(), r.h[1].to_f64()],
        }))
    }
}

/// y_1 < x_1 < y_2 < ... < x_m < y_{m+1}
pub fn interlaces_strictly(y: &[Float], x: &[Float]) -> bool {
    if y.len() != x.len() + 1 {
        return false;
    }
    x.iter().enumerate().all(|(i, xi)| y[i] < *xi && *xi < y[i + 1])
}

/// u_1 < v_1 < u_2 < v_2 < ... < u_m < v_m: v dominates u.
pub fn dominates(v: &[Float], u: &[Float]) -> bool {
    if v.len() != u.len() {
        return false;
    }
    (0..u.len()).all(|i| u[i] < v[i] && (i + 1 == u.len() || v[i] < u[i + 1]))
}

/// Consistency residuals for an arbitrary coefficient provider.
pub fn consistency_residual_with<F>(n: MultiIndex, prec: u32, coef: F) -> Result<[f64; 3]>
where
    F: Fn(MultiIndex) -> Result<Recurrence>,
{
    if !n.is_positive() {
        return Err(MopError::InvalidInput("consistency relations need n in N^2".into()));
    }
    let mut r = [0.0f64; 3];
    let c = coef(n)?;
    for i in 1..=2usize {
        for j in 1..=2usize {
            let ci = coef(n.plus(i))?;
            let cj = coef(n.plus(j))?;
            let cmi = coef(n.minus(i).unwrap())?;
            let (bi, bj) = (&c.b[i - 1], &c.b[j - 1]);
            let e1 = Float::with_val(prec, &ci.b[j - 1] - bj) - Float::with_val(prec, &cj.b[i - 1] - bi);
            let suma = |x: &Recurrence| Float::with_val(prec, &x.a[0] + &x.a[1]);
            let lhs2 = suma(&cj) - suma(&ci);
            let rhs2 = Float::with_val(prec, &cj.b[i - 1] * bj) - Float::with_val(prec, &ci.b[j - 1] * bi);
            let e2 = lhs2 - rhs2;
            let lhs3 = Float::with_val(prec, &c.a[i - 1] * Float::with_val(prec, bj - bi));
            let rhs3 = Float::with_val(
                prec,
                &cj.a[i - 1] * Float::with_val(prec, &cmi.b[j - 1] - &cmi.b[i - 1]),
            );
            let e3 = lhs3 - rhs3;
            r[0] = r[0].max(e1.to_f64().abs());
            r[1] = r[1].max(e2.to_f64().abs());
            r[2] = r[2].max(e3.to_f64().abs());
        }
    }
    Ok(r)
}

//! Nikishin systems: dual measure, sign patterns of the recurrence
//! coefficients and normalizing constants, boundedness and diagonal growth.

use crate::error::{MopError, Result};
use crate::hp::fl;
use crate::measures::{HpMeasure, Measure};
use crate::mop_engine::{MopSystem, MultiIndex};
use crate::systems::nikishin_partner;
use rug::Float;
use serde::Serialize;

pub struct NikishinSystem {
    pub mu1: Measure,
    pub tau: Measure,
    pub mu2: Measure,
    pub sys: MopSystem,
    htau: HpMeasure,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub n: MultiIndex,
    pub j: usize,
    pub value: f64,
    pub expected_sign: i8,
}

#[derive(Clone, Debug, Serialize)]
pub struct SignReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl SignReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupRow {
    pub n: usize,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    /// |n|
    pub total: usize,
    /// max |a_{n,i}| over n2 ≤ n1 or n2 ≥ n1 + 2 at this |n|
    pub max_a_off_diagonal: f64,
    /// max |b_{n,i}| over all n at this |n|
    pub max_b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrthogonalityRow {
    pub n: MultiIndex,
    /// max_k |∫ x^k R_{n,1} dτ| over the vanishing range
    pub max_moment: f64,
    /// |‖τ‖ h_{n,1} - h_{n,2} - ∫ x^{n2} R_{n,1} dτ| when n2 = n1 + 1
    pub equality_residual: Option<f64>,
}

fn sign_of(x: &Float) -> i8 {
    if x.is_zero() {
        0
    } else if x.is_sign_negative() {
        -1
    } else {
        1
    }
}

fn pm(even: bool) -> i8 {
    if even {
        1
    } else {
        -1
    }
}

/// Moments of the dual measure τ_d from the Laurent expansion of 1/τ̂.
pub fn dual_moments(tau: &Measure, k: usize) -> Result<Vec<f64>> {
    const PREC: u32 = 256;
    let lo = dual_moments_at(tau, k, PREC)?;
    let hi = dual_moments_at(tau, k, PREC + 128)?;
    let scale = lo.iter().chain(hi.iter()).map(|v| v.to_f64().abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for (i, (a, b)) in lo.iter().zip(hi.iter()).enumerate() {
        let diff = Float::with_val(PREC, a - b).to_f64().abs();
        if diff > 1e-12 * scale.max(b.to_f64().abs()) {
            return Err(MopError::Series(i));
        }
    }
    Ok(hi.iter().map(|v| v.to_f64()).collect())
}

fn dual_moments_at(tau: &Measure, k: usize, prec: u32) -> Result<Vec<Float>> {
    let m = HpMeasure::new(tau, prec).moments(k + 2);
    let m0 = m[0].clone();
    if !m0.is_normal() || m0.is_sign_negative() {
        return Err(MopError::InvalidInput("τ must have positive mass".into()));
    }
    // s(w) = Σ m_j w^j / m0, u = 1/s, τ̂_d moments d_j = -u_{j+2} / m0
    let s: Vec<Float> = m.iter().map(|v| Float::with_val(prec, v / &m0)).collect();
    let mut u = vec![fl(prec, 1.0)];
    for j in 1..=k + 2 {
        let mut acc = Float::new(prec);
        for i in 1..=j {
            acc += Float::with_val(prec, &s[i] * &u[j - i]);
        }
        u.push(-acc);
    }
    Ok((0..k).map(|j| -Float::with_val(prec, &u[j + 2] / &m0)).collect())
}

/// Smallest eigenvalue of the (size × size) Hankel matrix of the moments.
pub fn hankel_min_eigenvalue(moments: &[f64], size: usize) -> f64 {
    let h = nalgebra::DMatrix::from_fn(size, size, |i, j| moments[i + j]);
    h.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

impl NikishinSystem {
    pub fn new(mu1: Measure, tau: Measure) -> Result<Self> {
        Self::with_precision(mu1, tau, crate::hp::DEFAULT_PRECISION)
    }

    pub fn with_precision(mu1: Measure, tau: Measure, prec: u32) -> Result<Self> {
        let d1 = mu1.hull();
        let dt = tau.hull();
        if dt.1 >= d1.0 {
            return Err(MopError::Overlap(format!("Δ_τ = {dt:?} must lie to the left of Δ1 = {d1:?}")));
        }
        for x in [d1.0, d1.1] {
            if tau.integrate(|t| 1.0 / (x - t)) <= 0.0 {
                return Err(MopError::Assumption(format!("τ̂({x}) is not positive")));
            }
        }
        let mu2 = nikishin_partner(&mu1, &tau);
        let sys = MopSystem::with_precision(mu1.clone(), mu2.clone(), prec)?;
        let htau = HpMeasure::new(&tau, sys.precision());
        Ok(NikishinSystem { mu1, tau, mu2, sys, htau })
    }

    pub fn nik_u() -> Self {
        let (mu1, tau, _) = crate::systems::nik_u_measures();
        Self::new(mu1, tau).expect("valid Nikishin system")
    }

    /// sgn a_{n,j} = (-1)^{j-1} for n2 ≤ n1 and (-1)^j for n2 ≥ n1 + 1, plus the marginal a_{(n,0),1} > 0.
    pub fn sign_pattern_check(&self, nmax: usize) -> Result<SignReport> {
        let mut checked = 0;
        let mut violations = vec![];
        for n1 in 1..=nmax {
            for n2 in 1..=nmax {
                let n = MultiIndex::new(n1, n2);
                let r = self.sys.recurrence(n)?;
                for j in 1..=2 {
                    let expected = if n2 <= n1 { pm(j % 2 == 1) } else { pm(j % 2 == 0) };
                    checked += 1;
                    if sign_of(&r.a[j - 1]) != expected {
                        violations.push(Violation { n, j, value: r.a[j - 1].to_f64(), expected_sign: expected });
                    }
                }
            }
            let n = MultiIndex::new(n1, 0);
            let r = self.sys.recurrence(n)?;
            checked += 1;
            if sign_of(&r.a[0]) != 1 {
                violations.push(Violation { n, j: 1, value: r.a[0].to_f64(), expected_sign: 1 });
            }
        }
        Ok(SignReport { checked, violations })
    }

    /// Signs of h_{n,j} = ∫ P_n x^{n_j} dμ_j.
    pub fn h_sign_check(&self, nmax: usize) -> Result<SignReport> {
        let mut checked = 0;
        let mut violations = vec![];
        for n1 in 1..=nmax {
            for n2 in 1..=nmax {
                let n = MultiIndex::new(n1, n2);
                let rec = self.sys.record(n)?;
                let even = n.total() % 2 == 0;
                let mut rules: Vec<(usize, i8)> = vec![];
                if n2 <= n1 + 1 {
                    rules.push((1, 1));
                }
                if n2 > n1 {
                    rules.push((2, 1));
                }
                if n2 >= n1 + 2 {
                    rules.push((1, pm(!even)));
                }
                if n2 <= n1 {
                    rules.push((2, pm(even)));
                }
                for (j, expected) in rules {
                    checked += 1;
                    if sign_of(&rec.h[j - 1]) != expected {
                        violations.push(Violation { n, j, value: rec.h[j - 1].to_f64(), expected_sign: expected });
                    }
                }
            }
        }
        Ok(SignReport { checked, violations })
    }

    /// (n, a_{(n,n+1),1}, a_{(n,n+1),2}) for n = 1..=nmax.
    pub fn diagonal_blowup_scan(&self, nmax: usize) -> Result<Vec<BlowupRow>> {
        (1..=nmax)
            .map(|n| {
                let (a, _) = self.sys.recurrence_f64(MultiIndex::new(n, n + 1))?;
                Ok(BlowupRow { n, a1: a[0], a2: a[1] })
            })
            .collect()
    }

    /// Per-|n| maxima of |a| away from the n2 = n1 + 1 line and of |b|.
    pub fn bound_table(&self, total_max: usize) -> Result<Vec<BoundRow>> {
        let mut rows = vec![];
        for t in 1..=total_max {
            let mut ma = 0.0f64;
            let mut mb = 0.0f64;
            for n1 in 0..=t {
                let n = MultiIndex::new(n1, t - n1);
                let (a, b) = self.sys.recurrence_f64(n)?;
                mb = mb.max(b[0].abs()).max(b[1].abs());
                if n.n2 != n.n1 + 1 {
                    for i in 1..=2 {
                        if n.minus(i).is_some() {
                            ma = ma.max(a[i - 1].abs());
                        }
                    }
                }
            }
            rows.push(BoundRow { total: t, max_a_off_diagonal: ma, max_b: mb });
        }
        Ok(rows)
    }

    /// R_{n,1}(x) = ∫ P_n(t) / (x - t) dμ1(t) at a real x off Δ1.
    fn r1(&self, n: MultiIndex, x: &Float) -> Result<Float> {
        let prec = self.sys.precision();
        let p = self.sys.record(n)?;
        Ok(self.sys.hp_measure(1).integrate(|t| p.p.eval(t) / Float::with_val(prec, x - t)))
    }

    /// Vanishing moments of R_{n,1} against τ, and the equality case n2 = n1 + 1.
    pub fn r1_orthogonality(&self, n: MultiIndex) -> Result<OrthogonalityRow> {
        if n.n2 == 0 {
            return Err(MopError::InvalidInput("the moment check needs n2 ≥ 1".into()));
        }
        let prec = self.sys.precision();
        let kmax = n.n1.min(n.n2 - 1);
        let vals: Vec<(Float, Float)> = self.htau.nodes().iter().map(|(x, w)| Ok((x.clone(), Float::with_val(prec, self.r1(n, x)? * w)))).collect::<Result<_>>()?;
        let moment = |k: usize| -> Float {
            let mut acc = Float::new(prec);
            for (x, rw) in &vals {
                acc += Float::with_val(prec, rug::ops::Pow::pow(x, k as u32)) * rw;
            }
            acc
        };
        let max_moment = (0..=kmax).map(|k| moment(k).to_f64().abs()).fold(0.0, f64::max);
        let equality_residual = if n.n2 == n.n1 + 1 {
            let rec = self.sys.record(n)?;
            let mass = Float::with_val(prec, self.htau.moments(0)[0].clone());
            let lhs = Float::with_val(prec, &mass * &rec.h[0]) - &rec.h[1];
            Some(Float::with_val(prec, lhs - moment(n.n2)).to_f64().abs())
        } else {
            None
        };
        Ok(OrthogonalityRow { n, max_moment, equality_residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_moments_examples() {
        let d = dual_moments(&Measure::atom(0.0, 1.0), 5).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        let d = dual_moments(&Measure::uniform(0.0, 1.0), 8).unwrap();
        assert!((d[0] - 1.0 / 12.0).abs() < 1e-15);
        assert!(hankel_min_eigenvalue(&d, 3) >= -1e-14);
        let d = dual_moments(&Measure::uniform(0.0, 2.0), 3).unwrap();
        // m0(τ_d) = m2/m0² - m1²/m0³ with m = (2, 2, 8/3)
        assert!((d[0] - (8.0 / 3.0 / 4.0 - 4.0 / 8.0)).abs() < 1e-15);
    }

    #[test]
    fn coefficient_signs_small_cases() {
        let s = NikishinSystem::nik_u();
        let (a, _) = s.sys.recurrence_f64(MultiIndex::new(2, 1)).unwrap();
        assert!(a[0] > 0.0 && a[1] < 0.0);
        let (a, _) = s.sys.recurrence_f64(MultiIndex::new(1, 2)).unwrap();
        assert!(a[0] < 0.0 && a[1] > 0.0);
        let (a, _) = s.sys.recurrence_f64(MultiIndex::new(3, 0)).unwrap();
        assert!(a[0] > 0.0);
        assert!(s.sign_pattern_check(4).unwrap().ok());
    }

    #[test]
    fn h_sign_small_cases() {
        let s = NikishinSystem::nik_u();
        let h = |n1, n2, j: usize| s.sys.record(MultiIndex::new(n1, n2)).unwrap().h[j - 1].to_f64();
        assert!(h(2, 2, 1) > 0.0);
        assert!(h(1, 3, 1) < 0.0);
        assert!(h(3, 1, 2) > 0.0);
        assert!(s.h_sign_check(4).unwrap().ok());
    }

    #[test]
    fn blowup_trend_small() {
        let s = NikishinSystem::nik_u();
        let rows = s.diagonal_blowup_scan(4).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].a2 > w[0].a2 && w[1].a1 < w[0].a1, "{w:?}");
        }
    }

    #[test]
    fn r1_moments_vanish() {
        let s = NikishinSystem::nik_u();
        for (n1, n2) in [(1, 1), (2, 1), (1, 2), (2, 3), (3, 2), (2, 4)] {
            let row = s.r1_orthogonality(MultiIndex::new(n1, n2)).unwrap();
            assert!(row.max_moment <= 1e-8, "{row:?}");
            if let Some(r) = row.equality_residual {
                assert!(r <= 1e-8, "{row:?}");
            }
        }
    }

    #[test]
    fn rejects_overlapping_tau() {
        let r = NikishinSystem::new(Measure::uniform(0.0, 1.0), Measure::uniform(0.5, 2.0));
        assert!(matches!(r, Err(MopError::Overlap(_))));
    }
}

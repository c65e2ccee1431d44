//! Angelesco systems on the infinite tree: L_ϰ and its real zero, spectral
//! measures of the root and of subtrees, generalized eigenfunctions, Green's
//! functions and reference measures.

use crate::error::{MopError, Result};
use crate::hp::{cabs, fl, from_c64, real_zeros, to_c64, HpPoly};
use crate::measures::{Measure, Side};
use crate::mop_engine::{MopSystem, MultiIndex};
use crate::tree_jacobi::{assemble_truncated, l_kappa_hp, m_inv_hp, tree_coefficients_hp, HpCoefficients, TreeOperator};
use crate::tree_topology::Tree;
use num_complex::Complex64;
use rug::{Complex, Float};
use serde::Serialize;

/// Points closer than this to an interval endpoint are rejected.
pub const ENDPOINT_GUARD: f64 = 1e-6;

pub struct AngelescoSystem {
    pub sys: MopSystem,
    pub delta: [(f64, f64); 2],
    pub mustar: Measure,
    /// difference of the centres of mass of the normalized measures
    pub xi_mass: f64,
    pub norms: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MeasureKind {
    /// spectral measure of δ^O
    RhoO { kappa: (f64, f64) },
    /// spectral measure of δ^X on the subtree of X, where Π(X_(p)) = n and ι_X = l
    RhoSub { n: MultiIndex, l: usize },
    /// reference measure ω_n
    Reference { n: MultiIndex },
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralMeasureRep {
    pub kind: MeasureKind,
    pub support: [(f64, f64); 2],
    pub point_masses: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenfunctionReport {
    pub psi: Vec<f64>,
    /// max over interior rows of |(J ψ)_Y - x ψ_Y|
    pub residual: f64,
    #[serde(skip)]
    pub op: TreeOperator,
}

#[derive(Clone, Debug, Serialize)]
pub struct L4Row {
    pub e: f64,
    /// -D'(E) L_+(E)
    pub lhs: f64,
    /// ‖ν_{n,E}‖ by quadrature
    pub nu_mass: f64,
    /// -D'(E) S_{n,1,k}(E) / A^{(k)}_{n+e1}(E)
    pub via_s: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeRow {
    pub depth: usize,
    /// largest distance from a truncation eigenvalue to Δ1 ∪ Δ2 ∪ E_ϰ
    pub max_dist: f64,
    /// distance from E_ϰ to the nearest truncation eigenvalue
    pub e_kappa_dist: Option<f64>,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// T_{n,l} and its monic factors with zeros on Δ1 and Δ2.
pub struct SxData {
    t: HpPoly,
    factors: [HpPoly; 2],
}

fn deflate(p: &HpPoly, r: &Float) -> HpPoly {
    let prec = p.prec();
    let n = p.len();
    if n <= 1 {
        return HpPoly::zero(prec);
    }
    let mut q = vec![Float::new(prec); n - 1];
    let mut acc = Float::new(prec);
    for i in (1..n).rev() {
        acc = Float::with_val(prec, &acc * r) + &p.c[i];
        q[i - 1] = acc.clone();
    }
    HpPoly::from_coeffs(prec, q)
}

fn monic_from_roots(prec: u32, roots: &[Float]) -> HpPoly {
    roots.iter().fold(HpPoly::one(prec), |p, r| p.mul_linear(r))
}

impl AngelescoSystem {
    pub fn new(sys: MopSystem) -> Result<Self> {
        let d1 = sys.measure(1).hull();
        let d2 = sys.measure(2).hull();
        if d1.1 >= d2.0 {
            return Err(MopError::Overlap(format!("hulls {d1:?} and {d2:?} must satisfy Δ1 < Δ2")));
        }
        let mustar = sys.measure(1).concat(sys.measure(2))?;
        let norms = [sys.measure(1).mass(), sys.measure(2).mass()];
        let xi_mass = sys.measure(2).moment(1) / norms[1] - sys.measure(1).moment(1) / norms[0];
        if xi_mass <= 0.0 {
            return Err(MopError::Assumption(format!("centre-of-mass gap {xi_mass} must be positive")));
        }
        for t in 1..=6 {
            for n1 in 0..=t {
                let n = MultiIndex::new(n1, t - n1);
                let (a, _) = sys.recurrence_f64(n)?;
                for i in 1..=2 {
                    if n.minus(i).is_some() && a[i - 1] <= 0.0 {
                        return Err(MopError::Assumption(format!("a_{{{n},{i}}} = {} is not positive", a[i - 1])));
                    }
                }
            }
        }
        Ok(AngelescoSystem { sys, delta: [d1, d2], mustar, xi_mass, norms })
    }

    pub fn ang_u() -> Self {
        Self::new(crate::systems::ang_u()).expect("valid Angelesco system")
    }

    fn prec(&self) -> u32 {
        self.sys.precision()
    }

    fn gap(&self) -> (f64, f64) {
        (self.delta[0].1, self.delta[1].0)
    }

    /// k such that x lies strictly inside Δ_k.
    fn interval_of(&self, x: f64) -> Option<usize> {
        (1..=2).find(|&k| self.delta[k - 1].0 < x && x < self.delta[k - 1].1)
    }

    /// k for a density evaluation point, with the endpoint guard.
    fn checked_interval(&self, x: f64) -> Result<usize> {
        for (a, b) in self.delta {
            if (x - a).abs() < ENDPOINT_GUARD || (x - b).abs() < ENDPOINT_GUARD {
                return Err(MopError::Endpoint(x));
            }
        }
        self.interval_of(x).ok_or_else(|| MopError::Domain(format!("{x} is outside Δ1 ∪ Δ2")))
    }

    fn markov_real(&self, k: usize, x: &Float) -> Result<Complex> {
        self.sys.hp_measure(k).markov_real_point(x, Side::Plus)
    }

    fn kappa_coeffs(&self, kappa: (f64, f64)) -> [Float; 2] {
        let p = self.prec();
        [fl(p, kappa.1 / self.norms[0]), fl(p, kappa.0 / self.norms[1])]
    }

    fn l_kappa_real(&self, kappa: (f64, f64), x: &Float) -> Result<Complex> {
        let c = self.kappa_coeffs(kappa);
        let p = self.prec();
        Ok(Complex::with_val(p, self.markov_real(1, x)? * &c[0]) + Complex::with_val(p, self.markov_real(2, x)? * &c[1]))
    }

    /// L_ϰ(z); real z inside Δ1 ∪ Δ2 uses the boundary value from above.
    pub fn l_kappa(&self, kappa: (f64, f64), z: Complex64) -> Result<Complex64> {
        check_kappa(kappa)?;
        Ok(to_c64(&l_kappa_hp(&self.sys, kappa, &from_c64(self.prec(), z), Side::Plus)?))
    }

    fn e_kappa_hp(&self, kappa: (f64, f64)) -> Result<Option<Float>> {
        check_kappa(kappa)?;
        let prec = self.prec();
        let f = |x: &Float| -> Result<Float> { Ok(self.l_kappa_real(kappa, x)?.real().clone()) };
        let a1 = self.delta[0].0;
        let b2 = self.delta[1].1;
        let (g0, g1) = self.gap();
        let mut grids: Vec<Vec<f64>> = Vec::new();
        let steps: Vec<f64> = (0..=78).map(|i| 10f64.powf(-11.5 + 0.25 * i as f64)).collect();
        grids.push(steps.iter().rev().map(|s| a1 - s).collect());
        let w = g1 - g0;
        let mut gap: Vec<f64> = steps.iter().filter(|&&s| s < 0.5 * w).map(|s| g0 + s).collect();
        gap.extend((1..200).map(|i| g0 + w * i as f64 / 200.0));
        gap.extend(steps.iter().rev().filter(|&&s| s < 0.5 * w).map(|s| g1 - s));
        gap.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grids.push(gap);
        grids.push(steps.iter().map(|s| b2 + s).collect());
        for grid in grids {
            let vals: Vec<Float> = grid.iter().map(|&x| f(&fl(prec, x))).collect::<Result<_>>()?;
            for i in 1..grid.len() {
                if vals[i - 1].is_sign_negative() != vals[i].is_sign_negative() {
                    let mut lo = fl(prec, grid[i - 1]);
                    let mut hi = fl(prec, grid[i]);
                    let flo = vals[i - 1].is_sign_negative();
                    for _ in 0..(prec + 8) {
                        let mid = Float::with_val(prec, &lo + &hi) / 2u32;
                        if mid == lo || mid == hi {
                            break;
                        }
                        if f(&mid)?.is_sign_negative() == flo {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    return Ok(Some(Float::with_val(prec, &lo + &hi) / 2u32));
                }
            }
        }
        Ok(None)
    }

    /// The real zero of L_ϰ off Δ1 ∪ Δ2, if any.
    pub fn find_e_kappa(&self, kappa: (f64, f64)) -> Result<Option<f64>> {
        Ok(self.e_kappa_hp(kappa)?.map(|e| e.to_f64()))
    }

    /// Mass of ρ_O at E_ϰ: (L_{(1,1)} / L_ϰ')(E) with an extended-precision
    /// central difference on a step far below the distance to the supports.
    fn e_kappa_mass(&self, kappa: (f64, f64), e: &Float) -> Result<f64> {
        let prec = self.prec();
        let ef = e.to_f64();
        let dist = self.delta.iter().map(|&(a, b)| (ef - a).abs().min((ef - b).abs())).fold(f64::INFINITY, f64::min);
        let h = fl(prec, 1e-20 * dist.min(1.0));
        let lp = self.l_kappa_real(kappa, &Float::with_val(prec, e + &h))?;
        let lm = self.l_kappa_real(kappa, &Float::with_val(prec, e - &h))?;
        let d = Float::with_val(prec, lp.real() - lm.real()) / (h * 2u32);
        let ec = Complex::with_val(prec, (e, 0));
        let l11 = self.sys.l_hp(MultiIndex::new(1, 1), &ec, Side::Plus)?;
        Ok((Float::with_val(prec, l11.real() / d)).to_f64())
    }

    /// S_O(x) for x inside Δ1 ∪ Δ2.
    pub fn s_o(&self, x: f64) -> Result<f64> {
        let k = self.checked_interval(x)?;
        Ok(self.s_o_hp(k, &fl(self.prec(), x))?.to_f64())
    }

    fn s_o_hp(&self, k: usize, x: &Float) -> Result<Float> {
        let m = self.markov_real(3 - k, x)?.real().clone();
        let sgn = if k == 1 { -1.0 } else { 1.0 };
        Ok(m * sgn / (self.xi_mass * self.norms[0] * self.norms[1]))
    }

    pub fn rho_o(&self, kappa: (f64, f64)) -> Result<SpectralMeasureRep> {
        let mut point_masses = vec![];
        if let Some(e) = self.e_kappa_hp(kappa)? {
            point_masses.push((e.to_f64(), self.e_kappa_mass(kappa, &e)?));
        }
        Ok(SpectralMeasureRep { kind: MeasureKind::RhoO { kappa }, support: self.delta, point_masses })
    }

    pub fn rho_sub(&self, n: MultiIndex, l: usize) -> Result<SpectralMeasureRep> {
        if !n.is_positive() || !(1..=2).contains(&l) {
            return Err(MopError::InvalidInput(format!("subtree measure needs n in N^2 and l in {{1,2}}, got {n}, {l}")));
        }
        Ok(SpectralMeasureRep { kind: MeasureKind::RhoSub { n, l }, support: self.delta, point_masses: vec![] })
    }

    pub fn reference(&self, n: MultiIndex) -> SpectralMeasureRep {
        SpectralMeasureRep { kind: MeasureKind::Reference { n }, support: self.delta, point_masses: vec![] }
    }

    fn density_unchecked(&self, kind: &MeasureKind, sx: Option<&SxData>, k: usize, x: &Float) -> Result<Float> {
        let prec = self.prec();
        let mu = self.sys.hp_measure(k).density(x);
        match kind {
            MeasureKind::RhoO { kappa } => {
                let l = cabs(&self.l_kappa_real(*kappa, x)?);
                Ok(self.s_o_hp(k, x)? * mu / Float::with_val(prec, l.square_ref()))
            }
            MeasureKind::Reference { n } => self.reference_hp(*n, k, x),
            MeasureKind::RhoSub { n, l } => {
                let s = match sx {
                    Some(d) => self.sx_eval(d, k, x),
                    None => self.sx_eval(&self.sx_data(*n, *l)?, k, x),
                };
                Ok(s * self.reference_hp(*n, k, x)?)
            }
        }
    }

    /// Density of the ac part at x inside Δ1 ∪ Δ2.
    pub fn density(&self, rep: &SpectralMeasureRep, x: f64) -> Result<f64> {
        let k = self.checked_interval(x)?;
        Ok(self.density_unchecked(&rep.kind, None, k, &fl(self.prec(), x))?.to_f64())
    }

    /// ∫ x^p dρ over the ac part plus point masses, by tanh-sinh quadrature.
    pub fn moment(&self, rep: &SpectralMeasureRep, p: i32) -> Result<f64> {
        let sx = match rep.kind {
            MeasureKind::RhoSub { n, l } => Some(self.sx_data(n, l)?),
            _ => None,
        };
        let prec = self.prec();
        let mut total: f64 = rep.point_masses.iter().map(|(e, m)| m * e.powi(p)).sum();
        for k in 1..=2 {
            let (a, b) = self.delta[k - 1];
            let f = |x: f64| -> f64 {
                if x <= a || x >= b {
                    return 0.0;
                }
                match self.density_unchecked(&rep.kind, sx.as_ref(), k, &fl(prec, x)) {
                    Ok(v) => v.to_f64() * x.powi(p),
                    Err(_) => 0.0,
                }
            };
            total += quadrature::double_exponential::integrate(f, a, b, 1e-12).integral;
        }
        Ok(total)
    }

    pub fn total_mass(&self, rep: &SpectralMeasureRep) -> Result<f64> {
        self.moment(rep, 0)
    }

    /// Λ^{(k)} values m_Y^{-1} A^{(k)}_{Π(Y)}(x) over the tree.
    fn lambda_real(&self, tree: &Tree, m_inv: &[Float], k: usize, x: &Float) -> Result<Vec<Float>> {
        let prec = self.prec();
        (0..tree.len())
            .map(|y| Ok(Float::with_val(prec, self.sys.record(tree.proj(y))?.a(k).eval(x) * &m_inv[y])))
            .collect()
    }

    /// Ψ(O; x) on the Cayley tree truncated at `depth`, with its eigen-residual.
    pub fn psi_o(&self, kappa: (f64, f64), x: f64, depth: usize) -> Result<EigenfunctionReport> {
        let prec = self.prec();
        let op = assemble_truncated(&self.sys, kappa, depth)?;
        let coef = tree_coefficients_hp(&self.sys, &op.tree, kappa)?;
        let m_inv = m_inv_hp(&op.tree, &coef);
        let xh = fl(prec, x);
        let psi: Vec<Float> = match self.interval_of(x) {
            Some(_) => {
                let k = self.checked_interval(x)?;
                let c = self.kappa_coeffs(kappa);
                let mk = self.markov_real(3 - k, &xh)?.real().clone();
                let s = self.s_o_hp(k, &xh)?;
                let l0 = self.lambda_real(&op.tree, &m_inv, 0, &xh)?;
                let l1 = self.lambda_real(&op.tree, &m_inv, 1, &xh)?;
                let l2 = self.lambda_real(&op.tree, &m_inv, 2, &xh)?;
                let sign = if k == 1 { -1 } else { 1 };
                (0..op.len())
                    .map(|y| {
                        let mix = Float::with_val(prec, &c[0] * &l2[y]) - Float::with_val(prec, &c[1] * &l1[y]);
                        let mut v = Float::with_val(prec, &c[k - 1] * &l0[y]);
                        v += Float::with_val(prec, &mk * &mix) * sign;
                        v / &s
                    })
                    .collect()
            }
            None => {
                let e = self
                    .e_kappa_hp(kappa)?
                    .filter(|e| (e.to_f64() - x).abs() <= 1e-9)
                    .ok_or_else(|| MopError::Domain(format!("{x} is outside Δ1 ∪ Δ2 ∪ E_ϰ")))?;
                let ec = Complex::with_val(prec, (&e, 0));
                let l11 = self.sys.l_hp(MultiIndex::new(1, 1), &ec, Side::Plus)?.real().clone();
                let mut out = Vec::with_capacity(op.len());
                for y in 0..op.len() {
                    let ly = self.sys.l_hp(op.tree.proj(y), &ec, Side::Plus)?.real().clone();
                    out.push(ly * &m_inv[y] / &l11);
                }
                out
            }
        };
        let residual = eigen_residual_real(&op.tree, &coef, &psi, &xh, 0);
        Ok(EigenfunctionReport { psi: psi.iter().map(|v| v.to_f64()).collect(), residual, op })
    }

    /// G(Y, X; z) from second-kind functions, and the same entry of the
    /// resolvent of the subtree of X truncated at `depth`.
    pub fn green(&self, kappa: (f64, f64), y: usize, x: usize, z: Complex64, depth: usize) -> Result<(Complex64, Complex64)> {
        let prec = self.prec();
        let op = assemble_truncated(&self.sys, kappa, depth)?;
        if y >= op.len() || x >= op.len() || !op.tree.is_ancestor_or_self(x, y) {
            return Err(MopError::InvalidInput(format!("vertex {y} is not in the subtree of {x}")));
        }
        let coef = tree_coefficients_hp(&self.sys, &op.tree, kappa)?;
        let m_inv = m_inv_hp(&op.tree, &coef);
        let zh = from_c64(prec, z);
        let ly = self.sys.l_hp(op.tree.proj(y), &zh, Side::Plus)?;
        let lxp = match op.tree.parent(x) {
            None => l_kappa_hp(&self.sys, kappa, &zh, Side::Plus)?,
            Some(p) => self.sys.l_hp(op.tree.proj(p), &zh, Side::Plus)?,
        };
        let ratio = Float::with_val(prec, &m_inv[y] / &m_inv[x]);
        let g = -(Complex::with_val(prec, ly / lxp) * ratio);
        let u = op.resolvent_column(x, z);
        Ok((to_c64(&g), u[y]))
    }

    /// T_{n,l} with its factorization by interval.
    pub fn sx_data(&self, n: MultiIndex, l: usize) -> Result<SxData> {
        let prec = self.prec();
        let r0 = self.sys.record(n)?;
        let r1 = self.sys.record(n.plus(l))?;
        let t = r1.a(2).mul(r0.a(1)).sub(&r1.a(1).mul(r0.a(2))).trimmed();
        let deg = n.total() - 1;
        let zeros = if deg == 0 { vec![] } else { real_zeros(&t)? };
        if t.degree() != Some(deg) || zeros.len() != deg {
            return Err(MopError::Assumption(format!("T_{{{n},{l}}} does not have {deg} real zeros")));
        }
        let mid = 0.5 * (self.gap().0 + self.gap().1);
        let (z1, z2): (Vec<Float>, Vec<Float>) = zeros.into_iter().partition(|z| z.to_f64() < mid);
        if z1.len() + l != n.n1 + 1 || z2.len() + 2 != n.n2 + l {
            return Err(MopError::Assumption(format!("T_{{{n},{l}}} zeros split as {}+{}", z1.len(), z2.len())));
        }
        Ok(SxData { t, factors: [monic_from_roots(prec, &z1), monic_from_roots(prec, &z2)] })
    }

    fn sx_eval(&self, d: &SxData, k: usize, x: &Float) -> Float {
        let prec = self.prec();
        let j = 3 - k;
        let tj = &d.factors[j - 1];
        let integral = self.sys.hp_measure(j).integrate(|s| {
            let num = Float::with_val(prec, tj.eval(s) * d.t.eval(s));
            num / Float::with_val(prec, x - s)
        });
        let v = integral / tj.eval(x);
        if k == 1 {
            -v
        } else {
            v
        }
    }

    /// S_X(x) for Π(X_(p)) = n, ι_X = l, by the T-polynomial integral.
    pub fn s_x(&self, n: MultiIndex, l: usize, x: f64) -> Result<f64> {
        let k = self.checked_interval(x)?;
        Ok(self.sx_eval(&self.sx_data(n, l)?, k, &fl(self.prec(), x)).to_f64())
    }

    /// Ψ̃_Y(X; x) · m_Y / m_X for Π(X_(p)) = n and Π(Y) = m.
    fn psi_tilde_core(&self, n: MultiIndex, m: MultiIndex, k: usize, x: &Float, mk: &Float) -> Result<Float> {
        let prec = self.prec();
        let rn = self.sys.record(n)?;
        let ry = self.sys.record(m)?;
        let e = |r: &crate::mop_engine::MopRecord, j: usize| r.a(j).eval(x);
        let k2 = 3 - k;
        let mut v = Float::with_val(prec, e(&rn, k) * e(&ry, 0)) - Float::with_val(prec, e(&ry, k) * e(&rn, 0));
        let w = Float::with_val(prec, e(&rn, k2) * e(&ry, k)) - Float::with_val(prec, e(&ry, k2) * e(&rn, k));
        v += w * mk;
        Ok(v)
    }

    /// S_X(x) as the value of Ψ̃ at X itself.
    pub fn s_x_direct(&self, n: MultiIndex, l: usize, x: f64) -> Result<f64> {
        let k = self.checked_interval(x)?;
        let xh = fl(self.prec(), x);
        let mk = self.markov_real(3 - k, &xh)?.real().clone();
        Ok(self.psi_tilde_core(n, n.plus(l), k, &xh, &mk)?.to_f64())
    }

    /// Ψ(X; x) on the subtree of vertex `xv` of the Cayley tree truncated at
    /// `depth`, normalized by the T-polynomial S_X.
    pub fn psi_x(&self, kappa: (f64, f64), xv: usize, x: f64, depth: usize) -> Result<EigenfunctionReport> {
        let prec = self.prec();
        let k = self.checked_interval(x)?;
        let op = assemble_truncated(&self.sys, kappa, depth)?;
        let xp = op
            .tree
            .parent(xv)
            .ok_or_else(|| MopError::InvalidInput("Ψ(X; x) needs a non-root vertex".into()))?;
        let coef = tree_coefficients_hp(&self.sys, &op.tree, kappa)?;
        let m_inv = m_inv_hp(&op.tree, &coef);
        let xh = fl(prec, x);
        let n = op.tree.proj(xp);
        let s = self.sx_eval(&self.sx_data(n, op.tree.index(xv))?, k, &xh);
        let mk = self.markov_real(3 - k, &xh)?.real().clone();
        let mut psi = vec![Float::new(prec); op.len()];
        for y in op.tree.subtree(xv) {
            let ratio = Float::with_val(prec, &m_inv[y] / &m_inv[xv]);
            psi[y] = self.psi_tilde_core(n, op.tree.proj(y), k, &xh, &mk)? * ratio / &s;
        }
        let residual = eigen_residual_real(&op.tree, &coef, &psi, &xh, xv);
        Ok(EigenfunctionReport { psi: psi.iter().map(|v| v.to_f64()).collect(), residual, op })
    }

    /// Errors |Im G(Y,X; x+iε) / Im G(X,X; x+iε) - Ψ_Y(X; x)| for each ε.
    pub fn psi_limit_trend(&self, kappa: (f64, f64), xv: usize, yv: usize, x: f64, eps: &[f64], depth: usize) -> Result<Vec<f64>> {
        let psi = self.psi_x(kappa, xv, x, depth)?;
        let prec = self.prec();
        let tree = &psi.op.tree;
        let coef = tree_coefficients_hp(&self.sys, tree, kappa)?;
        let m_inv = m_inv_hp(tree, &coef);
        let xp = tree.parent(xv).unwrap();
        eps.iter()
            .map(|&e| {
                let z = from_c64(prec, Complex64::new(x, e));
                let lxp = self.sys.l_hp(tree.proj(xp), &z, Side::Plus)?;
                let g = |v: usize| -> Result<Float> {
                    let lv = self.sys.l_hp(tree.proj(v), &z, Side::Plus)?;
                    let r = Float::with_val(prec, &m_inv[v] / &m_inv[xv]);
                    Ok(-(Complex::with_val(prec, lv / &lxp) * r).imag().clone())
                };
                let ratio = g(yv)? / g(xv)?;
                Ok((ratio.to_f64() - psi.psi[yv]).abs())
            })
            .collect()
    }

    fn reference_hp(&self, n: MultiIndex, k: usize, x: &Float) -> Result<Float> {
        let prec = self.prec();
        let l = self.sys.l_hp(n, &Complex::with_val(prec, (x, 0)), Side::Plus)?;
        let mu = self.sys.hp_measure(k).density(x);
        Ok(mu / Float::with_val(prec, cabs(&l).square_ref()))
    }

    /// ω_n'(x) = μ*'(x) / |L_n(x)|².
    pub fn reference_density(&self, n: MultiIndex, x: f64) -> Result<f64> {
        let k = self.checked_interval(x)?;
        Ok(self.reference_hp(n, k, &fl(self.prec(), x))?.to_f64())
    }

    fn check_xi(&self, xi: f64) -> Result<()> {
        let (g0, g1) = self.gap();
        if !(g0 < xi && xi < g1) {
            return Err(MopError::Domain(format!("ξ = {xi} must lie in the gap ({g0}, {g1})")));
        }
        Ok(())
    }

    fn d_poly(&self, n: MultiIndex, xi: &Float) -> Result<HpPoly> {
        let r = self.sys.record(n)?;
        let d = r.a(1).mul(r.a(2)).mul_linear(xi);
        Ok(if n.n2 % 2 == 1 { d.scale(&fl(self.prec(), -1.0)) } else { d })
    }

    /// D_{n,ξ}(x) = (-1)^{n2} (x - ξ) A^{(1)}_n(x) A^{(2)}_n(x).
    pub fn d_n_xi(&self, n: MultiIndex, xi: f64, x: f64) -> Result<f64> {
        self.check_xi(xi)?;
        let prec = self.prec();
        Ok(self.d_poly(n, &fl(prec, xi))?.eval(&fl(prec, x)).to_f64())
    }

    /// ω_n'(x) recovered from Im (D_{n,ξ} L_n)^{-1} on the boundary.
    pub fn reference_density_via_xi(&self, n: MultiIndex, xi: f64, x: f64) -> Result<f64> {
        self.check_xi(xi)?;
        let k = self.checked_interval(x)?;
        let prec = self.prec();
        let xh = fl(prec, x);
        let r = self.sys.record(n)?;
        let d = self.d_poly(n, &fl(prec, xi))?.eval(&xh);
        let l = self.sys.l_hp(n, &Complex::with_val(prec, (&xh, 0)), Side::Plus)?;
        let inv = Complex::with_val(prec, l * &d).recip();
        let other = r.a(3 - k).eval(&xh);
        let s = Float::with_val(prec, Float::with_val(prec, &xh - xi).abs() * other.abs()).recip();
        Ok((inv.imag().clone() / (s * crate::hp::pi(prec))).to_f64())
    }

    /// ‖ν_{n,E}‖ by quadrature of the polynomial integrands.
    pub fn nu_ne_mass(&self, n: MultiIndex, xi: f64, e: &Float) -> Result<f64> {
        self.check_xi(xi)?;
        let prec = self.prec();
        let r = self.sys.record(n)?;
        let d = self.d_poly(n, &fl(prec, xi))?;
        let mut total = Float::new(prec);
        for k in 1..=2 {
            let num = d.mul(r.a(k));
            let lo = self.delta[k - 1].0;
            let hi = self.delta[k - 1].1;
            let inside = lo <= e.to_f64() && e.to_f64() <= hi;
            total += if inside {
                let q = deflate(&deflate(&num, e), e);
                self.sys.hp_measure(k).integrate(|s| q.eval(s))
            } else {
                self.sys.hp_measure(k).integrate(|s| {
                    let t = Float::with_val(prec, s - e);
                    num.eval(s) / Float::with_val(prec, t.square_ref())
                })
            };
        }
        Ok(total.to_f64())
    }

    /// Both sides of -D'(E) L_+(E) = ‖ν_{n,E}‖ at each zero E of A^{(1)}_n A^{(2)}_n.
    pub fn lemma_l4(&self, n: MultiIndex, xi: f64) -> Result<Vec<L4Row>> {
        self.check_xi(xi)?;
        let prec = self.prec();
        let d = self.d_poly(n, &fl(prec, xi))?;
        let dd = d.derivative();
        let r = self.sys.record(n)?;
        let r1 = self.sys.record(n.plus(1))?;
        let mut rows = Vec::new();
        for k in 1..=2 {
            let a = r.a(k);
            if a.degree().unwrap_or(0) == 0 {
                continue;
            }
            let sx = self.sx_data(n, 1)?;
            for e in real_zeros(a)? {
                let ec = Complex::with_val(prec, (&e, 0));
                let l = self.sys.l_hp(n, &ec, Side::Plus)?;
                let dpe = dd.eval(&e);
                let lhs = (-Float::with_val(prec, &dpe * l.real())).to_f64();
                let nu = self.nu_ne_mass(n, xi, &e)?;
                let s = self.sx_eval(&sx, k, &e);
                let via_s = (-(dpe * s) / r1.a(k).eval(&e)).to_f64();
                let residual = (lhs - nu).abs().max((via_s - nu).abs());
                rows.push(L4Row { e: e.to_f64(), lhs, nu_mass: nu, via_s, residual });
            }
        }
        Ok(rows)
    }

    /// min |L_n(x)| over a real grid covering the intervals, the gap and the outer rays.
    pub fn l_n_min_modulus(&self, n: MultiIndex, points: usize) -> Result<f64> {
        let prec = self.prec();
        let (a, b) = (self.delta[0].0 - 1.0, self.delta[1].1 + 1.0);
        let mut m = f64::INFINITY;
        for i in 0..=points {
            let x = a + (b - a) * i as f64 / points as f64;
            let near_end = self.delta.iter().any(|&(p, q)| (x - p).abs() < 1e-9 || (x - q).abs() < 1e-9);
            if near_end {
                continue;
            }
            let l = self.sys.l_hp(n, &Complex::with_val(prec, (x, 0)), Side::Plus)?;
            m = m.min(cabs(&l).to_f64());
        }
        Ok(m)
    }

    /// Distances from truncation spectra to Δ1 ∪ Δ2 ∪ E_ϰ.
    pub fn spectrum_envelope_check(&self, kappa: (f64, f64), depths: &[usize]) -> Result<Vec<EnvelopeRow>> {
        let e = self.find_e_kappa(kappa)?;
        let dist = |x: f64| -> f64 {
            let mut d = f64::INFINITY;
            for (a, b) in self.delta {
                d = d.min(if x < a { a - x } else if x > b { x - b } else { 0.0 });
            }
            if let Some(e) = e {
                d = d.min((x - e).abs());
            }
            d
        };
        depths
            .iter()
            .map(|&depth| {
                let op = assemble_truncated(&self.sys, kappa, depth)?;
                let ev: Vec<f64> = op.eigenvalues()?.iter().map(|c| c.re).collect();
                let max_dist = ev.iter().map(|&x| dist(x)).fold(0.0, f64::max);
                let e_kappa_dist = e.map(|e| ev.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min));
                Ok(EnvelopeRow {
                    depth,
                    max_dist,
                    e_kappa_dist,
                    min_eig: ev.iter().cloned().fold(f64::INFINITY, f64::min),
                    max_eig: ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                })
            })
            .collect()
    }
}

fn check_kappa(kappa: (f64, f64)) -> Result<()> {
    if (kappa.0 + kappa.1 - 1.0).abs() > 1e-12 {
        return Err(MopError::InvalidInput(format!("kappa {kappa:?} must sum to 1")));
    }
    Ok(())
}

/// max over interior vertices of the subtree of `root` of |(J_[root] f)_Y - x f_Y|.
fn eigen_residual_real(tree: &Tree, coef: &HpCoefficients, f: &[Float], x: &Float, root: usize) -> f64 {
    let prec = x.prec();
    let mut worst = 0.0f64;
    for y in tree.subtree(root) {
        if !tree.is_interior(y) {
            continue;
        }
        let mut r = Float::with_val(prec, &f[y] * &coef.v[y]) - Float::with_val(prec, &f[y] * x);
        if y != root {
            r += Float::with_val(prec, &f[tree.parent(y).unwrap()] * coef.up(y));
        }
        for &c in tree.children(y) {
            r += Float::with_val(prec, &f[c] * coef.down(c));
        }
        worst = worst.max(r.to_f64().abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> AngelescoSystem {
        AngelescoSystem::ang_u()
    }

    #[test]
    fn e_kappa_examples() {
        let a = sys();
        assert_eq!(a.find_e_kappa((1.0, 0.0)).unwrap(), None);
        assert_eq!(a.find_e_kappa((0.0, 1.0)).unwrap(), None);
        let e = a.find_e_kappa((0.5, 0.5)).unwrap().unwrap();
        assert!(e.abs() < 1e-14, "{e}");
        let e = a.find_e_kappa((2.0, -1.0)).unwrap().unwrap();
        assert!(e < -2.0);
        let l = a.l_kappa((2.0, -1.0), Complex64::new(e, 0.0)).unwrap();
        assert!(l.norm() < 1e-14);
        // midpoint rule with 10^6 nodes on each interval
        let m = 1_000_000;
        let mid = |a0: f64, b0: f64| -> f64 {
            let h = (b0 - a0) / m as f64;
            (0..m).map(|i| h / (e - (a0 + (i as f64 + 0.5) * h))).sum()
        };
        let v = -mid(-2.0, -1.0) + 2.0 * mid(1.0, 2.0);
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn s_o_example() {
        let a = sys();
        let expect = -Measure::uniform(1.0, 2.0).markov(Complex64::new(-1.5, 0.0)).unwrap().re / a.xi_mass;
        assert!((a.s_o(-1.5).unwrap() - expect).abs() < 1e-14);
        let rho = a.rho_o((1.0, 0.0)).unwrap();
        assert!(a.density(&rho, -1.5).unwrap() > 0.0);
        assert!(matches!(a.density(&rho, 0.0), Err(MopError::Domain(_))));
        assert!(matches!(a.density(&rho, -1.0 - 1e-8), Err(MopError::Endpoint(_))));
    }

    #[test]
    fn rho_o_mass_and_first_moment() {
        let a = sys();
        for kappa in [(1.0, 0.0), (0.5, 0.5), (0.3, 0.7)] {
            let rho = a.rho_o(kappa).unwrap();
            let mass = a.total_mass(&rho).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "{kappa:?} {mass}");
            let op = assemble_truncated(&a.sys, kappa, 0).unwrap();
            let m1 = a.moment(&rho, 1).unwrap();
            assert!((m1 - op.v[0]).abs() < 1e-8, "{m1} {}", op.v[0]);
        }
        assert_eq!(a.rho_o((0.5, 0.5)).unwrap().point_masses.len(), 1);
    }

    #[test]
    fn psi_o_eigen_identity() {
        let a = sys();
        for (kappa, x) in [((1.0, 0.0), -1.5), ((0.3, 0.7), 1.2), ((0.5, 0.5), 1.7)] {
            let r = a.psi_o(kappa, x, 6).unwrap();
            assert!((r.psi[0] - 1.0).abs() < 1e-12, "{}", r.psi[0]);
            assert!(r.residual <= 1e-8, "{}", r.residual);
        }
        let r = a.psi_o((0.5, 0.5), 0.0, 6).unwrap();
        assert!(r.residual <= 1e-8);
    }

    #[test]
    fn green_root_formula() {
        let a = sys();
        let z = Complex64::new(5.0, 0.0);
        let (g, r) = a.green((1.0, 0.0), 0, 0, z, 12).unwrap();
        let l11 = a.sys.second_kind(MultiIndex::new(1, 1), z).unwrap().l;
        let le2 = a.sys.second_kind(MultiIndex::new(0, 1), z).unwrap().l;
        assert!((g + l11 / le2).norm() < 1e-14 * g.norm());
        assert!((g - r).norm() < 1e-6 * g.norm());
        let (g, _) = a.green((0.5, 0.5), 1, 1, Complex64::new(1.5, 0.5), 4).unwrap();
        assert!(g.im > 0.0);
    }

    #[test]
    fn green_matches_resolvent_off_root() {
        let a = sys();
        let z = Complex64::new(5.0, 0.0);
        let t = Tree::cayley(12);
        for x in 0..7 {
            for y in t.subtree(x).into_iter().filter(|&y| t.depth(y) <= 2) {
                let (g, r) = a.green((0.3, 0.7), y, x, z, 12).unwrap();
                assert!((g - r).norm() <= 1e-6 * g.norm(), "{x} {y} {g} {r}");
            }
        }
    }

    #[test]
    fn s_x_forms_agree_and_are_positive() {
        let a = sys();
        for n in [MultiIndex::new(1, 1), MultiIndex::new(2, 1), MultiIndex::new(1, 2), MultiIndex::new(2, 2)] {
            for l in 1..=2 {
                for x in [-1.7, -1.2, 1.3, 1.9] {
                    let s = a.s_x(n, l, x).unwrap();
                    let d = a.s_x_direct(n, l, x).unwrap();
                    assert!(s > 0.0);
                    assert!((s - d).abs() <= 1e-12 * s.abs(), "{n} {l} {x} {s} {d}");
                }
            }
        }
    }

    #[test]
    fn psi_x_normalized_eigenfunction() {
        let a = sys();
        for xv in [1, 2, 4] {
            let r = a.psi_x((1.0, 0.0), xv, -1.4, 6).unwrap();
            assert!((r.psi[xv] - 1.0).abs() < 1e-12);
            assert!(r.residual <= 1e-8, "{}", r.residual);
        }
    }

    #[test]
    fn rho_sub_has_unit_mass() {
        let a = sys();
        for (n, l) in [(MultiIndex::new(1, 1), 1), (MultiIndex::new(1, 1), 2), (MultiIndex::new(2, 1), 2)] {
            let rho = a.rho_sub(n, l).unwrap();
            let m = a.total_mass(&rho).unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{n} {l} {m}");
        }
    }

    #[test]
    fn reference_measure_xi_independence() {
        let a = sys();
        let n = MultiIndex::new(2, 2);
        for x in [-1.9, -1.5, -1.1, 1.1, 1.5, 1.9] {
            let w0 = a.reference_density(n, x).unwrap();
            let w1 = a.reference_density_via_xi(n, -0.5, x).unwrap();
            let w2 = a.reference_density_via_xi(n, 0.7, x).unwrap();
            assert!(w0 >= 0.0);
            assert!((w1 - w2).abs() <= 1e-9 * w0.max(1.0));
            assert!((w1 - w0).abs() <= 1e-9 * w0.max(1.0), "{x} {w0} {w1}");
        }
        assert!(matches!(a.reference_density_via_xi(n, 1.5, 1.2), Err(MopError::Domain(_))));
    }

    #[test]
    fn lemma_l4_identity() {
        let a = sys();
        let rows = a.lemma_l4(MultiIndex::new(2, 2), 0.1).unwrap();
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert!(r.nu_mass > 0.0);
            assert!(r.residual <= 1e-8, "{r:?}");
        }
    }

    #[test]
    fn psi_limit_trend_decreases() {
        let a = sys();
        let e = a.psi_limit_trend((1.0, 0.0), 1, 3, -1.4, &[1e-3, 1e-4], 4).unwrap();
        assert!(e[1] < e[0], "{e:?}");
    }

    #[test]
    fn l_n_bounded_away_from_zero() {
        let a = sys();
        assert!(a.l_n_min_modulus(MultiIndex::new(2, 1), 400).unwrap() > 0.0);
    }

    #[test]
    fn envelope_shrinks() {
        let a = sys();
        let rows = a.spectrum_envelope_check((1.0, 0.0), &[4, 6, 8]).unwrap();
        assert!(rows[1].max_dist <= rows[0].max_dist && rows[2].max_dist <= rows[1].max_dist, "{rows:?}");
        assert!(rows.iter().all(|r| r.min_eig >= -2.0 - 1.0 && r.max_eig <= 2.0 + 1.0));
    }
}

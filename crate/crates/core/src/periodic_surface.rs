//! The three-sheeted genus-zero surface of a periodic tree operator, given by
//! the rational map z(χ) = χ + A1/(χ - B1) + A2/(χ - B2), and the Green's
//! functions, density of states and ray limits attached to it.

use crate::error::{MopError, Result};
use crate::hp::{poly_roots, HpPoly};
use crate::mop_engine::{MopSystem, MultiIndex};
use crate::tree_jacobi::TreeOperator;
use crate::tree_topology::{binomial, Tree};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Points closer than this to a branch value are rejected.
pub const BRANCH_GUARD: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceParams {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// real critical points of z(χ), increasing
    pub critical_points: [f64; 4],
    /// Δ_{c,l}: the cut whose critical points surround B_l
    pub cuts: [(f64, f64); 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct RayRow {
    pub total: usize,
    pub n: MultiIndex,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct RayLimitReport {
    pub c: f64,
    pub step: usize,
    pub rows: Vec<RayRow>,
    /// (Â1, Â2, B̂1, B̂2) from the last row
    pub estimate: [f64; 4],
    /// max over coefficients of |x(n) - x(n + step)| for successive rows
    pub differences: Vec<f64>,
    /// max(|a1 - a2|, |b1 + b2|) per row
    pub antisymmetry: Vec<f64>,
}

/// Roots of the monic cubic χ³ + c2 χ² + c1 χ + c0 by Durand-Kerner with a Newton polish.
fn cubic_roots(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
    let p = |x: Complex64| ((x + c2) * x + c1) * x + c0;
    let dp = |x: Complex64| (3.0 * x + 2.0 * c2) * x + c1;
    let r = 1.0 + c2.norm().max(c1.norm()).max(c0.norm());
    let seed = Complex64::new(0.4, 0.9);
    let mut x = [seed * r, seed * seed * r, seed * seed * seed * r];
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..3 {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..3 {
                if i != j {
                    den *= x[i] - x[j];
                }
            }
            let step = p(x[i]) / den;
            x[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta <= 1e-15 * r {
            break;
        }
    }
    for xi in x.iter_mut() {
        for _ in 0..3 {
            let d = dp(*xi);
            if d.norm() > 0.0 {
                *xi -= p(*xi) / d;
            }
        }
    }
    x
}

impl SurfaceParams {
    pub fn from_params(a1: f64, a2: f64, b1: f64, b2: f64) -> Result<Self> {
        if !(a1 > 0.0 && a2 > 0.0) {
            return Err(MopError::InvalidSurface(format!("A1 = {a1}, A2 = {a2} must be positive")));
        }
        if b1 == b2 || !b1.is_finite() || !b2.is_finite() {
            return Err(MopError::InvalidSurface(format!("B1 = {b1} and B2 = {b2} must differ")));
        }
        // z'(χ) = 0 ⇔ (χ-B1)²(χ-B2)² - A1(χ-B2)² - A2(χ-B1)² = 0
        let prec = 256;
        let q1 = HpPoly::from_f64(prec, &[b1 * b1, -2.0 * b1, 1.0]);
        let q2 = HpPoly::from_f64(prec, &[b2 * b2, -2.0 * b2, 1.0]);
        let quartic = q1
            .mul(&q2)
            .sub(&q2.scale(&crate::hp::fl(prec, a1)))
            .sub(&q1.scale(&crate::hp::fl(prec, a2)));
        let roots = poly_roots(&quartic)?;
        let scale = 1.0 + b1.abs().max(b2.abs());
        if roots.iter().any(|r| r.imag().to_f64().abs() > 1e-10 * scale) {
            return Err(MopError::InvalidSurface("z(χ) has non-real critical points".into()));
        }
        let mut crit: Vec<f64> = roots.iter().map(|r| r.real().to_f64()).collect();
        crit.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let critical_points = [crit[0], crit[1], crit[2], crit[3]];
        let (lo, hi) = (b1.min(b2), b1.max(b2));
        if !(crit[0] < lo && lo < crit[1] && crit[2] < hi && hi < crit[3]) {
            return Err(MopError::InvalidSurface(format!("critical points {crit:?} do not surround B1, B2")));
        }
        let mut s = SurfaceParams { a: [a1, a2], b: [b1, b2], critical_points, cuts: [(0.0, 0.0); 2] };
        let pair = |u: f64, v: f64| {
            let (p, q) = (s.zmap_real(u), s.zmap_real(v));
            (p.min(q), p.max(q))
        };
        let left = pair(crit[0], crit[1]);
        let right = pair(crit[2], crit[3]);
        if left.1 >= right.0 {
            return Err(MopError::InvalidSurface(format!("cuts {left:?} and {right:?} overlap")));
        }
        s.cuts = if b1 < b2 { [left, right] } else { [right, left] };
        Ok(s)
    }

    fn zmap_real(&self, x: f64) -> f64 {
        x + self.a[0] / (x - self.b[0]) + self.a[1] / (x - self.b[1])
    }

    pub fn zmap(&self, chi: Complex64) -> Complex64 {
        chi + self.a[0] / (chi - self.b[0]) + self.a[1] / (chi - self.b[1])
    }

    /// The three preimages of z, in no particular order.
    pub fn all_roots(&self, z: Complex64) -> [Complex64; 3] {
        let [a1, a2] = self.a;
        let [b1, b2] = self.b;
        // (χ-B1)(χ-B2)(χ-z) + A1(χ-B2) + A2(χ-B1)
        let s = b1 + b2;
        let p = b1 * b2;
        let c2 = -(s + z);
        let c1 = p + s * z + a1 + a2;
        let c0 = -p * z - a1 * b2 - a2 * b1;
        cubic_roots(c2, c1, c0)
    }

    fn branch_values(&self) -> [f64; 4] {
        [self.cuts[0].0, self.cuts[0].1, self.cuts[1].0, self.cuts[1].1]
    }

    fn on_cut(&self, x: f64) -> bool {
        self.cuts.iter().any(|&(p, q)| p < x && x < q)
    }

    /// χ on the sheet where χ = z + O(1/z); on a cut the boundary value from Im z > 0.
    pub fn chi0(&self, z: Complex64) -> Result<Complex64> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(MopError::InvalidInput(format!("z = {z} is not finite")));
        }
        if let Some(e) = self.branch_values().iter().find(|&&e| (z - e).norm() < BRANCH_GUARD) {
            return Err(MopError::Branch(format!("z = {z} is within {BRANCH_GUARD} of the branch value {e}")));
        }
        let roots = self.all_roots(z);
        let by_im = |sign: f64| {
            *roots.iter().max_by(|p, q| (sign * p.im).partial_cmp(&(sign * q.im)).unwrap()).unwrap()
        };
        if z.im > 0.0 {
            return Ok(by_im(1.0));
        }
        if z.im < 0.0 {
            return Ok(by_im(-1.0));
        }
        if self.on_cut(z.re) {
            return Ok(by_im(1.0));
        }
        let c = self.critical_points;
        let x = z.re;
        let (lo, hi) = if x < self.branch_values().iter().cloned().fold(f64::INFINITY, f64::min) {
            (f64::NEG_INFINITY, c[0])
        } else if x > self.branch_values().iter().cloned().fold(f64::NEG_INFINITY, f64::max) {
            (c[3], f64::INFINITY)
        } else {
            (c[1], c[2])
        };
        roots
            .iter()
            .filter(|r| r.re > lo && r.re < hi)
            .min_by(|p, q| p.im.abs().partial_cmp(&q.im.abs()).unwrap())
            .map(|r| Complex64::new(r.re, 0.0))
            .ok_or_else(|| MopError::Branch(format!("no real preimage of {x} on the principal sheet")))
    }

    fn check_l(l: usize) -> Result<usize> {
        if l == 1 || l == 2 {
            Ok(l - 1)
        } else {
            Err(MopError::InvalidInput(format!("sheet label {l} must be 1 or 2")))
        }
    }

    /// M^{(l)}(z) = 1 / (B_l - χ0(z)).
    pub fn m_function(&self, l: usize, z: Complex64) -> Result<Complex64> {
        let i = Self::check_l(l)?;
        Ok(1.0 / (self.b[i] - self.chi0(z)?))
    }

    /// G^{(l)}(O, O; z).
    pub fn green_o(&self, l: usize, z: Complex64) -> Result<Complex64> {
        self.m_function(l, z)
    }

    /// G^{(l)}(X, O; z) for the vertex reached from O by the edge types in `path`.
    pub fn green_path(&self, l: usize, path: &[usize], z: Complex64) -> Result<Complex64> {
        let mut g = self.m_function(l, z)?;
        let m = [self.m_function(1, z)?, self.m_function(2, z)?];
        for &t in path {
            let i = Self::check_l(t)?;
            g *= -self.a[i].sqrt() * m[i];
        }
        Ok(g)
    }

    fn q_sum(&self, z: Complex64) -> Result<f64> {
        Ok(self.a[0] * self.m_function(1, z)?.norm_sqr() + self.a[1] * self.m_function(2, z)?.norm_sqr())
    }

    /// Σ_X |G^{(l)}(X, O; z)|² in closed form.
    pub fn l2_norm_sq(&self, l: usize, z: Complex64) -> Result<f64> {
        let q = self.q_sum(z)?;
        if q >= 1.0 {
            return Err(MopError::Domain(format!("z = {z} lies on the spectrum")));
        }
        Ok(self.m_function(l, z)?.norm_sqr() / (1.0 - q))
    }

    /// Σ over vertices up to `depth` of |G^{(l)}(X, O; z)|², grouped by edge-type counts.
    pub fn l2_norm_sq_direct(&self, l: usize, z: Complex64, depth: usize) -> Result<f64> {
        let mut total = 0.0;
        for d in 0..=depth {
            for k in 0..=d {
                let path: Vec<usize> = std::iter::repeat(1).take(k).chain(std::iter::repeat(2).take(d - k)).collect();
                total += binomial(d, k) as f64 * self.green_path(l, &path, z)?.norm_sqr();
            }
        }
        Ok(total)
    }

    /// G(O, O; z) of the operator truncated after `depth` generations, by the
    /// type recursion that is exact for the truncation.
    pub fn truncated_green_o(&self, l: usize, z: Complex64, depth: usize) -> Result<Complex64> {
        Self::check_l(l)?;
        Ok(self.truncated_root(l, z, depth))
    }

    fn truncated_root(&self, l: usize, z: Complex64, depth: usize) -> Complex64 {
        // g[j]: diagonal Green's function at a type-j vertex, built from the leaves up
        let mut g = [1.0 / (self.b[0] - z), 1.0 / (self.b[1] - z)];
        for _ in 1..depth {
            let tail = self.a[0] * g[0] + self.a[1] * g[1];
            g = [1.0 / (self.b[0] - z - tail), 1.0 / (self.b[1] - z - tail)];
        }
        let tail = if depth == 0 { Complex64::new(0.0, 0.0) } else { self.a[0] * g[0] + self.a[1] * g[1] };
        1.0 / (self.b[l - 1] - z - tail)
    }

    /// |A1 |G¹|² + A2 |G²|² - 1| at a point inside a cut.
    pub fn unit_identity_residual(&self, x: f64) -> Result<f64> {
        if !self.on_cut(x) {
            return Err(MopError::Domain(format!("{x} is not inside a cut")));
        }
        Ok((self.q_sum(Complex64::new(x, 0.0))? - 1.0).abs())
    }

    /// A1 |G¹|² + A2 |G²|² at any admissible z.
    pub fn unit_form(&self, z: Complex64) -> Result<f64> {
        self.q_sum(z)
    }

    /// Density of states π^{-1} Im M^{(l)}(x + i0).
    pub fn dos(&self, l: usize, x: f64) -> Result<f64> {
        if !self.on_cut(x) {
            return Err(MopError::Domain(format!("{x} is not inside a cut")));
        }
        Ok(self.m_function(l, Complex64::new(x, 0.0))?.im / std::f64::consts::PI)
    }

    /// ∫ dos over both cuts.
    pub fn dos_mass(&self, l: usize) -> f64 {
        self.cuts
            .iter()
            .map(|&(p, q)| {
                let f = |x: f64| if x > p + BRANCH_GUARD && x < q - BRANCH_GUARD { self.dos(l, x).unwrap_or(0.0) } else { 0.0 };
                quadrature::double_exponential::integrate(f, p, q, 1e-12).integral
            })
            .sum()
    }

    /// (x, dos(x)) at `points` midpoints spread over the two cuts.
    pub fn dos_profile(&self, l: usize, points: usize) -> Result<Vec<(f64, f64)>> {
        if points == 0 {
            return Err(MopError::InvalidInput("the grid must have at least one point".into()));
        }
        Self::check_l(l)?;
        midpoint_grid(self.cuts, points)
            .into_par_iter()
            .map(|x| Ok((x, self.dos(l, x)?)))
            .collect()
    }

    /// Slope of log dos against log distance near the left end of each cut.
    pub fn edge_exponents(&self, l: usize) -> Result<Vec<f64>> {
        let mut out = vec![];
        for &(p, q) in &self.cuts {
            for (end, dir) in [(p, 1.0), (q, -1.0)] {
                let (d1, d2) = (1e-6, 1e-4);
                let f1 = self.dos(l, end + dir * d1)?;
                let f2 = self.dos(l, end + dir * d2)?;
                out.push((f2.ln() - f1.ln()) / (d2.ln() - d1.ln()));
            }
        }
        Ok(out)
    }

    /// M^{(l)} over the three sheets multiplied together, against (-1)^l / (A_l (B2 - B1)).
    pub fn triple_product_residual(&self, l: usize, z: Complex64) -> Result<f64> {
        let i = Self::check_l(l)?;
        let prod: Complex64 = self.all_roots(z).iter().map(|chi| 1.0 / (self.b[i] - chi)).product();
        let sign = if l == 1 { -1.0 } else { 1.0 };
        let expect = sign / (self.a[i] * (self.b[1] - self.b[0]));
        Ok((prod - expect).norm() / expect.abs())
    }

    /// The periodic operator with root value B_l, truncated after `depth` generations.
    pub fn assemble_lc(&self, l: usize, depth: usize) -> Result<TreeOperator> {
        let i = Self::check_l(l)?;
        let tree = Tree::cayley(depth);
        let n = tree.len();
        let mut v = vec![0.0; n];
        let mut w = vec![1.0; n];
        for y in 0..n {
            let t = tree.vertex_type(y);
            if t == 0 {
                v[y] = self.b[i];
            } else {
                v[y] = self.b[t - 1];
                w[y] = self.a[t - 1];
            }
        }
        Ok(TreeOperator::new(tree, v, w, vec![0; n], (1.0, 0.0)))
    }
}

/// Recurrence coefficients along the ray n ≈ (c|n|, (1-c)|n|) for |n| ≤ 2 nmax.
pub fn ray_limit_estimate(sys: &MopSystem, c: f64, nmax: usize) -> Result<RayLimitReport> {
    if !(c > 0.0 && c < 1.0) {
        return Err(MopError::InvalidInput(format!("ray slope {c} must lie in (0, 1)")));
    }
    let step = (1..=20).find(|&s| ((c * s as f64) - (c * s as f64).round()).abs() < 1e-12).unwrap_or(1);
    let mut rows = vec![];
    let mut t = step;
    while t <= 2 * nmax {
        let n1 = (c * t as f64).round() as usize;
        let n = MultiIndex::new(n1, t - n1);
        let (a, b) = sys.recurrence_f64(n)?;
        if !a.iter().chain(b.iter()).all(|x| x.is_finite()) {
            return Err(MopError::Convergence(format!("precision exhausted at |n| = {t}")));
        }
        rows.push(RayRow { total: t, n, a, b });
        t += step;
    }
    let last = rows.last().ok_or_else(|| MopError::InvalidInput("nmax is too small for the ray".into()))?;
    let estimate = [last.a[0], last.a[1], last.b[0], last.b[1]];
    let differences = rows
        .windows(2)
        .map(|w| {
            (0..2)
                .map(|i| (w[1].a[i] - w[0].a[i]).abs().max((w[1].b[i] - w[0].b[i]).abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    let antisymmetry = rows.iter().map(|r| (r.a[0] - r.a[1]).abs().max((r.b[0] + r.b[1]).abs())).collect();
    Ok(RayLimitReport { c, step, rows, estimate, differences, antisymmetry })
}

/// `points` cell midpoints over two intervals, split in proportion to their lengths.
pub fn midpoint_grid(intervals: [(f64, f64); 2], points: usize) -> Vec<f64> {
    let l0 = intervals[0].1 - intervals[0].0;
    let l1 = intervals[1].1 - intervals[1].0;
    let k0 = ((points as f64) * l0 / (l0 + l1)).round().clamp(0.0, points as f64) as usize;
    let mut xs = Vec::with_capacity(points);
    for (k, (p, q)) in [(k0, intervals[0]), (points - k0, intervals[1])] {
        let h = (q - p) / k.max(1) as f64;
        xs.extend((0..k).map(|i| p + (i as f64 + 0.5) * h));
    }
    xs
}

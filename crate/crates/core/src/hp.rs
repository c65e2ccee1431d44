//! Extended-precision helpers built on MPFR floats.

use crate::error::{MopError, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rug::float::Constant;
use rug::{Complex, Float};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub const DEFAULT_PRECISION: u32 = 256;

pub fn fl(prec: u32, x: f64) -> Float {
    Float::with_val(prec, x)
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn to_c64(z: &Complex) -> Complex64 {
    Complex64::new(z.real().to_f64(), z.imag().to_f64())
}

pub fn from_c64(prec: u32, z: Complex64) -> Complex {
    Complex::with_val(prec, (z.re, z.im))
}

pub fn cabs(z: &Complex) -> Float {
    Float::with_val(z.prec().0, z.abs_ref())
}

/// 2^{-bits} at the given precision.
pub fn eps(prec: u32, bits: i32) -> Float {
    Float::with_val(prec, 1) >> bits
}

/// Real polynomial with extended-precision coefficients, ascending order.
#[derive(Clone, Debug)]
pub struct HpPoly {
    pub c: Vec<Float>,
    prec: u32,
}

impl HpPoly {
    pub fn zero(prec: u32) -> Self {
        HpPoly { c: Vec::new(), prec }
    }

    pub fn one(prec: u32) -> Self {
        HpPoly { c: vec![fl(prec, 1.0)], prec }
    }

    pub fn from_coeffs(prec: u32, c: Vec<Float>) -> Self {
        HpPoly { c, prec }
    }

    pub fn from_f64(prec: u32, c: &[f64]) -> Self {
        HpPoly { c: c.iter().map(|&v| fl(prec, v)).collect(), prec }
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// Number of stored coefficients; the formal degree is len-1.
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.iter().all(|v| v.is_zero())
    }

    /// Degree ignoring exactly-zero leading coefficients.
    pub fn degree(&self) -> Option<usize> {
        self.c.iter().rposition(|v| !v.is_zero())
    }

    pub fn coeff(&self, i: usize) -> Float {
        self.c.get(i).cloned().unwrap_or_else(|| Float::new(self.prec))
    }

    pub fn leading(&self) -> Float {
        match self.degree() {
            Some(d) => self.c[d].clone(),
            None => Float::new(self.prec),
        }
    }

    pub fn eval(&self, x: &Float) -> Float {
        let mut acc = Float::new(self.prec);
        for a in self.c.iter().rev() {
            acc *= x;
            acc += a;
        }
        acc
    }

    pub fn eval_c(&self, z: &Complex) -> Complex {
        let mut acc = Complex::new(self.prec);
        for a in self.c.iter().rev() {
            acc *= z;
            acc += a;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.eval(&fl(self.prec, x)).to_f64()
    }

    pub fn derivative(&self) -> HpPoly {
        let c = self
            .c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, a)| Float::with_val(self.prec, a * i as u32))
            .collect();
        HpPoly { c, prec: self.prec }
    }

    pub fn add(&self, o: &HpPoly) -> HpPoly {
        let n = self.c.len().max(o.c.len());
        let c = (0..n)
            .map(|i| Float::with_val(self.prec, self.coeff(i) + o.coeff(i)))
            .collect();
        HpPoly { c, prec: self.prec }
    }

    pub fn sub(&self, o: &HpPoly) -> HpPoly {
        let n = self.c.len().max(o.c.len());
        let c = (0..n)
            .map(|i| Float::with_val(self.prec, self.coeff(i) - o.coeff(i)))
            .collect();
        HpPoly { c, prec: self.prec }
    }

    pub fn scale(&self, s: &Float) -> HpPoly {
        let c = self.c.iter().map(|a| Float::with_val(self.prec, a * s)).collect();
        HpPoly { c, prec: self.prec }
    }

    pub fn mul(&self, o: &HpPoly) -> HpPoly {
        if self.c.is_empty() || o.c.is_empty() {
            return HpPoly::zero(self.prec);
        }
        let mut c = vec![Float::new(self.prec); self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in o.c.iter().enumerate() {
                c[i + j] += Float::with_val(self.prec, a * b);
            }
        }
        HpPoly { c, prec: self.prec }
    }

    /// Multiply by (x - r).
    pub fn mul_linear(&self, r: &Float) -> HpPoly {
        let lin = HpPoly {
            c: vec![Float::with_val(self.prec, -r), fl(self.prec, 1.0)],
            prec: self.prec,
        };
        self.mul(&lin)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.c.iter().map(|v| v.to_f64()).collect()
    }

    /// Drop exactly-zero leading coefficients.
    pub fn trimmed(&self) -> HpPoly {
        let n = self.degree().map(|d| d + 1).unwrap_or(0);
        HpPoly { c: self.c[..n].to_vec(), prec: self.prec }
    }
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug)]
pub struct GlRule {
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
    pub nodes_f64: Vec<f64>,
    pub weights_f64: Vec<f64>,
}

fn legendre_f64(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn legendre_hp(n: usize, x: &Float, prec: u32) -> (Float, Float) {
    let mut p0 = fl(prec, 1.0);
    let mut p1 = x.clone();
    for k in 2..=n {
        let t = Float::with_val(prec, x * &p1) * (2 * k - 1) as u32;
        let p2 = (t - Float::with_val(prec, &p0 * (k - 1) as u32)) / k as u32;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn compute_gl(n: usize, prec: u32) -> GlRule {
    let wp = prec + 32;
    let nf = n as f64;
    let mut nodes = vec![Float::new(prec); n];
    let mut weights = vec![Float::new(prec); n];
    let tol = eps(wp, wp as i32 - 8);
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, q) = legendre_f64(n, x);
            let dp = nf * (x * p - q) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut xh = fl(wp, x);
        let mut dp = Float::new(wp);
        for _ in 0..12 {
            let (p, q) = legendre_hp(n, &xh, wp);
            let x2m1 = Float::with_val(wp, &xh * &xh) - 1u32;
            dp = (Float::with_val(wp, &xh * &p) - q) * n as u32 / x2m1;
            let dx = Float::with_val(wp, &p / &dp);
            xh -= &dx;
            if dx.abs() < tol {
                let (p, q) = legendre_hp(n, &xh, wp);
                let x2m1 = Float::with_val(wp, &xh * &xh) - 1u32;
                dp = (Float::with_val(wp, &xh * &p) - q) * n as u32 / x2m1;
                break;
            }
        }
        let one_m_x2 = 1u32 - Float::with_val(wp, &xh * &xh);
        let w = Float::with_val(wp, 2u32) / (one_m_x2 * Float::with_val(wp, &dp * &dp));
        let j = n - 1 - i;
        nodes[i] = Float::with_val(prec, -&xh);
        nodes[j] = Float::with_val(prec, &xh);
        weights[i] = Float::with_val(prec, &w);
        weights[j] = Float::with_val(prec, &w);
    }
    if n % 2 == 1 {
        nodes[n / 2] = Float::new(prec);
    }
    let nodes_f64 = nodes.iter().map(|v| v.to_f64()).collect();
    let weights_f64 = weights.iter().map(|v| v.to_f64()).collect();
    GlRule { nodes, weights, nodes_f64, weights_f64 }
}

type GlCache = Mutex<HashMap<(usize, u32), Arc<GlRule>>>;

/// Memoized Gauss-Legendre rule with `n` nodes at `prec` bits.
pub fn gauss_legendre(n: usize, prec: u32) -> Arc<GlRule> {
    static CACHE: OnceLock<GlCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&(n, prec)) {
        return r.clone();
    }
    let rule = Arc::new(compute_gl(n, prec));
    cache.lock().unwrap().entry((n, prec)).or_insert(rule).clone()
}

/// Gaussian elimination with scaled partial pivoting. Returns None when a
/// pivot falls below 2^{-3p/4} relative to its row scale.
pub fn solve(mut a: Vec<Vec<Float>>, mut b: Vec<Float>, prec: u32) -> Option<Vec<Float>> {
    let n = b.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let scale: Vec<Float> = a
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| Float::with_val(prec, v.abs_ref()))
                .fold(Float::new(prec), |m, v| if v > m { v } else { m })
        })
        .collect();
    if scale.iter().any(|s| s.is_zero()) {
        return None;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let thresh = eps(prec, (prec * 3 / 4) as i32);
    for k in 0..n {
        let mut best = k;
        let mut bestv = Float::new(prec);
        for i in k..n {
            let v = Float::with_val(prec, a[i][k].abs_ref()) / &scale[perm[i]];
            if v > bestv {
                bestv = v;
                best = i;
            }
        }
        if bestv < thresh {
            return None;
        }
        a.swap(k, best);
        b.swap(k, best);
        perm.swap(k, best);
        let piv = a[k][k].clone();
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let f = Float::with_val(prec, &a[i][k] / &piv);
            for j in k..n {
                let t = Float::with_val(prec, &f * &a[k][j]);
                a[i][j] -= t;
            }
            let t = Float::with_val(prec, &f * &b[k]);
            b[i] -= t;
        }
    }
    let mut x = vec![Float::new(prec); n];
    for i in (0..n).rev() {
        let mut s = b[i].clone();
        for j in i + 1..n {
            s -= Float::with_val(prec, &a[i][j] * &x[j]);
        }
        x[i] = s / &a[i][i];
    }
    Some(x)
}

fn companion_seeds(monic: &[f64]) -> Option<Vec<Complex64>> {
    let d = monic.len() - 1;
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        m[(i, d - 1)] = -monic[i];
    }
    let ev = m.try_schur(f64::EPSILON, 10_000)?.complex_eigenvalues();
    let v: Vec<Complex64> = ev.iter().map(|c| Complex64::new(c.re, c.im)).collect();
    if v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Some(v)
    } else {
        None
    }
}

/// All complex roots of `p` by Aberth-Ehrlich iteration in extended precision,
/// seeded from double-precision companion-matrix eigenvalues.
pub fn poly_roots(p: &HpPoly) -> Result<Vec<Complex>> {
    let p = p.trimmed();
    let prec = p.prec();
    let d = match p.degree() {
        None => return Err(MopError::Convergence("zero polynomial".into())),
        Some(d) => d,
    };
    if d == 0 {
        return Ok(Vec::new());
    }
    let lead = p.leading();
    let monic = p.scale(&Float::with_val(prec, 1u32 / &lead));
    let dp = monic.derivative();
    if d == 1 {
        return Ok(vec![Complex::with_val(prec, -&monic.c[0])]);
    }
    let mf = monic.to_f64_vec();
    let seeds = companion_seeds(&mf).unwrap_or_else(|| {
        let r = 1.0 + mf.iter().take(d).fold(0.0f64, |m, v| m.max(v.abs()));
        (0..d)
            .map(|k| Complex64::from_polar(r, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / d as f64))
            .collect()
    });
    let mut z: Vec<Complex64> = seeds;
    for i in 0..d {
        for j in 0..i {
            if (z[i] - z[j]).norm() < 1e-9 * (1.0 + z[i].norm()) {
                let bump = Complex64::new(1e-7, 3e-7) * (i as f64 + 1.0) * (1.0 + z[i].norm());
                z[i] += bump;
            }
        }
    }
    let mut z: Vec<Complex> = z.iter().map(|c| from_c64(prec, *c)).collect();
    let tol = eps(prec, prec as i32 - 12);
    let loose = eps(prec, (prec / 2) as i32);
    let mut last_max = Float::with_val(prec, rug::float::Special::Infinity);
    for _ in 0..400 {
        let mut max_rel = Float::new(prec);
        for i in 0..d {
            let pv = monic.eval_c(&z[i]);
            let dv = dp.eval_c(&z[i]);
            if pv.real().is_zero() && pv.imag().is_zero() {
                continue;
            }
            let w = Complex::with_val(prec, &pv / &dv);
            let mut s = Complex::new(prec);
            for j in 0..d {
                if j != i {
                    let diff = Complex::with_val(prec, &z[i] - &z[j]);
                    s += diff.recip();
                }
            }
            let denom = 1u32 - Complex::with_val(prec, &w * &s);
            let step = Complex::with_val(prec, &w / &denom);
            let scale = cabs(&z[i]).max(&fl(prec, 1.0));
            let rel = cabs(&step) / scale;
            if rel > max_rel {
                max_rel = rel;
            }
            z[i] -= step;
        }
        if max_rel <= tol {
            return Ok(z);
        }
        if max_rel <= loose && max_rel >= last_max {
            return Ok(z);
        }
        last_max = max_rel;
    }
    if last_max <= loose {
        Ok(z)
    } else {
        Err(MopError::Convergence(format!(
            "Aberth iteration stalled at relative step {:e}",
            last_max.to_f64()
        )))
    }
}

/// Sorted real zeros, Newton-polished on the real line.
pub fn real_zeros(p: &HpPoly) -> Result<Vec<Float>> {
    let prec = p.prec();
    let roots = poly_roots(p)?;
    let dp = p.derivative();
    let imag_tol = eps(prec, (prec / 4) as i32);
    let mut out = Vec::new();
    for r in roots {
        let scale = cabs(&r).max(&fl(prec, 1.0));
        let im = Float::with_val(prec, r.imag().abs_ref());
        if im > Float::with_val(prec, &imag_tol * &scale) {
            continue;
        }
        let mut x = r.real().clone();
        for _ in 0..3 {
            let d = dp.eval(&x);
            if d.is_zero() {
                break;
            }
            let step = p.eval(&x) / d;
            x -= step;
        }
        out.push(x);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(out)
}

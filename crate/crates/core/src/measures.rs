//! Compactly supported measures on the real line: finitely many atoms plus
//! absolutely continuous pieces with smooth densities.

use crate::error::{MopError, Result};
use crate::hp::{fl, from_c64, gauss_legendre, pi, DEFAULT_PRECISION};
use num_complex::Complex64;
use rug::ops::Pow;
use rug::{Complex, Float};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn default_quad() -> usize {
    200
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

/// ln((z-a)/(z-b)) without cancellation for large |z|.
fn log_ratio(z: Complex64, a: f64, b: f64) -> Complex64 {
    let w = (b - a) / (z - b);
    if w.norm() >= 0.1 {
        return (1.0 + w).ln();
    }
    let mut term = w;
    let mut s = Complex64::new(0.0, 0.0);
    for k in 1..40 {
        s += term / k as f64;
        term *= -w;
        if term.norm() < 1e-18 * s.norm() {
            break;
        }
    }
    s
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    /// (b-x)^p (x-a)^q poly(x)
    JacobiWeight { p: f64, q: f64, poly: Vec<f64> },
    /// base(x) times the Markov function of `weight_measure` at x
    MarkovWeighted { base: Box<DensitySpec>, weight_measure: Box<Measure> },
}

impl DensitySpec {
    pub fn eval(&self, a: f64, b: f64, x: f64) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::JacobiWeight { p, q, poly } => {
                let pv = poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
                (b - x).max(0.0).powf(*p) * (x - a).max(0.0).powf(*q) * pv
            }
            DensitySpec::MarkovWeighted { base, weight_measure } => {
                base.eval(a, b, x) * weight_measure.markov_real_unchecked(x)
            }
        }
    }

    fn validate(&self, a: f64, b: f64) -> Result<()> {
        match self {
            DensitySpec::Uniform => Ok(()),
            DensitySpec::JacobiWeight { p, q, poly } => {
                if *p <= -1.0 || *q <= -1.0 || poly.is_empty() {
                    return Err(MopError::InvalidInput("jacobi_weight needs p, q > -1 and a nonempty poly".into()));
                }
                Ok(())
            }
            DensitySpec::MarkovWeighted { base, weight_measure } => {
                base.validate(a, b)?;
                weight_measure.validate()?;
                let (lo, hi) = weight_measure.hull();
                if !(hi < a || lo > b) {
                    return Err(MopError::Overlap("weight measure meets the host interval".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub density: DensitySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
    #[serde(default)]
    pub pieces: Vec<Piece>,
    #[serde(default = "default_quad")]
    pub quad_order: usize,
}

impl Measure {
    pub fn new(atoms: Vec<(f64, f64)>, pieces: Vec<Piece>) -> Result<Self> {
        let m = Measure { atoms, pieces, quad_order: default_quad() };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        Measure { atoms: vec![], pieces: vec![Piece { a, b, density: DensitySpec::Uniform }], quad_order: default_quad() }
    }

    pub fn atom(x: f64, mass: f64) -> Self {
        Measure { atoms: vec![(x, mass)], pieces: vec![], quad_order: default_quad() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Measure = serde_json::from_str(s).map_err(|e| MopError::InvalidInput(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() && self.pieces.is_empty() {
            return Err(MopError::InvalidInput("empty measure".into()));
        }
        if self.quad_order < 2 {
            return Err(MopError::InvalidInput("quad_order must be at least 2".into()));
        }
        for &(x, m) in &self.atoms {
            if !x.is_finite() || !(m > 0.0) || !m.is_finite() {
                return Err(MopError::InvalidInput(format!("bad atom ({x}, {m})")));
            }
        }
        for p in &self.pieces {
            if !(p.a < p.b) || !p.a.is_finite() || !p.b.is_finite() {
                return Err(MopError::InvalidInput(format!("bad piece [{}, {}]", p.a, p.b)));
            }
            p.density.validate(p.a, p.b)?;
        }
        let mut iv: Vec<(f64, f64)> = self.pieces.iter().map(|p| (p.a, p.b)).collect();
        iv.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for w in iv.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(MopError::Overlap("pieces overlap".into()));
            }
        }
        Ok(())
    }

    /// Convex hull of the support.
    pub fn hull(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(x, _) in &self.atoms {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        for p in &self.pieces {
            lo = lo.min(p.a);
            hi = hi.max(p.b);
        }
        (lo, hi)
    }

    pub fn mass(&self) -> f64 {
        self.moment(0)
    }

    fn gl_f64(&self) -> std::sync::Arc<crate::hp::GlRule> {
        gauss_legendre(self.quad_order, DEFAULT_PRECISION)
    }

    /// Integral of g against the ac part of one piece.
    fn piece_integral<F: Fn(f64) -> f64>(&self, p: &Piece, g: F) -> f64 {
        let rule = self.gl_f64();
        let h = 0.5 * (p.b - p.a);
        let c = 0.5 * (p.a + p.b);
        rule.nodes_f64
            .iter()
            .zip(&rule.weights_f64)
            .map(|(t, w)| {
                let x = c + h * t;
                w * h * p.density.eval(p.a, p.b, x) * g(x)
            })
            .sum()
    }

    pub fn moment(&self, k: u32) -> f64 {
        let mut s: f64 = self.atoms.iter().map(|&(x, m)| m * x.powi(k as i32)).sum();
        for p in &self.pieces {
            s += match p.density {
                DensitySpec::Uniform => (p.b.powi(k as i32 + 1) - p.a.powi(k as i32 + 1)) / (k as f64 + 1.0),
                _ => self.piece_integral(p, |x| x.powi(k as i32)),
            };
        }
        s
    }

    /// Integral of an arbitrary function against the measure.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        let mut s: f64 = self.atoms.iter().map(|&(x, m)| m * g(x)).sum();
        for p in &self.pieces {
            s += self.piece_integral(p, &g);
        }
        s
    }

    /// Density of the ac part (0 off the pieces).
    pub fn density(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.a <= x && x <= p.b)
            .map(|p| p.density.eval(p.a, p.b, x))
            .sum()
    }

    pub fn dist_to_support(&self, z: Complex64) -> f64 {
        let mut d = f64::INFINITY;
        for &(x, _) in &self.atoms {
            d = d.min((z - x).norm());
        }
        for p in &self.pieces {
            let xr = z.re.clamp(p.a, p.b);
            d = d.min((z - xr).norm());
        }
        d
    }

    fn markov_unchecked(&self, z: Complex64) -> Complex64 {
        let mut s: Complex64 = self.atoms.iter().map(|&(x, m)| m / (z - x)).sum();
        for p in &self.pieces {
            s += match p.density {
                DensitySpec::Uniform => log_ratio(z, p.a, p.b),
                _ => {
                    let re = self.piece_integral(p, |x| (1.0 / (z - x)).re);
                    let im = self.piece_integral(p, |x| (1.0 / (z - x)).im);
                    Complex64::new(re, im)
                }
            };
        }
        s
    }

    fn markov_real_unchecked(&self, x: f64) -> f64 {
        self.markov_unchecked(Complex64::new(x, 0.0)).re
    }

    /// Cauchy transform of the measure.
    pub fn markov(&self, z: Complex64) -> Result<Complex64> {
        if self.dist_to_support(z) < 1e-12 {
            return Err(MopError::Domain(format!("z = {z} lies on the support")));
        }
        Ok(self.markov_unchecked(z))
    }

    fn interior_piece(&self, x: f64) -> Result<usize> {
        if self.atoms.iter().any(|&(t, _)| (t - x).abs() < 1e-12) {
            return Err(MopError::Domain(format!("atom at {x}")));
        }
        self.pieces
            .iter()
            .position(|p| p.a + 1e-12 < x && x < p.b - 1e-12)
            .ok_or_else(|| MopError::Domain(format!("{x} is not interior to an ac piece")))
    }

    /// Boundary value of the Cauchy transform from the upper (Plus) or lower side.
    pub fn markov_boundary(&self, x: f64, side: Side) -> Result<Complex64> {
        let j = self.interior_piece(x)?;
        let mut re: f64 = self.atoms.iter().map(|&(t, m)| m / (x - t)).sum();
        let mut dens = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            if i != j {
                re += self.markov_real_unchecked_piece(p, x);
                continue;
            }
            let fx = p.density.eval(p.a, p.b, x);
            dens = fx;
            re += fx * ((x - p.a) / (p.b - x)).ln();
            if p.density != DensitySpec::Uniform {
                re += self.piece_integral_raw(p, |t, ft| if t == x { 0.0 } else { (ft - fx) / (x - t) });
            }
        }
        Ok(Complex64::new(re, -side.sign() * PI * dens))
    }

    fn markov_real_unchecked_piece(&self, p: &Piece, x: f64) -> f64 {
        match p.density {
            DensitySpec::Uniform => ((x - p.a) / (x - p.b)).ln(),
            _ => self.piece_integral(p, |t| 1.0 / (x - t)),
        }
    }

    fn piece_integral_raw<F: Fn(f64, f64) -> f64>(&self, p: &Piece, g: F) -> f64 {
        let rule = self.gl_f64();
        let h = 0.5 * (p.b - p.a);
        let c = 0.5 * (p.a + p.b);
        rule.nodes_f64
            .iter()
            .zip(&rule.weights_f64)
            .map(|(t, w)| {
                let x = c + h * t;
                w * h * g(x, p.density.eval(p.a, p.b, x))
            })
            .sum()
    }

    /// Concatenation of two measures with disjoint convex hulls.
    pub fn concat(&self, other: &Measure) -> Result<Measure> {
        let (a1, b1) = self.hull();
        let (a2, b2) = other.hull();
        if !(b1 < a2 || b2 < a1) {
            return Err(MopError::Overlap(format!("[{a1}, {b1}] and [{a2}, {b2}]")));
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Ok(Measure { atoms, pieces, quad_order: self.quad_order.max(other.quad_order) })
    }
}

enum HpKind {
    Uniform,
    Jacobi { p: Float, q: Float, poly: Vec<Float> },
    Markov { base: Box<HpKind>, weight: Box<HpMeasure> },
}

struct HpPiece {
    a: Float,
    b: Float,
    kind: HpKind,
    nodes: Vec<Float>,
    /// quadrature weight times density at each node
    wf: Vec<Float>,
    dens: Vec<Float>,
    w: Vec<Float>,
}

fn hp_kind(spec: &DensitySpec, prec: u32) -> HpKind {
    match spec {
        DensitySpec::Uniform => HpKind::Uniform,
        DensitySpec::JacobiWeight { p, q, poly } => HpKind::Jacobi {
            p: fl(prec, *p),
            q: fl(prec, *q),
            poly: poly.iter().map(|&c| fl(prec, c)).collect(),
        },
        DensitySpec::MarkovWeighted { base, weight_measure } => HpKind::Markov {
            base: Box::new(hp_kind(base, prec)),
            weight: Box::new(HpMeasure::new(weight_measure, prec)),
        },
    }
}

fn kind_eval(kind: &HpKind, a: &Float, b: &Float, x: &Float, prec: u32) -> Float {
    match kind {
        HpKind::Uniform => fl(prec, 1.0),
        HpKind::Jacobi { p, q, poly } => {
            let mut pv = Float::new(prec);
            for c in poly.iter().rev() {
                pv *= x;
                pv += c;
            }
            let bx = Float::with_val(prec, b - x);
            let xa = Float::with_val(prec, x - a);
            let t1 = if p.is_zero() { fl(prec, 1.0) } else { Float::with_val(prec, (&bx).pow(p)) };
            let t2 = if q.is_zero() { fl(prec, 1.0) } else { Float::with_val(prec, (&xa).pow(q)) };
            pv * t1 * t2
        }
        HpKind::Markov { base, weight } => kind_eval(base, a, b, x, prec) * weight.markov_real_unchecked(x),
    }
}

/// Extended-precision discretization of a Measure.
pub struct HpMeasure {
    prec: u32,
    atoms: Vec<(Float, Float)>,
    pieces: Vec<HpPiece>,
    pub source: Measure,
}

impl HpMeasure {
    pub fn new(m: &Measure, prec: u32) -> Self {
        let rule = gauss_legendre(m.quad_order, prec);
        let atoms = m.atoms.iter().map(|&(x, w)| (fl(prec, x), fl(prec, w))).collect();
        let pieces = m
            .pieces
            .iter()
            .map(|p| {
                let a = fl(prec, p.a);
                let b = fl(prec, p.b);
                let kind = hp_kind(&p.density, prec);
                let h = Float::with_val(prec, &b - &a) / 2u32;
                let c = Float::with_val(prec, &a + &b) / 2u32;
                let nodes: Vec<Float> =
                    rule.nodes.iter().map(|t| Float::with_val(prec, &c + Float::with_val(prec, &h * t))).collect();
                let w: Vec<Float> = rule.weights.iter().map(|wt| Float::with_val(prec, wt * &h)).collect();
                let dens: Vec<Float> = nodes.iter().map(|x| kind_eval(&kind, &a, &b, x, prec)).collect();
                let wf = w.iter().zip(&dens).map(|(w, d)| Float::with_val(prec, w * d)).collect();
                HpPiece { a, b, kind, nodes, wf, dens, w }
            })
            .collect();
        HpMeasure { prec, atoms, pieces, source: m.clone() }
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// Moments of orders 0..=kmax.
    pub fn moments(&self, kmax: usize) -> Vec<Float> {
        let prec = self.prec;
        let mut out = vec![Float::new(prec); kmax + 1];
        for (x, m) in &self.atoms {
            let mut pw = m.clone();
            for o in out.iter_mut() {
                *o += &pw;
                pw *= x;
            }
        }
        for p in &self.pieces {
            match p.kind {
                HpKind::Uniform => {
                    let mut pa = p.a.clone();
                    let mut pb = p.b.clone();
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += Float::with_val(prec, &pb - &pa) / (k as u32 + 1);
                        pa *= &p.a;
                        pb *= &p.b;
                    }
                }
                _ => {
                    for (x, wf) in p.nodes.iter().zip(&p.wf) {
                        let mut pw = wf.clone();
                        for o in out.iter_mut() {
                            *o += &pw;
                            pw *= x;
                        }
                    }
                }
            }
        }
        out
    }

    /// Quadrature nodes with their weights (density included); atoms first.
    pub fn nodes(&self) -> Vec<(Float, Float)> {
        let mut out = self.atoms.clone();
        for p in &self.pieces {
            out.extend(p.nodes.iter().cloned().zip(p.wf.iter().cloned()));
        }
        out
    }

    /// Integral of g against the measure using the stored quadrature.
    pub fn integrate<F: Fn(&Float) -> Float>(&self, g: F) -> Float {
        let mut s = Float::new(self.prec);
        for (x, m) in &self.atoms {
            s += g(x) * m;
        }
        for p in &self.pieces {
            for (x, wf) in p.nodes.iter().zip(&p.wf) {
                s += g(x) * wf;
            }
        }
        s
    }

    /// Complex-valued integral against the measure.
    pub fn integrate_c<F: Fn(&Float) -> Complex>(&self, g: F) -> Complex {
        let mut s = Complex::new(self.prec);
        for (x, m) in &self.atoms {
            s += g(x) * m;
        }
        for p in &self.pieces {
            for (x, wf) in p.nodes.iter().zip(&p.wf) {
                s += g(x) * wf;
            }
        }
        s
    }

    pub fn density(&self, x: &Float) -> Float {
        let mut s = Float::new(self.prec);
        for p in &self.pieces {
            if &p.a <= x && x <= &p.b {
                s += kind_eval(&p.kind, &p.a, &p.b, x, self.prec);
            }
        }
        s
    }

    pub fn markov(&self, z: &Complex) -> Complex {
        let prec = self.prec;
        let mut s = Complex::new(prec);
        for (x, m) in &self.atoms {
            s += Complex::with_val(prec, z - x).recip() * m;
        }
        for p in &self.pieces {
            match p.kind {
                HpKind::Uniform => {
                    let num = Complex::with_val(prec, z - &p.a);
                    let den = Complex::with_val(prec, z - &p.b);
                    s += (num / den).ln();
                }
                _ => {
                    for (x, wf) in p.nodes.iter().zip(&p.wf) {
                        s += Complex::with_val(prec, z - x).recip() * wf;
                    }
                }
            }
        }
        s
    }

    pub fn markov_c64(&self, z: Complex64) -> Complex {
        self.markov(&from_c64(self.prec, z))
    }

    fn markov_real_unchecked(&self, x: &Float) -> Float {
        let prec = self.prec;
        let mut s = Float::new(prec);
        for (t, m) in &self.atoms {
            s += Float::with_val(prec, m / Float::with_val(prec, x - t));
        }
        for p in &self.pieces {
            s += Self::piece_markov_real(p, x, prec);
        }
        s
    }

    fn piece_markov_real(p: &HpPiece, x: &Float, prec: u32) -> Float {
        match p.kind {
            HpKind::Uniform => {
                let r = Float::with_val(prec, x - &p.a) / Float::with_val(prec, x - &p.b);
                r.abs().ln()
            }
            _ => {
                let mut s = Float::new(prec);
                for (t, wf) in p.nodes.iter().zip(&p.wf) {
                    s += Float::with_val(prec, wf / Float::with_val(prec, x - t));
                }
                s
            }
        }
    }

    pub fn in_interior(&self, x: &Float) -> bool {
        self.pieces.iter().any(|p| &p.a < x && x < &p.b)
    }

    pub fn hull(&self) -> (f64, f64) {
        self.source.hull()
    }

    /// Plemelj boundary value at a point strictly inside an ac piece.
    pub fn markov_boundary(&self, x: &Float, side: Side) -> Result<Complex> {
        let prec = self.prec;
        let tiny = fl(prec, 1e-30);
        if self.atoms.iter().any(|(t, _)| Float::with_val(prec, t - x).abs() < tiny) {
            return Err(MopError::Domain(format!("atom at {}", x.to_f64())));
        }
        let j = self
            .pieces
            .iter()
            .position(|p| &p.a < x && x < &p.b)
            .ok_or_else(|| MopError::Domain(format!("{} is not interior to an ac piece", x.to_f64())))?;
        let mut re = Float::new(prec);
        for (t, m) in &self.atoms {
            re += Float::with_val(prec, m / Float::with_val(prec, x - t));
        }
        let mut dens = Float::new(prec);
        for (i, p) in self.pieces.iter().enumerate() {
            if i != j {
                re += Self::piece_markov_real(p, x, prec);
                continue;
            }
            let fx = kind_eval(&p.kind, &p.a, &p.b, x, prec);
            let lg = (Float::with_val(prec, x - &p.a) / Float::with_val(prec, &p.b - x)).ln();
            re += Float::with_val(prec, &fx * &lg);
            if !matches!(p.kind, HpKind::Uniform) {
                for ((t, w), ft) in p.nodes.iter().zip(&p.w).zip(&p.dens) {
                    let d = Float::with_val(prec, x - t);
                    if d.is_zero() {
                        continue;
                    }
                    re += Float::with_val(prec, ft - &fx) / d * w;
                }
            }
            dens = fx;
        }
        let im = match side {
            Side::Plus => -(pi(prec) * dens),
            Side::Minus => pi(prec) * dens,
        };
        Ok(Complex::with_val(prec, (re, im)))
    }

    /// Markov function at a real point: boundary value when inside a piece,
    /// plain value when off the support.
    pub fn markov_real_point(&self, x: &Float, side: Side) -> Result<Complex> {
        if self.in_interior(x) {
            return self.markov_boundary(x, side);
        }
        let xf = x.to_f64();
        if self.source.dist_to_support(Complex64::new(xf, 0.0)) < 1e-12 {
            return Err(MopError::Domain(format!("{xf} lies on the support")));
        }
        Ok(Complex::with_val(self.prec, (self.markov_real_unchecked(x), 0)))
    }
}

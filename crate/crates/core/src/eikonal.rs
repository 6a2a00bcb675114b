//! Eikonal phase Φ_± built from ray integrals, its gradient, and the
//! closed-form alternatives (simple long-range phase, h-free example phase).

use crate::algebra::{dot, eta, Branch};
use crate::error::{LabError, Result};
use crate::fit::{japanese, logspace, loglog_slope, BoundFit};
use crate::potential::{norm2, random_unit, FamilyKind, PotentialFamily};
use crate::quadrature::{RayQuadrature, RayQuadratureParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Direction of the ray integral and of the cone: + outgoing, − incoming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// ±∫_0^∞ (F(x ± tζ) − F(±tζ)) dt.
pub fn q_transform<F>(f: F, zeta: &[f64; 3], sign: Sign, quad: &RayQuadrature, x: &[f64; 3]) -> Result<f64>
where
    F: Fn(&[f64; 3]) -> f64,
{
    let s = sign.value();
    let z2 = dot(zeta, zeta);
    if z2 == 0.0 {
        return Err(LabError::numerical("q_transform", "zero momentum has no ray"));
    }
    let t_star = (-s * dot(x, zeta) / z2).max(0.0);
    let r = quad.integrate(t_star, |t| {
        let st = s * t;
        let y = [x[0] + st * zeta[0], x[1] + st * zeta[1], x[2] + st * zeta[2]];
        let y0 = [0.0 + st * zeta[0], 0.0 + st * zeta[1], 0.0 + st * zeta[2]];
        [f(&y) - f(&y0)]
    })?;
    Ok(s * r.value[0])
}

/// ±∫_0^∞ G(x ± tζ) dt for an integrable vector field G.
pub fn ray_vector<G>(g: G, zeta: &[f64; 3], sign: Sign, quad: &RayQuadrature, x: &[f64; 3]) -> Result<[f64; 3]>
where
    G: Fn(&[f64; 3]) -> [f64; 3],
{
    let s = sign.value();
    let z2 = dot(zeta, zeta);
    if z2 == 0.0 {
        return Err(LabError::numerical("q_transform", "zero momentum has no ray"));
    }
    let t_star = (-s * dot(x, zeta) / z2).max(0.0);
    let r = quad.integrate(t_star, |t| {
        let st = s * t;
        g(&[x[0] + st * zeta[0], x[1] + st * zeta[1], x[2] + st * zeta[2]])
    })?;
    Ok([s * r.value[0], s * r.value[1], s * r.value[2]])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PhaseKind {
    Zero,
    /// Σ_{n≤N} Φ^{(n)} with F⁰ = ηV − ½V² (the quadratic term can be switched off).
    Iterative { n_terms: usize, quadratic: bool },
    /// ±η∫(V(x±tζ) − V(±tζ)) dt
    SimpleLongRange,
    /// ±η∫(⟨x±tζ⟩^{-ρ} − ⟨±tζ⟩^{-ρ}) dt, h-free
    HFree { rho: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseModel {
    pub kind: PhaseKind,
    pub sign: Sign,
    pub branch: Branch,
    pub family: PotentialFamily,
    pub mass: f64,
    pub quad: RayQuadrature,
    /// relative finite-difference step for ∇Φ^{(2)}
    pub fd_rel: f64,
}

/// Smallest N with (N+1)ρ > 1.
pub fn minimal_terms(rho: f64) -> Result<usize> {
    if rho > 1.0 / 3.0 {
        Ok(if 2.0 * rho > 1.0 { 1 } else { 2 })
    } else {
        Err(LabError::config(
            "potential.rho",
            format!("rho must exceed 1/3 (got {rho}); only N <= 2 phase terms are supported"),
        ))
    }
}

fn quad_for(params: &RayQuadratureParams, alpha: f64) -> Result<RayQuadrature> {
    RayQuadrature::new(RayQuadratureParams { tail_exponent: alpha, ..params.clone() })
}

fn decay_exponent(f: &PotentialFamily) -> f64 {
    match f.kind {
        FamilyKind::Additive { rho2 } if f.h.is_finite() => f.rho.min(rho2),
        _ => f.rho,
    }
}

pub fn phase_build(
    family: &PotentialFamily,
    h: f64,
    sign: Sign,
    n_terms: usize,
    branch: Branch,
    mass: f64,
    quad: &RayQuadratureParams,
) -> Result<PhaseModel> {
    let rho = family.rho;
    minimal_terms(rho)?;
    if !(n_terms == 1 || n_terms == 2) {
        return Err(LabError::config("eikonal.terms", format!("N must be 1 or 2 (got {n_terms})")));
    }
    if (n_terms as f64 + 1.0) * rho <= 1.0 {
        return Err(LabError::config("eikonal.terms", format!("(N+1)rho must exceed 1: N = {n_terms}, rho = {rho}")));
    }
    let fam = family.with_h(h);
    Ok(PhaseModel {
        kind: PhaseKind::Iterative { n_terms, quadratic: true },
        sign,
        branch,
        family: fam,
        mass,
        quad: quad_for(quad, decay_exponent(&fam))?,
        fd_rel: 0.02,
    })
}

pub fn phase_simple_longrange(
    family: &PotentialFamily,
    h: f64,
    sign: Sign,
    branch: Branch,
    mass: f64,
    quad: &RayQuadratureParams,
) -> Result<PhaseModel> {
    if !(family.rho > 0.5 && family.rho < 1.0) {
        return Err(LabError::config(
            "potential.rho",
            format!("the simple long-range phase needs rho in (1/2, 1) (got {})", family.rho),
        ));
    }
    let fam = family.with_h(h);
    Ok(PhaseModel {
        kind: PhaseKind::SimpleLongRange,
        sign,
        branch,
        family: fam,
        mass,
        quad: quad_for(quad, decay_exponent(&fam))?,
        fd_rel: 0.02,
    })
}

pub fn phase_hfree_example(rho: f64, sign: Sign, branch: Branch, mass: f64, quad: &RayQuadratureParams) -> Result<PhaseModel> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(LabError::config("potential.rho", format!("the h-free phase needs rho in (0, 1] (got {rho})")));
    }
    let family = PotentialFamily { kind: FamilyKind::Static, rho, kappa: 1.0, h: f64::INFINITY };
    Ok(PhaseModel {
        kind: PhaseKind::HFree { rho },
        sign,
        branch,
        family,
        mass,
        quad: quad_for(quad, rho)?,
        fd_rel: 0.02,
    })
}

pub fn phase_zero(sign: Sign, branch: Branch, mass: f64) -> PhaseModel {
    PhaseModel {
        kind: PhaseKind::Zero,
        sign,
        branch,
        family: PotentialFamily { kind: FamilyKind::Static, rho: 1.0, kappa: 0.0, h: f64::INFINITY },
        mass,
        quad: RayQuadrature::new(RayQuadratureParams::default()).expect("default quadrature"),
        fd_rel: 0.02,
    }
}

impl PhaseModel {
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PhaseKind::Zero) || self.family.kappa == 0.0
    }

    pub fn n_terms(&self) -> usize {
        match self.kind {
            PhaseKind::Iterative { n_terms, .. } => n_terms,
            PhaseKind::Zero => 0,
            _ => 1,
        }
    }

    /// Coefficients (c1, c2) with F⁰ = c1 V + c2 V².
    fn f0_coefficients(&self, zeta: &[f64; 3]) -> (f64, f64) {
        let eb = self.branch.sign() * eta(zeta, self.mass);
        match self.kind {
            PhaseKind::Zero => (0.0, 0.0),
            PhaseKind::Iterative { quadratic, .. } => (eb, if quadratic { -0.5 } else { 0.0 }),
            PhaseKind::SimpleLongRange | PhaseKind::HFree { .. } => (eb, 0.0),
        }
    }

    /// Same model with the −½V² term disabled.
    pub fn without_quadratic(&self) -> Self {
        let mut m = self.clone();
        if let PhaseKind::Iterative { n_terms, .. } = m.kind {
            m.kind = PhaseKind::Iterative { n_terms, quadratic: false };
        }
        m
    }

    pub fn with_sign_branch(&self, sign: Sign, branch: Branch) -> Self {
        PhaseModel { sign, branch, ..self.clone() }
    }

    fn f0(&self, zeta: &[f64; 3]) -> impl Fn(&[f64; 3]) -> f64 + '_ {
        let (c1, c2) = self.f0_coefficients(zeta);
        move |y: &[f64; 3]| {
            let v = self.family.value(y);
            c1 * v + c2 * v * v
        }
    }

    /// ∇Φ^{(1)} by differentiating under the integral.
    pub fn grad_first(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<[f64; 3]> {
        if self.is_zero() {
            return Ok([0.0; 3]);
        }
        let (c1, c2) = self.f0_coefficients(zeta);
        let fam = &self.family;
        ray_vector(
            |y| {
                let p = fam.radial(norm2(y));
                let s = (c1 + 2.0 * c2 * p.f) * p.d1;
                [s * y[0], s * y[1], s * y[2]]
            },
            zeta,
            self.sign,
            &self.quad,
            x,
        )
    }

    pub fn phase_first(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        q_transform(self.f0(zeta), zeta, self.sign, &self.quad, x)
    }

    fn second_quad(&self) -> Result<RayQuadrature> {
        self.quad.with_tail_exponent(2.0 * decay_exponent(&self.family))
    }

    /// Φ^{(2)} = Q(½|∇Φ^{(1)}|²).
    pub fn phase_second(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<f64> {
        let q2 = self.second_quad()?;
        self.phase_second_with(&q2, x, zeta)
    }

    fn phase_second_with(&self, q2: &RayQuadrature, x: &[f64; 3], zeta: &[f64; 3]) -> Result<f64> {
        let err = std::cell::Cell::new(None);
        let f1 = |y: &[f64; 3]| match self.grad_first(y, zeta) {
            Ok(g) => 0.5 * norm2(&g),
            Err(e) => {
                err.set(Some(e));
                f64::NAN
            }
        };
        let v = q_transform(f1, zeta, self.sign, q2, x);
        if let Some(e) = err.take() {
            return Err(LabError::numerical("phase_build", format!("gradient of the first phase term failed: {e}")));
        }
        v
    }

    pub fn phase(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let mut p = self.phase_first(x, zeta)?;
        if self.n_terms() == 2 {
            p += self.phase_second(x, zeta)?;
        }
        Ok(p)
    }

    pub fn grad(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<[f64; 3]> {
        if self.is_zero() {
            return Ok([0.0; 3]);
        }
        let mut g = self.grad_first(x, zeta)?;
        if self.n_terms() == 2 {
            let q2 = self.second_quad()?;
            let step = self.fd_rel * japanese(norm2(x).sqrt());
            if !(step > 1e-8) {
                return Err(LabError::numerical("phase_grad", "finite-difference step underflow"));
            }
            const C: [f64; 3] = [45.0, -9.0, 1.0];
            for i in 0..3 {
                let mut acc = 0.0;
                for (j, c) in C.iter().enumerate() {
                    let d = (j + 1) as f64 * step;
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[i] += d;
                    xm[i] -= d;
                    acc += c * (self.phase_second_with(&q2, &xp, zeta)? - self.phase_second_with(&q2, &xm, zeta)?);
                }
                g[i] += acc / (60.0 * step);
            }
        }
        Ok(g)
    }

    pub fn phase_and_grad(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<(f64, [f64; 3])> {
        Ok((self.phase(x, zeta)?, self.grad(x, zeta)?))
    }

    /// Radial tables for the dense kernel; `None` when the model needs the nested second term.
    pub fn tabulate(&self, a_min: f64, r_max: f64, step: f64) -> Result<Option<PhaseTable>> {
        if self.n_terms() == 2 {
            return Ok(None);
        }
        PhaseTable::build(self, a_min, r_max, step).map(Some)
    }
}

/// G_f(a, b) = ∫_0^∞ (f(√((s+a)²+b²)) − f(s)) ds with ∂_a G and ∂_b G / b,
/// for the profiles f = V and f = V², sampled on a uniform (a, b) grid.
#[derive(Clone, Debug)]
pub struct PhaseTable {
    pub a0: f64,
    pub step: f64,
    pub na: usize,
    pub nb: usize,
    /// per node: [G_V, G_V,a, H_V, G_W, G_W,a, H_W]
    pub data: Vec<[f64; 6]>,
    pub sign: Sign,
    pub branch: Branch,
    pub mass: f64,
    pub quadratic: f64,
}

/// Phase value and gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSample {
    pub phi: f64,
    pub grad: [f64; 3],
}

impl PhaseTable {
    fn build(model: &PhaseModel, a_min: f64, r_max: f64, step: f64) -> Result<Self> {
        let quadratic = match model.kind {
            PhaseKind::Iterative { quadratic: true, .. } => -0.5,
            _ => 0.0,
        };
        let a0 = a_min - 2.0 * step;
        let na = ((r_max + 2.0 * step - a0) / step).ceil() as usize + 2;
        let nb = ((r_max + 2.0 * step) / step).ceil() as usize + 3;
        let fam = model.family;
        let zero = model.is_zero();
        let quad = &model.quad;
        let quad2 = quad.with_tail_exponent(2.0 * decay_exponent(&fam))?;
        use rayon::prelude::*;
        let data: Vec<[f64; 6]> = (0..na * nb)
            .into_par_iter()
            .map(|idx| {
                if zero {
                    return Ok([0.0; 6]);
                }
                let a = a0 + (idx / nb) as f64 * step;
                let b = (idx % nb) as f64 * step;
                let s_star = (-a).max(0.0);
                let b2 = b * b;
                let first = quad.integrate(s_star, |s| {
                    let sa = s + a;
                    let p = fam.radial(sa * sa + b2);
                    let p0 = fam.radial(s * s);
                    [p.f - p0.f, p.d1 * sa, p.d1]
                })?;
                let second = if quadratic != 0.0 {
                    quad2
                        .integrate(s_star, |s| {
                            let sa = s + a;
                            let p = fam.radial(sa * sa + b2);
                            let p0 = fam.radial(s * s);
                            [p.f * p.f - p0.f * p0.f, 2.0 * p.f * p.d1 * sa, 2.0 * p.f * p.d1]
                        })?
                        .value
                } else {
                    [0.0; 3]
                };
                let v = first.value;
                Ok([v[0], v[1], v[2], second[0], second[1], second[2]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhaseTable { a0, step, na, nb, data, sign: model.sign, branch: model.branch, mass: model.mass, quadratic })
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let ta = (a - self.a0) / self.step;
        let tb = b / self.step;
        ta >= 1.0 && ta < (self.na - 3) as f64 && tb < (self.nb - 3) as f64
    }

    #[inline]
    fn weights(t: f64) -> [f64; 4] {
        let tm1 = t - 1.0;
        let tm2 = t - 2.0;
        let tp1 = t + 1.0;
        [-t * tm1 * tm2 / 6.0, tp1 * tm1 * tm2 * 0.5, -tp1 * t * tm2 * 0.5, tp1 * t * tm1 / 6.0]
    }

    /// Cubic Lagrange interpolation of the six tables at (a, b).
    #[inline]
    pub fn interp(&self, a: f64, b: f64) -> [f64; 6] {
        let ta = (a - self.a0) / self.step;
        let tb = b / self.step;
        let ia = ta as usize;
        let ib = tb as usize;
        let wa = Self::weights(ta - ia as f64);
        let wb = Self::weights(tb - ib as f64);
        let mut out = [0.0; 6];
        for (da, wa) in wa.iter().enumerate() {
            let row = (ia - 1 + da) * self.nb;
            let cells: [&[f64; 6]; 4] = if ib >= 1 {
                let c: &[[f64; 6]; 4] = self.data[row + ib - 1..row + ib + 3].try_into().unwrap();
                [&c[0], &c[1], &c[2], &c[3]]
            } else {
                // even in b
                let c: &[[f64; 6]; 3] = self.data[row..row + 3].try_into().unwrap();
                [&c[1], &c[0], &c[1], &c[2]]
            };
            let mut acc = [0.0; 6];
            for k in 0..6 {
                acc[k] = wb[0] * cells[0][k] + wb[1] * cells[1][k] + wb[2] * cells[2][k] + wb[3] * cells[3][k];
            }
            for k in 0..6 {
                out[k] += wa * acc[k];
            }
        }
        out
    }

    /// Φ and ∇Φ at (x, ζ) given |ζ|, ζ̂ and |x|².
    #[inline]
    pub fn sample(&self, x: &[f64; 3], r2: f64, zeta_norm: f64, zhat: &[f64; 3]) -> Option<PhaseSample> {
        let s = self.sign.value();
        let e = [s * zhat[0], s * zhat[1], s * zhat[2]];
        let a = dot(x, &e);
        let b = (r2 - a * a).max(0.0).sqrt();
        if !self.covers(a, b) {
            return None;
        }
        let t = self.interp(a, b);
        let eb = self.branch.sign() * (zeta_norm * zeta_norm + self.mass * self.mass).sqrt();
        let c2 = self.quadratic;
        let pref = s / zeta_norm;
        let g = eb * t[0] + c2 * t[3];
        let ga = eb * t[1] + c2 * t[4];
        let hb = eb * t[2] + c2 * t[5];
        let grad = [
            pref * (ga * e[0] + hb * (x[0] - a * e[0])),
            pref * (ga * e[1] + hb * (x[1] - a * e[1])),
            pref * (ga * e[2] + hb * (x[2] - a * e[2])),
        ];
        Some(PhaseSample { phi: pref * g, grad })
    }
}

/// Random x with ±x̂·ζ̂ ≥ ν at radius r.
pub fn cone_point<R: Rng>(rng: &mut R, zeta: &[f64; 3], sign: Sign, nu: f64, r: f64) -> [f64; 3] {
    let zn = dot(zeta, zeta).sqrt();
    loop {
        let d = random_unit(rng);
        let tau = sign.value() * dot(&d, zeta) / zn;
        if tau > nu {
            return [r * d[0], r * d[1], r * d[2]];
        }
    }
}

/// Random momentum with |ζ| in [k_lo, k_hi].
pub fn window_momentum<R: Rng>(rng: &mut R, k_lo: f64, k_hi: f64) -> [f64; 3] {
    let d = random_unit(rng);
    let k = rng.gen_range(k_lo..=k_hi);
    [k * d[0], k * d[1], k * d[2]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundReport {
    pub radii: Vec<f64>,
    pub max_phase: Vec<f64>,
    pub max_grad: Vec<f64>,
    pub phase_fit: BoundFit,
    pub grad_fit: BoundFit,
    pub pass: bool,
}

pub const PHASE_BOUND_SLACK: f64 = 0.1;

/// Fits max|Φ| and max|∇Φ| against ⟨x⟩ on cone samples over log-spaced radii.
pub fn phase_bound_check(
    model: &PhaseModel,
    nu: f64,
    sample_count: usize,
    radii_range: (f64, f64),
    n_radii: usize,
    k_range: (f64, f64),
    seed: u64,
) -> Result<PhaseBoundReport> {
    if sample_count == 0 || n_radii < 3 {
        return Err(LabError::numerical("phase_bound_check", "insufficient cone samples"));
    }
    let rho = model.family.rho;
    let radii = logspace(radii_range.0, radii_range.1, n_radii);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<([f64; 3], [f64; 3])> = (0..sample_count)
        .map(|_| {
            let z = window_momentum(&mut rng, k_range.0, k_range.1);
            let d = cone_point(&mut rng, &z, model.sign, nu, 1.0);
            (z, d)
        })
        .collect();
    let mut max_phase = Vec::with_capacity(n_radii);
    let mut max_grad = Vec::with_capacity(n_radii);
    for &r in &radii {
        let mut mp: f64 = 0.0;
        let mut mg: f64 = 0.0;
        for (z, d) in &samples {
            let x = [r * d[0], r * d[1], r * d[2]];
            let (p, g) = model.phase_and_grad(&x, z)?;
            mp = mp.max(p.abs());
            mg = mg.max(norm2(&g).sqrt());
        }
        max_phase.push(mp);
        max_grad.push(mg);
    }
    let br: Vec<f64> = radii.iter().map(|&r| japanese(r)).collect();
    let fit = |label: &str, y: &[f64], bound: f64| -> BoundFit {
        if y.iter().all(|&v| v == 0.0) {
            return BoundFit {
                label: label.into(),
                exponent: None,
                bound,
                constant: 0.0,
                pass: true,
                note: "identically zero".into(),
            };
        }
        let p = loglog_slope(&br, y);
        let c = y.iter().zip(&br).map(|(v, b)| v / b.powf(bound - PHASE_BOUND_SLACK)).fold(0.0, f64::max);
        BoundFit {
            label: label.into(),
            exponent: p,
            bound,
            constant: c,
            pass: p.map_or(false, |p| p <= bound + PHASE_BOUND_SLACK),
            note: String::new(),
        }
    };
    let phase_fit = fit("phase", &max_phase, 1.0 - rho);
    let grad_fit = fit("gradient", &max_grad, -rho);
    let pass = phase_fit.pass && grad_fit.pass;
    Ok(PhaseBoundReport { radii, max_phase, max_grad, phase_fit, grad_fit, pass })
}

/// |∇Φ − FD(Φ)| / (1 + |∇Φ|) on random cone points, with sixth-order central differences.
pub fn gradient_fd_check(
    model: &PhaseModel,
    nu: f64,
    sample_count: usize,
    radii_range: (f64, f64),
    k_range: (f64, f64),
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const C: [f64; 3] = [45.0, -9.0, 1.0];
    (0..sample_count)
        .map(|_| {
            let z = window_momentum(&mut rng, k_range.0, k_range.1);
            let r = rng.gen_range(radii_range.0..=radii_range.1);
            let x = cone_point(&mut rng, &z, model.sign, nu, r);
            let g = model.grad(&x, &z)?;
            let step = 0.02 * japanese(r);
            let mut err: f64 = 0.0;
            for i in 0..3 {
                let mut d = 0.0;
                for (j, c) in C.iter().enumerate() {
                    let h = (j + 1) as f64 * step;
                    let mut xp = x;
                    let mut xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    d += c * (model.phase(&xp, &z)? - model.phase(&xm, &z)?);
                }
                err = err.max((g[i] - d / (60.0 * step)).abs());
            }
            Ok(err / (1.0 + norm2(&g).sqrt()))
        })
        .collect()
}

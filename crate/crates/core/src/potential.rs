//! Catalog of radial, h-parameterized long-range potentials with closed-form
//! derivatives.

use crate::error::{LabError, Result};
use crate::fit::{japanese, logspace, loglog_slope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum FamilyKind {
    /// κ⟨x⟩^{-ρ}(1 + a e^{-⟨x⟩/h})
    Relax { a: f64 },
    /// κ⟨x⟩^{-ρ} + h^{-1}⟨x⟩^{-ρ'}
    Additive { rho2: f64 },
    /// κ⟨x⟩^{-ρ}
    Static,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialFamily {
    pub kind: FamilyKind,
    pub rho: f64,
    pub kappa: f64,
    /// `f64::INFINITY` selects the limit member.
    pub h: f64,
}

/// Radial profile f(r) with f'(r)/r and f''(r).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Radial {
    pub f: f64,
    pub d1: f64,
    pub d2: f64,
}

/// u^{-p} with u = ⟨r⟩.
#[inline]
fn bracket_power(r2: f64, p: f64) -> Radial {
    let u2 = 1.0 + r2;
    let g = u2.powf(-0.5 * p);
    let gu2 = g / u2;
    Radial { f: g, d1: -p * gu2, d2: -p * gu2 / u2 * (1.0 - (p + 1.0) * r2) }
}

pub const FAMILY_IDS: [&str; 3] = ["relax", "additive", "static"];

pub fn make_family(family_id: &str, rho: f64, kappa: f64, h: f64, extra: Option<f64>) -> Result<PotentialFamily> {
    if !(rho.is_finite() && rho > 1.0 / 3.0) {
        return Err(LabError::config(
            "potential.rho",
            format!("rho must exceed 1/3 (got {rho}); the phase uses at most N = 2 terms, which needs 3*rho > 1"),
        ));
    }
    if !kappa.is_finite() {
        return Err(LabError::config("potential.kappa", "kappa must be finite"));
    }
    if !(h > 0.0) || h.is_nan() {
        return Err(LabError::config("potential.h", format!("h must be positive or inf (got {h})")));
    }
    let kind = match family_id {
        "relax" => {
            let a = extra.unwrap_or(1.0);
            if !a.is_finite() || a < 0.0 {
                return Err(LabError::config("potential.extra", "relax amplitude a must be finite and >= 0"));
            }
            FamilyKind::Relax { a }
        }
        "additive" => {
            let rho2 = extra.unwrap_or(2.0 * rho);
            if !rho2.is_finite() || rho2 < rho {
                return Err(LabError::config("potential.extra", format!("additive exponent must be >= rho (got {rho2})")));
            }
            FamilyKind::Additive { rho2 }
        }
        "static" => FamilyKind::Static,
        other => {
            return Err(LabError::config(
                "potential.family",
                format!("unknown family `{other}`; expected one of {}", FAMILY_IDS.join(", ")),
            ))
        }
    };
    Ok(PotentialFamily { kind, rho, kappa, h })
}

impl PotentialFamily {
    pub fn family_id(&self) -> &'static str {
        match self.kind {
            FamilyKind::Relax { .. } => "relax",
            FamilyKind::Additive { .. } => "additive",
            FamilyKind::Static => "static",
        }
    }

    pub fn extra(&self) -> Option<f64> {
        match self.kind {
            FamilyKind::Relax { a } => Some(a),
            FamilyKind::Additive { rho2 } => Some(rho2),
            FamilyKind::Static => None,
        }
    }

    pub fn with_h(&self, h: f64) -> Self {
        PotentialFamily { h, ..*self }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        PotentialFamily { kappa, ..*self }
    }

    pub fn limit(&self) -> Self {
        self.with_h(f64::INFINITY)
    }

    pub fn depends_on_h(&self) -> bool {
        !matches!(self.kind, FamilyKind::Static)
    }

    /// Radial profile as a function of r².
    pub fn radial(&self, r2: f64) -> Radial {
        let k = self.kappa;
        let base = bracket_power(r2, self.rho);
        match self.kind {
            FamilyKind::Static => Radial { f: k * base.f, d1: k * base.d1, d2: k * base.d2 },
            FamilyKind::Relax { a } => {
                if self.h.is_infinite() {
                    let c = k * (1.0 + a);
                    return Radial { f: c * base.f, d1: c * base.d1, d2: c * base.d2 };
                }
                let h = self.h;
                let u = (1.0 + r2).sqrt();
                let e = (-u / h).exp();
                let e_d1 = -e / (u * h);
                let e_d2 = -e / (h * u * u * u) + r2 * e / (h * h * u * u);
                let m = 1.0 + a * e;
                Radial {
                    f: k * base.f * m,
                    d1: k * (base.d1 * m + a * base.f * e_d1),
                    d2: k * (base.d2 * m + 2.0 * a * r2 * base.d1 * e_d1 + a * base.f * e_d2),
                }
            }
            FamilyKind::Additive { rho2 } => {
                let mut out = Radial { f: k * base.f, d1: k * base.d1, d2: k * base.d2 };
                if self.h.is_finite() {
                    let s = bracket_power(r2, rho2);
                    let w = 1.0 / self.h;
                    out.f += w * s.f;
                    out.d1 += w * s.d1;
                    out.d2 += w * s.d2;
                }
                out
            }
        }
    }

    pub fn value(&self, x: &[f64; 3]) -> f64 {
        self.radial(norm2(x)).f
    }

    pub fn gradient(&self, x: &[f64; 3]) -> [f64; 3] {
        let d1 = self.radial(norm2(x)).d1;
        [d1 * x[0], d1 * x[1], d1 * x[2]]
    }

    pub fn hessian(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let r2 = norm2(x);
        let p = self.radial(r2);
        let mut h = [[0.0; 3]; 3];
        let c = if r2 > 0.0 { (p.d2 - p.d1) / r2 } else { 0.0 };
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = c * x[i] * x[j] + if i == j { p.d1 } else { 0.0 };
            }
        }
        h
    }

    /// Scalar bounds on |V|, |∇V| and the Hessian spectral norm.
    pub fn derivative_magnitudes(&self, x: &[f64; 3]) -> [f64; 3] {
        let g = self.gradient(x);
        let h = self.hessian(x);
        let r2 = norm2(x);
        let p = self.radial(r2);
        // radial eigenvalue f'' and tangential f'/r; cross-check with the explicit matrix
        let hs = p.d2.abs().max(p.d1.abs());
        let hmax = h.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        [self.value(x).abs(), norm2(&g).sqrt(), hs.max(hmax)]
    }
}

#[inline]
pub fn norm2(x: &[f64; 3]) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayOrderFit {
    pub order: usize,
    pub fitted_exponent: Option<f64>,
    pub target_exponent: f64,
    /// max over h and directions of |∂^k V| at each radius
    pub envelope: Vec<f64>,
    pub constant: f64,
    pub constants_by_h: Vec<(f64, f64)>,
    pub probe_constants: Vec<(f64, f64)>,
    pub uniform_in_h: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub family_id: String,
    pub rho: f64,
    pub kappa: f64,
    pub radii: Vec<f64>,
    pub orders: Vec<DecayOrderFit>,
    pub pass: bool,
    pub note: String,
}

pub const DECAY_H_SET: [f64; 4] = [1.0, 10.0, 100.0, f64::INFINITY];
const DECAY_H_PROBES: [f64; 3] = [1e3, 1e4, 1e6];
pub const DECAY_SLACK: f64 = 0.1;

/// Fits the decay exponent of max_h |∂^α V_h| against ⟨x⟩ on log-spaced radii in [1, 10³].
pub fn verify_decay(family: &PotentialFamily, order_max: usize, sample_count: usize, seed: u64) -> Result<DecayReport> {
    if order_max > 2 {
        return Err(LabError::config("order_max", "derivative orders above 2 are not checked"));
    }
    let n_r = sample_count.max(4);
    let radii = logspace(1.0, 1e3, n_r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<[f64; 3]> = (0..8).map(|_| random_unit(&mut rng)).collect();

    let sample = |fam: &PotentialFamily, r: f64, d: &[f64; 3]| -> Result<[f64; 3]> {
        let x = [r * d[0], r * d[1], r * d[2]];
        let m = fam.derivative_magnitudes(&x);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LabError::numerical(
                "verify_decay",
                format!("non-finite derivative at x = {x:?}, h = {}", fam.h),
            ));
        }
        Ok(m)
    };

    // env[k][i] = max over h and directions at radius i; consts[k][hi] = sup_x |∂^k V| ⟨x⟩^{ρ+k}
    let mut env = vec![vec![0.0f64; n_r]; 3];
    let mut consts = vec![vec![0.0f64; DECAY_H_SET.len()]; 3];
    let mut probes = vec![vec![0.0f64; DECAY_H_PROBES.len()]; 3];
    for (i, &r) in radii.iter().enumerate() {
        let w = japanese(r);
        for d in &dirs {
            for (hi, &h) in DECAY_H_SET.iter().enumerate() {
                let m = sample(&family.with_h(h), r, d)?;
                for k in 0..=order_max {
                    env[k][i] = env[k][i].max(m[k]);
                    consts[k][hi] = consts[k][hi].max(m[k] * w.powf(family.rho + k as f64));
                }
            }
            for (pi, &h) in DECAY_H_PROBES.iter().enumerate() {
                let m = sample(&family.with_h(h), r, d)?;
                for k in 0..=order_max {
                    probes[k][pi] = probes[k][pi].max(m[k] * w.powf(family.rho + k as f64));
                }
            }
        }
    }

    let brackets: Vec<f64> = radii.iter().map(|&r| japanese(r)).collect();
    let mut orders = Vec::new();
    for k in 0..=order_max {
        let target = -family.rho - k as f64;
        let c = consts[k].iter().cloned().fold(0.0, f64::max);
        let zero = env[k].iter().all(|&v| v == 0.0);
        let fitted = if zero { None } else { loglog_slope(&brackets, &env[k]) };
        let uniform = probes[k].iter().all(|&p| p <= 1.1 * c + 1e-300);
        let exp_ok = match fitted {
            None => zero,
            Some(p) => p <= target + DECAY_SLACK,
        };
        orders.push(DecayOrderFit {
            order: k,
            fitted_exponent: fitted,
            target_exponent: target,
            envelope: env[k].clone(),
            constant: c,
            constants_by_h: DECAY_H_SET.iter().cloned().zip(consts[k].iter().cloned()).collect(),
            probe_constants: DECAY_H_PROBES.iter().cloned().zip(probes[k].iter().cloned()).collect(),
            uniform_in_h: uniform,
            pass: exp_ok && uniform,
        });
    }
    let pass = orders.iter().all(|o| o.pass);
    let note = if family.kappa == 0.0 { "identically zero".to_string() } else { String::new() };
    Ok(DecayReport {
        family_id: family.family_id().to_string(),
        rho: family.rho,
        kappa: family.kappa,
        radii,
        orders,
        pass,
        note,
    })
}

pub fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = norm2(&v);
        if n > 1e-4 && n <= 1.0 {
            let s = 1.0 / n.sqrt();
            return [v[0] * s, v[1] * s, v[2] * s];
        }
    }
}

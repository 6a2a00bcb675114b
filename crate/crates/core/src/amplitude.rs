//! Matrix amplitude P = (I − S)^{-1} p0, the cone cut-off and the energy window.

use crate::algebra::{alpha_dot, apply_projection, dirac_matrices, eigenprojections, eta, Branch, Matrix4C, Momentum, Spinor};
use crate::eikonal::{cone_point, window_momentum, PhaseModel, Sign};
use crate::error::{LabError, Result};
use crate::fit::{japanese, logspace, loglog_slope, BoundFit};
use crate::potential::{norm2, PotentialFamily};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// C^∞ step: 0 for u ≤ 0, 1 for u ≥ 1.
#[inline]
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// θ(x)·ω_±(⟨x̂, ζ̂⟩).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeCutoff {
    pub nu: f64,
    pub r0: f64,
    pub r1: f64,
    pub omega_halfwidth: f64,
    pub omega_offset: f64,
}

impl Default for ConeCutoff {
    fn default() -> Self {
        ConeCutoff { nu: 0.0, r0: 1.0, r1: 2.0, omega_halfwidth: 0.2, omega_offset: 0.0 }
    }
}

impl ConeCutoff {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > -1.0 && self.nu < 1.0) {
            return Err(LabError::config("cutoff.nu", format!("nu must lie in (-1, 1) (got {})", self.nu)));
        }
        if !(self.r0 >= 0.0 && self.r1 > self.r0) {
            return Err(LabError::config("cutoff.r1", "need 0 <= r0 < r1"));
        }
        if !(self.omega_halfwidth > 0.0) {
            return Err(LabError::config("cutoff.omega_halfwidth", "halfwidth must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn theta(&self, r: f64) -> f64 {
        smooth_step((r - self.r0) / (self.r1 - self.r0))
    }

    /// ω_+(τ); ω_−(τ) = ω_+(−τ).
    #[inline]
    pub fn omega(&self, tau: f64, sign: Sign) -> f64 {
        let t = sign.value() * tau;
        let lo = self.nu + self.omega_offset - self.omega_halfwidth;
        smooth_step((t - lo) / (2.0 * self.omega_halfwidth))
    }

    /// Smallest signed cosine where ω does not vanish.
    pub fn tau_min(&self) -> f64 {
        self.nu + self.omega_offset - self.omega_halfwidth
    }

    pub fn value(&self, x: &[f64; 3], zeta: &[f64; 3], sign: Sign) -> f64 {
        let r = norm2(x).sqrt();
        let th = self.theta(r);
        if th == 0.0 {
            return 0.0;
        }
        let zn = norm2(zeta).sqrt();
        if zn == 0.0 {
            return 0.0;
        }
        let tau = (x[0] * zeta[0] + x[1] * zeta[1] + x[2] * zeta[2]) / (r * zn);
        th * self.omega(tau, sign)
    }
}

/// ψ(s), s = |ζ|²: plateau on [μ_lo² − m², μ_hi² − m²] with ramps of width `ramp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub ramp: f64,
    pub mass: f64,
}

impl EnergyWindow {
    pub fn new(delta_lo: f64, delta_hi: f64, ramp: f64, mass: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(LabError::config("mass", "mass must be positive"));
        }
        if !(delta_lo > mass && delta_hi > delta_lo) {
            return Err(LabError::config(
                "window.delta_lo",
                format!("window must satisfy m < lo < hi (got [{delta_lo}, {delta_hi}], m = {mass})"),
            ));
        }
        if !(ramp > 0.0) {
            return Err(LabError::config("window.ramp", "ramp must be positive"));
        }
        Ok(EnergyWindow { delta_lo, delta_hi, ramp, mass })
    }

    pub fn plateau(&self) -> (f64, f64) {
        let m2 = self.mass * self.mass;
        (self.delta_lo * self.delta_lo - m2, self.delta_hi * self.delta_hi - m2)
    }

    /// [s1 − w, s2 + w]
    pub fn support(&self) -> (f64, f64) {
        let (a, b) = self.plateau();
        ((a - self.ramp).max(0.0), b + self.ramp)
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        let (a, b) = self.plateau();
        let w = self.ramp;
        if s < a {
            smooth_step((s - (a - w)) / w)
        } else if s > b {
            smooth_step(((b + w) - s) / w)
        } else {
            1.0
        }
    }

    /// Rejects windows whose support reaches the Nyquist radius.
    pub fn check_nyquist(&self, k_nyquist: f64) -> Result<()> {
        let (_, hi) = self.support();
        if hi.sqrt() >= k_nyquist {
            return Err(LabError::config(
                "window.delta_hi",
                format!(
                    "window support |zeta| <= {:.4} exceeds the momentum grid Nyquist radius {:.4}; use a finer grid or a narrower window",
                    hi.sqrt(),
                    k_nyquist
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffModel {
    pub cone: ConeCutoff,
    pub window: EnergyWindow,
}

impl CutoffModel {
    pub fn cutoff_value(&self, x: &[f64; 3], zeta: &[f64; 3], sign: Sign) -> f64 {
        self.cone.value(x, zeta, sign)
    }

    pub fn energy_window(&self, s: f64) -> f64 {
        self.window.value(s)
    }
}

pub const DEFAULT_MARGIN: f64 = 0.05;

/// P = (I − S)^{-1} p0 with S = (2η_b)^{-1}(V + ∇Φ·α), η_b = ±η by branch.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeModel {
    pub phase: PhaseModel,
    pub family: PotentialFamily,
    pub branch: Branch,
    pub mass: f64,
    pub margin: f64,
}

/// S = s0 I + b·α.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SFactors {
    pub s0: f64,
    pub b: [f64; 3],
}

impl SFactors {
    #[inline]
    pub fn new(v: f64, grad: &[f64; 3], eta_b: f64) -> Self {
        let c = 0.5 / eta_b;
        SFactors { s0: c * v, b: [c * grad[0], c * grad[1], c * grad[2]] }
    }

    /// Spectral radius |s0| + |b|.
    #[inline]
    pub fn radius(&self) -> f64 {
        self.s0.abs() + norm2(&self.b).sqrt()
    }

    /// (I − S)^{-1} v = (c + b·α) v / (c² − |b|²), c = 1 − s0.
    #[inline]
    pub fn solve(&self, v: &Spinor) -> Spinor {
        let c = 1.0 - self.s0;
        let d = 1.0 / (c * c - norm2(&self.b));
        let bv = alpha_dot(&self.b, v);
        [(v[0] * c + bv[0]) * d, (v[1] * c + bv[1]) * d, (v[2] * c + bv[2]) * d, (v[3] * c + bv[3]) * d]
    }

    pub fn matrix(&self) -> Matrix4C {
        let (alpha, _) = dirac_matrices();
        let mut s = Matrix4C::identity().scale_re(self.s0);
        for j in 0..3 {
            s = s + alpha[j].scale_re(self.b[j]);
        }
        s
    }
}

impl AmplitudeModel {
    pub fn new(phase: PhaseModel, family: PotentialFamily, branch: Branch, mass: f64) -> Self {
        AmplitudeModel { phase, family, branch, mass, margin: DEFAULT_MARGIN }
    }

    pub fn with_branch(&self, branch: Branch) -> Self {
        let mut m = self.clone();
        m.branch = branch;
        m.phase.branch = branch;
        m
    }

    pub fn eta_b(&self, zeta: &[f64; 3]) -> f64 {
        self.branch.sign() * eta(zeta, self.mass)
    }

    pub fn factors(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<SFactors> {
        let g = self.phase.grad(x, zeta)?;
        Ok(SFactors::new(self.family.value(x), &g, self.eta_b(zeta)))
    }

    pub fn s_matrix(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<Matrix4C> {
        Ok(self.factors(x, zeta)?.matrix())
    }

    pub fn p0(&self, zeta: &[f64; 3]) -> Matrix4C {
        let e = eigenprojections(&Momentum::new(*zeta, self.mass));
        match self.branch {
            Branch::Positive => e.p_plus,
            Branch::Negative => e.p_minus,
        }
    }

    pub fn check_margin(&self, f: &SFactors, x: &[f64; 3], zeta: &[f64; 3]) -> Result<()> {
        let r = f.radius();
        if !(r < 1.0 - self.margin) {
            return Err(LabError::numerical(
                "amplitude",
                format!("I - S near singular at x = {x:?}, zeta = {zeta:?}: |S| = {r:.4} (margin {})", self.margin),
            ));
        }
        Ok(())
    }

    /// Dense solve; the kernel uses `SFactors::solve` instead.
    pub fn amplitude(&self, x: &[f64; 3], zeta: &[f64; 3]) -> Result<Matrix4C> {
        let f = self.factors(x, zeta)?;
        self.check_margin(&f, x, zeta)?;
        let inv = (Matrix4C::identity() - f.matrix())
            .inverse()
            .ok_or_else(|| LabError::numerical("amplitude", format!("singular I - S at x = {x:?}, zeta = {zeta:?}")))?;
        Ok(inv * self.p0(zeta))
    }

    pub fn apply(&self, x: &[f64; 3], zeta: &[f64; 3], v: &Spinor) -> Result<Spinor> {
        let f = self.factors(x, zeta)?;
        self.check_margin(&f, x, zeta)?;
        Ok(f.solve(&apply_projection(zeta, self.mass, self.branch, v)))
    }
}

/// Fits max‖P − p0‖_F along cone rays against ⟨x⟩; passes iff the exponent ≤ −ρ + 0.1.
pub fn amplitude_decay_check(
    model: &AmplitudeModel,
    sign: Sign,
    nu: f64,
    sample_count: usize,
    radii_range: (f64, f64),
    n_radii: usize,
    k_range: (f64, f64),
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, BoundFit)> {
    let rho = model.family.rho;
    let radii = logspace(radii_range.0, radii_range.1, n_radii);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<([f64; 3], [f64; 3])> = (0..sample_count)
        .map(|_| {
            let z = window_momentum(&mut rng, k_range.0, k_range.1);
            (z, cone_point(&mut rng, &z, sign, nu, 1.0))
        })
        .collect();
    let mut dist = Vec::with_capacity(n_radii);
    for &r in &radii {
        let mut m: f64 = 0.0;
        for (z, d) in &samples {
            let x = [r * d[0], r * d[1], r * d[2]];
            let p = model.amplitude(&x, z)?;
            m = m.max((p - model.p0(z)).frobenius());
        }
        dist.push(m);
    }
    let br: Vec<f64> = radii.iter().map(|&r| japanese(r)).collect();
    let bound = -rho;
    let fit = if dist.iter().all(|&d| d == 0.0) {
        BoundFit { label: "amplitude".into(), exponent: None, bound, constant: 0.0, pass: true, note: "identically zero".into() }
    } else {
        let p = loglog_slope(&br, &dist);
        let c = dist.iter().zip(&br).map(|(d, b)| d * b.powf(rho)).fold(0.0, f64::max);
        BoundFit {
            label: "amplitude".into(),
            exponent: p,
            bound,
            constant: c,
            pass: p.map_or(false, |p| p <= bound + 0.1),
            note: String::new(),
        }
    };
    Ok((radii, dist, fit))
}

/// Truncated Neumann series (I + S + … + S^n) p0.
pub fn neumann_amplitude(s: &Matrix4C, p0: &Matrix4C, n: usize) -> Matrix4C {
    let mut acc = Matrix4C::identity();
    let mut pow = Matrix4C::identity();
    for _ in 0..n {
        pow = pow * *s;
        acc = acc + pow;
    }
    acc * *p0
}

pub fn spinor(v: [(f64, f64); 4]) -> Spinor {
    [C64::new(v[0].0, v[0].1), C64::new(v[1].0, v[1].1), C64::new(v[2].0, v[2].1), C64::new(v[3].0, v[3].1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{phase_build, phase_zero};
    use crate::potential::make_family;
    use crate::quadrature::RayQuadratureParams;

    #[test]
    fn step_limits_and_symmetry() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        for u in [0.1, 0.3, 0.77] {
            assert!((smooth_step(u) + smooth_step(1.0 - u) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cutoff_endpoints() {
        let c = ConeCutoff::default();
        let z = [0.3, 0.4, 1.2];
        let zn = norm2(&z).sqrt();
        let far = [50.0 * z[0] / zn, 50.0 * z[1] / zn, 50.0 * z[2] / zn];
        assert_eq!(c.value(&[0.0; 3], &z, Sign::Plus), 0.0);
        assert_eq!(c.value(&far, &z, Sign::Plus), 1.0);
        assert_eq!(c.value(&far, &z, Sign::Minus), 0.0);
        assert_eq!(c.value(&[-far[0], -far[1], -far[2]], &z, Sign::Minus), 1.0);
    }

    #[test]
    fn window_plateau() {
        let w = EnergyWindow::new(1.2, 2.0, 0.3, 1.0).unwrap();
        let (a, b) = w.plateau();
        assert!((a - 0.44).abs() < 1e-15 && (b - 3.0).abs() < 1e-15);
        assert_eq!(w.value(0.44), 1.0);
        assert_eq!(w.value(3.0), 1.0);
        assert_eq!(w.value(10.0), 0.0);
        assert_eq!(w.value(0.0), 0.0);
        assert!(w.check_nyquist(1.5).is_err());
        assert!(w.check_nyquist(2.5).is_ok());
    }

    #[test]
    fn zero_potential_amplitude_is_projection() {
        let fam = make_family("static", 0.9, 0.0, 1.0, None).unwrap();
        let m = AmplitudeModel::new(phase_zero(Sign::Plus, Branch::Positive, 1.0), fam, Branch::Positive, 1.0);
        let z = [0.5, -0.2, 0.9];
        let x = [3.0, 1.0, 2.0];
        assert_eq!(m.s_matrix(&x, &z).unwrap(), Matrix4C::zero());
        assert!((m.amplitude(&x, &z).unwrap() - m.p0(&z)).max_abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_dense_solve() {
        let fam = make_family("relax", 0.9, 0.2, 4.0, None).unwrap();
        let ph = phase_build(&fam, 4.0, Sign::Plus, 1, Branch::Positive, 1.0, &RayQuadratureParams::default()).unwrap();
        for br in [Branch::Positive, Branch::Negative] {
            let m = AmplitudeModel::new(ph.with_sign_branch(Sign::Plus, br), fam, br, 1.0);
            let z = [0.8, 0.3, -0.5];
            let x = [4.0, 2.0, -1.0];
            let v = spinor([(1.0, 0.2), (-0.3, 0.5), (0.1, 0.0), (0.7, -0.4)]);
            let dense = m.amplitude(&x, &z).unwrap().apply(&v);
            let fast = m.apply(&x, &z, &v).unwrap();
            for i in 0..4 {
                assert!((dense[i] - fast[i]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn margin_violation_names_point() {
        let fam = make_family("static", 0.9, 5.0, 1.0, None).unwrap();
        let m = AmplitudeModel::new(phase_zero(Sign::Plus, Branch::Positive, 1.0), fam, Branch::Positive, 1.0);
        let e = m.amplitude(&[0.0; 3], &[0.1, 0.0, 0.0]).unwrap_err();
        assert!(e.to_string().contains("zeta"));
    }
}

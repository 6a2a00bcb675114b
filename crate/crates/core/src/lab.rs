//! Wave packets, time-dependent wave-operator approximants
//! W(t) = U_h(−t) J U0(t) and the convergence studies built on them.

use crate::algebra::{apply_projection, spinor_norm_sqr, Branch, Spinor};
use crate::amplitude::{AmplitudeModel, ConeCutoff, EnergyWindow};
use crate::eikonal::{minimal_terms, phase_build, phase_hfree_example, phase_simple_longrange, Sign};
use crate::error::{LabError, Result};
use crate::fit::loglog_slope;
use crate::grid::{GridGeom, Space, SpinorGrid};
use crate::potential::{norm2, PotentialFamily};
use crate::propagate::{boundary_mass, free_evolve, StrangPropagator, BOUNDARY_MASS_TOL};
use crate::psdo::{multiplier_fastpath, AmplitudeSpec, EngineOptions, Identification, PhaseSpec, Projector, SymbolSpec};
use crate::quadrature::RayQuadratureParams;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Fraction of packet mass that must sit on the window plateau.
pub const PLATEAU_FRACTION: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacket {
    pub zeta0: [f64; 3],
    /// momentum width: |ĝ| ∝ exp(−|ζ−ζ0|²/(4σ²))
    pub sigma: f64,
    pub polarization: Spinor,
    pub center: [f64; 3],
}

impl WavePacket {
    pub fn new(zeta0: [f64; 3], sigma: f64) -> Self {
        let mut polarization = [C64::new(0.0, 0.0); 4];
        polarization[0] = C64::new(1.0, 0.0);
        WavePacket { zeta0, sigma, polarization, center: [0.0; 3] }
    }
}

/// Three packets with distinct momenta and polarizations along the first axis.
pub fn default_panel(sigma: f64) -> Vec<WavePacket> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        WavePacket { polarization: [one, zero, zero, zero], ..WavePacket::new([1.2, 0.0, 0.0], sigma) },
        WavePacket { polarization: [zero, one, zero, zero], ..WavePacket::new([1.1, 0.0, 0.0], sigma) },
        WavePacket {
            polarization: [one * s, zero, C64::new(0.0, s), zero],
            ..WavePacket::new([1.3, 0.0, 0.0], sigma)
        },
    ]
}

/// Normalised Gaussian packet in the branch-projected range of the window.
pub fn make_wavepacket(
    geom: &GridGeom,
    packet: &WavePacket,
    window: &EnergyWindow,
    mass: f64,
    branch: Branch,
) -> Result<SpinorGrid> {
    if !(packet.sigma > 0.0 && packet.sigma.is_finite()) {
        return Err(LabError::config("packet.sigma", format!("sigma must be positive (got {})", packet.sigma)));
    }
    if spinor_norm_sqr(&packet.polarization) == 0.0 {
        return Err(LabError::config("packet.polarization", "polarization is zero"));
    }
    let zs = geom.zeta_points();
    let (lo, hi) = window.plateau();
    let mut total = 0.0;
    let mut on_plateau = 0.0;
    let data: Vec<Spinor> = zs
        .iter()
        .map(|z| {
            let d = [z[0] - packet.zeta0[0], z[1] - packet.zeta0[1], z[2] - packet.zeta0[2]];
            let amp = (-norm2(&d) / (4.0 * packet.sigma * packet.sigma)).exp();
            let shift = C64::from_polar(amp, -(z[0] * packet.center[0] + z[1] * packet.center[1] + z[2] * packet.center[2]));
            let p = apply_projection(z, mass, branch, &packet.polarization);
            let v = [p[0] * shift, p[1] * shift, p[2] * shift, p[3] * shift];
            let w = spinor_norm_sqr(&v);
            total += w;
            let s = norm2(z);
            if s >= lo && s <= hi {
                on_plateau += w;
            }
            v
        })
        .collect();
    if total == 0.0 {
        return Err(LabError::config("packet.zeta0", "packet has no mass on the grid"));
    }
    if on_plateau / total < PLATEAU_FRACTION {
        return Err(LabError::config(
            "packet.sigma",
            format!(
                "only {:.5} of the packet lies on the window plateau (need {PLATEAU_FRACTION}); narrow the packet or widen the window",
                on_plateau / total
            ),
        ));
    }
    let mut u = SpinorGrid { geom: *geom, space: Space::Momentum, data }.to_position();
    let n = u.norm();
    u.scale(C64::new(1.0 / n, 0.0));
    Ok(u)
}

/// Which identification the wave operator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentKind {
    /// J = I
    Identity,
    /// zero phase, identity amplitude, no cutoff, no window
    Trivial,
    /// iterated phase, full amplitude, cone cutoff and window
    Full,
    /// iterated phase with the bare projection p0
    PhaseP0,
    /// first-order phase ηQV with p0
    SimpleP0,
    /// h-free comparison phase with the full amplitude of the h-dependent phase
    HFree,
}

impl IdentKind {
    pub const ALL: [IdentKind; 6] =
        [IdentKind::Identity, IdentKind::Trivial, IdentKind::Full, IdentKind::PhaseP0, IdentKind::SimpleP0, IdentKind::HFree];

    pub fn name(self) -> &'static str {
        match self {
            IdentKind::Identity => "identity",
            IdentKind::Trivial => "trivial",
            IdentKind::Full => "full",
            IdentKind::PhaseP0 => "phase-p0",
            IdentKind::SimpleP0 => "simple-p0",
            IdentKind::HFree => "h-free",
        }
    }
}

impl fmt::Display for IdentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        IdentKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown identification '{s}'"))
    }
}

/// Grid, window, cutoff and solver settings shared by the studies.
#[derive(Clone, Debug, PartialEq)]
pub struct LabSetup {
    pub geom: GridGeom,
    pub mass: f64,
    pub window: EnergyWindow,
    pub cone: ConeCutoff,
    pub quad: RayQuadratureParams,
    pub engine: EngineOptions,
    pub dt: f64,
    /// phase terms; None picks the smallest admissible N
    pub n_terms: Option<usize>,
}

impl LabSetup {
    pub fn terms(&self, family: &PotentialFamily) -> Result<usize> {
        match self.n_terms {
            Some(n) => Ok(n),
            None => minimal_terms(family.rho),
        }
    }

    /// Symbol for `kind` on the family (at its own h); None for J = I.
    pub fn symbol(&self, kind: IdentKind, family: &PotentialFamily, sign: Sign) -> Result<Option<SymbolSpec>> {
        let b = Branch::Positive;
        let h = family.h;
        let full = |phase: PhaseSpec, amplitude: AmplitudeSpec| SymbolSpec {
            phase,
            amplitude,
            cone: Some(self.cone),
            window: Some(self.window),
            branch: b,
            sign,
            mass: self.mass,
        };
        if family.kappa == 0.0 && kind != IdentKind::HFree && kind != IdentKind::Identity && kind != IdentKind::Trivial {
            // no potential: zero phase, P = p0, and no cone is needed
            return Ok(Some(SymbolSpec {
                phase: PhaseSpec::Zero,
                amplitude: AmplitudeSpec::P0,
                cone: None,
                window: Some(self.window),
                branch: b,
                sign,
                mass: self.mass,
            }));
        }
        let iterated = || phase_build(family, h, sign, self.terms(family)?, b, self.mass, &self.quad);
        Ok(match kind {
            IdentKind::Identity => None,
            IdentKind::Trivial => Some(SymbolSpec::trivial(None, self.mass)),
            IdentKind::Full => {
                let p = iterated()?;
                let a = AmplitudeModel::new(p.clone(), *family, b, self.mass);
                Some(full(PhaseSpec::Model(p), AmplitudeSpec::Full(a)))
            }
            IdentKind::PhaseP0 => Some(full(PhaseSpec::Model(iterated()?), AmplitudeSpec::P0)),
            IdentKind::SimpleP0 => {
                let p = phase_simple_longrange(family, h, sign, b, self.mass, &self.quad)?;
                Some(full(PhaseSpec::Model(p), AmplitudeSpec::P0))
            }
            IdentKind::HFree => {
                let p = phase_hfree_example(family.rho, sign, b, self.mass, &self.quad)?;
                let a = AmplitudeModel::new(iterated()?, *family, b, self.mass);
                Some(full(PhaseSpec::Model(p), AmplitudeSpec::Full(a)))
            }
        })
    }
}

pub enum Ident {
    Identity,
    /// x-independent symbol applied as a Fourier multiplier
    Multiplier(SymbolSpec),
    Psdo(Box<Identification>),
}

impl Ident {
    pub fn build(kind: IdentKind, family: &PotentialFamily, setup: &LabSetup, sign: Sign) -> Result<Self> {
        Ok(match setup.symbol(kind, family, sign)? {
            None => Ident::Identity,
            Some(spec) if spec.is_multiplier() => {
                if let Some(w) = &spec.window {
                    w.check_nyquist(setup.geom.nyquist())?;
                }
                Ident::Multiplier(spec)
            }
            Some(spec) => Ident::Psdo(Box::new(Identification::new(spec, setup.geom, setup.engine)?)),
        })
    }

    pub fn spec(&self) -> Option<&SymbolSpec> {
        match self {
            Ident::Identity => None,
            Ident::Multiplier(s) => Some(s),
            Ident::Psdo(j) => Some(&j.spec),
        }
    }

    pub fn apply_many(&self, gs: &[SpinorGrid]) -> Result<Vec<SpinorGrid>> {
        match self {
            Ident::Identity => Ok(gs.to_vec()),
            Ident::Multiplier(s) => Ok(gs.iter().map(|g| multiplier(s, g)).collect()),
            Ident::Psdo(j) => j.apply_many(gs),
        }
    }

    pub fn adjoint(&self, f: &SpinorGrid) -> Result<SpinorGrid> {
        match self {
            Ident::Identity => Ok(f.clone()),
            Ident::Multiplier(s) => Ok(multiplier(s, f)),
            Ident::Psdo(j) => j.adjoint(f),
        }
    }
}

fn multiplier(spec: &SymbolSpec, g: &SpinorGrid) -> SpinorGrid {
    let projector = match (&spec.amplitude, spec.branch) {
        (AmplitudeSpec::Identity, _) => Projector::Identity,
        (_, Branch::Positive) => Projector::Positive,
        (_, Branch::Negative) => Projector::Negative,
    };
    multiplier_fastpath(spec.window.as_ref(), projector, spec.mass, g)
}

#[derive(Clone, Debug)]
pub struct WaveOpState {
    pub t: f64,
    pub state: SpinorGrid,
    /// largest boundary mass seen along the way
    pub boundary_mass: f64,
    pub warnings: Vec<String>,
}

pub struct WaveOperator {
    pub ident: Ident,
    pub prop: StrangPropagator,
    pub mass: f64,
}

fn boundary_warning(bm: f64, what: &str, t: f64) -> Option<String> {
    (bm > BOUNDARY_MASS_TOL).then(|| format!("boundary mass {bm:.3e} of {what} at t = {t}; the box is too small"))
}

impl WaveOperator {
    pub fn new(kind: IdentKind, family: &PotentialFamily, setup: &LabSetup, sign: Sign) -> Result<Self> {
        Ok(WaveOperator {
            ident: Ident::build(kind, family, setup, sign)?,
            prop: StrangPropagator::new(setup.geom, family, setup.mass, setup.dt)?,
            mass: setup.mass,
        })
    }

    /// U_h(−t) J U0(t) u for every (u, t) job; J is applied in one batch.
    pub fn apply_batch(&self, jobs: &[(&SpinorGrid, f64)]) -> Result<Vec<WaveOpState>> {
        let free: Vec<SpinorGrid> = jobs.iter().map(|(u, t)| free_evolve(u, *t, self.mass)).collect();
        let jg = self.ident.apply_many(&free)?;
        jobs.iter()
            .zip(free.iter().zip(jg))
            .map(|((_, t), (f, g))| {
                let bm_free = boundary_mass(f);
                let ev = self.prop.evolve(&g, -t)?;
                let mut warnings: Vec<String> = boundary_warning(bm_free, "U0(t)u", *t).into_iter().collect();
                warnings.extend(boundary_warning(ev.boundary_mass, "W(t)u", *t));
                if !ev.state.is_finite() {
                    return Err(LabError::numerical("wave_op_approx", format!("non-finite state at t = {t}")));
                }
                Ok(WaveOpState { t: *t, state: ev.state, boundary_mass: bm_free.max(ev.boundary_mass), warnings })
            })
            .collect()
    }

    pub fn apply(&self, u: &SpinorGrid, t: f64) -> Result<WaveOpState> {
        Ok(self.apply_batch(&[(u, t)])?.pop().unwrap())
    }

    /// U0(−t) J* U_h(t) v.
    pub fn adjoint(&self, v: &SpinorGrid, t: f64) -> Result<WaveOpState> {
        let ev = self.prop.evolve(v, t)?;
        let j = self.ident.adjoint(&ev.state)?;
        let state = free_evolve(&j, -t, self.mass);
        let bm = ev.boundary_mass.max(boundary_mass(&state));
        Ok(WaveOpState { t, warnings: boundary_warning(bm, "W(t)*v", t).into_iter().collect(), state, boundary_mass: bm })
    }
}

/// U_h(−t) J U0(t) u0 for a one-off (kind, family).
pub fn wave_op_approx(
    kind: IdentKind,
    family: &PotentialFamily,
    setup: &LabSetup,
    t: f64,
    u0: &SpinorGrid,
) -> Result<WaveOpState> {
    let sign = if t >= 0.0 { Sign::Plus } else { Sign::Minus };
    WaveOperator::new(kind, family, setup, sign)?.apply(u0, t)
}

pub fn adjoint_wave_op_approx(
    kind: IdentKind,
    family: &PotentialFamily,
    setup: &LabSetup,
    t: f64,
    v: &SpinorGrid,
) -> Result<WaveOpState> {
    let sign = if t >= 0.0 { Sign::Plus } else { Sign::Minus };
    WaveOperator::new(kind, family, setup, sign)?.adjoint(v, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub study: String,
    /// name of the abscissa column ("t" or "h")
    pub abscissa: String,
    pub abscissae: Vec<f64>,
    pub distances: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    pub pass: bool,
    pub notes: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl ConvergenceReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

fn state_at(ss: &[WaveOpState], t: f64) -> Option<&SpinorGrid> {
    ss.iter().find(|s| s.t == t).map(|s| &s.state)
}

fn strictly_decreasing(d: &[f64]) -> bool {
    d.windows(2).all(|w| w[1] < w[0])
}

/// Below this every distance counts as exactly zero.
pub const ZERO_DISTANCE: f64 = 1e-12;

/// Ladder distances d_i = ‖W(t_{i+1})u0 − W(t_i)u0‖; pass iff strictly
/// decreasing with d_last < d_first/4.
pub fn time_convergence_study(wo: &WaveOperator, u0: &SpinorGrid, times: &[f64]) -> Result<ConvergenceReport> {
    if times.len() < 3 {
        return Err(LabError::config("ladder.t", "the time ladder needs at least three times"));
    }
    let jobs: Vec<(&SpinorGrid, f64)> = times.iter().map(|&t| (u0, t)).collect();
    let states = wo.apply_batch(&jobs)?;
    let mut notes = Vec::new();
    let mut keep = states.len();
    for (i, s) in states.iter().enumerate() {
        if !s.warnings.is_empty() {
            notes.extend(s.warnings.iter().cloned());
            keep = i;
            notes.push(format!("ladder truncated before t = {}", s.t));
            break;
        }
    }
    let states = &states[..keep];
    let distances: Vec<f64> = states.windows(2).map(|w| w[1].state.distance(&w[0].state)).collect();
    let abscissae: Vec<f64> = states.iter().skip(1).map(|s| s.t).collect();
    let n0 = u0.norm();
    let mut metrics = BTreeMap::new();
    if let Some(last) = states.last() {
        metrics.insert("isometry_ratio".into(), last.state.norm() / n0);
        metrics.insert("t_star".into(), last.t);
    }
    let pass = if distances.len() < 2 {
        notes.push("fewer than three usable times".into());
        false
    } else if distances.iter().all(|&d| d < ZERO_DISTANCE) {
        notes.push("W(t)u0 does not depend on t".into());
        true
    } else {
        strictly_decreasing(&distances) && distances[distances.len() - 1] < distances[0] / 4.0
    };
    Ok(ConvergenceReport {
        study: "time-convergence".into(),
        abscissa: "t".into(),
        fitted_exponent: loglog_slope(&abscissae, &distances),
        abscissae,
        distances,
        pass,
        notes,
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub t: f64,
    pub ratio: f64,
    pub window_fraction: f64,
    pub pass: bool,
    pub note: String,
}

pub const ISOMETRY_TOL: f64 = 0.05;

/// ‖W(t)u0‖/‖u0‖ against 1; inputs essentially outside the window are flagged.
pub fn isometry_check(wo: &WaveOperator, u0: &SpinorGrid, t: f64, window: &EnergyWindow) -> Result<IsometryReport> {
    let n0 = u0.norm();
    let inside = multiplier_fastpath(Some(window), Projector::Identity, wo.mass, u0).norm() / n0;
    if inside < 1e-3 {
        return Ok(IsometryReport { t, ratio: f64::NAN, window_fraction: inside, pass: false, note: "out-of-window".into() });
    }
    let w = wo.apply(u0, t)?;
    let ratio = w.state.norm() / n0;
    Ok(IsometryReport {
        t,
        ratio,
        window_fraction: inside,
        pass: (ratio - 1.0).abs() <= ISOMETRY_TOL,
        note: w.warnings.join("; "),
    })
}

/// d(h) = max over the panel of ‖W(t*, h)u − W(t*, ∞)u‖ for h in `hs`.
///
/// Pass iff d is non-increasing and d(h_max) < d(h_min)/10, or d vanishes.
/// The interchange proxy max_t ‖W(t, h_max)u − W(t, ∞)u‖ over `proxy_times`
/// is reported in the metrics.
pub fn h_sweep_study(
    kind: IdentKind,
    family: &PotentialFamily,
    setup: &LabSetup,
    panel: &[SpinorGrid],
    hs: &[f64],
    t_star: f64,
    proxy_times: &[f64],
) -> Result<ConvergenceReport> {
    if hs.is_empty() || panel.is_empty() {
        return Err(LabError::config("ladder.h", "the h ladder and the packet panel must be non-empty"));
    }
    if hs.windows(2).any(|w| w[1] <= w[0]) || hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(LabError::config("ladder.h", "h values must be finite, positive and increasing"));
    }
    let sign = Sign::Plus;
    let effective = |h: f64| if family.depends_on_h() { family.with_h(h) } else { family.limit() };
    let mut notes = Vec::new();
    // states at t* for the limit, plus the proxy times
    let limit_fam = family.limit();
    let h_max = *hs.last().unwrap();
    let mut proxy_t: Vec<f64> = proxy_times.to_vec();
    if !proxy_t.contains(&t_star) {
        proxy_t.push(t_star);
    }
    let run = |fam: &PotentialFamily, times: &[f64]| -> Result<Vec<Vec<WaveOpState>>> {
        let wo = WaveOperator::new(kind, fam, setup, sign)?;
        let mut jobs: Vec<(&SpinorGrid, f64)> = Vec::new();
        for u in panel {
            for &t in times {
                jobs.push((u, t));
            }
        }
        let flat = wo.apply_batch(&jobs)?;
        let mut it = flat.into_iter();
        Ok(panel.iter().map(|_| it.by_ref().take(times.len()).collect()).collect())
    };
    let limit_states = run(&limit_fam, &proxy_t)?;
    let star_idx = proxy_t.iter().position(|&t| t == t_star).unwrap();
    let mut memo: Vec<(PotentialFamily, Vec<Vec<WaveOpState>>)> = vec![(limit_fam, limit_states)];
    let mut distances = Vec::with_capacity(hs.len());
    let mut proxy = 0.0f64;
    for &h in hs {
        let fam = effective(h);
        let times: &[f64] = if h == h_max { &proxy_t } else { std::slice::from_ref(&t_star) };
        let pos = memo.iter().position(|(f, s)| *f == fam && s[0].len() >= times.len());
        let states = match pos {
            Some(p) => memo[p].1.clone(),
            None => {
                let s = run(&fam, times)?;
                memo.push((fam, s.clone()));
                s
            }
        };
        let lim = &memo[0].1;
        let mut d = 0.0f64;
        for (p, ss) in states.iter().enumerate() {
            for s in ss {
                notes.extend(s.warnings.iter().cloned());
            }
            let a = state_at(ss, t_star).unwrap();
            d = d.max(a.distance(&lim[p][star_idx].state));
            if h == h_max {
                for &t in &proxy_t {
                    if let (Some(x), Some(y)) = (state_at(ss, t), state_at(&lim[p], t)) {
                        proxy = proxy.max(x.distance(y));
                    }
                }
            }
        }
        distances.push(d);
    }
    notes.sort();
    notes.dedup();
    let mut metrics = BTreeMap::new();
    metrics.insert("interchange_proxy".into(), proxy);
    metrics.insert("t_star".into(), t_star);
    let pass = if distances.iter().all(|&d| d < ZERO_DISTANCE) {
        notes.push("d(h) vanishes: the family does not depend on h".into());
        true
    } else {
        distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + ZERO_DISTANCE)
            && distances[distances.len() - 1] < distances[0] / 10.0
    };
    Ok(ConvergenceReport {
        study: "h-sweep".into(),
        abscissa: "h".into(),
        fitted_exponent: loglog_slope(hs, &distances),
        abscissae: hs.to_vec(),
        distances,
        pass,
        notes,
        metrics,
    })
}

/// e(t) = ‖(J_A − J_B) U0(t) u0‖ along the ladder; pass iff strictly
/// decreasing with e_last < `factor`·e_first, or identically zero.
pub fn identification_equivalence_study(
    a: &Ident,
    b: &Ident,
    u0: &SpinorGrid,
    times: &[f64],
    mass: f64,
    factor: f64,
) -> Result<ConvergenceReport> {
    if times.len() < 2 {
        return Err(LabError::config("ladder.t", "the time ladder needs at least two times"));
    }
    let free: Vec<SpinorGrid> = times.iter().map(|&t| free_evolve(u0, t, mass)).collect();
    let ja = a.apply_many(&free)?;
    let same = match (a.spec(), b.spec()) {
        (None, None) => true,
        (Some(x), Some(y)) => x == y,
        _ => false,
    };
    let jb = if same { ja.clone() } else { b.apply_many(&free)? };
    let distances: Vec<f64> = ja.iter().zip(&jb).map(|(x, y)| x.distance(y)).collect();
    let mut notes = Vec::new();
    for (f, &t) in free.iter().zip(times) {
        notes.extend(boundary_warning(boundary_mass(f), "U0(t)u", t));
    }
    let pass = if distances.iter().all(|&d| d < ZERO_DISTANCE) {
        notes.push("identical identifications".into());
        true
    } else {
        strictly_decreasing(&distances) && distances[distances.len() - 1] < factor * distances[0]
    };
    Ok(ConvergenceReport {
        study: "identification-equivalence".into(),
        abscissa: "t".into(),
        fitted_exponent: loglog_slope(times, &distances),
        abscissae: times.to_vec(),
        distances,
        pass,
        notes,
        metrics: BTreeMap::new(),
    })
}

/// ‖U_h(s) W(t) u0 − W(t) U0(s) u0‖.
pub fn intertwining_probe(wo: &WaveOperator, u0: &SpinorGrid, t: f64, s: f64) -> Result<f64> {
    let shifted = free_evolve(u0, s, wo.mass);
    let st = wo.apply_batch(&[(u0, t), (&shifted, t)])?;
    let left = wo.prop.evolve(&st[0].state, s)?.state;
    Ok(left.distance(&st[1].state))
}

/// ⟨W(t)u, v⟩ and ⟨u, W(t)*v⟩.
pub fn duality_pairing(wo: &WaveOperator, u: &SpinorGrid, v: &SpinorGrid, t: f64) -> Result<(C64, C64)> {
    let wu = wo.apply(u, t)?.state;
    let wv = wo.adjoint(v, t)?.state;
    Ok((wu.inner(v), u.inner(&wv)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_family;

    fn setup(n: usize, l: f64) -> LabSetup {
        LabSetup {
            geom: GridGeom::cubic(n, l).unwrap(),
            mass: 1.0,
            window: EnergyWindow::new(1.2, 2.0, 0.3, 1.0).unwrap(),
            cone: ConeCutoff::default(),
            quad: RayQuadratureParams::default(),
            engine: EngineOptions::default(),
            dt: 0.1,
            n_terms: None,
        }
    }

    #[test]
    fn packet_is_normalised_and_positive_energy() {
        let s = setup(24, 30.0);
        let u = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-12);
        let neg = multiplier_fastpath(None, Projector::Negative, 1.0, &u);
        assert!(neg.norm() < 1e-12);
    }

    #[test]
    fn wide_packet_rejected() {
        let s = setup(24, 30.0);
        let e = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.6), &s.window, 1.0, Branch::Positive);
        assert!(matches!(e, Err(LabError::Config { ref key, .. }) if key == "packet.sigma"));
    }

    #[test]
    fn ident_kind_names_roundtrip() {
        for k in IdentKind::ALL {
            assert_eq!(k.name().parse::<IdentKind>().unwrap(), k);
        }
        assert!("bogus".parse::<IdentKind>().is_err());
    }

    #[test]
    fn trivial_symbol_at_zero_coupling_is_identity() {
        let s = setup(16, 24.0);
        let fam = make_family("relax", 0.9, 0.0, 10.0, None).unwrap();
        let u = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        for t in [0.0, 1.5] {
            let w = wave_op_approx(IdentKind::Trivial, &fam, &s, t, &u).unwrap();
            assert!(w.state.distance(&u) < 1e-10, "t = {t}: {}", w.state.distance(&u));
        }
    }

    #[test]
    fn identity_wave_op_intertwines_at_zero_coupling() {
        let s = setup(16, 24.0);
        let fam = make_family("static", 0.9, 0.0, f64::INFINITY, None).unwrap();
        let u = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        let wo = WaveOperator::new(IdentKind::Identity, &fam, &s, Sign::Plus).unwrap();
        assert!(intertwining_probe(&wo, &u, 1.0, 0.5).unwrap() < 1e-10);
    }

    #[test]
    fn duality_holds_for_full_symbol() {
        let s = setup(12, 18.0);
        let fam = make_family("relax", 0.9, 0.2, 10.0, None).unwrap();
        let u = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        let v = make_wavepacket(&s.geom, &WavePacket::new([0.0, 1.2, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        let wo = WaveOperator::new(IdentKind::Full, &fam, &s, Sign::Plus).unwrap();
        let (a, b) = duality_pairing(&wo, &u, &v, 1.0).unwrap();
        assert!((a - b).norm() <= 1e-10 * a.norm().max(1e-3), "{a} vs {b}");
    }

    #[test]
    fn equal_identifications_give_zero() {
        let s = setup(12, 18.0);
        let fam = make_family("relax", 0.9, 0.2, 10.0, None).unwrap();
        let u = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        let a = Ident::build(IdentKind::PhaseP0, &fam, &s, Sign::Plus).unwrap();
        let b = Ident::build(IdentKind::PhaseP0, &fam, &s, Sign::Plus).unwrap();
        let r = identification_equivalence_study(&a, &b, &u, &[0.5, 1.0], 1.0, 0.5).unwrap();
        assert!(r.pass);
        assert!(r.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn zero_coupling_ladder_collapses() {
        let s = setup(28, 46.0);
        let fam = make_family("relax", 0.9, 0.0, 10.0, None).unwrap();
        let u = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        let wo = WaveOperator::new(IdentKind::Full, &fam, &s, Sign::Plus).unwrap();
        assert!(matches!(wo.ident, Ident::Multiplier(_)));
        let r = time_convergence_study(&wo, &u, &[1.0, 2.0, 4.0]).unwrap();
        assert!(r.pass, "{:?}", r.notes);
        assert!(r.distances.iter().all(|&d| d < 1e-10), "{:?}", r.distances);
    }

    #[test]
    fn ladder_needs_three_times() {
        let s = setup(12, 18.0);
        let fam = make_family("static", 1.5, 0.1, f64::INFINITY, None).unwrap();
        let u = make_wavepacket(&s.geom, &WavePacket::new([1.2, 0.0, 0.0], 0.12), &s.window, 1.0, Branch::Positive).unwrap();
        let wo = WaveOperator::new(IdentKind::Identity, &fam, &s, Sign::Plus).unwrap();
        assert!(time_convergence_study(&wo, &u, &[1.0, 2.0]).is_err());
    }
}

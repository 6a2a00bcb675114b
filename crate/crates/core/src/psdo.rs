//! Dense application of the identification
//! (Jg)(x) = Σ_ζ e^{i x·ζ + iΦ(x,ζ)} P(x,ζ) 𝒞(x,ζ) ψ(|ζ|²) ĝ(ζ) Δζ³(2π)^{-3/2}
//! and of its exact discrete adjoint.

use crate::algebra::{apply_projection, dot, eta, Branch, Spinor};
use crate::amplitude::{AmplitudeModel, ConeCutoff, EnergyWindow, SFactors};
use crate::eikonal::{PhaseModel, PhaseSample, PhaseTable, Sign};
use crate::error::{LabError, Result};
use crate::grid::{GridGeom, Space, SpinorGrid};
use crate::potential::norm2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

#[derive(Clone, Debug, PartialEq)]
pub enum PhaseSpec {
    Zero,
    Model(PhaseModel),
}

#[derive(Clone, Debug, PartialEq)]
pub enum AmplitudeSpec {
    Identity,
    P0,
    Full(AmplitudeModel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSpec {
    pub phase: PhaseSpec,
    pub amplitude: AmplitudeSpec,
    pub cone: Option<ConeCutoff>,
    pub window: Option<EnergyWindow>,
    pub branch: Branch,
    pub sign: Sign,
    pub mass: f64,
}

impl SymbolSpec {
    /// e^{ix·ζ} ψ(|ζ|²): no phase, identity amplitude, no cone.
    pub fn trivial(window: Option<EnergyWindow>, mass: f64) -> Self {
        SymbolSpec {
            phase: PhaseSpec::Zero,
            amplitude: AmplitudeSpec::Identity,
            cone: None,
            window,
            branch: Branch::Positive,
            sign: Sign::Plus,
            mass,
        }
    }

    /// True when the symbol does not depend on x.
    pub fn is_multiplier(&self) -> bool {
        let phase_free = match &self.phase {
            PhaseSpec::Zero => true,
            PhaseSpec::Model(m) => m.is_zero(),
        };
        phase_free && self.cone.is_none() && !matches!(self.amplitude, AmplitudeSpec::Full(_))
    }
}

/// η → −η in phase and amplitude, p0 → p_{−,0} and 𝒞_± → 𝒞_∓.
pub fn negative_branch_spec(spec: &SymbolSpec) -> SymbolSpec {
    let branch = spec.branch.flip();
    let sign = spec.sign.flip();
    SymbolSpec {
        phase: match &spec.phase {
            PhaseSpec::Zero => PhaseSpec::Zero,
            PhaseSpec::Model(m) => PhaseSpec::Model(m.with_sign_branch(m.sign.flip(), m.branch.flip())),
        },
        amplitude: match &spec.amplitude {
            AmplitudeSpec::Full(a) => {
                let mut a = a.with_branch(a.branch.flip());
                a.phase.sign = a.phase.sign.flip();
                AmplitudeSpec::Full(a)
            }
            other => other.clone(),
        },
        branch,
        sign,
        ..spec.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projector {
    Identity,
    Positive,
    Negative,
}

/// FFT, multiply by p0(ζ)ψ(|ζ|²), inverse FFT.
pub fn multiplier_fastpath(window: Option<&EnergyWindow>, projector: Projector, mass: f64, g: &SpinorGrid) -> SpinorGrid {
    g.map_momentum(|z, v| {
        let psi = window.map_or(1.0, |w| w.value(norm2(z)));
        let p = match projector {
            Projector::Identity => *v,
            Projector::Positive => apply_projection(z, mass, Branch::Positive, v),
            Projector::Negative => apply_projection(z, mass, Branch::Negative, v),
        };
        [p[0] * psi, p[1] * psi, p[2] * psi, p[3] * psi]
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineOptions {
    /// x points per tile
    pub tile: usize,
    /// drop modes with |ĝ| ≤ prune_tol·max|ĝ| in the forward apply
    pub prune_tol: f64,
    /// (a, b) spacing of the radial phase tables; 0 disables tables
    pub table_step: f64,
    pub cache_budget_bytes: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { tile: 512, prune_tol: 0.0, table_step: 0.2, cache_budget_bytes: 256 << 20 }
    }
}

/// c·e^{i(x·ζ+Φ)} and the S factors for one (x, ζ) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairEntry {
    pub e: C64,
    pub s: SFactors,
}

const ZERO_ENTRY: PairEntry = PairEntry { e: C64::new(0.0, 0.0), s: SFactors { s0: 0.0, b: [0.0; 3] } };

struct Mode {
    idx: usize,
    zeta: [f64; 3],
    norm: f64,
    hat: [f64; 3],
    eta_b: f64,
    psi: f64,
}

/// A symbol bound to a grid, with phase tables and the optional pair cache.
pub struct Identification {
    pub spec: SymbolSpec,
    pub geom: GridGeom,
    pub opts: EngineOptions,
    xs: Vec<[f64; 3]>,
    theta: Vec<f64>,
    vx: Vec<f64>,
    modes: Vec<Mode>,
    phase_table: Option<PhaseTable>,
    amp_table: Option<PhaseTable>,
    amp_shares_phase: bool,
    cache: OnceLock<Option<Vec<Vec<PairEntry>>>>,
    fallbacks: AtomicUsize,
}

fn tabulate(model: &PhaseModel, cone: Option<&ConeCutoff>, r_max: f64, step: f64) -> Result<Option<PhaseTable>> {
    if step <= 0.0 || model.is_zero() {
        return Ok(None);
    }
    let a_min = match cone {
        Some(c) => (r_max * c.tau_min()).min(0.0) - 1.0,
        None => -r_max - 1.0,
    };
    model.tabulate(a_min, r_max + 1.0, step)
}

impl Identification {
    pub fn new(spec: SymbolSpec, geom: GridGeom, opts: EngineOptions) -> Result<Self> {
        if let Some(w) = &spec.window {
            w.check_nyquist(geom.nyquist())?;
        }
        if let Some(c) = &spec.cone {
            c.validate()?;
        }
        let zs = geom.zeta_points();
        let modes: Vec<Mode> = zs
            .iter()
            .enumerate()
            .filter_map(|(idx, z)| {
                let psi = spec.window.as_ref().map_or(1.0, |w| w.value(norm2(z)));
                if psi == 0.0 {
                    return None;
                }
                let n = norm2(z).sqrt();
                let hat = if n > 0.0 { [z[0] / n, z[1] / n, z[2] / n] } else { [0.0; 3] };
                Some(Mode { idx, zeta: *z, norm: n, hat, eta_b: spec.branch.sign() * eta(z, spec.mass), psi })
            })
            .collect();
        if modes.is_empty() {
            return Err(LabError::numerical("apply_identification", "active momentum set is empty; the window misses the grid"));
        }
        let needs_phase = !matches!(spec.phase, PhaseSpec::Zero) || matches!(spec.amplitude, AmplitudeSpec::Full(_));
        if needs_phase && modes.iter().any(|m| m.norm == 0.0) {
            return Err(LabError::numerical("apply_identification", "zeta = 0 is active but the phase needs a ray direction"));
        }
        let xs = geom.x_points();
        let theta = match &spec.cone {
            Some(c) => xs.iter().map(|x| c.theta(norm2(x).sqrt())).collect(),
            None => Vec::new(),
        };
        let r_max = geom.max_radius();
        let phase_table = match &spec.phase {
            PhaseSpec::Model(m) => tabulate(m, spec.cone.as_ref(), r_max, opts.table_step)?,
            PhaseSpec::Zero => None,
        };
        let (vx, amp_table, amp_shares_phase) = match &spec.amplitude {
            AmplitudeSpec::Full(a) => {
                let vx = xs.iter().map(|x| a.family.value(x)).collect();
                let shares = matches!(&spec.phase, PhaseSpec::Model(m) if *m == a.phase);
                let t = if shares { None } else { tabulate(&a.phase, spec.cone.as_ref(), r_max, opts.table_step)? };
                (vx, t, shares)
            }
            _ => (Vec::new(), None, false),
        };
        Ok(Identification {
            spec,
            geom,
            opts,
            xs,
            theta,
            vx,
            modes,
            phase_table,
            amp_table,
            amp_shares_phase,
            cache: OnceLock::new(),
            fallbacks: AtomicUsize::new(0),
        })
    }

    pub fn active_count(&self) -> usize {
        self.modes.len()
    }

    /// Pair evaluations that fell outside the phase tables.
    pub fn fallback_count(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    fn tiles(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.xs.len();
        let t = self.opts.tile.max(1);
        (0..n).step_by(t).map(|s| s..(s + t).min(n)).collect()
    }

    fn phase_at(&self, model: &PhaseModel, table: Option<&PhaseTable>, x: &[f64; 3], r2: f64, m: &Mode) -> Result<PhaseSample> {
        if let Some(t) = table {
            if let Some(s) = t.sample(x, r2, m.norm, &m.hat) {
                return Ok(s);
            }
        }
        self.fallbacks.fetch_add(1, Ordering::Relaxed);
        let (phi, grad) = model.phase_and_grad(x, &m.zeta)?;
        Ok(PhaseSample { phi, grad })
    }

    fn entry(&self, j: usize, m: &Mode) -> Result<PairEntry> {
        let x = &self.xs[j];
        let r2 = norm2(x);
        let c = match &self.spec.cone {
            None => 1.0,
            Some(cone) => {
                let th = self.theta[j];
                if th == 0.0 || m.norm == 0.0 {
                    return Ok(ZERO_ENTRY);
                }
                let om = cone.omega(dot(x, &m.hat) / r2.sqrt(), self.spec.sign);
                if om == 0.0 {
                    return Ok(ZERO_ENTRY);
                }
                th * om
            }
        };
        let mut arg = dot(x, &m.zeta);
        let mut grad = None;
        if let PhaseSpec::Model(pm) = &self.spec.phase {
            if !pm.is_zero() {
                let s = self.phase_at(pm, self.phase_table.as_ref(), x, r2, m)?;
                arg += s.phi;
                grad = Some(s.grad);
            }
        }
        let s = match &self.spec.amplitude {
            AmplitudeSpec::Full(a) => {
                let g = if self.amp_shares_phase {
                    grad.unwrap_or([0.0; 3])
                } else if a.phase.is_zero() {
                    [0.0; 3]
                } else {
                    self.phase_at(&a.phase, self.amp_table.as_ref(), x, r2, m)?.grad
                };
                let f = SFactors::new(self.vx[j], &g, m.eta_b);
                a.check_margin(&f, x, &m.zeta)?;
                f
            }
            _ => ZERO_ENTRY.s,
        };
        let e = C64::from_polar(c, arg);
        if !(e.re.is_finite() && e.im.is_finite()) {
            return Err(LabError::numerical(
                "apply_identification",
                format!("non-finite symbol at x = {x:?}, zeta = {:?}", m.zeta),
            ));
        }
        Ok(PairEntry { e, s })
    }

    /// Pair cache over the full active set, filled once if it fits the budget.
    fn cached(&self) -> Result<Option<&Vec<Vec<PairEntry>>>> {
        let bytes = self.xs.len() * self.modes.len() * std::mem::size_of::<PairEntry>();
        if bytes > self.opts.cache_budget_bytes {
            return Ok(None);
        }
        if let Some(c) = self.cache.get() {
            return Ok(c.as_ref());
        }
        let tiles = self.tiles();
        let filled: Result<Vec<Vec<PairEntry>>> = tiles
            .par_iter()
            .map(|r| {
                let mut v = Vec::with_capacity(r.len() * self.modes.len());
                for m in &self.modes {
                    for j in r.clone() {
                        v.push(self.entry(j, m)?);
                    }
                }
                Ok(v)
            })
            .collect();
        let filled = filled?;
        Ok(self.cache.get_or_init(|| Some(filled)).as_ref())
    }

    fn full_amplitude(&self) -> bool {
        matches!(self.spec.amplitude, AmplitudeSpec::Full(_))
    }

    fn projected(&self, m: &Mode, v: &Spinor) -> Spinor {
        match self.spec.amplitude {
            AmplitudeSpec::Identity => *v,
            _ => apply_projection(&m.zeta, self.spec.mass, self.spec.branch, v),
        }
    }

    pub fn apply(&self, g: &SpinorGrid) -> Result<SpinorGrid> {
        Ok(self.apply_many(std::slice::from_ref(g))?.pop().unwrap())
    }

    /// Applies the identification to several inputs in one pass over the pairs.
    pub fn apply_many(&self, gs: &[SpinorGrid]) -> Result<Vec<SpinorGrid>> {
        for g in gs {
            self.check_input(g, "apply_identification")?;
        }
        let nb = gs.len();
        if nb == 0 {
            return Ok(Vec::new());
        }
        let ghs: Vec<SpinorGrid> = gs.iter().map(|g| g.to_momentum()).collect();
        let weight = self.geom.zeta_cell() * (2.0 * PI).powf(-1.5);
        let gmax: Vec<f64> = ghs.iter().map(|g| g.max_abs()).collect();
        let prune = self.opts.prune_tol > 0.0;
        // (mode position, weighted p0 ψ ĝ for every input)
        let mut w: Vec<(usize, Vec<Spinor>)> = Vec::new();
        for (p, m) in self.modes.iter().enumerate() {
            let keep = ghs.iter().zip(&gmax).any(|(gh, gm)| {
                let a = gh.data[m.idx].iter().map(|c| c.norm()).fold(0.0, f64::max);
                if prune {
                    a > self.opts.prune_tol * gm
                } else {
                    a > 0.0
                }
            });
            if !keep {
                continue;
            }
            let s = weight * m.psi;
            let ws = ghs
                .iter()
                .map(|gh| {
                    let v = self.projected(m, &gh.data[m.idx]);
                    [v[0] * s, v[1] * s, v[2] * s, v[3] * s]
                })
                .collect();
            w.push((p, ws));
        }
        let cache = if prune { None } else { self.cached()? };
        let full = self.full_amplitude();
        let tiles = self.tiles();
        let parts: Vec<Result<Vec<Spinor>>> = tiles
            .par_iter()
            .enumerate()
            .map(|(ti, r)| {
                let len = r.len();
                let mut acc = vec![[C64::new(0.0, 0.0); 4]; len * nb];
                for (p, wk) in &w {
                    let m = &self.modes[*p];
                    for (jl, j) in r.clone().enumerate() {
                        let en = match cache {
                            Some(c) => c[ti][p * len + jl],
                            None => self.entry(j, m)?,
                        };
                        if en.e.re == 0.0 && en.e.im == 0.0 {
                            continue;
                        }
                        for (b, wb) in wk.iter().enumerate() {
                            let v = if full { en.s.solve(wb) } else { *wb };
                            let a = &mut acc[b * len + jl];
                            for c in 0..4 {
                                a[c] += en.e * v[c];
                            }
                        }
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut outs = vec![SpinorGrid::zeros(self.geom, Space::Position); nb];
        for (r, part) in tiles.iter().zip(parts) {
            let part = part?;
            let len = r.len();
            for (b, out) in outs.iter_mut().enumerate() {
                out.data[r.clone()].copy_from_slice(&part[b * len..(b + 1) * len]);
            }
        }
        Ok(outs)
    }

    /// Conjugate transpose of `apply` with respect to the discrete L² products.
    pub fn adjoint(&self, f: &SpinorGrid) -> Result<SpinorGrid> {
        self.check_input(f, "apply_adjoint")?;
        let cache = if self.opts.prune_tol > 0.0 { None } else { self.cached()? };
        let weight = self.geom.cell() * (2.0 * PI).powf(-1.5);
        let full = self.full_amplitude();
        let tiles = self.tiles();
        const KCHUNK: usize = 32;
        let chunks: Vec<std::ops::Range<usize>> =
            (0..self.modes.len()).step_by(KCHUNK).map(|s| s..(s + KCHUNK).min(self.modes.len())).collect();
        let parts: Vec<Result<Vec<Spinor>>> = chunks
            .par_iter()
            .map(|kr| {
                let mut acc = vec![[C64::new(0.0, 0.0); 4]; kr.len()];
                for (ti, r) in tiles.iter().enumerate() {
                    let len = r.len();
                    for (kl, p) in kr.clone().enumerate() {
                        let m = &self.modes[p];
                        let a = &mut acc[kl];
                        for (jl, j) in r.clone().enumerate() {
                            let en = match cache {
                                Some(c) => c[ti][p * len + jl],
                                None => self.entry(j, m)?,
                            };
                            if en.e.re == 0.0 && en.e.im == 0.0 {
                                continue;
                            }
                            let fj = &f.data[j];
                            // (I − S)^{-1} is Hermitian
                            let v = if full { en.s.solve(fj) } else { *fj };
                            let ec = en.e.conj();
                            for c in 0..4 {
                                a[c] += ec * v[c];
                            }
                        }
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut h = SpinorGrid::zeros(self.geom, Space::Momentum);
        for (kr, part) in chunks.iter().zip(parts) {
            for (p, v) in kr.clone().zip(part?) {
                let m = &self.modes[p];
                let s = weight * m.psi;
                let v = self.projected(m, &v);
                h.data[m.idx] = [v[0] * s, v[1] * s, v[2] * s, v[3] * s];
            }
        }
        Ok(h.to_position())
    }

    fn check_input(&self, g: &SpinorGrid, op: &str) -> Result<()> {
        if g.space != Space::Position || g.geom != self.geom {
            return Err(LabError::numerical(op, "input grid does not match the operator grid"));
        }
        if !g.is_finite() {
            return Err(LabError::numerical(op, "non-finite input samples"));
        }
        Ok(())
    }
}

pub fn apply_identification(spec: &SymbolSpec, g: &SpinorGrid) -> Result<SpinorGrid> {
    Identification::new(spec.clone(), g.geom, EngineOptions::default())?.apply(g)
}

pub fn apply_adjoint(spec: &SymbolSpec, f: &SpinorGrid) -> Result<SpinorGrid> {
    Identification::new(spec.clone(), f.geom, EngineOptions::default())?.adjoint(f)
}

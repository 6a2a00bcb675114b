//! Acceptance suites. One PASS/FAIL line per criterion; set
//! `LRDIRAC_ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit.

use lrdirac::algebra::{algebra_check, Branch, ALGEBRA_TOL};
use lrdirac::amplitude::{amplitude_decay_check, neumann_amplitude, AmplitudeModel, ConeCutoff, EnergyWindow};
use lrdirac::eikonal::{cone_point, gradient_fd_check, minimal_terms, phase_build, phase_bound_check, q_transform, window_momentum, Sign};
use lrdirac::fit::logspace;
use lrdirac::grid::{GridGeom, SpinorGrid};
use lrdirac::lab::{
    default_panel, h_sweep_study, identification_equivalence_study, make_wavepacket, time_convergence_study, Ident,
    IdentKind, LabSetup, WaveOperator, WavePacket,
};
use lrdirac::potential::{make_family, norm2, verify_decay, PotentialFamily};
use lrdirac::propagate::{eigenfunction_residual, free_evolve, richardson_ratio, StrangPropagator};
use lrdirac::psdo::{apply_identification, multiplier_fastpath, EngineOptions, Identification, Projector, SymbolSpec};
use lrdirac::quadrature::{RayQuadrature, RayQuadratureParams};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;
use std::time::{Duration, Instant};

const MASS: f64 = 1.0;
const SEED: u64 = 20240917;

// tolerances
const ERFC_TOL: f64 = 1e-8;
const EXPONENT_SLACK: f64 = 0.1;
const GRADIENT_FD_TOL: f64 = 1e-5;
const HERMITICITY_TOL: f64 = 1e-13;
const FD_TOL: f64 = 1e-8;
const TRIVIAL_TOL: f64 = 1e-10;
const FASTPATH_TOL: f64 = 1e-10;
const PAIRING_TOL: f64 = 1e-12;
const NORM_STABILITY: f64 = 0.10;
const UNITARY_TOL: f64 = 1e-10;
const RICHARDSON: (f64, f64) = (3.4, 4.6);
const DRIFT_TOL: f64 = 1e-6;
const LADDER_RATIO: f64 = 0.25;
const ISOMETRY_BAND: (f64, f64) = (0.95, 1.05);
const H_RATIO: f64 = 0.1;
const STATIC_TOL: f64 = 1e-12;
const PHASE_P0_FACTOR: f64 = 1.0 / 3.0;

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn window() -> EnergyWindow {
    EnergyWindow::new(1.2, 2.0, 0.3, MASS).unwrap()
}

fn plateau_k() -> (f64, f64) {
    let (a, b) = window().plateau();
    (a.max(0.0).sqrt(), b.sqrt())
}

fn relax(rho: f64) -> PotentialFamily {
    make_family("relax", rho, 0.2, 10.0, None).unwrap()
}

fn quad(t_max: f64) -> RayQuadratureParams {
    RayQuadratureParams { t_max, ..Default::default() }
}

fn random_grid(geom: GridGeom, rng: &mut ChaCha8Rng) -> SpinorGrid {
    SpinorGrid::from_fn(geom, |_| std::array::from_fn(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
}

/// Elongated box trailing the packet along +x.
fn wave_op_setup() -> LabSetup {
    LabSetup {
        geom: GridGeom::new([52, 34, 34], [83.2, 54.4, 54.4], [16.6, 0.0, 0.0]).unwrap(),
        mass: MASS,
        window: window(),
        cone: ConeCutoff { omega_halfwidth: 0.35, ..ConeCutoff::default() },
        quad: RayQuadratureParams::default(),
        engine: EngineOptions { prune_tol: 1e-6, ..Default::default() },
        dt: 0.1,
        n_terms: None,
    }
}

fn packet(setup: &LabSetup, p: &WavePacket) -> SpinorGrid {
    make_wavepacket(&setup.geom, p, &setup.window, MASS, Branch::Positive).unwrap()
}

const LADDER: [f64; 4] = [5.0, 10.0, 20.0, 40.0];

fn fmt_list(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", s.join(", "))
}

fn algebra() -> (bool, String) {
    let r = algebra_check(1000, MASS, SEED);
    let pass = r.clifford == 0.0 && r.pass && r.projector.max(r.spectral) < ALGEBRA_TOL;
    (pass, format!("clifford {:.1e}, projector {:.1e}, spectral {:.1e}", r.clifford, r.projector, r.spectral))
}

fn decay() -> (bool, String) {
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for id in ["relax", "additive", "static"] {
        for rho in [0.6, 0.9, 1.5] {
            let fam = make_family(id, rho, 0.2, 10.0, None).unwrap();
            let r = verify_decay(&fam, 2, 50, SEED).unwrap();
            pass &= r.pass && r.orders.iter().all(|o| o.uniform_in_h);
            for o in &r.orders {
                if let Some(p) = o.fitted_exponent {
                    worst = worst.max(p - o.target_exponent);
                }
            }
        }
    }
    (pass, format!("9 families x 3 orders, worst excess {worst:+.3} (slack {EXPONENT_SLACK})"))
}

fn phase() -> (bool, String) {
    let q = RayQuadrature::new(RayQuadratureParams { tail_exponent: 4.0, ..Default::default() }).unwrap();
    let zeta = [0.0, 0.6, 0.8];
    let mut erfc_err: f64 = 0.0;
    for a in [0.1, 0.5, 1.0, 2.5] {
        let x = [0.0, 0.6 * a, 0.8 * a];
        let got = q_transform(|y| (-norm2(y)).exp(), &zeta, Sign::Plus, &q, &x).unwrap();
        erfc_err = erfc_err.max((got - 0.5 * std::f64::consts::PI.sqrt() * (erfc(a) - 1.0)).abs());
    }
    let k = plateau_k();
    let mut origin_exact = true;
    let mut fits = Vec::new();
    let mut fits_pass = true;
    let mut fd: f64 = 0.0;
    for rho in [0.6, 0.75, 1.0] {
        let fam = relax(rho);
        let model = phase_build(&fam, fam.h, Sign::Plus, minimal_terms(rho).unwrap(), Branch::Positive, MASS, &quad(1e10)).unwrap();
        origin_exact &= model.phase(&[0.0; 3], &[1.3, -0.2, 0.4]).unwrap() == 0.0;
        let b = phase_bound_check(&model, 0.0, 50, (1e3, 1e7), 9, k, SEED).unwrap();
        fits_pass &= b.pass;
        fits.push(format!("rho {rho}: {:.3}/{:.3}", b.phase_fit.exponent.unwrap_or(f64::NAN), b.grad_fit.exponent.unwrap_or(f64::NAN)));
        let e = gradient_fd_check(&model, 0.0, 50, (2.0, 50.0), k, SEED + 1).unwrap();
        fd = e.into_iter().fold(fd, f64::max);
    }
    let pass = erfc_err < ERFC_TOL && origin_exact && fits_pass && fd < GRADIENT_FD_TOL;
    (pass, format!("erfc {erfc_err:.1e}, origin exact {origin_exact}, fits {}, fd {fd:.1e}", fits.join("; ")))
}

fn amplitude() -> (bool, String) {
    let k = plateau_k();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut herm: f64 = 0.0;
    let mut neumann_ok = true;
    let mut fits = Vec::new();
    let mut fit_pass = true;
    for rho in [0.6, 0.9] {
        let fam = relax(rho);
        let model = phase_build(&fam, fam.h, Sign::Plus, minimal_terms(rho).unwrap(), Branch::Positive, MASS, &quad(1e8)).unwrap();
        let amp = AmplitudeModel::new(model, fam, Branch::Positive, MASS);
        for _ in 0..200 {
            let z = window_momentum(&mut rng, k.0, k.1);
            let r = 10f64.powf(rng.gen_range(0.5..3.0));
            let x = cone_point(&mut rng, &z, Sign::Plus, 0.0, r);
            let f = amp.factors(&x, &z).unwrap();
            let s = f.matrix();
            herm = herm.max(s.hermiticity_defect());
            let p = amp.amplitude(&x, &z).unwrap();
            let q = f.radius();
            for n in 1..6 {
                let err = (p - neumann_amplitude(&s, &amp.p0(&z), n)).frobenius();
                neumann_ok &= err <= 2.0 * q.powi(n as i32 + 1) / (1.0 - q) + 1e-12;
            }
        }
        let (_, _, fit) = amplitude_decay_check(&amp, Sign::Plus, 0.0, 50, (1e2, 1e6), 9, k, SEED).unwrap();
        fit_pass &= fit.pass;
        fits.push(format!("rho {rho}: {:.3}", fit.exponent.unwrap_or(f64::NAN)));
    }
    let pass = herm < HERMITICITY_TOL && neumann_ok && fit_pass;
    (pass, format!("hermiticity {herm:.1e}, neumann bound {neumann_ok}, decay fits {}", fits.join("; ")))
}

fn residual() -> (bool, String) {
    let zeta = [1.2, 0.0, 0.0];
    let radii = logspace(10.0, 1000.0, 8);
    let mut pass = true;
    let mut parts = Vec::new();
    for (rho, n) in [(1.0, 1), (0.75, 1), (0.6, 1), (0.6, 2)] {
        let fam = relax(rho);
        let model = phase_build(&fam, fam.h, Sign::Plus, n, Branch::Positive, MASS, &quad(1e7)).unwrap();
        let amp = AmplitudeModel::new(model.clone(), fam, Branch::Positive, MASS);
        let r = eigenfunction_residual(&model, &amp, &zeta, &zeta, &radii, 0.02).unwrap();
        pass &= r.pass;
        parts.push(format!("({rho},{n}) {:.3}<={:.3} {}", r.slope.unwrap_or(f64::NAN), r.bound, if r.pass { "ok" } else { "no" }));
    }
    let free = make_family("relax", 0.9, 0.0, 10.0, None).unwrap();
    let model = phase_build(&free, free.h, Sign::Plus, 1, Branch::Positive, MASS, &quad(1e7)).unwrap();
    let amp = AmplitudeModel::new(model.clone(), free, Branch::Positive, MASS);
    let r0 = eigenfunction_residual(&model, &amp, &zeta, &zeta, &radii, 0.02).unwrap();
    let zero = r0.residuals.iter().cloned().fold(0.0, f64::max);
    pass &= zero < FD_TOL;
    (pass, format!("{}; kappa=0 {zero:.1e}", parts.join(", ")))
}

fn full_spec(geom: GridGeom) -> LabSetup {
    LabSetup {
        geom,
        mass: MASS,
        window: window(),
        cone: ConeCutoff::default(),
        quad: RayQuadratureParams::default(),
        engine: EngineOptions::default(),
        dt: 0.05,
        n_terms: None,
    }
}

/// ‖J‖ by power iteration on J*J.
fn operator_norm(j: &Ident, geom: GridGeom, rng: &mut ChaCha8Rng) -> f64 {
    let mut v = multiplier_fastpath(Some(&window()), Projector::Positive, MASS, &random_grid(geom, rng));
    v.scale(C64::new(1.0 / v.norm(), 0.0));
    let mut est = 0.0;
    for _ in 0..8 {
        let jv = j.apply_many(std::slice::from_ref(&v)).unwrap().pop().unwrap();
        est = jv.norm();
        let w = j.adjoint(&jv).unwrap();
        v = w;
        let n = v.norm();
        v.scale(C64::new(1.0 / n, 0.0));
    }
    est
}

fn psdo() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let g16 = GridGeom::cubic(16, 20.0).unwrap();
    let g = random_grid(g16, &mut rng);
    let trivial = apply_identification(&SymbolSpec::trivial(None, MASS), &g).unwrap().distance(&g) / g.norm();
    let spec = SymbolSpec::trivial(Some(window()), MASS);
    let engine = Identification::new(spec, g16, EngineOptions::default()).unwrap().apply(&g).unwrap();
    let fast = multiplier_fastpath(Some(&window()), Projector::Identity, MASS, &g);
    let fastpath = engine.distance(&fast) / fast.norm();
    let fam = relax(0.9);
    let j = Ident::build(IdentKind::Full, &fam, &full_spec(g16), Sign::Plus).unwrap();
    let f = random_grid(g16, &mut rng);
    let jg = j.apply_many(std::slice::from_ref(&g)).unwrap().pop().unwrap();
    let (lhs, rhs) = (jg.inner(&f), g.inner(&j.adjoint(&f).unwrap()));
    let pairing = (lhs - rhs).norm() / lhs.norm().max(rhs.norm());
    let mut norms = Vec::new();
    for n in [16, 24, 32] {
        let geom = GridGeom::cubic(n, 20.0).unwrap();
        let j = Ident::build(IdentKind::Full, &fam, &full_spec(geom), Sign::Plus).unwrap();
        norms.push(operator_norm(&j, geom, &mut rng));
    }
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let spread = norms.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max);
    let pass = trivial < TRIVIAL_TOL && fastpath < FASTPATH_TOL && pairing < PAIRING_TOL && spread <= NORM_STABILITY;
    (
        pass,
        format!("trivial {trivial:.1e}, fast path {fastpath:.1e}, pairing {pairing:.1e}, |J| at N=16/24/32 {} spread {spread:.3}", fmt_list(&norms)),
    )
}

fn propagator() -> (bool, String) {
    let setup = full_spec(GridGeom::cubic(32, 40.0).unwrap());
    let u = packet(&setup, &WavePacket::new([1.2, 0.0, 0.0], 0.12));
    let a = free_evolve(&free_evolve(&u, 7.0, MASS), 13.0, MASS);
    let b = free_evolve(&u, 20.0, MASS);
    let unitary = (b.norm() - u.norm()).abs().max(a.distance(&b));
    let fam = relax(0.9);
    let ratio = richardson_ratio(&u, 20.0, setup.dt, &fam, MASS).unwrap();
    let prop = StrangPropagator::new(setup.geom, &fam, MASS, setup.dt).unwrap();
    let e0 = prop.energy(&u);
    let mut w = u.clone();
    let mut drift: f64 = 0.0;
    for _ in 0..20 {
        w = prop.evolve(&w, 1.0).unwrap().state;
        drift = drift.max((prop.energy(&w) - e0).abs() / e0.abs());
    }
    let pass = unitary < UNITARY_TOL && (RICHARDSON.0..=RICHARDSON.1).contains(&ratio) && drift < DRIFT_TOL;
    (pass, format!("unitarity/group {unitary:.1e}, Richardson {ratio:.3}, drift {drift:.1e}"))
}

fn ladder_passes(d: &[f64]) -> bool {
    d.len() == LADDER.len() - 1 && d.windows(2).all(|w| w[1] < w[0]) && d[d.len() - 1] < LADDER_RATIO * d[0]
}

fn wave_operator() -> (bool, String) {
    let setup = wave_op_setup();
    let u = packet(&setup, &WavePacket::new([1.2, 0.0, 0.0], 0.12));
    let run = |rho: f64, kind: IdentKind| {
        let wo = WaveOperator::new(kind, &relax(rho), &setup, Sign::Plus).unwrap();
        time_convergence_study(&wo, &u, &LADDER).unwrap()
    };
    let main = run(0.9, IdentKind::Full);
    let iso = main.metrics.get("isometry_ratio").copied().unwrap_or(f64::NAN);
    let main_ok = ladder_passes(&main.distances) && (ISOMETRY_BAND.0..=ISOMETRY_BAND.1).contains(&iso);
    let short_long = run(0.9, IdentKind::Identity);
    let short = run(1.5, IdentKind::Identity);
    let contrast = !ladder_passes(&short_long.distances) && ladder_passes(&short.distances);
    (
        main_ok && contrast,
        format!(
            "rho 0.9 J {} iso {iso:.4}; rho 0.9 J=I {} (must fail: {}); rho 1.5 J=I {} (must pass: {})",
            fmt_list(&main.distances),
            fmt_list(&short_long.distances),
            !ladder_passes(&short_long.distances),
            fmt_list(&short.distances),
            ladder_passes(&short.distances)
        ),
    )
}

fn h_sweep() -> (bool, String) {
    let setup = wave_op_setup();
    let panel: Vec<SpinorGrid> = default_panel(0.12).iter().map(|p| packet(&setup, p)).collect();
    let hs: Vec<f64> = (0..9).map(|i| 2f64.powi(i)).collect();
    let r = h_sweep_study(IdentKind::Full, &relax(0.9), &setup, &panel, &hs, 40.0, &LADDER).unwrap();
    let d = &r.distances;
    let monotone = d.windows(2).all(|w| w[1] <= w[0]) && d[d.len() - 1] < H_RATIO * d[0];
    let proxy = r.metrics.get("interchange_proxy").copied().unwrap_or(f64::NAN);
    let proxy_ok = proxy <= 2.0 * d[d.len() - 1];
    let stat = make_family("static", 0.9, 0.2, 10.0, None).unwrap();
    let c = h_sweep_study(IdentKind::Full, &stat, &setup, &panel, &hs, 40.0, &LADDER).unwrap();
    let control = c.distances.iter().cloned().fold(0.0, f64::max);
    (
        monotone && proxy_ok && control < STATIC_TOL,
        format!("d(h) {}, proxy {proxy:.3e} vs 2 d(h_max), static control {control:.1e}", fmt_list(d)),
    )
}

fn equivalence() -> (bool, String) {
    let setup = wave_op_setup();
    let u = packet(&setup, &WavePacket::new([1.2, 0.0, 0.0], 0.12));
    let build = |kind, fam: &PotentialFamily| Ident::build(kind, fam, &setup, Sign::Plus).unwrap();
    let f09 = relax(0.9);
    let full09 = build(IdentKind::Full, &f09);
    let pp = identification_equivalence_study(&full09, &build(IdentKind::PhaseP0, &f09), &u, &LADDER, MASS, PHASE_P0_FACTOR).unwrap();
    let f1 = relax(1.0);
    let hf = identification_equivalence_study(&build(IdentKind::Full, &f1), &build(IdentKind::HFree, &f1), &u, &LADDER, MASS, 1.0).unwrap();
    let ctl = identification_equivalence_study(&full09, &build(IdentKind::Full, &f09), &u, &LADDER, MASS, PHASE_P0_FACTOR).unwrap();
    let control = ctl.distances.iter().cloned().fold(0.0, f64::max);
    let pp_ok = pp.distances.len() == LADDER.len() && pp.distances[3] < PHASE_P0_FACTOR * pp.distances[0];
    let hf_ok = hf.distances.len() == LADDER.len() && hf.distances.windows(2).all(|w| w[1] < w[0]);
    (
        pp_ok && hf_ok && control == 0.0,
        format!("full vs phase-p0 e {}, full vs h-free (rho 1) e {}, control {control:.1e}", fmt_list(&pp.distances), fmt_list(&hf.distances)),
    )
}

fn main() {
    let strict = std::env::var("LRDIRAC_ACCEPTANCE_STRICT").map_or(false, |v| v == "1");
    let only: Option<Vec<usize>> =
        std::env::var("LRDIRAC_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    type Suite = fn() -> (bool, String);
    let suites: [(usize, &'static str, u64, Suite); 10] = [
        (1, "algebra", 1, algebra),
        (2, "decay", 30, decay),
        (3, "phase", 120, phase),
        (4, "amplitude", 60, amplitude),
        (5, "residual", 120, residual),
        (6, "psdo", 300, psdo),
        (7, "propagator", 120, propagator),
        (8, "wave-operator", 1200, wave_operator),
        (9, "h-sweep", 1800, h_sweep),
        (10, "equivalence", 900, equivalence),
    ];
    let mut lines = Vec::new();
    for (id, name, budget, f) in suites {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = match std::panic::catch_unwind(f) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("aborted: {}", msg.unwrap_or_default()))
            }
        };
        let line = Line { id, name, pass, detail, elapsed: t0.elapsed(), budget: Duration::from_secs(budget) };
        let ok = line.pass && line.elapsed <= line.budget;
        println!(
            "{} {:>2} {:<14} {:.1}s/{}s  {}",
            if ok { "PASS" } else { "FAIL" },
            line.id,
            line.name,
            line.elapsed.as_secs_f64(),
            line.budget.as_secs(),
            line.detail
        );
        lines.push(ok);
    }
    let failed = lines.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} of {} criteria pass", lines.len() - failed, lines.len());
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

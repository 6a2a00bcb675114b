//! Subcommand orchestration for the `lrdirac` binary.

use crate::algebra::{algebra_check, Branch, ALGEBRA_TOL};
use crate::amplitude::AmplitudeModel;
use crate::config::ExperimentConfig;
use crate::eikonal::{gradient_fd_check, phase_bound_check, phase_build, Sign, PHASE_BOUND_SLACK};
use crate::error::{LabError, Result};
use crate::fit::logspace;
use crate::grid::SpinorGrid;
use crate::lab::{
    h_sweep_study, identification_equivalence_study, isometry_check, make_wavepacket, time_convergence_study,
    ConvergenceReport, Ident, WaveOperator, ISOMETRY_TOL,
};
use crate::potential::{verify_decay, DECAY_SLACK};
use crate::propagate::{eigenfunction_residual, free_evolve, richardson_ratio, StrangPropagator, RESIDUAL_SLACK};
use crate::report::emit_run;
use clap::{Parser, ValueEnum};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    AlgebraCheck,
    DecayCheck,
    PhaseCheck,
    Residual,
    Evolve,
    WaveOp,
    HSweep,
    Equivalence,
    AdjointCheck,
}

impl Subcommand {
    pub fn from_name(name: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(name, false).ok()
    }

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::AlgebraCheck => "algebra-check",
            Subcommand::DecayCheck => "decay-check",
            Subcommand::PhaseCheck => "phase-check",
            Subcommand::Residual => "residual",
            Subcommand::Evolve => "evolve",
            Subcommand::WaveOp => "wave-op",
            Subcommand::HSweep => "h-sweep",
            Subcommand::Equivalence => "equivalence",
            Subcommand::AdjointCheck => "adjoint-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lrdirac", version, about = "Modified wave operators for long-range Dirac scattering")]
pub struct Args {
    pub subcommand: Subcommand,
    /// TOML configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// output directory (overrides output.dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// KEY=VALUE overrides applied after the file and the environment
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

pub struct Outcome {
    pub reports: Vec<ConvergenceReport>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

fn simple(study: &str, abscissa: &str, xs: Vec<f64>, ds: Vec<f64>, fit: Option<f64>, pass: bool) -> ConvergenceReport {
    ConvergenceReport {
        study: study.into(),
        abscissa: abscissa.into(),
        abscissae: xs,
        distances: ds,
        fitted_exponent: fit,
        pass,
        notes: Vec::new(),
        metrics: BTreeMap::new(),
    }
}

fn tol(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// |ζ| range of the window plateau.
fn plateau_k(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let (a, b) = cfg.window()?.plateau();
    Ok((a.max(0.0).sqrt(), b.sqrt()))
}

fn first_packet(cfg: &ExperimentConfig) -> Result<SpinorGrid> {
    let setup = cfg.lab_setup()?;
    let p = &cfg.packets()?[0];
    make_wavepacket(&setup.geom, p, &setup.window, setup.mass, Branch::Positive)
}

fn random_grid(geom: crate::grid::GridGeom, rng: &mut ChaCha8Rng) -> SpinorGrid {
    SpinorGrid::from_fn(geom, |_| {
        let mut v = [C64::new(0.0, 0.0); 4];
        for c in v.iter_mut() {
            *c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        v
    })
}

pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let samples = cfg.usize("checks.samples")?;
    match sub {
        Subcommand::AlgebraCheck => {
            let r = algebra_check(1000, cfg.mass()?, seed);
            let mut rep = simple(
                "algebra",
                "identity",
                vec![0.0, 1.0, 2.0, 3.0],
                vec![r.clifford, r.projector, r.spectral, r.hermiticity],
                None,
                r.pass,
            );
            rep.notes.push("rows: clifford, projector, spectral, hermiticity".into());
            rep.metrics.insert("samples".into(), r.samples as f64);
            Ok(Outcome { reports: vec![rep], tolerances: tol(&[("algebra", ALGEBRA_TOL)]) })
        }
        Subcommand::DecayCheck => {
            let fam = cfg.family()?;
            let d = verify_decay(&fam, 2, samples.max(4), seed)?;
            let reports = d
                .orders
                .iter()
                .map(|o| {
                    let mut r = simple(
                        &format!("decay-order-{}", o.order),
                        "r",
                        d.radii.clone(),
                        o.envelope.clone(),
                        o.fitted_exponent,
                        o.pass,
                    );
                    r.metrics.insert("target_exponent".into(), o.target_exponent);
                    r.metrics.insert("constant".into(), o.constant);
                    r.metrics.insert("uniform_in_h".into(), if o.uniform_in_h { 1.0 } else { 0.0 });
                    r
                })
                .collect();
            Ok(Outcome { reports, tolerances: tol(&[("exponent_slack", DECAY_SLACK)]) })
        }
        Subcommand::PhaseCheck => {
            let fam = cfg.family()?;
            let setup = cfg.lab_setup()?;
            let radii = cfg.f64_list("phase.radii")?;
            if radii.len() != 2 || !(radii[0] > 0.0 && radii[1] > radii[0]) {
                return Err(LabError::config("phase.radii", "expected [r_min, r_max] with 0 < r_min < r_max"));
            }
            let mut quad = setup.quad.clone();
            quad.t_max = quad.t_max.max(100.0 * radii[1]);
            let model = phase_build(&fam, fam.h, Sign::Plus, setup.terms(&fam)?, Branch::Positive, setup.mass, &quad)?;
            let k = plateau_k(cfg)?;
            let b = phase_bound_check(&model, setup.cone.nu, samples, (radii[0], radii[1]), 9, k, seed)?;
            let mut reports = Vec::new();
            for (fit, ys) in [(&b.phase_fit, &b.max_phase), (&b.grad_fit, &b.max_grad)] {
                let mut r = simple(&format!("phase-bound-{}", fit.label), "r", b.radii.clone(), ys.clone(), fit.exponent, fit.pass);
                r.metrics.insert("bound_exponent".into(), fit.bound);
                r.metrics.insert("constant".into(), fit.constant);
                reports.push(r);
            }
            let errs = gradient_fd_check(&model, setup.cone.nu, samples, (2.0, 50.0), k, seed ^ 0x5eed)?;
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            let idx: Vec<f64> = (0..errs.len()).map(|i| i as f64).collect();
            reports.push(simple("phase-gradient-fd", "sample", idx, errs, None, worst < 1e-5));
            Ok(Outcome {
                reports,
                tolerances: tol(&[("exponent_slack", PHASE_BOUND_SLACK), ("gradient_fd", 1e-5)]),
            })
        }
        Subcommand::Residual => {
            let fam = cfg.family()?;
            let setup = cfg.lab_setup()?;
            let rr = cfg.f64_list("residual.radii")?;
            if rr.len() != 2 || !(rr[0] > 0.0 && rr[1] > rr[0]) {
                return Err(LabError::config("residual.radii", "expected [r_min, r_max] with 0 < r_min < r_max"));
            }
            let mut quad = setup.quad.clone();
            quad.t_max = quad.t_max.max(100.0 * rr[1]);
            let model = phase_build(&fam, fam.h, Sign::Plus, setup.terms(&fam)?, Branch::Positive, setup.mass, &quad)?;
            let amp = AmplitudeModel::new(model.clone(), fam, Branch::Positive, setup.mass);
            let zeta = cfg.packets()?[0].zeta0;
            let radii = logspace(rr[0], rr[1], cfg.usize("residual.count")?.max(3));
            let rep = eigenfunction_residual(&model, &amp, &zeta, &zeta, &radii, 0.02)?;
            let mut r = simple("residual", "r", rep.radii, rep.residuals, rep.slope, rep.pass);
            r.metrics.insert("epsilon".into(), rep.epsilon);
            r.metrics.insert("bound".into(), rep.bound);
            if !rep.note.is_empty() {
                r.notes.push(rep.note);
            }
            Ok(Outcome { reports: vec![r], tolerances: tol(&[("slope_slack", RESIDUAL_SLACK)]) })
        }
        Subcommand::Evolve => {
            let fam = cfg.family()?;
            let setup = cfg.lab_setup()?;
            let u = first_packet(cfg)?;
            let t_end = cfg.f64("evolve.t")?;
            if !(t_end > 0.0) {
                return Err(LabError::config("evolve.t", "evolution time must be positive"));
            }
            // free: unitarity and group law
            let a = free_evolve(&free_evolve(&u, 0.3 * t_end, setup.mass), 0.7 * t_end, setup.mass);
            let b = free_evolve(&u, t_end, setup.mass);
            let free_err = vec![(b.norm() - u.norm()).abs(), a.distance(&b)];
            let free_rep = simple("free-evolution", "check", vec![0.0, 1.0], free_err.clone(), None, free_err.iter().all(|&e| e < 1e-10));
            // interacting: energy drift, sampled once per time unit
            let prop = StrangPropagator::new(setup.geom, &fam, setup.mass, setup.dt)?;
            let e0 = prop.energy(&u);
            let chunk = if t_end >= 1.0 { 1.0 } else { t_end };
            let n = (t_end / chunk).round() as usize;
            let mut w = u.clone();
            let (mut ts, mut drift) = (Vec::new(), Vec::new());
            let mut notes = Vec::new();
            for i in 1..=n {
                let ev = prop.evolve(&w, chunk)?;
                notes.extend(ev.warning);
                w = ev.state;
                ts.push(i as f64 * chunk);
                drift.push((prop.energy(&w) - e0).abs() / e0.abs());
            }
            let norm_drift = (w.norm() - u.norm()).abs();
            let worst = drift.iter().cloned().fold(0.0, f64::max);
            let mut energy = simple("energy-drift", "t", ts, drift, None, worst < 1e-6 && norm_drift < 1e-10);
            energy.metrics.insert("norm_drift".into(), norm_drift);
            energy.notes = notes;
            let ratio = richardson_ratio(&u, t_end, setup.dt, &fam, setup.mass)?;
            let mut rich = simple(
                "richardson",
                "dt",
                vec![setup.dt, setup.dt / 2.0],
                vec![f64::NAN, f64::NAN],
                None,
                (3.4..=4.6).contains(&ratio),
            );
            {
                let s1 = crate::propagate::interacting_evolve(&u, t_end, setup.dt, &fam, setup.mass)?.state;
                let s2 = crate::propagate::interacting_evolve(&u, t_end, setup.dt / 2.0, &fam, setup.mass)?.state;
                let s4 = crate::propagate::interacting_evolve(&u, t_end, setup.dt / 4.0, &fam, setup.mass)?.state;
                rich.distances = vec![s1.distance(&s2), s2.distance(&s4)];
            }
            rich.metrics.insert("ratio".into(), ratio);
            Ok(Outcome {
                reports: vec![free_rep, energy, rich],
                tolerances: tol(&[("unitarity", 1e-10), ("energy_drift", 1e-6), ("richardson_lo", 3.4), ("richardson_hi", 4.6)]),
            })
        }
        Subcommand::WaveOp => {
            let fam = cfg.family()?;
            let setup = cfg.lab_setup()?;
            let u = first_packet(cfg)?;
            let kind = cfg.identification("experiment.identification")?;
            let times = cfg.f64_list("ladder.t")?;
            let wo = WaveOperator::new(kind, &fam, &setup, Sign::Plus)?;
            let ladder = time_convergence_study(&wo, &u, &times)?;
            let mut reports = vec![];
            let t_star = ladder.metrics.get("t_star").copied();
            if let Some(ts) = t_star {
                let iso = isometry_check(&wo, &u, ts, &setup.window)?;
                let mut r = simple("isometry", "t", vec![ts], vec![(iso.ratio - 1.0).abs()], None, iso.pass);
                r.metrics.insert("ratio".into(), iso.ratio);
                r.metrics.insert("window_fraction".into(), iso.window_fraction);
                if !iso.note.is_empty() {
                    r.notes.push(iso.note);
                }
                reports.push(r);
            }
            reports.insert(0, ladder);
            Ok(Outcome { reports, tolerances: tol(&[("ladder_ratio", 0.25), ("isometry", ISOMETRY_TOL)]) })
        }
        Subcommand::HSweep => {
            let fam = cfg.family()?;
            let setup = cfg.lab_setup()?;
            let kind = cfg.identification("experiment.identification")?;
            let panel = cfg
                .packets()?
                .iter()
                .map(|p| make_wavepacket(&setup.geom, p, &setup.window, setup.mass, Branch::Positive))
                .collect::<Result<Vec<_>>>()?;
            let times = cfg.f64_list("ladder.t")?;
            let t_star = *times.last().ok_or_else(|| LabError::config("ladder.t", "empty time ladder"))?;
            let r = h_sweep_study(kind, &fam, &setup, &panel, &cfg.f64_list("ladder.h")?, t_star, &times)?;
            Ok(Outcome { reports: vec![r], tolerances: tol(&[("h_ratio", 0.1)]) })
        }
        Subcommand::Equivalence => {
            let fam = cfg.family()?;
            let setup = cfg.lab_setup()?;
            let u = first_packet(cfg)?;
            let a = Ident::build(cfg.identification("experiment.identification")?, &fam, &setup, Sign::Plus)?;
            let b = Ident::build(cfg.identification("experiment.compare")?, &fam, &setup, Sign::Plus)?;
            let factor = cfg.f64("experiment.factor")?;
            let r = identification_equivalence_study(&a, &b, &u, &cfg.f64_list("ladder.t")?, setup.mass, factor)?;
            Ok(Outcome { reports: vec![r], tolerances: tol(&[("decay_factor", factor)]) })
        }
        Subcommand::AdjointCheck => {
            let fam = cfg.family()?;
            let setup = cfg.lab_setup()?;
            let kind = cfg.identification("experiment.identification")?;
            let j = Ident::build(kind, &fam, &setup, Sign::Plus)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_grid(setup.geom, &mut rng);
            let f = random_grid(setup.geom, &mut rng);
            let jg = j.apply_many(std::slice::from_ref(&g))?.pop().unwrap();
            let jf = j.adjoint(&f)?;
            let (lhs, rhs) = (jg.inner(&f), g.inner(&jf));
            let rel = (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
            let mut r = simple("adjoint-pairing", "sample", vec![0.0], vec![rel], None, rel < 1e-12);
            r.metrics.insert("pairing_re".into(), lhs.re);
            r.metrics.insert("pairing_im".into(), lhs.im);
            Ok(Outcome { reports: vec![r], tolerances: tol(&[("pairing", 1e-12)]) })
        }
    }
}

/// Parses `KEY=VALUE` strings.
pub fn parse_overrides(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| LabError::config(s.clone(), "override must look like KEY=VALUE"))
        })
        .collect()
}

/// Loads the configuration, runs, emits artifacts; returns the exit code.
pub fn execute(args: &Args, env: Vec<(String, String)>) -> i32 {
    let result = (|| -> Result<(Outcome, PathBuf)> {
        let overrides = parse_overrides(&args.set)?;
        let mut cfg = ExperimentConfig::load(args.config.as_deref(), env, &overrides)?;
        if let Some(out) = &args.out {
            cfg.set("output.dir", &format!("{:?}", out.display().to_string()))?;
        }
        let outcome = run(args.subcommand, &cfg)?;
        let dir = PathBuf::from(cfg.output_dir()?);
        let (manifest, _) = emit_run(Path::new(&dir), args.subcommand.name(), &outcome.reports, &cfg, outcome.tolerances.clone())?;
        Ok((outcome, manifest))
    })();
    match result {
        Ok((outcome, manifest)) => {
            for r in &outcome.reports {
                let fit = r.fitted_exponent.map_or("-".to_string(), |p| format!("{p:.4}"));
                let last = r.distances.last().map_or("-".to_string(), |d| format!("{d:.4e}"));
                println!("{} {} rows={} last={} fit={}", r.verdict(), r.study, r.distances.len(), last, fit);
                for n in &r.notes {
                    println!("  note: {n}");
                }
            }
            println!("manifest: {}", manifest.display());
            if outcome.pass() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

use lrdirac_ffi::*;
use std::ffi::CString;
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { lrdirac_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn config_lifecycle_and_errors() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(lrdirac_config_new(&mut cfg), LrdiracStatus::Ok);
        let key = CString::new("potential.rho").unwrap();
        let bad = CString::new("0.2").unwrap();
        assert_eq!(lrdirac_config_set(cfg, key.as_ptr(), bad.as_ptr()), LrdiracStatus::Ok);
        assert_eq!(lrdirac_config_validate(cfg), LrdiracStatus::Config);
        assert!(last_error().contains("potential.rho"));
        let unknown = CString::new("no.such").unwrap();
        assert_eq!(lrdirac_config_set(cfg, unknown.as_ptr(), bad.as_ptr()), LrdiracStatus::Config);
        assert!(last_error().contains("no.such"));
        assert_eq!(lrdirac_config_set(ptr::null_mut(), key.as_ptr(), bad.as_ptr()), LrdiracStatus::NullPointer);
        lrdirac_config_free(cfg);
        lrdirac_config_free(ptr::null_mut());
    }
}

#[test]
fn run_reports_through_handles() {
    unsafe {
        let toml = CString::new("seed = 7\n[checks]\nsamples = 20\n").unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(lrdirac_config_from_toml(toml.as_ptr(), &mut cfg), LrdiracStatus::Ok);
        let sub = CString::new("decay-check").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(lrdirac_run(cfg, sub.as_ptr(), &mut out), LrdiracStatus::Ok);
        assert_eq!(lrdirac_outcome_len(out), 3);
        assert_eq!(lrdirac_outcome_passed(out), 1);
        let (mut pass, mut rows, mut p) = (0, 0usize, 0.0);
        let mut xs = [0.0; 4];
        let status = lrdirac_outcome_report(out, 0, &mut pass, &mut rows, &mut p, xs.as_mut_ptr(), ptr::null_mut(), 4);
        assert_eq!(status, LrdiracStatus::BufferTooSmall);
        assert_eq!(rows, 20);
        let mut xs = vec![0.0; rows];
        let mut ds = vec![0.0; rows];
        let status = lrdirac_outcome_report(out, 0, &mut pass, &mut rows, &mut p, xs.as_mut_ptr(), ds.as_mut_ptr(), rows);
        assert_eq!(status, LrdiracStatus::Ok);
        assert_eq!(pass, 1);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        assert!(ds.iter().all(|d| d.is_finite() && *d > 0.0));
        let status = lrdirac_outcome_report(out, 9, &mut pass, &mut rows, &mut p, ptr::null_mut(), ptr::null_mut(), 0);
        assert_eq!(status, LrdiracStatus::InvalidArgument);
        lrdirac_outcome_free(out);
        let nope = CString::new("teleport").unwrap();
        assert_eq!(lrdirac_run(cfg, nope.as_ptr(), &mut out), LrdiracStatus::InvalidArgument);
        lrdirac_config_free(cfg);
    }
}

#[test]
fn projection_is_idempotent() {
    let zeta = [0.3, -0.7, 1.1];
    let mut s = [0.4, 0.1, -0.2, 0.9, 0.5, 0.0, 0.3, -0.6];
    unsafe {
        assert_eq!(lrdirac_project(zeta.as_ptr(), 1.0, 1, s.as_mut_ptr()), LrdiracStatus::Ok);
        let once = s;
        assert_eq!(lrdirac_project(zeta.as_ptr(), 1.0, 1, s.as_mut_ptr()), LrdiracStatus::Ok);
        for (a, b) in once.iter().zip(&s) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(lrdirac_project(zeta.as_ptr(), 1.0, 0, s.as_mut_ptr()), LrdiracStatus::InvalidArgument);
        let e = lrdirac_energy(zeta.as_ptr(), 1.0);
        assert!((e - (0.09f64 + 0.49 + 1.21 + 1.0).sqrt()).abs() < 1e-15);
    }
}

#[test]
fn header_declares_exports_and_compiles() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/lrdirac.h")).unwrap();
    for sym in [
        "lrdirac_last_error",
        "lrdirac_config_new",
        "lrdirac_config_from_toml",
        "lrdirac_config_set",
        "lrdirac_config_validate",
        "lrdirac_config_free",
        "lrdirac_run",
        "lrdirac_outcome_len",
        "lrdirac_outcome_passed",
        "lrdirac_outcome_report",
        "lrdirac_outcome_free",
        "lrdirac_energy",
        "lrdirac_project",
        "typedef struct LrdiracConfig LrdiracConfig;",
        "LRDIRAC_STATUS_BUFFER_TOO_SMALL = 6",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
    let src = std::env::temp_dir().join("lrdirac_header_check.c");
    std::fs::write(&src, "#include \"lrdirac.h\"\nint main(void) { return LRDIRAC_STATUS_OK; }\n").unwrap();
    if let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-I"]).arg(format!("{dir}/include")).arg(&src).status() {
        assert!(status.success());
    }
}

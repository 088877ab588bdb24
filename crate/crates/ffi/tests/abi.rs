// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::ffi::CStr;
use std::ptr;

use cdd_sense_ffi::*;

fn last_error() -> String {
    unsafe {
        let n = cdd_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; n.max(1)];
        cdd_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn config(g: f64) -> *mut CddDriveConfig {
    let mut cfg = ptr::null_mut();
    let st = unsafe { cdd_drive_config_new(2.0 * PI * 500.0, 2.0 * PI * 10.0, 2.0 * PI * 1.5, g, 0.0, &mut cfg) };
    assert_eq!(st, CddStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn resonances_and_hierarchy() {
    let cfg = config(2.0 * PI * 0.2);
    let mut r = [0.0; 4];
    let mut pass = false;
    unsafe {
        assert_eq!(cdd_resonances(cfg, r.as_mut_ptr()), CddStatus::Ok);
        assert_eq!(cdd_validate_hierarchy(cfg, 5.0, &mut pass), CddStatus::Ok);
        cdd_drive_config_free(cfg);
    }
    let w = 2.0 * PI;
    let expect = [w * (500.0 - 10.0 - 0.75), w * (500.0 - 10.0 + 0.75), w * (510.0 - 0.75), w * 510.75];
    for (a, b) in r.iter().zip(expect) {
        assert!((a - b).abs() < 1e-9 * b, "{a} vs {b}");
    }
    assert!(pass);
}

#[test]
fn null_and_invalid_arguments_are_reported() {
    unsafe {
        assert_eq!(
            cdd_drive_config_new(1.0, 1.0, 1.0, 0.0, 0.0, ptr::null_mut()),
            CddStatus::NullPointer
        );
        let mut cfg = ptr::null_mut();
        assert_eq!(cdd_drive_config_new(-1.0, 1.0, 1.0, 0.0, 0.0, &mut cfg), CddStatus::InvalidArgument);
        assert!(cfg.is_null());
        assert!(last_error().contains("omega0"), "{}", last_error());
        assert_eq!(cdd_resonances(ptr::null(), [0.0; 4].as_mut_ptr()), CddStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(cdd_bandwidth(0.0, &mut v), CddStatus::InvalidArgument);
        assert_eq!(cdd_trace_len(ptr::null()), 0);
        cdd_trace_free(ptr::null_mut());
        cdd_drive_config_free(ptr::null_mut());

        let cfg = config(0.1);
        let mut tr = ptr::null_mut();
        assert_eq!(cdd_simulate_strobe(cfg, ptr::null(), 7, 1.0, 1, 1, 1, &mut tr), CddStatus::InvalidArgument);
        assert!(tr.is_null());
        cdd_drive_config_free(cfg);
    }
}

#[test]
fn error_message_truncates_with_terminator() {
    unsafe {
        let mut v = 0.0;
        cdd_bandwidth(-1.0, &mut v);
        let full = cdd_last_error_message(ptr::null_mut(), 0);
        assert!(full > 5);
        let mut buf = [1 as std::ffi::c_char; 5];
        assert_eq!(cdd_last_error_message(buf.as_mut_ptr(), buf.len()), full);
        assert_eq!(buf[4], 0);
    }
}

#[test]
fn simulate_then_fit_recovers_the_dressed_rate() {
    let g = 2.0 * PI * 0.206;
    let cfg = config(g);
    let (times, signal, se) = unsafe {
        let mut tr = ptr::null_mut();
        assert_eq!(cdd_simulate_strobe(cfg, ptr::null(), CDD_FRAME_IP1, 60.0, 2, 1, 1, &mut tr), CddStatus::Ok);
        let n = cdd_trace_len(tr);
        assert!(n > 100);
        let mut t = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut s = vec![1.0; n];
        assert_eq!(cdd_trace_times(tr, t.as_mut_ptr(), n), CddStatus::Ok);
        assert_eq!(cdd_trace_signal(tr, y.as_mut_ptr(), n), CddStatus::Ok);
        assert_eq!(cdd_trace_stderr(tr, s.as_mut_ptr(), n), CddStatus::Ok);
        assert_eq!(cdd_trace_times(tr, t.as_mut_ptr(), n - 1), CddStatus::InvalidArgument);
        cdd_trace_free(tr);
        cdd_drive_config_free(cfg);
        (t, y, s)
    };
    assert!(se.iter().all(|&x| x == 0.0));
    let mut fit = CddFitResult::default();
    let st = unsafe { cdd_fit_damped_rabi(times.as_ptr(), signal.as_ptr(), ptr::null(), times.len(), &mut fit) };
    assert_eq!(st, CddStatus::Ok, "{}", last_error());
    assert!(fit.converged);
    assert_eq!(fit.model, CDD_MODEL_DAMPED_COSINE);
    // g/4 in cycles, within the dressed-state shift of a few percent
    let expect = g / 4.0 / (2.0 * PI);
    assert!((fit.frequency - expect).abs() < 0.04 * expect, "{} vs {expect}", fit.frequency);
}

#[test]
fn noisy_runs_are_seed_deterministic() {
    let cfg = config(2.0 * PI * 0.206);
    let noise = CddNoiseParams {
        sigma_b: 3.8,
        tau_b: 9.25,
        sigma_omega1: 1e-3,
        tau_omega1: 10.0,
        sigma_omega2: 5e-3,
        tau_omega2: 10.0,
        t1: 962.0,
    };
    let run = |seed| unsafe {
        let mut tr = ptr::null_mut();
        assert_eq!(cdd_simulate_strobe(cfg, &noise, CDD_FRAME_IP1, 10.0, 4, 4, seed, &mut tr), CddStatus::Ok);
        let n = cdd_trace_len(tr);
        let mut y = vec![0.0; n];
        cdd_trace_signal(tr, y.as_mut_ptr(), n);
        cdd_trace_free(tr);
        y
    };
    let a = run(3);
    assert_eq!(a, run(3));
    assert_ne!(a, run(4));
    unsafe { cdd_drive_config_free(cfg) };
}

#[test]
fn sensitivity_formulas() {
    let (sigma, tau, alpha, c, gamma) = (0.01, 1e-3, 0.5, 0.3, 2.0 * PI * 28e9);
    let (mut b, mut eta, mut bw) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(cdd_min_field(sigma, tau, alpha, c, gamma, &mut b), CddStatus::Ok);
        assert_eq!(cdd_sensitivity(sigma, tau, alpha, c, gamma, 4.0, &mut eta), CddStatus::Ok);
        assert_eq!(cdd_bandwidth(250.0, &mut bw), CddStatus::Ok);
    }
    let expect = sigma / (gamma * alpha * tau * c);
    assert!((b - expect).abs() < 1e-12 * expect);
    assert!((eta - 2.0 * expect).abs() < 1e-12 * expect);
    assert_eq!(bw, 1.0 / 250.0);
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(cdd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cdd_sense.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exported: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for name in exported {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct CddTrace CddTrace;"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = std::env::temp_dir().join(format!("cdd_ffi_hdr_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        "#include \"cdd_sense.h\"\n\
         int main(void) {\n\
           CddDriveConfig *cfg = 0;\n\
           CddStatus st = cdd_drive_config_new(1.0, 0.1, 0.01, 0.0, 0.0, &cfg);\n\
           cdd_drive_config_free(cfg);\n\
           return st == CDD_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc);
        }
    }
    Err(())
}

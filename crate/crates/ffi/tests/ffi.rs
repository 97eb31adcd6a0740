use std::ffi::{CStr, CString};
use std::ptr;

use iiclab_ffi::*;

fn last_error() -> String {
    let p = iiclab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(iiclab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(iiclab_config_new(2, 0, 0.5, 1, ptr::null_mut()), IiclabStatus::NullPointer);
        assert!(last_error().contains("out"));
        let mut e = IiclabEstimate::default();
        assert_eq!(iiclab_one_arm(ptr::null(), 3, 10, 1000, &mut e), IiclabStatus::NullPointer);
        iiclab_config_free(ptr::null_mut());
        iiclab_kernel_free(ptr::null_mut());
        iiclab_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_arguments_map_to_codes() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(iiclab_config_new(2, 0, 1.5, 1, &mut c), IiclabStatus::InvalidArgument);
        assert!(c.is_null());
        assert_eq!(iiclab_config_new(2, 0, 0.5, 1, &mut c), IiclabStatus::Ok);
        assert_eq!(iiclab_config_set_p(c, -0.1), IiclabStatus::InvalidArgument);
        let mut e = IiclabEstimate::default();
        let x = [1i32, 0, 0];
        assert_ne!(iiclab_two_point(c, x.as_ptr(), 3, 8, 10, 1000, &mut e), IiclabStatus::Ok);
        iiclab_config_free(c);

        let mut k = ptr::null_mut();
        let bad = [1.0, 0.0, 1.0, 1.0];
        assert_eq!(iiclab_kernel_new(2, 2, bad.as_ptr(), &mut k), IiclabStatus::InvalidArgument);
        assert_eq!(iiclab_kernel_new(0, 2, bad.as_ptr(), &mut k), IiclabStatus::InvalidArgument);
    }
}

#[test]
fn estimates_match_the_library() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(iiclab_config_new(2, 0, 0.5, 7, &mut c), IiclabStatus::Ok);
        let mut e = IiclabEstimate::default();
        assert_eq!(iiclab_one_arm(c, 4, 500, 1 << 16, &mut e), IiclabStatus::Ok);
        let spec = iiclab::lattice::LatticeSpec::nearest_neighbor(2).unwrap();
        let cfg = iiclab::engine::PercolationConfig::new(spec, 0.5, 7).unwrap();
        let r = iiclab::estimators::one_arm_profile(&cfg, &[4], 500, 1 << 16).unwrap();
        assert_eq!(e, IiclabEstimate::from(&r[0].1));
        assert_eq!((e.n_samples, e.seed), (500, 7));

        let x = [1i32, 0];
        let mut t = IiclabEstimate::default();
        assert_eq!(iiclab_two_point(c, x.as_ptr(), 2, 4, 400, 1 << 16, &mut t), IiclabStatus::Ok);
        assert!(t.value > 0.5 && t.value <= 1.0);
        iiclab_config_free(c);
    }
}

#[test]
fn kernel_round_trip() {
    unsafe {
        let mut k = ptr::null_mut();
        let m = [2.0, 1.0, 1.0, 2.0];
        assert_eq!(iiclab_kernel_new(2, 2, m.as_ptr(), &mut k), IiclabStatus::Ok);
        let (mut kappa, mut c) = (0.0, 0.0);
        assert_eq!(iiclab_kernel_kappa(k, &mut kappa, &mut c), IiclabStatus::Ok);
        // Largest cross ratio is (2*2)/(1*1) = 4, so kappa = 2.
        assert!((kappa - 2.0).abs() < 1e-12);
        assert!((c - 1.0 / 3.0).abs() < 1e-12);
        let f = [1.0, 3.0];
        let mut out = [0.0; 2];
        assert_eq!(iiclab_kernel_apply(k, f.as_ptr(), 2, out.as_mut_ptr(), 2), IiclabStatus::Ok);
        assert_eq!(out, [5.0, 7.0]);
        assert_eq!(iiclab_kernel_apply(k, f.as_ptr(), 2, out.as_mut_ptr(), 3), IiclabStatus::InvalidArgument);
        iiclab_kernel_free(k);

        let g = [1.0, 1.0];
        let mut osc = 0.0;
        assert_eq!(iiclab_oscillation(f.as_ptr(), g.as_ptr(), 2, &mut osc), IiclabStatus::Ok);
        assert!(osc > 0.0);
    }
}

#[test]
fn run_command_returns_json() {
    unsafe {
        let cmd = CString::new("hopf-demo").unwrap();
        let conf = CString::new("[hopf]\nkernels = 5\nsteps = 3").unwrap();
        let (mut out, mut code) = (ptr::null_mut(), -1);
        assert_eq!(iiclab_run_command(cmd.as_ptr(), conf.as_ptr(), 3, &mut out, &mut code), IiclabStatus::Ok);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
        assert!(v.is_object());
        iiclab_string_free(out);

        let bad = CString::new("no-such").unwrap();
        assert_eq!(iiclab_run_command(bad.as_ptr(), conf.as_ptr(), 3, &mut out, &mut code), IiclabStatus::Config);
        let broken = CString::new("x = [").unwrap();
        assert_eq!(iiclab_run_command(cmd.as_ptr(), broken.as_ptr(), 3, &mut out, &mut code), IiclabStatus::Config);
    }
}

#[test]
fn header_declares_every_export() {
    let h = include_str!("../include/iiclab.h");
    for f in [
        "iiclab_last_error",
        "iiclab_version",
        "iiclab_config_new",
        "iiclab_config_free",
        "iiclab_config_set_p",
        "iiclab_one_arm",
        "iiclab_two_point",
        "iiclab_kernel_new",
        "iiclab_kernel_free",
        "iiclab_kernel_kappa",
        "iiclab_kernel_apply",
        "iiclab_oscillation",
        "iiclab_run_command",
        "iiclab_string_free",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f}");
    }
    assert!(h.contains("IICLAB_STATUS_NULL_POINTER = 1"));
}

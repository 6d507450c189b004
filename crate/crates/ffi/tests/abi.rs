use std::ffi::{CStr, CString};
use std::ptr;

use spinlab_ffi::*;

fn last_error() -> String {
    let p = spinlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_lifecycle_and_free_energy() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(spinlab_model_sk(&mut model), SpinlabStatus::Ok);
        assert_eq!(spinlab_model_species(model), 1);
        let (mut mean, mut err) = (f64::NAN, f64::NAN);
        let s = spinlab_quenched_free_energy(model, 8, 0.0, 4, 1, &mut mean, &mut err);
        assert_eq!(s, SpinlabStatus::Ok);
        assert_eq!((mean, err), (0.0, 0.0));
        // enriched at t = 0, h = 0 vanishes
        let h = [0.0];
        let s = spinlab_enriched_free_energy(model, 8, 0.0, h.as_ptr(), 1, 4, 1, &mut mean, &mut err);
        assert_eq!(s, SpinlabStatus::Ok);
        assert!(mean.abs() < 1e-12);
        spinlab_model_free(model);
        spinlab_model_free(ptr::null_mut());
    }
}

#[test]
fn errors_carry_messages() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(spinlab_model_bipartite(0.5, 0.7, &mut model), SpinlabStatus::InvalidArgument);
        assert!(model.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(spinlab_model_sk(ptr::null_mut()), SpinlabStatus::NullPointer);
        assert!(last_error().contains("out"));
        let bad = CString::new("name = 1").unwrap();
        assert_eq!(spinlab_model_from_toml(bad.as_ptr(), &mut model), SpinlabStatus::InvalidArgument);
        // wrong species count for the field vector
        assert_eq!(spinlab_model_sk(&mut model), SpinlabStatus::Ok);
        let (mut mean, mut err) = (0.0, 0.0);
        let h = [0.1, 0.2];
        let s = spinlab_enriched_free_energy(model, 8, 0.1, h.as_ptr(), 2, 4, 1, &mut mean, &mut err);
        assert_eq!(s, SpinlabStatus::InvalidArgument);
        spinlab_model_free(model);
    }
}

#[test]
fn toml_round_trip() {
    let text = CString::new(std::fs::read_to_string("../../models/bipartite.toml").unwrap()).unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(spinlab_model_from_toml(text.as_ptr(), &mut model), SpinlabStatus::Ok);
        assert_eq!(spinlab_model_species(model), 2);
        spinlab_model_free(model);
    }
}

#[test]
fn parisi_dirac_at_zero() {
    unsafe {
        let mut m = ptr::null_mut();
        let (a, w) = ([0.0], [1.0]);
        assert_eq!(spinlab_measure_new(a.as_ptr(), w.as_ptr(), 1, &mut m), SpinlabStatus::Ok);
        let mut v = f64::NAN;
        assert_eq!(spinlab_parisi_functional(m, 0.7, &mut v), SpinlabStatus::Ok);
        assert!((v - 0.245).abs() < 1e-8);
        spinlab_measure_free(m);
        let (a, w) = ([0.5], [0.9]);
        assert_eq!(spinlab_measure_new(a.as_ptr(), w.as_ptr(), 1, &mut m), SpinlabStatus::InvalidArgument);
    }
}

#[test]
fn psi1_entry_points_agree() {
    let h = 0.4;
    let mesh = [0.0, 0.5, 1.0];
    let values = [h, h];
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(spinlab_psi1_path(mesh.as_ptr(), values.as_ptr(), 2, &mut v), SpinlabStatus::Ok);
    }
    assert!((v - spinlab_psi1_scalar(h)).abs() < 1e-6);
    assert!(spinlab_psi1_scalar(-1.0).is_nan());
    let bad = [0.3, 0.1];
    unsafe {
        assert_eq!(spinlab_psi1_path(mesh.as_ptr(), bad.as_ptr(), 2, &mut v), SpinlabStatus::InvalidArgument);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(spinlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/spinlab.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["spinlab_model_sk", "spinlab_last_error", "SPINLAB_STATUS_NULL_POINTER", "spinlab_psi1_path"] {
        assert!(text.contains(name), "{name} missing from the header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ SpinlabModel *m = 0; return spinlab_model_sk(&m) == SPINLAB_STATUS_OK ? 0 : 1; }}\n"
        ),
    )
    .unwrap();
    match std::process::Command::new("cc").arg("-fsyntax-only").arg(&src).status() {
        Ok(status) => assert!(status.success()),
        Err(_) => eprintln!("no C compiler found; syntax check skipped"),
    }
}

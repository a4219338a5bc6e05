use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use softq_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe {
        softq_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn random_model(n: usize, blocks: usize, seed: u64) -> *mut SoftqSoftModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { softq_soft_model_random(n, blocks, seed, &mut m) }, SoftqStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn forward_and_json_round_trip() {
    let m = random_model(2, 3, 5);
    let mut y = 0.0;
    assert_eq!(unsafe { softq_soft_model_forward(m, 1.3, &mut y) }, SoftqStatus::Ok);

    let mut need = 0usize;
    assert_eq!(unsafe { softq_soft_model_to_json(m, ptr::null_mut(), 0, &mut need) }, SoftqStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; need];
    assert_eq!(unsafe { softq_soft_model_to_json(m, buf.as_mut_ptr(), buf.len(), &mut need) }, SoftqStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { softq_soft_model_from_json(buf.as_ptr(), &mut back) }, SoftqStatus::Ok);
    let mut y2 = 0.0;
    assert_eq!(unsafe { softq_soft_model_forward(back, 1.3, &mut y2) }, SoftqStatus::Ok);
    assert_eq!(y.to_bits(), y2.to_bits());
    unsafe {
        softq_soft_model_free(m);
        softq_soft_model_free(back);
    }
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { softq_soft_model_random(0, 1, 0, &mut m) }, SoftqStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(!last_error().is_empty());
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { softq_soft_model_from_json(bad.as_ptr(), &mut m) }, SoftqStatus::Parse);
    assert_eq!(unsafe { softq_soft_model_forward(ptr::null(), 0.0, ptr::null_mut()) }, SoftqStatus::NullPointer);
    let m = random_model(1, 1, 0);
    let mut out = ptr::null_mut();
    let xs = [0.1, 0.2];
    let labels = [0u8, 7];
    let s = unsafe { softq_soft_model_train(m, xs.as_ptr(), labels.as_ptr(), 2, 1, 0.01, 1.0, 0, &mut out) };
    assert_eq!(s, SoftqStatus::InvalidArgument);
    assert!(last_error().contains("label"));
    unsafe {
        softq_soft_model_free(m);
        softq_soft_model_free(ptr::null_mut());
    }
}

#[test]
fn train_then_align() {
    let m = random_model(2, 2, 1);
    let xs: Vec<f64> = (0..20).map(|k| k as f64 * 0.31).collect();
    let labels: Vec<u8> = xs.iter().map(|&x| u8::from(x > 2.0 && x < 4.0)).collect();
    let mut trained = ptr::null_mut();
    let s = unsafe { softq_soft_model_train(m, xs.as_ptr(), labels.as_ptr(), xs.len(), 20, 1e-3, 1000.0, 2, &mut trained) };
    assert_eq!(s, SoftqStatus::Ok, "{}", last_error());
    let mut dev = 1.0;
    assert_eq!(unsafe { softq_soft_model_unitarity_deviation(trained, &mut dev) }, SoftqStatus::Ok);
    assert!(dev < 0.1);

    let mut aligned = ptr::null_mut();
    assert_eq!(unsafe { softq_align(trained, 0, 30, 3, &mut aligned) }, SoftqStatus::Ok, "{}", last_error());
    let (mut loss, mut ya, mut ys) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(softq_aligned_loss(aligned, &mut loss), SoftqStatus::Ok);
        assert_eq!(softq_aligned_forward(aligned, 0.4, &mut ya), SoftqStatus::Ok);
        assert_eq!(softq_soft_model_forward(trained, 0.4, &mut ys), SoftqStatus::Ok);
    }
    assert!(loss.is_finite() && loss >= 0.0);
    assert!((0.0..=1.0).contains(&ya) && (ya - ys).abs() < 1.0);
    unsafe {
        softq_aligned_free(aligned);
        softq_soft_model_free(trained);
        softq_soft_model_free(m);
    }
}

#[test]
fn circuit_runs_bell_state() {
    let json = CString::new(
        r#"{"n_qubits":2,"n_params":0,"gates":[{"kind":"H","targets":[0]},{"kind":"CNOT","targets":[0,1]}]}"#,
    )
    .unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { softq_circuit_from_json(json.as_ptr(), &mut c) }, SoftqStatus::Ok, "{}", last_error());
    let mut n = 0;
    assert_eq!(unsafe { softq_circuit_n_qubits(c, &mut n) }, SoftqStatus::Ok);
    assert_eq!(n, 2);
    let (mut re, mut im) = ([0.0; 4], [0.0; 4]);
    let s = unsafe { softq_circuit_run(c, ptr::null(), 0, re.as_mut_ptr(), im.as_mut_ptr(), 4) };
    assert_eq!(s, SoftqStatus::Ok, "{}", last_error());
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((re[0] - h).abs() < 1e-15 && (re[3] - h).abs() < 1e-15 && re[1] == 0.0 && re[2] == 0.0);
    assert!(im.iter().all(|v| *v == 0.0));
    assert_eq!(unsafe { softq_circuit_run(c, ptr::null(), 0, re.as_mut_ptr(), im.as_mut_ptr(), 3) }, SoftqStatus::BufferTooSmall);
    unsafe { softq_circuit_free(c) };
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(softq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles a C program against the generated header and static library.
#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libsoftq_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("softq_c_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}

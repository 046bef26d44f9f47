use std::ffi::{c_char, CStr};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use quadmap_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let mut needed = 0;
    assert_eq!(unsafe { qm_last_error_message(buf.as_mut_ptr(), buf.len(), &mut needed) }, QmStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned()
}

#[test]
fn census_count_and_buffer_sizes() {
    let mut buf = [0 as c_char; 32];
    let mut needed = 0;
    assert_eq!(unsafe { qm_census_count(3, 2, buf.as_mut_ptr(), buf.len(), &mut needed) }, QmStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "270");
    assert_eq!(needed, 4);
    assert_eq!(unsafe { qm_census_count(3, 2, buf.as_mut_ptr(), 3, &mut needed) }, QmStatus::BufferTooSmall);
    assert_eq!(needed, 4);
    assert_eq!(unsafe { qm_census_count(3, 2, ptr::null_mut(), 0, &mut needed) }, QmStatus::BufferTooSmall);
    assert_eq!(unsafe { qm_census_count(0, 2, buf.as_mut_ptr(), buf.len(), &mut needed) }, QmStatus::InvalidArgument);
}

#[test]
fn map_round_trip_and_probability() {
    let codec = c"T1,T2(0,1),T2(0,0)";
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { qm_map_decode(codec.as_ptr(), &mut map) }, QmStatus::Ok);
    let (mut l, mut f, mut h) = (0, 0, 0);
    assert_eq!(unsafe { qm_map_info(map, &mut l, &mut f, &mut h) }, QmStatus::Ok);
    assert_eq!((l, f, h), (1, 1, 0));
    let mut buf = [0 as c_char; 64];
    let mut needed = 0;
    assert_eq!(unsafe { qm_map_encode(map, buf.as_mut_ptr(), buf.len(), &mut needed) }, QmStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }, codec);
    let mut p = 0.0;
    assert_eq!(unsafe { qm_boltzmann_probability(map, 1.0 / 24.0, &mut p) }, QmStatus::Ok);
    let direct = quadmap::boltzmann::prob_exact(&quadmap::peeling::decode("T1,T2(0,1),T2(0,0)").unwrap(), &quadmap::boltzmann::BoltzmannParams::with_q(1.0 / 24.0)).unwrap();
    assert_eq!(p, direct);
    assert_eq!(unsafe { qm_boltzmann_probability(map, 0.5, &mut p) }, QmStatus::InvalidArgument);
    unsafe { qm_map_free(map) };
    unsafe { qm_map_free(ptr::null_mut()) };
}

#[test]
fn errors_are_reported() {
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { qm_map_decode(c"T9".as_ptr(), &mut map) }, QmStatus::Parse);
    assert!(map.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { qm_map_decode(ptr::null(), &mut map) }, QmStatus::NullPointer);
    assert_eq!(last_error(), "null pointer argument");
    assert_eq!(unsafe { qm_map_info(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, QmStatus::NullPointer);
    let mut out = 0.0;
    assert_eq!(unsafe { qm_bridge_mass(0.0, 1.0, -1.0, &mut out) }, QmStatus::InvalidArgument);
}

#[test]
fn samplers_are_deterministic() {
    let draw = |seed| {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { qm_sampler_new(2, 1.0 / 24.0, 60, seed, &mut s) }, QmStatus::Ok);
        let mut codes = Vec::new();
        for _ in 0..20 {
            let mut m = ptr::null_mut();
            assert_eq!(unsafe { qm_sampler_next(s, &mut m) }, QmStatus::Ok);
            let mut buf = vec![0 as c_char; 4096];
            let mut needed = 0;
            assert_eq!(unsafe { qm_map_encode(m, buf.as_mut_ptr(), buf.len(), &mut needed) }, QmStatus::Ok);
            codes.push(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned());
            unsafe { qm_map_free(m) };
        }
        unsafe { qm_sampler_free(s) };
        codes
    };
    assert_eq!(draw(5), draw(5));
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { qm_sampler_new(2, 0.2, 60, 1, &mut s) }, QmStatus::InvalidArgument);
}

#[test]
fn metric_chain_runs() {
    let b = [1.0, 1.0];
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { qm_metric_chain_new(1, b.as_ptr(), b.len(), 0.25, 1.0, 2, QmSpinMeasure::Ising, 9, &mut c) }, QmStatus::Ok);
    for _ in 0..50 {
        let (mut w, mut x) = (0.0, 0.0);
        assert_eq!(unsafe { qm_metric_chain_advance(c, &mut w, &mut x) }, QmStatus::Ok);
        assert!(w > 0.0);
        assert!(x == 1.0 || x == -1.0);
    }
    unsafe { qm_metric_chain_free(c) };
    let bad = [0.5, 1.0];
    assert_eq!(unsafe { qm_metric_chain_new(1, bad.as_ptr(), bad.len(), 0.25, 1.0, 2, QmSpinMeasure::Ising, 9, &mut c) }, QmStatus::InvalidArgument);
    let mut m = 0.0;
    assert_eq!(unsafe { qm_bridge_mass(0.0, 0.0, 1.0, &mut m) }, QmStatus::Ok);
    assert!((m - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(qm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles the C smoke program against the generated header and the static
/// library, then runs it.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("quadmap.h").exists(), "header was not generated");
    // Integration test binaries live in target/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libquadmap_ffi.a");
    let out = profile_dir.join("quadmap_ffi_smoke");
    let mut cc = Command::new("cc");
    cc.arg(manifest.join("tests/c/smoke.c")).arg("-I").arg(&header_dir).arg("-o").arg(&out);
    if lib.exists() {
        cc.arg(&lib).args(["-lpthread", "-ldl", "-lm"]);
    } else {
        // Without the archive only the header is checked.
        cc.arg("-fsyntax-only");
    }
    let status = cc.status().expect("a C compiler is available");
    assert!(status.success(), "C compilation failed");
    if lib.exists() {
        let run = Command::new(&out).output().unwrap();
        assert!(run.status.success(), "smoke program exited with {:?}", run.status.code());
        assert_eq!(String::from_utf8(run.stdout).unwrap().trim(), env!("CARGO_PKG_VERSION"));
    }
}

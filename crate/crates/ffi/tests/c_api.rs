use std::ffi::{CStr, CString};
use std::ptr;

use gridlattice_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gl_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn load(name: &str) -> *mut GlSystem {
    let name = CString::new(name).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(
        unsafe { gl_system_load(name.as_ptr(), &mut sys) },
        GlStatus::Ok
    );
    assert!(!sys.is_null());
    sys
}

fn stop_dn(n: i32) -> GlStopCriteria {
    GlStopCriteria {
        has_dn: true,
        dn: n,
        max_opf: 0,
        mixed_mass: 0.0,
    }
}

#[test]
fn rbts_round_trip() {
    unsafe {
        let sys = load("rbts");
        let mut n = 0usize;
        assert_eq!(gl_system_component_count(sys, &mut n), GlStatus::Ok);
        assert_eq!(n, 20);

        let ids = [20usize];
        let mut shed = -1.0;
        assert_eq!(gl_state_shed(sys, ids.as_ptr(), 1, &mut shed), GlStatus::Ok);
        assert!((shed - 20.0).abs() < 1e-6);
        assert_eq!(gl_state_shed(sys, ptr::null(), 0, &mut shed), GlStatus::Ok);
        assert_eq!(shed, 0.0);

        let mut p = 0.0;
        assert_eq!(
            gl_state_probability(sys, ptr::null(), 0, &mut p),
            GlStatus::Ok
        );
        assert!(p > 0.0 && p < 1.0);

        let mut ledger = ptr::null_mut();
        assert_eq!(
            gl_dichotomy_run(sys, &stop_dn(9), false, &mut ledger),
            GlStatus::Ok
        );
        let mut lolp = 0.0;
        gl_ledger_lolp(ledger, &mut lolp);
        assert!((100.0 * lolp - 0.94739).abs() < 1e-4);
        let mut count = 0usize;
        gl_ledger_failed_count(ledger, &mut count);
        assert!(count > 0);
        let mut opf = 0u64;
        gl_ledger_opf_count(ledger, &mut opf);
        assert!(opf <= 2000);

        let mut f = std::mem::zeroed::<GlFailedLattice>();
        let mut buf = [0usize; 4];
        assert_eq!(
            gl_ledger_failed_lattice(ledger, 0, &mut f, buf.as_mut_ptr(), 4),
            GlStatus::Ok
        );
        assert_eq!((f.min_failed_count, buf[0], f.num_states_log2), (1, 20, 19));
        assert!((f.shed_mw - 20.0).abs() < 1e-6);
        assert!((f.probability - 0.0011402).abs() < 1e-7);
        assert_eq!(
            gl_ledger_failed_lattice(ledger, count, &mut f, ptr::null_mut(), 0),
            GlStatus::InvalidArgument
        );

        let mut r = std::mem::zeroed::<GlIndexReport>();
        assert_eq!(gl_ledger_report(ledger, &mut r), GlStatus::Ok);
        assert_eq!(r.lolp, lolp);
        assert!(r.eens.is_nan());

        assert_eq!(gl_fmcs(sys, ledger, 0.05, 0, 1, &mut r), GlStatus::Ok);
        assert!(r.beta < 0.05 && r.samples >= 30);
        assert!((r.eens - 0.11676).abs() < 0.02);
        let first = r.eens;
        assert_eq!(gl_fmcs(sys, ledger, 0.05, 0, 1, &mut r), GlStatus::Ok);
        assert_eq!(r.eens, first);

        assert_eq!(gl_se(sys, 2, &mut r), GlStatus::Ok);
        assert_eq!(r.samples, 1 + 20 + 190);
        assert_eq!(gl_mcs(sys, 0.5, 2000, 3, &mut r), GlStatus::Ok);
        assert!(r.samples <= 2000);

        gl_ledger_free(ledger);
        gl_system_free(sys);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut sys = ptr::null_mut();
        let missing = CString::new("/nonexistent/system.json").unwrap();
        assert_eq!(gl_system_load(missing.as_ptr(), &mut sys), GlStatus::Io);
        assert!(sys.is_null());
        assert!(last_error().contains("/nonexistent/system.json"));

        let bad = CString::new("{").unwrap();
        assert_eq!(gl_system_from_json(bad.as_ptr(), &mut sys), GlStatus::Parse);
        assert!(!last_error().is_empty());

        assert_eq!(gl_system_load(ptr::null(), &mut sys), GlStatus::NullPointer);

        let sys = load("rts79");
        let mut shed = 0.0;
        let ids = [71usize];
        assert_eq!(
            gl_state_shed(sys, ids.as_ptr(), 1, &mut shed),
            GlStatus::InvalidArgument
        );
        assert!(last_error().contains("71"));
        assert_eq!(
            gl_state_shed(sys, ptr::null(), 3, &mut shed),
            GlStatus::NullPointer
        );

        let mut r = std::mem::zeroed::<GlIndexReport>();
        assert_eq!(gl_se(sys, -1, &mut r), GlStatus::InvalidArgument);

        let none = GlStopCriteria {
            has_dn: false,
            dn: 0,
            max_opf: 0,
            mixed_mass: 0.0,
        };
        let mut ledger = ptr::null_mut();
        assert_eq!(
            gl_dichotomy_run(sys, &none, false, &mut ledger),
            GlStatus::InvalidArgument
        );
        assert!(ledger.is_null());

        let one = GlStopCriteria {
            has_dn: false,
            dn: 0,
            max_opf: 1,
            mixed_mass: 0.0,
        };
        assert_eq!(
            gl_dichotomy_run(sys, &one, false, &mut ledger),
            GlStatus::Ok
        );
        assert_eq!(
            gl_fmcs(sys, ledger, 0.05, 0, 0, &mut r),
            GlStatus::NoFailedRegion
        );
        assert_eq!(
            gl_fmcs(sys, ledger, 0.0, 0, 0, &mut r),
            GlStatus::InvalidArgument
        );

        let other = load("rbts");
        assert_eq!(
            gl_fmcs(other, ledger, 0.05, 0, 0, &mut r),
            GlStatus::InvalidArgument
        );

        assert_eq!(gl_se(sys, 1, &mut r), GlStatus::Ok);
        assert_eq!(last_error(), "");

        gl_ledger_free(ledger);
        gl_system_free(sys);
        gl_system_free(other);
        gl_system_free(ptr::null_mut());
        gl_ledger_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(gl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/gridlattice.h");
    let src = include_str!("../src/lib.rs");
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(
                header.contains(&format!("{name}(")),
                "{name} missing from header"
            );
        }
    }
    for ty in [
        "GlStatus",
        "GlSystem",
        "GlLedger",
        "GlStopCriteria",
        "GlIndexReport",
        "GlFailedLattice",
    ] {
        assert!(header.contains(ty), "{ty} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| {
        std::process::Command::new(c)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    }) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gridlattice.h");
    let status = std::process::Command::new(cc)
        .args([
            "-std=c99",
            "-Wall",
            "-Werror",
            "-fsyntax-only",
            "-x",
            "c",
            include,
        ])
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn c_example_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| {
        std::process::Command::new(c)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    }) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // target/<profile>/deps/<this test> -> target/<profile>
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libgridlattice_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = env!("CARGO_MANIFEST_DIR");
    let exe = std::env::temp_dir().join(format!("gl_rbts_example_{}", std::process::id()));
    let status = std::process::Command::new(cc)
        .args([
            "-std=c99",
            "-Wall",
            "-Werror",
            "-I",
            &format!("{dir}/include"),
        ])
        .arg(format!("{dir}/examples/rbts_dichotomy.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_file(&exe);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}");
    assert!(
        stdout.contains("first failed lattice: component 20, shed 20.0 MW"),
        "{stdout}"
    );
    assert!(stdout.contains("LOLP: 0.9473"), "{stdout}");
}

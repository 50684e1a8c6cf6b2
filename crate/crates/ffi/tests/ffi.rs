use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use poas::config::{MachineConfig, MACH2};
use poas::profiler::profile_to_text;
use poas_ffi::*;

fn mach2_profile_text() -> CString {
    let profile = MachineConfig::from_text(MACH2)
        .unwrap()
        .truth_profile()
        .unwrap();
    CString::new(profile_to_text(&profile)).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(poas_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn plan_through_handles() {
    let text = mach2_profile_text();
    let mut profile = ptr::null_mut();
    unsafe {
        assert_eq!(
            poas_profile_from_text(text.as_ptr(), &mut profile),
            PoasStatus::Ok
        );
        assert_eq!(poas_profile_device_count(profile), 3);

        let mut schedule = ptr::null_mut();
        assert_eq!(
            poas_plan(profile, 30000, 30000, 30000, &mut schedule),
            PoasStatus::Ok
        );
        let mut makespan = 0.0;
        assert_eq!(
            poas_schedule_makespan(schedule, &mut makespan),
            PoasStatus::Ok
        );
        assert!(makespan > 0.0);

        let mut written = 0;
        assert_eq!(
            poas_schedule_rows(schedule, ptr::null_mut(), 0, &mut written),
            PoasStatus::BufferTooSmall
        );
        assert_eq!(written, 3);
        let mut rows = [0u64; 3];
        assert_eq!(
            poas_schedule_rows(schedule, rows.as_mut_ptr(), 3, &mut written),
            PoasStatus::Ok
        );
        assert_eq!(rows.iter().sum::<u64>(), 30000);
        assert_eq!(rows[2] % 8, 0);

        let mut json = ptr::null_mut();
        assert_eq!(poas_schedule_to_json(schedule, &mut json), PoasStatus::Ok);
        let parsed =
            poas::scheduler::Schedule::from_json(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(parsed.devices.len(), 3);
        poas_string_free(json);

        poas_schedule_free(schedule);
        poas_profile_free(profile);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let text = mach2_profile_text();
    let mut profile = ptr::null_mut();
    let mut schedule = ptr::null_mut();
    unsafe {
        assert_eq!(
            poas_profile_from_text(text.as_ptr(), ptr::null_mut()),
            PoasStatus::NullPointer
        );
        assert!(last_error().contains("out"));
        let bad = CString::new("poas-profile v1\n\ndevice a\nkind GPU\n").unwrap();
        assert_eq!(
            poas_profile_from_text(bad.as_ptr(), &mut profile),
            PoasStatus::Parse
        );
        let missing = CString::new("/nonexistent/profile.txt").unwrap();
        assert_eq!(
            poas_profile_load(missing.as_ptr(), &mut profile),
            PoasStatus::Io
        );

        assert_eq!(
            poas_profile_from_text(text.as_ptr(), &mut profile),
            PoasStatus::Ok
        );
        assert!(last_error().is_empty());
        assert_eq!(
            poas_plan(profile, 0, 1, 1, &mut schedule),
            PoasStatus::InvalidArgument
        );
        assert_eq!(
            poas_plan(profile, 30000, 30000, 30001, &mut schedule),
            PoasStatus::Unsatisfiable
        );
        assert!(last_error().contains("30001"), "{}", last_error());
        assert!(schedule.is_null());
        poas_profile_free(profile);
        poas_profile_free(ptr::null_mut());
        poas_schedule_free(ptr::null_mut());
        poas_string_free(ptr::null_mut());
    }
}

#[test]
fn fit_through_c_abi() {
    let ops = [
        1_000_000_000u64,
        2_000_000_000,
        4_000_000_000,
        8_000_000_000,
    ];
    let secs: Vec<f64> = ops.iter().map(|&c| 2e-12 * c as f64 + 0.5).collect();
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            poas_fit_linear(ops.as_ptr(), secs.as_ptr(), 4, &mut a, &mut b),
            PoasStatus::Ok
        );
        assert!((a - 2e-12).abs() < 1e-24 && (b - 0.5).abs() < 1e-9);
        assert_eq!(
            poas_fit_linear(ops.as_ptr(), secs.as_ptr(), 1, &mut a, &mut b),
            PoasStatus::InvalidArgument
        );
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/poas.h")).unwrap();
    for name in [
        "poas_last_error",
        "poas_profile_load",
        "poas_profile_from_text",
        "poas_profile_free",
        "poas_profile_device_count",
        "poas_plan",
        "poas_schedule_free",
        "poas_schedule_makespan",
        "poas_schedule_rows",
        "poas_schedule_to_json",
        "poas_schedule_save",
        "poas_string_free",
        "poas_fit_linear",
        "typedef struct PoasProfile PoasProfile",
        "POAS_STATUS_UNSATISFIABLE = 5",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// The static library sits next to the test binary's `deps` directory.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libpoas_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_plans() {
    let lib = static_lib().expect("libpoas_ffi.a is built alongside the tests");
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());

    let profile = tmp.path().join("mach2.profile");
    std::fs::write(&profile, mach2_profile_text().as_bytes()).unwrap();
    let out = Command::new(&exe)
        .arg(Path::new(&profile))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("devices 3 rows 30000"), "{stdout}");
}

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use vitalrl::data::{synthesize, DwellProfile, SynthSpec};
use vitalrl::mews::{canonical_table, VitalKind};
use vitalrl::neural::{save, ModelMeta, QNetwork};
use vitalrl_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vrl_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn classify_and_reward() {
    let mut score = 99u8;
    assert_eq!(
        unsafe { vrl_classify(VRL_VITAL_HEART_RATE, 139.0, &mut score) },
        VrlStatus::Ok
    );
    assert_eq!(score, 3);
    assert_eq!(
        unsafe { vrl_classify(VRL_VITAL_TEMPERATURE, 36.5, &mut score) },
        VrlStatus::Ok
    );
    assert_eq!(score, 0);
    assert_eq!(
        unsafe { vrl_classify(VRL_VITAL_HEART_RATE, f64::NAN, &mut score) },
        VrlStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { vrl_classify(77, 1.0, &mut score) },
        VrlStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { vrl_classify(0, 1.0, ptr::null_mut()) },
        VrlStatus::NullPointer
    );

    let mut r = 0i32;
    assert_eq!(unsafe { vrl_reward(4, 3, &mut r) }, VrlStatus::Ok);
    assert_eq!(r, -4);
    assert_eq!(unsafe { vrl_reward(0, 0, &mut r) }, VrlStatus::Ok);
    assert_eq!(r, 10);
    assert_eq!(
        unsafe { vrl_reward(5, 0, &mut r) },
        VrlStatus::InvalidArgument
    );
}

#[test]
fn model_round_trip() {
    let net = QNetwork::zeros(1, 4, 1e-3).unwrap();
    let doc = save(
        &net,
        &ModelMeta {
            vital: VitalKind::Temperature,
            subject: "s".into(),
            seed: 1,
            training: None,
        },
    )
    .unwrap();
    let text = CString::new(doc).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { vrl_model_load(text.as_ptr(), &mut model) },
        VrlStatus::Ok
    );
    assert!(!model.is_null());

    let mut vital = 99;
    assert_eq!(unsafe { vrl_model_vital(model, &mut vital) }, VrlStatus::Ok);
    assert_eq!(vital, VRL_VITAL_TEMPERATURE);
    let mut dim = 0usize;
    assert_eq!(
        unsafe { vrl_model_input_dim(model, &mut dim) },
        VrlStatus::Ok
    );
    assert_eq!(dim, 1);

    let state = [0.5f64];
    let mut q = [1.0f64; VRL_NUM_ACTIONS];
    assert_eq!(
        unsafe { vrl_model_forward(model, state.as_ptr(), 1, q.as_mut_ptr()) },
        VrlStatus::Ok
    );
    assert_eq!(q, [0.0; 5]);
    let mut action = 9u8;
    assert_eq!(
        unsafe { vrl_model_greedy_action(model, state.as_ptr(), 1, &mut action) },
        VrlStatus::Ok
    );
    assert_eq!(action, 0);
    assert_eq!(
        unsafe { vrl_model_forward(model, state.as_ptr(), 0, q.as_mut_ptr()) },
        VrlStatus::InvalidArgument
    );
    unsafe { vrl_model_free(model) };
    unsafe { vrl_model_free(ptr::null_mut()) };

    let broken = CString::new("{\"schema_version\": 1").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { vrl_model_load(broken.as_ptr(), &mut model) },
        VrlStatus::Parse
    );
    assert!(model.is_null());
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(
        unsafe { vrl_model_load_file(missing.as_ptr(), &mut model) },
        VrlStatus::Io
    );
}

#[test]
fn environment_episode() {
    let stream = synthesize(&SynthSpec {
        subject_id: "s".into(),
        length: 11,
        profiles: vec![(
            VitalKind::HeartRate,
            DwellProfile::uniform_for(VitalKind::HeartRate, canonical_table()),
        )],
        noise_std: 0.5,
        seed: 3,
    })
    .unwrap();
    let hr = stream.series(VitalKind::HeartRate).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(
        unsafe { vrl_env_new(VRL_VITAL_HEART_RATE, hr.as_ptr(), hr.len(), 10, 2, &mut env) },
        VrlStatus::Ok
    );
    let mut features = [0.0f64; 2];
    assert_eq!(
        unsafe { vrl_env_reset(env, features.as_mut_ptr(), 2) },
        VrlStatus::Ok
    );
    assert_eq!(features[0], features[1]);

    let mut total = 0i64;
    let mut done = 0u8;
    let mut steps = 0;
    while done == 0 {
        let mut score = 0u8;
        unsafe { vrl_classify(VRL_VITAL_HEART_RATE, hr[steps], &mut score) };
        let mut reward = 0i32;
        assert_eq!(
            unsafe { vrl_env_step(env, score, &mut reward, &mut done, features.as_mut_ptr(), 2) },
            VrlStatus::Ok
        );
        assert_eq!(reward, 10);
        total += i64::from(reward);
        steps += 1;
    }
    assert_eq!(steps, 10);
    let mut score = 0i64;
    assert_eq!(
        unsafe { vrl_env_episode_score(env, &mut score) },
        VrlStatus::Ok
    );
    assert_eq!(score, total);
    assert_eq!(
        unsafe { vrl_env_step(env, 0, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), 0) },
        VrlStatus::EpisodeComplete
    );
    assert_eq!(
        unsafe { vrl_env_reset(env, features.as_mut_ptr(), 1) },
        VrlStatus::InvalidArgument
    );
    unsafe { vrl_env_free(env) };

    let mut env = ptr::null_mut();
    assert_eq!(
        unsafe { vrl_env_new(VRL_VITAL_HEART_RATE, hr.as_ptr(), hr.len(), 11, 1, &mut env) },
        VrlStatus::Config
    );
    assert!(env.is_null());
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(vrl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include").join("vitalrl.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "vrl_classify",
        "vrl_reward",
        "vrl_model_load",
        "vrl_model_forward",
        "vrl_model_greedy_action",
        "vrl_model_free",
        "vrl_env_new",
        "vrl_env_step",
        "vrl_env_free",
        "vrl_last_error_message",
    ] {
        assert!(
            text.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests").join("smoke.c"))
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}

#[test]
fn c_program_links_and_runs() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libvitalrl_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests").join("smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("score=3 total=3 version="), "{stdout}");
}

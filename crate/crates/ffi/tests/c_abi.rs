use std::ffi::{CStr, CString};
use std::ptr;

use hearcheck_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = hc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    hc_string_free(p);
    s
}

#[test]
fn clip_lifecycle() {
    unsafe {
        let samples = [0.0f32, 0.25, -0.5, 0.1];
        let mut base = ptr::null_mut();
        assert_eq!(hc_clip_from_samples(samples.as_ptr(), 4, 16_000, &mut base), HcStatus::Ok);
        assert_eq!((hc_clip_len(base), hc_clip_sample_rate(base)), (4, 16_000));

        let mut norm = ptr::null_mut();
        assert_eq!(hc_clip_normalize(base, 1.0, &mut norm), HcStatus::Ok);
        let mut buf = [0f32; 4];
        assert_eq!(hc_clip_copy_samples(norm, buf.as_mut_ptr(), 4), HcStatus::Ok);
        assert_eq!(buf, [0.0, 0.5, -1.0, 0.2]);

        let mut small = [0f32; 2];
        assert_eq!(hc_clip_copy_samples(norm, small.as_mut_ptr(), 2), HcStatus::BufferTooSmall);

        let mut sil = ptr::null_mut();
        assert_eq!(hc_clip_silence(0.5, 16_000, &mut sil), HcStatus::Ok);
        assert_eq!(hc_clip_len(sil), 8_000);
        let mut mixed = ptr::null_mut();
        assert_eq!(hc_clip_overlay(sil, norm, 0.25, &mut mixed), HcStatus::Ok);
        let mut out = vec![0f32; hc_clip_len(mixed)];
        assert_eq!(hc_clip_copy_samples(mixed, out.as_mut_ptr(), out.len()), HcStatus::Ok);
        assert_eq!(&out[4_000..4_004], &[0.0, 0.5, -1.0, 0.2]);
        assert!(out[..4_000].iter().chain(&out[4_004..]).all(|&s| s == 0.0));

        // An event running past the end extends the output.
        let mut longer = ptr::null_mut();
        assert_eq!(hc_clip_overlay(norm, sil, 0.0, &mut longer), HcStatus::Ok);
        assert_eq!(hc_clip_len(longer), 8_000);
        hc_clip_free(longer);

        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().join("m.wav").to_str().unwrap());
        assert_eq!(hc_clip_write_wav(mixed, path.as_ptr()), HcStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(hc_clip_load(path.as_ptr(), 8_000, &mut loaded), HcStatus::Ok);
        assert_eq!((hc_clip_len(loaded), hc_clip_sample_rate(loaded)), (4_000, 8_000));

        for h in [base, norm, sil, mixed, loaded] {
            hc_clip_free(h);
        }
        hc_clip_free(ptr::null_mut());
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut clip = ptr::null_mut();
        assert_eq!(hc_clip_load(ptr::null(), 16_000, &mut clip), HcStatus::NullArgument);
        assert!(last_error().contains("path"));

        let missing = c("/nonexistent/x.wav");
        assert_eq!(hc_clip_load(missing.as_ptr(), 16_000, &mut clip), HcStatus::Io);
        assert!(last_error().contains("/nonexistent/x.wav"));

        assert_eq!(hc_clip_silence(0.0, 16_000, &mut clip), HcStatus::InvalidArgument);
        assert_eq!(hc_clip_normalize(ptr::null(), 0.5, &mut clip), HcStatus::NullArgument);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        hc_clip_silence(1.0, 16_000, &mut a);
        hc_clip_silence(0.1, 8_000, &mut b);
        assert_eq!(hc_clip_overlay(a, b, 0.0, &mut clip), HcStatus::RateMismatch);
        assert_eq!(hc_clip_normalize(a, 1.5, &mut clip), HcStatus::InvalidArgument);
        hc_clip_free(a);
        hc_clip_free(b);

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"not a wav at all").unwrap();
        let junk = c(junk.to_str().unwrap());
        assert_ne!(hc_clip_load(junk.as_ptr(), 16_000, &mut clip), HcStatus::Ok);
        assert!(clip.is_null());
    }
}

#[test]
fn answers_and_questions() {
    unsafe {
        let mut ans = HcAnswer::Unparsed;
        for (text, want) in [
            ("Yes, there is a dog barking.", HcAnswer::Yes),
            ("No.", HcAnswer::No),
            ("I cannot tell.", HcAnswer::Unparsed),
        ] {
            let t = c(text);
            assert_eq!(hc_parse_answer(t.as_ptr(), &mut ans), HcStatus::Ok);
            assert_eq!(ans, want, "{text}");
        }

        let q = c("Is there a sound of dog barking in the audio?");
        let mut out = ptr::null_mut();
        assert_eq!(hc_negate_question(q.as_ptr(), &mut out), HcStatus::Ok);
        assert_eq!(take_string(out), "Isn't there a sound of dog barking in the audio?");

        let q = c("What is that?");
        assert_eq!(hc_negate_question(q.as_ptr(), &mut out), HcStatus::UnsupportedTemplate);
        hc_string_free(ptr::null_mut());
    }
}

#[test]
fn report_from_records_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let mut lines = String::new();
    for (pair, (before, after)) in [("Yes", "No"), ("Yes", "Yes"), ("No", "No")].iter().enumerate() {
        for (role, truth, text) in [("before", "yes", before), ("after", "no", after)] {
            lines.push_str(
                &serde_json::json!({
                    "instance_id": format!("existence-{pair:05}-{role}"),
                    "pair_id": format!("existence-{pair:05}"),
                    "pair_role": role,
                    "task": "existence",
                    "setting": "original",
                    "model_id": "m",
                    "raw_text": text,
                    "parsed": text.to_lowercase(),
                    "ground_truth": truth,
                })
                .to_string(),
            );
            lines.push('\n');
        }
    }
    std::fs::write(&path, lines).unwrap();
    unsafe {
        let p = c(path.to_str().unwrap());
        let mut report = ptr::null_mut();
        assert_eq!(hc_report_from_records(p.as_ptr(), &mut report), HcStatus::Ok);
        assert_eq!(hc_report_rows(report), 1);
        let mut json = ptr::null_mut();
        assert_eq!(hc_report_to_json(report, &mut json), HcStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        // tp=2 fp=1 fn=1 tn=2
        assert_eq!(v[0]["A"], 66.7);
        assert_eq!(v[0]["F1"], 66.7);
        assert_eq!(v[0]["C-C"], 33.3);
        assert_eq!(v[0]["C-I"], 33.3);
        let mut md = ptr::null_mut();
        assert_eq!(hc_report_to_markdown(report, &mut md), HcStatus::Ok);
        assert!(take_string(md).starts_with("| Model | Task | Setting |"));
        hc_report_free(report);

        std::fs::write(&path, "{\"bad\": 1}\n{}\n").unwrap();
        assert_eq!(hc_report_from_records(p.as_ptr(), &mut report), HcStatus::BadRecords);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hearcheck.h")).unwrap();
    assert!(header.starts_with("#ifndef HEARCHECK_H"));
    for sym in [
        "hc_last_error", "hc_version", "hc_clip_load", "hc_clip_from_samples", "hc_clip_silence", "hc_clip_normalize",
        "hc_clip_overlay", "hc_clip_len", "hc_clip_sample_rate", "hc_clip_copy_samples", "hc_clip_write_wav",
        "hc_clip_free", "hc_parse_answer", "hc_negate_question", "hc_string_free", "hc_report_from_records",
        "hc_report_rows", "hc_report_to_json", "hc_report_to_markdown", "hc_report_free",
        "typedef struct HcClip HcClip", "typedef struct HcReport HcReport", "HC_STATUS_BUFFER_TOO_SMALL = 10",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
    let v = unsafe { CStr::from_ptr(hc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles a C program against the header and the static library.
#[test]
fn c_program_links_against_staticlib() {
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libhearcheck_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.is_file() || std::process::Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let root = env!("CARGO_MANIFEST_DIR");
    let status = std::process::Command::new(&cc)
        .args([&format!("{root}/tests/c/smoke.c"), "-I", &format!("{root}/include"), "-o"])
        .arg(&exe)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

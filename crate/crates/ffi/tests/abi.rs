use std::ffi::{c_char, CString};
use std::ptr;

use nvmlens::memsim::{simulate, MemoryConfig, WorkloadSpec};
use nvmlens::predictor::{predict_ipc, train_model, windowed_dataset};
use nvmlens_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let mut len = 0;
    unsafe { nvm_last_error(buf.as_mut_ptr(), buf.len(), &mut len) };
    let bytes: Vec<u8> = buf[..len.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn data(rel: &str) -> String {
    format!("{}/../../data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn scalar_entry_points() {
    let mut r = 0.0;
    assert_eq!(unsafe { nvm_write_ratio(3000.0, 1000.0, &mut r) }, NvmStatus::Ok);
    assert!((r - 0.25).abs() < 1e-12);
    assert_eq!(unsafe { nvm_write_ratio(-1.0, 1.0, &mut r) }, NvmStatus::InvalidArgument);
    assert!(last_error().contains("must be"));
    assert_eq!(unsafe { nvm_write_ratio(1.0, 1.0, ptr::null_mut()) }, NvmStatus::NullArgument);

    let (mut tier, mut border) = (NvmTier::Insensitive, 9u8);
    assert_eq!(unsafe { nvm_classify(f64::NAN, f64::NAN, 2.91, &mut tier, &mut border) }, NvmStatus::Ok);
    assert_eq!((tier, border), (NvmTier::Scaled, 0));
    assert_eq!(unsafe { nvm_classify(f64::NAN, f64::NAN, 5.2, &mut tier, &mut border) }, NvmStatus::Ok);
    assert_eq!((tier, border), (NvmTier::Bottlenecked, 1));
    assert_eq!(unsafe { nvm_classify(f64::NAN, f64::NAN, f64::NAN, &mut tier, &mut border) }, NvmStatus::InsufficientData);

    let mut risk = NvmThrottle::Low;
    assert_eq!(unsafe { nvm_throttle_risk(33000.0, 54000.0 / 33000.0, &mut risk) }, NvmStatus::Ok);
    assert_eq!(risk, NvmThrottle::High);

    let mut flag = 0u8;
    unsafe { nvm_contention(0.61, 0.37, 0.15, &mut flag) };
    assert_eq!(flag, 1);
    unsafe { nvm_contention(0.61, 0.60, 0.15, &mut flag) };
    assert_eq!(flag, 0);
}

#[test]
fn last_error_truncates() {
    let mut r = 0.0;
    unsafe { nvm_write_ratio(f64::NAN, 1.0, &mut r) };
    let mut buf = [0 as c_char; 4];
    let mut len = 0;
    assert_eq!(unsafe { nvm_last_error(buf.as_mut_ptr(), 4, &mut len) }, NvmStatus::BufferTooSmall);
    assert!(len > 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn placement_marks_chosen_objects() {
    let sizes = [24u64 << 30, 36 << 30, 12 << 30, 8 << 30];
    let shares = [0.88, 0.04, 0.05, 0.03];
    let mut chosen = [7u8; 4];
    let mut captured = 0.0;
    let st = unsafe {
        nvm_place(sizes.as_ptr(), shares.as_ptr(), 4, 32 << 30, NvmStrategy::ExactDp, chosen.as_mut_ptr(), &mut captured)
    };
    assert_eq!(st, NvmStatus::Ok);
    assert_eq!(chosen, [1, 0, 0, 1]);
    assert!((captured - 0.91).abs() < 1e-12);
    let st = unsafe {
        nvm_place(sizes.as_ptr(), shares.as_ptr(), 4, -1, NvmStrategy::GreedyDensity, chosen.as_mut_ptr(), &mut captured)
    };
    assert_eq!(st, NvmStatus::InvalidArgument);
}

#[test]
fn trace_and_model_handles() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("workloads/laghos.toml")).unwrap();
    let w = WorkloadSpec::from_toml_str(&text).unwrap();
    let sim = simulate(&w, &MemoryConfig::default()).unwrap();
    nvmlens::memsim::emit_trace(&sim, dir.path(), "lg").unwrap();

    let path = CString::new(dir.path().join("lg").display().to_string()).unwrap();
    let mut trace: *mut NvmTrace = ptr::null_mut();
    assert_eq!(unsafe { nvm_trace_open(path.as_ptr(), &mut trace) }, NvmStatus::Ok);
    let mut n = 0;
    unsafe { nvm_trace_len(trace, &mut n) };
    assert_eq!(n, sim.truth.intervals.len());
    let (mut rd, mut wr) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { nvm_trace_bandwidth(trace, rd.as_mut_ptr(), wr.as_mut_ptr(), n - 1) }, NvmStatus::BufferTooSmall);
    assert_eq!(unsafe { nvm_trace_bandwidth(trace, rd.as_mut_ptr(), wr.as_mut_ptr(), n) }, NvmStatus::Ok);
    for (i, iv) in sim.truth.intervals.iter().enumerate() {
        assert!((rd[i] - iv.read_mbps).abs() < 1e-3 && (wr[i] - iv.write_mbps).abs() < 1e-3);
    }
    unsafe { nvm_trace_free(trace) };

    let missing = CString::new("/no/such/trace").unwrap();
    assert_eq!(unsafe { nvm_trace_open(missing.as_ptr(), &mut trace) }, NvmStatus::Io);
    assert!(trace.is_null());

    let (feats, ipc) = windowed_dataset(&sim.trace.core_in_window(), 1).unwrap();
    let model = train_model(&feats, &ipc, 0.05).unwrap();
    let model_path = dir.path().join("model.json");
    model.save(&model_path).unwrap();
    let cpath = CString::new(model_path.display().to_string()).unwrap();
    let mut handle: *mut NvmModel = ptr::null_mut();
    assert_eq!(unsafe { nvm_model_load(cpath.as_ptr(), &mut handle) }, NvmStatus::Ok);
    for f in feats.iter().take(10) {
        let mut got = 0.0;
        assert_eq!(unsafe { nvm_model_predict(handle, f.raw_counts.as_ptr(), f.ipc_s, &mut got) }, NvmStatus::Ok);
        assert_eq!(got, predict_ipc(&model, f).unwrap());
    }
    unsafe { nvm_model_free(handle) };

    std::fs::write(&model_path, "{not json").unwrap();
    assert_eq!(unsafe { nvm_model_load(cpath.as_ptr(), &mut handle) }, NvmStatus::Parse);
}

#[test]
fn header_is_valid_c() {
    let header = format!("{}/include/nvmlens.h", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["nvm_write_ratio", "nvm_place", "nvm_trace_open", "nvm_model_predict", "typedef struct NvmTrace NvmTrace"] {
        assert!(text.contains(sym), "{sym}");
    }
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", &header]).output() else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

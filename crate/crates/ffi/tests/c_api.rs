use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use esmc2_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        esmc2_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn config(example: &str, pairs: &[(&str, &str)]) -> *mut Esmc2Config {
    let name = CString::new(example).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { esmc2_config_new(name.as_ptr(), &mut cfg) }, Esmc2Status::Ok);
    for (k, v) in pairs {
        let (k, v) = (CString::new(*k).unwrap(), CString::new(*v).unwrap());
        let st = unsafe { esmc2_config_set(cfg, k.as_ptr(), v.as_ptr()) };
        assert_eq!(st, Esmc2Status::Ok, "{}", last_error());
    }
    cfg
}

fn simulate(cfg: *const Esmc2Config) -> Vec<f64> {
    let mut len = 0;
    let st = unsafe { esmc2_simulate(cfg, ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, Esmc2Status::BufferTooSmall);
    let mut obs = vec![0.0; len];
    let st = unsafe { esmc2_simulate(cfg, obs.as_mut_ptr(), obs.len(), &mut len) };
    assert_eq!(st, Esmc2Status::Ok);
    obs
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(esmc2_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_and_bad_arguments_report_codes() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { esmc2_config_new(ptr::null(), &mut cfg) }, Esmc2Status::NullPointer);
    assert!(cfg.is_null());
    assert!(last_error().contains("example is null"));

    let bad = CString::new("example9").unwrap();
    assert_eq!(unsafe { esmc2_config_new(bad.as_ptr(), &mut cfg) }, Esmc2Status::Config);
    assert!(cfg.is_null());

    let cfg = config("example1", &[]);
    let (k, v) = (CString::new("ntheta").unwrap(), CString::new("1").unwrap());
    assert_eq!(unsafe { esmc2_config_set(cfg, k.as_ptr(), v.as_ptr()) }, Esmc2Status::Config);
    let (k, v) = (CString::new("bogus").unwrap(), CString::new("1").unwrap());
    assert_eq!(unsafe { esmc2_config_set(cfg, k.as_ptr(), v.as_ptr()) }, Esmc2Status::Config);
    assert!(last_error().contains("bogus"), "{}", last_error());

    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { esmc2_fit(cfg, ptr::null(), 0, &mut fit) }, Esmc2Status::InvalidArgument);
    assert!(fit.is_null());
    assert_eq!(unsafe { esmc2_fit_num_particles(ptr::null()) }, 0);
    unsafe {
        esmc2_config_free(cfg);
        esmc2_config_free(ptr::null_mut());
        esmc2_fit_free(ptr::null_mut());
    }
}

#[test]
fn load_reports_parse_and_io_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "example = example1\nntheta = 20\nnot_a_key = 3\n").unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { esmc2_config_load(c_path.as_ptr(), &mut cfg) };
    assert_eq!(st, Esmc2Status::Parse);
    assert!(last_error().contains(":3:"), "{}", last_error());

    let missing = CString::new(dir.path().join("none.cfg").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { esmc2_config_load(missing.as_ptr(), &mut cfg) }, Esmc2Status::Io);
}

#[test]
fn simulate_is_deterministic() {
    let cfg = config("example1", &[("seed", "7"), ("days", "20")]);
    let a = simulate(cfg);
    let b = simulate(cfg);
    assert_eq!(a.len(), 20);
    assert_eq!(a, b);
    assert!(a.iter().all(|&y| y >= 0.0 && y.fract() == 0.0));
    unsafe { esmc2_config_free(cfg) };
}

#[test]
fn fit_and_forecast_through_handles() {
    let cfg = config(
        "example1",
        &[("seed", "3"), ("days", "15"), ("ntheta", "20"), ("nx", "10"), ("draws", "10"), ("threads", "2")],
    );
    let obs = simulate(cfg);
    let mut fit = ptr::null_mut();
    let st = unsafe { esmc2_fit(cfg, obs.as_ptr(), obs.len(), &mut fit) };
    assert_eq!(st, Esmc2Status::Ok, "{}", last_error());
    unsafe { esmc2_config_free(cfg) };

    let n = unsafe { esmc2_fit_num_particles(fit) };
    assert_eq!(n, 20);
    let mut len = 0;
    let mut rows = vec![0.0; 6 * n];
    assert_eq!(unsafe { esmc2_fit_samples(fit, rows.as_mut_ptr(), 3, &mut len) }, Esmc2Status::BufferTooSmall);
    assert_eq!(len, 6 * n);
    assert_eq!(unsafe { esmc2_fit_samples(fit, rows.as_mut_ptr(), rows.len(), &mut len) }, Esmc2Status::Ok);
    let total: f64 = rows.chunks(6).map(|r| r[5]).sum();
    assert!((total - 1.0).abs() < 1e-12);

    let mut s = Esmc2ParamSummary::default();
    let alpha = CString::new("alpha").unwrap();
    assert_eq!(unsafe { esmc2_fit_param(fit, alpha.as_ptr(), &mut s) }, Esmc2Status::Ok);
    assert!(s.q025 <= s.q500 && s.q500 <= s.q975 && s.sd >= 0.0);
    let phi = CString::new("phi").unwrap();
    assert_eq!(unsafe { esmc2_fit_param(fit, phi.as_ptr(), &mut s) }, Esmc2Status::InvalidArgument);

    let mut m = Esmc2Metrics::default();
    assert_eq!(unsafe { esmc2_fit_metrics(fit, &mut m) }, Esmc2Status::Ok);
    assert!(m.rmse >= m.mae && (0.0..=1.0).contains(&m.coverage95));

    let h = 5;
    let (mut med, mut lo, mut hi) = (vec![0.0; h], vec![0.0; h], vec![0.0; h]);
    let st = unsafe { esmc2_fit_forecast(fit, h, 11, med.as_mut_ptr(), lo.as_mut_ptr(), hi.as_mut_ptr()) };
    assert_eq!(st, Esmc2Status::Ok, "{}", last_error());
    for k in 0..h {
        assert!(lo[k] <= med[k] && med[k] <= hi[k]);
    }
    let st = unsafe { esmc2_fit_forecast(fit, 0, 11, med.as_mut_ptr(), lo.as_mut_ptr(), hi.as_mut_ptr()) };
    assert_eq!(st, Esmc2Status::Config);
    unsafe { esmc2_fit_free(fit) };
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"esmc2.h\"\n\
         int main(void) {\n\
           Esmc2Config *cfg = 0;\n\
           Esmc2Status st = esmc2_config_new(\"example1\", &cfg);\n\
           Esmc2ParamSummary s; Esmc2Metrics m; (void)s; (void)m;\n\
           return st == ESMC2_STATUS_OK ? 0 : (int)st;\n\
         }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header)
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    assert!(status.success());
}

use d2dcache_ffi::*;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

const TWO_GROUPS: &str = "\
system.alpha = 3
system.gamma_th_db = 3
groups.lambda = 0.04, 0.02
groups.bias = 0.1, 0.9
strategy.c = 0.01, 0.01
sim.realizations = 40
sim.seed = 7
";

fn parse(text: &str) -> *mut D2dExperiment {
    let text = CString::new(text).unwrap();
    let mut exp = ptr::null_mut();
    let st = unsafe { d2d_experiment_parse(text.as_ptr(), &mut exp) };
    assert_eq!(st, D2dStatus::D2D_STATUS_OK, "{:?}", last_error());
    assert!(!exp.is_null());
    exp
}

fn last_error() -> Option<String> {
    let p = d2d_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn set(exp: *mut D2dExperiment, assignment: &str) -> D2dStatus {
    let a = CString::new(assignment).unwrap();
    unsafe { d2d_experiment_set(exp, a.as_ptr()) }
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(d2d_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn eval_matches_the_library() {
    let exp = parse(TWO_GROUPS);
    assert_eq!(unsafe { d2d_experiment_group_count(exp) }, 2);
    let mut out = D2dEval::default();
    assert_eq!(unsafe { d2d_eval(exp, ptr::null(), 0, &mut out) }, D2dStatus::D2D_STATUS_OK);
    assert!(last_error().is_none());

    let cfg = d2dcache::config::ExperimentConfig::parse(TWO_GROUPS).unwrap();
    let truth = d2dcache::model::success_prob(cfg.params(), cfg.profile(), &cfg.strategy().unwrap()).unwrap();
    assert_eq!(out.success_prob, truth.success_prob);
    assert_eq!(out.offload_gain, truth.offload_gain);

    let c = [0.01, 0.01];
    let mut explicit = D2dEval::default();
    assert_eq!(unsafe { d2d_eval(exp, c.as_ptr(), 2, &mut explicit) }, D2dStatus::D2D_STATUS_OK);
    assert_eq!(explicit, out);
    unsafe { d2d_experiment_free(exp) };
}

#[test]
fn overrides_change_the_experiment() {
    let exp = parse(TWO_GROUPS);
    let mut before = D2dEval::default();
    unsafe { d2d_eval(exp, ptr::null(), 0, &mut before) };
    assert_eq!(set(exp, "system.gamma_th_db=6"), D2dStatus::D2D_STATUS_OK);
    let mut after = D2dEval::default();
    unsafe { d2d_eval(exp, ptr::null(), 0, &mut after) };
    assert!(after.success_prob < before.success_prob);

    assert_eq!(set(exp, "system.nonsense=1"), D2dStatus::D2D_STATUS_CONFIG);
    assert!(last_error().unwrap().contains("system.nonsense"));
    let mut again = D2dEval::default();
    unsafe { d2d_eval(exp, ptr::null(), 0, &mut again) };
    assert_eq!(again, after, "a failed override must leave the handle intact");
    unsafe { d2d_experiment_free(exp) };
}

#[test]
fn optimize_returns_densities_and_gain() {
    let exp = parse(TWO_GROUPS);
    let mut c = [0.0; 2];
    let mut exact = D2dOptimum::default();
    let st = unsafe { d2d_optimize(exp, D2dPolicy::D2D_POLICY_PROPOSED_EXACT, c.as_mut_ptr(), 2, &mut exact) };
    assert_eq!(st, D2dStatus::D2D_STATUS_OK, "{:?}", last_error());
    assert!((c[0] + c[1] - exact.x).abs() < 1e-15);
    assert!(c[0] <= 0.04 && c[1] <= 0.02);

    let mut check = D2dEval::default();
    unsafe { d2d_eval(exp, c.as_ptr(), 2, &mut check) };
    assert_eq!(check.offload_gain, exact.gain);

    let mut one = D2dOptimum::default();
    let mut c1 = [0.0; 2];
    unsafe { d2d_optimize(exp, D2dPolicy::D2D_POLICY_ONE_UT, c1.as_mut_ptr(), 2, &mut one) };
    assert!(exact.gain >= one.gain);
    unsafe { d2d_experiment_free(exp) };
}

#[test]
fn simulate_fills_one_entry_per_group() {
    let exp = parse(TWO_GROUPS);
    let mut buf = [D2dEstimate::default(); 4];
    let mut written = 0usize;
    let st = unsafe {
        d2d_simulate(exp, ptr::null(), 0, D2dMetric::D2D_METRIC_ASSOC_PROB, buf.as_mut_ptr(), 4, &mut written)
    };
    assert_eq!(st, D2dStatus::D2D_STATUS_OK, "{:?}", last_error());
    assert_eq!(written, 2);
    assert!(buf[..2].iter().all(|e| e.realizations == 40 && (0.0..=1.0).contains(&e.mean)));

    let st = unsafe {
        d2d_simulate(exp, ptr::null(), 0, D2dMetric::D2D_METRIC_SUCCESS_PROB, buf.as_mut_ptr(), 4, &mut written)
    };
    assert_eq!(st, D2dStatus::D2D_STATUS_OK);
    assert_eq!(written, 1);
    let first = buf[0];
    unsafe { d2d_simulate(exp, ptr::null(), 0, D2dMetric::D2D_METRIC_SUCCESS_PROB, buf.as_mut_ptr(), 4, &mut written) };
    assert_eq!(buf[0], first, "same seed, same estimate");

    let st = unsafe {
        d2d_simulate(exp, ptr::null(), 0, D2dMetric::D2D_METRIC_ASSOC_PROB, buf.as_mut_ptr(), 1, &mut written)
    };
    assert_eq!(st, D2dStatus::D2D_STATUS_INVALID_ARGUMENT);
    unsafe { d2d_experiment_free(exp) };
}

#[test]
fn error_codes_follow_the_binary() {
    let mut exp = ptr::null_mut();
    let bad = CString::new("groups.lambda = 0.1\ngroups.bias = 0.5, 0.5\n").unwrap();
    assert_eq!(unsafe { d2d_experiment_parse(bad.as_ptr(), &mut exp) }, D2dStatus::D2D_STATUS_CONFIG);
    assert!(exp.is_null());
    assert!(last_error().is_some());

    let missing = CString::new("/nonexistent/d2dcache.conf").unwrap();
    assert_eq!(unsafe { d2d_experiment_load(missing.as_ptr(), &mut exp) }, D2dStatus::D2D_STATUS_CONFIG);

    let mut out = D2dEval::default();
    assert_eq!(unsafe { d2d_eval(ptr::null(), ptr::null(), 0, &mut out) }, D2dStatus::D2D_STATUS_INVALID_ARGUMENT);

    let exp = parse(TWO_GROUPS);
    let c = [0.01];
    assert_eq!(unsafe { d2d_eval(exp, c.as_ptr(), 1, &mut out) }, D2dStatus::D2D_STATUS_INVALID_ARGUMENT);
    let c = [0.5, 0.01];
    assert_eq!(unsafe { d2d_eval(exp, c.as_ptr(), 2, &mut out) }, D2dStatus::D2D_STATUS_INVALID_ARGUMENT);
    assert_eq!(unsafe { d2d_eval(exp, ptr::null(), 0, ptr::null_mut()) }, D2dStatus::D2D_STATUS_INVALID_ARGUMENT);

    assert_eq!(set(exp, "strategy.c=0,0"), D2dStatus::D2D_STATUS_OK);
    assert_eq!(set(exp, "sim.realizations=3"), D2dStatus::D2D_STATUS_OK);
    let mut buf = [D2dEstimate::default(); 2];
    let mut written = 0;
    let st = unsafe {
        d2d_simulate(exp, ptr::null(), 0, D2dMetric::D2D_METRIC_ACTIVE_RATIO, buf.as_mut_ptr(), 2, &mut written)
    };
    assert_eq!(st, D2dStatus::D2D_STATUS_DEGENERATE_ESTIMATE);

    assert_eq!(set(exp, "groups.bias=0.3,0.7"), D2dStatus::D2D_STATUS_OK);
    unsafe { d2d_experiment_free(exp) };
    unsafe { d2d_experiment_free(ptr::null_mut()) };
}

#[test]
fn load_reads_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.conf");
    std::fs::write(&path, TWO_GROUPS).unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { d2d_experiment_load(p.as_ptr(), &mut exp) }, D2dStatus::D2D_STATUS_OK);
    assert_eq!(unsafe { d2d_experiment_group_count(exp) }, 2);
    unsafe { d2d_experiment_free(exp) };
}

#[test]
fn header_declares_every_export_and_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/d2dcache.h")).unwrap();
    let lib = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = lib
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 10);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }

    let Ok(cc) = which_cc() else { return };
    let src = dir.join("tests/header_check.c");
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success(), "C compiler rejected the header");
}

fn which_cc() -> Result<&'static str, ()> {
    let ok = std::process::Command::new("cc").arg("--version").output().map(|o| o.status.success());
    if ok.unwrap_or(false) {
        Ok("cc")
    } else {
        Err(())
    }
}

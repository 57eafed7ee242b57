use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use kjmix_ffi::*;

const MU: [f64; 2] = [2.7572, 4.0107];
const RHO: [f64; 2] = [0.7266, 0.1970];
const LAMBDA: [f64; 2] = [5.3136, 1.1895];
const WEIGHTS: [f64; 3] = [0.4536, 0.4825, 0.0639];

fn new_mixture() -> *mut KjMixture {
    let mut h = ptr::null_mut();
    let st = unsafe {
        kj_mixture_new(
            2,
            MU.as_ptr(),
            RHO.as_ptr(),
            LAMBDA.as_ptr(),
            WEIGHTS.as_ptr(),
            &mut h,
        )
    };
    assert_eq!(st, KjStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        kj_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn density_moments_and_params() {
    let h = new_mixture();
    unsafe {
        let mut m = 0;
        assert_eq!(kj_mixture_components(h, &mut m), KjStatus::Ok);
        assert_eq!(m, 2);

        let mut d = 0.0;
        assert_eq!(kj_mixture_density(h, 1.0, &mut d), KjStatus::Ok);
        let direct = kjmix::ReparamMixture::from_parts(&MU, &RHO, &LAMBDA, &WEIGHTS)
            .unwrap()
            .density(kjmix::Angle::new(1.0));
        assert_eq!(d, direct);

        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(kj_mixture_trig_moment(h, 1, &mut re, &mut im), KjStatus::Ok);
        // direct sum over the components of π' γ̄ e^{iμ}
        let expected: (f64, f64) = (0..2).fold((0.0, 0.0), |acc, k| {
            let gbar = (1.0 - RHO[k] * RHO[k]) / (2.0 * (1.0 - RHO[k] * LAMBDA[k].cos()));
            (
                acc.0 + WEIGHTS[k] * gbar * MU[k].cos(),
                acc.1 + WEIGHTS[k] * gbar * MU[k].sin(),
            )
        });
        assert!((re - expected.0).abs() < 1e-14 && (im - expected.1).abs() < 1e-14);
        assert_eq!(
            kj_mixture_trig_moment(h, 0, &mut re, &mut im),
            KjStatus::InvalidArgument
        );

        let (mut mu, mut rho, mut lambda, mut w) = ([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3]);
        let st = kj_mixture_params(
            h,
            mu.as_mut_ptr(),
            rho.as_mut_ptr(),
            lambda.as_mut_ptr(),
            w.as_mut_ptr(),
            3,
        );
        assert_eq!(st, KjStatus::Ok);
        assert_eq!(&mu[..2], &MU);
        assert_eq!(&rho[..2], &RHO);
        assert_eq!(w, WEIGHTS);
        let st = kj_mixture_params(
            h,
            mu.as_mut_ptr(),
            rho.as_mut_ptr(),
            lambda.as_mut_ptr(),
            w.as_mut_ptr(),
            2,
        );
        assert_eq!(st, KjStatus::BufferTooSmall);

        let (mut pi, mut gamma) = ([0.0; 2], [0.0; 2]);
        assert_eq!(
            kj_recover_original(h, pi.as_mut_ptr(), gamma.as_mut_ptr(), 2),
            KjStatus::Ok
        );
        assert!((pi[0] - 0.4845).abs() < 5e-4 && (gamma[1] - 0.4855).abs() < 5e-4);
        kj_mixture_free(h);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut h = ptr::null_mut();
        let bad = [0.5, 0.6, 0.1];
        let st = kj_mixture_new(
            2,
            MU.as_ptr(),
            RHO.as_ptr(),
            LAMBDA.as_ptr(),
            bad.as_ptr(),
            &mut h,
        );
        assert_eq!(st, KjStatus::InvalidArgument);
        assert!(h.is_null());
        assert!(last_error().contains("weights"), "{}", last_error());
        let len = kj_last_error_message(ptr::null_mut(), 0);
        assert_eq!(len, last_error().len());

        let st = kj_mixture_new(
            2,
            ptr::null(),
            RHO.as_ptr(),
            LAMBDA.as_ptr(),
            WEIGHTS.as_ptr(),
            &mut h,
        );
        assert_eq!(st, KjStatus::NullPointer);
        let mut d = 0.0;
        assert_eq!(
            kj_mixture_density(ptr::null(), 0.0, &mut d),
            KjStatus::NullPointer
        );

        let mut g = 0.0;
        assert_eq!(kj_gamma_bar(1.0, 0.0, &mut g), KjStatus::Domain);
        assert_eq!(kj_gamma_bar(0.0, 0.3, &mut g), KjStatus::Ok);
        assert_eq!(g, 0.5);
        assert_eq!(last_error(), "");

        let one = [1.0f64];
        let mut out = ptr::null_mut();
        assert_eq!(
            kj_fit_mmm(one.as_ptr(), 0, 2, 3, 0, &mut out, ptr::null_mut()),
            KjStatus::EmptySample
        );

        let uniform = [0.0f64; 3];
        let all_uniform = [0.0, 0.0, 1.0];
        let st = kj_mixture_new(
            2,
            uniform.as_ptr(),
            uniform.as_ptr(),
            uniform.as_ptr(),
            all_uniform.as_ptr(),
            &mut h,
        );
        assert_eq!(st, KjStatus::Ok);
        let (mut pi, mut gamma) = ([0.0; 2], [0.0; 2]);
        assert_eq!(
            kj_recover_original(h, pi.as_mut_ptr(), gamma.as_mut_ptr(), 2),
            KjStatus::Degenerate
        );
        kj_mixture_free(h);
        kj_mixture_free(ptr::null_mut());
    }
}

#[test]
fn sample_then_fit() {
    let h = new_mixture();
    let n = 5000;
    let mut xs = vec![0.0; n];
    let mut again = vec![0.0; n];
    unsafe {
        assert_eq!(kj_mixture_sample(h, n, 7, xs.as_mut_ptr()), KjStatus::Ok);
        assert_eq!(kj_mixture_sample(h, n, 7, again.as_mut_ptr()), KjStatus::Ok);
        assert_eq!(xs, again);
        assert!(xs.iter().all(|x| (0.0..std::f64::consts::TAU).contains(x)));

        let (mut mmm, mut etm) = (ptr::null_mut(), f64::NAN);
        assert_eq!(
            kj_fit_mmm(xs.as_ptr(), n, 2, 10, 1, &mut mmm, &mut etm),
            KjStatus::Ok
        );
        assert!(etm.is_finite() && etm >= 0.0);

        let (mut mle, mut loglik) = (ptr::null_mut(), f64::NAN);
        assert_eq!(
            kj_em_fit(xs.as_ptr(), n, mmm, &mut mle, &mut loglik),
            KjStatus::Ok
        );
        let loglik_of = |mix: *const KjMixture| {
            xs.iter().fold(0.0, |acc, &x| {
                let mut d = 0.0;
                assert_eq!(kj_mixture_density(mix, x, &mut d), KjStatus::Ok);
                acc + d.ln()
            })
        };
        // EM never loses likelihood relative to its starting point
        assert!(loglik >= loglik_of(mmm), "{loglik} < {}", loglik_of(mmm));
        assert!((loglik - loglik_of(mle)).abs() < 1e-6 * n as f64);
        assert!((loglik - loglik_of(h)).abs() < 0.01 * n as f64);
        for p in [h, mmm, mle] {
            kj_mixture_free(p);
        }
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("kjmix.h")
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok()
}

#[test]
fn header_compiles_as_c() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "kj_mixture_new",
        "kj_fit_mmm",
        "kj_em_fit",
        "kj_last_error_message",
        "KJ_STATUS_PANIC",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    if !have_cc() {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    }
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn c_program_links_against_static_library() {
    // target/<profile>/deps/<test binary> -> target/<profile>/libkjmix_ffi.a
    let exe = std::env::current_exe().unwrap();
    let archive = exe
        .parent()
        .and_then(Path::parent)
        .unwrap()
        .join("libkjmix_ffi.a");
    if !have_cc() || !archive.exists() {
        eprintln!(
            "no C compiler or static library at {}; skipping",
            archive.display()
        );
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "kjmix.h"
int main(void) {
    double mu[] = {2.7572, 4.0107}, rho[] = {0.7266, 0.1970}, lambda[] = {5.3136, 1.1895};
    double w[] = {0.4536, 0.4825, 0.0639};
    KjMixture *h = NULL;
    if (kj_mixture_new(2, mu, rho, lambda, w, &h) != KJ_STATUS_OK) return 1;
    double d = 0.0;
    if (kj_mixture_density(h, 1.0, &d) != KJ_STATUS_OK) return 2;
    double bad[] = {0.9, 0.9, 0.9};
    KjMixture *g = NULL;
    if (kj_mixture_new(2, mu, rho, lambda, bad, &g) != KJ_STATUS_INVALID_ARGUMENT) return 3;
    char msg[128];
    kj_last_error_message(msg, sizeof msg);
    printf("%.17g\n%s\n", d, msg);
    kj_mixture_free(h);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let stdout = String::from_utf8(run.stdout).unwrap();
    let mut lines = stdout.lines();
    let d: f64 = lines.next().unwrap().parse().unwrap();
    let direct = kjmix::ReparamMixture::from_parts(&MU, &RHO, &LAMBDA, &WEIGHTS)
        .unwrap()
        .density(kjmix::Angle::new(1.0));
    assert_eq!(d, direct);
    assert!(lines.next().unwrap().contains("weights"));
}

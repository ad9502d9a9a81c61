use std::ffi::{CStr, CString};
use std::ptr;

use cartan_kak_ffi::*;

fn last_error() -> String {
    let p = ck_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    ck_string_free(p);
    s
}

#[test]
fn quotient_algebra_round_trip() {
    unsafe {
        let mut qa = ptr::null_mut();
        assert_eq!(ck_quotient_algebra_intrinsic(8, &mut qa), CK_OK);
        assert!(ck_last_error_message().is_null());
        let mut n = 0usize;
        assert_eq!(ck_quotient_algebra_pair_count(qa, &mut n), CK_OK);
        assert_eq!(n, 7);
        let mut res = f64::NAN;
        assert_eq!(ck_quotient_algebra_verify(qa, &mut res), CK_OK);
        assert!(res < 1e-9);
        let mut js = ptr::null_mut();
        assert_eq!(ck_quotient_algebra_to_json(qa, &mut js), CK_OK);
        let json = take_string(js);
        ck_quotient_algebra_free(qa);

        let c = CString::new(json).unwrap();
        let mut back = ptr::null_mut();
        assert_eq!(ck_quotient_algebra_from_json(c.as_ptr(), &mut back), CK_OK);
        assert_eq!(ck_quotient_algebra_verify(back, ptr::null_mut()), CK_OK);
        ck_quotient_algebra_free(back);
    }
}

#[test]
fn corrupted_algebra_fails_verification() {
    let mut qa = ptr::null_mut();
    unsafe {
        assert_eq!(ck_quotient_algebra_intrinsic(4, &mut qa), CK_OK);
        let mut js = ptr::null_mut();
        ck_quotient_algebra_to_json(qa, &mut js);
        ck_quotient_algebra_free(qa);
        let mut v: serde_json::Value = serde_json::from_str(&take_string(js)).unwrap();
        let moved = v["pairs"][0]["w"].as_array_mut().unwrap().pop().unwrap();
        v["pairs"][1]["w"].as_array_mut().unwrap().push(moved);
        let c = CString::new(v.to_string()).unwrap();
        let mut bad = ptr::null_mut();
        assert_eq!(ck_quotient_algebra_from_json(c.as_ptr(), &mut bad), CK_OK);
        assert_eq!(ck_quotient_algebra_verify(bad, ptr::null_mut()), CK_ERR_VERIFICATION);
        assert!(last_error().contains("closure"));
        ck_quotient_algebra_free(bad);
    }
}

#[test]
fn decompose_a_cnot_like_permutation() {
    // swap of the last two basis states in dimension 4
    let mut re = [0.0; 16];
    let im = [0.0; 16];
    for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        re[i * 4 + j] = 1.0;
    }
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(ck_decompose(4, re.as_ptr(), im.as_ptr(), 0, &mut f), CK_OK);
        let mut err = 1.0;
        assert_eq!(ck_factorization_reconstruction_error(f, &mut err), CK_OK);
        assert!(err < 1e-8);
        let mut n = 0;
        assert_eq!(ck_factorization_len(f, &mut n), CK_OK);
        assert!(n > 0);
        let mut nonlocal = 0;
        for k in 0..n {
            let mut fac = CkFactor::default();
            assert_eq!(ck_factorization_factor(f, k, &mut fac), CK_OK);
            assert!((1..=3).contains(&fac.level));
            nonlocal += usize::from(fac.locality == CK_NONLOCAL);
            let mut lab = ptr::null_mut();
            assert_eq!(ck_factorization_factor_label(f, k, &mut lab), CK_OK);
            assert!(take_string(lab).starts_with("tensor:"));
        }
        assert!(nonlocal > 0);
        let mut fac = CkFactor::default();
        assert_eq!(ck_factorization_factor(f, n, &mut fac), CK_ERR_INVALID_INPUT);
        let (mut pr, mut pi) = (0.0, 0.0);
        assert_eq!(ck_factorization_global_phase(f, &mut pr, &mut pi), CK_OK);
        assert!(((pr * pr + pi * pi) - 1.0).abs() < 1e-12);
        let mut js = ptr::null_mut();
        assert_eq!(ck_factorization_to_json(f, &mut js), CK_OK);
        let v: serde_json::Value = serde_json::from_str(&take_string(js)).unwrap();
        assert_eq!(v["factors"].as_array().unwrap().len(), n);
        ck_factorization_free(f);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut f = ptr::null_mut();
        let re = [1.0, 1.0, 0.0, 1.0];
        let im = [0.0; 4];
        assert_eq!(ck_decompose(2, re.as_ptr(), im.as_ptr(), 0, &mut f), CK_ERR_INVALID_INPUT);
        assert!(last_error().contains("not unitary"));
        assert!(f.is_null());
        assert_eq!(ck_decompose(2, ptr::null(), im.as_ptr(), 0, &mut f), CK_ERR_NULL);
        assert_eq!(ck_quotient_algebra_intrinsic(1, ptr::null_mut()), CK_ERR_INVALID_INPUT);
        let mut qa = ptr::null_mut();
        assert_eq!(ck_quotient_algebra_intrinsic(4, ptr::null_mut()), CK_ERR_NULL);
        assert_eq!(ck_quotient_algebra_pair_count(ptr::null(), &mut 0), CK_ERR_NULL);
        let junk = CString::new("{").unwrap();
        assert_eq!(ck_quotient_algebra_from_json(junk.as_ptr(), &mut qa), CK_ERR_INVALID_INPUT);
        assert!(qa.is_null());
        ck_quotient_algebra_free(ptr::null_mut());
        ck_factorization_free(ptr::null_mut());
        ck_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        assert_eq!(ck_quotient_algebra_pair_count(ptr::null(), &mut 0), CK_ERR_NULL);
    }
    std::thread::spawn(|| assert!(ck_last_error_message().is_null())).join().unwrap();
    assert!(last_error().contains("null"));
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cartan_kak.h")).unwrap();
    for name in [
        "ck_last_error_message",
        "ck_string_free",
        "ck_quotient_algebra_intrinsic",
        "ck_quotient_algebra_verify",
        "ck_quotient_algebra_free",
        "ck_decompose",
        "ck_factorization_factor",
        "ck_factorization_free",
        "typedef struct CkFactorization CkFactorization",
        "#define CK_ERR_PANIC -5",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"cartan_kak.h\"\n\
         int main(void) {\n\
           CkQuotientAlgebra *qa = NULL;\n\
           size_t n = 0;\n\
           if (ck_quotient_algebra_intrinsic(8, &qa) != CK_OK) return 1;\n\
           ck_quotient_algebra_pair_count(qa, &n);\n\
           ck_quotient_algebra_free(qa);\n\
           return n == 7 ? 0 : 2;\n\
         }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler, skipping");
            return;
        }
    };
    assert!(status.success());
}

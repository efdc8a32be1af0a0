//! Exercises the C ABI from Rust, then compiles and runs a small C program
//! against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use hesplit_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { hs_last_error_message(buf.as_mut_ptr(), buf.len()) };
    String::from_utf8_lossy(&buf[..n.min(255)]).into_owned()
}

fn small_ctx(rot: &[i64]) -> *mut HsSecretContext {
    let chain = [40u32, 20, 20];
    let mut ctx = ptr::null_mut();
    let s = unsafe { hs_secret_context_new(4096, chain.as_ptr(), 3, 21, rot.as_ptr(), rot.len(), 9, &mut ctx) };
    assert_eq!(s, HsStatus::Ok, "{}", last_error());
    ctx
}

#[test]
fn encrypt_evaluate_decrypt_round_trip() {
    unsafe {
        let ctx = small_ctx(&[1]);
        assert_eq!(hs_secret_context_slots(ctx), 2048);
        let mut pubc = ptr::null_mut();
        assert_eq!(hs_secret_context_public(ctx, &mut pubc), HsStatus::Ok);

        let (x, y) = ([1.0, 2.0, 3.0], [0.5, 0.5, 0.5]);
        let (mut a, mut b, mut s, mut p, mut r) =
            (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(hs_encrypt(ctx, x.as_ptr(), 3, &mut a), HsStatus::Ok);
        assert_eq!(hs_encrypt(ctx, y.as_ptr(), 3, &mut b), HsStatus::Ok);
        assert_eq!(hs_add(pubc, a, b, &mut s), HsStatus::Ok);
        assert_eq!(hs_mul_plain(pubc, s, [2.0, 2.0, 2.0].as_ptr(), 3, &mut p), HsStatus::Ok);
        assert_eq!(hs_ciphertext_level(p), hs_ciphertext_level(s) - 1);
        assert_eq!(hs_rotate(pubc, p, 1, &mut r), HsStatus::Ok);

        // size query first, then the real call
        let mut n = 0;
        assert_eq!(hs_decrypt(ctx, r, ptr::null_mut(), 0, &mut n), HsStatus::BufferTooSmall);
        let mut out = vec![0.0; n];
        assert_eq!(hs_decrypt(ctx, r, out.as_mut_ptr(), n, &mut n), HsStatus::Ok);
        for (got, want) in out[..2].iter().zip([5.0, 7.0]) {
            assert!((got - want).abs() < 1e-2, "{got} vs {want}");
        }

        // ciphertext survives serialization through a fresh public context
        let mut len = 0;
        hs_public_context_serialize(pubc, ptr::null_mut(), 0, &mut len);
        let mut bytes = vec![0u8; len];
        assert_eq!(hs_public_context_serialize(pubc, bytes.as_mut_ptr(), len, &mut len), HsStatus::Ok);
        let mut pubc2 = ptr::null_mut();
        assert_eq!(hs_public_context_deserialize(bytes.as_ptr(), len, &mut pubc2), HsStatus::Ok);
        hs_ciphertext_serialize(pubc2, a, ptr::null_mut(), 0, &mut len);
        let mut cb = vec![0u8; len];
        assert_eq!(hs_ciphertext_serialize(pubc2, a, cb.as_mut_ptr(), len, &mut len), HsStatus::Ok);
        let mut a2 = ptr::null_mut();
        assert_eq!(hs_ciphertext_deserialize(pubc2, cb.as_ptr(), len, &mut a2), HsStatus::Ok);
        let mut back = vec![0.0; 2048];
        assert_eq!(hs_decrypt(ctx, a2, back.as_mut_ptr(), 2048, &mut n), HsStatus::Ok);
        assert!((back[2] - 3.0).abs() < 1e-2);
        cb[0] ^= 0xff;
        let mut bad = ptr::null_mut();
        assert_eq!(hs_ciphertext_deserialize(pubc2, cb.as_ptr(), len, &mut bad), HsStatus::Serialize);
        assert!(bad.is_null());

        for c in [a, b, s, p, r, a2] {
            hs_ciphertext_free(c);
        }
        hs_public_context_free(pubc);
        hs_public_context_free(pubc2);
        hs_secret_context_free(ctx);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ctx = ptr::null_mut();
        let chain = [40u32, 20, 20];
        assert_eq!(hs_secret_context_new(3000, chain.as_ptr(), 3, 21, ptr::null(), 0, 1, &mut ctx), HsStatus::Params);
        assert!(!last_error().is_empty());
        assert_eq!(hs_secret_context_new(4096, ptr::null(), 3, 21, ptr::null(), 0, 1, &mut ctx), HsStatus::NullPointer);

        let ctx = small_ctx(&[]);
        let mut pubc = ptr::null_mut();
        hs_secret_context_public(ctx, &mut pubc);
        let mut a = ptr::null_mut();
        hs_encrypt(ctx, [1.0].as_ptr(), 1, &mut a);
        let mut r = ptr::null_mut();
        assert_eq!(hs_rotate(pubc, a, 1, &mut r), HsStatus::Capability);

        // two products exhaust a three-prime chain
        let (mut p1, mut p2, mut p3) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(hs_mul_plain(pubc, a, [1.0].as_ptr(), 1, &mut p1), HsStatus::Ok);
        assert_eq!(hs_mul_plain(pubc, p1, [1.0].as_ptr(), 1, &mut p2), HsStatus::Ok);
        assert_eq!(hs_mul_plain(pubc, p2, [1.0].as_ptr(), 1, &mut p3), HsStatus::Depth);
        assert_eq!(hs_add(pubc, a, p1, &mut r), HsStatus::Alignment);

        let big = vec![0.0; 4096];
        assert_eq!(hs_encrypt(ctx, big.as_ptr(), big.len(), &mut r), HsStatus::Capacity);
        assert_eq!(hs_ciphertext_level(ptr::null()), -1);

        for c in [a, p1, p2] {
            hs_ciphertext_free(c);
        }
        hs_ciphertext_free(ptr::null_mut());
        hs_public_context_free(pubc);
        hs_secret_context_free(ctx);
    }
}

#[test]
fn encrypted_linear_layer_in_both_layouts() {
    let (rows, d, m) = (2usize, 16usize, 3usize);
    let a: Vec<f64> = (0..rows * d).map(|i| (i as f64 * 0.37).sin()).collect();
    let w: Vec<f64> = (0..d * m).map(|i| (i as f64 * 0.11).cos() * 0.1).collect();
    let b = [0.1, -0.2, 0.3];
    let mut plain = vec![0.0; rows * m];
    for r in 0..rows {
        for k in 0..m {
            plain[r * m + k] = b[k] + (0..d).map(|j| a[r * d + j] * w[j * m + k]).sum::<f64>();
        }
    }
    let ctx = small_ctx(&[1, 2, 4, 8]);
    for batched in [0, 1] {
        let mut out = vec![0.0; rows * m];
        let mut n = 0;
        let s = unsafe {
            hs_he_linear(
                ctx,
                a.as_ptr(),
                rows,
                d,
                w.as_ptr(),
                b.as_ptr(),
                m,
                batched,
                out.as_mut_ptr(),
                out.len(),
                &mut n,
            )
        };
        assert_eq!(s, HsStatus::Ok, "{}", last_error());
        assert_eq!(n, rows * m);
        let err = out.iter().zip(&plain).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-2, "batched={batched}: {err}");
    }
    unsafe { hs_secret_context_free(ctx) };
}

#[test]
fn model_counts_and_predicts() {
    unsafe {
        for (v, count) in [(1, 2061), (2, 3989), (3, 12013)] {
            let mut m = ptr::null_mut();
            assert_eq!(hs_model_new(v, 1, &mut m), HsStatus::Ok);
            assert_eq!(hs_model_param_count(m), count);
            hs_model_free(m);
        }
        let mut m = ptr::null_mut();
        assert_eq!(hs_model_new(7, 1, &mut m), HsStatus::InvalidArgument);
        assert_eq!(hs_model_new(1, 1, &mut m), HsStatus::Ok);
        let (mut c, mut t) = (0, 0);
        assert_eq!(hs_model_input_shape(m, &mut c, &mut t), HsStatus::Ok);
        let x: Vec<f64> = (0..3 * c * t).map(|i| (i as f64 * 0.05).sin()).collect();
        let mut labels = [99u32; 3];
        assert_eq!(hs_model_predict(m, x.as_ptr(), 3, labels.as_mut_ptr()), HsStatus::Ok);
        assert!(labels.iter().all(|&l| l < 5));
        let nan = vec![f64::NAN; c * t];
        assert_eq!(hs_model_predict(m, nan.as_ptr(), 1, labels.as_mut_ptr()), HsStatus::Model);
        hs_model_free(m);
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "hesplit.h"

int main(void) {
    uint32_t chain[3] = {40, 20, 20};
    HsSecretContext *ctx = NULL;
    if (hs_secret_context_new(4096, chain, 3, 21, NULL, 0, 3, &ctx) != HS_STATUS_OK) return 1;
    double x[2] = {1.25, -0.5};
    HsCiphertext *ct = NULL;
    if (hs_encrypt(ctx, x, 2, &ct) != HS_STATUS_OK) return 2;
    double out[2048];
    size_t n = 0;
    if (hs_decrypt(ctx, ct, out, 2048, &n) != HS_STATUS_OK || n != 2048) return 3;
    if (fabs(out[0] - 1.25) > 1e-2 || fabs(out[1] + 0.5) > 1e-2) return 4;
    HsModel *m = NULL;
    if (hs_model_new(2, 0, &m) != HS_STATUS_OK || hs_model_param_count(m) != 3989) return 5;
    if (hs_model_new(9, 0, &m) != HS_STATUS_INVALID_ARGUMENT) return 6;
    char msg[128];
    if (hs_last_error_message((uint8_t *)msg, sizeof msg) == 0) return 7;
    hs_model_free(m);
    hs_ciphertext_free(ct);
    hs_secret_context_free(ctx);
    printf("ok\n");
    return 0;
}
"#;

/// `target/<profile>/` from the test binary at `target/<profile>/deps/`.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let lib = profile_dir().join("libhesplit_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("smoke");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let o = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}

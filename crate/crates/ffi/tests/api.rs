use std::ffi::{CStr, CString};
use std::ptr;

use mobds_ffi::*;

fn data_path() -> CString {
    CString::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/data/unemployment_synthetic.csv"
    ))
    .unwrap()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = mobds_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load() -> *mut MobdsDataset {
    let mut ds = ptr::null_mut();
    let st = unsafe {
        mobds_dataset_from_csv(
            data_path().as_ptr(),
            c("spell").as_ptr(),
            c("censor1").as_ptr(),
            ptr::null(),
            c("age,ui,tenure").as_ptr(),
            c("ui").as_ptr(),
            &mut ds,
        )
    };
    assert_eq!(
        st,
        MobdsStatus::Ok,
        "{}",
        if st == MobdsStatus::Ok {
            String::new()
        } else {
            last_error()
        }
    );
    ds
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(mobds_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let st = unsafe {
        mobds_dataset_from_arrays(
            ptr::null(),
            ptr::null(),
            0,
            ptr::null(),
            0,
            ptr::null(),
            0,
            0,
            ptr::null_mut(),
        )
    };
    assert_eq!(st, MobdsStatus::ErrNull);
    assert!(last_error().contains("null"));
    unsafe {
        assert_eq!(mobds_dataset_len(ptr::null()), 0);
        mobds_dataset_free(ptr::null_mut());
        mobds_tree_free(ptr::null_mut());
        mobds_string_free(ptr::null_mut());
    }
}

#[test]
fn arrays_and_life_table() {
    let t = [1i64, 2, 2, 3, 3, 3];
    let d = [1i64, 1, 0, 1, 0, 0];
    let z = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let mut ds = ptr::null_mut();
    let st = unsafe { mobds_dataset_from_arrays(t.as_ptr(), d.as_ptr(), 6, ptr::null(), 0, z.as_ptr(), 1, 0, &mut ds) };
    assert_eq!(st, MobdsStatus::Ok);
    unsafe {
        assert_eq!(mobds_dataset_len(ds), 6);
        assert_eq!(mobds_dataset_k_max(ds), 3);
        let (mut h, mut s, mut n) = ([0.0; 8], [0.0; 8], 0usize);
        assert_eq!(
            mobds_life_table(ds, h.as_mut_ptr(), s.as_mut_ptr(), 8, &mut n),
            MobdsStatus::Ok
        );
        assert_eq!(n, 3);
        // 1/6 at t=1, 1/5 at t=2, 1/3 at t=3
        assert!((h[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((h[1] - 0.2).abs() < 1e-12);
        assert!((h[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s[2] - (5.0 / 6.0) * 0.8 * (2.0 / 3.0)).abs() < 1e-12);
        mobds_dataset_free(ds);
    }
}

#[test]
fn invalid_data_is_a_data_error() {
    let t = [0i64, 2];
    let d = [1i64, 1];
    let z = [0.0, 1.0];
    let mut ds = ptr::null_mut();
    let st = unsafe { mobds_dataset_from_arrays(t.as_ptr(), d.as_ptr(), 2, ptr::null(), 0, z.as_ptr(), 1, 0, &mut ds) };
    assert_eq!(st, MobdsStatus::ErrData);
    assert!(ds.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn missing_file_is_io_error() {
    let mut ds = ptr::null_mut();
    let st = unsafe {
        mobds_dataset_from_csv(
            c("/nonexistent/data.csv").as_ptr(),
            c("t").as_ptr(),
            c("d").as_ptr(),
            ptr::null(),
            c("z").as_ptr(),
            ptr::null(),
            &mut ds,
        )
    };
    assert_eq!(st, MobdsStatus::ErrIo);
}

#[test]
fn bad_config_is_usage_error() {
    let ds = load();
    let mut cfg = mobds_config_default();
    cfg.method = 9;
    let mut tree = ptr::null_mut();
    unsafe {
        assert_eq!(mobds_tree_grow(ds, &cfg, &mut tree), MobdsStatus::ErrUsage);
        cfg = mobds_config_default();
        cfg.alpha = 2.0;
        assert_eq!(mobds_tree_grow(ds, &cfg, &mut tree), MobdsStatus::ErrUsage);
        assert!(tree.is_null());
        mobds_dataset_free(ds);
    }
}

#[test]
fn grow_roundtrip_predict() {
    let ds = load();
    let mut cfg = mobds_config_default();
    cfg.n_perms = 99;
    cfg.max_depth = 2;
    cfg.seed = 11;
    let mut tree = ptr::null_mut();
    unsafe {
        assert_eq!(mobds_tree_grow(ds, &cfg, &mut tree), MobdsStatus::Ok);
        let nodes = mobds_tree_num_nodes(tree);
        assert!(nodes >= 3, "age effect should split the root");
        assert_eq!(mobds_tree_num_terminals(tree), nodes.div_ceil(2));

        let mut json = ptr::null_mut();
        assert_eq!(mobds_tree_to_json(tree, &mut json), MobdsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(mobds_tree_from_json(json, &mut back), MobdsStatus::Ok);
        assert_eq!(mobds_tree_num_nodes(back), nodes);

        // ui is categorical with levels [no, yes]
        let z = [60.0, 1.0, 5.0];
        let (mut n1, mut n2, mut w1, mut w2) = (0usize, 0usize, 0usize, 0usize);
        let (mut s1, mut s2) = ([0.0; 40], [0.0; 40]);
        assert_eq!(
            mobds_tree_predict(
                tree,
                z.as_ptr(),
                3,
                ptr::null(),
                0,
                &mut n1,
                s1.as_mut_ptr(),
                40,
                &mut w1
            ),
            MobdsStatus::Ok
        );
        assert_eq!(
            mobds_tree_predict(
                back,
                z.as_ptr(),
                3,
                ptr::null(),
                0,
                &mut n2,
                s2.as_mut_ptr(),
                40,
                &mut w2
            ),
            MobdsStatus::Ok
        );
        assert_eq!((n1, w1), (n2, w2));
        assert!(w1 > 0);
        assert_eq!(&s1[..w1], &s2[..w2]);
        assert!(s1[..w1].windows(2).all(|w| w[1] <= w[0]));

        let x = [1.0];
        assert_eq!(
            mobds_tree_predict(
                tree,
                z.as_ptr(),
                3,
                x.as_ptr(),
                1,
                &mut n1,
                s1.as_mut_ptr(),
                40,
                &mut w1
            ),
            MobdsStatus::ErrUsage
        );

        mobds_string_free(json);
        mobds_tree_free(back);
        mobds_tree_free(tree);
        mobds_dataset_free(ds);
    }
}

#[test]
fn malformed_json_is_rejected() {
    let mut tree = ptr::null_mut();
    let st = unsafe { mobds_tree_from_json(c("{not json").as_ptr(), &mut tree) };
    assert_ne!(st, MobdsStatus::Ok);
    assert!(tree.is_null());
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mobds.h")).unwrap();
    for f in [
        "mobds_version",
        "mobds_last_error_message",
        "mobds_dataset_from_arrays",
        "mobds_dataset_from_csv",
        "mobds_life_table",
        "mobds_config_default",
        "mobds_tree_grow",
        "mobds_tree_predict",
        "mobds_tree_to_json",
        "mobds_tree_from_json",
        "mobds_tree_free",
        "mobds_string_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/mobds.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

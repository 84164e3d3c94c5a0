use std::path::Path;
use std::process::Command;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/oda.h")).expect("header generated by build")
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for f in [
        "oda_backend_new",
        "oda_backend_free",
        "oda_last_error",
        "oda_select_dataset",
        "oda_ask",
        "oda_result_csv",
        "oda_refine",
        "oda_string_free",
        "oda_version",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing");
    }
    assert!(h.contains("typedef struct OdaBackend OdaBackend;"));
    assert!(h.contains("ODA_STATUS_OK = 0"));
    assert!(h.contains("ODA_STATUS_REJECTED = 5"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile_dir();
    let src = dir.join("use_header.c");
    std::fs::write(
        &src,
        "#include \"oda.h\"\nint main(void) { OdaBackend *b = 0; OdaStatus s = oda_backend_new(0, &b); (void)s; oda_backend_free(b); return 0; }\n",
    )
    .unwrap();
    let inc = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc").arg("-std=c99").arg("-Wall").arg("-Werror").arg("-fsyntax-only").arg("-I").arg(&inc).arg(&src).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("oda-ffi-header-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

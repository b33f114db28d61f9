fn main() {
    // Real Schur factorization and the quasi-triangular Sylvester solve come
    // from the reference LAPACK, linked statically. The distribution's
    // default LAPACK provider (OpenBLAS) selects CPU-specific kernels at load
    // time, and some of those return wrong Schur forms on recent hardware.
    let lapack_dir = std::env::var("PARASTAB_LAPACK_DIR")
        .unwrap_or_else(|_| "/usr/lib/x86_64-linux-gnu/lapack".into());
    let blas_dir = std::env::var("PARASTAB_BLAS_DIR")
        .unwrap_or_else(|_| "/usr/lib/x86_64-linux-gnu/blas".into());
    println!("cargo:rerun-if-env-changed=PARASTAB_LAPACK_DIR");
    println!("cargo:rerun-if-env-changed=PARASTAB_BLAS_DIR");
    println!("cargo:rustc-link-search=native={lapack_dir}");
    println!("cargo:rustc-link-search=native={blas_dir}");
    println!("cargo:rustc-link-lib=static=lapack");
    println!("cargo:rustc-link-lib=static=blas");
    println!("cargo:rustc-link-lib=dylib=gfortran");
}

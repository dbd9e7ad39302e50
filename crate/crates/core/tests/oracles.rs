mod common;

#[test]
fn kernels_agree_with_naive_loops() {
    common::oracle_sweep(1000, 99).unwrap();
}

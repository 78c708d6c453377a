use sketchmor_wasm::{omega_curve, omp_recovery, residual_curve};

#[test]
fn omega_shrinks_with_k() {
    let rows = omega_curve(256, 4, "srht", &[16, 64, 256], 5, 1).unwrap();
    assert_eq!(rows.len(), 12);
    let median = |i: usize| rows[4 * i + 2];
    assert!(median(0) > median(1));
    // k = n with an SRHT is an isometry
    assert!(median(2) < 1e-10);
    assert!(omega_curve(16, 4, "nope", &[4], 1, 0).is_err());
}

#[test]
fn sketched_residual_is_close_to_classical() {
    let rows = residual_curve(200, 4, 64, 9, 3).unwrap();
    assert_eq!(rows.len(), 36);
    for row in rows.chunks(4) {
        let (classic, sketched) = (row[1], row[2]);
        assert!(classic <= sketched * (1.0 + 1e-9));
        assert!(sketched <= 3.0 * classic + 1e-12);
    }
}

#[test]
fn dictionary_members_are_recovered() {
    let rows = omp_recovery(300, 12, 3, 128, 48, 5).unwrap();
    for row in rows.chunks(4) {
        assert_eq!(row[1], 1.0, "member {} not recovered", row[0]);
        assert!(row[2] <= 1e-8);
    }
}

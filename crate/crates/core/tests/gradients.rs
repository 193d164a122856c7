//! Finite-difference checks of every differentiable operation and loss.

mod common;

#[test]
fn every_operation_and_loss_matches_central_differences() {
    let results = common::gradient_suite();
    assert_eq!(results.len(), 20);
    for (name, err) in results {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

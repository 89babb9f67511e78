mod common;

#[test]
fn loss_never_rises_without_sampling() {
    common::loss_non_increasing(5, 31).unwrap();
}

#[test]
fn zero_trees_predict_base_score() {
    common::zero_trees_constant(32).unwrap();
}

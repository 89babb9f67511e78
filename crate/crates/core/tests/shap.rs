mod common;

#[test]
fn treeshap_matches_subset_enumeration() {
    common::shap_matches_subsets(60, 21).unwrap();
}

#[test]
fn local_accuracy_on_full_test_matrices() {
    common::shap_local_accuracy(22).unwrap();
}

mod support {
    pub mod gradcheck;
}

use ascnet::Head;
use support::gradcheck::{check_layer_kind, check_losses, check_network, LAYER_KINDS, MAX_REL_ERR};

#[test]
fn every_layer_kind_passes_finite_differences() {
    for kind in LAYER_KINDS {
        let err = check_layer_kind(kind);
        assert!(err < MAX_REL_ERR, "{kind}: max relative error {err:e}");
    }
}

#[test]
fn losses_pass_finite_differences() {
    let err = check_losses();
    assert!(err < MAX_REL_ERR, "max relative error {err:e}");
}

#[test]
fn whole_network_gradients_for_both_heads() {
    for head in [Head::Standard, Head::Spsmt] {
        for seed in 0..3 {
            let err = check_network(head, seed);
            assert!(err < MAX_REL_ERR, "{head:?} seed {seed}: max relative error {err:e}");
        }
    }
}

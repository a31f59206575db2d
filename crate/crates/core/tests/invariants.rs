mod common;

use common::props;

const CASES: u32 = 128;

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = props::$name(CASES) {
                    panic!("{e}");
                }
            }
        )*
    };
}

property_tests!(
    simplex_preservation,
    log_additive_identity,
    contrast_design_identity,
    kkt_certificate,
    certified_path,
    psd_feasibility,
    contrast_moment_reduction,
    reference_invariance,
    permutation_equivariance,
    determinism,
    metric_bounds,
    fold_partition,
    log_round_trip,
);

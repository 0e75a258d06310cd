mod common;

use common::props::{arith, matching};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matching_agrees_with_brute_force(case in matching::case_strategy()) {
        matching::agrees_with_brute_force(case)?;
    }

    #[test]
    fn canonicalize_is_idempotent_and_order_blind(case in matching::canon_strategy()) {
        matching::canonicalize_idempotent(case)?;
    }

    #[test]
    fn normal_forms_are_fixpoints(e in arith::expr()) {
        arith::normal_form_is_fixpoint(e)?;
    }
}

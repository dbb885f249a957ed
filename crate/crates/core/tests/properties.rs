//! Generated-input checks of the model invariants, 1000 cases each.

mod common;

use common::{quorum_input, scenario, waiting_scenario};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn conservation(cfg in scenario()) {
        common::conservation(cfg)?;
    }

    #[test]
    fn pipeline_safety(cfg in scenario()) {
        common::pipeline_safety(cfg)?;
    }

    #[test]
    fn serial_and_pipelined_agree_on_validity(cfg in scenario()) {
        common::mode_equivalence(cfg)?;
    }

    #[test]
    fn endorsers_were_eligible_when_routed(cfg in scenario()) {
        common::eligibility(cfg)?;
    }

    #[test]
    fn relaxing_the_quorum_never_waits_longer(input in quorum_input()) {
        common::quorum_monotone(input)?;
    }

    #[test]
    fn paused_leaders_finish_nothing(cfg in waiting_scenario()) {
        common::pause_holds(cfg)?;
    }
}

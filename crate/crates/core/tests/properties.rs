mod common;

use hybrid_ra::allocator::{centralized_allocate, total_demand, AppSpec, Scenario, UeSpec};
use hybrid_ra::{Error, Utility};
use hybrid_ra::scenario::{parse_scenario, serialize_scenario, ScenarioFile};
use proptest::prelude::*;

fn scenario_file() -> impl Strategy<Value = ScenarioFile> {
    (any::<u64>(), 1usize..6, 1usize..4, prop::option::of(1.0f64..500.0)).prop_map(|(seed, ues, apps, budget)| {
        let s = common::random_scenario(&mut common::rng(seed), ues, apps, 1.0);
        ScenarioFile {
            budget,
            ues: s.ues().to_vec(),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialize_then_parse_is_identity(file in scenario_file()) {
        let text = serialize_scenario(&file);
        prop_assert_eq!(parse_scenario(&text).unwrap(), file);
    }

    #[test]
    fn demand_falls_as_price_rises(seed in any::<u64>(), p in 1e-4f64..10.0, factor in 1.0f64..4.0) {
        let s = common::random_scenario(&mut common::rng(seed), 4, 3, 1.0);
        prop_assert!(total_demand(&s, p * factor).unwrap() <= total_demand(&s, p).unwrap());
    }

    #[test]
    fn centralized_uses_whole_budget(seed in any::<u64>(), budget in 1.0f64..400.0) {
        let s = common::random_scenario(&mut common::rng(seed), 5, 3, budget);
        // Sigmoid-only cells cannot absorb budgets far past their inflections.
        prop_assume!(s.ues().iter().flat_map(|ue| ue.apps()).any(|app| !app.utility().is_sigmoidal()));
        let (a, kkt) = centralized_allocate(&s).unwrap();
        prop_assert!((a.total() - budget).abs() <= 1e-9 * budget);
        prop_assert!(a.rates.iter().flatten().all(|r| *r > 0.0));
        prop_assert!(kkt.max_residual() <= 1e-6);
    }
}

#[test]
fn sigmoid_only_cells_saturate() {
    let app = AppSpec::new(Utility::sigmoidal(5.0, 10.0).unwrap(), 1.0).unwrap();
    let ue = UeSpec::new(vec![app], 1.0).unwrap();
    // Reachable: the price needed is tiny but representable.
    let s = Scenario::new(vec![ue.clone()], 100.0).unwrap();
    let (a, _) = centralized_allocate(&s).unwrap();
    assert!((a.total() - 100.0).abs() < 1e-9);
    assert!(a.shadow_price > 0.0 && a.shadow_price < 1e-150, "{}", a.shadow_price);
    let s = Scenario::new(vec![ue], 1000.0).unwrap();
    assert!(matches!(centralized_allocate(&s), Err(Error::Domain(_))));
}

use pcahn_core::dynamics::{discrete_energy, step, MobilityModel, SimState, SolverConfig};
use pcahn_core::field::{mass, Field, Grid};
use pcahn_core::potential::PotentialParams;
use proptest::prelude::*;

fn mobility() -> impl Strategy<Value = MobilityModel> {
    prop_oneof![
        (0.2..3.0f64).prop_map(|value| MobilityModel::Constant { value }),
        (-1.0..1.0f64).prop_map(|c| MobilityModel::WagnerExponential { c }),
        (0.2..3.0f64).prop_map(|d0| MobilityModel::Mullins { d0 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_step_conserves_mass_and_dissipates(
        modes in prop::collection::vec(-0.3..0.3f64, 4),
        theta in 1.5..4.0f64,
        p in prop_oneof![Just(2.0), 2.2..3.5f64],
        mobility in mobility(),
    ) {
        let params = PotentialParams::new(theta, p, 0.08).unwrap();
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let u = Field::from_fn(grid, |x| {
            modes.iter().enumerate().map(|(k, a)| a * (std::f64::consts::PI * k as f64 * x).cos()).sum()
        }).unwrap();
        let config = SolverConfig::default();
        let state = SimState::new(u, &config);
        let (next, info) = step(&state, &params, &mobility, &config).unwrap();
        let scale = mass(&state.u).abs().max(1.0);
        prop_assert!((mass(&next.u) - mass(&state.u)).abs() / scale < 1e-12);
        prop_assert!(discrete_energy(&next.u, &params) <= discrete_energy(&state.u, &params) + config.energy_tol);
        prop_assert!(info.dissipation_rhs <= 0.0);
    }
}

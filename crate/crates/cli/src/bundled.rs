//! Scenarios shipped inside the binary.

pub const SCENARIOS: &[(&str, &str)] = &[
    ("cir_classic", include_str!("../scenarios/cir_classic.json")),
    ("vasicek_jump", include_str!("../scenarios/vasicek_jump.json")),
    ("example_2_1", include_str!("../scenarios/example_2_1.json")),
    ("example_2_2", include_str!("../scenarios/example_2_2.json")),
    ("example_2_3", include_str!("../scenarios/example_2_3.json")),
    ("plane_case_Ia", include_str!("../scenarios/plane_case_Ia.json")),
    ("plane_case_Ib", include_str!("../scenarios/plane_case_Ib.json")),
    ("plane_case_II", include_str!("../scenarios/plane_case_II.json")),
    ("spherical_stable", include_str!("../scenarios/spherical_stable.json")),
    ("example_3d", include_str!("../scenarios/example_3d.json")),
    ("control_nonlinear", include_str!("../scenarios/control_nonlinear.json")),
    ("control_g0", include_str!("../scenarios/control_g0.json")),
];

pub fn get(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

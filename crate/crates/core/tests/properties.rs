mod support;

macro_rules! properties {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = support::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

properties!(
    state_invariants,
    displacement_adjoint,
    wigner_normalization,
    qn_bounds,
    measurement_rows_hermitian,
    cn_orthogonal_invariance,
    born_linearity,
    permutation_covariance,
    optimizer_properties,
    phase_covariance,
    noise_ranges,
    noise_monotone_in_t_phi,
    thermal_roundtrip,
    ens_response_scaling,
    parity_offset_identity,
    dynamics_state_invariants,
    dynamics_step_halving,
    dynamics_unitary_purity,
    dynamics_scaling,
    inversion_roundtrip,
    mle_projection,
    mle_nearest_qubit,
    bme_deterministic,
    bme_shot_scaling,
    fidelity_symmetry,
);

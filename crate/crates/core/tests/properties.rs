use proptest::prelude::*;
use suspvisc::effective::TensorMeta;
use suspvisc::ensembles::periodic_displacement;
use suspvisc::spectral::overlap_fraction;
use suspvisc::{
    bg_far_kernel, cluster_terms, einstein_fit, generate, renormalized_b1, EnsembleSpec, Error, ParticleConfig, ProcessKind,
    SolverConfig, StrainBasis, ViscosityTensor,
};

fn spec_strategy() -> impl Strategy<Value = EnsembleSpec> {
    (
        prop_oneof![Just(2usize), Just(3usize)],
        8.0..16.0f64,
        prop_oneof![
            Just(ProcessKind::RandomSequentialAddition),
            Just(ProcessKind::MaternII),
            Just(ProcessKind::PoissonThinned),
            Just(ProcessKind::CubicLattice)
        ],
        0.0..0.1f64,
        0.0..0.6f64,
        any::<u64>(),
    )
        .prop_map(|(d, l, p, phi, gap, seed)| EnsembleSpec::new(d, l, p, phi, gap, seed))
}

/// Generated configuration; inputs the process rejects are discarded.
fn generated(spec: &EnsembleSpec) -> Result<ParticleConfig, TestCaseError> {
    match generate(spec) {
        Ok(c) => Ok(c),
        Err(Error::Validation(_) | Error::Saturation { .. }) => Err(TestCaseError::reject("outside the process range")),
        Err(e) => Err(TestCaseError::fail(e.to_string())),
    }
}

fn strain_strategy(dim: usize) -> impl Strategy<Value = [[f64; 3]; 3]> {
    prop::collection::vec(-1.0..1.0f64, 5).prop_map(move |c| {
        let basis = StrainBasis::canonical(dim).unwrap();
        let mut e = [[0.0; 3]; 3];
        for (k, b) in basis.elements.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    e[i][j] += c[k] * b[i][j];
                }
            }
        }
        e
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_configurations_respect_the_hardcore_gap(spec in spec_strategy()) {
        let c = generated(&spec)?;
        if let Some(min) = c.min_center_distance() {
            prop_assert!(min >= 2.0 + spec.gap - 1e-9, "{min} < {}", 2.0 + spec.gap);
        }
        for p in &c.centers {
            for a in 0..spec.dim {
                prop_assert!((0.0..spec.side).contains(&p[a]));
            }
        }
        prop_assert_eq!(generate(&spec).unwrap(), c);
    }

    #[test]
    fn configurations_round_trip_through_json(spec in spec_strategy()) {
        let c = generated(&spec)?;
        let back = ParticleConfig::from_json(&c.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn minimum_image_is_antisymmetric_and_short(
        side in 4.0..32.0f64,
        a in prop::array::uniform3(0.0..1.0f64),
        b in prop::array::uniform3(0.0..1.0f64),
    ) {
        let a = a.map(|v| v * side);
        let b = b.map(|v| v * side);
        let ab = periodic_displacement(3, side, &a, &b);
        let ba = periodic_displacement(3, side, &b, &a);
        for k in 0..3 {
            prop_assert!(ab[k].abs() <= 0.5 * side + 1e-12);
            prop_assert!((ab[k] + ba[k]).abs() < 1e-12 || (ab[k].abs() - 0.5 * side).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_fraction_is_a_reflection_invariant_fraction(
        c in prop::array::uniform3(-1.5..1.5f64),
        w in 0.01..0.5f64,
    ) {
        let f = overlap_fraction(3, c, w);
        prop_assert!((0.0..=1.0).contains(&f));
        let g = overlap_fraction(3, [-c[0], c[1], -c[2]], w);
        prop_assert!((f - g).abs() < 1e-12);
        let h = overlap_fraction(3, [c[1], c[2], c[0]], w);
        prop_assert!((f - h).abs() < 1e-12);
    }

    #[test]
    fn first_order_term_is_symmetric_and_linear_in_intensity(lambda in 0.0..0.05f64, d in 2usize..=3) {
        let t = renormalized_b1(lambda, d).unwrap();
        let unit = renormalized_b1(1.0, d).unwrap();
        for i in 0..t.len() {
            for j in 0..t.len() {
                prop_assert!((t[i][j] - t[j][i]).abs() <= 1e-12 * (1.0 + unit[i][i].abs()));
                prop_assert!((t[i][j] - lambda * unit[i][j]).abs() <= 1e-12 * (1.0 + unit[i][j].abs()));
            }
        }
    }

    #[test]
    fn far_kernel_is_even_and_scales_like_r_to_minus_d(
        dir in prop::array::uniform3(-1.0..1.0f64),
        r in 16.0..32.0f64,
        e in strain_strategy(3),
    ) {
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        prop_assume!(n > 0.1);
        let y = dir.map(|v| v * r / n);
        let k = bg_far_kernel(3, &y, &e).unwrap();
        let minus = bg_far_kernel(3, &y.map(|v| -v), &e).unwrap();
        prop_assert!((k - minus).abs() <= 1e-10 * (1.0 + k.abs()));
        let far = bg_far_kernel(3, &y.map(|v| 8.0 * v), &e).unwrap();
        // leading r^-3 profile plus O(r^-5) corrections
        prop_assert!((far * 512.0 - k).abs() <= 0.05 * k.abs() + 100.0 * r.powi(-5), "{k} vs {}", far * 512.0);
    }

    #[test]
    fn einstein_fit_recovers_exact_affine_data(
        intercept in 0.5..1.5f64,
        slope in 0.5..5.0f64,
        phis in prop::collection::btree_set(1u32..200, 3..6),
    ) {
        let basis = StrainBasis::canonical(2).unwrap();
        let tensors: Vec<ViscosityTensor> = phis
            .iter()
            .map(|&k| {
                let phi = k as f64 * 1e-4;
                let v = intercept + slope * phi;
                ViscosityTensor {
                    basis: basis.clone(),
                    b: vec![vec![v, 0.0], vec![0.0, v]],
                    stderr: vec![vec![1e-4; 2]; 2],
                    samples: 4,
                    skipped: 0,
                    phi_realized: phi,
                    phi_stderr: 0.0,
                    meta: TensorMeta {
                        dim: 2,
                        side: 16.0,
                        n: 64,
                        theta: 1e3,
                        phi,
                        process: ProcessKind::RandomSequentialAddition,
                        gap: 0.5,
                        seed: 1,
                        n_configs: 4,
                    },
                }
            })
            .collect();
        let fit = einstein_fit(&tensors).unwrap();
        prop_assert!((fit.isotropic_slope - slope).abs() < 1e-8 * slope, "{} vs {slope}", fit.isotropic_slope);
        prop_assert!((fit.isotropic_intercept - intercept).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cluster_terms_telescope_and_ignore_labels(
        seed in any::<u64>(),
        perm in prop_oneof![Just([0usize, 1, 2]), Just([2, 0, 1]), Just([1, 2, 0]), Just([2, 1, 0])],
    ) {
        let spec = EnsembleSpec::new(2, 8.0, ProcessKind::RandomSequentialAddition, 0.15, 0.3, seed);
        let c = generate(&spec).unwrap();
        prop_assume!(c.len() >= 3);
        let sub = c.subset(0b111);
        let permuted = ParticleConfig::new(2, 8.0, sub.gap, 0, perm.iter().map(|&k| sub.centers[k]).collect());
        let e = StrainBasis::canonical(2).unwrap().elements[0];
        let sc = SolverConfig::new(32, 1e2).with_tol(1e-10);
        let a = cluster_terms(&sub, &e, &sc, false).unwrap();
        let b = cluster_terms(&permuted, &e, &sc, false).unwrap();
        prop_assert!(a.telescoping_residual <= 1e-10);
        let full = a.energy(0b111);
        prop_assert!((a.delta(0b111) - b.delta(0b111)).abs() <= 1e-8 * full);
        prop_assert!((full - b.energy(0b111)).abs() <= 1e-8 * full);
        // the pair term of the first two labels matches the relabelled pair
        let pos = |k: usize| perm.iter().position(|&p| p == k).unwrap();
        let mask = (1u64 << pos(0)) | (1u64 << pos(1));
        prop_assert!((a.delta(0b011) - b.delta(mask)).abs() <= 1e-8 * full);
    }
}

//! Property tests over the metric and fitting invariants.

use oxymap_core::chromophore::{sto2, ChromophoreBasis, ConcentrationMap, HBO2, HHB};
use oxymap_core::raster::{apply_mask, nmae, ImagePlane, Mask, StO2Map};
use proptest::prelude::*;

fn sto2_plane(values: Vec<f64>, w: usize, h: usize) -> StO2Map {
    StO2Map::new(ImagePlane::new(w, h, 0.5, values).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nmae_is_non_negative_and_zero_on_identity(
        values in prop::collection::vec(0.01f64..1.0, 36),
        bits in prop::collection::vec(any::<bool>(), 36),
    ) {
        let map = sto2_plane(values, 6, 6);
        let mask = Mask::new(6, 6, bits).unwrap();
        if mask.count_true() > 0 {
            let v = nmae(&map, &map, &mask).unwrap();
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn nmae_invariant_under_joint_scaling(
        pred in prop::collection::vec(0.01f64..0.9, 25),
        gt in prop::collection::vec(0.01f64..0.9, 25),
        scale in 0.05f64..1.0,
    ) {
        // Joint positive scaling of both maps cancels in the ratio.
        let mask = Mask::all_true(5, 5);
        let base = nmae(
            &sto2_plane(pred.clone(), 5, 5),
            &sto2_plane(gt.clone(), 5, 5),
            &mask,
        )
        .unwrap();
        let scaled = nmae(
            &sto2_plane(pred.iter().map(|v| v * scale).collect(), 5, 5),
            &sto2_plane(gt.iter().map(|v| v * scale).collect(), 5, 5),
            &mask,
        )
        .unwrap();
        prop_assert!((base - scaled).abs() < 1e-10);
    }

    #[test]
    fn nmae_matches_bruteforce_over_masks(
        pred in prop::collection::vec(0.01f64..1.0, 64),
        gt in prop::collection::vec(0.01f64..1.0, 64),
        bits in prop::collection::vec(any::<bool>(), 64),
    ) {
        let mask = Mask::new(8, 8, bits).unwrap();
        let p = sto2_plane(pred.clone(), 8, 8);
        let g = sto2_plane(gt.clone(), 8, 8);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut n = 0;
        for i in 0..64 {
            if mask.bits()[i] {
                num += (pred[i] - gt[i]).abs();
                den += gt[i];
                n += 1;
            }
        }
        if n == 0 {
            prop_assert!(nmae(&p, &g, &mask).is_err());
        } else {
            let got = nmae(&p, &g, &mask).unwrap();
            prop_assert!((got - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_pixels_never_count(
        values in prop::collection::vec(0.01f64..1.0, 36),
        bits in prop::collection::vec(any::<bool>(), 36),
    ) {
        let plane = ImagePlane::new(6, 6, 0.5, values).unwrap();
        let mask = Mask::new(6, 6, bits).unwrap();
        let masked = apply_mask(&plane, &mask).unwrap();
        prop_assert_eq!(masked.valid_count(), mask.count_true());
    }

    #[test]
    fn sto2_scale_invariance(
        hbo2 in prop::collection::vec(0.001f64..0.2, 16),
        hhb in prop::collection::vec(0.001f64..0.2, 16),
        k in 0.01f64..50.0,
    ) {
        // Saturation is a ratio: scaling all concentrations by k > 0
        // leaves it unchanged.
        let mk = |o: &[f64], h: &[f64]| {
            ConcentrationMap::new(
                vec![HBO2.into(), HHB.into()],
                vec![
                    ImagePlane::new(4, 4, 0.5, o.to_vec()).unwrap(),
                    ImagePlane::new(4, 4, 0.5, h.to_vec()).unwrap(),
                ],
            )
            .unwrap()
        };
        let a = sto2(&mk(&hbo2, &hhb)).unwrap();
        let scaled_o: Vec<f64> = hbo2.iter().map(|v| v * k).collect();
        let scaled_h: Vec<f64> = hhb.iter().map(|v| v * k).collect();
        let b = sto2(&mk(&scaled_o, &scaled_h)).unwrap();
        for (x, y) in a.plane().data().iter().zip(b.plane().data()) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(x));
        }
    }

    #[test]
    fn nnls_fit_beats_any_feasible_truth(
        c_true in prop::collection::vec(0.0f64..0.3, 2),
        perturb in prop::collection::vec(-0.02f64..0.02, 4),
    ) {
        // Fit-then-synthesize optimality: the fitted residual never
        // exceeds the residual of the (feasible) generating vector.
        let basis = ChromophoreBasis::builtin_hemoglobin();
        let w = basis.num_wavelengths();
        let rhs: Vec<f64> = basis
            .wavelengths_nm()
            .iter()
            .zip(&perturb)
            .map(|(&wl, &p)| {
                (basis.synthesize_mua(wl, &c_true).unwrap() + p).max(0.0)
            })
            .collect();
        let mut matrix = vec![0.0; w * 2];
        for (i, &wl) in basis.wavelengths_nm().iter().enumerate() {
            matrix[i * 2..(i + 1) * 2].copy_from_slice(basis.epsilon_at(wl).unwrap());
        }
        let fit = oxymap_core::chromophore::nnls(&matrix, w, 2, &rhs).unwrap();
        let residual = |c: &[f64]| -> f64 {
            (0..w)
                .map(|r| {
                    let pred: f64 = (0..2).map(|j| matrix[r * 2 + j] * c[j]).sum();
                    (pred - rhs[r]).powi(2)
                })
                .sum()
        };
        prop_assert!(residual(&fit) <= residual(&c_true) + 1e-12);
    }
}

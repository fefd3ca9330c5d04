use pcarpet_core::homogeneity::{FitSource, ScalingFit};
use pcarpet_core::penergy::{level_energy, solve_dirichlet};
use pcarpet_core::*;
use proptest::prelude::*;

fn carpet() -> Partition {
    Partition::builtin("sierpinski-carpet").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn word_index_round_trip(level in 0usize..7, seed in any::<u64>()) {
        let part = carpet();
        let idx = (seed as usize) % part.level_size(level).unwrap();
        let w = part.word(level, idx);
        prop_assert_eq!(part.index(&w).unwrap(), idx);
        for d in 0..=level {
            let up = part.project(&CellSet::new(level, [idx]), d);
            prop_assert_eq!(up.indices(), &[idx / 8usize.pow(d as u32)][..]);
            prop_assert_eq!(part.index(&w.ancestor(d)).unwrap(), idx / 8usize.pow(d as u32));
        }
    }

    #[test]
    fn refine_then_project_is_identity(level in 1usize..4, m in 0usize..3, cells in prop::collection::vec(any::<u16>(), 1..10)) {
        let part = carpet();
        let size = part.level_size(level).unwrap();
        let a = CellSet::new(level, cells.iter().map(|&c| c as usize % size));
        let fine = part.refine(&a, m);
        prop_assert_eq!(fine.len(), a.len() * 8usize.pow(m as u32));
        prop_assert_eq!(part.project(&fine, m), a);
    }

    #[test]
    fn adjacency_is_symmetric_and_gamma_grows(name in prop::sample::select(vec!["interval2", "square2", "square3", "sierpinski-carpet"]), level in 1usize..4, seed in any::<u64>()) {
        let part = Partition::builtin(name).unwrap();
        let size = part.level_size(level).unwrap();
        let u = (seed as usize) % size;
        for v in part.neighbors(level, u) {
            prop_assert!(part.neighbors(level, v).contains(&u));
        }
        let w = part.word(level, u);
        let mut prev = part.gamma(0, &w).unwrap();
        prop_assert_eq!(prev.len(), 1);
        for m in 1..4 {
            let next = part.gamma(m, &w).unwrap();
            prop_assert!(prev.is_subset(&next));
            prev = next;
        }
    }

    #[test]
    fn energy_is_homogeneous_and_shift_invariant(values in prop::collection::vec(-1.0f64..1.0, 64), c in -3.0f64..3.0, b in -5.0f64..5.0, p in 1.1f64..4.0) {
        let part = Partition::builtin("square2").unwrap();
        let f = CellFunction::new(3, values);
        let e = level_energy(&part, &f, p);
        prop_assert!(e >= 0.0);
        let g = CellFunction::new(3, f.values.iter().map(|x| c * x + b).collect());
        let expected = c.abs().powf(p) * e;
        prop_assert!((level_energy(&part, &g, p) - expected).abs() <= 1e-10 * expected.max(1.0));
        prop_assert_eq!(level_energy(&part, &CellFunction::constant(3, 64, b), p), 0.0);
    }

    #[test]
    fn projections_compose_and_keep_the_integral(values in prop::collection::vec(-1.0f64..1.0, 512), w0 in 0.05f64..1.0) {
        let mut weights = vec![w0; 8];
        weights[3] = 2.0;
        let total: f64 = weights.iter().sum();
        let mu = SelfSimilarMeasure::new(weights.iter().map(|w| w / total).collect()).unwrap();
        let f = CellFunction::new(3, values);
        let direct = mu.project(&f, 1).unwrap();
        let staged = mu.project(&mu.project(&f, 2).unwrap(), 1).unwrap();
        for (x, y) in direct.values.iter().zip(&staged.values) {
            prop_assert!((x - y).abs() < 1e-14);
        }
        let integral: f64 = (0..512).map(|i| mu.mass_of(3, i) * f.values[i]).sum();
        prop_assert!((mu.project(&f, 0).unwrap().values[0] - integral).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_minimiser_obeys_the_maximum_principle(
        fixed in prop::collection::btree_map(0usize..64, 0.0f64..1.0, 2..6),
        p in 1.3f64..3.5,
        bump in prop::collection::vec(-0.1f64..0.1, 64),
    ) {
        let part = Partition::builtin("square2").unwrap();
        let lg = part.level_graph(3).unwrap();
        let prob = DirichletProblem::from_map(lg.graph(), &fixed, p).unwrap();
        let r = solve_dirichlet(&prob, &SolverOptions::default()).unwrap();
        let lo = fixed.values().copied().fold(f64::INFINITY, f64::min);
        let hi = fixed.values().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r.minimizer.iter().all(|&x| x >= lo - 1e-9 && x <= hi + 1e-9));
        let perturbed: Vec<f64> = r
            .minimizer
            .iter()
            .zip(&bump)
            .enumerate()
            .map(|(v, (x, d))| if fixed.contains_key(&v) { *x } else { x + d })
            .collect();
        let e = level_energy(&part, &CellFunction::new(3, perturbed), p);
        prop_assert!(r.value <= e * (1.0 + 1e-9));
    }

    #[test]
    fn geometric_samples_fit_exactly(sigma in 0.2f64..5.0, c in 0.1f64..10.0, m0 in 1usize..4) {
        let conductances: Vec<(usize, f64)> = (m0..m0 + 4).map(|m| (m, c * sigma.powi(-(m as i32)))).collect();
        let fit = ScalingFit::new(2.0, FitSource::Conductance, conductances).unwrap();
        prop_assert!((fit.sigma_hat / sigma - 1.0).abs() < 1e-9);
        prop_assert!(fit.residual < 1e-9);
        let disparities: Vec<(usize, f64)> = (m0..m0 + 4).map(|m| (m, c * sigma.powi(m as i32))).collect();
        let fit = ScalingFit::new(2.0, FitSource::Disparity, disparities).unwrap();
        prop_assert!((fit.sigma_hat / sigma - 1.0).abs() < 1e-9);
    }
}

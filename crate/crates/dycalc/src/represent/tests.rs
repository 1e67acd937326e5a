use super::*;
use crate::lattice::default_gamma;
use crate::spaces::Varpi;

fn scalars(n: usize) -> Vec<SpaceDescriptor> {
    vec![SpaceDescriptor::Scalar; n]
}

fn s2() -> SpaceDescriptor {
    SpaceDescriptor::Schatten { p: 2.0, n: 2 }
}

fn line(l_min: i32, l_max: i32, roots: u32) -> Arc<Grid> {
    Arc::new(Grid::standard(1, l_min, l_max, roots).unwrap())
}

fn random_form(grid: &Arc<Grid>, seed: u64) -> SioForm {
    let k = KernelDescriptor::random(scalars(2), SpaceDescriptor::Scalar, 3, seed).build().unwrap();
    SioForm::new(k, grid.clone(), 1).unwrap()
}

fn random_tuple(t: &SioForm, seed: u64) -> Vec<GridFunction> {
    let mut rng = crate::rng(seed);
    t.in_spaces()
        .iter()
        .cloned()
        .chain([t.out_space().clone()])
        .map(|s| GridFunction::random(t.grid().clone(), s, &mut rng))
        .collect()
}

fn refs(f: &[GridFunction]) -> Vec<&GridFunction> {
    f.iter().collect()
}

fn separable(factors: Vec<Vec<f64>>) -> Arc<dyn Kernel> {
    KernelDescriptor {
        in_spaces: scalars(factors.len() - 1),
        out_space: SpaceDescriptor::Scalar,
        alpha: 1.0,
        profile: KernelProfile::Separable {
            factors: factors.clone(),
            coefficient: MultilinearOp::scalar(1.0, factors.len() - 1),
        },
    }
    .build()
    .unwrap()
}

#[test]
fn zero_kernel_gives_zero_form() {
    let grid = line(-3, 0, 1);
    let k = KernelDescriptor::zero(scalars(2), SpaceDescriptor::Scalar).build().unwrap();
    let t = SioForm::new(k, grid, 1).unwrap();
    let f = random_tuple(&t, 1);
    assert_eq!(direct_form(&t, &refs(&f)).unwrap(), 0.0);
    let dec = decompose(&t, 0.25, 2).unwrap();
    assert!(dec.shifts.is_empty());
    assert!(dec.paraproducts.iter().all(|p| p.coeffs().is_empty()));
    let v = dec.evaluate(&refs(&f)).unwrap();
    assert_eq!(v.total, 0.0);
    assert_eq!(reconstruction_residual(&t, &dec, &refs(&f)).unwrap().abs, 0.0);
}

#[test]
fn separable_kernel_matches_brute_force() {
    let grid = line(-3, 0, 1);
    let factors = vec![vec![0.5, 2.0], vec![1.0, -1.0], vec![-0.25, 3.0]];
    let t = SioForm::new(separable(factors.clone()), grid.clone(), 1).unwrap();
    let f = random_tuple(&t, 7);
    let nc = grid.num_cells();
    let h = grid.cell_measure();
    let c: Vec<f64> = (0..nc).map(|i| grid.cell_center(i)[0]).collect();
    let phi = |k: usize, z: f64| factors[k][0] + factors[k][1] * z;
    let mut brute = 0.0;
    for x in 0..nc {
        for y1 in 0..nc {
            for y2 in 0..nc {
                if x == y1 && y1 == y2 {
                    continue;
                }
                brute += phi(0, c[x]) * phi(1, c[y1]) * phi(2, c[y2]) * f[0].data()[y1] * f[1].data()[y2] * f[2].data()[x];
            }
        }
    }
    brute *= h * h * h;
    // Product of single integrals minus the diagonal cells.
    let single = |k: usize, g: &GridFunction| (0..nc).map(|i| phi(k, c[i]) * g.data()[i]).sum::<f64>() * h;
    let diag: f64 = (0..nc)
        .map(|i| phi(0, c[i]) * phi(1, c[i]) * phi(2, c[i]) * f[0].data()[i] * f[1].data()[i] * f[2].data()[i])
        .sum::<f64>()
        * h
        * h
        * h;
    let product = single(0, &f[2]) * single(1, &f[0]) * single(2, &f[1]) - diag;
    let direct = direct_form(&t, &refs(&f)).unwrap();
    assert!((direct - brute).abs() <= 1e-12 * brute.abs().max(1.0));
    assert!((direct - product).abs() <= 1e-12 * product.abs().max(1.0));
}

#[test]
fn refinement_one_samples_cell_centers() {
    let grid = line(-2, 0, 1);
    let pts = sub_points(&grid, 1);
    for (i, p) in pts.iter().enumerate() {
        assert_eq!(p[0], grid.cell_center(i));
    }
    assert_eq!(sub_points(&grid, 3)[0].len(), 3);
}

#[test]
fn adjoint_is_an_involution() {
    let grid = line(-3, 0, 1);
    let t = random_form(&grid, 3);
    for m in 1..=2 {
        let back = t.adjoint(m).unwrap().adjoint(m).unwrap();
        assert_eq!(back.data, t.data);
        let x = [0.1];
        let y1 = [0.7];
        let y2 = [0.35];
        let a = t.kernel().eval(&x, &[&y1, &y2]);
        let b = back.kernel().eval(&x, &[&y1, &y2]);
        assert!(a.max_abs_diff(&b) <= 1e-14);
    }
}

#[test]
fn adjoint_pairing_identity() {
    let grid = line(-3, 0, 1);
    for seed in 0..4 {
        let t = random_form(&grid, 10 + seed);
        let f = random_tuple(&t, 100 + seed);
        let direct = direct_form(&t, &refs(&f)).unwrap();
        for m in 1..=2 {
            let a = t.adjoint(m).unwrap();
            let mut g = refs(&f);
            g.swap(m - 1, 2);
            let v = direct_form(&a, &g).unwrap();
            assert!((v - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{v} vs {direct}");
        }
    }
}

#[test]
fn adjoint_with_matrix_values() {
    let grid = line(-2, 0, 1);
    let k = KernelDescriptor::random(vec![s2(), SpaceDescriptor::Lp { p: 3.0, dim: 3 }], s2(), 2, 5)
        .build()
        .unwrap();
    let t = SioForm::new(k, grid, 1).unwrap();
    let f = random_tuple(&t, 9);
    let direct = direct_form(&t, &refs(&f)).unwrap();
    let a = t.adjoint(2).unwrap();
    assert_eq!(a.in_spaces()[1].dim(), 4);
    assert_eq!(a.out_space().dim(), 3);
    let mut g = refs(&f);
    g.swap(1, 2);
    assert!((direct_form(&a, &g).unwrap() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
}

#[test]
fn symmetric_linear_kernel_is_self_adjoint() {
    let grid = line(-3, 0, 1);
    let k = KernelDescriptor {
        in_spaces: scalars(1),
        out_space: SpaceDescriptor::Scalar,
        alpha: 1.0,
        profile: KernelProfile::Power {
            coefficient: MultilinearOp::scalar(2.0, 1),
        },
    }
    .build()
    .unwrap();
    let t = SioForm::new(k, grid, 1).unwrap();
    assert_eq!(t.adjoint(1).unwrap().data, t.data);
}

#[test]
fn adjoint_index_is_checked() {
    let grid = line(-2, 0, 1);
    let t = random_form(&grid, 1);
    assert!(t.adjoint(0).is_err());
    assert!(t.adjoint(3).is_err());
}

#[test]
fn haar_pairing_of_separable_kernel_factorizes() {
    let grid = line(-3, 0, 1);
    let factors = vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![2.0, 1.0]];
    let t = SioForm::new(separable(factors.clone()), grid.clone(), 1).unwrap();
    let q = HaarIndex::new(Cube { level: -2, corner: vec![0] }, 1);
    let r = [
        HaarIndex::new(Cube { level: -1, corner: vec![4] }, 1),
        HaarIndex::new(Cube { level: -2, corner: vec![6] }, 0),
    ];
    let h = grid.cell_measure();
    let one_d = |k: usize, idx: &HaarIndex| -> f64 {
        grid.cells_of(&idx.cube)
            .iter()
            .map(|&c| (factors[k][0] + factors[k][1] * grid.cell_center(c)[0]) * haar_value(&grid, idx, c))
            .sum::<f64>()
            * h
    };
    let expected = one_d(0, &q) * one_d(1, &r[0]) * one_d(2, &r[1]);
    let got = haar_pairing(&t, &r, &q).unwrap().data()[0];
    assert!((got - expected).abs() <= 1e-13);
}

#[test]
fn haar_pairing_vanishes_for_kernels_constant_in_x() {
    let grid = line(-3, 0, 1);
    let t = SioForm::new(separable(vec![vec![1.5], vec![1.0, 2.0], vec![0.0, 1.0]]), grid, 1).unwrap();
    let q = HaarIndex::new(Cube { level: -2, corner: vec![0] }, 1);
    let r = [
        HaarIndex::new(Cube { level: -1, corner: vec![4] }, 1),
        HaarIndex::new(Cube { level: -2, corner: vec![4] }, 0),
    ];
    assert!(haar_pairing(&t, &r, &q).unwrap().data()[0].abs() <= 1e-15);
    let zero = KernelDescriptor::zero(scalars(2), SpaceDescriptor::Scalar).build().unwrap();
    let t0 = SioForm::new(zero, t.grid().clone(), 1).unwrap();
    assert!(haar_pairing(&t0, &r, &q).unwrap().is_zero());
}

#[test]
fn t1_pairing_does_not_depend_on_the_dilation() {
    let grid = line(-3, 0, 1);
    let t = random_form(&grid, 21);
    let mut rng = crate::rng(4);
    let phi: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let g = GridFunction::random(grid.clone(), SpaceDescriptor::Scalar, &mut rng);
            g.into_data()
        })
        .collect();
    let prefs: Vec<&[f64]> = phi.iter().map(Vec::as_slice).collect();
    let ones = vec![1.0; grid.num_cells()];
    for idx in crate::haar::cancellative_indices(&grid) {
        let h = haar_array(&grid, &idx);
        for p in [prefs.clone(), vec![ones.as_slice(); 2]] {
            let a = t1_pairing(&t, &p, &h, &idx.cube, 2.0).unwrap();
            let b = t1_pairing(&t, &p, &h, &idx.cube, 4.0).unwrap();
            let direct = t.contract(&[p[0], p[1], h.as_slice()]).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-10);
            assert!(a.max_abs_diff(&direct) <= 1e-10);
        }
    }
}

#[test]
fn t1_pairing_checks_its_arguments() {
    let grid = line(-2, 0, 1);
    let t = random_form(&grid, 1);
    let ones = vec![1.0; grid.num_cells()];
    let q = Cube { level: -1, corner: vec![0] };
    let h = haar_array(&grid, &HaarIndex::new(q.clone(), 1));
    assert!(t1_pairing(&t, &[&ones, &ones], &h, &q, 1.5).is_err());
    let bump = indicator_array(&grid, &q);
    assert!(t1_pairing(&t, &[&ones, &ones], &bump, &q, 2.0).is_err());
}

#[test]
fn t1_vanishes_for_constant_kernels() {
    let grid = line(-3, 0, 1);
    let t = SioForm::new(separable(vec![vec![2.0], vec![1.0], vec![-1.0]]), grid, 1).unwrap();
    for op in full_t1_sequence(&t).unwrap().values() {
        assert!(op.data()[0].abs() <= 1e-15);
    }
}

#[test]
fn classification_examples() {
    let grid = Grid::standard(1, -4, 10, 1).unwrap();
    let unit = |l: i32| grid.unit(l);
    let q = Cube { level: -2, corner: vec![unit(-2)] };
    let r = [Cube { level: 0, corner: vec![0] }, Cube { level: 0, corner: vec![0] }];
    assert_eq!(classify_pair(&grid, &q, &r, 0.5).unwrap(), PairClass::Inside);
    let r = [Cube { level: 0, corner: vec![0] }, Cube { level: -1, corner: vec![unit(-1)] }];
    assert_eq!(classify_pair(&grid, &q, &r, 0.5).unwrap(), PairClass::Nearby);
    let q = Cube { level: -1, corner: vec![0] };
    let r = [q.clone(), Cube { level: -2, corner: vec![unit(-2)] }];
    assert_eq!(classify_pair(&grid, &q, &r, 0.5).unwrap(), PairClass::Diagonal);
    let q = Cube { level: -4, corner: vec![1 << 10] };
    let r = [Cube { level: 0, corner: vec![0] }, Cube { level: -1, corner: vec![0] }];
    assert_eq!(classify_pair(&grid, &q, &r, 0.5).unwrap(), PairClass::Separated);
    let big = Cube { level: 0, corner: vec![0] };
    assert!(classify_pair(&grid, &big, std::slice::from_ref(&q), 0.5).is_err());
}

#[test]
fn classification_partitions_the_pairs() {
    // Inside exactly when every factor contains Q; separated exactly above the threshold.
    let grid = line(-3, 0, 1);
    let gamma = default_gamma(1, 2, 1.0);
    for q in grid.parent_cubes() {
        for level in q.level..=0 {
            for q1 in grid.cubes_at(level) {
                for q2 in grid.cubes_at(level - 1) {
                    let r = [q1.clone(), q2.clone()];
                    let class = classify_pair(&grid, &q, &r, gamma).unwrap();
                    let contains = r.iter().all(|c| grid.is_subcube(&q, c));
                    let thr = grid.side(q.level).powf(gamma) * (grid.side(level) / 2.0).powf(1.0 - gamma);
                    let dist = r.iter().map(|c| grid.distance(&q, c)).fold(0.0, f64::max);
                    match class {
                        PairClass::Separated => assert!(dist > thr),
                        PairClass::Nearby => assert!(dist <= thr && !contains),
                        PairClass::Inside => assert!(contains && level > q.level),
                        PairClass::Diagonal => assert!(level == q.level && q1 == q && grid.is_subcube(&q2, &q)),
                    }
                }
            }
        }
    }
}

fn assert_reconstructs(t: &SioForm, tuples: u64) {
    let dec = decompose(t, default_gamma(1, 2, 1.0), 2).unwrap();
    for s in &dec.shifts {
        for key in s.shift.coeffs().keys() {
            s.shift.check_key(key).unwrap();
        }
    }
    for seed in 0..tuples {
        let f = random_tuple(t, 1000 + seed);
        let res = reconstruction_residual(t, &dec, &refs(&f)).unwrap();
        assert!(res.rel <= 1e-8, "residual {res:?}");
    }
}

#[test]
fn decomposition_reconstructs_scalar_forms() {
    let grid = line(-3, 0, 1);
    for seed in 0..2 {
        assert_reconstructs(&random_form(&grid, 40 + seed), 3);
    }
}

#[test]
fn decomposition_reconstructs_matrix_forms() {
    let grid = line(-3, 0, 1);
    let k = KernelDescriptor::random(vec![s2(), s2()], s2(), 2, 77).build().unwrap();
    assert_reconstructs(&SioForm::new(k, grid, 1).unwrap(), 2);
}

#[test]
fn decomposition_with_refined_quadrature_and_one_input() {
    let grid = line(-3, 0, 1);
    let k = KernelDescriptor::random(scalars(1), SpaceDescriptor::Scalar, 2, 8).build().unwrap();
    let t = SioForm::new(k, grid, 2).unwrap();
    let dec = decompose(&t, 0.25, 1).unwrap();
    let f = random_tuple(&t, 5);
    assert!(reconstruction_residual(&t, &dec, &refs(&f)).unwrap().rel <= 1e-8);
}

#[test]
fn decomposition_in_two_dimensions() {
    let grid = Arc::new(Grid::standard(2, -2, 0, 1).unwrap());
    let k = KernelDescriptor::random(scalars(1), SpaceDescriptor::Scalar, 2, 31).build().unwrap();
    let t = SioForm::new(k, grid, 1).unwrap();
    let dec = decompose(&t, default_gamma(2, 1, 1.0), 1).unwrap();
    let f = random_tuple(&t, 6);
    assert!(reconstruction_residual(&t, &dec, &refs(&f)).unwrap().rel <= 1e-8);
}

#[test]
fn decomposition_reports_all_origins() {
    let grid = line(-3, 0, 1);
    let t = random_form(&grid, 2);
    let dec = decompose(&t, default_gamma(1, 2, 1.0), 2).unwrap();
    let f = random_tuple(&t, 3);
    let v = dec.evaluate(&refs(&f)).unwrap();
    for key in ["separated", "nearby", "error", "diagonal_1", "diagonal_2"] {
        assert!(v.by_origin.contains_key(key), "missing {key}");
    }
    assert_eq!(dec.paraproducts.len(), 3);
    for s in &dec.shifts {
        let kmax = *s.shift.complexity().iter().max().unwrap();
        assert_eq!(s.weight, (-(kmax as f64) / 2.0).exp2());
    }
    assert!(dec.max_normalized_far() > 0.0);
}

#[test]
fn constant_kernel_has_no_paraproduct() {
    let grid = line(-3, 0, 1);
    let t = SioForm::new(separable(vec![vec![1.0], vec![2.0], vec![0.5]]), grid, 1).unwrap();
    let dec = decompose(&t, 0.25, 2).unwrap();
    let f = random_tuple(&t, 8);
    let v = dec.evaluate(&refs(&f)).unwrap();
    assert_eq!(v.paraproduct, 0.0);
    assert!(reconstruction_residual(&t, &dec, &refs(&f)).unwrap().rel <= 1e-8);
}

#[test]
fn decomposition_arguments_are_checked() {
    let t = random_form(&line(-3, 0, 1), 1);
    assert!(decompose(&t, 0.25, 0).is_err());
    assert!(decompose(&t, 0.25, 4).is_err());
    assert!(decompose(&t, 0.0, 2).is_err());
    let two_roots = random_form(&line(-2, 0, 2), 1);
    assert!(decompose(&two_roots, 0.25, 1).is_err());
}

#[test]
fn inside_pairs_split_into_t1_and_errors() {
    let grid = line(-3, 0, 1);
    let t = random_form(&grid, 12);
    let (dev, scale) = step_three_check(&t).unwrap();
    assert!(scale > 0.0);
    assert!(dev <= 1e-10 * scale.max(1.0), "{dev}");
    let a = t.adjoint(1).unwrap();
    let (dev, scale) = step_three_check(&a).unwrap();
    assert!(dev <= 1e-10 * scale.max(1.0));
}

#[test]
fn paraproduct_telescoping() {
    let grid = line(-3, 0, 1);
    let t = random_form(&grid, 13);
    let f = random_tuple(&t, 14);
    let c = step_four_check(&t, &refs(&f)).unwrap();
    assert!(c.deviation <= 1e-10 * c.paraproduct.abs().max(1.0), "{c:?}");
    assert!(c.truncation != 0.0);
}

fn window_tuple(grid: &Arc<Grid>, seed: u64, n: usize) -> Vec<GridFunction> {
    let lo = (1i64 << grid.window().depth()) - 1;
    let mut rng = crate::rng(seed);
    (0..=n)
        .map(|_| {
            let mut g = GridFunction::random(grid.clone(), SpaceDescriptor::Scalar, &mut rng);
            for c in 0..grid.num_cells() {
                if grid.cell_corner(c)[0] < lo {
                    g.data_mut()[c] = 0.0;
                }
            }
            g
        })
        .collect()
}

#[test]
fn omega_average_on_three_scales() {
    let grid = line(-2, 0, 2);
    let k = KernelDescriptor::random(scalars(2), SpaceDescriptor::Scalar, 3, 50).build().unwrap();
    let f = window_tuple(&grid, 51, 2);
    let avg = average_over_omega(k.clone(), &refs(&f), default_gamma(1, 2, 1.0), 2, OmegaMode::Enumerate, 0, 1).unwrap();
    assert_eq!(avg.samples, 4);
    assert!(avg.exact);
    assert!(avg.residual <= 1e-8, "{avg:?}");
    assert!(avg.all_cubes_residual <= 1e-10 * avg.direct.abs().max(1.0));
    // With r = 1 no cube at level -1 is ever good.
    assert!(average_over_omega(k, &refs(&f), default_gamma(1, 2, 1.0), 1, OmegaMode::Enumerate, 0, 1).is_err());
}

#[test]
fn omega_average_with_partial_goodness() {
    let grid = line(-4, 0, 2);
    let k = KernelDescriptor::random(scalars(1), SpaceDescriptor::Scalar, 3, 54).build().unwrap();
    let f = window_tuple(&grid, 55, 1);
    let avg = average_over_omega(k, &refs(&f), 0.49, 3, OmegaMode::Enumerate, 0, 1).unwrap();
    assert_eq!(avg.samples, 16);
    assert!(avg.p_good.iter().any(|(_, p)| *p > 0.0 && *p < 1.0), "{avg:?}");
    assert!(avg.residual <= 1e-8, "{avg:?}");
}

#[test]
fn omega_average_on_a_single_scale() {
    let grid = line(0, 0, 2);
    let k = KernelDescriptor::random(scalars(2), SpaceDescriptor::Scalar, 2, 52).build().unwrap();
    let f = window_tuple(&grid, 53, 2);
    let avg = average_over_omega(k, &refs(&f), 0.2, 1, OmegaMode::Enumerate, 0, 1).unwrap();
    assert!(avg.p_good.is_empty());
    assert!(avg.residual <= 1e-12);
}

#[test]
fn omega_average_checks_inputs() {
    let grid = line(-2, 0, 2);
    let k = KernelDescriptor::random(scalars(2), SpaceDescriptor::Scalar, 2, 52).build().unwrap();
    let mut rng = crate::rng(1);
    let wide: Vec<GridFunction> = (0..3)
        .map(|_| GridFunction::random(grid.clone(), SpaceDescriptor::Scalar, &mut rng))
        .collect();
    assert!(average_over_omega(k.clone(), &refs(&wide), 0.2, 1, OmegaMode::Enumerate, 0, 1).is_err());
    let deep = line(-13, 0, 2);
    let f: Vec<GridFunction> = (0..3)
        .map(|_| GridFunction::zeros(deep.clone(), SpaceDescriptor::Scalar))
        .collect();
    assert!(matches!(
        average_over_omega(k.clone(), &refs(&f), 0.2, 1, OmegaMode::Enumerate, 0, 1),
        Err(Error::BudgetExceeded(_))
    ));
    let zero = KernelDescriptor::zero(scalars(2), SpaceDescriptor::Scalar).build().unwrap();
    let f = window_tuple(&grid, 3, 2);
    let mc = average_over_omega(zero, &refs(&f), 0.2, 1, OmegaMode::MonteCarlo { samples: 3 }, 9, 1).unwrap();
    assert_eq!(mc.good_average, 0.0);
    assert!(!mc.exact);
}

#[test]
fn testing_constants_of_simple_kernels() {
    let grid = line(-3, 0, 1);
    let budget = CzBudget {
        samples: 6,
        ..CzBudget::default()
    };
    let zero = KernelDescriptor::zero(scalars(2), SpaceDescriptor::Scalar).build().unwrap();
    let c = cz_constants(&SioForm::new(zero, grid.clone(), 1).unwrap(), &Varpi::Product, &budget, 1).unwrap();
    assert_eq!((c.size, c.holder, c.cz, c.weak), (0.0, 0.0, 0.0, 0.0));
    assert!(c.bmo.iter().all(|b| *b == 0.0));
    let power = KernelDescriptor {
        in_spaces: scalars(2),
        out_space: SpaceDescriptor::Scalar,
        alpha: 1.0,
        profile: KernelProfile::Power {
            coefficient: MultilinearOp::scalar(-1.5, 2),
        },
    }
    .build()
    .unwrap();
    let t = SioForm::new(power, grid, 1).unwrap();
    for op in size_family(&t, 5, 3) {
        assert!((op.data()[0] + 1.5).abs() <= 1e-12);
    }
    let c = cz_constants(&t, &Varpi::Product, &budget, 1).unwrap();
    assert!((c.size - 1.5).abs() <= 1e-12, "{c:?}");
    assert!(c.cz >= c.size - 1e-12);
    assert!(c.weak > 0.0);
}

#[test]
fn bmo_of_simple_sequences() {
    let grid = line(-3, 0, 1);
    assert_eq!(bmo_norm(&grid, &BTreeMap::new(), 2.0, 4, 0).unwrap(), 0.0);
    let q = Cube { level: -2, corner: vec![2] };
    let mut a = BTreeMap::new();
    a.insert(HaarIndex::new(q.clone(), 1), MultilinearOp::scalar(3.0, 1));
    let expected = 3.0 / grid.measure(q.level).sqrt();
    for p in [1.0, 2.0, 3.0] {
        assert!((bmo_norm(&grid, &a, p, 4, 0).unwrap() - expected).abs() <= 1e-12);
    }
    // Two nested terms: p = 2 closed form agrees with sign enumeration at p = 2 + 0.
    let r = Cube { level: -1, corner: vec![0] };
    a.insert(HaarIndex::new(r.clone(), 1), MultilinearOp::scalar(-1.0, 1));
    let closed = bmo_norm(&grid, &a, 2.0, 4, 0).unwrap();
    let near = bmo_norm(&grid, &a, 2.0 + 1e-12, 4, 0).unwrap();
    assert!((closed - near).abs() <= 1e-9);
}

#[test]
fn kernel_descriptor_validation_and_serde() {
    let bad = KernelDescriptor {
        in_spaces: scalars(2),
        out_space: SpaceDescriptor::Scalar,
        alpha: 1.0,
        profile: KernelProfile::Power {
            coefficient: MultilinearOp::scalar(1.0, 1),
        },
    };
    assert!(bad.build().is_err());
    let mut alpha = KernelDescriptor::random(scalars(1), SpaceDescriptor::Scalar, 1, 0);
    alpha.alpha = 1.5;
    assert!(alpha.build().is_err());
    let d = KernelDescriptor::random(vec![s2()], SpaceDescriptor::Scalar, 2, 4);
    let json = serde_json::to_string(&d).unwrap();
    let back: KernelDescriptor = serde_json::from_str(&json).unwrap();
    assert_eq!(back, d);
    assert!(serde_json::from_str::<KernelDescriptor>(r#"{"in_spaces":[],"out_space":{"variant":"scalar"},"profile":{"kind":"zero"},"extra":1}"#).is_err());
}

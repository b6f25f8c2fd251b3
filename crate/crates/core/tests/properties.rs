use it2mpc::bench;
use it2mpc::it2::{self, FuzzyRule, It2MembershipFn, It2Plant, MembershipShape, Premise, Weighting};
use it2mpc::matkernel::{congruence, Matrix, SymMatrix};
use it2mpc::sim::{self, DelayProcess, SimConfig};
use it2mpc::synth::HistoryWindow;
use it2mpc::verify::{self, Verdict};
use proptest::prelude::*;

fn entries(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, n)
}

fn square(n: usize) -> impl Strategy<Value = Matrix<f64>> {
    entries(n * n, -2.0, 2.0).prop_map(move |d| Matrix::from_vec(n, n, d).unwrap())
}

/// `G'G + shift I`, positive definite for `shift > 0`.
fn spd(n: usize, shift: f64) -> impl Strategy<Value = SymMatrix<f64>> {
    square(n).prop_map(move |g| SymMatrix::symmetrize(&(&g.transpose() * &g)).unwrap().add_identity(shift))
}

fn sym(n: usize) -> impl Strategy<Value = SymMatrix<f64>> {
    square(n).prop_map(|g| SymMatrix::symmetrize(&g).unwrap())
}

fn inertia(s: &SymMatrix<f64>, tol: f64) -> (usize, usize) {
    let ev = s.eigenvalues().unwrap();
    (ev.iter().filter(|&&v| v > tol).count(), ev.iter().filter(|&&v| v < -tol).count())
}

proptest! {
    #[test]
    fn eigh_reconstructs(s in (1usize..=6).prop_flat_map(sym)) {
        let (vals, vecs) = s.eigh().unwrap();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let back = &(&vecs * &Matrix::diag(&vals)) * &vecs.transpose();
        prop_assert!(back.try_sub(s.as_matrix()).unwrap().max_abs() < 1e-10);
        let gram = &vecs.transpose() * &vecs;
        prop_assert!(gram.try_sub(&Matrix::identity(s.dim())).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn inverse_of_spd(s in (1usize..=6).prop_flat_map(|n| spd(n, 0.5))) {
        let inv = s.inverse().unwrap();
        let prod = s.as_matrix() * inv.as_matrix();
        prop_assert!(prod.try_sub(&Matrix::identity(s.dim())).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn congruence_keeps_inertia(
        (s, t) in (2usize..=5).prop_flat_map(|n| (sym(n), square(n).prop_map(move |t| &t + &Matrix::identity(n).scale(5.0))))
    ) {
        // diagonally dominant T is nonsingular; skip near-singular spectra of S
        let ev = s.eigenvalues().unwrap();
        prop_assume!(ev.iter().all(|v| v.abs() > 1e-3));
        let c = congruence(&s, &t).unwrap();
        prop_assert_eq!(inertia(&s, 1e-9), inertia(&c, 1e-9));
    }

    #[test]
    fn lemma_gap_is_psd((m, y) in (2usize..=5).prop_flat_map(|n| (square(n), spd(n, 0.1)))) {
        let gap = verify::lemma_gap(&m, &y).unwrap();
        let scale = 1.0 + y.max_abs() + m.max_abs() * m.max_abs() / 0.1;
        prop_assert!(gap.min_eig().unwrap() >= -1e-9 * scale);
    }

    #[test]
    fn schur_agrees_with_full_matrix(
        (a, b, c, sign) in (sym(2), square(2), spd(2, 0.05), prop::bool::ANY)
    ) {
        let pivot = if sign { c.clone() } else { c.scale(-1.0) };
        let mut full = Matrix::zeros(4, 4);
        full.set_block(0, 0, a.as_matrix());
        full.set_block(0, 2, &b);
        full.set_block(2, 0, &b.transpose());
        full.set_block(2, 2, pivot.as_matrix());
        let full = SymMatrix::symmetrize(&full).unwrap();
        let rep = verify::schur_oracle(&full, 2).unwrap();
        prop_assert_eq!(rep.verdict, Verdict::Pass, "{}", rep);
    }

    #[test]
    fn cstr_strengths_form_a_simplex(x1 in -5.0f64..5.0, x2 in -4.0f64..4.0) {
        let cfg = bench::bundled();
        let w = it2::firing_strengths(&cfg.plant, &[x1, x2]).unwrap();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let h = it2::controller_strengths(&cfg.controller, &[x1, x2]).unwrap();
        prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blend_is_linear_in_weights(raw in entries(3, 0.01, 1.0)) {
        let cfg = bench::bundled();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let m = it2::blend(&cfg.plant, &w).unwrap();
        let mut a = Matrix::zeros(2, 2);
        for (r, &wl) in cfg.plant.rules().iter().zip(&w) {
            a = &a + &r.a.scale(wl);
        }
        prop_assert!(m.a.try_sub(&a).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn delay_free_rules_ignore_delays(
        x in entries(2, -1.0, 1.0),
        u in -3.0f64..3.0,
        dx in 0usize..=3,
        du in 0usize..=3,
    ) {
        let cfg = bench::bundled();
        let rules = cfg
            .plant
            .rules()
            .iter()
            .map(|r| FuzzyRule { a: r.a.clone(), a_d: Matrix::zeros(2, 2), b: r.b.clone(), b_d: Matrix::zeros(2, 1) })
            .collect();
        let plant = It2Plant::new(rules, cfg.plant.memberships().to_vec(), cfg.plant.premise()).unwrap();
        let mut hist = HistoryWindow::constant(&[0.3, -0.2], 3, 3, 1);
        hist.push(x.clone(), vec![0.7]);
        let out = sim::advance(&plant, &hist, &[u], dx, du).unwrap();
        let w = it2::firing_strengths(&plant, &x).unwrap();
        let m = it2::blend(&plant, &w).unwrap();
        let expect: Vec<f64> = m.a.mul_vec(&x).iter().zip(m.b.mul_vec(&[u])).map(|(a, b)| a + b).collect();
        for (a, b) in out.x_next.iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn triangular_grades_stay_in_envelope(c in -1.0f64..1.0, z in -3.0f64..3.0) {
        let mf = It2MembershipFn {
            lower: MembershipShape::Triangular { left: c - 0.5, peak: c, right: c + 0.5, height: 0.7 },
            upper: MembershipShape::Triangular { left: c - 1.0, peak: c, right: c + 1.0, height: 1.0 },
            weighting: Weighting::Constant(0.3),
        };
        let (lo, hi) = mf.grades(z);
        prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
        let e = mf.effective(z, &[0.0]);
        prop_assert!(lo - 1e-15 <= e && e <= hi + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampled_delays_stay_in_bounds(seed in any::<u64>()) {
        let cfg = bench::bundled();
        let sim = SimConfig::new(40, vec![0.5, -0.5], 0.2, DelayProcess::uniform(seed, 10), DelayProcess::uniform(!seed, 10));
        let t = sim::uncontrolled_run(&cfg.plant, &sim).unwrap();
        prop_assert!(t.d_x.iter().all(|&d| (1..=10).contains(&d)));
        prop_assert!(t.d_u.iter().all(|&d| (1..=10).contains(&d)));
    }
}

#[test]
fn lemma_suite_spans_dimensions() {
    let rep = verify::check_lemma_suite::<f64>(200, 2..=5, 1).unwrap();
    assert!(rep.pass(), "{rep}");
}

#[test]
fn scalar_premise_offset_shifts_grades() {
    let g = MembershipShape::Gaussian { center: 2.0, sigma: 1.0, height: 1.0 };
    let mf = It2MembershipFn { lower: g, upper: g, weighting: Weighting::Constant(0.5) };
    let p = Premise { state: 0, offset: 2.0 };
    assert_eq!(p.eval(&[0.0]), 2.0);
    assert_eq!(mf.effective(p.eval(&[0.0]), &[0.0]), 1.0);
}

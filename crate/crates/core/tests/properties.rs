use poisint_core::diagnostics::{holder_estimate, l1_distance, MIN_PAIRS};
use poisint_core::model::{Atom, CdfGrid, Mesh};
use poisint_core::oracles::irwin_hall_cdf;
use poisint_core::solver::{step_once, StepStencil};
use poisint_core::transforms::{convolve, reflect, restrict};
use poisint_core::Expression;
use proptest::prelude::*;

fn cases() -> ProptestConfig {
    ProptestConfig::with_cases(128)
}

/// Random valid CDF on a lattice mesh: sorted values plus a few node atoms.
fn arb_grid(max_len: usize) -> impl Strategy<Value = CdfGrid> {
    (
        -20i64..20,
        proptest::collection::vec(0.0f64..1.0, 2..max_len),
        proptest::collection::vec((0usize..1000, 0.0f64..0.2), 0..3),
    )
        .prop_map(|(lo, raw, atom_spec)| {
            let delta = 0.125;
            let len = raw.len();
            let mut incr: Vec<f64> = raw.iter().map(|v| v * v).collect();
            let mut atoms: Vec<Atom> = Vec::new();
            let mesh = Mesh::lattice(delta, lo, lo + len as i64 - 1).unwrap();
            for (pos, mass) in atom_spec {
                let j = pos % len;
                if mass > 1e-6 && atoms.iter().all(|a| a.x != mesh.x(j)) {
                    incr[j] += mass;
                    atoms.push(Atom { x: mesh.x(j), mass });
                }
            }
            let total: f64 = incr.iter().sum::<f64>().max(1e-9);
            let scale = 1.0 / total;
            let mut acc = 0.0;
            let values = incr
                .iter()
                .map(|d| {
                    acc += d * scale;
                    acc.min(1.0)
                })
                .collect();
            for a in atoms.iter_mut() {
                a.mass *= scale;
            }
            CdfGrid::new(mesh, values, atoms).unwrap()
        })
}

fn arb_cdf_vector() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, 2..80).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

fn arb_stencil() -> impl Strategy<Value = (StepStencil, f64)> {
    (0.0f64..3.0, 0.0f64..5.0, 1e-3f64..0.5).prop_filter_map("stable", |(g, n, h)| {
        (h * n < 1.0).then(|| (StepStencil::new(0, g, n, 0.05), h))
    })
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn step_keeps_monotone((st, h) in arb_stencil(), f in arb_cdf_vector()) {
        let next = step_once(&f, &st, h);
        for w in next.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-15);
        }
    }

    #[test]
    fn step_keeps_bounds((st, h) in arb_stencil(), f in arb_cdf_vector()) {
        let next = step_once(&f, &st, h);
        for (a, b) in next.iter().zip(&f) {
            prop_assert!(*a >= -1e-15 && *a <= 1.0 + 1e-15);
            // jumps only move mass right, so F never grows
            prop_assert!(*a <= *b + 1e-15);
        }
    }

    #[test]
    fn step_columns_sum_to_one((st, h) in arb_stencil(), len in 5usize..60) {
        // column c collects every weight that node c contributes
        for c in 0..len {
            let mut unit = vec![0.0; len];
            unit[c] = 1.0;
            let col: f64 = step_once(&unit, &st, h).iter().sum();
            if c + st.k < len {
                prop_assert!((col - 1.0).abs() < 1e-14, "column {} sums to {}", c, col);
            } else {
                prop_assert!(col <= 1.0 + 1e-14);
            }
        }
    }

    #[test]
    fn convolving_with_point_mass_is_identity(a in arb_grid(60), shift in -5i64..5) {
        let pm = CdfGrid::point_mass(Mesh::lattice(0.125, shift, shift).unwrap(), shift as f64 * 0.125).unwrap();
        let c = convolve(&a, &pm).unwrap();
        let lo = a.mesh().lattice_start().unwrap() + shift;
        let back_mesh = Mesh::lattice(0.125, lo, lo + a.mesh().len() as i64 - 1).unwrap();
        let back = restrict(&c, &back_mesh).unwrap();
        for (x, y) in back.values().iter().zip(a.values()) {
            prop_assert!((x - y).abs() < 1e-14);
        }
        prop_assert_eq!(back.atoms().len(), a.atoms().len());
    }

    #[test]
    fn convolution_commutes(a in arb_grid(40), b in arb_grid(40)) {
        let ab = convolve(&a, &b).unwrap();
        let ba = convolve(&b, &a).unwrap();
        prop_assert_eq!(ab.mesh(), ba.mesh());
        for (x, y) in ab.values().iter().zip(ba.values()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn reflect_is_an_involution(a in arb_grid(60)) {
        let back = reflect(&reflect(&a));
        prop_assert_eq!(back.mesh(), a.mesh());
        for (x, y) in back.values().iter().zip(a.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(back.atoms(), a.atoms());
    }

    #[test]
    fn reflect_keeps_grid_valid(a in arb_grid(60)) {
        let r = reflect(&a);
        prop_assert!(r.validate().is_ok());
        // top value is one minus the mass strictly below the first node
        let below_first = a.values()[0] - a.atom_mass_at_node(0);
        prop_assert!((r.mass_captured() - (1.0 - below_first).min(1.0)).abs() < 1e-12);
    }

    #[test]
    fn l1_is_a_metric(a in arb_cdf_vector(), b in arb_cdf_vector(), c in arb_cdf_vector()) {
        let n = a.len().min(b.len()).min(c.len());
        let mesh = Mesh::from_origin(0.1, 0.1 * (n - 1) as f64).unwrap();
        let mk = |v: &Vec<f64>| CdfGrid::new(mesh, v[..n].to_vec(), vec![]).unwrap();
        let (a, b, c) = (mk(&a), mk(&b), mk(&c));
        let ab = l1_distance(&a, &b).unwrap();
        prop_assert!((ab - l1_distance(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!(ab <= l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap() + 1e-14);
    }

    #[test]
    fn holder_estimate_grows_with_gamma(v in arb_cdf_vector(), g1 in 0.05f64..1.0, g2 in 0.05f64..1.0) {
        let mesh = Mesh::from_origin(0.05, 0.05 * (v.len() - 1) as f64).unwrap();
        let grid = CdfGrid::new(mesh, v, vec![]).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = holder_estimate(&grid, lo, MIN_PAIRS, 3).unwrap().seminorm_estimate;
        let b = holder_estimate(&grid, hi, MIN_PAIRS, 3).unwrap().seminorm_estimate;
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn quantile_and_cdf_are_adjoint(a in arb_grid(60), p in 0.0f64..1.0) {
        let x = a.quantile(p);
        if p <= a.mass_captured() {
            prop_assert!(a.value_at(x) >= p - 1e-12);
        }
        for (j, &v) in a.values().iter().enumerate() {
            prop_assert!(a.quantile(v) <= a.mesh().x(j) + 1e-12);
        }
    }

    #[test]
    fn series_is_non_decreasing(x in -1.0f64..12.0, dx in 0.0f64..1.0) {
        prop_assert!(irwin_hall_cdf(x, 11) <= irwin_hall_cdf(x + dx, 11) + 1e-12);
    }

    #[test]
    fn expression_display_round_trips(text in arb_expression()) {
        let e = Expression::parse(&text).unwrap();
        let again = Expression::parse(&e.to_string()).unwrap();
        prop_assert_eq!(&again, &e);
        for s in [0.0, 0.37, 1.5] {
            match (e.evaluate(s), again.evaluate(s)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}

fn arb_expression() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("s".to_string()),
        Just("pi".to_string()),
        Just("e".to_string()),
        (0u32..100).prop_map(|v| format!("{}", v as f64 / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof![Just("+"), Just("-"), Just("*"), Just("/"), Just("^")])
                .prop_map(|(a, b, op)| format!("({a}){op}({b})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (inner.clone(), prop_oneof![Just("sin"), Just("cos"), Just("exp"), Just("abs"), Just("sqrt"), Just("log")])
                .prop_map(|(a, f)| format!("{f}({a})")),
            (inner.clone(), inner).prop_map(|(a, b)| format!("min({a}, {b})")),
        ]
    })
}

use deom::bath::{shift_modes, DissipatonMode, ModeTable};
use deom::hierarchy::{ddo_count, enumerate_indices, Generator, HierarchyState, IndexSet};
use deom::model::{build_fock_operators, Sign};
use deom::observables::{total_noise, SpectrumKind, SpectrumTable};
use deom::C64;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::sync::Arc;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn random_table(etas: &[C64], gammas: &[C64]) -> ModeTable {
    let mut modes = Vec::new();
    for u in 0..2 {
        for sigma in [Sign::Minus, Sign::Plus] {
            for k in 0..etas.len() {
                let g = if sigma == Sign::Plus { gammas[k] } else { gammas[k].conj() };
                modes.push(DissipatonMode { alpha: 0, u, sigma, eta: etas[k], gamma: g, k });
            }
        }
    }
    ModeTable::from_modes(modes, vec!["L".into()], false).unwrap()
}

fn state_from(gen: &Generator, vals: &[C64]) -> HierarchyState {
    let mut s = gen.zero_state(false);
    for (d, v) in s.data.iter_mut().zip(vals.iter().cycle()) {
        *d = *v;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn anticommutation_relations(n in 1usize..=5) {
        let ops = build_fock_operators(n).unwrap();
        let id = ops.identity();
        for u in 0..n {
            for v in 0..n {
                let (a, b) = (ops.annihilator(u), ops.annihilator(v));
                let bd = ops.creator(v);
                let ab = a * b + b * a;
                prop_assert!(ab.iter().all(|z| z.norm() < 1e-14));
                let abd = a * &bd + &bd * a;
                let want = if u == v { id.clone() } else { DMatrix::zeros(ops.dim, ops.dim) };
                prop_assert!((abd - want).iter().all(|z| z.norm() < 1e-14));
            }
        }
    }

    #[test]
    fn enumeration_matches_count(j in 0usize..=12, l in 0usize..=5) {
        let idx = enumerate_indices(j, l).unwrap();
        prop_assert_eq!(idx.len() as u128, ddo_count(j, l));
        let set = IndexSet::new(j, l).unwrap();
        for s in 0..set.len() {
            for m in 0..j {
                if let Some(t) = set.neighbor(s, m) {
                    prop_assert_eq!(set.neighbor(t, m), Some(s));
                    prop_assert_eq!(set.indices[s].tier().abs_diff(set.indices[t].tier()), 1);
                }
            }
        }
    }

    #[test]
    fn generator_is_linear(
        etas in prop::collection::vec(c64(), 2),
        rates in prop::collection::vec((0.1..3.0f64, -2.0..2.0f64), 2),
        xs in prop::collection::vec(c64(), 16),
        ys in prop::collection::vec(c64(), 7),
        a in c64(),
        b in c64(),
        eps in -2.0..2.0f64,
    ) {
        let ops = build_fock_operators(2).unwrap();
        let h = (ops.number(0) + ops.number(1)) * C64::new(eps, 0.0) + ops.number(0) * ops.number(1);
        let gammas: Vec<C64> = rates.iter().map(|&(r, i)| C64::new(r, i)).collect();
        let gen = Generator::new(&h, &ops, random_table(&etas, &gammas), 2).unwrap();
        let x = state_from(&gen, &xs);
        let y = state_from(&gen, &ys);
        let mut combo = x.clone();
        combo.scale(a);
        combo.axpy(b, &y);
        let (mut gx, mut gy, mut gc) = (x.zeros_like(), x.zeros_like(), x.zeros_like());
        gen.apply(&x, &mut gx);
        gen.apply(&y, &mut gy);
        gen.apply(&combo, &mut gc);
        gx.scale(a);
        gx.axpy(b, &gy);
        let scale = gc.norm().max(1.0);
        for (p, q) in gc.data.iter().zip(&gx.data) {
            prop_assert!((p - q).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn total_noise_is_bilinear(
        vals in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..20),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let w: Vec<f64> = (0..vals.len()).map(|i| i as f64).collect();
        let mk = |f: &dyn Fn(&(f64, f64, f64, f64)) -> C64, cplx| {
            SpectrumTable::new(SpectrumKind::NoiseS, "x", w.clone(), vals.iter().map(f).collect(), cplx).unwrap()
        };
        let ll = mk(&|v| C64::new(v.0, 0.0), false);
        let rr = mk(&|v| C64::new(v.1, 0.0), false);
        let lr = mk(&|v| C64::new(v.2, v.3), true);
        let s = total_noise(&ll, &rr, &lr, a, b).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let want = a * a * v.0 + b * b * v.1 - 2.0 * a * b * v.2;
            prop_assert!((s.values[k].re - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn mu_shift_keeps_decay_magnitude(
        etas in prop::collection::vec(c64(), 3),
        rates in prop::collection::vec((0.1..3.0f64, -2.0..2.0f64), 3),
        mu in -5.0..5.0f64,
        t in 0.0..10.0f64,
    ) {
        let gammas: Vec<C64> = rates.iter().map(|&(r, i)| C64::new(r, i)).collect();
        let table = random_table(&etas, &gammas);
        let shifted = shift_modes(&table.modes, mu);
        for (m, s) in table.modes.iter().zip(&shifted) {
            prop_assert_eq!(m.eta, s.eta);
            prop_assert!(((-m.gamma * t).exp().norm() - (-s.gamma * t).exp().norm()).abs() < 1e-12);
            let phase = C64::new(0.0, m.sigma.value() * mu * t).exp();
            prop_assert!(((-s.gamma * t).exp() - (-m.gamma * t).exp() * phase).norm() < 1e-10);
        }
    }

    #[test]
    fn mode_table_csv_round_trip(
        etas in prop::collection::vec(c64(), 1..4),
        rates in prop::collection::vec((0.1..3.0f64, -2.0..2.0f64), 4),
    ) {
        let gammas: Vec<C64> = rates.iter().map(|&(r, i)| C64::new(r, i)).collect();
        let table = random_table(&etas, &gammas[..etas.len()]);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = ModeTable::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.modes, table.modes);
    }

    #[test]
    fn snapshot_round_trip(vals in prop::collection::vec(c64(), 1..40), l in 0usize..3) {
        let index = Arc::new(IndexSet::new(3, l).unwrap());
        let mut s = HierarchyState::zeros(index.clone(), 2, true);
        for (d, v) in s.data.iter_mut().zip(vals.iter().cycle()) {
            *d = *v;
        }
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        let back = HierarchyState::read_snapshot(&buf[..], index, true).unwrap();
        prop_assert_eq!(back.data, s.data);
    }
}

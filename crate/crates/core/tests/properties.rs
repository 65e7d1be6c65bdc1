use proptest::prelude::*;

use mwlab::arrivals::max_deviation;
use mwlab::fluid::{fluid_drift, integrate_fluid, invariant_set, potential};
use mwlab::geometry::{min_norm_point, project, HalfSpace, Polyhedron, Polytope};
use mwlab::linalg::{dist, dot, norm};
use mwlab::netmodel::close_actions;
use mwlab::netmodel::instances::{e1, e2, with_weights};
use mwlab::report::wilson;
use mwlab::rng::CounterRng;
use mwlab::Network;

fn small_actions(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0u8..3, n), 1..5)
        .prop_map(|v| v.into_iter().map(|a| a.into_iter().map(f64::from).collect()).collect())
}

fn network() -> impl Strategy<Value = Network> {
    (2usize..4)
        .prop_flat_map(|n| (Just(n), small_actions(n), prop::collection::vec(0u8..2, n * n)))
        .prop_filter_map("routing must be substochastic and acyclic", |(n, acts, bits)| {
            // strictly lower-triangular 0/1 routing with at most one target per queue
            let mut routing = vec![vec![0.0; n]; n];
            for j in 0..n {
                if let Some(i) = (j + 1..n).find(|&i| bits[i * n + j] == 1) {
                    routing[i][j] = 1.0;
                }
            }
            Network::new(routing, acts, None).ok()
        })
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_is_idempotent(acts in small_actions(3)) {
        let once = close_actions(&acts).unwrap();
        let twice = close_actions(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        for mu in &once {
            for i in 0..mu.len() {
                let mut z = mu.clone();
                z[i] = 0.0;
                prop_assert!(once.contains(&z));
            }
        }
    }

    #[test]
    fn schedule_is_optimal_and_last_among_ties(net in network(), seed in any::<u64>()) {
        let mut rng = CounterRng::new(seed);
        let q: Vec<f64> = (0..net.n()).map(|_| (rng.next_f64() * 4.0).floor()).collect();
        let d = net.schedule(&q);
        for i in 0..net.actions().len() {
            let v = net.objective(&q, i);
            prop_assert!(v <= d.objective + 1e-12);
            if (v - d.objective).abs() <= 1e-12 {
                prop_assert!(i <= d.chosen);
            }
        }
    }

    #[test]
    fn step_stays_non_negative(net in network(), seed in any::<u64>()) {
        let mut rng = CounterRng::new(seed);
        let n = net.n();
        let mut q: Vec<f64> = (0..n).map(|_| rng.next_f64() * 3.0).collect();
        for _ in 0..50 {
            let a: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.3) { 1.0 } else { 0.0 }).collect();
            net.step_in_place(&mut q, &a);
            prop_assert!(q.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn weighted_step_commutes_with_transform(
        base in prop::sample::select(vec![0usize, 1]),
        w in prop::collection::vec(prop::sample::select(vec![1.0, 4.0, 9.0, 16.0]), 2),
        q in prop::collection::vec(0u8..8, 2),
        seed in any::<u64>(),
    ) {
        let net = with_weights(&if base == 0 { e1() } else { e2() }, w);
        let (mw, tr) = net.wmw_to_mw();
        let mut x: Vec<f64> = q.iter().map(|v| f64::from(*v)).collect();
        let mut y = tr.forward(&x);
        let mut rng = CounterRng::new(seed);
        for _ in 0..200 {
            let a: Vec<f64> = (0..2).map(|_| if rng.bernoulli(0.3) { 1.0 } else { 0.0 }).collect();
            net.step_in_place(&mut x, &a);
            mw.step_in_place(&mut y, &tr.forward(&a));
            prop_assert!(dist(&y, &tr.forward(&x)) <= 1e-9);
        }
    }

    #[test]
    fn min_norm_matches_brute_force(pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..6)) {
        let cert = min_norm_point(&Polytope::new(pts.clone()), 1e-10).unwrap();
        let x = &cert.point;
        // brute force over vertices and edges; the origin when enclosed
        let mut best = pts.iter().map(|p| norm(p)).fold(f64::INFINITY, f64::min);
        for a in &pts {
            for b in &pts {
                let d: Vec<f64> = b.iter().zip(a).map(|(u, v)| u - v).collect();
                let dd = dot(&d, &d);
                if dd > 0.0 {
                    let t = (-dot(a, &d) / dd).clamp(0.0, 1.0);
                    let p: Vec<f64> = a.iter().zip(&d).map(|(u, v)| u + t * v).collect();
                    best = best.min(norm(&p));
                }
            }
        }
        prop_assert!(norm(x) <= best + 1e-9);
        prop_assert!(cert.optimality_gap(&pts) <= 1e-8);
        let s: f64 = cert.coefficients.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9 && cert.coefficients.iter().all(|c| *c >= -1e-12));
    }

    #[test]
    fn projection_is_non_expansive(
        normals in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..4),
        x in prop::collection::vec(-5.0f64..5.0, 2),
        y in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let mut poly = Polyhedron::orthant(2);
        poly.halfspaces.extend(normals.into_iter().filter(|n| norm(n) > 1e-3).map(|n| HalfSpace::new(n, 0.0)));
        let px = project(&poly, &x, 1e-12).unwrap();
        let py = project(&poly, &y, 1e-12).unwrap();
        prop_assert!(poly.contains(&px, 1e-9));
        prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-6);
        let again = project(&poly, &px, 1e-12).unwrap();
        prop_assert!(dist(&again, &px) <= 1e-9);
    }

    #[test]
    fn fluid_scaling_identity(
        base in prop::sample::select(vec![0usize, 1]),
        lambda in prop::collection::vec(0.0f64..0.4, 2),
        q0 in state(2),
        r in 1.5f64..10.0,
    ) {
        let net = if base == 0 { e1() } else { e2() };
        let big = integrate_fluid(&net, &lambda, &q0, 8.0 * r).unwrap();
        let small = integrate_fluid(&net, &lambda, &[q0[0] / r, q0[1] / r], 8.0).unwrap();
        for k in 0..=40 {
            let t = 8.0 * k as f64 / 40.0;
            let scaled: Vec<f64> = big.state_at(r * t).iter().map(|v| v / r).collect();
            prop_assert!(dist(&scaled, &small.state_at(t)) <= 1e-9);
        }
    }

    #[test]
    fn fluid_descends_potential(net in network(), q0 in state(3), lam in prop::collection::vec(0.0f64..0.3, 3)) {
        let n = net.n();
        let q0 = &q0[..n];
        let lambda = &lam[..n];
        let tr = integrate_fluid(&net, lambda, q0, 20.0).unwrap();
        for (j, seg) in tr.segments.iter().enumerate() {
            prop_assert!(tr.states[j + 1].iter().all(|v| *v >= 0.0));
            let a = potential(&net, lambda, &tr.states[j]).lambda_value;
            let b = potential(&net, lambda, &tr.states[j + 1]).lambda_value;
            let dt = tr.times[j + 1] - tr.times[j];
            prop_assert!(b <= a + 1e-9, "{} > {}", b, a);
            prop_assert!((a - b - dot(&seg.drift, &seg.drift) * dt).abs() <= 1e-7 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn invariant_set_members_are_fixed(a in 0.0f64..10.0) {
        let e1_set = invariant_set(&e1(), &[0.5, 0.5]).unwrap();
        prop_assert!(e1_set.contains(&[a, a], 1e-12));
        prop_assert!(norm(&fluid_drift(&e1(), &[0.5, 0.5], &[a, a]).unwrap().drift) <= 1e-9);
        let e2_set = invariant_set(&e2(), &[0.5, 0.0]).unwrap();
        prop_assert!(e2_set.contains(&[2.0 * a, a], 1e-12));
        prop_assert!(norm(&fluid_drift(&e2(), &[0.5, 0.0], &[2.0 * a, a]).unwrap().drift) <= 1e-9);
    }

    #[test]
    fn wilson_interval_is_ordered(trials in 1usize..2000, frac in 0.0f64..=1.0) {
        let k = ((trials as f64) * frac).floor() as usize;
        let p = wilson(k, trials);
        prop_assert!(0.0 <= p.lower && p.lower <= p.estimate && p.estimate <= p.upper && p.upper <= 1.0);
    }

    #[test]
    fn max_deviation_is_monotone(xs in prop::collection::vec(0.0f64..2.0, 1..100), lambda in 0.0f64..2.0) {
        let samples: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        let d = max_deviation(&samples, &[lambda]);
        prop_assert_eq!(d.at(0), 0.0);
        prop_assert!(d.0.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rng_streams_are_reproducible(seed in any::<u64>(), idx in any::<u64>()) {
        let mut a = CounterRng::for_stream(seed, idx);
        let mut b = CounterRng::for_stream(seed, idx);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}

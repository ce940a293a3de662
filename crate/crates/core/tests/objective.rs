use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sysid_core::objective::{box_penalty, regularization, total_loss, tracking_loss};
use sysid_core::{LossSpec, ModelParams, ParamLayout, RobotModel};

type Batch = Vec<Vec<Vec<[f64; 2]>>>;

fn random_batch(rng: &mut ChaCha8Rng, b: usize, n: usize, bodies: usize) -> Batch {
    (0..b)
        .map(|_| {
            (0..n)
                .map(|_| (0..bodies).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect())
                .collect()
        })
        .collect()
}

fn brute_force(sim: &Batch, reference: &Batch, upper: &[usize]) -> (f64, f64) {
    let (mut all, mut up) = (0.0, 0.0);
    for b in 0..sim.len() {
        for t in 0..sim[b].len() {
            for j in 0..sim[b][t].len() {
                let dx = sim[b][t][j][0] - reference[b][t][j][0];
                let dy = sim[b][t][j][1] - reference[b][t][j][1];
                all += dx * dx + dy * dy;
                if upper.contains(&j) {
                    up += dx * dx + dy * dy;
                }
            }
        }
    }
    (all / sim.len() as f64, up / sim.len() as f64)
}

#[test]
fn tracking_loss_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (b, n, bodies) = (rng.gen_range(1..5), rng.gen_range(1..12), rng.gen_range(1..9));
        let sim = random_batch(&mut rng, b, n, bodies);
        let reference = random_batch(&mut rng, b, n, bodies);
        let upper: Vec<usize> = (0..bodies).filter(|_| rng.gen_bool(0.5)).collect();
        let (a, u) = tracking_loss(&sim, &reference, &upper).unwrap();
        let (ea, eu) = brute_force(&sim, &reference, &upper);
        assert!((a - ea).abs() < 1e-12 * ea.max(1.0));
        assert!((u - eu).abs() < 1e-12 * eu.max(1.0));
    }
}

#[test]
fn box_penalty_derivative_vanishes_at_endpoints() {
    let h = 1e-7;
    for edge in [0.8, 1.2] {
        let d = (box_penalty(edge + h, 0.8, 1.2) - box_penalty(edge - h, 0.8, 1.2)) / (2.0 * h);
        assert!(d.abs() < 1e-6, "derivative {d} at {edge}");
    }
    // One-sided difference quotients also tend to zero.
    for edge in [0.8, 1.2] {
        for s in [1e-4, 1e-6] {
            assert!(((box_penalty(edge + s, 0.8, 1.2) - box_penalty(edge, 0.8, 1.2)) / s).abs() <= 2.0 * s);
            assert!(((box_penalty(edge, 0.8, 1.2) - box_penalty(edge - s, 0.8, 1.2)) / s).abs() <= 2.0 * s);
        }
    }
}

#[test]
fn disabled_regularization_drops_every_term() {
    let spec = LossSpec {
        regularization_enabled: false,
        ..LossSpec::default()
    };
    let b = total_loss(1.5, 0.5, (3.0, 4.0, 5.0, 6.0), &spec);
    assert_eq!((b.reg_com, b.reg_mass, b.reg_damp, b.reg_fric), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(b.total, 1.5 + 0.5 * spec.alpha_upper);
}

fn humanoid_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let model = RobotModel::default_humanoid();
    let mut p = ModelParams::nominal(ParamLayout::full(&model));
    for m in &mut p.mass_delta {
        *m = rng.gen_range(-2.0..2.0);
    }
    for c in &mut p.com_delta {
        *c = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)];
    }
    for a in p.damping_scale.iter_mut().chain(p.friction_scale.iter_mut()) {
        *a = rng.gen_range(0.5..1.5);
    }
    p
}

#[test]
fn regularization_matches_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = LossSpec::default();
    for _ in 0..10 {
        let p = humanoid_params(&mut rng);
        let (c, m, d, f) = regularization(&p, &spec);
        let ec: f64 = p.com_delta.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum();
        let em: f64 = p.mass_delta.iter().map(|v| v * v).sum();
        let phi = |a: f64| (0.8 - a).max(0.0).powi(2) + (a - 1.2).max(0.0).powi(2);
        let ed: f64 = p.damping_scale.iter().map(|&a| phi(a)).sum();
        let ef: f64 = p.friction_scale.iter().map(|&a| phi(a)).sum();
        for (got, want) in [(c, ec), (m, em), (d, ed), (f, ef)] {
            assert!((got - want).abs() < 1e-12 * want.max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn loss_components_are_nonnegative(
        ta in 0.0..10.0f64, tu in 0.0..10.0f64,
        regs in proptest::array::uniform4(0.0..10.0f64),
        alpha in 0.0..3.0f64, enabled in any::<bool>(),
    ) {
        let spec = LossSpec { alpha_upper: alpha, regularization_enabled: enabled, ..LossSpec::default() };
        let b = total_loss(ta, tu, (regs[0], regs[1], regs[2], regs[3]), &spec);
        for v in [b.track_all, b.track_upper, b.reg_com, b.reg_mass, b.reg_damp, b.reg_fric, b.total] {
            prop_assert!(v >= 0.0);
        }
        let expect = b.track_all + alpha * b.track_upper + spec.lambda_com * b.reg_com + spec.lambda_mass * b.reg_mass
            + spec.lambda_damp * b.reg_damp + spec.lambda_fric * b.reg_fric;
        prop_assert!((b.total - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn upper_weight_scales_only_upper_term(
        ta in 0.0..10.0f64, tu in 0.0..10.0f64, alpha in 0.0..3.0f64, c in 0.0..4.0f64,
        regs in proptest::array::uniform4(0.0..10.0f64),
    ) {
        let base = LossSpec { alpha_upper: alpha, ..LossSpec::default() };
        let scaled = LossSpec { alpha_upper: c * alpha, ..base };
        let r = (regs[0], regs[1], regs[2], regs[3]);
        let diff = total_loss(ta, tu, r, &scaled).total - total_loss(ta, tu, r, &base).total;
        prop_assert!((diff - (c - 1.0) * alpha * tu).abs() < 1e-12 * (1.0 + total_loss(ta, tu, r, &scaled).total));
    }

    #[test]
    fn tracking_loss_is_permutation_invariant(seed in any::<u64>(), b in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sim = random_batch(&mut rng, b, 4, 3);
        let reference = random_batch(&mut rng, b, 4, 3);
        let (a, u) = tracking_loss(&sim, &reference, &[1]).unwrap();
        let (mut ps, mut pr) = (sim.clone(), reference.clone());
        ps.reverse();
        pr.reverse();
        ps.rotate_left(b / 2);
        pr.rotate_left(b / 2);
        let (pa, pu) = tracking_loss(&ps, &pr, &[1]).unwrap();
        prop_assert!((a - pa).abs() < 1e-12 * a.max(1.0));
        prop_assert!((u - pu).abs() < 1e-12 * u.max(1.0));
        prop_assert!(a >= 0.0 && u >= 0.0 && u <= a + 1e-15);
    }

    #[test]
    fn box_penalty_is_nonnegative(a in -5.0..5.0f64) {
        prop_assert!(box_penalty(a, 0.8, 1.2) >= 0.0);
    }
}

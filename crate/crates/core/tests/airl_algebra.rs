use airl_core::airl::{disc_probability, Discriminator};
use airl_core::env::MdpSpec;
use airl_core::rng::rng_from_seed;
use rand::Rng;

fn random_state(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

#[test]
fn f_is_g_plus_discounted_potential_difference() {
    let mut rng = rng_from_seed(11);
    for seed in 0..50 {
        let dim = rng.gen_range(1..6);
        let actions = rng.gen_range(2..5);
        let gamma = rng.gen_range(0.5..1.0);
        let disc = Discriminator::init(MdpSpec::new(dim, actions, gamma).unwrap(), &[7], &[5], seed).unwrap();
        for _ in 0..20 {
            let s = random_state(&mut rng, dim);
            let sn = random_state(&mut rng, dim);
            let a = rng.gen_range(0..actions);
            let mut gx = s.clone();
            gx.extend((0..actions).map(|k| if k == a { 1.0 } else { 0.0 }));
            let g = disc.g.forward_row(&gx).unwrap()[0];
            let h = disc.h.forward_row(&s).unwrap()[0];
            let hn = disc.h.forward_row(&sn).unwrap()[0];
            let f = disc.f_value(&s, a, &sn).unwrap();
            assert!((f - (g + gamma * hn - h)).abs() < 1e-12);
        }
    }
}

/// `D = exp(f) / (exp(f) + π)` evaluated directly, then turned into a logit.
fn naive_logit(f: f64, log_pi: f64) -> f64 {
    let d = f.exp() / (f.exp() + log_pi.exp());
    (d / (1.0 - d)).ln()
}

#[test]
fn logit_matches_exponential_form() {
    let mut rng = rng_from_seed(5);
    let disc = Discriminator::init(MdpSpec::new(3, 4, 0.9).unwrap(), &[6], &[6], 2).unwrap();
    for _ in 0..2000 {
        let s = random_state(&mut rng, 3);
        let sn = random_state(&mut rng, 3);
        let a = rng.gen_range(0..4);
        let f = disc.f_value(&s, a, &sn).unwrap();
        let log_pi = f - rng.gen_range(-10.0..10.0);
        let logit = disc.disc_logit(&s, a, &sn, log_pi).unwrap();
        assert!((logit - naive_logit(f, log_pi)).abs() < 1e-9, "f={f} log_pi={log_pi}");
        let d = disc_probability(logit);
        let naive_d = f.exp() / (f.exp() + log_pi.exp());
        assert!((d - naive_d).abs() < 1e-12);
    }
}

#[test]
fn half_when_f_equals_log_pi() {
    let mut rng = rng_from_seed(9);
    let disc = Discriminator::init(MdpSpec::new(2, 3, 0.95).unwrap(), &[4], &[4], 1).unwrap();
    for _ in 0..200 {
        let s = random_state(&mut rng, 2);
        let sn = random_state(&mut rng, 2);
        let a = rng.gen_range(0..3);
        let f = disc.f_value(&s, a, &sn).unwrap();
        let logit = disc.disc_logit(&s, a, &sn, f).unwrap();
        assert_eq!(disc_probability(logit), 0.5);
    }
}

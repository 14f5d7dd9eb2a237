//! The AIRL discriminator.
//!
//! ```text
//! f(s, a, s')    = g(s, a) + γ·h(s') − h(s)
//! D(s, a, s')    = exp f / (exp f + π(a|s))
//! logit D        = f − log π(a|s)
//! ```
//!
//! All probabilities are handled through the logit; `exp f` is never formed.
//! The novice's per-step reward is `log D − log(1 − D)`, which equals the
//! logit. This is the usual entropy-regularized AIRL reward.

use serde::{Deserialize, Serialize};

use crate::env::MdpSpec;
use crate::error::{Error, Result};
use crate::numkit::{kernels, Gradients, Mlp, MlpCheckpoint, Tape, Tensor};

/// `(s, a, s')` tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub s: Vec<f64>,
    pub a: usize,
    pub s_next: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    /// `g(s, a)` on `[s ‖ one_hot(a)]`, one output.
    pub g: Mlp,
    /// `h(s)`, one output.
    pub h: Mlp,
    pub gamma: f64,
    state_dim: usize,
    action_count: usize,
}

impl Discriminator {
    pub fn new(g: Mlp, h: Mlp, gamma: f64, spec: MdpSpec) -> Result<Self> {
        if g.output_dim() != 1 || h.output_dim() != 1 {
            return Err(Error::Contract("g and h must each output one scalar".into()));
        }
        if g.input_dim() != spec.state_dim + spec.action_count || h.input_dim() != spec.state_dim {
            return Err(Error::Dimension {
                expected: vec![spec.state_dim + spec.action_count, spec.state_dim],
                got: vec![g.input_dim(), h.input_dim()],
            });
        }
        if gamma != spec.gamma {
            return Err(Error::Contract(format!(
                "discriminator gamma {gamma} differs from the environment's {}",
                spec.gamma
            )));
        }
        Ok(Discriminator {
            g,
            h,
            gamma,
            state_dim: spec.state_dim,
            action_count: spec.action_count,
        })
    }

    pub fn init(spec: MdpSpec, g_hidden: &[usize], h_hidden: &[usize], seed: u64) -> Result<Self> {
        let mut gd = vec![spec.state_dim + spec.action_count];
        gd.extend_from_slice(g_hidden);
        gd.push(1);
        let mut hd = vec![spec.state_dim];
        hd.extend_from_slice(h_hidden);
        hd.push(1);
        Discriminator::new(
            Mlp::new(&gd, seed)?,
            Mlp::new(&hd, seed.wrapping_add(1))?,
            spec.gamma,
            spec,
        )
    }

    pub fn spec(&self) -> MdpSpec {
        MdpSpec {
            state_dim: self.state_dim,
            action_count: self.action_count,
            gamma: self.gamma,
        }
    }

    pub fn g_input(&self, s: &[f64], a: usize) -> Result<Vec<f64>> {
        if s.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: vec![self.state_dim],
                got: vec![s.len()],
            });
        }
        if a >= self.action_count {
            return Err(Error::Contract(format!(
                "action {a} out of range 0..{}",
                self.action_count
            )));
        }
        let mut x = Vec::with_capacity(self.state_dim + self.action_count);
        x.extend_from_slice(s);
        x.extend(std::iter::repeat(0.0).take(self.action_count));
        x[self.state_dim + a] = 1.0;
        Ok(x)
    }

    pub fn g_value(&self, s: &[f64], a: usize) -> Result<f64> {
        Ok(self.g.forward_row(&self.g_input(s, a)?)?[0])
    }

    pub fn h_value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.h.forward_row(s)?[0])
    }

    /// `g(s,a) + γ·h(s') − h(s)`.
    pub fn f_value(&self, s: &[f64], a: usize, s_next: &[f64]) -> Result<f64> {
        if s_next.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: vec![self.state_dim],
                got: vec![s_next.len()],
            });
        }
        Ok(self.g_value(s, a)? + self.gamma * self.h_value(s_next)? - self.h_value(s)?)
    }

    /// `logit D(s,a,s') = f − log π(a|s)`.
    pub fn disc_logit(&self, s: &[f64], a: usize, s_next: &[f64], log_pi: f64) -> Result<f64> {
        logit_from_f(self.f_value(s, a, s_next)?, log_pi)
    }

    /// Novice reward `log D − log(1 − D)`.
    pub fn airl_reward(&self, s: &[f64], a: usize, s_next: &[f64], log_pi: f64) -> Result<f64> {
        self.disc_logit(s, a, s_next, log_pi)
    }

    /// `f` for every record, batched.
    pub fn f_batch(&self, records: &[TransitionRecord]) -> Result<Vec<f64>> {
        if records.is_empty() {
            return Ok(Vec::new());
        }
        let gx = records
            .iter()
            .map(|r| self.g_input(&r.s, r.a))
            .collect::<Result<Vec<_>>>()?;
        let g = self.g.forward(&Tensor::from_rows(&gx)?)?;
        let s: Vec<&[f64]> = records.iter().map(|r| r.s.as_slice()).collect();
        let sn: Vec<&[f64]> = records.iter().map(|r| r.s_next.as_slice()).collect();
        let hs = self.h.forward(&Tensor::from_rows(&s)?)?;
        let hn = self.h.forward(&Tensor::from_rows(&sn)?)?;
        Ok((0..records.len())
            .map(|i| g.data()[i] + self.gamma * hn.data()[i] - hs.data()[i])
            .collect())
    }
}

pub fn logit_from_f(f: f64, log_pi: f64) -> Result<f64> {
    if !f.is_finite() || !log_pi.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite discriminator input: f={f}, log π={log_pi}"
        )));
    }
    Ok(f - log_pi)
}

/// `D = σ(logit)`.
pub fn disc_probability(logit: f64) -> f64 {
    kernels::sigmoid(logit)
}

/// Expert (label 1) and novice (label 0) transitions, each with
/// `log π(a|s)` under the current novice policy.
#[derive(Clone, Debug, Default)]
pub struct AirlBatch {
    pub expert: Vec<TransitionRecord>,
    pub novice: Vec<TransitionRecord>,
    pub expert_log_pi: Vec<f64>,
    pub novice_log_pi: Vec<f64>,
}

impl AirlBatch {
    fn validate(&self) -> Result<()> {
        if self.expert.is_empty() || self.novice.is_empty() {
            return Err(Error::Contract(
                "discriminator batch needs both expert and novice transitions".into(),
            ));
        }
        if self.expert.len() != self.expert_log_pi.len() || self.novice.len() != self.novice_log_pi.len() {
            return Err(Error::Contract("one log π per transition required".into()));
        }
        Ok(())
    }

    fn records_and_labels(&self) -> (Vec<&TransitionRecord>, Vec<f64>, Vec<f64>) {
        let records = self.expert.iter().chain(&self.novice).collect();
        let log_pi = self
            .expert_log_pi
            .iter()
            .chain(&self.novice_log_pi)
            .copied()
            .collect();
        let labels = std::iter::repeat(1.0)
            .take(self.expert.len())
            .chain(std::iter::repeat(0.0).take(self.novice.len()))
            .collect();
        (records, log_pi, labels)
    }
}

/// Binary cross-entropy from a logit: `softplus(z) − y·z`.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    kernels::softplus(logit) - label * logit
}

/// Mean binary cross-entropy of `σ(logit)` against expert=1 / novice=0.
pub fn disc_loss(disc: &Discriminator, batch: &AirlBatch) -> Result<f64> {
    batch.validate()?;
    let (records, log_pi, labels) = batch.records_and_labels();
    let owned: Vec<TransitionRecord> = records.into_iter().cloned().collect();
    let f = disc.f_batch(&owned)?;
    let mut total = 0.0;
    for i in 0..f.len() {
        total += bce_with_logit(logit_from_f(f[i], log_pi[i])?, labels[i]);
    }
    Ok(total / f.len() as f64)
}

/// Gradients for `g` and `h`.
#[derive(Clone, Debug)]
pub struct DiscGradients {
    pub g: Gradients,
    pub h: Gradients,
}

/// Loss value and gradients of [`disc_loss`].
pub fn disc_loss_and_grad(disc: &Discriminator, batch: &AirlBatch) -> Result<(f64, DiscGradients)> {
    batch.validate()?;
    let (records, log_pi, labels) = batch.records_and_labels();
    if log_pi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite log π in discriminator batch".into()));
    }
    let n = records.len();
    let gx = records
        .iter()
        .map(|r| disc.g_input(&r.s, r.a))
        .collect::<Result<Vec<_>>>()?;
    let s: Vec<&[f64]> = records.iter().map(|r| r.s.as_slice()).collect();
    let sn: Vec<&[f64]> = records.iter().map(|r| r.s_next.as_slice()).collect();

    let mut tape = Tape::new();
    let gv = disc.g.bind(&mut tape);
    let hv = disc.h.bind(&mut tape);
    let gx = tape.leaf(Tensor::from_rows(&gx)?);
    let s = tape.leaf(Tensor::from_rows(&s)?);
    let sn = tape.leaf(Tensor::from_rows(&sn)?);
    let g_out = gv.forward(&mut tape, gx)?;
    let h_s = hv.forward(&mut tape, s)?;
    let h_sn = hv.forward(&mut tape, sn)?;
    let g_out = tape.reshape(g_out, &[n]);
    let h_s = tape.reshape(h_s, &[n]);
    let h_sn = tape.reshape(h_sn, &[n]);
    let shaped = tape.scale(h_sn, disc.gamma);
    let f = tape.add(g_out, shaped);
    let f = tape.sub(f, h_s);
    let lp = tape.leaf(Tensor::vector(log_pi));
    let z = tape.sub(f, lp);
    let sp = tape.softplus(z);
    let y = tape.leaf(Tensor::vector(labels));
    let yz = tape.mul(y, z);
    let per = tape.sub(sp, yz);
    let loss = tape.mean(per);
    let value = tape.scalar(loss);
    tape.backward(loss)?;
    Ok((
        value,
        DiscGradients {
            g: gv.gradients(&tape)?,
            h: hv.gradients(&tape)?,
        },
    ))
}

/// Fraction of transitions classified correctly with threshold `logit > 0` ⇒ expert.
pub fn disc_accuracy(
    disc: &Discriminator,
    positives: &[TransitionRecord],
    positive_log_pi: &[f64],
    negatives: &[TransitionRecord],
    negative_log_pi: &[f64],
) -> Result<f64> {
    let total = positives.len() + negatives.len();
    if total == 0 {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let fp = disc.f_batch(positives)?;
    let fn_ = disc.f_batch(negatives)?;
    let mut correct = 0usize;
    for (f, lp) in fp.iter().zip(positive_log_pi) {
        if logit_from_f(*f, *lp)? > 0.0 {
            correct += 1;
        }
    }
    for (f, lp) in fn_.iter().zip(negative_log_pi) {
        if logit_from_f(*f, *lp)? <= 0.0 {
            correct += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorCheckpoint {
    pub config_hash: String,
    pub gamma: f64,
    pub state_dim: usize,
    pub action_count: usize,
    pub g: MlpCheckpoint,
    pub h: MlpCheckpoint,
}

impl DiscriminatorCheckpoint {
    pub fn new(disc: &Discriminator, seed: u64, config_hash: &str) -> Self {
        DiscriminatorCheckpoint {
            config_hash: config_hash.to_string(),
            gamma: disc.gamma,
            state_dim: disc.state_dim,
            action_count: disc.action_count,
            g: MlpCheckpoint::from_mlp(&disc.g, seed),
            h: MlpCheckpoint::from_mlp(&disc.h, seed.wrapping_add(1)),
        }
    }

    pub fn to_discriminator(&self) -> Result<Discriminator> {
        let spec = MdpSpec::new(self.state_dim, self.action_count, self.gamma)?;
        Discriminator::new(self.g.to_mlp()?, self.h.to_mlp()?, self.gamma, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::{central_difference, relative_error};
    use crate::numkit::Layer;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn spec() -> MdpSpec {
        MdpSpec::new(3, 2, 0.9).unwrap()
    }

    /// g(s,a) = w·[s‖onehot(a)] + bg, h(s) = v·s + bh, single linear layers.
    fn linear_disc(w: [f64; 5], bg: f64, v: [f64; 3], bh: f64) -> Discriminator {
        let g = Mlp::from_layers(vec![Layer {
            weight: Tensor::new(vec![1, 5], w.to_vec()).unwrap(),
            bias: Tensor::vector(vec![bg]),
        }])
        .unwrap();
        let h = Mlp::from_layers(vec![Layer {
            weight: Tensor::new(vec![1, 3], v.to_vec()).unwrap(),
            bias: Tensor::vector(vec![bh]),
        }])
        .unwrap();
        Discriminator::new(g, h, 0.9, spec()).unwrap()
    }

    #[test]
    fn zero_networks_give_zero_f() {
        let d = linear_disc([0.0; 5], 0.0, [0.0; 3], 0.0);
        assert_eq!(d.f_value(&[1.0, 2.0, 3.0], 1, &[0.5, 0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn arithmetic_example() {
        // g ≡ 1, h(s') = 2, h(s) = 0.5 via h(x) = x₀
        let d = linear_disc([0.0; 5], 1.0, [1.0, 0.0, 0.0], 0.0);
        let f = d.f_value(&[0.5, 0.0, 0.0], 0, &[2.0, 0.0, 0.0]).unwrap();
        assert!((f - 2.3).abs() < 1e-15);
    }

    #[test]
    fn constant_h_shifts_f_uniformly() {
        let mut rng = rng_from_seed(4);
        for _ in 0..50 {
            let c: f64 = rng.gen_range(-5.0..5.0);
            let w = [0.3, -0.2, 0.8, 0.1, -0.4];
            let d = linear_disc(w, 0.2, [0.0; 3], c);
            let s = [rng.gen(), rng.gen(), rng.gen()];
            let sn = [rng.gen(), rng.gen(), rng.gen()];
            let f = d.f_value(&s, 1, &sn).unwrap();
            let g = d.g_value(&s, 1).unwrap();
            assert!((f - (g + c * (0.9 - 1.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_examples() {
        assert_eq!(logit_from_f(0.25f64.ln(), 0.25f64.ln()).unwrap(), 0.0);
        assert_eq!(disc_probability(logit_from_f(0.0, 0.0).unwrap()), 0.5);
        let z = logit_from_f(2.3, -1.386).unwrap();
        assert!((z - 3.686).abs() < 1e-12);
        // e^2.3 / (e^2.3 + 0.25) with π = e^−1.386
        let naive = 2.3f64.exp() / (2.3f64.exp() + (-1.386f64).exp());
        assert!((disc_probability(z) - naive).abs() < 1e-12);
        assert!((disc_probability(z) - 0.9756).abs() < 1e-4);
        assert!(logit_from_f(f64::NAN, 0.0).is_err());
        assert!(logit_from_f(0.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn reward_is_logit_and_monotone_in_disc() {
        let d = linear_disc([0.1, 0.2, 0.3, 0.4, 0.5], 0.0, [0.2, 0.1, 0.0], 0.0);
        let (s, sn) = ([0.1, 0.2, 0.3], [0.3, 0.2, 0.1]);
        let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in 0..40 {
            let log_pi = -0.1 * k as f64 - 0.01;
            let r = d.airl_reward(&s, 0, &sn, log_pi).unwrap();
            let p = disc_probability(d.disc_logit(&s, 0, &sn, log_pi).unwrap());
            assert!((r - (p / (1.0 - p)).ln()).abs() < 1e-9);
            // lowering log π raises D and the reward together
            assert!(p > last.0 && r > last.1);
            last = (p, r);
        }
    }

    fn batch_from(expert_logits: &[f64], novice_logits: &[f64]) -> (Discriminator, AirlBatch) {
        // zero networks: f = 0, so the logit is −log π
        let d = linear_disc([0.0; 5], 0.0, [0.0; 3], 0.0);
        let rec = TransitionRecord {
            s: vec![0.0; 3],
            a: 0,
            s_next: vec![0.0; 3],
        };
        let batch = AirlBatch {
            expert: vec![rec.clone(); expert_logits.len()],
            novice: vec![rec; novice_logits.len()],
            expert_log_pi: expert_logits.iter().map(|z| -z).collect(),
            novice_log_pi: novice_logits.iter().map(|z| -z).collect(),
        };
        (d, batch)
    }

    #[test]
    fn saturated_and_chance_losses() {
        let (d, b) = batch_from(&[20.0, 20.0], &[-20.0]);
        assert!(disc_loss(&d, &b).unwrap() < 1e-8);
        let (d, b) = batch_from(&[0.0, 0.0], &[0.0, 0.0]);
        assert!((disc_loss(&d, &b).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_hand_summed_cross_entropy() {
        let (d, b) = batch_from(&[0.3, -1.2, 2.5], &[0.7, -0.4]);
        let p = |z: f64| 1.0 / (1.0 + (-z).exp());
        let oracle = (-(p(0.3)).ln() - p(-1.2).ln() - p(2.5).ln() - (1.0 - p(0.7)).ln() - (1.0 - p(-0.4)).ln()) / 5.0;
        assert!((disc_loss(&d, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn single_class_batch_is_rejected() {
        let (d, b) = batch_from(&[1.0], &[]);
        assert!(matches!(disc_loss(&d, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let spec = MdpSpec::new(4, 3, 0.8).unwrap();
        let d = Discriminator::init(spec, &[5], &[4], 17).unwrap();
        let mut rng = rng_from_seed(2);
        let mut rec = || TransitionRecord {
            s: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            a: rng.gen_range(0..3),
            s_next: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let batch = AirlBatch {
            expert: (0..4).map(|_| rec()).collect(),
            novice: (0..3).map(|_| rec()).collect(),
            expert_log_pi: vec![-0.5, -1.0, -2.0, -0.1],
            novice_log_pi: vec![-1.5, -0.7, -3.0],
        };
        let (_, grads) = disc_loss_and_grad(&d, &batch).unwrap();
        let g_params = d.g.flat_params();
        let h_params = d.h.flat_params();
        let ng = central_difference(&g_params, 1e-5, |p| {
            let mut dd = d.clone();
            dd.g.set_flat_params(p).unwrap();
            disc_loss(&dd, &batch).unwrap()
        });
        let nh = central_difference(&h_params, 1e-5, |p| {
            let mut dd = d.clone();
            dd.h.set_flat_params(p).unwrap();
            disc_loss(&dd, &batch).unwrap()
        });
        assert!(relative_error(&grads.g.flat(), &ng) < 1e-6);
        assert!(relative_error(&grads.h.flat(), &nh) < 1e-6);
    }

    #[test]
    fn gamma_must_match_environment() {
        let g = Mlp::new(&[5, 1], 0).unwrap();
        let h = Mlp::new(&[3, 1], 0).unwrap();
        assert!(Discriminator::new(g.clone(), h.clone(), 0.5, spec()).is_err());
        assert!(Discriminator::new(g, Mlp::new(&[3, 2], 0).unwrap(), 0.9, spec()).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let d = Discriminator::init(spec(), &[4], &[4], 3).unwrap();
        let ck = DiscriminatorCheckpoint::new(&d, 3, "abc");
        let text = serde_json::to_string(&ck).unwrap();
        let back: DiscriminatorCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_discriminator().unwrap(), d);
    }
}

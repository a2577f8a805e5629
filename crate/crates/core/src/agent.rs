//! Per-node reinforcement-learning agent for joint band selection and
//! routing.
//!
//! Each node keeps a tabular value function over a compact state key
//! `(destination, message size bin, per-band availability mask)` and an
//! action space of `(next node, band)` pairs. Action selection is ε-greedy
//! with multiplicative decay floored at `epsilon_min`; the reward trades off
//! worst-case queuing delay at the next hop, transmission delay on the chosen
//! band, geographic progress toward the destination, channel availability,
//! and delivery bonuses, each squashed through `asinh` onto a common scale.

use rand::Rng;
use thiserror::Error;

use crate::radio::BandId;
use crate::scalar::{cast, Scalar};
use crate::{NodeId, Real};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid RL parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown destination index {dest} (have {known})")]
    UnknownDestination { dest: usize, known: usize },
    #[error("state encoding out of range: {0}")]
    Encoding(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Learning and reward-shaping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RlParams<F = Real> {
    pub alpha: F,
    pub gamma: F,
    pub epsilon0: F,
    pub epsilon_decay: F,
    pub epsilon_min: F,
    pub eta1: F,
    pub eta2: F,
    pub eta3: F,
    /// Reward for handing a packet to its destination.
    pub delta: F,
    /// Penalty applied whenever the next node is not the destination.
    pub mu: F,
    /// Weight coupling the delay/progress terms into the reward.
    pub rho: F,
}

impl<F: Scalar> Default for RlParams<F> {
    fn default() -> Self {
        Self {
            alpha: cast(0.2),
            gamma: cast(0.6),
            epsilon0: cast(1.0),
            epsilon_decay: cast(0.95),
            epsilon_min: cast(0.1),
            eta1: cast(2.0),
            eta2: cast(2.0),
            eta3: cast(2.0),
            delta: cast(10.0),
            mu: cast(2.5),
            rho: cast(1.0),
        }
    }
}

impl<F: Scalar> RlParams<F> {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.alpha > F::zero() && self.alpha <= F::one()) {
            return Err(AgentError::InvalidParameter(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= F::zero() && self.gamma <= F::one()) {
            return Err(AgentError::InvalidParameter(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.epsilon_min >= F::zero() && self.epsilon_min <= self.epsilon0) {
            return Err(AgentError::InvalidParameter(format!(
                "epsilon_min must be in [0, epsilon0], got {} vs {}",
                self.epsilon_min, self.epsilon0
            )));
        }
        if !(self.epsilon_decay > F::zero() && self.epsilon_decay < F::one()) {
            return Err(AgentError::InvalidParameter(format!(
                "epsilon_decay must be in (0, 1), got {}",
                self.epsilon_decay
            )));
        }
        for (name, v) in [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
            ("delta", self.delta),
            ("mu", self.mu),
            ("rho", self.rho),
        ] {
            if !v.is_finite() {
                return Err(AgentError::InvalidParameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// Dimensions of the per-node state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub num_destinations: usize,
    pub num_size_bins: usize,
    pub num_bands: usize,
}

impl StateSpace {
    pub fn num_states(&self) -> usize {
        self.num_destinations * self.num_size_bins * (1usize << self.num_bands)
    }

    /// Dense mixed-radix index:
    /// `dest * (bins * 2^bands) + size_bin * 2^bands + mask`.
    pub fn encode(&self, dest_idx: usize, size_bin: usize, band_mask: u32) -> Result<usize, AgentError> {
        if dest_idx >= self.num_destinations {
            return Err(AgentError::UnknownDestination {
                dest: dest_idx,
                known: self.num_destinations,
            });
        }
        if size_bin >= self.num_size_bins {
            return Err(AgentError::Encoding(format!(
                "size bin {size_bin} out of {}",
                self.num_size_bins
            )));
        }
        let mask_space = 1usize << self.num_bands;
        if band_mask as usize >= mask_space {
            return Err(AgentError::Encoding(format!(
                "band mask {band_mask:#b} needs more than {} bands",
                self.num_bands
            )));
        }
        Ok(dest_idx * self.num_size_bins * mask_space + size_bin * mask_space + band_mask as usize)
    }
}

/// A joint routing/band decision: forward to `next_node` over `band`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub next_node: NodeId,
    pub band: BandId,
}

/// Dense state × action value table, zero-initialized.
#[derive(Debug, Clone)]
pub struct QTable<F = Real> {
    num_states: usize,
    num_actions: usize,
    values: Vec<F>,
}

impl<F: Scalar> QTable<F> {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![F::zero(); num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn q(&self, state: usize, action: usize) -> F {
        self.values[state * self.num_actions + action]
    }

    /// Greatest value over the row, or zero for an empty action space.
    pub fn max_q(&self, state: usize) -> F {
        let row = &self.values[state * self.num_actions..(state + 1) * self.num_actions];
        if row.is_empty() {
            F::zero()
        } else {
            row.iter().copied().fold(F::neg_infinity(), F::max)
        }
    }

    /// Index of the best action; ties go to the lowest index.
    pub fn argmax(&self, state: usize) -> usize {
        let row = &self.values[state * self.num_actions..(state + 1) * self.num_actions];
        let mut best = 0;
        for (k, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = k;
            }
        }
        best
    }

    /// Temporal-difference update:
    /// `Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma * bootstrap)`.
    ///
    /// `bootstrap` is `max_a' Q(s', a')` of the successor state, or zero when
    /// the action delivered the packet (terminal).
    pub fn update(
        &mut self,
        state: usize,
        action: usize,
        reward: F,
        bootstrap: F,
        params: &RlParams<F>,
    ) -> Result<(), AgentError> {
        if !reward.is_finite() {
            return Err(AgentError::NonFinite("reward"));
        }
        let idx = state * self.num_actions + action;
        let old = self.values[idx];
        self.values[idx] =
            (F::one() - params.alpha) * old + params.alpha * (reward + params.gamma * bootstrap);
        Ok(())
    }
}

/// ε-greedy selection over the agent's action space.
///
/// Explores uniformly with probability `max(epsilon, epsilon_min)`, otherwise
/// exploits `argmax`. Returns `None` when the action space is empty (the
/// packet just waits). The caller applies the decay
/// `epsilon <- epsilon * epsilon_decay` once per packet decision.
pub fn select_action<F: Scalar>(
    q: &QTable<F>,
    state: usize,
    epsilon: F,
    params: &RlParams<F>,
    rng: &mut impl Rng,
) -> Option<usize> {
    if q.num_actions == 0 {
        return None;
    }
    let effective = epsilon.max(params.epsilon_min);
    let u: f64 = rng.gen();
    if u < effective.to_f64().unwrap_or(0.0) {
        Some(rng.gen_range(0..q.num_actions))
    } else {
        Some(q.argmax(state))
    }
}

/// Everything the reward needs to know about one decision.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<F = Real> {
    /// Packets queued at the next node, observed before enqueueing.
    pub next_queue_len: usize,
    /// Packet size in bits (`l`).
    pub packet_size_bits: F,
    /// Minimum bit rate across the catalog (`R_min`).
    pub min_bit_rate_bps: F,
    /// Bit rate of the chosen band (`R_b`).
    pub bit_rate_bps: F,
    /// Distance from the deciding node to the packet destination, meters.
    pub dist_self_to_dest_m: F,
    /// Distance from the chosen next node to the packet destination, meters.
    pub dist_next_to_dest_m: F,
    /// θ: the chosen next node is the packet's destination.
    pub next_is_destination: bool,
    /// φ: no common channel was available on the chosen band.
    pub channel_unavailable: bool,
}

/// Reward for one (next node, band) decision:
///
/// `R = eta1 asinh(-T_q) + delta (theta - phi) - mu (1 - theta)
///      + rho [eta2 asinh(-T_d) + eta3 asinh(T_r)]`
///
/// with `T_q = n_j l / R_min`, `T_d = l / R_b` and `T_r` the progress toward
/// the destination in kilometers.
pub fn compute_reward<F: Scalar>(
    ctx: &RewardContext<F>,
    params: &RlParams<F>,
) -> Result<F, AgentError> {
    if ctx.bit_rate_bps <= F::zero() || ctx.min_bit_rate_bps <= F::zero() {
        return Err(AgentError::InvalidParameter(
            "bit rates must be positive".into(),
        ));
    }
    let queue_delay = cast::<F>(ctx.next_queue_len as f64) * ctx.packet_size_bits
        / ctx.min_bit_rate_bps;
    let tx_delay = ctx.packet_size_bits / ctx.bit_rate_bps;
    let progress_km = (ctx.dist_self_to_dest_m - ctx.dist_next_to_dest_m) / cast(1000.0);
    let theta = if ctx.next_is_destination { F::one() } else { F::zero() };
    let phi = if ctx.channel_unavailable { F::one() } else { F::zero() };
    let reward = params.eta1 * (-queue_delay).asinh()
        + params.delta * (theta - phi)
        - params.mu * (F::one() - theta)
        + params.rho * (params.eta2 * (-tx_delay).asinh() + params.eta3 * progress_km.asinh());
    if !reward.is_finite() {
        return Err(AgentError::NonFinite("reward"));
    }
    Ok(reward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> RlParams<f64> {
        RlParams::default()
    }

    #[test]
    fn encode_follows_the_mixed_radix_formula() {
        let space = StateSpace {
            num_destinations: 3,
            num_size_bins: 4,
            num_bands: 4,
        };
        // dest 2, bin 1, mask 0b1011: 2*64 + 1*16 + 11.
        assert_eq!(space.encode(2, 1, 0b1011).unwrap(), 155);
        assert_eq!(space.encode(0, 0, 0).unwrap(), 0);
        assert_eq!(space.encode(0, 0, 0).unwrap(), space.encode(0, 0, 0).unwrap());
        assert_eq!(space.num_states(), 192);
        assert!(space.encode(3, 0, 0).is_err());
        assert!(space.encode(0, 4, 0).is_err());
        assert!(space.encode(0, 0, 16).is_err());
    }

    #[test]
    fn encoding_is_a_bijection_onto_the_dense_range() {
        let space = StateSpace {
            num_destinations: 3,
            num_size_bins: 4,
            num_bands: 4,
        };
        let mut seen = vec![false; space.num_states()];
        for d in 0..3 {
            for b in 0..4 {
                for m in 0..16u32 {
                    let idx = space.encode(d, b, m).unwrap();
                    assert!(idx < space.num_states());
                    assert!(!seen[idx], "collision at {idx}");
                    seen[idx] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn exploitation_takes_the_argmax_with_low_index_ties() {
        let mut q = QTable::<f64>::new(1, 3);
        q.update(0, 1, 5.0, 0.0, &RlParams { alpha: 1.0, gamma: 0.0, ..params() })
            .unwrap();
        q.update(0, 2, 3.0, 0.0, &RlParams { alpha: 1.0, gamma: 0.0, ..params() })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zero_eps = RlParams { epsilon_min: 0.0, ..params() };
        for _ in 0..100 {
            assert_eq!(select_action(&q, 0, 0.0, &zero_eps, &mut rng), Some(1));
        }
        // All-equal row: lowest index wins.
        let tie = QTable::<f64>::new(1, 4);
        assert_eq!(tie.argmax(0), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = QTable::<f64>::new(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            let a = select_action(&q, 0, 1.0, &params(), &mut rng).unwrap();
            counts[a] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn decay_floors_at_epsilon_min() {
        let p = params();
        let mut eps = p.epsilon0;
        for _ in 0..50 {
            eps *= p.epsilon_decay;
        }
        assert!((eps - 0.0769).abs() < 1e-3, "0.95^50 = {eps}");
        assert_eq!(eps.max(p.epsilon_min), 0.1);
    }

    #[test]
    fn empty_action_space_yields_no_route() {
        let q = QTable::<f64>::new(4, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_action(&q, 0, 1.0, &params(), &mut rng), None);
    }

    fn ctx() -> RewardContext<f64> {
        RewardContext {
            next_queue_len: 0,
            packet_size_bits: 5e6,
            min_bit_rate_bps: 12.344239e6,
            bit_rate_bps: 82.294928e6,
            dist_self_to_dest_m: 0.0,
            dist_next_to_dest_m: 0.0,
            next_is_destination: false,
            channel_unavailable: false,
        }
    }

    #[test]
    fn reward_for_delivery_is_delta() {
        // All delay/progress terms vanish in the limit of a free channel,
        // empty next queue and zero residual distance.
        let c = RewardContext {
            next_is_destination: true,
            bit_rate_bps: f64::INFINITY,
            ..ctx()
        };
        // Infinite rate gives T_d = 0 exactly.
        let r = compute_reward(&c, &params()).unwrap();
        assert!((r - 10.0).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn reward_for_unavailable_channel_is_minus_delta_minus_mu() {
        let c = RewardContext {
            channel_unavailable: true,
            bit_rate_bps: f64::INFINITY,
            ..ctx()
        };
        let r = compute_reward(&c, &params()).unwrap();
        assert!((r + 12.5).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn reward_matches_hand_evaluated_example() {
        // Two packets queued at j (T_q = 2*5/12.344239 = 0.8101 s), CBRS
        // transmission (T_d = 0.06076 s), +0.5 km of progress.
        let c = RewardContext {
            next_queue_len: 2,
            dist_self_to_dest_m: 1500.0,
            dist_next_to_dest_m: 1000.0,
            ..ctx()
        };
        let r = compute_reward(&c, &params()).unwrap();
        assert!((r - (-3.1401)).abs() < 1e-4, "got {r}");
    }

    #[test]
    fn reward_matches_independent_oracle_over_random_inputs() {
        // Independently coded expression of the same reward, term by term.
        fn oracle(c: &RewardContext<f64>, p: &RlParams<f64>) -> f64 {
            let asinh = |x: f64| (x + (x * x + 1.0).sqrt()).ln();
            let tq = c.next_queue_len as f64 * c.packet_size_bits / c.min_bit_rate_bps;
            let td = c.packet_size_bits / c.bit_rate_bps;
            let tr = (c.dist_self_to_dest_m - c.dist_next_to_dest_m) / 1000.0;
            let th = c.next_is_destination as u8 as f64;
            let ph = c.channel_unavailable as u8 as f64;
            p.eta1 * asinh(-tq) + p.delta * (th - ph) - p.mu * (1.0 - th)
                + p.rho * (p.eta2 * asinh(-td) + p.eta3 * asinh(tr))
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let p = params();
        for _ in 0..10_000 {
            let c = RewardContext {
                next_queue_len: rng.gen_range(0..250),
                packet_size_bits: rng.gen_range(1e5..1e7),
                min_bit_rate_bps: rng.gen_range(1e6..2e7),
                bit_rate_bps: rng.gen_range(1e6..1e8),
                dist_self_to_dest_m: rng.gen_range(0.0..3000.0),
                dist_next_to_dest_m: rng.gen_range(0.0..3000.0),
                next_is_destination: rng.gen(),
                channel_unavailable: rng.gen(),
            };
            let got = compute_reward(&c, &p).unwrap();
            let want = oracle(&c, &p);
            assert!((got - want).abs() < 1e-9, "got {got} want {want}");
        }
    }

    #[test]
    fn reward_monotone_in_queue_and_progress() {
        let p = params();
        let base = compute_reward(&ctx(), &p).unwrap();
        let more_queue = compute_reward(
            &RewardContext {
                next_queue_len: 5,
                ..ctx()
            },
            &p,
        )
        .unwrap();
        assert!(more_queue < base);
        let more_progress = compute_reward(
            &RewardContext {
                dist_self_to_dest_m: 2500.0,
                dist_next_to_dest_m: 100.0,
                ..ctx()
            },
            &p,
        )
        .unwrap();
        assert!(more_progress > base);
    }

    #[test]
    fn reward_rejects_nonpositive_rate() {
        let c = RewardContext {
            bit_rate_bps: 0.0,
            ..ctx()
        };
        assert!(compute_reward(&c, &params()).is_err());
    }

    #[test]
    fn q_update_matches_hand_arithmetic() {
        let p = params();
        let mut q = QTable::<f64>::new(1, 1);
        // (1 - 0.2)*0 + 0.2*(10 + 0.6*3) = 2.36
        q.update(0, 0, 10.0, 3.0, &p).unwrap();
        assert!((q.q(0, 0) - 2.36).abs() < 1e-12);

        // Zero reward on a zero table is a fixed point.
        let mut fixed = QTable::<f64>::new(1, 1);
        fixed.update(0, 0, 0.0, 0.0, &p).unwrap();
        assert_eq!(fixed.q(0, 0), 0.0);

        // alpha = 1 erases the old value.
        let full = RlParams { alpha: 1.0, ..p };
        let mut q2 = QTable::<f64>::new(1, 1);
        q2.update(0, 0, 7.0, 0.0, &full).unwrap();
        q2.update(0, 0, -4.0, 2.0, &full).unwrap();
        assert!((q2.q(0, 0) - (-4.0 + 0.6 * 2.0)).abs() < 1e-12);

        assert!(q2.update(0, 0, f64::NAN, 0.0, &p).is_err());
    }

    #[test]
    fn q_values_stay_bounded_by_reward_scale() {
        // With |r| <= r_max every Q stays within r_max / (1 - gamma).
        let p = params();
        let r_max = 12.5;
        let bound = r_max / (1.0 - p.gamma) + 1e-9;
        let mut q = QTable::<f64>::new(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50_000 {
            let s = rng.gen_range(0..4);
            let a = rng.gen_range(0..3);
            let s2 = rng.gen_range(0..4);
            let r = rng.gen_range(-r_max..r_max);
            let bootstrap = q.max_q(s2);
            q.update(s, a, r, bootstrap, &p).unwrap();
            assert!(q.q(s, a).abs() <= bound);
        }
    }

    #[test]
    fn argmax_invariant_under_constant_shift() {
        let p = RlParams { alpha: 1.0, gamma: 0.0, ..params() };
        let mut q = QTable::<f64>::new(1, 5);
        let mut shifted = QTable::<f64>::new(1, 5);
        let values = [0.3, -1.2, 4.0, 4.0, 0.0];
        for (a, &v) in values.iter().enumerate() {
            q.update(0, a, v, 0.0, &p).unwrap();
            shifted.update(0, a, v + 123.456, 0.0, &p).unwrap();
        }
        assert_eq!(q.argmax(0), shifted.argmax(0));
    }
}

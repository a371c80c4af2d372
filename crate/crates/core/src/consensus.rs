//! Event-triggered dynamic average consensus.
//!
//! Each node runs a continuous integrator that tracks the network average of
//! the information vectors while neighbors only communicate at trigger
//! events, plus a discrete matrix-consensus protocol that averages the
//! information matrices at those same events.
//!
//! The continuous part per node i:
//!
//! ```text
//! p_i' = -k1 p_i + k2 * sum_{j in N_i} (zhat_i(t) - zhat_j(tau_j))
//! zhat_i = z_i - p_i
//! ```
//!
//! where `zhat_j(tau_j)` is the last value neighbor j broadcast. A node
//! broadcasts when `|zhat_i - last broadcast| >= delta_i` and at least the
//! regularization time has elapsed since its previous event.
//!
//! The matrix part replaces, at a node-i event, the value at i and at every
//! neighbor by the arithmetic mean of their current values. That update is a
//! convex combination, so the network sum is invariant and the entrywise hull
//! contracts; repeated events drive every node to the initial average.

use nalgebra::{DMatrix, DVector};

use crate::graph::Graph;

/// Gains and trigger parameters of the consensus layer.
#[derive(Debug, Clone)]
pub struct ConsensusConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Per-node trigger thresholds. Zero degenerates to broadcasting at
    /// every admissible step.
    pub delta: Vec<f64>,
    /// Minimum time between consecutive events of one node.
    pub tau_min: f64,
}

/// Minimum admissible inter-event gap in whole steps.
///
/// The trigger's infimum semantics admit an event exactly when the elapsed
/// time reaches `tau_min`, so `tau_min = h` allows consecutive-step events;
/// the epsilon guards against an off-by-one from inexact division.
pub fn tau_min_steps(tau_min: f64, h: f64) -> u64 {
    ((tau_min / h) - 1e-9).ceil().max(1.0) as u64
}

/// One node's live protocol state.
#[derive(Debug, Clone)]
pub struct NodeState {
    /// Auxiliary integrator variable.
    pub p: DVector<f64>,
    /// Estimate of the average information vector; identically `z_local - p`.
    pub z_hat: DVector<f64>,
    /// Estimate of the average information matrix; piecewise constant.
    pub z_hat_mat: DMatrix<f64>,
    /// Value transmitted at this node's most recent event (or the t = 0 seed).
    pub last_broadcast_z: DVector<f64>,
    /// Step index of the most recent event (0 for the t = 0 seed).
    pub last_event_step: u64,
    /// Number of triggered events, excluding the t = 0 seed.
    pub event_count: u64,
}

impl NodeState {
    /// Initial state: `p = 0`, so `zhat` starts at the local information
    /// vector, and the matrix estimate starts at the local information
    /// matrix. The initial value counts as broadcast (the t = 0 seed).
    pub fn new(z_local: DVector<f64>, info_matrix: DMatrix<f64>) -> Self {
        let n = z_local.len();
        Self {
            p: DVector::zeros(n),
            z_hat: z_local.clone(),
            z_hat_mat: info_matrix,
            last_broadcast_z: z_local,
            last_event_step: 0,
            event_count: 0,
        }
    }

    /// Drift of `zhat` away from the last broadcast value.
    pub fn broadcast_deviation(&self) -> f64 {
        (&self.z_hat - &self.last_broadcast_z).norm()
    }
}

/// Trigger test at grid step `step`: enough time elapsed since the node's
/// last event AND the deviation from the last broadcast reached `delta_i`
/// (inclusive).
pub fn check_trigger(node: &NodeState, step: u64, delta_i: f64, min_gap_steps: u64) -> bool {
    step - node.last_event_step >= min_gap_steps && node.broadcast_deviation() >= delta_i
}

/// One Euler step of the continuous consensus dynamics.
///
/// `neighbor_broadcasts` must yield the latched last-transmitted values of
/// all neighbors, in ascending node order; `z_local_next` is the node's
/// local information vector at the end of the step, which re-establishes the
/// `zhat = z_local - p` identity exactly.
pub fn step_consensus<'a>(
    node: &mut NodeState,
    z_local_next: &DVector<f64>,
    neighbor_broadcasts: impl Iterator<Item = &'a DVector<f64>> + Clone,
    kappa1: f64,
    kappa2: f64,
    h: f64,
) {
    debug_assert!(h > 0.0);
    let n = node.p.len();
    for c in 0..n {
        let mut coupling = 0.0;
        for b in neighbor_broadcasts.clone() {
            coupling += node.z_hat[c] - b[c];
        }
        node.p[c] += h * (-kappa1 * node.p[c] + kappa2 * coupling);
    }
    node.z_hat.copy_from(z_local_next);
    node.z_hat -= &node.p;
}

/// The averaging update a node applies to its matrix estimate at its own
/// event: the mean of its value and all neighbors' current values. With no
/// neighbors the value is returned unchanged.
pub fn on_event_update_z<'a>(
    own: &DMatrix<f64>,
    neighbor_values: impl Iterator<Item = &'a DMatrix<f64>>,
) -> DMatrix<f64> {
    let mut acc = own.clone();
    let mut count = 1usize;
    for z in neighbor_values {
        acc += z;
        count += 1;
    }
    acc / count as f64
}

/// Full matrix-consensus event at node `i`: pull neighbors' estimates,
/// average, and push the result back so node `i` and every neighbor hold the
/// same matrix afterwards.
pub fn apply_z_event(states: &mut [NodeState], graph: &Graph, i: usize) {
    let neighbors = graph.neighbors(i).expect("node index in range");
    let averaged = on_event_update_z(
        &states[i].z_hat_mat,
        neighbors.iter().map(|&j| &states[j].z_hat_mat),
    );
    for &j in neighbors {
        states[j].z_hat_mat.copy_from(&averaged);
    }
    states[i].z_hat_mat = averaged;
}

/// One event-log entry. `index` 0 is the implicit t = 0 seed that
/// initializes neighbors; triggered events count from 1.
#[derive(Debug, Clone)]
pub struct EventRecord {
    pub t: f64,
    pub step: u64,
    /// 0-based node index; written 1-based to logs.
    pub node: usize,
    pub index: u64,
    /// Broadcast payload, kept only when payload recording is on.
    pub payload: Option<BroadcastPayload>,
}

/// The values transmitted at an event.
#[derive(Debug, Clone)]
pub struct BroadcastPayload {
    pub z: DVector<f64>,
    pub z_mat: DMatrix<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators;
    use approx::assert_abs_diff_eq;
    use rand::RngCore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec4(a: f64, b: f64, c: f64, d: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c, d])
    }

    #[test]
    fn trigger_false_below_threshold() {
        let mut node = NodeState::new(vec4(0.0, 0.0, 0.0, 0.0), DMatrix::zeros(4, 4));
        node.z_hat = vec4(0.99, 0.0, 0.0, 0.0);
        // Deviation 0.99 against delta = 1, plenty of elapsed steps.
        assert!(!check_trigger(&node, 100, 1.0, 1));
    }

    #[test]
    fn trigger_true_at_exact_threshold() {
        let mut node = NodeState::new(vec4(0.0, 0.0, 0.0, 0.0), DMatrix::zeros(4, 4));
        node.z_hat = vec4(1.0, 0.0, 0.0, 0.0);
        assert!(check_trigger(&node, 100, 1.0, 1));
    }

    #[test]
    fn trigger_blocked_by_time_regularization() {
        let mut node = NodeState::new(vec4(0.0, 0.0, 0.0, 0.0), DMatrix::zeros(4, 4));
        node.z_hat = vec4(10.0, 0.0, 0.0, 0.0);
        node.last_event_step = 95;
        // Gap of 5 steps against a 10-step regularization window.
        assert!(!check_trigger(&node, 100, 1.0, 10));
    }

    #[test]
    fn tau_min_steps_handles_exact_multiples() {
        let h = 1e-4;
        assert_eq!(tau_min_steps(h, h), 1);
        assert_eq!(tau_min_steps(5.0 * h, h), 5);
        assert_eq!(tau_min_steps(2.5 * h, h), 3);
    }

    #[test]
    fn isolated_node_keeps_p_at_exact_zero() {
        // With no neighbors the integrator has no drive, so zhat tracks the
        // local signal bitwise.
        let mut node = NodeState::new(vec4(1.0, 2.0, 3.0, 4.0), DMatrix::zeros(4, 4));
        let empty: Vec<DVector<f64>> = Vec::new();
        for k in 1..=1000 {
            let z = vec4(k as f64, (k as f64).sin(), -1.0, 0.5 * k as f64);
            step_consensus(&mut node, &z, empty.iter(), 0.5, 20.0, 1e-3);
            assert!(node.p.iter().all(|&v| v == 0.0));
            assert_eq!(node.z_hat, z);
        }
    }

    #[test]
    fn agreeing_broadcasts_leave_p_at_zero() {
        let z = vec4(1.0, -1.0, 0.0, 2.0);
        let mut node = NodeState::new(z.clone(), DMatrix::zeros(4, 4));
        let broadcasts = [z.clone(), z.clone()];
        step_consensus(&mut node, &z, broadcasts.iter(), 0.5, 20.0, 1e-3);
        assert!(node.p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zhat_identity_holds_at_every_step() {
        // zhat + p recovers the local signal to machine precision no matter
        // how the coupling drives the integrator.
        let mut node = NodeState::new(vec4(3.0, -1.0, 0.5, 0.0), DMatrix::zeros(4, 4));
        let broadcasts = [vec4(10.0, 0.0, -5.0, 2.0), vec4(-3.0, 7.0, 1.0, 0.0)];
        for k in 1..=500 {
            let t = k as f64 * 1e-3;
            let z = vec4((3.0 * t).sin() * 40.0, t, -t * t, (0.5 * t).cos());
            step_consensus(&mut node, &z, broadcasts.iter(), 0.5, 20.0, 1e-3);
            let recovered = &node.z_hat + &node.p;
            assert!((recovered - &z).norm() <= 1e-12 * z.norm().max(1.0));
        }
    }

    #[test]
    fn two_node_consensus_matches_dense_ode_oracle() {
        // Constant signals z1 = 0, z2 = 1 with broadcasts every step. The
        // oracle integrates the ideal (no-latch) coupled ODE ten times finer.
        let kappa1 = 0.5;
        let kappa2 = 20.0;
        let h = 1e-3;
        let t_final = 20.0f64;
        let steps = (t_final / h).round() as usize;

        let z1 = DVector::from_vec(vec![0.0]);
        let z2 = DVector::from_vec(vec![1.0]);
        let mut nodes = [
            NodeState::new(z1.clone(), DMatrix::zeros(1, 1)),
            NodeState::new(z2.clone(), DMatrix::zeros(1, 1)),
        ];
        let mut latched = [nodes[0].z_hat.clone(), nodes[1].z_hat.clone()];
        for _ in 0..steps {
            let previous = latched.clone();
            step_consensus(&mut nodes[0], &z1, std::slice::from_ref(&previous[1]).iter(), kappa1, kappa2, h);
            step_consensus(&mut nodes[1], &z2, std::slice::from_ref(&previous[0]).iter(), kappa1, kappa2, h);
            latched = [nodes[0].z_hat.clone(), nodes[1].z_hat.clone()];
        }

        // Oracle: p1' = -k1 p1 + k2 (zh1 - zh2), p2' symmetric, no latch.
        let oracle_h = h / 10.0;
        let oracle_steps = (t_final / oracle_h).round() as usize;
        let (mut p1, mut p2) = (0.0f64, 0.0f64);
        for _ in 0..oracle_steps {
            let zh1 = 0.0 - p1;
            let zh2 = 1.0 - p2;
            let d1 = -kappa1 * p1 + kappa2 * (zh1 - zh2);
            let d2 = -kappa1 * p2 + kappa2 * (zh2 - zh1);
            p1 += oracle_h * d1;
            p2 += oracle_h * d2;
        }
        let oracle_zh1 = 0.0 - p1;
        let oracle_zh2 = 1.0 - p2;

        assert_abs_diff_eq!(nodes[0].z_hat[0], oracle_zh1, epsilon = 1e-4);
        assert_abs_diff_eq!(nodes[1].z_hat[0], oracle_zh2, epsilon = 1e-4);
        // Both estimates sit near the true average 1/2, offset by the
        // kappa1-induced bias kappa2/(kappa1 + 2 kappa2) from it.
        assert!((nodes[0].z_hat[0] - 0.5).abs() < 0.05);
        assert!((nodes[1].z_hat[0] - 0.5).abs() < 0.05);
        assert_abs_diff_eq!(nodes[0].z_hat[0], 20.0 / 40.5, epsilon = 1e-4);
    }

    #[test]
    fn event_update_is_the_local_mean() {
        let own = DMatrix::from_element(1, 1, 2.0);
        let neighbors = [DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 3.0)];
        let updated = on_event_update_z(&own, neighbors.iter());
        assert_eq!(updated[(0, 0)], 2.0);
        // Sum over the three participants is unchanged: 2+1+3 = 3 * 2.
    }

    #[test]
    fn event_update_with_no_neighbors_is_identity() {
        let own = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let updated = on_event_update_z(&own, std::iter::empty());
        assert_eq!(updated, own);
    }

    #[test]
    fn event_update_fixed_point_on_agreement() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let neighbors = [m.clone(), m.clone(), m.clone()];
        let updated = on_event_update_z(&m, neighbors.iter());
        assert!((updated - m).norm() < 1e-15);
    }

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| (rng.next_u64() as f64 / u64::MAX as f64) - 0.5);
        &g * g.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn repeated_events_converge_to_the_initial_average() {
        let graph = generators::ring(5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut states: Vec<NodeState> = (0..5)
            .map(|_| NodeState::new(DVector::zeros(3), random_psd(3, &mut rng)))
            .collect();
        let mut initial_sum = DMatrix::zeros(3, 3);
        for s in &states {
            initial_sum += &s.z_hat_mat;
        }
        let target = initial_sum / 5.0;

        // 200 events round-robin.
        for k in 0..200 {
            apply_z_event(&mut states, &graph, k % 5);
        }
        for s in &states {
            let err = (&s.z_hat_mat - &target).abs().max();
            assert!(err < 1e-6, "entrywise error {err} after 200 events");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        /// Sum invariance, hull contraction, and symmetry preservation of the
        /// matrix protocol over random connected graphs and event orders.
        #[test]
        fn z_protocol_invariants(
            seed in 0u64..1000,
            n in 3usize..8,
            events in proptest::collection::vec(0usize..8, 10..120),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let graph = generators::ring(n); // connected by construction
            let dim = 2;
            let mut states: Vec<NodeState> = (0..n)
                .map(|_| NodeState::new(DVector::zeros(dim), random_psd(dim, &mut rng)))
                .collect();

            let sum_of = |states: &[NodeState]| {
                let mut acc = DMatrix::zeros(dim, dim);
                for s in states {
                    acc += &s.z_hat_mat;
                }
                acc
            };
            let entry_minmax = |states: &[NodeState], r: usize, c: usize| {
                let vals: Vec<f64> = states.iter().map(|s| s.z_hat_mat[(r, c)]).collect();
                (vals.iter().cloned().fold(f64::INFINITY, f64::min),
                 vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            };

            let initial_sum = sum_of(&states);
            let scale = initial_sum.norm().max(1.0);
            let average = &initial_sum / n as f64;
            let mut hulls: Vec<(f64, f64)> = (0..dim * dim)
                .map(|k| entry_minmax(&states, k / dim, k % dim))
                .collect();
            let worst_distance = |states: &[NodeState]| {
                states
                    .iter()
                    .map(|s| (&s.z_hat_mat - &average).norm())
                    .fold(0.0f64, f64::max)
            };
            let mut prev_worst = worst_distance(&states);

            for &e in &events {
                let i = e % n;
                apply_z_event(&mut states, &graph, i);
                let sum = sum_of(&states);
                proptest::prop_assert!((sum - &initial_sum).norm() <= 1e-10 * scale);
                for (k, hull) in hulls.iter_mut().enumerate() {
                    let (lo, hi) = entry_minmax(&states, k / dim, k % dim);
                    let (prev_lo, prev_hi) = *hull;
                    proptest::prop_assert!(lo >= prev_lo - 1e-12 * scale);
                    proptest::prop_assert!(hi <= prev_hi + 1e-12 * scale);
                    *hull = (lo, hi);
                }
                // Each event averages a convex patch, so the worst distance
                // to the invariant network average cannot grow.
                let worst = worst_distance(&states);
                proptest::prop_assert!(worst <= prev_worst + 1e-12 * scale);
                prev_worst = worst;
                for s in &states {
                    proptest::prop_assert!(crate::linalg::asymmetry(&s.z_hat_mat) < 1e-12);
                }
            }
        }
    }
}

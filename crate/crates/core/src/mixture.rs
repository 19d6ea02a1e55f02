//! Expectation-maximization for recursively interpolated estimates.
//!
//! A nested estimate is `P_k = λ_k·p̂_k + (1 − λ_k)·P_{k−1}` on top of a fixed
//! base `P_0`. Unrolled, it is a mixture whose component `k` has weight
//! `λ_k·Π_{j>k}(1 − λ_j)`, so each held-out observation splits its posterior
//! across the levels and every λ is re-estimated as the posterior mass that
//! chose its level over the mass that reached it.

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
/// Ceiling on every λ. A weight of exactly 1 would give zero probability to
/// anything the higher level never saw, which held-out data of a few hundred
/// sentences cannot rule out.
pub const MAX_LAMBDA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct NestedEvent {
    pub weight: f64,
    pub base: f64,
    /// `(parameter index, p̂_k)` from the lowest interpolated level upward.
    pub levels: Vec<(usize, f64)>,
}

impl NestedEvent {
    pub fn prob(&self, lambdas: &[f64]) -> f64 {
        self.levels
            .iter()
            .fold(self.base, |p, &(i, ph)| lambdas[i] * ph + (1.0 - lambdas[i]) * p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    pub lambdas: Vec<f64>,
    /// Weighted log-likelihood before the first step and after every step.
    pub log_likelihoods: Vec<f64>,
}

impl EmOutcome {
    pub fn iterations(&self) -> usize {
        self.log_likelihoods.len() - 1
    }
}

pub fn log_likelihood(events: &[NestedEvent], lambdas: &[f64]) -> f64 {
    events.iter().map(|e| e.weight * e.prob(lambdas).ln()).sum()
}

/// One EM update.
pub fn em_step(events: &[NestedEvent], lambdas: &[f64]) -> Vec<f64> {
    let mut select = vec![0.0; lambdas.len()];
    let mut reach = vec![0.0; lambdas.len()];
    let mut contrib = Vec::new();
    for e in events {
        let n = e.levels.len();
        contrib.clear();
        contrib.resize(n + 1, 0.0);
        let mut carry = 1.0;
        for k in (0..n).rev() {
            let (i, ph) = e.levels[k];
            contrib[k + 1] = carry * lambdas[i] * ph;
            carry *= 1.0 - lambdas[i];
        }
        contrib[0] = carry * e.base;
        let total: f64 = contrib.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let mut below = contrib[0] / total;
        for k in 0..n {
            let i = e.levels[k].0;
            let post = contrib[k + 1] / total;
            below += post;
            select[i] += e.weight * post;
            reach[i] += e.weight * below;
        }
    }
    lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| if reach[i] > 0.0 { (select[i] / reach[i]).clamp(0.0, MAX_LAMBDA) } else { l })
        .collect()
}

pub fn fit(events: &[NestedEvent], init: Vec<f64>, tolerance: f64, max_iterations: usize) -> EmOutcome {
    let mut lambdas = init;
    let mut history = vec![log_likelihood(events, &lambdas)];
    for _ in 0..max_iterations {
        let next = em_step(events, &lambdas);
        let ll = log_likelihood(events, &next);
        let prev = *history.last().unwrap();
        if ll < prev {
            // numerically flat optimum; keep the better point
            break;
        }
        lambdas = next;
        history.push(ll);
        if ll - prev < tolerance {
            break;
        }
    }
    EmOutcome {
        lambdas,
        log_likelihoods: history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(base: f64, levels: &[(usize, f64)]) -> NestedEvent {
        NestedEvent {
            weight: 1.0,
            base,
            levels: levels.to_vec(),
        }
    }

    #[test]
    fn nested_prob_matches_hand_interpolation() {
        let e = ev(0.4, &[(0, 0.25), (1, 0.25)]);
        assert!((e.prob(&[0.5, 0.5]) - 0.2875).abs() < 1e-15);
        assert!((e.prob(&[0.5, 0.0]) - 0.325).abs() < 1e-15);
        assert_eq!(e.prob(&[0.0, 0.0]), 0.4);
    }

    #[test]
    fn useless_level_goes_to_zero_in_one_step() {
        let events = vec![ev(0.2, &[(0, 0.0)]), ev(0.3, &[(0, 0.0)])];
        assert_eq!(em_step(&events, &[0.5]), vec![0.0]);
    }

    #[test]
    fn perfect_level_stops_at_ceiling() {
        let events = vec![ev(0.2, &[(0, 1.0)]); 3];
        let out = fit(&events, vec![0.5], 1e-12, 1000);
        assert_eq!(out.lambdas[0], MAX_LAMBDA);
        for w in out.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn two_component_mixture_recovers_weight() {
        // data drawn 30/70 between two disjoint distributions
        let mut events = Vec::new();
        for _ in 0..30 {
            events.push(ev(0.0, &[(0, 0.5)]));
        }
        for _ in 0..70 {
            events.push(NestedEvent {
                weight: 1.0,
                base: 0.5,
                levels: vec![(0, 0.0)],
            });
        }
        let out = fit(&events, vec![0.5], 1e-12, 1000);
        assert!((out.lambdas[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn likelihood_never_decreases() {
        let events = vec![
            ev(0.1, &[(0, 0.6), (1, 0.2)]),
            ev(0.3, &[(0, 0.1), (1, 0.9)]),
            ev(0.5, &[(0, 0.5)]),
            ev(0.05, &[(0, 0.0), (1, 0.7)]),
        ];
        let out = fit(&events, vec![0.5, 0.5], 0.0, 50);
        for w in out.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }
}

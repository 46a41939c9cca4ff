//! Best-of-n extraction of a deterministic design batch from a learned
//! design law.
//!
//! A particle flow ends with a *measure* over design batches; what an
//! experimenter needs is one batch. The extractor samples a finite candidate
//! set from the measure (or reuses retained trajectory iterates), screens
//! all candidates with a cheap low-fidelity criterion, rescored the
//! shortlist at high fidelity, and returns the arg-max — ties broken by the
//! lowest candidate index. Under exact scoring the probability that the
//! returned batch lands in any target set A after `n` candidate draws is
//! exactly `1 − (1 − ν(A))^n`, which [`bon_success_probability`] computes
//! and the tests validate empirically.

use rand::Rng;

use crate::constraint::ConstraintSpec;
use crate::design::{DesignBatch, ParticleEnsemble};
use crate::eig::{EigEstimate, EigOracle};
use crate::error::{Error, Result};
use crate::flows::{Flow, FlowRun, StateKind, TailEntry};
use crate::stream::{substream, Purpose};

/// Where a candidate set came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    /// Post-burn-in iterates of joint chains.
    TrajectoryTail { burn_fraction: f64 },
    /// Batches of m independent draws from a shared marginal ensemble.
    IidSampled { n: usize },
    /// Batches with one particle drawn per coordinate ensemble.
    CoordinateSampled { n: usize },
    /// The particle population itself, one candidate per particle/chain.
    ParticlePopulation,
}

/// A nonempty set of feasible candidate batches.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub candidates: Vec<DesignBatch>,
    pub provenance: Provenance,
}

impl CandidateSet {
    pub fn new(candidates: Vec<DesignBatch>, provenance: Provenance) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok(Self {
            candidates,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Wrap retained joint-chain iterates.
    pub fn from_tail(tail: &[TailEntry], burn_fraction: f64) -> Result<Self> {
        Self::new(
            tail.iter().map(|e| e.batch.clone()).collect(),
            Provenance::TrajectoryTail { burn_fraction },
        )
    }

    /// One candidate per chain/particle, as-is.
    pub fn population(batches: &[DesignBatch]) -> Result<Self> {
        Self::new(batches.to_vec(), Provenance::ParticlePopulation)
    }

    /// `n` batches of `m` particles drawn i.i.d. (uniformly, with
    /// replacement) from a shared ensemble, each repaired to feasibility.
    pub fn sample_iid(
        ensemble: &ParticleEnsemble,
        m: usize,
        n: usize,
        constraint: &ConstraintSpec,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = substream(seed, 0, 0, Purpose::Extract);
        let dim = ensemble.dim();
        let candidates = (0..n)
            .map(|_| {
                let mut coords = Vec::with_capacity(m * dim);
                for _ in 0..m {
                    coords.extend_from_slice(ensemble.point(rng.gen_range(0..ensemble.len())));
                }
                let mut batch = DesignBatch::from_flat(dim, coords)?;
                constraint.apply_batch(&mut batch);
                Ok(batch)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(candidates, Provenance::IidSampled { n })
    }

    /// `n` batches assembled with one uniformly drawn particle per
    /// coordinate ensemble, each repaired to feasibility.
    pub fn sample_coordinates(
        ensembles: &[ParticleEnsemble],
        n: usize,
        constraint: &ConstraintSpec,
        seed: u64,
    ) -> Result<Self> {
        if ensembles.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let mut rng = substream(seed, 0, 0, Purpose::Extract);
        let dim = ensembles[0].dim();
        let candidates = (0..n)
            .map(|_| {
                let mut coords = Vec::with_capacity(ensembles.len() * dim);
                for e in ensembles {
                    coords.extend_from_slice(e.point(rng.gen_range(0..e.len())));
                }
                let mut batch = DesignBatch::from_flat(dim, coords)?;
                constraint.apply_batch(&mut batch);
                Ok(batch)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(candidates, Provenance::CoordinateSampled { n })
    }

    /// Default candidate source for a finished flow run: trajectory tail
    /// for joint chains (falling back to the final chain population when no
    /// tail was retained), coordinate sampling for mean-field ensembles,
    /// i.i.d. sampling for shared ensembles.
    pub fn from_flow_run(flow: &Flow, run: &FlowRun, n_eval: usize) -> Result<Self> {
        match &run.state.kind {
            StateKind::Joint(chains) => {
                if run.tail.is_empty() {
                    Self::population(chains)
                } else {
                    let burn = flow.tail.map(|t| t.burn_fraction).unwrap_or(0.0);
                    Self::from_tail(&run.tail, burn)
                }
            }
            StateKind::Mf(ensembles) => Self::sample_coordinates(
                ensembles,
                n_eval,
                &flow.constraint,
                flow.config.seed,
            ),
            StateKind::Iid(e) => {
                Self::sample_iid(e, flow.m, n_eval, &flow.constraint, flow.config.seed)
            }
        }
    }
}

/// Two-stage best-of-n extraction: score every candidate with `low_oracle`,
/// keep the `shortlist_size` highest, rescore those with `high_oracle`, and
/// return the high-fidelity arg-max with its estimate. Ties at either stage
/// resolve to the lowest candidate index. The two stages draw from
/// independent substreams of `seed`, so the refinement scores do not
/// inherit the selection noise of the screen.
pub fn extract_best_of_n(
    cands: &CandidateSet,
    low_oracle: &dyn EigOracle,
    high_oracle: &dyn EigOracle,
    shortlist_size: usize,
    seed: u64,
) -> Result<(DesignBatch, EigEstimate)> {
    let n = cands.candidates.len();
    if n == 0 {
        return Err(Error::EmptyCandidates);
    }
    if shortlist_size == 0 || shortlist_size > n {
        return Err(Error::Config(format!(
            "shortlist size must lie in 1..={n}, got {shortlist_size}"
        )));
    }

    let mut stage1_rng = substream(seed, 1, 0, Purpose::Extract);
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(n);
    for (i, batch) in cands.candidates.iter().enumerate() {
        let est = low_oracle.value(batch, &mut stage1_rng)?;
        scored.push((i, est.value));
    }
    // Highest score first; equal scores keep their index order.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut shortlist: Vec<usize> = scored[..shortlist_size].iter().map(|s| s.0).collect();
    shortlist.sort_unstable();

    let mut stage2_rng = substream(seed, 0, 0, Purpose::ExtractHigh);
    let mut best: Option<(usize, EigEstimate)> = None;
    for &i in &shortlist {
        let est = high_oracle.value(&cands.candidates[i], &mut stage2_rng)?;
        // Strict improvement only: iterating in index order makes ties
        // resolve to the earliest candidate.
        if best.as_ref().is_none_or(|(_, b)| est.value > b.value) {
            best = Some((i, est));
        }
    }
    let (idx, est) = best.expect("shortlist is nonempty");
    Ok((cands.candidates[idx].clone(), est))
}

/// Probability that at least one of `n` i.i.d. draws from a design measure
/// lands in a set of mass `p_eps`: `1 − (1 − p_eps)^n`. This is the exact
/// success law of best-of-n extraction under error-free scoring.
pub fn bon_success_probability(p_eps: f64, n: u32) -> f64 {
    assert!(
        (0.0..=1.0).contains(&p_eps),
        "p_eps must be a probability, got {p_eps}"
    );
    1.0 - (1.0 - p_eps).powi(n as i32)
}

/// Exact expected maximum score of `n` i.i.d. uniform draws (with
/// replacement) from a finite score pool:
/// E[max] = Σ_k s_(k) · [ (k+1)^n − k^n ] / N^n over the ascending order
/// statistics. Nondecreasing in `n`; used as the enumeration oracle for the
/// extractor's monotonicity property.
pub fn expected_best_of_n(scores: &[f64], n: u32) -> f64 {
    assert!(!scores.is_empty() && n >= 1);
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pool = s.len() as f64;
    let mut e = 0.0;
    let mut prev = 0.0;
    for (k, val) in s.iter().enumerate() {
        let cum = (((k + 1) as f64) / pool).powi(n as i32);
        e += val * (cum - prev);
        prev = cum;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::{exact_torus_eig, ExactTorusOracle, FnOracle};
    use crate::models::TorusLinear;

    /// Deterministic oracle scoring the first coordinate of the first slot.
    fn first_coord_oracle() -> FnOracle<
        impl Fn(&DesignBatch) -> f64 + Send + Sync,
        impl Fn(&DesignBatch) -> Vec<f64> + Send + Sync,
    > {
        FnOracle::new(
            |b: &DesignBatch| b.coords()[0],
            |b: &DesignBatch| vec![0.0; b.coords().len()],
        )
    }

    fn batch1(x: f64) -> DesignBatch {
        DesignBatch::from_times(&[x]).unwrap()
    }

    #[test]
    fn a_single_candidate_is_returned_regardless_of_scores() {
        let cands =
            CandidateSet::new(vec![batch1(-3.0)], Provenance::ParticlePopulation).unwrap();
        let oracle = first_coord_oracle();
        let (best, est) = extract_best_of_n(&cands, &oracle, &oracle, 1, 0).unwrap();
        assert_eq!(best, batch1(-3.0));
        assert_eq!(est.value, -3.0);
    }

    #[test]
    fn tied_best_candidates_resolve_to_the_earliest_index() {
        // Scores: x² gives candidates 1 and 2 the same value with different
        // batches; the earlier one must win at both shortlist sizes.
        let oracle = FnOracle::new(
            |b: &DesignBatch| b.coords()[0] * b.coords()[0],
            |b: &DesignBatch| vec![0.0; b.coords().len()],
        );
        let cands = CandidateSet::new(
            vec![batch1(0.5), batch1(2.0), batch1(-2.0)],
            Provenance::ParticlePopulation,
        )
        .unwrap();
        for shortlist in [2, 3] {
            let (best, est) = extract_best_of_n(&cands, &oracle, &oracle, shortlist, 7).unwrap();
            assert_eq!(best, batch1(2.0), "shortlist {shortlist}");
            assert_eq!(est.value, 4.0);
        }
    }

    #[test]
    fn exact_scores_on_the_circle_match_the_exhaustive_argmax() {
        let model = TorusLinear::default();
        let oracle = ExactTorusOracle::new(model.clone());
        let mut rng = substream(5, 0, 0, Purpose::Sim);
        let candidates: Vec<DesignBatch> = (0..20)
            .map(|_| {
                DesignBatch::from_flat(1, (0..3).map(|_| rng.gen_range(-3.1..3.1)).collect())
                    .unwrap()
            })
            .collect();
        // Exhaustive reference argmax (earliest index on ties).
        let mut best_idx = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, b) in candidates.iter().enumerate() {
            let v = exact_torus_eig(&model, b).unwrap();
            if v > best_val {
                best_val = v;
                best_idx = i;
            }
        }
        let cands = CandidateSet::new(candidates.clone(), Provenance::ParticlePopulation).unwrap();
        for shortlist in [4, 20] {
            let (best, est) = extract_best_of_n(&cands, &oracle, &oracle, shortlist, 0).unwrap();
            assert_eq!(best, candidates[best_idx], "shortlist {shortlist}");
            assert!((est.value - best_val).abs() < 1e-15);
            assert!(ConstraintSpec::Torus.is_feasible(&best));
        }
    }

    #[test]
    fn full_shortlist_equals_single_stage_argmax() {
        let oracle = first_coord_oracle();
        let mut rng = substream(11, 0, 0, Purpose::Sim);
        let candidates: Vec<DesignBatch> =
            (0..15).map(|_| batch1(rng.gen_range(-1.0..1.0))).collect();
        let single_stage = candidates
            .iter()
            .cloned()
            .reduce(|a, b| if b.coords()[0] > a.coords()[0] { b } else { a })
            .unwrap();
        let cands = CandidateSet::new(candidates, Provenance::ParticlePopulation).unwrap();
        let (best, _) = extract_best_of_n(&cands, &oracle, &oracle, cands.len(), 0).unwrap();
        assert_eq!(best, single_stage);
    }

    #[test]
    fn empirical_success_rate_matches_the_best_of_n_law() {
        // Discrete design measure with mass 0.3 on the "good" batch; the
        // extractor succeeds iff at least one of n = 10 candidates is good.
        let (p, n) = (0.3, 10usize);
        let oracle = first_coord_oracle();
        let reps = 10_000;
        let mut successes = 0;
        for rep in 0..reps {
            let mut rng = substream(rep as u64, 3, 0, Purpose::Sim);
            let candidates: Vec<DesignBatch> = (0..n)
                .map(|_| batch1(if rng.gen_bool(p) { 1.0 } else { 0.0 }))
                .collect();
            let cands = CandidateSet::new(candidates, Provenance::IidSampled { n }).unwrap();
            let (best, _) = extract_best_of_n(&cands, &oracle, &oracle, 3, rep as u64).unwrap();
            if best.coords()[0] == 1.0 {
                successes += 1;
            }
        }
        let freq = successes as f64 / reps as f64;
        let law = bon_success_probability(p, n as u32);
        let se = (law * (1.0 - law) / reps as f64).sqrt();
        assert!(
            (freq - law).abs() <= 3.0 * se,
            "empirical {freq} vs law {law} (3 SE = {})",
            3.0 * se
        );
    }

    #[test]
    fn success_law_endpoints_and_reference_value() {
        for n in [1, 5, 40] {
            assert_eq!(bon_success_probability(0.0, n), 0.0);
            assert_eq!(bon_success_probability(1.0, n), 1.0);
        }
        // 1 − 0.7^10
        assert!((bon_success_probability(0.3, 10) - 0.971_752_475_1).abs() < 1e-9);
    }

    #[test]
    fn expected_best_of_n_is_nondecreasing_and_matches_enumeration() {
        let scores = [0.1, 0.9, 0.4, 0.4, -0.2, 0.75];
        let pool = scores.len();
        let mut prev = f64::NEG_INFINITY;
        for n in 1..=6u32 {
            // Brute force over all pool^n ordered draws with replacement.
            let mut idx = vec![0usize; n as usize];
            let total = pool.pow(n);
            let mut sum = 0.0;
            for _ in 0..total {
                let max = idx.iter().map(|&i| scores[i]).fold(f64::MIN, f64::max);
                sum += max;
                for d in idx.iter_mut() {
                    *d += 1;
                    if *d == pool {
                        *d = 0;
                    } else {
                        break;
                    }
                }
            }
            let brute = sum / total as f64;
            let exact = expected_best_of_n(&scores, n);
            assert!(
                (brute - exact).abs() < 1e-12,
                "n = {n}: closed form {exact} vs enumeration {brute}"
            );
            assert!(exact >= prev - 1e-12, "not monotone at n = {n}");
            prev = exact;
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            CandidateSet::new(vec![], Provenance::ParticlePopulation),
            Err(Error::EmptyCandidates)
        ));
        let cands =
            CandidateSet::new(vec![batch1(0.0), batch1(1.0)], Provenance::ParticlePopulation)
                .unwrap();
        let oracle = first_coord_oracle();
        assert!(extract_best_of_n(&cands, &oracle, &oracle, 0, 0).is_err());
        assert!(extract_best_of_n(&cands, &oracle, &oracle, 3, 0).is_err());
    }

    #[test]
    fn samplers_produce_feasible_candidates_of_the_requested_shape() {
        let constraint = ConstraintSpec::OrderedMinGap {
            min_gap: 0.25,
            t_max: 24.0,
        };
        let ensemble = ParticleEnsemble::from_scalars(&[1.0, 5.0, 5.1, 12.0, 23.9]);
        let set = CandidateSet::sample_iid(&ensemble, 4, 50, &constraint, 13).unwrap();
        assert_eq!(set.len(), 50);
        assert_eq!(set.provenance, Provenance::IidSampled { n: 50 });
        for b in &set.candidates {
            assert_eq!(b.m(), 4);
            assert!(constraint.is_feasible(b), "{:?}", b.coords());
        }

        let pools = vec![
            ParticleEnsemble::from_scalars(&[2.0, 3.0]),
            ParticleEnsemble::from_scalars(&[10.0, 11.0]),
            ParticleEnsemble::from_scalars(&[20.0, 21.0]),
        ];
        let set = CandidateSet::sample_coordinates(&pools, 25, &constraint, 13).unwrap();
        assert_eq!(set.len(), 25);
        assert_eq!(set.provenance, Provenance::CoordinateSampled { n: 25 });
        for b in &set.candidates {
            assert_eq!(b.m(), 3);
            assert!(constraint.is_feasible(b));
        }
    }
}

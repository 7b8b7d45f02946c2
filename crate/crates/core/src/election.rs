//! Ground-truth election model: candidates, interpretations, ballots with
//! marginal marks, and winner/margin computation in both the Bayesian
//! (expected-vote) and conservative (worst-case) conventions.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tally::{self, Outcome};

/// Interpretations are stored as a bitmask, one bit per candidate.
pub const MAX_CANDIDATES: usize = 64;

/// Normalization slack for probability distributions.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Position of a candidate in its election's (lexicographic) ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(pub usize);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Non-empty, lexicographically ordered set of distinct candidate names.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CandidateSet {
    names: Vec<String>,
}

impl CandidateSet {
    /// Builds a candidate set from names in any order; the set is sorted.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        Self::from_ordered(names)
    }

    /// Builds a candidate set from names that must already be sorted, which is
    /// what every serialized format requires.
    pub fn from_ordered(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::NoCandidates);
        }
        if names.len() > MAX_CANDIDATES {
            return Err(Error::TooManyCandidates {
                max: MAX_CANDIDATES,
                got: names.len(),
            });
        }
        if names.iter().any(|n| n.is_empty()) {
            return Err(Error::EmptyCandidateName);
        }
        for pair in names.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateCandidate(pair[0].clone()));
            }
            if pair[0] > pair[1] {
                return Err(Error::CandidatesNotSorted(pair[0].clone(), pair[1].clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = CandidateId> + '_ {
        (0..self.names.len()).map(CandidateId)
    }

    pub fn id(&self, name: &str) -> Result<CandidateId> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .map(CandidateId)
            .map_err(|_| Error::UnknownCandidate(name.to_string()))
    }

    pub fn name(&self, id: CandidateId) -> &str {
        &self.names[id.0]
    }

    pub fn check(&self, id: CandidateId) -> Result<()> {
        if id.0 < self.names.len() {
            Ok(())
        } else {
            Err(Error::CandidateOutOfRange(id.0))
        }
    }
}

/// A 0/1 vote per candidate. All-zero is an undervote; several ones is an
/// overvote. Both count as zero votes for the purpose of tallies only in the
/// sense that each candidate reads its own bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Interpretation(u64);

impl Interpretation {
    pub const UNDERVOTE: Interpretation = Interpretation(0);

    pub fn from_mask(mask: u64) -> Self {
        Interpretation(mask)
    }

    pub fn vote_for(c: CandidateId) -> Self {
        Interpretation(1u64 << c.0)
    }

    pub fn with_marks<I: IntoIterator<Item = CandidateId>>(marks: I) -> Self {
        Interpretation(marks.into_iter().fold(0, |m, c| m | (1u64 << c.0)))
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn vote(self, c: CandidateId) -> u8 {
        ((self.0 >> c.0) & 1) as u8
    }

    pub fn votes(self, c: CandidateId) -> f64 {
        f64::from(self.vote(c))
    }

    pub fn is_undervote(self) -> bool {
        self.0 == 0
    }

    pub fn is_overvote(self) -> bool {
        self.0.count_ones() > 1
    }

    /// Only the first `width` bits may be set.
    pub fn fits(self, width: usize) -> bool {
        width >= 64 || self.0 >> width == 0
    }

    /// Parses a '0'/'1' string in candidate order ("10" = first candidate only).
    pub fn parse(bits: &str, width: usize) -> Result<Self> {
        let bad = || Error::BadInterpretation {
            bits: bits.to_string(),
            width,
        };
        if bits.len() != width {
            return Err(bad());
        }
        let mut mask = 0u64;
        for (i, ch) in bits.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => mask |= 1 << i,
                _ => return Err(bad()),
            }
        }
        Ok(Interpretation(mask))
    }

    pub fn to_bit_string(self, width: usize) -> String {
        (0..width)
            .map(|i| if (self.0 >> i) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// Every interpretation over `width` candidates.
    pub fn all(width: usize) -> impl Iterator<Item = Interpretation> {
        assert!(width < 32, "enumerating 2^{width} interpretations");
        (0u64..(1u64 << width)).map(Interpretation)
    }
}

/// Finite probability distribution over interpretations.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpretationDistribution {
    entries: Vec<(Interpretation, f64)>,
}

impl InterpretationDistribution {
    /// Zero-probability entries are dropped; the rest must be positive,
    /// distinct, and sum to one within [`PROBABILITY_TOLERANCE`].
    pub fn new<I: IntoIterator<Item = (Interpretation, f64)>>(items: I) -> Result<Self> {
        let mut entries: Vec<(Interpretation, f64)> = Vec::new();
        for (interp, p) in items {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::BadProbability(p));
            }
            if p > 0.0 {
                entries.push((interp, p));
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptySupport);
        }
        entries.sort_by_key(|e| e.0);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::RepeatedInterpretation(format!("{:#b}", w[0].0.mask())));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { entries })
    }

    pub fn point(interp: Interpretation) -> Self {
        Self {
            entries: vec![(interp, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(Interpretation, f64)] {
        &self.entries
    }

    pub fn probability(&self, interp: Interpretation) -> f64 {
        self.entries
            .binary_search_by_key(&interp, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Expected vote for `c`: the sum of probabilities of interpretations
    /// that mark `c`.
    pub fn expected_vote(&self, c: CandidateId) -> f64 {
        self.entries
            .iter()
            .filter(|(i, _)| i.vote(c) == 1)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn expected_votes(&self, width: usize) -> Vec<f64> {
        (0..width).map(|c| self.expected_vote(CandidateId(c))).collect()
    }

    pub fn support(&self) -> InterpretationSet {
        InterpretationSet {
            items: self.entries.iter().map(|e| e.0).collect(),
        }
    }

    pub fn is_point_mass(&self) -> bool {
        self.entries.len() == 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Interpretation {
        if self.entries.len() == 1 {
            return self.entries[0].0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(interp, p) in &self.entries {
            acc += p;
            if u < acc {
                return interp;
            }
        }
        self.entries[self.entries.len() - 1].0
    }
}

/// Non-empty set of interpretations, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InterpretationSet {
    items: Vec<Interpretation>,
}

impl InterpretationSet {
    pub fn new<I: IntoIterator<Item = Interpretation>>(items: I) -> Result<Self> {
        let mut items: Vec<Interpretation> = items.into_iter().collect();
        items.sort();
        items.dedup();
        if items.is_empty() {
            return Err(Error::EmptyInterpretationSet);
        }
        Ok(Self { items })
    }

    pub fn singleton(interp: Interpretation) -> Self {
        Self { items: vec![interp] }
    }

    /// Every interpretation over `width` candidates.
    pub fn full(width: usize) -> Self {
        Self {
            items: Interpretation::all(width).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Interpretation> + '_ {
        self.items.iter().copied()
    }

    pub fn as_slice(&self) -> &[Interpretation] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, interp: Interpretation) -> bool {
        self.items.binary_search(&interp).is_ok()
    }

    pub fn is_subset(&self, other: &InterpretationSet) -> bool {
        self.items.iter().all(|&i| other.contains(i))
    }

    pub fn is_disjoint(&self, other: &InterpretationSet) -> bool {
        self.items.iter().all(|&i| !other.contains(i))
    }

    pub fn union(&self, other: &InterpretationSet) -> InterpretationSet {
        let mut items = self.items.clone();
        items.extend_from_slice(&other.items);
        items.sort();
        items.dedup();
        Self { items }
    }

    pub fn min_vote(&self, c: CandidateId) -> u8 {
        self.items.iter().map(|i| i.vote(c)).min().unwrap_or(0)
    }

    pub fn max_vote(&self, c: CandidateId) -> u8 {
        self.items.iter().map(|i| i.vote(c)).max().unwrap_or(0)
    }

    pub fn fits(&self, width: usize) -> bool {
        self.items.iter().all(|i| i.fits(width))
    }
}

/// A physical ballot: an identifier plus its ground truth.
///
/// A Bayesian ballot carries a distribution; its conservative interpretation
/// set is the distribution's support. A conservative ballot carries only the
/// set.
#[derive(Clone, Debug, PartialEq)]
pub struct Ballot {
    pub id: String,
    distribution: Option<InterpretationDistribution>,
    interpretations: InterpretationSet,
}

impl Ballot {
    pub fn bayesian(id: impl Into<String>, distribution: InterpretationDistribution) -> Self {
        let interpretations = distribution.support();
        Self {
            id: id.into(),
            distribution: Some(distribution),
            interpretations,
        }
    }

    pub fn conservative(id: impl Into<String>, interpretations: InterpretationSet) -> Self {
        Self {
            id: id.into(),
            distribution: None,
            interpretations,
        }
    }

    /// Unambiguous ballot: a point mass on `interp`.
    pub fn certain(id: impl Into<String>, interp: Interpretation) -> Self {
        Self::bayesian(id, InterpretationDistribution::point(interp))
    }

    pub fn is_bayesian(&self) -> bool {
        self.distribution.is_some()
    }

    pub fn distribution(&self) -> Option<&InterpretationDistribution> {
        self.distribution.as_ref()
    }

    /// The set of interpretations an audit board could reach.
    pub fn possible_interpretations(&self) -> &InterpretationSet {
        &self.interpretations
    }

    /// Expected vote for `c` under the ground-truth distribution.
    pub fn expected_vote(&self, c: CandidateId) -> Result<f64> {
        self.distribution
            .as_ref()
            .map(|d| d.expected_vote(c))
            .ok_or(Error::ModeMismatch)
    }

    /// (least, most) favorable vote for `c` over the possible interpretations.
    pub fn conservative_limits(&self, c: CandidateId) -> (u8, u8) {
        (
            self.interpretations.min_vote(c),
            self.interpretations.max_vote(c),
        )
    }

    /// Drops the distribution, keeping only its support.
    pub fn to_conservative(&self) -> Ballot {
        Ballot::conservative(self.id.clone(), self.interpretations.clone())
    }
}

/// Candidates plus a ballot family.
#[derive(Clone, Debug)]
pub struct Election {
    candidates: CandidateSet,
    ballots: Vec<Ballot>,
    by_id: HashMap<String, Vec<usize>>,
}

impl Election {
    pub fn new(candidates: CandidateSet, ballots: Vec<Ballot>) -> Result<Self> {
        let width = candidates.len();
        let mut by_id: HashMap<String, Vec<usize>> = HashMap::with_capacity(ballots.len());
        for (i, b) in ballots.iter().enumerate() {
            if !b.interpretations.fits(width) {
                return Err(Error::BadInterpretation {
                    bits: format!("ballot {}", b.id),
                    width,
                });
            }
            by_id.entry(b.id.clone()).or_default().push(i);
        }
        Ok(Self {
            candidates,
            ballots,
            by_id,
        })
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn ballots(&self) -> &[Ballot] {
        &self.ballots
    }

    pub fn ballot(&self, index: usize) -> &Ballot {
        &self.ballots[index]
    }

    /// S, the number of ballots.
    pub fn size(&self) -> usize {
        self.ballots.len()
    }

    /// Indices of the ballots carrying identifier `id`.
    pub fn ballots_with_id(&self, id: &str) -> &[usize] {
        self.by_id.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_uniquely_labeled(&self) -> bool {
        self.by_id.len() == self.ballots.len()
    }

    pub fn is_bayesian(&self) -> bool {
        self.ballots.iter().all(Ballot::is_bayesian)
    }

    /// Replaces every distribution by its support.
    pub fn to_conservative(&self) -> Election {
        Election {
            candidates: self.candidates.clone(),
            ballots: self.ballots.iter().map(Ballot::to_conservative).collect(),
            by_id: self.by_id.clone(),
        }
    }

    /// Expected total for `c` over all ballots.
    pub fn total(&self, c: CandidateId) -> Result<f64> {
        self.candidates.check(c)?;
        self.ballots.iter().map(|b| b.expected_vote(c)).sum()
    }

    pub fn expected_totals(&self) -> Result<Vec<f64>> {
        self.candidates.ids().map(|c| self.total(c)).collect()
    }

    /// Bayesian margin of `a` over `b`.
    pub fn bayesian_margin(&self, a: CandidateId, b: CandidateId) -> Result<f64> {
        if self.ballots.is_empty() {
            return Err(Error::Degenerate);
        }
        Ok((self.total(a)? - self.total(b)?) / self.size() as f64)
    }

    pub fn bayesian_outcome(&self) -> Result<Outcome> {
        Ok(tally::expected_outcome(&self.expected_totals()?, self.size()))
    }

    /// (least, most) favorable totals for `c`.
    pub fn conservative_totals(&self, c: CandidateId) -> Result<(u64, u64)> {
        self.candidates.check(c)?;
        Ok(self.ballots.iter().fold((0, 0), |(lo, hi), b| {
            let (l, h) = b.conservative_limits(c);
            (lo + u64::from(l), hi + u64::from(h))
        }))
    }

    /// Conservative margin of `a` over `b`: worst case for `a` against best
    /// case for `b`.
    pub fn conservative_margin(&self, a: CandidateId, b: CandidateId) -> Result<f64> {
        if self.ballots.is_empty() {
            return Err(Error::Degenerate);
        }
        let (a_lo, _) = self.conservative_totals(a)?;
        let (_, b_hi) = self.conservative_totals(b)?;
        Ok((a_lo as f64 - b_hi as f64) / self.size() as f64)
    }

    pub fn conservative_outcome(&self) -> Result<Outcome> {
        let (lo, hi): (Vec<f64>, Vec<f64>) = self
            .candidates
            .ids()
            .map(|c| {
                self.conservative_totals(c)
                    .map(|(l, h)| (l as f64, h as f64))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(tally::limits_outcome(&lo, &hi, self.size()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bugs_daffy() -> (CandidateSet, CandidateId, CandidateId) {
        let cs = CandidateSet::new(["Daffy", "Bugs"]).unwrap();
        let bugs = cs.id("Bugs").unwrap();
        let daffy = cs.id("Daffy").unwrap();
        (cs, bugs, daffy)
    }

    fn dist(entries: &[(Interpretation, f64)]) -> InterpretationDistribution {
        InterpretationDistribution::new(entries.iter().copied()).unwrap()
    }

    /// The three-ballot worked example, Bayesian readings taken as ground truth.
    pub(crate) fn figure_one_election() -> Election {
        let (cs, bugs, daffy) = bugs_daffy();
        let b = Interpretation::vote_for(bugs);
        let d = Interpretation::vote_for(daffy);
        let u = Interpretation::UNDERVOTE;
        let rows: Vec<Vec<(Interpretation, f64)>> = vec![
            vec![(b, 1.0)],
            vec![(b, 0.72), (d, 0.02), (u, 0.26)],
            vec![(b, 0.99), (u, 0.01)],
            vec![(d, 1.0)],
            vec![(d, 0.75), (u, 0.25)],
            vec![(b, 0.12), (d, 0.38), (u, 0.5)],
            vec![(b, 0.46), (d, 0.1), (u, 0.44)],
            vec![(d, 1.0)],
            vec![(d, 1.0)],
            vec![(d, 0.02), (u, 0.98)],
        ];
        let ballots = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Ballot::bayesian((i + 1).to_string(), dist(r)))
            .collect();
        Election::new(cs, ballots).unwrap()
    }

    #[test]
    fn candidate_set_is_sorted_and_unique() {
        let cs = CandidateSet::new(["b", "a", "c"]).unwrap();
        assert_eq!(cs.names(), &["a", "b", "c"]);
        assert!(matches!(
            CandidateSet::new(["a", "a"]),
            Err(Error::DuplicateCandidate(_))
        ));
        assert!(matches!(
            CandidateSet::from_ordered(vec!["b".into(), "a".into()]),
            Err(Error::CandidatesNotSorted(..))
        ));
        assert_eq!(CandidateSet::new(Vec::<String>::new()), Err(Error::NoCandidates));
    }

    #[test]
    fn interpretation_bits_round_trip() {
        let i = Interpretation::parse("101", 3).unwrap();
        assert_eq!(i.vote(CandidateId(0)), 1);
        assert_eq!(i.vote(CandidateId(1)), 0);
        assert!(i.is_overvote());
        assert_eq!(i.to_bit_string(3), "101");
        assert!(Interpretation::parse("10", 3).is_err());
        assert!(Interpretation::parse("1x", 2).is_err());
    }

    #[test]
    fn distribution_validation() {
        let a = Interpretation::vote_for(CandidateId(0));
        assert!(InterpretationDistribution::new([(a, 0.5)]).is_err());
        assert!(InterpretationDistribution::new([(a, 0.5), (a, 0.5)]).is_err());
        assert!(InterpretationDistribution::new([(a, -0.1), (Interpretation::UNDERVOTE, 1.1)]).is_err());
        let d = InterpretationDistribution::new([(a, 1.0), (Interpretation::UNDERVOTE, 0.0)]).unwrap();
        assert_eq!(d.entries().len(), 1);
        assert!(InterpretationDistribution::new([(a, 0.3 + 1e-12), (Interpretation::UNDERVOTE, 0.7)]).is_ok());
    }

    #[test]
    fn expected_vote_examples() {
        let (_, bugs, daffy) = bugs_daffy();
        let b = Interpretation::vote_for(bugs);
        let d = Interpretation::vote_for(daffy);
        let u = Interpretation::UNDERVOTE;
        let point = Ballot::certain("1", b);
        assert_eq!(point.expected_vote(bugs).unwrap(), 1.0);
        let half = Ballot::bayesian("2", dist(&[(b, 0.5), (u, 0.5)]));
        assert_eq!(half.expected_vote(bugs).unwrap(), 0.5);
        let fig = Ballot::bayesian("3", dist(&[(b, 0.72), (d, 0.02), (u, 0.26)]));
        assert_eq!(fig.expected_vote(daffy).unwrap(), 0.02);
        let cons = Ballot::conservative("4", InterpretationSet::singleton(b));
        assert_eq!(cons.expected_vote(bugs), Err(Error::ModeMismatch));
    }

    #[test]
    fn figure_one_totals_and_winner() {
        let e = figure_one_election();
        let (_, bugs, daffy) = bugs_daffy();
        assert!((e.total(bugs).unwrap() - 3.29).abs() < 1e-12);
        assert!((e.total(daffy).unwrap() - 4.27).abs() < 1e-12);
        assert!((e.bayesian_margin(daffy, bugs).unwrap() - 0.098).abs() < 1e-12);
        assert!((e.bayesian_margin(bugs, daffy).unwrap() + 0.098).abs() < 1e-12);
        let o = e.bayesian_outcome().unwrap();
        assert_eq!(o.winner, Some(daffy));
        assert!((o.margin - 0.098).abs() < 1e-12);
        assert!(o.is_loser(bugs));
    }

    #[test]
    fn empty_election_total_is_zero() {
        let (cs, bugs, daffy) = bugs_daffy();
        let e = Election::new(cs, vec![]).unwrap();
        assert_eq!(e.total(bugs).unwrap(), 0.0);
        assert_eq!(e.bayesian_margin(bugs, daffy), Err(Error::Degenerate));
        assert_eq!(e.total(CandidateId(7)), Err(Error::CandidateOutOfRange(7)));
    }

    #[test]
    fn unanimous_and_tied_elections() {
        let (cs, bugs, daffy) = bugs_daffy();
        let all_bugs: Vec<Ballot> = (0..4)
            .map(|i| Ballot::certain(i.to_string(), Interpretation::vote_for(bugs)))
            .collect();
        let e = Election::new(cs.clone(), all_bugs).unwrap();
        assert_eq!(e.bayesian_margin(bugs, daffy).unwrap(), 1.0);
        let tie = vec![
            Ballot::certain("1", Interpretation::vote_for(bugs)),
            Ballot::certain("2", Interpretation::vote_for(daffy)),
        ];
        let e = Election::new(cs, tie).unwrap();
        let o = e.bayesian_outcome().unwrap();
        assert_eq!(o.winner, None);
        assert_eq!(o.margin, 0.0);
    }

    #[test]
    fn three_candidates_five_three_three() {
        let cs = CandidateSet::new(["A", "B", "C"]).unwrap();
        let mut ballots = Vec::new();
        for (c, n) in [(0usize, 5usize), (1, 3), (2, 3)] {
            for _ in 0..n {
                ballots.push(Ballot::certain(
                    format!("{}", ballots.len()),
                    Interpretation::vote_for(CandidateId(c)),
                ));
            }
        }
        let e = Election::new(cs, ballots).unwrap();
        let o = e.bayesian_outcome().unwrap();
        assert_eq!(o.winner, Some(CandidateId(0)));
        assert!((o.margin - 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn conservative_limit_examples() {
        let w = CandidateId(0);
        let a = CandidateId(1);
        let vw = Interpretation::vote_for(w);
        let va = Interpretation::vote_for(a);
        let b = Ballot::conservative("x", InterpretationSet::new([vw, Interpretation::UNDERVOTE]).unwrap());
        assert_eq!(b.conservative_limits(w), (0, 1));
        let b = Ballot::conservative("x", InterpretationSet::singleton(vw));
        assert_eq!(b.conservative_limits(w), (1, 1));
        let b = Ballot::conservative("x", InterpretationSet::new([vw, va]).unwrap());
        assert_eq!(b.conservative_limits(a), (0, 1));
        assert_eq!(InterpretationSet::new([]), Err(Error::EmptyInterpretationSet));
    }

    fn conservative_election(groups: &[(usize, &[Interpretation])]) -> Election {
        let cs = CandidateSet::new(["L", "W"]).unwrap();
        let mut ballots = Vec::new();
        for &(n, set) in groups {
            for _ in 0..n {
                let id = ballots.len().to_string();
                ballots.push(Ballot::conservative(id, InterpretationSet::new(set.iter().copied()).unwrap()));
            }
        }
        Election::new(cs, ballots).unwrap()
    }

    #[test]
    fn conservative_winner_examples() {
        let l = CandidateId(0);
        let w = CandidateId(1);
        let vl = Interpretation::vote_for(l);
        let vw = Interpretation::vote_for(w);
        let u = Interpretation::UNDERVOTE;

        let e = conservative_election(&[(6, &[vw]), (4, &[vl])]);
        let o = e.conservative_outcome().unwrap();
        assert_eq!(o.winner, Some(w));
        assert!((o.margin - 0.2).abs() < 1e-15);
        assert_eq!(o.losers.iter().copied().collect::<Vec<_>>(), vec![l]);

        let e = conservative_election(&[(5, &[vw]), (4, &[vl]), (1, &[vw, u])]);
        let o = e.conservative_outcome().unwrap();
        assert_eq!(o.winner, Some(w));
        assert!((o.margin - 0.1).abs() < 1e-15);

        let e = conservative_election(&[(5, &[vw]), (4, &[vl]), (1, &[vl, u])]);
        let o = e.conservative_outcome().unwrap();
        assert_eq!(o.winner, None);
        assert!(o.losers.is_empty());
    }

    #[test]
    fn duplicate_ids_are_flagged() {
        let (cs, bugs, _) = bugs_daffy();
        let v = Interpretation::vote_for(bugs);
        let e = Election::new(cs, vec![Ballot::certain("1", v), Ballot::certain("1", v)]).unwrap();
        assert!(!e.is_uniquely_labeled());
        assert_eq!(e.ballots_with_id("1"), &[0, 1]);
        assert!(e.ballots_with_id("2").is_empty());
    }

    #[test]
    fn sampling_follows_distribution() {
        use rand::SeedableRng;
        let a = Interpretation::vote_for(CandidateId(0));
        let d = dist(&[(a, 0.25), (Interpretation::UNDERVOTE, 0.75)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let hits = (0..40_000).filter(|_| d.sample(&mut rng) == a).count();
        let frac = hits as f64 / 40_000.0;
        assert!((frac - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / 40_000.0).sqrt());
    }
}

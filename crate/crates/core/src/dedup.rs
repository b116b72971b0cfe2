//! Proposes which issue reports describe the same underlying problem.
//!
//! Grouping is single-link: the connected components of the graph whose
//! edges join issues scoring at or above the threshold. Proposals are only
//! suggestions; triage confirms or rejects them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::sha256_parts;
use crate::model::{IssueId, MasterId, MasterSet, ProposalId, UsabilityIssue};
use crate::text::{Stopwords, TermVector};

pub const DEFAULT_GROUP_THRESHOLD: f64 = 0.35;
pub const DEFAULT_AUTO_ACCEPT: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimilarityMethod {
    TokenOverlap,
    LlmJudge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub method: SimilarityMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProposalStatus {
    Proposed,
    Confirmed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateProposal {
    pub proposal_id: ProposalId,
    /// Members sorted by issue id.
    pub group: Vec<IssueId>,
    pub canonical_candidate: IssueId,
    pub mean_pairwise_score: f64,
    pub status: ProposalStatus,
    pub method: SimilarityMethod,
}

/// One round of proposals plus what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalBatch {
    pub threshold: f64,
    pub constrain_same_heuristic: bool,
    pub method: SimilarityMethod,
    pub stopword_version: Option<String>,
    pub stopword_hash: String,
    pub proposals: Vec<DuplicateProposal>,
}

/// Token-overlap scorer with cached term vectors.
#[derive(Debug, Clone)]
pub struct TokenOverlap {
    stopwords: Stopwords,
}

impl Default for TokenOverlap {
    fn default() -> Self {
        Self::new(Stopwords::shipped())
    }
}

impl TokenOverlap {
    pub fn new(stopwords: Stopwords) -> Self {
        Self { stopwords }
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    pub fn vector(&self, text: &str) -> TermVector {
        TermVector::from_text(text, &self.stopwords)
    }

    /// Similarity of two free texts; identical texts score exactly 1.0.
    pub fn text_similarity(&self, a: &str, b: &str) -> f64 {
        if a.trim() == b.trim() {
            return 1.0;
        }
        self.vector(a).cosine(&self.vector(b))
    }

    pub fn similarity(&self, a: &UsabilityIssue, b: &UsabilityIssue) -> SimilarityScore {
        SimilarityScore {
            value: self.text_similarity(&issue_text(a), &issue_text(b)),
            method: SimilarityMethod::TokenOverlap,
        }
    }
}

/// Text compared between issues: description followed by rationale.
pub fn issue_text(issue: &UsabilityIssue) -> String {
    if issue.rationale.is_empty() {
        issue.description.clone()
    } else {
        format!("{} {}", issue.description, issue.rationale)
    }
}

/// Token-overlap similarity with the shipped stopword list.
pub fn similarity(a: &UsabilityIssue, b: &UsabilityIssue) -> SimilarityScore {
    TokenOverlap::default().similarity(a, b)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "threshold {threshold} outside (0, 1]"
        )))
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes the root so roots are deterministic.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Deterministic id derived from the sorted member ids.
pub fn proposal_id(group: &[IssueId]) -> ProposalId {
    let digest = sha256_parts(group.iter().map(|i| i.as_str().as_bytes()));
    ProposalId(format!("P-{}", &digest[..12]))
}

/// Groups issues using the token-overlap scorer.
pub fn propose_groups(
    issues: &[UsabilityIssue],
    threshold: f64,
    constrain_same_heuristic: bool,
) -> Result<Vec<DuplicateProposal>> {
    let scorer = TokenOverlap::default();
    let mut sorted: Vec<&UsabilityIssue> = issues.iter().collect();
    sorted.sort_by(|a, b| a.issue_id.cmp(&b.issue_id));
    let vectors: Vec<TermVector> = sorted.iter().map(|i| scorer.vector(&issue_text(i))).collect();
    let texts: Vec<String> = sorted.iter().map(|i| issue_text(i)).collect();
    propose_sorted(
        &sorted,
        threshold,
        constrain_same_heuristic,
        SimilarityMethod::TokenOverlap,
        |i, j| {
            if texts[i].trim() == texts[j].trim() {
                1.0
            } else {
                vectors[i].cosine(&vectors[j])
            }
        },
    )
}

/// Groups issues with an arbitrary pairwise scorer, e.g. an LLM judge.
pub fn propose_groups_with<F>(
    issues: &[UsabilityIssue],
    threshold: f64,
    constrain_same_heuristic: bool,
    method: SimilarityMethod,
    mut score: F,
) -> Result<Vec<DuplicateProposal>>
where
    F: FnMut(&UsabilityIssue, &UsabilityIssue) -> f64,
{
    let mut sorted: Vec<&UsabilityIssue> = issues.iter().collect();
    sorted.sort_by(|a, b| a.issue_id.cmp(&b.issue_id));
    let view = sorted.clone();
    propose_sorted(&sorted, threshold, constrain_same_heuristic, method, |i, j| {
        score(view[i], view[j])
    })
}

fn propose_sorted<F>(
    sorted: &[&UsabilityIssue],
    threshold: f64,
    constrain_same_heuristic: bool,
    method: SimilarityMethod,
    mut score: F,
) -> Result<Vec<DuplicateProposal>>
where
    F: FnMut(usize, usize) -> f64,
{
    check_threshold(threshold)?;
    let n = sorted.len();
    let mut scores: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut sets = DisjointSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = score(i, j);
            scores.insert((i, j), s);
            let allowed = !constrain_same_heuristic
                || (sorted[i].heuristic_id.is_some()
                    && sorted[i].heuristic_id == sorted[j].heuristic_id);
            if allowed && s >= threshold {
                sets.union(i, j);
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = sets.find(i);
        components.entry(root).or_default().push(i);
    }
    let mut proposals = Vec::new();
    for members in components.into_values().filter(|m| m.len() >= 2) {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                total += scores[&(i, j)];
                pairs += 1;
            }
        }
        let group: Vec<IssueId> = members.iter().map(|&i| sorted[i].issue_id.clone()).collect();
        proposals.push(DuplicateProposal {
            proposal_id: proposal_id(&group),
            canonical_candidate: group[0].clone(),
            group,
            mean_pairwise_score: total / pairs as f64,
            status: ProposalStatus::Proposed,
            method,
        });
    }
    Ok(proposals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchStatus {
    AutoAccepted,
    NeedsReview,
    Unmatched,
}

/// Best master entry for one issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterMatch {
    pub issue_id: IssueId,
    pub master_id: MasterId,
    pub score: f64,
    pub status: MatchStatus,
}

/// Scores each issue's description against every master entry's canonical
/// description and classifies the best match. Ties go to the entry listed
/// first.
pub fn match_to_master(
    run_issues: &[UsabilityIssue],
    master: &MasterSet,
    threshold: f64,
    auto_accept: f64,
) -> Result<Vec<MasterMatch>> {
    check_threshold(threshold)?;
    if auto_accept < threshold || auto_accept > 1.0 {
        return Err(Error::Parameter(format!(
            "auto-accept {auto_accept} must lie in [{threshold}, 1]"
        )));
    }
    if master.is_empty() {
        return Err(Error::EmptyMaster);
    }
    let scorer = TokenOverlap::default();
    let entries: Vec<(&MasterId, &str, TermVector)> = master
        .entries
        .iter()
        .map(|e| {
            (
                &e.master_id,
                e.canonical_description.as_str(),
                scorer.vector(&e.canonical_description),
            )
        })
        .collect();
    Ok(run_issues
        .iter()
        .map(|issue| {
            let v = scorer.vector(&issue.description);
            let mut best: Option<(&MasterId, f64)> = None;
            for (id, text, ev) in &entries {
                let s = if issue.description.trim() == text.trim() {
                    1.0
                } else {
                    v.cosine(ev)
                };
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((id, s));
                }
            }
            let (master_id, score) = best.expect("master is non-empty");
            let status = if score >= auto_accept {
                MatchStatus::AutoAccepted
            } else if score >= threshold {
                MatchStatus::NeedsReview
            } else {
                MatchStatus::Unmatched
            };
            MasterMatch {
                issue_id: issue.issue_id.clone(),
                master_id: master_id.clone(),
                score,
                status,
            }
        })
        .collect())
}

//! Classical consensus reconstructors: BMA with lookahead and Divider BMA.
//!
//! Both are parameter-free, deterministic, and let every strand vote,
//! contaminants included. Majority ties always go to the lowest base ordinal.
//! The cursor rules and the alignment-based length correction are our own
//! concrete realizations of the two published heuristics.

use crate::dataset::Cluster;
use crate::error::{Error, Result};
use crate::seqcore::{argmax4, Base, DnaSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LookaheadConfig {
    /// Number of upcoming symbols compared when a read disagrees with the vote.
    pub window: usize,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self { window: 2 }
    }
}

fn plurality(votes: [usize; 4]) -> Base {
    Base::from_index(argmax4(&votes))
}

fn column_majority(reads: &[Vec<Base>], len: usize) -> DnaSequence {
    (0..len)
        .map(|j| {
            let mut votes = [0usize; 4];
            for r in reads {
                if let Some(b) = r.get(j) {
                    votes[b.index()] += 1;
                }
            }
            plurality(votes)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Hypothesis {
    Substitution,
    Insertion,
    Deletion,
}

/// Cursor-based bitwise majority alignment over raw reads.
fn lookahead(reads: &[&[Base]], len: usize, window: usize) -> DnaSequence {
    let mut cursors = vec![0usize; reads.len()];
    let mut out = Vec::with_capacity(len);
    let mut expected: Vec<Option<Base>> = vec![None; window];
    for _ in 0..len {
        let mut votes = [0usize; 4];
        for (r, &cur) in reads.iter().zip(&cursors) {
            if let Some(b) = r.get(cur) {
                votes[b.index()] += 1;
            }
        }
        let winner = plurality(votes);
        out.push(winner);

        // What the reads that agree with the winner say comes next.
        for (k, slot) in expected.iter_mut().enumerate() {
            let mut next = [0usize; 4];
            for (r, &cur) in reads.iter().zip(&cursors) {
                if r.get(cur) == Some(&winner) {
                    if let Some(b) = r.get(cur + k + 1) {
                        next[b.index()] += 1;
                    }
                }
            }
            *slot = (next.iter().sum::<usize>() > 0).then(|| plurality(next));
        }

        for (r, cur) in reads.iter().zip(cursors.iter_mut()) {
            let Some(&sym) = r.get(*cur) else { continue };
            if sym == winner {
                *cur += 1;
                continue;
            }
            let score = |start: usize| -> usize {
                expected
                    .iter()
                    .enumerate()
                    .filter(|(k, e)| e.is_some() && r.get(start + k).copied() == **e)
                    .count()
            };
            let mut best = (score(*cur + 1), Hypothesis::Substitution);
            if r.get(*cur + 1) == Some(&winner) {
                let s = score(*cur + 2);
                if s > best.0 {
                    best = (s, Hypothesis::Insertion);
                }
            }
            let s = score(*cur);
            if s > best.0 {
                best = (s, Hypothesis::Deletion);
            }
            match best.1 {
                Hypothesis::Substitution => *cur += 1,
                Hypothesis::Insertion => *cur += 2,
                Hypothesis::Deletion => {}
            }
        }
    }
    DnaSequence::new(out)
}

fn check(cluster: &Cluster) -> Result<()> {
    if cluster.reads.is_empty() {
        return Err(Error::EmptyCluster);
    }
    Ok(())
}

/// BMA with a lookahead window. Emits exactly `len` symbols.
///
/// Every read keeps a cursor. At each output position the cursor symbols
/// vote; a read that disagrees with the winner compares its next `window`
/// symbols against what the agreeing reads predict under three hypotheses
/// (substitution: advance 1, insertion: advance 2, deletion: stay) and
/// takes the best-scoring one, preferring substitution on ties.
pub fn bma_lookahead(cluster: &Cluster, len: usize, cfg: &LookaheadConfig) -> Result<DnaSequence> {
    check(cluster)?;
    let reads: Vec<&[Base]> = cluster.reads.iter().map(|r| r.bases()).collect();
    Ok(lookahead(&reads, len, cfg.window.max(1)))
}

/// Project `read` onto the coordinates of `consensus` via an optimal global
/// alignment: bases aligned to consensus columns are kept, read bases
/// aligned to gaps are dropped, consensus columns missing in the read are
/// filled with the consensus symbol.
pub fn project_onto(read: &[Base], consensus: &[Base]) -> Vec<Base> {
    let (n, m) = (read.len(), consensus.len());
    let w = m + 1;
    let mut dp = vec![0u32; (n + 1) * w];
    for j in 0..=m {
        dp[j] = j as u32;
    }
    for i in 1..=n {
        dp[i * w] = i as u32;
        for j in 1..=m {
            let diag = dp[(i - 1) * w + j - 1] + u32::from(read[i - 1] != consensus[j - 1]);
            let up = dp[(i - 1) * w + j] + 1;
            let left = dp[i * w + j - 1] + 1;
            dp[i * w + j] = diag.min(up).min(left);
        }
    }
    let mut out = vec![Base::A; m];
    let (mut i, mut j) = (n, m);
    while j > 0 {
        let here = dp[i * w + j];
        if i > 0 && here == dp[(i - 1) * w + j - 1] + u32::from(read[i - 1] != consensus[j - 1]) {
            out[j - 1] = read[i - 1];
            i -= 1;
            j -= 1;
        } else if here == dp[i * w + j - 1] + 1 {
            // column absent from the read: deletion
            out[j - 1] = consensus[j - 1];
            j -= 1;
        } else {
            // read base not in the consensus: insertion
            i -= 1;
        }
    }
    out
}

/// Divider BMA. Emits exactly `len` symbols.
///
/// Reads of exactly `len` symbols vote column-wise to form a first
/// consensus (BMA lookahead over all reads if there are none). Shorter and
/// longer reads are then corrected to length `len` by aligning them to that
/// consensus, and a final column vote runs over every corrected read.
pub fn divider_bma(cluster: &Cluster, len: usize) -> Result<DnaSequence> {
    check(cluster)?;
    let exact: Vec<Vec<Base>> =
        cluster.reads.iter().filter(|r| r.len() == len).map(|r| r.bases().to_vec()).collect();
    let seed = if exact.is_empty() {
        bma_lookahead(cluster, len, &LookaheadConfig::default())?
    } else {
        column_majority(&exact, len)
    };
    let corrected: Vec<Vec<Base>> = cluster
        .reads
        .iter()
        .map(|r| if r.len() == len { r.bases().to_vec() } else { project_onto(r.bases(), seed.bases()) })
        .collect();
    Ok(column_majority(&corrected, len))
}

//! Contaminated strands and their injection into clusters.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::{random_sequence, transmit, IdsRates};
use crate::error::{Error, Result};
use crate::seqcore::{reverse_complement, DnaSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContaminantKind {
    /// A noisy read of some other reference.
    Misclustered,
    /// A noisy read of the reverse complement of the cluster's own reference.
    ReverseComplement,
    /// An i.i.d. uniform strand of the reference length.
    Random,
    /// Prefix of one foreign read joined to the suffix of another.
    Spliced,
}

impl ContaminantKind {
    pub const ALL: [ContaminantKind; 4] = [
        ContaminantKind::Misclustered,
        ContaminantKind::ReverseComplement,
        ContaminantKind::Random,
        ContaminantKind::Spliced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContaminantKind::Misclustered => "misclustered",
            ContaminantKind::ReverseComplement => "reverse-complement",
            ContaminantKind::Random => "random",
            ContaminantKind::Spliced => "spliced",
        }
    }

    fn needs_pool(self) -> bool {
        matches!(self, ContaminantKind::Misclustered | ContaminantKind::Spliced)
    }
}

impl fmt::Display for ContaminantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContaminantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContaminantKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown contaminant kind `{s}`")))
    }
}

/// Fraction of the final cluster made of contaminants, in `[0, 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct ContaminationLevel(f64);

impl ContaminationLevel {
    pub const ZERO: ContaminationLevel = ContaminationLevel(0.0);

    pub fn new(fraction: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&fraction) {
            return Err(Error::InvalidConfig(format!("contamination level {fraction} outside [0, 0.5)")));
        }
        Ok(Self(fraction))
    }

    pub fn fraction(self) -> f64 {
        self.0
    }
}

impl fmt::Display for ContaminationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

/// Number of contaminants `m` to add to `n` clean reads so that
/// `m / (n + m)` is as close as possible to the level.
pub fn contaminant_count(n: usize, level: ContaminationLevel) -> usize {
    let f = level.fraction();
    if f == 0.0 || n == 0 {
        return 0;
    }
    let ideal = f * n as f64 / (1.0 - f);
    let lo = ideal.floor() as usize;
    let err = |m: usize| (m as f64 / (n + m) as f64 - f).abs();
    // ideal is never negative, so the two neighbours bracket the optimum
    if err(lo + 1) < err(lo) {
        lo + 1
    } else {
        lo
    }
}

fn splice_cut<R: Rng + ?Sized>(len: usize, rng: &mut R) -> usize {
    if len >= 2 {
        rng.gen_range(1..len)
    } else {
        len
    }
}

/// References other than the cluster's own: a slice with an optional
/// excluded index, so callers can hand over the full reference table.
#[derive(Clone, Copy, Debug)]
pub struct ForeignPool<'a> {
    refs: &'a [DnaSequence],
    exclude: Option<usize>,
}

impl<'a> ForeignPool<'a> {
    pub fn new(refs: &'a [DnaSequence]) -> Self {
        Self { refs, exclude: None }
    }

    /// All of `refs` except `refs[own]`.
    pub fn excluding(refs: &'a [DnaSequence], own: usize) -> Self {
        Self { refs, exclude: (own < refs.len()).then_some(own) }
    }

    pub fn len(&self) -> usize {
        self.refs.len() - usize::from(self.exclude.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, i: usize) -> &'a DnaSequence {
        match self.exclude {
            Some(x) if i >= x => &self.refs[i + 1],
            _ => &self.refs[i],
        }
    }
}

impl<'a> From<&'a [DnaSequence]> for ForeignPool<'a> {
    fn from(refs: &'a [DnaSequence]) -> Self {
        Self::new(refs)
    }
}

impl<'a> From<&'a Vec<DnaSequence>> for ForeignPool<'a> {
    fn from(refs: &'a Vec<DnaSequence>) -> Self {
        Self::new(refs)
    }
}

pub fn make_contaminant<R: Rng + ?Sized>(
    kind: ContaminantKind,
    own_reference: &DnaSequence,
    foreign_pool: ForeignPool<'_>,
    rates: &IdsRates,
    rng: &mut R,
) -> Result<DnaSequence> {
    if kind.needs_pool() && foreign_pool.is_empty() {
        return Err(Error::EmptyForeignPool(kind.name()));
    }
    Ok(match kind {
        ContaminantKind::Misclustered => {
            let r = foreign_pool.get(rng.gen_range(0..foreign_pool.len()));
            transmit(r, rates, rng)
        }
        ContaminantKind::ReverseComplement => transmit(&reverse_complement(own_reference), rates, rng),
        ContaminantKind::Random => random_sequence(own_reference.len(), rng),
        ContaminantKind::Spliced => {
            let first = rng.gen_range(0..foreign_pool.len());
            let second = if foreign_pool.len() > 1 {
                // distinct second donor
                let s = rng.gen_range(0..foreign_pool.len() - 1);
                if s >= first {
                    s + 1
                } else {
                    s
                }
            } else {
                first
            };
            let head = transmit(foreign_pool.get(first), rates, rng);
            let tail = transmit(foreign_pool.get(second), rates, rng);
            let cut_head = splice_cut(head.len(), rng);
            let cut_tail = splice_cut(tail.len(), rng);
            head.bases()[..cut_head].iter().chain(&tail.bases()[cut_tail..]).copied().collect()
        }
    })
}

/// Everything [`inject`] needs besides the clean reads.
#[derive(Clone, Copy, Debug)]
pub struct InjectContext<'a> {
    pub own_reference: &'a DnaSequence,
    pub foreign_pool: ForeignPool<'a>,
    pub rates: &'a IdsRates,
    /// Kinds to draw from, uniformly. Empty means all four.
    pub kinds: &'a [ContaminantKind],
}

/// Result of [`inject`]: reads with parallel per-read annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Injected {
    pub reads: Vec<DnaSequence>,
    pub contaminated: Vec<bool>,
    /// Kind of each contaminant, `None` for clean reads.
    pub kinds: Vec<Option<ContaminantKind>>,
    /// For clean reads, their index in the input list.
    pub origin: Vec<Option<usize>>,
}

/// Append [`contaminant_count`] contaminants of uniformly drawn kinds and
/// shuffle. Level zero returns the input untouched (no shuffle, no draws).
pub fn inject<R: Rng + ?Sized>(
    clean_reads: &[DnaSequence],
    level: ContaminationLevel,
    ctx: &InjectContext<'_>,
    rng: &mut R,
) -> Result<Injected> {
    let m = contaminant_count(clean_reads.len(), level);
    if m == 0 {
        let n = clean_reads.len();
        return Ok(Injected {
            reads: clean_reads.to_vec(),
            contaminated: vec![false; n],
            kinds: vec![None; n],
            origin: (0..n).map(Some).collect(),
        });
    }
    let kinds: &[ContaminantKind] = if ctx.kinds.is_empty() { &ContaminantKind::ALL } else { ctx.kinds };
    let mut tagged: Vec<(DnaSequence, Option<ContaminantKind>, Option<usize>)> =
        clean_reads.iter().enumerate().map(|(i, r)| (r.clone(), None, Some(i))).collect();
    for _ in 0..m {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let read = make_contaminant(kind, ctx.own_reference, ctx.foreign_pool, ctx.rates, rng)?;
        tagged.push((read, Some(kind), None));
    }
    tagged.shuffle(rng);
    let mut out = Injected {
        reads: Vec::with_capacity(tagged.len()),
        contaminated: Vec::with_capacity(tagged.len()),
        kinds: Vec::with_capacity(tagged.len()),
        origin: Vec::with_capacity(tagged.len()),
    };
    for (read, kind, origin) in tagged {
        out.reads.push(read);
        out.contaminated.push(kind.is_some());
        out.kinds.push(kind);
        out.origin.push(origin);
    }
    Ok(out)
}

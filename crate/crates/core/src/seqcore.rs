//! DNA alphabet, sequences, edit distance and one-hot embedding.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nucleotide. The ordinal order A < C < G < T is used for encoding and
/// for every majority-vote tie break in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Base {
    A = 0,
    C = 1,
    G = 2,
    T = 3,
}

impl Base {
    pub const ALL: [Base; 4] = [Base::A, Base::C, Base::G, Base::T];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Base {
        Base::ALL[i & 3]
    }

    #[inline]
    pub fn complement(self) -> Base {
        match self {
            Base::A => Base::T,
            Base::C => Base::G,
            Base::G => Base::C,
            Base::T => Base::A,
        }
    }

    pub fn from_char(c: char) -> Option<Base> {
        match c {
            'A' => Some(Base::A),
            'C' => Some(Base::C),
            'G' => Some(Base::G),
            'T' => Some(Base::T),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Base::A => 'A',
            Base::C => 'C',
            Base::G => 'G',
            Base::T => 'T',
        }
    }
}

/// An ordered string over {A, C, G, T}.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DnaSequence(Vec<Base>);

impl DnaSequence {
    pub fn new(bases: Vec<Base>) -> Self {
        Self(bases)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bases(&self) -> &[Base] {
        &self.0
    }

    pub fn into_bases(self) -> Vec<Base> {
        self.0
    }

    pub fn push(&mut self, b: Base) {
        self.0.push(b);
    }

    /// Parse one line of the plain-text format; `line` is 1-based and only
    /// used for error reporting.
    pub fn parse_line(text: &str, line: usize) -> Result<Self> {
        text.chars()
            .enumerate()
            .map(|(i, ch)| Base::from_char(ch).ok_or(Error::InvalidBase { line, column: i + 1, ch }))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl FromStr for DnaSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_line(s, 1)
    }
}

impl fmt::Display for DnaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|b| b.as_char()).collect();
        f.write_str(&s)
    }
}

impl From<Vec<Base>> for DnaSequence {
    fn from(v: Vec<Base>) -> Self {
        Self(v)
    }
}

impl FromIterator<Base> for DnaSequence {
    fn from_iter<I: IntoIterator<Item = Base>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Levenshtein distance with unit costs, full O(nm) table kept as two rows.
pub fn edit_distance(a: &DnaSequence, b: &DnaSequence) -> usize {
    let (a, b) = (a.bases(), b.bases());
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn reverse_complement(s: &DnaSequence) -> DnaSequence {
    s.bases().iter().rev().map(|b| b.complement()).collect()
}

/// 4 x L grid of per-base values. Storage is position-major
/// (`values[pos * 4 + base]`), the layout the model consumes directly.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseGrid<T> {
    values: Vec<T>,
    len: usize,
}

/// One-hot embedding of a sequence: each column one-hot or all-zero padding.
pub type OneHotMatrix<T> = BaseGrid<T>;

impl<T: Scalar> BaseGrid<T> {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![T::zero(); 4 * len], len }
    }

    /// Build from position-major values; `values.len()` must be a multiple of 4.
    pub fn from_position_major(values: Vec<T>) -> Result<Self> {
        if values.len() % 4 != 0 {
            return Err(Error::ShapeMismatch { expected: vec![4, values.len() / 4], found: vec![values.len()] });
        }
        let len = values.len() / 4;
        Ok(Self { values, len })
    }

    /// Build from 4 rows of equal length (one per base, ordinal order).
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.len());
        if rows.len() != 4 || rows.iter().any(|r| r.len() != len) {
            return Err(Error::ShapeMismatch {
                expected: vec![4, len],
                found: vec![rows.len(), rows.iter().map(|r| r.len()).max().unwrap_or(0)],
            });
        }
        let mut g = Self::zeros(len);
        for (b, row) in rows.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                g.values[l * 4 + b] = v;
            }
        }
        Ok(g)
    }

    /// Number of positions (columns).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, base: usize, pos: usize) -> T {
        self.values[pos * 4 + base]
    }

    pub fn set(&mut self, base: usize, pos: usize, v: T) {
        self.values[pos * 4 + base] = v;
    }

    pub fn column(&self, pos: usize) -> &[T] {
        &self.values[pos * 4..pos * 4 + 4]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// True when the column is all-zero padding.
    pub fn is_padding(&self, pos: usize) -> bool {
        self.column(pos).iter().all(|v| v.is_zero())
    }
}

/// One-hot encode to exactly `len` columns: zero-padded when short,
/// truncated when long.
pub fn one_hot_encode<T: Scalar>(s: &DnaSequence, len: usize) -> OneHotMatrix<T> {
    let mut g = BaseGrid::zeros(len);
    for (pos, b) in s.bases().iter().take(len).enumerate() {
        g.values[pos * 4 + b.index()] = T::one();
    }
    g
}

/// Write the one-hot embedding of `s` into `out` (length `4 * len`), position-major.
pub(crate) fn one_hot_into<T: Scalar>(s: &DnaSequence, len: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), 4 * len);
    out.iter_mut().for_each(|v| *v = T::zero());
    for (pos, b) in s.bases().iter().take(len).enumerate() {
        out[pos * 4 + b.index()] = T::one();
    }
}

/// Per-column argmax; ties go to the lowest base ordinal.
pub fn decode_argmax<T: Scalar>(probs: &BaseGrid<T>) -> DnaSequence {
    (0..probs.len()).map(|pos| Base::from_index(argmax4(probs.column(pos)))).collect()
}

#[inline]
pub(crate) fn argmax4<T: PartialOrd + Copy>(col: &[T]) -> usize {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i] > col[best] {
            best = i;
        }
    }
    best
}

/// Read the plain-text sequence format: one sequence per line.
pub fn read_sequences(path: impl AsRef<Path>) -> Result<Vec<DnaSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().enumerate().map(|(i, l)| DnaSequence::parse_line(l, i + 1)).collect()
}

pub fn write_sequences<'a>(path: impl AsRef<Path>, seqs: impl IntoIterator<Item = &'a DnaSequence>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in seqs {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::collections::{HashMap, VecDeque};

    use proptest::prelude::*;

    use super::*;

    fn seq(s: &str) -> DnaSequence {
        s.parse().unwrap()
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&seq("ACGT"), &seq("ACGT")), 0);
        assert_eq!(edit_distance(&seq("AAAA"), &seq("TTTT")), 4);
        assert_eq!(edit_distance(&seq("ACGT"), &seq("AGT")), 1);
        assert_eq!(edit_distance(&seq(""), &seq("ACG")), 3);
        assert_eq!(edit_distance(&seq("ACG"), &seq("")), 3);
    }

    #[test]
    fn reverse_complement_examples() {
        assert_eq!(reverse_complement(&seq("ACGT")), seq("ACGT"));
        assert_eq!(reverse_complement(&seq("AAA")), seq("TTT"));
        assert_eq!(reverse_complement(&seq("ATCG")), seq("CGAT"));
    }

    #[test]
    fn one_hot_examples() {
        let g = one_hot_encode::<f64>(&seq("AC"), 4);
        assert_eq!(g.column(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.column(1), &[0.0, 1.0, 0.0, 0.0]);
        assert!(g.is_padding(2) && g.is_padding(3));

        let g = one_hot_encode::<f64>(&seq("ACGTA"), 4);
        assert_eq!(g.len(), 4);
        assert_eq!(decode_argmax(&g), seq("ACGT"));

        let g = one_hot_encode::<f32>(&seq(""), 3);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn decode_examples() {
        let g = one_hot_encode::<f64>(&seq("ACGT"), 4);
        assert_eq!(decode_argmax(&g), seq("ACGT"));
        let uniform = BaseGrid::from_position_major(vec![0.25f64; 8]).unwrap();
        assert_eq!(decode_argmax(&uniform), seq("AA"));
        let rows = vec![vec![0.1], vec![0.2], vec![0.6], vec![0.1]];
        assert_eq!(decode_argmax(&BaseGrid::<f64>::from_rows(&rows).unwrap()), seq("G"));
    }

    #[test]
    fn parse_reports_line_and_column() {
        match DnaSequence::parse_line("ACGNT", 7) {
            Err(Error::InvalidBase { line: 7, column: 4, ch: 'N' }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(DnaSequence::parse_line("acgt", 1).is_err());
    }

    #[test]
    fn sequence_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        let seqs = vec![seq("ACGT"), seq(""), seq("TTGCA")];
        write_sequences(&p, &seqs).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "ACGT\n\nTTGCA\n");
        assert_eq!(read_sequences(&p).unwrap(), seqs);
    }

    /// Every variant within two unit edits of `a`, keyed by the minimal
    /// number of edits that reaches it (breadth-first over edit operations).
    fn neighbourhood(a: &DnaSequence) -> HashMap<DnaSequence, usize> {
        let mut dist = HashMap::new();
        dist.insert(a.clone(), 0);
        let mut queue = VecDeque::from([a.clone()]);
        while let Some(s) = queue.pop_front() {
            let d = dist[&s];
            if d == 2 {
                continue;
            }
            let b = s.bases();
            let mut next = Vec::new();
            for i in 0..=b.len() {
                for base in Base::ALL {
                    let mut v = b.to_vec();
                    v.insert(i, base);
                    next.push(v);
                }
                if i < b.len() {
                    let mut v = b.to_vec();
                    v.remove(i);
                    next.push(v);
                    for base in Base::ALL {
                        if base != b[i] {
                            let mut v = b.to_vec();
                            v[i] = base;
                            next.push(v);
                        }
                    }
                }
            }
            for v in next {
                let v = DnaSequence::new(v);
                if !dist.contains_key(&v) {
                    dist.insert(v.clone(), d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn arb_seq(max: usize) -> impl Strategy<Value = DnaSequence> {
        prop::collection::vec(0usize..4, 0..=max).prop_map(|v| v.into_iter().map(Base::from_index).collect())
    }

    proptest! {
        #[test]
        fn levenshtein_matches_bruteforce_neighbourhood(a in arb_seq(8)) {
            for (b, d) in neighbourhood(&a) {
                prop_assert_eq!(edit_distance(&a, &b), d, "a={} b={}", a, b);
            }
        }

        #[test]
        fn edit_distance_is_a_metric(a in arb_seq(20), b in arb_seq(20), c in arb_seq(20)) {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert_eq!(edit_distance(&a, &a), 0);
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
            prop_assert_eq!(edit_distance(&a, &b) == 0, a == b);
        }

        #[test]
        fn reverse_complement_is_involution(s in arb_seq(50)) {
            prop_assert_eq!(reverse_complement(&reverse_complement(&s)), s);
        }

        #[test]
        fn decode_inverts_encode(s in arb_seq(40)) {
            let g = one_hot_encode::<f64>(&s, s.len());
            prop_assert_eq!(decode_argmax(&g), s);
        }

        #[test]
        fn padding_is_contiguous_suffix(s in arb_seq(20), len in 1usize..30) {
            let g = one_hot_encode::<f32>(&s, len);
            let used = s.len().min(len);
            for pos in 0..len {
                let ones = g.column(pos).iter().filter(|&&v| v == 1.0).count();
                if pos < used {
                    prop_assert_eq!(ones, 1);
                } else {
                    prop_assert!(g.is_padding(pos));
                }
            }
        }
    }
}

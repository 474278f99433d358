//! Event tokens, vocabularies and the sparse four-mode count tensor.
//!
//! A data set can be viewed three equivalent ways: a list of
//! `(sender -action-> receiver, time)` tokens, a sparse `V × V × A × T` tensor
//! of event-type counts, or `T` weighted multinetwork snapshots. This module
//! converts between them.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{invalid, Error, Result};

/// Number of top-level CAMEO action classes.
pub const CAMEO_ACTIONS: usize = 20;

/// Ordered label set with a label → index lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for l in labels {
            let l = l.into();
            if v.index.contains_key(&l) {
                return Err(invalid(alloc::format!("duplicate label {l:?}")));
            }
            v.intern(&l);
        }
        Ok(v)
    }

    /// The fixed CAMEO root-code vocabulary: label `"n"` has index `n - 1`.
    pub fn cameo_actions() -> Self {
        let mut v = Self::new();
        for code in 1..=CAMEO_ACTIONS {
            v.intern(&code.to_string());
        }
        v
    }

    /// Returns the index of `label`, adding it at the end if unseen.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Lexicographically sorted copy plus the old → new index permutation.
    pub fn canonicalized(&self) -> (Self, Vec<usize>) {
        let mut sorted = self.labels.clone();
        sorted.sort();
        let v = Self::from_labels(sorted).expect("labels are unique");
        let perm = self.labels.iter().map(|l| v.index[l]).collect();
        (v, perm)
    }
}

/// CAMEO QuadClass grouping of the twenty root actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QuadClass {
    Neutral,
    VerbalCoop,
    MaterialCoop,
    VerbalConflict,
    MaterialConflict,
}

impl QuadClass {
    /// Class of a 1-based CAMEO root code. Code 16 is treated as material
    /// conflict.
    pub fn of_code(code: usize) -> Result<Self> {
        Ok(match code {
            1 => Self::Neutral,
            2..=5 => Self::VerbalCoop,
            6..=7 => Self::MaterialCoop,
            8..=15 => Self::VerbalConflict,
            16..=20 => Self::MaterialConflict,
            _ => {
                return Err(Error::OutOfBounds {
                    what: "CAMEO action code",
                    index: code,
                    limit: CAMEO_ACTIONS,
                })
            }
        })
    }

    /// Class of a 0-based action index in [`Vocabulary::cameo_actions`].
    pub fn of_index(action: usize) -> Result<Self> {
        Self::of_code(action + 1)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Neutral => "neutral",
            Self::VerbalCoop => "verbal_cooperation",
            Self::MaterialCoop => "material_cooperation",
            Self::VerbalConflict => "verbal_conflict",
            Self::MaterialConflict => "material_conflict",
        }
    }
}

/// One event: `sender` took `action` toward `receiver` during `time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventToken {
    pub sender: usize,
    pub receiver: usize,
    pub action: usize,
    pub time: usize,
}

impl EventToken {
    pub fn new(sender: usize, receiver: usize, action: usize, time: usize) -> Self {
        Self {
            sender,
            receiver,
            action,
            time,
        }
    }
}

/// Tensor shape: `countries × countries × actions × steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorDims {
    pub countries: usize,
    pub actions: usize,
    pub steps: usize,
}

impl TensorDims {
    pub fn new(countries: usize, actions: usize, steps: usize) -> Self {
        Self {
            countries,
            actions,
            steps,
        }
    }

    /// Number of cells with `i ≠ j`.
    pub fn offdiagonal_cells(&self) -> usize {
        self.countries * self.countries.saturating_sub(1) * self.actions * self.steps
    }

    fn check(&self, e: &EventToken) -> Result<()> {
        let bound = |what, index, limit| {
            if index < limit {
                Ok(())
            } else {
                Err(Error::OutOfBounds { what, index, limit })
            }
        };
        bound("sender", e.sender, self.countries)?;
        bound("receiver", e.receiver, self.countries)?;
        bound("action", e.action, self.actions)?;
        bound("time", e.time, self.steps)?;
        if e.sender == e.receiver {
            return Err(invalid(alloc::format!("self-loop event for country {}", e.sender)));
        }
        Ok(())
    }
}

/// Sparse count tensor. Zero cells are implicit; iteration is in sorted
/// `(i, j, a, t)` key order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTensor {
    dims: TensorDims,
    entries: BTreeMap<EventToken, u64>,
    total: u64,
}

impl CountTensor {
    pub fn new(dims: TensorDims) -> Self {
        Self {
            dims,
            entries: BTreeMap::new(),
            total: 0,
        }
    }

    /// Aggregates tokens into counts.
    pub fn from_tokens(tokens: &[EventToken], dims: TensorDims) -> Result<Self> {
        let mut t = Self::new(dims);
        for e in tokens {
            t.add(*e, 1)?;
        }
        Ok(t)
    }

    pub fn dims(&self) -> TensorDims {
        self.dims
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds `count` events of type `cell`.
    pub fn add(&mut self, cell: EventToken, count: u64) -> Result<()> {
        self.dims.check(&cell)?;
        if count > 0 {
            *self.entries.entry(cell).or_insert(0) += count;
            self.total += count;
        }
        Ok(())
    }

    pub fn get(&self, cell: &EventToken) -> u64 {
        self.entries.get(cell).copied().unwrap_or(0)
    }

    /// Non-zero entries in sorted key order.
    pub fn entries(&self) -> impl Iterator<Item = (EventToken, u64)> + '_ {
        self.entries.iter().map(|(k, &v)| (*k, v))
    }

    /// The token list: each entry repeated `count` times, in key order.
    pub fn tokens(&self) -> Vec<EventToken> {
        let mut out = Vec::with_capacity(self.total as usize);
        for (e, n) in self.entries() {
            for _ in 0..n {
                out.push(e);
            }
        }
        out
    }

    /// Weighted multinetwork for time step `t`: `(i, j, a, weight)` edges.
    pub fn snapshot(&self, t: usize) -> Result<Vec<(usize, usize, usize, u64)>> {
        if t >= self.dims.steps {
            return Err(Error::OutOfBounds {
                what: "time",
                index: t,
                limit: self.dims.steps,
            });
        }
        Ok(self
            .entries()
            .filter(|(e, _)| e.time == t)
            .map(|(e, n)| (e.sender, e.receiver, e.action, n))
            .collect())
    }

    /// Sub-tensor of the steps in `range`, re-indexed from zero.
    pub fn time_slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.dims.steps {
            return Err(invalid(alloc::format!(
                "time range {range:?} outside 0..{}",
                self.dims.steps
            )));
        }
        let mut out = Self::new(TensorDims::new(
            self.dims.countries,
            self.dims.actions,
            range.end - range.start,
        ));
        for (e, n) in self.entries() {
            if range.contains(&e.time) {
                out.add(EventToken { time: e.time - range.start, ..e }, n)?;
            }
        }
        Ok(out)
    }

    /// Entries whose dyad satisfies `keep(i, j)`.
    pub fn filter_dyads(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let mut out = Self::new(self.dims);
        for (e, n) in self.entries() {
            if keep(e.sender, e.receiver) {
                out.entries.insert(e, n);
                out.total += n;
            }
        }
        out
    }

    /// Total token involvement (as sender plus as receiver) per country.
    pub fn involvement(&self) -> Vec<u64> {
        let mut out = alloc::vec![0u64; self.dims.countries];
        for (e, n) in self.entries() {
            out[e.sender] += n;
            out[e.receiver] += n;
        }
        out
    }
}

/// Aggregates `tokens` into a tensor of shape `dims`.
pub fn build_tensor(tokens: &[EventToken], dims: TensorDims) -> Result<CountTensor> {
    CountTensor::from_tokens(tokens, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn dims() -> TensorDims {
        TensorDims::new(4, 3, 5)
    }

    #[test]
    fn empty_tensor() {
        let t = build_tensor(&[], dims()).unwrap();
        assert_eq!(t.total(), 0);
        assert!(t.is_empty());
        assert!(t.snapshot(0).unwrap().is_empty());
    }

    #[test]
    fn identical_tokens_aggregate() {
        let e = EventToken::new(0, 1, 0, 0);
        let t = build_tensor(&[e, e], dims()).unwrap();
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.get(&e), 2);
        assert_eq!(t.total(), 2);
    }

    #[test]
    fn out_of_bounds_rejected() {
        assert!(build_tensor(&[EventToken::new(0, 4, 0, 0)], dims()).is_err());
        assert!(build_tensor(&[EventToken::new(0, 1, 3, 0)], dims()).is_err());
        assert!(build_tensor(&[EventToken::new(0, 1, 0, 5)], dims()).is_err());
        assert!(build_tensor(&[EventToken::new(2, 2, 0, 0)], dims()).is_err());
    }

    #[test]
    fn snapshot_single_entry() {
        let mut t = CountTensor::new(dims());
        t.add(EventToken::new(0, 1, 0, 3), 5).unwrap();
        assert_eq!(t.snapshot(3).unwrap(), vec![(0, 1, 0, 5)]);
        assert!(t.snapshot(2).unwrap().is_empty());
        assert!(t.snapshot(5).is_err());
    }

    #[test]
    fn quadclass_boundaries() {
        assert_eq!(QuadClass::of_code(1).unwrap(), QuadClass::Neutral);
        assert_eq!(QuadClass::of_code(5).unwrap(), QuadClass::VerbalCoop);
        assert_eq!(QuadClass::of_code(7).unwrap(), QuadClass::MaterialCoop);
        assert_eq!(QuadClass::of_code(15).unwrap(), QuadClass::VerbalConflict);
        assert_eq!(QuadClass::of_code(16).unwrap(), QuadClass::MaterialConflict);
        assert_eq!(QuadClass::of_code(20).unwrap(), QuadClass::MaterialConflict);
        assert!(QuadClass::of_code(0).is_err());
        assert!(QuadClass::of_code(21).is_err());
        for a in 0..CAMEO_ACTIONS {
            assert!(QuadClass::of_index(a).is_ok());
        }
    }

    #[test]
    fn vocabulary_first_appearance_and_canonical() {
        let mut v = Vocabulary::new();
        assert_eq!(v.intern("USA"), 0);
        assert_eq!(v.intern("CHN"), 1);
        assert_eq!(v.intern("USA"), 0);
        let (sorted, perm) = v.canonicalized();
        assert_eq!(sorted.labels(), &["CHN".to_string(), "USA".to_string()]);
        assert_eq!(perm, vec![1, 0]);
        assert!(Vocabulary::from_labels(["a", "a"]).is_err());
        let cameo = Vocabulary::cameo_actions();
        assert_eq!(cameo.get("4"), Some(3));
    }

    #[test]
    fn time_slice_and_filter() {
        let mut t = CountTensor::new(dims());
        t.add(EventToken::new(0, 1, 0, 1), 2).unwrap();
        t.add(EventToken::new(1, 2, 1, 3), 4).unwrap();
        t.add(EventToken::new(2, 3, 2, 4), 1).unwrap();
        let s = t.time_slice(3..5).unwrap();
        assert_eq!(s.dims().steps, 2);
        assert_eq!(s.total(), 5);
        assert_eq!(s.get(&EventToken::new(1, 2, 1, 0)), 4);
        let f = t.filter_dyads(|i, _| i != 1);
        assert_eq!(f.total(), 3);
        assert_eq!(t.involvement(), vec![2, 6, 5, 1]);
    }

    fn token_strategy() -> impl Strategy<Value = EventToken> {
        (0usize..4, 0usize..3, 0usize..3, 0usize..5).prop_map(|(i, dj, a, t)| {
            // receiver distinct from sender
            let j = (i + 1 + dj) % 4;
            EventToken::new(i, j, a, t)
        })
    }

    proptest! {
        #[test]
        fn tokens_roundtrip(mut tokens in proptest::collection::vec(token_strategy(), 0..60)) {
            let t = build_tensor(&tokens, dims()).unwrap();
            prop_assert_eq!(t.total() as usize, tokens.len());
            let mut back = t.tokens();
            tokens.sort();
            back.sort();
            prop_assert_eq!(back, tokens);
        }

        #[test]
        fn snapshots_partition_total(tokens in proptest::collection::vec(token_strategy(), 0..60)) {
            let t = build_tensor(&tokens, dims()).unwrap();
            let mut sum = 0;
            for s in 0..5 {
                sum += t.snapshot(s).unwrap().iter().map(|e| e.3).sum::<u64>();
            }
            prop_assert_eq!(sum, t.total());
        }

        #[test]
        fn vocabulary_bijection(labels in proptest::collection::hash_set("[a-z]{1,4}", 0..30)) {
            let v = Vocabulary::from_labels(labels.iter().cloned()).unwrap();
            for (k, l) in v.labels().iter().enumerate() {
                prop_assert_eq!(v.get(l), Some(k));
            }
        }
    }
}

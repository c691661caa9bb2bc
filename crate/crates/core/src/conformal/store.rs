use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::reservoir::norm;

/// One calibration pair: the state at `time` and the residual `horizon`
/// steps later.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEntry {
    pub time: i64,
    pub state: Vec<f64>,
    pub residual: f64,
    pub(crate) norm: f64,
    seq: u64,
}

/// FIFO window of `(h_s, r_{s+H})` pairs, ordered by time.
///
/// A residual-sorted index is maintained alongside the entries so that
/// building a weighted CDF for a query costs O(n) instead of a sort.
#[derive(Debug, Clone)]
pub struct CalibrationStore {
    entries: VecDeque<CalibrationEntry>,
    /// `(residual, seq)` sorted ascending.
    by_residual: Vec<(f64, u64)>,
    next_seq: u64,
    horizon: usize,
    capacity: Option<usize>,
    dim: Option<usize>,
}

impl CalibrationStore {
    /// `capacity = None` keeps every entry.
    pub fn new(horizon: usize, capacity: Option<usize>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if capacity == Some(0) {
            return Err(Error::Config("calibration window must hold at least one entry".into()));
        }
        Ok(Self {
            entries: VecDeque::new(),
            by_residual: Vec::new(),
            next_seq: 0,
            horizon,
            capacity,
            dim: None,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &CalibrationEntry> {
        self.entries.iter()
    }

    pub fn last_time(&self) -> Option<i64> {
        self.entries.back().map(|e| e.time)
    }

    pub fn times(&self) -> Vec<i64> {
        self.entries.iter().map(|e| e.time).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.residual).collect()
    }

    /// Appends a pair, evicting the oldest one when over capacity.
    pub fn push(&mut self, time: i64, state: Vec<f64>, residual: f64) -> Result<()> {
        if let Some(last) = self.last_time() {
            if time <= last {
                return Err(Error::NonMonotoneTime { time, last });
            }
        }
        if let Some(dim) = self.dim {
            if state.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "calibration state",
                    expected: dim,
                    actual: state.len(),
                });
            }
        }
        if !residual.is_finite() {
            return Err(Error::NonFiniteInput {
                index: self.entries.len(),
            });
        }
        if let Some(i) = state.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index: i });
        }
        self.dim = Some(state.len());
        let seq = self.next_seq;
        self.next_seq += 1;
        let pos = self
            .by_residual
            .partition_point(|&(r, s)| r < residual || (r == residual && s < seq));
        self.by_residual.insert(pos, (residual, seq));
        self.entries.push_back(CalibrationEntry {
            time,
            norm: norm(&state),
            state,
            residual,
            seq,
        });
        if self.capacity.is_some_and(|cap| self.entries.len() > cap) {
            self.evict_oldest();
        }
        Ok(())
    }

    fn evict_oldest(&mut self) {
        if let Some(old) = self.entries.pop_front() {
            let key = (old.residual, old.seq);
            let pos = self
                .by_residual
                .partition_point(|&(r, s)| r < key.0 || (r == key.0 && s < key.1));
            debug_assert_eq!(self.by_residual.get(pos), Some(&key));
            self.by_residual.remove(pos);
        }
    }

    /// Entry positions (indices into [`Self::entries`]) in ascending residual order.
    pub(crate) fn sorted_positions(&self) -> impl Iterator<Item = usize> + '_ {
        let front = self.entries.front().map_or(0, |e| e.seq);
        self.by_residual.iter().map(move |&(_, s)| (s - front) as usize)
    }
}

/// Free-function form of [`CalibrationStore::push`].
pub fn push_calibration(store: &mut CalibrationStore, time: i64, state: Vec<f64>, residual: f64) -> Result<()> {
    store.push(time, state, residual)
}

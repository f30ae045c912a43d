use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense `|S| x |A|` action-value table, stored row-major by state.
///
/// After [`QTable::take_snapshot`] the table remembers the current values and tracks
/// which entries change, so the per-epoch RMS difference costs time proportional to the
/// number of touched entries rather than the table size.
#[derive(Debug, Clone)]
pub struct QTable<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
    snapshot: Option<Snapshot<T>>,
}

#[derive(Debug, Clone)]
struct Snapshot<T> {
    values: Vec<T>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl<T: Scalar> QTable<T> {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![T::zero(); n_states * n_actions],
            snapshot: None,
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                left: (n_states, n_actions),
                right: (values.len(), 1),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigMismatch(
                "Q-table contains non-finite values".into(),
            ));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
            snapshot: None,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> T {
        self.values[state * self.n_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: T) {
        let i = state * self.n_actions + action;
        self.values[i] = value;
        if let Some(snap) = self.snapshot.as_mut() {
            if !snap.marked[i] {
                snap.marked[i] = true;
                snap.touched.push(i);
            }
        }
    }

    #[inline]
    pub fn add(&mut self, state: usize, action: usize, delta: T) {
        let v = self.get(state, action) + delta;
        self.set(state, action, v);
    }

    pub fn row(&self, state: usize) -> &[T] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Highest-valued action among `candidates`; ties resolve to the earliest candidate.
    /// `candidates` is expected in ascending order so that this is the lowest index.
    pub fn argmax_over(&self, state: usize, candidates: &[usize]) -> Option<usize> {
        let row = self.row(state);
        let mut best: Option<(usize, T)> = None;
        for &a in candidates {
            let v = row[a];
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((a, v)),
            }
        }
        best.map(|(a, _)| a)
    }

    pub fn max_over(&self, state: usize, candidates: &[usize]) -> Option<T> {
        self.argmax_over(state, candidates)
            .map(|a| self.get(state, a))
    }

    /// Records the current values as the previous epoch.
    pub fn take_snapshot(&mut self) {
        let n = self.values.len();
        self.snapshot = Some(Snapshot {
            values: self.values.clone(),
            touched: Vec::new(),
            marked: vec![false; n],
        });
    }

    /// RMS difference against the snapshot, after which the snapshot is advanced to the
    /// current values. Takes a snapshot and returns zero when none exists.
    pub fn epoch_difference(&mut self) -> T {
        let n = self.values.len();
        let Some(snap) = self.snapshot.as_mut() else {
            self.take_snapshot();
            return T::zero();
        };
        snap.touched.sort_unstable();
        let mut sum = T::zero();
        for &i in &snap.touched {
            let d = self.values[i] - snap.values[i];
            sum += d * d;
            snap.values[i] = self.values[i];
            snap.marked[i] = false;
        }
        snap.touched.clear();
        if n == 0 {
            return T::zero();
        }
        (sum / T::lit(n as f64)).sqrt()
    }
}

/// Equality of dimensions and values; snapshot state is ignored.
impl<T: PartialEq> PartialEq for QTable<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.values == other.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::q_value_difference;

    #[test]
    fn argmax_ties_go_to_lowest_candidate() {
        let mut q = QTable::<f64>::zeros(1, 5);
        assert_eq!(q.argmax_over(0, &[1, 3, 4]), Some(1));
        q.set(0, 3, 2.0);
        q.set(0, 4, 2.0);
        assert_eq!(q.argmax_over(0, &[1, 3, 4]), Some(3));
        q.set(0, 0, 9.0);
        assert_eq!(q.argmax_over(0, &[1, 3, 4]), Some(3));
        assert_eq!(q.max_over(0, &[1, 3, 4]), Some(2.0));
        assert_eq!(q.argmax_over(0, &[]), None);
    }

    #[test]
    fn epoch_difference_matches_full_scan() {
        let mut q = QTable::<f64>::zeros(4, 3);
        q.take_snapshot();
        let before = q.clone();
        q.set(1, 2, 0.5);
        q.add(3, 0, -1.25);
        q.add(1, 2, 0.25);
        let full = q_value_difference(&q, &before).unwrap();
        let fast = q.epoch_difference();
        assert_eq!(full.to_bits(), fast.to_bits());
        assert_eq!(q.epoch_difference(), 0.0);
    }

    #[test]
    fn from_values_checks_length() {
        assert!(QTable::from_values(2, 2, vec![0.0_f64; 3]).is_err());
        assert!(QTable::from_values(2, 2, vec![0.0_f64, 1.0, f64::NAN, 0.0]).is_err());
        let q = QTable::from_values(2, 2, vec![0.0_f32, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(q.get(1, 0), 2.0);
        assert_eq!(q.row(1), &[2.0, 3.0]);
    }
}

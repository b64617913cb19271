use std::collections::VecDeque;

/// Fixed-capacity window of per-step consistency values; the oldest value
/// is evicted once the window is full.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    capacity: usize,
    values: VecDeque<f64>,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn mean(&self) -> f64 {
        let v: Vec<f64> = self.values().collect();
        sliding_kl_surrogate(&v)
    }
}

/// Arithmetic mean of the window; an empty window gives 0.
pub fn sliding_kl_surrogate(window: &[f64]) -> f64 {
    if window.is_empty() {
        0.0
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_values() {
        assert_eq!(sliding_kl_surrogate(&[]), 0.0);
        assert_eq!(sliding_kl_surrogate(&[0.0; 5]), 0.0);
        assert!((sliding_kl_surrogate(&[0.1, 0.3]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = SlidingWindow::new(50);
        for i in 0..51 {
            w.push(i as f64);
        }
        assert_eq!(w.len(), 50);
        assert_eq!(w.values().next(), Some(1.0));
    }
}

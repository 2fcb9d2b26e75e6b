#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    /// Epoch with the highest validation score, earliest on ties.
    pub best: usize,
}

/// Stop once the best score is `patience` or more epochs old.
pub fn early_stop(history: &[f64], patience: usize) -> Option<StopDecision> {
    let mut best = 0;
    for (i, &v) in history.iter().enumerate().skip(1) {
        if v > history[best] {
            best = i;
        }
    }
    let last = history.len().checked_sub(1)?;
    Some(StopDecision {
        stop: last - best >= patience,
        best,
    })
}

/// Incremental form of [`early_stop`].
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    history: Vec<f64>,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            history: Vec::new(),
        }
    }

    /// Records a score; returns whether it is the new best.
    pub fn observe(&mut self, score: f64) -> bool {
        let improved = self.history.iter().all(|&h| score > h);
        self.history.push(score);
        improved
    }

    pub fn last(&self) -> Option<f64> {
        self.history.last().copied()
    }

    pub fn decision(&self) -> Option<StopDecision> {
        early_stop(&self.history, self.patience)
    }

    pub fn should_stop(&self) -> bool {
        self.decision().is_some_and(|d| d.stop)
    }
}

/// Learning-rate halving on dev-loss plateaus with early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub lr: f64,
    pub best: f64,
    pub since_improvement: usize,
    pub consecutive_halvings: usize,
    pub decay: f64,
    pub floor: f64,
    pub patience: usize,
    pub max_halvings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Improved,
    Waiting,
    Halved,
    Stop(StopReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    LrFloor,
    Plateau,
    Diverged,
}

impl ScheduleState {
    pub fn new(lr: f64) -> Self {
        ScheduleState {
            lr,
            best: f64::INFINITY,
            since_improvement: 0,
            consecutive_halvings: 0,
            decay: 0.5,
            floor: 1e-6,
            patience: 1,
            max_halvings: 3,
        }
    }

    /// Records one epoch's dev loss.
    pub fn observe(&mut self, dev_loss: f64) -> Decision {
        if dev_loss < self.best {
            self.best = dev_loss;
            self.since_improvement = 0;
            self.consecutive_halvings = 0;
            return Decision::Improved;
        }
        self.since_improvement += 1;
        if self.since_improvement < self.patience {
            return Decision::Waiting;
        }
        self.since_improvement = 0;
        self.lr *= self.decay;
        self.consecutive_halvings += 1;
        if self.lr < self.floor {
            Decision::Stop(StopReason::LrFloor)
        } else if self.consecutive_halvings >= self.max_halvings {
            Decision::Stop(StopReason::Plateau)
        } else {
            Decision::Halved
        }
    }
}

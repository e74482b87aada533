/// Constant learning rate, halved once at 75% of training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub total_steps: u64,
    pub base_lr: f64,
}

impl Schedule {
    pub fn new(total_steps: u64, base_lr: f64) -> Schedule {
        Schedule {
            total_steps,
            base_lr,
        }
    }

    /// First zero-based step that runs at the reduced rate: ⌈0.75·T⌉.
    pub fn milestone(&self) -> u64 {
        (3 * self.total_steps).div_ceil(4)
    }

    pub fn lr(&self, step: u64) -> f64 {
        if step < self.milestone() {
            self.base_lr
        } else {
            self.base_lr / 2.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_exactly_at_milestone() {
        let s = Schedule::new(10, 1e-4);
        assert_eq!(s.milestone(), 8);
        assert_eq!(s.lr(7), 1e-4);
        assert_eq!(s.lr(8), 5e-5);
        assert_eq!(Schedule::new(2000, 1e-4).milestone(), 1500);
    }
}

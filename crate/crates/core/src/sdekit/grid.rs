use super::SdeError;
use crate::gradcore::Scalar;
use crate::Turn;

/// Uniform grid on `[0, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<S> {
    t_end: S,
    dt: S,
    steps: usize,
}

impl<S: Scalar> TimeGrid<S> {
    pub fn new(t_end: S, dt: S) -> Result<Self, SdeError> {
        if !(dt > S::zero()) || !(t_end > S::zero()) {
            return Err(SdeError::Config(format!(
                "need dt > 0 and T > 0, got dt = {dt}, T = {t_end}"
            )));
        }
        let ratio = (t_end / dt).as_f64();
        let steps = ratio.round();
        if (ratio - steps).abs() * dt.as_f64() > 1e-12 {
            return Err(SdeError::Config(format!(
                "T = {t_end} is not a multiple of dt = {dt}"
            )));
        }
        Ok(Self {
            t_end,
            dt,
            steps: steps as usize,
        })
    }

    pub fn t_end(&self) -> S {
        self.t_end
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self, k: usize) -> S {
        S::lit(k as f64) * self.dt
    }

    /// Index of the grid point nearest to `t`.
    pub fn nearest(&self, t: S) -> usize {
        let k = (t / self.dt).as_f64().round().max(0.0) as usize;
        k.min(self.steps)
    }
}

/// Which decision interval (and so which actor) each grid step belongs to.
/// Interval `i` covers grid steps `stamps[i]..stamps[i + 1]`; the last one
/// runs to the end of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSchedule {
    stamps: Vec<usize>,
    interval_of_step: Vec<usize>,
}

impl PhaseSchedule {
    pub fn new(stamps: Vec<usize>, steps: usize) -> Result<Self, SdeError> {
        if stamps.is_empty() || stamps[0] != 0 {
            return Err(SdeError::Config(
                "observation stamps must start at grid step 0".into(),
            ));
        }
        if stamps.windows(2).any(|w| w[1] <= w[0]) || *stamps.last().expect("non-empty") > steps {
            return Err(SdeError::Config(format!(
                "stamps {stamps:?} not strictly increasing within {steps} steps"
            )));
        }
        let mut interval_of_step = Vec::with_capacity(steps + 1);
        let mut i = 0;
        for k in 0..=steps {
            while i + 1 < stamps.len() && stamps[i + 1] <= k {
                i += 1;
            }
            interval_of_step.push(i);
        }
        Ok(Self {
            stamps,
            interval_of_step,
        })
    }

    /// One interval spanning the whole grid.
    pub fn single(steps: usize) -> Self {
        Self {
            stamps: vec![0],
            interval_of_step: vec![0; steps + 1],
        }
    }

    pub fn stamps(&self) -> &[usize] {
        &self.stamps
    }

    pub fn interval(&self, k: usize) -> usize {
        self.interval_of_step[k.min(self.interval_of_step.len() - 1)]
    }

    pub fn actor(&self, k: usize) -> Turn {
        Turn::of_step(self.interval(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        let g = TimeGrid::new(2.0f64, 0.01).unwrap();
        assert_eq!(g.steps(), 200);
        assert!(TimeGrid::new(1.0f64, 0.3).is_err());
        assert!(TimeGrid::new(1.0f64, 0.0).is_err());
        assert!(TimeGrid::new(-1.0f64, 0.1).is_err());
    }

    #[test]
    fn schedule_maps_steps_to_intervals() {
        let s = PhaseSchedule::new(vec![0, 3, 5], 8).unwrap();
        let got: Vec<usize> = (0..=8).map(|k| s.interval(k)).collect();
        assert_eq!(got, vec![0, 0, 0, 1, 1, 2, 2, 2, 2]);
        assert_eq!(s.actor(4), Turn::Follower);
        assert!(PhaseSchedule::new(vec![0, 3, 3], 8).is_err());
        assert!(PhaseSchedule::new(vec![1, 3], 8).is_err());
    }
}

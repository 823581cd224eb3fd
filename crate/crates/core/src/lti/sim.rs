use nalgebra::DVector;

use super::{LtiError, StateSpaceModel};

/// Input to [`simulate`].
pub enum InputSignal<'a> {
    /// `u(t, x)`, evaluated at every RK4 stage.
    Feedback(&'a (dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Sync)),
    /// One sample per step, held constant over the step. The last sample
    /// is reused if the sequence is shorter than the horizon.
    Sampled(&'a [DVector<f64>]),
}

/// Sampled simulation output: one entry per time sample in every field.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial sample")
    }
}

impl InputSignal<'_> {
    fn eval(&self, step: usize, t: f64, x: &DVector<f64>) -> DVector<f64> {
        match self {
            InputSignal::Feedback(f) => f(t, x),
            InputSignal::Sampled(s) => s[step.min(s.len() - 1)].clone(),
        }
    }
}

/// Fixed-step classical RK4 over `[0, t_end]` with `round(t_end / dt)` steps.
pub fn simulate(
    sys: &StateSpaceModel,
    input: InputSignal<'_>,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, LtiError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(LtiError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(LtiError::InvalidArgument(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    if x0.len() != sys.n_states() {
        return Err(LtiError::Dimension(format!(
            "x0 has {} entries, system has {} states",
            x0.len(),
            sys.n_states()
        )));
    }
    if let InputSignal::Sampled(s) = &input {
        if s.is_empty() {
            return Err(LtiError::InvalidArgument("empty input sequence".into()));
        }
    }
    let m = sys.n_inputs();
    let steps = (t_end / dt).round() as usize;
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
    };
    let check_u = |u: &DVector<f64>| -> Result<(), LtiError> {
        if u.len() != m {
            return Err(LtiError::Dimension(format!(
                "input has {} entries, system has {m} inputs",
                u.len()
            )));
        }
        Ok(())
    };

    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let u = input.eval(k, t, &x);
        check_u(&u)?;
        traj.outputs.push(sys.output(&x, &u));
        traj.t.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(u.clone());
        if k == steps {
            break;
        }
        let h = dt;
        let k1 = sys.derivative(&x, &u);
        let x2 = &x + &k1 * (0.5 * h);
        let k2 = sys.derivative(&x2, &input.eval(k, t + 0.5 * h, &x2));
        let x3 = &x + &k2 * (0.5 * h);
        let k3 = sys.derivative(&x3, &input.eval(k, t + 0.5 * h, &x3));
        let x4 = &x + &k3 * h;
        let k4 = sys.derivative(&x4, &input.eval(k, t + h, &x4));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
            return Err(LtiError::Divergence { time: t + h });
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use nalgebra::DMatrix;

    fn scalar(a: f64) -> StateSpaceModel {
        StateSpaceModel::with_state_output(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let plant = demo::plant();
        let u = [DVector::zeros(2)];
        let traj = simulate(&plant, InputSignal::Sampled(&u), &DVector::zeros(3), 0.1, 1e-3).unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.states.iter().all(|x| x.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn exponential_decay() {
        let sys = scalar(-1.0);
        let zero = |_: f64, _: &DVector<f64>| DVector::zeros(1);
        let traj = simulate(
            &sys,
            InputSignal::Feedback(&zero),
            &DVector::from_element(1, 1.0),
            2.0,
            1e-3,
        )
        .unwrap();
        for (t, x) in traj.t.iter().zip(&traj.states) {
            assert!((x[0] - (-t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn step_response_reaches_dc_gain() {
        let plant = demo::plant();
        let u = [nalgebra::dvector![2.0, 0.0]];
        let traj = simulate(&plant, InputSignal::Sampled(&u), &DVector::zeros(3), 3.0, 1e-4).unwrap();
        // -A^{-1} B u by linear solve
        let ss = -plant.a().clone().lu().solve(&(plant.b() * &u[0])).unwrap();
        assert!((traj.final_state() - ss).amax() < 1e-9);
    }

    #[test]
    fn divergence_reported() {
        let sys = scalar(400.0);
        let zero = |_: f64, _: &DVector<f64>| DVector::zeros(1);
        let err = simulate(
            &sys,
            InputSignal::Feedback(&zero),
            &DVector::from_element(1, 1.0),
            10.0,
            1e-2,
        )
        .unwrap_err();
        assert!(matches!(err, LtiError::Divergence { time } if time > 0.0 && time < 10.0));
    }

    #[test]
    fn bad_step_rejected() {
        let sys = scalar(-1.0);
        let u = [DVector::zeros(1)];
        assert!(simulate(&sys, InputSignal::Sampled(&u), &DVector::zeros(1), 1.0, 0.0).is_err());
        assert!(simulate(&sys, InputSignal::Sampled(&u), &DVector::zeros(2), 1.0, 0.1).is_err());
    }
}

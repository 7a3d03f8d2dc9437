use rand::Rng;

use crate::diff::{DiffError, Param, Tape, Tensor, Var};

use super::mlp::Mlp;
use super::Module;

/// Deterministic policy `π(s, g)`: an MLP followed by `tanh` squashing onto
/// the action box.
#[derive(Debug, Clone)]
pub struct Actor {
    net: Mlp,
    low: Vec<f64>,
    high: Vec<f64>,
    state_dim: usize,
    goal_dim: usize,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        goal_dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        assert_eq!(low.len(), high.len(), "action bounds length");
        assert!(low.iter().zip(&high).all(|(l, h)| l < h), "empty action box");
        let mut dims = vec![state_dim + goal_dim];
        dims.extend(std::iter::repeat_n(hidden, layers));
        dims.push(low.len());
        Self {
            net: Mlp::new("pi", &dims, rng),
            low,
            high,
            state_dim,
            goal_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn forward(&self, tape: &mut Tape, s: Var, g: Var) -> Result<Var, DiffError> {
        let (ss, gs) = (tape.shape(s), tape.shape(g));
        if ss.cols != self.state_dim || gs.cols != self.goal_dim || ss.rows != gs.rows {
            return Err(DiffError::ShapeMismatch { op: "actor", left: ss, right: gs });
        }
        let x = tape.concat(&[s, g])?;
        let z = self.net.forward(tape, x)?;
        let t = tape.tanh(z)?;
        let half: Vec<f64> = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect();
        let center: Vec<f64> = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h + l)).collect();
        tape.col_affine(t, &half, &center)
    }

    pub fn act(&self, s: &Tensor, g: &Tensor) -> Result<Tensor, DiffError> {
        let mut tape = Tape::new();
        tape.set_frozen(true);
        let sv = tape.constant(s.clone());
        let gv = tape.constant(g.clone());
        let a = self.forward(&mut tape, sv, gv)?;
        Ok(tape.value(a).clone())
    }
}

impl Module for Actor {
    fn params(&self) -> Vec<&Param> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }
}

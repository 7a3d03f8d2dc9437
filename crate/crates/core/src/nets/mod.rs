//! Critic and actor architectures.
//!
//! Every critic maps `(s, a, g)` batches to a `[B, 1]` column of Q-values.
//! The MRN family computes `Q = -(d_sym + d_asym)` over the latents
//! `h_sa = e1(s‖a)` and `h_sg = e2(s‖g)`, where
//!
//! - `d_sym = mean_j (φ(h_sa)_j - φ(h_sg)_j)²`
//! - `d_asym = max_i relu(h_i(h_sa) - h_i(h_sg))`
//!
//! and `φ`, `h` are one-hidden-layer MLPs shared between both latents.

mod actor;
mod critic;
mod io;
mod mlp;

use thiserror::Error;

use crate::diff::{finite_difference_report, DiffError, GradCheckReport, Param, Tape, Var};

pub use actor::Actor;
pub use critic::{
    BvnCritic, Critic, CriticDims, CriticNet, CriticVariant, HeadTerms, MrnCritic, MrnHead, Sizing, SymReduce,
};
pub use io::{load_params, read_params, save_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use mlp::{Linear, Mlp};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parameter file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("parameter `{0}` missing from file")]
    Missing(String),
    #[error("parameter `{name}`: file has {found:?}, network expects {expected:?}")]
    ParamShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// A container of learnable parameters.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Pulls gradients for every parameter bound on `tape`.
    fn collect_grads(&mut self, tape: &Tape) {
        for p in self.params_mut() {
            tape.collect_grad(p);
        }
    }

    /// `self ← polyak·self + (1 - polyak)·online`, parameter by parameter.
    fn polyak_update(&mut self, online: &Self, polyak: f64)
    where
        Self: Sized,
    {
        for (t, o) in self.params_mut().into_iter().zip(online.params()) {
            let src = o.value().data();
            for (a, b) in t.value_mut().data_mut().iter_mut().zip(src) {
                *a = polyak * *a + (1.0 - polyak) * b;
            }
        }
    }

    /// Flattened copy of every parameter value, in `params()` order.
    fn flat_values(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value().data().iter().copied()).collect()
    }
}

/// Checks tape gradients of the scalar `loss(module, tape)` with respect to
/// the module's parameters against central finite differences.
///
/// `coords` selects flat parameter coordinates in `params()` order; `None`
/// checks all of them. Parameter values are restored bit-exactly.
pub fn param_grad_check<M, F>(
    module: &mut M,
    loss: F,
    coords: Option<&[usize]>,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, DiffError>
where
    M: Module,
    F: Fn(&M, &mut Tape) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let y = loss(module, &mut tape)?;
    tape.backward(y)?;
    let mut analytic = Vec::new();
    let mut owner = Vec::new();
    for (pi, p) in module.params().iter().enumerate() {
        match tape.param_var(p.id()).and_then(|v| tape.grad(v)) {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat_n(0.0, p.len())),
        }
        owner.extend((0..p.len()).map(|e| (pi, e)));
    }
    let all: Vec<usize>;
    let indices = match coords {
        Some(c) => c,
        None => {
            all = (0..analytic.len()).collect();
            &all
        }
    };
    finite_difference_report(&analytic, indices.iter().copied(), step, tol, |i, delta| {
        let (pi, e) = owner[i];
        let original = module.params()[pi].value().data()[e];
        module.params_mut()[pi].value_mut().data_mut()[e] = original + delta;
        let mut t = Tape::new();
        t.set_frozen(true);
        let out = loss(module, &mut t).and_then(|v| t.value(v).item());
        module.params_mut()[pi].value_mut().data_mut()[e] = original;
        Ok((out?, t.branch_signature()))
    })
}

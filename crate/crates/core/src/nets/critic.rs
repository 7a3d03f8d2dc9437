use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::diff::{DiffError, Param, Tape, Tensor, Var};
use crate::quasimetric::DistanceTable;

use super::mlp::Mlp;
use super::{Module, NetError};

/// Critic architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CriticVariant {
    /// One MLP over `s‖a‖g`.
    Monolithic,
    /// `f(s,a) · φ(s,g)`.
    Bvn,
    /// `-(d_sym + d_asym)` over encoder latents.
    Mrn,
    /// MRN keeping only the symmetric term.
    MrnSymOnly,
    /// MRN keeping only the asymmetric term.
    MrnAsymOnly,
    /// MRN whose second encoder also sees the action.
    MrnSag,
}

impl CriticVariant {
    pub const ALL: [CriticVariant; 6] = [
        CriticVariant::Monolithic,
        CriticVariant::Bvn,
        CriticVariant::Mrn,
        CriticVariant::MrnSymOnly,
        CriticVariant::MrnAsymOnly,
        CriticVariant::MrnSag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriticVariant::Monolithic => "monolithic",
            CriticVariant::Bvn => "bvn",
            CriticVariant::Mrn => "mrn",
            CriticVariant::MrnSymOnly => "mrn-sym",
            CriticVariant::MrnAsymOnly => "mrn-asym",
            CriticVariant::MrnSag => "mrn-sag",
        }
    }

    pub fn is_mrn(self) -> bool {
        matches!(
            self,
            CriticVariant::Mrn | CriticVariant::MrnSymOnly | CriticVariant::MrnAsymOnly | CriticVariant::MrnSag
        )
    }
}

impl fmt::Display for CriticVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriticVariant {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CriticVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| NetError::UnknownVariant(s.to_string()))
    }
}

/// How the squared embedding differences of `d_sym` are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymReduce {
    /// Mean over the embedding axis.
    #[default]
    Mean,
    /// Sum over the embedding axis (the squared L2 norm).
    Sum,
    /// Square root of the sum: the plain L2 distance, a true metric.
    Norm,
}

impl FromStr for SymReduce {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(SymReduce::Mean),
            "sum" => Ok(SymReduce::Sum),
            "norm" => Ok(SymReduce::Norm),
            other => Err(NetError::UnknownVariant(other.to_string())),
        }
    }
}

/// Layer widths shared by every critic variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sizing {
    pub monolithic_hidden: usize,
    pub monolithic_layers: usize,
    pub bvn_hidden: usize,
    pub bvn_layers: usize,
    pub encoder_hidden: usize,
    pub encoder_layers: usize,
    pub head_hidden: usize,
    /// Head width for the single-head ablations.
    pub ablation_head_hidden: usize,
    /// Output width of `φ` and of the BVN embeddings.
    pub embed_dim: usize,
    /// Number of asymmetric channels `h_i`.
    pub asym_k: usize,
    pub sym_reduce: SymReduce,
}

impl Default for Sizing {
    fn default() -> Self {
        Self {
            monolithic_hidden: 256,
            monolithic_layers: 3,
            bvn_hidden: 176,
            bvn_layers: 3,
            encoder_hidden: 176,
            encoder_layers: 2,
            head_hidden: 176,
            ablation_head_hidden: 300,
            embed_dim: 16,
            asym_k: 16,
            sym_reduce: SymReduce::Mean,
        }
    }
}

impl Sizing {
    /// Uniformly narrower network for fast tests; same topology.
    pub fn small(width: usize, embed: usize) -> Self {
        Self {
            monolithic_hidden: width,
            bvn_hidden: width,
            encoder_hidden: width,
            head_hidden: width,
            ablation_head_hidden: width,
            embed_dim: embed,
            asym_k: embed,
            ..Self::default()
        }
    }
}

/// Input feature widths. `state == 0` means the critic sees no state, as in
/// the toy regression where inputs are a start point and a goal point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticDims {
    pub state: usize,
    pub action: usize,
    pub goal: usize,
}

fn hidden_dims(input: usize, hidden: usize, layers: usize, output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend(std::iter::repeat_n(hidden, layers));
    d.push(output);
    d
}

/// The two quasipseudometric heads applied to a pair of latents.
#[derive(Debug, Clone)]
pub struct MrnHead {
    pub sym: Option<Mlp>,
    pub asym: Option<Mlp>,
    pub reduce: SymReduce,
}

/// Per-row terms of the head distance, each `[B, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct HeadTerms {
    pub d_sym: Option<Var>,
    pub d_asym: Option<Var>,
    pub total: Var,
}

impl MrnHead {
    pub fn new<R: Rng + ?Sized>(
        latent: usize,
        sym: Option<(usize, usize)>,
        asym: Option<(usize, usize)>,
        reduce: SymReduce,
        rng: &mut R,
    ) -> Self {
        assert!(sym.is_some() || asym.is_some(), "MRN head needs at least one term");
        Self {
            sym: sym.map(|(h, m)| Mlp::new("sym", &[latent, h, m], rng)),
            asym: asym.map(|(h, k)| Mlp::new("asym", &[latent, h, k], rng)),
            reduce,
        }
    }

    /// `d(x, y)` for latent batches `x, y: [B, Z]`. Both heads see both
    /// latents through the same weights.
    pub fn distance(&self, tape: &mut Tape, x: Var, y: Var) -> Result<HeadTerms, DiffError> {
        let d_sym = match &self.sym {
            Some(sym) => {
                let px = sym.forward(tape, x)?;
                let py = sym.forward(tape, y)?;
                let diff = tape.sub(px, py)?;
                let sq = tape.square(diff)?;
                Some(match self.reduce {
                    SymReduce::Mean => tape.mean_last(sq)?,
                    SymReduce::Sum => tape.sum_last(sq)?,
                    SymReduce::Norm => {
                        let s = tape.sum_last(sq)?;
                        tape.sqrt(s)?
                    }
                })
            }
            None => None,
        };
        let d_asym = match &self.asym {
            Some(asym) => {
                let hx = asym.forward(tape, x)?;
                let hy = asym.forward(tape, y)?;
                let diff = tape.sub(hx, hy)?;
                let pos = tape.relu(diff)?;
                Some(tape.max_last(pos)?)
            }
            None => None,
        };
        let total = match (d_sym, d_asym) {
            (Some(a), Some(b)) => tape.add(a, b)?,
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("constructor requires a term"),
        };
        Ok(HeadTerms { d_sym, d_asym, total })
    }

    /// Scalar distance between two single latents, evaluated off-tape.
    pub fn eval_pair(&self, x: &[f64], y: &[f64]) -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        tape.set_frozen(true);
        let xv = tape.constant(Tensor::row_vector(x)?);
        let yv = tape.constant(Tensor::row_vector(y)?);
        let d = self.distance(&mut tape, xv, yv)?;
        tape.value(d.total).item()
    }

    /// `d(p_i, p_j)` for every ordered pair of rows of `points: [N, Z]`,
    /// computed in one batched pass.
    pub fn pairwise(&self, points: &Tensor) -> Result<DistanceTable, DiffError> {
        let (n, z) = (points.rows(), points.cols());
        let mut xs = Vec::with_capacity(n * n * z);
        let mut ys = Vec::with_capacity(n * n * z);
        for i in 0..n {
            for j in 0..n {
                xs.extend_from_slice(points.row(i));
                ys.extend_from_slice(points.row(j));
            }
        }
        let mut tape = Tape::new();
        tape.set_frozen(true);
        let xv = tape.constant(Tensor::new(n * n, z, xs)?);
        let yv = tape.constant(Tensor::new(n * n, z, ys)?);
        let d = self.distance(&mut tape, xv, yv)?;
        Ok(DistanceTable::from_fn(n, |i, j| tape.value(d.total).data()[i * n + j]))
    }

    pub fn latent_dim(&self) -> usize {
        self.sym
            .as_ref()
            .or(self.asym.as_ref())
            .map(Mlp::input_dim)
            .expect("head has a term")
    }
}

impl Module for MrnHead {
    fn params(&self) -> Vec<&Param> {
        let mut p = Vec::new();
        if let Some(s) = &self.sym {
            p.extend(s.params());
        }
        if let Some(a) = &self.asym {
            p.extend(a.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        if let Some(s) = &mut self.sym {
            p.extend(s.params_mut());
        }
        if let Some(a) = &mut self.asym {
            p.extend(a.params_mut());
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct MrnCritic {
    /// `e1: S×A → Z`
    pub e1: Mlp,
    /// `e2: S×G → Z`, or `S×A×G → Z` when `sag` is set.
    pub e2: Mlp,
    pub head: MrnHead,
    pub sag: bool,
}

#[derive(Debug, Clone)]
pub struct BvnCritic {
    pub f: Mlp,
    pub phi: Mlp,
}

#[derive(Debug, Clone)]
pub enum CriticNet {
    Monolithic(Mlp),
    Bvn(BvnCritic),
    Mrn(MrnCritic),
}

/// A critic `Q(s, a, g)` of any supported variant.
#[derive(Debug, Clone)]
pub struct Critic {
    variant: CriticVariant,
    dims: CriticDims,
    net: CriticNet,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(variant: CriticVariant, dims: CriticDims, sizing: &Sizing, rng: &mut R) -> Self {
        let sa = dims.state + dims.action;
        let sg = dims.state + dims.goal;
        let sag = dims.state + dims.action + dims.goal;
        let net = match variant {
            CriticVariant::Monolithic => CriticNet::Monolithic(Mlp::new(
                "q",
                &hidden_dims(sag, sizing.monolithic_hidden, sizing.monolithic_layers, 1),
                rng,
            )),
            CriticVariant::Bvn => CriticNet::Bvn(BvnCritic {
                f: Mlp::new("f", &hidden_dims(sa, sizing.bvn_hidden, sizing.bvn_layers, sizing.embed_dim), rng),
                phi: Mlp::new("phi", &hidden_dims(sg, sizing.bvn_hidden, sizing.bvn_layers, sizing.embed_dim), rng),
            }),
            _ => {
                let z = sizing.encoder_hidden;
                let enc = |name: &str, input: usize, rng: &mut R| {
                    let mut d = vec![input];
                    d.extend(std::iter::repeat_n(z, sizing.encoder_layers));
                    Mlp::new(name, &d, rng).with_output_relu()
                };
                let e2_in = if variant == CriticVariant::MrnSag { sag } else { sg };
                let e1 = enc("e1", sa, rng);
                let e2 = enc("e2", e2_in, rng);
                let (sym, asym) = match variant {
                    CriticVariant::MrnSymOnly => (Some((sizing.ablation_head_hidden, sizing.embed_dim)), None),
                    CriticVariant::MrnAsymOnly => (None, Some((sizing.ablation_head_hidden, sizing.asym_k))),
                    _ => (
                        Some((sizing.head_hidden, sizing.embed_dim)),
                        Some((sizing.head_hidden, sizing.asym_k)),
                    ),
                };
                let head = MrnHead::new(z, sym, asym, sizing.sym_reduce, rng);
                CriticNet::Mrn(MrnCritic {
                    e1,
                    e2,
                    head,
                    sag: variant == CriticVariant::MrnSag,
                })
            }
        };
        Self { variant, dims, net }
    }

    /// Wraps hand-built MRN parts; used to construct exact test fixtures.
    pub fn from_mrn(dims: CriticDims, mrn: MrnCritic) -> Self {
        let variant = match (&mrn.head.sym, &mrn.head.asym, mrn.sag) {
            (_, _, true) => CriticVariant::MrnSag,
            (Some(_), Some(_), false) => CriticVariant::Mrn,
            (Some(_), None, false) => CriticVariant::MrnSymOnly,
            (None, Some(_), false) => CriticVariant::MrnAsymOnly,
            (None, None, _) => unreachable!("head has a term"),
        };
        Self {
            variant,
            dims,
            net: CriticNet::Mrn(mrn),
        }
    }

    pub fn from_bvn(dims: CriticDims, bvn: BvnCritic) -> Self {
        Self {
            variant: CriticVariant::Bvn,
            dims,
            net: CriticNet::Bvn(bvn),
        }
    }

    pub fn variant(&self) -> CriticVariant {
        self.variant
    }

    pub fn dims(&self) -> CriticDims {
        self.dims
    }

    pub fn net(&self) -> &CriticNet {
        &self.net
    }

    fn join(&self, tape: &mut Tape, parts: &[Option<Var>]) -> Result<Var, DiffError> {
        let vars: Vec<Var> = parts.iter().flatten().copied().collect();
        if vars.len() == 1 {
            Ok(vars[0])
        } else {
            tape.concat(&vars)
        }
    }

    fn check_inputs(&self, tape: &Tape, s: Option<Var>, a: Var, g: Var) -> Result<(), DiffError> {
        let rows = tape.shape(a).rows;
        let expect = |v: Var, cols: usize, op: &'static str| -> Result<(), DiffError> {
            let sh = tape.shape(v);
            if sh.rows != rows || sh.cols != cols {
                return Err(DiffError::ShapeMismatch {
                    op,
                    left: crate::diff::Shape::new(rows, cols),
                    right: sh,
                });
            }
            Ok(())
        };
        expect(a, self.dims.action, "critic(action)")?;
        expect(g, self.dims.goal, "critic(goal)")?;
        match (s, self.dims.state) {
            (Some(s), n) if n > 0 => expect(s, n, "critic(state)"),
            (None, 0) => Ok(()),
            (Some(s), _) => Err(DiffError::ShapeMismatch {
                op: "critic(state)",
                left: crate::diff::Shape::new(rows, 0),
                right: tape.shape(s),
            }),
            (None, n) => Err(DiffError::ShapeMismatch {
                op: "critic(state)",
                left: crate::diff::Shape::new(rows, n),
                right: crate::diff::Shape::new(rows, 0),
            }),
        }
    }

    /// `Q(s, a, g)` as a `[B, 1]` column.
    pub fn forward(&self, tape: &mut Tape, s: Option<Var>, a: Var, g: Var) -> Result<Var, DiffError> {
        self.check_inputs(tape, s, a, g)?;
        match &self.net {
            CriticNet::Monolithic(q) => {
                let x = self.join(tape, &[s, Some(a), Some(g)])?;
                q.forward(tape, x)
            }
            CriticNet::Bvn(bvn) => {
                let sa = self.join(tape, &[s, Some(a)])?;
                let sg = self.join(tape, &[s, Some(g)])?;
                let f = bvn.f.forward(tape, sa)?;
                let phi = bvn.phi.forward(tape, sg)?;
                let prod = tape.mul(f, phi)?;
                tape.sum_last(prod)
            }
            CriticNet::Mrn(mrn) => {
                let d = mrn.terms(tape, s, a, g)?;
                tape.neg(d.total)
            }
        }
    }

    /// Forward pass with all parameters frozen, returning plain values.
    pub fn evaluate(&self, s: Option<&Tensor>, a: &Tensor, g: &Tensor) -> Result<Tensor, DiffError> {
        let mut tape = Tape::new();
        tape.set_frozen(true);
        let sv = s.map(|s| tape.constant(s.clone()));
        let av = tape.constant(a.clone());
        let gv = tape.constant(g.clone());
        let q = self.forward(&mut tape, sv, av, gv)?;
        Ok(tape.value(q).clone())
    }
}

impl MrnCritic {
    /// Latents `(h_sa, h_sg)`.
    pub fn latents(&self, tape: &mut Tape, s: Option<Var>, a: Var, g: Var) -> Result<(Var, Var), DiffError> {
        let join = |tape: &mut Tape, parts: &[Option<Var>]| -> Result<Var, DiffError> {
            let vars: Vec<Var> = parts.iter().flatten().copied().collect();
            if vars.len() == 1 {
                Ok(vars[0])
            } else {
                tape.concat(&vars)
            }
        };
        let sa = join(tape, &[s, Some(a)])?;
        let second = if self.sag {
            join(tape, &[s, Some(a), Some(g)])?
        } else {
            join(tape, &[s, Some(g)])?
        };
        let x = self.e1.forward(tape, sa)?;
        let y = self.e2.forward(tape, second)?;
        Ok((x, y))
    }

    pub fn terms(&self, tape: &mut Tape, s: Option<Var>, a: Var, g: Var) -> Result<HeadTerms, DiffError> {
        let (x, y) = self.latents(tape, s, a, g)?;
        self.head.distance(tape, x, y)
    }
}

impl Module for Critic {
    fn params(&self) -> Vec<&Param> {
        match &self.net {
            CriticNet::Monolithic(q) => q.params(),
            CriticNet::Bvn(b) => b.f.params().into_iter().chain(b.phi.params()).collect(),
            CriticNet::Mrn(m) => m
                .e1
                .params()
                .into_iter()
                .chain(m.e2.params())
                .chain(m.head.params())
                .collect(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.net {
            CriticNet::Monolithic(q) => q.params_mut(),
            CriticNet::Bvn(b) => b.f.params_mut().into_iter().chain(b.phi.params_mut()).collect(),
            CriticNet::Mrn(m) => m
                .e1
                .params_mut()
                .into_iter()
                .chain(m.e2.params_mut())
                .chain(m.head.params_mut())
                .collect(),
        }
    }
}

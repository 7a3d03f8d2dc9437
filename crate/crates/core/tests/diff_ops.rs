use mrn::diff::{grad_check, DiffError, Tape, Tensor, Var};
use proptest::prelude::*;

fn t(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

#[test]
fn relu_forward() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[&[-1.0, 0.0, 2.0]]));
    let y = tape.relu(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn mean_last_forward() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[&[1.0, 3.0]]));
    let y = tape.mean_last(x).unwrap();
    assert_eq!(tape.value(y).data(), &[2.0]);
}

#[test]
fn max_last_forward_records_argmax() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[&[1.0, 5.0, 2.0]]));
    let y = tape.max_last(x).unwrap();
    assert_eq!(tape.value(y).data(), &[5.0]);
    assert_eq!(tape.argmax_of(y), Some(&[1usize][..]));
}

#[test]
fn relu_backward_zero_at_negative() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[&[2.0, -3.0]]), true);
    let r = tape.relu(x).unwrap();
    let l = tape.sum(r).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0]);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[&[0.0]]), true);
    let r = tape.relu(x).unwrap();
    let l = tape.sum(r).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0]);
}

#[test]
fn mean_of_squares_backward() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[&[1.0, 2.0]]), true);
    let s = tape.square(x).unwrap();
    let l = tape.mean_last(s).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 2.0]);
}

#[test]
fn max_backward_routes_to_argmax() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[&[1.0, 5.0, 2.0]]), true);
    let l = tape.max_last(x).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0, 0.0]);
}

#[test]
fn max_ties_go_to_lowest_index() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[&[3.0, 7.0, 7.0, 7.0], &[2.0, 2.0, 1.0, 2.0]]), true);
    let m = tape.max_last(x).unwrap();
    let l = tape.sum(m).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.argmax_of(m), Some(&[1usize, 0][..]));
    assert_eq!(
        tape.grad(x).unwrap(),
        &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
    );
}

#[test]
fn sum_gradient_is_all_ones() {
    let x = Tensor::new(3, 2, vec![0.5, -2.0, 1.5, 3.0, -0.1, 9.0]).unwrap();
    let r = grad_check(|t, v| t.sum(v), &x, 1e-5, 1e-9).unwrap();
    assert!(r.passed, "{r:?}");
    let mut tape = Tape::new();
    let v = tape.leaf(x, true);
    let l = tape.sum(v).unwrap();
    tape.backward(l).unwrap();
    assert!(tape.grad(v).unwrap().iter().all(|&g| g == 1.0));
}

#[test]
fn affine_shape_error_names_op_and_shapes() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(4, 3));
    let w = tape.constant(Tensor::zeros(2, 5));
    let b = tape.constant(Tensor::zeros(1, 5));
    let err = tape.affine(x, w, b).unwrap_err();
    assert_eq!(err.to_string(), "affine: shape mismatch between [4, 3] and [2, 5]");
}

#[test]
fn concat_requires_equal_rows() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(3, 3));
    assert!(matches!(
        tape.concat(&[a, b]),
        Err(DiffError::ShapeMismatch { op: "concat", .. })
    ));
}

#[test]
fn non_finite_values_raise_when_checking() {
    let mut tape = Tape::new().with_finite_checks(true);
    let x = tape.constant(Tensor::row_vector(&[1e300, 1.0]).unwrap());
    let err = tape.square(x).unwrap_err();
    assert_eq!(err, DiffError::NonFinite { op: "square" });
}

#[test]
fn backward_on_non_scalar_is_an_error() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(2, 2), true);
    let y = tape.relu(x).unwrap();
    assert!(matches!(tape.backward(y), Err(DiffError::NotScalar { .. })));
}

#[test]
fn backward_twice_is_an_error() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(2.0), true);
    let y = tape.square(x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.backward(y), Err(DiffError::BackwardTwice));
    assert_eq!(tape.relu(x), Err(DiffError::TapeConsumed));
}

#[test]
fn every_requiring_leaf_gets_a_gradient() {
    let mut tape = Tape::new();
    let used = tape.leaf(Tensor::scalar(2.0), true);
    let unused = tape.leaf(Tensor::zeros(2, 2), true);
    let frozen = tape.constant(Tensor::scalar(1.0));
    let y = tape.mul(used, frozen).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(used), Some(&[1.0][..]));
    assert_eq!(tape.grad(unused), Some(&[0.0; 4][..]));
    assert_eq!(tape.grad(frozen), None);
}

#[test]
fn shared_node_accumulates() {
    // d/dx (x·x + x) = 2x + 1
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0), true);
    let sq = tape.mul(x, x).unwrap();
    let y = tape.add(sq, x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[7.0]);
}

#[test]
fn affine_relu_chain_gradcheck() {
    let w = Tensor::new(3, 4, (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.13).collect()).unwrap();
    let b = Tensor::new(1, 4, vec![0.1, -0.2, 0.3, 0.05]).unwrap();
    let w2 = Tensor::new(4, 2, (0..8).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.21).collect()).unwrap();
    let b2 = Tensor::new(1, 2, vec![0.0, 0.1]).unwrap();
    let x = Tensor::new(5, 3, (0..15).map(|i| ((i * 3 % 13) as f64 - 6.0) * 0.17).collect()).unwrap();
    let f = |tape: &mut Tape, v: Var| {
        let wv = tape.constant(w.clone());
        let bv = tape.constant(b.clone());
        let h = tape.affine(v, wv, bv)?;
        let h = tape.relu(h)?;
        let w2v = tape.constant(w2.clone());
        let b2v = tape.constant(b2.clone());
        let o = tape.affine(h, w2v, b2v)?;
        let sq = tape.square(o)?;
        tape.sum(sq)
    };
    let r = grad_check(f, &x, 1e-5, 1e-5).unwrap();
    assert!(r.passed, "{r:?}");
    assert!(r.checked > 0);
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[&[0.3, -1.2, 2.2], &[1.1, 0.4, -0.7]]), true);
        let w = tape.leaf(t(&[&[0.5, -0.1], &[0.2, 0.9], &[-0.3, 0.4]]), true);
        let b = tape.leaf(t(&[&[0.01, -0.02]]), true);
        let h = tape.affine(x, w, b).unwrap();
        let h = tape.tanh(h).unwrap();
        let m = tape.max_last(h).unwrap();
        let l = tape.sum(m).unwrap();
        tape.backward(l).unwrap();
        (
            tape.value(l).data().to_vec(),
            tape.grad(x).unwrap().to_vec(),
            tape.grad(w).unwrap().to_vec(),
        )
    };
    let a = run();
    let b = run();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

// Randomized per-primitive checks against central differences.

fn tensor_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::new(rows, cols, d).unwrap())
}

fn shaped() -> impl Strategy<Value = (usize, usize)> {
    (1usize..5, 1usize..6)
}

/// Weights a reduction so every output coordinate carries a distinct
/// upstream gradient.
fn weighted_sum(tape: &mut Tape, y: Var) -> Result<Var, DiffError> {
    let s = tape.shape(y);
    let w: Vec<f64> = (0..s.len()).map(|i| 0.3 + 0.17 * i as f64).collect();
    let wv = tape.constant(Tensor::new(s.rows, s.cols, w)?);
    let p = tape.mul(y, wv)?;
    tape.sum(p)
}

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn unary_ops_match_finite_differences((r, c) in shaped(), seed in 0u64..1000) {
        let x = Tensor::new(r, c, (0..r * c).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f64 / 250.0) - 2.0).collect()).unwrap();
        type Unary = fn(&mut Tape, Var) -> Result<Var, DiffError>;
        let ops: [(&str, Unary); 10] = [
            ("relu", |t, v| t.relu(v)),
            ("tanh", |t, v| t.tanh(v)),
            ("square", |t, v| t.square(v)),
            ("neg", |t, v| t.neg(v)),
            ("scale", |t, v| t.scale(v, -1.7)),
            ("mean_last", |t, v| t.mean_last(v)),
            ("sum_last", |t, v| t.sum_last(v)),
            ("max_last", |t, v| t.max_last(v)),
            ("sqrt", |t, v| { let c = t.shape(v).cols; let sq = t.square(v)?; let p = t.col_affine(sq, &vec![1.0; c], &vec![0.5; c])?; t.sqrt(p) }),
            ("col_affine", |t, v| { let c = t.shape(v).cols; let sc: Vec<f64> = (0..c).map(|j| 0.5 + j as f64).collect(); let sh = vec![0.25; c]; t.col_affine(v, &sc, &sh) }),
        ];
        for (name, op) in ops {
            let rep = grad_check(|t, v| { let y = op(t, v)?; weighted_sum(t, y) }, &x, STEP, TOL).unwrap();
            prop_assert!(rep.passed, "{name}: {rep:?}");
        }
    }

    #[test]
    fn binary_ops_match_finite_differences((r, c) in shaped(), a in tensor_strategy(4, 5), b in tensor_strategy(4, 5)) {
        let crop = |t: &Tensor| Tensor::new(r, c, (0..r).flat_map(|i| t.row(i)[..c].to_vec()).collect()).unwrap();
        let (a, b) = (crop(&a), crop(&b));
        type Binary = fn(&mut Tape, Var, Var) -> Result<Var, DiffError>;
        let ops: [(&str, Binary); 4] = [
            ("add", |t, x, y| t.add(x, y)),
            ("sub", |t, x, y| t.sub(x, y)),
            ("mul", |t, x, y| t.mul(x, y)),
            ("concat", |t, x, y| t.concat(&[x, y, x])),
        ];
        for (name, op) in ops {
            let bb = b.clone();
            let rep = grad_check(move |t, v| { let o = t.constant(bb.clone()); let y = op(t, v, o)?; weighted_sum(t, y) }, &a, STEP, TOL).unwrap();
            prop_assert!(rep.passed, "{name} lhs: {rep:?}");
            let aa = a.clone();
            let rep = grad_check(move |t, v| { let o = t.constant(aa.clone()); let y = op(t, o, v)?; weighted_sum(t, y) }, &b, STEP, TOL).unwrap();
            prop_assert!(rep.passed, "{name} rhs: {rep:?}");
        }
    }

    #[test]
    fn affine_matches_finite_differences(batch in 1usize..5, inp in 1usize..6, out in 1usize..6, x in tensor_strategy(4, 5), w in tensor_strategy(5, 5), b in tensor_strategy(1, 5)) {
        let x = Tensor::new(batch, inp, (0..batch).flat_map(|i| x.row(i)[..inp].to_vec()).collect()).unwrap();
        let w = Tensor::new(inp, out, (0..inp).flat_map(|i| w.row(i)[..out].to_vec()).collect()).unwrap();
        let b = Tensor::new(1, out, b.row(0)[..out].to_vec()).unwrap();
        let (wc, bc) = (w.clone(), b.clone());
        let rep = grad_check(move |t, v| { let wv = t.constant(wc.clone()); let bv = t.constant(bc.clone()); let y = t.affine(v, wv, bv)?; weighted_sum(t, y) }, &x, STEP, TOL).unwrap();
        prop_assert!(rep.passed, "affine x: {rep:?}");
        let (xc, bc) = (x.clone(), b.clone());
        let rep = grad_check(move |t, v| { let xv = t.constant(xc.clone()); let bv = t.constant(bc.clone()); let y = t.affine(xv, v, bv)?; weighted_sum(t, y) }, &w, STEP, TOL).unwrap();
        prop_assert!(rep.passed, "affine w: {rep:?}");
        let (xc, wc) = (x.clone(), w.clone());
        let rep = grad_check(move |t, v| { let xv = t.constant(xc.clone()); let wv = t.constant(wc.clone()); let y = t.affine(xv, wv, v)?; weighted_sum(t, y) }, &b, STEP, TOL).unwrap();
        prop_assert!(rep.passed, "affine b: {rep:?}");
    }
}

#[test]
fn sqrt_at_zero_has_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row_vector(&[0.0, 4.0]).unwrap(), true);
    let y = tape.sqrt(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    let l = tape.sum(y).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.25]);
}

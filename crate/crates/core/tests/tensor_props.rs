//! Finite-difference checks for every tape primitive.

use distnet::tensor::{grad_check, grad_check_many, Padding, Tape, Tensor, Var};
use distnet::Result;
use proptest::prelude::*;

const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

/// Contracts an arbitrary-shaped output with fixed pseudo-random weights so
/// every output element contributes with a distinct coefficient.
fn weighted_sum(t: &mut Tape, y: Var) -> Result<Var> {
    let n = t.value(y).len();
    let w: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.731).sin()).collect();
    let shape = t.shape(y).to_vec();
    let wv = t.constant(Tensor::new(shape, w)?);
    let p = t.mul(y, wv)?;
    t.sum(p)
}

fn away_from_zero(v: f64) -> f64 {
    if v.abs() >= 1e-3 {
        v
    } else if v >= 0.0 {
        v + 0.01
    } else {
        v - 0.01
    }
}

fn vals(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matmul_grad(a in vals(6), b in vals(12)) {
        let errs = grad_check_many(
            |t, v| { let c = t.matmul(v[0], v[1])?; weighted_sum(t, c) },
            &[Tensor::matrix(2, 3, a).unwrap(), Tensor::matrix(3, 4, b).unwrap()],
            H,
        ).unwrap();
        prop_assert!(errs.iter().all(|&e| e <= TOL), "{errs:?}");
    }

    #[test]
    fn conv2d_grad(x in vals(4 * 5 * 2), k in vals(3 * 3 * 2 * 3), b in vals(3), same in any::<bool>()) {
        let pad = if same { Padding::Same } else { Padding::Valid };
        let errs = grad_check_many(
            |t, v| { let y = t.conv2d(v[0], v[1], v[2], pad)?; weighted_sum(t, y) },
            &[
                Tensor::new(vec![4, 5, 2], x).unwrap(),
                Tensor::new(vec![3, 3, 2, 3], k).unwrap(),
                Tensor::vector(b),
            ],
            H,
        ).unwrap();
        prop_assert!(errs.iter().all(|&e| e <= TOL), "{errs:?}");
    }

    #[test]
    fn binary_grads(a in vals(5), b in vals(5)) {
        let b_pos: Vec<f64> = b.iter().map(|v| v.abs() + 0.5).collect();
        let inputs = [Tensor::vector(a), Tensor::vector(b_pos)];
        for which in 0..4 {
            let errs = grad_check_many(
                |t, v| {
                    let y = match which {
                        0 => t.add(v[0], v[1])?,
                        1 => t.sub(v[0], v[1])?,
                        2 => t.mul(v[0], v[1])?,
                        _ => t.div(v[0], v[1])?,
                    };
                    weighted_sum(t, y)
                },
                &inputs,
                H,
            ).unwrap();
            prop_assert!(errs.iter().all(|&e| e <= TOL), "op {which}: {errs:?}");
        }
    }

    #[test]
    fn scalar_broadcast_grad(a in vals(4), s in -2.0f64..2.0) {
        let errs = grad_check_many(
            |t, v| { let y = t.mul(v[0], v[1])?; weighted_sum(t, y) },
            &[Tensor::vector(a), Tensor::scalar(s)],
            H,
        ).unwrap();
        prop_assert!(errs.iter().all(|&e| e <= TOL), "{errs:?}");
    }

    #[test]
    fn unary_grads(a in vals(6)) {
        let x = Tensor::vector(a.iter().map(|&v| away_from_zero(v)).collect());
        for which in 0..4 {
            let err = grad_check(
                |t, v| {
                    let y = match which {
                        0 => t.sigmoid(v)?,
                        1 => t.tanh(v)?,
                        2 => t.selu(v)?,
                        _ => t.abs(v)?,
                    };
                    weighted_sum(t, y)
                },
                &x,
                H,
            ).unwrap();
            prop_assert!(err <= TOL, "op {which}: {err}");
        }
    }

    #[test]
    fn shape_op_grads(a in vals(12), b in vals(4)) {
        let m = Tensor::matrix(3, 4, a).unwrap();
        let bias = Tensor::vector(b);
        let errs = grad_check_many(
            |t, v| {
                let tr = t.transpose(v[0])?;
                let r = t.reshape(tr, &[2, 6])?;
                let row = t.row(v[0], 1)?;
                let biased = t.add_row_bias(v[0], v[1])?;
                let sc = t.scale(biased, -0.7)?;
                let shifted = t.add_scalar(sc, 0.3)?;
                let s1 = weighted_sum(t, r)?;
                let s2 = weighted_sum(t, row)?;
                let s3 = weighted_sum(t, shifted)?;
                let a = t.add(s1, s2)?;
                t.add(a, s3)
            },
            &[m, bias],
            H,
        ).unwrap();
        prop_assert!(errs.iter().all(|&e| e <= TOL), "{errs:?}");
    }

    #[test]
    fn concat_and_spot_grads(a in vals(2 * 3 * 2), b in vals(2 * 3 * 1), r in 0usize..2, c in 0usize..3) {
        let errs = grad_check_many(
            |t, v| {
                let cat = t.concat(&[v[0], v[1]], 2)?;
                let spot = t.slice_spot(cat, r, c)?;
                let s1 = weighted_sum(t, cat)?;
                let s2 = weighted_sum(t, spot)?;
                t.add(s1, s2)
            },
            &[
                Tensor::new(vec![2, 3, 2], a).unwrap(),
                Tensor::new(vec![2, 3, 1], b).unwrap(),
            ],
            H,
        ).unwrap();
        prop_assert!(errs.iter().all(|&e| e <= TOL), "{errs:?}");
    }

    #[test]
    fn gather_crop_floor_grads(table in vals(4 * 3), img in vals(3 * 3 * 2), top in -2isize..2, left in -2isize..2) {
        let errs = grad_check_many(
            |t, v| {
                let g = t.gather_rows(v[0], &[3, 1, 3, 0])?;
                let c = t.crop(v[1], top, left, 3, 2)?;
                let a = t.abs(g)?;
                let f = t.max_scalar(a, 0.5)?;
                let s1 = weighted_sum(t, f)?;
                let s2 = weighted_sum(t, c)?;
                let m = t.mean(g)?;
                let x = t.add(s1, s2)?;
                t.add(x, m)
            },
            &[
                Tensor::matrix(4, 3, table.iter().map(|&v| {
                    // keep |v| away from the 0.5 floor and the abs kink
                    let v = away_from_zero(v);
                    if (v.abs() - 0.5).abs() < 1e-3 { v * 1.01 } else { v }
                }).collect()).unwrap(),
                Tensor::new(vec![3, 3, 2], img).unwrap(),
            ],
            H,
        ).unwrap();
        prop_assert!(errs.iter().all(|&e| e <= TOL), "{errs:?}");
    }

    #[test]
    fn backward_is_linear(x in vals(5), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = |t: &mut Tape, v: Var| -> Result<Var> {
            let s = t.tanh(v)?;
            let p = t.mul(s, v)?;
            t.sum(p)
        };
        let g = |t: &mut Tape, v: Var| -> Result<Var> {
            let s = t.sigmoid(v)?;
            weighted_sum(t, s)
        };
        let grad_of = |which: u8| -> Vec<f64> {
            let mut t = Tape::new();
            let v = t.param(Tensor::vector(x.clone()));
            let out = match which {
                0 => f(&mut t, v).unwrap(),
                1 => g(&mut t, v).unwrap(),
                _ => {
                    let fv = f(&mut t, v).unwrap();
                    let gv = g(&mut t, v).unwrap();
                    let fa = t.scale(fv, a).unwrap();
                    let gb = t.scale(gv, b).unwrap();
                    t.add(fa, gb).unwrap()
                }
            };
            t.backward(out).unwrap();
            t.grad_or_zeros(v)
        };
        let (gf, gg, gc) = (grad_of(0), grad_of(1), grad_of(2));
        for i in 0..x.len() {
            prop_assert!((gc[i] - (a * gf[i] + b * gg[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn concat_then_read_back_recovers_parts(a in vals(6), b in vals(4)) {
        let mut t = Tape::new();
        let pa = t.constant(Tensor::matrix(3, 2, a.clone()).unwrap());
        let pb = t.constant(Tensor::matrix(2, 2, b.clone()).unwrap());
        let cat = t.concat(&[pa, pb], 0).unwrap();
        let mut back_a = Vec::new();
        for i in 0..3 { let r = t.row(cat, i).unwrap(); back_a.extend_from_slice(t.value(r)); }
        let mut back_b = Vec::new();
        for i in 3..5 { let r = t.row(cat, i).unwrap(); back_b.extend_from_slice(t.value(r)); }
        prop_assert_eq!(back_a, a);
        prop_assert_eq!(back_b, b);
    }
}

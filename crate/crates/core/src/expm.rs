//! Dense matrix exponential by scaling and squaring with diagonal Padé
//! approximants (degrees 3, 5, 7, 9, 13), following Higham's 2005 algorithm.

use faer::prelude::*;
use faer::Mat;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: &Mat<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `sum_k c_k M_k` for equally sized matrices.
fn lincomb(terms: &[(f64, &Mat<f64>)]) -> Mat<f64> {
    let (r, c) = (terms[0].1.nrows(), terms[0].1.ncols());
    let mut out = Mat::zeros(r, c);
    for &(coef, m) in terms {
        if coef == 0.0 {
            continue;
        }
        for j in 0..c {
            for i in 0..r {
                out[(i, j)] += coef * m[(i, j)];
            }
        }
    }
    out
}

fn add_identity(m: &mut Mat<f64>, coef: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += coef;
    }
}

/// Odd and even parts `(U, V)` of the degree-`m` Padé numerator, `m <= 9`.
fn pade_low(a: &Mat<f64>, b: &[f64]) -> (Mat<f64>, Mat<f64>) {
    let m = b.len() - 1;
    let a2 = a * a;
    let mut powers = vec![a2];
    while 2 * powers.len() < m - 1 {
        let next = powers.last().unwrap() * &powers[0];
        powers.push(next);
    }
    // U = A (b_1 I + b_3 A^2 + ...), V = b_0 I + b_2 A^2 + ...
    let odd: Vec<(f64, &Mat<f64>)> = powers.iter().enumerate().map(|(k, p)| (b[2 * k + 3], p)).collect();
    let even: Vec<(f64, &Mat<f64>)> = powers.iter().enumerate().map(|(k, p)| (b[2 * k + 2], p)).collect();
    let mut inner = lincomb(&odd);
    add_identity(&mut inner, b[1]);
    let u = a * &inner;
    let mut v = lincomb(&even);
    add_identity(&mut v, b[0]);
    (u, v)
}

fn pade_13(a: &Mat<f64>) -> (Mat<f64>, Mat<f64>) {
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let w1 = lincomb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)]);
    let mut w2 = lincomb(&[(b[7], &a6), (b[5], &a4), (b[3], &a2)]);
    add_identity(&mut w2, b[1]);
    let z1 = lincomb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)]);
    let mut z2 = lincomb(&[(b[6], &a6), (b[4], &a4), (b[2], &a2)]);
    add_identity(&mut z2, b[0]);
    let w = &(&a6 * &w1) + &w2;
    let u = a * &w;
    let v = &(&a6 * &z1) + &z2;
    (u, v)
}

/// `exp(A)` for a square real matrix.
pub fn expm(a: &Mat<f64>) -> Mat<f64> {
    assert_eq!(a.nrows(), a.ncols(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let norm = norm1(a);
    if norm == 0.0 {
        return Mat::identity(n, n);
    }

    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, b);
            return solve_pade(&u, &v);
        }
    }

    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scale = 0.5f64.powi(s);
    let scaled = Mat::from_fn(n, n, |i, j| scale * a[(i, j)]);
    let (u, v) = pade_13(&scaled);
    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `(V - U)^{-1} (V + U)`.
fn solve_pade(u: &Mat<f64>, v: &Mat<f64>) -> Mat<f64> {
    let p = v + u;
    let q = v - u;
    q.partial_piv_lu().solve(&p)
}

#![allow(dead_code)]

use nalgebra::DMatrix;
use nvmlens::memsim::DataObject;
use num::{BigRational, Signed, ToPrimitive, Zero};

pub fn data_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

/// Solves the normal equations of `y ~ 1 + X` in exact rational arithmetic.
pub fn exact_normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let (n, p) = x.shape();
    let q = |v: f64| BigRational::from_float(v).unwrap();
    let row = |i: usize| -> Vec<BigRational> {
        std::iter::once(BigRational::from_integer(1.into()))
            .chain((0..p).map(|j| q(x[(i, j)])))
            .collect()
    };
    let rows: Vec<Vec<BigRational>> = (0..n).map(row).collect();
    let m = p + 1;
    let mut a = vec![vec![BigRational::zero(); m + 1]; m];
    for (r, yi) in rows.iter().zip(y) {
        let yi = q(*yi);
        for i in 0..m {
            for j in 0..m {
                a[i][j] += &r[i] * &r[j];
            }
            a[i][m] += &r[i] * &yi;
        }
    }
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| a[i][c].abs().cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..m {
            if r != c && !a[r][c].is_zero() {
                let f = &a[r][c] / &a[c][c];
                for k in c..=m {
                    let v = &f * &a[c][k];
                    a[r][k] -= v;
                }
            }
        }
    }
    (0..m).map(|i| (&a[i][m] / &a[i][i]).to_f64().unwrap()).collect()
}


/// Best captured write share over all subsets that fit the budget.
pub fn exhaustive_best(objects: &[DataObject], budget: u64) -> f64 {
    let n = objects.len();
    let mut size = vec![0u64; 1 << n];
    let mut share = vec![0f64; 1 << n];
    let mut best = 0.0f64;
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        size[mask] = size[rest] + objects[low].size_bytes;
        share[mask] = share[rest] + objects[low].write_share;
        if size[mask] <= budget && share[mask] > best {
            best = share[mask];
        }
    }
    best
}

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// In-place lower Cholesky factor of a symmetric matrix; the upper triangle is ignored.
/// A pivot at or below `1e-13 * max_diag` is treated as singular.
pub fn cholesky(mut a: Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix");
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    for j in 0..n {
        let mut d = a[[j, j]];
        {
            let row = a.row(j);
            let rj = row.as_slice().expect("standard layout");
            d -= rj[..j].iter().map(|x| x * x).sum::<f64>();
        }
        if !(d > tol) {
            return Err(Error::SingularSystem);
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let s = {
                let ri = a.row(i);
                let rj = a.row(j);
                let (ri, rj) = (ri.as_slice().expect("layout"), rj.as_slice().expect("layout"));
                ri[..j].iter().zip(&rj[..j]).map(|(x, y)| x * y).sum::<f64>()
            };
            a[[i, j]] = (a[[i, j]] - s) / d;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[[i, j]] = 0.0;
        }
    }
    Ok(a)
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[[i, k]] * y[k]).sum();
        y[i] = (y[i] - s) / l[[i, i]];
    }
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[[k, i]] * y[k]).sum();
        y[i] = (y[i] - s) / l[[i, i]];
    }
    y
}

/// `X v` over contiguous rows.
pub fn matvec(x: ArrayView2<f64>, v: &[f64]) -> Array1<f64> {
    x.rows()
        .into_iter()
        .map(|row| match row.as_slice() {
            Some(r) => r.iter().zip(v).map(|(a, b)| a * b).sum(),
            None => row.iter().zip(v).map(|(a, b)| a * b).sum(),
        })
        .collect()
}

/// `Xᵀ r` accumulated row by row.
pub fn tmatvec(x: ArrayView2<f64>, r: &[f64]) -> Array1<f64> {
    let mut out = vec![0.0; x.ncols()];
    for (row, &ri) in x.rows().into_iter().zip(r) {
        if ri == 0.0 {
            continue;
        }
        match row.as_slice() {
            Some(s) => out.iter_mut().zip(s).for_each(|(o, a)| *o += ri * a),
            None => out.iter_mut().zip(row.iter()).for_each(|(o, a)| *o += ri * a),
        }
    }
    Array1::from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let l = cholesky(a.clone()).unwrap();
        assert!((l.dot(&l.t()) - &a).iter().all(|x| x.abs() < 1e-12));
        let x = cholesky_solve(&l, b.view());
        assert!((a.dot(&x) - &b).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn products_match_ndarray() {
        let x = array![[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0]];
        let v = [0.2, -1.0, 4.0];
        assert_eq!(matvec(x.view(), &v), x.dot(&array![0.2, -1.0, 4.0]));
        assert_eq!(tmatvec(x.view(), &[1.5, -2.0]), x.t().dot(&array![1.5, -2.0]));
        assert_eq!(matvec(x.t(), &[1.5, -2.0]), x.t().dot(&array![1.5, -2.0]));
    }

    #[test]
    fn singular_detected() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(cholesky(a), Err(Error::SingularSystem)));
    }
}

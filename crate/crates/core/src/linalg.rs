//! Small dense linear algebra for normal equations and rank checks.

/// Row-major square or rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-12` times the largest
/// absolute entry of `A`.
pub fn solve(a: &Dense, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return if n == 0 { Some(Vec::new()) } else { None };
    }
    let mut m = a.data.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[pivot * n + col].abs() <= 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                m.swap(pivot * n + c, col * n + c);
            }
            rhs.swap(pivot, col);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m[row * n + c] -= factor * m[col * n + c];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| m[row * n + c] * x[c]).sum();
        x[row] = (rhs[row] - tail) / m[row * n + row];
    }
    Some(x)
}

/// Least squares `min |X beta - y|` through the normal equations.
pub fn least_squares(x: &Dense, y: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(x.rows, y.len());
    let k = x.cols;
    let mut gram = Dense::zeros(k, k);
    let mut xty = vec![0.0; k];
    for r in 0..x.rows {
        let row = &x.data[r * k..(r + 1) * k];
        for i in 0..k {
            xty[i] += row[i] * y[r];
            for j in i..k {
                gram.add(i, j, row[i] * row[j]);
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            let v = gram.get(j, i);
            gram.set(i, j, v);
        }
    }
    solve(&gram, &xty)
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn rank(a: &Dense, rel_tol: f64) -> usize {
    let (rows, cols) = (a.rows, a.cols);
    let mut m = a.data.clone();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut used_cols = vec![false; cols];
    let mut used_rows = vec![false; rows];
    loop {
        let mut best = (0.0, 0, 0);
        for r in (0..rows).filter(|&r| !used_rows[r]) {
            for c in (0..cols).filter(|&c| !used_cols[c]) {
                let v = m[r * cols + c].abs();
                if v > best.0 {
                    best = (v, r, c);
                }
            }
        }
        let (v, pr, pc) = best;
        if v <= rel_tol * scale {
            return rank;
        }
        rank += 1;
        used_rows[pr] = true;
        used_cols[pc] = true;
        let pivot = m[pr * cols + pc];
        for r in (0..rows).filter(|&r| !used_rows[r]) {
            let factor = m[r * cols + pc] / pivot;
            if factor != 0.0 {
                for c in 0..cols {
                    m[r * cols + c] -= factor * m[pr * cols + c];
                }
            }
        }
    }
}

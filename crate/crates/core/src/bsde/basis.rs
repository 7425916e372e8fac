//! Polynomial least squares on one time slice.
//!
//! States are centred and scaled per component, monomials up to the total
//! degree are built from the scaled state, and every column is standardized.
//! The intercept is fitted separately (it is the target mean, because the
//! standardized columns have mean zero), so the ridge never biases constants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::stats::pairwise_sum;

const CHUNK: usize = 4096;

/// Exponent vectors of all monomials with `1 ≤ total degree ≤ degree`.
pub(crate) fn monomials(dim: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = vec![0u8; dim];
    fn rec(pos: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos == cur.len() {
            if cur.iter().any(|&e| e > 0) {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=left {
            cur[pos] = e as u8;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, degree, &mut current, &mut out);
    out.sort_by_key(|e| {
        (
            e.iter().map(|&x| x as usize).sum::<usize>(),
            std::cmp::Reverse(e.clone()),
        )
    });
    out
}

/// A fitted slice: the state transform, the kept columns and one coefficient
/// vector per target.
#[derive(Debug, Clone)]
pub(crate) struct SliceFit {
    center: Vec<f64>,
    scale: Vec<f64>,
    exps: Vec<Vec<u8>>,
    col_mean: Vec<f64>,
    col_sd: Vec<f64>,
    /// `[target][1 + columns]`, intercept first.
    coef: Vec<Vec<f64>>,
    pub(crate) condition: f64,
}

/// Standardized design on one slice, shared by all its targets.
pub(crate) struct Design {
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols`.
    x: Vec<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    fit: SliceFit,
}

fn column_stats(values: impl Fn(usize) -> f64 + Sync, rows: usize) -> (f64, f64) {
    let v: Vec<f64> = (0..rows).into_par_iter().map(&values).collect();
    let mean = pairwise_sum(&v) / rows as f64;
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&sq) / rows as f64).sqrt())
}

fn eval_monomial(u: &[f64], e: &[u8]) -> f64 {
    let mut p = 1.0;
    for (x, &k) in u.iter().zip(e) {
        if k > 0 {
            p *= x.powi(k as i32);
        }
    }
    p
}

impl Design {
    /// Builds the design from `rows` states of length `dim` given by `state`
    /// and factors its ridged Gram matrix.
    pub(crate) fn build(
        state: impl Fn(usize, &mut [f64]) + Sync,
        rows: usize,
        dim: usize,
        degree: usize,
        ridge: f64,
    ) -> Self {
        let mut states = vec![0.0; rows * dim];
        states
            .par_chunks_mut(dim)
            .enumerate()
            .for_each(|(r, row)| state(r, row));
        let mut center = vec![0.0; dim];
        let mut scale = vec![0.0; dim];
        for d in 0..dim {
            let (m, sd) = column_stats(|r| states[r * dim + d], rows);
            center[d] = m;
            scale[d] = if sd > 1e-12 * (1.0 + m.abs()) { sd } else { 0.0 };
        }
        let exps: Vec<Vec<u8>> = monomials(dim, degree)
            .into_iter()
            .filter(|e| e.iter().zip(&scale).all(|(&k, &s)| k == 0 || s > 0.0))
            .collect();
        let to_u = |r: usize, u: &mut [f64]| {
            for d in 0..dim {
                let x = states[r * dim + d];
                u[d] = if scale[d] > 0.0 {
                    (x - center[d]) / scale[d]
                } else {
                    0.0
                };
            }
        };
        let raw_cols = exps.len();
        let mut raw = vec![0.0; rows * raw_cols];
        raw.par_chunks_mut(raw_cols.max(1)).enumerate().for_each(|(r, row)| {
            if raw_cols == 0 {
                return;
            }
            let mut u = vec![0.0; dim];
            to_u(r, &mut u);
            for (c, e) in exps.iter().enumerate() {
                row[c] = eval_monomial(&u, e);
            }
        });
        let mut kept = Vec::new();
        let mut col_mean = Vec::new();
        let mut col_sd = Vec::new();
        for c in 0..raw_cols {
            let (m, sd) = column_stats(|r| raw[r * raw_cols + c], rows);
            if sd > 1e-10 {
                kept.push(c);
                col_mean.push(m);
                col_sd.push(sd);
            }
        }
        let cols = kept.len();
        let mut x = vec![0.0; rows * cols];
        if cols > 0 {
            x.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
                for (j, &c) in kept.iter().enumerate() {
                    row[j] = (raw[r * raw_cols + c] - col_mean[j]) / col_sd[j];
                }
            });
        }
        drop(raw);
        drop(states);
        let exps: Vec<Vec<u8>> = kept.iter().map(|&c| exps[c].clone()).collect();

        let (chol, condition) = if cols == 0 {
            (None, 1.0)
        } else {
            let gram = gram(&x, rows, cols);
            let eig = SymmetricEigen::new(gram.clone());
            let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let cond = if min > 0.0 { max / min } else { f64::INFINITY };
            let mut a = gram;
            for j in 0..cols {
                a[(j, j)] += ridge;
            }
            (a.cholesky(), cond)
        };
        Self {
            rows,
            cols,
            x,
            chol,
            fit: SliceFit {
                center,
                scale,
                exps,
                col_mean,
                col_sd,
                coef: Vec::new(),
                condition,
            },
        }
    }

    pub(crate) fn condition(&self) -> f64 {
        self.fit.condition
    }

    /// Regresses `y` on the design, stores the coefficients as the next
    /// target and writes the fitted values into `fitted`.
    pub(crate) fn regress(&mut self, y: &[f64], fitted: &mut [f64]) {
        let (rows, cols) = (self.rows, self.cols);
        let ybar = pairwise_sum(y) / rows as f64;
        let mut coef = vec![ybar];
        if cols > 0 {
            let x = &self.x;
            let partial: Vec<Vec<f64>> = (0..rows.div_ceil(CHUNK))
                .into_par_iter()
                .map(|b| {
                    let mut acc = vec![0.0; cols];
                    for r in b * CHUNK..((b + 1) * CHUNK).min(rows) {
                        let d = y[r] - ybar;
                        for (a, xv) in acc.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
                            *a += xv * d;
                        }
                    }
                    acc
                })
                .collect();
            let mut rhs = DVector::<f64>::zeros(cols);
            for p in &partial {
                for j in 0..cols {
                    rhs[j] += p[j];
                }
            }
            rhs /= rows as f64;
            let beta = self.chol.as_ref().expect("design has columns").solve(&rhs);
            coef.extend(beta.iter());
        }
        let beta = &coef[1..];
        fitted.par_iter_mut().enumerate().for_each(|(r, f)| {
            let row = &self.x[r * cols..(r + 1) * cols];
            *f = ybar + row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        });
        self.fit.coef.push(coef);
    }

    pub(crate) fn into_fit(self) -> SliceFit {
        self.fit
    }
}

fn gram(x: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    let partial: Vec<Vec<f64>> = (0..rows.div_ceil(CHUNK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; cols * cols];
            for r in b * CHUNK..((b + 1) * CHUNK).min(rows) {
                let row = &x[r * cols..(r + 1) * cols];
                for i in 0..cols {
                    let xi = row[i];
                    for j in i..cols {
                        acc[i * cols + j] += xi * row[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut g = DMatrix::<f64>::zeros(cols, cols);
    for p in &partial {
        for i in 0..cols {
            for j in i..cols {
                g[(i, j)] += p[i * cols + j];
            }
        }
    }
    for i in 0..cols {
        for j in i..cols {
            let v = g[(i, j)] / rows as f64;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

impl SliceFit {
    /// Evaluates target `target` at a state.
    pub(crate) fn eval(&self, target: usize, state: &[f64]) -> f64 {
        let coef = &self.coef[target];
        let u: Vec<f64> = state
            .iter()
            .enumerate()
            .map(|(d, x)| {
                if self.scale[d] > 0.0 {
                    (x - self.center[d]) / self.scale[d]
                } else {
                    0.0
                }
            })
            .collect();
        let mut v = coef[0];
        for (j, e) in self.exps.iter().enumerate() {
            v += coef[j + 1] * (eval_monomial(&u, e) - self.col_mean[j]) / self.col_sd[j];
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(2, 3).len(), 9);
        assert_eq!(monomials(1, 3).len(), 3);
        assert_eq!(monomials(3, 2).len(), 9);
        assert!(monomials(2, 3)
            .iter()
            .all(|e| e.iter().map(|&x| x as usize).sum::<usize>() <= 3));
    }

    #[test]
    fn recovers_cubic_exactly() {
        let rows = 2000;
        let state = |r: usize, out: &mut [f64]| {
            let t = r as f64 / rows as f64;
            out[0] = (7.0 * t).sin() * 3.0;
            out[1] = 1.0 + (13.0 * t).cos();
        };
        let mut design = Design::build(state, rows, 2, 3, 0.0);
        let truth = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] * x[1] + 0.5 * x[0] * x[0] * x[1];
        let y: Vec<f64> = (0..rows)
            .map(|r| {
                let mut b = [0.0; 2];
                state(r, &mut b);
                truth(&b)
            })
            .collect();
        let mut fitted = vec![0.0; rows];
        design.regress(&y, &mut fitted);
        for (a, b) in fitted.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
        let fit = design.into_fit();
        assert!((fit.eval(0, &[0.3, -0.2]) - truth(&[0.3, -0.2])).abs() < 1e-8);
    }

    #[test]
    fn degenerate_state_keeps_only_the_intercept() {
        let mut design = Design::build(|_, out: &mut [f64]| out.fill(2.0), 100, 2, 3, 1e-8);
        assert_eq!(design.cols, 0);
        let y: Vec<f64> = (0..100).map(|r| r as f64).collect();
        let mut fitted = vec![0.0; 100];
        design.regress(&y, &mut fitted);
        assert!(fitted.iter().all(|&f| f == 49.5));
    }
}

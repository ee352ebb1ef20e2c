//! Full nonlinear network solve of a small module, shared by test targets.

use nalgebra::{DMatrix, DVector};

use pvhier::cell::OperatingDiodeParams;

pub const VF: f64 = 0.7;

fn diode_conductance(op: &OperatingDiodeParams<f64>, vd: f64) -> f64 {
    let (a1, a2) = (op.n1 * op.vt, op.n2 * op.vt);
    op.isat1 * (vd / a1).exp() / a1 + op.isat2 * (vd / a2).exp() / a2 + 1.0 / op.rsh
}

fn cell_residual(op: &OperatingDiodeParams<f64>, v: f64, i: f64) -> f64 {
    let vd = v + i * op.rs;
    let (a1, a2) = (op.n1 * op.vt, op.n2 * op.vt);
    op.iph - op.isat1 * (vd / a1).exp_m1() - op.isat2 * (vd / a2).exp_m1() - vd / op.rsh - i
}

/// Terminal current of a module of `cells[s][c]` behind ideal bypass diodes
/// at terminal voltage `v`, by Newton on the full network for every
/// combination of conducting diodes. Unknowns: module current, one current
/// per substring, one voltage per cell.
pub fn network_current(cells: &[Vec<OperatingDiodeParams<f64>>], v: f64, guess: f64) -> f64 {
    let m = cells.len();
    let n_cells: usize = cells.iter().map(Vec::len).sum();
    let n = 1 + m + n_cells;
    let mut found: Vec<f64> = Vec::new();
    for mask in 0..(1u32 << m) {
        let active = |s: usize| mask & (1 << s) != 0;
        let mut x = DVector::zeros(n);
        x[0] = guess;
        for s in 0..m {
            x[1 + s] = guess;
        }
        let per = v / n_cells as f64;
        for k in 0..n_cells {
            x[1 + m + k] = per;
        }
        let eval = |x: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
            let mut f = DVector::zeros(n);
            let mut j = DMatrix::zeros(n, n);
            let mut row = 0;
            let mut k = 1 + m;
            let mut total_v_row = vec![0.0; n];
            let mut sum_v = 0.0;
            for (s, sub) in cells.iter().enumerate() {
                let first = k;
                for op in sub {
                    let (vc, is) = (x[k], x[1 + s]);
                    let g = diode_conductance(op, vc + is * op.rs);
                    f[row] = cell_residual(op, vc, is);
                    j[(row, k)] = -g;
                    j[(row, 1 + s)] = -(1.0 + op.rs * g);
                    total_v_row[k] = 1.0;
                    sum_v += vc;
                    row += 1;
                    k += 1;
                }
                let v_sub: f64 = (first..k).map(|q| x[q]).sum();
                if active(s) {
                    f[row] = v_sub + VF;
                    for q in first..k {
                        j[(row, q)] = 1.0;
                    }
                } else {
                    f[row] = x[1 + s] - x[0];
                    j[(row, 1 + s)] = 1.0;
                    j[(row, 0)] = -1.0;
                }
                row += 1;
            }
            f[row] = sum_v - v;
            for (q, &c) in total_v_row.iter().enumerate() {
                j[(row, q)] = c;
            }
            (f, j)
        };
        let mut converged = false;
        for _ in 0..200 {
            let (f, j) = eval(&x);
            let norm = f.norm();
            if norm < 1e-11 {
                converged = true;
                break;
            }
            let Some(dx) = j.lu().solve(&f) else { break };
            let mut t = 1.0;
            loop {
                let trial = &x - &dx * t;
                if eval(&trial).0.norm() < norm || t < 1e-6 {
                    x = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        if !converged {
            continue;
        }
        // complementarity of the ideal diodes
        let consistent = (0..m).all(|s| {
            let start = 1 + m + cells[..s].iter().map(Vec::len).sum::<usize>();
            let v_sub: f64 = (start..start + cells[s].len()).map(|q| x[q]).sum();
            if active(s) {
                x[0] - x[1 + s] >= -1e-9
            } else {
                v_sub >= -VF - 1e-9
            }
        });
        if consistent {
            found.push(x[0]);
        }
    }
    assert!(!found.is_empty(), "no consistent network solution at v = {v}");
    let first = found[0];
    assert!(found.iter().all(|&i| (i - first).abs() < 1e-6), "ambiguous network solutions {found:?}");
    first
}

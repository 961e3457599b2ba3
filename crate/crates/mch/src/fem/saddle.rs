//! Sparse symmetric-indefinite KKT solves for the constrained cell problems.
//!
//! The system `[A, C^T; C, 0] [x; lambda] = [b; g]` is factored once per
//! macropoint with a sparse LU and reused for every right-hand side of that
//! macropoint. Residuals are always re-checked; one step of iterative
//! refinement is applied before a solve is declared failed.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::fem::constraints::ConstraintSystem;
use crate::fem::csr::Csr;

const PRIMAL_TOL: f64 = 1e-10;
const CONSTRAINT_TOL: f64 = 1e-10;

/// Factored KKT system.
pub struct SaddleFactor<'a> {
    a: &'a Csr,
    c: &'a ConstraintSystem,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
    m: usize,
}

/// Outcome of one saddle solve.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub primal: Vec<f64>,
    /// Multiplier vector `lambda` with `A x + C^T lambda = b`.
    pub multipliers: Vec<f64>,
    pub primal_residual: f64,
    pub constraint_residual: f64,
}

/// Factor `[A, C^T; C, 0]`.
pub fn factor_saddle<'a>(a: &'a Csr, c: &'a ConstraintSystem) -> Result<SaddleFactor<'a>> {
    let n = a.nrows;
    let m = c.n_rows();
    assert_eq!(a.ncols, n);
    assert_eq!(c.matrix.ncols, n);
    let mut triplets: Vec<Triplet<usize, usize, f64>> =
        Vec::with_capacity(a.nnz() + 2 * c.matrix.nnz());
    for r in 0..n {
        for (col, v) in a.row(r) {
            triplets.push(Triplet::new(r, col, v));
        }
    }
    for r in 0..m {
        for (col, v) in c.matrix.row(r) {
            triplets.push(Triplet::new(n + r, col, v));
            triplets.push(Triplet::new(col, n + r, v));
        }
    }
    if m > n {
        return Err(diagnose_rank(c));
    }
    let kkt = SparseColMat::<usize, f64>::try_new_from_triplets(n + m, n + m, &triplets)
        .map_err(|e| Error::Solver(format!("KKT assembly failed: {e:?}")))?;
    // faer panics instead of erroring on structurally singular input
    let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| kkt.sp_lu()))
        .map_err(|_| diagnose_rank(c))?
        .map_err(|_| diagnose_rank(c))?;
    Ok(SaddleFactor { a, c, lu, n, m })
}

impl SaddleFactor<'_> {
    pub fn n_primal(&self) -> usize {
        self.n
    }

    pub fn n_constraints(&self) -> usize {
        self.m
    }

    /// Solve for one right-hand side pair `(b, g)`.
    pub fn solve(&self, rhs_primal: &[f64], g: &[f64]) -> Result<SaddleSolution> {
        assert_eq!(rhs_primal.len(), self.n);
        assert_eq!(g.len(), self.m);
        let dim = self.n + self.m;
        let mut rhs = faer::Mat::<f64>::zeros(dim, 1);
        for (i, v) in rhs_primal.iter().enumerate() {
            rhs[(i, 0)] = *v;
        }
        for (i, v) in g.iter().enumerate() {
            rhs[(self.n + i, 0)] = *v;
        }
        let mut sol = self.lu.solve(&rhs);

        for attempt in 0..3 {
            let (x, lambda) = split(&sol, self.n, self.m);
            let (pres, cres) = self.residuals(&x, &lambda, rhs_primal, g);
            if pres <= PRIMAL_TOL && cres <= CONSTRAINT_TOL {
                return Ok(SaddleSolution {
                    primal: x,
                    multipliers: lambda,
                    primal_residual: pres,
                    constraint_residual: cres,
                });
            }
            if attempt == 2 {
                return Err(Error::Solver(format!(
                    "saddle solve did not converge: primal residual {pres:.3e}, constraint residual {cres:.3e}"
                )));
            }
            // one step of iterative refinement
            let mut resid = faer::Mat::<f64>::zeros(dim, 1);
            let ax = self.a.apply(&x);
            let ctl = self.c.matrix.apply_transpose(&lambda);
            for i in 0..self.n {
                resid[(i, 0)] = rhs_primal[i] - ax[i] - ctl[i];
            }
            let cx = self.c.matrix.apply(&x);
            for i in 0..self.m {
                resid[(self.n + i, 0)] = g[i] - cx[i];
            }
            let delta = self.lu.solve(&resid);
            for i in 0..dim {
                sol[(i, 0)] += delta[(i, 0)];
            }
        }
        unreachable!()
    }

    /// Componentwise backward-error primal residual and row-scaled constraint
    /// residual.
    fn residuals(&self, x: &[f64], lambda: &[f64], b: &[f64], g: &[f64]) -> (f64, f64) {
        let ax = self.a.apply(x);
        let ctl = self.c.matrix.apply_transpose(lambda);
        let ax_abs = self.a.apply_abs(x);
        let ctl_abs = self.c.matrix.apply_transpose_abs(lambda);
        let mut global: f64 = 1e-300;
        for i in 0..self.n {
            global = global.max(ax_abs[i] + ctl_abs[i] + b[i].abs());
        }
        let mut pres: f64 = 0.0;
        for i in 0..self.n {
            let r = (ax[i] + ctl[i] - b[i]).abs();
            let scale = (ax_abs[i] + ctl_abs[i] + b[i].abs()).max(1e-9 * global);
            if r > 0.0 {
                pres = pres.max(r / scale);
            }
        }
        let cres = self
            .c
            .matrix
            .apply(x)
            .iter()
            .zip(g.iter())
            .zip(self.c.row_sums.iter())
            .map(|((a, b), s)| (a - b).abs() / s.max(f64::MIN_POSITIVE))
            .fold(0.0f64, f64::max);
        (pres, cres)
    }
}

fn split(sol: &faer::Mat<f64>, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let x = (0..n).map(|i| sol[(i, 0)]).collect();
    let lambda = (0..m).map(|i| sol[(n + i, 0)]).collect();
    (x, lambda)
}

/// Identify the first dependent constraint row via a pivoted Gram Cholesky.
fn diagnose_rank(c: &ConstraintSystem) -> Error {
    let m = c.n_rows();
    let mut gram = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in i..m {
            let mut dot = 0.0;
            // rows are sparse and sorted by column
            let mut it_i = c.matrix.row(i).peekable();
            let mut it_j = c.matrix.row(j).peekable();
            while let (Some(&(ci, vi)), Some(&(cj, vj))) = (it_i.peek(), it_j.peek()) {
                match ci.cmp(&cj) {
                    std::cmp::Ordering::Less => {
                        it_i.next();
                    }
                    std::cmp::Ordering::Greater => {
                        it_j.next();
                    }
                    std::cmp::Ordering::Equal => {
                        dot += vi * vj;
                        it_i.next();
                        it_j.next();
                    }
                }
            }
            gram[i][j] = dot;
            gram[j][i] = dot;
        }
    }
    // unpivoted Cholesky; breakdown row = dependent constraint
    for k in 0..m {
        let mut diag = gram[k][k];
        for r in 0..k {
            diag -= gram[k][r] * gram[k][r];
        }
        if diag <= 1e-12 * c.row_sums[k].powi(2).max(1e-300) {
            let row = c.rows[k];
            return Error::RankDeficient {
                row: k,
                block: row.block,
                continuum: row.continuum,
            };
        }
        let droot = diag.sqrt();
        gram[k][k] = droot;
        for i in k + 1..m {
            let mut v = gram[i][k];
            for r in 0..k {
                v -= gram[i][r] * gram[k][r];
            }
            gram[i][k] = v / droot;
        }
    }
    Error::Solver("sparse LU failed on a full-rank KKT system".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::constraints::assemble_constraints;
    use crate::fem::stiffness::assemble_stiffness;
    use crate::media::{make_kappa, GeometrySpec};
    use crate::mesh::{build_coarse_layout, oversample_region, BlockId, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 1D hand solve: A = [[2]], C = [[1]], b = 0, g = 3.
    #[test]
    fn scalar_kkt_hand_solve() {
        let mut at = vec![(0usize, 0usize, 2.0f64)];
        let a = Csr::from_triplets(1, 1, &mut at);
        let mut ct = vec![(0usize, 0usize, 1.0f64)];
        let c = ConstraintSystem {
            grid: crate::mesh::SubGrid {
                cell_origin: [0, 0],
                fine_cells: [1, 1],
                step: 1,
            },
            rows: vec![crate::fem::constraints::ConstraintRow {
                block: BlockId::new(0, 0),
                continuum: 1,
            }],
            matrix: Csr::from_triplets(1, 1, &mut ct),
            row_sums: vec![1.0],
            moments: [vec![0.0], vec![0.0]],
        };
        let f = factor_saddle(&a, &c).unwrap();
        let s = f.solve(&[0.0], &[3.0]).unwrap();
        assert!((s.primal[0] - 3.0).abs() < 1e-12);
        // A x + C^T lambda = 0  =>  lambda = -6
        assert!((s.multipliers[0] + 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let l = build_coarse_layout(3, 4, Rect::UNIT).unwrap();
        let m = make_kappa(&l, &GeometrySpec::layered_default(&l), 0.5, 0).unwrap();
        let region = oversample_region(&l, BlockId::new(1, 1), 1).unwrap();
        let a = assemble_stiffness(&l, &m, &region, 1).unwrap();
        let c = assemble_constraints(&l, &m, &region, 1).unwrap();
        let f = factor_saddle(&a.matrix, &c).unwrap();
        let s = f
            .solve(&vec![0.0; f.n_primal()], &vec![0.0; f.n_constraints()])
            .unwrap();
        assert!(s.primal.iter().all(|v| v.abs() < 1e-12));
        assert!(s.multipliers.iter().all(|v| v.abs() < 1e-12));
    }

    /// Random SPD-plus-constraints instances against a dense LU oracle.
    #[test]
    fn random_instances_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10 {
            let n = rng.gen_range(5..30);
            let m = rng.gen_range(1..4);
            // SPD A = B^T B + I
            let mut bmat = vec![vec![0.0f64; n]; n];
            for r in bmat.iter_mut() {
                for v in r.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            let mut a_dense = vec![vec![0.0f64; n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = if i == j { 1.0 } else { 0.0 };
                    for k in 0..n {
                        acc += bmat[k][i] * bmat[k][j];
                    }
                    a_dense[i][j] = acc;
                }
            }
            let mut at = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    at.push((i, j, a_dense[i][j]));
                }
            }
            let a = Csr::from_triplets(n, n, &mut at);
            let mut ct = Vec::new();
            let mut c_dense = vec![vec![0.0f64; n]; m];
            for r in 0..m {
                for j in 0..n {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    c_dense[r][j] = v;
                    ct.push((r, j, v));
                }
            }
            let c = ConstraintSystem {
                grid: crate::mesh::SubGrid {
                    cell_origin: [0, 0],
                    fine_cells: [1, 1],
                    step: 1,
                },
                rows: (0..m)
                    .map(|_| crate::fem::constraints::ConstraintRow {
                        block: BlockId::new(0, 0),
                        continuum: 1,
                    })
                    .collect(),
                matrix: Csr::from_triplets(m, n, &mut ct),
                row_sums: vec![1.0; m],
                moments: [vec![0.0; m], vec![0.0; m]],
            };
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let f = factor_saddle(&a, &c).unwrap();
            let s = f.solve(&b, &g).unwrap();

            // dense oracle
            let dim = n + m;
            let mut kkt = nalgebra::DMatrix::<f64>::zeros(dim, dim);
            for i in 0..n {
                for j in 0..n {
                    kkt[(i, j)] = a_dense[i][j];
                }
            }
            for r in 0..m {
                for j in 0..n {
                    kkt[(n + r, j)] = c_dense[r][j];
                    kkt[(j, n + r)] = c_dense[r][j];
                }
            }
            let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
            for i in 0..n {
                rhs[i] = b[i];
            }
            for r in 0..m {
                rhs[n + r] = g[r];
            }
            let oracle = kkt.lu().solve(&rhs).expect("oracle solve");
            for i in 0..n {
                assert!(
                    (s.primal[i] - oracle[i]).abs() < 1e-10 * oracle.amax().max(1.0),
                    "trial {trial}: primal mismatch at {i}"
                );
            }
            for r in 0..m {
                assert!((s.multipliers[r] - oracle[n + r]).abs() < 1e-10 * oracle.amax().max(1.0));
            }
        }
    }

    /// Energy optimality: feasible perturbations cannot lower the energy.
    #[test]
    fn energy_optimality_over_constraint_kernel() {
        let l = build_coarse_layout(3, 4, Rect::UNIT).unwrap();
        let geom = GeometrySpec::Layered {
            period: 1.0 / 3.0,
            fraction: 0.5,
            offset: 0.0,
            axis: 1,
        };
        let m = make_kappa(&l, &geom, 0.25, 0).unwrap();
        let region = oversample_region(&l, BlockId::new(1, 1), 1).unwrap();
        let a = assemble_stiffness(&l, &m, &region, 1).unwrap();
        let c = assemble_constraints(&l, &m, &region, 1).unwrap();
        let f = factor_saddle(&a.matrix, &c).unwrap();
        let g = c.average_targets(1);
        let s = f.solve(&vec![0.0; f.n_primal()], &g).unwrap();
        let base = a.energy(&s.primal, &s.primal);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            // random kernel direction: w = z - C^T (CC^T)^{-1} C z
            let z: Vec<f64> = (0..f.n_primal()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cz = c.apply(&z);
            // solve the tiny Gram system densely
            let mm = c.n_rows();
            let mut gram = nalgebra::DMatrix::<f64>::zeros(mm, mm);
            for i in 0..mm {
                let mut ei = vec![0.0; mm];
                ei[i] = 1.0;
                let cti = c.matrix.apply_transpose(&ei);
                let cci = c.apply(&cti);
                for j in 0..mm {
                    gram[(j, i)] = cci[j];
                }
            }
            let rhs = nalgebra::DVector::from_vec(cz.clone());
            let y = gram.clone().lu().solve(&rhs).unwrap();
            let cty = c.matrix.apply_transpose(y.as_slice());
            let w: Vec<f64> = z.iter().zip(cty.iter()).map(|(a, b)| a - b).collect();
            let x1: Vec<f64> = s.primal.iter().zip(w.iter()).map(|(a, b)| a + b).collect();
            let perturbed = a.energy(&x1, &x1);
            assert!(perturbed >= base - 1e-9, "{perturbed} < {base}");
        }
    }

    #[test]
    fn rank_deficiency_reports_offending_row() {
        // duplicate constraint rows
        let mut at = vec![(0, 0, 2.0), (1, 1, 2.0)];
        let a = Csr::from_triplets(2, 2, &mut at);
        let mut ct = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)];
        let c = ConstraintSystem {
            grid: crate::mesh::SubGrid {
                cell_origin: [0, 0],
                fine_cells: [1, 1],
                step: 1,
            },
            rows: vec![
                crate::fem::constraints::ConstraintRow {
                    block: BlockId::new(0, 0),
                    continuum: 1,
                },
                crate::fem::constraints::ConstraintRow {
                    block: BlockId::new(0, 0),
                    continuum: 2,
                },
            ],
            matrix: Csr::from_triplets(2, 2, &mut ct),
            row_sums: vec![1.0, 1.0],
            moments: [vec![0.0; 2], vec![0.0; 2]],
        };
        match factor_saddle(&a, &c) {
            Err(Error::RankDeficient { row, continuum, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(continuum, 2);
            }
            Err(e) => {
                // acceptable alternative: LU succeeded but solve must fail
                panic!("expected rank deficiency, got {e}");
            }
            Ok(f) => {
                assert!(f.solve(&[0.0, 0.0], &[1.0, 2.0]).is_err());
            }
        }
    }
}

//! Dense bounded-variable primal simplex.
//!
//! Solves `min c·x` subject to range rows `lo ≤ A x ≤ hi` and variable
//! bounds `l ≤ x ≤ u`, starting from a caller-supplied point where every
//! structural variable sits at a finite bound (or at zero when free) and
//! every row is already within its range. Load-shedding problems always
//! have such a point (shed everything), so no phase one is needed.
//!
//! Each row gets a logical variable `r = A x`; the starting basis is the
//! set of logicals. Pricing is Dantzig's rule, switching to Bland's rule
//! after a run of degenerate pivots so the method cannot cycle.

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    /// The starting point violates a row range or a variable bound.
    InfeasibleStart {
        row: usize,
        value: f64,
    },
    Unbounded,
    IterationLimit,
}

impl std::fmt::Display for LpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpError::InfeasibleStart { row, value } => {
                write!(f, "starting point violates row {row} (value {value})")
            }
            LpError::Unbounded => f.write_str("objective unbounded"),
            LpError::IterationLimit => f.write_str("iteration limit reached"),
        }
    }
}

/// Dense LP in range-row form.
#[derive(Debug, Clone, Default)]
pub struct DenseLp {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row-major constraint matrix, one entry per structural variable.
    pub rows: Vec<Vec<f64>>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl DenseLp {
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        for r in &mut self.rows {
            r.push(0.0);
        }
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: &[(usize, f64)], lo: f64, hi: f64) -> usize {
        let mut row = vec![0.0; self.cost.len()];
        for &(j, v) in coeffs {
            row[j] += v;
        }
        self.rows.push(row);
        self.row_lo.push(lo);
        self.row_hi.push(hi);
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    /// Solves from `start`, which must hold each structural variable at a
    /// bound (or zero if free) and satisfy every row range.
    pub fn solve_from(&self, start: &[f64]) -> Result<LpSolution, LpError> {
        Tableau::new(self, start)?.run(self)
    }
}

struct Tableau {
    m: usize,
    cols: usize,
    /// `B^{-1} [A | -I]`, row-major, `m × cols`.
    t: Vec<f64>,
    /// Reduced costs for every column.
    d: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    /// Column basic in each row.
    basis: Vec<usize>,
    /// Row of each basic column, `usize::MAX` for nonbasic.
    row_of: Vec<usize>,
}

impl Tableau {
    fn new(lp: &DenseLp, start: &[f64]) -> Result<Self, LpError> {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let cols = n + m;
        assert_eq!(start.len(), n);

        let mut t = vec![0.0; m * cols];
        let mut x = vec![0.0; cols];
        x[..n].copy_from_slice(start);
        for (i, row) in lp.rows.iter().enumerate() {
            let base = i * cols;
            let mut act = 0.0;
            for j in 0..n {
                t[base + j] = -row[j];
                act += row[j] * start[j];
            }
            t[base + n + i] = 1.0;
            let scale = 1.0 + act.abs();
            if act < lp.row_lo[i] - FEAS_TOL * scale || act > lp.row_hi[i] + FEAS_TOL * scale {
                return Err(LpError::InfeasibleStart { row: i, value: act });
            }
            x[n + i] = act.clamp(lp.row_lo[i], lp.row_hi[i]);
        }

        let mut lo = lp.lower.clone();
        lo.extend_from_slice(&lp.row_lo);
        let mut hi = lp.upper.clone();
        hi.extend_from_slice(&lp.row_hi);

        let mut d = lp.cost.clone();
        d.resize(cols, 0.0);

        let basis: Vec<usize> = (n..cols).collect();
        let mut row_of = vec![usize::MAX; cols];
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = i;
        }
        Ok(Tableau {
            m,
            cols,
            t,
            d,
            lo,
            hi,
            x,
            basis,
            row_of,
        })
    }

    /// Direction (+1 / -1) in which nonbasic column `j` improves the
    /// objective, if any.
    fn improving_direction(&self, j: usize) -> Option<f64> {
        let (l, u, v, dj) = (self.lo[j], self.hi[j], self.x[j], self.d[j]);
        if l == u {
            return None;
        }
        if dj < -COST_TOL && v < u {
            Some(1.0)
        } else if dj > COST_TOL && v > l {
            Some(-1.0)
        } else {
            None
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.cols {
            if self.row_of[j] != usize::MAX {
                continue;
            }
            if let Some(dir) = self.improving_direction(j) {
                if bland {
                    return Some((j, dir));
                }
                let score = self.d[j].abs();
                if score > best_score {
                    best_score = score;
                    best = Some((j, dir));
                }
            }
        }
        best
    }

    fn run(mut self, lp: &DenseLp) -> Result<LpSolution, LpError> {
        let n = lp.num_vars();
        let max_iter = 50 * (self.cols + self.m) + 1000;
        let mut degenerate = 0usize;
        let mut iterations = 0usize;

        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let Some((enter, dir)) = self.choose_entering(bland) else {
                break;
            };
            iterations += 1;
            if iterations > max_iter {
                return Err(LpError::IterationLimit);
            }

            // ratio test: basic i moves by g_i * step
            let mut step = self.hi[enter] - self.lo[enter];
            let mut leave: Option<(usize, f64)> = None; // (row, bound value)
            let mut leave_pivot = 0.0f64;
            for i in 0..self.m {
                let tij = self.t[i * self.cols + enter];
                let g = -tij * dir;
                if g.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let (limit, bound) = if g > 0.0 {
                    if self.hi[b] == f64::INFINITY {
                        continue;
                    }
                    (((self.hi[b] - self.x[b]) / g).max(0.0), self.hi[b])
                } else {
                    if self.lo[b] == f64::NEG_INFINITY {
                        continue;
                    }
                    (((self.lo[b] - self.x[b]) / g).max(0.0), self.lo[b])
                };
                let better = match leave {
                    None => limit < step,
                    Some((r, _)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                g.abs() > leave_pivot
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = limit;
                    leave = Some((i, bound));
                    leave_pivot = g.abs();
                }
            }
            if step == f64::INFINITY {
                return Err(LpError::Unbounded);
            }
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            // move basics and the entering column
            for i in 0..self.m {
                let tij = self.t[i * self.cols + enter];
                if tij != 0.0 {
                    let b = self.basis[i];
                    self.x[b] += -tij * dir * step;
                }
            }
            self.x[enter] += dir * step;

            let Some((r, bound)) = leave else {
                // bound flip
                self.x[enter] = if dir > 0.0 {
                    self.hi[enter]
                } else {
                    self.lo[enter]
                };
                continue;
            };
            let leaving = self.basis[r];
            self.x[leaving] = bound;
            self.pivot(r, enter);
            self.basis[r] = enter;
            self.row_of[enter] = r;
            self.row_of[leaving] = usize::MAX;
        }

        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = x.iter().zip(&lp.cost).map(|(v, c)| v * c).sum();
        Ok(LpSolution {
            x,
            objective,
            iterations,
        })
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + col];
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[col] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        let eliminate = |row: &mut [f64]| {
            let f = row[col];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[col] = 0.0;
            }
        };
        for row in before.chunks_mut(cols) {
            eliminate(row);
        }
        for row in after.chunks_mut(cols) {
            eliminate(row);
        }
        let f = self.d[col];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.d[col] = 0.0;
        }
    }
}

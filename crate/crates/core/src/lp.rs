//! Dense bounded-variable primal simplex.
//!
//! Two phases over a full tableau. Nonbasic variables rest at a finite bound
//! (or at zero when free). Dantzig pricing switches to Bland's rule once a run
//! of degenerate pivots trips the counter.

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-7;
pub const PIVOT_TOL: f64 = 1e-9;
const OPTIMALITY_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const DROP_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// `minimize c·x  s.t.  A x (<=,=,>=) b,  lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub cols: usize,
    /// Row-major, `rows() * cols` entries.
    pub a: Vec<f64>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
}

impl LpProblem {
    /// `cols` variables in `[0, +inf)` with zero cost and no rows.
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            a: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; cols],
            upper: vec![f64::INFINITY; cols],
            objective: vec![0.0; cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.senses.len()
    }

    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: Sense, rhs: f64) {
        let start = self.a.len();
        self.a.resize(start + self.cols, 0.0);
        for &(j, v) in coeffs {
            self.a[start + j] += v;
        }
        self.senses.push(sense);
        self.rhs.push(rhs);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.cols..(i + 1) * self.cols]
    }

    fn check(&self) -> Result<()> {
        let m = self.rows();
        let n = self.cols;
        let bad = |what: &str| Err(Error::Dimension(what.to_string()));
        if self.a.len() != m * n {
            return bad("matrix size differs from rows x cols");
        }
        if self.rhs.len() != m {
            return bad("rhs length differs from row count");
        }
        if self.lower.len() != n || self.upper.len() != n || self.objective.len() != n {
            return bad("bound or objective length differs from column count");
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY {
                return Err(Error::Dimension(format!(
                    "variable {j} has empty bound interval [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        if self.a.iter().chain(&self.rhs).chain(&self.objective).any(|v| !v.is_finite()) {
            return bad("non-finite coefficient");
        }
        Ok(())
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> (f64, f64) {
        let mut row_v: f64 = 0.0;
        for i in 0..self.rows() {
            let lhs: f64 = self.row(i).iter().zip(x).map(|(a, x)| a * x).sum();
            let v = match self.senses[i] {
                Sense::Le => lhs - self.rhs[i],
                Sense::Ge => self.rhs[i] - lhs,
                Sense::Eq => (lhs - self.rhs[i]).abs(),
            };
            row_v = row_v.max(v);
        }
        let mut bound_v: f64 = 0.0;
        for j in 0..self.cols {
            bound_v = bound_v.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        (row_v, bound_v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Phase-1 residual; positive exactly when the rows cannot be met.
    pub infeasibility: f64,
    pub iterations: usize,
    /// Reduced cost per structural column at the optimum; zero for basic columns.
    pub reduced_costs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rest {
    Basic,
    Lower,
    Upper,
    Free,
}

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    rest: Vec<Rest>,
    value: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    bland: bool,
    degenerate: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.width..(i + 1) * self.width]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.width..(i + 1) * self.width];
                for (d, a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn price(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.width {
            let dj = self.d[j];
            let dir = match self.rest[j] {
                Rest::Basic => continue,
                Rest::Lower if dj < -OPTIMALITY_TOL => 1.0,
                Rest::Upper if dj > OPTIMALITY_TOL => -1.0,
                Rest::Free if dj.abs() > OPTIMALITY_TOL => -dj.signum(),
                _ => continue,
            };
            if self.lower[j] == self.upper[j] {
                continue;
            }
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| dj.abs() > s) {
                best = Some((j, dir, dj.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn step(&mut self) -> Step {
        let Some((q, dir)) = self.price() else {
            return Step::Optimal;
        };
        // Ratio test: basic i moves by -dir * theta * t[i][q].
        let mut theta = self.upper[q] - self.lower[q];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_piv = 0.0;
        for i in 0..self.m {
            let a = self.t[i * self.width + q];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let rate = -dir * a;
            let (limit, to_upper) = if rate < 0.0 {
                if self.lower[b] == f64::NEG_INFINITY {
                    continue;
                }
                (((self.beta[i] - self.lower[b]) / -rate).max(0.0), false)
            } else {
                if self.upper[b] == f64::INFINITY {
                    continue;
                }
                (((self.upper[b] - self.beta[i]) / rate).max(0.0), true)
            };
            let better = match leave {
                None => limit < theta,
                Some((p, _)) => {
                    if limit < theta - 1e-12 {
                        true
                    } else if limit <= theta + 1e-12 {
                        if self.bland {
                            b < self.basis[p]
                        } else {
                            a.abs() > leave_piv
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                theta = limit.min(theta);
                leave = Some((i, to_upper));
                leave_piv = a.abs();
            }
        }
        if theta == f64::INFINITY {
            return Step::Unbounded;
        }
        self.iterations += 1;
        if theta <= 1e-12 {
            self.degenerate += 1;
            if self.degenerate > DEGENERATE_RUN {
                self.bland = true;
            }
        } else {
            self.degenerate = 0;
        }
        if theta != 0.0 {
            for i in 0..self.m {
                let a = self.t[i * self.width + q];
                if a != 0.0 {
                    self.beta[i] -= dir * theta * a;
                }
            }
        }
        match leave {
            None => {
                // Bound flip.
                if dir > 0.0 {
                    self.rest[q] = Rest::Upper;
                    self.value[q] = self.upper[q];
                } else {
                    self.rest[q] = Rest::Lower;
                    self.value[q] = self.lower[q];
                }
            }
            Some((p, to_upper)) => {
                let entering_value = self.value[q] + dir * theta;
                let out = self.basis[p];
                self.rest[out] = if to_upper { Rest::Upper } else { Rest::Lower };
                self.value[out] = if to_upper { self.upper[out] } else { self.lower[out] };
                self.pivot(p, q);
                self.beta[p] = entering_value;
            }
        }
        Step::Moved
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.width;
        let piv = self.t[p * w + q];
        {
            let row = &mut self.t[p * w..(p + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let nz: Vec<usize> = (0..w).filter(|&j| self.t[p * w + j] != 0.0).collect();
        let (before, rest) = self.t.split_at_mut(p * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            for &j in &nz {
                let v = row[j] - f * prow[j];
                row[j] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * prow[j];
            }
            self.d[q] = 0.0;
        }
        self.rest[q] = Rest::Basic;
        self.basis[p] = q;
    }

    fn run(&mut self, max_iter: usize) -> Option<Step> {
        loop {
            if self.iterations >= max_iter {
                return None;
            }
            match self.step() {
                Step::Moved => continue,
                other => return Some(other),
            }
        }
    }
}

/// Solves `problem` to optimality, infeasibility or unboundedness.
pub fn solve_lp(problem: &LpProblem) -> Result<LpResult> {
    problem.check()?;
    let m = problem.rows();
    let n = problem.cols;

    // Row equilibration by the largest magnitude in each row.
    let mut a = problem.a.clone();
    let mut b = problem.rhs.clone();
    for i in 0..m {
        let s = a[i * n..(i + 1) * n].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if s > 0.0 && s != 1.0 {
            for v in &mut a[i * n..(i + 1) * n] {
                *v /= s;
            }
            b[i] /= s;
        }
    }

    let mut lower = problem.lower.clone();
    let mut upper = problem.upper.clone();
    let mut rest = Vec::with_capacity(n + 2 * m);
    let mut value = Vec::with_capacity(n + 2 * m);
    for j in 0..n {
        let (r, v) = if lower[j].is_finite() {
            (Rest::Lower, lower[j])
        } else if upper[j].is_finite() {
            (Rest::Upper, upper[j])
        } else {
            (Rest::Free, 0.0)
        };
        rest.push(r);
        value.push(v);
    }
    // Slack s_i with A_i x + s_i = b_i.
    for sense in &problem.senses {
        let (lo, hi) = match sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lower.push(lo);
        upper.push(hi);
    }
    let mut residual = vec![0.0; m];
    for i in 0..m {
        let lhs: f64 = a[i * n..(i + 1) * n].iter().zip(&value).map(|(a, x)| a * x).sum();
        residual[i] = b[i] - lhs;
    }
    let mut basis = vec![0; m];
    let mut art_rows = Vec::new();
    let mut art_sign = Vec::new();
    for i in 0..m {
        let r = residual[i];
        let fits = match problem.senses[i] {
            Sense::Le => r >= 0.0,
            Sense::Ge => r <= 0.0,
            Sense::Eq => r == 0.0,
        };
        if fits {
            basis[i] = n + i;
            rest.push(Rest::Basic);
            value.push(r);
        } else {
            let bound = if problem.senses[i] == Sense::Ge { upper[n + i] } else { lower[n + i] };
            rest.push(if problem.senses[i] == Sense::Ge { Rest::Upper } else { Rest::Lower });
            value.push(bound);
            art_rows.push(i);
            art_sign.push(if r >= 0.0 { 1.0 } else { -1.0 });
        }
    }
    let n_art = art_rows.len();
    let width = n + m + n_art;
    for (k, &i) in art_rows.iter().enumerate() {
        basis[i] = n + m + k;
        lower.push(0.0);
        upper.push(f64::INFINITY);
        rest.push(Rest::Basic);
        value.push(0.0);
        let _ = art_sign[k];
    }

    let mut t = vec![0.0; m * width];
    let mut beta = vec![0.0; m];
    let mut art_of_row = vec![None; m];
    for (k, &i) in art_rows.iter().enumerate() {
        art_of_row[i] = Some(k);
    }
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        row[..n].copy_from_slice(&a[i * n..(i + 1) * n]);
        row[n + i] = 1.0;
        match art_of_row[i] {
            Some(k) => {
                let s = art_sign[k];
                row[n + m + k] = s;
                // Scale by the inverse of the basic column entry.
                for v in row.iter_mut() {
                    *v *= s;
                }
                beta[i] = residual[i].abs();
            }
            None => beta[i] = residual[i],
        }
    }

    let mut tab = Tableau {
        m,
        width,
        t,
        beta,
        basis,
        rest,
        value,
        lower,
        upper,
        d: vec![0.0; width],
        iterations: 0,
        bland: false,
        degenerate: 0,
    };
    let max_iter = 50 * (m + width) + 1000;

    let mut infeasibility = 0.0;
    if n_art > 0 {
        let mut cost = vec![0.0; width];
        for c in &mut cost[n + m..] {
            *c = 1.0;
        }
        tab.set_costs(&cost);
        match tab.run(max_iter) {
            Some(Step::Optimal) => {}
            _ => return Ok(failure(n, LpStatus::NumericFailure, tab.iterations)),
        }
        infeasibility = (0..m)
            .filter(|&i| tab.basis[i] >= n + m)
            .map(|i| tab.beta[i].max(0.0))
            .sum::<f64>();
        if infeasibility > FEASIBILITY_TOL {
            let mut r = failure(n, LpStatus::Infeasible, tab.iterations);
            r.infeasibility = infeasibility;
            return Ok(r);
        }
        // Drive remaining artificials out of the basis.
        for p in 0..m {
            if tab.basis[p] < n + m {
                continue;
            }
            let q = (0..n + m)
                .filter(|&j| tab.rest[j] != Rest::Basic)
                .max_by(|&x, &y| tab.row(p)[x].abs().total_cmp(&tab.row(p)[y].abs()))
                .filter(|&j| tab.row(p)[j].abs() > 1e-7);
            if let Some(q) = q {
                let out = tab.basis[p];
                let entering = tab.value[q];
                tab.rest[out] = Rest::Lower;
                tab.value[out] = 0.0;
                tab.pivot(p, q);
                tab.beta[p] = entering;
            }
        }
        for k in n + m..width {
            tab.upper[k] = 0.0;
            if tab.rest[k] != Rest::Basic {
                tab.rest[k] = Rest::Lower;
                tab.value[k] = 0.0;
            }
        }
        tab.bland = false;
        tab.degenerate = 0;
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&problem.objective);
    tab.set_costs(&cost);
    match tab.run(max_iter) {
        Some(Step::Optimal) => {}
        Some(Step::Unbounded) => return Ok(failure(n, LpStatus::Unbounded, tab.iterations)),
        _ => return Ok(failure(n, LpStatus::NumericFailure, tab.iterations)),
    }

    let mut full = tab.value.clone();
    for i in 0..m {
        full[tab.basis[i]] = tab.beta[i];
    }
    let mut x: Vec<f64> = full[..n].to_vec();
    clamp_to_bounds(&mut x, problem);
    let (rv, bv) = problem.max_violation(&x);
    if rv > FEASIBILITY_TOL || bv > 1e-9 {
        // Recompute basic values from the original rows to shed pivot drift.
        if let Some(clean) = refactor(problem, &a, &b, &tab) {
            x = clean;
            clamp_to_bounds(&mut x, problem);
        }
        let (rv, bv) = problem.max_violation(&x);
        if rv > FEASIBILITY_TOL || bv > 1e-9 {
            return Ok(failure(n, LpStatus::NumericFailure, tab.iterations));
        }
    }
    let objective = x.iter().zip(&problem.objective).map(|(x, c)| x * c).sum();
    let reduced_costs = (0..n)
        .map(|j| if tab.rest[j] == Rest::Basic { 0.0 } else { tab.d[j] })
        .collect();
    Ok(LpResult {
        status: LpStatus::Optimal,
        x,
        objective,
        infeasibility,
        iterations: tab.iterations,
        reduced_costs,
    })
}

fn clamp_to_bounds(x: &mut [f64], problem: &LpProblem) {
    for (j, v) in x.iter_mut().enumerate() {
        let lo = problem.lower[j];
        let hi = problem.upper[j];
        if *v < lo && lo - *v < 1e-9 {
            *v = lo;
        }
        if *v > hi && *v - hi < 1e-9 {
            *v = hi;
        }
    }
}

fn failure(n: usize, status: LpStatus, iterations: usize) -> LpResult {
    LpResult {
        status,
        x: vec![0.0; n],
        objective: f64::NAN,
        infeasibility: 0.0,
        iterations,
        reduced_costs: Vec::new(),
    }
}

/// Solves `B x_B = b - N x_N` on the scaled rows with partial pivoting.
fn refactor(problem: &LpProblem, a: &[f64], b: &[f64], tab: &Tableau) -> Option<Vec<f64>> {
    let m = tab.m;
    let n = problem.cols;
    let column = |j: usize, i: usize| -> f64 {
        if j < n {
            a[i * n + j]
        } else if j < n + m {
            f64::from(u8::from(j - n == i))
        } else {
            0.0
        }
    };
    let mut full = tab.value.clone();
    let mut mat = vec![0.0; m * m];
    let mut rhs = b.to_vec();
    for i in 0..m {
        for (k, &bj) in tab.basis.iter().enumerate() {
            mat[i * m + k] = column(bj, i);
        }
        for j in 0..n + m {
            if tab.rest[j] != Rest::Basic {
                rhs[i] -= column(j, i) * tab.value[j];
            }
        }
    }
    let sol = gauss_solve(&mut mat, &mut rhs, m)?;
    for (k, &bj) in tab.basis.iter().enumerate() {
        full[bj] = sol[k];
    }
    Some(full[..n].to_vec())
}

fn gauss_solve(mat: &mut [f64], rhs: &mut [f64], m: usize) -> Option<Vec<f64>> {
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| mat[x * m + c].abs().total_cmp(&mat[y * m + c].abs()))?;
        if mat[p * m + c].abs() < 1e-12 {
            return None;
        }
        if p != c {
            for k in 0..m {
                mat.swap(p * m + k, c * m + k);
            }
            rhs.swap(p, c);
        }
        for r in c + 1..m {
            let f = mat[r * m + c] / mat[c * m + c];
            if f != 0.0 {
                for k in c..m {
                    mat[r * m + k] -= f * mat[c * m + k];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| mat[r * m + k] * x[k]).sum();
        x[r] = (rhs[r] - s) / mat[r * m + r];
    }
    Some(x)
}

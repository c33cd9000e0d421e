//! Structured-grid Galerkin multigrid used as a preconditioner for CG.
//!
//! Operators are symmetric 9-point stencils on an `nx * ny` lattice. Only
//! the "forward" half of each row is stored: for node `k = (i, j)` the
//! entries are `[diag, (i+1,j), (i,j+1), (i+1,j+1), (i-1,j+1)]`. Fixed
//! (Dirichlet) nodes are decoupled identity rows and are marked `dead`.
//!
//! Coarse nodes sit on the even fine indices; prolongation is bilinear with
//! zero rows for dead fine nodes, and coarse operators are `P^T A P`.
//! Smoothing is four-colour Gauss-Seidel, so every colour update is a pure
//! function of the other colours and the parallel and sequential paths
//! agree bit for bit.

use crate::exec::Execution;

const DIAG: usize = 0;
const E: usize = 1;
const N: usize = 2;
const NE: usize = 3;
const NW: usize = 4;

/// Stop coarsening once a level has at most this many nodes.
const COARSEST_NODES: usize = 4096;
const VEC_CHUNK: usize = 16 * 1024;

#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub nx: usize,
    pub ny: usize,
    pub a: Vec<[f64; 5]>,
    pub dead: Vec<bool>,
}

impl Stencil {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    /// For row `j`, calls `f(i, sum)` for every `i = start, start+step, ..`
    /// with `sum = sum_{nb != k} A[k, nb] x[nb]`.
    #[inline]
    fn offdiag_row<F: FnMut(usize, f64)>(&self, j: usize, x: &[f64], start: usize, step: usize, mut f: F) {
        let nx = self.nx;
        let ny = self.ny;
        let a = &self.a;
        let row = j * nx;
        let has_s = j > 0;
        let has_n = j + 1 < ny;
        let mut i = start;
        while i < nx {
            let k = row + i;
            let ck = &a[k];
            let mut s = 0.0;
            let has_w = i > 0;
            let has_e = i + 1 < nx;
            if has_e {
                s += ck[E] * x[k + 1];
            }
            if has_w {
                s += a[k - 1][E] * x[k - 1];
            }
            if has_n {
                s += ck[N] * x[k + nx];
                if has_e {
                    s += ck[NE] * x[k + nx + 1];
                }
                if has_w {
                    s += ck[NW] * x[k + nx - 1];
                }
            }
            if has_s {
                let ks = k - nx;
                s += a[ks][N] * x[ks];
                if has_w {
                    s += a[ks - 1][NE] * x[ks - 1];
                }
                if has_e {
                    s += a[ks + 1][NW] * x[ks + 1];
                }
            }
            f(i, s);
            i += step;
        }
    }

    /// `y = A x`
    pub fn apply(&self, exec: Execution, x: &[f64], y: &mut [f64]) {
        let nx = self.nx;
        exec.for_each_chunk_mut(y, nx, |j, yrow| {
            let row = j * nx;
            self.offdiag_row(j, x, 0, 1, |i, s| {
                yrow[i] = self.a[row + i][DIAG] * x[row + i] + s;
            });
        });
    }

    /// `r = b - A x`
    pub fn residual(&self, exec: Execution, b: &[f64], x: &[f64], r: &mut [f64]) {
        let nx = self.nx;
        exec.for_each_chunk_mut(r, nx, |j, rrow| {
            let row = j * nx;
            self.offdiag_row(j, x, 0, 1, |i, s| {
                rrow[i] = b[row + i] - self.a[row + i][DIAG] * x[row + i] - s;
            });
        });
    }

    /// One four-colour Gauss-Seidel sweep. `forward` selects the colour
    /// order; a backward sweep is the adjoint of a forward one.
    fn smooth(&self, exec: Execution, b: &[f64], x: &mut [f64], tmp: &mut [f64], forward: bool) {
        const ORDER: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];
        let nx = self.nx;
        for c in 0..4 {
            let (ci, cj) = if forward { ORDER[c] } else { ORDER[3 - c] };
            {
                let xr: &[f64] = x;
                exec.for_each_chunk_mut(tmp, nx, |j, trow| {
                    if j % 2 != cj {
                        return;
                    }
                    let row = j * nx;
                    self.offdiag_row(j, xr, ci, 2, |i, s| {
                        let k = row + i;
                        trow[i] = if self.dead[k] {
                            0.0
                        } else {
                            (b[k] - s) / self.a[k][DIAG]
                        };
                    });
                });
            }
            let t: &[f64] = tmp;
            exec.for_each_chunk_mut(x, nx, |j, xrow| {
                if j % 2 != cj {
                    return;
                }
                let row = j * nx;
                let mut i = ci;
                while i < nx {
                    xrow[i] = t[row + i];
                    i += 2;
                }
            });
        }
    }

    /// Returns the entry `A[(i,j), (i+di, j+dj)]` for `|di|, |dj| <= 1`;
    /// the caller guarantees the neighbour is inside the grid.
    #[inline]
    fn entry(&self, i: usize, j: usize, di: isize, dj: isize) -> f64 {
        let nx = self.nx;
        let k = j * nx + i;
        match (di, dj) {
            (0, 0) => self.a[k][DIAG],
            (1, 0) => self.a[k][E],
            (-1, 0) => self.a[k - 1][E],
            (0, 1) => self.a[k][N],
            (0, -1) => self.a[k - nx][N],
            (1, 1) => self.a[k][NE],
            (-1, -1) => self.a[k - nx - 1][NE],
            (-1, 1) => self.a[k][NW],
            (1, -1) => self.a[k - nx + 1][NW],
            _ => unreachable!(),
        }
    }
}

/// Interpolation weight from coarse index `ic` to fine index `f` along one
/// axis of length `nf`.
#[inline]
fn weight_1d(f: isize, ic: usize, nf: usize) -> f64 {
    if f < 0 || f as usize >= nf {
        return 0.0;
    }
    match f - 2 * ic as isize {
        0 => 1.0,
        1 => {
            if (f as usize) + 1 < nf {
                0.5
            } else {
                1.0
            }
        }
        -1 => 0.5,
        _ => 0.0,
    }
}

fn coarse_len(n: usize) -> usize {
    n.div_ceil(2)
}

/// Galerkin coarse operator `P^T A P`.
fn galerkin(fine: &Stencil, exec: Execution) -> Stencil {
    let (nfx, nfy) = (fine.nx, fine.ny);
    let ncx = coarse_len(nfx);
    let ncy = coarse_len(nfy);
    let mut a = vec![[0.0; 5]; ncx * ncy];

    exec.for_each_chunk_mut(&mut a, ncx, |jc, arow| {
        for ic in 0..ncx {
            // v = A * (P e_I) on the 5x5 fine window centred at (2ic, 2jc)
            let mut v = [[0.0f64; 5]; 5];
            let ci = 2 * ic as isize;
            let cj = 2 * jc as isize;
            for sj in -1..=1isize {
                let fj = cj + sj;
                let wy = weight_1d(fj, jc, nfy);
                if wy == 0.0 {
                    continue;
                }
                for si in -1..=1isize {
                    let fi = ci + si;
                    let wx = weight_1d(fi, ic, nfx);
                    if wx == 0.0 {
                        continue;
                    }
                    let (fiu, fju) = (fi as usize, fj as usize);
                    if fine.dead[fju * nfx + fiu] {
                        continue;
                    }
                    let w = wx * wy;
                    for dj in -1..=1isize {
                        let tj = fj + dj;
                        if tj < 0 || tj as usize >= nfy {
                            continue;
                        }
                        for di in -1..=1isize {
                            let ti = fi + di;
                            if ti < 0 || ti as usize >= nfx {
                                continue;
                            }
                            let val = fine.entry(fiu, fju, di, dj);
                            if val != 0.0 {
                                v[(tj - cj + 2) as usize][(ti - ci + 2) as usize] += w * val;
                            }
                        }
                    }
                }
            }
            // project onto the coarse basis functions of forward neighbours
            const TARGETS: [(isize, isize); 5] = [(0, 0), (1, 0), (0, 1), (1, 1), (-1, 1)];
            let mut entry = [0.0; 5];
            for (slot, &(di, dj)) in TARGETS.iter().enumerate() {
                let kc_i = ic as isize + di;
                let kc_j = jc as isize + dj;
                if kc_i < 0 || kc_i as usize >= ncx || kc_j as usize >= ncy {
                    continue;
                }
                let (kci, kcj) = (kc_i as usize, kc_j as usize);
                let mut s = 0.0;
                for sj in -1..=1isize {
                    let fj = 2 * kc_j + sj;
                    let wy = weight_1d(fj, kcj, nfy);
                    if wy == 0.0 {
                        continue;
                    }
                    let wj = fj - cj + 2;
                    if !(0..5).contains(&wj) {
                        continue;
                    }
                    for si in -1..=1isize {
                        let fi = 2 * kc_i + si;
                        let wx = weight_1d(fi, kci, nfx);
                        if wx == 0.0 {
                            continue;
                        }
                        let wi = fi - ci + 2;
                        if !(0..5).contains(&wi) {
                            continue;
                        }
                        if fine.dead[fj as usize * nfx + fi as usize] {
                            continue;
                        }
                        s += wx * wy * v[wj as usize][wi as usize];
                    }
                }
                entry[slot] = s;
            }
            arow[ic] = entry;
        }
    });

    let mut dead = vec![false; ncx * ncy];
    for (k, row) in a.iter_mut().enumerate() {
        if row[DIAG] <= 0.0 {
            *row = [1.0, 0.0, 0.0, 0.0, 0.0];
            dead[k] = true;
        }
    }
    Stencil {
        nx: ncx,
        ny: ncy,
        a,
        dead,
    }
}

/// `bc = P^T r`
fn restrict(fine: &Stencil, coarse: &Stencil, exec: Execution, r: &[f64], bc: &mut [f64]) {
    let (nfx, nfy) = (fine.nx, fine.ny);
    let ncx = coarse.nx;
    exec.for_each_chunk_mut(bc, ncx, |jc, brow| {
        for ic in 0..ncx {
            let mut s = 0.0;
            if !coarse.dead[jc * ncx + ic] {
                for sj in -1..=1isize {
                    let fj = 2 * jc as isize + sj;
                    let wy = weight_1d(fj, jc, nfy);
                    if wy == 0.0 {
                        continue;
                    }
                    for si in -1..=1isize {
                        let fi = 2 * ic as isize + si;
                        let wx = weight_1d(fi, ic, nfx);
                        if wx == 0.0 {
                            continue;
                        }
                        let k = fj as usize * nfx + fi as usize;
                        if !fine.dead[k] {
                            s += wx * wy * r[k];
                        }
                    }
                }
            }
            brow[ic] = s;
        }
    });
}

/// Coarse index pairs `(index, weight)` feeding fine index `f`.
#[inline]
fn parents(f: usize, nf: usize) -> [(usize, f64); 2] {
    if f.is_multiple_of(2) {
        [(f / 2, 1.0), (0, 0.0)]
    } else if f + 1 < nf {
        [((f - 1) / 2, 0.5), (f.div_ceil(2), 0.5)]
    } else {
        [((f - 1) / 2, 1.0), (0, 0.0)]
    }
}

/// `x += P xc`
fn prolong_add(fine: &Stencil, coarse: &Stencil, exec: Execution, xc: &[f64], x: &mut [f64]) {
    let (nfx, nfy) = (fine.nx, fine.ny);
    let ncx = coarse.nx;
    exec.for_each_chunk_mut(x, nfx, |j, xrow| {
        let py = parents(j, nfy);
        for (i, xv) in xrow.iter_mut().enumerate() {
            if fine.dead[j * nfx + i] {
                continue;
            }
            let px = parents(i, nfx);
            let mut s = 0.0;
            for &(cj, wy) in &py {
                if wy == 0.0 {
                    continue;
                }
                for &(ci, wx) in &px {
                    if wx == 0.0 {
                        continue;
                    }
                    s += wx * wy * xc[cj * ncx + ci];
                }
            }
            *xv += s;
        }
    });
}

/// Banded Cholesky factorization of the coarsest operator.
#[derive(Debug, Clone)]
struct BandCholesky {
    n: usize,
    bw: usize,
    /// `l[k * (bw + 1) + d]` holds `L[k, k - d]`.
    l: Vec<f64>,
}

impl BandCholesky {
    fn factor(op: &Stencil) -> Option<Self> {
        let n = op.len();
        let nx = op.nx;
        let bw = (nx + 1).min(n.saturating_sub(1));
        let w = bw + 1;
        // lower band of A: A[k, k - d]
        let mut l = vec![0.0; n * w];
        for k in 0..n {
            let (i, j) = (k % nx, k / nx);
            l[k * w] = op.a[k][DIAG];
            // entries A[k, k-d] for d>0 come from forward entries of row k-d
            if i > 0 {
                l[k * w + 1] = op.a[k - 1][E];
            }
            if j > 0 {
                if bw >= nx {
                    l[k * w + nx] = op.a[k - nx][N];
                }
                if i > 0 && bw > nx {
                    l[k * w + nx + 1] = op.a[k - nx - 1][NE];
                }
                if i + 1 < nx && nx >= 2 {
                    l[k * w + nx - 1] = op.a[k - nx + 1][NW];
                }
            }
        }
        for k in 0..n {
            let lo = k.saturating_sub(bw);
            for c in lo..=k {
                // L[k, c] = (A[k, c] - sum_{m < c} L[k, m] L[c, m]) / L[c, c]
                let mut s = l[k * w + (k - c)];
                let mlo = lo.max(c.saturating_sub(bw));
                for m in mlo..c {
                    s -= l[k * w + (k - m)] * l[c * w + (c - m)];
                }
                if c == k {
                    if s <= 0.0 {
                        return None;
                    }
                    l[k * w] = s.sqrt();
                } else {
                    l[k * w + (k - c)] = s / l[c * w];
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }

    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let w = self.bw + 1;
        let n = self.n;
        for k in 0..n {
            let mut s = b[k];
            for m in k.saturating_sub(self.bw)..k {
                s -= self.l[k * w + (k - m)] * x[m];
            }
            x[k] = s / self.l[k * w];
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for m in k + 1..(k + self.bw + 1).min(n) {
                s -= self.l[m * w + (m - k)] * x[m];
            }
            x[k] = s / self.l[k * w];
        }
    }
}

struct Scratch {
    b: Vec<f64>,
    x: Vec<f64>,
    r: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            b: vec![0.0; n],
            x: vec![0.0; n],
            r: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// V-cycle preconditioner. Level 0 is the operator being solved.
pub(crate) struct Multigrid {
    levels: Vec<Stencil>,
    coarse: BandCholesky,
    scratch: Vec<Scratch>,
    smoothing_steps: usize,
    exec: Execution,
}

impl Multigrid {
    pub fn build(op: Stencil, smoothing_steps: usize, exec: Execution) -> Option<Self> {
        let mut levels = vec![op];
        loop {
            let last = levels.last().unwrap();
            if last.len() <= COARSEST_NODES || last.nx <= 4 || last.ny <= 4 {
                break;
            }
            let next = galerkin(last, exec);
            levels.push(next);
        }
        let coarse = BandCholesky::factor(levels.last().unwrap())?;
        let scratch = levels.iter().map(|l| Scratch::new(l.len())).collect();
        Some(Multigrid {
            levels,
            coarse,
            scratch,
            smoothing_steps,
            exec,
        })
    }

    pub fn op(&self) -> &Stencil {
        &self.levels[0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `z = M^{-1} r`
    pub fn precondition(&mut self, r: &[f64], z: &mut [f64]) {
        self.scratch[0].b.copy_from_slice(r);
        self.vcycle(0);
        z.copy_from_slice(&self.scratch[0].x);
    }

    fn vcycle(&mut self, l: usize) {
        let exec = self.exec;
        if l + 1 == self.levels.len() {
            let s = &mut self.scratch[l];
            self.coarse.solve(&s.b, &mut s.x);
            return;
        }
        {
            let op = &self.levels[l];
            let s = &mut self.scratch[l];
            s.x.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..self.smoothing_steps {
                op.smooth(exec, &s.b, &mut s.x, &mut s.tmp, true);
            }
            op.residual(exec, &s.b, &s.x, &mut s.r);
        }
        {
            let (head, tail) = self.scratch.split_at_mut(l + 1);
            restrict(&self.levels[l], &self.levels[l + 1], exec, &head[l].r, &mut tail[0].b);
        }
        self.vcycle(l + 1);
        {
            let (head, tail) = self.scratch.split_at_mut(l + 1);
            prolong_add(&self.levels[l], &self.levels[l + 1], exec, &tail[0].x, &mut head[l].x);
        }
        let op = &self.levels[l];
        let s = &mut self.scratch[l];
        for _ in 0..self.smoothing_steps {
            op.smooth(exec, &s.b, &mut s.x, &mut s.tmp, false);
        }
    }
}

pub(crate) struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    pub converged: bool,
}

fn axpy(exec: Execution, alpha: f64, x: &[f64], y: &mut [f64]) {
    exec.for_each_chunk_mut(y, VEC_CHUNK, |c, ys| {
        let xs = &x[c * VEC_CHUNK..c * VEC_CHUNK + ys.len()];
        for (yv, xv) in ys.iter_mut().zip(xs) {
            *yv += alpha * xv;
        }
    });
}

/// `p = z + beta p`
fn xpby(exec: Execution, z: &[f64], beta: f64, p: &mut [f64]) {
    exec.for_each_chunk_mut(p, VEC_CHUNK, |c, ps| {
        let zs = &z[c * VEC_CHUNK..c * VEC_CHUNK + ps.len()];
        for (pv, zv) in ps.iter_mut().zip(zs) {
            *pv = zv + beta * *pv;
        }
    });
}

/// Preconditioned conjugate gradients from a zero initial guess. Stops when
/// the true relative residual `|b - A x| / |b|` is at most `tol`.
pub(crate) fn pcg(mg: &mut Multigrid, b: &[f64], tol: f64, max_iterations: usize) -> PcgOutcome {
    let exec = mg.exec;
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = exec.dot(b, b).sqrt();
    if bnorm == 0.0 {
        return PcgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            history: vec![],
            converged: true,
        };
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    mg.precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = exec.dot(&r, &z);
    let mut history = Vec::new();
    let mut rel = 1.0;

    for it in 1..=max_iterations {
        mg.op().apply(exec, &p, &mut q);
        let pq = exec.dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        axpy(exec, alpha, &p, &mut x);
        axpy(exec, -alpha, &q, &mut r);
        rel = exec.dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            // guard against drift of the recursive residual
            mg.op().residual(exec, b, &x, &mut r);
            rel = exec.dot(&r, &r).sqrt() / bnorm;
            if rel <= tol {
                return PcgOutcome {
                    x,
                    iterations: it,
                    residual: rel,
                    history,
                    converged: true,
                };
            }
        }
        mg.precondition(&r, &mut z);
        let rz_new = exec.dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        xpby(exec, &z, beta, &mut p);
    }
    PcgOutcome {
        x,
        iterations: history.len(),
        residual: rel,
        history,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5-point Laplacian with the left column fixed.
    fn laplacian(nx: usize, ny: usize) -> Stencil {
        let mut a = vec![[0.0; 5]; nx * ny];
        let mut dead = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if i == 0 {
                    dead[k] = true;
                }
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if dead[k] {
                    a[k] = [1.0, 0.0, 0.0, 0.0, 0.0];
                    continue;
                }
                let mut d = 0.0;
                if i + 1 < nx {
                    d += 1.0;
                    if !dead[k + 1] {
                        a[k][E] = -1.0;
                    }
                }
                if i > 0 {
                    d += 1.0;
                }
                if j + 1 < ny {
                    d += 1.0;
                    a[k][N] = -1.0;
                }
                if j > 0 {
                    d += 1.0;
                }
                a[k][DIAG] = d;
            }
        }
        Stencil { nx, ny, a, dead }
    }

    #[test]
    fn galerkin_of_symmetric_operator_is_positive_definite() {
        let op = laplacian(33, 20);
        let c = galerkin(&op, Execution::Sequential);
        assert_eq!((c.nx, c.ny), (17, 10));
        assert!(BandCholesky::factor(&c).is_some());
    }

    #[test]
    fn band_cholesky_solves_exactly() {
        let op = laplacian(9, 7);
        let chol = BandCholesky::factor(&op).unwrap();
        let xs: Vec<f64> = (0..op.len())
            .map(|k| if op.dead[k] { 0.0 } else { (k as f64).cos() })
            .collect();
        let mut b = vec![0.0; op.len()];
        op.apply(Execution::Sequential, &xs, &mut b);
        let mut x = vec![0.0; op.len()];
        chol.solve(&b, &mut x);
        for (a, e) in x.iter().zip(&xs) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn pcg_converges_quickly_and_deterministically() {
        let op = laplacian(257, 129);
        let n = op.len();
        let b: Vec<f64> = (0..n)
            .map(|k| if op.dead[k] { 0.0 } else { ((k * 7) % 13) as f64 - 6.0 })
            .collect();
        let mut mg = Multigrid::build(op.clone(), 2, Execution::Parallel).unwrap();
        let out = pcg(&mut mg, &b, 1e-10, 500);
        assert!(out.converged);
        assert!(out.iterations < 40, "{} iterations", out.iterations);
        let mut mg2 = Multigrid::build(op, 2, Execution::Sequential).unwrap();
        let out2 = pcg(&mut mg2, &b, 1e-10, 500);
        assert_eq!(out.iterations, out2.iterations);
        assert!(out
            .history
            .iter()
            .zip(&out2.history)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

//! Method of moving asymptotes.
//!
//! Svanberg's sequential convex approximation: each outer iteration builds a
//! separable rational approximation of the objective and constraints around
//! the current iterate between moving lower/upper asymptotes, then solves the
//! convex subproblem
//!
//! ```text
//! min  sum_j (p0j/(u_j - x_j) + q0j/(x_j - l_j)) + a0 z + sum_i (c_i y_i + d_i y_i^2 / 2)
//! s.t. sum_j (pij/(u_j - x_j) + qij/(x_j - l_j)) - a_i z - y_i <= b_i,
//!      alfa <= x <= beta,  y >= 0,  z >= 0,
//! ```
//!
//! with a primal-dual Newton interior-point method driven down an
//! epsilon-path. Min-max objectives enter through the built-in bound
//! variable `z` by giving the competing constraints `a_i = 1` and `a0 = 1`.
//!
//! Asymptote rules: initialized at `0.5 (xmax - xmin)` around the iterate,
//! expanded by 1.2 when the variable keeps direction, contracted by 0.7 when
//! it oscillates.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MmaOptions {
    /// External move limit as a fraction of the variable range.
    pub move_limit: f64,
    pub asymptote_init: f64,
    pub asymptote_expand: f64,
    pub asymptote_contract: f64,
    /// Target for the interior-point epsilon path (KKT tolerance).
    pub kkt_tolerance: f64,
}

impl Default for MmaOptions {
    fn default() -> Self {
        Self {
            move_limit: 0.1,
            asymptote_init: 0.5,
            asymptote_expand: 1.2,
            asymptote_contract: 0.7,
            kkt_tolerance: 1e-7,
        }
    }
}

/// Outer-iteration state: asymptotes and the two previous iterates.
#[derive(Debug, Clone)]
pub struct Mma {
    n: usize,
    m: usize,
    pub options: MmaOptions,
    iter: usize,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
}

/// Result of one outer MMA update.
#[derive(Debug, Clone)]
pub struct MmaStep {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: f64,
    /// Constraint duals from the subproblem.
    pub lambda: Vec<f64>,
}

/// One outer iteration's linearization data.
pub struct Linearization<'a> {
    pub x: &'a [f64],
    pub xmin: &'a [f64],
    pub xmax: &'a [f64],
    pub f0_grad: &'a [f64],
    /// Constraint values, feasible when `<= 0`.
    pub f: &'a [f64],
    /// Constraint gradients, one row per constraint.
    pub f_grad: &'a [Vec<f64>],
    pub a0: f64,
    /// Coefficient of `-z` in each constraint (1 for min-max members).
    pub a: &'a [f64],
    /// Linear penalties on the slack variables; large values force `y = 0`.
    pub c: &'a [f64],
    /// Quadratic penalties on the slack variables.
    pub d: &'a [f64],
}

const RAA0: f64 = 1e-5;
const ALBEFA: f64 = 0.1;

impl Mma {
    pub fn new(n: usize, m: usize, options: MmaOptions) -> Self {
        Self {
            n,
            m,
            options,
            iter: 0,
            low: vec![0.0; n],
            upp: vec![0.0; n],
            xold1: vec![0.0; n],
            xold2: vec![0.0; n],
        }
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn step(&mut self, lin: &Linearization) -> Result<MmaStep> {
        let n = self.n;
        let m = self.m;
        if lin.x.len() != n
            || lin.xmin.len() != n
            || lin.xmax.len() != n
            || lin.f0_grad.len() != n
            || lin.f.len() != m
            || lin.f_grad.len() != m
            || lin.f_grad.iter().any(|g| g.len() != n)
            || lin.a.len() != m
            || lin.c.len() != m
            || lin.d.len() != m
        {
            return Err(Error::Contract("MMA linearization shape mismatch".into()));
        }
        if lin.f0_grad.iter().any(|v| !v.is_finite())
            || lin.f.iter().any(|v| !v.is_finite())
            || lin.f_grad.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Numerical("non-finite MMA inputs".into()));
        }
        self.iter += 1;
        let opts = &self.options;

        // asymptote update
        if self.iter <= 2 {
            for j in 0..n {
                let range = lin.xmax[j] - lin.xmin[j];
                self.low[j] = lin.x[j] - opts.asymptote_init * range;
                self.upp[j] = lin.x[j] + opts.asymptote_init * range;
            }
        } else {
            for j in 0..n {
                let range = lin.xmax[j] - lin.xmin[j];
                let zzz = (lin.x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if zzz > 0.0 {
                    opts.asymptote_expand
                } else if zzz < 0.0 {
                    opts.asymptote_contract
                } else {
                    1.0
                };
                let mut low = lin.x[j] - factor * (self.xold1[j] - self.low[j]);
                let mut upp = lin.x[j] + factor * (self.upp[j] - self.xold1[j]);
                low = low.max(lin.x[j] - 10.0 * range).min(lin.x[j] - 0.01 * range);
                upp = upp.min(lin.x[j] + 10.0 * range).max(lin.x[j] + 0.01 * range);
                self.low[j] = low;
                self.upp[j] = upp;
            }
        }

        // bounds with move limit
        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        for j in 0..n {
            let range = lin.xmax[j] - lin.xmin[j];
            alfa[j] = (self.low[j] + ALBEFA * (lin.x[j] - self.low[j]))
                .max(lin.x[j] - opts.move_limit * range)
                .max(lin.xmin[j]);
            beta[j] = (self.upp[j] - ALBEFA * (self.upp[j] - lin.x[j]))
                .min(lin.x[j] + opts.move_limit * range)
                .min(lin.xmax[j]);
        }

        // separable rational approximation coefficients
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut pp = vec![vec![0.0; n]; m];
        let mut qq = vec![vec![0.0; n]; m];
        let mut b = vec![0.0; m];
        for j in 0..n {
            let ux = self.upp[j] - lin.x[j];
            let xl = lin.x[j] - self.low[j];
            let (ux2, xl2) = (ux * ux, xl * xl);
            let xmami = (lin.xmax[j] - lin.xmin[j]).max(1e-5);
            let gp = lin.f0_grad[j].max(0.0);
            let gm = (-lin.f0_grad[j]).max(0.0);
            let pq = 0.001 * (gp + gm) + RAA0 / xmami;
            p0[j] = (gp + pq) * ux2;
            q0[j] = (gm + pq) * xl2;
            for i in 0..m {
                let gp = lin.f_grad[i][j].max(0.0);
                let gm = (-lin.f_grad[i][j]).max(0.0);
                let pq = 0.001 * (gp + gm) + RAA0 / xmami;
                pp[i][j] = (gp + pq) * ux2;
                qq[i][j] = (gm + pq) * xl2;
            }
        }
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..n {
                acc += pp[i][j] / (self.upp[j] - lin.x[j]) + qq[i][j] / (lin.x[j] - self.low[j]);
            }
            b[i] = acc - lin.f[i];
        }

        let (x, y, z, lambda) = solve_subproblem(
            &alfa,
            &beta,
            &self.low,
            &self.upp,
            &p0,
            &q0,
            &pp,
            &qq,
            &b,
            lin.a0,
            lin.a,
            lin.c,
            lin.d,
            opts.kkt_tolerance,
        )?;

        self.xold2 = std::mem::take(&mut self.xold1);
        self.xold1 = lin.x.to_vec();
        if self.iter == 1 {
            self.xold2 = lin.x.to_vec();
        }

        Ok(MmaStep { x, y, z, lambda })
    }
}

/// Primal-dual Newton interior-point solver for the MMA subproblem,
/// following the epsilon-path down to `epsimin`.
#[allow(clippy::too_many_arguments)]
fn solve_subproblem(
    alfa: &[f64],
    beta: &[f64],
    low: &[f64],
    upp: &[f64],
    p0: &[f64],
    q0: &[f64],
    pp: &[Vec<f64>],
    qq: &[Vec<f64>],
    b: &[f64],
    a0: f64,
    a: &[f64],
    c: &[f64],
    d: &[f64],
    epsimin: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>)> {
    let n = alfa.len();
    let m = b.len();

    let mut x: Vec<f64> = (0..n).map(|j| 0.5 * (alfa[j] + beta[j])).collect();
    let mut y = vec![1.0; m];
    let mut z = 1.0;
    let mut lam = vec![1.0; m];
    let mut xsi: Vec<f64> = (0..n).map(|j| (1.0 / (x[j] - alfa[j])).max(1.0)).collect();
    let mut eta: Vec<f64> = (0..n).map(|j| (1.0 / (beta[j] - x[j])).max(1.0)).collect();
    let mut mu: Vec<f64> = c.iter().map(|&ci| (0.5 * ci).max(1.0)).collect();
    let mut zet = 1.0;
    let mut s = vec![1.0; m];

    // residual of the relaxed KKT system; returns (norm, max)
    let residual = |x: &[f64],
                    y: &[f64],
                    z: f64,
                    lam: &[f64],
                    xsi: &[f64],
                    eta: &[f64],
                    mu: &[f64],
                    zet: f64,
                    s: &[f64],
                    epsi: f64|
     -> (f64, f64) {
        let mut norm2 = 0.0f64;
        let mut maxr = 0.0f64;
        let mut push = |r: f64| {
            norm2 += r * r;
            maxr = maxr.max(r.abs());
        };
        for j in 0..n {
            let ux = upp[j] - x[j];
            let xl = x[j] - low[j];
            let mut plam = p0[j];
            let mut qlam = q0[j];
            for i in 0..m {
                plam += pp[i][j] * lam[i];
                qlam += qq[i][j] * lam[i];
            }
            let dpsidx = plam / (ux * ux) - qlam / (xl * xl);
            push(dpsidx - xsi[j] + eta[j]);
            push(xsi[j] * (x[j] - alfa[j]) - epsi);
            push(eta[j] * (beta[j] - x[j]) - epsi);
        }
        let mut azl = 0.0;
        for i in 0..m {
            let mut gv = 0.0;
            for j in 0..n {
                gv += pp[i][j] / (upp[j] - x[j]) + qq[i][j] / (x[j] - low[j]);
            }
            push(c[i] + d[i] * y[i] - mu[i] - lam[i]);
            push(gv - a[i] * z - y[i] + s[i] - b[i]);
            push(mu[i] * y[i] - epsi);
            push(lam[i] * s[i] - epsi);
            azl += a[i] * lam[i];
        }
        push(a0 - zet - azl);
        push(zet * z - epsi);
        (norm2.sqrt(), maxr)
    };

    let mut epsi = 1.0;
    while epsi > epsimin {
        let (mut residunorm, mut residumax) =
            residual(&x, &y, z, &lam, &xsi, &eta, &mu, zet, &s, epsi);
        let mut ittt = 0;
        while residumax > 0.9 * epsi && ittt < 200 {
            ittt += 1;

            // Newton direction via the m x m Schur complement
            let mut delx = vec![0.0; n];
            let mut diagx = vec![0.0; n];
            let mut gg = vec![vec![0.0; n]; m];
            for j in 0..n {
                let ux = upp[j] - x[j];
                let xl = x[j] - low[j];
                let (ux2, xl2) = (ux * ux, xl * xl);
                let mut plam = p0[j];
                let mut qlam = q0[j];
                for i in 0..m {
                    plam += pp[i][j] * lam[i];
                    qlam += qq[i][j] * lam[i];
                }
                delx[j] = plam / ux2 - qlam / xl2 - epsi / (x[j] - alfa[j])
                    + epsi / (beta[j] - x[j]);
                diagx[j] = 2.0 * (plam / (ux2 * ux) + qlam / (xl2 * xl))
                    + xsi[j] / (x[j] - alfa[j])
                    + eta[j] / (beta[j] - x[j]);
                for i in 0..m {
                    gg[i][j] = pp[i][j] / ux2 - qq[i][j] / xl2;
                }
            }
            let mut dely = vec![0.0; m];
            let mut dellam = vec![0.0; m];
            let mut diagy = vec![0.0; m];
            for i in 0..m {
                let mut gv = 0.0;
                for j in 0..n {
                    gv += pp[i][j] / (upp[j] - x[j]) + qq[i][j] / (x[j] - low[j]);
                }
                dely[i] = c[i] + d[i] * y[i] - lam[i] - epsi / y[i];
                dellam[i] = gv - a[i] * z - y[i] - b[i] + epsi / lam[i];
                diagy[i] = d[i] + mu[i] / y[i];
            }
            let delz = a0 - a.iter().zip(lam.iter()).map(|(ai, li)| ai * li).sum::<f64>()
                - epsi / z;

            // assemble (m+1) x (m+1) system for (dlam, dz)
            let mut aa = vec![vec![0.0; m + 1]; m + 1];
            let mut bb = vec![0.0; m + 1];
            for i in 0..m {
                let diaglamyi = s[i] / lam[i] + 1.0 / diagy[i];
                for k in 0..m {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += gg[i][j] * gg[k][j] / diagx[j];
                    }
                    aa[i][k] = acc + if i == k { diaglamyi } else { 0.0 };
                }
                aa[i][m] = a[i];
                aa[m][i] = a[i];
                let mut gdx = 0.0;
                for j in 0..n {
                    gdx += gg[i][j] * delx[j] / diagx[j];
                }
                bb[i] = dellam[i] + dely[i] / diagy[i] - gdx;
            }
            aa[m][m] = -zet / z;
            bb[m] = delz;
            let sol = dense_solve(&mut aa, &mut bb)?;
            let dlam = &sol[..m];
            let dz = sol[m];

            let mut dx = vec![0.0; n];
            for j in 0..n {
                let mut glam = 0.0;
                for i in 0..m {
                    glam += gg[i][j] * dlam[i];
                }
                dx[j] = -(delx[j] + glam) / diagx[j];
            }
            let mut dy = vec![0.0; m];
            for i in 0..m {
                dy[i] = -dely[i] / diagy[i] + dlam[i] / diagy[i];
            }
            let dxsi: Vec<f64> = (0..n)
                .map(|j| -xsi[j] + (epsi - xsi[j] * dx[j]) / (x[j] - alfa[j]))
                .collect();
            let deta: Vec<f64> = (0..n)
                .map(|j| -eta[j] + (epsi + eta[j] * dx[j]) / (beta[j] - x[j]))
                .collect();
            let dmu: Vec<f64> = (0..m)
                .map(|i| -mu[i] + (epsi - mu[i] * dy[i]) / y[i])
                .collect();
            let dzet = -zet + (epsi - zet * dz) / z;
            let ds: Vec<f64> = (0..m)
                .map(|i| -s[i] + (epsi - s[i] * dlam[i]) / lam[i])
                .collect();

            // largest step keeping all positivity constraints
            let mut stm: f64 = 1.0;
            let guard = |v: f64, dv: f64, stm: &mut f64| {
                if dv < 0.0 {
                    *stm = stm.max(-1.01 * dv / v);
                }
            };
            for i in 0..m {
                guard(y[i], dy[i], &mut stm);
                guard(lam[i], dlam[i], &mut stm);
                guard(mu[i], dmu[i], &mut stm);
                guard(s[i], ds[i], &mut stm);
            }
            guard(z, dz, &mut stm);
            guard(zet, dzet, &mut stm);
            for j in 0..n {
                guard(x[j] - alfa[j], dx[j], &mut stm);
                guard(beta[j] - x[j], -dx[j], &mut stm);
                guard(xsi[j], dxsi[j], &mut stm);
                guard(eta[j], deta[j], &mut stm);
            }
            let mut steg = 1.0 / stm;

            let (xold, yold, zold) = (x.clone(), y.clone(), z);
            let (lamold, xsiold, etaold) = (lam.clone(), xsi.clone(), eta.clone());
            let (muold, zetold, sold) = (mu.clone(), zet, s.clone());

            let mut resinew = 2.0 * residunorm;
            let mut itto = 0;
            while resinew > residunorm && itto < 50 {
                itto += 1;
                for j in 0..n {
                    x[j] = xold[j] + steg * dx[j];
                    xsi[j] = xsiold[j] + steg * dxsi[j];
                    eta[j] = etaold[j] + steg * deta[j];
                }
                let mut snew = vec![0.0; m];
                for i in 0..m {
                    y[i] = yold[i] + steg * dy[i];
                    lam[i] = lamold[i] + steg * dlam[i];
                    mu[i] = muold[i] + steg * dmu[i];
                    snew[i] = sold[i] + steg * ds[i];
                }
                z = zold + steg * dz;
                zet = zetold + steg * dzet;
                s = snew;
                let (rn, rm) = residual(&x, &y, z, &lam, &xsi, &eta, &mu, zet, &s, epsi);
                resinew = rn;
                residumax = rm;
                steg *= 0.5;
            }
            residunorm = resinew;
        }
        epsi *= 0.1;
    }
    Ok((x, y, z, lam))
}

/// Gaussian elimination with partial pivoting for the small dual system.
fn dense_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Numerical("singular MMA dual system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

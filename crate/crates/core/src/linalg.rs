//! Small dense linear algebra: pivoted Gaussian elimination and real
//! eigenvalues via the classic balance / Hessenberg / shifted-QR pipeline
//! (EISPACK lineage). Sized for desk-scale systems (n <= 64); everything is
//! generic over the scalar type.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("QR eigenvalue iteration did not converge")]
    NoConvergence,
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting. `a` and `b`
/// are consumed as workspace.
pub fn solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>, LinalgError> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(T::zero(), |m, &v| m.max(v.abs()));
    if scale == T::zero() {
        return Err(LinalgError::Singular);
    }
    let tiny = scale * T::epsilon() * T::of(n as f64);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if a[pivot_row][col].abs() <= tiny {
            return Err(LinalgError::Singular);
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != T::zero() {
                for k in col..n {
                    let t = a[col][k];
                    a[row][k] = a[row][k] - factor * t;
                }
                b[row] = b[row] - factor * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum = sum - a[col][k] * b[k];
        }
        b[col] = sum / a[col][col];
    }
    Ok(b)
}

/// Eigenvalues of a real square matrix as `(re, im)` pairs, sorted by real
/// part then imaginary part. Balancing, elimination to upper Hessenberg form,
/// and a Francis double-shift QR iteration.
pub fn eigenvalues<T: Scalar>(mut a: Vec<Vec<T>>) -> Result<Vec<(T, T)>, LinalgError> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    if n == 0 {
        return Ok(Vec::new());
    }
    balance(&mut a);
    hessenberg(&mut a);
    let mut eigs = hqr(a)?;
    eigs.sort_by(|x, y| {
        x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(eigs)
}

/// Similarity scaling that equalizes row and column norms (radix 2 so the
/// transform is exact in floating point).
fn balance<T: Scalar>(a: &mut [Vec<T>]) {
    let n = a.len();
    let radix = T::of(2.0);
    let sqrdx = radix * radix;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 0..n {
                if j != i {
                    c = c + a[j][i].abs();
                    r = r + a[i][j].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                let mut c2 = c;
                while c2 < g {
                    f = f * radix;
                    c2 = c2 * sqrdx;
                }
                g = r * radix;
                while c2 > g {
                    f = f / radix;
                    c2 = c2 / sqrdx;
                }
                if (c2 + r) / f < T::of(0.95) * s {
                    done = false;
                    let ginv = T::one() / f;
                    for j in 0..n {
                        a[i][j] = a[i][j] * ginv;
                    }
                    for j in 0..n {
                        a[j][i] = a[j][i] * f;
                    }
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Reduce to upper Hessenberg form by stabilized elementary transforms; the
/// region below the first subdiagonal is cleared afterwards.
fn hessenberg<T: Scalar>(a: &mut [Vec<T>]) {
    let n = a.len();
    if n < 3 {
        return;
    }
    for m in 1..n - 1 {
        let mut x = T::zero();
        let mut pivot = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                pivot = j;
            }
        }
        if pivot != m {
            for j in m - 1..n {
                let t = a[pivot][j];
                a[pivot][j] = a[m][j];
                a[m][j] = t;
            }
            for j in 0..n {
                let t = a[j][pivot];
                a[j][pivot] = a[j][m];
                a[j][m] = t;
            }
        }
        if x != T::zero() {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != T::zero() {
                    y = y / x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        let t = a[m][j];
                        a[i][j] = a[i][j] - y * t;
                    }
                    for j in 0..n {
                        let t = a[j][i];
                        a[j][m] = a[j][m] + y * t;
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[i][j] = T::zero();
        }
    }
}

fn sign_of<T: Scalar>(magnitude: T, sign: T) -> T {
    if sign >= T::zero() {
        magnitude.abs()
    } else {
        -magnitude.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
fn hqr<T: Scalar>(mut a: Vec<Vec<T>>) -> Result<Vec<(T, T)>, LinalgError> {
    let n = a.len();
    let eps = T::epsilon();
    let mut eigs = vec![(T::zero(), T::zero()); n];
    let mut anorm = T::zero();
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm = anorm + a[i][j].abs();
        }
    }
    if anorm == T::zero() {
        return Ok(eigs);
    }
    let mut t = T::zero();
    let mut nn = n as isize - 1;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // Find a negligible subdiagonal element.
            let mut l = nn;
            while l >= 1 {
                let s = {
                    let s = a[(l - 1) as usize][(l - 1) as usize].abs()
                        + a[l as usize][l as usize].abs();
                    if s == T::zero() {
                        anorm
                    } else {
                        s
                    }
                };
                if a[l as usize][(l - 1) as usize].abs() <= eps * s {
                    a[l as usize][(l - 1) as usize] = T::zero();
                    break;
                }
                l -= 1;
            }
            let x = a[nn as usize][nn as usize];
            if l == nn {
                eigs[nn as usize] = (x + t, T::zero());
                nn -= 1;
                break;
            }
            let y = a[(nn - 1) as usize][(nn - 1) as usize];
            let w = a[nn as usize][(nn - 1) as usize] * a[(nn - 1) as usize][nn as usize];
            if l == nn - 1 {
                // 2x2 block: closed-form pair of roots.
                let p = (y - x) * T::of(0.5);
                let q = p * p + w;
                let z = q.abs().sqrt();
                let x = x + t;
                if q >= T::zero() {
                    let z = p + sign_of(z, p);
                    let first = x + z;
                    let second = if z != T::zero() { x - w / z } else { first };
                    eigs[(nn - 1) as usize] = (first, T::zero());
                    eigs[nn as usize] = (second, T::zero());
                } else {
                    eigs[(nn - 1) as usize] = (x + p, z);
                    eigs[nn as usize] = (x + p, -z);
                }
                nn -= 2;
                break;
            }
            if its == 40 {
                return Err(LinalgError::NoConvergence);
            }
            let (mut x, mut y, mut w) = (x, y, w);
            if its == 10 || its == 20 {
                // Exceptional shift.
                t = t + x;
                for i in 0..=nn as usize {
                    a[i][i] = a[i][i] - x;
                }
                let s = a[nn as usize][(nn - 1) as usize].abs()
                    + a[(nn - 1) as usize][(nn - 2) as usize].abs();
                x = T::of(0.75) * s;
                y = x;
                w = T::of(-0.4375) * s * s;
            }
            its += 1;
            // Look for two consecutive small subdiagonal elements.
            let mut m = nn - 2;
            let (mut p, mut q, mut r) = (T::zero(), T::zero(), T::zero());
            while m >= l {
                let z = a[m as usize][m as usize];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1) as usize][m as usize] + a[m as usize][(m + 1) as usize];
                q = a[(m + 1) as usize][(m + 1) as usize] - z - rr - ss;
                r = a[(m + 2) as usize][(m + 1) as usize];
                let s = p.abs() + q.abs() + r.abs();
                p = p / s;
                q = q / s;
                r = r / s;
                if m == l {
                    break;
                }
                let u = a[m as usize][(m - 1) as usize].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[(m - 1) as usize][(m - 1) as usize].abs()
                        + z.abs()
                        + a[(m + 1) as usize][(m + 1) as usize].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[i as usize][(i - 2) as usize] = T::zero();
                if i > m + 2 {
                    a[i as usize][(i - 3) as usize] = T::zero();
                }
            }
            // Double QR sweep over rows l..nn, columns m..nn.
            for k in m..nn {
                if k != m {
                    p = a[k as usize][(k - 1) as usize];
                    q = a[(k + 1) as usize][(k - 1) as usize];
                    r = if k != nn - 1 {
                        a[(k + 2) as usize][(k - 1) as usize]
                    } else {
                        T::zero()
                    };
                    x = p.abs() + q.abs() + r.abs();
                    if x != T::zero() {
                        p = p / x;
                        q = q / x;
                        r = r / x;
                    }
                }
                let s = sign_of((p * p + q * q + r * r).sqrt(), p);
                if s != T::zero() {
                    if k == m {
                        if l != m {
                            a[k as usize][(k - 1) as usize] = -a[k as usize][(k - 1) as usize];
                        }
                    } else {
                        a[k as usize][(k - 1) as usize] = -s * x;
                    }
                    p = p + s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q = q / p;
                    r = r / p;
                    for j in k..=nn {
                        let mut pp = a[k as usize][j as usize] + q * a[(k + 1) as usize][j as usize];
                        if k != nn - 1 {
                            pp = pp + r * a[(k + 2) as usize][j as usize];
                            a[(k + 2) as usize][j as usize] =
                                a[(k + 2) as usize][j as usize] - pp * z;
                        }
                        a[(k + 1) as usize][j as usize] = a[(k + 1) as usize][j as usize] - pp * y;
                        a[k as usize][j as usize] = a[k as usize][j as usize] - pp * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp =
                            x * a[i as usize][k as usize] + y * a[i as usize][(k + 1) as usize];
                        if k != nn - 1 {
                            pp = pp + z * a[i as usize][(k + 2) as usize];
                            a[i as usize][(k + 2) as usize] =
                                a[i as usize][(k + 2) as usize] - pp * r;
                        }
                        a[i as usize][(k + 1) as usize] =
                            a[i as usize][(k + 1) as usize] - pp * q;
                        a[i as usize][k as usize] = a[i as usize][k as usize] - pp;
                    }
                }
            }
        }
    }
    Ok(eigs)
}

use num_complex::Complex64;

use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a complex band matrix.
///
/// Column-major band storage with `kl` extra rows for pivoting fill-in,
/// real and imaginary parts split so the column updates vectorize.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Factors the `n × n` matrix given as `(row, col, value)` entries;
    /// duplicates are summed.
    pub fn factor(n: usize, kl: usize, ku: usize, entries: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Result<Self> {
        let ld = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, ld, re: vec![0.0; n * ld], im: vec![0.0; n * ld], ipiv: vec![0; n] };
        for (i, j, v) in entries {
            if i >= n || j >= n || i > j + kl || j > i + ku {
                return Err(Error::Solver(format!("entry ({i}, {j}) lies outside the band")));
            }
            let at = lu.at(i, j);
            lu.re[at] += v.re;
            lu.im[at] += v.im;
        }
        lu.factorize()?;
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ld + self.kl + self.ku + i - j
    }

    fn get(&self, i: usize, j: usize) -> Complex64 {
        let a = self.at(i, j);
        Complex64::new(self.re[a], self.im[a])
    }

    fn factorize(&mut self) -> Result<()> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let ld = self.ld;
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld + kv;
            let mut jp = 0;
            let mut best = -1.0;
            for p in 0..=km {
                let m = self.re[col + p].abs() + self.im[col + p].abs();
                if m > best {
                    best = m;
                    jp = p;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::Solver(format!("matrix is singular at column {j}")));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.at(j, c);
                    let b = self.at(j + jp, c);
                    self.re.swap(a, b);
                    self.im.swap(a, b);
                }
            }
            if km == 0 {
                continue;
            }
            let inv = Complex64::new(1.0, 0.0) / Complex64::new(self.re[col], self.im[col]);
            for p in 1..=km {
                let v = Complex64::new(self.re[col + p], self.im[col + p]) * inv;
                self.re[col + p] = v.re;
                self.im[col + p] = v.im;
            }
            for c in j + 1..=ju {
                let (lo_re, hi_re) = self.re.split_at_mut(c * ld);
                let (lo_im, hi_im) = self.im.split_at_mut(c * ld);
                let top = kv + j - c;
                let (tr, ti) = (hi_re[top], hi_im[top]);
                if tr == 0.0 && ti == 0.0 {
                    continue;
                }
                let lr = &lo_re[col + 1..col + 1 + km];
                let li = &lo_im[col + 1..col + 1 + km];
                let ar = &mut hi_re[top + 1..top + 1 + km];
                let ai = &mut hi_im[top + 1..top + 1 + km];
                for p in 0..km {
                    ar[p] -= tr * lr[p] - ti * li[p];
                    ai[p] -= tr * li[p] + ti * lr[p];
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [Complex64]) -> Result<()> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        if b.len() != n {
            return Err(Error::Solver(format!("right-hand side has length {} for a {n}-row system", b.len())));
        }
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj == Complex64::default() {
                continue;
            }
            for p in 1..=kl.min(n - 1 - j) {
                b[j + p] -= bj * self.get(j + p, j);
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.get(j, j);
            let bj = b[j];
            for p in 1..=kv.min(j) {
                b[j - p] -= bj * self.get(j - p, j);
            }
        }
        Ok(())
    }
}

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Highest order accepted by [`bessel_jy`].
pub const MAX_ORDER: usize = 60;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE: f64 = 1e250;

/// J_m(x) and Y_m(x) for every order 0..=`len − 1`.
#[derive(Clone, Debug)]
pub struct BesselTable {
    pub x: f64,
    pub j: Vec<f64>,
    pub y: Vec<f64>,
}

impl BesselTable {
    /// Orders 0..=`max_order + 1` so that derivatives up to `max_order` are available.
    pub fn new(max_order: usize, x: f64) -> Result<Self> {
        if !(x.is_finite() && x > 0.0) {
            return domain(format!("Bessel argument must be positive, got {x}"));
        }
        let top = max_order + 1;
        let j = bessel_j_miller(top.max(1), x);
        let y = bessel_y_upward(top.max(1), x, &j);
        Ok(Self { x, j, y })
    }

    pub fn max_order(&self) -> usize {
        self.j.len() - 2
    }

    pub fn dj(&self, n: usize) -> f64 {
        if n == 0 {
            -self.j[1]
        } else {
            0.5 * (self.j[n - 1] - self.j[n + 1])
        }
    }

    pub fn dy(&self, n: usize) -> f64 {
        if n == 0 {
            -self.y[1]
        } else {
            0.5 * (self.y[n - 1] - self.y[n + 1])
        }
    }
}

/// `(J_n(x), Y_n(x), J_n'(x), Y_n'(x))`.
pub fn bessel_jy(n: usize, x: f64) -> Result<(f64, f64, f64, f64)> {
    if n > MAX_ORDER {
        return domain(format!("Bessel order {n} exceeds {MAX_ORDER}"));
    }
    let t = BesselTable::new(n, x)?;
    Ok((t.j[n], t.y[n], t.dj(n), t.dy(n)))
}

/// Downward recurrence from a high even start, normalized with
/// J_0 + 2 Σ J_2k = 1. Returns J_0..=J_top.
fn bessel_j_miller(top: usize, x: f64) -> Vec<f64> {
    let m0 = top.max(x.ceil() as usize);
    let mut start = m0 + 20 + (40.0 * m0 as f64).sqrt() as usize;
    start += start % 2;

    let mut out = vec![0.0; top + 1];
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-30; // J_k
    let mut even_sum = 0.0;
    let mut k = start;
    loop {
        if k <= top {
            out[k] = cur;
        }
        if k.is_multiple_of(2) {
            even_sum += if k == 0 { cur } else { 2.0 * cur };
        }
        if k == 0 {
            break;
        }
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        k -= 1;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            next /= RESCALE;
            even_sum /= RESCALE;
            for v in out.iter_mut().skip(k + 1) {
                *v /= RESCALE;
            }
        }
    }
    for v in &mut out {
        *v /= even_sum;
    }
    out
}

/// Y_0 and Y_1 from Neumann series over the J values, then upward recurrence.
fn bessel_y_upward(top: usize, x: f64, j_low: &[f64]) -> Vec<f64> {
    // The Neumann series need J of higher order than the caller asked for.
    let m0 = x.ceil() as usize;
    let series_top = (m0 + 40 + (40.0 * m0 as f64).sqrt() as usize).max(top);
    let j = if series_top + 1 > j_low.len() { bessel_j_miller(series_top, x) } else { j_low.to_vec() };

    let log_term = (x / 2.0).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut k = 1;
    while 2 * k < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / k as f64;
        k += 1;
    }
    let y0 = 2.0 / PI * log_term * j[0] - 4.0 / PI * s0;

    let mut s1 = 0.0;
    let mut m = 1;
    while 2 * m + 1 < j.len() {
        let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
        let mf = m as f64;
        s1 += sign * (2.0 * mf + 1.0) / (mf * (mf + 1.0)) * j[2 * m + 1];
        m += 1;
    }
    let y1 = 2.0 / PI * (log_term * j[1] - j[0] / x - j[1] + s1);

    let mut y = vec![0.0; top + 1];
    y[0] = y0;
    y[1] = y1;
    for n in 1..top {
        y[n + 1] = 2.0 * n as f64 / x * y[n] - y[n - 1];
    }
    y
}

//! Closed-form area moments of ellipses.
//!
//! For an ellipse `A` and `s = x² + y²` the moment vector of order `r` is
//!
//! ```text
//! v^r = ( <x s^r>, <y s^r>, <s^r> )      <·> = area average over A
//! ```
//!
//! It is evaluated in three steps: moments of the origin-centred,
//! axis-aligned ellipse from a trigonometric table; binomial expansion for
//! the translated ellipse; and a plane rotation, which leaves `s` unchanged
//! and rotates the first two components.

use std::sync::OnceLock;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::conic::{ellipse_axes, ConicMatrix};
use crate::error::{Error, Result};

/// Largest supported number of radial distortion coefficients beyond `d₀`.
pub const MAX_DISTORTION_ORDER: usize = 8;

/// Largest moment order `r` (three times the distortion order).
pub const MAX_MOMENT_ORDER: usize = 3 * MAX_DISTORTION_ORDER;

/// Largest `m + n` accepted by [`angular_integral`].
pub const MAX_ANGULAR_ORDER: usize = 2 * MAX_MOMENT_ORDER + 1;

/// Binomial coefficients from Pascal's triangle, exact in `f64` for rows up to 49.
#[derive(Debug, Clone)]
pub struct CombinationTable {
    rows: Vec<Vec<f64>>,
}

impl CombinationTable {
    pub const MAX_ROW: usize = MAX_ANGULAR_ORDER;

    pub fn new(max_row: usize) -> Self {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max_row + 1);
        for n in 0..=max_row {
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        Self { rows }
    }

    pub fn global() -> &'static Self {
        static TABLE: OnceLock<CombinationTable> = OnceLock::new();
        TABLE.get_or_init(|| Self::new(Self::MAX_ROW))
    }

    pub fn max_row(&self) -> usize {
        self.rows.len() - 1
    }

    /// `C(n, k)`; zero when `k > n`.
    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        if k > n {
            0.0
        } else {
            self.rows[n][k]
        }
    }
}

/// `(1/2π) ∫₀^{2π} cosᵐθ sinⁿθ dθ`.
pub fn angular_integral(m: usize, n: usize) -> Result<f64> {
    if m + n > MAX_ANGULAR_ORDER {
        return Err(Error::OrderOverflow {
            order: m + n,
            max: MAX_ANGULAR_ORDER,
        });
    }
    if m % 2 == 1 || n % 2 == 1 {
        return Ok(0.0);
    }
    Ok(even_angular_integral(CombinationTable::global(), m / 2, n / 2))
}

fn even_angular_integral(table: &CombinationTable, i: usize, j: usize) -> f64 {
    let num = table.get(2 * i + 2 * j, i + j) * table.get(i + j, i);
    let den = table.get(2 * i + 2 * j, 2 * i);
    // 2^{-(2i+2j)} is exact
    num / den * (-2.0 * (i + j) as f64).exp2()
}

/// `<x₀ᵐ y₀ⁿ>` over the centred, axis-aligned ellipse with semi-axes `a`, `b`.
pub fn centered_moment(m: usize, n: usize, a: f64, b: f64) -> Result<f64> {
    let i = angular_integral(m, n)?;
    if i == 0.0 {
        return Ok(0.0);
    }
    Ok(a.powi(m as i32) * b.powi(n as i32) * i / (1.0 + (m + n) as f64 / 2.0))
}

/// `(<x sʳ>, <y sʳ>, <sʳ>)` for one ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub v: [f64; 3],
    pub order: usize,
}

/// Ellipse given in its own axis-aligned frame: centre `(tx, ty)` in that
/// frame, semi-axis `a` along the frame's x axis, and the rotation `alpha`
/// that carries the frame onto the working plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseFrame {
    pub tx: f64,
    pub ty: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl EllipseFrame {
    /// Axis-aligned frame of the ellipse described by `q`.
    pub fn from_conic(q: &ConicMatrix) -> Result<Self> {
        let (mut frame, c, s) = Self::with_direction(q)?;
        frame.alpha = s.atan2(c);
        Ok(frame)
    }

    /// Frame plus `(cos α, sin α)`; `alpha` itself is left at zero.
    fn with_direction(q: &ConicMatrix) -> Result<(Self, f64, f64)> {
        let g = ellipse_axes(q)?;
        let (c, s) = (g.cos, g.sin);
        let frame = Self {
            tx: c * g.tx + s * g.ty,
            ty: -s * g.tx + c * g.ty,
            a: g.m0,
            b: g.m1,
            alpha: 0.0,
        };
        Ok((frame, c, s))
    }

    /// Centre expressed in the working plane.
    pub fn center(&self) -> Point2<f64> {
        let (s, c) = self.alpha.sin_cos();
        Point2::new(c * self.tx - s * self.ty, s * self.tx + c * self.ty)
    }
}

/// One term of the translated-ellipse expansion, coefficients pre-multiplied.
#[derive(Debug, Clone, Copy)]
struct ExpansionTerm {
    i: u8,
    j: u8,
    px: u8,
    py: u8,
    cx: f64,
    cy: f64,
    cs: f64,
}

const SIDE: usize = MAX_MOMENT_ORDER + 1;
type Square = [[f64; SIDE]; SIDE];

/// Per-order term lists for the translated-ellipse sums and the
/// trigonometric factors `I^{2i,2j} / (1 + i + j)`.
struct ExpansionTables {
    terms: Vec<Vec<ExpansionTerm>>,
    centered: Square,
    /// `C(2p, 2i)` and `C(2p+1, 2i)`.
    even: Square,
    odd: Square,
}

impl ExpansionTables {
    fn global() -> &'static Self {
        static TABLES: OnceLock<ExpansionTables> = OnceLock::new();
        TABLES.get_or_init(|| Self::build(CombinationTable::global()))
    }

    fn build(c: &CombinationTable) -> Self {
        let mut terms = Vec::with_capacity(MAX_MOMENT_ORDER + 1);
        for r in 0..=MAX_MOMENT_ORDER {
            let mut list = Vec::new();
            for i in 0..=r {
                for j in 0..=(r - i) {
                    for k in i..=(r - j) {
                        let crk = c.get(r, k);
                        list.push(ExpansionTerm {
                            i: i as u8,
                            j: j as u8,
                            px: (2 * k - 2 * i) as u8,
                            py: (2 * r - 2 * k - 2 * j) as u8,
                            cx: crk * c.get(2 * k + 1, 2 * i) * c.get(2 * r - 2 * k, 2 * j),
                            cy: crk * c.get(2 * k, 2 * i) * c.get(2 * r - 2 * k + 1, 2 * j),
                            cs: crk * c.get(2 * k, 2 * i) * c.get(2 * r - 2 * k, 2 * j),
                        });
                    }
                }
            }
            terms.push(list);
        }
        let mut centered = [[0.0; SIDE]; SIDE];
        let mut even = [[0.0; SIDE]; SIDE];
        let mut odd = [[0.0; SIDE]; SIDE];
        for i in 0..SIDE {
            for j in 0..SIDE - i {
                centered[i][j] = even_angular_integral(c, i, j) / (1.0 + (i + j) as f64);
            }
            for j in 0..SIDE {
                even[i][j] = c.get(2 * i, 2 * j);
                odd[i][j] = c.get(2 * i + 1, 2 * j);
            }
        }
        Self {
            terms,
            centered,
            even,
            odd,
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Moment vectors of one axis-aligned ellipse for all orders `0..=max_order`.
///
/// The triple sums are regrouped as
/// `<X^{2p+e} Y^{2q+f}> = Σ_i A_p[i] Σ_j B_q[j] M₀^{2i,2j}`
/// with `X = tx + x₀`, `Y = ty + y₀`, which shares the inner sums between
/// orders.
pub fn moment_vectors_unrotated(frame: &EllipseFrame, max_order: usize) -> Result<Vec<MomentVector>> {
    let mut buf = [[0.0; 3]; MAX_MOMENT_ORDER + 1];
    fill_moment_vectors(frame, max_order, &mut buf)?;
    Ok(buf[..=max_order]
        .iter()
        .enumerate()
        .map(|(order, &v)| MomentVector { v, order })
        .collect())
}

/// Writes `v^r` for `r = 0..=max_order` into `out[r]`, without allocating.
pub fn fill_moment_vectors(frame: &EllipseFrame, max_order: usize, out: &mut [[f64; 3]]) -> Result<()> {
    if max_order > MAX_MOMENT_ORDER {
        return Err(Error::OrderOverflow {
            order: max_order,
            max: MAX_MOMENT_ORDER,
        });
    }
    assert!(out.len() > max_order, "output buffer too short");
    macro_rules! dispatch {
        ($($n:literal)*) => {
            match max_order {
                $($n => grouped::<{ $n + 1 }>(frame, out),)*
                _ => unreachable!(),
            }
        };
    }
    dispatch!(0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16 17 18 19 20 21 22 23 24);
    Ok(())
}

fn grouped<const M: usize>(frame: &EllipseFrame, out: &mut [[f64; 3]]) {
    assert!(M <= SIDE && out.len() >= M);
    let t = ExpansionTables::global();
    let (tx, ty) = (frame.tx, frame.ty);
    let (a2, b2) = (frame.a * frame.a, frame.b * frame.b);
    let (tx2, ty2) = (tx * tx, ty * ty);

    let mut a2p = [1.0; M];
    let mut b2p = [1.0; M];
    let mut tx2p = [1.0; M];
    let mut ty2p = [1.0; M];
    for k in 1..M {
        a2p[k] = a2p[k - 1] * a2;
        b2p[k] = b2p[k - 1] * b2;
        tx2p[k] = tx2p[k - 1] * tx2;
        ty2p[k] = ty2p[k - 1] * ty2;
    }

    // n0[q][i] = Σ_j C(2q,2j) ty^{2q-2j} M₀^{2i,2j}; n1 uses C(2q+1,2j) ty^{2q+1-2j}
    let mut n0 = [[0.0; M]; M];
    let mut n1 = [[0.0; M]; M];
    for q in 0..M {
        let (ev, od) = (&t.even[q], &t.odd[q]);
        for i in 0..M - q {
            let (mut e, mut o) = (0.0, 0.0);
            for j in 0..=q {
                let m = t.centered[i][j] * b2p[j] * ty2p[q - j];
                e += ev[j] * m;
                o += od[j] * m;
            }
            n0[q][i] = a2p[i] * e;
            n1[q][i] = a2p[i] * o * ty;
        }
    }

    // <X^{2p} Y^{2q}>, <X^{2p+1} Y^{2q}>, <X^{2p} Y^{2q+1}> folded straight into v^{p+q}
    let c = CombinationTable::global();
    out[..M].fill([0.0; 3]);
    for p in 0..M {
        let (ev, od) = (&t.even[p], &t.odd[p]);
        for q in 0..M - p {
            let (mut s, mut x, mut y) = (0.0, 0.0, 0.0);
            for i in 0..=p {
                let w = tx2p[p - i];
                s += ev[i] * w * n0[q][i];
                x += od[i] * w * n0[q][i];
                y += ev[i] * w * n1[q][i];
            }
            let crk = c.get(p + q, p);
            let v = &mut out[p + q];
            v[0] += crk * x * tx;
            v[1] += crk * y;
            v[2] += crk * s;
        }
    }
}

/// Term-by-term evaluation of the translated-ellipse triple sums. Slower
/// than [`moment_vectors_unrotated`]; kept as an independent cross-check.
pub fn moment_vectors_by_terms(frame: &EllipseFrame, max_order: usize) -> Result<Vec<MomentVector>> {
    if max_order > MAX_MOMENT_ORDER {
        return Err(Error::OrderOverflow {
            order: max_order,
            max: MAX_MOMENT_ORDER,
        });
    }
    let tables = ExpansionTables::global();
    let n = max_order;

    // M₀^{2i,2j} for i + j <= n
    let a2 = frame.a * frame.a;
    let b2 = frame.b * frame.b;
    let mut a2p = [1.0; MAX_MOMENT_ORDER + 1];
    let mut b2p = [1.0; MAX_MOMENT_ORDER + 1];
    for k in 1..=n {
        a2p[k] = a2p[k - 1] * a2;
        b2p[k] = b2p[k - 1] * b2;
    }
    let mut centered = [[0.0; MAX_MOMENT_ORDER + 1]; MAX_MOMENT_ORDER + 1];
    for i in 0..=n {
        for j in 0..=(n - i) {
            centered[i][j] = a2p[i] * b2p[j] * tables.centered[i][j];
        }
    }

    let mut txp = [1.0; 2 * MAX_MOMENT_ORDER + 1];
    let mut typ = [1.0; 2 * MAX_MOMENT_ORDER + 1];
    for k in 1..=2 * n {
        txp[k] = txp[k - 1] * frame.tx;
        typ[k] = typ[k - 1] * frame.ty;
    }

    let mut out = Vec::with_capacity(n + 1);
    for r in 0..=n {
        let (mut sx, mut sy, mut ss) = (Kahan::default(), Kahan::default(), Kahan::default());
        for t in &tables.terms[r] {
            let m = centered[t.i as usize][t.j as usize] * txp[t.px as usize] * typ[t.py as usize];
            sx.add(t.cx * m * frame.tx);
            sy.add(t.cy * m * frame.ty);
            ss.add(t.cs * m);
        }
        out.push(MomentVector {
            v: [sx.sum, sy.sum, ss.sum],
            order: r,
        });
    }
    Ok(out)
}

/// Moment vector of order `r` of an axis-aligned ellipse (rotation ignored).
pub fn moment_vector_unrotated(frame: &EllipseFrame, r: usize) -> Result<MomentVector> {
    let mut all = moment_vectors_unrotated(frame, r)?;
    Ok(all.pop().expect("at least one order"))
}

/// Carries a moment vector through a rotation by `alpha` about the origin.
pub fn rotate_moment_vector(v: &MomentVector, alpha: f64) -> MomentVector {
    let (s, c) = alpha.sin_cos();
    MomentVector {
        v: [c * v.v[0] - s * v.v[1], s * v.v[0] + c * v.v[1], v.v[2]],
        order: v.order,
    }
}

/// Rotated moment vectors written into `out`, as [`moment_vectors`].
pub fn fill_rotated_moment_vectors(q: &ConicMatrix, max_order: usize, out: &mut [[f64; 3]]) -> Result<()> {
    let (frame, c, s) = EllipseFrame::with_direction(q)?;
    fill_moment_vectors(&frame, max_order, out)?;
    for v in &mut out[..=max_order] {
        *v = [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
    }
    Ok(())
}

/// Moment vectors of the ellipse `{p : p̃ᵀ Q p̃ <= 0}` for orders `0..=max_order`.
pub fn moment_vectors(q: &ConicMatrix, max_order: usize) -> Result<Vec<MomentVector>> {
    let frame = EllipseFrame::from_conic(q)?;
    let mut out = moment_vectors_unrotated(&frame, max_order)?;
    for v in &mut out {
        *v = rotate_moment_vector(v, frame.alpha);
    }
    Ok(out)
}

pub fn moment_vector(q: &ConicMatrix, r: usize) -> Result<MomentVector> {
    let mut all = moment_vectors(q, r)?;
    Ok(all.pop().expect("at least one order"))
}

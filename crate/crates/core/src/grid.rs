//! Periodic-box spinor fields and the unitary discrete Fourier transform
//! ĝ(ζ_k) = Δx³(2π)^{-3/2} Σ_j e^{-i x_j·ζ_k} g(x_j).

use crate::algebra::Spinor;
use crate::error::{LabError, Result};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Position,
    Momentum,
}

/// Box geometry: points per axis, side lengths and center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeom {
    pub n: [usize; 3],
    pub len: [f64; 3],
    pub center: [f64; 3],
}

impl GridGeom {
    pub fn new(n: [usize; 3], len: [f64; 3], center: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if n[a] < 2 {
                return Err(LabError::config("grid.n", format!("need at least 2 points per axis (got {})", n[a])));
            }
            if !(len[a] > 0.0 && len[a].is_finite()) {
                return Err(LabError::config("grid.box", format!("box length must be positive (got {})", len[a])));
            }
            if !center[a].is_finite() {
                return Err(LabError::config("grid.center", "center must be finite"));
            }
        }
        Ok(GridGeom { n, len, center })
    }

    pub fn cubic(n: usize, l: f64) -> Result<Self> {
        Self::new([n; 3], [l; 3], [0.0; 3])
    }

    pub fn size(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn dx(&self) -> [f64; 3] {
        [self.len[0] / self.n[0] as f64, self.len[1] / self.n[1] as f64, self.len[2] / self.n[2] as f64]
    }

    pub fn dzeta(&self) -> [f64; 3] {
        [2.0 * PI / self.len[0], 2.0 * PI / self.len[1], 2.0 * PI / self.len[2]]
    }

    pub fn cell(&self) -> f64 {
        let d = self.dx();
        d[0] * d[1] * d[2]
    }

    pub fn zeta_cell(&self) -> f64 {
        let d = self.dzeta();
        d[0] * d[1] * d[2]
    }

    /// Radius of the largest ball inside the momentum lattice.
    pub fn nyquist(&self) -> f64 {
        let d = self.dx();
        (PI / d[0]).min(PI / d[1]).min(PI / d[2])
    }

    /// First grid point along each axis: c − ⌊n/2⌋Δx.
    pub fn origin(&self) -> [f64; 3] {
        let d = self.dx();
        [
            self.center[0] - (self.n[0] / 2) as f64 * d[0],
            self.center[1] - (self.n[1] / 2) as f64 * d[1],
            self.center[2] - (self.n[2] / 2) as f64 * d[2],
        ]
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        [i, j, k]
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.n[1] + ijk[1]) * self.n[2] + ijk[2]
    }

    pub fn x_axis(&self, a: usize) -> Vec<f64> {
        let o = self.origin()[a];
        let d = self.dx()[a];
        (0..self.n[a]).map(|i| o + i as f64 * d).collect()
    }

    /// fftfreq ordering.
    pub fn zeta_axis(&self, a: usize) -> Vec<f64> {
        let n = self.n[a];
        let d = self.dzeta()[a];
        (0..n).map(|i| if i < (n + 1) / 2 { i as f64 * d } else { (i as f64 - n as f64) * d }).collect()
    }

    pub fn x_points(&self) -> Vec<[f64; 3]> {
        let ax: Vec<Vec<f64>> = (0..3).map(|a| self.x_axis(a)).collect();
        (0..self.size())
            .map(|idx| {
                let [i, j, k] = self.unravel(idx);
                [ax[0][i], ax[1][j], ax[2][k]]
            })
            .collect()
    }

    pub fn zeta_points(&self) -> Vec<[f64; 3]> {
        let ax: Vec<Vec<f64>> = (0..3).map(|a| self.zeta_axis(a)).collect();
        (0..self.size())
            .map(|idx| {
                let [i, j, k] = self.unravel(idx);
                [ax[0][i], ax[1][j], ax[2][k]]
            })
            .collect()
    }

    /// Largest |x| over grid points.
    pub fn max_radius(&self) -> f64 {
        let mut r2 = 0.0;
        for a in 0..3 {
            let ax = self.x_axis(a);
            let m = ax.iter().map(|v| v.abs()).fold(0.0, f64::max);
            r2 += m * m;
        }
        r2.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinorGrid {
    pub geom: GridGeom,
    pub space: Space,
    pub data: Vec<Spinor>,
}

pub(crate) struct Plans {
    pub(crate) fwd: [Arc<dyn Fft<f64>>; 3],
    pub(crate) inv: [Arc<dyn Fft<f64>>; 3],
}

pub(crate) fn plans(n: [usize; 3]) -> Plans {
    let mut p = FftPlanner::new();
    Plans {
        fwd: [p.plan_fft_forward(n[0]), p.plan_fft_forward(n[1]), p.plan_fft_forward(n[2])],
        inv: [p.plan_fft_inverse(n[0]), p.plan_fft_inverse(n[1]), p.plan_fft_inverse(n[2])],
    }
}

pub(crate) fn fft3(buf: &mut [C64], n: [usize; 3], f: &[Arc<dyn Fft<f64>>; 3]) {
    let [nx, ny, nz] = n;
    // z lines are contiguous
    f[2].process(buf);
    let mut line = vec![C64::new(0.0, 0.0); ny.max(nx)];
    for i in 0..nx {
        for k in 0..nz {
            for j in 0..ny {
                line[j] = buf[(i * ny + j) * nz + k];
            }
            f[1].process(&mut line[..ny]);
            for j in 0..ny {
                buf[(i * ny + j) * nz + k] = line[j];
            }
        }
    }
    for j in 0..ny {
        for k in 0..nz {
            for i in 0..nx {
                line[i] = buf[(i * ny + j) * nz + k];
            }
            f[0].process(&mut line[..nx]);
            for i in 0..nx {
                buf[(i * ny + j) * nz + k] = line[i];
            }
        }
    }
}

impl SpinorGrid {
    pub fn zeros(geom: GridGeom, space: Space) -> Self {
        SpinorGrid { geom, space, data: vec![[C64::new(0.0, 0.0); 4]; geom.size()] }
    }

    pub fn from_fn<F: FnMut(&[f64; 3]) -> Spinor>(geom: GridGeom, mut f: F) -> Self {
        let data = geom.x_points().iter().map(|x| f(x)).collect();
        SpinorGrid { geom, space: Space::Position, data }
    }

    fn weight(&self) -> f64 {
        match self.space {
            Space::Position => self.geom.cell(),
            Space::Momentum => self.geom.zeta_cell(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.weight() * self.data.iter().map(|s| s.iter().map(|c| c.norm_sqr()).sum::<f64>()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// ⟨self, other⟩, antilinear in the first slot.
    pub fn inner(&self, other: &SpinorGrid) -> C64 {
        assert_eq!(self.space, other.space);
        assert_eq!(self.data.len(), other.data.len());
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in self.data.iter().zip(&other.data) {
            for c in 0..4 {
                acc += a[c].conj() * b[c];
            }
        }
        acc * self.weight()
    }

    pub fn scale(&mut self, s: C64) {
        self.data.iter_mut().flatten().for_each(|v| *v *= s);
    }

    /// self += s·other
    pub fn axpy(&mut self, s: C64, other: &SpinorGrid) {
        assert_eq!(self.space, other.space);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for c in 0..4 {
                a[c] += s * b[c];
            }
        }
    }

    pub fn sub(&self, other: &SpinorGrid) -> SpinorGrid {
        let mut d = self.clone();
        d.axpy(C64::new(-1.0, 0.0), other);
        d
    }

    pub fn distance(&self, other: &SpinorGrid) -> f64 {
        self.sub(other).norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    fn transform(&self, target: Space) -> SpinorGrid {
        let g = &self.geom;
        let n = g.n;
        let p = plans(n);
        let (f, pref, phase_sign) = match target {
            Space::Momentum => (&p.fwd, g.cell() * (2.0 * PI).powf(-1.5), 1.0),
            Space::Position => (&p.inv, g.zeta_cell() * (2.0 * PI).powf(-1.5), -1.0),
        };
        let x0 = g.origin();
        let zeta = g.zeta_points();
        // e^{∓i x0·ζ}
        let twiddle: Vec<C64> = zeta
            .iter()
            .map(|z| C64::from_polar(1.0, -phase_sign * (x0[0] * z[0] + x0[1] * z[1] + x0[2] * z[2])))
            .collect();
        let mut out = SpinorGrid::zeros(*g, target);
        let mut buf = vec![C64::new(0.0, 0.0); g.size()];
        for c in 0..4 {
            match target {
                Space::Momentum => {
                    for (b, s) in buf.iter_mut().zip(&self.data) {
                        *b = s[c];
                    }
                    fft3(&mut buf, n, f);
                    for ((o, b), t) in out.data.iter_mut().zip(&buf).zip(&twiddle) {
                        o[c] = b * t * pref;
                    }
                }
                Space::Position => {
                    for ((b, s), t) in buf.iter_mut().zip(&self.data).zip(&twiddle) {
                        *b = s[c] * t;
                    }
                    fft3(&mut buf, n, f);
                    for (o, b) in out.data.iter_mut().zip(&buf) {
                        o[c] = b * pref;
                    }
                }
            }
        }
        out
    }

    pub fn to_momentum(&self) -> SpinorGrid {
        assert_eq!(self.space, Space::Position, "already in momentum space");
        self.transform(Space::Momentum)
    }

    pub fn to_position(&self) -> SpinorGrid {
        assert_eq!(self.space, Space::Momentum, "already in position space");
        self.transform(Space::Position)
    }

    /// Pointwise map in momentum space: û(ζ) ↦ f(ζ, û(ζ)).
    pub fn map_momentum<F: Fn(&[f64; 3], &Spinor) -> Spinor>(&self, f: F) -> SpinorGrid {
        let mut m = self.to_momentum();
        let z = self.geom.zeta_points();
        for (v, zk) in m.data.iter_mut().zip(&z) {
            *v = f(zk, v);
        }
        m.to_position()
    }
}

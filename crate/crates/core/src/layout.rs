//! Address streams of the layout transformation unit and the blocked bank
//! mapping used for two-way parallel access.
//!
//! On-chip (`b`) addresses index one zero-padded channel plane of the source
//! map; the unit repeats the same stream per channel with a plane offset.
//! External (`d`) addresses index the destination layout.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::LayerMeta;

/// Loop parameters of the address generator.
///
/// The stream is a three-level nest. The outer level runs `outer` times and
/// moves both bases by `step_b`/`step_d`, except every `wrap_every`-th
/// iteration, which moves them by `wrap_b`/`wrap_d` instead (a new output
/// row). Inside it, level 3 runs `inner` times with `inc_b3`/`inc_d3`, and
/// level 2 runs innermost `mid` times with `inc_b2`/`inc_d2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LtuConfig {
    pub outer: i64,
    pub step_b: i64,
    pub step_d: i64,
    pub mid: i64,
    pub inc_b2: i64,
    pub inc_d2: i64,
    pub inner: i64,
    pub inc_b3: i64,
    pub inc_d3: i64,
    /// 0 disables wrapping.
    pub wrap_every: i64,
    pub wrap_b: i64,
    pub wrap_d: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddressTuple {
    pub b: i64,
    pub d: i64,
}

impl fmt::Display for AddressTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.b, self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BankSlot {
    pub bank: usize,
    pub slot: usize,
}

impl LtuConfig {
    /// One-to-one copy of `n` contiguous elements.
    pub fn identity(n: usize) -> Self {
        LtuConfig {
            outer: 1,
            step_b: 0,
            step_d: 0,
            mid: 1,
            inc_b2: 0,
            inc_d2: 0,
            inner: n as i64,
            inc_b3: 1,
            inc_d3: 1,
            wrap_every: 0,
            wrap_b: 0,
            wrap_d: 0,
        }
    }

    /// 3D tensor to Toeplitz matrix: one window per outer iteration, each
    /// window written as `K1*K2` contiguous destination elements.
    pub fn toeplitz(layer: &LayerMeta) -> Result<Self> {
        check_layer(layer)?;
        let wp = (layer.h2 + 2 * layer.pad2) as i64;
        let (o2, s) = (layer.o2 as i64, layer.stride as i64);
        let kk = (layer.k1 * layer.k2) as i64;
        Ok(LtuConfig {
            outer: (layer.o1 * layer.o2) as i64,
            step_b: s,
            step_d: kk,
            mid: layer.k2 as i64,
            inc_b2: 1,
            inc_d2: 1,
            inner: layer.k1 as i64,
            inc_b3: wp,
            inc_d3: layer.k2 as i64,
            wrap_every: o2,
            wrap_b: s * wp - (o2 - 1) * s,
            wrap_d: kk,
        })
    }

    /// 3D tensor to Winograd transform-space order: element `(xi, nu)` of
    /// tile `t` goes to `(xi * n + nu) * T + t`.
    pub fn winograd_scatter(layer: &LayerMeta, m: usize, r: usize) -> Result<Self> {
        let (t1, t2) = winograd_tiles(layer, m, r)?;
        let n = (m + r - 1) as i64;
        let t = (t1 * t2) as i64;
        let wp = (layer.h2 + 2 * layer.pad2) as i64;
        let m = m as i64;
        Ok(LtuConfig {
            outer: t,
            step_b: m,
            step_d: 1,
            mid: n,
            inc_b2: 1,
            inc_d2: t,
            inner: n,
            inc_b3: wp,
            inc_d3: n * t,
            wrap_every: t2 as i64,
            wrap_b: m * wp - (t2 as i64 - 1) * m,
            wrap_d: 1,
        })
    }

    /// Winograd output order back to a 3D tensor: output `(i, j)` of tile
    /// `t` sits at `(i * m + j) * T + t` and lands at row `ty * m + i`,
    /// column `tx * m + j`.
    pub fn winograd_gather(layer: &LayerMeta, m: usize, r: usize) -> Result<Self> {
        let (t1, t2) = winograd_tiles(layer, m, r)?;
        let t = (t1 * t2) as i64;
        let o2 = layer.o2 as i64;
        let mi = m as i64;
        Ok(LtuConfig {
            outer: t,
            step_b: 1,
            step_d: mi,
            mid: mi,
            inc_b2: t,
            inc_d2: 1,
            inner: mi,
            inc_b3: mi * t,
            inc_d3: o2,
            wrap_every: t2 as i64,
            wrap_b: 1,
            wrap_d: mi * o2 - (t2 as i64 - 1) * mi,
        })
    }

    pub fn len(&self) -> usize {
        (self.outer.max(0) * self.mid.max(0) * self.inner.max(0)) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_layer(layer: &LayerMeta) -> Result<()> {
    let v = layer.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Shape(v.join("; ")))
    }
}

fn winograd_tiles(layer: &LayerMeta, m: usize, r: usize) -> Result<(usize, usize)> {
    check_layer(layer)?;
    if m == 0 || r < 2 {
        return Err(Error::Shape(format!("invalid Winograd parameters F({m}, {r})")));
    }
    if layer.stride != 1 || layer.k1 != r || layer.k2 != r {
        return Err(Error::Shape(format!(
            "Winograd layout needs a stride-1 {r}x{r} layer, got {}x{} stride {}",
            layer.k1, layer.k2, layer.stride
        )));
    }
    if !layer.o1.is_multiple_of(m) || !layer.o2.is_multiple_of(m) {
        return Err(Error::Shape(format!(
            "output {}x{} is not a multiple of m={m}; pad the map first",
            layer.o1, layer.o2
        )));
    }
    Ok((layer.o1 / m, layer.o2 / m))
}

/// Iterator over the tuples of an [`LtuConfig`].
#[derive(Debug, Clone)]
pub struct LtuStream {
    cfg: LtuConfig,
    it: i64,
    i3: i64,
    i2: i64,
    base_b: i64,
    base_d: i64,
}

impl Iterator for LtuStream {
    type Item = AddressTuple;

    fn next(&mut self) -> Option<AddressTuple> {
        let c = &self.cfg;
        if self.it >= c.outer || c.mid <= 0 || c.inner <= 0 {
            return None;
        }
        let out = AddressTuple {
            b: self.base_b + self.i3 * c.inc_b3 + self.i2 * c.inc_b2,
            d: self.base_d + self.i3 * c.inc_d3 + self.i2 * c.inc_d2,
        };
        self.i2 += 1;
        if self.i2 == c.mid {
            self.i2 = 0;
            self.i3 += 1;
            if self.i3 == c.inner {
                self.i3 = 0;
                self.it += 1;
                if c.wrap_every > 0 && self.it % c.wrap_every == 0 {
                    self.base_b += c.wrap_b;
                    self.base_d += c.wrap_d;
                } else {
                    self.base_b += c.step_b;
                    self.base_d += c.step_d;
                }
            }
        }
        Some(out)
    }
}

/// Lazily generated address stream.
pub fn ltu_stream(cfg: LtuConfig) -> LtuStream {
    LtuStream {
        cfg,
        it: 0,
        i3: 0,
        i2: 0,
        base_b: 0,
        base_d: 0,
    }
}

/// Ground truth for the Toeplitz stream, by direct window enumeration.
pub fn toeplitz_addr_map(layer: &LayerMeta) -> Vec<AddressTuple> {
    let wp = layer.h2 + 2 * layer.pad2;
    let mut out = Vec::with_capacity(layer.o1 * layer.o2 * layer.k1 * layer.k2);
    for y in 0..layer.o1 {
        for x in 0..layer.o2 {
            let window = y * layer.o2 + x;
            for ky in 0..layer.k1 {
                for kx in 0..layer.k2 {
                    let row = y * layer.stride + ky;
                    let col = x * layer.stride + kx;
                    out.push(AddressTuple {
                        b: (row * wp + col) as i64,
                        d: (window * layer.k1 * layer.k2 + ky * layer.k2 + kx) as i64,
                    });
                }
            }
        }
    }
    out
}

/// Ground truth for the Winograd scatter stream.
pub fn winograd_scatter_map(layer: &LayerMeta, m: usize, r: usize) -> Result<Vec<AddressTuple>> {
    let (t1, t2) = winograd_tiles(layer, m, r)?;
    let n = m + r - 1;
    let t_count = t1 * t2;
    let wp = layer.h2 + 2 * layer.pad2;
    let mut out = Vec::with_capacity(t_count * n * n);
    for ty in 0..t1 {
        for tx in 0..t2 {
            let t = ty * t2 + tx;
            for xi in 0..n {
                for nu in 0..n {
                    out.push(AddressTuple {
                        b: ((ty * m + xi) * wp + tx * m + nu) as i64,
                        d: ((xi * n + nu) * t_count + t) as i64,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Ground truth for the Winograd gather stream.
pub fn winograd_gather_map(layer: &LayerMeta, m: usize, r: usize) -> Result<Vec<AddressTuple>> {
    let (t1, t2) = winograd_tiles(layer, m, r)?;
    let t_count = t1 * t2;
    let mut out = Vec::with_capacity(t_count * m * m);
    for ty in 0..t1 {
        for tx in 0..t2 {
            let t = ty * t2 + tx;
            for i in 0..m {
                for j in 0..m {
                    out.push(AddressTuple {
                        b: ((i * m + j) * t_count + t) as i64,
                        d: ((ty * m + i) * layer.o2 + tx * m + j) as i64,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Bank and slot of block `(i, j)` in a `p1 x p2` block grid, stored with a
/// circular shift so that a full row or a full column of blocks can be read
/// in one cycle.
pub fn bank_of_block(i: usize, j: usize, p1: usize, p2: usize) -> Result<BankSlot> {
    if p2 == 0 || p1 < p2 {
        return Err(Error::Domain(format!(
            "bank mapping needs p1 >= p2 >= 1, got p1={p1}, p2={p2}"
        )));
    }
    if i >= p1 || j >= p2 {
        return Err(Error::Domain(format!("block ({i}, {j}) outside the {p1}x{p2} grid")));
    }
    let bank = (i + j) % p1;
    let slot = if i + j < p1 { i % p2 } else { i - (p1 - p2) };
    Ok(BankSlot { bank, slot })
}

//! Reference convolution kernels: direct, im2col, kn2row and Winograd.
//!
//! These are oracles, not fast paths. All arithmetic is `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::AlgoChoice;
use crate::error::{Error, Result};
use crate::model::{available_algorithms, LayerMeta};

/// Dense feature map, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::Shape(format!(
                "tensor {c}x{h}x{w} needs {} values, got {}",
                c * h * w,
                data.len()
            )));
        }
        Ok(Tensor3 { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor3 {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.h + y) * self.w + x]
    }

    /// Value at a signed coordinate, zero outside the map.
    #[inline]
    fn padded(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            0.0
        } else {
            self.get(c, y as usize, x as usize)
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *t.at_mut(c, r) = self.get(r, c);
            }
        }
        t
    }
}

/// Kernel bank `[c_out][c_in][k1][k2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub c_out: usize,
    pub c_in: usize,
    pub k1: usize,
    pub k2: usize,
    pub data: Vec<f64>,
}

impl KernelBank {
    pub fn new(c_out: usize, c_in: usize, k1: usize, k2: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c_out * c_in * k1 * k2 {
            return Err(Error::Shape(format!(
                "kernel bank {c_out}x{c_in}x{k1}x{k2} needs {} values, got {}",
                c_out * c_in * k1 * k2,
                data.len()
            )));
        }
        Ok(KernelBank {
            c_out,
            c_in,
            k1,
            k2,
            data,
        })
    }

    /// The per-channel averaging bank an average pool is rewritten into.
    pub fn averaging(c: usize, k1: usize, k2: usize) -> Self {
        let mut data = vec![0.0; c * c * k1 * k2];
        let v = 1.0 / (k1 * k2) as f64;
        for o in 0..c {
            let base = (o * c + o) * k1 * k2;
            data[base..base + k1 * k2].fill(v);
        }
        KernelBank {
            c_out: c,
            c_in: c,
            k1,
            k2,
            data,
        }
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((o * self.c_in + c) * self.k1 + y) * self.k2 + x]
    }
}

fn out_dim(h: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Shape("stride must be >= 1".into()));
    }
    if h + 2 * pad < k {
        return Err(Error::Shape(format!("kernel {k} exceeds padded input {}", h + 2 * pad)));
    }
    Ok((h + 2 * pad - k) / stride + 1)
}

fn check_channels(input: &Tensor3, w: &KernelBank) -> Result<()> {
    if input.c != w.c_in {
        return Err(Error::Shape(format!(
            "input has {} channels, kernel bank expects {}",
            input.c, w.c_in
        )));
    }
    Ok(())
}

/// Sliding-window convolution (cross-correlation), zero padding.
pub fn direct_conv(input: &Tensor3, w: &KernelBank, stride: usize, pad: (usize, usize)) -> Result<Tensor3> {
    check_channels(input, w)?;
    let o1 = out_dim(input.h, w.k1, stride, pad.0)?;
    let o2 = out_dim(input.w, w.k2, stride, pad.1)?;
    let mut out = Tensor3::zeros(w.c_out, o1, o2);
    for o in 0..w.c_out {
        for y in 0..o1 {
            for x in 0..o2 {
                let mut acc = 0.0;
                for c in 0..w.c_in {
                    for ky in 0..w.k1 {
                        for kx in 0..w.k2 {
                            let iy = (y * stride + ky) as isize - pad.0 as isize;
                            let ix = (x * stride + kx) as isize - pad.1 as isize;
                            acc += w.get(o, c, ky, kx) * input.padded(c, iy, ix);
                        }
                    }
                }
                *out.at_mut(o, y, x) = acc;
            }
        }
    }
    Ok(out)
}

/// Toeplitz lowering: `K1*K2*C_in` rows by `O1*O2` columns. Row index is
/// `(c * K1 + ky) * K2 + kx`, column index is the window `y * O2 + x`.
pub fn im2col_lower(input: &Tensor3, k1: usize, k2: usize, stride: usize, pad: (usize, usize)) -> Result<Matrix> {
    let o1 = out_dim(input.h, k1, stride, pad.0)?;
    let o2 = out_dim(input.w, k2, stride, pad.1)?;
    let mut m = Matrix::zeros(k1 * k2 * input.c, o1 * o2);
    for c in 0..input.c {
        for ky in 0..k1 {
            for kx in 0..k2 {
                let row = (c * k1 + ky) * k2 + kx;
                for y in 0..o1 {
                    for x in 0..o2 {
                        let iy = (y * stride + ky) as isize - pad.0 as isize;
                        let ix = (x * stride + kx) as isize - pad.1 as isize;
                        *m.at_mut(row, y * o2 + x) = input.padded(c, iy, ix);
                    }
                }
            }
        }
    }
    Ok(m)
}

pub fn gemm(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "gemm: ({}x{}) * ({}x{})",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let av = a.get(i, k);
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Flattens a kernel bank into the `C_out x K1*K2*C_in` weight matrix.
fn weight_matrix(w: &KernelBank) -> Matrix {
    Matrix {
        rows: w.c_out,
        cols: w.c_in * w.k1 * w.k2,
        data: w.data.clone(),
    }
}

pub fn im2col_conv(input: &Tensor3, w: &KernelBank, stride: usize, pad: (usize, usize)) -> Result<Tensor3> {
    check_channels(input, w)?;
    let x = im2col_lower(input, w.k1, w.k2, stride, pad)?;
    let z = gemm(&weight_matrix(w), &x)?;
    let o1 = out_dim(input.h, w.k1, stride, pad.0)?;
    let o2 = out_dim(input.w, w.k2, stride, pad.1)?;
    Tensor3::new(w.c_out, o1, o2, z.data)
}

/// `K1*K2` unit GEMMs followed by shifted pad-and-accumulate. Strided layers
/// are evaluated on the stride-1 grid and subsampled while accumulating.
pub fn kn2row_conv(input: &Tensor3, w: &KernelBank, stride: usize, pad: (usize, usize)) -> Result<Tensor3> {
    check_channels(input, w)?;
    let o1 = out_dim(input.h, w.k1, stride, pad.0)?;
    let o2 = out_dim(input.w, w.k2, stride, pad.1)?;
    let hw = input.h * input.w;
    let x = Matrix {
        rows: input.c,
        cols: hw,
        data: input.data.clone(),
    };
    let (cy, cx) = ((w.k1 / 2) as isize, (w.k2 / 2) as isize);
    let mut out = Tensor3::zeros(w.c_out, o1, o2);
    for ky in 0..w.k1 {
        for kx in 0..w.k2 {
            let mut unit = Matrix::zeros(w.c_out, w.c_in);
            for o in 0..w.c_out {
                for c in 0..w.c_in {
                    *unit.at_mut(o, c) = w.get(o, c, ky, kx);
                }
            }
            let patch = gemm(&unit, &x)?;
            // offset of this tap relative to the kernel center
            let (sy, sx) = (ky as isize - cy, kx as isize - cx);
            for o in 0..w.c_out {
                let prow = &patch.data[o * hw..(o + 1) * hw];
                for y in 0..o1 {
                    // center of output window y, in input coordinates
                    let iy = (y * stride) as isize - pad.0 as isize + cy + sy;
                    if iy < 0 || iy as usize >= input.h {
                        continue;
                    }
                    for xo in 0..o2 {
                        let ix = (xo * stride) as isize - pad.1 as isize + cx + sx;
                        if ix < 0 || ix as usize >= input.w {
                            continue;
                        }
                        *out.at_mut(o, y, xo) += prow[iy as usize * input.w + ix as usize];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Transform matrices of a Winograd minimal filtering algorithm `F(m, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WinogradParams {
    pub m: usize,
    pub r: usize,
    pub bt: Matrix,
    pub g: Matrix,
    pub at: Matrix,
}

impl WinogradParams {
    pub fn f23() -> Self {
        WinogradParams {
            m: 2,
            r: 3,
            bt: Matrix::from_rows(&[
                &[1.0, 0.0, -1.0, 0.0],
                &[0.0, 1.0, 1.0, 0.0],
                &[0.0, -1.0, 1.0, 0.0],
                &[0.0, 1.0, 0.0, -1.0],
            ]),
            g: Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.5, 0.5, 0.5], &[0.5, -0.5, 0.5], &[0.0, 0.0, 1.0]]),
            at: Matrix::from_rows(&[&[1.0, 1.0, 1.0, 0.0], &[0.0, 1.0, -1.0, -1.0]]),
        }
    }

    /// Input tile edge `m + r - 1`.
    pub fn tile(&self) -> usize {
        self.m + self.r - 1
    }

    pub fn check(&self) -> Result<()> {
        let n = self.tile();
        let ok = (self.bt.rows, self.bt.cols) == (n, n)
            && (self.g.rows, self.g.cols) == (n, self.r)
            && (self.at.rows, self.at.cols) == (self.m, n);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "transform matrices do not match F({}, {})",
                self.m, self.r
            )))
        }
    }
}

/// 1-D `F(m, r)`: valid correlation of `d` (length `m + r - 1`) with `g`.
pub fn winograd_1d(d: &[f64], g: &[f64], p: &WinogradParams) -> Result<Vec<f64>> {
    p.check()?;
    if d.len() != p.tile() || g.len() != p.r {
        return Err(Error::Shape("1-D Winograd operand lengths".into()));
    }
    let dm = Matrix::new(d.len(), 1, d.to_vec())?;
    let gm = Matrix::new(g.len(), 1, g.to_vec())?;
    let u = gemm(&p.g, &gm)?;
    let v = gemm(&p.bt, &dm)?;
    let had = Matrix {
        rows: u.rows,
        cols: 1,
        data: u.data.iter().zip(&v.data).map(|(a, b)| a * b).collect(),
    };
    Ok(gemm(&p.at, &had)?.data)
}

/// Output of [`winograd_conv`] with its instrumented multiplication count.
#[derive(Debug, Clone, PartialEq)]
pub struct WinogradRun {
    pub output: Tensor3,
    /// Element-wise products performed in transform space.
    pub hadamard_mults: u64,
    pub tiles: usize,
    pub rounds: usize,
}

/// Stride-1 Winograd convolution of a square kernel.
///
/// The output grid is zero-extended to a multiple of `m` and cropped
/// afterwards. Kernels larger than `r` are split into `ceil(K / r)^2`
/// zero-padded `r x r` sub-kernels, each run as its own round on a shifted
/// input window. Every round computes `(m + r - 1)^2` independent GEMMs of
/// shape `(C_out x C_in) * (C_in x tiles)`.
#[allow(clippy::needless_range_loop)]
pub fn winograd_conv(input: &Tensor3, w: &KernelBank, pad: (usize, usize), p: &WinogradParams) -> Result<WinogradRun> {
    p.check()?;
    check_channels(input, w)?;
    if w.k1 != w.k2 {
        return Err(Error::Shape(format!(
            "Winograd needs a square kernel, got {}x{}",
            w.k1, w.k2
        )));
    }
    if w.k1 < p.r {
        return Err(Error::Shape(format!(
            "kernel {} is smaller than the tile size r={}",
            w.k1, p.r
        )));
    }
    let (m, r, n) = (p.m, p.r, p.tile());
    let o1 = out_dim(input.h, w.k1, 1, pad.0)?;
    let o2 = out_dim(input.w, w.k2, 1, pad.1)?;
    let (t1, t2) = (o1.div_ceil(m), o2.div_ceil(m));
    let tiles = t1 * t2;
    let splits = w.k1.div_ceil(r);
    let gt = p.g.transpose();
    let b = p.bt.transpose();
    let a = p.at.transpose();

    let mut acc = vec![0.0; w.c_out * t1 * m * t2 * m];
    let ext_w = t2 * m;
    let mut mults = 0u64;

    for ry in 0..splits {
        for rx in 0..splits {
            let (oy, ox) = (ry * r, rx * r);
            // U[xi][nu] is C_out x C_in
            let mut u = vec![Matrix::zeros(w.c_out, w.c_in); n * n];
            for o in 0..w.c_out {
                for c in 0..w.c_in {
                    let mut gk = Matrix::zeros(r, r);
                    for y in 0..r {
                        for x in 0..r {
                            if oy + y < w.k1 && ox + x < w.k2 {
                                *gk.at_mut(y, x) = w.get(o, c, oy + y, ox + x);
                            }
                        }
                    }
                    let t = gemm(&gemm(&p.g, &gk)?, &gt)?;
                    for e in 0..n * n {
                        *u[e].at_mut(o, c) = t.data[e];
                    }
                }
            }
            // V[xi][nu] is C_in x tiles
            let mut v = vec![Matrix::zeros(w.c_in, tiles); n * n];
            for c in 0..w.c_in {
                for ty in 0..t1 {
                    for tx in 0..t2 {
                        let mut d = Matrix::zeros(n, n);
                        for y in 0..n {
                            for x in 0..n {
                                let iy = (ty * m + y + oy) as isize - pad.0 as isize;
                                let ix = (tx * m + x + ox) as isize - pad.1 as isize;
                                *d.at_mut(y, x) = input.padded(c, iy, ix);
                            }
                        }
                        let t = gemm(&gemm(&p.bt, &d)?, &b)?;
                        for e in 0..n * n {
                            *v[e].at_mut(c, ty * t2 + tx) = t.data[e];
                        }
                    }
                }
            }
            let mprod: Vec<Matrix> = (0..n * n).map(|e| gemm(&u[e], &v[e])).collect::<Result<_>>()?;
            mults += (n * n * w.c_out * w.c_in * tiles) as u64;
            for o in 0..w.c_out {
                for ty in 0..t1 {
                    for tx in 0..t2 {
                        let mut mt = Matrix::zeros(n, n);
                        for e in 0..n * n {
                            mt.data[e] = mprod[e].get(o, ty * t2 + tx);
                        }
                        let y = gemm(&gemm(&p.at, &mt)?, &a)?;
                        for i in 0..m {
                            for j in 0..m {
                                acc[(o * t1 * m + ty * m + i) * ext_w + tx * m + j] += y.get(i, j);
                            }
                        }
                    }
                }
            }
        }
    }

    let mut out = Tensor3::zeros(w.c_out, o1, o2);
    for o in 0..w.c_out {
        for y in 0..o1 {
            for x in 0..o2 {
                *out.at_mut(o, y, x) = acc[(o * t1 * m + y) * ext_w + x];
            }
        }
    }
    Ok(WinogradRun {
        output: out,
        hadamard_mults: mults,
        tiles,
        rounds: splits * splits,
    })
}

/// Analytic multiplication count of running `layer` with `algo`.
pub fn count_mults(layer: &LayerMeta, algo: AlgoChoice) -> Result<u64> {
    let base = layer.c_in as u64 * layer.c_out as u64;
    match algo {
        AlgoChoice::Im2col | AlgoChoice::Kn2row => Ok(layer.output_elems() * layer.kernel_elems() * base),
        AlgoChoice::Winograd { m, r } => {
            if !available_algorithms(layer, (m, r)).contains(&algo) {
                return Err(Error::UnavailableAlgo {
                    layer: format!("{layer:?}"),
                    algo: algo.to_string(),
                });
            }
            let n = (m + r - 1) as u64;
            let tiles = (layer.o1.div_ceil(m) * layer.o2.div_ceil(m)) as u64;
            let rounds = layer.kernel_elems().div_ceil((r * r) as u64);
            Ok(n * n * tiles * base * rounds)
        }
    }
}

/// Outcome of a randomized equivalence run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub trials: usize,
    pub winograd_trials: usize,
    pub max_abs_im2col: f64,
    pub max_abs_kn2row: f64,
    pub max_rel_winograd: f64,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A random layer drawn from the verification distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomCase {
    pub input: Tensor3,
    pub weights: KernelBank,
    pub stride: usize,
    pub pad: (usize, usize),
}

const KERNEL_SHAPES: [(usize, usize); 5] = [(1, 1), (3, 3), (5, 5), (1, 7), (7, 1)];

/// Small-integer layer with `H <= 16`, `C <= 8`, stride 1 or 2, pad 0 or 1.
pub fn random_case(rng: &mut impl Rng) -> RandomCase {
    let (k1, k2) = KERNEL_SHAPES[rng.gen_range(0..KERNEL_SHAPES.len())];
    let stride = rng.gen_range(1..=2);
    let p = rng.gen_range(0..=1);
    let pad = (p, p);
    let h = rng.gen_range((k1.saturating_sub(2 * pad.0)).max(1)..=16);
    let w = rng.gen_range((k2.saturating_sub(2 * pad.1)).max(1)..=16);
    let c_in = rng.gen_range(1..=8);
    let c_out = rng.gen_range(1..=8);
    let mut int = |n: usize| (0..n).map(|_| rng.gen_range(-4i32..=4) as f64).collect::<Vec<_>>();
    RandomCase {
        input: Tensor3 {
            c: c_in,
            h,
            w,
            data: int(c_in * h * w),
        },
        weights: KernelBank {
            c_out,
            c_in,
            k1,
            k2,
            data: int(c_out * c_in * k1 * k2),
        },
        stride,
        pad,
    }
}

fn max_abs_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_rel_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Checks im2col and kn2row for exact agreement with the direct oracle and
/// Winograd `F(2, 3)` within `1e-6` relative error on `trials` random layers.
/// `inject_fault` corrupts one kn2row output element so callers can confirm
/// the harness detects breaches.
pub fn verify_kernels(seed: u64, trials: usize, inject_fault: bool) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wp = WinogradParams::f23();
    let mut rep = VerifyReport {
        trials,
        ..Default::default()
    };
    for t in 0..trials {
        let case = random_case(&mut rng);
        let tag = format!(
            "trial {t}: {}x{}x{} k={}x{} s={} p={:?} c_out={}",
            case.input.c,
            case.input.h,
            case.input.w,
            case.weights.k1,
            case.weights.k2,
            case.stride,
            case.pad,
            case.weights.c_out
        );
        let run = |rep: &mut VerifyReport| -> Result<()> {
            let want = direct_conv(&case.input, &case.weights, case.stride, case.pad)?;
            let got = im2col_conv(&case.input, &case.weights, case.stride, case.pad)?;
            let d = max_abs_diff(&got, &want);
            rep.max_abs_im2col = rep.max_abs_im2col.max(d);
            if got.data.len() != want.data.len() || d != 0.0 {
                rep.failures.push(format!("{tag}: im2col deviates by {d}"));
            }
            let mut got = kn2row_conv(&case.input, &case.weights, case.stride, case.pad)?;
            if inject_fault && t == 0 {
                got.data[0] += 1.0;
            }
            let d = max_abs_diff(&got, &want);
            rep.max_abs_kn2row = rep.max_abs_kn2row.max(d);
            if got.data.len() != want.data.len() || d != 0.0 {
                rep.failures.push(format!("{tag}: kn2row deviates by {d}"));
            }
            let k = case.weights.k1;
            if case.stride == 1 && k == case.weights.k2 && k >= wp.r {
                rep.winograd_trials += 1;
                let got = winograd_conv(&case.input, &case.weights, case.pad, &wp)?.output;
                let d = max_rel_diff(&got, &want);
                rep.max_rel_winograd = rep.max_rel_winograd.max(d);
                if got.data.len() != want.data.len() || d > 1e-6 {
                    rep.failures
                        .push(format!("{tag}: winograd deviates by {d:e} (relative)"));
                }
            }
            Ok(())
        };
        if let Err(e) = run(&mut rep) {
            rep.failures.push(format!("{tag}: {e}"));
        }
    }
    rep
}

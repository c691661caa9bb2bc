//! Echo state network: a frozen random recurrent encoder.
//!
//! The state update is the leaky-integrator recurrence
//!
//! ```text
//! h_t = (1 - l) h_{t-1} + l * tanh(W_x x_t + W_h h_{t-1} + b)
//! ```
//!
//! `W_h` is sparse (Bernoulli mask with probability `connectivity`) and is
//! rescaled after drawing so that its spectral radius equals the configured
//! target. Nothing here is ever trained.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

const MAX_DRAW_ATTEMPTS: u32 = 8;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;
const POWER_BLOCK: usize = 4;
const POWER_SEED: u64 = 0x005e_ed0f_5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    /// State dimension.
    pub size: usize,
    pub spectral_radius: f64,
    pub leak_rate: f64,
    /// Multiplier on the entries of the input matrix.
    pub input_scaling: f64,
    /// Fraction of nonzero recurrent connections.
    pub connectivity: f64,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            size: 512,
            spectral_radius: 0.9,
            leak_rate: 1.0,
            input_scaling: 1.0,
            connectivity: 0.2,
            seed: 0,
            activation: Activation::Tanh,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("reservoir size must be at least 1".into()));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return Err(Error::Config(format!(
                "spectral radius must be positive, got {}",
                self.spectral_radius
            )));
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return Err(Error::Config(format!(
                "leak rate must lie in (0, 1], got {}",
                self.leak_rate
            )));
        }
        if !(self.input_scaling > 0.0 && self.input_scaling.is_finite()) {
            return Err(Error::Config(format!(
                "input scaling must be positive, got {}",
                self.input_scaling
            )));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(Error::Config(format!(
                "connectivity must lie in (0, 1], got {}",
                self.connectivity
            )));
        }
        Ok(())
    }
}

/// Square matrix in compressed sparse row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from dense rows, keeping only nonzero entries.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "square matrix row",
                    expected: dim,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteInput { index: j });
                }
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dim]; self.dim];
        for (i, row) in out.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.col_idx[k]] = self.values[k];
            }
        }
        out
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Spectral radius by block power iteration.
///
/// A block of up to four orthonormal vectors is multiplied by `m` and
/// re-orthonormalized each step; the largest eigenvalue modulus of the
/// projected (Rayleigh-Ritz) matrix is the estimate. The block handles a
/// dominant complex-conjugate pair, which single-vector power iteration
/// cannot. Stops when the relative change drops below 1e-10 or after
/// 10,000 iterations. The zero matrix gives 0.
pub fn estimate_spectral_radius(m: &SparseMatrix) -> f64 {
    let n = m.dim();
    if n == 0 || m.nnz() == 0 {
        return 0.0;
    }
    let p = POWER_BLOCK.min(n);
    let mut rng = rng::seeded(POWER_SEED, stream::POWER_ITERATION);
    let start: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut basis = orthonormalize(start);
    let mut prev = f64::NAN;
    let mut image: Vec<Vec<f64>> = Vec::new();

    for _ in 0..POWER_MAX_ITERS {
        if basis.is_empty() {
            return 0.0;
        }
        image.resize_with(basis.len(), Vec::new);
        for (q, y) in basis.iter().zip(image.iter_mut()) {
            y.resize(n, 0.0);
            m.mul_vec_into(q, y);
        }
        let k = basis.len();
        let projected = DMatrix::from_fn(k, k, |i, j| dot(&basis[i], &image[j]));
        let rho = projected
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        if (rho - prev).abs() <= POWER_TOL * rho.max(prev) {
            return rho;
        }
        prev = rho;
        basis = orthonormalize(std::mem::take(&mut image));
    }
    prev
}

/// Modified Gram-Schmidt; columns that collapse numerically are dropped.
fn orthonormalize(mut vecs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let scale = vecs.iter().map(|v| norm(v)).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vecs.len());
    for mut v in vecs.drain(..) {
        for q in &out {
            let c = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let nv = norm(&v);
        if nv > 1e-12 * scale {
            v.iter_mut().for_each(|a| *a /= nv);
            out.push(v);
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight independent accumulators let the compiler vectorize the loop.
    let mut acc = [0.0_f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (ra, rb) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().sum::<f64>() + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// An immutable echo state network.
#[derive(Debug, Clone)]
pub struct Reservoir {
    /// Row-major `size x input_dim`.
    w_in: Vec<f64>,
    w_rec: SparseMatrix,
    bias: Vec<f64>,
    config: ReservoirConfig,
    input_dim: usize,
}

pub fn build_reservoir(config: &ReservoirConfig, input_dim: usize) -> Result<Reservoir> {
    config.validate()?;
    if input_dim == 0 {
        return Err(Error::Config("input dimension must be at least 1".into()));
    }
    let size = config.size;

    let mut rng_in = rng::seeded(config.seed, stream::INPUT_WEIGHTS);
    let w_in = (0..size * input_dim)
        .map(|_| rng_in.random_range(-1.0..=1.0) * config.input_scaling)
        .collect();
    let mut rng_b = rng::seeded(config.seed, stream::BIAS);
    let bias = (0..size).map(|_| rng_b.random_range(-0.1..=0.1)).collect();

    for attempt in 0..MAX_DRAW_ATTEMPTS {
        let mut w_rec = draw_recurrent(config, attempt);
        let rho = estimate_spectral_radius(&w_rec);
        if rho > 0.0 && rho.is_finite() {
            w_rec.scale(config.spectral_radius / rho);
            return Ok(Reservoir {
                w_in,
                w_rec,
                bias,
                config: config.clone(),
                input_dim,
            });
        }
        log::debug!("recurrent draw {attempt} has zero spectral radius; redrawing");
    }
    Err(Error::DegenerateRecurrentMatrix {
        attempts: MAX_DRAW_ATTEMPTS,
    })
}

fn draw_recurrent(config: &ReservoirConfig, attempt: u32) -> SparseMatrix {
    let n = config.size;
    let mut rng = rng::seeded(config.seed, stream::RECURRENT + u64::from(attempt));
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for _ in 0..n {
        for j in 0..n {
            if rng.random_bool(config.connectivity) {
                let v: f64 = rng.random_range(-1.0..=1.0);
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
        }
        row_ptr.push(values.len());
    }
    SparseMatrix {
        dim: n,
        row_ptr,
        col_idx,
        values,
    }
}

impl Reservoir {
    /// Assembles a reservoir from explicit weights. Leak rate may be anywhere
    /// in `[0, 1]` here; `l = 0` freezes the state.
    pub fn from_parts(
        w_in: Vec<Vec<f64>>,
        w_rec: Vec<Vec<f64>>,
        bias: Vec<f64>,
        config: ReservoirConfig,
    ) -> Result<Self> {
        let size = w_rec.len();
        if bias.len() != size {
            return Err(Error::DimensionMismatch {
                context: "bias",
                expected: size,
                actual: bias.len(),
            });
        }
        if w_in.len() != size {
            return Err(Error::DimensionMismatch {
                context: "input matrix rows",
                expected: size,
                actual: w_in.len(),
            });
        }
        let input_dim = w_in.first().map_or(0, Vec::len);
        if input_dim == 0 || w_in.iter().any(|r| r.len() != input_dim) {
            return Err(Error::Config("input matrix rows must share a positive length".into()));
        }
        if !(0.0..=1.0).contains(&config.leak_rate) {
            return Err(Error::Config(format!(
                "leak rate must lie in [0, 1], got {}",
                config.leak_rate
            )));
        }
        let w_rec = SparseMatrix::from_dense(&w_rec)?;
        Ok(Self {
            w_in: w_in.into_iter().flatten().collect(),
            w_rec,
            bias,
            config: ReservoirConfig { size, ..config },
            input_dim,
        })
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.config
    }

    pub fn recurrent(&self) -> &SparseMatrix {
        &self.w_rec
    }

    pub fn input_weights(&self) -> Vec<Vec<f64>> {
        self.w_in.chunks(self.input_dim).map(<[f64]>::to_vec).collect()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// One step of the recurrence, writing the new state into `next`.
    fn step(&self, x: &[f64], prev: &[f64], next: &mut [f64]) {
        let l = self.config.leak_rate;
        self.w_rec.mul_vec_into(prev, next);
        for (i, pre) in next.iter_mut().enumerate() {
            let row = &self.w_in[i * self.input_dim..(i + 1) * self.input_dim];
            let drive: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            let act = self.config.activation.apply(*pre + drive + self.bias[i]);
            *pre = if l == 1.0 { act } else { (1.0 - l) * prev[i] + l * act };
        }
    }
}

/// States `h_1..h_T`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    data: Vec<f64>,
    dim: usize,
    /// Time index of the first state in the source series.
    pub start_index: usize,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// State for absolute series time `t`, if it was encoded.
    pub fn at_time(&self, t: usize) -> Option<&[f64]> {
        t.checked_sub(self.start_index)
            .filter(|&i| i < self.len())
            .map(|i| self.get(i))
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.len().checked_sub(1).map(|i| self.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Runs the recurrence over `inputs` starting from `h0`.
pub fn encode(reservoir: &Reservoir, inputs: &[Vec<f64>], h0: &[f64]) -> Result<StateTrajectory> {
    encode_from(reservoir, inputs, h0, 0)
}

/// Like [`encode`], tagging the trajectory with the series time of `inputs[0]`.
pub fn encode_from(
    reservoir: &Reservoir,
    inputs: &[Vec<f64>],
    h0: &[f64],
    start_index: usize,
) -> Result<StateTrajectory> {
    let dim = reservoir.size();
    if h0.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: dim,
            actual: h0.len(),
        });
    }
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != reservoir.input_dim {
            return Err(Error::DimensionMismatch {
                context: "reservoir input",
                expected: reservoir.input_dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index: t });
        }
    }
    let mut data = vec![0.0; inputs.len() * dim];
    let mut prev = h0.to_vec();
    for (x, out) in inputs.iter().zip(data.chunks_exact_mut(dim)) {
        reservoir.step(x, &prev, out);
        prev.copy_from_slice(out);
    }
    Ok(StateTrajectory { data, dim, start_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense(rows: &[&[f64]]) -> SparseMatrix {
        SparseMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn radius_of_simple_matrices() {
        assert_relative_eq!(
            estimate_spectral_radius(&dense(&[&[1.0, 0.0], &[0.0, 1.0]])),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            estimate_spectral_radius(&dense(&[&[0.5, 0.0], &[0.0, 2.0]])),
            2.0,
            epsilon = 1e-12
        );
        assert!(estimate_spectral_radius(&dense(&[&[0.0, 1.0], &[0.0, 0.0]])) < 1e-12);
        assert_eq!(estimate_spectral_radius(&SparseMatrix::zeros(5)), 0.0);
    }

    #[test]
    fn radius_of_rotation_pair() {
        // Eigenvalues 0.9 * e^{±iθ} and 0.3: single-vector power iteration oscillates here.
        let (c, s) = (0.9 * 0.7_f64.cos(), 0.9 * 0.7_f64.sin());
        let m = dense(&[&[c, -s, 0.0], &[s, c, 0.0], &[0.0, 0.0, 0.3]]);
        assert_relative_eq!(estimate_spectral_radius(&m), 0.9, max_relative = 1e-10);
    }

    #[test]
    fn single_unit_reservoir_is_rescaled_to_target() {
        let cfg = ReservoirConfig {
            size: 1,
            connectivity: 1.0,
            spectral_radius: 0.9,
            seed: 7,
            ..Default::default()
        };
        let r = build_reservoir(&cfg, 1).unwrap();
        let w = r.recurrent().to_dense();
        assert_relative_eq!(w[0][0].abs(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let cfg = ReservoirConfig {
            size: 32,
            seed: 3,
            ..Default::default()
        };
        let a = build_reservoir(&cfg, 2).unwrap();
        let b = build_reservoir(&cfg, 2).unwrap();
        assert_eq!(a.recurrent(), b.recurrent());
        assert_eq!(a.input_weights(), b.input_weights());
        assert_eq!(a.bias(), b.bias());
        let c = build_reservoir(&ReservoirConfig { seed: 4, ..cfg }, 2).unwrap();
        assert_ne!(a.recurrent(), c.recurrent());
    }

    #[test]
    fn weight_ranges() {
        let cfg = ReservoirConfig {
            size: 64,
            input_scaling: 0.5,
            ..Default::default()
        };
        let r = build_reservoir(&cfg, 3).unwrap();
        assert!(r.input_weights().iter().flatten().all(|w| w.abs() <= 0.5));
        assert!(r.bias().iter().all(|b| b.abs() <= 0.1));
        let frac = r.recurrent().nnz() as f64 / (64.0 * 64.0);
        assert!((frac - 0.2).abs() < 0.05, "{frac}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            ReservoirConfig {
                size: 0,
                ..Default::default()
            },
            ReservoirConfig {
                leak_rate: 0.0,
                ..Default::default()
            },
            ReservoirConfig {
                leak_rate: 1.5,
                ..Default::default()
            },
            ReservoirConfig {
                connectivity: 0.0,
                ..Default::default()
            },
            ReservoirConfig {
                spectral_radius: -1.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(build_reservoir(&cfg, 1), Err(Error::Config(_))), "{cfg:?}");
        }
        assert!(build_reservoir(&ReservoirConfig::default(), 0).is_err());
    }

    #[test]
    fn zero_leak_freezes_state() {
        let cfg = ReservoirConfig {
            leak_rate: 0.0,
            ..Default::default()
        };
        let r = Reservoir::from_parts(
            vec![vec![0.3], vec![-1.0]],
            vec![vec![0.2, 0.1], vec![0.0, 0.5]],
            vec![0.05, 0.0],
            cfg,
        )
        .unwrap();
        let h0 = [0.25, -0.5];
        let traj = encode(&r, &[vec![1.0], vec![-2.0], vec![0.3]], &h0).unwrap();
        assert!(traj.iter().all(|h| h == h0));
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let r = Reservoir::from_parts(
            vec![vec![0.0]; 3],
            vec![vec![0.0; 3]; 3],
            vec![0.0; 3],
            ReservoirConfig::default(),
        )
        .unwrap();
        let traj = encode(&r, &[vec![1.0], vec![5.0]], &[0.0; 3]).unwrap();
        assert!(traj.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_step_is_tanh() {
        let r = Reservoir::from_parts(vec![vec![1.0]], vec![vec![0.0]], vec![0.0], ReservoirConfig::default()).unwrap();
        let traj = encode(&r, &[vec![0.5]], &[0.0]).unwrap();
        assert_relative_eq!(traj.get(0)[0], 0.5_f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(traj.get(0)[0], 0.46212, epsilon = 1e-5);
    }

    #[test]
    fn encode_validates_dimensions_and_finiteness() {
        let r = build_reservoir(
            &ReservoirConfig {
                size: 4,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        let err = encode(&r, &[vec![1.0]], &[0.0; 4]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                actual: 1,
                ..
            }
        ));
        let err = encode(&r, &[vec![1.0, 2.0]], &[0.0; 3]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 4,
                actual: 3,
                ..
            }
        ));
        let err = encode(&r, &[vec![1.0, 2.0], vec![f64::NAN, 0.0]], &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput { index: 1 }));
    }

    #[test]
    fn at_time_offsets() {
        let r = build_reservoir(
            &ReservoirConfig {
                size: 4,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let traj = encode_from(&r, &[vec![1.0], vec![2.0]], &[0.0; 4], 10).unwrap();
        assert!(traj.at_time(9).is_none());
        assert_eq!(traj.at_time(11).unwrap(), traj.get(1));
        assert!(traj.at_time(12).is_none());
    }
}

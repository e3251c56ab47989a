use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dual::{DualScalar, Scalar};
use crate::error::{Error, Result};
use crate::tank::DomainBounds;

/// Number of network inputs: normalized head, time and initial velocity.
pub const INPUT_WIDTH: usize = 3;

/// Fully connected tanh network with a linear scalar output.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix of
/// layer `k` in row-major `(out, in)` order followed by its bias vector. The
/// optimizer state and the model file use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    pub bounds: DomainBounds,
}

fn layer_offsets(layer_sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(layer_sizes.len());
    let mut off = 0;
    offsets.push(0);
    for w in layer_sizes.windows(2) {
        off += w[0] * w[1] + w[1];
        offsets.push(off);
    }
    offsets
}

impl MlpModel {
    /// All-zero model. Fails unless the sizes chain from 3 inputs to 1 output.
    pub fn zeros(layer_sizes: &[usize], bounds: DomainBounds) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Shape("need at least an input and an output layer".into()));
        }
        if layer_sizes[0] != INPUT_WIDTH {
            return Err(Error::Shape(format!(
                "input width must be {INPUT_WIDTH}, got {}",
                layer_sizes[0]
            )));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Shape(format!(
                "output width must be 1, got {}",
                layer_sizes.last().unwrap()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        bounds.validate()?;
        let offsets = layer_offsets(layer_sizes);
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; *offsets.last().unwrap()],
            offsets,
            bounds,
        })
    }

    /// Glorot-uniform weights, zero biases, from a seeded stream.
    pub fn init(layer_sizes: &[usize], bounds: DomainBounds, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, bounds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..model.n_layers() {
            let (fan_in, fan_out) = (model.layer_sizes[k], model.layer_sizes[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let off = model.offsets[k];
            for p in &mut model.params[off..off + fan_in * fan_out] {
                *p = rng.gen_range(-limit..=limit);
            }
        }
        Ok(model)
    }

    /// Builds a model from an existing flat parameter vector.
    pub fn from_params(layer_sizes: &[usize], bounds: DomainBounds, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, bounds)?;
        if params.len() != model.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weight layers.
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `k`'s weights in the flat vector; biases follow them.
    pub fn layer_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn weights(&self, k: usize) -> ArrayView2<'_, f64> {
        let (n_in, n_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        let off = self.offsets[k];
        ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out])
            .expect("layer shape is consistent with offsets")
    }

    pub fn biases(&self, k: usize) -> ArrayView1<'_, f64> {
        let (n_in, n_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        let off = self.offsets[k] + n_in * n_out;
        ArrayView1::from(&self.params[off..off + n_out])
    }

    /// Normalized network inputs for physical `(dh, t, v0)`.
    pub fn normalize(&self, dh: f64, t: f64, v0: f64) -> [f64; 3] {
        [
            dh / self.bounds.dh_train,
            t / self.bounds.window,
            v0 / self.bounds.v0_max,
        ]
    }

    fn eval<S: Scalar>(&self, inputs: [S; INPUT_WIDTH]) -> S {
        let mut act: Vec<S> = inputs.to_vec();
        let last = self.n_layers() - 1;
        for k in 0..=last {
            let w = self.weights(k);
            let b = self.biases(k);
            let mut next = Vec::with_capacity(w.nrows());
            for (row, &bias) in w.outer_iter().zip(b.iter()) {
                let mut acc = S::from_f64(bias);
                for (x, &wi) in act.iter().zip(row.iter()) {
                    acc = acc + x.scale(wi);
                }
                next.push(if k == last { acc } else { acc.tanh() });
            }
            act = next;
        }
        act[0]
    }

    /// Raw network output for already-normalized inputs `[h̄, t̄, v̄0]`.
    pub fn forward(&self, inputs: [f64; INPUT_WIDTH]) -> f64 {
        self.eval(inputs)
    }

    /// Raw network output and its derivative with respect to physical time,
    /// given normalized head and velocity and the time `t` in seconds.
    pub fn forward_dual(&self, dh_bar: f64, t: f64, v0_bar: f64) -> (f64, f64) {
        let inv_window = 1.0 / self.bounds.window;
        let out = self.eval([
            DualScalar::constant(dh_bar),
            DualScalar::new(t / self.bounds.window, inv_window),
            DualScalar::constant(v0_bar),
        ]);
        (out.value, out.d_dt)
    }

    /// Text model file: sizes, bounds, then one parameter per line.
    pub fn to_text(&self) -> String {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        let mut out = format!("layer_sizes: {}\n", sizes.join(","));
        let _ = writeln!(
            out,
            "bounds: {:.16e},{:.16e},{:.16e}",
            self.bounds.dh_train, self.bounds.v0_max, self.bounds.window
        );
        for p in &self.params {
            let _ = writeln!(out, "{p:.16e}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file), path)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read(text.as_bytes(), Path::new("<model>"))
    }

    /// Parses a model file; `path` only labels errors.
    pub fn read<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines();
        let mut header = |n: usize, key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| err(n, format!("missing `{key}` line")))??;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(':'))
                .map(|rest| rest.trim().to_string())
                .ok_or_else(|| err(n, format!("expected `{key}: ...`, got `{line}`")))
        };
        let sizes = header(1, "layer_sizes")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(1, format!("bad layer size: {e}")))?;
        let bounds = header(2, "bounds")?
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(2, format!("bad bound: {e}")))?;
        if bounds.len() != 3 {
            return Err(err(2, format!("expected 3 bounds, got {}", bounds.len())));
        }
        let bounds = DomainBounds {
            dh_train: bounds[0],
            v0_max: bounds[1],
            window: bounds[2],
        };
        let mut model = Self::zeros(&sizes, bounds).map_err(|e| err(1, e.to_string()))?;
        let mut count = 0;
        for (k, line) in lines.enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if count == model.params.len() {
                return Err(err(k + 3, "more parameters than layer_sizes allows".into()));
            }
            model.params[count] = trimmed
                .parse()
                .map_err(|e| err(k + 3, format!("bad parameter `{trimmed}`: {e}")))?;
            count += 1;
        }
        if count != model.params.len() {
            return Err(err(
                count + 3,
                format!("expected {} parameters, found {count}", model.params.len()),
            ));
        }
        Ok(model)
    }
}

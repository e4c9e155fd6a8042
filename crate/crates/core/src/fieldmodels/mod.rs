//! The four coordinate-network architectures and their growth operations.

mod checkpoint;
mod coordmap;
mod encoding;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CKPT_MAGIC};
pub use coordmap::{coord_key, keys_of, CoordMap};
pub use encoding::{encode_pe, PositionalEncoder};

use crate::datagen::{make_grid, GridSpec};
use crate::diffcore::{softmax_rows, Graph, NodeId, ParamId, ParamSet, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    PeRelu,
    Siren,
    Finer,
    Diner,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::PeRelu, Arch::Siren, Arch::Finer, Arch::Diner];

    pub fn name(self) -> &'static str {
        match self {
            Arch::PeRelu => "pe-relu",
            Arch::Siren => "siren",
            Arch::Finer => "finer",
            Arch::Diner => "diner",
        }
    }

    /// ω0 used by the sine layers (DINER's MLP is a SIREN).
    pub fn default_omega(self) -> f64 {
        match self {
            Arch::Finer => 5.0,
            _ => 15.0,
        }
    }

    /// Adam learning rate used when none is given. At 0.01 the sine MLP
    /// behind the DINER table stalls, so every architecture uses 0.001.
    pub fn default_lr(self) -> f64 {
        match self {
            Arch::PeRelu | Arch::Siren | Arch::Finer | Arch::Diner => 0.001,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::Config(format!("unknown model {s:?} (pe-relu|siren|finer|diner)")))
    }
}

/// Output activation layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Linear,
    Softmax,
    /// The first `linear` channels are raw outputs, the rest one softmax group.
    Mixed { linear: usize },
}

/// What kind of channels an output-head expansion adds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    Linear,
    Classes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub in_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub out_channels: usize,
    pub head: Head,
    pub pe_levels: usize,
    pub omega0: f64,
    pub latent_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults: 3 hidden layers of 256, linear head, L = 10, architecture
    /// ω0, latent dimension 1, seed 0.
    pub fn new(arch: Arch, in_dim: usize, out_channels: usize) -> Self {
        Self {
            arch,
            in_dim,
            hidden_layers: 3,
            hidden_width: 256,
            out_channels,
            head: Head::Linear,
            pe_levels: 10,
            omega0: arch.default_omega(),
            latent_dim: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_hidden(mut self, layers: usize, width: usize) -> Self {
        self.hidden_layers = layers;
        self.hidden_width = width;
        self
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.out_channels == 0 || self.in_dim == 0 {
            return Err(Error::Config(
                "in_dim, hidden_width and out_channels must be at least 1".into(),
            ));
        }
        match self.arch {
            Arch::PeRelu if self.pe_levels == 0 => {
                return Err(Error::Config("positional encoding needs at least one level".into()))
            }
            Arch::Diner if self.latent_dim == 0 => {
                return Err(Error::Config("latent_dim must be at least 1".into()))
            }
            Arch::Siren | Arch::Finer | Arch::Diner if !(self.omega0 > 0.0) => {
                return Err(Error::Config(format!("omega0 must be positive, got {}", self.omega0)))
            }
            _ => {}
        }
        if let Head::Mixed { linear } = self.head {
            if linear >= self.out_channels {
                return Err(Error::Config(format!(
                    "mixed head with {linear} linear channels needs more than {linear} outputs"
                )));
            }
        }
        Ok(())
    }

    /// Width of the first affine layer's input.
    pub fn mlp_input_width(&self) -> usize {
        match self.arch {
            Arch::PeRelu => PositionalEncoder::new(self.pe_levels, self.in_dim).out_dim(),
            Arch::Siren | Arch::Finer => self.in_dim,
            Arch::Diner => self.latent_dim,
        }
    }

    pub fn linear_channels(&self) -> Range<usize> {
        match self.head {
            Head::Linear => 0..self.out_channels,
            Head::Softmax => 0..0,
            Head::Mixed { linear } => 0..linear,
        }
    }

    pub fn class_channels(&self) -> Range<usize> {
        let lin = self.linear_channels().end;
        match self.head {
            Head::Linear => self.out_channels..self.out_channels,
            _ => lin..self.out_channels,
        }
    }
}

/// Network input after the architecture's coordinate transform.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelInput<T> {
    /// Feature rows fed straight into the first affine layer.
    Features(Tensor<T>),
    /// Hash-table rows, one per coordinate.
    Rows(Vec<usize>),
}

impl<T: Real> ModelInput<T> {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Features(t) => t.rows(),
            ModelInput::Rows(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            ModelInput::Features(t) => ModelInput::Features(t.select_rows(idx)),
            ModelInput::Rows(r) => ModelInput::Rows(idx.iter().map(|&i| r[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel<T: Real> {
    config: ModelConfig,
    params: ParamSet<T>,
    coord_map: Option<CoordMap>,
    layers: Vec<(ParamId, ParamId)>,
    table: Option<ParamId>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("init shape")
}

/// `(weight bound, bias bound)` of affine layer `i` with fan-in `n`.
fn init_bounds(cfg: &ModelConfig, i: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    let torch_default = 1.0 / n.sqrt();
    let is_output = i == cfg.hidden_layers;
    match cfg.arch {
        Arch::PeRelu if is_output => (torch_default, torch_default),
        Arch::PeRelu => ((6.0 / n).sqrt(), torch_default),
        Arch::Siren | Arch::Finer | Arch::Diner => {
            let w = if i == 0 {
                1.0 / n
            } else {
                (6.0 / n).sqrt() / cfg.omega0
            };
            let b = if cfg.arch == Arch::Finer && i == 0 {
                1.0
            } else {
                torch_default
            };
            (w, b)
        }
    }
}

/// Builds a model with freshly initialized parameters. DINER needs the grid
/// whose points become the hash-table rows.
pub fn build_model<T: Real>(config: &ModelConfig, grid: Option<&GridSpec>) -> Result<FieldModel<T>> {
    let coords = grid.map(make_grid).transpose()?;
    build_model_on(config, coords.as_ref())
}

/// [`build_model`] taking the table coordinates directly.
pub fn build_model_on<T: Real>(config: &ModelConfig, coords: Option<&Tensor<f64>>) -> Result<FieldModel<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::<T>::new();
    let mut fan_in = config.mlp_input_width();
    for i in 0..=config.hidden_layers {
        let out = if i == config.hidden_layers {
            config.out_channels
        } else {
            config.hidden_width
        };
        let (wb, bb) = init_bounds(config, i, fan_in);
        params.insert(format!("layer{i}.weight"), uniform(&mut rng, vec![out, fan_in], wb).cast())?;
        params.insert(format!("layer{i}.bias"), uniform(&mut rng, vec![out], bb).cast())?;
        fan_in = out;
    }
    let mut coord_map = None;
    if config.arch == Arch::Diner {
        let coords = coords.ok_or_else(|| {
            Error::Config("DINER needs a grid to size its hash table".into())
        })?;
        if coords.cols() != config.in_dim {
            return Err(Error::Config(format!(
                "grid has {} coordinate columns, model expects {}",
                coords.cols(),
                config.in_dim
            )));
        }
        let mut map = CoordMap::default();
        map.extend(&keys_of(coords)?)?;
        params.insert("table", uniform(&mut rng, vec![map.len(), config.latent_dim], 1.0).cast())?;
        coord_map = Some(map);
    }
    FieldModel::from_parts(config.clone(), params, coord_map)
}

impl<T: Real> FieldModel<T> {
    /// Assembles a model from stored parts, checking every shape.
    pub fn from_parts(config: ModelConfig, params: ParamSet<T>, coord_map: Option<CoordMap>) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        let mut fan_in = config.mlp_input_width();
        for i in 0..=config.hidden_layers {
            let out = if i == config.hidden_layers {
                config.out_channels
            } else {
                config.hidden_width
            };
            let lookup = |name: String| {
                params
                    .id(&name)
                    .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
            };
            let w = lookup(format!("layer{i}.weight"))?;
            let b = lookup(format!("layer{i}.bias"))?;
            if params.get(w).shape() != [out, fan_in] || params.get(b).shape() != [out] {
                return Err(Error::Config(format!(
                    "layer {i} has shapes {:?}/{:?}, expected [{out}, {fan_in}]/[{out}]",
                    params.get(w).shape(),
                    params.get(b).shape()
                )));
            }
            layers.push((w, b));
            fan_in = out;
        }
        let table = params.id("table");
        let expected_params = layers.len() * 2 + usize::from(table.is_some());
        if params.len() != expected_params {
            return Err(Error::Config("unexpected extra parameters".into()));
        }
        match (config.arch, table, &coord_map) {
            (Arch::Diner, Some(t), Some(map)) => {
                if params.get(t).shape() != [map.len(), config.latent_dim] {
                    return Err(Error::Config(format!(
                        "table shape {:?} does not match {} coordinates × latent {}",
                        params.get(t).shape(),
                        map.len(),
                        config.latent_dim
                    )));
                }
            }
            (Arch::Diner, _, _) => {
                return Err(Error::Config("DINER needs a hash table and coordinate map".into()))
            }
            (_, None, None) => {}
            _ => return Err(Error::Config("only DINER carries a hash table".into())),
        }
        Ok(Self {
            config,
            params,
            coord_map,
            layers,
            table,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn coord_map(&self) -> Option<&CoordMap> {
        self.coord_map.as_ref()
    }

    pub fn table(&self) -> Option<ParamId> {
        self.table
    }

    /// Output layer `(weight, bias)`.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.layers.last().expect("at least one layer")
    }

    pub fn out_channels(&self) -> usize {
        self.config.out_channels
    }

    pub fn cast<U: Real>(&self) -> FieldModel<U> {
        FieldModel {
            config: self.config.clone(),
            params: self.params.cast(),
            coord_map: self.coord_map.clone(),
            layers: self.layers.clone(),
            table: self.table,
        }
    }

    /// Applies the coordinate transform: positional encoding, identity, or
    /// hash-table row lookup.
    pub fn prepare(&self, coords: &Tensor<T>) -> Result<ModelInput<T>> {
        if coords.shape().len() != 2 || coords.cols() != self.config.in_dim {
            return Err(Error::dim(
                "forward",
                format!(
                    "coordinates {:?}, model expects {} columns",
                    coords.shape(),
                    self.config.in_dim
                ),
            ));
        }
        Ok(match self.config.arch {
            Arch::PeRelu => ModelInput::Features(
                PositionalEncoder::new(self.config.pe_levels, self.config.in_dim).encode(coords),
            ),
            Arch::Siren | Arch::Finer => ModelInput::Features(coords.clone()),
            Arch::Diner => ModelInput::Rows(
                self.coord_map
                    .as_ref()
                    .expect("DINER has a coordinate map")
                    .rows_for(coords)?,
            ),
        })
    }

    /// Records the network on `g` and returns the pre-head output node.
    pub fn logits(&self, g: &mut Graph<'_, T>, input: ModelInput<T>) -> Result<NodeId> {
        let mut h = match input {
            ModelInput::Features(t) => g.input(t),
            ModelInput::Rows(rows) => {
                let table = self
                    .table
                    .ok_or_else(|| Error::Contract("row input for a model without a table".into()))?;
                let tn = g.param(table);
                g.lookup(tn, rows)?
            }
        };
        let omega = T::lit(self.config.omega0);
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (wn, bn) = (g.param(w), g.param(b));
            let z = g.affine(wn, bn, h)?;
            h = if i == self.config.hidden_layers {
                z
            } else {
                match self.config.arch {
                    Arch::PeRelu => g.relu(z),
                    Arch::Siren | Arch::Diner => g.sine(z, omega),
                    Arch::Finer => g.finer(z, omega),
                }
            };
        }
        Ok(h)
    }

    /// Softmax over the class channels; linear channels pass through.
    pub fn apply_head(&self, mut logits: Tensor<T>) -> Result<Tensor<T>> {
        let classes = self.config.class_channels();
        if classes.is_empty() {
            return Ok(logits);
        }
        let probs = softmax_rows(&logits.slice_cols(classes.start, classes.end)?)?;
        let (c, w) = (logits.cols(), classes.len());
        for (r, p) in probs.data().chunks_exact(w).enumerate() {
            logits.data_mut()[r * c + classes.start..r * c + classes.end].copy_from_slice(p);
        }
        Ok(logits)
    }

    pub fn forward_input(&self, input: ModelInput<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new(&self.params);
        let out = self.logits(&mut g, input)?;
        let logits = g.value(out).clone();
        drop(g);
        self.apply_head(logits)
    }

    /// Signal values at `coords`: `N × out_channels`, head applied.
    pub fn forward(&self, coords: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.prepare(coords)?;
        self.forward_input(input)
    }

    /// Adds `extra` zero-initialized output channels. Existing outputs are
    /// unchanged; class channels turn a linear head into a mixed one.
    pub fn expand_output_head(&mut self, extra: usize, kind: ChannelKind) -> Result<()> {
        if extra == 0 {
            return Err(Error::Config("output expansion needs at least one channel".into()));
        }
        let head = match (self.config.head, kind) {
            (Head::Linear, ChannelKind::Linear) => Head::Linear,
            (Head::Linear, ChannelKind::Classes) => Head::Mixed {
                linear: self.config.out_channels,
            },
            (h @ (Head::Softmax | Head::Mixed { .. }), ChannelKind::Classes) => h,
            (_, ChannelKind::Linear) => {
                return Err(Error::Config(
                    "linear channels cannot be appended after class channels".into(),
                ))
            }
        };
        let (w, b) = self.output_layer();
        self.params.get_mut(w).grow_rows(extra, T::zero);
        self.params.get_mut(b).grow_rows(extra, T::zero);
        self.config.out_channels += extra;
        self.config.head = head;
        Ok(())
    }

    /// Adds one hash-table row per new coordinate, drawn from `U(-1, 1)`.
    pub fn expand_hash_table(&mut self, new_coords: &Tensor<f64>, rng: &mut impl Rng) -> Result<()> {
        let (Some(table), Some(map)) = (self.table, self.coord_map.as_mut()) else {
            return Err(Error::Config("only DINER models have a hash table".into()));
        };
        if new_coords.cols() != self.config.in_dim {
            return Err(Error::dim(
                "expand_hash_table",
                format!("{} columns, model expects {}", new_coords.cols(), self.config.in_dim),
            ));
        }
        map.extend(&keys_of(new_coords)?)?;
        self.params
            .get_mut(table)
            .grow_rows(new_coords.rows(), || T::lit(rng.gen_range(-1.0..=1.0)));
        Ok(())
    }
}

use crate::kernel::BnConfig;
use crate::{Error, Result};

/// Architecture hyperparameters of the TCN.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnConfig {
    pub in_channels: usize,
    pub window_len: usize,
    /// Output width of each block; its length is the block count.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub num_gestures: usize,
    pub bn: BnConfig,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            in_channels: crate::NUM_CHANNELS,
            window_len: 150,
            channels: vec![128; 3],
            kernel_size: 3,
            dropout: 0.5,
            leaky_slope: 0.1,
            num_gestures: crate::NUM_GESTURES,
            bn: BnConfig::default(),
        }
    }
}

/// Classifier size for uniform width `c`, kernel `k`, 10 inputs, 3 blocks
/// and 11 outputs: `2kc² + 10kc + 20c + 11`.
pub fn uniform_parameter_formula(c: usize, k: usize) -> usize {
    2 * k * c * c + 10 * k * c + 20 * c + 11
}

impl TcnConfig {
    /// Same defaults with a uniform block width.
    pub fn with_width(width: usize) -> Self {
        Self {
            channels: vec![width; 3],
            ..Self::default()
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.channels.len()
    }

    pub fn dilation(&self, block: usize) -> usize {
        1 << block
    }

    pub fn dilations(&self) -> Vec<usize> {
        (0..self.num_blocks()).map(|i| self.dilation(i)).collect()
    }

    pub fn receptive_field(&self) -> usize {
        crate::kernel::receptive_field(self.kernel_size, &self.dilations())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("window_len", self.window_len),
            ("kernel_size", self.kernel_size),
            ("num_gestures", self.num_gestures),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::config("channels", "need at least one block of nonzero width"));
        }
        if self.channels.len() > 16 {
            return Err(Error::config("channels", "at most 16 blocks"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if !self.leaky_slope.is_finite() || self.leaky_slope < 0.0 {
            return Err(Error::config("leaky_slope", "must be finite and non-negative"));
        }
        if !(self.bn.momentum > 0.0 && self.bn.momentum <= 1.0) {
            return Err(Error::config("bn.momentum", "must lie in (0, 1]"));
        }
        if !(self.bn.eps > 0.0) {
            return Err(Error::config("bn.eps", "must be positive"));
        }
        Ok(())
    }

    /// Learnable scalars of the classifier (conv, BN affine, output layer),
    /// domain head excluded.
    pub fn parameter_count(&self) -> usize {
        let k = self.kernel_size;
        let mut prev = self.in_channels;
        let mut total = 0;
        for &c in &self.channels {
            total += prev * c * k + c + 2 * c;
            prev = c;
        }
        total + prev * self.num_gestures + self.num_gestures
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let channels: Vec<String> = self.channels.iter().map(|c| c.to_string()).collect();
        vec![
            ("in_channels".into(), self.in_channels.to_string()),
            ("window_len".into(), self.window_len.to_string()),
            ("channels".into(), channels.join(",")),
            ("kernel_size".into(), self.kernel_size.to_string()),
            ("dropout".into(), self.dropout.to_string()),
            ("leaky_slope".into(), self.leaky_slope.to_string()),
            ("num_gestures".into(), self.num_gestures.to_string()),
            ("bn_momentum".into(), self.bn.momentum.to_string()),
            ("bn_eps".into(), self.bn.eps.to_string()),
        ]
    }

    pub fn from_kv(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &'static str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("model config lacks {key}")))
        };
        fn num<V: std::str::FromStr>(key: &'static str, v: &str) -> Result<V> {
            v.trim()
                .parse()
                .map_err(|_| Error::Checkpoint(format!("model config {key}: cannot parse {v:?}")))
        }
        let channels = get("channels")?
            .split(',')
            .map(|s| num("channels", s))
            .collect::<Result<Vec<usize>>>()?;
        let config = Self {
            in_channels: num("in_channels", get("in_channels")?)?,
            window_len: num("window_len", get("window_len")?)?,
            channels,
            kernel_size: num("kernel_size", get("kernel_size")?)?,
            dropout: num("dropout", get("dropout")?)?,
            leaky_slope: num("leaky_slope", get("leaky_slope")?)?,
            num_gestures: num("num_gestures", get("num_gestures")?)?,
            bn: BnConfig {
                momentum: num("bn_momentum", get("bn_momentum")?)?,
                eps: num("bn_eps", get("bn_eps")?)?,
            },
        };
        config.validate()?;
        Ok(config)
    }

    /// True when two configs build networks whose activations can be fused.
    pub fn same_architecture(&self, other: &Self) -> bool {
        self.in_channels == other.in_channels
            && self.window_len == other.window_len
            && self.channels == other.channels
            && self.kernel_size == other.kernel_size
            && self.num_gestures == other.num_gestures
    }
}

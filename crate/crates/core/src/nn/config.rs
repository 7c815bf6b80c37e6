use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::data::INPUT_WIDTH;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 2] = [CellKind::Lstm, CellKind::Gru];

    /// Number of stacked gate blocks in the weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(format!("unknown cell kind `{other}` (expected lstm or gru)")),
        }
    }
}

/// Shape of the stacked recurrent network.
///
/// The defaults reproduce the published architecture: four recurrent layers
/// of width 16, dropout 0.5 after layers 2 and 4, a single-unit dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub cell: CellKind,
    pub layer_widths: Vec<usize>,
    pub dropout_rate: f64,
    /// 1-based indices of the recurrent layers followed by a dropout layer.
    pub dropout_after: BTreeSet<usize>,
    pub head: Activation,
    pub input_width: usize,
    pub output_width: usize,
}

impl NetworkConfig {
    pub fn new(cell: CellKind, head: Activation) -> Self {
        NetworkConfig {
            cell,
            layer_widths: vec![16; 4],
            dropout_rate: 0.5,
            dropout_after: BTreeSet::from([2, 4]),
            head,
            input_width: INPUT_WIDTH,
            output_width: 1,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len()
    }

    pub fn layer_input_width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_width
        } else {
            self.layer_widths[layer - 1]
        }
    }

    pub fn top_width(&self) -> usize {
        *self.layer_widths.last().expect("validated config has layers")
    }

    /// Whether a dropout layer follows recurrent layer `layer` (0-based).
    pub fn has_dropout_after(&self, layer: usize) -> bool {
        self.dropout_after.contains(&(layer + 1))
    }

    pub fn variant_name(&self) -> String {
        format!("{}-{}", self.cell, self.head)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() {
            return Err(Error::invalid("network needs at least one recurrent layer"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!("dropout rate must be in [0, 1) (got {})", self.dropout_rate)));
        }
        if let Some(bad) = self.dropout_after.iter().find(|&&i| i == 0 || i > self.num_layers()) {
            return Err(Error::invalid(format!(
                "dropout index {bad} outside 1..={} recurrent layers",
                self.num_layers()
            )));
        }
        if self.input_width == 0 {
            return Err(Error::invalid("input width must be positive"));
        }
        if self.output_width != 1 {
            return Err(Error::invalid(format!("only a single output unit is supported (got {})", self.output_width)));
        }
        Ok(())
    }
}

//! What-where pooling: switch-recording 2×2 max-pool, switch-driven unpool,
//! and the switch prediction head that replaces transmitted switches.

use autograd::ops::{maxpool2x2_forward, unpool2x2_forward};
use autograd::{Bound, ParamStore, Tape, Tensor, Var};

use crate::archspec::build::{spn_rng, BlockBuilder, ConvBlock};
use crate::archspec::{Activation, LayerSpec};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Number of switch classes for 2×2 pooling.
pub const SWITCH_CLASSES: u8 = 4;

/// Argmax position within each 2×2 patch: 0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchMap {
    pub classes: Grid<u8>,
}

impl SwitchMap {
    pub fn new(classes: Grid<u8>) -> Result<Self> {
        if let Some(&bad) = classes.data().iter().find(|&&c| c >= SWITCH_CLASSES) {
            return Err(Error::Corruption(format!("switch class {bad} out of range")));
        }
        Ok(Self { classes })
    }

    pub const fn pool_size(&self) -> usize {
        2
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Switches in NCHW order, as consumed by the tape's unpool.
    pub fn to_nchw_order(&self) -> Vec<u8> {
        self.classes.to_nchw_order()
    }

    pub fn from_nchw_order(values: &[u8], channels: usize, height: usize, width: usize) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!("{} switches for a {height}x{width}x{channels} map", values.len())));
        }
        Self::new(Grid::from_nchw_order(values, channels, height, width))
    }
}

pub fn maxpool_with_switches(x: &Grid<f64>) -> Result<(Grid<f64>, SwitchMap)> {
    let (h, w, c) = x.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("max-pool needs even dims, got {h}x{w}")));
    }
    let (pooled, switches) = maxpool2x2_forward(&x.to_nchw());
    let map = SwitchMap::from_nchw_order(&switches, c, h / 2, w / 2)?;
    Ok((Grid::from_nchw(&pooled, 0), map))
}

pub fn unpool_with_switches(pooled: &Grid<f64>, switches: &SwitchMap) -> Result<Grid<f64>> {
    if !pooled.same_dims(&switches.classes) {
        return Err(Error::Shape(format!(
            "pooled grid {:?} vs switch map {:?}",
            pooled.dims(),
            switches.classes.dims()
        )));
    }
    let out = unpool2x2_forward(&pooled.to_nchw(), &switches.to_nchw_order());
    Ok(Grid::from_nchw(&out, 0))
}

/// Bucket a raw SPN value: `[0, .25) → 0`, `[.25, .5) → 1`, `[.5, .75) → 2`,
/// `[.75, 1] → 3`.
pub fn spn_classify(raw: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(Error::Domain(format!("SPN value {raw} outside [0, 1]")));
    }
    Ok(((raw * 4.0) as u8).min(SWITCH_CLASSES - 1))
}

/// Centre of each class bucket; the SPN's regression target.
pub fn class_midpoint(class: u8) -> f64 {
    (f64::from(class) + 0.5) / f64::from(SWITCH_CLASSES)
}

pub(crate) fn classify_tensor(raw: &Tensor) -> Result<Vec<u8>> {
    raw.data().iter().map(|&v| spn_classify(v)).collect()
}

/// Midpoint targets for the true switches, shaped like `like`.
pub fn midpoint_targets(switches: &[u8], like: &[usize]) -> Tensor {
    Tensor::from_vec(like, switches.iter().map(|&s| class_midpoint(s)).collect())
}

pub fn switch_accuracy(predicted: &SwitchMap, truth: &SwitchMap) -> Result<f64> {
    if !predicted.classes.same_dims(&truth.classes) {
        return Err(Error::Shape(format!(
            "switch maps {:?} and {:?} differ in shape",
            predicted.classes.dims(),
            truth.classes.dims()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Shape("empty switch maps".into()));
    }
    let hits = predicted.classes.data().iter().zip(truth.classes.data()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Switch prediction head: one 3×3 sigmoid convolution over the decoder
/// feature that enters the first-level unpool.
#[derive(Clone, Debug)]
pub struct Spn {
    channels: usize,
    block: ConvBlock,
    params: ParamStore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpnOutput {
    pub raw: Grid<f64>,
    pub classes: SwitchMap,
}

impl Spn {
    pub fn build(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Spec("SPN needs at least one channel".into()));
        }
        let mut params = ParamStore::new();
        let mut rng = spn_rng(seed);
        let spec = LayerSpec::conv_final(3, channels, Activation::Sigmoid);
        let block = BlockBuilder { store: &mut params, rng: &mut rng }.block("spn", channels, &spec, 1);
        Ok(Self { channels, block, params })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, features: Var) -> Result<Var> {
        let shape = tape.value(features).shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::Shape(format!("SPN expects {} channels, got shape {shape:?}", self.channels)));
        }
        Ok(self.block.forward(tape, p, features))
    }
}

/// Run the SPN on a single feature grid.
pub fn spn_forward(spn: &Spn, features: &Grid<f64>) -> Result<SpnOutput> {
    let mut tape = Tape::new();
    let p = spn.params().bind(&mut tape, false);
    let x = tape.constant(features.to_nchw());
    let raw = spn.forward(&mut tape, &p, x)?;
    let raw_t = tape.value(raw);
    let (_, c, h, w) = raw_t.dims4();
    let classes = SwitchMap::from_nchw_order(&classify_tensor(raw_t)?, c, h, w)?;
    Ok(SpnOutput { raw: Grid::from_nchw(raw_t, 0), classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(vals: [f64; 4]) -> Grid<f64> {
        Grid::new(2, 2, 1, vals.to_vec()).unwrap()
    }

    #[test]
    fn pool_examples() {
        for (vals, max, class) in [([1.0, 5.0, 2.0, 3.0], 5.0, 1), ([4.0; 4], 4.0, 0), ([0.0, 0.0, 0.0, 9.0], 9.0, 3)] {
            let (p, s) = maxpool_with_switches(&patch(vals)).unwrap();
            assert_eq!(p.data(), &[max]);
            assert_eq!(s.classes.data(), &[class]);
        }
        assert!(matches!(maxpool_with_switches(&Grid::filled(3, 2, 1, 0.0)), Err(Error::Shape(_))));
    }

    #[test]
    fn unpool_places_value_at_switch() {
        let p = Grid::new(1, 1, 1, vec![5.0]).unwrap();
        let s = SwitchMap::new(Grid::new(1, 1, 1, vec![1]).unwrap()).unwrap();
        assert_eq!(unpool_with_switches(&p, &s).unwrap().data(), &[0.0, 5.0, 0.0, 0.0]);
        let s2 = SwitchMap::new(Grid::filled(2, 1, 1, 0)).unwrap();
        assert!(unpool_with_switches(&p, &s2).is_err());
    }

    #[test]
    fn bucket_table() {
        let got: Vec<u8> = [0.1, 0.3, 0.6, 0.9, 0.25, 1.0, 0.0].iter().map(|&v| spn_classify(v).unwrap()).collect();
        assert_eq!(got, [0, 1, 2, 3, 1, 3, 0]);
        assert!(matches!(spn_classify(1.01), Err(Error::Domain(_))));
        assert!(spn_classify(-0.1).is_err());
        assert!(spn_classify(f64::NAN).is_err());
    }

    #[test]
    fn accuracy_extremes() {
        let t = SwitchMap::new(Grid::from_fn(4, 4, 2, |y, x, c| ((y + x + c) % 4) as u8)).unwrap();
        let shifted = SwitchMap::new(t.classes.map(|v| (v + 1) % 4)).unwrap();
        assert_eq!(switch_accuracy(&t, &t).unwrap(), 1.0);
        assert_eq!(switch_accuracy(&shifted, &t).unwrap(), 0.0);
    }

    #[test]
    fn zeroed_spn_predicts_class_two() {
        let mut spn = Spn::build(6, 3).unwrap();
        for id in spn.params().ids().collect::<Vec<_>>() {
            spn.params_mut().get_mut(id).data_mut().fill(0.0);
        }
        let feats = Grid::from_fn(4, 4, 6, |y, x, c| (y * 7 + x * 3 + c) as f64 - 10.0);
        let out = spn_forward(&spn, &feats).unwrap();
        assert!(out.raw.data().iter().all(|&v| v == 0.5));
        assert!(out.classes.classes.data().iter().all(|&c| c == 2));
        assert!(spn_forward(&spn, &Grid::filled(4, 4, 5, 0.0)).is_err());
    }
}

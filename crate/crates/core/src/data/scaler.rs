use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::SimulationSequence;

/// Per-feature min-max scaling to `[0, 1]`.
///
/// Features are the static parameters (in name order) followed by the QOI
/// components. A feature with `min == max` maps to 0 and inverts back to the
/// constant. Values outside the fitted range are not clipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a, I>(train: I) -> Result<Scaler>
    where
        I: IntoIterator<Item = &'a SimulationSequence>,
    {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        let mut layout: Option<(usize, usize)> = None;
        for seq in train {
            let n_static = seq.params.len();
            match layout {
                None => {
                    layout = Some((n_static, seq.qoi_dim));
                    min = vec![f64::INFINITY; n_static + seq.qoi_dim];
                    max = vec![f64::NEG_INFINITY; n_static + seq.qoi_dim];
                }
                Some(l) if l != (n_static, seq.qoi_dim) => {
                    return Err(Error::dim(
                        "fit_scaler",
                        format!("sequence {} has layout {:?}, expected {l:?}", seq.id, (n_static, seq.qoi_dim)),
                    ));
                }
                _ => {}
            }
            for (k, v) in seq.params.values().enumerate() {
                min[k] = min[k].min(*v);
                max[k] = max[k].max(*v);
            }
            for step in &seq.qoi {
                for (k, v) in step.iter().enumerate() {
                    min[n_static + k] = min[n_static + k].min(*v);
                    max[n_static + k] = max[n_static + k].max(*v);
                }
            }
        }
        if layout.is_none() {
            return Err(Error::Empty("training set"));
        }
        Ok(Scaler { min, max })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    #[inline]
    pub fn apply_feature(&self, k: usize, v: f64) -> f64 {
        let span = self.max[k] - self.min[k];
        if span > 0.0 {
            (v - self.min[k]) / span
        } else {
            0.0
        }
    }

    #[inline]
    pub fn invert_feature(&self, k: usize, v: f64) -> f64 {
        let span = self.max[k] - self.min[k];
        if span > 0.0 {
            v * span + self.min[k]
        } else {
            self.min[k]
        }
    }

    fn check(&self, seq: &SimulationSequence) -> Result<usize> {
        let n_static = seq.params.len();
        if n_static + seq.qoi_dim != self.n_features() {
            return Err(Error::dim(
                "scaler",
                format!(
                    "sequence {} has {} features, scaler has {}",
                    seq.id,
                    n_static + seq.qoi_dim,
                    self.n_features()
                ),
            ));
        }
        Ok(n_static)
    }

    pub fn apply_statics(&self, statics: &[f64]) -> Vec<f64> {
        statics.iter().enumerate().map(|(k, &v)| self.apply_feature(k, v)).collect()
    }

    /// Scales a QOI vector; `offset` is the number of static features.
    pub fn apply_qoi(&self, offset: usize, qoi: &[f64]) -> Vec<f64> {
        qoi.iter().enumerate().map(|(k, &v)| self.apply_feature(offset + k, v)).collect()
    }

    pub fn invert_qoi(&self, offset: usize, qoi: &[f64]) -> Vec<f64> {
        qoi.iter().enumerate().map(|(k, &v)| self.invert_feature(offset + k, v)).collect()
    }

    pub fn apply(&self, seq: &SimulationSequence) -> Result<SimulationSequence> {
        let n_static = self.check(seq)?;
        let mut out = seq.clone();
        for (k, v) in out.params.values_mut().enumerate() {
            *v = self.apply_feature(k, *v);
        }
        for step in &mut out.qoi {
            for (k, v) in step.iter_mut().enumerate() {
                *v = self.apply_feature(n_static + k, *v);
            }
        }
        Ok(out)
    }

    pub fn invert(&self, seq: &SimulationSequence) -> Result<SimulationSequence> {
        let n_static = self.check(seq)?;
        let mut out = seq.clone();
        for (k, v) in out.params.values_mut().enumerate() {
            *v = self.invert_feature(k, *v);
        }
        for step in &mut out.qoi {
            for (k, v) in step.iter_mut().enumerate() {
                *v = self.invert_feature(n_static + k, *v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use proptest::prelude::*;

    fn seq(id: u64, a: f64, qoi: &[f64]) -> SimulationSequence {
        SimulationSequence {
            id,
            params: BTreeMap::from([("a".to_string(), a)]),
            dt: 1.0,
            qoi_dim: 1,
            qoi: qoi.iter().map(|&v| vec![v]).collect(),
        }
    }

    #[test]
    fn empty_training_set() {
        let none: Vec<SimulationSequence> = vec![];
        assert!(matches!(Scaler::fit(&none), Err(Error::Empty(_))));
    }

    #[test]
    fn unit_feature_is_identity() {
        let data = vec![seq(0, 0.0, &[0.0, 0.3]), seq(1, 1.0, &[1.0, 0.6])];
        let s = Scaler::fit(&data).unwrap();
        let scaled = s.apply(&data[0]).unwrap();
        for (a, b) in scaled.qoi.iter().zip(&data[0].qoi) {
            assert!((a[0] - b[0]).abs() <= 1e-15);
        }
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let data = vec![seq(0, 2.5, &[0.0, 1.0]), seq(1, 2.5, &[2.0])];
        let s = Scaler::fit(&data).unwrap();
        let scaled = s.apply(&data[0]).unwrap();
        assert_eq!(scaled.params["a"], 0.0);
        assert_eq!(s.invert(&scaled).unwrap().params["a"], 2.5);
    }

    #[test]
    fn hand_values() {
        let data = vec![seq(0, 0.0, &[2.0]), seq(1, 1.0, &[4.0])];
        let s = Scaler::fit(&data).unwrap();
        assert_eq!(s.apply_qoi(1, &[2.0]), vec![0.0]);
        assert_eq!(s.apply_feature(1, 4.0), 1.0);
        assert_eq!(s.apply_feature(1, 3.0), 0.5);
        // outside the fitted range: not clipped
        assert_eq!(s.apply_feature(1, 6.0), 2.0);
    }

    proptest! {
        #[test]
        fn roundtrip_and_unit_range(
            vals in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 5), 2..6),
            a in prop::collection::vec(-50.0f64..50.0, 6),
        ) {
            let data: Vec<SimulationSequence> = vals
                .iter()
                .enumerate()
                .map(|(i, q)| seq(i as u64, a[i], q))
                .collect();
            let s = Scaler::fit(&data).unwrap();
            for d in &data {
                let scaled = s.apply(d).unwrap();
                for step in &scaled.qoi {
                    prop_assert!((0.0..=1.0).contains(&step[0]));
                }
                prop_assert!((0.0..=1.0).contains(&scaled.params["a"]));
                let back = s.invert(&scaled).unwrap();
                for (x, y) in back.qoi.iter().zip(&d.qoi) {
                    if s.max[1] > s.min[1] {
                        prop_assert!((x[0] - y[0]).abs() <= 1e-12 * y[0].abs().max(s.max[1].abs()).max(s.min[1].abs()));
                    }
                }
            }
        }
    }
}

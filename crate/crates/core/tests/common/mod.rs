#![allow(dead_code)]

use isopulse_core::dynamics::toggle;
use isopulse_core::*;

pub struct Toggle {
    pub model: VectorFieldModel,
    pub q: [f64; 4],
    pub states: ToggleStates,
}

impl Toggle {
    pub fn at(q: [f64; 4]) -> Self {
        let model = toggle_switch_model();
        let states = ToggleStates::find(&model, &q).expect("two stable states and a saddle");
        Self { model, q, states }
    }

    pub fn int() -> Self {
        Self::at(toggle::Q_INT)
    }

    /// Eigenfunction of `x•` (x1 high).
    pub fn bullet(&self) -> Eigenfunction {
        self.states
            .eigenfunction(&self.model, &self.q, true, LaplaceOptions::default())
            .unwrap()
    }

    /// Eigenfunction of `x*` (x2 high).
    pub fn star(&self) -> Eigenfunction {
        self.states
            .eigenfunction(&self.model, &self.q, false, LaplaceOptions::default())
            .unwrap()
    }
}

/// `y ⪰ x` built by adding nonnegative offsets along the order's signs.
pub fn above(order: &OrthantOrder, x: &[f64], offsets: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(offsets)
        .enumerate()
        .map(|(i, (a, d))| a + order.sign(i) * d.abs())
        .collect()
}

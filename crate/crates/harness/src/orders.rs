//! Observed convergence orders from error sequences.

use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Observed(f64),
    /// The errors do not decrease, so no order can be read off.
    Undefined,
    /// The errors are at round-off on both levels.
    Saturated,
}

impl Order {
    /// Saturated counts as meeting any order; undefined never does.
    pub fn meets(self, min: f64) -> bool {
        match self {
            Order::Observed(o) => o >= min,
            Order::Saturated => true,
            Order::Undefined => false,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Order::Observed(o) => o,
            Order::Saturated => f64::INFINITY,
            Order::Undefined => f64::NAN,
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Order::Observed(o) => s.serialize_f64(*o),
            Order::Undefined => s.serialize_str("undefined"),
            Order::Saturated => s.serialize_str("saturated"),
        }
    }
}

/// Order between two levels with spacings `h0 > h1`.
pub fn pair_order(e0: f64, e1: f64, h0: f64, h1: f64, floor: f64) -> Order {
    if e0 <= floor && e1 <= floor {
        return Order::Saturated;
    }
    if !(e0.is_finite() && e1.is_finite()) || e1 <= 0.0 || e1 >= e0 {
        return Order::Undefined;
    }
    Order::Observed((e0 / e1).ln() / (h0 / h1).ln())
}

/// Errors of one quantity across refinement levels and the orders they imply.
#[derive(Debug, Clone, Serialize)]
pub struct QuantityOrders {
    pub name: String,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    pub pairwise: Vec<Order>,
    /// Smallest pairwise order; undefined if any pair is.
    pub order: Order,
}

fn summarize(pairwise: &[Order]) -> Order {
    if pairwise.iter().all(|o| *o == Order::Saturated) {
        return Order::Saturated;
    }
    let mut worst = f64::INFINITY;
    for o in pairwise {
        match o {
            Order::Undefined => return Order::Undefined,
            Order::Observed(v) => worst = worst.min(*v),
            Order::Saturated => {}
        }
    }
    Order::Observed(worst)
}

impl QuantityOrders {
    /// `errors[k]` measured at spacing `h[k]`, coarse to fine.
    pub fn from_errors(name: &str, h: Vec<f64>, errors: Vec<f64>, floor: f64) -> Self {
        let pairwise: Vec<Order> = (1..errors.len())
            .map(|k| pair_order(errors[k - 1], errors[k], h[k - 1], h[k], floor))
            .collect();
        let order = summarize(&pairwise);
        Self {
            name: name.to_string(),
            h,
            errors,
            pairwise,
            order,
        }
    }

    /// Richardson triplets for a quantity with unknown limit, sampled at
    /// spacings shrinking by a constant `ratio`. The reported errors are
    /// the successive differences.
    pub fn from_richardson(name: &str, h: Vec<f64>, values: &[f64], ratio: f64, floor: f64) -> Self {
        let diffs: Vec<f64> = values.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        let pairwise: Vec<Order> = diffs
            .windows(2)
            .map(|d| pair_order(d[0], d[1], ratio, 1.0, floor))
            .collect();
        let order = summarize(&pairwise);
        Self {
            name: name.to_string(),
            h,
            errors: diffs,
            pairwise,
            order,
        }
    }
}

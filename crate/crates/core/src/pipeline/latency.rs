//! Node and link models and the delay rule `bits / throughput + flop / capacity`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cloud,
    Edge,
    End,
    /// Capture device for the remote background scene. It never computes.
    Camera,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Cloud => "cloud",
            Role::Edge => "edge",
            Role::End => "end",
            Role::Camera => "camera",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub role: Role,
    /// Sustained compute in FLOP per second.
    pub compute_flops: f64,
}

impl NodeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.compute_flops > 0.0 && self.compute_flops.is_finite()) {
            return Err(Error::Config(format!(
                "{} node: compute capacity must be positive and finite, got {}",
                self.role, self.compute_flops
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    /// Goes through the channel simulation.
    Wireless,
    /// Lossless.
    Fiber,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: Role,
    pub to: Role,
    pub kind: LinkKind,
    pub throughput_bps: f64,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.throughput_bps > 0.0 && self.throughput_bps.is_finite()) {
            return Err(Error::Config(format!(
                "{}->{} link: throughput must be positive and finite, got {}",
                self.from, self.to, self.throughput_bps
            )));
        }
        Ok(())
    }

    pub fn transmission_seconds(&self, bits: u64) -> f64 {
        bits as f64 / self.throughput_bps
    }
}

/// Transmission plus compute delay of one stage.
pub fn stage_latency(payload_bits: u64, link: &LinkSpec, flops: f64, node: &NodeSpec) -> f64 {
    link.transmission_seconds(payload_bits) + flops / node.compute_flops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(bps: f64) -> LinkSpec {
        LinkSpec {
            from: Role::End,
            to: Role::Edge,
            kind: LinkKind::Wireless,
            throughput_bps: bps,
        }
    }

    fn node(flops: f64) -> NodeSpec {
        NodeSpec {
            role: Role::Edge,
            compute_flops: flops,
        }
    }

    #[test]
    fn transmission_only() {
        assert_eq!(stage_latency(8_000_000, &link(1e6), 0.0, &node(1e12)), 8.0);
    }

    #[test]
    fn compute_only() {
        assert_eq!(stage_latency(0, &link(1e6), 10e12, &node(10e12)), 1.0);
    }

    #[test]
    fn reference_throughput_calibration() {
        let bits = 92_000_000u64;
        let l = link(92e6 / 5718.0);
        assert!((stage_latency(bits, &l, 0.0, &node(1.0)) - 5718.0).abs() < 1e-6);
    }

    #[test]
    fn linear_in_payload() {
        let l = link(16_089.5);
        let one = l.transmission_seconds(1_000);
        assert!((l.transmission_seconds(7_000) - 7.0 * one).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_specs() {
        assert!(link(0.0).validate().is_err());
        assert!(link(f64::INFINITY).validate().is_err());
        assert!(node(-1.0).validate().is_err());
        assert!(node(1.0).validate().is_ok());
    }
}

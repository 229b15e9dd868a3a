//! Flat JSON file formats for patterns, mergers and protocol instances,
//! with validating conversions to the in-memory types.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masking::InputSpec;
use crate::merge::{MergerGraph, Role};
use crate::pattern::{GFlow, MeasurementPattern, NodeId, Octant, OpenGraph, PatternError};
use crate::protocol::ProtocolInstance;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("in {context}: {source}")]
    Pattern {
        context: &'static str,
        #[source]
        source: PatternError,
    },
    #[error("in {0}: angle {1} out of range 0..8")]
    AngleRange(&'static str, i64),
    #[error("in {0}: measured node {1} has no angle")]
    MissingAngle(&'static str, NodeId),
    #[error("in {0}: node {1} unknown")]
    UnknownNode(&'static str, NodeId),
    #[error("in {0}: input state for {1} is not normalized")]
    NotNormalized(&'static str, NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternFile {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    pub gflow: BTreeMap<NodeId, Vec<NodeId>>,
    /// pairs [a, b] meaning a before b; may be partial, closure is computed
    pub order: Vec<(NodeId, NodeId)>,
    pub angles: BTreeMap<NodeId, i64>,
}

impl PatternFile {
    pub fn from_pattern(p: &MeasurementPattern) -> PatternFile {
        PatternFile {
            nodes: p.graph.nodes().iter().copied().collect(),
            edges: p.graph.edges().iter().copied().collect(),
            inputs: p.graph.inputs.clone(),
            outputs: p.graph.outputs.clone(),
            gflow: p
                .gflow
                .g
                .iter()
                .map(|(k, v)| (*k, v.iter().copied().collect()))
                .collect(),
            order: p.gflow.order.iter().copied().collect(),
            angles: p.angles.iter().map(|(k, v)| (*k, v.k() as i64)).collect(),
        }
    }

    pub fn to_pattern(&self, context: &'static str) -> Result<MeasurementPattern, FormatError> {
        let graph = OpenGraph::new(
            self.nodes.iter().copied(),
            self.edges.iter().copied(),
            self.inputs.clone(),
            self.outputs.clone(),
        )
        .map_err(|source| FormatError::Pattern { context, source })?;
        let mut angles = BTreeMap::new();
        for (&v, &k) in &self.angles {
            if !graph.nodes().contains(&v) {
                return Err(FormatError::UnknownNode(context, v));
            }
            if !(0..8).contains(&k) {
                return Err(FormatError::AngleRange(context, k));
            }
            angles.insert(v, Octant::new(k));
        }
        for v in graph.measured() {
            if !angles.contains_key(&v) {
                return Err(FormatError::MissingAngle(context, v));
            }
        }
        let mut g = BTreeMap::new();
        for (&v, set) in &self.gflow {
            for node in std::iter::once(&v).chain(set.iter()) {
                if !graph.nodes().contains(node) {
                    return Err(FormatError::UnknownNode(context, *node));
                }
            }
            g.insert(v, set.iter().copied().collect());
        }
        for &(a, b) in &self.order {
            for node in [a, b] {
                if !graph.nodes().contains(&node) {
                    return Err(FormatError::UnknownNode(context, node));
                }
            }
        }
        let gflow = GFlow { g, order: self.order.iter().copied().collect() };
        Ok(MeasurementPattern { graph, gflow, angles })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergerFile {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    pub embed0: BTreeMap<NodeId, NodeId>,
    pub embed1: BTreeMap<NodeId, NodeId>,
    pub roles: BTreeMap<NodeId, Role>,
    pub total_order: Vec<NodeId>,
    #[serde(default)]
    pub middles: BTreeMap<NodeId, (NodeId, NodeId, u8)>,
}

impl MergerFile {
    pub fn from_merger(m: &MergerGraph) -> MergerFile {
        MergerFile {
            nodes: m.graph.nodes().iter().copied().collect(),
            edges: m.graph.edges().iter().copied().collect(),
            inputs: m.graph.inputs.clone(),
            outputs: m.graph.outputs.clone(),
            embed0: m.embed0.clone(),
            embed1: m.embed1.clone(),
            roles: m.roles.clone(),
            total_order: m.total_order.clone(),
            middles: m.middles.clone(),
        }
    }

    pub fn to_merger(&self, context: &'static str) -> Result<MergerGraph, FormatError> {
        let graph = OpenGraph::new(
            self.nodes.iter().copied(),
            self.edges.iter().copied(),
            self.inputs.clone(),
            self.outputs.clone(),
        )
        .map_err(|source| FormatError::Pattern { context, source })?;
        for v in self
            .embed0
            .values()
            .chain(self.embed1.values())
            .chain(self.roles.keys())
            .chain(self.total_order.iter())
            .chain(self.middles.keys())
        {
            if !graph.nodes().contains(v) {
                return Err(FormatError::UnknownNode(context, *v));
            }
        }
        Ok(MergerGraph {
            graph,
            embed0: self.embed0.clone(),
            embed1: self.embed1.clone(),
            roles: self.roles.clone(),
            total_order: self.total_order.clone(),
            middles: self.middles.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub u0: PatternFile,
    pub u1: PatternFile,
    pub merger: MergerFile,
    #[serde(default)]
    pub input_spec: InputSpec,
    /// input states as [[re0, im0], [re1, im1]]
    #[serde(default)]
    pub inputs: BTreeMap<NodeId, [[f64; 2]; 2]>,
}

impl InstanceFile {
    pub fn from_instance(inst: &ProtocolInstance) -> InstanceFile {
        InstanceFile {
            u0: PatternFile::from_pattern(&inst.u0),
            u1: PatternFile::from_pattern(&inst.u1),
            merger: MergerFile::from_merger(&inst.merger),
            input_spec: inst.input_spec.clone(),
            inputs: inst
                .inputs
                .iter()
                .map(|(&v, amp)| (v, [[amp[0].re, amp[0].im], [amp[1].re, amp[1].im]]))
                .collect(),
        }
    }

    pub fn to_instance(&self) -> Result<ProtocolInstance, FormatError> {
        let u0 = self.u0.to_pattern("u0")?;
        let u1 = self.u1.to_pattern("u1")?;
        let merger = self.merger.to_merger("merger")?;
        for &v in self.input_spec.keys().chain(self.inputs.keys()) {
            if !merger.graph.nodes().contains(&v) {
                return Err(FormatError::UnknownNode("inputs", v));
            }
        }
        let mut inputs = BTreeMap::new();
        for (&v, amp) in &self.inputs {
            let state = [
                Complex64::new(amp[0][0], amp[0][1]),
                Complex64::new(amp[1][0], amp[1][1]),
            ];
            let norm: f64 = state.iter().map(|a| a.norm_sqr()).sum();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(FormatError::NotNormalized("inputs", v));
            }
            inputs.insert(v, state);
        }
        Ok(ProtocolInstance {
            u0,
            u1,
            merger,
            input_spec: self.input_spec.clone(),
            inputs,
        })
    }
}

pub fn parse_pattern(text: &str) -> Result<MeasurementPattern, FormatError> {
    serde_json::from_str::<PatternFile>(text)?.to_pattern("pattern")
}

pub fn serialize_pattern(p: &MeasurementPattern) -> String {
    let mut s = serde_json::to_string_pretty(&PatternFile::from_pattern(p)).unwrap();
    s.push('\n');
    s
}

pub fn parse_merger(text: &str) -> Result<MergerGraph, FormatError> {
    serde_json::from_str::<MergerFile>(text)?.to_merger("merger")
}

pub fn serialize_merger(m: &MergerGraph) -> String {
    let mut s = serde_json::to_string_pretty(&MergerFile::from_merger(m)).unwrap();
    s.push('\n');
    s
}

pub fn parse_instance(text: &str) -> Result<ProtocolInstance, FormatError> {
    serde_json::from_str::<InstanceFile>(text)?.to_instance()
}

pub fn serialize_instance(inst: &ProtocolInstance) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(inst)).unwrap();
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::all_instances;

    #[test]
    fn round_trip_all_fixtures() {
        for (name, inst) in all_instances() {
            let text = serialize_instance(&inst);
            let back = parse_instance(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(back.u0, inst.u0, "{name}");
            assert_eq!(back.u1, inst.u1, "{name}");
            assert_eq!(back.merger, inst.merger, "{name}");
            assert_eq!(back.input_spec, inst.input_spec, "{name}");
            // canonical form is a fixpoint
            assert_eq!(serialize_instance(&back), text, "{name}");
        }
    }

    #[test]
    fn rejects_bad_files() {
        let err = parse_pattern("{").unwrap_err();
        assert!(matches!(err, FormatError::Parse(_)));

        let missing_angle = r#"{
            "nodes": [1, 2], "edges": [[1, 2]],
            "inputs": [1], "outputs": [2],
            "gflow": {"1": [2]}, "order": [],
            "angles": {}
        }"#;
        assert!(matches!(
            parse_pattern(missing_angle),
            Err(FormatError::MissingAngle(_, 1))
        ));

        let bad_angle = r#"{
            "nodes": [1, 2], "edges": [[1, 2]],
            "inputs": [1], "outputs": [2],
            "gflow": {"1": [2]}, "order": [],
            "angles": {"1": 9}
        }"#;
        assert!(matches!(parse_pattern(bad_angle), Err(FormatError::AngleRange(_, 9))));

        let unknown_node = r#"{
            "nodes": [1, 2], "edges": [[1, 3]],
            "inputs": [1], "outputs": [2],
            "gflow": {}, "order": [], "angles": {"1": 0}
        }"#;
        assert!(matches!(parse_pattern(unknown_node), Err(FormatError::Pattern { .. })));
    }
}

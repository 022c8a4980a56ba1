//! Tool descriptors and the bipartite tool graph.
//!
//! Tool nodes connect to their return type (tool → resource) and every
//! argument type connects to the tools accepting it (resource → tool).
//! There are no tool–tool or resource–resource edges.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Domain, ResourceType, Vocabulary};

/// One typed tool argument (or the return slot).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArgSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub rtype: ResourceType,
}

impl ArgSpec {
    pub fn new(name: impl Into<String>, rtype: ResourceType) -> Self {
        Self {
            name: name.into(),
            rtype,
        }
    }
}

/// A tool node: description, typed arguments and a single typed return.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub domains: Vec<Domain>,
    pub args: Vec<ArgSpec>,
    pub ret: ArgSpec,
}

impl ToolSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        domains: Vec<Domain>,
        args: Vec<ArgSpec>,
        ret: ArgSpec,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            description: description.into(),
            domains,
            args,
            ret,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidTool {
            tool: self.name.clone(),
            reason: reason.to_owned(),
        };
        if self.name.is_empty() {
            return Err(invalid("empty name"));
        }
        if self.args.is_empty() {
            return Err(invalid("a tool needs at least one argument"));
        }
        let mut names = BTreeSet::new();
        for arg in &self.args {
            if arg.name.is_empty() || !names.insert(arg.name.as_str()) {
                return Err(invalid("argument names must be non-empty and unique"));
            }
        }
        Ok(())
    }

    /// Distinct argument types, sorted.
    pub fn arg_types(&self) -> BTreeSet<&ResourceType> {
        self.args.iter().map(|a| &a.rtype).collect()
    }

    pub fn in_any_domain(&self, domains: &[Domain]) -> bool {
        domains.is_empty() || self.domains.iter().any(|d| domains.contains(d))
    }

    pub fn to_record(&self) -> ToolRecord {
        ToolRecord {
            name: self.name.clone(),
            description: self.description.clone(),
            domains: self.domains.iter().map(|d| d.name().to_owned()).collect(),
            args: self.args.iter().map(ArgRecord::from).collect(),
            returns: ArgRecord::from(&self.ret),
        }
    }
}

/// Serialized form of a tool in the registry document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolRecord {
    pub name: String,
    #[serde(default, alias = "desc")]
    pub description: String,
    #[serde(default)]
    pub domains: Vec<String>,
    pub args: Vec<ArgRecord>,
    #[serde(alias = "ret")]
    pub returns: ArgRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgRecord {
    pub name: String,
    #[serde(rename = "type")]
    pub rtype: String,
}

impl From<&ArgSpec> for ArgRecord {
    fn from(a: &ArgSpec) -> Self {
        Self {
            name: a.name.clone(),
            rtype: a.rtype.name().to_owned(),
        }
    }
}

impl ToolRecord {
    pub fn resolve(&self, vocab: &Vocabulary) -> Result<ToolSpec> {
        let domains = self
            .domains
            .iter()
            .map(|d| vocab.domain(d))
            .collect::<Result<Vec<_>>>()?;
        let args = self
            .args
            .iter()
            .map(|a| Ok(ArgSpec::new(a.name.clone(), vocab.resource_type(&a.rtype)?)))
            .collect::<Result<Vec<_>>>()?;
        let ret = ArgSpec::new(
            self.returns.name.clone(),
            vocab.resource_type(&self.returns.rtype)?,
        );
        ToolSpec::new(
            self.name.clone(),
            self.description.clone(),
            domains,
            args,
            ret,
        )
    }
}

/// Parses a registry document (a JSON array of tool records).
pub fn parse_registry(doc: &str, vocab: &Vocabulary) -> Result<Vec<ToolSpec>> {
    let records: Vec<ToolRecord> =
        serde_json::from_str(doc).map_err(|e| Error::MalformedRegistry(format!("{e}")))?;
    records.iter().map(|r| r.resolve(vocab)).collect()
}

pub fn registry_to_json(tools: &[ToolSpec]) -> String {
    let records: Vec<ToolRecord> = tools.iter().map(ToolSpec::to_record).collect();
    serde_json::to_string_pretty(&records).expect("tool records always serialize")
}

/// The bipartite tool graph. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolGraph {
    tools: Vec<Arc<ToolSpec>>,
    by_name: BTreeMap<String, usize>,
    resources: BTreeSet<ResourceType>,
    // tool index -> returned type
    produces: Vec<ResourceType>,
    // resource type -> indices of tools that accept it
    consumers: BTreeMap<ResourceType, BTreeSet<usize>>,
}

/// Builds the graph. Tool order in the input does not matter: tools are
/// kept sorted by name.
pub fn build_graph(tools: Vec<ToolSpec>) -> Result<ToolGraph> {
    let mut tools = tools;
    tools.sort_by(|a, b| a.name.cmp(&b.name));
    for pair in tools.windows(2) {
        if pair[0].name == pair[1].name {
            return Err(Error::DuplicateTool(pair[0].name.clone()));
        }
    }
    let mut graph = ToolGraph {
        tools: Vec::with_capacity(tools.len()),
        by_name: BTreeMap::new(),
        resources: BTreeSet::new(),
        produces: Vec::with_capacity(tools.len()),
        consumers: BTreeMap::new(),
    };
    for (idx, tool) in tools.into_iter().enumerate() {
        tool.validate()?;
        for ty in tool.arg_types() {
            graph.resources.insert(ty.clone());
            graph.consumers.entry(ty.clone()).or_default().insert(idx);
        }
        graph.resources.insert(tool.ret.rtype.clone());
        graph.produces.push(tool.ret.rtype.clone());
        graph.by_name.insert(tool.name.clone(), idx);
        graph.tools.push(Arc::new(tool));
    }
    Ok(graph)
}

impl ToolGraph {
    pub fn tools(&self) -> &[Arc<ToolSpec>] {
        &self.tools
    }

    pub fn tool(&self, name: &str) -> Option<&Arc<ToolSpec>> {
        self.by_name.get(name).map(|&i| &self.tools[i])
    }

    pub fn resource_nodes(&self) -> &BTreeSet<ResourceType> {
        &self.resources
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Tool → resource edge: `rtype` is what `tool` returns.
    pub fn tool_to_resource(&self, tool: &str, rtype: &ResourceType) -> bool {
        self.by_name
            .get(tool)
            .is_some_and(|&i| &self.produces[i] == rtype)
    }

    /// Resource → tool edge: `rtype` is among the argument types of `tool`.
    pub fn resource_to_tool(&self, rtype: &ResourceType, tool: &str) -> bool {
        match (self.consumers.get(rtype), self.by_name.get(tool)) {
            (Some(set), Some(i)) => set.contains(i),
            _ => false,
        }
    }

    pub fn consumers_of(&self, rtype: &ResourceType) -> impl Iterator<Item = &Arc<ToolSpec>> {
        self.consumers
            .get(rtype)
            .into_iter()
            .flat_map(|set| set.iter().map(|&i| &self.tools[i]))
    }

    pub fn node_count(&self) -> usize {
        self.tools.len() + self.resources.len()
    }

    pub fn edge_count(&self) -> usize {
        self.produces.len() + self.consumers.values().map(BTreeSet::len).sum::<usize>()
    }

    /// Tools whose every argument type is available and that belong to one
    /// of `domains` (an empty list disables the domain filter). Sorted by name.
    pub fn applicable_tools<'g>(
        &'g self,
        available: &BTreeSet<ResourceType>,
        domains: &[Domain],
    ) -> Vec<&'g Arc<ToolSpec>> {
        self.applicable_where(|t| available.contains(t), domains)
    }

    pub(crate) fn applicable_where<'g>(
        &'g self,
        available: impl Fn(&ResourceType) -> bool,
        domains: &[Domain],
    ) -> Vec<&'g Arc<ToolSpec>> {
        self.tools
            .iter()
            .filter(|t| t.in_any_domain(domains) && t.args.iter().all(|a| available(&a.rtype)))
            .collect()
    }

    /// Graphviz rendering. Resource nodes are ellipses, tool nodes boxes.
    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph tool_graph {\n  rankdir=LR;\n");
        for r in &self.resources {
            let _ = writeln!(out, "  \"r:{r}\" [label=\"{r}\", shape=ellipse];");
        }
        for t in &self.tools {
            let _ = writeln!(out, "  \"t:{0}\" [label=\"{0}\", shape=box];", t.name);
        }
        for t in &self.tools {
            for ty in t.arg_types() {
                let _ = writeln!(out, "  \"r:{ty}\" -> \"t:{}\";", t.name);
            }
            let _ = writeln!(out, "  \"t:{}\" -> \"r:{}\";", t.name, t.ret.rtype);
        }
        out.push_str("}\n");
        out
    }
}

/// Free-function form of [`ToolGraph::applicable_tools`].
pub fn applicable_tools<'g>(
    g: &'g ToolGraph,
    available: &BTreeSet<ResourceType>,
    domains: &[Domain],
) -> Vec<&'g Arc<ToolSpec>> {
    g.applicable_tools(available, domains)
}

pub fn export_dot(g: &ToolGraph) -> String {
    g.export_dot()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolbox::default_registry;
    use alloc::vec;

    fn ty(name: &str) -> ResourceType {
        Vocabulary::builtin().resource_type(name).unwrap()
    }

    fn tool(name: &str, args: &[&str], ret: &str) -> ToolSpec {
        ToolSpec::new(
            name,
            "",
            vec![],
            args.iter()
                .enumerate()
                .map(|(i, a)| ArgSpec::new(format!("a{i}"), ty(a)))
                .collect(),
            ArgSpec::new("out", ty(ret)),
        )
        .unwrap()
    }

    #[test]
    fn single_tool_edges() {
        let g = build_graph(vec![tool("text_to_image", &["text"], "image")]).unwrap();
        assert!(g.resource_to_tool(&ty("text"), "text_to_image"));
        assert!(g.tool_to_resource("text_to_image", &ty("image")));
        assert!(!g.tool_to_resource("text_to_image", &ty("text")));
        assert!(!g.resource_to_tool(&ty("image"), "text_to_image"));
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn empty_graph() {
        let g = build_graph(vec![]).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.export_dot(), "digraph tool_graph {\n  rankdir=LR;\n}\n");
    }

    #[test]
    fn duplicate_and_zero_arg_tools_rejected() {
        let dup = build_graph(vec![tool("a", &["text"], "text"), tool("a", &["image"], "text")]);
        assert_eq!(dup, Err(Error::DuplicateTool("a".into())));
        let zero = ToolSpec::new("src", "", vec![], vec![], ArgSpec::new("o", ty("text")));
        assert!(matches!(zero, Err(Error::InvalidTool { .. })));
    }

    #[test]
    fn repeated_arg_type_is_one_edge() {
        let g = build_graph(vec![tool("blend", &["image", "image"], "image")]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn dot_for_one_tool() {
        let g = build_graph(vec![tool("image_to_edge", &["image"], "edge")]).unwrap();
        let dot = g.export_dot();
        assert_eq!(dot.matches("shape=ellipse").count(), 2);
        assert_eq!(dot.matches("shape=box").count(), 1);
        assert_eq!(dot.matches("->").count(), 2);
    }

    #[test]
    fn applicable_tools_on_desk_toolbox() {
        let g = build_graph(default_registry()).unwrap();
        let vocab = Vocabulary::builtin();
        let image: BTreeSet<_> = [ty("image")].into_iter().collect();
        let names: Vec<_> = g
            .applicable_tools(&image, &[])
            .iter()
            .map(|t| t.name.as_str())
            .collect();
        assert!(names.contains(&"image_captioning"));
        assert!(names.contains(&"object_detection"));
        assert!(names.contains(&"image_to_edge"));
        assert!(!names.contains(&"image_cropping"));

        let image_bbox: BTreeSet<_> = [ty("image"), ty("bbox")].into_iter().collect();
        let editing = [vocab.domain("image-editing").unwrap()];
        let names: Vec<_> = g
            .applicable_tools(&image_bbox, &editing)
            .iter()
            .map(|t| t.name.as_str())
            .collect();
        assert!(names.contains(&"image_cropping"));
        assert!(names.iter().all(|n| {
            g.tool(n).unwrap().domains.contains(&editing[0])
        }));
        assert!(g.applicable_tools(&BTreeSet::new(), &[]).is_empty());
    }

    #[test]
    fn registry_json_round_trip() {
        let vocab = Vocabulary::builtin();
        let tools = default_registry();
        let doc = registry_to_json(&tools);
        assert_eq!(parse_registry(&doc, &vocab).unwrap(), tools);
        let bad = r#"[{"name":"x","description":"","domains":[],"args":[{"name":"a","type":"picture"}],"returns":{"name":"o","type":"text"}}]"#;
        assert_eq!(
            parse_registry(bad, &vocab),
            Err(Error::UnknownResourceType("picture".into()))
        );
        let extra = r#"[{"name":"x","args":[{"name":"a","type":"text"}],"returns":{"name":"o","type":"text"},"bogus":1}]"#;
        assert!(matches!(parse_registry(extra, &vocab), Err(Error::MalformedRegistry(_))));
    }
}

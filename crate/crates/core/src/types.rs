//! Resource-type vocabulary, task domains, resources and `<GEN>` placeholders.
//!
//! The type set is closed: a [`ResourceType`] can only be obtained from a
//! [`Vocabulary`], which starts from the 19 built-in descriptors and may be
//! extended while the engine is being configured. Domains follow the same
//! pattern.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use core::borrow::Borrow;
use core::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Built-in resource type descriptors.
pub const BUILTIN_TYPES: [&str; 19] = [
    "text",
    "tags",
    "html",
    "image",
    "video",
    "audio",
    "segmentation",
    "edge",
    "line",
    "hed",
    "canny",
    "scribble",
    "pose",
    "depth",
    "normal",
    "mask",
    "point",
    "bbox",
    "category",
];

/// Types whose values travel inline rather than as a file path.
pub const INLINE_TYPES: [&str; 5] = ["text", "tags", "category", "point", "bbox"];

/// Built-in task domains.
pub const BUILTIN_DOMAINS: [&str; 15] = [
    "question-answering",
    "visual-question-answering",
    "natural-language-processing",
    "image-generation",
    "image-editing",
    "image-perception",
    "image-processing",
    "audio-perception",
    "audio-generation",
    "audio-editing",
    "video-question-answering",
    "video-perception",
    "video-processing",
    "video-generation",
    "video-editing",
];

/// A resource type from the configured vocabulary.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceType(Arc<str>);

impl ResourceType {
    pub fn name(&self) -> &str {
        &self.0
    }

    /// Inline types carry their value directly; everything else is a path.
    pub fn is_inline(&self) -> bool {
        INLINE_TYPES.contains(&self.name())
    }

    pub fn is_text(&self) -> bool {
        self.name() == "text"
    }
}

impl Borrow<str> for ResourceType {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ResourceType({})", self.0)
    }
}

impl fmt::Display for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for ResourceType {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

/// A task domain identifier such as `image-editing`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Domain(Arc<str>);

impl Domain {
    pub fn name(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Domain {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Domain({})", self.0)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

/// The closed sets of resource types and task domains.
///
/// Extend it while loading configuration, then share it immutably.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    types: BTreeSet<ResourceType>,
    domains: BTreeSet<Domain>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Vocabulary {
    pub fn builtin() -> Self {
        Self {
            types: BUILTIN_TYPES
                .iter()
                .map(|n| ResourceType(Arc::from(*n)))
                .collect(),
            domains: BUILTIN_DOMAINS
                .iter()
                .map(|n| Domain(Arc::from(*n)))
                .collect(),
        }
    }

    pub fn add_type(&mut self, name: &str) -> Result<ResourceType> {
        check_identifier(name).map_err(|_| Error::UnknownResourceType(name.to_owned()))?;
        let ty = ResourceType(Arc::from(name));
        self.types.insert(ty.clone());
        Ok(ty)
    }

    pub fn add_domain(&mut self, name: &str) -> Result<Domain> {
        check_identifier(name).map_err(|_| Error::UnknownDomain(name.to_owned()))?;
        let domain = Domain(Arc::from(name));
        self.domains.insert(domain.clone());
        Ok(domain)
    }

    /// Case-sensitive exact lookup.
    pub fn resource_type(&self, name: &str) -> Result<ResourceType> {
        self.types
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownResourceType(name.to_owned()))
    }

    pub fn domain(&self, name: &str) -> Result<Domain> {
        self.domains
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownDomain(name.to_owned()))
    }

    pub fn types(&self) -> impl Iterator<Item = &ResourceType> {
        self.types.iter()
    }

    pub fn domains(&self) -> impl Iterator<Item = &Domain> {
        self.domains.iter()
    }
}

fn check_identifier(name: &str) -> core::result::Result<(), ()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(())
    }
}

/// Looks `name` up in the built-in type registry.
pub fn parse_resource_type(name: &str) -> Result<ResourceType> {
    if BUILTIN_TYPES.contains(&name) {
        Ok(ResourceType(Arc::from(name)))
    } else {
        Err(Error::UnknownResourceType(name.to_owned()))
    }
}

/// A typed value living in (or headed for) state memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Resource {
    pub id: String,
    #[serde(rename = "type")]
    pub rtype: ResourceType,
    pub value: String,
}

impl Resource {
    pub fn new(id: impl Into<String>, rtype: ResourceType, value: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            rtype,
            value: value.into(),
        }
    }
}

const GEN_PREFIX: &str = "<GEN>-";

/// Reference to a resource that will be generated: `<GEN>-{id}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GenPlaceholder {
    pub id: u32,
}

impl GenPlaceholder {
    pub fn new(id: u32) -> Self {
        Self { id }
    }

    pub fn raw(&self) -> String {
        self.to_string()
    }

    pub fn looks_like(raw: &str) -> bool {
        raw.starts_with(GEN_PREFIX)
    }
}

impl fmt::Display for GenPlaceholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{GEN_PREFIX}{}", self.id)
    }
}

impl Serialize for GenPlaceholder {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Parses `<GEN>-{k}`. Compound forms such as `<GEN>-detr-bbox-0` are
/// normalized to their trailing id.
pub fn parse_placeholder(raw: &str) -> Result<GenPlaceholder> {
    let malformed = || Error::MalformedPlaceholder(raw.to_owned());
    let rest = raw.strip_prefix(GEN_PREFIX).ok_or_else(malformed)?;
    let (labels, digits) = match rest.rfind('-') {
        Some(pos) => (Some(&rest[..pos]), &rest[pos + 1..]),
        None => (None, rest),
    };
    if let Some(labels) = labels {
        let ok = labels.split('-').all(|seg| {
            !seg.is_empty() && seg.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        });
        if !ok {
            return Err(malformed());
        }
    }
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let id = digits.parse::<u32>().map_err(|_| malformed())?;
    Ok(GenPlaceholder { id })
}

pub(crate) fn describe_types<'a>(types: impl IntoIterator<Item = &'a ResourceType>) -> String {
    let mut out = String::new();
    for (i, t) in types.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(t.name());
    }
    if out.is_empty() {
        out = String::from("(none)");
    }
    out
}

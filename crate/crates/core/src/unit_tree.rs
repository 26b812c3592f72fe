//! Block designs as trees of named units.
//!
//! Each unit owns a DSL body fragment (or a placeholder) and the children its
//! body declares. [`compose`] flattens a tree into one multi-section program
//! in depth-first pre-order with siblings sorted by name; [`decompose`] goes
//! back. Structural identity ignores sibling order, body whitespace and the
//! transient `protected` flags.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use crate::dsl::UnitDecl;
use crate::dsl::{
    is_identifier, parse, BlockProgram, ParseError, Section, SectionBody, SectionHeader,
};

pub const TREE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitBody {
    /// DSL source of a bare (headerless) body.
    Source(String),
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitNode {
    pub decl: UnitDecl,
    pub body: UnitBody,
    pub children: Vec<UnitNode>,
    #[serde(default)]
    pub protected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTree {
    pub root: UnitNode,
    pub design_name: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("unit `{unit}` declares child `{child}` but no such child is attached")]
    DanglingChild { unit: String, child: String },
    #[error("unit `{unit}` has child `{child}` that its body never declares")]
    OrphanChild { unit: String, child: String },
    #[error("unit name `{0}` appears more than once")]
    DuplicateUnitName(String),
    #[error("invalid unit name `{0}`")]
    InvalidName(String),
    #[error("body of `{unit}` does not parse: {error}")]
    Parse { unit: String, error: ParseError },
    #[error("body of `{0}` must be a bare fragment, not unit sections")]
    NotAFragment(String),
    #[error("tree document: {0}")]
    Document(String),
}

/// Parses a bare body fragment.
pub fn parse_fragment(unit: &str, source: &str) -> Result<Section, TreeError> {
    let p = parse(source).map_err(|error| TreeError::Parse {
        unit: unit.to_string(),
        error,
    })?;
    match <[Section; 1]>::try_from(p.sections) {
        Ok([s]) if s.header.is_none() => Ok(s),
        _ => Err(TreeError::NotAFragment(unit.to_string())),
    }
}

impl UnitNode {
    pub fn placeholder(decl: UnitDecl) -> Self {
        UnitNode {
            decl,
            body: UnitBody::Placeholder,
            children: Vec::new(),
            protected: false,
        }
    }

    /// A unit with `source` as its body and a placeholder for every child it declares.
    pub fn from_source(decl: UnitDecl, source: &str) -> Result<Self, TreeError> {
        let section = parse_fragment(&decl.name, source)?;
        let children = section.children().cloned().map(UnitNode::placeholder).collect();
        Ok(UnitNode {
            decl,
            body: UnitBody::Source(source.to_string()),
            children,
            protected: false,
        })
    }

    pub fn name(&self) -> &str {
        &self.decl.name
    }

    pub fn is_placeholder(&self) -> bool {
        self.body == UnitBody::Placeholder
    }

    /// Pre-order traversal in stored child order.
    pub fn nodes(&self) -> Vec<&UnitNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(UnitNode::size).sum::<usize>()
    }

    pub fn find(&self, name: &str) -> Option<&UnitNode> {
        if self.decl.name == name {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(name))
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut UnitNode> {
        if self.decl.name == name {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(name))
    }

    /// Name of the unit whose children include `name`.
    pub fn parent_of(&self, name: &str) -> Option<&UnitNode> {
        if self.children.iter().any(|c| c.decl.name == name) {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.parent_of(name))
    }

    /// Child interfaces declared by this unit's body.
    pub fn declared_children(&self) -> Result<Vec<UnitDecl>, TreeError> {
        match &self.body {
            UnitBody::Placeholder => Ok(Vec::new()),
            UnitBody::Source(src) => {
                Ok(parse_fragment(&self.decl.name, src)?.children().cloned().collect())
            }
        }
    }

    pub fn set_protected_all(&mut self, value: bool) {
        self.protected = value;
        for c in &mut self.children {
            c.set_protected_all(value);
        }
    }

    fn canonicalize(&mut self) {
        if let UnitBody::Source(src) = &self.body {
            if let Ok(section) = parse_fragment(&self.decl.name, src) {
                self.body = UnitBody::Source(section.to_string());
            }
        }
        self.protected = false;
        self.children.sort_by(|a, b| a.decl.name.cmp(&b.decl.name));
        for c in &mut self.children {
            c.canonicalize();
        }
    }
}

impl UnitTree {
    pub fn new(design_name: &str, root: UnitNode) -> Self {
        UnitTree {
            root,
            design_name: design_name.to_string(),
        }
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn find(&self, name: &str) -> Option<&UnitNode> {
        self.root.find(name)
    }

    pub fn unit_names(&self) -> Vec<&str> {
        self.root.nodes().into_iter().map(UnitNode::name).collect()
    }

    /// Checks that unit names are valid identifiers and unique in the tree.
    pub fn validate(&self) -> Result<(), TreeError> {
        let mut seen = HashSet::new();
        for n in self.root.nodes() {
            if !is_identifier(&n.decl.name) {
                return Err(TreeError::InvalidName(n.decl.name.clone()));
            }
            if !seen.insert(n.decl.name.as_str()) {
                return Err(TreeError::DuplicateUnitName(n.decl.name.clone()));
            }
        }
        Ok(())
    }

    /// Copy with siblings sorted, bodies in canonical print and protection cleared.
    pub fn canonical(&self) -> UnitTree {
        let mut t = self.clone();
        t.root.canonicalize();
        t
    }

    /// Structural identity (ignores design name, sibling order, whitespace, protection).
    pub fn same_structure(&self, other: &UnitTree) -> bool {
        self.canonical().root == other.canonical().root
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TreeDocument {
            schema_version: TREE_SCHEMA_VERSION,
            design_name: self.design_name.clone(),
            root: self.root.clone(),
        })
        .expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<UnitTree, TreeError> {
        let doc: TreeDocument =
            serde_json::from_str(text).map_err(|e| TreeError::Document(e.to_string()))?;
        if doc.schema_version != TREE_SCHEMA_VERSION {
            return Err(TreeError::Document(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        let tree = UnitTree {
            root: doc.root,
            design_name: doc.design_name,
        };
        tree.validate()?;
        Ok(tree)
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    schema_version: u32,
    design_name: String,
    root: UnitNode,
}

fn sorted_children(node: &UnitNode) -> Vec<&UnitNode> {
    let mut kids: Vec<&UnitNode> = node.children.iter().collect();
    kids.sort_by(|a, b| a.decl.name.cmp(&b.decl.name));
    kids
}

/// Flattens the tree into one program, entry unit first.
pub fn compose(tree: &UnitTree) -> Result<BlockProgram, TreeError> {
    tree.validate()?;
    let mut sections = Vec::with_capacity(tree.size());
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        let body = match &node.body {
            UnitBody::Placeholder => {
                if let Some(c) = node.children.first() {
                    return Err(TreeError::OrphanChild {
                        unit: node.decl.name.clone(),
                        child: c.decl.name.clone(),
                    });
                }
                SectionBody::Placeholder
            }
            UnitBody::Source(src) => {
                let section = parse_fragment(&node.decl.name, src)?;
                let declared: Vec<&str> = section.children().map(|c| c.name.as_str()).collect();
                for d in &declared {
                    if !node.children.iter().any(|c| c.decl.name == *d) {
                        return Err(TreeError::DanglingChild {
                            unit: node.decl.name.clone(),
                            child: d.to_string(),
                        });
                    }
                }
                for c in &node.children {
                    if !declared.contains(&c.decl.name.as_str()) {
                        return Err(TreeError::OrphanChild {
                            unit: node.decl.name.clone(),
                            child: c.decl.name.clone(),
                        });
                    }
                }
                section.body
            }
        };
        sections.push(Section {
            header: Some(SectionHeader {
                decl: node.decl.clone(),
                protected: node.protected,
            }),
            body,
        });
        stack.extend(sorted_children(node).into_iter().rev());
    }
    Ok(BlockProgram { sections })
}

/// Re-factorizes a composed program along its unit sections.
pub fn decompose(p: &BlockProgram, design_name: &str) -> Result<UnitTree, TreeError> {
    let first = &p.sections[0];
    if first.header.is_none() {
        let root = UnitNode {
            decl: UnitDecl::new(design_name),
            body: match &first.body {
                SectionBody::Placeholder => UnitBody::Placeholder,
                SectionBody::Statements(_) => UnitBody::Source(first.to_string()),
            },
            children: Vec::new(),
            protected: false,
        };
        let tree = UnitTree::new(design_name, root);
        compose(&tree)?;
        return Ok(tree);
    }
    let mut used = HashSet::new();
    let root = build_node(p, 0, &mut used)?;
    for s in &p.sections {
        let name = s.name().unwrap_or_default();
        if !used.contains(name) {
            return Err(TreeError::OrphanChild {
                unit: root.decl.name.clone(),
                child: name.to_string(),
            });
        }
    }
    Ok(UnitTree::new(design_name, root))
}

fn build_node(p: &BlockProgram, idx: usize, used: &mut HashSet<String>) -> Result<UnitNode, TreeError> {
    let section = &p.sections[idx];
    let header = section
        .header
        .as_ref()
        .ok_or_else(|| TreeError::NotAFragment("<anonymous>".into()))?;
    if !used.insert(header.decl.name.clone()) {
        return Err(TreeError::DuplicateUnitName(header.decl.name.clone()));
    }
    let mut children = Vec::new();
    for c in section.children() {
        let child_idx = p
            .sections
            .iter()
            .position(|s| s.name() == Some(c.name.as_str()))
            .ok_or_else(|| TreeError::DanglingChild {
                unit: header.decl.name.clone(),
                child: c.name.clone(),
            })?;
        children.push(build_node(p, child_idx, used)?);
    }
    let body = match &section.body {
        SectionBody::Placeholder => UnitBody::Placeholder,
        SectionBody::Statements(stmts) => UnitBody::Source(
            Section {
                header: None,
                body: SectionBody::Statements(stmts.clone()),
            }
            .to_string(),
        ),
    };
    Ok(UnitNode {
        decl: header.decl.clone(),
        body,
        children,
        protected: header.protected,
    })
}

/// Lowercase hex SHA-256 of the canonical tree.
pub fn canonical_hash(tree: &UnitTree) -> String {
    let canonical = tree.canonical();
    let json = serde_json::to_string(&canonical.root).expect("tree serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Occurrence count per unit name.
pub fn unit_bag(tree: &UnitTree) -> BTreeMap<String, usize> {
    let mut bag = BTreeMap::new();
    for n in tree.root.nodes() {
        *bag.entry(n.decl.name.clone()).or_insert(0) += 1;
    }
    bag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{evaluate, ParamStore};
    use crate::tensor::{NamedTensorMap, Tensor};

    fn leaf(name: &str, src: &str) -> UnitNode {
        UnitNode::from_source(UnitDecl::new(name), src).unwrap()
    }

    fn two_level() -> UnitTree {
        let mut root = leaf(
            "Root",
            "child Beta(X) -> (Y)\nchild Alpha(X) -> (Y)\na = call Alpha(X)\nb = call Beta(a)\nY = b\n",
        );
        root.children = vec![leaf("Beta", "t = tanh(X)\nY = t\n"), leaf("Alpha", "r = relu(X)\nY = r\n")];
        UnitTree::new("two", root)
    }

    #[test]
    fn identity_root_composes_to_identity() {
        let t = UnitTree::new("id", leaf("Id", "Y = X"));
        let p = compose(&t).unwrap();
        let x = Tensor::new(vec![1, 2, 1], vec![3.0, -1.0]).unwrap();
        let mut z = NamedTensorMap::new();
        z.insert("k".into(), x.clone());
        let out = evaluate(&p, &x, &z, &ParamStore::new()).unwrap();
        assert_eq!(out.y, x);
        assert_eq!(out.z, z);
    }

    #[test]
    fn placeholder_child_acts_as_identity() {
        let root = leaf("Root", "child Inner(X) -> (Y)\ni = call Inner(X)\nt = tanh(i)\nY = t\n");
        let t = UnitTree::new("r", root);
        let p = compose(&t).unwrap();
        let x = Tensor::new(vec![1, 1, 2], vec![0.3, -0.7]).unwrap();
        let out = evaluate(&p, &x, &NamedTensorMap::new(), &ParamStore::new()).unwrap();
        assert_eq!(out.y.data(), &[0.3f64.tanh(), (-0.7f64).tanh()]);
    }

    #[test]
    fn compose_orders_children_by_name() {
        let p = compose(&two_level()).unwrap();
        let names: Vec<_> = p.sections.iter().map(|s| s.name().unwrap()).collect();
        assert_eq!(names, ["Root", "Alpha", "Beta"]);
    }

    #[test]
    fn dangling_and_duplicate_names() {
        let mut t = two_level();
        t.root.children.pop();
        assert!(matches!(compose(&t), Err(TreeError::DanglingChild { child, .. }) if child == "Alpha"));
        let mut t = two_level();
        t.root.children[0].decl.name = "Alpha".into();
        assert!(matches!(compose(&t), Err(TreeError::DuplicateUnitName(n)) if n == "Alpha"));
    }

    #[test]
    fn hash_ignores_insertion_order_but_not_names() {
        let a = two_level();
        let mut b = two_level();
        b.root.children.reverse();
        b.root.body = UnitBody::Source(
            "child Beta(X) -> (Y)\nchild Alpha(X) -> (Y)\na   = call Alpha(X)  # same\nb = call Beta(a)\nY = b".into(),
        );
        assert_eq!(canonical_hash(&a), canonical_hash(&b));
        assert_eq!(canonical_hash(&a).len(), 64);
        let mut c = two_level();
        c.root.decl.name = "Root2".into();
        assert_ne!(canonical_hash(&a), canonical_hash(&c));
    }

    #[test]
    fn bag_counts_occurrences() {
        let t = UnitTree::new("a", leaf("A", "Y = X"));
        assert_eq!(unit_bag(&t), BTreeMap::from([("A".to_string(), 1)]));
        // Repeated names are rejected by validation but still counted.
        let mut root = leaf("A", "Y = X");
        root.children = vec![leaf("B", "Y = X"), leaf("B", "Y = X")];
        let t = UnitTree::new("a", root);
        assert_eq!(unit_bag(&t)["B"], 2);
        assert!(t.validate().is_err());
    }

    #[test]
    fn round_trip_through_program() {
        let t = two_level();
        let p = compose(&t).unwrap();
        let back = decompose(&p, "two").unwrap();
        assert!(back.same_structure(&t));
        let reparsed = parse(&p.to_string()).unwrap();
        assert_eq!(reparsed, p);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let t = two_level();
        let text = t.to_json();
        assert!(text.contains("\"schema_version\": 1"));
        assert_eq!(UnitTree::from_json(&text).unwrap(), t);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(UnitTree::from_json(&bumped).is_err());
    }
}

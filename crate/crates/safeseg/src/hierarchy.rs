//! Label taxonomies and tree distances between evaluation classes.
//!
//! A [`LabelHierarchy`] is a rooted tree of named label groups. A virtual root
//! (level 0) joins the level-1 groups; evaluation classes are the leaves, each
//! carrying a contiguous class index `0..K-1`. The severity of confusing class
//! `c` with class `s` is the *tree distance* `d(c, s)`: half the edge length of
//! the path between the two leaves. Distances are tabulated once into a
//! [`DistanceMatrix`] and shared read-only across workers.
//!
//! Leaves may sit at different levels, but all leaf levels must share the
//! parity of the deepest level `n` so that every leaf-to-leaf path has even
//! length and `d` stays integral. Since every leaf level is at most `n`, every
//! distance is at most `n` and the penalty weight `d(c, s) / n` stays in
//! `[0, 1]`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use thiserror::Error;

/// Errors from parsing or validating a hierarchy configuration.
#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("node `{node}` references undeclared parent `{parent}` (parents must be declared first)")]
    UnknownParent { node: String, parent: String },
    #[error("node `{node}` has level {level} but its parent `{parent}` has level {parent_level}")]
    LevelMismatch {
        node: String,
        level: u32,
        parent: String,
        parent_level: u32,
    },
    #[error("duplicate class index {0}")]
    DuplicateClassIndex(usize),
    #[error("class indices are not contiguous: expected 0..{expected}, missing {missing}")]
    NonContiguousClassIndices { expected: usize, missing: usize },
    #[error("declared levels {declared} does not match deepest node level {found}")]
    LevelsMismatch { declared: u32, found: u32 },
    #[error("leaf `{leaf}` at level {level} breaks depth parity: all leaf levels must be congruent to {n} (mod 2)")]
    LeafDepthParity { leaf: String, level: u32, n: u32 },
    #[error("internal node `{0}` has no children")]
    ChildlessInternal(String),
    #[error("hierarchy has no leaves")]
    Empty,
    #[error("unknown leaf `{0}`")]
    UnknownLeaf(String),
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndexOutOfRange { index: usize, classes: usize },
    #[error("distance self-check failed: d({a}, {b}) = {actual}, config declares {expected}")]
    DistanceCheckFailed {
        a: String,
        b: String,
        expected: u32,
        actual: u32,
    },
    #[error("no preset named `{0}` (expected one of: all-safe, tp, all, none)")]
    UnknownPreset(String),
    #[error("preset `tp` requires level-1 groups `living_things` and `vehicles` in the hierarchy")]
    PresetGroupsMissing,
}

#[derive(Debug, Clone)]
struct Node {
    id: String,
    display: String,
    level: u32,
    parent: Option<usize>,
    children: Vec<usize>,
    /// `Some((class_index, important_default))` when this node is a leaf.
    leaf: Option<(usize, bool)>,
}

/// Pinned distance assertion carried by a config file and verified at load time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceCheck {
    pub a: String,
    pub b: String,
    pub expected: u32,
}

/// A validated, immutable label taxonomy.
///
/// Construction happens through [`LabelHierarchy::parse`]; after that the
/// structure is read-only and can be shared freely between threads.
#[derive(Debug, Clone)]
pub struct LabelHierarchy {
    name: String,
    n_levels: u32,
    nodes: Vec<Node>,
    /// Leaf node index per class index: `leaves[class_index] -> nodes` slot.
    leaves: Vec<usize>,
    meta: Vec<(String, String)>,
    checks: Vec<DistanceCheck>,
    by_id: HashMap<String, usize>,
}

const ROOT: usize = 0;

impl LabelHierarchy {
    /// Parse a hierarchy configuration document.
    ///
    /// The format is line based. `#` starts a comment, blank lines are
    /// skipped, and statements are:
    ///
    /// ```text
    /// hierarchy <name>
    /// levels <n>
    /// meta <key> "<value>"
    /// node id=<ident> level=<k> parent=<ident> display="<text>"
    /// leaf id=<ident> level=<k> parent=<ident> index=<i> important=<bool> display="<text>"
    /// check distance <leaf-id> <leaf-id> <expected>
    /// ```
    ///
    /// Parents must be declared before their children; level-1 nodes use the
    /// reserved parent `root`. Every `check distance` statement is evaluated
    /// after validation and the whole document is rejected on mismatch.
    pub fn parse(text: &str) -> Result<Self, HierarchyError> {
        Parser::new(text).run()
    }

    /// Serialize back to the canonical configuration text.
    ///
    /// Parsing canonical text and serializing it again reproduces the input
    /// byte for byte; non-canonical input (extra whitespace, comments,
    /// reordered keys) is normalized.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "hierarchy {}", self.name);
        let _ = writeln!(out, "levels {}", self.n_levels);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {} {}", k, quote(v));
        }
        for node in self.nodes.iter().skip(1) {
            let parent = &self.nodes[node.parent.expect("non-root has parent")].id;
            match node.leaf {
                Some((index, important)) => {
                    let _ = writeln!(
                        out,
                        "leaf id={} level={} parent={} index={} important={} display={}",
                        node.id,
                        node.level,
                        parent,
                        index,
                        important,
                        quote(&node.display)
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "node id={} level={} parent={} display={}",
                        node.id,
                        node.level,
                        parent,
                        quote(&node.display)
                    );
                }
            }
        }
        for check in &self.checks {
            let _ = writeln!(out, "check distance {} {} {}", check.a, check.b, check.expected);
        }
        out
    }

    /// The built-in IDD 30-class, 4-level hierarchy.
    pub fn idd() -> &'static LabelHierarchy {
        static IDD: OnceLock<LabelHierarchy> = OnceLock::new();
        IDD.get_or_init(|| {
            LabelHierarchy::parse(idd_config_str()).expect("embedded IDD config is valid")
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of levels `n` (the deepest node level; the virtual root is level 0).
    pub fn n_levels(&self) -> u32 {
        self.n_levels
    }

    /// Number of evaluation classes `K`.
    pub fn num_classes(&self) -> usize {
        self.leaves.len()
    }

    /// Number of level-1 groups directly under the virtual root.
    pub fn level1_count(&self) -> usize {
        self.nodes[ROOT].children.len()
    }

    /// Identifier of the leaf with the given class index.
    pub fn class_id(&self, class: usize) -> &str {
        &self.nodes[self.leaves[class]].id
    }

    /// Display name of the leaf with the given class index.
    pub fn class_display(&self, class: usize) -> &str {
        &self.nodes[self.leaves[class]].display
    }

    /// Level of the leaf with the given class index.
    pub fn class_level(&self, class: usize) -> u32 {
        self.nodes[self.leaves[class]].level
    }

    /// Class index for a leaf identifier.
    pub fn class_index(&self, id: &str) -> Result<usize, HierarchyError> {
        self.by_id
            .get(id)
            .and_then(|&slot| self.nodes[slot].leaf)
            .map(|(index, _)| index)
            .ok_or_else(|| HierarchyError::UnknownLeaf(id.to_string()))
    }

    pub fn meta(&self) -> &[(String, String)] {
        &self.meta
    }

    pub fn checks(&self) -> &[DistanceCheck] {
        &self.checks
    }

    /// Tree distance between two classes: half the edge length of the
    /// leaf-to-leaf path, `(depth(c) + depth(s) - 2 * depth(lca)) / 2`.
    pub fn tree_distance(&self, c: usize, s: usize) -> Result<u32, HierarchyError> {
        let k = self.num_classes();
        if c >= k {
            return Err(HierarchyError::ClassIndexOutOfRange { index: c, classes: k });
        }
        if s >= k {
            return Err(HierarchyError::ClassIndexOutOfRange { index: s, classes: k });
        }
        Ok(self.leaf_distance(self.leaves[c], self.leaves[s]))
    }

    /// Tree distance between two classes named by leaf identifier.
    pub fn tree_distance_by_id(&self, a: &str, b: &str) -> Result<u32, HierarchyError> {
        let c = self.class_index(a)?;
        let s = self.class_index(b)?;
        self.tree_distance(c, s)
    }

    fn leaf_distance(&self, a: usize, b: usize) -> u32 {
        let depth_a = self.nodes[a].level;
        let depth_b = self.nodes[b].level;
        let lca = self.lca(a, b);
        let length = depth_a + depth_b - 2 * self.nodes[lca].level;
        debug_assert_eq!(length % 2, 0, "leaf depth parity is validated at parse time");
        length / 2
    }

    fn lca(&self, a: usize, b: usize) -> usize {
        let mut ancestors = Vec::with_capacity(self.n_levels as usize + 1);
        let mut cur = Some(a);
        while let Some(slot) = cur {
            ancestors.push(slot);
            cur = self.nodes[slot].parent;
        }
        let mut cur = b;
        loop {
            if ancestors.contains(&cur) {
                return cur;
            }
            match self.nodes[cur].parent {
                Some(p) => cur = p,
                None => return ROOT,
            }
        }
    }

    /// Class indices of all leaves in the subtree rooted at `group_id`.
    pub fn group_classes(&self, group_id: &str) -> Result<Vec<usize>, HierarchyError> {
        let &slot = self
            .by_id
            .get(group_id)
            .ok_or_else(|| HierarchyError::UnknownLeaf(group_id.to_string()))?;
        let mut classes = Vec::new();
        let mut stack = vec![slot];
        while let Some(cur) = stack.pop() {
            if let Some((index, _)) = self.nodes[cur].leaf {
                classes.push(index);
            }
            stack.extend(self.nodes[cur].children.iter().copied());
        }
        classes.sort_unstable();
        Ok(classes)
    }

    /// The default important-class set: leaves flagged `important=true`.
    pub fn important_default(&self) -> ImportantClassSet {
        let mut mask = vec![false; self.num_classes()];
        for (class, &slot) in self.leaves.iter().enumerate() {
            if let Some((_, important)) = self.nodes[slot].leaf {
                mask[class] = important;
            }
        }
        ImportantClassSet { mask }
    }

    /// Resolve a named important-class preset.
    ///
    /// `all-safe` is the flagged default, `tp` is the union of the
    /// `living_things` and `vehicles` groups, `all` is every class and `none`
    /// the empty set (under which the safe mean equals plain mIoU).
    pub fn important_preset(&self, name: &str) -> Result<ImportantClassSet, HierarchyError> {
        match name {
            "all-safe" | "default" => Ok(self.important_default()),
            "all" => Ok(ImportantClassSet::all(self.num_classes())),
            "none" | "empty" => Ok(ImportantClassSet::empty(self.num_classes())),
            "tp" => {
                let living = self
                    .group_classes("living_things")
                    .map_err(|_| HierarchyError::PresetGroupsMissing)?;
                let vehicles = self
                    .group_classes("vehicles")
                    .map_err(|_| HierarchyError::PresetGroupsMissing)?;
                ImportantClassSet::from_indices(
                    self.num_classes(),
                    living.iter().chain(vehicles.iter()).copied(),
                )
            }
            other => Err(HierarchyError::UnknownPreset(other.to_string())),
        }
    }
}

/// The embedded IDD configuration document, byte-identical to
/// `data/idd.cfg` in the crate source tree.
pub fn idd_config_str() -> &'static str {
    include_str!("../data/idd.cfg")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(ch),
        }
    }
    out.push('"');
    out
}

/// Precomputed pairwise tree distances between all `K` classes.
///
/// Symmetric with a zero diagonal; every entry is in `0..=n_levels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    k: usize,
    n_levels: u32,
    entries: Vec<u32>,
}

impl DistanceMatrix {
    pub fn from_hierarchy(h: &LabelHierarchy) -> Self {
        let k = h.num_classes();
        let mut entries = vec![0u32; k * k];
        for c in 0..k {
            for s in (c + 1)..k {
                let d = h
                    .tree_distance(c, s)
                    .expect("indices are in range by construction");
                entries[c * k + s] = d;
                entries[s * k + c] = d;
            }
        }
        DistanceMatrix {
            k,
            n_levels: h.n_levels(),
            entries,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn n_levels(&self) -> u32 {
        self.n_levels
    }

    pub fn get(&self, c: usize, s: usize) -> u32 {
        self.entries[c * self.k + s]
    }

    /// Penalty weight `d(c, s) / n`, always in `[0, 1]`.
    pub fn weight(&self, c: usize, s: usize) -> f64 {
        f64::from(self.get(c, s)) / f64::from(self.n_levels)
    }

    pub fn max_entry(&self) -> u32 {
        self.entries.iter().copied().max().unwrap_or(0)
    }
}

/// The subset of classes whose misprediction counts as safety critical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportantClassSet {
    mask: Vec<bool>,
}

impl ImportantClassSet {
    pub fn empty(k: usize) -> Self {
        ImportantClassSet { mask: vec![false; k] }
    }

    pub fn all(k: usize) -> Self {
        ImportantClassSet { mask: vec![true; k] }
    }

    pub fn from_indices(
        k: usize,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Self, HierarchyError> {
        let mut mask = vec![false; k];
        for index in indices {
            if index >= k {
                return Err(HierarchyError::ClassIndexOutOfRange { index, classes: k });
            }
            mask[index] = true;
        }
        Ok(ImportantClassSet { mask })
    }

    pub fn num_classes(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.mask.get(class).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn is_subset_of(&self, other: &ImportantClassSet) -> bool {
        self.mask.len() == other.mask.len()
            && self
                .mask
                .iter()
                .zip(&other.mask)
                .all(|(&a, &b)| !a || b)
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Parser<'a> {
    text: &'a str,
    name: Option<String>,
    declared_levels: Option<u32>,
    nodes: Vec<Node>,
    by_id: HashMap<String, usize>,
    meta: Vec<(String, String)>,
    checks: Vec<DistanceCheck>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let root = Node {
            id: "root".to_string(),
            display: "root".to_string(),
            level: 0,
            parent: None,
            children: Vec::new(),
            leaf: None,
        };
        let mut by_id = HashMap::new();
        by_id.insert("root".to_string(), ROOT);
        Parser {
            text,
            name: None,
            declared_levels: None,
            nodes: vec![root],
            by_id,
            meta: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn run(mut self) -> Result<LabelHierarchy, HierarchyError> {
        for (lineno, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.statement(lineno + 1, line)?;
        }
        self.finish()
    }

    fn statement(&mut self, line: usize, text: &str) -> Result<(), HierarchyError> {
        let err = |msg: String| HierarchyError::Parse { line, msg };
        let (keyword, rest) = split_word(text);
        match keyword {
            "hierarchy" => {
                self.name = Some(rest.trim().to_string());
                Ok(())
            }
            "levels" => {
                let n = rest
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| err(format!("invalid level count `{}`", rest.trim())))?;
                if n == 0 {
                    return Err(err("levels must be at least 1".to_string()));
                }
                self.declared_levels = Some(n);
                Ok(())
            }
            "meta" => {
                let (key, value) = split_word(rest.trim());
                let value = parse_quoted(value.trim())
                    .ok_or_else(|| err("meta value must be a quoted string".to_string()))?;
                self.meta.push((key.to_string(), value));
                Ok(())
            }
            "node" => self.node_statement(line, rest, false),
            "leaf" => self.node_statement(line, rest, true),
            "check" => {
                let mut words = rest.split_whitespace();
                match (words.next(), words.next(), words.next(), words.next(), words.next()) {
                    (Some("distance"), Some(a), Some(b), Some(d), None) => {
                        let expected = d
                            .parse::<u32>()
                            .map_err(|_| err(format!("invalid distance `{d}`")))?;
                        self.checks.push(DistanceCheck {
                            a: a.to_string(),
                            b: b.to_string(),
                            expected,
                        });
                        Ok(())
                    }
                    _ => Err(err("expected `check distance <leaf> <leaf> <value>`".to_string())),
                }
            }
            other => Err(err(format!("unknown statement `{other}`"))),
        }
    }

    fn node_statement(&mut self, line: usize, rest: &str, is_leaf: bool) -> Result<(), HierarchyError> {
        let err = |msg: String| HierarchyError::Parse { line, msg };
        let fields = parse_fields(rest).map_err(|msg| err(msg))?;
        let get = |key: &str| -> Result<&str, HierarchyError> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| err(format!("missing field `{key}`")))
        };

        let id = get("id")?.to_string();
        if !is_ident(&id) || id == "root" {
            return Err(err(format!("invalid node id `{id}`")));
        }
        let level = get("level")?
            .parse::<u32>()
            .map_err(|_| err("invalid level".to_string()))?;
        let parent_id = get("parent")?.to_string();
        let display = get("display")?.to_string();

        if self.by_id.contains_key(&id) {
            return Err(HierarchyError::DuplicateId(id));
        }
        let &parent = self
            .by_id
            .get(&parent_id)
            .ok_or_else(|| HierarchyError::UnknownParent {
                node: id.clone(),
                parent: parent_id.clone(),
            })?;
        let parent_level = self.nodes[parent].level;
        if level != parent_level + 1 {
            return Err(HierarchyError::LevelMismatch {
                node: id,
                level,
                parent: parent_id,
                parent_level,
            });
        }

        let leaf = if is_leaf {
            let index = get("index")?
                .parse::<usize>()
                .map_err(|_| err("invalid class index".to_string()))?;
            let important = match get("important")? {
                "true" => true,
                "false" => false,
                other => return Err(err(format!("invalid important flag `{other}`"))),
            };
            Some((index, important))
        } else {
            None
        };

        let slot = self.nodes.len();
        self.nodes.push(Node {
            id: id.clone(),
            display,
            level,
            parent: Some(parent),
            children: Vec::new(),
            leaf,
        });
        self.nodes[parent].children.push(slot);
        self.by_id.insert(id, slot);
        Ok(())
    }

    fn finish(self) -> Result<LabelHierarchy, HierarchyError> {
        let Parser {
            name,
            declared_levels,
            nodes,
            by_id,
            meta,
            checks,
            ..
        } = self;

        let mut leaf_slots: Vec<(usize, usize)> = Vec::new();
        let mut deepest = 0u32;
        for (slot, node) in nodes.iter().enumerate().skip(1) {
            deepest = deepest.max(node.level);
            match node.leaf {
                Some((index, _)) => leaf_slots.push((index, slot)),
                None => {
                    if node.children.is_empty() {
                        return Err(HierarchyError::ChildlessInternal(node.id.clone()));
                    }
                }
            }
        }
        if leaf_slots.is_empty() {
            return Err(HierarchyError::Empty);
        }

        let n_levels = declared_levels.unwrap_or(deepest);
        if n_levels != deepest {
            return Err(HierarchyError::LevelsMismatch {
                declared: n_levels,
                found: deepest,
            });
        }

        // Class indices must be a bijection onto 0..K-1.
        let k = leaf_slots.len();
        let mut leaves = vec![usize::MAX; k];
        for &(index, slot) in &leaf_slots {
            if index >= k {
                return Err(HierarchyError::NonContiguousClassIndices {
                    expected: k,
                    missing: leaves
                        .iter()
                        .position(|&s| s == usize::MAX)
                        .unwrap_or(index),
                });
            }
            if leaves[index] != usize::MAX {
                return Err(HierarchyError::DuplicateClassIndex(index));
            }
            leaves[index] = slot;
        }

        // Equal leaf-depth parity keeps every pairwise path length even.
        for &slot in &leaves {
            let node = &nodes[slot];
            if node.level % 2 != n_levels % 2 {
                return Err(HierarchyError::LeafDepthParity {
                    leaf: node.id.clone(),
                    level: node.level,
                    n: n_levels,
                });
            }
        }

        let hierarchy = LabelHierarchy {
            name: name.unwrap_or_else(|| "unnamed".to_string()),
            n_levels,
            nodes,
            leaves,
            meta,
            checks,
            by_id,
        };

        for check in &hierarchy.checks {
            let actual = hierarchy.tree_distance_by_id(&check.a, &check.b)?;
            if actual != check.expected {
                return Err(HierarchyError::DistanceCheckFailed {
                    a: check.a.clone(),
                    b: check.b.clone(),
                    expected: check.expected,
                    actual,
                });
            }
        }

        Ok(hierarchy)
    }
}

fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(pos) => (&s[..pos], &s[pos..]),
        None => (s, ""),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Parse `key=value` fields where `value` is either a bare token or a quoted
/// string with `\"` and `\\` escapes.
fn parse_fields(s: &str) -> Result<Vec<(String, String)>, String> {
    let mut fields = Vec::new();
    let mut chars = s.char_indices().peekable();
    loop {
        while matches!(chars.peek(), Some((_, c)) if c.is_whitespace()) {
            chars.next();
        }
        let Some(&(start, _)) = chars.peek() else {
            return Ok(fields);
        };
        let mut eq = None;
        for (i, c) in chars.by_ref() {
            if c == '=' {
                eq = Some(i);
                break;
            }
            if c.is_whitespace() {
                return Err(format!("expected `key=value`, found `{}`", &s[start..i]));
            }
        }
        let Some(eq) = eq else {
            return Err("expected `key=value`".to_string());
        };
        let key = s[start..eq].to_string();
        if key.is_empty() {
            return Err("empty field key".to_string());
        }
        match chars.peek() {
            Some(&(_, '"')) => {
                chars.next();
                let mut value = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '\\' => match chars.next() {
                            Some((_, next)) => value.push(next),
                            None => return Err("dangling escape in quoted value".to_string()),
                        },
                        '"' => {
                            closed = true;
                            break;
                        }
                        _ => value.push(c),
                    }
                }
                if !closed {
                    return Err("unterminated quoted value".to_string());
                }
                fields.push((key, value));
            }
            _ => {
                let vstart = eq + 1;
                let mut vend = s.len();
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_whitespace() {
                        vend = i;
                        break;
                    }
                    chars.next();
                }
                let value = &s[vstart..vend];
                if value.is_empty() {
                    return Err(format!("empty value for field `{key}`"));
                }
                fields.push((key, value.to_string()));
            }
        }
    }
}

fn parse_quoted(s: &str) -> Option<String> {
    let rest = s.strip_prefix('"')?;
    let mut value = String::new();
    let mut chars = rest.chars();
    loop {
        match chars.next()? {
            '\\' => value.push(chars.next()?),
            '"' => break,
            c => value.push(c),
        }
    }
    chars.next().is_none().then_some(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two level-1 groups with two leaves each; distances are 1 inside a
    /// group and 2 across groups.
    pub(crate) const FOUR_LEAF: &str = "\
hierarchy four_leaf
levels 2
node id=p1 level=1 parent=root display=\"P1\"
leaf id=a level=2 parent=p1 index=0 important=true display=\"a\"
leaf id=b level=2 parent=p1 index=1 important=false display=\"b\"
node id=p2 level=1 parent=root display=\"P2\"
leaf id=c level=2 parent=p2 index=2 important=false display=\"c\"
leaf id=d level=2 parent=p2 index=3 important=false display=\"d\"
";

    #[test]
    fn parses_four_leaf_fixture() {
        let h = LabelHierarchy::parse(FOUR_LEAF).unwrap();
        assert_eq!(h.num_classes(), 4);
        assert_eq!(h.n_levels(), 2);
        assert_eq!(h.level1_count(), 2);
        assert_eq!(h.class_id(0), "a");
        assert_eq!(h.class_index("d").unwrap(), 3);
    }

    #[test]
    fn four_leaf_distance_matrix() {
        let h = LabelHierarchy::parse(FOUR_LEAF).unwrap();
        let dm = DistanceMatrix::from_hierarchy(&h);
        let expected = [[0, 1, 2, 2], [1, 0, 2, 2], [2, 2, 0, 1], [2, 2, 1, 0]];
        for c in 0..4 {
            for s in 0..4 {
                assert_eq!(dm.get(c, s), expected[c][s], "d({c},{s})");
            }
        }
        assert_eq!(dm.max_entry(), 2);
    }

    #[test]
    fn single_leaf_chain() {
        let cfg = "\
hierarchy chain
levels 3
node id=l1 level=1 parent=root display=\"L1\"
node id=l2 level=2 parent=l1 display=\"L2\"
leaf id=only level=3 parent=l2 index=0 important=true display=\"Only\"
";
        let h = LabelHierarchy::parse(cfg).unwrap();
        assert_eq!(h.num_classes(), 1);
        let dm = DistanceMatrix::from_hierarchy(&h);
        assert_eq!(dm.get(0, 0), 0);
        assert_eq!(dm.max_entry(), 0);
    }

    #[test]
    fn idd_shape_and_fig_distances() {
        let h = LabelHierarchy::idd();
        assert_eq!(h.num_classes(), 30);
        assert_eq!(h.level1_count(), 7);
        assert_eq!(h.n_levels(), 4);
        assert_eq!(h.tree_distance_by_id("sidewalk", "motorcycle").unwrap(), 3);
        assert_eq!(h.tree_distance_by_id("person", "rider").unwrap(), 2);
        assert_eq!(h.tree_distance_by_id("truck", "bus").unwrap(), 1);
    }

    #[test]
    fn idd_max_distance_is_n() {
        let dm = DistanceMatrix::from_hierarchy(LabelHierarchy::idd());
        assert_eq!(dm.max_entry(), 4);
    }

    #[test]
    fn idd_roundtrip_is_bit_exact() {
        let h = LabelHierarchy::idd();
        assert_eq!(h.to_config_string(), idd_config_str());
    }

    #[test]
    fn idd_presets() {
        let h = LabelHierarchy::idd();
        assert_eq!(h.important_default().len(), 25);
        let tp = h.important_preset("tp").unwrap();
        assert_eq!(tp.len(), 10);
        assert!(tp.is_subset_of(&h.important_default()));
        assert!(h.important_preset("none").unwrap().is_empty());
        assert!(matches!(
            h.important_preset("bogus"),
            Err(HierarchyError::UnknownPreset(_))
        ));
    }

    #[test]
    fn rejects_duplicate_class_index() {
        let cfg = "\
hierarchy bad
levels 1
leaf id=a level=1 parent=root index=0 important=true display=\"a\"
leaf id=b level=1 parent=root index=0 important=true display=\"b\"
";
        assert!(matches!(
            LabelHierarchy::parse(cfg),
            Err(HierarchyError::DuplicateClassIndex(0))
        ));
    }

    #[test]
    fn rejects_level_gap() {
        let cfg = "\
hierarchy bad
levels 3
node id=g level=1 parent=root display=\"G\"
leaf id=a level=3 parent=g index=0 important=true display=\"a\"
";
        assert!(matches!(
            LabelHierarchy::parse(cfg),
            Err(HierarchyError::LevelMismatch { .. })
        ));
    }

    #[test]
    fn rejects_undeclared_parent() {
        let cfg = "\
hierarchy bad
levels 2
leaf id=a level=2 parent=ghost index=0 important=true display=\"a\"
";
        assert!(matches!(
            LabelHierarchy::parse(cfg),
            Err(HierarchyError::UnknownParent { .. })
        ));
    }

    #[test]
    fn rejects_mixed_leaf_parity() {
        let cfg = "\
hierarchy bad
levels 3
node id=g level=1 parent=root display=\"G\"
node id=m level=2 parent=g display=\"M\"
leaf id=deep level=3 parent=m index=0 important=true display=\"deep\"
leaf id=shallow level=2 parent=g index=1 important=true display=\"shallow\"
";
        assert!(matches!(
            LabelHierarchy::parse(cfg),
            Err(HierarchyError::LeafDepthParity { .. })
        ));
    }

    #[test]
    fn rejects_failing_distance_check() {
        let mut cfg = FOUR_LEAF.to_string();
        cfg.push_str("check distance a b 2\n");
        assert!(matches!(
            LabelHierarchy::parse(&cfg),
            Err(HierarchyError::DistanceCheckFailed { expected: 2, actual: 1, .. })
        ));
    }

    #[test]
    fn rejects_declared_levels_mismatch() {
        let cfg = "\
hierarchy bad
levels 4
node id=g level=1 parent=root display=\"G\"
leaf id=a level=2 parent=g index=0 important=true display=\"a\"
";
        assert!(matches!(
            LabelHierarchy::parse(cfg),
            Err(HierarchyError::LevelsMismatch { declared: 4, found: 2 })
        ));
    }

    #[test]
    fn distance_errors_on_unknown_leaf() {
        let h = LabelHierarchy::parse(FOUR_LEAF).unwrap();
        assert!(matches!(
            h.tree_distance_by_id("a", "nope"),
            Err(HierarchyError::UnknownLeaf(_))
        ));
        assert!(matches!(
            h.tree_distance(0, 9),
            Err(HierarchyError::ClassIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn tree_distance_is_symmetric_zero_diagonal() {
        let h = LabelHierarchy::idd();
        let k = h.num_classes();
        for c in 0..k {
            assert_eq!(h.tree_distance(c, c).unwrap(), 0);
            for s in 0..k {
                assert_eq!(
                    h.tree_distance(c, s).unwrap(),
                    h.tree_distance(s, c).unwrap()
                );
            }
        }
    }
}

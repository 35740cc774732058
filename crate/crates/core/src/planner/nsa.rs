//! Two-phase nested-semijoin plans.

use std::collections::BTreeSet;
use std::fmt;

use super::tree::JoinTree;
use super::PlanError;

/// `parent ⋉̂ child` on the shared flat attributes; the child's remaining
/// scheme becomes a new nested attribute of the parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemijoinStep {
    pub parent: usize,
    pub child: usize,
    pub shared: Vec<String>,
}

/// Semijoin steps in evaluation order, followed by a single flatten of the
/// root expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NsaPlan {
    pub tree: JoinTree,
    pub steps: Vec<SemijoinStep>,
}

impl NsaPlan {
    pub fn root(&self) -> usize {
        self.tree.root()
    }
}

impl fmt::Display for NsaPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                f,
                "{}: [{}] {} ⋉̂ [{}] {} on {{{}}}",
                i + 1,
                s.parent,
                self.tree.atom(s.parent),
                s.child,
                self.tree.atom(s.child),
                s.shared.join(",")
            )?;
        }
        writeln!(f, "{}: flatten [{}]", self.steps.len() + 1, self.root())
    }
}

/// Flat attributes of a node's expression: top level and everywhere nested.
struct SchemeAttrs {
    top: Vec<String>,
    all: BTreeSet<String>,
}

/// Compiles a join tree bottom-up: each node's child subtrees are compiled
/// first, then the node's atom is semijoined with them in child order.
pub fn compile_2nsa(tree: &JoinTree) -> Result<NsaPlan, PlanError> {
    let mut steps = Vec::with_capacity(tree.len().saturating_sub(1));
    compile_node(tree, tree.root(), &mut steps)?;
    Ok(NsaPlan {
        tree: tree.clone(),
        steps,
    })
}

fn compile_node(
    tree: &JoinTree,
    node: usize,
    steps: &mut Vec<SemijoinStep>,
) -> Result<SchemeAttrs, PlanError> {
    let children: Vec<(usize, SchemeAttrs)> = tree
        .children(node)
        .iter()
        .map(|&c| compile_node(tree, c, steps).map(|s| (c, s)))
        .collect::<Result<_, _>>()?;

    let top = tree.atom(node).attrs.clone();
    let mut all: BTreeSet<String> = top.iter().cloned().collect();
    for (child, child_scheme) in children {
        let shared: Vec<String> = top
            .iter()
            .filter(|a| child_scheme.top.contains(a))
            .cloned()
            .collect();
        // X ∪ Y must not repeat a flat attribute outside the join key.
        if let Some(clash) = child_scheme
            .all
            .iter()
            .find(|a| all.contains(*a) && !shared.contains(a))
        {
            return Err(PlanError::InvalidSchemeUnion {
                parent: node,
                child,
                attr: clash.clone(),
            });
        }
        all.extend(child_scheme.all);
        steps.push(SemijoinStep {
            parent: node,
            child,
            shared,
        });
    }
    Ok(SchemeAttrs { top, all })
}

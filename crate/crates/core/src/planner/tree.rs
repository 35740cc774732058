//! Join trees: GYO construction and rerooting.

use std::fmt;

use super::query::{Atom, JoinQuery};
use super::PlanError;

/// Rooted tree whose nodes are the query's atoms; node `i` is atom `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinTree {
    atoms: Vec<Atom>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl JoinTree {
    /// Builds a tree from explicit parent links. Child order is the order in
    /// which nodes are listed.
    pub fn from_parents(atoms: Vec<Atom>, parent: Vec<Option<usize>>) -> Result<Self, PlanError> {
        assert_eq!(atoms.len(), parent.len());
        let roots: Vec<usize> = (0..atoms.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(PlanError::InvalidTree(format!("{} roots", roots.len())));
        }
        let mut children = vec![Vec::new(); atoms.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= atoms.len() || p == i {
                    return Err(PlanError::InvalidTree(format!("bad parent for node {i}")));
                }
                children[p].push(i);
            }
        }
        let tree = JoinTree {
            atoms,
            parent,
            children,
            root: roots[0],
        };
        if tree.preorder().len() != tree.atoms.len() {
            return Err(PlanError::InvalidTree("parent links contain a cycle".into()));
        }
        if let Some(attr) = tree.connectedness_violation() {
            return Err(PlanError::InvalidTree(format!(
                "atoms containing `{attr}` are not connected"
            )));
        }
        Ok(tree)
    }

    /// Skips the connectedness check; used to exercise downstream guards.
    #[cfg(test)]
    pub(crate) fn unchecked(atoms: Vec<Atom>, parent: Vec<Option<usize>>) -> Self {
        let mut children = vec![Vec::new(); atoms.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(i);
            }
        }
        let root = parent.iter().position(Option::is_none).expect("a root");
        JoinTree { atoms, parent, children, root }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, node: usize) -> &Atom {
        &self.atoms[node]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Nodes in preorder, children visited in stored order.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.atoms.len());
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            if out.len() > self.atoms.len() {
                break;
            }
            out.push(n);
            stack.extend(self.children[n].iter().rev());
        }
        out
    }

    /// An attribute whose atoms do not form a connected subtree, if any.
    pub fn connectedness_violation(&self) -> Option<String> {
        let mut attrs: Vec<&String> = self.atoms.iter().flat_map(|a| &a.attrs).collect();
        attrs.sort();
        attrs.dedup();
        for attr in attrs {
            // The nodes mentioning `attr` are connected iff exactly one of
            // them has a parent that does not mention it.
            let tops = (0..self.atoms.len())
                .filter(|&n| self.atoms[n].mentions(attr))
                .filter(|&n| match self.parent[n] {
                    None => true,
                    Some(p) => !self.atoms[p].mentions(attr),
                })
                .count();
            if tops != 1 {
                return Some(attr.clone());
            }
        }
        None
    }

    /// Same undirected tree rooted at the first node (in preorder) that
    /// mentions `attr`. The new root's former parent becomes its last child;
    /// every other node keeps its child order.
    pub fn reroot(&self, attr: &str) -> Result<JoinTree, PlanError> {
        let target = self
            .preorder()
            .into_iter()
            .find(|&n| self.atoms[n].mentions(attr))
            .ok_or_else(|| PlanError::AttrNotInTree(attr.to_string()))?;
        Ok(self.reroot_at(target))
    }

    pub fn reroot_at(&self, target: usize) -> JoinTree {
        let mut parent = self.parent.clone();
        let mut children = self.children.clone();
        // Reverse the path from `target` up to the old root.
        let mut node = target;
        let mut new_parent = None;
        loop {
            let old_parent = self.parent[node];
            parent[node] = new_parent;
            if let Some(p) = old_parent {
                children[p].retain(|&c| c != node);
                children[node].push(p);
            }
            match old_parent {
                Some(p) => {
                    new_parent = Some(node);
                    node = p;
                }
                None => break,
            }
        }
        JoinTree {
            atoms: self.atoms.clone(),
            parent,
            children,
            root: target,
        }
    }

    fn fmt_node(&self, f: &mut fmt::Formatter<'_>, node: usize, depth: usize) -> fmt::Result {
        writeln!(f, "{}[{node}] {}", "  ".repeat(depth), self.atoms[node])?;
        for &c in &self.children[node] {
            self.fmt_node(f, c, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for JoinTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_node(f, self.root, 0)
    }
}

/// Builds a join tree by GYO ear removal, or reports the query cyclic.
///
/// An ear is an atom whose attributes shared with the other remaining atoms
/// are all contained in a single remaining atom, its witness. The ear is
/// removed and attached below the witness. Ears and witnesses are chosen by
/// lowest atom index; children keep their order of attachment.
pub fn gyo_reduce(q: &JoinQuery) -> Result<JoinTree, PlanError> {
    let n = q.atoms.len();
    let mut alive = vec![true; n];
    let mut parent = vec![None; n];
    let mut remaining = n;
    while remaining > 1 {
        let (ear, witness) = find_ear(&q.atoms, &alive).ok_or(PlanError::NotAcyclic)?;
        alive[ear] = false;
        parent[ear] = Some(witness);
        remaining -= 1;
    }
    JoinTree::from_parents(q.atoms.clone(), parent)
}

fn find_ear(atoms: &[Atom], alive: &[bool]) -> Option<(usize, usize)> {
    let live: Vec<usize> = (0..atoms.len()).filter(|&i| alive[i]).collect();
    for &e in &live {
        let shared: Vec<&String> = atoms[e]
            .attrs
            .iter()
            .filter(|a| live.iter().any(|&o| o != e && atoms[o].mentions(a)))
            .collect();
        if let Some(&w) = live
            .iter()
            .find(|&&w| w != e && shared.iter().all(|a| atoms[w].mentions(a)))
        {
            return Some((e, w));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::parse_query;

    fn contact_query() -> JoinQuery {
        parse_query(
            "Person(per1,age1,pool) Person(per2,age2,pool) \
             ContactProb(pool,age1,age2,prob) bern prob",
        )
        .unwrap()
    }

    #[test]
    fn contact_query_tree() {
        let t = gyo_reduce(&contact_query()).unwrap();
        assert_eq!(t.atom(t.root()).relation, "ContactProb");
        assert_eq!(t.children(t.root()), [0, 1]);
    }

    #[test]
    fn triangle_is_cyclic() {
        let q = parse_query("R(x,y) S(y,z) T(z,x)").unwrap();
        assert_eq!(gyo_reduce(&q), Err(PlanError::NotAcyclic));
    }

    #[test]
    fn single_atom() {
        let q = parse_query("R(x,y)").unwrap();
        let t = gyo_reduce(&q).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.root(), 0);
        assert_eq!(t.reroot("y").unwrap(), t);
    }

    #[test]
    fn reroot_examples() {
        let t = gyo_reduce(&contact_query()).unwrap();
        assert_eq!(t.reroot("prob").unwrap(), t);
        let r = t.reroot("per1").unwrap();
        assert_eq!(r.root(), 0);
        assert_eq!(r.atom(0).attrs[0], "per1");
        assert_eq!(r.children(0), [2]);
        assert_eq!(r.children(2), [1]);
        assert!(r.connectedness_violation().is_none());
        assert!(matches!(t.reroot("nope"), Err(PlanError::AttrNotInTree(_))));
    }

    #[test]
    fn figure_query_reroots_to_r() {
        let q = parse_query("R(x,y,p) S(u,a,x) T(v,y) bern p").unwrap();
        let t = gyo_reduce(&q).unwrap();
        let r = t.reroot("p").unwrap();
        assert_eq!(r.root(), 0);
        assert_eq!(r.children(0), [1, 2]);
    }

    #[test]
    fn disconnected_atoms_are_acyclic() {
        let q = parse_query("A(x) B(y)").unwrap();
        let t = gyo_reduce(&q).unwrap();
        assert_eq!(t.root(), 1);
        assert_eq!(t.children(1), [0]);
    }

    #[test]
    fn from_parents_rejects_disconnected_attribute() {
        let atoms = vec![Atom::new("A", &["x"]), Atom::new("B", &["y"]), Atom::new("C", &["x"])];
        let err = JoinTree::from_parents(atoms, vec![None, Some(0), Some(1)]).unwrap_err();
        assert!(matches!(err, PlanError::InvalidTree(_)));
    }
}

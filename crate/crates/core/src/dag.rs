//! Causal graphs over table columns, the set of privilege arrows leaving the
//! protected attribute, and the order in which PA-descendant features are
//! warped.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetTable, Role};
use crate::error::{Error, Result};

/// DAG document: `{"nodes": [...], "edges": [["A","X1"], ...], "pa": "A",
/// "target": "Y", "advantaged_level": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalDag {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub pa: String,
    pub target: String,
    #[serde(default = "default_level")]
    pub advantaged_level: f64,
}

fn default_level() -> f64 {
    1.0
}

impl CausalDag {
    pub fn new(nodes: &[&str], edges: &[(&str, &str)], pa: &str, target: &str) -> Self {
        CausalDag {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            pa: pa.into(),
            target: target.into(),
            advantaged_level: 1.0,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn parents(&self, node: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(_, c)| c == node)
            .map(|(p, _)| p.as_str())
            .collect()
    }
}

/// An arrow `pa -> feature`; `index` is its position in the arrow set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivilegeArrow {
    pub index: usize,
    pub feature: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivilegeArrowSet {
    pub pa: String,
    pub arrows: Vec<PrivilegeArrow>,
}

impl PrivilegeArrowSet {
    pub fn k(&self) -> usize {
        self.arrows.len()
    }
}

/// A DAG checked against a table. Holds resolved column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedDag {
    dag: CausalDag,
    column_of: HashMap<String, usize>,
    arrows: PrivilegeArrowSet,
    warp_order: Vec<String>,
    /// For each warp-order feature, the arrow it descends from.
    arrow_of: HashMap<String, usize>,
}

/// Structural checks that need no data: endpoints exist, PA and target are
/// nodes, no cycles, no partial warping.
fn check_structure(dag: &CausalDag) -> Result<()> {
    let nodes: BTreeSet<&str> = dag.nodes.iter().map(String::as_str).collect();
    if nodes.len() != dag.nodes.len() {
        return Err(Error::Graph("duplicate node names".into()));
    }
    for n in [&dag.pa, &dag.target] {
        if !nodes.contains(n.as_str()) {
            return Err(Error::Graph(format!("'{n}' is not a node")));
        }
    }
    if dag.pa == dag.target {
        return Err(Error::Graph("PA and target must differ".into()));
    }
    for (p, c) in &dag.edges {
        for end in [p, c] {
            if !nodes.contains(end.as_str()) {
                return Err(Error::Graph(format!("edge endpoint '{end}' is not a node")));
            }
        }
        if p == c {
            return Err(Error::Cycle(vec![p.clone(), c.clone()]));
        }
    }
    if let Some(cycle) = find_cycle(dag) {
        return Err(Error::Cycle(cycle));
    }
    if dag.edges.iter().any(|(p, _)| *p == dag.target) {
        return Err(Error::Graph(format!(
            "target '{}' must not have children",
            dag.target
        )));
    }
    Ok(())
}

fn children<'a>(dag: &'a CausalDag, node: &str) -> impl Iterator<Item = &'a str> + 'a {
    let node = node.to_owned();
    dag.edges
        .iter()
        .filter(move |(p, _)| *p == node)
        .map(|(_, c)| c.as_str())
}

fn find_cycle(dag: &CausalDag) -> Option<Vec<String>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit<'a>(
        dag: &'a CausalDag,
        n: &'a str,
        state: &mut HashMap<&'a str, u8>,
        stack: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        state.insert(n, 1);
        stack.push(n);
        for c in children(dag, n) {
            match state.get(c).copied().unwrap_or(0) {
                1 => {
                    let start = stack.iter().position(|s| *s == c).unwrap();
                    let mut cyc: Vec<String> =
                        stack[start..].iter().map(|s| s.to_string()).collect();
                    cyc.push(c.to_string());
                    return Some(cyc);
                }
                0 => {
                    if let Some(c) = visit(dag, c, state, stack) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        state.insert(n, 2);
        None
    }
    let mut state = HashMap::new();
    for n in &dag.nodes {
        if state.get(n.as_str()).copied().unwrap_or(0) == 0 {
            let mut stack = Vec::new();
            if let Some(c) = visit(dag, n, &mut state, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

fn descendants(dag: &CausalDag, start: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut todo = vec![start.to_owned()];
    while let Some(n) = todo.pop() {
        for c in children(dag, &n) {
            if out.insert(c.to_owned()) {
                todo.push(c.to_owned());
            }
        }
    }
    out
}

/// Confirms acyclicity, node/column agreement and that every PA-descendant
/// feature descends from exactly one privilege arrow.
pub fn validate(dag: &CausalDag, table: &DatasetTable) -> Result<ValidatedDag> {
    check_structure(dag)?;
    let mut column_of = HashMap::new();
    for n in &dag.nodes {
        let idx = table
            .column_index(n)
            .ok_or_else(|| Error::NodeWithoutColumn(n.clone()))?;
        column_of.insert(n.clone(), idx);
    }
    let cols = table.columns();
    if cols[column_of[&dag.pa]].role != Role::Pa {
        return Err(Error::Graph(format!(
            "graph PA '{}' is not the table's PA column '{}'",
            dag.pa,
            cols[table.pa_index()].name
        )));
    }
    if cols[column_of[&dag.target]].role != Role::Target {
        return Err(Error::Graph(format!(
            "graph target '{}' is not the table's target column '{}'",
            dag.target,
            cols[table.target_index()].name
        )));
    }

    let mut arrow_children: Vec<&str> = children(dag, &dag.pa)
        .filter(|c| *c != dag.target)
        .collect();
    arrow_children.sort_by_key(|c| column_of[*c]);
    arrow_children.dedup();
    let arrows = PrivilegeArrowSet {
        pa: dag.pa.clone(),
        arrows: arrow_children
            .iter()
            .enumerate()
            .map(|(index, f)| PrivilegeArrow {
                index,
                feature: f.to_string(),
            })
            .collect(),
    };

    let mut owners: HashMap<String, Vec<usize>> = HashMap::new();
    for a in &arrows.arrows {
        let mut d = descendants(dag, &a.feature);
        d.insert(a.feature.clone());
        d.remove(&dag.target);
        for f in d {
            owners.entry(f).or_default().push(a.index);
        }
    }
    let mut conflicts: Vec<(&String, &Vec<usize>)> =
        owners.iter().filter(|(_, a)| a.len() > 1).collect();
    conflicts.sort_by_key(|(f, _)| column_of[*f]);
    if let Some((feature, idx)) = conflicts.first() {
        return Err(Error::PartialWarping {
            feature: (*feature).clone(),
            arrows: idx
                .iter()
                .map(|&i| format!("{} -> {}", dag.pa, arrows.arrows[i].feature))
                .collect(),
        });
    }
    for f in owners.keys() {
        let role = cols[column_of[f]].role;
        if role != Role::Feature {
            return Err(Error::Graph(format!(
                "'{f}' descends from the PA but has role {role:?}; only feature columns can be warped"
            )));
        }
    }
    let arrow_of: HashMap<String, usize> = owners.into_iter().map(|(f, a)| (f, a[0])).collect();
    let warp_order = topo_order(dag, &arrow_of, &column_of);

    Ok(ValidatedDag {
        dag: dag.clone(),
        column_of,
        arrows,
        warp_order,
        arrow_of,
    })
}

/// Kahn's algorithm on the subgraph induced by `members`, ties broken by
/// column position.
fn topo_order(
    dag: &CausalDag,
    members: &HashMap<String, usize>,
    column_of: &HashMap<String, usize>,
) -> Vec<String> {
    let mut indeg: HashMap<&str, usize> = members.keys().map(|k| (k.as_str(), 0)).collect();
    for (p, c) in &dag.edges {
        if members.contains_key(p) && members.contains_key(c) {
            *indeg.get_mut(c.as_str()).unwrap() += 1;
        }
    }
    let mut ready: BTreeSet<(usize, &str)> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| (column_of[*n], *n))
        .collect();
    let mut order = Vec::with_capacity(members.len());
    while let Some(first) = ready.iter().next().copied() {
        ready.remove(&first);
        order.push(first.1.to_owned());
        for c in children(dag, first.1) {
            if let Some(d) = indeg.get_mut(c) {
                *d -= 1;
                if *d == 0 {
                    ready.insert((column_of[c], c));
                }
            }
        }
    }
    order
}

impl ValidatedDag {
    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn privilege_arrows(&self) -> &PrivilegeArrowSet {
        &self.arrows
    }

    pub fn k(&self) -> usize {
        self.arrows.k()
    }

    pub fn warp_order(&self) -> &[String] {
        &self.warp_order
    }

    /// Arrow index owning a warp-order feature.
    pub fn arrow_of(&self, feature: &str) -> Option<usize> {
        self.arrow_of.get(feature).copied()
    }

    pub fn column_of(&self, node: &str) -> Option<usize> {
        self.column_of.get(node).copied()
    }

    pub fn pa(&self) -> &str {
        &self.dag.pa
    }

    pub fn target(&self) -> &str {
        &self.dag.target
    }

    pub fn advantaged_level(&self) -> f64 {
        self.dag.advantaged_level
    }

    /// Parents of `node` sorted by column position.
    pub fn parents(&self, node: &str) -> Vec<String> {
        let mut p: Vec<String> = self
            .dag
            .parents(node)
            .into_iter()
            .map(str::to_owned)
            .collect();
        p.sort_by_key(|n| self.column_of[n]);
        p
    }
}

pub fn privilege_arrows(dag: &ValidatedDag) -> PrivilegeArrowSet {
    dag.privilege_arrows().clone()
}

pub fn warp_order(dag: &ValidatedDag) -> Vec<String> {
    dag.warp_order().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, ColumnSpec};

    fn table(cols: &[(&str, Role)]) -> DatasetTable {
        let specs: Vec<ColumnSpec> = cols
            .iter()
            .map(|(n, r)| {
                let kind = if matches!(r, Role::Pa | Role::Target) {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Numeric
                };
                ColumnSpec::new(*n, kind, *r)
            })
            .collect();
        let data = vec![vec![0.0, 1.0]; specs.len()];
        DatasetTable::from_columns(specs, data, 1.0).unwrap()
    }

    fn fig2() -> (CausalDag, DatasetTable) {
        let dag = CausalDag::new(
            &["A", "C", "X1", "X2", "Y"],
            &[
                ("C", "X1"),
                ("C", "X2"),
                ("X1", "Y"),
                ("X2", "Y"),
                ("A", "Y"),
                ("A", "X1"),
                ("A", "X2"),
            ],
            "A",
            "Y",
        );
        let t = table(&[
            ("A", Role::Pa),
            ("C", Role::Confounder),
            ("X1", Role::Feature),
            ("X2", Role::Feature),
            ("Y", Role::Target),
        ]);
        (dag, t)
    }

    #[test]
    fn example_graph_is_valid() {
        let (dag, t) = fig2();
        let v = validate(&dag, &t).unwrap();
        assert_eq!(v.k(), 2);
        let feats: Vec<&str> = v
            .privilege_arrows()
            .arrows
            .iter()
            .map(|a| a.feature.as_str())
            .collect();
        assert_eq!(feats, ["X1", "X2"]);
        assert_eq!(v.warp_order(), ["X1", "X2"]);
        assert_eq!(v.parents("X1"), ["A", "C"]);
    }

    #[test]
    fn cycle_detected() {
        let (mut dag, t) = fig2();
        dag.edges.push(("X1".into(), "A".into()));
        assert!(matches!(validate(&dag, &t), Err(Error::Cycle(_))));
    }

    #[test]
    fn partial_warping_rejected() {
        let dag = CausalDag::new(
            &["A", "X1", "X2", "Y"],
            &[
                ("A", "X1"),
                ("A", "X2"),
                ("X1", "X2"),
                ("X1", "Y"),
                ("X2", "Y"),
                ("A", "Y"),
            ],
            "A",
            "Y",
        );
        let t = table(&[
            ("A", Role::Pa),
            ("X1", Role::Feature),
            ("X2", Role::Feature),
            ("Y", Role::Target),
        ]);
        match validate(&dag, &t) {
            Err(Error::PartialWarping { feature, arrows }) => {
                assert_eq!(feature, "X2");
                assert_eq!(arrows.len(), 2);
            }
            other => panic!("expected partial warping error, got {other:?}"),
        }
    }

    #[test]
    fn node_without_column() {
        let (mut dag, t) = fig2();
        dag.nodes.push("Z".into());
        assert!(matches!(validate(&dag, &t), Err(Error::NodeWithoutColumn(n)) if n == "Z"));
    }

    #[test]
    fn mortgage_graph_has_three_arrows() {
        let dag = CausalDag::new(
            &["sex", "age", "race", "amount", "debt", "purpose", "action"],
            &[
                ("sex", "amount"),
                ("sex", "debt"),
                ("sex", "purpose"),
                ("age", "amount"),
                ("age", "debt"),
                ("age", "purpose"),
                ("amount", "action"),
                ("debt", "action"),
                ("purpose", "action"),
                ("race", "action"),
                ("race", "amount"),
                ("race", "debt"),
                ("race", "purpose"),
            ],
            "race",
            "action",
        );
        let t = table(&[
            ("sex", Role::Confounder),
            ("age", Role::Confounder),
            ("race", Role::Pa),
            ("amount", Role::Feature),
            ("debt", Role::Feature),
            ("purpose", Role::Feature),
            ("action", Role::Target),
        ]);
        let v = validate(&dag, &t).unwrap();
        let feats: Vec<&str> = v
            .privilege_arrows()
            .arrows
            .iter()
            .map(|a| a.feature.as_str())
            .collect();
        assert_eq!(feats, ["amount", "debt", "purpose"]);
    }

    #[test]
    fn direct_effect_only_has_no_arrows() {
        let dag = CausalDag::new(&["A", "X1", "Y"], &[("A", "Y"), ("X1", "Y")], "A", "Y");
        let t = table(&[("A", Role::Pa), ("X1", Role::Feature), ("Y", Role::Target)]);
        let v = validate(&dag, &t).unwrap();
        assert_eq!(v.k(), 0);
        assert!(v.warp_order().is_empty());
    }

    #[test]
    fn lawschool_warp_order() {
        let dag = CausalDag::new(
            &["race", "ugpa", "lsat", "pass_bar"],
            &[
                ("race", "ugpa"),
                ("race", "lsat"),
                ("ugpa", "pass_bar"),
                ("lsat", "pass_bar"),
                ("race", "pass_bar"),
            ],
            "race",
            "pass_bar",
        );
        let t = table(&[
            ("race", Role::Pa),
            ("ugpa", Role::Feature),
            ("lsat", Role::Feature),
            ("pass_bar", Role::Target),
        ]);
        assert_eq!(validate(&dag, &t).unwrap().warp_order(), ["ugpa", "lsat"]);
    }

    #[test]
    fn only_pa_descendants_are_warped() {
        // X2 is fed by C only, so it is not touched.
        let dag = CausalDag::new(
            &["A", "C", "X1", "X2", "Y"],
            &[("A", "X1"), ("X1", "Y"), ("C", "X2"), ("X2", "Y")],
            "A",
            "Y",
        );
        let t = table(&[
            ("A", Role::Pa),
            ("C", Role::Confounder),
            ("X1", Role::Feature),
            ("X2", Role::Feature),
            ("Y", Role::Target),
        ]);
        assert_eq!(validate(&dag, &t).unwrap().warp_order(), ["X1"]);
    }

    #[test]
    fn chain_descendants_follow_parents() {
        // X2 sits below X1 and is warped with arrow A -> X1.
        let dag = CausalDag::new(
            &["A", "X2", "X1", "Y"],
            &[("A", "X1"), ("X1", "X2"), ("X2", "Y")],
            "A",
            "Y",
        );
        let t = table(&[
            ("A", Role::Pa),
            ("X2", Role::Feature),
            ("X1", Role::Feature),
            ("Y", Role::Target),
        ]);
        let v = validate(&dag, &t).unwrap();
        assert_eq!(v.warp_order(), ["X1", "X2"]);
        assert_eq!(v.arrow_of("X2"), Some(0));
    }

    #[test]
    fn json_document() {
        let json = r#"{"nodes":["A","X1","Y"],"edges":[["A","X1"],["X1","Y"]],"pa":"A","target":"Y","advantaged_level":1}"#;
        let d = CausalDag::from_json(json).unwrap();
        assert_eq!(d.edges[0], ("A".to_string(), "X1".to_string()));
        assert_eq!(d.advantaged_level, 1.0);
    }

    use proptest::prelude::*;

    proptest! {
        // Random DAGs over a fixed column order: edges only go forward, so
        // the graph is acyclic. Checks the warp-order and arrow-count
        // invariants whenever validation succeeds.
        #[test]
        fn warp_order_respects_parents(mask in prop::collection::vec(any::<bool>(), 15)) {
            let names = ["A", "F1", "F2", "F3", "F4", "Y"];
            let mut edges = Vec::new();
            let mut m = mask.iter();
            for i in 0..names.len() {
                for j in (i + 1)..names.len() {
                    if *m.next().unwrap() {
                        edges.push((names[i], names[j]));
                    }
                }
            }
            let dag = CausalDag::new(&names, &edges, "A", "Y");
            let t = table(&[
                ("A", Role::Pa), ("F1", Role::Feature), ("F2", Role::Feature),
                ("F3", Role::Feature), ("F4", Role::Feature), ("Y", Role::Target),
            ]);
            if let Ok(v) = validate(&dag, &t) {
                let order = v.warp_order();
                for (pos, f) in order.iter().enumerate() {
                    for p in v.parents(f) {
                        if let Some(pp) = order.iter().position(|o| *o == p) {
                            prop_assert!(pp < pos);
                        }
                    }
                }
                let out_of_pa = edges.iter().filter(|(p, _)| *p == "A").count();
                let direct = edges.contains(&("A", "Y")) as usize;
                prop_assert_eq!(v.k(), out_of_pa - direct);
            }
        }
    }
}

//! Cutting a forward graph into blocks at 1-separators, and recognising
//! identical blocks.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::model::{CDGraph, ForwardGraph, ForwardNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("forward graph is not weakly connected")]
    DisconnectedInput,
}

/// Separator node ids in topological order.
pub type SeparatorList = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockClass {
    pub class_id: usize,
    pub representative: usize,
    pub members: Vec<usize>,
    /// Per member: original id -> anonymized id.
    pub anonymization: Vec<Vec<(String, String)>>,
}

fn undirected(g: &ForwardGraph) -> Vec<Vec<usize>> {
    let ix: HashMap<&str, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut adj = vec![Vec::new(); g.nodes.len()];
    for (i, n) in g.nodes.iter().enumerate() {
        for p in &n.predecessors {
            if let Some(&j) = ix.get(p.as_str()) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

/// Number of nodes reachable from `start` while treating `removed` as absent.
fn reach(adj: &[Vec<usize>], start: usize, removed: &[bool]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut q = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = q.pop_front() {
        for &w in &adj[v] {
            if !seen[w] && !removed[w] {
                seen[w] = true;
                q.push_back(w);
            }
        }
    }
    seen
}

/// Internal nodes whose removal disconnects the undirected view of `g`.
pub fn find_separators(g: &ForwardGraph) -> Result<SeparatorList, PartitionError> {
    let n = g.nodes.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let adj = undirected(g);
    let none = vec![false; n];
    if reach(&adj, 0, &none).iter().any(|&s| !s) {
        return Err(PartitionError::DisconnectedInput);
    }
    let mut seps = Vec::new();
    for v in 0..n {
        let id = &g.nodes[v].id;
        if g.input_ids.contains(id) || *id == g.output_id {
            continue;
        }
        let mut removed = vec![false; n];
        removed[v] = true;
        let start = if v == 0 { 1 } else { 0 };
        let seen = reach(&adj, start, &removed);
        if (0..n).any(|w| w != v && !seen[w]) {
            seps.push(id.clone());
        }
    }
    Ok(seps)
}

/// `true` if `to` is reachable from `from` along directed edges.
fn descendants(g: &ForwardGraph, from: usize) -> Vec<bool> {
    let ix: HashMap<&str, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut succ = vec![Vec::new(); g.nodes.len()];
    for (i, n) in g.nodes.iter().enumerate() {
        for p in &n.predecessors {
            if let Some(&j) = ix.get(p.as_str()) {
                succ[j].push(i);
            }
        }
    }
    let mut seen = vec![false; g.nodes.len()];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for &w in &succ[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Splits `g` at `seps`. Each separator is the output of one block and the
/// input of the next. Non-separator nodes are assigned through the
/// components left after removing every separator.
pub fn cut_into_blocks(g: &ForwardGraph, seps: &[String]) -> Vec<ForwardGraph> {
    if seps.is_empty() {
        return vec![g.clone()];
    }
    let n = g.nodes.len();
    let pos: Vec<usize> = seps.iter().filter_map(|s| g.index_of(s)).collect();
    let sep_rank: HashMap<usize, usize> = pos.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let adj = undirected(g);
    let mut is_sep = vec![false; n];
    for &p in &pos {
        is_sep[p] = true;
    }
    let mut block_of = vec![usize::MAX; n];
    for v in 0..n {
        if is_sep[v] || block_of[v] != usize::MAX {
            continue;
        }
        let comp = reach(&adj, v, &is_sep);
        let mut touching: Vec<usize> = (0..n)
            .filter(|&w| comp[w] && !is_sep[w])
            .flat_map(|w| adj[w].iter().copied())
            .filter(|w| is_sep[*w])
            .map(|w| sep_rank[&w])
            .collect();
        touching.sort_unstable();
        touching.dedup();
        let block = match touching.as_slice() {
            [] => 0,
            [k] => {
                let below = descendants(g, pos[*k]);
                if (0..n).any(|w| comp[w] && !is_sep[w] && below[w]) {
                    k + 1
                } else {
                    *k
                }
            }
            ks => *ks.last().unwrap(),
        };
        for w in 0..n {
            if comp[w] && !is_sep[w] {
                block_of[w] = block;
            }
        }
    }
    let nblocks = pos.len() + 1;
    let mut out = Vec::with_capacity(nblocks);
    for k in 0..nblocks {
        let member = |v: usize| {
            if is_sep[v] {
                let r = sep_rank[&v];
                r + 1 == k || r == k
            } else {
                block_of[v] == k
            }
        };
        let ids: Vec<&str> = (0..n).filter(|&v| member(v)).map(|v| g.nodes[v].id.as_str()).collect();
        let nodes: Vec<ForwardNode> = (0..n)
            .filter(|&v| member(v))
            .map(|v| {
                let mut node = g.nodes[v].clone();
                if k > 0 && is_sep[v] && sep_rank[&v] + 1 == k {
                    node.predecessors.clear();
                } else {
                    node.predecessors.retain(|p| ids.contains(&p.as_str()));
                }
                node
            })
            .collect();
        let input_ids = if k == 0 {
            g.input_ids.clone()
        } else {
            vec![g.nodes[pos[k - 1]].id.clone()]
        };
        let output_id = if k + 1 == nblocks {
            g.output_id.clone()
        } else {
            g.nodes[pos[k]].id.clone()
        };
        out.push(ForwardGraph {
            nodes,
            input_ids,
            output_id,
        });
    }
    out
}

fn anonymize_params(sig: &str, names: &mut HashMap<String, String>) -> String {
    if sig.is_empty() {
        return String::new();
    }
    sig.split(';')
        .map(|entry| {
            let (name, rest) = match entry.split_once(':') {
                Some((n, r)) => (n, Some(r)),
                None => (entry, None),
            };
            let next = names.len() + 1;
            let anon = names.entry(name.to_string()).or_insert_with(|| format!("p{next}"));
            match rest {
                Some(r) => format!("{anon}:{r}"),
                None => anon.clone(),
            }
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Anonymization map (original id -> new id) used by [`anonymize`].
pub fn anonymization_map(b: &ForwardGraph) -> Vec<(String, String)> {
    b.nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), (i + 1).to_string()))
        .collect()
}

/// Renames nodes to `1..=n` by position and parameters to `p1, p2, ...`
/// by first occurrence. Parameter signatures are `;`-separated
/// `name:type` entries; only the name part is rewritten.
pub fn anonymize(b: &ForwardGraph) -> ForwardGraph {
    let map: HashMap<String, String> = anonymization_map(b).into_iter().collect();
    let rename = |id: &String| map.get(id).cloned().unwrap_or_else(|| id.clone());
    let mut params = HashMap::new();
    let nodes = b
        .nodes
        .iter()
        .map(|n| ForwardNode {
            id: rename(&n.id),
            op_signature: n.op_signature.clone(),
            output_shape: n.output_shape.clone(),
            param_signature: anonymize_params(&n.param_signature, &mut params),
            predecessors: n.predecessors.iter().map(rename).collect(),
        })
        .collect();
    ForwardGraph {
        nodes,
        input_ids: b.input_ids.iter().map(rename).collect(),
        output_id: rename(&b.output_id),
    }
}

/// Node-by-node comparison of two anonymized blocks along their shared order.
pub fn blocks_equal(b1: &ForwardGraph, b2: &ForwardGraph) -> bool {
    b1.nodes.len() == b2.nodes.len()
        && b1.input_ids == b2.input_ids
        && b1.output_id == b2.output_id
        && b1.nodes.iter().zip(&b2.nodes).all(|(x, y)| {
            x.id == y.id
                && x.op_signature == y.op_signature
                && x.output_shape == y.output_shape
                && x.param_signature == y.param_signature
                && x.predecessors == y.predecessors
        })
}

/// Partitions block indices into classes of identical blocks, ordered by
/// first member.
pub fn group_identical(blocks: &[ForwardGraph]) -> Vec<BlockClass> {
    let anon: Vec<ForwardGraph> = blocks.iter().map(anonymize).collect();
    let mut classes: Vec<BlockClass> = Vec::new();
    for (i, a) in anon.iter().enumerate() {
        let map = anonymization_map(&blocks[i]);
        match classes.iter_mut().find(|c| blocks_equal(&anon[c.representative], a)) {
            Some(c) => {
                c.members.push(i);
                c.anonymization.push(map);
            }
            None => classes.push(BlockClass {
                class_id: classes.len(),
                representative: i,
                members: vec![i],
                anonymization: vec![map],
            }),
        }
    }
    classes
}

/// Per-block class index derived from [`group_identical`].
pub fn class_indices(classes: &[BlockClass], nblocks: usize) -> Vec<usize> {
    let mut v = vec![0; nblocks];
    for c in classes {
        for &m in &c.members {
            v[m] = c.class_id;
        }
    }
    v
}

/// Structural identity of two compute/data graphs, ignoring node names.
pub fn cdgraphs_equal(a: &CDGraph, b: &CDGraph) -> bool {
    a.cnodes.len() == b.cnodes.len()
        && a.dnodes.len() == b.dnodes.len()
        && a.input_data == b.input_data
        && a.output_data == b.output_data
        && a.input_grad == b.input_grad
        && a.loss_index == b.loss_index
        && a.cnodes.iter().zip(&b.cnodes).all(|(x, y)| {
            x.kind == y.kind && x.time == y.time && x.tmp_mem == y.tmp_mem && x.deps == y.deps && x.outputs == y.outputs
        })
        && a
            .dnodes
            .iter()
            .zip(&b.dnodes)
            .all(|(x, y)| x.size == y.size && x.kind == y.kind && x.parents == y.parents)
}

/// Class index per block, numbered by first occurrence, grouping blocks
/// that [`cdgraphs_equal`] considers identical.
pub fn infer_classes(blocks: &[CDGraph]) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    blocks
        .iter()
        .enumerate()
        .map(|(i, b)| match reps.iter().position(|&r| cdgraphs_equal(&blocks[r], b)) {
            Some(c) => c,
            None => {
                reps.push(i);
                reps.len() - 1
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(id: &str, op: &str, shape: &[u64], params: &str, preds: &[&str]) -> ForwardNode {
        ForwardNode {
            id: id.into(),
            op_signature: op.into(),
            output_shape: shape.to_vec(),
            param_signature: params.into(),
            predecessors: preds.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn graph(nodes: Vec<ForwardNode>, input: &str, output: &str) -> ForwardGraph {
        ForwardGraph {
            nodes,
            input_ids: vec![input.into()],
            output_id: output.into(),
        }
    }

    fn path() -> ForwardGraph {
        graph(
            vec![node("a", "in", &[1], "", &[]), node("b", "relu", &[1], "", &["a"]), node("c", "relu", &[1], "", &["b"])],
            "a",
            "c",
        )
    }

    fn diamond() -> ForwardGraph {
        graph(
            vec![
                node("a", "in", &[1], "", &[]),
                node("b", "l", &[1], "", &["a"]),
                node("c", "l", &[1], "", &["a"]),
                node("d", "add", &[1], "", &["b", "c"]),
                node("e", "relu", &[1], "", &["d"]),
            ],
            "a",
            "e",
        )
    }

    /// Exhaustive oracle: remove each node, test connectivity with a
    /// plain union-find.
    fn brute_separators(g: &ForwardGraph) -> Vec<String> {
        let n = g.nodes.len();
        let mut out = Vec::new();
        for v in 0..n {
            let id = &g.nodes[v].id;
            if g.input_ids.contains(id) || *id == g.output_id {
                continue;
            }
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(p: &mut Vec<usize>, x: usize) -> usize {
                if p[x] != x {
                    let r = find(p, p[x]);
                    p[x] = r;
                }
                p[x]
            }
            for (i, nd) in g.nodes.iter().enumerate() {
                for pr in &nd.predecessors {
                    let j = g.index_of(pr).unwrap();
                    if i != v && j != v {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        parent[a] = b;
                    }
                }
            }
            let roots: std::collections::HashSet<usize> =
                (0..n).filter(|&w| w != v).map(|w| find(&mut parent, w)).collect();
            if roots.len() > 1 {
                out.push(id.clone());
            }
        }
        out
    }

    #[test]
    fn path_has_middle_separator() {
        assert_eq!(find_separators(&path()).unwrap(), vec!["b"]);
    }

    #[test]
    fn diamond_separator_matches_exhaustive_removal() {
        let g = diamond();
        assert_eq!(brute_separators(&g), vec!["d"]);
        assert_eq!(find_separators(&g).unwrap(), vec!["d"]);
    }

    #[test]
    fn single_edge_has_no_separator() {
        let g = graph(vec![node("a", "in", &[1], "", &[]), node("b", "relu", &[1], "", &["a"])], "a", "b");
        assert!(find_separators(&g).unwrap().is_empty());
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = ForwardGraph {
            nodes: vec![node("a", "in", &[1], "", &[]), node("b", "in", &[1], "", &[])],
            input_ids: vec!["a".into()],
            output_id: "b".into(),
        };
        assert_eq!(find_separators(&g), Err(PartitionError::DisconnectedInput));
    }

    fn ids(b: &ForwardGraph) -> Vec<&str> {
        b.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    #[test]
    fn cut_path() {
        let g = path();
        let blocks = cut_into_blocks(&g, &find_separators(&g).unwrap());
        assert_eq!(blocks.iter().map(ids).collect::<Vec<_>>(), vec![vec!["a", "b"], vec!["b", "c"]]);
        assert_eq!(blocks[0].output_id, "b");
        assert_eq!(blocks[1].input_ids, vec!["b"]);
    }

    #[test]
    fn cut_diamond() {
        let g = diamond();
        let blocks = cut_into_blocks(&g, &find_separators(&g).unwrap());
        assert_eq!(
            blocks.iter().map(ids).collect::<Vec<_>>(),
            vec![vec!["a", "b", "c", "d"], vec!["d", "e"]]
        );
    }

    #[test]
    fn no_separators_single_block() {
        let g = diamond();
        assert_eq!(cut_into_blocks(&g, &[]), vec![g]);
    }

    #[test]
    fn side_input_joins_the_block_it_feeds() {
        // i2 is listed early but only feeds e, after separator d.
        let g = ForwardGraph {
            nodes: vec![
                node("a", "in", &[1], "", &[]),
                node("i2", "in", &[1], "", &[]),
                node("b", "l", &[1], "", &["a"]),
                node("d", "l", &[1], "", &["b"]),
                node("e", "add", &[1], "", &["d", "i2"]),
            ],
            input_ids: vec!["a".into(), "i2".into()],
            output_id: "e".into(),
        };
        let seps = find_separators(&g).unwrap();
        assert_eq!(seps, vec!["b", "d"]);
        let blocks = cut_into_blocks(&g, &seps);
        assert_eq!(ids(&blocks[2]), vec!["i2", "d", "e"]);
    }

    #[test]
    fn anonymize_renames_by_position() {
        let b = graph(vec![node("x7", "in", &[2], "w:f32[2]", &[]), node("x9", "relu", &[2], "", &["x7"])], "x7", "x9");
        let a = anonymize(&b);
        assert_eq!(ids(&a), vec!["1", "2"]);
        assert_eq!(a.nodes[1].predecessors, vec!["1"]);
        assert_eq!(a.nodes[0].param_signature, "p1:f32[2]");
        assert_eq!(anonymize(&a), a);
    }

    fn linear_relu(prefix: &str, width: u64, param: &str) -> ForwardGraph {
        let i = format!("{prefix}_in");
        let l = format!("{prefix}_lin");
        let r = format!("{prefix}_relu");
        graph(
            vec![
                node(&i, "in", &[width], "", &[]),
                node(&l, "linear", &[width], &format!("{param}:f32[{width}]"), &[&i]),
                node(&r, "relu", &[width], "", &[&l]),
            ],
            &i,
            &r,
        )
    }

    #[test]
    fn identical_blocks_with_different_names_compare_equal() {
        let a = anonymize(&linear_relu("u", 512, "w0"));
        let b = anonymize(&linear_relu("v", 512, "w1"));
        assert!(blocks_equal(&a, &b));
    }

    #[test]
    fn shape_difference_breaks_equality() {
        let a = anonymize(&linear_relu("u", 512, "w"));
        let b = anonymize(&linear_relu("u", 1024, "w"));
        assert!(!blocks_equal(&a, &b));
    }

    #[test]
    fn wiring_difference_breaks_equality() {
        let mk = |pred_of_c: &str| {
            graph(
                vec![
                    node("a", "in", &[1], "", &[]),
                    node("b", "relu", &[1], "", &["a"]),
                    node("c", "relu", &[1], "", &[pred_of_c]),
                ],
                "a",
                "c",
            )
        };
        let x = anonymize(&mk("b"));
        let y = anonymize(&mk("a"));
        assert!(!blocks_equal(&x, &y));
    }

    #[test]
    fn alternating_blocks_form_two_classes() {
        let blocks: Vec<ForwardGraph> = (0..6)
            .map(|k| linear_relu(&format!("b{k}"), if k % 2 == 0 { 8 } else { 16 }, "w"))
            .collect();
        let classes = group_identical(&blocks);
        assert_eq!(classes.len(), 2);
        assert_eq!(classes[0].members, vec![0, 2, 4]);
        assert_eq!(classes[1].members, vec![1, 3, 5]);
        assert_eq!(class_indices(&classes, 6), vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn distinct_blocks_are_singletons() {
        let blocks: Vec<ForwardGraph> = (1..=4).map(|k| linear_relu("b", k, "w")).collect();
        assert_eq!(group_identical(&blocks).len(), 4);
    }
}

//! Pathology label hierarchy: ancestor-closure expansion and consistency.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The 13 built-in pathology labels, in canonical order.
pub const DEFAULT_LABELS: [&str; 13] = [
    "Pneumonia",
    "ViralPneumonia",
    "BacterialPneumonia",
    "FungalPneumonia",
    "COVID19",
    "SARS",
    "Streptococcus",
    "Klebsiella",
    "Chlamydophila",
    "Legionella",
    "Pneumocystis",
    "ARDS",
    "NoFinding",
];

/// Maximum number of labels a [`LabelSet`] bitset can hold.
pub const MAX_LABELS: usize = 64;

/// An is-a forest over an ordered label list.
///
/// Each label has at most one parent; `NoFinding`, when present, is mutually
/// exclusive with every other label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGraph {
    labels: Vec<String>,
    parent: Vec<Option<usize>>,
    index: HashMap<String, usize>,
    no_finding: Option<usize>,
}

/// A set of labels as a bitset over a [`LabelGraph`]'s label list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet {
    bits: u64,
}

/// One consistency violation reported by [`LabelGraph::check_consistency`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// `child` is present but its parent is not.
    MissingParent { child: usize, parent: usize },
    /// `NoFinding` is present together with a pathology label.
    NoFindingConflict { other: usize },
}

impl LabelGraph {
    /// The built-in 13-label pathology hierarchy.
    ///
    /// Viral, bacterial and fungal pneumonia are sub-types of pneumonia;
    /// COVID-19 and SARS of viral pneumonia; Streptococcus, Klebsiella,
    /// Chlamydophila and Legionella of bacterial pneumonia; Pneumocystis of
    /// fungal pneumonia. ARDS and NoFinding stand alone.
    pub fn default_pathology() -> Self {
        let edges = [
            ("ViralPneumonia", "Pneumonia"),
            ("BacterialPneumonia", "Pneumonia"),
            ("FungalPneumonia", "Pneumonia"),
            ("COVID19", "ViralPneumonia"),
            ("SARS", "ViralPneumonia"),
            ("Streptococcus", "BacterialPneumonia"),
            ("Klebsiella", "BacterialPneumonia"),
            ("Chlamydophila", "BacterialPneumonia"),
            ("Legionella", "BacterialPneumonia"),
            ("Pneumocystis", "FungalPneumonia"),
        ];
        let labels: Vec<String> = DEFAULT_LABELS.iter().map(|s| s.to_string()).collect();
        Self::build(labels, &edges).expect("built-in hierarchy is valid")
    }

    /// Parses a plain-text hierarchy.
    ///
    /// One entry per line: either `child,parent` (an is-a edge) or a bare
    /// label name (declares a root with no parent). `#` starts a comment.
    /// Label order is order of first appearance. A label named `NoFinding`
    /// is treated as mutually exclusive with all others.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let mut order: HashMap<String, usize> = HashMap::new();
        let mut intern = |name: &str, labels: &mut Vec<String>| -> usize {
            if let Some(&i) = order.get(name) {
                return i;
            }
            let i = labels.len();
            labels.push(name.to_string());
            order.insert(name.to_string(), i);
            i
        };
        let mut edges: Vec<(String, String)> = Vec::new();
        for (line_no, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let first = parts.next().unwrap_or("").trim();
            match parts.next() {
                None => {
                    intern(first, &mut labels);
                }
                Some(second) => {
                    let second = second.trim();
                    if first.is_empty() || second.is_empty() || parts.next().is_some() {
                        return Err(Error::Parse(format!(
                            "hierarchy line {}: expected `child,parent` or a bare label, got {raw_line:?}",
                            line_no + 1
                        )));
                    }
                    intern(first, &mut labels);
                    intern(second, &mut labels);
                    edges.push((first.to_string(), second.to_string()));
                }
            }
        }
        let edge_refs: Vec<(&str, &str)> = edges
            .iter()
            .map(|(c, p)| (c.as_str(), p.as_str()))
            .collect();
        Self::build(labels, &edge_refs)
    }

    fn build(labels: Vec<String>, edges: &[(&str, &str)]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Label("empty label list".into()));
        }
        if labels.len() > MAX_LABELS {
            return Err(Error::Label(format!(
                "{} labels exceed the supported maximum of {MAX_LABELS}",
                labels.len()
            )));
        }
        let mut index = HashMap::new();
        for (i, name) in labels.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Label(format!("duplicate label {name:?}")));
            }
        }
        let mut parent: Vec<Option<usize>> = vec![None; labels.len()];
        for (child, par) in edges {
            let c = *index
                .get(*child)
                .ok_or_else(|| Error::Label(format!("unknown label {child:?} in edge list")))?;
            let p = *index
                .get(*par)
                .ok_or_else(|| Error::Label(format!("unknown label {par:?} in edge list")))?;
            if c == p {
                return Err(Error::Label(format!("self edge on {child:?}")));
            }
            if parent[c].is_some() {
                return Err(Error::Label(format!(
                    "label {child:?} has more than one parent; the hierarchy must be a forest"
                )));
            }
            parent[c] = Some(p);
        }
        // Walking up from every node must terminate.
        for start in 0..labels.len() {
            let mut hops = 0;
            let mut cur = start;
            while let Some(p) = parent[cur] {
                cur = p;
                hops += 1;
                if hops > labels.len() {
                    return Err(Error::Label(format!(
                        "cycle in hierarchy involving {:?}",
                        labels[start]
                    )));
                }
            }
        }
        let no_finding = index.get("NoFinding").copied();
        if let Some(nf) = no_finding {
            if parent[nf].is_some() || parent.contains(&Some(nf)) {
                return Err(Error::Label(
                    "NoFinding cannot participate in is-a edges".into(),
                ));
            }
        }
        Ok(LabelGraph {
            labels,
            parent,
            index,
            no_finding,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Label(format!("unknown label {name:?}")))
    }

    pub fn parent_of(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn no_finding_index(&self) -> Option<usize> {
        self.no_finding
    }

    /// Proper ancestors of `i`, nearest first.
    pub fn ancestors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = i;
        while let Some(p) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Ancestor closure of `raw`: every member plus all of its super-types.
    ///
    /// Errors if `raw` is empty or combines `NoFinding` with a pathology;
    /// idempotent and monotone otherwise.
    pub fn expand(&self, raw: LabelSet) -> Result<LabelSet> {
        if raw.is_empty() {
            return Err(Error::Label("cannot expand an empty label set".into()));
        }
        if let Some(nf) = self.no_finding {
            if raw.contains(nf) && raw.len() > 1 {
                let other = raw.iter().find(|&i| i != nf).unwrap();
                return Err(Error::Inconsistent(format!(
                    "NoFinding cannot be combined with {:?}",
                    self.labels[other]
                )));
            }
        }
        let mut out = raw;
        for i in raw.iter() {
            if i >= self.len() {
                return Err(Error::Label(format!(
                    "label index {i} out of range for {} labels",
                    self.len()
                )));
            }
            for a in self.ancestors(i) {
                out.insert(a);
            }
        }
        Ok(out)
    }

    /// Every hierarchy violation in `pred`: a present child whose parent is
    /// absent, or `NoFinding` next to a pathology. Empty iff consistent.
    ///
    /// Unlike [`LabelGraph::expand`] this never fails: predictions are
    /// allowed to disagree with the hierarchy and are merely reported.
    pub fn check_consistency(&self, pred: LabelSet) -> Vec<Violation> {
        let mut out = Vec::new();
        for child in pred.iter() {
            if child >= self.len() {
                continue;
            }
            for parent in self.ancestors(child) {
                if !pred.contains(parent) {
                    out.push(Violation::MissingParent { child, parent });
                }
            }
        }
        if let Some(nf) = self.no_finding {
            if pred.contains(nf) {
                for other in pred.iter() {
                    if other != nf {
                        out.push(Violation::NoFindingConflict { other });
                    }
                }
            }
        }
        out
    }

    /// Human-readable rendering of a violation.
    pub fn describe(&self, v: &Violation) -> String {
        match v {
            Violation::MissingParent { child, parent } => format!(
                "{} is present but its super-type {} is not",
                self.labels[*child], self.labels[*parent]
            ),
            Violation::NoFindingConflict { other } => {
                format!("NoFinding conflicts with {}", self.labels[*other])
            }
        }
    }

    /// Parses `;`-separated raw label names into a set.
    pub fn parse_names(&self, names: &str) -> Result<LabelSet> {
        let mut set = LabelSet::empty();
        for name in names.split(';') {
            let name = name.trim();
            if name.is_empty() {
                continue;
            }
            set.insert(self.index_of(name)?);
        }
        Ok(set)
    }
}

impl LabelSet {
    pub fn empty() -> Self {
        LabelSet { bits: 0 }
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        let mut s = Self::empty();
        for &i in indices {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < MAX_LABELS, "label index {i} out of bitset range");
        self.bits |= 1 << i;
    }

    pub fn contains(&self, i: usize) -> bool {
        i < MAX_LABELS && self.bits & (1 << i) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_superset_of(&self, other: &LabelSet) -> bool {
        self.bits & other.bits == other.bits
    }

    /// Member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..MAX_LABELS).filter(move |&i| self.contains(i))
    }

    /// 0/1 target vector of length `num_classes`.
    pub fn to_multi_hot<T: Scalar>(&self, num_classes: usize) -> Tensor<T> {
        let mut t = Tensor::zeros(vec![num_classes]);
        for i in self.iter() {
            if i < num_classes {
                t.data_mut()[i] = T::one();
            }
        }
        t
    }

    /// Set of classes whose probability clears the threshold.
    pub fn from_probs<T: Scalar>(probs: &Tensor<T>, threshold: f64) -> Self {
        let mut s = Self::empty();
        for (i, &p) in probs.data().iter().enumerate() {
            if p.to_f64_lossy() >= threshold {
                s.insert(i);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(g: &LabelGraph, names: &[&str]) -> LabelSet {
        LabelSet::from_indices(
            &names
                .iter()
                .map(|n| g.index_of(n).unwrap())
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn covid_expands_to_viral_and_pneumonia() {
        let g = LabelGraph::default_pathology();
        let out = g.expand(set(&g, &["COVID19"])).unwrap();
        assert_eq!(out, set(&g, &["COVID19", "ViralPneumonia", "Pneumonia"]));
    }

    #[test]
    fn covid_plus_ards_keeps_ards() {
        let g = LabelGraph::default_pathology();
        let out = g.expand(set(&g, &["COVID19", "ARDS"])).unwrap();
        assert_eq!(
            out,
            set(&g, &["COVID19", "ViralPneumonia", "Pneumonia", "ARDS"])
        );
    }

    #[test]
    fn no_finding_expands_to_itself() {
        let g = LabelGraph::default_pathology();
        let out = g.expand(set(&g, &["NoFinding"])).unwrap();
        assert_eq!(out, set(&g, &["NoFinding"]));
    }

    #[test]
    fn no_finding_with_pathology_is_an_error() {
        let g = LabelGraph::default_pathology();
        let err = g.expand(set(&g, &["NoFinding", "COVID19"])).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)), "{err}");
    }

    #[test]
    fn empty_set_cannot_expand() {
        let g = LabelGraph::default_pathology();
        assert!(g.expand(LabelSet::empty()).is_err());
    }

    #[test]
    fn bare_covid_has_two_violations() {
        let g = LabelGraph::default_pathology();
        let violations = g.check_consistency(set(&g, &["COVID19"]));
        assert_eq!(violations.len(), 2);
        let missing: Vec<&str> = violations
            .iter()
            .map(|v| match v {
                Violation::MissingParent { parent, .. } => g.label(*parent),
                _ => panic!("unexpected violation"),
            })
            .collect();
        assert!(missing.contains(&"ViralPneumonia"));
        assert!(missing.contains(&"Pneumonia"));
    }

    #[test]
    fn expanded_sets_are_consistent() {
        let g = LabelGraph::default_pathology();
        for name in DEFAULT_LABELS {
            let out = g.expand(set(&g, &[name])).unwrap();
            assert!(g.check_consistency(out).is_empty(), "{name}");
        }
    }

    #[test]
    fn co_infection_is_legal() {
        let g = LabelGraph::default_pathology();
        let s = set(&g, &["ViralPneumonia", "BacterialPneumonia", "Pneumonia"]);
        assert!(g.check_consistency(s).is_empty());
    }

    #[test]
    fn expand_is_a_closure_operator() {
        let g = LabelGraph::default_pathology();
        // Extensive and idempotent on every single-label set; monotonicity is
        // exercised by the pairwise subset check below.
        for i in 0..g.len() {
            let raw = LabelSet::from_indices(&[i]);
            let once = g.expand(raw).unwrap();
            assert!(once.is_superset_of(&raw));
            assert_eq!(g.expand(once).unwrap(), once);
        }
        let small = g.expand(set(&g, &["SARS"])).unwrap();
        let large = g.expand(set(&g, &["SARS", "Klebsiella"])).unwrap();
        assert!(large.is_superset_of(&small));
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "\
# synthetic hierarchy
RootA
ChildA1,RootA
ChildA2,RootA
RootB
ChildB1,RootB
";
        let g = LabelGraph::from_edge_list(text).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.label(0), "RootA");
        let out = g
            .expand(LabelSet::from_indices(&[g.index_of("ChildA2").unwrap()]))
            .unwrap();
        assert!(out.contains(g.index_of("RootA").unwrap()));
    }

    #[test]
    fn edge_list_rejects_second_parent() {
        let text = "A,B\nA,C\n";
        assert!(LabelGraph::from_edge_list(text).is_err());
    }

    #[test]
    fn edge_list_rejects_cycles() {
        let text = "A,B\nB,C\nC,A\n";
        assert!(LabelGraph::from_edge_list(text).is_err());
    }

    #[test]
    fn multi_hot_round_trip() {
        let g = LabelGraph::default_pathology();
        let s = g.expand(set(&g, &["SARS"])).unwrap();
        let hot: Tensor<f64> = s.to_multi_hot(g.len());
        let back = LabelSet::from_probs(&hot, 0.5);
        assert_eq!(back, s);
    }
}

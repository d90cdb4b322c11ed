use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Bijection between external string ids and dense indices, in
/// first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a map whose names are `prefix0, prefix1, ...`.
    pub fn sequential(prefix: &str, n: usize) -> Self {
        Self::from_names((0..n).map(|i| format!("{prefix}{i}")))
            .expect("generated names are unique")
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = Self::new();
        for name in names {
            let name = name.into();
            if map.index.contains_key(&name) {
                return Err(Error::Data(format!("duplicate id `{name}`")));
            }
            map.intern(&name);
        }
        Ok(map)
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: usize, item: usize) -> Self {
        Self {
            user,
            item,
            timestamp: None,
        }
    }
}

/// Bipartite user–item interaction set over dense id ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    users: Arc<IdMap>,
    items: Arc<IdMap>,
    interactions: Vec<Interaction>,
}

impl InteractionGraph {
    /// Validates ranges and uniqueness of `(user, item)` pairs.
    pub fn new(users: Arc<IdMap>, items: Arc<IdMap>, interactions: Vec<Interaction>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(interactions.len());
        for it in &interactions {
            if it.user >= users.len() || it.item >= items.len() {
                return Err(Error::Data(format!(
                    "interaction ({}, {}) outside id ranges {}x{}",
                    it.user,
                    it.item,
                    users.len(),
                    items.len()
                )));
            }
            if !seen.insert((it.user, it.item)) {
                return Err(Error::Data(format!(
                    "duplicate interaction ({}, {})",
                    it.user, it.item
                )));
            }
        }
        Ok(Self {
            users,
            items,
            interactions,
        })
    }

    /// Convenience constructor with generated `u*`/`i*` names.
    pub fn from_pairs(n_users: usize, n_items: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let users = Arc::new(IdMap::sequential("u", n_users));
        let items = Arc::new(IdMap::sequential("i", n_items));
        let interactions = pairs.iter().map(|&(u, i)| Interaction::new(u, i)).collect();
        Self::new(users, items, interactions)
    }

    /// A graph over the same id spaces holding a different interaction set.
    pub fn with_interactions(&self, interactions: Vec<Interaction>) -> Result<Self> {
        Self::new(self.users.clone(), self.items.clone(), interactions)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn user_ids(&self) -> &Arc<IdMap> {
        &self.users
    }

    pub fn item_ids(&self) -> &Arc<IdMap> {
        &self.items
    }

    /// Sorted item lists per user.
    pub fn user_items(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for it in &self.interactions {
            out[it.user].push(it.item);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    /// Sorted user lists per item.
    pub fn item_users(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_items()];
        for it in &self.interactions {
            out[it.item].push(it.user);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_items()];
        for it in &self.interactions {
            out[it.item] += 1;
        }
        out
    }
}

/// Reads `user<TAB>item[<TAB>timestamp]` records. Dense ids follow first
/// appearance; repeated pairs collapse to one record keeping the earliest
/// timestamp.
pub fn load_interactions(path: &Path) -> Result<InteractionGraph> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };

    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut interactions: Vec<Interaction> = Vec::new();
    let mut slot: HashMap<(usize, usize), usize> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(
                lineno,
                format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (u, i) = (fields[0].trim(), fields[1].trim());
        if u.is_empty() || i.is_empty() {
            return Err(parse_err(lineno, "empty user or item id".into()));
        }
        let timestamp = match fields.get(2).map(|t| t.trim()) {
            None | Some("") => None,
            Some(t) => Some(
                t.parse::<i64>()
                    .map_err(|e| parse_err(lineno, format!("bad timestamp `{t}`: {e}")))?,
            ),
        };
        let user = users.intern(u);
        let item = items.intern(i);
        match slot.get(&(user, item)) {
            Some(&k) => {
                let prev = &mut interactions[k];
                prev.timestamp = match (prev.timestamp, timestamp) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            None => {
                slot.insert((user, item), interactions.len());
                interactions.push(Interaction {
                    user,
                    item,
                    timestamp,
                });
            }
        }
    }

    if interactions.is_empty() {
        return Err(Error::EmptyDataset(path.to_owned()));
    }
    log::info!(
        "{}: {} users, {} items, {} interactions",
        path.display(),
        users.len(),
        items.len(),
        interactions.len()
    );
    InteractionGraph::new(Arc::new(users), Arc::new(items), interactions)
}

/// Writes the graph in the format read by [`load_interactions`].
pub fn write_interactions(graph: &InteractionGraph, path: &Path) -> Result<()> {
    let mut buf = String::with_capacity(graph.len() * 16);
    for it in graph.interactions() {
        buf.push_str(graph.users.name(it.user));
        buf.push('\t');
        buf.push_str(graph.items.name(it.item));
        if let Some(ts) = it.timestamp {
            buf.push('\t');
            buf.push_str(&ts.to_string());
        }
        buf.push('\n');
    }
    let mut f = fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(buf.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(body: &str) -> Result<InteractionGraph> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        fs::write(&path, body).unwrap();
        load_interactions(&path)
    }

    #[test]
    fn duplicates_collapse() {
        let g = load_str("a\tx\na\tx\n").unwrap();
        assert_eq!((g.n_users(), g.n_items(), g.len()), (1, 1, 1));
    }

    #[test]
    fn counts_first_appearance() {
        let g = load_str("a\tx\nb\tx\na\ty\n").unwrap();
        assert_eq!((g.n_users(), g.n_items(), g.len()), (2, 2, 3));
        assert_eq!(g.user_ids().get("b"), Some(1));
        assert_eq!(g.item_ids().get("y"), Some(1));
    }

    #[test]
    fn earliest_timestamp_kept() {
        let g = load_str("a\tx\t50\na\tx\t20\na\tx\n").unwrap();
        assert_eq!(g.interactions()[0].timestamp, Some(20));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match load_str("a\tx\n\nbroken\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load_str("a\tx\tnot-a-number\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(load_str(""), Err(Error::EmptyDataset(_))));
        assert!(matches!(load_str("\n  \n"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(InteractionGraph::from_pairs(1, 1, &[(0, 1)]).is_err());
        assert!(InteractionGraph::from_pairs(1, 1, &[(0, 0), (0, 0)]).is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        let g = InteractionGraph::from_pairs(3, 2, &[(0, 1), (2, 0), (1, 1)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        write_interactions(&g, &path).unwrap();
        let back = load_interactions(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in g.interactions().iter().zip(back.interactions()) {
            assert_eq!(g.user_ids().name(a.user), back.user_ids().name(b.user));
            assert_eq!(g.item_ids().name(a.item), back.item_ids().name(b.item));
        }
    }
}

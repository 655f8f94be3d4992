use std::collections::HashSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Result, Target};
use crate::rng;

/// How rows are divided into train / validation / test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum SplitPolicy {
    /// Class-stratified random split. `fractions` is `[train, val]` or
    /// `[train, val, test]`; with two entries the test set stays empty.
    /// Regression targets are shuffled without stratification.
    Stratified { fractions: Vec<f64> },
    /// Rows whose `field` is below `boundary` form train+val (the last
    /// `val_tail_count` of them, in file order, become validation); the
    /// rest is test.
    Temporal {
        field: String,
        boundary: f64,
        val_tail_count: usize,
    },
    /// Assignment read from a `row,split` CSV with `split` in {train, val, test}.
    Provided { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub policy: SplitPolicy,
    pub seed: u64,
}

impl SplitBundle {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .all(|i| seen.insert(*i))
    }
}

pub fn split(dataset: &Dataset, policy: &SplitPolicy, seed: u64) -> Result<SplitBundle> {
    let (train, val, test) = match policy {
        SplitPolicy::Stratified { fractions } => stratified(dataset, fractions, seed)?,
        SplitPolicy::Temporal {
            field,
            boundary,
            val_tail_count,
        } => temporal(dataset, field, *boundary, *val_tail_count)?,
        SplitPolicy::Provided { file } => provided(dataset, file)?,
    };
    let expect_test = !matches!(policy, SplitPolicy::Stratified { fractions } if fractions.len() == 2);
    for (name, set) in [("train", &train), ("val", &val)] {
        if set.is_empty() {
            return Err(DataError::EmptySplit(name));
        }
    }
    if expect_test && test.is_empty() {
        return Err(DataError::EmptySplit("test"));
    }
    Ok(SplitBundle {
        train,
        val,
        test,
        policy: policy.clone(),
        seed,
    })
}

type Sets = (Vec<usize>, Vec<usize>, Vec<usize>);

fn stratified(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<Sets> {
    if !(2..=3).contains(&fractions.len()) {
        return Err(DataError::InvalidPolicy(
            "stratified split needs 2 or 3 fractions".into(),
        ));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DataError::InvalidPolicy(format!(
            "fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let n = dataset.n_samples();
    let groups: Vec<Vec<usize>> = match &dataset.target {
        Target::Classes(labels) => {
            let k = dataset.task.n_classes().unwrap_or(0).max(1 + labels.iter().copied().max().unwrap_or(0));
            let mut g = vec![Vec::new(); k];
            for (i, &c) in labels.iter().enumerate() {
                g[c].push(i);
            }
            g.retain(|v| !v.is_empty());
            g
        }
        Target::Values(_) => vec![(0..n).collect()],
    };
    let sizes = largest_remainder(n, fractions);
    let counts = proportional_counts(&groups.iter().map(Vec::len).collect::<Vec<_>>(), &sizes);

    let mut rng = rng::seeded(seed);
    let mut sets = vec![Vec::new(); fractions.len()];
    for (members, row) in groups.iter().zip(&counts) {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        let mut start = 0;
        for (set, &c) in sets.iter_mut().zip(row) {
            set.extend_from_slice(&members[start..start + c]);
            start += c;
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    let test = if sets.len() == 3 { sets.pop().unwrap() } else { Vec::new() };
    let val = sets.pop().unwrap();
    let train = sets.pop().unwrap();
    Ok((train, val, test))
}

/// Hamilton apportionment of `n` items by `fractions`; ties go to the earlier split.
fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n.saturating_sub(sizes.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &s in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[s] += 1;
        left -= 1;
    }
    sizes
}

/// Rounds the table `group_size * split_size / n` to integers so that every
/// cell is its floor or ceiling and both margins are preserved exactly.
///
/// The fractional remainders form a transportation problem with integral
/// margins; a max-flow over (group -> split) unit edges picks which cells
/// round up.
fn proportional_counts(group_sizes: &[usize], split_sizes: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = group_sizes.iter().sum();
    let g = group_sizes.len();
    let s = split_sizes.len();
    let mut counts = vec![vec![0usize; s]; g];
    let mut has_frac = vec![vec![false; s]; g];
    for (c, &nc) in group_sizes.iter().enumerate() {
        for (j, &sj) in split_sizes.iter().enumerate() {
            counts[c][j] = nc * sj / n;
            has_frac[c][j] = (nc * sj) % n != 0;
        }
    }
    let row_need: Vec<usize> = (0..g)
        .map(|c| group_sizes[c] - counts[c].iter().sum::<usize>())
        .collect();
    let col_need: Vec<usize> = (0..s)
        .map(|j| split_sizes[j] - counts.iter().map(|r| r[j]).sum::<usize>())
        .collect();

    // nodes: 0 = source, 1..=g groups, g+1..=g+s splits, g+s+1 = sink
    let nodes = g + s + 2;
    let sink = nodes - 1;
    let mut cap = vec![vec![0i64; nodes]; nodes];
    for c in 0..g {
        cap[0][1 + c] = row_need[c] as i64;
        for j in 0..s {
            if has_frac[c][j] {
                cap[1 + c][1 + g + j] = 1;
            }
        }
    }
    for j in 0..s {
        cap[1 + g + j][sink] = col_need[j] as i64;
    }
    let flow = max_flow(&mut cap, 0, sink);
    debug_assert_eq!(flow as usize, row_need.iter().sum::<usize>());
    for c in 0..g {
        for j in 0..s {
            // a used unit edge has its residual capacity drained to zero
            if has_frac[c][j] && cap[1 + c][1 + g + j] == 0 {
                counts[c][j] += 1;
            }
        }
    }
    counts
}

/// Edmonds-Karp on a dense residual matrix; leaves residual capacities in `cap`.
fn max_flow(cap: &mut [Vec<i64>], source: usize, sink: usize) -> i64 {
    let n = cap.len();
    let mut total = 0;
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[source] = source;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if parent[v] == usize::MAX && cap[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            return total;
        }
        let mut bottleneck = i64::MAX;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            bottleneck = bottleneck.min(cap[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            cap[u][v] -= bottleneck;
            cap[v][u] += bottleneck;
            v = u;
        }
        total += bottleneck;
    }
}

fn temporal(dataset: &Dataset, field: &str, boundary: f64, tail: usize) -> Result<Sets> {
    let j = dataset
        .column_index(field)
        .ok_or_else(|| DataError::InvalidPolicy(format!("boundary field `{field}` not found")))?;
    let mut pool = Vec::new();
    let mut test = Vec::new();
    for i in 0..dataset.n_samples() {
        if dataset.missing[[i, j]] {
            return Err(DataError::InvalidPolicy(format!(
                "row {i} has no value for boundary field `{field}`"
            )));
        }
        if dataset.features[[i, j]] < boundary {
            pool.push(i);
        } else {
            test.push(i);
        }
    }
    let cut = pool.len().saturating_sub(tail);
    let val = pool.split_off(cut);
    Ok((pool, val, test))
}

fn provided(dataset: &Dataset, file: &PathBuf) -> Result<Sets> {
    let csv_err = |source| DataError::Csv {
        path: file.clone(),
        source,
    };
    let mut reader = csv::Reader::from_path(file).map_err(csv_err)?;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let bad = || DataError::InvalidPolicy(format!("bad split record {record:?}"));
        let row: usize = record.get(0).and_then(|r| r.trim().parse().ok()).ok_or_else(bad)?;
        if row >= dataset.n_samples() || !seen.insert(row) {
            return Err(bad());
        }
        match record.get(1).map(str::trim) {
            Some("train") => train.push(row),
            Some("val") => val.push(row),
            Some("test") => test.push(row),
            _ => return Err(bad()),
        }
    }
    Ok((train, val, test))
}

/// Writes the assignment in the format [`SplitPolicy::Provided`] reads.
pub fn write_split_file(bundle: &SplitBundle, path: &std::path::Path) -> std::io::Result<()> {
    let mut rows: Vec<(usize, &str)> = bundle
        .train
        .iter()
        .map(|&i| (i, "train"))
        .chain(bundle.val.iter().map(|&i| (i, "val")))
        .chain(bundle.test.iter().map(|&i| (i, "test")))
        .collect();
    rows.sort_unstable();
    let mut text = String::from("row,split\n");
    for (i, s) in rows {
        text.push_str(&format!("{i},{s}\n"));
    }
    std::fs::write(path, text)
}

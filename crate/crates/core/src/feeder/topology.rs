use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const TOPOLOGY_MAGIC: &str = "GPMU-TOPO 1";

/// The bundled IEEE 34-bus feeder (connectivity is the published one,
/// impedances and loads are synthetic).
pub const IEEE34: &str = include_str!("../../data/ieee34.topo");

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub a: usize,
    pub b: usize,
    pub r: f64,
    pub x: f64,
}

/// A validated radial feeder. Bus 0 (the first bus named in the file) is the
/// substation.
#[derive(Clone, Debug)]
pub struct FeederTopology {
    buses: Vec<String>,
    lines: Vec<Line>,
    sensors: Vec<usize>,
    loads: Vec<(f64, f64)>,
    parent: Vec<Option<(usize, usize)>>,
    bfs_order: Vec<usize>,
    hops: Vec<Vec<u32>>,
}

impl FeederTopology {
    pub fn ieee34() -> Self {
        FeederTopology::parse(IEEE34).expect("bundled topology is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        FeederTopology::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines_iter = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let header = lines_iter
            .by_ref()
            .find(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .ok_or(Error::Parse {
                line: 1,
                msg: "empty topology file".into(),
            })?;
        if header.1 != TOPOLOGY_MAGIC {
            return Err(Error::UnsupportedVersion(format!(
                "expected `{TOPOLOGY_MAGIC}`, found `{}`",
                header.1
            )));
        }

        let mut index: HashMap<String, usize> = HashMap::new();
        let mut buses: Vec<String> = Vec::new();
        let mut intern = |name: &str, buses: &mut Vec<String>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                buses.push(name.to_string());
                buses.len() - 1
            })
        };
        let mut lines = Vec::new();
        let mut sensor_names: Option<Vec<String>> = None;
        let mut load_rows: Vec<(usize, String, f64, f64)> = Vec::new();

        for (no, line) in lines_iter {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "SENSORS" => {
                    if sensor_names.is_some() {
                        return Err(Error::Parse {
                            line: no,
                            msg: "duplicate SENSORS line".into(),
                        });
                    }
                    sensor_names = Some(fields[1..].iter().map(|s| s.to_string()).collect());
                }
                "LOAD" => {
                    if fields.len() != 4 {
                        return Err(Error::Parse {
                            line: no,
                            msg: "expected `LOAD bus P Q`".into(),
                        });
                    }
                    let p = parse_num(fields[2], no, "P")?;
                    let q = parse_num(fields[3], no, "Q")?;
                    load_rows.push((no, fields[1].to_string(), p, q));
                }
                _ => {
                    if fields.len() != 4 {
                        return Err(Error::Parse {
                            line: no,
                            msg: "expected `bus_a bus_b r x`".into(),
                        });
                    }
                    let r = parse_num(fields[2], no, "r")?;
                    let x = parse_num(fields[3], no, "x")?;
                    let a = intern(fields[0], &mut buses);
                    let b = intern(fields[1], &mut buses);
                    lines.push(Line { a, b, r, x });
                }
            }
        }

        let mut loads = vec![(0.0, 0.0); buses.len()];
        for (no, bus, p, q) in load_rows {
            let i = buses
                .iter()
                .position(|b| *b == bus)
                .ok_or_else(|| Error::Validation(format!("line {no}: load on unknown bus `{bus}`")))?;
            loads[i].0 += p;
            loads[i].1 += q;
        }
        let sensor_names = sensor_names.unwrap_or_default();
        FeederTopology::build(buses, lines, &sensor_names, loads)
    }

    /// Validates the radial invariants and precomputes tree structure.
    pub fn build(buses: Vec<String>, lines: Vec<Line>, sensors: &[String], loads: Vec<(f64, f64)>) -> Result<Self> {
        let n = buses.len();
        if n < 2 {
            return Err(Error::Validation("a feeder needs at least two buses".into()));
        }
        for l in &lines {
            if l.a == l.b {
                return Err(Error::Validation(format!("self-loop at bus {}", buses[l.a])));
            }
            if !(l.r > 0.0 && l.x > 0.0 && l.r.is_finite() && l.x.is_finite()) {
                return Err(Error::Validation(format!(
                    "line {}-{}: impedance must be positive",
                    buses[l.a], buses[l.b]
                )));
            }
        }
        if lines.len() != n - 1 {
            return Err(Error::Validation(format!(
                "not radial: {n} buses need {} lines, found {}",
                n - 1,
                lines.len()
            )));
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, l) in lines.iter().enumerate() {
            adj[l.a].push((l.b, k));
            adj[l.b].push((l.a, k));
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut bfs_order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            bfs_order.push(u);
            for &(v, k) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, k));
                    queue.push_back(v);
                }
            }
        }
        if bfs_order.len() != n {
            // n-1 edges and disconnected implies a cycle somewhere as well
            return Err(Error::Validation("not radial: feeder is disconnected or cyclic".into()));
        }

        let mut sensor_idx = Vec::with_capacity(sensors.len());
        for s in sensors {
            let i = buses
                .iter()
                .position(|b| b == s)
                .ok_or_else(|| Error::Validation(format!("sensor on unknown bus `{s}`")))?;
            if sensor_idx.contains(&i) {
                return Err(Error::Validation(format!("duplicate sensor bus `{s}`")));
            }
            sensor_idx.push(i);
        }
        if sensor_idx.is_empty() {
            return Err(Error::Validation("sensor set is empty".into()));
        }
        if loads.len() != n || loads.iter().any(|(p, q)| !p.is_finite() || !q.is_finite()) {
            return Err(Error::Validation("loads must be finite, one per bus".into()));
        }

        let hops = (0..n)
            .map(|s| {
                let mut dist = vec![u32::MAX; n];
                dist[s] = 0;
                let mut queue = VecDeque::from([s]);
                while let Some(u) = queue.pop_front() {
                    for &(v, _) in &adj[u] {
                        if dist[v] == u32::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                dist
            })
            .collect();

        Ok(FeederTopology {
            buses,
            lines,
            sensors: sensor_idx,
            loads,
            parent,
            bfs_order,
            hops,
        })
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_ids(&self) -> &[String] {
        &self.buses
    }

    pub fn bus_index(&self, label: &str) -> Option<usize> {
        self.buses.iter().position(|b| b == label)
    }

    pub fn bus_label(&self, idx: usize) -> &str {
        &self.buses[idx]
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn sensors(&self) -> &[usize] {
        &self.sensors
    }

    pub fn is_sensor(&self, bus: usize) -> bool {
        self.sensors.contains(&bus)
    }

    pub fn sensor_labels(&self) -> Vec<String> {
        self.sensors.iter().map(|&i| self.buses[i].clone()).collect()
    }

    pub fn loads(&self) -> &[(f64, f64)] {
        &self.loads
    }

    /// Parent bus and the index of the line joining them (`None` at the root).
    pub fn parent(&self, bus: usize) -> Option<(usize, usize)> {
        self.parent[bus]
    }

    /// Buses in breadth-first order from the substation.
    pub fn bfs_order(&self) -> &[usize] {
        &self.bfs_order
    }

    pub fn hops(&self, a: usize, b: usize) -> u32 {
        self.hops[a][b]
    }

    /// Copy of the feeder with a different sensor set.
    pub fn with_sensors(&self, sensors: &[String]) -> Result<Self> {
        FeederTopology::build(self.buses.clone(), self.lines.clone(), sensors, self.loads.clone())
    }

    /// Copy of the feeder with per-bus loads replaced.
    pub fn with_loads(&self, loads: Vec<(f64, f64)>) -> Result<Self> {
        FeederTopology::build(self.buses.clone(), self.lines.clone(), &self.sensor_labels(), loads)
    }

    /// Symmetric 0/1 adjacency matrix without self-loops.
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_buses();
        let mut a = Tensor::zeros(&[n, n]);
        for l in &self.lines {
            a.data_mut()[l.a * n + l.b] = 1.0;
            a.data_mut()[l.b * n + l.a] = 1.0;
        }
        a
    }

    /// Tree on the sensor buses only. Candidate edges join sensors whose
    /// feeder path passes through no other sensor; when several sensors hang
    /// off a common unsensored branch point the candidates form a cycle, so
    /// the minimum spanning tree by hop distance is kept.
    pub fn sensor_subgraph(&self) -> Tensor {
        let s = &self.sensors;
        let k = s.len();
        let mut candidates = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                let path = self.path(s[i], s[j]);
                if !path[1..path.len() - 1].iter().any(|b| self.is_sensor(*b)) {
                    candidates.push((self.hops(s[i], s[j]), i, j));
                }
            }
        }
        candidates.sort();
        let mut root: Vec<usize> = (0..k).collect();
        fn find(root: &mut [usize], mut x: usize) -> usize {
            while root[x] != x {
                root[x] = root[root[x]];
                x = root[x];
            }
            x
        }
        let mut a = Tensor::zeros(&[k, k]);
        for (_, i, j) in candidates {
            let (ri, rj) = (find(&mut root, i), find(&mut root, j));
            if ri != rj {
                root[ri] = rj;
                a.data_mut()[i * k + j] = 1.0;
                a.data_mut()[j * k + i] = 1.0;
            }
        }
        a
    }

    /// Bus sequence from `a` to `b` inclusive.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let ancestors = |mut u: usize| {
            let mut out = vec![u];
            while let Some((p, _)) = self.parent[u] {
                out.push(p);
                u = p;
            }
            out
        };
        let up_a = ancestors(a);
        let up_b = ancestors(b);
        let meet = *up_a.iter().find(|u| up_b.contains(u)).expect("tree is connected");
        let mut path: Vec<usize> = up_a.iter().copied().take_while(|&u| u != meet).collect();
        path.push(meet);
        let tail: Vec<usize> = up_b.iter().copied().take_while(|&u| u != meet).collect();
        path.extend(tail.into_iter().rev());
        path
    }

    /// Farthest-point sensor placement on hop distance. Starts from `start`
    /// and repeatedly adds the bus whose nearest chosen sensor is farthest
    /// (ties to the lowest index), so smaller placements are prefixes of
    /// larger ones.
    pub fn dispersed_sensors(&self, count: usize, start: usize) -> Result<Vec<String>> {
        let n = self.num_buses();
        if count == 0 || count > n {
            return Err(Error::Validation(format!("sensor count {count} outside 1..={n}")));
        }
        let mut chosen = vec![start % n];
        let mut nearest: Vec<u32> = (0..n).map(|b| self.hops(chosen[0], b)).collect();
        while chosen.len() < count {
            let next = (0..n)
                .filter(|b| !chosen.contains(b))
                .max_by(|&x, &y| nearest[x].cmp(&nearest[y]).then(y.cmp(&x)))
                .expect("fewer sensors than buses");
            chosen.push(next);
            for b in 0..n {
                nearest[b] = nearest[b].min(self.hops(next, b));
            }
        }
        Ok(chosen.into_iter().map(|i| self.buses[i].clone()).collect())
    }

    /// Canonical text form; `parse(to_text())` reproduces the feeder.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{TOPOLOGY_MAGIC}").unwrap();
        for l in &self.lines {
            writeln!(out, "{} {} {:?} {:?}", self.buses[l.a], self.buses[l.b], l.r, l.x).unwrap();
        }
        writeln!(out, "SENSORS {}", self.sensor_labels().join(" ")).unwrap();
        for (i, (p, q)) in self.loads.iter().enumerate() {
            if *p != 0.0 || *q != 0.0 {
                writeln!(out, "LOAD {} {:?} {:?}", self.buses[i], p, q).unwrap();
            }
        }
        out
    }

    /// Short content hash of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

fn parse_num(field: &str, line: usize, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("field {what}: `{field}` is not a number"),
    })
}

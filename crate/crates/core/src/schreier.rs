//! Schreier graphs of truncated orbits, ends estimates and rays.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::circlemap::GeneratorSet;
use crate::error::{Error, Result};
use crate::groupaction::{Orbit, OrbitPoint};
use crate::par::par_range;
use crate::word::{Letter, Word};

#[derive(Clone, Debug)]
pub struct SchreierGraph {
    pub vertices: Vec<OrbitPoint>,
    /// `(x, y, s)` with `s(x) = y`, `s` a generator (never an inverse letter).
    pub edges: Vec<(usize, usize, u16)>,
    pub base: usize,
    /// Truncation radius of the underlying orbit.
    pub radius: usize,
    /// Generator images that fell outside the truncation.
    pub dangling: usize,
    adjacency: Vec<Vec<(usize, Letter)>>,
    distance: Vec<usize>,
}

pub fn build_schreier(orbit: &Orbit, gens: &GeneratorSet) -> SchreierGraph {
    let n = orbit.len();
    let ngen = gens.len() as u16;
    let images = par_range(n, |i| {
        (0..ngen)
            .map(|g| orbit.find(gens.letter_map(Letter::new(g, false)).apply(orbit.points[i].position)))
            .collect::<Vec<_>>()
    });
    let mut edges = Vec::new();
    let mut dangling = 0;
    let mut adjacency = vec![Vec::new(); n];
    for (i, row) in images.iter().enumerate() {
        for (g, img) in row.iter().enumerate() {
            match img {
                Some(j) => {
                    edges.push((i, *j, g as u16));
                    adjacency[i].push((*j, Letter::new(g as u16, false)));
                    if *j != i {
                        adjacency[*j].push((i, Letter::new(g as u16, true)));
                    }
                }
                None => dangling += 1,
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    for a in adjacency.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut g = SchreierGraph {
        vertices: orbit.points.clone(),
        edges,
        base: 0,
        radius: orbit.radius,
        dangling,
        adjacency,
        distance: Vec::new(),
    };
    g.distance = g.bfs(0).into_iter().map(|d| d.unwrap_or(usize::MAX)).collect();
    g
}

#[derive(Clone, Debug, Serialize)]
pub struct EndsEstimate {
    pub r: usize,
    #[serde(rename = "R")]
    pub big_r: usize,
    pub components: usize,
    pub frontier_sizes: Vec<usize>,
    /// False when `R` reaches the truncation radius.
    pub reliable: bool,
}

impl SchreierGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, Letter)] {
        &self.adjacency[v]
    }

    pub fn distance(&self, v: usize) -> usize {
        self.distance[v]
    }

    pub fn max_distance(&self) -> usize {
        self.distance.iter().copied().filter(|&d| d != usize::MAX).max().unwrap_or(0)
    }

    /// Whether the orbit closed up before the truncation radius.
    pub fn is_finite(&self) -> bool {
        self.max_distance() < self.radius
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn bfs(&self, from: usize) -> Vec<Option<usize>> {
        let mut d = vec![None; self.len()];
        d[from] = Some(0);
        let mut q = VecDeque::from([from]);
        while let Some(v) = q.pop_front() {
            let dv = d[v].unwrap();
            for &(w, _) in &self.adjacency[v] {
                if d[w].is_none() {
                    d[w] = Some(dv + 1);
                    q.push_back(w);
                }
            }
        }
        d
    }

    /// Components outside the closed `r`-ball that reach the sphere of
    /// radius `R`.
    pub fn ends_estimate(&self, r: usize, big_r: usize) -> Result<EndsEstimate> {
        if r >= big_r {
            return Err(Error::Precondition(format!("need r < R, got r = {r}, R = {big_r}")));
        }
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut frontier_sizes = Vec::new();
        for s in 0..n {
            if self.distance[s] <= r || comp[s] != usize::MAX {
                continue;
            }
            let id = frontier_sizes.len();
            let mut at_r = 0;
            let mut q = VecDeque::from([s]);
            comp[s] = id;
            while let Some(v) = q.pop_front() {
                if self.distance[v] == big_r {
                    at_r += 1;
                }
                for &(w, _) in &self.adjacency[v] {
                    if self.distance[w] > r && comp[w] == usize::MAX {
                        comp[w] = id;
                        q.push_back(w);
                    }
                }
            }
            frontier_sizes.push(at_r);
        }
        let frontier_sizes: Vec<usize> = frontier_sizes.into_iter().filter(|&c| c > 0).collect();
        Ok(EndsEstimate {
            r,
            big_r,
            components: frontier_sizes.len(),
            frontier_sizes,
            reliable: big_r < self.radius,
        })
    }

    /// Greedy ray: repeatedly step to the first neighbor one level further out.
    pub fn greedy_ray(&self) -> Result<Vec<usize>> {
        self.check_ray_preconditions()?;
        let mut ray = vec![self.base];
        let mut v = self.base;
        loop {
            let dv = self.distance[v];
            match self.adjacency[v].iter().find(|&&(w, _)| self.distance[w] == dv + 1) {
                Some(&(w, _)) => {
                    ray.push(w);
                    v = w;
                }
                None => break,
            }
        }
        if self.distance[v] < self.radius {
            return Err(Error::Graph(format!("dead end at distance {}", self.distance[v])));
        }
        Ok(ray)
    }

    /// Ray `x_n = f^n(x_0)` for a contracting element `f`, followed until it
    /// leaves the truncation or stops moving outward.
    pub fn contracting_ray(&self, orbit: &Orbit, gens: &GeneratorSet, f: &Word) -> Result<Vec<usize>> {
        self.check_ray_preconditions()?;
        let mut ray = vec![self.base];
        let mut x = self.vertices[self.base].position;
        loop {
            x = gens.apply_word(f, x);
            let Some(v) = orbit.find(x) else { break };
            if self.distance[v] <= self.distance[*ray.last().unwrap()] {
                break;
            }
            ray.push(v);
        }
        if ray.len() < 2 {
            return Err(Error::Graph("contracting element does not move the base outward".into()));
        }
        Ok(ray)
    }

    fn check_ray_preconditions(&self) -> Result<()> {
        if self.radius < 4 {
            return Err(Error::Precondition("rays need truncation radius at least 4".into()));
        }
        if self.is_finite() {
            return Err(Error::Graph("finite graph has no ray to infinity".into()));
        }
        Ok(())
    }

    /// Edge-list export: a vertex block then an edge block.
    pub fn write_edge_list(&self, gens: &GeneratorSet, mut out: impl Write) -> Result<()> {
        writeln!(out, "# vertices: vertex_id position witness")?;
        for (i, p) in self.vertices.iter().enumerate() {
            let w = gens.format_word(&p.witness).replace(' ', ".");
            writeln!(out, "{i} {} {w}", p.position)?;
        }
        writeln!(out, "# edges: u v label")?;
        for &(u, v, g) in &self.edges {
            writeln!(out, "{u} {v} {}", gens.labels()[g as usize])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circlemap::{CircleMap, GeneratorSpec};
    use crate::groupaction::{orbit, DEFAULT_ORBIT_TOL};

    fn rotation_graph(alpha: f64, radius: usize) -> (Orbit, SchreierGraph, GeneratorSet) {
        let g = GeneratorSet::new(vec![GeneratorSpec::new("r", CircleMap::rotation(alpha))]).unwrap();
        let o = orbit(&g, 0.1, radius, DEFAULT_ORBIT_TOL, 10_000).unwrap();
        let s = build_schreier(&o, &g);
        (o, s, g)
    }

    #[test]
    fn line_graph_has_two_ends() {
        let (_, s, _) = rotation_graph(2f64.sqrt() - 1.0, 8);
        assert_eq!(s.len(), 17);
        assert_eq!(s.edges.len(), 16);
        assert_eq!(s.dangling, 1);
        for r in 0..5 {
            assert_eq!(s.ends_estimate(r, r + 2).unwrap().components, 2);
        }
        let ray = s.greedy_ray().unwrap();
        assert_eq!(ray.len(), 9);
        assert!(ray.windows(2).all(|w| s.distance(w[1]) == s.distance(w[0]) + 1));
    }

    #[test]
    fn finite_orbit_is_a_triangle() {
        let (_, s, _) = rotation_graph(1.0 / 3.0, 10);
        assert_eq!(s.len(), 3);
        assert_eq!(s.edges.len(), 3);
        assert_eq!(s.ends_estimate(0, 5).unwrap().components, 0);
        assert!(s.greedy_ray().is_err());
    }

    #[test]
    fn edge_list_format() {
        let (_, s, g) = rotation_graph(0.25, 4);
        let mut buf = Vec::new();
        s.write_edge_list(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# vertices"));
        assert!(text.contains("\n0 0.1 id\n"));
        assert!(text.contains("\n0 1 r\n"));
    }
}

//! Triangle meshes: validation, lumped masses, edge graph, Dijkstra geodesics,
//! ASCII OFF ingestion and a couple of generators used by tests and the CLI.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TriMesh {
    positions: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    /// Translation periods for meshes of flat tori; `0.0` means "not periodic".
    period: [f64; 3],
    lumped_mass: Vec<f64>,
    // CSR adjacency of the edge graph
    adj_start: Vec<usize>,
    adj_vertex: Vec<usize>,
    adj_length: Vec<f64>,
    min_edge: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by vertex index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TriMesh {
    pub fn new(positions: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_period(positions, triangles, [0.0; 3])
    }

    /// Builds a mesh whose edge vectors are taken with the minimum-image
    /// convention in a periodic box. This is how flat tori are meshed.
    pub fn with_period(positions: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>, period: [f64; 3]) -> Result<Self> {
        let nv = positions.len();
        if nv < 3 || triangles.is_empty() {
            return Err(Error::invalid("mesh needs at least 3 vertices and 1 triangle"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("mesh has non-finite vertex coordinates"));
        }
        if period.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("mesh period must be finite and nonnegative"));
        }
        let mut mesh = TriMesh {
            positions,
            triangles,
            period,
            lumped_mass: vec![0.0; nv],
            adj_start: Vec::new(),
            adj_vertex: Vec::new(),
            adj_length: Vec::new(),
            min_edge: f64::INFINITY,
        };

        let scale = mesh.bounding_scale();
        let mut edges: HashMap<(usize, usize), f64> = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            if a >= nv || b >= nv || c >= nv {
                return Err(Error::invalid(format!(
                    "triangle {t} references a vertex outside 0..{nv}"
                )));
            }
            if a == b || b == c || a == c {
                return Err(Error::invalid(format!("triangle {t} repeats a vertex")));
            }
            let area = mesh.triangle_area(tri);
            if !(area > 1e-14 * scale * scale) {
                return Err(Error::invalid(format!("triangle {t} is degenerate (area {area:e})")));
            }
            for v in tri {
                mesh.lumped_mass[*v] += area / 3.0;
            }
            for (i, j) in [(a, b), (b, c), (c, a)] {
                let key = (i.min(j), i.max(j));
                let len = norm(mesh.edge_vector(i, j));
                edges.insert(key, len);
            }
        }

        let mut degree = vec![0usize; nv];
        for &(i, j) in edges.keys() {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut start = vec![0usize; nv + 1];
        for v in 0..nv {
            start[v + 1] = start[v] + degree[v];
        }
        let mut fill = start.clone();
        let mut adj_vertex = vec![0usize; start[nv]];
        let mut adj_length = vec![0.0; start[nv]];
        let mut sorted: Vec<_> = edges.into_iter().collect();
        sorted.sort_by_key(|(k, _)| *k);
        for ((i, j), len) in sorted {
            mesh.min_edge = mesh.min_edge.min(len);
            adj_vertex[fill[i]] = j;
            adj_length[fill[i]] = len;
            fill[i] += 1;
            adj_vertex[fill[j]] = i;
            adj_length[fill[j]] = len;
            fill[j] += 1;
        }
        mesh.adj_start = start;
        mesh.adj_vertex = adj_vertex;
        mesh.adj_length = adj_length;

        if let Some(v) = mesh.lumped_mass.iter().position(|m| *m <= 0.0) {
            return Err(Error::invalid(format!("vertex {v} belongs to no triangle")));
        }
        if !mesh.is_connected() {
            return Err(Error::invalid("mesh is not edge-connected"));
        }
        Ok(mesh)
    }

    fn bounding_scale(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(1e-300)
    }

    fn is_connected(&self) -> bool {
        let nv = self.positions.len();
        let mut seen = vec![false; nv];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == nv
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn period(&self) -> [f64; 3] {
        self.period
    }

    /// One third of the incident triangle areas, per vertex.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn total_area(&self) -> f64 {
        self.lumped_mass.iter().sum()
    }

    pub fn min_edge_length(&self) -> f64 {
        self.min_edge
    }

    pub fn max_edge_length(&self) -> f64 {
        self.adj_length.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj_vertex[self.adj_start[v]..self.adj_start[v + 1]]
    }

    fn neighbor_lengths(&self, v: usize) -> &[f64] {
        &self.adj_length[self.adj_start[v]..self.adj_start[v + 1]]
    }

    /// `p_j - p_i`, wrapped into the periodic box when the mesh is periodic.
    pub fn edge_vector(&self, i: usize, j: usize) -> [f64; 3] {
        let (pi, pj) = (self.positions[i], self.positions[j]);
        let mut e = [pj[0] - pi[0], pj[1] - pi[1], pj[2] - pi[2]];
        for k in 0..3 {
            let p = self.period[k];
            if p > 0.0 {
                e[k] -= p * (e[k] / p).round();
            }
        }
        e
    }

    pub(crate) fn triangle_area(&self, tri: &[usize; 3]) -> f64 {
        let e1 = self.edge_vector(tri[0], tri[1]);
        let e2 = self.edge_vector(tri[0], tri[2]);
        0.5 * norm(cross(e1, e2))
    }

    /// Multi-source Dijkstra over the edge graph. Vertices farther than
    /// `radius` from every source are left at `f64::INFINITY`.
    pub fn dijkstra(&self, sources: &[usize], radius: f64) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.vertex_count()];
        self.dijkstra_run(sources, radius, &mut dist, |_, _| {}, false);
        dist
    }

    /// Bounded Dijkstra that reports each settled vertex once. `dist` is
    /// scratch space of length `vertex_count()`; it is restored to infinity
    /// for every vertex touched before returning.
    pub(crate) fn dijkstra_visit(
        &self,
        sources: &[usize],
        radius: f64,
        dist: &mut [f64],
        visit: impl FnMut(usize, f64),
    ) {
        self.dijkstra_run(sources, radius, dist, visit, true);
    }

    fn dijkstra_run(
        &self,
        sources: &[usize],
        radius: f64,
        dist: &mut [f64],
        mut visit: impl FnMut(usize, f64),
        restore: bool,
    ) {
        let mut heap = BinaryHeap::new();
        let mut touched = Vec::new();
        for &s in sources {
            if dist[s] > 0.0 {
                if dist[s].is_infinite() {
                    touched.push(s);
                }
                dist[s] = 0.0;
                heap.push(HeapEntry { dist: 0.0, vertex: s });
            }
        }
        while let Some(HeapEntry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            visit(v, d);
            for (&w, &len) in self.neighbors(v).iter().zip(self.neighbor_lengths(v)) {
                let nd = d + len;
                if nd <= radius && nd < dist[w] {
                    if dist[w].is_infinite() {
                        touched.push(w);
                    }
                    dist[w] = nd;
                    heap.push(HeapEntry { dist: nd, vertex: w });
                }
            }
        }
        if restore {
            for v in touched {
                dist[v] = f64::INFINITY;
            }
        }
    }

    /// Dijkstra from `src` that only lowers entries of an existing distance
    /// field, pruning wherever it cannot improve. Used for incremental
    /// nearest-source fields (farthest-point sampling).
    pub(crate) fn relax_from(&self, src: usize, dist: &mut [f64]) {
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(HeapEntry { dist: 0.0, vertex: src });
        while let Some(HeapEntry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for (&w, &len) in self.neighbors(v).iter().zip(self.neighbor_lengths(v)) {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(HeapEntry { dist: nd, vertex: w });
                }
            }
        }
    }

    /// Shortest edge-path length between two vertices.
    pub fn path_distance(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return 0.0;
        }
        let mut dist = vec![f64::INFINITY; self.vertex_count()];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            vertex: from,
        });
        while let Some(HeapEntry { dist: d, vertex: v }) = heap.pop() {
            if v == to {
                return d;
            }
            if d > dist[v] {
                continue;
            }
            for (&w, &len) in self.neighbors(v).iter().zip(self.neighbor_lengths(v)) {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(HeapEntry { dist: nd, vertex: w });
                }
            }
        }
        f64::INFINITY
    }

    /// Double-sweep estimate of the graph diameter (a lower bound, exact on
    /// most meshes of convex-ish surfaces).
    pub fn diameter_estimate(&self) -> f64 {
        let d0 = self.dijkstra(&[0], f64::INFINITY);
        let (far, _) = argmax(&d0);
        let d1 = self.dijkstra(&[far], f64::INFINITY);
        let (_, diam) = argmax(&d1);
        diam
    }

    /// Parses an ASCII OFF file with triangular faces.
    pub fn read_off(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter_map(|(n, l)| match l {
                Ok(s) => {
                    let body = s.split('#').next().unwrap_or("").trim().to_string();
                    (!body.is_empty()).then_some(Ok((n, body)))
                }
                Err(e) => Some(Err(Error::Io(e))),
            });

        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let (line, header) = lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(1, "empty file, expected OFF header".into()))?;
        let Some(header_rest) = header.strip_prefix("OFF").map(str::trim) else {
            return Err(parse_err(line, format!("expected OFF header, found {header:?}")));
        };

        let counts_line = if header_rest.is_empty() {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| parse_err(line + 1, "missing count line".into()))?
        } else {
            (line, header_rest.to_string())
        };
        let counts: Vec<usize> = counts_line
            .1
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(counts_line.0, format!("bad count line: {e}")))?;
        if counts.len() != 3 {
            return Err(parse_err(
                counts_line.0,
                format!("expected 3 counts (vertices faces edges), found {}", counts.len()),
            ));
        }
        let (nv, nf) = (counts[0], counts[1]);

        let mut positions = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, text) = lines
                .next()
                .transpose()?
                .ok_or_else(|| parse_err(counts_line.0, "file ends before all vertices".into()))?;
            let coords: Vec<f64> = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(n, format!("bad vertex coordinate: {e}")))?;
            if coords.len() != 3 {
                return Err(parse_err(n, format!("expected 3 coordinates, found {}", coords.len())));
            }
            positions.push([coords[0], coords[1], coords[2]]);
        }

        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (n, text) = lines
                .next()
                .transpose()?
                .ok_or_else(|| parse_err(counts_line.0, "file ends before all faces".into()))?;
            let idx: Vec<usize> = text
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(n, format!("bad face entry: {e}")))?;
            if idx.len() != 4 || idx[0] != 3 {
                return Err(parse_err(n, "only triangular faces `3 i j k` are supported".into()));
            }
            if idx[1..].iter().any(|&v| v >= nv) {
                return Err(parse_err(n, format!("face index out of range 0..{nv}")));
            }
            triangles.push([idx[1], idx[2], idx[3]]);
        }
        if let Some((n, text)) = lines.next().transpose()? {
            return Err(parse_err(n, format!("unexpected trailing content {text:?}")));
        }
        TriMesh::new(positions, triangles)
    }

    pub fn write_off(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "OFF")?;
        writeln!(w, "{} {} 0", self.positions.len(), self.triangles.len())?;
        for p in &self.positions {
            writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Unit icosphere: subdivision level `s` has `10·4^s + 2` vertices.
    pub fn icosphere(subdivisions: u32) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut positions: Vec<[f64; 3]> = [
            [-1.0, phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [0.0, 1.0, -phi],
            [phi, 0.0, -1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
        ]
        .into_iter()
        .map(normalize)
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, positions: &mut Vec<[f64; 3]>| -> usize {
                *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let (pa, pb) = (positions[a], positions[b]);
                    positions.push(normalize([pa[0] + pb[0], pa[1] + pb[1], pa[2] + pb[2]]));
                    positions.len() - 1
                })
            };
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for [a, b, c] in triangles {
                let ab = mid(a, b, &mut positions);
                let bc = mid(b, c, &mut positions);
                let ca = mid(c, a, &mut positions);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        TriMesh::new(positions, triangles).expect("icosphere construction is valid")
    }

    /// Regular `n × n` grid on the flat torus `[0, L)²`, each square split
    /// into two triangles along the same diagonal.
    pub fn torus_grid(n: usize, length: f64) -> Result<Self> {
        if n < 3 || !(length > 0.0) {
            return Err(Error::invalid("torus grid needs n >= 3 and length > 0"));
        }
        let h = length / n as f64;
        let idx = |i: usize, j: usize| (i % n) * n + (j % n);
        let positions = (0..n * n)
            .map(|v| [(v / n) as f64 * h, (v % n) as f64 * h, 0.0])
            .collect();
        let mut triangles = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        TriMesh::with_period(positions, triangles, [length, length, 0.0])
    }
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.positions == other.positions && self.triangles == other.triangles && self.period == other.period
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc })
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

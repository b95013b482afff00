//! Triangulated boundary surfaces, built-in sphere/cube hierarchies, OFF/OBJ
//! import, VTK export and CFL-driven time grids.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Finest refinement level accepted by the generators.
pub const MAX_LEVEL: usize = 8;

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    diameters: Vec<f64>,
    centroids: Vec<Vec3>,
    patch_names: Vec<String>,
    patch_of: Vec<usize>,
}

impl SurfaceMesh {
    /// Builds a mesh with a single patch named `all`. Rejects zero-area
    /// triangles and out-of-range vertex indices.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidArgument("mesh has no triangles".into()));
        }
        let nv = vertices.len();
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut diameters = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        for (e, t) in triangles.iter().enumerate() {
            if let Some(&bad) = t.iter().find(|&&i| i >= nv) {
                return Err(Error::InvalidArgument(format!(
                    "element {e} references vertex {bad} but only {nv} vertices exist"
                )));
            }
            let p = t.map(|i| vertices[i]);
            let n = geom::cross(geom::sub(p[1], p[0]), geom::sub(p[2], p[0]));
            let area = 0.5 * geom::norm(n);
            let diam = (0..3)
                .map(|k| geom::dist(p[k], p[(k + 1) % 3]))
                .fold(0.0, f64::max);
            if !(area > 1e-12 * diam * diam) {
                return Err(Error::DegenerateElement { element: e, area });
            }
            normals.push(geom::scale(n, 0.5 / area));
            areas.push(area);
            diameters.push(diam);
            centroids.push(geom::scale(geom::add(geom::add(p[0], p[1]), p[2]), 1.0 / 3.0));
        }
        let ne = triangles.len();
        Ok(SurfaceMesh {
            vertices,
            triangles,
            normals,
            areas,
            diameters,
            centroids,
            patch_names: vec!["all".into()],
            patch_of: vec![0; ne],
        })
    }

    /// Relabels elements by a predicate on their centroid; `classify` returns
    /// an index into `names`.
    pub fn label_patches<F>(&mut self, names: &[&str], classify: F) -> Result<()>
    where
        F: Fn(Vec3) -> usize,
    {
        let labels: Vec<usize> = self.centroids.iter().map(|&c| classify(c)).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= names.len()) {
            return Err(Error::InvalidArgument(format!(
                "patch index {bad} out of range for {} names",
                names.len()
            )));
        }
        self.patch_names = names.iter().map(|s| s.to_string()).collect();
        self.patch_of = labels;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, e: usize) -> [Vec3; 3] {
        self.triangles[e].map(|i| self.vertices[i])
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn diameters(&self) -> &[f64] {
        &self.diameters
    }

    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }

    pub fn patch_names(&self) -> &[String] {
        &self.patch_names
    }

    /// Patch index of every element.
    pub fn patches(&self) -> &[usize] {
        &self.patch_of
    }

    pub fn patch_index(&self, name: &str) -> Option<usize> {
        self.patch_names.iter().position(|p| p == name)
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Mesh size h: the largest element diameter.
    pub fn h(&self) -> f64 {
        self.diameters.iter().copied().fold(0.0, f64::max)
    }

    /// Diameter of Γ: the exact maximum distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d2: f64 = 0.0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                let r = geom::sub(v[i], v[j]);
                d2 = d2.max(geom::dot(r, r));
            }
        }
        d2.sqrt()
    }

    /// Undirected edges with the number of incident triangles.
    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// V − E + F over the vertices referenced by triangles.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.edge_counts().values().all(|&c| c == 2)
    }

    /// Signed enclosed volume (positive for outward normals of a closed surface).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                geom::dot(a, geom::cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Distance from `p` to the surface.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        (0..self.len())
            .map(|e| geom::point_triangle_distance(p, &self.triangle(e)))
            .fold(f64::INFINITY, f64::min)
    }

    fn flip(&mut self, e: usize) {
        self.triangles[e].swap(1, 2);
        self.normals[e] = geom::scale(self.normals[e], -1.0);
    }
}

/// Subdivided icosahedron projected to the unit sphere, 20·4^level elements.
pub fn gen_icosphere(level: usize) -> Result<SurfaceMesh> {
    if level == 0 {
        return Err(Error::InvalidArgument("icosphere level must be >= 1".into()));
    }
    if level > MAX_LEVEL {
        return Err(Error::Resource(format!(
            "icosphere level {level} exceeds {MAX_LEVEL} ({} elements)",
            20usize << (2 * level)
        )));
    }
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| geom::normalize(v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
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
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = geom::normalize(geom::scale(geom::add(vertices[a], vertices[b]), 0.5));
                vertices.push(m);
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    SurfaceMesh::new(vertices, faces)
}

/// Structured triangulation of ∂([-1,1]^3) with 12·4^level elements and
/// patches `top` (x_3 = 1) and `sides` (everything else).
pub fn gen_cube(level: usize) -> Result<SurfaceMesh> {
    if level == 0 {
        return Err(Error::InvalidArgument("cube level must be >= 1".into()));
    }
    if level > MAX_LEVEL {
        return Err(Error::Resource(format!("cube level {level} exceeds {MAX_LEVEL}")));
    }
    let n = 1usize << level;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(12 * n * n);
    // (normal axis, sign): in-face axes (u, w) chosen so u × w points outward.
    for axis in 0..3 {
        for &sign in &[1i64, -1] {
            let (mut u, mut w) = ((axis + 1) % 3, (axis + 2) % 3);
            if sign < 0 {
                std::mem::swap(&mut u, &mut w);
            }
            let mut vid = |i: usize, j: usize, vertices: &mut Vec<Vec3>| -> usize {
                let mut key = [0i64; 3];
                key[axis] = sign * n as i64;
                key[u] = 2 * i as i64 - n as i64;
                key[w] = 2 * j as i64 - n as i64;
                *index.entry(key).or_insert_with(|| {
                    vertices.push(key.map(|k| k as f64 / n as f64));
                    vertices.len() - 1
                })
            };
            for i in 0..n {
                for j in 0..n {
                    let a = vid(i, j, &mut vertices);
                    let b = vid(i + 1, j, &mut vertices);
                    let c = vid(i + 1, j + 1, &mut vertices);
                    let d = vid(i, j + 1, &mut vertices);
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
            }
        }
    }
    let mut mesh = SurfaceMesh::new(vertices, triangles)?;
    mesh.label_patches(&["top", "sides"], |c| usize::from(c[2] <= 1.0 - 1e-9))?;
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ImportOptions {
    /// Make orientation consistent within each connected component and point
    /// normals outward on closed components.
    pub orient: bool,
    /// Components (in order of first element) to flip after orientation.
    /// Open surfaces have no inside, so their side is the user's choice.
    pub flip_components: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ImportedMesh {
    pub mesh: SurfaceMesh,
    pub components: usize,
    pub warnings: Vec<String>,
}

pub fn import_mesh(path: &Path, format: MeshFormat, opts: &ImportOptions) -> Result<ImportedMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(path, &text)?,
        MeshFormat::Obj => parse_obj(path, &text)?,
    };
    let mut triangles = Vec::new();
    for poly in &faces {
        for k in 1..poly.len() - 1 {
            triangles.push([poly[0], poly[k], poly[k + 1]]);
        }
    }
    let mut mesh = SurfaceMesh::new(vertices, triangles)?;
    let mut warnings = Vec::new();
    let counts = mesh.edge_counts();
    let nonmanifold = counts.values().filter(|&&c| c > 2).count();
    if nonmanifold > 0 {
        warnings.push(format!("{nonmanifold} non-manifold edges (shared by more than two triangles)"));
    }
    let boundary = counts.values().filter(|&&c| c == 1).count();
    if boundary > 0 {
        warnings.push(format!("open surface: {boundary} boundary edges"));
    }
    let comps = components(&mesh);
    let ncomp = comps.iter().copied().max().map_or(0, |m| m + 1);
    if opts.orient {
        warnings.extend(orient(&mut mesh, &comps, ncomp));
    }
    for &c in &opts.flip_components {
        if c >= ncomp {
            return Err(Error::InvalidArgument(format!(
                "flip component {c} but mesh has {ncomp} components"
            )));
        }
        for e in 0..mesh.len() {
            if comps[e] == c {
                mesh.flip(e);
            }
        }
    }
    Ok(ImportedMesh {
        mesh,
        components: ncomp,
        warnings,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(path, line, "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad number `{tok}`")))
}

type Polygons = (Vec<Vec3>, Vec<Vec<usize>>);

fn parse_off(path: &Path, text: &str) -> Result<Polygons> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut counts_line = None;
    if let Some(rest) = header.strip_prefix("OFF") {
        if !rest.trim().is_empty() {
            counts_line = Some((ln, rest.trim()));
        }
    } else {
        return Err(parse_err(path, ln, "missing OFF header"));
    }
    let (ln, counts) = match counts_line {
        Some(c) => c,
        None => lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "missing element counts"))?,
    };
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, ln, "bad element counts"))?;
    if nums.len() < 2 {
        return Err(parse_err(path, ln, "expected vertex and face counts"));
    }
    let (nv, nf) = (nums[0], nums[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "unexpected end of file in vertex list"))?;
        let mut it = l.split_whitespace();
        let v = [
            parse_f64(path, ln, it.next())?,
            parse_f64(path, ln, it.next())?,
            parse_f64(path, ln, it.next())?,
        ];
        vertices.push(v);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "unexpected end of file in face list"))?;
        let toks: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, ln, "bad face index"))?;
        let (&k, rest) = toks
            .split_first()
            .ok_or_else(|| parse_err(path, ln, "empty face"))?;
        if k < 3 || rest.len() < k {
            return Err(parse_err(path, ln, format!("face needs at least 3 of {k} indices")));
        }
        let poly = rest[..k].to_vec();
        if let Some(&bad) = poly.iter().find(|&&i| i >= nv) {
            return Err(parse_err(path, ln, format!("vertex index {bad} out of range")));
        }
        faces.push(poly);
    }
    Ok((vertices, faces))
}

fn parse_obj(path: &Path, text: &str) -> Result<Polygons> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let v = [
                    parse_f64(path, ln, it.next())?,
                    parse_f64(path, ln, it.next())?,
                    parse_f64(path, ln, it.next())?,
                ];
                vertices.push(v);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let idx = tok.split('/').next().unwrap_or("");
                    let k: i64 = idx
                        .parse()
                        .map_err(|_| parse_err(path, ln, format!("bad face index `{tok}`")))?;
                    let resolved = if k > 0 {
                        k - 1
                    } else if k < 0 {
                        vertices.len() as i64 + k
                    } else {
                        return Err(parse_err(path, ln, "face index 0 is invalid"));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(path, ln, format!("vertex index {k} out of range")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, ln, "face needs at least 3 vertices"));
                }
                faces.push(poly);
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(parse_err(path, text.lines().count().max(1), "no faces"));
    }
    Ok((vertices, faces))
}

/// Connected component of every element (sharing an edge).
fn components(mesh: &SurfaceMesh) -> Vec<usize> {
    let adj = edge_adjacency(mesh);
    let mut comp = vec![usize::MAX; mesh.len()];
    let mut next = 0;
    for start in 0..mesh.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(e) = stack.pop() {
            for &(f, _) in &adj[e] {
                if comp[f] == usize::MAX {
                    comp[f] = next;
                    stack.push(f);
                }
            }
        }
        next += 1;
    }
    comp
}

/// For each element, neighbours across manifold edges and whether the shared
/// edge is traversed in the same direction (inconsistent orientation).
fn edge_adjacency(mesh: &SurfaceMesh) -> Vec<Vec<(usize, bool)>> {
    let mut by_edge: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
    for (e, t) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push((e, a < b));
        }
    }
    let mut adj = vec![Vec::new(); mesh.len()];
    for list in by_edge.values() {
        if list.len() != 2 {
            continue;
        }
        let ((e, de), (f, df)) = (list[0], list[1]);
        adj[e].push((f, de == df));
        adj[f].push((e, de == df));
    }
    adj
}

fn orient(mesh: &mut SurfaceMesh, comps: &[usize], ncomp: usize) -> Vec<String> {
    let adj = edge_adjacency(mesh);
    let mut flip = vec![None::<bool>; mesh.len()];
    let mut warnings = Vec::new();
    for start in 0..mesh.len() {
        if flip[start].is_some() {
            continue;
        }
        flip[start] = Some(false);
        let mut stack = vec![start];
        let mut conflict = false;
        while let Some(e) = stack.pop() {
            let fe = flip[e].unwrap_or(false);
            for &(f, same_dir) in &adj[e] {
                let want = fe ^ same_dir;
                match flip[f] {
                    None => {
                        flip[f] = Some(want);
                        stack.push(f);
                    }
                    Some(have) if have != want => conflict = true,
                    _ => {}
                }
            }
        }
        if conflict {
            warnings.push(format!(
                "component {} is not orientable; orientation left partially as given",
                comps[start]
            ));
        }
    }
    for e in 0..mesh.len() {
        if flip[e] == Some(true) {
            mesh.flip(e);
        }
    }
    // Closed components: make the enclosed volume positive.
    let counts = mesh.edge_counts();
    for c in 0..ncomp {
        let members: Vec<usize> = (0..mesh.len()).filter(|&e| comps[e] == c).collect();
        let closed = members.iter().all(|&e| {
            let t = mesh.triangles[e];
            (0..3).all(|k| {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                counts[&(a.min(b), a.max(b))] == 2
            })
        });
        if !closed {
            continue;
        }
        let vol: f64 = members
            .iter()
            .map(|&e| {
                let [a, b, cc] = mesh.triangle(e);
                geom::dot(a, geom::cross(b, cc))
            })
            .sum();
        if vol < 0.0 {
            for &e in &members {
                mesh.flip(e);
            }
        }
    }
    warnings
}

/// Writes VTK legacy ASCII with one CELL_DATA scalar array per field.
pub fn write_vtk(path: &Path, mesh: &SurfaceMesh, fields: &[(&str, &[f64])]) -> Result<()> {
    for (name, f) in fields {
        if f.len() != mesh.len() {
            return Err(Error::InvalidArgument(format!(
                "field `{name}` has {} values for {} elements",
                f.len(),
                mesh.len()
            )));
        }
    }
    let io = |e| Error::io(path, e);
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "sgbem surface")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET POLYDATA")?;
        writeln!(w, "POINTS {} double", mesh.vertices.len())?;
        for v in &mesh.vertices {
            writeln!(w, "{:e} {:e} {:e}", v[0], v[1], v[2])?;
        }
        writeln!(w, "POLYGONS {} {}", mesh.len(), 4 * mesh.len())?;
        for t in &mesh.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "CELL_DATA {}", mesh.len())?;
        for (name, f) in fields {
            let name: String = name
                .chars()
                .map(|c| if c.is_whitespace() { '_' } else { c })
                .collect();
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for x in f.iter() {
                writeln!(w, "{x:e}")?;
            }
        }
        w.flush()
    };
    body().map_err(io)
}

/// Uniform time grid t_m = m·Δt, m = 0..N_o.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
    pub c: f64,
    pub requested_cfl: f64,
    pub achieved_cfl: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize, c: f64) -> Result<Self> {
        if !(dt > 0.0) || !(c > 0.0) || steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs dt > 0, c > 0 and at least one step (dt={dt}, c={c}, steps={steps})"
            )));
        }
        Ok(TimeGrid {
            dt,
            steps,
            c,
            requested_cfl: f64::NAN,
            achieved_cfl: f64::NAN,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        self.dt * m as f64
    }
}

/// Time grid with Δt ≈ cfl·h/c and N_o = round(T/(cfl·h/c)) steps exactly
/// covering [0, T].
pub fn cfl_timegrid(h: f64, cfl: f64, horizon: f64, c: f64) -> Result<TimeGrid> {
    if !(cfl > 0.0) || !(horizon > 0.0) || !(c > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cfl, horizon, wave speed and h must be positive (cfl={cfl}, T={horizon}, c={c}, h={h})"
        )));
    }
    let dt_req = cfl * h / c;
    if horizon < dt_req {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is shorter than one time step {dt_req}"
        )));
    }
    let steps = (horizon / dt_req).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    Ok(TimeGrid {
        dt,
        steps,
        c,
        requested_cfl: cfl,
        achieved_cfl: c * dt / h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;


    #[test]
    fn icosphere_counts_and_orientation() {
        assert_eq!(gen_icosphere(1).unwrap().len(), 80);
        assert_eq!(gen_icosphere(2).unwrap().len(), 320);
        let m = gen_icosphere(3).unwrap();
        assert_eq!(m.len(), 1280);
        for (n, c) in m.normals().iter().zip(m.centroids()) {
            assert!(geom::dot(*n, *c) > 0.0);
            assert!((geom::norm(*n) - 1.0).abs() < 1e-12);
        }
        assert!((m.total_area() - 4.0 * std::f64::consts::PI).abs() < 0.01 * 4.0 * std::f64::consts::PI);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_closed());
        assert!(gen_icosphere(0).is_err());
        assert!(matches!(gen_icosphere(MAX_LEVEL + 1), Err(Error::Resource(_))));
    }

    #[test]
    fn refinement_halves_h() {
        for gen in [gen_icosphere as fn(usize) -> Result<SurfaceMesh>, gen_cube] {
            for level in 1..4 {
                let a = gen(level).unwrap();
                let b = gen(level + 1).unwrap();
                assert_eq!(b.len(), 4 * a.len());
                let ratio = a.h() / b.h();
                assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
            }
        }
    }

    #[test]
    fn cube_examples() {
        let m = gen_cube(1).unwrap();
        assert_eq!(m.len(), 48);
        assert!((m.total_area() - 24.0).abs() < 1e-12);
        assert!((m.h() - 2f64.sqrt()).abs() < 1e-14);
        assert!((m.signed_volume() - 8.0).abs() < 1e-12);
        let m2 = gen_cube(2).unwrap();
        assert_eq!(m2.len(), 192);
        let top = m2.patch_index("top").unwrap();
        assert_eq!(m2.patches().iter().filter(|&&p| p == top).count(), 32);
        for level in 1..4 {
            let m = gen_cube(level).unwrap();
            assert_eq!(m.euler_characteristic(), 2);
            assert!(m.is_closed());
            for (n, c) in m.normals().iter().zip(m.centroids()) {
                assert!(geom::dot(*n, *c) > 0.0);
            }
        }
        assert!((m.diameter() - 12f64.sqrt()).abs() < 1e-14);
    }

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const CUBE_OFF: &str = "OFF\n8 6 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 1 2 6 5\n4 2 3 7 6\n4 3 0 4 7\n";

    #[test]
    fn import_unit_cube_off() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "cube.off", CUBE_OFF);
        let r = import_mesh(&p, MeshFormat::Off, &ImportOptions::default()).unwrap();
        assert_eq!(r.mesh.len(), 12);
        assert!((r.mesh.total_area() - 6.0).abs() < 1e-14);
        assert!(r.mesh.signed_volume() > 0.0);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn import_orients_inverted_faces() {
        let dir = tempfile::tempdir().unwrap();
        // Second face listed clockwise, whole thing inside out otherwise.
        let bad = CUBE_OFF.replace("4 4 5 6 7", "4 7 6 5 4").replace("4 0 3 2 1", "4 1 2 3 0");
        let p = write_tmp(&dir, "cube.off", &bad);
        let raw = import_mesh(&p, MeshFormat::Off, &ImportOptions::default()).unwrap();
        assert!(raw.mesh.signed_volume().abs() < 1.0 - 1e-9);
        let opts = ImportOptions {
            orient: true,
            ..Default::default()
        };
        let r = import_mesh(&p, MeshFormat::Off, &opts).unwrap();
        assert!((r.mesh.signed_volume() - 1.0).abs() < 1e-12);
        for (n, c) in r.mesh.normals().iter().zip(r.mesh.centroids()) {
            assert!(geom::dot(*n, geom::sub(*c, [0.5; 3])) > 0.0);
        }
    }

    #[test]
    fn import_rejects_degenerate_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let body = "OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n2 0 0\n3 0 1 2\n3 0 1 3\n";
        let p = write_tmp(&dir, "deg.off", body);
        let err = import_mesh(&p, MeshFormat::Off, &ImportOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateElement { element: 1, .. }), "{err}");
    }

    #[test]
    fn import_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "bad.off", "OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n");
        match import_mesh(&p, MeshFormat::Off, &ImportOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let p = write_tmp(&dir, "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
        match import_mesh(&p, MeshFormat::Obj, &ImportOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn import_octahedron_obj() {
        let dir = tempfile::tempdir().unwrap();
        let body = "# octahedron\nv 1 0 0\nv -1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\nv 0 0 -1\n\
f 1 3 5\nf 3 2 5\nf 2 4 5\nf 4 1 5\nf 3 1 6\nf 2 3 6\nf 4 2 6\nf 1 4 6\n";
        let p = write_tmp(&dir, "oct.obj", body);
        let r = import_mesh(&p, MeshFormat::Obj, &ImportOptions::default()).unwrap();
        assert_eq!(r.mesh.len(), 8);
        assert!(r.mesh.is_closed());
        assert_eq!(r.mesh.euler_characteristic(), 2);
        assert!((r.mesh.signed_volume() - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn open_surface_warns_and_flips() {
        let dir = tempfile::tempdir().unwrap();
        let body = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let p = write_tmp(&dir, "quad.obj", body);
        let opts = ImportOptions {
            orient: true,
            flip_components: vec![0],
        };
        let r = import_mesh(&p, MeshFormat::Obj, &opts).unwrap();
        assert_eq!(r.mesh.len(), 2);
        assert!(r.warnings.iter().any(|w| w.contains("boundary")));
        assert!(r.mesh.normals().iter().all(|n| (n[2] + 1.0).abs() < 1e-15));
    }

    #[test]
    fn vtk_has_cell_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_cube(1).unwrap();
        let mean = vec![1.0; m.len()];
        let var = vec![0.5; m.len()];
        let p = dir.path().join("m.vtk");
        write_vtk(&p, &m, &[("mean", &mean), ("variance", &var)]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert_eq!(text.matches("SCALARS").count(), 2);
        assert!(text.contains("CELL_DATA 48"));
        assert!(write_vtk(&p, &m, &[("short", &[1.0])]).is_err());
    }

    #[test]
    fn cfl_examples() {
        let g = cfl_timegrid(gen_icosphere(1).unwrap().h(), 0.605, 2.0, 1.0).unwrap();
        assert_eq!(g.steps, 5);
        let g = cfl_timegrid(gen_icosphere(2).unwrap().h(), 0.605, 2.0, 1.0).unwrap();
        assert_eq!(g.steps, 10);
        let g = cfl_timegrid(1.0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!((g.dt, g.steps), (0.5, 2));
        assert!((g.achieved_cfl - 0.5).abs() < 1e-15);
        assert!(cfl_timegrid(1.0, 0.5, 0.3, 1.0).is_err());
        assert!(cfl_timegrid(1.0, 0.0, 1.0, 1.0).is_err());
        assert!((g.horizon() - 1.0).abs() < 1e-15);
    }
}

//! Triangulations of the polygonal unit disk.
//!
//! Points keep their construction order in [`Mesh::points`]. Everything
//! downstream (FEM matrices, nodal vectors) uses *solver order*: interior
//! points first, then boundary points, each group in construction order.
//! `perm[new] = old` maps solver order back to construction order.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<[f64; 2]>,
    theta: Vec<Option<f64>>,
    edges: Vec<[usize; 2]>,
    triangles: Vec<[usize; 3]>,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    n_boundary: usize,
}

fn signed_area(p: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [a, b, c] = [p[t[0]], p[t[1]], p[t[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn polar_angle(p: [f64; 2]) -> f64 {
    p[1].atan2(p[0]).rem_euclid(2.0 * PI)
}

impl Mesh {
    /// Builds a mesh from points, per-point boundary parameters and triangles
    /// (0-based). Triangles are reoriented counterclockwise; boundary edges are
    /// the triangle edges used exactly once.
    fn assemble(
        points: Vec<[f64; 2]>,
        theta: Vec<Option<f64>>,
        mut triangles: Vec<[usize; 3]>,
    ) -> Result<Mesh> {
        let n = points.len();
        for (ti, t) in triangles.iter_mut().enumerate() {
            let a = signed_area(&points, *t);
            if a.abs() <= f64::EPSILON * 1e-2 || !a.is_finite() {
                return Err(Error::NonPositiveArea(ti));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
        }

        let mut count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for t in &triangles {
            for e in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
                let key = (e[0].min(e[1]), e[0].max(e[1]));
                count.entry(key).or_insert((0, e)).0 += 1;
            }
        }
        let mut edges: Vec<[usize; 2]> = count
            .into_values()
            .filter(|(c, _)| *c == 1)
            .map(|(_, e)| e)
            .collect();
        edges.sort_unstable();

        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e[0]] += 1;
            degree[e[1]] += 1;
        }
        for (i, th) in theta.iter().enumerate() {
            match (th.is_some(), degree[i]) {
                (true, 2) | (false, 0) => {}
                (true, d) => {
                    return Err(Error::MalformedMesh {
                        line: 0,
                        reason: format!("boundary point {} lies on {d} boundary edges", i + 1),
                    })
                }
                (false, _) => {
                    return Err(Error::MalformedMesh {
                        line: 0,
                        reason: format!("point {} is on the boundary but has no theta", i + 1),
                    })
                }
            }
        }

        let mut perm: Vec<usize> = (0..n).filter(|&i| theta[i].is_none()).collect();
        let n_interior = perm.len();
        perm.extend((0..n).filter(|&i| theta[i].is_some()));
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        Ok(Mesh {
            points,
            theta,
            edges,
            triangles,
            perm,
            inv_perm,
            n_boundary: n - n_interior,
        })
    }

    /// Concentric-ring triangulation: ring `r` (1..=rings) has `6r` points at
    /// radius `r/rings`, plus the center.
    pub fn disk(rings: usize) -> Mesh {
        assert!(rings >= 1, "rings must be positive");
        let idx = |r: usize, i: usize| -> usize {
            if r == 0 {
                0
            } else {
                1 + 3 * r * (r - 1) + i % (6 * r)
            }
        };
        let mut points = vec![[0.0, 0.0]];
        let mut theta = vec![None];
        for r in 1..=rings {
            let rad = r as f64 / rings as f64;
            for i in 0..6 * r {
                let ang = 2.0 * PI * i as f64 / (6 * r) as f64;
                points.push([rad * ang.cos(), rad * ang.sin()]);
                theta.push((r == rings).then_some(ang));
            }
        }
        let mut triangles = Vec::with_capacity(6 * rings * rings);
        for r in 1..=rings {
            for s in 0..6 {
                let o = |k: usize| idx(r, s * r + k);
                let p = |k: usize| idx(r - 1, s * (r - 1) + k);
                for k in 0..r {
                    triangles.push([o(k), o(k + 1), p(k)]);
                }
                for k in 0..r.saturating_sub(1) {
                    triangles.push([p(k), o(k + 1), p(k + 1)]);
                }
            }
        }
        Mesh::assemble(points, theta, triangles).expect("ring mesh is valid")
    }

    /// Regular refinement through edge midpoints; boundary midpoints stay on
    /// the polygon.
    pub fn refine(&self) -> Mesh {
        self.refine_with(false)
    }

    /// Regular refinement; with `project_to_circle` new boundary points are
    /// pushed radially onto the unit circle.
    pub fn refine_with(&self, project_to_circle: bool) -> Mesh {
        let mut points = self.points.clone();
        let mut theta = self.theta.clone();
        let boundary_edges: std::collections::HashSet<(usize, usize)> = self
            .edges
            .iter()
            .map(|e| (e[0].min(e[1]), e[0].max(e[1])))
            .collect();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint =
            |a: usize, b: usize, points: &mut Vec<[f64; 2]>, theta: &mut Vec<Option<f64>>| {
                let key = (a.min(b), a.max(b));
                *mid.entry(key).or_insert_with(|| {
                    let (pa, pb) = (points[a], points[b]);
                    let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                    let on_boundary = boundary_edges.contains(&key);
                    if on_boundary && project_to_circle {
                        let r = m[0].hypot(m[1]);
                        m = [m[0] / r, m[1] / r];
                    }
                    points.push(m);
                    theta.push(on_boundary.then(|| polar_angle(m)));
                    points.len() - 1
                })
            };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let mab = midpoint(a, b, &mut points, &mut theta);
            let mbc = midpoint(b, c, &mut points, &mut theta);
            let mca = midpoint(c, a, &mut points, &mut theta);
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
        }
        Mesh::assemble(points, theta, triangles).expect("refinement of a valid mesh is valid")
    }

    /// Parses the text mesh format:
    ///
    /// ```text
    /// points N
    /// x y [theta]      # N lines; theta present iff boundary point
    /// triangles M
    /// i j k            # M lines, 1-based
    /// ```
    pub fn load(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
            .filter(|(_, l)| !l.is_empty());
        let malformed = |line: usize, reason: &str| Error::MalformedMesh {
            line,
            reason: reason.to_string(),
        };
        let header =
            |lines: &mut dyn Iterator<Item = (usize, &str)>, word: &str| -> Result<usize> {
                let (ln, l) = lines
                    .next()
                    .ok_or_else(|| malformed(0, &format!("missing `{word} N` header")))?;
                let mut it = l.split_whitespace();
                match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                    (Some(w), Some(Ok(n)), None) if w == word => Ok(n),
                    _ => Err(malformed(ln, &format!("expected `{word} N`"))),
                }
            };

        let n = header(&mut lines, "points")?;
        let mut points = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| malformed(0, "fewer points than declared"))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(ln, "point coordinates must be numbers"))?;
            match vals.as_slice() {
                [x, y] => {
                    points.push([*x, *y]);
                    theta.push(None);
                }
                [x, y, th] => {
                    points.push([*x, *y]);
                    theta.push(Some(th.rem_euclid(2.0 * PI)));
                }
                _ => return Err(malformed(ln, "expected `x y` or `x y theta`")),
            }
        }

        let m = header(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(m);
        for ti in 0..m {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| malformed(0, "fewer triangles than declared"))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(str::parse::<usize>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(ln, "triangle indices must be positive integers"))?;
            if idx.len() != 3 {
                return Err(malformed(ln, "expected three indices"));
            }
            let mut t = [0; 3];
            for (slot, &i) in t.iter_mut().zip(&idx) {
                if i == 0 || i > n {
                    return Err(Error::DanglingIndex {
                        triangle: ti + 1,
                        index: i,
                        n_points: n,
                    });
                }
                *slot = i - 1;
            }
            triangles.push(t);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(malformed(ln, "trailing content after triangles"));
        }
        Mesh::assemble(points, theta, triangles)
    }

    /// Serializes in the format accepted by [`Mesh::load`].
    pub fn to_text(&self) -> String {
        let mut s = format!("points {}\n", self.points.len());
        for (p, th) in self.points.iter().zip(&self.theta) {
            match th {
                Some(th) => s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p[0], p[1], th)),
                None => s.push_str(&format!("{:.17e} {:.17e}\n", p[0], p[1])),
            }
        }
        s.push_str(&format!("triangles {}\n", self.triangles.len()));
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        s
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
    pub fn theta(&self) -> &[Option<f64>] {
        &self.theta
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    /// `perm[new] = old`: solver order to construction order.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }
    /// `inv_perm[old] = new`.
    pub fn inv_perm(&self) -> &[usize] {
        &self.inv_perm
    }
    pub fn n_points(&self) -> usize {
        self.points.len()
    }
    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }
    pub fn n_interior(&self) -> usize {
        self.points.len() - self.n_boundary
    }

    /// Point coordinates in solver order.
    pub fn ordered_points(&self) -> Vec<[f64; 2]> {
        self.perm.iter().map(|&o| self.points[o]).collect()
    }

    /// Boundary parameters of the boundary points, in solver order.
    pub fn boundary_theta(&self) -> Vec<f64> {
        self.perm[self.n_interior()..]
            .iter()
            .map(|&o| self.theta[o].expect("boundary point has theta"))
            .collect()
    }

    /// Triangle vertex indices in solver order.
    pub fn ordered_triangles(&self) -> Vec<[usize; 3]> {
        self.triangles
            .iter()
            .map(|t| {
                [
                    self.inv_perm[t[0]],
                    self.inv_perm[t[1]],
                    self.inv_perm[t[2]],
                ]
            })
            .collect()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.points, self.triangles[t])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Shoelace area of the boundary polygon.
    pub fn polygon_area(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.points[a], self.points[b]);
                0.5 * (p[0] * q[1] - q[0] * p[1])
            })
            .sum()
    }

    /// Longest triangle edge.
    pub fn hmax(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]])
            .map(|[a, b]| {
                let (p, q) = (self.points[a], self.points[b]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .fold(0.0, f64::max)
    }
}

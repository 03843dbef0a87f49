//! Uniform tensor-product meshes of intervals and axis-aligned rectangles.
//!
//! Elements are numbered row-major (`e = ix + nx * iy`). Every face stores the
//! element it belongs to as `left`; for interior faces `right` is the element
//! on the other side and the unit normal points from `left` into `right`. For
//! boundary faces the normal is the outward normal of `left`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Boundary condition class attached to a boundary face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    /// Prescribed (time-independent) external state.
    Inflow,
    /// No condition; the exterior state copies the interior one.
    Outflow,
    /// Reflecting wall.
    Wall,
    /// Prescribed state that depends on position and time.
    DirichletTimed,
}

/// Local face of a reference element. 1D elements only use `Left`/`Right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn for_dim(dim: usize) -> &'static [Side] {
        if dim == 1 {
            &Self::ALL[..2]
        } else {
            &Self::ALL
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    /// Element offset `(dx, dy)` of the neighbor across this side.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Side::Left => (-1, 0),
            Side::Right => (1, 0),
            Side::Bottom => (0, -1),
            Side::Top => (0, 1),
        }
    }

    pub fn outward_normal<T: Real>(self) -> [T; 2] {
        let (dx, dy) = self.offset();
        [T::lit(dx as f64), T::lit(dy as f64)]
    }
}

#[derive(Clone, Debug)]
pub struct Face<T> {
    pub left: usize,
    pub left_side: Side,
    pub right: Option<usize>,
    pub normal: [T; 2],
    pub center: [T; 2],
    /// Length of the edge in 2D, 1 for a point face in 1D.
    pub measure: T,
    pub tag: Option<BoundaryTag>,
}

impl<T: Real> Face<T> {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    dim: usize,
    nx: usize,
    ny: usize,
    origin: [T; 2],
    hx: T,
    hy: T,
    periodic: bool,
    vertices: Vec<[T; 2]>,
    element_vertices: Vec<Vec<usize>>,
    faces: Vec<Face<T>>,
    element_faces: Vec<[Option<usize>; 4]>,
    neighbors: Vec<[Option<usize>; 4]>,
}

impl<T: Real> Mesh<T> {
    /// `count` equal cells on `[x0, x1]`. Boundary points are tagged inflow
    /// (left) and outflow (right) unless the mesh is periodic.
    pub fn build_uniform_line(x0: T, x1: T, count: usize, periodic: bool) -> Result<Self> {
        if !(x1 > x0) || !x0.is_finite() || !x1.is_finite() {
            return Err(Error::InvalidMesh(format!(
                "degenerate interval [{x0}, {x1}]"
            )));
        }
        if count == 0 || (periodic && count < 2) {
            return Err(Error::InvalidMesh(format!(
                "a line mesh needs at least {} elements, got {count}",
                if periodic { 2 } else { 1 }
            )));
        }
        let hx = (x1 - x0) / T::count(count);
        let nvert = if periodic { count } else { count + 1 };
        let vertices = (0..nvert)
            .map(|i| [x0 + hx * T::count(i), T::zero()])
            .collect();
        let element_vertices = (0..count)
            .map(|e| vec![e, if periodic { (e + 1) % count } else { e + 1 }])
            .collect();
        let mut mesh = Mesh {
            dim: 1,
            nx: count,
            ny: 1,
            origin: [x0, T::zero()],
            hx,
            hy: hx,
            periodic,
            vertices,
            element_vertices,
            faces: Vec::new(),
            element_faces: vec![[None; 4]; count],
            neighbors: vec![[None; 4]; count],
        };
        mesh.build_topology();
        Ok(mesh)
    }

    /// `nx * ny` congruent rectangles on `[x0, x1] x [y0, y1]`. Boundary
    /// faces default to `Inflow`; periodic meshes wrap in both directions.
    pub fn build_uniform_quad(
        x0: T,
        y0: T,
        x1: T,
        y1: T,
        nx: usize,
        ny: usize,
        periodic: bool,
    ) -> Result<Self> {
        if !(x1 > x0) || !(y1 > y0) {
            return Err(Error::InvalidMesh(format!(
                "degenerate box [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(format!(
                "element counts must be positive, got {nx} x {ny}"
            )));
        }
        if periodic && (nx < 2 || ny < 2) {
            return Err(Error::InvalidMesh(
                "periodic quad meshes need at least 2 elements per direction".into(),
            ));
        }
        let hx = (x1 - x0) / T::count(nx);
        let hy = (y1 - y0) / T::count(ny);
        let (vx, vy) = if periodic { (nx, ny) } else { (nx + 1, ny + 1) };
        let mut vertices = Vec::with_capacity(vx * vy);
        for j in 0..vy {
            for i in 0..vx {
                vertices.push([x0 + hx * T::count(i), y0 + hy * T::count(j)]);
            }
        }
        let vid = |i: usize, j: usize| (i % vx) + vx * (j % vy);
        let mut element_vertices = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                element_vertices.push(vec![
                    vid(i, j),
                    vid(i + 1, j),
                    vid(i + 1, j + 1),
                    vid(i, j + 1),
                ]);
            }
        }
        let mut mesh = Mesh {
            dim: 2,
            nx,
            ny,
            origin: [x0, y0],
            hx,
            hy,
            periodic,
            vertices,
            element_vertices,
            faces: Vec::new(),
            element_faces: vec![[None; 4]; nx * ny],
            neighbors: vec![[None; 4]; nx * ny],
        };
        mesh.build_topology();
        Ok(mesh)
    }

    fn build_topology(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        let half = T::half();
        // faces normal to x
        for j in 0..ny {
            for i in 0..=nx {
                let yc = if self.dim == 1 {
                    T::zero()
                } else {
                    self.origin[1] + self.hy * (T::count(j) + half)
                };
                let xc = self.origin[0] + self.hx * T::count(i);
                let measure = if self.dim == 1 { T::one() } else { self.hy };
                let (left, side, right, normal) = if i == 0 {
                    if self.periodic {
                        continue;
                    }
                    (self.element_index(0, j), Side::Left, None, Side::Left.outward_normal())
                } else if i == nx {
                    let l = self.element_index(nx - 1, j);
                    let r = if self.periodic {
                        Some(self.element_index(0, j))
                    } else {
                        None
                    };
                    (l, Side::Right, r, Side::Right.outward_normal())
                } else {
                    (
                        self.element_index(i - 1, j),
                        Side::Right,
                        Some(self.element_index(i, j)),
                        Side::Right.outward_normal(),
                    )
                };
                self.push_face(left, side, right, normal, [xc, yc], measure);
            }
        }
        if self.dim == 2 {
            for j in 0..=ny {
                for i in 0..nx {
                    let xc = self.origin[0] + self.hx * (T::count(i) + half);
                    let yc = self.origin[1] + self.hy * T::count(j);
                    let (left, side, right, normal) = if j == 0 {
                        if self.periodic {
                            continue;
                        }
                        (self.element_index(i, 0), Side::Bottom, None, Side::Bottom.outward_normal())
                    } else if j == ny {
                        let l = self.element_index(i, ny - 1);
                        let r = if self.periodic {
                            Some(self.element_index(i, 0))
                        } else {
                            None
                        };
                        (l, Side::Top, r, Side::Top.outward_normal())
                    } else {
                        (
                            self.element_index(i, j - 1),
                            Side::Top,
                            Some(self.element_index(i, j)),
                            Side::Top.outward_normal(),
                        )
                    };
                    self.push_face(left, side, right, normal, [xc, yc], self.hx);
                }
            }
        }
    }

    fn push_face(
        &mut self,
        left: usize,
        side: Side,
        right: Option<usize>,
        normal: [T; 2],
        center: [T; 2],
        measure: T,
    ) {
        let id = self.faces.len();
        self.element_faces[left][side.index()] = Some(id);
        if let Some(r) = right {
            self.element_faces[r][side.opposite().index()] = Some(id);
            self.neighbors[left][side.index()] = Some(r);
            self.neighbors[r][side.opposite().index()] = Some(left);
        }
        let tag = match (right, self.dim, side) {
            (Some(_), _, _) => None,
            (None, 1, Side::Right) => Some(BoundaryTag::Outflow),
            (None, _, _) => Some(BoundaryTag::Inflow),
        };
        self.faces.push(Face {
            left,
            left_side: side,
            right,
            normal,
            center,
            measure,
            tag,
        });
    }

    /// Reassigns the tag of every boundary face.
    pub fn set_boundary_tags(&mut self, mut tag_of: impl FnMut(&Face<T>) -> BoundaryTag) {
        for face in self.faces.iter_mut().filter(|f| f.right.is_none()) {
            face.tag = Some(tag_of(face));
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    /// Elements per direction (`ny == 1` in 1D).
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Element side lengths `(hx, hy)`; `hy == hx` in 1D.
    pub fn spacing(&self) -> (T, T) {
        (self.hx, self.hy)
    }

    pub fn origin(&self) -> [T; 2] {
        self.origin
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn element_vertices(&self, e: usize) -> &[usize] {
        &self.element_vertices[e]
    }

    pub fn faces(&self) -> &[Face<T>] {
        &self.faces
    }

    pub fn element_faces(&self, e: usize) -> &[Option<usize>; 4] {
        &self.element_faces[e]
    }

    /// Characteristic length `h_e`: the longest side of the element.
    pub fn h(&self, _e: usize) -> T {
        if self.dim == 1 {
            self.hx
        } else {
            self.hx.max(self.hy)
        }
    }

    pub fn h_max(&self) -> T {
        self.h(0)
    }

    pub fn element_measure(&self, _e: usize) -> T {
        if self.dim == 1 {
            self.hx
        } else {
            self.hx * self.hy
        }
    }

    pub fn element_index(&self, ix: usize, iy: usize) -> usize {
        ix + self.nx * iy
    }

    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [T; 2] {
        let (ix, iy) = self.element_coords(e);
        let y = if self.dim == 1 {
            T::zero()
        } else {
            self.origin[1] + self.hy * T::count(iy)
        };
        [self.origin[0] + self.hx * T::count(ix), y]
    }

    pub fn element_center(&self, e: usize) -> [T; 2] {
        self.to_physical(e, [T::zero(), T::zero()])
    }

    /// Affine map from the reference cell `[-1, 1]^d` onto element `e`.
    pub fn to_physical(&self, e: usize, xi: [T; 2]) -> [T; 2] {
        let o = self.element_origin(e);
        let half = T::half();
        let x = o[0] + self.hx * half * (xi[0] + T::one());
        let y = if self.dim == 1 {
            T::zero()
        } else {
            o[1] + self.hy * half * (xi[1] + T::one())
        };
        [x, y]
    }

    /// Face neighbor across `side`, if any.
    pub fn neighbor(&self, e: usize, side: Side) -> Option<usize> {
        self.neighbors[e][side.index()]
    }

    fn check_element(&self, e: usize) -> Result<()> {
        if e >= self.num_elements() {
            Err(Error::IndexOutOfRange {
                index: e,
                len: self.num_elements(),
            })
        } else {
            Ok(())
        }
    }

    /// `S^e`: the element itself plus all face-sharing elements, sorted.
    pub fn von_neumann_neighbors(&self, e: usize) -> Result<Vec<usize>> {
        self.check_element(e)?;
        let mut set: Vec<usize> = std::iter::once(e)
            .chain(self.neighbors[e].iter().flatten().copied())
            .collect();
        set.sort_unstable();
        set.dedup();
        Ok(set)
    }

    /// `Omega_e`: all elements sharing at least one vertex with `e`
    /// (including `e`), clipped at non-periodic boundaries, sorted.
    pub fn element_patch(&self, e: usize) -> Result<Vec<usize>> {
        self.check_element(e)?;
        let (ix, iy) = self.element_coords(e);
        let dys: &[isize] = if self.dim == 1 { &[0] } else { &[-1, 0, 1] };
        let mut set = Vec::with_capacity(9);
        for &dy in dys {
            for dx in -1isize..=1 {
                if let Some(n) = self.offset_element(ix, iy, dx, dy) {
                    set.push(n);
                }
            }
        }
        set.sort_unstable();
        set.dedup();
        Ok(set)
    }

    /// Element at lattice offset `(dx, dy)` from `(ix, iy)`, wrapping if
    /// periodic.
    pub fn offset_element(&self, ix: usize, iy: usize, dx: isize, dy: isize) -> Option<usize> {
        let wrap = |i: usize, d: isize, n: usize| -> Option<usize> {
            let j = i as isize + d;
            if self.periodic {
                Some(j.rem_euclid(n as isize) as usize)
            } else if j < 0 || j >= n as isize {
                None
            } else {
                Some(j as usize)
            }
        };
        let x = wrap(ix, dx, self.nx)?;
        let y = wrap(iy, dy, self.ny)?;
        Some(self.element_index(x, y))
    }

    /// Total measure of the domain.
    pub fn domain_measure(&self) -> T {
        let lx = self.hx * T::count(self.nx);
        if self.dim == 1 {
            lx
        } else {
            lx * self.hy * T::count(self.ny)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_mesh_matches_requested_resolution() {
        let m = Mesh::<f64>::build_uniform_line(-5.0, 5.0, 1000, false).unwrap();
        assert!((m.h(0) - 0.01).abs() < 1e-15);
        assert_eq!(m.vertices().len(), 1001);
        assert_eq!(m.faces().len(), 1001);
    }

    #[test]
    fn two_cell_line() {
        let m = Mesh::build_uniform_line(0.0, 1.0, 2, false).unwrap();
        let xs: Vec<f64> = m.faces().iter().map(|f| f.center[0]).collect();
        let mut sorted = xs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.von_neumann_neighbors(0).unwrap(), vec![0, 1]);
        let tags: Vec<_> = m.faces().iter().filter_map(|f| f.tag).collect();
        assert_eq!(tags, vec![BoundaryTag::Inflow, BoundaryTag::Outflow]);
    }

    #[test]
    fn periodic_line_wraps() {
        let m = Mesh::build_uniform_line(0.0, 1.0, 4, true).unwrap();
        assert_eq!(m.neighbor(0, Side::Left), Some(3));
        assert_eq!(m.neighbor(0, Side::Right), Some(1));
        assert_eq!(m.von_neumann_neighbors(0).unwrap(), vec![0, 1, 3]);
        assert!(m.faces().iter().all(|f| !f.is_boundary()));
    }

    #[test]
    fn line_construction_errors() {
        assert!(Mesh::<f64>::build_uniform_line(0.0, 1.0, 0, false).is_err());
        assert!(Mesh::<f64>::build_uniform_line(0.0, 1.0, 1, true).is_err());
    }

    #[test]
    fn quad_mesh_counts() {
        let m = Mesh::<f64>::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 128, 128, false).unwrap();
        assert_eq!(m.num_elements(), 16384);
        assert!((m.h(0) - 1.0 / 128.0).abs() < 1e-15);
        let area: f64 = (0..m.num_elements()).map(|e| m.element_measure(e)).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_quad_is_all_boundary() {
        let m = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 1, 1, false).unwrap();
        assert_eq!(m.von_neumann_neighbors(0).unwrap(), vec![0]);
        assert_eq!(m.faces().len(), 4);
        assert!(m.faces().iter().all(|f| f.is_boundary()));
    }

    #[test]
    fn three_by_three_stencils() {
        let m = Mesh::build_uniform_quad(0.0, 0.0, 3.0, 3.0, 3, 3, false).unwrap();
        assert_eq!(m.von_neumann_neighbors(4).unwrap().len(), 5);
        assert_eq!(m.element_patch(4).unwrap().len(), 9);
        assert_eq!(m.von_neumann_neighbors(0).unwrap(), vec![0, 1, 3]);
        assert!(m.von_neumann_neighbors(9).is_err());
        assert!(m.element_patch(9).is_err());
    }

    #[test]
    fn patches() {
        let m = Mesh::build_uniform_line(0.0, 1.0, 5, false).unwrap();
        assert_eq!(m.element_patch(2).unwrap(), vec![1, 2, 3]);
        let q = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 2, 2, false).unwrap();
        assert_eq!(q.element_patch(0).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn normals_point_from_left_to_right() {
        let m = Mesh::<f64>::build_uniform_quad(0.0, 0.0, 2.0, 1.0, 4, 3, true).unwrap();
        assert_eq!(m.faces().len(), 2 * 12);
        for f in m.faces() {
            let n = f.normal;
            assert!(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() < 1e-14);
            let r = f.right.unwrap();
            assert_eq!(m.neighbor(f.left, f.left_side), Some(r));
            assert_eq!(m.neighbor(r, f.left_side.opposite()), Some(f.left));
        }
    }

    #[test]
    fn adjacency_is_symmetric() {
        for periodic in [false, true] {
            let m = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 5, 4, periodic).unwrap();
            for e in 0..m.num_elements() {
                for n in m.von_neumann_neighbors(e).unwrap() {
                    assert!(m.von_neumann_neighbors(n).unwrap().contains(&e));
                }
                let s = m.von_neumann_neighbors(e).unwrap();
                let p = m.element_patch(e).unwrap();
                assert!(s.iter().all(|x| p.contains(x)));
            }
        }
    }
}

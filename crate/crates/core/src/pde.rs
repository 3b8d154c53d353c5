//! P1 finite elements with lumped mass on uniform grids of `(0,1)^dim`.
//!
//! Node `(i, j)` of a 2-D grid has index `j * n + i` and coordinates
//! `(i h, j h)`. Each grid cell is split along its rising diagonal into two
//! triangles. Stiffness matrices map nodal values to load functionals, so
//! their codomain is the dual space carrying weights `1 / w_i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::numerics::banded::{BandedLu, BandedMatrix};
use crate::numerics::{LinOpRep, WeightedSpace};
use crate::Real;

/// Name under which the full boundary is always available.
pub const WHOLE_BOUNDARY: &str = "boundary";

/// How the boundary nodes are split into named segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryPartition {
    /// One segment, [`WHOLE_BOUNDARY`].
    Whole,
    /// 1-D: `left`, `right`. 2-D: `bottom`, `top`, `left`, `right`, with
    /// the four corners owned by `left` and `right`.
    Sides,
    /// Explicit named node lists; must partition the boundary.
    Custom(Vec<(String, Vec<usize>)>),
}

#[derive(Debug, Clone)]
struct Element<T: Real> {
    nodes: [usize; 3],
    len: usize,
    stiffness: [[T; 3]; 3],
}

/// Uniform grid of the unit interval or unit square.
#[derive(Debug, Clone)]
pub struct Grid<T: Real> {
    dim: usize,
    n: usize,
    h: T,
    coords: Vec<[T; 2]>,
    boundary: Vec<usize>,
    arclength: Vec<T>,
    interior: Vec<usize>,
    segments: Vec<(String, Vec<usize>)>,
    volume_weights: DVector<T>,
    boundary_weights: Vec<T>,
    elements: Vec<Element<T>>,
}

/// Nodal values of a coefficient or state on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Real> {
    values: DVector<T>,
}

fn p1_stiffness<T: Real>(p: [[T; 2]; 3]) -> [[T; 3]; 3] {
    // Gradients of barycentric coordinates: grad phi_a = rot(p_{a+2} - p_{a+1}) / (2 area).
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = det.abs() / T::lit(2.0);
    let grad = |a: usize| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det]
    };
    let g = [grad(0), grad(1), grad(2)];
    let mut k = [[T::zero(); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

impl<T: Real> Grid<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    /// `(x, y)`; `y = 0` in 1-D.
    pub fn coord(&self, node: usize) -> (T, T) {
        let c = self.coords[node];
        (c[0], c[1])
    }

    /// Boundary nodes in counterclockwise arclength order starting at the origin.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Normalized boundary arclength `s in [0, 1)` of a boundary node. In 1-D
    /// the endpoints sit at `1/4` and `3/4`.
    pub fn arclength(&self, node: usize) -> Option<T> {
        self.boundary.iter().position(|&b| b == node).map(|k| self.arclength[k])
    }

    pub fn volume_weights(&self) -> &DVector<T> {
        &self.volume_weights
    }

    /// Lumped boundary mass of a node, zero for interior nodes.
    pub fn boundary_weight(&self, node: usize) -> T {
        self.boundary_weights[node]
    }

    pub fn segment_names(&self) -> Vec<&str> {
        self.segments.iter().map(|(name, _)| name.as_str()).collect()
    }

    pub fn segment(&self, name: &str) -> Result<&[usize]> {
        if let Some((_, nodes)) = self.segments.iter().find(|(s, _)| s == name) {
            return Ok(nodes);
        }
        if name == WHOLE_BOUNDARY {
            return Ok(&self.boundary);
        }
        Err(Error::Configuration(format!("unknown boundary segment `{name}`")))
    }

    /// L2 space of nodal fields.
    pub fn volume_space(&self) -> WeightedSpace<T> {
        WeightedSpace::new(self.volume_weights.clone()).expect("lumped weights are positive")
    }

    /// Dual of the volume space: weights `1 / w_i`.
    pub fn dual_space(&self) -> WeightedSpace<T> {
        WeightedSpace::new(self.volume_weights.map(|w| T::one() / w)).expect("lumped weights are positive")
    }

    /// L2 space on a boundary segment.
    pub fn segment_space(&self, name: &str) -> Result<WeightedSpace<T>> {
        let nodes = self.segment(name)?;
        WeightedSpace::new(DVector::from_iterator(nodes.len(), nodes.iter().map(|&k| self.boundary_weights[k])))
    }

    /// Lower/upper bandwidth of every matrix assembled on this grid.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n + 1
        }
    }
}

/// Uniform grid with `n` nodes per axis and spacing `1 / (n - 1)`.
pub fn make_grid<T: Real>(dim: usize, n: usize, partition: &BoundaryPartition) -> Result<Grid<T>> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::Configuration(format!("grid dimension must be 1 or 2, got {dim}")));
    }
    if n < 3 {
        return Err(Error::Configuration(format!("need at least 3 nodes per axis, got {n}")));
    }
    let h = T::one() / T::from_usize_lossy(n - 1);
    let half = T::lit(0.5);
    let w1 = |i: usize| if i == 0 || i == n - 1 { h * half } else { h };
    let pos = |i: usize| T::from_usize_lossy(i) * h;

    let (coords, volume_weights, boundary, arclength, elements) = if dim == 1 {
        let coords: Vec<[T; 2]> = (0..n).map(|i| [pos(i), T::zero()]).collect();
        let weights = DVector::from_fn(n, |i, _| w1(i));
        let elements = (0..n - 1)
            .map(|i| {
                let k = T::one() / h;
                Element {
                    nodes: [i, i + 1, i + 1],
                    len: 2,
                    stiffness: [[k, -k, T::zero()], [-k, k, T::zero()], [T::zero(); 3]],
                }
            })
            .collect();
        (coords, weights, vec![0, n - 1], vec![T::lit(0.25), T::lit(0.75)], elements)
    } else {
        let idx = |i: usize, j: usize| j * n + i;
        let coords: Vec<[T; 2]> = (0..n * n).map(|k| [pos(k % n), pos(k / n)]).collect();
        let weights = DVector::from_fn(n * n, |k, _| w1(k % n) * w1(k / n));
        let mut boundary = Vec::with_capacity(4 * (n - 1));
        let mut arclength = Vec::with_capacity(4 * (n - 1));
        let quarter = T::lit(0.25);
        let side = |t: usize| T::from_usize_lossy(t) * h * quarter;
        for i in 0..n - 1 {
            boundary.push(idx(i, 0));
            arclength.push(side(i));
        }
        for j in 0..n - 1 {
            boundary.push(idx(n - 1, j));
            arclength.push(quarter + side(j));
        }
        for i in (1..n).rev() {
            boundary.push(idx(i, n - 1));
            arclength.push(half + side(n - 1 - i));
        }
        for j in (1..n).rev() {
            boundary.push(idx(0, j));
            arclength.push(T::lit(0.75) + side(n - 1 - j));
        }
        let mut elements = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                for tri in [
                    [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)],
                    [idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)],
                ] {
                    let p = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
                    elements.push(Element {
                        nodes: tri,
                        len: 3,
                        stiffness: p1_stiffness(p),
                    });
                }
            }
        }
        (coords, weights, boundary, arclength, elements)
    };

    let node_count = coords.len();
    let mut is_boundary = vec![false; node_count];
    for &b in &boundary {
        is_boundary[b] = true;
    }
    let interior = (0..node_count).filter(|&k| !is_boundary[k]).collect();
    let mut boundary_weights = vec![T::zero(); node_count];
    for &b in &boundary {
        boundary_weights[b] = if dim == 1 { T::one() } else { h };
    }

    let segments = match partition {
        BoundaryPartition::Whole => vec![(WHOLE_BOUNDARY.to_string(), boundary.clone())],
        BoundaryPartition::Sides if dim == 1 => {
            vec![("left".to_string(), vec![0]), ("right".to_string(), vec![n - 1])]
        }
        BoundaryPartition::Sides => {
            let idx = |i: usize, j: usize| j * n + i;
            vec![
                ("bottom".to_string(), (1..n - 1).map(|i| idx(i, 0)).collect()),
                ("top".to_string(), (1..n - 1).map(|i| idx(i, n - 1)).collect()),
                ("left".to_string(), (0..n).map(|j| idx(0, j)).collect()),
                ("right".to_string(), (0..n).map(|j| idx(n - 1, j)).collect()),
            ]
        }
        BoundaryPartition::Custom(segments) => {
            let mut owner = vec![0usize; node_count];
            for (name, nodes) in segments {
                if name.is_empty() {
                    return Err(Error::Configuration("boundary segment names must be non-empty".into()));
                }
                if segments.iter().filter(|(other, _)| other == name).count() > 1 {
                    return Err(Error::Configuration(format!("duplicate boundary segment `{name}`")));
                }
                for &k in nodes {
                    if k >= node_count || !is_boundary[k] {
                        return Err(Error::Configuration(format!(
                            "segment `{name}` lists node {k}, which is not a boundary node"
                        )));
                    }
                    owner[k] += 1;
                }
            }
            if let Some(&k) = boundary.iter().find(|&&k| owner[k] != 1) {
                return Err(Error::Configuration(format!(
                    "boundary node {k} belongs to {} segments, expected exactly one",
                    owner[k]
                )));
            }
            segments.clone()
        }
    };

    Ok(Grid {
        dim,
        n,
        h,
        coords,
        boundary,
        arclength,
        interior,
        segments,
        volume_weights,
        boundary_weights,
        elements,
    })
}

impl<T: Real> Field<T> {
    pub fn new(grid: &Grid<T>, values: DVector<T>) -> Result<Self> {
        check_len(grid.node_count(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("field has non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(grid: &Grid<T>, c: T) -> Self {
        Self {
            values: DVector::from_element(grid.node_count(), c),
        }
    }

    /// Samples `f(x, y)` at the nodes.
    pub fn from_fn(grid: &Grid<T>, mut f: impl FnMut(T, T) -> T) -> Result<Self> {
        let values = DVector::from_fn(grid.node_count(), |k, _| {
            let (x, y) = grid.coord(k);
            f(x, y)
        });
        Self::new(grid, values)
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn into_values(self) -> DVector<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> T {
        self.values
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or_else(|| T::lit(f64::MAX)), T::min)
    }
}

fn element_mean<T: Real>(e: &Element<T>, a: &DVector<T>) -> T {
    let s = e.nodes[..e.len].iter().fold(T::zero(), |acc, &k| acc + a[k]);
    s / T::from_usize_lossy(e.len)
}

/// Banded stiffness `int a grad u . grad v`; `a = None` means `a = 1`.
pub fn stiffness_band<T: Real>(grid: &Grid<T>, a: Option<&DVector<T>>) -> Result<BandedMatrix<T>> {
    if let Some(a) = a {
        check_len(grid.node_count(), a.len())?;
        let min = a.iter().copied().fold(T::max_value().unwrap_or_else(|| T::lit(f64::MAX)), T::min);
        if !(min > T::zero()) {
            return Err(Error::CoefficientPositivity { min: min.as_f64() });
        }
    }
    let bw = grid.bandwidth();
    let mut band = BandedMatrix::zeros(grid.node_count(), bw, bw);
    for e in &grid.elements {
        let scale = a.map_or(T::one(), |a| element_mean(e, a));
        for r in 0..e.len {
            for c in 0..e.len {
                band.add(e.nodes[r], e.nodes[c], scale * e.stiffness[r][c]);
            }
        }
    }
    Ok(band)
}

fn stiffness_op<T: Real>(grid: &Grid<T>, band: &BandedMatrix<T>) -> LinOpRep<T> {
    LinOpRep::new(band.to_dense(), grid.volume_space(), grid.dual_space()).expect("finite stiffness")
}

/// Neumann Laplacian: `<A u, v> = int grad u . grad v`.
pub fn assemble_stiffness<T: Real>(grid: &Grid<T>) -> LinOpRep<T> {
    stiffness_op(grid, &stiffness_band(grid, None).expect("unit coefficient"))
}

/// `<A_a u, v> = int a grad u . grad v` with `a` averaged over each element.
pub fn assemble_weighted_stiffness<T: Real>(grid: &Grid<T>, a: &Field<T>) -> Result<LinOpRep<T>> {
    Ok(stiffness_op(grid, &stiffness_band(grid, Some(a.values()))?))
}

/// `A_b u` for the coefficient `b` without sign restriction; linear in `b`.
pub fn stiffness_apply<T: Real>(grid: &Grid<T>, b: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
    check_len(grid.node_count(), b.len())?;
    check_len(grid.node_count(), u.len())?;
    let mut out = DVector::zeros(grid.node_count());
    for e in &grid.elements {
        let scale = element_mean(e, b);
        for r in 0..e.len {
            let s = (0..e.len).fold(T::zero(), |acc, c| acc + e.stiffness[r][c] * u[e.nodes[c]]);
            out[e.nodes[r]] += scale * s;
        }
    }
    Ok(out)
}

/// Matrix `G(u)` with `G(u) b = A_b u`.
pub fn stiffness_action_matrix<T: Real>(grid: &Grid<T>, u: &DVector<T>) -> Result<DMatrix<T>> {
    check_len(grid.node_count(), u.len())?;
    let n = grid.node_count();
    let mut g = DMatrix::zeros(n, n);
    for e in &grid.elements {
        let share = T::one() / T::from_usize_lossy(e.len);
        for r in 0..e.len {
            let s = (0..e.len).fold(T::zero(), |acc, c| acc + e.stiffness[r][c] * u[e.nodes[c]]);
            for c in 0..e.len {
                g[(e.nodes[r], e.nodes[c])] += share * s;
            }
        }
    }
    Ok(g)
}

/// Lumped boundary load `h_bar_i = w_i h_i` on the segment nodes, zero elsewhere.
/// `h` is aligned with the segment's node list.
pub fn boundary_load<T: Real>(grid: &Grid<T>, h: &DVector<T>, segment: &str) -> Result<DVector<T>> {
    let nodes = grid.segment(segment)?;
    check_len(nodes.len(), h.len())?;
    let mut out = DVector::zeros(grid.node_count());
    for (&k, &v) in nodes.iter().zip(h.iter()) {
        out[k] += grid.boundary_weight(k) * v;
    }
    Ok(out)
}

/// Selection of the segment values, into the segment's boundary L2 space.
pub fn trace_op<T: Real>(grid: &Grid<T>, segment: &str) -> Result<LinOpRep<T>> {
    let nodes = grid.segment(segment)?;
    let mut m = DMatrix::zeros(nodes.len(), grid.node_count());
    for (r, &k) in nodes.iter().enumerate() {
        m[(r, k)] = T::one();
    }
    LinOpRep::new(m, grid.volume_space(), grid.segment_space(segment)?)
}

/// Relative residual required of every forward solve.
pub const ELLIPTIC_RTOL: f64 = 1e-10;

/// Factorized banded system with residual-checked solves.
#[derive(Debug, Clone)]
pub struct EllipticSolver<T: Real> {
    matrix: BandedMatrix<T>,
    lu: BandedLu<T>,
}

impl<T: Real> EllipticSolver<T> {
    pub fn new(matrix: BandedMatrix<T>) -> Result<Self> {
        let lu = matrix.clone().factor()?;
        Ok(Self { matrix, lu })
    }

    pub fn matrix(&self) -> &BandedMatrix<T> {
        &self.matrix
    }

    pub fn solve(&self, rhs: &DVector<T>) -> Result<DVector<T>> {
        let mut u = self.lu.solve(rhs)?;
        let rhs_norm = rhs.norm();
        if rhs_norm == T::zero() {
            return Ok(u);
        }
        let tol = T::lit(ELLIPTIC_RTOL) * rhs_norm;
        let mut residual = rhs - self.matrix.mul_vec(&u)?;
        for _ in 0..3 {
            if residual.norm() <= tol * T::lit(1e-3) {
                break;
            }
            u += self.lu.solve(&residual)?;
            residual = rhs - self.matrix.mul_vec(&u)?;
        }
        let r = residual.norm();
        if !(r <= tol) {
            return Err(Error::Numeric(format!(
                "elliptic solve residual {:e} exceeds {ELLIPTIC_RTOL:e} relative",
                (r / rhs_norm).as_f64()
            )));
        }
        Ok(u)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for (j, col) in rhs.column_iter().enumerate() {
            out.set_column(j, &self.solve(&col.into_owned())?);
        }
        Ok(out)
    }
}

/// `A + M diag(q)` as a factorized solver.
pub fn elliptic_solver<T: Real>(grid: &Grid<T>, stiffness: &BandedMatrix<T>, q: &DVector<T>) -> Result<EllipticSolver<T>> {
    check_len(grid.node_count(), q.len())?;
    let mut m = stiffness.clone();
    m.add_diagonal(&q.component_mul(grid.volume_weights()))?;
    EllipticSolver::new(m)
}

/// Solves `(A + M diag(q)) u = rhs`.
pub fn solve_elliptic<T: Real>(grid: &Grid<T>, a: &LinOpRep<T>, q: &Field<T>, rhs: &DVector<T>) -> Result<Field<T>> {
    check_len(grid.node_count(), a.matrix().nrows())?;
    check_len(grid.node_count(), rhs.len())?;
    let band = BandedMatrix::from_dense(a.matrix())?;
    let solver = elliptic_solver(grid, &band, q.values())?;
    Field::new(grid, solver.solve(rhs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(dim: usize, n: usize) -> Grid<f64> {
        make_grid(dim, n, &BoundaryPartition::Whole).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = grid(1, 3);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.coord(1), (0.5, 0.0));
        assert_eq!(g.volume_weights().as_slice(), &[0.25, 0.5, 0.25]);

        let g = grid(2, 3);
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.volume_weights()[0], 0.0625);
        assert_eq!(g.volume_weights()[1], 0.125);
        assert_eq!(g.volume_weights()[4], 0.25);

        for (dim, n) in [(1, 3), (1, 17), (2, 5), (2, 17)] {
            assert_relative_eq!(grid(dim, n).volume_weights().sum(), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            make_grid::<f64>(1, 2, &BoundaryPartition::Whole),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(
            make_grid::<f64>(3, 5, &BoundaryPartition::Whole),
            Err(Error::Configuration(_))
        ));
        let overlapping = BoundaryPartition::Custom(vec![("a".into(), vec![0, 2]), ("b".into(), vec![2])]);
        assert!(matches!(make_grid::<f64>(1, 3, &overlapping), Err(Error::Configuration(_))));
        let interior = BoundaryPartition::Custom(vec![("a".into(), vec![0, 1, 2])]);
        assert!(matches!(make_grid::<f64>(1, 3, &interior), Err(Error::Configuration(_))));
        let missing = BoundaryPartition::Custom(vec![("a".into(), vec![0])]);
        assert!(matches!(make_grid::<f64>(1, 3, &missing), Err(Error::Configuration(_))));
    }

    #[test]
    fn sides_partition_the_boundary() {
        let g: Grid<f64> = make_grid(2, 5, &BoundaryPartition::Sides).unwrap();
        let mut all: Vec<usize> = g.segment_names().iter().flat_map(|s| g.segment(s).unwrap().to_vec()).collect();
        all.sort_unstable();
        let mut boundary = g.boundary_nodes().to_vec();
        boundary.sort_unstable();
        assert_eq!(all, boundary);
        assert_eq!(g.segment("bottom").unwrap().len(), 3);
        assert!(g.segment("left").unwrap().contains(&0));
        assert!(g.segment("nowhere").is_err());
    }

    #[test]
    fn arclength_is_increasing() {
        let g = grid(2, 5);
        let s: Vec<f64> = g.boundary_nodes().iter().map(|&k| g.arclength(k).unwrap()).collect();
        assert_eq!(s.len(), 16);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s[0], 0.0);
        assert_relative_eq!(s[15], 15.0 / 16.0, epsilon = 1e-15);
        assert_eq!(g.arclength(24), Some(0.5));
        assert_eq!(g.arclength(12), None);
    }

    #[test]
    fn stiffness_examples() {
        let g = grid(1, 3);
        let a = assemble_stiffness(&g);
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, -2.0, 0.0, -2.0, 4.0, -2.0, 0.0, -2.0, 2.0]);
        assert_eq!(a.matrix(), &expected);

        for g in [grid(1, 9), grid(2, 6)] {
            let a = assemble_stiffness(&g);
            let ones = DVector::from_element(g.node_count(), 1.0);
            assert!(a.apply(&ones).unwrap().amax() <= 1e-14);
            assert_eq!(a.matrix(), &a.matrix().transpose());
        }
    }

    #[test]
    fn stiffness_2d_stencil() {
        // Interior row of the P1 Laplacian is the five-point stencil.
        let g = grid(2, 5);
        let a = assemble_stiffness(&g);
        let c = 2 * 5 + 2;
        assert_relative_eq!(a.matrix()[(c, c)], 4.0, epsilon = 1e-14);
        for nb in [c - 1, c + 1, c - 5, c + 5] {
            assert_relative_eq!(a.matrix()[(c, nb)], -1.0, epsilon = 1e-14);
        }
        assert!(a.matrix()[(c, c + 6)].abs() < 1e-14);
    }

    #[test]
    fn weighted_stiffness_examples() {
        let g = grid(2, 5);
        let base = assemble_stiffness(&g);
        let one = assemble_weighted_stiffness(&g, &Field::constant(&g, 1.0)).unwrap();
        assert_eq!(one.matrix(), base.matrix());
        let two = assemble_weighted_stiffness(&g, &Field::constant(&g, 2.0)).unwrap();
        assert_eq!(two.matrix(), &(base.matrix() * 2.0));

        let a1 = Field::from_fn(&g, |x, y| 1.0 + x * y).unwrap();
        let a2 = Field::from_fn(&g, |x, _| 2.0 + x.sin()).unwrap();
        let sum = Field::new(&g, a1.values() + a2.values()).unwrap();
        let lhs = assemble_weighted_stiffness(&g, &sum).unwrap();
        let rhs = assemble_weighted_stiffness(&g, &a1).unwrap().matrix() + assemble_weighted_stiffness(&g, &a2).unwrap().matrix();
        assert!((lhs.matrix() - rhs).amax() <= 1e-14);
        assert_eq!(lhs.matrix(), &lhs.matrix().transpose());

        let bad = Field::from_fn(&g, |x, _| x).unwrap();
        assert!(matches!(
            assemble_weighted_stiffness(&g, &bad),
            Err(Error::CoefficientPositivity { .. })
        ));
    }

    #[test]
    fn stiffness_action_matches_assembly() {
        let g = grid(2, 6);
        let u = DVector::from_fn(g.node_count(), |k, _| (k as f64 * 0.37).sin());
        let b = DVector::from_fn(g.node_count(), |k, _| 1.5 + (k as f64 * 0.11).cos());
        let direct = assemble_weighted_stiffness(&g, &Field::new(&g, b.clone()).unwrap())
            .unwrap()
            .apply(&u)
            .unwrap();
        let matrix = stiffness_action_matrix(&g, &u).unwrap() * &b;
        assert!((stiffness_apply(&g, &b, &u).unwrap() - &direct).amax() < 1e-13);
        assert!((matrix - direct).amax() < 1e-13);
    }

    #[test]
    fn boundary_load_examples() {
        let g: Grid<f64> = make_grid(1, 5, &BoundaryPartition::Sides).unwrap();
        assert_eq!(boundary_load(&g, &DVector::zeros(1), "left").unwrap(), DVector::zeros(5));
        let b = boundary_load(&g, &DVector::from_element(1, 2.5), "right").unwrap();
        assert_eq!(b.as_slice(), &[0.0, 0.0, 0.0, 0.0, 2.5]);

        let g = grid(2, 9);
        let nb = g.boundary_nodes().len();
        let b = boundary_load(&g, &DVector::from_element(nb, 1.0), WHOLE_BOUNDARY).unwrap();
        assert_relative_eq!(b.sum(), 4.0, epsilon = 1e-12);
        assert!(boundary_load(&g, &DVector::zeros(1), "top").is_err());
    }

    #[test]
    fn trace_examples() {
        let g = grid(2, 5);
        let t = trace_op(&g, WHOLE_BOUNDARY).unwrap();
        let ones = DVector::from_element(25, 1.0);
        assert_eq!(t.apply(&ones).unwrap(), DVector::from_element(16, 1.0));
        let mut e = DVector::zeros(25);
        e[12] = 1.0;
        assert_eq!(t.apply(&e).unwrap(), DVector::zeros(16));
        let h = DVector::from_fn(16, |k, _| k as f64 - 3.0);
        let embedded = t.matrix().transpose() * &h;
        assert_eq!(t.apply(&embedded).unwrap(), h);
    }

    #[test]
    fn boundary_load_is_mass_times_trace_adjoint() {
        let g = grid(2, 7);
        let t = trace_op(&g, WHOLE_BOUNDARY).unwrap();
        let h = DVector::from_fn(t.codomain().dim(), |k, _| (k as f64).cos());
        let via_adjoint = t.apply_adjoint(&h).unwrap().component_mul(g.volume_weights());
        let load = boundary_load(&g, &h, WHOLE_BOUNDARY).unwrap();
        assert!((via_adjoint - load).amax() <= 1e-14);
    }

    #[test]
    fn solve_elliptic_examples() {
        for g in [grid(1, 9), grid(2, 7)] {
            let a = assemble_stiffness(&g);
            let one = Field::constant(&g, 1.0);
            let rhs = g.volume_weights().clone();
            let u = solve_elliptic(&g, &a, &one, &rhs).unwrap();
            assert!(u.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

            let zero = Field::constant(&g, 0.0);
            assert!(matches!(solve_elliptic(&g, &a, &zero, &rhs), Err(Error::Solvability { .. })));
        }
    }

    fn cosh_error(n: usize) -> f64 {
        let g: Grid<f64> = make_grid(1, n, &BoundaryPartition::Sides).unwrap();
        let a = assemble_stiffness(&g);
        let rhs = boundary_load(&g, &DVector::from_element(1, 1f64.sinh()), "right").unwrap();
        let u = solve_elliptic(&g, &a, &Field::constant(&g, 1.0), &rhs).unwrap();
        let exact = DVector::from_fn(n, |k, _| g.coord(k).0.cosh());
        g.volume_space().norm(&(u.values() - exact)).unwrap()
    }

    #[test]
    fn manufactured_cosh_converges_quadratically() {
        let errors: Vec<f64> = [17, 33, 65].iter().map(|&n| cosh_error(n)).collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() <= 0.2, "observed order {order}");
        }
    }
}

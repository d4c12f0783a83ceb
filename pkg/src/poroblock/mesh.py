"""Structured simplicial meshes of boxes with facet topology and tags.

The facet table is global and deterministic: a facet is identified by its
sorted vertex tuple and facets are numbered in lexicographic order of those
tuples, so every assembled matrix downstream is bit-reproducible.
"""

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, MeshError

VTK_CELL_TYPE = {2: 5, 3: 10}  # triangle, tetrahedron


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh with facet topology and boundary tags.

    vertices:       (nv, dim) coordinates
    elements:       (ne, dim+1) vertex indices, positively oriented
    facets:         (nf, dim) sorted vertex tuples, lexicographic order
    elem_facets:    (ne, dim+1) global id of the facet opposite local vertex i
    facet_elements: (nf, 2) incident element ids, -1 when boundary
    boundary_tags:  facet id -> tag label for boundary facets only
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    elem_facets: np.ndarray
    facet_elements: np.ndarray
    boundary_tags: dict = field(default_factory=dict)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]

    @property
    def num_facets(self):
        return self.facets.shape[0]

    def boundary_facets(self, tag=None):
        """Sorted ids of boundary facets, optionally restricted to one tag."""
        if tag is None:
            ids = self.boundary_tags.keys()
        else:
            ids = (f for f, t in self.boundary_tags.items() if t == tag)
        return np.array(sorted(ids), dtype=int)


@dataclass(frozen=True)
class ElementGeometry:
    """Exact per-element geometry derived from vertex coordinates.

    bary_grads[i] is the (constant) gradient of barycentric coordinate i;
    normals[i] is the unit outward normal of the facet opposite vertex i.
    """

    volume: float
    facet_areas: np.ndarray
    normals: np.ndarray
    bary_grads: np.ndarray


@dataclass(frozen=True)
class MeshGeometry:
    """Batched geometry for all elements, plus the facet-bubble orientation.

    bubble_signs[k, i] is +1 when the outward normal of local facet i of
    element k matches the globally chosen facet normal, else -1.  Bubble
    basis functions use the global normal so they are single-valued across
    interior facets.
    """

    volumes: np.ndarray        # (ne,)
    facet_areas: np.ndarray    # (ne, d+1)
    normals: np.ndarray        # (ne, d+1, d) outward unit
    bary_grads: np.ndarray     # (ne, d+1, d)
    bubble_signs: np.ndarray   # (ne, d+1) in {+1, -1}


def _facet_tables(elements, dim):
    """Global facet numbering by sorted-vertex lexicographic order."""
    ne = elements.shape[0]
    nloc = dim + 1
    # local facet i = vertices of the element except local vertex i
    local = [[j for j in range(nloc) if j != i] for i in range(nloc)]
    all_facets = np.concatenate(
        [np.sort(elements[:, idx], axis=1) for idx in local], axis=0
    )  # (ne*(d+1), d), block i holds facet-opposite-vertex-i of every element
    facets, inverse = np.unique(all_facets, axis=0, return_inverse=True)
    elem_facets = inverse.reshape(nloc, ne).T.copy()

    nf = facets.shape[0]
    facet_elements = np.full((nf, 2), -1, dtype=int)
    # deterministic: smaller element id in slot 0
    for k in range(ne):
        for f in elem_facets[k]:
            if facet_elements[f, 0] == -1:
                facet_elements[f, 0] = k
            elif facet_elements[f, 1] == -1:
                facet_elements[f, 1] = k
            else:
                raise MeshError(f"facet {f} shared by more than two elements")
    return facets, elem_facets, facet_elements


def make_mesh(dim, vertices, elements, tag_fn=None):
    """Build a Mesh from raw arrays, fixing orientation and tagging the
    boundary via tag_fn(facet midpoint) -> label (defaults to "boundary").
    """
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=int)
    # enforce positive orientation
    t = vertices[elements[:, 1:]] - vertices[elements[:, :1]]
    det = np.linalg.det(t)
    if np.any(det == 0.0):
        raise MeshError("degenerate element (zero volume)")
    flip = det < 0
    if np.any(flip):
        elements = elements.copy()
        elements[flip, -2], elements[flip, -1] = (
            elements[flip, -1].copy(), elements[flip, -2].copy())
    facets, elem_facets, facet_elements = _facet_tables(elements, dim)
    tags = {}
    for f in range(facets.shape[0]):
        if facet_elements[f, 1] == -1:
            mid = vertices[facets[f]].mean(axis=0)
            tags[f] = tag_fn(mid) if tag_fn is not None else "boundary"
    return Mesh(dim, vertices, elements, facets, elem_facets,
                facet_elements, tags)


def _box_tagger(dim, lo, hi):
    names_lo = {0: "left", 1: "bottom" if dim == 2 else "front",
                2: "bottom"}
    names_hi = {0: "right", 1: "top" if dim == 2 else "back", 2: "top"}

    def tag(mid):
        tol = 1e-10 * max(np.max(hi - lo), 1.0)
        for ax in range(dim):
            if abs(mid[ax] - lo[ax]) < tol:
                return names_lo[ax]
            if abs(mid[ax] - hi[ax]) < tol:
                return names_hi[ax]
        raise MeshError(f"boundary facet at {mid} not on the box boundary")

    return tag


def build_structured_simplicial(n, dim, box=None):
    """Quasi-uniform simplicial mesh of a box: n subdivisions per axis,
    2 triangles per cell in 2D, 6 tetrahedra per cell (Kuhn) in 3D.
    """
    if n < 1:
        raise ConfigurationError("need at least one subdivision per axis")
    if dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
    if box is None:
        box = [(0.0, 1.0)] * dim
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if np.any(hi <= lo):
        raise ConfigurationError("box extents must be positive")

    grids = [np.linspace(lo[ax], hi[ax], n + 1) for ax in range(dim)]
    if dim == 2:
        xx, yy = np.meshgrid(grids[0], grids[1], indexing="ij")
        vertices = np.column_stack([xx.ravel(), yy.ravel()])

        def vid(i, j):
            return i * (n + 1) + j

        cells = []
        for i in range(n):
            for j in range(n):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
        elements = np.array(cells, dtype=int)
    else:
        xx, yy, zz = np.meshgrid(grids[0], grids[1], grids[2], indexing="ij")
        vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

        def vid(i, j, k):
            return (i * (n + 1) + j) * (n + 1) + k

        corner = np.array(list(np.ndindex(2, 2, 2)))
        cells = []
        perms = sorted(permutations(range(3)))
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    base = np.array([i, j, k])
                    for perm in perms:
                        # Kuhn path 0 -> e_p0 -> e_p0+e_p1 -> (1,1,1)
                        path = [np.zeros(3, dtype=int)]
                        for ax in perm:
                            step = path[-1].copy()
                            step[ax] += 1
                            path.append(step)
                        cells.append(tuple(
                            vid(*(base + off)) for off in path))
        elements = np.array(cells, dtype=int)

    return make_mesh(dim, vertices, elements, _box_tagger(dim, lo, hi))


def element_geometry(mesh, k):
    """Exact volume, facet areas, outward normals, barycentric gradients."""
    if not 0 <= k < mesh.num_elements:
        raise ConfigurationError(f"element id {k} out of range")
    d = mesh.dim
    verts = mesh.vertices[mesh.elements[k]]
    t = (verts[1:] - verts[0]).T  # (d, d)
    det = np.linalg.det(t)
    if det <= 0:
        raise MeshError(f"element {k} degenerate or negatively oriented")
    volume = det / np.prod(np.arange(1, d + 1))
    grads = np.empty((d + 1, d))
    grads[1:] = np.linalg.inv(t).copy()
    grads[0] = -grads[1:].sum(axis=0)
    norms = np.linalg.norm(grads, axis=1)
    normals = -grads / norms[:, None]
    areas = d * volume * norms
    return ElementGeometry(volume, areas, normals, grads)


def mesh_geometry(mesh):
    """Batched ElementGeometry for every element, plus bubble signs."""
    d = mesh.dim
    verts = mesh.vertices[mesh.elements]          # (ne, d+1, d)
    t = np.swapaxes(verts[:, 1:] - verts[:, :1], 1, 2)  # (ne, d, d)
    det = np.linalg.det(t)
    if np.any(det <= 0):
        raise MeshError("degenerate or negatively oriented element")
    volumes = det / np.prod(np.arange(1, d + 1))
    grads = np.empty((mesh.num_elements, d + 1, d))
    grads[:, 1:] = np.linalg.inv(t)
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    norms = np.linalg.norm(grads, axis=2)
    normals = -grads / norms[..., None]
    areas = d * volumes[:, None] * norms

    # global facet normal = outward normal of the first incident element
    first = mesh.facet_elements[mesh.elem_facets, 0]  # (ne, d+1)
    signs = np.where(first == np.arange(mesh.num_elements)[:, None], 1.0, -1.0)
    return MeshGeometry(volumes, areas, normals, grads, signs)


def check_connected(mesh):
    """True iff the element graph through interior facets has one component."""
    interior = mesh.facet_elements[:, 1] >= 0
    if mesh.num_elements == 1:
        return True
    a = mesh.facet_elements[interior, 0]
    b = mesh.facet_elements[interior, 1]
    ne = mesh.num_elements
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(ne, ne))
    ncomp, _ = connected_components(graph, directed=False)
    return ncomp == 1


def write_vtk(mesh, path, point_data=None, cell_data=None, title="poroblock"):
    """Write the mesh (and optional fields) as legacy VTK unstructured grid.

    point_data / cell_data: name -> array; vectors are padded to 3 components.
    """
    pts = mesh.vertices
    if mesh.dim == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.num_vertices} double"]
    lines += [" ".join(f"{x:.16g}" for x in p) for p in pts]
    nloc = mesh.dim + 1
    lines.append(f"CELLS {mesh.num_elements} {mesh.num_elements * (nloc + 1)}")
    lines += [f"{nloc} " + " ".join(str(v) for v in el)
              for el in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.num_elements}")
    lines += [str(VTK_CELL_TYPE[mesh.dim])] * mesh.num_elements

    def emit_fields(fields, count):
        for name, arr in fields.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.16g}" for v in arr)
            else:
                if arr.shape[1] < 3:
                    arr = np.column_stack(
                        [arr, np.zeros((count, 3 - arr.shape[1]))])
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(f"{x:.16g}" for x in row)
                             for row in arr)

    if point_data:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        emit_fields(point_data, mesh.num_vertices)
    if cell_data:
        lines.append(f"CELL_DATA {mesh.num_elements}")
        emit_fields(cell_data, mesh.num_elements)
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise ConfigurationError(f"cannot write VTK file {path}: {exc}")

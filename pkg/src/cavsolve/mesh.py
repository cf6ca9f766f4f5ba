"""Structured triangulations of the annulus eps < |x| < 1.

Nodes are laid out ring by ring: node ``k * n_theta + l`` sits on ring ``k``
(radius ``radii[k]``, ring 0 is the hole, ring ``n_r`` the unit circle) at angle
``2*pi*l/n_theta``. Each polar quad is split into two counter-clockwise
triangles along alternating diagonals, quad ``q`` owning triangles ``2q`` and
``2q + 1``.

The module also moves nodal fields between meshes of the same family
(``interpolate``), repairs the hole region of such a warm start
(``fill_hole``) and writes the mesh as CSV (``dump_mesh``).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from cavsolve.artifacts import write_csv

if TYPE_CHECKING:
    from cavsolve.fem import DeformationField

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-12
MIN_FILL_FRACTION = 0.1


@dataclass(frozen=True)
class MeshParams:
    """Resolution of an annulus mesh, independent of the hole radius."""

    n_r: int = 32
    n_theta: int = 256
    grading: float = 1.1

    def __post_init__(self):
        """Validate the resolution."""
        if int(self.n_r) != self.n_r or self.n_r < 1:
            raise ValueError(f"n_r must be a positive integer, got {self.n_r}")
        if int(self.n_theta) != self.n_theta or self.n_theta < 3:
            raise ValueError(f"n_theta must be an integer >= 3, got {self.n_theta}")
        if not self.grading >= 1.0:
            raise ValueError(f"grading must be >= 1, got {self.grading}")


def ring_radii(eps: float, n_r: int, grading: float) -> np.ndarray:
    """Radii of the n_r + 1 rings, geometric spacing with the finest layer at eps."""
    if grading == 1.0:
        fractions = np.arange(n_r + 1) / n_r
    else:
        powers = grading ** np.arange(n_r + 1, dtype=float)
        fractions = (powers - 1.0) / (powers[-1] - 1.0)
    radii = eps + (1.0 - eps) * fractions
    radii[0] = eps
    radii[-1] = 1.0
    return radii


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulated polar annulus with tagged boundaries.

    Attributes:
        nodes: (N, 2) reference coordinates.
        triangles: (T, 3) counter-clockwise node indices.
        outer_boundary: node indices on the unit circle, ordered by angle.
        inner_boundary: node indices on the circle of radius eps, ordered by angle.
        inner_edges: (n_theta, 2) hole edges, counter-clockwise around the origin.
        outer_edges: (n_theta, 2) outer edges, counter-clockwise around the origin.
        inner_edge_triangles: triangle owning each inner edge.
        outer_edge_triangles: triangle owning each outer edge.
        eps: hole radius.
        n_r: number of radial layers.
        n_theta: number of angular sectors.
        grading: ratio between successive radial spacings.
        radii: (n_r + 1,) ring radii.
        areas: (T,) reference triangle areas.
        shape_gradients: (T, 3, 2) constant gradients of the P1 basis functions.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    outer_boundary: np.ndarray
    inner_boundary: np.ndarray
    inner_edges: np.ndarray
    outer_edges: np.ndarray
    inner_edge_triangles: np.ndarray
    outer_edge_triangles: np.ndarray
    eps: float
    n_r: int
    n_theta: int
    grading: float
    radii: np.ndarray
    areas: np.ndarray = field(init=False, repr=False)
    shape_gradients: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        """Compute the per-triangle reference geometry."""
        corners = self.nodes[self.triangles]
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        jac = e1[:, 0] * e2[:, 1] - e2[:, 0] * e1[:, 1]
        if np.any(jac <= 0.0):
            bad = int(np.argmin(jac))
            raise ValueError(f"triangle {bad} has non-positive signed area")
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / jac[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / jac[:, None]
        gradients = np.stack([-(g1 + g2), g1, g2], axis=1)
        object.__setattr__(self, "areas", 0.5 * jac)
        object.__setattr__(self, "shape_gradients", gradients)

    @property
    def n_nodes(self) -> int:
        """Number of nodes."""
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        """Number of triangles."""
        return len(self.triangles)

    @property
    def params(self) -> MeshParams:
        """Resolution of this mesh."""
        return MeshParams(self.n_r, self.n_theta, self.grading)

    @property
    def disk_area(self) -> float:
        """Area of the regular n_theta-gon inscribed in the unit circle."""
        return 0.5 * self.n_theta * math.sin(2.0 * math.pi / self.n_theta)

    @property
    def hole_area(self) -> float:
        """Area of the polygonal hole."""
        return self.eps**2 * self.disk_area

    @property
    def annulus_area(self) -> float:
        """Area of the polygonal annulus, equal to the sum of triangle areas."""
        return self.disk_area * (1.0 - self.eps**2)

    @property
    def free_nodes(self) -> np.ndarray:
        """Indices of nodes not on the outer (Dirichlet) boundary."""
        return np.arange(self.nodes.shape[0] - self.n_theta)

    def refined(self) -> Mesh:
        """Mesh with twice the radial and angular resolution.

        The grading ratio is square-rooted so every old node is kept and every
        old radial layer is split in two.
        """
        return build_annulus(
            self.eps, 2 * self.n_r, 2 * self.n_theta, math.sqrt(self.grading)
        )

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Find the triangle holding each point and its barycentric coordinates.

        The sector follows from the angle; the ring follows from comparing the
        projection on the sector bisector with the ring chords. Points past the
        last chord get the outer triangle of their sector, so evaluation there
        continues that triangle's linear field.

        Args:
            points: (m, 2) coordinates inside the closed unit disk.

        Returns:
            (triangle indices (m,), barycentric coordinates (m, 3))
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        step = 2.0 * math.pi / self.n_theta
        theta = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2.0 * math.pi)
        sector = np.floor(theta / step).astype(int) % self.n_theta
        bisector = (sector + 0.5) * step
        along = points[:, 0] * np.cos(bisector) + points[:, 1] * np.sin(bisector)
        chords = self.radii * math.cos(0.5 * step)
        ring = np.clip(np.searchsorted(chords, along, side="right") - 1, 0, self.n_r - 1)
        quad = ring * self.n_theta + sector

        candidates = np.stack([2 * quad, 2 * quad + 1], axis=1)
        origins = self.nodes[self.triangles[candidates, 0]]
        grads = self.shape_gradients[candidates]
        offset = points[:, None, :] - origins
        lam1 = np.einsum("mcj,mcj->mc", grads[:, :, 1], offset)
        lam2 = np.einsum("mcj,mcj->mc", grads[:, :, 2], offset)
        bary = np.stack([1.0 - lam1 - lam2, lam1, lam2], axis=2)
        pick = np.argmax(bary.min(axis=2), axis=1)
        rows = np.arange(len(points))
        return candidates[rows, pick], bary[rows, pick]

    def evaluate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the piecewise-linear field with nodal ``values`` at ``points``."""
        tri, bary = self.locate(points)
        return np.einsum("ma,mai->mi", bary, values[self.triangles[tri]])


def build_annulus(
    eps: float, n_r: int, n_theta: int, grading: float = 1.1
) -> Mesh:
    """Triangulate the annulus eps < |x| < 1.

    Args:
        eps: hole radius in (0, 1).
        n_r: number of radial layers (>= 1).
        n_theta: number of angular sectors (>= 3).
        grading: ratio between successive radial spacings (>= 1); the finest
            layer touches the hole.

    Returns:
        Mesh with (n_r + 1) * n_theta nodes and 2 * n_r * n_theta triangles.

    Raises:
        ValueError: for eps outside (0, 1) or an invalid resolution.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    params = MeshParams(n_r, n_theta, grading)
    n_r, n_theta = int(params.n_r), int(params.n_theta)

    radii = ring_radii(eps, n_r, params.grading)
    angles = 2.0 * math.pi * np.arange(n_theta) / n_theta
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    nodes = (radii[:, None, None] * directions[None, :, :]).reshape(-1, 2)

    k, l = np.meshgrid(np.arange(n_r), np.arange(n_theta), indexing="ij")
    k, l = k.ravel(), l.ravel()
    lp = (l + 1) % n_theta
    a = k * n_theta + l
    b = k * n_theta + lp
    c = (k + 1) * n_theta + lp
    d = (k + 1) * n_theta + l
    along_ac = (k + l) % 2 == 0
    first = np.where(along_ac[:, None], np.stack([a, d, c], 1), np.stack([a, d, b], 1))
    second = np.where(along_ac[:, None], np.stack([a, c, b], 1), np.stack([b, d, c], 1))
    triangles = np.stack([first, second], axis=1).reshape(-1, 3)

    ring = np.arange(n_theta)
    inner_boundary = ring.copy()
    outer_boundary = n_r * n_theta + ring
    inner_edges = np.stack([ring, (ring + 1) % n_theta], axis=1)
    outer_edges = np.stack([outer_boundary, n_r * n_theta + (ring + 1) % n_theta], axis=1)
    inner_quads = ring
    outer_quads = (n_r - 1) * n_theta + ring
    inner_edge_triangles = 2 * inner_quads + along_ac[inner_quads]
    outer_edge_triangles = 2 * outer_quads + ~along_ac[outer_quads]

    mesh = Mesh(
        nodes=nodes,
        triangles=triangles,
        outer_boundary=outer_boundary,
        inner_boundary=inner_boundary,
        inner_edges=inner_edges,
        outer_edges=outer_edges,
        inner_edge_triangles=inner_edge_triangles.astype(int),
        outer_edge_triangles=outer_edge_triangles.astype(int),
        eps=float(eps),
        n_r=n_r,
        n_theta=n_theta,
        grading=float(params.grading),
        radii=radii,
    )
    logger.debug(
        "built annulus eps=%g n_r=%d n_theta=%d grading=%g (%d nodes, %d triangles)",
        eps, n_r, n_theta, params.grading, mesh.n_nodes, mesh.n_triangles,
    )
    return mesh


def edge_geometry(
    mesh: Mesh, edges: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lengths, midpoints and unit normals (pointing away from the origin) of edges."""
    start = mesh.nodes[edges[:, 0]]
    end = mesh.nodes[edges[:, 1]]
    tangent = end - start
    lengths = np.linalg.norm(tangent, axis=1)
    normals = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / lengths[:, None]
    return lengths, 0.5 * (start + end), normals


def interpolate(field_old: DeformationField, mesh_new: Mesh) -> DeformationField:
    """Carry a nodal field onto another mesh of the annulus family.

    Each new node takes the value of the old piecewise-linear field at its
    position. New nodes inside the old hole take the value at the radially
    clamped point (radius ``eps_old``, same angle). Outer-boundary nodes get
    exactly ``A x``.

    Raises:
        ValueError: if the new hole is larger than the old one or a node lies
            outside the unit disk.
    """
    mesh_old = field_old.mesh
    if mesh_new.eps > mesh_old.eps:
        raise ValueError(
            f"continuation only shrinks the hole: new eps {mesh_new.eps} "
            f"> old eps {mesh_old.eps}"
        )
    points = mesh_new.nodes.copy()
    radius = np.linalg.norm(points, axis=1)
    if np.any(radius > 1.0 + BOUNDARY_TOL):
        worst = int(np.argmax(radius))
        raise ValueError(f"node {worst} lies outside the old domain (radius {radius[worst]})")
    inside_hole = radius < mesh_old.eps
    points[inside_hole] *= (mesh_old.eps / radius[inside_hole])[:, None]

    values = mesh_old.evaluate(field_old.values, points)
    outer = mesh_new.outer_boundary
    values[outer] = mesh_new.nodes[outer] @ field_old.boundary.matrix.T
    return dataclasses.replace(field_old, mesh=mesh_new, values=values)


def fill_hole(field: DeformationField, eps_old: float, det_target: float) -> DeformationField:
    """Spread the nodes that a clamped warm start piled onto the old cavity.

    Nodes with radius below ``eps_old`` all sit on the old cavity curve after
    ``interpolate``. They are moved to a star-shaped radial fill of that curve
    about its centroid so that the new ring has area ratio ``det_target``; the
    innermost ring keeps at least ``MIN_FILL_FRACTION`` of the cavity radius.
    """
    mesh = field.mesh
    radius = np.linalg.norm(mesh.nodes, axis=1)
    hole = radius < eps_old * (1.0 - BOUNDARY_TOL)
    if not np.any(hole):
        return field

    curve = field.values[mesh.inner_boundary]
    centre = curve.mean(axis=0)
    rel = curve - centre
    cavity_area = 0.5 * np.sum(rel[:, 0] * np.roll(rel[:, 1], -1) - np.roll(rel[:, 0], -1) * rel[:, 1])
    span = eps_old**2 - mesh.eps**2
    rate = det_target * math.pi / cavity_area if cavity_area > 0 else np.inf
    rate = min(rate, (1.0 - MIN_FILL_FRACTION**2) / span)

    scale = np.sqrt(1.0 - rate * (eps_old**2 - radius[hole] ** 2))
    values = field.values.copy()
    values[hole] = centre + (values[hole] - centre) * scale[:, None]
    logger.info(
        "filled %d warm-start nodes inside the old hole (eps_old=%g)", int(hole.sum()), eps_old
    )
    return dataclasses.replace(field, values=values)


def dump_mesh(mesh: Mesh, directory: Path, suffix: str = "") -> tuple[Path, Path]:
    """Write ``nodes{suffix}.csv`` and ``triangles{suffix}.csv`` into ``directory``."""
    directory = Path(directory)
    tags = np.full(mesh.n_nodes, "interior", dtype=object)
    tags[mesh.inner_boundary] = "inner"
    tags[mesh.outer_boundary] = "outer"
    nodes = pd.DataFrame(
        {
            "node_id": np.arange(mesh.n_nodes),
            "x": mesh.nodes[:, 0],
            "y": mesh.nodes[:, 1],
            "boundary_tag": tags,
        }
    )
    triangles = pd.DataFrame(
        {
            "tri_id": np.arange(mesh.n_triangles),
            "n0": mesh.triangles[:, 0],
            "n1": mesh.triangles[:, 1],
            "n2": mesh.triangles[:, 2],
        }
    )
    node_path = directory / f"nodes{suffix}.csv"
    tri_path = directory / f"triangles{suffix}.csv"
    write_csv(nodes, node_path)
    write_csv(triangles, tri_path)
    return node_path, tri_path

"""Triangulations of convex polygons for the P1 solver.

The base mesh is the fan from the polygon centroid; refinement is the
uniform red (4-way midpoint) split, which keeps every triangle similar to
its parent and keeps boundary edges on their parent polygon edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .bodies import Polygon
from .errors import DomainError, ResourceError

DEFAULT_NODE_CAP = 200_000


@dataclass(frozen=True, eq=False)
class TriMesh:
    """P1 mesh with an ordered boundary cycle.

    ``boundary`` is an (m, 2) array of node pairs traversed counterclockwise;
    ``boundary_parent`` is the polygon edge each one lies on.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    boundary_parent: np.ndarray
    polygon: Polygon
    level: int = 0

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def h(self) -> float:
        """Largest triangle diameter (longest edge)."""
        p = self.nodes[self.triangles]
        d = [np.hypot(*(p[:, (k + 1) % 3] - p[:, k]).T) for k in range(3)]
        return float(np.max(d))

    @cached_property
    def boundary_vectors(self) -> np.ndarray:
        return self.nodes[self.boundary[:, 1]] - self.nodes[self.boundary[:, 0]]

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        return np.hypot(self.boundary_vectors[:, 0], self.boundary_vectors[:, 1])

    @property
    def boundary_normals(self) -> np.ndarray:
        """Taken from the parent polygon edge, so they are exact by construction."""
        return self.polygon.edge_normals[self.boundary_parent]

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return self.boundary[:, 0]

    @cached_property
    def gradient_operators(self) -> np.ndarray:
        """(T, 2, 3) array D with grad u|_T = D[T] @ u[triangles[T]]."""
        p = self.nodes[self.triangles]
        x, y = p[..., 0], p[..., 1]
        twice = 2.0 * self.areas
        D = np.empty((len(self.triangles), 2, 3))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            D[:, 0, k] = (y[:, i] - y[:, j]) / twice
            D[:, 1, k] = (x[:, j] - x[:, i]) / twice
        return D

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles]
        angs = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            c = np.sum(a * b, axis=1) / (np.hypot(*a.T) * np.hypot(*b.T))
            angs.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(angs))

    def to_dict(self) -> dict:
        return {
            "format": "orthosteklov.mesh",
            "version": 1,
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary": self.boundary.tolist(),
            "boundary_parent": self.boundary_parent.tolist(),
            "level": self.level,
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def fan_mesh(polygon: Polygon) -> TriMesh:
    n = polygon.n
    nodes = np.vstack([polygon.vertices, polygon.centroid[None, :]])
    k = np.arange(n)
    tris = np.column_stack([np.full(n, n), k, (k + 1) % n])
    bnd = np.column_stack([k, (k + 1) % n])
    return TriMesh(nodes, tris, bnd, k.copy(), polygon, 0)


def refine(mesh: TriMesh, node_cap: int = DEFAULT_NODE_CAP) -> TriMesh:
    """Red refinement: every triangle split into four by its edge midpoints."""
    t = mesh.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    n0 = len(mesh.nodes)
    if n0 + len(uniq) > node_cap:
        raise ResourceError(f"refinement needs {n0 + len(uniq)} nodes, cap is {node_cap}")
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    T = len(t)
    m01, m12, m20 = (n0 + inv[:T], n0 + inv[T:2 * T], n0 + inv[2 * T:])
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    tris = np.concatenate([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ])
    # np.unique sorts rows, so the encoded keys are ascending
    stride = np.int64(n0 + 1)
    keys = uniq[:, 0].astype(np.int64) * stride + uniq[:, 1]
    bkey = np.sort(mesh.boundary, axis=1).astype(np.int64)
    bm = n0 + np.searchsorted(keys, bkey[:, 0] * stride + bkey[:, 1])
    bnd = np.empty((2 * len(mesh.boundary), 2), dtype=mesh.boundary.dtype)
    bnd[0::2, 0] = mesh.boundary[:, 0]
    bnd[0::2, 1] = bm
    bnd[1::2, 0] = bm
    bnd[1::2, 1] = mesh.boundary[:, 1]
    parent = np.repeat(mesh.boundary_parent, 2)
    return TriMesh(nodes, tris, bnd, parent, mesh.polygon, mesh.level + 1)


def triangulate(polygon: Polygon, h_target: float, node_cap: int = DEFAULT_NODE_CAP) -> TriMesh:
    """Centroid fan, then uniform refinement until the mesh size is <= ``h_target``."""
    if not isinstance(polygon, Polygon):
        raise DomainError("triangulate needs a planar polygon")
    if not h_target > 0:
        raise DomainError("h_target must be positive")
    mesh = fan_mesh(polygon)
    while mesh.h > h_target:
        mesh = refine(mesh, node_cap)
    return mesh


def refinement_levels(polygon: Polygon, levels: int, node_cap: int = DEFAULT_NODE_CAP) -> list[TriMesh]:
    """The fan mesh followed by ``levels`` successive refinements."""
    out = [fan_mesh(polygon)]
    for _ in range(levels):
        out.append(refine(out[-1], node_cap))
    return out

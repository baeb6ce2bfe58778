"""Polygonal computational domains.

A domain is a simple closed polygon with counterclockwise vertex list. The
interior angles omega_j determine the singular exponents lambda_j = pi/omega_j
of the Laplacian at the corners; the smallest exponent

    lambda_bar = pi / omega_max

(taken over genuine corners, i.e. vertices whose interior angle differs from
pi) governs the convergence rates observable in the boundary-control studies.
Vertices with interior angle exactly pi are allowed — they mark points on a
straight boundary stretch, carry no singularity, and are ignored when
computing omega_max.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["PolygonalDomain", "builtin_domain", "BUILTIN_DOMAIN_NAMES", "CORNER_TOL"]

#: Absolute tolerance for identifying a point with a polygon vertex.
CORNER_TOL = 1e-12

# interior angles within this distance of pi are collinear pseudo-vertices
_FLAT_TOL = 1e-12


def _segments_intersect(p, q, r, s):
    """Proper or touching intersection of open segments pq and rs."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-14:
            return 0
        return 1 if v > 0 else -1

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) - 1e-14 <= c[0] <= max(a[0], b[0]) + 1e-14
            and min(a[1], b[1]) - 1e-14 <= c[1] <= max(a[1], b[1]) + 1e-14
        )

    o1, o2 = orient(p, q, r), orient(p, q, s)
    o3, o4 = orient(r, s, p), orient(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p, q, r):
        return True
    if o2 == 0 and on_segment(p, q, s):
        return True
    if o3 == 0 and on_segment(r, s, p):
        return True
    if o4 == 0 and on_segment(r, s, q):
        return True
    return False


class PolygonalDomain:
    """Simple closed polygon with counterclockwise vertices.

    Attributes
    ----------
    vertices : (k, 2) ndarray
        Corner coordinates in counterclockwise order, read-only.
    corner_angles : (k,) ndarray
        Interior angle omega_j at each vertex, in (0, 2*pi).
    singular_exponents : (k,) ndarray
        lambda_j = pi / omega_j per vertex.
    lambda_bar : float
        pi / omega_max over genuine corners (angle != pi).
    """

    def __init__(self, vertices, name: str | None = None):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("vertices must be an (k >= 3, 2) array of points")
        if not np.all(np.isfinite(verts)):
            raise ValueError("vertices must be finite")

        k = verts.shape[0]
        nxt = np.roll(verts, -1, axis=0)
        if np.any(np.hypot(*(nxt - verts).T) < CORNER_TOL):
            raise ValueError("polygon has coincident consecutive vertices")

        area2 = np.sum(verts[:, 0] * nxt[:, 1] - nxt[:, 0] * verts[:, 1])
        if area2 <= 0.0:
            raise ValueError("polygon vertices must be counterclockwise (positive area)")

        # simplicity: no two non-adjacent edges may intersect
        edges = [(verts[i], verts[(i + 1) % k]) for i in range(k)]
        for i in range(k):
            for j in range(i + 1, k):
                if j == i or (j - i) % k == 1 or (i - j) % k == 1:
                    continue
                if _segments_intersect(*edges[i], *edges[j]):
                    raise ValueError(
                        f"polygon is not simple: edges {i} and {j} intersect"
                    )

        prv = np.roll(verts, 1, axis=0)
        e_in = verts - prv
        e_out = nxt - verts
        cross = e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0]
        dot = np.sum(e_in * e_out, axis=1)
        turn = np.arctan2(cross, dot)
        angles = math.pi - turn  # interior angle; reflex corners give > pi
        if np.any(angles <= 0.0) or np.any(angles >= 2.0 * math.pi):
            raise ValueError("interior angles must lie strictly in (0, 2*pi)")

        self._vertices = verts
        self._vertices.flags.writeable = False
        self._angles = angles
        self._angles.flags.writeable = False
        self.name = name

        genuine = np.abs(angles - math.pi) > _FLAT_TOL
        if not np.any(genuine):
            raise ValueError("polygon has no genuine corners")
        self._genuine = genuine
        self._genuine.flags.writeable = False
        self._area = 0.5 * area2

    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def n_vertices(self) -> int:
        return self._vertices.shape[0]

    @property
    def corner_angles(self) -> np.ndarray:
        return self._angles

    @property
    def singular_exponents(self) -> np.ndarray:
        return math.pi / self._angles

    @property
    def is_genuine_corner(self) -> np.ndarray:
        """True where the interior angle differs from pi (real corner)."""
        return self._genuine

    @property
    def omega_max(self) -> float:
        return float(np.max(self._angles[self._genuine]))

    @property
    def lambda_bar(self) -> float:
        return math.pi / self.omega_max

    @property
    def area(self) -> float:
        return self._area

    @property
    def perimeter(self) -> float:
        d = np.roll(self._vertices, -1, axis=0) - self._vertices
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    def edge_tangents(self) -> np.ndarray:
        """Unit tangents of the polygon edges Gamma_j (vertex j to j+1)."""
        d = np.roll(self._vertices, -1, axis=0) - self._vertices
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    def edge_normals(self) -> np.ndarray:
        """Outward unit normals of the polygon edges Gamma_j."""
        t = self.edge_tangents()
        return np.column_stack([t[:, 1], -t[:, 0]])

    def __repr__(self):
        nm = f" {self.name!r}" if self.name else ""
        return (
            f"<PolygonalDomain{nm}: {self.n_vertices} vertices, "
            f"area {self._area:.6g}, lambda_bar {self.lambda_bar:.6g}>"
        )


_SQ2 = math.sqrt(2.0) / 2.0

_BUILTINS = {
    # unit square, all angles pi/2
    "omega90": [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
    # intersection of (-1,1)^2 with the sector phi in (0, 3*pi/4); the fifth
    # vertex lies on the straight sector edge (interior angle exactly pi) and
    # marks the unit-radius point of the sector
    "omega135": [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0), (-_SQ2, _SQ2)],
    # L-shape (-1,1)^2 minus [0,1]x[-1,0], reentrant corner of angle 3*pi/2
    # at the origin (listed first), legs along the positive x- and negative
    # y-axes.  This orientation is deliberate: it breaks the diagonal mirror
    # symmetry that the target u_d = x + y would otherwise share with the
    # domain, which would cancel the leading corner mode and hide the
    # reduced convergence rates the omega270 studies are meant to exhibit.
    "omega270": [
        (0.0, 0.0),
        (1.0, 0.0),
        (1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, -1.0),
        (0.0, -1.0),
    ],
}

BUILTIN_DOMAIN_NAMES = tuple(_BUILTINS)


def builtin_domain(name: str) -> PolygonalDomain:
    """Return one of the built-in study domains omega90 / omega135 / omega270.

    lambda_bar is 2, 4/3 and 2/3 respectively.
    """
    try:
        verts = _BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown domain {name!r}; available: {', '.join(BUILTIN_DOMAIN_NAMES)}"
        ) from None
    return PolygonalDomain(verts, name=name)

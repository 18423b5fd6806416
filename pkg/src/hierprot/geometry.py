"""Rigid-body geometry: canonical poses, contact graphs, frames, Euler and torsion angles.

Everything here is a pure function of numpy arrays. Coordinates are in Å and
never rescaled, so downstream RMSD/TM-score stay physically meaningful.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _accel
from .errors import DegenerateChain, DegenerateDihedral, ZeroVector
from .residues import residue_features

E_X = np.array([1.0, 0.0, 0.0])
# fixed choice for the antipodal case: half turn about e_z
HALF_TURN_Z = np.diag([-1.0, -1.0, 1.0])

MIN_SEPARATION = 1e-8
MIN_ANGLE = 1e-8
GIMBAL_TOL = 1e-7
SEQ_DIST_CLAMP = 32
DEFAULT_THRESHOLD = 8.0


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other):
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class CanonicalChain:
    coords: np.ndarray
    applied: RigidTransform
    anchors: tuple = (0, 1, 2)


def as_coords(points):
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) < 1:
        raise ValueError(f"expected an (n, 3) coordinate array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    return arr


def skew(k):
    return np.array([[0.0, -k[2], k[1]],
                     [k[2], 0.0, -k[0]],
                     [-k[1], k[0], 0.0]])


def _rodrigues_unit(u):
    # u is a unit vector; returns R with R u = e_x
    k = np.cross(u, E_X)
    s = np.linalg.norm(k)
    c = float(np.dot(u, E_X))
    if s < 1e-15:
        return np.eye(3)
    K = skew(k / s)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rodrigues_rotation(v):
    """Rotation matrix taking the direction of ``v`` onto +x.

    Uses ``R = I + sin θ K + (1 - cos θ) K²`` with ``K`` the skew matrix of the
    unit axis ``v̂ × e_x``. Near the antipodal direction that formula loses
    precision, so ``v`` is first turned half-way about e_z and the residual
    (now small) rotation is built the same way.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not norm > 0.0 or not np.isfinite(norm):
        raise ZeroVector("cannot align a zero vector")
    u = v / norm
    if u[0] < 0.0 and np.hypot(u[1], u[2]) < 1e-6:
        return _rodrigues_unit(HALF_TURN_Z @ u) @ HALF_TURN_Z
    return _rodrigues_unit(u)


def x_axis_rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _find_anchors(coords, fallback):
    if len(coords) < 3:
        raise DegenerateChain(f"need at least 3 residues, got {len(coords)}")
    if not fallback:
        d1 = coords[1] - coords[0]
        if np.linalg.norm(d1) < MIN_SEPARATION:
            raise DegenerateChain("first two residues coincide")
        d2 = coords[2] - coords[0]
        if _sin_angle(d1, d2) < MIN_ANGLE:
            raise DegenerateChain("first three residues are collinear")
        return 0, 1, 2
    origin = coords[0]
    axis = next((j for j in range(1, len(coords))
                 if np.linalg.norm(coords[j] - origin) >= MIN_SEPARATION), None)
    if axis is None:
        raise DegenerateChain("all residues coincide")
    d1 = coords[axis] - origin
    plane = next((k for k in range(axis + 1, len(coords))
                  if _sin_angle(d1, coords[k] - origin) >= MIN_ANGLE), None)
    if plane is None:
        raise DegenerateChain("all residues are collinear")
    return 0, axis, plane


def _sin_angle(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < MIN_SEPARATION or nb < MIN_SEPARATION:
        return 0.0
    return np.linalg.norm(np.cross(a, b)) / (na * nb)


def canonicalize(chain, fallback=False):
    """Move a chain into its canonical pose.

    Residue 0 goes to the origin, residue 1 onto the positive x-axis and
    residue 2 into the upper half (y >= 0) of the xy-plane. With
    ``fallback=True`` degenerate leading residues are skipped: the x-axis
    anchor is the first residue away from residue 0 and the plane anchor the
    first one off that line.
    """
    coords = as_coords(chain)
    i0, i1, i2 = _find_anchors(coords, fallback)
    shifted = coords - coords[i0]
    r1 = rodrigues_rotation(shifted[i1])
    q = r1 @ shifted[i2]
    r2 = x_axis_rotation(-np.arctan2(q[2], q[1]))
    rotation = r2 @ r1
    transform = RigidTransform(rotation, -rotation @ coords[i0])
    out = shifted @ rotation.T
    # exact zeros where the construction guarantees them
    out[i0] = 0.0
    out[i1, 1:] = 0.0
    out[i2, 2] = 0.0
    return CanonicalChain(out, transform, (i0, i1, i2))


def random_rotation(rng):
    """Uniform rotation from a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def pairwise_distances(coords):
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def random_chain(rng, length, step=3.8):
    """Random walk of ``length`` Cα positions with fixed step, as a test chain."""
    dirs = rng.standard_normal((length - 1, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.vstack([np.zeros(3), np.cumsum(step * dirs, axis=0)]) + rng.uniform(-50, 50, 3)


def rigid_invariance_check(n_chains=1000, seed=0, length_range=(3, 60)):
    """Largest deviations over random chains and random rigid motions.

    Returns ``(canonical, distances)``: the max absolute difference between
    canonical coordinates of a chain and of its moved copy, and the max
    change in any pairwise distance under the motion.
    """
    rng = np.random.default_rng(seed)
    worst_canon = worst_dist = 0.0
    for _ in range(n_chains):
        chain = random_chain(rng, int(rng.integers(length_range[0], length_range[1] + 1)))
        moved = RigidTransform(random_rotation(rng), rng.uniform(-100, 100, 3)).apply(chain)
        a = canonicalize(chain, fallback=True).coords
        b = canonicalize(moved, fallback=True).coords
        worst_canon = max(worst_canon, float(np.max(np.abs(a - b))))
        worst_dist = max(worst_dist, float(np.max(np.abs(pairwise_distances(chain)
                                                         - pairwise_distances(moved)))))
    return worst_canon, worst_dist


# ---------------------------------------------------------------------------
# residue graph


@dataclass(frozen=True)
class ResidueGraph:
    """Undirected contact graph stored as both directed copies of each edge."""

    coords: np.ndarray
    node_features: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    edge_features: np.ndarray
    threshold: float

    @property
    def n_nodes(self):
        return len(self.coords)

    def pairs(self):
        """Undirected edge set as sorted ``(i, j)`` tuples with ``i < j``."""
        keep = self.senders < self.receivers
        return sorted(zip(self.senders[keep].tolist(), self.receivers[keep].tolist()))


def sequential_distance_onehot(i, j, clamp=SEQ_DIST_CLAMP):
    sep = np.minimum(np.abs(np.asarray(i) - np.asarray(j)), clamp)
    out = np.zeros((len(sep), clamp))
    out[np.arange(len(sep)), sep - 1] = 1.0
    return out


def contact_pairs(coords, threshold):
    """Index pairs ``i < j`` with ``‖x_i − x_j‖ < threshold``."""
    return _accel.contact_pairs(np.ascontiguousarray(coords, dtype=np.float64), float(threshold))


def build_residue_graph(ca, h=None, threshold=DEFAULT_THRESHOLD):
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    ca = as_coords(ca)
    if h is None:
        h = np.zeros((len(ca), 0))
    elif isinstance(h, str):
        h = residue_features(h)
    h = np.asarray(h, dtype=np.float64)
    ii, jj = contact_pairs(ca, threshold)
    senders = np.concatenate([ii, jj])
    receivers = np.concatenate([jj, ii])
    feats = sequential_distance_onehot(senders, receivers)
    return ResidueGraph(ca, h, senders, receivers, feats, float(threshold))


# ---------------------------------------------------------------------------
# backbone frames and Euler angles


class EulerAngles(NamedTuple):
    tau1: float
    tau2: float
    tau3: float
    gimbal_lock: bool = False


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def residue_frame(n, ca, c):
    """Orthonormal frame (columns x̂, ŷ, ẑ): x̂ along Cα→C, ŷ from Cα→N by Gram–Schmidt."""
    n, ca, c = (np.asarray(p, dtype=np.float64) for p in (n, ca, c))
    x = c - ca
    x = x / np.linalg.norm(x)
    y = n - ca
    y = y - np.dot(y, x) * x
    y = y / np.linalg.norm(y)
    return np.stack([x, y, np.cross(x, y)], axis=1)


def residue_frames(backbone):
    """Vectorized ``residue_frame`` over an (L, 3, 3) array ordered (N, Cα, C)."""
    backbone = np.asarray(backbone, dtype=np.float64)
    n, ca, c = backbone[:, 0], backbone[:, 1], backbone[:, 2]
    x = c - ca
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = n - ca
    y -= np.sum(y * x, axis=1, keepdims=True) * x
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    return np.stack([x, y, np.cross(x, y)], axis=2)


def zyz_from_matrix(r):
    """Decompose ``r = Rz(τ¹) Ry(τ²) Rz(τ³)``; at gimbal lock τ³ is set to 0."""
    beta = np.arctan2(np.hypot(r[0, 2], r[1, 2]), r[2, 2])
    if beta < GIMBAL_TOL:
        return EulerAngles(float(np.arctan2(r[1, 0], r[0, 0])), float(beta), 0.0, True)
    if np.pi - beta < GIMBAL_TOL:
        return EulerAngles(float(np.arctan2(-r[1, 0], r[1, 1])), float(beta), 0.0, True)
    alpha = np.arctan2(r[1, 2], r[0, 2])
    gamma = np.arctan2(r[2, 1], -r[2, 0])
    return EulerAngles(float(alpha), float(beta), float(gamma), False)


def zyz_matrix(tau1, tau2, tau3):
    return rot_z(tau1) @ rot_y(tau2) @ rot_z(tau3)


def backbone_euler_angles(frame_i, frame_j):
    """Z-Y-Z Euler angles of the relative rotation ``frame_iᵀ · frame_j``."""
    return zyz_from_matrix(np.asarray(frame_i).T @ np.asarray(frame_j))


def euler_angles_batch(frames_i, frames_j):
    """Vectorized Z-Y-Z decomposition; returns an (E, 3) array of angles."""
    r = np.einsum("eki,ekj->eij", frames_i, frames_j)
    beta = np.arctan2(np.hypot(r[:, 0, 2], r[:, 1, 2]), r[:, 2, 2])
    alpha = np.arctan2(r[:, 1, 2], r[:, 0, 2])
    gamma = np.arctan2(r[:, 2, 1], -r[:, 2, 0])
    low = beta < GIMBAL_TOL
    high = np.pi - beta < GIMBAL_TOL
    alpha = np.where(low, np.arctan2(r[:, 1, 0], r[:, 0, 0]), alpha)
    alpha = np.where(high, np.arctan2(-r[:, 1, 0], r[:, 1, 1]), alpha)
    gamma = np.where(low | high, 0.0, gamma)
    return np.stack([alpha, beta, gamma], axis=1)


# ---------------------------------------------------------------------------
# torsions


def wrap_angle(a):
    """Wrap to (−π, π]."""
    out = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out <= -np.pi, out + 2 * np.pi, out)
    return float(out) if np.ndim(out) == 0 else out


def torsion_angle(p1, p2, p3, p4):
    """Dihedral angle p1-p2-p3-p4 in (−π, π]."""
    p1, p2, p3, p4 = (np.asarray(p, dtype=np.float64) for p in (p1, p2, p3, p4))
    b1, b2, b3 = p2 - p1, p3 - p2, p4 - p3
    n1, n2 = np.cross(b1, b2), np.cross(b2, b3)
    nb2 = np.linalg.norm(b2)
    scale = max(np.linalg.norm(b1), nb2, np.linalg.norm(b3), 1e-300)
    if (nb2 < 1e-12 * scale or np.linalg.norm(n1) < 1e-12 * scale ** 2
            or np.linalg.norm(n2) < 1e-12 * scale ** 2):
        raise DegenerateDihedral("consecutive bonds are zero or parallel")
    m1 = np.cross(n1, b2 / nb2)
    angle = np.arctan2(np.dot(m1, n2), np.dot(n1, n2))
    return float(np.pi) if angle <= -np.pi else float(angle)


def torsions_batch(p1, p2, p3, p4):
    """Vectorized dihedrals over (n, 3) arrays; no degeneracy checks."""
    b1, b2, b3 = p2 - p1, p3 - p2, p4 - p3
    n1, n2 = np.cross(b1, b2), np.cross(b2, b3)
    m1 = np.cross(n1, b2 / np.linalg.norm(b2, axis=1, keepdims=True))
    angle = np.arctan2(np.sum(m1 * n2, axis=1), np.sum(n1 * n2, axis=1))
    return np.where(angle <= -np.pi, np.pi, angle)


@dataclass(frozen=True)
class TorsionSet:
    """Per-residue χ¹..χ⁴ (radians) with a presence mask."""

    angles: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.angles.shape != self.mask.shape or self.angles.shape[-1:] != (4,):
            raise ValueError("angles and mask must both be (L, 4)")


def chi_angles(residues):
    """χ angles from side-chain atoms.

    ``residues`` is a list of ``(resname3, {atom_name: xyz})``; missing atoms
    leave the corresponding angle masked out.
    """
    from .residues import CHI_ATOMS

    angles = np.zeros((len(residues), 4))
    mask = np.zeros((len(residues), 4), dtype=bool)
    for r, (resname, atoms) in enumerate(residues):
        for k, quad in enumerate(CHI_ATOMS.get(resname, [])):
            if all(a in atoms for a in quad):
                try:
                    angles[r, k] = torsion_angle(*(atoms[a] for a in quad))
                except DegenerateDihedral:
                    continue
                mask[r, k] = True
    return TorsionSet(angles, mask)

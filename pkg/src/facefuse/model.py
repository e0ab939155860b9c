"""PCA shape model, expression blendshapes, and shape-instance generation.

A shape instance is a flat float64 vector of length 3N with x, y, z
interleaved per vertex (the layout every module in this package assumes).
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, FileFormatError, SchemaVersionError

MODEL_SCHEMA_VERSION = 1

_ORTHONORMALITY_TOL = 1e-8


@dataclass(frozen=True)
class PcaShapeModel:
    """Statistical shape model: mean, orthonormal basis, per-component stddevs.

    Attributes:
        mean: (3N,) mean shape, interleaved x, y, z per vertex.
        basis: (3N, M) principal components as orthonormal columns.
        stddevs: (M,) positive standard deviation of each component.
        triangles: (T, 3) int vertex indices.
        uv_coords: (N, 2) texture coordinates in [0, 1]^2.
    """

    mean: np.ndarray
    basis: np.ndarray
    stddevs: np.ndarray
    triangles: np.ndarray
    uv_coords: np.ndarray

    @property
    def n_vertices(self):
        return self.mean.shape[0] // 3

    @property
    def n_components(self):
        return self.basis.shape[1]

    def validate(self):
        """Check all structural invariants, raising FileFormatError on the first violation."""
        n3 = self.mean.shape[0]
        if n3 % 3 != 0:
            raise FileFormatError("mean: length %d is not a multiple of 3" % n3)
        n = n3 // 3
        if self.basis.shape[0] != n3:
            raise FileFormatError(
                "basis: row count %d does not equal 3N = %d" % (self.basis.shape[0], n3)
            )
        m = self.basis.shape[1]
        if self.stddevs.shape != (m,):
            raise FileFormatError(
                "stddevs: length %d does not equal M = %d" % (self.stddevs.shape[0], m)
            )
        if not np.all(self.stddevs > 0):
            raise FileFormatError("stddevs: all entries must be > 0")
        gram = self.basis.T @ self.basis
        if not np.allclose(gram, np.eye(m), atol=_ORTHONORMALITY_TOL):
            raise FileFormatError("basis: columns are not orthonormal")
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= n:
                raise FileFormatError("triangles: vertex index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise FileFormatError("triangles: degenerate triangle with repeated indices")
        if self.uv_coords.shape != (n, 2):
            raise FileFormatError(
                "uv: shape %s does not equal (N, 2) = (%d, 2)" % (self.uv_coords.shape, n)
            )
        if self.uv_coords.min() < 0.0 or self.uv_coords.max() > 1.0:
            raise FileFormatError("uv: components must lie in [0, 1]")


@dataclass(frozen=True)
class BlendshapeSet:
    """Additive per-vertex expression displacements, one blendshape per column.

    Attributes:
        displacements: (3N, L) matrix; L may be 0 (identity-only fitting).
    """

    displacements: np.ndarray

    @property
    def n_blendshapes(self):
        return self.displacements.shape[1]

    def validate(self, model: PcaShapeModel):
        if self.displacements.shape[0] != model.mean.shape[0]:
            raise FileFormatError(
                "blendshapes: row count %d does not equal 3N = %d"
                % (self.displacements.shape[0], model.mean.shape[0])
            )


def empty_blendshapes(model: PcaShapeModel) -> BlendshapeSet:
    return BlendshapeSet(np.zeros((model.mean.shape[0], 0)))


def generate_shape(model: PcaShapeModel, alpha: np.ndarray) -> np.ndarray:
    """Instantiate the shape mean + sum_i alpha_i * stddev_i * basis_i.

    Args:
        model: the shape model.
        alpha: (M,) unitless PCA coordinates.

    Returns:
        (3N,) vertex vector.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (model.n_components,):
        raise DimensionMismatchError(
            "alpha has length %d, model has %d components" % (alpha.size, model.n_components)
        )
    return model.mean + model.basis @ (alpha * model.stddevs)


def generate_shape_with_expression(
    model: PcaShapeModel,
    blendshapes: BlendshapeSet,
    alpha: np.ndarray,
    psi: np.ndarray,
) -> np.ndarray:
    """Instantiate identity shape plus the blendshape displacement sum."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (blendshapes.n_blendshapes,):
        raise DimensionMismatchError(
            "psi has length %d, blendshape set has %d columns"
            % (psi.size, blendshapes.n_blendshapes)
        )
    shape = generate_shape(model, alpha)
    if psi.size:
        shape = shape + blendshapes.displacements @ psi
    return shape


def vertices_as_points(shape: np.ndarray) -> np.ndarray:
    """View a (3N,) shape vector as an (N, 3) point array."""
    return np.asarray(shape).reshape(-1, 3)


def landmark_basis_submatrix(model: PcaShapeModel, vertex_ids):
    """Sub-select basis rows for given vertices, in homogeneous row layout.

    For each vertex the three basis rows are taken with each column j scaled
    by stddevs[j], followed by an all-zero row; the companion mean sub-vector
    gets a fourth component of 1 per vertex. Projecting the returned pair
    therefore agrees with generating the full shape and selecting vertices.

    Args:
        model: the shape model.
        vertex_ids: iterable of vertex indices, each < N.

    Returns:
        (basis_h, mean_h): (4K, M) matrix and (4K,) vector for K ids.
    """
    vertex_ids = np.asarray(list(vertex_ids), dtype=int)
    if vertex_ids.size and (vertex_ids.min() < 0 or vertex_ids.max() >= model.n_vertices):
        raise DimensionMismatchError(
            "vertex id out of range [0, %d)" % model.n_vertices
        )
    k = vertex_ids.size
    m = model.n_components
    rows = (3 * vertex_ids[:, None] + np.arange(3)[None, :]).ravel()
    scaled = model.basis * model.stddevs[None, :]
    basis_h = np.zeros((4 * k, m))
    mean_h = np.zeros(4 * k)
    keep = np.arange(4 * k).reshape(k, 4)[:, :3].ravel()
    basis_h[keep] = scaled[rows]
    mean_h[keep] = model.mean[rows]
    mean_h[3::4] = 1.0
    return basis_h, mean_h


def homogeneous_subvector(shape: np.ndarray, vertex_ids) -> np.ndarray:
    """Select vertices from a (3N,) shape vector and homogenize (w = 1) per vertex."""
    vertex_ids = np.asarray(list(vertex_ids), dtype=int)
    k = vertex_ids.size
    rows = (3 * vertex_ids[:, None] + np.arange(3)[None, :]).ravel()
    out = np.zeros(4 * k)
    out.reshape(k, 4)[:, :3] = np.asarray(shape)[rows].reshape(k, 3)
    out[3::4] = 1.0
    return out


def landmark_displacement_submatrix(blendshapes: BlendshapeSet, vertex_ids) -> np.ndarray:
    """Blendshape analogue of landmark_basis_submatrix: (4K, L), no scaling.

    Displacements carry a zero fourth component per vertex, so adding the
    product to a homogeneous shape sub-vector keeps w = 1.
    """
    vertex_ids = np.asarray(list(vertex_ids), dtype=int)
    disp = blendshapes.displacements
    if vertex_ids.size and (vertex_ids.min() < 0 or 3 * vertex_ids.max() + 2 >= disp.shape[0]):
        raise DimensionMismatchError("vertex id out of range for blendshape rows")
    k = vertex_ids.size
    rows = (3 * vertex_ids[:, None] + np.arange(3)[None, :]).ravel()
    out = np.zeros((4 * k, blendshapes.n_blendshapes))
    out[np.arange(4 * k).reshape(k, 4)[:, :3].ravel()] = disp[rows]
    return out


def _require(data, key, expect_type=None):
    if key not in data:
        raise FileFormatError("missing field %r" % key)
    value = data[key]
    if expect_type is not None and not isinstance(value, expect_type):
        raise FileFormatError("field %r has unexpected type %s" % (key, type(value).__name__))
    return value


def save_model(path, model: PcaShapeModel, blendshapes: BlendshapeSet = None):
    """Write model and blendshapes to a single self-describing JSON file."""
    if blendshapes is None:
        blendshapes = empty_blendshapes(model)
    n = model.n_vertices
    payload = {
        "version": MODEL_SCHEMA_VERSION,
        "N": n,
        "M": model.n_components,
        "L": blendshapes.n_blendshapes,
        "mean": model.mean.tolist(),
        "stddevs": model.stddevs.tolist(),
        "basis": model.basis.ravel().tolist(),
        "triangles": model.triangles.ravel().tolist(),
        "uv": model.uv_coords.ravel().tolist(),
        "blendshapes": blendshapes.displacements.ravel().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path):
    """Load a model file written by save_model.

    Returns:
        (PcaShapeModel, BlendshapeSet)

    Raises:
        FileNotFoundError: the path does not exist.
        SchemaVersionError: the file declares an unsupported version.
        FileFormatError: malformed JSON or dimension inconsistencies.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError("not a valid model file: %s" % exc) from exc
    if not isinstance(data, dict):
        raise FileFormatError("model file must contain a JSON object")
    version = _require(data, "version")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaVersionError(
            "model schema version %r, this code reads version %d" % (version, MODEL_SCHEMA_VERSION)
        )
    n = _require(data, "N", int)
    m = _require(data, "M", int)
    l = _require(data, "L", int)

    def as_array(key, shape):
        raw = np.asarray(_require(data, key, list), dtype=float)
        expected = int(np.prod(shape))
        if raw.size != expected:
            raise FileFormatError(
                "%s: has %d values, expected %d" % (key, raw.size, expected)
            )
        return raw.reshape(shape)

    mean = as_array("mean", (3 * n,))
    stddevs = as_array("stddevs", (m,))
    basis = as_array("basis", (3 * n, m))
    uv = as_array("uv", (n, 2))
    tri_raw = np.asarray(_require(data, "triangles", list), dtype=float)
    if tri_raw.size % 3 != 0:
        raise FileFormatError("triangles: count is not a multiple of 3")
    triangles = tri_raw.reshape(-1, 3).astype(int)
    disp = as_array("blendshapes", (3 * n, l)) if l else np.zeros((3 * n, 0))

    model = PcaShapeModel(mean, basis, stddevs, triangles, uv)
    model.validate()
    blendshapes = BlendshapeSet(disp)
    blendshapes.validate(model)
    return model, blendshapes


def save_obj(path, shape: np.ndarray, model: PcaShapeModel):
    """Export a shape instance as Wavefront OBJ with per-vertex texture coordinates."""
    points = vertices_as_points(shape)
    lines = []
    for p in points:
        lines.append("v %.8f %.8f %.8f" % (p[0], p[1], p[2]))
    for uv in model.uv_coords:
        lines.append("vt %.8f %.8f" % (uv[0], uv[1]))
    for tri in model.triangles:
        a, b, c = (int(i) + 1 for i in tri)
        lines.append("f %d/%d %d/%d %d/%d" % (a, a, b, b, c, c))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

"""2D landmark sets and their mapping onto model vertices.

Landmark ids are strings (numbers or names). Ids that parse as integers in
1..8 or 10..17 are treated as face-contour landmarks by default, following
the common 68-point annotation layout where those ranges run along the jaw
line: 1..8 down the image-left side, 10..17 up the image-right side. A
mapping file can override the sets explicitly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import FileFormatError

DEFAULT_CONTOUR_IDS_LEFT = frozenset(str(i) for i in range(1, 9))
DEFAULT_CONTOUR_IDS_RIGHT = frozenset(str(i) for i in range(10, 18))


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered 2D points with semantic ids and optional per-point variances.

    Attributes:
        ids: tuple of unique landmark ids.
        positions: (K, 2) pixel coordinates, x right, y down.
        variances: (K,) positive variances, or None when not annotated.
    """

    ids: tuple
    positions: np.ndarray
    variances: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))

    def validate(self):
        if len(set(self.ids)) != len(self.ids):
            raise FileFormatError("landmark ids must be unique")
        if self.positions.shape != (len(self.ids), 2):
            raise FileFormatError(
                "positions: shape %s does not match %d ids" % (self.positions.shape, len(self.ids))
            )
        if not np.all(np.isfinite(self.positions)):
            raise FileFormatError("positions: non-finite coordinate")
        if self.variances is not None:
            if self.variances.shape != (len(self.ids),):
                raise FileFormatError("variances: length mismatch")
            if not np.all(self.variances > 0):
                raise FileFormatError("variances: all entries must be > 0")

    def __len__(self):
        return len(self.ids)

    def index_of(self, lm_id):
        return self.ids.index(str(lm_id))

    def position_of(self, lm_id):
        return self.positions[self.index_of(lm_id)]

    def subset(self, keep_ids):
        keep_ids = [str(i) for i in keep_ids]
        idx = [self.ids.index(i) for i in keep_ids]
        var = self.variances[idx] if self.variances is not None else None
        return LandmarkSet(tuple(keep_ids), self.positions[idx], var)


@dataclass(frozen=True)
class LandmarkVertexMapping:
    """Fixed landmark-to-vertex pairs plus contour candidate vertex lists.

    ``contour_left`` / ``contour_right`` are ordered model vertex indices
    along the face outline on the image-left / image-right side (under a
    frontal camera). ``contour_ids_left`` / ``contour_ids_right`` classify
    which 2D landmark ids belong to each side.
    """

    pairs: dict
    contour_left: tuple
    contour_right: tuple
    contour_ids_left: frozenset = DEFAULT_CONTOUR_IDS_LEFT
    contour_ids_right: frozenset = DEFAULT_CONTOUR_IDS_RIGHT

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", {str(k): int(v) for k, v in self.pairs.items()}
        )
        object.__setattr__(self, "contour_left", tuple(int(v) for v in self.contour_left))
        object.__setattr__(self, "contour_right", tuple(int(v) for v in self.contour_right))

    def validate(self, n_vertices):
        all_ids = list(self.pairs.values()) + list(self.contour_left) + list(self.contour_right)
        for v in all_ids:
            if not 0 <= v < n_vertices:
                raise FileFormatError("mapping: vertex id %d out of range" % v)
        if not self.contour_left or not self.contour_right:
            raise FileFormatError("mapping: contour candidate lists must be non-empty")
        fixed = set(self.pairs.values())
        if fixed & set(self.contour_left) or fixed & set(self.contour_right):
            raise FileFormatError("mapping: contour candidates overlap fixed pairs")

    def contour_side_of(self, lm_id):
        """Return 'left', 'right', or None for a landmark id."""
        lm_id = str(lm_id)
        if lm_id in self.contour_ids_left:
            return "left"
        if lm_id in self.contour_ids_right:
            return "right"
        return None

    def candidates_for_side(self, side):
        return self.contour_left if side == "left" else self.contour_right


def load_landmarks(path) -> LandmarkSet:
    """Read a per-frame landmark file with lines ``id x y [variance]``."""
    ids, positions, variances = [], [], []
    any_variance = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise FileFormatError("%s:%d: expected 'id x y [variance]'" % (path, lineno))
            ids.append(parts[0])
            try:
                positions.append((float(parts[1]), float(parts[2])))
                var = float(parts[3]) if len(parts) == 4 else None
            except ValueError as exc:
                raise FileFormatError("%s:%d: %s" % (path, lineno, exc)) from exc
            if var is not None:
                any_variance = True
            variances.append(var)
    if any_variance:
        var_arr = np.array([v if v is not None else 1.0 for v in variances])
    else:
        var_arr = None
    lms = LandmarkSet(tuple(ids), np.array(positions).reshape(-1, 2), var_arr)
    lms.validate()
    return lms


def save_landmarks(path, landmarks: LandmarkSet):
    lines = []
    for i, lm_id in enumerate(landmarks.ids):
        x, y = landmarks.positions[i]
        if landmarks.variances is not None:
            lines.append("%s %.10g %.10g %.10g" % (lm_id, x, y, landmarks.variances[i]))
        else:
            lines.append("%s %.10g %.10g" % (lm_id, x, y))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mapping(path) -> LandmarkVertexMapping:
    """Read a mapping file: ``landmark_id vertex_id`` lines plus contour lists.

    Recognized list lines: ``contour_left:`` and ``contour_right:`` (model
    vertex ids), and optionally ``contour_ids_left:`` / ``contour_ids_right:``
    to override which landmark ids count as contour landmarks.
    """
    pairs = {}
    lists = {"contour_left": None, "contour_right": None,
             "contour_ids_left": None, "contour_ids_right": None}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            head = line.split(":", 1)
            if len(head) == 2 and head[0] in lists:
                lists[head[0]] = head[1].split()
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FileFormatError("%s:%d: expected 'landmark_id vertex_id'" % (path, lineno))
            try:
                pairs[parts[0]] = int(parts[1])
            except ValueError as exc:
                raise FileFormatError("%s:%d: %s" % (path, lineno, exc)) from exc
    if lists["contour_left"] is None or lists["contour_right"] is None:
        raise FileFormatError("%s: missing contour_left/contour_right lists" % path)
    try:
        left = tuple(int(v) for v in lists["contour_left"])
        right = tuple(int(v) for v in lists["contour_right"])
    except ValueError as exc:
        raise FileFormatError("%s: contour lists must hold integers" % path) from exc
    kwargs = {}
    if lists["contour_ids_left"] is not None:
        kwargs["contour_ids_left"] = frozenset(lists["contour_ids_left"])
    if lists["contour_ids_right"] is not None:
        kwargs["contour_ids_right"] = frozenset(lists["contour_ids_right"])
    return LandmarkVertexMapping(pairs, left, right, **kwargs)


def save_mapping(path, mapping: LandmarkVertexMapping):
    lines = ["%s %d" % (k, v) for k, v in mapping.pairs.items()]
    lines.append("contour_left: " + " ".join(str(v) for v in mapping.contour_left))
    lines.append("contour_right: " + " ".join(str(v) for v in mapping.contour_right))
    if mapping.contour_ids_left != DEFAULT_CONTOUR_IDS_LEFT:
        lines.append("contour_ids_left: " + " ".join(sorted(mapping.contour_ids_left)))
    if mapping.contour_ids_right != DEFAULT_CONTOUR_IDS_RIGHT:
        lines.append("contour_ids_right: " + " ".join(sorted(mapping.contour_ids_right)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

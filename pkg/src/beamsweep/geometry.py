"""Receive codebook geometry and directional gain patterns.

The receiver carries four phased-array faces, each sweeping a fixed set of
beams over +/-45 deg azimuth and +/-30 deg elevation about its own boresight.
Beam boresights tile the spherical segment on a staggered (hexagonal-style)
row lattice.

Angles are degrees throughout. Azimuth is measured counter-clockwise from the
reference axis and normalized to [-180, 180); elevation is measured up from
the horizontal plane.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError

DEFAULT_FACE_BORESIGHTS = (0.0, 90.0, 180.0, -90.0)
RX_HPBW_DEG = 16.8
RX_PEAK_GAIN_DBI = 43.3
TX_HPBW_DEG = 54.1
TX_PEAK_GAIN_DBI = 36.8
SIDELOBE_FLOOR_DB = 30.0

# nearest-beam distances closer than this count as a tie
_TIE_TOL_DEG = 1e-9

CODEBOOK_CSV_HEADER = ("beam_id", "face", "azimuth_deg", "elevation_deg", "hpbw_deg", "peak_gain_dbi")


def wrap_azimuth(az_deg):
    """Map azimuth(s) into [-180, 180)."""
    wrapped = np.mod(np.asarray(az_deg, dtype=float) + 180.0, 360.0) - 180.0
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Direction:
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        el = float(self.elevation_deg)
        if not (-90.0 <= el <= 90.0) or math.isnan(el):
            raise ValueError(f"elevation_deg must lie in [-90, 90], got {self.elevation_deg}")
        if not math.isfinite(float(self.azimuth_deg)):
            raise ValueError(f"azimuth_deg must be finite, got {self.azimuth_deg}")
        object.__setattr__(self, "azimuth_deg", wrap_azimuth(self.azimuth_deg))
        object.__setattr__(self, "elevation_deg", el)

    def unit_vector(self) -> np.ndarray:
        return unit_vectors(self.azimuth_deg, self.elevation_deg)


def unit_vectors(az_deg, el_deg) -> np.ndarray:
    """Cartesian unit vectors for (arrays of) azimuth/elevation pairs, shape (..., 3)."""
    az = np.radians(np.asarray(az_deg, dtype=float))
    el = np.radians(np.asarray(el_deg, dtype=float))
    cos_el = np.cos(el)
    return np.stack([cos_el * np.cos(az), cos_el * np.sin(az), np.sin(el)], axis=-1)


def angle_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Great-circle angle (deg) between unit vectors, broadcasting over leading axes.

    Uses atan2(|u x v|, u . v), which stays accurate for both tiny and
    near-antipodal separations.
    """
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def angular_distance(a: Direction, b: Direction) -> float:
    """Great-circle distance in degrees between two directions, in [0, 180]."""
    return float(angle_between(a.unit_vector(), b.unit_vector()))


def pattern_gain_dbi(psi_deg, hpbw_deg: float, peak_gain_dbi: float, floor_db: float = SIDELOBE_FLOOR_DB):
    """Parabolic main lobe with a flat sidelobe floor.

    G(psi) = G_peak - min(12 (psi / HPBW)^2, floor_db)
    """
    psi = np.asarray(psi_deg, dtype=float)
    loss = np.minimum(12.0 * (psi / hpbw_deg) ** 2, floor_db)
    gain = peak_gain_dbi - loss
    if gain.ndim == 0:
        return float(gain)
    return gain


@dataclass(frozen=True)
class Beam:
    id: int
    face: int
    boresight: Direction
    hpbw_deg: float = RX_HPBW_DEG
    peak_gain_dbi: float = RX_PEAK_GAIN_DBI


@dataclass(frozen=True)
class TxPattern:
    boresight: Direction = Direction(0.0, 0.0)
    hpbw_deg: float = TX_HPBW_DEG
    peak_gain_dbi: float = TX_PEAK_GAIN_DBI

    def __post_init__(self):
        if not self.hpbw_deg > 0:
            raise ConfigError("tx_pattern.hpbw_deg", f"must be > 0, got {self.hpbw_deg}")
        if not math.isfinite(self.peak_gain_dbi):
            raise ConfigError("tx_pattern.peak_gain_dbi", "must be finite")


def beam_gain_dbi(beam: Beam, toward: Direction) -> float:
    psi = angular_distance(beam.boresight, toward)
    return pattern_gain_dbi(psi, beam.hpbw_deg, beam.peak_gain_dbi)


def tx_gain_dbi(pattern: TxPattern, toward: Direction) -> float:
    psi = angular_distance(pattern.boresight, toward)
    return pattern_gain_dbi(psi, pattern.hpbw_deg, pattern.peak_gain_dbi)


@dataclass(frozen=True)
class BeamCodebook:
    """Ordered beams grouped by array face.

    Beam ``i`` belongs to face ``i // beams_per_face``.
    """

    beams: tuple[Beam, ...]
    face_boresights_deg: tuple[float, ...] = DEFAULT_FACE_BORESIGHTS
    az_halfspan_deg: float = 45.0
    el_halfspan_deg: float = 30.0
    _unit: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.beams:
            raise ConfigError("beams", "codebook must contain at least one beam")
        n_faces = len(self.face_boresights_deg)
        if len(self.beams) % n_faces:
            raise ConfigError("beams", f"{len(self.beams)} beams do not split evenly over {n_faces} faces")
        per_face = len(self.beams) // n_faces
        for i, b in enumerate(self.beams):
            if b.id != i or b.face != i // per_face:
                raise ConfigError("beams", f"beam at position {i} has id={b.id}, face={b.face}")
        az = np.array([b.boresight.azimuth_deg for b in self.beams])
        el = np.array([b.boresight.elevation_deg for b in self.beams])
        object.__setattr__(self, "_unit", unit_vectors(az, el))

    def __len__(self) -> int:
        return len(self.beams)

    @property
    def n_faces(self) -> int:
        return len(self.face_boresights_deg)

    @property
    def beams_per_face(self) -> int:
        return len(self.beams) // self.n_faces

    @property
    def unit(self) -> np.ndarray:
        """(n_beams, 3) boresight unit vectors (read-only view)."""
        view = self._unit.view()
        view.flags.writeable = False
        return view

    @property
    def azimuths_deg(self) -> np.ndarray:
        return np.array([b.boresight.azimuth_deg for b in self.beams])

    @property
    def elevations_deg(self) -> np.ndarray:
        return np.array([b.boresight.elevation_deg for b in self.beams])

    @property
    def hpbw_deg(self) -> np.ndarray:
        return np.array([b.hpbw_deg for b in self.beams])

    @property
    def peak_gain_dbi(self) -> np.ndarray:
        return np.array([b.peak_gain_dbi for b in self.beams])

    def face_beams(self, face: int) -> range:
        n = self.beams_per_face
        return range(face * n, (face + 1) * n)

    def gains_toward(self, unit_dirs: np.ndarray) -> np.ndarray:
        """Gain of every beam toward each direction; returns shape (..., n_beams)."""
        psi = angle_between(np.asarray(unit_dirs)[..., None, :], self._unit)
        return pattern_gain_dbi(psi, self.hpbw_deg, self.peak_gain_dbi)


def _row_layout(beams_per_face: int, az_halfspan: float, el_halfspan: float):
    """Pick row elevations and per-row counts for one face.

    Rows are spaced evenly in elevation with half a spacing of margin at the
    segment edges. The number of rows makes cells roughly square on the
    sphere; beams are apportioned to rows in proportion to cos(elevation)
    (largest remainder, lower row index first on ties).
    """
    face_area = 2.0 * az_halfspan * 2.0 * math.sin(math.radians(el_halfspan)) * math.degrees(1.0)
    cell = math.sqrt(face_area / beams_per_face)
    n_rows = min(beams_per_face, max(1, round(2.0 * el_halfspan / cell)))
    spacing = 2.0 * el_halfspan / n_rows
    elevations = [-el_halfspan + spacing * (r + 0.5) for r in range(n_rows)]
    weights = np.cos(np.radians(elevations))
    quota = beams_per_face * weights / weights.sum()
    counts = np.floor(quota).astype(int)
    counts = np.maximum(counts, 1)
    leftover = beams_per_face - counts.sum()
    if leftover < 0:
        raise ConfigError("beams_per_face", f"{beams_per_face} beams cannot fill {n_rows} rows")
    order = sorted(range(n_rows), key=lambda r: (-(quota[r] - math.floor(quota[r])), r))
    for r in order[: max(leftover, 0)]:
        counts[r] += 1
    return elevations, [int(c) for c in counts]


def build_codebook(
    face_boresights: Sequence[float] = DEFAULT_FACE_BORESIGHTS,
    beams_per_face: int = 50,
    az_halfspan_deg: float = 45.0,
    el_halfspan_deg: float = 30.0,
    row_counts: Sequence[int] | None = None,
    hpbw_deg: float = RX_HPBW_DEG,
    peak_gain_dbi: float = RX_PEAK_GAIN_DBI,
) -> BeamCodebook:
    """Build the multi-face receive codebook.

    Each face gets ``beams_per_face`` beams on a staggered row lattice: within
    a row beams are evenly spaced across the face's azimuth span (half a
    spacing from each edge) and alternate rows are shifted by a quarter
    spacing in opposite directions so neighbouring rows interleave. Defaults
    give 6 rows at +/-5, +/-15, +/-25 deg holding 8, 8, 9, 9, 8, 8 beams.

    Parameters
    ----------
    face_boresights : sequence of float
        Boresight azimuth of each face.
    beams_per_face : int
        Beams assigned to each face.
    az_halfspan_deg, el_halfspan_deg : float
        Sweep range about each face boresight.
    row_counts : sequence of int, optional
        Explicit beams per elevation row (bottom row first); must sum to
        ``beams_per_face``. Rows are then spaced evenly in elevation.

    Returns
    -------
    BeamCodebook
        Beam ids run face-major, then by row (ascending elevation), then by
        ascending azimuth offset.
    """
    if not az_halfspan_deg > 0 or az_halfspan_deg > 180:
        raise ConfigError("az_halfspan_deg", f"must be in (0, 180], got {az_halfspan_deg}")
    if not el_halfspan_deg > 0 or el_halfspan_deg > 90:
        raise ConfigError("el_halfspan_deg", f"must be in (0, 90], got {el_halfspan_deg}")
    if len(face_boresights) < 1:
        raise ConfigError("face_boresights", "need at least one face")
    if int(beams_per_face) != beams_per_face or beams_per_face < 1:
        raise ConfigError("beams_per_face", f"must be a positive integer, got {beams_per_face}")

    if row_counts is None:
        elevations, counts = _row_layout(int(beams_per_face), az_halfspan_deg, el_halfspan_deg)
    else:
        counts = [int(c) for c in row_counts]
        if any(c < 1 for c in counts) or sum(counts) != beams_per_face:
            raise ConfigError("row_counts", f"{list(row_counts)} must be positive and sum to {beams_per_face}")
        spacing = 2.0 * el_halfspan_deg / len(counts)
        elevations = [-el_halfspan_deg + spacing * (r + 0.5) for r in range(len(counts))]

    stagger = len(counts) > 1
    offsets = []
    for r, (el, n) in enumerate(zip(elevations, counts)):
        step = 2.0 * az_halfspan_deg / n
        shift = (0.25 if r % 2 else -0.25) * step if stagger and n > 1 else 0.0
        for k in range(n):
            offsets.append((-az_halfspan_deg + step * (k + 0.5) + shift, el))

    beams = []
    for f, face_az in enumerate(face_boresights):
        for d_az, el in offsets:
            beams.append(
                Beam(
                    id=len(beams),
                    face=f,
                    boresight=Direction(face_az + d_az, el),
                    hpbw_deg=hpbw_deg,
                    peak_gain_dbi=peak_gain_dbi,
                )
            )
    return BeamCodebook(
        beams=tuple(beams),
        face_boresights_deg=tuple(float(a) for a in face_boresights),
        az_halfspan_deg=float(az_halfspan_deg),
        el_halfspan_deg=float(el_halfspan_deg),
    )


def nearest_beam(codebook: BeamCodebook, toward: Direction) -> int:
    """Id of the beam closest to ``toward``; ties go to the lowest id."""
    if codebook is None or len(codebook) == 0:
        raise ConfigError("codebook", "empty codebook")
    d = angle_between(codebook.unit, toward.unit_vector())
    return int(np.flatnonzero(d <= d.min() + _TIE_TOL_DEG)[0])


def min_separation_deg(codebook: BeamCodebook) -> float:
    u = codebook.unit
    if len(u) < 2:
        return math.inf
    d = angle_between(u[:, None, :], u[None, :, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def covering_radius_deg(codebook: BeamCodebook, step_deg: float = 0.25) -> float:
    """Largest distance from any point of the swept segment to its nearest beam.

    The segment is sampled on a ``step_deg`` azimuth/elevation grid spanning the
    full azimuth circle and the elevation halfspan.
    """
    h = codebook.el_halfspan_deg
    az = np.arange(-180.0, 180.0, step_deg)
    el = np.arange(-h, h + step_deg / 2, step_deg)
    grid_az, grid_el = np.meshgrid(az, el)
    pts = unit_vectors(grid_az.ravel(), grid_el.ravel())
    chord, _ = cKDTree(codebook.unit).query(pts)
    # chord length -> great-circle angle
    return float(np.degrees(2.0 * np.arcsin(np.clip(chord.max() / 2.0, 0.0, 1.0))))


def write_codebook_csv(codebook: BeamCodebook, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CODEBOOK_CSV_HEADER)
        for b in codebook.beams:
            w.writerow(
                [
                    b.id,
                    b.face,
                    f"{b.boresight.azimuth_deg:.9f}",
                    f"{b.boresight.elevation_deg:.9f}",
                    f"{b.hpbw_deg:.6f}",
                    f"{b.peak_gain_dbi:.6f}",
                ]
            )

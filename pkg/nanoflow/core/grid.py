"""
Равномерная двумерная прямоугольная сетка с неизвестными в центрах ячеек.

Нумерация ячеек построчная: id = j * nx + i (i вдоль x, j вдоль y).
Сначала идут внутренние грани в порядке "владелец по возрастанию, затем
направление x, затем y", за ними граничные грани по сторонам
west, east, south, north. Толщина в третьем направлении единичная,
поэтому площади ячеек и длины граней отнесены к единице толщины.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DIRICHLET_PRESSURE = "dirichlet_pressure"
NEUMANN_FLUX = "neumann_flux"
NO_FLOW = "no_flow"
BOUNDARY_KINDS = (DIRICHLET_PRESSURE, NEUMANN_FLUX, NO_FLOW)

EDGES = ("west", "east", "south", "north")
EDGE_NORMALS = {
    "west": (-1.0, 0.0),
    "east": (1.0, 0.0),
    "south": (0.0, -1.0),
    "north": (0.0, 1.0),
}


@dataclass(frozen=True)
class BoundarySegment:
    """Участок границы с одним типом условия.

    flux: входящая нормальная скорость на Γ_N (м/с, > 0: закачка);
    pressure: давление p^D на Γ_D (Па); saturation и concentration:
    насыщенность и концентрация втекающей жидкости.
    """

    edge: str
    kind: str = NO_FLOW
    start: int = 0
    stop: int | None = None
    pressure: float = 0.0
    flux: float = 0.0
    saturation: float | None = None
    concentration: float = 0.0

    def to_dict(self) -> dict:
        return {
            "edge": self.edge,
            "kind": self.kind,
            "start": self.start,
            "stop": self.stop,
            "pressure": self.pressure,
            "flux": self.flux,
            "saturation": self.saturation,
            "concentration": self.concentration,
        }

    @staticmethod
    def from_dict(data: dict) -> "BoundarySegment":
        return BoundarySegment(
            edge=data["edge"],
            kind=data.get("kind", NO_FLOW),
            start=int(data.get("start", 0)),
            stop=None if data.get("stop") is None else int(data["stop"]),
            pressure=float(data.get("pressure", 0.0)),
            flux=float(data.get("flux", 0.0)),
            saturation=None if data.get("saturation") is None else float(data["saturation"]),
            concentration=float(data.get("concentration", 0.0)),
        )

    @property
    def inward_flux(self) -> float:
        """Входящая скорость; для непроницаемой границы и Дирихле равна нулю."""
        return self.flux if self.kind == NEUMANN_FLUX else 0.0


def default_boundary_layout() -> list[BoundarySegment]:
    """Закачка слева, отбор справа, верх и низ непроницаемы."""
    return [
        BoundarySegment("west", NEUMANN_FLUX),
        BoundarySegment("east", DIRICHLET_PRESSURE),
        BoundarySegment("south", NO_FLOW),
        BoundarySegment("north", NO_FLOW),
    ]


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class StructuredGrid2D:
    """Неизменяемая сетка; массивы граней доступны только для чтения."""

    nx: int
    ny: int
    lx: float
    ly: float
    segments: tuple[BoundarySegment, ...]
    face_owner: np.ndarray = field(repr=False)
    face_neighbor: np.ndarray = field(repr=False)
    face_area: np.ndarray = field(repr=False)
    face_normal: np.ndarray = field(repr=False)
    face_center: np.ndarray = field(repr=False)
    face_owner_distance: np.ndarray = field(repr=False)
    face_neighbor_distance: np.ndarray = field(repr=False)
    face_edge: np.ndarray = field(repr=False)
    face_segment: np.ndarray = field(repr=False)
    face_kind: np.ndarray = field(repr=False)
    face_pressure: np.ndarray = field(repr=False)
    face_inward_flux: np.ndarray = field(repr=False)
    face_inflow_saturation: np.ndarray = field(repr=False)
    face_inflow_concentration: np.ndarray = field(repr=False)
    n_interior: int = 0

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_faces(self) -> int:
        return int(self.face_owner.size)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def face_distance(self) -> np.ndarray:
        return self.face_owner_distance + self.face_neighbor_distance

    @property
    def cell_centers(self) -> np.ndarray:
        i, j = self.cell_ij(np.arange(self.n_cells))
        return np.column_stack(((i + 0.5) * self.dx, (j + 0.5) * self.dy))

    @property
    def interior_slice(self) -> slice:
        return slice(0, self.n_interior)

    @property
    def boundary_slice(self) -> slice:
        return slice(self.n_interior, self.n_faces)

    def cell_id(self, i, j):
        return j * self.nx + i

    def cell_ij(self, cell):
        cell = np.asarray(cell)
        return cell % self.nx, cell // self.nx

    def boundary_faces(self) -> np.ndarray:
        return np.arange(self.n_interior, self.n_faces)

    def faces_of_kind(self, kind: str) -> np.ndarray:
        return np.flatnonzero(self.face_kind == BOUNDARY_KINDS.index(kind))

    @property
    def has_dirichlet(self) -> bool:
        return bool(np.any(self.face_kind == BOUNDARY_KINDS.index(DIRICHLET_PRESSURE)))

    def faces_of_edge(self, edge: str) -> np.ndarray:
        return np.flatnonzero(self.face_edge == EDGES.index(edge))

    def mirror_cells(self) -> np.ndarray:
        """Индексы ячеек, отражённых относительно средней линии по y."""
        i, j = self.cell_ij(np.arange(self.n_cells))
        return self.cell_id(i, self.ny - 1 - j)


def build_grid(nx: int, ny: int, lx: float, ly: float, boundary_layout=None) -> StructuredGrid2D:
    """Строит сетку и проверяет, что участки границы покрывают её ровно один раз."""
    if int(nx) < 1 or int(ny) < 1:
        raise ConfigurationError(f"Число ячеек должно быть не меньше 1: nx={nx}, ny={ny}", key_path="grid")
    if not (lx > 0 and ly > 0):
        raise ConfigurationError(f"Размеры области должны быть положительными: lx={lx}, ly={ly}", key_path="grid")
    nx, ny = int(nx), int(ny)
    segments = tuple(default_boundary_layout() if boundary_layout is None else boundary_layout)
    coverage = _check_coverage(segments, nx, ny)

    dx, dy = lx / nx, ly / ny
    cells = np.arange(nx * ny)
    ci, cj = cells % nx, cells // nx

    # Внутренние грани: для каждого владельца сначала грань по x, потом по y.
    has_x = ci < nx - 1
    has_y = cj < ny - 1
    owners = np.concatenate((cells[has_x], cells[has_y]))
    neighbors = np.concatenate((cells[has_x] + 1, cells[has_y] + nx))
    is_x = np.concatenate((np.ones(has_x.sum(), dtype=bool), np.zeros(has_y.sum(), dtype=bool)))
    order = np.lexsort((~is_x, owners))
    owners, neighbors, is_x = owners[order], neighbors[order], is_x[order]
    oi, oj = owners % nx, owners // nx

    int_area = np.where(is_x, dy, dx)
    int_normal = np.column_stack((is_x.astype(float), (~is_x).astype(float)))
    int_center = np.column_stack(
        (np.where(is_x, (oi + 1) * dx, (oi + 0.5) * dx), np.where(is_x, (oj + 0.5) * dy, (oj + 1) * dy))
    )
    int_half = np.where(is_x, 0.5 * dx, 0.5 * dy)

    b_owner, b_area, b_normal, b_center, b_half, b_edge, b_segment = [], [], [], [], [], [], []
    for edge_index, edge in enumerate(EDGES):
        along = np.arange(ny if edge in ("west", "east") else nx)
        if edge == "west":
            owner = along * nx
            center = np.column_stack((np.zeros(ny), (along + 0.5) * dy))
        elif edge == "east":
            owner = along * nx + nx - 1
            center = np.column_stack((np.full(ny, lx), (along + 0.5) * dy))
        elif edge == "south":
            owner = along
            center = np.column_stack(((along + 0.5) * dx, np.zeros(nx)))
        else:
            owner = (ny - 1) * nx + along
            center = np.column_stack(((along + 0.5) * dx, np.full(nx, ly)))
        vertical = edge in ("west", "east")
        b_owner.append(owner)
        b_area.append(np.full(along.size, dy if vertical else dx))
        b_normal.append(np.tile(EDGE_NORMALS[edge], (along.size, 1)))
        b_center.append(center)
        b_half.append(np.full(along.size, 0.5 * dx if vertical else 0.5 * dy))
        b_edge.append(np.full(along.size, edge_index))
        b_segment.append(coverage[edge])

    n_interior = owners.size
    segment_of_face = np.concatenate([np.full(n_interior, -1)] + b_segment).astype(np.int64)
    boundary = segment_of_face >= 0
    seg_index = segment_of_face[boundary]

    def per_face(values, fill):
        out = np.full(segment_of_face.size, fill, dtype=float)
        out[boundary] = np.asarray(values)[seg_index]
        return out

    kinds = per_face([BOUNDARY_KINDS.index(s.kind) for s in segments], -1)
    nan = float("nan")

    return StructuredGrid2D(
        nx=nx,
        ny=ny,
        lx=float(lx),
        ly=float(ly),
        segments=segments,
        face_owner=_freeze(np.concatenate([owners] + b_owner).astype(np.int64)),
        face_neighbor=_freeze(np.concatenate([neighbors] + [np.full(o.size, -1) for o in b_owner]).astype(np.int64)),
        face_area=_freeze(np.concatenate([int_area] + b_area)),
        face_normal=_freeze(np.vstack([int_normal] + b_normal)),
        face_center=_freeze(np.vstack([int_center] + b_center)),
        face_owner_distance=_freeze(np.concatenate([int_half] + b_half)),
        face_neighbor_distance=_freeze(np.concatenate([int_half] + [np.zeros(o.size) for o in b_owner])),
        face_edge=_freeze(np.concatenate([np.full(n_interior, -1)] + b_edge).astype(np.int64)),
        face_segment=_freeze(segment_of_face),
        face_kind=_freeze(kinds.astype(np.int64)),
        face_pressure=_freeze(per_face([s.pressure for s in segments], 0.0)),
        face_inward_flux=_freeze(per_face([s.inward_flux for s in segments], 0.0)),
        face_inflow_saturation=_freeze(
            per_face([nan if s.saturation is None else s.saturation for s in segments], nan)
        ),
        face_inflow_concentration=_freeze(per_face([s.concentration for s in segments], 0.0)),
        n_interior=n_interior,
    )


def interior_faces(grid: StructuredGrid2D) -> list[tuple[int, int, int]]:
    """Внутренние грани (face, owner, neighbor) в фиксированном порядке."""
    return [
        (face, int(grid.face_owner[face]), int(grid.face_neighbor[face]))
        for face in range(grid.n_interior)
    ]


def _check_coverage(segments, nx: int, ny: int) -> dict[str, np.ndarray]:
    """Возвращает для каждой стороны индекс участка, покрывающего каждую грань."""
    lengths = {"west": ny, "east": ny, "south": nx, "north": nx}
    owner = {edge: np.full(length, -1, dtype=np.int64) for edge, length in lengths.items()}
    hits = {edge: np.zeros(length, dtype=np.int64) for edge, length in lengths.items()}

    for index, segment in enumerate(segments):
        if segment.edge not in lengths:
            raise ConfigurationError(f"Неизвестная сторона границы '{segment.edge}'", key_path=str(segment.edge))
        if segment.kind not in BOUNDARY_KINDS:
            raise ConfigurationError(
                f"Неизвестный тип условия '{segment.kind}' на стороне '{segment.edge}'", key_path=segment.edge
            )
        length = lengths[segment.edge]
        stop = length if segment.stop is None else segment.stop
        if not 0 <= segment.start < stop <= length:
            raise ConfigurationError(
                f"Диапазон [{segment.start}, {stop}) выходит за сторону '{segment.edge}' длиной {length}",
                key_path=segment.edge,
            )
        hits[segment.edge][segment.start:stop] += 1
        owner[segment.edge][segment.start:stop] = index

    for edge in EDGES:
        if np.any(hits[edge] > 1):
            raise ConfigurationError(f"Участки границы перекрываются на стороне '{edge}'", key_path=edge)
        if np.any(hits[edge] == 0):
            raise ConfigurationError(f"Сторона '{edge}' покрыта граничными условиями не полностью", key_path=edge)
    return owner

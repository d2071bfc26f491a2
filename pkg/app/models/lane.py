# ============================================
# MODELOS DE CARRIL - Líneas centrales por tramos
# ============================================
# Segmentos recta/arco parametrizados por longitud de arco y proyección vectorizada

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.models.mixins import LabeledMixin
from app.utils.units import wrap_angle

TWO_PI = 2.0 * np.pi


class LaneKind(str, enum.Enum):
    INBOUND = 'inbound'
    ENTRY = 'entry'
    RING = 'ring'
    EXIT = 'exit'


@dataclass(frozen=True)
class LineSegment:
    """Recta de `start` a `end`"""
    start: tuple
    end: tuple

    @property
    def length(self):
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    @property
    def tangent(self):
        d = np.subtract(self.end, self.start)
        return d / np.linalg.norm(d)

    def heading(self, s):
        t = self.tangent
        return np.full(np.shape(s), np.arctan2(t[1], t[0]))

    def curvature(self, s):
        return np.zeros(np.shape(s))

    def point(self, s):
        s = np.asarray(s, dtype=float)
        return np.asarray(self.start) + s[..., None] * self.tangent

    def project(self, points, extend_start=False, extend_end=False):
        """Retorna la longitud local del pie de la perpendicular (N,)"""
        s = (points - np.asarray(self.start)) @ self.tangent
        low = -np.inf if extend_start else 0.0
        high = np.inf if extend_end else self.length
        return np.clip(s, low, high)

    def rotated(self, angle):
        return LineSegment(_rotate(self.start, angle), _rotate(self.end, angle))


@dataclass(frozen=True)
class ArcSegment:
    """
    Arco de circunferencia

    sweep > 0 gira en sentido antihorario, sweep < 0 en sentido horario.
    """
    center: tuple
    radius: float
    start_angle: float
    sweep: float

    @property
    def length(self):
        return float(self.radius * abs(self.sweep))

    @property
    def direction(self):
        return 1.0 if self.sweep > 0 else -1.0

    @property
    def full_circle(self):
        return abs(abs(self.sweep) - TWO_PI) < 1e-12

    def _angle(self, s):
        return self.start_angle + self.direction * np.asarray(s, dtype=float) / self.radius

    def heading(self, s):
        return wrap_angle(self._angle(s) + self.direction * np.pi / 2)

    def curvature(self, s):
        return np.full(np.shape(s), self.direction / self.radius)

    def point(self, s):
        theta = self._angle(s)
        return np.asarray(self.center) + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def project(self, points, extend_start=False, extend_end=False):
        rel = points - np.asarray(self.center)
        theta = np.arctan2(rel[:, 1], rel[:, 0])
        d = np.mod(self.direction * (theta - self.start_angle), TWO_PI)
        if self.full_circle:
            return self.radius * d
        span = abs(self.sweep)
        outside = d > span
        # fuera del arco: extremo angularmente más cercano
        nearer_end = (d - span) < (TWO_PI - d)
        d = np.where(outside, np.where(nearer_end, span, 0.0), d)
        return self.radius * d

    def rotated(self, angle):
        return ArcSegment(_rotate(self.center, angle), self.radius,
                          wrap_angle(self.start_angle + angle), self.sweep)


def _rotate(point, angle):
    c, s = np.cos(angle), np.sin(angle)
    return (float(c * point[0] - s * point[1]), float(s * point[0] + c * point[1]))


@dataclass(frozen=True, repr=False)
class LaneRef(LabeledMixin):
    """
    Carril de referencia: línea central C¹ por tramos y sucesores

    Los carriles abiertos se prolongan en recta más allá de sus extremos para
    que la proyección sea siempre perpendicular.
    """
    id: str
    kind: LaneKind
    segments: tuple
    successors: tuple = ()
    port: Optional[str] = None
    main_lane: Optional[int] = None
    ring: Optional[str] = None
    closed: bool = False
    # estaciones notables (p. ej. 'merge', 'yield', 'branch', 'port')
    stations: dict = field(default_factory=dict)

    @property
    def length(self):
        return float(sum(seg.length for seg in self.segments))

    @property
    def offsets(self):
        return np.concatenate([[0.0], np.cumsum([seg.length for seg in self.segments])])

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        if self.closed:
            s = np.mod(s, self.length)
        offsets = self.offsets
        index = np.clip(np.searchsorted(offsets, s, side='right') - 1, 0, len(self.segments) - 1)
        return s, index, s - offsets[index]

    def _evaluate(self, s, attribute):
        s, index, local = self._locate(s)
        out = None
        for i, seg in enumerate(self.segments):
            mask = index == i
            if not np.any(mask):
                continue
            values = getattr(seg, attribute)(np.where(mask, local, 0.0))
            if out is None:
                out = np.zeros(np.shape(values))
            if values.ndim > mask.ndim:
                out[mask] = values[mask]
            else:
                out = np.where(mask, values, out)
        return out

    def point_at(self, s):
        return self._evaluate(np.atleast_1d(s), 'point')

    def heading_at(self, s):
        return self._evaluate(np.atleast_1d(s), 'heading')

    def curvature_at(self, s):
        return self._evaluate(np.atleast_1d(s), 'curvature')

    def pose_at(self, s):
        """(X, Y, heading) de la línea central en la estación s"""
        point = self.point_at(s)[0]
        return float(point[0]), float(point[1]), float(self.heading_at(s)[0])

    def project_many(self, points):
        """
        Proyección vectorizada de N puntos

        Args:
            points: (N, 2)

        Returns:
            tuple: (s, dy, heading) con dy positivo a la izquierda
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        best_dist = np.full(n, np.inf)
        best_s = np.zeros(n)
        best_dy = np.zeros(n)
        best_heading = np.zeros(n)
        offsets = self.offsets
        last = len(self.segments) - 1
        for i, seg in enumerate(self.segments):
            local = seg.project(points,
                                extend_start=(i == 0 and not self.closed),
                                extend_end=(i == last and not self.closed))
            foot = seg.point(local)
            heading = np.atleast_1d(seg.heading(local))
            rel = points - foot
            dy = np.cos(heading) * rel[:, 1] - np.sin(heading) * rel[:, 0]
            dist = np.hypot(rel[:, 0], rel[:, 1])
            better = dist < best_dist - 1e-12
            best_dist = np.where(better, dist, best_dist)
            best_s = np.where(better, offsets[i] + local, best_s)
            best_dy = np.where(better, dy, best_dy)
            best_heading = np.where(better, heading, best_heading)
        return best_s, best_dy, best_heading

    def project(self, X, Y, phi):
        """(dy, dphi, s) de una pose respecto a la línea central"""
        s, dy, heading = self.project_many(np.array([[X, Y]]))
        return float(dy[0]), wrap_angle(phi - heading[0]), float(s[0])

    def covers(self, s, margin=0.0):
        """True si la estación cae sobre el carril (con `margin` más allá de los extremos)"""
        if self.closed:
            return True
        return -margin <= s <= self.length + margin

    def forward_distance(self, s_from, s_to):
        """Distancia recorrida de s_from a s_to (módulo la longitud si es cerrado)"""
        if self.closed:
            return np.mod(np.asarray(s_to) - np.asarray(s_from), self.length)
        return np.asarray(s_to) - np.asarray(s_from)

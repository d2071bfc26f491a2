# ============================================
# GEOMETRY SERVICE - Red de carriles de la rotonda
# ============================================
# Responsabilidad: construir los carriles (entrada, conectores, anillos,
# salidas) y responder consultas geométricas sobre ellos

import logging
from functools import lru_cache

import numpy as np

from app.models.lane import ArcSegment, LaneKind, LaneRef, LineSegment
from app.models.roundabout import PORTS, RINGS
from app.utils.units import wrap_angle

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _rotate_xy(x, y, angle):
    c, s = np.cos(angle), np.sin(angle)
    return c * x - s * y, s * x + c * y


class RoundaboutMap:
    """
    Red de carriles construida a partir de RoundaboutGeometry

    Todos los carriles de un acceso son los del acceso A (oeste) rotados por
    port_angle − π. Identificadores:
        A_in_0, A_in_1            carriles de entrada (0 = interior)
        A_in_0_inner, ...         conectores carril de entrada → anillo
        RR_inner, RR_outer        anillos
        A_out_0, A_out_1          salidas desde el anillo exterior
    """

    def __init__(self, geometry):
        self.geometry = geometry
        self.lanes = {}
        self._build()
        logger.debug(f"🗺️ Red de carriles construida: {len(self.lanes)} carriles")

    # --------------------------------------------
    # Construcción
    # --------------------------------------------

    def _build(self):
        g = self.geometry
        for ring in RINGS:
            radius = g.ring_radius(ring)
            successors = ()
            if ring == 'outer':
                successors = tuple(f'{p}_out_{i}' for p in PORTS for i in (0, 1))
            self.lanes[f'RR_{ring}'] = LaneRef(
                id=f'RR_{ring}', kind=LaneKind.RING,
                segments=(ArcSegment((0.0, 0.0), radius, 0.0, TWO_PI),),
                successors=successors, ring=ring, closed=True,
            )
        for port in PORTS:
            rotation = wrap_angle(g.port_angle(port) - np.pi)
            for i, offset in enumerate(g.main_road_lane_offsets):
                self._build_inbound(port, i, offset, rotation)
                for ring in RINGS:
                    self._build_entry(port, i, offset, ring, rotation)
                self._build_exit(port, i, offset, rotation)

    def _build_inbound(self, port, i, offset, rotation):
        g = self.geometry
        x_yield = -np.sqrt(g.yield_radius ** 2 - offset ** 2)
        segment = LineSegment((-g.road_length, -offset), (x_yield, -offset)).rotated(rotation)
        lane_id = f'{port}_in_{i}'
        self.lanes[lane_id] = LaneRef(
            id=lane_id, kind=LaneKind.INBOUND, segments=(segment,),
            successors=tuple(f'{lane_id}_{ring}' for ring in RINGS),
            port=port, main_lane=i,
            stations={'yield': segment.length},
        )

    def _build_entry(self, port, i, offset, ring, rotation):
        g = self.geometry
        r, rf = g.ring_radius(ring), g.fillet_radius
        cx = -np.sqrt((r + rf) ** 2 - (offset + rf) ** 2)
        center = np.array([cx, -offset - rf])
        end_angle = np.arctan2(-center[1], -center[0])
        straight = LineSegment((-g.road_length, -offset), (cx, -offset))
        fillet = ArcSegment(tuple(center), rf, np.pi / 2, -(np.pi / 2 - end_angle))
        segments = tuple(seg.rotated(rotation) for seg in (straight, fillet))
        merge_point = center * r / (r + rf)
        merge_angle = wrap_angle(np.arctan2(merge_point[1], merge_point[0]) + rotation)
        lane_id = f'{port}_in_{i}_{ring}'
        lane = LaneRef(
            id=lane_id, kind=LaneKind.ENTRY, segments=segments,
            successors=(f'RR_{ring}',), port=port, main_lane=i, ring=ring,
            stations={'fillet': straight.length,
                      'merge': straight.length + fillet.length,
                      'merge_angle': merge_angle,
                      'ring_s': r * np.mod(merge_angle, TWO_PI)},
        )
        lane.stations['yield'] = self._inside_station(lane, g.yield_radius)
        # zona de conflicto por anillo cruzado: ángulo polar al entrar en su banda
        for crossed in self.conflict_rings(ring):
            band = g.ring_radius(crossed) + 0.5 * g.lane_width
            X, Y, _ = lane.pose_at(self._inside_station(lane, band))
            lane.stations[f'zone_{crossed}'] = self.polar_angle(X, Y)
        self.lanes[lane_id] = lane

    @staticmethod
    def _inside_station(lane, radius, samples=4001):
        """Primera estación del carril a menos de `radius` del centro"""
        s = np.linspace(0.0, lane.length, samples)
        points = lane.point_at(s)
        inside = np.hypot(points[:, 0], points[:, 1]) < radius
        return float(s[np.argmax(inside)]) if inside.any() else lane.length

    def _build_exit(self, port, i, offset, rotation):
        g = self.geometry
        R, rf = g.outer_lane_radius, g.fillet_radius
        cx = -np.sqrt((R + rf) ** 2 - (offset + rf) ** 2)
        center = np.array([cx, offset + rf])
        branch_angle = np.arctan2(center[1], center[0])
        prefix = ArcSegment((0.0, 0.0), R, branch_angle - np.pi / 2, np.pi / 2)
        start = np.arctan2(-center[1], -center[0])
        fillet = ArcSegment(tuple(center), rf, start, -(start + np.pi / 2))
        straight = LineSegment((cx, offset), (-g.road_length, offset))
        segments = tuple(seg.rotated(rotation) for seg in (prefix, fillet, straight))
        lane_id = f'{port}_out_{i}'
        self.lanes[lane_id] = LaneRef(
            id=lane_id, kind=LaneKind.EXIT, segments=segments,
            port=port, main_lane=i, ring='outer',
            stations={'branch': prefix.length,
                      'branch_angle': wrap_angle(branch_angle + rotation),
                      'port': prefix.length + fillet.length},
        )

    # --------------------------------------------
    # Consultas
    # --------------------------------------------

    def lane(self, lane_id):
        return self.lanes[lane_id]

    def ring(self, name):
        return self.lanes[f'RR_{name}']

    def inbound(self, port, i):
        return self.lanes[f'{port}_in_{i}']

    def entry(self, port, i, ring):
        return self.lanes[f'{port}_in_{i}_{ring}']

    def exit_lane(self, port, i):
        return self.lanes[f'{port}_out_{i}']

    @staticmethod
    def polar_angle(X, Y):
        return float(np.arctan2(Y, X))

    @staticmethod
    def ccw_arc(angle_from, angle_to):
        """Ángulo antihorario de angle_from a angle_to en [0, 2π)"""
        return float(np.mod(angle_to - angle_from, TWO_PI))

    @staticmethod
    def conflict_rings(ring):
        """Anillos que cruza un conector hacia `ring` (el interior atraviesa el exterior)"""
        return ('outer',) if ring == 'outer' else ('outer', 'inner')

    def branch_angle(self, port, exit_lane):
        return self.exit_lane(port, exit_lane).stations['branch_angle']

    def on_ring(self, lane, s):
        """True si la estación s del carril está sobre un anillo"""
        if lane.kind == LaneKind.RING:
            return True
        return lane.kind == LaneKind.EXIT and s < lane.stations['branch']

    def ring_of(self, lane, s):
        if lane.kind == LaneKind.RING:
            return lane.ring
        if lane.kind == LaneKind.EXIT and s < lane.stations['branch']:
            return 'outer'
        return None

    def candidate_lanes(self, lane_ids):
        """Carriles dados más sus sucesores, sin repetir y en orden"""
        ordered = []
        for lane_id in lane_ids:
            if lane_id is None:
                continue
            for candidate in (lane_id,) + self.lanes[lane_id].successors:
                if candidate not in ordered:
                    ordered.append(candidate)
        return ordered

    def behavior_target(self, lane_id, s, target_id, stage_entering, behavior, dy=0.0):
        """
        Carril objetivo tras aplicar un comportamiento discreto

        Una incorporación ya comprometida (objetivo en un conector) y un cambio
        de anillo en curso (a más de un cuarto de carril de la línea central
        del anillo objetivo) no admiten otra maniobra.

        Args:
            lane_id, s: carril localizado y estación
            target_id: carril comprometido actual
            stage_entering: True en la etapa de entrada
            behavior: Behavior
            dy: desplazamiento lateral actual respecto al carril localizado

        Returns:
            str o None si el comportamiento no tiene carril disponible
        """
        if behavior.is_keep:
            return target_id
        target = self.lanes[target_id]
        lane = self.lanes[lane_id]
        if stage_entering:
            if target.kind != LaneKind.INBOUND:
                return None
            ring = 'outer' if behavior.alpha > 0 else 'inner'
            return self.entry(target.port, target.main_lane, ring).id
        if target.kind == LaneKind.RING and abs(dy) > 0.25 * self.geometry.lane_width:
            return None
        ring = self.ring_of(lane, s)
        if ring is not None:
            wanted = 'inner' if behavior.beta < 0 else 'outer'
            return None if wanted == ring else self.ring(wanted).id
        if lane.kind == LaneKind.EXIT:
            wanted = 0 if behavior.beta < 0 else 1
            return None if wanted == lane.main_lane else self.exit_lane(lane.port, wanted).id
        return None

    def route_connector(self, target, route):
        """Conector de entrada que sigue la ruta desde un carril de entrada"""
        return self.entry(target.port, target.main_lane, route.entry_ring)

    def route_successor(self, lane):
        """Siguiente carril sin cambio de carril a lo largo de la ruta"""
        if lane.kind == LaneKind.ENTRY:
            return self.lanes[lane.successors[0]]
        return None

    def lane_end_point(self, lane):
        """(punto, heading) del final de un carril abierto"""
        X, Y, heading = lane.pose_at(lane.length)
        return np.array([X, Y]), heading

    @staticmethod
    def ring_point(radius, angle):
        return np.array([radius * np.cos(angle), radius * np.sin(angle)])


@lru_cache(maxsize=8)
def build_map(geometry):
    """RoundaboutMap cacheado por geometría"""
    return RoundaboutMap(geometry)

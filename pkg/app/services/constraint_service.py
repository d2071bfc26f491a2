# ============================================
# CONSTRAINT SERVICE - Conjunto de restricciones de decisión
# ============================================
# Responsabilidad: evaluar las nueve desigualdades (más fin de carril,
# compuertas y seguridad entre vehículos) en cada paso de predicción y
# reportar todas las violaciones

import logging

import numpy as np

from app.models.constraint import ConstraintReport, Violation
from app.utils.exceptions import InvalidInputError
from app.utils.units import wrap_angle

logger = logging.getLogger(__name__)

# Tolerancia relativa para valores exactamente en la cota (extremos de la rejilla)
BOUND_TOLERANCE = 1e-12

# Restricciones con signo (se violan con valor > cota) y su tolerancia absoluta
SIGNED_TOLERANCE = {'lane_end': 0.0, 'gate': 0.0, 'headway': 1e-6, 'separation': 1e-6}

# Niveles de relajación: restricciones de seguimiento ignoradas en cada nivel
RELAXATION_LEVELS = ((), ('dy', 'dphi'), ('ds', 'dy', 'dphi'))


class ConstraintService:
    """Servicio de verificación de restricciones"""

    @staticmethod
    def lane_enforcement(bounds, maneuver, current_dy, current_dphi):
        """
        Decide si dy/dphi se imponen a un candidato según el modo configurado

        'always' siempre; 'settled' solo para candidatos sin maniobra de un
        vehículo que ya cumple las cotas; 'off' nunca.
        """
        mode = bounds.lane_constraints
        if mode == 'always':
            return True
        if mode == 'off':
            return False
        return (not maneuver and abs(current_dy) <= bounds.dy_max
                and abs(current_dphi) <= bounds.dphi_max)

    @staticmethod
    def lane_errors(outputs, context):
        """
        Errores (dy, dphi, s_objetivo) respecto al carril de referencia

        Durante una maniobra se usa el carril de origen hasta el primer paso en
        que el objetivo queda más cerca; desde ahí, el objetivo.

        Args:
            outputs: (K, Np, 4)
            context: LaneContext

        Returns:
            tuple: tres arreglos (K, Np)
        """
        K, Np, _ = outputs.shape
        points = outputs[:, :, 2:4].reshape(-1, 2)
        s_tgt, dy_tgt, h_tgt = context.target.project_many(points)
        dy_tgt = dy_tgt.reshape(K, Np)
        dphi_tgt = wrap_angle(outputs[:, :, 1] - h_tgt.reshape(K, Np))
        s_tgt = s_tgt.reshape(K, Np)
        if not context.maneuver or context.source is None or context.source.id == context.target.id:
            return dy_tgt, np.atleast_2d(dphi_tgt), s_tgt

        _, dy_src, h_src = context.source.project_many(points)
        dy_src = dy_src.reshape(K, Np)
        dphi_src = wrap_angle(outputs[:, :, 1] - h_src.reshape(K, Np))
        crossed = np.maximum.accumulate(np.abs(dy_tgt) <= np.abs(dy_src), axis=1)
        dy = np.where(crossed, dy_tgt, dy_src)
        dphi = np.where(crossed, dphi_tgt, dphi_src)
        return dy, np.atleast_2d(dphi), s_tgt

    @staticmethod
    def station_error(outputs, context, dt):
        """Δs = longitud recorrida − v0·t, (K, Np)"""
        K, Np, _ = outputs.shape
        start = np.broadcast_to(np.asarray(context.start_position, dtype=float), (K, 1, 2))
        path = np.concatenate([start, outputs[:, :, 2:4]], axis=1)
        travelled = np.cumsum(np.linalg.norm(np.diff(path, axis=1), axis=2), axis=1)
        nominal = context.nominal_speed * dt * np.arange(1, Np + 1)
        return travelled - nominal

    # --------------------------------------------
    # Seguridad entre vehículos
    # --------------------------------------------

    @staticmethod
    def stopping_distance(vx, ax, jerk, decel):
        """
        Distancia hasta detenerse desde (vx, ax)

        La aceleración baja con pendiente `jerk` hasta −decel y se sostiene
        ahí; si ya frena más fuerte que decel, conserva su deceleración.
        """
        vx = np.maximum(np.asarray(vx, dtype=float), 0.0)
        ax = np.asarray(ax, dtype=float)

        def ramp(t):
            return vx * t + 0.5 * ax * t ** 2 - jerk * t ** 3 / 6.0

        t_ramp = np.maximum(ax + decel, 0.0) / jerk
        t_stop = (ax + np.sqrt(ax ** 2 + 2.0 * jerk * vx)) / jerk
        v_ramp = np.maximum(vx + ax * t_ramp - 0.5 * jerk * t_ramp ** 2, 0.0)
        hold = np.where(t_ramp > 0.0, decel, np.maximum(-ax, decel))
        return np.where(t_stop <= t_ramp, ramp(t_stop),
                        ramp(t_ramp) + np.square(v_ramp) / (2.0 * hold))

    @classmethod
    def headway_shortfall(cls, ego_v, ego_ax, ego_xy, lv_v, lv_ax, lv_xy, safety):
        """
        Distancia que falta para poder frenar detrás del LV

        base + vx·dt + max(0, frenado_ego − frenado_LV) − distancia entre centros
        """
        ego_stop = cls.stopping_distance(ego_v, ego_ax, safety.jerk, safety.decel)
        lv_stop = cls.stopping_distance(lv_v, lv_ax, safety.jerk, safety.decel)
        distance = np.linalg.norm(np.asarray(ego_xy) - np.asarray(lv_xy), axis=-1)
        return (safety.headway_base + np.maximum(ego_v, 0.0) * safety.dt
                + np.maximum(ego_stop - lv_stop, 0.0) - distance)

    @classmethod
    def safety_checks(cls, outputs, controls, safety):
        """
        Headway frente al LV y separación frente a vehículos no traseros

        Ambos valores se miden contra la holgura faltante actual: un candidato
        que no la empeora sigue siendo factible.

        Returns:
            list: [(nombre, valores (K, Np), 0.0)]
        """
        checks = []
        if safety.leader is not None:
            shortfall = cls.headway_shortfall(
                outputs[:, :, 0], controls[:, :, 0], outputs[:, :, 2:4],
                safety.leader[None, :, 0], safety.leader_ax, safety.leader[None, :, 2:4], safety)
            checks.append(('headway', shortfall - max(safety.headway_now, 0.0), 0.0))
        if safety.others:
            worst = None
            for other, base, now in zip(safety.others, safety.separation_base,
                                        safety.separation_now):
                distance = np.linalg.norm(outputs[:, :, 2:4] - other[None, :, 2:4], axis=-1)
                value = base - distance - max(now, 0.0)
                worst = value if worst is None else np.maximum(worst, value)
            checks.append(('separation', worst, 0.0))
        return checks

    # --------------------------------------------
    # Conjunto completo
    # --------------------------------------------

    @classmethod
    def evaluate(cls, outputs, controls, deltas, bounds, context, params, dt, lane=None,
                 safety=None):
        """
        Valores de cada restricción por candidato y paso

        Args:
            outputs: (K, Np, 4); controls: (K, Np, 2); deltas: (K, Nc, 2)
            lane: (dy, dphi, s) precalculados o None
            safety: SafetyContext o None

        Returns:
            list: [(nombre, valores (K, n), cota)] en orden fijo
        """
        outputs = np.asarray(outputs, dtype=float)
        controls = np.asarray(controls, dtype=float)
        deltas = np.asarray(deltas, dtype=float)
        if outputs.ndim != 3 or controls.shape[:2] != outputs.shape[:2] or deltas.ndim != 3:
            raise InvalidInputError('Trayectoria y controles con longitudes inconsistentes',
                                    outputs=outputs.shape, controls=controls.shape)
        if lane is None:
            lane = cls.lane_errors(outputs, context)
        dy, dphi, s_target = lane
        ay = np.square(outputs[:, :, 0]) * np.tan(controls[:, :, 1]) / params.wheelbase

        checks = []
        if bounds.ds_tracking:
            checks.append(('ds', cls.station_error(outputs, context, dt), bounds.ds_max))
        if context.enforce_lane:
            checks.append(('dy', dy, bounds.dy_max))
            checks.append(('dphi', dphi, bounds.dphi_max))
        checks.extend([
            ('ax', controls[:, :, 0], bounds.ax_max),
            ('ay', ay, bounds.ay_max),
            ('vx', outputs[:, :, 0], bounds.vx_max),
            ('dax', deltas[:, :, 0], bounds.dax_max),
            ('ddelta', deltas[:, :, 1], bounds.ddelta_max),
            ('delta', controls[:, :, 1], bounds.delta_max),
        ])
        if bounds.lane_end and context.stop_station is not None:
            reach = s_target
            if context.braking is not None:
                jerk, decel = context.braking
                reach = s_target + cls.stopping_distance(outputs[:, :, 0], controls[:, :, 0],
                                                         jerk, decel)
            checks.append(('lane_end', reach - context.stop_station, 0.0))
        if context.blocked:
            checks.append(('gate', np.ones((outputs.shape[0], 1)), 0.0))
        if safety is not None:
            checks.extend(cls.safety_checks(outputs, controls, safety))
        return checks

    @staticmethod
    def _violated(name, values, bound):
        if name in SIGNED_TOLERANCE:
            return values > bound + SIGNED_TOLERANCE[name]
        return np.abs(values) > bound * (1.0 + BOUND_TOLERANCE)

    @classmethod
    def feasible_mask(cls, checks, skip=()):
        """Máscara (K,) de candidatos factibles ignorando las restricciones `skip`"""
        mask = None
        for name, values, bound in checks:
            if name in skip:
                continue
            ok = ~np.any(cls._violated(name, values, bound), axis=1)
            mask = ok if mask is None else mask & ok
        return mask

    @classmethod
    def relaxation_masks(cls, checks):
        """Máscaras por nivel de relajación, forma (niveles, K)"""
        return np.stack([cls.feasible_mask(checks, skip) for skip in RELAXATION_LEVELS])

    @classmethod
    def check(cls, outputs, controls, deltas, bounds, context, params, dt, safety=None,
              skip=()):
        """
        Verifica una trayectoria predicha contra el conjunto de restricciones

        Args:
            outputs: (Np, 4) salidas predichas [vx, φ, X, Y]
            controls: (Np, 2) controles aplicados en cada paso
            deltas: (Nc, 2) incrementos de control
            bounds: ConstraintBounds
            context: LaneContext
            params: VehicleParameters
            dt: periodo de muestreo (s)
            safety: SafetyContext o None
            skip: restricciones relajadas que no se reportan

        Returns:
            ConstraintReport: lista completa (nombre, valor, cota, paso)
        """
        checks = cls.evaluate(np.asarray(outputs)[None], np.asarray(controls)[None],
                              np.asarray(deltas)[None], bounds, context, params, dt,
                              safety=safety)
        violations = []
        for name, values, bound in checks:
            if name in skip:
                continue
            hits = cls._violated(name, values[0], bound)
            for index in np.flatnonzero(hits):
                violations.append(Violation(name, float(values[0, index]), float(bound), int(index) + 1))
        return ConstraintReport(tuple(violations))
